#![allow(dead_code)]

use fqw_core::genericity::{haar_unitary, sample_rng};
use fqw_core::linalg::{c64, eigh, real, CMatrix, CVector};
use rand::Rng;

pub fn unitary(d: usize, seed: u64) -> CMatrix {
    haar_unitary(d, &mut sample_rng(seed, 1000))
}

pub fn matrix(rows: usize, cols: usize, seed: u64) -> CMatrix {
    let mut rng = sample_rng(seed, 2000);
    CMatrix::from_fn(rows, cols, |_, _| c64(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

pub fn vector(n: usize, seed: u64) -> CVector {
    matrix(n, 1, seed).column(0).into_owned()
}

pub fn hermitian(n: usize, seed: u64) -> CMatrix {
    let a = matrix(n, n, seed);
    (&a + a.adjoint()) * real(0.5)
}

pub fn density(n: usize, seed: u64) -> CMatrix {
    let a = matrix(n, n, seed);
    let p = &a * a.adjoint();
    let tr = p.trace();
    p / tr
}

/// `exp(iH)` through the spectral theorem.
pub fn exp_i(h: &CMatrix) -> CMatrix {
    let (w, u) = eigh(h);
    let d = CVector::from_iterator(w.len(), w.iter().map(|x| c64(x.cos(), x.sin())));
    &u * CMatrix::from_diagonal(&d) * u.adjoint()
}

pub fn diag(values: &[f64]) -> CMatrix {
    CMatrix::from_diagonal(&CVector::from_iterator(values.len(), values.iter().map(|&x| real(x))))
}
