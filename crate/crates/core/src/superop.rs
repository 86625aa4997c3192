//! Linear maps on `B(F₋)` stored as `n² × n²` matrices acting on
//! column-major vectorizations, so that `X ↦ AXB` has matrix `Bᵀ ⊗ A` and the
//! Hilbert-Schmidt adjoint is the conjugate transpose.

use std::ops::{Add, Mul, Sub};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, real, CMatrix, ONE};

#[derive(Clone, Debug, PartialEq)]
pub struct Superoperator {
    n: usize,
    matrix: CMatrix,
}

impl Superoperator {
    pub fn from_matrix(n: usize, matrix: CMatrix) -> Result<Self> {
        linalg::ensure_square(&matrix, n * n)?;
        Ok(Self { n, matrix })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n,
            matrix: linalg::identity(n * n),
        }
    }

    pub fn zero(n: usize) -> Self {
        Self {
            n,
            matrix: CMatrix::zeros(n * n, n * n),
        }
    }

    /// `X ↦ A X B`.
    pub fn sandwich(a: &CMatrix, b: &CMatrix) -> Self {
        Self {
            n: a.nrows(),
            matrix: linalg::sandwich_matrix(a, b),
        }
    }

    /// Matrix of a map given by its action, sampled on matrix units.
    pub fn from_fn<F>(n: usize, f: F) -> Self
    where
        F: Fn(&CMatrix) -> CMatrix,
    {
        let mut matrix = CMatrix::zeros(n * n, n * n);
        let mut e = CMatrix::zeros(n, n);
        for b in 0..n {
            for a in 0..n {
                e[(a, b)] = ONE;
                let image = f(&e);
                matrix.set_column(a + b * n, &linalg::vectorize(&image));
                e[(a, b)] = linalg::ZERO;
            }
        }
        Self { n, matrix }
    }

    /// Fock-space dimension `n`; the map acts on `n × n` matrices.
    pub fn fock_dim(&self) -> usize {
        self.n
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn apply(&self, x: &CMatrix) -> CMatrix {
        linalg::unvectorize(&(&self.matrix * linalg::vectorize(x)), self.n)
    }

    /// Adjoint with respect to `⟨X, Y⟩ = tr(X* Y)`.
    pub fn adjoint(&self) -> Self {
        Self {
            n: self.n,
            matrix: self.matrix.adjoint(),
        }
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            n: self.n,
            matrix: &self.matrix * &other.matrix,
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            n: self.n,
            matrix: &self.matrix * real(c),
        }
    }

    pub fn pow(&self, k: usize) -> Self {
        let mut out = Self::identity(self.n);
        let mut base = self.clone();
        let mut k = k;
        while k > 0 {
            if k & 1 == 1 {
                out = out.compose(&base);
            }
            k >>= 1;
            if k > 0 {
                base = base.compose(&base);
            }
        }
        out
    }

    /// Operator norm on `B(F₋)` with the Hilbert-Schmidt norm.
    pub fn norm(&self) -> f64 {
        linalg::op_norm(&self.matrix)
    }

    pub fn distance(&self, other: &Self) -> f64 {
        linalg::frob(&(&self.matrix - &other.matrix))
    }

    /// Choi matrix `J[(a,i),(b,j)] = F(E_ab)[i,j]`.
    pub fn choi(&self) -> CMatrix {
        let n = self.n;
        CMatrix::from_fn(n * n, n * n, |r, c| {
            let (a, i) = (r / n, r % n);
            let (b, j) = (c / n, c % n);
            self.matrix[(i + j * n, a + b * n)]
        })
    }
}

impl Add for &Superoperator {
    type Output = Superoperator;
    fn add(self, rhs: &Superoperator) -> Superoperator {
        Superoperator {
            n: self.n,
            matrix: &self.matrix + &rhs.matrix,
        }
    }
}

impl Sub for &Superoperator {
    type Output = Superoperator;
    fn sub(self, rhs: &Superoperator) -> Superoperator {
        Superoperator {
            n: self.n,
            matrix: &self.matrix - &rhs.matrix,
        }
    }
}

impl Mul for &Superoperator {
    type Output = Superoperator;
    fn mul(self, rhs: &Superoperator) -> Superoperator {
        self.compose(rhs)
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct CptpReport {
    /// `‖F(𝟙) − 𝟙‖` in operator norm.
    pub unital_error: f64,
    /// `max_{a,b} |tr F*(E_ab) − tr E_ab|`.
    pub trace_error: f64,
    pub choi_min_eig: f64,
}

impl CptpReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.unital_error <= tol && self.trace_error <= tol && self.choi_min_eig >= -tol
    }
}

pub fn cptp_verify(map: &Superoperator) -> Result<CptpReport> {
    let n = map.fock_dim();
    let id = linalg::identity(n);
    let unital_error = linalg::op_norm(&(map.apply(&id) - &id));
    // tr F*(E_ab) = ⟨F(𝟙), E_ab⟩, i.e. the conjugate of F(𝟙)[a,b]
    let dual = map.adjoint();
    let mut trace_error = 0.0f64;
    for b in 0..n {
        for a in 0..n {
            let col = dual.matrix.column(a + b * n);
            let tr: linalg::C64 = (0..n).map(|i| col[i + i * n]).sum();
            let expected = if a == b { ONE } else { linalg::ZERO };
            trace_error = trace_error.max((tr - expected).norm());
        }
    }
    let choi = map.choi();
    let herm_dev = linalg::frob(&(&choi - choi.adjoint()));
    if !herm_dev.is_finite() {
        return Err(Error::Numerical("non-finite Choi matrix".into()));
    }
    let sym = (&choi + choi.adjoint()) * real(0.5);
    let choi_min_eig = linalg::min_eigh(&sym) - herm_dev;
    Ok(CptpReport {
        unital_error,
        trace_error,
        choi_min_eig,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c64;

    fn sample(n: usize, seed: u64) -> CMatrix {
        CMatrix::from_fn(n, n, |i, j| {
            let k = (i * 31 + j * 17) as u64 + seed;
            c64(((k * 7919) % 97) as f64 / 97.0 - 0.5, ((k * 104729) % 89) as f64 / 89.0 - 0.5)
        })
    }

    #[test]
    fn sandwich_and_from_fn_agree() {
        let (a, b, x) = (sample(3, 1), sample(3, 2), sample(3, 3));
        let s = Superoperator::sandwich(&a, &b);
        let f = Superoperator::from_fn(3, |y| &a * y * &b);
        assert!(s.distance(&f) < 1e-13);
        assert!(linalg::frob(&(s.apply(&x) - &a * &x * &b)) < 1e-13);
    }

    #[test]
    fn adjoint_is_hilbert_schmidt_adjoint() {
        let s = Superoperator::sandwich(&sample(3, 4), &sample(3, 5));
        let (x, y) = (sample(3, 6), sample(3, 7));
        let lhs = (x.adjoint() * s.apply(&y)).trace();
        let rhs = (s.adjoint().apply(&x).adjoint() * &y).trace();
        assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn pow_matches_repeated_composition() {
        let s = Superoperator::sandwich(&sample(2, 8), &sample(2, 9)).scale(0.5);
        let direct = s.compose(&s).compose(&s).compose(&s).compose(&s);
        assert!(s.pow(5).distance(&direct) < 1e-12);
        assert_eq!(s.pow(0), Superoperator::identity(2));
    }

    #[test]
    fn choi_of_identity_and_transpose() {
        let id = Superoperator::identity(2);
        let r = cptp_verify(&id).unwrap();
        assert!(r.passes(1e-12));
        assert!((r.choi_min_eig - 0.0).abs() < 1e-12);
        // transpose is positive and trace preserving but not completely positive
        let transpose = Superoperator::from_fn(2, |x| x.transpose());
        let r = cptp_verify(&transpose).unwrap();
        assert!(r.unital_error < 1e-14 && r.trace_error < 1e-14);
        assert!((r.choi_min_eig + 1.0).abs() < 1e-12);
    }
}
