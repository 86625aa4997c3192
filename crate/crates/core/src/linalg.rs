//! Dense complex linear algebra shared by every module.
//!
//! Everything is built on `nalgebra` dynamic matrices. The one piece that
//! `nalgebra` does not provide is reordering of a complex Schur form; it is
//! implemented here with adjacent Givens swaps (the same scheme as LAPACK's
//! `ztrexc`).

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };
pub const I: C64 = C64 { re: 0.0, im: 1.0 };

#[inline]
pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[inline]
pub fn real(x: f64) -> C64 {
    C64::new(x, 0.0)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn dagger(m: &CMatrix) -> CMatrix {
    m.adjoint()
}

/// Frobenius norm.
pub fn frob(m: &CMatrix) -> f64 {
    m.norm()
}

/// Largest singular value.
pub fn op_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .singular_values()
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `‖U*U − 1‖_F / ‖1‖_F`.
pub fn unitary_deviation(u: &CMatrix) -> f64 {
    let n = u.nrows();
    if n == 0 || u.ncols() != n {
        return f64::INFINITY;
    }
    let g = u.adjoint() * u - identity(n);
    frob(&g) / (n as f64).sqrt()
}

/// `‖H − H*‖_F / ‖H‖_F` (zero for the zero matrix).
pub fn hermitian_deviation(h: &CMatrix) -> f64 {
    if h.nrows() != h.ncols() {
        return f64::INFINITY;
    }
    let scale = frob(h);
    if scale == 0.0 {
        return 0.0;
    }
    frob(&(h - h.adjoint())) / scale
}

pub fn ensure_square(m: &CMatrix, n: usize) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: if m.nrows() != n { m.nrows() } else { m.ncols() },
        });
    }
    Ok(())
}

pub fn ensure_unitary(u: &CMatrix, tol: f64) -> Result<()> {
    let deviation = unitary_deviation(u);
    if deviation > tol {
        return Err(Error::NotUnitary { deviation });
    }
    Ok(())
}

pub fn ensure_hermitian(h: &CMatrix, tol: f64) -> Result<()> {
    let deviation = hermitian_deviation(h);
    if deviation > tol {
        return Err(Error::NotHermitian { deviation });
    }
    Ok(())
}

pub fn det(m: &CMatrix) -> C64 {
    match m.nrows() {
        0 => ONE,
        1 => m[(0, 0)],
        2 => m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)],
        _ => m.clone().lu().determinant(),
    }
}

/// Eigen-decomposition of a Hermitian matrix with eigenvalues sorted ascending
/// and eigenvectors as the matching columns.
pub fn eigh(h: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = h.nrows();
    // symmetrize so round-off in the input cannot leak into the eigenvalues
    let sym = (h + h.adjoint()) * real(0.5);
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigh(h: &CMatrix) -> f64 {
    let sym = (h + h.adjoint()) * real(0.5);
    sym.symmetric_eigenvalues()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Column-major vectorization, `vec(X)[i + n j] = X[i, j]`.
pub fn vectorize(x: &CMatrix) -> CVector {
    CVector::from_column_slice(x.as_slice())
}

pub fn unvectorize(v: &CVector, n: usize) -> CMatrix {
    CMatrix::from_column_slice(n, n, v.as_slice())
}

/// Matrix of `X ↦ A X B` acting on column-major vectorized operators,
/// i.e. `Bᵀ ⊗ A`.
pub fn sandwich_matrix(a: &CMatrix, b: &CMatrix) -> CMatrix {
    b.transpose().kronecker(a)
}

/// Complex Schur decomposition `M = Q T Q*` with `T` upper triangular.
pub fn schur(m: &CMatrix) -> Result<(CMatrix, CMatrix)> {
    let n = m.nrows();
    if n == 0 {
        return Ok((CMatrix::zeros(0, 0), CMatrix::zeros(0, 0)));
    }
    let decomposition = nalgebra::Schur::try_new(m.clone(), f64::EPSILON, 100 * n * n)
        .ok_or_else(|| Error::Numerical("Schur iteration did not converge".into()))?;
    let (q, mut t) = decomposition.unpack();
    for j in 0..n {
        for i in (j + 1)..n {
            t[(i, j)] = ZERO;
        }
    }
    Ok((q, t))
}

/// Swap the diagonal entries `k` and `k+1` of an upper-triangular Schur
/// factor, updating the unitary factor so that `Q T Q*` is unchanged.
fn swap_adjacent(q: &mut CMatrix, t: &mut CMatrix, k: usize) {
    let n = t.nrows();
    let a = t[(k, k)];
    let b = t[(k, k + 1)];
    let c = t[(k + 1, k + 1)];
    // eigenvector of the 2x2 block for eigenvalue c
    let x1 = b;
    let x2 = c - a;
    let norm = (x1.norm_sqr() + x2.norm_sqr()).sqrt();
    if norm == 0.0 {
        return;
    }
    let (g11, g21) = (x1 / norm, x2 / norm);
    let (g12, g22) = (-x2.conj() / norm, x1.conj() / norm);
    // rows k, k+1 <- G* rows
    for j in 0..n {
        let r0 = t[(k, j)];
        let r1 = t[(k + 1, j)];
        t[(k, j)] = g11.conj() * r0 + g21.conj() * r1;
        t[(k + 1, j)] = g12.conj() * r0 + g22.conj() * r1;
    }
    // columns k, k+1 <- columns G
    for i in 0..n {
        let c0 = t[(i, k)];
        let c1 = t[(i, k + 1)];
        t[(i, k)] = c0 * g11 + c1 * g21;
        t[(i, k + 1)] = c0 * g12 + c1 * g22;
        let q0 = q[(i, k)];
        let q1 = q[(i, k + 1)];
        q[(i, k)] = q0 * g11 + q1 * g21;
        q[(i, k + 1)] = q0 * g12 + q1 * g22;
    }
    t[(k + 1, k)] = ZERO;
    t[(k, k)] = c;
    t[(k + 1, k + 1)] = a;
}

/// Reorder a complex Schur form so that every diagonal entry accepted by
/// `select` comes first, preserving relative order inside both groups.
/// Returns the number of selected entries.
pub fn reorder_schur<F>(q: &mut CMatrix, t: &mut CMatrix, select: F) -> usize
where
    F: Fn(C64) -> bool,
{
    let n = t.nrows();
    let mut flags: Vec<bool> = (0..n).map(|i| select(t[(i, i)])).collect();
    let mut placed = 0;
    for i in 0..n {
        if !flags[i] {
            continue;
        }
        let mut pos = i;
        while pos > placed {
            swap_adjacent(q, t, pos - 1);
            flags.swap(pos - 1, pos);
            pos -= 1;
        }
        placed += 1;
    }
    placed
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc as usize
}

/// Lexicographic `k`-subsets of `0..n`.
pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity(binomial(n, k));
    if k > n {
        return out;
    }
    let mut cur: Vec<usize> = (0..k).collect();
    loop {
        out.push(cur.clone());
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] < n - k + i {
                cur[i] += 1;
                for j in (i + 1)..k {
                    cur[j] = cur[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Submatrix on the given rows and columns.
pub fn submatrix(m: &CMatrix, rows: &[usize], cols: &[usize]) -> CMatrix {
    CMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

/// Principal branch phase in `(-π, π]` of `z`.
pub fn phase(z: C64) -> f64 {
    z.im.atan2(z.re)
}

/// Distance from `x` to the nearest point of `2πℤ`.
pub fn dist_to_2pi_z(x: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let r = x.rem_euclid(tau);
    r.min(tau - r)
}
