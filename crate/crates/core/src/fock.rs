//! Antisymmetric Fock space over a `d`-dimensional one-particle space.
//!
//! Basis vectors are wedge products `f_{i1} ∧ … ∧ f_{in}` with
//! `i1 < … < in`, stored as bitmasks. The ordering is sector-major
//! (`n = 0, 1, …, d`) and lexicographic inside a sector, so every matrix built
//! here is reproducible bit for bit.

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c64, CMatrix, CVector, C64, ONE, ZERO};

/// Largest supported number of one-particle modes.
pub const MAX_SITES: usize = 12;

/// Input tolerance (relative Frobenius) for unitarity and Hermiticity checks.
pub const INPUT_TOL: f64 = 1e-10;

/// Operators on the Fock space are dense `2^d × 2^d` matrices in the
/// [`FockBasis`] ordering.
pub type FermionOperator = CMatrix;

/// Strictly increasing tuple of 1-based site labels.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MultiIndex(Vec<usize>);

impl MultiIndex {
    pub fn new(entries: Vec<usize>) -> Result<Self> {
        if entries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "multi-index {entries:?} is not strictly increasing"
            )));
        }
        if entries.first().is_some_and(|&e| e == 0) {
            return Err(Error::Config("multi-index entries are 1-based".into()));
        }
        Ok(Self(entries))
    }

    pub fn vacuum() -> Self {
        Self(Vec::new())
    }

    pub fn entries(&self) -> &[usize] {
        &self.0
    }

    /// Particle number.
    pub fn sector(&self) -> usize {
        self.0.len()
    }

    fn mask(&self) -> u32 {
        self.0.iter().fold(0, |m, &e| m | 1 << (e - 1))
    }

    fn from_mask(mask: u32) -> Self {
        Self((0..32).filter(|b| mask >> b & 1 == 1).map(|b| b + 1).collect())
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "Ω");
        }
        let parts: Vec<String> = self.0.iter().map(|e| e.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

#[derive(Clone, Debug)]
pub struct FockBasis {
    d: usize,
    masks: Vec<u32>,
    index_of_mask: Vec<usize>,
    sector_offsets: Vec<usize>,
}

impl FockBasis {
    pub fn new(d: usize) -> Result<Self> {
        if !(1..=MAX_SITES).contains(&d) {
            return Err(Error::Config(format!(
                "number of sites d = {d} outside 1..={MAX_SITES}"
            )));
        }
        let dim = 1usize << d;
        let mut masks = Vec::with_capacity(dim);
        let mut sector_offsets = Vec::with_capacity(d + 2);
        for n in 0..=d {
            sector_offsets.push(masks.len());
            for combo in linalg::combinations(d, n) {
                masks.push(combo.iter().fold(0u32, |m, &b| m | 1 << b));
            }
        }
        sector_offsets.push(masks.len());
        let mut index_of_mask = vec![usize::MAX; dim];
        for (i, &m) in masks.iter().enumerate() {
            index_of_mask[m as usize] = i;
        }
        Ok(Self {
            d,
            masks,
            index_of_mask,
            sector_offsets,
        })
    }

    pub fn sites(&self) -> usize {
        self.d
    }

    pub fn dim(&self) -> usize {
        self.masks.len()
    }

    pub fn sector_range(&self, n: usize) -> Range<usize> {
        self.sector_offsets[n]..self.sector_offsets[n + 1]
    }

    pub fn sector_dim(&self, n: usize) -> usize {
        self.sector_range(n).len()
    }

    pub fn sector_of(&self, index: usize) -> usize {
        self.masks[index].count_ones() as usize
    }

    pub fn multi_index(&self, index: usize) -> MultiIndex {
        MultiIndex::from_mask(self.masks[index])
    }

    pub fn index_of(&self, idx: &MultiIndex) -> Option<usize> {
        if idx.entries().iter().any(|&e| e > self.d) {
            return None;
        }
        Some(self.index_of_mask[idx.mask() as usize])
    }

    /// 0-based site labels of the basis vector `index`, ascending.
    pub fn occupied(&self, index: usize) -> Vec<usize> {
        let m = self.masks[index];
        (0..self.d).filter(|b| m >> b & 1 == 1).collect()
    }

    /// Index of the top vector `f_1 ∧ … ∧ f_d`.
    pub fn top(&self) -> usize {
        self.dim() - 1
    }

    fn check_site(&self, j: usize) -> Result<usize> {
        if j == 0 || j > self.d {
            return Err(Error::InvalidSite { site: j, d: self.d });
        }
        Ok(j - 1)
    }

    /// `a*_j` for the 1-based site `j`.
    pub fn creation_op(&self, j: usize) -> Result<FermionOperator> {
        let b = self.check_site(j)?;
        let dim = self.dim();
        let mut m = CMatrix::zeros(dim, dim);
        for (col, &mask) in self.masks.iter().enumerate() {
            if mask >> b & 1 == 1 {
                continue;
            }
            // moving f_j past the factors with smaller labels
            let below = (mask & ((1u32 << b) - 1)).count_ones();
            let sign = if below % 2 == 0 { 1.0 } else { -1.0 };
            let row = self.index_of_mask[(mask | 1 << b) as usize];
            m[(row, col)] = c64(sign, 0.0);
        }
        Ok(m)
    }

    pub fn annihilation_op(&self, j: usize) -> Result<FermionOperator> {
        Ok(self.creation_op(j)?.adjoint())
    }

    pub fn number_op(&self, j: usize) -> Result<FermionOperator> {
        let b = self.check_site(j)?;
        Ok(CMatrix::from_diagonal(&CVector::from_iterator(
            self.dim(),
            self.masks.iter().map(|m| c64((m >> b & 1) as f64, 0.0)),
        )))
    }

    /// Total particle number `N`.
    pub fn particle_number(&self) -> FermionOperator {
        CMatrix::from_diagonal(&CVector::from_iterator(
            self.dim(),
            self.masks.iter().map(|m| c64(m.count_ones() as f64, 0.0)),
        ))
    }

    /// Orthogonal projector onto the `n`-particle sector.
    pub fn sector_projector(&self, n: usize) -> FermionOperator {
        let range = self.sector_range(n);
        CMatrix::from_diagonal(&CVector::from_iterator(
            self.dim(),
            (0..self.dim()).map(|i| if range.contains(&i) { ONE } else { ZERO }),
        ))
    }

    /// `a*(φ) = Σ_j φ_j a*_j`, with `φ` given in the one-particle basis.
    pub fn creation_of(&self, phi: &CVector) -> Result<FermionOperator> {
        if phi.len() != self.d {
            return Err(Error::LengthMismatch {
                left: phi.len(),
                right: self.d,
            });
        }
        let dim = self.dim();
        let mut m = CMatrix::zeros(dim, dim);
        for j in 0..self.d {
            if phi[j] != ZERO {
                m += self.creation_op(j + 1)? * phi[j];
            }
        }
        Ok(m)
    }

    /// `a(φ) = a*(φ)*`.
    pub fn annihilation_of(&self, phi: &CVector) -> Result<FermionOperator> {
        Ok(self.creation_of(phi)?.adjoint())
    }

    /// `Γ₋(U)`, built sector by sector from `n × n` minors of `U`.
    pub fn second_quantize_unitary(&self, u: &CMatrix) -> Result<FermionOperator> {
        linalg::ensure_square(u, self.d)?;
        linalg::ensure_unitary(u, INPUT_TOL)?;
        Ok(self.second_quantize_contraction(u))
    }

    /// Minor construction of `Γ₋(A)` without any unitarity check.
    pub(crate) fn second_quantize_contraction(&self, a: &CMatrix) -> FermionOperator {
        let dim = self.dim();
        let mut out = CMatrix::zeros(dim, dim);
        out[(0, 0)] = ONE;
        for n in 1..=self.d {
            let range = self.sector_range(n);
            let sites: Vec<Vec<usize>> = range.clone().map(|i| self.occupied(i)).collect();
            for (r, rows) in sites.iter().enumerate() {
                for (c, cols) in sites.iter().enumerate() {
                    out[(range.start + r, range.start + c)] =
                        linalg::det(&linalg::submatrix(a, rows, cols));
                }
            }
        }
        out
    }

    /// `dΓ₋(H) = Σ_ij H_ij a*_i a_j`.
    pub fn second_quantize_generator(&self, h: &CMatrix) -> Result<FermionOperator> {
        linalg::ensure_square(h, self.d)?;
        linalg::ensure_hermitian(h, INPUT_TOL)?;
        Ok(self.quadratic_form(h))
    }

    pub(crate) fn quadratic_form(&self, h: &CMatrix) -> FermionOperator {
        let dim = self.dim();
        let mut out = CMatrix::zeros(dim, dim);
        for (col, &mask) in self.masks.iter().enumerate() {
            for j in 0..self.d {
                if mask >> j & 1 == 0 {
                    continue;
                }
                let below_j = (mask & ((1u32 << j) - 1)).count_ones();
                let removed = mask & !(1 << j);
                for i in 0..self.d {
                    let hij = h[(i, j)];
                    if hij == ZERO || removed >> i & 1 == 1 {
                        continue;
                    }
                    let below_i = (removed & ((1u32 << i) - 1)).count_ones();
                    let sign = if (below_i + below_j) % 2 == 0 { 1.0 } else { -1.0 };
                    let row = self.index_of_mask[(removed | 1 << i) as usize];
                    out[(row, col)] += hij * sign;
                }
            }
        }
        out
    }

    /// Fock-space components of `u_1 ∧ … ∧ u_n`, from the minors of the
    /// `d × n` matrix whose columns are the `u_k`.
    pub fn wedge_vector(&self, columns: &CMatrix) -> Result<CVector> {
        if columns.nrows() != self.d {
            return Err(Error::LengthMismatch {
                left: columns.nrows(),
                right: self.d,
            });
        }
        let n = columns.ncols();
        if n > self.d {
            return Err(Error::Config(format!(
                "cannot wedge {n} vectors in dimension {}",
                self.d
            )));
        }
        let mut v = CVector::zeros(self.dim());
        let all: Vec<usize> = (0..n).collect();
        for i in self.sector_range(n) {
            v[i] = linalg::det(&linalg::submatrix(columns, &self.occupied(i), &all));
        }
        Ok(v)
    }
}

/// `⟨u₁∧⋯∧u_n | v₁∧⋯∧v_n⟩ = det(⟨u_k, v_l⟩)`.
pub fn wedge_gram(u: &[CVector], v: &[CVector]) -> Result<C64> {
    if u.len() != v.len() {
        return Err(Error::LengthMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    if u.is_empty() {
        return Err(Error::Config("wedge_gram needs at least one vector".into()));
    }
    for w in u.iter().chain(v) {
        if w.len() != u[0].len() {
            return Err(Error::LengthMismatch {
                left: w.len(),
                right: u[0].len(),
            });
        }
    }
    let n = u.len();
    let gram = CMatrix::from_fn(n, n, |k, l| u[k].dotc(&v[l]));
    Ok(linalg::det(&gram))
}
