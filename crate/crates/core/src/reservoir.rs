//! Quasi-free reservoir symbol `K`, read only through its finite sections
//! `k(i, j) = ⟨δ_i, K δ_j⟩`, and the Gaussian path weights it induces.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::RwLock;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const QUAD_START: usize = 2048;
const QUAD_MAX: usize = 1 << 22;
const QUAD_TOL: f64 = 1e-10;

/// Translation-invariant one-particle reservoir Hamiltonian on `ℤ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dispersion", rename_all = "kebab-case")]
pub enum Dispersion {
    /// `H_B = E₀ 𝟙`.
    Flat { e0: f64 },
    /// Nearest-neighbour hopping, `ε(p) = E₀ − 2J cos p`.
    Cosine { e0: f64, hopping: f64 },
}

impl Dispersion {
    pub fn energy(&self, p: f64) -> f64 {
        match *self {
            Dispersion::Flat { e0 } => e0,
            Dispersion::Cosine { e0, hopping } => e0 - 2.0 * hopping * p.cos(),
        }
    }

    pub fn min_energy(&self) -> f64 {
        match *self {
            Dispersion::Flat { e0 } => e0,
            Dispersion::Cosine { e0, hopping } => e0 - 2.0 * hopping.abs(),
        }
    }
}

/// Serializable descriptor of a reservoir symbol.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SymbolSpec {
    Identity,
    /// `K δ_j = k_j δ_j`; `values[j-1] = k_j`.
    Diagonal { values: Vec<f64> },
    Thermal {
        beta: f64,
        mu: f64,
        #[serde(flatten)]
        dispersion: Dispersion,
    },
    /// Explicit `t_max × t_max` section, row-major.
    KernelTable { table: Vec<Vec<f64>> },
}

#[derive(Debug)]
enum Kind {
    Identity,
    Diagonal(Vec<f64>),
    Thermal {
        beta: f64,
        mu: f64,
        dispersion: Dispersion,
    },
    Table(DMatrix<f64>),
}

#[derive(Debug)]
pub struct ReservoirSymbol {
    spec: SymbolSpec,
    kind: Kind,
    /// Thermal kernel entries keyed by `|i − j|`.
    cache: RwLock<HashMap<usize, f64>>,
}

impl Clone for ReservoirSymbol {
    fn clone(&self) -> Self {
        Self::from_spec(&self.spec).expect("spec was validated at construction")
    }
}

impl ReservoirSymbol {
    pub fn identity() -> Self {
        Self::new(SymbolSpec::Identity, Kind::Identity)
    }

    pub fn diagonal(values: Vec<f64>) -> Result<Self> {
        Self::from_spec(&SymbolSpec::Diagonal { values })
    }

    pub fn kernel_table(table: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_spec(&SymbolSpec::KernelTable { table })
    }

    pub fn from_spec(spec: &SymbolSpec) -> Result<Self> {
        let kind = match spec {
            SymbolSpec::Identity => Kind::Identity,
            SymbolSpec::Diagonal { values } => {
                if values.is_empty() {
                    return Err(Error::Kernel("diagonal symbol needs at least one value".into()));
                }
                if let Some(k) = values.iter().find(|k| !k.is_finite() || **k < 0.0) {
                    return Err(Error::Kernel(format!("diagonal entry {k} must be finite and >= 0")));
                }
                Kind::Diagonal(values.clone())
            }
            SymbolSpec::Thermal {
                beta,
                mu,
                dispersion,
            } => {
                validate_thermal(*beta, *mu, dispersion)?;
                Kind::Thermal {
                    beta: *beta,
                    mu: *mu,
                    dispersion: dispersion.clone(),
                }
            }
            SymbolSpec::KernelTable { table } => Kind::Table(validate_table(table)?),
        };
        Ok(Self::new(spec.clone(), kind))
    }

    fn new(spec: SymbolSpec, kind: Kind) -> Self {
        Self {
            spec,
            kind,
            cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn spec(&self) -> &SymbolSpec {
        &self.spec
    }

    /// Largest `t` for which the section is available, if bounded.
    pub fn max_section(&self) -> Option<usize> {
        match &self.kind {
            Kind::Diagonal(v) => Some(v.len()),
            Kind::Table(m) => Some(m.nrows()),
            _ => None,
        }
    }

    /// `⟨δ_i, K δ_j⟩` for sites `i, j ≥ 1`.
    pub fn kernel(&self, i: usize, j: usize) -> Result<f64> {
        if i == 0 || j == 0 {
            return Err(Error::Kernel("reservoir sites are numbered from 1".into()));
        }
        if let Some(max) = self.max_section() {
            if i > max || j > max {
                return Err(Error::Kernel(format!(
                    "entry ({i},{j}) outside the supplied {max}x{max} section"
                )));
            }
        }
        match &self.kind {
            Kind::Identity => Ok(if i == j { 1.0 } else { 0.0 }),
            Kind::Diagonal(v) => Ok(if i == j { v[i - 1] } else { 0.0 }),
            Kind::Table(m) => Ok(m[(i - 1, j - 1)]),
            Kind::Thermal {
                beta,
                mu,
                dispersion,
            } => {
                let offset = i.abs_diff(j);
                if let Some(&v) = self.cache.read().unwrap().get(&offset) {
                    return Ok(v);
                }
                let v = thermal_entry(*beta, *mu, dispersion, offset)?;
                self.cache.write().unwrap().insert(offset, v);
                Ok(v)
            }
        }
    }

    /// The section `(k(i, j))_{1 ≤ i, j ≤ t}`.
    pub fn section(&self, t: usize) -> Result<DMatrix<f64>> {
        let mut m = DMatrix::zeros(t, t);
        for i in 0..t {
            for j in 0..=i {
                let v = self.kernel(i + 1, j + 1)?;
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Ok(m)
    }

    /// Diagonal entries of the `t`-section when it is exactly diagonal.
    pub fn diagonal_section(&self, t: usize) -> Result<Vec<f64>> {
        let s = self.section(t)?;
        for i in 0..t {
            for j in 0..t {
                if i != j && s[(i, j)] != 0.0 {
                    return Err(Error::NotDiagonalSymbol(format!(
                        "k({},{}) = {} is non-zero",
                        i + 1,
                        j + 1,
                        s[(i, j)]
                    )));
                }
            }
        }
        Ok((0..t).map(|i| s[(i, i)]).collect())
    }

    /// `exp(−λ²/4 ⟨Θ, KΘ⟩)` with `theta[j-1] = Θ_j`.
    pub fn gaussian_weight(&self, theta: &[f64], lambda: f64) -> Result<f64> {
        let s = self.section(theta.len())?;
        Ok(weight_from_section(&s, theta, lambda))
    }

    /// Smallest eigenvalue of the `t`-section; a value below one means
    /// `K ≥ 𝟙` fails.
    pub fn check_symbol_lower_bound(&self, t: usize) -> Result<f64> {
        if t == 0 {
            return Err(Error::Config("section size must be at least 1".into()));
        }
        let m = section_min_eigenvalue(&self.section(t)?);
        if m < 1.0 - 1e-10 {
            log::warn!("reservoir symbol violates K >= 1 on the {t}-section (min eigenvalue {m})");
        }
        Ok(m)
    }
}

pub fn section_min_eigenvalue(s: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(s.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// `⟨Θ, SΘ⟩` over the leading `theta.len()` rows of the section `s`.
pub fn quadratic_form(s: &DMatrix<f64>, theta: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (i, &a) in theta.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        for (j, &b) in theta.iter().enumerate() {
            if b != 0.0 {
                acc += a * s[(i, j)] * b;
            }
        }
    }
    acc
}

pub fn weight_from_section(s: &DMatrix<f64>, theta: &[f64], lambda: f64) -> f64 {
    if lambda == 0.0 {
        return 1.0;
    }
    (-0.25 * lambda * lambda * quadratic_form(s, theta)).exp()
}

/// Thermal symbol `K = coth(β(H_B − μ)/2)`.
pub fn thermal_kernel(beta: f64, mu: f64, dispersion: Dispersion) -> Result<ReservoirSymbol> {
    ReservoirSymbol::from_spec(&SymbolSpec::Thermal {
        beta,
        mu,
        dispersion,
    })
}

fn validate_thermal(beta: f64, mu: f64, dispersion: &Dispersion) -> Result<()> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::InvalidThermal(format!("beta must be positive and finite, got {beta}")));
    }
    let gap = dispersion.min_energy() - mu;
    if !(gap > 0.0) {
        return Err(Error::InvalidThermal(format!(
            "H_B - mu must be positive; minimum of the dispersion minus mu is {gap}"
        )));
    }
    Ok(())
}

fn validate_table(table: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = table.len();
    if n == 0 {
        return Err(Error::Kernel("kernel table is empty".into()));
    }
    if let Some(row) = table.iter().find(|r| r.len() != n) {
        return Err(Error::Kernel(format!(
            "kernel table must be square: row of length {} in a {n}-row table",
            row.len()
        )));
    }
    let m = DMatrix::from_fn(n, n, |i, j| table[i][j]);
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::Kernel("kernel table has non-finite entries".into()));
    }
    let scale = m.iter().fold(0.0f64, |a, x| a.max(x.abs())).max(1.0);
    for i in 0..n {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                return Err(Error::Kernel(format!(
                    "kernel table is not symmetric at ({},{})",
                    i + 1,
                    j + 1
                )));
            }
        }
    }
    Ok((&m + m.transpose()) * 0.5)
}

fn coth(x: f64) -> f64 {
    1.0 / x.tanh()
}

/// `(1/2π) ∫ coth(β(ε(p) − μ)/2) cos(p·offset) dp` by the periodic trapezoid
/// rule, refined by doubling until two successive values agree.
fn thermal_entry(beta: f64, mu: f64, dispersion: &Dispersion, offset: usize) -> Result<f64> {
    if let Dispersion::Flat { e0 } = *dispersion {
        return Ok(if offset == 0 {
            coth(beta * (e0 - mu) / 2.0)
        } else {
            0.0
        });
    }
    let f = |p: f64| coth(beta * (dispersion.energy(p) - mu) / 2.0) * (p * offset as f64).cos();
    let trapezoid = |n: usize| -> f64 {
        let h = 2.0 * PI / n as f64;
        (0..n).map(|k| f(-PI + k as f64 * h)).sum::<f64>() / n as f64
    };
    let mut n = QUAD_START;
    let mut prev = trapezoid(n);
    while n < QUAD_MAX {
        n *= 2;
        let next = trapezoid(n);
        if (next - prev).abs() <= QUAD_TOL {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::Kernel(format!(
        "thermal quadrature did not stabilize for offset {offset}"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_trivial_cases() {
        let k = ReservoirSymbol::identity();
        assert_eq!(k.gaussian_weight(&[0.0, 0.0], 3.0).unwrap(), 1.0);
        assert_eq!(k.gaussian_weight(&[1.0, -2.0], 0.0).unwrap(), 1.0);
        let w = k.gaussian_weight(&[1.0], 2.0).unwrap();
        assert!((w - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn diagonal_weight_factorizes() {
        let ks: Vec<f64> = vec![1.0, 2.5, 4.0];
        let k = ReservoirSymbol::diagonal(ks.clone()).unwrap();
        let theta: [f64; 3] = [1.0, -2.0, 1.0];
        let lambda = 0.7;
        let product: f64 = theta
            .iter()
            .zip(&ks)
            .map(|(th, kj)| (-th * th * kj * lambda * lambda / 4.0).exp())
            .product();
        let w = k.gaussian_weight(&theta, lambda).unwrap();
        assert!((w - product).abs() < 1e-12);
    }

    #[test]
    fn lower_bound_examples() {
        assert_eq!(ReservoirSymbol::identity().check_symbol_lower_bound(6).unwrap(), 1.0);
        let k = ReservoirSymbol::diagonal(vec![3.0; 5]).unwrap();
        assert!((k.check_symbol_lower_bound(5).unwrap() - 3.0).abs() < 1e-14);
        let th = thermal_kernel(1.0, 0.0, Dispersion::Flat { e0: 1.0 }).unwrap();
        let m = th.check_symbol_lower_bound(4).unwrap();
        // coth(1/2) = (e + 1)/(e − 1)
        let e = 1.0f64.exp();
        assert!((m - (e + 1.0) / (e - 1.0)).abs() < 1e-12);
        assert!((m - 2.1640).abs() < 1e-4);
    }

    #[test]
    fn diagonal_section_out_of_range() {
        let k = ReservoirSymbol::diagonal(vec![1.0, 2.0]).unwrap();
        assert!(matches!(k.section(3), Err(Error::Kernel(_))));
        assert_eq!(k.diagonal_section(2).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn table_validation() {
        assert!(ReservoirSymbol::kernel_table(vec![vec![1.0, 0.5], vec![0.4, 1.0]]).is_err());
        assert!(ReservoirSymbol::kernel_table(vec![vec![1.0, 0.5]]).is_err());
        let k = ReservoirSymbol::kernel_table(vec![vec![2.0, 0.5], vec![0.5, 2.0]]).unwrap();
        assert_eq!(k.kernel(2, 1).unwrap(), 0.5);
        assert!(matches!(k.diagonal_section(2), Err(Error::NotDiagonalSymbol(_))));
    }

    #[test]
    fn thermal_validation() {
        let flat = Dispersion::Flat { e0: 1.0 };
        assert!(matches!(thermal_kernel(0.0, 0.0, flat.clone()), Err(Error::InvalidThermal(_))));
        assert!(matches!(thermal_kernel(1.0, 1.0, flat), Err(Error::InvalidThermal(_))));
        let band = Dispersion::Cosine { e0: 2.0, hopping: 0.5 };
        assert!(matches!(thermal_kernel(1.0, 1.0, band), Err(Error::InvalidThermal(_))));
    }

    #[test]
    fn thermal_flat_limits() {
        let flat = Dispersion::Flat { e0: 1.0 };
        let cold = thermal_kernel(200.0, 0.0, flat.clone()).unwrap();
        assert!((cold.kernel(3, 3).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cold.kernel(1, 2).unwrap(), 0.0);
        let hot = thermal_kernel(1e-6, 0.0, flat).unwrap();
        assert!(hot.kernel(1, 1).unwrap() > 1e5);
        assert!(hot.gaussian_weight(&[1.0, 0.0], 1.0).unwrap() < 1e-100);
    }

    #[test]
    fn thermal_band_is_symmetric_toeplitz_and_above_one() {
        let band = Dispersion::Cosine { e0: 2.0, hopping: 0.4 };
        let k = thermal_kernel(0.8, 0.0, band).unwrap();
        let s = k.section(5).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(s[(i, j)], s[(j, i)]);
                if i > 0 && j > 0 {
                    assert_eq!(s[(i, j)], s[(i - 1, j - 1)]);
                }
            }
        }
        assert!(k.check_symbol_lower_bound(5).unwrap() >= 1.0);
    }

    #[test]
    fn spec_round_trips_through_json() {
        let spec = SymbolSpec::Thermal {
            beta: 1.5,
            mu: -0.5,
            dispersion: Dispersion::Cosine { e0: 1.0, hopping: 0.2 },
        };
        let json = serde_json::to_string(&spec).unwrap();
        assert!(json.contains("\"kind\":\"thermal\""));
        let back: SymbolSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
    }
}
