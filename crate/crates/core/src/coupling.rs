//! Coupling operator `T = dΓ₋(τ)`, its spectral projectors `B^μ` and the
//! minimal spectral gap `Δ`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fock::{FermionOperator, FockBasis, INPUT_TOL};
use crate::linalg::{self, c64, real, CMatrix, CVector, ONE, ZERO};

/// Default absolute tolerance for merging eigenvalues into one cluster.
pub const CLUSTER_TOL: f64 = 1e-8;

/// Spectral decomposition `H = Σ_μ μ B^μ` with eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<f64>,
    pub projectors: Vec<CMatrix>,
    pub multiplicities: Vec<usize>,
}

impl SpectralDecomposition {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn reconstruct(&self) -> CMatrix {
        let n = self.projectors.first().map_or(0, |p| p.nrows());
        self.eigenvalues
            .iter()
            .zip(&self.projectors)
            .fold(CMatrix::zeros(n, n), |acc, (&mu, p)| acc + p * real(mu))
    }

    /// Minimal distance between distinct eigenvalues; `None` for a single point.
    pub fn min_gap(&self) -> Option<f64> {
        self.eigenvalues
            .windows(2)
            .map(|w| w[1] - w[0])
            .min_by(f64::total_cmp)
    }

    pub fn position(&self, mu: f64, tol: f64) -> Option<usize> {
        self.eigenvalues.iter().position(|&e| (e - mu).abs() <= tol)
    }
}

/// Group sorted values into clusters whose consecutive gaps are `≤ tol`.
/// Returns cluster representatives (means) and, per input, its cluster.
fn cluster_sorted(values: &[f64], tol: f64) -> Result<(Vec<f64>, Vec<usize>)> {
    let mut reps: Vec<f64> = Vec::new();
    let mut members: Vec<usize> = Vec::new();
    let mut labels = vec![0; values.len()];
    let mut sum = 0.0;
    for (i, &v) in values.iter().enumerate() {
        if i > 0 && v - values[i - 1] <= tol {
            sum += v;
            *members.last_mut().unwrap() += 1;
            *reps.last_mut().unwrap() = sum / *members.last().unwrap() as f64;
        } else {
            sum = v;
            reps.push(v);
            members.push(1);
        }
        labels[i] = reps.len() - 1;
    }
    for w in reps.windows(2) {
        if w[1] - w[0] < 10.0 * tol {
            return Err(Error::DegeneracyAmbiguity {
                left: w[0],
                right: w[1],
                tol,
            });
        }
    }
    Ok((reps, labels))
}

/// Cluster arbitrary values; returns ascending representatives and labels
/// in the input order.
fn cluster_values(values: &[f64], tol: f64) -> Result<(Vec<f64>, Vec<usize>)> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let sorted: Vec<f64> = order.iter().map(|&i| values[i]).collect();
    let (reps, sorted_labels) = cluster_sorted(&sorted, tol)?;
    let mut labels = vec![0; values.len()];
    for (k, &i) in order.iter().enumerate() {
        labels[i] = sorted_labels[k];
    }
    Ok((reps, labels))
}

/// Numerical spectral decomposition of a Hermitian matrix with eigenvalue
/// clustering at absolute tolerance `cluster_tol`.
pub fn spectral_decompose(h: &CMatrix, cluster_tol: f64) -> Result<SpectralDecomposition> {
    if cluster_tol <= 0.0 {
        return Err(Error::Config("cluster tolerance must be positive".into()));
    }
    linalg::ensure_square(h, h.nrows())?;
    linalg::ensure_hermitian(h, INPUT_TOL)?;
    let n = h.nrows();
    let (values, vectors) = linalg::eigh(h);
    let (reps, labels) = cluster_sorted(&values, cluster_tol)?;
    let mut projectors = vec![CMatrix::zeros(n, n); reps.len()];
    let mut multiplicities = vec![0; reps.len()];
    for (i, &label) in labels.iter().enumerate() {
        let v = vectors.column(i);
        projectors[label] += &v * v.adjoint();
        multiplicities[label] += 1;
    }
    Ok(SpectralDecomposition {
        eigenvalues: reps,
        projectors,
        multiplicities,
    })
}

/// One-particle data of a second-quantized coupling.
#[derive(Clone, Debug)]
pub struct OneParticle {
    pub tau: CMatrix,
    /// Columns are the orthonormal eigenvectors `f_j`.
    pub eigenbasis: CMatrix,
    /// `ε_j` after clustering, matching the columns of `eigenbasis`.
    pub eigenvalues: Vec<f64>,
    /// Cluster index of `μ` for each Fock basis vector `∧ f_J`.
    pub labels: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct CouplingModel {
    pub t: FermionOperator,
    pub spec: SpectralDecomposition,
    pub gap: f64,
    /// Present when `T = dΓ₋(τ)`.
    pub one_particle: Option<OneParticle>,
}

impl CouplingModel {
    pub fn spectrum(&self) -> &[f64] {
        &self.spec.eigenvalues
    }

    pub fn projector(&self, k: usize) -> &CMatrix {
        &self.spec.projectors[k]
    }

    pub fn is_second_quantized(&self) -> bool {
        self.one_particle.is_some()
    }

    pub fn require_one_particle(&self) -> Result<&OneParticle> {
        self.one_particle.as_ref().ok_or_else(|| {
            Error::Unsupported("this check needs a coupling of the form T = dΓ₋(τ)".into())
        })
    }

    /// Spectral index of `μ_F`, the eigenvalue of the top vector `f_1∧…∧f_d`.
    pub fn top_label(&self, basis: &FockBasis) -> usize {
        let top = basis.top();
        (0..self.spec.len())
            .find(|&k| self.spec.projectors[k][(top, top)].re > 0.5)
            .unwrap_or(0)
    }

    /// Whether `F = f_1∧…∧f_d` lies in `ker T`.
    pub fn top_in_kernel(&self, basis: &FockBasis) -> bool {
        self.spec.eigenvalues[self.top_label(basis)].abs() <= CLUSTER_TOL
    }

    /// Restriction of `B^μ` to the `n`-particle sector as a dense block.
    pub fn sector_block(&self, basis: &FockBasis, k: usize, n: usize) -> CMatrix {
        let r = basis.sector_range(n);
        self.spec.projectors[k]
            .view((r.start, r.start), (r.len(), r.len()))
            .into_owned()
    }

    /// Rank of `B^μ` inside sector `n`.
    pub fn sector_rank(&self, basis: &FockBasis, k: usize, n: usize) -> usize {
        let r = basis.sector_range(n);
        let tr: f64 = r.map(|i| self.spec.projectors[k][(i, i)].re).sum();
        tr.round() as usize
    }
}

/// `T = dΓ₋(τ)` together with its projectors, computed from the one-particle
/// spectrum: the sums `Σ ε_{j_r}` are formed from clustered `ε_j` and then
/// clustered again so that structural degeneracies such as `ε₁ + ε₂ = 0` are
/// exact.
pub fn build_coupling(tau: &CMatrix, basis: &FockBasis, cluster_tol: f64) -> Result<CouplingModel> {
    linalg::ensure_square(tau, basis.sites())?;
    linalg::ensure_hermitian(tau, INPUT_TOL)?;
    let (eps, f) = linalg::eigh(tau);
    from_eigensystem(tau.clone(), f, &eps, basis, cluster_tol)
}

fn from_eigensystem(
    tau: CMatrix,
    f: CMatrix,
    eps: &[f64],
    basis: &FockBasis,
    cluster_tol: f64,
) -> Result<CouplingModel> {
    if cluster_tol <= 0.0 {
        return Err(Error::Config("cluster tolerance must be positive".into()));
    }
    let (eps_reps, eps_labels) = cluster_values(eps, cluster_tol)?;
    let snapped: Vec<f64> = eps_labels.iter().map(|&l| eps_reps[l]).collect();
    let sums: Vec<f64> = (0..basis.dim())
        .map(|i| basis.occupied(i).iter().map(|&s| snapped[s]).sum())
        .collect();
    let (mut mus, labels) = cluster_values(&sums, cluster_tol)?;
    if mus.len() < 2 {
        return Err(Error::DegenerateCoupling);
    }
    // the vacuum carries exactly 0
    let vac = labels[0];
    if mus[vac].abs() <= cluster_tol {
        mus[vac] = 0.0;
    }
    let gamma_f = basis.second_quantize_contraction(&f);
    let dim = basis.dim();
    let mut projectors = Vec::with_capacity(mus.len());
    let mut multiplicities = Vec::with_capacity(mus.len());
    for k in 0..mus.len() {
        let diag = CVector::from_iterator(
            dim,
            labels.iter().map(|&l| if l == k { ONE } else { ZERO }),
        );
        multiplicities.push(labels.iter().filter(|&&l| l == k).count());
        let p = &gamma_f * CMatrix::from_diagonal(&diag) * gamma_f.adjoint();
        // exact Hermitian symmetry
        projectors.push((&p + p.adjoint()) * real(0.5));
    }
    let spec = SpectralDecomposition {
        eigenvalues: mus,
        projectors,
        multiplicities,
    };
    let gap = spec.min_gap().ok_or(Error::DegenerateCoupling)?;
    let t = basis.quadratic_form(&tau);
    Ok(CouplingModel {
        t,
        spec,
        gap,
        one_particle: Some(OneParticle {
            tau,
            eigenbasis: f,
            eigenvalues: snapped,
            labels,
        }),
    })
}

/// Coupling given directly as a Hermitian operator on the Fock space, without
/// second-quantized structure.
pub fn coupling_from_operator(
    t: &FermionOperator,
    basis: &FockBasis,
    cluster_tol: f64,
) -> Result<CouplingModel> {
    linalg::ensure_square(t, basis.dim())?;
    let spec = spectral_decompose(t, cluster_tol)?;
    let gap = spec.min_gap().ok_or(Error::DegenerateCoupling)?;
    Ok(CouplingModel {
        t: t.clone(),
        spec,
        gap,
        one_particle: None,
    })
}

/// `τ_hop = e^{iφ}|e₂⟩⟨e₁| + e^{-iφ}|e₁⟩⟨e₂|`.
pub fn tau_hop(d: usize, phi: f64) -> CMatrix {
    let mut tau = CMatrix::zeros(d, d);
    tau[(1, 0)] = c64(phi.cos(), phi.sin());
    tau[(0, 1)] = c64(phi.cos(), -phi.sin());
    tau
}

/// Hopping coupling between sites 1 and 2 with Peierls phase `phi`, using the
/// closed-form eigenbasis `f₁ = (e₁ + e^{iφ}e₂)/√2`, `f₂ = (e₁ − e^{iφ}e₂)/√2`,
/// `f_j = e_j` for `j > 2`.
pub fn build_t_hop(basis: &FockBasis, phi: f64) -> Result<CouplingModel> {
    let d = basis.sites();
    if d < 3 {
        return Err(Error::Config(format!("hopping model needs d >= 3, got {d}")));
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let e = c64(phi.cos(), phi.sin());
    let mut f = linalg::identity(d);
    f[(0, 0)] = real(s);
    f[(1, 0)] = e * s;
    f[(0, 1)] = real(s);
    f[(1, 1)] = -e * s;
    let mut eps = vec![0.0; d];
    eps[0] = 1.0;
    eps[1] = -1.0;
    from_eigensystem(tau_hop(d, phi), f, &eps, basis, CLUSTER_TOL)
}

#[derive(Clone, Debug, Serialize)]
pub struct MndReport {
    /// Entry `n - 1` for sectors `n = 1..d-1`.
    pub per_sector: Vec<bool>,
    pub holds: bool,
    /// `τ ≠ c·1`, when the coupling is second quantized.
    pub tau_not_scalar: Option<bool>,
}

/// `T` restricted to each sector `0 < n < d` is not a multiple of the identity.
pub fn check_mnd(model: &CouplingModel, basis: &FockBasis) -> MndReport {
    let d = basis.sites();
    let per_sector: Vec<bool> = (1..d)
        .map(|n| {
            (0..model.spec.len())
                .filter(|&k| model.sector_rank(basis, k, n) > 0)
                .count()
                >= 2
        })
        .collect();
    let tau_not_scalar = model.one_particle.as_ref().map(|op| {
        let c = op.tau.trace() / real(d as f64);
        linalg::frob(&(&op.tau - linalg::identity(d) * c)) > CLUSTER_TOL
    });
    MndReport {
        holds: per_sector.iter().all(|&b| b),
        per_sector,
        tau_not_scalar,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::frob;

    fn diag(values: &[f64]) -> CMatrix {
        CMatrix::from_diagonal(&CVector::from_iterator(
            values.len(),
            values.iter().map(|&x| real(x)),
        ))
    }

    fn check_projector_algebra(spec: &SpectralDecomposition) {
        let n = spec.projectors[0].nrows();
        let mut sum = CMatrix::zeros(n, n);
        for (i, p) in spec.projectors.iter().enumerate() {
            assert!(frob(&(p - p.adjoint())) < 1e-10);
            for (j, q) in spec.projectors.iter().enumerate() {
                let prod = p * q;
                if i == j {
                    assert!(frob(&(prod - p)) < 1e-10);
                } else {
                    assert!(frob(&prod) < 1e-10);
                }
            }
            sum += p;
        }
        assert!(frob(&(sum - linalg::identity(n))) < 1e-10);
    }

    #[test]
    fn decompose_exact_degeneracy() {
        let s = spectral_decompose(&diag(&[1.0, 1.0, -1.0]), 1e-8).unwrap();
        assert_eq!(s.eigenvalues, vec![-1.0, 1.0]);
        assert_eq!(s.multiplicities, vec![1, 2]);
        check_projector_algebra(&s);
    }

    #[test]
    fn decompose_zero_operator() {
        let s = spectral_decompose(&CMatrix::zeros(3, 3), 1e-8).unwrap();
        assert_eq!(s.eigenvalues, vec![0.0]);
        assert!(frob(&(&s.projectors[0] - linalg::identity(3))) < 1e-15);
    }

    #[test]
    fn decompose_random_reconstructs() {
        let h = CMatrix::from_fn(4, 4, |i, j| {
            c64(((i * 7 + j * 3) % 5) as f64 - 2.0, (i as f64 - j as f64) * 0.3)
        });
        let h = (&h + h.adjoint()) * real(0.5);
        let s = spectral_decompose(&h, 1e-8).unwrap();
        assert!(frob(&(s.reconstruct() - &h)) < 1e-10);
        check_projector_algebra(&s);
    }

    #[test]
    fn decompose_flags_near_degeneracy() {
        let err = spectral_decompose(&diag(&[0.0, 5e-8]), 1e-8).unwrap_err();
        assert!(matches!(err, Error::DegeneracyAmbiguity { .. }));
    }

    #[test]
    fn two_site_diagonal_coupling() {
        let basis = FockBasis::new(2).unwrap();
        let m = build_coupling(&diag(&[1.0, -1.0]), &basis, CLUSTER_TOL).unwrap();
        assert_eq!(m.spectrum(), &[-1.0, 0.0, 1.0]);
        assert_eq!(m.spec.multiplicities, vec![1, 2, 1]);
        assert_eq!(m.gap, 1.0);
        assert!(frob(&(m.spec.reconstruct() - &m.t)) < 1e-12);
        check_projector_algebra(&m.spec);
    }

    #[test]
    fn identity_coupling_is_number_operator() {
        let basis = FockBasis::new(4).unwrap();
        let m = build_coupling(&linalg::identity(4), &basis, CLUSTER_TOL).unwrap();
        assert_eq!(m.spectrum(), &[0.0, 1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.gap, 1.0);
        assert!(frob(&(&m.t - basis.particle_number())) < 1e-14);
        let mnd = check_mnd(&m, &basis);
        assert!(mnd.per_sector.iter().all(|&b| !b));
        assert_eq!(mnd.tau_not_scalar, Some(false));
    }

    #[test]
    fn zero_coupling_rejected() {
        let basis = FockBasis::new(3).unwrap();
        let err = build_coupling(&CMatrix::zeros(3, 3), &basis, CLUSTER_TOL).unwrap_err();
        assert!(matches!(err, Error::DegenerateCoupling));
    }

    #[test]
    fn hop_spectrum_and_projectors() {
        for d in 3..=5 {
            let basis = FockBasis::new(d).unwrap();
            let m = build_t_hop(&basis, 0.37).unwrap();
            assert_eq!(m.spectrum(), &[-1.0, 0.0, 1.0]);
            assert_eq!(m.gap, 1.0);
            assert!(frob(&(m.spec.reconstruct() - &m.t)) < 1e-12);
            let t_direct = basis.second_quantize_generator(&tau_hop(d, 0.37)).unwrap();
            assert!(frob(&(&m.t - t_direct)) < 1e-14);
            check_projector_algebra(&m.spec);
            // B⁺ − B⁻ = T_hop
            assert!(frob(&(m.projector(2) - m.projector(0) - &m.t)) < 1e-12);
            assert!(m.top_in_kernel(&basis));
            for n in 1..d {
                assert_eq!(m.sector_rank(&basis, 2, n), linalg::binomial(d - 2, n - 1));
            }
        }
    }

    #[test]
    fn hop_requires_three_sites() {
        let basis = FockBasis::new(2).unwrap();
        assert!(matches!(build_t_hop(&basis, 0.0), Err(Error::Config(_))));
    }

    #[test]
    fn mnd_cases() {
        let basis = FockBasis::new(3).unwrap();
        let hop = build_t_hop(&basis, 0.0).unwrap();
        let r = check_mnd(&hop, &basis);
        assert!(r.holds);
        assert_eq!(r.tau_not_scalar, Some(true));
        let basis2 = FockBasis::new(2).unwrap();
        let m = build_coupling(&diag(&[1.0, -1.0]), &basis2, CLUSTER_TOL).unwrap();
        assert_eq!(check_mnd(&m, &basis2).per_sector, vec![true]);
    }
}
