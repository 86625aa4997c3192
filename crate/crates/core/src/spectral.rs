//! Spectral analysis of the contraction `𝒱Φ`: peripheral/decaying split,
//! the spectral assumptions on `V` and `T`, the invariant subspace and the
//! asymptotic state.

use serde::Serialize;

use crate::coupling::{check_mnd, CouplingModel, MndReport};
use crate::dynamics::ChannelMaps;
use crate::error::{Error, Result};
use crate::fock::FockBasis;
use crate::jsonmat::serde_cmatrix;
use crate::linalg::{self, real, CMatrix, CVector, C64, ONE};

pub const CIRCLE_TOL: f64 = 1e-9;
pub const ASSUMPTION_TOL: f64 = 1e-10;
pub const DEFAULT_N_MAX: usize = 200;
/// Margin factor applied to the raw decay rate before it enters bounds.
pub const GAMMA_MARGIN: f64 = 0.99;
/// Peripheral eigenvalues closer than this are treated as one eigenvalue.
const PERIPHERAL_CLUSTER_TOL: f64 = 1e-8;

/// One distinct eigenvalue on the unit circle with an orthonormal basis of
/// its (orthogonal) spectral subspace, as columns of vectorized operators.
#[derive(Clone, Debug)]
pub struct PeripheralCluster {
    pub value: C64,
    pub multiplicity: usize,
    pub basis: CMatrix,
}

impl PeripheralCluster {
    pub fn projector(&self) -> CMatrix {
        &self.basis * self.basis.adjoint()
    }

    /// Orthogonal projection of an operator onto the cluster subspace.
    pub fn project(&self, x: &CMatrix) -> CMatrix {
        let n = x.nrows();
        let v = linalg::vectorize(x);
        linalg::unvectorize(&(&self.basis * (self.basis.adjoint() * v)), n)
    }
}

#[derive(Clone, Debug)]
pub struct ContractionSplit {
    dim: usize,
    /// All eigenvalues, peripheral ones first.
    pub eigenvalues: Vec<C64>,
    pub peripheral_count: usize,
    pub peripheral: Vec<PeripheralCluster>,
    pub p_circle: CMatrix,
    pub p_less: CMatrix,
    pub subdominant_modulus: f64,
    pub gamma_raw: f64,
    pub gamma_used: f64,
    /// `‖P_○ P_<‖` with `P_<` taken from an independent reordering.
    pub orthogonality_error: f64,
    /// Norm of the Schur block coupling the two invariant subspaces.
    pub decoupling_error: f64,
    /// Strictly upper part of the peripheral Schur block.
    pub peripheral_nonnormality: f64,
    /// `max ‖𝒱(X) − e^{iθ}X‖, ‖Φ(X) − X‖` over peripheral eigenvectors.
    pub peripheral_residual: f64,
    /// Schur block of `𝒱Φ` on `ran P_<`.
    t_less: CMatrix,
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayBound {
    pub c_bound: f64,
    pub gamma_used: f64,
    pub n_max: usize,
    /// `‖(𝒱Φ)ⁿ P_<‖` for `n = 1..=n_max`.
    pub norms: Vec<f64>,
}

impl DecayBound {
    pub fn holds(&self) -> bool {
        self.norms.iter().enumerate().all(|(i, &v)| {
            let n = (i + 1) as f64;
            v <= self.c_bound * (-self.gamma_used * n).exp() * (1.0 + 1e-9) + 1e-15
        })
    }
}

impl ContractionSplit {
    pub fn fock_dim(&self) -> usize {
        self.dim
    }

    pub fn peripheral_values(&self) -> Vec<C64> {
        self.peripheral.iter().map(|c| c.value).collect()
    }

    pub fn cluster_at(&self, z: C64, tol: f64) -> Option<&PeripheralCluster> {
        self.peripheral.iter().find(|c| (c.value - z).norm() <= tol)
    }

    pub fn eigenvalue_one_multiplicity(&self) -> usize {
        self.cluster_at(ONE, PERIPHERAL_CLUSTER_TOL)
            .map_or(0, |c| c.multiplicity)
    }

    /// `P₁(X)`, the orthogonal projection onto the fixed points of `𝒱Φ`.
    pub fn p1(&self, x: &CMatrix) -> Result<CMatrix> {
        self.cluster_at(ONE, PERIPHERAL_CLUSTER_TOL)
            .map(|c| c.project(x))
            .ok_or_else(|| Error::Numerical("eigenvalue 1 not found on the unit circle".into()))
    }

    /// Hausdorff distance between the distinct peripheral eigenvalues and `set`.
    pub fn peripheral_distance(&self, set: &[C64]) -> f64 {
        let own = self.peripheral_values();
        let one_way = |a: &[C64], b: &[C64]| {
            a.iter()
                .map(|x| b.iter().map(|y| (x - y).norm()).fold(f64::INFINITY, f64::min))
                .fold(0.0f64, f64::max)
        };
        one_way(&own, set).max(one_way(set, &own))
    }

    /// Fitted `C` with `‖(𝒱Φ)ⁿ P_<‖ ≤ C e^{−γn}` for `n ≤ n_max`, using
    /// `γ = gamma_used`.
    pub fn decay_bound(&self, n_max: usize) -> DecayBound {
        let m = self.t_less.nrows();
        let mut norms = Vec::with_capacity(n_max);
        let mut log_c = f64::NEG_INFINITY;
        if m > 0 {
            let mut power = self.t_less.clone();
            for n in 1..=n_max {
                if n > 1 {
                    power = &power * &self.t_less;
                }
                let v = linalg::op_norm(&power);
                norms.push(v);
                if v > 0.0 {
                    log_c = log_c.max(v.ln() + self.gamma_used * n as f64);
                } else {
                    norms.resize(n_max, 0.0);
                    break;
                }
            }
        } else {
            norms.resize(n_max, 0.0);
        }
        DecayBound {
            c_bound: if log_c.is_finite() { log_c.exp() } else { 0.0 },
            gamma_used: self.gamma_used,
            n_max,
            norms,
        }
    }
}

fn is_peripheral(z: C64, circle_tol: f64) -> bool {
    z.norm() >= 1.0 - circle_tol
}

pub fn split_contraction(maps: &ChannelMaps, circle_tol: f64) -> Result<ContractionSplit> {
    if !(circle_tol > 0.0 && circle_tol < 0.1) {
        return Err(Error::Config(format!("circle tolerance {circle_tol} out of range")));
    }
    let m = maps.superop_vphi()?.into_matrix();
    let nn = m.nrows();
    let (q0, t0) = linalg::schur(&m)?;
    for i in 0..nn {
        let r = t0[(i, i)].norm();
        if r >= 1.0 - 10.0 * circle_tol && r < 1.0 - circle_tol {
            return Err(Error::ClassificationAmbiguity { modulus: r });
        }
    }

    let (mut q, mut t) = (q0.clone(), t0.clone());
    let k = linalg::reorder_schur(&mut q, &mut t, |z| is_peripheral(z, circle_tol));
    let qk = q.columns(0, k).into_owned();
    let p_circle = &qk * qk.adjoint();
    let p_less = linalg::identity(nn) - &p_circle;

    let (mut q2, mut t2) = (q0, t0);
    let m_less = linalg::reorder_schur(&mut q2, &mut t2, |z| !is_peripheral(z, circle_tol));
    let ql = q2.columns(0, m_less).into_owned();
    let orthogonality_error = linalg::op_norm(&(&p_circle * (&ql * ql.adjoint())));

    let decoupling_error = if k > 0 && k < nn {
        linalg::frob(&t.view((0, k), (k, nn - k)).into_owned())
    } else {
        0.0
    };
    let t11 = t.view((0, 0), (k, k)).into_owned();
    let mut nonnormal = 0.0f64;
    for j in 0..k {
        for i in 0..j {
            nonnormal = nonnormal.max(t11[(i, j)].norm());
        }
    }

    // distinct peripheral values, clustered in order of appearance
    let mut centers: Vec<(C64, usize)> = Vec::new();
    for i in 0..k {
        let z = t11[(i, i)];
        match centers.iter_mut().find(|(c, _)| (*c - z).norm() <= PERIPHERAL_CLUSTER_TOL) {
            Some(entry) => entry.1 += 1,
            None => centers.push((z, 1)),
        }
    }
    let mut peripheral = Vec::with_capacity(centers.len());
    for (center, mult) in centers {
        let (mut qc, mut tc) = (linalg::identity(k), t11.clone());
        let c = linalg::reorder_schur(&mut qc, &mut tc, |z| (z - center).norm() <= PERIPHERAL_CLUSTER_TOL);
        debug_assert_eq!(c, mult);
        let value = (0..c).map(|i| tc[(i, i)]).sum::<C64>() / real(c as f64);
        peripheral.push(PeripheralCluster {
            value,
            multiplicity: c,
            basis: &qk * qc.columns(0, c),
        });
    }

    let n = maps.dim();
    let mut residual = 0.0f64;
    for cluster in &peripheral {
        for col in cluster.basis.column_iter() {
            let x = linalg::unvectorize(&CVector::from(col), n);
            residual = residual
                .max(linalg::frob(&(maps.apply_v(&x) - &x * cluster.value)))
                .max(linalg::frob(&(maps.apply_phi(&x) - &x)));
        }
    }

    let eigenvalues: Vec<C64> = (0..nn).map(|i| t[(i, i)]).collect();
    let subdominant = eigenvalues[k..].iter().map(|z| z.norm()).fold(0.0, f64::max);
    let gamma_raw = if k < nn {
        -(subdominant.max(f64::EPSILON)).ln()
    } else {
        f64::INFINITY
    };
    Ok(ContractionSplit {
        dim: n,
        eigenvalues,
        peripheral_count: k,
        peripheral,
        p_circle,
        p_less,
        subdominant_modulus: subdominant,
        gamma_raw,
        gamma_used: GAMMA_MARGIN * gamma_raw,
        orthogonality_error,
        decoupling_error,
        peripheral_nonnormality: nonnormal,
        peripheral_residual: residual,
        t_less: t.view((k, k), (nn - k, nn - k)).into_owned(),
    })
}

/// Eigenphases `α_k` and orthonormal eigenvectors `ψ_k` (columns) of a unitary.
pub fn unitary_eigen(v: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    linalg::ensure_unitary(v, crate::fock::INPUT_TOL)?;
    let (q, t) = linalg::schur(v)?;
    let alphas = (0..v.nrows()).map(|i| linalg::phase(t[(i, i)])).collect();
    Ok((alphas, q))
}

#[derive(Clone, Debug, Serialize)]
pub struct SndReport {
    pub holds: bool,
    /// Smallest distance on the circle between two eigenphases of `𝒱`
    /// that must differ, including the distance to the eigenvalue 1.
    pub min_distance: f64,
    pub tol: f64,
}

/// Spectral non-degeneracy of `𝒱`: the phases `Σ c_k α_k`, `c ∈ {−1, 0, 1}^d`,
/// are pairwise distinct modulo `2π`.
pub fn check_snd(v: &CMatrix, basis: &FockBasis, tol: f64) -> Result<SndReport> {
    linalg::ensure_square(v, basis.sites())?;
    let (alphas, _) = unitary_eigen(v)?;
    // Pairs (I, J) with the same coefficient vector 1_J − 1_I always share
    // their phase, so only distinct vectors c ∈ {−1, 0, 1}^d are compared.
    let two_pi = 2.0 * std::f64::consts::PI;
    let d = basis.sites();
    let mut phases = Vec::with_capacity(3usize.pow(d as u32));
    for code in 0..3usize.pow(d as u32) {
        let mut rest = code;
        let mut total = 0.0;
        for alpha in &alphas {
            total += (rest % 3) as f64 * alpha - alpha;
            rest /= 3;
        }
        phases.push(total.rem_euclid(two_pi));
    }
    phases.sort_by(f64::total_cmp);
    let mut min_distance = phases[0] + two_pi - phases[phases.len() - 1];
    for w in phases.windows(2) {
        min_distance = min_distance.min(w[1] - w[0]);
    }
    Ok(SndReport {
        holds: min_distance > tol,
        min_distance,
        tol,
    })
}

/// `⟨∧ⁿψ_k, B^μ ∧ⁿψ_l⟩` for one sector, indexed `[μ][k][l]` with `k, l`
/// running over the sector.
type SectorElements = Vec<Vec<Vec<C64>>>;

#[derive(Clone, Debug, Serialize)]
pub struct DiagReport {
    pub holds: bool,
    /// Per sector `n = 1..d-1`: smallest `|⟨∧ψ_k, B^μ ∧ψ_k⟩|` over `k` and
    /// `μ ∈ σ(T|_n)`.
    pub min_per_sector: Vec<f64>,
    pub tol: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct OffDiagReport {
    pub holds: bool,
    /// Per sector: smallest over `k ≠ l` of `max_μ |⟨∧ψ_k, B^μ ∧ψ_l⟩|`;
    /// infinite for one-dimensional sectors.
    pub min_per_sector: Vec<f64>,
    pub tol: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MatrixElements {
    pub diag: DiagReport,
    pub offdiag: OffDiagReport,
    /// `C = (⟨f_j, ψ_k⟩)`.
    #[serde(with = "serde_cmatrix")]
    pub c_matrix: CMatrix,
    pub c_unitarity: f64,
    /// Minors `c_J(K) = det C[J, K]` for each sector `n = 0..d`.
    #[serde(skip)]
    pub minors: Vec<CMatrix>,
    /// Largest discrepancy between the Fock-vector and minor evaluations.
    pub route_discrepancy: f64,
    /// Largest discrepancy between the minors and `⟨∧f_J, ∧ψ_K⟩`.
    pub minor_discrepancy: f64,
}

/// `(Diag)` and `(OffDiag)`, evaluated through explicit Fock vectors
/// `a*(ψ_{k_1})⋯a*(ψ_{k_n})Ω` and cross-checked with the minors of `C`.
pub fn check_matrix_elements(
    v: &CMatrix,
    coupling: &CouplingModel,
    basis: &FockBasis,
    tol: f64,
) -> Result<MatrixElements> {
    let op = coupling.require_one_particle()?;
    let d = basis.sites();
    let (_, psi) = unitary_eigen(v)?;
    let creators: Vec<CMatrix> = (0..d)
        .map(|k| basis.creation_of(&psi.column(k).into_owned()))
        .collect::<Result<_>>()?;
    let c = op.eigenbasis.adjoint() * &psi;
    let c_unitarity = linalg::unitary_deviation(&c);
    let f_vectors: Vec<CVector> = (0..basis.dim())
        .map(|i| {
            let cols: Vec<usize> = basis.occupied(i);
            let m = CMatrix::from_fn(d, cols.len(), |r, s| op.eigenbasis[(r, cols[s])]);
            basis.wedge_vector(&m)
        })
        .collect::<Result<_>>()?;

    let n_mu = coupling.spec.len();
    let mut diag_min = Vec::new();
    let mut off_min = Vec::new();
    let mut route = 0.0f64;
    let mut minor_disc = 0.0f64;
    let mut minors = Vec::with_capacity(d + 1);
    for n in 0..=d {
        let range = basis.sector_range(n);
        let idx: Vec<Vec<usize>> = range.clone().map(|i| basis.occupied(i)).collect();
        // ∧ψ_K via creation operators, rightmost first
        let wedges: Vec<CVector> = idx
            .iter()
            .map(|ks| {
                let mut w = CVector::zeros(basis.dim());
                w[0] = ONE;
                for &k in ks.iter().rev() {
                    w = &creators[k] * w;
                }
                w
            })
            .collect();
        let minor = CMatrix::from_fn(idx.len(), idx.len(), |j, k| {
            linalg::det(&linalg::submatrix(&c, &idx[j], &idx[k]))
        });
        for (j, fj) in range.clone().enumerate() {
            for (k, wk) in wedges.iter().enumerate() {
                let direct = f_vectors[fj].dotc(wk);
                minor_disc = minor_disc.max((direct - minor[(j, k)]).norm());
            }
        }
        if n == 0 || n == d {
            minors.push(minor);
            continue;
        }
        let present: Vec<usize> = (0..n_mu)
            .filter(|&mu| coupling.sector_rank(basis, mu, n) > 0)
            .collect();
        let mut elements: SectorElements = vec![vec![vec![linalg::ZERO; idx.len()]; idx.len()]; n_mu];
        for &mu in &present {
            let b = coupling.projector(mu);
            let bw: Vec<CVector> = wedges.iter().map(|w| b * w).collect();
            let members: Vec<usize> = range
                .clone()
                .enumerate()
                .filter(|&(_, i)| op.labels[i] == mu)
                .map(|(j, _)| j)
                .collect();
            for k in 0..idx.len() {
                for l in 0..idx.len() {
                    let fock = wedges[k].dotc(&bw[l]);
                    let via_minors: C64 = members
                        .iter()
                        .map(|&j| minor[(j, k)].conj() * minor[(j, l)])
                        .sum();
                    route = route.max((fock - via_minors).norm());
                    elements[mu][k][l] = fock;
                }
            }
        }
        let dmin = present
            .iter()
            .flat_map(|&mu| (0..idx.len()).map(move |k| (mu, k)))
            .map(|(mu, k)| elements[mu][k][k].norm())
            .fold(f64::INFINITY, f64::min);
        let mut omin = f64::INFINITY;
        for k in 0..idx.len() {
            for l in 0..idx.len() {
                if k != l {
                    let best = present
                        .iter()
                        .map(|&mu| elements[mu][k][l].norm())
                        .fold(0.0f64, f64::max);
                    omin = omin.min(best);
                }
            }
        }
        diag_min.push(dmin);
        off_min.push(omin);
        minors.push(minor);
    }
    Ok(MatrixElements {
        diag: DiagReport {
            holds: diag_min.iter().all(|&x| x > tol),
            min_per_sector: diag_min,
            tol,
        },
        offdiag: OffDiagReport {
            holds: off_min.iter().all(|&x| x > tol),
            min_per_sector: off_min,
            tol,
        },
        c_matrix: c,
        c_unitarity,
        minors,
        route_discrepancy: route,
        minor_discrepancy: minor_disc,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CycOutcome {
    Whole,
    Proper,
    Inconclusive,
}

#[derive(Clone, Debug, Serialize)]
pub struct CycSector {
    pub n: usize,
    pub outcome: CycOutcome,
    /// Spectral index of `μ` for the best triple.
    pub mu: usize,
    pub rank: usize,
    pub algebra_dim: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct CycReport {
    pub holds: bool,
    pub inconclusive: bool,
    pub sectors: Vec<CycSector>,
}

/// Orthonormal basis (columns) of the subspace spanned by vectorized
/// matrices, grown by Gram-Schmidt with re-orthogonalization.
struct SpanBasis {
    vecs: Vec<CVector>,
    tol: f64,
}

impl SpanBasis {
    fn insert(&mut self, m: &CMatrix) -> bool {
        let mut v = linalg::vectorize(m);
        let scale = v.norm();
        if scale == 0.0 {
            return false;
        }
        for _ in 0..2 {
            for b in &self.vecs {
                let c = b.dotc(&v);
                v -= b * c;
            }
        }
        let r = v.norm();
        if r <= self.tol * scale {
            return false;
        }
        self.vecs.push(v / real(r));
        true
    }
}

/// Dimension of the unital `*`-algebra generated by `gens` (r × r), with the
/// word length capped at `cap`.
fn algebra_dimension(gens: &[CMatrix], r: usize, cap: usize) -> (usize, CycOutcome) {
    let full = r * r;
    let mut span = SpanBasis {
        vecs: Vec::new(),
        tol: 1e-9,
    };
    let mut all_gens: Vec<CMatrix> = Vec::new();
    for g in gens {
        all_gens.push(g.clone());
        all_gens.push(g.adjoint());
    }
    let mut frontier = vec![linalg::identity(r)];
    span.insert(&frontier[0]);
    for g in &all_gens {
        if span.insert(g) {
            frontier.push(g.clone());
        }
    }
    let mut length = 1;
    while span.vecs.len() < full {
        if length >= cap {
            return (span.vecs.len(), CycOutcome::Inconclusive);
        }
        let mut next = Vec::new();
        for w in &frontier {
            for g in &all_gens {
                let p = w * g;
                if span.insert(&p) {
                    next.push(p);
                }
            }
        }
        if next.is_empty() {
            return (span.vecs.len(), CycOutcome::Proper);
        }
        frontier = next;
        length += 1;
    }
    (span.vecs.len(), CycOutcome::Whole)
}

/// `(Cyc)` for hopping-shaped couplings with three spectral values per sector.
pub fn check_cyc(v: &CMatrix, coupling: &CouplingModel, basis: &FockBasis) -> Result<CycReport> {
    coupling.require_one_particle()?;
    let gamma = basis.second_quantize_unitary(v)?;
    let d = basis.sites();
    let mut sectors = Vec::new();
    for n in 2..d {
        let range = basis.sector_range(n);
        let present: Vec<usize> = (0..coupling.spec.len())
            .filter(|&mu| coupling.sector_rank(basis, mu, n) > 0)
            .collect();
        if present.len() != 3 {
            return Err(Error::Unsupported(format!(
                "(Cyc) needs exactly three spectral values in sector {n}, found {}",
                present.len()
            )));
        }
        let g = gamma.view((range.start, range.start), (range.len(), range.len())).into_owned();
        let blocks: Vec<CMatrix> = present
            .iter()
            .map(|&mu| coupling.sector_block(basis, mu, n))
            .collect();
        let mut best: Option<CycSector> = None;
        for (a, &mu) in present.iter().enumerate() {
            // orthonormal basis of ran B_n^μ
            let (vals, vecs) = linalg::eigh(&blocks[a]);
            let cols: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] > 0.5).collect();
            let w = CMatrix::from_fn(range.len(), cols.len(), |i, j| vecs[(i, cols[j])]);
            let r = cols.len();
            let wd = w.adjoint();
            let mut gens = vec![&wd * &g * &w];
            for (b, _) in present.iter().enumerate().filter(|&(b, _)| b != a) {
                gens.push(&wd * &g * &blocks[b] * &g * &w);
            }
            let (dim, outcome) = algebra_dimension(&gens, r, 2 * r * r);
            let candidate = CycSector {
                n,
                outcome,
                mu,
                rank: r,
                algebra_dim: dim,
            };
            let better = match &best {
                None => true,
                Some(b) => rank_outcome(outcome) > rank_outcome(b.outcome),
            };
            if better {
                best = Some(candidate);
            }
        }
        sectors.push(best.expect("three candidates"));
    }
    Ok(CycReport {
        holds: sectors.iter().all(|s| s.outcome == CycOutcome::Whole),
        inconclusive: sectors.iter().any(|s| s.outcome == CycOutcome::Inconclusive),
        sectors,
    })
}

fn rank_outcome(o: CycOutcome) -> u8 {
    match o {
        CycOutcome::Proper => 0,
        CycOutcome::Inconclusive => 1,
        CycOutcome::Whole => 2,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AssumptionReport {
    pub snd: SndReport,
    pub mnd: MndReport,
    #[serde(flatten)]
    pub elements: MatrixElements,
    pub cyc: Option<CycReport>,
    pub top_in_kernel: bool,
}

impl AssumptionReport {
    /// `(SND)`, `(Diag)` and `(OffDiag)` together.
    pub fn main_hold(&self) -> bool {
        self.snd.holds && self.elements.diag.holds && self.elements.offdiag.holds
    }
}

pub fn check_assumptions(
    v: &CMatrix,
    coupling: &CouplingModel,
    basis: &FockBasis,
    tol: f64,
    with_cyc: bool,
) -> Result<AssumptionReport> {
    let cyc = if with_cyc {
        Some(check_cyc(v, coupling, basis)?)
    } else {
        None
    };
    Ok(AssumptionReport {
        snd: check_snd(v, basis, tol)?,
        mnd: check_mnd(coupling, basis),
        elements: check_matrix_elements(v, coupling, basis, tol)?,
        cyc,
        top_in_kernel: coupling.top_in_kernel(basis),
    })
}

/// `⊕_n binom(d,n)⁻¹ tr(ρ|_n) 𝟙_n`.
pub fn sector_average(rho: &CMatrix, basis: &FockBasis) -> CMatrix {
    let mut out = CMatrix::zeros(basis.dim(), basis.dim());
    for n in 0..=basis.sites() {
        let range = basis.sector_range(n);
        let tr: C64 = range.clone().map(|i| rho[(i, i)]).sum();
        let w = tr / real(range.len() as f64);
        for i in range {
            out[(i, i)] = w;
        }
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct SteadyState {
    #[serde(with = "serde_cmatrix")]
    pub closed_form: CMatrix,
    #[serde(with = "serde_cmatrix")]
    pub projected: CMatrix,
    /// `‖closed_form − P₁(ρ)‖` in operator norm.
    pub agreement: f64,
    /// Exponential convergence rate `γ/2`.
    pub rate: f64,
    pub top_in_kernel: bool,
}

/// Asymptotic state of `rho0`; refuses initial states with coherences between
/// `Ω` and `F` when `F ∈ ker T`.
pub fn steady_state(
    rho0: &CMatrix,
    split: &ContractionSplit,
    coupling: &CouplingModel,
    basis: &FockBasis,
) -> Result<SteadyState> {
    crate::dynamics::validate_density(rho0, basis.dim())?;
    let top_in_kernel = coupling.top_in_kernel(basis);
    if top_in_kernel {
        let f = basis.top();
        let c = rho0[(0, f)].norm().max(rho0[(f, 0)].norm());
        if c > 1e-12 {
            return Err(Error::HypothesisViolation(format!(
                "initial state has |<Omega|rho|F>| = {c:.3e}; the asymptotic state requires \
                 omega_S(|Omega><F|) = omega_S(|F><Omega|) = 0 when F lies in ker T"
            )));
        }
    }
    let closed_form = sector_average(rho0, basis);
    let projected = split.p1(rho0)?;
    Ok(SteadyState {
        agreement: linalg::op_norm(&(&closed_form - &projected)),
        closed_form,
        projected,
        rate: split.gamma_used / 2.0,
        top_in_kernel,
    })
}

/// Largest deviation of an element of `ran P₁` from the form `⊕ x_n 𝟙_n`.
pub fn invariant_structure_error(split: &ContractionSplit, basis: &FockBasis) -> Result<f64> {
    let cluster = split
        .cluster_at(ONE, PERIPHERAL_CLUSTER_TOL)
        .ok_or_else(|| Error::Numerical("eigenvalue 1 not found on the unit circle".into()))?;
    let n = basis.dim();
    let mut worst = 0.0f64;
    for col in cluster.basis.column_iter() {
        let x = linalg::unvectorize(&CVector::from(col), n);
        worst = worst.max(linalg::frob(&(&x - sector_average(&x, basis))));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::build_t_hop;
    use crate::dynamics::build_channel_maps;
    use crate::linalg::c64;

    fn diag_unitary(phases: &[f64]) -> CMatrix {
        CMatrix::from_diagonal(&CVector::from_iterator(
            phases.len(),
            phases.iter().map(|a| c64(a.cos(), a.sin())),
        ))
    }

    #[test]
    fn snd_identity_fails_generic_phases_pass() {
        let basis = FockBasis::new(3).unwrap();
        let r = check_snd(&linalg::identity(3), &basis, ASSUMPTION_TOL).unwrap();
        assert!(!r.holds);
        assert!(r.min_distance < 1e-12);
        let v = diag_unitary(&[0.5, 2.0f64.sqrt(), std::f64::consts::E]);
        assert!(check_snd(&v, &basis, ASSUMPTION_TOL).unwrap().holds);
    }

    #[test]
    fn split_for_identity_v_and_trivial_pinching() {
        // d = 2, τ = diag(1, 2): σ(T) = {0, 1, 2, 3} is simple, so Φ is the
        // full pinching onto the Fock basis; with V = 1 the contraction
        // 𝒱Φ = Φ has eigenvalues 0 and 1 only.
        let basis = FockBasis::new(2).unwrap();
        let tau = CMatrix::from_diagonal(&CVector::from_vec(vec![real(1.0), real(2.0)]));
        let c = crate::coupling::build_coupling(&tau, &basis, 1e-8).unwrap();
        let maps = build_channel_maps(&linalg::identity(2), &c, &basis).unwrap();
        let s = split_contraction(&maps, CIRCLE_TOL).unwrap();
        assert_eq!(s.peripheral_count, 4);
        assert_eq!(s.eigenvalue_one_multiplicity(), 4);
        assert!(s.orthogonality_error < 1e-10);
    }

    #[test]
    fn hop_split_properties() {
        let basis = FockBasis::new(3).unwrap();
        let c = build_t_hop(&basis, 0.3).unwrap();
        let v = {
            let h = CMatrix::from_fn(3, 3, |i, j| c64((i * j) as f64 * 0.37 + 0.1 * i as f64, (i as f64 - j as f64) * 0.71));
            let h = (&h + h.adjoint()) * real(0.5);
            let (w, u) = linalg::eigh(&h);
            &u * diag_unitary(&w) * u.adjoint()
        };
        let maps = build_channel_maps(&v, &c, &basis).unwrap();
        let s = split_contraction(&maps, CIRCLE_TOL).unwrap();
        assert!(s.orthogonality_error < 1e-8);
        assert!(s.peripheral_residual < 1e-8);
        let report = check_assumptions(&v, &c, &basis, ASSUMPTION_TOL, true).unwrap();
        assert!(report.elements.route_discrepancy < 1e-10);
        assert!(report.elements.minor_discrepancy < 1e-10);
        assert!(report.elements.c_unitarity < 1e-10);
        if report.main_hold() {
            let det = linalg::det(&v);
            assert!(s.peripheral_distance(&[ONE, det, det.conj()]) < 1e-8);
            assert_eq!(s.eigenvalue_one_multiplicity(), 4);
            assert!(invariant_structure_error(&s, &basis).unwrap() < 1e-8);
        }
        let bound = s.decay_bound(50);
        assert!(bound.holds());
    }
}
