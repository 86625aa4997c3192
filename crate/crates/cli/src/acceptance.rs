//! Acceptance criteria, runnable from `fqw verify` and from the `acceptance`
//! integration test. Each criterion returns a report instead of panicking so
//! that every line gets printed.

use std::fmt;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use fqw_core::coupling::{build_coupling, build_t_hop, CouplingModel, CLUSTER_TOL};
use fqw_core::dynamics::{
    build_channel_maps, evolve_state, propagate, propagator_superop, ChannelMaps, Mode, PropagateOptions,
};
use fqw_core::fock::FockBasis;
use fqw_core::genericity::{genericity_study, haar_unitary, sample_rng, summarize};
use fqw_core::linalg::{self, c64, real, CMatrix, CVector};
use fqw_core::reservoir::{thermal_kernel, Dispersion, ReservoirSymbol};
use fqw_core::spectral::{self, check_assumptions, ASSUMPTION_TOL, CIRCLE_TOL};
use fqw_core::superop::{cptp_verify, Superoperator};
use rand::Rng;

use crate::run::{linear_fit, predicted_peripheral, trace_norm};

/// Master seed of every random instance drawn here.
const SEED: u64 = 20_240_611;

#[derive(Clone, Debug)]
pub struct CriterionReport {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl fmt::Display for CriterionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} criterion {} ({}) in {:.2}s: {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.elapsed.as_secs_f64(),
            self.detail
        )
    }
}

pub const CRITERIA: [(usize, &str); 9] = [
    (1, "Fock-space construction"),
    (2, "channel structure and complete positivity"),
    (3, "exact, truncated and resolved modes agree"),
    (4, "zero coupling gives the free walk"),
    (5, "Gaussian suppression in the coupling strength"),
    (6, "peripheral spectrum"),
    (7, "asymptotic state"),
    (8, "genericity of Haar unitaries"),
    (9, "thread-count determinism"),
];

type Outcome = std::result::Result<(bool, String), String>;

pub fn run_criterion(id: usize, exe: &Path) -> CriterionReport {
    let start = Instant::now();
    let outcome: Outcome = match id {
        1 => c1(),
        2 => c2(),
        3 => c3(),
        4 => c4(),
        5 => c5(),
        6 => c6(),
        7 => c7(),
        8 => c8(),
        9 => c9(exe),
        _ => Err(format!("unknown criterion {id}")),
    };
    let elapsed = start.elapsed();
    let (mut passed, mut detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
    if let Some(limit) = time_limit(id) {
        if elapsed > limit {
            passed = false;
            detail.push_str(&format!("; exceeded the {}s limit", limit.as_secs()));
        }
    }
    CriterionReport {
        id,
        name: CRITERIA.iter().find(|c| c.0 == id).map_or("unknown", |c| c.1),
        passed,
        detail,
        elapsed,
    }
}

fn time_limit(id: usize) -> Option<Duration> {
    match id {
        1 => Some(Duration::from_secs(10)),
        2 => Some(Duration::from_secs(120)),
        5 => Some(Duration::from_secs(600)),
        _ => None,
    }
}

/// Runs the listed criteria in order, or all of them when `only` is empty.
pub fn run_selected(only: &[usize], exe: &Path) -> Vec<CriterionReport> {
    CRITERIA
        .iter()
        .map(|c| c.0)
        .filter(|id| only.is_empty() || only.contains(id))
        .map(|id| run_criterion(id, exe))
        .collect()
}

pub fn run_all(exe: &Path) -> Vec<CriterionReport> {
    run_selected(&[], exe)
}

fn err(e: impl fmt::Display) -> String {
    e.to_string()
}

fn random_hermitian(n: usize, rng: &mut impl Rng) -> CMatrix {
    let a = CMatrix::from_fn(n, n, |_, _| c64(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let h = (&a + a.adjoint()) * real(0.5);
    let norm = linalg::op_norm(&h);
    h * real(1.0 / norm)
}

fn random_vector(n: usize, rng: &mut impl Rng) -> CVector {
    CVector::from_fn(n, |_, _| c64(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

/// Random density matrix with no coherences between particle-number sectors.
fn sector_density(basis: &FockBasis, rng: &mut impl Rng) -> CMatrix {
    let n = basis.dim();
    let a = CMatrix::from_fn(n, n, |_, _| c64(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let mut rho = &a * a.adjoint();
    for i in 0..n {
        for j in 0..n {
            if basis.sector_of(i) != basis.sector_of(j) {
                rho[(i, j)] = linalg::ZERO;
            }
        }
    }
    let tr = rho.trace();
    rho / tr
}

fn anticommutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b + b * a
}

/// Haar walk for `coupling` satisfying the spectral assumptions: the first
/// passing index of the stream `seed`.
fn generic_walk(basis: &FockBasis, coupling: &CouplingModel, seed: u64) -> std::result::Result<(u64, CMatrix), String> {
    for index in 0..100 {
        let v = haar_unitary(basis.sites(), &mut sample_rng(seed, index));
        let report = check_assumptions(&v, coupling, basis, ASSUMPTION_TOL, false).map_err(err)?;
        if report.main_hold() {
            return Ok((index, v));
        }
    }
    Err("no Haar sample among the first 100 satisfies the assumptions".into())
}

fn c1() -> Outcome {
    let mut worst = [0.0f64; 4];
    for d in 2..=4 {
        let basis = FockBasis::new(d).map_err(err)?;
        let n = basis.dim();
        let id = linalg::identity(n);
        let a: Vec<CMatrix> = (1..=d).map(|j| basis.annihilation_op(j)).collect::<Result<_, _>>().map_err(err)?;
        for i in 0..d {
            for j in 0..d {
                let delta = if i == j { id.clone() } else { CMatrix::zeros(n, n) };
                worst[0] = worst[0]
                    .max(linalg::max_abs(&(anticommutator(&a[i], &a[j].adjoint()) - delta)))
                    .max(linalg::max_abs(&anticommutator(&a[i], &a[j])));
            }
        }
        for s in 0..5u64 {
            let mut rng = sample_rng(SEED, 100 * d as u64 + s);
            let u = haar_unitary(d, &mut rng);
            let v = haar_unitary(d, &mut rng);
            let gu = basis.second_quantize_unitary(&u).map_err(err)?;
            let gv = basis.second_quantize_unitary(&v).map_err(err)?;
            let guv = basis.second_quantize_unitary(&(&u * &v)).map_err(err)?;
            let gud = basis.second_quantize_unitary(&u.adjoint()).map_err(err)?;
            worst[1] = worst[1]
                .max(linalg::max_abs(&(&guv - &gu * &gv)))
                .max(linalg::max_abs(&(&gud - gu.adjoint())));
            let phi = random_vector(d, &mut rng);
            let lhs = &gu * basis.creation_of(&phi).map_err(err)? * gu.adjoint();
            let rhs = basis.creation_of(&(&u * &phi)).map_err(err)?;
            worst[2] = worst[2].max(linalg::max_abs(&(lhs - rhs)));
            for row in 0..n {
                for col in 0..n {
                    let (j, k) = (basis.occupied(row), basis.occupied(col));
                    let expected = if j.len() != k.len() {
                        linalg::ZERO
                    } else if j.is_empty() {
                        linalg::ONE
                    } else {
                        linalg::det(&linalg::submatrix(&u, &j, &k))
                    };
                    worst[3] = worst[3].max((gu[(row, col)] - expected).norm());
                }
            }
        }
    }
    let max = worst.iter().copied().fold(0.0, f64::max);
    Ok((
        max <= 1e-10,
        format!(
            "d = 2..4: CAR {:.1e}, homomorphism {:.1e}, Bogoliubov {:.1e}, minors {:.1e} (tol 1e-10)",
            worst[0], worst[1], worst[2], worst[3]
        ),
    ))
}

fn c2() -> Outcome {
    let mut structure = 0.0f64;
    let mut cptp_worst = 0.0f64;
    let mut choi_min = f64::INFINITY;
    for i in 0..20u64 {
        let mut rng = sample_rng(SEED, 200 + i);
        let (basis, coupling) = if i % 2 == 0 {
            let basis = FockBasis::new(2).map_err(err)?;
            let tau = random_hermitian(2, &mut rng);
            let c = build_coupling(&tau, &basis, CLUSTER_TOL).map_err(err)?;
            (basis, c)
        } else {
            let basis = FockBasis::new(3).map_err(err)?;
            let phi = rng.random_range(0.0..std::f64::consts::TAU);
            let c = build_t_hop(&basis, phi).map_err(err)?;
            (basis, c)
        };
        let v = haar_unitary(basis.sites(), &mut rng);
        let maps = build_channel_maps(&v, &coupling, &basis).map_err(err)?;
        structure = structure.max(superop_structure(&maps)?);
        let beta = rng.random_range(0.5..2.0);
        let sym = thermal_kernel(beta, 0.0, Dispersion::Flat { e0: 1.0 }).map_err(err)?;
        let t = 1 + (i as usize) % 4;
        let lambda = rng.random_range(0.5..3.0);
        let map = propagator_superop(&maps, &sym, t, lambda, Mode::exact(), &PropagateOptions::default())
            .map_err(err)?;
        let report = cptp_verify(&map).map_err(err)?;
        cptp_worst = cptp_worst.max(report.unital_error).max(report.trace_error);
        choi_min = choi_min.min(report.choi_min_eig);
    }
    Ok((
        structure <= 1e-10 && cptp_worst <= 1e-10 && choi_min >= -1e-10,
        format!(
            "20 instances: structure {structure:.1e}, unital/trace {cptp_worst:.1e}, min Choi eigenvalue {choi_min:.1e}"
        ),
    ))
}

/// Largest violation of: `𝒱` Hilbert-Schmidt unitary, `ℬ^{μν}` an orthogonal
/// resolution of the identity by self-adjoint maps, `Φ` an orthogonal projection.
fn superop_structure(maps: &ChannelMaps) -> std::result::Result<f64, String> {
    let n = maps.dim();
    let id = Superoperator::identity(n);
    let v = maps.superop_v().map_err(err)?;
    let mut worst = v.adjoint().compose(v).distance(&id);
    let k = maps.eigenvalues().len();
    let mut bs = Vec::with_capacity(k * k);
    for mu in 0..k {
        for nu in 0..k {
            bs.push(maps.superop_b(mu, nu).map_err(err)?);
        }
    }
    let mut sum = Superoperator::zero(n);
    for (i, b) in bs.iter().enumerate() {
        sum = &sum + b;
        worst = worst.max(b.adjoint().distance(b));
        for (j, c) in bs.iter().enumerate() {
            let prod = b.compose(c);
            let err = if i == j { prod.distance(b) } else { prod.norm() };
            worst = worst.max(err);
        }
    }
    worst = worst.max(sum.distance(&id));
    let phi = maps.superop_phi().map_err(err)?;
    worst = worst.max(phi.compose(phi).distance(phi)).max(phi.adjoint().distance(phi));
    Ok(worst)
}

fn hop_setup(seed: u64) -> std::result::Result<(FockBasis, CouplingModel, CMatrix, ChannelMaps), String> {
    let basis = FockBasis::new(3).map_err(err)?;
    let coupling = build_t_hop(&basis, 0.3).map_err(err)?;
    let (_, v) = generic_walk(&basis, &coupling, seed)?;
    let maps = build_channel_maps(&v, &coupling, &basis).map_err(err)?;
    Ok((basis, coupling, v, maps))
}

fn c3() -> Outcome {
    let (basis, _, _, maps) = hop_setup(SEED + 3)?;
    let mut rng = sample_rng(SEED, 300);
    let x = random_hermitian(basis.dim(), &mut rng);
    let values: Vec<f64> = (0..5).map(|_| rng.random_range(0.0..3.0)).collect();
    let diag = ReservoirSymbol::diagonal(values).map_err(err)?;
    let thermal = thermal_kernel(1.0, 0.0, Dispersion::Cosine { e0: 2.0, hopping: 0.5 }).map_err(err)?;
    let opts = PropagateOptions::default();
    let (mut trunc, mut ris) = (0.0f64, 0.0f64);
    for t in 1..=5 {
        for &lambda in &[0.7, 1.9] {
            let exact = propagate(&maps, &thermal, &x, t, lambda, Mode::exact(), &opts).map_err(err)?;
            let tr = propagate(&maps, &thermal, &x, t, lambda, Mode::Truncated { order: t }, &opts).map_err(err)?;
            trunc = trunc.max(linalg::op_norm(&(&exact.result - &tr.result)));
            let exact = propagate(&maps, &diag, &x, t, lambda, Mode::exact(), &opts).map_err(err)?;
            let r = propagate(&maps, &diag, &x, t, lambda, Mode::Ris, &opts).map_err(err)?;
            ris = ris.max(linalg::op_norm(&(&exact.result - &r.result)));
        }
    }
    Ok((
        trunc <= 1e-12 && ris <= 1e-12,
        format!("d = 3, t <= 5: exact vs truncated(t) {trunc:.1e}, exact vs resolved {ris:.1e} (tol 1e-12)"),
    ))
}

fn c4() -> Outcome {
    let (basis, _, _, maps) = hop_setup(SEED + 4)?;
    let mut rng = sample_rng(SEED, 400);
    let x = random_hermitian(basis.dim(), &mut rng);
    let thermal = thermal_kernel(0.8, 0.0, Dispersion::Flat { e0: 1.0 }).map_err(err)?;
    let identity = ReservoirSymbol::identity();
    let opts = PropagateOptions::default();
    let mut worst = 0.0f64;
    let mut free = x.clone();
    for t in 1..=5 {
        free = maps.apply_v(&free);
        let runs = [
            (&thermal, Mode::exact()),
            (&thermal, Mode::Truncated { order: t }),
            (&identity, Mode::Ris),
        ];
        for (sym, mode) in runs {
            let r = propagate(&maps, sym, &x, t, 0.0, mode, &opts).map_err(err)?;
            worst = worst.max(linalg::op_norm(&(&r.result - &free)));
        }
    }
    Ok((worst <= 1e-12, format!("max ||T_t(X) - V^t(X)|| = {worst:.1e} at lambda = 0 (tol 1e-12)")))
}

fn c5() -> Outcome {
    let (basis, _, _, maps) = hop_setup(SEED + 5)?;
    let mut rng = sample_rng(SEED, 500);
    let x = random_hermitian(basis.dim(), &mut rng);
    let sym = ReservoirSymbol::identity();
    let opts = PropagateOptions::default();
    let t = 4;
    let pinched = maps.apply_vphi_power(&x, t);
    let lambdas: Vec<f64> = (0..7).map(|i| 2.5 + 0.25 * i as f64).collect();
    let (mut xs, mut dev, mut rem) = (Vec::new(), Vec::new(), Vec::new());
    for &lambda in &lambdas {
        let exact = propagate(&maps, &sym, &x, t, lambda, Mode::exact(), &opts).map_err(err)?;
        let first = propagate(&maps, &sym, &x, t, lambda, Mode::Truncated { order: 1 }, &opts).map_err(err)?;
        xs.push(lambda * lambda);
        dev.push(linalg::op_norm(&(&exact.result - &pinched)).ln());
        rem.push(linalg::op_norm(&(&exact.result - &first.result)).ln());
    }
    let gap = maps.gap();
    let s_dev = linear_fit(&xs, &dev).ok_or("degenerate fit")?.0;
    let s_rem = linear_fit(&xs, &rem).ok_or("degenerate fit")?.0;
    let (b_dev, b_rem) = (-0.95 * gap / 4.0, -0.95 * gap / 2.0);
    Ok((
        s_dev <= b_dev && s_rem <= b_rem,
        format!(
            "t = 4, gap {gap}: slope {s_dev:.4} (need <= {b_dev:.4}), first-order remainder slope {s_rem:.4} (need <= {b_rem:.4})"
        ),
    ))
}

fn c6() -> Outcome {
    let mut worst_dist = 0.0f64;
    let mut mult_ok = true;
    let mut interior = 0.0f64;
    let mut decay_ok = true;
    for i in 0..50u64 {
        let d = if i < 25 { 3 } else { 4 };
        let basis = FockBasis::new(d).map_err(err)?;
        let coupling = build_t_hop(&basis, 0.3).map_err(err)?;
        let (_, v) = generic_walk(&basis, &coupling, SEED + 600 + i)?;
        let maps = build_channel_maps(&v, &coupling, &basis).map_err(err)?;
        let split = spectral::split_contraction(&maps, CIRCLE_TOL).map_err(err)?;
        let predicted = predicted_peripheral(&v, coupling.top_in_kernel(&basis));
        worst_dist = worst_dist.max(split.peripheral_distance(&predicted));
        mult_ok &= split.eigenvalue_one_multiplicity() == d + 1;
        interior = interior.max(split.subdominant_modulus);
        if d == 3 {
            decay_ok &= split.decay_bound(spectral::DEFAULT_N_MAX).holds();
        }
    }
    Ok((
        worst_dist < 1e-8 && mult_ok && decay_ok,
        format!(
            "50 instances (d = 3, 4): peripheral distance {worst_dist:.1e} (tol 1e-8), eigenvalue-1 multiplicity d+1: {mult_ok}, \
             decay fit holds (d = 3): {decay_ok}, largest interior modulus {interior:.6}"
        ),
    ))
}

fn c7() -> Outcome {
    let (basis, coupling, _, maps) = hop_setup(SEED + 7)?;
    let split = spectral::split_contraction(&maps, CIRCLE_TOL).map_err(err)?;
    let c_bound = split.decay_bound(spectral::DEFAULT_N_MAX).c_bound;
    let t_star = (2.0 * (c_bound / 1e-6).ln() / split.gamma_used).ceil().max(1.0) as usize;
    let mut rng = sample_rng(SEED, 700);
    let rho0 = sector_density(&basis, &mut rng);
    let ss = spectral::steady_state(&rho0, &split, &coupling, &basis).map_err(err)?;
    let pinched = maps.apply_vphi_dual_power(&rho0, t_star);
    let pinched_dist = trace_norm(&(&pinched - &ss.closed_form));
    let evolved = evolve_state(&maps, &ReservoirSymbol::identity(), &rho0, t_star, 6.0, Mode::Ris, 1e7).map_err(err)?;
    let ris_dist = trace_norm(&(&evolved.result - &ss.closed_form));

    // single-particle start: the limit of dΓ(h) is tr(h)/d
    let d = basis.sites();
    let psi = random_vector(d, &mut rng);
    let psi = &psi / c64(psi.norm(), 0.0);
    let mut rho1 = CMatrix::zeros(basis.dim(), basis.dim());
    let r1 = basis.sector_range(1);
    for i in r1.clone() {
        for j in r1.clone() {
            rho1[(i, j)] = psi[basis.occupied(i)[0]] * psi[basis.occupied(j)[0]].conj();
        }
    }
    let h = random_hermitian(d, &mut rng);
    let dh = basis.second_quantize_generator(&h).map_err(err)?;
    let ss1 = spectral::steady_state(&rho1, &split, &coupling, &basis).map_err(err)?;
    let limit = (&ss1.projected * &dh).trace().re;
    let expected = h.trace().re / d as f64;
    let obs_err = (limit - expected).abs();
    let agreement = ss.agreement.max(ss1.agreement);
    Ok((
        pinched_dist < 1e-6 && ris_dist < 1e-3 && agreement <= 1e-8 && obs_err <= 1e-8,
        format!(
            "t* = {t_star} (C = {c_bound:.3}, gamma = {:.4}): pinched distance {pinched_dist:.1e} (tol 1e-6), \
             resolved K = 1 at lambda = 6 {ris_dist:.1e} (tol 1e-3), closed form vs P1 {agreement:.1e}, \
             one-particle limit {obs_err:.1e} (tol 1e-8)",
            split.gamma_used
        ),
    ))
}

fn c8() -> Outcome {
    let basis = FockBasis::new(4).map_err(err)?;
    let coupling = build_t_hop(&basis, 0.3).map_err(err)?;
    let records = genericity_study(&coupling, &basis, 2024, 1000, 1e-10).map_err(err)?;
    let s = summarize(&records, 1e-12);
    Ok((
        s.small_minor_count == 0 && s.pass_rate > 0.99,
        format!(
            "1000 samples at d = 4: {} minors below 1e-12 (smallest {:.2e}), pass rate {:.3}",
            s.small_minor_count, s.smallest_minor, s.pass_rate
        ),
    ))
}

fn c9(exe: &Path) -> Outcome {
    let root = std::env::temp_dir().join(format!("fqw-determinism-{}", std::process::id()));
    let runs = [("propagate", "hop"), ("spectral", "hop"), ("genericity", "genericity")];
    let mut outputs: Vec<Vec<(String, Vec<u8>)>> = Vec::new();
    for threads in [1, 4, 8] {
        let out = root.join(format!("t{threads}"));
        for (cmd, preset) in runs {
            let status = Command::new(exe)
                .args([cmd, "--preset", preset, "--threads", &threads.to_string(), "--out"])
                .arg(&out)
                .output()
                .map_err(|e| format!("{}: {e}", exe.display()))?;
            if !status.status.success() {
                return Err(format!(
                    "{cmd} with {threads} threads failed: {}",
                    String::from_utf8_lossy(&status.stderr)
                ));
            }
        }
        let mut files = Vec::new();
        for entry in std::fs::read_dir(&out).map_err(err)? {
            let path = entry.map_err(err)?.path();
            let name = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
            files.push((name, std::fs::read(&path).map_err(err)?));
        }
        files.sort();
        outputs.push(files);
    }
    let _ = std::fs::remove_dir_all(&root);
    let same = outputs.windows(2).all(|w| w[0] == w[1]);
    Ok((
        same && !outputs[0].is_empty(),
        format!("{} files identical across 1, 4 and 8 threads: {same}", outputs[0].len()),
    ))
}
