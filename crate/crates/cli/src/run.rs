//! The four experiment drivers. Each writes its tables into the output
//! directory and returns a one-line summary.

use std::path::Path;

use fqw_core::coupling::{check_mnd, CouplingModel};
use fqw_core::dynamics::{self, build_channel_maps, ChannelMaps, Mode, PropagateOptions};
use fqw_core::error::Error;
use fqw_core::fock::FockBasis;
use fqw_core::genericity;
use fqw_core::linalg::{self, CMatrix, C64, ONE};
use fqw_core::spectral::{self, ContractionSplit, CycReport, DecayBound, MatrixElements, SndReport};
use serde::Serialize;

use crate::config::{core_mode, ExperimentConfig, ModeName};
use crate::output::{ensure_dir, num, opt, write_json, Provenance, Table};
use crate::Result;

/// Least-squares slope and intercept of `y` against `x`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Trace norm of a Hermitian matrix.
pub fn trace_norm(h: &CMatrix) -> f64 {
    let sym = (h + h.adjoint()) * linalg::real(0.5);
    linalg::eigh(&sym).0.iter().map(|x| x.abs()).sum()
}

struct Setup {
    basis: FockBasis,
    v: CMatrix,
    coupling: CouplingModel,
    maps: ChannelMaps,
}

fn setup(cfg: &ExperimentConfig) -> Result<Setup> {
    let basis = cfg.basis()?;
    let v = cfg.walk()?;
    let coupling = cfg.coupling(&basis)?;
    let maps = build_channel_maps(&v, &coupling, &basis)?;
    Ok(Setup {
        basis,
        v,
        coupling,
        maps,
    })
}

#[derive(Serialize)]
struct PropagateRecord {
    t: usize,
    lambda: f64,
    deviation_from_pinched: f64,
    deviation_from_free: f64,
    difference_to_exact: Option<f64>,
    #[serde(flatten)]
    meta: dynamics::PropagatorResult,
    #[serde(skip_serializing_if = "Option::is_none", with = "opt_matrix")]
    result: Option<CMatrix>,
}

mod opt_matrix {
    use fqw_core::jsonmat::to_json;
    use fqw_core::linalg::CMatrix;
    use serde::Serializer;

    pub fn serialize<S: Serializer>(m: &Option<CMatrix>, s: S) -> Result<S::Ok, S::Error> {
        match m {
            Some(m) => s.serialize_some(&to_json(m)),
            None => s.serialize_none(),
        }
    }
}

#[derive(Serialize)]
struct FitRecord {
    t: usize,
    slope: f64,
    intercept: f64,
    points: usize,
    predicted_slope: f64,
}

#[derive(Serialize)]
struct PropagateBody {
    records: Vec<PropagateRecord>,
    fits: Vec<FitRecord>,
}

pub fn run_propagate(cfg: &ExperimentConfig, out: &Path) -> Result<String> {
    let out = ensure_dir(out)?;
    let prov = Provenance::new(cfg);
    let s = setup(cfg)?;
    let sym = cfg.symbol()?;
    let x = cfg.observable(&s.basis)?;
    let p = &cfg.propagate;
    let mode = core_mode(p.mode, p.order, p.prune_tol);
    let opts = PropagateOptions {
        budget: p.budget,
        ..Default::default()
    };
    let mut table = Table::new(&[
        "t",
        "lambda",
        "lambda_sq",
        "deviation_from_pinched",
        "deviation_from_free",
        "difference_to_exact",
        "paths_summed",
        "pruned_mass",
        "pruning_enabled",
        "symbol_min_eig",
    ]);
    let mut records = Vec::new();
    for &t in &p.times {
        let pinched = s.maps.apply_vphi_power(&x, t);
        let mut free = x.clone();
        for _ in 0..t {
            free = s.maps.apply_v(&free);
        }
        for &lambda in &p.lambdas {
            let r = dynamics::propagate(&s.maps, &sym, &x, t, lambda, mode, &opts)?;
            let dev = linalg::op_norm(&(&r.result - &pinched));
            let dev_free = linalg::op_norm(&(&r.result - &free));
            let to_exact = if p.compare_exact && p.mode != ModeName::Exact {
                match dynamics::propagate(&s.maps, &sym, &x, t, lambda, Mode::exact(), &opts) {
                    Ok(e) => Some(linalg::op_norm(&(&r.result - e.result))),
                    Err(Error::BudgetExceeded { .. }) => None,
                    Err(e) => return Err(e.into()),
                }
            } else {
                None
            };
            table.push(vec![
                t.to_string(),
                num(lambda),
                num(lambda * lambda),
                num(dev),
                num(dev_free),
                opt(to_exact),
                r.paths_summed.to_string(),
                num(r.pruned_mass),
                r.pruning_enabled.to_string(),
                num(r.symbol_min_eig),
            ]);
            let result = cfg.output.matrices.then(|| r.result.clone());
            records.push(PropagateRecord {
                t,
                lambda,
                deviation_from_pinched: dev,
                deviation_from_free: dev_free,
                difference_to_exact: to_exact,
                meta: r,
                result,
            });
        }
    }
    let mut fits = Vec::new();
    let mut fit_table = Table::new(&["t", "slope", "intercept", "points", "predicted_slope"]);
    for &t in &p.times {
        let (xs, ys): (Vec<f64>, Vec<f64>) = records
            .iter()
            .filter(|r| r.t == t && r.lambda != 0.0 && r.deviation_from_pinched > 0.0)
            .map(|r| (r.lambda * r.lambda, r.deviation_from_pinched.ln()))
            .unzip();
        if let Some((slope, intercept)) = linear_fit(&xs, &ys) {
            let predicted = -s.maps.gap() / 4.0;
            fit_table.push(vec![
                t.to_string(),
                num(slope),
                num(intercept),
                xs.len().to_string(),
                num(predicted),
            ]);
            fits.push(FitRecord {
                t,
                slope,
                intercept,
                points: xs.len(),
                predicted_slope: predicted,
            });
        }
    }
    let label = mode.label();
    table.write(&out.join("propagate.csv"), &prov, &label)?;
    fit_table.write(&out.join("propagate_fit.csv"), &prov, &label)?;
    write_json(&out.join("propagate.json"), &prov, cfg, &PropagateBody { records, fits })?;
    Ok(format!("propagate: {} rows written to {}", table.len(), out.display()))
}

#[derive(Clone, Debug, Serialize)]
pub struct SplitSummary {
    pub peripheral_count: usize,
    pub peripheral_values: Vec<[f64; 2]>,
    pub predicted_values: Vec<[f64; 2]>,
    pub peripheral_distance: f64,
    pub eigenvalue_one_multiplicity: usize,
    pub expected_eigenvalue_one_multiplicity: usize,
    pub max_interior_modulus: f64,
    pub gamma_raw: f64,
    pub gamma_used: f64,
    pub orthogonality_error: f64,
    pub decoupling_error: f64,
    pub peripheral_nonnormality: f64,
    pub peripheral_residual: f64,
    pub invariant_structure_error: Option<f64>,
    /// Fitted, not proven: the smallest `C` matching the computed powers.
    pub decay: Option<DecayBound>,
}

#[derive(Serialize)]
pub struct SpectralBody {
    pub snd: SndReport,
    pub mnd: fqw_core::coupling::MndReport,
    pub elements: Option<MatrixElements>,
    pub cyc: Option<CycReport>,
    pub assumptions_hold: Option<bool>,
    pub top_in_kernel: bool,
    pub split: SplitSummary,
}

fn pair(z: C64) -> [f64; 2] {
    [z.re, z.im]
}

/// Peripheral values predicted for `𝒱Φ`: `{1, det V, det V*}` when the top
/// vector lies in `ker T`, `{1}` otherwise.
pub fn predicted_peripheral(v: &CMatrix, top_in_kernel: bool) -> Vec<C64> {
    if top_in_kernel {
        let det = linalg::det(v);
        vec![ONE, det, det.conj()]
    } else {
        vec![ONE]
    }
}

pub fn summarize_split(
    split: &ContractionSplit,
    v: &CMatrix,
    basis: &FockBasis,
    top_in_kernel: bool,
    n_max: usize,
) -> SplitSummary {
    let predicted = predicted_peripheral(v, top_in_kernel);
    SplitSummary {
        peripheral_count: split.peripheral_count,
        peripheral_values: split.peripheral_values().into_iter().map(pair).collect(),
        predicted_values: predicted.iter().copied().map(pair).collect(),
        peripheral_distance: split.peripheral_distance(&predicted),
        eigenvalue_one_multiplicity: split.eigenvalue_one_multiplicity(),
        expected_eigenvalue_one_multiplicity: basis.sites() + 1,
        max_interior_modulus: split.subdominant_modulus,
        gamma_raw: split.gamma_raw,
        gamma_used: split.gamma_used,
        orthogonality_error: split.orthogonality_error,
        decoupling_error: split.decoupling_error,
        peripheral_nonnormality: split.peripheral_nonnormality,
        peripheral_residual: split.peripheral_residual,
        invariant_structure_error: spectral::invariant_structure_error(split, basis).ok(),
        decay: (n_max > 0).then(|| split.decay_bound(n_max)),
    }
}

pub fn spectral_body(cfg: &ExperimentConfig) -> Result<(SpectralBody, ContractionSplit)> {
    let s = setup(cfg)?;
    let tol = cfg.tolerances.assumption;
    let snd = spectral::check_snd(&s.v, &s.basis, tol)?;
    let mnd = check_mnd(&s.coupling, &s.basis);
    let (elements, cyc) = if s.coupling.is_second_quantized() {
        let el = spectral::check_matrix_elements(&s.v, &s.coupling, &s.basis, tol)?;
        let cyc = if cfg.spectral.cyc {
            match spectral::check_cyc(&s.v, &s.coupling, &s.basis) {
                Ok(r) => Some(r),
                Err(Error::Unsupported(msg)) => {
                    log::info!("(Cyc) skipped: {msg}");
                    None
                }
                Err(e) => return Err(e.into()),
            }
        } else {
            None
        };
        (Some(el), cyc)
    } else {
        (None, None)
    };
    let assumptions_hold = elements
        .as_ref()
        .map(|el| snd.holds && el.diag.holds && el.offdiag.holds);
    let top_in_kernel = s.coupling.top_in_kernel(&s.basis);
    let split = spectral::split_contraction(&s.maps, cfg.tolerances.circle)?;
    let summary = summarize_split(&split, &s.v, &s.basis, top_in_kernel, cfg.spectral.n_max);
    Ok((
        SpectralBody {
            snd,
            mnd,
            elements,
            cyc,
            assumptions_hold,
            top_in_kernel,
            split: summary,
        },
        split,
    ))
}

fn flag(b: Option<bool>) -> String {
    b.map(|b| b.to_string()).unwrap_or_default()
}

pub fn run_spectral(cfg: &ExperimentConfig, out: &Path) -> Result<String> {
    let out = ensure_dir(out)?;
    let prov = Provenance::new(cfg);
    let (body, split) = spectral_body(cfg)?;
    let mut spectrum = Table::new(&["index", "re", "im", "modulus", "phase", "classification"]);
    for (i, z) in split.eigenvalues.iter().enumerate() {
        let class = if i < split.peripheral_count { "peripheral" } else { "decaying" };
        spectrum.push(vec![
            i.to_string(),
            num(z.re),
            num(z.im),
            num(z.norm()),
            num(linalg::phase(*z)),
            class.into(),
        ]);
    }
    let sp = &body.split;
    let mut summary = Table::new(&[
        "snd",
        "mnd",
        "diag",
        "offdiag",
        "cyc",
        "assumptions_hold",
        "top_in_kernel",
        "peripheral_count",
        "peripheral_distance",
        "eigenvalue_one_multiplicity",
        "expected_multiplicity",
        "max_interior_modulus",
        "gamma_raw",
        "gamma_used",
        "c_bound_fitted",
        "orthogonality_error",
        "peripheral_residual",
        "invariant_structure_error",
    ]);
    summary.push(vec![
        body.snd.holds.to_string(),
        body.mnd.holds.to_string(),
        flag(body.elements.as_ref().map(|e| e.diag.holds)),
        flag(body.elements.as_ref().map(|e| e.offdiag.holds)),
        flag(body.cyc.as_ref().map(|c| c.holds)),
        flag(body.assumptions_hold),
        body.top_in_kernel.to_string(),
        sp.peripheral_count.to_string(),
        num(sp.peripheral_distance),
        sp.eigenvalue_one_multiplicity.to_string(),
        sp.expected_eigenvalue_one_multiplicity.to_string(),
        num(sp.max_interior_modulus),
        num(sp.gamma_raw),
        num(sp.gamma_used),
        opt(sp.decay.as_ref().map(|d| d.c_bound)),
        num(sp.orthogonality_error),
        num(sp.peripheral_residual),
        opt(sp.invariant_structure_error),
    ]);
    spectrum.write(&out.join("spectrum.csv"), &prov, "spectral")?;
    summary.write(&out.join("spectral_summary.csv"), &prov, "spectral")?;
    write_json(&out.join("assumptions.json"), &prov, cfg, &body)?;
    Ok(format!(
        "spectral: assumptions {}, peripheral distance {:.3e}, eigenvalue-1 multiplicity {}",
        match body.assumptions_hold {
            Some(true) => "hold",
            Some(false) => "fail",
            None => "n/a",
        },
        sp.peripheral_distance,
        sp.eigenvalue_one_multiplicity
    ))
}

#[derive(Serialize)]
struct ConvergeBody {
    steady_state: spectral::SteadyState,
    gamma_used: f64,
    c_bound_fitted: Option<f64>,
    terminal_distance: f64,
}

pub fn run_converge(cfg: &ExperimentConfig, out: &Path) -> Result<String> {
    let out = ensure_dir(out)?;
    let prov = Provenance::new(cfg);
    let s = setup(cfg)?;
    let sym = cfg.symbol()?;
    let rho0 = cfg.initial_state(&s.basis)?;
    let split = spectral::split_contraction(&s.maps, cfg.tolerances.circle)?;
    let steady = spectral::steady_state(&rho0, &split, &s.coupling, &s.basis)?;
    let c_bound = (cfg.spectral.n_max > 0).then(|| split.decay_bound(cfg.spectral.n_max).c_bound);
    let c = &cfg.converge;
    let mode = core_mode(c.mode, c.order, 0.0);
    let mut table = Table::new(&["t", "lambda", "distance", "pinched_distance", "reference_curve"]);
    let mut pinched = rho0.clone();
    let mut last = f64::NAN;
    for t in 0..=c.t_max {
        if t > 0 {
            pinched = s.maps.apply_vphi_dual_power(&pinched, 1);
        }
        let mode_t = match mode {
            Mode::Truncated { order } => Mode::Truncated { order: order.min(t) },
            m => m,
        };
        let state = dynamics::evolve_state(&s.maps, &sym, &rho0, t, c.lambda, mode_t, c.budget)?;
        last = trace_norm(&(&state.result - &steady.closed_form));
        let curve = c_bound.map(|cb| cb * (-split.gamma_used * t as f64 / 2.0).exp());
        table.push(vec![
            t.to_string(),
            num(c.lambda),
            num(last),
            num(trace_norm(&(&pinched - &steady.closed_form))),
            opt(curve),
        ]);
    }
    table.write(&out.join("converge.csv"), &prov, &mode.label())?;
    let body = ConvergeBody {
        gamma_used: split.gamma_used,
        c_bound_fitted: c_bound,
        terminal_distance: last,
        steady_state: steady,
    };
    write_json(&out.join("converge.json"), &prov, cfg, &body)?;
    Ok(format!("converge: distance {:.3e} at t = {}", last, c.t_max))
}

pub fn run_genericity(cfg: &ExperimentConfig, out: &Path) -> Result<String> {
    let out = ensure_dir(out)?;
    let prov = Provenance::new(cfg);
    let basis = cfg.basis()?;
    let coupling = cfg.coupling(&basis)?;
    let g = &cfg.genericity;
    let records = genericity::genericity_study(&coupling, &basis, cfg.seed, g.samples, cfg.tolerances.assumption)?;
    let summary = genericity::summarize(&records, g.minor_threshold);
    let mut columns: Vec<String> = vec!["seed".into(), "index".into(), "min_abs_minor".into()];
    columns.extend((1..=cfg.d).map(|n| format!("min_abs_minor_n{n}")));
    columns.extend(["snd", "diag", "offdiag", "passes", "snd_distance"].map(String::from));
    let refs: Vec<&str> = columns.iter().map(String::as_str).collect();
    let mut table = Table::new(&refs);
    for r in &records {
        let mut row = vec![cfg.seed.to_string(), r.index.to_string(), num(r.min_abs_minor)];
        row.extend((0..cfg.d).map(|i| r.per_size.get(i).copied().map(num).unwrap_or_default()));
        row.extend([
            r.snd.to_string(),
            r.diag.to_string(),
            r.offdiag.to_string(),
            r.passes().to_string(),
            num(r.snd_distance),
        ]);
        table.push(row);
    }
    table.write(&out.join("genericity.csv"), &prov, "genericity")?;
    write_json(&out.join("genericity.json"), &prov, cfg, &summary)?;
    Ok(format!(
        "genericity: {} samples, {} with a minor below {:e}, pass rate {:.4}",
        summary.samples, summary.small_minor_count, summary.minor_threshold, summary.pass_rate
    ))
}
