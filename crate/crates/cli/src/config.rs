//! Experiment configuration: a TOML file, optionally layered on a named
//! preset, validated and resolved into core objects.

use std::path::Path;

use fqw_core::coupling::{build_coupling, build_t_hop, coupling_from_operator, CouplingModel};
use fqw_core::dynamics::{Mode, DEFAULT_PATH_BUDGET};
use fqw_core::error::{Error, Result};
use fqw_core::fock::{FockBasis, MAX_SITES};
use fqw_core::genericity::haar_sample;
use fqw_core::jsonmat::{from_json, JsonMatrix};
use fqw_core::linalg::{self, c64, real, CMatrix, CVector};
use fqw_core::reservoir::{ReservoirSymbol, SymbolSpec};
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const PRESETS: &[(&str, &str)] = &[
    ("hop", include_str!("../presets/hop.toml")),
    ("hop-d4", include_str!("../presets/hop-d4.toml")),
    ("thermal-flat", include_str!("../presets/thermal-flat.toml")),
    ("thermal-cosine", include_str!("../presets/thermal-cosine.toml")),
    ("diagonal-ris", include_str!("../presets/diagonal-ris.toml")),
    ("free", include_str!("../presets/free.toml")),
    ("genericity", include_str!("../presets/genericity.toml")),
];

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    pub d: usize,
    #[serde(default)]
    pub seed: u64,
    pub walk: WalkSource,
    pub coupling: CouplingSource,
    #[serde(default = "identity_symbol")]
    pub reservoir: SymbolSpec,
    #[serde(default)]
    pub propagate: PropagateConfig,
    #[serde(default)]
    pub spectral: SpectralConfig,
    #[serde(default)]
    pub converge: ConvergeConfig,
    #[serde(default)]
    pub genericity: GenericityConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output: OutputConfig,
}

fn identity_symbol() -> SymbolSpec {
    SymbolSpec::Identity
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum WalkSource {
    /// Haar sample `index` of the stream seeded by the top-level seed.
    Haar {
        #[serde(default)]
        index: u64,
    },
    /// `V = diag(e^{iα_j})` in the site basis.
    Diagonal { phases: Vec<f64> },
    Explicit { matrix: JsonMatrix },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CouplingSource {
    Hop {
        #[serde(default)]
        phi: f64,
    },
    /// One-particle `τ`, second quantized.
    Tau { matrix: JsonMatrix },
    /// An arbitrary Hermitian `T` on the Fock space.
    Operator { matrix: JsonMatrix },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeName {
    Exact,
    Truncated,
    Ris,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ObservableSpec {
    /// Hermitian with i.i.d. entries from the run seed, scaled to unit norm.
    RandomHermitian,
    Number,
    SiteNumber { site: usize },
    Explicit { matrix: JsonMatrix },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropagateConfig {
    pub lambdas: Vec<f64>,
    pub times: Vec<usize>,
    pub mode: ModeName,
    pub order: usize,
    pub prune_tol: f64,
    pub budget: f64,
    pub observable: ObservableSpec,
    /// Also run exact mode and report the difference.
    pub compare_exact: bool,
}

impl Default for PropagateConfig {
    fn default() -> Self {
        Self {
            lambdas: vec![2.0, 2.5, 3.0, 3.5, 4.0],
            times: vec![4],
            mode: ModeName::Exact,
            order: 1,
            prune_tol: 0.0,
            budget: DEFAULT_PATH_BUDGET,
            observable: ObservableSpec::RandomHermitian,
            compare_exact: true,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralConfig {
    /// Powers used to fit the decay constant; 0 skips the fit.
    pub n_max: usize,
    pub cyc: bool,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self {
            n_max: fqw_core::spectral::DEFAULT_N_MAX,
            cyc: true,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StateSpec {
    /// `|e_site⟩⟨e_site|` in the one-particle sector.
    Site { site: usize },
    /// Random density matrix supported in sector `n`.
    Sector { n: usize },
    MaximallyMixed,
    /// `(Ω + F)/√2`, coherent between the vacuum and the top vector.
    VacuumTop,
    Explicit { matrix: JsonMatrix },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergeConfig {
    pub lambda: f64,
    pub t_max: usize,
    pub mode: ModeName,
    pub order: usize,
    pub budget: f64,
    pub rho0: StateSpec,
}

impl Default for ConvergeConfig {
    fn default() -> Self {
        Self {
            lambda: 6.0,
            t_max: 60,
            mode: ModeName::Ris,
            order: 1,
            budget: DEFAULT_PATH_BUDGET,
            rho0: StateSpec::Site { site: 1 },
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenericityConfig {
    pub samples: u64,
    pub minor_threshold: f64,
}

impl Default for GenericityConfig {
    fn default() -> Self {
        Self {
            samples: 1000,
            minor_threshold: 1e-12,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub cluster: f64,
    pub circle: f64,
    pub assumption: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            cluster: fqw_core::coupling::CLUSTER_TOL,
            circle: fqw_core::spectral::CIRCLE_TOL,
            assumption: fqw_core::spectral::ASSUMPTION_TOL,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Include full result matrices in the JSON outputs.
    pub matrices: bool,
}

pub fn preset_source(name: &str) -> Result<&'static str> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, s)| *s)
        .ok_or_else(|| {
            let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
            Error::Config(format!("unknown preset '{name}'; available: {}", names.join(", ")))
        })
}

fn parse_table(text: &str, origin: &str) -> Result<toml::Table> {
    text.parse::<toml::Table>()
        .map_err(|e| Error::Config(format!("{origin}: {e}")))
}

/// Recursively overlay `top` on `base`.
fn merge(base: &mut toml::Table, top: toml::Table) {
    for (key, value) in top {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => {
                // a different `kind` replaces the whole variant
                if b.get("kind").is_some() && t.get("kind").is_some() && b.get("kind") != t.get("kind") {
                    *b = t;
                } else {
                    merge(b, t);
                }
            }
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

/// Parse a config text layered on `preset` (or on the preset it names).
pub fn parse_config(text: Option<&str>, origin: &str, preset: Option<&str>) -> Result<ExperimentConfig> {
    let user = match text {
        Some(t) => parse_table(t, origin)?,
        None => toml::Table::new(),
    };
    let preset_name = preset
        .map(str::to_string)
        .or_else(|| user.get("preset").and_then(|v| v.as_str()).map(str::to_string));
    let mut table = match &preset_name {
        Some(name) => parse_table(preset_source(name)?, &format!("preset '{name}'"))?,
        None => toml::Table::new(),
    };
    let cfg: ExperimentConfig = match (preset_name, text) {
        // no layering: report positions in the user's own file
        (None, Some(t)) => toml::from_str(t).map_err(|e| Error::Config(format!("{origin}: {e}")))?,
        (name, _) => {
            merge(&mut table, user);
            let label = name.as_deref().unwrap_or("").to_string();
            if let Some(name) = name {
                table.insert("preset".into(), toml::Value::String(name));
            }
            let merged = toml::to_string(&table).map_err(|e| Error::Config(e.to_string()))?;
            toml::from_str(&merged)
                .map_err(|e| Error::Config(format!("{origin} (layered on preset '{label}'): {e}")))?
        }
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: Option<&Path>, preset: Option<&str>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
            parse_config(Some(&text), &p.display().to_string(), preset)
        }
        None if preset.is_some() => parse_config(None, "preset", preset),
        None => Err(Error::Config("either --config or --preset is required".into())),
    }
}

fn finite(values: &[f64], what: &str) -> Result<()> {
    match values.iter().find(|x| !x.is_finite()) {
        Some(x) => Err(Error::Config(format!("{what} contains non-finite value {x}"))),
        None => Ok(()),
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.d > MAX_SITES {
            return Err(Error::Config(format!("d must be in 1..={MAX_SITES}, got {}", self.d)));
        }
        let p = &self.propagate;
        if p.lambdas.is_empty() || p.times.is_empty() {
            return Err(Error::Config("propagate.lambdas and propagate.times must be non-empty".into()));
        }
        finite(&p.lambdas, "propagate.lambdas")?;
        if !(p.prune_tol >= 0.0) || !(p.budget > 0.0) {
            return Err(Error::Config("propagate.prune_tol must be >= 0 and budget > 0".into()));
        }
        if p.mode == ModeName::Truncated && p.times.iter().any(|&t| p.order > t) {
            return Err(Error::Config(format!("truncation order {} exceeds a requested time", p.order)));
        }
        let c = &self.converge;
        finite(&[c.lambda], "converge.lambda")?;
        if !(c.budget > 0.0) {
            return Err(Error::Config("converge.budget must be > 0".into()));
        }
        let t = &self.tolerances;
        for (name, v) in [("cluster", t.cluster), ("circle", t.circle), ("assumption", t.assumption)] {
            if !(v > 0.0 && v < 0.1) {
                return Err(Error::Config(format!("tolerances.{name} must be in (0, 0.1), got {v}")));
            }
        }
        if let WalkSource::Diagonal { phases } = &self.walk {
            if phases.len() != self.d {
                return Err(Error::Config(format!("walk.phases needs {} entries, got {}", self.d, phases.len())));
            }
            finite(phases, "walk.phases")?;
        }
        Ok(())
    }

    /// SHA-256 of the resolved configuration in canonical JSON.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn basis(&self) -> Result<FockBasis> {
        FockBasis::new(self.d)
    }

    pub fn walk(&self) -> Result<CMatrix> {
        let v = match &self.walk {
            WalkSource::Haar { index } => haar_sample(self.d, self.seed, *index)?.u,
            WalkSource::Diagonal { phases } => CMatrix::from_diagonal(&CVector::from_iterator(
                self.d,
                phases.iter().map(|a| c64(a.cos(), a.sin())),
            )),
            WalkSource::Explicit { matrix } => from_json(matrix)?,
        };
        linalg::ensure_square(&v, self.d)?;
        linalg::ensure_unitary(&v, fqw_core::fock::INPUT_TOL)?;
        Ok(v)
    }

    pub fn coupling(&self, basis: &FockBasis) -> Result<CouplingModel> {
        match &self.coupling {
            CouplingSource::Hop { phi } => build_t_hop(basis, *phi),
            CouplingSource::Tau { matrix } => build_coupling(&from_json(matrix)?, basis, self.tolerances.cluster),
            CouplingSource::Operator { matrix } => {
                coupling_from_operator(&from_json(matrix)?, basis, self.tolerances.cluster)
            }
        }
    }

    pub fn symbol(&self) -> Result<ReservoirSymbol> {
        ReservoirSymbol::from_spec(&self.reservoir)
    }

    pub fn observable(&self, basis: &FockBasis) -> Result<CMatrix> {
        let n = basis.dim();
        match &self.propagate.observable {
            ObservableSpec::RandomHermitian => {
                let mut rng = fqw_core::genericity::sample_rng(self.seed, u64::MAX);
                let a = CMatrix::from_fn(n, n, |_, _| c64(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
                let h = (&a + a.adjoint()) * real(0.5);
                let norm = linalg::op_norm(&h);
                Ok(h / real(norm))
            }
            ObservableSpec::Number => Ok(basis.particle_number()),
            ObservableSpec::SiteNumber { site } => basis.number_op(*site),
            ObservableSpec::Explicit { matrix } => {
                let x = from_json(matrix)?;
                linalg::ensure_square(&x, n)?;
                Ok(x)
            }
        }
    }

    pub fn initial_state(&self, basis: &FockBasis) -> Result<CMatrix> {
        let n = basis.dim();
        let rho = match &self.converge.rho0 {
            StateSpec::Site { site } => {
                if *site == 0 || *site > self.d {
                    return Err(Error::Config(format!("converge.rho0.site must be in 1..={}", self.d)));
                }
                let idx = basis.sector_range(1).start + site - 1;
                let mut r = CMatrix::zeros(n, n);
                r[(idx, idx)] = linalg::ONE;
                r
            }
            StateSpec::Sector { n: k } => {
                if *k > self.d {
                    return Err(Error::Config(format!("converge.rho0.n must be <= {}", self.d)));
                }
                let range = basis.sector_range(*k);
                let m = range.len();
                let mut rng = fqw_core::genericity::sample_rng(self.seed, u64::MAX - 1);
                let a = CMatrix::from_fn(m, m, |_, _| c64(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
                let p = &a * a.adjoint();
                let p = &p / p.trace();
                let mut r = CMatrix::zeros(n, n);
                r.view_mut((range.start, range.start), (m, m)).copy_from(&p);
                r
            }
            StateSpec::MaximallyMixed => linalg::identity(n) / real(n as f64),
            StateSpec::VacuumTop => {
                let mut psi = CVector::zeros(n);
                psi[0] = real(std::f64::consts::FRAC_1_SQRT_2);
                psi[basis.top()] = real(std::f64::consts::FRAC_1_SQRT_2);
                &psi * psi.adjoint()
            }
            StateSpec::Explicit { matrix } => from_json(matrix)?,
        };
        fqw_core::dynamics::validate_density(&rho, n)?;
        Ok(rho)
    }
}

pub fn core_mode(name: ModeName, order: usize, prune_tol: f64) -> Mode {
    match name {
        ModeName::Exact => Mode::Exact { prune_tol },
        ModeName::Truncated => Mode::Truncated { order },
        ModeName::Ris => Mode::Ris,
    }
}
