//! Haar-random unitaries and empirical checks that their minors, and the
//! spectral assumptions built from them, are generically non-degenerate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::coupling::CouplingModel;
use crate::error::{Error, Result};
use crate::fock::FockBasis;
use crate::linalg::{self, c64, CMatrix, C64};
use crate::spectral;

/// Full minor scans enumerate `Σ_n binom(d,n)²` determinants.
pub const MAX_SCAN_SITES: usize = 8;

/// RNG for sample `index` of a run with master `seed`: one ChaCha stream
/// per index, so samples do not depend on evaluation order.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Haar unitary: QR of a complex Ginibre matrix with the phases of `diag R`
/// moved back into `Q`.
pub fn haar_unitary<R: Rng>(d: usize, rng: &mut R) -> CMatrix {
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let z = CMatrix::from_fn(d, d, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c64(re * scale, im * scale)
    });
    let qr = z.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for k in 0..d {
        let rkk = r[(k, k)];
        let ph = if rkk.norm() > 0.0 { rkk / rkk.norm() } else { linalg::ONE };
        for i in 0..d {
            q[(i, k)] *= ph;
        }
    }
    q
}

#[derive(Clone, Debug, Serialize)]
pub struct MinorMin {
    pub n: usize,
    pub min_abs: f64,
    /// 0-based row and column sets attaining the minimum.
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct MinorScan {
    pub per_size: Vec<MinorMin>,
}

impl MinorScan {
    pub fn min_abs(&self) -> f64 {
        self.per_size.iter().map(|m| m.min_abs).fold(f64::INFINITY, f64::min)
    }
}

/// Smallest `|det U[J, K]|` over all `n × n` minors, for `n = 1..=n_max`.
pub fn minor_scan(u: &CMatrix, n_max: usize) -> Result<MinorScan> {
    let d = u.nrows();
    linalg::ensure_square(u, d)?;
    if n_max > d {
        return Err(Error::Config(format!("minor size {n_max} exceeds dimension {d}")));
    }
    if d > MAX_SCAN_SITES {
        return Err(Error::CombinatorialBudget(format!(
            "full minor scan needs d <= {MAX_SCAN_SITES}, got {d}"
        )));
    }
    let mut per_size = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let sets = linalg::combinations(d, n);
        let mut best = MinorMin {
            n,
            min_abs: f64::INFINITY,
            rows: Vec::new(),
            cols: Vec::new(),
        };
        for rows in &sets {
            for cols in &sets {
                let v = linalg::det(&linalg::submatrix(u, rows, cols)).norm();
                if v < best.min_abs {
                    best.min_abs = v;
                    best.rows.clone_from(rows);
                    best.cols.clone_from(cols);
                }
            }
        }
        per_size.push(best);
    }
    Ok(MinorScan { per_size })
}

#[derive(Clone, Debug, Serialize)]
pub struct HaarSample {
    pub seed: u64,
    pub index: u64,
    #[serde(with = "crate::jsonmat::serde_cmatrix")]
    pub u: CMatrix,
    /// Absent when `d` is too large for a full scan.
    pub minors: Option<MinorScan>,
}

impl HaarSample {
    pub fn min_abs_minor(&self) -> Option<f64> {
        self.minors.as_ref().map(MinorScan::min_abs)
    }
}

pub fn haar_sample(d: usize, seed: u64, index: u64) -> Result<HaarSample> {
    if d == 0 {
        return Err(Error::Config("d must be at least 1".into()));
    }
    let u = haar_unitary(d, &mut sample_rng(seed, index));
    let minors = if d <= MAX_SCAN_SITES {
        Some(minor_scan(&u, d)?)
    } else {
        None
    };
    Ok(HaarSample {
        seed,
        index,
        u,
        minors,
    })
}

/// Smallest singular value of the top-left `n × n` corner.
pub fn corner_smallest_singular(u: &CMatrix, n: usize) -> f64 {
    let corner = u.view((0, 0), (n, n)).into_owned();
    corner
        .singular_values()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

#[derive(Clone, Debug, Serialize)]
pub struct GenericityRecord {
    pub index: u64,
    pub min_abs_minor: f64,
    pub per_size: Vec<f64>,
    pub snd: bool,
    pub diag: bool,
    pub offdiag: bool,
    pub snd_distance: f64,
}

impl GenericityRecord {
    pub fn passes(&self) -> bool {
        self.snd && self.diag && self.offdiag
    }
}

pub fn genericity_record(
    sample: &HaarSample,
    coupling: &CouplingModel,
    basis: &FockBasis,
    tol: f64,
) -> Result<GenericityRecord> {
    let snd = spectral::check_snd(&sample.u, basis, tol)?;
    let el = spectral::check_matrix_elements(&sample.u, coupling, basis, tol)?;
    let per_size: Vec<f64> = sample
        .minors
        .as_ref()
        .map(|m| m.per_size.iter().map(|s| s.min_abs).collect())
        .unwrap_or_default();
    Ok(GenericityRecord {
        index: sample.index,
        min_abs_minor: sample.min_abs_minor().unwrap_or(f64::NAN),
        per_size,
        snd: snd.holds,
        diag: el.diag.holds,
        offdiag: el.offdiag.holds,
        snd_distance: snd.min_distance,
    })
}

/// `count` Haar samples of `V`, scanned for small minors and checked
/// against the assumptions for `coupling`. Records come back in index order
/// regardless of the thread count.
pub fn genericity_study(
    coupling: &CouplingModel,
    basis: &FockBasis,
    seed: u64,
    count: u64,
    tol: f64,
) -> Result<Vec<GenericityRecord>> {
    let d = basis.sites();
    (0..count)
        .into_par_iter()
        .map(|i| {
            let sample = haar_sample(d, seed, i)?;
            genericity_record(&sample, coupling, basis, tol)
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct GenericitySummary {
    pub samples: usize,
    pub small_minor_count: usize,
    pub minor_threshold: f64,
    pub pass_count: usize,
    pub pass_rate: f64,
    pub smallest_minor: f64,
}

pub fn summarize(records: &[GenericityRecord], minor_threshold: f64) -> GenericitySummary {
    let pass_count = records.iter().filter(|r| r.passes()).count();
    GenericitySummary {
        samples: records.len(),
        small_minor_count: records
            .iter()
            .filter(|r| !(r.min_abs_minor >= minor_threshold))
            .count(),
        minor_threshold,
        pass_count,
        pass_rate: if records.is_empty() {
            0.0
        } else {
            pass_count as f64 / records.len() as f64
        },
        smallest_minor: records
            .iter()
            .map(|r| r.min_abs_minor)
            .fold(f64::INFINITY, f64::min),
    }
}

/// Entry `(j, k)` of `U` as a phase-free magnitude, for moment checks.
pub fn entry_abs_sq(u: &CMatrix, j: usize, k: usize) -> f64 {
    let z: C64 = u[(j, k)];
    z.norm_sqr()
}
