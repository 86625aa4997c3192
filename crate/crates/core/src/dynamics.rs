//! Reduced fermionic propagator `𝒯ₜ`: exact Gaussian-weighted path sum,
//! large-coupling truncation, repeated-interaction factorization and the
//! dual (Schrödinger) evolution of states.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coupling::CouplingModel;
use crate::error::{Error, Result};
use crate::fock::{FermionOperator, FockBasis, INPUT_TOL};
use crate::linalg::{self, real, CMatrix};
use crate::reservoir::{self, ReservoirSymbol};
use crate::superop::Superoperator;

/// Default cap on the number of `(μ, ν)` path pairs in a path sum.
pub const DEFAULT_PATH_BUDGET: f64 = 1e7;

/// Superoperator matrices are materialized only up to this Fock dimension.
pub const SUPEROP_MAX_DIM: usize = 32;

const STRUCTURE_TOL: f64 = 1e-10;
const DENSITY_TOL: f64 = 1e-10;
const SPLIT_DEPTH: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum Mode {
    Exact { prune_tol: f64 },
    Truncated { order: usize },
    Ris,
}

impl Mode {
    pub fn exact() -> Self {
        Mode::Exact { prune_tol: 0.0 }
    }

    pub fn label(&self) -> String {
        match self {
            Mode::Exact { .. } => "exact".into(),
            Mode::Truncated { order } => format!("truncated({order})"),
            Mode::Ris => "ris".into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Picture {
    /// Observables, `X ↦ 𝒯ₜ(X)`.
    Heisenberg,
    /// States, through the Hilbert-Schmidt adjoint of `𝒯ₜ`.
    Schrodinger,
}

#[derive(Clone, Copy, Debug)]
pub struct PropagateOptions {
    pub budget: f64,
    pub picture: Picture,
}

impl Default for PropagateOptions {
    fn default() -> Self {
        Self {
            budget: DEFAULT_PATH_BUDGET,
            picture: Picture::Heisenberg,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PropagatorResult {
    #[serde(skip)]
    pub result: FermionOperator,
    pub mode: Mode,
    pub t: usize,
    pub lambda: f64,
    /// Leaf terms evaluated; for exact mode these are `(μ, ν)` path pairs.
    pub paths_summed: u64,
    /// Sum of weight bounds of skipped subtrees; `‖error‖ ≤ pruned_mass·‖X‖`.
    pub pruned_mass: f64,
    pub pruning_enabled: bool,
    /// Smallest eigenvalue of the reservoir section used.
    pub symbol_min_eig: f64,
    pub remainder_bound: Option<f64>,
}

/// Operator-level consistency of the channel building blocks.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct StructureReport {
    /// `‖Γ(V)*Γ(V) − 𝟙‖`; `𝒱` is Hilbert-Schmidt unitary iff this vanishes.
    pub v_unitarity: f64,
    /// `max ‖B^μ B^ν − δ_{μν} B^μ‖`.
    pub projector_orthogonality: f64,
    pub projector_completeness: f64,
    pub projector_hermiticity: f64,
    /// `‖Φ(𝟙) − 𝟙‖`.
    pub phi_unital: f64,
}

impl StructureReport {
    pub fn max_error(&self) -> f64 {
        [
            self.v_unitarity,
            self.projector_orthogonality,
            self.projector_completeness,
            self.projector_hermiticity,
            self.phi_unital,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Left and right multipliers for one step, `Y ↦ left[μ] Y right[ν]`.
#[derive(Clone, Debug)]
struct Sides {
    left: Vec<CMatrix>,
    right: Vec<CMatrix>,
}

#[derive(Clone, Debug)]
pub struct ChannelMaps {
    dim: usize,
    gamma_v: CMatrix,
    eigenvalues: Vec<f64>,
    projectors: Vec<CMatrix>,
    gap: f64,
    /// `Γ(V)* B^μ` and `B^ν Γ(V)`: one step `𝒱ℬ^{μν}`.
    heisenberg: Sides,
    /// `B^μ Γ(V)` and `Γ(V)* B^ν`: one step `ℬ^{μν}𝒱*`.
    schrodinger: Sides,
    superop_v: Option<Superoperator>,
    superop_phi: Option<Superoperator>,
    structure: StructureReport,
}

pub fn build_channel_maps(
    v: &CMatrix,
    coupling: &CouplingModel,
    basis: &FockBasis,
) -> Result<ChannelMaps> {
    let gamma_v = basis.second_quantize_unitary(v)?;
    ChannelMaps::from_parts(gamma_v, coupling)
}

impl ChannelMaps {
    /// Maps from an arbitrary unitary `Γ` on `F₋` and a coupling.
    pub fn from_parts(gamma_v: CMatrix, coupling: &CouplingModel) -> Result<Self> {
        let dim = coupling.t.nrows();
        linalg::ensure_square(&gamma_v, dim)?;
        linalg::ensure_unitary(&gamma_v, INPUT_TOL)?;
        let projectors = coupling.spec.projectors.clone();
        let gd = gamma_v.adjoint();
        let heisenberg = Sides {
            left: projectors.iter().map(|b| &gd * b).collect(),
            right: projectors.iter().map(|b| b * &gamma_v).collect(),
        };
        let schrodinger = Sides {
            left: projectors.iter().map(|b| b * &gamma_v).collect(),
            right: projectors.iter().map(|b| &gd * b).collect(),
        };
        let structure = structure_report(&gamma_v, &projectors);
        if structure.max_error() > STRUCTURE_TOL {
            return Err(Error::Numerical(format!(
                "channel building blocks inconsistent: {structure:?}"
            )));
        }
        let (superop_v, superop_phi) = if dim <= SUPEROP_MAX_DIM {
            let sv = Superoperator::sandwich(&gd, &gamma_v);
            let sphi = projectors
                .iter()
                .map(|b| Superoperator::sandwich(b, b))
                .reduce(|a, b| &a + &b)
                .expect("at least one projector");
            (Some(sv), Some(sphi))
        } else {
            (None, None)
        };
        Ok(Self {
            dim,
            gamma_v,
            eigenvalues: coupling.spec.eigenvalues.clone(),
            projectors,
            gap: coupling.gap,
            heisenberg,
            schrodinger,
            superop_v,
            superop_phi,
            structure,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn gamma_v(&self) -> &CMatrix {
        &self.gamma_v
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn projectors(&self) -> &[CMatrix] {
        &self.projectors
    }

    pub fn gap(&self) -> f64 {
        self.gap
    }

    pub fn structure(&self) -> &StructureReport {
        &self.structure
    }

    fn too_large(&self) -> Error {
        Error::Unsupported(format!(
            "superoperator matrices are only built for Fock dimension <= {SUPEROP_MAX_DIM}, got {}",
            self.dim
        ))
    }

    pub fn superop_v(&self) -> Result<&Superoperator> {
        self.superop_v.as_ref().ok_or_else(|| self.too_large())
    }

    pub fn superop_phi(&self) -> Result<&Superoperator> {
        self.superop_phi.as_ref().ok_or_else(|| self.too_large())
    }

    pub fn superop_vphi(&self) -> Result<Superoperator> {
        Ok(self.superop_v()?.compose(self.superop_phi()?))
    }

    /// `ℬ^{μν}(X) = B^μ X B^ν` for spectral indices `mu`, `nu`.
    pub fn superop_b(&self, mu: usize, nu: usize) -> Result<Superoperator> {
        if self.dim > SUPEROP_MAX_DIM {
            return Err(self.too_large());
        }
        Ok(Superoperator::sandwich(&self.projectors[mu], &self.projectors[nu]))
    }

    pub fn apply_v(&self, x: &CMatrix) -> CMatrix {
        self.gamma_v.adjoint() * x * &self.gamma_v
    }

    pub fn apply_v_dual(&self, x: &CMatrix) -> CMatrix {
        &self.gamma_v * x * self.gamma_v.adjoint()
    }

    pub fn apply_b(&self, mu: usize, nu: usize, x: &CMatrix) -> CMatrix {
        &self.projectors[mu] * x * &self.projectors[nu]
    }

    pub fn apply_phi(&self, x: &CMatrix) -> CMatrix {
        self.projectors.iter().fold(CMatrix::zeros(self.dim, self.dim), |acc, b| acc + b * x * b)
    }

    pub fn apply_vphi(&self, x: &CMatrix) -> CMatrix {
        self.apply_v(&self.apply_phi(x))
    }

    /// `(𝒱Φ)ᵗ(X)`.
    pub fn apply_vphi_power(&self, x: &CMatrix, t: usize) -> CMatrix {
        (0..t).fold(x.clone(), |y, _| self.apply_vphi(&y))
    }

    /// `(Φ𝒱*)ᵗ(ρ)`, the dual of `(𝒱Φ)ᵗ`.
    pub fn apply_vphi_dual_power(&self, rho: &CMatrix, t: usize) -> CMatrix {
        (0..t).fold(rho.clone(), |y, _| self.apply_phi(&self.apply_v_dual(&y)))
    }

    fn sides(&self, picture: Picture) -> &Sides {
        match picture {
            Picture::Heisenberg => &self.heisenberg,
            Picture::Schrodinger => &self.schrodinger,
        }
    }
}

fn structure_report(gamma_v: &CMatrix, projectors: &[CMatrix]) -> StructureReport {
    let n = gamma_v.nrows();
    let id = linalg::identity(n);
    let mut orth = 0.0f64;
    let mut herm = 0.0f64;
    let mut sum = CMatrix::zeros(n, n);
    let mut phi_one = CMatrix::zeros(n, n);
    for (i, p) in projectors.iter().enumerate() {
        herm = herm.max(linalg::frob(&(p - p.adjoint())));
        for (j, q) in projectors.iter().enumerate() {
            let prod = p * q;
            let err = if i == j { linalg::frob(&(prod - p)) } else { linalg::frob(&prod) };
            orth = orth.max(err);
        }
        sum += p;
        phi_one += p * p;
    }
    StructureReport {
        v_unitarity: linalg::frob(&(gamma_v.adjoint() * gamma_v - &id)),
        projector_orthogonality: orth,
        projector_completeness: linalg::frob(&(sum - &id)),
        projector_hermiticity: herm,
        phi_unital: linalg::op_norm(&(phi_one - &id)),
    }
}

/// Compensated elementwise accumulator for complex matrices.
#[derive(Clone, Debug)]
struct KahanMatrix {
    sum: CMatrix,
    comp: CMatrix,
}

impl KahanMatrix {
    fn zeros(n: usize) -> Self {
        Self {
            sum: CMatrix::zeros(n, n),
            comp: CMatrix::zeros(n, n),
        }
    }

    fn add_scaled(&mut self, y: &CMatrix, w: f64) {
        let s = self.sum.as_mut_slice();
        let c = self.comp.as_mut_slice();
        for ((s, c), v) in s.iter_mut().zip(c.iter_mut()).zip(y.as_slice()) {
            kahan_step(&mut s.re, &mut c.re, w * v.re);
            kahan_step(&mut s.im, &mut c.im, w * v.im);
        }
    }

    fn merge(&mut self, other: &KahanMatrix) {
        self.add_scaled(&other.sum, 1.0);
        self.add_scaled(&other.comp, -1.0);
    }

    fn value(&self) -> CMatrix {
        &self.sum - &self.comp
    }
}

fn kahan_step(sum: &mut f64, comp: &mut f64, value: f64) {
    let y = value - *comp;
    let t = *sum + y;
    *comp = (t - *sum) - y;
    *sum = t;
}

#[derive(Clone, Debug)]
struct Partial {
    acc: KahanMatrix,
    paths: u64,
    pruned: f64,
}

impl Partial {
    fn new(n: usize) -> Self {
        Self {
            acc: KahanMatrix::zeros(n),
            paths: 0,
            pruned: 0.0,
        }
    }

    fn merge(&mut self, other: &Partial) {
        self.acc.merge(&other.acc);
        self.paths += other.paths;
        self.pruned += other.pruned;
    }
}

/// Partial path: reservoir offsets assigned so far and the running quadratic
/// form `⟨Θ, KΘ⟩` together with `‖Θ‖²`.
#[derive(Clone, Debug)]
struct PathState {
    theta: Vec<f64>,
    q: f64,
    norm2: f64,
    offdiag: usize,
}

enum Child {
    Node(PathState, CMatrix),
    Pruned(f64),
}

struct Walker<'a> {
    sides: &'a Sides,
    eig: &'a [f64],
    section: &'a DMatrix<f64>,
    /// Reservoir slot (0-based) visited at each depth.
    slots: Vec<usize>,
    lambda2: f64,
    prune_tol: f64,
    /// `None`: enumerate all `(μ, ν)`; `Some(s)`: aggregate diagonal slots
    /// into `Φ` and allow at most `s` off-diagonal slots.
    max_offdiag: Option<usize>,
}

impl Walker<'_> {
    fn assign(&self, state: &PathState, depth: usize, theta: f64) -> PathState {
        let slot = self.slots[depth];
        let mut next = state.clone();
        if theta != 0.0 {
            let cross: f64 = self.slots[..depth]
                .iter()
                .map(|&j| self.section[(slot, j)] * state.theta[j])
                .sum();
            next.q += theta * theta * self.section[(slot, slot)] + 2.0 * theta * cross;
            next.norm2 += theta * theta;
            next.offdiag += 1;
            next.theta[slot] = theta;
        }
        next
    }

    /// Leaves under a node at `depth` (after assigning `depth` slots).
    fn leaves_below(&self, depth: usize, offdiag: usize) -> f64 {
        let k = self.eig.len() as f64;
        let remaining = self.slots.len() - depth;
        match self.max_offdiag {
            None => (k * k).powi(remaining as i32),
            Some(s) => {
                let m = k * k - k;
                let free = s.saturating_sub(offdiag).min(remaining);
                (0..=free)
                    .map(|j| linalg::binomial(remaining, j) as f64 * m.powi(j as i32))
                    .sum()
            }
        }
    }

    fn children(&self, depth: usize, state: &PathState, y: &CMatrix) -> Vec<Child> {
        let k = self.eig.len();
        let mut out = Vec::with_capacity(k * k);
        let push = |out: &mut Vec<Child>, theta: f64, make: &dyn Fn() -> CMatrix| {
            let next = self.assign(state, depth, theta);
            if theta != 0.0 && self.prune_tol > 0.0 {
                let bound = (-0.25 * self.lambda2 * next.norm2).exp();
                if bound < self.prune_tol {
                    out.push(Child::Pruned(bound * self.leaves_below(depth + 1, next.offdiag)));
                    return;
                }
            }
            out.push(Child::Node(next, make()));
        };
        match self.max_offdiag {
            None => {
                for mu in 0..k {
                    let ly = &self.sides.left[mu] * y;
                    for nu in 0..k {
                        let theta = self.eig[mu] - self.eig[nu];
                        push(&mut out, theta, &|| &ly * &self.sides.right[nu]);
                    }
                }
            }
            Some(s) => {
                push(&mut out, 0.0, &|| {
                    (0..k).fold(CMatrix::zeros(y.nrows(), y.ncols()), |acc, mu| {
                        acc + &self.sides.left[mu] * y * &self.sides.right[mu]
                    })
                });
                if state.offdiag < s {
                    for mu in 0..k {
                        let ly = &self.sides.left[mu] * y;
                        for nu in (0..k).filter(|&nu| nu != mu) {
                            let theta = self.eig[mu] - self.eig[nu];
                            push(&mut out, theta, &|| &ly * &self.sides.right[nu]);
                        }
                    }
                }
            }
        }
        out
    }

    fn leaf(&self, state: &PathState, y: &CMatrix, out: &mut Partial) {
        let w = if self.lambda2 == 0.0 {
            1.0
        } else {
            (-0.25 * self.lambda2 * state.q).exp()
        };
        out.acc.add_scaled(y, w);
        out.paths += 1;
    }

    fn dfs(&self, depth: usize, state: &PathState, y: &CMatrix, out: &mut Partial) {
        if depth == self.slots.len() {
            self.leaf(state, y, out);
            return;
        }
        for child in self.children(depth, state, y) {
            match child {
                Child::Node(s, z) => self.dfs(depth + 1, &s, &z, out),
                Child::Pruned(m) => out.pruned += m,
            }
        }
    }

    /// Expand the first levels sequentially, run subtrees in parallel and
    /// merge the partial sums in enumeration order.
    fn run(&self, x: &CMatrix) -> Partial {
        let n = x.nrows();
        let t = self.slots.len();
        let root = PathState {
            theta: vec![0.0; t],
            q: 0.0,
            norm2: 0.0,
            offdiag: 0,
        };
        let mut head = Partial::new(n);
        let mut frontier = vec![(root, x.clone())];
        let split = SPLIT_DEPTH.min(t);
        for depth in 0..split {
            let mut next = Vec::new();
            for (state, y) in &frontier {
                for child in self.children(depth, state, y) {
                    match child {
                        Child::Node(s, z) => next.push((s, z)),
                        Child::Pruned(m) => head.pruned += m,
                    }
                }
            }
            frontier = next;
        }
        let partials: Vec<Partial> = frontier
            .par_iter()
            .map(|(state, y)| {
                let mut p = Partial::new(n);
                self.dfs(split, state, y, &mut p);
                p
            })
            .collect();
        let mut total = head;
        for p in &partials {
            total.merge(p);
        }
        total
    }
}

fn check_operator(maps: &ChannelMaps, x: &CMatrix) -> Result<()> {
    linalg::ensure_square(x, maps.dim)
}

fn slot_order(t: usize, picture: Picture) -> Vec<usize> {
    match picture {
        Picture::Heisenberg => (0..t).rev().collect(),
        Picture::Schrodinger => (0..t).collect(),
    }
}

/// Number of leaf terms a mode evaluates at time `t`.
pub fn path_count(n_eig: usize, t: usize, mode: &Mode) -> f64 {
    let k = n_eig as f64;
    match *mode {
        Mode::Exact { .. } => (k * k).powi(t as i32),
        Mode::Truncated { order } => {
            let m = k * k - k;
            (0..=order.min(t))
                .map(|j| linalg::binomial(t, j) as f64 * m.powi(j as i32))
                .sum()
        }
        Mode::Ris => (t as f64) * k * k,
    }
}

/// `𝒯ₜ(X)` (or its dual on states) in the requested mode.
pub fn propagate(
    maps: &ChannelMaps,
    sym: &ReservoirSymbol,
    x: &CMatrix,
    t: usize,
    lambda: f64,
    mode: Mode,
    opts: &PropagateOptions,
) -> Result<PropagatorResult> {
    check_operator(maps, x)?;
    if !lambda.is_finite() {
        return Err(Error::Config(format!("coupling strength must be finite, got {lambda}")));
    }
    let mut result = PropagatorResult {
        result: x.clone(),
        mode,
        t,
        lambda,
        paths_summed: 0,
        pruned_mass: 0.0,
        pruning_enabled: false,
        symbol_min_eig: f64::NAN,
        remainder_bound: None,
    };
    if t == 0 {
        result.paths_summed = 1;
        return Ok(result);
    }
    let paths = path_count(maps.eigenvalues.len(), t, &mode);
    if paths > opts.budget {
        return Err(Error::BudgetExceeded {
            paths,
            budget: opts.budget,
        });
    }
    let section = sym.section(t)?;
    result.symbol_min_eig = reservoir::section_min_eigenvalue(&section);
    let sides = maps.sides(opts.picture);
    let (prune_tol, max_offdiag) = match mode {
        Mode::Ris => {
            let k = sym.diagonal_section(t)?;
            let mut y = x.clone();
            for slot in slot_order(t, opts.picture) {
                y = ris_step(sides, &maps.eigenvalues, &y, (-0.25 * lambda * lambda * k[slot]).exp());
            }
            result.result = y;
            result.paths_summed = paths as u64;
            return Ok(result);
        }
        Mode::Exact { prune_tol } => (prune_tol, None),
        Mode::Truncated { order } => {
            if order > t {
                return Err(Error::Config(format!("truncation order {order} exceeds t = {t}")));
            }
            (0.0, Some(order))
        }
    };
    if !(prune_tol >= 0.0) {
        return Err(Error::Config(format!("prune tolerance must be >= 0, got {prune_tol}")));
    }
    let mut prune = prune_tol;
    if prune > 0.0 && result.symbol_min_eig < 1.0 - 1e-10 {
        log::warn!("K >= 1 fails on the {t}-section; pruning disabled");
        prune = 0.0;
    }
    result.pruning_enabled = prune > 0.0;
    let walker = Walker {
        sides,
        eig: &maps.eigenvalues,
        section: &section,
        slots: slot_order(t, opts.picture),
        lambda2: lambda * lambda,
        prune_tol: prune,
        max_offdiag,
    };
    let total = walker.run(x);
    result.result = total.acc.value();
    result.paths_summed = total.paths;
    result.pruned_mass = total.pruned;
    Ok(result)
}

fn ris_step(sides: &Sides, eig: &[f64], y: &CMatrix, kappa: f64) -> CMatrix {
    let k = eig.len();
    let mut out = CMatrix::zeros(y.nrows(), y.ncols());
    for mu in 0..k {
        let ly = &sides.left[mu] * y;
        for nu in 0..k {
            let d = eig[mu] - eig[nu];
            let w = if d == 0.0 { 1.0 } else { kappa.powf(d * d) };
            if w != 0.0 {
                out += &ly * &sides.right[nu] * real(w);
            }
        }
    }
    out
}

pub fn exact_propagate(
    maps: &ChannelMaps,
    sym: &ReservoirSymbol,
    x: &CMatrix,
    t: usize,
    lambda: f64,
    prune_tol: f64,
) -> Result<PropagatorResult> {
    propagate(maps, sym, x, t, lambda, Mode::Exact { prune_tol }, &PropagateOptions::default())
}

pub fn truncated_propagate(
    maps: &ChannelMaps,
    sym: &ReservoirSymbol,
    x: &CMatrix,
    t: usize,
    lambda: f64,
    order: usize,
) -> Result<PropagatorResult> {
    propagate(maps, sym, x, t, lambda, Mode::Truncated { order }, &PropagateOptions::default())
}

pub fn ris_propagate(
    maps: &ChannelMaps,
    sym: &ReservoirSymbol,
    x: &CMatrix,
    t: usize,
    lambda: f64,
) -> Result<PropagatorResult> {
    propagate(maps, sym, x, t, lambda, Mode::Ris, &PropagateOptions::default())
}

/// Checks that `rho` is a density matrix on `F₋`.
pub fn validate_density(rho: &CMatrix, dim: usize) -> Result<()> {
    if rho.nrows() != dim || rho.ncols() != dim {
        return Err(Error::InvalidDensity(format!(
            "expected a {dim}x{dim} matrix, got {}x{}",
            rho.nrows(),
            rho.ncols()
        )));
    }
    let herm = linalg::frob(&(rho - rho.adjoint()));
    if herm > DENSITY_TOL {
        return Err(Error::InvalidDensity(format!("not Hermitian (deviation {herm:.3e})")));
    }
    let tr = rho.trace();
    if (tr - linalg::ONE).norm() > DENSITY_TOL {
        return Err(Error::InvalidDensity(format!("trace is {tr}, expected 1")));
    }
    let min = linalg::min_eigh(&((rho + rho.adjoint()) * real(0.5)));
    if min < -DENSITY_TOL {
        return Err(Error::InvalidDensity(format!("negative eigenvalue {min:.3e}")));
    }
    Ok(())
}

/// State at time `t`: the Hilbert-Schmidt adjoint of `𝒯ₜ` applied to `rho`.
pub fn evolve_state(
    maps: &ChannelMaps,
    sym: &ReservoirSymbol,
    rho: &CMatrix,
    t: usize,
    lambda: f64,
    mode: Mode,
    budget: f64,
) -> Result<PropagatorResult> {
    validate_density(rho, maps.dim)?;
    let opts = PropagateOptions {
        budget,
        picture: Picture::Schrodinger,
    };
    propagate(maps, sym, rho, t, lambda, mode, &opts)
}

/// Superoperator matrix of `𝒯ₜ` (or of its dual), assembled column by column.
pub fn propagator_superop(
    maps: &ChannelMaps,
    sym: &ReservoirSymbol,
    t: usize,
    lambda: f64,
    mode: Mode,
    opts: &PropagateOptions,
) -> Result<Superoperator> {
    let n = maps.dim;
    if n > SUPEROP_MAX_DIM {
        return Err(maps.too_large());
    }
    let columns: Vec<Result<CMatrix>> = (0..n * n)
        .into_par_iter()
        .map(|col| {
            let mut e = CMatrix::zeros(n, n);
            e[(col % n, col / n)] = linalg::ONE;
            propagate(maps, sym, &e, t, lambda, mode, opts).map(|r| r.result)
        })
        .collect();
    let mut m = CMatrix::zeros(n * n, n * n);
    for (col, image) in columns.into_iter().enumerate() {
        m.set_column(col, &linalg::vectorize(&image?));
    }
    Superoperator::from_matrix(n, m)
}

/// Fitted remainder model `C_fit t² e^{−γt/2} e^{−Δλ²(s+1)/4} ‖X‖`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct RemainderModel {
    pub c_fit: f64,
    pub gamma: f64,
    pub gap: f64,
}

impl RemainderModel {
    pub fn shape(&self, t: usize, order: usize, lambda: f64) -> f64 {
        let t = t as f64;
        t * t * (-0.5 * self.gamma * t).exp() * (-0.25 * self.gap * lambda * lambda * (order as f64 + 1.0)).exp()
    }

    pub fn bound(&self, t: usize, order: usize, lambda: f64, x_norm: f64) -> f64 {
        if order >= t {
            return 0.0;
        }
        self.c_fit * self.shape(t, order, lambda) * x_norm
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RemainderSample {
    pub lambda: f64,
    /// `‖𝒯ₜ(X) − truncated_s(X)‖ / ‖X‖`.
    pub actual: f64,
    pub shape: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RemainderCalibration {
    pub model: RemainderModel,
    pub samples: Vec<RemainderSample>,
}

/// Fit `C_fit` as the smallest constant for which the model bounds every
/// calibration sample.
#[allow(clippy::too_many_arguments)]
pub fn calibrate_remainder(
    maps: &ChannelMaps,
    sym: &ReservoirSymbol,
    x: &CMatrix,
    t: usize,
    order: usize,
    lambdas: &[f64],
    gamma: f64,
    opts: &PropagateOptions,
) -> Result<RemainderCalibration> {
    let x_norm = linalg::op_norm(x);
    if x_norm == 0.0 {
        return Err(Error::Config("calibration observable must be non-zero".into()));
    }
    let mut model = RemainderModel {
        c_fit: 0.0,
        gamma,
        gap: maps.gap,
    };
    let mut samples = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let exact = propagate(maps, sym, x, t, lambda, Mode::exact(), opts)?;
        let trunc = propagate(maps, sym, x, t, lambda, Mode::Truncated { order }, opts)?;
        let actual = linalg::op_norm(&(exact.result - trunc.result)) / x_norm;
        let shape = model.shape(t, order, lambda);
        if shape > 0.0 {
            model.c_fit = model.c_fit.max(actual / shape);
        }
        samples.push(RemainderSample {
            lambda,
            actual,
            shape,
        });
    }
    Ok(RemainderCalibration { model, samples })
}

/// Truncated propagation with the remainder certificate filled in.
#[allow(clippy::too_many_arguments)]
pub fn truncated_propagate_certified(
    maps: &ChannelMaps,
    sym: &ReservoirSymbol,
    x: &CMatrix,
    t: usize,
    lambda: f64,
    order: usize,
    model: &RemainderModel,
    opts: &PropagateOptions,
) -> Result<PropagatorResult> {
    let mut r = propagate(maps, sym, x, t, lambda, Mode::Truncated { order }, opts)?;
    r.remainder_bound = Some(model.bound(t, order, lambda, linalg::op_norm(x)));
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::{build_coupling, build_t_hop, CLUSTER_TOL};
    use crate::linalg::{c64, frob, CVector};

    fn diag_tau(values: &[f64]) -> CMatrix {
        CMatrix::from_diagonal(&CVector::from_iterator(
            values.len(),
            values.iter().map(|&x| real(x)),
        ))
    }

    fn test_unitary(d: usize) -> CMatrix {
        let h = CMatrix::from_fn(d, d, |i, j| {
            c64((i + 2 * j) as f64 * 0.3 - 0.7, (i as f64 - j as f64) * 0.45)
        });
        let h = (&h + h.adjoint()) * real(0.5);
        let (w, u) = linalg::eigh(&h);
        let phases = CVector::from_iterator(d, w.iter().map(|&x| c64(x.cos(), x.sin())));
        &u * CMatrix::from_diagonal(&phases) * u.adjoint()
    }

    fn observable(n: usize) -> CMatrix {
        let x = CMatrix::from_fn(n, n, |i, j| c64(((i * 5 + j * 3) % 7) as f64 - 3.0, (i as f64) - (j as f64)));
        (&x + x.adjoint()) * real(0.5)
    }

    #[test]
    fn lambda_zero_is_free_evolution() {
        let basis = FockBasis::new(3).unwrap();
        let c = build_t_hop(&basis, 0.4).unwrap();
        let maps = build_channel_maps(&test_unitary(3), &c, &basis).unwrap();
        let x = observable(8);
        let r = exact_propagate(&maps, &ReservoirSymbol::identity(), &x, 3, 0.0, 0.0).unwrap();
        let free = (0..3).fold(x.clone(), |y, _| maps.apply_v(&y));
        assert!(frob(&(r.result - free)) < 1e-12);
        assert_eq!(r.paths_summed, 729);
        assert_eq!(r.pruned_mass, 0.0);
    }

    #[test]
    fn identity_is_fixed() {
        let basis = FockBasis::new(2).unwrap();
        let c = build_coupling(&diag_tau(&[1.0, -1.0]), &basis, CLUSTER_TOL).unwrap();
        let maps = build_channel_maps(&test_unitary(2), &c, &basis).unwrap();
        let id = linalg::identity(4);
        for mode in [Mode::exact(), Mode::Truncated { order: 1 }, Mode::Ris] {
            let r = propagate(&maps, &ReservoirSymbol::identity(), &id, 3, 1.3, mode, &PropagateOptions::default()).unwrap();
            assert!(frob(&(r.result - &id)) < 1e-12, "{mode:?}");
        }
    }

    #[test]
    fn modes_agree() {
        let basis = FockBasis::new(3).unwrap();
        let c = build_t_hop(&basis, 0.9).unwrap();
        let maps = build_channel_maps(&test_unitary(3), &c, &basis).unwrap();
        let sym = ReservoirSymbol::diagonal(vec![1.0, 1.5, 2.0, 1.2]).unwrap();
        let x = observable(8);
        let exact = exact_propagate(&maps, &sym, &x, 4, 0.8, 0.0).unwrap();
        let trunc = truncated_propagate(&maps, &sym, &x, 4, 0.8, 4).unwrap();
        let ris = ris_propagate(&maps, &sym, &x, 4, 0.8).unwrap();
        assert!(frob(&(&exact.result - trunc.result)) < 1e-12);
        assert!(frob(&(&exact.result - ris.result)) < 1e-12);
    }

    #[test]
    fn truncation_zero_is_vphi_power() {
        let basis = FockBasis::new(3).unwrap();
        let c = build_t_hop(&basis, 0.2).unwrap();
        let maps = build_channel_maps(&test_unitary(3), &c, &basis).unwrap();
        let x = observable(8);
        let r = truncated_propagate(&maps, &ReservoirSymbol::identity(), &x, 3, 0.5, 0).unwrap();
        assert!(frob(&(r.result - maps.apply_vphi_power(&x, 3))) < 1e-12);
        assert_eq!(r.paths_summed, 1);
    }

    #[test]
    fn pruning_bound_holds() {
        let basis = FockBasis::new(3).unwrap();
        let c = build_t_hop(&basis, 0.2).unwrap();
        let maps = build_channel_maps(&test_unitary(3), &c, &basis).unwrap();
        let x = observable(8);
        let sym = ReservoirSymbol::identity();
        let full = exact_propagate(&maps, &sym, &x, 4, 2.0, 0.0).unwrap();
        let pruned = exact_propagate(&maps, &sym, &x, 4, 2.0, 1e-2).unwrap();
        assert!(pruned.pruning_enabled);
        assert!(pruned.paths_summed < full.paths_summed);
        assert!(pruned.pruned_mass > 0.0);
        let err = linalg::op_norm(&(full.result - pruned.result));
        assert!(err <= pruned.pruned_mass * linalg::op_norm(&x));
    }

    #[test]
    fn pruning_disabled_when_symbol_below_one() {
        let basis = FockBasis::new(3).unwrap();
        let c = build_t_hop(&basis, 0.2).unwrap();
        let maps = build_channel_maps(&test_unitary(3), &c, &basis).unwrap();
        let sym = ReservoirSymbol::diagonal(vec![0.5; 3]).unwrap();
        let r = exact_propagate(&maps, &sym, &observable(8), 3, 2.0, 1e-2).unwrap();
        assert!(!r.pruning_enabled);
        assert_eq!(r.pruned_mass, 0.0);
    }

    #[test]
    fn budget_is_enforced() {
        let basis = FockBasis::new(3).unwrap();
        let c = build_t_hop(&basis, 0.2).unwrap();
        let maps = build_channel_maps(&test_unitary(3), &c, &basis).unwrap();
        let opts = PropagateOptions {
            budget: 100.0,
            ..Default::default()
        };
        let err = propagate(&maps, &ReservoirSymbol::identity(), &observable(8), 3, 1.0, Mode::exact(), &opts).unwrap_err();
        assert!(matches!(err, Error::BudgetExceeded { .. }));
    }

    #[test]
    fn dual_matches_adjoint_superop() {
        let basis = FockBasis::new(2).unwrap();
        let c = build_coupling(&diag_tau(&[0.5, -1.0]), &basis, CLUSTER_TOL).unwrap();
        let maps = build_channel_maps(&test_unitary(2), &c, &basis).unwrap();
        let sym = ReservoirSymbol::kernel_table(vec![
            vec![1.5, 0.3, 0.1],
            vec![0.3, 1.2, 0.2],
            vec![0.1, 0.2, 1.8],
        ])
        .unwrap();
        let heis = propagator_superop(&maps, &sym, 3, 0.9, Mode::exact(), &PropagateOptions::default()).unwrap();
        let opts = PropagateOptions {
            picture: Picture::Schrodinger,
            ..Default::default()
        };
        let schr = propagator_superop(&maps, &sym, 3, 0.9, Mode::exact(), &opts).unwrap();
        assert!(heis.adjoint().distance(&schr) < 1e-12);
    }
}
