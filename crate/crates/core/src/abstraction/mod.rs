//! Finite symbolic model of the event-triggered SIRS system.
//!
//! Grid states sit on `(n η_S, m η_I)`. A non-initial transition starts from
//! the horizontal segment of width `η_S` through the grid state, an initial
//! transition from the full `η_S × η_I` cell. Successors always lie exactly
//! `±k` rows away, where the threshold is `k η_I`.

mod io;
mod transitions;

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{IntegratorConfig, ModelParams, State};
use crate::error::{Error, Result};

pub use io::{config_digest, load_model, save_model, MODEL_FORMAT_VERSION};
pub use transitions::Direction;

pub(crate) const GRID_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub eta_s: f64,
    pub eta_i: f64,
}

impl Grid {
    pub fn new(eta_s: f64, eta_i: f64) -> Result<Self> {
        if !(eta_s > 0.0 && eta_i > 0.0) {
            return Err(Error::Config(format!(
                "grid resolutions must be positive, got ({eta_s}, {eta_i})"
            )));
        }
        Ok(Self { eta_s, eta_i })
    }

    pub fn point(&self, x: SymbolicState) -> State {
        State::new(x.n as f64 * self.eta_s, x.m as f64 * self.eta_i)
    }

    /// Integer `k` with `value = k η_I`, if one exists.
    pub fn i_multiple(&self, value: f64) -> Option<i32> {
        let k = (value / self.eta_i).round();
        ((k * self.eta_i - value).abs() <= GRID_TOL).then_some(k as i32)
    }

    /// Row index of an I-value lying on a grid line (within tolerance).
    pub fn snap_i(&self, i: f64) -> Option<i32> {
        self.i_multiple(i)
    }

    pub(crate) fn max_n(&self) -> i32 {
        (1.0 / self.eta_s + GRID_TOL).floor() as i32
    }

    pub(crate) fn max_m(&self) -> i32 {
        (1.0 / self.eta_i + GRID_TOL).floor() as i32
    }
}

/// Grid state `(n η_S, m η_I)`; ordered lexicographically by `(n, m)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SymbolicState {
    pub n: i32,
    pub m: i32,
}

impl SymbolicState {
    pub const fn new(n: i32, m: i32) -> Self {
        Self { n, m }
    }
}

/// Actionable thresholds `k η_I`, strictly ascending, all in `(0, 1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub values: Vec<f64>,
    pub multiples: Vec<i32>,
}

impl Thresholds {
    pub fn new(values: Vec<f64>, grid: &Grid) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Config("at least one positive threshold is required".into()));
        }
        let mut multiples = Vec::with_capacity(values.len());
        for &v in &values {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Config(format!("threshold {v} must lie in (0, 1)")));
            }
            let k = grid.i_multiple(v).ok_or_else(|| {
                Error::Config(format!(
                    "threshold {v} is not an integer multiple of eta_I = {}",
                    grid.eta_i
                ))
            })?;
            multiples.push(k);
        }
        if multiples.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("thresholds must be strictly ascending".into()));
        }
        Ok(Self { values, multiples })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Box bounds of `X_0` and the lower-S / upper-I bounds of `X_S` and `X_F`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub s0_lower: f64,
    pub s0_upper: f64,
    pub i0_lower: f64,
    pub i0_upper: f64,
    pub s_safe_lower: f64,
    pub i_safe_upper: f64,
    pub s_term_lower: f64,
    pub i_term_upper: f64,
}

impl Bounds {
    /// Tokyo bounds; the initial box spans the five reference start states.
    pub fn tokyo() -> Self {
        Self {
            s0_lower: 0.50,
            s0_upper: 0.80,
            i0_lower: 0.055,
            i0_upper: 0.085,
            s_safe_lower: 0.45,
            i_safe_upper: 0.10,
            s_term_lower: 0.60,
            i_term_upper: 0.05,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.s0_lower,
            self.s0_upper,
            self.i0_lower,
            self.i0_upper,
            self.s_safe_lower,
            self.i_safe_upper,
            self.s_term_lower,
            self.i_term_upper,
        ];
        if all.iter().any(|v| !(*v > 0.0 && *v < 1.0)) {
            return Err(Error::Config("all bounds must lie in (0, 1)".into()));
        }
        if self.s0_lower > self.s0_upper || self.i0_lower > self.i0_upper {
            return Err(Error::Config("initial box bounds out of order".into()));
        }
        if self.s_term_lower <= self.s_safe_lower {
            return Err(Error::Config("S_F_lower must exceed S_S_lower".into()));
        }
        if self.i_term_upper >= self.i_safe_upper {
            return Err(Error::Config("I_F_upper must be below I_S_upper".into()));
        }
        if self.s0_lower < self.s_safe_lower || self.i0_upper > self.i_safe_upper {
            return Err(Error::Config("X_0 must be contained in X_S".into()));
        }
        if self.s0_upper >= self.s_term_lower && self.i0_lower <= self.i_term_upper {
            return Err(Error::Config("X_0 must not intersect X_F".into()));
        }
        Ok(())
    }

    pub fn in_initial(&self, x: State, tol: f64) -> bool {
        x.s >= self.s0_lower - tol
            && x.s <= self.s0_upper + tol
            && x.i >= self.i0_lower - tol
            && x.i <= self.i0_upper + tol
            && x.in_simplex(tol)
    }

    pub fn in_safe(&self, x: State, tol: f64) -> bool {
        x.s >= self.s_safe_lower - tol && x.i <= self.i_safe_upper + tol && x.in_simplex(tol)
    }

    pub fn in_terminal(&self, x: State, tol: f64) -> bool {
        x.s >= self.s_term_lower - tol && x.i <= self.i_term_upper + tol && x.in_simplex(tol)
    }
}

/// Knobs of the transition construction that go beyond the grid itself.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AbstractionOptions {
    /// Adds the opposite-direction guard and extends every guard window to
    /// the later of the two crossings.
    pub strict_direction_check: bool,
    /// Lower S bound used in the transition guards; `None` means `S_S_lower`.
    pub guard_s_lower: Option<f64>,
}

/// Everything that determines a symbolic model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbstractionConfig {
    pub params: ModelParams,
    pub grid: Grid,
    pub thresholds: Thresholds,
    pub bounds: Bounds,
    pub integrator: IntegratorConfig,
    pub options: AbstractionOptions,
}

impl AbstractionConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.bounds.validate()?;
        self.integrator.validate()?;
        Thresholds::new(self.thresholds.values.clone(), &self.grid)?;
        Ok(())
    }

    pub(crate) fn s_guard(&self) -> f64 {
        self.options.guard_s_lower.unwrap_or(self.bounds.s_safe_lower) + self.grid.eta_s / 2.0
    }

    /// Largest row index whose I-value stays within `I_S_upper`.
    pub(crate) fn safe_row_limit(&self) -> i32 {
        (self.bounds.i_safe_upper / self.grid.eta_i + GRID_TOL).floor() as i32
    }

    pub(crate) fn term_row_limit(&self) -> i32 {
        (self.bounds.i_term_upper / self.grid.eta_i + GRID_TOL).floor() as i32
    }
}

/// The designated grid sets.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSets {
    pub states: Vec<SymbolicState>,
    pub init_states: BTreeSet<SymbolicState>,
    pub safe_states: BTreeSet<SymbolicState>,
    pub target_states: BTreeSet<SymbolicState>,
}

fn in_domain(grid: &Grid, x: SymbolicState) -> bool {
    let p = grid.point(x);
    x.n >= 0 && x.m >= 0 && p.s + p.i <= 1.0 + GRID_TOL
}

/// `x ∈ Int_η(Y)` for `Y = {S ≥ s_lower, I ≤ i_upper} ∩ X`.
fn in_interior(grid: &Grid, x: SymbolicState, s_lower: f64, i_upper: f64) -> bool {
    let p = grid.point(x);
    let (es, ei) = (grid.eta_s, grid.eta_i);
    p.s - es >= s_lower - GRID_TOL
        && p.i + ei <= i_upper + GRID_TOL
        && p.i - ei >= -GRID_TOL
        && p.s + es <= 1.0 + GRID_TOL
        && (p.s + es) + (p.i + ei) <= 1.0 + GRID_TOL
}

/// `x ∈ Out_{η/2}(X_0)`: the half-cell around `x` meets `X_0`.
fn in_exterior(grid: &Grid, x: SymbolicState, b: &Bounds) -> bool {
    let p = grid.point(x);
    let (hs, hi) = (grid.eta_s / 2.0, grid.eta_i / 2.0);
    let s_lo = (p.s - hs).max(b.s0_lower);
    let s_hi = (p.s + hs).min(b.s0_upper);
    let i_lo = (p.i - hi).max(b.i0_lower);
    let i_hi = (p.i + hi).min(b.i0_upper);
    s_lo <= s_hi + GRID_TOL && i_lo <= i_hi + GRID_TOL && s_lo + i_lo <= 1.0 + GRID_TOL
}

/// Enumerate `[X]_η`, `X̃_0`, `X̃_S` and `X̃_F`.
pub fn build_grid_sets(bounds: &Bounds, grid: &Grid) -> Result<GridSets> {
    bounds.validate()?;
    let mut states = Vec::new();
    for n in 0..=grid.max_n() {
        for m in 0..=grid.max_m() {
            let x = SymbolicState::new(n, m);
            if in_domain(grid, x) {
                states.push(x);
            }
        }
    }
    let init_states: BTreeSet<_> = states.iter().copied().filter(|&x| in_exterior(grid, x, bounds)).collect();
    let safe_states: BTreeSet<_> = states
        .iter()
        .copied()
        .filter(|&x| in_interior(grid, x, bounds.s_safe_lower, bounds.i_safe_upper))
        .collect();
    let target_states: BTreeSet<_> = states
        .iter()
        .copied()
        .filter(|&x| in_interior(grid, x, bounds.s_term_lower, bounds.i_term_upper))
        .collect();
    if safe_states.is_empty() {
        return Err(Error::Infeasible("the safe grid set is empty".into()));
    }
    if target_states.is_empty() {
        return Err(Error::Infeasible("the terminal grid set is empty".into()));
    }
    Ok(GridSets {
        states,
        init_states,
        safe_states,
        target_states,
    })
}

/// Direction structure of the initial successors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    Increase,
    Decrease,
    Mixed,
    Empty,
}

impl Label {
    pub fn is_determinate(self) -> bool {
        matches!(self, Label::Increase | Label::Decrease)
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Label::Empty => 0,
            Label::Increase => 1,
            Label::Decrease => 2,
            Label::Mixed => 3,
        }
    }

    pub(crate) fn from_code(c: u8) -> Option<Self> {
        Some(match c {
            0 => Label::Empty,
            1 => Label::Increase,
            2 => Label::Decrease,
            3 => Label::Mixed,
            _ => return None,
        })
    }
}

/// `L(x̃, ũ, ε̃)` from the successor rows.
pub fn compute_label_l(source: SymbolicState, k: i32, successors: &[SymbolicState]) -> Label {
    let up = successors.iter().any(|s| s.m == source.m + k);
    let down = successors.iter().any(|s| s.m == source.m - k);
    match (up, down) {
        (false, false) => Label::Empty,
        (true, false) => Label::Increase,
        (false, true) => Label::Decrease,
        (true, true) => Label::Mixed,
    }
}

/// An `(input, threshold)` choice, by index into `u_levels` and `Thresholds`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Pair {
    pub input: usize,
    pub threshold: usize,
}

/// Finite symbolic model with both transition maps and both labelings.
///
/// Per-state tables are indexed by position in `states` and by the pair
/// index `input * thresholds.len() + threshold`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolicModel {
    pub config: AbstractionConfig,
    pub states: Vec<SymbolicState>,
    pub init: Vec<bool>,
    pub safe: Vec<bool>,
    pub target: Vec<bool>,
    pub trans: Vec<Vec<Vec<u32>>>,
    pub trans0: Vec<Vec<Vec<u32>>>,
    pub label_l: Vec<Vec<Label>>,
    pub label_lf: Vec<Vec<bool>>,
    lookup: Vec<u32>,
    rows: i32,
}

impl SymbolicModel {
    pub(crate) fn assemble(
        config: AbstractionConfig,
        sets: &GridSets,
        trans: Vec<Vec<Vec<u32>>>,
        trans0: Vec<Vec<Vec<u32>>>,
        label_l: Vec<Vec<Label>>,
        label_lf: Vec<Vec<bool>>,
    ) -> Self {
        let states = sets.states.clone();
        let (lookup, rows) = build_lookup(&config.grid, &states);
        let flag = |set: &BTreeSet<SymbolicState>| states.iter().map(|x| set.contains(x)).collect();
        Self {
            init: flag(&sets.init_states),
            safe: flag(&sets.safe_states),
            target: flag(&sets.target_states),
            config,
            states,
            trans,
            trans0,
            label_l,
            label_lf,
            lookup,
            rows,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.config.grid
    }

    pub fn num_pairs(&self) -> usize {
        self.config.params.u_levels.len() * self.config.thresholds.len()
    }

    pub fn pair(&self, index: usize) -> Pair {
        let nt = self.config.thresholds.len();
        Pair {
            input: index / nt,
            threshold: index % nt,
        }
    }

    pub fn pair_index(&self, pair: Pair) -> usize {
        pair.input * self.config.thresholds.len() + pair.threshold
    }

    /// `(u, ε̃)` values of a pair index.
    pub fn pair_values(&self, index: usize) -> (f64, f64) {
        let p = self.pair(index);
        (
            self.config.params.u_levels[p.input],
            self.config.thresholds.values[p.threshold],
        )
    }

    pub fn pair_multiple(&self, index: usize) -> i32 {
        self.config.thresholds.multiples[self.pair(index).threshold]
    }

    pub fn index_of(&self, x: SymbolicState) -> Option<usize> {
        if x.n < 0 || x.m < 0 || x.m >= self.rows {
            return None;
        }
        let pos = x.n as usize * self.rows as usize + x.m as usize;
        match self.lookup.get(pos) {
            Some(&idx) if idx != u32::MAX => Some(idx as usize),
            _ => None,
        }
    }

    pub fn point(&self, idx: usize) -> State {
        self.config.grid.point(self.states[idx])
    }

    pub fn successors(&self, idx: usize, pair: usize) -> impl Iterator<Item = SymbolicState> + '_ {
        self.trans[idx][pair].iter().map(|&j| self.states[j as usize])
    }

    /// Empty for non-initial states.
    pub fn successors0(&self, idx: usize, pair: usize) -> impl Iterator<Item = SymbolicState> + '_ {
        self.trans0[idx].get(pair).into_iter().flatten().map(|&j| self.states[j as usize])
    }

    /// `Ĩ + ε̃ ≤ Ī_S`, evaluated on row indices.
    pub fn within_safe_ceiling(&self, idx: usize, pair: usize) -> bool {
        self.states[idx].m + self.pair_multiple(pair) <= self.config.safe_row_limit()
    }

    pub fn actionable_pairs(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.num_pairs()).filter(move |&p| !self.trans[idx][p].is_empty())
    }

    pub fn count(&self, flags: &[bool]) -> usize {
        flags.iter().filter(|&&b| b).count()
    }
}

fn build_lookup(grid: &Grid, states: &[SymbolicState]) -> (Vec<u32>, i32) {
    let rows = grid.max_m() + 1;
    let cols = grid.max_n() + 1;
    let mut lookup = vec![u32::MAX; (rows * cols) as usize];
    for (idx, x) in states.iter().enumerate() {
        lookup[x.n as usize * rows as usize + x.m as usize] = idx as u32;
    }
    (lookup, rows)
}

/// Build the whole symbolic model; `workers = None` uses the global pool.
pub fn build_symbolic_model(config: &AbstractionConfig, workers: Option<usize>) -> Result<SymbolicModel> {
    config.validate()?;
    let sets = build_grid_sets(&config.bounds, &config.grid)?;
    let job = || build_tables(config, &sets);
    let tables = match workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(job),
        None => job(),
    };
    let (trans, trans0, label_l, label_lf) = tables;
    Ok(SymbolicModel::assemble(config.clone(), &sets, trans, trans0, label_l, label_lf))
}

type Tables = (
    Vec<Vec<Vec<u32>>>,
    Vec<Vec<Vec<u32>>>,
    Vec<Vec<Label>>,
    Vec<Vec<bool>>,
);

struct StateRecord {
    trans: Vec<Vec<u32>>,
    trans0: Vec<Vec<u32>>,
    label_l: Vec<Label>,
    label_lf: Vec<bool>,
}

fn build_tables(config: &AbstractionConfig, sets: &GridSets) -> Tables {
    let (lookup, rows) = build_lookup(&config.grid, &sets.states);
    let index = |x: SymbolicState| -> Option<u32> {
        if x.n < 0 || x.m < 0 || x.m >= rows {
            return None;
        }
        lookup
            .get(x.n as usize * rows as usize + x.m as usize)
            .copied()
            .filter(|&v| v != u32::MAX)
    };
    let nu = config.params.u_levels.len();
    let nt = config.thresholds.len();
    let records: Vec<StateRecord> = sets
        .states
        .par_iter()
        .map(|&x| {
            let is_init = sets.init_states.contains(&x);
            let mut rec = StateRecord {
                trans: vec![Vec::new(); nu * nt],
                trans0: vec![Vec::new(); if is_init { nu * nt } else { 0 }],
                label_l: vec![Label::Empty; if is_init { nu * nt } else { 0 }],
                label_lf: vec![false; nu * nt],
            };
            for (ui, &u) in config.params.u_levels.iter().enumerate() {
                let seg = transitions::sweep_source(config, x, u, false, &config.thresholds.multiples);
                for (ti, &k) in config.thresholds.multiples.iter().enumerate() {
                    let pi = ui * nt + ti;
                    let outcome = transitions::evaluate(config, &seg, x, k);
                    rec.trans[pi] = to_indices(&outcome.successors, &index);
                    rec.label_lf[pi] = transitions::label_lf_from(config, x, k, &outcome, !rec.trans[pi].is_empty());
                }
                if is_init {
                    let cell = transitions::sweep_source(config, x, u, true, &config.thresholds.multiples);
                    for (ti, &k) in config.thresholds.multiples.iter().enumerate() {
                        let pi = ui * nt + ti;
                        let outcome = transitions::evaluate(config, &cell, x, k);
                        let succ = to_indices(&outcome.successors, &index);
                        let states: Vec<SymbolicState> =
                            succ.iter().map(|&j| sets.states[j as usize]).collect();
                        rec.label_l[pi] = compute_label_l(x, k, &states);
                        rec.trans0[pi] = succ;
                    }
                }
            }
            rec
        })
        .collect();
    let mut trans = Vec::with_capacity(records.len());
    let mut trans0 = Vec::with_capacity(records.len());
    let mut label_l = Vec::with_capacity(records.len());
    let mut label_lf = Vec::with_capacity(records.len());
    for r in records {
        trans.push(r.trans);
        trans0.push(r.trans0);
        label_l.push(r.label_l);
        label_lf.push(r.label_lf);
    }
    (trans, trans0, label_l, label_lf)
}

fn to_indices(succ: &[SymbolicState], index: &impl Fn(SymbolicState) -> Option<u32>) -> Vec<u32> {
    let mut v: Vec<u32> = succ.iter().filter_map(|&s| index(s)).collect();
    v.sort_unstable();
    v.dedup();
    v
}

impl AbstractionConfig {
    /// `g̃(x̃, ũ, ε̃)` for a single triple.
    pub fn transitions_noninitial(&self, x: SymbolicState, u: f64, eps: f64) -> Vec<SymbolicState> {
        self.single_triple(x, u, eps, false).0
    }

    /// `g̃_0(x̃, ũ, ε̃)` for a single triple.
    pub fn transitions_initial(&self, x: SymbolicState, u: f64, eps: f64) -> Vec<SymbolicState> {
        self.single_triple(x, u, eps, true).0
    }

    /// `L_F(x̃, ũ, ε̃)` for a single triple.
    pub fn label_lf(&self, x: SymbolicState, u: f64, eps: f64) -> bool {
        self.single_triple(x, u, eps, false).1
    }

    fn single_triple(&self, x: SymbolicState, u: f64, eps: f64, initial: bool) -> (Vec<SymbolicState>, bool) {
        let k = match self.grid.i_multiple(eps) {
            Some(k) if k > 0 => k,
            _ => return (Vec::new(), false),
        };
        let sweep = transitions::sweep_source(self, x, u, initial, &[k]);
        let outcome = transitions::evaluate(self, &sweep, x, k);
        let succ: Vec<SymbolicState> = outcome
            .successors
            .iter()
            .copied()
            .filter(|&s| in_domain(&self.grid, s))
            .collect();
        let lf = transitions::label_lf_from(self, x, k, &outcome, !succ.is_empty());
        (succ, lf)
    }
}
