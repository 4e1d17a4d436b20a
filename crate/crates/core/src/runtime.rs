//! Closed-loop simulation, discounted-cost pair selection and monitoring.

use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::abstraction::{Bounds, Grid, SymbolicState};
use crate::dynamics::{event_search, IntegratorConfig, ModelParams, State};
use crate::error::{Error, Result};
use crate::refine::{ConcretePair, Controller, Query};

/// Costs closer than this are treated as ties.
pub const COST_TIE_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    ReachInitial,
    Reach,
    Terminal,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::ReachInitial => "reach_initial",
            Phase::Reach => "reach",
            Phase::Terminal => "terminal",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub lambda: f64,
    /// Cost horizon `T`; may be infinite when `lambda < 1`.
    pub horizon_t: f64,
    pub max_depth: usize,
    /// Lookahead stops once `λ^Δ` drops below this.
    pub tail_tol: f64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            lambda: 0.99,
            horizon_t: f64::INFINITY,
            max_depth: 8,
            tail_tol: 1e-3,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(Error::Config(format!("lambda must lie in (0, 1], got {}", self.lambda)));
        }
        if !(self.horizon_t > 0.0) {
            return Err(Error::Config("T must be positive".into()));
        }
        if self.horizon_t.is_infinite() && self.lambda >= 1.0 {
            return Err(Error::Config("an infinite T needs lambda < 1".into()));
        }
        if self.max_depth == 0 {
            return Err(Error::Config("max_depth must be at least 1".into()));
        }
        if !(self.tail_tol >= 0.0) {
            return Err(Error::Config("tail_tol must be nonnegative".into()));
        }
        Ok(())
    }

    /// `∫_a^b λ^t dt`.
    pub fn discount(&self, a: f64, b: f64) -> f64 {
        if self.lambda == 1.0 {
            return b - a;
        }
        let k = (1.0 / self.lambda).ln();
        let tail = if b.is_infinite() { 0.0 } else { self.lambda.powf(b) };
        (self.lambda.powf(a) - tail) / k
    }

    /// Cost of holding `u` on `[a, b]`.
    pub fn interval_cost(&self, a: f64, b: f64, u: f64) -> f64 {
        self.discount(a, b) / u
    }
}

/// Discounted cost of a completed choice sequence: `deltas[ℓ]` is the offset
/// of the `ℓ`-th event (`deltas[0] = 0`), `inputs[ℓ]` the input applied from it.
pub fn sequence_cost(sel: &SelectionConfig, deltas: &[f64], inputs: &[f64]) -> f64 {
    assert_eq!(deltas.len(), inputs.len());
    let mut j = 0.0;
    for l in 0..deltas.len() {
        let end = deltas.get(l + 1).copied().unwrap_or(sel.horizon_t);
        j += sel.interval_cost(deltas[l], end, inputs[l]);
    }
    j
}

/// Everything needed to query policies and roll out the concrete model.
pub struct Selector<'a> {
    pub controller: Controller<'a>,
    pub sel: SelectionConfig,
    pub params: &'a ModelParams,
    pub integrator: &'a IntegratorConfig,
}

/// Outcome of [`Selector::select_pair`].
#[derive(Clone, Debug, PartialEq)]
pub struct Choice {
    pub query: Query,
    pub pair: ConcretePair,
    pub cost: f64,
}

impl<'a> Selector<'a> {
    pub fn new(
        controller: Controller<'a>,
        sel: SelectionConfig,
        params: &'a ModelParams,
        integrator: &'a IntegratorConfig,
    ) -> Self {
        Self {
            controller,
            sel,
            params,
            integrator,
        }
    }

    /// Refined pairs admissible at `x` in `phase`.
    pub fn policy(&self, x: State, phase: Phase) -> Result<Query> {
        match phase {
            Phase::ReachInitial => self.controller.query_initial(x),
            Phase::Reach => self.controller.query_reach(x),
            Phase::Terminal => self.controller.query_terminal(x),
        }
    }

    /// Phase at an event state reached from `phase`.
    pub fn next_phase(&self, x: State, phase: Phase) -> Phase {
        if phase == Phase::Terminal || self.controller.in_terminal_domain(x) {
            Phase::Terminal
        } else {
            Phase::Reach
        }
    }

    /// Phase at the start of a run.
    pub fn start_phase(&self, x: State) -> Phase {
        if self.controller.in_terminal_domain(x) {
            Phase::Terminal
        } else {
            Phase::ReachInitial
        }
    }

    /// Search limit for the next event when the current offset is `delta`.
    pub fn event_limit(&self, delta: f64) -> f64 {
        (self.sel.horizon_t - delta).min(self.integrator.horizon).max(0.0)
    }

    fn u_max(&self) -> f64 {
        self.params.u_max()
    }

    fn sorted(mut pairs: Vec<ConcretePair>) -> Vec<ConcretePair> {
        pairs.sort_by(|a, b| b.u.total_cmp(&a.u).then(b.eps.total_cmp(&a.eps)));
        pairs
    }

    /// Lowest total reachable below `best`; leaves `best` unchanged otherwise.
    fn search(&self, x: State, phase: Phase, delta: f64, acc: f64, depth: usize, best: &mut f64) -> Result<()> {
        if acc + self.sel.interval_cost(delta, self.sel.horizon_t, self.u_max()) >= *best {
            return Ok(());
        }
        let q = self.policy(x, phase)?;
        if q.pairs.is_empty() {
            return Err(Error::Synthesis(format!(
                "empty {phase} policy at ({:.6}, {:.6})",
                x.s, x.i
            )));
        }
        for p in Self::sorted(q.pairs) {
            self.extend(x, phase, delta, acc, depth, p, best)?;
        }
        Ok(())
    }

    /// Cost of applying `p` at this node, then continuing optimally.
    #[allow(clippy::too_many_arguments)]
    fn extend(
        &self,
        x: State,
        phase: Phase,
        delta: f64,
        acc: f64,
        depth: usize,
        p: ConcretePair,
        best: &mut f64,
    ) -> Result<()> {
        let close = acc + self.sel.interval_cost(delta, self.sel.horizon_t, p.u);
        if depth <= 1 || self.sel.lambda.powf(delta) < self.sel.tail_tol {
            *best = best.min(close);
            return Ok(());
        }
        if acc + self.sel.interval_cost(delta, self.sel.horizon_t, self.u_max()) >= *best {
            return Ok(());
        }
        match event_search(x, p.u, p.eps, self.event_limit(delta), self.params, self.integrator, None) {
            None => *best = best.min(close),
            Some(ev) => {
                let next = delta + ev.time;
                let acc = acc + self.sel.interval_cost(delta, next, p.u);
                let phase = self.next_phase(ev.state, phase);
                self.search(ev.state, phase, next, acc, depth - 1, best)?;
            }
        }
        Ok(())
    }

    /// Minimum cost over choice sequences of at most `max_depth` choices.
    pub fn rollout_cost(&self, x: State, phase: Phase) -> Result<f64> {
        let mut best = f64::INFINITY;
        self.search(x, phase, 0.0, 0.0, self.sel.max_depth, &mut best)?;
        Ok(best)
    }

    /// Minimum cost with the first pair fixed.
    pub fn pair_cost(&self, x: State, phase: Phase, p: ConcretePair) -> Result<f64> {
        let mut best = f64::INFINITY;
        self.extend(x, phase, 0.0, 0.0, self.sel.max_depth, p, &mut best)?;
        Ok(best)
    }

    /// Cost-minimizing pair; ties go to larger `u`, then larger `ε`.
    pub fn select_pair(&self, x: State, phase: Phase) -> Result<Choice> {
        let q = self.policy(x, phase)?;
        if q.pairs.is_empty() {
            return Err(Error::Synthesis(format!(
                "empty {phase} policy at ({:.6}, {:.6})",
                x.s, x.i
            )));
        }
        let mut chosen: Option<(ConcretePair, f64)> = None;
        for p in Self::sorted(q.pairs.clone()) {
            // only a strictly better continuation can displace the current choice
            let mut best = chosen.map_or(f64::INFINITY, |(_, c)| c - COST_TIE_TOL);
            self.extend(x, phase, 0.0, 0.0, self.sel.max_depth, p, &mut best)?;
            if chosen.is_none_or(|(_, c)| best < c - COST_TIE_TOL) {
                chosen = Some((p, best));
            }
        }
        let (pair, cost) = chosen.expect("nonempty policy");
        Ok(Choice { query: q, pair, cost })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    #[serde(rename = "S")]
    pub s: f64,
    #[serde(rename = "I")]
    pub i: f64,
    #[serde(rename = "R")]
    pub r: f64,
    pub u: f64,
    #[serde(rename = "epsilon")]
    pub eps: f64,
    pub event: u8,
    pub phase: Phase,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub t: f64,
    #[serde(rename = "S")]
    pub s: f64,
    #[serde(rename = "I")]
    pub i: f64,
    pub phase: Phase,
    pub grid_n: i32,
    pub grid_m: i32,
    pub rank: Option<u32>,
    pub u: f64,
    #[serde(rename = "epsilon")]
    pub eps: f64,
    pub cost: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SimulationTrace {
    pub samples: Vec<Sample>,
    pub events: Vec<EventRecord>,
    /// The event search horizon ran out before `t_end`.
    pub truncated: bool,
    pub failure: Option<String>,
}

fn sample(t: f64, x: State, u: f64, eps: f64, event: bool, phase: Phase) -> Sample {
    Sample {
        t,
        s: x.s,
        i: x.i,
        r: x.r(),
        u,
        eps,
        event: event as u8,
        phase,
    }
}

/// Run the event-triggered closed loop from `x0` until `t_end`.
pub fn simulate_closed_loop(x0: State, selector: &Selector<'_>, t_end: f64) -> Result<SimulationTrace> {
    let ctrl = &selector.controller;
    if !ctrl.in_terminal_domain(x0) && !ctrl.in_initial_domain(x0) {
        return Err(Error::Domain {
            s: x0.s,
            i: x0.i,
            domain: "initial",
        });
    }
    let mut trace = SimulationTrace::default();
    let mut phase = selector.start_phase(x0);
    let mut x = x0;
    let mut t = 0.0;
    let mut buf = Vec::new();
    while t < t_end {
        let choice = match selector.select_pair(x, phase) {
            Ok(c) => c,
            Err(e) => {
                trace.failure = Some(format!("t = {t}: {e}"));
                break;
            }
        };
        let rank = match phase {
            Phase::ReachInitial => Some(ctrl.synthesis.ranks.initial_rank),
            _ => ctrl.rank(choice.query.index),
        };
        let ConcretePair { u, eps, .. } = choice.pair;
        trace.events.push(EventRecord {
            t,
            s: x.s,
            i: x.i,
            phase,
            grid_n: choice.query.state.n,
            grid_m: choice.query.state.m,
            rank,
            u,
            eps,
            cost: choice.cost,
        });
        trace.samples.push(sample(t, x, u, eps, true, phase));
        let remaining = t_end - t;
        let limit = remaining.min(selector.integrator.horizon);
        buf.clear();
        let ev = event_search(x, u, eps, limit, selector.params, selector.integrator, Some(&mut buf));
        let stop = ev.map_or(f64::INFINITY, |e| e.time);
        for &(dt, y) in buf.iter().filter(|(dt, _)| *dt < stop) {
            trace.samples.push(sample(t + dt, y, u, eps, false, phase));
        }
        match ev {
            Some(e) => {
                t += e.time;
                x = e.state;
                phase = selector.next_phase(x, phase);
            }
            None => {
                trace.truncated = limit < remaining;
                break;
            }
        }
    }
    Ok(trace)
}

/// Simulate several initial states in parallel; results keep input order.
pub fn simulate_batch(x0s: &[State], selector: &Selector<'_>, t_end: f64) -> Vec<Result<SimulationTrace>> {
    x0s.par_iter()
        .map(|&x0| simulate_closed_loop(x0, selector, t_end))
        .collect()
}

/// Tolerance for set-membership checks on simulated samples.
pub const MONITOR_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonitorReport {
    pub min_s: f64,
    pub max_i: f64,
    /// First sample inside `X_F`.
    pub first_entry: Option<f64>,
    /// Start of the final uninterrupted stay inside `X_F`.
    pub settle_time: Option<f64>,
    pub terminal_switch: Option<f64>,
    pub safe_violation: Option<f64>,
    pub terminal_exit: Option<f64>,
    pub event_count: usize,
    pub rank_sequence: Vec<u32>,
    pub rank_decreasing: bool,
    pub u_piecewise_constant: bool,
    pub events_on_grid: bool,
    pub truncated: bool,
    pub failure: Option<String>,
}

impl MonitorReport {
    pub fn passed(&self) -> bool {
        self.safe_violation.is_none()
            && self.terminal_exit.is_none()
            && self.settle_time.is_some()
            && self.rank_decreasing
            && self.u_piecewise_constant
            && self.events_on_grid
            && !self.truncated
            && self.failure.is_none()
    }
}

/// Check a trace against the safe and terminal sets.
pub fn monitor(trace: &SimulationTrace, bounds: &Bounds, grid: &Grid) -> MonitorReport {
    let mut min_s = f64::INFINITY;
    let mut max_i = f64::NEG_INFINITY;
    let mut first_entry = None;
    let mut settle_time = None;
    let mut safe_violation = None;
    let mut terminal_exit = None;
    let mut u_piecewise_constant = true;
    let mut prev: Option<&Sample> = None;
    for smp in &trace.samples {
        let x = State::new(smp.s, smp.i);
        min_s = min_s.min(smp.s);
        max_i = max_i.max(smp.i);
        if safe_violation.is_none() && !bounds.in_safe(x, MONITOR_TOL) {
            safe_violation = Some(smp.t);
        }
        let inside = bounds.in_terminal(x, MONITOR_TOL);
        if inside {
            first_entry.get_or_insert(smp.t);
            settle_time.get_or_insert(smp.t);
        } else {
            settle_time = None;
        }
        if smp.phase == Phase::Terminal && !inside && terminal_exit.is_none() {
            terminal_exit = Some(smp.t);
        }
        if let Some(p) = prev {
            if smp.event == 0 && (p.u != smp.u || p.eps != smp.eps) {
                u_piecewise_constant = false;
            }
        }
        prev = Some(smp);
    }
    let mut rank_sequence = Vec::new();
    for e in &trace.events {
        match (e.phase, e.rank) {
            (Phase::ReachInitial | Phase::Reach, Some(r)) => rank_sequence.push(r),
            (Phase::Terminal, Some(r)) if !rank_sequence.is_empty() => {
                rank_sequence.push(r);
                break;
            }
            _ => {}
        }
        if e.phase == Phase::Terminal {
            break;
        }
    }
    let rank_decreasing = rank_sequence.windows(2).all(|w| w[1] < w[0])
        && trace
            .events
            .iter()
            .all(|e| e.phase == Phase::Terminal || e.rank.is_some());
    let events_on_grid = trace.events.iter().skip(1).all(|e| {
        let k = e.i / grid.eta_i;
        (k - k.round()).abs() <= 1e-4
    });
    MonitorReport {
        min_s,
        max_i,
        first_entry,
        settle_time,
        terminal_switch: trace.events.iter().find(|e| e.phase == Phase::Terminal).map(|e| e.t),
        safe_violation,
        terminal_exit,
        event_count: trace.events.len(),
        rank_sequence,
        rank_decreasing,
        u_piecewise_constant,
        events_on_grid,
        truncated: trace.truncated,
        failure: trace.failure.clone(),
    }
}

pub fn write_trace_csv(trace: &SimulationTrace, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for s in &trace.samples {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_events_csv(trace: &SimulationTrace, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for e in &trace.events {
        w.serialize(e)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace_csv(path: &Path) -> Result<Vec<Sample>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

pub fn write_report_json(report: &MonitorReport, path: &Path) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(report)?)?;
    Ok(())
}

/// Grid state at a trace event.
pub fn event_grid_state(e: &EventRecord) -> SymbolicState {
    SymbolicState::new(e.grid_n, e.grid_m)
}
