//! One embedding sweep per `(source, u)` serves every threshold.

use crate::dynamics::{bisect_in_step, rk4_step_embedded, EmbeddedState, Envelope, State};

use super::{in_domain, AbstractionConfig, SymbolicState, GRID_TOL};

/// Envelope values beyond this magnitude mean the box has blown up.
const BLOWUP: f64 = 1e3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Up,
    Down,
}

impl Direction {
    fn reached(self, value: f64, level: f64) -> bool {
        match self {
            Direction::Up => value >= level,
            Direction::Down => value <= level,
        }
    }
}

pub(crate) struct Sweep {
    samples: Vec<EmbeddedState>,
    step: f64,
    u: f64,
}

#[derive(Clone, Copy, Debug)]
struct Crossing {
    /// Index of the last sample before the crossing.
    k: usize,
    time: f64,
    state: EmbeddedState,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct DirOutcome {
    pub min_s_lo: f64,
}

#[derive(Clone, Debug, Default)]
pub(crate) struct Outcome {
    pub successors: Vec<SymbolicState>,
    pub up: Option<DirOutcome>,
    pub down: Option<DirOutcome>,
}

struct Level {
    value: f64,
    dir: Direction,
    lower: bool,
    upper: bool,
}

/// Integrate the embedding from the source segment (or cell) until every
/// level in `±ks` rows is settled, or the horizon is reached.
pub(crate) fn sweep_source(
    cfg: &AbstractionConfig,
    x: SymbolicState,
    u: f64,
    cell: bool,
    ks: &[i32],
) -> Sweep {
    let grid = &cfg.grid;
    let c = grid.point(x);
    let hs = grid.eta_s / 2.0;
    let hi = if cell { grid.eta_i / 2.0 } else { 0.0 };
    let start = EmbeddedState::new(State::new(c.s - hs, c.i - hi), State::new(c.s + hs, c.i + hi));
    let step = cfg.integrator.step;
    let mut sweep = Sweep {
        samples: vec![start],
        step,
        u,
    };
    if x.m <= 0 {
        return sweep;
    }
    let mut levels = Vec::new();
    for &k in ks {
        levels.push(Level {
            value: (x.m + k) as f64 * grid.eta_i,
            dir: Direction::Up,
            lower: false,
            upper: false,
        });
        if x.m - k > 0 {
            levels.push(Level {
                value: (x.m - k) as f64 * grid.eta_i,
                dir: Direction::Down,
                lower: false,
                upper: false,
            });
        }
    }
    let guard = cfg.s_guard();
    let mut guard_failed = start.lower.s < guard;
    let settled = |levels: &[Level], guard_failed: bool| {
        levels
            .iter()
            .all(|l| (l.lower && l.upper) || (guard_failed && !l.lower && !l.upper))
    };
    let n_steps = (cfg.integrator.horizon / step + GRID_TOL).floor() as usize;
    let mut e = start;
    for _ in 0..n_steps {
        if settled(&levels, guard_failed) {
            break;
        }
        e = rk4_step_embedded(&e, u, step, &cfg.params);
        let vals = [e.lower.s, e.lower.i, e.upper.s, e.upper.i];
        if vals.iter().any(|v| !v.is_finite() || v.abs() > BLOWUP) {
            break;
        }
        sweep.samples.push(e);
        guard_failed |= e.lower.s < guard;
        for l in &mut levels {
            l.lower |= l.dir.reached(e.lower.i, l.value);
            l.upper |= l.dir.reached(e.upper.i, l.value);
        }
    }
    sweep
}

impl Sweep {
    fn first_crossing(&self, cfg: &AbstractionConfig, env: Envelope, dir: Direction, level: f64) -> Option<Crossing> {
        let value = |e: &EmbeddedState| e.envelope(env).i;
        let j = self.samples.iter().position(|e| dir.reached(value(e), level))?;
        if j == 0 {
            return Some(Crossing {
                k: 0,
                time: 0.0,
                state: self.samples[0],
            });
        }
        let base = self.samples[j - 1];
        let (dt, state) = bisect_in_step(
            base,
            self.step,
            cfg.integrator.crossing_tol,
            |b, tau| rk4_step_embedded(&b, self.u, tau, &cfg.params),
            |e| dir.reached(value(e), level),
        );
        Some(Crossing {
            k: j - 1,
            time: (j - 1) as f64 * self.step + dt,
            state,
        })
    }

    /// Samples on `[0, τ]` for the crossing at `τ`.
    fn until<'a>(&'a self, c: &'a Crossing) -> impl Iterator<Item = &'a EmbeddedState> + 'a {
        self.samples[..=c.k].iter().chain(std::iter::once(&c.state))
    }

    /// Samples on `[τ_a, τ_b]` with `τ_a ≤ τ_b`.
    fn between<'a>(&'a self, a: &'a Crossing, b: &'a Crossing) -> impl Iterator<Item = &'a EmbeddedState> + 'a {
        let lo = (a.k + 1).min(b.k + 1);
        self.samples[lo..=b.k]
            .iter()
            .chain([&a.state, &b.state])
    }
}

fn evaluate_direction(
    cfg: &AbstractionConfig,
    sweep: &Sweep,
    x: SymbolicState,
    k: i32,
    dir: Direction,
) -> Option<(DirOutcome, Vec<SymbolicState>)> {
    let grid = &cfg.grid;
    let row = match dir {
        Direction::Up => x.m + k,
        Direction::Down => x.m - k,
    };
    if row <= 0 || x.m <= 0 {
        return None;
    }
    let level = row as f64 * grid.eta_i;
    let t_bar = sweep.first_crossing(cfg, Envelope::Lower, dir, level)?;
    let t_under = sweep.first_crossing(cfg, Envelope::Upper, dir, level)?;
    let (first, last) = if t_bar.time <= t_under.time {
        (&t_bar, &t_under)
    } else {
        (&t_under, &t_bar)
    };
    let guard = cfg.s_guard();
    let center_i = x.m as f64 * grid.eta_i;
    let eps = k as f64 * grid.eta_i;
    let strict = cfg.options.strict_direction_check;
    let window = if strict {
        last
    } else {
        match dir {
            Direction::Up => &t_under,
            Direction::Down => &t_bar,
        }
    };
    if !sweep.until(window).all(|e| e.lower.s >= guard) {
        return None;
    }
    let i_guard = |e: &EmbeddedState| match dir {
        Direction::Up => e.lower.i > center_i - eps,
        Direction::Down => e.upper.i < center_i + eps,
    };
    if (strict || dir == Direction::Down) && !sweep.until(window).all(i_guard) {
        return None;
    }
    let mut s_min = f64::INFINITY;
    let mut s_max = f64::NEG_INFINITY;
    for e in sweep.between(first, last) {
        s_min = s_min.min(e.lower.s);
        s_max = s_max.max(e.upper.s);
    }
    let lo = s_min - grid.eta_s / 2.0;
    let hi = s_max + grid.eta_s / 2.0;
    let n_lo = ((lo / grid.eta_s) - GRID_TOL).ceil() as i32;
    let n_hi = ((hi / grid.eta_s) + GRID_TOL).floor() as i32;
    let succ: Vec<SymbolicState> = (n_lo.max(0)..=n_hi)
        .map(|n| SymbolicState::new(n, row))
        .filter(|&s| in_domain(grid, s))
        .collect();
    if succ.is_empty() {
        return None;
    }
    let min_s_lo = sweep
        .until(last)
        .map(|e| e.lower.s)
        .fold(f64::INFINITY, f64::min);
    Some((
        DirOutcome { min_s_lo },
        succ,
    ))
}

/// Successors and per-direction data for threshold `k η_I`.
pub(crate) fn evaluate(cfg: &AbstractionConfig, sweep: &Sweep, x: SymbolicState, k: i32) -> Outcome {
    let mut out = Outcome::default();
    if let Some((d, s)) = evaluate_direction(cfg, sweep, x, k, Direction::Up) {
        out.up = Some(d);
        out.successors.extend(s);
    }
    if let Some((d, s)) = evaluate_direction(cfg, sweep, x, k, Direction::Down) {
        out.down = Some(d);
        out.successors.extend(s);
    }
    out
}

/// `L_F`: nonempty successors, `Ĩ + ε̃ ≤ Ī_F`, and the lower S envelope stays
/// above `S_F_lower + η_S/2` up to the later crossing of every direction.
pub(crate) fn label_lf_from(cfg: &AbstractionConfig, x: SymbolicState, k: i32, out: &Outcome, nonempty: bool) -> bool {
    if !nonempty || x.m + k > cfg.term_row_limit() {
        return false;
    }
    let bound = cfg.bounds.s_term_lower + cfg.grid.eta_s / 2.0;
    [out.up, out.down]
        .iter()
        .flatten()
        .all(|d| d.min_s_lo >= bound - GRID_TOL)
}
