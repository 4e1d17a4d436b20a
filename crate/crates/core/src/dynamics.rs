//! SIRS vector field, its mixed-monotone decomposition, and the fixed-step
//! integrators used everywhere else in the crate.
//!
//! The removed compartment is eliminated through `R = 1 - S - I`, so the
//! concrete state is the pair `(S, I)`. The embedding integrates a lower and
//! an upper corner simultaneously; their component-wise order brackets every
//! trajectory started inside the initial box.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point `(S, I)` of the state simplex.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub s: f64,
    pub i: f64,
}

impl State {
    pub const fn new(s: f64, i: f64) -> Self {
        Self { s, i }
    }

    /// Removed fraction implied by conservation of the total population.
    pub fn r(&self) -> f64 {
        1.0 - self.s - self.i
    }

    pub fn in_simplex(&self, tol: f64) -> bool {
        self.s >= -tol && self.i >= -tol && self.s + self.i <= 1.0 + tol
    }

    /// Component-wise order `self ⪯ other` with slack `tol`.
    pub fn precedes(&self, other: &State, tol: f64) -> bool {
        self.s <= other.s + tol && self.i <= other.i + tol
    }
}

/// Recovery rate, immunity-loss rate and the admissible infection-rate levels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub gamma: f64,
    pub xi: f64,
    /// Strictly descending; index 0 is "no intervention".
    pub u_levels: Vec<f64>,
}

impl ModelParams {
    pub fn new(gamma: f64, xi: f64, u_levels: Vec<f64>) -> Result<Self> {
        let p = Self { gamma, xi, u_levels };
        p.validate()?;
        Ok(p)
    }

    /// Tokyo parameter set: three intervention levels, gamma = 0.15, xi = 0.02.
    pub fn tokyo() -> Self {
        Self {
            gamma: 0.15,
            xi: 0.02,
            u_levels: vec![0.26, 0.22, 0.17],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidParams(format!("gamma must be > 0, got {}", self.gamma)));
        }
        if !(self.xi >= 0.0 && self.xi.is_finite()) {
            return Err(Error::InvalidParams(format!("xi must be >= 0, got {}", self.xi)));
        }
        if self.u_levels.is_empty() {
            return Err(Error::InvalidParams("u_levels must not be empty".into()));
        }
        if self.u_levels.iter().any(|&u| !(u > 0.0 && u.is_finite())) {
            return Err(Error::InvalidParams("u_levels must all be positive".into()));
        }
        if self.u_levels.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::InvalidParams("u_levels must be strictly descending".into()));
        }
        Ok(())
    }

    pub fn u_max(&self) -> f64 {
        self.u_levels[0]
    }

    /// Effective reproduction number `u S / gamma`.
    pub fn reproduction_number(&self, x: State, u: f64) -> f64 {
        u * x.s / self.gamma
    }
}

/// Lower and upper corner of the embedded (doubled) system.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddedState {
    pub lower: State,
    pub upper: State,
}

impl EmbeddedState {
    pub fn new(lower: State, upper: State) -> Self {
        Self { lower, upper }
    }

    pub fn point(x: State) -> Self {
        Self { lower: x, upper: x }
    }

    pub fn is_ordered(&self, tol: f64) -> bool {
        self.lower.precedes(&self.upper, tol)
    }

    pub fn envelope(&self, which: Envelope) -> State {
        match which {
            Envelope::Lower => self.lower,
            Envelope::Upper => self.upper,
        }
    }
}

/// Which corner of the embedding a crossing search follows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Envelope {
    Lower,
    Upper,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    /// RK4 step (days).
    pub step: f64,
    /// Longest integration or crossing search (days).
    pub horizon: f64,
    /// Bisection width for crossing and event times (days).
    pub crossing_tol: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            step: 0.01,
            horizon: 1000.0,
            crossing_tol: 1e-9,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::Integrator(format!("step must be > 0, got {}", self.step)));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::Integrator(format!("horizon must be > 0, got {}", self.horizon)));
        }
        if self.step > self.horizon {
            return Err(Error::Integrator("step must not exceed horizon".into()));
        }
        if !(self.crossing_tol > 0.0 && self.crossing_tol < self.step) {
            return Err(Error::Integrator(
                "crossing_tol must be positive and smaller than step".into(),
            ));
        }
        Ok(())
    }

    /// Split a duration into whole steps plus a remainder step.
    pub(crate) fn split(&self, t: f64) -> (usize, f64) {
        let n = (t / self.step + 1e-9).floor().max(0.0);
        let rem = t - n * self.step;
        (n as usize, if rem > 1e-12 { rem } else { 0.0 })
    }
}

/// SIRS right-hand side `(dS/dt, dI/dt)` with `R` eliminated.
#[inline]
pub fn eval_f(x: State, u: f64, p: &ModelParams) -> (f64, f64) {
    let infection = u * x.s * x.i;
    (
        -infection + p.xi * (1.0 - x.s - x.i),
        infection - p.gamma * x.i,
    )
}

/// Decomposition function `d(x, u, x̂, û)`.
///
/// The first component depends on the hatted arguments only; the second
/// switches its multiplier between `I` and `Î` on the sign of `u S - gamma`.
#[inline]
pub fn eval_d(x: State, u: f64, xh: State, uh: f64, p: &ModelParams) -> (f64, f64) {
    let d1 = -uh * xh.s * xh.i + p.xi * (1.0 - xh.s - xh.i);
    let growth = u * x.s - p.gamma;
    let d2 = if growth >= 0.0 { growth * x.i } else { growth * xh.i };
    (d1, d2)
}

#[inline]
fn axpy(x: State, h: f64, k: (f64, f64)) -> State {
    State::new(x.s + h * k.0, x.i + h * k.1)
}

#[inline]
pub(crate) fn rk4_step_f(x: State, u: f64, h: f64, p: &ModelParams) -> State {
    let k1 = eval_f(x, u, p);
    let k2 = eval_f(axpy(x, 0.5 * h, k1), u, p);
    let k3 = eval_f(axpy(x, 0.5 * h, k2), u, p);
    let k4 = eval_f(axpy(x, h, k3), u, p);
    State::new(
        x.s + h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
        x.i + h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
    )
}

#[inline]
fn embedded_rhs(e: &EmbeddedState, u: f64, p: &ModelParams) -> ((f64, f64), (f64, f64)) {
    (
        eval_d(e.lower, u, e.upper, u, p),
        eval_d(e.upper, u, e.lower, u, p),
    )
}

#[inline]
fn embedded_axpy(e: &EmbeddedState, h: f64, k: ((f64, f64), (f64, f64))) -> EmbeddedState {
    EmbeddedState::new(axpy(e.lower, h, k.0), axpy(e.upper, h, k.1))
}

#[inline]
pub(crate) fn rk4_step_embedded(e: &EmbeddedState, u: f64, h: f64, p: &ModelParams) -> EmbeddedState {
    let k1 = embedded_rhs(e, u, p);
    let k2 = embedded_rhs(&embedded_axpy(e, 0.5 * h, k1), u, p);
    let k3 = embedded_rhs(&embedded_axpy(e, 0.5 * h, k2), u, p);
    let k4 = embedded_rhs(&embedded_axpy(e, h, k3), u, p);
    let comb = |a: f64, b: f64, c: f64, d: f64| h / 6.0 * (a + 2.0 * b + 2.0 * c + d);
    EmbeddedState::new(
        State::new(
            e.lower.s + comb(k1.0 .0, k2.0 .0, k3.0 .0, k4.0 .0),
            e.lower.i + comb(k1.0 .1, k2.0 .1, k3.0 .1, k4.0 .1),
        ),
        State::new(
            e.upper.s + comb(k1.1 .0, k2.1 .0, k3.1 .0, k4.1 .0),
            e.upper.i + comb(k1.1 .1, k2.1 .1, k3.1 .1, k4.1 .1),
        ),
    )
}

fn check_duration(t: f64, cfg: &IntegratorConfig) -> Result<()> {
    cfg.validate()?;
    if !(t >= 0.0) || t > cfg.horizon {
        return Err(Error::Integrator(format!(
            "duration {t} outside [0, horizon = {}]",
            cfg.horizon
        )));
    }
    Ok(())
}

/// `φ_t^f(x0, u)`: the concrete flow under a constant input.
pub fn integrate_f(x0: State, u: f64, t: f64, p: &ModelParams, cfg: &IntegratorConfig) -> Result<State> {
    check_duration(t, cfg)?;
    let (n, rem) = cfg.split(t);
    let mut x = x0;
    for _ in 0..n {
        x = rk4_step_f(x, u, cfg.step, p);
    }
    if rem > 0.0 {
        x = rk4_step_f(x, u, rem, p);
    }
    Ok(x)
}

/// Solution of the embedded system from `box0` after `t` days.
pub fn integrate_embedded(
    box0: EmbeddedState,
    u: f64,
    t: f64,
    p: &ModelParams,
    cfg: &IntegratorConfig,
) -> Result<EmbeddedState> {
    check_duration(t, cfg)?;
    if !box0.is_ordered(1e-12) {
        return Err(order_error(0.0, &box0));
    }
    let (n, rem) = cfg.split(t);
    let mut e = box0;
    for k in 0..n {
        e = rk4_step_embedded(&e, u, cfg.step, p);
        if !e.is_ordered(1e-9) {
            return Err(order_error((k + 1) as f64 * cfg.step, &e));
        }
    }
    if rem > 0.0 {
        e = rk4_step_embedded(&e, u, rem, p);
        if !e.is_ordered(1e-9) {
            return Err(order_error(t, &e));
        }
    }
    Ok(e)
}

fn order_error(t: f64, e: &EmbeddedState) -> Error {
    Error::EnvelopeOrder {
        t,
        lo_s: e.lower.s,
        lo_i: e.lower.i,
        hi_s: e.upper.s,
        hi_i: e.upper.i,
    }
}

/// Bisect a sign change of `g` inside one step starting at `base`.
///
/// `advance(base, tau)` must return the state `tau` days after `base`.
/// Returns the offset on the side where the sign has already changed.
pub(crate) fn bisect_in_step<S: Copy>(
    base: S,
    h: f64,
    tol: f64,
    advance: impl Fn(S, f64) -> S,
    crossed: impl Fn(&S) -> bool,
) -> (f64, S) {
    let (mut lo, mut hi) = (0.0, h);
    let mut hi_state = advance(base, h);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let s = advance(base, mid);
        if crossed(&s) {
            hi = mid;
            hi_state = s;
        } else {
            lo = mid;
        }
    }
    (hi, hi_state)
}

/// First `t > 0` at which the chosen I-envelope of the embedding started at
/// `box0` reaches `target_i`, or `None` if that does not happen before the
/// configured horizon.
pub fn crossing_time(
    box0: EmbeddedState,
    u: f64,
    target_i: f64,
    envelope: Envelope,
    p: &ModelParams,
    cfg: &IntegratorConfig,
) -> Option<f64> {
    let g = |e: &EmbeddedState| e.envelope(envelope).i - target_i;
    let mut e = box0;
    let mut g0 = g(&e);
    let mut t = 0.0;
    let mut k = 0usize;
    while t < cfg.horizon {
        let h = cfg.step.min(cfg.horizon - t);
        let next = rk4_step_embedded(&e, u, h, p);
        let g1 = g(&next);
        if g0 != 0.0 && (g1 == 0.0 || g1.signum() != g0.signum()) {
            let below = g0 < 0.0;
            let (dt, _) = bisect_in_step(
                e,
                h,
                cfg.crossing_tol,
                |b, tau| rk4_step_embedded(&b, u, tau, p),
                |s| if below { g(s) >= 0.0 } else { g(s) <= 0.0 },
            );
            return Some(t + dt);
        }
        if g0 == 0.0 {
            g0 = g1;
        } else {
            g0 = if g1 == 0.0 { g0 } else { g1 };
        }
        e = next;
        k += 1;
        t = k as f64 * cfg.step;
    }
    None
}

/// A triggering instant of the concrete closed loop.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Event {
    pub time: f64,
    pub state: State,
}

/// First `t > 0` with `|I(t) - I(0)| >= eps` under constant `u`.
pub fn concrete_event_time(
    x0: State,
    u: f64,
    eps: f64,
    p: &ModelParams,
    cfg: &IntegratorConfig,
) -> Option<Event> {
    event_search(x0, u, eps, cfg.horizon, p, cfg, None)
}

/// Event search with an explicit time limit, optionally recording every
/// integrator sample (excluding the initial point and the event itself).
pub(crate) fn event_search(
    x0: State,
    u: f64,
    eps: f64,
    limit: f64,
    p: &ModelParams,
    cfg: &IntegratorConfig,
    mut record: Option<&mut Vec<(f64, State)>>,
) -> Option<Event> {
    let reached = |x: &State| (x.i - x0.i).abs() >= eps;
    let mut x = x0;
    let mut t = 0.0;
    let mut k = 0usize;
    while t < limit {
        let h = cfg.step.min(limit - t);
        let next = rk4_step_f(x, u, h, p);
        if reached(&next) {
            let (dt, state) = bisect_in_step(
                x,
                h,
                cfg.crossing_tol,
                |b, tau| rk4_step_f(b, u, tau, p),
                reached,
            );
            return Some(Event { time: t + dt, state });
        }
        x = next;
        k += 1;
        t = (k as f64 * cfg.step).min(limit);
        if let Some(buf) = record.as_deref_mut() {
            buf.push((t, x));
        }
    }
    None
}
