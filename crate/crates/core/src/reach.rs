//! Reachable-set over-approximations: the mixed-monotone box and the
//! Lipschitz/Gronwall ball it is compared against.

use serde::{Deserialize, Serialize};

use crate::dynamics::{integrate_embedded, integrate_f, EmbeddedState, IntegratorConfig, ModelParams, State};
use crate::error::{Error, Result};

/// Axis-aligned rectangle `⟦lo, hi⟧` in the `(S, I)` plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalBox {
    pub lo: State,
    pub hi: State,
}

impl IntervalBox {
    pub fn new(lo: State, hi: State) -> Result<Self> {
        if !lo.precedes(&hi, 0.0) {
            return Err(Error::Config(format!(
                "interval box corners out of order: {lo:?} vs {hi:?}"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn point(x: State) -> Self {
        Self { lo: x, hi: x }
    }

    pub fn centered(c: State, half_s: f64, half_i: f64) -> Self {
        Self {
            lo: State::new(c.s - half_s, c.i - half_i),
            hi: State::new(c.s + half_s, c.i + half_i),
        }
    }

    pub fn unit_square() -> Self {
        Self {
            lo: State::new(0.0, 0.0),
            hi: State::new(1.0, 1.0),
        }
    }

    pub fn width_s(&self) -> f64 {
        self.hi.s - self.lo.s
    }

    pub fn width_i(&self) -> f64 {
        self.hi.i - self.lo.i
    }

    pub fn area(&self) -> f64 {
        self.width_s() * self.width_i()
    }

    pub fn contains(&self, x: State, tol: f64) -> bool {
        self.lo.precedes(&x, tol) && x.precedes(&self.hi, tol)
    }

    pub fn contains_box(&self, other: &IntervalBox, tol: f64) -> bool {
        self.contains(other.lo, tol) && self.contains(other.hi, tol)
    }

    /// The upper corner lies outside the simplex; only meaningful as an
    /// over-approximation artifact.
    pub fn exits_simplex(&self) -> bool {
        !self.lo.in_simplex(0.0) || !self.hi.in_simplex(0.0)
    }

    /// Clip both corners to `[0, 1]²` for grid lookups.
    pub fn clipped(&self) -> IntervalBox {
        let c = |x: f64| x.clamp(0.0, 1.0);
        IntervalBox {
            lo: State::new(c(self.lo.s), c(self.lo.i)),
            hi: State::new(c(self.hi.s), c(self.hi.i)),
        }
    }

    pub fn corners(&self) -> [State; 4] {
        [
            self.lo,
            State::new(self.hi.s, self.lo.i),
            self.hi,
            State::new(self.lo.s, self.hi.i),
        ]
    }
}

/// Infinity-norm ball `B(center, radius)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallApprox {
    pub center: State,
    pub radius: f64,
}

impl BallApprox {
    pub fn bounding_box(&self) -> IntervalBox {
        IntervalBox::centered(self.center, self.radius, self.radius)
    }
}

/// Mixed-monotone over-approximation of the states reachable at time `t`
/// from `bx` under the constant input `u`.
pub fn over_approx_reach(
    bx: &IntervalBox,
    u: f64,
    t: f64,
    p: &ModelParams,
    cfg: &IntegratorConfig,
) -> Result<IntervalBox> {
    let e = integrate_embedded(EmbeddedState::new(bx.lo, bx.hi), u, t, p, cfg)?;
    Ok(IntervalBox { lo: e.lower, hi: e.upper })
}

/// Infinity-norm Jacobian row sums of `f` at one point.
fn jacobian_norm(x: State, u: f64, p: &ModelParams) -> f64 {
    let row_s = (-u * x.i - p.xi).abs() + (-u * x.s - p.xi).abs();
    let row_i = (u * x.i).abs() + (u * x.s - p.gamma).abs();
    row_s.max(row_i)
}

/// Upper bound on `‖∂f/∂x‖_∞` over `domain × u_levels`.
///
/// Every Jacobian entry is affine in `(S, I, u)`, so each absolute row sum is
/// convex and its maximum over the box sits at a corner.
pub fn estimate_lipschitz_constant(p: &ModelParams, domain: &IntervalBox) -> f64 {
    let mut best: f64 = 0.0;
    for corner in domain.corners() {
        for &u in &p.u_levels {
            best = best.max(jacobian_norm(corner, u, p));
        }
    }
    best
}

/// Gronwall ball around the nominal trajectory using the Lipschitz constant
/// of the unit square.
pub fn lipschitz_ball_reach(
    center: State,
    eps: f64,
    u: f64,
    t: f64,
    p: &ModelParams,
    cfg: &IntegratorConfig,
) -> Result<BallApprox> {
    lipschitz_ball_reach_in(center, eps, u, t, &IntervalBox::unit_square(), p, cfg)
}

/// Same as [`lipschitz_ball_reach`] with the Lipschitz constant taken over
/// a caller-supplied analysis domain.
pub fn lipschitz_ball_reach_in(
    center: State,
    eps: f64,
    u: f64,
    t: f64,
    domain: &IntervalBox,
    p: &ModelParams,
    cfg: &IntegratorConfig,
) -> Result<BallApprox> {
    if !(eps >= 0.0) {
        return Err(Error::Config(format!("ball radius must be >= 0, got {eps}")));
    }
    let lf = estimate_lipschitz_constant(p, domain);
    Ok(BallApprox {
        center: integrate_f(center, u, t, p, cfg)?,
        radius: eps * (lf * t).exp(),
    })
}
