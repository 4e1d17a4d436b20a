//! Flat TOML run configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::abstraction::{AbstractionConfig, AbstractionOptions, Bounds, Grid, Thresholds};
use crate::dynamics::{IntegratorConfig, ModelParams};
use crate::error::{Error, Result};
use crate::runtime::SelectionConfig;

/// `Ī_S = N_ICU / (N_total τ)`, optionally rounded down to two decimals.
pub fn derive_ibar_from_icu(n_icu: f64, n_total: f64, tau: f64, round_down: bool) -> Result<f64> {
    if !(n_icu > 0.0 && n_total > 0.0 && tau > 0.0) {
        return Err(Error::Config(format!(
            "ICU inputs must be positive, got N_ICU={n_icu}, N_total={n_total}, tau={tau}"
        )));
    }
    let q = n_icu / (n_total * tau);
    Ok(if round_down { (q * 100.0 + 1e-9).floor() / 100.0 } else { q })
}

#[allow(non_snake_case)]
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub gamma: f64,
    pub xi: f64,
    pub u_levels: Vec<f64>,
    pub eta_S: f64,
    pub eta_I: f64,
    pub thresholds: Vec<f64>,
    pub S0_lower: f64,
    pub S0_upper: f64,
    pub I0_lower: f64,
    pub I0_upper: f64,
    pub S_S_lower: f64,
    /// Falls back to the ICU quotient, then to 0.10.
    pub I_S_upper: Option<f64>,
    pub S_F_lower: f64,
    pub I_F_upper: f64,
    pub step: f64,
    pub horizon: f64,
    pub crossing_tol: f64,
    pub lambda: f64,
    pub T: f64,
    pub max_depth: usize,
    pub tail_tol: f64,
    pub t_end: f64,
    pub seed: u64,
    pub N_ICU: Option<f64>,
    pub N_total: Option<f64>,
    pub tau: Option<f64>,
    pub strict_direction_check: bool,
    pub guard_s_lower: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let p = ModelParams::tokyo();
        let b = Bounds::tokyo();
        let ic = IntegratorConfig::default();
        let sel = SelectionConfig::default();
        Self {
            gamma: p.gamma,
            xi: p.xi,
            u_levels: p.u_levels,
            eta_S: 0.01,
            eta_I: 0.01,
            thresholds: vec![0.01, 0.02, 0.03],
            S0_lower: b.s0_lower,
            S0_upper: b.s0_upper,
            I0_lower: b.i0_lower,
            I0_upper: b.i0_upper,
            S_S_lower: b.s_safe_lower,
            I_S_upper: None,
            S_F_lower: b.s_term_lower,
            I_F_upper: b.i_term_upper,
            step: ic.step,
            horizon: ic.horizon,
            crossing_tol: ic.crossing_tol,
            lambda: sel.lambda,
            T: sel.horizon_t,
            max_depth: sel.max_depth,
            tail_tol: sel.tail_tol,
            t_end: 1000.0,
            seed: 20200401,
            N_ICU: None,
            N_total: None,
            tau: None,
            strict_direction_check: false,
            guard_s_lower: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn safe_upper(&self) -> Result<f64> {
        if let Some(v) = self.I_S_upper {
            return Ok(v);
        }
        match (self.N_ICU, self.N_total, self.tau) {
            (Some(a), Some(b), Some(c)) => derive_ibar_from_icu(a, b, c, true),
            (None, None, None) => Ok(Bounds::tokyo().i_safe_upper),
            _ => Err(Error::Config("N_ICU, N_total and tau must be given together".into())),
        }
    }

    pub fn params(&self) -> Result<ModelParams> {
        ModelParams::new(self.gamma, self.xi, self.u_levels.clone())
            .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn bounds(&self) -> Result<Bounds> {
        let b = Bounds {
            s0_lower: self.S0_lower,
            s0_upper: self.S0_upper,
            i0_lower: self.I0_lower,
            i0_upper: self.I0_upper,
            s_safe_lower: self.S_S_lower,
            i_safe_upper: self.safe_upper()?,
            s_term_lower: self.S_F_lower,
            i_term_upper: self.I_F_upper,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn integrator(&self) -> IntegratorConfig {
        IntegratorConfig {
            step: self.step,
            horizon: self.horizon,
            crossing_tol: self.crossing_tol,
        }
    }

    pub fn selection(&self) -> SelectionConfig {
        SelectionConfig {
            lambda: self.lambda,
            horizon_t: self.T,
            max_depth: self.max_depth,
            tail_tol: self.tail_tol,
        }
    }

    pub fn abstraction(&self) -> Result<AbstractionConfig> {
        let grid = Grid::new(self.eta_S, self.eta_I)?;
        let cfg = AbstractionConfig {
            params: self.params()?,
            thresholds: Thresholds::new(self.thresholds.clone(), &grid)?,
            grid,
            bounds: self.bounds()?,
            integrator: self.integrator(),
            options: AbstractionOptions {
                strict_direction_check: self.strict_direction_check,
                guard_s_lower: self.guard_s_lower,
            },
        };
        cfg.validate()
            .map_err(|e| match e {
                Error::InvalidParams(m) | Error::Integrator(m) => Error::Config(m),
                other => other,
            })?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.abstraction()?;
        self.selection().validate()?;
        if !(self.t_end > 0.0) {
            return Err(Error::Config("t_end must be positive".into()));
        }
        Ok(())
    }
}
