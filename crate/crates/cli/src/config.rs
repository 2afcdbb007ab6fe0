use std::path::Path;

use serde::{Deserialize, Serialize};

use cascade_core::equilibrium::{VerifyOptions, DEFAULT_BUDGET};
use cascade_core::scenarios::{HetexpGrid, RevorderGrid};
use cascade_core::{Cutoff, CutoffProfile, Params, PriorProfile};

use crate::error::CliError;

/// Grid for the information-term surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceGrid {
    pub deltas: Vec<f64>,
    pub pis: Vec<f64>,
    pub lowest_prior: f64,
    pub e_good: f64,
}

impl Default for SurfaceGrid {
    fn default() -> Self {
        Self {
            deltas: (1..=19).map(|k| k as f64 * 0.05).collect(),
            pis: (1..=19).map(|k| k as f64 * 0.05).collect(),
            lowest_prior: 0.4,
            e_good: 1.0,
        }
    }
}

/// Everything a subcommand may read. Each command uses the fields it needs
/// and ignores the rest.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub params: Option<Params>,
    pub priors: Option<Vec<f64>>,
    pub cutoffs: Option<Vec<Cutoff>>,
    /// Condition on the state (0 or 1) instead of drawing it.
    pub state: Option<u8>,
    /// Belief used to mix the two states in the outcome distribution.
    pub evaluation_prior: Option<f64>,
    pub tau_max: Option<u32>,
    pub budget: Option<u64>,
    pub tolerance: Option<f64>,
    pub off_path_depth: Option<u8>,
    pub seed: Option<u64>,
    pub paths: Option<u64>,
    /// Points on a prior curve.
    pub points: Option<usize>,
    /// Length of a belief trajectory.
    pub failures: Option<u64>,
    pub revorder_grid: Option<RevorderGrid>,
    pub hetexp_grid: Option<HetexpGrid>,
    pub surface: Option<SurfaceGrid>,
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl ScenarioConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let cfg: Self = match path {
            None => Self::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| invalid(format!("cannot read {}: {e}", p.display())))?;
                serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", p.display())))?
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Cross-field checks, run before any computation.
    pub fn validate(&self) -> Result<(), CliError> {
        let priors = self
            .priors
            .as_deref()
            .map(PriorProfile::from_probs)
            .transpose()?;
        if let (Some(params), Some(priors)) = (&self.params, &priors) {
            priors.check_len(params)?;
        }
        if let Some(taus) = &self.cutoffs {
            let priors = priors
                .as_ref()
                .ok_or_else(|| invalid("cutoffs need priors"))?;
            CutoffProfile { taus: taus.clone() }.validate_against(priors)?;
        }
        if let Some(s) = self.state {
            if s > 1 {
                return Err(invalid(format!("state must be 0 or 1, got {s}")));
            }
        }
        if let Some(q) = self.evaluation_prior {
            if !(0.0..=1.0).contains(&q) {
                return Err(invalid(format!(
                    "evaluation_prior must lie in [0,1], got {q}"
                )));
            }
        }
        if let Some(tol) = self.tolerance {
            if !(tol.is_finite() && tol >= 0.0) {
                return Err(invalid(format!(
                    "tolerance must be finite and non-negative, got {tol}"
                )));
            }
        }
        if let Some(d) = self.off_path_depth {
            if d > 1 {
                return Err(invalid(format!("off_path_depth must be 0 or 1, got {d}")));
            }
        }
        if self.paths == Some(0) {
            return Err(invalid("paths must be positive"));
        }
        if let Some(p) = self.points {
            if p < 2 {
                return Err(invalid(format!("points must be at least 2, got {p}")));
            }
        }
        if let Some(s) = &self.surface {
            if !(0.0..=1.0).contains(&s.lowest_prior) {
                return Err(invalid(format!(
                    "surface.lowest_prior must lie in [0,1], got {}",
                    s.lowest_prior
                )));
            }
        }
        Ok(())
    }

    pub fn params(&self) -> Result<Params, CliError> {
        self.params
            .ok_or_else(|| invalid("config is missing `params`"))
    }

    pub fn priors(&self) -> Result<PriorProfile, CliError> {
        let probs = self
            .priors
            .as_deref()
            .ok_or_else(|| invalid("config is missing `priors`"))?;
        Ok(PriorProfile::from_probs(probs)?)
    }

    pub fn cutoffs(&self) -> Result<CutoffProfile, CliError> {
        let taus = self
            .cutoffs
            .clone()
            .ok_or_else(|| invalid("config is missing `cutoffs`"))?;
        Ok(CutoffProfile { taus })
    }

    pub fn verify_options(&self) -> VerifyOptions {
        let mut opts = VerifyOptions::default();
        if let Some(t) = self.tolerance {
            opts.tolerance = t;
        }
        if let Some(d) = self.off_path_depth {
            opts.off_path_depth = d;
        }
        opts
    }

    pub fn budget(&self) -> u64 {
        self.budget.unwrap_or(DEFAULT_BUDGET)
    }
}
