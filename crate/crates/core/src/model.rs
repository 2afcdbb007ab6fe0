//! Domain types shared by every module: game primitives, beliefs, prior and
//! cutoff profiles, and the public game state.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::ModelError;

/// Unvalidated game primitives as they appear in config files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawParams {
    pub delta: f64,
    pub pi: f64,
    pub x_high: f64,
    pub x_low: f64,
    pub n_agents: i64,
}

/// Validated game primitives.
///
/// `e_good` is the expected per-draw payoff of the risky arm in the good
/// state and `e_loss` the positive magnitude of the bad-state loss. Both are
/// derived from `(pi, x_high, x_low)` and cannot be set independently.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Params {
    delta: f64,
    pi: f64,
    x_high: f64,
    x_low: f64,
    n_agents: usize,
    e_good: f64,
    e_loss: f64,
}

fn finite(field: &'static str, value: f64) -> Result<f64, ModelError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(ModelError::NonFinite { field })
    }
}

fn violation(field: &'static str, value: f64, bound: &'static str) -> ModelError {
    ModelError::Constraint {
        field,
        value,
        bound,
    }
}

/// Checks every model assumption and populates the derived payoff moments.
pub fn validate_params(raw: RawParams) -> Result<Params, ModelError> {
    let delta = finite("delta", raw.delta)?;
    let pi = finite("pi", raw.pi)?;
    let x_high = finite("x_high", raw.x_high)?;
    let x_low = finite("x_low", raw.x_low)?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(violation("delta", delta, "must lie strictly inside (0,1)"));
    }
    if !(pi > 0.0 && pi < 1.0) {
        return Err(violation("pi", pi, "must lie strictly inside (0,1)"));
    }
    if x_high <= 0.0 {
        return Err(violation("x_high", x_high, "must be > 0"));
    }
    if x_low >= 0.0 {
        return Err(violation("x_low", x_low, "must be < 0"));
    }
    if raw.n_agents < 1 {
        return Err(violation("n_agents", raw.n_agents as f64, "must be >= 1"));
    }
    let e_good = pi * x_high + (1.0 - pi) * x_low;
    if e_good <= 0.0 {
        return Err(violation(
            "e_good",
            e_good,
            "pi*x_high + (1-pi)*x_low must be > 0",
        ));
    }
    Ok(Params {
        delta,
        pi,
        x_high,
        x_low,
        n_agents: raw.n_agents as usize,
        e_good,
        e_loss: -x_low,
    })
}

impl Params {
    pub fn new(
        delta: f64,
        pi: f64,
        x_high: f64,
        x_low: f64,
        n_agents: usize,
    ) -> Result<Self, ModelError> {
        validate_params(RawParams {
            delta,
            pi,
            x_high,
            x_low,
            n_agents: n_agents as i64,
        })
    }

    /// Builds parameters from the payoff moments `(E_1, E_0)` instead of the
    /// raw payoffs: `x_low = -e_loss` and `x_high` solves the good-state mean.
    pub fn from_moments(
        delta: f64,
        pi: f64,
        e_good: f64,
        e_loss: f64,
        n_agents: usize,
    ) -> Result<Self, ModelError> {
        let x_low = -e_loss;
        let x_high = (e_good - (1.0 - pi) * x_low) / pi;
        Self::new(delta, pi, x_high, x_low, n_agents)
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
    pub fn pi(&self) -> f64 {
        self.pi
    }
    pub fn x_high(&self) -> f64 {
        self.x_high
    }
    pub fn x_low(&self) -> f64 {
        self.x_low
    }
    pub fn n_agents(&self) -> usize {
        self.n_agents
    }
    /// Good-state expected per-draw payoff.
    pub fn e_good(&self) -> f64 {
        self.e_good
    }
    /// Bad-state per-draw loss, as a positive number.
    pub fn e_loss(&self) -> f64 {
        self.e_loss
    }

    pub fn raw(&self) -> RawParams {
        RawParams {
            delta: self.delta,
            pi: self.pi,
            x_high: self.x_high,
            x_low: self.x_low,
            n_agents: self.n_agents as i64,
        }
    }

    pub fn with_agents(&self, n_agents: usize) -> Result<Self, ModelError> {
        Self::new(self.delta, self.pi, self.x_high, self.x_low, n_agents)
    }

    /// Jointly rescales both payoffs by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self, ModelError> {
        Self::new(
            self.delta,
            self.pi,
            c * self.x_high,
            c * self.x_low,
            self.n_agents,
        )
    }

    /// Expected per-draw payoff conditional on the state.
    pub fn mean_payoff(&self, good: bool) -> f64 {
        if good {
            self.e_good
        } else {
            self.x_low
        }
    }
}

impl Serialize for Params {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.raw().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Params {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = RawParams::deserialize(d)?;
        validate_params(raw).map_err(serde::de::Error::custom)
    }
}

/// Probability of the good state, carried together with its log-odds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Belief {
    prob: f64,
    log_odds: f64,
}

impl Belief {
    pub fn new(prob: f64) -> Result<Self, ModelError> {
        if !prob.is_finite() {
            return Err(ModelError::NonFinite { field: "belief" });
        }
        if !(0.0..=1.0).contains(&prob) {
            return Err(violation("belief", prob, "must lie in [0,1]"));
        }
        let log_odds = if prob == 0.0 {
            f64::NEG_INFINITY
        } else if prob == 1.0 {
            f64::INFINITY
        } else {
            prob.ln() - (-prob).ln_1p()
        };
        Ok(Self { prob, log_odds })
    }

    /// Materializes the probability from a log-odds value. The argument must
    /// not be NaN; `±inf` map to the endpoints.
    pub fn from_log_odds(log_odds: f64) -> Self {
        debug_assert!(!log_odds.is_nan());
        let prob = if log_odds == f64::INFINITY {
            1.0
        } else if log_odds == f64::NEG_INFINITY {
            0.0
        } else if log_odds >= 0.0 {
            1.0 / (1.0 + (-log_odds).exp())
        } else {
            let e = log_odds.exp();
            e / (1.0 + e)
        };
        Self { prob, log_odds }
    }

    pub fn certain() -> Self {
        Self {
            prob: 1.0,
            log_odds: f64::INFINITY,
        }
    }

    pub fn impossible() -> Self {
        Self {
            prob: 0.0,
            log_odds: f64::NEG_INFINITY,
        }
    }

    pub fn prob(&self) -> f64 {
        self.prob
    }

    pub fn log_odds(&self) -> f64 {
        self.log_odds
    }

    pub fn is_certain(&self) -> bool {
        self.prob == 1.0
    }
}

impl fmt::Display for Belief {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.prob)
    }
}

impl Serialize for Belief {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.prob)
    }
}

impl<'de> Deserialize<'de> for Belief {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let p = f64::deserialize(d)?;
        Belief::new(p).map_err(serde::de::Error::custom)
    }
}

/// Commonly known priors, one per agent, labelled in non-increasing order.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorProfile {
    priors: Vec<Belief>,
}

impl PriorProfile {
    pub fn new(priors: Vec<Belief>) -> Result<Self, ModelError> {
        if priors.is_empty() {
            return Err(ModelError::Length {
                what: "priors",
                expected: 1,
                found: 0,
            });
        }
        if priors.windows(2).any(|w| w[0].prob() < w[1].prob()) {
            return Err(ModelError::PriorOrder);
        }
        Ok(Self { priors })
    }

    pub fn from_probs(probs: &[f64]) -> Result<Self, ModelError> {
        let priors = probs
            .iter()
            .map(|&p| Belief::new(p))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(priors)
    }

    pub fn common(prob: f64, n: usize) -> Result<Self, ModelError> {
        Self::from_probs(&vec![prob; n])
    }

    pub fn check_len(&self, params: &Params) -> Result<(), ModelError> {
        if self.priors.len() != params.n_agents() {
            return Err(ModelError::Length {
                what: "priors",
                expected: params.n_agents(),
                found: self.priors.len(),
            });
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.priors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.priors.is_empty()
    }

    pub fn get(&self, i: usize) -> Belief {
        self.priors[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Belief> {
        self.priors.iter()
    }

    pub fn probs(&self) -> Vec<f64> {
        self.priors.iter().map(Belief::prob).collect()
    }

    /// Largest prior in the profile.
    pub fn max_prob(&self) -> f64 {
        self.priors[0].prob()
    }

    pub fn is_common(&self) -> bool {
        self.priors
            .iter()
            .all(|b| b.prob() == self.priors[0].prob())
    }
}

impl Serialize for PriorProfile {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.priors.serialize(s)
    }
}

impl<'de> Deserialize<'de> for PriorProfile {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let priors = Vec::<Belief>::deserialize(d)?;
        PriorProfile::new(priors).map_err(serde::de::Error::custom)
    }
}

/// Number of all-failure periods an agent explores before switching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Cutoff {
    Finite(u32),
    Unbounded,
}

impl Cutoff {
    pub fn finite(&self) -> Option<u32> {
        match self {
            Cutoff::Finite(t) => Some(*t),
            Cutoff::Unbounded => None,
        }
    }

    pub fn is_unbounded(&self) -> bool {
        matches!(self, Cutoff::Unbounded)
    }
}

impl fmt::Display for Cutoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cutoff::Finite(t) => write!(f, "{t}"),
            Cutoff::Unbounded => f.write_str("unbounded"),
        }
    }
}

impl Serialize for Cutoff {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Cutoff::Finite(t) => s.serialize_u32(*t),
            Cutoff::Unbounded => s.serialize_str("unbounded"),
        }
    }
}

impl<'de> Deserialize<'de> for Cutoff {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(u32),
            Word(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(t) => Ok(Cutoff::Finite(t)),
            Repr::Word(w) if w == "unbounded" => Ok(Cutoff::Unbounded),
            Repr::Word(w) => Err(serde::de::Error::custom(format!(
                "cutoff must be a non-negative integer or \"unbounded\", got {w:?}"
            ))),
        }
    }
}

/// Per-agent exploration cutoffs.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CutoffProfile {
    pub taus: Vec<Cutoff>,
}

impl CutoffProfile {
    pub fn finite(taus: &[u32]) -> Self {
        Self {
            taus: taus.iter().map(|&t| Cutoff::Finite(t)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.taus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taus.is_empty()
    }

    /// The finite cutoffs, or `None` if any entry is unbounded.
    pub fn as_finite(&self) -> Option<Vec<u32>> {
        self.taus.iter().map(Cutoff::finite).collect()
    }

    /// Largest cutoff in the profile.
    pub fn max_cutoff(&self) -> Cutoff {
        self.taus.iter().copied().max().unwrap_or(Cutoff::Finite(0))
    }

    /// Checks length and that the unbounded sentinel only appears for
    /// agents whose prior is exactly one.
    pub fn validate_against(&self, priors: &PriorProfile) -> Result<(), ModelError> {
        if self.taus.len() != priors.len() {
            return Err(ModelError::Length {
                what: "taus",
                expected: priors.len(),
                found: self.taus.len(),
            });
        }
        for (i, tau) in self.taus.iter().enumerate() {
            if tau.is_unbounded() && !priors.get(i).is_certain() {
                return Err(ModelError::UnboundedCutoff { agent: i });
            }
        }
        Ok(())
    }
}

impl fmt::Display for CutoffProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, t) in self.taus.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{t}")?;
        }
        f.write_str(")")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Risky,
    Safe,
}

impl Action {
    pub fn flipped(self) -> Self {
        match self {
            Action::Risky => Action::Safe,
            Action::Safe => Action::Risky,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum AgentStatus {
    Exploring,
    Switched { at_period: u32 },
    RiskyForever,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RevelationCause {
    None,
    SuccessSignal,
    OffCutoffRisky,
}

/// Public history summary plus the private failure tallies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameState {
    pub t: u32,
    pub statuses: Vec<AgentStatus>,
    pub revelation: RevelationCause,
    pub failure_counts: Vec<u32>,
    pub public_belief_basis: Vec<u32>,
    /// Someone switched before her cutoff and play follows the belief rule.
    #[serde(default)]
    pub off_path: bool,
}

impl GameState {
    pub fn initial(n: usize) -> Self {
        Self {
            t: 1,
            statuses: vec![AgentStatus::Exploring; n],
            revelation: RevelationCause::None,
            failure_counts: vec![0; n],
            public_belief_basis: vec![0; n],
            off_path: false,
        }
    }

    pub fn check_invariants(&self) -> Result<(), String> {
        for (i, s) in self.statuses.iter().enumerate() {
            if let AgentStatus::Switched { at_period } = s {
                if *at_period >= self.t {
                    return Err(format!(
                        "agent {i} switched at {at_period} >= t = {}",
                        self.t
                    ));
                }
            }
        }
        for (i, (p, f)) in self
            .public_belief_basis
            .iter()
            .zip(&self.failure_counts)
            .enumerate()
        {
            if p > f {
                return Err(format!("agent {i}: public failures {p} exceed private {f}"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_moments() {
        let p = Params::new(0.2, 0.6, 4.0, -1.0, 3).unwrap();
        assert!((p.e_good() - 2.0).abs() < 1e-15);
        assert_eq!(p.e_loss(), 1.0);
        let lhs = p.e_good() + p.e_loss();
        let rhs = p.pi() * (p.x_high() - p.x_low());
        assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs());
    }

    #[test]
    fn zero_good_state_mean_is_rejected() {
        let err = Params::new(0.2, 0.5, 1.0, -1.0, 2).unwrap_err();
        assert!(err.to_string().contains("e_good"), "{err}");
    }

    #[test]
    fn delta_bounds() {
        let err = Params::new(1.0, 0.6, 4.0, -1.0, 3).unwrap_err();
        assert!(err.to_string().contains("delta"));
        assert!(err.to_string().contains("(0,1)"));
        assert!(Params::new(0.0, 0.6, 4.0, -1.0, 3).is_err());
        assert!(Params::new(f64::NAN, 0.6, 4.0, -1.0, 3).is_err());
    }

    #[test]
    fn other_bounds() {
        assert!(Params::new(0.5, 0.0, 4.0, -1.0, 3).is_err());
        assert!(Params::new(0.5, 0.5, -4.0, -1.0, 3).is_err());
        assert!(Params::new(0.5, 0.5, 4.0, 0.0, 3).is_err());
        assert!(Params::new(0.5, 0.5, 4.0, -1.0, 0).is_err());
        assert!(Params::new(0.5, 0.5, f64::INFINITY, -1.0, 2).is_err());
    }

    #[test]
    fn from_moments_recovers_moments() {
        let p = Params::from_moments(0.2, 0.6, 2.0, 1.0, 3).unwrap();
        assert!((p.e_good() - 2.0).abs() < 1e-12);
        assert_eq!(p.e_loss(), 1.0);
        assert!((p.x_high() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn params_json_uses_stable_names() {
        let p = Params::new(0.2, 0.6, 4.0, -1.0, 3).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(
            s,
            r#"{"delta":0.2,"pi":0.6,"x_high":4.0,"x_low":-1.0,"n_agents":3}"#
        );
        let bad = r#"{"delta":0.2,"pi":0.6,"x_high":4.0,"x_low":-1.0,"n_agents":3,"extra":1}"#;
        assert!(serde_json::from_str::<Params>(bad).is_err());
    }

    #[test]
    fn belief_endpoints() {
        assert_eq!(Belief::new(1.0).unwrap().log_odds(), f64::INFINITY);
        assert_eq!(Belief::new(0.0).unwrap().log_odds(), f64::NEG_INFINITY);
        assert!(Belief::new(1.5).is_err());
        let b = Belief::new(0.25).unwrap();
        assert!((b.log_odds() - (1.0f64 / 3.0).ln()).abs() < 1e-15);
        let c = Belief::from_log_odds(b.log_odds());
        assert!((c.prob() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn prior_profile_order() {
        assert!(PriorProfile::from_probs(&[0.6, 0.5, 0.4]).is_ok());
        assert!(matches!(
            PriorProfile::from_probs(&[0.4, 0.5]),
            Err(ModelError::PriorOrder)
        ));
        let parsed: PriorProfile = serde_json::from_str("[0.7,0.7]").unwrap();
        assert!(parsed.is_common());
    }

    #[test]
    fn cutoff_sentinel() {
        let c: CutoffProfile = serde_json::from_str(r#"{"taus":[3,"unbounded"]}"#).unwrap();
        assert_eq!(c.taus[1], Cutoff::Unbounded);
        assert_eq!(c.max_cutoff(), Cutoff::Unbounded);
        assert_eq!(
            serde_json::to_string(&c).unwrap(),
            r#"{"taus":[3,"unbounded"]}"#
        );
        let priors = PriorProfile::from_probs(&[1.0, 0.5]).unwrap();
        assert!(matches!(
            c.validate_against(&priors),
            Err(ModelError::UnboundedCutoff { agent: 1 })
        ));
        let ok = CutoffProfile {
            taus: vec![Cutoff::Unbounded, Cutoff::Finite(2)],
        };
        assert!(ok.validate_against(&priors).is_ok());
        assert!(serde_json::from_str::<CutoffProfile>(r#"{"taus":[-1]}"#).is_err());
    }

    #[test]
    fn game_state_invariants() {
        let mut g = GameState::initial(2);
        g.t = 3;
        g.statuses[0] = AgentStatus::Switched { at_period: 2 };
        g.failure_counts = vec![1, 2];
        g.public_belief_basis = vec![1, 0];
        assert!(g.check_invariants().is_ok());
        g.public_belief_basis = vec![2, 0];
        assert!(g.check_invariants().is_err());
    }
}
