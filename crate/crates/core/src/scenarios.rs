//! Two worked three-agent examples: a reversed cutoff order, where a less
//! optimistic agent explores longer than a more optimistic one, and
//! over-exploration, where an agent explores past her lone-agent stopping
//! time to keep more optimistic agents exploring.
//!
//! Agent indices follow prior order: index 0 holds the highest prior.

use serde::{Deserialize, Serialize};

use crate::beliefs::posterior_after_failures;
use crate::cutoffs::{single_agent_cutoff, tau_single};
use crate::equilibrium::{verify_cutoffs, DeviationReport, VerifyOptions};
use crate::error::{CascadeError, Result};
use crate::model::{Belief, CutoffProfile, Params, PriorProfile};

/// Prior whose lone-agent stopping time is `k`, placed at fraction
/// `lambda` in `[0, 1)` across the band of such priors (in log-odds).
pub fn prior_in_band(params: &Params, k: u32, lambda: f64) -> Result<Belief> {
    if k == 0 || !(0.0..1.0).contains(&lambda) {
        return Err(CascadeError::Invalid(format!(
            "band position needs k >= 1 and lambda in [0,1), got k = {k}, lambda = {lambda}"
        )));
    }
    let step = (-params.pi()).ln_1p();
    let cut = single_agent_cutoff(params).log_odds();
    Ok(Belief::from_log_odds(
        cut - (k as f64 - 1.0 + lambda) * step,
    ))
}

/// Parameter grid, searched in the listed order with the last field varying
/// fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamGrid {
    pub deltas: Vec<f64>,
    pub pis: Vec<f64>,
    pub e_goods: Vec<f64>,
    pub e_losses: Vec<f64>,
}

impl ParamGrid {
    fn points(&self, n: usize) -> Vec<Params> {
        let mut out = Vec::new();
        for &d in &self.deltas {
            for &pi in &self.pis {
                for &e1 in &self.e_goods {
                    for &e0 in &self.e_losses {
                        if let Ok(p) = Params::from_moments(d, pi, e1, e0, n) {
                            out.push(p);
                        }
                    }
                }
            }
        }
        out
    }

    fn size(&self) -> usize {
        self.deltas.len() * self.pis.len() * self.e_goods.len() * self.e_losses.len()
    }
}

/// Benefit terms at the period-2 decision of the reversed-order profile.
/// Gaps are the benefit of risky over safe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RevorderGaps {
    /// Beliefs of the middle and lowest-prior agents at period 2.
    pub p2: f64,
    pub p3: f64,
    pub g2: f64,
    pub g3: f64,
    /// Middle agent's information benefit from staying on path, backed out
    /// of her exact gap.
    pub i2: f64,
    /// Lowest-prior agent's information benefit on path and after deviating.
    pub i3p: f64,
    pub i3d: f64,
    /// Exact benefit of risky over safe for the lowest-prior agent.
    pub g3_exact: f64,
}

/// Information benefits `(on path, after deviating)` of the lowest-prior
/// agent at belief `p3`.
pub fn revorder_information(p3: f64, params: &Params) -> (f64, f64) {
    let (d, pi, e1) = (params.delta(), params.pi(), params.e_good());
    let i3p = d.powi(3) * p3 * (1.0 - (1.0 - pi).powi(3)) * e1;
    let i3d = d.powi(2) * p3 * (1.0 - (1.0 - pi).powi(2)) * e1;
    (i3p, i3d)
}

fn myopic(p: f64, params: &Params) -> f64 {
    p * params.pi() * params.e_good() - (1.0 - p) * (1.0 - params.delta()) * params.e_loss()
}

fn on_path_node(
    report: &DeviationReport,
    agent: usize,
    t: u32,
) -> Result<&crate::equilibrium::NodeReport> {
    let n = report.cutoffs.len();
    let history = vec!["R".repeat(n); (t - 1) as usize].join("|");
    report
        .nodes
        .iter()
        .find(|x| {
            x.on_path()
                && x.agent == agent
                && x.t == t
                && !x.own_success
                && !x.informed
                && x.history == history
        })
        .ok_or_else(|| {
            CascadeError::Invariant(format!("no all-risky node for agent {agent} at t = {t}"))
        })
}

fn revorder_cutoffs() -> CutoffProfile {
    CutoffProfile::finite(&[3, 1, 2])
}

/// Formula gaps plus the exact period-2 gaps of the middle and lowest-prior
/// agents under the `(3,1,2)` profile.
pub fn revorder_gaps(priors: &PriorProfile, params: &Params) -> Result<RevorderGaps> {
    if priors.len() != 3 || params.n_agents() != 3 {
        return Err(CascadeError::Invalid(
            "the reversed-order example has three agents".into(),
        ));
    }
    let opts = VerifyOptions {
        off_path_depth: 0,
        ..VerifyOptions::default()
    };
    let report = verify_cutoffs(params, priors, &revorder_cutoffs(), &opts)?;
    revorder_gaps_from(priors, params, &report)
}

fn revorder_gaps_from(
    priors: &PriorProfile,
    params: &Params,
    report: &DeviationReport,
) -> Result<RevorderGaps> {
    let pi = params.pi();
    let p2 = posterior_after_failures(priors.get(1), pi, 1).prob();
    let p3 = posterior_after_failures(priors.get(2), pi, 1).prob();
    let (i3p, i3d) = revorder_information(p3, params);
    // middle agent is told to switch: risky is the deviation
    let g2 = on_path_node(report, 1, 2)?.gain;
    let g3_exact = -on_path_node(report, 2, 2)?.gain;
    Ok(RevorderGaps {
        p2,
        p3,
        g2,
        g3: myopic(p3, params) + i3p - i3d,
        i2: myopic(p2, params) - g2,
        i3p,
        i3d,
        g3_exact,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RevorderGrid {
    pub params: ParamGrid,
    /// Band positions for the top agent, whose lone stopping time is 4.
    pub top_positions: Vec<f64>,
    /// Band positions for the other two, whose lone stopping time is 2;
    /// pairs are taken with the middle agent strictly above the lowest.
    pub low_positions: Vec<f64>,
}

impl Default for RevorderGrid {
    fn default() -> Self {
        Self {
            params: ParamGrid {
                deltas: vec![0.6, 0.65, 0.7, 0.75],
                pis: vec![0.45, 0.5, 0.55, 0.6],
                e_goods: vec![0.25, 1.0, 3.0, 9.0],
                e_losses: vec![1.0],
            },
            top_positions: vec![0.8, 0.9, 0.98],
            low_positions: vec![0.6, 0.7, 0.8, 0.9, 0.98],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScenarioGaps {
    Revorder(RevorderGaps),
    Hetexp(HetexpGaps),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub params: Option<Params>,
    pub priors: Option<PriorProfile>,
    pub cutoffs: CutoffProfile,
    pub gaps: Option<ScenarioGaps>,
    /// Full one-shot deviation check, including nodes after one flip.
    pub verified: bool,
    /// For the reversed-order search: whether the profile with the two
    /// lower agents' cutoffs exchanged also verifies.
    pub swapped_verified: Option<bool>,
    pub points_searched: usize,
    pub notes: Vec<String>,
}

impl ScenarioResult {
    fn exhausted(cutoffs: CutoffProfile, points_searched: usize, note: &str) -> Self {
        Self {
            params: None,
            priors: None,
            cutoffs,
            gaps: None,
            verified: false,
            swapped_verified: None,
            points_searched,
            notes: vec![note.to_string()],
        }
    }
}

/// First grid point where `(3,1,2)` is an equilibrium with strictly
/// decreasing priors, the lowest agent gains from staying and the middle
/// agent gains from leaving.
pub fn search_revorder(grid: &RevorderGrid) -> Result<ScenarioResult> {
    let full = VerifyOptions {
        stop_at_first_failure: true,
        ..VerifyOptions::default()
    };
    let on_path = VerifyOptions {
        off_path_depth: 0,
        ..full
    };
    let mut searched = 0;
    for params in grid.params.points(3) {
        for &top in &grid.top_positions {
            for &mid in &grid.low_positions {
                for &low in &grid.low_positions {
                    let q1 = prior_in_band(&params, 4, top)?.prob();
                    let q2 = prior_in_band(&params, 2, mid)?.prob();
                    let q3 = prior_in_band(&params, 2, low)?.prob();
                    if !(q1 > q2 && q2 > q3) {
                        continue;
                    }
                    searched += 1;
                    let priors = PriorProfile::from_probs(&[q1, q2, q3])?;
                    // a passing report is complete even with early stopping
                    let report = verify_cutoffs(&params, &priors, &revorder_cutoffs(), &on_path)?;
                    if !report.is_equilibrium {
                        continue;
                    }
                    let gaps = revorder_gaps_from(&priors, &params, &report)?;
                    if !(gaps.g3 > 0.0 && gaps.g2 < 0.0) {
                        continue;
                    }
                    if !verify_cutoffs(&params, &priors, &revorder_cutoffs(), &full)?.is_equilibrium
                    {
                        continue;
                    }
                    let swapped = verify_cutoffs(
                        &params,
                        &priors,
                        &CutoffProfile::finite(&[3, 2, 1]),
                        &full,
                    )?
                    .is_equilibrium;
                    return Ok(ScenarioResult {
                        params: Some(params),
                        priors: Some(priors),
                        cutoffs: revorder_cutoffs(),
                        gaps: Some(ScenarioGaps::Revorder(gaps)),
                        verified: true,
                        swapped_verified: Some(swapped),
                        points_searched: searched,
                        notes: vec![format!(
                            "band positions top {top}, middle {mid}, lowest {low}; grid of {} parameter points",
                            grid.params.size()
                        )],
                    });
                }
            }
        }
    }
    Ok(ScenarioResult::exhausted(
        revorder_cutoffs(),
        searched,
        "grid exhausted without a satisfying point",
    ))
}

/// Sign condition behind over-exploration as patience grows:
/// `(1-pi)(1-(1-pi)^11) - (1-(1-pi)^8)`.
pub fn hetexp_condition(pi: f64) -> f64 {
    let s = 1.0 - pi;
    s * (1.0 - s.powi(11)) - (1.0 - s.powi(8))
}

/// Gap at one decision node: `formula_*` fields transcribe the worked
/// payoff expressions, `exact_gap` comes from the verifier. Gaps are the
/// prescribed value minus the deviation value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeGap {
    pub agent: usize,
    pub t: u32,
    pub belief: f64,
    pub formula_on_path: f64,
    pub formula_deviation: f64,
    pub formula_gap: f64,
    pub exact_gap: f64,
    pub sign_agrees: bool,
}

/// Period-5 decision of an optimist, compared with two benchmarks: the
/// same decision with the other agents' play held fixed (their information
/// arrives the same way whatever she does), and the lone-agent trade-off.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LastPeriodGap {
    pub agent: usize,
    pub belief: f64,
    pub exact_gap: f64,
    pub fixed_others_gap: f64,
    pub lone_agent_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HetexpGaps {
    pub condition: f64,
    pub over_explorer_t4: NodeGap,
    pub optimists_t4: Vec<NodeGap>,
    pub optimists_t5: Vec<LastPeriodGap>,
}

fn hetexp_cutoffs() -> CutoffProfile {
    CutoffProfile::finite(&[5, 5, 4])
}

fn check_hetexp_structure(params: &Params, priors: &PriorProfile) -> Result<()> {
    if priors.len() != 3 || params.n_agents() != 3 {
        return Err(CascadeError::Invalid(
            "the over-exploration example has three agents".into(),
        ));
    }
    let taus: Vec<u32> = priors.iter().map(|&q| tau_single(q, params)).collect();
    if taus != [5, 5, 3] {
        return Err(CascadeError::Invalid(format!(
            "priors need lone stopping times (5,5,3), found {taus:?}"
        )));
    }
    Ok(())
}

/// Worked-formula and exact gaps of the `(5,5,4)` profile.
pub fn hetexp_gaps(params: &Params, priors: &PriorProfile) -> Result<HetexpGaps> {
    check_hetexp_structure(params, priors)?;
    let opts = VerifyOptions {
        off_path_depth: 0,
        ..VerifyOptions::default()
    };
    let report = verify_cutoffs(params, priors, &hetexp_cutoffs(), &opts)?;
    hetexp_gaps_from(params, priors, &report)
}

fn hetexp_gaps_from(
    params: &Params,
    priors: &PriorProfile,
    report: &DeviationReport,
) -> Result<HetexpGaps> {
    let (d, pi, e1, e0) = (
        params.delta(),
        params.pi(),
        params.e_good(),
        params.e_loss(),
    );
    let s = 1.0 - pi;
    let belief_at =
        |i: usize, fails: u64| posterior_after_failures(priors.get(i), pi, fails).prob();

    let p = belief_at(2, 3);
    let on = p * ((1.0 - d) * e1 + d * pi * e1 + d * s * (1.0 - s.powi(11)) * d * d * e1)
        - (1.0 - p) * (1.0 - d) * e0;
    let dev = p * (1.0 - s.powi(8)) * d * d * e1;
    let exact = -on_path_node(report, 2, 4)?.gain;
    let over_explorer_t4 = NodeGap {
        agent: 2,
        t: 4,
        belief: p,
        formula_on_path: on,
        formula_deviation: dev,
        formula_gap: on - dev,
        exact_gap: exact,
        sign_agrees: (on - dev > 0.0) == (exact > 0.0),
    };

    let mut optimists_t4 = Vec::new();
    let mut optimists_t5 = Vec::new();
    for i in 0..2 {
        let p = belief_at(i, 3);
        let on = p
            * ((1.0 - d * d) * e1
                + d.powi(3) * (1.0 - s.powi(2)) * (1.0 - d) * e1
                + d.powi(4) * (1.0 - s.powi(7)) * e1)
            - (1.0 - p) * (1.0 - d * d) * e0;
        let dev = p * (1.0 - s.powi(4)) * d * d * e1;
        let exact = -on_path_node(report, i, 4)?.gain;
        optimists_t4.push(NodeGap {
            agent: i,
            t: 4,
            belief: p,
            formula_on_path: on,
            formula_deviation: dev,
            formula_gap: on - dev,
            exact_gap: exact,
            sign_agrees: (on - dev > 0.0) == (exact > 0.0),
        });

        // After four failures each: the over-explorer's four draws are read
        // off her period-5 action, the other optimist's five draws off her
        // period-6 action. Neither depends on what this agent does now.
        let b = belief_at(i, 4);
        let flow = (1.0 - d) * (b * e1 - (1.0 - b) * e0);
        let later = d * (1.0 - s.powi(4)) + s.powi(4) * d * d * (1.0 - s.powi(5));
        let fixed = flow + b * e1 * (d * pi - pi * later);
        optimists_t5.push(LastPeriodGap {
            agent: i,
            belief: b,
            exact_gap: -on_path_node(report, i, 5)?.gain,
            fixed_others_gap: fixed,
            lone_agent_gap: flow + d * b * pi * e1,
        });
    }
    Ok(HetexpGaps {
        condition: hetexp_condition(pi),
        over_explorer_t4,
        optimists_t4,
        optimists_t5,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HetexpGrid {
    pub params: ParamGrid,
    /// Band positions for the two optimists (lone stopping time 5).
    pub top_positions: Vec<f64>,
    /// Band positions for the over-explorer (lone stopping time 3).
    pub low_positions: Vec<f64>,
}

impl Default for HetexpGrid {
    fn default() -> Self {
        Self {
            params: ParamGrid {
                deltas: vec![0.9, 0.85],
                pis: vec![0.002, 0.005, 0.01],
                e_goods: vec![0.3, 1.0, 3.0, 10.0],
                e_losses: vec![1.0],
            },
            top_positions: vec![0.5, 0.9, 0.99],
            low_positions: vec![0.3, 0.7, 0.99],
        }
    }
}

/// First grid point where the `(5,5,4)` profile is an equilibrium while the
/// lowest-prior agent would stop after 3 periods alone, and the worked
/// period-4 gap formulas agree in sign with the exact gaps.
pub fn search_hetexp(grid: &HetexpGrid) -> Result<ScenarioResult> {
    let full = VerifyOptions {
        stop_at_first_failure: true,
        ..VerifyOptions::default()
    };
    let on_path = VerifyOptions {
        off_path_depth: 0,
        ..full
    };
    let mut searched = 0;
    for params in grid.params.points(3) {
        for &top in &grid.top_positions {
            for &low in &grid.low_positions {
                let q1 = prior_in_band(&params, 5, top)?.prob();
                let q3 = prior_in_band(&params, 3, low)?.prob();
                let priors = PriorProfile::from_probs(&[q1, q1, q3])?;
                if check_hetexp_structure(&params, &priors).is_err() {
                    continue;
                }
                searched += 1;
                if !verify_cutoffs(&params, &priors, &hetexp_cutoffs(), &on_path)?.is_equilibrium {
                    continue;
                }
                if !verify_cutoffs(&params, &priors, &hetexp_cutoffs(), &full)?.is_equilibrium {
                    continue;
                }
                let gaps = hetexp_gaps(&params, &priors)?;
                let agree = gaps.over_explorer_t4.sign_agrees
                    && gaps.optimists_t4.iter().all(|g| g.sign_agrees);
                if !agree {
                    continue;
                }
                return Ok(ScenarioResult {
                    params: Some(params),
                    priors: Some(priors),
                    cutoffs: hetexp_cutoffs(),
                    gaps: Some(ScenarioGaps::Hetexp(gaps)),
                    verified: true,
                    swapped_verified: None,
                    points_searched: searched,
                    notes: vec![format!(
                        "band positions optimists {top}, over-explorer {low}; lowest-prior agent explores 4 periods against a lone stopping time of 3"
                    )],
                });
            }
        }
    }
    Ok(ScenarioResult::exhausted(
        hetexp_cutoffs(),
        searched,
        "grid exhausted without a satisfying point",
    ))
}

/// One row of the information-term surface over `(delta, pi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapSurfaceRow {
    pub delta: f64,
    pub pi: f64,
    /// `i3p - i3d` at the given lowest-prior belief.
    pub information_difference: f64,
    pub hetexp_condition: f64,
}

pub fn gap_surface(
    deltas: &[f64],
    pis: &[f64],
    p3: f64,
    e_good: f64,
) -> Result<Vec<GapSurfaceRow>> {
    let mut rows = Vec::new();
    for &delta in deltas {
        for &pi in pis {
            let params = Params::from_moments(delta, pi, e_good, 1.0, 3)?;
            let (a, b) = revorder_information(p3, &params);
            rows.push(GapSurfaceRow {
                delta,
                pi,
                information_difference: a - b,
                hetexp_condition: hetexp_condition(pi),
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn information_terms_at_small_pi() {
        let p = Params::from_moments(0.95, 0.05, 1.0, 1.0, 3).unwrap();
        let (a, b) = revorder_information(0.4, &p);
        assert!((a - 0.857375 * 0.4 * 0.142625).abs() < 1e-12);
        assert!((b - 0.9025 * 0.4 * 0.0975).abs() < 1e-12);
        assert!((a - b - 0.01371574375).abs() < 1e-12);
        let big = Params::from_moments(0.95, 0.9, 1.0, 1.0, 3).unwrap();
        let (a, b) = revorder_information(0.4, &big);
        assert!(a < b);
    }

    #[test]
    fn condition_values() {
        assert!((hetexp_condition(0.05) - 0.07306).abs() < 1e-5);
        assert!((hetexp_condition(0.5) + 0.49634).abs() < 1e-5);
        assert!(hetexp_condition(1e-9).abs() < 1e-7);
    }

    #[test]
    fn band_positions_hit_their_stopping_time() {
        let p = Params::from_moments(0.9, 0.1, 1.0, 1.0, 3).unwrap();
        for k in 1..6 {
            for lam in [0.01, 0.5, 0.99] {
                let q = prior_in_band(&p, k, lam).unwrap();
                assert_eq!(tau_single(q, &p), k);
            }
        }
        assert!(prior_in_band(&p, 2, 1.0).is_err());
    }

    #[test]
    fn structure_is_checked() {
        let p = Params::from_moments(0.9, 0.01, 1.0, 1.0, 3).unwrap();
        let err = hetexp_gaps(&p, &PriorProfile::from_probs(&[0.9, 0.9, 0.9]).unwrap());
        assert!(matches!(err, Err(CascadeError::Invalid(_))));
    }

    #[test]
    fn exhausted_grid_is_reported() {
        let grid = RevorderGrid {
            params: ParamGrid {
                deltas: vec![0.2],
                pis: vec![0.6],
                e_goods: vec![2.0],
                e_losses: vec![1.0],
            },
            top_positions: vec![0.5],
            low_positions: vec![0.3, 0.7],
        };
        let r = search_revorder(&grid).unwrap();
        assert!(!r.verified);
        assert!(r.params.is_none());
        assert_eq!(r.points_searched, 1);
    }
}
