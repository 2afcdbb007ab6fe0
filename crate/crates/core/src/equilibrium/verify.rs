//! Exact one-shot deviation checks by scenario enumeration.
//!
//! A scenario fixes the state and, for each agent, the index of her first
//! successful risky draw (or "none within the agent's draw bound"). Play under
//! the strategy machine is deterministic given a scenario, so an agent's
//! information set is a set of scenarios sharing the public action history
//! and her own success flag, weighted by her prior.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::machine::{Game, PlayState, StrategyProfile};
use crate::error::{CascadeError, Result};
use crate::model::{Action, CutoffProfile, GameState, Params, PriorProfile};

/// Default tolerance on gains; deviations gaining less are not profitable.
pub const GAIN_TOL: f64 = 1e-9;

/// Safety cap on simulated periods per run.
const MAX_PERIODS: u32 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquilibriumLimits {
    pub max_agents: usize,
    pub max_tau: u32,
}

impl Default for EquilibriumLimits {
    fn default() -> Self {
        Self {
            max_agents: 4,
            max_tau: 10,
        }
    }
}

impl EquilibriumLimits {
    pub fn check(&self, n: usize, max_tau: u32) -> Result<()> {
        if n > self.max_agents || n > 8 {
            return Err(CascadeError::ScaleLimit(format!(
                "{n} agents exceeds the exact-verification limit of {}",
                self.max_agents.min(8)
            )));
        }
        if max_tau > self.max_tau {
            return Err(CascadeError::ScaleLimit(format!(
                "cutoff {max_tau} exceeds the exact-verification limit of {}",
                self.max_tau
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub tolerance: f64,
    /// 0 checks on-path nodes only; 1 also checks every node following a
    /// single flipped action by any agent.
    pub off_path_depth: u8,
    pub limits: EquilibriumLimits,
    pub stop_at_first_failure: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            tolerance: GAIN_TOL,
            off_path_depth: 1,
            limits: EquilibriumLimits::default(),
            stop_at_first_failure: false,
        }
    }
}

/// A single earlier flip by `agent` in `period` (by a no-success agent) that
/// puts play off the equilibrium path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DeviationContext {
    pub agent: usize,
    pub period: u32,
}

/// One information set of one agent, with prescribed and deviation values
/// normalized to the node's period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeReport {
    pub agent: usize,
    pub t: u32,
    pub context: Option<DeviationContext>,
    /// Public action history before `t`, one token per period, `R`/`S` per agent.
    pub history: String,
    pub own_success: bool,
    pub informed: bool,
    /// Belief held by the strategy machine.
    pub belief: f64,
    /// Posterior computed from the scenario weights.
    pub bayes_belief: f64,
    /// Prior probability of reaching the node.
    pub reach_probability: f64,
    pub prescribed: Action,
    pub value_prescribed: f64,
    pub value_deviation: f64,
    pub gain: f64,
    pub knife_edge: bool,
    pub state: GameState,
}

impl NodeReport {
    pub fn on_path(&self) -> bool {
        self.context.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationReport {
    pub cutoffs: CutoffProfile,
    pub nodes: Vec<NodeReport>,
    pub max_gain: f64,
    /// Index into `nodes` of the largest gain.
    pub worst_node: Option<usize>,
    pub is_equilibrium: bool,
    pub knife_edge: bool,
    pub tolerance: f64,
    /// Largest gap between machine and Bayes beliefs over uncommitted nodes.
    pub max_belief_error: f64,
    /// False when checking stopped at the first failing node.
    pub complete: bool,
}

impl DeviationReport {
    /// Smallest margin `-gain` over on-path nodes.
    pub fn on_path_slack(&self) -> f64 {
        self.nodes
            .iter()
            .filter(|n| n.on_path())
            .map(|n| -n.gain)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn trace_rows(&self) -> Vec<TraceRow> {
        self.nodes.iter().map(TraceRow::from).collect()
    }
}

/// Flat form of a node for CSV traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub agent: usize,
    pub t: u32,
    pub context_agent: Option<usize>,
    pub context_period: Option<u32>,
    pub history: String,
    pub own_success: bool,
    pub informed: bool,
    pub belief: f64,
    pub bayes_belief: f64,
    pub reach_probability: f64,
    pub prescribed: Action,
    pub value_prescribed: f64,
    pub value_deviation: f64,
    pub gain: f64,
    pub knife_edge: bool,
}

impl From<&NodeReport> for TraceRow {
    fn from(n: &NodeReport) -> Self {
        Self {
            agent: n.agent,
            t: n.t,
            context_agent: n.context.map(|c| c.agent),
            context_period: n.context.map(|c| c.period),
            history: n.history.clone(),
            own_success: n.own_success,
            informed: n.informed,
            belief: n.belief,
            bayes_belief: n.bayes_belief,
            reach_probability: n.reach_probability,
            prescribed: n.prescribed,
            value_prescribed: n.value_prescribed,
            value_deviation: n.value_deviation,
            gain: n.gain,
            knife_edge: n.knife_edge,
        }
    }
}

struct Scenario {
    good: bool,
    /// First successful draw index; `None` means none within the draw bound.
    firsts: Vec<Option<u32>>,
    /// Probability given the state.
    weight: f64,
}

struct Forced {
    agent: usize,
    period: u32,
    /// Drop the scenario if the agent has already succeeded by then.
    clean: bool,
}

struct Run {
    start: u32,
    end: u32,
    flows: Vec<Vec<f64>>,
    tails: Vec<f64>,
    states: Vec<PlayState>,
    masks: Vec<u8>,
}

impl Run {
    fn value_from(&self, t: u32, i: usize, delta: f64) -> f64 {
        let mut v = 0.0;
        let mut disc = 1.0;
        for s in t..self.end {
            v += disc * self.flows[(s - self.start) as usize][i];
            disc *= delta;
        }
        v + disc * self.tails[i]
    }
}

pub(crate) struct Verifier {
    game: Game,
    scenarios: Vec<Scenario>,
}

impl Verifier {
    pub fn new(
        params: &Params,
        priors: &PriorProfile,
        cutoffs: &CutoffProfile,
        limits: &EquilibriumLimits,
    ) -> Result<Self> {
        let game = Game::new(params, priors, cutoffs)?;
        limits.check(game.n(), game.taus.iter().copied().max().unwrap_or(0))?;
        let scenarios = build_scenarios(&game);
        Ok(Self { game, scenarios })
    }

    fn draw(&self, sc: &Scenario, j: usize, k: u32, committed: bool) -> Result<(f64, bool)> {
        let p = &self.game.params;
        if !sc.good {
            return Ok((p.x_low(), false));
        }
        Ok(match sc.firsts[j] {
            Some(m) if k < m => (p.x_low(), false),
            Some(m) if k == m => (p.x_high(), true),
            Some(_) => (p.e_good(), true),
            None if k <= self.game.draw_bounds[j] => (p.x_low(), false),
            None if committed => (p.e_good(), false),
            None => {
                return Err(CascadeError::Invariant(format!(
                    "agent {j} drew {k} times while still learning, beyond her bound {}",
                    self.game.draw_bounds[j]
                )))
            }
        })
    }

    /// Normalized value of drawing risky forever after `k` draws.
    fn risky_tail(&self, sc: &Scenario, j: usize, k: u32) -> f64 {
        let p = &self.game.params;
        let d = p.delta();
        if !sc.good {
            return p.x_low();
        }
        match sc.firsts[j] {
            Some(m) if m <= k => p.e_good(),
            Some(m) => {
                let f = d.powi((m - k - 1) as i32);
                (1.0 - f) * p.x_low() + (1.0 - d) * f * p.x_high() + d * f * p.e_good()
            }
            None => {
                let b = self.game.draw_bounds[j];
                if k >= b {
                    p.e_good()
                } else {
                    let f = d.powi((b - k) as i32);
                    (1.0 - f) * p.x_low() + f * p.e_good()
                }
            }
        }
    }

    fn run(
        &self,
        sc: &Scenario,
        s: PlayState,
        forced: &[Forced],
        record: bool,
    ) -> Result<Option<Run>> {
        self.run_until(sc, s, forced, record, 0)
    }

    /// Plays until absorption, continuing the stationary absorbed play up to
    /// period `until`.
    fn run_until(
        &self,
        sc: &Scenario,
        mut s: PlayState,
        forced: &[Forced],
        record: bool,
        until: u32,
    ) -> Result<Option<Run>> {
        let g = &self.game;
        let n = g.n();
        let d = g.params.delta();
        let start = s.t;
        let mut flows = Vec::new();
        let mut states = Vec::new();
        let mut masks = Vec::new();
        loop {
            let pending = forced.iter().any(|f| f.period >= s.t);
            if !pending && s.t >= until && g.absorbed(&s) {
                break;
            }
            if s.t - start > MAX_PERIODS {
                return Err(CascadeError::Invariant("play did not settle".into()));
            }
            if record {
                states.push(s.clone());
            }
            let mut actions: Vec<Action> = (0..n).map(|j| g.prescribed(&s, j)).collect();
            for f in forced.iter().filter(|f| f.period == s.t) {
                if f.clean && s.success[f.agent] {
                    return Ok(None);
                }
                actions[f.agent] = actions[f.agent].flipped();
            }
            let mut succ = vec![false; n];
            let mut flow = vec![0.0; n];
            let mut mask = 0u8;
            for j in 0..n {
                if actions[j] == Action::Risky {
                    let (x, ok) = self.draw(sc, j, s.draws[j] + 1, s.fixed_risky(j))?;
                    flow[j] = (1.0 - d) * x;
                    succ[j] = ok;
                    mask |= 1 << j;
                }
            }
            flows.push(flow);
            masks.push(mask);
            g.advance(&mut s, &actions, &succ);
        }
        let tails = (0..n)
            .map(|j| {
                if s.fixed_risky(j) {
                    self.risky_tail(sc, j, s.draws[j])
                } else {
                    0.0
                }
            })
            .collect();
        let end = s.t;
        if record {
            states.push(s);
        }
        Ok(Some(Run {
            start,
            end,
            flows,
            tails,
            states,
            masks,
        }))
    }

    /// Normalized expected payoff of each agent at the start, under the
    /// agent's own prior.
    pub fn root_values(&self) -> Result<Vec<f64>> {
        let n = self.game.n();
        let mut v = vec![0.0; n];
        for sc in &self.scenarios {
            let run = self
                .run(sc, PlayState::initial(n), &[], false)?
                .expect("no forced actions");
            for (i, vi) in v.iter_mut().enumerate() {
                let w = self.state_weight(i, sc.good) * sc.weight;
                if w > 0.0 {
                    *vi += w * run.value_from(1, i, self.game.params.delta());
                }
            }
        }
        Ok(v)
    }

    fn state_weight(&self, i: usize, good: bool) -> f64 {
        let q = self.game.priors[i].prob();
        if good {
            q
        } else {
            1.0 - q
        }
    }

    fn contexts(&self, depth: u8) -> Vec<Option<DeviationContext>> {
        let mut out = vec![None];
        if depth >= 1 {
            let last = self.game.taus.iter().copied().max().unwrap_or(0) + 2;
            for agent in 0..self.game.n() {
                for period in 1..=last {
                    out.push(Some(DeviationContext { agent, period }));
                }
            }
        }
        out
    }

    /// All information sets of agent `i` reached after `context`.
    fn agent_pass(
        &self,
        i: usize,
        context: Option<DeviationContext>,
        tol: f64,
        stop: &AtomicBool,
    ) -> Result<Vec<NodeReport>> {
        #[derive(Default)]
        struct Acc {
            w: f64,
            w_good: f64,
            v_presc: f64,
            v_dev: f64,
            rep: Option<PlayState>,
        }
        let g = &self.game;
        let d = g.params.delta();
        let n = g.n();
        let forced: Vec<Forced> = context
            .iter()
            .map(|c| Forced {
                agent: c.agent,
                period: c.period,
                clean: true,
            })
            .collect();
        let t_from = context.map_or(1, |c| c.period + 1);
        let mut runs = Vec::new();
        for sc in &self.scenarios {
            if stop.load(Ordering::Relaxed) {
                return Ok(Vec::new());
            }
            let w = self.state_weight(i, sc.good) * sc.weight;
            if w <= 0.0 {
                continue;
            }
            if let Some(run) = self.run(sc, PlayState::initial(n), &forced, true)? {
                runs.push((sc, w, run));
            }
        }
        // absorbed play still passes through later information sets
        let horizon = runs.iter().map(|(_, _, r)| r.end).max().unwrap_or(0);
        let mut acc: BTreeMap<(u32, bool, bool, Vec<u8>), Acc> = BTreeMap::new();
        for (sc, w, mut base) in runs {
            if stop.load(Ordering::Relaxed) {
                return Ok(Vec::new());
            }
            if base.end < horizon {
                let last = base.states.pop().expect("recorded run has a final state");
                let tail = self
                    .run_until(sc, last, &[], true, horizon)?
                    .expect("no forced actions");
                base.flows.extend(tail.flows);
                base.masks.extend(tail.masks);
                base.states.extend(tail.states);
                base.tails = tail.tails;
                base.end = tail.end;
            }
            for t in t_from..=base.end {
                let st = &base.states[(t - base.start) as usize];
                let key = (
                    t,
                    st.success[i],
                    st.informed[i],
                    base.masks[..(t - 1) as usize].to_vec(),
                );
                let a = acc.entry(key).or_default();
                a.w += w;
                if sc.good {
                    a.w_good += w;
                }
                if a.rep.is_none() {
                    a.rep = Some(st.clone());
                }
                if st.fixed_risky(i) {
                    continue;
                }
                let vp = base.value_from(t, i, d);
                let dev = self
                    .run(
                        sc,
                        st.clone(),
                        &[Forced {
                            agent: i,
                            period: t,
                            clean: false,
                        }],
                        false,
                    )?
                    .expect("unconditional deviation");
                let vd = dev.value_from(t, i, d);
                a.v_presc += w * vp;
                a.v_dev += w * vd;
            }
        }
        let mut out = Vec::with_capacity(acc.len());
        for ((t, own_success, informed, masks), a) in acc {
            let st = a.rep.expect("node has a representative");
            let prescribed = g.prescribed(&st, i);
            let belief = g.private_belief(&st, i).prob();
            let (vp, vd) = if st.fixed_risky(i) {
                let e1 = g.params.e_good();
                (e1, d * e1)
            } else {
                (a.v_presc / a.w, a.v_dev / a.w)
            };
            let gain = vd - vp;
            if gain > tol {
                stop.store(true, Ordering::Relaxed);
            }
            out.push(NodeReport {
                agent: i,
                t,
                context,
                history: format_history(&masks, n),
                own_success,
                informed,
                belief,
                bayes_belief: if st.fixed_risky(i) {
                    1.0
                } else {
                    a.w_good / a.w
                },
                reach_probability: a.w,
                prescribed,
                value_prescribed: vp,
                value_deviation: vd,
                gain,
                knife_edge: gain.abs() < tol,
                state: st.game_state(i),
            });
        }
        Ok(out)
    }
}

fn format_history(masks: &[u8], n: usize) -> String {
    masks
        .iter()
        .map(|m| {
            (0..n)
                .map(|j| if m & (1 << j) != 0 { 'R' } else { 'S' })
                .collect::<String>()
        })
        .collect::<Vec<_>>()
        .join("|")
}

fn build_scenarios(game: &Game) -> Vec<Scenario> {
    let n = game.n();
    let pi = game.params.pi();
    let mut out = vec![Scenario {
        good: false,
        firsts: vec![None; n],
        weight: 1.0,
    }];
    let options: Vec<Vec<(Option<u32>, f64)>> = game
        .draw_bounds
        .iter()
        .map(|&b| {
            let mut v: Vec<(Option<u32>, f64)> = (1..=b)
                .map(|m| (Some(m), (1.0 - pi).powi(m as i32 - 1) * pi))
                .collect();
            v.push((None, (1.0 - pi).powi(b as i32)));
            v
        })
        .collect();
    let mut idx = vec![0usize; n];
    loop {
        let firsts = (0..n).map(|j| options[j][idx[j]].0).collect();
        let weight = (0..n).map(|j| options[j][idx[j]].1).product();
        out.push(Scenario {
            good: true,
            firsts,
            weight,
        });
        let mut j = n;
        loop {
            if j == 0 {
                return out;
            }
            j -= 1;
            idx[j] += 1;
            if idx[j] < options[j].len() {
                break;
            }
            idx[j] = 0;
        }
    }
}

/// Checks every one-shot deviation of every agent at every node reached on
/// path and, with depth 1, after any single flipped action.
pub fn verify_one_shot_deviations(
    params: &Params,
    priors: &PriorProfile,
    profile: &StrategyProfile,
    options: &VerifyOptions,
) -> Result<DeviationReport> {
    let v = Verifier::new(params, priors, &profile.cutoffs, &options.limits)?;
    let n = v.game.n();
    let tasks: Vec<(usize, Option<DeviationContext>)> = v
        .contexts(options.off_path_depth)
        .into_iter()
        .flat_map(|c| (0..n).map(move |i| (i, c)))
        .collect();
    let stop = AtomicBool::new(false);
    let never = AtomicBool::new(false);
    let flag = if options.stop_at_first_failure {
        &stop
    } else {
        &never
    };
    let parts: Vec<Vec<NodeReport>> = tasks
        .par_iter()
        .map(|&(i, c)| v.agent_pass(i, c, options.tolerance, flag))
        .collect::<Result<_>>()?;
    let nodes: Vec<NodeReport> = parts.into_iter().flatten().collect();
    let complete = !flag.load(Ordering::Relaxed);
    let mut max_gain = f64::NEG_INFINITY;
    let mut worst_node = None;
    let mut max_belief_error: f64 = 0.0;
    for (k, nd) in nodes.iter().enumerate() {
        if nd.gain > max_gain {
            max_gain = nd.gain;
            worst_node = Some(k);
        }
        max_belief_error = max_belief_error.max((nd.belief - nd.bayes_belief).abs());
    }
    Ok(DeviationReport {
        cutoffs: profile.cutoffs.clone(),
        is_equilibrium: max_gain <= options.tolerance,
        knife_edge: nodes.iter().any(|n| n.knife_edge),
        nodes,
        max_gain,
        worst_node,
        tolerance: options.tolerance,
        max_belief_error,
        complete,
    })
}

/// Exact normalized continuation value of `node.agent` at a node taken from a
/// verification report.
pub fn continuation_value(
    params: &Params,
    priors: &PriorProfile,
    profile: &StrategyProfile,
    node: &NodeReport,
) -> Result<f64> {
    let v = Verifier::new(
        params,
        priors,
        &profile.cutoffs,
        &EquilibriumLimits::default(),
    )?;
    if node.agent >= v.game.n() {
        return Err(CascadeError::Invalid(format!("no agent {}", node.agent)));
    }
    let nodes = v.agent_pass(
        node.agent,
        node.context,
        f64::INFINITY,
        &AtomicBool::new(false),
    )?;
    nodes
        .into_iter()
        .find(|x| {
            x.t == node.t
                && x.history == node.history
                && x.own_success == node.own_success
                && x.informed == node.informed
        })
        .map(|x| x.value_prescribed)
        .ok_or_else(|| CascadeError::Invalid("unreachable node".into()))
}

/// Expected payoff of each agent at the start of play, by enumeration.
pub fn root_values(
    params: &Params,
    priors: &PriorProfile,
    cutoffs: &CutoffProfile,
) -> Result<Vec<f64>> {
    Verifier::new(params, priors, cutoffs, &EquilibriumLimits::default())?.root_values()
}
