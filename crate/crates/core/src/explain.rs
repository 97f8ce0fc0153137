//! What / how / why queries over a policy graph with registered desires,
//! plus template rendering of their answers.

use std::collections::{BTreeMap, HashSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::NodeId;
use crate::intention::{attributed_desires, Attribution, CommitmentThreshold, IntentionIndex};
use crate::predicate::{ActionId, PredicateState};

pub const DEFAULT_MAX_DEPTH: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatAnswer {
    pub state: String,
    pub commitment: f64,
    pub attributions: Vec<Attribution>,
}

/// Desires attributed to `state` at threshold `commitment`.
pub fn what(indices: &[IntentionIndex], state: &PredicateState, commitment: CommitmentThreshold) -> WhatAnswer {
    WhatAnswer {
        state: state.canonical_id(),
        commitment: commitment.value(),
        attributions: attributed_desires(indices, state, commitment),
    }
}

/// One move of a plan. The final step of a plan is the desire's action and
/// has no successor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanStep {
    pub action: String,
    pub state: Option<String>,
    pub intention: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub desire: String,
    pub start: String,
    pub steps: Vec<PlanStep>,
}

fn fulfil_step(index: &IntentionIndex) -> PlanStep {
    PlanStep {
        action: index.desire().action_name.clone(),
        state: None,
        intention: None,
    }
}

fn move_step(index: &IntentionIndex, action: ActionId, to: NodeId) -> PlanStep {
    let graph = index.graph();
    PlanStep {
        action: graph.actions().name(action).to_string(),
        state: Some(graph.node(to).id.clone()),
        intention: Some(index.value(to)),
    }
}

/// Greedy plan: from `state`, keep moving to the unvisited successor with
/// the highest intention until the desire's region is reached.
///
/// Ties between successors go to the smaller canonical id; the action used is
/// the most frequent one leading there.
pub fn how(index: &IntentionIndex, state: &PredicateState, max_depth: usize) -> Result<Plan> {
    let graph = index.graph();
    let desire = index.desire();
    let start = graph.require(state)?;
    if index.value(start) <= 0.0 {
        return Err(Error::ZeroIntention {
            desire: desire.id.clone(),
            state: state.canonical_id(),
        });
    }
    let fail = |reason: &str| Error::NoImprovingPath {
        desire: desire.id.clone(),
        state: state.canonical_id(),
        reason: reason.to_string(),
    };

    let mut visited: HashSet<NodeId> = HashSet::from([start]);
    let mut steps = Vec::new();
    let mut cur = start;
    loop {
        if index.in_region(cur) {
            steps.push(fulfil_step(index));
            return Ok(Plan {
                desire: desire.id.clone(),
                start: state.canonical_id(),
                steps,
            });
        }
        if steps.len() >= max_depth {
            return Err(fail("maximum depth reached"));
        }
        // successor -> (count of the most frequent action, that action)
        let mut best_action: BTreeMap<NodeId, (u64, ActionId)> = BTreeMap::new();
        for e in &graph.node(cur).edges {
            if visited.contains(&e.to) {
                continue;
            }
            let entry = best_action.entry(e.to).or_insert((0, e.action));
            if e.count > entry.0 {
                *entry = (e.count, e.action);
            }
        }
        // BTreeMap iterates in node (= canonical id) order; keep the first max
        let mut next: Option<(NodeId, ActionId, f64)> = None;
        for (&to, &(_, action)) in &best_action {
            let v = index.value(to);
            if next.is_none_or(|(_, _, bv)| v > bv) {
                next = Some((to, action, v));
            }
        }
        match next {
            Some((to, action, v)) if v > 0.0 => {
                steps.push(move_step(index, action, to));
                visited.insert(to);
                cur = to;
            }
            Some(_) => return Err(fail("only zero-intention successors remain")),
            None if graph.node(cur).is_terminal() => return Err(fail("terminal state")),
            None => return Err(fail("every successor was already visited")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledPath {
    pub steps: Vec<PlanStep>,
    pub count: usize,
    pub frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StochasticPlan {
    pub desire: String,
    pub start: String,
    pub commitment: f64,
    pub samples: usize,
    pub success_count: usize,
    pub failure_count: usize,
    pub truncated_count: usize,
    /// Distinct successful paths, most frequent first.
    pub success_paths: Vec<SampledPath>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rollout {
    Success,
    Failure,
    Truncated,
}

/// Samples `(a, s')` from `P(s', a | s)` until the rollout reaches a desire
/// state where `a_d` has been observed (success), a state whose intention is
/// below the threshold (failure), or `max_depth` moves (truncated).
pub fn how_stochastic(
    index: &IntentionIndex,
    state: &PredicateState,
    commitment: CommitmentThreshold,
    n_samples: usize,
    max_depth: usize,
    seed: u64,
) -> Result<StochasticPlan> {
    if n_samples == 0 {
        return Err(Error::Config("n_samples must be at least 1".into()));
    }
    let graph = index.graph();
    let desire = index.desire();
    let start = graph.require(state)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut successes: BTreeMap<Vec<(ActionId, NodeId)>, usize> = BTreeMap::new();
    let (mut ok, mut failed, mut truncated) = (0, 0, 0);
    for _ in 0..n_samples {
        let mut cur = start;
        let mut path = Vec::new();
        let outcome = loop {
            if index.in_region(cur) && graph.action_count(cur, desire.action) > 0 {
                break Rollout::Success;
            }
            if index.value(cur) < commitment.value() {
                break Rollout::Failure;
            }
            if path.len() >= max_depth {
                break Rollout::Truncated;
            }
            match graph.sample_transition(cur, &mut rng) {
                Some((a, to)) => {
                    path.push((a, to));
                    cur = to;
                }
                None => break Rollout::Failure,
            }
        };
        match outcome {
            Rollout::Success => {
                ok += 1;
                *successes.entry(path).or_default() += 1;
            }
            Rollout::Failure => failed += 1,
            Rollout::Truncated => truncated += 1,
        }
    }
    let mut success_paths: Vec<SampledPath> = successes
        .into_iter()
        .map(|(path, count)| {
            let mut steps: Vec<PlanStep> = path
                .into_iter()
                .map(|(a, to)| move_step(index, a, to))
                .collect();
            steps.push(fulfil_step(index));
            SampledPath {
                steps,
                count,
                frequency: count as f64 / n_samples as f64,
            }
        })
        .collect();
    success_paths.sort_by(|a, b| b.count.cmp(&a.count));
    Ok(StochasticPlan {
        desire: desire.id.clone(),
        start: state.canonical_id(),
        commitment: commitment.value(),
        samples: n_samples,
        success_count: ok,
        failure_count: failed,
        truncated_count: truncated,
        success_paths,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict")]
pub enum WhyVerdict {
    FurthersIntention {
        desire: String,
        expected_increase: f64,
    },
    Gamble {
        desire: String,
        expected_increase: f64,
        /// `P(I_d(s') >= I_d(s) | s, a)`.
        p_increase: f64,
        /// `E[I_d(s') | s, a, I_d(s') >= I_d(s)]`.
        expected_positive: f64,
    },
    Unintentional {
        desire: Option<String>,
        expected_increase: Option<f64>,
    },
}

impl WhyVerdict {
    pub fn expected_increase(&self) -> Option<f64> {
        match self {
            WhyVerdict::FurthersIntention { expected_increase, .. }
            | WhyVerdict::Gamble { expected_increase, .. } => Some(*expected_increase),
            WhyVerdict::Unintentional { expected_increase, .. } => *expected_increase,
        }
    }

    pub fn desire(&self) -> Option<&str> {
        match self {
            WhyVerdict::FurthersIntention { desire, .. } | WhyVerdict::Gamble { desire, .. } => Some(desire),
            WhyVerdict::Unintentional { desire, .. } => desire.as_deref(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhyAnswer {
    pub state: String,
    pub action: String,
    pub commitment: f64,
    pub verdicts: Vec<WhyVerdict>,
}

fn observed_action(index: &IntentionIndex, state: &PredicateState, action: &str) -> Result<(NodeId, ActionId)> {
    let graph = index.graph();
    let id = graph.require(state)?;
    let a = graph.actions().id(action)?;
    if graph.action_count(id, a) == 0 {
        return Err(Error::NoEvidence {
            state: state.canonical_id(),
            action: action.to_string(),
        });
    }
    Ok((id, a))
}

/// Explains taking `action` at `state` in terms of every attributed desire.
pub fn why(
    indices: &[IntentionIndex],
    state: &PredicateState,
    action: &str,
    commitment: CommitmentThreshold,
) -> Result<WhyAnswer> {
    let first = indices
        .first()
        .ok_or_else(|| Error::Config("no desires registered".into()))?;
    let (id, a) = observed_action(first, state, action)?;
    let attributed = attributed_desires(indices, state, commitment);
    let mut verdicts = Vec::new();
    if attributed.is_empty() {
        verdicts.push(WhyVerdict::Unintentional {
            desire: None,
            expected_increase: None,
        });
    }
    for att in attributed {
        let index = indices
            .iter()
            .find(|ix| ix.desire().id == att.desire)
            .expect("attribution comes from one of the indices");
        let desire = att.desire;
        let here = index.value(id);
        if index.in_region(id) && a == index.desire().action {
            verdicts.push(WhyVerdict::FurthersIntention {
                desire,
                expected_increase: 1.0 - here,
            });
            continue;
        }
        let masses = delta_masses(index, id, a);
        let delta = mean_delta(&masses);
        if delta > 0.0 {
            verdicts.push(WhyVerdict::FurthersIntention {
                desire,
                expected_increase: delta,
            });
            continue;
        }
        let (p_inc, mass) = masses
            .iter()
            .filter(|m| m.delta >= 0.0)
            .fold((0.0, 0.0), |(p, acc), m| (p + m.probability, acc + m.probability * (here + m.delta)));
        if p_inc > 0.0 {
            verdicts.push(WhyVerdict::Gamble {
                desire,
                expected_increase: delta,
                p_increase: p_inc,
                expected_positive: mass / p_inc,
            });
        } else {
            verdicts.push(WhyVerdict::Unintentional {
                desire: Some(desire),
                expected_increase: Some(delta),
            });
        }
    }
    Ok(WhyAnswer {
        state: state.canonical_id(),
        action: action.to_string(),
        commitment: commitment.value(),
        verdicts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaMass {
    pub delta: f64,
    pub probability: f64,
}

/// Distribution of `I_d(s') - I_d(s)` after taking `action` at `state`,
/// sorted by increase. Taking `a_d` inside the region is a point mass at
/// `1 - I_d(s)`.
pub fn delta_distribution(index: &IntentionIndex, state: &PredicateState, action: &str) -> Result<Vec<DeltaMass>> {
    let (id, a) = observed_action(index, state, action)?;
    if index.in_region(id) && a == index.desire().action {
        return Ok(vec![DeltaMass {
            delta: 1.0 - index.value(id),
            probability: 1.0,
        }]);
    }
    Ok(delta_masses(index, id, a))
}

/// `E[I_d(s') - I_d(s)]` of a delta distribution.
pub fn mean_delta(masses: &[DeltaMass]) -> f64 {
    masses.iter().map(|m| m.probability * m.delta).sum()
}

fn delta_masses(index: &IntentionIndex, id: NodeId, a: ActionId) -> Vec<DeltaMass> {
    let here = index.value(id);
    let mut masses: Vec<DeltaMass> = index
        .graph()
        .successor_distribution(id, a)
        .into_iter()
        .map(|(to, p)| DeltaMass {
            delta: index.value(to) - here,
            probability: p,
        })
        .collect();
    masses.sort_by(|x, y| x.delta.total_cmp(&y.delta));
    masses.dedup_by(|next, kept| {
        if next.delta == kept.delta {
            kept.probability += next.probability;
            true
        } else {
            false
        }
    });
    masses
}

/// Any answer that can be rendered as text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "query", rename_all = "snake_case")]
pub enum Explanation {
    What(WhatAnswer),
    How(Plan),
    HowStochastic(StochasticPlan),
    Why(WhyAnswer),
}

/// Named text templates with `{placeholder}` slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplatePack {
    pub templates: BTreeMap<String, String>,
}

impl Default for TemplatePack {
    fn default() -> Self {
        let pairs = [
            ("what.intends", "I intend to {desire} (confidence {value})"),
            (
                "what.none",
                "No intention is attributed to this state at commitment {commitment}.",
            ),
            ("how.header", "To {desire} from {state}:"),
            ("how.step", "{n}. {action}, so that {changes}"),
            ("how.step_unchanged", "{n}. {action}"),
            ("how.change", "{variable} becomes {value}"),
            ("how.fulfil", "{n}. {action} to {desire}"),
            (
                "how_stochastic.summary",
                "{desire}: {success} of {samples} sampled rollouts succeed, {failure} lose the intention, {truncated} are truncated",
            ),
            ("how_stochastic.path", "{frequency} of rollouts: {actions}"),
            (
                "why.furthers",
                "I take {action} because it furthers my intention to {desire} (expected increase {delta})",
            ),
            (
                "why.gamble",
                "I take {action} as a gamble on {desire}: the intention holds or rises with probability {p}, reaching {expected} on average when it does",
            ),
            (
                "why.unintentional",
                "This action is apparently unintentional: no registered desire explains it.",
            ),
        ];
        TemplatePack {
            templates: pairs
                .into_iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }
}

fn fmt_prob(x: f64) -> String {
    format!("{x:.3}")
}

impl TemplatePack {
    fn fill(&self, key: &str, slots: &[(&str, String)]) -> Result<String> {
        let template = self
            .templates
            .get(key)
            .ok_or_else(|| Error::MissingTemplate(key.to_string()))?;
        let mut out = template.clone();
        for (name, value) in slots {
            out = out.replace(&format!("{{{name}}}"), value);
        }
        Ok(out)
    }

    /// Renders `result`; `space_of` parses state ids so plan steps can name
    /// the predicates that change.
    pub fn render(&self, result: &Explanation, parse: &dyn Fn(&str) -> Result<PredicateState>) -> Result<String> {
        let mut lines = Vec::new();
        match result {
            Explanation::What(w) => {
                if w.attributions.is_empty() {
                    lines.push(self.fill("what.none", &[("commitment", fmt_prob(w.commitment))])?);
                }
                for att in &w.attributions {
                    lines.push(self.fill(
                        "what.intends",
                        &[("desire", att.desire.clone()), ("value", fmt_prob(att.value))],
                    )?);
                }
            }
            Explanation::How(plan) => {
                lines.push(self.fill(
                    "how.header",
                    &[("desire", plan.desire.clone()), ("state", plan.start.clone())],
                )?);
                let mut prev = parse(&plan.start)?;
                for (i, step) in plan.steps.iter().enumerate() {
                    let n = (i + 1).to_string();
                    match &step.state {
                        None => lines.push(self.fill(
                            "how.fulfil",
                            &[("n", n), ("action", step.action.clone()), ("desire", plan.desire.clone())],
                        )?),
                        Some(id) => {
                            let next = parse(id)?;
                            let changes = prev
                                .diff(&next)
                                .into_iter()
                                .map(|(var, _, to)| {
                                    self.fill("how.change", &[("variable", var.to_string()), ("value", to.to_string())])
                                })
                                .collect::<Result<Vec<_>>>()?;
                            let line = if changes.is_empty() {
                                self.fill("how.step_unchanged", &[("n", n), ("action", step.action.clone())])?
                            } else {
                                self.fill(
                                    "how.step",
                                    &[("n", n), ("action", step.action.clone()), ("changes", changes.join(", "))],
                                )?
                            };
                            lines.push(line);
                            prev = next;
                        }
                    }
                }
            }
            Explanation::HowStochastic(plan) => {
                lines.push(self.fill(
                    "how_stochastic.summary",
                    &[
                        ("desire", plan.desire.clone()),
                        ("success", plan.success_count.to_string()),
                        ("samples", plan.samples.to_string()),
                        ("failure", plan.failure_count.to_string()),
                        ("truncated", plan.truncated_count.to_string()),
                    ],
                )?);
                for path in plan.success_paths.iter().take(5) {
                    let actions: Vec<&str> = path.steps.iter().map(|s| s.action.as_str()).collect();
                    lines.push(self.fill(
                        "how_stochastic.path",
                        &[("frequency", fmt_prob(path.frequency)), ("actions", actions.join(" → "))],
                    )?);
                }
            }
            Explanation::Why(w) => {
                for v in &w.verdicts {
                    let line = match v {
                        WhyVerdict::FurthersIntention {
                            desire,
                            expected_increase,
                        } => self.fill(
                            "why.furthers",
                            &[
                                ("action", w.action.clone()),
                                ("desire", desire.clone()),
                                ("delta", fmt_prob(*expected_increase)),
                            ],
                        )?,
                        WhyVerdict::Gamble {
                            desire,
                            p_increase,
                            expected_positive,
                            ..
                        } => self.fill(
                            "why.gamble",
                            &[
                                ("action", w.action.clone()),
                                ("desire", desire.clone()),
                                ("p", fmt_prob(*p_increase)),
                                ("expected", fmt_prob(*expected_positive)),
                            ],
                        )?,
                        WhyVerdict::Unintentional { .. } => self.fill("why.unintentional", &[])?,
                    };
                    lines.push(line);
                }
            }
        }
        Ok(lines.join("\n"))
    }
}
