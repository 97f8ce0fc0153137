//! Static entropy metrics, surrogate reward fidelity, and the
//! interpretability/reliability trade-off of intention attribution.

use serde::{Deserialize, Serialize};

use crate::envs::{rollout, Agent, Environment, SurrogateAgent};
use crate::error::{Error, Result};
use crate::graph::{NodeId, PolicyGraph};
use crate::intention::{CommitmentThreshold, IntentionIndex};
use crate::predicate::Discretiser;

fn entropy_bits(probs: impl IntoIterator<Item = f64>) -> f64 {
    probs
        .into_iter()
        .filter(|&p| p > 0.0)
        .fold(0.0, |h, p| h - p * p.log2())
}

/// Entropies in bits.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Entropies {
    /// Joint entropy of `(a, s')`.
    pub h: f64,
    /// Action entropy.
    pub h_a: f64,
    /// Expected entropy of the world response.
    pub h_w: f64,
}

impl Entropies {
    fn add_scaled(&mut self, e: Entropies, w: f64) {
        self.h += w * e.h;
        self.h_a += w * e.h_a;
        self.h_w += w * e.h_w;
    }

    fn scale(&mut self, by: f64) {
        self.h *= by;
        self.h_a *= by;
        self.h_w *= by;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateEntropy {
    pub state: String,
    pub probability: f64,
    pub terminal: bool,
    #[serde(flatten)]
    pub entropies: Entropies,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub states: Vec<StateEntropy>,
    /// Expectation under `P(s)` renormalized over non-terminal states.
    pub weighted: Entropies,
    /// Plain mean over non-terminal states.
    pub mean: Entropies,
}

pub fn state_entropies(graph: &PolicyGraph, id: NodeId) -> Entropies {
    if graph.node(id).is_terminal() {
        return Entropies::default();
    }
    let actions = graph.action_distribution(id);
    let h_w = actions
        .iter()
        .map(|&(a, p)| p * entropy_bits(graph.successor_distribution(id, a).into_iter().map(|(_, q)| q)))
        .sum();
    Entropies {
        h: entropy_bits(graph.transition_distribution(id).into_iter().map(|(_, _, p)| p)),
        h_a: entropy_bits(actions.into_iter().map(|(_, p)| p)),
        h_w,
    }
}

/// Terminal states are reported with zero entropy and left out of both
/// aggregates.
pub fn entropy_report(graph: &PolicyGraph) -> Result<EntropyReport> {
    if graph.is_empty() {
        return Err(Error::EmptyGraph);
    }
    let mut states = Vec::with_capacity(graph.len());
    let (mut weighted, mut mean) = (Entropies::default(), Entropies::default());
    let (mut mass, mut live) = (0.0, 0usize);
    for (id, node) in graph.nodes().iter().enumerate() {
        let e = state_entropies(graph, id);
        let p = graph.state_probability(id);
        if !node.is_terminal() {
            mass += p;
            live += 1;
            weighted.add_scaled(e, p);
            mean.add_scaled(e, 1.0);
        }
        states.push(StateEntropy {
            state: node.id.clone(),
            probability: p,
            terminal: node.is_terminal(),
            entropies: e,
        });
    }
    if mass > 0.0 {
        weighted.scale(1.0 / mass);
    }
    if live > 0 {
        mean.scale(1.0 / live as f64);
    }
    Ok(EntropyReport { states, weighted, mean })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaRewardConfig {
    pub horizon: usize,
    pub n_episodes: usize,
    pub seed: u64,
}

impl DeltaRewardConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 || self.n_episodes == 0 {
            return Err(Error::Config("horizon and n_episodes must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaReward {
    pub horizon: usize,
    pub n_episodes: usize,
    pub original_mean: f64,
    pub surrogate_mean: f64,
    /// Original minus surrogate mean return.
    pub delta: f64,
    /// `sqrt((var_original + var_surrogate) / 2)` of per-episode returns.
    pub pooled_std: f64,
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Mean returns of `n_episodes` with `agent` and with the graph's surrogate
/// policy. Episode `i` uses the same environment randomness for both.
pub fn delta_reward<E, A, D>(
    env: &E,
    agent: &A,
    graph: &PolicyGraph,
    discretiser: &D,
    cfg: DeltaRewardConfig,
) -> Result<DeltaReward>
where
    E: Environment,
    A: Agent<E::State>,
    D: Discretiser<E::State>,
{
    cfg.validate()?;
    if discretiser.space().as_ref() != graph.space().as_ref() {
        return Err(Error::SpaceMismatch);
    }
    let surrogate = SurrogateAgent { graph, discretiser };
    let mut original = Vec::with_capacity(cfg.n_episodes);
    let mut replayed = Vec::with_capacity(cfg.n_episodes);
    for i in 0..cfg.n_episodes as u64 {
        original.push(rollout(env, agent, i, cfg.horizon, cfg.seed)?.1);
        replayed.push(rollout(env, &surrogate, i, cfg.horizon, cfg.seed)?.1);
    }
    let (m1, v1) = mean_var(&original);
    let (m2, v2) = mean_var(&replayed);
    Ok(DeltaReward {
        horizon: cfg.horizon,
        n_episodes: cfg.n_episodes,
        original_mean: m1,
        surrogate_mean: m2,
        delta: m1 - m2,
        pooled_std: ((v1 + v2) / 2.0).sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntentionMetrics {
    /// Probability of being in a state where the intention is attributed.
    pub intention_probability: f64,
    /// Occupancy-weighted mean intention over those states; undefined when
    /// there are none.
    pub expected_intention: Option<f64>,
}

fn attributed_metrics<F>(graph: &PolicyGraph, value: F, c: CommitmentThreshold) -> IntentionMetrics
where
    F: Fn(NodeId) -> f64,
{
    let (mut mass, mut weighted) = (0.0, 0.0);
    for id in 0..graph.len() {
        let v = value(id);
        if c.attributes(v) {
            let p = graph.state_probability(id);
            mass += p;
            weighted += v * p;
        }
    }
    IntentionMetrics {
        intention_probability: mass,
        expected_intention: (mass > 0.0).then(|| weighted / mass),
    }
}

pub fn intention_metrics(index: &IntentionIndex, c: CommitmentThreshold) -> IntentionMetrics {
    attributed_metrics(index.graph(), |id| index.value(id), c)
}

/// Interpretability and reliability for "any desire": a state counts when
/// some desire is attributed, with `max_d I_d(s)` as its value.
pub fn any_desire_metrics(indices: &[IntentionIndex], c: CommitmentThreshold) -> Result<IntentionMetrics> {
    let graph = shared_graph(indices)?;
    Ok(attributed_metrics(
        graph,
        |id| indices.iter().map(|ix| ix.value(id)).fold(0.0, f64::max),
        c,
    ))
}

fn shared_graph(indices: &[IntentionIndex]) -> Result<&PolicyGraph> {
    let first = indices
        .first()
        .ok_or_else(|| Error::Config("at least one desire is required".into()))?;
    if indices.iter().any(|ix| !std::sync::Arc::ptr_eq(ix.graph(), first.graph())) {
        return Err(Error::Config("intention indices were built over different graphs".into()));
    }
    Ok(first.graph())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesirePoint {
    pub desire: String,
    pub interpretability: f64,
    pub reliability: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    pub commitment: f64,
    pub interpretability: f64,
    pub reliability: Option<f64>,
    pub desires: Vec<DesirePoint>,
}

/// `k / n` for `k = 1..=n`.
pub fn uniform_grid(n: usize) -> Vec<f64> {
    (1..=n).map(|k| k as f64 / n as f64).collect()
}

/// Parses a comma-separated list of thresholds, e.g. `0.25,0.5,0.75`.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("`{t}` is not a commitment threshold")))
        })
        .collect()
}

pub fn tradeoff_curve(indices: &[IntentionIndex], grid: &[f64]) -> Result<Vec<TradeoffPoint>> {
    if grid.is_empty() {
        return Err(Error::Config("commitment grid is empty".into()));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("commitment grid must be strictly increasing".into()));
    }
    shared_graph(indices)?;
    grid.iter()
        .map(|&c| {
            let threshold = CommitmentThreshold::new(c)?;
            let any = any_desire_metrics(indices, threshold)?;
            Ok(TradeoffPoint {
                commitment: c,
                interpretability: any.intention_probability,
                reliability: any.expected_intention,
                desires: indices
                    .iter()
                    .map(|ix| {
                        let m = intention_metrics(ix, threshold);
                        DesirePoint {
                            desire: ix.desire().id.clone(),
                            interpretability: m.intention_probability,
                            reliability: m.expected_intention,
                        }
                    })
                    .collect(),
            })
        })
        .collect()
}
