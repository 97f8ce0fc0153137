//! Desires, desire metrics and intention propagation.
//!
//! A desire is a state region `S_d` (a [`DesireClause`]) plus a desirable
//! action `a_d`. Its intention `I_d(s)` is the probability, under the graph's
//! dynamics, that the agent eventually performs `a_d` inside `S_d` when
//! starting from `s`, not counting paths that fulfil the desire midway.
//!
//! Propagation runs backwards from `S_d`. Each desire state is seeded with
//! `P(a_d | s)`; an increment arriving at `s` flows to every parent `p` scaled
//! by `P(S' = s | S = p)`, or by `P(S' = s, A != a_d | S = p)` when `p` is
//! itself in `S_d`. Increments are accumulated per state in a worklist and a
//! state is only re-expanded once its pending mass reaches `epsilon`.

use std::collections::VecDeque;
use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{NodeId, PolicyGraph};
use crate::predicate::{ActionId, ActionSet, DesireClause, LiteralSpec, PredicateSpace, PredicateState};

/// Desire as written in desire configuration files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesireSpec {
    pub id: String,
    #[serde(rename = "where")]
    pub clause: Vec<LiteralSpec>,
    pub action: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesireFile {
    pub desires: Vec<DesireSpec>,
}

impl DesireFile {
    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn compile(&self, space: &Arc<PredicateSpace>, actions: &ActionSet) -> Result<Vec<Desire>> {
        let desires = self
            .desires
            .iter()
            .map(|d| Desire::from_spec(d, space, actions))
            .collect::<Result<Vec<_>>>()?;
        for (i, d) in desires.iter().enumerate() {
            if desires[..i].iter().any(|o| o.id == d.id) {
                return Err(Error::InvalidClause(format!("duplicate desire id `{}`", d.id)));
            }
        }
        Ok(desires)
    }
}

#[derive(Debug, Clone)]
pub struct Desire {
    pub id: String,
    pub clause: DesireClause,
    pub action: ActionId,
    pub action_name: String,
}

impl Desire {
    pub fn from_spec(spec: &DesireSpec, space: &Arc<PredicateSpace>, actions: &ActionSet) -> Result<Self> {
        if spec.id.is_empty() || spec.id.contains(',') {
            return Err(Error::InvalidClause(format!(
                "desire id `{}` must be non-empty and comma-free",
                spec.id
            )));
        }
        let action = actions
            .id(&spec.action)
            .map_err(|_| Error::InvalidClause(format!("unknown action `{}`", spec.action)))?;
        Ok(Desire {
            id: spec.id.clone(),
            clause: DesireClause::new(space, &spec.clause)?,
            action,
            action_name: spec.action.clone(),
        })
    }

    pub fn to_spec(&self) -> DesireSpec {
        DesireSpec {
            id: self.id.clone(),
            clause: self.clause.to_specs(),
            action: self.action_name.clone(),
        }
    }

    /// `s ⊢ d`.
    pub fn holds(&self, state: &PredicateState) -> bool {
        state.satisfies(&self.clause).unwrap_or(false)
    }

    /// Performing `a_d` inside `S_d`.
    pub fn is_fulfilment(&self, state: &PredicateState, action: ActionId) -> bool {
        action == self.action && self.holds(state)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagationConfig {
    pub epsilon: f64,
    pub max_updates: u64,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        PropagationConfig {
            epsilon: 1e-4,
            max_updates: 10_000_000,
        }
    }
}

impl PropagationConfig {
    pub fn new(epsilon: f64, max_updates: u64) -> Result<Self> {
        let cfg = PropagationConfig { epsilon, max_updates };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::Config(format!("epsilon must lie in (0, 1), got {}", self.epsilon)));
        }
        if self.max_updates == 0 {
            return Err(Error::Config("max_updates must be at least 1".into()));
        }
        Ok(())
    }
}

/// Commitment threshold `C ∈ (0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct CommitmentThreshold(f64);

impl CommitmentThreshold {
    pub fn new(c: f64) -> Result<Self> {
        if c > 0.0 && c <= 1.0 {
            Ok(CommitmentThreshold(c))
        } else {
            Err(Error::Config(format!("commitment threshold must lie in (0, 1], got {c}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Strict `I_d(s) > C`.
    pub fn attributes(self, intention: f64) -> bool {
        intention > self.0
    }
}

impl TryFrom<f64> for CommitmentThreshold {
    type Error = Error;

    fn try_from(c: f64) -> Result<Self> {
        CommitmentThreshold::new(c)
    }
}

impl From<CommitmentThreshold> for f64 {
    fn from(c: CommitmentThreshold) -> f64 {
        c.0
    }
}

/// `P(s ∈ S_d)` and `P(a_d | s ∈ S_d)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesireMetrics {
    pub region_probability: f64,
    /// Undefined when the region was never visited.
    pub action_probability: Option<f64>,
}

pub fn desire_metrics(graph: &PolicyGraph, desire: &Desire) -> DesireMetrics {
    let mut region = 0.0;
    let mut weighted = 0.0;
    for (id, node) in graph.nodes().iter().enumerate() {
        if desire.holds(&node.state) {
            let p = graph.state_probability(id);
            region += p;
            weighted += graph.action_probability(id, desire.action) * p;
        }
    }
    DesireMetrics {
        region_probability: region,
        action_probability: (region > 0.0).then(|| weighted / region),
    }
}

/// Intention values of one desire over every node of a graph.
#[derive(Debug, Clone)]
pub struct IntentionIndex {
    graph: Arc<PolicyGraph>,
    desire: Desire,
    config: PropagationConfig,
    raw: Vec<f64>,
    in_region: Vec<bool>,
    updates: u64,
}

impl IntentionIndex {
    pub fn graph(&self) -> &Arc<PolicyGraph> {
        &self.graph
    }

    pub fn desire(&self) -> &Desire {
        &self.desire
    }

    pub fn config(&self) -> PropagationConfig {
        self.config
    }

    /// Worklist pops spent during propagation.
    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// `I_d` at a node, clamped to `[0, 1]`.
    pub fn value(&self, id: NodeId) -> f64 {
        self.raw[id].clamp(0.0, 1.0)
    }

    /// Unclamped accumulated value, for diagnostics.
    pub fn raw_value(&self, id: NodeId) -> f64 {
        self.raw[id]
    }

    /// `I_d(s)`; 0 for states absent from the graph.
    pub fn value_of(&self, state: &PredicateState) -> f64 {
        self.graph.node_of(state).map_or(0.0, |id| self.value(id))
    }

    pub fn in_region(&self, id: NodeId) -> bool {
        self.in_region[id]
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.raw.len()).map(|i| self.value(i))
    }
}

/// Registers a desire on a graph and propagates its intention values.
pub fn register_desire(
    graph: &Arc<PolicyGraph>,
    desire: Desire,
    config: PropagationConfig,
) -> Result<IntentionIndex> {
    config.validate()?;
    if !desire.clause.space().as_ref().eq(graph.space()) {
        return Err(Error::InvalidClause("desire clause is over a different space".into()));
    }
    if desire.action.0 as usize >= graph.actions().len() {
        return Err(Error::InvalidClause(format!("unknown action `{}`", desire.action_name)));
    }
    let n = graph.len();
    let in_region: Vec<bool> = graph.nodes().iter().map(|node| desire.holds(&node.state)).collect();

    // incoming[s] = [(p, coefficient)] for every parent p of s
    let mut incoming: Vec<Vec<(NodeId, f64)>> = vec![Vec::new(); n];
    for (p, node) in graph.nodes().iter().enumerate() {
        if node.out_count == 0 {
            continue;
        }
        let total = node.out_count as f64;
        let mut acc: Vec<(NodeId, u64)> = Vec::new();
        for e in &node.edges {
            if in_region[p] && e.action == desire.action {
                continue;
            }
            match acc.iter_mut().find(|(t, _)| *t == e.to) {
                Some((_, c)) => *c += e.count,
                None => acc.push((e.to, e.count)),
            }
        }
        for (s, c) in acc {
            incoming[s].push((p, c as f64 / total));
        }
    }

    let eps = config.epsilon;
    let mut raw = vec![0.0; n];
    let mut pending = vec![0.0; n];
    let mut queued = vec![false; n];
    let mut queue: VecDeque<NodeId> = VecDeque::new();
    for s in 0..n {
        if in_region[s] {
            let seed = graph.action_probability(s, desire.action);
            if seed > 0.0 {
                pending[s] += seed;
                queued[s] = true;
                queue.push_back(s);
            }
        }
    }

    let mut updates: u64 = 0;
    while let Some(s) = queue.pop_front() {
        if updates >= config.max_updates {
            queue.push_front(s);
            let sample = queue
                .iter()
                .take(5)
                .map(|&i| graph.node(i).id.clone())
                .collect();
            return Err(Error::PropagationBudget {
                max_updates: config.max_updates,
                active: queue.len(),
                sample,
            });
        }
        updates += 1;
        queued[s] = false;
        let inc = std::mem::take(&mut pending[s]);
        raw[s] += inc;
        for &(p, coef) in &incoming[s] {
            pending[p] += coef * inc;
            if !queued[p] && pending[p] >= eps {
                queued[p] = true;
                queue.push_back(p);
            }
        }
    }

    Ok(IntentionIndex {
        graph: Arc::clone(graph),
        desire,
        config,
        raw,
        in_region,
        updates,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub desire: String,
    pub value: f64,
}

/// Desires with `I_d(s) > C`, by decreasing value (ties by desire id).
pub fn attributed_desires(
    indices: &[IntentionIndex],
    state: &PredicateState,
    commitment: CommitmentThreshold,
) -> Vec<Attribution> {
    let mut out: Vec<Attribution> = indices
        .iter()
        .map(|ix| Attribution {
            desire: ix.desire.id.clone(),
            value: ix.value_of(state),
        })
        .filter(|a| commitment.attributes(a.value))
        .collect();
    out.sort_by(|a, b| b.value.total_cmp(&a.value).then_with(|| a.desire.cmp(&b.desire)));
    out
}

/// CSV dump `state_id,desire_id,value`, one row per (node, desire).
pub fn write_intention_csv<W: Write>(indices: &[IntentionIndex], mut out: W) -> Result<()> {
    writeln!(out, "state_id,desire_id,value")?;
    if let Some(first) = indices.first() {
        for (id, node) in first.graph.nodes().iter().enumerate() {
            for ix in indices {
                writeln!(out, "{},{},{}", node.id, ix.desire.id, ix.value(id))?;
            }
        }
    }
    out.flush()?;
    Ok(())
}
