//! Frequentist policy graph: occupancy counts `P(s)` and transition counts
//! `P(s', a | s)` over discrete states.
//!
//! Counts are stored as integers and probabilities are derived on demand, so
//! merging graphs built from disjoint episode sets is exact. Nodes are kept
//! sorted by canonical id, which fixes the serialization order and the
//! tie-breaking order used by queries.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::predicate::{ActionId, ActionSet, PredicateSpace, PredicateState};
use crate::trajectory::Episode;

pub type NodeId = usize;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub action: ActionId,
    pub to: NodeId,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub state: PredicateState,
    pub id: String,
    /// Visits, including visits as an episode's terminal state.
    pub occupancy: u64,
    /// Sum of outgoing transition counts.
    pub out_count: u64,
    /// Sorted by action, then successor.
    pub edges: Vec<Edge>,
}

impl Node {
    pub fn is_terminal(&self) -> bool {
        self.out_count == 0
    }
}

/// Raw counts, the mergeable representation of a graph.
#[derive(Debug, Clone, Default)]
pub struct Counts {
    pub occupancy: HashMap<PredicateState, u64>,
    pub transitions: HashMap<(PredicateState, ActionId, PredicateState), u64>,
}

impl Counts {
    pub fn add_episode(&mut self, episode: &Episode) {
        for (s, a, next) in episode.transitions() {
            *self.occupancy.entry(s.clone()).or_default() += 1;
            *self
                .transitions
                .entry((s.clone(), a, next.clone()))
                .or_default() += 1;
        }
        *self.occupancy.entry(episode.terminal.clone()).or_default() += 1;
    }

    pub fn absorb(&mut self, other: Counts) {
        for (s, c) in other.occupancy {
            *self.occupancy.entry(s).or_default() += c;
        }
        for (k, c) in other.transitions {
            *self.transitions.entry(k).or_default() += c;
        }
    }
}

#[derive(Debug, Clone)]
pub struct PolicyGraph {
    space: Arc<PredicateSpace>,
    actions: ActionSet,
    nodes: Vec<Node>,
    lookup: HashMap<PredicateState, NodeId>,
    parents: Vec<Vec<NodeId>>,
    total_occupancy: u64,
}

impl PartialEq for PolicyGraph {
    fn eq(&self, other: &Self) -> bool {
        self.space == other.space && self.actions == other.actions && self.nodes == other.nodes
    }
}

/// Probability views of one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distributions {
    pub state: String,
    pub probability: f64,
    pub terminal: bool,
    pub actions: Vec<ActionProbability>,
    pub transitions: Vec<TransitionProbability>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionProbability {
    pub action: String,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionProbability {
    pub action: String,
    pub to: String,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSummary {
    pub variables: Vec<String>,
    pub actions: Vec<String>,
    pub states: usize,
    pub terminal_states: usize,
    pub edges: usize,
    pub total_occupancy: u64,
    pub transitions: u64,
}

impl PolicyGraph {
    pub fn empty(space: Arc<PredicateSpace>, actions: ActionSet) -> Self {
        PolicyGraph {
            space,
            actions,
            nodes: Vec::new(),
            lookup: HashMap::new(),
            parents: Vec::new(),
            total_occupancy: 0,
        }
    }

    /// Counts every step state plus terminal states into the occupancy and
    /// every `(s_t, a_t, s_{t+1})` into the transitions.
    pub fn build(space: &Arc<PredicateSpace>, actions: &ActionSet, episodes: &[Episode]) -> Result<Self> {
        if episodes.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut counts = Counts::default();
        for ep in episodes {
            if !ep.terminal.space().as_ref().eq(space) {
                return Err(Error::SpaceMismatch);
            }
            if ep
                .steps
                .iter()
                .any(|s| !s.state.space().as_ref().eq(space) || s.action.0 as usize >= actions.len())
            {
                return Err(Error::SpaceMismatch);
            }
            counts.add_episode(ep);
        }
        Self::from_counts(Arc::clone(space), actions.clone(), counts)
    }

    pub fn from_counts(space: Arc<PredicateSpace>, actions: ActionSet, counts: Counts) -> Result<Self> {
        let mut occupancy: BTreeMap<String, (PredicateState, u64)> = BTreeMap::new();
        for (s, c) in counts.occupancy {
            if c > 0 {
                occupancy.insert(s.canonical_id(), (s, c));
            }
        }
        for (s, _, t) in counts.transitions.keys() {
            for st in [s, t] {
                if !occupancy.contains_key(&st.canonical_id()) {
                    return Err(Error::Config(format!(
                        "state `{st}` appears in a transition but has no occupancy"
                    )));
                }
            }
        }
        let mut nodes: Vec<Node> = occupancy
            .into_iter()
            .map(|(id, (state, occ))| Node {
                state,
                id,
                occupancy: occ,
                out_count: 0,
                edges: Vec::new(),
            })
            .collect();
        let lookup: HashMap<PredicateState, NodeId> = nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.state.clone(), i))
            .collect();
        for ((s, a, t), c) in counts.transitions {
            if c == 0 {
                continue;
            }
            if a.0 as usize >= actions.len() {
                return Err(Error::UnknownAction(format!("#{}", a.0)));
            }
            let from = lookup[&s];
            let to = lookup[&t];
            nodes[from].edges.push(Edge { action: a, to, count: c });
            nodes[from].out_count += c;
        }
        let mut parents: Vec<Vec<NodeId>> = vec![Vec::new(); nodes.len()];
        for (i, node) in nodes.iter_mut().enumerate() {
            if node.out_count > node.occupancy {
                return Err(Error::Config(format!(
                    "state `{}` has more outgoing transitions than visits",
                    node.id
                )));
            }
            node.edges.sort_by_key(|e| (e.action, e.to));
            for e in &node.edges {
                parents[e.to].push(i);
            }
        }
        for p in &mut parents {
            p.dedup();
        }
        let total_occupancy = nodes.iter().map(|n| n.occupancy).sum();
        Ok(PolicyGraph {
            space,
            actions,
            nodes,
            lookup,
            parents,
            total_occupancy,
        })
    }

    pub fn counts(&self) -> Counts {
        let mut counts = Counts::default();
        for n in &self.nodes {
            counts.occupancy.insert(n.state.clone(), n.occupancy);
            for e in &n.edges {
                counts
                    .transitions
                    .insert((n.state.clone(), e.action, self.nodes[e.to].state.clone()), e.count);
            }
        }
        counts
    }

    /// Sums the counts of two graphs over the same space and action set.
    pub fn merge(&self, other: &PolicyGraph) -> Result<PolicyGraph> {
        if self.space != other.space {
            return Err(Error::SpaceMismatch);
        }
        if self.actions != other.actions {
            return Err(Error::ActionMismatch);
        }
        let mut counts = self.counts();
        counts.absorb(other.counts());
        Self::from_counts(Arc::clone(&self.space), self.actions.clone(), counts)
    }

    pub fn space(&self) -> &Arc<PredicateSpace> {
        &self.space
    }

    pub fn actions(&self) -> &ActionSet {
        &self.actions
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn total_occupancy(&self) -> u64 {
        self.total_occupancy
    }

    /// Distinct predecessors of a node.
    pub fn parents(&self, id: NodeId) -> &[NodeId] {
        &self.parents[id]
    }

    pub fn node_of(&self, state: &PredicateState) -> Option<NodeId> {
        self.lookup.get(state).copied()
    }

    pub fn node_by_id(&self, canonical_id: &str) -> Option<NodeId> {
        self.nodes
            .binary_search_by(|n| n.id.as_str().cmp(canonical_id))
            .ok()
    }

    /// Looks up a state that must have been observed.
    pub fn require(&self, state: &PredicateState) -> Result<NodeId> {
        if !state.space().as_ref().eq(&self.space) {
            return Err(Error::SpaceMismatch);
        }
        self.node_of(state)
            .ok_or_else(|| Error::UnseenState(state.canonical_id()))
    }

    pub fn parse_state(&self, canonical_id: &str) -> Result<PredicateState> {
        self.space.parse_id(canonical_id)
    }

    /// `P(s)`.
    pub fn state_probability(&self, id: NodeId) -> f64 {
        if self.total_occupancy == 0 {
            return 0.0;
        }
        self.nodes[id].occupancy as f64 / self.total_occupancy as f64
    }

    pub fn action_count(&self, id: NodeId, action: ActionId) -> u64 {
        self.nodes[id]
            .edges
            .iter()
            .filter(|e| e.action == action)
            .map(|e| e.count)
            .sum()
    }

    /// `P(a | s)`, in action order; empty for terminal nodes.
    pub fn action_distribution(&self, id: NodeId) -> Vec<(ActionId, f64)> {
        let node = &self.nodes[id];
        let mut out: Vec<(ActionId, f64)> = Vec::new();
        for e in &node.edges {
            match out.last_mut() {
                Some((a, c)) if *a == e.action => *c += e.count as f64,
                _ => out.push((e.action, e.count as f64)),
            }
        }
        let total = node.out_count as f64;
        for (_, p) in &mut out {
            *p /= total;
        }
        out
    }

    pub fn action_probability(&self, id: NodeId, action: ActionId) -> f64 {
        let node = &self.nodes[id];
        if node.out_count == 0 {
            return 0.0;
        }
        self.action_count(id, action) as f64 / node.out_count as f64
    }

    /// `P(s', a | s)`; empty for terminal nodes.
    pub fn transition_distribution(&self, id: NodeId) -> Vec<(ActionId, NodeId, f64)> {
        let node = &self.nodes[id];
        let total = node.out_count as f64;
        node.edges
            .iter()
            .map(|e| (e.action, e.to, e.count as f64 / total))
            .collect()
    }

    /// `P(s' | s, a)`; empty when `a` was never taken at `s`.
    pub fn successor_distribution(&self, id: NodeId, action: ActionId) -> Vec<(NodeId, f64)> {
        let n = self.action_count(id, action);
        if n == 0 {
            return Vec::new();
        }
        self.nodes[id]
            .edges
            .iter()
            .filter(|e| e.action == action)
            .map(|e| (e.to, e.count as f64 / n as f64))
            .collect()
    }

    /// `P(S' = s' | S = s)` marginalised over actions.
    pub fn next_state_distribution(&self, id: NodeId) -> Vec<(NodeId, f64)> {
        let node = &self.nodes[id];
        let mut acc: BTreeMap<NodeId, u64> = BTreeMap::new();
        for e in &node.edges {
            *acc.entry(e.to).or_default() += e.count;
        }
        let total = node.out_count as f64;
        acc.into_iter().map(|(t, c)| (t, c as f64 / total)).collect()
    }

    pub fn distributions(&self, state: &PredicateState) -> Result<Distributions> {
        let id = self.require(state)?;
        Ok(self.distributions_of(id))
    }

    pub fn distributions_of(&self, id: NodeId) -> Distributions {
        let node = &self.nodes[id];
        Distributions {
            state: node.id.clone(),
            probability: self.state_probability(id),
            terminal: node.is_terminal(),
            actions: self
                .action_distribution(id)
                .into_iter()
                .map(|(a, p)| ActionProbability {
                    action: self.actions.name(a).to_string(),
                    probability: p,
                })
                .collect(),
            transitions: self
                .transition_distribution(id)
                .into_iter()
                .map(|(a, to, p)| TransitionProbability {
                    action: self.actions.name(a).to_string(),
                    to: self.nodes[to].id.clone(),
                    probability: p,
                })
                .collect(),
        }
    }

    /// Occupied state at minimal predicate distance; ties go to the smallest
    /// canonical id.
    pub fn nearest_state(&self, state: &PredicateState) -> Result<NodeId> {
        self.nearest_where(state, |_| true)
    }

    /// As [`nearest_state`](Self::nearest_state), restricted to nodes with
    /// outgoing transitions.
    pub fn nearest_non_terminal(&self, state: &PredicateState) -> Result<NodeId> {
        self.nearest_where(state, |n| !n.is_terminal())
    }

    fn nearest_where(&self, state: &PredicateState, keep: impl Fn(&Node) -> bool) -> Result<NodeId> {
        if !state.space().as_ref().eq(&self.space) {
            return Err(Error::SpaceMismatch);
        }
        let mut best: Option<(usize, NodeId)> = None;
        // nodes are in canonical id order, so the first minimum wins ties
        for (i, node) in self.nodes.iter().enumerate() {
            if !keep(node) {
                continue;
            }
            let d = node.state.distance(state)?;
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, i));
                if d == 0 {
                    break;
                }
            }
        }
        best.map(|(_, i)| i).ok_or(Error::EmptyGraph)
    }

    /// Samples `(a, s')` from `P(s', a | s)`; `None` for terminal nodes.
    pub fn sample_transition<R: Rng + ?Sized>(&self, id: NodeId, rng: &mut R) -> Option<(ActionId, NodeId)> {
        let node = &self.nodes[id];
        if node.out_count == 0 {
            return None;
        }
        let mut draw = rng.gen_range(0..node.out_count);
        for e in &node.edges {
            if draw < e.count {
                return Some((e.action, e.to));
            }
            draw -= e.count;
        }
        unreachable!("edge counts sum to out_count")
    }

    /// Surrogate policy: samples `P(a | s)`, falling back to the nearest
    /// non-terminal observed state when `s` is unseen or terminal.
    pub fn surrogate_action<R: Rng + ?Sized>(&self, state: &PredicateState, rng: &mut R) -> Result<ActionId> {
        if self.nodes.is_empty() {
            return Err(Error::EmptyGraph);
        }
        let id = match self.node_of(state) {
            Some(id) if !self.nodes[id].is_terminal() => id,
            _ => self.nearest_non_terminal(state)?,
        };
        Ok(self
            .sample_transition(id, rng)
            .map(|(a, _)| a)
            .expect("non-terminal node has an outgoing edge"))
    }

    pub fn summary(&self) -> GraphSummary {
        GraphSummary {
            variables: self.space.variables().iter().map(|v| v.name.clone()).collect(),
            actions: self.actions.names().to_vec(),
            states: self.nodes.len(),
            terminal_states: self.nodes.iter().filter(|n| n.is_terminal()).count(),
            edges: self.nodes.iter().map(|n| n.edges.len()).sum(),
            total_occupancy: self.total_occupancy,
            transitions: self.nodes.iter().map(|n| n.out_count).sum(),
        }
    }

    fn to_body(&self) -> GraphBody {
        let nodes = self
            .nodes
            .iter()
            .map(|n| NodeRecord {
                id: n.id.clone(),
                predicates: n
                    .state
                    .pairs()
                    .map(|(k, v)| (k.to_string(), Value::String(v.to_string())))
                    .collect(),
                occupancy: n.occupancy,
                out: n.out_count,
            })
            .collect();
        let edges = self
            .nodes
            .iter()
            .flat_map(|n| {
                n.edges.iter().map(move |e| EdgeRecord {
                    from: n.id.clone(),
                    action: self.actions.name(e.action).to_string(),
                    to: self.nodes[e.to].id.clone(),
                    count: e.count,
                })
            })
            .collect();
        GraphBody {
            version: FORMAT_VERSION,
            space: (*self.space).clone(),
            actions: self.actions.clone(),
            nodes,
            edges,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let body = self.to_body();
        let checksum = body.checksum()?;
        let file = GraphFile { body, checksum };
        let mut text = serde_json::to_string_pretty(&file)?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text)?;
        let version = value.get("version").and_then(Value::as_u64).unwrap_or(0) as u32;
        if version != FORMAT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let file: GraphFile = serde_json::from_value(value)?;
        if file.body.checksum()? != file.checksum {
            return Err(Error::Checksum);
        }
        file.body.into_graph()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Serialize, Deserialize)]
struct NodeRecord {
    id: String,
    predicates: Map<String, Value>,
    occupancy: u64,
    out: u64,
}

#[derive(Serialize, Deserialize)]
struct EdgeRecord {
    from: String,
    action: String,
    to: String,
    count: u64,
}

#[derive(Serialize, Deserialize)]
struct GraphBody {
    version: u32,
    space: PredicateSpace,
    actions: ActionSet,
    nodes: Vec<NodeRecord>,
    edges: Vec<EdgeRecord>,
}

#[derive(Serialize, Deserialize)]
struct GraphFile {
    #[serde(flatten)]
    body: GraphBody,
    checksum: String,
}

impl GraphBody {
    fn checksum(&self) -> Result<String> {
        let bytes = serde_json::to_vec(self)?;
        Ok(hex::encode(Sha256::digest(&bytes)))
    }

    fn into_graph(self) -> Result<PolicyGraph> {
        let space = Arc::new(self.space);
        let mut counts = Counts::default();
        let mut by_id: HashMap<String, PredicateState> = HashMap::new();
        let mut declared_out: HashMap<String, u64> = HashMap::new();
        for n in &self.nodes {
            let state = space.parse_id(&n.id)?;
            let from_predicates = state_from_map(&space, &n.predicates)?;
            if state != from_predicates {
                return Err(Error::Config(format!(
                    "node `{}` predicates disagree with its id",
                    n.id
                )));
            }
            counts.occupancy.insert(state.clone(), n.occupancy);
            declared_out.insert(n.id.clone(), n.out);
            by_id.insert(n.id.clone(), state);
        }
        let mut seen_out: HashMap<&str, u64> = HashMap::new();
        for e in &self.edges {
            let resolve = |id: &str| {
                by_id
                    .get(id)
                    .cloned()
                    .ok_or_else(|| Error::Config(format!("edge references unknown node `{id}`")))
            };
            let from = resolve(&e.from)?;
            let to = resolve(&e.to)?;
            let action = self.actions.id(&e.action)?;
            counts.transitions.insert((from, action, to), e.count);
            *seen_out.entry(e.from.as_str()).or_default() += e.count;
        }
        for (id, out) in &declared_out {
            if seen_out.get(id.as_str()).copied().unwrap_or(0) != *out {
                return Err(Error::Config(format!("node `{id}` out count disagrees with its edges")));
            }
        }
        PolicyGraph::from_counts(space, self.actions, counts)
    }
}

fn state_from_map(space: &Arc<PredicateSpace>, map: &Map<String, Value>) -> Result<PredicateState> {
    let mut pairs = Vec::with_capacity(map.len());
    for (k, v) in map {
        let v = v
            .as_str()
            .ok_or_else(|| Error::Config(format!("predicate `{k}` is not a string")))?;
        pairs.push((k.as_str(), v));
    }
    space.state(pairs)
}
