//! Immutable snapshot of everything the service answers from.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use ipg_core::explain::TemplatePack;
use ipg_core::graph::{NodeId, PolicyGraph};
use ipg_core::intention::{
    register_desire, CommitmentThreshold, Desire, DesireFile, DesireSpec, IntentionIndex, PropagationConfig,
};
use ipg_core::predicate::PredicateState;
use ipg_core::trajectory::{load_trajectories, Episode};
use ipg_core::{Error, Result};

/// A loaded graph with its registered desires and episodes. Registration
/// produces a new session rather than mutating this one.
#[derive(Debug, Clone)]
pub struct Session {
    graph: Arc<PolicyGraph>,
    indices: Vec<IntentionIndex>,
    episodes: BTreeMap<u64, Episode>,
    commitment: CommitmentThreshold,
    propagation: PropagationConfig,
    templates: TemplatePack,
}

/// Outcome of registering one desire.
#[derive(Debug)]
pub struct Registration {
    pub session: Session,
    pub updates: u64,
    pub duration: Duration,
}

impl Session {
    pub fn new(
        graph: PolicyGraph,
        episodes: Vec<Episode>,
        commitment: CommitmentThreshold,
        propagation: PropagationConfig,
    ) -> Result<Self> {
        propagation.validate()?;
        let mut by_id = BTreeMap::new();
        for ep in episodes {
            let id = ep.id;
            if by_id.insert(id, ep).is_some() {
                return Err(Error::Config(format!("episode {id} appears twice")));
            }
        }
        Ok(Session {
            graph: Arc::new(graph),
            indices: Vec::new(),
            episodes: by_id,
            commitment,
            propagation,
            templates: TemplatePack::default(),
        })
    }

    /// Reads a graph file, and optionally trajectories for timelines and a
    /// desire file to register up front.
    pub fn load(
        graph_path: &Path,
        trajectories: Option<&Path>,
        desires: Option<&Path>,
        commitment: CommitmentThreshold,
        propagation: PropagationConfig,
    ) -> Result<Self> {
        let graph = PolicyGraph::load(graph_path)?;
        let episodes = match trajectories {
            Some(p) => load_trajectories(p, graph.space(), graph.actions())?,
            None => Vec::new(),
        };
        let mut session = Session::new(graph, episodes, commitment, propagation)?;
        if let Some(p) = desires {
            let file = DesireFile::load(p)?;
            for desire in file.compile(session.graph.space(), session.graph.actions())? {
                session.indices.push(register_desire(&session.graph, desire, propagation)?);
            }
        }
        Ok(session)
    }

    pub fn graph(&self) -> &Arc<PolicyGraph> {
        &self.graph
    }

    pub fn indices(&self) -> &[IntentionIndex] {
        &self.indices
    }

    pub fn index(&self, desire: &str) -> Option<&IntentionIndex> {
        self.indices.iter().find(|ix| ix.desire().id == desire)
    }

    pub fn episodes(&self) -> &BTreeMap<u64, Episode> {
        &self.episodes
    }

    pub fn commitment(&self) -> CommitmentThreshold {
        self.commitment
    }

    pub fn propagation(&self) -> PropagationConfig {
        self.propagation
    }

    pub fn templates(&self) -> &TemplatePack {
        &self.templates
    }

    /// Resolves a canonical id to an occupied node.
    pub fn state(&self, canonical_id: &str) -> Result<(NodeId, PredicateState)> {
        let state = self.graph.parse_state(canonical_id)?;
        let id = self.graph.require(&state)?;
        Ok((id, state))
    }

    /// Compiles and propagates `spec`. The caller checks for duplicate ids.
    pub fn with_desire(&self, spec: &DesireSpec) -> Result<Registration> {
        let desire = Desire::from_spec(spec, self.graph.space(), self.graph.actions())?;
        let started = Instant::now();
        let index = register_desire(&self.graph, desire, self.propagation)?;
        let duration = started.elapsed();
        let updates = index.updates();
        let mut session = self.clone();
        session.indices.push(index);
        Ok(Registration {
            session,
            updates,
            duration,
        })
    }

    /// `None` when no desire has that id.
    pub fn without_desire(&self, desire: &str) -> Option<Session> {
        let pos = self.indices.iter().position(|ix| ix.desire().id == desire)?;
        let mut session = self.clone();
        session.indices.remove(pos);
        Some(session)
    }
}
