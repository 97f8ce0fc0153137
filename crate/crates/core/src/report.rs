//! The metrics report shared by the command line and the HTTP service.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::graph::{GraphSummary, PolicyGraph};
use crate::intention::{desire_metrics, CommitmentThreshold, IntentionIndex};
use crate::metrics::{
    any_desire_metrics, entropy_report, intention_metrics, tradeoff_curve, DeltaReward, EntropyReport,
    IntentionMetrics, TradeoffPoint,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesireReport {
    pub id: String,
    pub region_probability: f64,
    pub action_probability: Option<f64>,
    pub intention_probability: f64,
    pub expected_intention: Option<f64>,
}

impl DesireReport {
    pub fn new(graph: &PolicyGraph, index: &IntentionIndex, commitment: CommitmentThreshold) -> Self {
        let dm = desire_metrics(graph, index.desire());
        let im = intention_metrics(index, commitment);
        DesireReport {
            id: index.desire().id.clone(),
            region_probability: dm.region_probability,
            action_probability: dm.action_probability,
            intention_probability: im.intention_probability,
            expected_intention: im.expected_intention,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub graph: GraphSummary,
    pub commitment: f64,
    pub entropy: EntropyReport,
    pub desires: Vec<DesireReport>,
    /// Absent when no desire is registered.
    pub any_desire: Option<IntentionMetrics>,
    pub curve: Option<Vec<TradeoffPoint>>,
    pub delta_reward: Option<DeltaReward>,
}

impl MetricsReport {
    pub fn build(
        graph: &PolicyGraph,
        indices: &[IntentionIndex],
        commitment: CommitmentThreshold,
        curve: Option<&[f64]>,
    ) -> Result<Self> {
        let desires = indices
            .iter()
            .map(|ix| DesireReport::new(graph, ix, commitment))
            .collect();
        let any_desire = if indices.is_empty() {
            None
        } else {
            Some(any_desire_metrics(indices, commitment)?)
        };
        let curve = match curve {
            Some(grid) if !indices.is_empty() => Some(tradeoff_curve(indices, grid)?),
            _ => None,
        };
        Ok(MetricsReport {
            graph: graph.summary(),
            commitment: commitment.value(),
            entropy: entropy_report(graph)?,
            desires,
            any_desire,
            curve,
            delta_reward: None,
        })
    }
}
