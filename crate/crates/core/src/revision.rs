//! Timeline annotation and region detection for reviewing episodes.
//!
//! An unintentional region is a maximal run of steps where no desire is
//! attributed. Unfulfilled and stalled regions are tracked per desire: a
//! candidate opens when the desire becomes attributed and is watched until
//! either the desire is fulfilled or its intention stays at or below the
//! threshold for more than `grace` steps.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::PolicyGraph;
use crate::intention::{CommitmentThreshold, IntentionIndex};
use crate::predicate::PredicateState;
use crate::trajectory::{Episode, Step};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedStep {
    pub t: usize,
    pub state: String,
    pub action: String,
    /// The state was not in the graph and was looked up at its nearest
    /// occupied neighbour.
    pub approximated: bool,
    /// One value per desire, in desire order.
    pub intentions: Vec<f64>,
    pub attributed: Vec<String>,
    pub fulfilled: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineAnnotation {
    pub episode: u64,
    pub commitment: f64,
    pub desires: Vec<String>,
    pub steps: Vec<AnnotatedStep>,
}

impl TimelineAnnotation {
    fn max_value(&self, t: usize) -> f64 {
        self.steps[t].intentions.iter().copied().fold(0.0, f64::max)
    }
}

pub fn annotate(
    graph: &PolicyGraph,
    indices: &[IntentionIndex],
    episode: &Episode,
    c: CommitmentThreshold,
) -> Result<TimelineAnnotation> {
    let mut steps = Vec::with_capacity(episode.len());
    for (t, step) in episode.steps.iter().enumerate() {
        if step.state.space().as_ref() != graph.space().as_ref() {
            return Err(Error::SpaceMismatch);
        }
        let (id, approximated) = match graph.node_of(&step.state) {
            Some(id) => (id, false),
            None => (graph.nearest_state(&step.state)?, true),
        };
        let intentions: Vec<f64> = indices.iter().map(|ix| ix.value(id)).collect();
        steps.push(AnnotatedStep {
            t,
            state: step.state.canonical_id(),
            action: graph.actions().name(step.action).to_string(),
            approximated,
            attributed: indices
                .iter()
                .zip(&intentions)
                .filter(|(_, v)| c.attributes(**v))
                .map(|(ix, _)| ix.desire().id.clone())
                .collect(),
            fulfilled: indices
                .iter()
                .filter(|ix| ix.desire().is_fulfilment(&step.state, step.action))
                .map(|ix| ix.desire().id.clone())
                .collect(),
            intentions,
        });
    }
    Ok(TimelineAnnotation {
        episode: episode.id,
        commitment: c.value(),
        desires: indices.iter().map(|ix| ix.desire().id.clone()).collect(),
        steps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RegionKind {
    Unintentional,
    Unfulfilled,
    Stalled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub episode: u64,
    pub kind: RegionKind,
    pub t_start: usize,
    /// Inclusive.
    pub t_end: usize,
    pub desire: Option<String>,
    pub peak: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionConfig {
    pub min_len: usize,
    pub grace: usize,
    pub stall_horizon: usize,
}

impl Default for RegionConfig {
    fn default() -> Self {
        RegionConfig {
            min_len: 5,
            grace: 1,
            stall_horizon: 50,
        }
    }
}

impl RegionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_len == 0 || self.stall_horizon == 0 {
            return Err(Error::Config("min_len and stall_horizon must be at least 1".into()));
        }
        Ok(())
    }
}

/// Maximal runs of at least `min_len` steps where no desire exceeds `c`.
pub fn find_unintentional(annotation: &TimelineAnnotation, c: CommitmentThreshold, min_len: usize) -> Vec<Region> {
    let mut out = Vec::new();
    let n = annotation.steps.len();
    let mut t = 0;
    while t < n {
        if c.attributes(annotation.max_value(t)) {
            t += 1;
            continue;
        }
        let start = t;
        let mut peak: f64 = 0.0;
        while t < n && !c.attributes(annotation.max_value(t)) {
            peak = peak.max(annotation.max_value(t));
            t += 1;
        }
        if t - start >= min_len.max(1) {
            out.push(Region {
                episode: annotation.episode,
                kind: RegionKind::Unintentional,
                t_start: start,
                t_end: t - 1,
                desire: None,
                peak,
            });
        }
    }
    out
}

#[derive(Debug, Clone)]
struct Candidate {
    start: usize,
    last_above: usize,
    below: usize,
    peak: f64,
}

/// Streaming per-desire lapse and stall detection.
///
/// A candidate opens at the first step where the desire is attributed and
/// not fulfilled. It closes silently on fulfilment, or as `Stalled` over
/// `[start, fulfilment - 1]` when more than `stall_horizon` steps passed
/// first. It closes as `Unfulfilled` over `[start, last attributed step]`
/// once the value stays at or below `c` for more than `grace` steps. A
/// candidate still open when the episode ends is reported only if it has
/// already stalled. Regions are final once returned by [`push`](Self::push).
#[derive(Debug, Clone)]
pub struct UnfulfilledTracker {
    episode: u64,
    desires: Vec<String>,
    c: CommitmentThreshold,
    grace: usize,
    stall_horizon: usize,
    open: Vec<Option<Candidate>>,
    t: usize,
}

impl UnfulfilledTracker {
    pub fn new(
        episode: u64,
        desires: Vec<String>,
        c: CommitmentThreshold,
        grace: usize,
        stall_horizon: usize,
    ) -> Self {
        UnfulfilledTracker {
            episode,
            open: vec![None; desires.len()],
            desires,
            c,
            grace,
            stall_horizon,
            t: 0,
        }
    }

    fn region(&self, d: usize, kind: RegionKind, cand: &Candidate, end: usize) -> Region {
        Region {
            episode: self.episode,
            kind,
            t_start: cand.start,
            t_end: end,
            desire: Some(self.desires[d].clone()),
            peak: cand.peak,
        }
    }

    /// Consumes the next step and returns the regions it closes.
    pub fn push(&mut self, step: &AnnotatedStep) -> Vec<Region> {
        let t = self.t;
        self.t += 1;
        let mut closed = Vec::new();
        for d in 0..self.desires.len() {
            let v = step.intentions[d];
            let above = self.c.attributes(v);
            let fulfilled = step.fulfilled.iter().any(|f| *f == self.desires[d]);
            let Some(cand) = self.open[d].as_mut() else {
                if above && !fulfilled {
                    self.open[d] = Some(Candidate {
                        start: t,
                        last_above: t,
                        below: 0,
                        peak: v,
                    });
                }
                continue;
            };
            if fulfilled {
                let cand = self.open[d].take().expect("open candidate");
                if t - cand.start > self.stall_horizon {
                    closed.push(self.region(d, RegionKind::Stalled, &cand, t - 1));
                }
            } else if above {
                cand.last_above = t;
                cand.below = 0;
                cand.peak = cand.peak.max(v);
            } else {
                cand.below += 1;
                if cand.below > self.grace {
                    let cand = self.open[d].take().expect("open candidate");
                    closed.push(self.region(d, RegionKind::Unfulfilled, &cand, cand.last_above));
                }
            }
        }
        closed
    }

    /// Ends the episode.
    pub fn finish(self) -> Vec<Region> {
        let n = self.t;
        self.open
            .iter()
            .enumerate()
            .filter_map(|(d, cand)| {
                let cand = cand.as_ref()?;
                (n - cand.start > self.stall_horizon)
                    .then(|| self.region(d, RegionKind::Stalled, cand, cand.last_above))
            })
            .collect()
    }
}

fn sort_regions(regions: &mut [Region]) {
    regions.sort_by(|a, b| (a.t_start, a.kind, &a.desire).cmp(&(b.t_start, b.kind, &b.desire)));
}

pub fn find_unfulfilled(
    annotation: &TimelineAnnotation,
    c: CommitmentThreshold,
    grace: usize,
    stall_horizon: usize,
) -> Vec<Region> {
    let mut tracker = UnfulfilledTracker::new(annotation.episode, annotation.desires.clone(), c, grace, stall_horizon);
    let mut out: Vec<Region> = annotation.steps.iter().flat_map(|s| tracker.push(s)).collect();
    out.extend(tracker.finish());
    sort_regions(&mut out);
    out
}

/// All regions of one annotation, ordered by start, kind and desire.
pub fn find_regions(annotation: &TimelineAnnotation, c: CommitmentThreshold, cfg: RegionConfig) -> Result<Vec<Region>> {
    cfg.validate()?;
    let mut out = find_unintentional(annotation, c, cfg.min_len);
    out.extend(find_unfulfilled(annotation, c, cfg.grace, cfg.stall_horizon));
    sort_regions(&mut out);
    Ok(out)
}

/// Samples an episode of at most `n_steps` moves from `P(s', a | s)`,
/// stopping early at a terminal state.
pub fn sample_timeline(graph: &PolicyGraph, n_steps: usize, start: &PredicateState, seed: u64) -> Result<Episode> {
    if graph.is_empty() {
        return Err(Error::EmptyGraph);
    }
    let mut cur = graph.require(start)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut steps = Vec::new();
    for t in 0..n_steps {
        let Some((action, next)) = graph.sample_transition(cur, &mut rng) else {
            break;
        };
        steps.push(Step {
            episode: 0,
            t: t as u32,
            state: graph.node(cur).state.clone(),
            action,
            raw: None,
        });
        cur = next;
    }
    Ok(Episode {
        id: 0,
        steps,
        terminal: graph.node(cur).state.clone(),
        terminal_raw: None,
    })
}
