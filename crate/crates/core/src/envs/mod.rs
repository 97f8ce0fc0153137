//! Small executable environments with scripted agents, used to generate
//! trajectories and to measure surrogate fidelity.

pub mod mini_kitchen;
pub mod traffic_light;

use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{Counts, PolicyGraph};
use crate::predicate::{ActionId, ActionSet, Discretiser};
use crate::trajectory::{discretise_episodes, save_trajectories, Episode, RawEpisode};

pub trait Environment {
    type State: Clone + Serialize;

    fn actions(&self) -> &ActionSet;

    fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::State;

    /// Returns the next state and the reward for `action`.
    fn step<R: Rng + ?Sized>(&self, state: &Self::State, action: ActionId, rng: &mut R) -> Result<(Self::State, f64)>;
}

pub trait Agent<S> {
    fn act<R: Rng + ?Sized>(&self, state: &S, rng: &mut R) -> Result<ActionId>;
}

/// Plays the surrogate policy of a graph through a discretiser.
pub struct SurrogateAgent<'a, D> {
    pub graph: &'a PolicyGraph,
    pub discretiser: &'a D,
}

impl<S, D: Discretiser<S>> Agent<S> for SurrogateAgent<'_, D> {
    fn act<R: Rng + ?Sized>(&self, state: &S, rng: &mut R) -> Result<ActionId> {
        let s = self.discretiser.discretise(state)?;
        self.graph.surrogate_action(&s, rng)
    }
}

/// Samples an action from a finite weighted distribution.
pub(crate) fn sample_weighted<R: Rng + ?Sized>(weights: &[(ActionId, f64)], rng: &mut R) -> ActionId {
    let dist = WeightedIndex::new(weights.iter().map(|(_, w)| *w)).expect("valid action distribution");
    weights[dist.sample(rng)].0
}

/// Independent environment and agent streams for episode `i`, so two agents
/// can be compared on identical environment randomness.
pub fn episode_rngs(seed: u64, episode: u64) -> (ChaCha8Rng, ChaCha8Rng) {
    let mut env = ChaCha8Rng::seed_from_u64(seed);
    env.set_stream(2 * episode);
    let mut agent = ChaCha8Rng::seed_from_u64(seed);
    agent.set_stream(2 * episode + 1);
    (env, agent)
}

/// Rolls out one episode of `horizon` steps.
pub fn rollout<E, A>(env: &E, agent: &A, id: u64, horizon: usize, seed: u64) -> Result<(RawEpisode<E::State>, f64)>
where
    E: Environment,
    A: Agent<E::State>,
{
    let (mut env_rng, mut agent_rng) = episode_rngs(seed, id);
    let mut state = env.reset(&mut env_rng);
    let mut steps = Vec::with_capacity(horizon);
    let mut total = 0.0;
    for _ in 0..horizon {
        let action = agent.act(&state, &mut agent_rng)?;
        let (next, reward) = env.step(&state, action, &mut env_rng)?;
        total += reward;
        steps.push((state, action));
        state = next;
    }
    Ok((
        RawEpisode {
            id,
            steps,
            terminal: state,
        },
        total,
    ))
}

#[derive(Debug, Clone)]
pub struct Generated {
    pub episodes: Vec<Episode>,
    /// Transition counts tallied while generating.
    pub counts: Counts,
    pub returns: Vec<f64>,
}

pub fn generate_trajectories<E, A, D>(
    env: &E,
    agent: &A,
    discretiser: &D,
    n_episodes: usize,
    horizon: usize,
    seed: u64,
) -> Result<Generated>
where
    E: Environment,
    A: Agent<E::State>,
    D: Discretiser<E::State>,
{
    if n_episodes == 0 || horizon == 0 {
        return Err(Error::Config("episodes and horizon must be at least 1".into()));
    }
    let mut counts = Counts::default();
    let mut episodes = Vec::with_capacity(n_episodes);
    let mut returns = Vec::with_capacity(n_episodes);
    for id in 0..n_episodes as u64 {
        let (raw, ret) = rollout(env, agent, id, horizon, seed)?;
        let mut prev = None;
        for (s, a) in raw.steps.iter().map(|(s, a)| (discretiser.discretise(s), *a)) {
            let s = s?;
            *counts.occupancy.entry(s.clone()).or_default() += 1;
            if let Some((p, pa)) = prev.replace((s.clone(), a)) {
                *counts.transitions.entry((p, pa, s)).or_default() += 1;
            }
        }
        let terminal = discretiser.discretise(&raw.terminal)?;
        *counts.occupancy.entry(terminal.clone()).or_default() += 1;
        if let Some((p, pa)) = prev {
            *counts.transitions.entry((p, pa, terminal)).or_default() += 1;
        }
        episodes.extend(discretise_episodes(&[raw], discretiser)?);
        returns.push(ret);
    }
    Ok(Generated {
        episodes,
        counts,
        returns,
    })
}

/// Generates and writes a trajectory file including raw payloads.
pub fn write_generated<E, A, D>(
    path: impl AsRef<Path>,
    env: &E,
    agent: &A,
    discretiser: &D,
    n_episodes: usize,
    horizon: usize,
    seed: u64,
) -> Result<Generated>
where
    E: Environment,
    A: Agent<E::State>,
    D: Discretiser<E::State>,
{
    let generated = generate_trajectories(env, agent, discretiser, n_episodes, horizon, seed)?;
    save_trajectories(path, &generated.episodes, env.actions())?;
    Ok(generated)
}
