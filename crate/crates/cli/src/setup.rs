//! Built-in environments, agents and discretisers, selectable by name.

use std::sync::Arc;

use clap::ValueEnum;
use ipg_core::envs::mini_kitchen::{
    self, CompetentAgent, KitchenDiscretiser, KitchenState, MiniKitchenEnv, PhaseDiscretiser, RandomAgent,
};
use ipg_core::envs::traffic_light::{self, Light, LightDiscretiser, OptimalAgent, TrafficLightEnv};
use ipg_core::envs::{Agent, Environment};
use ipg_core::intention::DesireFile;
use ipg_core::predicate::{Discretiser, PredicateSpace};
use ipg_core::trajectory::{rediscretise, Episode, JsonDiscretiser};

use crate::Usage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EnvName {
    TrafficLight,
    MiniKitchen,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AgentName {
    /// Traffic light only.
    Optimal,
    /// Mini-kitchen only.
    Competent,
    /// Mini-kitchen only; uniform over actions.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DiscName {
    /// Traffic light, `G` against `RY`.
    TrafficLightG,
    /// Traffic light, `R` against `YG`.
    TrafficLightR,
    /// Mini-kitchen held item, pot state and directions to each station.
    MiniKitchen,
    /// Mini-kitchen task phase.
    MiniKitchenCoarse,
}

impl DiscName {
    pub fn env(self) -> EnvName {
        match self {
            DiscName::TrafficLightG | DiscName::TrafficLightR => EnvName::TrafficLight,
            DiscName::MiniKitchen | DiscName::MiniKitchenCoarse => EnvName::MiniKitchen,
        }
    }

    fn light(self) -> LightDiscretiser {
        LightDiscretiser::new(if self == DiscName::TrafficLightR { Light::R } else { Light::G })
    }

    /// The example desire file that goes with this discretiser.
    pub fn desires(self) -> DesireFile {
        match self {
            DiscName::TrafficLightG | DiscName::TrafficLightR => traffic_light::desires(&self.light()),
            DiscName::MiniKitchen => mini_kitchen::desires(),
            DiscName::MiniKitchenCoarse => mini_kitchen::phase_desires(),
        }
    }

    /// Re-discretises the raw payloads of `episodes`.
    pub fn apply(self, episodes: &[Episode]) -> anyhow::Result<(Vec<Episode>, Arc<PredicateSpace>)> {
        fn go<D: Discretiser<R>, R: serde::de::DeserializeOwned>(
            d: D,
            episodes: &[Episode],
        ) -> anyhow::Result<(Vec<Episode>, Arc<PredicateSpace>)> {
            let space = d.space().clone();
            let json = JsonDiscretiser::<D, R>::new(d);
            Ok((rediscretise(episodes, &json)?, space))
        }
        let env = MiniKitchenEnv::default();
        match self {
            DiscName::TrafficLightG | DiscName::TrafficLightR => go::<_, Light>(self.light(), episodes),
            DiscName::MiniKitchen => go::<_, KitchenState>(KitchenDiscretiser::new(&env), episodes),
            DiscName::MiniKitchenCoarse => go::<_, KitchenState>(PhaseDiscretiser::new(&env), episodes),
        }
    }
}

fn name<T: ValueEnum>(v: T) -> String {
    v.to_possible_value().map_or_else(String::new, |p| p.get_name().to_string())
}

/// Work that needs a concrete environment, agent and discretiser.
pub trait Task {
    type Output;

    fn run<E, A, D>(self, env: &E, agent: &A, discretiser: &D) -> anyhow::Result<Self::Output>
    where
        E: Environment,
        A: Agent<E::State>,
        D: Discretiser<E::State>;
}

/// Resolves the names, filling in each environment's defaults, and runs
/// `task` on them.
pub fn dispatch<T: Task>(
    env: EnvName,
    agent: Option<AgentName>,
    disc: Option<DiscName>,
    task: T,
) -> anyhow::Result<T::Output> {
    if let Some(d) = disc {
        if d.env() != env {
            return Err(Usage(format!("discretiser `{}` does not apply to `{}`", name(d), name(env))).into());
        }
    }
    match env {
        EnvName::TrafficLight => {
            let e = TrafficLightEnv::default();
            let d = disc.unwrap_or(DiscName::TrafficLightG).light();
            match agent.unwrap_or(AgentName::Optimal) {
                AgentName::Optimal => task.run(&e, &OptimalAgent::new(&e), &d),
                other => Err(Usage(format!("agent `{}` does not apply to the traffic light", name(other))).into()),
            }
        }
        EnvName::MiniKitchen => {
            let e = MiniKitchenEnv::default();
            match disc.unwrap_or(DiscName::MiniKitchen) {
                DiscName::MiniKitchenCoarse => kitchen(&e, agent, &PhaseDiscretiser::new(&e), task),
                _ => kitchen(&e, agent, &KitchenDiscretiser::new(&e), task),
            }
        }
    }
}

fn kitchen<D: Discretiser<KitchenState>, T: Task>(
    env: &MiniKitchenEnv,
    agent: Option<AgentName>,
    disc: &D,
    task: T,
) -> anyhow::Result<T::Output> {
    match agent.unwrap_or(AgentName::Competent) {
        AgentName::Competent => task.run(env, &CompetentAgent::new(env), disc),
        AgentName::Random => task.run(env, &RandomAgent, disc),
        AgentName::Optimal => Err(Usage("agent `optimal` does not apply to the mini-kitchen".into()).into()),
    }
}
