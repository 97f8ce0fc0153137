//! A traffic light that cycles independently of the agent.
//!
//! The next light is drawn from a fixed bias (red 45%, yellow 50%, green 5%)
//! whatever the action. Going `up` on green earns +1 and on red costs 1. The
//! optimal agent goes up on green, left on yellow and picks uniformly among
//! left, down and right on red. The initial light is drawn from the same bias.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Agent, Environment};
use crate::error::Result;
use crate::intention::{DesireFile, DesireSpec};
use crate::predicate::{ActionId, ActionSet, Discretiser, LiteralSpec, PredicateSpace, PredicateState, Variable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Light {
    R,
    Y,
    G,
}

impl Light {
    pub const ALL: [Light; 3] = [Light::R, Light::Y, Light::G];

    pub fn name(self) -> &'static str {
        match self {
            Light::R => "R",
            Light::Y => "Y",
            Light::G => "G",
        }
    }
}

pub const ACTIONS: [&str; 4] = ["up", "left", "down", "right"];

/// Bias in twentieths: R 9, Y 10, G 1.
const BIAS: [(Light, u32); 3] = [(Light::R, 9), (Light::Y, 10), (Light::G, 1)];

pub fn bias(light: Light) -> f64 {
    BIAS.iter().find(|(l, _)| *l == light).map_or(0.0, |(_, w)| *w as f64 / 20.0)
}

fn draw<R: Rng + ?Sized>(rng: &mut R) -> Light {
    let mut x = rng.gen_range(0..20u32);
    for (light, w) in BIAS {
        if x < w {
            return light;
        }
        x -= w;
    }
    unreachable!()
}

#[derive(Debug, Clone)]
pub struct TrafficLightEnv {
    actions: ActionSet,
}

impl Default for TrafficLightEnv {
    fn default() -> Self {
        TrafficLightEnv {
            actions: ActionSet::new(ACTIONS).expect("static action names"),
        }
    }
}

impl Environment for TrafficLightEnv {
    type State = Light;

    fn actions(&self) -> &ActionSet {
        &self.actions
    }

    fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> Light {
        draw(rng)
    }

    fn step<R: Rng + ?Sized>(&self, state: &Light, action: ActionId, rng: &mut R) -> Result<(Light, f64)> {
        let reward = match (self.actions.name(action), state) {
            ("up", Light::G) => 1.0,
            ("up", Light::R) => -1.0,
            _ => 0.0,
        };
        Ok((draw(rng), reward))
    }
}

#[derive(Debug, Clone)]
pub struct OptimalAgent {
    actions: ActionSet,
}

impl OptimalAgent {
    pub fn new(env: &TrafficLightEnv) -> Self {
        OptimalAgent {
            actions: env.actions().clone(),
        }
    }

    /// `P(a | light)` over the environment's actions.
    pub fn distribution(&self, light: Light) -> Vec<(ActionId, f64)> {
        let id = |n: &str| self.actions.id(n).expect("static action name");
        match light {
            Light::R => ["left", "down", "right"].iter().map(|n| (id(n), 1.0 / 3.0)).collect(),
            Light::Y => vec![(id("left"), 1.0)],
            Light::G => vec![(id("up"), 1.0)],
        }
    }
}

impl Agent<Light> for OptimalAgent {
    fn act<R: Rng + ?Sized>(&self, state: &Light, rng: &mut R) -> Result<ActionId> {
        let id = |n: &str| self.actions.id(n).expect("static action name");
        Ok(match state {
            Light::R => id(["left", "down", "right"][rng.gen_range(0..3)]),
            Light::Y => id("left"),
            Light::G => id("up"),
        })
    }
}

/// Tells one light apart from the other two. The single variable `light`
/// takes either the distinguished light's name or the other two names
/// concatenated in R, Y, G order.
#[derive(Debug, Clone)]
pub struct LightDiscretiser {
    space: Arc<PredicateSpace>,
    distinguished: Light,
}

impl LightDiscretiser {
    pub fn new(distinguished: Light) -> Self {
        let rest: String = Light::ALL
            .iter()
            .filter(|l| **l != distinguished)
            .map(|l| l.name())
            .collect();
        let space = PredicateSpace::new(vec![Variable::new("light", [distinguished.name().to_string(), rest])])
            .expect("static space");
        LightDiscretiser {
            space: Arc::new(space),
            distinguished,
        }
    }

    pub fn distinguished(&self) -> Light {
        self.distinguished
    }
}

impl Discretiser<Light> for LightDiscretiser {
    fn space(&self) -> &Arc<PredicateSpace> {
        &self.space
    }

    fn discretise(&self, raw: &Light) -> Result<PredicateState> {
        let idx = u16::from(*raw != self.distinguished);
        self.space.state_from_indices(&[idx])
    }
}

/// A single desire: going `up` whenever the light may be green.
pub fn desires(discretiser: &LightDiscretiser) -> DesireFile {
    let value = discretiser.space().variables()[0]
        .domain
        .iter()
        .find(|v| v.contains(Light::G.name()))
        .expect("every view has a value covering green")
        .clone();
    DesireFile {
        desires: vec![DesireSpec {
            id: "cross".into(),
            clause: vec![LiteralSpec {
                var: "light".into(),
                values: vec![value],
            }],
            action: "up".into(),
        }],
    }
}
