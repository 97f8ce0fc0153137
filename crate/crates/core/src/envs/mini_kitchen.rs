//! A single-agent cooking gridworld.
//!
//! The agent walks on the floor tiles of a small kitchen, turns to face
//! neighbouring tiles and interacts with whatever it faces. Three onions in
//! the pot start a soup that cooks for [`COOK_TIME`] steps; a dish collects
//! the finished soup, and delivering it at the service tile earns
//! [`DELIVERY_REWARD`]. Counters hold one item each.
//!
//! ```text
//! XXPXX    X counter    P pot
//! O   X    O onions     D dishes
//! X   D    S service
//! X   X
//! XXSXX
//! ```

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{sample_weighted, Agent, Environment};
use crate::error::{Error, Result};
use crate::intention::{DesireFile, DesireSpec};
use crate::predicate::{ActionId, ActionSet, Discretiser, LiteralSpec, PredicateSpace, PredicateState, Variable};

pub const DEFAULT_LAYOUT: [&str; 5] = ["XXPXX", "O   X", "X   D", "X   X", "XXSXX"];
pub const ACTIONS: [&str; 6] = ["up", "down", "left", "right", "interact", "stay"];
pub const COOK_TIME: u8 = 5;
pub const DELIVERY_REWARD: f64 = 20.0;
/// Probability that the competent agent acts uniformly at random.
pub const NOISE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dir {
    Up,
    Down,
    Left,
    Right,
}

impl Dir {
    pub const ALL: [Dir; 4] = [Dir::Up, Dir::Down, Dir::Left, Dir::Right];

    fn delta(self) -> (isize, isize) {
        match self {
            Dir::Up => (-1, 0),
            Dir::Down => (1, 0),
            Dir::Left => (0, -1),
            Dir::Right => (0, 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Item {
    Onion,
    Dish,
    Soup,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "stage", rename_all = "snake_case")]
pub enum Pot {
    Empty,
    Waiting { onions: u8 },
    Cooking { elapsed: u8 },
    Finished,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tile {
    Floor,
    Counter,
    Onions,
    Dishes,
    Pot,
    Service,
}

pub type Pos = (usize, usize);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterItem {
    pub pos: Pos,
    pub item: Item,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KitchenState {
    pub pos: Pos,
    pub facing: Dir,
    pub held: Option<Item>,
    pub pot: Pot,
    /// Sorted by position.
    pub counters: Vec<CounterItem>,
}

impl KitchenState {
    pub fn counter_item(&self, pos: Pos) -> Option<Item> {
        self.counters.iter().find(|c| c.pos == pos).map(|c| c.item)
    }
}

/// Next move toward a target: a direction, `Interact` when already facing
/// it, or `Stay` when it cannot be reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Nav {
    Move(Dir),
    Interact,
    Stay,
}

impl Nav {
    pub fn code(self) -> &'static str {
        match self {
            Nav::Move(Dir::Up) => "U",
            Nav::Move(Dir::Down) => "D",
            Nav::Move(Dir::Left) => "L",
            Nav::Move(Dir::Right) => "R",
            Nav::Interact => "I",
            Nav::Stay => "S",
        }
    }

    fn action(self) -> ActionId {
        ActionId(match self {
            Nav::Move(Dir::Up) => 0,
            Nav::Move(Dir::Down) => 1,
            Nav::Move(Dir::Left) => 2,
            Nav::Move(Dir::Right) => 3,
            Nav::Interact => 4,
            Nav::Stay => 5,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Layout {
    tiles: Vec<Vec<Tile>>,
    start: Pos,
}

impl Layout {
    pub fn parse(rows: &[&str]) -> Result<Self> {
        let env_err = |m: String| Error::Environment(m);
        let width = rows.first().map_or(0, |r| r.len());
        if rows.is_empty() || rows.len() > 7 || width > 7 {
            return Err(env_err("layout must be between 1x1 and 7x7".into()));
        }
        let mut tiles = Vec::with_capacity(rows.len());
        for row in rows {
            if row.len() != width {
                return Err(env_err("layout rows differ in length".into()));
            }
            let parsed = row
                .chars()
                .map(|c| match c {
                    ' ' => Ok(Tile::Floor),
                    'X' => Ok(Tile::Counter),
                    'O' => Ok(Tile::Onions),
                    'D' => Ok(Tile::Dishes),
                    'P' => Ok(Tile::Pot),
                    'S' => Ok(Tile::Service),
                    other => Err(env_err(format!("unknown layout tile `{other}`"))),
                })
                .collect::<Result<Vec<_>>>()?;
            tiles.push(parsed);
        }
        let count = |t: Tile| tiles.iter().flatten().filter(|x| **x == t).count();
        for t in [Tile::Onions, Tile::Dishes, Tile::Pot, Tile::Service] {
            if count(t) != 1 {
                return Err(env_err(format!("layout needs exactly one {t:?} tile")));
            }
        }
        let floor: Vec<Pos> = (0..tiles.len())
            .flat_map(|r| (0..width).map(move |c| (r, c)))
            .filter(|&(r, c)| tiles[r][c] == Tile::Floor)
            .collect();
        if floor.is_empty() {
            return Err(env_err("layout has no floor".into()));
        }
        let start = floor[floor.len() / 2];
        Ok(Layout { tiles, start })
    }

    pub fn tile(&self, pos: Pos) -> Tile {
        self.tiles[pos.0][pos.1]
    }

    pub fn start(&self) -> Pos {
        self.start
    }

    pub fn neighbour(&self, pos: Pos, dir: Dir) -> Option<Pos> {
        let (dr, dc) = dir.delta();
        let r = pos.0.checked_add_signed(dr)?;
        let c = pos.1.checked_add_signed(dc)?;
        (r < self.tiles.len() && c < self.tiles[r].len()).then_some((r, c))
    }

    fn is_floor(&self, pos: Pos) -> bool {
        self.tile(pos) == Tile::Floor
    }

    /// Shortest way to face a tile accepted by `target`. Moves are explored
    /// in up, down, left, right order, which fixes ties.
    pub fn navigate(&self, from: Pos, facing: Dir, target: impl Fn(Pos) -> bool) -> Nav {
        let adjacent = |p: Pos| {
            Dir::ALL
                .into_iter()
                .find(|&d| self.neighbour(p, d).is_some_and(|n| !self.is_floor(n) && target(n)))
        };
        if let Some(d) = adjacent(from) {
            if self.neighbour(from, facing).is_some_and(|n| !self.is_floor(n) && target(n)) {
                return Nav::Interact;
            }
            return Nav::Move(d);
        }
        let mut first: BTreeMap<Pos, Dir> = BTreeMap::new();
        let mut queue = VecDeque::new();
        for d in Dir::ALL {
            if let Some(n) = self.neighbour(from, d).filter(|&n| self.is_floor(n)) {
                if let std::collections::btree_map::Entry::Vacant(e) = first.entry(n) {
                    e.insert(d);
                    queue.push_back(n);
                }
            }
        }
        while let Some(p) = queue.pop_front() {
            let d = first[&p];
            if adjacent(p).is_some() {
                return Nav::Move(d);
            }
            for step in Dir::ALL {
                if let Some(n) = self.neighbour(p, step).filter(|&n| self.is_floor(n)) {
                    if n != from && !first.contains_key(&n) {
                        first.insert(n, d);
                        queue.push_back(n);
                    }
                }
            }
        }
        Nav::Stay
    }
}

#[derive(Debug, Clone)]
pub struct MiniKitchenEnv {
    layout: Arc<Layout>,
    actions: ActionSet,
}

impl Default for MiniKitchenEnv {
    fn default() -> Self {
        MiniKitchenEnv::new(Layout::parse(&DEFAULT_LAYOUT).expect("default layout is valid"))
    }
}

impl MiniKitchenEnv {
    pub fn new(layout: Layout) -> Self {
        MiniKitchenEnv {
            layout: Arc::new(layout),
            actions: ActionSet::new(ACTIONS).expect("static action names"),
        }
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn initial_state(&self) -> KitchenState {
        KitchenState {
            pos: self.layout.start(),
            facing: Dir::Up,
            held: None,
            pot: Pot::Empty,
            counters: Vec::new(),
        }
    }

    /// Deterministic transition; returns the reward.
    pub fn apply(&self, state: &KitchenState, action: ActionId) -> Result<(KitchenState, f64)> {
        let mut next = state.clone();
        if let Pot::Cooking { elapsed } = next.pot {
            next.pot = if elapsed + 1 >= COOK_TIME {
                Pot::Finished
            } else {
                Pot::Cooking { elapsed: elapsed + 1 }
            };
        }
        let mut reward = 0.0;
        match action.0 {
            0..=3 => {
                let dir = Dir::ALL[action.0 as usize];
                next.facing = dir;
                if let Some(n) = self.layout.neighbour(next.pos, dir).filter(|&n| self.layout.is_floor(n)) {
                    next.pos = n;
                }
            }
            4 => {
                if let Some(target) = self.layout.neighbour(next.pos, next.facing) {
                    reward = self.interact(&mut next, target);
                }
            }
            5 => {}
            _ => {
                return Err(Error::Environment(format!("action id {} out of range", action.0)));
            }
        }
        Ok((next, reward))
    }

    fn interact(&self, s: &mut KitchenState, target: Pos) -> f64 {
        match (self.layout.tile(target), s.held) {
            (Tile::Onions, None) => s.held = Some(Item::Onion),
            (Tile::Dishes, None) => s.held = Some(Item::Dish),
            (Tile::Pot, Some(Item::Onion)) => match s.pot {
                Pot::Empty => {
                    s.pot = Pot::Waiting { onions: 1 };
                    s.held = None;
                }
                Pot::Waiting { onions } => {
                    s.pot = if onions + 1 >= 3 {
                        Pot::Cooking { elapsed: 0 }
                    } else {
                        Pot::Waiting { onions: onions + 1 }
                    };
                    s.held = None;
                }
                _ => {}
            },
            (Tile::Pot, Some(Item::Dish)) if s.pot == Pot::Finished => {
                s.pot = Pot::Empty;
                s.held = Some(Item::Soup);
            }
            (Tile::Service, Some(Item::Soup)) => {
                s.held = None;
                return DELIVERY_REWARD;
            }
            (Tile::Counter, Some(item)) if s.counter_item(target).is_none() => {
                s.counters.push(CounterItem { pos: target, item });
                s.counters.sort_by_key(|c| c.pos);
                s.held = None;
            }
            (Tile::Counter, None) => {
                if let Some(i) = s.counters.iter().position(|c| c.pos == target) {
                    s.held = Some(s.counters.remove(i).item);
                }
            }
            _ => {}
        }
        0.0
    }

    pub fn nav_to_item(&self, s: &KitchenState, item: Item) -> Nav {
        let source = match item {
            Item::Onion => Tile::Onions,
            Item::Dish => Tile::Dishes,
            Item::Soup => return Nav::Stay,
        };
        self.layout.navigate(s.pos, s.facing, |p| {
            let t = self.layout.tile(p);
            t == source || (t == Tile::Counter && s.counter_item(p) == Some(item))
        })
    }

    pub fn nav_to_tile(&self, s: &KitchenState, tile: Tile) -> Nav {
        self.layout.navigate(s.pos, s.facing, |p| self.layout.tile(p) == tile)
    }

    pub fn nav_to_free_counter(&self, s: &KitchenState) -> Nav {
        self.layout.navigate(s.pos, s.facing, |p| {
            self.layout.tile(p) == Tile::Counter && s.counter_item(p).is_none()
        })
    }
}

impl Environment for MiniKitchenEnv {
    type State = KitchenState;

    fn actions(&self) -> &ActionSet {
        &self.actions
    }

    fn reset<R: Rng + ?Sized>(&self, _rng: &mut R) -> KitchenState {
        self.initial_state()
    }

    fn step<R: Rng + ?Sized>(&self, state: &KitchenState, action: ActionId, _rng: &mut R) -> Result<(KitchenState, f64)> {
        self.apply(state, action)
    }
}

/// Cooks and serves soup, with a small probability of a uniformly random
/// action. Items held at the wrong moment are put down on a free counter.
#[derive(Debug, Clone)]
pub struct CompetentAgent {
    env: MiniKitchenEnv,
}

impl CompetentAgent {
    pub fn new(env: &MiniKitchenEnv) -> Self {
        CompetentAgent { env: env.clone() }
    }

    /// The noiseless choice.
    pub fn scripted(&self, s: &KitchenState) -> Nav {
        let env = &self.env;
        match (s.held, s.pot) {
            (Some(Item::Soup), _) => env.nav_to_tile(s, Tile::Service),
            (Some(Item::Onion), Pot::Empty | Pot::Waiting { .. }) => env.nav_to_tile(s, Tile::Pot),
            (Some(Item::Onion), _) => env.nav_to_free_counter(s),
            (Some(Item::Dish), Pot::Finished) => env.nav_to_tile(s, Tile::Pot),
            (Some(Item::Dish), Pot::Cooking { .. }) => match env.nav_to_tile(s, Tile::Pot) {
                Nav::Interact => Nav::Stay,
                nav => nav,
            },
            (Some(Item::Dish), _) => env.nav_to_free_counter(s),
            (None, Pot::Empty | Pot::Waiting { .. }) => env.nav_to_item(s, Item::Onion),
            (None, _) => env.nav_to_item(s, Item::Dish),
        }
    }

    pub fn distribution(&self, s: &KitchenState) -> Vec<(ActionId, f64)> {
        let chosen = self.scripted(s).action();
        (0..ACTIONS.len() as u16)
            .map(|a| {
                let base = NOISE / ACTIONS.len() as f64;
                (ActionId(a), if ActionId(a) == chosen { base + 1.0 - NOISE } else { base })
            })
            .collect()
    }
}

impl Agent<KitchenState> for CompetentAgent {
    fn act<R: Rng + ?Sized>(&self, state: &KitchenState, rng: &mut R) -> Result<ActionId> {
        Ok(sample_weighted(&self.distribution(state), rng))
    }
}

/// Uniform over all actions.
#[derive(Debug, Clone, Copy, Default)]
pub struct RandomAgent;

impl Agent<KitchenState> for RandomAgent {
    fn act<R: Rng + ?Sized>(&self, _state: &KitchenState, rng: &mut R) -> Result<ActionId> {
        Ok(ActionId(rng.gen_range(0..ACTIONS.len() as u16)))
    }
}

const NAV_CODES: [&str; 6] = ["U", "D", "L", "R", "I", "S"];

fn held_code(held: Option<Item>) -> &'static str {
    match held {
        Some(Item::Onion) => "O",
        Some(Item::Dish) => "D",
        Some(Item::Soup) => "S",
        None => "none",
    }
}

fn pot_code(pot: Pot) -> &'static str {
    match pot {
        Pot::Empty => "Empty",
        Pot::Waiting { .. } => "Waiting",
        Pot::Cooking { .. } => "Cooking",
        Pot::Finished => "Finished",
    }
}

/// `held`, `pot_state` and one next-step-to-item variable each for onions,
/// dishes, the pot and the service tile.
#[derive(Debug, Clone)]
pub struct KitchenDiscretiser {
    env: MiniKitchenEnv,
    space: Arc<PredicateSpace>,
}

impl KitchenDiscretiser {
    pub fn new(env: &MiniKitchenEnv) -> Self {
        let mut vars = vec![
            Variable::new("held", ["O", "D", "S", "none"]),
            Variable::new("pot_state", ["Empty", "Waiting", "Cooking", "Finished"]),
        ];
        for name in ["onion_pos", "dish_pos", "pot_pos", "service_pos"] {
            vars.push(Variable::new(name, NAV_CODES));
        }
        KitchenDiscretiser {
            env: env.clone(),
            space: Arc::new(PredicateSpace::new(vars).expect("static space")),
        }
    }
}

impl Discretiser<KitchenState> for KitchenDiscretiser {
    fn space(&self) -> &Arc<PredicateSpace> {
        &self.space
    }

    fn discretise(&self, s: &KitchenState) -> Result<PredicateState> {
        let env = &self.env;
        self.space.state([
            ("held", held_code(s.held)),
            ("pot_state", pot_code(s.pot)),
            ("onion_pos", env.nav_to_item(s, Item::Onion).code()),
            ("dish_pos", env.nav_to_item(s, Item::Dish).code()),
            ("pot_pos", env.nav_to_tile(s, Tile::Pot).code()),
            ("service_pos", env.nav_to_tile(s, Tile::Service).code()),
        ])
    }
}

pub const PHASES: [&str; 10] = [
    "fetch_onion",
    "carry_onion",
    "load_pot",
    "fetch_dish",
    "carry_dish",
    "collect_soup",
    "carry_soup",
    "serve",
    "misplaced_onion",
    "misplaced_dish",
];

/// Coarse abstraction with a single `phase` variable of ten values.
#[derive(Debug, Clone)]
pub struct PhaseDiscretiser {
    env: MiniKitchenEnv,
    space: Arc<PredicateSpace>,
}

impl PhaseDiscretiser {
    pub fn new(env: &MiniKitchenEnv) -> Self {
        PhaseDiscretiser {
            env: env.clone(),
            space: Arc::new(PredicateSpace::new(vec![Variable::new("phase", PHASES)]).expect("static space")),
        }
    }

    pub fn phase(&self, s: &KitchenState) -> &'static str {
        let facing = self.env.layout.neighbour(s.pos, s.facing).map(|p| self.env.layout.tile(p));
        match (s.held, s.pot) {
            (None, Pot::Empty | Pot::Waiting { .. }) => "fetch_onion",
            (None, _) => "fetch_dish",
            (Some(Item::Onion), Pot::Empty | Pot::Waiting { .. }) if facing == Some(Tile::Pot) => "load_pot",
            (Some(Item::Onion), Pot::Empty | Pot::Waiting { .. }) => "carry_onion",
            (Some(Item::Onion), _) => "misplaced_onion",
            (Some(Item::Dish), Pot::Finished) if facing == Some(Tile::Pot) => "collect_soup",
            (Some(Item::Dish), Pot::Finished | Pot::Cooking { .. }) => "carry_dish",
            (Some(Item::Dish), _) => "misplaced_dish",
            (Some(Item::Soup), _) if facing == Some(Tile::Service) => "serve",
            (Some(Item::Soup), _) => "carry_soup",
        }
    }
}

impl Discretiser<KitchenState> for PhaseDiscretiser {
    fn space(&self) -> &Arc<PredicateSpace> {
        &self.space
    }

    fn discretise(&self, s: &KitchenState) -> Result<PredicateState> {
        self.space.state([("phase", self.phase(s))])
    }
}

fn lit(var: &str, values: &[&str]) -> LiteralSpec {
    LiteralSpec {
        var: var.into(),
        values: values.iter().map(|v| v.to_string()).collect(),
    }
}

/// Serve soup, cook (add an onion to a waiting pot) and start cooking (put
/// the first onion in an empty pot), over [`KitchenDiscretiser`] states.
pub fn desires() -> DesireFile {
    let d = |id: &str, clause: Vec<LiteralSpec>| DesireSpec {
        id: id.into(),
        clause,
        action: "interact".into(),
    };
    DesireFile {
        desires: vec![
            d("service", vec![lit("held", &["S"]), lit("service_pos", &["I"])]),
            d(
                "cook",
                vec![lit("held", &["O"]), lit("pot_state", &["Waiting"]), lit("pot_pos", &["I"])],
            ),
            d(
                "start_cooking",
                vec![lit("held", &["O"]), lit("pot_state", &["Empty"]), lit("pot_pos", &["I"])],
            ),
        ],
    }
}

/// Serving soup over [`PhaseDiscretiser`] states.
pub fn phase_desires() -> DesireFile {
    DesireFile {
        desires: vec![DesireSpec {
            id: "service".into(),
            clause: vec![lit("phase", &["serve"])],
            action: "interact".into(),
        }],
    }
}
