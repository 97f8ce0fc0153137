//! Fuzz corpus, fixtures and oracles that do not go through the library's
//! own probability code.

use std::collections::HashMap;
use std::sync::Arc;

use ipg_core::envs::mini_kitchen::{CompetentAgent, KitchenState, MiniKitchenEnv};
use ipg_core::envs::traffic_light::{Light, LightDiscretiser, OptimalAgent, TrafficLightEnv};
use ipg_core::envs::{generate_trajectories, Environment};
use ipg_core::graph::PolicyGraph;
use ipg_core::intention::{register_desire, Desire, DesireFile, DesireSpec, IntentionIndex, PropagationConfig};
use ipg_core::predicate::{ActionId, ActionSet, Discretiser, LiteralSpec, PredicateSpace, Variable};
use ipg_core::trajectory::{Episode, Step};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FUZZ_STATES: usize = 6;
const FUZZ_ACTIONS: [&str; 3] = ["x", "y", "z"];

/// One fuzzed graph with the raw tallies it was built from.
pub struct FuzzCase {
    pub graph: Arc<PolicyGraph>,
    pub desire: Desire,
    /// `(from, action, to) -> count`, by state number.
    pub transitions: HashMap<(usize, u16, usize), u64>,
    pub region: Vec<usize>,
}

fn fuzz_space() -> Arc<PredicateSpace> {
    let names: Vec<String> = (0..FUZZ_STATES).map(|i| format!("q{i}")).collect();
    Arc::new(PredicateSpace::new(vec![Variable::new("s", names)]).unwrap())
}

pub fn fuzz_id(i: usize) -> String {
    format!("s=q{i}")
}

/// Random walks over a random sparse policy with small integer weights, so
/// every transition probability is rational.
pub fn fuzz_case(seed: u64) -> FuzzCase {
    let mut rng = ChaCha8Rng::seed_from_u64(0xF022 ^ seed);
    let space = fuzz_space();
    let actions = ActionSet::new(FUZZ_ACTIONS).unwrap();
    let n = rng.gen_range(2..=FUZZ_STATES);
    let k = rng.gen_range(1..=FUZZ_ACTIONS.len() as u16);
    // options[s] = [(action, to, weight)]; empty means absorbing
    let mut options: Vec<Vec<(u16, usize, u32)>> = (0..n)
        .map(|_| {
            if rng.gen_bool(0.2) {
                return Vec::new();
            }
            (0..rng.gen_range(1..=3))
                .map(|_| (rng.gen_range(0..k), rng.gen_range(0..n), rng.gen_range(1..=4)))
                .collect()
        })
        .collect();
    if options.iter().all(Vec::is_empty) {
        options[0].push((0, n - 1, 1));
    }
    let st = |i: usize| space.state_from_indices(&[i as u16]).unwrap();
    let mut transitions = HashMap::new();
    let mut episodes = Vec::new();
    for id in 0..20u64 {
        let mut cur = rng.gen_range(0..n);
        let mut steps = Vec::new();
        for t in 0..25u32 {
            let opts = &options[cur];
            if opts.is_empty() {
                break;
            }
            let total: u32 = opts.iter().map(|o| o.2).sum();
            let mut x = rng.gen_range(0..total);
            let &(a, to, _) = opts
                .iter()
                .find(|o| {
                    if x < o.2 {
                        true
                    } else {
                        x -= o.2;
                        false
                    }
                })
                .unwrap();
            *transitions.entry((cur, a, to)).or_default() += 1;
            steps.push(Step {
                episode: id,
                t,
                state: st(cur),
                action: ActionId(a),
                raw: None,
            });
            cur = to;
        }
        episodes.push(Episode {
            id,
            steps,
            terminal: st(cur),
            terminal_raw: None,
        });
    }
    let graph = Arc::new(PolicyGraph::build(&space, &actions, &episodes).unwrap());
    let seen: Vec<usize> = (0..n).filter(|&i| graph.node_by_id(&fuzz_id(i)).is_some()).collect();
    let mut region: Vec<usize> = seen.iter().copied().filter(|_| rng.gen_bool(0.4)).collect();
    if region.is_empty() {
        region.push(seen[rng.gen_range(0..seen.len())]);
    }
    let spec = DesireSpec {
        id: "d".into(),
        clause: vec![LiteralSpec {
            var: "s".into(),
            values: region.iter().map(|i| format!("q{i}")).collect(),
        }],
        action: FUZZ_ACTIONS[rng.gen_range(0..k) as usize].into(),
    };
    let desire = Desire::from_spec(&spec, graph.space(), graph.actions()).unwrap();
    FuzzCase {
        graph,
        desire,
        transitions,
        region,
    }
}

/// Intention values by state number from the tallies: the solution of
/// `I(s) = sum P(s', a | s) [a = a_d and s in region ? 1 : I(s')]`, with
/// states that can never reach a fulfilment fixed at 0.
pub fn linear_oracle(case: &FuzzCase) -> Vec<f64> {
    let n = FUZZ_STATES;
    let a_d = case.desire.action.0;
    let mut out_count = vec![0u64; n];
    for (&(s, _, _), &c) in &case.transitions {
        out_count[s] += c;
    }
    let mut t = DMatrix::<f64>::zeros(n, n);
    let mut b = DVector::<f64>::zeros(n);
    for (&(s, a, to), &c) in &case.transitions {
        let p = c as f64 / out_count[s] as f64;
        if case.region.contains(&s) && a == a_d {
            b[s] += p;
        } else {
            t[(s, to)] += p;
        }
    }
    let mut live: Vec<bool> = (0..n).map(|s| b[s] > 0.0).collect();
    while let Some(s) = (0..n).find(|&s| !live[s] && (0..n).any(|j| live[j] && t[(s, j)] > 0.0)) {
        live[s] = true;
    }
    let idx: Vec<usize> = (0..n).filter(|&s| live[s]).collect();
    let mut out = vec![0.0; n];
    if idx.is_empty() {
        return out;
    }
    let m = idx.len();
    let a = DMatrix::from_fn(m, m, |i, j| f64::from(i == j) - t[(idx[i], idx[j])]);
    let rhs = DVector::from_fn(m, |i, _| b[idx[i]]);
    let x = a.lu().solve(&rhs).expect("non-singular reduced system");
    for (i, &s) in idx.iter().enumerate() {
        out[s] = x[i];
    }
    out
}

/// Traffic-light graph from `episodes * 100` steps of the optimal agent.
pub fn traffic_graph(light: Light, episodes: usize) -> (Arc<PolicyGraph>, LightDiscretiser) {
    let env = TrafficLightEnv::default();
    let disc = LightDiscretiser::new(light);
    let gen = generate_trajectories(&env, &OptimalAgent::new(&env), &disc, episodes, 100, 2024).unwrap();
    let graph = PolicyGraph::build(disc.space(), env.actions(), &gen.episodes).unwrap();
    (Arc::new(graph), disc)
}

/// Mini-kitchen graph of the competent agent under `disc`, with `file`
/// registered at default propagation settings.
pub fn kitchen<D: Discretiser<KitchenState>>(disc: &D, file: &DesireFile) -> (Arc<PolicyGraph>, Vec<IntentionIndex>) {
    let env = MiniKitchenEnv::default();
    let gen = generate_trajectories(&env, &CompetentAgent::new(&env), disc, 200, 200, 1).unwrap();
    let graph = Arc::new(PolicyGraph::build(disc.space(), env.actions(), &gen.episodes).unwrap());
    let indices = file
        .compile(graph.space(), graph.actions())
        .unwrap()
        .into_iter()
        .map(|d| register_desire(&graph, d, PropagationConfig::default()).unwrap())
        .collect();
    (graph, indices)
}

/// `P(s)` straight from the occupancy counts.
pub fn occupancy_probabilities(graph: &PolicyGraph) -> Vec<f64> {
    let total: u64 = graph.nodes().iter().map(|n| n.occupancy).sum();
    graph
        .nodes()
        .iter()
        .map(|n| n.occupancy as f64 / total as f64)
        .collect()
}

pub fn entropy_bits(ps: &[f64]) -> f64 {
    ps.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.log2()).sum()
}
