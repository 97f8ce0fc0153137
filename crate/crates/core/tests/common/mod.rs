#![allow(dead_code)]

use std::sync::Arc;

use ipg_core::graph::{Counts, NodeId, PolicyGraph};
use ipg_core::intention::{Desire, DesireSpec};
use ipg_core::predicate::{ActionId, ActionSet, LiteralSpec, PredicateSpace, PredicateState, Variable};
use ipg_core::trajectory::{Episode, Step};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const NAMES: [&str; 6] = ["s0", "s1", "s2", "s3", "s4", "s5"];

pub fn space() -> Arc<PredicateSpace> {
    Arc::new(PredicateSpace::new(vec![Variable::new("s", NAMES)]).unwrap())
}

pub fn actions() -> ActionSet {
    ActionSet::new(["a", "b", "c"]).unwrap()
}

pub fn state(space: &Arc<PredicateSpace>, i: usize) -> PredicateState {
    space.state([("s", NAMES[i])]).unwrap()
}

pub struct Fuzzed {
    pub graph: Arc<PolicyGraph>,
    pub desire: Desire,
}

pub fn desire(graph: &PolicyGraph, region: &[usize], action: &str) -> Desire {
    let spec = DesireSpec {
        id: "d".into(),
        clause: vec![LiteralSpec {
            var: "s".into(),
            values: region.iter().map(|&i| NAMES[i].to_string()).collect(),
        }],
        action: action.into(),
    };
    Desire::from_spec(&spec, graph.space(), graph.actions()).unwrap()
}

/// Random graph on at most six states with small integer counts. With
/// `acyclic`, edges only point to higher-numbered states.
pub fn fuzz_graph(seed: u64, acyclic: bool) -> Fuzzed {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let space = space();
    let acts = actions();
    let n = rng.gen_range(2..=6);
    let k = rng.gen_range(1..=3u16);
    let mut counts = Counts::default();
    for i in 0..n {
        let mut out = 0;
        let lo = if acyclic { i + 1 } else { 0 };
        if lo < n && rng.gen_bool(0.8) {
            for _ in 0..rng.gen_range(1..=4) {
                let a = ActionId(rng.gen_range(0..k));
                let t = rng.gen_range(lo..n);
                let c = rng.gen_range(1..=5);
                *counts
                    .transitions
                    .entry((state(&space, i), a, state(&space, t)))
                    .or_default() += c;
                out += c;
            }
        }
        counts
            .occupancy
            .insert(state(&space, i), out + rng.gen_range(if out == 0 { 1 } else { 0 }..=2));
    }
    let graph = Arc::new(PolicyGraph::from_counts(space, acts, counts).unwrap());
    let mut region: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.35)).collect();
    if region.is_empty() {
        region.push(rng.gen_range(0..n));
    }
    let action = ["a", "b", "c"][rng.gen_range(0..k) as usize];
    let desire = desire(&graph, &region, action);
    Fuzzed { graph, desire }
}

/// Solves `I = b + T I`, where `b(s) = P(a_d | s)` on the region and `T`
/// holds every transition except `a_d` taken inside the region. States that
/// cannot reach a fulfilment get 0; the rest form a non-singular system.
pub fn linear_oracle(graph: &PolicyGraph, desire: &Desire) -> Vec<f64> {
    let n = graph.len();
    let region: Vec<bool> = graph.nodes().iter().map(|nd| desire.holds(&nd.state)).collect();
    let mut t = DMatrix::<f64>::zeros(n, n);
    let mut b = DVector::<f64>::zeros(n);
    for (s, node) in graph.nodes().iter().enumerate() {
        if node.out_count == 0 {
            continue;
        }
        for e in &node.edges {
            let p = e.count as f64 / node.out_count as f64;
            if region[s] && e.action == desire.action {
                b[s] += p;
            } else {
                t[(s, e.to)] += p;
            }
        }
    }
    let mut live: Vec<bool> = (0..n).map(|s| b[s] > 0.0).collect();
    loop {
        let mut changed = false;
        for s in 0..n {
            if !live[s] && (0..n).any(|j| t[(s, j)] > 0.0 && live[j]) {
                live[s] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let idx: Vec<usize> = (0..n).filter(|&s| live[s]).collect();
    let m = idx.len();
    let mut out = vec![0.0; n];
    if m == 0 {
        return out;
    }
    let a = DMatrix::from_fn(m, m, |i, j| f64::from(i == j) - t[(idx[i], idx[j])]);
    let rhs = DVector::from_fn(m, |i, _| b[idx[i]]);
    let x = a.lu().solve(&rhs).expect("reduced system is non-singular");
    for (i, &s) in idx.iter().enumerate() {
        out[s] = x[i];
    }
    out
}

/// Sums the probability of every path that ends in a fulfilment, by
/// explicit enumeration. Only valid on acyclic graphs.
pub fn path_sum(graph: &PolicyGraph, desire: &Desire, s: NodeId) -> f64 {
    let node = graph.node(s);
    if node.out_count == 0 {
        return 0.0;
    }
    let mut total = 0.0;
    for e in &node.edges {
        let p = e.count as f64 / node.out_count as f64;
        if desire.holds(&node.state) && e.action == desire.action {
            total += p;
        } else {
            total += p * path_sum(graph, desire, e.to);
        }
    }
    total
}

/// Random episodes over the fuzz space.
pub fn random_episodes(seed: u64, n: usize, max_len: usize) -> Vec<Episode> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let space = space();
    (0..n as u64)
        .map(|id| {
            let len = rng.gen_range(1..=max_len);
            let steps = (0..len)
                .map(|t| Step {
                    episode: id,
                    t: t as u32,
                    state: state(&space, rng.gen_range(0..6)),
                    action: ActionId(rng.gen_range(0..3)),
                    raw: None,
                })
                .collect();
            Episode {
                id,
                steps,
                terminal: state(&space, rng.gen_range(0..6)),
                terminal_raw: None,
            }
        })
        .collect()
}
