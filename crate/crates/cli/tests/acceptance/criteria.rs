use std::collections::HashMap;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;

use ipg_core::envs::mini_kitchen::{desires, phase_desires, KitchenDiscretiser, MiniKitchenEnv, PhaseDiscretiser};
use ipg_core::envs::traffic_light::{Light, OptimalAgent, TrafficLightEnv};
use ipg_core::explain::{delta_distribution, how, how_stochastic, mean_delta, why, WhyVerdict, DEFAULT_MAX_DEPTH};
use ipg_core::graph::{Counts, PolicyGraph};
use ipg_core::intention::{
    desire_metrics, register_desire, CommitmentThreshold, Desire, DesireSpec, IntentionIndex, PropagationConfig,
};
use ipg_core::metrics::{
    any_desire_metrics, delta_reward, entropy_report, intention_metrics, state_entropies, tradeoff_curve,
    uniform_grid, DeltaRewardConfig,
};
use ipg_core::predicate::{ActionSet, LiteralSpec, PredicateSpace, Variable};
use ipg_core::report::MetricsReport;
use ipg_core::revision::{
    find_regions, find_unfulfilled, find_unintentional, AnnotatedStep, Region, RegionConfig, RegionKind,
    TimelineAnnotation,
};
use ipg_service::RegionsResponse;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fixtures::{
    entropy_bits, fuzz_case, fuzz_id, kitchen, linear_oracle, occupancy_probabilities, traffic_graph, FUZZ_STATES,
};

pub type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

pub fn intention_oracle() -> Outcome {
    let cfg = PropagationConfig::new(1e-8, 10_000_000).unwrap();
    let mut worst: f64 = 0.0;
    let mut nonzero = 0;
    let graphs = 300;
    for seed in 0..graphs {
        let case = fuzz_case(seed);
        let oracle = linear_oracle(&case);
        let ix = register_desire(&case.graph, case.desire.clone(), cfg).map_err(|e| format!("seed {seed}: {e}"))?;
        for (i, expected) in oracle.iter().enumerate().take(FUZZ_STATES) {
            let Some(node) = case.graph.node_by_id(&fuzz_id(i)) else {
                continue;
            };
            let got = ix.value(node);
            worst = worst.max((got - expected).abs());
            if *expected > 0.0 {
                nonzero += 1;
            }
            ensure(close(got, *expected, 1e-4), || {
                format!("seed {seed}, state q{i}: {got} vs oracle {expected}")
            })?;
        }
    }
    ensure(nonzero > graphs as usize, || format!("corpus too degenerate: {nonzero} non-zero values"))?;
    Ok(format!("{graphs} graphs, {nonzero} non-zero values, max |error| {worst:.2e}"))
}

pub fn geometric_loop() -> Outcome {
    // A -> B; B -> A or D with probability 1/2 each; D fulfils the desire
    let space = Arc::new(PredicateSpace::new(vec![Variable::new("node", ["A", "B", "D", "E"])]).unwrap());
    let actions = ActionSet::new(["move", "fulfil"]).unwrap();
    let st = |n: &str| space.state([("node", n)]).unwrap();
    let (mv, fu) = (actions.id("move").unwrap(), actions.id("fulfil").unwrap());
    let mut counts = Counts::default();
    for (s, a, t, c) in [("A", mv, "B", 4), ("B", mv, "A", 2), ("B", mv, "D", 2), ("D", fu, "E", 2)] {
        counts.transitions.insert((st(s), a, st(t)), c);
    }
    for (s, c) in [("A", 4), ("B", 4), ("D", 2), ("E", 2)] {
        counts.occupancy.insert(st(s), c);
    }
    let graph = Arc::new(PolicyGraph::from_counts(space.clone(), actions.clone(), counts).map_err(|e| e.to_string())?);
    let spec = DesireSpec {
        id: "reach".into(),
        clause: vec![LiteralSpec {
            var: "node".into(),
            values: vec!["D".into()],
        }],
        action: "fulfil".into(),
    };
    let desire = Desire::from_spec(&spec, &space, &actions).map_err(|e| e.to_string())?;
    let eps = 1e-4;
    let ix = register_desire(&graph, desire, PropagationConfig::new(eps, 10_000_000).unwrap())
        .map_err(|e| e.to_string())?;
    let (a, b) = (ix.value_of(&st("A")), ix.value_of(&st("B")));
    for (name, v) in [("A", a), ("B", b)] {
        ensure(v >= 1.0 - 10.0 * eps && v <= 1.0, || format!("I({name}) = {v}"))?;
    }
    Ok(format!("I(A) = {a:.6}, I(B) = {b:.6}"))
}

fn check_identity(graph: &PolicyGraph, label: &str) -> Result<usize, String> {
    let p = occupancy_probabilities(graph);
    let total: f64 = (0..graph.len()).map(|id| graph.state_probability(id)).sum();
    ensure(close(total, 1.0, 1e-9), || format!("{label}: sum P(s) = {total}"))?;
    for id in 0..graph.len() {
        ensure(close(graph.state_probability(id), p[id], 1e-12), || format!("{label}: P(s) differs from counts"))?;
        let e = state_entropies(graph, id);
        ensure(close(e.h, e.h_a + e.h_w, 1e-9), || {
            format!("{label} {}: H {} vs H_a + H_w {}", graph.node(id).id, e.h, e.h_a + e.h_w)
        })?;
        if graph.node(id).is_terminal() {
            continue;
        }
        let joint: f64 = graph.transition_distribution(id).iter().map(|t| t.2).sum();
        let acts: f64 = graph.action_distribution(id).iter().map(|t| t.1).sum();
        ensure(close(joint, 1.0, 1e-9) && close(acts, 1.0, 1e-9), || {
            format!("{label} {}: sums {joint}, {acts}", graph.node(id).id)
        })?;
        // H from the raw edge counts
        let out = graph.node(id).out_count as f64;
        let raw: Vec<f64> = graph.node(id).edges.iter().map(|e| e.count as f64 / out).collect();
        ensure(close(e.h, entropy_bits(&raw), 1e-9), || format!("{label}: H differs from counts"))?;
    }
    Ok(graph.len())
}

pub fn entropy_identity() -> Outcome {
    let mut states = 0;
    let mut graphs = 0;
    for seed in 0..300 {
        states += check_identity(&fuzz_case(seed).graph, &format!("fuzz {seed}"))?;
        graphs += 1;
    }
    for light in [Light::G, Light::R] {
        states += check_identity(&traffic_graph(light, 100).0, &format!("traffic light {light:?}"))?;
        graphs += 1;
    }
    let env = MiniKitchenEnv::default();
    states += check_identity(&kitchen(&KitchenDiscretiser::new(&env), &desires()).0, "kitchen")?;
    states += check_identity(&kitchen(&PhaseDiscretiser::new(&env), &phase_desires()).0, "kitchen phases")?;
    graphs += 2;
    Ok(format!("{graphs} graphs, {states} states"))
}

/// Occupancy-weighted action entropy of the optimal agent seen through a
/// two-valued view of the light, from the bias and the policy alone.
fn closed_form_action_entropy(distinguished: Light) -> f64 {
    let bias = |l: Light| match l {
        Light::R => 0.45,
        Light::Y => 0.50,
        Light::G => 0.05,
    };
    // P(up, left, down, right | light)
    let policy = |l: Light| match l {
        Light::R => [0.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
        Light::Y => [0.0, 1.0, 0.0, 0.0],
        Light::G => [1.0, 0.0, 0.0, 0.0],
    };
    let group = |members: &[Light]| {
        let mass: f64 = members.iter().map(|&l| bias(l)).sum();
        let mut mix = [0.0; 4];
        for &l in members {
            for (m, p) in mix.iter_mut().zip(policy(l)) {
                *m += bias(l) / mass * p;
            }
        }
        mass * entropy_bits(&mix)
    };
    let rest: Vec<Light> = [Light::R, Light::Y, Light::G]
        .into_iter()
        .filter(|&l| l != distinguished)
        .collect();
    group(&[distinguished]) + group(&rest)
}

pub fn traffic_light_entropy() -> Outcome {
    let mut h = HashMap::new();
    for light in [Light::G, Light::R] {
        let (graph, _) = traffic_graph(light, 1000);
        ensure(graph.total_occupancy() >= 100_000, || "fewer than 1e5 observations".into())?;
        let got = entropy_report(&graph).map_err(|e| e.to_string())?.weighted.h_a;
        let expected = closed_form_action_entropy(light);
        ensure(close(got, expected, 1e-2), || {
            format!("{light:?} view: H_a {got:.4} vs closed form {expected:.4}")
        })?;
        h.insert(light, (got, expected));
    }
    let (g, r) = (h[&Light::G], h[&Light::R]);
    ensure(g.0 > r.0, || format!("H_a(G view) {} not above H_a(R view) {}", g.0, r.0))?;
    Ok(format!(
        "H_a G view {:.4} (closed form {:.4}) > R view {:.4} (closed form {:.4})",
        g.0, g.1, r.0, r.1
    ))
}

pub fn traffic_light_reward() -> Outcome {
    let env = TrafficLightEnv::default();
    let agent = OptimalAgent::new(&env);
    let cfg = DeltaRewardConfig {
        horizon: 100,
        n_episodes: 500,
        seed: 77,
    };
    let (g_graph, g_disc) = traffic_graph(Light::G, 1000);
    let (r_graph, r_disc) = traffic_graph(Light::R, 1000);
    let g = delta_reward(&env, &agent, &g_graph, &g_disc, cfg).map_err(|e| e.to_string())?;
    let r = delta_reward(&env, &agent, &r_graph, &r_disc, cfg).map_err(|e| e.to_string())?;
    ensure(g.delta.abs() <= 2.0 * g.pooled_std, || {
        format!("G view: dR {} beyond 2 x {}", g.delta, g.pooled_std)
    })?;
    ensure(r.delta > 2.0 * r.pooled_std, || {
        format!("R view: dR {} not above 2 x {}", r.delta, r.pooled_std)
    })?;
    Ok(format!(
        "G view dR {:.3} (pooled std {:.3}); R view dR {:.3} (pooled std {:.3})",
        g.delta, g.pooled_std, r.delta, r.pooled_std
    ))
}

/// `(P(attributed), E[I | attributed])` by direct summation over nodes.
fn summed(p: &[f64], values: &[f64], c: f64) -> (f64, Option<f64>) {
    let (mut mass, mut weighted) = (0.0, 0.0);
    for (pi, vi) in p.iter().zip(values) {
        if *vi > c {
            mass += pi;
            weighted += pi * vi;
        }
    }
    (mass, (mass > 0.0).then(|| weighted / mass))
}

fn same(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (Some(x), Some(y)) => close(x, y, 1e-12),
        (None, None) => true,
        _ => false,
    }
}

pub fn desire_and_intention_metrics() -> Outcome {
    let env = MiniKitchenEnv::default();
    let (graph, indices) = kitchen(&KitchenDiscretiser::new(&env), &desires());
    ensure(indices.len() == 3, || "expected three desires".into())?;
    let p = occupancy_probabilities(&graph);
    let values: Vec<Vec<f64>> = indices.iter().map(|ix| (0..graph.len()).map(|s| ix.value(s)).collect()).collect();
    let any: Vec<f64> = (0..graph.len())
        .map(|s| values.iter().map(|v| v[s]).fold(0.0, f64::max))
        .collect();

    for ix in &indices {
        let d = ix.desire();
        let (mut region, mut acted) = (0.0, 0.0);
        for (s, node) in graph.nodes().iter().enumerate() {
            if d.holds(&node.state) {
                region += p[s];
                let n_ad: u64 = node.edges.iter().filter(|e| e.action == d.action).map(|e| e.count).sum();
                if node.out_count > 0 {
                    acted += p[s] * n_ad as f64 / node.out_count as f64;
                }
            }
        }
        let m = desire_metrics(&graph, d);
        ensure(close(m.region_probability, region, 1e-12), || format!("{}: region probability", d.id))?;
        ensure(same(m.action_probability, (region > 0.0).then(|| acted / region)), || {
            format!("{}: action probability", d.id)
        })?;
    }

    let grid = uniform_grid(20);
    let curve = tradeoff_curve(&indices, &grid).map_err(|e| e.to_string())?;
    let mut checked = 0;
    let mut defined = 0;
    let mut prev_any = f64::INFINITY;
    let mut prev: Vec<f64> = vec![f64::INFINITY; indices.len()];
    for (point, &c) in curve.iter().zip(&grid) {
        let threshold = CommitmentThreshold::new(c).unwrap();
        let (mass, rel) = summed(&p, &any, c);
        let lib = any_desire_metrics(&indices, threshold).map_err(|e| e.to_string())?;
        ensure(close(lib.intention_probability, mass, 1e-12) && same(lib.expected_intention, rel), || {
            format!("any desire at C = {c}")
        })?;
        ensure(close(point.interpretability, mass, 1e-12) && same(point.reliability, rel), || {
            format!("curve point at C = {c}")
        })?;
        ensure(mass <= prev_any + 1e-15, || format!("any-desire probability rises at C = {c}"))?;
        prev_any = mass;
        if let Some(r) = rel {
            ensure(r > c, || format!("reliability {r} not above C = {c}"))?;
            defined += 1;
        }
        for (k, ix) in indices.iter().enumerate() {
            let (mass, rel) = summed(&p, &values[k], c);
            let m = intention_metrics(ix, threshold);
            ensure(close(m.intention_probability, mass, 1e-12) && same(m.expected_intention, rel), || {
                format!("{} at C = {c}", ix.desire().id)
            })?;
            let pt = &point.desires[k];
            ensure(close(pt.interpretability, mass, 1e-12) && same(pt.reliability, rel), || {
                format!("{} curve point at C = {c}", ix.desire().id)
            })?;
            ensure(mass <= prev[k] + 1e-15, || format!("{} probability rises at C = {c}", ix.desire().id))?;
            if let Some(r) = rel {
                ensure(r > c, || format!("{}: reliability {r} not above C = {c}", ix.desire().id))?;
            }
            prev[k] = mass;
            checked += 1;
        }
    }
    Ok(format!(
        "{} states, {checked} (desire, C) pairs on a {}-point grid; reliability defined at {defined} points",
        graph.len(),
        grid.len()
    ))
}

/// `P(success within max_depth moves)` under the stochastic planner's
/// stopping rules, by dynamic programming.
fn absorption(ix: &IntentionIndex, c: f64, max_depth: usize) -> Vec<f64> {
    let g = ix.graph();
    let n = g.len();
    let success = |s: usize| ix.in_region(s) && g.action_count(s, ix.desire().action) > 0;
    let mut v: Vec<f64> = (0..n).map(|s| f64::from(success(s))).collect();
    for _ in 0..max_depth {
        v = (0..n)
            .map(|s| {
                let node = g.node(s);
                if success(s) {
                    1.0
                } else if ix.value(s) < c || node.out_count == 0 {
                    0.0
                } else {
                    node.edges
                        .iter()
                        .map(|e| e.count as f64 / node.out_count as f64 * v[e.to])
                        .sum()
                }
            })
            .collect();
    }
    v
}

pub fn query_coherence() -> Outcome {
    let env = MiniKitchenEnv::default();
    let c = CommitmentThreshold::new(0.5).unwrap();

    let (g, indices) = kitchen(&KitchenDiscretiser::new(&env), &desires());
    let mut plans = 0;
    for ix in &indices {
        for id in 0..g.len() {
            if !c.attributes(ix.value(id)) {
                continue;
            }
            let plan = how(ix, &g.node(id).state, DEFAULT_MAX_DEPTH)
                .map_err(|e| format!("how from {} for {}: {e}", g.node(id).id, ix.desire().id))?;
            let (last, moves) = plan.steps.split_last().ok_or("empty plan")?;
            let mut cur = id;
            for step in moves {
                let to = step
                    .state
                    .as_deref()
                    .and_then(|s| g.node_by_id(s))
                    .ok_or("plan step without a known state")?;
                let a = g.actions().id(&step.action).map_err(|e| e.to_string())?;
                ensure(g.node(cur).edges.iter().any(|e| e.action == a && e.to == to), || {
                    format!("plan from {} uses a missing edge", g.node(id).id)
                })?;
                cur = to;
            }
            ensure(ix.in_region(cur) && last.action == ix.desire().action_name, || {
                format!("plan from {} does not end in the region", g.node(id).id)
            })?;
            plans += 1;
        }
    }
    ensure(plans > 0, || "no attributed states".into())?;

    let (pg, phase_ix) = kitchen(&PhaseDiscretiser::new(&env), &phase_desires());
    ensure(pg.len() <= 10, || format!("phase abstraction has {} states", pg.len()))?;
    let ix = &phase_ix[0];
    let oracle = absorption(ix, c.value(), DEFAULT_MAX_DEPTH);
    let n = 10_000;
    let mut rollouts = 0;
    let mut worst_z: f64 = 0.0;
    for id in 0..pg.len() {
        if !c.attributes(ix.value(id)) {
            continue;
        }
        let plan = how_stochastic(ix, &pg.node(id).state, c, n, DEFAULT_MAX_DEPTH, id as u64)
            .map_err(|e| e.to_string())?;
        let freq = plan.success_count as f64 / n as f64;
        let q = oracle[id];
        let sigma = (q * (1.0 - q) / n as f64).sqrt();
        ensure((freq - q).abs() <= 3.0 * sigma + 1e-12, || {
            format!(
                "{}: success frequency {freq} vs absorption {q} ({} failed, {} truncated)",
                pg.node(id).id,
                plan.failure_count,
                plan.truncated_count
            )
        })?;
        if sigma > 0.0 {
            worst_z = worst_z.max((freq - q).abs() / sigma);
        }
        rollouts += 1;
    }
    ensure(rollouts > 0, || "no attributed phase states".into())?;

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let c_why = CommitmentThreshold::new(0.3).unwrap();
    let mut pairs = 0;
    let mut verdicts = 0;
    while pairs < 1000 {
        let id = rng.gen_range(0..g.len());
        let dist = g.action_distribution(id);
        if dist.is_empty() {
            continue;
        }
        let action = g.actions().name(dist[rng.gen_range(0..dist.len())].0).to_string();
        let state = &g.node(id).state;
        let answer = why(&indices, state, &action, c_why).map_err(|e| e.to_string())?;
        for verdict in &answer.verdicts {
            let Some(d) = verdict.desire() else { continue };
            let ix = indices.iter().find(|ix| ix.desire().id == d).ok_or("unknown desire")?;
            let mean = mean_delta(&delta_distribution(ix, state, &action).map_err(|e| e.to_string())?);
            let furthers = matches!(verdict, WhyVerdict::FurthersIntention { .. });
            ensure(furthers == (mean > 0.0), || {
                format!("{} {action} {d}: verdict {verdict:?} vs mean delta {mean}", g.node(id).id)
            })?;
            verdicts += 1;
        }
        pairs += 1;
    }
    Ok(format!(
        "{plans} greedy plans valid; {rollouts} phase states within 3 sigma (max z {worst_z:.2}); \
         {verdicts} why verdicts over {pairs} pairs agree"
    ))
}

fn revision_fixture() -> TimelineAnnotation {
    // (I_a, I_b) per step, C = 0.5
    let values: [(f64, f64); 20] = [
        (0.2, 0.1),
        (0.3, 0.2),
        (0.5, 0.4),
        (0.4, 0.5),
        (0.1, 0.3),
        (0.2, 0.2),
        (0.7, 0.1),
        (0.8, 0.2),
        (0.6, 0.3),
        (0.2, 0.6),
        (0.1, 0.6),
        (0.3, 0.7),
        (0.9, 0.6),
        (0.9, 0.8),
        (0.9, 0.2),
        (0.9, 0.1),
        (0.2, 0.1),
        (0.1, 0.2),
        (0.1, 0.1),
        (0.2, 0.3),
    ];
    let steps = values
        .iter()
        .enumerate()
        .map(|(t, &(a, b))| AnnotatedStep {
            t,
            state: format!("t{t}"),
            action: if t == 13 { "serve" } else { "wait" }.into(),
            approximated: false,
            intentions: vec![a, b],
            attributed: [("a", a), ("b", b)]
                .into_iter()
                .filter(|(_, v)| *v > 0.5)
                .map(|(d, _)| d.to_string())
                .collect(),
            fulfilled: if t == 13 { vec!["b".into()] } else { Vec::new() },
        })
        .collect();
    TimelineAnnotation {
        episode: 0,
        commitment: 0.5,
        desires: vec!["a".into(), "b".into()],
        steps,
    }
}

fn region(kind: RegionKind, t_start: usize, t_end: usize, desire: Option<&str>, peak: f64) -> Region {
    Region {
        episode: 0,
        kind,
        t_start,
        t_end,
        desire: desire.map(String::from),
        peak,
    }
}

pub fn revision_regions() -> Outcome {
    let ann = revision_fixture();
    let c = CommitmentThreshold::new(0.5).unwrap();
    let cfg = RegionConfig::default();
    let unintentional = find_unintentional(&ann, c, cfg.min_len);
    let unfulfilled = find_unfulfilled(&ann, c, cfg.grace, cfg.stall_horizon);
    let expected_u = vec![region(RegionKind::Unintentional, 0, 5, None, 0.5)];
    let expected_f = vec![
        region(RegionKind::Unfulfilled, 6, 8, Some("a"), 0.8),
        region(RegionKind::Unfulfilled, 12, 15, Some("a"), 0.9),
    ];
    ensure(unintentional == expected_u, || format!("unintentional: {unintentional:?}"))?;
    ensure(unfulfilled == expected_f, || format!("unfulfilled: {unfulfilled:?}"))?;
    let all = find_regions(&ann, c, cfg).map_err(|e| e.to_string())?;
    ensure(all.len() == 3, || format!("combined: {all:?}"))?;
    // a shorter stall horizon turns b's late fulfilment into a stall
    let stalled = find_unfulfilled(&ann, c, cfg.grace, 3);
    ensure(stalled.contains(&region(RegionKind::Stalled, 9, 12, Some("b"), 0.7)), || {
        format!("stall horizon 3: {stalled:?}")
    })?;
    Ok("one unintentional [0,5], unfulfilled a [6,8] and a [12,15]".into())
}

fn ipg(args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_ipg"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "ipg {} exited with {:?}: {}",
            args.first().unwrap_or(&""),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(out.stdout)
}

fn parse<T: serde::de::DeserializeOwned>(bytes: &[u8], what: &str) -> Result<T, String> {
    serde_json::from_slice(bytes).map_err(|e| format!("{what} does not match its schema: {e}"))
}

fn pipeline(dir: &Path, env: &str, discretiser: &str, extra_metrics: &[&str]) -> Result<String, String> {
    let p = |name: &str| dir.join(name).to_str().unwrap().to_string();
    let (raw, space, d, traj, pg, csv, metrics, regions) = (
        p("raw.jsonl"),
        p("space.json"),
        p("desires.json"),
        p("traj.jsonl"),
        p("pg.json"),
        p("intentions.csv"),
        p("metrics.json"),
        p("regions.json"),
    );
    #[derive(serde::Deserialize)]
    struct Counted {
        episodes: usize,
        steps: usize,
    }
    let gen: Counted = parse(
        &ipg(&[
            "gen", "--env", env, "--discretiser", discretiser, "--episodes", "200", "--horizon", "100", "--seed",
            "3", "--out", &raw, "--space-out", &space, "--desires-out", &d,
        ])?,
        "gen summary",
    )?;
    let ingested: Counted = parse(
        &ipg(&[
            "ingest", "--input", &raw, "--space", &space, "--discretiser", discretiser, "--out", &traj,
            "--space-out", &space,
        ])?,
        "ingest summary",
    )?;
    ensure(ingested.episodes == gen.episodes && ingested.steps == gen.steps, || "ingest lost steps".into())?;
    let summary: ipg_core::graph::GraphSummary =
        parse(&ipg(&["build", "--input", &traj, "--space", &space, "--out", &pg])?, "build summary")?;
    ensure(summary.transitions == gen.steps as u64, || "graph transitions differ from steps".into())?;
    let graph = PolicyGraph::load(&pg).map_err(|e| e.to_string())?;

    let registered: Vec<serde_json::Value> = parse(
        &ipg(&["desires", "register", "--graph", &pg, "--desires", &d, "--out", &csv])?,
        "register summary",
    )?;
    let rows = std::fs::read_to_string(&csv).map_err(|e| e.to_string())?;
    let mut lines = rows.lines();
    ensure(lines.next() == Some("state_id,desire_id,value"), || "CSV header".into())?;
    let n_rows = lines
        .map(|l| {
            let v: f64 = l.rsplit(',').next().unwrap().parse().unwrap_or(-1.0);
            (0.0..=1.0).contains(&v)
        })
        .filter(|ok| *ok)
        .count();
    ensure(n_rows == graph.len() * registered.len(), || "CSV rows".into())?;

    let mut args = vec!["metrics", "--graph", &pg, "--desires", &d, "--curve-points", "20", "--out", &metrics];
    args.extend_from_slice(extra_metrics);
    ipg(&args)?;
    let report: MetricsReport = parse(&std::fs::read(&metrics).map_err(|e| e.to_string())?, "metrics report")?;
    ensure(report.desires.len() == registered.len(), || "desire reports".into())?;
    ensure(report.curve.as_ref().map(Vec::len) == Some(20), || "trade-off curve".into())?;
    ensure(report.entropy.states.len() == graph.len(), || "entropy states".into())?;
    ensure(report.delta_reward.is_some() == !extra_metrics.is_empty(), || "reward comparison".into())?;

    ipg(&["regions", "--graph", &pg, "--desires", &d, "--trajectories", &traj, "--episode", "0", "--out", &regions])?;
    let regions: RegionsResponse = parse(&std::fs::read(&regions).map_err(|e| e.to_string())?, "regions")?;
    ensure(
        regions.regions.iter().all(|r| r.t_start <= r.t_end && r.t_end < 100),
        || "region bounds".into(),
    )?;
    Ok(format!(
        "{env}: {} states, {} regions in episode 0",
        graph.len(),
        regions.regions.len()
    ))
}

pub fn end_to_end() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let traffic = dir.path().join("traffic");
    let kitchen = dir.path().join("kitchen");
    std::fs::create_dir_all(&traffic).map_err(|e| e.to_string())?;
    std::fs::create_dir_all(&kitchen).map_err(|e| e.to_string())?;
    let a = pipeline(
        &traffic,
        "traffic-light",
        "traffic-light-g",
        &["--env", "traffic-light", "--discretiser", "traffic-light-g"],
    )?;
    let b = pipeline(&kitchen, "mini-kitchen", "mini-kitchen", &[])?;
    Ok(format!("{a}; {b}"))
}
