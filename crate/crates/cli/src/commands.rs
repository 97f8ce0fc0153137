use std::io::Write;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use ipg_core::envs::{write_generated, Agent, Environment};
use ipg_core::explain::{how, how_stochastic, what, why, Explanation, TemplatePack};
use ipg_core::graph::PolicyGraph;
use ipg_core::intention::{register_desire, write_intention_csv, CommitmentThreshold, DesireFile, IntentionIndex, PropagationConfig};
use ipg_core::metrics::{delta_reward, parse_grid, uniform_grid, DeltaReward, DeltaRewardConfig};
use ipg_core::predicate::{ActionSet, Discretiser, PredicateSpace, PredicateState};
use ipg_core::report::MetricsReport;
use ipg_core::revision::{annotate, find_regions, RegionConfig};
use ipg_core::trajectory::{load_trajectories, save_trajectories};
use ipg_service::{RegionsResponse, Session};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::setup::{dispatch, DiscName, EnvName, Task};
use crate::{
    BuildArgs, Command, DesiresCommand, Format, GenArgs, IngestArgs, MetricsArgs, PropagationArgs, QueryArgs,
    QueryCommand, RegionsArgs, ServeArgs, SpaceArgs, Usage,
};

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Gen(a) => gen(&a),
        Command::Ingest(a) => ingest(&a),
        Command::Build(a) => build(&a),
        Command::Desires(DesiresCommand::Register {
            graph,
            desires,
            out,
            propagation,
        }) => register(&graph, &desires, out.as_deref(), &propagation),
        Command::Metrics(a) => metrics(&a),
        Command::Query(q) => query(q),
        Command::Regions(a) => regions(&a),
        Command::Serve(a) => serve(a),
    }
}

/// Pretty JSON to `out`, or to stdout.
fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct SpaceFile {
    #[serde(flatten)]
    space: PredicateSpace,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    actions: Option<Vec<String>>,
}

fn write_space(path: &Path, space: &PredicateSpace, actions: &ActionSet) -> Result<()> {
    let file = SpaceFile {
        space: space.clone(),
        actions: Some(actions.names().to_vec()),
    };
    emit(&file, Some(path))
}

fn read_space(args: &SpaceArgs) -> Result<(Arc<PredicateSpace>, ActionSet)> {
    let text = std::fs::read_to_string(&args.space).with_context(|| format!("reading {}", args.space.display()))?;
    let file: SpaceFile =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", args.space.display()))?;
    let names = match (&args.actions, file.actions) {
        (Some(names), _) => names.clone(),
        (None, Some(names)) => names,
        (None, None) => {
            return Err(Usage(format!(
                "{} declares no actions; pass --actions",
                args.space.display()
            ))
            .into())
        }
    };
    Ok((Arc::new(file.space), ActionSet::new(names)?))
}

fn propagation(p: &PropagationArgs) -> Result<PropagationConfig> {
    Ok(PropagationConfig::new(p.epsilon, p.max_updates)?)
}

fn threshold(c: f64) -> Result<CommitmentThreshold> {
    Ok(CommitmentThreshold::new(c)?)
}

struct Gen<'a>(&'a GenArgs);

impl Task for Gen<'_> {
    type Output = serde_json::Value;

    fn run<E, A, D>(self, env: &E, agent: &A, disc: &D) -> Result<Self::Output>
    where
        E: Environment,
        A: Agent<E::State>,
        D: Discretiser<E::State>,
    {
        let a = self.0;
        let generated = write_generated(&a.out, env, agent, disc, a.episodes, a.horizon, a.seed)?;
        if let Some(p) = &a.space_out {
            write_space(p, disc.space(), env.actions())?;
        }
        let steps: usize = generated.episodes.iter().map(|e| e.len()).sum();
        let mean_return = generated.returns.iter().sum::<f64>() / generated.returns.len().max(1) as f64;
        Ok(json!({
            "episodes": generated.episodes.len(),
            "steps": steps,
            "mean_return": mean_return,
        }))
    }
}

fn gen(a: &GenArgs) -> Result<()> {
    let summary = dispatch(a.env, a.agent, a.discretiser, Gen(a))?;
    if let Some(p) = &a.desires_out {
        let disc = a.discretiser.unwrap_or(match a.env {
            EnvName::TrafficLight => DiscName::TrafficLightG,
            EnvName::MiniKitchen => DiscName::MiniKitchen,
        });
        emit(&disc.desires(), Some(p))?;
    }
    emit(&summary, None)
}

fn ingest(a: &IngestArgs) -> Result<()> {
    let (space, actions) = read_space(&a.space)?;
    let mut episodes = load_trajectories(&a.input, &space, &actions)?;
    if let Some(d) = a.discretiser {
        let (again, new_space) = d.apply(&episodes)?;
        episodes = again;
        match &a.space_out {
            Some(p) => write_space(p, &new_space, &actions)?,
            None => log::warn!("no --space-out given; the output space is not recorded"),
        }
    }
    save_trajectories(&a.out, &episodes, &actions)?;
    let steps: usize = episodes.iter().map(|e| e.len()).sum();
    emit(&json!({"episodes": episodes.len(), "steps": steps}), None)
}

fn build(a: &BuildArgs) -> Result<()> {
    let (space, actions) = read_space(&a.space)?;
    let mut episodes = Vec::new();
    for p in &a.input {
        episodes.extend(load_trajectories(p, &space, &actions)?);
    }
    let graph = PolicyGraph::build(&space, &actions, &episodes)?;
    graph.save(&a.out)?;
    log::info!("wrote {} states to {}", graph.len(), a.out.display());
    emit(&graph.summary(), None)
}

/// Loads a graph and registers the desires of `desires`, in file order.
fn load_indices(
    graph: &Path,
    desires: Option<&Path>,
    p: &PropagationArgs,
) -> Result<(Arc<PolicyGraph>, Vec<IntentionIndex>)> {
    let cfg = propagation(p)?;
    let graph = Arc::new(PolicyGraph::load(graph).with_context(|| format!("loading {}", graph.display()))?);
    let mut indices = Vec::new();
    if let Some(path) = desires {
        let file = DesireFile::load(path).with_context(|| format!("loading {}", path.display()))?;
        for desire in file.compile(graph.space(), graph.actions())? {
            let started = Instant::now();
            let id = desire.id.clone();
            let ix = register_desire(&graph, desire, cfg)?;
            log::info!("desire `{id}`: {} updates in {:?}", ix.updates(), started.elapsed());
            indices.push(ix);
        }
    }
    Ok((graph, indices))
}

fn register(graph: &Path, desires: &Path, out: Option<&Path>, p: &PropagationArgs) -> Result<()> {
    let (_, indices) = load_indices(graph, Some(desires), p)?;
    match out {
        Some(path) => {
            let file = std::fs::File::create(path).with_context(|| format!("writing {}", path.display()))?;
            write_intention_csv(&indices, std::io::BufWriter::new(file))?;
            let summary: Vec<_> = indices
                .iter()
                .map(|ix| json!({"id": ix.desire().id, "updates": ix.updates()}))
                .collect();
            emit(&summary, None)
        }
        None => Ok(write_intention_csv(&indices, std::io::stdout().lock())?),
    }
}

struct Fidelity<'a> {
    graph: &'a PolicyGraph,
    cfg: DeltaRewardConfig,
}

impl Task for Fidelity<'_> {
    type Output = DeltaReward;

    fn run<E, A, D>(self, env: &E, agent: &A, disc: &D) -> Result<DeltaReward>
    where
        E: Environment,
        A: Agent<E::State>,
        D: Discretiser<E::State>,
    {
        delta_reward(env, agent, self.graph, disc, self.cfg)
            .context("the graph's space must match the chosen discretiser")
    }
}

fn metrics(a: &MetricsArgs) -> Result<()> {
    let (graph, indices) = load_indices(&a.graph, a.desires.as_deref(), &a.propagation)?;
    let grid = match (&a.curve, a.curve_points) {
        (Some(text), _) => Some(parse_grid(text)?),
        (None, Some(n)) => Some(uniform_grid(n)),
        (None, None) => None,
    };
    let mut report = MetricsReport::build(&graph, &indices, threshold(a.commitment)?, grid.as_deref())?;
    if let Some(env) = a.env {
        let cfg = DeltaRewardConfig {
            horizon: a.reward_horizon,
            n_episodes: a.reward_episodes,
            seed: a.seed,
        };
        report.delta_reward = Some(dispatch(env, a.agent, a.discretiser, Fidelity { graph: &graph, cfg })?);
    }
    emit(&report, a.out.as_deref())
}

fn query_state(graph: &PolicyGraph, id: &str) -> Result<PredicateState> {
    let state = graph.parse_state(id)?;
    graph.require(&state)?;
    Ok(state)
}

fn query(q: QueryCommand) -> Result<()> {
    let args: &QueryArgs = match &q {
        QueryCommand::What(a) => a,
        QueryCommand::How { query, .. } | QueryCommand::Why { query, .. } => query,
    };
    let (graph, indices) = load_indices(&args.graph, Some(&args.desires), &args.propagation)?;
    let c = threshold(args.commitment)?;
    let state = query_state(&graph, &args.state)?;
    let answer = match &q {
        QueryCommand::What(_) => Explanation::What(what(&indices, &state, c)),
        QueryCommand::How {
            desire,
            stochastic,
            samples,
            seed,
            max_depth,
            ..
        } => {
            let desire = match desire {
                Some(d) => d.clone(),
                None => what(&indices, &state, c)
                    .attributions
                    .into_iter()
                    .next()
                    .map(|a| a.desire)
                    .ok_or_else(|| anyhow!("no desire is attributed to `{}` at commitment {}", args.state, c.value()))?,
            };
            let ix = indices
                .iter()
                .find(|ix| ix.desire().id == desire)
                .ok_or_else(|| anyhow!("no desire `{desire}` in {}", args.desires.display()))?;
            if *stochastic {
                Explanation::HowStochastic(how_stochastic(ix, &state, c, *samples, *max_depth, *seed)?)
            } else {
                Explanation::How(how(ix, &state, *max_depth)?)
            }
        }
        QueryCommand::Why { action, .. } => Explanation::Why(why(&indices, &state, action, c)?),
    };
    match args.format {
        Format::Json => match &answer {
            Explanation::What(x) => emit(x, None),
            Explanation::How(x) => emit(x, None),
            Explanation::HowStochastic(x) => emit(x, None),
            Explanation::Why(x) => emit(x, None),
        },
        Format::Text => {
            let text = TemplatePack::default().render(&answer, &|id| graph.parse_state(id))?;
            println!("{text}");
            Ok(())
        }
    }
}

fn regions(a: &RegionsArgs) -> Result<()> {
    let (graph, indices) = load_indices(&a.graph, Some(&a.desires), &a.propagation)?;
    let episodes = load_trajectories(&a.trajectories, graph.space(), graph.actions())?;
    let episode = episodes
        .iter()
        .find(|e| e.id == a.episode)
        .ok_or_else(|| anyhow!("no episode {} in {}", a.episode, a.trajectories.display()))?;
    let c = threshold(a.commitment)?;
    let config = RegionConfig {
        min_len: a.min_len,
        grace: a.grace,
        stall_horizon: a.stall,
    };
    let annotation = annotate(&graph, &indices, episode, c)?;
    let response = RegionsResponse {
        episode: a.episode,
        commitment: c.value(),
        config,
        regions: find_regions(&annotation, c, config)?,
    };
    emit(&response, a.out.as_deref())
}

fn serve(a: ServeArgs) -> Result<()> {
    let session = Session::load(
        &a.graph,
        a.trajectories.as_deref(),
        a.desires.as_deref(),
        threshold(a.commitment)?,
        propagation(&a.propagation)?,
    )?;
    ipg_service::run(session, a.port).context("serving")?;
    Ok(())
}
