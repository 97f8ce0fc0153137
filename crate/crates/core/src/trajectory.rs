//! Discrete episodes and the line-delimited JSON trajectory format.
//!
//! One JSON object per line:
//! `{"episode":k,"t":i,"predicates":{...},"action":"up","raw":...}`, and a
//! final record per episode with `"action":null` carrying the terminal state.
//! Records of different episodes may interleave; steps are regrouped by
//! episode id and must be consecutive from `t = 0`.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::marker::PhantomData;
use std::path::Path;
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::predicate::{ActionId, ActionSet, Discretiser, PredicateSpace, PredicateState};

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub episode: u64,
    pub t: u32,
    pub state: PredicateState,
    pub action: ActionId,
    pub raw: Option<Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub id: u64,
    pub steps: Vec<Step>,
    /// State reached after the last action.
    pub terminal: PredicateState,
    pub terminal_raw: Option<Value>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// State following step `i` (the terminal state for the last step).
    pub fn successor(&self, i: usize) -> &PredicateState {
        self.steps
            .get(i + 1)
            .map(|s| &s.state)
            .unwrap_or(&self.terminal)
    }

    /// `(s_t, a_t, s_{t+1})` triples.
    pub fn transitions(&self) -> impl Iterator<Item = (&PredicateState, ActionId, &PredicateState)> {
        self.steps
            .iter()
            .enumerate()
            .map(move |(i, step)| (&step.state, step.action, self.successor(i)))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Record {
    episode: u64,
    t: u32,
    predicates: Map<String, Value>,
    action: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    raw: Option<Value>,
}

fn predicates_of(state: &PredicateState) -> Map<String, Value> {
    state
        .pairs()
        .map(|(k, v)| (k.to_string(), Value::String(v.to_string())))
        .collect()
}

fn state_of(space: &Arc<PredicateSpace>, predicates: &Map<String, Value>) -> Result<PredicateState> {
    let mut pairs = Vec::with_capacity(predicates.len());
    for (name, value) in predicates {
        let value = value.as_str().ok_or_else(|| Error::UnknownValue {
            variable: name.clone(),
            value: value.to_string(),
        })?;
        pairs.push((name.as_str(), value));
    }
    space.state(pairs)
}

/// Writes episodes in the canonical line format.
pub fn write_trajectories<W: Write>(episodes: &[Episode], actions: &ActionSet, mut out: W) -> Result<()> {
    for ep in episodes {
        for step in &ep.steps {
            let rec = Record {
                episode: ep.id,
                t: step.t,
                predicates: predicates_of(&step.state),
                action: Some(actions.name(step.action).to_string()),
                raw: step.raw.clone(),
            };
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n")?;
        }
        let rec = Record {
            episode: ep.id,
            t: ep.steps.len() as u32,
            predicates: predicates_of(&ep.terminal),
            action: None,
            raw: ep.terminal_raw.clone(),
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_trajectories(path: impl AsRef<Path>, episodes: &[Episode], actions: &ActionSet) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_trajectories(episodes, actions, std::io::BufWriter::new(file))
}

pub fn load_trajectories(
    path: impl AsRef<Path>,
    space: &Arc<PredicateSpace>,
    actions: &ActionSet,
) -> Result<Vec<Episode>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    read_trajectories(BufReader::new(file), path, space, actions)
}

/// Parses the line format; `source` only labels error messages.
pub fn read_trajectories<R: BufRead>(
    reader: R,
    source: &Path,
    space: &Arc<PredicateSpace>,
    actions: &ActionSet,
) -> Result<Vec<Episode>> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: source.to_path_buf(),
        line,
        message,
    };

    // episode -> [(t, line, state, action, raw)]
    type Row = (u32, usize, PredicateState, Option<ActionId>, Option<Value>);
    let mut grouped: BTreeMap<u64, Vec<Row>> = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record =
            serde_json::from_str(&line).map_err(|e| parse_err(lineno, e.to_string()))?;
        let state =
            state_of(space, &rec.predicates).map_err(|e| parse_err(lineno, e.to_string()))?;
        let action = rec
            .action
            .as_deref()
            .map(|a| actions.id(a))
            .transpose()
            .map_err(|e| parse_err(lineno, e.to_string()))?;
        grouped
            .entry(rec.episode)
            .or_default()
            .push((rec.t, lineno, state, action, rec.raw));
    }

    let mut episodes = Vec::with_capacity(grouped.len());
    for (id, mut rows) in grouped {
        rows.sort_by_key(|r| r.0);
        for (expected, row) in rows.iter().enumerate() {
            if row.0 as usize != expected {
                return Err(Error::NonConsecutiveStep {
                    episode: id,
                    expected: expected as u32,
                    found: row.0,
                });
            }
        }
        let (_, last_line, terminal, last_action, terminal_raw) =
            rows.pop().expect("grouped rows are non-empty");
        if last_action.is_some() {
            return Err(Error::MissingTerminal(id));
        }
        if rows.is_empty() {
            return Err(parse_err(last_line, format!("episode {id} has no steps")));
        }
        let mut steps = Vec::with_capacity(rows.len());
        for (t, line, state, action, raw) in rows {
            let action = action.ok_or_else(|| {
                parse_err(line, format!("episode {id}: terminal record at t={t} is not last"))
            })?;
            steps.push(Step {
                episode: id,
                t,
                state,
                action,
                raw,
            });
        }
        episodes.push(Episode {
            id,
            steps,
            terminal,
            terminal_raw,
        });
    }
    Ok(episodes)
}

/// An undiscretised episode as produced by an environment rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct RawEpisode<R> {
    pub id: u64,
    pub steps: Vec<(R, ActionId)>,
    pub terminal: R,
}

/// Applies `discretiser` to every step, keeping the raw payloads.
pub fn discretise_episodes<R, D>(raw: &[RawEpisode<R>], discretiser: &D) -> Result<Vec<Episode>>
where
    R: Serialize,
    D: Discretiser<R> + ?Sized,
{
    raw.iter()
        .map(|ep| {
            let ingest_err = |t: usize, e: Error| Error::Ingest {
                episode: ep.id,
                t: t as u32,
                message: e.to_string(),
            };
            if ep.steps.is_empty() {
                return Err(Error::Ingest {
                    episode: ep.id,
                    t: 0,
                    message: "episode has no steps".into(),
                });
            }
            let steps = ep
                .steps
                .iter()
                .enumerate()
                .map(|(t, (r, a))| {
                    Ok(Step {
                        episode: ep.id,
                        t: t as u32,
                        state: discretiser.discretise(r).map_err(|e| ingest_err(t, e))?,
                        action: *a,
                        raw: Some(serde_json::to_value(r)?),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let terminal = discretiser
                .discretise(&ep.terminal)
                .map_err(|e| ingest_err(ep.steps.len(), e))?;
            Ok(Episode {
                id: ep.id,
                steps,
                terminal,
                terminal_raw: Some(serde_json::to_value(&ep.terminal)?),
            })
        })
        .collect()
}

/// Re-applies a discretiser to the raw payloads stored in loaded episodes.
pub fn rediscretise<D>(episodes: &[Episode], discretiser: &D) -> Result<Vec<Episode>>
where
    D: Discretiser<Value> + ?Sized,
{
    let missing = |ep: u64, t: u32| Error::Ingest {
        episode: ep,
        t,
        message: "no raw payload to discretise".into(),
    };
    episodes
        .iter()
        .map(|ep| {
            let steps = ep
                .steps
                .iter()
                .map(|s| {
                    let raw = s.raw.as_ref().ok_or_else(|| missing(ep.id, s.t))?;
                    let state = discretiser.discretise(raw).map_err(|e| Error::Ingest {
                        episode: ep.id,
                        t: s.t,
                        message: e.to_string(),
                    })?;
                    Ok(Step {
                        state,
                        ..s.clone()
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let t_end = ep.steps.len() as u32;
            let raw = ep
                .terminal_raw
                .as_ref()
                .ok_or_else(|| missing(ep.id, t_end))?;
            let terminal = discretiser.discretise(raw).map_err(|e| Error::Ingest {
                episode: ep.id,
                t: t_end,
                message: e.to_string(),
            })?;
            Ok(Episode {
                id: ep.id,
                steps,
                terminal,
                terminal_raw: ep.terminal_raw.clone(),
            })
        })
        .collect()
}

/// Lifts a discretiser over `R` to one over JSON payloads that deserialize
/// into `R`.
pub struct JsonDiscretiser<D, R> {
    inner: D,
    _raw: PhantomData<fn() -> R>,
}

impl<D, R> JsonDiscretiser<D, R> {
    pub fn new(inner: D) -> Self {
        JsonDiscretiser {
            inner,
            _raw: PhantomData,
        }
    }
}

impl<D, R> Discretiser<Value> for JsonDiscretiser<D, R>
where
    D: Discretiser<R>,
    R: DeserializeOwned,
{
    fn space(&self) -> &Arc<PredicateSpace> {
        self.inner.space()
    }

    fn discretise(&self, raw: &Value) -> Result<PredicateState> {
        let r: R = serde_json::from_value(raw.clone())?;
        self.inner.discretise(&r)
    }
}
