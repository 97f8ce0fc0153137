//! Predicate spaces, discrete states, desire clauses and the predicate-count
//! distance.
//!
//! A [`PredicateSpace`] declares an ordered list of finite-domain variables.
//! A [`PredicateState`] is a total assignment over one space; its canonical id
//! is `name=value` pairs joined by `|` in declaration order, which makes ids
//! stable across runs and suitable for golden files.

use std::collections::HashMap;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One finite-domain predicate variable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub domain: Vec<String>,
}

impl Variable {
    pub fn new<V: Into<String>>(name: impl Into<String>, domain: impl IntoIterator<Item = V>) -> Self {
        Variable {
            name: name.into(),
            domain: domain.into_iter().map(Into::into).collect(),
        }
    }

    fn value_index(&self, value: &str) -> Option<u16> {
        self.domain.iter().position(|v| v == value).map(|i| i as u16)
    }
}

fn check_identifier(kind: &str, s: &str) -> Result<()> {
    if s.is_empty() || s.contains('|') || s.contains('=') || s.contains(',') {
        return Err(Error::InvalidSpace(format!(
            "{kind} `{s}` must be non-empty and free of `|`, `=` and `,`"
        )));
    }
    Ok(())
}

/// Ordered set of predicate variables; fixes the canonical serialization
/// order of every state built over it.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "SpaceRepr", into = "SpaceRepr")]
pub struct PredicateSpace {
    variables: Vec<Variable>,
    by_name: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct SpaceRepr {
    variables: Vec<Variable>,
}

impl TryFrom<SpaceRepr> for PredicateSpace {
    type Error = Error;

    fn try_from(repr: SpaceRepr) -> Result<Self> {
        PredicateSpace::new(repr.variables)
    }
}

impl From<PredicateSpace> for SpaceRepr {
    fn from(space: PredicateSpace) -> Self {
        SpaceRepr {
            variables: space.variables,
        }
    }
}

impl PartialEq for PredicateSpace {
    fn eq(&self, other: &Self) -> bool {
        self.variables == other.variables
    }
}

impl Eq for PredicateSpace {}

impl PredicateSpace {
    pub fn new(variables: Vec<Variable>) -> Result<Self> {
        let mut by_name = HashMap::with_capacity(variables.len());
        for (i, var) in variables.iter().enumerate() {
            check_identifier("variable name", &var.name)?;
            if var.domain.is_empty() {
                return Err(Error::InvalidSpace(format!(
                    "domain of `{}` is empty",
                    var.name
                )));
            }
            if var.domain.len() > u16::MAX as usize {
                return Err(Error::InvalidSpace(format!(
                    "domain of `{}` is too large",
                    var.name
                )));
            }
            for (j, value) in var.domain.iter().enumerate() {
                check_identifier("value", value)?;
                if var.domain[..j].contains(value) {
                    return Err(Error::InvalidSpace(format!(
                        "duplicate value `{value}` in `{}`",
                        var.name
                    )));
                }
            }
            if by_name.insert(var.name.clone(), i).is_some() {
                return Err(Error::InvalidSpace(format!(
                    "duplicate variable `{}`",
                    var.name
                )));
            }
        }
        Ok(PredicateSpace { variables, by_name })
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn variable_index(&self, name: &str) -> Option<usize> {
        self.by_name.get(name).copied()
    }

    /// Product of domain sizes (saturating).
    pub fn cardinality(&self) -> u64 {
        self.variables
            .iter()
            .fold(1u64, |acc, v| acc.saturating_mul(v.domain.len() as u64))
    }

    /// Builds a state from `(variable, value)` pairs given in any order.
    pub fn state<'a, I>(self: &Arc<Self>, pairs: I) -> Result<PredicateState>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut values: Vec<Option<u16>> = vec![None; self.variables.len()];
        for (name, value) in pairs {
            let i = self
                .variable_index(name)
                .ok_or_else(|| Error::UnknownVariable(name.to_string()))?;
            let var = &self.variables[i];
            let v = var.value_index(value).ok_or_else(|| Error::UnknownValue {
                variable: name.to_string(),
                value: value.to_string(),
            })?;
            values[i] = Some(v);
        }
        let values = values
            .into_iter()
            .enumerate()
            .map(|(i, v)| v.ok_or_else(|| Error::MissingVariable(self.variables[i].name.clone())))
            .collect::<Result<Vec<_>>>()?;
        Ok(PredicateState {
            space: Arc::clone(self),
            values: values.into_boxed_slice(),
        })
    }

    /// Builds a state from value indices in declaration order.
    pub fn state_from_indices(self: &Arc<Self>, values: &[u16]) -> Result<PredicateState> {
        if values.len() != self.variables.len() {
            return Err(Error::InvalidSpace(format!(
                "expected {} values, got {}",
                self.variables.len(),
                values.len()
            )));
        }
        for (var, &v) in self.variables.iter().zip(values) {
            if v as usize >= var.domain.len() {
                return Err(Error::UnknownValue {
                    variable: var.name.clone(),
                    value: v.to_string(),
                });
            }
        }
        Ok(PredicateState {
            space: Arc::clone(self),
            values: values.into(),
        })
    }

    /// Inverse of [`PredicateState::canonical_id`].
    pub fn parse_id(self: &Arc<Self>, id: &str) -> Result<PredicateState> {
        let mut pairs = Vec::with_capacity(self.variables.len());
        if !id.is_empty() {
            for part in id.split('|') {
                let (name, value) = part
                    .split_once('=')
                    .ok_or_else(|| Error::MalformedStateId(id.to_string()))?;
                pairs.push((name, value));
            }
        }
        if pairs.len() != self.variables.len() {
            return Err(Error::MalformedStateId(id.to_string()));
        }
        self.state(pairs)
    }

    /// Every state of the space, in odometer order over declaration order.
    /// Only sensible for small spaces.
    pub fn enumerate(self: &Arc<Self>) -> Vec<PredicateState> {
        let mut out = Vec::new();
        let mut cur = vec![0u16; self.variables.len()];
        loop {
            out.push(PredicateState {
                space: Arc::clone(self),
                values: cur.clone().into_boxed_slice(),
            });
            let mut i = self.variables.len();
            loop {
                if i == 0 {
                    return out;
                }
                i -= 1;
                cur[i] += 1;
                if (cur[i] as usize) < self.variables[i].domain.len() {
                    break;
                }
                cur[i] = 0;
            }
        }
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// A total assignment over a [`PredicateSpace`].
///
/// Equality and hashing use the assignment; two states from different (but
/// structurally equal) spaces compare equal.
#[derive(Clone)]
pub struct PredicateState {
    space: Arc<PredicateSpace>,
    values: Box<[u16]>,
}

impl PartialEq for PredicateState {
    fn eq(&self, other: &Self) -> bool {
        self.values == other.values
            && (Arc::ptr_eq(&self.space, &other.space) || self.space == other.space)
    }
}

impl Eq for PredicateState {}

impl Hash for PredicateState {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.values.hash(state);
    }
}

impl fmt::Debug for PredicateState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PredicateState({})", self.canonical_id())
    }
}

impl fmt::Display for PredicateState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical_id())
    }
}

impl PredicateState {
    pub fn space(&self) -> &Arc<PredicateSpace> {
        &self.space
    }

    pub fn indices(&self) -> &[u16] {
        &self.values
    }

    pub fn value(&self, variable: &str) -> Option<&str> {
        let i = self.space.variable_index(variable)?;
        Some(self.value_at(i))
    }

    pub fn value_at(&self, i: usize) -> &str {
        &self.space.variables[i].domain[self.values[i] as usize]
    }

    /// `(name, value)` pairs in declaration order.
    pub fn pairs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.space
            .variables
            .iter()
            .zip(self.values.iter())
            .map(|(var, &v)| (var.name.as_str(), var.domain[v as usize].as_str()))
    }

    pub fn canonical_id(&self) -> String {
        let mut id = String::new();
        for (i, (name, value)) in self.pairs().enumerate() {
            if i > 0 {
                id.push('|');
            }
            id.push_str(name);
            id.push('=');
            id.push_str(value);
        }
        id
    }

    pub fn same_space(&self, other: &PredicateState) -> bool {
        Arc::ptr_eq(&self.space, &other.space) || self.space == other.space
    }

    /// Number of variables whose values differ.
    pub fn distance(&self, other: &PredicateState) -> Result<usize> {
        if !self.same_space(other) {
            return Err(Error::SpaceMismatch);
        }
        Ok(self
            .values
            .iter()
            .zip(other.values.iter())
            .filter(|(a, b)| a != b)
            .count())
    }

    /// Variables whose values differ, as `(name, from, to)`.
    pub fn diff<'a>(&'a self, other: &'a PredicateState) -> Vec<(&'a str, &'a str, &'a str)> {
        self.space
            .variables
            .iter()
            .enumerate()
            .filter(|(i, _)| self.values[*i] != other.values[*i])
            .map(|(i, var)| (var.name.as_str(), self.value_at(i), other.value_at(i)))
            .collect()
    }

    pub fn satisfies(&self, clause: &DesireClause) -> Result<bool> {
        if !Arc::ptr_eq(&self.space, &clause.space) && *self.space != *clause.space {
            return Err(Error::SpaceMismatch);
        }
        Ok(clause.holds_on(&self.values))
    }
}

/// Index into an [`ActionSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActionId(pub u16);

/// Declared finite action vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct ActionSet {
    names: Vec<String>,
}

impl TryFrom<Vec<String>> for ActionSet {
    type Error = Error;

    fn try_from(names: Vec<String>) -> Result<Self> {
        ActionSet::new(names)
    }
}

impl From<ActionSet> for Vec<String> {
    fn from(set: ActionSet) -> Self {
        set.names
    }
}

impl ActionSet {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(Error::Config("action set is empty".into()));
        }
        for (i, name) in names.iter().enumerate() {
            check_identifier("action", name)?;
            if names[..i].contains(name) {
                return Err(Error::Config(format!("duplicate action `{name}`")));
            }
        }
        Ok(ActionSet { names })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn id(&self, name: &str) -> Result<ActionId> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| ActionId(i as u16))
            .ok_or_else(|| Error::UnknownAction(name.to_string()))
    }

    pub fn name(&self, id: ActionId) -> &str {
        &self.names[id.0 as usize]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn ids(&self) -> impl Iterator<Item = ActionId> {
        (0..self.names.len() as u16).map(ActionId)
    }
}

/// One membership literal of a clause, as written in desire files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LiteralSpec {
    pub var: String,
    #[serde(rename = "in")]
    pub values: Vec<String>,
}

/// Conjunction of membership literals; defines a desire's state region.
#[derive(Debug, Clone)]
pub struct DesireClause {
    space: Arc<PredicateSpace>,
    // (variable index, allowed[value index])
    literals: Vec<(usize, Vec<bool>)>,
}

impl DesireClause {
    pub fn new(space: &Arc<PredicateSpace>, literals: &[LiteralSpec]) -> Result<Self> {
        let mut compiled: Vec<(usize, Vec<bool>)> = Vec::with_capacity(literals.len());
        for lit in literals {
            let i = space.variable_index(&lit.var).ok_or_else(|| {
                Error::InvalidClause(format!("unknown variable `{}`", lit.var))
            })?;
            if lit.values.is_empty() {
                return Err(Error::InvalidClause(format!(
                    "empty membership set for `{}`",
                    lit.var
                )));
            }
            let var = &space.variables[i];
            let mut allowed = vec![false; var.domain.len()];
            for value in &lit.values {
                let v = var.value_index(value).ok_or_else(|| {
                    Error::InvalidClause(format!("`{value}` is not a value of `{}`", lit.var))
                })?;
                allowed[v as usize] = true;
            }
            // Repeated literals on one variable intersect.
            if let Some((_, prev)) = compiled.iter_mut().find(|(j, _)| *j == i) {
                for (p, a) in prev.iter_mut().zip(allowed) {
                    *p = *p && a;
                }
            } else {
                compiled.push((i, allowed));
            }
        }
        Ok(DesireClause {
            space: Arc::clone(space),
            literals: compiled,
        })
    }

    /// The empty conjunction; holds everywhere.
    pub fn always(space: &Arc<PredicateSpace>) -> Self {
        DesireClause {
            space: Arc::clone(space),
            literals: Vec::new(),
        }
    }

    pub fn space(&self) -> &Arc<PredicateSpace> {
        &self.space
    }

    fn holds_on(&self, values: &[u16]) -> bool {
        self.literals
            .iter()
            .all(|(i, allowed)| allowed[values[*i] as usize])
    }

    pub fn to_specs(&self) -> Vec<LiteralSpec> {
        self.literals
            .iter()
            .map(|(i, allowed)| {
                let var = &self.space.variables[*i];
                LiteralSpec {
                    var: var.name.clone(),
                    values: var
                        .domain
                        .iter()
                        .zip(allowed)
                        .filter(|(_, &a)| a)
                        .map(|(v, _)| v.clone())
                        .collect(),
                }
            })
            .collect()
    }
}

/// Deterministic, total mapping from raw environment states to predicate
/// states.
pub trait Discretiser<R: ?Sized> {
    fn space(&self) -> &Arc<PredicateSpace>;

    fn discretise(&self, raw: &R) -> Result<PredicateState>;
}
