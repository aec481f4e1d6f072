//! Project contexts: typed boundary conditions (numeric and categorical
//! factors), their aggregation per cluster, and context similarity.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FactorKind {
    Numeric,
    Categorical,
}

impl fmt::Display for FactorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FactorKind::Numeric => "numeric",
            FactorKind::Categorical => "categorical",
        })
    }
}

fn default_weight() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorSpec {
    pub name: String,
    pub kind: FactorKind,
    #[serde(default = "default_weight")]
    pub weight: f64,
}

impl FactorSpec {
    pub fn new(name: impl Into<String>, kind: FactorKind) -> Self {
        Self {
            name: name.into(),
            kind,
            weight: 1.0,
        }
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }
}

/// Ordered list of context factors. Serialized as a bare JSON list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<FactorSpec>", into = "Vec<FactorSpec>")]
pub struct ContextSchema {
    factors: Vec<FactorSpec>,
}

impl ContextSchema {
    pub fn new(factors: Vec<FactorSpec>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::InvalidSchema("schema needs at least one factor".into()));
        }
        for (i, f) in factors.iter().enumerate() {
            if f.name.is_empty() {
                return Err(Error::InvalidSchema(format!("factor {i} has an empty name")));
            }
            if !(f.weight.is_finite() && f.weight > 0.0) {
                return Err(Error::InvalidSchema(format!(
                    "factor {:?} has non-positive weight {}",
                    f.name, f.weight
                )));
            }
            if factors[..i].iter().any(|g| g.name == f.name) {
                return Err(Error::InvalidSchema(format!("duplicate factor {:?}", f.name)));
            }
        }
        Ok(Self { factors })
    }

    pub fn factors(&self) -> &[FactorSpec] {
        &self.factors
    }

    pub fn factor(&self, name: &str) -> Option<&FactorSpec> {
        self.factors.iter().find(|f| f.name == name)
    }
}

impl TryFrom<Vec<FactorSpec>> for ContextSchema {
    type Error = Error;

    fn try_from(factors: Vec<FactorSpec>) -> Result<Self> {
        ContextSchema::new(factors)
    }
}

impl From<ContextSchema> for Vec<FactorSpec> {
    fn from(schema: ContextSchema) -> Self {
        schema.factors
    }
}

/// A factor assignment: a real number or a categorical token.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FactorValue {
    Numeric(f64),
    Categorical(String),
}

impl FactorValue {
    pub fn kind(&self) -> FactorKind {
        match self {
            FactorValue::Numeric(_) => FactorKind::Numeric,
            FactorValue::Categorical(_) => FactorKind::Categorical,
        }
    }

    /// Parses a textual value according to the declared kind.
    pub fn parse(kind: FactorKind, text: &str) -> Option<Self> {
        match kind {
            FactorKind::Numeric => text
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .map(FactorValue::Numeric),
            FactorKind::Categorical => Some(FactorValue::Categorical(text.to_string())),
        }
    }
}

impl fmt::Display for FactorValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FactorValue::Numeric(v) => write!(f, "{v}"),
            FactorValue::Categorical(s) => f.write_str(s),
        }
    }
}

/// Sparse assignment of factor values for one project.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ContextVector {
    pub assignments: BTreeMap<String, FactorValue>,
}

impl ContextVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: impl Into<String>, value: FactorValue) -> Self {
        self.assignments.insert(name.into(), value);
        self
    }

    pub fn numeric(self, name: impl Into<String>, value: f64) -> Self {
        self.with(name, FactorValue::Numeric(value))
    }

    pub fn categorical(self, name: impl Into<String>, value: impl Into<String>) -> Self {
        self.with(name, FactorValue::Categorical(value.into()))
    }

    pub fn get(&self, name: &str) -> Option<&FactorValue> {
        self.assignments.get(name)
    }

    pub fn validate(&self, schema: &ContextSchema) -> Result<()> {
        for (name, value) in &self.assignments {
            check_assignment(schema, name, value.kind())?;
            if let FactorValue::Numeric(v) = value {
                if !v.is_finite() {
                    return Err(Error::schema(name, "numeric value must be finite"));
                }
            }
        }
        Ok(())
    }
}

fn check_assignment(schema: &ContextSchema, name: &str, kind: FactorKind) -> Result<()> {
    let spec = schema
        .factor(name)
        .ok_or_else(|| Error::schema(name, "factor not declared in schema"))?;
    if spec.kind != kind {
        return Err(Error::schema(
            name,
            format!("declared {} but assigned a {} value", spec.kind, kind),
        ));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AggregatedFactor {
    Numeric {
        mean: f64,
    },
    Categorical {
        representative: String,
        frequencies: BTreeMap<String, usize>,
    },
}

/// Cluster-level context: means for numeric factors, majority values (with
/// their frequency tables) for categorical ones.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AggregatedContext {
    pub factors: BTreeMap<String, AggregatedFactor>,
}

/// Observed `(min, max)` per numeric factor.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FactorRanges {
    pub ranges: BTreeMap<String, (f64, f64)>,
}

impl FactorRanges {
    pub fn get(&self, name: &str) -> Option<(f64, f64)> {
        self.ranges.get(name).copied()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FactorRef<'a> {
    Numeric(f64),
    Categorical(&'a str),
}

impl FactorRef<'_> {
    fn kind(&self) -> FactorKind {
        match self {
            FactorRef::Numeric(_) => FactorKind::Numeric,
            FactorRef::Categorical(_) => FactorKind::Categorical,
        }
    }
}

/// Anything similarity can be evaluated against.
pub trait ContextSource {
    fn lookup(&self, name: &str) -> Option<FactorRef<'_>>;
    fn assigned(&self) -> Vec<(&str, FactorRef<'_>)>;
}

impl ContextSource for ContextVector {
    fn lookup(&self, name: &str) -> Option<FactorRef<'_>> {
        self.assignments.get(name).map(|v| match v {
            FactorValue::Numeric(x) => FactorRef::Numeric(*x),
            FactorValue::Categorical(s) => FactorRef::Categorical(s),
        })
    }

    fn assigned(&self) -> Vec<(&str, FactorRef<'_>)> {
        self.assignments
            .keys()
            .filter_map(|k| self.lookup(k).map(|v| (k.as_str(), v)))
            .collect()
    }
}

impl ContextSource for AggregatedContext {
    fn lookup(&self, name: &str) -> Option<FactorRef<'_>> {
        self.factors.get(name).map(|f| match f {
            AggregatedFactor::Numeric { mean } => FactorRef::Numeric(*mean),
            AggregatedFactor::Categorical { representative, .. } => {
                FactorRef::Categorical(representative)
            }
        })
    }

    fn assigned(&self) -> Vec<(&str, FactorRef<'_>)> {
        self.factors
            .keys()
            .filter_map(|k| self.lookup(k).map(|v| (k.as_str(), v)))
            .collect()
    }
}

fn validate_source(source: &impl ContextSource, schema: &ContextSchema) -> Result<()> {
    for (name, value) in source.assigned() {
        check_assignment(schema, name, value.kind())?;
        if let FactorRef::Numeric(v) = value {
            if !v.is_finite() {
                return Err(Error::schema(name, "numeric value must be finite"));
            }
        }
    }
    Ok(())
}

/// Weighted mean of per-factor scores over the factors assigned on both
/// sides. Returns 0 when no factor is shared.
pub fn similarity(
    a: &ContextVector,
    b: &impl ContextSource,
    schema: &ContextSchema,
    ranges: &FactorRanges,
) -> Result<f64> {
    a.validate(schema)?;
    validate_source(b, schema)?;

    let mut weighted = 0.0;
    let mut total_weight = 0.0;
    for spec in schema.factors() {
        let (Some(x), Some(y)) = (a.lookup(&spec.name), b.lookup(&spec.name)) else {
            continue;
        };
        let score = match (x, y) {
            (FactorRef::Numeric(x), FactorRef::Numeric(y)) => {
                let span = ranges.get(&spec.name).map_or(0.0, |(lo, hi)| hi - lo);
                if span > 0.0 {
                    (1.0 - (x - y).abs() / span).clamp(0.0, 1.0)
                } else if x == y {
                    1.0
                } else {
                    0.0
                }
            }
            (FactorRef::Categorical(x), FactorRef::Categorical(y)) => {
                if x == y {
                    1.0
                } else {
                    0.0
                }
            }
            // Unreachable after validation; both kinds are checked against the schema.
            _ => return Err(Error::schema(&spec.name, "kind mismatch between contexts")),
        };
        weighted += spec.weight * score;
        total_weight += spec.weight;
    }
    if total_weight == 0.0 {
        return Ok(0.0);
    }
    Ok((weighted / total_weight).clamp(0.0, 1.0))
}

/// Majority vote for categorical factors (ties go to the lexicographically
/// smallest value) and arithmetic means for numeric ones.
pub fn aggregate_contexts<'a>(
    members: impl IntoIterator<Item = &'a ContextVector>,
    schema: &ContextSchema,
) -> Result<AggregatedContext> {
    let members: Vec<&ContextVector> = members.into_iter().collect();
    if members.is_empty() {
        return Err(Error::EmptyMemberList);
    }
    for m in &members {
        m.validate(schema)?;
    }

    let mut out = AggregatedContext::default();
    for spec in schema.factors() {
        let values = members.iter().filter_map(|m| m.get(&spec.name));
        match spec.kind {
            FactorKind::Numeric => {
                let mut xs: Vec<f64> = values
                    .filter_map(|v| match v {
                        FactorValue::Numeric(x) => Some(*x),
                        FactorValue::Categorical(_) => None,
                    })
                    .collect();
                if xs.is_empty() {
                    continue;
                }
                // Summation order fixed so the mean does not depend on member order.
                xs.sort_by(f64::total_cmp);
                let mean = xs.iter().sum::<f64>() / xs.len() as f64;
                out.factors
                    .insert(spec.name.clone(), AggregatedFactor::Numeric { mean });
            }
            FactorKind::Categorical => {
                let mut frequencies: BTreeMap<String, usize> = BTreeMap::new();
                for v in values {
                    if let FactorValue::Categorical(s) = v {
                        *frequencies.entry(s.clone()).or_default() += 1;
                    }
                }
                // BTreeMap iterates in ascending order, so the first maximum
                // is the lexicographically smallest.
                let Some(representative) = frequencies
                    .iter()
                    .fold(None::<(&String, usize)>, |best, (v, &c)| match best {
                        Some((_, bc)) if bc >= c => best,
                        _ => Some((v, c)),
                    })
                    .map(|(v, _)| v.clone())
                else {
                    continue;
                };
                out.factors.insert(
                    spec.name.clone(),
                    AggregatedFactor::Categorical {
                        representative,
                        frequencies,
                    },
                );
            }
        }
    }
    Ok(out)
}

pub fn compute_ranges<'a>(
    contexts: impl IntoIterator<Item = &'a ContextVector>,
    schema: &ContextSchema,
) -> FactorRanges {
    let mut ranges: BTreeMap<String, (f64, f64)> = BTreeMap::new();
    for ctx in contexts {
        for (name, value) in &ctx.assignments {
            let FactorValue::Numeric(x) = value else { continue };
            if schema.factor(name).map(|f| f.kind) != Some(FactorKind::Numeric) {
                continue;
            }
            ranges
                .entry(name.clone())
                .and_modify(|(lo, hi)| {
                    *lo = lo.min(*x);
                    *hi = hi.max(*x);
                })
                .or_insert((*x, *x));
        }
    }
    FactorRanges { ranges }
}
