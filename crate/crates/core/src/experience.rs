//! Historical project data: CSV ingestion, experience-base construction
//! (resample, cluster, aggregate), and its persisted form.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::clustering::{cluster_curves, suggest_threshold, Cluster, ClusteringConfig, Dendrogram};
use crate::context::{compute_ranges, ContextSchema, ContextVector, FactorRanges, FactorValue};
use crate::curve::{resample, CharacteristicCurve, CurveMetric, CurveMode, Grid, RawSeries};
use crate::error::{Error, Result};
use crate::persist;

pub const FORMAT_VERSION: u32 = 1;
pub const FILE_KIND: &str = "experience-base";

pub const CURVES_HEADER: [&str; 4] = ["project_id", "attribute", "t", "value"];
pub const CONTEXTS_HEADER: [&str; 3] = ["project_id", "factor", "value"];

/// One historical project: its context and one series per measured attribute.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectRecord {
    pub project_id: String,
    pub context: ContextVector,
    pub series: BTreeMap<String, RawSeries>,
}

/// Records together with the schema their contexts were validated against.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectSet {
    pub schema: ContextSchema,
    pub records: Vec<ProjectRecord>,
}

pub fn read_schema(path: &Path) -> Result<ContextSchema> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        file: path.display().to_string(),
        line: e.line() as u64,
        message: e.to_string(),
    })
}

fn open_csv(path: &Path, expected: &[&str]) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers = reader.headers().map_err(|e| csv_error(path, e))?;
    if headers.iter().ne(expected.iter().copied()) {
        return Err(Error::Parse {
            file: path.display().to_string(),
            line: 1,
            message: format!(
                "expected header {:?}, found {:?}",
                expected.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    Ok(reader)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::Parse {
        file: path.display().to_string(),
        line,
        message: e.to_string(),
    }
}

fn parse_real(path: &Path, line: u64, column: &str, text: &str) -> Result<f64> {
    text.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Parse {
            file: path.display().to_string(),
            line,
            message: format!("column {column}: {text:?} is not a finite number"),
        })
}

/// Reads the curves, contexts and schema files into validated records.
pub fn ingest(curves_file: &Path, contexts_file: &Path, schema_file: &Path) -> Result<ProjectSet> {
    ingest_with(curves_file, contexts_file, schema_file, None)
}

/// Like [`ingest`], rejecting curve rows whose attribute is not in `attributes`.
/// attribute -> (t, value, source line)
type PointsByAttribute = BTreeMap<String, Vec<(f64, f64, u64)>>;

pub fn ingest_with(
    curves_file: &Path,
    contexts_file: &Path,
    schema_file: &Path,
    attributes: Option<&[String]>,
) -> Result<ProjectSet> {
    let schema = read_schema(schema_file)?;

    let mut points: BTreeMap<String, PointsByAttribute> = BTreeMap::new();
    let mut reader = open_csv(curves_file, &CURVES_HEADER)?;
    for row in reader.records() {
        let row = row.map_err(|e| csv_error(curves_file, e))?;
        let line = row.position().map_or(0, |p| p.line());
        let (project, attribute) = (&row[0], &row[1]);
        if project.is_empty() || attribute.is_empty() {
            return Err(Error::Parse {
                file: curves_file.display().to_string(),
                line,
                message: "project_id and attribute must be non-empty".into(),
            });
        }
        if let Some(allowed) = attributes {
            if !allowed.iter().any(|a| a == attribute) {
                return Err(Error::UnknownAttribute {
                    attribute: attribute.to_string(),
                });
            }
        }
        let t = parse_real(curves_file, line, "t", &row[2])?;
        let value = parse_real(curves_file, line, "value", &row[3])?;
        points
            .entry(project.to_string())
            .or_default()
            .entry(attribute.to_string())
            .or_default()
            .push((t, value, line));
    }

    let mut contexts: BTreeMap<String, ContextVector> = BTreeMap::new();
    let mut reader = open_csv(contexts_file, &CONTEXTS_HEADER)?;
    for row in reader.records() {
        let row = row.map_err(|e| csv_error(contexts_file, e))?;
        let line = row.position().map_or(0, |p| p.line());
        let (project, factor, text) = (&row[0], &row[1], &row[2]);
        let spec = schema.factor(factor).ok_or_else(|| {
            Error::schema(factor, format!("not declared in schema (line {line})"))
        })?;
        let value = FactorValue::parse(spec.kind, text).ok_or_else(|| {
            Error::schema(factor, format!("{text:?} is not a {} value (line {line})", spec.kind))
        })?;
        let ctx = contexts.entry(project.to_string()).or_default();
        if ctx.assignments.insert(factor.to_string(), value).is_some() {
            return Err(Error::DuplicateProject {
                project_id: project.to_string(),
                detail: format!("factor {factor:?} assigned twice (line {line})"),
            });
        }
    }

    let ids: BTreeSet<String> = points.keys().chain(contexts.keys()).cloned().collect();
    let mut records = Vec::with_capacity(ids.len());
    for project_id in ids {
        let mut series = BTreeMap::new();
        for (attribute, mut pts) in points.remove(&project_id).unwrap_or_default() {
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            if let Some(w) = pts.windows(2).find(|w| w[0].0 == w[1].0) {
                return Err(Error::MalformedSeries {
                    project_id,
                    attribute,
                    reason: format!("duplicate t={} (lines {} and {})", w[0].0, w[0].2, w[1].2),
                });
            }
            let mut s = RawSeries::new(&project_id, &attribute, pts.iter().map(|&(t, v, _)| (t, v)).collect());
            if s.normalize_time() {
                warn!("project {project_id} attribute {attribute}: time rescaled to [0, 1]");
            }
            s.check_points()?;
            series.insert(attribute, s);
        }
        let context = contexts.remove(&project_id).unwrap_or_default();
        context.validate(&schema)?;
        records.push(ProjectRecord {
            project_id,
            context,
            series,
        });
    }
    Ok(ProjectSet { schema, records })
}

/// Writes records in the ingestible CSV layout.
pub fn write_curves_csv<W: std::io::Write>(records: &[ProjectRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::io("<curves csv>", std::io::Error::other(e.to_string()));
    w.write_record(CURVES_HEADER).map_err(io)?;
    for r in records {
        for s in r.series.values() {
            for &(t, v) in &s.points {
                w.write_record([&r.project_id, &s.attribute, &t.to_string(), &v.to_string()])
                    .map_err(io)?;
            }
        }
    }
    w.flush().map_err(|e| Error::io("<curves csv>", e))
}

pub fn write_contexts_csv<W: std::io::Write>(records: &[ProjectRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::io("<contexts csv>", std::io::Error::other(e.to_string()));
    w.write_record(CONTEXTS_HEADER).map_err(io)?;
    for r in records {
        for (factor, value) in &r.context.assignments {
            w.write_record([&r.project_id, factor, &value.to_string()]).map_err(io)?;
        }
    }
    w.flush().map_err(|e| Error::io("<contexts csv>", e))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdRule {
    /// Use this threshold as is.
    Fixed(f64),
    /// Derive the threshold that yields this many clusters.
    TargetClusters(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct BuildConfig {
    pub grid: Grid,
    pub metric: CurveMetric,
    pub mode: CurveMode,
    pub attributes: BTreeMap<String, ThresholdRule>,
}

impl BuildConfig {
    pub fn new(attribute: impl Into<String>, rule: ThresholdRule) -> Self {
        Self {
            grid: Grid::default(),
            metric: CurveMetric::default(),
            mode: CurveMode::default(),
            attributes: [(attribute.into(), rule)].into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributeModel {
    pub threshold: f64,
    pub clusters: Vec<Cluster>,
    pub dendrogram: Dendrogram,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperienceBase {
    pub format_version: u32,
    pub schema: ContextSchema,
    pub grid: Grid,
    pub metric: CurveMetric,
    pub mode: CurveMode,
    pub ranges: FactorRanges,
    pub attributes: BTreeMap<String, AttributeModel>,
    pub provenance: Vec<String>,
}

impl ExperienceBase {
    pub fn attribute(&self, attribute: &str) -> Result<&AttributeModel> {
        self.attributes.get(attribute).ok_or_else(|| Error::UnknownAttribute {
            attribute: attribute.to_string(),
        })
    }

    pub fn clusters(&self, attribute: &str) -> Result<&[Cluster]> {
        let clusters = &self.attribute(attribute)?.clusters;
        if clusters.is_empty() {
            return Err(Error::NoClusters {
                attribute: attribute.to_string(),
            });
        }
        Ok(clusters)
    }

    pub fn cluster(&self, attribute: &str, cluster_id: usize) -> Result<&Cluster> {
        self.attribute(attribute)?
            .clusters
            .iter()
            .find(|c| c.cluster_id == cluster_id)
            .ok_or_else(|| Error::UnknownCluster {
                attribute: attribute.to_string(),
                cluster_id,
            })
    }

    /// Pointwise mean of every training curve for `attribute`, recovered
    /// from the cluster curves weighted by member count.
    pub fn global_mean_curve(&self, attribute: &str) -> Result<CharacteristicCurve> {
        let clusters = self.clusters(attribute)?;
        let total: usize = clusters.iter().map(|c| c.member_count).sum();
        let mut values = vec![0.0; self.grid.size()];
        for c in clusters {
            for (acc, v) in values.iter_mut().zip(&c.cluster_curve.values) {
                *acc += v * c.member_count as f64;
            }
        }
        values.iter_mut().for_each(|v| *v /= total as f64);
        CharacteristicCurve::new("global-mean", attribute, self.mode, values)
    }

    /// Content hash of the canonical serialization.
    pub fn fingerprint(&self) -> Result<String> {
        Ok(persist::sha256_hex(persist::canonical_json(self)?.as_bytes()))
    }

    pub fn to_canonical_string(&self) -> Result<String> {
        persist::encode(FILE_KIND, FORMAT_VERSION, self)
    }

    pub fn from_canonical_str(text: &str) -> Result<Self> {
        persist::decode(FILE_KIND, FORMAT_VERSION, text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        persist::save(FILE_KIND, FORMAT_VERSION, self, path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        persist::load(FILE_KIND, FORMAT_VERSION, path)
    }
}

/// Resamples each record's series for `attribute` onto the grid.
pub fn characteristic_curves(
    records: &[ProjectRecord],
    attribute: &str,
    grid: Grid,
    mode: CurveMode,
) -> Result<Vec<CharacteristicCurve>> {
    records
        .iter()
        .map(|r| {
            let series = r.series.get(attribute).ok_or_else(|| Error::MissingAttribute {
                project_id: r.project_id.clone(),
                attribute: attribute.to_string(),
            })?;
            resample(series, grid, mode)
        })
        .collect()
}

pub fn build(records: &[ProjectRecord], schema: &ContextSchema, config: &BuildConfig) -> Result<ExperienceBase> {
    if records.is_empty() {
        return Err(Error::InvalidConfig("building an experience base needs at least one record".into()));
    }
    if config.attributes.is_empty() {
        return Err(Error::InvalidConfig("no attribute configured".into()));
    }
    let mut records: Vec<&ProjectRecord> = records.iter().collect();
    records.sort_by(|a, b| a.project_id.cmp(&b.project_id));
    if let Some(w) = records.windows(2).find(|w| w[0].project_id == w[1].project_id) {
        return Err(Error::DuplicateProject {
            project_id: w[0].project_id.clone(),
            detail: "appears twice in the build input".into(),
        });
    }
    for r in &records {
        r.context.validate(schema)?;
    }
    let owned: Vec<ProjectRecord> = records.iter().map(|r| (*r).clone()).collect();
    let contexts: BTreeMap<String, ContextVector> =
        owned.iter().map(|r| (r.project_id.clone(), r.context.clone())).collect();

    let mut attributes = BTreeMap::new();
    for (attribute, rule) in &config.attributes {
        let curves = characteristic_curves(&owned, attribute, config.grid, config.mode)?;
        let threshold = match *rule {
            ThresholdRule::Fixed(theta) => theta,
            ThresholdRule::TargetClusters(k) => suggest_threshold(&curves, k, config.metric)?,
        };
        let clustering = ClusteringConfig::new(threshold, config.metric)?;
        let (clusters, dendrogram) = cluster_curves(&curves, &contexts, &clustering, schema)?;
        attributes.insert(
            attribute.clone(),
            AttributeModel {
                threshold,
                clusters,
                dendrogram,
            },
        );
    }

    Ok(ExperienceBase {
        format_version: FORMAT_VERSION,
        schema: schema.clone(),
        grid: config.grid,
        metric: config.metric,
        mode: config.mode,
        ranges: compute_ranges(contexts.values(), schema),
        attributes,
        provenance: contexts.into_keys().collect(),
    })
}
