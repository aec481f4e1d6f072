//! Synthetic project portfolios drawn from latent archetypes, and an
//! evaluation harness that runs planning and selection on held-out projects.
//!
//! Each archetype has an S-shaped cumulative base curve and a fully assigned
//! context template. Projects copy their archetype with multiplicative
//! Gaussian noise on the curve and on numeric factors, and random flips of
//! categorical factors. Everything is a pure function of the seed.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::context::{ContextSchema, ContextVector, FactorKind, FactorSpec, FactorValue};
use crate::controller::{ControlConfig, Controller, SelectionStrategy};
use crate::curve::{resample, CurveMode, Grid, RawSeries};
use crate::error::{Error, Result};
use crate::experience::{write_contexts_csv, write_curves_csv, ExperienceBase, ProjectRecord};
use crate::persist;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub n_archetypes: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub n_context_factors: usize,
    /// Relative standard deviation of per-grid-point curve noise.
    pub value_noise: f64,
    /// Relative standard deviation of numeric context noise.
    pub context_noise: f64,
    /// Probability that a categorical factor is replaced by another value.
    pub flip_prob: f64,
    pub grid: Grid,
    pub mode: CurveMode,
    pub attribute: String,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            n_archetypes: 5,
            n_train: 17,
            n_test: 4,
            n_context_factors: 10,
            value_noise: 0.05,
            context_noise: 0.05,
            flip_prob: 0.1,
            grid: Grid::default(),
            mode: CurveMode::Cumulative,
            attribute: "effort".to_string(),
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.n_archetypes == 0 || self.n_train == 0 || self.n_context_factors == 0 {
            return bad("archetype, training and factor counts must be positive");
        }
        if !(self.value_noise >= 0.0 && self.value_noise.is_finite())
            || !(self.context_noise >= 0.0 && self.context_noise.is_finite())
        {
            return bad("noise levels must be finite and non-negative");
        }
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return bad("flip_prob must lie in [0, 1]");
        }
        if self.attribute.is_empty() {
            return bad("attribute name must be non-empty");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Archetype {
    pub archetype_id: usize,
    pub base_curve: Vec<f64>,
    pub context_template: ContextVector,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Portfolio {
    pub config: GeneratorConfig,
    pub schema: ContextSchema,
    pub archetypes: Vec<Archetype>,
    pub train: Vec<ProjectRecord>,
    pub test: Vec<ProjectRecord>,
    /// Archetype of every train and test project.
    pub ground_truth: BTreeMap<String, usize>,
}

fn categorical_count(n_factors: usize) -> usize {
    n_factors.div_ceil(2)
}

fn factor_names(n_factors: usize) -> Vec<(String, FactorKind)> {
    let n_cat = categorical_count(n_factors);
    (0..n_cat)
        .map(|i| (format!("cat_{i}"), FactorKind::Categorical))
        .chain((0..n_factors - n_cat).map(|i| (format!("num_{i}"), FactorKind::Numeric)))
        .collect()
}

/// Logistic curve rescaled to run from 0 at t = 0 to `scale` at t = 1.
fn s_curve(t: f64, midpoint: f64, steepness: f64, scale: f64) -> f64 {
    let sigma = |x: f64| 1.0 / (1.0 + (-steepness * (x - midpoint)).exp());
    let (lo, hi) = (sigma(0.0), sigma(1.0));
    scale * (sigma(t) - lo) / (hi - lo)
}

fn token(i: usize) -> String {
    format!("v{i}")
}

fn make_archetypes(config: &GeneratorConfig, rng: &mut ChaCha8Rng) -> Vec<Archetype> {
    let k = config.n_archetypes;
    let vocabulary = k + 1;
    let factors = factor_names(config.n_context_factors);
    // Per categorical factor, a random assignment of distinct tokens to archetypes.
    let token_maps: Vec<Vec<usize>> = factors
        .iter()
        .map(|_| {
            let mut ids: Vec<usize> = (0..vocabulary).collect();
            ids.shuffle(rng);
            ids
        })
        .collect();

    (0..k)
        .map(|a| {
            let spread = if k > 1 { a as f64 / (k - 1) as f64 } else { 0.5 };
            let midpoint = 0.2 + 0.6 * spread + rng.random_range(-0.02..0.02);
            let steepness = rng.random_range(9.0..13.0);
            let scale = 100.0 * (1.0 + 0.3 * a as f64) * rng.random_range(0.97..1.03);
            let base_curve = config
                .grid
                .positions()
                .map(|t| s_curve(t, midpoint, steepness, scale))
                .collect();
            let mut context_template = ContextVector::new();
            for (j, (name, kind)) in factors.iter().enumerate() {
                let value = match kind {
                    FactorKind::Categorical => FactorValue::Categorical(token(token_maps[j][a])),
                    FactorKind::Numeric => FactorValue::Numeric(rng.random_range(10.0..100.0)),
                };
                context_template = context_template.with(name.clone(), value);
            }
            Archetype {
                archetype_id: a,
                base_curve,
                context_template,
            }
        })
        .collect()
}

fn draw_project(
    project_id: String,
    archetype: &Archetype,
    config: &GeneratorConfig,
    rng: &mut ChaCha8Rng,
) -> Result<ProjectRecord> {
    let value_noise =
        Normal::new(0.0, config.value_noise).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let context_noise =
        Normal::new(0.0, config.context_noise).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let vocabulary = config.n_archetypes + 1;

    let mut running_max = f64::NEG_INFINITY;
    let curve: Vec<f64> = archetype
        .base_curve
        .iter()
        .map(|&v| {
            let noisy = v * (1.0 + value_noise.sample(rng));
            match config.mode {
                CurveMode::Cumulative => {
                    running_max = running_max.max(noisy).max(0.0);
                    running_max
                }
                CurveMode::Raw => noisy,
            }
        })
        .collect();
    // Cumulative curves are stored as per-period increments, which is what
    // cumulative resampling accumulates back.
    let stored: Vec<f64> = match config.mode {
        CurveMode::Raw => curve,
        CurveMode::Cumulative => curve
            .iter()
            .enumerate()
            .map(|(k, &v)| if k == 0 { v } else { v - curve[k - 1] })
            .collect(),
    };
    let points = config.grid.positions().zip(stored).collect();

    let mut context = ContextVector::new();
    for (name, value) in &archetype.context_template.assignments {
        let value = match value {
            FactorValue::Numeric(x) => FactorValue::Numeric(x * (1.0 + context_noise.sample(rng))),
            FactorValue::Categorical(s) => {
                if rng.random_bool(config.flip_prob) {
                    let others: Vec<String> = (0..vocabulary).map(token).filter(|t| t != s).collect();
                    FactorValue::Categorical(others[rng.random_range(0..others.len())].clone())
                } else {
                    FactorValue::Categorical(s.clone())
                }
            }
        };
        context = context.with(name.clone(), value);
    }

    Ok(ProjectRecord {
        series: [(
            config.attribute.clone(),
            RawSeries::new(&project_id, &config.attribute, points),
        )]
        .into(),
        project_id,
        context,
    })
}

fn project_id(prefix: char, i: usize, n: usize) -> String {
    let width = n.to_string().len().max(2);
    format!("{prefix}{:0width$}", i + 1)
}

pub fn generate(config: &GeneratorConfig) -> Result<Portfolio> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let archetypes = make_archetypes(config, &mut rng);
    let schema = ContextSchema::new(
        factor_names(config.n_context_factors)
            .into_iter()
            .map(|(name, kind)| FactorSpec::new(name, kind))
            .collect(),
    )?;

    let mut ground_truth = BTreeMap::new();
    let mut train = Vec::with_capacity(config.n_train);
    for i in 0..config.n_train {
        // Round robin first so every archetype is represented, then random.
        let a = if i < config.n_archetypes {
            i
        } else {
            rng.random_range(0..config.n_archetypes)
        };
        let id = project_id('P', i, config.n_train);
        ground_truth.insert(id.clone(), a);
        train.push(draw_project(id, &archetypes[a], config, &mut rng)?);
    }
    let mut test = Vec::with_capacity(config.n_test);
    for i in 0..config.n_test {
        let a = rng.random_range(0..config.n_archetypes);
        let id = project_id('T', i, config.n_test);
        ground_truth.insert(id.clone(), a);
        test.push(draw_project(id, &archetypes[a], config, &mut rng)?);
    }

    Ok(Portfolio {
        config: config.clone(),
        schema,
        archetypes,
        train,
        test,
        ground_truth,
    })
}

pub const GROUND_TRUTH_HEADER: [&str; 3] = ["project_id", "archetype", "split"];

impl Portfolio {
    /// Writes the files the ingestion path reads: `curves.csv`,
    /// `contexts.csv`, `test_curves.csv`, `test_contexts.csv`, `schema.json`
    /// and `ground_truth.csv`.
    pub fn write_files(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let create = |name: &str| {
            let path = dir.join(name);
            File::create(&path).map_err(|e| Error::io(path, e))
        };
        write_curves_csv(&self.train, create("curves.csv")?)?;
        write_contexts_csv(&self.train, create("contexts.csv")?)?;
        write_curves_csv(&self.test, create("test_curves.csv")?)?;
        write_contexts_csv(&self.test, create("test_contexts.csv")?)?;
        persist::write_atomic(&dir.join("schema.json"), persist::canonical_json(&self.schema)?.as_bytes())?;

        let mut w = csv::Writer::from_writer(create("ground_truth.csv")?);
        let io = |e: csv::Error| Error::io(dir.join("ground_truth.csv"), std::io::Error::other(e.to_string()));
        w.write_record(GROUND_TRUTH_HEADER).map_err(io)?;
        for (split, records) in [("train", &self.train), ("test", &self.test)] {
            for r in records {
                let a = self.ground_truth[&r.project_id];
                w.write_record([r.project_id.as_str(), &a.to_string(), split]).map_err(io)?;
            }
        }
        w.flush().map_err(|e| Error::io(dir.join("ground_truth.csv"), e))
    }
}

pub fn read_ground_truth(path: &Path) -> Result<BTreeMap<String, usize>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let parse_err = |line: u64, message: String| Error::Parse {
        file: path.display().to_string(),
        line,
        message,
    };
    let headers = reader.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    if headers.len() < 2 || &headers[0] != "project_id" || &headers[1] != "archetype" {
        return Err(parse_err(1, "expected header project_id,archetype[,split]".into()));
    }
    let mut out = BTreeMap::new();
    for row in reader.records() {
        let row = row.map_err(|e| parse_err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = row.position().map_or(0, |p| p.line());
        let archetype = row[1]
            .parse()
            .map_err(|_| parse_err(line, format!("archetype {:?} is not an integer", &row[1])))?;
        if out.insert(row[0].to_string(), archetype).is_some() {
            return Err(Error::DuplicateProject {
                project_id: row[0].to_string(),
                detail: format!("listed twice in ground truth (line {line})"),
            });
        }
    }
    Ok(out)
}

fn choose2(n: usize) -> f64 {
    (n * n.saturating_sub(1)) as f64 / 2.0
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(truth: &[usize], predicted: &[usize]) -> f64 {
    assert_eq!(truth.len(), predicted.len(), "labelings must cover the same items");
    let n = truth.len();
    let mut table: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut rows: BTreeMap<usize, usize> = BTreeMap::new();
    let mut cols: BTreeMap<usize, usize> = BTreeMap::new();
    for (&t, &p) in truth.iter().zip(predicted) {
        *table.entry((t, p)).or_default() += 1;
        *rows.entry(t).or_default() += 1;
        *cols.entry(p).or_default() += 1;
    }
    let index: f64 = table.values().map(|&c| choose2(c)).sum();
    let sum_rows: f64 = rows.values().map(|&c| choose2(c)).sum();
    let sum_cols: f64 = cols.values().map(|&c| choose2(c)).sum();
    let total = choose2(n);
    if total == 0.0 {
        return 1.0;
    }
    let expected = sum_rows * sum_cols / total;
    let max = (sum_rows + sum_cols) / 2.0;
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationConfig {
    pub strategy: SelectionStrategy,
    pub control: ControlConfig,
    /// Progress up to which test actuals are fed before dynamic or hybrid selection.
    pub observe_until: f64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            strategy: SelectionStrategy::Static,
            control: ControlConfig::default(),
            observe_until: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectEvaluation {
    pub project_id: String,
    pub true_archetype: usize,
    pub selected_cluster: usize,
    pub cluster_archetype: Option<usize>,
    pub correct: bool,
    /// Mean absolute deviation of the selected cluster curve from the actual curve.
    pub mad: f64,
    /// Same for the mean curve of all training projects.
    pub baseline_mad: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub attribute: String,
    pub strategy: SelectionStrategy,
    pub n_clusters: usize,
    pub train_ari: f64,
    pub selection_correct: usize,
    pub selection_total: usize,
    pub selection_accuracy: f64,
    pub mean_mad: f64,
    pub mean_baseline_mad: f64,
    pub projects: Vec<ProjectEvaluation>,
}

fn mean_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

/// Plans every test project, selects a cluster per `config.strategy`, and
/// scores the choice against ground truth and a global-mean baseline.
pub fn evaluate(
    base: &ExperienceBase,
    attribute: &str,
    test: &[ProjectRecord],
    ground_truth: &BTreeMap<String, usize>,
    config: &EvaluationConfig,
) -> Result<EvaluationReport> {
    let clusters = base.clusters(attribute)?;
    let controller = Controller::new(base)?;
    let baseline = base.global_mean_curve(attribute)?;

    // Ground-truth label of each cluster: majority archetype of its members.
    let cluster_archetype: BTreeMap<usize, Option<usize>> = clusters
        .iter()
        .map(|c| {
            let mut votes: BTreeMap<usize, usize> = BTreeMap::new();
            for m in &c.member_ids {
                if let Some(&a) = ground_truth.get(m) {
                    *votes.entry(a).or_default() += 1;
                }
            }
            let label = votes
                .iter()
                .fold(None::<(usize, usize)>, |best, (&a, &n)| match best {
                    Some((_, bn)) if bn >= n => best,
                    _ => Some((a, n)),
                })
                .map(|(a, _)| a);
            (c.cluster_id, label)
        })
        .collect();

    let (mut truth, mut predicted) = (Vec::new(), Vec::new());
    for c in clusters {
        for m in &c.member_ids {
            if let Some(&a) = ground_truth.get(m) {
                truth.push(a);
                predicted.push(c.cluster_id);
            }
        }
    }
    let train_ari = adjusted_rand_index(&truth, &predicted);

    let control = ControlConfig {
        strategy: config.strategy,
        ..config.control
    };
    let mut projects = Vec::with_capacity(test.len());
    for record in test {
        let true_archetype = *ground_truth.get(&record.project_id).ok_or_else(|| Error::MissingContext {
            project_id: record.project_id.clone(),
        })?;
        let series = record.series.get(attribute).ok_or_else(|| Error::MissingAttribute {
            project_id: record.project_id.clone(),
            attribute: attribute.to_string(),
        })?;
        let actual = resample(series, base.grid, base.mode)?;

        let mut tracked = controller.plan_project(&record.project_id, attribute, record.context.clone(), 1.0, control)?;
        let selected = match config.strategy {
            SelectionStrategy::Static => tracked.selected_cluster_id,
            strategy => {
                for (k, t) in base.grid.positions().enumerate() {
                    if t > config.observe_until {
                        break;
                    }
                    tracked.record_actual(t, actual.values[k])?;
                }
                match strategy {
                    SelectionStrategy::Dynamic => match controller.select_dynamic(&tracked) {
                        Ok(id) => id,
                        Err(Error::InsufficientPrefix { .. } | Error::EmptyPrefix { .. }) => tracked.selected_cluster_id,
                        Err(e) => return Err(e),
                    },
                    _ => controller.select_hybrid(&tracked)?.0,
                }
            }
        };
        let curve = &base.cluster(attribute, selected)?.cluster_curve;
        let label = cluster_archetype.get(&selected).copied().flatten();
        projects.push(ProjectEvaluation {
            project_id: record.project_id.clone(),
            true_archetype,
            selected_cluster: selected,
            cluster_archetype: label,
            correct: label == Some(true_archetype),
            mad: mean_abs_diff(&curve.values, &actual.values),
            baseline_mad: mean_abs_diff(&baseline.values, &actual.values),
        });
    }

    let total = projects.len();
    let correct = projects.iter().filter(|p| p.correct).count();
    let mean = |f: fn(&ProjectEvaluation) -> f64| {
        if total == 0 {
            0.0
        } else {
            projects.iter().map(f).sum::<f64>() / total as f64
        }
    };
    Ok(EvaluationReport {
        attribute: attribute.to_string(),
        strategy: config.strategy,
        n_clusters: clusters.len(),
        train_ari,
        selection_correct: correct,
        selection_total: total,
        selection_accuracy: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
        mean_mad: mean(|p| p.mad),
        mean_baseline_mad: mean(|p| p.baseline_mad),
        projects,
    })
}
