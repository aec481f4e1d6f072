//! One function per subcommand. Each returns the text to print on standard
//! output; all file outputs go through atomic writes.

use std::fmt::Write as _;
use std::path::Path;

use sprintctl_core::experience::ingest_with;
use sprintctl_core::persist::{canonical_json, write_atomic};
use sprintctl_core::report::{write_evaluation_report, write_project_report};
use sprintctl_core::simulator::{evaluate, generate, read_ground_truth, EvaluationConfig, EvaluationReport};
use sprintctl_core::{
    build, ingest, similarity, BuildConfig, ContextSchema, ContextVector, ControlConfig, ControlEvent, Controller,
    Error, ExperienceBase, FactorValue, Grid, ReplanCause, ThresholdRule, TrackedProject,
};

use crate::cli::{
    BuildArgs, CauseArg, ContextArgs, ControlArgs, EvaluateArgs, IngestArgs, PlanArgs, ReplanArgs, ReportArgs,
    SimulateArgs, TrackArgs,
};
use crate::config::Defaults;
use crate::error::{CliError, CliResult};

fn fixed(x: f64) -> String {
    format!("{x:.6}")
}

fn push_events(out: &mut String, events: &[ControlEvent]) {
    for e in events {
        let _ = writeln!(out, "{e}");
    }
}

/// The attribute to work on: the requested one, or the only one in the base.
pub fn resolve_attribute(base: &ExperienceBase, requested: Option<&str>) -> CliResult<String> {
    match requested {
        Some(a) => {
            base.attribute(a)?;
            Ok(a.to_string())
        }
        None => {
            let mut names = base.attributes.keys();
            match (names.next(), names.next()) {
                (Some(only), None) => Ok(only.clone()),
                _ => Err(CliError::Usage(format!(
                    "the base holds attributes {:?}; pick one with --attribute",
                    base.attributes.keys().collect::<Vec<_>>()
                ))),
            }
        }
    }
}

pub fn read_context_file(path: &Path) -> CliResult<ContextVector> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| {
        Error::Parse {
            file: path.display().to_string(),
            line: e.line() as u64,
            message: format!("expected a JSON object of factor values: {e}"),
        }
        .into()
    })
}

/// Starts from `start` (or the `--context` file) and applies `--set` overrides,
/// parsing each value by the factor's declared kind.
fn context_from_args(args: &ContextArgs, start: ContextVector, schema: &ContextSchema) -> CliResult<ContextVector> {
    let mut context = match &args.context_file {
        Some(path) => read_context_file(path)?,
        None => start,
    };
    for (name, text) in &args.set {
        let spec = schema.factor(name).ok_or_else(|| Error::SchemaViolation {
            factor: name.clone(),
            reason: "not declared in the schema".into(),
        })?;
        let value = FactorValue::parse(spec.kind, text).ok_or_else(|| Error::SchemaViolation {
            factor: name.clone(),
            reason: format!("{text:?} is not a valid {} value", spec.kind),
        })?;
        context = context.with(name.clone(), value);
    }
    Ok(context)
}

fn control_from_args(args: &ControlArgs, defaults: &Defaults) -> ControlConfig {
    let d = defaults.control;
    ControlConfig {
        tolerance: args.tolerance.unwrap_or(d.tolerance),
        epsilon: args.epsilon.unwrap_or(d.epsilon),
        min_prefix_points: args.min_prefix_points.unwrap_or(d.min_prefix_points),
        hybrid_switch: args.hybrid_switch.unwrap_or(d.hybrid_switch),
        adaptation: args.adaptation.unwrap_or(d.adaptation),
        strategy: args.strategy.unwrap_or(d.strategy),
    }
}

pub fn ingest_cmd(args: &IngestArgs) -> CliResult<String> {
    let filter = (!args.attributes.is_empty()).then_some(args.attributes.as_slice());
    let set = ingest_with(&args.input.curves, &args.input.contexts, &args.input.schema, filter)?;
    let mut out = String::new();
    let _ = writeln!(out, "projects: {}", set.records.len());
    let _ = writeln!(out, "factors: {}", set.schema.factors().len());
    let mut per_attribute: std::collections::BTreeMap<&str, (usize, usize)> = Default::default();
    for r in &set.records {
        for (attribute, series) in &r.series {
            let entry = per_attribute.entry(attribute).or_default();
            entry.0 += 1;
            entry.1 += series.points.len();
        }
    }
    for (attribute, (series, points)) in per_attribute {
        let _ = writeln!(out, "attribute {attribute}: {series} series, {points} points");
    }
    Ok(out)
}

pub fn build_cmd(args: &BuildArgs, defaults: &Defaults) -> CliResult<String> {
    let set = ingest(&args.input.curves, &args.input.contexts, &args.input.schema)?;
    let rule = match (args.target_k, args.threshold) {
        (Some(k), None) => ThresholdRule::TargetClusters(k),
        (None, Some(theta)) => ThresholdRule::Fixed(theta),
        _ => return Err(CliError::Usage("give exactly one of --target-k and --threshold".into())),
    };
    let config = BuildConfig {
        grid: match args.grid {
            Some(g) => Grid::new(g)?,
            None => defaults.build.grid,
        },
        metric: args.metric.unwrap_or(defaults.build.metric),
        mode: args.mode.unwrap_or(defaults.build.mode),
        attributes: args.attributes.iter().map(|a| (a.clone(), rule)).collect(),
    };
    let base = build(&set.records, &set.schema, &config)?;
    base.save(&args.out)?;

    let mut out = String::new();
    for (attribute, model) in &base.attributes {
        let _ = writeln!(
            out,
            "{attribute}: {} clusters, threshold {}",
            model.clusters.len(),
            fixed(model.threshold)
        );
        for c in &model.clusters {
            let members: Vec<&str> = c.member_ids.iter().map(String::as_str).collect();
            let noun = if c.member_count == 1 { "member" } else { "members" };
            let _ = writeln!(
                out,
                "  cluster {}: {} {noun} ({})",
                c.cluster_id,
                c.member_count,
                members.join(", ")
            );
        }
    }
    let _ = writeln!(out, "wrote {} (fingerprint {})", args.out.display(), base.fingerprint()?);
    Ok(out)
}

pub fn plan_cmd(args: &PlanArgs, defaults: &Defaults) -> CliResult<String> {
    let base = ExperienceBase::load(&args.base)?;
    let attribute = resolve_attribute(&base, args.attribute.as_deref())?;
    let context = context_from_args(&args.context, ContextVector::new(), &base.schema)?;
    let controller = Controller::new(&base)?;
    let mut project = controller.plan_project(
        &args.id,
        &attribute,
        context,
        args.duration,
        control_from_args(&args.control, defaults),
    )?;
    project.base_path = Some(args.base.display().to_string());
    project.save(&args.out)?;

    let cluster = base.cluster(&attribute, project.selected_cluster_id)?;
    let score = similarity(&project.context, &cluster.context, &base.schema, &base.ranges)?;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "project {}: {attribute} planned with cluster {} of {} (similarity {})",
        project.project_id,
        project.selected_cluster_id,
        base.clusters(&attribute)?.len(),
        fixed(score)
    );
    push_events(&mut out, &project.events);
    let _ = writeln!(out, "wrote {}", args.out.display());
    Ok(out)
}

pub fn track_cmd(args: &TrackArgs) -> CliResult<String> {
    let mut project = TrackedProject::load(&args.project)?;
    let events = match (args.t, args.elapsed) {
        (Some(t), None) => project.record_actual(t, args.value)?,
        (None, Some(elapsed)) => project.record_elapsed(elapsed, args.value)?,
        _ => return Err(CliError::Usage("give exactly one of --t and --elapsed".into())),
    };
    project.save(&args.project)?;

    let (t, value) = *project.actuals.last().expect("measurement just recorded");
    let plan = project.plan_at(t);
    let tau = project.config.tolerance;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "t={} plan={} actual={} deviation={} corridor=[{}, {}]",
        fixed(t),
        fixed(plan),
        fixed(value),
        fixed(project.relative_deviation(t, value)),
        fixed(plan * (1.0 - tau)),
        fixed(plan * (1.0 + tau)),
    );
    if project.overrun {
        let _ = writeln!(out, "overrun: progress capped at t=1");
    }
    if events.is_empty() {
        let _ = writeln!(out, "within tolerance");
    }
    push_events(&mut out, &events);
    Ok(out)
}

pub fn replan_cmd(args: &ReplanArgs) -> CliResult<String> {
    let mut project = TrackedProject::load(&args.project)?;
    let base_path = match (&args.base, &project.base_path) {
        (Some(p), _) => p.clone(),
        (None, Some(p)) => p.into(),
        (None, None) => {
            return Err(CliError::Usage(
                "the project does not record its experience base; pass --base".into(),
            ))
        }
    };
    let base = ExperienceBase::load(&base_path)?;
    let has_context_flags = args.context.context_file.is_some() || !args.context.set.is_empty();
    let cause = match args.cause {
        CauseArg::WrongExperience if has_context_flags => {
            return Err(CliError::Usage(
                "wrong-experience keeps the project context; drop --context and --set".into(),
            ))
        }
        CauseArg::WrongExperience => ReplanCause::WrongExperience,
        CauseArg::WrongContext | CauseArg::ChangedCharacteristics if !has_context_flags => {
            return Err(CliError::Usage("this cause needs --context or --set".into()))
        }
        CauseArg::WrongContext => {
            ReplanCause::WrongContext(context_from_args(&args.context, project.context.clone(), &base.schema)?)
        }
        CauseArg::ChangedCharacteristics => ReplanCause::ChangedCharacteristics(context_from_args(
            &args.context,
            project.context.clone(),
            &base.schema,
        )?),
    };
    let old = project.selected_cluster_id;
    let events = Controller::new(&base)?.replan(&mut project, cause)?;
    project.save(&args.project)?;

    let mut out = String::new();
    let _ = writeln!(out, "cluster {old} -> {}", project.selected_cluster_id);
    push_events(&mut out, &events);
    Ok(out)
}

pub fn simulate_cmd(args: &SimulateArgs, defaults: &Defaults) -> CliResult<String> {
    let mut config = defaults.simulate.clone();
    config.seed = args.seed.unwrap_or(config.seed);
    config.n_archetypes = args.archetypes.unwrap_or(config.n_archetypes);
    config.n_train = args.train.unwrap_or(config.n_train);
    config.n_test = args.test.unwrap_or(config.n_test);
    config.n_context_factors = args.factors.unwrap_or(config.n_context_factors);
    config.value_noise = args.value_noise.unwrap_or(config.value_noise);
    config.context_noise = args.context_noise.unwrap_or(config.context_noise);
    config.flip_prob = args.flip_prob.unwrap_or(config.flip_prob);
    if let Some(g) = args.grid {
        config.grid = Grid::new(g)?;
    }
    config.mode = args.mode.unwrap_or(config.mode);
    if let Some(a) = &args.attribute {
        config.attribute = a.clone();
    }
    let portfolio = generate(&config)?;
    portfolio.write_files(&args.out)?;

    let mut out = String::new();
    let _ = writeln!(
        out,
        "seed {}: {} train and {} test projects from {} archetypes, {} context factors",
        config.seed,
        portfolio.train.len(),
        portfolio.test.len(),
        portfolio.archetypes.len(),
        portfolio.schema.factors().len()
    );
    for name in ["curves.csv", "contexts.csv", "test_curves.csv", "test_contexts.csv", "schema.json", "ground_truth.csv"]
    {
        let _ = writeln!(out, "wrote {}", args.out.join(name).display());
    }
    Ok(out)
}

pub fn evaluate_cmd(args: &EvaluateArgs, defaults: &Defaults) -> CliResult<String> {
    let base = ExperienceBase::load(&args.base)?;
    let attribute = resolve_attribute(&base, args.attribute.as_deref())?;
    let test = ingest_with(&args.test_curves, &args.test_contexts, &args.schema, None)?;
    let truth = read_ground_truth(&args.ground_truth)?;
    let config = EvaluationConfig {
        strategy: args.strategy,
        control: defaults.control,
        observe_until: args.observe_until,
    };
    let report = evaluate(&base, &attribute, &test.records, &truth, &config)?;
    let mut out = sprintctl_core::report::evaluation_summary(&report);
    if let Some(path) = &args.out {
        write_atomic(path, canonical_json(&report)?.as_bytes())?;
        let _ = writeln!(out, "wrote {}", path.display());
    }
    Ok(out)
}

pub fn report_cmd(args: &ReportArgs) -> CliResult<String> {
    let written = match (&args.project, &args.evaluation) {
        (Some(path), None) => write_project_report(&TrackedProject::load(path)?, &args.out)?,
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let report: EvaluationReport = serde_json::from_str(&text).map_err(|e| Error::Parse {
                file: path.display().to_string(),
                line: e.line() as u64,
                message: e.to_string(),
            })?;
            write_evaluation_report(&report, &args.out)?
        }
        _ => return Err(CliError::Usage("give exactly one of --project and --evaluation".into())),
    };
    Ok(written.iter().map(|p| format!("wrote {}\n", p.display())).collect())
}
