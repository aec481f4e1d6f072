//! Online control of a running project against a cluster-curve prediction.
//!
//! A [`TrackedProject`] is planned from the experience base by context
//! similarity, fed actual measurements, and raises events when a measurement
//! leaves the tolerance corridor around the prediction. Reselection only
//! happens through an explicit [`Controller::replan`] carrying a cause.

use std::fmt;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::clustering::Cluster;
use crate::context::{similarity, ContextVector};
use crate::curve::{interpolate, lowercase_enum_text, slice_distance, CharacteristicCurve};
use crate::error::{Error, Result};
use crate::experience::ExperienceBase;
use crate::persist;

pub const FORMAT_VERSION: u32 = 1;
pub const FILE_KIND: &str = "tracked-project";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionStrategy {
    Static,
    Dynamic,
    #[default]
    Hybrid,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Adaptation {
    #[default]
    Rescale,
    Shift,
    None,
}

lowercase_enum_text!(SelectionStrategy { Static => "static", Dynamic => "dynamic", Hybrid => "hybrid" });
lowercase_enum_text!(Adaptation { Rescale => "rescale", Shift => "shift", None => "none" });

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlConfig {
    /// Relative deviation tolerated before a deviation event fires.
    pub tolerance: f64,
    /// Floor for `|plan|` in the relative deviation denominator.
    pub epsilon: f64,
    pub min_prefix_points: usize,
    /// Progress from which hybrid selection trusts the dynamic choice.
    pub hybrid_switch: f64,
    pub adaptation: Adaptation,
    pub strategy: SelectionStrategy,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            tolerance: 0.2,
            epsilon: 1e-9,
            min_prefix_points: 3,
            hybrid_switch: 0.3,
            adaptation: Adaptation::Rescale,
            strategy: SelectionStrategy::Hybrid,
        }
    }
}

impl ControlConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return bad(format!("tolerance must be positive, got {}", self.tolerance));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.min_prefix_points == 0 {
            return bad("min_prefix_points must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.hybrid_switch) {
            return bad(format!("hybrid_switch must lie in [0, 1], got {}", self.hybrid_switch));
        }
        Ok(())
    }
}

/// Why a replan was requested.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "cause", content = "context")]
pub enum ReplanCause {
    /// The experience behind the current cluster curve does not fit.
    WrongExperience,
    /// The project was characterized wrongly; this is the corrected context.
    WrongContext(ContextVector),
    /// The project itself changed; this is its updated context.
    ChangedCharacteristics(ContextVector),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplanReason {
    Initial,
    WrongExperience,
    WrongContext,
    ChangedCharacteristics,
}

impl From<&ReplanCause> for ReplanReason {
    fn from(cause: &ReplanCause) -> Self {
        match cause {
            ReplanCause::WrongExperience => ReplanReason::WrongExperience,
            ReplanCause::WrongContext(_) => ReplanReason::WrongContext,
            ReplanCause::ChangedCharacteristics(_) => ReplanReason::ChangedCharacteristics,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum EventKind {
    DeviationDetected {
        plan: f64,
        actual: f64,
        deviation: f64,
        tolerance: f64,
    },
    SelectionConflict {
        static_cluster: usize,
        dynamic_cluster: usize,
        chosen: usize,
    },
    Replanned {
        old_cluster: Option<usize>,
        new_cluster: usize,
        cause: ReplanReason,
        no_alternative: bool,
    },
    PredictionAdapted {
        method: Adaptation,
        factor: Option<f64>,
        offset: Option<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlEvent {
    pub at_progress: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

impl fmt::Display for ControlEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t={:.4} ", self.at_progress)?;
        match &self.kind {
            EventKind::DeviationDetected {
                plan,
                actual,
                deviation,
                tolerance,
            } => write!(
                f,
                "DeviationDetected plan={plan:.6} actual={actual:.6} deviation={deviation:.6} tolerance={tolerance:.6}"
            ),
            EventKind::SelectionConflict {
                static_cluster,
                dynamic_cluster,
                chosen,
            } => write!(
                f,
                "SelectionConflict static={static_cluster} dynamic={dynamic_cluster} chosen={chosen}"
            ),
            EventKind::Replanned {
                old_cluster,
                new_cluster,
                cause,
                no_alternative,
            } => {
                let old = old_cluster.map_or_else(|| "none".to_string(), |c| c.to_string());
                let cause = serde_json::to_value(cause)
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_owned))
                    .unwrap_or_default();
                write!(f, "Replanned {old}->{new_cluster} cause={cause}")?;
                if *no_alternative {
                    f.write_str(" no_alternative")?;
                }
                Ok(())
            }
            EventKind::PredictionAdapted {
                method,
                factor,
                offset,
            } => {
                write!(f, "PredictionAdapted method={method}")?;
                if let Some(x) = factor {
                    write!(f, " factor={x:.6}")?;
                }
                if let Some(x) = offset {
                    write!(f, " offset={x:.6}")?;
                }
                Ok(())
            }
        }
    }
}

/// Live state of one project under control.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackedProject {
    pub format_version: u32,
    pub project_id: String,
    pub attribute: String,
    pub context: ContextVector,
    pub planned_duration: f64,
    /// Fingerprint of the experience base this project was planned against.
    pub base_fingerprint: String,
    /// Where that base was loaded from, when known.
    #[serde(default)]
    pub base_path: Option<String>,
    pub selected_cluster_id: usize,
    pub prediction: CharacteristicCurve,
    pub actuals: Vec<(f64, f64)>,
    pub events: Vec<ControlEvent>,
    pub config: ControlConfig,
    /// Set once a measurement arrived after the planned duration.
    #[serde(default)]
    pub overrun: bool,
}

impl TrackedProject {
    pub fn progress(&self) -> f64 {
        self.actuals.last().map_or(0.0, |&(t, _)| t)
    }

    /// Planned value at normalized time `t`.
    pub fn plan_at(&self, t: f64) -> f64 {
        self.prediction.value_at(t)
    }

    /// Relative deviation of `value` from the plan at `t`.
    pub fn relative_deviation(&self, t: f64, value: f64) -> f64 {
        let plan = self.plan_at(t);
        (value - plan).abs() / plan.abs().max(self.config.epsilon)
    }

    /// Appends a measurement at normalized time `t` and checks it against the corridor.
    pub fn record_actual(&mut self, t: f64, value: f64) -> Result<Vec<ControlEvent>> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::OutOfRangeTime { t });
        }
        if !value.is_finite() {
            return Err(Error::InvalidConfig(format!("measurement value must be finite, got {value}")));
        }
        if let Some(&(last, _)) = self.actuals.last() {
            if t <= last {
                return Err(Error::NonMonotoneTime { t, last });
            }
        }
        self.actuals.push((t, value));
        let plan = self.plan_at(t);
        let deviation = self.relative_deviation(t, value);
        let mut events = Vec::new();
        if deviation > self.config.tolerance {
            events.push(ControlEvent {
                at_progress: t,
                kind: EventKind::DeviationDetected {
                    plan,
                    actual: value,
                    deviation,
                    tolerance: self.config.tolerance,
                },
            });
        }
        self.events.extend(events.iter().cloned());
        Ok(events)
    }

    /// Records a measurement taken `elapsed` calendar units after the start.
    /// Progress beyond the planned duration is capped at 1 and flagged.
    pub fn record_elapsed(&mut self, elapsed: f64, value: f64) -> Result<Vec<ControlEvent>> {
        if !(elapsed.is_finite() && elapsed >= 0.0) {
            return Err(Error::OutOfRangeTime { t: elapsed });
        }
        let mut t = elapsed / self.planned_duration;
        if t > 1.0 {
            warn!(
                "project {}: measurement at {elapsed} exceeds planned duration {}",
                self.project_id, self.planned_duration
            );
            t = 1.0;
            self.overrun = true;
        }
        self.record_actual(t, value)
    }

    /// Event log as one canonical JSON document per line.
    pub fn event_log(&self) -> Result<String> {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).map_err(|e| Error::InvalidConfig(e.to_string()))?);
            out.push('\n');
        }
        Ok(out)
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

/// Steers tracked projects against one (read-only) experience base.
#[derive(Debug)]
pub struct Controller<'a> {
    base: &'a ExperienceBase,
    fingerprint: String,
}

impl<'a> Controller<'a> {
    pub fn new(base: &'a ExperienceBase) -> Result<Self> {
        Ok(Self {
            base,
            fingerprint: base.fingerprint()?,
        })
    }

    pub fn base(&self) -> &ExperienceBase {
        self.base
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    fn check_base(&self, project: &TrackedProject) -> Result<()> {
        if project.base_fingerprint != self.fingerprint {
            return Err(Error::BaseMismatch {
                expected: project.base_fingerprint.clone(),
                found: self.fingerprint.clone(),
            });
        }
        Ok(())
    }

    fn prediction_from(&self, cluster: &Cluster, project_id: &str) -> CharacteristicCurve {
        CharacteristicCurve {
            project_id: project_id.to_string(),
            ..cluster.cluster_curve.clone()
        }
    }

    /// Initial planning: pick the cluster whose aggregated context is most
    /// similar to `context` and adopt its curve as the prediction.
    pub fn plan_project(
        &self,
        project_id: &str,
        attribute: &str,
        context: ContextVector,
        planned_duration: f64,
        config: ControlConfig,
    ) -> Result<TrackedProject> {
        config.validate()?;
        if !(planned_duration.is_finite() && planned_duration > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "planned duration must be positive, got {planned_duration}"
            )));
        }
        context.validate(&self.base.schema)?;
        let clusters = self.base.clusters(attribute)?;
        let chosen = self.static_choice(clusters, &context, None)?;
        let cluster = clusters.iter().find(|c| c.cluster_id == chosen).expect("chosen from list");
        Ok(TrackedProject {
            format_version: FORMAT_VERSION,
            project_id: project_id.to_string(),
            attribute: attribute.to_string(),
            context,
            planned_duration,
            base_fingerprint: self.fingerprint.clone(),
            base_path: None,
            selected_cluster_id: chosen,
            prediction: self.prediction_from(cluster, project_id),
            actuals: Vec::new(),
            events: vec![ControlEvent {
                at_progress: 0.0,
                kind: EventKind::Replanned {
                    old_cluster: None,
                    new_cluster: chosen,
                    cause: ReplanReason::Initial,
                    no_alternative: false,
                },
            }],
            config,
            overrun: false,
        })
    }

    /// Argmax of context similarity; ties go to the larger cluster, then the smaller id.
    fn static_choice(&self, clusters: &[Cluster], context: &ContextVector, exclude: Option<usize>) -> Result<usize> {
        let mut best: Option<(f64, usize, usize)> = None;
        for c in clusters.iter().filter(|c| Some(c.cluster_id) != exclude) {
            let s = similarity(context, &c.context, &self.base.schema, &self.base.ranges)?;
            let better = match best {
                None => true,
                Some((bs, bm, bid)) => {
                    s > bs || (s == bs && (c.member_count > bm || (c.member_count == bm && c.cluster_id < bid)))
                }
            };
            if better {
                best = Some((s, c.member_count, c.cluster_id));
            }
        }
        best.map(|(_, _, id)| id).ok_or_else(|| Error::NoClusters {
            attribute: clusters.first().map(|c| c.attribute.clone()).unwrap_or_default(),
        })
    }

    pub fn select_static(&self, project: &TrackedProject) -> Result<usize> {
        self.check_base(project)?;
        self.static_choice(self.base.clusters(&project.attribute)?, &project.context, None)
    }

    fn dynamic_choice(&self, project: &TrackedProject, exclude: Option<usize>) -> Result<usize> {
        let need = project.config.min_prefix_points;
        if project.actuals.len() < need {
            return Err(Error::InsufficientPrefix {
                have: project.actuals.len(),
                need,
            });
        }
        let clusters = self.base.clusters(&project.attribute)?;
        let grid = self.base.grid;
        let first = project.actuals[0].0;
        let progress = project.progress();
        // Grid positions covered by the measured prefix.
        let window: Vec<usize> = (0..grid.size())
            .filter(|&k| (first..=progress).contains(&grid.position(k)))
            .collect();
        if window.is_empty() {
            return Err(Error::EmptyPrefix { progress });
        }
        let observed: Vec<f64> = window
            .iter()
            .map(|&k| interpolate(&project.actuals, grid.position(k)))
            .collect();
        let mut best: Option<(f64, usize)> = None;
        for c in clusters.iter().filter(|c| Some(c.cluster_id) != exclude) {
            let expected: Vec<f64> = window.iter().map(|&k| c.cluster_curve.values[k]).collect();
            let d = slice_distance(&observed, &expected, self.base.metric);
            if best.is_none_or(|(bd, bid)| d < bd || (d == bd && c.cluster_id < bid)) {
                best = Some((d, c.cluster_id));
            }
        }
        best.map(|(_, id)| id).ok_or_else(|| Error::NoClusters {
            attribute: project.attribute.clone(),
        })
    }

    /// Cluster whose curve best matches the measured prefix.
    pub fn select_dynamic(&self, project: &TrackedProject) -> Result<usize> {
        self.check_base(project)?;
        self.dynamic_choice(project, None)
    }

    fn hybrid_choice(&self, project: &TrackedProject, exclude: Option<usize>) -> Result<(usize, Option<ControlEvent>)> {
        let clusters = self.base.clusters(&project.attribute)?;
        let static_id = self.static_choice(clusters, &project.context, exclude)?;
        let dynamic_id = match self.dynamic_choice(project, exclude) {
            Ok(id) => id,
            Err(Error::InsufficientPrefix { .. } | Error::EmptyPrefix { .. }) => return Ok((static_id, None)),
            Err(e) => return Err(e),
        };
        if static_id == dynamic_id {
            return Ok((static_id, None));
        }
        let progress = project.progress();
        let chosen = if progress >= project.config.hybrid_switch {
            dynamic_id
        } else {
            static_id
        };
        let conflict = ControlEvent {
            at_progress: progress,
            kind: EventKind::SelectionConflict {
                static_cluster: static_id,
                dynamic_cluster: dynamic_id,
                chosen,
            },
        };
        Ok((chosen, Some(conflict)))
    }

    /// Combines static and dynamic selection. When they disagree a
    /// `SelectionConflict` is returned and the dynamic choice wins from
    /// `hybrid_switch` progress on.
    pub fn select_hybrid(&self, project: &TrackedProject) -> Result<(usize, Option<ControlEvent>)> {
        self.check_base(project)?;
        self.hybrid_choice(project, None)
    }

    fn choose(
        &self,
        project: &TrackedProject,
        strategy: SelectionStrategy,
        exclude: Option<usize>,
    ) -> Result<(usize, Option<ControlEvent>)> {
        let clusters = self.base.clusters(&project.attribute)?;
        match strategy {
            SelectionStrategy::Static => Ok((self.static_choice(clusters, &project.context, exclude)?, None)),
            SelectionStrategy::Dynamic => match self.dynamic_choice(project, exclude) {
                Ok(id) => Ok((id, None)),
                // Not enough data yet to match curves; fall back to the context.
                Err(Error::InsufficientPrefix { .. } | Error::EmptyPrefix { .. }) => {
                    Ok((self.static_choice(clusters, &project.context, exclude)?, None))
                }
                Err(e) => Err(e),
            },
            SelectionStrategy::Hybrid => self.hybrid_choice(project, exclude),
        }
    }

    /// Reselects a cluster for `cause`, then adapts the prediction to the
    /// recorded actuals. The project is left untouched on error.
    pub fn replan(&self, project: &mut TrackedProject, cause: ReplanCause) -> Result<Vec<ControlEvent>> {
        self.check_base(project)?;
        let mut next = project.clone();
        let old = next.selected_cluster_id;
        let reason = ReplanReason::from(&cause);
        let (strategy, exclude) = match cause {
            ReplanCause::WrongExperience => (next.config.strategy, Some(old)),
            ReplanCause::WrongContext(corrected) => {
                corrected.validate(&self.base.schema)?;
                next.context = corrected;
                (SelectionStrategy::Static, None)
            }
            ReplanCause::ChangedCharacteristics(updated) => {
                updated.validate(&self.base.schema)?;
                next.context = updated;
                (next.config.strategy, None)
            }
        };

        let clusters = self.base.clusters(&next.attribute)?;
        let has_alternative = clusters.iter().any(|c| Some(c.cluster_id) != exclude);
        let progress = next.progress();
        let mut events = Vec::new();
        let new = if has_alternative {
            let (id, conflict) = self.choose(&next, strategy, exclude)?;
            events.extend(conflict);
            id
        } else {
            old
        };
        next.selected_cluster_id = new;
        events.push(ControlEvent {
            at_progress: progress,
            kind: EventKind::Replanned {
                old_cluster: Some(old),
                new_cluster: new,
                cause: reason,
                no_alternative: !has_alternative,
            },
        });
        next.events.extend(events.iter().cloned());

        if next.actuals.is_empty() {
            let cluster = self.base.cluster(&next.attribute, new)?;
            next.prediction = self.prediction_from(cluster, &next.project_id);
        } else {
            events.push(self.adapt_in_place(&mut next)?);
        }
        *project = next;
        Ok(events)
    }

    /// Re-anchors the selected cluster curve on the latest measurement.
    pub fn adapt_prediction(&self, project: &mut TrackedProject) -> Result<ControlEvent> {
        self.check_base(project)?;
        let mut next = project.clone();
        let event = self.adapt_in_place(&mut next)?;
        *project = next;
        Ok(event)
    }

    fn adapt_in_place(&self, project: &mut TrackedProject) -> Result<ControlEvent> {
        let &(progress, latest) = project.actuals.last().ok_or(Error::NoActuals)?;
        let cluster = self.base.cluster(&project.attribute, project.selected_cluster_id)?;
        let curve = &cluster.cluster_curve;
        let anchor = curve.value_at(progress);
        let eps = project.config.epsilon;

        let (method, factor, offset) = match project.config.adaptation {
            Adaptation::None => (Adaptation::None, None, None),
            Adaptation::Rescale if anchor.abs() >= eps => (Adaptation::Rescale, Some(latest / anchor), None),
            Adaptation::Rescale | Adaptation::Shift => (Adaptation::Shift, None, Some(latest - anchor)),
        };

        let grid = self.base.grid;
        let first = project.actuals[0].0;
        let values = curve
            .values
            .iter()
            .enumerate()
            .map(|(k, &v)| {
                let t = grid.position(k);
                match (factor, offset) {
                    (None, None) => v,
                    _ if t < progress => {
                        if t >= first {
                            interpolate(&project.actuals, t)
                        } else {
                            v
                        }
                    }
                    (Some(f), _) => v * f,
                    (_, Some(o)) => v + o,
                }
            })
            .collect();
        project.prediction = CharacteristicCurve::new(&project.project_id, &project.attribute, curve.mode, values)?;

        let event = ControlEvent {
            at_progress: progress,
            kind: EventKind::PredictionAdapted { method, factor, offset },
        };
        project.events.push(event.clone());
        Ok(event)
    }
}
