//! Threshold-cut complete-linkage clustering of characteristic curves.
//!
//! Curves are first put in canonical order (ascending project id) and given
//! leaf ids `0..n`. Every merge creates a new id `n, n + 1, ...`. At each
//! step the pair of active clusters with the smallest complete-linkage
//! distance is merged; ties go to the smallest `(left, right)` id pair.
//! Cutting the resulting dendrogram at `threshold` keeps every merge whose
//! height is `<= threshold`, so every pair of members inside a cluster is at
//! most `threshold` apart.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::context::{aggregate_contexts, AggregatedContext, ContextSchema, ContextVector};
use crate::curve::{pointwise_mean, slice_distance, CharacteristicCurve, CurveMetric};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusteringConfig {
    pub threshold: f64,
    pub metric: CurveMetric,
}

impl ClusteringConfig {
    pub fn new(threshold: f64, metric: CurveMetric) -> Result<Self> {
        let config = Self { threshold, metric };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold.is_finite() && self.threshold > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "clustering threshold must be positive and finite, got {}",
                self.threshold
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub cluster_id: usize,
    pub attribute: String,
    pub member_ids: BTreeSet<String>,
    pub member_count: usize,
    pub cluster_curve: CharacteristicCurve,
    pub context: AggregatedContext,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub id: usize,
}

/// Full merge history. Leaf `i` is `leaves[i]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub leaves: Vec<String>,
    pub merges: Vec<Merge>,
}

impl Dendrogram {
    /// Leaf-index partition obtained by applying every merge with height `<= threshold`.
    pub fn cut(&self, threshold: f64) -> Vec<Vec<usize>> {
        let n = self.leaves.len();
        let mut members: Vec<Option<Vec<usize>>> = (0..n).map(|i| Some(vec![i])).collect();
        for merge in self.merges.iter().take_while(|m| m.height <= threshold) {
            let mut left = members[merge.left].take().expect("merged twice");
            let right = members[merge.right].take().expect("merged twice");
            left.extend(right);
            left.sort_unstable();
            members.push(Some(left));
        }
        let mut groups: Vec<Vec<usize>> = members.into_iter().flatten().collect();
        groups.sort();
        groups
    }

    /// Merge heights in merge order (non-decreasing for complete linkage).
    pub fn heights(&self) -> Vec<f64> {
        self.merges.iter().map(|m| m.height).collect()
    }
}

fn canonical_order(curves: &[CharacteristicCurve]) -> Result<Vec<&CharacteristicCurve>> {
    let first = curves
        .first()
        .ok_or_else(|| Error::InvalidConfig("clustering needs at least one curve".into()))?;
    for c in curves {
        c.validate()?;
        if c.attribute != first.attribute {
            return Err(Error::HeterogeneousCurves(format!(
                "attribute {:?} vs {:?} (project {})",
                first.attribute, c.attribute, c.project_id
            )));
        }
        if c.values.len() != first.values.len() {
            return Err(Error::HeterogeneousCurves(format!(
                "grid size {} vs {} (project {})",
                first.values.len(),
                c.values.len(),
                c.project_id
            )));
        }
        if c.mode != first.mode {
            return Err(Error::HeterogeneousCurves(format!(
                "mode {} vs {} (project {})",
                first.mode, c.mode, c.project_id
            )));
        }
    }
    let mut ordered: Vec<&CharacteristicCurve> = curves.iter().collect();
    ordered.sort_by(|a, b| a.project_id.cmp(&b.project_id));
    if let Some(w) = ordered.windows(2).find(|w| w[0].project_id == w[1].project_id) {
        return Err(Error::DuplicateProject {
            project_id: w[0].project_id.clone(),
            detail: "more than one curve for the same attribute".into(),
        });
    }
    Ok(ordered)
}

fn build_dendrogram(ordered: &[&CharacteristicCurve], metric: CurveMetric) -> Dendrogram {
    let n = ordered.len();
    let total = 2 * n - 1;
    // Linkage distances between any two cluster ids, filled as clusters appear.
    let mut dist = vec![vec![0.0f64; total]; total];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = slice_distance(&ordered[i].values, &ordered[j].values, metric);
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }

    let mut active: BTreeSet<usize> = (0..n).collect();
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    let mut next_id = n;
    while active.len() > 1 {
        let mut best: Option<(f64, usize, usize)> = None;
        let ids: Vec<usize> = active.iter().copied().collect();
        for (a, &i) in ids.iter().enumerate() {
            for &j in &ids[a + 1..] {
                let d = dist[i][j];
                if best.is_none_or(|(bd, _, _)| d < bd) {
                    best = Some((d, i, j));
                }
            }
        }
        let (height, left, right) = best.expect("at least two active clusters");
        active.remove(&left);
        active.remove(&right);
        for &k in &active {
            let d = dist[left][k].max(dist[right][k]);
            dist[next_id][k] = d;
            dist[k][next_id] = d;
        }
        active.insert(next_id);
        merges.push(Merge {
            left,
            right,
            height,
            id: next_id,
        });
        next_id += 1;
    }

    Dendrogram {
        leaves: ordered.iter().map(|c| c.project_id.clone()).collect(),
        merges,
    }
}

/// Builds the full dendrogram for `curves` without cutting it.
pub fn dendrogram(curves: &[CharacteristicCurve], metric: CurveMetric) -> Result<Dendrogram> {
    let ordered = canonical_order(curves)?;
    Ok(build_dendrogram(&ordered, metric))
}

pub fn cluster_curves(
    curves: &[CharacteristicCurve],
    contexts: &BTreeMap<String, ContextVector>,
    config: &ClusteringConfig,
    schema: &ContextSchema,
) -> Result<(Vec<Cluster>, Dendrogram)> {
    config.validate()?;
    let ordered = canonical_order(curves)?;
    for c in &ordered {
        if !contexts.contains_key(&c.project_id) {
            return Err(Error::MissingContext {
                project_id: c.project_id.clone(),
            });
        }
    }
    let dendrogram = build_dendrogram(&ordered, config.metric);

    // Leaves are sorted by project id and every group is sorted, so sorting
    // groups by first leaf orders them by smallest member project id.
    let groups = dendrogram.cut(config.threshold);
    let first = ordered[0];
    let clusters = groups
        .iter()
        .enumerate()
        .map(|(cluster_id, group)| {
            let members: Vec<&CharacteristicCurve> = group.iter().map(|&i| ordered[i]).collect();
            let values = pointwise_mean(members.iter().map(|c| c.values.as_slice()));
            let context = aggregate_contexts(members.iter().map(|c| &contexts[&c.project_id]), schema)?;
            Ok(Cluster {
                cluster_id,
                attribute: first.attribute.clone(),
                member_ids: members.iter().map(|c| c.project_id.clone()).collect(),
                member_count: members.len(),
                cluster_curve: CharacteristicCurve::new(
                    format!("cluster:{cluster_id}"),
                    &first.attribute,
                    first.mode,
                    values,
                )?,
                context,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((clusters, dendrogram))
}

/// Threshold that cuts the dendrogram into `target_k` clusters: the midpoint
/// between the merge heights on either side of the cut, half the smallest
/// height for `target_k == n`, and 1.1x the largest for `target_k == 1`.
pub fn suggest_threshold(curves: &[CharacteristicCurve], target_k: usize, metric: CurveMetric) -> Result<f64> {
    let n = curves.len();
    if target_k == 0 || target_k > n {
        return Err(Error::InvalidTargetK { target_k, n });
    }
    let dendrogram = dendrogram(curves, metric)?;
    let mut heights = dendrogram.heights();
    heights.sort_by(f64::total_cmp);

    let theta = if n == 1 {
        1.0
    } else if target_k == n {
        heights[0] / 2.0
    } else if target_k == 1 {
        heights[n - 2] * 1.1
    } else {
        // Keep the n - k smallest merges, drop the rest.
        (heights[n - target_k - 1] + heights[n - target_k]) / 2.0
    };
    // Zero-height merges (identical curves) cannot be separated; fall back to
    // the smallest positive threshold.
    Ok(if theta > 0.0 { theta } else { f64::MIN_POSITIVE })
}
