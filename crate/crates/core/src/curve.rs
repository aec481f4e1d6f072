//! Characteristic curves: attribute time series resampled onto a shared,
//! uniform grid over normalized project time, plus the distances between them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_GRID_SIZE: usize = 20;

/// A measured attribute of one project as `(t, value)` points, with `t` the
/// elapsed fraction of project duration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawSeries {
    pub project_id: String,
    pub attribute: String,
    pub points: Vec<(f64, f64)>,
}

impl RawSeries {
    pub fn new(
        project_id: impl Into<String>,
        attribute: impl Into<String>,
        points: Vec<(f64, f64)>,
    ) -> Self {
        Self {
            project_id: project_id.into(),
            attribute: attribute.into(),
            points,
        }
    }

    fn malformed(&self, reason: impl Into<String>) -> Error {
        Error::MalformedSeries {
            project_id: self.project_id.clone(),
            attribute: self.attribute.clone(),
            reason: reason.into(),
        }
    }

    /// Checks ordering and finiteness; does not require the `[0, 1]` span.
    pub fn check_points(&self) -> Result<()> {
        for (i, &(t, v)) in self.points.iter().enumerate() {
            if !t.is_finite() || !v.is_finite() {
                return Err(self.malformed(format!("non-finite point at index {i}")));
            }
            if i > 0 && t <= self.points[i - 1].0 {
                return Err(self.malformed(format!(
                    "t not strictly increasing at index {i} ({} after {})",
                    t,
                    self.points[i - 1].0
                )));
            }
        }
        Ok(())
    }

    /// Full validity: ordered, finite, at least two points spanning exactly `[0, 1]`.
    pub fn validate(&self) -> Result<()> {
        if self.points.len() < 2 {
            return Err(self.malformed(format!(
                "need at least 2 points, got {}",
                self.points.len()
            )));
        }
        self.check_points()?;
        let first = self.points[0].0;
        let last = self.points[self.points.len() - 1].0;
        if first != 0.0 || last != 1.0 {
            return Err(self.malformed(format!(
                "t must span [0, 1], got [{first}, {last}]"
            )));
        }
        Ok(())
    }

    /// Linearly rescales `t` so the first point sits at 0 and the last at 1.
    /// Returns `true` when the series was changed.
    pub fn normalize_time(&mut self) -> bool {
        if self.points.len() < 2 {
            return false;
        }
        let lo = self.points[0].0;
        let hi = self.points[self.points.len() - 1].0;
        if lo == 0.0 && hi == 1.0 {
            return false;
        }
        let span = hi - lo;
        let n = self.points.len();
        for (i, p) in self.points.iter_mut().enumerate() {
            p.0 = if i == 0 {
                0.0
            } else if i == n - 1 {
                1.0
            } else {
                (p.0 - lo) / span
            };
        }
        true
    }
}

/// Uniform grid of `size` positions `k / (size - 1)` on `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct Grid {
    size: usize,
}

impl Grid {
    pub fn new(size: usize) -> Result<Self> {
        if size < 2 {
            return Err(Error::InvalidConfig(format!(
                "grid size must be at least 2, got {size}"
            )));
        }
        Ok(Self { size })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn position(&self, k: usize) -> f64 {
        k as f64 / (self.size - 1) as f64
    }

    pub fn positions(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.size).map(|k| self.position(k))
    }

    /// Index of the last grid position `<= progress`, if any.
    pub fn last_index_at_or_before(&self, progress: f64) -> Option<usize> {
        if progress.is_nan() || progress < 0.0 {
            return None;
        }
        // Scan rather than floor(p * (G - 1)) so the comparison uses exactly
        // the positions `position` hands out.
        (0..self.size).rev().find(|&k| self.position(k) <= progress)
    }
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            size: DEFAULT_GRID_SIZE,
        }
    }
}

impl TryFrom<usize> for Grid {
    type Error = Error;

    fn try_from(size: usize) -> Result<Self> {
        Grid::new(size)
    }
}

impl From<Grid> for usize {
    fn from(grid: Grid) -> usize {
        grid.size
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveMode {
    /// Values are per-period measurements and are interpolated as given.
    Raw,
    /// Values are per-period increments, accumulated before interpolation.
    #[default]
    Cumulative,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveMetric {
    #[default]
    Rms,
    Max,
}

macro_rules! lowercase_enum_text {
    ($ty:ty { $($variant:ident => $text:literal),+ $(,)? }) => {
        impl ::std::fmt::Display for $ty {
            fn fmt(&self, f: &mut ::std::fmt::Formatter<'_>) -> ::std::fmt::Result {
                f.write_str(match self { $(Self::$variant => $text),+ })
            }
        }

        impl ::std::str::FromStr for $ty {
            type Err = $crate::error::Error;

            fn from_str(s: &str) -> ::std::result::Result<Self, $crate::error::Error> {
                match s {
                    $($text => Ok(Self::$variant),)+
                    other => Err($crate::error::Error::InvalidConfig(format!(
                        "unknown {} {other:?}", stringify!($ty)
                    ))),
                }
            }
        }
    };
}
pub(crate) use lowercase_enum_text;

lowercase_enum_text!(CurveMode { Raw => "raw", Cumulative => "cumulative" });
lowercase_enum_text!(CurveMetric { Rms => "rms", Max => "max" });

/// One attribute of one project (or one cluster) sampled on a [`Grid`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicCurve {
    pub project_id: String,
    pub attribute: String,
    pub mode: CurveMode,
    pub values: Vec<f64>,
}

impl CharacteristicCurve {
    pub fn new(
        project_id: impl Into<String>,
        attribute: impl Into<String>,
        mode: CurveMode,
        values: Vec<f64>,
    ) -> Result<Self> {
        let curve = Self {
            project_id: project_id.into(),
            attribute: attribute.into(),
            mode,
            values,
        };
        curve.validate()?;
        Ok(curve)
    }

    pub fn validate(&self) -> Result<()> {
        let malformed = |reason: String| Error::MalformedSeries {
            project_id: self.project_id.clone(),
            attribute: self.attribute.clone(),
            reason,
        };
        if self.values.len() < 2 {
            return Err(malformed(format!(
                "curve needs at least 2 grid values, got {}",
                self.values.len()
            )));
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(malformed(format!("non-finite curve value at grid index {i}")));
        }
        Ok(())
    }

    pub fn grid(&self) -> Grid {
        Grid {
            size: self.values.len().max(2),
        }
    }

    /// Piecewise-linear value at normalized time `t` (clamped to `[0, 1]`).
    pub fn value_at(&self, t: f64) -> f64 {
        let grid = self.grid();
        let t = t.clamp(0.0, 1.0);
        let k = grid.last_index_at_or_before(t).unwrap_or(0);
        if k + 1 >= self.values.len() {
            return self.values[self.values.len() - 1];
        }
        let (t0, t1) = (grid.position(k), grid.position(k + 1));
        lerp(t0, self.values[k], t1, self.values[k + 1], t)
    }
}

pub(crate) fn lerp(t0: f64, v0: f64, t1: f64, v1: f64, t: f64) -> f64 {
    if t == t0 {
        return v0;
    }
    v0 + (v1 - v0) * ((t - t0) / (t1 - t0))
}

/// Piecewise-linear interpolation through `points` (sorted by `t`), holding
/// the end values outside the covered range.
pub fn interpolate(points: &[(f64, f64)], t: f64) -> f64 {
    debug_assert!(!points.is_empty());
    let i = points.partition_point(|&(pt, _)| pt <= t);
    if i == 0 {
        return points[0].1;
    }
    if i == points.len() {
        return points[points.len() - 1].1;
    }
    let (t0, v0) = points[i - 1];
    let (t1, v1) = points[i];
    lerp(t0, v0, t1, v1, t)
}

/// Resamples `series` onto `grid`. In cumulative mode the values are first
/// turned into running sums, so the curve reports the attribute total so far.
pub fn resample(series: &RawSeries, grid: Grid, mode: CurveMode) -> Result<CharacteristicCurve> {
    series.validate()?;
    let points: Vec<(f64, f64)> = match mode {
        CurveMode::Raw => series.points.clone(),
        CurveMode::Cumulative => {
            if let Some(&(t, v)) = series.points.iter().find(|&&(_, v)| v < 0.0) {
                return Err(series.malformed(format!(
                    "negative value {v} at t={t} in cumulative mode"
                )));
            }
            let mut total = 0.0;
            series
                .points
                .iter()
                .map(|&(t, v)| {
                    total += v;
                    (t, total)
                })
                .collect()
        }
    };
    let values = grid.positions().map(|t| interpolate(&points, t)).collect();
    CharacteristicCurve::new(&series.project_id, &series.attribute, mode, values)
}

fn check_comparable(a: &CharacteristicCurve, b: &CharacteristicCurve) -> Result<()> {
    if a.attribute != b.attribute {
        return Err(Error::AttributeMismatch {
            left: a.attribute.clone(),
            right: b.attribute.clone(),
        });
    }
    if a.values.len() != b.values.len() {
        return Err(Error::GridMismatch {
            left: a.values.len(),
            right: b.values.len(),
        });
    }
    Ok(())
}

/// Distance between two equally long value slices. Empty slices are at distance 0.
pub fn slice_distance(a: &[f64], b: &[f64], metric: CurveMetric) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    if a.is_empty() {
        return 0.0;
    }
    let diffs = a.iter().zip(b).map(|(x, y)| (x - y).abs());
    match metric {
        CurveMetric::Rms => {
            let sum_sq: f64 = diffs.map(|d| d * d).sum();
            (sum_sq / a.len() as f64).sqrt()
        }
        CurveMetric::Max => diffs.fold(0.0, f64::max),
    }
}

pub fn distance(a: &CharacteristicCurve, b: &CharacteristicCurve, metric: CurveMetric) -> Result<f64> {
    check_comparable(a, b)?;
    Ok(slice_distance(&a.values, &b.values, metric))
}

/// Distance restricted to grid positions `t_k <= upto`.
pub fn prefix_distance(
    a: &CharacteristicCurve,
    b: &CharacteristicCurve,
    upto: f64,
    metric: CurveMetric,
) -> Result<f64> {
    check_comparable(a, b)?;
    let last = a
        .grid()
        .last_index_at_or_before(upto)
        .ok_or(Error::EmptyPrefix { progress: upto })?;
    Ok(slice_distance(&a.values[..=last], &b.values[..=last], metric))
}

/// Pointwise arithmetic mean of equally long curves.
pub(crate) fn pointwise_mean<'a>(curves: impl IntoIterator<Item = &'a [f64]>) -> Vec<f64> {
    let mut sum: Vec<f64> = Vec::new();
    let mut n = 0usize;
    for values in curves {
        if sum.is_empty() {
            sum = vec![0.0; values.len()];
        }
        for (s, v) in sum.iter_mut().zip(values) {
            *s += v;
        }
        n += 1;
    }
    sum.iter().map(|s| s / n as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn curve(values: &[f64]) -> CharacteristicCurve {
        CharacteristicCurve::new("p", "effort", CurveMode::Raw, values.to_vec()).unwrap()
    }

    fn series(points: &[(f64, f64)]) -> RawSeries {
        RawSeries::new("p", "effort", points.to_vec())
    }

    #[test]
    fn resample_linear() {
        let c = resample(&series(&[(0.0, 0.0), (1.0, 10.0)]), Grid::new(3).unwrap(), CurveMode::Raw)
            .unwrap();
        assert_eq!(c.values, vec![0.0, 5.0, 10.0]);
    }

    #[test]
    fn resample_constant() {
        let c = resample(
            &series(&[(0.0, 4.0), (0.5, 4.0), (1.0, 4.0)]),
            Grid::new(5).unwrap(),
            CurveMode::Raw,
        )
        .unwrap();
        assert_eq!(c.values, vec![4.0; 5]);
    }

    #[test]
    fn resample_interior_segment() {
        // t = 0.5 on segment (0.25, 1)-(1, 4): 1 + 3 * (0.25 / 0.75) = 2.
        let c = resample(
            &series(&[(0.0, 0.0), (0.25, 1.0), (1.0, 4.0)]),
            Grid::new(3).unwrap(),
            CurveMode::Raw,
        )
        .unwrap();
        assert_eq!(c.values[0], 0.0);
        assert!((c.values[1] - 2.0).abs() < 1e-12);
        assert_eq!(c.values[2], 4.0);
    }

    #[test]
    fn resample_cumulative_running_sum() {
        let c = resample(
            &series(&[(0.0, 1.0), (0.5, 2.0), (1.0, 3.0)]),
            Grid::new(3).unwrap(),
            CurveMode::Cumulative,
        )
        .unwrap();
        assert_eq!(c.values, vec![1.0, 3.0, 6.0]);
    }

    #[test]
    fn resample_rejects_malformed() {
        let g = Grid::default();
        for bad in [
            vec![(0.0, 1.0)],
            vec![(0.0, 1.0), (0.5, 1.0), (0.5, 2.0), (1.0, 1.0)],
            vec![(0.0, 1.0), (0.5, f64::NAN), (1.0, 1.0)],
            vec![(0.0, 1.0), (0.8, 1.0)],
        ] {
            let err = resample(&series(&bad), g, CurveMode::Raw).unwrap_err();
            assert_eq!(err.code(), "MALFORMED_SERIES", "{bad:?}");
        }
        let err = resample(&series(&[(0.0, 1.0), (1.0, -1.0)]), g, CurveMode::Cumulative).unwrap_err();
        assert_eq!(err.code(), "MALFORMED_SERIES");
    }

    #[test]
    fn normalize_time_rescales() {
        let mut s = series(&[(2.0, 1.0), (3.0, 2.0), (6.0, 3.0)]);
        assert!(s.normalize_time());
        assert_eq!(s.points, vec![(0.0, 1.0), (0.25, 2.0), (1.0, 3.0)]);
        assert!(!s.normalize_time());
    }

    #[test]
    fn distance_examples() {
        assert_eq!(distance(&curve(&[1.0, 1.0]), &curve(&[1.0, 1.0]), CurveMetric::Rms).unwrap(), 0.0);
        assert_eq!(distance(&curve(&[0.0, 0.0]), &curve(&[2.0, 2.0]), CurveMetric::Rms).unwrap(), 2.0);
        assert_eq!(
            distance(&curve(&[0.0, 0.0, 0.0]), &curve(&[3.0, 4.0, 0.0]), CurveMetric::Max).unwrap(),
            4.0
        );
    }

    #[test]
    fn distance_mismatches() {
        let a = curve(&[0.0, 1.0]);
        let b = curve(&[0.0, 1.0, 2.0]);
        assert_eq!(distance(&a, &b, CurveMetric::Rms).unwrap_err().code(), "GRID_MISMATCH");
        let mut c = curve(&[0.0, 1.0]);
        c.attribute = "defects".into();
        assert_eq!(distance(&a, &c, CurveMetric::Rms).unwrap_err().code(), "ATTRIBUTE_MISMATCH");
    }

    #[test]
    fn prefix_distance_examples() {
        let a = curve(&[2.0, 4.0, 6.0]);
        assert_eq!(prefix_distance(&a, &curve(&[2.0, 4.0, 9.0]), 0.5, CurveMetric::Rms).unwrap(), 0.0);
        let d = prefix_distance(&a, &curve(&[0.0, 1.0, 2.0]), 0.5, CurveMetric::Rms).unwrap();
        assert!((d - (13.0f64 / 2.0).sqrt()).abs() < 1e-12);
        assert!((d - 2.5495).abs() < 1e-4);
        for m in [CurveMetric::Rms, CurveMetric::Max] {
            assert_eq!(
                prefix_distance(&curve(&[5.0, 1.0]), &curve(&[5.0, 7.0]), 0.0, m).unwrap(),
                0.0
            );
        }
        let err = prefix_distance(&a, &a, -0.1, CurveMetric::Rms).unwrap_err();
        assert_eq!(err.code(), "EMPTY_PREFIX");
    }

    #[test]
    fn value_at_interpolates_between_grid_points() {
        let c = curve(&[0.0, 10.0, 30.0]);
        assert_eq!(c.value_at(0.0), 0.0);
        assert_eq!(c.value_at(0.25), 5.0);
        assert_eq!(c.value_at(0.75), 20.0);
        assert_eq!(c.value_at(1.0), 30.0);
    }

    fn values_strategy(len: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-100.0f64..100.0, len)
    }

    fn triple() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
        (2usize..12).prop_flat_map(|n| (values_strategy(n), values_strategy(n), values_strategy(n)))
    }

    proptest! {
        #[test]
        fn metric_axioms((a, b, c) in triple()) {
            for m in [CurveMetric::Rms, CurveMetric::Max] {
                let (ca, cb, cc) = (curve(&a), curve(&b), curve(&c));
                let ab = distance(&ca, &cb, m).unwrap();
                let ba = distance(&cb, &ca, m).unwrap();
                let bc = distance(&cb, &cc, m).unwrap();
                let ac = distance(&ca, &cc, m).unwrap();
                prop_assert!(ab >= 0.0);
                prop_assert_eq!(ab, ba);
                prop_assert_eq!(distance(&ca, &ca, m).unwrap(), 0.0);
                prop_assert_eq!(ab == 0.0, a == b);
                prop_assert!(ac <= ab + bc + 1e-9);
            }
        }

        #[test]
        fn full_prefix_is_distance((a, b, _c) in triple()) {
            for m in [CurveMetric::Rms, CurveMetric::Max] {
                let (ca, cb) = (curve(&a), curve(&b));
                prop_assert_eq!(prefix_distance(&ca, &cb, 1.0, m).unwrap(), distance(&ca, &cb, m).unwrap());
            }
        }

        #[test]
        fn resample_exact_on_grid(values in prop::collection::vec(-50.0f64..50.0, 2..15)) {
            let grid = Grid::new(values.len()).unwrap();
            let points = grid.positions().zip(values.iter().copied()).collect();
            let c = resample(&RawSeries::new("p", "a", points), grid, CurveMode::Raw).unwrap();
            prop_assert_eq!(c.values, values);
        }

        #[test]
        fn cumulative_is_monotone(
            values in prop::collection::vec(0.0f64..50.0, 2..15),
            size in 2usize..30,
        ) {
            let n = values.len();
            let points = values
                .iter()
                .enumerate()
                .map(|(i, &v)| (i as f64 / (n - 1) as f64, v))
                .collect();
            let c = resample(&RawSeries::new("p", "a", points), Grid::new(size).unwrap(), CurveMode::Cumulative)
                .unwrap();
            prop_assert!(c.values.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
