//! Report-style checks over cut records.

use super::cut::CutRecord;
use crate::atlas::ChartPoint;
use crate::error::{Error, Result};
use crate::metric::MetricField;
use crate::submanifold::SubmanifoldSpec;

#[derive(Clone, Debug, PartialEq)]
pub struct RhoLambdaReport {
    pub checked: usize,
    /// Grid indices with `ρ > λ + 1e-6` or `ρ ≤ 0`.
    pub violations: Vec<usize>,
    pub max_excess: f64,
    pub pass: bool,
}

pub fn check_rho_leq_lambda(records: &[CutRecord]) -> RhoLambdaReport {
    let mut violations = Vec::new();
    let mut max_excess = f64::NEG_INFINITY;
    for r in records {
        let excess = if r.rho.is_infinite() && r.lambda.is_infinite() { f64::NEG_INFINITY } else { r.rho - r.lambda };
        max_excess = max_excess.max(excess);
        if excess > 1e-6 || !(r.rho > 0.0) {
            violations.push(r.index);
        }
    }
    RhoLambdaReport { checked: records.len(), pass: violations.is_empty(), violations, max_excess }
}

/// Nested refinement levels for the continuity study.
#[derive(Clone, Debug, PartialEq)]
pub struct ContinuityPlan {
    /// Number of coarser levels below the full grid.
    pub levels: usize,
    /// Each level keeps every `factor`-th ray of the next finer one.
    pub factor: usize,
    /// Flag a coarse interval when its difference quotient grows by more
    /// than this over two refinement levels.
    pub growth_limit: f64,
    /// Differences below this are treated as zero.
    pub noise_floor: f64,
}

impl Default for ContinuityPlan {
    fn default() -> Self {
        ContinuityPlan { levels: 2, factor: 4, growth_limit: 10.0, noise_floor: 1e-6 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LevelStats {
    pub rays: usize,
    pub max_jump: f64,
    pub max_quotient: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContinuityReport {
    /// Coarsest level first.
    pub levels: Vec<LevelStats>,
    /// Parameter intervals `(strand, from, to)` of the coarsest level whose
    /// quotient exploded.
    pub flagged: Vec<(f64, f64, f64)>,
    /// Coarse intervals where the coarse grid saw no variation at all, so
    /// growth could not be judged.
    pub unresolved: usize,
    pub pass: bool,
}

/// One-parameter strands of `S(ν)`: the sides of a curve, or the circle of
/// directions at a point of a surface.
fn strands(spec: &SubmanifoldSpec, records: &[CutRecord]) -> Result<Vec<(f64, bool, Vec<(f64, f64)>)>> {
    let dims = spec.param_dim + spec.psi_free();
    if dims != 1 {
        return Err(Error::Precondition("continuity study needs a one-dimensional normal sphere bundle".into()));
    }
    let periodic = spec.param_dim == 0 || spec.periodic[0];
    let mut keys: Vec<f64> = Vec::new();
    let mut out: Vec<(f64, bool, Vec<(f64, f64)>)> = Vec::new();
    for r in records {
        let (key, s) = if spec.param_dim == 1 { (r.ray.psi[0], r.ray.theta[0]) } else { (0.0, r.ray.psi[0]) };
        let pos = match keys.iter().position(|&k| k == key) {
            Some(p) => p,
            None => {
                keys.push(key);
                out.push((key, periodic, Vec::new()));
                keys.len() - 1
            }
        };
        out[pos].2.push((s, r.rho));
    }
    for (_, _, v) in out.iter_mut() {
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    Ok(out)
}

/// Difference quotients of `ρ` between neighboring rays on nested grids.
pub fn check_rho_continuity(
    spec: &SubmanifoldSpec,
    records: &[CutRecord],
    plan: &ContinuityPlan,
) -> Result<ContinuityReport> {
    if plan.factor < 2 {
        return Err(Error::Precondition("refinement factor must be at least 2".into()));
    }
    let period = if spec.param_dim == 1 { spec.domain[0].1 - spec.domain[0].0 } else { std::f64::consts::TAU };
    let strands = strands(spec, records)?;
    let coarse_stride = plan.factor.pow(plan.levels as u32);
    let mut levels = Vec::new();
    // quotient per coarse interval and level
    let mut per_interval: Vec<Vec<Vec<f64>>> = Vec::new();
    for (_, periodic, pts) in &strands {
        let n = pts.len();
        let intervals = if *periodic { n.div_ceil(coarse_stride) } else { (n.saturating_sub(1)) / coarse_stride };
        per_interval.push(vec![vec![0.0; plan.levels + 1]; intervals.max(1)]);
    }
    for l in 0..=plan.levels {
        let stride = plan.factor.pow((plan.levels - l) as u32);
        let mut stats = LevelStats { rays: 0, max_jump: 0.0, max_quotient: 0.0 };
        for (s, (_, periodic, pts)) in strands.iter().enumerate() {
            let n = pts.len();
            let idx: Vec<usize> = (0..n).step_by(stride).collect();
            stats.rays += idx.len();
            let pairs = if *periodic && idx.len() > 1 { idx.len() } else { idx.len().saturating_sub(1) };
            for p in 0..pairs {
                let (i, j) = (idx[p], idx[(p + 1) % idx.len()]);
                let (a, b) = (pts[i], pts[j]);
                if !(a.1.is_finite() && b.1.is_finite()) {
                    continue;
                }
                let mut dp = (b.0 - a.0).abs();
                if *periodic {
                    dp = dp.min(period - dp);
                }
                if dp <= 0.0 {
                    continue;
                }
                let jump = (b.1 - a.1).abs();
                let q = (jump - plan.noise_floor).max(0.0) / dp;
                stats.max_jump = stats.max_jump.max(jump);
                stats.max_quotient = stats.max_quotient.max(q);
                let slot = (i / coarse_stride).min(per_interval[s].len() - 1);
                per_interval[s][slot][l] = per_interval[s][slot][l].max(q);
            }
        }
        levels.push(stats);
    }
    let mut flagged = Vec::new();
    let mut unresolved = 0;
    if plan.levels >= 2 {
        let level_ref = levels[plan.levels - 2].max_quotient;
        for (s, (key, _, pts)) in strands.iter().enumerate() {
            for (slot, qs) in per_interval[s].iter().enumerate() {
                let (q0, q2) = (qs[plan.levels - 2], qs[plan.levels]);
                // an interval that was flat on the coarse grid is compared
                // with the coarse level as a whole
                let reference = if q0 > 0.0 { q0 } else { level_ref };
                if reference == 0.0 {
                    unresolved += usize::from(q2 > 0.0);
                    continue;
                }
                if q2 / reference > plan.growth_limit {
                    let from = pts[(slot * coarse_stride).min(pts.len() - 1)].0;
                    let to = pts[((slot + 1) * coarse_stride).min(pts.len() - 1)].0;
                    flagged.push((*key, from, to));
                }
            }
        }
    }
    Ok(ContinuityReport { pass: flagged.is_empty(), levels, flagged, unresolved })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityReport {
    pub delta: f64,
    pub pitch: f64,
    pub first_focal_only: usize,
    pub separating: usize,
    /// Grid indices of FirstFocal-only points without a Separating point
    /// within `delta`.
    pub violations: Vec<usize>,
    pub pass: bool,
}

/// First-order geodesic distance estimate `½(F(x, Δ) + F(x, −Δ))`.
pub fn distance_estimate(metric: &MetricField, p: &ChartPoint, q: &ChartPoint) -> f64 {
    let atlas = metric.atlas();
    let Some((chart, d)) = atlas.displacement(p, q) else {
        return f64::INFINITY;
    };
    let Some(x) = atlas.to_chart(p, chart) else {
        return f64::INFINITY;
    };
    let neg = -&d;
    0.5 * (metric.f(chart, x.as_slice(), d.as_slice()) + metric.f(chart, x.as_slice(), neg.as_slice()))
}

/// Median distance estimate between cut points of consecutive records.
pub fn cut_pitch(metric: &MetricField, records: &[CutRecord]) -> f64 {
    let mut gaps: Vec<f64> = records
        .windows(2)
        .filter_map(|w| match (&w[0].cut_point, &w[1].cut_point) {
            (Some(a), Some(b)) if w[0].ray.psi == w[1].ray.psi || w[0].ray.theta == w[1].ray.theta => {
                Some(distance_estimate(metric, a, b))
            }
            _ => None,
        })
        .filter(|g| g.is_finite())
        .collect();
    if gaps.is_empty() {
        return 0.0;
    }
    gaps.sort_by(|a, b| a.total_cmp(b));
    gaps[gaps.len() / 2]
}

/// Every FirstFocal-only cut point must have a Separating cut point within
/// `delta` (default three times the sampling pitch).
pub fn check_se_dense(metric: &MetricField, records: &[CutRecord], delta: Option<f64>) -> DensityReport {
    let pitch = cut_pitch(metric, records);
    let delta = delta.unwrap_or(3.0 * pitch);
    let sep: Vec<&ChartPoint> = records.iter().filter(|r| r.is_separating()).filter_map(|r| r.cut_point.as_ref()).collect();
    let mut violations = Vec::new();
    let mut ff_only = 0;
    for r in records.iter().filter(|r| r.is_first_focal() && !r.is_separating()) {
        ff_only += 1;
        let Some(p) = &r.cut_point else { continue };
        let near = sep.iter().any(|s| distance_estimate(metric, p, s) <= delta);
        if !near {
            violations.push(r.index);
        }
    }
    DensityReport { delta, pitch, first_focal_only: ff_only, separating: sep.len(), pass: violations.is_empty(), violations }
}
