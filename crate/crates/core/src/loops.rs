//! Minima of `𝓜_q(x) = d(N, x) + d(x, q)` on the cut locus, the
//! two-segment dichotomy at such minima, and `N`-geodesic loops.

use crate::atlas::ChartPoint;
use crate::error::{Error, Result};
use crate::focal_cut::{residual_in, shoot, CutRecord, DistancePlan, DistanceWitness, Minimizer, NormalFan};
use crate::geodesic::{integrate_geodesic, GeodesicPath};
use crate::metric::{MetricField, TangentVec};
use crate::submanifold::{normal_exp, unit_normal, NormalRay, SubmanifoldSpec};

/// Velocity residual below which a concatenation counts as smooth.
pub const SMOOTH_TOL: f64 = 1e-4;
/// Velocity residual above which a concatenation counts as broken.
pub const BROKEN_TOL: f64 = 1e-2;

const GOLDEN_ITERATIONS: usize = 24;

/// A point of the cut locus reached along a normal ray.
#[derive(Clone, Debug)]
pub struct CutSample {
    pub ray: NormalRay,
    pub rho: f64,
    pub point: ChartPoint,
}

/// Global minimum of `𝓜_q` over the sampled cut locus.
#[derive(Clone, Debug)]
pub struct MMinimum {
    pub q: ChartPoint,
    pub x0: CutSample,
    /// `d(N, x₀)`.
    pub d_n: f64,
    /// `d(x₀, q)`.
    pub d_q: f64,
    pub value: f64,
    /// Best value on the grid before refinement.
    pub grid_value: f64,
    /// Grid index of the best record.
    pub grid_index: usize,
}

/// `(key, parameter)` of a ray on a one-dimensional `S(ν)`: the side and
/// `θ` of a curve, or the direction angle at a point of a surface.
fn strand_coords(spec: &SubmanifoldSpec, ray: &NormalRay) -> Option<(f64, f64)> {
    match (spec.param_dim, spec.psi_free()) {
        (1, 0) => Some((ray.psi[0], ray.theta[0])),
        (0, 1) => Some((0.0, ray.psi[0])),
        _ => None,
    }
}

fn strand_ray(metric: &MetricField, spec: &SubmanifoldSpec, key: f64, param: f64) -> Result<NormalRay> {
    if spec.param_dim == 1 {
        let mut theta = [param];
        spec.wrap_theta(&mut theta);
        if !spec.periodic[0] {
            let (lo, hi) = spec.domain[0];
            theta[0] = theta[0].clamp(lo, hi);
        }
        unit_normal(metric, spec, &theta, &[key])
    } else {
        unit_normal(metric, spec, &[], &[param])
    }
}

/// Neighbors of record `i` along its strand, as parameters.
fn strand_bracket(spec: &SubmanifoldSpec, records: &[CutRecord], i: usize) -> Option<(f64, f64, f64)> {
    let (key, p) = strand_coords(spec, &records[i].ray)?;
    let mut params: Vec<f64> = records
        .iter()
        .filter_map(|r| strand_coords(spec, &r.ray))
        .filter(|(k, _)| *k == key)
        .map(|(_, q)| q)
        .collect();
    params.sort_by(f64::total_cmp);
    params.dedup();
    if params.len() < 2 {
        return None;
    }
    let pos = params.iter().position(|&q| q == p)?;
    let periodic = spec.param_dim == 0 || spec.periodic[0];
    let period = if spec.param_dim == 1 { spec.domain[0].1 - spec.domain[0].0 } else { std::f64::consts::TAU };
    let n = params.len();
    let lo = match pos {
        0 if periodic => params[n - 1] - period,
        0 => p,
        _ => params[pos - 1],
    };
    let hi = if pos + 1 < n {
        params[pos + 1]
    } else if periodic {
        params[0] + period
    } else {
        p
    };
    Some((key, lo, hi))
}

/// Golden-section search of `f` on `[a, b]` starting from the known value
/// at the interior point `m`. Returns the best `(param, value)` seen.
fn golden<F>(mut f: F, a: f64, b: f64, m: (f64, f64)) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (a, b);
    let mut best = m;
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    for _ in 0..GOLDEN_ITERATIONS {
        for (x, v) in [(x1, f1), (x2, f2)] {
            if v < best.1 {
                best = (x, v);
            }
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = f(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = f(x2)?;
        }
    }
    for (x, v) in [(x1, f1), (x2, f2)] {
        if v < best.1 {
            best = (x, v);
        }
    }
    Ok(best)
}

impl NormalFan {
    /// `(ρ(v), exp^ν(ρ(v) v))` for one ray.
    pub fn cut_sample(&self, ray: &NormalRay) -> Result<CutSample> {
        let rho = self.cut_time(ray)?.rho;
        if !rho.is_finite() {
            return Err(Error::UndefinedFunctional("cut time along the ray is infinite".into()));
        }
        let point = normal_exp(self.metric(), ray, rho, self.plan().tol)?;
        Ok(CutSample { ray: ray.clone(), rho, point })
    }

    /// Minimizes `𝓜_q(x) = d(N, x) + d(x, q)` over the cut points of
    /// `records`, then refines along the ray strand of the best one.
    /// `d(x, q)` is measured from `q` in the reversed metric.
    pub fn min_m_on_cut(&self, q: &ChartPoint, records: &[CutRecord]) -> Result<MMinimum> {
        if records.is_empty() {
            return Err(Error::UndefinedFunctional("no cut records".into()));
        }
        if let Some(r) = records.iter().find(|r| !r.rho.is_finite()) {
            return Err(Error::UndefinedFunctional(format!(
                "ray {} has infinite cut time, so the cut locus is not compact",
                r.index
            )));
        }
        let reverse = self.reverse_point_fan(q)?;
        let mut best: Option<(usize, f64, f64)> = None;
        for (i, r) in records.iter().enumerate() {
            let Some(p) = &r.cut_point else { continue };
            let dq = reverse.distance_to(p)?.d;
            let v = r.rho + dq;
            if best.is_none_or(|b| v < b.1) {
                best = Some((i, v, dq));
            }
        }
        let (i, grid_value, grid_dq) = best.ok_or_else(|| Error::UndefinedFunctional("no finite cut points".into()))?;
        let rec = &records[i];
        let mut x0 = CutSample { ray: rec.ray.clone(), rho: rec.rho, point: rec.cut_point.clone().unwrap() };
        let (mut value, mut d_q) = (grid_value, grid_dq);
        if let Some((key, lo, hi)) = strand_bracket(self.spec(), records, i) {
            let p0 = strand_coords(self.spec(), &rec.ray).unwrap().1;
            let mut eval = |p: f64| -> Result<f64> {
                let ray = strand_ray(self.metric(), self.spec(), key, p)?;
                let s = self.cut_sample(&ray)?;
                Ok(s.rho + reverse.distance_to(&s.point)?.d)
            };
            let (p, v) = golden(&mut eval, lo, hi, (p0, grid_value))?;
            if v < grid_value {
                let ray = strand_ray(self.metric(), self.spec(), key, p)?;
                x0 = self.cut_sample(&ray)?;
                d_q = reverse.distance_to(&x0.point)?.d;
                value = x0.rho + d_q;
            }
        }
        Ok(MMinimum { q: q.clone(), d_n: x0.rho, x0, d_q, value, grid_value, grid_index: rec.index })
    }

    /// Fan of the reversed metric from the point `q`, so that its distances
    /// are `d(·, q)` of the original metric.
    fn reverse_point_fan(&self, q: &ChartPoint) -> Result<NormalFan> {
        let reversed = self.metric().reverse();
        let spec = SubmanifoldSpec::point(q.chart, q.x.as_slice());
        NormalFan::build(&reversed, &spec, &point_plan(self.plan()))
    }

    /// Fan of the metric itself from the point `x`.
    fn forward_point_fan(&self, x: &ChartPoint) -> Result<NormalFan> {
        let spec = SubmanifoldSpec::point(x.chart, x.x.as_slice());
        NormalFan::build(self.metric(), &spec, &point_plan(self.plan()))
    }

    /// Focal check of the segments at `x`: a segment of length `ℓ` whose
    /// focal time matches `ℓ` makes `x` a focal point.
    fn focal_segments(&self, w: &DistanceWitness) -> Result<Vec<bool>> {
        w.minimizers
            .iter()
            .map(|m| {
                let lambda = self.focal_time(&m.ray, 2.0 * m.t.max(1e-3))?;
                Ok((lambda - m.t).abs() <= self.plan().focal_match)
            })
            .collect()
    }

    /// Counts the `N`-segments at `x0` with a refined multistart.
    pub fn verify_two_segments(&self, x0: &ChartPoint) -> Result<TwoSegmentReport> {
        let refined = self.refined()?;
        let w = refined.distance_to(x0)?;
        if refined.focal_segments(&w)?.into_iter().any(|f| f) {
            return Err(Error::Precondition("the point is a focal point of N".into()));
        }
        let count = w.minimizers.len();
        let note = match count {
            2 => None,
            0 | 1 => Some("fewer than two segments: the point is not a separating point".to_string()),
            _ => Some(format!(
                "{count} segments: under the lemma's hypotheses this point cannot minimize the functional"
            )),
        };
        Ok(TwoSegmentReport {
            x0: x0.clone(),
            d: w.d,
            count,
            residuals: w.minimizers.iter().map(|m| m.residual).collect(),
            lengths: w.minimizers.iter().map(|m| m.t).collect(),
            pass: count == 2,
            note,
        })
    }

    /// A fan with twice the rays in each free direction and more seeds.
    fn refined(&self) -> Result<NormalFan> {
        let mut plan = self.plan().clone();
        plan.grid.theta_count = (plan.grid.theta_count * 2).max(1);
        if self.spec().psi_free() > 0 {
            plan.grid.psi_count *= 2;
        }
        plan.max_seeds *= 2;
        self.with_plan(&plan)
    }

    /// Local minima of `d(N, ·)` on the sampled cut locus, each closed into
    /// an `N`-geodesic loop from its two segments (reversible metrics only).
    pub fn find_geodesic_loop(&self, records: &[CutRecord]) -> Result<LoopSearch> {
        let metric = self.metric();
        if !metric.is_reversible() {
            return Err(Error::Precondition(
                "geodesic loops need a reversible metric; the reversed segment is not a geodesic otherwise".into(),
            ));
        }
        if !self.spec().closed {
            return Err(Error::Precondition("geodesic loops need a closed submanifold".into()));
        }
        if records.iter().any(|r| !r.rho.is_finite()) {
            return Err(Error::Precondition("geodesic loops need a compact cut locus (all cut times finite)".into()));
        }
        let mut search = LoopSearch::default();
        for i in local_minima(metric, self.spec(), records) {
            let rec = &records[i];
            let (sample, witness) = self.refine_rho_minimum(records, i)?;
            let Some(witness) = witness else {
                search.rejected.push((sample.point.clone(), rec.violation.clone().unwrap_or_default()));
                continue;
            };
            if search.loops.iter().any(|l| metric.atlas().separation(&l.x0, &sample.point) < 1e-6)
                || search.focal.iter().any(|f| metric.atlas().separation(&f.x0, &sample.point) < 1e-6)
            {
                continue;
            }
            let focal = self.focal_segments(&witness)?;
            if focal.iter().any(|&f| f) {
                let lambda = self.focal_time(&sample.ray, 2.0 * sample.rho)?;
                search.focal.push(FocalMinimum { x0: sample.point.clone(), d: witness.d, lambda });
                continue;
            }
            match assemble_loop(metric, &sample.point, &witness, self.plan()) {
                Ok(l) => search.loops.push(l),
                Err(e) => search.rejected.push((sample.point.clone(), e.to_string())),
            }
        }
        search.loops.sort_by(|a, b| a.length.total_cmp(&b.length));
        if search.loops.is_empty() && search.focal.is_empty() {
            let why: Vec<String> = search.rejected.iter().map(|(_, e)| e.clone()).collect();
            return Err(Error::Numerical(format!("no loop could be assembled: {}", why.join("; "))));
        }
        Ok(search)
    }

    /// Refines a grid minimum of `ρ` along its strand; returns the cut
    /// sample and the witness at its cut point.
    fn refine_rho_minimum(&self, records: &[CutRecord], i: usize) -> Result<(CutSample, Option<DistanceWitness>)> {
        let rec = &records[i];
        let mut ray = rec.ray.clone();
        if let Some((key, lo, hi)) = strand_bracket(self.spec(), records, i) {
            let p0 = strand_coords(self.spec(), &rec.ray).unwrap().1;
            let eval = |p: f64| -> Result<f64> { self.cut_time(&strand_ray(self.metric(), self.spec(), key, p)?).map(|c| c.rho) };
            let (p, v) = golden(eval, lo, hi, (p0, rec.rho))?;
            if v < rec.rho {
                ray = strand_ray(self.metric(), self.spec(), key, p)?;
            }
        }
        let (r, w) = self.cut_record_with_witness(rec.index, &ray)?;
        let point = r.cut_point.clone().ok_or_else(|| Error::UndefinedFunctional("cut time along the ray is infinite".into()))?;
        Ok((CutSample { ray, rho: r.rho, point }, w))
    }

    /// Two `N`-geodesics ending at `q`: the segment, and a geodesic crossing
    /// the cut locus at the `𝓜_q`-minimizer `x₀`.
    pub fn two_geodesics_to(&self, q: &ChartPoint, records: &[CutRecord]) -> Result<TwoGeodesicsOutcome> {
        let first_focal_only: Vec<usize> =
            records.iter().filter(|r| r.is_first_focal() && !r.is_separating()).map(|r| r.index).collect();
        if !first_focal_only.is_empty() {
            return Ok(TwoGeodesicsOutcome::FocalBranch { first_focal_only });
        }
        let metric = self.metric();
        let wq = self.distance_to(q)?;
        if wq.minimizers.len() >= 2 && wq.d > 1e-9 {
            // q ∈ Se(N): two segments already
            let a = NGeodesic::from_minimizer(&wq.minimizers[0]);
            let b = NGeodesic::from_minimizer(&wq.minimizers[1]);
            return Ok(TwoGeodesicsOutcome::Found(TwoGeodesics {
                q: q.clone(),
                segment: Some(a),
                second: b,
                crossing: None,
                pairings: Vec::new(),
            }));
        }
        let segment = (wq.d > 1e-9).then(|| NGeodesic::from_minimizer(&wq.minimizers[0]));
        let m = self.min_m_on_cut(q, records)?;
        let x0 = m.x0.point.clone();
        let (_, w0) = self.cut_record_with_witness(0, &m.x0.ray)?;
        let w0 = match w0 {
            Some(w) => w,
            None => self.distance_to(&x0)?,
        };
        let etas = if m.d_q > 1e-9 { self.forward_point_fan(&x0)?.distance_to(q)?.minimizers } else { Vec::new() };
        let mut pairings = Vec::new();
        for (i, g) in w0.minimizers.iter().enumerate() {
            for (j, e) in etas.iter().enumerate() {
                let residual = velocity_gap(metric, &g.terminal, &e.ray.tangent(1.0), -1.0)?;
                pairings.push(Pairing { segment: i, eta: j, residual, joint: Joint::of(residual) });
            }
        }
        let total = m.d_n + m.d_q;
        // candidate N-geodesics of length 𝓜(x₀) seeded from each segment,
        // best-matching pairs first
        let mut order: Vec<usize> = (0..w0.minimizers.len()).collect();
        let best_for = |i: usize| pairings.iter().filter(|p| p.segment == i).map(|p| p.residual).fold(f64::INFINITY, f64::min);
        order.sort_by(|&a, &b| best_for(a).total_cmp(&best_for(b)));
        let mut failures = Vec::new();
        for i in order {
            let g = &w0.minimizers[i];
            let Some(root) = shoot(metric, self.spec(), q, &g.ray.theta, &g.ray.psi, total, self.plan()) else {
                failures.push(format!("segment {i}: shooting to q failed"));
                continue;
            };
            if (root.t - total).abs() > 1e-5 {
                failures.push(format!("segment {i}: root length {} differs from {total}", root.t));
                continue;
            }
            let at_x0 = integrate_geodesic(metric, &root.ray.tangent(1.0), m.d_n, self.plan().tol)?.end();
            let gap = metric.atlas().separation(&ChartPoint::new(at_x0.chart, at_x0.x.clone()), &x0);
            if gap > 1e-5 {
                failures.push(format!("segment {i}: geodesic misses x0 by {gap:e}"));
                continue;
            }
            let joint = if etas.is_empty() {
                0.0
            } else {
                etas.iter()
                    .map(|e| velocity_gap(metric, &at_x0, &e.ray.tangent(1.0), -1.0))
                    .collect::<Result<Vec<f64>>>()?
                    .into_iter()
                    .fold(f64::INFINITY, f64::min)
            };
            if joint > SMOOTH_TOL {
                failures.push(format!("segment {i}: velocity residual {joint:e} at x0"));
                continue;
            }
            let second = NGeodesic { ray: root.ray.clone(), length: root.t, residual: root.residual };
            return Ok(TwoGeodesicsOutcome::Found(TwoGeodesics {
                q: q.clone(),
                segment,
                second,
                crossing: Some(Crossing { minimum: m, time: g.t.max(0.0), velocity_residual: joint }),
                pairings,
            }));
        }
        Err(Error::Numerical(format!(
            "no smooth concatenation through x0 among {} candidates: {}",
            w0.minimizers.len(),
            failures.join("; ")
        )))
    }
}

/// Horizon for point fans: enough to reach across the region the parent
/// fan covers.
fn point_plan(plan: &DistancePlan) -> DistancePlan {
    let mut p = plan.clone();
    p.horizon = 2.0 * plan.horizon;
    p.grid.theta_count = 1;
    p.grid.psi_count = plan.grid.psi_count.max(plan.grid.theta_count).max(32);
    p
}

/// Grid indices whose `ρ` is no larger than their strand neighbors' (or the
/// global minimum when `S(ν)` is not one-dimensional), lowest first, with
/// candidates sharing a cut point collapsed.
fn local_minima(metric: &MetricField, spec: &SubmanifoldSpec, records: &[CutRecord]) -> Vec<usize> {
    const FLAT: f64 = 1e-9;
    const MAX_CANDIDATES: usize = 8;
    let finite: Vec<usize> = (0..records.len()).filter(|&i| records[i].cut_point.is_some()).collect();
    let Some(&first) = finite.first() else { return Vec::new() };
    let mut out = Vec::new();
    if strand_coords(spec, &records[first].ray).is_none() {
        out.extend(finite.iter().copied().min_by(|&a, &b| records[a].rho.total_cmp(&records[b].rho)));
        return out;
    }
    let coords = |i: usize| strand_coords(spec, &records[i].ray).unwrap();
    let periodic = spec.param_dim == 0 || spec.periodic[0];
    let mut keys: Vec<f64> = finite.iter().map(|&i| coords(i).0).collect();
    keys.sort_by(f64::total_cmp);
    keys.dedup();
    for key in keys {
        let mut idx: Vec<usize> = finite.iter().copied().filter(|&i| coords(i).0 == key).collect();
        idx.sort_by(|&a, &b| coords(a).1.total_cmp(&coords(b).1));
        let n = idx.len();
        let rho = |k: usize| records[idx[k]].rho;
        for k in 0..n {
            let prev = if k > 0 { Some(k - 1) } else if periodic { Some(n - 1) } else { None };
            let next = if k + 1 < n { Some(k + 1) } else if periodic { Some(0) } else { None };
            if prev.is_none_or(|p| rho(k) <= rho(p) + FLAT) && next.is_none_or(|x| rho(k) <= rho(x) + FLAT) {
                out.push(idx[k]);
            }
        }
    }
    out.sort_by(|&a, &b| records[a].rho.total_cmp(&records[b].rho).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for i in out {
        let p = records[i].cut_point.as_ref().unwrap();
        if kept.iter().all(|&j| metric.atlas().separation(records[j].cut_point.as_ref().unwrap(), p) > 1e-6) {
            kept.push(i);
        }
        if kept.len() == MAX_CANDIDATES {
            break;
        }
    }
    kept
}

/// `‖a + sign·b‖` in the `g_a` norm, with `b` moved to the chart of `a`.
fn velocity_gap(metric: &MetricField, a: &TangentVec, b: &TangentVec, sign: f64) -> Result<f64> {
    let atlas = metric.atlas();
    let map = atlas
        .transition(b.chart, a.chart)
        .ok_or_else(|| Error::Consistency(format!("no transition from chart {} to {}", b.chart, a.chart)))?;
    let (_, bv) = map.push_state(b.x.as_slice(), b.v.as_slice());
    let w: Vec<f64> = a.v.iter().zip(&bv).map(|(x, y)| x + sign * y).collect();
    if w.iter().all(|c| c.abs() < 1e-300) {
        return Ok(0.0);
    }
    Ok(metric.g_inner(a.chart, a.x.as_slice(), a.v.as_slice(), &w, &w)?.max(0.0).sqrt())
}

/// The loop `γ₁ ∪ γ̄₂` through `x0` from its two shortest segments.
fn assemble_loop(metric: &MetricField, x0: &ChartPoint, w: &DistanceWitness, plan: &DistancePlan) -> Result<LoopResult> {
    if w.minimizers.len() < 2 {
        return Err(Error::Numerical(format!("{} segment(s) at the minimum; a loop needs two", w.minimizers.len())));
    }
    let (s1, s2) = (&w.minimizers[0], &w.minimizers[1]);
    let smoothness_residual = velocity_gap(metric, &s1.terminal, &s2.terminal, 1.0)?;
    if smoothness_residual > SMOOTH_TOL {
        return Err(Error::Numerical(format!(
            "segments meet with velocity residual {smoothness_residual:e} at the minimum"
        )));
    }
    let first = integrate_geodesic(metric, &s1.ray.tangent(1.0), s1.t, plan.tol)?;
    let second = integrate_geodesic(metric, &s2.ray.tangent(1.0), s2.t, plan.tol)?;
    let length = s1.t + s2.t;
    let mid = first.end();
    let mid_gap = metric.atlas().separation(&ChartPoint::new(mid.chart, mid.x.clone()), x0);
    let endpoint_gap = [(&first, &s1.ray), (&second, &s2.ray)]
        .iter()
        .map(|(p, r)| metric.atlas().separation(&p.point(0.0), &r.base_point()))
        .fold(0.0, f64::max);
    let speed_drift = first.speed.iter().chain(&second.speed).map(|&(_, f)| (f - 1.0).abs()).fold(0.0, f64::max);
    Ok(LoopResult {
        x0: x0.clone(),
        d: w.d,
        segments: [s1.clone(), s2.clone()],
        smoothness_residual,
        length,
        t_mid: s1.t,
        mid_gap,
        endpoint_gap,
        speed_drift,
        paths: [first, second],
    })
}

#[derive(Clone, Debug)]
pub struct TwoSegmentReport {
    pub x0: ChartPoint,
    pub d: f64,
    pub count: usize,
    pub residuals: Vec<f64>,
    pub lengths: Vec<f64>,
    pub pass: bool,
    pub note: Option<String>,
}

/// A unit-speed `N`-geodesic loop `γ₁ ∪ γ̄₂`.
#[derive(Clone, Debug)]
pub struct LoopResult {
    pub x0: ChartPoint,
    /// `d(N, x₀)`.
    pub d: f64,
    pub segments: [Minimizer; 2],
    /// `‖γ̇₁(ℓ) + γ̇₂(ℓ)‖` in the `g_{γ̇₁}` norm.
    pub smoothness_residual: f64,
    pub length: f64,
    /// Loop parameter of the crossing with the cut locus.
    pub t_mid: f64,
    /// Distance between the loop at `t_mid` and `x₀`.
    pub mid_gap: f64,
    /// Largest distance between a loop endpoint and its base point on `N`.
    pub endpoint_gap: f64,
    /// `max |F(γ̇) − 1|` over both halves.
    pub speed_drift: f64,
    paths: [GeodesicPath; 2],
}

impl LoopResult {
    /// The loop at parameter `t ∈ [0, length]`; the second half runs the
    /// second segment backwards.
    pub fn point(&self, t: f64) -> ChartPoint {
        let t = t.clamp(0.0, self.length);
        if t <= self.t_mid {
            self.paths[0].point(t)
        } else {
            self.paths[1].point(self.length - t)
        }
    }

    /// `samples + 1` evenly spaced points along the loop.
    pub fn polyline(&self, samples: usize) -> Vec<(f64, ChartPoint)> {
        let n = samples.max(1);
        (0..=n).map(|k| {
            let t = self.length * k as f64 / n as f64;
            (t, self.point(t))
        }).collect()
    }
}

#[derive(Clone, Debug)]
pub struct FocalMinimum {
    pub x0: ChartPoint,
    pub d: f64,
    pub lambda: f64,
}

/// Loops found at the local minima of `d(N, ·)` on the cut locus.
#[derive(Clone, Debug, Default)]
pub struct LoopSearch {
    /// Shortest first.
    pub loops: Vec<LoopResult>,
    /// Minima that are focal points of `N`.
    pub focal: Vec<FocalMinimum>,
    pub rejected: Vec<(ChartPoint, String)>,
}

impl LoopSearch {
    pub fn best(&self) -> Option<&LoopResult> {
        self.loops.first()
    }

    /// Every minimum examined was focal: the theorem's first alternative.
    pub fn focal_branch(&self) -> bool {
        self.loops.is_empty() && !self.focal.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Joint {
    Smooth,
    Broken,
    Unclear,
}

impl Joint {
    pub fn of(residual: f64) -> Joint {
        if residual <= SMOOTH_TOL {
            Joint::Smooth
        } else if residual > BROKEN_TOL {
            Joint::Broken
        } else {
            Joint::Unclear
        }
    }
}

/// Concatenation of segment `segment` to `x₀` with minimizer `eta` from `x₀` to `q`.
#[derive(Clone, Debug)]
pub struct Pairing {
    pub segment: usize,
    pub eta: usize,
    pub residual: f64,
    pub joint: Joint,
}

#[derive(Clone, Debug)]
pub struct NGeodesic {
    pub ray: NormalRay,
    pub length: f64,
    pub residual: f64,
}

impl NGeodesic {
    fn from_minimizer(m: &Minimizer) -> Self {
        NGeodesic { ray: m.ray.clone(), length: m.t, residual: m.residual }
    }

    /// End point `exp^ν(length · v)`.
    pub fn end(&self, metric: &MetricField, plan: &DistancePlan) -> Result<ChartPoint> {
        normal_exp(metric, &self.ray, self.length, plan.tol)
    }

    /// Coordinate distance between the end point and `q`.
    pub fn miss(&self, metric: &MetricField, q: &ChartPoint, plan: &DistancePlan) -> Result<f64> {
        let end = self.end(metric, plan)?;
        Ok(residual_in(metric.atlas(), &end, q).map_or(f64::INFINITY, |r| r.norm()))
    }
}

#[derive(Clone, Debug)]
pub struct Crossing {
    pub minimum: MMinimum,
    /// Parameter at which the second geodesic passes `x₀`.
    pub time: f64,
    pub velocity_residual: f64,
}

#[derive(Clone, Debug)]
pub struct TwoGeodesics {
    pub q: ChartPoint,
    /// The segment to `q`; `None` for the constant curve when `q ∈ N`.
    pub segment: Option<NGeodesic>,
    pub second: NGeodesic,
    /// Present when the second geodesic was built through the `𝓜_q`-minimizer.
    pub crossing: Option<Crossing>,
    pub pairings: Vec<Pairing>,
}

impl TwoGeodesics {
    pub fn smooth_pairings(&self) -> usize {
        self.pairings.iter().filter(|p| p.joint == Joint::Smooth).count()
    }
}

#[derive(Clone, Debug)]
pub enum TwoGeodesicsOutcome {
    Found(TwoGeodesics),
    /// The cut locus contains focal points that are not separating.
    FocalBranch { first_focal_only: Vec<usize> },
}

#[cfg(test)]
mod tests;
