//! Focal times, cut times, classification and the sampled cut locus.

use rayon::prelude::*;

use super::fan::{DistancePlan, NormalFan};
use super::shoot::{distinct, shoot, DistanceWitness, Minimizer};
use crate::atlas::ChartPoint;
use crate::error::{Error, Result};
use crate::geodesic::{frame_degeneracy, OdeTolerances};
use crate::metric::MetricField;
use crate::submanifold::{normal_exp, normal_frame, sample_unit_cone, ConeGrid, NormalRay, SubmanifoldSpec};

/// First focal time along `ray` in `(0, t_max]`, or `+∞`.
pub fn focal_time(
    metric: &MetricField,
    spec: &SubmanifoldSpec,
    ray: &NormalRay,
    t_max: f64,
    tol: OdeTolerances,
) -> Result<f64> {
    if !(t_max > 0.0) {
        return Err(Error::Precondition("focal time needs t_max > 0".into()));
    }
    if spec.param_dim + spec.psi_free() == 0 {
        // a point on a line: exp^ν is a local diffeomorphism everywhere
        return Ok(f64::INFINITY);
    }
    let frame = normal_frame(metric, spec, ray, t_max, tol)?;
    let t_min = (1e-4f64).min(0.01 * t_max);
    Ok(frame_degeneracy(&frame, t_min, t_max, true).unwrap_or(f64::INFINITY))
}

/// `d(N, q)` with a freshly built fan.
pub fn distance_to(
    metric: &MetricField,
    spec: &SubmanifoldSpec,
    q: &ChartPoint,
    plan: &DistancePlan,
) -> Result<DistanceWitness> {
    NormalFan::build(metric, spec, plan)?.distance_to(q)
}

/// `d(p, q)`: distance from the point submanifold `{p}`.
pub fn point_distance(metric: &MetricField, p: &ChartPoint, q: &ChartPoint, plan: &DistancePlan) -> Result<DistanceWitness> {
    let spec = SubmanifoldSpec::point(p.chart, p.x.as_slice());
    distance_to(metric, &spec, q, plan)
}

/// Whether `t ↦ exp^ν(t v)` still realizes `d(N, ·)` at time `t`.
pub fn is_minimizing(
    metric: &MetricField,
    spec: &SubmanifoldSpec,
    ray: &NormalRay,
    t: f64,
    plan: &DistancePlan,
) -> Result<bool> {
    NormalFan::build(metric, spec, plan)?.is_minimizing(ray, t)
}

/// Cut time of one ray.
#[derive(Clone, Debug)]
pub struct CutTime {
    pub rho: f64,
    pub lambda: f64,
    /// `ρ = +∞` only because the search horizon was reached.
    pub horizon_limited: bool,
    /// A distinct root beating the ray just past `ρ`.
    pub competitor: Option<Minimizer>,
    pub bisection_iterations: usize,
    pub distance_evaluations: usize,
    /// Whether `ρ` was polished by tracking the competitor.
    pub tracked: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CutClass {
    Separating,
    FirstFocal,
}

impl CutClass {
    pub fn name(self) -> &'static str {
        match self {
            CutClass::Separating => "Separating",
            CutClass::FirstFocal => "FirstFocal",
        }
    }
}

/// Per-ray cut data.
#[derive(Clone, Debug)]
pub struct CutRecord {
    /// Position in the grid order.
    pub index: usize,
    pub ray: NormalRay,
    pub rho: f64,
    pub lambda: f64,
    pub horizon_limited: bool,
    pub cut_point: Option<ChartPoint>,
    pub classification: Vec<CutClass>,
    pub competitor: Option<Minimizer>,
    /// Distinct minimizers found at the cut point.
    pub minimizer_count: usize,
    pub bisection_iterations: usize,
    pub distance_evaluations: usize,
    /// Largest shooting residual among the cut-point minimizers.
    pub residual: f64,
    /// Set when classification came out empty.
    pub violation: Option<String>,
}

impl CutRecord {
    pub fn is_separating(&self) -> bool {
        self.classification.contains(&CutClass::Separating)
    }

    pub fn is_first_focal(&self) -> bool {
        self.classification.contains(&CutClass::FirstFocal)
    }
}

impl NormalFan {
    pub fn focal_time(&self, ray: &NormalRay, t_max: f64) -> Result<f64> {
        focal_time(self.metric(), self.spec(), ray, t_max, self.plan().tol)
    }

    /// `ρ(v)` by bisection of the minimality predicate on
    /// `(0, min(λ, horizon)]`, then polished by following the competing
    /// branch to the time where both arrive together.
    pub fn cut_time(&self, ray: &NormalRay) -> Result<CutTime> {
        let plan = self.plan();
        let h = plan.horizon;
        let lambda = self.focal_time(ray, 2.0 * h)?;
        let upper = lambda.min(h);
        let mut evals = 1;
        let (ok, w_up) = self.minimality(ray, upper)?;
        if ok {
            if lambda <= h {
                return Ok(CutTime {
                    rho: lambda,
                    lambda,
                    horizon_limited: false,
                    competitor: None,
                    bisection_iterations: 0,
                    distance_evaluations: evals,
                    tracked: false,
                });
            }
            // minimizing through the horizon: look once more at twice the horizon
            let far = lambda.min(2.0 * h);
            let (ok_far, _) = self.minimality(ray, far)?;
            evals += 1;
            let unbounded = ok_far && lambda.is_infinite();
            return Ok(CutTime {
                rho: f64::INFINITY,
                lambda,
                horizon_limited: !unbounded,
                competitor: None,
                bisection_iterations: 0,
                distance_evaluations: evals,
                tracked: false,
            });
        }
        let mut competitor = beating_root(self, ray, upper, &w_up);
        let (mut a, mut b) = (0.0, upper);
        let mut iterations = 0;
        while b - a > plan.bisection_tol {
            let m = 0.5 * (a + b);
            let (ok, w) = self.minimality(ray, m)?;
            evals += 1;
            iterations += 1;
            if ok {
                a = m;
            } else {
                b = m;
                competitor = beating_root(self, ray, m, &w).or(competitor);
            }
        }
        let mut rho = 0.5 * (a + b);
        let mut tracked = false;
        if let Some(c) = &competitor {
            if let Some((t, c2)) = self.track_tie(ray, c, a, b) {
                rho = t;
                competitor = Some(c2);
                tracked = true;
            }
        }
        Ok(CutTime {
            rho,
            lambda,
            horizon_limited: false,
            competitor,
            bisection_iterations: iterations,
            distance_evaluations: evals,
            tracked,
        })
    }

    /// Solves `t = d_c(γ(t))` for the branch `c` by the secant method,
    /// re-shooting `c` from its previous root. Accepted only inside a
    /// slightly widened `[a, b]`.
    fn track_tie(&self, ray: &NormalRay, c: &Minimizer, a: f64, b: f64) -> Option<(f64, Minimizer)> {
        let plan = self.plan();
        let metric = self.metric();
        let spec = self.spec();
        let mut branch = c.clone();
        let eval = |t: f64, from: &Minimizer| -> Option<(f64, Minimizer)> {
            let q = normal_exp(metric, ray, t, plan.tol).ok()?;
            let m = shoot(metric, spec, &q, &from.ray.theta, &from.ray.psi, from.t, plan)?;
            // must stay on the competing branch, away from the ray itself
            let own = Minimizer { ray: ray.clone(), t, residual: 0.0, terminal: m.terminal.clone() };
            if !distinct(metric, &own, &Minimizer { t, ..m.clone() }, plan.distinct_angle) {
                return None;
            }
            Some((t - m.t, m))
        };
        let (mut t0, mut t1) = (b, a.max(0.5 * b));
        let (mut h0, m0) = eval(t0, &branch)?;
        branch = m0;
        let (mut h1, m1) = eval(t1, &branch)?;
        branch = m1;
        for _ in 0..30 {
            if h1.abs() < 1e-12 || (t1 - t0).abs() < 1e-13 {
                break;
            }
            let denom = h1 - h0;
            if denom == 0.0 {
                return None;
            }
            let t2 = t1 - h1 * (t1 - t0) / denom;
            if !(t2 > 0.0) || !t2.is_finite() {
                return None;
            }
            let (h2, m2) = eval(t2, &branch)?;
            t0 = t1;
            h0 = h1;
            t1 = t2;
            h1 = h2;
            branch = m2;
        }
        let widen = 4.0 * plan.minimality_slack + plan.bisection_tol;
        if !(h1.abs() < 1e-9 && t1 <= b + widen) {
            return None;
        }
        if t1 >= a - widen {
            return Some((t1, branch));
        }
        // The bisection missed this tie: the fan lost the competing root
        // near a caustic. The tie is the cut time only if nothing beats it.
        let q = normal_exp(metric, ray, t1, plan.tol).ok()?;
        let mut all = self.distance_to(&q).ok()?.roots;
        all.push(branch.clone());
        let w = self.witness(&q, &mut all);
        (w.d >= t1 - plan.minimality_slack).then_some((t1, branch))
    }

    /// Classification of the cut point of `record`, together with the witness
    /// computed there. Empty classifications are returned as errors.
    pub fn classify_cut_point(&self, record: &CutRecord) -> Result<(Vec<CutClass>, DistanceWitness)> {
        let Some(q) = &record.cut_point else {
            return Err(Error::Precondition("classification needs a finite cut time".into()));
        };
        let mut w = self.distance_to(q)?;
        if let Some(c) = &record.competitor {
            // the tracked branch is a root at the cut point by construction
            if let Some(m) =
                shoot(self.metric(), self.spec(), q, &c.ray.theta, &c.ray.psi, c.t, self.plan())
            {
                let mut all = w.roots.clone();
                all.push(m);
                if let Some(own) =
                    shoot(self.metric(), self.spec(), q, &record.ray.theta, &record.ray.psi, record.rho, self.plan())
                {
                    all.push(own);
                }
                w = self.witness(q, &mut all);
            }
        }
        let mut classes = Vec::new();
        if w.minimizers.len() >= 2 {
            classes.push(CutClass::Separating);
        }
        if (record.rho - record.lambda).abs() <= self.plan().focal_match {
            classes.push(CutClass::FirstFocal);
        }
        if classes.is_empty() {
            return Err(Error::Numerical(format!(
                "cut point at rho = {} has a single minimizer (d = {}, residual {:e}) and lambda = {}; review tolerances",
                record.rho,
                w.d,
                w.minimizers.first().map_or(f64::NAN, |m| m.residual),
                record.lambda
            )));
        }
        Ok((classes, w))
    }

    /// Cut time, cut point and classification of one ray.
    pub fn cut_record(&self, index: usize, ray: &NormalRay) -> Result<CutRecord> {
        Ok(self.cut_record_with_witness(index, ray)?.0)
    }

    /// [`NormalFan::cut_record`] together with the witness at the cut point.
    pub fn cut_record_with_witness(&self, index: usize, ray: &NormalRay) -> Result<(CutRecord, Option<DistanceWitness>)> {
        let ct = self.cut_time(ray)?;
        let mut rec = CutRecord {
            index,
            ray: ray.clone(),
            rho: ct.rho,
            lambda: ct.lambda,
            horizon_limited: ct.horizon_limited,
            cut_point: None,
            classification: Vec::new(),
            competitor: ct.competitor,
            minimizer_count: 0,
            bisection_iterations: ct.bisection_iterations,
            distance_evaluations: ct.distance_evaluations,
            residual: 0.0,
            violation: None,
        };
        let mut witness = None;
        if rec.rho.is_finite() {
            rec.cut_point = Some(normal_exp(self.metric(), ray, rec.rho, self.plan().tol)?);
            match self.classify_cut_point(&rec) {
                Ok((classes, w)) => {
                    rec.classification = classes;
                    rec.minimizer_count = w.minimizers.len();
                    rec.residual = w.minimizers.iter().map(|m| m.residual).fold(0.0, f64::max);
                    if rec.competitor.is_none() {
                        rec.competitor = w
                            .minimizers
                            .iter()
                            .find(|m| distinct(self.metric(), m, &own_root(ray, m.t, m), self.plan().distinct_angle))
                            .cloned();
                    }
                    witness = Some(w);
                }
                Err(Error::Numerical(msg)) => rec.violation = Some(msg),
                Err(e) => return Err(e),
            }
        }
        Ok((rec, witness))
    }

    /// Cut records over a grid of `S(ν)`, in grid order.
    pub fn cut_locus(&self, grid: &ConeGrid) -> Result<CutLocus> {
        let sample = sample_unit_cone(self.metric(), self.spec(), grid)?;
        let results: Vec<Result<CutRecord>> =
            sample.rays.par_iter().enumerate().map(|(i, ray)| self.cut_record(i, ray)).collect();
        let mut records = Vec::new();
        let mut failures = sample.failures;
        for (ray, r) in sample.rays.iter().zip(results) {
            match r {
                Ok(rec) => records.push(rec),
                Err(e) => failures.push((ray.theta.clone(), ray.psi.clone(), e)),
            }
        }
        Ok(CutLocus { records, failures })
    }
}

/// Records of a cut-locus computation with per-ray failures.
#[derive(Clone, Debug)]
pub struct CutLocus {
    pub records: Vec<CutRecord>,
    pub failures: Vec<(Vec<f64>, Vec<f64>, Error)>,
}

impl CutLocus {
    /// Points `exp^ν(ρ(v) v)` of the finite records.
    pub fn points(&self) -> Vec<ChartPoint> {
        self.records.iter().filter_map(|r| r.cut_point.clone()).collect()
    }

    /// The tangent cut locus `{ρ(v) v}` as (base, vector) pairs.
    pub fn tangent_points(&self) -> Vec<(ChartPoint, Vec<f64>)> {
        self.records
            .iter()
            .filter(|r| r.rho.is_finite())
            .map(|r| (r.ray.base_point(), r.ray.v.iter().map(|c| c * r.rho).collect()))
            .collect()
    }
}

fn own_root(ray: &NormalRay, t: f64, like: &Minimizer) -> Minimizer {
    Minimizer { ray: ray.clone(), t, residual: 0.0, terminal: like.terminal.clone() }
}

/// The shortest root of `w` that is not the ray itself and beats time `t`.
fn beating_root(fan: &NormalFan, ray: &NormalRay, t: f64, w: &DistanceWitness) -> Option<Minimizer> {
    let plan = fan.plan();
    w.roots
        .iter()
        .filter(|m| m.t < t - plan.minimality_slack)
        .find(|m| distinct(fan.metric(), &own_root(ray, m.t, m), m, plan.distinct_angle))
        .cloned()
}
