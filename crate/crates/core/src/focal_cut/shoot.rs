//! Damped Gauss–Newton shooting for `exp^ν(t v(θ, ψ)) = q`.

use nalgebra::{DMatrix, DVector};

use super::fan::DistancePlan;
use crate::atlas::{ChartPoint, ManifoldAtlas};
use crate::metric::{MetricField, TangentVec};
use crate::submanifold::{jacobian_from_frame, normal_frame, unit_normal, NormalRay, SubmanifoldSpec};

/// A normal geodesic `t ↦ exp^ν(t v)` ending at a target point.
#[derive(Clone, Debug, PartialEq)]
pub struct Minimizer {
    pub ray: NormalRay,
    pub t: f64,
    /// Coordinate distance between the computed endpoint and the target.
    pub residual: f64,
    /// Position and velocity at time `t`.
    pub terminal: TangentVec,
}

/// Result of a distance computation from `N`.
#[derive(Clone, Debug)]
pub struct DistanceWitness {
    pub q: ChartPoint,
    pub d: f64,
    /// Distinct roots with `t ≤ d + 1e-6`, sorted by `t`.
    pub minimizers: Vec<Minimizer>,
    /// Every distinct root found, sorted by `t`.
    pub roots: Vec<Minimizer>,
}

impl DistanceWitness {
    pub fn is_unique(&self) -> bool {
        self.minimizers.len() == 1
    }
}

/// `x(end) − q` in the chart of `end`, reduced modulo the lattice.
pub(crate) fn residual_in(atlas: &ManifoldAtlas, end: &ChartPoint, q: &ChartPoint) -> Option<DVector<f64>> {
    let qc = atlas.to_chart(q, end.chart)?;
    let mut d: Vec<f64> = end.x.iter().zip(qc.iter()).map(|(a, b)| a - b).collect();
    atlas.reduce_displacement(&mut d);
    Some(DVector::from_vec(d))
}

struct Eval {
    ray: NormalRay,
    r: DVector<f64>,
    jac: DMatrix<f64>,
    terminal: TangentVec,
}

/// Unknowns are `u = (θ, ψ_free, t)`; hypersurfaces carry their side in `sign`.
struct Problem<'a> {
    metric: &'a MetricField,
    spec: &'a SubmanifoldSpec,
    q: &'a ChartPoint,
    sign: Option<f64>,
    plan: &'a DistancePlan,
}

impl Problem<'_> {
    fn split(&self, u: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
        let k = self.spec.param_dim;
        let f = self.spec.psi_free();
        let psi = match self.sign {
            Some(s) => vec![s],
            None => u[k..k + f].to_vec(),
        };
        (u[..k].to_vec(), psi, u[k + f])
    }

    fn evaluate(&self, u: &[f64]) -> Option<Eval> {
        let (theta, psi, t) = self.split(u);
        let ray = unit_normal(self.metric, self.spec, &theta, &psi).ok()?;
        let frame = normal_frame(self.metric, self.spec, &ray, t.max(1e-6), self.plan.tol).ok()?;
        let free = self.spec.param_dim + self.spec.psi_free();
        let (chart, jac, _) = jacobian_from_frame(&frame, t, free > 0);
        let terminal = frame.state(t);
        let r = residual_in(self.metric.atlas(), &ChartPoint::new(chart, terminal.x.clone()), self.q)?;
        Some(Eval { ray, r, jac, terminal })
    }

    fn project(&self, u: &mut [f64]) {
        let k = self.spec.param_dim;
        let f = self.spec.psi_free();
        self.spec.wrap_theta(&mut u[..k]);
        for (i, th) in u[..k].iter_mut().enumerate() {
            if !self.spec.periodic[i] {
                let (lo, hi) = self.spec.domain[i];
                *th = th.clamp(lo, hi);
            }
        }
        if f == 1 {
            u[k] = u[k].rem_euclid(std::f64::consts::TAU);
        }
    }
}

/// Shoots from the seed `(θ₀, ψ₀, t₀)` towards `q`. Returns `None` when the
/// iteration does not reach `plan.accept_tol`.
pub(crate) fn shoot(
    metric: &MetricField,
    spec: &SubmanifoldSpec,
    q: &ChartPoint,
    theta0: &[f64],
    psi0: &[f64],
    t0: f64,
    plan: &DistancePlan,
) -> Option<Minimizer> {
    let sign = spec.is_hypersurface().then(|| psi0.first().copied().unwrap_or(1.0));
    let pb = Problem { metric, spec, q, sign, plan };
    let mut u: Vec<f64> = theta0.to_vec();
    if sign.is_none() {
        u.extend_from_slice(psi0);
    }
    u.push(t0.max(0.0));
    let m = u.len();
    let t_floor = if spec.is_hypersurface() { 0.0 } else { 1e-9 };
    let mut cur = pb.evaluate(&u)?;
    let mut mu = 1e-6;
    for _ in 0..plan.max_iterations {
        let rn = cur.r.norm();
        if rn <= plan.newton_tol {
            break;
        }
        let jt = cur.jac.transpose();
        let jtj = &jt * &cur.jac;
        let grad = &jt * &cur.r;
        let scale = jtj.diagonal().amax().max(1e-300);
        let mut accepted = false;
        let mut rejected = 0;
        // below the acceptance level the residual is mostly integration noise
        let patience = if rn <= plan.accept_tol { 2 } else { usize::MAX };
        while mu < 1e12 && rejected < patience {
            let mut a = jtj.clone();
            for i in 0..m {
                a[(i, i)] += mu * scale;
            }
            let Some(step) = a.lu().solve(&(-&grad)) else {
                mu *= 4.0;
                continue;
            };
            let big = step.amax();
            let fac = if big > 0.5 { 0.5 / big } else { 1.0 };
            let mut trial = u.clone();
            for i in 0..m {
                trial[i] += fac * step[i];
            }
            if trial[m - 1] < t_floor {
                trial[m - 1] = if t_floor == 0.0 { 0.0 } else { 0.5 * u[m - 1] };
            }
            pb.project(&mut trial);
            if let Some(next) = pb.evaluate(&trial) {
                if next.r.norm() < rn {
                    u = trial;
                    cur = next;
                    mu = (mu / 5.0).max(1e-15);
                    accepted = true;
                    break;
                }
            }
            mu *= 4.0;
            rejected += 1;
        }
        if !accepted {
            break;
        }
    }
    let residual = cur.r.norm();
    if residual > plan.accept_tol {
        return None;
    }
    let t = u[m - 1];
    Some(Minimizer { ray: cur.ray, t, residual, terminal: cur.terminal })
}

/// Angle between unit vectors `a`, `b` at one base point, measured with `g_a`.
pub(crate) fn g_angle(metric: &MetricField, chart: usize, x: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let fa = metric.f(chart, x, a);
    let fb = metric.f(chart, x, b);
    let Ok(g) = metric.g_inner(chart, x, a, a, b) else {
        return std::f64::consts::PI;
    };
    (g / (fa * fb)).clamp(-1.0, 1.0).acos()
}

/// Whether two roots are different normal geodesics: their initial
/// velocities differ (base separation or `g`-angle above `angle`), or they
/// follow one geodesic to different times.
pub(crate) fn distinct(metric: &MetricField, a: &Minimizer, b: &Minimizer, angle: f64) -> bool {
    let atlas = metric.atlas();
    if atlas.separation(&a.ray.base_point(), &b.ray.base_point()) > angle {
        return true;
    }
    // rays of one spec share its chart
    if g_angle(metric, a.ray.chart, a.ray.base.as_slice(), a.ray.v.as_slice(), b.ray.v.as_slice()) > angle {
        return true;
    }
    (a.t - b.t).abs() > 1e-6
}
