//! The geodesic flow and its linearization as one first-order system.
//!
//! State layout: `[x, v, J (n×m, column-major), J̇ (n×m)]`. The Jacobi
//! columns obey the variational equation of `ẍ = −2G(x, ẋ)`, whose
//! coefficients come from evaluating the spray on first-order duals.

use nalgebra::{DMatrix, DVector};

use super::integrator::{integrate, OdeSystem, OdeTolerances, Trajectory};
use super::path::GeodesicPath;
use crate::atlas::TransitionMap;
use crate::dual::{Dual, D1, D2};
use crate::error::{Error, Result};
use crate::metric::{spray_s, MetricField, TangentVec, MIN_DIRECTION_NORM};

pub(crate) struct FlowSystem<'a> {
    pub metric: &'a MetricField,
    pub n: usize,
    pub m: usize,
}

impl FlowSystem<'_> {
    fn transform(map: &TransitionMap, n: usize, m: usize, y: &[f64]) -> (Vec<f64>, f64) {
        let x = &y[..n];
        let v = &y[n..2 * n];
        let mut out = vec![0.0; y.len()];
        let (x1, v1) = map.push_state(x, v);
        out[..n].copy_from_slice(&x1);
        out[n..2 * n].copy_from_slice(&v1);
        for c in 0..m {
            let j = &y[2 * n + c * n..2 * n + (c + 1) * n];
            let jd = &y[2 * n + n * m + c * n..2 * n + n * m + (c + 1) * n];
            // inner infinitesimal along J, outer along v: eps.eps = D²φ[J, v]
            let xs: Vec<D2> = (0..n).map(|i| Dual::new(D1::new(x[i], j[i]), D1::new(v[i], 0.0))).collect();
            let phi = map.apply(&xs);
            let (_, djd) = map.push_state(x, jd);
            for i in 0..n {
                out[2 * n + c * n + i] = phi[i].re.eps;
                out[2 * n + n * m + c * n + i] = phi[i].eps.eps + djd[i];
            }
        }
        let jac = DMatrix::from_fn(n, n, |r, col| {
            let e: Vec<f64> = (0..n).map(|k| if k == col { 1.0 } else { 0.0 }).collect();
            map.push_state(x, &e).1[r]
        });
        (out, jac.determinant().signum())
    }
}

impl OdeSystem for FlowSystem<'_> {
    fn dim(&self) -> usize {
        2 * self.n + 2 * self.n * self.m
    }

    fn rhs(&self, chart: usize, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let (n, m) = (self.n, self.m);
        let x = &y[..n];
        let v = &y[n..2 * n];
        if v.iter().map(|c| c * c).sum::<f64>().sqrt() < MIN_DIRECTION_NORM {
            return Err(Error::DegenerateDirection { norm: 0.0 });
        }
        dy[..n].copy_from_slice(v);
        if m == 0 {
            let s = spray_s(self.metric, chart, x, v)?;
            for i in 0..n {
                dy[n + i] = -s[i];
            }
            return Ok(());
        }
        for c in 0..m {
            let jo = 2 * n + c * n;
            let jdo = 2 * n + n * m + c * n;
            let xs: Vec<D1> = (0..n).map(|i| D1::new(x[i], y[jo + i])).collect();
            let vs: Vec<D1> = (0..n).map(|i| D1::new(v[i], y[jdo + i])).collect();
            let s = spray_s(self.metric, chart, &xs, &vs)?;
            for i in 0..n {
                if c == 0 {
                    dy[n + i] = -s[i].re;
                }
                dy[jo + i] = y[jdo + i];
                dy[jdo + i] = -s[i].eps;
            }
        }
        Ok(())
    }

    fn admissible(&self, chart: usize, y: &[f64]) -> bool {
        y.iter().all(|c| c.is_finite()) && self.metric.atlas().contains(chart, &y[..self.n])
    }

    fn switch_chart(&self, chart: usize, y: &mut Vec<f64>) -> Option<(usize, f64)> {
        let atlas = self.metric.atlas();
        let x = &y[..self.n];
        if atlas.in_safe_interior(chart, x) {
            return None;
        }
        let (best, _) = atlas.best_chart(chart, x);
        if best == chart {
            return None;
        }
        let map = atlas.transition(chart, best)?;
        let (out, sign) = Self::transform(map, self.n, self.m, y);
        *y = out;
        Some((best, sign))
    }

    fn position(&self, y: &[f64]) -> Vec<f64> {
        y[..self.n].to_vec()
    }
}

/// Solution of the geodesic equation together with `m` Jacobi fields.
#[derive(Clone, Debug)]
pub struct LinearizedFrame {
    pub(crate) traj: Trajectory,
    pub(crate) n: usize,
    pub columns: usize,
}

impl LinearizedFrame {
    pub fn t_end(&self) -> f64 {
        self.traj.t_end
    }

    /// `(J(t), J̇(t))` in the chart current at `t`, with that chart, and the
    /// sign of the accumulated transition Jacobian determinant.
    pub fn jacobi(&self, t: f64) -> (usize, DMatrix<f64>, DMatrix<f64>, f64) {
        let (chart, y, orient) = self.traj.eval(t);
        let (n, m) = (self.n, self.columns);
        let j = DMatrix::from_column_slice(n, m, &y[2 * n..2 * n + n * m]);
        let jd = DMatrix::from_column_slice(n, m, &y[2 * n + n * m..2 * n + 2 * n * m]);
        (chart, j, jd, orient)
    }

    pub fn state(&self, t: f64) -> TangentVec {
        let (chart, y, _) = self.traj.eval(t);
        TangentVec { chart, x: DVector::from_column_slice(&y[..self.n]), v: DVector::from_column_slice(&y[self.n..2 * self.n]) }
    }

    pub fn knots(&self) -> Vec<f64> {
        self.traj.knots()
    }
}

pub(crate) fn augmented_start(start: &TangentVec, j0: &DMatrix<f64>, jd0: &DMatrix<f64>) -> Vec<f64> {
    let mut y: Vec<f64> = start.x.iter().chain(start.v.iter()).cloned().collect();
    y.extend(j0.as_slice());
    y.extend(jd0.as_slice());
    y
}

/// Integrates the geodesic from `start` jointly with the Jacobi fields whose
/// initial values are the columns of `j0`, `jd0`.
pub fn integrate_with_frame(
    metric: &MetricField,
    start: &TangentVec,
    j0: &DMatrix<f64>,
    jd0: &DMatrix<f64>,
    t_end: f64,
    tol: OdeTolerances,
) -> Result<LinearizedFrame> {
    let n = metric.dim();
    if j0.nrows() != n || jd0.nrows() != n || j0.ncols() != jd0.ncols() || j0.ncols() == 0 {
        return Err(Error::Precondition("Jacobi initial data must be n×m with m ≥ 1".into()));
    }
    metric.atlas().check(start.chart, start.x.as_slice())?;
    let vnorm = start.v.norm();
    if vnorm < MIN_DIRECTION_NORM {
        return Err(Error::DegenerateDirection { norm: vnorm });
    }
    let sys = FlowSystem { metric, n, m: j0.ncols() };
    let y0 = augmented_start(start, j0, jd0);
    let traj = integrate(&sys, start.chart, &y0, t_end, tol)?;
    Ok(LinearizedFrame { traj, n, columns: j0.ncols() })
}

/// Solves the variational equation along `path` for the given initial data.
pub fn linearized_flow(
    metric: &MetricField,
    path: &GeodesicPath,
    j0: &DMatrix<f64>,
    jd0: &DMatrix<f64>,
) -> Result<LinearizedFrame> {
    integrate_with_frame(metric, &path.start(), j0, jd0, path.t_end(), path.tolerances)
}

/// Integrates `ẍ + 2G(x, ẋ) = 0` over `[0, t_end]`.
pub fn integrate_geodesic(
    metric: &MetricField,
    start: &TangentVec,
    t_end: f64,
    tol: OdeTolerances,
) -> Result<GeodesicPath> {
    let n = metric.dim();
    metric.atlas().check(start.chart, start.x.as_slice())?;
    let vnorm = start.v.norm();
    if vnorm < MIN_DIRECTION_NORM {
        return Err(Error::DegenerateDirection { norm: vnorm });
    }
    if !(t_end > 0.0) {
        return Err(Error::Precondition("integration span must be positive".into()));
    }
    let sys = FlowSystem { metric, n, m: 0 };
    let y0: Vec<f64> = start.x.iter().chain(start.v.iter()).cloned().collect();
    let traj = integrate(&sys, start.chart, &y0, t_end, tol)?;
    Ok(GeodesicPath::from_trajectory(metric, traj, n, tol))
}

/// `exp_p(v)`: endpoint at time 1 of the geodesic with initial velocity `v`.
pub fn exp_map(metric: &MetricField, p: &crate::atlas::ChartPoint, v: &[f64], tol: OdeTolerances) -> Result<crate::atlas::ChartPoint> {
    if v.iter().all(|&c| c == 0.0) {
        return Ok(p.clone());
    }
    let start = TangentVec { chart: p.chart, x: p.x.clone(), v: DVector::from_column_slice(v) };
    let path = integrate_geodesic(metric, &start, 1.0, tol)?;
    Ok(path.point(1.0))
}
