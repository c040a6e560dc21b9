//! Dense geodesic paths, curve functionals, and the geodesic residual.

use nalgebra::DVector;

use super::integrator::{OdeTolerances, Trajectory};
use crate::atlas::ChartPoint;
use crate::metric::{MetricField, TangentVec};

/// Dense-output solution `t ↦ (x(t), v(t))` of the geodesic equation.
#[derive(Clone, Debug)]
pub struct GeodesicPath {
    pub(crate) traj: Trajectory,
    n: usize,
    /// `(t, F(γ̇(t)))` at the step knots.
    pub speed: Vec<(f64, f64)>,
    pub unit_speed: bool,
    pub tolerances: OdeTolerances,
}

impl GeodesicPath {
    pub(crate) fn from_trajectory(metric: &MetricField, traj: Trajectory, n: usize, tol: OdeTolerances) -> Self {
        let mut p = GeodesicPath { traj, n, speed: Vec::new(), unit_speed: false, tolerances: tol };
        p.speed = p
            .knots()
            .into_iter()
            .map(|t| {
                let s = p.state(t);
                (t, metric.f(s.chart, s.x.as_slice(), s.v.as_slice()))
            })
            .collect();
        p.unit_speed = p.speed.iter().all(|&(_, f)| (f - 1.0).abs() <= 1e-7);
        p
    }

    pub fn t_end(&self) -> f64 {
        self.traj.t_end
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn state(&self, t: f64) -> TangentVec {
        let (chart, y, _) = self.traj.eval(t);
        TangentVec {
            chart,
            x: DVector::from_column_slice(&y[..self.n]),
            v: DVector::from_column_slice(&y[self.n..2 * self.n]),
        }
    }

    pub fn point(&self, t: f64) -> ChartPoint {
        let s = self.state(t);
        ChartPoint { chart: s.chart, x: s.x }
    }

    pub fn start(&self) -> TangentVec {
        self.state(0.0)
    }

    pub fn end(&self) -> TangentVec {
        self.state(self.t_end())
    }

    pub fn knots(&self) -> Vec<f64> {
        self.traj.knots()
    }

    /// `(chart, t_start, t_end)` for each chart segment.
    pub fn chart_segments(&self) -> Vec<(usize, f64, f64)> {
        let segs = &self.traj.segments;
        segs.iter()
            .enumerate()
            .filter(|(_, s)| !s.steps.is_empty())
            .map(|(i, s)| {
                let t0 = s.steps[0].t0;
                let t1 = segs.get(i + 1).and_then(|n| n.steps.first()).map_or(self.t_end(), |st| st.t0);
                (s.chart, t0, t1)
            })
            .collect()
    }

    /// Largest relative deviation of `F(γ̇)` from its initial value at the knots.
    pub fn speed_drift(&self) -> f64 {
        let f0 = self.speed.first().map_or(1.0, |s| s.1);
        self.speed.iter().map(|&(_, f)| (f - f0).abs() / f0.abs().max(1e-300)).fold(0.0, f64::max)
    }
}

/// A parametrized curve with derivatives, evaluated in chart coordinates.
pub trait CurveLike {
    fn span(&self) -> (f64, f64);
    /// Parameters splitting the curve into smooth pieces within one chart.
    fn breakpoints(&self) -> Vec<f64>;
    /// `(chart, x, ẋ, ẍ)` at `t`; one-sided from the right at breakpoints.
    fn jet(&self, t: f64) -> (usize, DVector<f64>, DVector<f64>, DVector<f64>);
}

impl CurveLike for GeodesicPath {
    fn span(&self) -> (f64, f64) {
        (0.0, self.t_end())
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.knots()
    }

    fn jet(&self, t: f64) -> (usize, DVector<f64>, DVector<f64>, DVector<f64>) {
        let s = self.state(t);
        let (_, dy) = self.traj.eval_derivative(t);
        (s.chart, s.x, s.v, DVector::from_column_slice(&dy[self.n..2 * self.n]))
    }
}

type JetFn = dyn Fn(f64) -> (DVector<f64>, DVector<f64>, DVector<f64>) + Send + Sync;

/// A user curve in a single chart given by its position, velocity and
/// acceleration.
pub struct ParametricCurve {
    pub chart: usize,
    pub t0: f64,
    pub t1: f64,
    pub pieces: usize,
    jet: Box<JetFn>,
}

impl ParametricCurve {
    pub fn new(
        chart: usize,
        t0: f64,
        t1: f64,
        pieces: usize,
        jet: impl Fn(f64) -> (DVector<f64>, DVector<f64>, DVector<f64>) + Send + Sync + 'static,
    ) -> Self {
        ParametricCurve { chart, t0, t1, pieces: pieces.max(1), jet: Box::new(jet) }
    }

    /// Straight segment `a + s (b − a)`, `s ∈ [0, 1]`.
    pub fn segment(chart: usize, a: &[f64], b: &[f64]) -> Self {
        let a = DVector::from_column_slice(a);
        let d = DVector::from_column_slice(b) - &a;
        let n = a.len();
        ParametricCurve::new(chart, 0.0, 1.0, 1, move |s| (&a + &d * s, d.clone(), DVector::zeros(n)))
    }
}

impl CurveLike for ParametricCurve {
    fn span(&self) -> (f64, f64) {
        (self.t0, self.t1)
    }

    fn breakpoints(&self) -> Vec<f64> {
        (0..=self.pieces).map(|i| self.t0 + (self.t1 - self.t0) * i as f64 / self.pieces as f64).collect()
    }

    fn jet(&self, t: f64) -> (usize, DVector<f64>, DVector<f64>, DVector<f64>) {
        let (x, v, a) = (self.jet)(t);
        (self.chart, x, v, a)
    }
}

// 5-point Gauss–Legendre nodes and weights on [-1, 1]
const GL_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683,
    0.0,
    0.538_469_310_105_683,
    0.906_179_845_938_664,
];
const GL_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189,
    0.478_628_670_499_366,
    0.568_888_888_888_889,
    0.478_628_670_499_366,
    0.236_926_885_056_189,
];

fn quadrature(metric: &MetricField, curve: &dyn CurveLike, integrand: impl Fn(f64) -> f64) -> f64 {
    let bp = curve.breakpoints();
    let mut total = 0.0;
    for w in bp.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for (x, wt) in GL_NODES.iter().zip(GL_WEIGHTS) {
            let (chart, p, v, _) = curve.jet(mid + half * x);
            let f = if v.norm() == 0.0 { 0.0 } else { metric.f(chart, p.as_slice(), v.as_slice()) };
            total += wt * half * integrand(f);
        }
    }
    total
}

/// `∫ F(γ̇) dt` by Gauss–Legendre quadrature on each smooth piece.
pub fn path_length(metric: &MetricField, curve: &dyn CurveLike) -> f64 {
    quadrature(metric, curve, |f| f)
}

/// `∫ F(γ̇)²/2 dt`.
pub fn path_energy(metric: &MetricField, curve: &dyn CurveLike) -> f64 {
    quadrature(metric, curve, |f| 0.5 * f * f)
}

/// Largest `|ẍ + 2G(x, ẋ)|` over breakpoints and piece midpoints.
pub fn parallelism_residual(metric: &MetricField, curve: &dyn CurveLike) -> f64 {
    let bp = curve.breakpoints();
    let mut samples: Vec<f64> = bp.clone();
    samples.extend(bp.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    let (t0, t1) = curve.span();
    samples.retain(|&t| t >= t0 && t <= t1);
    samples
        .into_iter()
        .filter_map(|t| {
            let (chart, x, v, a) = curve.jet(t);
            let p = TangentVec { chart, x, v };
            metric.spray(&p).ok().map(|g| (a + g).norm())
        })
        .fold(0.0, f64::max)
}
