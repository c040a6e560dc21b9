//! Immersed submanifolds, their normal cones and the normal exponential map.
//!
//! Normal directions are produced linearly on the cotangent side: a covector
//! annihilating `T_pN` is pulled back through the inverse Legendre transform
//! and scaled to unit `F`-length. For hypersurfaces the two covector rays
//! are labelled `ψ = +1` and `ψ = −1`; `+1` is the covector `ω` with
//! `det[ω | T] > 0` (for a counter-clockwise plane curve it points outward).
//! In higher codimension `ψ` are hyperspherical angles on the unit sphere of
//! the annihilator, written in a Euclidean-orthonormal basis.

use std::fmt::Debug;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::atlas::ChartPoint;
use crate::dual::{Dual, Real, D1, D2, D3, D4};
use crate::error::{Error, Result};
use crate::geodesic::{integrate_geodesic, integrate_with_frame, LinearizedFrame, OdeTolerances};
use crate::linalg::singular_values;
use crate::metric::{MetricField, TangentVec};

/// An immersion `θ ↦ ι(θ)` written once for every scalar type.
pub trait Immersion: Send + Sync + Debug {
    fn embed<S: Real>(&self, theta: &[S], out: &mut [S]);
}

/// Object-safe view of an [`Immersion`].
pub trait ErasedImmersion: Send + Sync + Debug {
    fn embed_f64(&self, theta: &[f64], out: &mut [f64]);
    fn embed_d1(&self, theta: &[D1], out: &mut [D1]);
    fn embed_d2(&self, theta: &[D2], out: &mut [D2]);
    fn embed_d3(&self, theta: &[D3], out: &mut [D3]);
    fn embed_d4(&self, theta: &[D4], out: &mut [D4]);
}

impl<T: Immersion> ErasedImmersion for T {
    fn embed_f64(&self, theta: &[f64], out: &mut [f64]) {
        self.embed(theta, out)
    }
    fn embed_d1(&self, theta: &[D1], out: &mut [D1]) {
        self.embed(theta, out)
    }
    fn embed_d2(&self, theta: &[D2], out: &mut [D2]) {
        self.embed(theta, out)
    }
    fn embed_d3(&self, theta: &[D3], out: &mut [D3]) {
        self.embed(theta, out)
    }
    fn embed_d4(&self, theta: &[D4], out: &mut [D4]) {
        self.embed(theta, out)
    }
}

#[derive(Debug)]
struct PointImm(Vec<f64>);

impl Immersion for PointImm {
    fn embed<S: Real>(&self, _theta: &[S], out: &mut [S]) {
        for (o, &p) in out.iter_mut().zip(&self.0) {
            *o = S::cst(p);
        }
    }
}

/// `c + (a cos θ, b sin θ)`, counter-clockwise.
#[derive(Debug)]
struct EllipseImm {
    center: [f64; 2],
    a: f64,
    b: f64,
}

impl Immersion for EllipseImm {
    fn embed<S: Real>(&self, theta: &[S], out: &mut [S]) {
        out[0] = theta[0].cos() * self.a + self.center[0];
        out[1] = theta[0].sin() * self.b + self.center[1];
    }
}

#[derive(Debug)]
struct AxisLineImm {
    origin: Vec<f64>,
    axis: usize,
}

impl Immersion for AxisLineImm {
    fn embed<S: Real>(&self, theta: &[S], out: &mut [S]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = if i == self.axis { theta[0] + self.origin[i] } else { S::cst(self.origin[i]) };
        }
    }
}

/// Cubic spline through `(θ_i, x_i)`, natural or periodic.
#[derive(Debug, Clone)]
struct Spline {
    knots: Vec<f64>,
    /// Per coordinate, per interval: `[a, b, c, d]` with
    /// `x = a + b s + c s² + d s³`, `s = θ − θ_i`.
    coef: Vec<Vec<[f64; 4]>>,
    periodic: bool,
}

impl Spline {
    fn fit(knots: &[f64], values: &[Vec<f64>], periodic: bool) -> Result<Spline> {
        let m = knots.len();
        if m < 4 || knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Precondition("sampled curve needs at least 4 strictly increasing parameters".into()));
        }
        let h: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
        let dim = values[0].len();
        let mut coef = Vec::with_capacity(dim);
        for d in 0..dim {
            let y: Vec<f64> = values.iter().map(|v| v[d]).collect();
            // second derivatives M_i
            let mm = if periodic {
                // unknowns M_0..M_{m-2}, M_{m-1} = M_0
                let p = m - 1;
                let mut a = DMatrix::<f64>::zeros(p, p);
                let mut r = DVector::<f64>::zeros(p);
                for i in 0..p {
                    let hp = h[(i + p - 1) % p];
                    let hi = h[i];
                    a[(i, (i + p - 1) % p)] += hp;
                    a[(i, i)] += 2.0 * (hp + hi);
                    a[(i, (i + 1) % p)] += hi;
                    let yprev = if i == 0 { y[p - 1] } else { y[i - 1] };
                    r[i] = 6.0 * ((y[i + 1] - y[i]) / hi - (y[i] - yprev) / hp);
                }
                let sol = a.lu().solve(&r).ok_or_else(|| Error::Numerical("periodic spline system is singular".into()))?;
                let mut out: Vec<f64> = sol.iter().cloned().collect();
                out.push(out[0]);
                out
            } else {
                let mut a = DMatrix::<f64>::zeros(m, m);
                let mut r = DVector::<f64>::zeros(m);
                a[(0, 0)] = 1.0;
                a[(m - 1, m - 1)] = 1.0;
                for i in 1..m - 1 {
                    a[(i, i - 1)] = h[i - 1];
                    a[(i, i)] = 2.0 * (h[i - 1] + h[i]);
                    a[(i, i + 1)] = h[i];
                    r[i] = 6.0 * ((y[i + 1] - y[i]) / h[i] - (y[i] - y[i - 1]) / h[i - 1]);
                }
                let sol = a.lu().solve(&r).ok_or_else(|| Error::Numerical("spline system is singular".into()))?;
                sol.iter().cloned().collect()
            };
            let pieces = (0..m - 1)
                .map(|i| {
                    let hi = h[i];
                    [
                        y[i],
                        (y[i + 1] - y[i]) / hi - hi * (2.0 * mm[i] + mm[i + 1]) / 6.0,
                        mm[i] / 2.0,
                        (mm[i + 1] - mm[i]) / (6.0 * hi),
                    ]
                })
                .collect();
            coef.push(pieces);
        }
        Ok(Spline { knots: knots.to_vec(), coef, periodic })
    }
}

impl Immersion for Spline {
    fn embed<S: Real>(&self, theta: &[S], out: &mut [S]) {
        let t0 = self.knots[0];
        let period = self.knots[self.knots.len() - 1] - t0;
        let mut th = theta[0];
        if self.periodic {
            let shift = ((th.re() - t0) / period).floor() * period;
            th = th - shift;
        }
        let tr = th.re();
        let i = self.knots.partition_point(|&k| k <= tr).saturating_sub(1).min(self.knots.len() - 2);
        let s = th - self.knots[i];
        for (d, o) in out.iter_mut().enumerate() {
            let [a, b, c, dd] = self.coef[d][i];
            *o = ((s * dd + c) * s + b) * s + a;
        }
    }
}

/// Family tag and parameters of a submanifold.
#[derive(Clone, Debug, PartialEq)]
pub enum SubmanifoldFamily {
    Point { p: Vec<f64> },
    Circle { center: Vec<f64>, radius: f64 },
    Ellipse { center: Vec<f64>, a: f64, b: f64 },
    AxisLine { axis: usize, origin: Vec<f64>, half_length: f64 },
    SampledCurve { samples: usize, closed: bool },
    Custom { name: String },
}

impl SubmanifoldFamily {
    pub fn tag(&self) -> &'static str {
        match self {
            SubmanifoldFamily::Point { .. } => "point",
            SubmanifoldFamily::Circle { .. } => "circle",
            SubmanifoldFamily::Ellipse { .. } => "ellipse",
            SubmanifoldFamily::AxisLine { .. } => "axis-line",
            SubmanifoldFamily::SampledCurve { .. } => "sampled-curve",
            SubmanifoldFamily::Custom { .. } => "custom",
        }
    }
}

/// An immersed submanifold `N` given in the coordinates of one chart.
#[derive(Clone, Debug)]
pub struct SubmanifoldSpec {
    pub family: SubmanifoldFamily,
    pub chart: usize,
    pub ambient_dim: usize,
    pub param_dim: usize,
    /// Parameter box `Θ`.
    pub domain: Vec<(f64, f64)>,
    pub periodic: Vec<bool>,
    pub closed: bool,
    immersion: Arc<dyn ErasedImmersion>,
}

impl SubmanifoldSpec {
    pub fn point(chart: usize, p: &[f64]) -> Self {
        SubmanifoldSpec {
            family: SubmanifoldFamily::Point { p: p.to_vec() },
            chart,
            ambient_dim: p.len(),
            param_dim: 0,
            domain: Vec::new(),
            periodic: Vec::new(),
            closed: true,
            immersion: Arc::new(PointImm(p.to_vec())),
        }
    }

    pub fn circle(chart: usize, center: [f64; 2], radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::Precondition("circle radius must be positive".into()));
        }
        let mut s = Self::ellipse(chart, center, radius, radius)?;
        s.family = SubmanifoldFamily::Circle { center: center.to_vec(), radius };
        Ok(s)
    }

    pub fn ellipse(chart: usize, center: [f64; 2], a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0) {
            return Err(Error::Precondition("ellipse semi-axes must be positive".into()));
        }
        Ok(SubmanifoldSpec {
            family: SubmanifoldFamily::Ellipse { center: center.to_vec(), a, b },
            chart,
            ambient_dim: 2,
            param_dim: 1,
            domain: vec![(0.0, std::f64::consts::TAU)],
            periodic: vec![true],
            closed: true,
            immersion: Arc::new(EllipseImm { center, a, b }),
        })
    }

    /// The line `origin + θ e_axis`, `|θ| ≤ half_length`.
    pub fn axis_line(chart: usize, origin: &[f64], axis: usize, half_length: f64) -> Result<Self> {
        if axis >= origin.len() || !(half_length > 0.0) {
            return Err(Error::Precondition("axis-line needs a valid axis and positive half length".into()));
        }
        Ok(SubmanifoldSpec {
            family: SubmanifoldFamily::AxisLine { axis, origin: origin.to_vec(), half_length },
            chart,
            ambient_dim: origin.len(),
            param_dim: 1,
            domain: vec![(-half_length, half_length)],
            periodic: vec![false],
            closed: false,
            immersion: Arc::new(AxisLineImm { origin: origin.to_vec(), axis }),
        })
    }

    /// Cubic-spline curve through `(θ_i, x_i)`. For a closed curve the last
    /// sample must repeat the first point; the spline is then periodic.
    pub fn sampled_curve(chart: usize, thetas: &[f64], points: &[Vec<f64>], closed: bool) -> Result<Self> {
        if thetas.len() != points.len() || points.is_empty() {
            return Err(Error::Precondition("sampled curve needs one point per parameter".into()));
        }
        let n = points[0].len();
        if points.iter().any(|p| p.len() != n) {
            return Err(Error::Precondition("sampled curve points must share one dimension".into()));
        }
        if closed {
            let gap = points[0].iter().zip(&points[points.len() - 1]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if gap > 1e-9 {
                return Err(Error::Precondition("closed sampled curve must end at its first point".into()));
            }
        }
        let spline = Spline::fit(thetas, points, closed)?;
        Ok(SubmanifoldSpec {
            family: SubmanifoldFamily::SampledCurve { samples: points.len(), closed },
            chart,
            ambient_dim: n,
            param_dim: 1,
            domain: vec![(thetas[0], thetas[thetas.len() - 1])],
            periodic: vec![closed],
            closed,
            immersion: Arc::new(spline),
        })
    }

    /// Parses CSV with columns `theta, x1, .., xn` (header row required).
    pub fn sampled_curve_csv(chart: usize, text: &str, closed: bool) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text.as_bytes());
        let mut thetas = Vec::new();
        let mut pts = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Io(e.to_string()))?;
            let vals: std::result::Result<Vec<f64>, _> = rec.iter().map(|f| f.parse::<f64>()).collect();
            let vals = vals.map_err(|e| Error::Precondition(format!("sampled curve row {}: {e}", row + 1)))?;
            if vals.len() < 2 {
                return Err(Error::Precondition(format!("sampled curve row {} has too few columns", row + 1)));
            }
            thetas.push(vals[0]);
            pts.push(vals[1..].to_vec());
        }
        Self::sampled_curve(chart, &thetas, &pts, closed)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn custom(
        chart: usize,
        name: &str,
        ambient_dim: usize,
        domain: Vec<(f64, f64)>,
        periodic: Vec<bool>,
        closed: bool,
        immersion: Arc<dyn ErasedImmersion>,
    ) -> Self {
        SubmanifoldSpec {
            family: SubmanifoldFamily::Custom { name: name.to_string() },
            chart,
            ambient_dim,
            param_dim: domain.len(),
            domain,
            periodic,
            closed,
            immersion,
        }
    }

    pub fn codim(&self) -> usize {
        self.ambient_dim - self.param_dim
    }

    pub fn is_hypersurface(&self) -> bool {
        self.param_dim + 1 == self.ambient_dim
    }

    pub fn is_point(&self) -> bool {
        self.param_dim == 0
    }

    /// Number of `ψ` coordinates (angles; one sign slot for hypersurfaces).
    pub fn psi_dim(&self) -> usize {
        if self.is_hypersurface() {
            1
        } else {
            self.codim() - 1
        }
    }

    /// Number of `ψ` directions that vary continuously.
    pub fn psi_free(&self) -> usize {
        if self.is_hypersurface() {
            0
        } else {
            self.codim() - 1
        }
    }

    pub fn embed<S: Real>(&self, theta: &[S]) -> Vec<S> {
        let mut out = vec![S::zero(); self.ambient_dim];
        S::eval_immersion(&*self.immersion, theta, &mut out);
        out
    }

    pub fn point_at(&self, theta: &[f64]) -> ChartPoint {
        ChartPoint::new(self.chart, DVector::from_vec(self.embed(theta)))
    }

    /// Wraps periodic parameters into the domain.
    pub fn wrap_theta(&self, theta: &mut [f64]) {
        for (i, t) in theta.iter_mut().enumerate() {
            if self.periodic[i] {
                let (lo, hi) = self.domain[i];
                let p = hi - lo;
                *t = lo + (*t - lo).rem_euclid(p);
            }
        }
    }

    /// Whether `θ` lies in the (non-periodic part of the) parameter box.
    pub fn theta_in_domain(&self, theta: &[f64]) -> bool {
        theta.iter().enumerate().all(|(i, &t)| self.periodic[i] || (t >= self.domain[i].0 && t <= self.domain[i].1))
    }

    fn tangent_s<S: Real>(&self, theta: &[S]) -> Vec<Vec<S>>
    where
        Dual<S>: Real,
    {
        (0..self.param_dim)
            .map(|a| {
                let th: Vec<Dual<S>> = theta
                    .iter()
                    .enumerate()
                    .map(|(i, &c)| Dual::new(c, if i == a { S::one() } else { S::zero() }))
                    .collect();
                self.embed(&th).iter().map(|d| d.eps).collect()
            })
            .collect()
    }

    fn annihilator_s<S: Real>(&self, theta: &[S]) -> Vec<Vec<S>>
    where
        Dual<S>: Real,
    {
        let n = self.ambient_dim;
        let tangent = self.tangent_s(theta);
        if self.is_hypersurface() {
            // generalized cross product: ω_i = (−1)^i det(T without row i)
            let mut w: Vec<S> = (0..n)
                .map(|i| {
                    let rows: Vec<usize> = (0..n).filter(|&r| r != i).collect();
                    let minor: Vec<Vec<S>> = rows.iter().map(|&r| tangent.iter().map(|c| c[r]).collect()).collect();
                    let d = det_s(&minor);
                    if i % 2 == 0 {
                        d
                    } else {
                        -d
                    }
                })
                .collect();
            let nrm = w.iter().fold(S::zero(), |acc, &c| acc + c * c).sqrt();
            for c in w.iter_mut() {
                *c = *c / nrm;
            }
            return vec![w];
        }
        let dot = |a: &[S], b: &[S]| a.iter().zip(b).fold(S::zero(), |acc, (&p, &q)| acc + p * q);
        let mut basis: Vec<Vec<S>> = Vec::new();
        for t in &tangent {
            let mut c = t.clone();
            for b in &basis {
                let d = dot(b, &c);
                for (ci, &bi) in c.iter_mut().zip(b) {
                    *ci = *ci - bi * d;
                }
            }
            let nrm = dot(&c, &c).sqrt();
            basis.push(c.iter().map(|&x| x / nrm).collect());
        }
        let mut out: Vec<Vec<S>> = Vec::new();
        let mut axes: Vec<usize> = (0..n).collect();
        while out.len() < n - self.param_dim {
            let mut best: Option<(f64, usize, Vec<S>)> = None;
            for &a in &axes {
                let mut c: Vec<S> = (0..n).map(|k| if k == a { S::one() } else { S::zero() }).collect();
                for b in basis.iter().chain(out.iter()) {
                    let d = dot(b, &c);
                    for (ci, &bi) in c.iter_mut().zip(b) {
                        *ci = *ci - bi * d;
                    }
                }
                let nr = dot(&c, &c).re().sqrt();
                if best.as_ref().is_none_or(|b| nr > b.0 + 1e-12) {
                    best = Some((nr, a, c));
                }
            }
            let (_, a, c) = best.expect("axes remain while the complement is incomplete");
            axes.retain(|&x| x != a);
            let nrm = dot(&c, &c).sqrt();
            out.push(c.iter().map(|&x| x / nrm).collect());
        }
        out
    }

    /// Annihilator covector selected by `ψ`.
    fn covector_s<S: Real>(&self, theta: &[S], psi: &[S]) -> Vec<S>
    where
        Dual<S>: Real,
    {
        let basis = self.annihilator_s(theta);
        if self.is_hypersurface() {
            let sign = if psi.first().is_none_or(|p| p.re() >= 0.0) { 1.0 } else { -1.0 };
            return basis[0].iter().map(|&c| c * sign).collect();
        }
        let u = sphere_point(psi, basis.len());
        let n = self.ambient_dim;
        (0..n).map(|i| basis.iter().zip(&u).fold(S::zero(), |acc, (b, &uj)| acc + b[i] * uj)).collect()
    }
}

fn det_s<S: Real>(m: &[Vec<S>]) -> S {
    match m.len() {
        0 => S::one(),
        1 => m[0][0],
        2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
        k => {
            let mut acc = S::zero();
            for col in 0..k {
                let minor: Vec<Vec<S>> =
                    m[1..].iter().map(|r| r.iter().enumerate().filter(|&(j, _)| j != col).map(|(_, &v)| v).collect()).collect();
                let term = m[0][col] * det_s(&minor);
                acc = if col % 2 == 0 { acc + term } else { acc - term };
            }
            acc
        }
    }
}

/// Point of `S^{m−1}` from hyperspherical angles.
fn sphere_point<S: Real>(psi: &[S], m: usize) -> Vec<S> {
    let mut u = vec![S::zero(); m];
    let mut prod = S::one();
    for j in 0..m {
        if j + 1 < m {
            u[j] = prod * psi[j].cos();
            prod = prod * psi[j].sin();
        } else {
            u[j] = prod;
        }
    }
    u
}

/// A unit normal direction at a point of `N`.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalRay {
    pub theta: Vec<f64>,
    pub psi: Vec<f64>,
    pub chart: usize,
    pub base: DVector<f64>,
    pub v: DVector<f64>,
}

impl NormalRay {
    pub fn tangent(&self, t: f64) -> TangentVec {
        TangentVec { chart: self.chart, x: self.base.clone(), v: &self.v * t }
    }

    pub fn base_point(&self) -> ChartPoint {
        ChartPoint::new(self.chart, self.base.clone())
    }
}

/// Columns spanning `T_pN` at `ι(θ)`.
pub fn tangent_frame(n_spec: &SubmanifoldSpec, theta: &[f64]) -> Result<DMatrix<f64>> {
    let cols = n_spec.tangent_s(theta);
    let n = n_spec.ambient_dim;
    if cols.is_empty() {
        return Ok(DMatrix::zeros(n, 0));
    }
    let m = DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]);
    let s = singular_values(&m);
    let smin = s.last().cloned().unwrap_or(0.0);
    if !(smin > 1e-8) {
        return Err(Error::Immersion { theta: theta.to_vec(), sigma: smin });
    }
    Ok(m)
}

/// Euclidean-orthonormal basis of the annihilator of `T_pN` (columns).
pub fn annihilator_basis(n_spec: &SubmanifoldSpec, theta: &[f64]) -> Result<DMatrix<f64>> {
    tangent_frame(n_spec, theta)?;
    let cols = n_spec.annihilator_s(theta);
    let n = n_spec.ambient_dim;
    Ok(DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]))
}

/// Base point and unit normal at a generic scalar level.
pub(crate) fn unit_normal_s<S: Real>(
    metric: &MetricField,
    n_spec: &SubmanifoldSpec,
    theta: &[S],
    psi: &[S],
) -> Result<(Vec<S>, Vec<S>)>
where
    Dual<S>: Real,
    Dual<Dual<S>>: Real,
{
    let base = n_spec.embed(theta);
    let omega = n_spec.covector_s(theta, psi);
    let v0 = metric.legendre_inverse_s(n_spec.chart, &base, &omega)?;
    let f = metric.f(n_spec.chart, &base, &v0);
    Ok((base, v0.iter().map(|&c| c / f).collect()))
}

/// The unit normal `v` with `𝔏(v)` on the covector ray selected by `ψ`.
pub fn unit_normal(metric: &MetricField, n_spec: &SubmanifoldSpec, theta: &[f64], psi: &[f64]) -> Result<NormalRay> {
    if theta.len() != n_spec.param_dim || psi.len() != n_spec.psi_dim() {
        return Err(Error::Precondition(format!(
            "expected {} parameters and {} normal coordinates",
            n_spec.param_dim,
            n_spec.psi_dim()
        )));
    }
    tangent_frame(n_spec, theta)?;
    let (base, v) = unit_normal_s(metric, n_spec, theta, psi)?;
    metric.atlas().check(n_spec.chart, &base)?;
    let mut psi = psi.to_vec();
    if n_spec.is_hypersurface() {
        psi[0] = if psi[0] >= 0.0 { 1.0 } else { -1.0 };
    }
    Ok(NormalRay {
        theta: theta.to_vec(),
        psi,
        chart: n_spec.chart,
        base: DVector::from_vec(base),
        v: DVector::from_vec(v),
    })
}

/// `(|F(v) − 1|, max_w |g_v(v, w)|)` over a tangent basis of `N`.
pub fn ray_residuals(metric: &MetricField, n_spec: &SubmanifoldSpec, ray: &NormalRay) -> Result<(f64, f64)> {
    let (x, v) = (ray.base.as_slice(), ray.v.as_slice());
    let f = metric.f(ray.chart, x, v);
    let t = tangent_frame(n_spec, &ray.theta)?;
    let g = metric.g_matrix(ray.chart, x, v)?;
    let gv = g * &ray.v;
    let orth = t.column_iter().map(|w| gv.dot(&w).abs()).fold(0.0, f64::max);
    Ok(((f - 1.0).abs(), orth))
}

/// Which covector rays of a hypersurface to sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sides {
    Both,
    Plus,
    Minus,
}

/// Product grid over `Θ` and the `ψ`-sphere.
#[derive(Clone, Debug, PartialEq)]
pub struct ConeGrid {
    pub theta_count: usize,
    pub psi_count: usize,
    pub sides: Sides,
    /// Seeded jitter as a fraction of the grid pitch.
    pub jitter: Option<(u64, f64)>,
}

impl ConeGrid {
    pub fn new(theta_count: usize, psi_count: usize, sides: Sides) -> Self {
        ConeGrid { theta_count, psi_count, sides, jitter: None }
    }
}

/// Rays of a grid, with failures collected per grid cell.
#[derive(Clone, Debug)]
pub struct ConeSample {
    pub rays: Vec<NormalRay>,
    pub failures: Vec<(Vec<f64>, Vec<f64>, Error)>,
}

/// Parameter values of the grid, in output order.
pub fn grid_parameters(n_spec: &SubmanifoldSpec, grid: &ConeGrid) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    if grid.theta_count == 0 || grid.psi_count == 0 {
        return Err(Error::Precondition("grid counts must be at least 1".into()));
    }
    let mut rng = grid.jitter.map(|(seed, _)| ChaCha8Rng::seed_from_u64(seed));
    let amp = grid.jitter.map_or(0.0, |(_, a)| a);
    let k = n_spec.param_dim;
    let axis_values: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            let (lo, hi) = n_spec.domain[i];
            let c = grid.theta_count;
            (0..c)
                .map(|j| {
                    let frac = if n_spec.periodic[i] { j as f64 / c as f64 } else { (j as f64 + 0.5) / c as f64 };
                    lo + (hi - lo) * frac
                })
                .collect()
        })
        .collect();
    let mut thetas: Vec<Vec<f64>> = vec![Vec::new()];
    for (i, vals) in axis_values.iter().enumerate() {
        let pitch = (n_spec.domain[i].1 - n_spec.domain[i].0) / grid.theta_count as f64;
        let mut next = Vec::new();
        for t in &thetas {
            for &v in vals {
                let mut t2 = t.clone();
                let jit = rng.as_mut().map_or(0.0, |r| r.random_range(-0.5..0.5) * amp * pitch);
                t2.push(v + jit);
                next.push(t2);
            }
        }
        thetas = next;
    }
    let psis: Vec<Vec<f64>> = if n_spec.is_hypersurface() {
        match grid.sides {
            Sides::Both => vec![vec![1.0], vec![-1.0]],
            Sides::Plus => vec![vec![1.0]],
            Sides::Minus => vec![vec![-1.0]],
        }
    } else {
        let free = n_spec.psi_free();
        match free {
            0 => vec![Vec::new()],
            1 => (0..grid.psi_count).map(|j| vec![std::f64::consts::TAU * j as f64 / grid.psi_count as f64]).collect(),
            2 => {
                // Fibonacci lattice on S², converted to angles
                let m = grid.psi_count;
                let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
                (0..m)
                    .map(|j| {
                        let z = 1.0 - 2.0 * (j as f64 + 0.5) / m as f64;
                        let phi = (golden * j as f64).rem_euclid(std::f64::consts::TAU);
                        vec![z.acos(), phi]
                    })
                    .collect()
            }
            _ => {
                return Err(Error::Precondition(
                    "grid sampling of normal spheres is limited to codimension 3".into(),
                ))
            }
        }
    };
    let mut out = Vec::with_capacity(thetas.len() * psis.len());
    for t in &thetas {
        for p in &psis {
            out.push((t.clone(), p.clone()));
        }
    }
    Ok(out)
}

/// Deterministic sample of the unit normal cone bundle.
pub fn sample_unit_cone(metric: &MetricField, n_spec: &SubmanifoldSpec, grid: &ConeGrid) -> Result<ConeSample> {
    let params = grid_parameters(n_spec, grid)?;
    let results: Vec<_> = params
        .par_iter()
        .map(|(t, p)| (t.clone(), p.clone(), unit_normal(metric, n_spec, t, p)))
        .collect();
    let mut rays = Vec::new();
    let mut failures = Vec::new();
    for (t, p, r) in results {
        match r {
            Ok(ray) => rays.push(ray),
            Err(e) => failures.push((t, p, e)),
        }
    }
    Ok(ConeSample { rays, failures })
}

/// `exp^ν(t v)`.
pub fn normal_exp(metric: &MetricField, ray: &NormalRay, t: f64, tol: OdeTolerances) -> Result<ChartPoint> {
    if t == 0.0 {
        return Ok(ray.base_point());
    }
    if t < 0.0 {
        return Err(Error::Precondition("normal exponential needs t ≥ 0".into()));
    }
    let path = integrate_geodesic(metric, &ray.tangent(1.0), t, tol)?;
    Ok(path.point(t))
}

/// Initial data `(J(0), J̇(0))` of the variation fields through `θ` and `ψ`.
pub fn normal_variation_data(
    metric: &MetricField,
    n_spec: &SubmanifoldSpec,
    ray: &NormalRay,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = n_spec.ambient_dim;
    let k = n_spec.param_dim;
    let free = n_spec.psi_free();
    let mut j0 = DMatrix::zeros(n, k + free);
    let mut jd0 = DMatrix::zeros(n, k + free);
    for col in 0..k + free {
        let th: Vec<D1> =
            ray.theta.iter().enumerate().map(|(i, &c)| D1::new(c, if i == col { 1.0 } else { 0.0 })).collect();
        let ps: Vec<D1> = ray
            .psi
            .iter()
            .enumerate()
            .map(|(i, &c)| D1::new(c, if col >= k && i == col - k { 1.0 } else { 0.0 }))
            .collect();
        let (base, v) = unit_normal_s(metric, n_spec, &th, &ps)?;
        for i in 0..n {
            j0[(i, col)] = base[i].eps;
            jd0[(i, col)] = v[i].eps;
        }
    }
    Ok((j0, jd0))
}

/// Integrates the normal geodesic of `ray` with its variation fields.
pub fn normal_frame(
    metric: &MetricField,
    n_spec: &SubmanifoldSpec,
    ray: &NormalRay,
    t_end: f64,
    tol: OdeTolerances,
) -> Result<LinearizedFrame> {
    let (j0, jd0) = normal_variation_data(metric, n_spec, ray)?;
    if j0.ncols() == 0 {
        // a point in dimension one: only the radial direction
        let n = n_spec.ambient_dim;
        return integrate_with_frame(metric, &ray.tangent(1.0), &DMatrix::zeros(n, 1), &DMatrix::zeros(n, 1), t_end, tol);
    }
    integrate_with_frame(metric, &ray.tangent(1.0), &j0, &jd0, t_end, tol)
}

/// Matrix of `d exp^ν` at `t v` in the basis `(∂θ, ∂ψ, ∂t)`, from a frame.
pub fn jacobian_from_frame(frame: &LinearizedFrame, t: f64, with_j: bool) -> (usize, DMatrix<f64>, f64) {
    let (chart, j, _, orient) = frame.jacobi(t);
    let s = frame.state(t);
    let mut cols: Vec<DVector<f64>> = if with_j { j.column_iter().map(|c| c.into_owned()).collect() } else { Vec::new() };
    cols.push(s.v);
    (chart, DMatrix::from_columns(&cols), orient)
}

/// Differential of the normal exponential at `t v`, columns
/// `(∂θ_1.., ∂ψ_1.., ∂t)`, in the chart reached at time `t`.
pub fn normal_jacobian(
    metric: &MetricField,
    n_spec: &SubmanifoldSpec,
    ray: &NormalRay,
    t: f64,
    tol: OdeTolerances,
) -> Result<DMatrix<f64>> {
    if !(t > 0.0) {
        return Err(Error::Precondition("normal Jacobian needs t > 0".into()));
    }
    let frame = normal_frame(metric, n_spec, ray, t, tol)?;
    let has_j = n_spec.param_dim + n_spec.psi_free() > 0;
    Ok(jacobian_from_frame(&frame, t, has_j).1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atlas::ManifoldAtlas;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn plane() -> Arc<ManifoldAtlas> {
        Arc::new(ManifoldAtlas::euclidean(2))
    }

    #[test]
    fn tangent_frame_examples() {
        let c = SubmanifoldSpec::circle(0, [0.0, 0.0], 1.0).unwrap();
        let t = tangent_frame(&c, &[0.0]).unwrap();
        assert_relative_eq!(t[(0, 0)], 0.0, epsilon = 1e-15);
        assert_relative_eq!(t[(1, 0)], 1.0, epsilon = 1e-15);
        let p = SubmanifoldSpec::point(0, &[0.0, 0.0]);
        assert_eq!(tangent_frame(&p, &[]).unwrap().ncols(), 0);
        let e = SubmanifoldSpec::ellipse(0, [0.0, 0.0], 2.0, 1.0).unwrap();
        let t = tangent_frame(&e, &[PI / 2.0]).unwrap();
        assert_relative_eq!(t[(0, 0)], -2.0, epsilon = 1e-15);
        assert_relative_eq!(t[(1, 0)], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn annihilator_examples() {
        let c = SubmanifoldSpec::circle(0, [0.0, 0.0], 1.0).unwrap();
        let a = annihilator_basis(&c, &[0.0]).unwrap();
        assert_eq!(a.ncols(), 1);
        assert_relative_eq!(a[(0, 0)], 1.0, epsilon = 1e-15);
        let p = SubmanifoldSpec::point(0, &[0.0, 0.0, 0.0]);
        let a = annihilator_basis(&p, &[]).unwrap();
        assert_relative_eq!(a, DMatrix::identity(3, 3));
        let l = SubmanifoldSpec::axis_line(0, &[0.0, 0.0], 1, 2.0).unwrap();
        let a = annihilator_basis(&l, &[0.3]).unwrap();
        assert_relative_eq!(a[(0, 0)].abs(), 1.0, epsilon = 1e-15);
        assert_relative_eq!(a[(1, 0)], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn unit_normal_examples() {
        let e = MetricField::euclidean(plane());
        let c = SubmanifoldSpec::circle(0, [0.0, 0.0], 1.0).unwrap();
        let r = unit_normal(&e, &c, &[0.0], &[-1.0]).unwrap();
        assert_relative_eq!(r.v[0], -1.0, epsilon = 1e-12);
        assert_relative_eq!(r.v[1], 0.0, epsilon = 1e-12);
        let rd = MetricField::randers(plane(), None, vec![0.5, 0.0]).unwrap();
        let l = SubmanifoldSpec::axis_line(0, &[0.0, 0.0], 1, 2.0).unwrap();
        let plus = unit_normal(&rd, &l, &[0.0], &[1.0]).unwrap();
        let minus = unit_normal(&rd, &l, &[0.0], &[-1.0]).unwrap();
        assert!((plus.v.clone() - DVector::from_column_slice(&[2.0 / 3.0, 0.0])).amax() < 1e-8);
        assert!((minus.v.clone() - DVector::from_column_slice(&[-2.0, 0.0])).amax() < 1e-8);
        let p = SubmanifoldSpec::point(0, &[0.0, 0.0]);
        for k in 0..16 {
            let r = unit_normal(&rd, &p, &[], &[0.4 * k as f64]).unwrap();
            assert_relative_eq!(rd.f(0, r.base.as_slice(), r.v.as_slice()), 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn sampling_counts_and_residuals() {
        let e = MetricField::euclidean(plane());
        let c = SubmanifoldSpec::circle(0, [0.0, 0.0], 1.0).unwrap();
        let s = sample_unit_cone(&e, &c, &ConeGrid::new(8, 1, Sides::Both)).unwrap();
        assert_eq!(s.rays.len(), 16);
        let p = SubmanifoldSpec::point(0, &[0.0, 0.0]);
        let s = sample_unit_cone(&e, &p, &ConeGrid::new(1, 64, Sides::Both)).unwrap();
        assert_eq!(s.rays.len(), 64);
        let el = SubmanifoldSpec::ellipse(0, [0.0, 0.0], 2.0, 1.0).unwrap();
        let q = MetricField::minkowski_quartic(plane(), 0.1).unwrap();
        let s = sample_unit_cone(&q, &el, &ConeGrid::new(256, 1, Sides::Minus)).unwrap();
        assert_eq!(s.rays.len(), 256);
        for r in &s.rays {
            let (fr, orth) = ray_residuals(&q, &el, r).unwrap();
            assert!(fr < 1e-10 && orth < 1e-9);
        }
    }

    #[test]
    fn normal_exp_examples() {
        let e = MetricField::euclidean(plane());
        let c = SubmanifoldSpec::circle(0, [0.0, 0.0], 1.0).unwrap();
        let r = unit_normal(&e, &c, &[0.0], &[-1.0]).unwrap();
        let q = normal_exp(&e, &r, 1.0, OdeTolerances::default()).unwrap();
        assert!(q.x.norm() < 1e-9);
        assert_eq!(normal_exp(&e, &r, 0.0, OdeTolerances::default()).unwrap().x, r.base);
        let torus = Arc::new(ManifoldAtlas::torus(&[1.0, 1.0]).unwrap());
        let et = MetricField::euclidean(torus.clone());
        let p = SubmanifoldSpec::point(0, &[0.0, 0.0]);
        let r = unit_normal(&et, &p, &[], &[0.0]).unwrap();
        let q = normal_exp(&et, &r, 0.75, OdeTolerances::default()).unwrap();
        let want = ChartPoint::from_slice(0, &[0.75, 0.0]);
        assert!(torus.separation(&q, &want) < 1e-9);
    }

    #[test]
    fn normal_jacobian_examples() {
        let tol = OdeTolerances::default();
        let e = MetricField::euclidean(plane());
        let p = SubmanifoldSpec::point(0, &[0.0, 0.0]);
        let r = unit_normal(&e, &p, &[], &[0.3]).unwrap();
        for t in [0.5, 1.0, 3.0] {
            let j = normal_jacobian(&e, &p, &r, t, tol).unwrap();
            assert!(j.determinant().abs() > 1e-3);
        }
        let c = SubmanifoldSpec::circle(0, [0.0, 0.0], 1.0).unwrap();
        let r = unit_normal(&e, &c, &[0.0], &[-1.0]).unwrap();
        let s1 = singular_values(&normal_jacobian(&e, &c, &r, 0.9, tol).unwrap());
        let s2 = singular_values(&normal_jacobian(&e, &c, &r, 0.999, tol).unwrap());
        assert!(s2[1] < s1[1] && s2[1] < 2e-3);
        let sphere = Arc::new(ManifoldAtlas::sphere_stereographic(2));
        let sm = MetricField::round_sphere(sphere);
        let eq = SubmanifoldSpec::circle(0, [0.0, 0.0], 1.0).unwrap();
        let r = unit_normal(&sm, &eq, &[0.7], &[1.0]).unwrap();
        let s = singular_values(&normal_jacobian(&sm, &eq, &r, PI / 2.0, tol).unwrap());
        assert!(s[1] < 1e-7 * s[0], "{s:?}");
    }

    #[test]
    fn normal_jacobian_matches_finite_differences() {
        let tol = OdeTolerances { rel: 1e-11, abs: 1e-13 };
        let q = MetricField::minkowski_quartic(plane(), 0.1).unwrap();
        let el = SubmanifoldSpec::ellipse(0, [0.0, 0.0], 2.0, 1.0).unwrap();
        let (th, ps, t) = (0.4, -1.0, 0.3);
        let ray = unit_normal(&q, &el, &[th], &[ps]).unwrap();
        let j = normal_jacobian(&q, &el, &ray, t, tol).unwrap();
        let h = 1e-5;
        let at = |th: f64, t: f64| {
            let r = unit_normal(&q, &el, &[th], &[ps]).unwrap();
            normal_exp(&q, &r, t, tol).unwrap().x
        };
        let dth = (at(th + h, t) - at(th - h, t)) / (2.0 * h);
        let dt = (at(th, t + h) - at(th, t - h)) / (2.0 * h);
        assert!((j.column(0) - dth).amax() < 1e-4);
        assert!((j.column(1) - dt).amax() < 1e-4);
    }

    #[test]
    fn sampled_curve_matches_circle() {
        let m = 65;
        let thetas: Vec<f64> = (0..m).map(|i| std::f64::consts::TAU * i as f64 / (m - 1) as f64).collect();
        let pts: Vec<Vec<f64>> = thetas.iter().map(|t| vec![t.cos(), t.sin()]).collect();
        let mut pts = pts;
        pts[m - 1] = pts[0].clone();
        let s = SubmanifoldSpec::sampled_curve(0, &thetas, &pts, true).unwrap();
        for k in 0..20 {
            let t = 0.31 * k as f64;
            let p = s.embed(&[t]);
            assert!((p[0] - t.cos()).abs() < 1e-5 && (p[1] - t.sin()).abs() < 1e-5);
        }
        let csv = "theta,x1,x2\n0,0,0\n1,1,0.5\n2,2,0.7\n3,3,0.2\n";
        let open = SubmanifoldSpec::sampled_curve_csv(0, csv, false).unwrap();
        let p = open.embed(&[2.0]);
        assert_relative_eq!(p[1], 0.7, epsilon = 1e-12);
    }
}
