//! Finsler metrics on an atlas, their fundamental and Cartan tensors, and
//! the Legendre transform.
//!
//! A metric is given by a single generic evaluator `F(chart, x, v)` written
//! against [`Real`]; every derivative is obtained by evaluating it on nested
//! dual numbers. Finite differences appear only in tests.

use std::fmt::Debug;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::atlas::ManifoldAtlas;
use crate::dual::{Dual, Real, D1, D2, D3, D4};
use crate::error::{Error, Result};
use crate::linalg::{min_sym_eigenvalue, solve_in_place};

/// Directions shorter than this are treated as the zero section.
pub const MIN_DIRECTION_NORM: f64 = 1e-12;

/// A Minkowski norm field written once for every scalar type.
pub trait FinslerNorm: Send + Sync + Debug {
    fn norm<S: Real>(&self, chart: usize, x: &[S], v: &[S]) -> S;
}

/// Object-safe view of a [`FinslerNorm`], monomorphized at each dual level.
pub trait ErasedNorm: Send + Sync + Debug {
    fn norm_f64(&self, chart: usize, x: &[f64], v: &[f64]) -> f64;
    fn norm_d1(&self, chart: usize, x: &[D1], v: &[D1]) -> D1;
    fn norm_d2(&self, chart: usize, x: &[D2], v: &[D2]) -> D2;
    fn norm_d3(&self, chart: usize, x: &[D3], v: &[D3]) -> D3;
    fn norm_d4(&self, chart: usize, x: &[D4], v: &[D4]) -> D4;
}

impl<T: FinslerNorm> ErasedNorm for T {
    fn norm_f64(&self, chart: usize, x: &[f64], v: &[f64]) -> f64 {
        self.norm(chart, x, v)
    }
    fn norm_d1(&self, chart: usize, x: &[D1], v: &[D1]) -> D1 {
        self.norm(chart, x, v)
    }
    fn norm_d2(&self, chart: usize, x: &[D2], v: &[D2]) -> D2 {
        self.norm(chart, x, v)
    }
    fn norm_d3(&self, chart: usize, x: &[D3], v: &[D3]) -> D3 {
        self.norm(chart, x, v)
    }
    fn norm_d4(&self, chart: usize, x: &[D4], v: &[D4]) -> D4 {
        self.norm(chart, x, v)
    }
}

fn dot<S: Real>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).fold(S::zero(), |acc, (&p, &q)| acc + p * q)
}

fn quad<S: Real>(m: &[f64], v: &[S]) -> S {
    let n = v.len();
    let mut acc = S::zero();
    for i in 0..n {
        for j in 0..n {
            acc = acc + v[i] * v[j] * m[i * n + j];
        }
    }
    acc
}

/// Riemannian metrics available from configuration.
#[derive(Clone, Debug, PartialEq)]
pub enum RiemannianModel {
    Euclidean,
    /// Unit round sphere in stereographic coordinates: `4/(1+|x|²)² δ`.
    RoundSphere,
    /// Constant positive-definite matrix, row-major.
    Constant(Vec<f64>),
}

#[derive(Clone, Debug)]
struct RiemannianNorm(RiemannianModel);

impl FinslerNorm for RiemannianNorm {
    fn norm<S: Real>(&self, _chart: usize, x: &[S], v: &[S]) -> S {
        match &self.0 {
            RiemannianModel::Euclidean => dot(v, v).sqrt(),
            RiemannianModel::RoundSphere => (dot(v, v) * 4.0).sqrt() / (dot(x, x) + 1.0),
            RiemannianModel::Constant(a) => quad(a, v).sqrt(),
        }
    }
}

/// `F = sqrt(a(v,v)) + b·v` with constant `a`, `b`.
#[derive(Clone, Debug)]
struct RandersNorm {
    a: Vec<f64>,
    b: Vec<f64>,
}

impl FinslerNorm for RandersNorm {
    fn norm<S: Real>(&self, _chart: usize, _x: &[S], v: &[S]) -> S {
        let beta = v.iter().zip(&self.b).fold(S::zero(), |acc, (&vi, &bi)| acc + vi * bi);
        quad(&self.a, v).sqrt() + beta
    }
}

/// `F² = |v|² + ε Σ vᵢ⁴ / |v|²`.
#[derive(Clone, Debug)]
struct QuarticNorm {
    epsilon: f64,
}

impl FinslerNorm for QuarticNorm {
    fn norm<S: Real>(&self, _chart: usize, _x: &[S], v: &[S]) -> S {
        let r2 = dot(v, v);
        let q = v.iter().fold(S::zero(), |acc, &vi| acc + vi.powi(4));
        (r2 + q / r2 * self.epsilon).sqrt()
    }
}

/// `F̄(x, v) = F(x, −v)`.
#[derive(Debug)]
struct Reversed {
    inner: Arc<dyn ErasedNorm>,
}

impl FinslerNorm for Reversed {
    fn norm<S: Real>(&self, chart: usize, x: &[S], v: &[S]) -> S {
        let neg: Vec<S> = v.iter().map(|&c| -c).collect();
        S::eval_norm(&*self.inner, chart, x, &neg)
    }
}

/// Family tag and parameters, kept for reporting.
#[derive(Clone, Debug, PartialEq)]
pub enum MetricFamily {
    Riemannian(RiemannianModel),
    Randers { a: Vec<f64>, b: Vec<f64> },
    MinkowskiQuartic { epsilon: f64 },
    Custom { name: String },
}

impl MetricFamily {
    pub fn tag(&self) -> &'static str {
        match self {
            MetricFamily::Riemannian(_) => "riemannian",
            MetricFamily::Randers { .. } => "randers",
            MetricFamily::MinkowskiQuartic { .. } => "minkowski-quartic",
            MetricFamily::Custom { .. } => "custom",
        }
    }
}

/// A point of the tangent bundle in chart coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentVec {
    pub chart: usize,
    pub x: DVector<f64>,
    pub v: DVector<f64>,
}

impl TangentVec {
    pub fn new(chart: usize, x: &[f64], v: &[f64]) -> Self {
        TangentVec { chart, x: DVector::from_column_slice(x), v: DVector::from_column_slice(v) }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Covector {
    pub chart: usize,
    pub x: DVector<f64>,
    pub omega: DVector<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FundamentalTensor {
    pub base: TangentVec,
    pub g: DMatrix<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CartanTensor {
    pub base: TangentVec,
    pub dim: usize,
    /// Entries `C_ijk` at index `(i·n + j)·n + k`.
    pub entries: Vec<f64>,
}

impl CartanTensor {
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.entries[(i * self.dim + j) * self.dim + k]
    }

    pub fn apply(&self, u: &[f64], w: &[f64], z: &[f64]) -> f64 {
        let n = self.dim;
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    acc += self.get(i, j, k) * u[i] * w[j] * z[k];
                }
            }
        }
        acc
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().map(|c| c.abs()).fold(0.0, f64::max)
    }
}

/// Finsler metric on an atlas. Cheap to clone; immutable.
#[derive(Clone, Debug)]
pub struct MetricField {
    atlas: Arc<ManifoldAtlas>,
    family: MetricFamily,
    forward: Arc<dyn ErasedNorm>,
    active: Arc<dyn ErasedNorm>,
    reversible: bool,
    reversed: bool,
}

impl MetricField {
    fn build(atlas: Arc<ManifoldAtlas>, family: MetricFamily, norm: Arc<dyn ErasedNorm>, reversible: bool) -> Self {
        MetricField { atlas, family, forward: norm.clone(), active: norm, reversible, reversed: false }
    }

    /// Wraps a user-supplied norm. `reversible` is a declaration and is
    /// checked by [`validate_metric`].
    pub fn custom(atlas: Arc<ManifoldAtlas>, name: &str, norm: Arc<dyn ErasedNorm>, reversible: bool) -> Self {
        Self::build(atlas, MetricFamily::Custom { name: name.to_string() }, norm, reversible)
    }

    pub fn riemannian(atlas: Arc<ManifoldAtlas>, model: RiemannianModel) -> Result<Self> {
        if let RiemannianModel::Constant(a) = &model {
            let n = atlas.dim;
            if a.len() != n * n {
                return Err(Error::Precondition(format!("metric matrix must have {} entries", n * n)));
            }
            let m = DMatrix::from_row_slice(n, n, a);
            if (&m - m.transpose()).amax() > 1e-12 || min_sym_eigenvalue(&m) <= 0.0 {
                return Err(Error::Precondition("metric matrix must be symmetric positive definite".into()));
            }
        }
        let norm = Arc::new(RiemannianNorm(model.clone()));
        Ok(Self::build(atlas, MetricFamily::Riemannian(model), norm, true))
    }

    pub fn euclidean(atlas: Arc<ManifoldAtlas>) -> Self {
        let norm = Arc::new(RiemannianNorm(RiemannianModel::Euclidean));
        Self::build(atlas, MetricFamily::Riemannian(RiemannianModel::Euclidean), norm, true)
    }

    pub fn round_sphere(atlas: Arc<ManifoldAtlas>) -> Self {
        let norm = Arc::new(RiemannianNorm(RiemannianModel::RoundSphere));
        Self::build(atlas, MetricFamily::Riemannian(RiemannianModel::RoundSphere), norm, true)
    }

    /// Randers metric with constant data; requires `|b|_a < 1`.
    pub fn randers(atlas: Arc<ManifoldAtlas>, a: Option<Vec<f64>>, b: Vec<f64>) -> Result<Self> {
        let n = atlas.dim;
        let a = a.unwrap_or_else(|| DMatrix::<f64>::identity(n, n).transpose().as_slice().to_vec());
        if a.len() != n * n || b.len() != n {
            return Err(Error::Precondition("randers data has the wrong dimension".into()));
        }
        let am = DMatrix::from_row_slice(n, n, &a);
        let inv = am
            .clone()
            .try_inverse()
            .filter(|_| min_sym_eigenvalue(&am) > 0.0)
            .ok_or_else(|| Error::Precondition("randers matrix a must be positive definite".into()))?;
        let bv = DVector::from_column_slice(&b);
        let bnorm = (bv.transpose() * inv * &bv)[0].sqrt();
        if bnorm >= 1.0 {
            return Err(Error::Precondition(format!(
                "randers drift must satisfy |b|_a < 1 (got {bnorm})"
            )));
        }
        Ok(Self::randers_unchecked(atlas, a, b))
    }

    /// Randers metric without the `|b|_a < 1` check, for validation studies.
    pub fn randers_unchecked(atlas: Arc<ManifoldAtlas>, a: Vec<f64>, b: Vec<f64>) -> Self {
        let reversible = b.iter().all(|&c| c == 0.0);
        let norm = Arc::new(RandersNorm { a: a.clone(), b: b.clone() });
        Self::build(atlas, MetricFamily::Randers { a, b }, norm, reversible)
    }

    /// Quartic Minkowski norm; the convexity of the chosen `ε` is checked on
    /// a fixed set of directions.
    pub fn minkowski_quartic(atlas: Arc<ManifoldAtlas>, epsilon: f64) -> Result<Self> {
        let m = Self::minkowski_quartic_unchecked(atlas, epsilon);
        let n = m.dim();
        let x = vec![0.0; n];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for k in 0..256 {
            let v: Vec<f64> = if k < n {
                (0..n).map(|i| if i == k { 1.0 } else { 0.0 }).collect()
            } else {
                (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
            };
            let g = m.g_matrix(0, &x, &v)?;
            let e = min_sym_eigenvalue(&g);
            if !(e > 0.0) || !epsilon.is_finite() {
                return Err(Error::ConvexityViolation { x, v, min_eigenvalue: e });
            }
        }
        Ok(m)
    }

    pub fn minkowski_quartic_unchecked(atlas: Arc<ManifoldAtlas>, epsilon: f64) -> Self {
        let norm = Arc::new(QuarticNorm { epsilon });
        Self::build(atlas, MetricFamily::MinkowskiQuartic { epsilon }, norm, true)
    }

    pub fn atlas(&self) -> &ManifoldAtlas {
        &self.atlas
    }

    pub fn atlas_arc(&self) -> Arc<ManifoldAtlas> {
        self.atlas.clone()
    }

    pub fn dim(&self) -> usize {
        self.atlas.dim
    }

    pub fn family(&self) -> &MetricFamily {
        &self.family
    }

    pub fn is_reversible(&self) -> bool {
        self.reversible
    }

    pub fn is_reversed(&self) -> bool {
        self.reversed
    }

    pub fn erased(&self) -> &dyn ErasedNorm {
        &*self.active
    }

    /// Evaluates `F` at any scalar level.
    #[inline]
    pub fn f<S: Real>(&self, chart: usize, x: &[S], v: &[S]) -> S {
        S::eval_norm(&*self.active, chart, x, v)
    }

    /// `F(x, v)`, zero at the zero section.
    pub fn eval_f(&self, p: &TangentVec) -> Result<f64> {
        self.atlas.check(p.chart, p.x.as_slice())?;
        if p.v.norm() == 0.0 {
            return Ok(0.0);
        }
        Ok(self.f(p.chart, p.x.as_slice(), p.v.as_slice()))
    }

    fn require_direction(v: &[f64]) -> Result<()> {
        let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm < MIN_DIRECTION_NORM || !norm.is_finite() {
            return Err(Error::DegenerateDirection { norm });
        }
        Ok(())
    }

    /// `v`-Hessian of `F²/2`, without the definiteness check.
    pub fn g_matrix(&self, chart: usize, x: &[f64], v: &[f64]) -> Result<DMatrix<f64>> {
        Self::require_direction(v)?;
        let h = hess_v(&*self.active, chart, x, v);
        Ok(DMatrix::from_row_slice(x.len(), x.len(), &h))
    }

    /// `g_v(a, b)`.
    pub fn g_inner(&self, chart: usize, x: &[f64], v: &[f64], a: &[f64], b: &[f64]) -> Result<f64> {
        let g = self.g_matrix(chart, x, v)?;
        Ok((DVector::from_column_slice(a).transpose() * g * DVector::from_column_slice(b))[0])
    }

    pub fn fundamental_tensor(&self, p: &TangentVec) -> Result<FundamentalTensor> {
        self.atlas.check(p.chart, p.x.as_slice())?;
        let g = self.g_matrix(p.chart, p.x.as_slice(), p.v.as_slice())?;
        let e = min_sym_eigenvalue(&g);
        if !(e > 0.0) {
            return Err(Error::ConvexityViolation {
                x: p.x.as_slice().to_vec(),
                v: p.v.as_slice().to_vec(),
                min_eigenvalue: e,
            });
        }
        Ok(FundamentalTensor { base: p.clone(), g })
    }

    /// Third `v`-derivative of `F²/4`.
    pub fn cartan_tensor(&self, p: &TangentVec) -> Result<CartanTensor> {
        self.atlas.check(p.chart, p.x.as_slice())?;
        let (x, v) = (p.x.as_slice(), p.v.as_slice());
        Self::require_direction(v)?;
        let n = x.len();
        let mut entries = vec![0.0; n * n * n];
        let xs: Vec<D3> = x.iter().map(|&c| D3::cst(c)).collect();
        for i in 0..n {
            for j in i..n {
                for k in j..n {
                    let vs: Vec<D3> = (0..n)
                        .map(|m| {
                            let e = |a: usize| if a == m { 1.0 } else { 0.0 };
                            Dual::new(
                                Dual::new(D1::new(v[m], e(i)), D1::new(e(j), 0.0)),
                                Dual::new(D1::new(e(k), 0.0), D1::new(0.0, 0.0)),
                            )
                        })
                        .collect();
                    let f = self.f(p.chart, &xs, &vs);
                    let c = (f * f).eps.eps.eps / 4.0;
                    for (a, b, d) in [(i, j, k), (i, k, j), (j, i, k), (j, k, i), (k, i, j), (k, j, i)] {
                        entries[(a * n + b) * n + d] = c;
                    }
                }
            }
        }
        Ok(CartanTensor { base: p.clone(), dim: n, entries })
    }

    /// `𝔏(v) = g_v(v, ·)`, extended by zero.
    pub fn legendre(&self, p: &TangentVec) -> Result<Covector> {
        self.atlas.check(p.chart, p.x.as_slice())?;
        let n = p.x.len();
        let omega = if p.v.norm() < MIN_DIRECTION_NORM {
            DVector::zeros(n)
        } else {
            DVector::from_vec(grad_v(&*self.active, p.chart, p.x.as_slice(), p.v.as_slice()))
        };
        Ok(Covector { chart: p.chart, x: p.x.clone(), omega })
    }

    /// Inverts the Legendre transform by damped Newton iteration on the
    /// strictly convex function `F²/2 − ω(v)`.
    pub fn legendre_inverse(&self, omega: &Covector, guess: Option<&[f64]>) -> Result<TangentVec> {
        self.atlas.check(omega.chart, omega.x.as_slice())?;
        let v = self.legendre_inverse_raw(omega.chart, omega.x.as_slice(), omega.omega.as_slice(), guess)?;
        Ok(TangentVec { chart: omega.chart, x: omega.x.clone(), v: DVector::from_vec(v) })
    }

    pub(crate) fn legendre_inverse_raw(
        &self,
        chart: usize,
        x: &[f64],
        omega: &[f64],
        guess: Option<&[f64]>,
    ) -> Result<Vec<f64>> {
        let n = x.len();
        let wnorm = omega.iter().map(|c| c * c).sum::<f64>().sqrt();
        if wnorm == 0.0 {
            return Ok(vec![0.0; n]);
        }
        let tol = 1e-10 * (1.0 + wnorm);
        let mut v: Vec<f64> = match guess {
            Some(g) if g.iter().map(|c| c * c).sum::<f64>().sqrt() >= MIN_DIRECTION_NORM => g.to_vec(),
            _ => omega.to_vec(),
        };
        let phi = |v: &[f64]| {
            let f = self.f(chart, x, v);
            0.5 * f * f - dot(omega, v)
        };
        let mut residual = f64::INFINITY;
        for _ in 0..100 {
            let grad = grad_v(&*self.active, chart, x, &v);
            let r: Vec<f64> = grad.iter().zip(omega).map(|(a, b)| a - b).collect();
            residual = r.iter().map(|c| c * c).sum::<f64>().sqrt();
            let mut h = hess_v(&*self.active, chart, x, &v);
            let mut step: Vec<f64> = r.iter().map(|c| -c).collect();
            let solved = solve_in_place(&mut h, &mut step, n).is_some();
            if residual <= tol {
                // one polishing step: convergence is quadratic here
                if solved {
                    let full: Vec<f64> = v.iter().zip(&step).map(|(a, b)| a + b).collect();
                    let rf = grad_v(&*self.active, chart, x, &full)
                        .iter()
                        .zip(omega)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt();
                    if rf < residual {
                        return Ok(full);
                    }
                }
                return Ok(v);
            }
            if !solved {
                break;
            }
            // the full step is taken whenever it reduces the gradient residual;
            // near convergence the decrease of Φ is below rounding
            let full: Vec<f64> = v.iter().zip(&step).map(|(a, b)| a + b).collect();
            if full.iter().map(|c| c * c).sum::<f64>().sqrt() >= MIN_DIRECTION_NORM {
                let rf = grad_v(&*self.active, chart, x, &full)
                    .iter()
                    .zip(omega)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                if rf < residual {
                    v = full;
                    continue;
                }
            }
            let slope = dot(&r, &step);
            let p0 = phi(&v);
            let mut alpha = 0.5;
            loop {
                let trial: Vec<f64> = v.iter().zip(&step).map(|(a, b)| a + alpha * b).collect();
                let tn = trial.iter().map(|c| c * c).sum::<f64>().sqrt();
                if tn >= MIN_DIRECTION_NORM && phi(&trial) <= p0 + 1e-4 * alpha * slope {
                    v = trial;
                    break;
                }
                alpha *= 0.5;
                if alpha < 1e-12 {
                    v = trial;
                    break;
                }
            }
        }
        Err(Error::InversionFailure { residual, iterations: 100 })
    }

    /// Legendre inverse at a generic scalar level: the primal solve is done
    /// in `f64`, then Newton steps in `S` arithmetic carry the derivatives.
    pub(crate) fn legendre_inverse_s<S: Real>(&self, chart: usize, x: &[S], omega: &[S]) -> Result<Vec<S>>
    where
        Dual<S>: Real,
        Dual<Dual<S>>: Real,
    {
        let n = x.len();
        let xr: Vec<f64> = x.iter().map(|c| c.re()).collect();
        let wr: Vec<f64> = omega.iter().map(|c| c.re()).collect();
        let v0 = self.legendre_inverse_raw(chart, &xr, &wr, None)?;
        let mut v: Vec<S> = v0.iter().map(|&c| S::cst(c)).collect();
        for _ in 0..3 {
            let grad = grad_v(&*self.active, chart, x, &v);
            let mut step: Vec<S> = grad.iter().zip(omega).map(|(&a, &b)| b - a).collect();
            let mut h = hess_v(&*self.active, chart, x, &v);
            solve_in_place(&mut h, &mut step, n)
                .ok_or_else(|| Error::Numerical("singular fundamental tensor in Legendre inversion".into()))?;
            for (vi, si) in v.iter_mut().zip(&step) {
                *vi = *vi + *si;
            }
        }
        Ok(v)
    }

    /// The reverse metric `F̄(x, v) = F(x, −v)`; reversing twice returns the
    /// original evaluator.
    pub fn reverse(&self) -> MetricField {
        let active: Arc<dyn ErasedNorm> = if self.reversed {
            self.forward.clone()
        } else {
            Arc::new(Reversed { inner: self.forward.clone() })
        };
        MetricField {
            atlas: self.atlas.clone(),
            family: self.family.clone(),
            forward: self.forward.clone(),
            active,
            reversible: self.reversible,
            reversed: !self.reversed,
        }
    }

    /// `2G(x, v)` such that geodesics satisfy `ẍ + 2G(x, ẋ) = 0`.
    pub fn spray(&self, p: &TangentVec) -> Result<DVector<f64>> {
        self.atlas.check(p.chart, p.x.as_slice())?;
        Self::require_direction(p.v.as_slice())?;
        spray_s(self, p.chart, p.x.as_slice(), p.v.as_slice()).map(DVector::from_vec)
    }
}

/// `∂(F²/2)/∂v` at scalar level `S`.
pub(crate) fn grad_v<S: Real>(norm: &dyn ErasedNorm, chart: usize, x: &[S], v: &[S]) -> Vec<S>
where
    Dual<S>: Real,
{
    let n = x.len();
    let xs: Vec<Dual<S>> = x.iter().map(|&c| Dual::constant(c)).collect();
    (0..n)
        .map(|i| {
            let vs: Vec<Dual<S>> = v
                .iter()
                .enumerate()
                .map(|(k, &c)| Dual::new(c, if k == i { S::one() } else { S::zero() }))
                .collect();
            let f = <Dual<S>>::eval_norm(norm, chart, &xs, &vs);
            (f * f).eps * 0.5
        })
        .collect()
}

/// `∂²(F²/2)/∂v∂v`, row-major, at scalar level `S`.
pub(crate) fn hess_v<S: Real>(norm: &dyn ErasedNorm, chart: usize, x: &[S], v: &[S]) -> Vec<S>
where
    Dual<S>: Real,
    Dual<Dual<S>>: Real,
{
    let n = x.len();
    let xs: Vec<Dual<Dual<S>>> = x.iter().map(|&c| Dual::constant(Dual::constant(c))).collect();
    let mut h = vec![S::zero(); n * n];
    for i in 0..n {
        for j in i..n {
            let vs: Vec<Dual<Dual<S>>> = v
                .iter()
                .enumerate()
                .map(|(k, &c)| {
                    let ei = if k == i { S::one() } else { S::zero() };
                    let ej = if k == j { S::one() } else { S::zero() };
                    Dual::new(Dual::new(c, ei), Dual::new(ej, S::zero()))
                })
                .collect();
            let f = <Dual<Dual<S>>>::eval_norm(norm, chart, &xs, &vs);
            let val = (f * f).eps.eps * 0.5;
            h[i * n + j] = val;
            h[j * n + i] = val;
        }
    }
    h
}

/// Spray coefficients `2G = g⁻¹(M v − ∂L/∂x)` with `L = F²/2` and
/// `M = ∂²L/∂v∂x`, at scalar level `S`.
pub(crate) fn spray_s<S: Real>(metric: &MetricField, chart: usize, x: &[S], v: &[S]) -> Result<Vec<S>>
where
    Dual<S>: Real,
    Dual<Dual<S>>: Real,
{
    let norm = metric.erased();
    let n = x.len();
    let mut g = hess_v(norm, chart, x, v);
    let mut rhs = vec![S::zero(); n];
    // mixed term contracted with v: inner seed e_i in v, outer seed v in x
    let xs: Vec<Dual<Dual<S>>> = x.iter().zip(v).map(|(&c, &d)| Dual::new(Dual::constant(c), Dual::constant(d))).collect();
    for (i, r) in rhs.iter_mut().enumerate() {
        let vs: Vec<Dual<Dual<S>>> = v
            .iter()
            .enumerate()
            .map(|(k, &c)| Dual::constant(Dual::new(c, if k == i { S::one() } else { S::zero() })))
            .collect();
        let f = <Dual<Dual<S>>>::eval_norm(norm, chart, &xs, &vs);
        *r = (f * f).eps.eps * 0.5;
    }
    let vs: Vec<Dual<S>> = v.iter().map(|&c| Dual::constant(c)).collect();
    for (i, r) in rhs.iter_mut().enumerate() {
        let xs: Vec<Dual<S>> =
            x.iter().enumerate().map(|(k, &c)| Dual::new(c, if k == i { S::one() } else { S::zero() })).collect();
        let f = <Dual<S>>::eval_norm(norm, chart, &xs, &vs);
        *r = *r - (f * f).eps * 0.5;
    }
    solve_in_place(&mut g, &mut rhs, n).ok_or_else(|| Error::ConvexityViolation {
        x: x.iter().map(|c| c.re()).collect(),
        v: v.iter().map(|c| c.re()).collect(),
        min_eigenvalue: 0.0,
    })?;
    Ok(rhs)
}

/// Sample counts for [`validate_metric`].
#[derive(Clone, Debug, PartialEq)]
pub struct SamplingPlan {
    pub samples: usize,
    pub seed: u64,
    /// Points are drawn from `[-extent, extent]^n` intersected with chart 0.
    pub extent: f64,
}

impl Default for SamplingPlan {
    fn default() -> Self {
        SamplingPlan { samples: 200, seed: 0, extent: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub samples: usize,
    pub max_homogeneity_residual: f64,
    pub min_eigenvalue: f64,
    pub max_cartan_contraction: f64,
    pub max_g_identity_residual: f64,
    pub max_reversibility_residual: f64,
    pub reversible: bool,
    pub violations: Vec<String>,
    pub pass: bool,
}

/// Samples the metric invariants: homogeneity, strong convexity, the
/// `g_v(v,v) = F²` identity, the Cartan contraction, and reversibility.
pub fn validate_metric(metric: &MetricField, plan: &SamplingPlan) -> MetricReport {
    let n = metric.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let bx = &metric.atlas().charts[0];
    let mut rep = MetricReport {
        samples: 0,
        max_homogeneity_residual: 0.0,
        min_eigenvalue: f64::INFINITY,
        max_cartan_contraction: 0.0,
        max_g_identity_residual: 0.0,
        max_reversibility_residual: 0.0,
        reversible: true,
        violations: Vec::new(),
        pass: true,
    };
    for s in 0..plan.samples {
        let x: Vec<f64> = (0..n)
            .map(|i| {
                let lo = bx.lo[i].max(-plan.extent);
                let hi = bx.hi[i].min(plan.extent);
                rng.random_range(0.0..1.0) * (hi - lo) * 0.98 + lo + 0.01 * (hi - lo)
            })
            .collect();
        // include the coordinate axes among the directions
        let v: Vec<f64> = if s < 2 * n {
            let sign = if s % 2 == 0 { 1.0 } else { -1.0 };
            (0..n).map(|i| if i == s / 2 { sign } else { 0.0 }).collect()
        } else {
            let scale = rng.random_range(0.1..3.0);
            (0..n).map(|_| rng.random_range(-1.0..1.0) * scale).collect()
        };
        if v.iter().map(|c| c * c).sum::<f64>().sqrt() < 1e-6 {
            continue;
        }
        rep.samples += 1;
        let f = metric.f(0, &x, &v);
        if !(f > 0.0) {
            rep.violations.push(format!("F is not positive at x = {x:?}, v = {v:?} (F = {f})"));
        }
        for lam in [0.5, 2.0, 10.0] {
            let lv: Vec<f64> = v.iter().map(|c| c * lam).collect();
            let r = (metric.f(0, &x, &lv) - lam * f).abs();
            rep.max_homogeneity_residual = rep.max_homogeneity_residual.max(r / (1.0 + lam * f.abs()));
            if r > 1e-9 * (1.0 + lam * f.abs()) {
                rep.violations.push(format!("homogeneity residual {r:e} at x = {x:?}, v = {v:?}, lambda = {lam}"));
            }
        }
        let p = TangentVec::new(0, &x, &v);
        match metric.g_matrix(0, &x, &v) {
            Ok(g) => {
                let e = min_sym_eigenvalue(&g);
                rep.min_eigenvalue = rep.min_eigenvalue.min(e);
                if !(e > 0.0) {
                    rep.violations.push(format!(
                        "convexity violation at x = {x:?}, v = {v:?}: min eigenvalue {e:e}"
                    ));
                }
                let vv = DVector::from_column_slice(&v);
                let gvv = (vv.transpose() * &g * &vv)[0];
                let rel = (gvv - f * f).abs() / (f * f).max(1e-300);
                rep.max_g_identity_residual = rep.max_g_identity_residual.max(rel);
                if rel > 1e-9 {
                    rep.violations.push(format!("g_v(v,v) differs from F^2 by {rel:e} at v = {v:?}"));
                }
            }
            Err(e) => rep.violations.push(e.to_string()),
        }
        if let Ok(c) = metric.cartan_tensor(&p) {
            for a in 0..n {
                for b in 0..n {
                    let mut u = vec![0.0; n];
                    let mut w = vec![0.0; n];
                    u[a] = 1.0;
                    w[b] = 1.0;
                    let r = c.apply(&v, &u, &w).abs();
                    rep.max_cartan_contraction = rep.max_cartan_contraction.max(r);
                }
            }
        }
        let neg: Vec<f64> = v.iter().map(|c| -c).collect();
        let rr = (metric.f(0, &x, &neg) - f).abs();
        rep.max_reversibility_residual = rep.max_reversibility_residual.max(rr);
        if rr > 1e-10 * (1.0 + f.abs()) {
            rep.reversible = false;
        }
    }
    if rep.max_cartan_contraction > 1e-9 {
        rep.violations.push(format!(
            "Cartan contraction with the base vector reaches {:e}",
            rep.max_cartan_contraction
        ));
    }
    if metric.is_reversible() && !rep.reversible {
        rep.violations.push(format!(
            "metric is declared reversible but |F(-v) - F(v)| reaches {:e}",
            rep.max_reversibility_residual
        ));
    }
    rep.pass = rep.violations.is_empty();
    rep
}

/// Free-function form of [`MetricField::reverse`].
pub fn reverse_metric(metric: &MetricField) -> MetricField {
    metric.reverse()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn plane() -> Arc<ManifoldAtlas> {
        Arc::new(ManifoldAtlas::euclidean(2))
    }

    fn randers() -> MetricField {
        MetricField::randers(plane(), None, vec![0.5, 0.0]).unwrap()
    }

    // closed forms for the flat Randers norm |v| + <b, v>
    fn randers_grad(b: &[f64], v: &[f64]) -> Vec<f64> {
        let alpha = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        let f = alpha + b.iter().zip(v).map(|(p, q)| p * q).sum::<f64>();
        v.iter().zip(b).map(|(vi, bi)| f * (vi / alpha + bi)).collect()
    }

    fn randers_g(b: &[f64], v: &[f64]) -> DMatrix<f64> {
        let n = v.len();
        let alpha = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        let f = alpha + b.iter().zip(v).map(|(p, q)| p * q).sum::<f64>();
        DMatrix::from_fn(n, n, |i, j| {
            let d = if i == j { 1.0 } else { 0.0 };
            let (ui, uj) = (v[i] / alpha, v[j] / alpha);
            f / alpha * (d - ui * uj) + (ui + b[i]) * (uj + b[j])
        })
    }

    fn fd_hessian(b: &[f64], v: &[f64], h: f64) -> DMatrix<f64> {
        let n = v.len();
        DMatrix::from_fn(n, n, |i, j| {
            let mut p = v.to_vec();
            let mut m = v.to_vec();
            p[j] += h;
            m[j] -= h;
            (randers_grad(b, &p)[i] - randers_grad(b, &m)[i]) / (2.0 * h)
        })
    }

    #[test]
    fn eval_f_examples() {
        let e = MetricField::euclidean(plane());
        assert_relative_eq!(e.eval_f(&TangentVec::new(0, &[0.0, 0.0], &[3.0, 4.0])).unwrap(), 5.0);
        let r = randers();
        assert_relative_eq!(r.eval_f(&TangentVec::new(0, &[0.0, 0.0], &[1.0, 0.0])).unwrap(), 1.5);
        assert_relative_eq!(r.eval_f(&TangentVec::new(0, &[0.0, 0.0], &[-1.0, 0.0])).unwrap(), 0.5);
        assert_eq!(r.eval_f(&TangentVec::new(0, &[0.0, 0.0], &[0.0, 0.0])).unwrap(), 0.0);
    }

    #[test]
    fn eval_f_outside_chart() {
        let s = MetricField::round_sphere(Arc::new(ManifoldAtlas::sphere_stereographic(2)));
        let err = s.eval_f(&TangentVec::new(0, &[5.0, 0.0], &[1.0, 0.0])).unwrap_err();
        assert!(matches!(err, Error::Domain { .. }));
    }

    #[test]
    fn fundamental_tensor_euclidean_and_randers() {
        let e = MetricField::euclidean(plane());
        let g = e.fundamental_tensor(&TangentVec::new(0, &[0.3, 0.1], &[0.2, -1.0])).unwrap();
        assert_relative_eq!(g.g, DMatrix::identity(2, 2), epsilon = 1e-14);
        let r = randers();
        let g = r.fundamental_tensor(&TangentVec::new(0, &[0.0, 0.0], &[1.0, 0.0])).unwrap();
        assert!((&g.g - randers_g(&[0.5, 0.0], &[1.0, 0.0])).amax() < 1e-12);
        let fd = fd_hessian(&[0.5, 0.0], &[1.0, 0.0], 1e-5);
        assert!((g.g - fd).amax() < 1e-6);
    }

    #[test]
    fn zero_direction_rejected() {
        let r = randers();
        let e = r.fundamental_tensor(&TangentVec::new(0, &[0.0, 0.0], &[0.0, 1e-13])).unwrap_err();
        assert!(matches!(e, Error::DegenerateDirection { .. }));
        assert!(r.cartan_tensor(&TangentVec::new(0, &[0.0, 0.0], &[0.0, 0.0])).is_err());
        assert!(r.spray(&TangentVec::new(0, &[0.0, 0.0], &[0.0, 0.0])).is_err());
    }

    #[test]
    fn cartan_riemannian_vanishes() {
        let s = MetricField::round_sphere(Arc::new(ManifoldAtlas::sphere_stereographic(2)));
        let c = s.cartan_tensor(&TangentVec::new(0, &[0.4, -0.2], &[1.0, 2.0])).unwrap();
        assert!(c.max_abs() < 1e-10);
    }

    #[test]
    fn cartan_randers_contraction_and_fd() {
        let r = randers();
        let c = r.cartan_tensor(&TangentVec::new(0, &[0.0, 0.0], &[1.0, 1.0])).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                let mut u = [0.0; 2];
                let mut w = [0.0; 2];
                u[a] = 1.0;
                w[b] = 1.0;
                assert!(c.apply(&[1.0, 1.0], &u, &w).abs() < 1e-9);
            }
        }
        // central differences of the closed-form fundamental tensor
        let h = 1e-4;
        for k in 0..2 {
            let mut p = [1.0, 1.0];
            let mut m = [1.0, 1.0];
            p[k] += h;
            m[k] -= h;
            let dg = (randers_g(&[0.5, 0.0], &p) - randers_g(&[0.5, 0.0], &m)) / (2.0 * h);
            for i in 0..2 {
                for j in 0..2 {
                    let fd = 0.5 * dg[(i, j)];
                    assert!((fd - c.get(i, j, k)).abs() < 1e-7, "C[{i}{j}{k}] {} vs {fd}", c.get(i, j, k));
                }
            }
        }
    }

    #[test]
    fn legendre_examples() {
        let e = MetricField::euclidean(plane());
        let w = e.legendre(&TangentVec::new(0, &[0.0, 0.0], &[3.0, 4.0])).unwrap();
        assert_relative_eq!(w.omega, DVector::from_column_slice(&[3.0, 4.0]), epsilon = 1e-13);
        let z = e.legendre(&TangentVec::new(0, &[0.0, 0.0], &[0.0, 0.0])).unwrap();
        assert_eq!(z.omega.norm(), 0.0);
        let r = randers();
        let w = r.legendre(&TangentVec::new(0, &[0.0, 0.0], &[1.0, 0.0])).unwrap();
        // central-difference gradient of F²/2
        let l = |v: &[f64]| 0.5 * r.f(0, &[0.0, 0.0], v).powi(2);
        let h = 1e-6;
        let fd0 = (l(&[1.0 + h, 0.0]) - l(&[1.0 - h, 0.0])) / (2.0 * h);
        let fd1 = (l(&[1.0, h]) - l(&[1.0, -h])) / (2.0 * h);
        assert_relative_eq!(w.omega[0], fd0, epsilon = 1e-8);
        assert_relative_eq!(w.omega[1], fd1, epsilon = 1e-8);
        assert_relative_eq!(w.omega[0], 2.25, epsilon = 1e-12);
    }

    #[test]
    fn legendre_inverse_examples() {
        let r = randers();
        let zero = Covector { chart: 0, x: DVector::zeros(2), omega: DVector::zeros(2) };
        assert_eq!(r.legendre_inverse(&zero, None).unwrap().v.norm(), 0.0);
        let w = Covector { chart: 0, x: DVector::zeros(2), omega: DVector::from_column_slice(&[0.7, 0.0]) };
        let v = r.legendre_inverse(&w, None).unwrap();
        assert!(v.v[1].abs() < 1e-12 && v.v[0] > 0.0);
        for v0 in [[1.0, 0.3], [-0.2, 1.1], [-2.0, -0.5]] {
            let p = TangentVec::new(0, &[0.0, 0.0], &v0);
            let w = r.legendre(&p).unwrap();
            let back = r.legendre_inverse(&w, None).unwrap();
            assert!((back.v - p.v).norm() < 1e-9);
        }
    }

    #[test]
    fn legendre_inverse_dual_derivative() {
        // d/ds of 𝔏⁻¹(ω + s·e1) against central differences
        let q = MetricField::minkowski_quartic(plane(), 0.1).unwrap();
        let x = [D1::cst(0.0), D1::cst(0.0)];
        let w = [D1::new(0.4, 1.0), D1::new(0.9, 0.0)];
        let v = q.legendre_inverse_s(0, &x, &w).unwrap();
        let h = 1e-6;
        let vp = q.legendre_inverse_raw(0, &[0.0, 0.0], &[0.4 + h, 0.9], None).unwrap();
        let vm = q.legendre_inverse_raw(0, &[0.0, 0.0], &[0.4 - h, 0.9], None).unwrap();
        for i in 0..2 {
            assert_relative_eq!(v[i].eps, (vp[i] - vm[i]) / (2.0 * h), epsilon = 1e-7);
        }
    }

    #[test]
    fn reverse_examples() {
        let e = MetricField::euclidean(plane());
        assert_relative_eq!(e.reverse().f(0, &[0.1, 0.2], &[0.3, -0.4]), e.f(0, &[0.1, 0.2], &[0.3, -0.4]));
        let r = randers();
        assert_relative_eq!(r.reverse().f(0, &[0.0, 0.0], &[1.0, 0.0]), 0.5);
        let rr = r.reverse().reverse();
        assert!(!rr.is_reversed());
        assert!((rr.f(0, &[0.0, 0.0], &[0.3, 0.7]) - r.f(0, &[0.0, 0.0], &[0.3, 0.7])).abs() < 1e-12);
    }

    #[test]
    fn validate_examples() {
        let e = validate_metric(&MetricField::euclidean(plane()), &SamplingPlan::default());
        assert!(e.pass, "{:?}", e.violations);
        assert_relative_eq!(e.min_eigenvalue, 1.0, epsilon = 1e-12);
        let bad = MetricField::randers_unchecked(plane(), vec![1.0, 0.0, 0.0, 1.0], vec![1.2, 0.0]);
        let rep = validate_metric(&bad, &SamplingPlan::default());
        assert!(!rep.pass);
        assert!(rep.violations.iter().any(|v| v.contains("convexity")));
        assert!(MetricField::randers(plane(), None, vec![1.2, 0.0]).is_err());
        let q = MetricField::minkowski_quartic(plane(), 0.1).unwrap();
        let rep = validate_metric(&q, &SamplingPlan::default());
        assert!(rep.pass, "{:?}", rep.violations);
        assert!(rep.reversible);
        let rep = validate_metric(&randers(), &SamplingPlan::default());
        assert!(rep.pass && !rep.reversible);
    }

    #[test]
    fn quartic_large_epsilon_rejected() {
        assert!(MetricField::minkowski_quartic(plane(), 5.0).is_err());
    }

    #[test]
    fn spray_flat_cases_vanish() {
        let e = MetricField::euclidean(plane());
        assert!(e.spray(&TangentVec::new(0, &[0.3, 0.2], &[1.0, 2.0])).unwrap().norm() < 1e-14);
        let r = randers();
        assert!(r.spray(&TangentVec::new(0, &[0.3, 0.2], &[1.0, 2.0])).unwrap().norm() < 1e-12);
    }

    #[test]
    fn spray_round_sphere_matches_christoffel() {
        // conformal factor e^{2φ}, φ = ln 2 − ln(1+|x|²): 2G^k = 2 (∇φ·v) v^k − |v|² ∂_kφ
        let s = MetricField::round_sphere(Arc::new(ManifoldAtlas::sphere_stereographic(2)));
        let x = [0.4, -0.7];
        let v = [0.9, 0.35];
        let g = s.spray(&TangentVec::new(0, &x, &v)).unwrap();
        let r2 = x[0] * x[0] + x[1] * x[1];
        let dphi = [-2.0 * x[0] / (1.0 + r2), -2.0 * x[1] / (1.0 + r2)];
        let dv = dphi[0] * v[0] + dphi[1] * v[1];
        let vv = v[0] * v[0] + v[1] * v[1];
        for k in 0..2 {
            assert_relative_eq!(g[k], 2.0 * dv * v[k] - vv * dphi[k], epsilon = 1e-12);
        }
    }
}
