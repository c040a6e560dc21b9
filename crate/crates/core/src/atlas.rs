//! Chart model for the ambient manifold.
//!
//! An atlas is a list of coordinate boxes plus explicit transition maps
//! between them. Flat and toroidal spaces use a single unbounded chart; the
//! torus additionally carries a period lattice, so that geodesics are
//! integrated on the universal cover and only compared modulo the lattice.
//! The round sphere uses the two stereographic charts, whose transition is
//! the inversion `x ↦ x/|x|²`.

use nalgebra::DVector;

use crate::dual::{Dual, Real};
use crate::error::{Error, Result};

/// A point given in coordinates of a particular chart.
#[derive(Clone, Debug, PartialEq)]
pub struct ChartPoint {
    pub chart: usize,
    pub x: DVector<f64>,
}

impl ChartPoint {
    pub fn new(chart: usize, x: DVector<f64>) -> Self {
        ChartPoint { chart, x }
    }

    pub fn from_slice(chart: usize, x: &[f64]) -> Self {
        ChartPoint { chart, x: DVector::from_column_slice(x) }
    }
}

/// Open coordinate box; bounds may be infinite.
#[derive(Clone, Debug, PartialEq)]
pub struct ChartBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl ChartBox {
    pub fn unbounded(n: usize) -> Self {
        ChartBox { lo: vec![f64::NEG_INFINITY; n], hi: vec![f64::INFINITY; n] }
    }

    pub fn cube(n: usize, half_width: f64) -> Self {
        ChartBox { lo: vec![-half_width; n], hi: vec![half_width; n] }
    }

    /// Distance from `x` to the box boundary (negative outside).
    pub fn depth(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(&xi, (&lo, &hi))| (xi - lo).min(hi - xi))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Coordinate change between two charts.
#[derive(Clone, Debug, PartialEq)]
pub enum TransitionMap {
    Identity,
    /// `x ↦ x / |x|²`, its own inverse; undefined at the origin.
    Inversion,
    /// `x ↦ A x + b` with `A` row-major.
    Affine { matrix: Vec<f64>, offset: Vec<f64> },
}

impl TransitionMap {
    pub fn apply<S: Real>(&self, x: &[S]) -> Vec<S> {
        match self {
            TransitionMap::Identity => x.to_vec(),
            TransitionMap::Inversion => {
                let r2 = x.iter().fold(S::zero(), |acc, &xi| acc + xi * xi);
                x.iter().map(|&xi| xi / r2).collect()
            }
            TransitionMap::Affine { matrix, offset } => {
                let n = x.len();
                (0..n)
                    .map(|i| {
                        (0..n).fold(S::cst(offset[i]), |acc, j| acc + x[j] * matrix[i * n + j])
                    })
                    .collect()
            }
        }
    }

    pub fn defined_at(&self, x: &[f64]) -> bool {
        match self {
            TransitionMap::Inversion => x.iter().map(|v| v * v).sum::<f64>() > 1e-24,
            _ => true,
        }
    }

    pub fn inverse(&self) -> Result<TransitionMap> {
        match self {
            TransitionMap::Identity => Ok(TransitionMap::Identity),
            TransitionMap::Inversion => Ok(TransitionMap::Inversion),
            TransitionMap::Affine { matrix, offset } => {
                let n = offset.len();
                let a = nalgebra::DMatrix::from_row_slice(n, n, matrix);
                let inv = a.try_inverse().ok_or_else(|| {
                    Error::Consistency("affine transition is not invertible".into())
                })?;
                let b = -(&inv * DVector::from_column_slice(offset));
                let mut m = Vec::with_capacity(n * n);
                for i in 0..n {
                    for j in 0..n {
                        m.push(inv[(i, j)]);
                    }
                }
                Ok(TransitionMap::Affine { matrix: m, offset: b.as_slice().to_vec() })
            }
        }
    }

    /// Pushes a tangent vector forward: `(φ(x), Dφ(x)·v)`.
    pub fn push_state<S: Real>(&self, x: &[S], v: &[S]) -> (Vec<S>, Vec<S>)
    where
        Dual<S>: Real,
    {
        let seeded: Vec<Dual<S>> = x.iter().zip(v).map(|(&a, &b)| Dual::new(a, b)).collect();
        let out = self.apply(&seeded);
        (out.iter().map(|d| d.re).collect(), out.iter().map(|d| d.eps).collect())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub from: usize,
    pub to: usize,
    pub map: TransitionMap,
}

/// The ambient manifold as an atlas of coordinate boxes.
#[derive(Clone, Debug, PartialEq)]
pub struct ManifoldAtlas {
    pub dim: usize,
    pub charts: Vec<ChartBox>,
    pub transitions: Vec<Transition>,
    pub periodic_lattice: Option<Vec<f64>>,
    pub safe_margin: f64,
}

impl ManifoldAtlas {
    pub fn euclidean(dim: usize) -> Self {
        ManifoldAtlas {
            dim,
            charts: vec![ChartBox::unbounded(dim)],
            transitions: Vec::new(),
            periodic_lattice: None,
            safe_margin: 0.0,
        }
    }

    pub fn torus(periods: &[f64]) -> Result<Self> {
        if periods.is_empty() || periods.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
            return Err(Error::Config {
                pointer: "/manifold/periods".into(),
                message: "periods must be strictly positive".into(),
            });
        }
        Ok(ManifoldAtlas {
            dim: periods.len(),
            charts: vec![ChartBox::unbounded(periods.len())],
            transitions: Vec::new(),
            periodic_lattice: Some(periods.to_vec()),
            safe_margin: 0.0,
        })
    }

    /// Unit sphere `S^dim` with stereographic charts from the north (chart 0)
    /// and south (chart 1) poles. Chart 0 has the south pole at its origin.
    pub fn sphere_stereographic(dim: usize) -> Self {
        ManifoldAtlas {
            dim,
            charts: vec![ChartBox::cube(dim, 3.0), ChartBox::cube(dim, 3.0)],
            transitions: vec![
                Transition { from: 0, to: 1, map: TransitionMap::Inversion },
                Transition { from: 1, to: 0, map: TransitionMap::Inversion },
            ],
            periodic_lattice: None,
            safe_margin: 1.5,
        }
    }

    /// Checks the declared invariants: lattice positivity and that every
    /// transition composed with its reverse is the identity to 1e-12 on
    /// sample points from the overlap.
    pub fn validate(&self) -> Result<()> {
        if let Some(p) = &self.periodic_lattice {
            if p.len() != self.dim || p.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::Consistency("periodic lattice entries must be positive".into()));
            }
        }
        for t in &self.transitions {
            let back = self.transition(t.to, t.from).ok_or_else(|| {
                Error::Consistency(format!("missing inverse transition {} -> {}", t.to, t.from))
            })?;
            for k in 0..16 {
                let x: Vec<f64> = (0..self.dim)
                    .map(|i| 0.3 + 0.11 * ((k * 7 + i * 3) % 13) as f64 - 0.6 * (i % 2) as f64)
                    .collect();
                if !self.contains(t.from, &x) || !t.map.defined_at(&x) {
                    continue;
                }
                let y = t.map.apply(&x);
                if !self.contains(t.to, &y) {
                    continue;
                }
                let z = back.apply(&y);
                let err = x.iter().zip(&z).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                if err > 1e-12 {
                    return Err(Error::Consistency(format!(
                        "transition {} -> {} is not inverted by its reverse (error {err:e})",
                        t.from, t.to
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn chart_count(&self) -> usize {
        self.charts.len()
    }

    pub fn is_torus(&self) -> bool {
        self.periodic_lattice.is_some()
    }

    pub fn contains(&self, chart: usize, x: &[f64]) -> bool {
        chart < self.charts.len() && self.charts[chart].depth(x) > 0.0
    }

    pub fn check(&self, chart: usize, x: &[f64]) -> Result<()> {
        if self.contains(chart, x) && x.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::Domain { chart, x: x.to_vec() })
        }
    }

    pub fn in_safe_interior(&self, chart: usize, x: &[f64]) -> bool {
        self.charts[chart].depth(x) >= self.safe_margin
    }

    pub fn transition(&self, from: usize, to: usize) -> Option<&TransitionMap> {
        if from == to {
            return Some(&TransitionMap::Identity);
        }
        self.transitions.iter().find(|t| t.from == from && t.to == to).map(|t| &t.map)
    }

    /// Chart in which `x` (given in `chart`) sits deepest, with its coordinates there.
    pub fn best_chart(&self, chart: usize, x: &[f64]) -> (usize, Vec<f64>) {
        let mut best = (chart, x.to_vec());
        let mut best_depth = self.charts[chart].depth(x);
        for t in self.transitions.iter().filter(|t| t.from == chart) {
            if !t.map.defined_at(x) {
                continue;
            }
            let y = t.map.apply(x);
            let d = self.charts[t.to].depth(&y);
            if d > best_depth {
                best_depth = d;
                best = (t.to, y);
            }
        }
        best
    }

    /// Coordinates of `p` in chart `to`, if `p` lies in that chart.
    pub fn to_chart(&self, p: &ChartPoint, to: usize) -> Option<DVector<f64>> {
        let map = self.transition(p.chart, to)?;
        if !map.defined_at(p.x.as_slice()) {
            return None;
        }
        let y = map.apply(p.x.as_slice());
        self.contains(to, &y).then(|| DVector::from_vec(y))
    }

    /// Reduces a coordinate displacement to its shortest lattice representative.
    pub fn reduce_displacement(&self, dx: &mut [f64]) {
        if let Some(p) = &self.periodic_lattice {
            for (d, &per) in dx.iter_mut().zip(p) {
                *d -= per * (*d / per).round();
            }
        }
    }

    /// Wraps torus coordinates into the centered fundamental domain.
    pub fn canonicalize(&self, p: &ChartPoint) -> ChartPoint {
        match &self.periodic_lattice {
            Some(per) => {
                let x = p.x.iter().zip(per).map(|(&xi, &pi)| xi - pi * (xi / pi + 0.5).floor());
                ChartPoint { chart: p.chart, x: DVector::from_iterator(p.x.len(), x) }
            }
            None => p.clone(),
        }
    }

    /// Coordinate displacement `q − p` expressed in a chart containing both,
    /// reduced modulo the lattice. Returns the chart used.
    pub fn displacement(&self, p: &ChartPoint, q: &ChartPoint) -> Option<(usize, DVector<f64>)> {
        let mut best: Option<(f64, usize, DVector<f64>)> = None;
        for chart in [p.chart, q.chart] {
            let (Some(pc), Some(qc)) = (self.to_chart(p, chart), self.to_chart(q, chart)) else {
                continue;
            };
            let depth = self.charts[chart].depth(pc.as_slice()).min(self.charts[chart].depth(qc.as_slice()));
            let mut d = (qc - pc).as_slice().to_vec();
            self.reduce_displacement(&mut d);
            if best.as_ref().is_none_or(|b| depth > b.0) {
                best = Some((depth, chart, DVector::from_vec(d)));
            }
        }
        best.map(|(_, c, d)| (c, d))
    }

    /// Chart-mapped coordinate distance between two points.
    pub fn separation(&self, p: &ChartPoint, q: &ChartPoint) -> f64 {
        match self.displacement(p, q) {
            Some((_, d)) => d.norm(),
            None => f64::INFINITY,
        }
    }

    /// Moves `q` to the chart of `p` (when possible) and to the lattice
    /// translate nearest to `p`.
    pub fn nearest_image(&self, p: &ChartPoint, q: &ChartPoint) -> Option<ChartPoint> {
        let (chart, d) = self.displacement(p, q)?;
        let base = self.to_chart(p, chart)?;
        Some(ChartPoint { chart, x: base + d })
    }

    /// Embedding of sphere chart coordinates into `R^{n+1}` (unit sphere).
    pub fn sphere_embedding(&self, p: &ChartPoint) -> Option<DVector<f64>> {
        if self.charts.len() != 2 || self.periodic_lattice.is_some() {
            return None;
        }
        let r2 = p.x.norm_squared();
        let mut y = DVector::zeros(self.dim + 1);
        for i in 0..self.dim {
            y[i] = 2.0 * p.x[i] / (1.0 + r2);
        }
        // chart 0 projects from the north pole, its origin is the south pole
        let z = (r2 - 1.0) / (1.0 + r2);
        y[self.dim] = if p.chart == 0 { z } else { -z };
        Some(y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sphere_atlas_transitions_invert() {
        let a = ManifoldAtlas::sphere_stereographic(2);
        a.validate().unwrap();
        let p = ChartPoint::from_slice(0, &[2.0, 0.0]);
        let (c, y) = a.best_chart(0, p.x.as_slice());
        assert_eq!(c, 1);
        assert_relative_eq!(y[0], 0.5);
    }

    #[test]
    fn torus_displacement_wraps() {
        let a = ManifoldAtlas::torus(&[1.0, 1.0]).unwrap();
        let p = ChartPoint::from_slice(0, &[0.0, 0.0]);
        let q = ChartPoint::from_slice(0, &[1.25, -0.9]);
        let (_, d) = a.displacement(&p, &q).unwrap();
        assert_relative_eq!(d[0], 0.25, epsilon = 1e-12);
        assert_relative_eq!(d[1], 0.1, epsilon = 1e-12);
        let c = a.canonicalize(&q);
        assert_relative_eq!(c.x[0], 0.25, epsilon = 1e-12);
    }

    #[test]
    fn torus_rejects_nonpositive_period() {
        assert!(ManifoldAtlas::torus(&[1.0, 0.0]).is_err());
    }

    #[test]
    fn push_state_of_inversion() {
        let m = TransitionMap::Inversion;
        let (y, w) = m.push_state(&[2.0, 0.0], &[0.0, 1.0]);
        assert_relative_eq!(y[0], 0.5);
        // tangential velocity scales by 1/|x|²
        assert_relative_eq!(w[1], 0.25);
        assert_relative_eq!(w[0], 0.0);
    }

    #[test]
    fn sphere_embedding_antipodes() {
        let a = ManifoldAtlas::sphere_stereographic(2);
        let s = a.sphere_embedding(&ChartPoint::from_slice(0, &[0.0, 0.0])).unwrap();
        let n = a.sphere_embedding(&ChartPoint::from_slice(1, &[0.0, 0.0])).unwrap();
        assert_relative_eq!(s[2], -1.0);
        assert_relative_eq!(n[2], 1.0);
        let e = a.sphere_embedding(&ChartPoint::from_slice(1, &[1.0, 0.0])).unwrap();
        assert_relative_eq!(e[2], 0.0);
    }
}
