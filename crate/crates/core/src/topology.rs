//! The inverse normal exponential off the cut locus, the two deformation
//! retractions, and the differential of `f = d(N, ·)²`.

use std::fmt::Write as _;

use crate::atlas::ChartPoint;
use crate::error::{Error, Result};
use crate::focal_cut::{DistanceWitness, Minimizer, NormalFan};
use crate::metric::MetricField;
use crate::submanifold::{normal_exp, NormalRay};

/// Points closer than this to `N` are treated as lying on it.
const ON_N: f64 = 1e-9;
/// Required gap between the segment length and the cut time.
const CUT_GAP: f64 = 1e-6;

/// `(exp^ν)⁻¹(q)` for `q ∉ Cu(N)`.
#[derive(Clone, Debug)]
pub struct InverseExpResult {
    pub q: ChartPoint,
    pub ray: NormalRay,
    pub t: f64,
    /// Cut time of `ray`; `+∞` when the ray minimizes through the horizon.
    pub rho: f64,
    /// Coordinate distance between `exp^ν(t v)` and `q`.
    pub residual: f64,
}

/// `q` together with the data both homotopies need.
#[derive(Clone, Debug)]
pub struct Retraction {
    pub q: ChartPoint,
    pub ray: NormalRay,
    pub t: f64,
    pub rho: f64,
    /// `q ∈ Cu(N)`: two or more segments, or a segment ending at its cut time.
    pub on_cut: bool,
    /// Number of `N`-segments found at `q`.
    pub segments: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Homotopy {
    /// `h(s, q) = exp^ν((1 − s) t v)`, onto `N`.
    ToN,
    /// `H(s, q) = exp^ν((s ρ(v) + (1 − s) t) v)`, onto `Cu(N)`.
    ToCut,
}

impl NormalFan {
    /// Inverts the normal exponential at `q`, asserting a unique minimizer
    /// that stops short of its cut time.
    pub fn inverse_normal_exp(&self, q: &ChartPoint) -> Result<InverseExpResult> {
        let w = self.distance_to(q)?;
        let m = &w.minimizers[0];
        if w.d <= ON_N {
            return Ok(InverseExpResult { q: q.clone(), ray: m.ray.clone(), t: 0.0, rho: f64::INFINITY, residual: m.residual });
        }
        if w.minimizers.len() > 1 {
            return Err(Error::PointOnCutLocus { count: w.minimizers.len() });
        }
        let rho = self.cut_time(&m.ray)?.rho;
        if m.t >= rho - CUT_GAP {
            return Err(Error::Consistency(format!(
                "unique minimizer of length {} reaches its cut time {rho}",
                m.t
            )));
        }
        Ok(InverseExpResult { q: q.clone(), ray: m.ray.clone(), t: m.t, rho, residual: m.residual })
    }

    /// Prepares both homotopies at `q`. Unlike [`NormalFan::inverse_normal_exp`]
    /// this accepts cut points, which the homotopy onto the cut locus fixes.
    pub fn retraction(&self, q: &ChartPoint) -> Result<Retraction> {
        let w = self.distance_to(q)?;
        let m = w.minimizers[0].clone();
        let segments = w.minimizers.len();
        if w.d <= ON_N {
            return Ok(Retraction { q: q.clone(), ray: m.ray, t: 0.0, rho: f64::INFINITY, on_cut: false, segments });
        }
        if segments > 1 {
            return Ok(Retraction { q: q.clone(), ray: m.ray, t: m.t, rho: m.t, on_cut: true, segments });
        }
        let rho = self.cut_time(&m.ray)?.rho;
        let on_cut = m.t >= rho - CUT_GAP;
        Ok(Retraction { q: q.clone(), ray: m.ray, t: m.t, rho, on_cut, segments })
    }

    pub fn retract_to_n(&self, q: &ChartPoint, s: f64) -> Result<ChartPoint> {
        self.retraction(q)?.at(self.metric(), Homotopy::ToN, s, self.plan().tol)
    }

    pub fn retract_to_cut(&self, q: &ChartPoint, s: f64) -> Result<ChartPoint> {
        self.retraction(q)?.at(self.metric(), Homotopy::ToCut, s, self.plan().tol)
    }

    /// `df_q(X) = 2ℓ g_{γ̇(ℓ)}(γ̇(ℓ), X)` along the unique `N`-segment, with
    /// `X` given in the chart of `q`.
    pub fn distance_sq_differential(&self, q: &ChartPoint, x: &[f64]) -> Result<f64> {
        let w = self.distance_to(q)?;
        if w.d <= ON_N {
            return Ok(0.0);
        }
        let values = branch_derivatives(self.metric(), &w, q, x)?;
        if values.len() > 1 {
            let right = values.iter().cloned().fold(f64::INFINITY, f64::min);
            let left = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            return Err(Error::NonDifferentiable { left, right, count: values.len() });
        }
        Ok(values[0])
    }

    /// Compares the differential with finite differences of `d(N, ·)²` at
    /// `q ± hX` for each direction.
    pub fn check_first_variation(&self, q: &ChartPoint, directions: &[Vec<f64>], h: f64) -> Result<FirstVariationReport> {
        if !(h > 0.0) {
            return Err(Error::Precondition("finite-difference step must be positive".into()));
        }
        let f0 = self.distance_to(q)?.d.powi(2);
        let mut entries = Vec::with_capacity(directions.len());
        for x in directions {
            let shifted = |sign: f64| -> Result<f64> {
                let p = ChartPoint::new(q.chart, &q.x + nalgebra::DVector::from_column_slice(x) * (sign * h));
                Ok(self.distance_to(&p)?.d.powi(2))
            };
            let (fp, fm) = (shifted(1.0)?, shifted(-1.0)?);
            let (analytic, one_sided) = match self.distance_sq_differential(q, x) {
                Ok(v) => (Some(v), None),
                Err(Error::NonDifferentiable { left, right, count }) => (None, Some((left, right, count))),
                Err(e) => return Err(e),
            };
            entries.push(VariationEntry {
                direction: x.clone(),
                analytic,
                one_sided,
                central: (fp - fm) / (2.0 * h),
                right_quotient: (fp - f0) / h,
                left_quotient: (f0 - fm) / h,
            });
        }
        let max_deviation = entries
            .iter()
            .filter_map(|e| e.analytic.map(|a| (a - e.central).abs()))
            .fold(0.0, f64::max);
        let max_spread = entries.iter().map(VariationEntry::spread).fold(0.0, f64::max);
        let differentiable = entries.iter().all(|e| e.analytic.is_some());
        Ok(FirstVariationReport { q: q.clone(), h, entries, max_deviation, max_spread, differentiable })
    }
}

/// `2ℓ g_{γ̇ᵢ}(γ̇ᵢ, X)` for every minimizer `i`.
fn branch_derivatives(metric: &MetricField, w: &DistanceWitness, q: &ChartPoint, x: &[f64]) -> Result<Vec<f64>> {
    w.minimizers.iter().map(|m| branch_derivative(metric, m, q, x)).collect()
}

fn branch_derivative(metric: &MetricField, m: &Minimizer, q: &ChartPoint, x: &[f64]) -> Result<f64> {
    let term = &m.terminal;
    let map = metric
        .atlas()
        .transition(q.chart, term.chart)
        .ok_or_else(|| Error::Consistency(format!("no transition from chart {} to {}", q.chart, term.chart)))?;
    let (_, xv) = map.push_state(q.x.as_slice(), x);
    let g = metric.g_inner(term.chart, term.x.as_slice(), term.v.as_slice(), term.v.as_slice(), &xv)?;
    Ok(2.0 * m.t * g)
}

impl Retraction {
    /// Point of the homotopy at time `s ∈ [0, 1]`.
    pub fn at(&self, metric: &MetricField, which: Homotopy, s: f64, tol: crate::geodesic::OdeTolerances) -> Result<ChartPoint> {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::Precondition(format!("homotopy parameter {s} outside [0, 1]")));
        }
        let time = match which {
            Homotopy::ToN => {
                if self.on_cut {
                    return Err(Error::PointOnCutLocus { count: self.segments });
                }
                (1.0 - s) * self.t
            }
            Homotopy::ToCut => {
                if self.on_cut {
                    return Ok(self.q.clone());
                }
                if self.t <= ON_N {
                    return Err(Error::Precondition("the homotopy onto the cut locus is not defined on N".into()));
                }
                if self.rho.is_infinite() {
                    return Err(Error::RetractionUndefined);
                }
                s * self.rho + (1.0 - s) * self.t
            }
        };
        normal_exp(metric, &self.ray, time, tol)
    }

    /// `(s, point)` along the homotopy at `steps + 1` evenly spaced times.
    pub fn trace(&self, metric: &MetricField, which: Homotopy, steps: usize, tol: crate::geodesic::OdeTolerances) -> Result<Vec<(f64, ChartPoint)>> {
        let steps = steps.max(1);
        (0..=steps)
            .map(|i| {
                let s = i as f64 / steps as f64;
                Ok((s, self.at(metric, which, s, tol)?))
            })
            .collect()
    }
}

/// One direction of a first-variation check.
#[derive(Clone, Debug)]
pub struct VariationEntry {
    pub direction: Vec<f64>,
    /// `df(X)` when `q` has a unique segment.
    pub analytic: Option<f64>,
    /// `(left, right, count)` from the branch derivatives otherwise.
    pub one_sided: Option<(f64, f64, usize)>,
    pub central: f64,
    pub right_quotient: f64,
    pub left_quotient: f64,
}

impl VariationEntry {
    /// Gap between the one-sided difference quotients.
    pub fn spread(&self) -> f64 {
        (self.right_quotient - self.left_quotient).abs()
    }
}

#[derive(Clone, Debug)]
pub struct FirstVariationReport {
    pub q: ChartPoint,
    pub h: f64,
    pub entries: Vec<VariationEntry>,
    /// Largest `|df(X) − central difference|` over differentiable entries.
    pub max_deviation: f64,
    pub max_spread: f64,
    pub differentiable: bool,
}

/// Homotopy traces as CSV rows `s, x1..xn` (chart coordinates, lattice
/// reduced on tori).
pub fn trace_csv(metric: &MetricField, trace: &[(f64, ChartPoint)]) -> String {
    let n = metric.dim();
    let mut out = String::from("s");
    for i in 1..=n {
        let _ = write!(out, ",x{i}");
    }
    out.push('\n');
    for (s, p) in trace {
        let p = metric.atlas().canonicalize(p);
        let _ = write!(out, "{s}");
        for c in p.x.iter() {
            let _ = write!(out, ",{c}");
        }
        out.push('\n');
    }
    out
}

/// `d(N, ·)²` differential with a fresh fan; see [`NormalFan::distance_sq_differential`].
pub fn distance_sq_differential(
    metric: &MetricField,
    spec: &crate::submanifold::SubmanifoldSpec,
    q: &ChartPoint,
    x: &[f64],
    plan: &crate::focal_cut::DistancePlan,
) -> Result<f64> {
    NormalFan::build(metric, spec, plan)?.distance_sq_differential(q, x)
}

/// Inverse normal exponential with a fresh fan.
pub fn inverse_normal_exp(
    metric: &MetricField,
    spec: &crate::submanifold::SubmanifoldSpec,
    q: &ChartPoint,
    plan: &crate::focal_cut::DistancePlan,
) -> Result<InverseExpResult> {
    NormalFan::build(metric, spec, plan)?.inverse_normal_exp(q)
}

#[cfg(test)]
mod tests;
