//! Detection of the first parameter where a Jacobi matrix degenerates.

use nalgebra::DMatrix;

use super::flow::{integrate_with_frame, LinearizedFrame};
use super::integrator::OdeTolerances;
use crate::atlas::ChartPoint;
use crate::error::Result;
use crate::linalg::singular_values;
use crate::metric::{MetricField, TangentVec};

/// Relative singular-value threshold for degeneracy.
pub const DEGENERACY_RATIO: f64 = 1e-7;
/// Bisection tolerance for the degeneracy time.
pub const DEGENERACY_TOL: f64 = 1e-8;

/// Oriented determinant and `σ_min/σ_max` of a square matrix.
pub(crate) fn det_and_ratio(m: &DMatrix<f64>, orientation: f64) -> (f64, f64) {
    let s = singular_values(m);
    let ratio = match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if hi > 0.0 => lo / hi,
        _ => 0.0,
    };
    (orientation * m.determinant(), ratio)
}

fn golden_min(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    let t = 0.5 * (a + b);
    (t, f(t))
}

/// First `t ∈ [t_min, t_max]` where `eval(t) = (det, ratio)` shows a
/// degeneracy: a determinant sign change (refined by bisection) or an
/// interior local minimum of the singular-value ratio below the threshold
/// (refined by golden-section search). Samples are `subdiv` points per knot
/// interval.
pub(crate) fn first_degeneracy(
    knots: &[f64],
    t_min: f64,
    t_max: f64,
    subdiv: usize,
    eval: &dyn Fn(f64) -> (f64, f64),
) -> Option<f64> {
    let mut ts: Vec<f64> = vec![t_min];
    for w in knots.windows(2) {
        for k in 1..=subdiv {
            let t = w[0] + (w[1] - w[0]) * k as f64 / subdiv as f64;
            if t > t_min && t <= t_max {
                ts.push(t);
            }
        }
    }
    if *ts.last()? < t_max {
        ts.push(t_max);
    }
    let vals: Vec<(f64, f64)> = ts.iter().map(|&t| eval(t)).collect();
    if vals[0].1 < DEGENERACY_RATIO {
        return Some(ts[0]);
    }
    for i in 1..ts.len() {
        let (d0, _) = vals[i - 1];
        let (d1, r1) = vals[i];
        if d0 != 0.0 && d1 != 0.0 && d0.signum() != d1.signum() {
            let (mut a, mut b) = (ts[i - 1], ts[i]);
            let sa = d0.signum();
            while b - a > DEGENERACY_TOL {
                let m = 0.5 * (a + b);
                let dm = eval(m).0;
                if dm.signum() == sa && dm != 0.0 {
                    a = m;
                } else {
                    b = m;
                }
            }
            return Some(0.5 * (a + b));
        }
        if r1 < DEGENERACY_RATIO {
            return Some(ts[i]);
        }
        if i + 1 < ts.len() {
            let (d2, r2) = vals[i + 1];
            let r0 = vals[i - 1].1;
            let sign_change_next = d1 != 0.0 && d2 != 0.0 && d1.signum() != d2.signum();
            if !sign_change_next && r1 <= r0 && r1 <= r2 && r1 < 1e-2 {
                let f = |t: f64| eval(t).1;
                let (tm, rm) = golden_min(&f, ts[i - 1], ts[i + 1], DEGENERACY_TOL * 0.1);
                if rm < DEGENERACY_RATIO {
                    return Some(tm);
                }
            }
        }
    }
    None
}

/// Degeneracy time of the Jacobi columns of `frame` augmented by
/// `extra(t)` columns (e.g. the velocity), after `t_min`.
pub(crate) fn frame_degeneracy(
    frame: &LinearizedFrame,
    t_min: f64,
    t_max: f64,
    with_velocity: bool,
) -> Option<f64> {
    let eval = |t: f64| {
        let (_, j, _, orient) = frame.jacobi(t);
        let m = if with_velocity {
            let s = frame.state(t);
            let mut cols: Vec<_> = j.column_iter().map(|c| c.into_owned()).collect();
            cols.push(s.v.clone());
            DMatrix::from_columns(&cols)
        } else {
            j
        };
        det_and_ratio(&m, orient)
    };
    first_degeneracy(&frame.knots(), t_min, t_max, 4, &eval)
}

/// First conjugate time along the unit-speed geodesic from `p` with initial
/// velocity `v`, or `+∞` if none occurs in `(0, t_max]`.
pub fn conjugate_time(metric: &MetricField, p: &ChartPoint, v: &[f64], t_max: f64, tol: OdeTolerances) -> Result<f64> {
    let n = metric.dim();
    let start = TangentVec { chart: p.chart, x: p.x.clone(), v: nalgebra::DVector::from_column_slice(v) };
    let frame = integrate_with_frame(metric, &start, &DMatrix::zeros(n, n), &DMatrix::identity(n, n), t_max, tol)?;
    let t_min = (1e-4f64).min(0.01 * t_max);
    Ok(frame_degeneracy(&frame, t_min, t_max, false).unwrap_or(f64::INFINITY))
}
