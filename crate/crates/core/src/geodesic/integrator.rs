//! Dormand–Prince 5(4) with PI step control and quartic dense output,
//! extended with chart switching between accepted steps.

use crate::error::{Error, Result};

/// Relative and absolute error tolerances.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OdeTolerances {
    pub rel: f64,
    pub abs: f64,
}

impl Default for OdeTolerances {
    fn default() -> Self {
        OdeTolerances { rel: 1e-9, abs: 1e-11 }
    }
}

/// A first-order system living on a chart atlas.
pub(crate) trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&self, chart: usize, y: &[f64], dy: &mut [f64]) -> Result<()>;
    /// Whether the state may be evaluated in `chart`.
    fn admissible(&self, chart: usize, y: &[f64]) -> bool;
    /// After an accepted step: moves the state to a better chart if needed.
    /// Returns the new chart and the sign of the transition Jacobian.
    fn switch_chart(&self, chart: usize, y: &mut Vec<f64>) -> Option<(usize, f64)>;
    /// Diagnostic position for error messages.
    fn position(&self, y: &[f64]) -> Vec<f64>;
}

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// One accepted step with its continuous extension.
#[derive(Clone, Debug)]
pub(crate) struct DenseStep {
    pub t0: f64,
    pub h: f64,
    /// Five coefficient blocks of length `dim`.
    pub coef: Vec<f64>,
}

impl DenseStep {
    fn eval(&self, dim: usize, t: f64, out: &mut [f64]) {
        let th = if self.h == 0.0 { 0.0 } else { (t - self.t0) / self.h };
        let th1 = 1.0 - th;
        let c = &self.coef;
        for i in 0..dim {
            out[i] = c[i]
                + th * (c[dim + i] + th1 * (c[2 * dim + i] + th * (c[3 * dim + i] + th1 * c[4 * dim + i])));
        }
    }

    fn eval_derivative(&self, dim: usize, t: f64, out: &mut [f64]) {
        let th = (t - self.t0) / self.h;
        let c = &self.coef;
        for i in 0..dim {
            let (r2, r3, r4, r5) = (c[dim + i], c[2 * dim + i], c[3 * dim + i], c[4 * dim + i]);
            // y = r1 + θ r2 + (θ−θ²) r3 + (θ²−θ³) r4 + (θ²−2θ³+θ⁴) r5
            let d = r2
                + (1.0 - 2.0 * th) * r3
                + (2.0 * th - 3.0 * th * th) * r4
                + (2.0 * th - 6.0 * th * th + 4.0 * th * th * th) * r5;
            out[i] = d / self.h;
        }
    }
}

/// Piece of the solution expressed in one chart.
#[derive(Clone, Debug)]
pub(crate) struct ChartSegment {
    pub chart: usize,
    /// Product of transition Jacobian signs accumulated from the start chart.
    pub orientation: f64,
    pub steps: Vec<DenseStep>,
}

/// Dense solution of an [`OdeSystem`].
#[derive(Clone, Debug)]
pub(crate) struct Trajectory {
    pub dim: usize,
    pub t_end: f64,
    pub segments: Vec<ChartSegment>,
    pub y_start: Vec<f64>,
    pub chart_start: usize,
    pub y_end: Vec<f64>,
    pub chart_end: usize,
    pub orientation_end: f64,
}

impl Trajectory {
    fn locate(&self, t: f64) -> Option<(&ChartSegment, &DenseStep)> {
        // steps are ordered; find the last step starting at or before t
        let mut found = None;
        for seg in &self.segments {
            if seg.steps.is_empty() {
                continue;
            }
            if seg.steps[0].t0 <= t {
                found = Some(seg);
            } else {
                break;
            }
        }
        let seg = found.or_else(|| self.segments.iter().find(|s| !s.steps.is_empty()))?;
        let idx = seg.steps.partition_point(|s| s.t0 <= t).saturating_sub(1);
        Some((seg, &seg.steps[idx]))
    }

    /// State at time `t` with its chart and orientation sign.
    pub fn eval(&self, t: f64) -> (usize, Vec<f64>, f64) {
        if t <= 0.0 {
            return (self.chart_start, self.y_start.clone(), 1.0);
        }
        if t >= self.t_end {
            return (self.chart_end, self.y_end.clone(), self.orientation_end);
        }
        match self.locate(t) {
            Some((seg, step)) => {
                let mut out = vec![0.0; self.dim];
                step.eval(self.dim, t, &mut out);
                (seg.chart, out, seg.orientation)
            }
            None => (self.chart_start, self.y_start.clone(), 1.0),
        }
    }

    pub fn eval_derivative(&self, t: f64) -> (usize, Vec<f64>) {
        let t = t.clamp(0.0, self.t_end);
        match self.locate(t) {
            Some((seg, step)) => {
                let mut out = vec![0.0; self.dim];
                step.eval_derivative(self.dim, t, &mut out);
                (seg.chart, out)
            }
            None => (self.chart_start, vec![0.0; self.dim]),
        }
    }

    /// Start times of all steps plus the final time.
    pub fn knots(&self) -> Vec<f64> {
        let mut k: Vec<f64> = self.segments.iter().flat_map(|s| s.steps.iter().map(|st| st.t0)).collect();
        k.push(self.t_end);
        k
    }
}

fn err_norm(y0: &[f64], y1: &[f64], e: &[f64], tol: OdeTolerances) -> f64 {
    let n = y0.len() as f64;
    let s: f64 = y0
        .iter()
        .zip(y1)
        .zip(e)
        .map(|((a, b), ei)| {
            let sc = tol.abs + tol.rel * a.abs().max(b.abs());
            (ei / sc).powi(2)
        })
        .sum();
    (s / n).sqrt()
}

/// Integrates `sys` from `y0` in `chart` over `[0, t_end]`.
pub(crate) fn integrate<S: OdeSystem>(
    sys: &S,
    chart: usize,
    y0: &[f64],
    t_end: f64,
    tol: OdeTolerances,
) -> Result<Trajectory> {
    let dim = sys.dim();
    let start_chart = chart;
    let mut chart = chart;
    let mut orientation = 1.0;
    let mut y = y0.to_vec();
    let mut segments = vec![ChartSegment { chart, orientation, steps: Vec::new() }];
    let fail = |t: f64, y: &[f64]| Error::IntegrationFailure { t, x: sys.position(y) };

    let mut k1 = vec![0.0; dim];
    sys.rhs(chart, &y, &mut k1)?;
    if t_end <= 0.0 {
        return Ok(Trajectory {
            dim,
            t_end: 0.0,
            segments,
            y_start: y0.to_vec(),
            chart_start: chart,
            y_end: y.clone(),
            chart_end: chart,
            orientation_end: 1.0,
        });
    }

    // initial step from the local scale of the solution
    let d0 = err_norm(&y, &y, &y, tol);
    let d1 = err_norm(&y, &y, &k1, tol);
    let mut h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h = h.min(t_end).min(0.1 * t_end.max(1e-3)).max(1e-10);

    let mut t = 0.0;
    let mut facold: f64 = 1e-4;
    let (mut k2, mut k3, mut k4, mut k5, mut k6, mut k7) =
        (vec![0.0; dim], vec![0.0; dim], vec![0.0; dim], vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]);
    let mut ytmp = vec![0.0; dim];
    let mut y1 = vec![0.0; dim];
    let mut rejected_last = false;
    let beta = 0.04;
    let expo1 = 0.2 - beta * 0.75;
    let mut nsteps = 0usize;
    let hmin = 1e-12 * t_end.max(1.0);

    while t < t_end {
        nsteps += 1;
        if nsteps > 2_000_000 {
            return Err(fail(t, &y));
        }
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }
        if h < hmin {
            return Err(fail(t, &y));
        }
        // stages; an inadmissible stage point counts as a rejection
        let mut stage_ok = true;
        macro_rules! stage {
            ($k:ident, $($a:expr, $kk:ident),*) => {
                if stage_ok {
                    for i in 0..dim {
                        ytmp[i] = y[i] + h * (0.0 $(+ $a * $kk[i])*);
                    }
                    if sys.admissible(chart, &ytmp) {
                        if sys.rhs(chart, &ytmp, &mut $k).is_err() {
                            stage_ok = false;
                        }
                    } else {
                        stage_ok = false;
                    }
                }
            };
        }
        stage!(k2, A21, k1);
        stage!(k3, A31, k1, A32, k2);
        stage!(k4, A41, k1, A42, k2, A43, k3);
        stage!(k5, A51, k1, A52, k2, A53, k3, A54, k4);
        stage!(k6, A61, k1, A62, k2, A63, k3, A64, k4, A65, k5);
        if stage_ok {
            for i in 0..dim {
                y1[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
            }
            if sys.admissible(chart, &y1) {
                if sys.rhs(chart, &y1, &mut k7).is_err() {
                    stage_ok = false;
                }
            } else {
                stage_ok = false;
            }
        }
        if !stage_ok {
            h *= 0.25;
            rejected_last = true;
            if h < hmin {
                return Err(Error::DomainExit { t, x: sys.position(&y) });
            }
            continue;
        }
        let e: Vec<f64> = (0..dim)
            .map(|i| h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]))
            .collect();
        let err = err_norm(&y, &y1, &e, tol);
        if !err.is_finite() {
            h *= 0.25;
            rejected_last = true;
            continue;
        }
        let fac11 = err.powf(expo1);
        let mut fac = fac11 / facold.powf(beta);
        fac = (fac / 0.9).clamp(1.0 / 10.0, 5.0);
        let hnew = h / fac;
        if err <= 1.0 {
            facold = err.max(1e-4);
            let mut coef = vec![0.0; 5 * dim];
            for i in 0..dim {
                let ydiff = y1[i] - y[i];
                let bspl = h * k1[i] - ydiff;
                coef[i] = y[i];
                coef[dim + i] = ydiff;
                coef[2 * dim + i] = bspl;
                coef[3 * dim + i] = ydiff - h * k7[i] - bspl;
                coef[4 * dim + i] =
                    h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
            }
            segments.last_mut().expect("segment list is never empty").steps.push(DenseStep { t0: t, h, coef });
            t = if last { t_end } else { t + h };
            std::mem::swap(&mut y, &mut y1);
            std::mem::swap(&mut k1, &mut k7);
            if let Some((c, sign)) = sys.switch_chart(chart, &mut y) {
                chart = c;
                orientation *= sign;
                segments.push(ChartSegment { chart, orientation, steps: Vec::new() });
                sys.rhs(chart, &y, &mut k1)?;
            }
            h = if rejected_last { hnew.min(h) } else { hnew };
            rejected_last = false;
        } else {
            h /= (fac11 / 0.9).min(10.0);
            rejected_last = true;
        }
    }
    segments.retain(|s| !s.steps.is_empty());
    if segments.is_empty() {
        segments.push(ChartSegment { chart, orientation, steps: Vec::new() });
    }
    Ok(Trajectory {
        dim,
        t_end,
        segments,
        y_start: y0.to_vec(),
        chart_start: start_chart,
        y_end: y,
        chart_end: chart,
        orientation_end: orientation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Harmonic;

    impl OdeSystem for Harmonic {
        fn dim(&self) -> usize {
            2
        }
        fn rhs(&self, _c: usize, y: &[f64], dy: &mut [f64]) -> Result<()> {
            dy[0] = y[1];
            dy[1] = -y[0];
            Ok(())
        }
        fn admissible(&self, _c: usize, _y: &[f64]) -> bool {
            true
        }
        fn switch_chart(&self, _c: usize, _y: &mut Vec<f64>) -> Option<(usize, f64)> {
            None
        }
        fn position(&self, y: &[f64]) -> Vec<f64> {
            y[..1].to_vec()
        }
    }

    #[test]
    fn harmonic_oscillator_endpoint_and_dense_output() {
        let tr = integrate(&Harmonic, 0, &[1.0, 0.0], 10.0, OdeTolerances::default()).unwrap();
        assert!((tr.y_end[0] - 10f64.cos()).abs() < 1e-8);
        for k in 0..50 {
            let t = 0.193 * k as f64;
            let (_, y, _) = tr.eval(t);
            assert!((y[0] - t.cos()).abs() < 1e-8, "t = {t}");
            let (_, dy) = tr.eval_derivative(t);
            assert!((dy[0] + t.sin()).abs() < 1e-6);
        }
    }
}
