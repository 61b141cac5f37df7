//! Adaptive Dormand–Prince 5(4) for autonomous systems `y' = f(y)`, so the
//! stage times are never needed.

use nalgebra::DVector;

use crate::error::{Error, Result};

const A: [&[f64]; 6] = [
    &[1.0 / 5.0],
    &[3.0 / 40.0, 9.0 / 40.0],
    &[44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0],
    &[19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0],
    &[9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0],
    &[35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
/// Fifth-order weights minus embedded fourth-order weights.
const E: [f64; 7] = [
    35.0 / 384.0 - 5179.0 / 57600.0,
    0.0,
    500.0 / 1113.0 - 7571.0 / 16695.0,
    125.0 / 192.0 - 393.0 / 640.0,
    -2187.0 / 6784.0 + 92097.0 / 339200.0,
    11.0 / 84.0 - 187.0 / 2100.0,
    -1.0 / 40.0,
];

const MAX_STEPS: usize = 100_000;

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self { rtol: 1e-12, atol: 1e-14 }
    }
}

/// Integrates from 0 to `span` and returns `y(span)`.
pub fn integrate(
    f: impl Fn(&DVector<f64>) -> DVector<f64>,
    y0: DVector<f64>,
    span: f64,
    tol: Tolerance,
) -> Result<DVector<f64>> {
    if !(span >= 0.0 && span.is_finite()) {
        return Err(Error::InvalidArgument(format!("integration span must be finite and nonnegative, got {span}")));
    }
    let mut y = y0;
    if span == 0.0 {
        return Ok(y);
    }
    let mut t = 0.0;
    let mut h = span / 64.0;
    let mut k1 = f(&y);
    for _ in 0..MAX_STEPS {
        if t >= span {
            return Ok(y);
        }
        let last = t + h >= span;
        if last {
            h = span - t;
        }
        let mut ks = vec![k1.clone()];
        for row in A.iter() {
            let mut stage = y.clone();
            for (a, k) in row.iter().zip(&ks) {
                if *a != 0.0 {
                    stage.axpy(h * a, k, 1.0);
                }
            }
            ks.push(f(&stage));
        }
        // The seventh stage was evaluated at the fifth-order solution.
        let mut y_new = y.clone();
        for (a, k) in A[5].iter().zip(&ks) {
            if *a != 0.0 {
                y_new.axpy(h * a, k, 1.0);
            }
        }
        let mut err = DVector::zeros(y.len());
        for (e, k) in E.iter().zip(&ks) {
            if *e != 0.0 {
                err.axpy(h * e, k, 1.0);
            }
        }
        let norm = (err
            .iter()
            .zip(y.iter().zip(y_new.iter()))
            .map(|(e, (a, b))| {
                let sc = tol.atol + tol.rtol * a.abs().max(b.abs());
                (e / sc).powi(2)
            })
            .sum::<f64>()
            / y.len().max(1) as f64)
            .sqrt();
        if !norm.is_finite() {
            return Err(Error::NonFiniteMatrix);
        }
        if norm <= 1.0 {
            t = if last { span } else { t + h };
            y = y_new;
            k1 = ks.pop().expect("seven stages");
        }
        let factor = if norm == 0.0 { 5.0 } else { (0.9 * norm.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
    }
    Err(Error::InvalidArgument("step limit reached before the end of the span".into()))
}
