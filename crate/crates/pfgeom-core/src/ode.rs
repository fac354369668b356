//! Embedded Dormand-Prince 5(4) integrator with adaptive step size, a
//! lower step-size limit and a per-step hook for predictor-corrector use.

use nalgebra::DVector;

use crate::error::{Error, Result};
#[allow(unused_imports)]
use crate::float::FloatExt;

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Lower limit on |h| as a fraction of the total integration span.
    pub min_step_frac: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self { rtol: 1e-8, atol: 1e-10, min_step_frac: 1e-4, max_steps: 100_000 }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    /// Steps taken at the enforced lower step-size limit.
    pub limited: usize,
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] =
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrates `y' = f(t, y)` from `t0` to `t_end` (either direction).
///
/// After every accepted step `post_step(t, y, at_limit)` may replace the
/// state (the corrector); when the lower step-size limit binds the flag is
/// set and the corrector is mandatory.
pub fn integrate<F, P>(
    mut f: F,
    t0: f64,
    t_end: f64,
    y0: DVector<f64>,
    opts: &OdeOptions,
    mut post_step: P,
) -> Result<(DVector<f64>, OdeStats)>
where
    F: FnMut(f64, &DVector<f64>) -> Result<DVector<f64>>,
    P: FnMut(f64, DVector<f64>, bool) -> Result<DVector<f64>>,
{
    let span = t_end - t0;
    if span == 0.0 {
        return Ok((y0, OdeStats::default()));
    }
    let dir = span.signum();
    let h_min = opts.min_step_frac * span.abs();
    let mut h = (0.1 * span.abs()).max(h_min) * dir;
    let mut t = t0;
    let mut y = y0;
    let mut stats = OdeStats::default();
    let mut k: [Option<DVector<f64>>; 7] = Default::default();

    while (t_end - t) * dir > 0.0 {
        if stats.accepted + stats.rejected > opts.max_steps {
            return Err(Error::NoConvergence {
                iterations: opts.max_steps,
                residual: (t_end - t).abs(),
            });
        }
        if (t + h - t_end) * dir > 0.0 {
            h = t_end - t;
        }
        let at_limit = h.abs() <= h_min * (1.0 + 1e-12);
        for stage in 0..7 {
            let mut arg = y.clone();
            for (j, kj) in k.iter().take(stage).enumerate() {
                arg.axpy(h * A[stage][j], kj.as_ref().unwrap(), 1.0);
            }
            k[stage] = Some(f(t + C[stage] * h, &arg)?);
        }
        let mut y5 = y.clone();
        let mut err = DVector::zeros(y.len());
        for (stage, kj) in k.iter().enumerate() {
            let kj = kj.as_ref().unwrap();
            y5.axpy(h * B5[stage], kj, 1.0);
            err.axpy(h * (B5[stage] - B4[stage]), kj, 1.0);
        }
        let mut err_norm = 0.0f64;
        for i in 0..y.len() {
            let sc = opts.atol + opts.rtol * y[i].abs().max(y5[i].abs());
            err_norm += (err[i] / sc) * (err[i] / sc);
        }
        err_norm = (err_norm / y.len() as f64).sqrt();

        if err_norm <= 1.0 || at_limit {
            t += h;
            y = post_step(t, y5, at_limit && err_norm > 1.0)?;
            stats.accepted += 1;
            if at_limit {
                stats.limited += 1;
            }
        } else {
            stats.rejected += 1;
        }
        let factor = if err_norm > 0.0 {
            (0.9 * err_norm.powf(-0.2)).clamp(0.2, 5.0)
        } else {
            5.0
        };
        h *= factor;
        if h.abs() < h_min {
            h = h_min * dir;
        }
    }
    Ok((y, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let opts = OdeOptions::default();
        let (y, stats) = integrate(
            |_t, y| Ok(-y.clone()),
            0.0,
            1.0,
            DVector::from_row_slice(&[1.0]),
            &opts,
            |_t, y, _| Ok(y),
        )
        .unwrap();
        assert!((y[0] - (-1.0f64).exp()).abs() < 1e-8, "{}", y[0]);
        assert!(stats.accepted > 0);
    }

    #[test]
    fn backwards_integration() {
        let opts = OdeOptions::default();
        // y' = 1, from t=2 down to t=0: y(0) = y(2) - 2.
        let (y, _) = integrate(
            |_t, _y| Ok(DVector::from_row_slice(&[1.0])),
            2.0,
            0.0,
            DVector::from_row_slice(&[5.0]),
            &opts,
            |_t, y, _| Ok(y),
        )
        .unwrap();
        assert!((y[0] - 3.0).abs() < 1e-10);
    }

    #[test]
    fn fifth_order_accuracy_on_polynomial() {
        // y' = 5 t^4 integrates exactly for a 5th-order method.
        let opts = OdeOptions { rtol: 1e-6, atol: 1e-9, ..Default::default() };
        let (y, _) = integrate(
            |t, _y| Ok(DVector::from_row_slice(&[5.0 * t * t * t * t])),
            0.0,
            1.0,
            DVector::from_row_slice(&[0.0]),
            &opts,
            |_t, y, _| Ok(y),
        )
        .unwrap();
        assert!((y[0] - 1.0).abs() < 1e-12);
    }
}
