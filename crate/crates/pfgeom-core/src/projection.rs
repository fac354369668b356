//! Orthogonal projection onto the solution space boundary: the
//! isolevel-ODE method with a projected-gradient corrector, tracing of
//! moving-point projections along curves, and the locally-closest-point
//! validity test.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::curvature::{weingarten_voltage, WeingartenMap};
use crate::error::{Error, Result};
use crate::linalg::solve_square;
use crate::ode::{self, OdeOptions, OdeStats};
use crate::quadmap::QuadraticMap;
use crate::spectrum::{spectral_kernel, SsbSpectrum};
use crate::ssb::{EigenCalculus, SsbPoint, SSB_MEMBERSHIP_TOL};

/// Required collinearity of `v - q` with the normal at convergence.
pub const ORTHOGONALITY_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy)]
pub struct ProjectionOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Lower step-size limit as a fraction of the initial isolevel `|s|`.
    pub min_step_frac: f64,
    pub keep_trace: bool,
    /// Compute the Weingarten map for the locally-closest test (costs a
    /// full curvature assembly).
    pub check_validity: bool,
}

impl Default for ProjectionOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
            min_step_frac: 1e-4,
            keep_trace: false,
            check_validity: true,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ProjectionStats {
    pub ode: OdeStats,
    /// Accepted steps on which the corrector had nothing to do.
    pub corrector_idle: usize,
}

/// Result of projecting `v`: the foot point, the signed distance along
/// the normal (`v - q = d n_v` up to tolerance), the validity flag and an
/// optional `(t, r(t))` trace of the isolevel descent.
#[derive(Debug, Clone)]
pub struct ProjectionResult {
    pub q: SsbPoint,
    pub d: f64,
    pub locally_closest: bool,
    pub trace: Option<Vec<(f64, DVector<f64>)>>,
    pub stats: ProjectionStats,
}

/// The smallest-magnitude eigenvalue of `DF(v)`.
pub fn lambda_value(map: &QuadraticMap, v: &DVector<f64>) -> Result<f64> {
    Ok(spectral_kernel(map, v)?.lambda0)
}

/// Eigenvalue gradient without the bordered solves: with simple `lambda0`,
/// `grad_i = ktilde^T (dDF/dv_i) k / (ktilde^T k) = 2 (S k)_i / (ktilde^T k)`.
fn gradient_of(map: &QuadraticMap, sp: &SsbSpectrum) -> DVector<f64> {
    let s = map.contract_components(&sp.ktilde);
    (s * &sp.k) * (2.0 / sp.ktilde.dot(&sp.k))
}

/// Newton steps along the eigenvalue gradient down to `lambda0 = 0`.
fn polish_to_boundary(map: &QuadraticMap, mut r: DVector<f64>) -> Result<DVector<f64>> {
    for _ in 0..50 {
        let sp = spectral_kernel(map, &r)?;
        let scale = map.jacobian(&r)?.norm().max(1.0);
        if sp.lambda0.abs() <= 1e-13 * scale {
            break;
        }
        let grad = gradient_of(map, &sp);
        let gn2 = grad.norm_squared();
        if gn2 < 1e-28 {
            return Err(Error::VanishingGradient);
        }
        r.axpy(-sp.lambda0 / gn2, &grad, 1.0);
    }
    Ok(r)
}

/// Projected-gradient-descent corrector: alternates a tangential descent
/// step on `|r - v|^2 / 2` with a Newton step restoring `lambda(r) = t`.
/// Returns the corrected point and the number of iterations performed.
fn correct_on_isolevel(
    map: &QuadraticMap,
    v: &DVector<f64>,
    t: f64,
    mut r: DVector<f64>,
) -> Result<(DVector<f64>, usize)> {
    let tol = 1e-12 * (1.0 + v.norm());
    for it in 0..100 {
        let sp = spectral_kernel(map, &r)?;
        let grad = gradient_of(map, &sp);
        let gn = grad.norm();
        if gn < 1e-14 {
            return Err(Error::VanishingGradient);
        }
        let nhat = &grad / gn;
        let e = &r - v;
        let e_t = &e - &nhat * e.dot(&nhat);
        let lam_err = sp.lambda0 - t;
        if e_t.norm() + lam_err.abs() / gn <= tol {
            return Ok((r, it));
        }
        // Tangential descent with backtracking (full step is exact on
        // flat isolevels).
        let dist0 = e.norm_squared();
        let mut gamma = 1.0;
        for _ in 0..20 {
            let cand = &r - &e_t * gamma;
            if (&cand - v).norm_squared() <= dist0 {
                r = cand;
                break;
            }
            gamma *= 0.5;
        }
        // Restore the isolevel.
        let sp2 = spectral_kernel(map, &r)?;
        let grad2 = gradient_of(map, &sp2);
        let gn2 = grad2.norm_squared();
        if gn2 < 1e-28 {
            return Err(Error::VanishingGradient);
        }
        r.axpy(-(sp2.lambda0 - t) / gn2, &grad2, 1.0);
    }
    Ok((r, 100))
}

fn assemble_result(
    map: &QuadraticMap,
    point: SsbPoint,
    v: &DVector<f64>,
    check_validity: bool,
    trace: Option<Vec<(f64, DVector<f64>)>>,
    stats: ProjectionStats,
) -> Result<ProjectionResult> {
    let diff = v - &point.q;
    let d = diff.dot(&point.n_v);
    // The foot is located to about 1e-12 (1 + |v|) absolute, so the angle
    // of `v - q` is only resolvable to that error over |v - q|; enforce
    // the orthogonality bound where it is measurable and accept closer
    // points, whose angle would be dominated by rounding noise.
    let resolvable = 25.0 * 1e-12 * (1.0 + v.norm()) / ORTHOGONALITY_TOL;
    if diff.norm() > resolvable {
        let angle_resid = (&diff - &point.n_v * d).norm() / diff.norm();
        if angle_resid > ORTHOGONALITY_TOL {
            return Err(Error::NoConvergence { iterations: 0, residual: angle_resid });
        }
    }
    let locally_closest = if check_validity {
        let (_, w) = weingarten_voltage(map, &point)?;
        local_closest_check(&point, d, &w)
    } else {
        true
    };
    Ok(ProjectionResult { q: point, d, locally_closest, trace, stats })
}

/// Orthogonal projection of `v` onto the boundary with default options.
pub fn project_point(map: &QuadraticMap, v: &DVector<f64>) -> Result<ProjectionResult> {
    project_point_with(map, v, &ProjectionOptions::default())
}

/// Integrates the isolevel ODE
///
/// ```text
/// [ d Hl(r) + I   grad l ] [rdot]   [0]
/// [ grad l^T      0      ] [ddot] = [1]
/// ```
///
/// for `(r(t), d(t))` with `v - r = d grad l(r)` from `t = lambda(v)` down
/// to `0`, correcting after every accepted step by projected gradient
/// descent on the isolevel.
pub fn project_point_with(
    map: &QuadraticMap,
    v: &DVector<f64>,
    opts: &ProjectionOptions,
) -> Result<ProjectionResult> {
    let n = map.dim();
    let sp0 = spectral_kernel(map, v)?;
    let scale = map.jacobian(v)?.norm().max(1.0);
    let s = sp0.lambda0;
    if s.abs() <= SSB_MEMBERSHIP_TOL * scale {
        let point = SsbPoint::from_spectrum(map, v.clone(), sp0)?;
        let trace = opts.keep_trace.then(Vec::new);
        return assemble_result(map, point, v, opts.check_validity, trace, ProjectionStats::default());
    }

    let mut y0 = DVector::zeros(n + 1);
    y0.rows_mut(0, n).copy_from(v);
    let mut trace: Option<Vec<(f64, DVector<f64>)>> =
        opts.keep_trace.then(|| alloc::vec![(s, v.clone())]);
    let mut idle = 0usize;

    let ode_opts = OdeOptions {
        rtol: opts.rtol,
        atol: opts.atol,
        min_step_frac: opts.min_step_frac,
        max_steps: 100_000,
    };
    let rhs = |_t: f64, y: &DVector<f64>| -> Result<DVector<f64>> {
        let r = DVector::from(y.rows(0, n).clone_owned());
        let dm = y[n];
        let sp = spectral_kernel(map, &r)?;
        let calc = EigenCalculus::new(map, &r, sp)?;
        let grad = calc.grad_lambda();
        let hess = calc.lambda_hessian()?;
        let mut m = hess * dm;
        for i in 0..n {
            m[(i, i)] += 1.0;
        }
        let mut sys = DMatrix::zeros(n + 1, n + 1);
        sys.view_mut((0, 0), (n, n)).copy_from(&m);
        for i in 0..n {
            sys[(i, n)] = grad[i];
            sys[(n, i)] = grad[i];
        }
        let mut b = DVector::zeros(n + 1);
        b[n] = 1.0;
        let (sol, cond) = solve_square(sys, &b, 1e12)?;
        if cond > 1e14 {
            // The matrix degenerates when a focal surface of the isolevel
            // approaches r.
            return Err(Error::SingularSystem { condition: cond });
        }
        Ok(sol)
    };
    let post = |t: f64, mut y: DVector<f64>, _mandatory: bool| -> Result<DVector<f64>> {
        let r = DVector::from(y.rows(0, n).clone_owned());
        let (r, iters) = correct_on_isolevel(map, v, t, r)?;
        if iters == 0 {
            idle += 1;
        }
        let sp = spectral_kernel(map, &r)?;
        let grad = gradient_of(map, &sp);
        y.rows_mut(0, n).copy_from(&r);
        y[n] = grad.dot(&(v - &r)) / grad.norm_squared();
        if let Some(tr) = trace.as_mut() {
            tr.push((t, r));
        }
        Ok(y)
    };
    let (y_end, ode_stats) = ode::integrate(rhs, s, 0.0, y0, &ode_opts, post)?;

    let r = polish_to_boundary(map, DVector::from(y_end.rows(0, n).clone_owned()))?;
    let point = SsbPoint::at(map, r)?;
    let stats = ProjectionStats { ode: ode_stats, corrector_idle: idle };
    assemble_result(map, point, v, opts.check_validity, trace, stats)
}

/// Necessary condition for `q` to be the locally closest boundary point at
/// signed distance `d`: no principal curvature oriented toward `v` exceeds
/// the reciprocal distance, i.e. `d * kappa < 1` for all eigenvalues of
/// the Weingarten map.
pub fn local_closest_check(_q: &SsbPoint, d: f64, w: &WeingartenMap) -> bool {
    let sym = (&w.w + w.w.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    eig.eigenvalues.iter().all(|&kappa| d * kappa < 1.0)
}

/// Traces the projection of a moving point with default re-anchoring.
pub fn trace_curve_projection(
    map: &QuadraticMap,
    v_curve: &[(f64, DVector<f64>)],
    q0: &SsbPoint,
) -> Result<Vec<ProjectionResult>> {
    trace_curve_projection_with(map, v_curve, q0, 25)
}

/// Advances the foot point along with the moving point: per step solves
///
/// ```text
/// (d Dn_v + I) qdot = vdot - (vdot . n) n,    ddot = vdot . n,
/// ```
///
/// reprojects onto the boundary, and re-anchors with a full
/// [`project_point`] every `reanchor_every` steps.
pub fn trace_curve_projection_with(
    map: &QuadraticMap,
    v_curve: &[(f64, DVector<f64>)],
    q0: &SsbPoint,
    reanchor_every: usize,
) -> Result<Vec<ProjectionResult>> {
    let n = map.dim();
    let mut out = Vec::with_capacity(v_curve.len());
    if v_curve.is_empty() {
        return Ok(out);
    }
    let mut point = q0.clone();
    let mut normal = q0.n_v.clone();
    let mut d = (&v_curve[0].1 - &point.q).dot(&normal);
    out.push(step_result(map, &point, &v_curve[0].1)?);

    for (j, win) in v_curve.windows(2).enumerate() {
        let (t0, v0) = &win[0];
        let (t1, v1) = &win[1];
        let dt = t1 - t0;
        let vdot = (v1 - v0) / dt;

        let calc = EigenCalculus::new(map, &point.q, point.spectrum.clone())?;
        let grad = calc.grad_lambda();
        let hess = calc.lambda_hessian()?;
        let sigma = if normal.dot(grad) >= 0.0 { 1.0 } else { -1.0 };
        let proj = DMatrix::identity(n, n) - &normal * normal.transpose();
        let dn = proj * hess * (sigma / grad.norm());

        let ddot = vdot.dot(&normal);
        let mut a = dn * d;
        for i in 0..n {
            a[(i, i)] += 1.0;
        }
        let rhs = &vdot - &normal * ddot;
        let (qdot, cond) = solve_square(a, &rhs, 1e12)?;
        if cond > 1e14 {
            return Err(Error::SingularSystem { condition: cond });
        }

        let seed = &point.q + &qdot * dt;
        let r = polish_to_boundary(map, seed)?;
        let mut next = SsbPoint::at(map, r)?;
        let mut n_new = next.n_v.clone();
        if n_new.dot(&normal) < 0.0 {
            n_new = -n_new;
        }
        d += dt * ddot;

        if reanchor_every > 0 && (j + 1) % reanchor_every == 0 {
            let anchored = project_point_with(
                map,
                v1,
                &ProjectionOptions { check_validity: false, ..Default::default() },
            )?;
            next = anchored.q;
            n_new = next.n_v.clone();
            if n_new.dot(&normal) < 0.0 {
                n_new = -n_new;
            }
            d = (v1 - &next.q).dot(&n_new);
        }

        out.push(step_result(map, &next, v1)?);
        point = next;
        normal = n_new;
    }
    Ok(out)
}

fn step_result(
    map: &QuadraticMap,
    point: &SsbPoint,
    v: &DVector<f64>,
) -> Result<ProjectionResult> {
    let d = (v - &point.q).dot(&point.n_v);
    let (_, w) = weingarten_voltage(map, point)?;
    Ok(ProjectionResult {
        q: point.clone(),
        d,
        locally_closest: local_closest_check(point, d, &w),
        trace: None,
        stats: ProjectionStats::default(),
    })
}
