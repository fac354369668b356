//! High-precision local inversion of the power flow map near the
//! solution space boundary.
//!
//! A voltage `v` close to the boundary is represented as a pair
//! `v = q + d w(q)` of a boundary point `q` and a signed distance `d`
//! along a direction field `w` (the kernel or the unit normal). The
//! representation is stepped along a prescribed power-space curve by
//! linear continuation systems, with a per-step corrector that projects
//! `q` back onto the boundary and re-derives `d` from the exact fold
//! expansion `p = F(q) + d (DF) w + (d^2/2) w^T (HF) w`.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
#[allow(unused_imports)]
use crate::float::FloatExt;
use crate::linalg::solve_square;
use crate::quadmap::QuadraticMap;
use crate::spectrum::{spectral_kernel, SpectralTracker, SsbSpectrum};
use crate::ssb::{EigenCalculus, SsbPoint};

/// Default tangency threshold: leave kernel mode when `|k . n_v|` drops
/// below this value.
pub const SWITCH_THRESHOLD: f64 = 0.1;

/// Per-step acceptance: `|F(q + d w) - p_target| <= tol * (1 + |p_target|)`.
pub const STEP_RESIDUAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitMode {
    Kernel,
    Normal,
}

/// The split representation `v = q + d w`.
///
/// `w` is a continuation copy of the kernel (or normal) whose sign is kept
/// continuous along the curve; it may differ by sign from the canonical
/// vectors stored in `q`.
#[derive(Debug, Clone)]
pub struct SplitState {
    pub q: SsbPoint,
    pub d: f64,
    pub mode: SplitMode,
    pub w: DVector<f64>,
}

impl SplitState {
    pub fn reconstruct(&self) -> DVector<f64> {
        &self.q.q + &self.w * self.d
    }
}

#[derive(Debug, Clone, Copy)]
pub struct StepReport {
    pub accepted: bool,
    pub residual: f64,
    pub mode_switched: bool,
    pub condition_estimate: f64,
}

/// Moves `q` back onto the boundary along `w` by 1-d Newton iteration on
/// `t -> lambda0(q + t w)`; returns the corrected point and its spectrum.
fn newton_to_ssb(
    map: &QuadraticMap,
    mut q: DVector<f64>,
    w: &DVector<f64>,
) -> Result<(DVector<f64>, SsbSpectrum)> {
    let mut last = None;
    for _ in 0..30 {
        let sp = spectral_kernel(map, &q)?;
        let scale = map.jacobian(&q)?.norm().max(1.0);
        if sp.lambda0.abs() <= 1e-13 * scale {
            return Ok((q, sp));
        }
        // d lambda / dt = ktilde^T (w^T HF) k / (ktilde^T k).
        let denom = sp.ktilde.dot(&map.hessian_apply(w, &sp.k)?) / sp.ktilde.dot(&sp.k);
        if denom.abs() < 1e-14 * scale {
            return Err(Error::VanishingGradient);
        }
        q.axpy(-sp.lambda0 / denom, w, 1.0);
        last = Some(sp.lambda0.abs() / scale);
    }
    let sp = spectral_kernel(map, &q)?;
    let scale = map.jacobian(&q)?.norm().max(1.0);
    if sp.lambda0.abs() <= crate::ssb::SSB_MEMBERSHIP_TOL * scale {
        Ok((q, sp))
    } else {
        Err(Error::NoConvergence { iterations: 30, residual: last.unwrap_or(f64::INFINITY) })
    }
}

/// Initializes a kernel-mode split for `v` by tracing on the boundary from
/// a projection seed until `v - q` is collinear with the kernel at `q`.
pub fn init_split_kernel(map: &QuadraticMap, v: &DVector<f64>) -> Result<SplitState> {
    let scale = map.jacobian(v)?.norm().max(1.0);
    let sp = spectral_kernel(map, v)?;
    if sp.lambda0.abs() <= crate::ssb::SSB_MEMBERSHIP_TOL * scale {
        let point = SsbPoint::from_spectrum(map, v.clone(), sp)?;
        let w = point.spectrum.k.clone();
        return Ok(SplitState { q: point, d: 0.0, mode: SplitMode::Kernel, w });
    }

    let seed = crate::projection::project_point(map, v)?;
    let mut q = seed.q.q;
    let mut gamma = 1.0;
    let mut prev_mis = f64::INFINITY;
    for iter in 0..500 {
        let sp = spectral_kernel(map, &q)?;
        let mut k = sp.k.clone();
        let diff = v - &q;
        if diff.dot(&k) < 0.0 {
            k = -k;
        }
        let d = diff.dot(&k);
        let resid = &diff - &k * d;
        let mis = resid.norm() / diff.norm().max(1e-300);
        if mis <= 1e-8 || diff.norm() <= 1e-14 * v.norm().max(1.0) {
            let point = SsbPoint::from_spectrum(map, q, sp)?;
            return Ok(SplitState { q: point, d, mode: SplitMode::Kernel, w: k });
        }
        if iter == 499 {
            return Err(Error::NoConvergence { iterations: 500, residual: mis });
        }
        if mis > prev_mis {
            gamma *= 0.5;
        }
        prev_mis = mis;
        let (q_new, _) = newton_to_ssb(map, &q + &resid * gamma, &k)?;
        q = q_new;
    }
    unreachable!()
}

/// Initializes a normal-mode split for `v` by orthogonal projection.
pub fn init_split_normal(map: &QuadraticMap, v: &DVector<f64>) -> Result<SplitState> {
    let proj = crate::projection::project_point(map, v)?;
    let w = proj.q.n_v.clone();
    let d = (v - &proj.q.q).dot(&w);
    Ok(SplitState { q: proj.q, d, mode: SplitMode::Normal, w })
}

/// Re-derives `d` from the fold expansion
/// `p_target = F(q) + (d^2/2) k^T (HF) k`, which is exact in kernel mode on
/// the boundary; the sign of the current `d` is preserved.
pub fn update_distance(
    map: &QuadraticMap,
    s: &SplitState,
    p_target: &DVector<f64>,
) -> Result<f64> {
    let hkk = map.hessian_apply(&s.w, &s.w)?;
    let hn = hkk.norm();
    if hn < 1e-12 * map.jacobian(&s.q.q)?.norm().max(1.0) {
        return Err(Error::DegenerateFold);
    }
    let dp = p_target - map.eval(&s.q.q)?;
    let mag = (2.0 * dp.norm() / hn).sqrt();
    Ok(if s.d < 0.0 { -mag } else { mag })
}

/// Projects `q` back onto the boundary along `w` and refreshes the
/// spectral data; `d` is kept and should be re-derived by
/// [`update_distance`] when a power target is available.
pub fn reproject(map: &QuadraticMap, s: &SplitState) -> Result<SplitState> {
    let (q, sp) = newton_to_ssb(map, s.q.q.clone(), &s.w)?;
    let point = SsbPoint::from_spectrum(map, q, sp)?;
    let mut w = match s.mode {
        SplitMode::Kernel => point.spectrum.k.clone(),
        SplitMode::Normal => point.n_v.clone(),
    };
    if w.dot(&s.w) < 0.0 {
        w = -w;
    }
    Ok(SplitState { q: point, d: s.d, mode: s.mode, w })
}

/// True when the kernel has become nearly tangential and the normal-mode
/// representation should take over.
pub fn should_switch(s: &SplitState, threshold: f64) -> bool {
    s.mode == SplitMode::Kernel && s.w.dot(&s.q.n_v).abs() < threshold
}

/// Shared corrector for the kernel-mode steppers: reproject, refresh the
/// spectral data with sign continuity, re-derive `d`, and measure the
/// residual against the step target.
fn finish_kernel_step(
    map: &QuadraticMap,
    q_pred: DVector<f64>,
    k_pred: DVector<f64>,
    d_pred: f64,
    p_target: &DVector<f64>,
    condition_estimate: f64,
) -> Result<(SplitState, StepReport)> {
    let (q_new, sp) = newton_to_ssb(map, q_pred, &k_pred)?;
    let point = SsbPoint::from_spectrum(map, q_new, sp)?;
    let mut w = point.spectrum.k.clone();
    if w.dot(&k_pred) < 0.0 {
        w = -w;
    }
    let mut state = SplitState { q: point, d: d_pred, mode: SplitMode::Kernel, w };
    state.d = update_distance(map, &state, p_target)?;
    let residual = (map.eval(&state.reconstruct())? - p_target).norm();
    let accepted = residual <= STEP_RESIDUAL_TOL * (1.0 + p_target.norm());
    Ok((state, StepReport { accepted, residual, mode_switched: false, condition_estimate }))
}

/// One kernel-mode continuation step with the simplified expansion (the
/// linear term `d (DF) k` dropped, as it vanishes identically on the
/// boundary): solves the square `(2n+1)` system in `(qdot, kdot, ddot)`
///
/// ```text
/// [ DF(q)     d^2 K    d h(k,k) ] [qdot]   [pdot]
/// [ K         DF(q)    0        ] [kdot] = [0]
/// [ 0         k^T      0        ] [ddot]   [0]
/// ```
///
/// where `K` has rows `2 (A_i k)^T`, then advances by explicit Euler and
/// corrects. Near `d = 0` the system is ill-conditioned only in `ddot`;
/// the truncated-SVD fallback keeps `qdot, kdot` stable and the corrector
/// restores `d` exactly.
pub fn step_kernel_simplified(
    map: &QuadraticMap,
    s: &SplitState,
    pdot: &DVector<f64>,
    h: f64,
) -> Result<(SplitState, StepReport)> {
    let p_target = map.eval(&s.reconstruct())? + pdot * h;
    step_kernel_simplified_to(map, s, pdot, h, &p_target, true)
}

/// [`step_kernel_simplified`] with an explicit step target. Anchoring to
/// the given curve sample (rather than the local extrapolation) keeps the
/// corrector from compounding per-step residuals along a long curve.
pub fn step_kernel_simplified_to(
    map: &QuadraticMap,
    s: &SplitState,
    pdot: &DVector<f64>,
    h: f64,
    p_target: &DVector<f64>,
    correct: bool,
) -> Result<(SplitState, StepReport)> {
    let n = map.dim();
    let q = &s.q.q;
    let k = &s.w;
    let jac_q = map.jacobian(q)?;
    let kq = map.jacobian_quadratic(k);
    let hkk = map.hessian_apply(k, k)?;

    let mut sys = DMatrix::zeros(2 * n + 1, 2 * n + 1);
    sys.view_mut((0, 0), (n, n)).copy_from(&jac_q);
    sys.view_mut((0, n), (n, n)).copy_from(&(&kq * (s.d * s.d)));
    sys.view_mut((0, 2 * n), (n, 1)).copy_from(&(&hkk * s.d));
    sys.view_mut((n, 0), (n, n)).copy_from(&kq);
    sys.view_mut((n, n), (n, n)).copy_from(&jac_q);
    for j in 0..n {
        sys[(2 * n, n + j)] = k[j];
    }
    let mut rhs = DVector::zeros(2 * n + 1);
    rhs.rows_mut(0, n).copy_from(pdot);

    let (sol, cond) = solve_square(sys, &rhs, 1e12)?;
    advance_kernel(map, s, &sol, h, cond, p_target, correct)
}

fn advance_kernel(
    map: &QuadraticMap,
    s: &SplitState,
    sol: &DVector<f64>,
    h: f64,
    cond: f64,
    p_target: &DVector<f64>,
    correct: bool,
) -> Result<(SplitState, StepReport)> {
    let n = map.dim();
    let qdot = DVector::from(sol.rows(0, n).clone_owned());
    let kdot = DVector::from(sol.rows(n, n).clone_owned());
    let ddot = sol[2 * n];
    let q_pred = &s.q.q + &qdot * h;
    let mut k_pred = &s.w + &kdot * h;
    k_pred /= k_pred.norm();
    // Near d = 0 the ddot component is untrustworthy; the corrector
    // re-derives |d|, so only the predicted sign matters.
    let d_pred = if ddot.is_finite() { s.d + h * ddot } else { s.d };
    if !correct {
        // Plain Euler advance: keep (q, k, d) as the integrated variables,
        // only refreshing the spectral data by warm-started refinement.
        let mut tracker = SpectralTracker::new();
        tracker.seed(s.q.spectrum.clone());
        let sp = tracker.compute(map, &q_pred)?;
        let point = SsbPoint::from_spectrum(map, q_pred, sp)?;
        let state = SplitState { q: point, d: d_pred, mode: SplitMode::Kernel, w: k_pred };
        let residual = (map.eval(&state.reconstruct())? - p_target).norm();
        let accepted = residual <= STEP_RESIDUAL_TOL * (1.0 + p_target.norm());
        return Ok((state, StepReport { accepted, residual, mode_switched: false, condition_estimate: cond }));
    }
    finish_kernel_step(map, q_pred, k_pred, d_pred, p_target, cond)
}

/// One continuation step from the full first-order expansion. In kernel
/// mode this retains the linear term `d (DF) k` (i.e. it uses
/// `DF(v) = DF(q) + d K` in the power row); in normal mode the unknowns
/// reduce to `(qdot, ddot)` after substituting `wdot = (D n_v) qdot`.
pub fn step_full(
    map: &QuadraticMap,
    s: &SplitState,
    pdot: &DVector<f64>,
    h: f64,
) -> Result<(SplitState, StepReport)> {
    let p_target = map.eval(&s.reconstruct())? + pdot * h;
    step_full_to(map, s, pdot, h, &p_target, true)
}

/// [`step_full`] with an explicit step target; see
/// [`step_kernel_simplified_to`].
pub fn step_full_to(
    map: &QuadraticMap,
    s: &SplitState,
    pdot: &DVector<f64>,
    h: f64,
    p_target: &DVector<f64>,
    correct: bool,
) -> Result<(SplitState, StepReport)> {
    let n = map.dim();
    match s.mode {
        SplitMode::Kernel => {
            let q = &s.q.q;
            let k = &s.w;
            let kq = map.jacobian_quadratic(k);
            let jac_q = map.jacobian(q)?;
            let jac_v = &jac_q + &kq * s.d;

            let mut sys = DMatrix::zeros(2 * n + 1, 2 * n + 1);
            sys.view_mut((0, 0), (n, n)).copy_from(&jac_v);
            sys.view_mut((0, n), (n, n)).copy_from(&(&jac_v * s.d));
            sys.view_mut((0, 2 * n), (n, 1)).copy_from(&(&jac_v * k));
            sys.view_mut((n, 0), (n, n)).copy_from(&kq);
            sys.view_mut((n, n), (n, n)).copy_from(&jac_q);
            for j in 0..n {
                sys[(2 * n, n + j)] = k[j];
            }
            let mut rhs = DVector::zeros(2 * n + 1);
            rhs.rows_mut(0, n).copy_from(pdot);
            let (sol, cond) = solve_square(sys, &rhs, 1e12)?;
            advance_kernel(map, s, &sol, h, cond, p_target, correct)
        }
        SplitMode::Normal => step_normal(map, s, pdot, h, p_target, correct),
    }
}

fn step_normal(
    map: &QuadraticMap,
    s: &SplitState,
    pdot: &DVector<f64>,
    h: f64,
    p_target: &DVector<f64>,
    correct: bool,
) -> Result<(SplitState, StepReport)> {
    let n = map.dim();
    let q = &s.q.q;
    let w = &s.w;
    let v = s.reconstruct();
    let jac_v = map.jacobian(&v)?;

    // Ambient differential of the unit normal field, oriented along w.
    let calc = EigenCalculus::new(map, q, s.q.spectrum.clone())?;
    let grad = calc.grad_lambda();
    let hess = calc.lambda_hessian()?;
    let sigma = if w.dot(grad) >= 0.0 { 1.0 } else { -1.0 };
    let proj = DMatrix::identity(n, n) - w * w.transpose();
    let dn = proj * hess * (sigma / grad.norm());

    let mut sys = DMatrix::zeros(n + 1, n + 1);
    let block = &jac_v * (DMatrix::identity(n, n) + &dn * s.d);
    sys.view_mut((0, 0), (n, n)).copy_from(&block);
    sys.view_mut((0, n), (n, 1)).copy_from(&(&jac_v * w));
    for j in 0..n {
        sys[(n, j)] = w[j];
    }
    let mut rhs = DVector::zeros(n + 1);
    rhs.rows_mut(0, n).copy_from(pdot);
    let (sol, cond) = solve_square(sys, &rhs, 1e12)?;

    let qdot = DVector::from(sol.rows(0, n).clone_owned());
    let ddot = sol[n];
    let q_pred = q + &qdot * h;
    let (q_new, sp) = if correct {
        newton_to_ssb(map, q_pred, w)?
    } else {
        let mut tracker = SpectralTracker::new();
        tracker.seed(s.q.spectrum.clone());
        let sp = tracker.compute(map, &q_pred)?;
        (q_pred, sp)
    };
    let point = SsbPoint::from_spectrum(map, q_new, sp)?;
    let mut w_new = point.n_v.clone();
    if w_new.dot(w) < 0.0 {
        w_new = -w_new;
    }
    let state =
        SplitState { q: point, d: s.d + h * ddot, mode: SplitMode::Normal, w: w_new };
    let residual = (map.eval(&state.reconstruct())? - p_target).norm();
    let accepted = residual <= STEP_RESIDUAL_TOL * (1.0 + p_target.norm());
    Ok((state, StepReport { accepted, residual, mode_switched: false, condition_estimate: cond }))
}

#[derive(Debug, Clone)]
pub struct InvertOptions {
    pub mode: SplitMode,
    pub use_linear_term: bool,
    pub step: f64,
    /// Original voltage samples when inverting a round-trip curve; the
    /// mean error is measured against these.
    pub reference: Option<Vec<DVector<f64>>>,
    pub switch_threshold: f64,
    /// Run the per-step corrector (boundary reprojection plus distance
    /// re-derivation). Disable to integrate the continuation systems as
    /// plain predictors, e.g. to compare their intrinsic model errors.
    pub correct: bool,
}

impl Default for InvertOptions {
    fn default() -> Self {
        Self {
            mode: SplitMode::Kernel,
            use_linear_term: false,
            step: 1.0,
            reference: None,
            switch_threshold: SWITCH_THRESHOLD,
            correct: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct InvertCurveResult {
    pub v_samples: Vec<DVector<f64>>,
    /// Mean distance to the reference voltage samples when given,
    /// otherwise the mean power-space residual.
    pub mean_error: f64,
    pub reports: Vec<StepReport>,
}

/// Continuation over a sampled power-space curve starting from `v0` with
/// `F(v0)` close to `p_samples[0]`; switches from kernel to normal mode
/// when the kernel becomes tangential.
pub fn invert_curve(
    map: &QuadraticMap,
    p_samples: &[DVector<f64>],
    v0: &DVector<f64>,
    opts: &InvertOptions,
) -> Result<InvertCurveResult> {
    if p_samples.is_empty() {
        return Ok(InvertCurveResult { v_samples: Vec::new(), mean_error: 0.0, reports: Vec::new() });
    }
    let mut state = match opts.mode {
        SplitMode::Kernel => init_split_kernel(map, v0)?,
        SplitMode::Normal => init_split_normal(map, v0)?,
    };
    let mut v_samples = Vec::with_capacity(p_samples.len());
    let mut reports = Vec::with_capacity(p_samples.len().saturating_sub(1));
    v_samples.push(state.reconstruct());

    for win in p_samples.windows(2) {
        let pdot = (&win[1] - &win[0]) / opts.step;
        let mut switched = false;
        if should_switch(&state, opts.switch_threshold) {
            state = init_split_normal(map, &state.reconstruct())?;
            switched = true;
        }
        let (next, mut report) = match (state.mode, opts.use_linear_term) {
            (SplitMode::Kernel, false) => {
                step_kernel_simplified_to(map, &state, &pdot, opts.step, &win[1], opts.correct)?
            }
            _ => step_full_to(map, &state, &pdot, opts.step, &win[1], opts.correct)?,
        };
        report.mode_switched = switched;
        state = next;
        v_samples.push(state.reconstruct());
        reports.push(report);
    }

    let mean_error = match &opts.reference {
        Some(reference) => {
            let m = reference.len().min(v_samples.len());
            let mut acc = 0.0;
            for i in 0..m {
                acc += (&v_samples[i] - &reference[i]).norm();
            }
            acc / m as f64
        }
        None => {
            let mut acc = 0.0;
            for (v, p) in v_samples.iter().zip(p_samples.iter()) {
                acc += (map.eval(v)? - p).norm();
            }
            acc / v_samples.len() as f64
        }
    };
    Ok(InvertCurveResult { v_samples, mean_error, reports })
}
