//! Seeded experiment harness: reproducible random directions, boundary
//! point discovery on networks, round-trip inversion runs over sampled
//! power curves, a brute-force boundary-patch distance sampler, and a
//! deterministic synthetic case generator.

use std::time::Instant;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pfgeom_core::inversion::{self, InvertCurveResult, InvertOptions, SplitMode, SplitState};
use pfgeom_core::linalg::orthogonal_complement;
use pfgeom_core::spectrum::spectral_kernel;
use pfgeom_core::ssb::find_ssb_ray;
use pfgeom_core::{QuadraticMap, SsbPoint};

use crate::netio::{assemble_quadratic, AssembleOptions, Branch, Bus, BusKind, NetError, NetworkCase, Result};

/// Independent generator for sub-experiment `label` of a run seeded with
/// `seed`. Streams are counter-addressed, so adding experiments never
/// perturbs existing ones.
pub fn stream(seed: u64, label: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(label);
    rng
}

/// Uniform random unit vector via normalized Gaussians (Box-Muller).
pub fn random_unit(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(n, |_, _| {
            let u1: f64 = rng.random::<f64>().max(1e-16);
            let u2: f64 = rng.random();
            (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
        });
        let norm = v.norm();
        if norm > 1e-6 {
            return v / norm;
        }
    }
}

/// The power flow map used for boundary experiments: slack eliminated.
///
/// The full interleaved map carries the global phase symmetry of the
/// injections (all components depend only on voltage angle differences),
/// which places the rotation generator in the kernel of `DF` at every
/// point. Fixing the slack phasor removes that symmetry and makes the
/// singular set a hypersurface again.
pub fn network_map(case: &NetworkCase) -> Result<QuadraticMap> {
    assemble_quadratic(case, AssembleOptions { eliminate_slack: true })
}

/// Flat profile `(e, f) = (1, 0)` in the slack-eliminated coordinates.
pub fn reduced_flat(case: &NetworkCase) -> DVector<f64> {
    let m = case.n_buses() - 1;
    DVector::from_fn(2 * m, |i, _| if i % 2 == 0 { 1.0 } else { 0.0 })
}

/// Collects `count` boundary points by shooting seeded random rays from
/// `v0` and keeping the rays whose first determinant sign change refines
/// into an accepted boundary point with a simple kernel.
pub fn find_ssb_points(
    map: &QuadraticMap,
    v0: &DVector<f64>,
    count: usize,
    seed: u64,
    label: u64,
) -> Result<Vec<SsbPoint>> {
    let mut points = Vec::with_capacity(count);
    let mut attempts = 0u64;
    while points.len() < count {
        if attempts >= 40 * count as u64 {
            return Err(NetError::Core(pfgeom_core::Error::NoBracket { t_max: 1e6 }));
        }
        let mut rng = stream(seed, label.wrapping_mul(1 << 20).wrapping_add(attempts));
        attempts += 1;
        let u = random_unit(&mut rng, map.dim());
        if let Ok(p) = find_ssb_ray(map, v0, &u) {
            points.push(p);
        }
    }
    Ok(points)
}

/// Inversion method selector for round-trip experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    KernelSimplified,
    KernelLinear,
    Normal,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::KernelSimplified => "kernel",
            Method::KernelLinear => "kernel-linear",
            Method::Normal => "normal",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "kernel" => Some(Method::KernelSimplified),
            "kernel-linear" => Some(Method::KernelLinear),
            "normal" => Some(Method::Normal),
            _ => None,
        }
    }
}

/// Runs one round-trip cell: the straight voltage curve
/// `v(t) = q + t u, t = t0 + j h` is mapped through `F` and inverted back
/// from `v(t0)`; the mean distance to the original samples is reported.
/// Radius in voltage space within which the tracked real eigenvalue branch
/// from the boundary point stays identifiable: half the spectral gap at `q`
/// divided by the eigenvalue gradient magnitude. Points with a tiny radius
/// sit near a spectral collision and are unusable as continuation anchors.
pub fn branch_radius(map: &QuadraticMap, q: &SsbPoint) -> Result<f64> {
    let mut mags: Vec<f64> = pfgeom_core::spectrum::jacobian_eigenvalues(map, &q.q)
        .map_err(NetError::Core)?
        .iter()
        .map(|(re, im)| re.hypot(*im))
        .collect();
    mags.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(0.5 * mags[1] / q.grad_lambda.norm().max(1e-300))
}

pub fn round_trip(
    map: &QuadraticMap,
    q: &SsbPoint,
    u: &DVector<f64>,
    t0: f64,
    h: f64,
    steps: usize,
    method: Method,
) -> Result<InvertCurveResult> {
    let v_samples: Vec<DVector<f64>> =
        (0..=steps).map(|j| &q.q + u * (t0 + j as f64 * h)).collect();
    let p_samples = v_samples
        .iter()
        .map(|v| map.eval(v))
        .collect::<pfgeom_core::Result<Vec<_>>>()
        .map_err(NetError::Core)?;
    let opts = InvertOptions {
        mode: match method {
            Method::Normal => SplitMode::Normal,
            _ => SplitMode::Kernel,
        },
        use_linear_term: method == Method::KernelLinear,
        step: h,
        reference: Some(v_samples.clone()),
        // Predictor-only: the round-trip protocol compares the intrinsic
        // model errors of the continuation systems, which the per-step
        // corrector would otherwise erase.
        correct: false,
        ..InvertOptions::default()
    };
    inversion::invert_curve(map, &p_samples, &v_samples[0], &opts).map_err(NetError::Core)
}

/// Boundary point along `q + xi + t u` found by a secant iteration on
/// `lambda0` in `t`. Uses only the raw spectral routine, independently of
/// the projection machinery.
fn reproject_along(
    map: &QuadraticMap,
    base: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<DVector<f64>> {
    let lam = |t: f64| -> Result<f64> {
        Ok(spectral_kernel(map, &(base + u * t)).map_err(NetError::Core)?.lambda0)
    };
    let mut t0 = 0.0;
    let mut t1 = 1e-4;
    let mut f0 = lam(t0)?;
    let mut f1 = lam(t1)?;
    for _ in 0..60 {
        if (f1 - f0).abs() < 1e-300 {
            break;
        }
        let t2 = t1 - f1 * (t1 - t0) / (f1 - f0);
        t0 = t1;
        f0 = f1;
        t1 = t2;
        f1 = lam(t1)?;
        if f1.abs() < 1e-13 {
            break;
        }
    }
    Ok(base + u * t1)
}

/// Brute-force local-patch distance sampler: samples the boundary patch
/// around `q0` on shrinking pattern-search stencils and returns the
/// smallest distance from `v` to the sampled boundary points.
///
/// Serves as an independent oracle for orthogonal projection: if `q0`
/// really is the local closest point, the sampled minimum converges to
/// `|v - q0|`.
pub fn patch_min_distance(
    map: &QuadraticMap,
    v: &DVector<f64>,
    q0: &DVector<f64>,
    radius: f64,
    seed: u64,
) -> Result<f64> {
    let u = {
        let d = v - q0;
        let norm = d.norm();
        if norm < 1e-12 {
            return Ok(0.0);
        }
        d / norm
    };
    let basis = orthogonal_complement(&u);
    let mut rng = stream(seed, 0x9a7c);
    let mut best_xi = DVector::zeros(basis.ncols());
    let mut best = (v - reproject_along(map, q0, &u)?).norm();
    let mut r = radius;
    for _round in 0..40 {
        let mut improved = false;
        for _ in 0..12 {
            let step = random_unit(&mut rng, basis.ncols()) * r;
            let xi = &best_xi + step;
            let base = q0 + &basis * &xi;
            let Ok(b) = reproject_along(map, &base, &u) else { continue };
            let dist = (v - b).norm();
            if dist < best {
                best = dist;
                best_xi = xi;
                improved = true;
            }
        }
        if !improved {
            r *= 0.5;
        }
        if r < 1e-6 {
            break;
        }
    }
    Ok(best)
}

/// Times a single continuation step on the given network map, starting
/// from a split state at distance `d` from the boundary point.
pub fn bench_step(map: &QuadraticMap, q: &SsbPoint, mode: SplitMode) -> Result<f64> {
    let (w, d) = match mode {
        SplitMode::Kernel => (q.spectrum.k.clone(), 1e-3),
        SplitMode::Normal => (q.n_v.clone(), 0.05),
    };
    let state = SplitState { q: q.clone(), d, mode, w: w.clone() };
    let v = state.reconstruct();
    let h = 1e-6;
    let pdot = (map.eval(&(&v + &w * h)).map_err(NetError::Core)?
        - map.eval(&v).map_err(NetError::Core)?)
        / h;
    let start = Instant::now();
    let _ = match mode {
        SplitMode::Kernel => inversion::step_kernel_simplified(map, &state, &pdot, h),
        SplitMode::Normal => inversion::step_full(map, &state, &pdot, h),
    }
    .map_err(NetError::Core)?;
    Ok(start.elapsed().as_secs_f64())
}

/// Deterministic synthetic network: a ring with random chords, realistic
/// per-unit impedance ranges, a few off-nominal taps and bus shunts.
/// Stands in for archive cases of the same size in offline test runs.
pub fn synth_case(n_buses: usize, seed: u64) -> NetworkCase {
    assert!(n_buses >= 3);
    let mut rng = stream(seed, n_buses as u64);
    let mut buses = Vec::with_capacity(n_buses);
    for i in 1..=n_buses as u32 {
        let kind = if i == 1 {
            BusKind::Slack
        } else if i % 5 == 0 {
            BusKind::Pv
        } else {
            BusKind::Pq
        };
        let load_p = if kind == BusKind::Pq { rng.random_range(5.0..60.0f64) } else { 0.0 };
        buses.push(Bus {
            id: i,
            kind,
            load_p: (load_p * 10.0).round() / 10.0,
            load_q: (load_p * 3.0).round() / 10.0,
            gen_p: if kind == BusKind::Pv { 40.0 } else { 0.0 },
            gen_q: 0.0,
            shunt_g: 0.0,
            shunt_b: if i % 11 == 0 { 0.1 } else { 0.0 },
            base_kv: 132.0,
        });
    }
    let mut branches = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let round5 = |x: f64| (x * 1e5).round() / 1e5;
    for i in 1..=n_buses as u32 {
        let j = if i == n_buses as u32 { 1 } else { i + 1 };
        seen.insert((i.min(j), i.max(j)));
        let x = rng.random_range(0.08..0.3);
        branches.push(Branch {
            from: i,
            to: j,
            r: round5(x * rng.random_range(0.1..0.4)),
            x: round5(x),
            b: round5(rng.random_range(0.0..0.06f64)),
            tap: if i % 10 == 0 { round5(rng.random_range(0.94..1.05)) } else { 0.0 },
            shift: 0.0,
        });
    }
    let chords = n_buses / 2;
    let mut made = 0;
    while made < chords {
        let a = rng.random_range(1..=n_buses as u32);
        let b = rng.random_range(1..=n_buses as u32);
        if a == b {
            continue;
        }
        let key = (a.min(b), a.max(b));
        if !seen.insert(key) {
            continue;
        }
        let x = rng.random_range(0.1..0.4);
        branches.push(Branch {
            from: key.0,
            to: key.1,
            r: round5(x * rng.random_range(0.1..0.4)),
            x: round5(x),
            b: round5(rng.random_range(0.0..0.04f64)),
            tap: 0.0,
            shift: 0.0,
        });
        made += 1;
    }
    NetworkCase {
        name: format!("SYNTHETIC {n_buses} BUS"),
        base_mva: 100.0,
        buses,
        branches,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_independent() {
        let a1 = random_unit(&mut stream(7, 1), 5);
        let a2 = random_unit(&mut stream(7, 1), 5);
        let b = random_unit(&mut stream(7, 2), 5);
        assert_eq!(a1, a2);
        assert!((&a1 - &b).norm() > 1e-3);
        assert!((a1.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn synth_case_is_deterministic_and_connected() {
        let c1 = synth_case(30, 42);
        let c2 = synth_case(30, 42);
        assert_eq!(c1, c2);
        assert_eq!(c1.n_buses(), 30);
        // Ring edges guarantee connectivity.
        assert!(c1.branches.len() >= 30);
        let slacks = c1.buses.iter().filter(|b| b.kind == BusKind::Slack).count();
        assert_eq!(slacks, 1);
    }

    #[test]
    fn synth_case_survives_cdf_round_trip() {
        let case = synth_case(30, 42);
        let text = crate::netio::case_to_cdf(&case);
        let back = crate::netio::parse_cdf(&text).unwrap();
        assert_eq!(case, back);
    }

    #[test]
    fn reduced_map_has_regular_flat_profile() {
        let case = synth_case(10, 42);
        let map = network_map(&case).unwrap();
        assert_eq!(map.dim(), 18);
        assert!(!map.is_homogeneous());
        let det = map.jacobian_det(&reduced_flat(&case)).unwrap();
        assert!(det.abs() > 1e-12, "det {det}");
    }

    #[test]
    fn full_map_carries_phase_symmetry() {
        // The rotation generator (-f_i, e_i) lies in the kernel of DF for
        // the non-eliminated map at every point.
        let case = synth_case(6, 3);
        let map = assemble_quadratic(&case, AssembleOptions::default()).unwrap();
        let mut rng = stream(1, 0);
        let v = random_unit(&mut rng, map.dim());
        let mut gen = DVector::zeros(map.dim());
        for i in 0..case.n_buses() {
            gen[2 * i] = -v[2 * i + 1];
            gen[2 * i + 1] = v[2 * i];
        }
        let jv = map.jacobian(&v).unwrap() * gen;
        assert!(jv.norm() < 1e-12, "symmetry violated: {}", jv.norm());
    }

    #[test]
    fn boundary_points_found_on_small_synthetic() {
        let case = synth_case(6, 5);
        let map = network_map(&case).unwrap();
        let pts = find_ssb_points(&map, &reduced_flat(&case), 2, 11, 0).unwrap();
        assert_eq!(pts.len(), 2);
        for p in &pts {
            let s = spectral_kernel(&map, &p.q).unwrap();
            assert!(s.lambda0.abs() < 1e-8);
        }
    }

    #[test]
    fn round_trip_small_network() {
        let case = synth_case(6, 5);
        let map = network_map(&case).unwrap();
        let q = &find_ssb_points(&map, &reduced_flat(&case), 1, 11, 0).unwrap()[0];
        let u = random_unit(&mut stream(11, 77), map.dim());
        let r = round_trip(&map, q, &u, 1e-6, 1e-7, 20, Method::KernelLinear).unwrap();
        assert_eq!(r.v_samples.len(), 21);
        assert!(r.mean_error < 1e-3, "mean error {}", r.mean_error);
    }
}
