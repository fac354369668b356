//! Sampling `det DF` and `lambda0` over a 2-d affine slice of voltage
//! space, for external contour plotting of the solution space boundary.

use nalgebra::DVector;

use pfgeom_core::{spectrum, QuadraticMap};

use crate::netio::{NetError, Result};

#[derive(Debug, Clone)]
pub struct SliceSpec {
    pub origin: DVector<f64>,
    pub dir_a: DVector<f64>,
    pub dir_b: DVector<f64>,
    pub a_range: (f64, f64),
    pub b_range: (f64, f64),
    pub na: usize,
    pub nb: usize,
}

#[derive(Debug, Clone)]
pub struct SliceSample {
    pub a: f64,
    pub b: f64,
    pub det: f64,
    /// NaN when the smallest-magnitude eigenvalue is complex at the sample.
    pub lambda0: f64,
}

#[derive(Debug, Clone)]
pub struct SliceResult {
    pub samples: Vec<SliceSample>,
    /// `(i, j)` of grid cells (lower-left sample index) whose corner
    /// determinants change sign: the boundary passes through these.
    pub sign_change_cells: Vec<(usize, usize)>,
}

/// Samples the slice on a regular `na x nb` grid, row-major in `a`.
pub fn sample_slice(map: &QuadraticMap, spec: &SliceSpec) -> Result<SliceResult> {
    let ga = spec.dir_a.norm_squared();
    let gb = spec.dir_b.norm_squared();
    let gab = spec.dir_a.dot(&spec.dir_b);
    let gram_det = ga * gb - gab * gab;
    if gram_det <= 1e-12 * ga * gb || ga == 0.0 || gb == 0.0 {
        return Err(NetError::Schema {
            path: "/slice/directions".into(),
            msg: "slice directions are linearly dependent".into(),
        });
    }
    let coord = |lo: f64, hi: f64, n: usize, i: usize| {
        if n <= 1 {
            0.5 * (lo + hi)
        } else {
            lo + (hi - lo) * i as f64 / (n - 1) as f64
        }
    };
    let mut samples = Vec::with_capacity(spec.na * spec.nb);
    let mut dets = vec![0.0f64; spec.na * spec.nb];
    for i in 0..spec.na {
        let a = coord(spec.a_range.0, spec.a_range.1, spec.na, i);
        for j in 0..spec.nb {
            let b = coord(spec.b_range.0, spec.b_range.1, spec.nb, j);
            let v = &spec.origin + &spec.dir_a * a + &spec.dir_b * b;
            let det = map.jacobian_det(&v)?;
            let lambda0 = match spectrum::spectral_kernel(map, &v) {
                Ok(s) => s.lambda0,
                Err(_) => f64::NAN,
            };
            dets[i * spec.nb + j] = det;
            samples.push(SliceSample { a, b, det, lambda0 });
        }
    }
    let mut sign_change_cells = Vec::new();
    for i in 0..spec.na.saturating_sub(1) {
        for j in 0..spec.nb.saturating_sub(1) {
            let corners = [
                dets[i * spec.nb + j],
                dets[i * spec.nb + j + 1],
                dets[(i + 1) * spec.nb + j],
                dets[(i + 1) * spec.nb + j + 1],
            ];
            let has_pos = corners.iter().any(|d| *d > 0.0);
            let has_neg = corners.iter().any(|d| *d < 0.0);
            if (has_pos && has_neg) || corners.iter().any(|d| *d == 0.0) {
                sign_change_cells.push((i, j));
            }
        }
    }
    Ok(SliceResult { samples, sign_change_cells })
}

#[cfg(test)]
mod tests {
    use super::*;
    use pfgeom_core::quadmap::refmaps;

    fn spec_square(n: usize) -> SliceSpec {
        SliceSpec {
            origin: DVector::zeros(2),
            dir_a: DVector::from_row_slice(&[1.0, 0.0]),
            dir_b: DVector::from_row_slice(&[0.0, 1.0]),
            a_range: (-1.0, 1.0),
            b_range: (-1.0, 1.0),
            na: n,
            nb: n,
        }
    }

    #[test]
    fn boundary_lines_marked() {
        // det DF = 4 (v1^2 - v2^2): sign changes exactly across v2 = ±v1.
        let f = refmaps::m2();
        let r = sample_slice(&f, &spec_square(21)).unwrap();
        assert_eq!(r.samples.len(), 441);
        for &(i, j) in &r.sign_change_cells {
            let s = &r.samples[i * 21 + j];
            // Cell center distance to the nearest diagonal below one step.
            let c = (s.a + 0.05, s.b + 0.05);
            let dist = ((c.0.abs() - c.1.abs()).abs()) / 2f64.sqrt();
            assert!(dist < 0.15, "cell ({i},{j}) far from v2 = ±v1: {dist}");
        }
        assert!(!r.sign_change_cells.is_empty());
    }

    #[test]
    fn single_sample_grid() {
        let f = refmaps::m2();
        let mut spec = spec_square(1);
        spec.a_range = (0.5, 0.5);
        spec.b_range = (0.25, 0.25);
        let r = sample_slice(&f, &spec).unwrap();
        assert_eq!(r.samples.len(), 1);
        assert!(r.sign_change_cells.is_empty());
        // det DF = 4 (0.25 - 0.0625) = 0.75.
        approx::assert_relative_eq!(r.samples[0].det, 0.75, epsilon = 1e-12);
    }

    #[test]
    fn dependent_directions_rejected() {
        let f = refmaps::m2();
        let mut spec = spec_square(4);
        spec.dir_b = spec.dir_a.clone() * -3.0;
        assert!(sample_slice(&f, &spec).is_err());
    }
}
