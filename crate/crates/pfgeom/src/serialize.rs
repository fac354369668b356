//! JSON serialization of quadratic maps and boundary points.
//!
//! Numbers are emitted in shortest round-trip decimal form (the serializer
//! uses ryu/grisu-style formatting), so serialize-parse is bit-exact for
//! finite doubles.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use pfgeom_core::{QuadraticMap, SsbPoint};

use crate::netio::{NetError, Result};

#[derive(Serialize, Deserialize)]
struct MapDoc {
    n: usize,
    /// Coefficient matrices, row-major.
    matrices: Vec<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    linear: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    constant: Option<Vec<f64>>,
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn rows_matrix(rows: &[Vec<f64>], n: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(NetError::Schema {
            path: format!("/{what}"),
            msg: format!("expected {n}x{n} row-major matrix"),
        });
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

/// Serializes a map as `{"n": int, "matrices": [[[row-major]]]}` plus
/// optional `linear`/`constant` parts for slack-eliminated maps.
pub fn map_to_json(map: &QuadraticMap) -> String {
    let doc = MapDoc {
        n: map.dim(),
        matrices: map.matrices().iter().map(matrix_rows).collect(),
        linear: map.linear_part().map(matrix_rows),
        constant: map.constant_part().map(|c| c.iter().copied().collect()),
    };
    serde_json::to_string_pretty(&doc).expect("map serialization cannot fail")
}

pub fn map_from_json(text: &str) -> Result<QuadraticMap> {
    let doc: MapDoc = serde_json::from_str(text)
        .map_err(|e| NetError::Schema { path: "/".into(), msg: e.to_string() })?;
    let n = doc.n;
    if doc.matrices.len() != n {
        return Err(NetError::Schema {
            path: "/matrices".into(),
            msg: format!("expected {n} matrices, got {}", doc.matrices.len()),
        });
    }
    let mats = doc
        .matrices
        .iter()
        .map(|rows| rows_matrix(rows, n, "matrices"))
        .collect::<Result<Vec<_>>>()?;
    match (doc.linear, doc.constant) {
        (None, None) => Ok(QuadraticMap::from_matrices(mats)?),
        (linear, constant) => {
            let linear = match linear {
                Some(rows) => rows_matrix(&rows, n, "linear")?,
                None => DMatrix::zeros(n, n),
            };
            let constant = match constant {
                Some(c) => DVector::from_vec(c),
                None => DVector::zeros(n),
            };
            Ok(QuadraticMap::from_parts(mats, linear, constant)?)
        }
    }
}

/// JSON document for a boundary point: the point, its eigenvalue, kernel,
/// cokernel (power normal) and voltage normal.
#[derive(Serialize, Deserialize)]
pub struct SsbPointDoc {
    pub q: Vec<f64>,
    pub lambda0: f64,
    pub k: Vec<f64>,
    pub ktilde: Vec<f64>,
    #[serde(rename = "N_V")]
    pub n_v: Vec<f64>,
}

impl SsbPointDoc {
    pub fn of(p: &SsbPoint) -> Self {
        Self {
            q: p.q.iter().copied().collect(),
            lambda0: p.spectrum.lambda0,
            k: p.spectrum.k.iter().copied().collect(),
            ktilde: p.spectrum.ktilde.iter().copied().collect(),
            n_v: p.n_v.iter().copied().collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use pfgeom_core::quadmap::refmaps;

    #[test]
    fn map_round_trip_is_bit_exact() {
        // Entries with non-terminating binary-to-decimal expansions.
        let mats = vec![
            DMatrix::from_row_slice(2, 2, &[0.1, 1.0 / 3.0, 1.0 / 3.0, -2.7e-13]),
            DMatrix::from_row_slice(2, 2, &[f64::MIN_POSITIVE, 0.0, 0.0, 1e300]),
        ];
        let map = QuadraticMap::from_matrices(mats).unwrap();
        let text = map_to_json(&map);
        let back = map_from_json(&text).unwrap();
        for (a, b) in map.matrices().iter().zip(back.matrices()) {
            assert_eq!(a, b);
        }
        assert!(back.is_homogeneous());
    }

    #[test]
    fn affine_parts_survive() {
        let mats = vec![DMatrix::identity(1, 1)];
        let map = QuadraticMap::from_parts(
            mats,
            DMatrix::from_row_slice(1, 1, &[0.25]),
            DVector::from_row_slice(&[-1.5]),
        )
        .unwrap();
        let back = map_from_json(&map_to_json(&map)).unwrap();
        assert!(!back.is_homogeneous());
        assert_eq!(back.linear_part().unwrap()[(0, 0)], 0.25);
        assert_eq!(back.constant_part().unwrap()[0], -1.5);
    }

    #[test]
    fn wrong_shape_rejected() {
        let r = map_from_json(r#"{"n": 2, "matrices": [[[1.0]]]}"#);
        assert!(r.is_err());
    }

    #[test]
    fn ssb_point_doc_fields() {
        let f = refmaps::m2();
        let p = SsbPoint::at(&f, DVector::from_row_slice(&[1.0, 1.0])).unwrap();
        let doc = SsbPointDoc::of(&p);
        let text = serde_json::to_string(&doc).unwrap();
        assert!(text.contains("\"N_V\""));
        let back: SsbPointDoc = serde_json::from_str(&text).unwrap();
        assert_eq!(back.q, doc.q);
        assert_eq!(back.lambda0, doc.lambda0);
    }
}
