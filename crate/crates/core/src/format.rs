//! JSON document format for algebra elements.
//!
//! ```json
//! {"points": 1, "dims": [2], "blocks": [[[[[1.0, 0.0]], [[0.0, 0.0]]],
//!                                        [[[0.0, 0.0]], [[1.0, 0.0]]]]]}
//! ```
//!
//! `blocks[b][i][j][p]` is the `[re, im]` pair of entry `(i, j)` of block `b`
//! at point `p`. Every nesting level is checked against `points` and `dims`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::algebra::{AlgebraShape, BlockMatrix, FnMatrix};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct MatrixDoc {
    points: usize,
    dims: Vec<usize>,
    blocks: Vec<Vec<Vec<Vec<[f64; 2]>>>>,
}

impl TryFrom<MatrixDoc> for BlockMatrix {
    type Error = Error;

    fn try_from(doc: MatrixDoc) -> Result<Self> {
        let shape = AlgebraShape::new(doc.points, doc.dims)?;
        if doc.blocks.len() != shape.block_count() {
            return Err(Error::ShapeMismatch(format!(
                "{} blocks listed, dims declare {}",
                doc.blocks.len(),
                shape.block_count()
            )));
        }
        let mut blocks = Vec::with_capacity(shape.block_count());
        for (b, rows) in doc.blocks.iter().enumerate() {
            let n = shape.dim(b);
            if rows.len() != n {
                return Err(Error::ShapeMismatch(format!("block {b}: {} rows, expected {n}", rows.len())));
            }
            let mut fibers = vec![DMatrix::<Complex64>::zeros(n, n); shape.points()];
            for (i, row) in rows.iter().enumerate() {
                if row.len() != n {
                    return Err(Error::ShapeMismatch(format!(
                        "block {b} row {i}: {} columns, expected {n}",
                        row.len()
                    )));
                }
                for (j, entry) in row.iter().enumerate() {
                    if entry.len() != shape.points() {
                        return Err(Error::ShapeMismatch(format!(
                            "block {b} entry ({i},{j}): {} point values, expected {}",
                            entry.len(),
                            shape.points()
                        )));
                    }
                    for (p, &[re, im]) in entry.iter().enumerate() {
                        fibers[p][(i, j)] = Complex64::new(re, im);
                    }
                }
            }
            blocks.push(FnMatrix::from_fibers(fibers)?);
        }
        BlockMatrix::from_blocks(&shape, blocks)
    }
}

impl From<BlockMatrix> for MatrixDoc {
    fn from(m: BlockMatrix) -> Self {
        let shape = m.shape();
        let blocks = m
            .blocks()
            .iter()
            .map(|block| {
                let n = block.n();
                (0..n)
                    .map(|i| {
                        (0..n)
                            .map(|j| block.fibers().iter().map(|f| [f[(i, j)].re, f[(i, j)].im]).collect())
                            .collect()
                    })
                    .collect()
            })
            .collect();
        MatrixDoc { points: shape.points(), dims: shape.dims().to_vec(), blocks }
    }
}

/// Parses a matrix document, rejecting any dimension mismatch.
pub fn parse_matrix(text: &str) -> Result<BlockMatrix> {
    Ok(serde_json::from_str(text)?)
}

pub fn parse_matrix_bytes(bytes: &[u8]) -> Result<BlockMatrix> {
    Ok(serde_json::from_slice(bytes)?)
}

pub fn to_json(m: &BlockMatrix) -> String {
    serde_json::to_string(m).expect("matrix documents always serialize")
}

pub fn to_json_pretty(m: &BlockMatrix) -> String {
    serde_json::to_string_pretty(m).expect("matrix documents always serialize")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::matrix_unit;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_document_layout() {
        let text = r#"{"points":1,"dims":[2],"blocks":[[[[[1.0,0.0]],[[0.0,0.0]]],[[[0.0,0.0]],[[1.0,0.0]]]]]}"#;
        let m = parse_matrix(text).unwrap();
        assert_eq!(m, BlockMatrix::identity(&AlgebraShape::new(1, vec![2]).unwrap()));
        assert_eq!(to_json(&m), text);
    }

    #[test]
    fn entry_order_is_row_column_point() {
        let shape = AlgebraShape::new(2, vec![1, 2]).unwrap();
        let e = matrix_unit(&shape, 1, 0, 1).unwrap();
        let v: serde_json::Value = serde_json::from_str(&to_json(&e)).unwrap();
        assert_eq!(v["blocks"][1][0][1], serde_json::json!([[1.0, 0.0], [1.0, 0.0]]));
        assert_eq!(v["blocks"][1][1][0], serde_json::json!([[0.0, 0.0], [0.0, 0.0]]));
    }

    #[test]
    fn rejects_dimension_mismatches() {
        let cases = [
            // block count
            r#"{"points":1,"dims":[1,1],"blocks":[[[[[0,0]]]]]}"#,
            // row count
            r#"{"points":1,"dims":[2],"blocks":[[[[[0,0]],[[0,0]]]]]}"#,
            // column count
            r#"{"points":1,"dims":[2],"blocks":[[[[[0,0]]],[[[0,0]],[[0,0]]]]]}"#,
            // point count
            r#"{"points":2,"dims":[1],"blocks":[[[[[0,0]]]]]}"#,
            // zero dimension
            r#"{"points":1,"dims":[0],"blocks":[[]]}"#,
            // no blocks
            r#"{"points":1,"dims":[],"blocks":[]}"#,
            // zero points
            r#"{"points":0,"dims":[1],"blocks":[[[[]]]]}"#,
            // not a pair
            r#"{"points":1,"dims":[1],"blocks":[[[[[0,0,0]]]]]}"#,
            // unknown field
            r#"{"points":1,"dims":[1],"blocks":[[[[[0,0]]]]],"extra":1}"#,
            // overflow to infinity
            r#"{"points":1,"dims":[1],"blocks":[[[[[1e999,0]]]]]}"#,
        ];
        for text in cases {
            assert!(parse_matrix(text).is_err(), "accepted {text}");
        }
    }

    proptest! {
        #[test]
        fn json_round_trip(points in 1usize..4, dims in prop::collection::vec(1usize..4, 1..4), seed: u64) {
            let shape = AlgebraShape::new(points, dims).unwrap();
            let m = BlockMatrix::random(&shape, &mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(parse_matrix(&to_json(&m)).unwrap(), m);
        }

        #[test]
        fn parser_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..256)) {
            let _ = parse_matrix_bytes(&bytes);
        }
    }
}
