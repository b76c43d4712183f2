//! Brute-force recovery of an implementing element by global least squares.
//!
//! This path shares no code with the Peirce read-offs in [`crate::reconstruct`]:
//! it stacks `b·p − p·b = Δ(p)` over all probes and solves for `b` directly.

use serde::Serialize;

use crate::algebra::{all_matrix_units, center_project, AlgebraShape, BlockMatrix};
use crate::derivation::AlgebraMap;
use crate::error::{Error, Result};
use crate::linalg::{self, Decomposition, SparseOperator, RANK_TOL};

#[derive(Clone, Debug, Serialize)]
pub struct GlobalSolveResult {
    pub element: BlockMatrix,
    pub relative_residual: f64,
    /// Dimension of the ambiguity space of the stacked system, summed over points and blocks.
    pub rank_deficiency: usize,
}

/// Minimum-norm solution of `b·p_k − p_k·b = v_k` for all `k`, per point and block.
pub fn solve_global(
    probes: &[BlockMatrix],
    values: &[BlockMatrix],
    shape: &AlgebraShape,
    tol: f64,
) -> Result<GlobalSolveResult> {
    solve_global_with_rank(probes, values, shape, tol, RANK_TOL)
}

/// [`solve_global`] with an explicit relative rank tolerance.
pub fn solve_global_with_rank(
    probes: &[BlockMatrix],
    values: &[BlockMatrix],
    shape: &AlgebraShape,
    tol: f64,
    rank_tol: f64,
) -> Result<GlobalSolveResult> {
    if probes.len() != values.len() {
        return Err(Error::ShapeMismatch(format!("{} probes but {} values", probes.len(), values.len())));
    }
    for m in probes.iter().chain(values) {
        if m.shape() != shape {
            return Err(Error::ShapeMismatch(format!("element of {} in a system on {shape}", m.shape())));
        }
    }

    let mut element = BlockMatrix::zeros(shape);
    let mut residual_sq = 0.0;
    let mut rhs_sq = 0.0;
    let mut rank_deficiency = 0;
    for (b, &n) in shape.dims().iter().enumerate() {
        for p in 0..shape.points() {
            let ops: Vec<_> = probes.iter().map(|m| m.block(b).fiber(p)).collect();
            let vals: Vec<_> = values.iter().map(|m| m.block(b).fiber(p)).collect();
            let op = SparseOperator::commutator_stack(n, &ops);
            let rhs = linalg::stack(&vals);
            let dec = Decomposition::new(&op);
            let x = dec.min_norm_solve(&rhs, rank_tol);
            rank_deficiency += dec.nullity(rank_tol);
            residual_sq += (op.apply(&x) - &rhs).norm_squared();
            rhs_sq += rhs.norm_squared();
            element.blocks_mut()[b].fibers_mut()[p] = linalg::unvectorize(n, &x);
        }
    }
    let residual = residual_sq.sqrt();
    let relative_residual = if rhs_sq > 0.0 { residual / rhs_sq.sqrt() } else { residual };
    if !(relative_residual <= tol) {
        return Err(Error::NoGlobalImplementingElement { relative: relative_residual, tolerance: tol });
    }
    Ok(GlobalSolveResult { element, relative_residual, rank_deficiency })
}

/// [`solve_global`] on every matrix unit of the map's shape.
pub fn solve_from_matrix_units<M: AlgebraMap + ?Sized>(map: &M, tol: f64, rank_tol: f64) -> Result<GlobalSolveResult> {
    let shape = map.shape();
    let probes: Vec<BlockMatrix> = all_matrix_units(shape).into_iter().map(|(_, e)| e).collect();
    let values = probes.iter().map(|p| map.evaluate(p)).collect::<Result<Vec<_>>>()?;
    solve_global_with_rank(&probes, &values, shape, tol, rank_tol)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct CenterComparison {
    pub pass: bool,
    /// Norm of the non-central part of `a − b`.
    pub distance: f64,
}

/// Whether `a − b` is central, within `tol · (1 + ‖a‖ + ‖b‖)`.
pub fn equal_mod_center(a: &BlockMatrix, b: &BlockMatrix, tol: f64) -> Result<CenterComparison> {
    let diff = a.sub(b)?;
    let distance = diff.sub(&center_project(&diff))?.norm();
    Ok(CenterComparison { pass: distance <= tol * (1.0 + a.norm() + b.norm()), distance })
}
