//! Minimum-norm least squares and nullspaces for stacked commutator operators.
//!
//! The operators here act on a vectorized `n × n` matrix `z` (row-major, index
//! `i·n + j`) and are very sparse when the probes are matrix units or banded.
//! Columns that never share a nonzero row are independent, so the operator is
//! split into connected components and each component gets its own dense SVD.
//! The minimum-norm solution and the nullspace of the whole operator are exactly
//! the concatenation of the per-component ones.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// Singular values at or below this fraction of the largest count as zero.
pub const RANK_TOL: f64 = 1e-10;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Column-compressed complex operator.
#[derive(Clone, Debug)]
pub(crate) struct SparseOperator {
    nrows: usize,
    columns: Vec<Vec<(usize, Complex64)>>,
}

impl SparseOperator {
    /// `z ↦ (z p_1 − p_1 z, …, z p_m − p_m z)` for `n × n` matrices `p_t`.
    pub fn commutator_stack(n: usize, ops: &[&DMatrix<Complex64>]) -> Self {
        let nn = n * n;
        let mut columns = Vec::with_capacity(nn);
        let mut scratch: Vec<(usize, Complex64)> = Vec::new();
        for i in 0..n {
            for j in 0..n {
                // Column for the unit E_ij: (E_ij p)[i, c] = p[j, c] and (p E_ij)[r, j] = p[r, i].
                scratch.clear();
                for (t, p) in ops.iter().enumerate() {
                    let base = t * nn;
                    for c in 0..n {
                        let v = p[(j, c)];
                        if v != ZERO {
                            scratch.push((base + i * n + c, v));
                        }
                    }
                    for r in 0..n {
                        let v = p[(r, i)];
                        if v != ZERO {
                            scratch.push((base + r * n + j, -v));
                        }
                    }
                }
                columns.push(merge_entries(&mut scratch));
            }
        }
        Self { nrows: ops.len() * nn, columns }
    }

    #[cfg(test)]
    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.columns.len()
    }

    pub fn apply(&self, x: &DVector<Complex64>) -> DVector<Complex64> {
        let mut y = DVector::zeros(self.nrows);
        for (col, entries) in self.columns.iter().enumerate() {
            let xc = x[col];
            if xc == ZERO {
                continue;
            }
            for &(row, v) in entries {
                y[row] += v * xc;
            }
        }
        y
    }
}

fn merge_entries(scratch: &mut [(usize, Complex64)]) -> Vec<(usize, Complex64)> {
    scratch.sort_by_key(|&(row, _)| row);
    let mut out: Vec<(usize, Complex64)> = Vec::with_capacity(scratch.len());
    for &(row, v) in scratch.iter() {
        match out.last_mut() {
            Some((last, acc)) if *last == row => *acc += v,
            _ => out.push((row, v)),
        }
    }
    out.retain(|&(_, v)| v != ZERO);
    out
}

struct Component {
    rows: Vec<usize>,
    cols: Vec<usize>,
    /// `None` when the component has no nonzero rows.
    svd: Option<ComponentSvd>,
}

struct ComponentSvd {
    u: DMatrix<Complex64>,
    sigma: Vec<f64>,
    v_t: DMatrix<Complex64>,
}

/// SVD of a [`SparseOperator`], one dense factorization per connected component.
pub(crate) struct Decomposition {
    ncols: usize,
    sigma_max: f64,
    components: Vec<Component>,
}

impl Decomposition {
    pub fn new(op: &SparseOperator) -> Self {
        let ncols = op.ncols();
        let mut uf = UnionFind::new(ncols);
        let mut row_owner = vec![usize::MAX; op.nrows];
        for (col, entries) in op.columns.iter().enumerate() {
            for &(row, _) in entries {
                if row_owner[row] == usize::MAX {
                    row_owner[row] = col;
                } else {
                    uf.union(col, row_owner[row]);
                }
            }
        }

        let mut slot = vec![usize::MAX; ncols];
        let mut groups: Vec<(Vec<usize>, Vec<usize>)> = Vec::new();
        for col in 0..ncols {
            let root = uf.find(col);
            if slot[root] == usize::MAX {
                slot[root] = groups.len();
                groups.push((Vec::new(), Vec::new()));
            }
            groups[slot[root]].1.push(col);
        }
        for (row, &owner) in row_owner.iter().enumerate() {
            if owner != usize::MAX {
                groups[slot[uf.find(owner)]].0.push(row);
            }
        }

        let mut sigma_max = 0.0_f64;
        let components = groups
            .into_iter()
            .map(|(rows, cols)| {
                let svd = (!rows.is_empty()).then(|| {
                    let svd = dense_svd(op, &rows, &cols);
                    sigma_max = svd.sigma.iter().copied().fold(sigma_max, f64::max);
                    svd
                });
                Component { rows, cols, svd }
            })
            .collect();
        Self { ncols, sigma_max, components }
    }

    #[cfg(test)]
    pub fn sigma_max(&self) -> f64 {
        self.sigma_max
    }

    fn threshold(&self, rel_tol: f64) -> f64 {
        rel_tol * self.sigma_max
    }

    /// Orthonormal basis of the numerical nullspace.
    pub fn nullspace(&self, rel_tol: f64) -> Vec<DVector<Complex64>> {
        let thr = self.threshold(rel_tol);
        let mut basis = Vec::new();
        for comp in &self.components {
            match &comp.svd {
                None => {
                    for &col in &comp.cols {
                        let mut v = DVector::zeros(self.ncols);
                        v[col] = Complex64::new(1.0, 0.0);
                        basis.push(v);
                    }
                }
                Some(svd) => {
                    for (k, &s) in svd.sigma.iter().enumerate() {
                        if s <= thr {
                            let mut v = DVector::zeros(self.ncols);
                            for (local, &col) in comp.cols.iter().enumerate() {
                                v[col] = svd.v_t[(k, local)].conj();
                            }
                            basis.push(v);
                        }
                    }
                }
            }
        }
        basis
    }

    pub fn nullity(&self, rel_tol: f64) -> usize {
        let thr = self.threshold(rel_tol);
        self.components
            .iter()
            .map(|comp| match &comp.svd {
                None => comp.cols.len(),
                Some(svd) => svd.sigma.iter().filter(|&&s| s <= thr).count(),
            })
            .sum()
    }

    /// Minimum-norm minimizer of `‖A x − rhs‖`.
    pub fn min_norm_solve(&self, rhs: &DVector<Complex64>, rel_tol: f64) -> DVector<Complex64> {
        let thr = self.threshold(rel_tol);
        let mut x = DVector::zeros(self.ncols);
        for comp in &self.components {
            let Some(svd) = &comp.svd else { continue };
            let mut r = DVector::zeros(svd.u.nrows());
            for (local, &row) in comp.rows.iter().enumerate() {
                r[local] = rhs[row];
            }
            for (k, &s) in svd.sigma.iter().enumerate() {
                if s <= thr {
                    continue;
                }
                let coef = svd.u.column(k).dotc(&r) / s;
                for (local, &col) in comp.cols.iter().enumerate() {
                    x[col] += coef * svd.v_t[(k, local)].conj();
                }
            }
        }
        x
    }
}

fn dense_svd(op: &SparseOperator, rows: &[usize], cols: &[usize]) -> ComponentSvd {
    let mut local_row = std::collections::HashMap::with_capacity(rows.len());
    for (k, &row) in rows.iter().enumerate() {
        local_row.insert(row, k);
    }
    // Pad to at least as many rows as columns so V is square.
    let m = rows.len().max(cols.len());
    let mut dense = DMatrix::<Complex64>::zeros(m, cols.len());
    for (lc, &col) in cols.iter().enumerate() {
        for &(row, v) in &op.columns[col] {
            dense[(local_row[&row], lc)] = v;
        }
    }
    let svd = nalgebra::linalg::SVD::new(dense, true, true);
    ComponentSvd {
        u: svd.u.expect("requested U"),
        sigma: svd.singular_values.iter().copied().collect(),
        v_t: svd.v_t.expect("requested V^T"),
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Row-major vectorization of an `n × n` matrix.
pub(crate) fn vectorize(m: &DMatrix<Complex64>) -> DVector<Complex64> {
    let n = m.nrows();
    DVector::from_fn(n * m.ncols(), |k, _| m[(k / n, k % n)])
}

pub(crate) fn unvectorize(n: usize, v: &DVector<Complex64>) -> DMatrix<Complex64> {
    DMatrix::from_fn(n, n, |i, j| v[i * n + j])
}

/// Stacks row-major vectorizations of several `n × n` matrices.
pub(crate) fn stack(ms: &[&DMatrix<Complex64>]) -> DVector<Complex64> {
    let mut out = Vec::with_capacity(ms.iter().map(|m| m.len()).sum());
    for m in ms {
        out.extend(vectorize(m).iter().copied());
    }
    DVector::from_vec(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn random_matrix(n: usize, rng: &mut impl Rng) -> DMatrix<Complex64> {
        DMatrix::from_fn(n, n, |_, _| Complex64::new(rng.random(), rng.random()))
    }

    fn dense(op: &SparseOperator) -> DMatrix<Complex64> {
        let mut d = DMatrix::zeros(op.nrows(), op.ncols());
        for (col, entries) in op.columns.iter().enumerate() {
            for &(row, v) in entries {
                d[(row, col)] = v;
            }
        }
        d
    }

    #[test]
    fn operator_matches_direct_commutators() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 4;
        let p = random_matrix(n, &mut rng);
        let q = random_matrix(n, &mut rng);
        let z = random_matrix(n, &mut rng);
        let op = SparseOperator::commutator_stack(n, &[&p, &q]);
        let got = op.apply(&vectorize(&z));
        let want = stack(&[&(&z * &p - &p * &z), &(&z * &q - &q * &z)]);
        assert!((got - want).norm() < 1e-13);
    }

    #[test]
    fn min_norm_matches_dense_pseudoinverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 3;
        let p = random_matrix(n, &mut rng);
        let mut unit = DMatrix::zeros(n, n);
        unit[(0, 2)] = c(1.0);
        let op = SparseOperator::commutator_stack(n, &[&p, &unit]);
        let rhs = DVector::from_fn(op.nrows(), |_, _| Complex64::new(rng.random(), rng.random()));

        let got = Decomposition::new(&op).min_norm_solve(&rhs, RANK_TOL);
        let pinv = dense(&op).pseudo_inverse(1e-10).unwrap();
        assert!((got - pinv * rhs).norm() < 1e-10);
    }

    #[test]
    fn sparse_operator_splits_into_components() {
        // Commutators with a diagonal matrix never couple distinct entries.
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![c(1.0), c(2.0), c(4.0)]));
        let op = SparseOperator::commutator_stack(3, &[&d]);
        let dec = Decomposition::new(&op);
        assert_eq!(dec.components.len(), 9);
        // Diagonal entries commute with d.
        assert_eq!(dec.nullity(RANK_TOL), 3);
    }

    #[test]
    fn zero_operator_has_full_nullspace() {
        let z = DMatrix::zeros(2, 2);
        let op = SparseOperator::commutator_stack(2, &[&z]);
        let dec = Decomposition::new(&op);
        assert_eq!(dec.sigma_max(), 0.0);
        assert_eq!(dec.nullspace(RANK_TOL).len(), 4);
        let x = dec.min_norm_solve(&DVector::zeros(4), RANK_TOL);
        assert_eq!(x.norm(), 0.0);
    }

    #[test]
    fn nullspace_vectors_are_orthonormal_and_annihilated() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 4;
        let p = random_matrix(n, &mut rng);
        let op = SparseOperator::commutator_stack(n, &[&p]);
        let basis = Decomposition::new(&op).nullspace(RANK_TOL);
        // A generic matrix commutes only with polynomials in itself.
        assert_eq!(basis.len(), n);
        for (a, u) in basis.iter().enumerate() {
            assert!(op.apply(u).norm() < 1e-10);
            for (b, v) in basis.iter().enumerate() {
                let ip = u.dotc(v).norm();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((ip - want).abs() < 1e-10);
            }
        }
    }
}
