//! Finite models of `C(X) ⊗ M_n(C)` and their direct sums.
//!
//! `X` is a finite set of points, so an element of `C(X) ⊗ M_n` is stored as one
//! `n × n` complex matrix per point (a "fiber"). A [`BlockMatrix`] is a direct sum
//! of such elements, one per block of the [`AlgebraShape`]. All products are taken
//! pointwise over `X` and blockwise over the sum.

use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// A complex-valued function on the finite point set `X`.
#[derive(Clone, Debug, PartialEq)]
pub struct CFunction {
    values: Vec<Complex64>,
}

impl CFunction {
    pub fn new(values: Vec<Complex64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidShape("a function needs at least one point".into()));
        }
        if values.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { values })
    }

    pub fn constant(points: usize, value: Complex64) -> Self {
        Self { values: vec![value; points.max(1)] }
    }

    pub fn zero(points: usize) -> Self {
        Self::constant(points, ZERO)
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn points(&self) -> usize {
        self.values.len()
    }

    pub fn at(&self, point: usize) -> Complex64 {
        self.values[point]
    }

    /// Largest pointwise modulus.
    pub fn sup_abs(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn sub(&self, other: &CFunction) -> Result<CFunction> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &CFunction) -> Result<CFunction> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn neg(&self) -> CFunction {
        CFunction { values: self.values.iter().map(|z| -z).collect() }
    }

    fn zip_with(&self, other: &CFunction, f: impl Fn(Complex64, Complex64) -> Complex64) -> Result<CFunction> {
        if self.points() != other.points() {
            return Err(Error::ShapeMismatch(format!(
                "functions on {} and {} points",
                self.points(),
                other.points()
            )));
        }
        Ok(CFunction {
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        })
    }
}

/// Index data of a direct sum `Σ_j C(X) ⊗ M_{n_j}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawShape")]
pub struct AlgebraShape {
    points: usize,
    dims: Vec<usize>,
}

#[derive(Deserialize)]
struct RawShape {
    points: usize,
    dims: Vec<usize>,
}

impl TryFrom<RawShape> for AlgebraShape {
    type Error = Error;

    fn try_from(raw: RawShape) -> Result<Self> {
        AlgebraShape::new(raw.points, raw.dims)
    }
}

impl AlgebraShape {
    pub fn new(points: usize, dims: Vec<usize>) -> Result<Self> {
        if points == 0 {
            return Err(Error::InvalidShape("point count must be at least 1".into()));
        }
        if dims.is_empty() {
            return Err(Error::InvalidShape("at least one block is required".into()));
        }
        if let Some(pos) = dims.iter().position(|&n| n == 0) {
            return Err(Error::InvalidShape(format!("block {pos} has dimension 0")));
        }
        Ok(Self { points, dims })
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn block_count(&self) -> usize {
        self.dims.len()
    }

    pub fn dim(&self, block: usize) -> usize {
        self.dims[block]
    }

    /// Complex dimension of the whole algebra, `|X| · Σ n_j²`, saturating at `usize::MAX`.
    pub fn algebra_dimension(&self) -> usize {
        let per_point = self.dims.iter().fold(0usize, |acc, n| acc.saturating_add(n.saturating_mul(*n)));
        self.points.saturating_mul(per_point)
    }

    /// Complex dimension of the center, `|X| · (number of blocks)`.
    pub fn center_dimension(&self) -> usize {
        self.points.saturating_mul(self.dims.len())
    }

    pub(crate) fn check_block(&self, block: usize) -> Result<()> {
        if block >= self.dims.len() {
            return Err(Error::IndexOutOfRange(format!(
                "block {block} of {}",
                self.dims.len()
            )));
        }
        Ok(())
    }

    pub(crate) fn check_entry(&self, block: usize, i: usize, j: usize) -> Result<()> {
        self.check_block(block)?;
        let n = self.dims[block];
        if i >= n || j >= n {
            return Err(Error::IndexOutOfRange(format!(
                "entry ({i},{j}) of block {block} with dimension {n}"
            )));
        }
        Ok(())
    }
}

impl fmt::Display for AlgebraShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "|X|={} dims={:?}", self.points, self.dims)
    }
}

/// One summand `C(X) ⊗ M_n`: an `n × n` matrix per point of `X`.
#[derive(Clone, Debug, PartialEq)]
pub struct FnMatrix {
    n: usize,
    fibers: Vec<DMatrix<Complex64>>,
}

impl FnMatrix {
    pub fn zeros(n: usize, points: usize) -> Self {
        Self { n, fibers: vec![DMatrix::zeros(n, n); points] }
    }

    pub fn identity(n: usize, points: usize) -> Self {
        Self { n, fibers: vec![DMatrix::identity(n, n); points] }
    }

    /// Builds from per-point matrices, which must all be `n × n` and finite.
    pub fn from_fibers(fibers: Vec<DMatrix<Complex64>>) -> Result<Self> {
        let Some(first) = fibers.first() else {
            return Err(Error::InvalidShape("a matrix needs at least one point".into()));
        };
        let n = first.nrows();
        if n == 0 {
            return Err(Error::InvalidShape("matrix dimension must be positive".into()));
        }
        for (p, m) in fibers.iter().enumerate() {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::ShapeMismatch(format!(
                    "fiber {p} is {}x{}, expected {n}x{n}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::NonFinite);
            }
        }
        Ok(Self { n, fibers })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn points(&self) -> usize {
        self.fibers.len()
    }

    pub fn fiber(&self, point: usize) -> &DMatrix<Complex64> {
        &self.fibers[point]
    }

    pub fn fibers(&self) -> &[DMatrix<Complex64>] {
        &self.fibers
    }

    pub(crate) fn fibers_mut(&mut self) -> &mut [DMatrix<Complex64>] {
        &mut self.fibers
    }

    /// The coefficient function at position `(i, j)`.
    pub fn entry(&self, i: usize, j: usize) -> CFunction {
        CFunction { values: self.fibers.iter().map(|m| m[(i, j)]).collect() }
    }

    pub fn set_entry(&mut self, i: usize, j: usize, f: &CFunction) {
        for (m, &z) in self.fibers.iter_mut().zip(f.values()) {
            m[(i, j)] = z;
        }
    }

    fn zip_map(
        &self,
        other: &FnMatrix,
        f: impl Fn(&DMatrix<Complex64>, &DMatrix<Complex64>) -> DMatrix<Complex64>,
    ) -> FnMatrix {
        FnMatrix {
            n: self.n,
            fibers: self.fibers.iter().zip(&other.fibers).map(|(a, b)| f(a, b)).collect(),
        }
    }

    /// Frobenius norm at each point.
    pub fn pointwise_frobenius(&self) -> Vec<f64> {
        self.fibers.iter().map(|m| m.norm()).collect()
    }
}

/// An element of the direct sum `Σ_j C(X) ⊗ M_{n_j}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "crate::format::MatrixDoc", into = "crate::format::MatrixDoc")]
pub struct BlockMatrix {
    shape: AlgebraShape,
    blocks: Vec<FnMatrix>,
}

impl BlockMatrix {
    pub fn zeros(shape: &AlgebraShape) -> Self {
        let blocks = shape.dims.iter().map(|&n| FnMatrix::zeros(n, shape.points)).collect();
        Self { shape: shape.clone(), blocks }
    }

    pub fn identity(shape: &AlgebraShape) -> Self {
        let blocks = shape.dims.iter().map(|&n| FnMatrix::identity(n, shape.points)).collect();
        Self { shape: shape.clone(), blocks }
    }

    /// Assembles blocks, checking them against `shape`.
    pub fn from_blocks(shape: &AlgebraShape, blocks: Vec<FnMatrix>) -> Result<Self> {
        if blocks.len() != shape.block_count() {
            return Err(Error::ShapeMismatch(format!(
                "{} blocks given for shape {shape}",
                blocks.len()
            )));
        }
        for (b, (block, &n)) in blocks.iter().zip(&shape.dims).enumerate() {
            if block.n() != n || block.points() != shape.points {
                return Err(Error::ShapeMismatch(format!(
                    "block {b} is {}x{} on {} points, shape {shape} wants {n}x{n}",
                    block.n(),
                    block.n(),
                    block.points()
                )));
            }
        }
        Ok(Self { shape: shape.clone(), blocks })
    }

    /// Builds an element entrywise from `f(block, point, i, j)`.
    pub fn from_fn(shape: &AlgebraShape, mut f: impl FnMut(usize, usize, usize, usize) -> Complex64) -> Self {
        let blocks = shape
            .dims
            .iter()
            .enumerate()
            .map(|(b, &n)| FnMatrix {
                n,
                fibers: (0..shape.points)
                    .map(|p| DMatrix::from_fn(n, n, |i, j| f(b, p, i, j)))
                    .collect(),
            })
            .collect();
        Self { shape: shape.clone(), blocks }
    }

    /// Entries drawn independently and uniformly from the complex unit square
    /// `[0,1) + i[0,1)`.
    pub fn random<R: Rng + ?Sized>(shape: &AlgebraShape, rng: &mut R) -> Self {
        Self::from_fn(shape, |_, _, _, _| Complex64::new(rng.random::<f64>(), rng.random::<f64>()))
    }

    pub fn shape(&self) -> &AlgebraShape {
        &self.shape
    }

    pub fn block(&self, block: usize) -> &FnMatrix {
        &self.blocks[block]
    }

    pub fn blocks(&self) -> &[FnMatrix] {
        &self.blocks
    }

    pub(crate) fn blocks_mut(&mut self) -> &mut [FnMatrix] {
        &mut self.blocks
    }

    pub fn get(&self, block: usize, point: usize, i: usize, j: usize) -> Complex64 {
        self.blocks[block].fibers[point][(i, j)]
    }

    pub fn set(&mut self, block: usize, point: usize, i: usize, j: usize, value: Complex64) {
        self.blocks[block].fibers[point][(i, j)] = value;
    }

    fn ensure_same_shape(&self, other: &BlockMatrix) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch(format!("{} vs {}", self.shape, other.shape)));
        }
        Ok(())
    }

    fn zip_map(
        &self,
        other: &BlockMatrix,
        f: impl Fn(&DMatrix<Complex64>, &DMatrix<Complex64>) -> DMatrix<Complex64> + Copy,
    ) -> Result<BlockMatrix> {
        self.ensure_same_shape(other)?;
        Ok(BlockMatrix {
            shape: self.shape.clone(),
            blocks: self.blocks.iter().zip(&other.blocks).map(|(a, b)| a.zip_map(b, f)).collect(),
        })
    }

    pub fn add(&self, other: &BlockMatrix) -> Result<BlockMatrix> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &BlockMatrix) -> Result<BlockMatrix> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, lambda: Complex64) -> BlockMatrix {
        let mut out = self.clone();
        for block in &mut out.blocks {
            for m in &mut block.fibers {
                *m *= lambda;
            }
        }
        out
    }

    /// Pointwise, blockwise matrix product.
    pub fn multiply(&self, other: &BlockMatrix) -> Result<BlockMatrix> {
        self.zip_map(other, |a, b| a * b)
    }

    /// `self · x − x · self`.
    pub fn commutator(&self, x: &BlockMatrix) -> Result<BlockMatrix> {
        self.zip_map(x, |a, x| a * x - x * a)
    }

    /// Maximum over points and blocks of the pointwise Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.blocks
            .iter()
            .flat_map(|b| b.fibers.iter().map(|m| m.norm()))
            .fold(0.0, f64::max)
    }

    /// Frobenius norm of the whole element, treating all points and blocks as one vector.
    pub fn total_frobenius(&self) -> f64 {
        self.blocks
            .iter()
            .flat_map(|b| b.fibers.iter().map(|m| m.norm_squared()))
            .sum::<f64>()
            .sqrt()
    }

    /// Keeps block `j` and zeroes every other block, i.e. `z_j · self`.
    pub fn restrict_to_block(&self, j: usize) -> Result<BlockMatrix> {
        self.shape.check_block(j)?;
        let mut out = BlockMatrix::zeros(&self.shape);
        out.blocks[j] = self.blocks[j].clone();
        Ok(out)
    }
}

/// The matrix unit `e_ij` of one block: constant 1 at `(i, j)`, zero elsewhere.
pub fn matrix_unit(shape: &AlgebraShape, block: usize, i: usize, j: usize) -> Result<BlockMatrix> {
    shape.check_entry(block, i, j)?;
    let mut m = BlockMatrix::zeros(shape);
    for fiber in &mut m.blocks[block].fibers {
        fiber[(i, j)] = ONE;
    }
    Ok(m)
}

/// Every matrix unit of every block, tagged with `(block, i, j)`.
pub fn all_matrix_units(shape: &AlgebraShape) -> Vec<((usize, usize, usize), BlockMatrix)> {
    let mut out = Vec::new();
    for (b, &n) in shape.dims().iter().enumerate() {
        for i in 0..n {
            for j in 0..n {
                let e = matrix_unit(shape, b, i, j).expect("indices are in range");
                out.push(((b, i, j), e));
            }
        }
    }
    out
}

pub fn add(a: &BlockMatrix, b: &BlockMatrix) -> Result<BlockMatrix> {
    a.add(b)
}

pub fn scale(lambda: Complex64, a: &BlockMatrix) -> BlockMatrix {
    a.scale(lambda)
}

pub fn multiply(a: &BlockMatrix, b: &BlockMatrix) -> Result<BlockMatrix> {
    a.multiply(b)
}

pub fn commutator(a: &BlockMatrix, x: &BlockMatrix) -> Result<BlockMatrix> {
    a.commutator(x)
}

/// Coefficient `c` with `e_ii · m · e_jj = c · e_ij` in the named block.
pub fn peirce(m: &BlockMatrix, block: usize, i: usize, j: usize) -> Result<CFunction> {
    m.shape.check_entry(block, i, j)?;
    Ok(m.blocks[block].entry(i, j))
}

/// Projection onto the center: `(tr/n) · 1` per block and per point.
pub fn center_project(m: &BlockMatrix) -> BlockMatrix {
    let mut out = m.clone();
    for block in &mut out.blocks {
        let n = block.n;
        for fiber in &mut block.fibers {
            let mean = fiber.trace() / n as f64;
            *fiber = DMatrix::from_diagonal_element(n, n, mean);
        }
    }
    out
}

pub fn norm(m: &BlockMatrix) -> f64 {
    m.norm()
}

/// Central projection `z_j`: the identity of block `j`, zero elsewhere.
pub fn block_unit(shape: &AlgebraShape, j: usize) -> Result<BlockMatrix> {
    shape.check_block(j)?;
    let mut m = BlockMatrix::zeros(shape);
    m.blocks[j] = FnMatrix::identity(shape.dims[j], shape.points);
    Ok(m)
}

/// Embeds a single summand as the `j`-th component of the direct sum.
pub fn embed_block(shape: &AlgebraShape, j: usize, x: &FnMatrix) -> Result<BlockMatrix> {
    shape.check_block(j)?;
    if x.n() != shape.dims[j] || x.points() != shape.points {
        return Err(Error::ShapeMismatch(format!(
            "cannot embed a {}x{} matrix on {} points as block {j} of {shape}",
            x.n(),
            x.n(),
            x.points()
        )));
    }
    let mut m = BlockMatrix::zeros(shape);
    m.blocks[j] = x.clone();
    Ok(m)
}
