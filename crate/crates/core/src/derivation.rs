//! Inner derivations and sampling checks for the derivation identities.
//!
//! Every checker evaluates a polynomial identity on random probes and reports the
//! worst residual. The absolute tolerance is `tol · (1 + max input norm)²`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::algebra::{AlgebraShape, BlockMatrix};
use crate::error::{Error, Result};

pub const DEFAULT_PROBES: usize = 100;
pub const DEFAULT_TOL: f64 = 1e-9;

/// A map on a finite direct sum, evaluable at any element of its shape.
///
/// Implementations must be pure so that probes can be evaluated concurrently.
pub trait AlgebraMap: Sync {
    fn shape(&self) -> &AlgebraShape;

    fn evaluate(&self, x: &BlockMatrix) -> Result<BlockMatrix>;
}

impl<M: AlgebraMap + ?Sized> AlgebraMap for &M {
    fn shape(&self) -> &AlgebraShape {
        (**self).shape()
    }

    fn evaluate(&self, x: &BlockMatrix) -> Result<BlockMatrix> {
        (**self).evaluate(x)
    }
}

impl<M: AlgebraMap + ?Sized + Send> AlgebraMap for Box<M> {
    fn shape(&self) -> &AlgebraShape {
        (**self).shape()
    }

    fn evaluate(&self, x: &BlockMatrix) -> Result<BlockMatrix> {
        (**self).evaluate(x)
    }
}

pub(crate) fn check_input(shape: &AlgebraShape, x: &BlockMatrix) -> Result<()> {
    if x.shape() != shape {
        return Err(Error::ShapeMismatch(format!("map on {shape} applied to element of {}", x.shape())));
    }
    Ok(())
}

/// `x ↦ a·x − x·a`.
#[derive(Clone, Debug)]
pub struct InnerDerivation {
    a: BlockMatrix,
}

impl InnerDerivation {
    pub fn element(&self) -> &BlockMatrix {
        &self.a
    }
}

pub fn inner_derivation(a: &BlockMatrix) -> InnerDerivation {
    InnerDerivation { a: a.clone() }
}

impl AlgebraMap for InnerDerivation {
    fn shape(&self) -> &AlgebraShape {
        self.a.shape()
    }

    fn evaluate(&self, x: &BlockMatrix) -> Result<BlockMatrix> {
        self.a.commutator(x)
    }
}

/// Wraps a closure as an [`AlgebraMap`].
pub struct FnMap<F> {
    shape: AlgebraShape,
    f: F,
}

impl<F> FnMap<F>
where
    F: Fn(&BlockMatrix) -> BlockMatrix + Sync,
{
    pub fn new(shape: &AlgebraShape, f: F) -> Self {
        Self { shape: shape.clone(), f }
    }
}

impl<F> AlgebraMap for FnMap<F>
where
    F: Fn(&BlockMatrix) -> BlockMatrix + Sync,
{
    fn shape(&self) -> &AlgebraShape {
        &self.shape
    }

    fn evaluate(&self, x: &BlockMatrix) -> Result<BlockMatrix> {
        check_input(&self.shape, x)?;
        Ok((self.f)(x))
    }
}

pub fn zero_map(shape: &AlgebraShape) -> FnMap<impl Fn(&BlockMatrix) -> BlockMatrix + Sync> {
    let s = shape.clone();
    FnMap::new(shape, move |_| BlockMatrix::zeros(&s))
}

pub fn identity_map(shape: &AlgebraShape) -> FnMap<impl Fn(&BlockMatrix) -> BlockMatrix + Sync> {
    FnMap::new(shape, |x| x.clone())
}

/// Outcome of one sampled identity check.
#[derive(Clone, Debug, Serialize)]
pub struct LinearMapProbeReport {
    pub check: String,
    pub max_residual: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// The probe attaining `max_residual`.
    pub witness: Option<String>,
}

impl LinearMapProbeReport {
    fn build(check: &str, tol: f64, max_input_norm: f64, worst: Option<(f64, String)>) -> Self {
        let tolerance = tol * (1.0 + max_input_norm).powi(2);
        let (max_residual, witness) = match worst {
            Some((r, w)) => (r, Some(w)),
            None => (0.0, None),
        };
        Self {
            check: check.to_string(),
            max_residual,
            tolerance,
            // NaN residuals fail.
            pass: max_residual <= tolerance,
            witness,
        }
    }
}

/// Evaluates `residual(k)` over all probes and keeps the worst one; ties go to the
/// lowest index so reports do not depend on scheduling.
fn worst_probe<F>(count: usize, residual: F) -> Result<Option<(f64, usize)>>
where
    F: Fn(usize) -> Result<f64> + Sync,
{
    let residuals: Vec<f64> = (0..count).into_par_iter().map(&residual).collect::<Result<_>>()?;
    let mut worst: Option<(f64, usize)> = None;
    for (k, r) in residuals.into_iter().enumerate() {
        let replace = match worst {
            None => true,
            // A NaN residual is the worst possible outcome and sticks.
            Some((w, _)) => !w.is_nan() && (r.is_nan() || r > w),
        };
        if replace {
            worst = Some((r, k));
        }
    }
    Ok(worst)
}

fn require_probes(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::IncompleteProbes("at least one probe is required".into()));
    }
    Ok(())
}

/// Residual `Δ(x+y) − Δ(x) − Δ(y)`.
pub fn check_additive<M: AlgebraMap + ?Sized>(
    map: &M,
    probes: &[(BlockMatrix, BlockMatrix)],
    tol: f64,
) -> Result<LinearMapProbeReport> {
    require_probes(probes.len())?;
    let mut max_norm = 0.0_f64;
    for (x, y) in probes {
        check_input(map.shape(), x)?;
        check_input(map.shape(), y)?;
        max_norm = max_norm.max(x.norm()).max(y.norm()).max(x.add(y)?.norm());
    }
    let worst = worst_probe(probes.len(), |k| {
        let (x, y) = &probes[k];
        let lhs = map.evaluate(&x.add(y)?)?;
        let rhs = map.evaluate(x)?.add(&map.evaluate(y)?)?;
        Ok(lhs.sub(&rhs)?.norm())
    })?;
    Ok(LinearMapProbeReport::build(
        "additive",
        tol,
        max_norm,
        worst.map(|(r, k)| (r, format!("pair {k}"))),
    ))
}

/// Residual `Δ(λx) − λΔ(x)`.
pub fn check_homogeneous<M: AlgebraMap + ?Sized>(
    map: &M,
    probes: &[(Complex64, BlockMatrix)],
    tol: f64,
) -> Result<LinearMapProbeReport> {
    require_probes(probes.len())?;
    let mut max_norm = 0.0_f64;
    for (lambda, x) in probes {
        check_input(map.shape(), x)?;
        max_norm = max_norm.max(x.norm()).max(x.norm() * lambda.norm());
    }
    let worst = worst_probe(probes.len(), |k| {
        let (lambda, x) = &probes[k];
        let lhs = map.evaluate(&x.scale(*lambda))?;
        let rhs = map.evaluate(x)?.scale(*lambda);
        Ok(lhs.sub(&rhs)?.norm())
    })?;
    Ok(LinearMapProbeReport::build(
        "homogeneous",
        tol,
        max_norm,
        worst.map(|(r, k)| (r, format!("probe {k} (lambda = {})", probes[k].0))),
    ))
}

/// Residual `Δ(x²) − Δ(x)x − xΔ(x)`.
pub fn check_jordan<M: AlgebraMap + ?Sized>(map: &M, probes: &[BlockMatrix], tol: f64) -> Result<LinearMapProbeReport> {
    require_probes(probes.len())?;
    let mut max_norm = 0.0_f64;
    for x in probes {
        check_input(map.shape(), x)?;
        max_norm = max_norm.max(x.norm());
    }
    let worst = worst_probe(probes.len(), |k| {
        let x = &probes[k];
        let dx = map.evaluate(x)?;
        let lhs = map.evaluate(&x.multiply(x)?)?;
        let rhs = dx.multiply(x)?.add(&x.multiply(&dx)?)?;
        Ok(lhs.sub(&rhs)?.norm())
    })?;
    Ok(LinearMapProbeReport::build(
        "jordan",
        tol,
        max_norm,
        worst.map(|(r, k)| (r, format!("probe {k}"))),
    ))
}

/// Residual `Δ(xy) − Δ(x)y − xΔ(y)`.
pub fn check_leibniz<M: AlgebraMap + ?Sized>(
    map: &M,
    probes: &[(BlockMatrix, BlockMatrix)],
    tol: f64,
) -> Result<LinearMapProbeReport> {
    require_probes(probes.len())?;
    let mut max_norm = 0.0_f64;
    for (x, y) in probes {
        check_input(map.shape(), x)?;
        check_input(map.shape(), y)?;
        max_norm = max_norm.max(x.norm()).max(y.norm());
    }
    let worst = worst_probe(probes.len(), |k| {
        let (x, y) = &probes[k];
        let lhs = map.evaluate(&x.multiply(y)?)?;
        let rhs = map.evaluate(x)?.multiply(y)?.add(&x.multiply(&map.evaluate(y)?)?)?;
        Ok(lhs.sub(&rhs)?.norm())
    })?;
    Ok(LinearMapProbeReport::build(
        "leibniz",
        tol,
        max_norm,
        worst.map(|(r, k)| (r, format!("pair {k}"))),
    ))
}

/// Seeded random probes for the four checks.
#[derive(Clone, Debug)]
pub struct RandomProbes {
    pub singles: Vec<BlockMatrix>,
    pub pairs: Vec<(BlockMatrix, BlockMatrix)>,
    pub scaled: Vec<(Complex64, BlockMatrix)>,
}

impl RandomProbes {
    pub fn generate(shape: &AlgebraShape, count: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let singles = (0..count).map(|_| BlockMatrix::random(shape, &mut rng)).collect();
        let pairs = (0..count)
            .map(|_| (BlockMatrix::random(shape, &mut rng), BlockMatrix::random(shape, &mut rng)))
            .collect();
        let scaled = (0..count)
            .map(|_| {
                let lambda = Complex64::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
                (lambda, BlockMatrix::random(shape, &mut rng))
            })
            .collect();
        Self { singles, pairs, scaled }
    }
}

/// Runs additive, homogeneous, Jordan and Leibniz checks, in that order.
pub fn check_all<M: AlgebraMap + ?Sized>(map: &M, probes: &RandomProbes, tol: f64) -> Result<Vec<LinearMapProbeReport>> {
    Ok(vec![
        check_additive(map, &probes.pairs, tol)?,
        check_homogeneous(map, &probes.scaled, tol)?,
        check_jordan(map, &probes.singles, tol)?,
        check_leibniz(map, &probes.pairs, tol)?,
    ])
}
