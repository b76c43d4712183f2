//! 2-local derivations: generators, joint commutants and pair solves.
//!
//! A map `Δ` is a 2-local derivation when every pair `(x, y)` admits some element
//! `a_{x,y}` with `Δ(x) = a_{x,y}x − xa_{x,y}` and `Δ(y) = a_{x,y}y − ya_{x,y}`.
//! The element is only determined modulo the joint commutant of `x` and `y`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::algebra::{embed_block, AlgebraShape, BlockMatrix, FnMatrix};
use crate::derivation::{check_input, AlgebraMap};
use crate::error::{Error, Result};
use crate::linalg::{self, Decomposition, SparseOperator, RANK_TOL};

/// Ways a generated map can break the 2-local promise.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BrokenKind {
    /// Adds a fixed nonzero element to an inner derivation.
    Offset,
    /// Uses an implementing element that depends nonlinearly on the input.
    ElementDependent,
    /// Leaks block `k` into block `j ≠ k`.
    Blockmix,
}

impl BrokenKind {
    pub const ALL: [BrokenKind; 3] = [BrokenKind::Offset, BrokenKind::ElementDependent, BrokenKind::Blockmix];

    pub fn name(self) -> &'static str {
        match self {
            BrokenKind::Offset => "offset",
            BrokenKind::ElementDependent => "element-dependent",
            BrokenKind::Blockmix => "blockmix",
        }
    }

    /// Whether a map of this kind can be built on `shape`.
    pub fn supports(self, shape: &AlgebraShape) -> bool {
        match self {
            BrokenKind::Offset => true,
            BrokenKind::ElementDependent => shape.dims().iter().any(|&n| n >= 2),
            BrokenKind::Blockmix => shape.block_count() >= 2,
        }
    }
}

impl std::str::FromStr for BrokenKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BrokenKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown broken kind {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "provenance", content = "kind")]
pub enum Provenance {
    Honest,
    NoisyWitness,
    Broken(BrokenKind),
}

#[derive(Clone, Debug)]
enum Behavior {
    Inner,
    Offset { offset: BlockMatrix },
    ElementDependent { direction: BlockMatrix, weight: BlockMatrix },
    Blockmix { source: usize, target: usize, leak: FnMatrix },
}

/// A generated map on a direct sum, built around a hidden element `a`.
///
/// Consumers that only need values should go through [`AlgebraMap::evaluate`];
/// [`TwoLocalMap::witness`] and [`TwoLocalMap::hidden_element`] exist for tests
/// and oracle comparisons.
#[derive(Clone, Debug)]
pub struct TwoLocalMap {
    hidden: BlockMatrix,
    behavior: Behavior,
    provenance: Provenance,
    seed: u64,
}

impl TwoLocalMap {
    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn hidden_element(&self) -> &BlockMatrix {
        &self.hidden
    }

    /// An element implementing `Δ` at both `x` and `y`.
    ///
    /// Broken maps have no witness and return `Ok(None)`.
    pub fn witness(&self, x: &BlockMatrix, y: &BlockMatrix) -> Result<Option<BlockMatrix>> {
        check_input(self.hidden.shape(), x)?;
        check_input(self.hidden.shape(), y)?;
        match self.provenance {
            Provenance::Honest => Ok(Some(self.hidden.clone())),
            Provenance::NoisyWitness => {
                let basis = commutant_basis(x, y, RANK_TOL)?;
                let mut rng = ChaCha8Rng::seed_from_u64(pair_seed(self.seed, x, y));
                let mut w = self.hidden.clone();
                for z in &basis.basis {
                    let phase = rng.random_range(0.0..std::f64::consts::TAU);
                    w = w.add(&z.scale(Complex64::from_polar(1.0, phase)))?;
                }
                Ok(Some(w))
            }
            Provenance::Broken(_) => Ok(None),
        }
    }
}

impl AlgebraMap for TwoLocalMap {
    fn shape(&self) -> &AlgebraShape {
        self.hidden.shape()
    }

    fn evaluate(&self, x: &BlockMatrix) -> Result<BlockMatrix> {
        check_input(self.hidden.shape(), x)?;
        let base = self.hidden.commutator(x)?;
        match &self.behavior {
            Behavior::Inner => Ok(base),
            Behavior::Offset { offset } => base.add(offset),
            Behavior::ElementDependent { direction, weight } => {
                let h = frobenius_inner(weight, x).norm_sqr();
                base.add(&direction.scale(Complex64::new(h, 0.0)).commutator(x)?)
            }
            Behavior::Blockmix { source, target, leak } => {
                let mut leaked = leak.clone();
                let src = x.block(*source);
                for (fiber, xs) in leaked.fibers_mut().iter_mut().zip(src.fibers()) {
                    *fiber *= xs.trace();
                }
                base.add(&embed_block(x.shape(), *target, &leaked)?)
            }
        }
    }
}

fn frobenius_inner(a: &BlockMatrix, b: &BlockMatrix) -> Complex64 {
    a.blocks()
        .iter()
        .zip(b.blocks())
        .flat_map(|(ba, bb)| ba.fibers().iter().zip(bb.fibers()))
        .map(|(fa, fb)| fa.dotc(fb))
        .sum()
}

fn splitmix(state: u64, word: u64) -> u64 {
    let mut z = (state ^ word).wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic per-pair seed, independent of evaluation order and toolchain.
fn pair_seed(seed: u64, x: &BlockMatrix, y: &BlockMatrix) -> u64 {
    let mut h = splitmix(0, seed);
    for m in [x, y] {
        for block in m.blocks() {
            for fiber in block.fibers() {
                for z in fiber.iter() {
                    h = splitmix(h, z.re.to_bits());
                    h = splitmix(h, z.im.to_bits());
                }
            }
        }
    }
    h
}

/// `Δ = [a, ·]` with the constant witness `a`.
pub fn make_honest(a: &BlockMatrix) -> TwoLocalMap {
    TwoLocalMap { hidden: a.clone(), behavior: Behavior::Inner, provenance: Provenance::Honest, seed: 0 }
}

/// `Δ = [a, ·]`, but each pair's witness is `a` plus unit-scale joint-commutant noise.
pub fn make_noisy_witness(a: &BlockMatrix, seed: u64) -> TwoLocalMap {
    TwoLocalMap { hidden: a.clone(), behavior: Behavior::Inner, provenance: Provenance::NoisyWitness, seed }
}

/// A map that violates the 2-local promise in the way named by `kind`.
///
/// `element-dependent` needs a block of dimension at least 2 and `blockmix`
/// needs at least two blocks.
pub fn make_broken(kind: BrokenKind, seed: u64, shape: &AlgebraShape) -> Result<TwoLocalMap> {
    if !kind.supports(shape) {
        return Err(Error::UnsupportedGenerator(format!("{} on {shape}", kind.name())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hidden = BlockMatrix::random(shape, &mut rng);
    let behavior = match kind {
        BrokenKind::Offset => {
            // Pin one entry so the offset is nonzero.
            let mut offset = BlockMatrix::random(shape, &mut rng);
            offset.set(0, 0, 0, 0, Complex64::new(1.0, 0.0));
            Behavior::Offset { offset }
        }
        BrokenKind::ElementDependent => Behavior::ElementDependent {
            direction: BlockMatrix::random(shape, &mut rng),
            weight: BlockMatrix::random(shape, &mut rng),
        },
        BrokenKind::Blockmix => {
            let blocks = shape.block_count();
            let source = rng.random_range(0..blocks);
            let target = (source + rng.random_range(1..blocks)) % blocks;
            let leak = BlockMatrix::random(shape, &mut rng).block(target).clone();
            Behavior::Blockmix { source, target, leak }
        }
    };
    Ok(TwoLocalMap { hidden, behavior, provenance: Provenance::Broken(kind), seed })
}

/// Generator selector shared by scenario descriptors and the CLI.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Generator {
    Honest,
    Noisy,
    Broken(BrokenKind),
}

impl Generator {
    pub fn build(self, shape: &AlgebraShape, seed: u64) -> Result<TwoLocalMap> {
        match self {
            Generator::Honest => Ok(make_honest(&hidden_element(shape, seed))),
            Generator::Noisy => Ok(make_noisy_witness(&hidden_element(shape, seed), seed)),
            Generator::Broken(kind) => make_broken(kind, seed, shape),
        }
    }

    pub fn is_broken(self) -> bool {
        matches!(self, Generator::Broken(_))
    }

    pub fn name(self) -> String {
        match self {
            Generator::Honest => "honest".into(),
            Generator::Noisy => "noisy".into(),
            Generator::Broken(kind) => format!("broken:{}", kind.name()),
        }
    }
}

impl std::str::FromStr for Generator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "honest" => Ok(Generator::Honest),
            "noisy" | "noisy-witness" => Ok(Generator::Noisy),
            _ => match s.strip_prefix("broken:") {
                Some(kind) => Ok(Generator::Broken(kind.parse()?)),
                None => Err(Error::Config(format!("unknown generator {s:?}"))),
            },
        }
    }
}

impl Serialize for Generator {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.name())
    }
}

impl<'de> Deserialize<'de> for Generator {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl std::fmt::Display for Generator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.name())
    }
}

/// The hidden element used by honest and noisy generators for a given seed.
pub fn hidden_element(shape: &AlgebraShape, seed: u64) -> BlockMatrix {
    BlockMatrix::random(shape, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Scenario descriptor document:
/// `{"shape": {...}, "generator": "honest"|"noisy"|"broken", "kind": ..., "seed": ...}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDescriptor {
    pub shape: AlgebraShape,
    pub generator: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<BrokenKind>,
    pub seed: u64,
    /// Hidden element, filled in when a fixture is written.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden: Option<BlockMatrix>,
}

impl ScenarioDescriptor {
    pub fn new(shape: &AlgebraShape, generator: Generator, seed: u64) -> Self {
        let (generator, kind) = match generator {
            Generator::Honest => ("honest", None),
            Generator::Noisy => ("noisy", None),
            Generator::Broken(kind) => ("broken", Some(kind)),
        };
        Self { shape: shape.clone(), generator: generator.into(), kind, seed, hidden: None }
    }

    pub fn generator(&self) -> Result<Generator> {
        match (self.generator.as_str(), self.kind) {
            ("honest", None) => Ok(Generator::Honest),
            ("noisy", None) => Ok(Generator::Noisy),
            ("broken", Some(kind)) => Ok(Generator::Broken(kind)),
            ("broken", None) => Err(Error::Config("broken generator needs a kind".into())),
            (g @ ("honest" | "noisy"), Some(_)) => Err(Error::Config(format!("generator {g} takes no kind"))),
            (g, _) => Err(Error::Config(format!("unknown generator {g:?}"))),
        }
    }

    pub fn build(&self) -> Result<TwoLocalMap> {
        let map = self.generator()?.build(&self.shape, self.seed)?;
        if let Some(hidden) = &self.hidden {
            if hidden != map.hidden_element() {
                return Err(Error::Config("fixture hidden element does not match its seed".into()));
            }
        }
        Ok(map)
    }

    pub fn with_hidden(mut self) -> Result<Self> {
        self.hidden = Some(self.build()?.hidden_element().clone());
        Ok(self)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let d: Self = serde_json::from_str(text)?;
        d.generator()?;
        Ok(d)
    }
}

/// Basis of `{z : zu = uz, zv = vz}`.
#[derive(Clone, Debug)]
pub struct CommutantBasis {
    pub pair: (BlockMatrix, BlockMatrix),
    /// Orthonormal in the total Frobenius inner product; each element lives on a
    /// single point of a single block.
    pub basis: Vec<BlockMatrix>,
}

impl CommutantBasis {
    pub fn dimension(&self) -> usize {
        self.basis.len()
    }

    /// Component of `m` orthogonal to the commutant.
    pub fn project_out(&self, m: &BlockMatrix) -> Result<BlockMatrix> {
        let mut out = m.clone();
        for z in &self.basis {
            out = out.sub(&z.scale(frobenius_inner(z, m)))?;
        }
        Ok(out)
    }
}

fn same_shape(a: &BlockMatrix, b: &BlockMatrix) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch(format!("{} vs {}", a.shape(), b.shape())));
    }
    Ok(())
}

/// Joint commutant of `u` and `v`, solved independently per point and per block.
/// Singular values at or below `rank_tol` times the largest count as zero.
pub fn commutant_basis(u: &BlockMatrix, v: &BlockMatrix, rank_tol: f64) -> Result<CommutantBasis> {
    same_shape(u, v)?;
    let shape = u.shape();
    let mut basis = Vec::new();
    for (b, &n) in shape.dims().iter().enumerate() {
        for p in 0..shape.points() {
            let op = SparseOperator::commutator_stack(n, &[u.block(b).fiber(p), v.block(b).fiber(p)]);
            for vec in Decomposition::new(&op).nullspace(rank_tol) {
                let mut z = BlockMatrix::zeros(shape);
                let m = linalg::unvectorize(n, &vec);
                z.blocks_mut()[b].fibers_mut()[p] = m;
                basis.push(z);
            }
        }
    }
    Ok(CommutantBasis { pair: (u.clone(), v.clone()), basis })
}

/// Minimum-norm least-squares element for a pair, with its residuals.
#[derive(Clone, Debug)]
pub struct PairSolution {
    pub element: BlockMatrix,
    /// `‖(bu − ub − Δu, bv − vb − Δv)‖` in the total Frobenius norm.
    pub residual: f64,
    /// `residual / ‖(Δu, Δv)‖`, or `residual` itself when the values vanish.
    pub relative_residual: f64,
}

/// Solves `min_b ‖bu − ub − Δu‖² + ‖bv − vb − Δv‖²` and keeps the minimum-norm
/// minimizer. Fails when the relative residual exceeds `tol`.
pub fn implementing_element_for_pair(
    u: &BlockMatrix,
    v: &BlockMatrix,
    du: &BlockMatrix,
    dv: &BlockMatrix,
    tol: f64,
) -> Result<PairSolution> {
    same_shape(u, v)?;
    same_shape(u, du)?;
    same_shape(u, dv)?;
    let shape = u.shape();
    let mut element = BlockMatrix::zeros(shape);
    let mut residual_sq = 0.0;
    let mut rhs_sq = 0.0;
    for (b, &n) in shape.dims().iter().enumerate() {
        for p in 0..shape.points() {
            let op = SparseOperator::commutator_stack(n, &[u.block(b).fiber(p), v.block(b).fiber(p)]);
            let rhs = linalg::stack(&[du.block(b).fiber(p), dv.block(b).fiber(p)]);
            let x = Decomposition::new(&op).min_norm_solve(&rhs, RANK_TOL);
            residual_sq += (op.apply(&x) - &rhs).norm_squared();
            rhs_sq += rhs.norm_squared();
            element.blocks_mut()[b].fibers_mut()[p] = linalg::unvectorize(n, &x);
        }
    }
    let residual = residual_sq.sqrt();
    let relative_residual = if rhs_sq > 0.0 { residual / rhs_sq.sqrt() } else { residual };
    if !(relative_residual <= tol) {
        return Err(Error::NoCommonImplementingElement { residual, relative: relative_residual, tolerance: tol });
    }
    Ok(PairSolution { element, residual, relative_residual })
}
