//! Reconstruction of the implementing element of a 2-local derivation.
//!
//! Only values `Δ(e_ij)` for `i ≠ j` are needed to build the element:
//!
//! * the `(j,j)` Peirce coefficient of `Δ(e_ij)` is `ā_ji`, and the `(i,i)`
//!   coefficient is `−ā_ji` (a free cross-check);
//! * the `(i,j)` coefficient is `ā_ii − ā_jj`, which must be an additive cocycle
//!   over index triples;
//! * fixing `ā_00 = 0` in every block pins the central ambiguity.
//!
//! Each stage reports a [`Certificate`]; a map that breaks the 2-local promise shows
//! up as a failing certificate rather than an error.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Serialize, Serializer};

use crate::algebra::{all_matrix_units, block_unit, matrix_unit, peirce, AlgebraShape, BlockMatrix, CFunction};
use crate::derivation::AlgebraMap;
use crate::error::{Error, Result};
use crate::twolocal::implementing_element_for_pair;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CertificateKind {
    /// Agreement of the two readings of each off-diagonal coefficient.
    Offdiagonal,
    /// Antisymmetry and additivity of diagonal differences.
    Cocycle,
    /// Diagonal differences of pair-implementing elements through the special probe.
    Lemma3,
    /// Inner derivation by the reconstructed element reproduces the map.
    Verify,
    /// The map respects the central decomposition.
    Blockwise,
}

const MAX_WITNESSES: usize = 8;

/// Pass/fail record of one consistency check.
#[derive(Clone, Debug, Serialize)]
pub struct Certificate {
    pub kind: CertificateKind,
    pub pass: bool,
    #[serde(serialize_with = "finite_or_string")]
    pub max_violation: f64,
    pub tolerance: f64,
    /// Offending probes or index tuples, worst first.
    pub witnesses: Vec<String>,
}

fn finite_or_string<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_str(&v.to_string())
    }
}

impl Certificate {
    fn new(kind: CertificateKind, tolerance: f64) -> Self {
        Self { kind, pass: true, max_violation: 0.0, tolerance, witnesses: Vec::new() }
    }

    fn record(&mut self, violation: f64, witness: impl FnOnce() -> String) {
        let exceeds = !(violation <= self.tolerance);
        if violation > self.max_violation || violation.is_nan() {
            self.max_violation = if violation.is_nan() { f64::INFINITY } else { violation };
            if exceeds {
                self.witnesses.insert(0, witness());
                self.witnesses.truncate(MAX_WITNESSES);
            }
        } else if exceeds && self.witnesses.len() < MAX_WITNESSES {
            self.witnesses.push(witness());
        }
        self.pass = self.max_violation <= self.tolerance;
    }

    /// Combines two certificates of the same kind.
    pub fn merge(mut self, other: Certificate) -> Certificate {
        debug_assert_eq!(self.kind, other.kind);
        self.tolerance = self.tolerance.max(other.tolerance);
        self.max_violation = self.max_violation.max(other.max_violation);
        self.witnesses.extend(other.witnesses);
        self.witnesses.truncate(MAX_WITNESSES);
        self.pass = self.pass && other.pass && self.max_violation <= self.tolerance;
        self
    }
}

/// Gauge convention of a reconstructed element.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Gauge {
    /// The `(0,0)` coefficient vanishes in every block at every point.
    #[serde(rename = "e00-zero")]
    E00Zero,
}

/// A reconstructed implementing element `ā`.
#[derive(Clone, Debug, Serialize)]
pub struct ImplementingElement {
    pub abar: BlockMatrix,
    pub gauge: Gauge,
    /// Worst verification residual, once verified.
    pub residual: Option<f64>,
    /// Evaluations of the map spent on building `ā`.
    pub probes_used: usize,
}

/// Probes used for verification and block checks.
#[derive(Clone, Debug)]
pub struct ProbeSet {
    pub special_x: BlockMatrix,
    pub randoms: Vec<BlockMatrix>,
    pub seed: u64,
}

impl ProbeSet {
    pub fn new(shape: &AlgebraShape, randoms: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            special_x: probe_x(shape),
            randoms: (0..randoms).map(|_| BlockMatrix::random(shape, &mut rng)).collect(),
            seed,
        }
    }
}

/// Superdiagonal `Σ_i e_{i,i+1}` in every block (zero for 1×1 blocks). Its
/// support graph on the indices of each block is a path, hence connected.
pub fn probe_x(shape: &AlgebraShape) -> BlockMatrix {
    BlockMatrix::from_fn(shape, |_, _, i, j| {
        if j == i + 1 {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

/// Values `Δ(e_ij)`, `i ≠ j`, for every block.
#[derive(Clone, Debug)]
pub struct UnitResponses {
    shape: AlgebraShape,
    /// `values[b][i·n + j]`, `None` on the diagonal.
    values: Vec<Vec<Option<BlockMatrix>>>,
}

impl UnitResponses {
    /// Evaluates the map at each off-diagonal matrix unit exactly once.
    pub fn collect<M: AlgebraMap + ?Sized>(map: &M) -> Result<Self> {
        let shape = map.shape().clone();
        let mut values = Vec::with_capacity(shape.block_count());
        for (b, &n) in shape.dims().iter().enumerate() {
            let mut block = vec![None; n * n];
            for i in 0..n {
                for j in (0..n).filter(|&j| j != i) {
                    block[i * n + j] = Some(map.evaluate(&matrix_unit(&shape, b, i, j)?)?);
                }
            }
            values.push(block);
        }
        Ok(Self { shape, values })
    }

    pub fn shape(&self) -> &AlgebraShape {
        &self.shape
    }

    pub fn evaluations(&self) -> usize {
        self.values.iter().flatten().filter(|v| v.is_some()).count()
    }

    pub fn get(&self, block: usize, i: usize, j: usize) -> Result<&BlockMatrix> {
        let n = self.shape.dim(block);
        self.values[block][i * n + j]
            .as_ref()
            .ok_or_else(|| Error::IncompleteProbes(format!("no response for e_{i}{j} in block {block}")))
    }
}

/// Per-block `n × n` table of coefficient functions; `None` on the diagonal.
pub type CoefficientTable = Vec<Vec<Option<CFunction>>>;

#[derive(Clone, Debug)]
pub struct OffDiagonal {
    /// `coeffs[b][i·n + j] = ā_ij` for `i ≠ j`.
    pub coeffs: CoefficientTable,
    pub certificate: Certificate,
}

#[derive(Clone, Debug)]
pub struct DiagDifferences {
    /// `delta[b][i·n + j] = ā_ii − ā_jj` for `i ≠ j`.
    pub delta: CoefficientTable,
    pub certificate: Certificate,
}

fn table_scale(table: &CoefficientTable) -> f64 {
    table.iter().flatten().flatten().map(CFunction::sup_abs).fold(0.0, f64::max)
}

/// Reads `ā_ji` from the `(j,j)` Peirce coefficient of `Δ(e_ij)` and cross-checks it
/// against minus the `(i,i)` coefficient.
pub fn read_offdiag_from(responses: &UnitResponses, tol: f64) -> Result<OffDiagonal> {
    let shape = responses.shape();
    let mut coeffs = Vec::with_capacity(shape.block_count());
    let mut checks = Vec::new();
    for (b, &n) in shape.dims().iter().enumerate() {
        let mut table = vec![None; n * n];
        for i in 0..n {
            for j in (0..n).filter(|&j| j != i) {
                let d = responses.get(b, i, j)?;
                let forward = peirce(d, b, j, j)?;
                let backward = peirce(d, b, i, i)?.neg();
                checks.push((b, i, j, forward.sub(&backward)?.sup_abs()));
                table[j * n + i] = Some(forward);
            }
        }
        coeffs.push(table);
    }
    let mut certificate = Certificate::new(CertificateKind::Offdiagonal, tol * (1.0 + table_scale(&coeffs)));
    for (b, i, j, v) in checks {
        certificate.record(v, || format!("block {b}: readings of a_{j}{i} from D(e_{i}{j}) differ by {v:.3e}"));
    }
    Ok(OffDiagonal { coeffs, certificate })
}

pub fn read_offdiag<M: AlgebraMap + ?Sized>(map: &M, tol: f64) -> Result<OffDiagonal> {
    read_offdiag_from(&UnitResponses::collect(map)?, tol)
}

/// Reads `δ[i][j] = ā_ii − ā_jj` from the `(i,j)` Peirce coefficient of `Δ(e_ij)` and
/// certifies `δ[i][j] = −δ[j][i]` and `δ[i][j] + δ[j][k] = δ[i][k]`.
pub fn read_diag_differences_from(responses: &UnitResponses, tol: f64) -> Result<DiagDifferences> {
    let shape = responses.shape();
    let mut delta: CoefficientTable = Vec::with_capacity(shape.block_count());
    for (b, &n) in shape.dims().iter().enumerate() {
        let mut table = vec![None; n * n];
        for i in 0..n {
            for j in (0..n).filter(|&j| j != i) {
                table[i * n + j] = Some(peirce(responses.get(b, i, j)?, b, i, j)?);
            }
        }
        delta.push(table);
    }

    let mut certificate = Certificate::new(CertificateKind::Cocycle, tol * (1.0 + table_scale(&delta)));
    for (b, &n) in shape.dims().iter().enumerate() {
        let d = |i: usize, j: usize| delta[b][i * n + j].as_ref().expect("filled above");
        for i in 0..n {
            for j in (0..n).filter(|&j| j != i) {
                let v = d(i, j).add(d(j, i))?.sup_abs();
                certificate.record(v, || format!("block {b}: delta[{i}][{j}] + delta[{j}][{i}] = {v:.3e}"));
                for k in (0..n).filter(|&k| k != i && k != j) {
                    let v = d(i, j).add(d(j, k))?.sub(d(i, k))?.sup_abs();
                    certificate.record(v, || {
                        format!("block {b}: delta[{i}][{j}] + delta[{j}][{k}] - delta[{i}][{k}] = {v:.3e}")
                    });
                }
            }
        }
    }
    Ok(DiagDifferences { delta, certificate })
}

pub fn read_diag_differences<M: AlgebraMap + ?Sized>(map: &M, tol: f64) -> Result<DiagDifferences> {
    read_diag_differences_from(&UnitResponses::collect(map)?, tol)
}

/// Builds `ā` with `ā_00 = 0`, `ā_ii = −δ[0][i]` and the off-diagonal readings.
pub fn assemble(offdiag: &OffDiagonal, delta: &DiagDifferences, shape: &AlgebraShape) -> Result<ImplementingElement> {
    if offdiag.coeffs.len() != shape.block_count() || delta.delta.len() != shape.block_count() {
        return Err(Error::IncompleteProbes(format!("coefficient tables do not cover {shape}")));
    }
    let mut abar = BlockMatrix::zeros(shape);
    for (b, &n) in shape.dims().iter().enumerate() {
        let (off, del) = (&offdiag.coeffs[b], &delta.delta[b]);
        if off.len() != n * n || del.len() != n * n {
            return Err(Error::IncompleteProbes(format!("block {b} tables are not {n}x{n}")));
        }
        let missing = |what: &str, i: usize, j: usize| {
            Error::IncompleteProbes(format!("block {b}: missing {what} coefficient ({i},{j})"))
        };
        let fibers = abar.blocks_mut()[b].fibers_mut();
        for i in 0..n {
            for j in 0..n {
                let f = if i == j {
                    if i == 0 {
                        continue;
                    }
                    del[i].as_ref().ok_or_else(|| missing("diagonal", 0, i))?.neg()
                } else {
                    off[i * n + j].clone().ok_or_else(|| missing("off-diagonal", i, j))?
                };
                if f.points() != shape.points() {
                    return Err(Error::ShapeMismatch(format!("coefficient ({i},{j}) of block {b}")));
                }
                for (fiber, &z) in fibers.iter_mut().zip(f.values()) {
                    fiber[(i, j)] = z;
                }
            }
        }
    }
    Ok(ImplementingElement { abar, gauge: Gauge::E00Zero, residual: None, probes_used: 0 })
}

/// Compares `Δ(p)` with `āp − pā` on the special probe, every matrix unit and the
/// random probes. Passes iff the worst residual is at most
/// `tol · (1 + ‖ā‖) · (1 + max probe norm)`.
pub fn verify<M: AlgebraMap + ?Sized>(map: &M, abar: &BlockMatrix, probes: &ProbeSet, tol: f64) -> Result<Certificate> {
    let shape = map.shape();
    let units = all_matrix_units(shape);
    let mut labelled: Vec<(String, &BlockMatrix)> = vec![("special x".into(), &probes.special_x)];
    labelled.extend(units.iter().map(|((b, i, j), e)| (format!("e_{i}{j} of block {b}"), e)));
    labelled.extend(probes.randoms.iter().enumerate().map(|(k, r)| (format!("random probe {k}"), r)));

    let max_probe = labelled.iter().map(|(_, p)| p.norm()).fold(0.0, f64::max);
    let mut certificate = Certificate::new(CertificateKind::Verify, tol * (1.0 + abar.norm()) * (1.0 + max_probe));
    for (label, p) in &labelled {
        let v = map.evaluate(p)?.sub(&abar.commutator(p)?)?.norm();
        certificate.record(v, || format!("{label}: residual {v:.3e}"));
    }
    Ok(certificate)
}

/// Every ordered pair `(ξ, η)`, `ξ ≠ η`, of every block, as `(block, ξ, η)`.
pub fn all_index_pairs(shape: &AlgebraShape) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for (b, &n) in shape.dims().iter().enumerate() {
        for xi in 0..n {
            for eta in (0..n).filter(|&eta| eta != xi) {
                out.push((b, xi, eta));
            }
        }
    }
    out
}

/// Checks `c_ξξ − c_ηη = b_ξξ − b_ηη`, where `c` implements the map at `(e_01, x)`
/// and `b` at `(e_ξη, x)` in the same block, with `x` the special probe.
///
/// `solve(e, x)` returns an element implementing the map at both arguments, or
/// `Ok(None)` when no such element exists.
pub fn lemma3_certificate_with<S>(
    shape: &AlgebraShape,
    pairs: &[(usize, usize, usize)],
    tol: f64,
    solve: S,
) -> Result<Certificate>
where
    S: Fn(&BlockMatrix, &BlockMatrix) -> Result<Option<BlockMatrix>>,
{
    let x = probe_x(shape);
    for &(b, xi, eta) in pairs {
        shape.check_entry(b, xi, eta)?;
        if xi == eta {
            return Err(Error::IndexOutOfRange(format!("pair ({xi},{eta}) in block {b} is not off-diagonal")));
        }
    }

    let mut references: Vec<Option<Option<BlockMatrix>>> = vec![None; shape.block_count()];
    for &(b, _, _) in pairs {
        if references[b].is_none() {
            references[b] = Some(solve(&matrix_unit(shape, b, 0, 1)?, &x)?);
        }
    }
    let scale = references.iter().flatten().flatten().map(BlockMatrix::norm).fold(0.0, f64::max);
    let mut certificate = Certificate::new(CertificateKind::Lemma3, tol * (1.0 + scale));

    for (b, r) in references.iter().enumerate() {
        if let Some(None) = r {
            certificate.record(f64::INFINITY, || format!("block {b}: no element implements (e_01, x)"));
        }
    }
    for &(b, xi, eta) in pairs {
        let Some(Some(c)) = &references[b] else { continue };
        let Some(bel) = solve(&matrix_unit(shape, b, xi, eta)?, &x)? else {
            certificate.record(f64::INFINITY, || format!("block {b}: no element implements (e_{xi}{eta}, x)"));
            continue;
        };
        let lhs = c.block(b).entry(xi, xi).sub(&c.block(b).entry(eta, eta))?;
        let rhs = bel.block(b).entry(xi, xi).sub(&bel.block(b).entry(eta, eta))?;
        let v = lhs.sub(&rhs)?.sup_abs();
        certificate.record(v, || format!("block {b}: pair ({xi},{eta}) differs by {v:.3e}"));
    }
    Ok(certificate)
}

/// [`lemma3_certificate_with`] using least-squares pair solves on the map's values.
pub fn lemma3_certificate<M: AlgebraMap + ?Sized>(
    map: &M,
    pairs: &[(usize, usize, usize)],
    tol: f64,
) -> Result<Certificate> {
    lemma3_certificate_with(map.shape(), pairs, tol, |e, x| {
        match implementing_element_for_pair(e, x, &map.evaluate(e)?, &map.evaluate(x)?, tol) {
            Ok(sol) => Ok(Some(sol.element)),
            Err(Error::NoCommonImplementingElement { .. }) => Ok(None),
            Err(other) => Err(other),
        }
    })
}

/// Checks that `z_j Δ(z_k x) = 0` for `j ≠ k`, that `Δ(x) = Σ_j z_j Δ(x)` and that
/// `Δ(x) = Σ_j Δ(z_j x)` on each sample. Tolerance is `tol · (1 + max sample norm)²`.
pub fn block_certificate<M: AlgebraMap + ?Sized>(map: &M, samples: &[BlockMatrix], tol: f64) -> Result<Certificate> {
    let shape = map.shape();
    let units: Vec<BlockMatrix> = (0..shape.block_count()).map(|j| block_unit(shape, j)).collect::<Result<_>>()?;
    let max_norm = samples.iter().map(BlockMatrix::norm).fold(0.0, f64::max);
    let mut certificate = Certificate::new(CertificateKind::Blockwise, tol * (1.0 + max_norm).powi(2));
    for (s, x) in samples.iter().enumerate() {
        let dx = map.evaluate(x)?;
        let mut by_units = BlockMatrix::zeros(shape);
        let mut by_parts = BlockMatrix::zeros(shape);
        for (k, zk) in units.iter().enumerate() {
            by_units = by_units.add(&zk.multiply(&dx)?)?;
            let dxk = map.evaluate(&zk.multiply(x)?)?;
            by_parts = by_parts.add(&dxk)?;
            for (j, zj) in units.iter().enumerate().filter(|&(j, _)| j != k) {
                let v = zj.multiply(&dxk)?.norm();
                certificate.record(v, || format!("sample {s}: block {k} leaks into block {j} ({v:.3e})"));
            }
        }
        let v = dx.sub(&by_units)?.norm();
        certificate.record(v, || format!("sample {s}: D(x) - sum z_j D(x) = {v:.3e}"));
        let v = dx.sub(&by_parts)?.norm();
        certificate.record(v, || format!("sample {s}: D(x) - sum D(x_j) = {v:.3e}"));
    }
    Ok(certificate)
}

#[derive(Clone, Copy, Debug)]
pub struct ReconstructOptions {
    /// Relative tolerance of the read-off and block certificates.
    pub tol: f64,
    /// Relative tolerance of the final verification.
    pub verify_tol: f64,
    /// Random probes for verification and block checks.
    pub random_probes: usize,
    pub seed: u64,
}

impl Default for ReconstructOptions {
    fn default() -> Self {
        Self { tol: 1e-9, verify_tol: 1e-9, random_probes: 8, seed: 0 }
    }
}

/// Result of [`reconstruct`]: the element, when one could be assembled, and every
/// certificate produced on the way.
#[derive(Clone, Debug, Serialize)]
pub struct Reconstruction {
    pub element: Option<ImplementingElement>,
    pub certificates: Vec<Certificate>,
    /// Raw diagonal-difference cocycle, kept for inspection.
    #[serde(skip)]
    pub delta: Option<DiagDifferences>,
}

impl Reconstruction {
    pub fn certified(&self) -> bool {
        self.element.is_some() && self.certificates.iter().all(|c| c.pass)
    }

    pub fn certificate(&self, kind: CertificateKind) -> Option<&Certificate> {
        self.certificates.iter().find(|c| c.kind == kind)
    }

    pub fn failed(&self) -> impl Iterator<Item = &Certificate> {
        self.certificates.iter().filter(|c| !c.pass)
    }
}

/// Full pipeline over a direct sum: block check, off-diagonal read-off, diagonal
/// cocycle, gauge-fixed assembly and verification.
pub fn reconstruct<M: AlgebraMap + ?Sized>(map: &M, options: &ReconstructOptions) -> Result<Reconstruction> {
    let shape = map.shape();
    let probes = ProbeSet::new(shape, options.random_probes, options.seed);
    let mut certificates = Vec::new();
    if shape.block_count() > 1 {
        let mut samples = vec![probes.special_x.clone()];
        samples.extend(probes.randoms.iter().cloned());
        certificates.push(block_certificate(map, &samples, options.tol)?);
    }

    let responses = UnitResponses::collect(map)?;
    let offdiag = read_offdiag_from(&responses, options.tol)?;
    let delta = read_diag_differences_from(&responses, options.tol)?;
    certificates.push(offdiag.certificate.clone());
    certificates.push(delta.certificate.clone());
    if !delta.certificate.pass {
        return Ok(Reconstruction { element: None, certificates, delta: Some(delta) });
    }

    let mut element = assemble(&offdiag, &delta, shape)?;
    element.probes_used = responses.evaluations();
    let verified = verify(map, &element.abar, &probes, options.verify_tol)?;
    element.residual = Some(verified.max_violation);
    certificates.push(verified);
    Ok(Reconstruction { element: Some(element), certificates, delta: Some(delta) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::derivation::zero_map;
    use crate::twolocal::{hidden_element, make_broken, make_honest, make_noisy_witness, BrokenKind};

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn m2() -> AlgebraShape {
        AlgebraShape::new(1, vec![2]).unwrap()
    }

    #[test]
    fn probe_x_examples() {
        let s = AlgebraShape::new(1, vec![1, 3]).unwrap();
        let x = probe_x(&s);
        assert_eq!(x.block(0).fiber(0)[(0, 0)], c(0.0));
        let want = matrix_unit(&s, 1, 0, 1).unwrap().add(&matrix_unit(&s, 1, 1, 2).unwrap()).unwrap();
        assert_eq!(x, want);
    }

    #[test]
    fn offdiag_reading_of_e10() {
        let s = m2();
        let map = make_honest(&matrix_unit(&s, 0, 1, 0).unwrap());
        let off = read_offdiag(&map, 1e-12).unwrap();
        assert_eq!(off.coeffs[0][2], Some(CFunction::constant(1, c(1.0))));
        assert_eq!(off.coeffs[0][1], Some(CFunction::constant(1, c(0.0))));
        assert!(off.certificate.pass);
    }

    #[test]
    fn diagonal_hidden_element() {
        let s = m2();
        let d = matrix_unit(&s, 0, 0, 0).unwrap().scale(c(2.0)).add(&matrix_unit(&s, 0, 1, 1).unwrap().scale(c(5.0))).unwrap();
        let map = make_honest(&d);
        let off = read_offdiag(&map, 1e-12).unwrap();
        assert!(off.coeffs[0].iter().flatten().all(|f| f.sup_abs() == 0.0));
        let delta = read_diag_differences(&map, 1e-12).unwrap();
        assert_eq!(delta.delta[0][1], Some(CFunction::constant(1, c(-3.0))));
        assert!(delta.certificate.pass);

        let el = assemble(&off, &delta, &s).unwrap();
        let want = matrix_unit(&s, 0, 1, 1).unwrap().scale(c(3.0));
        assert_eq!(el.abar, want);
    }

    #[test]
    fn zero_map_reconstructs_zero() {
        for s in [m2(), AlgebraShape::new(2, vec![1, 1]).unwrap(), AlgebraShape::new(3, vec![3, 2]).unwrap()] {
            let rec = reconstruct(&zero_map(&s), &ReconstructOptions::default()).unwrap();
            assert!(rec.certified());
            let el = rec.element.unwrap();
            assert_eq!(el.abar.norm(), 0.0);
            assert_eq!(el.residual, Some(0.0));
        }
    }

    #[test]
    fn e10_reconstructs_itself() {
        let s = m2();
        let e10 = matrix_unit(&s, 0, 1, 0).unwrap();
        let rec = reconstruct(&make_honest(&e10), &ReconstructOptions::default()).unwrap();
        assert_eq!(rec.element.unwrap().abar, e10);
    }

    #[test]
    fn probes_used_counts_offdiagonal_units() {
        let s = AlgebraShape::new(2, vec![1, 4, 2]).unwrap();
        let rec = reconstruct(&make_honest(&hidden_element(&s, 1)), &ReconstructOptions::default()).unwrap();
        assert_eq!(rec.element.unwrap().probes_used, 4 * 3 + 2);
    }

    #[test]
    fn assemble_rejects_missing_coefficients() {
        let s = m2();
        let map = make_honest(&hidden_element(&s, 2));
        let mut off = read_offdiag(&map, 1e-9).unwrap();
        let delta = read_diag_differences(&map, 1e-9).unwrap();
        off.coeffs[0][1] = None;
        assert!(matches!(assemble(&off, &delta, &s), Err(Error::IncompleteProbes(_))));
        assert!(assemble(&off, &delta, &AlgebraShape::new(1, vec![2, 2]).unwrap()).is_err());
    }

    #[test]
    fn verify_examples() {
        let s = AlgebraShape::new(2, vec![3]).unwrap();
        let probes = ProbeSet::new(&s, 4, 3);
        let zero = BlockMatrix::zeros(&s);
        let cert = verify(&zero_map(&s), &zero, &probes, 1e-9).unwrap();
        assert!(cert.pass);
        assert_eq!(cert.max_violation, 0.0);

        let broken = make_broken(BrokenKind::Offset, 4, &s).unwrap();
        let offset = broken.evaluate(&zero).unwrap();
        let rec = reconstruct(&broken, &ReconstructOptions::default()).unwrap();
        let abar = rec.element.map(|e| e.abar).unwrap_or(zero);
        let cert = verify(&broken, &abar, &probes, 1e-6).unwrap();
        assert!(!cert.pass);
        assert!(cert.max_violation >= offset.norm() / 2.0);
    }

    #[test]
    fn offset_map_fails_some_certificate() {
        let s = AlgebraShape::new(1, vec![2]).unwrap();
        let broken = make_broken(BrokenKind::Offset, 5, &s).unwrap();
        let rec = reconstruct(&broken, &ReconstructOptions { tol: 1e-6, verify_tol: 1e-6, ..Default::default() }).unwrap();
        assert!(!rec.certified());
    }

    #[test]
    fn blockmix_is_not_block_preserving() {
        let s = AlgebraShape::new(1, vec![2, 3]).unwrap();
        let broken = make_broken(BrokenKind::Blockmix, 6, &s).unwrap();
        let rec = reconstruct(&broken, &ReconstructOptions { tol: 1e-6, verify_tol: 1e-6, ..Default::default() }).unwrap();
        let cert = rec.certificate(CertificateKind::Blockwise).unwrap();
        assert!(!cert.pass);
        assert!(cert.max_violation > 1e-6);
    }

    #[test]
    fn lemma3_passes_on_honest_and_noisy() {
        let s = AlgebraShape::new(2, vec![4]).unwrap();
        let a = hidden_element(&s, 7);
        let pairs = all_index_pairs(&s);
        assert!(lemma3_certificate(&make_honest(&a), &pairs, 1e-8).unwrap().pass);

        let noisy = make_noisy_witness(&a, 8);
        assert!(lemma3_certificate(&noisy, &pairs, 1e-8).unwrap().pass);
        let via_witness = lemma3_certificate_with(&s, &pairs, 1e-8, |e, x| noisy.witness(e, x)).unwrap();
        assert!(via_witness.pass, "{via_witness:?}");
    }

    #[test]
    fn lemma3_is_vacuous_without_pairs() {
        let s = AlgebraShape::new(2, vec![1]).unwrap();
        assert!(all_index_pairs(&s).is_empty());
        let cert = lemma3_certificate(&zero_map(&s), &[], 1e-8).unwrap();
        assert!(cert.pass);
    }

    #[test]
    fn lemma3_rejects_diagonal_pairs() {
        let s = m2();
        assert!(lemma3_certificate(&zero_map(&s), &[(0, 1, 1)], 1e-8).is_err());
        assert!(lemma3_certificate(&zero_map(&s), &[(0, 0, 2)], 1e-8).is_err());
    }

    #[test]
    fn lemma3_fails_on_element_dependent() {
        let s = AlgebraShape::new(1, vec![3]).unwrap();
        let broken = make_broken(BrokenKind::ElementDependent, 9, &s).unwrap();
        let cert = lemma3_certificate(&broken, &all_index_pairs(&s), 1e-8).unwrap();
        assert!(!cert.pass);
        assert!(!cert.witnesses.is_empty());
    }

    #[test]
    fn certificate_serializes_infinite_violation() {
        let mut cert = Certificate::new(CertificateKind::Lemma3, 1e-8);
        cert.record(f64::INFINITY, || "no solution".into());
        let v = serde_json::to_value(&cert).unwrap();
        assert_eq!(v["max_violation"], "inf");
        assert_eq!(v["pass"], false);
        assert_eq!(v["kind"], "lemma3");
    }

    #[test]
    fn certificate_merge_keeps_worst() {
        let mut a = Certificate::new(CertificateKind::Verify, 1.0);
        a.record(0.5, || "a".into());
        let mut b = Certificate::new(CertificateKind::Verify, 1.0);
        b.record(2.0, || "b".into());
        let m = a.clone().merge(b.clone());
        assert_eq!(m.max_violation, 2.0);
        assert!(!m.pass);
        let m2 = b.merge(a);
        assert_eq!(m2.max_violation, m.max_violation);
        assert_eq!(m2.pass, m.pass);
    }
}
