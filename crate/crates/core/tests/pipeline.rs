use std::sync::atomic::{AtomicUsize, Ordering};

use proptest::prelude::*;

use twolocal::algebra::{center_project, matrix_unit};
use twolocal::derivation::inner_derivation;
use twolocal::oracle::equal_mod_center;
use twolocal::reconstruct::{assemble, read_diag_differences, read_offdiag, UnitResponses};
use twolocal::twolocal::{hidden_element, make_broken, make_honest, make_noisy_witness};
use twolocal::{
    reconstruct, AlgebraMap, AlgebraShape, BlockMatrix, BrokenKind, CertificateKind, Complex64, ReconstructOptions,
    Result,
};

struct Counting<M> {
    inner: M,
    calls: AtomicUsize,
}

impl<M: AlgebraMap> AlgebraMap for Counting<M> {
    fn shape(&self) -> &AlgebraShape {
        self.inner.shape()
    }

    fn evaluate(&self, x: &BlockMatrix) -> Result<BlockMatrix> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.evaluate(x)
    }
}

fn shape(points: usize, dims: &[usize]) -> AlgebraShape {
    AlgebraShape::new(points, dims.to_vec()).unwrap()
}

#[test]
fn unit_responses_use_one_evaluation_per_offdiagonal_unit() {
    let s = shape(2, &[1, 4, 2]);
    let map = Counting { inner: make_honest(&hidden_element(&s, 3)), calls: AtomicUsize::new(0) };
    let responses = UnitResponses::collect(&map).unwrap();
    assert_eq!(responses.evaluations(), 14);
    assert_eq!(map.calls.load(Ordering::Relaxed), 14);
}

#[test]
fn assembly_alone_recovers_hidden_element() {
    let s = shape(3, &[5]);
    let a = hidden_element(&s, 11);
    let map = make_honest(&a);
    let el = assemble(&read_offdiag(&map, 1e-10).unwrap(), &read_diag_differences(&map, 1e-10).unwrap(), &s).unwrap();
    assert!(equal_mod_center(&el.abar, &a, 1e-10).unwrap().pass);
    for p in 0..3 {
        assert_eq!(el.abar.get(0, p, 0, 0), Complex64::new(0.0, 0.0));
    }
}

#[test]
fn central_shift_does_not_change_result() {
    let s = shape(4, &[3, 2]);
    let a = hidden_element(&s, 5);
    let shift = center_project(&hidden_element(&s, 6));
    let opts = ReconstructOptions::default();
    let r1 = reconstruct(&make_honest(&a), &opts).unwrap().element.unwrap();
    let r2 = reconstruct(&make_honest(&a.add(&shift).unwrap()), &opts).unwrap().element.unwrap();
    assert!(r1.abar.sub(&r2.abar).unwrap().norm() < 1e-12);
}

#[test]
fn reconstruction_is_idempotent() {
    let s = shape(2, &[4, 1]);
    let opts = ReconstructOptions::default();
    let first = reconstruct(&make_honest(&hidden_element(&s, 9)), &opts).unwrap().element.unwrap();
    let second = reconstruct(&inner_derivation(&first.abar), &opts).unwrap().element.unwrap();
    assert!(first.abar.sub(&second.abar).unwrap().norm() < 1e-12);
}

#[test]
fn noisy_and_honest_agree() {
    let s = shape(2, &[3]);
    let a = hidden_element(&s, 21);
    let opts = ReconstructOptions::default();
    let honest = reconstruct(&make_honest(&a), &opts).unwrap().element.unwrap();
    let noisy = reconstruct(&make_noisy_witness(&a, 4), &opts).unwrap().element.unwrap();
    assert_eq!(honest.abar, noisy.abar);
}

#[test]
fn noisy_witness_implements_both_arguments() {
    let s = shape(2, &[3]);
    let map = make_noisy_witness(&hidden_element(&s, 2), 8);
    let x = matrix_unit(&s, 0, 0, 2).unwrap();
    let y = hidden_element(&s, 40);
    let w = map.witness(&x, &y).unwrap().unwrap();
    for v in [&x, &y] {
        assert!(map.evaluate(v).unwrap().sub(&w.commutator(v).unwrap()).unwrap().norm() < 1e-12);
    }
    assert!(w.sub(map.hidden_element()).unwrap().norm() > 0.5);
}

#[test]
fn blockmix_fails_block_certificate() {
    let s = shape(1, &[2, 3]);
    let rec = reconstruct(&make_broken(BrokenKind::Blockmix, 3, &s).unwrap(), &ReconstructOptions::default()).unwrap();
    assert!(!rec.certificate(CertificateKind::Blockwise).unwrap().pass);
}

#[test]
fn zero_by_one_blocks_are_trivially_certified() {
    let s = shape(4, &[1, 1, 1]);
    let rec = reconstruct(&make_honest(&hidden_element(&s, 1)), &ReconstructOptions::default()).unwrap();
    assert!(rec.certified());
    assert_eq!(rec.element.unwrap().abar.norm(), 0.0);
}

fn small_shape() -> impl Strategy<Value = AlgebraShape> {
    (1usize..4, prop::collection::vec(1usize..5, 1..4)).prop_map(|(p, d)| AlgebraShape::new(p, d).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn honest_maps_reconstruct(s in small_shape(), seed in any::<u64>()) {
        let a = hidden_element(&s, seed);
        let rec = reconstruct(&make_honest(&a), &ReconstructOptions { seed, ..Default::default() }).unwrap();
        prop_assert!(rec.certified());
        let el = rec.element.unwrap();
        prop_assert!(equal_mod_center(&el.abar, &a, 1e-8).unwrap().pass);
        let want: usize = s.dims().iter().map(|n| n * (n - 1)).sum();
        prop_assert_eq!(el.probes_used, want);
    }

    #[test]
    fn offsets_never_certify(s in small_shape(), seed in any::<u64>()) {
        let map = make_broken(BrokenKind::Offset, seed, &s).unwrap();
        prop_assert!(!reconstruct(&map, &ReconstructOptions::default()).unwrap().certified());
    }
}
