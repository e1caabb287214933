mod common;

use claimnet_core::metrics::{
    adjusted_mutual_info, adjusted_rand_index, contingency, evaluate, homogeneity_completeness_v,
    purity, ContingencyTable,
};
use common::oracle::{
    ami_straight, ari_pair_counting, hcv_entropy, purity_count, random_labels, to_partition,
};
use common::rng;
use proptest::prelude::*;

const TOL: f64 = 1e-9;

fn table(pred: &[usize], truth: &[usize]) -> ContingencyTable {
    contingency(&to_partition(pred), &to_partition(truth)).unwrap()
}

#[test]
fn random_pairs_match_reference_formulas() {
    let mut r = rng(2024);
    for case in 0..200 {
        let pred = random_labels(&mut r, 10);
        let truth = random_labels(&mut r, 10);
        let t = table(&pred, &truth);
        let ari = adjusted_rand_index(&t).unwrap();
        assert!(
            (ari - ari_pair_counting(&pred, &truth)).abs() < TOL,
            "case {case} ari"
        );
        let (h, c, v) = homogeneity_completeness_v(&t);
        let (oh, oc, ov) = hcv_entropy(&pred, &truth);
        assert!(
            (h - oh).abs() < TOL && (c - oc).abs() < TOL && (v - ov).abs() < TOL,
            "case {case} hcv"
        );
        assert!(
            (adjusted_mutual_info(&t) - ami_straight(&pred, &truth)).abs() < TOL,
            "case {case} ami"
        );
        assert!(
            (purity(&t) - purity_count(&pred, &truth)).abs() < TOL,
            "case {case} purity"
        );
    }
}

#[test]
fn fixtures() {
    let same = [0, 0, 1, 2, 2, 2];
    let r = evaluate(
        &to_partition(&same),
        &to_partition(&[5, 5, 3, 4, 4, 4]),
        "x",
    )
    .unwrap();
    for m in [
        r.ari,
        r.ami,
        r.homogeneity,
        r.completeness,
        r.v_measure,
        r.purity,
    ] {
        assert_eq!(m, 1.0);
    }
    let t = table(&[0, 0, 1, 1], &[0, 1, 0, 1]);
    assert!((adjusted_rand_index(&t).unwrap() + 0.5).abs() < TOL);
    // {A,B | C} predicted against {A | B,C}
    let t = table(&[0, 0, 1], &[0, 1, 1]);
    assert!((purity(&t) - 2.0 / 3.0).abs() < 1e-4);
}

#[test]
fn larger_partitions_agree_with_reference() {
    // EMI's grouped evaluation against the ungrouped loop at a size where
    // many rows and columns share sizes
    let mut r = rng(99);
    for _ in 0..5 {
        let pred = random_labels(&mut r, 60);
        let truth = random_labels(&mut r, 60);
        let t = table(&pred, &truth);
        assert!((adjusted_mutual_info(&t) - ami_straight(&pred, &truth)).abs() < 1e-8);
        assert!((adjusted_rand_index(&t).unwrap() - ari_pair_counting(&pred, &truth)).abs() < TOL);
    }
}

fn labels(max_n: usize) -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    (2..max_n).prop_flat_map(|n| {
        (
            prop::collection::vec(0..5usize, n),
            prop::collection::vec(0..5usize, n),
        )
    })
}

proptest! {
    #[test]
    fn symmetric_scores((a, b) in labels(25)) {
        let ab = table(&a, &b);
        let ba = table(&b, &a);
        prop_assert!((adjusted_rand_index(&ab).unwrap() - adjusted_rand_index(&ba).unwrap()).abs() < TOL);
        prop_assert!((adjusted_mutual_info(&ab) - adjusted_mutual_info(&ba)).abs() < TOL);
        let (h, c, v) = homogeneity_completeness_v(&ab);
        let (h2, c2, v2) = homogeneity_completeness_v(&ba);
        prop_assert!((h - c2).abs() < TOL && (c - h2).abs() < TOL && (v - v2).abs() < TOL);
    }

    #[test]
    fn invariant_under_relabeling((a, b) in labels(25), shift in 1usize..50) {
        let relabeled: Vec<usize> = a.iter().map(|&l| (l + shift) * 7).collect();
        let t1 = table(&a, &b);
        let t2 = table(&relabeled, &b);
        prop_assert_eq!(adjusted_rand_index(&t1).unwrap(), adjusted_rand_index(&t2).unwrap());
        prop_assert_eq!(adjusted_mutual_info(&t1), adjusted_mutual_info(&t2));
        prop_assert_eq!(purity(&t1), purity(&t2));
    }

    #[test]
    fn bounded_scores((a, b) in labels(25)) {
        let t = table(&a, &b);
        let ari = adjusted_rand_index(&t).unwrap();
        prop_assert!((-1.0..=1.0).contains(&ari));
        prop_assert!(adjusted_mutual_info(&t) <= 1.0);
        let (h, c, v) = homogeneity_completeness_v(&t);
        for m in [h, c, v] {
            prop_assert!((0.0..=1.0).contains(&m));
        }
        let p = purity(&t);
        prop_assert!(p > 0.0 && p <= 1.0);
    }

    #[test]
    fn self_comparison_is_perfect(a in prop::collection::vec(0..6usize, 2..30)) {
        let t = table(&a, &a);
        prop_assert_eq!(adjusted_rand_index(&t).unwrap(), 1.0);
        prop_assert_eq!(adjusted_mutual_info(&t), 1.0);
        prop_assert_eq!(homogeneity_completeness_v(&t), (1.0, 1.0, 1.0));
        prop_assert_eq!(purity(&t), 1.0);
    }
}
