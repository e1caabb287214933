mod common;

use claimnet_core::baselines::{
    affinity_propagation, agglomerative_cluster, AffinityPropagationConfig, AgglomerativeConfig,
    DistanceMetric, Linkage,
};
use claimnet_core::metrics::evaluate;
use claimnet_core::vecmath::{dot, EmbeddingSet};
use common::oracle::{affinity_reference, components_bfs};
use common::{planted, random_unit_set, rng, similarity_matrix, two_group_fixture};
use rand::seq::SliceRandom;

fn euclidean(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (*x as f64 - *y as f64).powi(2))
        .sum::<f64>()
        .sqrt()
}

const LINKAGES: [Linkage; 4] = [
    Linkage::Ward,
    Linkage::Complete,
    Linkage::Average,
    Linkage::Single,
];

fn cfg(linkage: Linkage, t: f64) -> AgglomerativeConfig {
    AgglomerativeConfig {
        linkage,
        distance_threshold: t,
        metric: DistanceMetric::Euclidean,
    }
}

fn shuffled(set: &EmbeddingSet, seed: u64) -> EmbeddingSet {
    let mut items: Vec<(String, Vec<f32>)> = set
        .iter()
        .map(|(id, v)| (id.to_string(), v.to_vec()))
        .collect();
    items.shuffle(&mut rng(seed));
    EmbeddingSet::from_pairs(set.dim(), items).unwrap()
}

#[test]
fn single_linkage_is_threshold_graph_components() {
    for (seed, t) in [(1, 0.6), (2, 0.9), (3, 1.1)] {
        let set = random_unit_set(120, 4, seed);
        let ids: Vec<String> = set.ids().to_vec();
        let mut edges = Vec::new();
        for (i, (a, va)) in set.iter().enumerate() {
            for (b, vb) in set.iter().skip(i + 1) {
                if euclidean(va, vb) <= t {
                    edges.push((a.to_string(), b.to_string()));
                }
            }
        }
        let got = agglomerative_cluster(&set, &cfg(Linkage::Single, t)).unwrap();
        assert_eq!(
            got,
            components_bfs(&ids, &edges),
            "seed {seed} threshold {t}"
        );
    }
}

#[test]
fn input_order_does_not_matter() {
    let set = random_unit_set(80, 6, 17);
    for linkage in LINKAGES {
        let base = agglomerative_cluster(&set, &cfg(linkage, 0.8)).unwrap();
        for seed in 0..3 {
            assert_eq!(
                base,
                agglomerative_cluster(&shuffled(&set, seed), &cfg(linkage, 0.8)).unwrap()
            );
        }
    }
}

#[test]
fn cluster_count_never_grows_with_threshold() {
    let set = random_unit_set(90, 5, 23);
    for linkage in LINKAGES {
        let mut last = usize::MAX;
        for t in (1..=40).map(|s| s as f64 * 0.1).chain([100.0]) {
            let n = agglomerative_cluster(&set, &cfg(linkage, t))
                .unwrap()
                .n_clusters();
            assert!(n <= last, "{linkage:?} at {t}");
            last = n;
        }
        assert_eq!(last, 1);
    }
}

#[test]
fn ward_recovers_planted_groups() {
    let data = planted(500, 60, 64, 0.15, 5);
    let p = agglomerative_cluster(&data.embeddings, &AgglomerativeConfig::default()).unwrap();
    assert_eq!(evaluate(&p, &data.truth, "ward").unwrap().ari, 1.0);
}

#[test]
fn affinity_matches_reference_run() {
    let (set, truth) = two_group_fixture();
    let config = AffinityPropagationConfig::default();
    let r = affinity_propagation(&set, &config).unwrap();
    assert!(r.converged);
    assert_eq!(r.partition, truth);
    let s = similarity_matrix(&set, r.preference);
    let reference = affinity_reference(&s, config.damping, r.iterations);
    let ids = set.sorted_by_id();
    let expected: Vec<String> = reference.iter().map(|&k| ids.id(k).to_string()).collect();
    assert_eq!(r.exemplars, expected);
}

#[test]
fn members_join_their_most_similar_exemplar() {
    for seed in 0..4 {
        let set = random_unit_set(40, 3, 100 + seed);
        let r = affinity_propagation(&set, &AffinityPropagationConfig::default()).unwrap();
        for (id, v) in set.iter() {
            let own = r.partition.cluster_of(id).unwrap();
            let own_exemplar = r
                .exemplars
                .iter()
                .find(|e| r.partition.cluster_of(e) == Some(own))
                .expect("every cluster has an exemplar");
            let own_sim = dot(v, set.get(own_exemplar).unwrap());
            for e in &r.exemplars {
                if e != id && !r.exemplars.contains(&id.to_string()) {
                    assert!(own_sim >= dot(v, set.get(e).unwrap()) - 1e-12, "{id}");
                }
            }
        }
    }
}

#[test]
fn higher_preference_means_more_exemplars() {
    let (set, _) = two_group_fixture();
    let count = |p: f64| {
        affinity_propagation(
            &set,
            &AffinityPropagationConfig {
                preference: claimnet_core::baselines::Preference::Value(p),
                ..Default::default()
            },
        )
        .unwrap()
        .exemplars
        .len()
    };
    assert!(count(-5.0) <= count(0.5));
}
