#![allow(dead_code)]

pub mod oracle;

use claimnet_core::model::{Claim, Partition};
use claimnet_core::vecmath::EmbeddingSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut impl Rng, dim: usize) -> Vec<f32> {
    (0..dim)
        .map(|_| rng.sample::<f32, _>(StandardNormal))
        .collect()
}

/// `n` random unit vectors with ids `v0000..`.
pub fn random_unit_set(n: usize, dim: usize, seed: u64) -> EmbeddingSet {
    let mut r = rng(seed);
    EmbeddingSet::from_pairs(
        dim,
        (0..n).map(|i| (format!("v{i:04}"), gaussian(&mut r, dim))),
    )
    .unwrap()
}

/// Planted dataset: `n` claims split round-robin-free into `k` groups whose
/// centers are distinct basis vectors of a `dim`-space. Members are the
/// center plus isotropic noise of total norm about `noise`.
pub struct Planted {
    pub claims: Vec<Claim>,
    pub embeddings: EmbeddingSet,
    pub truth: Partition,
}

pub fn planted(n: usize, k: usize, dim: usize, noise: f32, seed: u64) -> Planted {
    assert!(k <= dim);
    let mut r = rng(seed);
    let mut groups: Vec<Vec<String>> = vec![Vec::new(); k];
    let mut claims = Vec::with_capacity(n);
    let mut vectors = Vec::with_capacity(n);
    for i in 0..n {
        // the first k claims seed one group each, the rest land uniformly
        let g = if i < k { i } else { r.gen_range(0..k) };
        let id = format!("c{i:04}");
        let mut v = gaussian(&mut r, dim);
        let scale = noise / (dim as f32).sqrt();
        v.iter_mut().for_each(|x| *x *= scale);
        v[g] += 1.0;
        let lang = ["en", "es", "pt", "hi"][i % 4];
        claims.push(
            Claim::new(&id, format!("claim {i} about topic {g}"), lang)
                .with_english(format!("claim {i} about topic {g}")),
        );
        groups[g].push(id.clone());
        vectors.push((id, v));
    }
    Planted {
        claims,
        embeddings: EmbeddingSet::from_pairs(dim, vectors).unwrap(),
        truth: Partition::from_groups(groups),
    }
}

/// Cluster sizes and language mix shaped like a fact-check dataset:
/// one cluster of 28, 179 of 6 and 17 of 5 (1187 claims in 197 clusters);
/// 55 single-language clusters and 142 spanning 3 or 4 of 22 languages.
pub fn claimcheck_fixture() -> (Vec<Claim>, Partition) {
    const LANGS: [&str; 22] = [
        "es", "en", "pt", "hi", "fr", "de", "ar", "bn", "id", "it", "ml", "mr", "pa", "ta", "te",
        "tr", "ur", "gu", "kn", "or", "nl", "pl",
    ];
    let sizes = std::iter::once(28)
        .chain(std::iter::repeat_n(6, 179))
        .chain(std::iter::repeat_n(5, 17));
    let mut claims = Vec::new();
    let mut groups = Vec::new();
    for (c, size) in sizes.enumerate() {
        let n_langs = match c {
            0..=27 => 4,
            28..=141 => 3,
            _ => 1,
        };
        let mut group = Vec::with_capacity(size);
        for m in 0..size {
            let lang = if n_langs == 1 {
                LANGS[0]
            } else {
                LANGS[(c + m % n_langs) % LANGS.len()]
            };
            let id = format!("k{c:03}_{m:02}");
            claims.push(Claim::new(&id, format!("claim {m} of cluster {c}"), lang));
            group.push(id);
        }
        groups.push(group);
    }
    (claims, Partition::from_groups(groups))
}

/// Two groups of ten 8-d points around orthogonal centers with small
/// deterministic jitter; ids `p00..p19`, group `g0` then `g1`.
pub fn two_group_fixture() -> (EmbeddingSet, Partition) {
    let mut r = rng(31);
    let mut vectors = Vec::new();
    let mut groups = vec![Vec::new(), Vec::new()];
    for i in 0..20 {
        let g = i / 10;
        let mut v: Vec<f32> = gaussian(&mut r, 8).into_iter().map(|x| 0.1 * x).collect();
        v[g] += 1.0;
        let id = format!("p{i:02}");
        groups[g].push(id.clone());
        vectors.push((id, v));
    }
    (
        EmbeddingSet::from_pairs(8, vectors).unwrap(),
        Partition::from_groups(groups),
    )
}

/// Cosine similarity matrix in id order with `preference` on the diagonal.
pub fn similarity_matrix(set: &EmbeddingSet, preference: f64) -> Vec<Vec<f64>> {
    let sorted = set.sorted_by_id();
    let n = sorted.len();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        preference
                    } else {
                        claimnet_core::vecmath::dot(sorted.vector(i), sorted.vector(j))
                            .clamp(-1.0, 1.0)
                    }
                })
                .collect()
        })
        .collect()
}

/// Writes a planted dataset under `dir` and returns a run config with
/// `n_oracles` oracle annotators reading the planted truth.
pub fn write_planted_run(
    dir: &std::path::Path,
    data: &Planted,
    n_oracles: usize,
) -> claimnet_core::pipeline::RunConfig {
    use claimnet_core::io;
    use claimnet_core::pipeline::{AnnotatorConfig, RunConfig};
    io::write_claims(&dir.join("claims.jsonl"), &data.claims).unwrap();
    io::write_embeddings(&dir.join("embeddings.jsonl"), &data.embeddings).unwrap();
    io::write_partition(&dir.join("truth.tsv"), &data.truth).unwrap();
    let mut config = RunConfig::new(
        dir.join("claims.jsonl"),
        dir.join("embeddings.jsonl"),
        dir.join("out"),
    );
    config.annotators = (0..n_oracles)
        .map(|i| AnnotatorConfig::Oracle {
            name: format!("oracle{i}"),
            partition: dir.join("truth.tsv"),
        })
        .collect();
    config
}

/// Smallest within-group and largest cross-group cosine similarity.
pub fn separation(data: &Planted) -> (f64, f64) {
    let (mut intra, mut inter) = (f64::INFINITY, f64::NEG_INFINITY);
    let items: Vec<(&str, &[f32])> = data.embeddings.iter().collect();
    for (i, (a, va)) in items.iter().enumerate() {
        for (b, vb) in &items[i + 1..] {
            let s = claimnet_core::vecmath::dot(va, vb);
            if data.truth.cluster_of(a) == data.truth.cluster_of(b) {
                intra = intra.min(s);
            } else {
                inter = inter.max(s);
            }
        }
    }
    (intra, inter)
}
