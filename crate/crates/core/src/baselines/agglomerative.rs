//! Bottom-up hierarchical clustering cut at a distance threshold.
//!
//! Works on a condensed pairwise distance matrix with Lance–Williams updates
//! and a per-row nearest-neighbor cache: O(n²) memory, O(n²) typical and
//! O(n³) worst-case time. Ward heights follow the usual convention where
//! merging two singletons costs their Euclidean distance.
//!
//! Points are processed in ascending id order and a cluster is labeled by
//! its smallest position, so ties between equal linkage distances resolve
//! to the lexicographically smallest pair of cluster ids regardless of the
//! input order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Partition;
use crate::vecmath::{dot, EmbeddingSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Linkage {
    Ward,
    Complete,
    Average,
    Single,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    /// Euclidean distance between unit vectors.
    Euclidean,
    /// `1 - cosine`.
    Cosine,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgglomerativeConfig {
    pub linkage: Linkage,
    pub distance_threshold: f64,
    pub metric: DistanceMetric,
}

impl Default for AgglomerativeConfig {
    fn default() -> Self {
        AgglomerativeConfig {
            linkage: Linkage::Ward,
            distance_threshold: 1.0,
            metric: DistanceMetric::Euclidean,
        }
    }
}

impl AgglomerativeConfig {
    pub fn check(&self) -> Result<()> {
        if self.linkage == Linkage::Ward && self.metric != DistanceMetric::Euclidean {
            return Err(Error::WardMetricViolation);
        }
        if self.distance_threshold.is_nan() || self.distance_threshold <= 0.0 {
            return Err(Error::Config(format!(
                "distance_threshold must be positive, got {}",
                self.distance_threshold
            )));
        }
        Ok(())
    }
}

/// One merge of the dendrogram; `a < b` are cluster labels (smallest member position).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MergeStep {
    pub a: usize,
    pub b: usize,
    pub distance: f64,
    pub size: usize,
}

struct Condensed {
    n: usize,
    data: Vec<f64>,
}

impl Condensed {
    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        i * self.n - i * (i + 1) / 2 + (j - i - 1)
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> f64 {
        self.data[self.idx(i, j)]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.data[k] = v;
    }
}

pub fn pairwise_distance(u: &[f32], v: &[f32], metric: DistanceMetric) -> f64 {
    match metric {
        DistanceMetric::Euclidean => u
            .iter()
            .zip(v)
            .map(|(&a, &b)| {
                let d = a as f64 - b as f64;
                d * d
            })
            .sum::<f64>()
            .sqrt(),
        DistanceMetric::Cosine => (1.0 - dot(u, v)).max(0.0),
    }
}

fn distance_matrix(set: &EmbeddingSet, metric: DistanceMetric) -> Condensed {
    use rayon::prelude::*;
    let n = set.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let vi = set.vector(i);
            (i + 1..n)
                .map(|j| pairwise_distance(vi, set.vector(j), metric))
                .collect()
        })
        .collect();
    Condensed {
        n,
        data: rows.into_iter().flatten().collect(),
    }
}

fn lance_williams(
    linkage: Linkage,
    d_ki: f64,
    d_kj: f64,
    d_ij: f64,
    n_i: f64,
    n_j: f64,
    n_k: f64,
) -> f64 {
    match linkage {
        Linkage::Single => d_ki.min(d_kj),
        Linkage::Complete => d_ki.max(d_kj),
        Linkage::Average => (n_i * d_ki + n_j * d_kj) / (n_i + n_j),
        Linkage::Ward => {
            let t = n_i + n_j + n_k;
            (((n_i + n_k) * d_ki * d_ki + (n_j + n_k) * d_kj * d_kj - n_k * d_ij * d_ij) / t)
                .max(0.0)
                .sqrt()
        }
    }
}

/// Runs the merge loop until the next merge would exceed the threshold.
/// Returns the merges performed and the final cluster label of each point,
/// both in terms of positions in `set` sorted by id.
fn cluster_sorted(
    set: &EmbeddingSet,
    config: &AgglomerativeConfig,
) -> (Vec<MergeStep>, Vec<usize>) {
    let n = set.len();
    let mut dist = distance_matrix(set, config.metric);
    let mut active = vec![true; n];
    let mut size = vec![1usize; n];
    let mut nn = vec![usize::MAX; n];
    let mut nn_dist = vec![f64::INFINITY; n];

    let rescan = |i: usize, active: &[bool], dist: &Condensed| -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        for (j, _) in active.iter().enumerate().filter(|&(j, &on)| on && j != i) {
            let d = dist.get(i, j);
            if d < best.1 {
                best = (j, d);
            }
        }
        best
    };
    for i in 0..n {
        (nn[i], nn_dist[i]) = rescan(i, &active, &dist);
    }

    let mut steps = Vec::new();
    let mut owner: Vec<usize> = (0..n).collect();
    loop {
        let mut pick: Option<(f64, usize, usize)> = None;
        for i in (0..n).filter(|&i| active[i] && nn[i] != usize::MAX) {
            let cand = (nn_dist[i], i.min(nn[i]), i.max(nn[i]));
            let better = match pick {
                None => true,
                Some(p) => cand.0 < p.0 || (cand.0 == p.0 && (cand.1, cand.2) < (p.1, p.2)),
            };
            if better {
                pick = Some(cand);
            }
        }
        let Some((d, a, b)) = pick else { break };
        if d > config.distance_threshold {
            break;
        }

        let (n_a, n_b) = (size[a] as f64, size[b] as f64);
        for k in 0..n {
            if !active[k] || k == a || k == b {
                continue;
            }
            let updated = lance_williams(
                config.linkage,
                dist.get(k, a),
                dist.get(k, b),
                d,
                n_a,
                n_b,
                size[k] as f64,
            );
            dist.set(k, a, updated);
        }
        active[b] = false;
        size[a] += size[b];
        steps.push(MergeStep {
            a,
            b,
            distance: d,
            size: size[a],
        });
        for o in owner.iter_mut() {
            if *o == b {
                *o = a;
            }
        }

        (nn[a], nn_dist[a]) = rescan(a, &active, &dist);
        for k in 0..n {
            if !active[k] || k == a {
                continue;
            }
            if nn[k] == a || nn[k] == b {
                (nn[k], nn_dist[k]) = rescan(k, &active, &dist);
            } else {
                let dk = dist.get(k, a);
                if dk < nn_dist[k] || (dk == nn_dist[k] && a < nn[k]) {
                    nn[k] = a;
                    nn_dist[k] = dk;
                }
            }
        }
    }
    (steps, owner)
}

/// Cluster labels as claim ids; dendrogram steps as ids of the two merged clusters.
pub struct AgglomerativeResult {
    pub partition: Partition,
    pub merges: Vec<(String, String, f64)>,
}

pub fn agglomerative_cluster(
    embeddings: &EmbeddingSet,
    config: &AgglomerativeConfig,
) -> Result<Partition> {
    Ok(agglomerative_with_merges(embeddings, config)?.partition)
}

pub fn agglomerative_with_merges(
    embeddings: &EmbeddingSet,
    config: &AgglomerativeConfig,
) -> Result<AgglomerativeResult> {
    config.check()?;
    if embeddings.is_empty() {
        return Err(Error::EmptyInput("agglomerative clustering of no vectors"));
    }
    let sorted = embeddings.sorted_by_id();
    let (steps, owner) = cluster_sorted(&sorted, config);
    let partition = Partition::from_assignment(
        owner
            .iter()
            .enumerate()
            .map(|(i, &o)| (sorted.id(i), sorted.id(o))),
    );
    let merges = steps
        .iter()
        .map(|s| {
            (
                sorted.id(s.a).to_string(),
                sorted.id(s.b).to_string(),
                s.distance,
            )
        })
        .collect();
    Ok(AgglomerativeResult { partition, merges })
}
