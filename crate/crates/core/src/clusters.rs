//! Sub-cluster formation by union-find over similar pairs, centroid-based
//! merge proposals, and the manual review/merge round trip.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::Serialize;

use crate::ann::{brute_force_knn, HnswIndex, HnswParams, Neighbor};
use crate::error::{Error, Result};
use crate::model::{ClaimPair, ClaimStore, ConsensusPolicy, Label, Partition};
use crate::pairs::{aggregate_consensus, collect_verdicts, AnnotatorSpec, LabeledPair};
use crate::vecmath::{centroid, cosine_similarity, dot, EmbeddingSet};

/// Above this many clusters, merge candidates come from an HNSW index over
/// centroids instead of an exhaustive scan.
pub const CENTROID_ANN_THRESHOLD: usize = 5_000;

/// Clusters above this size are listed for manual audit.
pub const AUDIT_MIN_SIZE: usize = 20;

/// Disjoint sets over `0..n` with path compression and union by rank.
#[derive(Clone, Debug)]
pub struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
    components: usize,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            rank: vec![0; n],
            components: n,
        }
    }

    pub fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = x;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    /// Returns true when `x` and `y` were in different sets.
    pub fn union(&mut self, x: usize, y: usize) -> bool {
        let (rx, ry) = (self.find(x), self.find(y));
        if rx == ry {
            return false;
        }
        match self.rank[rx].cmp(&self.rank[ry]) {
            std::cmp::Ordering::Less => self.parent[rx] = ry,
            std::cmp::Ordering::Greater => self.parent[ry] = rx,
            std::cmp::Ordering::Equal => {
                self.parent[ry] = rx;
                self.rank[rx] += 1;
            }
        }
        self.components -= 1;
        true
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    /// Component label (root) of every element.
    pub fn labels(&mut self) -> Vec<usize> {
        (0..self.len()).map(|i| self.find(i)).collect()
    }
}

/// Connected components of the similar-pair graph over `universe`. Claims in
/// no similar pair become singletons; dissimilar pairs are ignored.
pub fn build_subclusters(pairs: &[LabeledPair], universe: &[String]) -> Result<Partition> {
    let index: HashMap<&str, usize> = universe
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    if index.len() != universe.len() {
        let mut seen = BTreeSet::new();
        let dup = universe
            .iter()
            .find(|id| !seen.insert(id.as_str()))
            .cloned();
        return Err(Error::DuplicateId(dup.unwrap_or_default()));
    }
    let lookup = |id: &str| {
        index
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownClaimId(id.to_string()))
    };
    let mut uf = UnionFind::new(universe.len());
    for lp in pairs.iter().filter(|lp| lp.label == Label::Similar) {
        uf.union(lookup(lp.pair.a())?, lookup(lp.pair.b())?);
    }
    Ok(partition_from_union_find(&mut uf, universe))
}

fn partition_from_union_find(uf: &mut UnionFind, ids: &[String]) -> Partition {
    let labels = uf.labels();
    let mut groups: HashMap<usize, Vec<&str>> = HashMap::new();
    for (i, root) in labels.into_iter().enumerate() {
        groups.entry(root).or_default().push(&ids[i]);
    }
    Partition::from_groups(groups.into_values())
}

/// Per-cluster centroid and centroid-nearest member.
#[derive(Clone, Debug)]
pub struct ClusterSummary {
    pub cluster: String,
    pub size: usize,
    pub centroid: Vec<f32>,
    pub representative: String,
}

/// Centroids and representatives of every cluster, in cluster-id order.
pub fn summarize_clusters(
    partition: &Partition,
    embeddings: &EmbeddingSet,
) -> Result<Vec<ClusterSummary>> {
    let clusters = partition.clusters();
    let clusters: Vec<(&str, Vec<&str>)> = clusters.into_iter().collect();
    clusters
        .into_par_iter()
        .map(|(cluster, members)| {
            let vectors: Vec<&[f32]> = members
                .iter()
                .map(|m| embeddings.require(m))
                .collect::<Result<_>>()?;
            let c = centroid(vectors.iter().copied())?;
            let mut best: Option<(f64, &str)> = None;
            for (m, v) in members.iter().zip(&vectors) {
                let sim = cosine_similarity(&c, v)
                    .map_err(|_| Error::zero_vector(format!("centroid of cluster `{cluster}`")))?;
                // members are sorted, so strict > keeps the smallest id on ties
                if best.is_none_or(|(b, _)| sim > b) {
                    best = Some((sim, m));
                }
            }
            Ok(ClusterSummary {
                cluster: cluster.to_string(),
                size: members.len(),
                centroid: c,
                representative: best.map(|(_, m)| m.to_string()).unwrap_or_default(),
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MergeCandidate {
    pub cluster_a: String,
    pub cluster_b: String,
    pub centroid_similarity: f64,
    pub representative_a: String,
    pub representative_b: String,
}

impl MergeCandidate {
    pub fn representative_pair(&self) -> Result<ClaimPair> {
        ClaimPair::new(
            self.representative_a.as_str(),
            self.representative_b.as_str(),
        )
    }
}

fn centroid_set(summaries: &[ClusterSummary], dim: usize) -> Result<EmbeddingSet> {
    let mut set = EmbeddingSet::new(dim)?;
    for s in summaries {
        set.insert(s.cluster.as_str(), &s.centroid)
            .map_err(|e| match e {
                Error::ZeroVector { .. } => {
                    Error::zero_vector(format!("centroid of cluster `{}`", s.cluster))
                }
                other => other,
            })?;
    }
    Ok(set)
}

/// Cluster pairs whose centroids are among each other's `merge_top_k`
/// nearest and at least `merge_sim_threshold` similar, sorted by cluster ids.
pub fn propose_merge_candidates(
    partition: &Partition,
    embeddings: &EmbeddingSet,
    top_k: usize,
    threshold: f64,
    ann: &HnswParams,
) -> Result<Vec<MergeCandidate>> {
    let summaries = summarize_clusters(partition, embeddings)?;
    if summaries.len() < 2 {
        return Ok(Vec::new());
    }
    let centroids = centroid_set(&summaries, embeddings.dim())?;
    let index = if summaries.len() > CENTROID_ANN_THRESHOLD {
        Some(HnswIndex::build(&centroids, ann.clone())?)
    } else {
        None
    };
    let by_cluster: HashMap<&str, &ClusterSummary> =
        summaries.iter().map(|s| (s.cluster.as_str(), s)).collect();

    let neighbors: Vec<Vec<Neighbor>> = summaries
        .par_iter()
        .map(|s| {
            let q = centroids.require(&s.cluster)?;
            match &index {
                Some(ix) => ix.query_knn(q, top_k, Some(&s.cluster)),
                None => brute_force_knn(&centroids, q, top_k, Some(&s.cluster)),
            }
        })
        .collect::<Result<_>>()?;

    let mut found: BTreeMap<(&str, &str), f64> = BTreeMap::new();
    for (s, nbs) in summaries.iter().zip(&neighbors) {
        for nb in nbs.iter().filter(|nb| nb.similarity >= threshold) {
            let key = if s.cluster.as_str() < nb.id.as_str() {
                (s.cluster.as_str(), nb.id.as_str())
            } else {
                (nb.id.as_str(), s.cluster.as_str())
            };
            found.entry(key).or_insert(nb.similarity);
        }
    }
    Ok(found
        .into_iter()
        .map(|((a, b), sim)| MergeCandidate {
            cluster_a: a.to_string(),
            cluster_b: b.to_string(),
            centroid_similarity: sim,
            representative_a: by_cluster[a].representative.clone(),
            representative_b: by_cluster[b].representative.clone(),
        })
        .collect())
}

#[derive(Clone, Debug)]
pub struct MergeOutcome {
    pub partition: Partition,
    /// Consensus labels of the representative pairs.
    pub labeled: Vec<LabeledPair>,
    pub merges_accepted: usize,
}

/// Annotates each candidate's representative pair and unions the clusters
/// of every pair judged similar.
pub fn merge_pass(
    partition: &Partition,
    candidates: &[MergeCandidate],
    annotators: &[AnnotatorSpec],
    policy: ConsensusPolicy,
    claims: &ClaimStore,
    stage: &str,
) -> Result<MergeOutcome> {
    if candidates.is_empty() {
        return Ok(MergeOutcome {
            partition: partition.clone(),
            labeled: Vec::new(),
            merges_accepted: 0,
        });
    }
    let mut pair_to_clusters: BTreeMap<ClaimPair, Vec<(&str, &str)>> = BTreeMap::new();
    for c in candidates {
        for id in [&c.cluster_a, &c.cluster_b] {
            if partition.cluster_of(id) != Some(id.as_str()) {
                return Err(Error::UnknownClusterId(id.clone()));
            }
        }
        pair_to_clusters
            .entry(c.representative_pair()?)
            .or_default()
            .push((&c.cluster_a, &c.cluster_b));
    }
    let pairs: Vec<ClaimPair> = pair_to_clusters.keys().cloned().collect();
    let verdicts = collect_verdicts(&pairs, annotators, claims, stage)?;
    let labeled = aggregate_consensus(&verdicts, policy)?;

    let decisions: Vec<(String, String)> = labeled
        .iter()
        .filter(|lp| lp.label == Label::Similar)
        .flat_map(|lp| pair_to_clusters[&lp.pair].iter())
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect();
    let merges_accepted = decisions.len();
    let partition = apply_manual_merges(partition, &decisions)?;
    Ok(MergeOutcome {
        partition,
        labeled,
        merges_accepted,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReviewRow {
    pub cluster_a: String,
    pub cluster_b: String,
    pub similarity: f64,
    pub sample_text_a: String,
    pub sample_text_b: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditRow {
    pub cluster: String,
    pub size: usize,
    pub sample_text: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ReviewReport {
    pub rows: Vec<ReviewRow>,
    pub audit: Vec<AuditRow>,
}

/// Every cluster pair with centroid similarity strictly above `threshold`,
/// most similar first, plus clusters larger than [`AUDIT_MIN_SIZE`].
/// The partition is not modified.
pub fn propose_manual_merges(
    partition: &Partition,
    embeddings: &EmbeddingSet,
    claims: &ClaimStore,
    threshold: f64,
) -> Result<ReviewReport> {
    let summaries = summarize_clusters(partition, embeddings)?;
    let centroids = centroid_set(&summaries, embeddings.dim())?;
    let sample = |s: &ClusterSummary| -> Result<String> {
        Ok(claims
            .require(&s.representative)?
            .comparison_text()
            .to_string())
    };

    let mut scored: Vec<(usize, usize, f64)> = (0..summaries.len())
        .into_par_iter()
        .flat_map_iter(|i| {
            let vi = centroids.vector(i);
            let centroids = &centroids;
            (i + 1..summaries.len()).filter_map(move |j| {
                let sim = dot(vi, centroids.vector(j)).clamp(-1.0, 1.0);
                (sim > threshold).then_some((i, j, sim))
            })
        })
        .collect();
    scored.sort_by(|x, y| {
        y.2.total_cmp(&x.2)
            .then_with(|| (x.0, x.1).cmp(&(y.0, y.1)))
    });

    let rows = scored
        .into_iter()
        .map(|(i, j, similarity)| {
            Ok(ReviewRow {
                cluster_a: summaries[i].cluster.clone(),
                cluster_b: summaries[j].cluster.clone(),
                similarity,
                sample_text_a: sample(&summaries[i])?,
                sample_text_b: sample(&summaries[j])?,
            })
        })
        .collect::<Result<_>>()?;
    let audit = summaries
        .iter()
        .filter(|s| s.size > AUDIT_MIN_SIZE)
        .map(|s| {
            Ok(AuditRow {
                cluster: s.cluster.clone(),
                size: s.size,
                sample_text: sample(s)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ReviewReport { rows, audit })
}

/// Unions the listed cluster pairs and re-canonicalizes.
pub fn apply_manual_merges(
    partition: &Partition,
    decisions: &[(String, String)],
) -> Result<Partition> {
    if decisions.is_empty() {
        return Ok(partition.clone());
    }
    let clusters = partition.clusters();
    let names: Vec<&str> = clusters.keys().copied().collect();
    let position: HashMap<&str, usize> = names.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let lookup = |id: &str| {
        position
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownClusterId(id.to_string()))
    };
    let mut uf = UnionFind::new(names.len());
    for (a, b) in decisions {
        uf.union(lookup(a)?, lookup(b)?);
    }
    let labels = uf.labels();
    let mut groups: HashMap<usize, Vec<&str>> = HashMap::new();
    for (i, members) in clusters.values().enumerate() {
        groups
            .entry(labels[i])
            .or_default()
            .extend(members.iter().copied());
    }
    Ok(Partition::from_groups(groups.into_values()))
}
