//! Hierarchical Navigable Small World graph over unit vectors, plus the
//! exhaustive scan used as its oracle.
//!
//! Distance is `1 - cosine`. Node levels are drawn as
//! `floor(-ln(u) / ln(M))` from a seeded ChaCha stream, so a fixed seed and
//! insertion order always produce the same graph. Neighbor lists are chosen
//! with the diversity heuristic and topped back up from the pruned
//! candidates, which keeps the bottom layer well connected.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::vecmath::{dot, l2_normalize, EmbeddingSet};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HnswParams {
    /// Max links per node on upper layers; layer 0 allows `2 * m`.
    pub m: usize,
    pub ef_construction: usize,
    pub ef_search: usize,
    pub seed: u64,
}

impl Default for HnswParams {
    fn default() -> Self {
        HnswParams {
            m: 16,
            ef_construction: 200,
            ef_search: 100,
            seed: 42,
        }
    }
}

impl HnswParams {
    pub fn level_multiplier(&self) -> f64 {
        1.0 / (self.m as f64).ln()
    }

    fn max_links(&self, layer: usize) -> usize {
        if layer == 0 {
            2 * self.m
        } else {
            self.m
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::Config("hnsw m must be at least 2".into()));
        }
        if self.ef_construction == 0 || self.ef_search == 0 {
            return Err(Error::Config("hnsw ef values must be positive".into()));
        }
        Ok(())
    }
}

/// A retrieved neighbor.
#[derive(Clone, Debug, PartialEq)]
pub struct Neighbor {
    pub id: String,
    pub similarity: f64,
}

/// Orders by similarity descending, then id ascending.
fn rank_neighbors(out: &mut [Neighbor]) {
    out.sort_by(|x, y| {
        y.similarity
            .total_cmp(&x.similarity)
            .then_with(|| x.id.cmp(&y.id))
    });
}

#[derive(Clone, Copy, Debug)]
struct Scored {
    dist: f64,
    node: u32,
}

impl PartialEq for Scored {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Scored {}

impl PartialOrd for Scored {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scored {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then_with(|| self.node.cmp(&other.node))
    }
}

struct VisitedSet {
    words: Vec<u64>,
}

impl VisitedSet {
    fn new(n: usize) -> Self {
        VisitedSet {
            words: vec![0; n.div_ceil(64)],
        }
    }

    /// Marks `i`; returns false if it was already marked.
    fn insert(&mut self, i: u32) -> bool {
        let (w, b) = ((i / 64) as usize, i % 64);
        let fresh = self.words[w] & (1 << b) == 0;
        self.words[w] |= 1 << b;
        fresh
    }
}

#[derive(Clone, Debug)]
pub struct HnswIndex {
    params: HnswParams,
    dim: usize,
    ids: Vec<String>,
    by_id: HashMap<String, u32>,
    data: Vec<f32>,
    /// `links[node][layer]`; a node's level is `links[node].len() - 1`.
    links: Vec<Vec<Vec<u32>>>,
    entry: Option<u32>,
    max_level: usize,
    rng: ChaCha8Rng,
}

impl HnswIndex {
    pub fn new(dim: usize, params: HnswParams) -> Result<Self> {
        params.check()?;
        if dim == 0 {
            return Err(Error::Config("index dimension must be positive".into()));
        }
        let rng = ChaCha8Rng::seed_from_u64(params.seed);
        Ok(HnswIndex {
            params,
            dim,
            ids: Vec::new(),
            by_id: HashMap::new(),
            data: Vec::new(),
            links: Vec::new(),
            entry: None,
            max_level: 0,
            rng,
        })
    }

    /// Inserts every embedding in set order.
    pub fn build(embeddings: &EmbeddingSet, params: HnswParams) -> Result<Self> {
        if embeddings.is_empty() {
            return Err(Error::EmptyInput("cannot build an index over no vectors"));
        }
        let mut index = HnswIndex::new(embeddings.dim(), params)?;
        index.ids.reserve(embeddings.len());
        index.data.reserve(embeddings.len() * embeddings.dim());
        for (id, v) in embeddings.iter() {
            index.insert(id, v)?;
        }
        Ok(index)
    }

    pub fn params(&self) -> &HnswParams {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn entry_point(&self) -> Option<&str> {
        self.entry.map(|e| self.ids[e as usize].as_str())
    }

    pub fn max_level(&self) -> usize {
        self.max_level
    }

    pub fn level_of(&self, id: &str) -> Option<usize> {
        self.by_id
            .get(id)
            .map(|&n| self.links[n as usize].len() - 1)
    }

    /// Neighbor ids of `id` on `layer`.
    pub fn links_of(&self, id: &str, layer: usize) -> Option<Vec<&str>> {
        let node = *self.by_id.get(id)? as usize;
        let layer_links = self.links[node].get(layer)?;
        Some(
            layer_links
                .iter()
                .map(|&n| self.ids[n as usize].as_str())
                .collect(),
        )
    }

    /// Node count per layer, bottom first.
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.max_level + 1];
        for l in &self.links {
            for s in sizes.iter_mut().take(l.len()) {
                *s += 1;
            }
        }
        sizes
    }

    fn vector(&self, node: u32) -> &[f32] {
        let i = node as usize * self.dim;
        &self.data[i..i + self.dim]
    }

    #[inline]
    fn dist_to(&self, q: &[f32], node: u32) -> f64 {
        1.0 - dot(q, self.vector(node))
    }

    fn random_level(&mut self) -> usize {
        // u in (0, 1]
        let u: f64 = 1.0 - self.rng.gen::<f64>();
        (-u.ln() * self.params.level_multiplier()).floor() as usize
    }

    pub fn insert(&mut self, id: impl Into<String>, vector: &[f32]) -> Result<()> {
        let id = id.into();
        if vector.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: vector.len(),
            });
        }
        if self.by_id.contains_key(&id) {
            return Err(Error::DuplicateId(id));
        }
        if self.ids.len() >= u32::MAX as usize {
            return Err(Error::Config("index is full".into()));
        }
        let unit =
            l2_normalize(vector).map_err(|_| Error::zero_vector(format!("vector `{id}`")))?;
        let level = self.random_level();
        let node = self.ids.len() as u32;
        self.by_id.insert(id.clone(), node);
        self.ids.push(id);
        self.data.extend_from_slice(&unit);
        self.links.push(vec![Vec::new(); level + 1]);

        let Some(entry) = self.entry else {
            self.entry = Some(node);
            self.max_level = level;
            return Ok(());
        };

        let q = unit.as_slice();
        let mut eps = vec![Scored {
            dist: self.dist_to(q, entry),
            node: entry,
        }];
        for layer in (level + 1..=self.max_level).rev() {
            eps = self.search_layer(q, &eps, 1, layer);
        }
        for layer in (0..=level.min(self.max_level)).rev() {
            let found = self.search_layer(q, &eps, self.params.ef_construction, layer);
            let chosen = self.select_neighbors(&found, self.params.m);
            for &nb in &chosen {
                self.links[nb as usize][layer].push(node);
                if self.links[nb as usize][layer].len() > self.params.max_links(layer) {
                    self.shrink_links(nb, layer);
                }
            }
            self.links[node as usize][layer] = chosen;
            eps = found;
        }
        if level > self.max_level {
            self.entry = Some(node);
            self.max_level = level;
        }
        Ok(())
    }

    fn shrink_links(&mut self, node: u32, layer: usize) {
        let base = self.vector(node);
        let mut scored: Vec<Scored> = self.links[node as usize][layer]
            .iter()
            .map(|&n| Scored {
                dist: 1.0 - dot(base, self.vector(n)),
                node: n,
            })
            .collect();
        scored.sort_unstable();
        let kept = self.select_neighbors(&scored, self.params.max_links(layer));
        self.links[node as usize][layer] = kept;
    }

    /// Diversity heuristic over `candidates` (ascending by distance), padded
    /// with pruned candidates up to `m`.
    fn select_neighbors(&self, candidates: &[Scored], m: usize) -> Vec<u32> {
        let mut chosen: Vec<u32> = Vec::with_capacity(m);
        let mut pruned: Vec<u32> = Vec::new();
        for c in candidates {
            if chosen.len() >= m {
                break;
            }
            let cv = self.vector(c.node);
            let diverse = chosen
                .iter()
                .all(|&s| 1.0 - dot(cv, self.vector(s)) > c.dist);
            if diverse {
                chosen.push(c.node);
            } else {
                pruned.push(c.node);
            }
        }
        for p in pruned {
            if chosen.len() >= m {
                break;
            }
            chosen.push(p);
        }
        chosen
    }

    /// Beam search on one layer; result ascending by distance.
    fn search_layer(
        &self,
        q: &[f32],
        entry_points: &[Scored],
        ef: usize,
        layer: usize,
    ) -> Vec<Scored> {
        let mut visited = VisitedSet::new(self.ids.len());
        let mut candidates: BinaryHeap<Reverse<Scored>> = BinaryHeap::new();
        let mut found: BinaryHeap<Scored> = BinaryHeap::new();
        for &ep in entry_points {
            if visited.insert(ep.node) {
                candidates.push(Reverse(ep));
                found.push(ep);
            }
        }
        while found.len() > ef {
            found.pop();
        }
        while let Some(Reverse(current)) = candidates.pop() {
            let furthest = found.peek().map_or(f64::INFINITY, |f| f.dist);
            if current.dist > furthest {
                break;
            }
            let Some(neighbors) = self.links[current.node as usize].get(layer) else {
                continue;
            };
            for &nb in neighbors {
                if !visited.insert(nb) {
                    continue;
                }
                let d = self.dist_to(q, nb);
                let furthest = found.peek().map_or(f64::INFINITY, |f| f.dist);
                if found.len() < ef || d < furthest {
                    let s = Scored { dist: d, node: nb };
                    candidates.push(Reverse(s));
                    found.push(s);
                    if found.len() > ef {
                        found.pop();
                    }
                }
            }
        }
        found.into_sorted_vec()
    }

    /// Approximate top-`k` by cosine similarity using the configured `ef_search`.
    pub fn query_knn(&self, q: &[f32], k: usize, exclude: Option<&str>) -> Result<Vec<Neighbor>> {
        self.query_knn_with_ef(q, k, exclude, self.params.ef_search)
    }

    pub fn query_knn_with_ef(
        &self,
        q: &[f32],
        k: usize,
        exclude: Option<&str>,
        ef_search: usize,
    ) -> Result<Vec<Neighbor>> {
        if q.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: q.len(),
            });
        }
        let Some(entry) = self.entry else {
            return Err(Error::EmptyIndex);
        };
        if k == 0 {
            return Ok(Vec::new());
        }
        let q = l2_normalize(q).map_err(|_| Error::zero_vector("query"))?;
        let excluded = exclude.and_then(|id| self.by_id.get(id).copied());
        let ef = ef_search.max(k + usize::from(excluded.is_some()));

        let mut eps = vec![Scored {
            dist: self.dist_to(&q, entry),
            node: entry,
        }];
        for layer in (1..=self.max_level).rev() {
            eps = self.search_layer(&q, &eps, 1, layer);
        }
        let found = self.search_layer(&q, &eps, ef, 0);

        let mut out: Vec<Neighbor> = found
            .into_iter()
            .filter(|s| Some(s.node) != excluded)
            .map(|s| Neighbor {
                id: self.ids[s.node as usize].clone(),
                similarity: dot(&q, self.vector(s.node)),
            })
            .collect();
        rank_neighbors(&mut out);
        out.truncate(k);
        Ok(out)
    }

    /// Digest identifying an index built from `embeddings` with `params`.
    pub fn cache_key(embeddings: &EmbeddingSet, params: &HnswParams) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(b"claimnet-hnsw-v1");
        h.update((embeddings.dim() as u64).to_le_bytes());
        for (id, v) in embeddings.iter() {
            h.update((id.len() as u64).to_le_bytes());
            h.update(id.as_bytes());
            for x in v {
                h.update(x.to_le_bytes());
            }
        }
        for p in [params.m, params.ef_construction, params.ef_search] {
            h.update((p as u64).to_le_bytes());
        }
        h.update(params.seed.to_le_bytes());
        h.finalize().into()
    }

    /// Writes the graph to a binary cache file tagged with `key`.
    pub fn save(&self, path: &Path, key: &[u8; 32]) -> Result<()> {
        let io = |e| Error::io(path, e);
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        let mut buf: Vec<u8> = Vec::new();
        buf.extend_from_slice(CACHE_MAGIC);
        buf.extend_from_slice(key);
        for v in [
            self.params.m as u64,
            self.params.ef_construction as u64,
            self.params.ef_search as u64,
            self.params.seed,
            self.dim as u64,
            self.ids.len() as u64,
            self.entry.map_or(u64::MAX, u64::from),
            self.max_level as u64,
        ] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf.extend_from_slice(&self.rng.get_word_pos().to_le_bytes());
        for (node, id) in self.ids.iter().enumerate() {
            buf.extend_from_slice(&(id.len() as u64).to_le_bytes());
            buf.extend_from_slice(id.as_bytes());
            for x in self.vector(node as u32) {
                buf.extend_from_slice(&x.to_le_bytes());
            }
            let layers = &self.links[node];
            buf.extend_from_slice(&(layers.len() as u64).to_le_bytes());
            for l in layers {
                buf.extend_from_slice(&(l.len() as u64).to_le_bytes());
                for &n in l {
                    buf.extend_from_slice(&n.to_le_bytes());
                }
            }
            if buf.len() > 1 << 20 {
                w.write_all(&buf).map_err(io)?;
                buf.clear();
            }
        }
        w.write_all(&buf).map_err(io)?;
        w.flush().map_err(io)
    }

    /// Loads a cache written by [`HnswIndex::save`]. Returns `Ok(None)` when
    /// the file was produced for a different key.
    pub fn load(path: &Path, key: &[u8; 32]) -> Result<Option<Self>> {
        let mut r = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
        let bad = |m: &str| Error::parse(path, 0, format!("corrupt index cache: {m}"));
        let mut magic = [0u8; 8];
        read_exact(&mut r, &mut magic, path)?;
        if &magic != CACHE_MAGIC {
            return Err(bad("bad magic"));
        }
        let mut stored = [0u8; 32];
        read_exact(&mut r, &mut stored, path)?;
        if &stored != key {
            return Ok(None);
        }
        let m = read_u64(&mut r, path)? as usize;
        let ef_construction = read_u64(&mut r, path)? as usize;
        let ef_search = read_u64(&mut r, path)? as usize;
        let seed = read_u64(&mut r, path)?;
        let dim = read_u64(&mut r, path)? as usize;
        let n = read_u64(&mut r, path)? as usize;
        let entry = read_u64(&mut r, path)?;
        let max_level = read_u64(&mut r, path)? as usize;
        let mut word = [0u8; 16];
        read_exact(&mut r, &mut word, path)?;
        let params = HnswParams {
            m,
            ef_construction,
            ef_search,
            seed,
        };
        let mut index = HnswIndex::new(dim, params).map_err(|_| bad("bad parameters"))?;
        index.rng.set_word_pos(u128::from_le_bytes(word));
        index.max_level = max_level;
        index.entry = if entry == u64::MAX {
            None
        } else {
            Some(u32::try_from(entry).map_err(|_| bad("entry point"))?)
        };
        for node in 0..n {
            let len = read_u64(&mut r, path)? as usize;
            let mut id = vec![0u8; len];
            read_exact(&mut r, &mut id, path)?;
            let id = String::from_utf8(id).map_err(|_| bad("id is not utf-8"))?;
            let mut raw = vec![0u8; dim * 4];
            read_exact(&mut r, &mut raw, path)?;
            index.data.extend(
                raw.chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])),
            );
            let n_layers = read_u64(&mut r, path)? as usize;
            let mut layers = Vec::with_capacity(n_layers);
            for _ in 0..n_layers {
                let count = read_u64(&mut r, path)? as usize;
                let mut raw = vec![0u8; count * 4];
                read_exact(&mut r, &mut raw, path)?;
                let l: Vec<u32> = raw
                    .chunks_exact(4)
                    .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect();
                if l.iter().any(|&x| x as usize >= n) {
                    return Err(bad("link out of range"));
                }
                layers.push(l);
            }
            if layers.is_empty() {
                return Err(bad("node without layers"));
            }
            index.by_id.insert(id.clone(), node as u32);
            index.ids.push(id);
            index.links.push(layers);
        }
        if index.entry.is_some_and(|e| e as usize >= n) {
            return Err(bad("entry point out of range"));
        }
        Ok(Some(index))
    }
}

const CACHE_MAGIC: &[u8; 8] = b"CLMHNSW1";

fn read_exact(r: &mut impl Read, buf: &mut [u8], path: &Path) -> Result<()> {
    r.read_exact(buf).map_err(|e| Error::io(path, e))
}

fn read_u64(r: &mut impl Read, path: &Path) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b, path)?;
    Ok(u64::from_le_bytes(b))
}

/// Exact top-`k` by exhaustive scan; same contract as [`HnswIndex::query_knn`].
pub fn brute_force_knn(
    embeddings: &EmbeddingSet,
    q: &[f32],
    k: usize,
    exclude: Option<&str>,
) -> Result<Vec<Neighbor>> {
    if embeddings.is_empty() {
        return Err(Error::EmptyInput("brute-force search over no vectors"));
    }
    if q.len() != embeddings.dim() {
        return Err(Error::DimensionMismatch {
            expected: embeddings.dim(),
            found: q.len(),
        });
    }
    let q = l2_normalize(q).map_err(|_| Error::zero_vector("query"))?;
    let mut out: Vec<Neighbor> = embeddings
        .iter()
        .filter(|(id, _)| Some(*id) != exclude)
        .map(|(id, v)| Neighbor {
            id: id.to_string(),
            similarity: dot(&q, v),
        })
        .collect();
    rank_neighbors(&mut out);
    out.truncate(k);
    Ok(out)
}
