//! Dense-vector primitives and the embedding store.

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Dot product accumulated in f64.
#[inline]
pub fn dot(u: &[f32], v: &[f32]) -> f64 {
    u.iter().zip(v).map(|(&a, &b)| a as f64 * b as f64).sum()
}

#[inline]
pub fn norm(v: &[f32]) -> f64 {
    dot(v, v).sqrt()
}

pub fn cosine_similarity(u: &[f32], v: &[f32]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            found: v.len(),
        });
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroVector { context: None });
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// Returns `v / ‖v‖`. Vectors already unit-length at f32 precision are
/// returned unchanged so normalization is idempotent bit for bit.
pub fn l2_normalize(v: &[f32]) -> Result<Vec<f32>> {
    let sq = dot(v, v);
    if sq == 0.0 {
        return Err(Error::ZeroVector { context: None });
    }
    if (sq - 1.0).abs() <= 4.0 * f32::EPSILON as f64 {
        return Ok(v.to_vec());
    }
    let n = sq.sqrt();
    Ok(v.iter().map(|&x| (x as f64 / n) as f32).collect())
}

/// Component-wise mean, not re-normalized.
pub fn centroid<'a, I>(vectors: I) -> Result<Vec<f32>>
where
    I: IntoIterator<Item = &'a [f32]>,
{
    let mut iter = vectors.into_iter();
    let first = iter
        .next()
        .ok_or(Error::EmptyInput("centroid of no vectors"))?;
    let mut sum: Vec<f64> = first.iter().map(|&x| x as f64).collect();
    let mut count = 1usize;
    for v in iter {
        if v.len() != sum.len() {
            return Err(Error::DimensionMismatch {
                expected: sum.len(),
                found: v.len(),
            });
        }
        for (s, &x) in sum.iter_mut().zip(v) {
            *s += x as f64;
        }
        count += 1;
    }
    Ok(sum.into_iter().map(|s| (s / count as f64) as f32).collect())
}

/// Unit-norm vectors keyed by claim id, stored contiguously in insertion order.
#[derive(Clone, Debug)]
pub struct EmbeddingSet {
    dim: usize,
    ids: Vec<String>,
    data: Vec<f32>,
    by_id: HashMap<String, usize>,
}

impl EmbeddingSet {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        Ok(EmbeddingSet {
            dim,
            ids: Vec::new(),
            data: Vec::new(),
            by_id: HashMap::new(),
        })
    }

    pub fn from_pairs<S, V>(dim: usize, items: impl IntoIterator<Item = (S, V)>) -> Result<Self>
    where
        S: Into<String>,
        V: AsRef<[f32]>,
    {
        let mut set = EmbeddingSet::new(dim)?;
        for (id, v) in items {
            set.insert(id, v.as_ref())?;
        }
        Ok(set)
    }

    /// Validates and L2-normalizes `vector` before storing it.
    pub fn insert(&mut self, id: impl Into<String>, vector: &[f32]) -> Result<()> {
        let id = id.into();
        if vector.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: vector.len(),
            });
        }
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(id));
        }
        if self.by_id.contains_key(&id) {
            return Err(Error::DuplicateId(id));
        }
        let unit =
            l2_normalize(vector).map_err(|_| Error::zero_vector(format!("embedding `{id}`")))?;
        self.by_id.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.data.extend_from_slice(&unit);
        Ok(())
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

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.by_id.get(id).map(|&i| self.vector(i))
    }

    pub fn require(&self, id: &str) -> Result<&[f32]> {
        self.get(id)
            .ok_or_else(|| Error::UnknownClaimId(id.to_string()))
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    /// Vector at insertion position `i`.
    pub fn vector(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.ids
            .iter()
            .map(String::as_str)
            .zip(self.data.chunks_exact(self.dim))
    }

    /// Copy with entries reordered by ascending id.
    pub fn sorted_by_id(&self) -> EmbeddingSet {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| self.ids[a].cmp(&self.ids[b]));
        let mut out = EmbeddingSet {
            dim: self.dim,
            ids: Vec::with_capacity(self.len()),
            data: Vec::with_capacity(self.data.len()),
            by_id: HashMap::with_capacity(self.len()),
        };
        for i in order {
            out.by_id.insert(self.ids[i].clone(), out.ids.len());
            out.ids.push(self.ids[i].clone());
            out.data.extend_from_slice(self.vector(i));
        }
        out
    }
}
