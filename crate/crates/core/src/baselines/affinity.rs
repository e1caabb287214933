//! Affinity propagation over cosine similarities.
//!
//! Responsibilities and availabilities are exchanged with damping until the
//! exemplar set stays unchanged for `convergence_window` consecutive
//! iterations or `max_iterations` is reached. Non-convergence is reported on
//! the result rather than as an error.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Partition;
use crate::vecmath::{dot, EmbeddingSet};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preference {
    /// Median of the off-diagonal similarities.
    MedianSimilarity,
    Value(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AffinityPropagationConfig {
    pub damping: f64,
    pub preference: Preference,
    pub max_iterations: usize,
    pub convergence_window: usize,
}

impl Default for AffinityPropagationConfig {
    fn default() -> Self {
        AffinityPropagationConfig {
            damping: 0.9,
            preference: Preference::MedianSimilarity,
            max_iterations: 500,
            convergence_window: 50,
        }
    }
}

impl AffinityPropagationConfig {
    pub fn check(&self) -> Result<()> {
        if !(0.5..1.0).contains(&self.damping) {
            return Err(Error::Config(format!(
                "damping {} outside [0.5, 1)",
                self.damping
            )));
        }
        if self.convergence_window == 0 || self.max_iterations == 0 {
            return Err(Error::Config("iteration limits must be positive".into()));
        }
        if let Preference::Value(v) = self.preference {
            if !v.is_finite() {
                return Err(Error::Config("preference must be finite".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AffinityResult {
    pub partition: Partition,
    /// Exemplar claim ids, ascending.
    pub exemplars: Vec<String>,
    pub converged: bool,
    pub iterations: usize,
    pub preference: f64,
}

/// Dense similarity matrix with the preference on the diagonal.
fn similarity_matrix(set: &EmbeddingSet, preference: Preference) -> (Vec<f64>, f64) {
    let n = set.len();
    let mut s = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v = dot(set.vector(i), set.vector(j)).clamp(-1.0, 1.0);
            s[i * n + j] = v;
            s[j * n + i] = v;
        }
    }
    let pref = match preference {
        Preference::Value(v) => v,
        Preference::MedianSimilarity => {
            let mut off: Vec<f64> = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| s[i * n + j])
                .collect();
            median(&mut off).unwrap_or(0.0)
        }
    };
    for i in 0..n {
        s[i * n + i] = pref;
    }
    (s, pref)
}

fn median(v: &mut [f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len().is_multiple_of(2) {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    })
}

pub fn affinity_propagation(
    embeddings: &EmbeddingSet,
    config: &AffinityPropagationConfig,
) -> Result<AffinityResult> {
    config.check()?;
    if embeddings.is_empty() {
        return Err(Error::EmptyInput("affinity propagation over no vectors"));
    }
    let set = embeddings.sorted_by_id();
    let n = set.len();
    let (s, preference) = similarity_matrix(&set, config.preference);
    if n == 1 {
        return Ok(AffinityResult {
            partition: Partition::singletons([set.id(0)]),
            exemplars: vec![set.id(0).to_string()],
            converged: true,
            iterations: 0,
            preference,
        });
    }

    let lambda = config.damping;
    let mut r = vec![0.0f64; n * n];
    let mut a = vec![0.0f64; n * n];
    let mut exemplars = vec![false; n];
    let mut stable = 0usize;
    let mut converged = false;
    let mut iterations = 0;

    for it in 0..config.max_iterations {
        iterations = it + 1;
        // responsibilities
        for i in 0..n {
            let row = i * n;
            let (mut first, mut first_k, mut second) = (f64::NEG_INFINITY, 0, f64::NEG_INFINITY);
            for k in 0..n {
                let v = a[row + k] + s[row + k];
                if v > first {
                    second = first;
                    first = v;
                    first_k = k;
                } else if v > second {
                    second = v;
                }
            }
            for k in 0..n {
                let competitor = if k == first_k { second } else { first };
                let fresh = s[row + k] - competitor;
                r[row + k] = lambda * r[row + k] + (1.0 - lambda) * fresh;
            }
        }
        // availabilities
        for k in 0..n {
            let support: f64 = (0..n)
                .map(|i| {
                    if i == k {
                        r[k * n + k]
                    } else {
                        r[i * n + k].max(0.0)
                    }
                })
                .sum();
            for i in 0..n {
                let idx = i * n + k;
                let fresh = if i == k {
                    support - r[idx]
                } else {
                    (support - r[idx].max(0.0)).min(0.0)
                };
                a[idx] = lambda * a[idx] + (1.0 - lambda) * fresh;
            }
        }

        let current: Vec<bool> = (0..n).map(|k| a[k * n + k] + r[k * n + k] > 0.0).collect();
        if current == exemplars {
            stable += 1;
        } else {
            stable = 1;
            exemplars = current;
        }
        if stable >= config.convergence_window && exemplars.iter().any(|&e| e) {
            converged = true;
            break;
        }
    }

    let centers: Vec<usize> = (0..n).filter(|&k| exemplars[k]).collect();
    let partition = if centers.is_empty() {
        Partition::singletons(set.ids().iter().cloned())
    } else {
        Partition::from_assignment((0..n).map(|i| {
            let owner = if exemplars[i] {
                i
            } else {
                // most similar exemplar; the first (smallest id) wins ties
                let mut best = centers[0];
                for &c in &centers[1..] {
                    if s[i * n + c] > s[i * n + best] {
                        best = c;
                    }
                }
                best
            };
            (set.id(i).to_string(), set.id(owner).to_string())
        }))
    };
    Ok(AffinityResult {
        partition,
        exemplars: centers.iter().map(|&c| set.id(c).to_string()).collect(),
        converged,
        iterations,
        preference,
    })
}
