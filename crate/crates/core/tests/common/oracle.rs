//! Straight-line reference implementations the library is checked against.
//! Written for clarity, not speed: pair loops, per-item entropies, textbook
//! message passing.

#![allow(clippy::needless_range_loop)]

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use claimnet_core::model::Partition;
use rand::Rng;

/// Item `i` gets id `x{i:03}` and cluster `L{labels[i]}`.
pub fn to_partition(labels: &[usize]) -> Partition {
    Partition::from_assignment(
        labels
            .iter()
            .enumerate()
            .map(|(i, l)| (format!("x{i:03}"), format!("L{l}"))),
    )
}

pub fn random_labels(rng: &mut impl Rng, n: usize) -> Vec<usize> {
    let k = rng.gen_range(1..=n);
    (0..n).map(|_| rng.gen_range(0..k)).collect()
}

fn same_grouping(a: &[usize], b: &[usize]) -> bool {
    (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
}

/// ARI from the four pair counts over all `i < j`.
pub fn ari_pair_counting(pred: &[usize], truth: &[usize]) -> f64 {
    if same_grouping(pred, truth) {
        return 1.0;
    }
    let (mut both, mut only_pred, mut only_truth, mut neither) = (0f64, 0f64, 0f64, 0f64);
    for i in 0..pred.len() {
        for j in i + 1..pred.len() {
            match (pred[i] == pred[j], truth[i] == truth[j]) {
                (true, true) => both += 1.0,
                (true, false) => only_pred += 1.0,
                (false, true) => only_truth += 1.0,
                (false, false) => neither += 1.0,
            }
        }
    }
    let den =
        (both + only_pred) * (only_pred + neither) + (both + only_truth) * (only_truth + neither);
    if den == 0.0 {
        return 0.0;
    }
    2.0 * (both * neither - only_pred * only_truth) / den
}

fn counts(labels: &[usize]) -> HashMap<usize, f64> {
    let mut m = HashMap::new();
    for &l in labels {
        *m.entry(l).or_insert(0.0) += 1.0;
    }
    m
}

fn entropy(labels: &[usize]) -> f64 {
    let n = labels.len() as f64;
    counts(labels)
        .values()
        .map(|&c| -(c / n) * (c / n).ln())
        .sum()
}

/// `H(target | given)` summed item by item.
fn conditional_entropy(target: &[usize], given: &[usize]) -> f64 {
    let n = target.len() as f64;
    let mut joint: HashMap<(usize, usize), f64> = HashMap::new();
    for (&t, &g) in target.iter().zip(given) {
        *joint.entry((t, g)).or_insert(0.0) += 1.0;
    }
    let given_counts = counts(given);
    (0..target.len())
        .map(|i| -(joint[&(target[i], given[i])] / given_counts[&given[i]]).ln() / n)
        .sum()
}

/// Homogeneity, completeness, V-measure straight from the entropy definitions.
pub fn hcv_entropy(pred: &[usize], truth: &[usize]) -> (f64, f64, f64) {
    if same_grouping(pred, truth) {
        return (1.0, 1.0, 1.0);
    }
    let (h_c, h_k) = (entropy(truth), entropy(pred));
    let h = if h_c == 0.0 {
        1.0
    } else {
        1.0 - conditional_entropy(truth, pred) / h_c
    };
    let c = if h_k == 0.0 {
        1.0
    } else {
        1.0 - conditional_entropy(pred, truth) / h_k
    };
    let v = if h + c == 0.0 {
        0.0
    } else {
        2.0 * h * c / (h + c)
    };
    (h, c, v)
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|x| x as f64).product()
}

/// AMI with an unoptimized triple-loop EMI over every (row, column) cell.
pub fn ami_straight(pred: &[usize], truth: &[usize]) -> f64 {
    if same_grouping(pred, truth) {
        return 1.0;
    }
    let n = pred.len();
    let nf = n as f64;
    let rows: Vec<usize> = counts(pred).values().map(|&c| c as usize).collect();
    let cols: Vec<usize> = counts(truth).values().map(|&c| c as usize).collect();
    let mut joint: HashMap<(usize, usize), f64> = HashMap::new();
    for (&p, &t) in pred.iter().zip(truth) {
        *joint.entry((p, t)).or_insert(0.0) += 1.0;
    }
    let pc = counts(pred);
    let tc = counts(truth);
    let mi: f64 = joint
        .iter()
        .map(|(&(p, t), &nij)| nij / nf * (nf * nij / (pc[&p] * tc[&t])).ln())
        .sum();
    let mut emi = 0.0;
    for &a in &rows {
        for &b in &cols {
            let lo = (a + b).saturating_sub(n).max(1);
            for nij in lo..=a.min(b) {
                let x = nij as f64;
                let p = factorial(a) * factorial(b) * factorial(n - a) * factorial(n - b)
                    / (factorial(n)
                        * factorial(nij)
                        * factorial(a - nij)
                        * factorial(b - nij)
                        * factorial(n + nij - a - b));
                emi += x / nf * (nf * x / (a as f64 * b as f64)).ln() * p;
            }
        }
    }
    let denom = 0.5 * (entropy(pred) + entropy(truth)) - emi;
    if denom.abs() <= 1e-12 {
        return 0.0;
    }
    ((mi - emi) / denom).min(1.0)
}

/// Fraction of items that belong to their predicted cluster's majority class.
pub fn purity_count(pred: &[usize], truth: &[usize]) -> f64 {
    let mut per_cluster: BTreeMap<usize, HashMap<usize, usize>> = BTreeMap::new();
    for (&p, &t) in pred.iter().zip(truth) {
        *per_cluster.entry(p).or_default().entry(t).or_insert(0) += 1;
    }
    let hits: usize = per_cluster
        .values()
        .map(|m| m.values().copied().max().unwrap_or(0))
        .sum();
    hits as f64 / pred.len() as f64
}

/// Connected components by breadth-first traversal.
pub fn components_bfs(ids: &[String], edges: &[(String, String)]) -> Partition {
    let mut adj: HashMap<&str, Vec<&str>> =
        ids.iter().map(|id| (id.as_str(), Vec::new())).collect();
    for (a, b) in edges {
        adj.get_mut(a.as_str()).unwrap().push(b);
        adj.get_mut(b.as_str()).unwrap().push(a);
    }
    let mut seen: BTreeSet<&str> = BTreeSet::new();
    let mut groups = Vec::new();
    for id in ids {
        if !seen.insert(id) {
            continue;
        }
        let mut group = vec![id.as_str()];
        let mut queue = VecDeque::from([id.as_str()]);
        while let Some(x) = queue.pop_front() {
            for &y in &adj[x] {
                if seen.insert(y) {
                    group.push(y);
                    queue.push_back(y);
                }
            }
        }
        groups.push(group);
    }
    Partition::from_groups(groups)
}

/// Textbook affinity propagation on a full similarity matrix whose diagonal
/// holds the preference. Returns the exemplar indices after `iterations`
/// damped updates (responsibilities first, then availabilities).
pub fn affinity_reference(s: &[Vec<f64>], damping: f64, iterations: usize) -> Vec<usize> {
    let n = s.len();
    let mut r = vec![vec![0.0; n]; n];
    let mut a = vec![vec![0.0; n]; n];
    for _ in 0..iterations {
        for i in 0..n {
            for k in 0..n {
                let competitor = (0..n)
                    .filter(|&kk| kk != k)
                    .map(|kk| a[i][kk] + s[i][kk])
                    .fold(f64::NEG_INFINITY, f64::max);
                r[i][k] = damping * r[i][k] + (1.0 - damping) * (s[i][k] - competitor);
            }
        }
        let mut fresh = vec![vec![0.0; n]; n];
        for i in 0..n {
            for k in 0..n {
                let others: f64 = (0..n)
                    .filter(|&ii| ii != i && ii != k)
                    .map(|ii| r[ii][k].max(0.0))
                    .sum();
                fresh[i][k] = if i == k {
                    others
                } else {
                    (r[k][k] + others).min(0.0)
                };
            }
        }
        for i in 0..n {
            for k in 0..n {
                a[i][k] = damping * a[i][k] + (1.0 - damping) * fresh[i][k];
            }
        }
    }
    (0..n).filter(|&k| a[k][k] + r[k][k] > 0.0).collect()
}
