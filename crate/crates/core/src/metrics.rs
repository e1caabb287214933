//! External cluster-validity metrics computed from a contingency table.
//!
//! Conventions: natural logarithms throughout; AMI normalizes by the
//! arithmetic mean of the two entropies. Identical partitions score 1.0 on
//! every metric. Degenerate denominators fall back to 1.0 for identical
//! partitions and 0.0 otherwise.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Partition;

/// Overlap counts between a predicted (rows) and a true (columns) partition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContingencyTable {
    /// Sparse `(row, col, count)` cells with count > 0, sorted.
    cells: Vec<(usize, usize, u64)>,
    row_sums: Vec<u64>,
    col_sums: Vec<u64>,
    n: u64,
}

impl ContingencyTable {
    /// Builds from two partitions over the same ids.
    pub fn new(pred: &Partition, truth: &Partition) -> Result<Self> {
        pred.check_same_ids(truth)?;
        // both iterate in claim-id order over the same ids
        let pred_labels: Vec<&str> = pred.iter().map(|(_, c)| c).collect();
        let truth_labels: Vec<&str> = truth.iter().map(|(_, c)| c).collect();
        Self::from_labels(&pred_labels, &truth_labels)
    }

    /// Builds from parallel label vectors (item `i` has `pred[i]`, `truth[i]`).
    pub fn from_labels<P, T>(pred: &[P], truth: &[T]) -> Result<Self>
    where
        P: Ord + Clone + std::hash::Hash,
        T: Ord + Clone + std::hash::Hash,
    {
        if pred.len() != truth.len() {
            return Err(Error::DimensionMismatch {
                expected: pred.len(),
                found: truth.len(),
            });
        }
        let rows = index_labels(pred.iter());
        let cols = index_labels(truth.iter());
        let mut cells: BTreeMap<(usize, usize), u64> = BTreeMap::new();
        for (p, t) in pred.iter().zip(truth) {
            *cells.entry((rows[p], cols[t])).or_insert(0) += 1;
        }
        Ok(Self::from_cells(cells, rows.len(), cols.len()))
    }

    fn from_cells(cells: BTreeMap<(usize, usize), u64>, n_rows: usize, n_cols: usize) -> Self {
        let mut row_sums = vec![0; n_rows];
        let mut col_sums = vec![0; n_cols];
        let cells: Vec<(usize, usize, u64)> = cells
            .into_iter()
            .map(|((r, c), k)| {
                row_sums[r] += k;
                col_sums[c] += k;
                (r, c, k)
            })
            .collect();
        let n = row_sums.iter().sum();
        ContingencyTable {
            cells,
            row_sums,
            col_sums,
            n,
        }
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn n_rows(&self) -> usize {
        self.row_sums.len()
    }

    pub fn n_cols(&self) -> usize {
        self.col_sums.len()
    }

    pub fn row_sums(&self) -> &[u64] {
        &self.row_sums
    }

    pub fn col_sums(&self) -> &[u64] {
        &self.col_sums
    }

    pub fn cells(&self) -> &[(usize, usize, u64)] {
        &self.cells
    }

    /// Dense row-major copy; rows and columns follow sorted label order.
    pub fn dense(&self) -> Vec<Vec<u64>> {
        let mut out = vec![vec![0; self.n_cols()]; self.n_rows()];
        for &(r, c, k) in &self.cells {
            out[r][c] = k;
        }
        out
    }

    /// True when the two partitions group items identically.
    pub fn is_identity(&self) -> bool {
        self.cells.len() == self.n_rows() && self.cells.len() == self.n_cols()
    }

    /// Same table with the roles of the two partitions swapped.
    pub fn transposed(&self) -> Self {
        let mut cells: Vec<(usize, usize, u64)> =
            self.cells.iter().map(|&(r, c, k)| (c, r, k)).collect();
        cells.sort_unstable();
        ContingencyTable {
            cells,
            row_sums: self.col_sums.clone(),
            col_sums: self.row_sums.clone(),
            n: self.n,
        }
    }
}

fn index_labels<'a, L: Ord + Clone + std::hash::Hash + 'a>(
    labels: impl Iterator<Item = &'a L>,
) -> HashMap<L, usize> {
    let sorted: std::collections::BTreeSet<&L> = labels.collect();
    sorted
        .into_iter()
        .enumerate()
        .map(|(i, l)| (l.clone(), i))
        .collect()
}

pub fn contingency(pred: &Partition, truth: &Partition) -> Result<ContingencyTable> {
    ContingencyTable::new(pred, truth)
}

fn comb2(x: u64) -> i128 {
    let x = x as i128;
    x * (x - 1) / 2
}

pub fn adjusted_rand_index(table: &ContingencyTable) -> Result<f64> {
    if table.n < 2 {
        return Err(Error::TooFewItems {
            need: 2,
            got: table.n as usize,
        });
    }
    if table.is_identity() {
        return Ok(1.0);
    }
    let index: i128 = table.cells.iter().map(|&(_, _, k)| comb2(k)).sum();
    let rows: i128 = table.row_sums.iter().map(|&k| comb2(k)).sum();
    let cols: i128 = table.col_sums.iter().map(|&k| comb2(k)).sum();
    let total = comb2(table.n);
    // (index - rows*cols/total) / ((rows+cols)/2 - rows*cols/total), scaled by 2*total
    let num = 2 * (index * total - rows * cols);
    let den = (rows + cols) * total - 2 * rows * cols;
    if den == 0 {
        return Ok(0.0);
    }
    Ok(num as f64 / den as f64)
}

fn entropy(counts: &[u64], n: u64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    let h: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum();
    h.max(0.0)
}

pub fn mutual_information(table: &ContingencyTable) -> f64 {
    if table.n == 0 {
        return 0.0;
    }
    let n = table.n as f64;
    let ln_n = n.ln();
    let mi: f64 = table
        .cells
        .iter()
        .map(|&(r, c, k)| {
            let k_f = k as f64;
            k_f / n
                * (k_f.ln() + ln_n
                    - (table.row_sums[r] as f64).ln()
                    - (table.col_sums[c] as f64).ln())
        })
        .sum();
    mi.max(0.0)
}

/// `ln(k!)` for `k = 0..=n`, accumulated with compensated summation.
fn ln_factorials(n: u64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n as usize + 1);
    out.push(0.0);
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for k in 1..=n {
        let y = (k as f64).ln() - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
        out.push(sum);
    }
    out
}

fn size_histogram(sizes: &[u64]) -> BTreeMap<u64, u64> {
    let mut h = BTreeMap::new();
    for &s in sizes {
        *h.entry(s).or_insert(0) += 1;
    }
    h
}

/// Expected mutual information under the hypergeometric model of random
/// partitions with the table's marginals.
pub fn expected_mutual_information(table: &ContingencyTable) -> f64 {
    let n = table.n;
    if n == 0 {
        return 0.0;
    }
    let lf = ln_factorials(n);
    let nf = n as f64;
    let ln_n = nf.ln();
    let rows = size_histogram(&table.row_sums);
    let cols = size_histogram(&table.col_sums);
    let mut emi = 0.0;
    for (&a, &ma) in &rows {
        for (&b, &mb) in &cols {
            let lo = (a + b).saturating_sub(n).max(1);
            let hi = a.min(b);
            let base =
                lf[a as usize] + lf[b as usize] + lf[(n - a) as usize] + lf[(n - b) as usize]
                    - lf[n as usize];
            let ln_ab = (a as f64).ln() + (b as f64).ln();
            let mut term = 0.0;
            for k in lo..=hi {
                let kf = k as f64;
                let ln_p = base
                    - lf[k as usize]
                    - lf[(a - k) as usize]
                    - lf[(b - k) as usize]
                    - lf[(n + k - a - b) as usize];
                term += kf / nf * (ln_n + kf.ln() - ln_ab) * ln_p.exp();
            }
            emi += (ma * mb) as f64 * term;
        }
    }
    emi
}

pub fn adjusted_mutual_info(table: &ContingencyTable) -> f64 {
    if table.is_identity() {
        return 1.0;
    }
    let mi = mutual_information(table);
    let emi = expected_mutual_information(table);
    let h_pred = entropy(&table.row_sums, table.n);
    let h_true = entropy(&table.col_sums, table.n);
    let denom = 0.5 * (h_pred + h_true) - emi;
    if denom.abs() <= 1e-12 {
        return 0.0;
    }
    ((mi - emi) / denom).min(1.0)
}

/// `H(cols | rows)`.
fn conditional_entropy(table: &ContingencyTable) -> f64 {
    if table.n == 0 {
        return 0.0;
    }
    let n = table.n as f64;
    let h: f64 = table
        .cells
        .iter()
        .map(|&(r, _, k)| {
            let k = k as f64;
            -(k / n) * (k / table.row_sums[r] as f64).ln()
        })
        .sum();
    h.max(0.0)
}

/// Homogeneity, completeness and V-measure.
pub fn homogeneity_completeness_v(table: &ContingencyTable) -> (f64, f64, f64) {
    if table.is_identity() {
        return (1.0, 1.0, 1.0);
    }
    let h_true = entropy(&table.col_sums, table.n);
    let h_pred = entropy(&table.row_sums, table.n);
    let homogeneity = if h_true == 0.0 {
        1.0
    } else {
        (1.0 - conditional_entropy(table) / h_true).clamp(0.0, 1.0)
    };
    let completeness = if h_pred == 0.0 {
        1.0
    } else {
        (1.0 - conditional_entropy(&table.transposed()) / h_pred).clamp(0.0, 1.0)
    };
    let v = if homogeneity + completeness == 0.0 {
        0.0
    } else {
        2.0 * homogeneity * completeness / (homogeneity + completeness)
    };
    (homogeneity, completeness, v)
}

pub fn purity(table: &ContingencyTable) -> f64 {
    if table.n == 0 {
        return 0.0;
    }
    let mut best = vec![0u64; table.n_rows()];
    for &(r, _, k) in &table.cells {
        best[r] = best[r].max(k);
    }
    best.iter().sum::<u64>() as f64 / table.n as f64
}

/// Name of the AMI normalization recorded alongside every report.
pub const AMI_NORMALIZATION: &str = "arithmetic";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub algorithm: String,
    pub n_clusters: usize,
    pub ari: f64,
    pub ami: f64,
    pub homogeneity: f64,
    pub completeness: f64,
    pub v_measure: f64,
    pub purity: f64,
    #[serde(default = "default_ami_normalization")]
    pub ami_normalization: String,
}

fn default_ami_normalization() -> String {
    AMI_NORMALIZATION.to_string()
}

impl MetricReport {
    pub fn from_table(algorithm: impl Into<String>, table: &ContingencyTable) -> Result<Self> {
        let (homogeneity, completeness, v_measure) = homogeneity_completeness_v(table);
        Ok(MetricReport {
            algorithm: algorithm.into(),
            n_clusters: table.n_rows(),
            ari: adjusted_rand_index(table)?,
            ami: adjusted_mutual_info(table),
            homogeneity,
            completeness,
            v_measure,
            purity: purity(table),
            ami_normalization: AMI_NORMALIZATION.to_string(),
        })
    }

    pub fn table_header() -> &'static str {
        "Approach & # Clusters & ARI & AMI & HMG & CMP & V-Measure & Purity \\\\"
    }

    /// One results-table row with three decimals.
    pub fn table_row(&self) -> String {
        let mut s = String::new();
        let _ = write!(
            s,
            "{} & {} & {:.3} & {:.3} & {:.3} & {:.3} & {:.3} & {:.3} \\\\",
            self.algorithm,
            self.n_clusters,
            self.ari,
            self.ami,
            self.homogeneity,
            self.completeness,
            self.v_measure,
            self.purity
        );
        s
    }
}

pub fn evaluate(pred: &Partition, truth: &Partition, algorithm: &str) -> Result<MetricReport> {
    MetricReport::from_table(algorithm, &contingency(pred, truth)?)
}
