//! Dataset statistics: cluster sizes, multilingual composition and how
//! quickly claims repeat within a cluster.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::Result;
use crate::model::{check_id_sets, ClaimStore, Partition};

/// Days covered by the repetition histogram.
pub const HISTOGRAM_DAYS: i64 = 100;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PartitionStats {
    pub n_clusters: usize,
    pub n_claims: usize,
    pub avg_cluster_size: f64,
    pub max_cluster_size: usize,
    pub n_languages: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MultilingualStats {
    pub n_monolingual: usize,
    pub n_multilingual: usize,
    /// Mean distinct-language count over multilingual clusters; 0 when there are none.
    pub avg_unique_languages_in_multilingual: f64,
    /// False when there were no multilingual clusters to average over.
    pub average_defined: bool,
}

fn check_cover(partition: &Partition, claims: &ClaimStore) -> Result<()> {
    check_id_sets(partition.ids(), claims.ids())
}

pub fn partition_stats(partition: &Partition, claims: &ClaimStore) -> Result<PartitionStats> {
    check_cover(partition, claims)?;
    let clusters = partition.clusters();
    let languages: BTreeSet<&str> = claims.iter().map(|c| c.language.as_str()).collect();
    let n_clusters = clusters.len();
    let n_claims = partition.len();
    Ok(PartitionStats {
        n_clusters,
        n_claims,
        avg_cluster_size: if n_clusters == 0 {
            0.0
        } else {
            n_claims as f64 / n_clusters as f64
        },
        max_cluster_size: clusters.values().map(Vec::len).max().unwrap_or(0),
        n_languages: languages.len(),
    })
}

pub fn multilingual_stats(partition: &Partition, claims: &ClaimStore) -> Result<MultilingualStats> {
    check_cover(partition, claims)?;
    let mut n_monolingual = 0;
    let mut multilingual_langs = Vec::new();
    for members in partition.clusters().values() {
        let langs: BTreeSet<&str> = members
            .iter()
            .filter_map(|m| claims.get(m))
            .map(|c| c.language.as_str())
            .collect();
        if langs.len() >= 2 {
            multilingual_langs.push(langs.len());
        } else {
            n_monolingual += 1;
        }
    }
    let n_multilingual = multilingual_langs.len();
    let average_defined = n_multilingual > 0;
    Ok(MultilingualStats {
        n_monolingual,
        n_multilingual,
        avg_unique_languages_in_multilingual: if average_defined {
            multilingual_langs.iter().sum::<usize>() as f64 / n_multilingual as f64
        } else {
            0.0
        },
        average_defined,
    })
}

/// Claims per language, most frequent first.
pub fn language_counts(claims: &ClaimStore) -> Vec<(String, usize)> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for c in claims.iter() {
        *counts.entry(c.language.as_str()).or_insert(0) += 1;
    }
    let mut out: Vec<(String, usize)> = counts
        .into_iter()
        .map(|(l, n)| (l.to_string(), n))
        .collect();
    out.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TemporalReport {
    /// Day offsets of every non-first dated claim from its cluster's earliest date, ascending.
    pub offsets: Vec<i64>,
    pub p50: Option<f64>,
    pub p75: Option<f64>,
    /// Counts for offsets `0..HISTOGRAM_DAYS`, one bin per day.
    pub histogram: Vec<(i64, usize)>,
    pub n_clusters_contributing: usize,
    pub n_undated: usize,
}

impl TemporalReport {
    pub fn histogram_csv(&self) -> String {
        let mut s = String::from("day,count\n");
        for (day, count) in &self.histogram {
            let _ = writeln!(s, "{day},{count}");
        }
        s
    }
}

/// Lower-interpolation quantile of ascending `sorted` values.
pub fn quantile_lower(sorted: &[i64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let idx = (q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64).floor() as usize;
    Some(sorted[idx] as f64)
}

pub fn temporal_repetition(partition: &Partition, claims: &ClaimStore) -> TemporalReport {
    let mut offsets = Vec::new();
    let mut n_undated = 0;
    let mut contributing = 0;
    for members in partition.clusters().values() {
        let mut dates = Vec::with_capacity(members.len());
        for m in members {
            match claims.get(m).and_then(|c| c.published_date()) {
                Some(d) => dates.push(d),
                None => n_undated += 1,
            }
        }
        if dates.len() < 2 {
            continue;
        }
        contributing += 1;
        dates.sort_unstable();
        let first = dates[0];
        offsets.extend(dates[1..].iter().map(|d| (*d - first).num_days()));
    }
    offsets.sort_unstable();
    let mut histogram: Vec<(i64, usize)> = (0..HISTOGRAM_DAYS).map(|d| (d, 0)).collect();
    for &o in &offsets {
        if (0..HISTOGRAM_DAYS).contains(&o) {
            histogram[o as usize].1 += 1;
        }
    }
    TemporalReport {
        p50: quantile_lower(&offsets, 0.5),
        p75: quantile_lower(&offsets, 0.75),
        offsets,
        histogram,
        n_clusters_contributing: contributing,
        n_undated,
    }
}

/// Aligned text table of dataset-level statistics.
pub fn render_stats_table(rows: &[(&str, &PartitionStats, &MultilingualStats)]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<14} {:>10} {:>10} {:>10} {:>10} {:>10} {:>14} {:>12}",
        "Dataset",
        "#Clusters",
        "#Claims",
        "AvgSize",
        "MaxSize",
        "#Language",
        "Mono/Multi",
        "AvgLangs"
    );
    for (name, p, m) in rows {
        let _ = writeln!(
            s,
            "{:<14} {:>10} {:>10} {:>10.2} {:>10} {:>10} {:>14} {:>12.1}",
            name,
            p.n_clusters,
            p.n_claims,
            p.avg_cluster_size,
            p.max_cluster_size,
            p.n_languages,
            format!("{}/{}", m.n_monolingual, m.n_multilingual),
            m.avg_unique_languages_in_multilingual
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Claim;

    fn store(items: &[(&str, &str, Option<&str>)]) -> ClaimStore {
        ClaimStore::new(
            items
                .iter()
                .map(|(id, lang, date)| {
                    let c = Claim::new(*id, "t", *lang);
                    match date {
                        Some(d) => c.with_date(*d),
                        None => c,
                    }
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_cluster_stats() {
        let claims = store(&[("a", "en", None), ("b", "en", None), ("c", "es", None)]);
        let p = Partition::from_groups([vec!["a", "b", "c"]]);
        let s = partition_stats(&p, &claims).unwrap();
        assert_eq!(
            (
                s.n_clusters,
                s.n_claims,
                s.avg_cluster_size,
                s.max_cluster_size
            ),
            (1, 3, 3.0, 3)
        );
        assert_eq!(s.n_languages, 2);
        let bad = Partition::from_groups([vec!["a", "b"]]);
        assert!(partition_stats(&bad, &claims).is_err());
    }

    #[test]
    fn multilingual_toy() {
        let claims = store(&[("a", "en", None), ("b", "es", None), ("c", "en", None)]);
        let p = Partition::from_groups([vec!["a", "b"], vec!["c"]]);
        let m = multilingual_stats(&p, &claims).unwrap();
        assert_eq!((m.n_monolingual, m.n_multilingual), (1, 1));
        assert_eq!(m.avg_unique_languages_in_multilingual, 2.0);
        assert!(m.average_defined);

        let mono = store(&[("a", "en", None), ("b", "en", None)]);
        let m = multilingual_stats(&Partition::from_groups([vec!["a", "b"]]), &mono).unwrap();
        assert_eq!((m.n_monolingual, m.n_multilingual), (1, 0));
        assert_eq!(m.avg_unique_languages_in_multilingual, 0.0);
        assert!(!m.average_defined);
    }

    #[test]
    fn temporal_offsets() {
        let claims = store(&[
            ("a", "en", Some("2021-03-01")),
            ("b", "en", Some("2021-03-03")),
            ("c", "en", Some("2021-03-11")),
            ("d", "en", None),
            ("e", "en", Some("2020-01-01")),
        ]);
        let p = Partition::from_groups([vec!["a", "b", "c", "d"], vec!["e"]]);
        let r = temporal_repetition(&p, &claims);
        assert_eq!(r.offsets, vec![2, 10]);
        assert_eq!(r.n_undated, 1);
        assert_eq!(r.n_clusters_contributing, 1);
        assert_eq!(r.p50, Some(2.0));
        assert_eq!(r.p75, Some(2.0));
        assert_eq!(r.histogram[2], (2, 1));
        assert_eq!(r.histogram.len(), 100);
        assert!(r.histogram_csv().starts_with("day,count\n0,0\n"));

        let singles = Partition::singletons(["a", "b", "c", "d", "e"]);
        let r = temporal_repetition(&singles, &claims);
        assert!(r.offsets.is_empty());
        assert_eq!(r.p50, None);
    }

    #[test]
    fn lower_quantile() {
        let v = [1, 2, 3, 4];
        assert_eq!(quantile_lower(&v, 0.5), Some(2.0));
        assert_eq!(quantile_lower(&v, 0.75), Some(3.0));
        assert_eq!(quantile_lower(&v, 1.0), Some(4.0));
    }

    #[test]
    fn languages_sorted_by_count() {
        let claims = store(&[("a", "es", None), ("b", "en", None), ("c", "es", None)]);
        assert_eq!(
            language_counts(&claims),
            vec![("es".to_string(), 2), ("en".to_string(), 1)]
        );
    }
}
