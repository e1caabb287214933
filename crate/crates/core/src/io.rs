//! Readers and writers for every on-disk format.
//!
//! JSON-lines files are UTF-8, one object per line, newline-terminated.
//! Parse failures carry the 1-based line number; nothing is skipped.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::clusters::{MergeCandidate, ReviewReport};
use crate::error::{Error, Result};
use crate::metrics::MetricReport;
use crate::model::{Claim, ClaimPair, Label, Partition, Verdict};
use crate::pairs::LabeledPair;
use crate::vecmath::EmbeddingSet;

pub const PARTITION_HEADER: &str = "claim_id\tcluster_id";
pub const DECISIONS_HEADER: &str = "cluster_a\tcluster_b";
pub const REVIEW_HEADER: &str = "cluster_a\tcluster_b\tsimilarity\tsample_text_a\tsample_text_b";
pub const AUDIT_HEADER: &str = "cluster_id\tsize\tsample_text";

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(BufWriter::new(
        File::create(path).map_err(|e| Error::io(path, e))?,
    ))
}

fn open_lines(path: &Path) -> Result<impl Iterator<Item = Result<(usize, String)>> + '_> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(BufReader::new(file)
        .lines()
        .enumerate()
        .map(move |(i, l)| l.map(|l| (i + 1, l)).map_err(|e| Error::io(path, e))))
}

/// Every non-empty line deserialized as `T`, with its line number.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>> {
    let mut out = Vec::new();
    for line in open_lines(path)? {
        let (n, line) = line?;
        if line.trim().is_empty() {
            return Err(Error::parse(path, n, "empty line"));
        }
        let value =
            serde_json::from_str(&line).map_err(|e| Error::parse(path, n, e.to_string()))?;
        out.push((n, value));
    }
    Ok(out)
}

pub fn write_jsonl<'a, T: Serialize + 'a>(
    path: &Path,
    items: impl IntoIterator<Item = &'a T>,
) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| io(e.into()))?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| io(e.into()))?;
    w.write_all(b"\n").map_err(io)?;
    w.flush().map_err(io)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())
        .map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_claims(path: &Path) -> Result<Vec<Claim>> {
    Ok(read_jsonl::<Claim>(path)?
        .into_iter()
        .map(|(_, c)| c)
        .collect())
}

pub fn write_claims(path: &Path, claims: &[Claim]) -> Result<()> {
    write_jsonl(path, claims)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EmbeddingHeader {
    dim: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EmbeddingLine {
    id: String,
    vector: Vec<f32>,
}

/// Loads `{"dim": D}` followed by `{"id", "vector"}` lines, normalizing each vector.
pub fn read_embeddings(path: &Path) -> Result<EmbeddingSet> {
    let mut lines = open_lines(path)?;
    let (_, first) = lines
        .next()
        .transpose()?
        .ok_or_else(|| Error::parse(path, 1, "missing {\"dim\": D} header"))?;
    let header: EmbeddingHeader = serde_json::from_str(&first)
        .map_err(|e| Error::parse(path, 1, format!("bad header: {e}")))?;
    let mut set =
        EmbeddingSet::new(header.dim).map_err(|e| Error::parse(path, 1, e.to_string()))?;
    for line in lines {
        let (n, line) = line?;
        if line.trim().is_empty() {
            return Err(Error::parse(path, n, "empty line"));
        }
        let entry: EmbeddingLine =
            serde_json::from_str(&line).map_err(|e| Error::parse(path, n, e.to_string()))?;
        set.insert(entry.id, &entry.vector)
            .map_err(|e| Error::parse(path, n, e.to_string()))?;
    }
    Ok(set)
}

pub fn write_embeddings(path: &Path, set: &EmbeddingSet) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    serde_json::to_writer(&mut w, &EmbeddingHeader { dim: set.dim() }).map_err(|e| io(e.into()))?;
    w.write_all(b"\n").map_err(io)?;
    for (id, v) in set.iter() {
        let line = EmbeddingLine {
            id: id.to_string(),
            vector: v.to_vec(),
        };
        serde_json::to_writer(&mut w, &line).map_err(|e| io(e.into()))?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

fn check_tsv_field(path: &Path, field: &str) -> Result<()> {
    if field.is_empty() || field.contains(['\t', '\n', '\r']) {
        return Err(Error::parse(
            path,
            0,
            format!("id {field:?} cannot be written to TSV"),
        ));
    }
    Ok(())
}

/// Reads `claim_id<TAB>cluster_id` rows; cluster labels may be arbitrary and
/// are canonicalized.
pub fn read_partition(path: &Path) -> Result<Partition> {
    let mut lines = open_lines(path)?;
    match lines.next().transpose()? {
        Some((_, h)) if h.trim_end_matches('\r') == PARTITION_HEADER => {}
        Some((_, h)) => {
            return Err(Error::parse(
                path,
                1,
                format!("expected header {PARTITION_HEADER:?}, got {h:?}"),
            ))
        }
        None => return Err(Error::parse(path, 1, "missing header")),
    }
    let mut assignment: BTreeMap<String, String> = BTreeMap::new();
    for line in lines {
        let (n, line) = line?;
        let line = line.trim_end_matches('\r');
        let mut fields = line.split('\t');
        let (Some(id), Some(cluster), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(Error::parse(path, n, "expected two tab-separated fields"));
        };
        if id.is_empty() || cluster.is_empty() {
            return Err(Error::parse(path, n, "empty field"));
        }
        if assignment
            .insert(id.to_string(), cluster.to_string())
            .is_some()
        {
            return Err(Error::parse(
                path,
                n,
                format!("claim `{id}` assigned twice"),
            ));
        }
    }
    Ok(Partition::from_assignment(assignment))
}

pub fn write_partition(path: &Path, partition: &Partition) -> Result<()> {
    for (id, _) in partition.iter() {
        check_tsv_field(path, id)?;
    }
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "{PARTITION_HEADER}").map_err(io)?;
    for (id, cluster) in partition.iter() {
        writeln!(w, "{id}\t{cluster}").map_err(io)?;
    }
    w.flush().map_err(io)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VerdictLine {
    pair_a: String,
    pair_b: String,
    annotator: String,
    label: String,
}

pub fn read_verdicts(path: &Path) -> Result<Vec<Verdict>> {
    read_jsonl::<VerdictLine>(path)?
        .into_iter()
        .map(|(n, v)| {
            let label = Label::parse(&v.label).ok_or_else(|| Error::MalformedVerdict {
                path: path.to_path_buf(),
                line: n,
                message: format!("label `{}` is not similar/dissimilar", v.label),
            })?;
            let pair = ClaimPair::new(v.pair_a, v.pair_b)
                .map_err(|e| Error::parse(path, n, e.to_string()))?;
            Ok(Verdict {
                pair,
                annotator: v.annotator,
                label,
            })
        })
        .collect()
}

pub fn write_verdicts(path: &Path, verdicts: &[Verdict]) -> Result<()> {
    let lines: Vec<VerdictLine> = verdicts
        .iter()
        .map(|v| VerdictLine {
            pair_a: v.pair.a().to_string(),
            pair_b: v.pair.b().to_string(),
            annotator: v.annotator.clone(),
            label: v.label.as_str().to_string(),
        })
        .collect();
    write_jsonl(path, &lines)
}

pub fn read_pairs(path: &Path) -> Result<Vec<ClaimPair>> {
    let set: BTreeSet<ClaimPair> = read_jsonl::<ClaimPair>(path)?
        .into_iter()
        .map(|(_, p)| p)
        .collect();
    Ok(set.into_iter().collect())
}

pub fn write_pairs(path: &Path, pairs: &[ClaimPair]) -> Result<()> {
    write_jsonl(path, pairs)
}

pub fn read_labeled_pairs(path: &Path) -> Result<Vec<LabeledPair>> {
    Ok(read_jsonl::<LabeledPair>(path)?
        .into_iter()
        .map(|(_, p)| p)
        .collect())
}

pub fn write_labeled_pairs(path: &Path, pairs: &[LabeledPair]) -> Result<()> {
    write_jsonl(path, pairs)
}

pub fn write_merge_candidates(path: &Path, candidates: &[MergeCandidate]) -> Result<()> {
    write_jsonl(path, candidates)
}

pub fn read_metric_report(path: &Path) -> Result<MetricReport> {
    read_json(path)
}

pub fn write_metric_report(path: &Path, report: &MetricReport) -> Result<()> {
    write_json(path, report)
}

fn flatten_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Writes the review rows to `path` and the large-cluster audit to `audit_path`.
pub fn write_review(path: &Path, audit_path: &Path, report: &ReviewReport) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "{REVIEW_HEADER}").map_err(io)?;
    for r in &report.rows {
        writeln!(
            w,
            "{}\t{}\t{:.6}\t{}\t{}",
            r.cluster_a,
            r.cluster_b,
            r.similarity,
            flatten_ws(&r.sample_text_a),
            flatten_ws(&r.sample_text_b)
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)?;

    let mut w = create(audit_path)?;
    let io = |e| Error::io(audit_path, e);
    writeln!(w, "{AUDIT_HEADER}").map_err(io)?;
    for a in &report.audit {
        writeln!(
            w,
            "{}\t{}\t{}",
            a.cluster,
            a.size,
            flatten_ws(&a.sample_text)
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Reads `cluster_a<TAB>cluster_b` merge decisions. Extra columns (such as
/// the similarity and sample texts of an edited review file) are ignored.
pub fn read_decisions(path: &Path) -> Result<Vec<(String, String)>> {
    let mut lines = open_lines(path)?;
    match lines.next().transpose()? {
        Some((_, h)) if h.starts_with(DECISIONS_HEADER) => {}
        Some((_, h)) => {
            return Err(Error::parse(
                path,
                1,
                format!("expected header starting {DECISIONS_HEADER:?}, got {h:?}"),
            ))
        }
        None => return Err(Error::parse(path, 1, "missing header")),
    }
    let mut out = Vec::new();
    for line in lines {
        let (n, line) = line?;
        let mut fields = line.trim_end_matches('\r').split('\t');
        match (fields.next(), fields.next()) {
            (Some(a), Some(b)) if !a.is_empty() && !b.is_empty() => {
                out.push((a.to_string(), b.to_string()))
            }
            _ => return Err(Error::parse(path, n, "expected cluster_a and cluster_b")),
        }
    }
    Ok(out)
}

pub fn write_decisions(path: &Path, decisions: &[(String, String)]) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "{DECISIONS_HEADER}").map_err(io)?;
    for (a, b) in decisions {
        writeln!(w, "{a}\t{b}").map_err(io)?;
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Claim;

    #[test]
    fn claims_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("claims.jsonl");
        let claims = vec![
            Claim::new("c1", "Vacuna \"X\"", "es")
                .with_english("Vaccine X")
                .with_date("2021-05-01"),
            Claim::new("c2", "plain", "en"),
            Claim {
                source: Some("Maldita".into()),
                ..Claim::new("c3", "tab\there", "pt")
            },
        ];
        write_claims(&path, &claims).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.ends_with('\n'));
        assert_eq!(read_claims(&path).unwrap(), claims);
    }

    #[test]
    fn claims_null_fields() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("claims.jsonl");
        fs::write(
            &path,
            "{\"id\":\"a\",\"text\":\"t\",\"text_en\":null,\"language\":\"en\",\"published_at\":null,\"source\":null}\n",
        )
        .unwrap();
        let c = read_claims(&path).unwrap();
        assert_eq!(c[0], Claim::new("a", "t", "en"));
    }

    #[test]
    fn claims_parse_error_has_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("claims.jsonl");
        fs::write(
            &path,
            "{\"id\":\"a\",\"text\":\"t\",\"language\":\"en\"}\n{oops\n",
        )
        .unwrap();
        assert!(matches!(
            read_claims(&path),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn embeddings_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.jsonl");
        let set = EmbeddingSet::from_pairs(3, [("a", [1.0f32, 2.0, 3.0]), ("b", [0.0, -1.0, 0.5])])
            .unwrap();
        write_embeddings(&path, &set).unwrap();
        let back = read_embeddings(&path).unwrap();
        assert_eq!(back.ids(), set.ids());
        for (id, v) in set.iter() {
            assert_eq!(back.get(id).unwrap(), v);
        }

        fs::write(
            &path,
            "{\"dim\":2}\n{\"id\":\"a\",\"vector\":[1,0]}\n{\"id\":\"b\",\"vector\":[1,0,0]}\n",
        )
        .unwrap();
        match read_embeddings(&path) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("dimension"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
        fs::write(&path, "{\"id\":\"a\",\"vector\":[1,0]}\n").unwrap();
        assert!(matches!(
            read_embeddings(&path),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn partition_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.tsv");
        let p = Partition::from_groups([vec!["b", "a"], vec!["c"]]);
        write_partition(&path, &p).unwrap();
        assert_eq!(
            fs::read_to_string(&path).unwrap(),
            "claim_id\tcluster_id\na\ta\nb\ta\nc\tc\n"
        );
        assert_eq!(read_partition(&path).unwrap(), p);

        fs::write(&path, "claim_id\tcluster_id\nx\t7\ny\t7\nz\t3\n").unwrap();
        let ext = read_partition(&path).unwrap();
        assert_eq!(ext, Partition::from_groups([vec!["x", "y"], vec!["z"]]));

        fs::write(&path, "id\tcluster\nx\t1\n").unwrap();
        assert!(matches!(
            read_partition(&path),
            Err(Error::Parse { line: 1, .. })
        ));
        fs::write(&path, "claim_id\tcluster_id\nx\t1\nx\t2\n").unwrap();
        assert!(matches!(
            read_partition(&path),
            Err(Error::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn verdicts_round_trip_and_strict_labels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.jsonl");
        let v = vec![
            Verdict {
                pair: ClaimPair::new("b", "a").unwrap(),
                annotator: "gpt".into(),
                label: Label::Similar,
            },
            Verdict {
                pair: ClaimPair::new("c", "a").unwrap(),
                annotator: "phi".into(),
                label: Label::Dissimilar,
            },
        ];
        write_verdicts(&path, &v).unwrap();
        assert_eq!(read_verdicts(&path).unwrap(), v);
        fs::write(
            &path,
            "{\"pair_a\":\"a\",\"pair_b\":\"b\",\"annotator\":\"x\",\"label\":\"SIMILAR\"}\n",
        )
        .unwrap();
        assert!(matches!(
            read_verdicts(&path),
            Err(Error::MalformedVerdict { line: 1, .. })
        ));
    }

    #[test]
    fn metric_report_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let r = MetricReport {
            algorithm: "Agglomerative".into(),
            n_clusters: 4,
            ari: 0.25,
            ami: 0.5,
            homogeneity: 0.75,
            completeness: 0.8,
            v_measure: 0.7741935483870968,
            purity: 0.9,
            ami_normalization: "arithmetic".into(),
        };
        write_metric_report(&path, &r).unwrap();
        assert_eq!(read_metric_report(&path).unwrap(), r);
    }

    #[test]
    fn decisions_accept_review_columns() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.tsv");
        fs::write(&path, format!("{REVIEW_HEADER}\na\tb\t0.9\tx\ty\n")).unwrap();
        assert_eq!(
            read_decisions(&path).unwrap(),
            vec![("a".to_string(), "b".to_string())]
        );
        write_decisions(&path, &[("p".into(), "q".into())]).unwrap();
        assert_eq!(
            read_decisions(&path).unwrap(),
            vec![("p".to_string(), "q".to_string())]
        );
    }
}
