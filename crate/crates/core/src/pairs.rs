//! Candidate pairs, exact-duplicate labeling, annotator verdicts and consensus.
//!
//! External annotators exchange JSON-lines batch files: for every stage the
//! core writes `<prefix>.<stage>.requests.jsonl` and expects the annotator to
//! produce `<prefix>.<stage>.responses.jsonl`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ann::HnswIndex;
use crate::error::{Error, Result};
use crate::model::{
    normalize_text, ClaimPair, ClaimStore, ConsensusPolicy, Label, Partition, Verdict,
};
use crate::vecmath::EmbeddingSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    AutoExact,
    Consensus,
    Oracle,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LabeledPair {
    #[serde(flatten)]
    pub pair: ClaimPair,
    pub label: Label,
    pub provenance: Provenance,
}

#[derive(Clone, Debug)]
pub enum AnnotatorKind {
    /// Similar iff normalized comparison texts are equal.
    ExactDup,
    /// Similar iff both claims share a cluster of the reference partition.
    Oracle(Partition),
    /// Batch-file annotator rooted at this path prefix.
    External(PathBuf),
}

#[derive(Clone, Debug)]
pub struct AnnotatorSpec {
    pub name: String,
    pub kind: AnnotatorKind,
}

impl AnnotatorSpec {
    pub fn new(name: impl Into<String>, kind: AnnotatorKind) -> Self {
        AnnotatorSpec {
            name: name.into(),
            kind,
        }
    }

    /// Request and response file paths for `stage`.
    pub fn batch_paths(&self, stage: &str) -> Option<(PathBuf, PathBuf)> {
        match &self.kind {
            AnnotatorKind::External(prefix) => Some(batch_paths(prefix, stage)),
            _ => None,
        }
    }
}

pub fn batch_paths(prefix: &Path, stage: &str) -> (PathBuf, PathBuf) {
    let base = prefix.as_os_str().to_string_lossy();
    (
        PathBuf::from(format!("{base}.{stage}.requests.jsonl")),
        PathBuf::from(format!("{base}.{stage}.responses.jsonl")),
    )
}

/// Each claim paired with its `k` nearest other claims, deduplicated and
/// sorted by pair key.
pub fn generate_candidate_pairs(
    embeddings: &EmbeddingSet,
    index: &HnswIndex,
    k: usize,
) -> Result<Vec<ClaimPair>> {
    if index.is_empty() {
        return Err(Error::EmptyIndex);
    }
    if index.len() != embeddings.len() {
        return Err(Error::IndexMismatch {
            index: index.len(),
            embeddings: embeddings.len(),
        });
    }
    let per_claim: Vec<Vec<ClaimPair>> = (0..embeddings.len())
        .into_par_iter()
        .map(|i| {
            let id = embeddings.id(i);
            index
                .query_knn(embeddings.vector(i), k, Some(id))?
                .into_iter()
                .map(|nb| ClaimPair::new(id, nb.id))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let unique: BTreeSet<ClaimPair> = per_claim.into_iter().flatten().collect();
    Ok(unique.into_iter().collect())
}

fn comparison_key(claims: &ClaimStore, id: &str) -> Result<String> {
    Ok(normalize_text(claims.require(id)?.comparison_text()))
}

/// Splits `pairs` into exact duplicates (labeled similar) and the rest.
pub fn auto_label_exact_duplicates(
    pairs: &[ClaimPair],
    claims: &ClaimStore,
) -> Result<(Vec<LabeledPair>, Vec<ClaimPair>)> {
    let mut labeled = Vec::new();
    let mut remaining = Vec::new();
    for pair in pairs {
        if comparison_key(claims, pair.a())? == comparison_key(claims, pair.b())? {
            labeled.push(LabeledPair {
                pair: pair.clone(),
                label: Label::Similar,
                provenance: Provenance::AutoExact,
            });
        } else {
            remaining.push(pair.clone());
        }
    }
    Ok((labeled, remaining))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AnnotationRequest {
    pub pair_a: String,
    pub pair_b: String,
    pub text_a: String,
    pub text_b: String,
}

/// Writes one request line per pair, texts in English when available.
pub fn write_annotation_requests(
    path: &Path,
    pairs: &[ClaimPair],
    claims: &ClaimStore,
) -> Result<()> {
    let io = |e| Error::io(path, e);
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io)?;
    }
    let mut w = BufWriter::new(fs::File::create(path).map_err(io)?);
    for pair in pairs {
        let req = AnnotationRequest {
            pair_a: pair.a().to_string(),
            pair_b: pair.b().to_string(),
            text_a: claims.require(pair.a())?.comparison_text().to_string(),
            text_b: claims.require(pair.b())?.comparison_text().to_string(),
        };
        serde_json::to_writer(&mut w, &req).map_err(|e| io(e.into()))?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

#[derive(Deserialize)]
struct ResponseLine {
    pair_a: String,
    pair_b: String,
    label: String,
}

/// Parses an annotator response file into pair → label.
pub fn read_annotation_responses(path: &Path) -> Result<BTreeMap<ClaimPair, Label>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let malformed = |line: usize, message: String| Error::MalformedVerdict {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut out = BTreeMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let resp: ResponseLine =
            serde_json::from_str(&line).map_err(|e| malformed(lineno, e.to_string()))?;
        let label = Label::parse(&resp.label).ok_or_else(|| {
            malformed(
                lineno,
                format!("label `{}` is not similar/dissimilar", resp.label),
            )
        })?;
        let pair = ClaimPair::new(resp.pair_a, resp.pair_b)
            .map_err(|e| malformed(lineno, e.to_string()))?;
        if out.insert(pair.clone(), label).is_some() {
            return Err(malformed(
                lineno,
                format!("second response for pair {pair}"),
            ));
        }
    }
    Ok(out)
}

/// One verdict per (pair, annotator).
///
/// External annotators get a request file for `stage`; if the matching
/// response file is absent the call fails with `MissingResponseFile` and the
/// request file stays on disk for the annotator to process.
pub fn collect_verdicts(
    pairs: &[ClaimPair],
    annotators: &[AnnotatorSpec],
    claims: &ClaimStore,
    stage: &str,
) -> Result<Vec<Verdict>> {
    if annotators.is_empty() {
        return Err(Error::Config("at least one annotator is required".into()));
    }
    let mut names = BTreeSet::new();
    for a in annotators {
        if !names.insert(a.name.as_str()) {
            return Err(Error::Config(format!(
                "duplicate annotator name `{}`",
                a.name
            )));
        }
    }
    for pair in pairs {
        claims.require(pair.a())?;
        claims.require(pair.b())?;
    }

    let mut verdicts = Vec::with_capacity(pairs.len() * annotators.len());
    for annotator in annotators {
        let labels: Vec<Label> = match &annotator.kind {
            AnnotatorKind::ExactDup => pairs
                .iter()
                .map(|p| {
                    Ok(Label::from_bool(
                        comparison_key(claims, p.a())? == comparison_key(claims, p.b())?,
                    ))
                })
                .collect::<Result<_>>()?,
            AnnotatorKind::Oracle(reference) => pairs
                .iter()
                .map(|p| {
                    let ca = reference.cluster_of(p.a());
                    let cb = reference.cluster_of(p.b());
                    Label::from_bool(ca.is_some() && ca == cb)
                })
                .collect(),
            AnnotatorKind::External(prefix) => {
                let (requests, responses) = batch_paths(prefix, stage);
                if !responses.exists() {
                    write_annotation_requests(&requests, pairs, claims)?;
                    return Err(Error::MissingResponseFile {
                        annotator: annotator.name.clone(),
                        path: responses,
                        requests,
                    });
                }
                let answered = read_annotation_responses(&responses)?;
                pairs
                    .iter()
                    .map(|p| {
                        answered
                            .get(p)
                            .copied()
                            .ok_or_else(|| Error::MissingVerdict {
                                annotator: annotator.name.clone(),
                                pair: p.clone(),
                            })
                    })
                    .collect::<Result<_>>()?
            }
        };
        verdicts.extend(pairs.iter().zip(labels).map(|(p, label)| Verdict {
            pair: p.clone(),
            annotator: annotator.name.clone(),
            label,
        }));
    }
    Ok(verdicts)
}

/// Combines verdicts per pair. The annotator set of the run is every name
/// appearing in `verdicts`; each pair must carry exactly one verdict from each.
pub fn aggregate_consensus(
    verdicts: &[Verdict],
    policy: ConsensusPolicy,
) -> Result<Vec<LabeledPair>> {
    let annotators: BTreeSet<&str> = verdicts.iter().map(|v| v.annotator.as_str()).collect();
    let mut by_pair: BTreeMap<&ClaimPair, BTreeMap<&str, Label>> = BTreeMap::new();
    for v in verdicts {
        if by_pair
            .entry(&v.pair)
            .or_default()
            .insert(v.annotator.as_str(), v.label)
            .is_some()
        {
            return Err(Error::DuplicateVerdict {
                annotator: v.annotator.clone(),
                pair: v.pair.clone(),
            });
        }
    }
    by_pair
        .into_iter()
        .map(|(pair, labels)| {
            if labels.len() != annotators.len() {
                return Err(Error::IncompleteVerdicts {
                    pair: pair.clone(),
                    have: labels.len(),
                    want: annotators.len(),
                });
            }
            let similar = labels.values().filter(|&&l| l == Label::Similar).count();
            let agreed = match policy {
                ConsensusPolicy::Unanimous => similar == labels.len(),
                ConsensusPolicy::Majority => 2 * similar > labels.len(),
            };
            Ok(LabeledPair {
                pair: pair.clone(),
                label: Label::from_bool(agreed),
                provenance: Provenance::Consensus,
            })
        })
        .collect()
}

/// Share of commonly judged pairs on which two annotators agree.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Agreement {
    pub annotator_a: String,
    pub annotator_b: String,
    pub shared_pairs: usize,
    pub agreement: f64,
}

/// Pairwise label agreement for every pair of annotators.
pub fn pairwise_agreement(verdicts: &[Verdict]) -> Vec<Agreement> {
    let mut by_annotator: BTreeMap<&str, HashMap<&ClaimPair, Label>> = BTreeMap::new();
    for v in verdicts {
        by_annotator
            .entry(v.annotator.as_str())
            .or_default()
            .insert(&v.pair, v.label);
    }
    let names: Vec<&str> = by_annotator.keys().copied().collect();
    let mut out = Vec::new();
    for (i, a) in names.iter().enumerate() {
        for b in &names[i + 1..] {
            let (la, lb) = (&by_annotator[a], &by_annotator[b]);
            let mut shared = 0usize;
            let mut same = 0usize;
            for (pair, label) in la {
                if let Some(other) = lb.get(pair) {
                    shared += 1;
                    same += usize::from(label == other);
                }
            }
            out.push(Agreement {
                annotator_a: a.to_string(),
                annotator_b: b.to_string(),
                shared_pairs: shared,
                agreement: if shared == 0 {
                    0.0
                } else {
                    same as f64 / shared as f64
                },
            });
        }
    }
    out
}
