//! Domain types shared by every stage: claims, canonical pairs, verdicts and
//! partitions, plus text normalization and dataset validation.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

/// One fact-checked claim.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Claim {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub text_en: Option<String>,
    pub language: String,
    /// Raw `YYYY-MM-DD` string; see [`Claim::published_date`].
    #[serde(default)]
    pub published_at: Option<String>,
    #[serde(default)]
    pub source: Option<String>,
}

impl Claim {
    pub fn new(
        id: impl Into<String>,
        text: impl Into<String>,
        language: impl Into<String>,
    ) -> Self {
        Claim {
            id: id.into(),
            text: text.into(),
            text_en: None,
            language: language.into(),
            published_at: None,
            source: None,
        }
    }

    pub fn with_english(mut self, text_en: impl Into<String>) -> Self {
        self.text_en = Some(text_en.into());
        self
    }

    pub fn with_date(mut self, date: impl Into<String>) -> Self {
        self.published_at = Some(date.into());
        self
    }

    /// English translation when present, the original text otherwise.
    pub fn comparison_text(&self) -> &str {
        match self.text_en.as_deref() {
            Some(en) if !en.trim().is_empty() => en,
            _ => &self.text,
        }
    }

    /// Parsed publication date. `None` when absent or malformed.
    pub fn published_date(&self) -> Option<NaiveDate> {
        self.published_at.as_deref().and_then(parse_date)
    }
}

pub(crate) fn parse_date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").ok()
}

fn is_valid_language(lang: &str) -> bool {
    !lang.is_empty()
        && lang
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'-')
        && lang.as_bytes()[0].is_ascii_lowercase()
}

/// Claims indexed by id, in input order.
#[derive(Clone, Debug, Default)]
pub struct ClaimStore {
    claims: Vec<Claim>,
    by_id: HashMap<String, usize>,
}

impl ClaimStore {
    /// Fails on the first duplicate id.
    pub fn new(claims: Vec<Claim>) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(claims.len());
        for (i, c) in claims.iter().enumerate() {
            if by_id.insert(c.id.clone(), i).is_some() {
                return Err(Error::DuplicateId(c.id.clone()));
            }
        }
        Ok(ClaimStore { claims, by_id })
    }

    pub fn get(&self, id: &str) -> Option<&Claim> {
        self.by_id.get(id).map(|&i| &self.claims[i])
    }

    pub fn require(&self, id: &str) -> Result<&Claim> {
        self.get(id)
            .ok_or_else(|| Error::UnknownClaimId(id.to_string()))
    }

    pub fn len(&self) -> usize {
        self.claims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.claims.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Claim> {
        self.claims.iter()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.claims.iter().map(|c| c.id.as_str())
    }

    pub fn as_slice(&self) -> &[Claim] {
        &self.claims
    }
}

/// Canonical-composition, lowercase, whitespace-collapsed form of `s`.
pub fn normalize_text(s: &str) -> String {
    let composed: String = s.nfc().collect();
    let lowered: String = composed.to_lowercase().nfc().collect();
    let mut out = String::with_capacity(lowered.len());
    for word in lowered.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// Unordered claim pair stored as `(min, max)` in byte order.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawPair", into = "RawPair")]
pub struct ClaimPair {
    a: String,
    b: String,
}

#[derive(Serialize, Deserialize)]
struct RawPair {
    pair_a: String,
    pair_b: String,
}

impl TryFrom<RawPair> for ClaimPair {
    type Error = Error;

    fn try_from(raw: RawPair) -> Result<Self> {
        ClaimPair::new(raw.pair_a, raw.pair_b)
    }
}

impl From<ClaimPair> for RawPair {
    fn from(p: ClaimPair) -> Self {
        RawPair {
            pair_a: p.a,
            pair_b: p.b,
        }
    }
}

impl ClaimPair {
    pub fn new(x: impl Into<String>, y: impl Into<String>) -> Result<Self> {
        let (x, y) = (x.into(), y.into());
        match x.cmp(&y) {
            std::cmp::Ordering::Less => Ok(ClaimPair { a: x, b: y }),
            std::cmp::Ordering::Greater => Ok(ClaimPair { a: y, b: x }),
            std::cmp::Ordering::Equal => Err(Error::IdenticalIds(x)),
        }
    }

    pub fn a(&self) -> &str {
        &self.a
    }

    pub fn b(&self) -> &str {
        &self.b
    }

    pub fn key(&self) -> (&str, &str) {
        (&self.a, &self.b)
    }
}

impl fmt::Display for ClaimPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.a, self.b)
    }
}

pub fn canonical_pair_key(a: &str, b: &str) -> Result<(String, String)> {
    let pair = ClaimPair::new(a, b)?;
    Ok((pair.a, pair.b))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Similar,
    Dissimilar,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Similar => "similar",
            Label::Dissimilar => "dissimilar",
        }
    }

    /// Strict parse; only the exact lowercase words are accepted.
    pub fn parse(s: &str) -> Option<Label> {
        match s {
            "similar" => Some(Label::Similar),
            "dissimilar" => Some(Label::Dissimilar),
            _ => None,
        }
    }

    pub fn from_bool(similar: bool) -> Label {
        if similar {
            Label::Similar
        } else {
            Label::Dissimilar
        }
    }
}

/// One annotator's judgment of one pair.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Verdict {
    pub pair: ClaimPair,
    pub annotator: String,
    pub label: Label,
}

#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum ConsensusPolicy {
    #[default]
    Unanimous,
    Majority,
}

/// Knobs of the sub-cluster and merge stages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineParams {
    /// Neighbors retrieved per claim for candidate pairs.
    pub knn_candidates: usize,
    /// Neighbors retrieved per cluster centroid when merging.
    pub merge_top_k: usize,
    /// Cluster pairs with centroid cosine below this are not proposed.
    pub merge_sim_threshold: f64,
    pub consensus: ConsensusPolicy,
    pub merge_passes: usize,
}

impl Default for PipelineParams {
    fn default() -> Self {
        PipelineParams {
            knn_candidates: 1,
            merge_top_k: 20,
            merge_sim_threshold: 0.75,
            consensus: ConsensusPolicy::Unanimous,
            merge_passes: 1,
        }
    }
}

impl PipelineParams {
    pub fn check(&self) -> Result<()> {
        if self.knn_candidates == 0 {
            return Err(Error::Config("knn_candidates must be at least 1".into()));
        }
        if self.merge_top_k == 0 {
            return Err(Error::Config("merge_top_k must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.merge_sim_threshold) {
            return Err(Error::Config(format!(
                "merge_sim_threshold {} outside [0, 1]",
                self.merge_sim_threshold
            )));
        }
        Ok(())
    }
}

/// Total assignment of claim ids to clusters.
///
/// Cluster ids are always the smallest (byte-order) member id, so two
/// partitions with the same grouping compare and serialize identically.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Partition {
    assignment: BTreeMap<String, String>,
}

impl Partition {
    /// Canonicalizes an arbitrary id → label map.
    pub fn from_assignment<I, K, V>(assignment: I) -> Self
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<String>,
    {
        let mut groups: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (id, label) in assignment {
            groups.entry(label.into()).or_default().push(id.into());
        }
        Self::from_groups(groups.into_values())
    }

    /// Builds a partition from disjoint groups. Later duplicates of an id
    /// move it to the later group; callers are expected to pass disjoint groups.
    pub fn from_groups<G, S>(groups: impl IntoIterator<Item = G>) -> Self
    where
        G: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut assignment = BTreeMap::new();
        for group in groups {
            let members: Vec<String> = group.into_iter().map(Into::into).collect();
            let Some(label) = members.iter().min().cloned() else {
                continue;
            };
            for m in members {
                assignment.insert(m, label.clone());
            }
        }
        let mut p = Partition { assignment };
        p.recanonicalize();
        p
    }

    pub fn singletons<S: Into<String>>(ids: impl IntoIterator<Item = S>) -> Self {
        Partition {
            assignment: ids
                .into_iter()
                .map(|id| {
                    let id = id.into();
                    (id.clone(), id)
                })
                .collect(),
        }
    }

    fn recanonicalize(&mut self) {
        let mut smallest: HashMap<&str, &str> = HashMap::new();
        for (id, label) in &self.assignment {
            // BTreeMap iteration is ordered, so the first member seen is the smallest.
            smallest.entry(label.as_str()).or_insert(id.as_str());
        }
        let relabel: HashMap<String, String> = smallest
            .into_iter()
            .filter(|(label, min)| label != min)
            .map(|(l, m)| (l.to_string(), m.to_string()))
            .collect();
        if relabel.is_empty() {
            return;
        }
        for label in self.assignment.values_mut() {
            if let Some(new) = relabel.get(label.as_str()) {
                *label = new.clone();
            }
        }
    }

    pub fn cluster_of(&self, id: &str) -> Option<&str> {
        self.assignment.get(id).map(String::as_str)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.assignment.contains_key(id)
    }

    /// Number of claims.
    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn n_clusters(&self) -> usize {
        self.assignment.values().collect::<HashSet<_>>().len()
    }

    /// `(claim_id, cluster_id)` in claim-id order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.assignment
            .iter()
            .map(|(a, b)| (a.as_str(), b.as_str()))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.assignment.keys().map(String::as_str)
    }

    /// Cluster id → sorted members, in cluster-id order.
    pub fn clusters(&self) -> BTreeMap<&str, Vec<&str>> {
        let mut out: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for (id, label) in &self.assignment {
            out.entry(label.as_str()).or_default().push(id.as_str());
        }
        out
    }

    /// True iff every cluster of `self` lies inside one cluster of `coarser`.
    pub fn is_refinement_of(&self, coarser: &Partition) -> bool {
        if self.len() != coarser.len() {
            return false;
        }
        let mut image: HashMap<&str, &str> = HashMap::new();
        for (id, label) in &self.assignment {
            let Some(target) = coarser.cluster_of(id) else {
                return false;
            };
            if *image.entry(label.as_str()).or_insert(target) != target {
                return false;
            }
        }
        true
    }

    /// Checks that both partitions cover the same ids.
    pub fn check_same_ids(&self, other: &Partition) -> Result<()> {
        check_id_sets(self.ids(), other.ids())
    }
}

pub(crate) fn check_id_sets<'a>(
    left: impl Iterator<Item = &'a str>,
    right: impl Iterator<Item = &'a str>,
) -> Result<()> {
    let left: BTreeSet<&str> = left.collect();
    let right: BTreeSet<&str> = right.collect();
    if left == right {
        return Ok(());
    }
    Err(Error::IdSetMismatch {
        only_left: left.difference(&right).map(|s| s.to_string()).collect(),
        only_right: right.difference(&left).map(|s| s.to_string()).collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    EmptyDataset,
    EmptyId { index: usize },
    DuplicateId { id: String },
    EmptyText { id: String },
    MalformedDate { id: String, value: String },
    MalformedLanguage { id: String, value: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyDataset => write!(f, "dataset has no claims"),
            Violation::EmptyId { index } => write!(f, "claim #{index}: empty id"),
            Violation::DuplicateId { id } => write!(f, "duplicate id `{id}`"),
            Violation::EmptyText { id } => write!(f, "claim `{id}`: empty text"),
            Violation::MalformedDate { id, value } => {
                write!(f, "claim `{id}`: malformed published_at `{value}`")
            }
            Violation::MalformedLanguage { id, value } => {
                write!(f, "claim `{id}`: malformed language `{value}`")
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub n_claims: usize,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate_dataset(claims: &[Claim]) -> ValidationReport {
    let mut violations = Vec::new();
    if claims.is_empty() {
        violations.push(Violation::EmptyDataset);
    }
    let mut seen: HashMap<&str, usize> = HashMap::new();
    for (index, c) in claims.iter().enumerate() {
        let id = c.id.trim();
        if id.is_empty() {
            violations.push(Violation::EmptyId { index });
            continue;
        }
        let count = seen.entry(c.id.as_str()).or_insert(0);
        *count += 1;
        // one violation per duplicated id, however many copies
        if *count == 2 {
            violations.push(Violation::DuplicateId { id: c.id.clone() });
        }
        if c.text.trim().is_empty() {
            violations.push(Violation::EmptyText { id: c.id.clone() });
        }
        if !is_valid_language(&c.language) {
            violations.push(Violation::MalformedLanguage {
                id: c.id.clone(),
                value: c.language.clone(),
            });
        }
        if let Some(date) = &c.published_at {
            if parse_date(date).is_none() {
                violations.push(Violation::MalformedDate {
                    id: c.id.clone(),
                    value: date.clone(),
                });
            }
        }
    }
    ValidationReport {
        n_claims: claims.len(),
        violations,
    }
}
