//! End-to-end runner: candidate pairs → consensus → sub-clusters → merge passes.
//!
//! [`run_pipeline`] loads every input before the first stage, persists each
//! stage's artifact under the output directory as it completes, and finishes
//! with `partition.tsv` plus a `manifest.json` holding the full config and
//! per-stage counts. Failures are wrapped in [`Error::Stage`] so callers can
//! tell where a run stopped; the artifacts already written stay on disk.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::ann::{HnswIndex, HnswParams};
use crate::baselines::{AffinityPropagationConfig, AgglomerativeConfig};
use crate::clusters::{build_subclusters, merge_pass, propose_merge_candidates};
use crate::error::{Error, Result};
use crate::io;
use crate::model::{check_id_sets, ClaimStore, Label, Partition, PipelineParams, ValidationReport};
use crate::pairs::{
    aggregate_consensus, auto_label_exact_duplicates, collect_verdicts, generate_candidate_pairs,
    AnnotatorKind, AnnotatorSpec, LabeledPair,
};
use crate::vecmath::EmbeddingSet;

/// Stage name used for the sub-cluster annotation round's batch files.
pub const SUBCLUSTER_STAGE: &str = "subclusters";

/// Batch-file stage name of merge pass `pass` (1-based).
pub fn merge_stage(pass: usize) -> String {
    format!("merge-{pass}")
}

/// How to construct one annotator.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AnnotatorConfig {
    ExactDup {
        name: String,
    },
    /// Answers from a reference partition TSV.
    Oracle {
        name: String,
        partition: PathBuf,
    },
    /// Batch files at `<prefix>.<stage>.{requests,responses}.jsonl`.
    External {
        name: String,
        prefix: PathBuf,
    },
}

impl AnnotatorConfig {
    pub fn name(&self) -> &str {
        match self {
            AnnotatorConfig::ExactDup { name }
            | AnnotatorConfig::Oracle { name, .. }
            | AnnotatorConfig::External { name, .. } => name,
        }
    }

    /// Parses `name=exact`, `name=oracle:<partition.tsv>` or `name=external:<prefix>`.
    pub fn parse_flag(s: &str) -> Result<Self> {
        let (name, rest) = s
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("annotator `{s}`: expected name=kind[:path]")))?;
        if name.is_empty() {
            return Err(Error::Config(format!("annotator `{s}`: empty name")));
        }
        let name = name.to_string();
        match rest.split_once(':') {
            None if rest == "exact" => Ok(AnnotatorConfig::ExactDup { name }),
            Some(("oracle", p)) if !p.is_empty() => Ok(AnnotatorConfig::Oracle {
                name,
                partition: p.into(),
            }),
            Some(("external", p)) if !p.is_empty() => Ok(AnnotatorConfig::External {
                name,
                prefix: p.into(),
            }),
            _ => Err(Error::Config(format!(
                "annotator `{s}`: kind must be exact, oracle:<path> or external:<prefix>"
            ))),
        }
    }

    fn rebase(&mut self, base: &Path) {
        match self {
            AnnotatorConfig::ExactDup { .. } => {}
            AnnotatorConfig::Oracle { partition: p, .. }
            | AnnotatorConfig::External { prefix: p, .. } => *p = rebase(base, p),
        }
    }

    /// Loads whatever the annotator needs; oracle partitions must cover every claim.
    pub fn load(&self, claims: &ClaimStore) -> Result<AnnotatorSpec> {
        let kind = match self {
            AnnotatorConfig::ExactDup { .. } => AnnotatorKind::ExactDup,
            AnnotatorConfig::Oracle { partition, .. } => {
                let reference = io::read_partition(partition)?;
                if let Some(missing) = claims.ids().find(|id| !reference.contains(id)) {
                    return Err(Error::Config(format!(
                        "oracle partition {} has no cluster for claim `{missing}`",
                        partition.display()
                    )));
                }
                AnnotatorKind::Oracle(reference)
            }
            AnnotatorConfig::External { prefix, .. } => AnnotatorKind::External(prefix.clone()),
        };
        Ok(AnnotatorSpec::new(self.name(), kind))
    }
}

fn rebase(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Everything a run needs. Relative paths in a config file are resolved
/// against the file's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub claims: PathBuf,
    pub embeddings: PathBuf,
    pub out: PathBuf,
    #[serde(default)]
    pub params: PipelineParams,
    #[serde(default)]
    pub hnsw: HnswParams,
    #[serde(default)]
    pub annotators: Vec<AnnotatorConfig>,
    #[serde(default)]
    pub agglomerative: AgglomerativeConfig,
    #[serde(default)]
    pub affinity: AffinityPropagationConfig,
    /// Worker threads; all logical cores when absent.
    #[serde(default)]
    pub threads: Option<usize>,
    /// Where to keep the serialized claim index between runs.
    #[serde(default)]
    pub index_cache: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(
        claims: impl Into<PathBuf>,
        embeddings: impl Into<PathBuf>,
        out: impl Into<PathBuf>,
    ) -> Self {
        RunConfig {
            claims: claims.into(),
            embeddings: embeddings.into(),
            out: out.into(),
            params: PipelineParams::default(),
            hnsw: HnswParams::default(),
            annotators: Vec::new(),
            agglomerative: AgglomerativeConfig::default(),
            affinity: AffinityPropagationConfig::default(),
            threads: None,
            index_cache: None,
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let mut config: RunConfig = io::read_json(path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        config.rebase(base);
        Ok(config)
    }

    pub fn rebase(&mut self, base: &Path) {
        self.claims = rebase(base, &self.claims);
        self.embeddings = rebase(base, &self.embeddings);
        self.out = rebase(base, &self.out);
        if let Some(cache) = &mut self.index_cache {
            *cache = rebase(base, cache);
        }
        for a in &mut self.annotators {
            a.rebase(base);
        }
    }

    pub fn check(&self) -> Result<()> {
        self.params.check()?;
        self.hnsw.check()?;
        if self.annotators.is_empty() {
            return Err(Error::Config("at least one annotator is required".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be positive".into()));
        }
        Ok(())
    }
}

/// Counts recorded by one merge pass.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergePassCounts {
    pub pass: usize,
    pub candidates: usize,
    pub pairs_annotated: usize,
    pub merges_accepted: usize,
    pub clusters_before: usize,
    pub clusters_after: usize,
}

/// Bookkeeping from pairs down to final clusters.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCounts {
    pub claims: usize,
    pub pairs_generated: usize,
    pub pairs_auto_labeled: usize,
    pub pairs_annotated: usize,
    /// Auto-labeled plus consensus-labeled pairs.
    pub pairs_labeled: usize,
    pub pairs_similar: usize,
    pub subclusters: usize,
    pub merge_passes: Vec<MergePassCounts>,
    pub clusters_final: usize,
}

impl StageCounts {
    /// Checks the relations any run must satisfy.
    pub fn is_consistent(&self) -> bool {
        let passes_ok = self.merge_passes.iter().all(|p| {
            p.clusters_after <= p.clusters_before
                && p.merges_accepted <= p.candidates
                && p.pairs_annotated <= p.candidates
        });
        let chained = self
            .merge_passes
            .windows(2)
            .all(|w| w[1].clusters_before == w[0].clusters_after);
        let final_ok = match (self.merge_passes.first(), self.merge_passes.last()) {
            (Some(first), Some(last)) => {
                first.clusters_before == self.subclusters
                    && last.clusters_after == self.clusters_final
            }
            _ => self.subclusters == self.clusters_final,
        };
        self.pairs_labeled == self.pairs_auto_labeled + self.pairs_annotated
            && self.pairs_labeled <= self.pairs_generated
            && self.pairs_similar <= self.pairs_labeled
            && self.subclusters <= self.claims
            && self.clusters_final <= self.subclusters
            && passes_ok
            && chained
            && final_ok
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

/// Written next to the partition; enough to reproduce the run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub config: RunConfig,
    pub counts: StageCounts,
    pub timings: Vec<StageTiming>,
}

/// Result of the in-memory pipeline.
#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub partition: Partition,
    pub subclusters: Partition,
    /// Every labeled pair: auto-labeled, sub-cluster consensus, then merge rounds.
    pub labeled: Vec<LabeledPair>,
    pub counts: StageCounts,
    pub timings: Vec<StageTiming>,
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Stage {
        stage: name,
        source: Box::new(e),
    })
}

struct Clock {
    timings: Vec<StageTiming>,
    started: Instant,
}

impl Clock {
    fn new() -> Self {
        Clock {
            timings: Vec::new(),
            started: Instant::now(),
        }
    }

    fn lap(&mut self, name: impl Into<String>) {
        let now = Instant::now();
        let stage = name.into();
        let seconds = (now - self.started).as_secs_f64();
        log::info!("stage {stage} done in {seconds:.3}s");
        self.timings.push(StageTiming { stage, seconds });
        self.started = now;
    }
}

/// Claims and embeddings must describe the same non-empty id set.
pub fn validate_inputs(claims: &ClaimStore, embeddings: &EmbeddingSet) -> Result<ValidationReport> {
    let report = crate::model::validate_dataset(claims.as_slice());
    if !report.is_valid() {
        for v in &report.violations {
            log::warn!("{v}");
        }
        return Err(Error::Validation(report.violations.len()));
    }
    check_id_sets(claims.ids(), embeddings.ids().iter().map(String::as_str))?;
    Ok(report)
}

/// Runs every stage in memory. With `artifacts` set, each stage's output is
/// written there as soon as it exists.
pub fn run_stages(
    claims: &ClaimStore,
    embeddings: &EmbeddingSet,
    annotators: &[AnnotatorSpec],
    params: &PipelineParams,
    hnsw: &HnswParams,
    index_cache: Option<&Path>,
    artifacts: Option<&Path>,
) -> Result<PipelineOutput> {
    let mut clock = Clock::new();
    let mut counts = StageCounts::default();
    let save = |name: &str| artifacts.map(|dir| dir.join(name));

    stage("validate", validate_inputs(claims, embeddings))?;
    stage("validate", params.check().and_then(|_| hnsw.check()))?;
    if annotators.is_empty() {
        return stage(
            "validate",
            Err(Error::Config("at least one annotator is required".into())),
        );
    }
    counts.claims = claims.len();
    clock.lap("validate");

    let index = stage("index", build_index(embeddings, hnsw, index_cache))?;
    clock.lap("index");

    let pairs = stage(
        "pairs",
        generate_candidate_pairs(embeddings, &index, params.knn_candidates),
    )?;
    if let Some(p) = save("pairs.jsonl") {
        stage("pairs", io::write_pairs(&p, &pairs))?;
    }
    counts.pairs_generated = pairs.len();
    clock.lap("pairs");

    let (auto, remaining) = stage("auto_label", auto_label_exact_duplicates(&pairs, claims))?;
    if let Some(p) = save("auto_labeled.jsonl") {
        stage("auto_label", io::write_labeled_pairs(&p, &auto))?;
    }
    counts.pairs_auto_labeled = auto.len();
    clock.lap("auto_label");

    let verdicts = stage(
        "annotate",
        collect_verdicts(&remaining, annotators, claims, SUBCLUSTER_STAGE),
    )?;
    if let Some(p) = save(&format!("verdicts.{SUBCLUSTER_STAGE}.jsonl")) {
        stage("annotate", io::write_verdicts(&p, &verdicts))?;
    }
    clock.lap("annotate");

    let consensus = stage(
        "consensus",
        aggregate_consensus(&verdicts, params.consensus),
    )?;
    let mut labeled = auto;
    labeled.extend(consensus);
    labeled.sort();
    if let Some(p) = save("labeled_pairs.jsonl") {
        stage("consensus", io::write_labeled_pairs(&p, &labeled))?;
    }
    counts.pairs_annotated = remaining.len();
    counts.pairs_labeled = labeled.len();
    counts.pairs_similar = labeled
        .iter()
        .filter(|lp| lp.label == Label::Similar)
        .count();
    clock.lap("consensus");

    let universe: Vec<String> = claims.ids().map(str::to_string).collect();
    let subclusters = stage("subclusters", build_subclusters(&labeled, &universe))?;
    if let Some(p) = save("subclusters.tsv") {
        stage("subclusters", io::write_partition(&p, &subclusters))?;
    }
    counts.subclusters = subclusters.n_clusters();
    clock.lap("subclusters");

    let mut partition = subclusters.clone();
    for pass in 1..=params.merge_passes {
        let candidates = stage(
            "merge",
            propose_merge_candidates(
                &partition,
                embeddings,
                params.merge_top_k,
                params.merge_sim_threshold,
                hnsw,
            ),
        )?;
        if let Some(p) = save(&format!("merge_candidates.pass{pass}.jsonl")) {
            stage("merge", io::write_merge_candidates(&p, &candidates))?;
        }
        let outcome = stage(
            "merge",
            merge_pass(
                &partition,
                &candidates,
                annotators,
                params.consensus,
                claims,
                &merge_stage(pass),
            ),
        )?;
        counts.merge_passes.push(MergePassCounts {
            pass,
            candidates: candidates.len(),
            pairs_annotated: outcome.labeled.len(),
            merges_accepted: outcome.merges_accepted,
            clusters_before: partition.n_clusters(),
            clusters_after: outcome.partition.n_clusters(),
        });
        labeled.extend(outcome.labeled);
        partition = outcome.partition;
        clock.lap(format!("merge pass {pass}"));
        if counts
            .merge_passes
            .last()
            .is_some_and(|c| c.merges_accepted == 0)
        {
            break;
        }
    }
    counts.clusters_final = partition.n_clusters();

    Ok(PipelineOutput {
        partition,
        subclusters,
        labeled,
        counts,
        timings: clock.timings,
    })
}

fn build_index(
    embeddings: &EmbeddingSet,
    params: &HnswParams,
    cache: Option<&Path>,
) -> Result<HnswIndex> {
    let Some(path) = cache else {
        return HnswIndex::build(embeddings, params.clone());
    };
    let key = HnswIndex::cache_key(embeddings, params);
    if path.exists() {
        if let Some(index) = HnswIndex::load(path, &key)? {
            log::info!("reusing index cache {}", path.display());
            return Ok(index);
        }
        log::info!("index cache {} is stale; rebuilding", path.display());
    }
    let index = HnswIndex::build(embeddings, params.clone())?;
    index.save(path, &key)?;
    Ok(index)
}

/// Loads inputs, runs every stage and writes `partition.tsv` and
/// `manifest.json` under `config.out`.
pub fn run_pipeline(config: &RunConfig) -> Result<(Partition, RunManifest)> {
    config.check()?;
    match config.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(|| run_loaded(config)),
        None => run_loaded(config),
    }
}

fn run_loaded(config: &RunConfig) -> Result<(Partition, RunManifest)> {
    // every input is read before the first stage starts
    let claims = io::read_claims(&config.claims)?;
    let report = crate::model::validate_dataset(&claims);
    if !report.is_valid() {
        for v in &report.violations {
            log::warn!("{v}");
        }
        return stage("validate", Err(Error::Validation(report.violations.len())));
    }
    let claims = ClaimStore::new(claims)?;
    let embeddings = io::read_embeddings(&config.embeddings)?;
    let annotators = config
        .annotators
        .iter()
        .map(|a| a.load(&claims))
        .collect::<Result<Vec<_>>>()?;

    std::fs::create_dir_all(&config.out).map_err(|e| Error::io(&config.out, e))?;
    let output = run_stages(
        &claims,
        &embeddings,
        &annotators,
        &config.params,
        &config.hnsw,
        config.index_cache.as_deref(),
        Some(&config.out),
    )?;

    io::write_partition(&config.out.join("partition.tsv"), &output.partition)?;
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: config.hnsw.seed,
        config: config.clone(),
        counts: output.counts,
        timings: output.timings,
    };
    io::write_json(&config.out.join("manifest.json"), &manifest)?;
    Ok((output.partition, manifest))
}
