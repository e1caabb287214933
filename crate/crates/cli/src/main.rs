use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use claimnet_core::analytics::{
    language_counts, multilingual_stats, partition_stats, render_stats_table, temporal_repetition,
};
use claimnet_core::ann::{HnswIndex, HnswParams};
use claimnet_core::baselines::{
    affinity_propagation, agglomerative_cluster, AffinityPropagationConfig, AgglomerativeConfig,
    DistanceMetric, Linkage, Preference,
};
use claimnet_core::clusters::{apply_manual_merges, build_subclusters, propose_manual_merges};
use claimnet_core::io;
use claimnet_core::metrics::{evaluate, MetricReport};
use claimnet_core::model::{
    validate_dataset, ClaimStore, ConsensusPolicy, Partition, PipelineParams,
};
use claimnet_core::pairs::{
    aggregate_consensus, auto_label_exact_duplicates, batch_paths, collect_verdicts,
    generate_candidate_pairs, write_annotation_requests, AnnotatorSpec,
};
use claimnet_core::pipeline::{run_pipeline, AnnotatorConfig, RunConfig, SUBCLUSTER_STAGE};
use claimnet_core::vecmath::EmbeddingSet;
use claimnet_core::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

const EXIT_VALIDATION: u8 = 2;
const EXIT_STAGE: u8 = 3;
const EXIT_IO: u8 = 4;

/// Build, merge and evaluate clusters of fact-checked claims.
#[derive(Parser)]
#[command(name = "claimnet", version)]
struct Cli {
    /// JSON run config; explicit flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for index construction (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Only log warnings and errors.
    #[arg(long, short, global = true)]
    quiet: bool,
    /// Worker threads (default: all logical cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a claims file (and optionally its embeddings).
    Validate {
        #[arg(long)]
        claims: Option<PathBuf>,
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    /// Nearest-neighbor index over claim embeddings.
    #[command(subcommand)]
    Index(IndexCmd),
    /// Candidate pairs, annotation batches and consensus.
    #[command(subcommand)]
    Pairs(PairsCmd),
    /// Sub-clusters, merging and manual review.
    #[command(subcommand)]
    Clusters(ClustersCmd),
    /// Reference clusterers over the raw embeddings.
    #[command(subcommand)]
    Baseline(BaselineCmd),
    /// Score a predicted partition against a reference.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Claims file whose ids both partitions must cover.
        #[arg(long)]
        claims: Option<PathBuf>,
        /// Label for the report row.
        #[arg(long, default_value = "pipeline")]
        algorithm: String,
    },
    /// Cluster-size, language and repetition statistics.
    Stats {
        #[arg(long)]
        claims: Option<PathBuf>,
        #[arg(long)]
        partition: PathBuf,
        /// Dataset label for the table row.
        #[arg(long, default_value = "dataset")]
        name: String,
        /// Also compute day offsets between repeated claims.
        #[arg(long)]
        temporal: bool,
    },
    /// The whole construction pipeline.
    #[command(subcommand)]
    Pipeline(PipelineCmd),
}

#[derive(Subcommand)]
enum IndexCmd {
    /// Build the index and store it for later runs.
    Build {
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// Index file (default: <out>/index.bin).
        #[arg(long)]
        cache: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum PairsCmd {
    /// Pair every claim with its k nearest neighbors.
    Generate {
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
        /// Reuse or create a stored index.
        #[arg(long)]
        cache: Option<PathBuf>,
    },
    /// Write an annotation request batch for pairs that are not exact duplicates.
    AnnotateRequests {
        #[arg(long)]
        claims: Option<PathBuf>,
        #[arg(long)]
        pairs: PathBuf,
        /// Batch prefix; requests go to <prefix>.<stage>.requests.jsonl.
        #[arg(long)]
        prefix: PathBuf,
        #[arg(long, default_value = SUBCLUSTER_STAGE)]
        stage: String,
    },
    /// Collect verdicts from every annotator and combine them.
    Consensus {
        #[arg(long)]
        claims: Option<PathBuf>,
        #[arg(long)]
        pairs: PathBuf,
        #[command(flatten)]
        annotators: AnnotatorArgs,
        #[arg(long, value_enum)]
        policy: Option<PolicyArg>,
        #[arg(long, default_value = SUBCLUSTER_STAGE)]
        stage: String,
    },
}

#[derive(Subcommand)]
enum ClustersCmd {
    /// Connected components of the similar pairs.
    Build {
        #[arg(long)]
        claims: Option<PathBuf>,
        #[arg(long)]
        labeled: PathBuf,
    },
    /// Centroid-based merge passes over an existing partition.
    Merge {
        #[arg(long)]
        claims: Option<PathBuf>,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        partition: PathBuf,
        #[command(flatten)]
        annotators: AnnotatorArgs,
        #[arg(long)]
        passes: Option<usize>,
    },
    /// List close cluster pairs and large clusters for manual review.
    Review {
        #[arg(long)]
        claims: Option<PathBuf>,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        partition: PathBuf,
        /// Report cluster pairs with centroid similarity above this.
        #[arg(long, default_value_t = 0.8)]
        threshold: f64,
    },
    /// Merge the cluster pairs listed in a decisions TSV.
    ApplyMerges {
        #[arg(long)]
        partition: PathBuf,
        #[arg(long)]
        decisions: PathBuf,
    },
}

#[derive(Subcommand)]
enum BaselineCmd {
    /// Hierarchical clustering cut at one or more distance thresholds.
    Agglomerative {
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long, value_enum)]
        linkage: Option<LinkageArg>,
        #[arg(long, value_enum)]
        metric: Option<MetricArg>,
        /// Comma-separated threshold grid.
        #[arg(long, value_delimiter = ',')]
        threshold: Vec<f64>,
        /// Reference partition to score each run against.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Affinity propagation over cosine similarities.
    Affinity {
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        damping: Option<f64>,
        /// Fixed preference; defaults to the median similarity.
        #[arg(long)]
        preference: Option<f64>,
        #[arg(long)]
        max_iterations: Option<usize>,
        #[arg(long)]
        truth: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum PipelineCmd {
    /// Run every stage and write partition.tsv and manifest.json.
    Run {
        #[arg(long)]
        claims: Option<PathBuf>,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[command(flatten)]
        annotators: AnnotatorArgs,
        #[arg(long)]
        merge_passes: Option<usize>,
        #[arg(long, value_enum)]
        policy: Option<PolicyArg>,
        #[arg(long)]
        index_cache: Option<PathBuf>,
    },
}

#[derive(Args)]
struct AnnotatorArgs {
    /// `name=exact`, `name=oracle:<partition.tsv>` or `name=external:<prefix>`; repeatable.
    #[arg(long = "annotator")]
    annotator: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Unanimous,
    Majority,
}

impl From<PolicyArg> for ConsensusPolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Unanimous => ConsensusPolicy::Unanimous,
            PolicyArg::Majority => ConsensusPolicy::Majority,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum LinkageArg {
    Ward,
    Complete,
    Average,
    Single,
}

impl From<LinkageArg> for Linkage {
    fn from(l: LinkageArg) -> Self {
        match l {
            LinkageArg::Ward => Linkage::Ward,
            LinkageArg::Complete => Linkage::Complete,
            LinkageArg::Average => Linkage::Average,
            LinkageArg::Single => Linkage::Single,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Euclidean,
    Cosine,
}

impl From<MetricArg> for DistanceMetric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Euclidean => DistanceMetric::Euclidean,
            MetricArg::Cosine => DistanceMetric::Cosine,
        }
    }
}

/// Settings shared by every subcommand: the config file merged with global flags.
struct Ctx {
    config: Option<RunConfig>,
    out: PathBuf,
    seed: Option<u64>,
}

impl Ctx {
    fn out_file(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn claims_path(&self, flag: Option<PathBuf>) -> anyhow::Result<PathBuf> {
        flag.or_else(|| self.config.as_ref().map(|c| c.claims.clone()))
            .context("no claims file: pass --claims or --config")
    }

    fn embeddings_path(&self, flag: Option<PathBuf>) -> anyhow::Result<PathBuf> {
        flag.or_else(|| self.config.as_ref().map(|c| c.embeddings.clone()))
            .context("no embeddings file: pass --embeddings or --config")
    }

    fn claims(&self, flag: Option<PathBuf>) -> anyhow::Result<ClaimStore> {
        let path = self.claims_path(flag)?;
        let claims = io::read_claims(&path)?;
        let report = validate_dataset(&claims);
        if !report.is_valid() {
            for v in &report.violations {
                log::warn!("{v}");
            }
            return Err(Error::Validation(report.violations.len()).into());
        }
        Ok(ClaimStore::new(claims)?)
    }

    fn embeddings(&self, flag: Option<PathBuf>) -> anyhow::Result<EmbeddingSet> {
        Ok(io::read_embeddings(&self.embeddings_path(flag)?)?)
    }

    fn params(&self) -> PipelineParams {
        self.config
            .as_ref()
            .map(|c| c.params.clone())
            .unwrap_or_default()
    }

    fn hnsw(&self) -> HnswParams {
        let mut p = self
            .config
            .as_ref()
            .map(|c| c.hnsw.clone())
            .unwrap_or_default();
        if let Some(seed) = self.seed {
            p.seed = seed;
        }
        p
    }

    /// Flag annotators replace the config's list when given.
    fn annotator_configs(&self, args: &AnnotatorArgs) -> anyhow::Result<Vec<AnnotatorConfig>> {
        if args.annotator.is_empty() {
            return Ok(self
                .config
                .as_ref()
                .map(|c| c.annotators.clone())
                .unwrap_or_default());
        }
        Ok(args
            .annotator
            .iter()
            .map(|s| AnnotatorConfig::parse_flag(s))
            .collect::<Result<_, _>>()?)
    }

    fn annotators(
        &self,
        args: &AnnotatorArgs,
        claims: &ClaimStore,
    ) -> anyhow::Result<Vec<AnnotatorSpec>> {
        let specs = self
            .annotator_configs(args)?
            .iter()
            .map(|a| a.load(claims))
            .collect::<Result<Vec<_>, _>>()?;
        if specs.is_empty() {
            return Err(Error::Config("at least one --annotator is required".into()).into());
        }
        Ok(specs)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(if cli.quiet {
        "warn"
    } else {
        "info"
    }))
    .format_timestamp(None)
    .init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    let Some(core) = e.chain().find_map(|c| c.downcast_ref::<Error>()) else {
        return EXIT_STAGE;
    };
    if let Error::Stage {
        stage: "validate", ..
    } = core
    {
        return EXIT_VALIDATION;
    }
    match core.root() {
        Error::Validation(_) | Error::Config(_) | Error::WardMetricViolation => EXIT_VALIDATION,
        Error::Io { .. } | Error::Parse { .. } => EXIT_IO,
        _ => EXIT_STAGE,
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let config = match &cli.config {
        Some(path) => Some(RunConfig::from_file(path)?),
        None => None,
    };
    let threads = cli.threads.or(config.as_ref().and_then(|c| c.threads));
    if let Some(n) = threads {
        if n == 0 {
            bail!(Error::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring worker pool")?;
    }
    let out = cli
        .out
        .clone()
        .or_else(|| config.as_ref().map(|c| c.out.clone()))
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let ctx = Ctx {
        config,
        out,
        seed: cli.seed,
    };

    match cli.command {
        Command::Validate { claims, embeddings } => validate(&ctx, claims, embeddings),
        Command::Index(IndexCmd::Build { embeddings, cache }) => {
            let set = ctx.embeddings(embeddings)?;
            let params = ctx.hnsw();
            let path = cache.unwrap_or_else(|| ctx.out_file("index.bin"));
            let index = HnswIndex::build(&set, params.clone())?;
            index.save(&path, &HnswIndex::cache_key(&set, &params))?;
            log::info!(
                "indexed {} vectors, layer sizes {:?} -> {}",
                index.len(),
                index.layer_sizes(),
                path.display()
            );
            Ok(())
        }
        Command::Pairs(cmd) => pairs(&ctx, cmd),
        Command::Clusters(cmd) => clusters(&ctx, cmd),
        Command::Baseline(cmd) => baseline(&ctx, cmd),
        Command::Eval {
            pred,
            truth,
            claims,
            algorithm,
        } => {
            let pred_p = io::read_partition(&pred)?;
            let truth_p = io::read_partition(&truth)?;
            if let Some(path) = claims {
                let store = ctx.claims(Some(path))?;
                let universe = Partition::singletons(store.ids());
                pred_p
                    .check_same_ids(&universe)
                    .context("predicted partition vs claims")?;
                truth_p
                    .check_same_ids(&universe)
                    .context("reference partition vs claims")?;
            }
            let report = evaluate(&pred_p, &truth_p, &algorithm)?;
            io::write_metric_report(&ctx.out_file(&format!("metrics.{algorithm}.json")), &report)?;
            println!("{}", MetricReport::table_header());
            println!("{}", report.table_row());
            Ok(())
        }
        Command::Stats {
            claims,
            partition,
            name,
            temporal,
        } => {
            let store = ctx.claims(claims)?;
            let p = io::read_partition(&partition)?;
            let ps = partition_stats(&p, &store)?;
            let ms = multilingual_stats(&p, &store)?;
            print!("{}", render_stats_table(&[(&name, &ps, &ms)]));
            let mut summary = json!({ "dataset": name, "partition": ps, "multilingual": ms });
            let mut csv = String::from("language,count\n");
            for (lang, n) in language_counts(&store) {
                csv.push_str(&format!("{lang},{n}\n"));
            }
            io::write_text(&ctx.out_file("languages.csv"), &csv)?;
            if temporal {
                let report = temporal_repetition(&p, &store);
                let fmt = |q: Option<f64>| q.map_or("n/a".to_string(), |d| format!("{d:.1} days"));
                println!(
                    "repetition offsets: {} from {} clusters; p50 {}, p75 {}",
                    report.offsets.len(),
                    report.n_clusters_contributing,
                    fmt(report.p50),
                    fmt(report.p75)
                );
                io::write_text(
                    &ctx.out_file("temporal_histogram.csv"),
                    &report.histogram_csv(),
                )?;
                summary["temporal"] = json!({
                    "p50_days": report.p50,
                    "p75_days": report.p75,
                    "n_offsets": report.offsets.len(),
                    "n_clusters_contributing": report.n_clusters_contributing,
                    "n_undated": report.n_undated,
                });
            }
            io::write_json(&ctx.out_file("stats.json"), &summary)?;
            Ok(())
        }
        Command::Pipeline(PipelineCmd::Run {
            claims,
            embeddings,
            annotators,
            merge_passes,
            policy,
            index_cache,
        }) => {
            let mut config = match &ctx.config {
                Some(c) => c.clone(),
                None => RunConfig::new(
                    ctx.claims_path(claims.clone())?,
                    ctx.embeddings_path(embeddings.clone())?,
                    &ctx.out,
                ),
            };
            if let Some(p) = claims {
                config.claims = p;
            }
            if let Some(p) = embeddings {
                config.embeddings = p;
            }
            config.out = ctx.out.clone();
            config.hnsw = ctx.hnsw();
            config.annotators = ctx.annotator_configs(&annotators)?;
            config.threads = threads;
            if let Some(n) = merge_passes {
                config.params.merge_passes = n;
            }
            if let Some(p) = policy {
                config.params.consensus = p.into();
            }
            if index_cache.is_some() {
                config.index_cache = index_cache;
            }
            // the global pool is already sized; don't build a second one
            let mut inner = config.clone();
            inner.threads = None;
            let (partition, manifest) = run_pipeline(&inner)?;
            let mut manifest = manifest;
            manifest.config.threads = config.threads;
            io::write_json(&ctx.out_file("manifest.json"), &manifest)?;
            log::info!(
                "{} claims -> {} pairs -> {} sub-clusters -> {} clusters",
                manifest.counts.claims,
                manifest.counts.pairs_generated,
                manifest.counts.subclusters,
                partition.n_clusters()
            );
            Ok(())
        }
    }
}

fn validate(ctx: &Ctx, claims: Option<PathBuf>, embeddings: Option<PathBuf>) -> anyhow::Result<()> {
    let path = ctx.claims_path(claims)?;
    let loaded = io::read_claims(&path)?;
    let report = validate_dataset(&loaded);
    io::write_json(&ctx.out_file("validation.json"), &report)?;
    for v in &report.violations {
        println!("{v}");
    }
    if !report.is_valid() {
        bail!(Error::Validation(report.violations.len()));
    }
    let embeddings = embeddings.or_else(|| ctx.config.as_ref().map(|c| c.embeddings.clone()));
    if let Some(e) = embeddings {
        let set = io::read_embeddings(&e)?;
        let store = ClaimStore::new(loaded)?;
        let universe = Partition::singletons(store.ids());
        Partition::singletons(set.ids().iter().cloned())
            .check_same_ids(&universe)
            .map_err(|_| Error::Validation(1))
            .with_context(|| format!("embedding ids in {} differ from the claims", e.display()))?;
        println!("{} claims, {}-d embeddings: ok", report.n_claims, set.dim());
    } else {
        println!("{} claims: ok", report.n_claims);
    }
    Ok(())
}

fn build_or_load_index(
    set: &EmbeddingSet,
    params: &HnswParams,
    cache: Option<&Path>,
) -> anyhow::Result<HnswIndex> {
    let key = HnswIndex::cache_key(set, params);
    if let Some(path) = cache {
        if path.exists() {
            if let Some(index) = HnswIndex::load(path, &key)? {
                return Ok(index);
            }
            log::info!(
                "index at {} does not match these embeddings; rebuilding",
                path.display()
            );
        }
    }
    let index = HnswIndex::build(set, params.clone())?;
    if let Some(path) = cache {
        index.save(path, &key)?;
    }
    Ok(index)
}

fn pairs(ctx: &Ctx, cmd: PairsCmd) -> anyhow::Result<()> {
    match cmd {
        PairsCmd::Generate {
            embeddings,
            k,
            cache,
        } => {
            let set = ctx.embeddings(embeddings)?;
            let k = k.unwrap_or(ctx.params().knn_candidates);
            let index = build_or_load_index(&set, &ctx.hnsw(), cache.as_deref())?;
            let pairs = generate_candidate_pairs(&set, &index, k)?;
            io::write_pairs(&ctx.out_file("pairs.jsonl"), &pairs)?;
            log::info!("{} candidate pairs", pairs.len());
            Ok(())
        }
        PairsCmd::AnnotateRequests {
            claims,
            pairs,
            prefix,
            stage,
        } => {
            let store = ctx.claims(claims)?;
            let pairs = io::read_pairs(&pairs)?;
            let (auto, remaining) = auto_label_exact_duplicates(&pairs, &store)?;
            io::write_labeled_pairs(&ctx.out_file("auto_labeled.jsonl"), &auto)?;
            let (requests, responses) = batch_paths(&prefix, &stage);
            write_annotation_requests(&requests, &remaining, &store)?;
            log::info!(
                "{} exact duplicates auto-labeled; {} requests in {} (answers expected in {})",
                auto.len(),
                remaining.len(),
                requests.display(),
                responses.display()
            );
            Ok(())
        }
        PairsCmd::Consensus {
            claims,
            pairs,
            annotators,
            policy,
            stage,
        } => {
            let store = ctx.claims(claims)?;
            let pairs = io::read_pairs(&pairs)?;
            let specs = ctx.annotators(&annotators, &store)?;
            let policy = policy.map(Into::into).unwrap_or(ctx.params().consensus);
            let (mut labeled, remaining) = auto_label_exact_duplicates(&pairs, &store)?;
            let verdicts = collect_verdicts(&remaining, &specs, &store, &stage)?;
            io::write_verdicts(&ctx.out_file(&format!("verdicts.{stage}.jsonl")), &verdicts)?;
            labeled.extend(aggregate_consensus(&verdicts, policy)?);
            labeled.sort();
            io::write_labeled_pairs(&ctx.out_file("labeled_pairs.jsonl"), &labeled)?;
            log::info!("{} labeled pairs", labeled.len());
            Ok(())
        }
    }
}

fn clusters(ctx: &Ctx, cmd: ClustersCmd) -> anyhow::Result<()> {
    match cmd {
        ClustersCmd::Build { claims, labeled } => {
            let store = ctx.claims(claims)?;
            let labeled = io::read_labeled_pairs(&labeled)?;
            let universe: Vec<String> = store.ids().map(str::to_string).collect();
            let p = build_subclusters(&labeled, &universe)?;
            io::write_partition(&ctx.out_file("subclusters.tsv"), &p)?;
            log::info!("{} sub-clusters over {} claims", p.n_clusters(), p.len());
            Ok(())
        }
        ClustersCmd::Merge {
            claims,
            embeddings,
            partition,
            annotators,
            passes,
        } => {
            let store = ctx.claims(claims)?;
            let set = ctx.embeddings(embeddings)?;
            let start = io::read_partition(&partition)?;
            let specs = ctx.annotators(&annotators, &store)?;
            let mut params = ctx.params();
            if let Some(n) = passes {
                params.merge_passes = n;
            }
            // replay the merge stages only: every claim starts in its given cluster
            let output = merge_only(&store, &set, &start, &specs, &params, &ctx.hnsw(), &ctx.out)?;
            io::write_partition(&ctx.out_file("partition.tsv"), &output)?;
            log::info!("{} -> {} clusters", start.n_clusters(), output.n_clusters());
            Ok(())
        }
        ClustersCmd::Review {
            claims,
            embeddings,
            partition,
            threshold,
        } => {
            let store = ctx.claims(claims)?;
            let set = ctx.embeddings(embeddings)?;
            let p = io::read_partition(&partition)?;
            let report = propose_manual_merges(&p, &set, &store, threshold)?;
            io::write_review(
                &ctx.out_file("review.tsv"),
                &ctx.out_file("audit.tsv"),
                &report,
            )?;
            log::info!(
                "{} cluster pairs above {threshold}; {} large clusters to audit",
                report.rows.len(),
                report.audit.len()
            );
            Ok(())
        }
        ClustersCmd::ApplyMerges {
            partition,
            decisions,
        } => {
            let p = io::read_partition(&partition)?;
            let decisions = io::read_decisions(&decisions)?;
            let merged = apply_manual_merges(&p, &decisions)?;
            io::write_partition(&ctx.out_file("partition.tsv"), &merged)?;
            log::info!("{} -> {} clusters", p.n_clusters(), merged.n_clusters());
            Ok(())
        }
    }
}

fn merge_only(
    claims: &ClaimStore,
    set: &EmbeddingSet,
    start: &Partition,
    annotators: &[AnnotatorSpec],
    params: &PipelineParams,
    hnsw: &HnswParams,
    out: &Path,
) -> anyhow::Result<Partition> {
    use claimnet_core::clusters::{merge_pass, propose_merge_candidates};
    use claimnet_core::pipeline::merge_stage;
    let mut partition = start.clone();
    for pass in 1..=params.merge_passes {
        let candidates = propose_merge_candidates(
            &partition,
            set,
            params.merge_top_k,
            params.merge_sim_threshold,
            hnsw,
        )?;
        io::write_merge_candidates(
            &out.join(format!("merge_candidates.pass{pass}.jsonl")),
            &candidates,
        )?;
        let outcome = merge_pass(
            &partition,
            &candidates,
            annotators,
            params.consensus,
            claims,
            &merge_stage(pass),
        )?;
        log::info!(
            "pass {pass}: {} candidates, {} merges",
            candidates.len(),
            outcome.merges_accepted
        );
        partition = outcome.partition;
        if outcome.merges_accepted == 0 {
            break;
        }
    }
    Ok(partition)
}

fn baseline(ctx: &Ctx, cmd: BaselineCmd) -> anyhow::Result<()> {
    match cmd {
        BaselineCmd::Agglomerative {
            embeddings,
            linkage,
            metric,
            threshold,
            truth,
        } => {
            let set = ctx.embeddings(embeddings)?;
            let truth = truth.map(|t| io::read_partition(&t)).transpose()?;
            let mut base = ctx
                .config
                .as_ref()
                .map(|c| c.agglomerative.clone())
                .unwrap_or_default();
            if let Some(l) = linkage {
                base.linkage = l.into();
            }
            if let Some(m) = metric {
                base.metric = m.into();
            }
            let grid = if threshold.is_empty() {
                vec![base.distance_threshold]
            } else {
                threshold
            };
            if truth.is_some() {
                println!("{}", MetricReport::table_header());
            }
            for t in grid {
                let config = AgglomerativeConfig {
                    distance_threshold: t,
                    ..base.clone()
                };
                let started = Instant::now();
                let p = agglomerative_cluster(&set, &config)?;
                let seconds = started.elapsed().as_secs_f64();
                let name = format!(
                    "agglomerative.{}.t{t}",
                    serde_json::to_value(config.linkage)?
                        .as_str()
                        .unwrap_or("x")
                );
                finish_baseline(
                    ctx,
                    &name,
                    &p,
                    truth.as_ref(),
                    json!({
                        "algorithm": "agglomerative",
                        "config": config,
                        "wall_seconds": seconds,
                        "converged": true,
                        "n_clusters": p.n_clusters(),
                    }),
                )?;
            }
            Ok(())
        }
        BaselineCmd::Affinity {
            embeddings,
            damping,
            preference,
            max_iterations,
            truth,
        } => {
            let set = ctx.embeddings(embeddings)?;
            let truth = truth.map(|t| io::read_partition(&t)).transpose()?;
            let mut config: AffinityPropagationConfig = ctx
                .config
                .as_ref()
                .map(|c| c.affinity.clone())
                .unwrap_or_default();
            if let Some(d) = damping {
                config.damping = d;
            }
            if let Some(p) = preference {
                config.preference = Preference::Value(p);
            }
            if let Some(n) = max_iterations {
                config.max_iterations = n;
            }
            let started = Instant::now();
            let r = affinity_propagation(&set, &config)?;
            let seconds = started.elapsed().as_secs_f64();
            if !r.converged {
                log::warn!(
                    "affinity propagation did not converge in {} iterations",
                    r.iterations
                );
            }
            if truth.is_some() {
                println!("{}", MetricReport::table_header());
            }
            finish_baseline(
                ctx,
                "affinity",
                &r.partition,
                truth.as_ref(),
                json!({
                    "algorithm": "affinity_propagation",
                    "config": config,
                    "wall_seconds": seconds,
                    "converged": r.converged,
                    "iterations": r.iterations,
                    "preference": r.preference,
                    "n_clusters": r.partition.n_clusters(),
                }),
            )
        }
    }
}

fn finish_baseline(
    ctx: &Ctx,
    name: &str,
    p: &Partition,
    truth: Option<&Partition>,
    mut manifest: serde_json::Value,
) -> anyhow::Result<()> {
    io::write_partition(&ctx.out_file(&format!("{name}.tsv")), p)?;
    if let Some(truth) = truth {
        let report = evaluate(p, truth, name)?;
        println!("{}", report.table_row());
        manifest["metrics"] = serde_json::to_value(&report)?;
    }
    io::write_json(&ctx.out_file(&format!("{name}.manifest.json")), &manifest)?;
    log::info!("{name}: {} clusters", p.n_clusters());
    Ok(())
}
