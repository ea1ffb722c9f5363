//! Pipeline driver: similarity dumps, hierarchy construction, and
//! flat-vs-hierarchical evaluation as separate subcommands over file
//! interfaces. Every run echoes its resolved configuration into the output
//! directory; identical configurations over identical inputs produce
//! byte-identical artifacts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use semhier::classify::{
    self, train_flat, train_hierarchical, ConfigEcho, EvalReport, LeafScore, TrainConfig,
};
use semhier::contextual::{recommend_weighted, PmiMode};
use semhier::corpus::{compute_context_stats, load_corpus, Corpus};
use semhier::fusion::Weights;
use semhier::hierarchy::{build_hierarchy, to_dot, BuildConfig, BuildOutcome, Hierarchy};
use semhier::lexicon::load_lexicon;
use semhier::pipeline::{compute_similarity, PipelineConfig, VocabularySimilarity};
use semhier::visual::SigmaPolicy;

#[derive(Parser)]
#[command(
    name = "semhier",
    version,
    about = "Build semantic concept hierarchies from annotated image corpora and evaluate hierarchical vs. flat classification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the visual, conceptual, and contextual channels over the
    /// vocabulary and dump raw, normalized, and fused matrices as CSV
    Similarity(CommonArgs),
    /// Build the concept hierarchy and write it as DOT and JSON with a
    /// per-merge provenance log
    Build(CommonArgs),
    /// Split the corpus, train flat and hierarchy-conformant classifiers,
    /// and report average precision and PR curves for both
    Evaluate(EvaluateArgs),
    /// Run similarity, build, and evaluate in sequence into one directory
    All(EvaluateArgs),
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Corpus file: JSON, or CSV with header id,labels,f0..fD-1
    #[arg(long)]
    corpus: PathBuf,
    /// Lexicon file (JSON)
    #[arg(long)]
    lexicon: PathBuf,
    /// Output directory, created if missing
    #[arg(long)]
    out: PathBuf,
    /// Channel weights "visual,conceptual,contextual"; must sum to 1
    #[arg(long, default_value = "0.4,0.3,0.3", value_parser = parse_weights)]
    weights: Weights,
    /// PMI estimator for the contextual channel
    #[arg(long, value_enum, default_value_t = PmiArg::Standard)]
    pmi: PmiArg,
    /// RBF kernel width: "median" or a positive number
    #[arg(long, default_value = "median", value_parser = parse_sigma)]
    sigma: SigmaArg,
    /// SVM soft-margin penalty
    #[arg(long = "svm-c", default_value_t = 10.0)]
    svm_c: f64,
    /// SMO stopping tolerance
    #[arg(long = "svm-tol", default_value_t = 1e-3)]
    svm_tol: f64,
    /// Cross-validation folds for classifier training
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// Seed for every random draw of the run
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args, Clone)]
struct EvaluateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Hierarchy JSON to evaluate (default: <out>/hierarchy.json)
    #[arg(long)]
    hierarchy: Option<PathBuf>,
    /// Fraction of images used for training
    #[arg(long, default_value_t = 0.5)]
    split: f64,
    /// Leaf ranking score along the root-to-leaf path
    #[arg(long = "leaf-score", value_enum, default_value_t = LeafScoreArg::Min)]
    leaf_score: LeafScoreArg,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum PmiArg {
    Standard,
    Weighted,
}

impl From<PmiArg> for PmiMode {
    fn from(arg: PmiArg) -> Self {
        match arg {
            PmiArg::Standard => PmiMode::Standard,
            PmiArg::Weighted => PmiMode::Weighted,
        }
    }
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum LeafScoreArg {
    Min,
    Product,
}

impl From<LeafScoreArg> for LeafScore {
    fn from(arg: LeafScoreArg) -> Self {
        match arg {
            LeafScoreArg::Min => LeafScore::Min,
            LeafScoreArg::Product => LeafScore::Product,
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum SigmaArg {
    Median,
    Fixed(f64),
}

impl From<SigmaArg> for SigmaPolicy {
    fn from(arg: SigmaArg) -> Self {
        match arg {
            SigmaArg::Median => SigmaPolicy::Median,
            SigmaArg::Fixed(v) => SigmaPolicy::Fixed(v),
        }
    }
}

impl Serialize for SigmaArg {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            SigmaArg::Median => serializer.serialize_str("median"),
            SigmaArg::Fixed(v) => serializer.serialize_f64(*v),
        }
    }
}

fn parse_weights(raw: &str) -> Result<Weights, String> {
    let parts: Vec<&str> = raw.split(',').collect();
    if parts.len() != 3 {
        return Err("expected three comma-separated values".into());
    }
    let mut values = [0.0f64; 3];
    for (slot, part) in values.iter_mut().zip(&parts) {
        *slot = part
            .trim()
            .parse()
            .map_err(|_| format!("`{part}` is not a number"))?;
    }
    Weights::new(values[0], values[1], values[2]).map_err(|e| e.to_string())
}

fn parse_sigma(raw: &str) -> Result<SigmaArg, String> {
    if raw.eq_ignore_ascii_case("median") {
        return Ok(SigmaArg::Median);
    }
    let value: f64 = raw
        .parse()
        .map_err(|_| format!("`{raw}` is neither `median` nor a number"))?;
    if !value.is_finite() || value <= 0.0 {
        return Err("kernel width must be positive".into());
    }
    Ok(SigmaArg::Fixed(value))
}

/// Resolved configuration, echoed into the output directory as config.json.
#[derive(Serialize)]
struct RunConfig<'a> {
    command: &'a str,
    corpus: &'a Path,
    lexicon: &'a Path,
    out: &'a Path,
    #[serde(skip_serializing_if = "Option::is_none")]
    hierarchy: Option<&'a Path>,
    weights: Weights,
    pmi: PmiArg,
    sigma: SigmaArg,
    svm_c: f64,
    svm_tol: f64,
    folds: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    split: Option<f64>,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    leaf_score: Option<LeafScoreArg>,
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match cli.command {
        Command::Similarity(args) => {
            let (_, similarity) = prepare_similarity(&args, "similarity")?;
            write_similarity_files(&args.out, &similarity)?;
        }
        Command::Build(args) => {
            let (corpus, similarity) = prepare_similarity(&args, "build")?;
            run_build(&args, &corpus, &similarity)?;
        }
        Command::Evaluate(args) => {
            let echo = EchoExtras {
                hierarchy: args.hierarchy.as_deref(),
                split: Some(args.split),
                leaf_score: Some(args.leaf_score),
            };
            write_config(&args.common, "evaluate", &echo)?;
            let corpus = load_corpus(&args.common.corpus)
                .with_context(|| format!("loading corpus {}", args.common.corpus.display()))?;
            load_lexicon(&args.common.lexicon)
                .with_context(|| format!("loading lexicon {}", args.common.lexicon.display()))?;
            let hierarchy_path = hierarchy_path(&args);
            let (hierarchy, _) = Hierarchy::load(&hierarchy_path)
                .with_context(|| format!("loading hierarchy {}", hierarchy_path.display()))?;
            run_evaluate(&args, &corpus, &hierarchy)?;
        }
        Command::All(args) => {
            let echo = EchoExtras {
                hierarchy: None,
                split: Some(args.split),
                leaf_score: Some(args.leaf_score),
            };
            let (corpus, similarity) =
                prepare_similarity_with_extras(&args.common, "all", &echo)?;
            write_similarity_files(&args.common.out, &similarity)?;
            let outcome = run_build(&args.common, &corpus, &similarity)?;
            run_evaluate(&args, &corpus, &outcome.hierarchy)?;
        }
    }
    Ok(())
}

struct EchoExtras<'a> {
    hierarchy: Option<&'a Path>,
    split: Option<f64>,
    leaf_score: Option<LeafScoreArg>,
}

fn write_config(args: &CommonArgs, command: &str, extras: &EchoExtras) -> anyhow::Result<()> {
    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating output directory {}", args.out.display()))?;
    let config = RunConfig {
        command,
        corpus: &args.corpus,
        lexicon: &args.lexicon,
        out: &args.out,
        hierarchy: extras.hierarchy,
        weights: args.weights,
        pmi: args.pmi,
        sigma: args.sigma,
        svm_c: args.svm_c,
        svm_tol: args.svm_tol,
        folds: args.folds,
        split: extras.split,
        seed: args.seed,
        leaf_score: extras.leaf_score,
    };
    let text = serde_json::to_string_pretty(&config)?;
    fs::write(args.out.join("config.json"), text)?;
    Ok(())
}

fn prepare_similarity(
    args: &CommonArgs,
    command: &str,
) -> anyhow::Result<(Corpus, VocabularySimilarity)> {
    let extras = EchoExtras {
        hierarchy: None,
        split: None,
        leaf_score: None,
    };
    prepare_similarity_with_extras(args, command, &extras)
}

fn prepare_similarity_with_extras(
    args: &CommonArgs,
    command: &str,
    extras: &EchoExtras,
) -> anyhow::Result<(Corpus, VocabularySimilarity)> {
    write_config(args, command, extras)?;
    let corpus = load_corpus(&args.corpus)
        .with_context(|| format!("loading corpus {}", args.corpus.display()))?;
    let lexicon = load_lexicon(&args.lexicon)
        .with_context(|| format!("loading lexicon {}", args.lexicon.display()))?;
    let config = PipelineConfig {
        weights: args.weights,
        pmi_mode: args.pmi.into(),
        matching: Default::default(),
        sigma: args.sigma.into(),
        svm_c: args.svm_c,
        svm_tol: args.svm_tol,
        seed: args.seed,
    };
    let stats = compute_context_stats(&corpus);
    if recommend_weighted(&stats) && matches!(args.pmi, PmiArg::Standard) {
        println!(
            "note: concept frequencies are strongly skewed (max/min > 10); --pmi weighted may suit this corpus better"
        );
    }
    let similarity = compute_similarity(&corpus, &lexicon, &config)?;
    Ok((corpus, similarity))
}

fn build_config(args: &CommonArgs) -> BuildConfig {
    BuildConfig {
        weights: args.weights,
        pmi_mode: args.pmi.into(),
        matching: Default::default(),
    }
}

fn train_config(args: &CommonArgs) -> TrainConfig {
    TrainConfig {
        folds: args.folds,
        seed: args.seed,
        svm_c: args.svm_c,
        svm_tol: args.svm_tol,
        sigma: args.sigma.into(),
    }
}

fn hierarchy_path(args: &EvaluateArgs) -> PathBuf {
    args.hierarchy
        .clone()
        .unwrap_or_else(|| args.common.out.join("hierarchy.json"))
}

/// visual.csv / conceptual.csv / contextual.csv carry raw and normalized
/// values per pair (conceptual additionally names the chosen senses);
/// fused.csv carries the per-channel breakdown next to the fused score.
fn write_similarity_files(
    out: &Path,
    similarity: &VocabularySimilarity,
) -> anyhow::Result<()> {
    let m = &similarity.matrix;
    let n = m.size();
    let pair = |i: usize, j: usize| format!("{},{}", m.concepts[i], m.concepts[j]);

    let mut visual = String::from("concept_i,concept_j,raw,normalized\n");
    let mut contextual = String::from("concept_i,concept_j,raw,normalized\n");
    let mut conceptual = String::from("concept_i,concept_j,raw,normalized,sense_i,sense_j\n");
    let mut fused = String::from("concept_i,concept_j,visual,conceptual,contextual,fused\n");
    for i in 0..n {
        for j in 0..n {
            let _ = writeln!(
                visual,
                "{},{},{}",
                pair(i, j),
                m.raw_visual.get(i, j),
                m.norm_visual.get(i, j)
            );
            let _ = writeln!(
                contextual,
                "{},{},{}",
                pair(i, j),
                m.raw_contextual.get(i, j),
                m.norm_contextual.get(i, j)
            );
            let senses = &similarity.sense_choices[i * n + j];
            let _ = writeln!(
                conceptual,
                "{},{},{},{},{}",
                pair(i, j),
                m.raw_conceptual.get(i, j),
                m.norm_conceptual.get(i, j),
                senses.sense_a,
                senses.sense_b
            );
            let _ = writeln!(
                fused,
                "{},{},{},{},{}",
                pair(i, j),
                m.norm_visual.get(i, j),
                m.norm_conceptual.get(i, j),
                m.norm_contextual.get(i, j),
                m.fused.get(i, j)
            );
        }
    }
    fs::write(out.join("visual.csv"), visual)?;
    fs::write(out.join("conceptual.csv"), conceptual)?;
    fs::write(out.join("contextual.csv"), contextual)?;
    fs::write(out.join("fused.csv"), fused)?;
    Ok(())
}

fn run_build(
    args: &CommonArgs,
    corpus: &Corpus,
    similarity: &VocabularySimilarity,
) -> anyhow::Result<BuildOutcome> {
    let lexicon = load_lexicon(&args.lexicon)?;
    let outcome = build_hierarchy(
        corpus,
        &lexicon,
        &similarity.matrix,
        &similarity.centroids,
        &build_config(args),
    )?;
    outcome
        .hierarchy
        .save(&args.out.join("hierarchy.json"), &outcome.merges)?;
    fs::write(args.out.join("hierarchy.dot"), to_dot(&outcome.hierarchy))?;

    let mut provenance = String::from("iteration,rule,score,node,synset,children\n");
    for merge in &outcome.merges {
        let rule = serde_json::to_value(merge.rule)?;
        for node in &merge.created {
            let _ = writeln!(
                provenance,
                "{},{},{},{},{},{}",
                merge.iteration,
                rule.as_str().unwrap_or("unknown"),
                merge.score,
                node.name,
                node.synset,
                node.children.join(";")
            );
        }
    }
    fs::write(args.out.join("provenance.csv"), provenance)?;
    println!(
        "hierarchy: {} nodes ({} leaves), {} merges",
        outcome.hierarchy.len(),
        outcome.hierarchy.leaf_names().len(),
        outcome.merges.len()
    );
    Ok(outcome)
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

fn write_pr_curves(out: &Path, system: &str, report: &EvalReport) -> anyhow::Result<()> {
    for (concept, curve) in &report.pr_curves {
        let mut text = String::from("recall,precision\n");
        for (recall, precision) in curve {
            let _ = writeln!(text, "{recall},{precision}");
        }
        fs::write(
            out.join(format!("pr_{system}_{}.csv", sanitize(concept))),
            text,
        )?;
    }
    Ok(())
}

fn run_evaluate(
    args: &EvaluateArgs,
    corpus: &Corpus,
    hierarchy: &Hierarchy,
) -> anyhow::Result<()> {
    let out = &args.common.out;
    let (train, test) = classify::split_corpus(corpus, args.split, args.common.seed)?;
    let config = train_config(&args.common);
    let flat = train_flat(&train, &config)?;
    let hierarchical = train_hierarchical(&train, hierarchy, &config)?;
    let echo = ConfigEcho {
        weights: args.common.weights,
        seed: args.common.seed,
        folds: args.common.folds,
    };
    let (flat_report, hier_report) = classify::evaluate(
        &flat,
        &hierarchical,
        &test,
        args.leaf_score.into(),
        echo,
    )?;

    let mut report = String::from("concept,flat_ap,hierarchical_ap,delta\n");
    for (concept, flat_ap) in &flat_report.per_concept_ap {
        let hier_ap = hier_report.per_concept_ap[concept];
        let _ = writeln!(report, "{concept},{flat_ap},{hier_ap},{}", hier_ap - flat_ap);
    }
    let delta = hier_report.mean_ap - flat_report.mean_ap;
    let _ = writeln!(
        report,
        "mean,{},{},{}",
        flat_report.mean_ap, hier_report.mean_ap, delta
    );
    fs::write(out.join("ap_report.csv"), report)?;
    write_pr_curves(out, "flat", &flat_report)?;
    write_pr_curves(out, "hierarchical", &hier_report)?;

    println!(
        "mean AP: flat {:.4}, hierarchical {:.4}, delta {:+.4}",
        flat_report.mean_ap, hier_report.mean_ap, delta
    );
    Ok(())
}
