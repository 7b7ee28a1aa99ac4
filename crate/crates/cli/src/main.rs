//! Command-line driver for the malicious-call detection pipeline:
//! synthetic log generation, feature export, model training, the
//! evaluation/ablation/importance experiments, the latency benchmark,
//! and the blacklist-baseline comparison. Every subcommand is
//! deterministic under a fixed `--seed`; failures exit nonzero with an
//! error JSON on stderr.

use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use callwarden_core::call_log::{read_log, write_log, CallLog, LabelTable};
use callwarden_core::experiments::{
    ablation_suite_on, bench_latency, compare_baseline, importance_and_top10_on,
    run_experiment_on, write_ablation_outputs, write_bench_outputs, write_experiment_outputs,
    write_importance_outputs, BenchSpec, ExperimentOutput, ExperimentSpec,
};
use callwarden_core::features::{
    build_dataset, extract_examples, write_dataset_csv, DatasetManifest, FeatureParams,
    FeatureSelector, Sampling,
};
use callwarden_core::models::{serialize_model, train, ModelConfig, ModelKind};
use callwarden_core::synthgen::{generate_log, GeneratedLog, GeneratorConfig};

#[derive(Parser)]
#[command(name = "callwarden", version, about = "Malicious-call early-detection pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SelectorArg {
    All,
    NoHistoric,
    NoCrossref,
    Basic,
}

impl From<SelectorArg> for FeatureSelector {
    fn from(arg: SelectorArg) -> Self {
        match arg {
            SelectorArg::All => FeatureSelector::All,
            SelectorArg::NoHistoric => FeatureSelector::NoHistoric,
            SelectorArg::NoCrossref => FeatureSelector::NoCrossref,
            SelectorArg::Basic => FeatureSelector::Basic,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Logistic,
    Svm,
    Mlp,
    Forest,
    Gbt,
}

impl From<ModelArg> for ModelKind {
    fn from(arg: ModelArg) -> Self {
        match arg {
            ModelArg::Logistic => ModelKind::Logistic,
            ModelArg::Svm => ModelKind::Svm,
            ModelArg::Mlp => ModelKind::Mlp,
            ModelArg::Forest => ModelKind::Forest,
            ModelArg::Gbt => ModelKind::Gbt,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SamplingArg {
    Balanced,
    AllBenign,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled call log.
    Generate {
        /// Generator config JSON; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export the encoded feature matrix of a log as CSV.
    Featurize {
        /// Directory holding log.jsonl, meta.json, labels.json.
        #[arg(long)]
        log: PathBuf,
        #[arg(long, value_enum, default_value = "all")]
        selector: SelectorArg,
        #[arg(long, value_enum, default_value = "balanced")]
        sampling: SamplingArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model on a log's balanced dataset and save it.
    Train {
        #[arg(long)]
        log: PathBuf,
        #[arg(long, value_enum)]
        model: ModelArg,
        #[arg(long, value_enum, default_value = "all")]
        selector: SelectorArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full evaluation experiment and write reports.
    Evaluate {
        /// Experiment spec JSON; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Use this log directory instead of generating one.
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// AUC over the four feature subsets.
    Ablate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Feature-usage ranking and the top-10 re-evaluation.
    Importance {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-prediction latency of the trained models.
    Bench {
        /// Bench spec JSON; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tabulate model AFP against the blacklist baseline.
    CompareBaseline {
        /// report.json produced by `evaluate`.
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_json<T: serde::de::DeserializeOwned + Default>(path: &Option<PathBuf>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let file = fs::File::open(p).with_context(|| format!("opening {}", p.display()))?;
            serde_json::from_reader(BufReader::new(file))
                .with_context(|| format!("parsing {}", p.display()))
        }
    }
}

fn load_log_dir(dir: &Path) -> Result<(CallLog, LabelTable)> {
    let log_file = fs::File::open(dir.join("log.jsonl"))
        .with_context(|| format!("opening {}/log.jsonl", dir.display()))?;
    let meta_file = fs::File::open(dir.join("meta.json"))
        .with_context(|| format!("opening {}/meta.json", dir.display()))?;
    let log = read_log(BufReader::new(log_file), BufReader::new(meta_file))?;
    let labels_file = fs::File::open(dir.join("labels.json"))
        .with_context(|| format!("opening {}/labels.json", dir.display()))?;
    let labels: LabelTable = serde_json::from_reader(BufReader::new(labels_file))
        .context("parsing labels.json")?;
    Ok((log, labels))
}

fn write_log_dir(dir: &Path, generated: &GeneratedLog) -> Result<()> {
    fs::create_dir_all(dir)?;
    let log_file = fs::File::create(dir.join("log.jsonl"))?;
    let meta_file = fs::File::create(dir.join("meta.json"))?;
    write_log(&generated.log, BufWriter::new(log_file), BufWriter::new(meta_file))?;
    let mut labels_file = fs::File::create(dir.join("labels.json"))?;
    serde_json::to_writer_pretty(&mut labels_file, &generated.labels)?;
    std::io::Write::write_all(&mut labels_file, b"\n")?;
    Ok(())
}

/// Takes the provided log or generates one from the spec.
fn obtain_log(
    log_dir: &Option<PathBuf>,
    generator: &GeneratorConfig,
) -> Result<(CallLog, LabelTable)> {
    match log_dir {
        Some(dir) => load_log_dir(dir),
        None => {
            let generated = generate_log(generator)?;
            Ok((generated.log, generated.labels))
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { config, seed, out } => {
            let mut cfg: GeneratorConfig = load_json(&config)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let generated = generate_log(&cfg)?;
            write_log_dir(&out, &generated)?;
            eprintln!(
                "wrote {} records ({} malicious numbers) to {}",
                generated.log.len(),
                generated.labels.malicious_count(),
                out.display()
            );
        }
        Command::Featurize { log, selector, sampling, seed, out } => {
            let (call_log, labels) = load_log_dir(&log)?;
            let selector: FeatureSelector = selector.into();
            let sampling = match sampling {
                SamplingArg::Balanced => Sampling::Balanced { seed },
                SamplingArg::AllBenign => Sampling::AllBenign,
            };
            let examples = extract_examples(&call_log, &labels, FeatureParams::default())?;
            let dataset = build_dataset(&examples.examples, &selector, sampling)?;
            fs::create_dir_all(&out)?;
            let csv = fs::File::create(out.join("features.csv"))?;
            write_dataset_csv(&dataset, BufWriter::new(csv))?;
            let manifest = DatasetManifest::describe(&dataset, &selector, sampling);
            let mut mf = fs::File::create(out.join("manifest.json"))?;
            serde_json::to_writer_pretty(&mut mf, &manifest)?;
            std::io::Write::write_all(&mut mf, b"\n")?;
            eprintln!("wrote {} rows x {} columns", dataset.len(), dataset.width());
        }
        Command::Train { log, model, selector, seed, out } => {
            let (call_log, labels) = load_log_dir(&log)?;
            let kind: ModelKind = model.into();
            let selector: FeatureSelector = selector.into();
            let examples = extract_examples(&call_log, &labels, FeatureParams::default())?;
            let sampling = Sampling::Balanced { seed };
            let dataset = build_dataset(&examples.examples, &selector, sampling)?;
            let trained = train(kind, &dataset, &ModelConfig::default(), seed)?;
            fs::create_dir_all(&out)?;
            fs::write(out.join(format!("model_{}.json", kind.name())), serialize_model(&trained))?;
            let manifest = DatasetManifest::describe(&dataset, &selector, sampling);
            let mut mf = fs::File::create(out.join("train_manifest.json"))?;
            serde_json::to_writer_pretty(&mut mf, &manifest)?;
            std::io::Write::write_all(&mut mf, b"\n")?;
            eprintln!("trained {} on {} rows", kind, dataset.len());
        }
        Command::Evaluate { config, log, seed, out } => {
            let mut spec: ExperimentSpec = load_json(&config)?;
            if let Some(seed) = seed {
                spec.seed = seed;
                spec.generator.seed = seed;
            }
            let (call_log, labels) = obtain_log(&log, &spec.generator)?;
            let output = run_experiment_on(&call_log, &labels, &spec)?;
            write_experiment_outputs(&out, &output)?;
            for report in &output.reports {
                eprintln!(
                    "{:>8}: auc {:.4}, afp@{} {:.2}, reduction {:.3}",
                    report.model,
                    report.auc,
                    report.afp[0].m,
                    report.afp[0].afp,
                    report.afp[0].reduction
                );
            }
        }
        Command::Ablate { config, log, seed, out } => {
            let mut spec: ExperimentSpec = load_json(&config)?;
            if let Some(seed) = seed {
                spec.seed = seed;
                spec.generator.seed = seed;
            }
            let (call_log, labels) = obtain_log(&log, &spec.generator)?;
            let output = ablation_suite_on(&call_log, &labels, &spec)?;
            write_ablation_outputs(&out, &output)?;
            eprintln!("wrote ablation table over {} selectors", output.rows.len());
        }
        Command::Importance { config, log, seed, out } => {
            let mut spec: ExperimentSpec = load_json(&config)?;
            if let Some(seed) = seed {
                spec.seed = seed;
                spec.generator.seed = seed;
            }
            let (call_log, labels) = obtain_log(&log, &spec.generator)?;
            let output = importance_and_top10_on(&call_log, &labels, &spec)?;
            write_importance_outputs(&out, &output)?;
            eprintln!(
                "top feature: {}",
                output.usage.first().map(|u| u.feature.name()).unwrap_or("none")
            );
        }
        Command::Bench { config, iterations, seed, out } => {
            let mut spec: BenchSpec = load_json(&config)?;
            if let Some(iterations) = iterations {
                spec.iterations = iterations;
            }
            if let Some(seed) = seed {
                spec.experiment.seed = seed;
                spec.experiment.generator.seed = seed;
            }
            let rows = bench_latency(&spec)?;
            write_bench_outputs(&out, &rows)?;
            for row in &rows {
                eprintln!(
                    "{:>8} n={}: mean {:.1}us p50 {:.1}us p99 {:.1}us",
                    row.model, row.history_len, row.mean_us, row.p50_us, row.p99_us
                );
            }
        }
        Command::CompareBaseline { report, out } => {
            let file = fs::File::open(&report)
                .with_context(|| format!("opening {}", report.display()))?;
            let output: ExperimentOutput =
                serde_json::from_reader(BufReader::new(file)).context("parsing report.json")?;
            let rows = compare_baseline(&output);
            if rows.is_empty() {
                bail!("report holds no AFP entries to compare");
            }
            fs::create_dir_all(&out)?;
            let mut json = fs::File::create(out.join("baseline.json"))?;
            serde_json::to_writer_pretty(&mut json, &rows)?;
            std::io::Write::write_all(&mut json, b"\n")?;
            let mut csv = String::from(
                "model,m,model_afp,baseline_afp,model_reduction,baseline_reduction\n",
            );
            for row in &rows {
                csv.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    row.model,
                    row.m,
                    row.model_afp,
                    row.baseline_afp,
                    row.model_reduction,
                    row.baseline_reduction
                ));
            }
            fs::write(out.join("baseline.csv"), csv)?;
            eprintln!("wrote {} comparison rows", rows.len());
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        let payload = serde_json::json!({
            "error": {
                "message": err.to_string(),
                "chain": err.chain().skip(1).map(|c| c.to_string()).collect::<Vec<_>>(),
            }
        });
        eprintln!("{payload}");
        std::process::exit(1);
    }
}
