//! Subcommands and their artifact wiring.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use metsk_core::data::{generate_synthetic, Dataset, Domain};
use metsk_core::domsim::{build_histograms, emd_plan, mean_flatten_features, similarity_from_emd};
use metsk_core::meta::{cross_validate_strategy, train, Strategy};
use metsk_core::probe::{
    evaluate_cv, extract_features, roi_layout, svm_feature_importance, train_linear_svm, Classifier, ExtractConfig, MlpConfig,
    Standardizer,
};

use crate::artifacts::{
    domsim_report_json, eval_table_json, features_csv, importance_csv, probe_report_json, read_features, training_log, FeatureTable,
};
use crate::config::{parse_config, parse_synth_spec, RunConfig};
use crate::dataset_io::{load_dataset, load_labels, save_dataset};
use crate::error::{Error, Result};
use crate::model_io::{load_model, save_model};

#[derive(Debug, Parser)]
#[command(name = "metsk", version, about = "Meta-learned transfer of fMRI graph encoders")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Overrides `seed` from the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// `key = value` settings file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; every file a command writes goes here.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model; writes model.txt and train.log.
    Train {
        #[arg(long)]
        strategy: Option<String>,
        #[arg(long)]
        source: Option<PathBuf>,
        #[arg(long)]
        target: Option<PathBuf>,
    },
    /// Zero-shot features of a dataset; writes features.csv.
    Extract {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Cross-validated linear probe; writes report.json.
    Probe {
        #[arg(long)]
        features: PathBuf,
        /// `labels.csv` covering every subject in the feature file.
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, value_enum)]
        classifier: Option<ClassifierArg>,
        /// Also write per-ROI SVM importance to importance.csv.
        #[arg(long)]
        importance: bool,
    },
    /// Domain similarity between two feature files; writes domsim.json.
    Domsim {
        #[arg(long)]
        source_features: PathBuf,
        #[arg(long)]
        target_features: PathBuf,
        /// Include the optimal flow matrix.
        #[arg(long)]
        flow: bool,
    },
    /// Synthetic source and target cohorts; writes source/ and target/.
    Synth {
        /// `key = value` generator settings; defaults when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Cross-validated strategy comparison; writes eval.json.
    Eval {
        #[arg(long)]
        source: Option<PathBuf>,
        #[arg(long)]
        target: Option<PathBuf>,
        /// Comma-separated strategy names.
        #[arg(long, value_delimiter = ',', default_value = "baseline,metsk")]
        strategies: Vec<String>,
        /// Comma-separated seeds; defaults to the run seed.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ClassifierArg {
    Svm,
    Mlp,
}

/// Parses `argv` and runs the command; returns the process exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.common.config {
        Some(path) => parse_config(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.common.seed {
        cfg.meta.seed = seed;
    }
    let out = cli.common.out.clone().or_else(|| cfg.out.clone()).ok_or_else(|| Error::Usage("--out is required".into()))?;
    match cli.command {
        Command::Train { strategy, source, target } => cmd_train(&cfg, &out, strategy, source, target),
        Command::Extract { model, data } => cmd_extract(&cfg, &out, &model, &data),
        Command::Probe { features, labels, classifier, importance } => {
            cmd_probe(&mut cfg, &out, &features, &labels, classifier, importance)
        }
        Command::Domsim { source_features, target_features, flow } => {
            cmd_domsim(&cfg, &out, &source_features, &target_features, flow)
        }
        Command::Synth { spec } => cmd_synth(&cfg, &out, spec.as_deref()),
        Command::Eval { source, target, strategies, seeds } => cmd_eval(&cfg, &out, source, target, &strategies, seeds),
    }
}

fn write(out: &Path, name: &str, text: &str) -> Result<()> {
    fs::create_dir_all(out).map_err(Error::io(out))?;
    let path = out.join(name);
    fs::write(&path, text).map_err(Error::io(&path))
}

fn parse_strategy(name: &str) -> Result<Strategy> {
    Strategy::parse(name).ok_or_else(|| {
        let known: Vec<&str> = Strategy::ALL.iter().map(|s| s.name()).collect();
        Error::Usage(format!("unknown strategy `{name}` (expected one of {})", known.join(", ")))
    })
}

fn load_optional(path: Option<PathBuf>, domain: Domain) -> Result<Option<Dataset>> {
    path.map(|p| load_dataset(&p, domain)).transpose()
}

fn cmd_train(cfg: &RunConfig, out: &Path, strategy: Option<String>, source: Option<PathBuf>, target: Option<PathBuf>) -> Result<()> {
    let strategy = match strategy {
        Some(name) => parse_strategy(&name)?,
        None => cfg.strategy.ok_or_else(|| Error::Usage("--strategy is required".into()))?,
    };
    let source = load_optional(source.or_else(|| cfg.source.clone()), Domain::Source)?;
    let target = load_optional(target.or_else(|| cfg.target.clone()), Domain::Target)?;
    let state = train(strategy, source.as_ref(), target.as_ref(), &cfg.meta)?;
    fs::create_dir_all(out).map_err(Error::io(out))?;
    save_model(&out.join("model.txt"), &state.model)?;
    write(out, "train.log", &training_log(&state.history))
}

fn cmd_extract(cfg: &RunConfig, out: &Path, model: &Path, data: &Path) -> Result<()> {
    let model = load_model(model)?;
    let dataset = load_dataset(data, Domain::Target)?;
    let extract = ExtractConfig { window: cfg.meta.window, windows_per_subject: cfg.meta.windows_per_subject, seed: cfg.meta.seed };
    let features = extract_features(&model, &dataset, &extract)?;
    write(out, "features.csv", &features_csv(&features))
}

fn labels_for(table: &FeatureTable, labels_path: &Path) -> Result<Vec<u8>> {
    let labels = load_labels(labels_path)?;
    table
        .subject_ids
        .iter()
        .map(|id| labels.get(id).copied().ok_or_else(|| Error::invalid(labels_path, format!("no label for `{id}`"))))
        .collect()
}

fn cmd_probe(
    cfg: &mut RunConfig,
    out: &Path,
    features: &Path,
    labels: &Path,
    classifier: Option<ClassifierArg>,
    importance: bool,
) -> Result<()> {
    let table = read_features(features)?;
    let y = labels_for(&table, labels)?;
    match classifier {
        Some(ClassifierArg::Svm) => cfg.probe.classifier = Classifier::svm(),
        Some(ClassifierArg::Mlp) => cfg.probe.classifier = Classifier::Mlp(MlpConfig::default()),
        None => {}
    }
    let spec = cfg.probe_spec();
    let report = evaluate_cv(&table.rows, &y, &spec)?;
    write(out, "report.json", &probe_report_json(&report)?)?;
    if importance {
        // Per-ROI attribution needs the raw ROI columns, so no PCA here.
        let x = if spec.standardize { Standardizer::fit(&table.rows)?.transform(&table.rows) } else { table.rows.clone() };
        let svm = train_linear_svm(&x, &y, cfg.svm_c, cfg.svm_iters)?;
        let channels = table.roi_of_column.len() / table.parcels().max(1);
        let values = svm_feature_importance(&svm.weights, &roi_layout(table.parcels(), channels))?;
        write(out, "importance.csv", &importance_csv(&values))?;
    }
    Ok(())
}

fn cmd_domsim(cfg: &RunConfig, out: &Path, source: &Path, target: &Path, with_flow: bool) -> Result<()> {
    let x_s = mean_flatten_features(&read_features(source)?.matrices()?)?;
    let x_t = mean_flatten_features(&read_features(target)?.matrices()?)?;
    if x_s.len() != x_t.len() {
        return Err(Error::invalid(target, format!("{} features, source has {}", x_t.len(), x_s.len())));
    }
    let (h_s, h_t) = build_histograms(&x_s, &x_t, cfg.bins)?;
    let plan = emd_plan(&h_s, &h_t)?;
    let ds = similarity_from_emd(plan.cost, cfg.gamma)?;
    write(out, "domsim.json", &domsim_report_json(&plan, ds, cfg.gamma, cfg.bins, with_flow)?)
}

fn cmd_synth(cfg: &RunConfig, out: &Path, spec: Option<&Path>) -> Result<()> {
    let spec = match spec {
        Some(p) => parse_synth_spec(p)?,
        None => Default::default(),
    };
    let (source, target) = generate_synthetic(&spec, cfg.meta.seed)?;
    save_dataset(&out.join("source"), &source)?;
    save_dataset(&out.join("target"), &target)
}

fn cmd_eval(
    cfg: &RunConfig,
    out: &Path,
    source: Option<PathBuf>,
    target: Option<PathBuf>,
    strategies: &[String],
    mut seeds: Vec<u64>,
) -> Result<()> {
    let strategies = strategies.iter().map(|s| parse_strategy(s)).collect::<Result<Vec<_>>>()?;
    if seeds.is_empty() {
        seeds.push(cfg.meta.seed);
    }
    let source = load_optional(source.or_else(|| cfg.source.clone()), Domain::Source)?;
    let target_path = target.or_else(|| cfg.target.clone()).ok_or_else(|| Error::Usage("eval needs --target".into()))?;
    let target = load_dataset(&target_path, Domain::Target)?;
    let mut results = Vec::with_capacity(strategies.len());
    for &strategy in &strategies {
        let mut row = Vec::with_capacity(seeds.len());
        for &seed in &seeds {
            let meta = metsk_core::meta::MetaConfig { seed, ..cfg.meta.clone() };
            row.push(cross_validate_strategy(strategy, source.as_ref(), &target, cfg.probe.folds, &meta)?);
        }
        results.push(row);
    }
    write(out, "eval.json", &eval_table_json(cfg.probe.folds, &seeds, &results)?)
}
