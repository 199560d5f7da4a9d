use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use tcrex::data::{load_csv, load_labeled_csv, write_csv};
use tcrex::evaluation::{cross_validate_labeled, evaluate_file, write_reports, Goal};
use tcrex::render::{feature_usage_summary, render_explanation, render_feature_usage, render_metarule_tree, render_summary};
use tcrex::{
    exec, label_with_model, synth, BlackBoxModel, CrexConfig, Dataset, Error, Execution, Explanation, FeatureSchema,
    LabeledDataset, ModelFile, ModelKind, ModelSet, PercentileTable, ProcessModel, RuleModel, Surrogate, TargetSpec,
};

#[derive(Parser)]
#[command(name = "tcrex", version, about = "Global counterfactual rules for black-box models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn rules and metarules from labeled data.
    Fit(FitArgs),
    /// Explain each row of a CSV with a fitted model.
    Explain(ExplainArgs),
    /// Score a fitted model on labeled data, or cross-validate from scratch.
    Evaluate(EvaluateArgs),
    /// Print the metarule tree of a fitted model.
    Render(RenderArgs),
    /// Write a seeded synthetic dataset.
    Synth(SynthArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Minimum rule accuracy.
    #[arg(long, default_value_t = 0.9)]
    tau: f64,
    /// Minimum rule feasibility.
    #[arg(long, default_value_t = 0.02)]
    rho: f64,
    /// Surrogate tree count.
    #[arg(long, default_value_t = 1)]
    trees: usize,
    #[arg(long, default_value_t = tcrex::grid::DEFAULT_CELL_LIMIT)]
    cell_limit: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TargetArgs {
    /// Desired class; repeat for several.
    #[arg(long = "target-class")]
    target_class: Vec<String>,
    /// One model per class, each targeting every other class.
    #[arg(long)]
    target_untargeted: bool,
    /// Regression: move outputs above the threshold.
    #[arg(long)]
    target_high: bool,
    /// Regression: move outputs to at most the threshold. With --target-high,
    /// fits both directions and picks by the instance's output.
    #[arg(long)]
    target_low: bool,
    /// Regression threshold; defaults to the mean training output.
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Args)]
struct OutputArgs {
    /// CSV column holding the model's outputs.
    #[arg(long, default_value = "y")]
    label_column: String,
    /// External model: reads CSV rows on stdin, writes one output per line.
    #[arg(long, conflicts_with = "model_tree")]
    model_cmd: Option<String>,
    /// Tree model JSON as written by `synth`.
    #[arg(long)]
    model_tree: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    schema: PathBuf,
    #[arg(long)]
    model_out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    target: TargetArgs,
    #[command(flatten)]
    outputs: OutputArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
    Both,
}

#[derive(Args)]
struct ExplainArgs {
    #[arg(long)]
    model_in: PathBuf,
    /// Instances to explain.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Both)]
    format: Format,
    /// Append a count of how often each feature is changed or kept.
    #[arg(long)]
    usage: bool,
    #[command(flatten)]
    outputs: OutputArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Labeled data: the test set with --model-in, the full set with --folds.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, conflicts_with = "folds")]
    model_in: Option<PathBuf>,
    /// Cross-validate with this many folds instead of scoring a stored model.
    #[arg(long, requires = "schema")]
    folds: Option<usize>,
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long)]
    report_dir: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    target: TargetArgs,
    #[command(flatten)]
    outputs: OutputArgs,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    model_in: PathBuf,
    /// Drop branches this CSV never reaches and show row counts.
    #[arg(long)]
    sample: Option<PathBuf>,
    /// Also list every rule with its metarules.
    #[arg(long)]
    summary: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthKind {
    /// Two Gaussian clusters with a fixed tree classifier.
    Clusters,
    /// Clusters with a fraction of labels flipped.
    Noisy,
    /// One numerical and one categorical feature.
    Mixed,
    /// Step regression signal.
    Regression,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum, default_value_t = SynthKind::Clusters)]
    kind: SynthKind,
    #[arg(long, default_value_t = 500)]
    rows: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Flip one label in this many (noisy kind).
    #[arg(long, default_value_t = 7)]
    noise_period: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

/// How the fitted artifact relates to targets.
enum Plan {
    Fixed(TargetSpec),
    Untargeted,
    /// Regression with an optional fixed threshold and the wanted directions.
    Regression { high: bool, low: bool, threshold: Option<f64> },
}

impl Plan {
    fn from_args(t: &TargetArgs) -> Result<Plan> {
        let chosen = [!t.target_class.is_empty(), t.target_untargeted, t.target_high || t.target_low]
            .iter()
            .filter(|&&b| b)
            .count();
        if chosen != 1 {
            bail!(Error::InvalidConfig(
                "give exactly one of --target-class, --target-untargeted or --target-high/--target-low".into()
            ));
        }
        if t.threshold.is_some() && !(t.target_high || t.target_low) {
            bail!(Error::InvalidConfig("--threshold only applies to regression targets".into()));
        }
        Ok(if t.target_untargeted {
            Plan::Untargeted
        } else if !t.target_class.is_empty() {
            Plan::Fixed(TargetSpec::classes(t.target_class.iter().cloned()))
        } else {
            Plan::Regression {
                high: t.target_high,
                low: t.target_low,
                threshold: t.threshold,
            }
        })
    }

    fn kind(&self) -> ModelKind {
        match self {
            Plan::Regression { .. } => ModelKind::Regressor,
            _ => ModelKind::Classifier,
        }
    }

    /// Target placeholder for validating the shared flags early.
    fn provisional_target(&self) -> TargetSpec {
        match self {
            Plan::Fixed(t) => t.clone(),
            Plan::Untargeted => TargetSpec::classes(["*"]),
            Plan::Regression { .. } => TargetSpec::above(0.0),
        }
    }
}

fn build_config(c: &ConfigArgs, target: TargetSpec) -> Result<CrexConfig> {
    let config = CrexConfig::new(target)
        .tau(c.tau)
        .rho(c.rho)
        .trees(c.trees)
        .cell_limit(c.cell_limit)
        .seed(c.seed)
        .execution(Execution::Parallel);
    config.validate()?;
    Ok(config)
}

fn black_box(o: &OutputArgs, kind: ModelKind) -> Result<Option<Box<dyn BlackBoxModel>>> {
    if let Some(cmd) = &o.model_cmd {
        return Ok(Some(Box::new(ProcessModel::from_command_line(cmd, kind)?)));
    }
    if let Some(path) = &o.model_tree {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let tree: Surrogate = serde_json::from_str(&text).map_err(Error::from)?;
        if tree.kind != kind {
            bail!(Error::TypeMismatch(format!("{} holds a {:?}", path.display(), tree.kind)));
        }
        return Ok(Some(Box::new(tree)));
    }
    Ok(None)
}

/// Rows of `path` with model outputs from the black box or the label column.
fn load_outputs(path: &Path, schema: &FeatureSchema, o: &OutputArgs, kind: ModelKind) -> Result<(Dataset, Option<LabeledDataset>)> {
    match black_box(o, kind)? {
        Some(model) => {
            let data = load_csv(path, schema)?;
            let labeled = label_with_model(&data, model.as_ref(), Execution::Parallel)?;
            Ok((data, Some(labeled)))
        }
        None => {
            let (data, outputs) = load_labeled_csv(path, schema, &o.label_column, kind)?;
            let labeled = outputs.map(|y| LabeledDataset::new(data.clone(), y)).transpose()?;
            Ok((data, labeled))
        }
    }
}

fn load_labeled(path: &Path, schema: &FeatureSchema, o: &OutputArgs, kind: ModelKind) -> Result<LabeledDataset> {
    let (_, labeled) = load_outputs(path, schema, o, kind)?;
    labeled.ok_or_else(|| Error::MissingColumn(o.label_column.clone()).into())
}

fn mean_output(l: &LabeledDataset) -> Result<f64> {
    l.outputs
        .mean()
        .ok_or_else(|| Error::TypeMismatch("regression targets need numeric outputs".into()).into())
}

fn fit_plan(plan: &Plan, labeled: &LabeledDataset, config: &CrexConfig) -> Result<ModelFile> {
    Ok(match plan {
        Plan::Fixed(t) => ModelFile::Single(tcrex::fit(labeled, &config.with_target(t.clone()))?),
        Plan::Untargeted => ModelFile::Set(ModelSet::fit_untargeted(labeled, config)?),
        Plan::Regression { high: true, low: true, threshold } => {
            ModelFile::Set(ModelSet::fit_regression(labeled, config, *threshold)?)
        }
        Plan::Regression { high, threshold, .. } => {
            let mu = match threshold {
                Some(t) => *t,
                None => mean_output(labeled)?,
            };
            let target = if *high { TargetSpec::above(mu) } else { TargetSpec::at_most(mu) };
            ModelFile::Single(tcrex::fit(labeled, &config.with_target(target))?)
        }
    })
}

fn model_kind(file: &ModelFile) -> ModelKind {
    file.models()[0].kind()
}

fn describe(m: &RuleModel) -> String {
    let count = |n: usize, word: &str| format!("{n} {word}{}", if n == 1 { "" } else { "s" });
    format!(
        "target {}: {}, {}, {}",
        m.config.target,
        count(m.rules.len(), "rule"),
        count(m.metarule_count(), "metarule"),
        count(m.provenance.cell_count as usize, "grid cell")
    )
}

fn cmd_fit(a: FitArgs) -> Result<()> {
    let plan = Plan::from_args(&a.target)?;
    let config = build_config(&a.config, plan.provisional_target())?;
    let schema = FeatureSchema::from_json_file(&a.schema)?;
    let labeled = load_labeled(&a.data, &schema, &a.outputs, plan.kind())?;
    let start = Instant::now();
    let file = fit_plan(&plan, &labeled, &config)?;
    let secs = start.elapsed().as_secs_f64();
    file.save(&a.model_out)?;
    for m in file.models() {
        println!("{}", describe(m));
    }
    println!("fit time: {secs:.3}s");
    println!("model written to {}", a.model_out.display());
    Ok(())
}

#[derive(Serialize)]
struct ExplainRecord<'a> {
    row: usize,
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    explanation: Option<&'a Explanation>,
}

fn cmd_explain(a: ExplainArgs) -> Result<()> {
    let file = ModelFile::load(&a.model_in)?;
    let schema = file.schema().clone();
    let (data, labeled) = load_outputs(&a.data, &schema, &a.outputs, model_kind(&file))?;
    let outputs = labeled.map(|l| l.outputs);
    let results: Vec<Option<Explanation>> = exec::try_map_range(Execution::Parallel, data.len(), |i| {
        let y0 = outputs.as_ref().map(|o| o.get(i));
        if let (ModelFile::Single(m), Some(y)) = (&file, &y0) {
            if m.config.target.matches(y)? {
                return Ok(None);
            }
        }
        let model = file.select(y0.as_ref())?;
        model.explain(data.row(i)).map(Some).map_err(|e| match e {
            Error::InvalidRow { reason, .. } => Error::InvalidRow { row: i, reason },
            other => other,
        })
    })?;

    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    for (row, r) in results.iter().enumerate() {
        if matches!(a.format, Format::Text | Format::Both) {
            match r {
                None => writeln!(out, "row {row}: already satisfies target")?,
                Some(e) => write!(out, "row {row}: {}", render_explanation(e, &schema))?,
            }
        }
        if matches!(a.format, Format::Json | Format::Both) {
            let rec = ExplainRecord {
                row,
                status: if r.is_some() { "explained" } else { "already_satisfies_target" },
                explanation: r.as_ref(),
            };
            writeln!(out, "{}", serde_json::to_string(&rec)?)?;
        }
    }
    if a.usage {
        let explained: Vec<Explanation> = results.into_iter().flatten().collect();
        write!(out, "{}", render_feature_usage(&feature_usage_summary(&explained, &schema)))?;
    }
    out.flush()?;
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<()> {
    let reports = if let Some(folds) = a.folds {
        let plan = Plan::from_args(&a.target)?;
        let config = build_config(&a.config, plan.provisional_target())?;
        let schema_path = a.schema.as_ref().context("--folds needs --schema")?;
        let schema = FeatureSchema::from_json_file(schema_path)?;
        let labeled = load_labeled(&a.data, &schema, &a.outputs, plan.kind())?;
        let (goal, config) = match plan {
            Plan::Fixed(t) => (Goal::Fixed, config.with_target(t)),
            Plan::Untargeted => (Goal::Untargeted, config),
            Plan::Regression { high: true, low: true, .. } => (Goal::RegressionHalves, config),
            Plan::Regression { high, threshold, .. } => {
                let mu = match threshold {
                    Some(t) => t,
                    None => mean_output(&labeled)?,
                };
                let target = if high { TargetSpec::above(mu) } else { TargetSpec::at_most(mu) };
                (Goal::Fixed, config.with_target(target))
            }
        };
        cross_validate_labeled(&labeled, &config, &goal, folds, a.config.seed)?
    } else {
        let path = a.model_in.as_ref().context("give --model-in or --folds")?;
        let file = ModelFile::load(path)?;
        let labeled = load_labeled(&a.data, file.schema(), &a.outputs, model_kind(&file))?;
        let table = PercentileTable::fit(&labeled.data);
        vec![evaluate_file(&file, &labeled, &table)?]
    };
    let summary = write_reports(&a.report_dir, &reports)?;
    println!("{}", serde_json::to_string_pretty(&summary.mean)?);
    println!("reports written to {}", a.report_dir.display());
    Ok(())
}

fn cmd_render(a: RenderArgs) -> Result<()> {
    let file = ModelFile::load(&a.model_in)?;
    let sample = a.sample.as_ref().map(|p| load_csv(p, file.schema())).transpose()?;
    let models = file.models();
    for (k, m) in models.iter().enumerate() {
        if models.len() > 1 {
            if k > 0 {
                println!();
            }
            println!("model {k} ({})", m.config.target);
        }
        print!("{}", render_metarule_tree(m, sample.as_ref()));
        if a.summary {
            println!();
            print!("{}", render_summary(m));
        }
    }
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let (labeled, tree) = match a.kind {
        SynthKind::Clusters => (synth::two_clusters(a.rows, a.seed)?, Some(synth::cluster_classifier())),
        SynthKind::Noisy => (synth::noisy_clusters(a.rows, a.seed, a.noise_period.max(1))?, None),
        SynthKind::Mixed => (synth::mixed(a.rows, a.seed)?, Some(synth::mixed_classifier())),
        SynthKind::Regression => (synth::regression_signal(a.rows, a.seed)?, Some(synth::signal_regressor())),
    };
    let dir = &a.out_dir;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let data_path = dir.join("data.csv");
    let file = fs::File::create(&data_path).with_context(|| format!("creating {}", data_path.display()))?;
    write_csv(BufWriter::new(file), &labeled.data, Some(("y", &labeled.outputs)))?;
    let schema_json = serde_json::to_string_pretty(labeled.data.schema())? + "\n";
    fs::write(dir.join("schema.json"), schema_json).context("writing schema.json")?;
    if let Some(t) = tree {
        fs::write(dir.join("model.json"), serde_json::to_string_pretty(&t)? + "\n").context("writing model.json")?;
    }
    println!("wrote {} rows to {}", labeled.len(), dir.display());
    Ok(())
}

fn broken_pipe(err: &anyhow::Error) -> bool {
    err.chain()
        .any(|e| e.downcast_ref::<io::Error>().is_some_and(|e| e.kind() == io::ErrorKind::BrokenPipe))
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::NoValidRules) => 2,
        Some(Error::CellLimitExceeded { .. }) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    if let Some(n) = std::env::var("TCREX_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            exec::set_thread_limit(n);
        }
    }
    let result = match cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Explain(a) => cmd_explain(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Render(a) => cmd_render(a),
        Command::Synth(a) => cmd_synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
