//! Command-line front end: scheme planning, parameter counting,
//! training, evaluation, gradient verification, and reference-table
//! reproduction.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use lgc::budget::{count_parameters, reference_total};
use lgc::checkpoint;
use lgc::data::synthetic::make_synthetic_faceset;
use lgc::data::{apply_normalization, channel_stats, cifar, Dataset};
use lgc::gradcheck::standard_suite;
use lgc::model::{Model, NetworkSpec};
use lgc::optim::{cifar_schedule, fer_schedule, AdamConfig, LrSchedule};
use lgc::scheme::{
    canonical_scheme_table, is_corrected_log_array, log_group_sizes, GroupFamily,
    CANONICAL_SCHEME_NAMES,
};
use lgc::train::{evaluate, train, Augmentation, TrainConfig};

#[derive(Parser)]
#[command(
    name = "lgc",
    version,
    about = "Logarithmic filter grouping toolkit for shallow CNNs"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print the group-size arrays a scheme plans for each layer.
    Plan(PlanArgs),
    /// Itemize the trainable-weight budget of one scheme.
    CountParams(CountArgs),
    /// Train a model and write history plus checkpoints.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset's test split.
    Eval(EvalArgs),
    /// Run the finite-difference gradient suite.
    Gradcheck(GradcheckArgs),
    /// Compare computed parameter totals against the published tables.
    ReproduceTables(TablesArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Csv,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DatasetKind {
    /// CIFAR-10 binary batches under --data-dir.
    Cifar10,
    /// Procedural six-class 64x64 set; no files needed.
    Synthetic,
}

#[derive(Args)]
struct PlanArgs {
    /// Canonical scheme name (e.g. Logarithmic-8). Omit to plan a
    /// single layer from --channels and --groups.
    scheme: Option<String>,
    /// Channel count for a one-off logarithmic plan.
    #[arg(long, requires = "groups", conflicts_with = "scheme")]
    channels: Option<usize>,
    /// Group count for a one-off logarithmic plan.
    #[arg(long, requires = "channels", conflicts_with = "scheme")]
    groups: Option<usize>,
}

#[derive(Args)]
struct CountArgs {
    /// Canonical scheme name.
    #[arg(long, default_value = "Logarithmic-8")]
    scheme: String,
    /// Classifier width.
    #[arg(long, default_value_t = 10)]
    classes: usize,
    /// Drop the identity shortcuts (never changes the count).
    #[arg(long)]
    no_shortcut: bool,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_enum, default_value_t = DatasetKind::Cifar10)]
    dataset: DatasetKind,
    /// Directory holding the CIFAR-10 binary batches.
    #[arg(long, default_value = "data")]
    data_dir: PathBuf,
    #[arg(long, default_value = "Logarithmic-8")]
    scheme: String,
    /// RNG seed for initialization, shuffling, and augmentation.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Defaults to the schedule's full length.
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, default_value_t = 128)]
    batch_size: usize,
    /// cifar, fer, or const:<rate>.
    #[arg(long, default_value = "cifar")]
    lr_schedule: String,
    /// Train without the identity shortcuts.
    #[arg(long)]
    no_shortcut: bool,
    /// Resume from this checkpoint (optimizer moments restart).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Output directory for history.csv, last.ckpt, best.ckpt.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Synthetic dataset: train split size.
    #[arg(long, default_value_t = 600)]
    synthetic_train: usize,
    /// Synthetic dataset: test split size.
    #[arg(long, default_value_t = 120)]
    synthetic_test: usize,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint to evaluate.
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, value_enum, default_value_t = DatasetKind::Cifar10)]
    dataset: DatasetKind,
    #[arg(long, default_value = "data")]
    data_dir: PathBuf,
    #[arg(long, default_value = "Logarithmic-8")]
    scheme: String,
    #[arg(long)]
    no_shortcut: bool,
    /// Seed for synthetic data generation; match the training run's.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 600)]
    synthetic_train: usize,
    #[arg(long, default_value_t = 120)]
    synthetic_test: usize,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TablesArgs {
    /// Classifier width of the published tables (6 or 10).
    #[arg(long, default_value_t = 10)]
    classes: usize,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Plan(args) => cmd_plan(args),
        Cmd::CountParams(args) => cmd_count_params(args),
        Cmd::Train(args) => cmd_train(args),
        Cmd::Eval(args) => cmd_eval(args),
        Cmd::Gradcheck(args) => cmd_gradcheck(args),
        Cmd::ReproduceTables(args) => cmd_reproduce_tables(args),
    }
}

fn lookup_scheme(name: &str) -> Result<lgc::scheme::SchemeTable> {
    canonical_scheme_table(name).with_context(|| {
        format!(
            "unknown scheme {name:?}; canonical names: {}",
            CANONICAL_SCHEME_NAMES.join(", ")
        )
    })
}

/// 1,234,567-style rendering for table output.
fn thousands(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

const CORRECTION_NOTICE: &str = "note: the published 16-group array for 128 channels sums to 120; \
     using the corrected 16-entry partition that restores the channel total.";

fn cmd_plan(args: PlanArgs) -> Result<()> {
    match (args.scheme, args.channels, args.groups) {
        (Some(name), None, None) => {
            let table = lookup_scheme(&name)?;
            print!("{table}");
            let corrected = [&table.layer2, &table.layer3]
                .iter()
                .any(|s| is_corrected_log_array(s.channels, s.group_count));
            if corrected {
                println!("{CORRECTION_NOTICE}");
            }
        }
        (None, Some(channels), Some(groups)) => {
            let sizes = log_group_sizes(channels, groups)?;
            println!("family: Logarithmic");
            println!("channels: {channels}");
            println!("group_count: {groups}");
            println!("sizes: {sizes:?}");
            if is_corrected_log_array(channels, groups) {
                println!("{CORRECTION_NOTICE}");
            }
        }
        _ => bail!("pass a scheme name, or both --channels and --groups"),
    }
    Ok(())
}

fn cmd_count_params(args: CountArgs) -> Result<()> {
    let table = lookup_scheme(&args.scheme)?;
    let spec = NetworkSpec::new(table, args.classes, (32, 32), !args.no_shortcut)?;
    let budget = count_parameters(&spec)?;
    match args.format {
        Format::Csv => {
            println!("layer,weights");
            for layer in &budget.per_layer {
                println!("{},{}", layer.name, layer.weights);
            }
            println!("total,{}", budget.total);
        }
        Format::Text => {
            println!("scheme: {}  classes: {}", args.scheme, args.classes);
            for layer in &budget.per_layer {
                println!("  {:<22} {:>12}", layer.name, thousands(layer.weights));
            }
            println!("  {:<22} {:>12}", "total", thousands(budget.total));
        }
    }
    Ok(())
}

fn parse_schedule(text: &str) -> Result<LrSchedule> {
    match text {
        "cifar" => Ok(cifar_schedule()),
        "fer" => Ok(fer_schedule()),
        other => {
            let rate = other
                .strip_prefix("const:")
                .with_context(|| format!("unknown schedule {other:?}; use cifar, fer, or const:<rate>"))?
                .parse::<f32>()
                .with_context(|| format!("bad rate in {other:?}"))?;
            Ok(LrSchedule::constant(rate)?)
        }
    }
}

struct LoadedData {
    train: Dataset,
    test: Dataset,
    augmentation: Augmentation,
}

fn load_dataset(kind: DatasetKind, args_dir: &PathBuf, synth: (usize, usize), seed: u64) -> Result<LoadedData> {
    match kind {
        DatasetKind::Cifar10 => {
            let (train, test) = cifar::load_cifar10(args_dir)?;
            Ok(LoadedData {
                train,
                test,
                augmentation: Augmentation::CropFlip,
            })
        }
        DatasetKind::Synthetic => {
            let (train, test) = make_synthetic_faceset(seed, synth.0, synth.1)?;
            Ok(LoadedData {
                train,
                test,
                augmentation: Augmentation::Affine,
            })
        }
    }
}

fn model_for(
    scheme_name: &str,
    data: &LoadedData,
    shortcut: bool,
    seed: u64,
    resume: Option<&PathBuf>,
) -> Result<Model<f32>> {
    let first = data
        .train
        .images
        .first()
        .context("train split is empty")?;
    let table = lookup_scheme(scheme_name)?;
    let spec = NetworkSpec::new(
        table,
        data.train.num_classes,
        (first.height(), first.width()),
        shortcut,
    )?;
    match resume {
        Some(path) => {
            let params = checkpoint::load(path)?;
            Ok(Model::from_params(spec, params)?)
        }
        None => Ok(Model::new(spec, seed)?),
    }
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let schedule = parse_schedule(&args.lr_schedule)?;
    let epochs = match args.epochs {
        Some(e) => e,
        None if schedule.max_epoch() < usize::MAX => schedule.max_epoch(),
        None => bail!("a const schedule has no natural length; pass --epochs"),
    };
    let data = load_dataset(
        args.dataset,
        &args.data_dir,
        (args.synthetic_train, args.synthetic_test),
        args.seed,
    )?;
    let mut model = model_for(
        &args.scheme,
        &data,
        !args.no_shortcut,
        args.seed,
        args.checkpoint.as_ref(),
    )?;
    let total = count_parameters(&model.spec)?.total;
    println!(
        "scheme {}  params {}  train {}  test {}  epochs {}  batch {}",
        args.scheme,
        thousands(total),
        data.train.len(),
        data.test.len(),
        epochs,
        args.batch_size
    );

    let cfg = TrainConfig {
        epochs,
        batch_size: args.batch_size,
        schedule,
        seed: args.seed,
        augmentation: data.augmentation,
        adam: AdamConfig::default(),
        out_dir: Some(args.out.clone()),
    };
    let outcome = train(&mut model, &data.train, &data.test, &cfg)?;
    for r in &outcome.history {
        println!(
            "epoch {:>3}/{}  lr {:<8}  train_loss {:.4}  test_acc {:.4}",
            r.epoch, epochs, r.lr, r.train_loss, r.test_acc
        );
    }
    println!(
        "final test accuracy: {:.4} (epoch {})",
        outcome.final_accuracy,
        outcome.history.len()
    );
    println!(
        "best test accuracy:  {:.4} (epoch {})",
        outcome.best_accuracy, outcome.best_epoch
    );
    println!("artifacts in {}", args.out.display());
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let data = load_dataset(
        args.dataset,
        &args.data_dir,
        (args.synthetic_train, args.synthetic_test),
        args.seed,
    )?;
    let model = model_for(&args.scheme, &data, !args.no_shortcut, args.seed, Some(&args.checkpoint))?;
    // Test pixels are normalized with the train split's statistics.
    let stats = channel_stats(&data.train)?;
    let mut test = data.test.clone();
    apply_normalization(&mut test, &stats);
    let report = evaluate(&model, &test)?;

    println!(
        "accuracy: {:.4} ({}/{})",
        report.accuracy(),
        report.correct,
        report.total
    );
    println!("per-class accuracy:");
    for (c, acc) in report.per_class_accuracy().iter().enumerate() {
        match acc {
            Some(a) => println!(
                "  class {c}: {:.4} ({}/{})",
                a, report.confusion[c][c], report.class_total(c)
            ),
            None => println!("  class {c}: no samples"),
        }
    }
    println!("confusion matrix (rows true, columns predicted):");
    for row in &report.confusion {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:>6}")).collect();
        println!("  {}", cells.join(" "));
    }
    Ok(())
}

fn cmd_gradcheck(args: GradcheckArgs) -> Result<()> {
    let checks = standard_suite(args.seed)?;
    let mut failures = 0usize;
    for check in &checks {
        let status = if check.report.passed() { "PASS" } else { "FAIL" };
        println!(
            "{:<24} worst_rel_err {:.3e}  {}",
            check.op, check.report.max_rel_err, status
        );
        if !check.report.passed() {
            failures += 1;
            for f in &check.report.failures {
                println!(
                    "    {} [{}]: analytic {:.6e} fd {:.6e} rel {:.3e}",
                    f.param, f.coord, f.analytic, f.fd, f.rel_err
                );
            }
        }
    }
    if failures > 0 {
        bail!("{failures} of {} gradient checks failed", checks.len());
    }
    println!("all {} gradient checks passed", checks.len());
    Ok(())
}

fn cmd_reproduce_tables(args: TablesArgs) -> Result<()> {
    if args.classes != 6 && args.classes != 10 {
        bail!("published tables exist for 6 or 10 classes, not {}", args.classes);
    }
    let mut rows = Vec::new();
    for name in CANONICAL_SCHEME_NAMES {
        let table = canonical_scheme_table(name)?;
        let baseline = table.layer2.family == GroupFamily::None;
        let spec = NetworkSpec::new(table, args.classes, (32, 32), true)?;
        let computed = count_parameters(&spec)?.total;
        let published = reference_total(name, args.classes)
            .and_then(|row| row.total_for(args.classes))
            .context("canonical scheme must have a reference row")?;
        let flag = if computed == published {
            "MATCH"
        } else if baseline {
            // The reference baseline figure carries a fixed +4,800
            // offset no single counting rule reproduces alongside the
            // grouped rows; the formula value is authoritative here.
            "DOCUMENTED-DELTA"
        } else {
            "MISMATCH"
        };
        rows.push((name, computed, published, flag));
    }
    match args.format {
        Format::Csv => {
            println!("scheme,computed,published,flag");
            for (name, computed, published, flag) in rows {
                println!("{name},{computed},{published},{flag}");
            }
        }
        Format::Text => {
            println!("classes: {}", args.classes);
            println!("{:<16} {:>12} {:>12}  {}", "scheme", "computed", "published", "flag");
            for (name, computed, published, flag) in rows {
                println!(
                    "{:<16} {:>12} {:>12}  {}",
                    name,
                    thousands(computed),
                    thousands(published),
                    flag
                );
            }
        }
    }
    Ok(())
}
