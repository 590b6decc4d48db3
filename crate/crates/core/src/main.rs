use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use esv::bench::{export_report, run_convergence, BenchScenario, ScenarioKind};
use esv::deeplift::{compare_rules, MicroDag};
use esv::estimators::{
    exact_shapley, kernel_shap_solve, lime_baseline_solve, lime_default_width,
    permutation_estimate, sample_coalitions, Regularization,
};
use esv::masking::Table;
use esv::viz::{
    order_by_similarity, render_force_plot, render_stack_plot, ForcePlotSpec, StackPlotSpec,
    DEFAULT_FORCE_HEIGHT, DEFAULT_FORCE_WIDTH, DEFAULT_STACK_HEIGHT, DEFAULT_STACK_WIDTH,
};
use esv::{load_model, BackgroundSet, Error, Explanation, FeatureGrouping, FeatureVector, Result, SetFunctionCache};

const DEFAULT_ORDERINGS: usize = 100;
const DEFAULT_COALITIONS: usize = 2048;

#[derive(Parser)]
#[command(name = "esv", version, about = "Expectation Shapley value explanations")]
struct Cli {
    /// Worker threads (default: available cores).
    #[arg(long, global = true, env = "ESV_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Explain one row of a data file.
    Explain(ExplainArgs),
    /// Render an explanation as a force plot.
    PlotForce(PlotForceArgs),
    /// Render several explanations as a similarity-ordered stack.
    PlotStack(PlotStackArgs),
    /// Compare reference-based attributions with exact values on a small dag.
    CompareDeeplift(CompareArgs),
    /// Run the estimator convergence benchmark.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Exact,
    Perm,
    Kernel,
    Lime,
}

#[derive(Args)]
struct ExplainArgs {
    #[arg(long)]
    model: PathBuf,
    /// CSV with a header row; the explained instance is selected by `--instance`.
    #[arg(long)]
    data: PathBuf,
    /// Background CSV (default: every row of `--data`).
    #[arg(long)]
    background: Option<PathBuf>,
    /// JSON `{"groups": [[...], ...]}` partitioning the features.
    #[arg(long)]
    grouping: Option<PathBuf>,
    /// Zero-based row of `--data` to explain.
    #[arg(long, default_value_t = 0)]
    instance: usize,
    #[arg(long, value_enum, default_value = "exact")]
    estimator: EstimatorArg,
    /// Orderings for `perm`, coalitions for `kernel` and `lime`.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `off`, `auto`, or a fixed penalty.
    #[arg(long, default_value = "off")]
    lasso: String,
    #[arg(long)]
    kernel_width: Option<f64>,
    #[arg(long, default_value = "explanation.json")]
    out: PathBuf,
}

#[derive(Args)]
struct PlotForceArgs {
    explanation: PathBuf,
    #[arg(long, default_value_t = DEFAULT_FORCE_WIDTH)]
    width: f64,
    #[arg(long, default_value_t = DEFAULT_FORCE_HEIGHT)]
    height: f64,
    #[arg(long, default_value = "force.svg")]
    out: PathBuf,
}

#[derive(Args)]
struct PlotStackArgs {
    #[arg(required = true)]
    explanations: Vec<PathBuf>,
    /// Keep the input order instead of ordering by similarity.
    #[arg(long)]
    no_reorder: bool,
    #[arg(long, default_value_t = DEFAULT_STACK_WIDTH)]
    width: f64,
    #[arg(long, default_value_t = DEFAULT_STACK_HEIGHT)]
    height: f64,
    #[arg(long, default_value = "stack.svg")]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    /// Dag JSON file.
    #[arg(long)]
    model: PathBuf,
    /// CSV holding the input point.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0)]
    instance: usize,
    /// Comma-separated reference input (default: all zeros).
    #[arg(long)]
    reference: Option<String>,
    #[arg(long, default_value = "comparison.json")]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// `dense10`, `sparse3of100`, or a scenario JSON file.
    #[arg(long)]
    scenario: String,
    /// Fewer budgets and replicates.
    #[arg(long)]
    fast: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, default_value = "bench-report")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 3 })
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::InputDomain("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InputDomain(format!("cannot configure threads: {e}")))?;
    }
    match cli.command {
        Command::Explain(args) => explain(args),
        Command::PlotForce(args) => plot_force(args),
        Command::PlotStack(args) => plot_stack(args),
        Command::CompareDeeplift(args) => compare(args),
        Command::Bench(args) => bench(args),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| with_path(path, e))
}

fn read_table(path: &Path) -> Result<Table> {
    let file = File::open(path).map_err(|e| with_path(path, e))?;
    Table::read_csv(file)
}

fn with_path(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| with_path(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| with_path(path, e))
}

fn select_row(table: &Table, index: usize, path: &Path) -> Result<FeatureVector> {
    table.rows.get(index).cloned().ok_or_else(|| {
        Error::InputDomain(format!(
            "--instance {index} is out of range: {} has {} rows",
            path.display(),
            table.rows.len()
        ))
    })
}

fn parse_lasso(s: &str) -> Result<Regularization> {
    match s {
        "off" => Ok(Regularization::None),
        "auto" => Ok(Regularization::DebiasedLasso(None)),
        v => match v.parse::<f64>() {
            Ok(l) if l >= 0.0 && l.is_finite() => Ok(Regularization::DebiasedLasso(Some(l))),
            _ => Err(Error::InputDomain(format!("--lasso expects off, auto or a non-negative number, got `{v}`"))),
        },
    }
}

fn explain(args: ExplainArgs) -> Result<()> {
    let model = load_model(&read(&args.model)?)?;
    let data = read_table(&args.data)?;
    let x = select_row(&data, args.instance, &args.data)?;
    let background = match &args.background {
        Some(path) => BackgroundSet::new(read_table(path)?.rows)?,
        None => BackgroundSet::new(data.rows.clone())?,
    };
    let grouping = match &args.grouping {
        Some(path) => FeatureGrouping::from_json(&read(path)?, x.len())?,
        None => FeatureGrouping::singletons(x.len()),
    };
    let names = grouping.names(&data.names);
    let regularization = parse_lasso(&args.lasso)?;
    if args.kernel_width.is_some() && !matches!(args.estimator, EstimatorArg::Lime) {
        return Err(Error::InputDomain("--kernel-width only applies to --estimator lime".into()));
    }
    let cache = SetFunctionCache::new(&model, x, background, grouping)?;
    let m = cache.n_players();
    let explanation = match args.estimator {
        EstimatorArg::Exact => exact_shapley(&cache)?,
        EstimatorArg::Perm => permutation_estimate(&cache, args.samples.unwrap_or(DEFAULT_ORDERINGS), args.seed)?,
        EstimatorArg::Kernel => {
            let sample = sample_coalitions(m, args.samples.unwrap_or(DEFAULT_COALITIONS), args.seed)?;
            kernel_shap_solve(&cache, &sample, regularization)?
        }
        EstimatorArg::Lime => {
            let sample = sample_coalitions(m, args.samples.unwrap_or(DEFAULT_COALITIONS), args.seed)?;
            lime_baseline_solve(&cache, &sample, args.kernel_width.unwrap_or_else(|| lime_default_width(m)))?
        }
    };
    let explanation = explanation.with_feature_names(names);
    write(&args.out, &(explanation.to_json() + "\n"))?;
    print_explanation(&explanation);
    Ok(())
}

fn print_explanation(e: &Explanation) {
    let width = e.feature_names.iter().map(String::len).max().unwrap_or(0).max(7);
    println!("{:<width$}  {:>14}", "base", format!("{:.6}", e.base_value));
    for (name, phi) in e.feature_names.iter().zip(&e.phi) {
        println!("{name:<width$}  {phi:>14.6}");
    }
    println!("{:<width$}  {:>14}", "output", format!("{:.6}", e.output()));
    println!("estimator {}, {} evaluations, seed {}", e.estimator, e.budget, e.seed);
}

fn plot_force(args: PlotForceArgs) -> Result<()> {
    let e = Explanation::from_json(&read(&args.explanation)?)?;
    let spec = ForcePlotSpec::fit(e, args.width, args.height)?;
    write(&args.out, &render_force_plot(&spec)?)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn plot_stack(args: PlotStackArgs) -> Result<()> {
    let explanations = args
        .explanations
        .iter()
        .map(|p| Explanation::from_json(&read(p)?))
        .collect::<Result<Vec<_>>>()?;
    let order = if args.no_reorder {
        (0..explanations.len()).collect()
    } else {
        order_by_similarity(&explanations)?
    };
    let spec = StackPlotSpec::fit(explanations, order, args.width, args.height)?;
    write(&args.out, &render_stack_plot(&spec)?)?;
    println!("wrote {} ({} columns)", args.out.display(), spec.order.len());
    Ok(())
}

fn compare(args: CompareArgs) -> Result<()> {
    let dag = MicroDag::from_json(&read(&args.model)?)?;
    let data = read_table(&args.data)?;
    let x = select_row(&data, args.instance, &args.data)?;
    let reference = match &args.reference {
        Some(s) => FeatureVector::new(
            s.split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::InputDomain(format!("--reference value `{v}` is not a number")))
                })
                .collect::<Result<Vec<f64>>>()?,
        )
        .map_err(|e| Error::InputDomain(format!("--reference: {e}")))?,
        None => {
            println!("no --reference given: using all zeros (the relevance-propagation setting)");
            FeatureVector::zeros(dag.n_inputs())
        }
    };
    let report = compare_rules(&dag, &x, &reference)?;
    write(&args.out, &(report.to_json() + "\n"))?;
    print!("{}", report.table());
    if report.zero_reference {
        println!("reference is all zeros: relevance-propagation setting");
    }
    Ok(())
}

fn bench(args: BenchArgs) -> Result<()> {
    let scenario = match args.scenario.parse::<ScenarioKind>() {
        Ok(kind) => BenchScenario::builtin(kind, args.seed, args.fast)?,
        Err(_) => {
            let path = Path::new(&args.scenario);
            if !path.is_file() {
                return Err(Error::InputDomain(format!(
                    "unknown scenario `{}` (expected dense10, sparse3of100, or a scenario file)",
                    args.scenario
                )));
            }
            let base = path.parent().unwrap_or(Path::new("."));
            BenchScenario::from_json(&read(path)?, base, args.fast)?
        }
    };
    let report = run_convergence(&scenario)?;
    let written = export_report(&report, &args.out)?;
    println!(
        "{}: {} replicates, budgets {:?}, tracked features {:?}",
        report.scenario, report.replicates, report.budgets, report.tracked
    );
    println!("{:<13} {:>7} {:>6} {:>12} {:>12} {:>12} {:>12}", "estimator", "feature", "budget", "mean", "p10", "p90", "exact");
    for c in &report.cells {
        println!(
            "{:<13} {:>7} {:>6} {:>12.6} {:>12.6} {:>12.6} {:>12.6}",
            c.estimator.name(),
            c.feature,
            c.budget,
            c.mean,
            c.p10,
            c.p90,
            c.truth
        );
    }
    for s in &report.skipped {
        println!("skipped {} at budget {}: {}", s.estimator, s.budget, s.reason);
    }
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(())
}
