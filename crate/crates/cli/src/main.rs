use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use tempfile::NamedTempFile;

use treatkit::design::{design_treatments_c, design_treatments_n, design_treatments_z, Controls};
use treatkit::frame::{format_float, read_csv, write_csv_to, Frame, Schema};
use treatkit::plan_serde::{load_plan, plan_to_string};
use treatkit::prepare::{prepare, PrepareOptions};
use treatkit::splits::{load_split_plan, SplitMethod, SplitPlan};
use treatkit::{mk_cross_frame_c, mk_cross_frame_n, TreatmentPlan};

#[derive(Parser)]
#[command(
    name = "treatkit",
    version,
    about = "Design and apply variable treatment plans"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Design a treatment plan and print its scoreFrame
    Design(DesignArgs),
    /// Apply a saved plan to new data
    Prepare(PrepareArgs),
    /// Build a cross frame and the all-rows plan
    Crossframe(CrossframeArgs),
    /// Print a saved plan's scoreFrame
    Inspect(InspectArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TaskArg {
    Numeric,
    Binomial,
    None,
}

#[derive(Args)]
struct DataArgs {
    /// Input CSV with a header row
    #[arg(long)]
    data: PathBuf,
    /// Input variables, comma separated
    #[arg(long, value_delimiter = ',', required = true)]
    vars: Vec<String>,
    /// Outcome column
    #[arg(long)]
    outcome: Option<String>,
    /// Outcome value treated as the positive class (binomial task)
    #[arg(long)]
    target: Option<String>,
    /// JSON file declaring column kinds and missing tokens
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Seed for all randomized steps
    #[arg(long, env = "TREATKIT_SEED")]
    seed: Option<u64>,
}

#[derive(Args)]
struct ControlArgs {
    #[arg(long, default_value_t = 0.02)]
    min_fraction: f64,
    #[arg(long, default_value_t = 0)]
    rare_count: usize,
    #[arg(long)]
    rare_sig: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    sm_factor: f64,
}

#[derive(Args)]
struct DesignArgs {
    #[arg(long, value_enum)]
    task: TaskArg,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    controls: ControlArgs,
    /// Folds for cross-validated significance
    #[arg(long, default_value_t = 3)]
    ncross: usize,
    /// Design-phase worker threads
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Plan file to write
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PrepareArgs {
    #[arg(long)]
    plan: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Keep variables with sig strictly below this value
    #[arg(long)]
    prune_sig: Option<f64>,
    /// Keep only these derived variables, comma separated
    #[arg(long, value_delimiter = ',')]
    vars: Option<Vec<String>>,
    /// Rescale derived variables into outcome units
    #[arg(long)]
    scale: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CrossframeArgs {
    #[arg(long, value_enum)]
    task: TaskArg,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    controls: ControlArgs,
    #[arg(long, default_value_t = 3)]
    ncross: usize,
    /// JSON list of {"train": [...], "app": [...]} folds
    #[arg(long)]
    split_plan: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long)]
    out_frame: PathBuf,
    #[arg(long)]
    out_plan: PathBuf,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    plan: PathBuf,
}

fn usage_error(msg: &str) -> ! {
    Cli::command()
        .error(clap::error::ErrorKind::MissingRequiredArgument, msg)
        .exit()
}

impl ControlArgs {
    fn controls(&self, ncross: usize) -> Controls {
        Controls {
            min_fraction: self.min_fraction,
            rare_count: self.rare_count,
            rare_sig: self.rare_sig,
            sm_factor: self.sm_factor,
            ncross,
        }
    }
}

impl DataArgs {
    fn seed(&self) -> u64 {
        self.seed.unwrap_or_else(|| {
            let s = rand::random::<u64>();
            eprintln!("seed: {s}");
            s
        })
    }

    fn read(&self) -> Result<Frame> {
        let schema = match &self.schema {
            Some(p) => Some(Schema::from_json_file(p)?),
            None => None,
        };
        read_csv(&self.data, schema.as_ref())
            .with_context(|| format!("reading {}", self.data.display()))
    }

    /// Outcome and target, checked against the task.
    fn outcome_for(&self, task: TaskArg) -> (Option<&str>, Option<&str>) {
        let outcome = self.outcome.as_deref();
        let target = self.target.as_deref();
        match task {
            TaskArg::None => (None, None),
            TaskArg::Numeric | TaskArg::Binomial if outcome.is_none() => {
                usage_error("--outcome is required for numeric and binomial tasks")
            }
            TaskArg::Binomial if target.is_none() => {
                usage_error("--target is required for the binomial task")
            }
            _ => (outcome, target),
        }
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    if workers == 0 {
        bail!("--workers must be at least 1");
    }
    Ok(rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()?)
}

/// A file written in full to a temporary sibling, then moved into place.
struct Pending {
    tmp: NamedTempFile,
    dest: PathBuf,
}

impl Pending {
    fn new(dest: &Path, write: impl FnOnce(&mut NamedTempFile) -> Result<()>) -> Result<Self> {
        let dir = match dest.parent() {
            Some(d) if !d.as_os_str().is_empty() => d,
            _ => Path::new("."),
        };
        let mut tmp = NamedTempFile::new_in(dir)
            .with_context(|| format!("creating file in {}", dir.display()))?;
        write(&mut tmp)?;
        tmp.flush()?;
        tmp.as_file().sync_all()?;
        Ok(Pending {
            tmp,
            dest: dest.to_path_buf(),
        })
    }

    fn commit(self) -> Result<()> {
        self.tmp
            .persist(&self.dest)
            .with_context(|| format!("writing {}", self.dest.display()))?;
        Ok(())
    }
}

fn plan_file(dest: &Path, plan: &TreatmentPlan) -> Result<Pending> {
    let text = plan_to_string(plan)?;
    Pending::new(dest, |f| Ok(f.write_all(text.as_bytes())?))
}

fn csv_file(dest: &Path, frame: &Frame) -> Result<Pending> {
    Pending::new(dest, |f| Ok(write_csv_to(frame, f)?))
}

fn print_score_frame(plan: &TreatmentPlan) -> Result<()> {
    let stdout = std::io::stdout();
    let mut w = csv::Writer::from_writer(stdout.lock());
    w.write_record(["varName", "sig", "extraModelDegrees", "origName", "code"])?;
    for row in &plan.score_frame {
        w.write_record([
            row.var_name.as_str(),
            &format_float(row.sig),
            &row.extra_model_degrees.to_string(),
            &row.orig_name,
            row.code.label(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_design(args: &DesignArgs) -> Result<()> {
    let (outcome, target) = args.data.outcome_for(args.task);
    let controls = args.controls.controls(args.ncross);
    let frame = args.data.read()?;
    let plan = pool(args.workers)?.install(|| -> Result<TreatmentPlan> {
        let vars = &args.data.vars;
        Ok(match (args.task, outcome, target) {
            (TaskArg::Numeric, Some(o), _) => {
                design_treatments_n(&frame, vars, o, &controls, args.data.seed())?
            }
            (TaskArg::Binomial, Some(o), Some(t)) => {
                design_treatments_c(&frame, vars, o, t, &controls, args.data.seed())?
            }
            _ => design_treatments_z(&frame, vars, &controls)?,
        })
    })?;
    plan_file(&args.out, &plan)?.commit()?;
    print_score_frame(&plan)
}

fn cmd_prepare(args: &PrepareArgs) -> Result<()> {
    let plan = load_plan(&args.plan).with_context(|| format!("loading {}", args.plan.display()))?;
    let mut schema = Schema::default();
    for input in &plan.inputs {
        schema = schema.with_kind(input.name.clone(), input.kind);
    }
    let frame = read_csv(&args.data, Some(&schema))
        .with_context(|| format!("reading {}", args.data.display()))?;
    let opts = PrepareOptions {
        prune_sig: args.prune_sig,
        var_restriction: args.vars.clone(),
        scale: args.scale,
    };
    let treated = prepare(&plan, &frame, &opts)?;
    csv_file(&args.out, &treated)?.commit()
}

fn cmd_crossframe(args: &CrossframeArgs) -> Result<()> {
    if args.task == TaskArg::None {
        usage_error("crossframe needs a numeric or binomial task");
    }
    let (outcome, target) = args.data.outcome_for(args.task);
    let outcome = outcome.expect("checked by outcome_for");
    let controls = args.controls.controls(args.ncross);
    let frame = args.data.read()?;
    let split: Option<SplitPlan> = match &args.split_plan {
        Some(p) => Some(
            load_split_plan(p, frame.nrows())
                .with_context(|| format!("loading {}", p.display()))?,
        ),
        None => None,
    };
    let user_split = split.is_some();
    let seed = args.data.seed();
    let vars = &args.data.vars;
    let cfe = pool(args.workers)?.install(|| match target {
        Some(t) if args.task == TaskArg::Binomial => {
            mk_cross_frame_c(&frame, vars, outcome, t, &controls, split, seed)
        }
        _ => mk_cross_frame_n(&frame, vars, outcome, &controls, split, seed),
    })?;
    if !user_split && cfe.method == SplitMethod::OneWay {
        eprintln!(
            "note: {} rows are too few for {} folds; using one-way holdout",
            frame.nrows(),
            args.ncross
        );
    }

    let frame_file = csv_file(&args.out_frame, &cfe.cross_frame)?;
    let plan_out = plan_file(&args.out_plan, &cfe.treatments)?;
    frame_file.commit()?;
    plan_out.commit()?;

    println!("method: {}", cfe.method.label());
    for (i, fold) in cfe.eval_sets.folds().iter().enumerate() {
        println!(
            "fold {}: train {} rows, app {} rows",
            i + 1,
            fold.train.len(),
            fold.app.len()
        );
    }
    Ok(())
}

fn cmd_inspect(args: &InspectArgs) -> Result<()> {
    let plan = load_plan(&args.plan).with_context(|| format!("loading {}", args.plan.display()))?;
    eprintln!(
        "task: {}; outcome: {}; {} derived variables",
        plan.task.label(),
        plan.outcome.as_deref().unwrap_or("none"),
        plan.specs.len()
    );
    print_score_frame(&plan)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Design(a) => cmd_design(a),
        Command::Prepare(a) => cmd_prepare(a),
        Command::Crossframe(a) => cmd_crossframe(a),
        Command::Inspect(a) => cmd_inspect(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
