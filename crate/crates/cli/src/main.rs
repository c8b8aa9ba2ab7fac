use std::collections::HashSet;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use costfuse::costmat::{
    build_cost_matrix, load_cost_matrix, save_cost_matrix, CostMatrixSpec, DEFAULT_SCALE_MAX, DEFAULT_SCALE_MIN,
};
use costfuse::dataio::{load_manifest, load_pool, write_fused, write_pool, write_report, LoadOptions, ReportFormat};
use costfuse::harness::{
    build_engine, per_class_report, run_subset_experiment, ExperimentConfig, MethodSpec, NamedCost, DEFAULT_N_LIST,
    DEFAULT_REPETITIONS,
};
use costfuse::synth::{generate_pool, ConfusionBias, SyntheticPoolSpec};
use costfuse::types::{ISIC2019_CLASSES, ISIC2019_SEVERITY};
use costfuse::weights::DEFAULT_ALPHA;
use costfuse::{ClassSchema, FusionMethod, Pool};

#[derive(Parser)]
#[command(
    name = "costfuse",
    version,
    about = "Cost-sensitive active fusion of classifier posteriors"
)]
struct Cli {
    /// Worker threads (default: one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cost matrix utilities.
    Costmat {
        #[command(subcommand)]
        command: CostmatCommand,
    },
    /// Fuse the test split of a pool and report on it.
    Fuse(FuseArgs),
    /// Random-subset experiment over a pool.
    Experiment(ExperimentArgs),
    /// Generate a synthetic classifier pool.
    Synth(SynthArgs),
}

#[derive(Subcommand)]
enum CostmatCommand {
    /// Build a cost matrix from a severity ordering.
    Build(CostmatBuildArgs),
}

#[derive(Args)]
struct SchemaArgs {
    /// Class names in matrix order.
    #[arg(long, value_delimiter = ',', default_values_t = ISIC2019_CLASSES.map(String::from))]
    classes: Vec<String>,
    /// Class names from most to least severe.
    #[arg(long, value_delimiter = ',', default_values_t = ISIC2019_SEVERITY.map(String::from))]
    severity: Vec<String>,
}

impl SchemaArgs {
    fn schema(&self) -> Result<ClassSchema> {
        Ok(ClassSchema::from_severity_order(&self.classes, &self.severity)?)
    }
}

#[derive(Args)]
struct CostmatBuildArgs {
    #[command(flatten)]
    schema: SchemaArgs,
    #[arg(long)]
    out: PathBuf,
    /// Reverse the severity order before building.
    #[arg(long)]
    reverse: bool,
    #[arg(long, default_value_t = DEFAULT_SCALE_MIN)]
    lo: f64,
    #[arg(long, default_value_t = DEFAULT_SCALE_MAX)]
    hi: f64,
    /// Keep scaled misclassification costs fractional.
    #[arg(long)]
    no_round: bool,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Rescale prediction rows that do not sum to one.
    #[arg(long)]
    renormalize: bool,
}

impl IngestArgs {
    fn load(&self) -> Result<Pool> {
        let manifest = load_manifest(&self.manifest)?;
        let opts = LoadOptions {
            renormalize: self.renormalize,
            ..LoadOptions::default()
        };
        Ok(load_pool(&manifest, opts)?)
    }
}

#[derive(Args)]
struct FuseArgs {
    #[command(flatten)]
    input: IngestArgs,
    #[arg(long)]
    method: FusionMethod,
    /// Cost matrix CSV; required for cs-af, not allowed for af.
    #[arg(long)]
    cost_matrix: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "json")]
    format: ReportFormat,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    input: IngestArgs,
    #[arg(long, value_delimiter = ',', default_values_t = ["max-voting", "average", "af", "cs-af"].map(String::from))]
    methods: Vec<String>,
    /// Subset sizes (default: 8, 16, ..., 96, limited to the pool size).
    #[arg(long = "N", value_delimiter = ',')]
    n_list: Option<Vec<usize>>,
    #[arg(long, default_value_t = DEFAULT_REPETITIONS)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Cost matrix CSVs, named by file stem. cs-af runs once per matrix.
    #[arg(long, value_delimiter = ',')]
    cost_matrix: Vec<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 96)]
    k: usize,
    #[command(flatten)]
    schema: SchemaArgs,
    #[arg(long, default_value_t = 2000)]
    n_val: usize,
    #[arg(long, default_value_t = 4000)]
    n_test: usize,
    #[arg(long, default_value_t = 0.55)]
    acc_lo: f64,
    #[arg(long, default_value_t = 0.85)]
    acc_hi: f64,
    #[arg(long, default_value_t = 4.0)]
    sharp_correct: f64,
    #[arg(long, default_value_t = 1.5)]
    sharp_wrong: f64,
    /// Extra confusion, `CLASSIFIERS:FROM:TO:PROB` with CLASSIFIERS an index
    /// or an inclusive range `a-b`. Repeatable.
    #[arg(long)]
    bias: Vec<String>,
    #[arg(long)]
    out_dir: PathBuf,
}

fn cmd_costmat_build(args: &CostmatBuildArgs) -> Result<()> {
    let mut schema = args.schema.schema()?;
    if args.reverse {
        schema = schema.reversed();
    }
    let spec = CostMatrixSpec {
        offdiag_scale_min: args.lo,
        offdiag_scale_max: args.hi,
        round_offdiag: !args.no_round,
        ..CostMatrixSpec::new(schema.clone())
    };
    let cost = build_cost_matrix(&spec)?;
    save_cost_matrix(&args.out, &schema, &cost)?;
    Ok(())
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn cmd_fuse(args: &FuseArgs) -> Result<()> {
    match (args.method, &args.cost_matrix) {
        (FusionMethod::CsAf, None) => bail!("--method cs-af requires --cost-matrix"),
        (FusionMethod::Af, Some(_)) => bail!("--method af does not take --cost-matrix (it uses uniform costs)"),
        _ => {}
    }
    let pool = args.input.load()?;
    let costs = match &args.cost_matrix {
        Some(path) => vec![NamedCost::new(cost_name(path)?, load_cost_matrix(path, &pool.schema)?)],
        None => Vec::new(),
    };
    let spec = match args.method {
        FusionMethod::MaxVoting => MethodSpec::MaxVoting,
        FusionMethod::Average => MethodSpec::Average,
        FusionMethod::Af => MethodSpec::Af,
        FusionMethod::CsAf => MethodSpec::CsAf {
            cost: costs[0].name.clone(),
        },
    };
    let engine = build_engine(&pool, &spec, &costs, args.alpha)?;
    let decisions = engine.predict_batch(&pool.test)?;

    create_dir(&args.out)?;
    let pred_path = args.out.join("predictions.csv");
    let f = File::create(&pred_path).with_context(|| format!("creating {}", pred_path.display()))?;
    write_fused(BufWriter::new(f), &pool.schema, pool.test.sample_ids(), &decisions)?;

    if pool.test.labels().is_some() {
        let report = per_class_report(&engine, &pool.test, &costs)?;
        let name = match args.format {
            ReportFormat::Json => "report.json",
            ReportFormat::Csv => "report.csv",
        };
        write_report(&report, &args.out.join(name), args.format)?;
    } else {
        log::warn!("test split has no labels; writing predictions only");
        if let Some(audit) = engine.objective_report() {
            let path = args.out.join("objective_weights.json");
            std::fs::write(&path, serde_json_pretty(audit)?).with_context(|| format!("writing {}", path.display()))?;
        }
    }
    Ok(())
}

fn serde_json_pretty<T: serde::Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

fn cost_name(path: &Path) -> Result<String> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_string)
        .ok_or_else(|| anyhow!("cannot name cost matrix {}", path.display()))
}

fn cmd_experiment(args: &ExperimentArgs) -> Result<()> {
    let pool = args.input.load()?;
    let mut costs = Vec::new();
    let mut names = HashSet::new();
    for path in &args.cost_matrix {
        let name = cost_name(path)?;
        if !names.insert(name.clone()) {
            bail!("two cost matrices are named {name:?}");
        }
        costs.push(NamedCost::new(name, load_cost_matrix(path, &pool.schema)?));
    }
    let mut methods = Vec::new();
    for m in &args.methods {
        match m.parse::<FusionMethod>()? {
            FusionMethod::MaxVoting => methods.push(MethodSpec::MaxVoting),
            FusionMethod::Average => methods.push(MethodSpec::Average),
            FusionMethod::Af => methods.push(MethodSpec::Af),
            FusionMethod::CsAf => {
                if costs.is_empty() {
                    bail!("cs-af needs at least one --cost-matrix");
                }
                methods.extend(costs.iter().map(|c| MethodSpec::CsAf { cost: c.name.clone() }));
            }
        }
    }
    let n_list = match &args.n_list {
        Some(list) => list.clone(),
        None => {
            let list: Vec<usize> = DEFAULT_N_LIST.iter().copied().filter(|&n| n <= pool.k()).collect();
            if list.len() < DEFAULT_N_LIST.len() {
                log::warn!("pool has {} classifiers; using subset sizes {list:?}", pool.k());
            }
            if list.is_empty() {
                bail!(
                    "pool has {} classifiers, fewer than the smallest default subset size; pass --N",
                    pool.k()
                );
            }
            list
        }
    };
    let config = ExperimentConfig {
        methods,
        n_list,
        repetitions: args.reps,
        seed: args.seed,
        alpha: args.alpha,
    };
    let report = run_subset_experiment(&pool, &config, &costs)?;
    create_dir(&args.out_dir)?;
    write_report(&report, &args.out_dir.join("experiment.json"), ReportFormat::Json)?;
    write_report(&report, &args.out_dir.join("curves.csv"), ReportFormat::Csv)?;
    for v in report.accuracy_trend_violations(0.0) {
        log::info!(
            "{}: mean accuracy drops by {:.4} from N={} to N={}",
            v.method,
            v.drop,
            v.from_n,
            v.to_n
        );
    }
    Ok(())
}

fn parse_bias(text: &str, schema: &ClassSchema) -> Result<Vec<ConfusionBias>> {
    let parts: Vec<&str> = text.split(':').collect();
    let [who, from, to, prob] = parts[..] else {
        bail!("bias {text:?} is not CLASSIFIERS:FROM:TO:PROB");
    };
    let class = |name: &str| {
        schema
            .index_of(name)
            .ok_or_else(|| anyhow!("bias {text:?}: unknown class {name:?}"))
    };
    let (from, to) = (class(from)?, class(to)?);
    let probability: f64 = prob
        .parse()
        .with_context(|| format!("bias {text:?}: bad probability"))?;
    let (lo, hi) = match who.split_once('-') {
        Some((a, b)) => (a.parse::<usize>()?, b.parse::<usize>()?),
        None => {
            let i = who.parse::<usize>()?;
            (i, i)
        }
    };
    if lo > hi {
        bail!("bias {text:?}: empty classifier range");
    }
    Ok((lo..=hi)
        .map(|classifier| ConfusionBias {
            classifier,
            from,
            to,
            probability,
        })
        .collect())
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let schema = args.schema.schema()?;
    let mut confusion_bias = Vec::new();
    for b in &args.bias {
        confusion_bias.extend(parse_bias(b, &schema)?);
    }
    let spec = SyntheticPoolSpec {
        accuracy_range: (args.acc_lo, args.acc_hi),
        sharpness_correct: args.sharp_correct,
        sharpness_wrong: args.sharp_wrong,
        confusion_bias,
        ..SyntheticPoolSpec::new(args.seed, args.k, schema, args.n_val, args.n_test)
    };
    let pool = generate_pool(&spec)?;
    create_dir(&args.out_dir)?;
    let pool = Pool::new(pool.schema, pool.val, pool.test)?;
    write_pool(&args.out_dir, &pool)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match &cli.command {
        Command::Costmat {
            command: CostmatCommand::Build(a),
        } => cmd_costmat_build(a),
        Command::Fuse(a) => cmd_fuse(a),
        Command::Experiment(a) => cmd_experiment(a),
        Command::Synth(a) => cmd_synth(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
