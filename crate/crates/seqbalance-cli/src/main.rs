//! `seqbalance` — batch frontend for sequential experiment balancing.
//!
//! Subcommands: `gen` (emit arrival-sequence CSVs), `assign` (run one design
//! over a sequence), `discrepancy` (score two groups), `rates` (Monte Carlo
//! rate studies with a log-log fit), `ate` (average-treatment-effect study),
//! `verify` (golden-value self checks).
//!
//! Exit codes: 0 success, 1 verification or runtime failure, 2 configuration
//! error. Parameters may come from a flat-key JSON file via `--config`;
//! command-line flags override file values, and unknown keys are rejected.

mod config;
mod report;
mod verify;

use std::fs;
use std::io::BufReader;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use seqbalance::ate::{
    ate_study_with_samples_on, generate_population, sample_size_sweep, DgpConfig,
};
use seqbalance::design::{DesignSpec, PartitionSpec};
use seqbalance::harness::{fit_report, run_mc};
use seqbalance::instance::{CellRule, InstanceSpec};
use seqbalance::matching::discrepancy;
use seqbalance::space::read_sequence_csv;

use config::{AppError, Resolver};
use report::{say, OutputFormat, ReportSink};

#[derive(Parser)]
#[command(
    name = "seqbalance",
    version,
    about = "Sequential experiment balancing studies"
)]
struct Cli {
    /// Flat-key JSON config file; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// RNG seed (fallback: env SEQBALANCE_SEED, then 0).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (default: stdout).
    #[arg(long, global = true, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Output format for reports.
    #[arg(long, global = true, value_enum)]
    format: Option<OutputFormat>,
    /// Worker threads for replication loops (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Suppress the timestamp line in report headers.
    #[arg(long, global = true)]
    no_timestamp: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an arrival-sequence CSV.
    Gen(GenArgs),
    /// Run one design over a sequence CSV; writes the trace `t,w,cell_key`
    /// and prints the realized discrepancy.
    Assign(AssignArgs),
    /// Score two subject groups (CSV files) with the exact bipartite
    /// matching; prints the discrepancy.
    Discrepancy(DiscrepancyArgs),
    /// Monte Carlo discrepancy study over a horizon grid plus a log-log
    /// rate fit.
    Rates(RatesArgs),
    /// Average-treatment-effect study on a fixed synthetic population.
    Ate(AteArgs),
    /// Run the golden-value verification suite; exits 1 on any mismatch.
    Verify,
}

#[derive(Args, Clone)]
struct InstanceArgs {
    /// Instance family.
    #[arg(long, value_enum)]
    instance: Option<InstanceKind>,
    /// Continuous dimensions for grid/uniform/clustered instances.
    #[arg(long)]
    p: Option<usize>,
    /// Binary dimensions for the discrete-uniform instance.
    #[arg(long)]
    q: Option<usize>,
    /// Cell count K for the alternating instance (default: ceil(sqrt(T))).
    #[arg(long)]
    cells: Option<usize>,
    /// Cluster diameter exponent gamma.
    #[arg(long)]
    gamma: Option<f64>,
    /// Number of cluster centers.
    #[arg(long)]
    centers: Option<usize>,
    /// Seed fixing the cluster centers across replications.
    #[arg(long)]
    centers_seed: Option<u64>,
    /// Shuffle the grid arrival order per replication.
    #[arg(long)]
    shuffle: bool,
}

#[derive(Args, Clone)]
struct DesignArgs {
    /// Experimental design.
    #[arg(long, value_enum)]
    design: Option<DesignKind>,
    /// Partition family for the pigeonhole design.
    #[arg(long, value_enum)]
    partition: Option<PartitionKind>,
    /// Cell-width exponent for uniform1d cells.
    #[arg(long)]
    eta: Option<f64>,
    /// Cell-width exponent for grid/mixed cells (default 1/p).
    #[arg(long)]
    phi: Option<f64>,
    /// Width constant c for grid/mixed/clustered cells.
    #[arg(long)]
    c: Option<f64>,
    /// Cluster-diameter lower-bound exponent for clustered cells.
    #[arg(long)]
    gamma_lb: Option<f64>,
    /// Fixed per-dimension cell count (overrides the T-scaled builders).
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    /// Horizon (number of subjects).
    #[arg(long = "T", visible_alias = "t")]
    t: Option<usize>,
}

#[derive(Args)]
struct AssignArgs {
    /// Arrival-sequence CSV to assign.
    #[arg(long)]
    input: Option<PathBuf>,
    #[command(flatten)]
    design: DesignArgs,
}

#[derive(Args)]
struct DiscrepancyArgs {
    /// CSV of control-group subjects.
    #[arg(long)]
    control: Option<PathBuf>,
    /// CSV of treated-group subjects.
    #[arg(long)]
    treated: Option<PathBuf>,
}

#[derive(Args)]
struct RatesArgs {
    #[command(flatten)]
    design: DesignArgs,
    #[command(flatten)]
    instance: InstanceArgs,
    /// Horizon grid: `a..b` (doubling ladder) or a comma list.
    #[arg(long = "T", visible_alias = "t")]
    t: Option<String>,
    /// Replications per horizon.
    #[arg(long = "R", visible_alias = "r")]
    r: Option<usize>,
}

#[derive(Args)]
struct AteArgs {
    /// Population size.
    #[arg(long = "T", visible_alias = "t")]
    t: Option<usize>,
    /// Number of binary covariates.
    #[arg(long)]
    d: Option<usize>,
    /// Comma-separated per-covariate Bernoulli rates (default 0.5 each).
    #[arg(long)]
    marginals: Option<String>,
    /// Intercept of the linear probability model.
    #[arg(long)]
    intercept: Option<f64>,
    /// How many of the largest coefficients to magnify.
    #[arg(long)]
    boost_top_k: Option<usize>,
    /// Magnification factor.
    #[arg(long)]
    boost_factor: Option<f64>,
    /// Assignment replications per design.
    #[arg(long = "R", visible_alias = "r")]
    r: Option<usize>,
    /// Population seed (defaults to the run seed).
    #[arg(long)]
    population_seed: Option<u64>,
    /// Also run the sample-size sweep for the cell-balancing design.
    #[arg(long)]
    sweep: bool,
    /// Dump per-replication estimates as CSV (design,rep,estimate).
    #[arg(long, value_name = "FILE")]
    samples_out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DesignKind {
    Crd,
    Pigeonhole,
    Single,
    Matchedpair,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PartitionKind {
    Uniform1d,
    Grid,
    Natural,
    Mixed,
    Clustered,
    Single,
    Cells,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum InstanceKind {
    Halfzero,
    Grid,
    Alternating,
    Uniform,
    DiscreteUniform,
    Clustered,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(AppError::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(AppError::Failure(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<(), AppError> {
    let mut resolver = Resolver::load(cli.config.as_deref())?;
    let seed = resolver.seed(cli.seed)?;
    let format = resolver
        .string("format", cli.format.map(|f| f.key().to_string()))?
        .map(|s| OutputFormat::parse(&s))
        .transpose()?
        .unwrap_or(OutputFormat::Csv);
    let out = resolver.path("out", cli.out)?;
    let jobs = resolver.usize("jobs", cli.jobs)?;
    let no_timestamp = cli.no_timestamp || resolver.flag("no_timestamp")?;
    if let Some(jobs) = jobs {
        // Ignore the error if a global pool already exists.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }

    match cli.command {
        Command::Gen(args) => cmd_gen(args, &mut resolver, seed, out, no_timestamp),
        Command::Assign(args) => cmd_assign(args, &mut resolver, seed, out, no_timestamp),
        Command::Discrepancy(args) => cmd_discrepancy(args, &mut resolver),
        Command::Rates(args) => cmd_rates(args, &mut resolver, seed, out, format, no_timestamp),
        Command::Ate(args) => cmd_ate(args, &mut resolver, seed, out, no_timestamp),
        Command::Verify => verify::cmd_verify(),
    }
}

fn resolve_instance(
    args: &InstanceArgs,
    resolver: &mut Resolver,
    seed: u64,
) -> Result<InstanceSpec, AppError> {
    let kind = resolver
        .string("instance", args.instance.map(|k| k.key().to_string()))?
        .ok_or_else(|| AppError::Config("an --instance is required".into()))?;
    let p = resolver.usize("p", args.p)?;
    let q = resolver.usize("q", args.q)?;
    let cells = resolver.usize("cells", args.cells)?;
    let gamma = resolver.f64("gamma", args.gamma)?;
    let centers = resolver.usize("centers", args.centers)?;
    let centers_seed = resolver.u64("centers_seed", args.centers_seed)?;
    let shuffle = args.shuffle || resolver.flag("shuffle")?;
    match kind.as_str() {
        "halfzero" => Ok(InstanceSpec::HalfZeroHalfOne),
        "grid" => Ok(InstanceSpec::Grid {
            p: p.unwrap_or(2),
            shuffle,
        }),
        "alternating" => Ok(InstanceSpec::Alternating {
            cells: match cells {
                Some(k) => CellRule::Fixed(k),
                None => CellRule::SqrtT,
            },
        }),
        "uniform" => Ok(InstanceSpec::Uniform { p: p.unwrap_or(1) }),
        "discrete-uniform" => Ok(InstanceSpec::DiscreteUniform {
            binary_q: q.unwrap_or(4),
        }),
        "clustered" => Ok(InstanceSpec::Clustered {
            p: p.unwrap_or(2),
            centers: centers.unwrap_or(5),
            gamma: gamma.unwrap_or(0.8),
            centers_seed: centers_seed.unwrap_or(seed ^ 0xC1u64),
        }),
        other => Err(AppError::Config(format!("unknown instance `{other}`"))),
    }
}

fn resolve_design(args: &DesignArgs, resolver: &mut Resolver) -> Result<DesignSpec, AppError> {
    let kind = resolver
        .string("design", args.design.map(|k| k.key().to_string()))?
        .ok_or_else(|| AppError::Config("a --design is required".into()))?;
    let partition = resolver.string("partition", args.partition.map(|k| k.key().to_string()))?;
    let eta = resolver.f64("eta", args.eta)?;
    let phi = resolver.f64("phi", args.phi)?;
    let c = resolver.f64("c", args.c)?;
    let gamma_lb = resolver.f64("gamma_lb", args.gamma_lb)?;
    let k = resolver.usize("k", args.k)?;
    match kind.as_str() {
        "crd" => Ok(DesignSpec::CompletelyRandomized),
        "single" => Ok(DesignSpec::SinglePigeonhole),
        "matchedpair" => Ok(DesignSpec::MatchedPair),
        "pigeonhole" => {
            let part = match partition.as_deref() {
                Some("uniform1d") | None => PartitionSpec::Uniform1d {
                    eta: eta.unwrap_or(0.5),
                },
                Some("grid") => PartitionSpec::Grid {
                    phi,
                    c: c.unwrap_or(2.0),
                },
                Some("natural") => PartitionSpec::Natural,
                Some("mixed") => PartitionSpec::Mixed {
                    phi,
                    c: c.unwrap_or(2.0),
                },
                Some("clustered") => PartitionSpec::Clustered {
                    gamma_lb: gamma_lb.ok_or_else(|| {
                        AppError::Config("clustered cells need --gamma-lb".into())
                    })?,
                    c: c.unwrap_or(2.0),
                },
                Some("single") => PartitionSpec::Single,
                Some("cells") => PartitionSpec::UniformCells {
                    k: k.ok_or_else(|| AppError::Config("cells partition needs --k".into()))?,
                },
                Some(other) => {
                    return Err(AppError::Config(format!("unknown partition `{other}`")))
                }
            };
            Ok(DesignSpec::Pigeonhole(part))
        }
        other => Err(AppError::Config(format!("unknown design `{other}`"))),
    }
}

fn cmd_gen(
    args: GenArgs,
    resolver: &mut Resolver,
    seed: u64,
    out: Option<PathBuf>,
    no_timestamp: bool,
) -> Result<(), AppError> {
    let t = resolver
        .usize("t", args.t)?
        .ok_or_else(|| AppError::Config("gen needs a horizon --T".into()))?;
    let instance = resolve_instance(&args.instance, resolver, seed)?;
    resolver.finish()?;

    let seq = instance
        .generate(t, seed)
        .map_err(|e| AppError::Config(format!("cannot generate instance: {e}")))?;
    let mut body = Vec::new();
    seqbalance::space::write_sequence_csv(&seq, &mut body)
        .map_err(|e| AppError::Failure(e.to_string()))?;

    let config = serde_json::json!({
        "command": "gen",
        "instance": instance.label(),
        "t": t,
    });
    let sink = ReportSink {
        out,
        seed,
        config,
        no_timestamp,
    };
    sink.write_csv(std::str::from_utf8(&body).expect("csv is utf8"))
}

fn cmd_assign(
    args: AssignArgs,
    resolver: &mut Resolver,
    seed: u64,
    out: Option<PathBuf>,
    no_timestamp: bool,
) -> Result<(), AppError> {
    let input = resolver
        .path("input", args.input)?
        .ok_or_else(|| AppError::Config("assign needs an --input sequence CSV".into()))?;
    let design = resolve_design(&args.design, resolver)?;
    resolver.finish()?;

    let file = fs::File::open(&input)
        .map_err(|e| AppError::Config(format!("cannot open {}: {e}", input.display())))?;
    let seq = read_sequence_csv(BufReader::new(file), None)
        .map_err(|e| AppError::Config(format!("cannot parse {}: {e}", input.display())))?;
    seq.validate()
        .map_err(|e| AppError::Config(format!("invalid sequence: {e}")))?;

    let trace = design
        .run(&seq, seed)
        .map_err(|e| AppError::Failure(format!("design failed: {e}")))?;
    let cost = seqbalance::harness::eval_discrepancy(&seq, &trace)
        .map_err(|e| AppError::Failure(e.to_string()))?;

    // Cell keys are reported for partition-based designs.
    let partition = match &design {
        DesignSpec::Pigeonhole(spec) => Some(
            spec.build(&seq.space, seq.len())
                .map_err(|e| AppError::Failure(e.to_string()))?,
        ),
        DesignSpec::SinglePigeonhole => Some(
            PartitionSpec::Single
                .build(&seq.space, seq.len())
                .expect("single partition"),
        ),
        _ => None,
    };
    let mut body = String::from("t,w,cell_key\n");
    for (i, (&arm, subject)) in trace.arms().iter().zip(&seq.subjects).enumerate() {
        let key = partition
            .as_ref()
            .map(|p| p.cell_key(subject).to_string())
            .unwrap_or_default();
        body.push_str(&format!("{},{},{}\n", i + 1, arm, key));
    }

    let config = serde_json::json!({
        "command": "assign",
        "design": design.label(),
        "input": input.display().to_string(),
        "t": seq.len(),
        "tau": trace.tau(),
        "discrepancy": cost,
    });
    say(&format!("discrepancy: {}", seqbalance::fmt_sig(cost, 12)));
    say(&format!("tau: {}", trace.tau()));
    let sink = ReportSink {
        out,
        seed,
        config,
        no_timestamp,
    };
    sink.write_csv(&body)
}

fn cmd_discrepancy(args: DiscrepancyArgs, resolver: &mut Resolver) -> Result<(), AppError> {
    let control = resolver
        .path("control", args.control)?
        .ok_or_else(|| AppError::Config("discrepancy needs --control".into()))?;
    let treated = resolver
        .path("treated", args.treated)?
        .ok_or_else(|| AppError::Config("discrepancy needs --treated".into()))?;
    resolver.finish()?;

    let read = |path: &PathBuf| -> Result<Vec<seqbalance::space::Subject>, AppError> {
        let file = fs::File::open(path)
            .map_err(|e| AppError::Config(format!("cannot open {}: {e}", path.display())))?;
        let seq = read_sequence_csv(BufReader::new(file), None)
            .map_err(|e| AppError::Config(format!("cannot parse {}: {e}", path.display())))?;
        Ok(seq.subjects)
    };
    let a = read(&control)?;
    let b = read(&treated)?;
    let m = discrepancy(&a, &b).map_err(|e| AppError::Failure(e.to_string()))?;
    say(&seqbalance::fmt_sig(m.cost, 12));
    Ok(())
}

fn parse_horizons(spec: &str) -> Result<Vec<usize>, AppError> {
    let spec = spec.trim();
    if let Some((a, b)) = spec.split_once("..") {
        let lo: usize = a
            .trim()
            .parse()
            .map_err(|_| AppError::Config(format!("bad horizon `{a}`")))?;
        let hi: usize = b
            .trim()
            .parse()
            .map_err(|_| AppError::Config(format!("bad horizon `{b}`")))?;
        if lo < 2 || hi < lo {
            return Err(AppError::Config(format!("bad horizon range `{spec}`")));
        }
        let mut ts = Vec::new();
        let mut t = lo;
        while t <= hi {
            ts.push(t);
            t *= 2;
        }
        return Ok(ts);
    }
    spec.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| AppError::Config(format!("bad horizon `{s}`")))
        })
        .collect()
}

fn cmd_rates(
    args: RatesArgs,
    resolver: &mut Resolver,
    seed: u64,
    out: Option<PathBuf>,
    format: OutputFormat,
    no_timestamp: bool,
) -> Result<(), AppError> {
    let t_spec = resolver
        .string("t", args.t.clone())?
        .ok_or_else(|| AppError::Config("rates needs --T (range `a..b` or list)".into()))?;
    let horizons = parse_horizons(&t_spec)?;
    let reps = resolver.usize("r", args.r)?.unwrap_or(200);
    let design = resolve_design(&args.design, resolver)?;
    let instance = resolve_instance(&args.instance, resolver, seed)?;
    resolver.finish()?;

    let report = run_mc(&design, &instance, &horizons, reps, seed)
        .map_err(|e| AppError::Failure(e.to_string()))?;
    let fit = fit_report(&report);

    let mut config = serde_json::json!({
        "command": "rates",
        "design": design.label(),
        "instance": instance.label(),
        "t": horizons,
        "r": reps,
    });
    if let Ok(fit) = &fit {
        config["fit"] = serde_json::json!({
            "slope": fit.slope,
            "intercept": fit.intercept,
            "r2": fit.r2,
        });
        say(&format!(
            "fit: slope {} r2 {}",
            seqbalance::fmt_sig(fit.slope, 6),
            seqbalance::fmt_sig(fit.r2, 6)
        ));
    }
    let sink = ReportSink {
        out,
        seed,
        config,
        no_timestamp,
    };
    match format {
        OutputFormat::Csv => sink.write_csv(&report.to_csv()),
        OutputFormat::Json => sink.write_json(serde_json::json!({
            "rows": report.rows,
            "fit": fit.ok(),
        })),
    }
}

fn cmd_ate(
    args: AteArgs,
    resolver: &mut Resolver,
    seed: u64,
    out: Option<PathBuf>,
    no_timestamp: bool,
) -> Result<(), AppError> {
    let t = resolver.usize("t", args.t)?.unwrap_or(10_000);
    let d = resolver.usize("d", args.d)?.unwrap_or(16);
    let reps = resolver.usize("r", args.r)?.unwrap_or(2000);
    let boost_top_k = resolver
        .usize("boost_top_k", args.boost_top_k)?
        .unwrap_or(5);
    let boost_factor = resolver
        .f64("boost_factor", args.boost_factor)?
        .unwrap_or(3.0);
    let intercept = resolver.f64("intercept", args.intercept)?.unwrap_or(0.05);
    let population_seed = resolver
        .u64("population_seed", args.population_seed)?
        .unwrap_or(seed);
    let marginals = match resolver.string("marginals", args.marginals.clone())? {
        Some(spec) => spec
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| AppError::Config(format!("bad marginal `{s}`")))
            })
            .collect::<Result<Vec<f64>, _>>()?,
        None => vec![0.5; d],
    };
    let sweep = args.sweep || resolver.flag("sweep")?;
    let samples_out = resolver.path("samples_out", args.samples_out.clone())?;
    resolver.finish()?;

    let cfg = DgpConfig {
        marginals,
        intercept,
        boost_top_k,
        boost_factor,
        ..DgpConfig::new(t, d, population_seed)
    };
    let designs = vec![
        DesignSpec::CompletelyRandomized,
        DesignSpec::Pigeonhole(PartitionSpec::Natural),
    ];
    let population = generate_population(&cfg).map_err(|e| AppError::Failure(e.to_string()))?;
    let (report, samples) = ate_study_with_samples_on(&population, &designs, reps, seed)
        .map_err(|e| AppError::Failure(e.to_string()))?;
    if let Some(path) = &samples_out {
        let mut csv = String::from("design,rep,estimate\n");
        for (design, vals) in designs.iter().zip(&samples) {
            for (rep, v) in vals.iter().enumerate() {
                csv.push_str(&format!(
                    "{},{},{}\n",
                    design.label(),
                    rep,
                    seqbalance::fmt_sig(*v, 12)
                ));
            }
        }
        std::fs::write(path, csv)
            .map_err(|e| AppError::Failure(format!("cannot write {}: {e}", path.display())))?;
    }

    say(&format!(
        "true ATE: {}",
        seqbalance::fmt_sig(report.true_ate, 6)
    ));
    for s in &report.per_design {
        say(&format!(
            "{}: mean {} var {}",
            s.design,
            seqbalance::fmt_sig(s.mean, 6),
            seqbalance::fmt_sig(s.var, 6)
        ));
    }
    if let Some(vr) = report.variance_reduction {
        say(&format!(
            "variance reduction: {}",
            seqbalance::fmt_sig(vr, 6)
        ));
    }

    let sweep_report = if sweep {
        let fractions: Vec<f64> = (0..=10).map(|i| 0.8 + 0.02 * i as f64).collect();
        Some(
            sample_size_sweep(
                &cfg,
                &DesignSpec::Pigeonhole(PartitionSpec::Natural),
                &fractions,
                reps,
                seed,
            )
            .map_err(|e| AppError::Failure(e.to_string()))?,
        )
    } else {
        None
    };

    let config = serde_json::json!({
        "command": "ate",
        "t": t,
        "d": d,
        "r": reps,
        "boost_top_k": boost_top_k,
        "boost_factor": boost_factor,
        "intercept": intercept,
        "population_seed": population_seed,
        "sweep": sweep,
    });
    let sink = ReportSink {
        out,
        seed,
        config,
        no_timestamp,
    };
    sink.write_json(serde_json::json!({
        "report": report,
        "sample_size_sweep": sweep_report,
    }))
}
