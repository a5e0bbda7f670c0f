//! `dmatch`: generate instances, run Greedy Dual, certify runs, compute
//! offline optima and benchmark corpora.
//!
//! Exit codes: 0 success, 1 input or usage error, 2 certification or
//! property violation.

mod bench;
mod corpus;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use delay_match::generate::{gen_random_instance, gen_ring_instance, gen_tightness_instance, RandomSpec, RingHalf};
use delay_match::instance::{parse_instance, AnyInstance, Instance, ParseOptions};
use delay_match::trace::{events_from_jsonl, events_to_jsonl, summary_to_json};
use delay_match::{certify, certify_log, ratio_report, run, MetricKind, NumericMode, Scalar, Variant};
use rayon::prelude::*;
use serde_json::{json, Value};

use bench::{OptChoice, Status};

#[derive(Parser)]
#[command(name = "dmatch", version, about = "Greedy Dual for min-cost (bipartite) perfect matching with delays")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a generated instance as JSON.
    Gen(GenArgs),
    /// Run Greedy Dual on an instance and print the cost summary.
    Run(RunArgs),
    /// Compute the offline optimum of an instance.
    Opt(OptArgs),
    /// Certify a run: replay its event log and check every property.
    Certify(CertifyArgs),
    /// Run, certify and compare every instance of a corpus.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Tightness,
    Ring,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Mpmd,
    Mbpmd,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Mpmd => Variant::Mpmd,
            VariantArg::Mbpmd => Variant::Mbpmd,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Line,
    Matrix,
    Ring,
    Euclidean,
}

impl From<MetricArg> for MetricKind {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Line => MetricKind::Line,
            MetricArg::Matrix => MetricKind::Matrix,
            MetricArg::Ring => MetricKind::Ring,
            MetricArg::Euclidean => MetricKind::Euclidean,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum HalfArg {
    Clockwise,
    Counterclockwise,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Exact,
    Float,
}

impl From<ModeArg> for NumericMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Exact => NumericMode::Exact,
            ModeArg::Float => NumericMode::Float,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputFormat {
    Table,
    Json,
    Csv,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    kind: Kind,
    /// Number of pairs.
    #[arg(long)]
    m: usize,
    /// Default mpmd. Ring instances are mpmd only.
    #[arg(long, value_enum)]
    variant: Option<VariantArg>,
    /// Random generator seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Metric of a random instance.
    #[arg(long, value_enum, default_value = "line")]
    metric: MetricArg,
    /// Random arrival times lie in [0, horizon].
    #[arg(long, default_value_t = 8)]
    horizon: u32,
    /// Extent of random positions and weights.
    #[arg(long, default_value_t = 8)]
    spread: u32,
    /// Which half of the ring the ring schedule extends through.
    #[arg(long, value_enum, default_value = "clockwise")]
    half: HalfArg,
    /// Write to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ModeFlag {
    /// Numeric mode; overrides the instance file and DM_MODE.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
}

#[derive(Args)]
struct RunArgs {
    instance: PathBuf,
    /// Write the event log as JSON Lines.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Certify the run; exit 2 on a violation.
    #[arg(long)]
    certify: bool,
    #[command(flatten)]
    mode: ModeFlag,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Auto,
    Brute,
    Hungarian,
}

#[derive(Args)]
struct OptArgs {
    instance: PathBuf,
    #[arg(long, value_enum, default_value = "auto")]
    method: MethodArg,
    #[command(flatten)]
    mode: ModeFlag,
}

#[derive(Args)]
struct CertifyArgs {
    instance: PathBuf,
    /// Certify this event log instead of a fresh run.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Oracle for the ratio report.
    #[arg(long, value_enum, default_value = "none")]
    opt: OptChoice,
    #[command(flatten)]
    mode: ModeFlag,
}

#[derive(Args)]
struct BenchArgs {
    /// Glob of instance files, or a generator spec such as
    /// `tightness:m=4,10;variant=mpmd,mbpmd` or
    /// `random:seeds=1-100;m=1-5;variant=mpmd,mbpmd;metric=line,matrix,ring`.
    corpus: String,
    #[arg(long, value_enum, default_value = "auto")]
    opt: OptChoice,
    /// Also write PREFIX.json and PREFIX.csv.
    #[arg(long, value_name = "PREFIX")]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "table")]
    format: OutputFormat,
    /// Record per-instance wall time (output is then no longer reproducible).
    #[arg(long)]
    timing: bool,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long)]
    jobs: Option<usize>,
    #[command(flatten)]
    mode: ModeFlag,
}

enum Failure {
    Input(String),
    Violation(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 1,
            Failure::Violation(_) => 2,
        }
    }
}

type Outcome = Result<(), Failure>;

fn input<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Input(e.to_string())
}

fn write_output(path: Option<&Path>, text: &str) -> Outcome {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Input(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn parse_options(mode: &ModeFlag) -> Result<ParseOptions, Failure> {
    Ok(ParseOptions {
        force: mode.mode.map(NumericMode::from),
        default: corpus::env_mode().map_err(Failure::Input)?,
    })
}

fn load(path: &Path, mode: &ModeFlag) -> Result<AnyInstance, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    parse_instance(&text, parse_options(mode)?).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn cmd_gen(args: &GenArgs) -> Outcome {
    let variant = args.variant.map(Variant::from);
    let inst: AnyInstance = match args.kind {
        Kind::Tightness => gen_tightness_instance(args.m, variant.unwrap_or(Variant::Mpmd)).map_err(input)?.into(),
        Kind::Ring => {
            if variant == Some(Variant::Mbpmd) {
                return Err(Failure::Input("ring instances are mpmd only".into()));
            }
            let half = match args.half {
                HalfArg::Clockwise => RingHalf::Clockwise,
                HalfArg::Counterclockwise => RingHalf::Counterclockwise,
            };
            gen_ring_instance(args.m, half).map_err(input)?.into()
        }
        Kind::Random => gen_random_instance(&RandomSpec {
            seed: args.seed,
            m: args.m,
            variant: variant.unwrap_or(Variant::Mpmd),
            metric: args.metric.into(),
            horizon: args.horizon,
            spread: args.spread,
        })
        .map_err(input)?,
    };
    write_output(args.out.as_deref(), &inst.to_json_string())
}

fn run_in<S: Scalar>(inst: &Instance<S>, args: &RunArgs) -> Outcome {
    let result = run(inst);
    if let Some(path) = &args.trace {
        write_output(Some(path), &events_to_jsonl(&result.events))?;
    }
    print!("{}", pretty(&summary_to_json(&result.summary)));
    if args.certify {
        certify(inst, &result)
            .and_then(|_| ratio_report(inst, &result, None))
            .map_err(|v| Failure::Violation(v.to_string()))?;
    }
    Ok(())
}

fn cmd_run(args: &RunArgs) -> Outcome {
    match load(&args.instance, &args.mode)? {
        AnyInstance::Exact(i) => run_in(&i, args),
        AnyInstance::Float(i) => run_in(&i, args),
    }
}

fn opt_in<S: Scalar>(inst: &Instance<S>, method: MethodArg) -> Outcome {
    let choice = match method {
        MethodArg::Auto => OptChoice::Auto,
        MethodArg::Brute => OptChoice::Brute,
        MethodArg::Hungarian => OptChoice::Hungarian,
    };
    let sol = bench::solve_opt(inst, choice)
        .map_err(input)?
        .ok_or_else(|| Failure::Input(format!("no exact oracle for an mpmd instance with {} requests", inst.len())))?;
    print!("{}", pretty(&sol.to_json()));
    Ok(())
}

fn cmd_opt(args: &OptArgs) -> Outcome {
    match load(&args.instance, &args.mode)? {
        AnyInstance::Exact(i) => opt_in(&i, args.method),
        AnyInstance::Float(i) => opt_in(&i, args.method),
    }
}

fn certify_in<S: Scalar>(inst: &Instance<S>, args: &CertifyArgs) -> Outcome {
    let opt = bench::solve_opt(inst, args.opt).map_err(input)?;
    let verdict = match &args.trace {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
            let events = events_from_jsonl::<S>(&text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
            certify_log(inst, &events).map(|cert| (cert, None))
        }
        None => {
            let result = run(inst);
            certify(inst, &result).map(|cert| (cert, Some(result)))
        }
    };
    let (cert, result) = match verdict {
        Ok(ok) => ok,
        Err(v) => {
            print!("{}", pretty(&json!({ "certified": false, "violation": v.to_json() })));
            return Err(Failure::Violation(v.to_string()));
        }
    };
    // A replayed log carries everything the ratio report needs.
    let result = result.unwrap_or_else(|| delay_match::RunResult {
        summary: cert.summary.clone(),
        matching: cert.matching.clone(),
        sets: Vec::new(),
        marked: cert.marked.clone(),
        events: Vec::new(),
    });
    let report = match ratio_report(inst, &result, opt.as_ref().map(|o| o.value.clone())) {
        Ok(r) => r,
        Err(v) => {
            print!("{}", pretty(&json!({ "certified": false, "violation": v.to_json() })));
            return Err(Failure::Violation(v.to_string()));
        }
    };
    let doc = json!({
        "certified": true,
        "summary": summary_to_json(&cert.summary),
        "certificate": cert.to_json(),
        "ratio": report.to_json(),
        "opt": opt.as_ref().map(|o| o.to_json()),
    });
    print!("{}", pretty(&doc));
    Ok(())
}

fn cmd_certify(args: &CertifyArgs) -> Outcome {
    match load(&args.instance, &args.mode)? {
        AnyInstance::Exact(i) => certify_in(&i, args),
        AnyInstance::Float(i) => certify_in(&i, args),
    }
}

fn cmd_bench(args: &BenchArgs) -> Outcome {
    let items = corpus::expand(&args.corpus).map_err(Failure::Input)?;
    if items.is_empty() {
        return Err(Failure::Input(format!("corpus `{}` is empty", args.corpus)));
    }
    let opts = parse_options(&args.mode)?;
    let work = || -> Vec<bench::Row> {
        items
            .par_iter()
            .map(|item| bench::evaluate(item, opts, args.opt, args.timing))
            .collect()
    };
    let rows = match args.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(input)?
            .install(work),
        None => work(),
    };
    let json_text = bench::to_json(&rows);
    let csv_text = bench::to_csv(&rows, args.timing);
    if let Some(prefix) = &args.out {
        let with_ext = |ext: &str| {
            let mut p = prefix.clone().into_os_string();
            p.push(ext);
            PathBuf::from(p)
        };
        write_output(Some(&with_ext(".json")), &json_text)?;
        write_output(Some(&with_ext(".csv")), &csv_text)?;
    }
    let shown = match args.format {
        OutputFormat::Table => bench::to_table(&rows),
        OutputFormat::Json => json_text,
        OutputFormat::Csv => csv_text,
    };
    print!("{shown}");
    match bench::status(&rows) {
        Status::Ok => Ok(()),
        Status::InputError => Err(Failure::Input("some instances could not be evaluated".into())),
        Status::Violation => Err(Failure::Violation("some instances failed certification".into())),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Run(a) => cmd_run(a),
        Command::Opt(a) => cmd_opt(a),
        Command::Certify(a) => cmd_certify(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Input(msg) | Failure::Violation(msg)) = &f;
            eprintln!("dmatch: {msg}");
            ExitCode::from(f.code())
        }
    }
}
