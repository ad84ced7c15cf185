//! `pbrs`: encode files into Reed-Solomon or Piggybacked-RS stripes, repair and
//! verify blocks, and simulate cluster-wide repair traffic.

mod output;

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pbrs::cluster_sim::{
    generate_trace, ingest_trace, summarize_missing_distribution, write_trace, SimulationConfig, TrafficReport,
};
use pbrs::stripe_io::{
    decode_file, encode_file, repair_block, verify_stripe, write_atomic, BlockReader, BlockSetLayout, DirBlockReader,
    ExcludingReader, FileIndex, StripeManifest, VerifyScope, DEFAULT_BLOCK_SIZE,
};
use pbrs::{default_partition, CodeParams, Error, GroupPartition};
use serde_json::json;

use output::{Format, Output};

const EXIT_CODES: &str = "Exit codes: 0 ok, 1 I/O failure, 2 usage or configuration error, \
3 unrecoverable stripe, 4 trace parse error, 5 verification found damage.";

#[derive(Parser, Debug)]
#[command(name = "pbrs", version, about = "Reed-Solomon and Piggybacked-RS storage codes", after_help = EXIT_CODES)]
struct Cli {
    /// Output format on stdout. With json, human-readable summaries go to stderr.
    #[arg(long, value_enum, global = true, default_value_t = Format::Human)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Split a file into stripes and write blocks, manifests and an index.
    Encode(EncodeArgs),
    /// Rebuild one block of a stripe and print the transfer ledger.
    Repair(RepairArgs),
    /// Check block checksums and parity equations of a stripe.
    Verify(VerifyArgs),
    /// Reassemble an encoded file, repairing data blocks as needed.
    Decode(DecodeArgs),
    /// Simulate daily cross-rack repair traffic.
    Simulate(SimulateArgs),
    /// Write a synthetic failure trace as CSV.
    GenTrace(GenTraceArgs),
    /// Summarize a saved traffic report.
    Report(ReportArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum CodecArg {
    Rs,
    PiggybackedRs,
}

#[derive(Args, Debug)]
struct CodeFlags {
    #[arg(long, value_enum, default_value_t = CodecArg::PiggybackedRs)]
    codec: CodecArg,
    #[arg(short, long, default_value_t = 10)]
    k: usize,
    #[arg(short, long, default_value_t = 4)]
    r: usize,
    /// Bytes per block.
    #[arg(long, default_value_t = DEFAULT_BLOCK_SIZE)]
    block_size: usize,
    /// Piggyback groups as data positions, e.g. "0,1,2,3;4,5,6;7,8,9".
    #[arg(long)]
    partition: Option<String>,
}

#[derive(Args, Debug)]
struct EncodeArgs {
    input: PathBuf,
    /// Directory for blocks, manifests and the index.
    #[arg(short, long)]
    out: PathBuf,
    /// Name recorded in the index; defaults to the input file name.
    #[arg(long)]
    name: Option<String>,
    #[command(flatten)]
    code: CodeFlags,
}

#[derive(Args, Debug)]
struct RepairArgs {
    /// Stripe manifest; blocks are looked up next to it.
    manifest: PathBuf,
    /// Index of the block to rebuild.
    #[arg(long)]
    missing: usize,
    /// Where to write the rebuilt block; defaults to its place in the stripe.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    manifest: PathBuf,
    /// Check this many random positions instead of all of them.
    #[arg(long)]
    sample: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct DecodeArgs {
    /// File index written by `encode`.
    index: PathBuf,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Simulation config (JSON); defaults to the bundled calibration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Failure trace CSV; without it a synthetic trace is generated.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    days: Option<usize>,
    /// Trace generator seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    placement_seed: Option<u64>,
    /// Median machines flagged unavailable per day.
    #[arg(long)]
    median_failures: Option<usize>,
    #[arg(long)]
    racks: Option<usize>,
    #[arg(long)]
    nodes_per_rack: Option<usize>,
    #[arg(long)]
    blocks_per_node: Option<usize>,
    #[arg(short, long)]
    k: Option<usize>,
    #[arg(short, long)]
    r: Option<usize>,
    #[arg(long)]
    block_size: Option<u64>,
    #[arg(long)]
    partition: Option<String>,
    #[arg(long)]
    repair_window: Option<i64>,
    /// Simulate 1/FACTOR of the blocks, each standing for FACTOR real ones.
    #[arg(long)]
    desk_scale: Option<u64>,
    /// Write the full report as JSON here.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Write the per-day table as CSV here.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GenTraceArgs {
    /// Take generator settings from a simulation config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    days: Option<usize>,
    #[arg(long)]
    median_failures: Option<usize>,
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV; stdout when omitted.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Report JSON written by `simulate --report`.
    report: PathBuf,
}

/// A failure mapped to a process exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io(io) if io.kind() == io::ErrorKind::BrokenPipe => 0,
            Error::Io(_) | Error::Json(_) => 1,
            Error::Unrecoverable { .. } | Error::CorruptSource { .. } | Error::CorruptStripe => 3,
            Error::Parse { .. } | Error::TraceInconsistent { .. } | Error::UnknownNode(_) => 4,
            _ => 2,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        // a closed stdout (`pbrs ... | head`) is not a failure
        let code = if e.kind() == io::ErrorKind::BrokenPipe { 0 } else { 1 };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult = Result<ExitCode, Failure>;

fn parse_partition(text: &str, params: CodeParams) -> Result<GroupPartition, Failure> {
    let groups = text
        .split(';')
        .filter(|g| !g.trim().is_empty())
        .map(|g| {
            g.split(',')
                .map(|p| p.trim().parse::<usize>())
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| Failure::usage(format!("bad --partition {text:?}: {e}")))?;
    Ok(GroupPartition::new(params, groups)?)
}

fn layout(code: &CodeFlags) -> Result<BlockSetLayout, Failure> {
    let params = CodeParams::new(code.k, code.r)?;
    Ok(match code.codec {
        CodecArg::Rs => {
            if code.partition.is_some() {
                return Err(Failure::usage("--partition only applies to --codec piggybacked-rs"));
            }
            BlockSetLayout::rs(params, code.block_size)?
        }
        CodecArg::PiggybackedRs => {
            let partition = match &code.partition {
                Some(text) => parse_partition(text, params)?,
                None => default_partition(params)?,
            };
            BlockSetLayout::piggybacked(params, code.block_size, partition)?
        }
    })
}

fn encode(args: &EncodeArgs, out: &Output) -> CliResult {
    let layout = layout(&args.code)?;
    let name = match &args.name {
        Some(n) => n.clone(),
        None => args
            .input
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .ok_or_else(|| Failure::usage("input has no file name; pass --name"))?,
    };
    let mut input = BufReader::new(File::open(&args.input)?);
    let index = encode_file(&mut input, &layout, &args.out, &name)?;
    let index_path = args.out.join(FileIndex::file_name(&name));
    out.emit(
        &json!({
            "stripes": index.stripes.len(),
            "overhead": index.overhead(),
            "codec": index.codec,
            "k": index.k,
            "r": index.r,
            "block_size": index.block_size,
            "file_len": index.file_len,
            "index": index_path,
        }),
        &format!(
            "encoded {} bytes into {} stripes, storage overhead {}x\nindex: {}",
            index.file_len,
            index.stripes.len(),
            index.overhead(),
            index_path.display()
        ),
    )?;
    Ok(ExitCode::SUCCESS)
}

fn manifest_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn repair(args: &RepairArgs, out: &Output) -> CliResult {
    let manifest = StripeManifest::read(&args.manifest)?;
    manifest.validate()?;
    if args.missing >= manifest.blocks.len() {
        return Err(Failure::usage(format!(
            "--missing {} but the stripe has {} blocks",
            args.missing,
            manifest.blocks.len()
        )));
    }
    let dir = manifest_dir(&args.manifest);
    let reader = DirBlockReader::new(&dir, &manifest);
    // never read the target itself, even if a stale copy is on disk
    let sources = ExcludingReader::new(&reader, [args.missing]);
    let (block, ledger) = repair_block(&manifest, args.missing, &sources)?;
    let dest = args.out.clone().unwrap_or_else(|| reader.path(args.missing));
    write_atomic(&dest, &block)?;
    let alive = (0..manifest.blocks.len()).filter(|&i| sources.is_available(i)).count();
    out.emit_table(
        &serde_json::to_value(&ledger).map_err(|e| Failure::from(Error::from(e)))?,
        "entries",
        &["source", "range", "bytes"],
        &format!(
            "rebuilt block {} of {} from {} available blocks: {} bytes read, {:.2} of an RS repair\nwritten to {}",
            args.missing,
            manifest.stripe_id,
            alive,
            ledger.total_bytes,
            ledger.ratio_vs_rs,
            dest.display()
        ),
    )?;
    Ok(ExitCode::SUCCESS)
}

fn verify(args: &VerifyArgs, out: &Output) -> CliResult {
    let manifest = StripeManifest::read(&args.manifest)?;
    let dir = manifest_dir(&args.manifest);
    let reader = DirBlockReader::new(&dir, &manifest);
    let scope = match args.sample {
        Some(count) => VerifyScope::Sample { count, seed: args.seed },
        None => VerifyScope::Exhaustive,
    };
    let report = verify_stripe(&manifest, &reader, scope)?;
    let human = if report.is_ok() {
        format!(
            "{}: ok, {} positions checked",
            manifest.stripe_id, report.positions_checked
        )
    } else {
        format!(
            "{}: DAMAGED, crc mismatch in blocks {:?}, {} parity violations in {} positions checked",
            manifest.stripe_id,
            report.crc_mismatches,
            report.violations.len(),
            report.positions_checked
        )
    };
    let mut value = serde_json::to_value(&report).map_err(|e| Failure::from(Error::from(e)))?;
    value["ok"] = report.is_ok().into();
    out.emit_table(&value, "violations", &["position", "substripe", "parity"], &human)?;
    Ok(if report.is_ok() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(5)
    })
}

fn decode(args: &DecodeArgs, out: &Output) -> CliResult {
    let index = FileIndex::read(&args.index)?;
    let bytes = decode_file(&manifest_dir(&args.index), &index)?;
    write_atomic(&args.out, &bytes)?;
    out.emit(
        &json!({ "name": index.name, "bytes": bytes.len(), "out": args.out }),
        &format!("wrote {} bytes to {}", bytes.len(), args.out.display()),
    )?;
    Ok(ExitCode::SUCCESS)
}

fn load_config(path: Option<&Path>) -> Result<SimulationConfig, Failure> {
    match path {
        Some(p) => Ok(SimulationConfig::from_json(&fs::read_to_string(p)?)?),
        None => Ok(SimulationConfig::default()),
    }
}

fn simulate(args: &SimulateArgs, out: &Output) -> CliResult {
    let mut cfg = load_config(args.config.as_deref())?;
    macro_rules! apply {
        ($($flag:ident => $field:ident),*) => {
            $(if let Some(v) = args.$flag.clone() { cfg.$field = v; })*
        };
    }
    apply!(days => days, seed => trace_seed, placement_seed => placement_seed,
        median_failures => median_daily_failures, racks => racks, nodes_per_rack => nodes_per_rack,
        blocks_per_node => blocks_per_node, k => k, r => r, block_size => block_size,
        repair_window => repair_window_secs);
    if let Some(text) = &args.partition {
        let params = CodeParams::new(cfg.k, cfg.r)?;
        cfg.partition = Some(parse_partition(text, params)?.groups().to_vec());
    }
    if let Some(factor) = args.desk_scale {
        cfg = cfg.desk_scale(factor)?;
    }
    cfg.validate()?;
    let report = match &args.trace {
        Some(path) => {
            let events = ingest_trace(BufReader::new(File::open(path)?))?;
            cfg.run_with_trace(&events)?
        }
        None => cfg.run()?,
    };
    if let Some(path) = &args.report {
        let mut buf = Vec::new();
        report.write_json(&mut buf)?;
        write_atomic(path, &buf)?;
    }
    if let Some(path) = &args.csv {
        let mut buf = Vec::new();
        report.write_csv(&mut buf)?;
        write_atomic(path, &buf)?;
    }
    print_report(&report, out)
}

fn print_report(report: &TrafficReport, out: &Output) -> CliResult {
    let s = &report.summary;
    let dist = summarize_missing_distribution(report);
    let human = format!(
        "{} days, median per day: {:.0} machines flagged, {:.0} blocks repaired\n\
         cross-rack traffic (median TB/day): RS {:.2}, Piggybacked-RS {:.2}, savings {:.2} ({:.2}% overall)\n\
         flat 30% single-failure model: savings {:.2} TB/day ({:.2}% overall)\n\
         stripes by missing blocks: {:.2}% one, {:.2}% two, {:.2}% three or more",
        s.days,
        s.median_unavailable_machines,
        s.median_blocks_repaired,
        s.median_rs_tb,
        s.median_pb_tb,
        s.median_savings_tb,
        s.savings_pct,
        s.median_flat_savings_tb,
        s.flat_savings_pct,
        dist.one,
        dist.two,
        dist.three_plus
    );
    match out.format {
        Format::Csv => {
            report.write_csv(io::stdout().lock())?;
        }
        _ => out.emit(&json!({ "summary": s, "missing_distribution": dist }), &human)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn gen_trace(args: &GenTraceArgs, out: &Output) -> CliResult {
    let cfg = load_config(args.config.as_deref())?;
    let mut gen = cfg.trace_config();
    if let Some(v) = args.days {
        gen.days = v;
    }
    if let Some(v) = args.median_failures {
        gen.median_daily_failures = v;
    }
    if let Some(v) = args.nodes {
        gen.nodes = v;
    }
    if let Some(v) = args.seed {
        gen.seed = v;
    }
    let events = generate_trace(&gen)?;
    match &args.out {
        Some(path) => {
            let mut buf = Vec::new();
            write_trace(&events, &mut buf)?;
            write_atomic(path, &buf)?;
            out.emit(
                &json!({ "events": events.len(), "days": gen.days, "nodes": gen.nodes, "out": path }),
                &format!(
                    "wrote {} events over {} days to {}",
                    events.len(),
                    gen.days,
                    path.display()
                ),
            )?;
        }
        None => {
            let mut w = BufWriter::new(io::stdout().lock());
            write_trace(&events, &mut w)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn report(args: &ReportArgs, out: &Output) -> CliResult {
    let report = TrafficReport::read_json(BufReader::new(File::open(&args.report)?))?;
    print_report(&report, out)
}

fn run(cli: &Cli) -> CliResult {
    let out = Output { format: cli.format };
    match &cli.command {
        Command::Encode(a) => encode(a, &out),
        Command::Repair(a) => repair(a, &out),
        Command::Verify(a) => verify(a, &out),
        Command::Decode(a) => decode(a, &out),
        Command::Simulate(a) => simulate(a, &out),
        Command::GenTrace(a) => gen_trace(a, &out),
        Command::Report(a) => report(a, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(f) if f.code == 0 => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
