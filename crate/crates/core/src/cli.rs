//! Command-line front end. `fpmac <command> ...`; see `docs/FORMATS.md` for
//! the output schemas.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::datapath::{Datapath, Flags, MacConfig, MacMode, DEFAULT_GUARD_BITS};
use crate::error::{Error, Result};
use crate::formats::{decode, value_table, Format, FormatSpec};
use crate::oracle::{
    compare_sweep, exact_dot, relu_pattern, ulp_distance, ErrorStats, Quantizer, SweepDomain,
    REPORT_VERSION,
};
use crate::pipeline::{write_trace_csv, write_trace_jsonl, Operands, Pipeline, ThroughputReport};

/// Exit code when a sweep exceeds `--max-ulp`.
pub const EXIT_THRESHOLD: i32 = 2;
/// Environment variable capping sweep worker threads.
pub const THREADS_ENV: &str = "FPMAC_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "fpmac",
    version,
    about = "Dual-precision FP8/FP4 MAC processing element model"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate one a*b+c
    Mac(MacArgs),
    /// Compare the PE against the exact oracle over an input domain
    Sweep(SweepArgs),
    /// Chained dot product from a file of operand pairs
    Dot(DotArgs),
    /// Stream MACs through the cycle-level pipeline and report throughput
    Pipe(PipeArgs),
    /// Print the value table of a format
    Formats(FormatsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum OutputFormat {
    #[default]
    Text,
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct ModeArgs {
    /// e4m3, e5m2, dual-e2m1 or dual-e1m2
    #[arg(long, default_value = "e4m3")]
    pub mode: MacMode,
    #[arg(long, default_value_t = DEFAULT_GUARD_BITS)]
    pub guard: u32,
    /// Bypass the ReLU output stage
    #[arg(long)]
    pub no_relu: bool,
}

impl ModeArgs {
    pub fn config(&self) -> Result<MacConfig> {
        Ok(MacConfig::new(self.mode)
            .with_guard_bits(self.guard)?
            .with_relu(!self.no_relu))
    }
}

#[derive(Debug, Args)]
pub struct MacArgs {
    #[command(flatten)]
    pub mode: ModeArgs,
    /// Dump every stage latch
    #[arg(long)]
    pub trace: bool,
    #[arg(long, value_enum, default_value_t)]
    pub format: OutputFormat,
    pub a: String,
    pub b: String,
    pub c: String,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub mode: ModeArgs,
    /// Every operand triple
    #[arg(long, conflicts_with_all = ["random", "pairs"])]
    pub exhaustive: bool,
    /// Every operand pair with a zero addend
    #[arg(long, conflicts_with = "random")]
    pub pairs: bool,
    /// N random operand triples
    #[arg(long, value_name = "N")]
    pub random: Option<u64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Exit with status 2 if the worst ULP distance exceeds this
    #[arg(long)]
    pub max_ulp: Option<u64>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: OutputFormat,
}

#[derive(Debug, Args)]
pub struct DotArgs {
    #[command(flatten)]
    pub mode: ModeArgs,
    #[arg(long, value_enum, default_value_t)]
    pub format: OutputFormat,
    pub input: PathBuf,
}

#[derive(Debug, Args)]
pub struct PipeArgs {
    #[command(flatten)]
    pub mode: ModeArgs,
    #[arg(long, default_value_t = 1000)]
    pub length: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Clock frequency in GHz for GFLOPS scaling
    #[arg(long)]
    pub freq: Option<f64>,
    #[arg(long)]
    pub trace_csv: Option<PathBuf>,
    #[arg(long)]
    pub trace_jsonl: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    pub format: OutputFormat,
}

#[derive(Debug, Args)]
pub struct FormatsArgs {
    pub name: Format,
    #[arg(long, value_enum, default_value_t)]
    pub format: OutputFormat,
}

/// Parses `0x4E`, `4e` or `0X4E` into a byte.
pub fn parse_hex(s: &str) -> Result<u8> {
    let digits = s
        .strip_prefix("0x")
        .or_else(|| s.strip_prefix("0X"))
        .unwrap_or(s);
    if digits.is_empty() || !digits.chars().all(|c| c.is_ascii_hexdigit()) {
        return Err(Error::ParseHex(s.to_string()));
    }
    let v = u64::from_str_radix(digits, 16).map_err(|_| Error::WidthMismatch {
        literal: s.to_string(),
        width: 8,
    })?;
    u8::try_from(v).map_err(|_| Error::WidthMismatch {
        literal: s.to_string(),
        width: 8,
    })
}

fn value_f64(bits: u8, spec: &FormatSpec) -> f64 {
    decode(bits, spec)
        .value::<f64>(spec)
        .expect("f64 holds every class")
}

fn show_value(bits: u8, spec: &FormatSpec) -> String {
    format!("{:?}", value_f64(bits, spec))
}

fn lane_json(lane: usize, bits: u8, flags: Option<&Flags>, spec: &FormatSpec) -> serde_json::Value {
    let v = value_f64(bits, spec);
    let mut obj = json!({
        "lane": lane,
        "bits": spec.hex(bits),
        "value": if v.is_finite() { json!(v) } else { json!(format!("{v:?}")) },
    });
    if let Some(f) = flags {
        obj["flags"] = json!(f);
    }
    obj
}

/// Dispatches a parsed command; returns the process exit code.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<i32> {
    match cli.command {
        Command::Mac(args) => cmd_mac(&args, out),
        Command::Sweep(args) => cmd_sweep(&args, out),
        Command::Dot(args) => cmd_dot(&args, out),
        Command::Pipe(args) => cmd_pipe(&args, out),
        Command::Formats(args) => cmd_formats(&args, out),
    }
}

pub fn cmd_mac(args: &MacArgs, out: &mut dyn Write) -> Result<i32> {
    let cfg = args.mode.config()?;
    let spec = cfg.spec();
    let (a, b, c) = (
        parse_hex(&args.a)?,
        parse_hex(&args.b)?,
        parse_hex(&args.c)?,
    );
    let dp = Datapath::new(cfg);
    let w = |x| cfg.mode.word(x);
    let trace = dp.mac_traced(w(a), w(b), w(c));
    let r = trace.s5;
    let lanes: Vec<usize> = (0..r.lanes).rev().collect();

    match args.format {
        OutputFormat::Json => {
            let doc = json!({
                "version": REPORT_VERSION,
                "mode": cfg.mode,
                "guard_bits": cfg.guard_bits,
                "relu": cfg.relu,
                "bits": format!("0x{:02X}", r.bits.bits),
                "lanes": lanes.iter().map(|&l| lane_json(l, r.lane_bits(l), Some(&r.flags[l]), spec)).collect::<Vec<_>>(),
            });
            writeln!(out, "{doc}")?;
        }
        _ => {
            if r.lanes == 1 {
                writeln!(
                    out,
                    "{} ({})",
                    spec.hex(r.bits.bits),
                    show_value(r.bits.bits, spec)
                )?;
                writeln!(out, "flags: {}", r.flags[0])?;
            } else {
                let parts: Vec<String> = lanes
                    .iter()
                    .map(|&l| format!("lane{l}={}", show_value(r.lane_bits(l), spec)))
                    .collect();
                writeln!(out, "{} (0x{:02X})", parts.join(" "), r.bits.bits)?;
                let flags: Vec<String> = lanes
                    .iter()
                    .map(|&l| format!("lane{l}={}", r.flags[l]))
                    .collect();
                writeln!(out, "flags: {}", flags.join(" "))?;
            }
        }
    }
    if args.trace {
        for l in lanes.iter().rev().copied() {
            writeln!(out, "S0 lane{l} {:?}", trace.s0.lanes[l])?;
            writeln!(out, "S1 lane{l} {:?}", trace.s1.lanes[l])?;
            writeln!(out, "S2 lane{l} {:?}", trace.s2.lanes[l])?;
            writeln!(out, "S3 lane{l} {:?}", trace.s3.lanes[l])?;
            writeln!(out, "S4 lane{l} {:?}", trace.s4.lanes[l])?;
            writeln!(
                out,
                "S5 lane{l} {} {}",
                spec.hex(r.lane_bits(l)),
                r.flags[l]
            )?;
        }
        writeln!(
            out,
            "S1 multiplier outputs {:02X?}",
            trace.s1.multiplier_outputs
        )?;
    }
    Ok(0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub version: u32,
    pub mode: MacMode,
    pub guard_bits: u32,
    pub relu: bool,
    pub domain: String,
    pub seed: Option<u64>,
    pub mean_abs: String,
    pub mean_abs_f64: f64,
    pub max_ulp_threshold: Option<u64>,
    pub pass: Option<bool>,
    pub stats: ErrorStats,
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let threads = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .unwrap_or(0);
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Io(std::io::Error::other(e)))
}

pub fn cmd_sweep(args: &SweepArgs, out: &mut dyn Write) -> Result<i32> {
    let cfg = args.mode.config()?;
    let (domain, label, seed) = match (args.exhaustive, args.pairs, args.random) {
        (_, _, Some(n)) => (
            SweepDomain::Random {
                count: n,
                seed: args.seed,
            },
            "random",
            Some(args.seed),
        ),
        (_, true, None) => (SweepDomain::ProductPairs, "pairs", None),
        _ => (SweepDomain::Exhaustive, "exhaustive", None),
    };
    domain.check_size(&cfg)?;
    let stats = thread_pool()?.install(|| compare_sweep(&cfg, &domain));
    let pass = args.max_ulp.map(|t| stats.worst_ulp() <= t);
    let mean = stats.mean_abs();
    let report = SweepReport {
        version: REPORT_VERSION,
        mode: cfg.mode,
        guard_bits: cfg.guard_bits,
        relu: cfg.relu,
        domain: label.to_string(),
        seed,
        mean_abs: mean.to_string(),
        mean_abs_f64: mean.to_f64().unwrap_or(f64::NAN),
        max_ulp_threshold: args.max_ulp,
        pass,
        stats,
    };

    let mut buf = Vec::new();
    match args.format {
        OutputFormat::Json => {
            serde_json::to_writer(&mut buf, &report)?;
            buf.push(b'\n');
        }
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(["version", "mode", "guard_bits", "ulp", "count"])?;
            for (ulp, count) in &report.stats.histogram {
                w.write_record([
                    REPORT_VERSION.to_string(),
                    cfg.mode.to_string(),
                    cfg.guard_bits.to_string(),
                    ulp.to_string(),
                    count.to_string(),
                ])?;
            }
            w.flush()?;
        }
        OutputFormat::Text => {
            let s = &report.stats;
            writeln!(
                buf,
                "mode={} guard={} domain={} samples={} max_ulp={} mismatches={} nan_mismatches={} mean_abs={}",
                cfg.mode, cfg.guard_bits, label, s.samples, s.max_ulp, s.mismatch_count, s.special_mismatch, report.mean_abs
            )?;
            if let Some(p) = pass {
                writeln!(buf, "{}", if p { "PASS" } else { "FAIL" })?;
            }
        }
    }
    match &args.output {
        Some(path) => fs::write(path, &buf)?,
        None => out.write_all(&buf)?,
    }
    Ok(if pass == Some(false) {
        EXIT_THRESHOLD
    } else {
        0
    })
}

/// Reads `a b` hex pairs, one per line; `#` starts a comment.
pub fn parse_pairs(text: &str) -> Result<Vec<(u8, u8)>> {
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(Error::MalformedInput {
                line: i + 1,
                reason: format!("expected 2 fields, got {}", fields.len()),
            });
        }
        let parse = |f: &str| {
            parse_hex(f).map_err(|e| Error::MalformedInput {
                line: i + 1,
                reason: e.to_string(),
            })
        };
        pairs.push((parse(fields[0])?, parse(fields[1])?));
    }
    Ok(pairs)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DotLane {
    pub lane: usize,
    pub result: u8,
    pub oracle: u8,
    pub ulp: Option<u64>,
}

/// Chains `acc = a_i * b_i + acc` on the PE. ReLU, when enabled, acts only
/// on the final step; intermediate partial sums keep their sign.
pub fn dot_chain(pairs: &[(u8, u8)], cfg: &MacConfig) -> (u8, Vec<DotLane>) {
    let spec = cfg.spec();
    let inner = Datapath::new(cfg.with_relu(false));
    let last = Datapath::new(*cfg);
    let mut acc = 0u8;
    for (i, &(a, b)) in pairs.iter().enumerate() {
        let dp = if i + 1 == pairs.len() { &last } else { &inner };
        acc = dp.mac_bits(a, b, acc).bits.bits;
    }
    let q = Quantizer::new(cfg.mode.format());
    let lanes = (0..cfg.mode.lanes())
        .map(|lane| {
            let lane_of = |x: u8| cfg.mode.word(x).lane(lane);
            let decoded: Vec<_> = pairs
                .iter()
                .map(|&(a, b)| (decode(lane_of(a), spec), decode(lane_of(b), spec)))
                .collect();
            let exact = exact_dot(decoded.iter().map(|(a, b)| (a, b)), spec);
            let mut oracle = q.quantize_truncate(&exact);
            if cfg.relu {
                oracle = relu_pattern(oracle, spec);
            }
            let result = lane_of(acc);
            DotLane {
                lane,
                result,
                oracle,
                ulp: ulp_distance(result, oracle, spec),
            }
        })
        .collect();
    (acc, lanes)
}

pub fn cmd_dot(args: &DotArgs, out: &mut dyn Write) -> Result<i32> {
    let cfg = args.mode.config()?;
    let spec = cfg.spec();
    let text = fs::read_to_string(&args.input)?;
    let pairs = parse_pairs(&text)?;
    let (acc, mut lanes) = dot_chain(&pairs, &cfg);
    lanes.reverse();
    match args.format {
        OutputFormat::Json => {
            let doc = json!({
                "version": REPORT_VERSION,
                "mode": cfg.mode,
                "guard_bits": cfg.guard_bits,
                "relu": cfg.relu,
                "terms": pairs.len(),
                "bits": format!("0x{acc:02X}"),
                "lanes": lanes.iter().map(|l| json!({
                    "lane": l.lane,
                    "result": lane_json(l.lane, l.result, None, spec),
                    "oracle": lane_json(l.lane, l.oracle, None, spec),
                    "ulp": l.ulp,
                })).collect::<Vec<_>>(),
            });
            writeln!(out, "{doc}")?;
        }
        _ => {
            writeln!(out, "terms={} result=0x{acc:02X}", pairs.len())?;
            for l in &lanes {
                let ulp = l
                    .ulp
                    .map_or_else(|| "nan-mismatch".to_string(), |u| u.to_string());
                writeln!(
                    out,
                    "lane{} result={} ({}) oracle={} ({}) ulp={ulp}",
                    l.lane,
                    spec.hex(l.result),
                    show_value(l.result, spec),
                    spec.hex(l.oracle),
                    show_value(l.oracle, spec),
                )?;
            }
        }
    }
    Ok(0)
}

/// Random operand stream for throughput runs.
pub fn random_stream(length: u64, seed: u64, mode: MacMode) -> Vec<Operands> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..length)
        .map(|_| Operands {
            a: mode.word(rng.random()),
            b: mode.word(rng.random()),
            c: mode.word(rng.random()),
        })
        .collect()
}

pub fn pipe_report(
    length: u64,
    seed: u64,
    cfg: &MacConfig,
    trace: bool,
) -> (ThroughputReport, Pipeline) {
    let inputs = random_stream(length, seed, cfg.mode);
    let mut p = Pipeline::new(*cfg).with_trace(trace);
    let report = p.run(&inputs);
    (report, p)
}

pub fn cmd_pipe(args: &PipeArgs, out: &mut dyn Write) -> Result<i32> {
    let cfg = args.mode.config()?;
    let want_trace = args.trace_csv.is_some() || args.trace_jsonl.is_some();
    let (report, p) = pipe_report(args.length, args.seed, &cfg, want_trace);
    if let Some(path) = &args.trace_csv {
        write_trace_csv(p.trace(), fs::File::create(path)?)?;
    }
    if let Some(path) = &args.trace_jsonl {
        write_trace_jsonl(p.trace(), std::io::BufWriter::new(fs::File::create(path)?))?;
    }
    let gflops = args.freq.map(|f| report.gflops(f));
    match args.format {
        OutputFormat::Json => {
            let doc = json!({
                "version": REPORT_VERSION,
                "mode": cfg.mode,
                "report": report,
                "flops_per_cycle": report.flops_per_cycle_f64(),
                "freq_ghz": args.freq,
                "gflops": gflops,
            });
            writeln!(out, "{doc}")?;
        }
        _ => {
            writeln!(
                out,
                "mode={} cycles={} macs={} lanes={} flops={} flops/cycle={:.3}",
                cfg.mode,
                report.cycles,
                report.macs_retired,
                report.lanes,
                report.flops,
                report.flops_per_cycle_f64()
            )?;
            if let (Some(f), Some(g)) = (args.freq, gflops) {
                writeln!(out, "gflops@{f}GHz={g:.3}")?;
            }
        }
    }
    Ok(0)
}

fn binary(bits: u8, spec: &FormatSpec) -> String {
    format!("0b{:0width$b}", bits, width = spec.total_bits as usize)
}

pub fn cmd_formats(args: &FormatsArgs, out: &mut dyn Write) -> Result<i32> {
    let spec = args.name.spec();
    let rows = value_table::<f64>(args.name);
    match args.format {
        OutputFormat::Text => {
            writeln!(
                out,
                "# {} bias={} exp_bits={} man_bits={} inf={} nan={}",
                args.name, spec.bias, spec.exp_bits, spec.man_bits, spec.has_infinity, spec.has_nan
            )?;
            for r in &rows {
                let v = r.value.expect("f64 holds every class");
                writeln!(
                    out,
                    "{:<5} {:<11} {:<10} {:?}",
                    spec.hex(r.bits),
                    binary(r.bits, spec),
                    format!("{:?}", r.class),
                    v
                )?;
            }
        }
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(&mut *out);
            w.write_record(["version", "format", "hex", "binary", "class", "value"])?;
            for r in &rows {
                w.write_record([
                    REPORT_VERSION.to_string(),
                    args.name.to_string(),
                    spec.hex(r.bits),
                    binary(r.bits, spec),
                    format!("{:?}", r.class),
                    format!("{:?}", r.value.expect("f64 holds every class")),
                ])?;
            }
            w.flush()?;
        }
        OutputFormat::Json => {
            for r in &rows {
                let mut v = lane_json(0, r.bits, None, spec);
                let obj = v.as_object_mut().expect("object");
                obj.remove("lane");
                obj.insert("version".into(), json!(REPORT_VERSION));
                obj.insert("format".into(), json!(args.name));
                obj.insert("binary".into(), json!(binary(r.bits, spec)));
                obj.insert("class".into(), json!(r.class));
                writeln!(out, "{v}")?;
            }
        }
    }
    Ok(0)
}
