//! Command-line front end. [`run`] parses arguments, executes one command and
//! returns the process exit code:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | usage error (bad flags or flag values) |
//! | 2 | data error (unreadable, malformed or inconsistent inputs) |
//! | 3 | internal invariant violation, or a failed calibration bound |

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::dataset::{read_fvecs, read_ivecs, write_fvecs, write_ivecs, VectorSet};
use crate::error::Error;
use crate::estimator::Kernel;
use crate::eval::{self, ErrorMethod, EvalReport, SynthParams};
use crate::ivf::{BuildParams, IvfIndex, SearchParams};
use crate::quantizer::{DEFAULT_EPSILON0, MAX_BITS};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "xrbq", version, about = "Multi-bit vector quantization and IVF search")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Cluster, quantize and save an index.
    Build(BuildArgs),
    /// Search an index and write the result ids.
    Search(SearchArgs),
    /// Exact nearest neighbors by brute force.
    Gt(GtArgs),
    /// Recall, distance ratio and QPS over an nprobe sweep.
    Eval(EvalArgs),
    /// Relative error of squared-distance estimates.
    EvalError(EvalErrorArgs),
    /// Measure the 99.9% inner-product error quantile per bit width.
    Calibrate(CalibrateArgs),
    /// Generate Gaussian-blob data (and optionally queries).
    Synth(SynthArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum, PartialEq, Eq)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, ValueEnum, PartialEq, Eq)]
enum KernelArg {
    Exact,
    Table,
}

impl From<KernelArg> for Kernel {
    fn from(k: KernelArg) -> Self {
        match k {
            KernelArg::Exact => Kernel::Exact,
            KernelArg::Table => Kernel::Table,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum, PartialEq, Eq)]
enum MethodArg {
    Xrabitq,
    XrabitqPaddedReference,
    Sq,
    Lvq,
}

impl From<MethodArg> for ErrorMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Xrabitq => ErrorMethod::Xrabitq,
            MethodArg::XrabitqPaddedReference => ErrorMethod::XrabitqPaddedReference,
            MethodArg::Sq => ErrorMethod::Sq,
            MethodArg::Lvq => ErrorMethod::Lvq,
        }
    }
}

#[derive(Args, Debug)]
struct BuildArgs {
    #[arg(long)]
    data: PathBuf,
    /// Number of clusters; defaults to round(sqrt(N)), or 4096 from a million vectors.
    #[arg(long)]
    clusters: Option<usize>,
    #[arg(long, default_value_t = 5)]
    bits: u8,
    #[arg(long, default_value_t = DEFAULT_EPSILON0)]
    eps0: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    kmeans_iters: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SearchArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 16)]
    nprobe: usize,
    /// Overrides the index's pruning multiplier; `inf` disables pruning.
    #[arg(long)]
    eps0: Option<f64>,
    #[arg(long, value_enum, default_value_t = KernelArg::Exact)]
    kernel: KernelArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct GtArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    #[arg(long, default_value_t = 100)]
    k: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Comma-separated nprobe values.
    #[arg(long, value_delimiter = ',', default_value = "16")]
    nprobe_sweep: Vec<usize>,
    /// Raw data (row i = id i); enables the average distance ratio.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    eps0: Option<f64>,
    #[arg(long, value_enum, default_value_t = KernelArg::Exact)]
    kernel: KernelArg,
    /// Run queries on several threads; QPS is then not reported.
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Args, Debug)]
struct EvalErrorArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    #[arg(long, value_enum)]
    method: MethodArg,
    /// One width, a comma list, or an inclusive range such as `1..8`.
    #[arg(long, default_value = "4")]
    bits: String,
    #[arg(long, default_value_t = eval::MAX_ERROR_PAIRS)]
    max_pairs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    #[arg(long)]
    dim: usize,
    #[arg(long, default_value = "1..8")]
    bits: String,
    #[arg(long, default_value_t = 100_000)]
    pairs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    dim: usize,
    #[arg(long, default_value_t = 10)]
    clusters: usize,
    #[arg(long, default_value_t = 2.0)]
    sep: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also write this many queries from the same blobs.
    #[arg(long, requires = "queries_out")]
    queries: Option<usize>,
    #[arg(long)]
    queries_out: Option<PathBuf>,
}

/// Failure of one command, already classified by exit code.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: EXIT_USAGE, message: message.into() }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Internal(_) | Error::InvalidState(_) => EXIT_INTERNAL,
            _ => EXIT_DATA,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

type CmdResult = std::result::Result<(), Failure>;

/// Parses `1..8`, `2,3,5` or `4`.
fn parse_bits(spec: &str) -> std::result::Result<Vec<u8>, Failure> {
    let bad = || usage(format!("invalid bit list {spec:?}"));
    let out: Vec<u8> = if let Some((a, b)) = spec.split_once("..") {
        let (a, b): (u8, u8) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        if a > b {
            return Err(bad());
        }
        (a..=b).collect()
    } else {
        spec.split(',').map(|s| s.trim().parse().map_err(|_| bad())).collect::<std::result::Result<_, _>>()?
    };
    if out.is_empty() || out.iter().any(|&b| !(1..=MAX_BITS).contains(&b)) {
        return Err(usage(format!("bit widths must lie in 1..={MAX_BITS}, got {spec:?}")));
    }
    Ok(out)
}

fn check_bits(bits: u8) -> CmdResult {
    if !(1..=MAX_BITS).contains(&bits) {
        return Err(usage(format!("--bits must lie in 1..={MAX_BITS}")));
    }
    Ok(())
}

fn check_positive(name: &str, v: usize) -> CmdResult {
    if v == 0 {
        return Err(usage(format!("--{name} must be at least 1")));
    }
    Ok(())
}

fn check_eps0(eps0: Option<f64>) -> CmdResult {
    match eps0 {
        Some(e) if e.is_nan() || e <= 0.0 => Err(usage("--eps0 must be positive")),
        _ => Ok(()),
    }
}

fn load_vectors(path: &PathBuf, what: &str) -> std::result::Result<VectorSet, Failure> {
    let set = read_fvecs(path).map_err(|e| Failure::from(e).with_context(&format!("{what} {}", path.display())))?;
    set.require_non_empty(what)?;
    Ok(set)
}

fn load_gt(path: &PathBuf) -> std::result::Result<Vec<Vec<u64>>, Failure> {
    read_ivecs(path)?
        .into_iter()
        .map(|row| {
            row.into_iter()
                .map(|id| {
                    u64::try_from(id).map_err(|_| Failure {
                        code: EXIT_DATA,
                        message: format!("negative id {id} in {}", path.display()),
                    })
                })
                .collect()
        })
        .collect()
}

fn to_ivecs(lists: &[Vec<u64>]) -> std::result::Result<Vec<Vec<i32>>, Failure> {
    lists
        .iter()
        .map(|l| {
            l.iter()
                .map(|&id| {
                    i32::try_from(id).map_err(|_| Failure {
                        code: EXIT_DATA,
                        message: format!("id {id} does not fit an ivecs entry"),
                    })
                })
                .collect()
        })
        .collect()
}

impl Failure {
    fn with_context(mut self, ctx: &str) -> Self {
        self.message = format!("{ctx}: {}", self.message);
        self
    }
}

fn emit_json<T: Serialize>(out: &mut dyn Write, value: &T) -> CmdResult {
    let text =
        serde_json::to_string_pretty(value).map_err(|e| Failure { code: EXIT_INTERNAL, message: e.to_string() })?;
    writeln!(out, "{text}")?;
    Ok(())
}

fn build(a: BuildArgs, out: &mut dyn Write) -> CmdResult {
    check_bits(a.bits)?;
    check_eps0(Some(a.eps0))?;
    if a.clusters == Some(0) {
        return Err(usage("--clusters must be at least 1"));
    }
    let data = load_vectors(&a.data, "data")?;
    if let Some(k) = a.clusters {
        if k > data.len() {
            return Err(usage(format!("--clusters {k} exceeds the {} data vectors", data.len())));
        }
    }
    let params = BuildParams {
        clusters: a.clusters,
        bits: a.bits,
        epsilon0: a.eps0,
        seed: a.seed,
        kmeans_iters: a.kmeans_iters,
    };
    let index = IvfIndex::build(&data, None, &params)?;
    index.save(&a.out)?;
    writeln!(
        out,
        "built {} vectors, {} clusters, {} bits, dim {} -> {}",
        index.len(),
        index.num_clusters(),
        index.bits(),
        index.dim(),
        a.out.display()
    )?;
    Ok(())
}

fn search_params(
    k: usize,
    nprobe: usize,
    eps0: Option<f64>,
    kernel: KernelArg,
) -> std::result::Result<SearchParams, Failure> {
    check_positive("k", k)?;
    check_positive("nprobe", nprobe)?;
    check_eps0(eps0)?;
    let mut p = SearchParams::new(k, nprobe).with_kernel(kernel.into());
    p.epsilon0_override = eps0;
    Ok(p)
}

fn search(a: SearchArgs, out: &mut dyn Write) -> CmdResult {
    let params = search_params(a.k, a.nprobe, a.eps0, a.kernel)?;
    let index = IvfIndex::load(&a.index)?;
    let queries = load_vectors(&a.queries, "queries")?;
    let mut lists = Vec::with_capacity(queries.len());
    for q in queries.rows() {
        lists.push(index.search(q, &params)?.ids);
    }
    write_ivecs(&a.out, &to_ivecs(&lists)?)?;
    writeln!(out, "searched {} queries -> {}", queries.len(), a.out.display())?;
    Ok(())
}

fn gt(a: GtArgs, out: &mut dyn Write) -> CmdResult {
    check_positive("k", a.k)?;
    let data = load_vectors(&a.data, "data")?;
    let queries = load_vectors(&a.queries, "queries")?;
    let lists = eval::ground_truth(&data, &queries, a.k)?;
    write_ivecs(&a.out, &to_ivecs(&lists)?)?;
    writeln!(out, "ground truth for {} queries (k = {}) -> {}", queries.len(), a.k.min(data.len()), a.out.display())?;
    Ok(())
}

fn eval_cmd(a: EvalArgs, out: &mut dyn Write) -> CmdResult {
    check_positive("threads", a.threads)?;
    if a.nprobe_sweep.is_empty() {
        return Err(usage("--nprobe-sweep needs at least one value"));
    }
    let params: Vec<SearchParams> = a
        .nprobe_sweep
        .iter()
        .map(|&np| search_params(a.k, np, a.eps0, a.kernel))
        .collect::<std::result::Result<_, _>>()?;
    let data = a.data.as_ref().map(|p| load_vectors(p, "data")).transpose()?;
    let index = IvfIndex::load(&a.index)?;
    let queries = load_vectors(&a.queries, "queries")?;
    let truth = load_gt(&a.gt)?;
    let mut reports: Vec<EvalReport> = Vec::new();
    for p in &params {
        reports.push(eval::eval_search_threads(&index, &queries, &truth, p, data.as_ref(), a.threads)?);
    }
    match a.format {
        Format::Csv => {
            writeln!(out, "{}", EvalReport::CSV_HEADER)?;
            for r in &reports {
                writeln!(out, "{}", r.csv_row())?;
            }
        }
        Format::Json => emit_json(out, &reports)?,
    }
    Ok(())
}

fn eval_error_cmd(a: EvalErrorArgs, out: &mut dyn Write) -> CmdResult {
    let bits = parse_bits(&a.bits)?;
    check_positive("max-pairs", a.max_pairs)?;
    let data = load_vectors(&a.data, "data")?;
    let queries = load_vectors(&a.queries, "queries")?;
    let mut rows = Vec::new();
    for b in bits {
        rows.push(eval::eval_error(&data, &queries, a.method.into(), b, a.max_pairs, a.seed)?);
    }
    match a.format {
        Format::Csv => {
            writeln!(out, "{}", eval::ErrorStats::CSV_HEADER)?;
            for r in &rows {
                writeln!(out, "{}", r.csv_row())?;
            }
        }
        Format::Json => emit_json(out, &rows)?,
    }
    Ok(())
}

fn calibrate_cmd(a: CalibrateArgs, out: &mut dyn Write) -> CmdResult {
    let bits = parse_bits(&a.bits)?;
    check_positive("dim", a.dim)?;
    if a.pairs < 10_000 {
        return Err(usage("--pairs must be at least 10000"));
    }
    let table = eval::calibrate(a.dim, &bits, a.pairs, a.seed)?;
    match a.format {
        Format::Csv => {
            writeln!(out, "{}", eval::Calibration::CSV_HEADER)?;
            for row in table.csv_rows() {
                writeln!(out, "{row}")?;
            }
        }
        Format::Json => emit_json(out, &table)?,
    }
    if !table.all_within_bound() {
        let over: Vec<String> = table.rows.iter().filter(|r| !r.within_bound).map(|r| r.bits.to_string()).collect();
        return Err(Failure {
            code: EXIT_INTERNAL,
            message: format!(
                "99.9% quantile exceeds {}*2^-B/sqrt(D) for B = {} (fitted c = {:.3})",
                eval::C_EPSILON,
                over.join(","),
                table.c_eps
            ),
        });
    }
    Ok(())
}

fn synth(a: SynthArgs, out: &mut dyn Write) -> CmdResult {
    check_positive("n", a.n)?;
    check_positive("dim", a.dim)?;
    check_positive("clusters", a.clusters)?;
    if !(a.sep >= 0.0 && a.sep.is_finite()) {
        return Err(usage("--sep must be finite and non-negative"));
    }
    let p = SynthParams { n: a.n, dim: a.dim, clusters: a.clusters, separation: a.sep, seed: a.seed };
    let s = eval::synth_blobs(&p)?;
    write_fvecs(&a.out, &s.data)?;
    writeln!(out, "wrote {} x {} -> {}", a.n, a.dim, a.out.display())?;
    if let (Some(nq), Some(path)) = (a.queries, a.queries_out.as_ref()) {
        check_positive("queries", nq)?;
        write_fvecs(path, &eval::synth_queries(&p, nq)?)?;
        writeln!(out, "wrote {nq} queries -> {}", path.display())?;
    }
    Ok(())
}

/// Runs one command. Normal output goes to `out`, diagnostics to stderr.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Build(a) => build(a, out),
        Command::Search(a) => search(a, out),
        Command::Gt(a) => gt(a, out),
        Command::Eval(a) => eval_cmd(a, out),
        Command::EvalError(a) => eval_error_cmd(a, out),
        Command::Calibrate(a) => calibrate_cmd(a, out),
        Command::Synth(a) => synth(a, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}
