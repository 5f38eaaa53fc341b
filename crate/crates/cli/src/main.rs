mod manifest;
mod output;

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::{json, Value};
use windiff::bench::{
    summarize_cell, synthetic_run, unibench_rows, unibench_series, SyntheticBenchConfig, UniBenchConfig,
};
use windiff::calibration::{
    default_window_sizes, representative_band, simulate_null_clouds, CalibrationSet, CalibrationTable, Generator,
    SimConfig, DEFAULT_PAIRS,
};
use windiff::conformal::{ConformalConfig, MartingaleConfig, StrangenessKind};
use windiff::datagen::{
    gen_synthetic, gen_unibench, BaseLaw, ChangeKind, SyntheticKind, SyntheticPlan, UniBenchPlan,
};
use windiff::detectors::{default_block_measures, scan, MethodKind, QuorumConfig, ScanMethod, ScanPlan};
use windiff::measures::{MeasureId, MeasureSpec};
use windiff::mmd::{mmd_l2, mmd_u2, Bandwidth, KernelConfig, Significance};
use windiff::ncd::{ncd_window_test, NcdConfig};
use windiff::ordering::{ordered_ecdfs, OrderMethod, Origin};
use windiff::series::{parse_series, CsvOptions, HeaderMode, Series, Window};

use manifest::RunManifest;
use output::{sink, write_table, Format};

/// Bad invocation detected after argument parsing.
#[derive(Debug)]
struct UsageError(String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(UsageError(msg.into()).into())
}

#[derive(Parser, Debug)]
#[command(name = "windiff", version, about = "Window-based change detection for multivariate series")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Global {
    /// Base seed for every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Output file; a `.manifest.json` sidecar is written next to it.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate null distributions and write calibration tables.
    Calibrate(CalibrateArgs),
    /// Generate a synthetic series.
    Gen(GenArgs),
    /// Compare a moving window against a fixed reference.
    Scan(ScanArgs),
    /// Compression distance test between two windows.
    Ncd(PairArgs),
    /// Kernel two-sample test between two windows.
    Mmd(MmdArgs),
    /// Order two windows and print the bins.
    Order(OrderArgs),
    /// Block-structured synthetic benchmark.
    BenchSynth(BenchSynthArgs),
    /// Single-dimension window matching benchmark.
    BenchUnidim(BenchUnidimArgs),
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    /// Directory receiving `<measure>.calib.json` and `manifest.json`.
    #[arg(long)]
    out_dir: PathBuf,
    /// Measures to calibrate; all calibratable ones by default.
    #[arg(long, value_delimiter = ',')]
    measures: Vec<MeasureId>,
    /// Pairs simulated per window size.
    #[arg(long, default_value_t = DEFAULT_PAIRS)]
    pairs: usize,
    /// Window sizes; 100 to 2000 in steps of 100 by default.
    #[arg(long, value_delimiter = ',')]
    ns: Vec<usize>,
    #[arg(long, value_enum, default_value_t = GeneratorArg::Normal)]
    generator: GeneratorArg,
    #[arg(long, default_value_t = 1)]
    repetitions: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GeneratorArg {
    Normal,
    Uniform,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long, value_enum)]
    kind: GenKind,
    #[arg(long, default_value_t = 1)]
    d: usize,
    #[arg(long, default_value_t = 21)]
    blocks: usize,
    #[arg(long, default_value_t = 250)]
    block_len: usize,
    /// Annotation JSON with segment boundaries and parameters.
    #[arg(long)]
    annot: Option<PathBuf>,
    /// Windows in a benchmark series; drawn at random when omitted.
    #[arg(long)]
    windows: Option<usize>,
    #[arg(long)]
    window_len: Option<usize>,
    /// 1-based window holding the copy of the reference.
    #[arg(long)]
    embed: Option<usize>,
    #[arg(long, value_enum, default_value_t = BaseArg::Normal)]
    base: BaseArg,
    #[arg(long, value_enum, default_value_t = ChangeArg::Average)]
    change: ChangeArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GenKind {
    Average,
    Variance,
    Mixture,
    Unibench,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BaseArg {
    Normal,
    Uniform,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ChangeArg {
    Average,
    Variance,
    Both,
}

#[derive(Args, Debug, Clone)]
struct InputArgs {
    /// Series CSV: `epoch[,timestamp],v1,...,vd`.
    #[arg(long)]
    input: PathBuf,
    /// The second column is a timestamp; detected from a `timestamp` header.
    #[arg(long)]
    timestamp: bool,
    #[arg(long, value_enum, default_value_t = HeaderArg::Auto)]
    header: HeaderArg,
    /// Field delimiter of the input.
    #[arg(long, default_value_t = ',')]
    delimiter: char,
    /// Sort rows by epoch instead of rejecting out-of-order input.
    #[arg(long)]
    reorder: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum HeaderArg {
    Auto,
    Yes,
    No,
}

#[derive(Args, Debug, Clone)]
struct QuorumArgs {
    /// Voting measures; the ten block measures by default.
    #[arg(long, value_delimiter = ',')]
    measures: Vec<MeasureId>,
    /// Fraction of measures that must reject.
    #[arg(long, default_value_t = 0.2)]
    quorum: f64,
    /// Directory holding the calibration tables.
    #[arg(long)]
    calib_dir: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct TestArgs {
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Bootstrap runs of the compression test.
    #[arg(long, default_value_t = 100)]
    bootstrap: usize,
    /// DEFLATE level.
    #[arg(long, default_value_t = 6)]
    level: u32,
    /// Permutations of the kernel test.
    #[arg(long, default_value_t = 500)]
    permutations: usize,
    #[arg(long, value_enum, default_value_t = SignificanceArg::Permutation)]
    significance: SignificanceArg,
    /// Kernel width sigma squared; median heuristic when omitted.
    #[arg(long)]
    bandwidth: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SignificanceArg {
    Permutation,
    Analytic,
}

#[derive(Args, Debug)]
struct ScanArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    method: MethodKind,
    /// Reference and moving window length.
    #[arg(long, default_value_t = 250)]
    window: usize,
    #[arg(long, default_value_t = 0)]
    reference_start: usize,
    /// Distance between window positions; the window length by default.
    #[arg(long)]
    step: Option<usize>,
    /// First moving window start; one step past the reference by default.
    #[arg(long)]
    first_start: Option<usize>,
    #[command(flatten)]
    quorum: QuorumArgs,
    #[command(flatten)]
    test: TestArgs,
    #[arg(long, value_enum, default_value_t = StrangenessArg::Nn)]
    strangeness: StrangenessArg,
    #[arg(long, default_value_t = 20.0)]
    lambda: f64,
    #[arg(long, default_value_t = 0.95)]
    epsilon: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StrangenessArg {
    Nn,
    Avg,
}

#[derive(Args, Debug)]
struct PairArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Reference window as `START:LEN`.
    #[arg(long, value_parser = parse_window)]
    reference: Window,
    /// Compared window as `START:LEN`.
    #[arg(long, value_parser = parse_window)]
    window: Window,
    #[command(flatten)]
    test: TestArgs,
}

#[derive(Args, Debug)]
struct MmdArgs {
    #[command(flatten)]
    pair: PairArgs,
    #[arg(long, value_enum, default_value_t = EstimatorArg::U2)]
    estimator: EstimatorArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EstimatorArg {
    U2,
    L2,
}

#[derive(Args, Debug)]
struct OrderArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_parser = parse_window)]
    reference: Window,
    #[arg(long, value_parser = parse_window)]
    window: Window,
    #[arg(long, value_enum, default_value_t = OrderArg::Poset)]
    method: OrderArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OrderArg {
    Poset,
    Mst,
}

#[derive(Args, Debug)]
struct BenchSynthArgs {
    #[arg(long, value_delimiter = ',', default_value = "poset,mst,ncd,mmd_u2,mmd_l2,martingale")]
    methods: Vec<MethodKind>,
    #[arg(long, value_delimiter = ',', default_value = "average,variance,mixture")]
    kinds: Vec<SyntheticKind>,
    #[arg(long, value_delimiter = ',', default_value = "10")]
    dims: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    runs: usize,
    #[arg(long, default_value_t = 21)]
    blocks: usize,
    #[arg(long, default_value_t = 250)]
    block_len: usize,
    #[command(flatten)]
    quorum: QuorumArgs,
    #[command(flatten)]
    test: TestArgs,
    /// Per-run table, next to the summary.
    #[arg(long)]
    runs_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchUnidimArgs {
    #[arg(long, default_value_t = 1000)]
    series: usize,
    #[arg(long, value_enum, default_value_t = BaseArg::Normal)]
    base: BaseArg,
    #[arg(long, value_enum, default_value_t = ChangeArg::Average)]
    change: ChangeArg,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 100)]
    step: usize,
    #[arg(long)]
    calib_dir: PathBuf,
}

fn parse_window(s: &str) -> std::result::Result<Window, String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("`{s}` is not START:LEN"))?;
    let start = a.trim().parse().map_err(|_| format!("bad window start `{a}`"))?;
    let len = b.trim().parse().map_err(|_| format!("bad window length `{b}`"))?;
    Ok(Window::new(start, len))
}

impl From<GeneratorArg> for Generator {
    fn from(g: GeneratorArg) -> Self {
        match g {
            GeneratorArg::Normal => Generator::Normal,
            GeneratorArg::Uniform => Generator::Uniform,
        }
    }
}

impl From<BaseArg> for BaseLaw {
    fn from(b: BaseArg) -> Self {
        match b {
            BaseArg::Normal => BaseLaw::Normal,
            BaseArg::Uniform => BaseLaw::Uniform,
        }
    }
}

impl From<ChangeArg> for ChangeKind {
    fn from(c: ChangeArg) -> Self {
        match c {
            ChangeArg::Average => ChangeKind::Average,
            ChangeArg::Variance => ChangeKind::Variance,
            ChangeArg::Both => ChangeKind::Both,
        }
    }
}

impl From<StrangenessArg> for StrangenessKind {
    fn from(s: StrangenessArg) -> Self {
        match s {
            StrangenessArg::Nn => StrangenessKind::NearestNeighbor,
            StrangenessArg::Avg => StrangenessKind::AverageDistance,
        }
    }
}

impl InputArgs {
    fn load(&self) -> Result<Series> {
        let text = fs::read_to_string(&self.input)
            .with_context(|| format!("cannot read {}", self.input.display()))?;
        if !self.delimiter.is_ascii() {
            return usage("the delimiter must be an ASCII character");
        }
        let delimiter = self.delimiter as u8;
        let header_ts = text
            .lines()
            .next()
            .and_then(|l| l.split(self.delimiter).nth(1))
            .is_some_and(|f| f.trim().eq_ignore_ascii_case("timestamp"));
        let opts = CsvOptions {
            delimiter,
            header: match self.header {
                HeaderArg::Auto => HeaderMode::Auto,
                HeaderArg::Yes => HeaderMode::Present,
                HeaderArg::No => HeaderMode::Absent,
            },
            has_timestamp: self.timestamp || header_ts,
            reorder_by_epoch: self.reorder,
        };
        parse_series(text.as_bytes(), &opts).with_context(|| format!("while reading {}", self.input.display()))
    }
}

impl TestArgs {
    fn ncd(&self, seed: u64) -> NcdConfig {
        NcdConfig {
            level: self.level,
            bootstrap_runs: self.bootstrap,
            seed,
            ..NcdConfig::default()
        }
    }

    fn kernel(&self, seed: u64) -> KernelConfig {
        KernelConfig {
            bandwidth: self.bandwidth.map_or(Bandwidth::Auto, Bandwidth::Fixed),
            significance: match self.significance {
                SignificanceArg::Permutation => Significance::Permutation,
                SignificanceArg::Analytic => Significance::AnalyticLinear,
            },
            permutations: self.permutations,
            seed,
        }
    }
}

impl QuorumArgs {
    fn config(&self, alpha: f64) -> Result<QuorumConfig> {
        let measures = if self.measures.is_empty() {
            default_block_measures()
        } else {
            self.measures.clone()
        };
        Ok(QuorumConfig::new(measures, self.quorum, alpha)?)
    }

    fn tables(&self, q: &QuorumConfig) -> Result<CalibrationSet> {
        let Some(dir) = &self.calib_dir else {
            return usage("--calib-dir is required for quorum methods");
        };
        Ok(CalibrationSet::load_dir(dir, &q.measures)?)
    }
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    if jobs == 0 {
        return usage("--jobs must be at least 1");
    }
    Ok(rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?)
}

/// Write the table, plus a manifest sidecar when writing to a file.
fn emit(global: &Global, manifest: RunManifest, columns: &[&str], records: &[Value]) -> Result<()> {
    write_table(sink(global.out.as_deref())?, global.format, columns, records)?;
    if let Some(out) = &global.out {
        let mut manifest = manifest;
        manifest.add_output(out)?;
        manifest.write(&RunManifest::path_for(out))?;
    }
    Ok(())
}

fn cmd_calibrate(g: &Global, a: &CalibrateArgs) -> Result<()> {
    let measures = if a.measures.is_empty() {
        MeasureId::calibratable()
    } else {
        a.measures.clone()
    };
    if let Some(m) = measures.iter().find(|m| !m.is_calibratable()) {
        return usage(format!("measure `{m}` cannot be calibrated"));
    }
    let ns = if a.ns.is_empty() { default_window_sizes() } else { a.ns.clone() };
    let mut cfg = SimConfig::new(ns, a.pairs, a.generator.into(), g.seed);
    cfg.repetitions = a.repetitions;
    let chunks: Vec<Vec<MeasureSpec>> = (0..g.jobs.min(measures.len()).max(1))
        .map(|k| {
            measures
                .iter()
                .skip(k)
                .step_by(g.jobs.max(1))
                .map(|&id| MeasureSpec::new(id))
                .collect()
        })
        .collect();
    let clouds = pool(g.jobs)?.install(|| {
        chunks
            .par_iter()
            .map(|specs| simulate_null_clouds(specs, &cfg))
            .collect::<windiff::Result<Vec<_>>>()
    })?;
    let mut clouds: Vec<_> = clouds.into_iter().flatten().collect();
    clouds.sort_by_key(|c| measures.iter().position(|&m| m == c.measure));

    fs::create_dir_all(&a.out_dir).with_context(|| format!("cannot create {}", a.out_dir.display()))?;
    let mut manifest = RunManifest::new(g.seed, serde_json::to_value(&cfg)?);
    let mut rows = Vec::new();
    for cloud in &clouds {
        let table = representative_band(cloud)?;
        let path = a.out_dir.join(CalibrationTable::file_name(cloud.measure));
        table.save(&path)?;
        let digest = manifest::file_digest(&path)?;
        manifest.tables.insert(cloud.measure.to_string(), digest.clone());
        manifest.add_output(&path)?;
        for run in &cloud.runs {
            rows.push(json!({
                "measure": cloud.measure,
                "n": run.n,
                "repetition": run.repetition,
                "mean_raw": run.mean_raw,
                "knots": table.grid.len(),
                "sha256": digest,
            }));
        }
    }
    manifest.write(&a.out_dir.join("manifest.json"))?;
    emit(g, manifest, &["measure", "n", "repetition", "mean_raw", "knots", "sha256"], &rows)
}

fn cmd_gen(g: &Global, a: &GenArgs) -> Result<()> {
    let (series, annotations, config) = if a.kind == GenKind::Unibench {
        let mut plan = UniBenchPlan::random(a.base.into(), a.change.into(), g.seed);
        if let Some(w) = a.windows {
            plan.windows = w;
            plan.embed_position = plan.embed_position.min(w);
        }
        if let Some(t) = a.window_len {
            plan.window_len = t;
        }
        if let Some(e) = a.embed {
            plan.embed_position = e;
        }
        let (s, ann) = gen_unibench(&plan)?;
        (s, ann, serde_json::to_value(&plan)?)
    } else {
        let kind = match a.kind {
            GenKind::Average => SyntheticKind::Average,
            GenKind::Variance => SyntheticKind::Variance,
            _ => SyntheticKind::Mixture,
        };
        let plan = SyntheticPlan::with_layout(kind, a.blocks, a.block_len, a.d, g.seed);
        let (s, ann) = gen_synthetic(&plan)?;
        (s, ann, serde_json::to_value(&plan)?)
    };
    let mut out = sink(g.out.as_deref())?;
    match g.format {
        Format::Json => {
            for p in series.points() {
                serde_json::to_writer(&mut out, p)?;
                out.write_all(b"\n")?;
            }
            out.flush()?;
        }
        f => series.write_csv(&mut out, f.delimiter())?,
    }
    drop(out);
    let mut manifest = RunManifest::new(g.seed, config);
    if let Some(path) = &a.annot {
        fs::write(path, annotations.to_json()? + "\n").with_context(|| format!("cannot write {}", path.display()))?;
        manifest.add_output(path)?;
    }
    if let Some(out) = &g.out {
        manifest.add_output(out)?;
        manifest.write(&RunManifest::path_for(out))?;
    }
    Ok(())
}


fn cmd_scan(g: &Global, a: &ScanArgs) -> Result<()> {
    let series = a.input.load()?;
    let alpha = a.test.alpha;
    let mut tables = CalibrationSet::new();
    let method = match a.method {
        MethodKind::Poset | MethodKind::Mst => {
            let q = a.quorum.config(alpha)?;
            tables = a.quorum.tables(&q)?;
            if a.method == MethodKind::Poset {
                ScanMethod::Poset(q)
            } else {
                ScanMethod::Mst(q)
            }
        }
        MethodKind::Ncd => ScanMethod::Ncd {
            config: a.test.ncd(g.seed),
            alpha,
        },
        MethodKind::MmdU2 => ScanMethod::MmdU2 {
            config: a.test.kernel(g.seed),
            alpha,
        },
        MethodKind::MmdL2 => ScanMethod::MmdL2 {
            config: a.test.kernel(g.seed),
            alpha,
        },
        MethodKind::Martingale => {
            let mut c = ConformalConfig::new(a.window, a.strangeness.into());
            c.martingale = MartingaleConfig {
                lambda: a.lambda,
                epsilon: a.epsilon,
                ..MartingaleConfig::default()
            };
            ScanMethod::Martingale(c)
        }
    };
    let mut plan = ScanPlan::new(
        Window::new(a.reference_start, a.window),
        a.step.unwrap_or(a.window),
        method,
    );
    plan.first_start = a.first_start;
    let records = scan(&series, &plan, &tables)?;
    let rows = records
        .iter()
        .map(|r| {
            let mut v = serde_json::to_value(r)?;
            if !r.measures.is_empty() {
                v["rejections"] = json!(r.measures.iter().filter(|o| o.reject == Some(true)).count());
            }
            if let Some(m) = &r.martingale {
                v["m"] = json!(m.m);
            }
            Ok(v)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut manifest = RunManifest::new(
        g.seed,
        json!({
            "method": a.method,
            "window": a.window,
            "reference_start": a.reference_start,
            "step": plan.step,
            "first_start": a.first_start,
            "alpha": alpha,
            "quorum": a.quorum.quorum,
            "input": a.input.input,
        }),
    );
    manifest.add_tables(&tables)?;
    emit(
        g,
        manifest,
        &["window_start", "position", "method", "raw", "normalized", "p_value", "verdict", "rejections", "m"],
        &rows,
    )
}

fn pair_windows<'a>(series: &'a Series, r: Window, w: Window) -> Result<(Vec<&'a [f64]>, Vec<&'a [f64]>)> {
    Ok((series.window_view(r)?, series.window_view(w)?))
}

fn cmd_ncd(g: &Global, a: &PairArgs) -> Result<()> {
    let series = a.input.load()?;
    let (r, w) = pair_windows(&series, a.reference, a.window)?;
    let res = ncd_window_test(&r, &w, &a.test.ncd(g.seed), a.test.alpha)?;
    let manifest = RunManifest::new(g.seed, json!({"reference": a.reference, "window": a.window, "input": a.input.input}));
    emit(g, manifest, &["ncd", "p_value", "reject", "codec"], &[serde_json::to_value(res)?])
}

fn cmd_mmd(g: &Global, a: &MmdArgs) -> Result<()> {
    let p = &a.pair;
    let series = p.input.load()?;
    let (r, w) = pair_windows(&series, p.reference, p.window)?;
    let cfg = p.test.kernel(g.seed);
    let res = match a.estimator {
        EstimatorArg::U2 => mmd_u2(&r, &w, &cfg, p.test.alpha)?,
        EstimatorArg::L2 => mmd_l2(&r, &w, &cfg, p.test.alpha)?,
    };
    let manifest = RunManifest::new(g.seed, json!({"reference": p.reference, "window": p.window, "input": p.input.input}));
    emit(
        g,
        manifest,
        &["estimator", "value", "variance_estimate", "sigma2", "p_value", "reject"],
        &[serde_json::to_value(res)?],
    )
}

fn cmd_order(g: &Global, a: &OrderArgs) -> Result<()> {
    let series = a.input.load()?;
    let (r, w) = pair_windows(&series, a.reference, a.window)?;
    let method = match a.method {
        OrderArg::Poset => OrderMethod::Poset,
        OrderArg::Mst => OrderMethod::Mst,
    };
    let (_, _, partition) = ordered_ecdfs(&r, &w, method)?;
    let mut rows = Vec::with_capacity(partition.points.len());
    for (b, bin) in partition.bins.iter().enumerate() {
        for &i in bin {
            let p = &partition.points[i];
            let start = match p.origin {
                Origin::R => a.reference.start,
                Origin::W => a.window.start,
            };
            rows.push(json!({
                "bin": b,
                "origin": format!("{:?}", p.origin),
                "index": start + p.index,
                "parallelism": partition.parallelism,
            }));
        }
    }
    let manifest = RunManifest::new(g.seed, json!({"method": method, "reference": a.reference, "window": a.window}));
    emit(g, manifest, &["bin", "origin", "index", "parallelism"], &rows)
}

fn cmd_bench_synth(g: &Global, a: &BenchSynthArgs) -> Result<()> {
    let quorum = a.quorum.config(a.test.alpha)?;
    let needs_tables = a.methods.iter().any(|m| matches!(m, MethodKind::Poset | MethodKind::Mst));
    let tables = if needs_tables {
        a.quorum.tables(&quorum)?
    } else {
        CalibrationSet::new()
    };
    let cfg = SyntheticBenchConfig {
        runs: a.runs,
        blocks: a.blocks,
        block_len: a.block_len,
        alpha: a.test.alpha,
        quorum,
        ncd: a.test.ncd(0),
        kernel: a.test.kernel(0),
        seed: g.seed,
        ..SyntheticBenchConfig::default()
    };
    let pool = pool(g.jobs)?;
    let mut cells = Vec::new();
    for &method in &a.methods {
        for &kind in &a.kinds {
            for &d in &a.dims {
                let runs = pool.install(|| {
                    (0..cfg.runs)
                        .into_par_iter()
                        .map(|r| synthetic_run(method, kind, d, r, &cfg, &tables))
                        .collect::<windiff::Result<Vec<_>>>()
                })?;
                cells.push(summarize_cell(method, kind, d, runs));
            }
        }
    }
    let summary: Vec<Value> = cells
        .iter()
        .map(|c| {
            json!({
                "method": c.method,
                "kind": c.kind,
                "d": c.d,
                "runs": c.runs.len(),
                "median_ratio": c.median_ratio,
                "rejections": c.rejections,
                "block2_same": c.block2_same,
            })
        })
        .collect();
    let mut manifest = RunManifest::new(g.seed, serde_json::to_value(&cfg)?);
    manifest.add_tables(&tables)?;
    if let Some(path) = &a.runs_out {
        let per_run: Vec<Value> = cells
            .iter()
            .flat_map(|c| {
                c.runs.iter().map(move |r| {
                    json!({
                        "method": c.method,
                        "kind": c.kind,
                        "d": c.d,
                        "run": r.run,
                        "block2_same": r.block2_same,
                        "earliest": r.earliest,
                        "ratio": r.ratio,
                    })
                })
            })
            .collect();
        write_table(
            sink(Some(path))?,
            g.format,
            &["method", "kind", "d", "run", "block2_same", "earliest", "ratio"],
            &per_run,
        )?;
        manifest.add_output(path)?;
    }
    emit(
        g,
        manifest,
        &["method", "kind", "d", "runs", "median_ratio", "rejections", "block2_same"],
        &summary,
    )
}

fn cmd_bench_unidim(g: &Global, a: &BenchUnidimArgs) -> Result<()> {
    let mut cfg = UniBenchConfig::new(a.series, a.base.into(), a.change.into(), g.seed);
    cfg.alpha = a.alpha;
    cfg.step = a.step;
    let tables = CalibrationSet::load_dir(&a.calib_dir, &windiff::bench::combined_measures())?;
    let counts = pool(g.jobs)?.install(|| {
        (0..cfg.series)
            .into_par_iter()
            .map(|i| unibench_series(&cfg, i, &tables))
            .collect::<windiff::Result<Vec<_>>>()
    })?;
    let rows: Vec<Value> = unibench_rows(&cfg, counts)
        .into_iter()
        .map(serde_json::to_value)
        .collect::<serde_json::Result<_>>()?;
    let mut manifest = RunManifest::new(g.seed, serde_json::to_value(&cfg)?);
    manifest.add_tables(&tables)?;
    emit(
        g,
        manifest,
        &["set", "disagreement", "matches", "found", "golden", "error_count"],
        &rows,
    )
}

fn run(cli: &Cli) -> Result<()> {
    let g = &cli.global;
    if g.jobs == 0 {
        return usage("--jobs must be at least 1");
    }
    match &cli.command {
        Command::Calibrate(a) => cmd_calibrate(g, a),
        Command::Gen(a) => cmd_gen(g, a),
        Command::Scan(a) => cmd_scan(g, a),
        Command::Ncd(a) => cmd_ncd(g, a),
        Command::Mmd(a) => cmd_mmd(g, a),
        Command::Order(a) => cmd_order(g, a),
        Command::BenchSynth(a) => cmd_bench_synth(g, a),
        Command::BenchUnidim(a) => cmd_bench_unidim(g, a),
    }
}

/// 2 for usage errors, 1 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return 2;
        }
        if let Some(windiff::Error::Argument(_)) = cause.downcast_ref::<windiff::Error>() {
            return 2;
        }
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
