//! Sweep orchestration: algorithms × similarity grid × repetitions, with
//! per-run metrics, per-point aggregates and CSV output.

use std::io::Write;
use std::time::Duration;

use rayon::prelude::*;
use xxhash_rust::xxh3::xxh3_64_with_seed;

use crate::baselines::{run_algorithm, Algorithm, BaselineResult};
use crate::error::{Error, Result};
use crate::protocol::{PreparedSet, ProtocolConfig};
use crate::workload::{generate_workload, WorkloadSpec};

/// Columns shared by every row, in output order.
pub const BASE_COLUMNS: [&str; 12] = [
    "algorithm", "n", "jaccard", "d", "rep", "metadata_bytes", "state_bytes", "total_bytes", "min_bytes", "overhead",
    "encode_ms", "decode_ms",
];

/// Extra columns, filled only in aggregate rows.
pub const STDDEV_COLUMNS: [&str; 6] = [
    "metric_stddev_metadata_bytes",
    "metric_stddev_state_bytes",
    "metric_stddev_total_bytes",
    "metric_stddev_overhead",
    "metric_stddev_encode_ms",
    "metric_stddev_decode_ms",
];

/// Parses `lo:hi:step` into an inclusive grid. Points are rounded to 1e-9 so
/// that accumulated float error never adds or drops the endpoint.
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<f64> = s
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::InvalidParameter(format!("grid `{s}`: {e}")))?;
    let [lo, hi, step] = parts[..] else {
        return Err(Error::InvalidParameter(format!("grid `{s}` must be lo:hi:step")));
    };
    if !(step > 0.0) || hi < lo {
        return Err(Error::InvalidParameter(format!("grid `{s}` needs step > 0 and hi >= lo")));
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| ((lo + i as f64 * step) * 1e9).round() / 1e9).collect())
}

/// Parses `lo:hi` element size bounds.
pub fn parse_sizes(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::InvalidParameter(format!("sizes `{s}` must be lo:hi"));
    let (lo, hi) = s.split_once(':').ok_or_else(bad)?;
    Ok((lo.trim().parse().map_err(|_| bad())?, hi.trim().parse().map_err(|_| bad())?))
}

/// Workload seed for one grid point and repetition. Independent of the
/// algorithm so every algorithm reconciles the same replica pair.
pub fn workload_seed(seed: u64, jaccard: f64, rep: u32) -> u64 {
    let mut buf = [0u8; 12];
    buf[..8].copy_from_slice(&jaccard.to_bits().to_le_bytes());
    buf[8..].copy_from_slice(&rep.to_le_bytes());
    seed ^ xxh3_64_with_seed(&buf, 0x5eed_0003_bec4_0001)
}

#[derive(Clone, Debug)]
pub struct SweepConfig {
    pub algorithms: Vec<Algorithm>,
    pub n: usize,
    pub grid: Vec<f64>,
    pub reps: u32,
    pub seed: u64,
    pub size_range: (usize, usize),
    /// Record encode/decode wall time. Off keeps the CSV byte-reproducible.
    pub timings: bool,
    pub protocol: ProtocolConfig,
}

#[derive(Clone, Debug)]
pub struct MetricsRow {
    pub algorithm: Algorithm,
    pub n: usize,
    pub jaccard: f64,
    pub d: usize,
    pub rep: u32,
    pub metadata_bytes: u64,
    pub state_bytes: u64,
    pub total_bytes: u64,
    pub min_bytes: u64,
    /// `total / min`; absent when the sets are identical.
    pub overhead: Option<f64>,
    pub encode_ms: Option<f64>,
    pub decode_ms: Option<f64>,
    /// `None` on success, the error otherwise. Failed rows carry zero bytes.
    pub error: Option<String>,
    /// PinSketch sketch bytes alone.
    pub sketch_bytes: Option<u64>,
}

impl MetricsRow {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub stddev: f64,
}

impl Stat {
    /// Mean and sample standard deviation; `None` when there are no values.
    pub fn of(values: &[f64]) -> Option<Stat> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let stddev = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Some(Stat { mean, stddev })
    }
}

#[derive(Clone, Debug)]
pub struct AggregateRow {
    pub algorithm: Algorithm,
    pub n: usize,
    pub jaccard: f64,
    /// Successful repetitions the statistics cover.
    pub reps: usize,
    pub failures: usize,
    pub d: Option<Stat>,
    pub metadata_bytes: Option<Stat>,
    pub state_bytes: Option<Stat>,
    pub total_bytes: Option<Stat>,
    pub min_bytes: Option<Stat>,
    pub overhead: Option<Stat>,
    pub encode_ms: Option<Stat>,
    pub decode_ms: Option<Stat>,
}

#[derive(Clone, Debug, Default)]
pub struct SweepResult {
    /// Ordered by algorithm (as given), then jaccard, then rep.
    pub rows: Vec<MetricsRow>,
    /// One per (algorithm, jaccard), same order.
    pub aggregates: Vec<AggregateRow>,
}

impl SweepResult {
    pub fn failures(&self) -> impl Iterator<Item = &MetricsRow> {
        self.rows.iter().filter(|r| !r.ok())
    }

    pub fn aggregate(&self, algorithm: Algorithm, jaccard: f64) -> Option<&AggregateRow> {
        self.aggregates.iter().find(|a| a.algorithm == algorithm && (a.jaccard - jaccard).abs() < 1e-9)
    }
}

fn millis(d: Option<Duration>) -> Option<f64> {
    d.map(|d| d.as_secs_f64() * 1e3)
}

fn to_row(alg: Algorithm, cfg: &SweepConfig, jaccard: f64, rep: u32, d: usize, min_bytes: u64, r: Result<BaselineResult>) -> MetricsRow {
    let mut row = MetricsRow {
        algorithm: alg,
        n: cfg.n,
        jaccard,
        d,
        rep,
        metadata_bytes: 0,
        state_bytes: 0,
        total_bytes: 0,
        min_bytes,
        overhead: None,
        encode_ms: None,
        decode_ms: None,
        error: None,
        sketch_bytes: None,
    };
    match r {
        Ok(r) => {
            row.metadata_bytes = r.metadata_bytes;
            row.state_bytes = r.state_bytes;
            row.total_bytes = r.total_bytes();
            row.overhead = (min_bytes > 0).then(|| r.total_bytes() as f64 / min_bytes as f64);
            if cfg.timings {
                row.encode_ms = millis(r.encode);
                row.decode_ms = millis(r.decode);
            }
            row.sketch_bytes = r.sketch_bytes;
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

fn run_point(cfg: &SweepConfig, jaccard: f64, rep: u32) -> Vec<MetricsRow> {
    let spec = WorkloadSpec { n: cfg.n, jaccard, size_range: cfg.size_range, seed: workload_seed(cfg.seed, jaccard, rep) };
    let w = match generate_workload(&spec) {
        Ok(w) => w,
        Err(e) => {
            let msg = e.to_string();
            return cfg
                .algorithms
                .iter()
                .map(|&alg| to_row(alg, cfg, jaccard, rep, 0, 0, Err(Error::InvalidParameter(msg.clone()))))
                .collect();
        }
    };
    let prepared = PreparedSet::new(&w.a).and_then(|a| Ok((a, PreparedSet::new(&w.b)?)));
    cfg.algorithms
        .iter()
        .map(|&alg| {
            let r = match &prepared {
                Ok((a, b)) => run_algorithm(alg, a, b, &cfg.protocol),
                Err(e) => Err(Error::InvalidParameter(e.to_string())),
            };
            to_row(alg, cfg, jaccard, rep, w.d, w.min_bytes, r)
        })
        .collect()
}

/// Thread count from `RECON_THREADS`, capped by the available cores.
pub fn thread_count() -> usize {
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    std::env::var("RECON_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&t| t > 0)
        .map_or(cores, |t| t.min(cores))
}

pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    if cfg.algorithms.is_empty() || cfg.grid.is_empty() || cfg.reps == 0 {
        return Err(Error::InvalidParameter("sweep needs at least one algorithm, grid point and rep".into()));
    }
    let jobs: Vec<(usize, u32)> = (0..cfg.grid.len()).flat_map(|g| (0..cfg.reps).map(move |r| (g, r))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count())
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    let per_job: Vec<Vec<MetricsRow>> = pool.install(|| jobs.par_iter().map(|&(g, r)| run_point(cfg, cfg.grid[g], r)).collect());

    // Jobs are (grid, rep)-major with algorithms inside; regroup by algorithm.
    let mut rows = Vec::with_capacity(per_job.len() * cfg.algorithms.len());
    for a in 0..cfg.algorithms.len() {
        rows.extend(per_job.iter().map(|job| job[a].clone()));
    }
    let aggregates = rows.chunks(cfg.reps as usize).map(|chunk| aggregate(chunk)).collect();
    Ok(SweepResult { rows, aggregates })
}

fn aggregate(rows: &[MetricsRow]) -> AggregateRow {
    let ok: Vec<&MetricsRow> = rows.iter().filter(|r| r.ok()).collect();
    let stat = |f: &dyn Fn(&MetricsRow) -> Option<f64>| {
        let v: Vec<f64> = ok.iter().filter_map(|r| f(r)).collect();
        Stat::of(&v)
    };
    AggregateRow {
        algorithm: rows[0].algorithm,
        n: rows[0].n,
        jaccard: rows[0].jaccard,
        reps: ok.len(),
        failures: rows.len() - ok.len(),
        d: stat(&|r| Some(r.d as f64)),
        metadata_bytes: stat(&|r| Some(r.metadata_bytes as f64)),
        state_bytes: stat(&|r| Some(r.state_bytes as f64)),
        total_bytes: stat(&|r| Some(r.total_bytes as f64)),
        min_bytes: stat(&|r| Some(r.min_bytes as f64)),
        overhead: stat(&|r| r.overhead),
        encode_ms: stat(&|r| r.encode_ms),
        decode_ms: stat(&|r| r.decode_ms),
    }
}

fn opt(v: Option<f64>, prec: usize) -> String {
    v.map_or_else(String::new, |v| format!("{v:.prec$}"))
}

fn mean(s: Option<Stat>) -> Option<f64> {
    s.map(|s| s.mean)
}

fn sd(s: Option<Stat>) -> Option<f64> {
    s.map(|s| s.stddev)
}

/// Writes detail rows, then aggregate rows (`rep = -1`). The trailing
/// `status` column is `ok`, or `failed: <reason>` for detail rows and
/// `failed=<count>` for aggregates with failures.
pub fn write_csv(result: &SweepResult, w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(BASE_COLUMNS.iter().chain(&STDDEV_COLUMNS).chain(&["status"]))?;
    for r in &result.rows {
        let mut rec = vec![
            r.algorithm.to_string(),
            r.n.to_string(),
            format!("{:.4}", r.jaccard),
            r.d.to_string(),
            r.rep.to_string(),
            r.metadata_bytes.to_string(),
            r.state_bytes.to_string(),
            r.total_bytes.to_string(),
            r.min_bytes.to_string(),
            opt(r.overhead, 6),
            opt(r.encode_ms, 3),
            opt(r.decode_ms, 3),
        ];
        rec.extend(std::iter::repeat(String::new()).take(STDDEV_COLUMNS.len()));
        rec.push(r.error.as_ref().map_or_else(|| "ok".into(), |e| format!("failed: {e}")));
        out.write_record(&rec)?;
    }
    for a in &result.aggregates {
        let rec = vec![
            a.algorithm.to_string(),
            a.n.to_string(),
            format!("{:.4}", a.jaccard),
            opt(mean(a.d), 1),
            "-1".into(),
            opt(mean(a.metadata_bytes), 3),
            opt(mean(a.state_bytes), 3),
            opt(mean(a.total_bytes), 3),
            opt(mean(a.min_bytes), 3),
            opt(mean(a.overhead), 6),
            opt(mean(a.encode_ms), 3),
            opt(mean(a.decode_ms), 3),
            opt(sd(a.metadata_bytes), 3),
            opt(sd(a.state_bytes), 3),
            opt(sd(a.total_bytes), 3),
            opt(sd(a.overhead), 6),
            opt(sd(a.encode_ms), 3),
            opt(sd(a.decode_ms), 3),
            if a.failures == 0 { "ok".into() } else { format!("failed={}", a.failures) },
        ];
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}
