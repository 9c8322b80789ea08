//! Batch driver and CSV outputs.
//!
//! A manifest lists hazy inputs with optional ground-truth references.
//! [`run_batch`] enhances every entry (optionally in parallel), times the
//! enhancement, saves the result and scores it. Records always come back in
//! manifest order, so the CSV written by [`emit_metrics_csv`] does not depend
//! on the job count apart from the runtime column.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::edge::{BenchRow, FilterKind};
use crate::enhance::{enhance_dispatch, EnhanceConfig};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, MetricRecord};
use crate::raster::{load_image, save_image};
use crate::sky::{RatioClass, SkyDecision, SkyReport};

pub const METRICS_HEADER: [&str; 15] = [
    "image",
    "algorithm",
    "qe",
    "bwar",
    "rag",
    "hdi",
    "cef",
    "mssim",
    "psnr",
    "mae",
    "mse",
    "ratio",
    "sky",
    "runtime_s",
    "iterations",
];

pub const BENCH_HEADER: [&str; 3] = ["kind", "window", "seconds"];
pub const DETECT_HEADER: [&str; 6] = ["name", "filter", "window", "threshold", "ratio", "decision"];
pub const CLUSTER_HEADER: [&str; 5] = ["name", "ratio", "cluster", "membership_high", "label"];

/// Image name used for per-algorithm average rows.
pub const AVERAGE_NAME: &str = "AVERAGE";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub input: PathBuf,
    pub reference: Option<PathBuf>,
    pub group: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Reads a `input,reference,group` CSV. Relative paths are resolved against
/// the manifest's directory. Line numbers in errors count the header as 1.
pub fn parse_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let mut records = rdr.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| parse_error(path, 1, e.to_string()))?,
        None => return Err(parse_error(path, 1, "empty manifest")),
    };
    let header: Vec<&str> = header.iter().collect();
    if header != ["input", "reference", "group"] {
        return Err(parse_error(
            path,
            1,
            format!(
                "expected header 'input,reference,group', found '{}'",
                header.join(",")
            ),
        ));
    }

    let resolve = |s: &str| {
        let p = Path::new(s);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    };

    let mut entries = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_error(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.iter().all(str::is_empty) {
            continue;
        }
        if rec.len() != 3 {
            return Err(parse_error(
                path,
                line,
                format!("expected 3 fields, found {}", rec.len()),
            ));
        }
        if rec[0].is_empty() {
            return Err(parse_error(path, line, "input path is empty"));
        }
        let input = resolve(&rec[0]);
        if !input.is_file() {
            return Err(parse_error(
                path,
                line,
                format!("input file {} does not exist", input.display()),
            ));
        }
        let reference = if rec[1].is_empty() {
            None
        } else {
            let r = resolve(&rec[1]);
            if !r.is_file() {
                return Err(parse_error(
                    path,
                    line,
                    format!("reference file {} does not exist", r.display()),
                ));
            }
            let di = image::image_dimensions(&input)
                .map_err(|e| parse_error(path, line, e.to_string()))?;
            let dr =
                image::image_dimensions(&r).map_err(|e| parse_error(path, line, e.to_string()))?;
            if di != dr {
                return Err(parse_error(
                    path,
                    line,
                    format!(
                        "reference is {}x{} but input is {}x{}",
                        dr.0, dr.1, di.0, di.1
                    ),
                ));
            }
            Some(r)
        };
        entries.push(ManifestEntry {
            input,
            reference,
            group: rec[2].to_string(),
        });
    }
    Ok(DatasetManifest { entries })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BatchFailure {
    pub image: String,
    pub message: String,
}

/// Means of one algorithm's finite values, column by column.
#[derive(Clone, Debug, PartialEq)]
pub struct AverageRow {
    pub algorithm: String,
    /// Keyed by metric column name; `None` when no finite value exists.
    pub means: BTreeMap<&'static str, Option<f64>>,
    /// Number of `+inf` values skipped per column.
    pub sentinels: BTreeMap<&'static str, usize>,
}

#[derive(Clone, Debug, Default)]
pub struct RunSummary {
    pub records: Vec<MetricRecord>,
    pub failures: Vec<BatchFailure>,
    pub wall_s: f64,
}

/// Numeric columns that receive an average.
const AVERAGED: [&str; 12] = [
    "qe",
    "bwar",
    "rag",
    "hdi",
    "cef",
    "mssim",
    "psnr",
    "mae",
    "mse",
    "ratio",
    "runtime_s",
    "iterations",
];

fn numeric_field(r: &MetricRecord, column: &str) -> Option<f64> {
    match column {
        "qe" => Some(r.qe),
        "bwar" => Some(r.bwar),
        "rag" => Some(r.rag),
        "hdi" => Some(r.hdi),
        "cef" => Some(r.cef),
        "mssim" => r.mssim,
        "psnr" => r.psnr,
        "mae" => r.mae,
        "mse" => r.mse,
        "ratio" => r.ratio,
        "runtime_s" => Some(r.runtime_s),
        "iterations" => r.iterations.map(|n| n as f64),
        _ => None,
    }
}

impl RunSummary {
    pub fn is_success(&self) -> bool {
        self.failures.is_empty()
    }

    /// Appends another run's records and failures.
    pub fn extend(&mut self, other: RunSummary) {
        self.records.extend(other.records);
        self.failures.extend(other.failures);
        self.wall_s += other.wall_s;
    }

    /// One row per algorithm, in order of first appearance.
    pub fn averages(&self) -> Vec<AverageRow> {
        let mut order: Vec<&str> = Vec::new();
        for r in &self.records {
            if !order.contains(&r.algorithm.as_str()) {
                order.push(&r.algorithm);
            }
        }
        order
            .into_iter()
            .map(|alg| {
                let rows: Vec<&MetricRecord> =
                    self.records.iter().filter(|r| r.algorithm == alg).collect();
                let mut means = BTreeMap::new();
                let mut sentinels = BTreeMap::new();
                for col in AVERAGED {
                    let values: Vec<f64> =
                        rows.iter().filter_map(|r| numeric_field(r, col)).collect();
                    let finite: Vec<f64> =
                        values.iter().copied().filter(|v| v.is_finite()).collect();
                    sentinels.insert(col, values.iter().filter(|v| **v == f64::INFINITY).count());
                    let mean = (!finite.is_empty())
                        .then(|| finite.iter().sum::<f64>() / finite.len() as f64);
                    means.insert(col, mean);
                }
                AverageRow {
                    algorithm: alg.to_string(),
                    means,
                    sentinels,
                }
            })
            .collect()
    }
}

fn file_label(p: &Path) -> String {
    p.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| p.display().to_string())
}

/// Output file name for an input under a given mode: `<stem>_<mode>.png`.
pub fn output_name(input: &Path, cfg: &EnhanceConfig) -> String {
    let stem = input
        .file_stem()
        .map_or_else(|| "image".into(), |s| s.to_string_lossy().into_owned());
    format!("{stem}_{}.png", cfg.mode.name())
}

fn process_entry(
    entry: &ManifestEntry,
    cfg: &EnhanceConfig,
    out_dir: &Path,
) -> Result<MetricRecord> {
    let input = load_image(&entry.input)?;
    let reference = entry.reference.as_ref().map(load_image).transpose()?;

    let start = Instant::now();
    let (output, report) = enhance_dispatch(&input, cfg)?;
    let runtime_s = start.elapsed().as_secs_f64();

    save_image(&output, out_dir.join(output_name(&entry.input, cfg)))?;
    let m = evaluate(&input, &output, reference.as_ref())?;
    let (ratio, sky) = match report {
        Some(SkyReport {
            ratio, decision, ..
        }) => (Some(ratio), Some(decision)),
        None => (None, None),
    };
    Ok(MetricRecord {
        image_name: file_label(&entry.input),
        algorithm: cfg.mode.name().to_string(),
        qe: m.qe,
        bwar: m.bwar,
        rag: m.rag,
        hdi: m.hdi,
        cef: m.cef,
        mssim: m.full.map(|f| f.0),
        psnr: m.full.map(|f| f.1.psnr),
        mae: m.full.map(|f| f.1.mae),
        mse: m.full.map(|f| f.1.mse),
        ratio,
        sky,
        runtime_s,
        iterations: Some(cfg.iterations),
    })
}

/// Enhances every manifest entry with up to `jobs` images in flight.
///
/// Failing images are listed in [`RunSummary::failures`] and skipped; the
/// batch itself only errors on an invalid configuration or output directory.
pub fn run_batch(
    manifest: &DatasetManifest,
    cfg: &EnhanceConfig,
    out_dir: impl AsRef<Path>,
    jobs: usize,
) -> Result<RunSummary> {
    cfg.validate()?;
    if jobs == 0 {
        return Err(Error::param("jobs must be at least 1"));
    }
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::param(format!("cannot build thread pool: {e}")))?;

    let start = Instant::now();
    let results: Vec<Result<MetricRecord>> = pool.install(|| {
        manifest
            .entries
            .par_iter()
            .map(|e| process_entry(e, cfg, out_dir))
            .collect()
    });
    let mut summary = RunSummary {
        wall_s: start.elapsed().as_secs_f64(),
        ..RunSummary::default()
    };
    for (entry, res) in manifest.entries.iter().zip(results) {
        match res {
            Ok(r) => summary.records.push(r),
            Err(e) => summary.failures.push(BatchFailure {
                image: file_label(&entry.input),
                message: e.to_string(),
            }),
        }
    }
    Ok(summary)
}

/// CSV text of a number: `inf` / `-inf` for infinities, otherwise the
/// shortest representation that parses back to the same value.
pub fn format_value(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(format_value).unwrap_or_default()
}

fn record_fields(r: &MetricRecord) -> Vec<String> {
    vec![
        r.image_name.clone(),
        r.algorithm.clone(),
        format_value(r.qe),
        format_value(r.bwar),
        format_value(r.rag),
        format_value(r.hdi),
        format_value(r.cef),
        opt(r.mssim),
        opt(r.psnr),
        opt(r.mae),
        opt(r.mse),
        opt(r.ratio),
        r.sky.map(|s| s.name().to_string()).unwrap_or_default(),
        format_value(r.runtime_s),
        r.iterations.map(|n| n.to_string()).unwrap_or_default(),
    ]
}

fn average_fields(a: &AverageRow) -> Vec<String> {
    METRICS_HEADER
        .iter()
        .map(|&col| match col {
            "image" => AVERAGE_NAME.to_string(),
            "algorithm" => a.algorithm.clone(),
            "sky" => String::new(),
            c => opt(a.means.get(c).copied().flatten()),
        })
        .collect()
}

/// Writes per-image rows followed by one `AVERAGE` row per algorithm.
pub fn write_metrics_csv<W: Write>(summary: &RunSummary, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(METRICS_HEADER)?;
    for r in &summary.records {
        w.write_record(record_fields(r))?;
    }
    for a in summary.averages() {
        w.write_record(average_fields(&a))?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn emit_metrics_csv(summary: &RunSummary, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_metrics_csv(summary, std::io::BufWriter::new(file))
}

fn parse_value(s: &str) -> std::result::Result<f64, String> {
    match s {
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        _ => s.parse().map_err(|_| format!("'{s}' is not a number")),
    }
}

fn parse_opt(s: &str) -> std::result::Result<Option<f64>, String> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse_value(s).map(Some)
    }
}

/// Reads the per-image rows of a metrics CSV back; `AVERAGE` rows are skipped.
pub fn read_metrics_csv(path: impl AsRef<Path>) -> Result<Vec<MetricRecord>> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != METRICS_HEADER {
        return Err(parse_error(path, 1, "unexpected metrics header"));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if &rec[0] == AVERAGE_NAME {
            continue;
        }
        let wrap = |e: String| parse_error(path, line, e);
        let num = |i: usize| parse_value(&rec[i]).map_err(wrap);
        let maybe = |i: usize| parse_opt(&rec[i]).map_err(wrap);
        out.push(MetricRecord {
            image_name: rec[0].to_string(),
            algorithm: rec[1].to_string(),
            qe: num(2)?,
            bwar: num(3)?,
            rag: num(4)?,
            hdi: num(5)?,
            cef: num(6)?,
            mssim: maybe(7)?,
            psnr: maybe(8)?,
            mae: maybe(9)?,
            mse: maybe(10)?,
            ratio: maybe(11)?,
            sky: if rec[12].is_empty() {
                None
            } else {
                Some(
                    rec[12]
                        .parse::<SkyDecision>()
                        .map_err(|e| parse_error(path, line, e.to_string()))?,
                )
            },
            runtime_s: num(13)?,
            iterations: if rec[14].is_empty() {
                None
            } else {
                Some(
                    rec[14]
                        .parse()
                        .map_err(|_| parse_error(path, line, "bad iteration count"))?,
                )
            },
        });
    }
    Ok(out)
}

/// Writes benchmark rows sorted by (kind name, window).
pub fn emit_bench_csv(rows: &[BenchRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut sorted: Vec<&BenchRow> = rows.iter().collect();
    sorted.sort_by(|a, b| (a.kind.name(), a.window).cmp(&(b.kind.name(), b.window)));
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(BENCH_HEADER)?;
    for r in sorted {
        w.write_record([
            r.kind.name().to_string(),
            r.window.to_string(),
            format_value(r.seconds),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_bench_csv(path: impl AsRef<Path>) -> Result<Vec<BenchRow>> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path)?;
    if rdr.headers()?.iter().ne(BENCH_HEADER) {
        return Err(parse_error(
            path,
            1,
            "expected header 'kind,window,seconds'",
        ));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let kind: FilterKind = rec[0]
            .parse()
            .map_err(|e: Error| parse_error(path, line, e.to_string()))?;
        let window = rec[1]
            .parse()
            .map_err(|_| parse_error(path, line, "bad window"))?;
        let seconds = parse_value(&rec[2]).map_err(|e| parse_error(path, line, e))?;
        out.push(BenchRow {
            kind,
            window,
            seconds,
        });
    }
    Ok(out)
}

/// One line of `hazelift detect` output.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectRow {
    pub name: String,
    pub filter: FilterKind,
    pub window: usize,
    pub threshold: crate::threshold::ThresholdMethod,
    pub ratio: f64,
    pub decision: SkyDecision,
}

impl DetectRow {
    pub fn from_report(name: impl Into<String>, report: &SkyReport) -> Self {
        Self {
            name: name.into(),
            filter: report.filter_kind,
            window: report.window,
            threshold: report.method,
            ratio: report.ratio,
            decision: report.decision,
        }
    }
}

pub fn write_detect_csv<W: Write>(rows: &[DetectRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(DETECT_HEADER)?;
    for r in rows {
        let window = if r.filter.is_statistical() {
            r.window.to_string()
        } else {
            String::new()
        };
        w.write_record([
            r.name.clone(),
            r.filter.name().to_string(),
            window,
            r.threshold.name().to_string(),
            format_value(r.ratio),
            r.decision.name().to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Reads `(name, ratio)` pairs from any CSV with `name` and `ratio` columns,
/// such as the output of `hazelift detect`.
pub fn read_ratios_csv(path: impl AsRef<Path>) -> Result<Vec<(String, f64)>> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| parse_error(path, 1, format!("missing '{name}' column")))
    };
    let (ni, ri) = (col("name")?, col("ratio")?);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let ratio =
            parse_value(rec.get(ri).unwrap_or("")).map_err(|e| parse_error(path, line, e))?;
        if ratio.is_nan() || ratio < 0.0 {
            return Err(parse_error(
                path,
                line,
                format!("ratio must be non-negative, got {ratio}"),
            ));
        }
        out.push((rec.get(ni).unwrap_or("").to_string(), ratio));
    }
    Ok(out)
}

pub fn write_cluster_csv<W: Write>(rows: &[RatioClass], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CLUSTER_HEADER)?;
    for r in rows {
        w.write_record([
            r.name.clone(),
            format_value(r.ratio),
            r.cluster.to_string(),
            format_value(r.membership_high),
            r.label.name().to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}
