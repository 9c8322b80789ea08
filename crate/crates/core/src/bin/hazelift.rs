use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hazelift::edge::{benchmark_filters, FilterKind};
use hazelift::enhance::{EnhanceConfig, Mode};
use hazelift::harness::{
    emit_bench_csv, emit_metrics_csv, parse_manifest, read_ratios_csv, run_batch,
    write_cluster_csv, write_detect_csv, write_metrics_csv, DetectRow,
};
use hazelift::raster::{load_image, normalize_minmax, save_gray, to_gray};
use hazelift::sky::{
    classify_dataset, detect_sky, SkyConfig, DEFAULT_MIN_SEPARABILITY, DEFAULT_TAU_SKY,
};
use hazelift::threshold::ThresholdMethod;
use hazelift::Result;

#[derive(Parser)]
#[command(
    name = "hazelift",
    version,
    about = "Sky-aware haze enhancement, detection and benchmarking"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Enhance every image of a manifest and score the results.
    Enhance(EnhanceArgs),
    /// Compute homogeneity ratios and sky decisions; CSV on stdout.
    Detect(DetectArgs),
    /// Time edge filters over a set of window sizes.
    Bench(BenchArgs),
    /// Group a list of ratios with two-cluster fuzzy c-means.
    Cluster(ClusterArgs),
    /// Write a synthetic hazy/clean dataset with a manifest.
    Synth(SynthArgs),
}

#[derive(Args)]
struct EnhanceArgs {
    #[arg(long, default_value = "pa2")]
    mode: Mode,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// key=value file; its entries override the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Images processed concurrently (defaults to the number of CPUs).
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    metrics_csv: Option<PathBuf>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long, default_value = "sdf")]
    filter: FilterKind,
    #[arg(long, default_value_t = hazelift::sky::DEFAULT_WINDOW)]
    window: usize,
    #[arg(long, default_value = "otsu")]
    threshold: ThresholdMethod,
    #[arg(long, default_value_t = DEFAULT_TAU_SKY)]
    tau: f64,
    #[arg(long, default_value_t = DEFAULT_MIN_SEPARABILITY)]
    min_separability: f64,
    /// Directory for the normalized gradient and binary maps.
    #[arg(long)]
    export_maps: Option<PathBuf>,
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated filter names.
    #[arg(long, value_delimiter = ',', required = true)]
    filters: Vec<FilterKind>,
    /// Comma-separated odd window sizes.
    #[arg(long, value_delimiter = ',', required = true)]
    windows: Vec<usize>,
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 5)]
    reps: usize,
}

#[derive(Args)]
struct ClusterArgs {
    /// CSV with `name` and `ratio` columns.
    #[arg(long)]
    ratios: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    count: usize,
    #[arg(long, default_value_t = 128)]
    size: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn enhance(args: EnhanceArgs) -> Result<ExitCode> {
    let mut cfg = EnhanceConfig {
        mode: args.mode,
        ..EnhanceConfig::default()
    };
    if let Some(n) = args.iterations {
        cfg.iterations = n;
    }
    if let Some(t) = args.tau {
        cfg.tau_sky = t;
    }
    if let Some(path) = &args.config {
        cfg.apply_file(path)?;
    }
    cfg.validate()?;
    let jobs = args
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let manifest = parse_manifest(&args.manifest)?;
    let summary = run_batch(&manifest, &cfg, &args.out, jobs)?;
    match &args.metrics_csv {
        Some(path) => emit_metrics_csv(&summary, path)?,
        None => write_metrics_csv(&summary, std::io::stdout().lock())?,
    }
    for f in &summary.failures {
        eprintln!("failed: {}: {}", f.image, f.message);
    }
    eprintln!(
        "{} of {} images enhanced with {} in {:.2} s",
        summary.records.len(),
        manifest.entries.len(),
        cfg.mode,
        summary.wall_s
    );
    Ok(if summary.is_success() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn export_maps(dir: &Path, input: &Path, report: &hazelift::sky::SkyReport) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| hazelift::Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let stem = input
        .file_stem()
        .map_or_else(|| "image".into(), |s| s.to_string_lossy().into_owned());
    let kind = report.filter_kind.name();
    save_gray(
        &normalize_minmax(&report.gradient),
        dir.join(format!("{stem}_{kind}_map.png")),
    )?;
    save_gray(
        &report.binary.to_gray(),
        dir.join(format!("{stem}_{kind}_binary.png")),
    )
}

fn detect(args: DetectArgs) -> Result<ExitCode> {
    let cfg = SkyConfig {
        filter: args.filter,
        window: args.window,
        method: args.threshold,
        tau: args.tau,
        min_separability: args.min_separability,
    };
    let mut rows = Vec::new();
    let mut failed = false;
    for input in &args.inputs {
        let outcome = load_image(input)
            .and_then(|img| detect_sky(&img, &cfg))
            .and_then(|report| {
                if let Some(dir) = &args.export_maps {
                    export_maps(dir, input, &report)?;
                }
                Ok(report)
            });
        match outcome {
            Ok(report) => {
                let name = input.file_name().map_or_else(
                    || input.display().to_string(),
                    |n| n.to_string_lossy().into_owned(),
                );
                rows.push(DetectRow::from_report(name, &report));
            }
            Err(e) => {
                eprintln!("failed: {}: {e}", input.display());
                failed = true;
            }
        }
    }
    write_detect_csv(&rows, std::io::stdout().lock())?;
    Ok(if failed {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    })
}

fn bench(args: BenchArgs) -> Result<ExitCode> {
    let gray = to_gray(&load_image(&args.image)?);
    let rows = benchmark_filters(&gray, &args.filters, &args.windows, args.reps)?;
    emit_bench_csv(&rows, &args.out)?;
    Ok(ExitCode::SUCCESS)
}

fn cluster(args: ClusterArgs) -> Result<ExitCode> {
    let ratios = read_ratios_csv(&args.ratios)?;
    let classes = classify_dataset(&ratios)?;
    write_cluster_csv(&classes, std::io::stdout().lock())?;
    Ok(ExitCode::SUCCESS)
}

fn synth(args: SynthArgs) -> Result<ExitCode> {
    let manifest = hazelift::synth::write_dataset(&args.out, args.count, args.size, args.seed)?;
    eprintln!("wrote {}", manifest.display());
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Enhance(a) => enhance(a),
        Command::Detect(a) => detect(a),
        Command::Bench(a) => bench(a),
        Command::Cluster(a) => cluster(a),
        Command::Synth(a) => synth(a),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::from(2)
    })
}
