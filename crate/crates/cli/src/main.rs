mod analyze;
mod config;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use atfqoe_core::filmstrip::load_filmstrip;
use atfqoe_core::har::{extract_timings, parse_har};
use atfqoe_core::indices::{report_from_curves, PageCurves, ReportOptions};
use atfqoe_core::pairing::{build_pair_sets, catalog_from_sets, pick_honeypots, select_pairs, BandUnits, VideoPair};
use atfqoe_core::progress::SsimParams;
use atfqoe_core::MetricReport;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(name = "atfqoe", version, about = "Above-the-fold page-load QoE metrics and perception studies")]
struct Cli {
    /// JSON file whose keys override the subcommand's flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute progress curves and metric reports from filmstrips and HARs.
    Metrics(MetricsArgs),
    /// Select condition pairs and write a pair catalog.
    Pairs(PairsArgs),
    /// Run the study HTTP service.
    Serve(ServeArgs),
    /// Analyze exported votes against the catalog.
    Analyze(analyze::AnalyzeArgs),
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetricsArgs {
    /// Filmstrip manifest (repeatable).
    #[arg(long = "manifest")]
    manifests: Vec<PathBuf>,
    /// HAR file for the manifest at the same position (repeatable).
    #[arg(long = "har")]
    hars: Vec<PathBuf>,
    /// HAR page id; defaults to the first page of each file.
    #[arg(long)]
    page: Option<String>,
    #[arg(long, default_value_t = 8)]
    ssim_window: u32,
    #[arg(long, default_value_t = 4)]
    ssim_stride: u32,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum Units {
    Percent,
    Absolute,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairsArgs {
    /// Report files or directories of `*.report.json` (repeatable).
    #[arg(long = "reports")]
    reports: Vec<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 10)]
    per_bucket: usize,
    #[arg(long, default_value_t = 10)]
    sets: usize,
    /// JSON list of `{"left": id, "right": id}`; drawn from the reports if absent.
    #[arg(long)]
    honeypots: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Units::Percent)]
    units: Units,
    /// Output catalog path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    listen: String,
    #[arg(long, default_value = "study-data")]
    data_dir: PathBuf,
    #[arg(long, default_value = "catalog.json")]
    catalog: PathBuf,
    #[arg(long)]
    frames_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 60)]
    session_timeout_min: u64,
    /// Fixed seed for reproducible session layouts.
    #[arg(long)]
    seed: Option<u64>,
}

pub(crate) fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))
}

fn cmd_metrics(args: MetricsArgs) -> Result<()> {
    let out = args.out.context("--out is required")?;
    if args.manifests.is_empty() {
        bail!("at least one --manifest is required");
    }
    if args.manifests.len() != args.hars.len() {
        bail!("{} manifests but {} HAR files; pass one --har per --manifest", args.manifests.len(), args.hars.len());
    }
    let opts = ReportOptions {
        ssim: SsimParams { window: args.ssim_window, stride: args.ssim_stride, ..SsimParams::default() },
        ..ReportOptions::default()
    };
    for (manifest, har_path) in args.manifests.iter().zip(&args.hars) {
        let strip = load_filmstrip(manifest).with_context(|| format!("loading {}", manifest.display()))?;
        let har = parse_har(&std::fs::read(har_path).with_context(|| format!("reading {}", har_path.display()))?)
            .with_context(|| format!("parsing {}", har_path.display()))?;
        let timings = extract_timings(&har, args.page.as_deref())
            .with_context(|| format!("timings from {}", har_path.display()))?;
        let curves =
            PageCurves::from_strip(&strip, &opts).with_context(|| format!("curves for {}", strip.source_id()))?;
        let report = report_from_curves(&strip, &curves, &timings, None, &opts)?;
        let id = strip.source_id();
        write_json(&out.join(format!("{id}.report.json")), &report)?;
        write_json(&out.join(format!("{id}.curves.json")), &curves)?;
        println!(
            "{id}: si {:.1} ms, psi {:.1} ms, vc {:.0} ms",
            report.si_ms, report.psi_ms, report.visual_complete_ms
        );
    }
    Ok(())
}

/// Expands directories to their `*.<suffix>` files; the result is sorted.
pub(crate) fn collect_files(inputs: &[PathBuf], suffix: &str) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for input in inputs {
        if input.is_dir() {
            for entry in std::fs::read_dir(input).with_context(|| format!("listing {}", input.display()))? {
                let path = entry?.path();
                if path.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with(suffix)) {
                    files.push(path);
                }
            }
        } else {
            files.push(input.clone());
        }
    }
    files.sort();
    files.dedup();
    Ok(files)
}

#[derive(Deserialize)]
struct HoneypotSpec {
    left: String,
    right: String,
}

fn cmd_pairs(args: PairsArgs) -> Result<()> {
    let seed = args.seed.context("--seed is required for pair selection")?;
    let out = args.out.context("--out is required")?;
    let mut corpus: Vec<MetricReport> = Vec::new();
    for path in collect_files(&args.reports, ".report.json")? {
        corpus.push(read_json(&path)?);
    }
    if corpus.is_empty() {
        bail!("no reports found");
    }
    corpus.sort_by(|a, b| a.source_id.cmp(&b.source_id));
    let units = match args.units {
        Units::Percent => BandUnits::Percent,
        Units::Absolute => BandUnits::Absolute,
    };
    let selection = select_pairs(&corpus, args.per_bucket, seed, units)?;
    for ((bucket, pool), n) in selection.pools.iter().zip(&selection.candidates) {
        eprintln!("{bucket}: {n} candidates, {} selected", pool.len());
    }
    let honeypots = match &args.honeypots {
        Some(path) => {
            let specs: Vec<HoneypotSpec> = read_json(path)?;
            let find = |id: &str| {
                corpus
                    .iter()
                    .find(|r| r.source_id == id)
                    .cloned()
                    .with_context(|| format!("honeypot page {id} has no report"))
            };
            specs
                .iter()
                .map(|s| Ok(VideoPair::honeypot(find(&s.left)?, find(&s.right)?)?))
                .collect::<Result<Vec<_>>>()?
        }
        None => pick_honeypots(&corpus, atfqoe_core::pairing::HONEYPOTS_PER_SET, seed)?,
    };
    let sets = build_pair_sets(&selection, args.sets, &honeypots)?;
    let catalog = catalog_from_sets(&sets);
    write_json(&out, &catalog)?;
    println!("{} sets, {} pairs -> {}", sets.len(), catalog.len(), out.display());
    Ok(())
}

fn cmd_serve(args: ServeArgs) -> Result<()> {
    let config = atfqoe_study::ServiceConfig {
        listen: args.listen.parse().with_context(|| format!("bad listen address {}", args.listen))?,
        data_dir: args.data_dir,
        catalog: args.catalog,
        frames_dir: args.frames_dir,
        session_timeout_ms: args.session_timeout_min * 60 * 1000,
        seed: args.seed,
        ..atfqoe_study::ServiceConfig::default()
    };
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(atfqoe_study::serve(config))?;
    Ok(())
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let overrides = match &cli.config {
        Some(path) => Some(config::load(path)?),
        None => None,
    };
    let o = overrides.as_ref();
    match cli.command {
        Command::Metrics(a) => cmd_metrics(config::apply(a, o)?),
        Command::Pairs(a) => cmd_pairs(config::apply(a, o)?),
        Command::Serve(a) => cmd_serve(config::apply(a, o)?),
        Command::Analyze(a) => analyze::run(config::apply(a, o)?),
    }
}
