use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use atfqoe_core::analysis::{
    attach_ttc_indices, build_features, cross_validate, labeled_pairs, majority_aligned_votes, majority_labels,
    match_ranking, score_predictions, ttc_by_pair, ttc_positions, AnalysisError, CvResult, FeatureSet, ForestParams,
    MatchScore, Metric, Prediction, TtcMode, TtcReport,
};
use atfqoe_core::indices::PageCurves;
use atfqoe_core::pairing::VideoPair;
use atfqoe_core::records::{VoteExport, VoteRecord};
use atfqoe_core::Choice;
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::{collect_files, read_json, write_json};

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Match,
    Ttc,
    Model,
    Score,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TtcModeArg {
    PerPair,
    Global,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeArgs {
    /// Line-delimited vote export from the study service.
    #[arg(long)]
    pub votes: Option<PathBuf>,
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Mode::Match)]
    pub mode: Mode,
    /// Synthetic-vote threshold on the normalized difference.
    #[arg(long, default_value_t = 0.05)]
    pub threshold: f64,
    /// Cross-validation folds.
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 100)]
    pub trees: usize,
    /// Restrict model mode to these feature sets (repeatable).
    #[arg(long = "feature-set")]
    pub feature_sets: Vec<String>,
    #[arg(long, value_enum, default_value_t = TtcModeArg::PerPair)]
    pub ttc_mode: TtcModeArg,
    /// Directory of `*.curves.json`; enables the TTC-truncated metrics.
    #[arg(long)]
    pub curves: Option<PathBuf>,
    /// JSON list of `{"pair_id", "choice"}` for score mode.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

struct Inputs {
    export: VoteExport,
    catalog: Vec<VideoPair>,
    labels: HashMap<String, Choice>,
}

fn load_inputs(args: &AnalyzeArgs) -> Result<Inputs> {
    let votes = args.votes.as_ref().context("--votes is required")?;
    let catalog_path = args.catalog.as_ref().context("--catalog is required")?;
    let file = std::fs::File::open(votes).with_context(|| format!("opening {}", votes.display()))?;
    let export = VoteExport::read_from(BufReader::new(file)).with_context(|| format!("reading {}", votes.display()))?;
    let mut catalog: Vec<VideoPair> = read_json(catalog_path)?;
    let labels = majority_labels(&export.tally());

    if let Some(dir) = &args.curves {
        let mut curves = HashMap::new();
        for path in collect_files(std::slice::from_ref(dir), ".curves.json")? {
            let c: PageCurves = read_json(&path)?;
            curves.insert(c.source_id.clone(), c);
        }
        let mode = match args.ttc_mode {
            TtcModeArg::PerPair => TtcMode::PerPair,
            TtcModeArg::Global => TtcMode::Global,
        };
        let aligned = majority_aligned_votes(&export, &labels);
        let ttc = ttc_by_pair(&aligned, mode);
        let n = attach_ttc_indices(&mut catalog, &ttc, &curves)?;
        eprintln!("attached TTC-truncated indices to {n} pairs");
    }
    Ok(Inputs { export, catalog, labels })
}

#[derive(Serialize)]
struct MatchOutput<'a> {
    threshold: f64,
    labeled_pairs: usize,
    ranking: &'a [MatchScore],
}

fn run_match(args: &AnalyzeArgs, inputs: &Inputs, out: &Path) -> Result<()> {
    let labeled = labeled_pairs(&inputs.catalog, &inputs.labels);
    if labeled.is_empty() {
        bail!("no catalog pair has a resolved majority vote");
    }
    let ranking = match_ranking(&Metric::ALL, &labeled, args.threshold)?;
    write_json(
        &out.join("match.json"),
        &MatchOutput { threshold: args.threshold, labeled_pairs: labeled.len(), ranking: &ranking },
    )?;
    let mut csv = String::from("metric,matched,total,fraction\n");
    for r in &ranking {
        writeln!(csv, "{},{},{},{:.6}", r.metric, r.matched, r.total, r.fraction)?;
        println!("{:<16} {:>6.1}%  ({}/{})", r.metric.name(), 100.0 * r.fraction, r.matched, r.total);
    }
    std::fs::write(out.join("match.csv"), csv)?;
    Ok(())
}

const MILESTONES: [Metric; 6] =
    [Metric::Ttfb, Metric::FirstPaint, Metric::Dclend, Metric::Render, Metric::Onload, Metric::VisualComplete];

fn run_ttc(inputs: &Inputs, out: &Path) -> Result<()> {
    let pairs: HashMap<String, &VideoPair> =
        inputs.catalog.iter().filter(|p| !p.honeypot).map(|p| (p.pair_id.clone(), p)).collect();
    let votes: Vec<&VoteRecord> = inputs.export.valid_votes().filter(|v| pairs.contains_key(&v.pair_id)).collect();
    let milestones: Vec<Metric> = MILESTONES
        .into_iter()
        .filter(|m| pairs.values().all(|p| m.value(&p.left_report).is_some() && m.value(&p.right_report).is_some()))
        .collect();
    let report: TtcReport = ttc_positions(&votes, &pairs, &milestones)?;
    write_json(&out.join("ttc.json"), &report)?;
    let mut csv = String::from("metric,before,between,after,n\n");
    for r in &report.rows {
        writeln!(csv, "{},{:.3},{:.3},{:.3},{}", r.metric, r.before, r.between, r.after, r.n)?;
    }
    std::fs::write(out.join("ttc.csv"), csv)?;
    match report.median_ttc_ms {
        Some(m) => println!("median TTC {m:.0} ms over {} votes", votes.len()),
        None => println!("no valid votes"),
    }
    Ok(())
}

#[derive(Serialize)]
struct ModelRow {
    feature_set: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    cv: Option<CvResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    skipped: Option<String>,
}

fn run_model(args: &AnalyzeArgs, inputs: &Inputs, out: &Path) -> Result<()> {
    let seed = args.seed.context("--seed is required for model mode")?;
    let sets: Vec<FeatureSet> = if args.feature_sets.is_empty() {
        FeatureSet::ALL.to_vec()
    } else {
        args.feature_sets.iter().map(|s| s.parse()).collect::<Result<_, _>>()?
    };
    let labeled = labeled_pairs(&inputs.catalog, &inputs.labels);
    let params = ForestParams { n_trees: args.trees, seed, ..ForestParams::default() };
    let mut rows = Vec::new();
    for set in sets {
        let result = build_features(&labeled, &set.metrics()).and_then(|f| cross_validate(&f, &params, args.k));
        let row = match result {
            Ok(cv) => {
                println!("{:<30} mean {:.3} (min {:.3}, max {:.3})", set.name(), cv.mean, cv.min, cv.max);
                ModelRow { feature_set: set.name().into(), cv: Some(cv), skipped: None }
            }
            Err(
                e @ (AnalysisError::MissingMetric { .. }
                | AnalysisError::TooFewRows { .. }
                | AnalysisError::SingleClass),
            ) => {
                eprintln!("{}: skipped ({e})", set.name());
                ModelRow { feature_set: set.name().into(), cv: None, skipped: Some(e.to_string()) }
            }
            Err(e) => return Err(e.into()),
        };
        rows.push(row);
    }
    write_json(&out.join("cv.json"), &rows)
}

#[derive(Serialize)]
struct ScoreOutput {
    correct: usize,
    total: usize,
    accuracy: f64,
}

fn run_score(args: &AnalyzeArgs, inputs: &Inputs, out: &Path) -> Result<()> {
    let path = args.predictions.as_ref().context("--predictions is required for score mode")?;
    let preds: Vec<Prediction> = read_json(path)?;
    let (correct, total) = score_predictions(&preds, &inputs.labels)?;
    let accuracy = correct as f64 / total as f64;
    println!("{correct}/{total} = {:.1}%", 100.0 * accuracy);
    write_json(&out.join("score.json"), &ScoreOutput { correct, total, accuracy })
}

pub fn run(args: AnalyzeArgs) -> Result<()> {
    let out = args.out.clone().context("--out is required")?;
    if !(args.threshold >= 0.0 && args.threshold.is_finite()) {
        bail!("--threshold must be a non-negative number");
    }
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let inputs = load_inputs(&args)?;
    match args.mode {
        Mode::Match => run_match(&args, &inputs, &out),
        Mode::Ttc => run_ttc(&inputs, &out),
        Mode::Model => run_model(&args, &inputs, &out),
        Mode::Score => run_score(&args, &inputs, &out),
    }
}
