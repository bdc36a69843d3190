use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use cxr_cli::io::{ground_truth_boxes, load_annotations, load_predictions, scored_sets};
use cxr_cli::report::{config_hash, ReportConfig, ReportEnvelope};
use cxr_cli::svg::emit_curve_svg;
use cxr_core::agreement::{
    agreement_table, model_vs_rater_table, reader_study_delta, AgreementTable, DeltaReport,
};
use cxr_core::bootstrap::BootstrapConfig;
use cxr_core::clf::{per_label_classification_report, roc_curve, ThresholdPolicy};
use cxr_core::det::{froc_curve, per_finding_detection_report};
use cxr_core::dicom::{deidentify, parse_dicom};
use cxr_core::model::{consensus_global, ConsensusPolicy, Session, NO_FINDING};
use cxr_core::pixels::{decode_pixels, export_png, preprocess, write_tensor};

#[derive(Parser)]
#[command(name = "cxr-eval", version, about = "Chest X-ray study evaluation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Batch-convert DICOM files: de-identify, decode, export PNG/tensor
    Ingest {
        #[arg(long = "in")]
        in_dir: PathBuf,
        #[arg(long = "out")]
        out_dir: PathBuf,
        #[arg(long)]
        png: bool,
        #[arg(long)]
        tensor: bool,
        #[arg(long)]
        no_deid: bool,
    },
    /// Per-label classification report with bootstrap CIs
    ClassifyEval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// JSON file mapping label -> decision threshold
        #[arg(long, conflicts_with = "youden")]
        thresholds: Option<PathBuf>,
        /// Pick per-label thresholds by maximizing Youden's index
        #[arg(long)]
        youden: bool,
        #[arg(long, default_value_t = 10_000)]
        bootstrap: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Directory for per-label ROC curves (SVG + CSV sidecar)
        #[arg(long)]
        roc_svg: Option<PathBuf>,
        #[arg(long)]
        lenient: bool,
    },
    /// Per-finding FROC report with bootstrap CIs
    Froc {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value_t = 0.4)]
        iou: f64,
        /// Comma-separated false-positives-per-image rates
        #[arg(long, default_value = "0.25,0.5,1,2,4", value_delimiter = ',')]
        fppi: Vec<f64>,
        #[arg(long, default_value_t = 10_000)]
        bootstrap: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Restrict ground-truth boxes to one rater id
        #[arg(long)]
        gt_rater: Option<String>,
        /// Directory for per-finding FROC curves (SVG + CSV sidecar)
        #[arg(long)]
        froc_svg: Option<PathBuf>,
        #[arg(long)]
        lenient: bool,
    },
    /// Inter-rater (and model-vs-rater) agreement tables
    Agreement {
        #[arg(long)]
        reads: PathBuf,
        #[arg(long, value_parser = parse_session)]
        session: Session,
        #[arg(long, default_value_t = 0)]
        bootstrap: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        lenient: bool,
    },
    /// Before/after-assistance kappa deltas from two agreement reports
    ReaderStudy {
        #[arg(long)]
        before: PathBuf,
        #[arg(long)]
        after: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Consolidate report files into one document plus a text summary
    Report {
        #[arg(long, num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_session(s: &str) -> Result<Session, String> {
    match s {
        "unassisted" => Ok(Session::Unassisted),
        "assisted" => Ok(Session::Assisted),
        "model" => Ok(Session::Model),
        other => Err(format!("unknown session {other:?}")),
    }
}

fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.or_else(|| {
        std::env::var("CXR_EVAL_SEED")
            .ok()
            .and_then(|v| v.parse().ok())
    })
    .unwrap_or(0)
}

const MODEL_RATER_ID: &str = "AI";

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli.command) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Ingest {
            in_dir,
            out_dir,
            png,
            tensor,
            no_deid,
        } => cmd_ingest(&in_dir, &out_dir, png, tensor, no_deid),
        Command::ClassifyEval {
            pred,
            gt,
            thresholds,
            youden,
            bootstrap,
            seed,
            out,
            roc_svg,
            lenient,
        } => cmd_classify_eval(
            &pred, &gt, thresholds.as_deref(), youden, bootstrap, resolve_seed(seed), &out,
            roc_svg.as_deref(), !lenient,
        ),
        Command::Froc {
            pred,
            gt,
            iou,
            fppi,
            bootstrap,
            seed,
            out,
            gt_rater,
            froc_svg,
            lenient,
        } => cmd_froc(
            &pred, &gt, iou, &fppi, bootstrap, resolve_seed(seed), &out,
            gt_rater.as_deref(), froc_svg.as_deref(), !lenient,
        ),
        Command::Agreement {
            reads,
            session,
            bootstrap,
            seed,
            out,
            lenient,
        } => cmd_agreement(&reads, session, bootstrap, resolve_seed(seed), &out, !lenient),
        Command::ReaderStudy { before, after, out } => cmd_reader_study(&before, &after, &out),
        Command::Report { inputs, out } => cmd_report(&inputs, &out),
    }
}

fn cmd_ingest(in_dir: &Path, out_dir: &Path, png: bool, tensor: bool, no_deid: bool) -> Result<()> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("cannot create {}", out_dir.display()))?;
    let mut entries: Vec<PathBuf> = std::fs::read_dir(in_dir)
        .with_context(|| format!("cannot read {}", in_dir.display()))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_file())
        .collect();
    entries.sort();
    let mut failures = 0usize;
    for path in &entries {
        match ingest_one(path, out_dir, png, tensor, no_deid) {
            Ok(()) => println!("OK {}", path.display()),
            Err(err) => {
                failures += 1;
                println!("FAIL {}: {err:#}", path.display());
            }
        }
    }
    if failures > 0 {
        bail!("{failures} of {} files failed", entries.len());
    }
    Ok(())
}

fn ingest_one(path: &Path, out_dir: &Path, png: bool, tensor: bool, no_deid: bool) -> Result<()> {
    let bytes = std::fs::read(path)?;
    let mut obj = parse_dicom(&bytes)?;
    if !no_deid {
        obj = deidentify(&obj);
    }
    let image = decode_pixels(&obj)?;
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("image");
    if png {
        export_png(&image, &out_dir.join(format!("{stem}.png")))?;
    }
    if tensor {
        let t = preprocess(&image);
        write_tensor(&t, &out_dir.join(format!("{stem}.cxrt")))?;
    }
    Ok(())
}

/// Consensus global labels per image from a ground-truth annotation file.
/// Multiple raters per image go through majority vote with the rater count
/// as quorum; a single rater is taken verbatim.
fn consensus_truth(
    reads: &[cxr_core::model::RaterRead],
) -> Result<BTreeMap<String, BTreeSet<String>>> {
    let mut by_image: BTreeMap<&str, Vec<&cxr_core::model::RaterRead>> = BTreeMap::new();
    for read in reads {
        by_image.entry(read.image_id.as_str()).or_default().push(read);
    }
    let mut truth = BTreeMap::new();
    for (image, image_reads) in by_image {
        let labels = if image_reads.len() == 1 {
            image_reads[0].global_labels.clone()
        } else {
            let policy = ConsensusPolicy::majority(image_reads.len())
                .map_err(|e| anyhow!("image {image}: {e}"))?;
            let owned: Vec<_> = image_reads.iter().map(|r| (*r).clone()).collect();
            consensus_global(&owned, policy).map_err(|e| anyhow!("image {image}: {e}"))?
        };
        truth.insert(image.to_string(), labels.into_iter().collect());
    }
    Ok(truth)
}

fn svg_file_name(label: &str) -> String {
    let safe: String = label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect();
    format!("{safe}.svg")
}

#[allow(clippy::too_many_arguments)]
fn cmd_classify_eval(
    pred: &Path,
    gt: &Path,
    thresholds: Option<&Path>,
    _youden: bool,
    bootstrap: usize,
    seed: u64,
    out: &Path,
    roc_svg: Option<&Path>,
    strict: bool,
) -> Result<()> {
    let predictions = load_predictions(pred, strict)?;
    let gt_reads = load_annotations(gt, Session::Unassisted, strict)?;
    let truth = consensus_truth(&gt_reads)?;
    let labels: Vec<String> = predictions.global_scores.keys().cloned().collect();
    if labels.is_empty() {
        bail!("no global-label scores in {}", pred.display());
    }
    let per_label = scored_sets(&predictions, &truth, &labels).map_err(|e| anyhow!(e))?;
    let policy = match thresholds {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read {}", path.display()))?;
            let map: BTreeMap<String, f64> = serde_json::from_str(&text)
                .with_context(|| format!("bad threshold file {}", path.display()))?;
            ThresholdPolicy::Fixed(map)
        }
        None => ThresholdPolicy::Youden,
    };
    let cfg = BootstrapConfig::new(bootstrap, seed);
    let table = per_label_classification_report(&per_label, &policy, cfg)?;

    if let Some(dir) = roc_svg {
        std::fs::create_dir_all(dir)?;
        for ls in &per_label {
            let mut curve = roc_curve(&ls.data)?;
            curve.label = ls.label.clone();
            emit_curve_svg(&curve, None, &dir.join(svg_file_name(&ls.label)))?;
        }
    }

    let policy_name = match &policy {
        ThresholdPolicy::Youden => "youden".to_string(),
        ThresholdPolicy::Fixed(_) => "fixed".to_string(),
    };
    let mut inputs = vec![pred, gt];
    if let Some(t) = thresholds {
        inputs.push(t);
    }
    let config = ReportConfig {
        seed,
        bootstrap,
        iou_threshold: None,
        fppi_rates: None,
        threshold_policy: Some(policy_name.clone()),
        session: None,
        config_hash: config_hash(
            &inputs,
            &format!("classify-eval --bootstrap {bootstrap} --seed {seed} --thresholds {policy_name}"),
        )?,
    };
    ReportEnvelope::new("classification", config, table).write(out)
}

#[allow(clippy::too_many_arguments)]
fn cmd_froc(
    pred: &Path,
    gt: &Path,
    iou: f64,
    fppi: &[f64],
    bootstrap: usize,
    seed: u64,
    out: &Path,
    gt_rater: Option<&str>,
    froc_svg: Option<&Path>,
    strict: bool,
) -> Result<()> {
    let predictions = load_predictions(pred, strict)?;
    let gt_reads = load_annotations(gt, Session::Unassisted, strict)?;
    let ground_truths = ground_truth_boxes(&gt_reads, gt_rater);
    let mut image_ids: BTreeSet<String> = gt_reads.iter().map(|r| r.image_id.clone()).collect();
    image_ids.extend(predictions.detections.iter().map(|d| d.image_id.clone()));
    let dataset = cxr_core::det::DetectionDataset {
        image_ids: image_ids.into_iter().collect(),
        detections: predictions.detections.clone(),
        ground_truths,
    };
    let classes: Vec<String> = dataset
        .ground_truths
        .iter()
        .map(|g| g.class.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if classes.is_empty() {
        bail!("no ground-truth boxes in {}", gt.display());
    }
    let cfg = BootstrapConfig::new(bootstrap, seed);
    let table = per_finding_detection_report(&dataset, &classes, fppi, iou, cfg)?;

    if let Some(dir) = froc_svg {
        std::fs::create_dir_all(dir)?;
        for class in &classes {
            let curve = froc_curve(&dataset, class, iou)?;
            emit_curve_svg(&curve.as_series(), None, &dir.join(svg_file_name(class)))?;
        }
    }

    let rates = fppi
        .iter()
        .map(|r| r.to_string())
        .collect::<Vec<_>>()
        .join(",");
    let config = ReportConfig {
        seed,
        bootstrap,
        iou_threshold: Some(iou),
        fppi_rates: Some(fppi.to_vec()),
        threshold_policy: None,
        session: None,
        config_hash: config_hash(
            &[pred, gt],
            &format!("froc --iou {iou} --fppi {rates} --bootstrap {bootstrap} --seed {seed} --gt-rater {gt_rater:?}"),
        )?,
    };
    ReportEnvelope::new("detection", config, table).write(out)
}

#[derive(serde::Serialize, serde::Deserialize)]
struct AgreementReportData {
    labels: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    inter_rater: Option<AgreementTable>,
    #[serde(skip_serializing_if = "Option::is_none")]
    model_vs_rater: Option<AgreementTable>,
}

fn cmd_agreement(
    reads_path: &Path,
    session: Session,
    bootstrap: usize,
    seed: u64,
    out: &Path,
    strict: bool,
) -> Result<()> {
    let reads = load_annotations(reads_path, session, strict)?;
    if reads.is_empty() {
        bail!("no reads in {}", reads_path.display());
    }
    let mut labels: BTreeSet<String> = BTreeSet::new();
    for read in &reads {
        labels.extend(read.global_labels.iter().cloned());
        labels.extend(read.findings.iter().map(|(c, _)| c.clone()));
    }
    labels.remove(NO_FINDING);
    let labels: Vec<String> = labels.into_iter().collect();
    if labels.is_empty() {
        bail!("no labels marked in {}", reads_path.display());
    }

    let cfg = (bootstrap > 0).then(|| BootstrapConfig::new(bootstrap, seed));
    let (model_reads, human_reads): (Vec<_>, Vec<_>) = reads
        .iter()
        .cloned()
        .partition(|r| r.rater_id == MODEL_RATER_ID);
    let human_rater_count = human_reads
        .iter()
        .map(|r| r.rater_id.clone())
        .collect::<BTreeSet<_>>()
        .len();
    let inter_rater = (human_rater_count >= 2)
        .then(|| agreement_table(&human_reads, &labels, cfg))
        .transpose()?;
    let model_vs_rater = (!model_reads.is_empty() && human_rater_count >= 1)
        .then(|| model_vs_rater_table(&model_reads, &human_reads, &labels, cfg))
        .transpose()?;
    if inter_rater.is_none() && model_vs_rater.is_none() {
        bail!("need at least two raters (or one rater plus {MODEL_RATER_ID})");
    }

    let session_name = match session {
        Session::Unassisted => "unassisted",
        Session::Assisted => "assisted",
        Session::Model => "model",
    };
    let config = ReportConfig {
        seed,
        bootstrap,
        iou_threshold: None,
        fppi_rates: None,
        threshold_policy: None,
        session: Some(session_name.to_string()),
        config_hash: config_hash(
            &[reads_path],
            &format!("agreement --session {session_name} --bootstrap {bootstrap} --seed {seed}"),
        )?,
    };
    let data = AgreementReportData {
        labels,
        inter_rater,
        model_vs_rater,
    };
    ReportEnvelope::new("agreement", config, data).write(out)
}

#[derive(serde::Serialize, serde::Deserialize)]
struct DeltaReportData {
    #[serde(skip_serializing_if = "Option::is_none")]
    inter_rater: Option<DeltaReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    model_vs_rater: Option<DeltaReport>,
}

fn read_agreement_report(path: &Path) -> Result<ReportEnvelope<AgreementReportData>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    let env: ReportEnvelope<AgreementReportData> = serde_json::from_str(&text)
        .with_context(|| format!("{} is not an agreement report", path.display()))?;
    if env.kind != "agreement" {
        bail!("{} has kind {:?}, expected \"agreement\"", path.display(), env.kind);
    }
    Ok(env)
}

fn cmd_reader_study(before: &Path, after: &Path, out: &Path) -> Result<()> {
    let b = read_agreement_report(before)?;
    let a = read_agreement_report(after)?;
    let inter_rater = match (&b.data.inter_rater, &a.data.inter_rater) {
        (Some(tb), Some(ta)) => Some(reader_study_delta(tb, ta)?),
        _ => None,
    };
    let model_vs_rater = match (&b.data.model_vs_rater, &a.data.model_vs_rater) {
        (Some(tb), Some(ta)) => Some(reader_study_delta(tb, ta)?),
        _ => None,
    };
    if inter_rater.is_none() && model_vs_rater.is_none() {
        bail!("no matching table pair between {} and {}", before.display(), after.display());
    }
    let config = ReportConfig {
        seed: b.config.seed,
        bootstrap: b.config.bootstrap,
        iou_threshold: None,
        fppi_rates: None,
        threshold_policy: None,
        session: None,
        config_hash: config_hash(&[before, after], "reader-study")?,
    };
    let data = DeltaReportData {
        inter_rater,
        model_vs_rater,
    };
    ReportEnvelope::new("reader-study-delta", config, data).write(out)
}

fn cmd_report(inputs: &[PathBuf], out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let mut sections: Vec<serde_json::Value> = Vec::new();
    let mut summary = String::new();
    for path in inputs {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read {}", path.display()))?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .with_context(|| format!("{} is not JSON", path.display()))?;
        let kind = value
            .get("kind")
            .and_then(|k| k.as_str())
            .unwrap_or("unknown")
            .to_string();
        let hash = value
            .pointer("/config/config_hash")
            .and_then(|h| h.as_str())
            .unwrap_or("-")
            .to_string();
        summary.push_str(&format!("section {kind} from {} (config {hash})\n", path.display()));
        sections.push(value);
    }
    let refs: Vec<&Path> = inputs.iter().map(|p| p.as_path()).collect();
    let document = serde_json::json!({
        "schema_version": cxr_cli::report::SCHEMA_VERSION,
        "tool_version": cxr_cli::report::TOOL_VERSION,
        "kind": "consolidated",
        "config_hash": config_hash(&refs, "report")?,
        "sections": sections,
    });
    let mut json = serde_json::to_string_pretty(&document)?;
    json.push('\n');
    std::fs::write(out_dir.join("report.json"), json)?;
    std::fs::write(out_dir.join("summary.txt"), summary)?;
    Ok(())
}
