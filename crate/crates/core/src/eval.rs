//! Per-slot confusion counts, ROC-derived metrics and corpus runs.

use std::ops::{Add, AddAssign};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detect::{detect_pipeline, DetectConfig};
use crate::error::{Error, Result};
use crate::io::{load_annotation, load_image, ImageFormat};
use crate::sim::SUMMARY_FILE;
use crate::solver::{PenaltyMode, SolverConfig};
use crate::wake::{DetectionReport, GroundTruthAnnotation};

/// Slot outcome tallies. Fractional values are allowed so that published
/// percentages can be fed in directly.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: f64,
    pub tn: f64,
    pub fp: f64,
    #[serde(rename = "fn")]
    pub fn_: f64,
}

impl ConfusionCounts {
    pub fn new(tp: f64, tn: f64, fp: f64, fn_: f64) -> Result<Self> {
        for v in [tp, tn, fp, fn_] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::param(format!(
                    "counts must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(ConfusionCounts { tp, tn, fp, fn_ })
    }

    pub fn total(&self) -> f64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// Each count as a percentage of the total.
    pub fn percentages(&self) -> [f64; 4] {
        let t = self.total();
        [self.tp, self.tn, self.fp, self.fn_].map(|v| if t > 0.0 { 100.0 * v / t } else { 0.0 })
    }

    /// False positives over all slots.
    pub fn fp_rate(&self) -> f64 {
        let t = self.total();
        if t > 0.0 {
            self.fp / t
        } else {
            0.0
        }
    }
}

impl Add for ConfusionCounts {
    type Output = ConfusionCounts;

    fn add(self, o: ConfusionCounts) -> ConfusionCounts {
        ConfusionCounts {
            tp: self.tp + o.tp,
            tn: self.tn + o.tn,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
        }
    }
}

impl AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: ConfusionCounts) {
        *self = *self + o;
    }
}

impl std::iter::Sum for ConfusionCounts {
    fn sum<I: Iterator<Item = ConfusionCounts>>(iter: I) -> Self {
        iter.fold(ConfusionCounts::default(), Add::add)
    }
}

/// Compares validated flags with visibility flags slot by slot.
pub fn confusion(
    report: &DetectionReport,
    truth: &GroundTruthAnnotation,
) -> Result<ConfusionCounts> {
    if report.id != truth.id {
        return Err(Error::param(format!(
            "report `{}` compared with annotation `{}`",
            report.id, truth.id
        )));
    }
    let mut c = ConfusionCounts::default();
    for (pred, vis) in report.validated().into_iter().zip(truth.visible) {
        match (pred, vis) {
            (true, true) => c.tp += 1.0,
            (false, false) => c.tn += 1.0,
            (true, false) => c.fp += 1.0,
            (false, true) => c.fn_ += 1.0,
        }
    }
    Ok(c)
}

/// Table-style summary metrics. `None` marks a ratio whose denominator is
/// zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub accuracy: f64,
    pub f1: Option<f64>,
    pub lr_plus: Option<f64>,
    pub youden_j: Option<f64>,
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den > 0.0).then(|| num / den)
}

pub fn metrics(c: &ConfusionCounts) -> Result<MetricSet> {
    let c = ConfusionCounts::new(c.tp, c.tn, c.fp, c.fn_)?;
    let total = c.total();
    if total <= 0.0 {
        return Err(Error::Empty("confusion counts are all zero".into()));
    }
    let sensitivity = ratio(c.tp, c.tp + c.fn_);
    let specificity = ratio(c.tn, c.tn + c.fp);
    let lr_plus = match (sensitivity, specificity) {
        (Some(se), Some(sp)) => ratio(se, 1.0 - sp),
        _ => None,
    };
    let youden_j = match (sensitivity, specificity) {
        (Some(se), Some(sp)) => Some(se + sp - 1.0),
        _ => None,
    };
    Ok(MetricSet {
        accuracy: (c.tp + c.tn) / total,
        f1: ratio(2.0 * c.tp, 2.0 * c.tp + c.fp + c.fn_),
        lr_plus,
        youden_j,
    })
}

/// One image of a corpus on disk.
#[derive(Debug, Clone)]
pub struct CorpusEntry {
    pub annotation: GroundTruthAnnotation,
    pub image: PathBuf,
}

const IMAGE_EXTENSIONS: [&str; 3] = ["raw", "png", "pgm"];

/// Every `<id>.txt` annotation in `dir` (except the summary) with its
/// image, sorted by id.
pub fn load_corpus(dir: &Path) -> Result<Vec<CorpusEntry>> {
    let listing = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in listing {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_txt = path.extension().is_some_and(|e| e == "txt");
        if is_txt && path.file_name().is_some_and(|n| n != SUMMARY_FILE) {
            paths.push(path);
        }
    }
    paths.sort();
    let mut out = Vec::with_capacity(paths.len());
    for path in paths {
        let annotation = load_annotation(&path)?;
        let image = IMAGE_EXTENSIONS
            .iter()
            .map(|ext| path.with_extension(ext))
            .find(|p| p.is_file())
            .ok_or_else(|| {
                Error::format("corpus", format!("{}: no matching image", path.display()))
            })?;
        out.push(CorpusEntry { annotation, image });
    }
    if out.is_empty() {
        return Err(Error::Empty(format!("{}: no annotations", dir.display())));
    }
    Ok(out)
}

/// Aggregate outcome of one penalty mode over a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeResult {
    pub mode: PenaltyMode,
    pub images: usize,
    pub counts: ConfusionCounts,
    pub metrics: MetricSet,
    pub reports: Vec<DetectionReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub modes: Vec<ModeResult>,
}

fn fmt_metric(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |v| format!("{v:.4}"))
}

impl Comparison {
    pub fn get(&self, mode: PenaltyMode) -> Option<&ModeResult> {
        self.modes.iter().find(|m| m.mode == mode)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "mode,images,tp,tn,fp,fn,tp_pct,tn_pct,fp_pct,fn_pct,accuracy,f1,lr_plus,youden_j\n",
        );
        for m in &self.modes {
            let c = &m.counts;
            let p = c.percentages();
            out.push_str(&format!(
                "{},{},{},{},{},{},{:.2},{:.2},{:.2},{:.2},{:.4},{},{},{}\n",
                m.mode,
                m.images,
                c.tp,
                c.tn,
                c.fp,
                c.fn_,
                p[0],
                p[1],
                p[2],
                p[3],
                m.metrics.accuracy,
                fmt_metric(m.metrics.f1),
                fmt_metric(m.metrics.lr_plus),
                fmt_metric(m.metrics.youden_j),
            ));
        }
        out
    }

    /// Aligned text with a rates block and a metrics block.
    pub fn to_table(&self) -> String {
        let width = self
            .modes
            .iter()
            .map(|m| m.mode.as_str().len())
            .max()
            .unwrap_or(0)
            .max(6);
        let mut out = format!(
            "{:<width$} {:>8} {:>8} {:>8} {:>8}\n",
            "method", "TP %", "TN %", "FP %", "FN %"
        );
        for m in &self.modes {
            let p = m.counts.percentages();
            out.push_str(&format!(
                "{:<width$} {:>8.2} {:>8.2} {:>8.2} {:>8.2}\n",
                m.mode.as_str(),
                p[0],
                p[1],
                p[2],
                p[3]
            ));
        }
        out.push('\n');
        out.push_str(&format!(
            "{:<width$} {:>9} {:>9} {:>9} {:>9}\n",
            "method", "accuracy", "F1", "LR+", "J"
        ));
        for m in &self.modes {
            let s = &m.metrics;
            out.push_str(&format!(
                "{:<width$} {:>9.4} {:>9} {:>9} {:>9}\n",
                m.mode.as_str(),
                s.accuracy,
                fmt_metric(s.f1),
                fmt_metric(s.lr_plus),
                fmt_metric(s.youden_j)
            ));
        }
        out
    }
}

/// Detects every corpus image under each mode and tallies the slots.
/// `jobs = 0` uses all cores. Output order follows `modes` and image ids.
pub fn run_corpus(
    dir: &Path,
    scfg: &SolverConfig,
    dcfg: &DetectConfig,
    modes: &[PenaltyMode],
    jobs: usize,
) -> Result<Comparison> {
    scfg.validate()?;
    dcfg.validate()?;
    if modes.is_empty() {
        return Err(Error::param("no penalty modes requested"));
    }
    let entries = load_corpus(dir)?;
    let tasks: Vec<(PenaltyMode, &CorpusEntry)> = modes
        .iter()
        .flat_map(|&m| entries.iter().map(move |e| (m, e)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::param(format!("thread pool: {e}")))?;
    let outcomes: Vec<Result<(DetectionReport, ConfusionCounts)>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|(mode, entry)| {
                let img = load_image(&entry.image, ImageFormat::from_path(&entry.image)?)?;
                let cfg = SolverConfig {
                    penalty: *mode,
                    ..scfg.clone()
                };
                let report = detect_pipeline(&entry.annotation.id, &img, &cfg, dcfg)?.report;
                let counts = confusion(&report, &entry.annotation)?;
                Ok((report, counts))
            })
            .collect()
    });
    let mut outcomes = outcomes.into_iter();
    let mut results = Vec::with_capacity(modes.len());
    for &mode in modes {
        let mut reports = Vec::with_capacity(entries.len());
        let mut counts = ConfusionCounts::default();
        for _ in 0..entries.len() {
            let (r, c) = outcomes.next().expect("one outcome per task")?;
            reports.push(r);
            counts += c;
        }
        results.push(ModeResult {
            mode,
            images: entries.len(),
            counts,
            metrics: metrics(&counts)?,
            reports,
        });
    }
    Ok(Comparison { modes: results })
}
