//! Frame accuracy and phase-based precision, recall and Jaccard, strict and
//! with relaxed boundaries.

use serde::{Deserialize, Serialize};

use crate::error::{DacatError, Result};
use crate::types::PhaseTimeline;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl PhaseCounts {
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn jaccard(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp + self.fn_)
    }
}

// A phase that is never predicted has no defined precision; count it as 0.
fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub accuracy: f64,
    /// Means over the phases present in the ground truth.
    pub precision: f64,
    pub recall: f64,
    pub jaccard: f64,
    /// Confusion counts per phase id; `None` for phases absent from the ground truth.
    pub per_phase: Vec<Option<PhaseCounts>>,
}

impl MetricReport {
    pub fn phase_jaccard(&self, phase: usize) -> Option<f64> {
        self.per_phase.get(phase).copied().flatten().map(|c| c.jaccard())
    }
}

fn check_pair(pred: &PhaseTimeline, gt: &PhaseTimeline) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(DacatError::LengthMismatch {
            left: pred.len(),
            right: gt.len(),
        });
    }
    if gt.is_empty() {
        return Err(DacatError::EmptyInput("timeline"));
    }
    Ok(())
}

pub fn strict_metrics(pred: &PhaseTimeline, gt: &PhaseTimeline, num_phases: usize) -> Result<MetricReport> {
    check_pair(pred, gt)?;
    let mut counts = vec![PhaseCounts::default(); num_phases];
    let mut present = vec![false; num_phases];
    let mut correct = 0usize;
    for (&p, &g) in pred.labels().iter().zip(gt.labels()) {
        for label in [p, g] {
            if label >= num_phases {
                return Err(DacatError::LabelOutOfRange { label, num_phases });
            }
        }
        present[g] = true;
        if p == g {
            correct += 1;
            counts[g].tp += 1;
        } else {
            counts[p].fp += 1;
            counts[g].fn_ += 1;
        }
    }
    let per_phase: Vec<Option<PhaseCounts>> = counts
        .into_iter()
        .zip(&present)
        .map(|(c, &here)| here.then_some(c))
        .collect();
    let used: Vec<&PhaseCounts> = per_phase.iter().flatten().collect();
    let mean = |f: fn(&PhaseCounts) -> f64| used.iter().map(|c| f(c)).sum::<f64>() / used.len() as f64;
    Ok(MetricReport {
        accuracy: correct as f64 / gt.len() as f64,
        precision: mean(PhaseCounts::precision),
        recall: mean(PhaseCounts::recall),
        jaccard: mean(PhaseCounts::jaccard),
        per_phase,
    })
}

/// Forgives predictions that lag or lead a ground-truth transition by at most
/// `w = round(window_s * fps)` frames.
///
/// After a transition `prev -> cur` at frame `b`, frames in `[b, b + w)`
/// predicted as `prev` become `cur`. Before it, frames in `[b - w, b)`
/// predicted as `cur` become `prev`. Windows stop at neighbouring
/// transitions.
pub fn relax_boundaries(
    pred: &PhaseTimeline,
    gt: &PhaseTimeline,
    window_s: f64,
    fps: f64,
) -> Result<PhaseTimeline> {
    check_pair(pred, gt)?;
    if !(window_s >= 0.0 && fps > 0.0 && window_s.is_finite() && fps.is_finite()) {
        return Err(DacatError::InvalidConfig(format!(
            "relaxation window {window_s}s at {fps} fps"
        )));
    }
    let w = (window_s * fps).round() as usize;
    let g = gt.labels();
    let mut out = pred.labels().to_vec();
    let bounds: Vec<usize> = (1..g.len()).filter(|&i| g[i] != g[i - 1]).collect();
    for (k, &b) in bounds.iter().enumerate() {
        let (prev, cur) = (g[b - 1], g[b]);
        let seg_end = bounds.get(k + 1).copied().unwrap_or(g.len());
        let seg_start = if k == 0 { 0 } else { bounds[k - 1] };
        for i in b..seg_end.min(b + w) {
            if pred.labels()[i] == prev {
                out[i] = cur;
            }
        }
        for i in seg_start.max(b.saturating_sub(w))..b {
            if pred.labels()[i] == cur {
                out[i] = prev;
            }
        }
    }
    PhaseTimeline::new(out, pred.num_phases().max(gt.num_phases()))
        .map(|t| t.with_fps(pred.fps))
}

pub fn relaxed_metrics(
    pred: &PhaseTimeline,
    gt: &PhaseTimeline,
    num_phases: usize,
    window_s: f64,
    fps: f64,
) -> Result<MetricReport> {
    strict_metrics(&relax_boundaries(pred, gt, window_s, fps)?, gt, num_phases)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub accuracy: MeanStd,
    pub precision: MeanStd,
    pub recall: MeanStd,
    pub jaccard: MeanStd,
}

/// Mean and population std across videos of the per-video metrics.
pub fn aggregate(reports: &[MetricReport]) -> Result<AggregateReport> {
    if reports.is_empty() {
        return Err(DacatError::EmptyInput("metric reports"));
    }
    let col = |f: fn(&MetricReport) -> f64| MeanStd::of(&reports.iter().map(f).collect::<Vec<_>>());
    Ok(AggregateReport {
        accuracy: col(|r| r.accuracy),
        precision: col(|r| r.precision),
        recall: col(|r| r.recall),
        jaccard: col(|r| r.jaccard),
    })
}

pub const REPORT_HEADER: &str = "video,accuracy,precision,recall,jaccard";

/// CSV with one row per named report, then `mean` and `std` rows.
pub fn reports_csv(rows: &[(String, MetricReport)]) -> Result<String> {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for (name, r) in rows {
        out.push_str(&format!(
            "{name},{:.6},{:.6},{:.6},{:.6}\n",
            r.accuracy, r.precision, r.recall, r.jaccard
        ));
    }
    let reports: Vec<MetricReport> = rows.iter().map(|(_, r)| r.clone()).collect();
    let agg = aggregate(&reports)?;
    out.push_str(&format!(
        "mean,{:.6},{:.6},{:.6},{:.6}\n",
        agg.accuracy.mean, agg.precision.mean, agg.recall.mean, agg.jaccard.mean
    ));
    out.push_str(&format!(
        "std,{:.6},{:.6},{:.6},{:.6}\n",
        agg.accuracy.std, agg.precision.std, agg.recall.std, agg.jaccard.std
    ));
    Ok(out)
}
