//! Read-out ablation: retrain stage 2 once per read-out strategy and compare
//! per-phase Jaccard on held-out videos.

use crate::data::Video;
use crate::error::{DacatError, Result};
use crate::eval::metrics::{aggregate, strict_metrics, MetricReport};
use crate::pipeline::{run_inference, train_dacat, CacheModel, DacatModel, TrainOptions};
use crate::types::{ModelConfig, Readout};

pub const READOUT_STRATEGIES: [Readout; 4] = [
    Readout::Adaptive,
    Readout::Fixed(10),
    Readout::Fixed(100),
    Readout::All,
];

/// Strict metrics of `model` on every video, each streamed from a fresh state.
pub fn evaluate_videos(model: &DacatModel, videos: &[Video]) -> Result<Vec<MetricReport>> {
    videos
        .iter()
        .map(|v| {
            let log = run_inference(model, &v.observations)?;
            strict_metrics(&log.timeline, &v.labels, model.config.num_phases)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub strategy: Readout,
    /// Per phase, mean Jaccard over the videos containing it (`None` if no video does).
    pub phase_jaccard: Vec<Option<f64>>,
    /// Mean per-video Jaccard.
    pub overall: f64,
}

impl AblationRow {
    pub fn from_reports(strategy: Readout, num_phases: usize, reports: &[MetricReport]) -> Result<Self> {
        let phase_jaccard = (0..num_phases)
            .map(|k| {
                let vals: Vec<f64> = reports.iter().filter_map(|r| r.phase_jaccard(k)).collect();
                (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
            })
            .collect();
        Ok(Self {
            strategy,
            phase_jaccard,
            overall: aggregate(reports)?.jaccard.mean,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationTable {
    pub num_phases: usize,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    /// `strategy,phase_0,..,phase_{K-1},overall`; absent phases are left empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("strategy");
        for k in 0..self.num_phases {
            out.push_str(&format!(",phase_{k}"));
        }
        out.push_str(",overall\n");
        for row in &self.rows {
            out.push_str(&row.strategy.to_string());
            for j in &row.phase_jaccard {
                match j {
                    Some(v) => out.push_str(&format!(",{v:.6}")),
                    None => out.push(','),
                }
            }
            out.push_str(&format!(",{:.6}\n", row.overall));
        }
        out
    }
}

/// Trains stage 2 once per strategy from the same stage-1 model and seed, and
/// evaluates each on `test`.
pub fn ablate_readout(
    train: &[Video],
    test: &[Video],
    stage1: &CacheModel,
    config: &ModelConfig,
    opts: &TrainOptions,
    strategies: &[Readout],
) -> Result<AblationTable> {
    if strategies.is_empty() {
        return Err(DacatError::EmptyInput("read-out strategies"));
    }
    let rows = strategies
        .iter()
        .map(|&strategy| {
            let cfg = ModelConfig {
                readout: strategy,
                ..config.clone()
            };
            let (model, _) = train_dacat(train, stage1, &cfg, opts)?;
            let reports = evaluate_videos(&model, test)?;
            log::info!("read-out {strategy}: jaccard {:.4}", aggregate(&reports)?.jaccard.mean);
            AblationRow::from_reports(strategy, config.num_phases, &reports)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AblationTable {
        num_phases: config.num_phases,
        rows,
    })
}
