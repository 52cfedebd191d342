use std::path::{Path, PathBuf};

use super::{Checkpoint, TrainConfig};
use crate::classes::{ClassOrder, TissueClass, NUM_CLASSES};
use crate::data::{normalize, preprocess, Fold, Sample};
use crate::error::{Error, Result};
use crate::losses::hard_labels;
use crate::metrics::{evaluate_with_order, mean_defined, Entry, LabelMap, Metric, MetricsReport};
use crate::model::{forward, ParamStore};
use crate::tensor::Tensor;

/// Checkpoint file for fold `k` (zero-based) inside `dir`.
pub fn fold_checkpoint_path(dir: &Path, fold: usize) -> PathBuf {
    dir.join(format!("fold{}.a2dm", fold + 1))
}

/// Samples of `ids`, in that order.
pub fn select(samples: &[Sample], ids: &[String]) -> Result<Vec<Sample>> {
    ids.iter()
        .map(|id| {
            samples
                .iter()
                .find(|s| &s.id == id)
                .cloned()
                .ok_or_else(|| Error::InvalidArgument(format!("unknown sample id {id}")))
        })
        .collect()
}

/// Hard-label prediction at network resolution.
pub fn predict_mask(cfg: &TrainConfig, params: &ParamStore<f32>, sample: &Sample) -> Result<LabelMap> {
    let s = cfg.arch.image_size;
    let (img, _) = normalize::<f32>(sample);
    let x = Tensor::new(&[1, 1, s, s], img.into_data())?;
    let probs = forward(&cfg.arch, params, &x)?;
    LabelMap::new(s, s, hard_labels(&probs)?)
}

/// One row per (fold, class); `fold = None` marks the average across folds.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldRow {
    pub fold: Option<usize>,
    pub class: TissueClass,
    pub iou: Option<f64>,
    pub hd: Option<f64>,
    pub aad: Option<f64>,
}

impl FoldRow {
    pub fn get(&self, m: Metric) -> Option<f64> {
        match m {
            Metric::Iou => self.iou,
            Metric::Hd => self.hd,
            Metric::Aad => self.aad,
        }
    }
}

/// Per-fold, per-class metrics averaged over test images, plus the mean
/// across folds of every defined per-fold entry.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldReport {
    pub rows: Vec<FoldRow>,
}

fn entry(v: Option<f64>) -> Entry {
    v.map_or(Entry::Absent(crate::metrics::Absence::EmptyBoth), Entry::Defined)
}

impl FoldReport {
    pub const CSV_HEADER: &'static str = "fold,class,iou,hd,aad,defined";

    /// Aggregate image-level reports grouped by fold.
    pub fn from_reports(per_fold: &[Vec<MetricsReport>], order: &ClassOrder) -> FoldReport {
        let mut rows = Vec::new();
        for (k, reports) in per_fold.iter().enumerate() {
            for label in 0..NUM_CLASSES as u8 {
                let pick = |m: Metric| {
                    mean_defined(reports.iter().filter_map(|r| r.class(label)).map(|c| c.get(m)))
                };
                rows.push(FoldRow {
                    fold: Some(k),
                    class: order.class(label),
                    iou: pick(Metric::Iou),
                    hd: pick(Metric::Hd),
                    aad: pick(Metric::Aad),
                });
            }
        }
        let folds = rows.clone();
        for label in 0..NUM_CLASSES as u8 {
            let class = order.class(label);
            let pick = |m: Metric| mean_defined(folds.iter().filter(|r| r.class == class).map(|r| entry(r.get(m))));
            rows.push(FoldRow { fold: None, class, iou: pick(Metric::Iou), hd: pick(Metric::Hd), aad: pick(Metric::Aad) });
        }
        FoldReport { rows }
    }

    pub fn averages(&self) -> impl Iterator<Item = &FoldRow> {
        self.rows.iter().filter(|r| r.fold.is_none())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        let cell = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        for r in &self.rows {
            let fold = r.fold.map_or("mean".to_string(), |k| (k + 1).to_string());
            let defined = (r.iou.is_some() && r.hd.is_some() && r.aad.is_some()) as u8;
            s.push_str(&format!(
                "{fold},{},{},{},{},{defined}\n",
                r.class.name(),
                cell(r.iou),
                cell(r.hd),
                cell(r.aad)
            ));
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<FoldReport> {
        let bad = |line: usize, why: String| Error::InvalidArgument(format!("fold csv line {line}: {why}"));
        let mut lines = text.lines().enumerate();
        if lines.next().map(|(_, h)| h.trim()) != Some(Self::CSV_HEADER) {
            return Err(bad(1, "missing header".into()));
        }
        let mut rows = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(bad(i + 1, format!("expected 6 fields, got {}", f.len())));
            }
            let fold = match f[0] {
                "mean" => None,
                k => Some(k.parse::<usize>().map_err(|_| bad(i + 1, format!("fold {k:?}")))?.saturating_sub(1)),
            };
            let class = TissueClass::ALL
                .into_iter()
                .find(|c| c.name() == f[1])
                .ok_or_else(|| bad(i + 1, format!("class {:?}", f[1])))?;
            let num = |s: &str| -> Result<Option<f64>> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse().map(Some).map_err(|_| bad(i + 1, format!("value {s:?}")))
                }
            };
            let row = FoldRow { fold, class, iou: num(f[2])?, hd: num(f[3])?, aad: num(f[4])? };
            let defined = (row.iou.is_some() && row.hd.is_some() && row.aad.is_some()) as u8;
            if f[5] != defined.to_string() {
                return Err(bad(i + 1, format!("defined flag {:?} disagrees with values", f[5])));
            }
            rows.push(row);
        }
        Ok(FoldReport { rows })
    }
}

/// Evaluate fold `k`'s checkpoint on fold `k`'s test images, for every fold.
pub fn evaluate_folds(
    cfg: &TrainConfig,
    samples: &[Sample],
    folds: &[Fold],
    checkpoints: &[ParamStore<f32>],
) -> Result<FoldReport> {
    if checkpoints.len() != folds.len() {
        return Err(Error::InvalidArgument(format!(
            "{} checkpoints for {} folds",
            checkpoints.len(),
            folds.len()
        )));
    }
    let order = cfg.loss.class_order;
    let mut per_fold = Vec::with_capacity(folds.len());
    for (fold, params) in folds.iter().zip(checkpoints) {
        let mut reports = Vec::with_capacity(fold.test.len());
        for s in select(samples, &fold.test)? {
            let s = preprocess(&s, cfg.arch.image_size, &order)?;
            let pred = predict_mask(cfg, params, &s)?;
            reports.push(evaluate_with_order(&pred, &s.label_map(), order)?);
        }
        per_fold.push(reports);
    }
    Ok(FoldReport::from_reports(&per_fold, &order))
}

/// Load `fold{k}.a2dm` for every fold from `dir`.
pub fn load_fold_checkpoints(dir: &Path, folds: usize) -> Result<Vec<Checkpoint>> {
    (0..folds)
        .map(|k| {
            let path = fold_checkpoint_path(dir, k);
            if !path.exists() {
                return Err(Error::InvalidArgument(format!("missing checkpoint {}", path.display())));
            }
            Checkpoint::load(path)
        })
        .collect()
}
