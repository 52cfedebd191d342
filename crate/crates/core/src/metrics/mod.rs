//! Per-class overlap and boundary-distance metrics on hard label maps.
//!
//! Boundaries are inner boundaries under 4-connectivity: a pixel of class
//! `c` is on the boundary when an in-bounds 4-neighbour has another class.
//! Distances are in pixels. A metric that cannot be computed (empty class or
//! empty boundary) is absent rather than zero or infinite.

mod distance;
pub mod oracle;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::classes::{ClassOrder, NUM_CLASSES};
use crate::error::{shape_err, Error, Result};
use crate::par;

pub use distance::squared_edt;

/// Row-major map of class labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    width: usize,
    height: usize,
    labels: Vec<u8>,
}

impl LabelMap {
    pub fn new(width: usize, height: usize, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(shape_err(
                "label_map",
                format!("{} labels for {width}x{height}", labels.len()),
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= NUM_CLASSES) {
            return Err(Error::InvalidArgument(format!("label {bad} out of range")));
        }
        Ok(LabelMap { width, height, labels })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    pub fn contains(&self, class: u8) -> bool {
        self.labels.contains(&class)
    }

    fn boundary_mask(&self, class: u8) -> Vec<bool> {
        let (w, h) = (self.width, self.height);
        let mut mask = vec![false; w * h];
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                if self.labels[i] != class {
                    continue;
                }
                mask[i] = (x > 0 && self.labels[i - 1] != class)
                    || (x + 1 < w && self.labels[i + 1] != class)
                    || (y > 0 && self.labels[i - w] != class)
                    || (y + 1 < h && self.labels[i + w] != class);
            }
        }
        mask
    }
}

/// Boundary pixels of `class` as `(x, y)` in row-major order.
pub fn boundary_pixels(m: &LabelMap, class: u8) -> Vec<(usize, usize)> {
    m.boundary_mask(class)
        .iter()
        .enumerate()
        .filter(|(_, &b)| b)
        .map(|(i, _)| (i % m.width, i / m.width))
        .collect()
}

fn check_dims(pred: &LabelMap, gt: &LabelMap) -> Result<()> {
    if pred.width != gt.width || pred.height != gt.height {
        return Err(shape_err(
            "metrics",
            format!(
                "prediction {}x{} vs ground truth {}x{}",
                pred.width, pred.height, gt.width, gt.height
            ),
        ));
    }
    Ok(())
}

pub fn iou(pred: &LabelMap, gt: &LabelMap, class: u8) -> Result<Option<f64>> {
    check_dims(pred, gt)?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&a, &b) in pred.labels.iter().zip(&gt.labels) {
        inter += (a == class && b == class) as usize;
        union += (a == class || b == class) as usize;
    }
    Ok((union > 0).then(|| inter as f64 / union as f64))
}

/// Nearest-boundary distances in both directions, row-major over each set.
struct Directed {
    pred_to_gt: Vec<f64>,
    gt_to_pred: Vec<f64>,
}

fn directed(pred: &LabelMap, gt: &LabelMap, class: u8) -> Result<Option<Directed>> {
    check_dims(pred, gt)?;
    let (w, h) = (pred.width, pred.height);
    let bp = pred.boundary_mask(class);
    let bg = gt.boundary_mask(class);
    if !bp.contains(&true) || !bg.contains(&true) {
        return Ok(None);
    }
    let to_g = squared_edt(w, h, &bg);
    let to_p = squared_edt(w, h, &bp);
    let pick = |mask: &[bool], dist: &[Option<u64>]| -> Vec<f64> {
        mask.iter()
            .zip(dist)
            .filter(|(&b, _)| b)
            .map(|(_, d)| (d.expect("non-empty boundary") as f64).sqrt())
            .collect()
    };
    Ok(Some(Directed {
        pred_to_gt: pick(&bp, &to_g),
        gt_to_pred: pick(&bg, &to_p),
    }))
}

/// Symmetric Hausdorff distance between the class boundaries.
pub fn hausdorff(pred: &LabelMap, gt: &LabelMap, class: u8) -> Result<Option<f64>> {
    Ok(directed(pred, gt, class)?.map(|d| hd_of(&d)))
}

/// Average absolute boundary distance, symmetrised over both directions.
pub fn aad(pred: &LabelMap, gt: &LabelMap, class: u8) -> Result<Option<f64>> {
    Ok(directed(pred, gt, class)?.map(|d| aad_of(&d)))
}

fn hd_of(d: &Directed) -> f64 {
    let a = d.pred_to_gt.iter().copied().fold(0.0, f64::max);
    let b = d.gt_to_pred.iter().copied().fold(0.0, f64::max);
    a.max(b)
}

fn aad_of(d: &Directed) -> f64 {
    let a = d.pred_to_gt.iter().sum::<f64>() / d.pred_to_gt.len() as f64;
    let b = d.gt_to_pred.iter().sum::<f64>() / d.gt_to_pred.len() as f64;
    0.5 * (a + b)
}

/// Why a metric entry is absent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Absence {
    EmptyPrediction,
    EmptyGroundTruth,
    EmptyBoth,
    /// Class present but one of the maps has no boundary pixels for it,
    /// e.g. the class fills the whole image.
    NoBoundary,
}

impl Absence {
    pub fn as_str(self) -> &'static str {
        match self {
            Absence::EmptyPrediction => "empty prediction",
            Absence::EmptyGroundTruth => "empty ground truth",
            Absence::EmptyBoth => "empty both",
            Absence::NoBoundary => "no boundary",
        }
    }
}

impl FromStr for Absence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Absence::EmptyPrediction,
            Absence::EmptyGroundTruth,
            Absence::EmptyBoth,
            Absence::NoBoundary,
        ]
        .into_iter()
        .find(|a| a.as_str() == s)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown absence reason {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Iou,
    Hd,
    Aad,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Iou, Metric::Hd, Metric::Aad];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Iou => "iou",
            Metric::Hd => "hd",
            Metric::Aad => "aad",
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown metric {s:?}")))
    }
}

/// A metric value, or the reason it could not be computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Entry {
    Defined(f64),
    Absent(Absence),
}

impl Entry {
    pub fn value(self) -> Option<f64> {
        match self {
            Entry::Defined(v) => Some(v),
            Entry::Absent(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: u8,
    pub iou: Entry,
    pub hd: Entry,
    pub aad: Entry,
}

impl ClassMetrics {
    pub fn get(&self, m: Metric) -> Entry {
        match m {
            Metric::Iou => self.iou,
            Metric::Hd => self.hd,
            Metric::Aad => self.aad,
        }
    }

    fn get_mut(&mut self, m: Metric) -> &mut Entry {
        match m {
            Metric::Iou => &mut self.iou,
            Metric::Hd => &mut self.hd,
            Metric::Aad => &mut self.aad,
        }
    }
}

/// Metrics for every class of one prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub class_order: ClassOrder,
    pub classes: Vec<ClassMetrics>,
}

impl MetricsReport {
    /// Number of classes with a defined value for `m`.
    pub fn contributing(&self, m: Metric) -> usize {
        self.classes.iter().filter(|c| c.get(m).value().is_some()).count()
    }

    /// Mean over classes with a defined value, if any.
    pub fn mean(&self, m: Metric) -> Option<f64> {
        mean_defined(self.classes.iter().map(|c| c.get(m)))
    }

    /// Mean over the given labels only.
    pub fn mean_over(&self, m: Metric, labels: &[u8]) -> Option<f64> {
        mean_defined(
            self.classes
                .iter()
                .filter(|c| labels.contains(&c.label))
                .map(|c| c.get(m)),
        )
    }

    pub fn class(&self, label: u8) -> Option<&ClassMetrics> {
        self.classes.iter().find(|c| c.label == label)
    }

    pub const CSV_HEADER: &'static str = "class,label,metric,value,defined,reason";

    /// One row per (class, metric).
    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for c in &self.classes {
            let name = self.class_order.class(c.label).name();
            for m in Metric::ALL {
                let (value, defined, reason) = match c.get(m) {
                    Entry::Defined(v) => (v.to_string(), 1, ""),
                    Entry::Absent(a) => (String::new(), 0, a.as_str()),
                };
                s.push_str(&format!(
                    "{name},{},{},{value},{defined},{reason}\n",
                    c.label,
                    m.as_str()
                ));
            }
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |line: usize, why: String| Error::InvalidArgument(format!("metrics csv line {line}: {why}"));
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == Self::CSV_HEADER => {}
            _ => return Err(bad(1, "missing header".into())),
        }
        let mut classes: Vec<ClassMetrics> = Vec::new();
        let mut order = ClassOrder::default().0;
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(bad(i + 1, format!("expected 6 fields, got {}", f.len())));
            }
            let label: u8 = f[1].parse().map_err(|_| bad(i + 1, format!("label {:?}", f[1])))?;
            if label as usize >= NUM_CLASSES {
                return Err(bad(i + 1, format!("label {label} out of range")));
            }
            let class = crate::classes::TissueClass::ALL
                .into_iter()
                .find(|c| c.name() == f[0])
                .ok_or_else(|| bad(i + 1, format!("class {:?}", f[0])))?;
            order[label as usize] = class;
            let metric: Metric = f[2].parse()?;
            let entry = match f[4] {
                "1" => Entry::Defined(f[3].parse().map_err(|_| bad(i + 1, format!("value {:?}", f[3])))?),
                "0" => Entry::Absent(f[5].parse()?),
                other => return Err(bad(i + 1, format!("defined flag {other:?}"))),
            };
            let idx = match classes.iter().position(|c| c.label == label) {
                Some(idx) => idx,
                None => {
                    classes.push(ClassMetrics {
                        label,
                        iou: Entry::Absent(Absence::EmptyBoth),
                        hd: Entry::Absent(Absence::EmptyBoth),
                        aad: Entry::Absent(Absence::EmptyBoth),
                    });
                    classes.len() - 1
                }
            };
            *classes[idx].get_mut(metric) = entry;
        }
        let class_order = ClassOrder::new(order)?;
        Ok(MetricsReport { class_order, classes })
    }
}

/// Mean of the defined entries.
pub fn mean_defined(entries: impl Iterator<Item = Entry>) -> Option<f64> {
    let (sum, n) = entries
        .filter_map(Entry::value)
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// All three metrics for all classes, with the default class order.
pub fn evaluate(pred: &LabelMap, gt: &LabelMap) -> Result<MetricsReport> {
    evaluate_with_order(pred, gt, ClassOrder::default())
}

pub fn evaluate_with_order(pred: &LabelMap, gt: &LabelMap, class_order: ClassOrder) -> Result<MetricsReport> {
    check_dims(pred, gt)?;
    let per_class = par::map_indices(NUM_CLASSES, |k| class_metrics(pred, gt, k as u8));
    let classes = per_class.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(MetricsReport { class_order, classes })
}

fn class_metrics(pred: &LabelMap, gt: &LabelMap, label: u8) -> Result<ClassMetrics> {
    let (in_p, in_g) = (pred.contains(label), gt.contains(label));
    let empty = match (in_p, in_g) {
        (true, true) => None,
        (false, true) => Some(Absence::EmptyPrediction),
        (true, false) => Some(Absence::EmptyGroundTruth),
        (false, false) => Some(Absence::EmptyBoth),
    };
    let iou = match iou(pred, gt, label)? {
        Some(v) => Entry::Defined(v),
        None => Entry::Absent(Absence::EmptyBoth),
    };
    let (hd, aad) = match (empty, directed(pred, gt, label)?) {
        (Some(a), _) => (Entry::Absent(a), Entry::Absent(a)),
        (None, None) => (Entry::Absent(Absence::NoBoundary), Entry::Absent(Absence::NoBoundary)),
        (None, Some(d)) => (Entry::Defined(hd_of(&d)), Entry::Defined(aad_of(&d))),
    };
    Ok(ClassMetrics { label, iou, hd, aad })
}

/// Number of 4-connected components of wrongly labelled pixels, where a
/// component groups neighbouring errors sharing the same predicted label.
pub fn error_components(pred: &LabelMap, gt: &LabelMap) -> Result<usize> {
    check_dims(pred, gt)?;
    let (w, h) = (pred.width, pred.height);
    let wrong: Vec<bool> = pred.labels.iter().zip(&gt.labels).map(|(a, b)| a != b).collect();
    let mut seen = vec![false; w * h];
    let mut count = 0;
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !wrong[start] || seen[start] {
            continue;
        }
        count += 1;
        let label = pred.labels[start];
        seen[start] = true;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            let mut visit = |j: usize| {
                if wrong[j] && !seen[j] && pred.labels[j] == label {
                    seen[j] = true;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
    }
    Ok(count)
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<12}{:>10}{:>10}{:>10}", "class", "iou", "hd", "aad")?;
        let cell = |e: Entry| e.value().map_or("-".to_string(), |v| format!("{v:.4}"));
        for c in &self.classes {
            writeln!(
                f,
                "{:<12}{:>10}{:>10}{:>10}",
                self.class_order.class(c.label).name(),
                cell(c.iou),
                cell(c.hd),
                cell(c.aad)
            )?;
        }
        Ok(())
    }
}
