//! Brute-force reference implementations of the boundary metrics.

use super::LabelMap;

/// Boundary pixels by direct neighbour inspection, row-major.
pub fn boundary_oracle(m: &LabelMap, class: u8) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for y in 0..m.height() {
        for x in 0..m.width() {
            if m.get(x, y) != class {
                continue;
            }
            let mut edge = false;
            if x > 0 && m.get(x - 1, y) != class {
                edge = true;
            }
            if x + 1 < m.width() && m.get(x + 1, y) != class {
                edge = true;
            }
            if y > 0 && m.get(x, y - 1) != class {
                edge = true;
            }
            if y + 1 < m.height() && m.get(x, y + 1) != class {
                edge = true;
            }
            if edge {
                out.push((x, y));
            }
        }
    }
    out
}

fn nearest(a: (usize, usize), set: &[(usize, usize)]) -> f64 {
    let d2 = set
        .iter()
        .map(|&b| {
            let dx = a.0 as i64 - b.0 as i64;
            let dy = a.1 as i64 - b.1 as i64;
            (dx * dx + dy * dy) as u64
        })
        .min()
        .expect("non-empty set");
    (d2 as f64).sqrt()
}

/// Symmetric Hausdorff distance over all boundary pairs.
pub fn hausdorff_oracle(pred: &LabelMap, gt: &LabelMap, class: u8) -> Option<f64> {
    let p = boundary_oracle(pred, class);
    let g = boundary_oracle(gt, class);
    if p.is_empty() || g.is_empty() {
        return None;
    }
    let pg = p.iter().map(|&a| nearest(a, &g)).fold(0.0, f64::max);
    let gp = g.iter().map(|&b| nearest(b, &p)).fold(0.0, f64::max);
    Some(pg.max(gp))
}

/// Mean of the two directed average nearest-boundary distances.
pub fn aad_oracle(pred: &LabelMap, gt: &LabelMap, class: u8) -> Option<f64> {
    let p = boundary_oracle(pred, class);
    let g = boundary_oracle(gt, class);
    if p.is_empty() || g.is_empty() {
        return None;
    }
    let pg = p.iter().map(|&a| nearest(a, &g)).sum::<f64>() / p.len() as f64;
    let gp = g.iter().map(|&b| nearest(b, &p)).sum::<f64>() / g.len() as f64;
    Some(0.5 * (pg + gp))
}

/// Intersection over union by set counting.
pub fn iou_oracle(pred: &LabelMap, gt: &LabelMap, class: u8) -> Option<f64> {
    let mut inter = 0usize;
    let mut union = 0usize;
    for (&a, &b) in pred.labels().iter().zip(gt.labels()) {
        let (pa, gb) = (a == class, b == class);
        inter += (pa && gb) as usize;
        union += (pa || gb) as usize;
    }
    (union > 0).then(|| inter as f64 / union as f64)
}
