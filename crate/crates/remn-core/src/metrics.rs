//! Region similarity J, contour accuracy F, and the bank redundancy
//! statistic.

use crate::error::{Error, Result};
use crate::memory::MemoryBank;
use crate::tensor::LabelMask;

fn object_labels(pred: &[LabelMask], gt: &[LabelMask]) -> u8 {
    pred.iter()
        .chain(gt)
        .map(|m| m.max_label())
        .max()
        .unwrap_or(0)
}

fn iou(pred: &LabelMask, gt: &LabelMask) -> f64 {
    let mut intersection = 0usize;
    let mut union = 0usize;
    for (&a, &b) in pred.data().iter().zip(gt.data()) {
        let (a, b) = (a > 0, b > 0);
        if a && b {
            intersection += 1;
        }
        if a || b {
            union += 1;
        }
    }
    if union == 0 {
        1.0 // both empty
    } else {
        intersection as f64 / union as f64
    }
}

fn check_sequences(pred: &[LabelMask], gt: &[LabelMask]) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::argument("sequence length mismatch"));
    }
    if pred.is_empty() {
        return Err(Error::argument("empty sequences"));
    }
    for (p, g) in pred.iter().zip(gt) {
        if p.height() != g.height() || p.width() != g.width() {
            return Err(Error::argument("mask shape mismatch"));
        }
    }
    Ok(())
}

/// Mean IoU over frames (excluding frame 0) and objects.
pub fn metric_j(pred: &[LabelMask], gt: &[LabelMask]) -> Result<f64> {
    check_sequences(pred, gt)?;
    let labels = object_labels(pred, gt).max(1);
    let mut total = 0.0;
    let mut count = 0usize;
    for (p, g) in pred.iter().zip(gt).skip(1) {
        for label in 1..=labels {
            total += iou(&p.binary_slice(label), &g.binary_slice(label));
            count += 1;
        }
    }
    if count == 0 {
        // single-frame sequence: the annotation is given, nothing is predicted
        return Ok(1.0);
    }
    Ok(total / count as f64)
}

/// Boundary pixels of a binary mask: foreground pixels whose 4-neighborhood
/// (with the image border counting as background) contains background.
fn boundary_pixels(mask: &LabelMask) -> Vec<(usize, usize)> {
    let (h, w) = (mask.height(), mask.width());
    let mut out = Vec::new();
    for i in 0..h {
        for j in 0..w {
            if mask.at(i, j) == 0 {
                continue;
            }
            let edge = (i == 0 || mask.at(i - 1, j) == 0)
                || (i + 1 == h || mask.at(i + 1, j) == 0)
                || (j == 0 || mask.at(i, j - 1) == 0)
                || (j + 1 == w || mask.at(i, j + 1) == 0);
            if edge {
                out.push((i, j));
            }
        }
    }
    out
}

fn boundary_match_fraction(from: &[(usize, usize)], to: &[(usize, usize)], tol: f64) -> f64 {
    if from.is_empty() {
        return 0.0;
    }
    let tol2 = tol * tol;
    let matched = from
        .iter()
        .filter(|&&(ai, aj)| {
            to.iter().any(|&(bi, bj)| {
                let di = ai as f64 - bi as f64;
                let dj = aj as f64 - bj as f64;
                di * di + dj * dj <= tol2
            })
        })
        .count();
    matched as f64 / from.len() as f64
}

fn f_measure(pred: &LabelMask, gt: &LabelMask, tol: f64) -> f64 {
    let pb = boundary_pixels(pred);
    let gb = boundary_pixels(gt);
    if pb.is_empty() && gb.is_empty() {
        return 1.0;
    }
    if pb.is_empty() || gb.is_empty() {
        return 0.0;
    }
    let precision = boundary_match_fraction(&pb, &gb, tol);
    let recall = boundary_match_fraction(&gb, &pb, tol);
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Default boundary tolerance: 0.8% of the image diagonal, at least 1 pixel.
pub fn default_f_tolerance(height: usize, width: usize) -> f64 {
    let diag = ((height * height + width * width) as f64).sqrt();
    (0.008 * diag).ceil().max(1.0)
}

/// Mean boundary F-measure over frames (excluding frame 0) and objects.
pub fn metric_f(pred: &[LabelMask], gt: &[LabelMask], tolerance: f64) -> Result<f64> {
    check_sequences(pred, gt)?;
    let labels = object_labels(pred, gt).max(1);
    let mut total = 0.0;
    let mut count = 0usize;
    for (p, g) in pred.iter().zip(gt).skip(1) {
        for label in 1..=labels {
            total += f_measure(&p.binary_slice(label), &g.binary_slice(label), tolerance);
            count += 1;
        }
    }
    if count == 0 {
        return Ok(1.0);
    }
    Ok(total / count as f64)
}

/// Mean pairwise cosine similarity between per-entry spatially pooled key
/// vectors; `None` when the bank holds fewer than two entries.
pub fn redundancy_score(bank: &MemoryBank) -> Option<f64> {
    if bank.len() < 2 {
        return None;
    }
    let pooled: Vec<Vec<f64>> = bank
        .entries()
        .iter()
        .map(|e| {
            let (h, w, c) = (e.key.shape()[0], e.key.shape()[1], e.key.shape()[2]);
            let mut v = vec![0.0; c];
            for p in 0..h * w {
                for ch in 0..c {
                    v[ch] += e.key.data()[p * c + ch];
                }
            }
            v.iter_mut().for_each(|x| *x /= (h * w) as f64);
            v
        })
        .collect();
    let mut total = 0.0;
    let mut pairs = 0usize;
    for a in 0..pooled.len() {
        for b in a + 1..pooled.len() {
            let dot: f64 = pooled[a].iter().zip(&pooled[b]).map(|(x, y)| x * y).sum();
            let na: f64 = pooled[a].iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb: f64 = pooled[b].iter().map(|x| x * x).sum::<f64>().sqrt();
            if na > 0.0 && nb > 0.0 {
                total += dot / (na * nb);
            }
            pairs += 1;
        }
    }
    Some(total / pairs as f64)
}
