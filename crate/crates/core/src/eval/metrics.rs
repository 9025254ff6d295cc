use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::ingest::PainClass;

fn same_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::LengthMismatch(a, b));
    }
    Ok(())
}

pub fn accuracy(predictions: &[PainClass], truth: &[PainClass]) -> Result<f64> {
    same_len(predictions.len(), truth.len())?;
    if truth.is_empty() {
        return Err(Error::EmptyInput);
    }
    let correct = predictions.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(correct as f64 / truth.len() as f64)
}

/// Probability that a random pain sample outscores a random no-pain sample,
/// ties counted as one half. Computed from mid-ranks in O(n log n).
pub fn auc(scores: &[f64], truth: &[PainClass]) -> Result<f64> {
    same_len(scores.len(), truth.len())?;
    let n_pos = truth.iter().filter(|t| t.is_pain()).count();
    let n_neg = truth.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean
        let mid = (i + j + 2) as f64 / 2.0;
        let pos_in_group = order[i..=j].iter().filter(|&&k| truth[k].is_pain()).count();
        pos_rank_sum += mid * pos_in_group as f64;
        i = j + 1;
    }
    let u = pos_rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Chance-corrected agreement between two raters over any category alphabet.
pub fn cohen_kappa<T: Ord>(r1: &[T], r2: &[T]) -> Result<f64> {
    same_len(r1.len(), r2.len())?;
    if r1.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = r1.len() as f64;
    let mut marginals: BTreeMap<&T, (usize, usize)> = BTreeMap::new();
    let mut agree = 0;
    for (a, b) in r1.iter().zip(r2) {
        marginals.entry(a).or_default().0 += 1;
        marginals.entry(b).or_default().1 += 1;
        if a == b {
            agree += 1;
        }
    }
    let p_o = agree as f64 / n;
    let p_e: f64 = marginals.values().map(|&(x, y)| (x as f64 / n) * (y as f64 / n)).sum();
    if p_e >= 1.0 - 1e-12 {
        return Err(Error::DegenerateMarginals);
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    same_len(x.len(), y.len())?;
    if x.len() < 2 {
        return Err(Error::EmptyInput);
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}
