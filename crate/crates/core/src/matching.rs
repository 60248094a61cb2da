//! Similarity primitives over fingerprint sequences: lagged
//! cross-correlation, maximum Pearson correlation, DTW distance and peak
//! detection.

use crate::error::EngineError;
use crate::fingerprint::{FingerprintSequence, FINGERPRINT_DIM};
use crate::Result;

/// Per-lag correlation scores between two fingerprint sequences.
///
/// `scores[i]` is the mean framewise dot product at lag
/// `i as isize - lag_zero_index`; for unit-norm fingerprints every score
/// lies in `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct CorrelationCurve {
    pub scores: Vec<f64>,
    /// Index in `scores` holding lag 0.
    pub lag_zero_index: isize,
    /// Seconds per lag step.
    pub hop_s: f64,
}

impl CorrelationCurve {
    pub fn lag_at(&self, index: usize) -> isize {
        index as isize - self.lag_zero_index
    }

    pub fn max_score(&self) -> f64 {
        self.scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// A local maximum of a correlation curve.
#[derive(Debug, Clone, Copy)]
pub struct Peak {
    pub lag: isize,
    pub score: f64,
    /// Lag expressed in seconds.
    pub start_s: f64,
}

/// Lagged normalized cross-correlation.
///
/// `score(l) = mean over overlapped t of a[t] . b[t+l]`, evaluated for
/// every lag whose overlap holds at least
/// `min_overlap_frac * min(|a|, |b|)` frames (at least one). The curve has
/// `|a| + |b| - 2*min_overlap + 1` entries.
pub fn seq_cross_correlation(
    a: &FingerprintSequence,
    b: &FingerprintSequence,
    min_overlap_frac: f64,
) -> Result<CorrelationCurve> {
    if a.is_empty() || b.is_empty() {
        return Err(EngineError::EmptySequence);
    }
    if a.config != b.config {
        return Err(EngineError::ConfigMismatch);
    }
    let (m, n) = (a.len() as isize, b.len() as isize);
    let min_overlap = ((min_overlap_frac * m.min(n) as f64).ceil() as isize).max(1);
    let lag_min = -(m - min_overlap);
    let lag_max = n - min_overlap;
    let mut scores = Vec::with_capacity((lag_max - lag_min + 1) as usize);
    for lag in lag_min..=lag_max {
        let t0 = 0.max(-lag);
        let t1 = m.min(n - lag);
        let overlap = (t1 - t0) as f64;
        let mut acc = 0.0;
        for t in t0..t1 {
            acc += a.prints[t as usize].dot(&b.prints[(t + lag) as usize]);
        }
        scores.push(acc / overlap);
    }
    Ok(CorrelationCurve {
        scores,
        lag_zero_index: -lag_min,
        hop_s: a.config.hop_s(),
    })
}

/// Maximum of the cross-correlation curve; the scalar used for
/// fragment-level duplicate detection.
pub fn max_cross_correlation(
    a: &FingerprintSequence,
    b: &FingerprintSequence,
    min_overlap_frac: f64,
) -> Result<f64> {
    Ok(seq_cross_correlation(a, b, min_overlap_frac)?.max_score())
}

/// Maximum Pearson correlation of `q` against every alignment offset
/// inside `c`.
///
/// At each offset the two `dim x |q|` blocks are flattened and the plain
/// Pearson coefficient is computed; offsets with a zero-variance block are
/// skipped, and an error is returned when every offset is skipped.
pub fn max_pearson(q: &FingerprintSequence, c: &FingerprintSequence) -> Result<f64> {
    if q.is_empty() || c.is_empty() {
        return Err(EngineError::EmptySequence);
    }
    if q.len() > c.len() {
        return Err(EngineError::InputTooShort {
            what: "max_pearson: query longer than candidate",
            needed: q.len(),
            got: c.len(),
        });
    }
    let mut best: Option<f64> = None;
    for offset in 0..=(c.len() - q.len()) {
        if let Some(r) = pearson_at_offset(q, c, offset) {
            best = Some(best.map_or(r, |b| b.max(r)));
        }
    }
    best.ok_or_else(|| EngineError::Degenerate("all alignment offsets zero-variance".into()))
}

/// Pearson coefficient of the flattened blocks at one offset, or `None`
/// when either block has zero variance.
pub fn pearson_at_offset(
    q: &FingerprintSequence,
    c: &FingerprintSequence,
    offset: usize,
) -> Option<f64> {
    let n = (q.len() * FINGERPRINT_DIM) as f64;
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for t in 0..q.len() {
        let x = &q.prints[t].0;
        let y = &c.prints[offset + t].0;
        for d in 0..FINGERPRINT_DIM {
            let a = x[d] as f64;
            let b = y[d] as f64;
            sx += a;
            sy += b;
            sxx += a * a;
            syy += b * b;
            sxy += a * b;
        }
    }
    let var_x = sxx - sx * sx / n;
    let var_y = syy - sy * sy / n;
    if var_x <= 1e-18 || var_y <= 1e-18 {
        return None;
    }
    let cov = sxy - sx * sy / n;
    Some(cov / (var_x.sqrt() * var_y.sqrt()))
}

/// Path-length-normalized DTW distance with framewise cost
/// `1 - q_i . c_j`, steps {(1,1),(1,0),(0,1)} and full boundary alignment.
///
/// The dot is divided by the product of stored norms so that identical
/// frames cost exactly zero despite f32 quantization; for unit-norm
/// fingerprints this is the plain dot product.
pub fn dtw_distance(q: &FingerprintSequence, c: &FingerprintSequence) -> Result<f64> {
    if q.is_empty() || c.is_empty() {
        return Err(EngineError::EmptySequence);
    }
    let (m, n) = (q.len(), c.len());
    let norm_of = |s: &FingerprintSequence| -> Vec<f64> {
        s.prints.iter().map(|p| p.norm().max(1e-12)).collect()
    };
    let nq = norm_of(q);
    let nc = norm_of(c);
    // Rolling DP over (accumulated cost, path length).
    let mut prev = vec![(f64::INFINITY, 0usize); n + 1];
    let mut curr = vec![(f64::INFINITY, 0usize); n + 1];
    prev[0] = (0.0, 0);
    for i in 1..=m {
        curr[0] = (f64::INFINITY, 0);
        for j in 1..=n {
            let cost = 1.0 - q.prints[i - 1].dot(&c.prints[j - 1]) / (nq[i - 1] * nc[j - 1]);
            let candidates = [prev[j - 1], prev[j], curr[j - 1]];
            // Minimal cost; among equal costs prefer the shorter path so
            // the normalized value is symmetric under argument swap.
            let mut best = candidates[0];
            for &cand in &candidates[1..] {
                if cand.0 < best.0 || (cand.0 == best.0 && cand.1 < best.1) {
                    best = cand;
                }
            }
            curr[j] = (best.0 + cost, best.1 + 1);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    let (total, len) = prev[n];
    Ok(total / len as f64)
}

/// Strict local maxima of a correlation curve, at least `min_height` tall,
/// greedily accepted in descending score order while suppressing any later
/// candidate closer than `min_separation` lags to an accepted peak.
/// The result is sorted by descending score.
pub fn detect_peaks(curve: &CorrelationCurve, min_height: f64, min_separation: usize) -> Vec<Peak> {
    let min_separation = min_separation.max(1) as isize;
    let s = &curve.scores;
    let mut candidates: Vec<(usize, f64)> = (1..s.len().saturating_sub(1))
        .filter(|&i| s[i] >= min_height && s[i] > s[i - 1] && s[i] > s[i + 1])
        .map(|i| (i, s[i]))
        .collect();
    candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut accepted: Vec<Peak> = Vec::new();
    for (i, score) in candidates {
        let lag = curve.lag_at(i);
        if accepted
            .iter()
            .all(|p| (p.lag - lag).abs() >= min_separation)
        {
            accepted.push(Peak {
                lag,
                score,
                start_s: lag as f64 * curve.hop_s,
            });
        }
    }
    accepted
}
