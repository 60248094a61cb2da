//! Feature- and waveform-domain augmentations.

use crate::audio::{FeatureMatrix, Waveform};
use crate::error::EngineError;
use crate::Result;
use rand::Rng;

/// Maximum pitch shift magnitude in semitones.
pub const MAX_PITCH_SHIFT: f64 = 4.0;
/// Allowed time-stretch rate range.
pub const STRETCH_RANGE: (f64, f64) = (0.8, 1.25);

/// Translates feature rows by `semitones` bins (one bin per semitone);
/// fractional shifts interpolate linearly between adjacent bins and
/// vacated bins are zero-filled.
pub fn augment_pitch_shift(features: &FeatureMatrix, semitones: f64) -> Result<FeatureMatrix> {
    if semitones.abs() > MAX_PITCH_SHIFT {
        return Err(EngineError::InvalidConfig(format!(
            "pitch shift {semitones} outside [-{MAX_PITCH_SHIFT}, {MAX_PITCH_SHIFT}]"
        )));
    }
    let bins = features.bins();
    let frames = features.frames();
    let mut out = FeatureMatrix::new(bins, frames, features.frame_rate);
    for b in 0..bins {
        // Output bin b reads from source position b - semitones.
        let src = b as f64 - semitones;
        let lo = src.floor();
        let frac = src - lo;
        let lo = lo as isize;
        let hi = lo + 1;
        let row = out.row_mut(b);
        if frac.abs() < 1e-12 {
            if (0..bins as isize).contains(&lo) {
                row.copy_from_slice(features.row(lo as usize));
            }
            continue;
        }
        let w_lo = (1.0 - frac) as f32;
        let w_hi = frac as f32;
        for t in 0..frames {
            let mut v = 0.0f32;
            if (0..bins as isize).contains(&lo) {
                v += w_lo * features.get(lo as usize, t);
            }
            if (0..bins as isize).contains(&hi) {
                v += w_hi * features.get(hi as usize, t);
            }
            row[t] = v;
        }
    }
    Ok(out)
}

/// Resamples the time axis to `round(frames / rate)` columns by linear
/// interpolation; `rate > 1` shortens, `rate < 1` lengthens.
pub fn augment_time_stretch(features: &FeatureMatrix, rate: f64) -> Result<FeatureMatrix> {
    if !(STRETCH_RANGE.0..=STRETCH_RANGE.1).contains(&rate) {
        return Err(EngineError::InvalidConfig(format!(
            "stretch rate {rate} outside [{}, {}]",
            STRETCH_RANGE.0, STRETCH_RANGE.1
        )));
    }
    let frames = features.frames();
    let out_frames = (frames as f64 / rate).round() as usize;
    if out_frames == 0 {
        return Err(EngineError::Degenerate("time stretch to zero frames".into()));
    }
    let mut out = FeatureMatrix::new(features.bins(), out_frames, features.frame_rate);
    // Endpoint-aligned mapping: identity when out_frames == frames.
    let scale = if out_frames > 1 {
        (frames - 1) as f64 / (out_frames - 1) as f64
    } else {
        0.0
    };
    for b in 0..features.bins() {
        let src = features.row(b);
        let dst = out.row_mut(b);
        for (t, slot) in dst.iter_mut().enumerate() {
            let pos = t as f64 * scale;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(frames - 1);
            let frac = (pos - lo as f64) as f32;
            *slot = (1.0 - frac) * src[lo] + frac * src[hi];
        }
    }
    Ok(out)
}

/// Deletes `n_intervals` non-overlapping spans of `interval_len` samples
/// at seeded random positions and concatenates the remainder. Errors when
/// the removals would leave less than one second of audio.
pub fn augment_splice_out<R: Rng>(
    w: &Waveform,
    n_intervals: usize,
    interval_len: usize,
    rng: &mut R,
) -> Result<Waveform> {
    if n_intervals == 0 || interval_len == 0 {
        return Ok(w.clone());
    }
    let removed = n_intervals * interval_len;
    let min_left = w.sample_rate as usize;
    if w.len() < removed + min_left {
        return Err(EngineError::InputTooShort {
            what: "augment_splice_out",
            needed: removed + min_left,
            got: w.len(),
        });
    }
    // Place starts by distributing the free space: draw sorted offsets into
    // the remaining length, then shift each by the intervals before it.
    let free = w.len() - removed;
    let mut offsets: Vec<usize> = (0..n_intervals).map(|_| rng.gen_range(0..=free)).collect();
    offsets.sort_unstable();
    let starts: Vec<usize> = offsets
        .iter()
        .enumerate()
        .map(|(i, &u)| u + i * interval_len)
        .collect();

    let mut samples = Vec::with_capacity(free);
    let mut cursor = 0usize;
    for &s in &starts {
        samples.extend_from_slice(&w.samples[cursor..s]);
        cursor = s + interval_len;
    }
    samples.extend_from_slice(&w.samples[cursor..]);
    Ok(Waveform::new(samples, w.sample_rate))
}

/// Mixes `y` into `x` at the requested signal-to-noise ratio:
/// `out = x + g*y` with `g = (rms(x)/rms(y)) * 10^(-snr_db/20)`, clamped
/// to `[-1, 1]`. `y` is truncated or looped to the length of `x`.
pub fn augment_mix(x: &Waveform, y: &Waveform, snr_db: f64) -> Result<Waveform> {
    if x.sample_rate != y.sample_rate {
        return Err(EngineError::InvalidConfig(
            "mix sources must share a sample rate".into(),
        ));
    }
    if y.is_empty() {
        return Err(EngineError::SilentMixSource);
    }
    let rms = |s: &[f64]| (s.iter().map(|&v| v * v).sum::<f64>() / s.len() as f64).sqrt();
    let rms_y = rms(&y.samples);
    if rms_y == 0.0 {
        return Err(EngineError::SilentMixSource);
    }
    let rms_x = rms(&x.samples);
    let gain = (rms_x / rms_y) * 10f64.powf(-snr_db / 20.0);
    let samples = x
        .samples
        .iter()
        .enumerate()
        .map(|(i, &v)| (v + gain * y.samples[i % y.len()]).clamp(-1.0, 1.0))
        .collect();
    Ok(Waveform::new(samples, x.sample_rate))
}
