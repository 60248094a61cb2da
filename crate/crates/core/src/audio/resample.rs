//! Band-limited sample-rate conversion.

use super::Waveform;
use crate::error::EngineError;
use crate::Result;
use std::f64::consts::PI;

/// One-sided kernel half-width in output-limited samples.
const HALF_WIDTH: usize = 32;

/// Resamples a waveform to `target_rate` using a Hann-windowed sinc kernel
/// (32-tap half-width, cutoff at the lower of the two Nyquist rates).
///
/// Output length is `round(len * target / source)`, so duration is
/// preserved within one output sample. Equal rates return the input
/// unchanged.
pub fn resample(w: &Waveform, target_rate: u32) -> Result<Waveform> {
    if target_rate == 0 {
        return Err(EngineError::InvalidConfig("target_rate must be > 0".into()));
    }
    if target_rate == w.sample_rate {
        return Ok(w.clone());
    }
    let ratio = target_rate as f64 / w.sample_rate as f64;
    Ok(Waveform::new(
        resample_by_ratio(&w.samples, ratio),
        target_rate,
    ))
}

/// Resamples by an arbitrary rate ratio (`out_len = round(len * ratio)`);
/// the sample-rate label is left to the caller.
pub(crate) fn resample_by_ratio(samples: &[f64], ratio: f64) -> Vec<f64> {
    let out_len = (samples.len() as f64 * ratio).round() as usize;
    if out_len == 0 || samples.is_empty() {
        return Vec::new();
    }
    // When downsampling, widen the kernel and lower the cutoff so the
    // output stays band-limited.
    let cutoff = ratio.min(1.0);
    let support = (HALF_WIDTH as f64 / cutoff).ceil() as isize;
    let inv_ratio = 1.0 / ratio;
    let mut out = Vec::with_capacity(out_len);
    for n in 0..out_len {
        let pos = n as f64 * inv_ratio;
        let center = pos.floor() as isize;
        let mut acc = 0.0;
        for m in (center - support)..=(center + support + 1) {
            if m < 0 || m as usize >= samples.len() {
                continue;
            }
            let d = pos - m as f64;
            acc += samples[m as usize] * kernel(d, cutoff, support as f64);
        }
        out.push(acc);
    }
    out
}

fn kernel(d: f64, cutoff: f64, support: f64) -> f64 {
    let x = d / support;
    if x.abs() >= 1.0 {
        return 0.0;
    }
    let window = 0.5 * (1.0 + (PI * x).cos());
    let t = PI * cutoff * d;
    let sinc = if t.abs() < 1e-12 { 1.0 } else { t.sin() / t };
    cutoff * sinc * window
}
