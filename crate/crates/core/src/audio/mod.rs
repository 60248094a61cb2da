//! Audio primitives: waveforms, WAV I/O, resampling, RMS envelopes and
//! constant-Q feature matrices.

mod cqt;
mod resample;
mod wav;

pub use cqt::{
    cqt, load_feature_matrix, save_feature_matrix, Cqt, CqtParams, FeatureMatrix, WindowView,
};
pub use resample::resample;
pub(crate) use resample::resample_by_ratio as resample_ratio;
pub use wav::{load_wav, write_wav};

use crate::error::EngineError;
use crate::Result;

/// Engine-canonical sample rate in Hz.
pub const CANONICAL_RATE: u32 = 16_000;

/// Mono PCM audio.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    /// Amplitude values in `[-1, 1]`.
    pub samples: Vec<f64>,
    /// Sample rate in Hz.
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Per-frame RMS amplitude of a waveform.
#[derive(Debug, Clone)]
pub struct RmsEnvelope {
    /// Non-negative per-frame RMS values.
    pub values: Vec<f64>,
    /// Analysis frame length in samples.
    pub frame_length: usize,
    /// Hop between frames in samples.
    pub hop: usize,
}

/// Frame length used when the envelope feeds the silence splitter; keeps
/// envelope frames on the same hop grid as the feature matrix.
pub const RMS_FRAME_LENGTH: usize = 2048;
/// Hop used alongside [`RMS_FRAME_LENGTH`].
pub const RMS_HOP: usize = 512;

/// Computes the RMS envelope: `values[t] = sqrt(mean(x[t*hop .. t*hop+frame_length]^2))`.
///
/// The frame count is `floor((len - frame_length) / hop) + 1`; a waveform
/// shorter than one frame is an error.
pub fn rms_envelope(w: &Waveform, frame_length: usize, hop: usize) -> Result<RmsEnvelope> {
    if hop == 0 || frame_length < hop {
        return Err(EngineError::InvalidConfig(format!(
            "rms frame_length {frame_length} must be >= hop {hop} >= 1"
        )));
    }
    if w.len() < frame_length {
        return Err(EngineError::InputTooShort {
            what: "rms_envelope",
            needed: frame_length,
            got: w.len(),
        });
    }
    let n_frames = (w.len() - frame_length) / hop + 1;
    let inv = 1.0 / frame_length as f64;
    let values = (0..n_frames)
        .map(|t| {
            let start = t * hop;
            let sum: f64 = w.samples[start..start + frame_length]
                .iter()
                .map(|&x| x * x)
                .sum();
            (sum * inv).sqrt()
        })
        .collect();
    Ok(RmsEnvelope {
        values,
        frame_length,
        hop,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn constant(v: f64, n: usize) -> Waveform {
        Waveform::new(vec![v; n], CANONICAL_RATE)
    }

    #[test]
    fn rms_of_constant_signal_is_the_constant() {
        let env = rms_envelope(&constant(0.5, 8000), 2048, 512).unwrap();
        assert_eq!(env.values.len(), (8000 - 2048) / 512 + 1);
        for v in &env.values {
            assert!((v - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn rms_of_silence_is_zero() {
        let env = rms_envelope(&constant(0.0, 4096), 2048, 512).unwrap();
        assert!(env.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rms_of_unit_sine_over_whole_periods() {
        // 100 Hz at 16 kHz: one period = 160 samples; frame of 1600 spans
        // ten whole periods.
        let samples: Vec<f64> = (0..4800)
            .map(|n| (2.0 * PI * 100.0 * n as f64 / 16000.0).sin())
            .collect();
        let w = Waveform::new(samples, 16000);
        let env = rms_envelope(&w, 1600, 160).unwrap();
        for v in &env.values {
            assert!((v - 1.0 / 2.0_f64.sqrt()).abs() < 1e-3, "rms {v}");
        }
    }

    #[test]
    fn rms_too_short_input_errors() {
        let err = rms_envelope(&constant(0.1, 100), 2048, 512).unwrap_err();
        assert!(matches!(err, EngineError::InputTooShort { .. }));
    }

    #[test]
    fn rms_scale_equivariance() {
        let samples: Vec<f64> = (0..6000).map(|n| ((n * 37 % 101) as f64 - 50.0) / 60.0).collect();
        let w = Waveform::new(samples.clone(), 16000);
        for &c in &[0.3_f64, -1.7, 2.5] {
            let scaled = Waveform::new(samples.iter().map(|&x| c * x).collect(), 16000);
            let a = rms_envelope(&w, 2048, 512).unwrap();
            let b = rms_envelope(&scaled, 2048, 512).unwrap();
            for (x, y) in a.values.iter().zip(b.values.iter()) {
                let want = c.abs() * x;
                assert!((y - want).abs() <= 1e-9 * want.max(1e-30), "{y} vs {want}");
            }
        }
    }
}
