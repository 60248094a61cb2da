//! Analysis windows and fingerprint encoding.
//!
//! A feature matrix is sliced into overlapping analysis windows; each
//! window is encoded to a unit-norm 128-d fingerprint by a pluggable
//! [`WindowEncoder`]. The [`BaselineEncoder`] is a deterministic stand-in
//! for a trained model: per-bin temporal mean and standard deviation
//! projected through a fixed seeded Gaussian matrix.

use crate::audio::{FeatureMatrix, WindowView};
use crate::binfmt;
use crate::error::EngineError;
use crate::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

/// Fingerprint dimensionality.
pub const FINGERPRINT_DIM: usize = 128;

/// Feature frames per second on the canonical hop grid.
pub const FRAME_RATE: f64 = 31.25;

/// Number of feature bins an encoder consumes.
pub const FEATURE_BINS: usize = 84;

/// Analysis-window profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderProfile {
    /// 3 s windows stepped by 0.25 s; for recordings up to 15 s.
    Short,
    /// 8 s windows stepped by 0.64 s; for longer recordings.
    Long,
}

impl EncoderProfile {
    pub fn as_str(self) -> &'static str {
        match self {
            EncoderProfile::Short => "short",
            EncoderProfile::Long => "long",
        }
    }
}

impl std::str::FromStr for EncoderProfile {
    type Err = EngineError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "short" => Ok(EncoderProfile::Short),
            "long" => Ok(EncoderProfile::Long),
            other => Err(EngineError::InvalidConfig(format!(
                "unknown profile {other:?}"
            ))),
        }
    }
}

/// Window geometry for one encoder profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderConfig {
    pub profile: EncoderProfile,
    /// Window length in seconds.
    pub window_s: f64,
    /// Step between windows in seconds.
    pub step_s: f64,
    /// `round(window_s * frame_rate)` frames.
    pub window_frames: usize,
    /// `round(step_s * frame_rate)` frames.
    pub step_frames: usize,
}

impl EncoderConfig {
    pub fn new(profile: EncoderProfile, window_s: f64, step_s: f64) -> Result<Self> {
        let window_frames = (window_s * FRAME_RATE).round() as usize;
        let step_frames = (step_s * FRAME_RATE).round() as usize;
        if step_frames == 0 || window_frames < step_frames {
            return Err(EngineError::InvalidConfig(format!(
                "window {window_s}s / step {step_s}s maps to frames ({window_frames}, {step_frames})"
            )));
        }
        Ok(Self {
            profile,
            window_s,
            step_s,
            window_frames,
            step_frames,
        })
    }

    pub fn short() -> Self {
        Self::new(EncoderProfile::Short, 3.0, 0.25).expect("short profile")
    }

    pub fn long() -> Self {
        Self::new(EncoderProfile::Long, 8.0, 0.64).expect("long profile")
    }

    pub fn for_profile(profile: EncoderProfile) -> Self {
        match profile {
            EncoderProfile::Short => Self::short(),
            EncoderProfile::Long => Self::long(),
        }
    }

    /// Seconds per fingerprint step.
    pub fn hop_s(&self) -> f64 {
        self.step_frames as f64 / FRAME_RATE
    }

    /// Fingerprints produced from `frames` feature frames.
    pub fn count_for_frames(&self, frames: usize) -> Option<usize> {
        if frames < self.window_frames {
            None
        } else {
            Some((frames - self.window_frames) / self.step_frames + 1)
        }
    }
}

/// Unit-norm 128-d embedding of one analysis window.
#[derive(Debug, Clone, PartialEq)]
pub struct Fingerprint(pub [f32; FINGERPRINT_DIM]);

impl Fingerprint {
    /// First standard basis vector; the fallback for degenerate windows.
    pub fn unit_e1() -> Self {
        let mut v = [0.0f32; FINGERPRINT_DIM];
        v[0] = 1.0;
        Fingerprint(v)
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &Fingerprint) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(&a, &b)| a as f64 * b as f64)
            .sum()
    }
}

/// Ordered fingerprints of one recording.
#[derive(Debug, Clone)]
pub struct FingerprintSequence {
    pub prints: Vec<Fingerprint>,
    pub config: EncoderConfig,
    pub source_id: String,
}

impl FingerprintSequence {
    pub fn len(&self) -> usize {
        self.prints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prints.is_empty()
    }
}

/// A window-to-fingerprint encoder.
///
/// Implementations must be usable from multiple threads on distinct
/// windows and must always return unit-norm vectors.
pub trait WindowEncoder: Send + Sync {
    fn encode_window(&self, window: &WindowView<'_>) -> Result<Fingerprint>;

    /// Stable identity string (algorithm + seed).
    fn identity(&self) -> String;

    /// True when identical inputs produce identical bits.
    fn is_deterministic(&self) -> bool;
}

/// Cuts a feature matrix into analysis windows at offsets
/// `0, step, 2*step, ...`; a trailing remainder shorter than one window is
/// dropped. Errors when the input holds less than one window.
pub fn make_windows<'a>(
    features: &'a FeatureMatrix,
    config: &EncoderConfig,
) -> Result<Vec<WindowView<'a>>> {
    make_windows_range(features, 0, features.frames(), config)
}

/// [`make_windows`] restricted to the frame range `[start, end)`.
pub fn make_windows_range<'a>(
    features: &'a FeatureMatrix,
    start: usize,
    end: usize,
    config: &EncoderConfig,
) -> Result<Vec<WindowView<'a>>> {
    let frames = end.saturating_sub(start);
    let count = config
        .count_for_frames(frames)
        .ok_or(EngineError::InputTooShort {
            what: "make_windows: input shorter than one window",
            needed: config.window_frames,
            got: frames,
        })?;
    Ok((0..count)
        .map(|i| features.window(start + i * config.step_frames, config.window_frames))
        .collect())
}

/// Encodes every analysis window of `features`, preserving order, and
/// enforces the unit-norm contract on each output.
pub fn encode_sequence(
    features: &FeatureMatrix,
    config: &EncoderConfig,
    encoder: &dyn WindowEncoder,
    source_id: &str,
) -> Result<FingerprintSequence> {
    encode_range(features, 0, features.frames(), config, encoder, source_id)
}

/// [`encode_sequence`] over the frame range `[start, end)`.
pub fn encode_range(
    features: &FeatureMatrix,
    start: usize,
    end: usize,
    config: &EncoderConfig,
    encoder: &dyn WindowEncoder,
    source_id: &str,
) -> Result<FingerprintSequence> {
    let windows = make_windows_range(features, start, end, config)?;
    let mut prints = Vec::with_capacity(windows.len());
    for w in &windows {
        let fp = encoder.encode_window(w)?;
        let norm = fp.norm();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(EngineError::ContractViolation(format!(
                "encoder {} produced norm {norm}",
                encoder.identity()
            )));
        }
        prints.push(fp);
    }
    Ok(FingerprintSequence {
        prints,
        config: *config,
        source_id: source_id.to_string(),
    })
}

/// Deterministic encoder: per-bin temporal mean and standard deviation
/// (168 features) projected by a fixed seeded 128x168 standard-normal
/// matrix, then L2-normalized. An all-silent window maps to `e_1`.
pub struct BaselineEncoder {
    projection: Vec<f64>,
    seed: u64,
}

impl BaselineEncoder {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = FINGERPRINT_DIM * 2 * FEATURE_BINS;
        let projection = (0..n)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        Self { projection, seed }
    }
}

impl WindowEncoder for BaselineEncoder {
    fn encode_window(&self, window: &WindowView<'_>) -> Result<Fingerprint> {
        if window.bins() != FEATURE_BINS {
            return Err(EngineError::InvalidConfig(format!(
                "expected {FEATURE_BINS} bins, got {}",
                window.bins()
            )));
        }
        let frames = window.frames as f64;
        let mut feat = [0.0f64; 2 * FEATURE_BINS];
        for b in 0..FEATURE_BINS {
            let row = window.row(b);
            let mean = row.iter().map(|&x| x as f64).sum::<f64>() / frames;
            let var = row
                .iter()
                .map(|&x| {
                    let d = x as f64 - mean;
                    d * d
                })
                .sum::<f64>()
                / frames;
            feat[b] = mean;
            feat[FEATURE_BINS + b] = var.sqrt();
        }
        let mut v = [0.0f64; FINGERPRINT_DIM];
        for (r, slot) in v.iter_mut().enumerate() {
            let row = &self.projection[r * 2 * FEATURE_BINS..(r + 1) * 2 * FEATURE_BINS];
            *slot = row.iter().zip(feat.iter()).map(|(&p, &f)| p * f).sum();
        }
        let norm = v.iter().map(|&x| x * x).sum::<f64>().sqrt();
        if norm < 1e-12 {
            return Ok(Fingerprint::unit_e1());
        }
        let mut out = [0.0f32; FINGERPRINT_DIM];
        for (o, &x) in out.iter_mut().zip(v.iter()) {
            *o = (x / norm) as f32;
        }
        Ok(Fingerprint(out))
    }

    fn identity(&self) -> String {
        format!("baseline-meanstd-v1-seed{}", self.seed)
    }

    fn is_deterministic(&self) -> bool {
        true
    }
}

/// Writes a fingerprint sequence: magic `CHFP`, version, dim u16, count
/// u32, window_frames u16, step_frames u16, frame_rate f32, then
/// `count * dim` f32 little-endian.
pub fn save_fingerprints<P: AsRef<Path>>(path: P, seq: &FingerprintSequence) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(b"CHFP").map_err(EngineError::Io)?;
    binfmt::write_u8(&mut w, 1)?;
    binfmt::write_u16(&mut w, FINGERPRINT_DIM as u16)?;
    binfmt::write_u32(&mut w, seq.prints.len() as u32)?;
    binfmt::write_u16(&mut w, seq.config.window_frames as u16)?;
    binfmt::write_u16(&mut w, seq.config.step_frames as u16)?;
    binfmt::write_f32(&mut w, FRAME_RATE as f32)?;
    for p in &seq.prints {
        for &v in &p.0 {
            binfmt::write_f32(&mut w, v)?;
        }
    }
    Ok(())
}

/// Reads a `CHFP` file; window geometry must match a known profile.
pub fn load_fingerprints<P: AsRef<Path>>(path: P, source_id: &str) -> Result<FingerprintSequence> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    binfmt::expect_magic(&mut r, b"CHFP", "fingerprints")?;
    binfmt::expect_version(&mut r, 1, "fingerprints")?;
    let dim = binfmt::read_u16(&mut r)? as usize;
    if dim != FINGERPRINT_DIM {
        return Err(EngineError::Format(format!(
            "fingerprints: dim {dim}, expected {FINGERPRINT_DIM}"
        )));
    }
    let count = binfmt::read_u32(&mut r)? as usize;
    let window_frames = binfmt::read_u16(&mut r)? as usize;
    let step_frames = binfmt::read_u16(&mut r)? as usize;
    let _frame_rate = binfmt::read_f32(&mut r)?;
    let config = match (window_frames, step_frames) {
        (94, 8) => EncoderConfig::short(),
        (250, 20) => EncoderConfig::long(),
        other => {
            return Err(EngineError::Format(format!(
                "fingerprints: unknown window geometry {other:?}"
            )))
        }
    };
    let mut prints = Vec::with_capacity(count);
    for _ in 0..count {
        let mut v = [0.0f32; FINGERPRINT_DIM];
        for slot in v.iter_mut() {
            *slot = binfmt::read_f32(&mut r)?;
        }
        prints.push(Fingerprint(v));
    }
    Ok(FingerprintSequence {
        prints,
        config,
        source_id: source_id.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp_matrix(bins: usize, frames: usize) -> FeatureMatrix {
        let data: Vec<f32> = (0..bins * frames)
            .map(|i| ((i * 31 % 97) as f32) / 97.0 + 0.01)
            .collect();
        FeatureMatrix::from_data(data, bins, frames, FRAME_RATE)
    }

    #[test]
    fn profile_geometry_matches_seconds() {
        let s = EncoderConfig::short();
        assert_eq!((s.window_frames, s.step_frames), (94, 8));
        let l = EncoderConfig::long();
        assert_eq!((l.window_frames, l.step_frames), (250, 20));
    }

    #[test]
    fn windows_at_expected_offsets() {
        let m = ramp_matrix(84, 313);
        let windows = make_windows(&m, &EncoderConfig::short()).unwrap();
        assert_eq!(windows.len(), 28);
        assert_eq!(windows.first().unwrap().start_frame, 0);
        assert_eq!(windows.last().unwrap().start_frame, 216);
    }

    #[test]
    fn exactly_one_window_at_boundary() {
        let m = ramp_matrix(84, 250);
        let windows = make_windows(&m, &EncoderConfig::long()).unwrap();
        assert_eq!(windows.len(), 1);
    }

    #[test]
    fn short_input_errors() {
        let m = ramp_matrix(84, 93);
        let err = make_windows(&m, &EncoderConfig::short()).unwrap_err();
        assert!(matches!(err, EngineError::InputTooShort { .. }));
    }

    #[test]
    fn baseline_outputs_unit_norm() {
        let m = ramp_matrix(84, 94);
        let enc = BaselineEncoder::new(7);
        let fp = enc.encode_window(&m.window(0, 94)).unwrap();
        assert!((fp.norm() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn baseline_is_deterministic() {
        let m = ramp_matrix(84, 94);
        let a = BaselineEncoder::new(9)
            .encode_window(&m.window(0, 94))
            .unwrap();
        let b = BaselineEncoder::new(9)
            .encode_window(&m.window(0, 94))
            .unwrap();
        assert_eq!(a.0, b.0);
    }

    #[test]
    fn baseline_scale_invariant() {
        let m = ramp_matrix(84, 94);
        let scaled = FeatureMatrix::from_data(
            m.data().iter().map(|&x| x * 3.5).collect(),
            84,
            94,
            FRAME_RATE,
        );
        let enc = BaselineEncoder::new(3);
        let a = enc.encode_window(&m.window(0, 94)).unwrap();
        let b = enc.encode_window(&scaled.window(0, 94)).unwrap();
        for (x, y) in a.0.iter().zip(b.0.iter()) {
            assert!((x - y).abs() < 1e-6, "{x} vs {y}");
        }
    }

    #[test]
    fn silent_window_maps_to_e1() {
        let m = FeatureMatrix::new(84, 94, FRAME_RATE);
        let enc = BaselineEncoder::new(1);
        let fp = enc.encode_window(&m.window(0, 94)).unwrap();
        assert_eq!(fp, Fingerprint::unit_e1());
    }

    #[test]
    fn sequence_count_matches_window_count() {
        let m = ramp_matrix(84, 313);
        let enc = BaselineEncoder::new(5);
        let seq = encode_sequence(&m, &EncoderConfig::short(), &enc, "s").unwrap();
        assert_eq!(seq.len(), 28);
    }

    struct BadEncoder;
    impl WindowEncoder for BadEncoder {
        fn encode_window(&self, _w: &WindowView<'_>) -> Result<Fingerprint> {
            let mut v = [0.0f32; FINGERPRINT_DIM];
            v[0] = 2.0;
            Ok(Fingerprint(v))
        }
        fn identity(&self) -> String {
            "bad".into()
        }
        fn is_deterministic(&self) -> bool {
            true
        }
    }

    #[test]
    fn non_unit_encoder_is_a_contract_violation() {
        let m = ramp_matrix(84, 94);
        let err = encode_sequence(&m, &EncoderConfig::short(), &BadEncoder, "s").unwrap_err();
        assert!(matches!(err, EngineError::ContractViolation(_)));
    }

    #[test]
    fn fingerprint_file_roundtrip() {
        let m = ramp_matrix(84, 130);
        let enc = BaselineEncoder::new(11);
        let seq = encode_sequence(&m, &EncoderConfig::short(), &enc, "song").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("song.chfp");
        save_fingerprints(&path, &seq).unwrap();
        let back = load_fingerprints(&path, "song").unwrap();
        assert_eq!(back.len(), seq.len());
        assert_eq!(back.config, seq.config);
        for (a, b) in back.prints.iter().zip(seq.prints.iter()) {
            assert_eq!(a.0, b.0);
        }
    }

    proptest! {
        #[test]
        fn window_count_matches_enumeration(
            frames in 1usize..600,
            window in 1usize..300,
            step in 1usize..60,
        ) {
            prop_assume!(window >= step);
            let config = EncoderConfig {
                profile: EncoderProfile::Short,
                window_s: window as f64 / FRAME_RATE,
                step_s: step as f64 / FRAME_RATE,
                window_frames: window,
                step_frames: step,
            };
            // Direct enumeration of valid offsets.
            let mut expected = 0usize;
            let mut off = 0usize;
            while off + window <= frames {
                expected += 1;
                off += step;
            }
            match config.count_for_frames(frames) {
                Some(n) => prop_assert_eq!(n, expected),
                None => prop_assert_eq!(expected, 0),
            }
        }

        #[test]
        fn baseline_norm_is_always_unit(seedframes in 0u64..50) {
            let frames = 94 + (seedframes as usize % 40);
            let data: Vec<f32> = (0..84 * frames)
                .map(|i| (((i as u64).wrapping_mul(seedframes + 13) % 1000) as f32) / 500.0)
                .collect();
            let m = FeatureMatrix::from_data(data, 84, frames, FRAME_RATE);
            let enc = BaselineEncoder::new(seedframes);
            let fp = enc.encode_window(&m.window(0, 94.min(frames))).unwrap();
            prop_assert!((fp.norm() - 1.0).abs() < 1e-6);
        }
    }
}
