//! WAV reading and writing (RIFF, PCM16 or float32).

use super::Waveform;
use crate::error::EngineError;
use crate::Result;
use std::path::Path;

/// Loads a WAV file as a mono waveform.
///
/// Stereo input is downmixed by channel mean; samples are scaled to
/// `[-1, 1]` and clamped on load. Supported encodings are 16-bit PCM and
/// 32-bit float.
pub fn load_wav<P: AsRef<Path>>(path: P) -> Result<Waveform> {
    let path = path.as_ref();
    let mut reader = hound::WavReader::open(path).map_err(|e| EngineError::UnreadableFile {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(EngineError::UnsupportedCodec("zero channels".into()));
    }

    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| EngineError::UnreadableFile {
                path: path.display().to_string(),
                reason: e.to_string(),
            })?,
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| EngineError::UnreadableFile {
                path: path.display().to_string(),
                reason: e.to_string(),
            })?,
        (fmt, bits) => {
            return Err(EngineError::UnsupportedCodec(format!(
                "{fmt:?} {bits}-bit"
            )))
        }
    };

    if interleaved.is_empty() {
        return Err(EngineError::EmptyAudio);
    }

    let frames = interleaved.len() / channels;
    let inv = 1.0 / channels as f64;
    let samples: Vec<f64> = (0..frames)
        .map(|f| {
            let mean: f64 = interleaved[f * channels..(f + 1) * channels].iter().sum::<f64>() * inv;
            mean.clamp(-1.0, 1.0)
        })
        .collect();

    Ok(Waveform::new(samples, spec.sample_rate))
}

/// Writes a mono waveform as 16-bit PCM.
pub fn write_wav<P: AsRef<Path>>(path: P, w: &Waveform) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let path = path.as_ref();
    let mut writer =
        hound::WavWriter::create(path, spec).map_err(|e| EngineError::UnreadableFile {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
    for &s in &w.samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        writer.write_sample(v).map_err(|e| EngineError::UnreadableFile {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
    }
    writer.finalize().map_err(|e| EngineError::UnreadableFile {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::CANONICAL_RATE;
    use std::io::Write;

    #[test]
    fn mono_pcm16_roundtrip_length() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ten_seconds.wav");
        let w = Waveform::new(vec![0.25; 160_000], CANONICAL_RATE);
        write_wav(&path, &w).unwrap();
        let back = load_wav(&path).unwrap();
        assert_eq!(back.len(), 160_000);
        assert_eq!(back.sample_rate, 16_000);
        assert!((back.samples[5] - 0.25).abs() < 1e-3);
    }

    #[test]
    fn stereo_opposite_channels_downmix_to_zero() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stereo.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 16_000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut writer = hound::WavWriter::create(&path, spec).unwrap();
        for _ in 0..1000 {
            writer.write_sample((0.5f32 * 32767.0) as i16).unwrap();
            writer.write_sample((-0.5f32 * 32767.0) as i16).unwrap();
        }
        writer.finalize().unwrap();
        let w = load_wav(&path).unwrap();
        assert_eq!(w.len(), 1000);
        for &s in &w.samples {
            assert!(s.abs() < 1e-4);
        }
    }

    #[test]
    fn truncated_header_is_unreadable() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("broken.wav");
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(b"RIFF\x10\x00\x00\x00WAVE").unwrap();
        drop(f);
        let err = load_wav(&path).unwrap_err();
        assert!(matches!(err, EngineError::UnreadableFile { .. }), "{err}");
    }

    #[test]
    fn float32_wav_loads() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("float.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 16_000,
            bits_per_sample: 32,
            sample_format: hound::SampleFormat::Float,
        };
        let mut writer = hound::WavWriter::create(&path, spec).unwrap();
        for i in 0..64 {
            writer.write_sample(i as f32 / 64.0).unwrap();
        }
        writer.finalize().unwrap();
        let w = load_wav(&path).unwrap();
        assert_eq!(w.len(), 64);
        assert!((w.samples[32] - 0.5).abs() < 1e-7);
    }

    #[test]
    fn out_of_range_float_samples_are_clamped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("hot.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 16_000,
            bits_per_sample: 32,
            sample_format: hound::SampleFormat::Float,
        };
        let mut writer = hound::WavWriter::create(&path, spec).unwrap();
        writer.write_sample(1.75f32).unwrap();
        writer.write_sample(-2.5f32).unwrap();
        writer.finalize().unwrap();
        let w = load_wav(&path).unwrap();
        assert_eq!(w.samples, vec![1.0, -1.0]);
    }
}
