//! Deterministic synthetic corpus: tone-motif songs, covers with known
//! time mappings, and query clips with ground truth. All generators are
//! pure functions of their seeds.

use crate::audio::{resample_ratio, Waveform, CANONICAL_RATE};
use crate::error::EngineError;
use crate::metric::{augment_mix, MAX_PITCH_SHIFT, STRETCH_RANGE};
use crate::Result;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

/// One note of a motif, placed on the constant-Q bin grid.
#[derive(Debug, Clone, Copy)]
pub struct Note {
    /// Bin index (semitones above the lowest analysis bin); fractional
    /// values land between bins.
    pub bin: f64,
    pub dur_s: f64,
}

/// A short melodic phrase rendered as sines with decaying harmonics.
#[derive(Debug, Clone)]
pub struct MotifSpec {
    pub notes: Vec<Note>,
    /// Peak amplitude of the fundamental.
    pub amp: f64,
    pub seed: u64,
}

/// Frequency of a constant-Q bin index.
pub fn bin_frequency(bin: f64) -> f64 {
    32.70 * 2f64.powf(bin / 12.0)
}

const HARMONIC_AMPS: [f64; 3] = [1.0, 0.5, 0.25];
const ATTACK_S: f64 = 0.012;
const RELEASE_S: f64 = 0.03;

/// Renders a motif at 16 kHz. Note order and durations come from the
/// spec; per-note level jitter comes from the motif seed.
pub fn synth_motif(spec: &MotifSpec) -> Waveform {
    let fs = CANONICAL_RATE as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut samples = Vec::new();
    for note in &spec.notes {
        let n = (note.dur_s * fs).round() as usize;
        let f0 = bin_frequency(note.bin);
        let level = spec.amp * rng.gen_range(0.8..1.0);
        let attack = (ATTACK_S * fs) as usize;
        let release = (RELEASE_S * fs) as usize;
        for i in 0..n {
            let t = i as f64 / fs;
            let mut v = 0.0;
            for (h, &a) in HARMONIC_AMPS.iter().enumerate() {
                let f = f0 * (h + 1) as f64;
                if f < fs / 2.0 {
                    v += a * (2.0 * PI * f * t).sin();
                }
            }
            let env = envelope(i, n, attack, release);
            samples.push((level * env * v / 1.75).clamp(-1.0, 1.0));
        }
    }
    Waveform::new(samples, CANONICAL_RATE)
}

fn envelope(i: usize, n: usize, attack: usize, release: usize) -> f64 {
    let rise = if attack == 0 || i >= attack {
        1.0
    } else {
        i as f64 / attack as f64
    };
    let fall = if release == 0 || i + release <= n {
        1.0
    } else {
        (n - i) as f64 / release as f64
    };
    rise.min(fall)
}

/// Concatenates motifs separated by true silence and returns the waveform
/// plus exact `(start_s, end_s)` boundaries of each motif.
///
/// `gaps_s` holds the pause after each motif except the last, so its
/// length must be `motifs.len() - 1`.
pub fn synth_song(
    motifs: &[MotifSpec],
    gaps_s: &[f64],
    seed: u64,
) -> Result<(Waveform, Vec<(f64, f64)>)> {
    if motifs.is_empty() {
        return Err(EngineError::InvalidConfig(
            "song needs at least one motif".into(),
        ));
    }
    if gaps_s.len() + 1 != motifs.len() {
        return Err(EngineError::InvalidConfig(format!(
            "expected {} gaps for {} motifs, got {}",
            motifs.len() - 1,
            motifs.len(),
            gaps_s.len()
        )));
    }
    let fs = CANONICAL_RATE as f64;
    let mut samples: Vec<f64> = Vec::new();
    let mut boundaries = Vec::with_capacity(motifs.len());
    for (i, motif) in motifs.iter().enumerate() {
        // Fold the song seed into each motif for distinct jitter streams.
        let rendered = synth_motif(&MotifSpec {
            notes: motif.notes.clone(),
            amp: motif.amp,
            seed: motif.seed ^ seed.rotate_left(i as u32),
        });
        let start = samples.len();
        samples.extend_from_slice(&rendered.samples);
        boundaries.push((start as f64 / fs, samples.len() as f64 / fs));
        if i + 1 < motifs.len() {
            let gap = (gaps_s[i] * fs).round() as usize;
            samples.extend(std::iter::repeat(0.0).take(gap));
        }
    }
    Ok((Waveform::new(samples, CANONICAL_RATE), boundaries))
}

/// Cover-rendering parameters.
#[derive(Debug, Clone, Copy)]
pub struct CoverTransform {
    pub shift_semitones: f64,
    /// Speed factor; `> 1` shortens the cover.
    pub stretch: f64,
    /// Signal-to-noise ratio of added white noise; `f64::INFINITY` for a
    /// clean cover.
    pub snr_db: f64,
    pub lead_silence_s: f64,
}

impl CoverTransform {
    pub fn identity() -> Self {
        Self {
            shift_semitones: 0.0,
            stretch: 1.0,
            snr_db: f64::INFINITY,
            lead_silence_s: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.shift_semitones.abs() > MAX_PITCH_SHIFT {
            return Err(EngineError::InvalidConfig(format!(
                "cover shift {} outside [-{MAX_PITCH_SHIFT}, {MAX_PITCH_SHIFT}]",
                self.shift_semitones
            )));
        }
        if !(STRETCH_RANGE.0..=STRETCH_RANGE.1).contains(&self.stretch) {
            return Err(EngineError::InvalidConfig(format!(
                "cover stretch {} outside [{}, {}]",
                self.stretch, STRETCH_RANGE.0, STRETCH_RANGE.1
            )));
        }
        if self.lead_silence_s < 0.0 {
            return Err(EngineError::InvalidConfig("negative lead silence".into()));
        }
        Ok(())
    }
}

/// Linear original-to-cover time mapping: `t_cover = lead_s + scale * t`.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct TimeMap {
    pub lead_s: f64,
    pub scale: f64,
}

impl TimeMap {
    pub fn map(&self, t_orig: f64) -> f64 {
        self.lead_s + self.scale * t_orig
    }
}

/// Renders a cover: pitch shift by resampling, tempo change by
/// overlap-add (pitch preserved), leading silence, then white noise at
/// the requested SNR. Returns the exact time map.
pub fn synth_cover(
    song: &Waveform,
    transform: &CoverTransform,
    seed: u64,
) -> Result<(Waveform, TimeMap)> {
    transform.validate()?;
    let fs = CANONICAL_RATE as f64;
    let alpha = 2f64.powf(transform.shift_semitones / 12.0);

    let shifted = if transform.shift_semitones == 0.0 {
        song.samples.clone()
    } else {
        resample_ratio(&song.samples, 1.0 / alpha)
    };
    let stretched = if transform.stretch == 1.0 {
        shifted
    } else {
        ola_stretch(&shifted, transform.stretch)
    };

    let lead = (transform.lead_silence_s * fs).round() as usize;
    let mut samples = Vec::with_capacity(lead + stretched.len());
    samples.extend(std::iter::repeat(0.0).take(lead));
    samples.extend_from_slice(&stretched);
    let clean = Waveform::new(samples, CANONICAL_RATE);

    let out = if transform.snr_db.is_finite() {
        let noise = white_noise(clean.len(), 0.5, seed ^ 0xD1CE);
        augment_mix(&clean, &noise, transform.snr_db)?
    } else {
        clean
    };
    Ok((
        out,
        TimeMap {
            lead_s: lead as f64 / fs,
            scale: 1.0 / (alpha * transform.stretch),
        },
    ))
}

/// Seeded uniform white noise in `[-amp, amp]`.
pub fn white_noise(len: usize, amp: f64, seed: u64) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Waveform::new(
        (0..len).map(|_| rng.gen_range(-amp..amp)).collect(),
        CANONICAL_RATE,
    )
}

/// Waveform-similarity overlap-add time stretch. Hann grains on a fixed
/// synthesis grid read the input near `rate`-scaled positions; each read
/// position is refined within a search window to best continue the
/// previous grain, which keeps phase coherent and pitch unchanged.
fn ola_stretch(samples: &[f64], rate: f64) -> Vec<f64> {
    let grain = 2048usize;
    let hop = grain / 4;
    // Search must span at least one period of the lowest synthesized tone.
    let search = 300isize;
    let match_len = 512usize;
    let out_len = (samples.len() as f64 / rate).round() as usize;
    let mut acc = vec![0.0f64; out_len + grain];
    let mut weight = vec![0.0f64; out_len + grain];
    let n_grains = out_len.div_ceil(hop);
    let mut prev_read: Option<usize> = None;
    for g in 0..n_grains {
        let out_pos = g * hop;
        let nominal = ((out_pos as f64) * rate).round() as isize;
        if nominal >= samples.len() as isize {
            break;
        }
        let read = match prev_read {
            None => nominal.max(0) as usize,
            Some(pr) => {
                let target = pr + hop;
                best_continuation(samples, target, nominal, search, match_len)
            }
        };
        let take = grain.min(samples.len() - read);
        for i in 0..take {
            let w = 0.5 - 0.5 * (2.0 * PI * i as f64 / (grain - 1) as f64).cos();
            acc[out_pos + i] += w * samples[read + i];
            weight[out_pos + i] += w;
        }
        prev_read = Some(read);
    }
    (0..out_len)
        .map(|i| {
            if weight[i] > 1e-9 {
                (acc[i] / weight[i]).clamp(-1.0, 1.0)
            } else {
                0.0
            }
        })
        .collect()
}

/// Read position within `nominal ± search` whose segment best matches the
/// seamless continuation at `target` (normalized correlation; earliest
/// candidate wins ties).
fn best_continuation(
    samples: &[f64],
    target: usize,
    nominal: isize,
    search: isize,
    match_len: usize,
) -> usize {
    let len = samples.len() as isize;
    let lo = (nominal - search).clamp(0, len - 1);
    let hi = (nominal + search).clamp(0, len - 1);
    if target + match_len > samples.len() {
        return nominal.clamp(0, len - 1) as usize;
    }
    let tseg = &samples[target..target + match_len];
    let t_energy: f64 = tseg.iter().map(|&x| x * x).sum();
    if t_energy < 1e-12 {
        return nominal.clamp(lo, hi) as usize;
    }
    let mut best = (f64::NEG_INFINITY, nominal.clamp(lo, hi) as usize);
    for cand in lo..=hi {
        let c = cand as usize;
        if c + match_len > samples.len() {
            break;
        }
        let cseg = &samples[c..c + match_len];
        let mut dot = 0.0;
        let mut c_energy = 0.0;
        for (&a, &b) in cseg.iter().zip(tseg.iter()) {
            dot += a * b;
            c_energy += a * a;
        }
        let score = dot / (c_energy * t_energy).sqrt().max(1e-12);
        if score > best.0 {
            best = (score, c);
        }
    }
    best.1
}

/// Corpus-generation parameters. Transform ranges must stay inside the
/// augmentation bounds.
#[derive(Debug, Clone)]
pub struct CorpusSpec {
    pub n_songs: usize,
    pub motifs_per_song: usize,
    pub notes_per_motif: usize,
    /// Note duration range, seconds.
    pub note_dur_s: (f64, f64),
    /// Silence between motifs, seconds.
    pub gap_s: f64,
    /// Lowest and highest base bin a song's register may start at.
    pub register_range: (usize, usize),
    /// Random-walk span around the register base, bins.
    pub register_span: usize,
    pub shift_range: (f64, f64),
    pub stretch_range: (f64, f64),
    pub snr_db: f64,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            n_songs: 20,
            motifs_per_song: 2,
            notes_per_motif: 12,
            note_dur_s: (0.25, 0.6),
            gap_s: 2.0,
            register_range: (18, 54),
            register_span: 8,
            shift_range: (-2.0, 2.0),
            stretch_range: (0.9, 1.1),
            snr_db: 10.0,
            seed: 42,
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_songs == 0 || self.motifs_per_song == 0 || self.notes_per_motif == 0 {
            return Err(EngineError::InvalidConfig("empty corpus spec".into()));
        }
        if self.shift_range.0 < -MAX_PITCH_SHIFT || self.shift_range.1 > MAX_PITCH_SHIFT {
            return Err(EngineError::InvalidConfig("shift range too wide".into()));
        }
        if self.stretch_range.0 < STRETCH_RANGE.0 || self.stretch_range.1 > STRETCH_RANGE.1 {
            return Err(EngineError::InvalidConfig("stretch range too wide".into()));
        }
        // Highest fundamental (register top plus walk span plus shift)
        // must stay on the bin grid with Nyquist room for harmonics.
        let top = self.register_range.1 + self.register_span + 5;
        if top > 80 {
            return Err(EngineError::InvalidConfig(
                "register range exceeds the analysis bin grid".into(),
            ));
        }
        Ok(())
    }
}

/// A generated song with its ground truth.
#[derive(Debug, Clone)]
pub struct SynthSong {
    pub song_id: u32,
    pub title: String,
    pub wave: Waveform,
    pub boundaries: Vec<(f64, f64)>,
}

/// Generates `n_songs` deterministic songs. Each song gets its own
/// register and rhythm so melodies are distinguishable at desk scale.
pub fn generate_corpus(spec: &CorpusSpec) -> Result<Vec<SynthSong>> {
    spec.validate()?;
    (0..spec.n_songs)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ ((i as u64) << 20));
            let base = rng.gen_range(spec.register_range.0..=spec.register_range.1) as f64;
            let motifs: Vec<MotifSpec> = (0..spec.motifs_per_song)
                .map(|m| {
                    let mut bin = base + rng.gen_range(0..=spec.register_span.min(4)) as f64;
                    let notes = (0..spec.notes_per_motif)
                        .map(|_| {
                            let step = rng.gen_range(-3i32..=3) as f64;
                            bin = (bin + step).clamp(
                                base - spec.register_span as f64,
                                base + spec.register_span as f64,
                            );
                            Note {
                                bin,
                                dur_s: rng.gen_range(spec.note_dur_s.0..spec.note_dur_s.1),
                            }
                        })
                        .collect();
                    MotifSpec {
                        notes,
                        amp: 0.7,
                        seed: spec.seed ^ ((i as u64) << 8) ^ m as u64,
                    }
                })
                .collect();
            let gaps = vec![spec.gap_s; spec.motifs_per_song - 1];
            let (wave, boundaries) = synth_song(&motifs, &gaps, spec.seed ^ i as u64)?;
            Ok(SynthSong {
                song_id: i as u32,
                title: format!("song_{i:03}"),
                wave,
                boundaries,
            })
        })
        .collect()
}

/// A query clip with ground truth.
#[derive(Debug, Clone)]
pub struct QueryClip {
    pub wave: Waveform,
    pub truth_song: u32,
    pub transform: CoverTransform,
}

/// Cuts `n` fragments from corpus songs and renders each through a random
/// cover transform drawn from the spec ranges.
pub fn make_queries(
    songs: &[SynthSong],
    n: usize,
    dur_range_s: (f64, f64),
    spec: &CorpusSpec,
    seed: u64,
) -> Result<Vec<QueryClip>> {
    if songs.is_empty() {
        return Err(EngineError::EmptyDatabase);
    }
    let fs = CANONICAL_RATE as f64;
    (0..n)
        .map(|qi| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((qi as u64) << 16));
            let song = &songs[rng.gen_range(0..songs.len())];
            let dur = rng.gen_range(dur_range_s.0..dur_range_s.1);
            let dur_n = ((dur * fs) as usize).min(song.wave.len());
            let start = rng.gen_range(0..=song.wave.len() - dur_n);
            let clip = Waveform::new(
                song.wave.samples[start..start + dur_n].to_vec(),
                CANONICAL_RATE,
            );
            let transform = CoverTransform {
                shift_semitones: rng.gen_range(spec.shift_range.0..=spec.shift_range.1),
                stretch: rng.gen_range(spec.stretch_range.0..=spec.stretch_range.1),
                snr_db: spec.snr_db,
                lead_silence_s: 0.0,
            };
            let (wave, _) = synth_cover(&clip, &transform, seed ^ qi as u64)?;
            Ok(QueryClip {
                wave,
                truth_song: song.song_id,
                transform,
            })
        })
        .collect()
}
