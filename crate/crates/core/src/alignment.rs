//! Aligned-fragment extraction: silence-based fragmentation of an
//! original song, a grid search over pause/level thresholds for the
//! fragmentation that yields the most unique fragments, and
//! cross-correlation matching of those fragments into cover songs.

use crate::audio::{cqt, rms_envelope, FeatureMatrix, RmsEnvelope, Waveform, RMS_FRAME_LENGTH, RMS_HOP};
use crate::error::EngineError;
use crate::fingerprint::{encode_range, EncoderConfig, FingerprintSequence, WindowEncoder};
use crate::matching::{detect_peaks, max_cross_correlation, seq_cross_correlation};
use crate::Result;

/// Overlap fraction used when cross-correlating fragment sequences.
pub const DEDUP_MIN_OVERLAP: f64 = 0.8;

/// Thresholds and search grids of the extraction pipeline.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct PipelineConfig {
    /// Minimal fragment length, seconds.
    pub d_min: f64,
    /// Maximal fragment length, seconds.
    pub d_max: f64,
    /// Candidate maximal pause lengths for merging, seconds.
    pub pause_set: Vec<f64>,
    /// Candidate silence levels, dB below peak RMS.
    pub db_set: Vec<f64>,
    /// Cross-correlation above this marks a duplicate fragment.
    pub alpha_corr: f64,
    /// Matches at or above this correlation are relevant.
    pub beta_rel: f64,
    /// Matches at or below this correlation are discarded.
    pub beta_irrel: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            d_min: 8.0,
            d_max: 20.0,
            pause_set: vec![0.5, 1.0, 1.5],
            db_set: vec![52.0, 56.0, 60.0, 64.0, 68.0],
            alpha_corr: 0.8,
            beta_rel: 0.5,
            beta_irrel: 0.3,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.d_min > 0.0 && self.d_min < self.d_max) {
            return Err(EngineError::InvalidConfig(
                "need 0 < d_min < d_max".into(),
            ));
        }
        if self.pause_set.is_empty() || self.db_set.is_empty() {
            return Err(EngineError::InvalidConfig(
                "pause_set and db_set must be non-empty".into(),
            ));
        }
        for &t in [self.alpha_corr, self.beta_rel, self.beta_irrel].iter() {
            if !(0.0..=1.0).contains(&t) {
                return Err(EngineError::InvalidConfig(format!(
                    "threshold {t} outside [0, 1]"
                )));
            }
        }
        if self.beta_irrel >= self.beta_rel {
            return Err(EngineError::InvalidConfig(
                "beta_irrel must be below beta_rel".into(),
            ));
        }
        Ok(())
    }
}

/// Role of a fragment's source recording.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FragmentRole {
    Original,
    Cover,
    Humming,
}

/// A time span within one recording.
#[derive(Debug, Clone, PartialEq)]
pub struct Fragment {
    pub source_id: String,
    pub start_s: f64,
    pub end_s: f64,
    pub role: FragmentRole,
}

impl Fragment {
    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }
}

/// Classification of a matched cover fragment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchStatus {
    Relevant,
    Uncertain,
}

/// A cover fragment matched to an original fragment.
#[derive(Debug, Clone)]
pub struct AlignedMatch {
    pub fragment: Fragment,
    pub correlation: f64,
    pub status: MatchStatus,
}

/// One original fragment with every cover fragment aligned to it. All
/// member fragments share the original's duration.
#[derive(Debug, Clone)]
pub struct AlignedGroup {
    pub original: Fragment,
    pub matches: Vec<AlignedMatch>,
}

/// Per-frame silence flags on the RMS grid.
#[derive(Debug, Clone)]
pub struct SilenceMask {
    pub silent: Vec<bool>,
    pub frame_length: usize,
    pub hop: usize,
}

/// Marks frame `t` silent iff its RMS sits more than `l_db` decibels below
/// the envelope's peak. An all-zero envelope is entirely silent.
pub fn find_silence_mask(env: &RmsEnvelope, l_db: f64) -> SilenceMask {
    let max = env.values.iter().cloned().fold(0.0f64, f64::max);
    let silent = if max <= 0.0 {
        vec![true; env.values.len()]
    } else {
        env.values
            .iter()
            .map(|&v| {
                if v <= 0.0 {
                    true
                } else {
                    20.0 * (v / max).log10() < -l_db
                }
            })
            .collect()
    };
    SilenceMask {
        silent,
        frame_length: env.frame_length,
        hop: env.hop,
    }
}

/// Converts maximal non-silent frame runs into fragments. A run of frames
/// `t0..=t1` spans samples `t0*hop .. t1*hop + frame_length`, clamped to
/// the waveform.
pub fn split_by_silence(w: &Waveform, mask: &SilenceMask, source_id: &str) -> Vec<Fragment> {
    let fs = w.sample_rate as f64;
    let mut out = Vec::new();
    let mut run_start: Option<usize> = None;
    for (t, &silent) in mask.silent.iter().chain(std::iter::once(&true)).enumerate() {
        match (silent, run_start) {
            (false, None) => run_start = Some(t),
            (true, Some(s)) => {
                let start = (s * mask.hop) as f64 / fs;
                let end = (((t - 1) * mask.hop + mask.frame_length) as f64 / fs)
                    .min(w.duration_s());
                out.push(Fragment {
                    source_id: source_id.to_string(),
                    start_s: start,
                    end_s: end,
                    role: FragmentRole::Original,
                });
                run_start = None;
            }
            _ => {}
        }
    }
    out
}

/// Greedy left-to-right merge of adjacent fragments whose gap is below
/// `d_p`, refusing merges that would exceed `d_max`; afterwards fragments
/// outside `[d_min, d_max]` are dropped.
pub fn merge_fragments(frags: &[Fragment], d_p: f64, d_min: f64, d_max: f64) -> Vec<Fragment> {
    let mut merged: Vec<Fragment> = Vec::new();
    for f in frags {
        match merged.last_mut() {
            Some(last)
                if f.start_s - last.end_s < d_p && f.end_s - last.start_s <= d_max =>
            {
                last.end_s = f.end_s;
            }
            _ => merged.push(f.clone()),
        }
    }
    merged
        .into_iter()
        .filter(|f| {
            let d = f.duration_s();
            d >= d_min && d <= d_max
        })
        .collect()
}

/// Chronological greedy de-duplication: a fragment is kept when its
/// maximal cross-correlation against every already-kept fragment stays at
/// or below `alpha_corr`. `prints` runs parallel to `frags`.
pub fn dedup_fragments(
    frags: &[Fragment],
    prints: &[FingerprintSequence],
    alpha_corr: f64,
) -> Result<Vec<usize>> {
    assert_eq!(frags.len(), prints.len(), "one print sequence per fragment");
    let mut kept: Vec<usize> = Vec::new();
    for i in 0..frags.len() {
        let mut unique = true;
        for &k in &kept {
            let corr = max_cross_correlation(&prints[i], &prints[k], DEDUP_MIN_OVERLAP)?;
            if corr > alpha_corr {
                unique = false;
                break;
            }
        }
        if unique {
            kept.push(i);
        }
    }
    Ok(kept)
}

/// Result of the fragmentation grid search.
#[derive(Debug, Clone)]
pub struct Fragmentation {
    pub fragments: Vec<Fragment>,
    /// Fingerprints of each fragment, parallel to `fragments`.
    pub prints: Vec<FingerprintSequence>,
    /// The `(d_p, l_db)` combination that produced the set; `None` when
    /// every combination produced nothing.
    pub chosen: Option<(f64, f64)>,
}

fn fragment_frame_range(frag: &Fragment, frame_rate: f64, total_frames: usize) -> (usize, usize) {
    let start = ((frag.start_s * frame_rate).round() as usize).min(total_frames);
    let end = ((frag.end_s * frame_rate).round() as usize).min(total_frames);
    (start, end)
}

fn encode_fragments(
    features: &FeatureMatrix,
    frags: &[Fragment],
    enc_cfg: &EncoderConfig,
    encoder: &dyn WindowEncoder,
) -> Result<Vec<FingerprintSequence>> {
    frags
        .iter()
        .map(|f| {
            let (a, b) = fragment_frame_range(f, features.frame_rate, features.frames());
            encode_range(features, a, b, enc_cfg, encoder, &f.source_id)
        })
        .collect()
}

/// Runs mask, split, merge and dedup for every `(d_p, l_db)` combination
/// in ascending order and returns the fragment set of maximal cardinality
/// (first combination wins ties).
pub fn best_fragmentation(
    w: &Waveform,
    source_id: &str,
    config: &PipelineConfig,
    enc_cfg: &EncoderConfig,
    encoder: &dyn WindowEncoder,
) -> Result<Fragmentation> {
    config.validate()?;
    if w.is_empty() {
        return Err(EngineError::EmptyAudio);
    }
    let env = rms_envelope(w, RMS_FRAME_LENGTH, RMS_HOP)?;
    let features = cqt(w)?;

    let mut best = Fragmentation {
        fragments: Vec::new(),
        prints: Vec::new(),
        chosen: None,
    };
    for &d_p in &config.pause_set {
        for &l_db in &config.db_set {
            let mask = find_silence_mask(&env, l_db);
            let raw = split_by_silence(w, &mask, source_id);
            let merged = merge_fragments(&raw, d_p, config.d_min, config.d_max);
            if merged.is_empty() {
                continue;
            }
            let prints = encode_fragments(&features, &merged, enc_cfg, encoder)?;
            let kept = dedup_fragments(&merged, &prints, config.alpha_corr)?;
            if kept.len() > best.fragments.len() {
                let mut prints = prints;
                let mut fragments = Vec::with_capacity(kept.len());
                let mut kept_prints = Vec::with_capacity(kept.len());
                for &i in kept.iter().rev() {
                    // Drain from the back so indices stay valid.
                    kept_prints.push(prints.swap_remove(i));
                    fragments.push(merged[i].clone());
                }
                fragments.reverse();
                kept_prints.reverse();
                best = Fragmentation {
                    fragments,
                    prints: kept_prints,
                    chosen: Some((d_p, l_db)),
                };
            }
        }
    }
    Ok(best)
}

/// A candidate cover fragment before threshold filtering.
#[derive(Debug, Clone)]
pub struct MatchCandidate {
    pub fragment: Fragment,
    pub correlation: f64,
}

/// Correlates one original fragment's fingerprints against a full cover
/// sequence and returns every peak above `beta_irrel` as a candidate
/// fragment of exactly the original's duration.
///
/// Only lags that keep the fragment fully inside the cover are considered,
/// so candidate spans always start at or after zero.
pub fn match_cover(
    original: &Fragment,
    original_prints: &FingerprintSequence,
    cover_id: &str,
    cover_prints: &FingerprintSequence,
    config: &PipelineConfig,
) -> Result<Vec<MatchCandidate>> {
    if cover_prints.len() < original_prints.len() {
        return Err(EngineError::InputTooShort {
            what: "match_cover: cover shorter than fragment",
            needed: original_prints.len(),
            got: cover_prints.len(),
        });
    }
    let curve = seq_cross_correlation(original_prints, cover_prints, DEDUP_MIN_OVERLAP)?;
    let max_lag = (cover_prints.len() - original_prints.len()) as isize;
    let min_separation = (original_prints.len() / 2).max(1);
    let peaks = detect_peaks(&curve, config.beta_irrel, min_separation);
    let hop_s = original_prints.config.hop_s();
    let duration = original.duration_s();
    Ok(peaks
        .into_iter()
        .filter(|p| p.lag >= 0 && p.lag <= max_lag)
        .map(|p| {
            let start = p.lag as f64 * hop_s;
            MatchCandidate {
                fragment: Fragment {
                    source_id: cover_id.to_string(),
                    start_s: start,
                    end_s: start + duration,
                    role: FragmentRole::Cover,
                },
                correlation: p.score,
            }
        })
        .collect())
}

/// Splits candidates by the two correlation thresholds: at or above
/// `beta_rel` is relevant, strictly between the thresholds is uncertain,
/// at or below `beta_irrel` is discarded.
pub fn filter_matches(
    candidates: Vec<MatchCandidate>,
    beta_rel: f64,
    beta_irrel: f64,
) -> (Vec<AlignedMatch>, Vec<AlignedMatch>) {
    let mut relevant = Vec::new();
    let mut uncertain = Vec::new();
    for c in candidates {
        if c.correlation >= beta_rel {
            relevant.push(AlignedMatch {
                fragment: c.fragment,
                correlation: c.correlation,
                status: MatchStatus::Relevant,
            });
        } else if c.correlation > beta_irrel {
            uncertain.push(AlignedMatch {
                fragment: c.fragment,
                correlation: c.correlation,
                status: MatchStatus::Uncertain,
            });
        }
    }
    (relevant, uncertain)
}

/// Full pipeline: fragment the original, then match every fragment into
/// every cover and keep relevant and uncertain matches. Groups with no
/// matches are retained (original-only); a silent original yields an
/// empty list.
pub fn extract_aligned_groups(
    original: &Waveform,
    original_id: &str,
    covers: &[(String, Waveform)],
    config: &PipelineConfig,
    enc_cfg: &EncoderConfig,
    encoder: &dyn WindowEncoder,
) -> Result<Vec<AlignedGroup>> {
    let fragmentation = best_fragmentation(original, original_id, config, enc_cfg, encoder)?;
    if fragmentation.fragments.is_empty() {
        return Ok(Vec::new());
    }
    let cover_prints: Vec<(String, FingerprintSequence)> = covers
        .iter()
        .map(|(id, w)| {
            let features = cqt(w)?;
            let prints = encode_range(
                &features,
                0,
                features.frames(),
                enc_cfg,
                encoder,
                id,
            )?;
            Ok((id.clone(), prints))
        })
        .collect::<Result<_>>()?;

    let mut groups = Vec::with_capacity(fragmentation.fragments.len());
    for (frag, prints) in fragmentation
        .fragments
        .iter()
        .zip(fragmentation.prints.iter())
    {
        let mut matches = Vec::new();
        for (cover_id, cp) in &cover_prints {
            let candidates = match_cover(frag, prints, cover_id, cp, config)?;
            let (relevant, uncertain) =
                filter_matches(candidates, config.beta_rel, config.beta_irrel);
            matches.extend(relevant);
            matches.extend(uncertain);
        }
        groups.push(AlignedGroup {
            original: frag.clone(),
            matches,
        });
    }
    Ok(groups)
}
