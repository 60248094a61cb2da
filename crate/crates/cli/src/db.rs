//! On-disk database layout shared by `index`, `query`, `eval` and
//! `bench`:
//!
//! ```text
//! db/
//!   registry.short.json   registry.long.json
//!   prints/<title>.short.chfp   prints/<title>.long.chfp
//!   index.short.chix      index.long.chix
//! ```

use anyhow::{bail, Context, Result};
use humdex_core::audio::{load_wav, resample, Waveform, CANONICAL_RATE};
use humdex_core::fingerprint::EncoderProfile;
use humdex_core::index::{load_index, SongDatabase};
use humdex_core::manifest::{read_json, RegistryEntry};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub fn registry_path(db: &Path, profile: EncoderProfile) -> PathBuf {
    db.join(format!("registry.{}.json", profile.as_str()))
}

pub fn index_path(db: &Path, profile: EncoderProfile) -> PathBuf {
    db.join(format!("index.{}.chix", profile.as_str()))
}

pub fn print_path(db: &Path, title: &str, profile: EncoderProfile) -> PathBuf {
    db.join("prints")
        .join(format!("{title}.{}.chfp", profile.as_str()))
}

/// Search profile requested on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchProfile {
    Short,
    Long,
    Fused,
}

impl SearchProfile {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "short" => Ok(Self::Short),
            "long" => Ok(Self::Long),
            "fused" => Ok(Self::Fused),
            other => bail!("unknown profile {other:?} (expected short, long or fused)"),
        }
    }

    fn needed(self) -> Vec<EncoderProfile> {
        match self {
            Self::Short => vec![EncoderProfile::Short],
            Self::Long => vec![EncoderProfile::Long],
            Self::Fused => vec![EncoderProfile::Short, EncoderProfile::Long],
        }
    }
}

/// Loads the indexes a search profile needs, with titles from the
/// registries. Missing or mismatched index files are usage errors.
pub fn load_database(db_dir: &Path, profile: SearchProfile) -> Result<SongDatabase> {
    let mut database = SongDatabase::default();
    for p in profile.needed() {
        let reg_path = registry_path(db_dir, p);
        let entries: Vec<RegistryEntry> = read_json(&reg_path)
            .with_context(|| format!("reading registry {}", reg_path.display()))?;
        let mut titles = BTreeMap::new();
        for e in &entries {
            titles.insert(e.song_id, e.title.clone());
        }
        let idx_path = index_path(db_dir, p);
        let index =
            load_index(&idx_path).with_context(|| format!("loading {}", idx_path.display()))?;
        if index.profile != p {
            bail!(
                "mismatched encoder profile: {} holds a {} index, requested {}",
                idx_path.display(),
                index.profile.as_str(),
                p.as_str()
            );
        }
        database.titles.extend(titles);
        match p {
            EncoderProfile::Short => database.short = Some(index),
            EncoderProfile::Long => database.long = Some(index),
        }
    }
    Ok(database)
}

/// Loads a WAV and resamples it to the canonical 16 kHz when needed.
pub fn load_audio(path: &Path) -> Result<Waveform> {
    let w = load_wav(path).with_context(|| format!("loading {}", path.display()))?;
    if w.sample_rate == CANONICAL_RATE {
        Ok(w)
    } else {
        Ok(resample(&w, CANONICAL_RATE)?)
    }
}

/// Sorted `*.wav` files of a directory.
pub fn wav_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "wav"))
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("no .wav files in {}", dir.display());
    }
    Ok(files)
}

pub fn stem_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "unnamed".into())
}
