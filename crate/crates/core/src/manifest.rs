//! JSON manifests and registries: aligned-group manifests, the song
//! registry consumed by the indexer, and synthetic-corpus ground truth.

use crate::alignment::{AlignedGroup, FragmentRole, MatchStatus};
use crate::error::EngineError;
use crate::synth::TimeMap;
use crate::Result;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// One fragment row of a group manifest.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ManifestFragment {
    pub source_id: String,
    pub role: FragmentRole,
    pub title: String,
    pub author: String,
    pub start_s: f64,
    pub end_s: f64,
    pub correlation: f64,
    /// True once a human double-checked the fragment; always false for
    /// freshly extracted groups.
    pub verified: bool,
}

/// A group of time-aligned fragments, serialized one file per group.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GroupManifest {
    pub group_id: u32,
    pub fragments: Vec<ManifestFragment>,
}

impl GroupManifest {
    /// Builds a manifest from an aligned group. The original fragment
    /// carries correlation 1.0 by definition.
    pub fn from_group(group_id: u32, group: &AlignedGroup, title_of: impl Fn(&str) -> String) -> Self {
        let mut fragments = vec![ManifestFragment {
            source_id: group.original.source_id.clone(),
            role: group.original.role,
            title: title_of(&group.original.source_id),
            author: String::new(),
            start_s: group.original.start_s,
            end_s: group.original.end_s,
            correlation: 1.0,
            verified: false,
        }];
        for m in &group.matches {
            fragments.push(ManifestFragment {
                source_id: m.fragment.source_id.clone(),
                role: m.fragment.role,
                title: title_of(&m.fragment.source_id),
                author: String::new(),
                start_s: m.fragment.start_s,
                end_s: m.fragment.end_s,
                correlation: m.correlation,
                verified: false,
            });
        }
        Self {
            group_id,
            fragments,
        }
    }

    pub fn relevant_count(&self, beta_rel: f64) -> usize {
        self.fragments
            .iter()
            .filter(|f| f.role != FragmentRole::Original && f.correlation >= beta_rel)
            .count()
    }

    pub fn uncertain_count(&self, beta_rel: f64, beta_irrel: f64) -> usize {
        self.fragments
            .iter()
            .filter(|f| {
                f.role != FragmentRole::Original
                    && f.correlation > beta_irrel
                    && f.correlation < beta_rel
            })
            .count()
    }
}

/// Status string for a match, mirrored into manifests by the CLI.
pub fn status_str(status: MatchStatus) -> &'static str {
    match status {
        MatchStatus::Relevant => "relevant",
        MatchStatus::Uncertain => "uncertain",
    }
}

/// One song of the registry consumed by the index builder.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RegistryEntry {
    pub song_id: u32,
    pub title: String,
    pub duration_s: f64,
    /// Path of the song's fingerprint file, relative to the registry.
    pub fingerprint_file: String,
}

/// Ground truth emitted next to a synthetic corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruthSong {
    pub song_id: u32,
    pub boundaries: Vec<(f64, f64)>,
    pub covers: Vec<GroundTruthCover>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruthCover {
    pub shift_semitones: f64,
    pub stretch: f64,
    pub snr_db: f64,
    pub offset_map: TimeMap,
}

pub fn write_json<T: Serialize, P: AsRef<Path>>(path: P, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| EngineError::Format(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>, P: AsRef<Path>>(path: P) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| EngineError::Format(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alignment::{AlignedMatch, Fragment};

    fn sample_group() -> AlignedGroup {
        AlignedGroup {
            original: Fragment {
                source_id: "orig".into(),
                start_s: 1.0,
                end_s: 11.0,
                role: FragmentRole::Original,
            },
            matches: vec![
                AlignedMatch {
                    fragment: Fragment {
                        source_id: "cover_a".into(),
                        start_s: 4.0,
                        end_s: 14.0,
                        role: FragmentRole::Cover,
                    },
                    correlation: 0.92,
                    status: MatchStatus::Relevant,
                },
                AlignedMatch {
                    fragment: Fragment {
                        source_id: "cover_b".into(),
                        start_s: 2.0,
                        end_s: 12.0,
                        role: FragmentRole::Cover,
                    },
                    correlation: 0.41,
                    status: MatchStatus::Uncertain,
                },
            ],
        }
    }

    #[test]
    fn manifest_roundtrips_through_json() {
        let manifest = GroupManifest::from_group(3, &sample_group(), |id| id.to_uppercase());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("group_003.json");
        write_json(&path, &manifest).unwrap();
        let back: GroupManifest = read_json(&path).unwrap();
        assert_eq!(back, manifest);
        assert_eq!(back.fragments[0].title, "ORIG");
    }

    #[test]
    fn manifest_counts_by_threshold() {
        let manifest = GroupManifest::from_group(0, &sample_group(), |s| s.to_string());
        assert_eq!(manifest.relevant_count(0.5), 1);
        assert_eq!(manifest.uncertain_count(0.5, 0.3), 1);
    }

    #[test]
    fn registry_roundtrip() {
        let entries = vec![
            RegistryEntry {
                song_id: 0,
                title: "song_000".into(),
                duration_s: 21.5,
                fingerprint_file: "prints/song_000.short.chfp".into(),
            },
            RegistryEntry {
                song_id: 1,
                title: "song_001".into(),
                duration_s: 18.0,
                fingerprint_file: "prints/song_001.short.chfp".into(),
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("registry.json");
        write_json(&path, &entries).unwrap();
        let back: Vec<RegistryEntry> = read_json(&path).unwrap();
        assert_eq!(back, entries);
    }
}
