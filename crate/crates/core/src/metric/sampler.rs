//! Group batch sampling for contrastive training.

use crate::audio::FeatureMatrix;
use crate::error::EngineError;
use crate::fingerprint::EncoderConfig;
use crate::Result;
use rand::seq::SliceRandom;
use rand::Rng;

/// Time-aligned feature fragments sharing one underlying melody.
#[derive(Debug, Clone)]
pub struct FragmentGroup {
    pub group_id: usize,
    /// Equal-duration members; frame counts must match for training use.
    pub members: Vec<FeatureMatrix>,
}

impl FragmentGroup {
    pub fn frames(&self) -> usize {
        self.members.first().map_or(0, |m| m.frames())
    }
}

/// One contrastive batch: analysis windows with group labels. Every window
/// of a group is cut at the same start frame, preserving alignment.
#[derive(Debug, Clone)]
pub struct TrainingBatch {
    pub windows: Vec<FeatureMatrix>,
    pub labels: Vec<usize>,
}

impl TrainingBatch {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }
}

/// Samples `k` distinct groups; from each takes `min(n_max, members)`
/// members and cuts one shared random analysis window per group.
pub fn sample_batch<R: Rng>(
    dataset: &[FragmentGroup],
    k: usize,
    n_max: usize,
    config: &EncoderConfig,
    rng: &mut R,
) -> Result<TrainingBatch> {
    let eligible: Vec<&FragmentGroup> = dataset
        .iter()
        .filter(|g| g.members.len() >= 2 && g.frames() >= config.window_frames)
        .collect();
    if eligible.len() < k {
        return Err(EngineError::InsufficientGroups {
            needed: k,
            available: eligible.len(),
        });
    }
    let mut order: Vec<usize> = (0..eligible.len()).collect();
    order.shuffle(rng);

    let mut windows = Vec::new();
    let mut labels = Vec::new();
    for &gi in order.iter().take(k) {
        let group = eligible[gi];
        for m in &group.members {
            debug_assert_eq!(m.frames(), group.frames(), "members must be equal length");
        }
        let take = n_max.min(group.members.len());
        let mut member_order: Vec<usize> = (0..group.members.len()).collect();
        member_order.shuffle(rng);
        let start = rng.gen_range(0..=group.frames() - config.window_frames);
        for &mi in member_order.iter().take(take) {
            windows.push(group.members[mi].slice_frames(start, config.window_frames));
            labels.push(group.group_id);
        }
    }
    Ok(TrainingBatch { windows, labels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fingerprint::FRAME_RATE;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn group(id: usize, members: usize, frames: usize) -> FragmentGroup {
        FragmentGroup {
            group_id: id,
            members: (0..members)
                .map(|m| {
                    let data = (0..84 * frames)
                        .map(|i| ((i + m) % 17) as f32 / 17.0)
                        .collect();
                    FeatureMatrix::from_data(data, 84, frames, FRAME_RATE)
                })
                .collect(),
        }
    }

    #[test]
    fn batch_shape_is_k_by_n() {
        let dataset: Vec<FragmentGroup> = (0..10).map(|i| group(i, 6, 150)).collect();
        let mut rng = StdRng::seed_from_u64(1);
        let batch = sample_batch(&dataset, 4, 4, &EncoderConfig::short(), &mut rng).unwrap();
        assert_eq!(batch.len(), 16);
        let mut distinct: Vec<usize> = batch.labels.clone();
        distinct.dedup();
        distinct.sort_unstable();
        distinct.dedup();
        assert_eq!(distinct.len(), 4);
        for w in &batch.windows {
            assert_eq!(w.frames(), 94);
        }
    }

    #[test]
    fn small_group_contributes_all_members() {
        let dataset = vec![group(0, 2, 150), group(1, 5, 150), group(2, 3, 150)];
        let mut rng = StdRng::seed_from_u64(2);
        let batch = sample_batch(&dataset, 3, 4, &EncoderConfig::short(), &mut rng).unwrap();
        let count0 = batch.labels.iter().filter(|&&l| l == 0).count();
        assert_eq!(count0, 2);
    }

    #[test]
    fn too_many_groups_requested_errors() {
        let dataset = vec![group(0, 3, 150)];
        let mut rng = StdRng::seed_from_u64(3);
        let err = sample_batch(&dataset, 4, 4, &EncoderConfig::short(), &mut rng).unwrap_err();
        assert!(matches!(err, EngineError::InsufficientGroups { .. }));
    }

    #[test]
    fn windows_within_group_share_the_start() {
        // Members encode their frame index, so equal windows mean equal
        // start offsets.
        let frames = 200;
        let members: Vec<FeatureMatrix> = (0..3)
            .map(|_| {
                let mut m = FeatureMatrix::new(84, frames, FRAME_RATE);
                for t in 0..frames {
                    m.set(0, t, t as f32);
                }
                m
            })
            .collect();
        let dataset = vec![
            FragmentGroup {
                group_id: 0,
                members,
            },
            group(1, 2, frames),
        ];
        let mut rng = StdRng::seed_from_u64(4);
        let batch = sample_batch(&dataset, 2, 4, &EncoderConfig::short(), &mut rng).unwrap();
        let zeros: Vec<&FeatureMatrix> = batch
            .windows
            .iter()
            .zip(batch.labels.iter())
            .filter(|(_, &l)| l == 0)
            .map(|(w, _)| w)
            .collect();
        assert_eq!(zeros.len(), 3);
        let first_start = zeros[0].get(0, 0);
        for w in &zeros {
            assert_eq!(w.get(0, 0), first_start);
        }
    }
}
