//! A small trainable linear encoder and its gradient-descent loop.

use super::loss::{ntxent_grad, ntxent_loss, LossParams};
use super::sampler::{sample_batch, FragmentGroup};
use crate::audio::{FeatureMatrix, WindowView};
use crate::binfmt;
use crate::error::EngineError;
use crate::fingerprint::{EncoderConfig, Fingerprint, WindowEncoder, FEATURE_BINS, FINGERPRINT_DIM};
use crate::Result;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

/// Linear window encoder: `encode(w) = normalize(A * flatten(w))` with a
/// 128 x (84 * window_frames) weight matrix.
#[derive(Debug)]
pub struct ToyLinearEncoder {
    weights: Vec<f64>,
    window_frames: usize,
    seed: u64,
}

impl ToyLinearEncoder {
    pub fn new(window_frames: usize, seed: u64) -> Self {
        let dim = FEATURE_BINS * window_frames;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (dim as f64).sqrt();
        let weights = (0..FINGERPRINT_DIM * dim)
            .map(|_| {
                let g: f64 = StandardNormal.sample(&mut rng);
                g * scale
            })
            .collect();
        Self {
            weights,
            window_frames,
            seed,
        }
    }

    pub fn window_frames(&self) -> usize {
        self.window_frames
    }

    pub fn input_dim(&self) -> usize {
        FEATURE_BINS * self.window_frames
    }

    /// Raw projection `v = A x` and its norm.
    fn project(&self, flat: &[f64]) -> (Vec<f64>, f64) {
        let dim = self.input_dim();
        let mut v = vec![0.0f64; FINGERPRINT_DIM];
        for (r, slot) in v.iter_mut().enumerate() {
            let row = &self.weights[r * dim..(r + 1) * dim];
            *slot = row.iter().zip(flat.iter()).map(|(&w, &x)| w * x).sum();
        }
        let norm = v.iter().map(|&x| x * x).sum::<f64>().sqrt();
        (v, norm)
    }
}

impl WindowEncoder for ToyLinearEncoder {
    fn encode_window(&self, window: &WindowView<'_>) -> Result<Fingerprint> {
        if window.bins() != FEATURE_BINS || window.frames != self.window_frames {
            return Err(EngineError::InvalidConfig(format!(
                "encoder expects {}x{} windows, got {}x{}",
                FEATURE_BINS,
                self.window_frames,
                window.bins(),
                window.frames
            )));
        }
        let mut flat = Vec::new();
        window.flatten_into(&mut flat);
        let (v, norm) = self.project(&flat);
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
        format!("toy-linear-v1-seed{}", self.seed)
    }

    fn is_deterministic(&self) -> bool {
        true
    }
}

/// Training-loop options.
#[derive(Debug, Clone, Copy)]
pub struct TrainOptions {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Groups per batch.
    pub groups_per_batch: usize,
    /// Fragments taken per group.
    pub fragments_per_group: usize,
    pub batches_per_epoch: usize,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: 100,
            learning_rate: 0.001,
            groups_per_batch: 4,
            fragments_per_group: 4,
            batches_per_epoch: 8,
            seed: 0,
        }
    }
}

fn flatten(window: &FeatureMatrix) -> Vec<f64> {
    window.data().iter().map(|&x| x as f64).collect()
}

/// Plain SGD on the group-contrastive loss over sampled batches.
///
/// The batch schedule is a fixed function of `(seed, batch index)`, so each
/// epoch revisits the same batches and the loss trace is comparable across
/// epochs. Returns the trained encoder and the per-epoch mean loss.
pub fn train_toy_encoder(
    dataset: &[FragmentGroup],
    config: &EncoderConfig,
    params: &LossParams,
    opts: &TrainOptions,
) -> Result<(ToyLinearEncoder, Vec<f64>)> {
    let eligible = dataset
        .iter()
        .filter(|g| g.members.len() >= 2 && g.frames() >= config.window_frames)
        .count();
    if eligible < 2 {
        return Err(EngineError::InsufficientGroups {
            needed: 2,
            available: eligible,
        });
    }
    let k = opts.groups_per_batch.min(eligible).max(2);
    let mut encoder = ToyLinearEncoder::new(config.window_frames, opts.seed);
    let dim = encoder.input_dim();
    let mut trace = Vec::with_capacity(opts.epochs);

    for _epoch in 0..opts.epochs {
        let mut epoch_losses = Vec::with_capacity(opts.batches_per_epoch);
        for b in 0..opts.batches_per_epoch {
            let mut rng = ChaCha8Rng::seed_from_u64(
                opts.seed ^ 0x9e37_79b9u64.wrapping_add((b as u64).wrapping_mul(0x517c_c1b7_2722_0a95)),
            );
            let batch = sample_batch(dataset, k, opts.fragments_per_group, config, &mut rng)?;
            let flats: Vec<Vec<f64>> = batch.windows.iter().map(flatten).collect();

            // Forward pass.
            let mut embeddings = Vec::with_capacity(flats.len());
            let mut raw = Vec::with_capacity(flats.len());
            for f in &flats {
                let (v, norm) = encoder.project(f);
                if norm < 1e-12 {
                    return Err(EngineError::Degenerate(
                        "encoder collapsed to zero output".into(),
                    ));
                }
                embeddings.push(v.iter().map(|&x| x / norm).collect::<Vec<f64>>());
                raw.push((v, norm));
            }

            let loss = ntxent_loss(&embeddings, &batch.labels, params)?;
            epoch_losses.push(loss);
            if opts.learning_rate == 0.0 {
                continue;
            }
            let grad_z = ntxent_grad(&embeddings, &batch.labels, params)?;

            // Backprop through the normalization, accumulate into A.
            let mut grad_a = vec![0.0f64; FINGERPRINT_DIM * dim];
            for (bi, f) in flats.iter().enumerate() {
                let (_, norm) = &raw[bi];
                let z = &embeddings[bi];
                let gz = &grad_z[bi];
                let gz_dot_z: f64 = gz.iter().zip(z.iter()).map(|(&a, &b)| a * b).sum();
                for r in 0..FINGERPRINT_DIM {
                    let gv = (gz[r] - gz_dot_z * z[r]) / norm;
                    if gv == 0.0 {
                        continue;
                    }
                    let row = &mut grad_a[r * dim..(r + 1) * dim];
                    for (slot, &x) in row.iter_mut().zip(f.iter()) {
                        *slot += gv * x;
                    }
                }
            }
            for (w, &g) in encoder.weights.iter_mut().zip(grad_a.iter()) {
                *w -= opts.learning_rate * g;
            }
        }
        trace.push(epoch_losses.iter().sum::<f64>() / epoch_losses.len() as f64);
    }
    Ok((encoder, trace))
}

/// Writes encoder weights: magic `CHTE`, version, rows u32, cols u32,
/// window_frames u16, seed u64, f32 row-major matrix.
pub fn save_toy_encoder<P: AsRef<Path>>(path: P, enc: &ToyLinearEncoder) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(b"CHTE").map_err(EngineError::Io)?;
    binfmt::write_u8(&mut w, 1)?;
    binfmt::write_u32(&mut w, FINGERPRINT_DIM as u32)?;
    binfmt::write_u32(&mut w, enc.input_dim() as u32)?;
    binfmt::write_u16(&mut w, enc.window_frames as u16)?;
    binfmt::write_u64(&mut w, enc.seed)?;
    for &v in &enc.weights {
        binfmt::write_f32(&mut w, v as f32)?;
    }
    Ok(())
}

/// Reads a `CHTE` weight file.
pub fn load_toy_encoder<P: AsRef<Path>>(path: P) -> Result<ToyLinearEncoder> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    binfmt::expect_magic(&mut r, b"CHTE", "toy encoder")?;
    binfmt::expect_version(&mut r, 1, "toy encoder")?;
    let rows = binfmt::read_u32(&mut r)? as usize;
    let cols = binfmt::read_u32(&mut r)? as usize;
    let window_frames = binfmt::read_u16(&mut r)? as usize;
    let seed = binfmt::read_u64(&mut r)?;
    if rows != FINGERPRINT_DIM || cols != FEATURE_BINS * window_frames {
        return Err(EngineError::Format(format!(
            "toy encoder: unexpected dims {rows}x{cols} for {window_frames} frames"
        )));
    }
    let mut weights = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        weights.push(binfmt::read_f32(&mut r)? as f64);
    }
    Ok(ToyLinearEncoder {
        weights,
        window_frames,
        seed,
    })
}

/// Builds a deterministic synthetic training set: `n_groups` base motif
/// feature matrices, each with pitch-shifted, lightly noised variants.
pub fn synthetic_training_groups(
    n_groups: usize,
    members_per_group: usize,
    frames: usize,
    seed: u64,
) -> Vec<FragmentGroup> {
    use super::augment::augment_pitch_shift;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_groups)
        .map(|gid| {
            // Base motif: a few active bins with per-frame amplitude
            // patterns, margins kept clear so shifts stay in range.
            let mut base = FeatureMatrix::new(FEATURE_BINS, frames, 31.25);
            let n_notes = 3 + (rng.gen_range(0..3) as usize);
            let register = rng.gen_range(12..FEATURE_BINS - 20);
            for _ in 0..n_notes {
                let bin = register + rng.gen_range(0..10);
                let on = rng.gen_range(0..frames / 2);
                let len = rng.gen_range(frames / 4..frames / 2);
                let amp = rng.gen_range(0.5..1.0);
                for t in on..(on + len).min(frames) {
                    let cur = base.get(bin, t);
                    base.set(bin, t, cur + amp as f32);
                }
            }
            let members = (0..members_per_group)
                .map(|mi| {
                    let shift = if mi == 0 {
                        0.0
                    } else {
                        rng.gen_range(-1.0..1.0)
                    };
                    let mut m = augment_pitch_shift(&base, shift).expect("shift in range");
                    for b in 0..m.bins() {
                        for t in 0..m.frames() {
                            let noise: f64 = rng.gen_range(0.0..0.05);
                            let cur = m.get(b, t);
                            m.set(b, t, cur + noise as f32);
                        }
                    }
                    m
                })
                .collect();
            FragmentGroup {
                group_id: gid,
                members,
            }
        })
        .collect()
}
