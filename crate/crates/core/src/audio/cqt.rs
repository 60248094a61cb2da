//! Constant-Q feature matrices.
//!
//! The transform is realized as a direct-kernel filterbank: one
//! Hann-windowed complex exponential per bin, evaluated in the time domain
//! at every hop position. Kernels are normalized so a unit-amplitude sine
//! at a bin's center frequency produces a magnitude near 1.0 in that bin.

use super::Waveform;
use crate::binfmt;
use crate::error::EngineError;
use crate::Result;
use std::f64::consts::PI;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::OnceLock;

/// Parameters of the constant-Q transform.
#[derive(Debug, Clone, PartialEq)]
pub struct CqtParams {
    pub bins_per_octave: usize,
    pub n_octaves: usize,
    /// Center frequency of the lowest bin, Hz.
    pub f_min: f64,
    /// Hop between analysis frames, samples.
    pub hop: usize,
    pub sample_rate: u32,
}

impl Default for CqtParams {
    fn default() -> Self {
        Self {
            bins_per_octave: 12,
            n_octaves: 7,
            f_min: 32.70,
            hop: 512,
            sample_rate: super::CANONICAL_RATE,
        }
    }
}

impl CqtParams {
    pub fn bins(&self) -> usize {
        self.bins_per_octave * self.n_octaves
    }

    /// Center frequency of bin `k` in Hz.
    pub fn bin_frequency(&self, k: usize) -> f64 {
        self.f_min * 2f64.powf(k as f64 / self.bins_per_octave as f64)
    }

    pub fn frame_rate(&self) -> f64 {
        self.sample_rate as f64 / self.hop as f64
    }
}

/// Time-frequency magnitude matrix, `bins` rows by `frames` columns,
/// stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Vec<f32>,
    bins: usize,
    frames: usize,
    /// Frames per second of the time axis.
    pub frame_rate: f64,
}

impl FeatureMatrix {
    pub fn new(bins: usize, frames: usize, frame_rate: f64) -> Self {
        Self {
            data: vec![0.0; bins * frames],
            bins,
            frames,
            frame_rate,
        }
    }

    pub fn from_data(data: Vec<f32>, bins: usize, frames: usize, frame_rate: f64) -> Self {
        assert_eq!(data.len(), bins * frames, "data length must be bins*frames");
        Self {
            data,
            bins,
            frames,
            frame_rate,
        }
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn row(&self, bin: usize) -> &[f32] {
        &self.data[bin * self.frames..(bin + 1) * self.frames]
    }

    pub fn row_mut(&mut self, bin: usize) -> &mut [f32] {
        &mut self.data[bin * self.frames..(bin + 1) * self.frames]
    }

    pub fn get(&self, bin: usize, frame: usize) -> f32 {
        self.data[bin * self.frames + frame]
    }

    pub fn set(&mut self, bin: usize, frame: usize, v: f32) {
        self.data[bin * self.frames + frame] = v;
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Borrowed view of a contiguous frame range.
    pub fn window(&self, start_frame: usize, frames: usize) -> WindowView<'_> {
        assert!(start_frame + frames <= self.frames);
        WindowView {
            mat: self,
            start_frame,
            frames,
        }
    }

    /// Owned copy of a contiguous frame range.
    pub fn slice_frames(&self, start_frame: usize, frames: usize) -> FeatureMatrix {
        let mut out = FeatureMatrix::new(self.bins, frames, self.frame_rate);
        for b in 0..self.bins {
            out.row_mut(b)
                .copy_from_slice(&self.row(b)[start_frame..start_frame + frames]);
        }
        out
    }
}

/// Borrowed window over a frame range of a [`FeatureMatrix`].
#[derive(Debug, Clone, Copy)]
pub struct WindowView<'a> {
    mat: &'a FeatureMatrix,
    pub start_frame: usize,
    pub frames: usize,
}

impl<'a> WindowView<'a> {
    pub fn bins(&self) -> usize {
        self.mat.bins
    }

    pub fn row(&self, bin: usize) -> &'a [f32] {
        &self.mat.row(bin)[self.start_frame..self.start_frame + self.frames]
    }

    /// Flattens bin-major into `buf`.
    pub fn flatten_into(&self, buf: &mut Vec<f64>) {
        buf.clear();
        buf.reserve(self.bins() * self.frames);
        for b in 0..self.bins() {
            buf.extend(self.row(b).iter().map(|&x| x as f64));
        }
    }
}

struct BinKernel {
    re: Vec<f32>,
    im: Vec<f32>,
    /// Tap offset of the kernel start relative to the frame center.
    lead: isize,
}

/// Precomputed constant-Q filterbank.
pub struct Cqt {
    params: CqtParams,
    kernels: Vec<BinKernel>,
}

impl Cqt {
    pub fn new(params: CqtParams) -> Self {
        // Q such that each filter's bandwidth matches the geometric bin
        // spacing.
        let q = 1.0 / (2f64.powf(1.0 / params.bins_per_octave as f64) - 1.0);
        let kernels = (0..params.bins())
            .map(|k| {
                let f = params.bin_frequency(k);
                let len = ((q * params.sample_rate as f64 / f).ceil() as usize).max(4);
                let mut re = Vec::with_capacity(len);
                let mut im = Vec::with_capacity(len);
                let mut win_sum = 0.0;
                for n in 0..len {
                    let win = hann(n, len);
                    win_sum += win;
                    let ph = 2.0 * PI * f * (n as f64) / params.sample_rate as f64;
                    re.push((win * ph.cos()) as f32);
                    im.push((win * ph.sin()) as f32);
                }
                let norm = (2.0 / win_sum) as f32;
                for v in re.iter_mut().chain(im.iter_mut()) {
                    *v *= norm;
                }
                BinKernel {
                    re,
                    im,
                    lead: -((len / 2) as isize),
                }
            })
            .collect();
        Self { params, kernels }
    }

    pub fn params(&self) -> &CqtParams {
        &self.params
    }

    /// Transforms a waveform into an `bins x ceil(len/hop)` magnitude
    /// matrix. Frame `t` is centered at sample `t * hop`; samples outside
    /// the waveform count as zero.
    pub fn transform(&self, w: &Waveform) -> Result<FeatureMatrix> {
        if w.sample_rate != self.params.sample_rate {
            return Err(EngineError::InvalidConfig(format!(
                "expected sample rate {}, got {}",
                self.params.sample_rate, w.sample_rate
            )));
        }
        if w.len() < self.params.hop {
            return Err(EngineError::InputTooShort {
                what: "cqt",
                needed: self.params.hop,
                got: w.len(),
            });
        }
        let x: Vec<f32> = w.samples.iter().map(|&v| v as f32).collect();
        let n_frames = x.len().div_ceil(self.params.hop);
        let mut out = FeatureMatrix::new(self.params.bins(), n_frames, self.params.frame_rate());
        for (bin, kernel) in self.kernels.iter().enumerate() {
            let row = out.row_mut(bin);
            for (t, slot) in row.iter_mut().enumerate() {
                let center = (t * self.params.hop) as isize;
                let start = center + kernel.lead;
                let lo = (-start).max(0) as usize;
                let hi = (x.len() as isize - start).clamp(0, kernel.re.len() as isize) as usize;
                if lo >= hi {
                    continue;
                }
                let seg = &x[(start + lo as isize) as usize..(start + hi as isize) as usize];
                let mut acc_re = 0.0f32;
                let mut acc_im = 0.0f32;
                for ((&kr, &ki), &s) in kernel.re[lo..hi]
                    .iter()
                    .zip(kernel.im[lo..hi].iter())
                    .zip(seg.iter())
                {
                    acc_re += kr * s;
                    acc_im += ki * s;
                }
                *slot = (acc_re * acc_re + acc_im * acc_im).sqrt();
            }
        }
        Ok(out)
    }
}

fn hann(n: usize, len: usize) -> f64 {
    0.5 - 0.5 * (2.0 * PI * n as f64 / (len - 1).max(1) as f64).cos()
}

static CANONICAL_CQT: OnceLock<Cqt> = OnceLock::new();

/// Constant-Q transform with the engine-canonical parameters (84 bins,
/// 12 per octave from 32.70 Hz, hop 512 at 16 kHz). The filterbank is
/// built once per process.
pub fn cqt(w: &Waveform) -> Result<FeatureMatrix> {
    CANONICAL_CQT
        .get_or_init(|| Cqt::new(CqtParams::default()))
        .transform(w)
}

/// Writes a feature matrix: magic `CHFM`, version, bins u16, frames u32,
/// f32 little-endian row-major.
pub fn save_feature_matrix<P: AsRef<Path>>(path: P, m: &FeatureMatrix) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(b"CHFM").map_err(EngineError::Io)?;
    binfmt::write_u8(&mut w, 1)?;
    binfmt::write_u16(&mut w, m.bins() as u16)?;
    binfmt::write_u32(&mut w, m.frames() as u32)?;
    for &v in m.data() {
        binfmt::write_f32(&mut w, v)?;
    }
    Ok(())
}

/// Reads a `CHFM` file; the time axis is assumed to be on the canonical
/// frame grid.
pub fn load_feature_matrix<P: AsRef<Path>>(path: P) -> Result<FeatureMatrix> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    binfmt::expect_magic(&mut r, b"CHFM", "feature matrix")?;
    binfmt::expect_version(&mut r, 1, "feature matrix")?;
    let bins = binfmt::read_u16(&mut r)? as usize;
    let frames = binfmt::read_u32(&mut r)? as usize;
    let mut data = Vec::with_capacity(bins * frames);
    for _ in 0..bins * frames {
        data.push(binfmt::read_f32(&mut r)?);
    }
    Ok(FeatureMatrix::from_data(
        data,
        bins,
        frames,
        CqtParams::default().frame_rate(),
    ))
}
