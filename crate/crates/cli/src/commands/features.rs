//! `features`: fingerprints (and optionally the feature matrix) for one
//! audio file.

use crate::config::RunConfig;
use crate::db::load_audio;
use anyhow::{bail, Result};
use clap::Args as ClapArgs;
use humdex_core::audio::{cqt, save_feature_matrix};
use humdex_core::fingerprint::{
    encode_sequence, save_fingerprints, BaselineEncoder, EncoderConfig, EncoderProfile,
};
use std::path::PathBuf;
use std::str::FromStr;

#[derive(ClapArgs)]
pub struct Args {
    /// Input WAV file.
    #[arg(long)]
    input: PathBuf,

    /// Output fingerprint file (.chfp).
    #[arg(long)]
    output: PathBuf,

    /// Window profile: short or long.
    #[arg(long, default_value = "short")]
    profile: String,

    /// Also write the raw feature matrix here (.chfm).
    #[arg(long)]
    matrix: Option<PathBuf>,
}

pub fn run(args: Args, config: &RunConfig) -> Result<i32> {
    if args.profile == "fused" {
        bail!("features requires a concrete profile (short or long)");
    }
    let profile = EncoderProfile::from_str(&args.profile)?;
    let wave = load_audio(&args.input)?;
    let features = cqt(&wave)?;
    if let Some(matrix_path) = &args.matrix {
        save_feature_matrix(matrix_path, &features)?;
    }
    let encoder = BaselineEncoder::new(config.run.seed);
    let stem = crate::db::stem_of(&args.input);
    let seq = encode_sequence(
        &features,
        &EncoderConfig::for_profile(profile),
        &encoder,
        &stem,
    )?;
    save_fingerprints(&args.output, &seq)?;
    println!(
        "prints={} profile={} output={}",
        seq.len(),
        profile.as_str(),
        args.output.display()
    );
    Ok(0)
}
