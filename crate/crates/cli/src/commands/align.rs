//! `align`: extract groups of aligned fragments from an original song and
//! its covers, one JSON manifest per group.

use crate::config::RunConfig;
use crate::db::{load_audio, stem_of};
use crate::EXIT_EMPTY;
use anyhow::{Context, Result};
use clap::Args as ClapArgs;
use humdex_core::alignment::extract_aligned_groups;
use humdex_core::fingerprint::{BaselineEncoder, EncoderConfig, EncoderProfile};
use humdex_core::manifest::{write_json, GroupManifest};
use std::path::PathBuf;
use std::str::FromStr;

#[derive(ClapArgs)]
pub struct Args {
    /// Original song WAV.
    #[arg(long)]
    original: PathBuf,

    /// Cover WAVs to match into.
    #[arg(long, num_args = 1.., required = true)]
    covers: Vec<PathBuf>,

    /// Output directory for group manifests.
    #[arg(long)]
    out: PathBuf,

    /// Window profile used for matching.
    #[arg(long, default_value = "short")]
    profile: String,
}

pub fn run(args: Args, config: &RunConfig) -> Result<i32> {
    let profile = EncoderProfile::from_str(&args.profile)?;
    let pipeline = config.pipeline();
    pipeline.validate()?;

    let original = load_audio(&args.original)?;
    let original_id = stem_of(&args.original);
    let covers: Vec<(String, _)> = args
        .covers
        .iter()
        .map(|p| Ok((stem_of(p), load_audio(p)?)))
        .collect::<Result<_>>()?;

    let encoder = BaselineEncoder::new(config.run.seed);
    let groups = extract_aligned_groups(
        &original,
        &original_id,
        &covers,
        &pipeline,
        &EncoderConfig::for_profile(profile),
        &encoder,
    )?;

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let mut relevant = 0usize;
    let mut uncertain = 0usize;
    for (i, group) in groups.iter().enumerate() {
        let manifest = GroupManifest::from_group(i as u32, group, |id| id.to_string());
        relevant += manifest.relevant_count(pipeline.beta_rel);
        uncertain += manifest.uncertain_count(pipeline.beta_rel, pipeline.beta_irrel);
        write_json(args.out.join(format!("group_{i:03}.json")), &manifest)?;
    }
    println!(
        "groups={} relevant={} uncertain={}",
        groups.len(),
        relevant,
        uncertain
    );
    Ok(if groups.is_empty() { EXIT_EMPTY } else { 0 })
}
