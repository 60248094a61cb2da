//! `index`: extract fingerprints for every song in a directory and build
//! the per-profile inverted-file indexes.

use crate::config::RunConfig;
use crate::db::{self, load_audio, stem_of, wav_files};
use anyhow::{Context, Result};
use clap::Args as ClapArgs;
use humdex_core::fingerprint::{save_fingerprints, BaselineEncoder, EncoderProfile};
use humdex_core::index::{save_index, song_records_from_waves, ProfileIndex};
use humdex_core::manifest::{write_json, RegistryEntry};
use std::path::PathBuf;

#[derive(ClapArgs)]
pub struct Args {
    /// Directory of song WAVs (sorted file order assigns song ids).
    #[arg(long)]
    songs: PathBuf,

    /// Output database directory.
    #[arg(long)]
    db: PathBuf,

    /// Inverted-list count; 0 selects sqrt of the entry count.
    #[arg(long)]
    nlist: Option<usize>,
}

pub fn run(args: Args, config: &RunConfig) -> Result<i32> {
    let files = wav_files(&args.songs)?;
    let waves: Vec<(u32, String, _)> = files
        .iter()
        .enumerate()
        .map(|(i, p)| Ok((i as u32, stem_of(p), load_audio(p)?)))
        .collect::<Result<_>>()?;

    let encoder = BaselineEncoder::new(config.run.seed);
    let records = song_records_from_waves(&waves, &encoder)?;

    std::fs::create_dir_all(args.db.join("prints"))
        .with_context(|| format!("creating {}", args.db.display()))?;

    let nlist = args
        .nlist
        .or(if config.index.nlist > 0 {
            Some(config.index.nlist)
        } else {
            None
        });
    for profile in [EncoderProfile::Short, EncoderProfile::Long] {
        let mut registry = Vec::with_capacity(records.len());
        let mut songs = Vec::with_capacity(records.len());
        for r in &records {
            let seq = match profile {
                EncoderProfile::Short => &r.prints_short,
                EncoderProfile::Long => &r.prints_long,
            };
            let print_file = db::print_path(&args.db, &r.title, profile);
            save_fingerprints(&print_file, seq)?;
            registry.push(RegistryEntry {
                song_id: r.song_id,
                title: r.title.clone(),
                duration_s: r.duration_s,
                fingerprint_file: format!("prints/{}.{}.chfp", r.title, profile.as_str()),
            });
            songs.push((r.song_id, seq.clone()));
        }
        write_json(db::registry_path(&args.db, profile), &registry)?;
        let index = ProfileIndex::build(profile, &songs, nlist, config.run.seed)?;
        let path = db::index_path(&args.db, profile);
        save_index(&path, &index)?;
        println!(
            "profile={} songs={} entries={} nlist={} index={}",
            profile.as_str(),
            records.len(),
            index.store.len(),
            index.coarse.nlist(),
            path.display()
        );
    }
    Ok(0)
}
