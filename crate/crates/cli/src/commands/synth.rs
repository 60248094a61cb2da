//! `synth`: render a deterministic corpus with ground truth.

use crate::config::RunConfig;
use anyhow::{Context, Result};
use clap::Args as ClapArgs;
use humdex_core::audio::write_wav;
use humdex_core::manifest::{write_json, GroundTruthCover, GroundTruthSong};
use humdex_core::synth::{generate_corpus, make_queries, synth_cover, CorpusSpec, CoverTransform};
use std::io::Write;
use std::path::PathBuf;

#[derive(ClapArgs)]
pub struct Args {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,

    /// Number of songs.
    #[arg(long, default_value_t = 20)]
    songs: usize,

    /// Number of query clips.
    #[arg(long, default_value_t = 10)]
    queries: usize,

    /// Covers of the first song (for the align demo).
    #[arg(long, default_value_t = 0)]
    covers: usize,
}

pub fn run(args: Args, config: &RunConfig) -> Result<i32> {
    let spec = CorpusSpec {
        n_songs: args.songs,
        seed: config.run.seed,
        ..CorpusSpec::default()
    };
    let songs_dir = args.out.join("songs");
    let queries_dir = args.out.join("queries");
    std::fs::create_dir_all(&songs_dir)?;
    std::fs::create_dir_all(&queries_dir)?;

    let songs = generate_corpus(&spec)?;
    let mut truths = Vec::with_capacity(songs.len());
    for song in &songs {
        write_wav(songs_dir.join(format!("{}.wav", song.title)), &song.wave)?;
        truths.push(GroundTruthSong {
            song_id: song.song_id,
            boundaries: song.boundaries.clone(),
            covers: Vec::new(),
        });
    }

    if args.covers > 0 {
        let covers_dir = args.out.join("covers");
        std::fs::create_dir_all(&covers_dir)?;
        for c in 0..args.covers {
            let t = CoverTransform {
                lead_silence_s: 3.0 + 2.0 * c as f64,
                snr_db: 25.0,
                ..CoverTransform::identity()
            };
            let (wave, map) = synth_cover(&songs[0].wave, &t, spec.seed ^ (c as u64 + 1))?;
            write_wav(covers_dir.join(format!("cover_{c:03}.wav")), &wave)?;
            truths[0].covers.push(GroundTruthCover {
                shift_semitones: t.shift_semitones,
                stretch: t.stretch,
                snr_db: t.snr_db,
                offset_map: map,
            });
        }
    }

    let queries = make_queries(&songs, args.queries, (9.0, 14.0), &spec, spec.seed ^ 0xABCD)?;
    let mut truth_csv = String::from("query_path,song_id\n");
    for (i, q) in queries.iter().enumerate() {
        let name = format!("query_{i:03}.wav");
        write_wav(queries_dir.join(&name), &q.wave)?;
        truth_csv.push_str(&format!("queries/{name},{}\n", q.truth_song));
    }

    write_json(args.out.join("ground_truth.json"), &truths)?;
    let mut f = std::fs::File::create(args.out.join("truth.csv"))
        .context("writing truth.csv")?;
    f.write_all(truth_csv.as_bytes())?;

    println!(
        "songs={} queries={} out={}",
        songs.len(),
        queries.len(),
        args.out.display()
    );
    Ok(0)
}
