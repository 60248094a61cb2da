//! `query`: rank database songs against one query recording.

use crate::config::RunConfig;
use crate::db::{load_audio, load_database, SearchProfile};
use crate::EXIT_EMPTY;
use anyhow::Result;
use clap::Args as ClapArgs;
use humdex_core::audio::cqt;
use humdex_core::fingerprint::{encode_sequence, BaselineEncoder, EncoderConfig, EncoderProfile};
use humdex_core::index::{query_song, query_with_sequence, QueryOptions, QueryResult, SongDatabase};
use std::path::PathBuf;

#[derive(ClapArgs)]
pub struct Args {
    /// Database directory produced by `index`.
    #[arg(long)]
    db: PathBuf,

    /// Query WAV file.
    #[arg(long)]
    input: PathBuf,

    /// short, long, or fused (dispatch on query duration).
    #[arg(long, default_value = "fused")]
    profile: String,

    /// ANN candidates per query fingerprint.
    #[arg(long)]
    top_k: Option<usize>,

    /// Probed inverted lists.
    #[arg(long)]
    nprobe: Option<usize>,

    /// Rows to print.
    #[arg(long, default_value_t = 10)]
    n_results: usize,
}

pub(crate) fn query_options(args_top_k: Option<usize>, args_nprobe: Option<usize>, n_results: usize, config: &RunConfig) -> QueryOptions {
    QueryOptions {
        top_k: args_top_k.unwrap_or(if config.index.top_k > 0 {
            config.index.top_k
        } else {
            humdex_core::index::DEFAULT_TOP_K
        }),
        nprobe: args_nprobe.or(if config.index.nprobe > 0 {
            Some(config.index.nprobe)
        } else {
            None
        }),
        n_results,
    }
}

pub(crate) fn run_query(
    db: &SongDatabase,
    profile: SearchProfile,
    wave: &humdex_core::audio::Waveform,
    encoder: &BaselineEncoder,
    opts: &QueryOptions,
) -> Result<QueryResult> {
    let result = match profile {
        SearchProfile::Fused => query_song(db, wave, encoder, opts)?,
        SearchProfile::Short | SearchProfile::Long => {
            let p = if profile == SearchProfile::Short {
                EncoderProfile::Short
            } else {
                EncoderProfile::Long
            };
            let features = cqt(wave)?;
            let seq = encode_sequence(&features, &EncoderConfig::for_profile(p), encoder, "query")?;
            query_with_sequence(db, p, &seq, opts)?
        }
    };
    Ok(result)
}

pub fn run(args: Args, config: &RunConfig) -> Result<i32> {
    let profile = SearchProfile::parse(&args.profile)?;
    let db = load_database(&args.db, profile)?;
    let wave = load_audio(&args.input)?;
    let encoder = BaselineEncoder::new(config.run.seed);
    let opts = query_options(args.top_k, args.nprobe, args.n_results, config);
    let result = run_query(&db, profile, &wave, &encoder, &opts)?;

    println!(
        "profile={} ann_s={:.4} rerank_s={:.4}",
        result.profile_used.as_str(),
        result.ann_s,
        result.rerank_s
    );
    println!("rank\tsong_id\ttitle\tscore");
    for (rank, r) in result.ranking.iter().enumerate() {
        let title = db
            .titles
            .get(&r.song_id)
            .map(String::as_str)
            .unwrap_or("?");
        println!("{}\t{}\t{}\t{:.4}", rank + 1, r.song_id, title, r.score);
    }
    Ok(if result.ranking.is_empty() {
        EXIT_EMPTY
    } else {
        0
    })
}
