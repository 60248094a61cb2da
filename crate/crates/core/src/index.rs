//! Fingerprint retrieval: an exact-scan flat store, an inverted-file
//! coarse index over k-means centroids, the two-step query (ANN candidate
//! retrieval then Pearson reranking with the short/long dispatch rule),
//! hit-rate metrics and timing.

use crate::binfmt;
use crate::error::EngineError;
use crate::fingerprint::{
    encode_sequence, EncoderConfig, EncoderProfile, Fingerprint, FingerprintSequence,
    WindowEncoder, FINGERPRINT_DIM,
};
use crate::matching::pearson_at_offset;
use crate::Result;
use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

/// Queries shorter than this use the short profile, all others the long
/// profile.
pub const FUSED_CUTOFF_S: f64 = 15.0;

/// Default ANN candidate budget per query fingerprint.
pub const DEFAULT_TOP_K: usize = 5000;

/// One stored fingerprint with its provenance.
#[derive(Debug, Clone)]
pub struct IndexEntry {
    pub vector: Fingerprint,
    pub song_id: u32,
    /// Fingerprint step index within the song's sequence.
    pub offset: u32,
}

/// A search hit ordered by distance with deterministic tie-breaking.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchHit {
    pub distance: f64,
    pub song_id: u32,
    pub offset: u32,
}

fn hit_order(a: &SearchHit, b: &SearchHit) -> std::cmp::Ordering {
    a.distance
        .total_cmp(&b.distance)
        .then(a.song_id.cmp(&b.song_id))
        .then(a.offset.cmp(&b.offset))
}

fn euclidean(a: &Fingerprint, b: &Fingerprint) -> f64 {
    let mut acc = 0.0f64;
    for (x, y) in a.0.iter().zip(b.0.iter()) {
        let d = *x as f64 - *y as f64;
        acc += d * d;
    }
    acc.sqrt()
}

/// Exhaustive-scan store; the exact-search oracle.
#[derive(Debug, Clone, Default)]
pub struct FlatStore {
    pub entries: Vec<IndexEntry>,
}

impl FlatStore {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// K nearest entries by Euclidean distance; ties broken by ascending
    /// `(song_id, offset)`.
    pub fn exact_search(&self, query: &Fingerprint, k: usize) -> Vec<SearchHit> {
        let mut hits: Vec<SearchHit> = self
            .entries
            .iter()
            .map(|e| SearchHit {
                distance: euclidean(query, &e.vector),
                song_id: e.song_id,
                offset: e.offset,
            })
            .collect();
        hits.sort_by(hit_order);
        hits.truncate(k);
        hits
    }
}

/// Inverted-file coarse quantizer: k-means centroids with per-centroid
/// entry buckets.
#[derive(Debug, Clone)]
pub struct CoarseIndex {
    pub profile: EncoderProfile,
    pub centroids: Vec<Fingerprint>,
    /// Entry indices per centroid, referring to the flat store.
    pub buckets: Vec<Vec<u32>>,
}

impl CoarseIndex {
    pub fn nlist(&self) -> usize {
        self.centroids.len()
    }
}

const KMEANS_ITERATIONS: usize = 25;

/// Seeded Lloyd iterations; empty clusters steal the farthest entry from
/// the largest cluster, keeping the partition total.
fn kmeans(entries: &[IndexEntry], nlist: usize, seed: u64) -> (Vec<Fingerprint>, Vec<Vec<u32>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = sample_indices(&mut rng, entries.len(), nlist);
    let mut centroids: Vec<Fingerprint> =
        picks.iter().map(|i| entries[i].vector.clone()).collect();
    let mut assignment = vec![0u32; entries.len()];

    for _ in 0..KMEANS_ITERATIONS {
        let mut changed = false;
        for (i, e) in entries.iter().enumerate() {
            let mut best = (f64::INFINITY, 0u32);
            for (c, centroid) in centroids.iter().enumerate() {
                let d = euclidean(&e.vector, centroid);
                if d < best.0 {
                    best = (d, c as u32);
                }
            }
            if assignment[i] != best.1 {
                assignment[i] = best.1;
                changed = true;
            }
        }

        // Rescue empty clusters deterministically.
        loop {
            let mut counts = vec![0usize; nlist];
            for &a in &assignment {
                counts[a as usize] += 1;
            }
            let Some(empty) = counts.iter().position(|&c| c == 0) else {
                break;
            };
            let largest = counts
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
                .unwrap()
                .0 as u32;
            let farthest = assignment
                .iter()
                .enumerate()
                .filter(|(_, &a)| a == largest)
                .map(|(i, _)| {
                    (
                        euclidean(&entries[i].vector, &centroids[largest as usize]),
                        i,
                    )
                })
                .max_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)))
                .unwrap()
                .1;
            assignment[farthest] = empty as u32;
        }

        // Centroid update.
        let mut sums = vec![[0.0f64; FINGERPRINT_DIM]; nlist];
        let mut counts = vec![0usize; nlist];
        for (i, e) in entries.iter().enumerate() {
            let a = assignment[i] as usize;
            counts[a] += 1;
            for (s, &v) in sums[a].iter_mut().zip(e.vector.0.iter()) {
                *s += v as f64;
            }
        }
        for (c, centroid) in centroids.iter_mut().enumerate() {
            if counts[c] == 0 {
                continue;
            }
            let inv = 1.0 / counts[c] as f64;
            for (slot, &s) in centroid.0.iter_mut().zip(sums[c].iter()) {
                *slot = (s * inv) as f32;
            }
        }
        if !changed {
            break;
        }
    }

    let mut buckets = vec![Vec::new(); nlist];
    for (i, &a) in assignment.iter().enumerate() {
        buckets[a as usize].push(i as u32);
    }
    (centroids, buckets)
}

/// Builds the coarse index over `entries`; `nlist` must not exceed the
/// entry count.
pub fn build_coarse_index(
    store: &FlatStore,
    profile: EncoderProfile,
    nlist: usize,
    seed: u64,
) -> Result<CoarseIndex> {
    if store.is_empty() {
        return Err(EngineError::EmptyDatabase);
    }
    let nlist = nlist.clamp(1, store.len());
    let (centroids, buckets) = kmeans(&store.entries, nlist, seed);
    Ok(CoarseIndex {
        profile,
        centroids,
        buckets,
    })
}

/// Default list count for `n` entries.
pub fn default_nlist(n: usize) -> usize {
    ((n as f64).sqrt().round() as usize).max(1)
}

/// Scans the `nprobe` buckets whose centroids are nearest to the query and
/// returns the top `k` entries by Euclidean distance.
pub fn ann_search(
    index: &CoarseIndex,
    store: &FlatStore,
    query: &Fingerprint,
    k: usize,
    nprobe: usize,
) -> Vec<SearchHit> {
    let nprobe = nprobe.clamp(1, index.nlist());
    let mut by_centroid: Vec<(f64, usize)> = index
        .centroids
        .iter()
        .enumerate()
        .map(|(c, v)| (euclidean(query, v), c))
        .collect();
    by_centroid.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut hits: Vec<SearchHit> = Vec::new();
    for &(_, c) in by_centroid.iter().take(nprobe) {
        for &ei in &index.buckets[c] {
            let e = &store.entries[ei as usize];
            hits.push(SearchHit {
                distance: euclidean(query, &e.vector),
                song_id: e.song_id,
                offset: e.offset,
            });
        }
    }
    hits.sort_by(hit_order);
    hits.truncate(k);
    hits
}

/// Stored fingerprints of one song under both window profiles.
#[derive(Debug, Clone)]
pub struct SongRecord {
    pub song_id: u32,
    pub title: String,
    pub duration_s: f64,
    pub prints_short: FingerprintSequence,
    pub prints_long: FingerprintSequence,
}

/// Per-profile search structures.
#[derive(Debug, Clone)]
pub struct ProfileIndex {
    pub profile: EncoderProfile,
    pub store: FlatStore,
    pub coarse: CoarseIndex,
    /// Per-song print sequences for reranking, indexed by song position.
    pub sequences: Vec<FingerprintSequence>,
    /// Maps a song id to its position in `sequences`.
    pub song_pos: HashMap<u32, usize>,
}

impl ProfileIndex {
    /// Assembles the flat store from per-song sequences and clusters it.
    pub fn build(
        profile: EncoderProfile,
        songs: &[(u32, FingerprintSequence)],
        nlist: Option<usize>,
        seed: u64,
    ) -> Result<Self> {
        let mut store = FlatStore::default();
        let mut sequences = Vec::with_capacity(songs.len());
        let mut song_pos = HashMap::new();
        for (song_id, seq) in songs {
            if seq.is_empty() {
                return Err(EngineError::EmptySequence);
            }
            song_pos.insert(*song_id, sequences.len());
            for (offset, p) in seq.prints.iter().enumerate() {
                store.entries.push(IndexEntry {
                    vector: p.clone(),
                    song_id: *song_id,
                    offset: offset as u32,
                });
            }
            sequences.push(seq.clone());
        }
        let nlist = nlist.unwrap_or_else(|| default_nlist(store.len()));
        let coarse = build_coarse_index(&store, profile, nlist, seed)?;
        Ok(Self {
            profile,
            store,
            coarse,
            sequences,
            song_pos,
        })
    }
}

/// A complete searchable database: song metadata plus one index per
/// profile actually built.
#[derive(Debug, Clone, Default)]
pub struct SongDatabase {
    /// `song_id -> title`, ordered.
    pub titles: BTreeMap<u32, String>,
    pub short: Option<ProfileIndex>,
    pub long: Option<ProfileIndex>,
}

impl SongDatabase {
    pub fn profile_index(&self, profile: EncoderProfile) -> Option<&ProfileIndex> {
        match profile {
            EncoderProfile::Short => self.short.as_ref(),
            EncoderProfile::Long => self.long.as_ref(),
        }
    }

    /// Builds both profile indexes from song records.
    pub fn build(records: &[SongRecord], nlist: Option<usize>, seed: u64) -> Result<Self> {
        if records.is_empty() {
            return Err(EngineError::EmptyDatabase);
        }
        let mut titles = BTreeMap::new();
        for r in records {
            titles.insert(r.song_id, r.title.clone());
        }
        let shorts: Vec<(u32, FingerprintSequence)> = records
            .iter()
            .map(|r| (r.song_id, r.prints_short.clone()))
            .collect();
        let longs: Vec<(u32, FingerprintSequence)> = records
            .iter()
            .map(|r| (r.song_id, r.prints_long.clone()))
            .collect();
        Ok(Self {
            titles,
            short: Some(ProfileIndex::build(EncoderProfile::Short, &shorts, nlist, seed)?),
            long: Some(ProfileIndex::build(EncoderProfile::Long, &longs, nlist, seed)?),
        })
    }
}

/// Query-time knobs.
#[derive(Debug, Clone, Copy)]
pub struct QueryOptions {
    /// ANN candidates kept per query fingerprint.
    pub top_k: usize,
    /// Buckets probed; defaults to `nlist / 4`.
    pub nprobe: Option<usize>,
    /// Ranked songs returned.
    pub n_results: usize,
}

impl Default for QueryOptions {
    fn default() -> Self {
        Self {
            top_k: DEFAULT_TOP_K,
            nprobe: None,
            n_results: 100,
        }
    }
}

/// One ranked song.
#[derive(Debug, Clone)]
pub struct RankedSong {
    pub song_id: u32,
    pub score: f64,
    /// Fingerprint step in the song where the query aligned best.
    pub best_offset: u32,
}

/// Ranked result with per-step wall-clock timings.
#[derive(Debug, Clone)]
pub struct QueryResult {
    pub ranking: Vec<RankedSong>,
    pub profile_used: EncoderProfile,
    pub ann_s: f64,
    pub rerank_s: f64,
    /// Total `(song, start offset)` alignments scored during reranking.
    pub candidates_reranked: usize,
}

/// Offset slack applied around each ANN-suggested alignment.
const RERANK_SLACK: i64 = 2;

/// Two-step search with an already-encoded query sequence.
pub fn query_with_sequence(
    db: &SongDatabase,
    profile: EncoderProfile,
    query: &FingerprintSequence,
    opts: &QueryOptions,
) -> Result<QueryResult> {
    let index = db
        .profile_index(profile)
        .ok_or_else(|| EngineError::ProfileMismatch {
            index: "missing".into(),
            requested: profile.as_str().into(),
        })?;
    if query.is_empty() {
        return Err(EngineError::EmptySequence);
    }
    let nprobe = opts
        .nprobe
        .unwrap_or_else(|| (index.coarse.nlist() / 4).max(1));

    // Step one: pool per-fingerprint ANN hits into per-song candidate
    // start offsets.
    let ann_started = Instant::now();
    let mut candidate_starts: BTreeMap<u32, BTreeSet<u32>> = BTreeMap::new();
    for (qi, print) in query.prints.iter().enumerate() {
        let hits = ann_search(&index.coarse, &index.store, print, opts.top_k, nprobe);
        for hit in hits {
            let pos = index.song_pos[&hit.song_id];
            let song_len = index.sequences[pos].len() as i64;
            let q_len = query.len() as i64;
            if song_len < q_len {
                continue;
            }
            let start = hit.offset as i64 - qi as i64;
            let starts = candidate_starts.entry(hit.song_id).or_default();
            for s in (start - RERANK_SLACK)..=(start + RERANK_SLACK) {
                let clamped = s.clamp(0, song_len - q_len);
                starts.insert(clamped as u32);
            }
        }
    }
    let ann_s = ann_started.elapsed().as_secs_f64();

    // Step two: exact Pearson rerank at the suggested alignments.
    let rerank_started = Instant::now();
    let mut reranked = 0usize;
    let mut ranking: Vec<RankedSong> = Vec::new();
    for (song_id, starts) in &candidate_starts {
        let seq = &index.sequences[index.song_pos[song_id]];
        let mut best: Option<(f64, u32)> = None;
        for &start in starts {
            reranked += 1;
            if let Some(r) = pearson_at_offset(query, seq, start as usize) {
                if best.map_or(true, |(b, _)| r > b) {
                    best = Some((r, start));
                }
            }
        }
        if let Some((score, offset)) = best {
            ranking.push(RankedSong {
                song_id: *song_id,
                score,
                best_offset: offset,
            });
        }
    }
    ranking.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.song_id.cmp(&b.song_id)));
    ranking.truncate(opts.n_results);
    let rerank_s = rerank_started.elapsed().as_secs_f64();

    Ok(QueryResult {
        ranking,
        profile_used: profile,
        ann_s,
        rerank_s,
        candidates_reranked: reranked,
    })
}

/// Rerank oracle: scores every song at every alignment offset.
pub fn rerank_all_offsets(
    db: &SongDatabase,
    profile: EncoderProfile,
    query: &FingerprintSequence,
) -> Result<Vec<RankedSong>> {
    let index = db
        .profile_index(profile)
        .ok_or(EngineError::EmptyDatabase)?;
    let mut ranking = Vec::new();
    for (song_id, &pos) in index.song_pos.iter() {
        let seq = &index.sequences[pos];
        if seq.len() < query.len() {
            continue;
        }
        let mut best: Option<(f64, u32)> = None;
        for start in 0..=(seq.len() - query.len()) {
            if let Some(r) = pearson_at_offset(query, seq, start) {
                if best.map_or(true, |(b, _)| r > b) {
                    best = Some((r, start as u32));
                }
            }
        }
        if let Some((score, offset)) = best {
            ranking.push(RankedSong {
                song_id: *song_id,
                score,
                best_offset: offset,
            });
        }
    }
    ranking.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.song_id.cmp(&b.song_id)));
    Ok(ranking)
}

/// Encodes a query waveform with the profile chosen by the fused rule
/// (short under 15 s, long otherwise) and runs the two-step search.
pub fn query_song(
    db: &SongDatabase,
    query: &crate::audio::Waveform,
    encoder: &dyn WindowEncoder,
    opts: &QueryOptions,
) -> Result<QueryResult> {
    let profile = if query.duration_s() < FUSED_CUTOFF_S {
        EncoderProfile::Short
    } else {
        EncoderProfile::Long
    };
    let config = EncoderConfig::for_profile(profile);
    let features = crate::audio::cqt(query)?;
    let seq = encode_sequence(&features, &config, encoder, "query").map_err(|e| match e {
        EngineError::InputTooShort { .. } => EngineError::InputTooShort {
            what: "query too short",
            needed: config.window_frames,
            got: features.frames(),
        },
        other => other,
    })?;
    query_with_sequence(db, profile, &seq, opts)
}

/// Fraction of queries whose truth song ranks within the top `n`.
pub fn top_n_hit_rate(
    results: &[(String, Vec<u32>)],
    truth: &HashMap<String, u32>,
    n: usize,
) -> Result<f64> {
    if results.is_empty() {
        return Err(EngineError::EmptyDatabase);
    }
    let mut hits = 0usize;
    for (query_id, ranking) in results {
        let want = truth
            .get(query_id)
            .ok_or_else(|| EngineError::MissingTruth(query_id.clone()))?;
        if ranking.iter().take(n).any(|s| s == want) {
            hits += 1;
        }
    }
    Ok(hits as f64 / results.len() as f64)
}

/// One row of the timing table.
#[derive(Debug, Clone)]
pub struct BenchRow {
    pub step: &'static str,
    pub mean_s: f64,
    pub std_s: f64,
}

/// Repeats every query and aggregates per-step wall times into rows
/// `ann` and `rerank` (population standard deviation).
pub fn bench_query(
    db: &SongDatabase,
    queries: &[FingerprintSequence],
    profile: EncoderProfile,
    opts: &QueryOptions,
    repetitions: usize,
) -> Result<Vec<BenchRow>> {
    if queries.is_empty() {
        return Err(EngineError::EmptyDatabase);
    }
    let mut ann = Vec::new();
    let mut rerank = Vec::new();
    for _ in 0..repetitions.max(1) {
        for q in queries {
            let r = query_with_sequence(db, profile, q, opts)?;
            ann.push(r.ann_s);
            rerank.push(r.rerank_s);
        }
    }
    let stats = |xs: &[f64]| {
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / xs.len() as f64;
        (mean, var.sqrt())
    };
    let (am, asd) = stats(&ann);
    let (rm, rsd) = stats(&rerank);
    Ok(vec![
        BenchRow {
            step: "ann",
            mean_s: am,
            std_s: asd,
        },
        BenchRow {
            step: "rerank",
            mean_s: rm,
            std_s: rsd,
        },
    ])
}

/// Extracts features once per song and encodes both profiles, in
/// parallel across songs. Output order follows the input.
pub fn song_records_from_waves(
    songs: &[(u32, String, crate::audio::Waveform)],
    encoder: &dyn WindowEncoder,
) -> Result<Vec<SongRecord>> {
    use rayon::prelude::*;
    songs
        .par_iter()
        .map(|(song_id, title, wave)| {
            let features = crate::audio::cqt(wave)?;
            let prints_short = encode_sequence(
                &features,
                &EncoderConfig::short(),
                encoder,
                title,
            )?;
            let prints_long = encode_sequence(
                &features,
                &EncoderConfig::long(),
                encoder,
                title,
            )?;
            Ok(SongRecord {
                song_id: *song_id,
                title: title.clone(),
                duration_s: wave.duration_s(),
                prints_short,
                prints_long,
            })
        })
        .collect()
}

/// Writes a profile index: magic `CHIX`, version, profile u8, dim u16,
/// nlist u32, entry count u64, centroids, bucket offsets (prefix sums),
/// then bucket-ordered entries as vector + song_id u32 + offset u32.
pub fn save_index<P: AsRef<Path>>(path: P, index: &ProfileIndex) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(b"CHIX").map_err(EngineError::Io)?;
    binfmt::write_u8(&mut w, 1)?;
    binfmt::write_u8(
        &mut w,
        match index.profile {
            EncoderProfile::Short => 0,
            EncoderProfile::Long => 1,
        },
    )?;
    binfmt::write_u16(&mut w, FINGERPRINT_DIM as u16)?;
    binfmt::write_u32(&mut w, index.coarse.nlist() as u32)?;
    binfmt::write_u64(&mut w, index.store.len() as u64)?;
    for c in &index.coarse.centroids {
        for &v in &c.0 {
            binfmt::write_f32(&mut w, v)?;
        }
    }
    let mut offset = 0u64;
    binfmt::write_u64(&mut w, 0)?;
    for bucket in &index.coarse.buckets {
        offset += bucket.len() as u64;
        binfmt::write_u64(&mut w, offset)?;
    }
    for bucket in &index.coarse.buckets {
        for &ei in bucket {
            let e = &index.store.entries[ei as usize];
            for &v in &e.vector.0 {
                binfmt::write_f32(&mut w, v)?;
            }
            binfmt::write_u32(&mut w, e.song_id)?;
            binfmt::write_u32(&mut w, e.offset)?;
        }
    }
    Ok(())
}

/// Reads a `CHIX` file, rebuilding the flat store (bucket order) and the
/// per-song sequences needed for reranking.
pub fn load_index<P: AsRef<Path>>(path: P) -> Result<ProfileIndex> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    binfmt::expect_magic(&mut r, b"CHIX", "index")?;
    binfmt::expect_version(&mut r, 1, "index")?;
    let profile = match binfmt::read_u8(&mut r)? {
        0 => EncoderProfile::Short,
        1 => EncoderProfile::Long,
        p => return Err(EngineError::Format(format!("index: unknown profile {p}"))),
    };
    let dim = binfmt::read_u16(&mut r)? as usize;
    if dim != FINGERPRINT_DIM {
        return Err(EngineError::Format(format!("index: dim {dim}")));
    }
    let nlist = binfmt::read_u32(&mut r)? as usize;
    let count = binfmt::read_u64(&mut r)? as usize;
    let mut centroids = Vec::with_capacity(nlist);
    for _ in 0..nlist {
        let mut v = [0.0f32; FINGERPRINT_DIM];
        for slot in v.iter_mut() {
            *slot = binfmt::read_f32(&mut r)?;
        }
        centroids.push(Fingerprint(v));
    }
    let mut offsets = Vec::with_capacity(nlist + 1);
    for _ in 0..=nlist {
        offsets.push(binfmt::read_u64(&mut r)?);
    }
    if offsets[nlist] as usize != count {
        return Err(EngineError::Format("index: bucket offsets corrupt".into()));
    }
    let mut store = FlatStore::default();
    let mut buckets = vec![Vec::new(); nlist];
    for b in 0..nlist {
        for _ in offsets[b]..offsets[b + 1] {
            let mut v = [0.0f32; FINGERPRINT_DIM];
            for slot in v.iter_mut() {
                *slot = binfmt::read_f32(&mut r)?;
            }
            let song_id = binfmt::read_u32(&mut r)?;
            let offset = binfmt::read_u32(&mut r)?;
            buckets[b].push(store.len() as u32);
            store.entries.push(IndexEntry {
                vector: Fingerprint(v),
                song_id,
                offset,
            });
        }
    }
    // Rebuild per-song sequences from entries.
    let config = EncoderConfig::for_profile(profile);
    let mut per_song: BTreeMap<u32, Vec<(u32, Fingerprint)>> = BTreeMap::new();
    for e in &store.entries {
        per_song
            .entry(e.song_id)
            .or_default()
            .push((e.offset, e.vector.clone()));
    }
    let mut sequences = Vec::with_capacity(per_song.len());
    let mut song_pos = HashMap::new();
    for (song_id, mut prints) in per_song {
        prints.sort_by_key(|(o, _)| *o);
        song_pos.insert(song_id, sequences.len());
        sequences.push(FingerprintSequence {
            prints: prints.into_iter().map(|(_, p)| p).collect(),
            config,
            source_id: format!("song_{song_id}"),
        });
    }
    Ok(ProfileIndex {
        profile,
        store,
        coarse: CoarseIndex {
            profile,
            centroids,
            buckets,
        },
        sequences,
        song_pos,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn unit(rng: &mut StdRng) -> Fingerprint {
        let mut v = [0.0f32; FINGERPRINT_DIM];
        for x in v.iter_mut() {
            *x = rng.gen_range(-1.0..1.0);
        }
        let n = v.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
        for x in v.iter_mut() {
            *x = (*x as f64 / n) as f32;
        }
        Fingerprint(v)
    }

    /// Gaussian bump around a center direction, renormalized.
    fn near(center: &Fingerprint, sigma: f64, rng: &mut StdRng) -> Fingerprint {
        let mut v = [0.0f32; FINGERPRINT_DIM];
        for (x, &c) in v.iter_mut().zip(center.0.iter()) {
            *x = c + (rng.gen_range(-1.0f64..1.0) * sigma) as f32;
        }
        let n = v.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
        for x in v.iter_mut() {
            *x = (*x as f64 / n) as f32;
        }
        Fingerprint(v)
    }

    fn store_of(vectors: Vec<Fingerprint>) -> FlatStore {
        FlatStore {
            entries: vectors
                .into_iter()
                .enumerate()
                .map(|(i, vector)| IndexEntry {
                    vector,
                    song_id: (i / 100) as u32,
                    offset: (i % 100) as u32,
                })
                .collect(),
        }
    }

    #[test]
    fn exact_search_finds_stored_vector_first() {
        let mut rng = StdRng::seed_from_u64(1);
        let vs: Vec<Fingerprint> = (0..50).map(|_| unit(&mut rng)).collect();
        let probe = vs[17].clone();
        let store = store_of(vs);
        let hits = store.exact_search(&probe, 5);
        assert_eq!(hits[0].distance, 0.0);
        assert_eq!((hits[0].song_id, hits[0].offset), (0, 17));
    }

    #[test]
    fn exact_search_k_above_store_size_returns_all() {
        let mut rng = StdRng::seed_from_u64(2);
        let store = store_of((0..10).map(|_| unit(&mut rng)).collect());
        assert_eq!(store.exact_search(&unit(&mut rng), 100).len(), 10);
    }

    #[test]
    fn euclidean_order_equals_cosine_order_for_unit_vectors() {
        let mut rng = StdRng::seed_from_u64(3);
        let vs: Vec<Fingerprint> = (0..40).map(|_| unit(&mut rng)).collect();
        let q = unit(&mut rng);
        let store = store_of(vs.clone());
        let hits = store.exact_search(&q, 40);
        let mut by_dot: Vec<(f64, u32)> = vs
            .iter()
            .enumerate()
            .map(|(i, v)| (q.dot(v), (i % 100) as u32))
            .collect();
        by_dot.sort_by(|a, b| b.0.total_cmp(&a.0));
        for (hit, (_, offset)) in hits.iter().zip(by_dot.iter()) {
            assert_eq!(hit.offset, *offset);
        }
    }

    #[test]
    fn single_bucket_holds_everything() {
        let mut rng = StdRng::seed_from_u64(4);
        let store = store_of((0..30).map(|_| unit(&mut rng)).collect());
        let coarse = build_coarse_index(&store, EncoderProfile::Short, 1, 9).unwrap();
        assert_eq!(coarse.nlist(), 1);
        assert_eq!(coarse.buckets[0].len(), 30);
    }

    #[test]
    fn buckets_partition_the_store() {
        let mut rng = StdRng::seed_from_u64(5);
        let store = store_of((0..200).map(|_| unit(&mut rng)).collect());
        let nlist = default_nlist(store.len());
        let coarse = build_coarse_index(&store, EncoderProfile::Short, nlist, 9).unwrap();
        let total: usize = coarse.buckets.iter().map(|b| b.len()).sum();
        assert_eq!(total, 200);
        let mut seen = vec![false; 200];
        for b in &coarse.buckets {
            for &i in b {
                assert!(!seen[i as usize], "entry in two buckets");
                seen[i as usize] = true;
            }
        }
    }

    #[test]
    fn two_well_separated_clusters_stay_pure() {
        let mut rng = StdRng::seed_from_u64(6);
        let c0 = unit(&mut rng);
        let mut c1 = c0.clone();
        for x in c1.0.iter_mut() {
            *x = -*x;
        }
        let mut vectors = Vec::new();
        for _ in 0..100 {
            vectors.push(near(&c0, 0.05, &mut rng));
        }
        for _ in 0..100 {
            vectors.push(near(&c1, 0.05, &mut rng));
        }
        let store = store_of(vectors);
        let coarse = build_coarse_index(&store, EncoderProfile::Short, 2, 9).unwrap();
        for bucket in &coarse.buckets {
            let first_half = bucket.iter().filter(|&&i| i < 100).count();
            let purity = first_half.max(bucket.len() - first_half) as f64 / bucket.len() as f64;
            assert!(purity >= 0.95, "bucket purity {purity}");
        }
    }

    #[test]
    fn full_probe_equals_exact_search() {
        let mut rng = StdRng::seed_from_u64(7);
        let store = store_of((0..300).map(|_| unit(&mut rng)).collect());
        let nlist = default_nlist(store.len());
        let coarse = build_coarse_index(&store, EncoderProfile::Short, nlist, 9).unwrap();
        for &k in &[1usize, 10, 100, 400] {
            let q = unit(&mut rng);
            let exact = store.exact_search(&q, k);
            let approx = ann_search(&coarse, &store, &q, k, nlist);
            assert_eq!(exact.len(), approx.len());
            for (a, b) in exact.iter().zip(approx.iter()) {
                assert_eq!((a.song_id, a.offset), (b.song_id, b.offset));
            }
        }
    }

    #[test]
    fn kmeans_is_deterministic() {
        let mut rng = StdRng::seed_from_u64(8);
        let store = store_of((0..150).map(|_| unit(&mut rng)).collect());
        let a = build_coarse_index(&store, EncoderProfile::Short, 12, 3).unwrap();
        let b = build_coarse_index(&store, EncoderProfile::Short, 12, 3).unwrap();
        for (x, y) in a.centroids.iter().zip(b.centroids.iter()) {
            assert_eq!(x.0, y.0);
        }
        assert_eq!(a.buckets, b.buckets);
    }

    fn tiny_database(seed: u64) -> (SongDatabase, Vec<FingerprintSequence>) {
        let mut rng = StdRng::seed_from_u64(seed);
        let mut records = Vec::new();
        let mut seqs = Vec::new();
        for song in 0..6u32 {
            let prints: Vec<Fingerprint> = (0..40).map(|_| unit(&mut rng)).collect();
            let mk = |cfg: EncoderConfig| FingerprintSequence {
                prints: prints.clone(),
                config: cfg,
                source_id: format!("s{song}"),
            };
            seqs.push(mk(EncoderConfig::short()));
            records.push(SongRecord {
                song_id: song,
                title: format!("song {song}"),
                duration_s: 20.0,
                prints_short: mk(EncoderConfig::short()),
                prints_long: mk(EncoderConfig::long()),
            });
        }
        (SongDatabase::build(&records, None, 5).unwrap(), seqs)
    }

    #[test]
    fn stored_block_query_ranks_its_song_first() {
        let (db, seqs) = tiny_database(10);
        let query = FingerprintSequence {
            prints: seqs[3].prints[5..25].to_vec(),
            config: EncoderConfig::short(),
            source_id: "q".into(),
        };
        let r = query_with_sequence(
            &db,
            EncoderProfile::Short,
            &query,
            &QueryOptions::default(),
        )
        .unwrap();
        assert_eq!(r.ranking[0].song_id, 3);
        assert!((r.ranking[0].score - 1.0).abs() < 1e-6);
        assert_eq!(r.ranking[0].best_offset, 5);
    }

    #[test]
    fn ann_rerank_agrees_with_full_rerank_oracle() {
        let (db, seqs) = tiny_database(11);
        let query = FingerprintSequence {
            prints: seqs[1].prints[0..20].to_vec(),
            config: EncoderConfig::short(),
            source_id: "q".into(),
        };
        let fast = query_with_sequence(
            &db,
            EncoderProfile::Short,
            &query,
            &QueryOptions {
                nprobe: Some(usize::MAX),
                ..QueryOptions::default()
            },
        )
        .unwrap();
        let oracle = rerank_all_offsets(&db, EncoderProfile::Short, &query).unwrap();
        assert_eq!(fast.ranking[0].song_id, oracle[0].song_id);
        assert!((fast.ranking[0].score - oracle[0].score).abs() < 1e-12);
    }

    #[test]
    fn hit_rate_counts_correctly() {
        let truth: HashMap<String, u32> =
            [("a".into(), 1u32), ("b".into(), 2), ("c".into(), 3)]
                .into_iter()
                .collect();
        let results = vec![
            ("a".to_string(), vec![1, 9, 9]),
            ("b".to_string(), vec![9, 9, 9, 9, 9, 9, 2]),
            ("c".to_string(), vec![9; 50]),
        ];
        assert!((top_n_hit_rate(&results, &truth, 1).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert!((top_n_hit_rate(&results, &truth, 10).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        let empty_rank = vec![("a".to_string(), vec![])];
        assert_eq!(top_n_hit_rate(&empty_rank, &truth, 10).unwrap(), 0.0);
    }

    #[test]
    fn hit_rate_missing_truth_errors() {
        let truth: HashMap<String, u32> = HashMap::new();
        let results = vec![("a".to_string(), vec![1])];
        assert!(matches!(
            top_n_hit_rate(&results, &truth, 1).unwrap_err(),
            EngineError::MissingTruth(_)
        ));
    }

    #[test]
    fn hit_rate_monotone_in_n() {
        let mut rng = StdRng::seed_from_u64(12);
        let truth: HashMap<String, u32> = (0..20)
            .map(|i| (format!("q{i}"), rng.gen_range(0..10u32)))
            .collect();
        let results: Vec<(String, Vec<u32>)> = (0..20)
            .map(|i| {
                let mut ids: Vec<u32> = (0..10).collect();
                for j in (1..ids.len()).rev() {
                    ids.swap(j, rng.gen_range(0..=j));
                }
                (format!("q{i}"), ids)
            })
            .collect();
        let mut last = 0.0;
        for n in 1..=10 {
            let rate = top_n_hit_rate(&results, &truth, n).unwrap();
            assert!(rate >= last);
            last = rate;
        }
        assert!((last - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bench_rows_have_expected_shape() {
        let (db, seqs) = tiny_database(13);
        let query = FingerprintSequence {
            prints: seqs[0].prints[0..15].to_vec(),
            config: EncoderConfig::short(),
            source_id: "q".into(),
        };
        let rows = bench_query(
            &db,
            &[query],
            EncoderProfile::Short,
            &QueryOptions::default(),
            1,
        )
        .unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].step, "ann");
        assert_eq!(rows[1].step, "rerank");
        // Single sample: zero standard deviation, non-negative means.
        assert_eq!(rows[0].std_s, 0.0);
        assert!(rows[0].mean_s >= 0.0 && rows[1].mean_s >= 0.0);
    }

    #[test]
    fn index_file_roundtrip_preserves_query_scores() {
        let (db, seqs) = tiny_database(14);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("short.chix");
        save_index(&path, db.short.as_ref().unwrap()).unwrap();
        let loaded = load_index(&path).unwrap();
        assert_eq!(loaded.profile, EncoderProfile::Short);
        let db2 = SongDatabase {
            titles: db.titles.clone(),
            short: Some(loaded),
            long: None,
        };
        let query = FingerprintSequence {
            prints: seqs[2].prints[3..23].to_vec(),
            config: EncoderConfig::short(),
            source_id: "q".into(),
        };
        let a = query_with_sequence(&db, EncoderProfile::Short, &query, &QueryOptions::default())
            .unwrap();
        let b = query_with_sequence(&db2, EncoderProfile::Short, &query, &QueryOptions::default())
            .unwrap();
        assert_eq!(a.ranking.len(), b.ranking.len());
        for (x, y) in a.ranking.iter().zip(b.ranking.iter()) {
            assert_eq!(x.song_id, y.song_id);
            assert_eq!(x.score.to_bits(), y.score.to_bits());
            assert_eq!(x.best_offset, y.best_offset);
        }
    }
}
