//! Song-sampling re-identification on taste-profile triplet data.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ReidError, Result};
use crate::rng::{Purpose, SeedSpec, Stream, StreamLabel};
use crate::topics::{SITE_1, SITE_2};

use super::report::ExperimentReport;

/// Users and the items they like, interned to dense indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SongDataset {
    likes: Vec<Vec<u32>>,
    items: usize,
}

impl SongDataset {
    /// Each inner vector is one user's liked items. Duplicates are dropped.
    pub fn from_likes(likes: Vec<Vec<u32>>) -> Result<Self> {
        if likes.is_empty() {
            return Err(ReidError::invalid("song dataset has no users"));
        }
        let mut items = 0usize;
        let likes = likes
            .into_iter()
            .enumerate()
            .map(|(u, mut set)| {
                if set.is_empty() {
                    return Err(ReidError::invalid(format!("user {u} likes no items")));
                }
                set.sort_unstable();
                set.dedup();
                items = items.max(*set.last().unwrap() as usize + 1);
                Ok(set)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { likes, items })
    }

    pub fn n(&self) -> usize {
        self.likes.len()
    }

    pub fn items(&self) -> usize {
        self.items
    }

    pub fn likes(&self, user: usize) -> &[u32] {
        &self.likes[user]
    }

    pub fn total_likes(&self) -> usize {
        self.likes.iter().map(Vec::len).sum()
    }
}

/// Parses `user_id<TAB>song_id<TAB>play_count` lines. Play counts only have
/// to parse; presence of a row means "liked". With `skip_malformed`, bad
/// lines are ignored instead of failing.
pub fn parse_song_triplets<R: BufRead>(reader: R, skip_malformed: bool) -> Result<SongDataset> {
    let mut users: HashMap<String, usize> = HashMap::new();
    let mut songs: HashMap<String, u32> = HashMap::new();
    let mut likes: Vec<Vec<u32>> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let ok = fields.len() == 3
            && !fields[0].is_empty()
            && !fields[1].is_empty()
            && fields[2].trim().parse::<u64>().is_ok();
        if !ok {
            if skip_malformed {
                continue;
            }
            return Err(ReidError::Parse(format!(
                "line {}: expected user_id, song_id, play_count separated by tabs",
                idx + 1
            )));
        }
        let next_user = users.len();
        let u = *users.entry(fields[0].to_owned()).or_insert(next_user);
        if u == likes.len() {
            likes.push(Vec::new());
        }
        let next_song = songs.len() as u32;
        let s = *songs.entry(fields[1].to_owned()).or_insert(next_song);
        likes[u].push(s);
    }
    if likes.is_empty() {
        return Err(ReidError::Parse("song file contains no triplets".into()));
    }
    SongDataset::from_likes(likes)
}

pub fn ingest_song_dataset(path: &Path, skip_malformed: bool) -> Result<SongDataset> {
    let file = File::open(path)?;
    parse_song_triplets(BufReader::new(file), skip_malformed)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SongSampling {
    #[default]
    WithReplacement,
    /// Draws `min(r, likes)` distinct items.
    WithoutReplacement,
}

fn sample_items(likes: &[u32], r: usize, sampling: SongSampling, stream: &mut Stream) -> Vec<u32> {
    let mut out: Vec<u32> = match sampling {
        SongSampling::WithReplacement => (0..r).map(|_| likes[stream.gen_range(0..likes.len())]).collect(),
        SongSampling::WithoutReplacement => likes.choose_multiple(stream, r.min(likes.len())).copied().collect(),
    };
    out.sort_unstable();
    out
}

/// Sorted multiset as `(item, count)` runs.
fn runs(sorted: &[u32]) -> Vec<(u32, u32)> {
    let mut out: Vec<(u32, u32)> = Vec::new();
    for &x in sorted {
        match out.last_mut() {
            Some((y, c)) if *y == x => *c += 1,
            _ => out.push((x, 1)),
        }
    }
    out
}

/// Site-1 samples of every user, with an item -> (user, count) index.
struct SongIndex {
    postings: HashMap<u32, Vec<(u32, u32)>>,
}

impl SongIndex {
    fn build(samples: &[Vec<u32>]) -> Self {
        let mut postings: HashMap<u32, Vec<(u32, u32)>> = HashMap::new();
        for (u, s) in samples.iter().enumerate() {
            for (item, c) in runs(s) {
                postings.entry(item).or_default().push((u as u32, c));
            }
        }
        Self { postings }
    }

    /// User with the largest multiset overlap with `query`, lowest index on ties.
    fn best_match(&self, query: &[u32]) -> usize {
        let mut overlap: HashMap<u32, u32> = HashMap::new();
        for (item, c2) in runs(query) {
            if let Some(list) = self.postings.get(&item) {
                for &(u, c1) in list {
                    *overlap.entry(u).or_insert(0) += c1.min(c2);
                }
            }
        }
        let mut best = (0u32, 0u32);
        for (u, v) in overlap {
            if v > best.1 || (v == best.1 && u < best.0) {
                best = (u, v);
            }
        }
        best.0 as usize
    }
}

/// Random-user attack: site 1 holds `r` samples of every user's likes, each
/// trial draws a user and `r` fresh samples as the site-2 observation, and
/// the attacker picks the site-1 user with maximal multiset overlap.
pub fn run_song_experiment(
    dataset: &SongDataset,
    r: usize,
    trials: u64,
    seeds: &SeedSpec,
    sampling: SongSampling,
) -> Result<ExperimentReport> {
    if r == 0 {
        return Err(ReidError::invalid("r must be at least 1"));
    }
    let site1: Vec<Vec<u32>> = (0..dataset.n())
        .into_par_iter()
        .map(|u| {
            let mut s = seeds.stream(StreamLabel::new(Purpose::SongSample).site(SITE_1).user(u as u64));
            sample_items(dataset.likes(u), r, sampling, &mut s)
        })
        .collect();
    let index = SongIndex::build(&site1);
    let successes: u64 = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut pick = seeds.stream(StreamLabel::new(Purpose::TrialUser).trial(t));
            let user = pick.gen_range(0..dataset.n());
            let mut s = seeds.stream(
                StreamLabel::new(Purpose::SongSample)
                    .site(SITE_2)
                    .trial(t)
                    .user(user as u64),
            );
            let query = sample_items(dataset.likes(user), r, sampling, &mut s);
            u64::from(index.best_match(&query) == user)
        })
        .sum();
    let config = serde_json::json!({
        "users": dataset.n(),
        "items": dataset.items(),
        "sampling": sampling,
    });
    Ok(
        ExperimentReport::random_user("song_overlap", trials, successes, seeds.master_seed)
            .with_epochs(r)
            .with_config(&config),
    )
}
