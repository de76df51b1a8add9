//! Simulation of the Topics API over synthetic populations.
//!
//! Each user holds, per epoch, a top set of `k` distinct topics out of a
//! taxonomy of `N`. A call from site `w` in epoch `s` for user `u` seeds a
//! stream with `(u, w, s)`; with probability `p` it returns a uniform
//! taxonomy topic, otherwise a uniform element of the top set. The answer is
//! therefore fixed per `(user, site, epoch)` and independent across sites.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ReidError, Result};
use crate::model::RepresentationMatrix;
use crate::rng::{Purpose, SeedSpec, Stream, StreamLabel};

pub type Topic = u32;

/// Tolerance for `sum_o p_s[o] = k`.
pub const POPULARITY_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopicsConfig {
    pub taxonomy_size: usize,
    #[serde(default = "default_top_set_size")]
    pub top_set_size: usize,
    #[serde(default = "default_flip_prob")]
    pub flip_prob: f64,
    pub epochs: usize,
}

fn default_top_set_size() -> usize {
    5
}

fn default_flip_prob() -> f64 {
    0.05
}

impl TopicsConfig {
    pub fn new(taxonomy_size: usize, top_set_size: usize, flip_prob: f64, epochs: usize) -> Result<Self> {
        let c = Self {
            taxonomy_size,
            top_set_size,
            flip_prob,
            epochs,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.taxonomy_size == 0 || self.taxonomy_size > u32::MAX as usize {
            return Err(ReidError::invalid("taxonomy_size must be in [1, 2^32)"));
        }
        if self.top_set_size == 0 || self.top_set_size > self.taxonomy_size {
            return Err(ReidError::invalid(format!(
                "top_set_size must be in [1, {}], got {}",
                self.taxonomy_size, self.top_set_size
            )));
        }
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return Err(ReidError::invalid(format!(
                "flip_prob must be in [0, 1], got {}",
                self.flip_prob
            )));
        }
        if self.epochs == 0 {
            return Err(ReidError::invalid("epochs must be at least 1"));
        }
        Ok(())
    }

    /// Emission probability of a topic inside the top set.
    pub fn q_in(&self) -> f64 {
        (1.0 - self.flip_prob) / self.top_set_size as f64 + self.q_out()
    }

    /// Emission probability of a topic outside the top set.
    pub fn q_out(&self) -> f64 {
        self.flip_prob / self.taxonomy_size as f64
    }

    pub fn with_epochs(&self, epochs: usize) -> Self {
        Self { epochs, ..self.clone() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PopulationKind {
    /// Topic of rank `j` (0-based) has weight `1 / (j + 1)^exponent`.
    Zipf {
        #[serde(default = "default_zipf_exponent")]
        exponent: f64,
    },
    Uniform,
    /// One weight vector per epoch, or a single vector shared by all epochs.
    Explicit {
        weights: Vec<Vec<f64>>,
    },
}

fn default_zipf_exponent() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

/// Generative model of top sets: in every epoch each user draws `k`
/// distinct topics without replacement, with probability proportional to
/// the epoch's topic weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationModel {
    #[serde(flatten)]
    pub kind: PopulationKind,
    /// When false, Zipf ranks are reshuffled every epoch.
    #[serde(default = "default_true")]
    pub time_invariant: bool,
}

impl Default for PopulationModel {
    fn default() -> Self {
        Self::zipf(1.0)
    }
}

impl PopulationModel {
    pub fn zipf(exponent: f64) -> Self {
        Self {
            kind: PopulationKind::Zipf { exponent },
            time_invariant: true,
        }
    }

    pub fn uniform() -> Self {
        Self {
            kind: PopulationKind::Uniform,
            time_invariant: true,
        }
    }

    pub fn explicit(weights: Vec<Vec<f64>>) -> Self {
        Self {
            kind: PopulationKind::Explicit { weights },
            time_invariant: false,
        }
    }

    /// Topic weights for `epoch`, validated against `config`.
    pub fn epoch_weights(&self, config: &TopicsConfig, epoch: usize, seeds: &SeedSpec) -> Result<Vec<f64>> {
        let n_topics = config.taxonomy_size;
        let weights = match &self.kind {
            PopulationKind::Zipf { exponent } => {
                if !exponent.is_finite() {
                    return Err(ReidError::invalid("zipf exponent must be finite"));
                }
                let by_rank: Vec<f64> = (0..n_topics).map(|j| ((j + 1) as f64).powf(-exponent)).collect();
                if self.time_invariant {
                    by_rank
                } else {
                    let mut order: Vec<usize> = (0..n_topics).collect();
                    let mut s = seeds.stream(StreamLabel::new(Purpose::PopulationDrift).epoch(epoch as u64));
                    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut s);
                    let mut w = vec![0.0; n_topics];
                    for (rank, &topic) in order.iter().enumerate() {
                        w[topic] = by_rank[rank];
                    }
                    w
                }
            }
            PopulationKind::Uniform => vec![1.0; n_topics],
            PopulationKind::Explicit { weights } => {
                let w = match weights.len() {
                    0 => return Err(ReidError::invalid("explicit population has no weights")),
                    1 => &weights[0],
                    _ => weights.get(epoch).ok_or_else(|| {
                        ReidError::invalid(format!(
                            "explicit population has {} epochs of weights, need epoch {epoch}",
                            weights.len()
                        ))
                    })?,
                };
                if w.len() != n_topics {
                    return Err(ReidError::invalid(format!(
                        "explicit weights have {} entries for a taxonomy of {n_topics}",
                        w.len()
                    )));
                }
                w.clone()
            }
        };
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(ReidError::invalid("topic weights must be finite and nonnegative"));
        }
        let positive = weights.iter().filter(|&&w| w > 0.0).count();
        if positive < config.top_set_size {
            return Err(ReidError::invalid(format!(
                "only {positive} topics have positive weight, fewer than top_set_size {}",
                config.top_set_size
            )));
        }
        Ok(weights)
    }
}

/// Categorical sampler over topic weights (binary search on the CDF).
#[derive(Clone, Debug)]
struct WeightedSampler {
    weights: Vec<f64>,
    cdf: Vec<f64>,
}

impl WeightedSampler {
    fn new(weights: Vec<f64>) -> Self {
        let mut acc = 0.0;
        let cdf = weights
            .iter()
            .map(|&w| {
                acc += w;
                acc
            })
            .collect();
        Self { weights, cdf }
    }

    fn total(&self) -> f64 {
        *self.cdf.last().unwrap()
    }

    fn draw(&self, stream: &mut Stream) -> usize {
        let target = stream.next_f64() * self.total();
        let idx = self.cdf.partition_point(|&c| c <= target);
        let mut idx = idx.min(self.cdf.len() - 1);
        // Skip zero-weight entries that share a CDF value.
        while self.weights[idx] == 0.0 {
            idx = if idx == 0 { self.cdf.len() - 1 } else { idx - 1 };
        }
        idx
    }

    /// Draws `k` distinct indices, each successive draw proportional to the
    /// weights of the indices not yet taken. Rejection of repeats samples the
    /// same conditional law; after many rejections the exact sequential
    /// method takes over.
    fn draw_distinct(&self, k: usize, stream: &mut Stream, out: &mut [Topic]) {
        const MAX_REJECTIONS: usize = 64;
        let mut taken = 0;
        let mut rejections = 0;
        while taken < k {
            if rejections < MAX_REJECTIONS {
                let t = self.draw(stream) as Topic;
                if out[..taken].contains(&t) {
                    rejections += 1;
                    continue;
                }
                out[taken] = t;
                taken += 1;
            } else {
                let remaining: f64 = self
                    .weights
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| !out[..taken].contains(&(*i as Topic)))
                    .map(|(_, w)| w)
                    .sum();
                let target = stream.next_f64() * remaining;
                let mut acc = 0.0;
                let mut chosen = None;
                for (i, &w) in self.weights.iter().enumerate() {
                    if w == 0.0 || out[..taken].contains(&(i as Topic)) {
                        continue;
                    }
                    acc += w;
                    chosen = Some(i);
                    if target < acc {
                        break;
                    }
                }
                out[taken] = chosen.expect("at least k positive weights") as Topic;
                taken += 1;
            }
        }
        out[..k].sort_unstable();
    }
}

/// Top sets `S_i^s` for every user and epoch, each sorted ascending.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TopSetTable {
    n: usize,
    epochs: usize,
    k: usize,
    sets: Vec<Topic>,
}

impl TopSetTable {
    /// Builds a table from explicit sets, indexed `[user][epoch]`.
    pub fn from_sets(sets: Vec<Vec<Vec<Topic>>>, config: &TopicsConfig) -> Result<Self> {
        let n = sets.len();
        if n == 0 {
            return Err(ReidError::invalid("top-set table needs at least one user"));
        }
        let k = config.top_set_size;
        let mut flat = Vec::with_capacity(n * config.epochs * k);
        for (i, user_sets) in sets.into_iter().enumerate() {
            if user_sets.len() != config.epochs {
                return Err(ReidError::invalid(format!(
                    "user {i} has {} epochs, expected {}",
                    user_sets.len(),
                    config.epochs
                )));
            }
            for (s, mut set) in user_sets.into_iter().enumerate() {
                set.sort_unstable();
                set.dedup();
                if set.len() != k || set.iter().any(|&t| t as usize >= config.taxonomy_size) {
                    return Err(ReidError::invalid(format!(
                        "top set of user {i} epoch {s} must hold {k} distinct topics below {}",
                        config.taxonomy_size
                    )));
                }
                flat.extend(set);
            }
        }
        Ok(Self {
            n,
            epochs: config.epochs,
            k,
            sets: flat,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn epochs(&self) -> usize {
        self.epochs
    }

    pub fn top_set_size(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn set(&self, user: usize, epoch: usize) -> &[Topic] {
        let start = (user * self.epochs + epoch) * self.k;
        &self.sets[start..start + self.k]
    }

    #[inline]
    pub fn contains(&self, user: usize, epoch: usize, topic: Topic) -> bool {
        self.set(user, epoch).binary_search(&topic).is_ok()
    }
}

/// Per-epoch topic inclusion probabilities `p_s[o]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopularityVector {
    pub values: Vec<f64>,
}

impl PopularityVector {
    pub fn new(values: Vec<f64>, top_set_size: usize) -> Result<Self> {
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(ReidError::invalid("inclusion probabilities must lie in [0, 1]"));
        }
        let sum: f64 = values.iter().sum();
        if (sum - top_set_size as f64).abs() > POPULARITY_SUM_TOLERANCE {
            return Err(ReidError::invalid(format!(
                "inclusion probabilities sum to {sum}, expected {top_set_size}"
            )));
        }
        Ok(Self { values })
    }
}

/// Fraction of users whose epoch-`epoch` top set contains each topic.
pub fn empirical_popularity(table: &TopSetTable, epoch: usize, taxonomy_size: usize) -> PopularityVector {
    let mut counts = vec![0u64; taxonomy_size];
    for i in 0..table.n() {
        for &t in table.set(i, epoch) {
            counts[t as usize] += 1;
        }
    }
    let n = table.n() as f64;
    PopularityVector {
        values: counts.into_iter().map(|c| c as f64 / n).collect(),
    }
}

/// Draws top sets for `n` users. Users are i.i.d. within an epoch and each
/// user's epochs are independent.
pub fn generate_population(
    n: usize,
    config: &TopicsConfig,
    model: &PopulationModel,
    seeds: &SeedSpec,
) -> Result<TopSetTable> {
    config.validate()?;
    if n == 0 {
        return Err(ReidError::invalid("population needs at least one user"));
    }
    let samplers = (0..config.epochs)
        .map(|s| model.epoch_weights(config, s, seeds).map(WeightedSampler::new))
        .collect::<Result<Vec<_>>>()?;
    let k = config.top_set_size;
    let epochs = config.epochs;
    let mut sets = vec![0 as Topic; n * epochs * k];
    sets.par_chunks_mut(epochs * k).enumerate().for_each(|(i, user_sets)| {
        for (s, sampler) in samplers.iter().enumerate() {
            let mut stream = seeds.stream(StreamLabel::new(Purpose::Population).user(i as u64).epoch(s as u64));
            sampler.draw_distinct(k, &mut stream, &mut user_sets[s * k..(s + 1) * k]);
        }
    });
    Ok(TopSetTable { n, epochs, k, sets })
}

/// One Topics API answer, a pure function of `(master seed, user, site, epoch)`.
pub fn get_topic(
    user: usize,
    site: u64,
    epoch: usize,
    table: &TopSetTable,
    config: &TopicsConfig,
    seeds: &SeedSpec,
) -> Topic {
    let mut stream = seeds.stream(
        StreamLabel::new(Purpose::TopicCall)
            .user(user as u64)
            .site(site)
            .epoch(epoch as u64),
    );
    if stream.next_f64() < config.flip_prob {
        stream.gen_range(0..config.taxonomy_size) as Topic
    } else {
        let set = table.set(user, epoch);
        set[stream.gen_range(0..set.len())]
    }
}

/// The `n x N` matrix `P_s` with `q_in` on top-set topics and `q_out` elsewhere.
pub fn per_epoch_matrix(table: &TopSetTable, epoch: usize, config: &TopicsConfig) -> Result<RepresentationMatrix> {
    if epoch >= table.epochs() {
        return Err(ReidError::IndexOutOfRange {
            index: epoch,
            limit: table.epochs(),
        });
    }
    let (q_in, q_out) = (config.q_in(), config.q_out());
    let m = config.taxonomy_size;
    let mut data = vec![q_out; table.n() * m];
    for i in 0..table.n() {
        for &t in table.set(i, epoch) {
            data[i * m + t as usize] = q_in;
        }
    }
    RepresentationMatrix::from_dense(table.n(), m, data)
}

/// A length-`r` sequence of topics observed for one user on one site.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicSequence {
    pub user: usize,
    pub site: u64,
    pub topics: Vec<Topic>,
}

/// `sum_s log P_s[user, o^s]`, i.e. the log of the product-space matrix entry.
pub fn sequence_log_likelihood(
    user: usize,
    topics: &[Topic],
    table: &TopSetTable,
    config: &TopicsConfig,
) -> Result<f64> {
    if topics.len() != table.epochs() {
        return Err(ReidError::invalid(format!(
            "sequence has {} epochs, table has {}",
            topics.len(),
            table.epochs()
        )));
    }
    if user >= table.n() {
        return Err(ReidError::IndexOutOfRange {
            index: user,
            limit: table.n(),
        });
    }
    let (ln_in, ln_out) = (config.q_in().ln(), config.q_out().ln());
    Ok(topics
        .iter()
        .enumerate()
        .map(|(s, &t)| if table.contains(user, s, t) { ln_in } else { ln_out })
        .sum())
}

/// Topics observed on one site for every user, stored user-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SiteObservations {
    n: usize,
    epochs: usize,
    topics: Vec<Topic>,
}

impl SiteObservations {
    pub fn from_sequences(sequences: &[Vec<Topic>]) -> Result<Self> {
        let n = sequences.len();
        let epochs = sequences.first().map_or(0, Vec::len);
        if n == 0 || epochs == 0 {
            return Err(ReidError::invalid("site observations need users and epochs"));
        }
        if sequences.iter().any(|s| s.len() != epochs) {
            return Err(ReidError::invalid("all sequences must have the same length"));
        }
        Ok(Self {
            n,
            epochs,
            topics: sequences.concat(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn epochs(&self) -> usize {
        self.epochs
    }

    #[inline]
    pub fn sequence(&self, user: usize) -> &[Topic] {
        &self.topics[user * self.epochs..(user + 1) * self.epochs]
    }

    /// All users' topics for one epoch (`W^s`).
    pub fn epoch(&self, epoch: usize) -> Vec<Topic> {
        (0..self.n).map(|i| self.sequence(i)[epoch]).collect()
    }

    /// Keeps only the first `epochs` epochs.
    pub fn truncated(&self, epochs: usize) -> Self {
        let epochs = epochs.min(self.epochs);
        let topics = (0..self.n)
            .flat_map(|i| self.sequence(i)[..epochs].iter().copied())
            .collect();
        Self {
            n: self.n,
            epochs,
            topics,
        }
    }
}

/// Every user's answers on `site` for all epochs of the table.
pub fn observe_site(table: &TopSetTable, config: &TopicsConfig, seeds: &SeedSpec, site: u64) -> SiteObservations {
    let epochs = table.epochs();
    let mut topics = vec![0 as Topic; table.n() * epochs];
    topics.par_chunks_mut(epochs).enumerate().for_each(|(i, seq)| {
        for (s, slot) in seq.iter_mut().enumerate() {
            *slot = get_topic(i, site, s, table, config, seeds);
        }
    });
    SiteObservations {
        n: table.n(),
        epochs,
        topics,
    }
}

pub const SITE_1: u64 = 0;
pub const SITE_2: u64 = 1;

#[derive(Clone, Debug)]
pub struct TwoSiteSimulation {
    pub table: TopSetTable,
    pub site1: SiteObservations,
    pub site2: SiteObservations,
}

/// One population observed by two independent sites.
pub fn simulate_two_sites(
    n: usize,
    config: &TopicsConfig,
    model: &PopulationModel,
    seeds: &SeedSpec,
) -> Result<TwoSiteSimulation> {
    let table = generate_population(n, config, model, seeds)?;
    let site1 = observe_site(&table, config, seeds, SITE_1);
    let site2 = observe_site(&table, config, seeds, SITE_2);
    Ok(TwoSiteSimulation { table, site1, site2 })
}
