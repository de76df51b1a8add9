//! Re-identification attacks on Topics sequences and on explicit matrices.
//!
//! The weighted attack scores a candidate `i` for a site-2 sequence `o` by
//! `-sum_s log E[P_s[i, o^s] | W_i^s]`, where
//!
//! * on a match (`W_i^s = o^s`) the expectation is
//!   `q_out + (q_in - q_out) q_in p / (q_out + (q_in - q_out) p)`, and
//! * on a mismatch it is `q_out + (q_in - q_out) alpha(p)` with
//!   `alpha(p) = (k - 1) p / (k - p)`,
//!
//! with `p = p_s[o^s]` the estimated popularity of the observed topic. Both
//! terms depend on `o^s` only, so costs are tabulated per epoch and topic.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::assignment::{finite_costs, min_cost_assignment};
use crate::bounds::MatchingRule;
use crate::error::{ReidError, Result};
use crate::model::RepresentationMatrix;
use crate::rng::Stream;
use crate::topics::{SiteObservations, Topic, TopicsConfig};

/// Lower clamp applied to estimated popularities before taking logs.
pub const POPULARITY_FLOOR: f64 = 1e-6;

/// Weighted scores within this relative distance are ties, so sums of the
/// same terms in a different epoch order still go to the lowest index.
pub const SCORE_TIE_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    Hamming,
    Weighted,
    Assignment,
    Likelihood,
}

impl std::str::FromStr for AttackKind {
    type Err = ReidError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hamming" => Ok(AttackKind::Hamming),
            "weighted" => Ok(AttackKind::Weighted),
            "assignment" => Ok(AttackKind::Assignment),
            "likelihood" => Ok(AttackKind::Likelihood),
            other => Err(ReidError::invalid(format!("unknown attack method {other:?}"))),
        }
    }
}

impl std::fmt::Display for AttackKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            AttackKind::Hamming => "hamming",
            AttackKind::Weighted => "weighted",
            AttackKind::Assignment => "assignment",
            AttackKind::Likelihood => "likelihood",
        };
        f.write_str(s)
    }
}

/// Unbiased estimate of one epoch's topic popularity from site-1 answers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopularityEstimate {
    /// Estimator values before clamping; may be negative or exceed 1.
    pub raw: Vec<f64>,
    /// `raw` clamped to `[POPULARITY_FLOOR, 1]`.
    pub clamped: Vec<f64>,
    /// Simultaneous deviation bound over all topics at confidence `1 - delta`.
    pub radius: f64,
    pub delta: f64,
    pub samples: usize,
}

impl PopularityEstimate {
    /// Wraps known inclusion probabilities (no estimation error).
    pub fn exact(values: Vec<f64>) -> Self {
        let clamped = values.iter().map(|&v| v.clamp(POPULARITY_FLOOR, 1.0)).collect();
        Self {
            raw: values,
            clamped,
            radius: 0.0,
            delta: 0.0,
            samples: 0,
        }
    }
}

/// `(1 / (q_in - q_out)) * sqrt(ln(2N / delta) / (2 n))`.
pub fn popularity_radius(config: &TopicsConfig, delta: f64, samples: usize) -> f64 {
    let gap = config.q_in() - config.q_out();
    ((2.0 * config.taxonomy_size as f64 / delta).ln() / (2.0 * samples as f64)).sqrt() / gap
}

/// Estimates `p_s[o]` for every topic from one epoch of site-1 answers:
/// `(1/n) sum_i (1{W_i^s = o} - q_out) / (q_in - q_out)`.
pub fn estimate_popularity(epoch_topics: &[Topic], config: &TopicsConfig, delta: f64) -> Result<PopularityEstimate> {
    config.validate()?;
    if epoch_topics.is_empty() {
        return Err(ReidError::invalid("popularity estimate needs at least one observation"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(ReidError::invalid(format!("delta must be in (0, 1), got {delta}")));
    }
    let (q_in, q_out) = (config.q_in(), config.q_out());
    if q_in <= q_out {
        return Err(ReidError::invalid(
            "flip_prob = 1 makes q_in = q_out; popularity is not identifiable",
        ));
    }
    let mut counts = vec![0u64; config.taxonomy_size];
    for &t in epoch_topics {
        let slot = counts.get_mut(t as usize).ok_or(ReidError::IndexOutOfRange {
            index: t as usize,
            limit: config.taxonomy_size,
        })?;
        *slot += 1;
    }
    let n = epoch_topics.len() as f64;
    let raw: Vec<f64> = counts
        .iter()
        .map(|&c| (c as f64 / n - q_out) / (q_in - q_out))
        .collect();
    let clamped = raw.iter().map(|&v| v.clamp(POPULARITY_FLOOR, 1.0)).collect();
    Ok(PopularityEstimate {
        raw,
        clamped,
        radius: popularity_radius(config, delta, epoch_topics.len()),
        delta,
        samples: epoch_topics.len(),
    })
}

/// One estimate per epoch of `site1`. With `time_invariant`, all epochs are
/// pooled into a single estimate shared by every epoch.
pub fn estimate_site_popularity(
    site1: &SiteObservations,
    config: &TopicsConfig,
    delta: f64,
    time_invariant: bool,
) -> Result<Vec<PopularityEstimate>> {
    if time_invariant {
        let pooled: Vec<Topic> = (0..site1.epochs()).flat_map(|s| site1.epoch(s)).collect();
        let est = estimate_popularity(&pooled, config, delta)?;
        Ok(vec![est; site1.epochs()])
    } else {
        (0..site1.epochs())
            .map(|s| estimate_popularity(&site1.epoch(s), config, delta))
            .collect()
    }
}

/// `P(o in S | o' in S)` for exchangeable top sets of size `k`:
/// `(k - 1) p / (k - p)`, which is `4p / (5 - p)` at `k = 5`.
pub fn alpha_from_p(p: f64, top_set_size: usize) -> f64 {
    let k = top_set_size as f64;
    if k <= 1.0 {
        return 0.0;
    }
    (k - 1.0) * p / (k - p)
}

/// `E[P_s[i, o^s] | W_i^s = o^s]`.
pub fn match_expectation(p: f64, config: &TopicsConfig) -> f64 {
    let (q_in, q_out) = (config.q_in(), config.q_out());
    let gap = q_in - q_out;
    q_out + gap * q_in * p / (q_out + gap * p)
}

/// `E[P_s[i, o^s] | W_i^s != o^s]` under the conditional-inclusion
/// approximation.
pub fn mismatch_expectation(p: f64, config: &TopicsConfig) -> f64 {
    let (q_in, q_out) = (config.q_in(), config.q_out());
    q_out + (q_in - q_out) * alpha_from_p(p, config.top_set_size)
}

/// Asymmetric weighted Hamming distance between a site-2 sequence `o` and a
/// site-1 sequence `w`. `est[s]` is the popularity estimate for epoch `s`.
pub fn weighted_hamming_score(o: &[Topic], w: &[Topic], est: &[PopularityEstimate], config: &TopicsConfig) -> f64 {
    o.iter()
        .zip(w)
        .zip(est)
        .map(|((&os, &ws), e)| {
            let p = e.clamped[os as usize];
            if ws == os {
                -match_expectation(p, config).ln()
            } else {
                -mismatch_expectation(p, config).ln()
            }
        })
        .sum()
}

/// Tabulated per-epoch costs of the weighted attack.
#[derive(Clone, Debug)]
pub struct WeightedHamming {
    taxonomy_size: usize,
    /// `mismatch_cost[s * N + t]`
    mismatch_cost: Vec<f64>,
    /// `match_cost[s * N + t]`
    match_cost: Vec<f64>,
}

impl WeightedHamming {
    pub fn new(est: &[PopularityEstimate], config: &TopicsConfig) -> Self {
        let n_topics = config.taxonomy_size;
        let mut mismatch_cost = Vec::with_capacity(est.len() * n_topics);
        let mut match_cost = Vec::with_capacity(est.len() * n_topics);
        for e in est {
            for &p in &e.clamped {
                mismatch_cost.push(-mismatch_expectation(p, config).ln());
                match_cost.push(-match_expectation(p, config).ln());
            }
        }
        Self {
            taxonomy_size: n_topics,
            mismatch_cost,
            match_cost,
        }
    }

    pub fn epochs(&self) -> usize {
        self.match_cost.len() / self.taxonomy_size
    }

    #[inline]
    pub fn score(&self, o: &[Topic], w: &[Topic]) -> f64 {
        let mut total = 0.0;
        for (s, (&os, &ws)) in o.iter().zip(w).enumerate() {
            let idx = s * self.taxonomy_size + os as usize;
            total += if ws == os {
                self.match_cost[idx]
            } else {
                self.mismatch_cost[idx]
            };
        }
        total
    }
}

fn check_sequences(site1: &SiteObservations, o: &[Topic]) -> Result<()> {
    if site1.n() == 0 {
        return Err(ReidError::invalid("no candidate users"));
    }
    if o.len() != site1.epochs() {
        return Err(ReidError::invalid(format!(
            "observed sequence has {} epochs, site-1 sequences have {}",
            o.len(),
            site1.epochs()
        )));
    }
    Ok(())
}

/// User whose site-1 sequence is closest to `o` in Hamming distance (lowest
/// index on ties).
pub fn hamming_attack(site1: &SiteObservations, o: &[Topic]) -> Result<usize> {
    check_sequences(site1, o)?;
    let mut best = 0;
    let mut best_dist = usize::MAX;
    for i in 0..site1.n() {
        let d = site1.sequence(i).iter().zip(o).filter(|(a, b)| a != b).count();
        if d < best_dist {
            best = i;
            best_dist = d;
            if d == 0 {
                break;
            }
        }
    }
    Ok(best)
}

/// User minimizing the weighted score (lowest index on ties).
pub fn weighted_hamming_attack(site1: &SiteObservations, o: &[Topic], model: &WeightedHamming) -> Result<usize> {
    check_sequences(site1, o)?;
    if model.epochs() < o.len() {
        return Err(ReidError::invalid(
            "weighted model covers fewer epochs than the sequence",
        ));
    }
    let mut best = 0;
    let mut best_score = f64::INFINITY;
    for i in 0..site1.n() {
        let s = model.score(o, site1.sequence(i));
        let margin = if best_score.is_finite() {
            SCORE_TIE_TOLERANCE * best_score.abs()
        } else {
            0.0
        };
        if s < best_score - margin {
            best = i;
            best_score = s;
        }
    }
    Ok(best)
}

/// Square score matrix: `score(j, i)` is the cost of explaining observation
/// `j` by candidate user `i` (lower is better).
#[derive(Clone, Debug, PartialEq)]
pub struct AttackScoreMatrix {
    rows: usize,
    cols: usize,
    scores: Vec<f64>,
    pub kind: AttackKind,
}

impl AttackScoreMatrix {
    pub fn new(rows: usize, cols: usize, scores: Vec<f64>, kind: AttackKind) -> Result<Self> {
        if scores.len() != rows * cols {
            return Err(ReidError::invalid("score buffer does not match its shape"));
        }
        if scores.iter().any(|s| s.is_nan()) {
            return Err(ReidError::invalid("scores must not be NaN"));
        }
        Ok(Self {
            rows,
            cols,
            scores,
            kind,
        })
    }

    /// `-ln P[i, o_j]` for each observation `o_j` and user `i`.
    pub fn from_likelihood(p: &RepresentationMatrix, observations: &[usize]) -> Result<Self> {
        let n = p.n();
        let mut scores = Vec::with_capacity(observations.len() * n);
        for &o in observations {
            if o >= p.m() {
                return Err(ReidError::IndexOutOfRange { index: o, limit: p.m() });
            }
            scores.extend((0..n).map(|i| -p.get(i, o).ln()));
        }
        Self::new(observations.len(), n, scores, AttackKind::Likelihood)
    }

    /// Weighted-attack scores of every site-2 sequence against every site-1
    /// sequence.
    pub fn from_weighted(site2: &SiteObservations, site1: &SiteObservations, model: &WeightedHamming) -> Result<Self> {
        let mut scores = Vec::with_capacity(site2.n() * site1.n());
        for j in 0..site2.n() {
            let o = site2.sequence(j);
            scores.extend((0..site1.n()).map(|i| model.score(o, site1.sequence(i))));
        }
        Self::new(site2.n(), site1.n(), scores, AttackKind::Weighted)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.scores[row * self.cols + col]
    }
}

/// Minimum-total-score one-to-one assignment of observations (rows) to users
/// (columns). Rows are visited in a random order drawn from `stream`, which
/// randomizes the choice among equal-cost optima.
pub fn matching_assignment(scores: &AttackScoreMatrix, stream: &mut Stream) -> Result<Vec<usize>> {
    let (rows, cols) = scores.shape();
    if rows != cols {
        return Err(ReidError::ShapeMismatch {
            expected: (rows, rows),
            actual: (rows, cols),
        });
    }
    let n = rows;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(stream);
    let mut permuted = Vec::with_capacity(n * n);
    for &r in &order {
        permuted.extend((0..n).map(|c| scores.get(r, c)));
    }
    let solved = min_cost_assignment(&finite_costs(&permuted, n), n);
    let mut assignment = vec![0; n];
    for (pos, &r) in order.iter().enumerate() {
        assignment[r] = solved[pos];
    }
    Ok(assignment)
}

/// Full-information matching rule: optimal assignment on `-ln P[i, o_j]`.
#[derive(Clone, Debug)]
pub struct AssignmentRule {
    matrix: RepresentationMatrix,
}

impl AssignmentRule {
    pub fn new(matrix: RepresentationMatrix) -> Self {
        Self { matrix }
    }
}

impl MatchingRule for AssignmentRule {
    fn predict(&self, observations: &[usize], stream: &mut Stream) -> Vec<usize> {
        let scores = AttackScoreMatrix::from_likelihood(&self.matrix, observations)
            .expect("observations come from the same matrix");
        matching_assignment(&scores, stream).expect("likelihood scores are square")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Purpose, SeedSpec, StreamLabel};

    fn cfg(n: usize, k: usize, p: f64, r: usize) -> TopicsConfig {
        TopicsConfig::new(n, k, p, r).unwrap()
    }

    fn site(seqs: &[&[Topic]]) -> SiteObservations {
        SiteObservations::from_sequences(&seqs.iter().map(|s| s.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn hamming_examples() {
        let w = site(&[&[1, 2, 3], &[1, 9, 9], &[4, 4, 4], &[7, 8, 9]]);
        assert_eq!(hamming_attack(&w, &[7, 8, 9]).unwrap(), 3);
        let eq = site(&[&[1, 2], &[3, 4], &[5, 6]]);
        assert_eq!(hamming_attack(&eq, &[0, 0]).unwrap(), 0);
        assert!(hamming_attack(&w, &[1]).is_err());
    }

    #[test]
    fn estimator_extremes() {
        let c = cfg(10, 2, 0.1, 1);
        let gap = c.q_in() - c.q_out();
        let e = estimate_popularity(&[3; 50], &c, 0.01).unwrap();
        assert!((e.raw[3] - (1.0 - c.q_out()) / gap).abs() < 1e-12);
        assert!((e.raw[0] + c.q_out() / gap).abs() < 1e-12);
        assert!(e.raw[0] < 0.0);
        assert_eq!(e.clamped[0], POPULARITY_FLOOR);
        assert_eq!(e.clamped[3], 1.0);
        let expected_radius = ((20.0f64 / 0.01).ln() / 100.0).sqrt() / gap;
        assert!((e.radius - expected_radius).abs() < 1e-12);

        let flat = cfg(10, 2, 1.0, 1);
        assert!(estimate_popularity(&[1, 2], &flat, 0.01).is_err());
        assert!(estimate_popularity(&[], &c, 0.01).is_err());
        assert!(estimate_popularity(&[10], &c, 0.01).is_err());
    }

    #[test]
    fn alpha_values() {
        assert_eq!(alpha_from_p(0.0, 5), 0.0);
        assert_eq!(alpha_from_p(1.0, 5), 1.0);
        assert!((alpha_from_p(0.5, 5) - 4.0 / 9.0).abs() < 1e-15);
        assert_eq!(alpha_from_p(0.3, 1), 0.0);
        assert!((alpha_from_p(0.3, 2) - 0.3 / 1.7).abs() < 1e-15);
    }

    #[test]
    fn certain_match_costs_log_q_in() {
        let c = cfg(30, 5, 0.05, 1);
        let est = vec![PopularityEstimate::exact({
            let mut v = vec![4.0 / 29.0; 30];
            v[7] = 1.0;
            v
        })];
        let s = weighted_hamming_score(&[7], &[7], &est, &c);
        assert!((s + c.q_in().ln()).abs() < 1e-12);

        let mut zero = vec![5.0 / 29.0; 30];
        zero[2] = 0.0;
        let est = vec![PopularityEstimate::exact(zero)];
        let s = weighted_hamming_score(&[2], &[3], &est, &c);
        assert!((s + c.q_out().ln()).abs() < 1e-3);
    }

    #[test]
    fn table_matches_direct_score() {
        let c = cfg(12, 3, 0.2, 3);
        let est: Vec<PopularityEstimate> = (0..3)
            .map(|s| PopularityEstimate::exact((0..12).map(|t| ((t + s) % 12) as f64 / 22.0).collect()))
            .collect();
        let model = WeightedHamming::new(&est, &c);
        for (o, w) in [([1, 2, 3], [1, 5, 3]), ([0, 0, 0], [1, 1, 1]), ([4, 5, 6], [4, 5, 6])] {
            let direct = weighted_hamming_score(&o, &w, &est, &c);
            assert!((model.score(&o, &w) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_popularity_collapses_to_hamming() {
        let c = cfg(20, 5, 0.05, 4);
        let est = vec![PopularityEstimate::exact(vec![0.25; 20]); 4];
        let model = WeightedHamming::new(&est, &c);
        let w = site(&[&[1, 2, 3, 4], &[1, 2, 9, 9], &[0, 2, 3, 4], &[5, 5, 5, 5]]);
        for o in [[1, 2, 3, 0], [5, 5, 3, 4], [9, 9, 9, 9], [0, 2, 9, 9]] {
            assert_eq!(
                hamming_attack(&w, &o).unwrap(),
                weighted_hamming_attack(&w, &o, &model).unwrap()
            );
        }
    }

    #[test]
    fn rare_match_beats_common_match() {
        // Users A and B each match o in one epoch; A on a rare topic, B on a
        // common one. User C matches nothing.
        let c = cfg(50, 5, 0.05, 2);
        let mut p = vec![0.05; 50];
        p[10] = 0.01;
        p[20] = 0.9;
        let est = vec![PopularityEstimate::exact(p); 2];
        let model = WeightedHamming::new(&est, &c);
        let o = [10, 20];
        let w = site(&[&[1, 20], &[10, 2], &[3, 4]]);
        let rare_gain = -match_expectation(0.01, &c).ln() + mismatch_expectation(0.01, &c).ln();
        let common_gain = -match_expectation(0.9, &c).ln() + mismatch_expectation(0.9, &c).ln();
        assert!(rare_gain < common_gain);
        assert_eq!(weighted_hamming_attack(&w, &o, &model).unwrap(), 1);
        // Unweighted Hamming sees a tie and takes the lower index.
        assert_eq!(hamming_attack(&w, &o).unwrap(), 0);
    }

    #[test]
    fn assignment_examples() {
        let mut s = SeedSpec::new(1).stream(StreamLabel::new(Purpose::TieBreak));
        let n = 4;
        let scores: Vec<f64> = (0..n * n).map(|k| if k / n == k % n { 0.0 } else { 2.0 }).collect();
        let m = AttackScoreMatrix::new(n, n, scores, AttackKind::Weighted).unwrap();
        assert_eq!(matching_assignment(&m, &mut s).unwrap(), vec![0, 1, 2, 3]);
        let rect = AttackScoreMatrix::new(2, 3, vec![0.0; 6], AttackKind::Weighted).unwrap();
        assert!(matching_assignment(&rect, &mut s).is_err());
    }

    #[test]
    fn equal_scores_give_uniform_permutations() {
        let seeds = SeedSpec::new(77);
        let m = AttackScoreMatrix::new(3, 3, vec![1.0; 9], AttackKind::Weighted).unwrap();
        let trials = 60_000u64;
        let mut counts = std::collections::HashMap::new();
        for t in 0..trials {
            let mut s = seeds.stream(StreamLabel::new(Purpose::TieBreak).trial(t));
            *counts.entry(matching_assignment(&m, &mut s).unwrap()).or_insert(0u64) += 1;
        }
        assert_eq!(counts.len(), 6);
        let p = 1.0 / 6.0;
        let sigma = (trials as f64 * p * (1.0 - p)).sqrt();
        for (&_, &c) in &counts {
            assert!((c as f64 - trials as f64 * p).abs() < 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn attack_kind_parses() {
        assert_eq!("weighted".parse::<AttackKind>().unwrap(), AttackKind::Weighted);
        assert!("neural".parse::<AttackKind>().is_err());
        assert_eq!(AttackKind::Assignment.to_string(), "assignment");
    }
}
