//! Monte Carlo re-identification experiments.
//!
//! All randomness is drawn from per-trial labelled streams and results are
//! reduced with integer sums, so a report depends only on its inputs and
//! master seed, never on the thread count.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attacks::{
    estimate_site_popularity, hamming_attack, matching_assignment, weighted_hamming_attack, AttackKind,
    AttackScoreMatrix, PopularityEstimate, WeightedHamming,
};
use crate::bounds::MatchingRule;
use crate::error::{ReidError, Result};
use crate::model::{sample_row, PredictionMatrix, RepresentationMatrix};
use crate::rng::{Purpose, SeedSpec, StreamLabel};
use crate::topics::{
    generate_population, get_topic, observe_site, PopulationModel, SiteObservations, TopSetTable, Topic, TopicsConfig,
    SITE_1, SITE_2,
};

use super::report::ExperimentReport;

fn default_users() -> usize {
    10_000
}

fn default_trials() -> u64 {
    10_000
}

fn default_delta() -> f64 {
    0.01
}

fn default_true() -> bool {
    true
}

/// Full description of a Topics experiment, as read from `--config`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    #[serde(flatten)]
    pub topics: TopicsConfig,
    #[serde(default)]
    pub population: PopulationModel,
    #[serde(default = "default_users")]
    pub users: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: u64,
    /// Confidence parameter of the popularity estimate.
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Pool all observed epochs into one popularity estimate.
    #[serde(default = "default_true")]
    pub pooled_popularity: bool,
}

impl SimulationConfig {
    pub fn new(topics: TopicsConfig, population: PopulationModel, users: usize, seed: u64) -> Self {
        Self {
            topics,
            population,
            users,
            seed,
            trials: default_trials(),
            delta: default_delta(),
            pooled_popularity: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.topics.validate()?;
        if self.users == 0 {
            return Err(ReidError::invalid("users must be at least 1"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(ReidError::invalid("delta must be in (0, 1)"));
        }
        Ok(())
    }
}

/// A population and its site-1 database, shared by every trial.
#[derive(Clone, Debug)]
pub struct TopicsExperiment {
    config: SimulationConfig,
    seeds: SeedSpec,
    table: TopSetTable,
    site1: SiteObservations,
}

impl TopicsExperiment {
    pub fn prepare(config: &SimulationConfig) -> Result<Self> {
        config.validate()?;
        let seeds = SeedSpec::new(config.seed);
        let table = generate_population(config.users, &config.topics, &config.population, &seeds)?;
        let site1 = observe_site(&table, &config.topics, &seeds, SITE_1);
        Ok(Self {
            config: config.clone(),
            seeds,
            table,
            site1,
        })
    }

    pub fn config(&self) -> &SimulationConfig {
        &self.config
    }

    pub fn table(&self) -> &TopSetTable {
        &self.table
    }

    pub fn site1(&self) -> &SiteObservations {
        &self.site1
    }

    /// The user drawn in `trial`.
    pub fn trial_user(&self, trial: u64) -> usize {
        let mut s = self.seeds.stream(StreamLabel::new(Purpose::TrialUser).trial(trial));
        s.gen_range(0..self.table.n())
    }

    /// Fresh site-2 answers for `user` in `trial`: each trial is a new visit,
    /// modelled as its own site id.
    pub fn site2_sequence(&self, user: usize, trial: u64, epochs: usize) -> Vec<Topic> {
        let site = SITE_2 + trial;
        (0..epochs)
            .map(|s| get_topic(user, site, s, &self.table, &self.config.topics, &self.seeds))
            .collect()
    }

    /// Popularity estimates available to an attacker that sees `epochs`
    /// epochs of site 1.
    pub fn estimates(&self, epochs: usize) -> Result<Vec<PopularityEstimate>> {
        let site1 = self.site1.truncated(epochs);
        estimate_site_popularity(
            &site1,
            &self.config.topics,
            self.config.delta,
            self.config.pooled_popularity,
        )
    }

    fn check_epochs(&self, epochs: usize) -> Result<()> {
        if epochs == 0 || epochs > self.table.epochs() {
            return Err(ReidError::invalid(format!(
                "epochs must be in [1, {}], got {epochs}",
                self.table.epochs()
            )));
        }
        Ok(())
    }

    /// Random-user experiment over the first `epochs` epochs.
    pub fn run_random_user(&self, method: AttackKind, epochs: usize, trials: u64) -> Result<ExperimentReport> {
        self.check_epochs(epochs)?;
        let site1 = self.site1.truncated(epochs);
        let weighted = match method {
            AttackKind::Hamming => None,
            AttackKind::Weighted => Some(WeightedHamming::new(&self.estimates(epochs)?, &self.config.topics)),
            other => {
                return Err(ReidError::invalid(format!(
                    "{other} is not a random-user attack on topic sequences"
                )))
            }
        };
        let successes = (0..trials)
            .into_par_iter()
            .map(|t| -> Result<u64> {
                let user = self.trial_user(t);
                let o = self.site2_sequence(user, t, epochs);
                let guess = match &weighted {
                    None => hamming_attack(&site1, &o)?,
                    Some(model) => weighted_hamming_attack(&site1, &o, model)?,
                };
                Ok(u64::from(guess == user))
            })
            .try_reduce(|| 0, |a, b| Ok(a + b))?;
        Ok(
            ExperimentReport::random_user(method.to_string(), trials, successes, self.config.seed)
                .with_epochs(epochs)
                .with_config(&self.config),
        )
    }

    /// Matching experiment: every trial shuffles all users, draws fresh
    /// site-2 sequences, and predicts an identity for each of them.
    /// `Hamming` and `Weighted` are applied coordinate-wise; `Assignment`
    /// solves the optimal one-to-one assignment on weighted scores.
    pub fn run_matching(&self, method: AttackKind, epochs: usize, trials: u64) -> Result<ExperimentReport> {
        self.check_epochs(epochs)?;
        let site1 = self.site1.truncated(epochs);
        let model = WeightedHamming::new(&self.estimates(epochs)?, &self.config.topics);
        let n = self.table.n();
        let (sum, sum_sq) = (0..trials)
            .into_par_iter()
            .map(|t| -> Result<(u64, u64)> {
                let mut perm_stream = self.seeds.stream(StreamLabel::new(Purpose::Permutation).trial(t));
                let mut perm: Vec<usize> = (0..n).collect();
                perm.shuffle(&mut perm_stream);
                let seqs: Vec<Vec<Topic>> = perm.iter().map(|&u| self.site2_sequence(u, t, epochs)).collect();
                let guesses: Vec<usize> = match method {
                    AttackKind::Hamming => seqs.iter().map(|o| hamming_attack(&site1, o)).collect::<Result<_>>()?,
                    AttackKind::Weighted => seqs
                        .iter()
                        .map(|o| weighted_hamming_attack(&site1, o, &model))
                        .collect::<Result<_>>()?,
                    AttackKind::Assignment => {
                        let site2 = SiteObservations::from_sequences(&seqs)?;
                        let scores = AttackScoreMatrix::from_weighted(&site2, &site1, &model)?;
                        let mut tie = self.seeds.stream(StreamLabel::new(Purpose::TieBreak).trial(t));
                        matching_assignment(&scores, &mut tie)?
                    }
                    AttackKind::Likelihood => {
                        return Err(ReidError::invalid("likelihood matching needs an explicit matrix"))
                    }
                };
                let correct = guesses.iter().zip(&perm).filter(|(g, u)| g == u).count() as u64;
                Ok((correct, correct * correct))
            })
            .try_reduce(|| (0, 0), |a, b| Ok((a.0 + b.0, a.1 + b.1)))?;
        Ok(
            ExperimentReport::matching(method.to_string(), trials, n as u64, sum, sum_sq, self.config.seed)
                .with_epochs(epochs)
                .with_config(&self.config),
        )
    }

    /// Random-user reports for every `(epochs, method)` pair. Trials are
    /// paired: the same users and site-2 answers are used throughout.
    pub fn accuracy_curve(
        &self,
        methods: &[AttackKind],
        epochs: &[usize],
        trials: u64,
    ) -> Result<Vec<ExperimentReport>> {
        let mut out = Vec::new();
        for &r in epochs {
            for &m in methods {
                out.push(self.run_random_user(m, r, trials)?);
            }
        }
        Ok(out)
    }
}

/// Random-user experiment on an explicit matrix with rule `A`.
pub fn run_matrix_random_user(
    p: &RepresentationMatrix,
    a: &PredictionMatrix,
    trials: u64,
    seeds: &SeedSpec,
) -> Result<ExperimentReport> {
    if p.shape() != a.shape() {
        return Err(ReidError::ShapeMismatch {
            expected: p.shape(),
            actual: a.shape(),
        });
    }
    let successes: u64 = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut s = seeds.stream(StreamLabel::new(Purpose::TrialUser).trial(t));
            let user = s.gen_range(0..p.n());
            let o = sample_row(p.row(user), &mut s);
            u64::from(a.predict(o, &mut s) == user)
        })
        .sum();
    Ok(
        ExperimentReport::random_user("matrix_rule", trials, successes, seeds.master_seed)
            .with_config(&serde_json::json!({ "n": p.n(), "m": p.m() })),
    )
}

/// Matching experiment on an explicit matrix: per trial, draw a uniform
/// permutation `pi`, observations `O_i ~ P[pi(i), :]`, and score the rule's
/// predictions against `pi`.
pub fn run_matching_experiment<R: MatchingRule + Sync + ?Sized>(
    p: &RepresentationMatrix,
    rule: &R,
    method: &str,
    trials: u64,
    seeds: &SeedSpec,
) -> Result<ExperimentReport> {
    let n = p.n();
    let (sum, sum_sq) = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut s = seeds.stream(StreamLabel::new(Purpose::Permutation).trial(t));
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut s);
            let obs: Vec<usize> = perm.iter().map(|&u| sample_row(p.row(u), &mut s)).collect();
            let mut rule_stream = seeds.stream(StreamLabel::new(Purpose::Prediction).trial(t));
            let guesses = rule.predict(&obs, &mut rule_stream);
            let correct = guesses.iter().zip(&perm).filter(|(g, u)| g == u).count() as u64;
            (correct, correct * correct)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    Ok(
        ExperimentReport::matching(method, trials, n as u64, sum, sum_sq, seeds.master_seed)
            .with_config(&serde_json::json!({ "n": n, "m": p.m() })),
    )
}

/// Runs `f` and stores its wall time in the report.
pub fn timed<F>(f: F) -> Result<ExperimentReport>
where
    F: FnOnce() -> Result<ExperimentReport>,
{
    let start = Instant::now();
    let mut rep = f()?;
    rep.wall_time_ms = Some(start.elapsed().as_secs_f64() * 1e3);
    Ok(rep)
}
