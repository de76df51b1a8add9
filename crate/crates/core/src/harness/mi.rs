//! Plug-in mutual information between paired per-epoch topics.

use std::collections::HashMap;
use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::error::{ReidError, Result};
use crate::rng::SeedSpec;
use crate::topics::{generate_population, observe_site, Topic, SITE_1, SITE_2};

use super::experiment::SimulationConfig;

/// Estimate for one pair of samples `(A, B)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMi {
    /// Epochs of `A` and `B`.
    pub epoch_a: usize,
    pub epoch_b: usize,
    /// Miller-Madow corrected estimate, bits. Can dip slightly below zero.
    pub mi_bits: f64,
    /// Uncorrected plug-in estimate, bits.
    pub plug_in_bits: f64,
    /// Miller-Madow corrected marginal entropies, bits.
    pub entropy_a_bits: f64,
    pub entropy_b_bits: f64,
    pub samples: usize,
    /// Tolerance around zero for independent samples: the plug-in bias
    /// `(K_A - 1)(K_B - 1) / (2N ln 2)` plus three standard deviations of
    /// its chi-square fluctuation.
    pub bias_slack: f64,
}

impl EpochMi {
    pub fn consistent_with_independence(&self) -> bool {
        self.mi_bits.abs() <= self.bias_slack
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MiReport {
    pub epochs: Vec<EpochMi>,
    pub total_bits: f64,
}

fn plug_in_entropy<K: std::hash::Hash + Eq>(counts: &HashMap<K, usize>, n: f64) -> f64 {
    counts
        .values()
        .map(|&c| {
            let q = c as f64 / n;
            -q * q.ln()
        })
        .sum()
}

fn count<K: std::hash::Hash + Eq>(keys: impl Iterator<Item = K>) -> HashMap<K, usize> {
    let mut m = HashMap::new();
    for k in keys {
        *m.entry(k).or_insert(0) += 1;
    }
    m
}

/// MI between `a[j]` and `b[j]` over paired samples `j`.
pub fn epoch_mutual_information(a: &[Topic], b: &[Topic]) -> Result<EpochMi> {
    if a.is_empty() {
        return Err(ReidError::invalid("need at least one sample pair"));
    }
    if a.len() != b.len() {
        return Err(ReidError::invalid(format!(
            "paired samples differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len() as f64;
    let ca = count(a.iter().copied());
    let cb = count(b.iter().copied());
    let cab = count(a.iter().copied().zip(b.iter().copied()));
    let (ha, hb, hab) = (
        plug_in_entropy(&ca, n),
        plug_in_entropy(&cb, n),
        plug_in_entropy(&cab, n),
    );
    let mm = |k: usize| (k as f64 - 1.0) / (2.0 * n);
    let (ka, kb, kab) = (ca.len(), cb.len(), cab.len());
    let plug_in = (ha + hb - hab).max(0.0);
    let corrected = (ha + mm(ka)) + (hb + mm(kb)) - (hab + mm(kab));
    let df = ((ka - 1) * (kb - 1)) as f64;
    Ok(EpochMi {
        epoch_a: 0,
        epoch_b: 0,
        mi_bits: corrected / LN_2,
        plug_in_bits: plug_in / LN_2,
        entropy_a_bits: (ha + mm(ka)) / LN_2,
        entropy_b_bits: (hb + mm(kb)) / LN_2,
        samples: a.len(),
        bias_slack: (df + 3.0 * (2.0 * df).sqrt()) / (2.0 * n * LN_2),
    })
}

/// Per-epoch estimates for `(A^s, B^s)` pairs and their sum.
pub fn plug_in_mutual_information(pairs: &[(Vec<Topic>, Vec<Topic>)]) -> Result<MiReport> {
    if pairs.is_empty() {
        return Err(ReidError::invalid("need at least one epoch"));
    }
    let epochs = pairs
        .iter()
        .enumerate()
        .map(|(s, (a, b))| {
            let mut e = epoch_mutual_information(a, b)?;
            e.epoch_a = s;
            e.epoch_b = s;
            Ok(e)
        })
        .collect::<Result<Vec<_>>>()?;
    let total_bits = epochs.iter().map(|e| e.mi_bits).sum();
    Ok(MiReport { epochs, total_bits })
}

/// Same-epoch and cross-epoch MI between two sites' answers for the same
/// users of a simulated population.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MiValidation {
    /// `I(A^s; B^s)`.
    pub within: MiReport,
    /// `I(A^s; B^{s+1})`.
    pub cross: Vec<EpochMi>,
    pub master_seed: u64,
}

impl MiValidation {
    pub fn cross_epoch_independent(&self) -> bool {
        self.cross.iter().all(EpochMi::consistent_with_independence)
    }

    /// Largest relative deviation of a within-epoch estimate from their mean.
    pub fn within_spread(&self) -> f64 {
        let v: Vec<f64> = self.within.epochs.iter().map(|e| e.mi_bits).collect();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - mean).abs() / mean.abs()).fold(0.0, f64::max)
    }
}

pub fn topics_mi_validation(config: &SimulationConfig) -> Result<MiValidation> {
    config.validate()?;
    let seeds = SeedSpec::new(config.seed);
    let table = generate_population(config.users, &config.topics, &config.population, &seeds)?;
    let a = observe_site(&table, &config.topics, &seeds, SITE_1);
    let b = observe_site(&table, &config.topics, &seeds, SITE_2);
    let r = table.epochs();
    let within = plug_in_mutual_information(&(0..r).map(|s| (a.epoch(s), b.epoch(s))).collect::<Vec<_>>())?;
    let cross = (0..r.saturating_sub(1))
        .map(|s| {
            let mut e = epoch_mutual_information(&a.epoch(s), &b.epoch(s + 1))?;
            e.epoch_a = s;
            e.epoch_b = s + 1;
            Ok(e)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MiValidation {
        within,
        cross,
        master_seed: config.seed,
    })
}
