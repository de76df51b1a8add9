//! Closed-form attacker accuracies, upper bounds, and privacy-notion checks.
//!
//! Argmax ties always resolve to the lowest user index. Bounds that can
//! exceed 1 are returned raw; [`BoundReport`] carries both the raw and the
//! clamped value.

use serde::{Deserialize, Serialize};

use crate::error::{ReidError, Result};
use crate::model::{posterior_matrix, FinitePrior, ObservationVector, PredictionMatrix, RepresentationMatrix};
use crate::rng::Stream;

/// Entries within this of 0 or 1 count as exactly 0 or 1 for one-hot checks.
pub const ONE_HOT_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    Exact,
    UpperBound,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    /// `raw` clamped to `[0, 1]`.
    pub value: f64,
    pub raw: f64,
    pub kind: BoundKind,
    pub source: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl BoundReport {
    pub fn new(raw: f64, kind: BoundKind, source: impl Into<String>) -> Self {
        Self {
            value: raw.clamp(0.0, 1.0),
            raw,
            kind,
            source: source.into(),
            note: None,
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LdpParams {
    pub epsilon: f64,
    pub delta: f64,
}

impl LdpParams {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if epsilon.is_nan() || epsilon < 0.0 || !(0.0..=1.0).contains(&delta) {
            return Err(ReidError::invalid(format!(
                "LDP parameters need epsilon >= 0 and delta in [0, 1], got ({epsilon}, {delta})"
            )));
        }
        Ok(Self { epsilon, delta })
    }
}

/// Random-user accuracy of rule `A` against `P`: `(1/n) tr(P A^T)`.
pub fn exact_random_user_accuracy(p: &RepresentationMatrix, a: &PredictionMatrix) -> Result<f64> {
    if p.shape() != a.shape() {
        return Err(ReidError::ShapeMismatch {
            expected: p.shape(),
            actual: a.shape(),
        });
    }
    let (n, m) = p.shape();
    let mut total = 0.0;
    for i in 0..n {
        for o in 0..m {
            total += p.get(i, o) * a.get(i, o);
        }
    }
    Ok(total / n as f64)
}

/// `||P||_{inf,1}`: sum over columns of the column maximum.
pub fn inf_one_norm(p: &RepresentationMatrix) -> f64 {
    (0..p.m()).map(|o| p.column(o).fold(0.0, f64::max)).sum()
}

/// `(1/n) ||P||_{inf,1}`, the best random-user accuracy of any rule, which
/// is also the Bayes vulnerability of `P` under a uniform prior on users.
pub fn max_accuracy_bound(p: &RepresentationMatrix) -> f64 {
    inf_one_norm(p) / p.n() as f64
}

/// Maps each observation to the lowest-index user maximizing its column.
pub fn optimal_full_info_rule(p: &RepresentationMatrix) -> PredictionMatrix {
    let assignment: Vec<usize> = (0..p.m()).map(|o| column_argmax(p, o)).collect();
    PredictionMatrix::deterministic(p.n(), &assignment).expect("argmax indices are in range by construction")
}

fn column_argmax(p: &RepresentationMatrix, o: usize) -> usize {
    let mut best = 0;
    let mut best_val = p.get(0, o);
    for i in 1..p.n() {
        let v = p.get(i, o);
        if v > best_val {
            best = i;
            best_val = v;
        }
    }
    best
}

/// Best achievable expected accuracy given partial information `W`:
/// `(1/n) ||E[P | W]||_{inf,1}`.
pub fn partial_info_bound(prior: &FinitePrior, w: &ObservationVector) -> Result<f64> {
    Ok(max_accuracy_bound(&posterior_matrix(prior, w)?))
}

/// Matching-setting bound: expected number of distinct observed
/// representations divided by `n`,
/// `m/n - (1/n) sum_o prod_i (1 - P[i, o])`. Returned raw.
pub fn matching_accuracy_bound(p: &RepresentationMatrix) -> f64 {
    let n = p.n() as f64;
    let expected_distinct: f64 = (0..p.m())
        .map(|o| 1.0 - p.column(o).map(|v| 1.0 - v).product::<f64>())
        .sum();
    expected_distinct / n
}

/// A rule that sees all `n` shuffled observations and predicts an identity
/// for each of them.
pub trait MatchingRule {
    fn predict(&self, observations: &[usize], stream: &mut Stream) -> Vec<usize>;
}

/// A random-user rule applied independently to every coordinate.
#[derive(Clone, Debug)]
pub struct LiftedRule {
    rule: PredictionMatrix,
}

impl LiftedRule {
    pub fn inner(&self) -> &PredictionMatrix {
        &self.rule
    }
}

impl MatchingRule for LiftedRule {
    fn predict(&self, observations: &[usize], stream: &mut Stream) -> Vec<usize> {
        observations.iter().map(|&o| self.rule.predict(o, stream)).collect()
    }
}

/// Lifts `A` to the matching setting; its matching accuracy equals the
/// random-user accuracy of `A`.
pub fn lift_random_user_rule(a: &PredictionMatrix) -> LiftedRule {
    LiftedRule { rule: a.clone() }
}

/// Smallest `delta` for which `P` is `(epsilon, delta)`-LDP.
///
/// For an ordered pair `(i, j)` the worst event `E` is the set of columns
/// where `P[i, o] > e^eps P[j, o]`, so the minimal delta is the largest
/// positive excess over all ordered pairs.
pub fn check_ldp(p: &RepresentationMatrix, epsilon: f64) -> Result<f64> {
    if epsilon.is_nan() || epsilon < 0.0 {
        return Err(ReidError::invalid(format!(
            "epsilon must be nonnegative, got {epsilon}"
        )));
    }
    let scale = epsilon.exp();
    let n = p.n();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let ri = p.row(i);
        for j in 0..n {
            if i == j {
                continue;
            }
            let rj = p.row(j);
            let excess: f64 = ri.iter().zip(rj).map(|(&a, &b)| (a - scale * b).max(0.0)).sum();
            worst = worst.max(excess);
        }
    }
    Ok(worst.min(1.0))
}

/// `(e^eps + min(n, m) delta) / n`, returned raw (may exceed 1).
pub fn ldp_accuracy_bound(params: LdpParams, n: usize, m: usize) -> Result<f64> {
    if n == 0 || m == 0 {
        return Err(ReidError::invalid("n and m must be positive"));
    }
    Ok((params.epsilon.exp() + n.min(m) as f64 * params.delta) / n as f64)
}

/// Largest `k` for which `P` is k-anonymous, or 0 when some row is not
/// one-hot.
pub fn check_k_anonymity(p: &RepresentationMatrix) -> usize {
    let mut counts = vec![0usize; p.m()];
    for row in p.rows() {
        let mut hot = None;
        for (o, &v) in row.iter().enumerate() {
            if (v - 1.0).abs() <= ONE_HOT_TOLERANCE {
                if hot.is_some() {
                    return 0;
                }
                hot = Some(o);
            } else if v.abs() > ONE_HOT_TOLERANCE {
                return 0;
            }
        }
        match hot {
            Some(o) => counts[o] += 1,
            None => return 0,
        }
    }
    counts.into_iter().filter(|&c| c > 0).min().unwrap_or(0)
}

pub fn kanon_accuracy_bound(k: usize) -> Result<f64> {
    if k == 0 {
        return Err(ReidError::invalid("k must be at least 1"));
    }
    Ok(1.0 / k as f64)
}

/// Fano-style bound `(1 + MI) / ln(n)` with MI in nats.
pub fn fano_bound(mi_nats: f64, n: f64) -> Result<f64> {
    if n.is_nan() || n < 2.0 {
        return Err(ReidError::invalid(format!("Fano bound needs n >= 2, got {n}")));
    }
    if mi_nats.is_nan() || mi_nats < 0.0 {
        return Err(ReidError::invalid(format!(
            "mutual information must be nonnegative, got {mi_nats}"
        )));
    }
    Ok((1.0 + mi_nats) / n.ln())
}

/// `n x 2` matrix whose rows slide linearly from `(1, 0)` to `(0, 1)`:
/// neither LDP (below delta = 1) nor k-anonymous, yet its best attacker is
/// limited to `2/n`.
pub fn construct_ldp_kanon_counterexample(n: usize) -> Result<RepresentationMatrix> {
    if n < 2 {
        return Err(ReidError::invalid("counterexample needs n >= 2"));
    }
    let denom = (n - 1) as f64;
    let rows = (0..n)
        .map(|i| {
            let second = i as f64 / denom;
            vec![1.0 - second, second]
        })
        .collect();
    RepresentationMatrix::from_rows(rows)
}

/// `n/2` disjoint copies of the two-user instance
/// `[[1/2, 0, 1/2], [0, 1/2, 1/2]]`. Columns `0..n` are the private
/// representations `u_i`, columns `n..3n/2` the shared ones `a_j`.
pub fn construct_matching_gap_instance(n: usize) -> Result<RepresentationMatrix> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(ReidError::invalid(format!(
            "gap instance needs an even n >= 2, got {n}"
        )));
    }
    let m = 3 * n / 2;
    let rows = (0..n)
        .map(|i| {
            let mut row = vec![0.0; m];
            row[i] = 0.5;
            row[n + i / 2] = 0.5;
            row
        })
        .collect();
    RepresentationMatrix::from_rows(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(rows: &[&[f64]]) -> RepresentationMatrix {
        RepresentationMatrix::from_rows(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    fn two_user() -> RepresentationMatrix {
        p(&[&[0.5, 0.0, 0.5], &[0.0, 0.5, 0.5]])
    }

    #[test]
    fn exact_accuracy_examples() {
        let id = RepresentationMatrix::identity(4).unwrap();
        let a = PredictionMatrix::deterministic(4, &[0, 1, 2, 3]).unwrap();
        assert_eq!(exact_random_user_accuracy(&id, &a).unwrap(), 1.0);

        let q = p(&[&[0.2, 0.3, 0.5], &[0.6, 0.4, 0.0], &[0.1, 0.1, 0.8]]);
        let u = PredictionMatrix::uniform(3, 3).unwrap();
        assert!((exact_random_user_accuracy(&q, &u).unwrap() - 1.0 / 3.0).abs() < 1e-15);

        let argmax = PredictionMatrix::deterministic(2, &[0, 1, 0]).unwrap();
        assert!((exact_random_user_accuracy(&two_user(), &argmax).unwrap() - 0.75).abs() < 1e-15);

        let wrong = PredictionMatrix::uniform(2, 2).unwrap();
        assert!(matches!(
            exact_random_user_accuracy(&two_user(), &wrong),
            Err(ReidError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn max_bound_examples() {
        let uniform = p(&[&[0.25; 4], &[0.25; 4], &[0.25; 4]]);
        assert!((max_accuracy_bound(&uniform) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(max_accuracy_bound(&RepresentationMatrix::identity(5).unwrap()), 1.0);
        for n in [2, 7, 30] {
            let c = construct_ldp_kanon_counterexample(n).unwrap();
            assert!((max_accuracy_bound(&c) - 2.0 / n as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn optimal_rule_examples() {
        let a = optimal_full_info_rule(&two_user());
        assert_eq!(a.to_rows(), vec![vec![1.0, 0.0, 1.0], vec![0.0, 1.0, 0.0]]);
        let acc = exact_random_user_accuracy(&two_user(), &a).unwrap();
        assert!((acc - max_accuracy_bound(&two_user())).abs() < 1e-15);

        let id = RepresentationMatrix::identity(3).unwrap();
        assert_eq!(optimal_full_info_rule(&id).to_rows(), id.to_rows());

        let tied = p(&[&[0.5, 0.5], &[0.5, 0.5], &[0.2, 0.8]]);
        let a = optimal_full_info_rule(&tied);
        assert_eq!(a.get(0, 0), 1.0);
        assert_eq!(a.get(2, 1), 1.0);
    }

    #[test]
    fn matching_bound_examples() {
        assert!((matching_accuracy_bound(&two_user()) - 0.875).abs() < 1e-15);
        assert_eq!(
            matching_accuracy_bound(&RepresentationMatrix::identity(6).unwrap()),
            1.0
        );
        let single = p(&[&[1.0], &[1.0], &[1.0], &[1.0]]);
        assert!((matching_accuracy_bound(&single) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn ldp_examples() {
        let same = p(&[&[0.2, 0.8], &[0.2, 0.8], &[0.2, 0.8]]);
        for eps in [0.0, 0.5, 3.0] {
            assert_eq!(check_ldp(&same, eps).unwrap(), 0.0);
        }
        let c = construct_ldp_kanon_counterexample(5).unwrap();
        for eps in [0.0, 1.0, 10.0, 50.0] {
            assert_eq!(check_ldp(&c, eps).unwrap(), 1.0);
        }
        assert!(check_ldp(&c, -1.0).is_err());
    }

    #[test]
    fn ldp_bound_examples() {
        let b = |e: f64, d: f64, n, m| ldp_accuracy_bound(LdpParams::new(e, d).unwrap(), n, m).unwrap();
        assert!((b(0.0, 0.0, 100, 10) - 0.01).abs() < 1e-15);
        assert!((b(2f64.ln(), 0.0, 100, 10) - 0.02).abs() < 1e-15);
        assert!(b(0.3, 1.0, 10, 20) >= 1.0);
        assert!(LdpParams::new(-0.1, 0.0).is_err());
        assert!(LdpParams::new(0.1, 1.5).is_err());
    }

    #[test]
    fn k_anonymity_examples() {
        let six = p(&[
            &[1.0, 0.0],
            &[0.0, 1.0],
            &[1.0, 0.0],
            &[0.0, 1.0],
            &[1.0, 0.0],
            &[0.0, 1.0],
        ]);
        assert_eq!(check_k_anonymity(&six), 3);
        assert!((max_accuracy_bound(&six) - kanon_accuracy_bound(3).unwrap()).abs() < 1e-15);
        assert_eq!(check_k_anonymity(&RepresentationMatrix::identity(4).unwrap()), 1);
        assert_eq!(check_k_anonymity(&construct_ldp_kanon_counterexample(4).unwrap()), 0);
        assert_eq!(kanon_accuracy_bound(1).unwrap(), 1.0);
        assert!((kanon_accuracy_bound(3).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(kanon_accuracy_bound(0).is_err());
    }

    #[test]
    fn fano_examples() {
        let e2 = std::f64::consts::E.powi(2);
        assert!((fano_bound(0.0, e2).unwrap() - 0.5).abs() < 1e-15);
        assert!((fano_bound(0.0, 10.0).unwrap() - std::f64::consts::LOG10_E).abs() < 1e-15);
        let mut prev = f64::INFINITY;
        for n in 2..200 {
            let b = fano_bound(0.7, n as f64).unwrap();
            assert!(b < prev);
            prev = b;
        }
        assert!(fano_bound(0.0, 1.0).is_err());
        assert!(fano_bound(-0.1, 10.0).is_err());
    }

    #[test]
    fn counterexample_shapes() {
        assert_eq!(
            construct_ldp_kanon_counterexample(2).unwrap().to_rows(),
            vec![vec![1.0, 0.0], vec![0.0, 1.0]]
        );
        assert_eq!(
            construct_ldp_kanon_counterexample(3).unwrap().to_rows(),
            vec![vec![1.0, 0.0], vec![0.5, 0.5], vec![0.0, 1.0]]
        );
        assert!(construct_ldp_kanon_counterexample(1).is_err());
    }

    #[test]
    fn gap_instance_shapes() {
        assert_eq!(construct_matching_gap_instance(2).unwrap(), two_user());
        let four = construct_matching_gap_instance(4).unwrap();
        assert_eq!(four.shape(), (4, 6));
        for o in 0..6 {
            assert_eq!(four.column(o).fold(0.0, f64::max), 0.5);
        }
        for n in [2, 4, 10] {
            let g = construct_matching_gap_instance(n).unwrap();
            assert!((max_accuracy_bound(&g) - 0.75).abs() < 1e-15);
        }
        assert!(construct_matching_gap_instance(3).is_err());
        assert!(construct_matching_gap_instance(0).is_err());
    }

    #[test]
    fn report_clamps_but_keeps_raw() {
        let r = BoundReport::new(1.7, BoundKind::UpperBound, "ldp");
        assert_eq!(r.value, 1.0);
        assert_eq!(r.raw, 1.7);
    }
}
