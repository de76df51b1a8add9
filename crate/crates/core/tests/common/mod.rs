#![allow(dead_code)]

use rand::Rng;
use reid::{PredictionMatrix, Purpose, RepresentationMatrix, SeedSpec, Stream, StreamLabel};

pub fn synthetic_stream(seed: u64, case: u64) -> Stream {
    SeedSpec::new(seed).stream(StreamLabel::new(Purpose::Synthetic).trial(case))
}

/// Random distribution over `len` outcomes with roughly 30% zeros.
pub fn random_distribution(s: &mut Stream, len: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..len)
        .map(|_| if s.gen_bool(0.3) { 0.0 } else { s.gen::<f64>() })
        .collect();
    if v.iter().all(|&x| x == 0.0) {
        v[s.gen_range(0..len)] = 1.0;
    }
    let total: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= total);
    v
}

pub fn random_rows(s: &mut Stream, n: usize, m: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| random_distribution(s, m)).collect()
}

pub fn random_matrix(s: &mut Stream, n: usize, m: usize) -> RepresentationMatrix {
    RepresentationMatrix::from_rows(random_rows(s, n, m)).unwrap()
}

/// Random column-stochastic `n x m` rule, returned with its rows.
pub fn random_rule(s: &mut Stream, n: usize, m: usize) -> (PredictionMatrix, Vec<Vec<f64>>) {
    let cols: Vec<Vec<f64>> = (0..m).map(|_| random_distribution(s, n)).collect();
    let rows: Vec<Vec<f64>> = (0..n).map(|i| cols.iter().map(|c| c[i]).collect()).collect();
    (PredictionMatrix::from_rows(rows.clone()).unwrap(), rows)
}

/// Each user is one-hot on a random column.
pub fn random_one_hot(s: &mut Stream, n: usize, m: usize) -> (RepresentationMatrix, Vec<usize>) {
    let cols: Vec<usize> = (0..n).map(|_| s.gen_range(0..m)).collect();
    let rows = cols
        .iter()
        .map(|&c| (0..m).map(|o| if o == c { 1.0 } else { 0.0 }).collect())
        .collect();
    (RepresentationMatrix::from_rows(rows).unwrap(), cols)
}

/// `(1/n) sum_i sum_o P[i][o] A[i][o]`, straight from the rows.
pub fn trace_accuracy(p: &[Vec<f64>], a: &[Vec<f64>]) -> f64 {
    let n = p.len() as f64;
    p.iter()
        .zip(a)
        .map(|(pr, ar)| pr.iter().zip(ar).map(|(x, y)| x * y).sum::<f64>())
        .sum::<f64>()
        / n
}

/// `(1/n) sum_o max_i P[i][o]`, straight from the rows.
pub fn column_max_sum(p: &[Vec<f64>]) -> f64 {
    let m = p[0].len();
    (0..m).map(|o| p.iter().map(|r| r[o]).fold(0.0, f64::max)).sum::<f64>() / p.len() as f64
}

/// Minimal LDP delta by brute force over every event `E` of the outcome space.
pub fn ldp_delta_by_events(p: &[Vec<f64>], eps: f64) -> f64 {
    let m = p[0].len();
    let scale = eps.exp();
    let mut worst: f64 = 0.0;
    for mask in 0u32..(1 << m) {
        let mass = |r: &[f64]| (0..m).filter(|o| mask >> o & 1 == 1).map(|o| r[o]).sum::<f64>();
        for ri in p {
            for rj in p {
                worst = worst.max(mass(ri) - scale * mass(rj));
            }
        }
    }
    worst.min(1.0)
}

pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..n {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// All tuples in `[0, base)^len`, lexicographic.
pub fn tuples(base: usize, len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|t| {
                (0..base).map(move |x| {
                    let mut t = t.clone();
                    t.push(x);
                    t
                })
            })
            .collect();
    }
    out
}

/// Row-stochastic rows of length `m` with entries on the grid `j / steps`.
pub fn grid_rows(m: usize, steps: usize) -> Vec<Vec<f64>> {
    tuples(steps + 1, m)
        .into_iter()
        .filter(|t| t.iter().sum::<usize>() == steps)
        .map(|t| t.into_iter().map(|j| j as f64 / steps as f64).collect())
        .collect()
}
