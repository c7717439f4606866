//! Independent reference implementations used as test oracles.
//!
//! Deliberately naive: dense matrices, direct differences, enumeration. Shared
//! with the acceptance harness, so this file depends on `std` only.
#![allow(dead_code)]

/// Per-query relevance flags of admissible items, ranked by distance with
/// ties broken by gallery index. Each item's rank is counted directly.
fn ranked_positions(dist: &[f64], admissible: &[bool], positive: &[bool]) -> Option<Vec<usize>> {
    let candidates: Vec<usize> = (0..dist.len()).filter(|&g| admissible[g]).collect();
    let rank_of = |g: usize| {
        1 + candidates
            .iter()
            .filter(|&&h| dist[h] < dist[g] || (dist[h] == dist[g] && h < g))
            .count()
    };
    let mut ranks: Vec<usize> = candidates.iter().copied().filter(|&g| positive[g]).map(rank_of).collect();
    ranks.sort_unstable();
    (!ranks.is_empty()).then_some(ranks)
}

/// Brute-force mAP and CMC curve. `None` when no query has an admissible positive.
pub fn brute_force_metrics(
    dist: &[Vec<f64>],
    admissible: &[Vec<bool>],
    qids: &[u32],
    gids: &[u32],
    max_rank: usize,
) -> Option<(f64, Vec<f64>)> {
    let mut ap_sum = 0.0;
    let mut evaluated = 0usize;
    let mut hits = vec![0usize; max_rank];
    for q in 0..dist.len() {
        let positive: Vec<bool> = gids.iter().map(|&g| g == qids[q]).collect();
        let Some(ranks) = ranked_positions(&dist[q], &admissible[q], &positive) else {
            continue;
        };
        evaluated += 1;
        // precision at the i-th positive is i / rank
        let mut ap = 0.0;
        for (i, &r) in ranks.iter().enumerate() {
            ap += (i + 1) as f64 / r as f64;
        }
        ap_sum += ap / ranks.len() as f64;
        for (k, h) in hits.iter_mut().enumerate() {
            if ranks[0] <= k + 1 {
                *h += 1;
            }
        }
    }
    (evaluated > 0).then(|| {
        (
            ap_sum / evaluated as f64,
            hits.iter().map(|&h| h as f64 / evaluated as f64).collect(),
        )
    })
}

fn argsort(row: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..row.len()).collect();
    idx.sort_by(|&a, &b| row[a].partial_cmp(&row[b]).unwrap().then(a.cmp(&b)));
    idx
}

fn k_reciprocal(rank: &[Vec<usize>], i: usize, k: usize) -> Vec<usize> {
    let mut out = Vec::new();
    for &c in &rank[i][..=k] {
        if rank[c][..=k].contains(&i) {
            out.push(c);
        }
    }
    out
}

/// Dense k-reciprocal re-ranking. Returns the `nq × ng` final distances.
///
/// Squared L2 on the joint set with each row scaled by its maximum;
/// reciprocal sets of size `k1`, expanded by half-`k1` sets overlapping more
/// than two thirds; `exp(−d)` weights; local query expansion over `k2`
/// neighbours; Jaccard distance as `1 − Σmin / Σmax`.
pub fn dense_rerank(queries: &[Vec<f64>], gallery: &[Vec<f64>], k1: usize, k2: usize, lambda: f64) -> Vec<Vec<f64>> {
    let all: Vec<&Vec<f64>> = queries.iter().chain(gallery).collect();
    let n = all.len();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            d[i][j] = all[i].iter().zip(all[j]).map(|(a, b)| (a - b) * (a - b)).sum();
        }
        let max = d[i].iter().cloned().fold(0.0, f64::max);
        if max > 0.0 {
            for v in &mut d[i] {
                *v /= max;
            }
        }
    }
    let rank: Vec<Vec<usize>> = d.iter().map(|r| argsort(r)).collect();
    let half = (k1 as f64 / 2.0).round_ties_even() as usize;

    let mut v = vec![vec![0.0; n]; n];
    for i in 0..n {
        let base = k_reciprocal(&rank, i, k1);
        let mut members = vec![false; n];
        for &c in &base {
            members[c] = true;
        }
        for &c in &base {
            let cand = k_reciprocal(&rank, c, half);
            let inside = cand.iter().filter(|&&x| base.contains(&x)).count();
            if 3 * inside > 2 * cand.len() {
                for &x in &cand {
                    members[x] = true;
                }
            }
        }
        let total: f64 = (0..n).filter(|&j| members[j]).map(|j| (-d[i][j]).exp()).sum();
        for j in 0..n {
            if members[j] {
                v[i][j] = (-d[i][j]).exp() / total;
            }
        }
    }
    if k2 > 1 {
        let mut expanded = vec![vec![0.0; n]; n];
        for i in 0..n {
            for &r in &rank[i][..k2] {
                for j in 0..n {
                    expanded[i][j] += v[r][j] / k2 as f64;
                }
            }
        }
        v = expanded;
    }

    let nq = queries.len();
    (0..nq)
        .map(|i| {
            (nq..n)
                .map(|g| {
                    let (mut lo, mut hi) = (0.0, 0.0);
                    for j in 0..n {
                        lo += f64::min(v[i][j], v[g][j]);
                        hi += f64::max(v[i][j], v[g][j]);
                    }
                    (1.0 - lambda) * (1.0 - lo / hi) + lambda * d[i][g]
                })
                .collect()
        })
        .collect()
}

/// Monte Carlo estimate of `KL[N(μ, diag σ²) ‖ N(0, I)]` as the sample mean of
/// `ln q(z) − ln p(z)`, with its standard error. `normal` draws N(0, 1).
pub fn monte_carlo_kl(mu: &[f64], sigma: &[f64], samples: usize, normal: &mut impl FnMut() -> f64) -> (f64, f64) {
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..samples {
        let mut log_ratio = 0.0;
        for (m, s) in mu.iter().zip(sigma) {
            let eps = normal();
            let z = m + s * eps;
            // the 2π terms cancel
            log_ratio += -s.ln() - 0.5 * eps * eps + 0.5 * z * z;
        }
        sum += log_ratio;
        sum_sq += log_ratio * log_ratio;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean) * n / (n - 1.0);
    (mean, (var / n).sqrt())
}
