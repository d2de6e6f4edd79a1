//! Rank-normalized split R-hat and autocorrelation-based effective sample size.

use statrs::distribution::{ContinuousCDF, Normal};

/// Split each chain into two halves, dropping the middle draw of odd chains.
fn split(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(chains.len() * 2);
    for c in chains {
        let half = c.len() / 2;
        out.push(c[..half].to_vec());
        out.push(c[c.len() - half..].to_vec());
    }
    out
}

/// Replace every value by the normal quantile of its fractional rank
/// (average rank for ties) across all chains.
fn rank_normalize(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let total: usize = chains.iter().map(Vec::len).sum();
    let mut idx: Vec<(f64, usize, usize)> = chains
        .iter()
        .enumerate()
        .flat_map(|(c, xs)| xs.iter().enumerate().map(move |(i, &x)| (x, c, i)))
        .collect();
    idx.sort_by(|a, b| a.0.total_cmp(&b.0));
    let normal = Normal::standard();
    let mut out: Vec<Vec<f64>> = chains.iter().map(|c| vec![0.0; c.len()]).collect();
    let s = total as f64;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && idx[j + 1].0 == idx[i].0 {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        let z = normal.inverse_cdf((rank - 0.375) / (s + 0.25));
        for &(_, c, k) in &idx[i..=j] {
            out[c][k] = z;
        }
        i = j + 1;
    }
    out
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn var(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

fn classic_rhat(chains: &[Vec<f64>]) -> f64 {
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let b = n * var(&means);
    let w = mean(&chains.iter().map(|c| var(c)).collect::<Vec<_>>());
    let var_plus = (n - 1.0) / n * w + b / n;
    (var_plus / w).sqrt()
}

fn is_constant(chains: &[Vec<f64>]) -> bool {
    let first = chains[0][0];
    chains.iter().flatten().all(|&x| x == first)
}

fn usable(chains: &[Vec<f64>]) -> bool {
    chains.len() >= 2 && chains.iter().all(|c| c.len() >= 4 && c.len() == chains[0].len())
}

/// Rank-normalized split R-hat: the larger of the bulk and folded values.
///
/// A parameter that never moves (e.g. a fixed one) reports 1.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    if !usable(chains) {
        return f64::NAN;
    }
    if is_constant(chains) {
        return 1.0;
    }
    let s = split(chains);
    let bulk = classic_rhat(&rank_normalize(&s));
    let mut all: Vec<f64> = s.iter().flatten().copied().collect();
    all.sort_by(f64::total_cmp);
    let n = all.len();
    let median = if n % 2 == 1 {
        all[n / 2]
    } else {
        0.5 * (all[n / 2 - 1] + all[n / 2])
    };
    let folded: Vec<Vec<f64>> = s.iter().map(|c| c.iter().map(|x| (x - median).abs()).collect()).collect();
    let tail = if is_constant(&folded) {
        1.0
    } else {
        classic_rhat(&rank_normalize(&folded))
    };
    bulk.max(tail)
}

/// Biased autocovariance at `lag`.
fn autocov(x: &[f64], m: f64, lag: usize) -> f64 {
    let n = x.len();
    x[..n - lag].iter().zip(&x[lag..]).map(|(a, b)| (a - m) * (b - m)).sum::<f64>() / n as f64
}

/// Effective sample size by Geyer's initial monotone sequence estimator
/// over multiple chains.
pub fn ess_raw(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len();
    let n = chains[0].len();
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let mean_acov = |lag: usize| -> f64 {
        chains.iter().zip(&means).map(|(c, &mu)| autocov(c, mu, lag)).sum::<f64>() / m as f64
    };
    let nf = n as f64;
    let mean_var = mean_acov(0) * nf / (nf - 1.0);
    let mut var_plus = mean_var * (nf - 1.0) / nf;
    if m > 1 {
        var_plus += var(&means);
    }
    let mut rho = vec![0.0; n];
    rho[0] = 1.0;
    let mut rho_even = 1.0;
    let mut rho_odd = 1.0 - (mean_var - mean_acov(1)) / var_plus;
    rho[1] = rho_odd;
    let mut t = 1;
    while t + 3 < n && rho_even + rho_odd > 0.0 {
        rho_even = 1.0 - (mean_var - mean_acov(t + 1)) / var_plus;
        rho_odd = 1.0 - (mean_var - mean_acov(t + 2)) / var_plus;
        if rho_even + rho_odd >= 0.0 {
            rho[t + 1] = rho_even;
            rho[t + 2] = rho_odd;
        }
        t += 2;
    }
    let max_t = t.saturating_sub(2);
    if rho_odd > 0.0 && max_t + 1 < n {
        rho[max_t + 1] = rho_odd;
    }
    let mut t = 1;
    while t + 2 <= max_t {
        if rho[t + 1] + rho[t + 2] > rho[t - 1] + rho[t] {
            rho[t + 1] = (rho[t - 1] + rho[t]) / 2.0;
            rho[t + 2] = rho[t + 1];
        }
        t += 2;
    }
    let total = (m * n) as f64;
    let tail = if max_t + 1 < n { rho[max_t + 1] } else { 0.0 };
    let tau = (-1.0 + 2.0 * rho[..=max_t].iter().sum::<f64>() + tail).max(1.0 / total.log10());
    total / tau
}

/// Bulk effective sample size: ESS of the rank-normalized split chains.
pub fn ess_bulk(chains: &[Vec<f64>]) -> f64 {
    if !usable(chains) {
        return f64::NAN;
    }
    let total: usize = chains.iter().map(Vec::len).sum();
    if is_constant(chains) {
        return total as f64;
    }
    ess_raw(&rank_normalize(&split(chains)))
}
