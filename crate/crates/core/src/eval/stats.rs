//! Rank-sum test, correlation and coefficient of determination.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Midranks (1-based) of `values`, plus the tie-group sizes.
fn midranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // positions i..j share the average of ranks i+1..=j
        let r = (i + 1 + j) as f64 / 2.0;
        for &o in &order[i..j] {
            ranks[o] = r;
        }
        if j - i > 1 {
            ties.push(j - i);
        }
        i = j;
    }
    (ranks, ties)
}

/// Number of `k`-subsets of `{1..N}` with each rank sum, indexed by sum.
fn subset_sum_counts(total: usize, k: usize) -> Vec<u128> {
    let max_sum = k * total;
    // dp[j][s]: j-subsets of the ranks seen so far summing to s
    let mut dp = vec![vec![0u128; max_sum + 1]; k + 1];
    dp[0][0] = 1;
    for r in 1..=total {
        for j in (1..=k.min(r)).rev() {
            for s in (r..=max_sum).rev() {
                let add = dp[j - 1][s - r];
                if add != 0 {
                    dp[j][s] += add;
                }
            }
        }
    }
    dp.swap_remove(k)
}

/// Two-sided Wilcoxon rank-sum (Mann–Whitney) p-value.
///
/// Exact (by counting rank-sum arrangements) when `min(n, m) <= 8` and there
/// are no ties; otherwise the normal approximation with tie and continuity
/// corrections.
pub fn wilcoxon_rank_sum(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidInput("wilcoxon_rank_sum needs two nonempty samples".into()));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(Error::NonFiniteInput("wilcoxon_rank_sum".into()));
    }
    // rank the smaller sample; the test is symmetric
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let (n, m) = (small.len(), large.len());
    let all: Vec<f64> = small.iter().chain(large).copied().collect();
    let (ranks, ties) = midranks(&all);
    let w: f64 = ranks[..n].iter().sum();
    let total = n + m;

    if n <= 8 && ties.is_empty() {
        let counts = subset_sum_counts(total, n);
        let w = w.round() as usize;
        let all_count: u128 = counts.iter().sum();
        let lower: u128 = counts[..=w].iter().sum();
        let upper: u128 = counts[w..].iter().sum();
        let tail = lower.min(upper) as f64 / all_count as f64;
        return Ok((2.0 * tail).min(1.0));
    }

    let (nf, mf, tf) = (n as f64, m as f64, total as f64);
    let mu = nf * (tf + 1.0) / 2.0;
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / (tf * (tf - 1.0));
    let var = nf * mf / 12.0 * ((tf + 1.0) - tie_term);
    if !(var > 0.0) {
        return Ok(1.0);
    }
    let z = ((w - mu).abs() - 0.5).max(0.0) / var.sqrt();
    let normal = Normal::standard();
    Ok((2.0 * normal.sf(z)).min(1.0))
}

/// Sample Pearson correlation.
pub fn pearson_rho(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::dims("pearson_rho", x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(Error::InvalidInput("pearson_rho needs at least 2 points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if !(sxx > 0.0 && syy > 0.0) {
        return Err(Error::InvalidInput("pearson_rho of a constant vector is undefined".into()));
    }
    if !(sxy.is_finite() && sxx.is_finite() && syy.is_finite()) {
        return Err(Error::NonFiniteInput("pearson_rho".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// `1 - SS_res / SS_tot` of the least-squares line `y ~ a + b x`.
///
/// Returns 0 when `y` is constant or `x` is constant (nothing explained).
pub fn r_squared(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::dims("r_squared", x.len(), y.len()));
    }
    if x.is_empty() {
        return Err(Error::InvalidInput("r_squared of empty input".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if !(sxx > 0.0 && syy > 0.0) {
        return Ok(0.0);
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    Ok(1.0 - ss_res / syy)
}
