//! Binomial intervals, exact sign test and rank correlation.

use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::factorial::ln_binomial;

use super::MetricsError;

/// Wilson score interval for `successes / n` at the given two-sided confidence.
pub fn wilson_ci(successes: u64, n: u64, confidence: f64) -> Result<(f64, f64), MetricsError> {
    if n == 0 || successes > n {
        return Err(MetricsError::Input(format!("need 0 <= successes <= n and n >= 1, got {successes}/{n}")));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(MetricsError::Input(format!("confidence {confidence} outside (0, 1)")));
    }
    let z = Normal::standard().inverse_cdf(1.0 - (1.0 - confidence) / 2.0);
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    Ok(((centre - half).max(0.0), (centre + half).min(1.0)))
}

/// Exact two-sided binomial sign test at p = 0.5, ties already removed.
pub fn sign_test(wins: u64, losses: u64) -> Result<f64, MetricsError> {
    let n = wins + losses;
    if n == 0 {
        return Err(MetricsError::Input("sign test needs at least one non-tied pair".into()));
    }
    let k = wins.min(losses);
    // P(X <= k) for X ~ Bin(n, 1/2); the term recurrence is exact while 2^-n is representable
    let tail = if n <= 1000 {
        let mut term = 0.5f64.powi(n as i32);
        let mut sum = term;
        for i in 0..k {
            term *= (n - i) as f64 / (i + 1) as f64;
            sum += term;
        }
        sum
    } else {
        (0..=k).map(|i| (ln_binomial(n, i) - n as f64 * std::f64::consts::LN_2).exp()).sum()
    };
    Ok((2.0 * tail).min(1.0))
}

fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman's rho with average ranks for ties. `None` when either side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<Option<f64>, MetricsError> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(MetricsError::Input("spearman needs two equal-length samples of size >= 2".into()));
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return Ok(None);
    }
    Ok(Some(cov / (vx * vy).sqrt()))
}
