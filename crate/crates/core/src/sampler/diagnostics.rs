use serde::{Deserialize, Serialize};

use super::{BlockAcceptance, PosteriorSamples};
use crate::error::{Error, Result};

/// Convergence summary of a multi-chain run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub names: Vec<String>,
    /// Split R-hat per parameter.
    pub rhat: Vec<f64>,
    /// Effective sample size per parameter (capped at the number of draws).
    pub ess: Vec<f64>,
    pub acceptance: Vec<BlockAcceptance>,
}

impl Diagnostics {
    pub fn compute(samples: &PosteriorSamples) -> Result<Self> {
        let mut rhats = Vec::with_capacity(samples.n_params());
        let mut ess = Vec::with_capacity(samples.n_params());
        for j in 0..samples.n_params() {
            rhats.push(rhat(samples, j)?);
            let chains = samples.chains(j);
            let refs: Vec<&[f64]> = chains.iter().map(Vec::as_slice).collect();
            ess.push(effective_sample_size(&refs));
        }
        Ok(Self {
            names: samples.names().to_vec(),
            rhat: rhats,
            ess,
            acceptance: samples.acceptance.clone(),
        })
    }

    pub fn max_rhat(&self) -> f64 {
        self.rhat.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_ess(&self) -> f64 {
        self.ess.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Split R-hat of parameter `index` across the chains of `samples`.
pub fn rhat(samples: &PosteriorSamples, index: usize) -> Result<f64> {
    if index >= samples.n_params() {
        return Err(Error::DimensionMismatch(format!("no parameter {index}")));
    }
    let chains = samples.chains(index);
    let refs: Vec<&[f64]> = chains.iter().map(Vec::as_slice).collect();
    split_rhat(&refs)
}

/// Split-chain potential scale reduction factor.
///
/// Every chain is halved; with `W` the mean within-half variance and `B/n`
/// the variance of half means, R-hat = sqrt(((n-1)/n W + B/n) / W).
/// Identical constant chains give exactly 1.
pub fn split_rhat(chains: &[&[f64]]) -> Result<f64> {
    if chains.len() < 2 {
        return Err(Error::InsufficientDraws(format!(
            "R-hat needs at least 2 chains, got {}",
            chains.len()
        )));
    }
    let n_min = chains.iter().map(|c| c.len()).min().unwrap_or(0);
    if n_min < 4 {
        return Err(Error::InsufficientDraws(format!(
            "R-hat needs at least 4 draws per chain, got {n_min}"
        )));
    }
    let half = n_min / 2;
    let mut halves: Vec<&[f64]> = Vec::with_capacity(chains.len() * 2);
    for c in chains {
        let c = &c[..2 * half];
        halves.push(&c[..half]);
        halves.push(&c[half..]);
    }
    let n = half as f64;
    let m = halves.len() as f64;
    let means: Vec<f64> = halves.iter().map(|h| crate::stats::mean(h)).collect();
    let grand = means.iter().sum::<f64>() / m;
    let b = n / (m - 1.0) * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
    let w = halves
        .iter()
        .map(|h| crate::stats::sample_variance(h))
        .sum::<f64>()
        / m;
    if w <= 0.0 {
        return Ok(if b <= 0.0 { 1.0 } else { f64::INFINITY });
    }
    let var_plus = (n - 1.0) / n * w + b / n;
    Ok((var_plus / w).sqrt())
}

/// Multi-chain effective sample size using Geyer's initial monotone sequence
/// on the combined autocorrelation estimate. Capped at the total draw count.
pub fn effective_sample_size(chains: &[&[f64]]) -> f64 {
    let m = chains.len();
    if m == 0 {
        return 0.0;
    }
    let n = chains.iter().map(|c| c.len()).min().unwrap_or(0);
    let total = (m * n) as f64;
    if n < 4 {
        return total;
    }
    let chains: Vec<&[f64]> = chains.iter().map(|c| &c[..n]).collect();
    let means: Vec<f64> = chains.iter().map(|c| crate::stats::mean(c)).collect();
    let nf = n as f64;
    let autocov = |lag: usize| -> f64 {
        chains
            .iter()
            .zip(&means)
            .map(|(c, mu)| {
                (0..n - lag)
                    .map(|i| (c[i] - mu) * (c[i + lag] - mu))
                    .sum::<f64>()
                    / nf
            })
            .sum::<f64>()
            / m as f64
    };
    let acov0 = autocov(0);
    let w = acov0 * nf / (nf - 1.0);
    let var_plus = if m > 1 {
        let grand = means.iter().sum::<f64>() / m as f64;
        let b_over_n = means.iter().map(|x| (x - grand).powi(2)).sum::<f64>() / (m as f64 - 1.0);
        w * (nf - 1.0) / nf + b_over_n
    } else {
        w * (nf - 1.0) / nf
    };
    if !(var_plus > 0.0) {
        return total;
    }
    let rho = |lag: usize| {
        if lag == 0 {
            1.0
        } else {
            1.0 - (w - autocov(lag)) / var_plus
        }
    };

    let mut sum_pairs = 0.0;
    let mut prev = f64::INFINITY;
    let mut t = 0;
    while 2 * t + 1 < n {
        let mut p = rho(2 * t) + rho(2 * t + 1);
        if p <= 0.0 {
            break;
        }
        if p > prev {
            p = prev;
        }
        sum_pairs += p;
        prev = p;
        t += 1;
    }
    let tau = (-1.0 + 2.0 * sum_pairs).max(1.0 / total.log10().max(1.0));
    (total / tau).min(total)
}
