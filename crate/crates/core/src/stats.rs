//! Small numeric helpers shared across modules.

/// Arithmetic mean; `NaN` for an empty slice.
pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Mean that does not depend on the order of `xs`: values are summed in sorted order.
/// Deviations are taken from the minimum, so a constant slice returns its value exactly.
pub fn order_invariant_mean(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    match (v.first(), v.last()) {
        (Some(&lo), Some(&hi)) if lo.is_finite() && hi.is_finite() => {
            lo + v.iter().map(|x| x - lo).sum::<f64>() / v.len() as f64
        }
        _ => mean(&v),
    }
}

/// Unbiased sample variance (n - 1 denominator); 0 for fewer than two values.
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn sample_sd(xs: &[f64]) -> f64 {
    sample_variance(xs).sqrt()
}

/// `ln(sum(exp(xs)))`, stable for large magnitudes.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Order-statistic quantile of sorted data: the `ceil(q n)`-th smallest value (1-based).
pub fn sorted_quantile<T: Copy>(sorted: &[T], q: f64) -> T {
    let n = sorted.len();
    let idx = ((q * n as f64).ceil() as usize).clamp(1, n) - 1;
    sorted[idx]
}

/// Streaming log-mean-exp and variance of a sequence of log values.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LogMeanVar {
    n: u64,
    max: f64,
    scaled_sum: f64,
    mean: f64,
    m2: f64,
}

impl Default for LogMeanVar {
    fn default() -> Self {
        Self {
            n: 0,
            max: f64::NEG_INFINITY,
            scaled_sum: 0.0,
            mean: 0.0,
            m2: 0.0,
        }
    }
}

impl LogMeanVar {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        if x == f64::NEG_INFINITY {
            // contributes nothing to the mean of exp(x); the variance is unbounded
            self.m2 = f64::INFINITY;
            return;
        }
        if x > self.max {
            self.scaled_sum = self.scaled_sum * (self.max - x).exp() + 1.0;
            self.max = x;
        } else {
            self.scaled_sum += (x - self.max).exp();
        }
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    /// `ln(mean(exp(x)))`.
    pub fn log_mean_exp(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        self.max + self.scaled_sum.ln() - (self.n as f64).ln()
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }
}
