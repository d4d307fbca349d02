//! Posterior predictive replication, cell coverage, discrepancy p-values and
//! the modal-prediction error rate.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::CellEvaluator;
use crate::sampler::{hpd_interval, Interval, PosteriorSamples};
use crate::stats::sorted_quantile;

/// Replicated outcome vectors at the observed design points.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicatedSet {
    k: usize,
    n: usize,
    /// Row-major `replicates x n`, observations in data order.
    outcomes: Vec<u8>,
}

impl ReplicatedSet {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.outcomes.len().checked_div(self.n).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn n_obs(&self) -> usize {
        self.n
    }

    pub fn replicate(&self, r: usize) -> &[u8] {
        &self.outcomes[r * self.n..(r + 1) * self.n]
    }

    /// Per-(x1, x2, y) counts of replicate `r`, laid out like [`crate::CountTable`].
    fn cell_counts(&self, data: &Dataset, r: usize) -> Vec<u32> {
        let k = self.k;
        let mut counts = vec![0u32; k * k * k];
        for (o, &y) in data.observations().iter().zip(self.replicate(r)) {
            counts[(o.intended.get() * k + o.recommended.get()) * k + y as usize] += 1;
        }
        counts
    }

    fn level_counts(&self, r: usize) -> Vec<u64> {
        let mut c = vec![0u64; self.k];
        for &y in self.replicate(r) {
            c[y as usize] += 1;
        }
        c
    }
}

/// Draws one outcome from `probs` given a uniform variate.
fn draw_category(probs: &[f64], u: f64) -> u8 {
    let total: f64 = probs.iter().sum();
    let target = u * total;
    let mut acc = 0.0;
    for (y, p) in probs.iter().enumerate() {
        acc += p;
        if target < acc {
            return y as u8;
        }
    }
    // u * total rounding past the last partial sum
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0) as u8
}

fn check_compatible(samples: &PosteriorSamples, data: &Dataset) -> Result<()> {
    if data.k() != samples.model.spec.k() {
        return Err(Error::DimensionMismatch(format!(
            "data K={} but the fit has K={}",
            data.k(),
            samples.model.spec.k()
        )));
    }
    Ok(())
}

/// Simulates `r` replicated datasets, replicate `i` using the `i`-th draw of
/// the posterior (in canonical chain order) and its own random stream.
pub fn replicate_datasets(
    samples: &PosteriorSamples,
    data: &Dataset,
    r: usize,
    seed: u64,
) -> Result<ReplicatedSet> {
    check_compatible(samples, data)?;
    if r > samples.len() {
        return Err(Error::InsufficientDraws(format!(
            "{r} replicates requested but only {} draws available",
            samples.len()
        )));
    }
    let k = data.k();
    let eval = CellEvaluator::new(&samples.model, data);
    let cell_of: Vec<usize> = data
        .observations()
        .iter()
        .map(|o| {
            eval.cells()
                .points
                .iter()
                .position(|&(a, b)| a == o.intended && b == o.recommended)
                .expect("observation cell present")
        })
        .collect();
    let order = samples.canonical_order();
    let n = data.n();
    let outcomes: Vec<u8> = (0..r)
        .into_par_iter()
        .flat_map_iter(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(rep as u64);
            let mut probs = vec![0.0; eval.len() * k];
            eval.cell_probs(&samples.parameters(order[rep]), &mut probs);
            let ys: Vec<u8> = cell_of
                .iter()
                .map(|&c| draw_category(&probs[c * k..(c + 1) * k], rng.random::<f64>()))
                .collect();
            ys
        })
        .collect();
    debug_assert_eq!(outcomes.len(), r * n);
    Ok(ReplicatedSet { k, n, outcomes })
}

/// Control replicates that resample each observation's outcome from the
/// empirical outcome distribution of its own `(x1, x2)` cell.
pub fn bootstrap_replicates(data: &Dataset, r: usize, seed: u64) -> ReplicatedSet {
    let k = data.k();
    let table = data.count_table();
    let n = data.n();
    let outcomes: Vec<u8> = (0..r)
        .into_par_iter()
        .flat_map_iter(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(rep as u64);
            let ys: Vec<u8> = data
                .observations()
                .iter()
                .map(|o| {
                    let probs: Vec<f64> = (0..k)
                        .map(|y| table.get(o.intended.get(), o.recommended.get(), y) as f64)
                        .collect();
                    draw_category(&probs, rng.random::<f64>())
                })
                .collect();
            ys
        })
        .collect();
    ReplicatedSet { k, n, outcomes }
}

/// Observed versus replicated count in one `(x1, x2, y)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellCheck {
    pub intended: usize,
    pub recommended: usize,
    pub outcome: usize,
    pub observed: u64,
    pub replicate_mean: f64,
    /// 2.5% and 97.5% order statistics of the replicate counts.
    pub lo: u64,
    pub hi: u64,
    pub covered: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageSummary {
    pub cells_total: usize,
    pub cells_covered: usize,
    pub nonempty_cells: usize,
    pub nonempty_covered: usize,
    /// Fraction of observed observations lying in covered cells.
    pub observation_coverage: f64,
    /// Same fraction computed on each replicate against the intervals, summarized.
    pub replicate_coverage_mean: f64,
    pub replicate_coverage_hpd: Interval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub cells: Vec<CellCheck>,
    pub coverage: CoverageSummary,
}

impl CellReport {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "intended",
            "recommended",
            "final",
            "observed",
            "replicate_mean",
            "lo",
            "hi",
            "covered",
        ])?;
        for c in &self.cells {
            w.write_record([
                c.intended.to_string(),
                c.recommended.to_string(),
                c.outcome.to_string(),
                c.observed.to_string(),
                c.replicate_mean.to_string(),
                c.lo.to_string(),
                c.hi.to_string(),
                c.covered.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// Per-cell 95% replicate intervals and coverage of the observed counts.
pub fn cell_checks(reps: &ReplicatedSet, data: &Dataset) -> Result<CellReport> {
    if reps.n_obs() != data.n() || reps.k() != data.k() {
        return Err(Error::DimensionMismatch(
            "replicates were not generated for this dataset".into(),
        ));
    }
    if reps.is_empty() {
        return Err(Error::InsufficientDraws("no replicates".into()));
    }
    let k = data.k();
    let n_cells = k * k * k;
    let r = reps.len();
    let per_rep: Vec<Vec<u32>> = (0..r)
        .into_par_iter()
        .map(|i| reps.cell_counts(data, i))
        .collect();
    let table = data.count_table();

    let mut cells = Vec::with_capacity(n_cells);
    for (idx, (a, b, y, observed)) in table.cells().enumerate() {
        let mut col: Vec<u32> = per_rep.iter().map(|c| c[idx]).collect();
        let mean = col.iter().map(|&v| v as f64).sum::<f64>() / r as f64;
        col.sort_unstable();
        let lo = sorted_quantile(&col, 0.025) as u64;
        let hi = sorted_quantile(&col, 0.975) as u64;
        cells.push(CellCheck {
            intended: a,
            recommended: b,
            outcome: y,
            observed,
            replicate_mean: mean,
            lo,
            hi,
            covered: lo <= observed && observed <= hi,
        });
    }

    let n = data.n() as f64;
    let observed_in_covered: u64 = cells.iter().filter(|c| c.covered).map(|c| c.observed).sum();
    let rep_cov: Vec<f64> = per_rep
        .iter()
        .map(|counts| {
            counts
                .iter()
                .zip(&cells)
                .filter(|(&v, c)| c.lo <= v as u64 && v as u64 <= c.hi)
                .map(|(&v, _)| v as f64)
                .sum::<f64>()
                / n
        })
        .collect();
    let coverage = CoverageSummary {
        cells_total: cells.len(),
        cells_covered: cells.iter().filter(|c| c.covered).count(),
        nonempty_cells: cells.iter().filter(|c| c.observed > 0).count(),
        nonempty_covered: cells.iter().filter(|c| c.observed > 0 && c.covered).count(),
        observation_coverage: observed_in_covered as f64 / n,
        replicate_coverage_mean: crate::stats::mean(&rep_cov),
        replicate_coverage_hpd: hpd_interval(&rep_cov, 0.95)?,
    };
    Ok(CellReport { cells, coverage })
}

/// Test statistic for posterior predictive p-values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Measure {
    /// Number of outcomes at a level.
    CountAt(usize),
    /// Mean outcome.
    Mean,
    /// Sample standard deviation of the outcomes.
    Sd,
}

impl Measure {
    pub fn name(&self) -> String {
        match self {
            Measure::CountAt(k) => format!("count_{k}"),
            Measure::Mean => "mean".into(),
            Measure::Sd => "sd".into(),
        }
    }

    /// Evaluates the statistic from per-level outcome counts. Working from
    /// integer counts makes equal outcome vectors tie exactly.
    pub fn eval(&self, level_counts: &[u64]) -> f64 {
        let n: u64 = level_counts.iter().sum();
        let s1: u64 = level_counts
            .iter()
            .enumerate()
            .map(|(y, &c)| y as u64 * c)
            .sum();
        match *self {
            Measure::CountAt(k) => level_counts.get(k).copied().unwrap_or(0) as f64,
            Measure::Mean => s1 as f64 / n as f64,
            Measure::Sd => {
                if n < 2 {
                    return 0.0;
                }
                let s2: u64 = level_counts
                    .iter()
                    .enumerate()
                    .map(|(y, &c)| (y * y) as u64 * c)
                    .sum();
                // n * sum(y^2) - (sum y)^2 is exact in integers
                let num = (n as u128 * s2 as u128) - (s1 as u128 * s1 as u128);
                (num as f64 / (n as f64 * (n - 1) as f64)).sqrt()
            }
        }
    }
}

/// Double-tailed posterior predictive p-value
/// `2 min(P(T_rep >= T_obs), P(T_rep <= T_obs))`, capped at 1.
pub fn discrepancy_pvalue(reps: &ReplicatedSet, data: &Dataset, measure: Measure) -> Result<f64> {
    if reps.n_obs() != data.n() || reps.k() != data.k() {
        return Err(Error::DimensionMismatch(
            "replicates were not generated for this dataset".into(),
        ));
    }
    if reps.is_empty() {
        return Err(Error::InsufficientDraws("no replicates".into()));
    }
    let mut obs_counts = vec![0u64; data.k()];
    for y in data.outcomes() {
        obs_counts[y] += 1;
    }
    let t_obs = measure.eval(&obs_counts);
    let (mut ge, mut le) = (0usize, 0usize);
    for r in 0..reps.len() {
        let t = measure.eval(&reps.level_counts(r));
        if t >= t_obs {
            ge += 1;
        }
        if t <= t_obs {
            le += 1;
        }
    }
    let r = reps.len() as f64;
    Ok((2.0 * (ge.min(le) as f64) / r).min(1.0))
}

/// Posterior-mean category probabilities per design cell, `cells x K`.
fn posterior_mean_probs(samples: &PosteriorSamples, eval: &CellEvaluator) -> Vec<f64> {
    let k = eval.k;
    let mut sum = vec![0.0; eval.len() * k];
    let mut buf = vec![0.0; eval.len() * k];
    for i in samples.canonical_order() {
        eval.cell_probs(&samples.parameters(i), &mut buf);
        sum.iter_mut().zip(&buf).for_each(|(s, p)| *s += p);
    }
    let m = samples.len() as f64;
    sum.iter_mut().for_each(|s| *s /= m);
    sum
}

/// Fraction of observations whose modal predicted level differs from the
/// observed one. Predictions use posterior-averaged probabilities; ties go to
/// the lower level.
pub fn error_rate(samples: &PosteriorSamples, data: &Dataset) -> Result<f64> {
    check_compatible(samples, data)?;
    if samples.is_empty() {
        return Err(Error::InsufficientDraws("no posterior draws".into()));
    }
    let eval = CellEvaluator::new(&samples.model, data);
    let k = data.k();
    let probs = posterior_mean_probs(samples, &eval);
    let cells = eval.cells();
    let mut wrong = 0u64;
    for c in 0..eval.len() {
        let p = &probs[c * k..(c + 1) * k];
        let mode = argmax_lower(p);
        wrong += cells
            .counts_at(c)
            .iter()
            .enumerate()
            .filter(|(y, _)| *y != mode)
            .map(|(_, &n)| n)
            .sum::<u64>();
    }
    Ok(wrong as f64 / data.n() as f64)
}

fn argmax_lower(p: &[f64]) -> usize {
    let mut best = 0;
    for (y, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = y;
        }
    }
    best
}

/// Fraction of observations a fixed predictor gets wrong.
pub fn predictor_error_rate(data: &Dataset, predict: impl Fn(usize, usize) -> usize) -> f64 {
    let wrong = data
        .observations()
        .iter()
        .filter(|o| predict(o.intended.get(), o.recommended.get()) != o.outcome.get())
        .count();
    wrong as f64 / data.n() as f64
}

/// Expected correct-prediction rate of uniform guessing among `k` levels.
pub fn chance_correct_rate(k: usize) -> f64 {
    1.0 / k as f64
}

/// Machine-readable validation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub replicates: usize,
    pub seed: u64,
    pub coverage: CoverageSummary,
    pub pvalues: Vec<(String, f64)>,
    pub error_rate: f64,
    pub chance_correct_rate: f64,
}

impl ValidationReport {
    pub fn render(&self, mut out: impl Write) -> std::io::Result<()> {
        let c = &self.coverage;
        writeln!(out, "replicates            {}", self.replicates)?;
        writeln!(
            out,
            "cells covered         {} / {} (nonempty {} / {})",
            c.cells_covered, c.cells_total, c.nonempty_covered, c.nonempty_cells
        )?;
        writeln!(
            out,
            "observation coverage  {:.1}%  replicate {:.1}% ({:.1}, {:.1})",
            100.0 * c.observation_coverage,
            100.0 * c.replicate_coverage_mean,
            100.0 * c.replicate_coverage_hpd.lo,
            100.0 * c.replicate_coverage_hpd.hi
        )?;
        for (name, p) in &self.pvalues {
            writeln!(out, "p-value {name:<13} {p:.3}")?;
        }
        writeln!(out, "error rate            {:.3}", self.error_rate)?;
        writeln!(out, "chance correct rate   {:.3}", self.chance_correct_rate)?;
        Ok(())
    }
}
