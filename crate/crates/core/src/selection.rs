//! WAIC and the candidate-model scan.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{CellEvaluator, ModelSpec, Priors, SigmaStructure, Term};
use crate::sampler::{derive_seed, run_mcmc, PosteriorSamples, SamplerConfig};
use crate::stats::LogMeanVar;
use crate::validation::error_rate;

/// Watanabe-Akaike information criterion on the deviance scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaicResult {
    pub lppd: f64,
    pub p_waic: f64,
    /// `-2 (lppd - p_waic)`; lower is better.
    pub waic: f64,
    /// Per-observation log pointwise predictive density, in data order.
    pub pointwise_lppd: Vec<f64>,
    /// Per-observation variance of the log-likelihood over draws, in data order.
    pub pointwise_p: Vec<f64>,
}

impl WaicResult {
    fn from_pointwise(pointwise_lppd: Vec<f64>, pointwise_p: Vec<f64>) -> Self {
        let lppd: f64 = pointwise_lppd.iter().sum();
        let p_waic: f64 = pointwise_p.iter().sum();
        Self {
            lppd,
            p_waic,
            waic: -2.0 * (lppd - p_waic),
            pointwise_lppd,
            pointwise_p,
        }
    }
}

/// WAIC from a pointwise log-likelihood matrix, `loglik[i][s]` being
/// observation `i` under draw `s`.
pub fn waic_from_pointwise(loglik: &[Vec<f64>]) -> Result<WaicResult> {
    let n_draws = loglik.first().map_or(0, Vec::len);
    if n_draws < 2 {
        return Err(Error::InsufficientDraws(format!(
            "WAIC needs at least 2 draws, got {n_draws}"
        )));
    }
    let mut lppd = Vec::with_capacity(loglik.len());
    let mut p = Vec::with_capacity(loglik.len());
    for row in loglik {
        if row.len() != n_draws {
            return Err(Error::DimensionMismatch(
                "ragged log-likelihood matrix".into(),
            ));
        }
        let mut acc = LogMeanVar::default();
        row.iter().for_each(|&v| acc.push(v));
        lppd.push(acc.log_mean_exp());
        p.push(acc.variance());
    }
    Ok(WaicResult::from_pointwise(lppd, p))
}

/// WAIC of `data` under the posterior in `samples`.
///
/// Observations sharing `(x1, x2, y)` have identical pointwise terms, so the
/// reduction streams over draws once per distinct observed cell and expands
/// back to observations at the end.
pub fn waic(samples: &PosteriorSamples, data: &Dataset) -> Result<WaicResult> {
    if samples.len() < 2 {
        return Err(Error::InsufficientDraws(format!(
            "WAIC needs at least 2 draws, got {}",
            samples.len()
        )));
    }
    if data.k() != samples.model.spec.k() {
        return Err(Error::DimensionMismatch(
            "data K differs from the fitted K".into(),
        ));
    }
    let eval = CellEvaluator::new(&samples.model, data);
    let k = data.k();
    let mut acc = vec![LogMeanVar::default(); eval.len() * k];
    let mut buf = vec![0.0; eval.len() * k];
    let cells = eval.cells();
    for i in samples.canonical_order() {
        eval.cell_log_probs(&samples.parameters(i), &mut buf);
        for c in 0..eval.len() {
            for (y, &n) in cells.counts_at(c).iter().enumerate() {
                if n > 0 {
                    acc[c * k + y].push(buf[c * k + y]);
                }
            }
        }
    }

    let cell_index = |a: usize, b: usize| {
        cells
            .points
            .iter()
            .position(|&(x1, x2)| x1.get() == a && x2.get() == b)
            .expect("every observation has a design cell")
    };
    let mut lppd = Vec::with_capacity(data.n());
    let mut p = Vec::with_capacity(data.n());
    for o in data.observations() {
        let c = cell_index(o.intended.get(), o.recommended.get());
        let a = &acc[c * k + o.outcome.get()];
        lppd.push(a.log_mean_exp());
        p.push(a.variance());
    }
    Ok(WaicResult::from_pointwise(lppd, p))
}

/// One candidate in a scan, with tags naming the comparison axes it belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: usize,
    pub spec: ModelSpec,
    pub tags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateGrid {
    pub candidates: Vec<Candidate>,
}

/// All 32 subsets of the five polynomial terms, smallest first.
fn term_subsets() -> Vec<Vec<Term>> {
    let mut out: Vec<Vec<Term>> = (0u32..32)
        .map(|mask| {
            Term::ALL
                .iter()
                .enumerate()
                .filter(|(j, _)| mask & (1 << j) != 0)
                .map(|(_, &t)| t)
                .collect()
        })
        .collect();
    out.sort_by_key(|s| s.len());
    out
}

impl CandidateGrid {
    /// The three one-axis-at-a-time comparisons around the selected model:
    /// every mean-term subset (by-intended sigma, contamination on), the
    /// selected mean without contamination, and the selected mean with common
    /// and by-recommended sigma. 35 candidates.
    pub fn axes(k: usize) -> Result<Self> {
        let selected = ModelSpec::selected(k);
        let mut candidates = Vec::new();
        for terms in term_subsets() {
            let spec = selected.with_terms(terms)?;
            let mut tags = vec!["mean-terms".to_string()];
            if spec == selected {
                tags.push("contamination".into());
                tags.push("sigma".into());
            }
            candidates.push(Candidate {
                id: candidates.len(),
                spec,
                tags,
            });
        }
        candidates.push(Candidate {
            id: candidates.len(),
            spec: selected.with_contamination(false),
            tags: vec!["contamination".into()],
        });
        for sigma in [SigmaStructure::Common, SigmaStructure::ByRecommended] {
            candidates.push(Candidate {
                id: candidates.len(),
                spec: selected.with_sigma(sigma),
                tags: vec!["sigma".into()],
            });
        }
        Ok(Self { candidates })
    }

    /// Full cross product: 32 term subsets x 3 sigma structures x contamination on/off.
    pub fn full(k: usize) -> Result<Self> {
        let base = ModelSpec::selected(k);
        let mut candidates = Vec::new();
        for terms in term_subsets() {
            for sigma in [
                SigmaStructure::ByIntended,
                SigmaStructure::Common,
                SigmaStructure::ByRecommended,
            ] {
                for contamination in [true, false] {
                    let spec = base
                        .with_terms(terms.clone())?
                        .with_sigma(sigma)
                        .with_contamination(contamination);
                    candidates.push(Candidate {
                        id: candidates.len(),
                        spec,
                        tags: vec!["full".into()],
                    });
                }
            }
        }
        Ok(Self { candidates })
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }
}

/// Fit statistics of one successful candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateFit {
    pub waic: f64,
    pub lppd: f64,
    pub p_waic: f64,
    pub error_rate: f64,
    pub rhat_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub candidate: Candidate,
    pub seed: u64,
    /// `Err` holds the failure message of a candidate that could not be fitted.
    pub outcome: std::result::Result<CandidateFit, String>,
}

/// Scan results ranked by ascending WAIC; failed candidates last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanTable {
    pub rows: Vec<ScanRow>,
}

impl ScanTable {
    /// Best successfully fitted candidate.
    pub fn best(&self) -> Option<&ScanRow> {
        self.rows.first().filter(|r| r.outcome.is_ok())
    }

    pub fn find(&self, spec: &ModelSpec) -> Option<&ScanRow> {
        self.rows.iter().find(|r| &r.candidate.spec == spec)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "candidate_id",
            "terms",
            "sigma_structure",
            "contamination",
            "waic",
            "lppd",
            "p_waic",
            "error_rate",
            "rhat_max",
            "error",
        ])?;
        for r in &self.rows {
            let s = &r.candidate.spec;
            let mut rec = vec![
                r.candidate.id.to_string(),
                s.terms_label(),
                s.sigma_structure().name().to_string(),
                s.contamination().to_string(),
            ];
            match &r.outcome {
                Ok(f) => {
                    rec.extend(
                        [f.waic, f.lppd, f.p_waic, f.error_rate, f.rhat_max]
                            .iter()
                            .map(f64::to_string),
                    );
                    rec.push(String::new());
                }
                Err(e) => {
                    rec.extend(std::iter::repeat_n(String::new(), 5));
                    rec.push(e.clone());
                }
            }
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    /// Aligned plain-text rendering.
    pub fn render(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(
            out,
            "{:>4} {:>3}  {:<24} {:<15} {:<5} {:>10} {:>8} {:>7} {:>6}",
            "rank", "id", "terms", "sigma", "cont", "waic", "p_waic", "err", "rhat"
        )?;
        for (rank, r) in self.rows.iter().enumerate() {
            let s = &r.candidate.spec;
            write!(
                out,
                "{:>4} {:>3}  {:<24} {:<15} {:<5}",
                rank + 1,
                r.candidate.id,
                s.terms_label(),
                s.sigma_structure().name(),
                if s.contamination() { "on" } else { "off" }
            )?;
            match &r.outcome {
                Ok(f) => writeln!(
                    out,
                    " {:>10.2} {:>8.2} {:>7.3} {:>6.3}",
                    f.waic, f.p_waic, f.error_rate, f.rhat_max
                )?,
                Err(e) => writeln!(out, " failed: {e}")?,
            }
        }
        Ok(())
    }
}

fn fit_candidate(
    data: &Dataset,
    spec: &ModelSpec,
    priors: &Priors,
    config: &SamplerConfig,
) -> Result<CandidateFit> {
    let (samples, diag) = run_mcmc(data, spec, priors, config)?;
    let w = waic(&samples, data)?;
    Ok(CandidateFit {
        waic: w.waic,
        lppd: w.lppd,
        p_waic: w.p_waic,
        error_rate: error_rate(&samples, data)?,
        rhat_max: diag.max_rhat(),
    })
}

/// Fits every candidate and ranks them by WAIC.
///
/// Candidate `i` runs with seed `derive_seed(config.seed, i)`. A candidate
/// that fails to fit is kept in the table with its error message.
pub fn scan_candidates(
    data: &Dataset,
    grid: &CandidateGrid,
    priors: &Priors,
    config: &SamplerConfig,
) -> Result<ScanTable> {
    config.validate()?;
    let mut rows: Vec<ScanRow> = grid
        .candidates
        .par_iter()
        .map(|c| {
            let seed = derive_seed(config.seed, c.id as u64);
            let outcome = fit_candidate(data, &c.spec, priors, &config.with_seed(seed))
                .map_err(|e| e.to_string());
            ScanRow {
                candidate: c.clone(),
                seed,
                outcome,
            }
        })
        .collect();
    rows.sort_by(|a, b| match (&a.outcome, &b.outcome) {
        (Ok(x), Ok(y)) => x
            .waic
            .total_cmp(&y.waic)
            .then(a.candidate.id.cmp(&b.candidate.id)),
        (Ok(_), Err(_)) => std::cmp::Ordering::Less,
        (Err(_), Ok(_)) => std::cmp::Ordering::Greater,
        (Err(_), Err(_)) => a.candidate.id.cmp(&b.candidate.id),
    });
    Ok(ScanTable { rows })
}
