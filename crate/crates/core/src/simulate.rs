//! Synthetic data from known parameters, by direct simulation of the latent variable.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::StandardizationStats;
use crate::data::{CareLevel, Dataset, Observation};
use crate::error::{Error, Result};
use crate::model::{
    forward_transform, MeanFunction, ModelSpec, ParameterVector, RawCoefficients, Thresholds,
    CONTAMINATION_SCALE,
};

/// Data-generating parameters with coefficients on the raw care-level scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueParameters {
    pub spec: ModelSpec,
    pub beta_raw: RawCoefficients,
    pub thresholds: Thresholds,
    pub sigma: Vec<f64>,
    pub alpha: f64,
}

impl TrueParameters {
    pub fn validate(&self) -> Result<()> {
        if self.beta_raw.terms != self.spec.terms() {
            return Err(Error::DimensionMismatch(
                "coefficient terms differ from spec".into(),
            ));
        }
        let probe = ParameterVector {
            beta: self.beta_raw.beta.clone(),
            thresholds: self.thresholds.clone(),
            sigma: self.sigma.clone(),
            alpha: self.alpha,
        };
        probe.validate(&self.spec)
    }

    /// The same point expressed on the standardized scale of `stats`.
    pub fn parameter_vector(&self, stats: &StandardizationStats) -> Result<ParameterVector> {
        Ok(ParameterVector {
            beta: forward_transform(&self.beta_raw, stats)?,
            thresholds: self.thresholds.clone(),
            sigma: self.sigma.clone(),
            alpha: self.alpha,
        })
    }

    /// Packed values in the order of `spec.parameter_layout().raw_names()`.
    pub fn raw_packed(&self) -> Vec<f64> {
        let mut v = self.beta_raw.beta.clone();
        v.extend_from_slice(self.thresholds.free());
        v.extend_from_slice(&self.sigma);
        if self.spec.contamination() {
            v.push(self.alpha);
        }
        v
    }
}

/// Every `(x1, x2)` pair of a `k`-level design with `per_cell` observations each.
pub fn uniform_design(k: usize, per_cell: u64) -> Vec<(usize, usize, u64)> {
    (0..k)
        .flat_map(|a| (0..k).map(move |b| (a, b, per_cell)))
        .collect()
}

/// Reads design points from CSV with columns `intended,recommended,count`.
pub fn load_design(path: impl AsRef<std::path::Path>) -> Result<Vec<(usize, usize, u64)>> {
    let path = path.as_ref();
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)?;
    let header = r.headers()?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let (ia, ib, ic) = (col("intended")?, col("recommended")?, col("count")?);
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let row = rec.position().map_or(0, |p| p.line());
        let parse = |i: usize| -> Result<u64> {
            rec[i].parse::<u64>().map_err(|_| Error::NotInteger {
                row,
                column: header[i].to_string(),
                value: rec[i].to_string(),
            })
        };
        out.push((parse(ia)? as usize, parse(ib)? as usize, parse(ic)?));
    }
    if out.iter().map(|d| d.2).sum::<u64>() == 0 {
        return Err(Error::EmptyDataset);
    }
    Ok(out)
}

/// Simulates outcomes at the design points `(x1, x2, count)`.
///
/// For each observation the latent value is drawn as `mu + eps` and the
/// outcome is the number of thresholds at or below it.
pub fn simulate_dataset(
    params: &TrueParameters,
    design: &[(usize, usize, u64)],
    seed: u64,
) -> Result<Dataset> {
    params.validate()?;
    let k = params.spec.k();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let thr = params.thresholds.values();
    let mut obs = Vec::new();
    for &(a, b, n) in design {
        let (x1, x2) = match (CareLevel::new(a, k), CareLevel::new(b, k)) {
            (Some(x1), Some(x2)) => (x1, x2),
            _ => {
                return Err(Error::DimensionMismatch(format!(
                    "design point ({a}, {b}) outside 0..{k}"
                )))
            }
        };
        let mu = params.beta_raw.mean_at(a as f64, b as f64)?;
        let sd = params.sigma[params.spec.sigma_structure().group(a, b)];
        for _ in 0..n {
            let wide = params.alpha > 0.0 && rng.random::<f64>() < params.alpha;
            let scale = if wide { CONTAMINATION_SCALE * sd } else { sd };
            let z = mu + scale * rng.sample::<f64, _>(StandardNormal);
            let y = thr.iter().take_while(|&&t| t <= z).count();
            obs.push(Observation::new(
                x1,
                x2,
                CareLevel::new(y, k).expect("y < k"),
            ));
        }
    }
    Dataset::new(k, obs)
}
