//! Persisted posterior: a draws CSV plus a JSON sidecar describing the fit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BlockAcceptance, PosteriorSamples, SamplerConfig};
use crate::data::{CountTable, StandardizationStats};
use crate::error::{Error, Result};
use crate::model::{Model, ModelSpec, Priors};

pub const DRAWS_FILE: &str = "draws.csv";
pub const SIDECAR_FILE: &str = "posterior.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSidecar {
    pub spec: ModelSpec,
    pub stats: StandardizationStats,
    pub priors: Priors,
    pub config: SamplerConfig,
    pub seed: u64,
    pub names: Vec<String>,
    pub acceptance: Vec<BlockAcceptance>,
    pub data: CountTable,
    /// Free-form record of the invocation that produced the fit.
    #[serde(default)]
    pub run_config: serde_json::Value,
}

impl PosteriorSidecar {
    pub fn from_samples(samples: &PosteriorSamples, run_config: serde_json::Value) -> Self {
        Self {
            spec: samples.model.spec.clone(),
            stats: samples.model.stats.clone(),
            priors: samples.priors.clone(),
            config: samples.config.clone(),
            seed: samples.config.seed,
            names: samples.names().to_vec(),
            acceptance: samples.acceptance.clone(),
            data: samples.data.clone(),
            run_config,
        }
    }
}

/// Writes `draws.csv` and `posterior.json` into `dir` (created if missing).
pub fn write_posterior(
    dir: impl AsRef<Path>,
    samples: &PosteriorSamples,
    run_config: serde_json::Value,
) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let draws_path = dir.join(DRAWS_FILE);
    let mut w = csv::Writer::from_path(&draws_path)?;
    let mut header = vec!["chain".to_string(), "draw".to_string()];
    header.extend(samples.names().iter().cloned());
    w.write_record(&header)?;
    let mut record = Vec::with_capacity(header.len());
    for i in 0..samples.len() {
        record.clear();
        record.push(samples.chain_of(i).to_string());
        record.push(samples.iteration_of(i).to_string());
        // Display prints the shortest string that parses back to the same f64
        record.extend(samples.draw(i).iter().map(f64::to_string));
        w.write_record(&record)?;
    }
    w.flush().map_err(|e| Error::io(&draws_path, e))?;

    let sidecar = PosteriorSidecar::from_samples(samples, run_config);
    let side_path = dir.join(SIDECAR_FILE);
    let text = serde_json::to_string_pretty(&sidecar)?;
    fs::write(&side_path, text).map_err(|e| Error::io(&side_path, e))?;
    Ok(())
}

/// Reads a posterior written by [`write_posterior`].
pub fn load_posterior(dir: impl AsRef<Path>) -> Result<(PosteriorSamples, PosteriorSidecar)> {
    let dir = dir.as_ref();
    let side_path = dir.join(SIDECAR_FILE);
    let text = fs::read_to_string(&side_path).map_err(|e| Error::io(&side_path, e))?;
    let sidecar: PosteriorSidecar = serde_json::from_str(&text)?;
    let model = Model::new(sidecar.spec.clone(), sidecar.stats.clone())?;
    let n_params = model.spec.parameter_layout().len();
    if sidecar.names.len() != n_params {
        return Err(Error::DimensionMismatch(format!(
            "sidecar lists {} parameters, spec implies {n_params}",
            sidecar.names.len()
        )));
    }

    let draws_path = dir.join(DRAWS_FILE);
    let mut r = csv::Reader::from_path(&draws_path)?;
    let header = r.headers()?.clone();
    if header.len() != n_params + 2 {
        return Err(Error::DimensionMismatch(format!(
            "{} has {} columns, expected {}",
            draws_path.display(),
            header.len(),
            n_params + 2
        )));
    }
    let mut chains: Vec<Vec<Vec<f64>>> = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let row = rec.position().map_or(0, |p| p.line());
        let parse = |i: usize| -> Result<f64> {
            rec[i].trim().parse::<f64>().map_err(|_| Error::NotNumber {
                file: draws_path.display().to_string(),
                row,
                column: header[i].to_string(),
                value: rec[i].to_string(),
            })
        };
        let c = parse(0)? as usize;
        if chains.len() <= c {
            chains.resize(c + 1, Vec::new());
        }
        let draw = (2..rec.len()).map(parse).collect::<Result<Vec<f64>>>()?;
        chains[c].push(draw);
    }
    let samples = PosteriorSamples::from_chains(
        model,
        sidecar.priors.clone(),
        sidecar.config.clone(),
        sidecar.data.clone(),
        chains,
        sidecar.acceptance.clone(),
    )?;
    Ok((samples, sidecar))
}
