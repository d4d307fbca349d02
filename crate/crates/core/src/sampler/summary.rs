use serde::{Deserialize, Serialize};

use super::hpd::{hpd_interval, Interval};
use super::PosteriorSamples;
use std::path::Path;

use crate::error::{Error, Result};
use crate::stats::order_invariant_mean;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Standardized,
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub name: String,
    pub scale: Scale,
    pub mean: f64,
    pub hpd: Interval,
}

/// Posterior mean and 95% HPD per parameter, on both coefficient scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub standardized: Vec<SummaryRow>,
    pub raw: Vec<SummaryRow>,
}

impl PosteriorSummary {
    pub fn raw_row(&self, name: &str) -> Option<&SummaryRow> {
        self.raw.iter().find(|r| r.name == name)
    }

    pub fn standardized_row(&self, name: &str) -> Option<&SummaryRow> {
        self.standardized.iter().find(|r| r.name == name)
    }

    pub fn rows(&self) -> impl Iterator<Item = &SummaryRow> {
        self.standardized.iter().chain(&self.raw)
    }

    /// Columns `name,scale,mean,hpd_lo,hpd_hi`, standardized rows first.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["name", "scale", "mean", "hpd_lo", "hpd_hi"])?;
        for r in self.rows() {
            let scale = match r.scale {
                Scale::Standardized => "standardized",
                Scale::Raw => "raw",
            };
            w.write_record([
                r.name.clone(),
                scale.to_string(),
                r.mean.to_string(),
                r.hpd.lo.to_string(),
                r.hpd.hi.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn render(&self, mut out: impl std::io::Write) -> std::io::Result<()> {
        writeln!(
            out,
            "{:<12} {:>9} {:>9} {:>9}",
            "parameter", "mean", "hpd_lo", "hpd_hi"
        )?;
        for r in &self.raw {
            writeln!(
                out,
                "{:<12} {:>9.3} {:>9.3} {:>9.3}",
                r.name, r.mean, r.hpd.lo, r.hpd.hi
            )?;
        }
        Ok(())
    }
}

fn row(name: &str, scale: Scale, values: &[f64]) -> Result<SummaryRow> {
    Ok(SummaryRow {
        name: name.to_string(),
        scale,
        mean: order_invariant_mean(values),
        hpd: hpd_interval(values, 0.95)?,
    })
}

/// Summarizes every parameter. Raw-scale coefficients are back-transformed
/// draw by draw before summarizing.
pub fn posterior_summary(samples: &PosteriorSamples) -> Result<PosteriorSummary> {
    let nb = samples.model.spec.n_beta();
    let names = samples.names().to_vec();
    let raw_names = samples.raw_names();
    let mut standardized = Vec::with_capacity(names.len());
    for (j, name) in names.iter().enumerate() {
        standardized.push(row(name, Scale::Standardized, &samples.column(j))?);
    }

    let mut raw_cols = vec![Vec::with_capacity(samples.len()); nb];
    for i in 0..samples.len() {
        let r = samples.raw_coefficients(i)?;
        for (col, b) in raw_cols.iter_mut().zip(r.beta) {
            col.push(b);
        }
    }
    let mut raw = Vec::with_capacity(names.len());
    for (j, col) in raw_cols.iter().enumerate() {
        raw.push(row(&raw_names[j], Scale::Raw, col)?);
    }
    for (j, name) in raw_names.iter().enumerate().skip(nb) {
        let mut r = standardized[j].clone();
        r.name = name.clone();
        r.scale = Scale::Raw;
        raw.push(r);
    }
    Ok(PosteriorSummary { standardized, raw })
}
