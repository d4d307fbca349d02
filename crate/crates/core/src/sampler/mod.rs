//! Posterior sampling, convergence diagnostics and posterior summaries.

mod diagnostics;
mod hpd;
mod io;
pub mod kernel;
mod mcmc;
mod summary;

pub use diagnostics::{effective_sample_size, rhat, split_rhat, Diagnostics};
pub(crate) use hpd::extended_real;
pub use hpd::{hpd_interval, Interval};
pub use io::{load_posterior, write_posterior, PosteriorSidecar, DRAWS_FILE, SIDECAR_FILE};
pub use mcmc::run_mcmc;
pub use summary::{posterior_summary, PosteriorSummary, Scale, SummaryRow};

use serde::{Deserialize, Serialize};

use crate::data::CountTable;
use crate::error::{Error, Result};
use crate::model::{Model, ParameterVector, Priors, RawCoefficients};

/// Settings for [`run_mcmc`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub chains: usize,
    /// Retained draws summed over all chains.
    pub kept_draws_total: usize,
    /// Burn-in iterations per chain; proposal scales adapt only here.
    pub burn_in: usize,
    /// Iterations between proposal-scale updates.
    pub adapt_window: usize,
    /// Acceptance band the block scales are steered into.
    pub target_acceptance: (f64, f64),
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            chains: 4,
            kept_draws_total: 100_000,
            burn_in: 10_000,
            adapt_window: 100,
            target_acceptance: (0.2, 0.5),
            seed: 1,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chains < 2 {
            return Err(Error::InvalidConfig(format!(
                "{} chain(s): R-hat needs at least 2",
                self.chains
            )));
        }
        if self.kept_draws_total == 0 || !self.kept_draws_total.is_multiple_of(self.chains) {
            return Err(Error::InvalidConfig(format!(
                "kept draws {} not a positive multiple of {} chains",
                self.kept_draws_total, self.chains
            )));
        }
        if self.adapt_window == 0 || self.burn_in < self.adapt_window {
            return Err(Error::InvalidConfig(format!(
                "burn-in {} shorter than adaptation window {}",
                self.burn_in, self.adapt_window
            )));
        }
        let (lo, hi) = self.target_acceptance;
        if !(0.0 < lo && lo < hi && hi < 1.0) {
            return Err(Error::InvalidConfig(
                "target acceptance band must satisfy 0 < lo < hi < 1".into(),
            ));
        }
        Ok(())
    }

    pub fn draws_per_chain(&self) -> usize {
        self.kept_draws_total / self.chains
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }
}

/// Derives an independent seed for sub-task `index` (a scan candidate, say) from a master seed.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Acceptance rate of one proposal block during the retained phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockAcceptance {
    pub block: String,
    pub per_chain: Vec<f64>,
}

impl BlockAcceptance {
    pub fn mean(&self) -> f64 {
        crate::stats::mean(&self.per_chain)
    }
}

/// Retained draws (natural parameter scale, coefficients standardized) with
/// everything needed to interpret them.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSamples {
    pub model: Model,
    pub priors: Priors,
    pub config: SamplerConfig,
    pub acceptance: Vec<BlockAcceptance>,
    /// Tabulated data the posterior was fitted to.
    pub data: CountTable,
    names: Vec<String>,
    chain: Vec<u32>,
    iteration: Vec<u32>,
    values: Vec<f64>,
}

impl PosteriorSamples {
    /// Assembles samples from per-chain draw matrices (`chains[c][i]` is one packed draw).
    pub fn from_chains(
        model: Model,
        priors: Priors,
        config: SamplerConfig,
        data: CountTable,
        chains: Vec<Vec<Vec<f64>>>,
        acceptance: Vec<BlockAcceptance>,
    ) -> Result<Self> {
        let layout = model.spec.parameter_layout();
        let names = layout.names();
        let mut chain = Vec::new();
        let mut iteration = Vec::new();
        let mut values = Vec::new();
        for (c, draws) in chains.iter().enumerate() {
            for (i, d) in draws.iter().enumerate() {
                if d.len() != names.len() {
                    return Err(Error::DimensionMismatch(format!(
                        "draw has {} values, layout has {}",
                        d.len(),
                        names.len()
                    )));
                }
                chain.push(c as u32);
                iteration.push(i as u32);
                values.extend_from_slice(d);
            }
        }
        Ok(Self {
            model,
            priors,
            config,
            acceptance,
            data,
            names,
            chain,
            iteration,
            values,
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn raw_names(&self) -> Vec<String> {
        self.model.spec.parameter_layout().raw_names()
    }

    pub fn len(&self) -> usize {
        self.chain.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chain.is_empty()
    }

    pub fn n_params(&self) -> usize {
        self.names.len()
    }

    pub fn n_chains(&self) -> usize {
        self.chain
            .iter()
            .map(|&c| c as usize + 1)
            .max()
            .unwrap_or(0)
    }

    pub fn draw(&self, i: usize) -> &[f64] {
        let p = self.n_params();
        &self.values[i * p..(i + 1) * p]
    }

    pub fn chain_of(&self, i: usize) -> usize {
        self.chain[i] as usize
    }

    pub fn iteration_of(&self, i: usize) -> usize {
        self.iteration[i] as usize
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.len()).map(|i| self.draw(i)[j]).collect()
    }

    /// Values of parameter `j` split by chain, in chain-index order.
    pub fn chains(&self, j: usize) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::new(); self.n_chains()];
        for i in 0..self.len() {
            out[self.chain_of(i)].push(self.draw(i)[j]);
        }
        out
    }

    /// Draw indices with chains ordered by content (lexicographic on their
    /// first draw) rather than by label. Reductions that iterate in this order
    /// give bit-identical results when chain labels are permuted.
    pub fn canonical_order(&self) -> Vec<usize> {
        let n_chains = self.n_chains();
        let mut per: Vec<Vec<usize>> = vec![Vec::new(); n_chains];
        for i in 0..self.len() {
            per[self.chain_of(i)].push(i);
        }
        per.sort_by(|a, b| {
            let da = a.first().map(|&i| self.draw(i)).unwrap_or(&[]);
            let db = b.first().map(|&i| self.draw(i)).unwrap_or(&[]);
            da.iter()
                .zip(db)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(da.len().cmp(&db.len()))
        });
        per.into_iter().flatten().collect()
    }

    pub fn parameters(&self, i: usize) -> ParameterVector {
        self.model
            .spec
            .parameter_layout()
            .unpack_unchecked(self.draw(i))
    }

    pub fn raw_coefficients(&self, i: usize) -> Result<RawCoefficients> {
        let nb = self.model.spec.n_beta();
        self.model.raw_coefficients(&self.draw(i)[..nb])
    }

    /// Same draws with chain labels relabeled by `perm` (`new = perm[old]`) and
    /// rows reordered by new label.
    pub fn relabel_chains(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n_chains() {
            return Err(Error::DimensionMismatch(
                "permutation length != chain count".into(),
            ));
        }
        let p = self.n_params();
        let mut per = vec![Vec::new(); perm.len()];
        for i in 0..self.len() {
            per[perm[self.chain_of(i)]].push(self.values[i * p..(i + 1) * p].to_vec());
        }
        let mut acceptance = self.acceptance.clone();
        for a in &mut acceptance {
            let mut v = vec![0.0; a.per_chain.len()];
            for (old, &r) in a.per_chain.iter().enumerate() {
                v[perm[old]] = r;
            }
            a.per_chain = v;
        }
        Self::from_chains(
            self.model.clone(),
            self.priors.clone(),
            self.config.clone(),
            self.data.clone(),
            per,
            acceptance,
        )
    }
}
