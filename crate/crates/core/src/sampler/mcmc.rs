use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::diagnostics::Diagnostics;
use super::kernel::{run_chain, Block, ChainSettings, LogDensity};
use super::{BlockAcceptance, PosteriorSamples, SamplerConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{
    log_prior, CellEvaluator, Model, ModelSpec, ParameterLayout, ParameterVector, Priors,
    Thresholds,
};

const INIT_ATTEMPTS: usize = 100;

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Log posterior on the unconstrained scale: coefficients and free thresholds
/// as-is, `ln sigma`, `logit alpha`, with the change-of-variable Jacobians.
struct OrdinalPosterior<'a> {
    eval: CellEvaluator,
    layout: ParameterLayout,
    spec: &'a ModelSpec,
    priors: &'a Priors,
}

impl OrdinalPosterior<'_> {
    fn to_natural(&self, u: &[f64]) -> Vec<f64> {
        let mut v = u.to_vec();
        let so = self.layout.sigma_offset();
        for s in &mut v[so..so + self.layout.n_sigma()] {
            *s = s.exp();
        }
        if let Some(a) = self.layout.alpha_index() {
            v[a] = 1.0 / (1.0 + (-u[a]).exp());
        }
        v
    }

    fn to_unconstrained(&self, v: &[f64]) -> Vec<f64> {
        let mut u = v.to_vec();
        let so = self.layout.sigma_offset();
        for s in &mut u[so..so + self.layout.n_sigma()] {
            *s = s.ln();
        }
        if let Some(a) = self.layout.alpha_index() {
            u[a] = (v[a] / (1.0 - v[a])).ln();
        }
        u
    }

    fn params(&self, u: &[f64]) -> ParameterVector {
        self.layout.unpack_unchecked(&self.to_natural(u))
    }
}

impl LogDensity for OrdinalPosterior<'_> {
    fn log_density(&self, u: &[f64]) -> f64 {
        let p = self.params(u);
        let lp = log_prior(&p, self.spec, self.priors);
        if !lp.is_finite() {
            return f64::NEG_INFINITY;
        }
        let so = self.layout.sigma_offset();
        let mut jac: f64 = u[so..so + self.layout.n_sigma()].iter().sum();
        if let Some(a) = self.layout.alpha_index() {
            // d alpha / d logit = alpha (1 - alpha)
            jac -= softplus(-u[a]) + softplus(u[a]);
            if p.alpha <= 0.0 || p.alpha >= 1.0 {
                return f64::NEG_INFINITY;
            }
        }
        let ll = self.eval.log_likelihood(&p);
        let total = ll + lp + jac;
        if total.is_nan() {
            f64::NEG_INFINITY
        } else {
            total
        }
    }
}

fn blocks_for(layout: &ParameterLayout) -> Vec<Block> {
    let mut blocks = vec![Block::new("beta", (0..layout.n_beta()).collect(), 0.05)];
    for j in 0..layout.n_theta() {
        blocks.push(Block::new(
            format!("theta_{}", j + 1),
            vec![layout.theta_offset() + j],
            0.1,
        ));
    }
    for g in 0..layout.n_sigma() {
        let name = if layout.n_sigma() == 1 {
            "sigma".to_string()
        } else {
            format!("sigma_{g}")
        };
        blocks.push(Block::new(name, vec![layout.sigma_offset() + g], 0.3));
    }
    if let Some(a) = layout.alpha_index() {
        blocks.push(Block::new("alpha", vec![a], 0.8));
    }
    blocks
}

/// Jittered starting point around β≈0, θ_j = j + 0.5, σ = 1, α = 0.1.
fn initial_point<R: Rng>(layout: &ParameterLayout, k: usize, rng: &mut R) -> Vec<f64> {
    let mut v = Vec::with_capacity(layout.len());
    for _ in 0..layout.n_beta() {
        v.push(0.5 * rng.sample::<f64, _>(StandardNormal));
    }
    let n_theta = layout.n_theta();
    let mut thetas: Vec<f64> = (1..=n_theta)
        .map(|j| j as f64 + 0.5 + rng.random_range(-0.25..0.25))
        .collect();
    thetas.sort_by(f64::total_cmp);
    debug_assert!(Thresholds::new(k, &thetas).is_ok());
    v.extend(thetas);
    for _ in 0..layout.n_sigma() {
        v.push(rng.random_range(-0.5f64..0.5).exp());
    }
    if layout.has_alpha() {
        v.push(0.1 * rng.random_range(-0.5f64..0.5).exp());
    }
    v
}

struct ChainResult {
    draws: Vec<Vec<f64>>,
    acceptance: Vec<f64>,
}

fn run_one_chain(
    target: &OrdinalPosterior<'_>,
    config: &SamplerConfig,
    chain: usize,
) -> Result<ChainResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(chain as u64 + 1);
    let k = target.spec.k();

    let mut init = None;
    for _ in 0..INIT_ATTEMPTS {
        let v = initial_point(&target.layout, k, &mut rng);
        let u = target.to_unconstrained(&v);
        if target.log_density(&u).is_finite() {
            init = Some(u);
            break;
        }
    }
    let init = init.ok_or(Error::Initialization(INIT_ATTEMPTS))?;

    let settings = ChainSettings {
        burn_in: config.burn_in,
        kept: config.draws_per_chain(),
        adapt_window: config.adapt_window,
        adapt: true,
        target_acceptance: config.target_acceptance,
        chain_index: chain,
    };
    let out = run_chain(
        target,
        blocks_for(&target.layout),
        init,
        &settings,
        &mut rng,
    )?;
    let draws = out.draws.iter().map(|u| target.to_natural(u)).collect();
    Ok(ChainResult {
        draws,
        acceptance: out.acceptance,
    })
}

/// Fits `spec` to `data` by blocked adaptive random-walk Metropolis.
///
/// Chains run in parallel on independent ChaCha streams of `config.seed`, so
/// the output is bit-identical for identical inputs regardless of scheduling.
pub fn run_mcmc(
    data: &Dataset,
    spec: &ModelSpec,
    priors: &Priors,
    config: &SamplerConfig,
) -> Result<(PosteriorSamples, Diagnostics)> {
    config.validate()?;
    let model = Model::for_data(spec, data)?;
    let target = OrdinalPosterior {
        eval: CellEvaluator::new(&model, data),
        layout: spec.parameter_layout(),
        spec,
        priors,
    };

    let results: Vec<ChainResult> = (0..config.chains)
        .into_par_iter()
        .map(|c| run_one_chain(&target, config, c))
        .collect::<Result<_>>()?;

    let block_names: Vec<String> = blocks_for(&target.layout)
        .into_iter()
        .map(|b| b.name)
        .collect();
    let acceptance = block_names
        .into_iter()
        .enumerate()
        .map(|(b, block)| BlockAcceptance {
            block,
            per_chain: results.iter().map(|r| r.acceptance[b]).collect(),
        })
        .collect();
    let chains = results.into_iter().map(|r| r.draws).collect();
    let samples = PosteriorSamples::from_chains(
        model,
        priors.clone(),
        config.clone(),
        data.count_table(),
        chains,
        acceptance,
    )?;
    let diagnostics = Diagnostics::compute(&samples)?;
    Ok((samples, diagnostics))
}
