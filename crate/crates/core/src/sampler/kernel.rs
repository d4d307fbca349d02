//! Blocked adaptive random-walk Metropolis kernel over an unconstrained vector.
//!
//! Each block proposes `u[idx] + scale * L z` with `z` standard normal and `L`
//! a lower-triangular shape (identity until estimated). Scales and shapes are
//! updated at window boundaries during burn-in only; the retained phase runs
//! a fixed kernel.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Unnormalized log density on the unconstrained space.
pub trait LogDensity {
    fn log_density(&self, u: &[f64]) -> f64;
}

impl<F: Fn(&[f64]) -> f64> LogDensity for F {
    fn log_density(&self, u: &[f64]) -> f64 {
        self(u)
    }
}

/// A group of coordinates updated together.
#[derive(Debug, Clone)]
pub struct Block {
    pub name: String,
    pub indices: Vec<usize>,
    pub scale: f64,
    /// Row-major lower-triangular proposal shape; `None` means identity.
    pub shape: Option<Vec<f64>>,
}

impl Block {
    pub fn new(name: impl Into<String>, indices: Vec<usize>, scale: f64) -> Self {
        Self {
            name: name.into(),
            indices,
            scale,
            shape: None,
        }
    }

    fn dim(&self) -> usize {
        self.indices.len()
    }
}

#[derive(Debug, Clone)]
pub struct ChainSettings {
    pub burn_in: usize,
    pub kept: usize,
    pub adapt_window: usize,
    /// When false the kernel stays at its initial scales throughout.
    pub adapt: bool,
    pub target_acceptance: (f64, f64),
    /// Used in error messages only.
    pub chain_index: usize,
}

#[derive(Debug, Clone)]
pub struct ChainOutput {
    /// Retained states on the unconstrained scale.
    pub draws: Vec<Vec<f64>>,
    /// Retained-phase acceptance rate per block.
    pub acceptance: Vec<f64>,
    /// Final (frozen) blocks.
    pub blocks: Vec<Block>,
}

/// Running mean/covariance for shape estimation.
struct Moments {
    n: f64,
    mean: Vec<f64>,
    cross: Vec<f64>,
}

impl Moments {
    fn new(d: usize) -> Self {
        Self {
            n: 0.0,
            mean: vec![0.0; d],
            cross: vec![0.0; d * d],
        }
    }

    fn push(&mut self, x: &[f64]) {
        let d = x.len();
        self.n += 1.0;
        let delta: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        for (m, dl) in self.mean.iter_mut().zip(&delta) {
            *m += dl / self.n;
        }
        for i in 0..d {
            for j in 0..d {
                self.cross[i * d + j] += delta[i] * (x[j] - self.mean[j]);
            }
        }
    }

    fn covariance(&self) -> Vec<f64> {
        self.cross.iter().map(|c| c / (self.n - 1.0)).collect()
    }
}

/// Cholesky factor of a symmetric positive-definite matrix; `None` if not PD.
pub fn cholesky(a: &[f64], d: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i * d + k] * l[j * d + k]).sum();
            if i == j {
                let v = a[i * d + i] - s;
                if !(v > 0.0) {
                    return None;
                }
                l[i * d + j] = v.sqrt();
            } else {
                l[i * d + j] = (a[i * d + j] - s) / l[j * d + j];
            }
        }
    }
    Some(l)
}

fn propose<R: Rng>(block: &Block, current: &[f64], rng: &mut R, out: &mut [f64]) {
    out.copy_from_slice(current);
    let d = block.dim();
    let z: Vec<f64> = (0..d)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    for (r, &idx) in block.indices.iter().enumerate() {
        let step = match &block.shape {
            Some(l) => (0..=r).map(|c| l[r * d + c] * z[c]).sum::<f64>(),
            None => z[r],
        };
        out[idx] += block.scale * step;
    }
}

/// Runs one chain from `init`; `init` must have finite log density.
pub fn run_chain<T: LogDensity + ?Sized, R: Rng>(
    target: &T,
    mut blocks: Vec<Block>,
    init: Vec<f64>,
    settings: &ChainSettings,
    rng: &mut R,
) -> Result<ChainOutput> {
    let mut state = init;
    let mut lp = target.log_density(&state);
    if !lp.is_finite() {
        return Err(Error::Initialization(1));
    }
    let mut proposal = state.clone();
    let nb = blocks.len();
    let mut window_acc = vec![0usize; nb];
    let mut kept_acc = vec![0usize; nb];
    let mut draws = Vec::with_capacity(settings.kept);
    let mid = 0.5 * (settings.target_acceptance.0 + settings.target_acceptance.1);
    let shape_start = settings.burn_in / 4;
    let mut moments: Vec<Option<Moments>> = blocks
        .iter()
        .map(|b| (b.dim() > 1).then(|| Moments::new(b.dim())))
        .collect();
    let mut shaped = vec![false; nb];

    let total = settings.burn_in + settings.kept;
    for it in 0..total {
        for (b, block) in blocks.iter().enumerate() {
            propose(block, &state, rng, &mut proposal);
            let lp_new = target.log_density(&proposal);
            let log_u: f64 = rng.random::<f64>().ln();
            if lp_new.is_finite() && log_u < lp_new - lp {
                std::mem::swap(&mut state, &mut proposal);
                lp = lp_new;
                window_acc[b] += 1;
                if it >= settings.burn_in {
                    kept_acc[b] += 1;
                }
            }
        }

        if it < settings.burn_in {
            if settings.adapt && it >= shape_start {
                for (m, block) in moments.iter_mut().zip(&blocks) {
                    if let Some(m) = m {
                        let x: Vec<f64> = block.indices.iter().map(|&i| state[i]).collect();
                        m.push(&x);
                    }
                }
            }
        } else {
            draws.push(state.clone());
        }

        if (it + 1) % settings.adapt_window == 0 {
            let in_burn_in = it < settings.burn_in;
            for (b, block) in blocks.iter_mut().enumerate() {
                let rate = window_acc[b] as f64 / settings.adapt_window as f64;
                if !in_burn_in && window_acc[b] == 0 {
                    return Err(Error::Divergence {
                        chain: settings.chain_index,
                        block: block.name.clone(),
                        window: settings.adapt_window,
                    });
                }
                if in_burn_in && settings.adapt {
                    block.scale *= (2.0 * (rate - mid)).exp();
                    if let Some(m) = &moments[b] {
                        let d = block.dim();
                        if m.n >= (20 * d * d).max(200) as f64 {
                            let mut cov = m.covariance();
                            for i in 0..d {
                                cov[i * d + i] += 1e-10;
                            }
                            if let Some(l) = cholesky(&cov, d) {
                                block.shape = Some(l);
                                if !shaped[b] {
                                    block.scale = 2.38 / (d as f64).sqrt();
                                    shaped[b] = true;
                                }
                            }
                        }
                    }
                }
                window_acc[b] = 0;
            }
        }
    }

    let acceptance = kept_acc
        .iter()
        .map(|&a| {
            if settings.kept == 0 {
                0.0
            } else {
                a as f64 / settings.kept as f64
            }
        })
        .collect();
    Ok(ChainOutput {
        draws,
        acceptance,
        blocks,
    })
}
