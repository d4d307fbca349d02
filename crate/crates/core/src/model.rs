//! Robust ordinal regression model.
//!
//! The latent outcome is `z = mu + eps`, with `mu` a polynomial in the two
//! ordinal predictors and `eps ~ (1 - alpha) N(0, sigma_g) + alpha N(0, 3 sigma_g)`.
//! The observed level is the number of thresholds at or below `z`. The latent
//! variable is integrated out analytically, so category probabilities are
//! differences of mixture CDFs.

use std::f64::consts::{LN_2, PI};
use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

use crate::data::{CareLevel, Dataset, DesignCells, StandardizationStats};
use crate::error::{Error, Result};

/// Scale factor between the wide (outlier) and narrow mixture components.
pub const CONTAMINATION_SCALE: f64 = 3.0;

/// Non-intercept polynomial terms of the mean function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Term {
    #[serde(rename = "x1")]
    X1,
    #[serde(rename = "x2")]
    X2,
    #[serde(rename = "x1^2")]
    X1Sq,
    #[serde(rename = "x2^2")]
    X2Sq,
    #[serde(rename = "x1*x2")]
    X1X2,
}

impl Term {
    pub const ALL: [Term; 5] = [Term::X1, Term::X2, Term::X1Sq, Term::X2Sq, Term::X1X2];

    /// Raw value of the term at `(x1, x2)`.
    #[inline]
    pub fn eval(self, x1: f64, x2: f64) -> f64 {
        match self {
            Term::X1 => x1,
            Term::X2 => x2,
            Term::X1Sq => x1 * x1,
            Term::X2Sq => x2 * x2,
            Term::X1X2 => x1 * x2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Term::X1 => "x1",
            Term::X2 => "x2",
            Term::X1Sq => "x1^2",
            Term::X2Sq => "x2^2",
            Term::X1X2 => "x1*x2",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Term::ALL.into_iter().find(|t| t.name() == s.trim())
    }

    /// Lower-order terms this term implies under the heredity principle.
    fn parents(self) -> &'static [Term] {
        match self {
            Term::X1 | Term::X2 => &[],
            Term::X1Sq => &[Term::X1],
            Term::X2Sq => &[Term::X2],
            Term::X1X2 => &[Term::X1, Term::X2],
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How the latent error standard deviation is grouped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaStructure {
    Common,
    ByIntended,
    ByRecommended,
}

impl SigmaStructure {
    pub fn groups(self, k: usize) -> usize {
        match self {
            SigmaStructure::Common => 1,
            _ => k,
        }
    }

    #[inline]
    pub fn group(self, x1: usize, x2: usize) -> usize {
        match self {
            SigmaStructure::Common => 0,
            SigmaStructure::ByIntended => x1,
            SigmaStructure::ByRecommended => x2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SigmaStructure::Common => "common",
            SigmaStructure::ByIntended => "by-intended",
            SigmaStructure::ByRecommended => "by-recommended",
        }
    }
}

/// Declarative model structure: mean terms, sigma grouping, contamination switch.
///
/// The intercept is implicit and always present. Terms are kept in the
/// canonical order of [`Term::ALL`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "ModelSpecRepr", into = "ModelSpecRepr")]
pub struct ModelSpec {
    mean_terms: Vec<Term>,
    sigma: SigmaStructure,
    contamination: bool,
    k: usize,
}

#[derive(Serialize, Deserialize)]
struct ModelSpecRepr {
    mean_terms: Vec<String>,
    sigma: SigmaStructure,
    contamination: bool,
    #[serde(rename = "K", default = "default_k")]
    k: usize,
}

fn default_k() -> usize {
    crate::data::DEFAULT_LEVELS
}

impl TryFrom<ModelSpecRepr> for ModelSpec {
    type Error = Error;

    fn try_from(r: ModelSpecRepr) -> Result<Self> {
        let mut terms = Vec::new();
        for name in &r.mean_terms {
            if matches!(name.trim(), "intercept" | "1") {
                continue;
            }
            terms.push(
                Term::parse(name)
                    .ok_or_else(|| Error::InvalidSpec(format!("unknown mean term `{name}`")))?,
            );
        }
        ModelSpec::new(terms, r.sigma, r.contamination, r.k)
    }
}

impl From<ModelSpec> for ModelSpecRepr {
    fn from(s: ModelSpec) -> Self {
        ModelSpecRepr {
            mean_terms: s.mean_terms.iter().map(|t| t.name().to_string()).collect(),
            sigma: s.sigma,
            contamination: s.contamination,
            k: s.k,
        }
    }
}

impl ModelSpec {
    pub fn new(
        mut terms: Vec<Term>,
        sigma: SigmaStructure,
        contamination: bool,
        k: usize,
    ) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidLevelCount(k));
        }
        terms.sort();
        let before = terms.len();
        terms.dedup();
        if terms.len() != before {
            return Err(Error::InvalidSpec("duplicate mean term".into()));
        }
        Ok(Self {
            mean_terms: terms,
            sigma,
            contamination,
            k,
        })
    }

    /// The structure selected for the telephone-nursing data:
    /// `mu = b0 + b1 x1 + b2 x2 + b3 x2^2`, sigma by intended action, contamination on.
    pub fn selected(k: usize) -> Self {
        Self::new(
            vec![Term::X1, Term::X2, Term::X2Sq],
            SigmaStructure::ByIntended,
            true,
            k,
        )
        .expect("valid built-in spec")
    }

    pub fn terms(&self) -> &[Term] {
        &self.mean_terms
    }

    pub fn sigma_structure(&self) -> SigmaStructure {
        self.sigma
    }

    pub fn contamination(&self) -> bool {
        self.contamination
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of coefficients including the intercept.
    pub fn n_beta(&self) -> usize {
        self.mean_terms.len() + 1
    }

    pub fn n_sigma(&self) -> usize {
        self.sigma.groups(self.k)
    }

    /// Number of free interior thresholds (the outer two are fixed).
    pub fn n_free_thresholds(&self) -> usize {
        self.k.saturating_sub(3)
    }

    pub fn with_terms(&self, terms: Vec<Term>) -> Result<Self> {
        Self::new(terms, self.sigma, self.contamination, self.k)
    }

    pub fn with_sigma(&self, sigma: SigmaStructure) -> Self {
        Self {
            sigma,
            ..self.clone()
        }
    }

    pub fn with_contamination(&self, contamination: bool) -> Self {
        Self {
            contamination,
            ..self.clone()
        }
    }

    /// Higher-order terms present without their lower-order parents.
    /// Reported, not enforced.
    pub fn heredity_violations(&self) -> Vec<Term> {
        self.mean_terms
            .iter()
            .copied()
            .filter(|t| t.parents().iter().any(|p| !self.mean_terms.contains(p)))
            .collect()
    }

    /// Compact label such as `1+x1+x2+x2^2`.
    pub fn terms_label(&self) -> String {
        std::iter::once("1")
            .chain(self.mean_terms.iter().map(|t| t.name()))
            .collect::<Vec<_>>()
            .join("+")
    }

    pub fn parameter_layout(&self) -> ParameterLayout {
        ParameterLayout::new(self)
    }
}

/// Ordered cutpoints θ_0 < … < θ_{K-2} on the latent care-level scale.
///
/// θ_0 = 0.5 and θ_{K-2} = K - 1.5 are pinned; only the interior ones are free.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    values: Vec<f64>,
}

impl Thresholds {
    pub fn lowest_fixed() -> f64 {
        0.5
    }

    pub fn highest_fixed(k: usize) -> f64 {
        k as f64 - 1.5
    }

    /// Builds thresholds for `k` levels from the free interior values.
    pub fn new(k: usize, interior: &[f64]) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidLevelCount(k));
        }
        let n_free = k.saturating_sub(3);
        if interior.len() != n_free {
            return Err(Error::DimensionMismatch(format!(
                "K={k} has {n_free} free thresholds, got {}",
                interior.len()
            )));
        }
        let values = if k == 2 {
            vec![Self::lowest_fixed()]
        } else {
            let mut v = Vec::with_capacity(k - 1);
            v.push(Self::lowest_fixed());
            v.extend_from_slice(interior);
            v.push(Self::highest_fixed(k));
            v
        };
        let t = Self { values };
        if !t.is_ordered() {
            return Err(Error::InvalidParameters(format!(
                "thresholds not strictly increasing: {:?}",
                t.values
            )));
        }
        Ok(t)
    }

    /// Interior thresholds at their prior means `j + 0.5`.
    pub fn midpoints(k: usize) -> Self {
        let interior: Vec<f64> = (1..k.saturating_sub(2)).map(|j| j as f64 + 0.5).collect();
        Self::new(k, &interior).expect("midpoints are ordered")
    }

    /// Unchecked construction from the full value vector (used on sampler hot paths).
    pub(crate) fn from_values_unchecked(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn k(&self) -> usize {
        self.values.len() + 1
    }

    pub fn free(&self) -> &[f64] {
        if self.values.len() <= 2 {
            &[]
        } else {
            &self.values[1..self.values.len() - 1]
        }
    }

    pub fn is_ordered(&self) -> bool {
        self.values.iter().all(|v| v.is_finite()) && self.values.windows(2).all(|w| w[0] < w[1])
    }

    /// θ_k, extended with θ_{-1} = -∞ and θ_{K-1} = +∞.
    #[inline]
    pub fn extended(&self, idx: isize) -> f64 {
        if idx < 0 {
            f64::NEG_INFINITY
        } else if idx as usize >= self.values.len() {
            f64::INFINITY
        } else {
            self.values[idx as usize]
        }
    }
}

/// One point in parameter space. `beta` is on the standardized predictor scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    pub beta: Vec<f64>,
    pub thresholds: Thresholds,
    pub sigma: Vec<f64>,
    pub alpha: f64,
}

impl ParameterVector {
    pub fn validate(&self, spec: &ModelSpec) -> Result<()> {
        if self.beta.len() != spec.n_beta() {
            return Err(Error::DimensionMismatch(format!(
                "spec has {} coefficients, got {}",
                spec.n_beta(),
                self.beta.len()
            )));
        }
        if self.sigma.len() != spec.n_sigma() {
            return Err(Error::DimensionMismatch(format!(
                "spec has {} sigma groups, got {}",
                spec.n_sigma(),
                self.sigma.len()
            )));
        }
        if self.thresholds.k() != spec.k() {
            return Err(Error::DimensionMismatch(
                "threshold count does not match K".into(),
            ));
        }
        if !self.thresholds.is_ordered() {
            return Err(Error::InvalidParameters("thresholds not ordered".into()));
        }
        if self.sigma.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidParameters("sigma must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) || (!spec.contamination() && self.alpha != 0.0) {
            return Err(Error::InvalidParameters(format!(
                "alpha {} invalid",
                self.alpha
            )));
        }
        if self.beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidParameters("non-finite coefficient".into()));
        }
        Ok(())
    }
}

/// Names and packing order of the free parameters of a spec.
///
/// Order: coefficients, free thresholds, sigma groups, alpha (when contaminated).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParameterLayout {
    spec: ModelSpec,
}

impl ParameterLayout {
    fn new(spec: &ModelSpec) -> Self {
        Self { spec: spec.clone() }
    }

    pub fn n_beta(&self) -> usize {
        self.spec.n_beta()
    }

    pub fn n_theta(&self) -> usize {
        self.spec.n_free_thresholds()
    }

    pub fn n_sigma(&self) -> usize {
        self.spec.n_sigma()
    }

    pub fn has_alpha(&self) -> bool {
        self.spec.contamination()
    }

    pub fn len(&self) -> usize {
        self.n_beta() + self.n_theta() + self.n_sigma() + usize::from(self.has_alpha())
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn theta_offset(&self) -> usize {
        self.n_beta()
    }

    pub fn sigma_offset(&self) -> usize {
        self.n_beta() + self.n_theta()
    }

    pub fn alpha_index(&self) -> Option<usize> {
        self.has_alpha()
            .then(|| self.sigma_offset() + self.n_sigma())
    }

    fn beta_names(&self, prefix: &str) -> Vec<String> {
        std::iter::once(format!("{prefix}_0"))
            .chain(self.spec.terms().iter().map(|t| format!("{prefix}_{t}")))
            .collect()
    }

    fn tail_names(&self) -> Vec<String> {
        let mut v: Vec<String> = (1..=self.n_theta()).map(|j| format!("theta_{j}")).collect();
        if self.n_sigma() == 1 {
            v.push("sigma".into());
        } else {
            v.extend((0..self.n_sigma()).map(|g| format!("sigma_{g}")));
        }
        if self.has_alpha() {
            v.push("alpha".into());
        }
        v
    }

    /// Column names with coefficients on the standardized scale (`b_*`).
    pub fn names(&self) -> Vec<String> {
        let mut v = self.beta_names("b");
        v.extend(self.tail_names());
        v
    }

    /// Column names with coefficients on the raw scale (`beta_*`).
    pub fn raw_names(&self) -> Vec<String> {
        let mut v = self.beta_names("beta");
        v.extend(self.tail_names());
        v
    }

    pub fn pack(&self, p: &ParameterVector) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        v.extend_from_slice(&p.beta);
        v.extend_from_slice(p.thresholds.free());
        v.extend_from_slice(&p.sigma);
        if self.has_alpha() {
            v.push(p.alpha);
        }
        v
    }

    pub fn unpack(&self, v: &[f64]) -> Result<ParameterVector> {
        if v.len() != self.len() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} parameters, got {}",
                self.len(),
                v.len()
            )));
        }
        let p = self.unpack_unchecked(v);
        p.validate(&self.spec)?;
        Ok(p)
    }

    pub(crate) fn unpack_unchecked(&self, v: &[f64]) -> ParameterVector {
        let k = self.spec.k();
        let nb = self.n_beta();
        let nt = self.n_theta();
        let ns = self.n_sigma();
        let mut thr = Vec::with_capacity(k - 1);
        thr.push(Thresholds::lowest_fixed());
        if k > 2 {
            thr.extend_from_slice(&v[nb..nb + nt]);
            thr.push(Thresholds::highest_fixed(k));
        }
        ParameterVector {
            beta: v[..nb].to_vec(),
            thresholds: Thresholds::from_values_unchecked(thr),
            sigma: v[nb + nt..nb + nt + ns].to_vec(),
            alpha: if self.has_alpha() {
                v[nb + nt + ns]
            } else {
                0.0
            },
        }
    }
}

/// Coefficients of the mean function on the raw care-level scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawCoefficients {
    pub terms: Vec<Term>,
    /// `beta[0]` is the intercept; `beta[j]` multiplies `terms[j - 1]`.
    pub beta: Vec<f64>,
}

impl RawCoefficients {
    pub fn new(terms: Vec<Term>, beta: Vec<f64>) -> Result<Self> {
        if beta.len() != terms.len() + 1 {
            return Err(Error::DimensionMismatch(format!(
                "{} terms need {} coefficients, got {}",
                terms.len(),
                terms.len() + 1,
                beta.len()
            )));
        }
        Ok(Self { terms, beta })
    }

    /// Coefficient of `term`, zero when absent.
    pub fn coefficient(&self, term: Term) -> f64 {
        self.terms
            .iter()
            .position(|&t| t == term)
            .map_or(0.0, |j| self.beta[j + 1])
    }

    pub fn intercept(&self) -> f64 {
        self.beta[0]
    }
}

/// Anything that evaluates the latent mean at a design point.
pub trait MeanFunction {
    fn mean_at(&self, x1: f64, x2: f64) -> Result<f64>;
}

impl MeanFunction for RawCoefficients {
    fn mean_at(&self, x1: f64, x2: f64) -> Result<f64> {
        if self.beta.len() != self.terms.len() + 1 {
            return Err(Error::DimensionMismatch(
                "coefficient/term length mismatch".into(),
            ));
        }
        Ok(self.beta[0]
            + self
                .terms
                .iter()
                .zip(&self.beta[1..])
                .map(|(t, b)| b * t.eval(x1, x2))
                .sum::<f64>())
    }
}

/// Standardized-scale coefficients paired with their standardization stats.
#[derive(Debug, Clone, Copy)]
pub struct StandardizedCoefficients<'a> {
    pub beta: &'a [f64],
    pub stats: &'a StandardizationStats,
}

impl MeanFunction for StandardizedCoefficients<'_> {
    fn mean_at(&self, x1: f64, x2: f64) -> Result<f64> {
        if self.beta.len() != self.stats.terms.len() + 1 {
            return Err(Error::DimensionMismatch(
                "coefficient/term length mismatch".into(),
            ));
        }
        Ok(self.beta[0]
            + self
                .stats
                .features(x1, x2)
                .zip(&self.beta[1..])
                .map(|(z, b)| b * z)
                .sum::<f64>())
    }
}

/// Mean utilized care on the latent scale at `(x1, x2)`.
pub fn mean_utilized_care(coefs: &impl MeanFunction, x1: f64, x2: f64) -> Result<f64> {
    coefs.mean_at(x1, x2)
}

/// Maps standardized-scale coefficients to the raw care-level scale:
/// `beta_j = b_j / s_j` and `beta_0 = b_0 - sum_j b_j m_j / s_j`.
pub fn back_transform(beta_std: &[f64], stats: &StandardizationStats) -> Result<RawCoefficients> {
    if beta_std.len() != stats.terms.len() + 1
        || stats.means.len() != stats.terms.len()
        || stats.sds.len() != stats.terms.len()
    {
        return Err(Error::DimensionMismatch(format!(
            "{} coefficients for {} standardized columns",
            beta_std.len(),
            stats.terms.len()
        )));
    }
    let mut beta = Vec::with_capacity(beta_std.len());
    let mut intercept = beta_std[0];
    beta.push(0.0);
    for ((b, m), s) in beta_std[1..].iter().zip(&stats.means).zip(&stats.sds) {
        intercept -= b * m / s;
        beta.push(b / s);
    }
    beta[0] = intercept;
    RawCoefficients::new(stats.terms.clone(), beta)
}

/// Inverse of [`back_transform`].
pub fn forward_transform(raw: &RawCoefficients, stats: &StandardizationStats) -> Result<Vec<f64>> {
    if raw.terms != stats.terms {
        return Err(Error::DimensionMismatch(
            "raw terms differ from stats terms".into(),
        ));
    }
    let mut b = Vec::with_capacity(raw.beta.len());
    let mut b0 = raw.beta[0];
    b.push(0.0);
    for ((beta, m), s) in raw.beta[1..].iter().zip(&stats.means).zip(&stats.sds) {
        b0 += beta * m;
        b.push(beta * s);
    }
    b[0] = b0;
    Ok(b)
}

/// Standard normal CDF via the complementary error function.
#[inline]
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// P(a < Z < b) for standard normal Z, evaluated on the tail that avoids cancellation.
#[inline]
fn normal_interval(a: f64, b: f64) -> f64 {
    if a >= 0.0 {
        std_normal_cdf(-a) - std_normal_cdf(-b)
    } else if b <= 0.0 {
        std_normal_cdf(b) - std_normal_cdf(a)
    } else {
        1.0 - std_normal_cdf(a) - std_normal_cdf(-b)
    }
}

/// Category probabilities into `out` without input validation.
#[inline]
pub(crate) fn category_probabilities_into(
    mu: f64,
    sigma: f64,
    alpha: f64,
    thresholds: &Thresholds,
    out: &mut [f64],
) {
    let wide = CONTAMINATION_SCALE * sigma;
    for (y, slot) in out.iter_mut().enumerate() {
        let lo = thresholds.extended(y as isize - 1) - mu;
        let hi = thresholds.extended(y as isize) - mu;
        let narrow = normal_interval(lo / sigma, hi / sigma);
        *slot = if alpha > 0.0 {
            (1.0 - alpha) * narrow + alpha * normal_interval(lo / wide, hi / wide)
        } else {
            narrow
        };
    }
}

/// Outcome probabilities P(y = k), k = 0..K-1, for latent mean `mu`, group sd `sigma`,
/// contamination weight `alpha`.
pub fn outcome_probabilities(
    mu: f64,
    sigma: f64,
    alpha: f64,
    thresholds: &Thresholds,
) -> Result<Vec<f64>> {
    if !mu.is_finite() {
        return Err(Error::InvalidParameters(format!("non-finite mean {mu}")));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameters(format!(
            "sigma {sigma} must be positive"
        )));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParameters(format!(
            "alpha {alpha} outside [0, 1]"
        )));
    }
    if !thresholds.is_ordered() {
        return Err(Error::InvalidParameters("thresholds not ordered".into()));
    }
    let mut out = vec![0.0; thresholds.k()];
    category_probabilities_into(mu, sigma, alpha, thresholds, &mut out);
    Ok(out)
}

/// A spec bound to the standardization of the data it is fitted on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub spec: ModelSpec,
    pub stats: StandardizationStats,
}

impl Model {
    pub fn new(spec: ModelSpec, stats: StandardizationStats) -> Result<Self> {
        if stats.terms != spec.terms() {
            return Err(Error::DimensionMismatch(
                "standardization terms differ from spec terms".into(),
            ));
        }
        Ok(Self { spec, stats })
    }

    /// Standardizes predictors on `data` and binds the spec to them.
    pub fn for_data(spec: &ModelSpec, data: &Dataset) -> Result<Self> {
        if spec.k() != data.k() {
            return Err(Error::DimensionMismatch(format!(
                "spec K={} but data K={}",
                spec.k(),
                data.k()
            )));
        }
        let (_, stats) = crate::data::build_design_matrix(data, spec)?;
        Self::new(spec.clone(), stats)
    }

    pub fn mean(&self, beta: &[f64], x1: f64, x2: f64) -> Result<f64> {
        StandardizedCoefficients {
            beta,
            stats: &self.stats,
        }
        .mean_at(x1, x2)
    }

    pub fn raw_coefficients(&self, beta: &[f64]) -> Result<RawCoefficients> {
        back_transform(beta, &self.stats)
    }

    /// P(y = k | x1, x2) under `params`, with the sigma group picked by the spec.
    pub fn category_probabilities(
        &self,
        params: &ParameterVector,
        x1: CareLevel,
        x2: CareLevel,
    ) -> Result<Vec<f64>> {
        params.validate(&self.spec)?;
        let mu = self.mean(&params.beta, x1.as_f64(), x2.as_f64())?;
        let g = self.spec.sigma_structure().group(x1.get(), x2.get());
        outcome_probabilities(mu, params.sigma[g], params.alpha, &params.thresholds)
    }

    /// Total and pointwise log-likelihood of `data`.
    pub fn log_likelihood(
        &self,
        params: &ParameterVector,
        data: &Dataset,
    ) -> Result<LogLikelihood> {
        params.validate(&self.spec)?;
        if data.k() != self.spec.k() {
            return Err(Error::DimensionMismatch(
                "data K differs from spec K".into(),
            ));
        }
        let eval = CellEvaluator::new(self, data);
        let mut table = vec![0.0; eval.len() * eval.k];
        eval.cell_log_probs(params, &mut table);
        let mut index = std::collections::HashMap::new();
        for (c, &(a, b)) in eval.cells.points.iter().enumerate() {
            index.insert((a, b), c);
        }
        let pointwise: Vec<f64> = data
            .observations()
            .iter()
            .map(|o| table[index[&(o.intended, o.recommended)] * eval.k + o.outcome.get()])
            .collect();
        Ok(LogLikelihood {
            total: pointwise.iter().sum(),
            pointwise,
        })
    }
}

/// Free-function form of [`Model::category_probabilities`].
pub fn category_probabilities(
    model: &Model,
    params: &ParameterVector,
    x1: CareLevel,
    x2: CareLevel,
) -> Result<Vec<f64>> {
    model.category_probabilities(params, x1, x2)
}

/// Free-function form of [`Model::log_likelihood`].
pub fn log_likelihood(
    model: &Model,
    params: &ParameterVector,
    data: &Dataset,
) -> Result<LogLikelihood> {
    model.log_likelihood(params, data)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogLikelihood {
    pub total: f64,
    pub pointwise: Vec<f64>,
}

/// Likelihood evaluation over the distinct design points of a dataset.
///
/// Holds the standardized features per point so that each evaluation costs
/// one dot product and K mixture-CDF differences per point.
#[derive(Debug, Clone)]
pub struct CellEvaluator {
    pub(crate) k: usize,
    pub(crate) cells: DesignCells,
    features: Vec<f64>,
    groups: Vec<usize>,
    n_beta: usize,
}

impl CellEvaluator {
    pub fn new(model: &Model, data: &Dataset) -> Self {
        let cells = DesignCells::from_dataset(data);
        let n_beta = model.spec.n_beta();
        let mut features = Vec::with_capacity(cells.len() * n_beta);
        let mut groups = Vec::with_capacity(cells.len());
        for &(a, b) in &cells.points {
            features.push(1.0);
            features.extend(model.stats.features(a.as_f64(), b.as_f64()));
            groups.push(model.spec.sigma_structure().group(a.get(), b.get()));
        }
        Self {
            k: data.k(),
            cells,
            features,
            groups,
            n_beta,
        }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cells(&self) -> &DesignCells {
        &self.cells
    }

    #[inline]
    fn mu(&self, beta: &[f64], cell: usize) -> f64 {
        let f = &self.features[cell * self.n_beta..(cell + 1) * self.n_beta];
        f.iter().zip(beta).map(|(a, b)| a * b).sum()
    }

    /// Category probabilities for every cell, row-major `cells × K`.
    pub fn cell_probs(&self, params: &ParameterVector, out: &mut [f64]) {
        for c in 0..self.len() {
            let mu = self.mu(&params.beta, c);
            category_probabilities_into(
                mu,
                params.sigma[self.groups[c]],
                params.alpha,
                &params.thresholds,
                &mut out[c * self.k..(c + 1) * self.k],
            );
        }
    }

    pub fn cell_log_probs(&self, params: &ParameterVector, out: &mut [f64]) {
        self.cell_probs(params, out);
        out.iter_mut().for_each(|p| *p = p.ln());
    }

    /// Total log-likelihood; `-inf` when an observed category has zero probability.
    pub fn log_likelihood(&self, params: &ParameterVector) -> f64 {
        let mut probs = vec![0.0; self.k];
        let mut total = 0.0;
        for c in 0..self.len() {
            let mu = self.mu(&params.beta, c);
            category_probabilities_into(
                mu,
                params.sigma[self.groups[c]],
                params.alpha,
                &params.thresholds,
                &mut probs,
            );
            for (y, &n) in self.cells.counts_at(c).iter().enumerate() {
                if n > 0 {
                    total += n as f64 * probs[y].ln();
                }
            }
        }
        if total.is_nan() {
            f64::NEG_INFINITY
        } else {
            total
        }
    }
}

/// Prior hyperparameters. Coefficient priors apply on the standardized scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Priors {
    /// Cauchy scale for the intercept.
    pub intercept_scale: f64,
    /// Cauchy scale for every slope.
    pub slope_scale: f64,
    /// Normal sd for free thresholds; the mean of θ_j is `j + 0.5`.
    pub threshold_sd: f64,
    /// Beta(a, b) prior on the contamination weight.
    pub alpha_shape: (f64, f64),
    /// Upper bound of the uniform prior on each sigma.
    pub sigma_upper: f64,
}

impl Default for Priors {
    fn default() -> Self {
        Self {
            intercept_scale: 10.0,
            slope_scale: 2.5,
            threshold_sd: 2.0,
            alpha_shape: (1.0, 9.0),
            sigma_upper: 50.0,
        }
    }
}

impl Priors {
    /// Prior (mean, sd) of threshold θ_j.
    pub fn threshold_prior(&self, j: usize) -> (f64, f64) {
        (j as f64 + 0.5, self.threshold_sd)
    }
}

fn cauchy_ln_pdf(x: f64, scale: f64) -> f64 {
    let z = x / scale;
    -(PI * scale * (1.0 + z * z)).ln()
}

fn normal_ln_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * z * z - sd.ln() - 0.5 * (LN_2 + PI.ln())
}

fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

fn beta_ln_pdf(x: f64, a: f64, b: f64) -> f64 {
    if !(0.0..=1.0).contains(&x) {
        return f64::NEG_INFINITY;
    }
    ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + xlogy(a - 1.0, x) + xlogy(b - 1.0, 1.0 - x)
}

/// Sum of prior log-densities of the free parameters; `-inf` outside the support.
pub fn log_prior(params: &ParameterVector, spec: &ModelSpec, priors: &Priors) -> f64 {
    if params.beta.len() != spec.n_beta()
        || params.sigma.len() != spec.n_sigma()
        || params.thresholds.k() != spec.k()
        || !params.thresholds.is_ordered()
    {
        return f64::NEG_INFINITY;
    }
    let mut lp = cauchy_ln_pdf(params.beta[0], priors.intercept_scale);
    lp += params.beta[1..]
        .iter()
        .map(|&b| cauchy_ln_pdf(b, priors.slope_scale))
        .sum::<f64>();
    for (i, &t) in params.thresholds.free().iter().enumerate() {
        let (m, s) = priors.threshold_prior(i + 1);
        lp += normal_ln_pdf(t, m, s);
    }
    for &s in &params.sigma {
        if !(s > 0.0 && s < priors.sigma_upper) {
            return f64::NEG_INFINITY;
        }
        lp -= priors.sigma_upper.ln();
    }
    if spec.contamination() {
        lp += beta_ln_pdf(params.alpha, priors.alpha_shape.0, priors.alpha_shape.1);
    } else if params.alpha != 0.0 {
        return f64::NEG_INFINITY;
    }
    if lp.is_nan() {
        f64::NEG_INFINITY
    } else {
        lp
    }
}
