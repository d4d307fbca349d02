//! Threshold curves, their derivatives and cost scenarios.
//!
//! For the mean `b0 + b1 x1 + b2 x2 + b3 x2^2`, threshold `k` traces the curve
//! `b3 x2^2 + b2 x2 + (b0 + b1 x1 - theta_k) = 0` in the `(x1, x2)` plane.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{CellEvaluator, RawCoefficients, Term, Thresholds};
use crate::sampler::{hpd_interval, Interval, PosteriorSamples};
use crate::stats::order_invariant_mean;

/// Raw-scale coefficients of a mean that is linear in `x1` and at most quadratic in `x2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveCoefficients {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
}

impl CurveCoefficients {
    pub fn new(b0: f64, b1: f64, b2: f64, b3: f64) -> Self {
        Self { b0, b1, b2, b3 }
    }

    /// Fails when the mean has `x1^2` or `x1*x2` terms, which make the curve non-quadratic in `x2`.
    pub fn from_raw(raw: &RawCoefficients) -> Result<Self> {
        if raw.terms.contains(&Term::X1Sq) || raw.terms.contains(&Term::X1X2) {
            return Err(Error::InvalidSpec(
                "threshold curves need a mean without x1^2 and x1*x2 terms".into(),
            ));
        }
        Ok(Self {
            b0: raw.intercept(),
            b1: raw.coefficient(Term::X1),
            b2: raw.coefficient(Term::X2),
            b3: raw.coefficient(Term::X2Sq),
        })
    }

    /// Constant term of the curve equation at `x1`.
    fn constant(&self, theta: f64, x1: f64) -> f64 {
        self.b0 + self.b1 * x1 - theta
    }

    fn discriminant(&self, theta: f64, x1: f64) -> f64 {
        self.b2 * self.b2 - 4.0 * self.b3 * self.constant(theta, x1)
    }
}

fn threshold(thresholds: &Thresholds, k: usize) -> Result<f64> {
    thresholds.values().get(k).copied().ok_or_else(|| {
        Error::InvalidParameters(format!(
            "threshold index {k} out of range (K-1 = {})",
            thresholds.values().len()
        ))
    })
}

/// Real `x2` roots of threshold curve `k` at `x1`, ascending.
pub fn curve_points(
    coefs: &CurveCoefficients,
    thresholds: &Thresholds,
    k: usize,
    x1: f64,
) -> Result<Vec<f64>> {
    let c = coefs.constant(threshold(thresholds, k)?, x1);
    let (a, b) = (coefs.b3, coefs.b2);
    if a == 0.0 {
        if b == 0.0 {
            return Err(Error::NoCurve(format!(
                "mean does not depend on x2 (constant term {c})"
            )));
        }
        return Ok(vec![-c / b]);
    }
    let d = b * b - 4.0 * a * c;
    if d < 0.0 {
        return Ok(Vec::new());
    }
    if d == 0.0 {
        return Ok(vec![-b / (2.0 * a)]);
    }
    let q = -0.5 * (b + b.signum() * d.sqrt());
    let (r1, r2) = if q == 0.0 {
        // b = 0: symmetric roots
        let r = (-c / a).sqrt();
        (-r, r)
    } else {
        (q / a, c / q)
    };
    Ok(if r1 <= r2 { vec![r1, r2] } else { vec![r2, r1] })
}

/// The root `(-b2 + sqrt(D)) / (2 b3)` whose slope in `x1` is `-b1 / sqrt(D)`;
/// `None` where the curve is absent.
pub fn branch_root(
    coefs: &CurveCoefficients,
    thresholds: &Thresholds,
    k: usize,
    x1: f64,
) -> Result<Option<f64>> {
    let theta = threshold(thresholds, k)?;
    let c = coefs.constant(theta, x1);
    let (a, b) = (coefs.b3, coefs.b2);
    if a == 0.0 {
        return Ok((b != 0.0).then(|| -c / b));
    }
    let d = coefs.discriminant(theta, x1);
    if d < 0.0 {
        return Ok(None);
    }
    let s = d.sqrt();
    Ok(Some(if b >= 0.0 && b + s != 0.0 {
        // rationalized to avoid cancellation between -b and sqrt(D)
        -2.0 * c / (b + s)
    } else {
        (-b + s) / (2.0 * a)
    }))
}

/// `dx2/dx1` along threshold curve `k` at `x1`: `-b1 / sqrt(D)`, or `-inf`
/// where the discriminant is not positive (no curve at this `x1`).
pub fn slope(coefs: &CurveCoefficients, thresholds: &Thresholds, k: usize, x1: f64) -> Result<f64> {
    let d = coefs.discriminant(threshold(thresholds, k)?, x1);
    Ok(if d > 0.0 {
        -coefs.b1 / d.sqrt()
    } else {
        f64::NEG_INFINITY
    })
}

/// `dx1/dx2 = (-b2 - 2 b3 x2) / b1`, the same for every threshold; `None` when `b1 = 0`.
pub fn reciprocal_slope(coefs: &CurveCoefficients, x2: f64) -> Option<f64> {
    (coefs.b1 != 0.0).then(|| (-coefs.b2 - 2.0 * coefs.b3 * x2) / coefs.b1)
}

/// Posterior mean and 95% HPD of a derivative at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeCell {
    /// Threshold index; `None` for reciprocal slopes.
    pub k: Option<usize>,
    /// `x1` for slopes, `x2` for reciprocal slopes.
    pub at: usize,
    #[serde(with = "crate::sampler::extended_real")]
    pub mean: f64,
    pub hpd: Interval,
    /// Draws where the curve is absent (slopes) or `b1 = 0` (reciprocals).
    pub undefined: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeTable {
    pub slopes: Vec<DerivativeCell>,
    pub reciprocals: Vec<DerivativeCell>,
}

impl DerivativeTable {
    pub fn slope_at(&self, k: usize, x1: usize) -> Option<&DerivativeCell> {
        self.slopes.iter().find(|c| c.k == Some(k) && c.at == x1)
    }

    pub fn reciprocal_at(&self, x2: usize) -> Option<&DerivativeCell> {
        self.reciprocals.iter().find(|c| c.at == x2)
    }

    pub fn render(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "slope dx2/dx1")?;
        for c in &self.slopes {
            writeln!(
                out,
                "  k={} x1={}  {:>9.3}  ({:.3}, {:.3})",
                c.k.unwrap_or(0),
                c.at,
                c.mean,
                c.hpd.lo,
                c.hpd.hi
            )?;
        }
        writeln!(out, "reciprocal dx1/dx2")?;
        for c in &self.reciprocals {
            writeln!(
                out,
                "  x2={}  {:>9.3}  ({:.3}, {:.3})  undefined {}",
                c.at, c.mean, c.hpd.lo, c.hpd.hi, c.undefined
            )?;
        }
        Ok(())
    }
}

fn summarize(
    k: Option<usize>,
    at: usize,
    values: &[f64],
    undefined: usize,
) -> Result<DerivativeCell> {
    let mean = if values.contains(&f64::NEG_INFINITY) {
        f64::NEG_INFINITY
    } else {
        order_invariant_mean(values)
    };
    Ok(DerivativeCell {
        k,
        at,
        mean,
        hpd: hpd_interval(values, 0.95)?,
        undefined,
    })
}

fn curve_draws(samples: &PosteriorSamples) -> Result<Vec<(CurveCoefficients, Thresholds)>> {
    (0..samples.len())
        .into_par_iter()
        .map(|i| {
            let raw = samples.raw_coefficients(i)?;
            Ok((
                CurveCoefficients::from_raw(&raw)?,
                samples.parameters(i).thresholds,
            ))
        })
        .collect()
}

/// Slopes for every threshold `k` and `x1` level, and reciprocal slopes for
/// every `x2` level, summarized over all draws.
pub fn derivative_table(samples: &PosteriorSamples) -> Result<DerivativeTable> {
    if samples.is_empty() {
        return Err(Error::InsufficientDraws("no posterior draws".into()));
    }
    let k_levels = samples.model.spec.k();
    let draws = curve_draws(samples)?;
    let mut slopes = Vec::new();
    for k in 0..k_levels - 1 {
        for x1 in 0..k_levels {
            let values = draws
                .iter()
                .map(|(c, t)| slope(c, t, k, x1 as f64))
                .collect::<Result<Vec<f64>>>()?;
            let undefined = values.iter().filter(|v| v.is_infinite()).count();
            slopes.push(summarize(Some(k), x1, &values, undefined)?);
        }
    }
    let mut reciprocals = Vec::new();
    for x2 in 0..k_levels {
        let values: Vec<f64> = draws
            .iter()
            .filter_map(|(c, _)| reciprocal_slope(c, x2 as f64))
            .collect();
        let undefined = draws.len() - values.len();
        if values.is_empty() {
            return Err(Error::InsufficientDraws(format!(
                "reciprocal slope undefined for every draw at x2={x2}"
            )));
        }
        reciprocals.push(summarize(None, x2, &values, undefined)?);
    }
    Ok(DerivativeTable {
        slopes,
        reciprocals,
    })
}

/// Writes branch roots of every threshold curve over an `x1` grid for the
/// first `subset` draws in canonical order: columns `draw,k,x1,x2`.
pub fn write_curves_csv(
    samples: &PosteriorSamples,
    subset: usize,
    grid_points: usize,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let k_levels = samples.model.spec.k();
    let x_max = (k_levels - 1) as f64;
    let grid: Vec<f64> = (0..grid_points)
        .map(|i| x_max * i as f64 / (grid_points.max(2) - 1) as f64)
        .collect();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["draw", "k", "x1", "x2"])?;
    for (n, i) in samples
        .canonical_order()
        .into_iter()
        .take(subset)
        .enumerate()
    {
        let coefs = CurveCoefficients::from_raw(&samples.raw_coefficients(i)?)?;
        let thr = samples.parameters(i).thresholds;
        for k in 0..k_levels - 1 {
            for &x1 in &grid {
                if let Some(x2) = branch_root(&coefs, &thr, k, x1)? {
                    w.write_record([n.to_string(), k.to_string(), x1.to_string(), x2.to_string()])?;
                }
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Visit cost per care level plus the telephone consultation fee.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSchedule {
    pub level_costs: Vec<f64>,
    pub fee: f64,
    pub include_consultation: bool,
}

impl Default for CostSchedule {
    fn default() -> Self {
        Self {
            level_costs: vec![0.0, 2000.0, 3000.0, 4500.0],
            fee: 96.0,
            include_consultation: false,
        }
    }
}

impl CostSchedule {
    pub fn uniform(k: usize, cost: f64) -> Self {
        Self {
            level_costs: vec![cost; k],
            fee: 0.0,
            include_consultation: false,
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            level_costs: self.level_costs.iter().map(|c| c * factor).collect(),
            fee: self.fee * factor,
            include_consultation: self.include_consultation,
        }
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        if self.level_costs.len() != k {
            return Err(Error::InvalidConfig(format!(
                "cost schedule has {} level costs, data has K={k}",
                self.level_costs.len()
            )));
        }
        if self
            .level_costs
            .iter()
            .chain([&self.fee])
            .any(|c| !(*c >= 0.0 && c.is_finite()))
        {
            return Err(Error::InvalidConfig(
                "costs must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }

    fn fee(&self) -> f64 {
        if self.include_consultation {
            self.fee
        } else {
            0.0
        }
    }

    /// Per-patient cost of a distribution over levels given as weights summing to one.
    /// Written relative to the level-0 cost so a uniform schedule is reproduced exactly.
    fn cost_of(&self, weights: impl Iterator<Item = (usize, f64)>) -> f64 {
        let c0 = self.level_costs[0];
        let extra: f64 = weights.map(|(y, w)| w * (self.level_costs[y] - c0)).sum();
        c0 + extra + self.fee()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// Every patient follows their own intended action.
    Intended,
    /// Every patient follows the nurse's recommendation.
    Recommendation,
    /// Model-predicted final action.
    Final,
    /// Full compliance with the recommendation.
    FullCompliance,
    /// Observed final actions.
    Observed,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::Intended,
        Scenario::Recommendation,
        Scenario::Final,
        Scenario::FullCompliance,
        Scenario::Observed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Intended => "intended",
            Scenario::Recommendation => "recommendation",
            Scenario::Final => "final",
            Scenario::FullCompliance => "full-compliance",
            Scenario::Observed => "observed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|sc| sc.name() == s)
    }
}

/// Mean cost per patient with its 95% interval; point scenarios have a zero-width interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub scenario: Scenario,
    pub mean: f64,
    pub hpd: Interval,
}

fn level_weights(
    data: &Dataset,
    level: impl Fn(&crate::data::Observation) -> usize,
) -> Vec<(usize, f64)> {
    let mut counts = vec![0u64; data.k()];
    for o in data.observations() {
        counts[level(o)] += 1;
    }
    let n = data.n() as f64;
    counts
        .into_iter()
        .enumerate()
        .map(|(y, c)| (y, c as f64 / n))
        .collect()
}

/// Per-draw predicted cost of the final action, in canonical draw order.
fn final_cost_draws(
    samples: &PosteriorSamples,
    data: &Dataset,
    schedule: &CostSchedule,
) -> Vec<f64> {
    let eval = CellEvaluator::new(&samples.model, data);
    let k = data.k();
    let n = data.n() as f64;
    let cell_weights: Vec<f64> = (0..eval.len())
        .map(|c| eval.cells().counts_at(c).iter().sum::<u64>() as f64 / n)
        .collect();
    samples
        .canonical_order()
        .par_iter()
        .map(|&i| {
            let mut probs = vec![0.0; eval.len() * k];
            eval.cell_probs(&samples.parameters(i), &mut probs);
            let weights = (0..k).map(|y| {
                let w: f64 = cell_weights
                    .iter()
                    .enumerate()
                    .map(|(c, cw)| cw * probs[c * k + y])
                    .sum();
                (y, w)
            });
            schedule.cost_of(weights)
        })
        .collect()
}

/// Expected cost per patient under `scenario`.
pub fn expected_cost(
    samples: &PosteriorSamples,
    data: &Dataset,
    schedule: &CostSchedule,
    scenario: Scenario,
) -> Result<CostEstimate> {
    schedule.validate(data.k())?;
    if data.k() != samples.model.spec.k() {
        return Err(Error::DimensionMismatch(
            "data K differs from the fitted K".into(),
        ));
    }
    let point = |v: f64| CostEstimate {
        scenario,
        mean: v,
        hpd: Interval::point(v),
    };
    Ok(match scenario {
        Scenario::Intended => {
            point(schedule.cost_of(level_weights(data, |o| o.intended.get()).into_iter()))
        }
        Scenario::Recommendation | Scenario::FullCompliance => {
            point(schedule.cost_of(level_weights(data, |o| o.recommended.get()).into_iter()))
        }
        Scenario::Observed => {
            point(schedule.cost_of(level_weights(data, |o| o.outcome.get()).into_iter()))
        }
        Scenario::Final => {
            if samples.is_empty() {
                return Err(Error::InsufficientDraws("no posterior draws".into()));
            }
            let draws = final_cost_draws(samples, data, schedule);
            CostEstimate {
                scenario,
                mean: order_invariant_mean(&draws),
                hpd: hpd_interval(&draws, 0.95)?,
            }
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostRatio {
    pub numerator: Scenario,
    pub denominator: Scenario,
    pub mean: f64,
    pub hpd: Interval,
    /// `1 - mean`.
    pub saving: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub schedule: CostSchedule,
    pub scenarios: Vec<CostEstimate>,
    pub ratios: Vec<CostRatio>,
}

impl CostReport {
    pub fn scenario(&self, s: Scenario) -> Option<&CostEstimate> {
        self.scenarios.iter().find(|e| e.scenario == s)
    }

    pub fn render(&self, mut out: impl Write) -> std::io::Result<()> {
        for e in &self.scenarios {
            writeln!(
                out,
                "{:<16} {:>9.1}  ({:.1}, {:.1})",
                e.scenario.name(),
                e.mean,
                e.hpd.lo,
                e.hpd.hi
            )?;
        }
        for r in &self.ratios {
            writeln!(
                out,
                "{}/{} {:>6.3}  ({:.3}, {:.3})  saving {:.1}%",
                r.numerator.name(),
                r.denominator.name(),
                r.mean,
                r.hpd.lo,
                r.hpd.hi,
                100.0 * r.saving
            )?;
        }
        Ok(())
    }
}

/// All five scenarios plus the final/intended and full-compliance/intended ratios.
pub fn cost_report(
    samples: &PosteriorSamples,
    data: &Dataset,
    schedule: &CostSchedule,
) -> Result<CostReport> {
    let scenarios = Scenario::ALL
        .iter()
        .map(|&s| expected_cost(samples, data, schedule, s))
        .collect::<Result<Vec<_>>>()?;
    let get = |s: Scenario| {
        scenarios
            .iter()
            .find(|e| e.scenario == s)
            .expect("all scenarios")
    };
    let intended = get(Scenario::Intended).mean;
    let final_draws = final_cost_draws(samples, data, schedule);
    let final_ratio: Vec<f64> = final_draws.iter().map(|c| c / intended).collect();
    let fr_mean = order_invariant_mean(&final_ratio);
    let fc = get(Scenario::FullCompliance).mean / intended;
    let ratios = vec![
        CostRatio {
            numerator: Scenario::Final,
            denominator: Scenario::Intended,
            mean: fr_mean,
            hpd: hpd_interval(&final_ratio, 0.95)?,
            saving: 1.0 - fr_mean,
        },
        CostRatio {
            numerator: Scenario::FullCompliance,
            denominator: Scenario::Intended,
            mean: fc,
            hpd: Interval::point(fc),
            saving: 1.0 - fc,
        },
    ];
    Ok(CostReport {
        schedule: schedule.clone(),
        scenarios,
        ratios,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table2() -> (CurveCoefficients, Thresholds) {
        (
            CurveCoefficients::new(-0.39, 0.35, 0.16, 0.36),
            Thresholds::new(4, &[1.5]).unwrap(),
        )
    }

    #[test]
    fn plug_in_slopes() {
        let (c, t) = table2();
        let s = slope(&c, &t, 2, 0.0).unwrap();
        let want = -0.35 / (0.16f64.powi(2) - 4.0 * 0.36 * (-0.39 - 2.5)).sqrt();
        assert!((s - want).abs() < 1e-12);
        assert!((s - -0.171).abs() < 5e-4);
        let s = slope(&c, &t, 0, 1.0).unwrap();
        assert!((s - -0.39).abs() < 5e-3, "{s}");
        let r = reciprocal_slope(&c, 3.0).unwrap();
        assert!((r - -6.63).abs() < 5e-3);
        let r = reciprocal_slope(&c, 0.0).unwrap();
        assert!((r - -0.457).abs() < 5e-4);
    }

    #[test]
    fn absent_curve_is_neg_inf() {
        // k=0, x1=3: constant 0.16 > 0 with D = 0.0256 - 4 * 0.36 * 0.16 < 0
        let (c, t) = table2();
        assert_eq!(slope(&c, &t, 0, 3.0).unwrap(), f64::NEG_INFINITY);
        assert!(curve_points(&c, &t, 0, 3.0).unwrap().is_empty());
        assert_eq!(branch_root(&c, &t, 0, 3.0).unwrap(), None);
    }

    #[test]
    fn roots_solve_the_curve() {
        let (c, t) = table2();
        let roots = curve_points(&c, &t, 2, 0.0).unwrap();
        assert_eq!(roots.len(), 2);
        for r in &roots {
            let lhs = c.b0 + c.b2 * r + c.b3 * r * r;
            assert!((lhs - 2.5).abs() < 1e-9);
        }
        let b = branch_root(&c, &t, 2, 0.0).unwrap().unwrap();
        assert!((b - roots[1]).abs() < 1e-12);
        assert!((b - 2.620).abs() < 1e-3, "{b}");
    }

    #[test]
    fn linear_and_degenerate() {
        let c = CurveCoefficients::new(0.0, 0.0, 1.0, 0.0);
        let t = Thresholds::new(4, &[1.5]).unwrap();
        assert_eq!(curve_points(&c, &t, 1, 0.0).unwrap(), vec![1.5]);
        let flat = CurveCoefficients::new(1.0, 0.3, 0.0, 0.0);
        assert!(matches!(
            curve_points(&flat, &t, 1, 0.0),
            Err(Error::NoCurve(_))
        ));
        let c = CurveCoefficients::new(0.1, 0.4, 0.0, 0.0);
        for x2 in 0..4 {
            assert_eq!(reciprocal_slope(&c, x2 as f64), Some(0.0));
        }
        assert_eq!(
            reciprocal_slope(&CurveCoefficients::new(0.0, 0.0, 1.0, 1.0), 1.0),
            None
        );
    }

    #[test]
    fn slope_times_reciprocal_on_curve() {
        let (c, t) = table2();
        for k in 0..3 {
            for x1 in [0.0, 0.5, 1.0, 2.0] {
                if let Some(x2) = branch_root(&c, &t, k, x1).unwrap() {
                    let s = slope(&c, &t, k, x1).unwrap();
                    let r = reciprocal_slope(&c, x2).unwrap();
                    assert!((s * r - 1.0).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn scenario_names_round_trip() {
        for s in Scenario::ALL {
            assert_eq!(Scenario::parse(s.name()), Some(s));
        }
        let json = serde_json::to_string(&Scenario::FullCompliance).unwrap();
        assert_eq!(json, "\"full-compliance\"");
    }

    #[test]
    fn recommendation_marginal_cost() {
        // 75, 64, 40, 53 patients recommended to levels 0..3
        let mut t = Vec::new();
        for (b, n) in [75, 64, 40, 53].into_iter().enumerate() {
            for _ in 0..n {
                t.push((0, b, 0));
            }
        }
        let d = Dataset::from_triples(4, &t).unwrap();
        let s = CostSchedule::default();
        let w = level_weights(&d, |o| o.recommended.get());
        let cost = s.cost_of(w.into_iter());
        let want = (64.0 * 2000.0 + 40.0 * 3000.0 + 53.0 * 4500.0) / 232.0;
        assert!((cost - want).abs() < 1e-9);
    }
}
