//! End-to-end acceptance suite. Prints one line per criterion and exits
//! nonzero if any criterion fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use ordcare::inference::{CostSchedule, Scenario};
use ordcare::model::{outcome_probabilities, SigmaStructure};
use ordcare::sampler::{derive_seed, PosteriorSamples, SamplerConfig};
use ordcare::validation::{chance_correct_rate, predictor_error_rate};
use ordcare::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal as NormalSampler};
use statrs::distribution::{ContinuousCDF, Normal};

const K: usize = 4;

#[derive(Clone, Copy, PartialEq)]
enum Status {
    Pass,
    Fail,
    Replaced,
}

#[derive(Default)]
struct Report {
    lines: Vec<(String, Status)>,
}

impl Report {
    fn record(&mut self, id: &str, name: &str, ok: bool, detail: String) {
        self.push(
            id,
            name,
            if ok { Status::Pass } else { Status::Fail },
            detail,
        );
    }

    fn push(&mut self, id: &str, name: &str, status: Status, detail: String) {
        let tag = match status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Replaced => "REPLACED",
        };
        let line = format!("[{tag:>8}] {id:<4} {name}: {detail}");
        println!("{line}");
        self.lines.push((line, status));
    }

    fn info(&self, text: impl AsRef<str>) {
        println!("           {}", text.as_ref());
    }
}

// ---------------------------------------------------------------- oracles

/// Outcome probabilities straight from the mixture CDF, with statrs normals.
fn oracle_probs(mu: f64, sigma: f64, alpha: f64, thresholds: &[f64]) -> Vec<f64> {
    let narrow = Normal::new(0.0, sigma).unwrap();
    let wide = Normal::new(0.0, 3.0 * sigma).unwrap();
    let cdf = |t: f64| (1.0 - alpha) * narrow.cdf(t - mu) + alpha * wide.cdf(t - mu);
    let mut edges = vec![0.0];
    edges.extend(thresholds.iter().map(|&t| cdf(t)));
    edges.push(1.0);
    edges.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Keeps the largest value seen; a NaN sticks.
fn track(worst: &mut f64, v: f64) {
    if v.is_nan() || v > *worst {
        *worst = v;
    }
}

fn raw_mean(beta: &[f64], x1: f64, x2: f64) -> f64 {
    beta[0] + beta[1] * x1 + beta[2] * x2 + beta[3] * x2 * x2
}

struct Truth {
    beta: [f64; 4],
    theta1: f64,
    sigma: [f64; 4],
    alpha: f64,
}

impl Truth {
    fn table2() -> Self {
        Self {
            beta: [-0.39, 0.35, 0.16, 0.36],
            theta1: 1.5,
            sigma: [0.71, 0.77, 0.28, 2.45],
            alpha: 0.16,
        }
    }

    fn recovery() -> Self {
        Self {
            beta: [-0.4, 0.35, 0.15, 0.35],
            theta1: 1.5,
            sigma: [0.7, 0.8, 0.3, 2.4],
            alpha: 0.15,
        }
    }

    fn params(&self) -> TrueParameters {
        let spec = ModelSpec::selected(K);
        TrueParameters {
            beta_raw: RawCoefficients::new(spec.terms().to_vec(), self.beta.to_vec()).unwrap(),
            thresholds: Thresholds::new(K, &[self.theta1]).unwrap(),
            sigma: self.sigma.to_vec(),
            alpha: self.alpha,
            spec,
        }
    }

    fn thresholds(&self) -> [f64; 3] {
        [0.5, self.theta1, 2.5]
    }

    fn probs(&self, x1: usize, x2: usize) -> Vec<f64> {
        oracle_probs(
            raw_mean(&self.beta, x1 as f64, x2 as f64),
            self.sigma[x1],
            self.alpha,
            &self.thresholds(),
        )
    }
}

fn fit(
    data: &Dataset,
    spec: &ModelSpec,
    kept: usize,
    burn_in: usize,
    seed: u64,
) -> (PosteriorSamples, Diagnostics) {
    let config = SamplerConfig {
        chains: 4,
        kept_draws_total: kept,
        burn_in,
        seed,
        ..SamplerConfig::default()
    };
    run_mcmc(data, spec, &Priors::default(), &config).expect("fit")
}

fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

// ---------------------------------------------------------------- criteria

/// Synthetic stand-in for the observed data: the selected structure at the
/// published point estimates, 4000 respondents per (x1, x2) pair.
struct World {
    truth: Truth,
    data: Dataset,
    samples: PosteriorSamples,
    diagnostics: Diagnostics,
}

fn build_world() -> World {
    let truth = Truth::table2();
    let data = simulate_dataset(&truth.params(), &uniform_design(K, 4000), 2).unwrap();
    let (samples, diagnostics) = fit(&data, &ModelSpec::selected(K), 100_000, 10_000, 1);
    World {
        truth,
        data,
        samples,
        diagnostics,
    }
}

fn replaced(rep: &mut Report) {
    let why = "per-cell counts of the observed data are not available; synthetic analogue below";
    for (id, name) in [
        ("1", "parameter reproduction"),
        ("2", "effect increments"),
        ("3", "model selection"),
        ("4", "error rate"),
        ("5", "posterior predictive checks"),
        ("6", "derivative tables"),
        ("7", "costs"),
    ] {
        rep.push(id, name, Status::Replaced, why.into());
    }
}

fn s1_recovery(rep: &mut Report, w: &World) {
    let summary = posterior_summary(&w.samples).unwrap();
    let truth = w.truth.params().raw_packed();
    // published 95% intervals, same order as `raw_packed` minus theta_1
    let published: BTreeMap<&str, (f64, f64)> = [
        ("beta_0", (-0.76, -0.05)),
        ("beta_x1", (0.17, 0.54)),
        ("beta_x2", (-0.33, 0.67)),
        ("beta_x2^2", (0.15, 0.58)),
        ("sigma_0", (0.43, 1.02)),
        ("sigma_1", (0.46, 1.15)),
        ("sigma_2", (0.18, 0.40)),
        ("sigma_3", (1.16, 4.19)),
        ("alpha", (0.06, 0.28)),
    ]
    .into_iter()
    .collect();
    let mut inside = 0;
    let mut close = 0;
    let mut checked = 0;
    let mut worst = (String::new(), 0.0f64);
    for (row, &t) in summary.raw.iter().zip(&truth) {
        rep.info(format!(
            "{:<10} mean {:>8.4}  hpd ({:>8.4}, {:>8.4})  truth {:>6.3}",
            row.name, row.mean, row.hpd.lo, row.hpd.hi, t
        ));
        let Some(&(lo, hi)) = published.get(row.name.as_str()) else {
            continue;
        };
        checked += 1;
        if lo <= row.mean && row.mean <= hi {
            inside += 1;
        }
        let dev = (row.mean - t).abs();
        if dev <= 0.08 {
            close += 1;
        }
        if dev > worst.1 {
            worst = (row.name.clone(), dev);
        }
    }
    let expected = published.len();
    rep.record(
        "S1",
        "recovery at the published estimates (n=64000)",
        checked == expected && inside == expected && close == expected,
        format!(
            "{inside}/{expected} means inside published intervals, {close}/{expected} within 0.08 (worst {} off by {:.3}); max R-hat {:.4}, min ESS {:.0}",
            worst.0,
            worst.1,
            w.diagnostics.max_rhat(),
            w.diagnostics.min_ess()
        ),
    );
}

fn s2_increments(rep: &mut Report, w: &World) {
    let m = w.samples.len() as f64;
    let mut inc = [0.0; 3];
    for i in w.samples.canonical_order() {
        let raw = w.samples.raw_coefficients(i).unwrap();
        for (x2, slot) in inc.iter_mut().enumerate() {
            let at = |v: f64| raw.beta[2] * v + raw.beta[3] * v * v;
            *slot += (at(x2 as f64 + 1.0) - at(x2 as f64)) / m;
        }
    }
    let target = [0.52, 1.24, 1.96];
    let ok = inc.iter().zip(&target).all(|(a, b)| (a - b).abs() <= 0.1);
    rep.record(
        "S2",
        "recommendation increments",
        ok,
        format!(
            "({:.3}, {:.3}, {:.3}) vs (0.52, 1.24, 1.96) within 0.1",
            inc[0], inc[1], inc[2]
        ),
    );
}

fn s3_selection(rep: &mut Report, w: &World) {
    let grid = CandidateGrid::axes(K).unwrap();
    let config = SamplerConfig {
        chains: 4,
        kept_draws_total: 8_000,
        burn_in: 4_000,
        seed: 3,
        ..SamplerConfig::default()
    };
    let table = scan_candidates(&w.data, &grid, &Priors::default(), &config).unwrap();
    let selected = ModelSpec::selected(K);
    let waic_of = |spec: &ModelSpec| {
        table
            .find(spec)
            .and_then(|r| r.outcome.as_ref().ok())
            .map(|f| f.waic)
            .unwrap_or(f64::NAN)
    };
    let w_sel = waic_of(&selected);
    let w_off = waic_of(&selected.with_contamination(false));
    let w_common = waic_of(&selected.with_sigma(SigmaStructure::Common));
    let w_byrec = waic_of(&selected.with_sigma(SigmaStructure::ByRecommended));
    let rank = table
        .rows
        .iter()
        .position(|r| r.candidate.spec == selected)
        .map_or(0, |p| p + 1);
    let failed = table.rows.iter().filter(|r| r.outcome.is_err()).count();
    for r in table.rows.iter().take(5) {
        if let Ok(f) = &r.outcome {
            rep.info(format!(
                "{:>10.2}  {} / {} / contamination {}",
                f.waic,
                r.candidate.spec.terms_label(),
                r.candidate.spec.sigma_structure().name(),
                r.candidate.spec.contamination()
            ));
        }
    }
    rep.info(format!(
        "generating structure ranks {rank} of {} ({failed} candidates failed to fit)",
        table.rows.len()
    ));
    let mut richer = selected.terms().to_vec();
    richer.push(Term::X1X2);
    let w_noise = waic_of(&selected.with_terms(richer).unwrap());
    rep.info(format!(
        "adding an x1*x2 column to the generating structure changes WAIC by {:+.2} (report only)",
        w_noise - w_sel
    ));
    rep.record(
        "S3",
        "WAIC ordering on the contamination and sigma axes",
        w_off > w_sel && w_common > w_sel && w_byrec > w_sel,
        format!(
            "selected {w_sel:.2}; contamination off {w_off:.2}; common sigma {w_common:.2}; by-recommended sigma {w_byrec:.2}"
        ),
    );
}

fn s4_error_rate(rep: &mut Report, w: &World) {
    let rate = error_rate(&w.samples, &w.data).unwrap();
    let oracle = predictor_error_rate(&w.data, |a, b| argmax(&w.truth.probs(a, b)));
    let chance = chance_correct_rate(K);
    rep.record(
        "S4",
        "error rate vs true-parameter modal predictor",
        (rate - oracle).abs() <= 0.02 && chance == 0.25,
        format!(
            "posterior {:.2}% vs oracle {:.2}% (within 2 points); chance baseline {:.2}%",
            100.0 * rate,
            100.0 * oracle,
            100.0 * chance
        ),
    );
}

fn s5_ppc(rep: &mut Report, w: &World) {
    let reps = replicate_datasets(&w.samples, &w.data, 10_000, 5).unwrap();
    let measures = [
        Measure::CountAt(0),
        Measure::CountAt(1),
        Measure::CountAt(2),
        Measure::CountAt(3),
        Measure::Mean,
        Measure::Sd,
    ];
    let p: Vec<f64> = measures
        .iter()
        .map(|&m| discrepancy_pvalue(&reps, &w.data, m).unwrap())
        .collect();
    let cells = cell_checks(&reps, &w.data).unwrap();
    rep.info(format!(
        "p-values {:?}; cells covered {}/{}; observation coverage {:.1}%",
        p.iter()
            .map(|v| (v * 1000.0).round() / 1000.0)
            .collect::<Vec<_>>(),
        cells.coverage.cells_covered,
        cells.coverage.cells_total,
        100.0 * cells.coverage.observation_coverage
    ));
    rep.record(
        "S5",
        "predictive checks are well formed",
        p.iter().all(|v| (0.0..=1.0).contains(v)) && cells.coverage.cells_total == K * K * K,
        format!(
            "{} p-values in [0, 1], {} cells checked",
            p.len(),
            cells.coverage.cells_total
        ),
    );
}

fn s6_derivatives(rep: &mut Report, w: &World) {
    let table = derivative_table(&w.samples).unwrap();
    let [b0, b1, b2, b3] = w.truth.beta;
    let thr = w.truth.thresholds();
    let mut finite_ok = 0;
    let mut finite_total = 0;
    let mut inf_match = 0;
    let mut inf_total = 0;
    let mut worst = 0.0f64;
    for k in 0..K - 1 {
        for x1 in 0..K {
            let d = b2 * b2 - 4.0 * b3 * (b0 + b1 * x1 as f64 - thr[k]);
            let cell = table.slope_at(k, x1).unwrap();
            if d <= 0.0 {
                inf_total += 1;
                if cell.mean == f64::NEG_INFINITY {
                    inf_match += 1;
                }
            } else {
                finite_total += 1;
                let truth = -b1 / d.sqrt();
                let dev = (cell.mean - truth).abs();
                track(&mut worst, dev);
                if dev <= 0.03 {
                    finite_ok += 1;
                }
            }
        }
    }
    let mut recip_ok = 0;
    for x2 in 0..K {
        let truth = (-b2 - 2.0 * b3 * x2 as f64) / b1;
        let cell = table.reciprocal_at(x2).unwrap();
        if ((cell.mean - truth) / truth).abs() <= 0.10 {
            recip_ok += 1;
        }
    }
    rep.record(
        "S6",
        "derivative table vs plug-in truth",
        finite_ok == finite_total && inf_match == inf_total && recip_ok == K,
        format!(
            "{finite_ok}/{finite_total} finite slopes within 0.03 (worst {worst:.4}); {inf_match}/{inf_total} absent curves give -inf; {recip_ok}/{K} reciprocals within 10%"
        ),
    );
}

fn s7_costs(rep: &mut Report, w: &World) {
    let schedule = CostSchedule::default();
    let report = cost_report(&w.samples, &w.data, &schedule).unwrap();
    let costs = &schedule.level_costs;
    let n = w.data.n() as f64;
    let mut oracle_final = 0.0;
    let mut oracle_intended = 0.0;
    let mut oracle_rec = 0.0;
    for o in w.data.observations() {
        let (a, b) = (o.intended.get(), o.recommended.get());
        oracle_final += w
            .truth
            .probs(a, b)
            .iter()
            .zip(costs)
            .map(|(p, c)| p * c)
            .sum::<f64>()
            / n;
        oracle_intended += costs[a] / n;
        oracle_rec += costs[b] / n;
    }
    let fin = report.scenario(Scenario::Final).unwrap();
    let int = report.scenario(Scenario::Intended).unwrap().mean;
    let ratio = &report.ratios[0];
    let full = &report.ratios[1];
    let ok_final = (fin.mean / oracle_final - 1.0).abs() <= 0.05 && fin.hpd.contains(oracle_final);
    let ok_ratio = (ratio.mean - oracle_final / oracle_intended).abs() <= 0.03;
    let ok_points = (int - oracle_intended).abs() <= 1e-9 * oracle_intended
        && (full.mean - oracle_rec / oracle_intended).abs() <= 1e-12;
    rep.record(
        "S7a",
        "final-scenario cost vs true-parameter cost",
        ok_final && ok_ratio && ok_points,
        format!(
            "final {:.1} ({:.1}, {:.1}) vs oracle {:.1}; final/intended {:.4} vs {:.4}; full-compliance/intended {:.4}",
            fin.mean,
            fin.hpd.lo,
            fin.hpd.hi,
            oracle_final,
            ratio.mean,
            oracle_final / oracle_intended,
            full.mean
        ),
    );

    let flat = cost_report(&w.samples, &w.data, &CostSchedule::uniform(K, 1234.0)).unwrap();
    let exact = flat
        .scenarios
        .iter()
        .all(|e| e.mean == 1234.0 && e.hpd.lo == 1234.0 && e.hpd.hi == 1234.0);
    let lambda = 2.5;
    let scaled = cost_report(&w.samples, &w.data, &schedule.scaled(lambda)).unwrap();
    let worst = report
        .scenarios
        .iter()
        .zip(&scaled.scenarios)
        .map(|(a, b)| (b.mean / (lambda * a.mean) - 1.0).abs())
        .fold(0.0, |mut w, v| {
            track(&mut w, v);
            w
        });
    rep.record(
        "S7b",
        "cost invariants",
        exact && worst <= 1e-12,
        format!("uniform schedule reproduced exactly: {exact}; scaling by {lambda} off by {worst:.1e} relative"),
    );
}

fn c8_likelihood_oracle(rep: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let draws = 1_000_000usize;
    let mut worst = 0.0f64;
    let mut failures = 0;
    let mut checks = 0;
    for _ in 0..20 {
        let k = rng.random_range(3..=6usize);
        let mut interior: Vec<f64> = (0..k - 3)
            .map(|_| rng.random_range(0.5..(k as f64 - 1.5)))
            .collect();
        interior.sort_by(f64::total_cmp);
        let thresholds = Thresholds::new(k, &interior).unwrap();
        let mu = rng.random_range(-1.0..k as f64);
        let sigma = rng.random_range(0.2..3.0);
        let alpha = if rng.random_bool(0.3) {
            0.0
        } else {
            rng.random_range(0.0..0.5)
        };
        let p = outcome_probabilities(mu, sigma, alpha, &thresholds).unwrap();

        let narrow = NormalSampler::new(0.0, sigma).unwrap();
        let wide = NormalSampler::new(0.0, 3.0 * sigma).unwrap();
        let thr = thresholds.values();
        let mut counts = vec![0u64; k];
        for _ in 0..draws {
            let eps = if rng.random::<f64>() < alpha {
                wide.sample(&mut rng)
            } else {
                narrow.sample(&mut rng)
            };
            let z = mu + eps;
            counts[thr.iter().filter(|&&t| t <= z).count()] += 1;
        }
        for (y, &c) in counts.iter().enumerate() {
            checks += 1;
            let se = (p[y] * (1.0 - p[y]) / draws as f64).sqrt();
            let dev = (c as f64 / draws as f64 - p[y]).abs();
            let z = if se > 0.0 {
                dev / se
            } else if dev == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            track(&mut worst, z);
            if z > 3.0 {
                failures += 1;
            }
        }
    }
    rep.record(
        "8",
        "likelihood vs latent simulation",
        failures == 0,
        format!("{}/{checks} category frequencies within 3 SE over 20 parameter points (worst {worst:.2} SE)", checks - failures),
    );
}

fn c9_recovery(rep: &mut Report) {
    let truth = Truth::recovery();
    let params = truth.params();
    let values = params.raw_packed();
    let names = params.spec.parameter_layout().raw_names();
    let mut covered = vec![0usize; values.len()];
    let mut max_rhat = 0.0f64;
    let runs = 20;
    for seed in 0..runs {
        let data = simulate_dataset(&params, &uniform_design(K, 125), 900 + seed).unwrap();
        let (samples, diag) = fit(&data, &params.spec, 20_000, 5_000, derive_seed(9, seed));
        track(&mut max_rhat, diag.max_rhat());
        let summary = posterior_summary(&samples).unwrap();
        for (j, row) in summary.raw.iter().enumerate() {
            if row.hpd.contains(values[j]) {
                covered[j] += 1;
            }
        }
    }
    let detail: Vec<String> = names
        .iter()
        .zip(&covered)
        .map(|(n, c)| format!("{n} {c}"))
        .collect();
    rep.record(
        "9",
        "parameter recovery over 20 seeds (n=2000)",
        covered.iter().all(|&c| c >= 16),
        format!(
            "95% HPD covers truth in [{}] of {runs} runs; max R-hat {max_rhat:.3}",
            detail.join(", ")
        ),
    );
}

fn random_dataset(rng: &mut impl Rng) -> Dataset {
    loop {
        let n = rng.random_range(10..=30);
        let triples: Vec<(usize, usize, usize)> = (0..n)
            .map(|_| {
                (
                    rng.random_range(0..K),
                    rng.random_range(0..K),
                    rng.random_range(0..K),
                )
            })
            .collect();
        let distinct = |f: fn(&(usize, usize, usize)) -> usize| {
            triples
                .iter()
                .map(f)
                .collect::<std::collections::BTreeSet<_>>()
                .len()
        };
        if distinct(|t| t.0) >= 2 && distinct(|t| t.1) >= 3 {
            return Dataset::from_triples(K, &triples).unwrap();
        }
    }
}

fn c10_waic_oracle(rep: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let specs = [
        ModelSpec::selected(K),
        ModelSpec::selected(K).with_contamination(false),
        ModelSpec::selected(K).with_sigma(SigmaStructure::Common),
    ];
    let mut worst = 0.0f64;
    let mut worst_statrs = 0.0f64;
    for case in 0..10 {
        let data = random_dataset(&mut rng);
        let spec = &specs[case % specs.len()];
        let model = Model::for_data(spec, &data).unwrap();
        let layout = spec.parameter_layout();
        let draws_per_chain = 25;
        let chains: Vec<Vec<Vec<f64>>> = (0..2)
            .map(|_| {
                (0..draws_per_chain)
                    .map(|_| {
                        let p = ParameterVector {
                            beta: (0..spec.n_beta())
                                .map(|_| rng.random_range(-1.0..1.0))
                                .collect(),
                            thresholds: Thresholds::new(K, &[rng.random_range(0.6..2.4)]).unwrap(),
                            sigma: (0..spec.n_sigma())
                                .map(|_| rng.random_range(0.3..3.0))
                                .collect(),
                            alpha: if spec.contamination() {
                                rng.random_range(0.0..0.3)
                            } else {
                                0.0
                            },
                        };
                        layout.pack(&p)
                    })
                    .collect()
            })
            .collect();
        let samples = PosteriorSamples::from_chains(
            model.clone(),
            Priors::default(),
            SamplerConfig::default(),
            data.count_table(),
            chains,
            Vec::new(),
        )
        .unwrap();
        let got = waic(&samples, &data).unwrap();

        // naive double loop over the pointwise log-likelihood of every draw
        let s = samples.len();
        let ll: Vec<Vec<f64>> = (0..s)
            .map(|i| {
                model
                    .log_likelihood(&samples.parameters(i), &data)
                    .unwrap()
                    .pointwise
            })
            .collect();
        let (mut lppd, mut p_waic, mut lppd_statrs) = (0.0, 0.0, 0.0);
        for (j, o) in data.observations().iter().enumerate() {
            let col: Vec<f64> = ll.iter().map(|row| row[j]).collect();
            lppd += (col.iter().map(|v| v.exp()).sum::<f64>() / s as f64).ln();
            let m = col.iter().sum::<f64>() / s as f64;
            p_waic += col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (s - 1) as f64;

            let (a, b) = (o.intended.get(), o.recommended.get());
            let lik: f64 = (0..s)
                .map(|i| {
                    let p = samples.parameters(i);
                    let mu = model.mean(&p.beta, a as f64, b as f64).unwrap();
                    let sigma = p.sigma[spec.sigma_structure().group(a, b)];
                    oracle_probs(mu, sigma, p.alpha, p.thresholds.values())[o.outcome.get()]
                })
                .sum();
            lppd_statrs += (lik / s as f64).ln();
        }
        let reference = -2.0 * (lppd - p_waic);
        track(&mut worst, (got.waic - reference).abs());
        track(&mut worst, (got.lppd - lppd).abs());
        track(&mut worst, (got.p_waic - p_waic).abs());
        track(&mut worst_statrs, (got.lppd - lppd_statrs).abs());
    }
    rep.info(format!(
        "lppd vs independent mixture-CDF likelihood: largest difference {worst_statrs:.2e}"
    ));
    rep.record(
        "10",
        "WAIC vs naive double loop",
        worst <= 1e-10,
        format!("10 random cases, largest absolute difference {worst:.2e} (tolerance 1e-10)"),
    );
}

fn c11_derivatives(rep: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let h = 1e-5;
    let mut accepted = 0;
    let mut worst_rel = 0.0f64;
    let mut worst_prod = 0.0f64;
    let sign = |rng: &mut ChaCha8Rng| if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    while accepted < 100 {
        let coefs = CurveCoefficients::new(
            rng.random_range(-1.0..1.0),
            sign(&mut rng) * rng.random_range(0.1..1.0),
            rng.random_range(-1.0..1.0),
            sign(&mut rng) * rng.random_range(0.1..1.0),
        );
        let thresholds = Thresholds::new(K, &[rng.random_range(0.6..2.4)]).unwrap();
        let k = rng.random_range(0..K - 1);
        let x1 = rng.random_range(0.0..3.0);
        let theta = thresholds.values()[k];
        let disc =
            |x: f64| coefs.b2 * coefs.b2 - 4.0 * coefs.b3 * (coefs.b0 + coefs.b1 * x - theta);
        if disc(x1 - 2.0 * h).min(disc(x1 + 2.0 * h)) < 0.05 {
            continue;
        }
        accepted += 1;
        // the branch (-b2 + sqrt D) / (2 b3) is the upper root when b3 > 0
        let branch = |x: f64| {
            let r = curve_points(&coefs, &thresholds, k, x).unwrap();
            if coefs.b3 > 0.0 {
                r[r.len() - 1]
            } else {
                r[0]
            }
        };
        let fd = (branch(x1 + h) - branch(x1 - h)) / (2.0 * h);
        let s = slope(&coefs, &thresholds, k, x1).unwrap();
        track(&mut worst_rel, ((fd - s) / s).abs());
        let x2 = branch_root(&coefs, &thresholds, k, x1).unwrap().unwrap();
        let r = reciprocal_slope(&coefs, x2).unwrap();
        track(&mut worst_prod, (s * r - 1.0).abs());
    }
    rep.record(
        "11",
        "derivative consistency",
        worst_rel <= 1e-4 && worst_prod <= 1e-6,
        format!(
            "100 random curves: slope vs central difference {worst_rel:.2e} relative (tol 1e-4); |slope x reciprocal - 1| {worst_prod:.2e} (tol 1e-6)"
        ),
    );
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let key = p.strip_prefix(dir).unwrap().display().to_string();
                out.insert(key, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn run_pipeline(dir: &Path) -> Vec<u8> {
    let bin = env!("CARGO_BIN_EXE_ordcare");
    let p = |s: &str| dir.join(s).display().to_string();
    let out = dir.join("out");
    if out.exists() {
        std::fs::remove_dir_all(&out).unwrap();
    }
    std::fs::create_dir_all(&out).unwrap();
    std::fs::write(
        dir.join("params.json"),
        r#"{"beta": [-0.4, 0.35, 0.15, 0.35], "theta": [1.5], "sigma": [0.7, 0.8, 0.3, 2.4], "alpha": 0.15}"#,
    )
    .unwrap();
    let fit = p("out/fit");
    let sampler = ["--draws", "20000", "--burnin", "5000", "--seed", "4"];
    let steps: Vec<Vec<String>> = vec![
        vec![
            "simulate",
            "--params",
            &p("params.json"),
            "--per-cell",
            "60",
            "--seed",
            "7",
            "--out",
            &p("out/data.csv"),
        ]
        .into_iter()
        .map(String::from)
        .collect(),
        ["fit", "--data", &p("out/data.csv"), "--out", &fit]
            .iter()
            .chain(sampler.iter())
            .map(|s| s.to_string())
            .collect(),
        [
            "scan",
            "--data",
            &p("out/data.csv"),
            "--out",
            &p("out/scan"),
            "--draws",
            "2000",
            "--burnin",
            "1000",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect(),
        ["validate", "--fit", &fit, "--replicates", "2000"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        ["curves", "--fit", &fit, "--subset", "200"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        ["cost", "--fit", &fit]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        ["predict", "--fit", &fit, "--x1", "3", "--x2", "0"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
    ];
    let mut stdout = Vec::new();
    for args in steps {
        let o = Command::new(bin).args(&args).output().unwrap();
        assert!(
            o.status.success(),
            "ordcare {args:?} failed: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        stdout.extend(o.stdout);
    }
    stdout
}

fn c12_determinism(rep: &mut Report) {
    // library level: same seed, permuted chain labels
    let truth = Truth::recovery();
    let data = simulate_dataset(&truth.params(), &uniform_design(K, 60), 12).unwrap();
    let spec = ModelSpec::selected(K);
    let (a, da) = fit(&data, &spec, 8_000, 2_000, 12);
    let (b, db) = fit(&data, &spec, 8_000, 2_000, 12);
    let rerun = a == b && da == db;
    let perm = a.relabel_chains(&[2, 0, 3, 1]).unwrap();
    let schedule = CostSchedule::default();
    let pvals = |s: &PosteriorSamples| {
        let reps = replicate_datasets(s, &data, 2_000, 1).unwrap();
        let p: Vec<f64> = [Measure::Mean, Measure::Sd, Measure::CountAt(3)]
            .iter()
            .map(|&m| discrepancy_pvalue(&reps, &data, m).unwrap())
            .collect();
        (p, cell_checks(&reps, &data).unwrap())
    };
    let checks = [
        (
            "summary",
            posterior_summary(&a).unwrap() == posterior_summary(&perm).unwrap(),
        ),
        (
            "derivatives",
            derivative_table(&a).unwrap() == derivative_table(&perm).unwrap(),
        ),
        (
            "costs",
            cost_report(&a, &data, &schedule).unwrap()
                == cost_report(&perm, &data, &schedule).unwrap(),
        ),
        (
            "waic",
            waic(&a, &data).unwrap() == waic(&perm, &data).unwrap(),
        ),
        (
            "error rate",
            error_rate(&a, &data).unwrap() == error_rate(&perm, &data).unwrap(),
        ),
        ("predictive checks", pvals(&a) == pvals(&perm)),
    ];
    let broken: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    rep.record(
        "12a",
        "library determinism and chain relabeling",
        rerun && broken.is_empty(),
        format!(
            "rerun identical: {rerun}; summaries changed by relabeling: {}",
            if broken.is_empty() {
                "none".to_string()
            } else {
                broken.join(", ")
            }
        ),
    );

    // binary level: every subcommand twice into the same paths
    let dir = tempfile::tempdir().unwrap();
    let out1 = run_pipeline(dir.path());
    let first = snapshot(&dir.path().join("out"));
    let out2 = run_pipeline(dir.path());
    let second = snapshot(&dir.path().join("out"));
    let expected = [
        "data.csv",
        "data.csv.json",
        "fit/draws.csv",
        "fit/posterior.json",
        "fit/summary.csv",
        "fit/diagnostics.json",
        "scan/scan.csv",
        "scan/scan.json",
        "fit/cells.csv",
        "fit/validation.json",
        "fit/curves.csv",
        "fit/derivatives.json",
        "fit/cost.json",
        "fit/predict.json",
    ];
    let missing: Vec<&str> = expected
        .iter()
        .copied()
        .filter(|f| !first.contains_key(*f))
        .collect();
    let differing: Vec<&String> = first
        .keys()
        .chain(second.keys())
        .filter(|k| first.get(*k) != second.get(*k))
        .collect();
    rep.record(
        "12b",
        "every subcommand is byte-reproducible",
        differing.is_empty() && out1 == out2 && missing.is_empty(),
        format!(
            "{} files compared, {} differ, {} expected outputs missing; stdout identical: {}",
            first.len(),
            differing.len(),
            missing.len(),
            out1 == out2
        ),
    );
}

fn main() {
    let start = Instant::now();
    let mut rep = Report::default();
    replaced(&mut rep);

    let world = build_world();
    s1_recovery(&mut rep, &world);
    s2_increments(&mut rep, &world);
    s3_selection(&mut rep, &world);
    s4_error_rate(&mut rep, &world);
    s5_ppc(&mut rep, &world);
    s6_derivatives(&mut rep, &world);
    s7_costs(&mut rep, &world);

    c8_likelihood_oracle(&mut rep);
    c9_recovery(&mut rep);
    c10_waic_oracle(&mut rep);
    c11_derivatives(&mut rep);
    c12_determinism(&mut rep);

    let failed = rep.lines.iter().filter(|l| l.1 == Status::Fail).count();
    let passed = rep.lines.iter().filter(|l| l.1 == Status::Pass).count();
    let replaced = rep.lines.iter().filter(|l| l.1 == Status::Replaced).count();
    println!(
        "acceptance: {passed} passed, {failed} failed, {replaced} replaced ({:.0} s)",
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
