//! The pinned verification suite: ten criteria covering the exact-generator
//! oracle, one- and two-shock fluctuation laws, mixture and field limits,
//! the coalescence map, coupling invariants, the initial-condition predictor,
//! and determinism. Each criterion carries its tolerances inline; the suite
//! is fully seeded and runs identically from `cargo test` and the `verify`
//! subcommand.

use std::sync::{Arc, OnceLock};

use rayon::prelude::*;
use serde::Serialize;

use crate::burgers::{march_fronts, ordering_time, psi};
use crate::dynamics::{exact_distribution, simulate_segment, total_variation};
use crate::profiles::{validate_meeting, CylinderFunction, MeetingScenario, StepProfile};
use crate::stats::{
    ensemble_field_functional, ks_one_sample, ks_two_sample, local_measure_estimate,
    mean_and_variance, normal_cdf, oracle_field_functional, pushforward_oracle, run_ensemble,
    EnsembleParams, EnsembleResult, LimitLaw, TestFunction, ALPHA,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Base seed of the verification suite; pinned after verifying that every
/// criterion passes with comfortable margins at the pinned scales.
pub const SUITE_SEED: u64 = 123_456;

const ONE_SHOCK_EPSILON: f64 = 1.0 / 400.0;
const TWO_SHOCK_EPSILON: f64 = 1.0 / 200.0;
const REPLICAS: usize = 2000;

/// `(id, slug, title)` of every criterion, in order.
pub const CRITERIA: [(usize, &str, &str); 10] = [
    (1, "oracle", "segment law matches the exact generator solution"),
    (2, "one-shock-gaussian", "one-shock fluctuations are Gaussian with the predicted variance"),
    (3, "one-shock-mixture", "one-shock local measure is the fair mixture"),
    (4, "two-shock-law", "two-shock coalescence law matches the pushforward oracle"),
    (5, "mixture-limit", "local measure matches the mixture of product measures"),
    (6, "density-field", "density field functionals match the limiting random measure"),
    (7, "psi", "coalescence map is well posed and matches its closed forms"),
    (8, "coupling", "coupling invariants hold in every replica"),
    (9, "predictor", "initial-condition predictor captures the fluctuations"),
    (10, "determinism", "ensemble output is byte-identical across worker counts"),
];

#[derive(Debug, Clone, Serialize)]
pub struct CriterionReport {
    pub id: usize,
    pub slug: &'static str,
    pub title: &'static str,
    pub pass: bool,
    pub details: Vec<String>,
}

impl CriterionReport {
    pub fn status_line(&self) -> String {
        format!(
            "criterion {:2} ({:18}) {}",
            self.id,
            self.slug,
            if self.pass { "PASS" } else { "FAIL" }
        )
    }
}

/// One-shock scenario used by criteria 2, 3 and 9.
pub fn one_shock_scenario() -> MeetingScenario {
    validate_meeting(StepProfile::new(vec![0.0], vec![0.2, 0.8]).unwrap(), Some(1.0)).unwrap()
}

/// Symmetric two-shock scenario used by criteria 4, 5, 6, 8 and 10.
pub fn two_shock_scenario() -> MeetingScenario {
    validate_meeting(StepProfile::new(vec![-1.0, 1.0], vec![0.0, 0.5, 1.0]).unwrap(), None)
        .unwrap()
}

fn one_shock_params(epsilon: f64, seed: u64) -> EnsembleParams {
    EnsembleParams {
        epsilon,
        replicas: REPLICAS,
        base_seed: seed,
        capture_radius: 8,
        kappa: 3.0,
    }
}

fn two_shock_params(seed: u64) -> EnsembleParams {
    EnsembleParams {
        epsilon: TWO_SHOCK_EPSILON,
        replicas: REPLICAS,
        base_seed: seed,
        capture_radius: 64,
        kappa: 3.0,
    }
}

type Shared = OnceLock<Result<Arc<EnsembleResult>, String>>;

/// Lazily computed shared ensembles; criteria reuse them so the expensive
/// Monte Carlo work runs once per process.
pub struct Acceptance {
    seed: u64,
    one_shock: Shared,
    two_shock: Shared,
}

impl Default for Acceptance {
    fn default() -> Self {
        Self::new()
    }
}

impl Acceptance {
    pub fn new() -> Self {
        Self::with_seed(SUITE_SEED)
    }

    /// Suite with a non-default base seed, for robustness runs.
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, one_shock: Shared::new(), two_shock: Shared::new() }
    }

    fn one_shock_ensemble(&self) -> Result<Arc<EnsembleResult>, String> {
        let seed = self.seed;
        self.one_shock
            .get_or_init(|| {
                run_ensemble(&one_shock_scenario(), &one_shock_params(ONE_SHOCK_EPSILON, seed))
                    .map(Arc::new)
                    .map_err(|e| e.to_string())
            })
            .clone()
    }

    fn two_shock_ensemble(&self) -> Result<Arc<EnsembleResult>, String> {
        let seed = self.seed;
        self.two_shock
            .get_or_init(|| {
                run_ensemble(&two_shock_scenario(), &two_shock_params(seed))
                    .map(Arc::new)
                    .map_err(|e| e.to_string())
            })
            .clone()
    }

    pub fn run(&self, id: usize) -> CriterionReport {
        let (_, slug, title) = CRITERIA[id - 1];
        let outcome = match id {
            1 => criterion_oracle(self.seed),
            2 => self.one_shock_ensemble().and_then(|e| criterion_one_shock_gaussian(&e)),
            3 => self.one_shock_ensemble().and_then(|e| criterion_one_shock_mixture(&e, self.seed)),
            4 => self.two_shock_ensemble().and_then(|e| criterion_two_shock_law(&e, self.seed)),
            5 => self.two_shock_ensemble().and_then(|e| criterion_mixture_theorem(&e, self.seed)),
            6 => self.two_shock_ensemble().and_then(|e| criterion_density_field(&e, self.seed)),
            7 => criterion_psi(self.seed),
            8 => self.two_shock_ensemble().and_then(|e| criterion_coupling(&e)),
            9 => self.one_shock_ensemble().and_then(|e| criterion_predictor(&e, self.seed)),
            10 => self.two_shock_ensemble().and_then(|e| criterion_determinism(&e, self.seed)),
            _ => Err(format!("unknown criterion {id}")),
        };
        match outcome {
            Ok((pass, details)) => CriterionReport { id, slug, title, pass, details },
            Err(message) => CriterionReport {
                id,
                slug,
                title,
                pass: false,
                details: vec![format!("error: {message}")],
            },
        }
    }

    pub fn run_all(&self) -> Vec<CriterionReport> {
        CRITERIA.iter().map(|&(id, _, _)| self.run(id)).collect()
    }
}

type Outcome = Result<(bool, Vec<String>), String>;

fn check(details: &mut Vec<String>, pass: &mut bool, ok: bool, line: String) {
    details.push(format!("{} {}", if ok { "pass:" } else { "FAIL:" }, line));
    *pass &= ok;
}

/// Criterion 1: empirical law on a 5-site segment with 2 particles vs the
/// exact forward-equation solution, total variation below 0.01.
fn criterion_oracle(seed: u64) -> Outcome {
    let l = 5usize;
    let initial = 0b00011usize;
    let t = 0.5;
    let replicas = 100_000u64;
    let exact = exact_distribution(l, initial, t).map_err(|e| e.to_string())?;
    let masks: Vec<usize> = (0..replicas)
        .into_par_iter()
        .map(|i| simulate_segment(l, initial, t, seed ^ i).expect("segment run"))
        .collect();
    let mut hist = vec![0u64; 1 << l];
    for m in masks {
        hist[m] += 1;
    }
    let empirical: Vec<f64> = hist.iter().map(|&c| c as f64 / replicas as f64).collect();
    let tv = total_variation(&empirical, &exact);
    let mut details = Vec::new();
    let mut pass = true;
    check(&mut details, &mut pass, tv < 0.01, format!("total variation {tv:.5} < 0.01 at {replicas} replicas"));
    Ok((pass, details))
}

/// Criterion 2: one-shock Gaussian fluctuations at eps = 1/400.
fn criterion_one_shock_gaussian(ensemble: &EnsembleResult) -> Outcome {
    let xs = ensemble.x_scaled(1);
    let d_target = ensemble.scenario.limit_variance(1);
    let (mean, var) = mean_and_variance(&xs);
    let mut details = Vec::new();
    let mut pass = true;

    let rel = (var - d_target).abs() / d_target;
    check(
        &mut details,
        &mut pass,
        rel <= 0.15,
        format!("variance {var:.4} within 15% of D = {d_target:.4} (off by {:.1}%)", 100.0 * rel),
    );
    let (_, p_ks) = ks_one_sample(&xs, |x| normal_cdf(x / d_target.sqrt()));
    check(&mut details, &mut pass, p_ks > ALPHA, format!("KS normality p = {p_ks:.4} > {ALPHA}"));
    let se = (var / xs.len() as f64).sqrt();
    check(
        &mut details,
        &mut pass,
        mean.abs() <= 3.0 * se,
        format!("mean {mean:.4} within 3 sigma ({:.4}) of 0", 3.0 * se),
    );

    // Law of large numbers: |eps X - r*| < 5 sqrt(eps) sqrt(D) for >= 99%.
    let epsilon = ensemble.params.epsilon;
    let xc = ensemble.scenario.x_center(epsilon) as f64;
    let r_star = ensemble.scenario.r_star();
    let bound = 5.0 * epsilon.sqrt() * d_target.sqrt();
    let total = xs.len();
    let within = ensemble
        .valid_records()
        .filter(|r| {
            let x_abs = xc + r.x_scaled[0] / epsilon.sqrt();
            (epsilon * x_abs - r_star).abs() < bound
        })
        .count();
    let frac = within as f64 / total as f64;
    check(
        &mut details,
        &mut pass,
        frac >= 0.99,
        format!("law of large numbers holds for {:.2}% of replicas (need 99%)", 100.0 * frac),
    );
    Ok((pass, details))
}

/// Criterion 3: occupancy at the shifted origin is 0.5 +- 0.02.
fn criterion_one_shock_mixture(ensemble: &EnsembleResult, seed: u64) -> Outcome {
    let f = CylinderFunction::occupancy();
    let law = LimitLaw::from_scenario(&ensemble.scenario);
    let oracle = pushforward_oracle(&law, 200_000, seed).map_err(|e| e.to_string())?;
    let report =
        local_measure_estimate(ensemble, 0.0, &f, &oracle).map_err(|e| e.to_string())?;
    let mut details = Vec::new();
    let mut pass = true;
    check(
        &mut details,
        &mut pass,
        (report.estimate - 0.5).abs() <= 0.02,
        format!("occupancy at a=0 is {:.4}, target 0.5 +- 0.02", report.estimate),
    );
    details.push(format!("oracle cross-check: {}", report.summary_line()));
    Ok((pass, details))
}

/// Criterion 4: two-shock coalescence law.
fn criterion_two_shock_law(ensemble: &EnsembleResult, seed: u64) -> Outcome {
    let ys = ensemble.y_scaled_joint();
    let m = ys.len() as f64;
    let p_band = ys.iter().filter(|y| y[0] <= 0.0 && y[1] > 0.0).count() as f64 / m;
    let p_right = ys.iter().filter(|y| y[0] > 0.0).count() as f64 / m;
    let mut details = Vec::new();
    let mut pass = true;
    check(
        &mut details,
        &mut pass,
        (p_band - 0.25).abs() <= 0.03,
        format!("P(Y1 <= 0 < Y2) = {p_band:.4}, target 0.25 +- 0.03"),
    );
    check(
        &mut details,
        &mut pass,
        (p_right - 0.375).abs() <= 0.03,
        format!("P(Y1 > 0) = {p_right:.4}, target 0.375 +- 0.03"),
    );

    // Cross-check the derived targets with the pushforward oracle at M = 1e6.
    let law = LimitLaw::from_scenario(&ensemble.scenario);
    let big = pushforward_oracle(&law, 1_000_000, seed ^ 4).map_err(|e| e.to_string())?;
    let ob = big.iter().filter(|y| y[0] <= 0.0 && y[1] > 0.0).count() as f64 / big.len() as f64;
    let or = big.iter().filter(|y| y[0] > 0.0).count() as f64 / big.len() as f64;
    let se = 3.0 * (0.375f64 * 0.625 / big.len() as f64).sqrt();
    check(
        &mut details,
        &mut pass,
        (ob - 0.25).abs() < se && (or - 0.375).abs() < se,
        format!("oracle cross-check at M=1e6: {ob:.4} vs 0.25, {or:.4} vs 0.375"),
    );

    let oracle = pushforward_oracle(&law, 100_000, seed ^ 5).map_err(|e| e.to_string())?;
    for k in 1..=2usize {
        let sim = ensemble.y_scaled(k);
        let ora: Vec<f64> = oracle.iter().map(|y| y[k - 1]).collect();
        let (d, p) = ks_two_sample(&sim, &ora);
        check(
            &mut details,
            &mut pass,
            p > ALPHA,
            format!("two-sample KS for Y_{k}: D = {d:.4}, p = {p:.4} > {ALPHA}"),
        );
    }
    Ok((pass, details))
}

/// Criterion 5: local measure against the mixture of product measures.
fn criterion_mixture_theorem(ensemble: &EnsembleResult, seed: u64) -> Outcome {
    let f = CylinderFunction::occupancy();
    let law = LimitLaw::from_scenario(&ensemble.scenario);
    let oracle = pushforward_oracle(&law, 200_000, seed ^ 6).map_err(|e| e.to_string())?;
    let mut details = Vec::new();
    let mut pass = true;

    let at_zero =
        local_measure_estimate(ensemble, 0.0, &f, &oracle).map_err(|e| e.to_string())?;
    check(
        &mut details,
        &mut pass,
        (at_zero.estimate - 0.5).abs() <= 0.02,
        format!("occupancy at a=0 is {:.4}, target 0.5 +- 0.02", at_zero.estimate),
    );

    let at_one =
        local_measure_estimate(ensemble, 1.0, &f, &oracle).map_err(|e| e.to_string())?;
    check(
        &mut details,
        &mut pass,
        at_one.pass,
        format!("a=1 joint 99% interval: {}", at_one.summary_line()),
    );
    Ok((pass, details))
}

/// Criterion 6: density field functionals against the limiting measure.
fn criterion_density_field(ensemble: &EnsembleResult, seed: u64) -> Outcome {
    let f = CylinderFunction::occupancy();
    let law = LimitLaw::from_scenario(&ensemble.scenario);
    let oracle = pushforward_oracle(&law, 20_000, seed ^ 7).map_err(|e| e.to_string())?;
    let densities = ensemble.scenario.profile().densities().to_vec();
    let z = crate::stats::normal_quantile(1.0 - ALPHA / 2.0);
    let phis = [
        TestFunction::Triangular { center: 0.0, half_width: 1.5 },
        TestFunction::SmoothBump { center: 0.0, half_width: 2.0 },
        TestFunction::BoxMollified { center: 0.5, plateau: 0.75, taper: 0.5 },
    ];
    let mut details = Vec::new();
    let mut pass = true;
    for phi in &phis {
        let (sim, se_sim) =
            ensemble_field_functional(ensemble, &f, phi).map_err(|e| e.to_string())?;
        let (ora, se_ora) =
            oracle_field_functional(&oracle, &densities, &f, phi).map_err(|e| e.to_string())?;
        let tol = z * (se_sim * se_sim + se_ora * se_ora).sqrt();
        check(
            &mut details,
            &mut pass,
            (sim - ora).abs() <= tol,
            format!("{phi:?}: field {sim:.4} vs limit {ora:.4} (joint 99% tol {tol:.4})"),
        );
    }
    Ok((pass, details))
}

fn random_densities(rng: &mut ChaCha8Rng, count: usize) -> Vec<f64> {
    loop {
        let mut rho: Vec<f64> = (0..count).map(|_| rng.random_range(0.0..1.0)).collect();
        rho.sort_by(f64::total_cmp);
        if rho.windows(2).all(|w| w[1] - w[0] >= 0.05) {
            return rho;
        }
    }
}

/// Criterion 7: the coalescence map is well posed and matches its closed
/// forms and the time-marching oracle.
fn criterion_psi(seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 8);
    let mut details = Vec::new();
    let mut pass = true;

    let mut max_wp = 0.0f64;
    let mut max_p28 = 0.0f64;
    for _ in 0..10_000 {
        let rho = random_densities(&mut rng, 3);
        let x = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
        let t = ordering_time(&x, &rho);
        let a = psi(&x, &rho, Some(t)).map_err(|e| e.to_string())?;
        let b = psi(&x, &rho, Some(2.0 * t)).map_err(|e| e.to_string())?;
        for (u, v) in a.iter().zip(&b) {
            max_wp = max_wp.max((u - v).abs());
        }
        let closed = if x[0] <= x[1] {
            x.to_vec()
        } else {
            let w1 = (rho[1] - rho[0]) / (rho[2] - rho[0]);
            let w2 = (rho[2] - rho[1]) / (rho[2] - rho[0]);
            let merged = x[0] * w1 + x[1] * w2;
            vec![merged, merged]
        };
        for (u, v) in a.iter().zip(&closed) {
            max_p28 = max_p28.max((u - v).abs());
        }
    }
    check(&mut details, &mut pass, max_wp <= 1e-9, format!("n=2 pull-back independence: max dev {max_wp:.2e} <= 1e-9"));
    check(&mut details, &mut pass, max_p28 <= 1e-12, format!("n=2 closed form: max dev {max_p28:.2e} <= 1e-12"));

    let mut max_wp3 = 0.0f64;
    for _ in 0..10_000 {
        let rho = random_densities(&mut rng, 4);
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
        let t = ordering_time(&x, &rho);
        let a = psi(&x, &rho, Some(t)).map_err(|e| e.to_string())?;
        let b = psi(&x, &rho, Some(2.0 * t)).map_err(|e| e.to_string())?;
        for (u, v) in a.iter().zip(&b) {
            max_wp3 = max_wp3.max((u - v).abs());
        }
    }
    check(&mut details, &mut pass, max_wp3 <= 1e-9, format!("n=3 pull-back independence: max dev {max_wp3:.2e} <= 1e-9"));

    let mut max_march = 0.0f64;
    for _ in 0..200 {
        let rho = random_densities(&mut rng, 4);
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.5..1.5)).collect();
        let t = ordering_time(&x, &rho);
        let b: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(i, &xi)| xi - t * (1.0 - rho[i] - rho[i + 1]))
            .collect();
        let fast = psi(&x, &rho, None).map_err(|e| e.to_string())?;
        let slow = march_fronts(&b, &rho, t, 1e-4).map_err(|e| e.to_string())?;
        for (u, v) in fast.iter().zip(&slow) {
            max_march = max_march.max((u - v).abs());
        }
    }
    check(&mut details, &mut pass, max_march <= 1e-3, format!("n=3 time-marching oracle: max dev {max_march:.2e} <= 1e-3"));
    Ok((pass, details))
}

/// Criterion 8: coupling invariants with zero tolerance. The engine checks
/// nesting structurally (one priority per site), validates every tracker
/// block against its discrepancy range after every event, conserves
/// per-priority counts, and never splits blocks; any violation marks the
/// replica and fails here.
fn criterion_coupling(ensemble: &EnsembleResult) -> Outcome {
    let mut details = Vec::new();
    let mut pass = true;
    let violations: Vec<&str> = ensemble
        .records
        .iter()
        .filter_map(|r| r.failure.as_deref())
        .filter(|m| m.starts_with("invariant violated"))
        .collect();
    check(
        &mut details,
        &mut pass,
        violations.is_empty(),
        format!("{} invariant violations across {} replicas", violations.len(), ensemble.records.len()),
    );
    for v in violations.iter().take(5) {
        details.push(format!("  {v}"));
    }
    let unsorted = ensemble
        .valid_records()
        .filter(|r| r.y_scaled.windows(2).any(|w| w[0] > w[1]))
        .count();
    check(
        &mut details,
        &mut pass,
        unsorted == 0,
        format!("{unsorted} replicas with out-of-order shock positions"),
    );
    let boundary = ensemble.invalid_count();
    details.push(format!("note: {boundary} replicas invalid for boundary contact"));
    Ok((pass, details))
}

/// Criterion 9: predictor residual variance, small at eps = 1/400 and
/// decreasing along eps = 1/100 -> 1/200 -> 1/400.
fn criterion_predictor(fine: &EnsembleResult, seed: u64) -> Outcome {
    let scenario = one_shock_scenario();
    let coarse =
        run_ensemble(&scenario, &one_shock_params(1.0 / 100.0, seed)).map_err(|e| e.to_string())?;
    let middle =
        run_ensemble(&scenario, &one_shock_params(1.0 / 200.0, seed)).map_err(|e| e.to_string())?;

    let residual_variance = |ens: &EnsembleResult| -> f64 {
        let eps = ens.params.epsilon;
        let scale = eps.sqrt();
        let profile = ens.scenario.profile();
        let c = profile.breakpoints()[0];
        let delta = profile.densities()[1] - profile.densities()[0];
        let xc = ens.scenario.x_center(eps) as f64;
        let res: Vec<f64> = ens
            .valid_records()
            .map(|r| r.x_scaled[0] + scale * (xc - (c / eps + r.predictor_n[0] / delta)))
            .collect();
        mean_and_variance(&res).1
    };

    let v100 = residual_variance(&coarse);
    let v200 = residual_variance(&middle);
    let v400 = residual_variance(fine);
    let d = scenario.limit_variance(1);
    let mut details = Vec::new();
    let mut pass = true;
    check(
        &mut details,
        &mut pass,
        v400 < 0.25 * d,
        format!("residual variance {v400:.4} < 0.25 D = {:.4} at eps=1/400", 0.25 * d),
    );
    check(
        &mut details,
        &mut pass,
        v100 > v200 && v200 > v400,
        format!("residual variance decreases: {v100:.4} (1/100) > {v200:.4} (1/200) > {v400:.4} (1/400)"),
    );
    Ok((pass, details))
}

/// Criterion 10: rerunning the two-shock ensemble in a pool with a different
/// worker count reproduces the summary JSON and the records CSV byte for
/// byte.
fn criterion_determinism(baseline: &EnsembleResult, seed: u64) -> Outcome {
    let base_summary = serde_json::to_vec(&baseline.summary()).map_err(|e| e.to_string())?;
    let base_csv = baseline.records_csv();

    let current = rayon::current_num_threads();
    let alternate = if current == 3 { 2 } else { 3 };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(alternate)
        .build()
        .map_err(|e| e.to_string())?;
    let rerun = pool
        .install(|| run_ensemble(&two_shock_scenario(), &two_shock_params(seed)))
        .map_err(|e| e.to_string())?;
    let rerun_summary = serde_json::to_vec(&rerun.summary()).map_err(|e| e.to_string())?;
    let rerun_csv = rerun.records_csv();

    let mut details = Vec::new();
    let mut pass = true;
    check(
        &mut details,
        &mut pass,
        base_summary == rerun_summary,
        format!("summary JSON identical across {current} vs {alternate} workers"),
    );
    check(&mut details, &mut pass, base_csv == rerun_csv, "records CSV identical".into());
    Ok((pass, details))
}
