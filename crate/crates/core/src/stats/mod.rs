//! Seeded ensemble driver and statistical verification of the limit laws:
//! Gaussian fluctuation checks, the coalescence-map pushforward oracle,
//! mixture weights at the meeting point, local-measure estimates, and the
//! density-field functionals.

pub mod hypothesis;
pub mod testfns;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::burgers::psi;
use crate::dynamics::{
    evolve, n_predictor, reconstruct_eta_prime, CrossingEvent, EvolveOptions, ShockTracker,
};
use crate::error::{Error, Result};
use crate::profiles::{nu_expectation, sample_initial, CylinderFunction, MeetingScenario};

pub use hypothesis::{
    gaussian_check, ks_one_sample, ks_two_sample, mean_and_variance, normal_cdf, normal_quantile,
    GaussianCheck, TestReport, ALPHA,
};
pub use testfns::TestFunction;

const ORACLE_STREAM: u64 = 0x5eed_0003;
const GAUSS_STREAM: u64 = 0x5eed_0004;

/// Seed of replica `index` under base seed `base`: output `index` of the
/// SplitMix64 stream keyed at `base`. Counter-based, so shards of any
/// partition of the index range reproduce the full run, and distinct base
/// seeds give unrelated replica seeds (a plain XOR would permute the same
/// seed set across nearby base seeds).
pub fn replica_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The limiting law of the shock fluctuations: independent centered Gaussians
/// with variances `D_k`, pushed through the coalescence map for the joint law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitLaw {
    densities: Vec<f64>,
    variances: Vec<f64>,
}

impl LimitLaw {
    pub fn from_scenario(scenario: &MeetingScenario) -> Self {
        let n = scenario.profile().shock_count();
        let variances = (1..=n).map(|k| scenario.limit_variance(k)).collect();
        Self { densities: scenario.profile().densities().to_vec(), variances }
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn densities(&self) -> &[f64] {
        &self.densities
    }

    pub fn shock_count(&self) -> usize {
        self.variances.len()
    }
}

/// Draws `m` samples of the independent Gaussian fluctuations `(X_1..X_n)`.
pub fn gaussian_samples(law: &LimitLaw, m: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(GAUSS_STREAM);
    let sd: Vec<f64> = law.variances.iter().map(|d| d.sqrt()).collect();
    (0..m)
        .map(|_| sd.iter().map(|s| s * rng.sample::<f64, _>(StandardNormal)).collect())
        .collect()
}

/// Draws `m` samples of the joint limit `(Y_1..Y_n) = psi(X_1..X_n)`.
pub fn pushforward_oracle(law: &LimitLaw, m: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if m == 0 {
        return Err(Error::BadInput("need at least one oracle sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(ORACLE_STREAM);
    let sd: Vec<f64> = law.variances.iter().map(|d| d.sqrt()).collect();
    let mut out = Vec::with_capacity(m);
    let mut x = vec![0.0f64; law.shock_count()];
    for _ in 0..m {
        for (xi, s) in x.iter_mut().zip(&sd) {
            *xi = s * rng.sample::<f64, _>(StandardNormal);
        }
        out.push(psi(&x, &law.densities, None)?);
    }
    Ok(out)
}

/// Index of the band containing `a`: `#{j : y_j <= a}`.
fn band(y: &[f64], a: f64) -> usize {
    y.iter().take_while(|&&v| v <= a).count()
}

/// Empirical weights `w_k = P(Y_k <= a < Y_{k+1})` from joint samples, with
/// `Y_0 = -inf` and `Y_{n+1} = +inf`. The weights sum to one exactly; the
/// largest component absorbs the rounding of the divisions.
pub fn mixture_weights(y_samples: &[Vec<f64>], a: f64) -> Vec<f64> {
    assert!(!y_samples.is_empty(), "mixture_weights needs samples");
    let n = y_samples[0].len();
    let mut counts = vec![0u64; n + 1];
    for y in y_samples {
        counts[band(y, a)] += 1;
    }
    let m = y_samples.len() as f64;
    let mut w: Vec<f64> = counts.iter().map(|&c| c as f64 / m).collect();
    // Nudge the largest weight by single ulps until the left-to-right sum is
    // exactly one; the steps are below the sum's rounding grid, so the loop
    // cannot jump over it.
    let imax = (0..w.len()).max_by(|&i, &j| w[i].total_cmp(&w[j])).unwrap();
    let total = |w: &[f64]| w.iter().sum::<f64>();
    let mut guard = 0u32;
    while total(&w) > 1.0 && guard < 100_000 {
        w[imax] = w[imax].next_down();
        guard += 1;
    }
    while total(&w) < 1.0 && guard < 100_000 {
        w[imax] = w[imax].next_up();
        guard += 1;
    }
    w
}

/// Ensemble run parameters. The window is sized as the tagged sites plus
/// `ceil(kappa * t*/epsilon)` on each side so that boundary effects cannot
/// reach the tracked region except with exponentially small probability;
/// violations surface as invalid replicas, never silently.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleParams {
    pub epsilon: f64,
    pub replicas: usize,
    pub base_seed: u64,
    /// Sites captured around the centering site for observables.
    pub capture_radius: i64,
    pub kappa: f64,
}

impl EnsembleParams {
    pub fn new(epsilon: f64, replicas: usize, base_seed: u64) -> Self {
        Self { epsilon, replicas, base_seed, capture_radius: 0, kappa: 3.0 }
    }

    pub fn with_capture(mut self, radius: i64) -> Self {
        self.capture_radius = radius;
        self
    }
}

/// Per-replica outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaRecord {
    pub index: u64,
    pub seed: u64,
    pub valid: bool,
    /// Why the replica is invalid (boundary contact or, worse, a violated
    /// coupling invariant). `None` for valid replicas.
    pub failure: Option<String>,
    /// `eps^{1/2} (X^k - [x_eps])` per label.
    pub x_scaled: Vec<f64>,
    /// `eps^{1/2} (Y^k - [x_eps])` per label.
    pub y_scaled: Vec<f64>,
    /// Initial-condition predictor counts `N^k`.
    pub predictor_n: Vec<f64>,
    pub crossings: Vec<CrossingEvent>,
    /// Final `eta'` on the capture window, empty when capture is disabled.
    pub eta: Vec<bool>,
}

/// Replica records with enough metadata to merge shards and evaluate
/// observables. Merge is associative and commutative; records stay sorted by
/// replica index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub scenario: MeetingScenario,
    pub params: EnsembleParams,
    pub records: Vec<ReplicaRecord>,
}

impl EnsembleResult {
    pub fn shock_count(&self) -> usize {
        self.scenario.profile().shock_count()
    }

    pub fn valid_records(&self) -> impl Iterator<Item = &ReplicaRecord> {
        self.records.iter().filter(|r| r.valid)
    }

    pub fn invalid_count(&self) -> usize {
        self.records.iter().filter(|r| !r.valid).count()
    }

    /// Scaled tagged-particle fluctuations of label `k` over valid replicas.
    pub fn x_scaled(&self, k: usize) -> Vec<f64> {
        self.valid_records().map(|r| r.x_scaled[k - 1]).collect()
    }

    /// Scaled coalescing-shock fluctuations of label `k` over valid replicas.
    pub fn y_scaled(&self, k: usize) -> Vec<f64> {
        self.valid_records().map(|r| r.y_scaled[k - 1]).collect()
    }

    /// Joint scaled `Y` vectors over valid replicas.
    pub fn y_scaled_joint(&self) -> Vec<Vec<f64>> {
        self.valid_records().map(|r| r.y_scaled.clone()).collect()
    }

    pub fn merge(mut self, mut other: EnsembleResult) -> Result<EnsembleResult> {
        if self.scenario != other.scenario || self.params.epsilon != other.params.epsilon
            || self.params.base_seed != other.params.base_seed
            || self.params.capture_radius != other.params.capture_radius
            || self.params.kappa != other.params.kappa
        {
            return Err(Error::MergeMismatch("ensembles have different parameters".into()));
        }
        self.records.append(&mut other.records);
        self.records.sort_by_key(|r| r.index);
        for pair in self.records.windows(2) {
            if pair[0].index == pair[1].index {
                return Err(Error::MergeMismatch(format!(
                    "duplicate replica index {}",
                    pair[0].index
                )));
            }
        }
        self.params.replicas = self.records.len();
        Ok(self)
    }

    /// CSV export: one row per (replica, label).
    pub fn records_csv(&self) -> String {
        let mut out = String::from("replica,seed,k,x_scaled,y_scaled,valid\n");
        for r in &self.records {
            for k in 1..=self.shock_count() {
                let (x, y) = if r.valid {
                    (r.x_scaled[k - 1].to_string(), r.y_scaled[k - 1].to_string())
                } else {
                    (String::from("nan"), String::from("nan"))
                };
                out.push_str(&format!("{},{},{},{},{},{}\n", r.index, r.seed, k, x, y, r.valid));
            }
        }
        out
    }

    /// Occupancy lookup on a record's capture window; `site` is relative to
    /// the centering site `[x_eps]`.
    pub fn capture_occupancy(&self, record: &ReplicaRecord, site: i64) -> Option<bool> {
        let radius = self.params.capture_radius;
        if site < -radius || site > radius || record.eta.is_empty() {
            return None;
        }
        Some(record.eta[(site + radius) as usize])
    }

    pub fn summary(&self) -> EnsembleSummary {
        let n = self.shock_count();
        let valid = self.records.len() - self.invalid_count();
        let labels = (1..=n)
            .map(|k| {
                let xs = self.x_scaled(k);
                let ys = self.y_scaled(k);
                let target = self.scenario.limit_variance(k);
                let (mean_x, var_x) =
                    if xs.len() >= 2 { mean_and_variance(&xs) } else { (f64::NAN, f64::NAN) };
                let (mean_y, var_y) =
                    if ys.len() >= 2 { mean_and_variance(&ys) } else { (f64::NAN, f64::NAN) };
                LabelSummary {
                    k,
                    variance_target: target,
                    mean_x,
                    var_x,
                    mean_y,
                    var_y,
                    gaussian_check: gaussian_check(&xs, target).ok(),
                }
            })
            .collect();
        EnsembleSummary {
            epsilon: self.params.epsilon,
            replicas: self.records.len(),
            valid,
            invalid: self.invalid_count(),
            base_seed: self.params.base_seed,
            capture_radius: self.params.capture_radius,
            t_star: self.scenario.t_star(),
            r_star: self.scenario.r_star(),
            labels,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelSummary {
    pub k: usize,
    pub variance_target: f64,
    pub mean_x: f64,
    pub var_x: f64,
    pub mean_y: f64,
    pub var_y: f64,
    pub gaussian_check: Option<GaussianCheck>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub epsilon: f64,
    pub replicas: usize,
    pub valid: usize,
    pub invalid: usize,
    pub base_seed: u64,
    pub capture_radius: i64,
    pub t_star: f64,
    pub r_star: f64,
    pub labels: Vec<LabelSummary>,
}

/// Window for one replica of the given scenario.
pub fn ensemble_window(scenario: &MeetingScenario, params: &EnsembleParams) -> (i64, i64) {
    let profile = scenario.profile();
    let n = profile.shock_count();
    let margin = (params.kappa * scenario.tau(params.epsilon)).ceil() as i64;
    let lo = profile.tagged_site(1, params.epsilon) - margin;
    let hi = profile.tagged_site(n, params.epsilon) + margin;
    (lo, hi)
}

fn run_replica(
    scenario: &MeetingScenario,
    params: &EnsembleParams,
    window: (i64, i64),
    index: u64,
) -> Result<ReplicaRecord> {
    let seed = replica_seed(params.base_seed, index);
    let epsilon = params.epsilon;
    let n = scenario.profile().shock_count();
    let mut config = sample_initial(scenario, epsilon, window, seed)?;
    let counts0 = config.particle_counts();
    let eta_count0 = config.eta_count();
    let predictor_n: Vec<f64> = (1..=n)
        .map(|k| n_predictor(&config, scenario, k, scenario.t_star(), epsilon))
        .collect::<Result<_>>()?;
    let mut tracker = ShockTracker::new(&config);
    let tau = scenario.tau(epsilon);
    let outcome = evolve(
        &mut config,
        Some(&mut tracker),
        tau,
        seed,
        EvolveOptions { paranoid: true, log: None },
    );
    let mut failure = match outcome {
        Ok(_) => None,
        Err(Error::BoundaryReached { position, time, .. }) => {
            Some(format!("boundary reached at site {position}, time {time:.3}"))
        }
        Err(Error::BadInput(msg)) => Some(format!("invariant violated: {msg}")),
        Err(e) => return Err(e),
    };
    if failure.is_none() && config.particle_counts() != counts0 {
        failure = Some("invariant violated: per-priority counts not conserved".into());
    }
    if failure.is_none() && config.eta_count() != eta_count0 {
        failure = Some("invariant violated: companion particle count not conserved".into());
    }
    if failure.is_none()
        && tracker.crossings().windows(2).any(|w| w[0].time > w[1].time)
    {
        failure = Some("invariant violated: crossing times decrease".into());
    }
    if failure.is_none() {
        // The unconditioned configuration and the reconstruction may disagree
        // only at the surviving pair discrepancies.
        let prime = reconstruct_eta_prime(&config, &tracker);
        let (lo, hi) = config.window();
        let diff = (lo..=hi)
            .zip(&prime)
            .filter(|&(x, &p)| config.eta_at(x) != Some(p))
            .count();
        if diff > n {
            failure =
                Some(format!("invariant violated: {diff} pair discrepancies exceed {n}"));
        }
    }
    let valid = failure.is_none();
    let xc = scenario.x_center(epsilon);
    let scale = epsilon.sqrt();
    let (x_scaled, y_scaled, crossings, eta) = if valid {
        let xs = (1..=n).map(|k| scale * (config.tagged_position(k) - xc) as f64).collect();
        let ys = (1..=n)
            .map(|k| scale * (tracker.position_of_label(k) - xc) as f64)
            .collect();
        let eta = if params.capture_radius > 0 {
            (xc - params.capture_radius..=xc + params.capture_radius)
                .map(|x| config.eta_at(x).expect("companion configuration present"))
                .collect()
        } else {
            Vec::new()
        };
        (xs, ys, tracker.crossings().to_vec(), eta)
    } else {
        (vec![f64::NAN; n], vec![f64::NAN; n], Vec::new(), Vec::new())
    };
    Ok(ReplicaRecord {
        index,
        seed,
        valid,
        failure,
        x_scaled,
        y_scaled,
        predictor_n,
        crossings,
        eta,
    })
}

/// Runs `params.replicas` independent trajectories to the meeting time
/// `t*/epsilon` and records scaled tracked positions, predictor counts and
/// captured occupancies. Replica `i` derives its seed via [`replica_seed`],
/// so shard runs with disjoint index ranges merge into exactly the single-run
/// result. Fails if more than 1% of replicas are invalid.
pub fn run_ensemble(scenario: &MeetingScenario, params: &EnsembleParams) -> Result<EnsembleResult> {
    run_ensemble_shard(scenario, params, 0..params.replicas as u64)
}

/// Runs the replica index range `shard` of the full ensemble.
pub fn run_ensemble_shard(
    scenario: &MeetingScenario,
    params: &EnsembleParams,
    shard: std::ops::Range<u64>,
) -> Result<EnsembleResult> {
    if !(params.epsilon > 0.0 && params.epsilon <= 1.0) {
        return Err(Error::BadInput(format!("epsilon must lie in (0, 1], got {}", params.epsilon)));
    }
    if !params.kappa.is_finite() || params.kappa < 1.0 {
        return Err(Error::BadInput(format!("kappa must be >= 1, got {}", params.kappa)));
    }
    if params.capture_radius < 0 {
        return Err(Error::BadInput("capture radius must be >= 0".into()));
    }
    let window = ensemble_window(scenario, params);
    let xc = scenario.x_center(params.epsilon);
    if params.capture_radius > 0
        && (xc - params.capture_radius <= window.0 || xc + params.capture_radius >= window.1)
    {
        return Err(Error::BadInput("capture window exceeds the simulation window".into()));
    }
    let records: Vec<ReplicaRecord> = shard
        .clone()
        .into_par_iter()
        .map(|i| run_replica(scenario, params, window, i))
        .collect::<Result<Vec<_>>>()?;
    let result = EnsembleResult {
        scenario: scenario.clone(),
        params: EnsembleParams { replicas: records.len(), ..params.clone() },
        records,
    };
    let invalid = result.invalid_count();
    if invalid as f64 > 0.01 * result.records.len() as f64 {
        return Err(Error::TooManyInvalid { invalid, total: result.records.len() });
    }
    Ok(result)
}

/// Compares the ensemble's local measure around `[x_eps + a eps^{-1/2}]`
/// against the mixture target computed from pushforward oracle samples.
/// Passes when the difference lies inside the joint 99% interval.
pub fn local_measure_estimate(
    result: &EnsembleResult,
    a: f64,
    f: &CylinderFunction,
    oracle_y: &[Vec<f64>],
) -> Result<TestReport> {
    let epsilon = result.params.epsilon;
    let xc = result.scenario.x_center(epsilon);
    let obs_site =
        (result.scenario.r_star() / epsilon + a / epsilon.sqrt()).floor() as i64;
    let rel = obs_site - xc;
    let m = f.window_radius() as i64;
    let radius = result.params.capture_radius;
    if rel - m < -radius || rel + m > radius {
        return Err(Error::ObservableMissing { lo: rel - m, hi: rel + m, radius });
    }
    let values: Vec<f64> = result
        .valid_records()
        .map(|r| f.evaluate(rel, |site| result.capture_occupancy(r, site).unwrap()))
        .collect();
    if values.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let (est, var) = if values.len() >= 2 {
        mean_and_variance(&values)
    } else {
        (values[0], 0.0)
    };
    let se_sim = (var / values.len() as f64).sqrt();

    let densities = result.scenario.profile().densities();
    let nu: Vec<f64> =
        densities.iter().map(|&rho| nu_expectation(f, rho)).collect::<Result<_>>()?;
    let oracle_vals: Vec<f64> = oracle_y.iter().map(|y| nu[band(y, a)]).collect();
    let (target, var_o) = mean_and_variance(&oracle_vals);
    let se_o = (var_o / oracle_vals.len() as f64).sqrt();

    let z = normal_quantile(1.0 - ALPHA / 2.0);
    let tolerance = z * (se_sim * se_sim + se_o * se_o).sqrt();
    let mut report = TestReport::by_tolerance(
        format!("local measure at a={a}"),
        est,
        (est - z * se_sim, est + z * se_sim),
        target,
        tolerance,
    );
    report.p_value = None;
    Ok(report)
}

/// The empirical field functional
/// `eps^{1/2} sum_x f(theta_{x+[x_eps]} eta) phi(eps^{1/2} x)` evaluated on a
/// captured configuration; `eta[center_index]` is the occupancy at `[x_eps]`.
pub fn density_field_functional(
    eta: &[bool],
    center_index: usize,
    epsilon: f64,
    f: &CylinderFunction,
    phi: &TestFunction,
) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::BadInput(format!("epsilon must lie in (0, 1], got {epsilon}")));
    }
    let scale = epsilon.sqrt();
    let (lo, hi) = phi.support();
    let x_lo = (lo / scale).ceil() as i64;
    let x_hi = (hi / scale).floor() as i64;
    let m = f.window_radius() as i64;
    let first = center_index as i64 + x_lo - m;
    let last = center_index as i64 + x_hi + m;
    if first < 0 || last >= eta.len() as i64 {
        return Err(Error::SupportTooWide { lo, hi, epsilon });
    }
    let mut total = 0.0;
    for x in x_lo..=x_hi {
        let weight = phi.evaluate(scale * x as f64);
        if weight == 0.0 {
            continue;
        }
        let value = f.evaluate(x, |site| eta[(center_index as i64 + site) as usize]);
        total += value * weight;
    }
    Ok(scale * total)
}

/// Mean and standard error of the field functional over an ensemble's valid
/// replicas.
pub fn ensemble_field_functional(
    result: &EnsembleResult,
    f: &CylinderFunction,
    phi: &TestFunction,
) -> Result<(f64, f64)> {
    let center = result.params.capture_radius as usize;
    let values: Vec<f64> = result
        .valid_records()
        .map(|r| density_field_functional(&r.eta, center, result.params.epsilon, f, phi))
        .collect::<Result<_>>()?;
    if values.len() < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: values.len() });
    }
    let (mean, var) = mean_and_variance(&values);
    Ok((mean, (var / values.len() as f64).sqrt()))
}

/// The limiting random measure applied to `phi` for one sample of the shock
/// positions: `sum_k nu_{rho_k}(f) * integral of phi over [Y_k, Y_{k+1})`.
pub fn limit_field_functional(
    y_sample: &[f64],
    densities: &[f64],
    f: &CylinderFunction,
    phi: &TestFunction,
) -> Result<f64> {
    if y_sample.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::BadInput("shock positions must be nondecreasing".into()));
    }
    if densities.len() != y_sample.len() + 1 {
        return Err(Error::BadInput("densities and positions disagree".into()));
    }
    let (lo, hi) = phi.support();
    let mut total = 0.0;
    for (k, &rho) in densities.iter().enumerate() {
        let left = if k == 0 { lo } else { y_sample[k - 1].max(lo) };
        let right = if k == y_sample.len() { hi } else { y_sample[k].min(hi) };
        if right <= left {
            continue;
        }
        let nu = nu_expectation(f, rho)?;
        if nu == 0.0 {
            continue;
        }
        total += nu * hypothesis::integrate(&|a| phi.evaluate(a), left, right, 1e-9);
    }
    Ok(total)
}

/// Mean and standard error of [`limit_field_functional`] over oracle samples.
pub fn oracle_field_functional(
    y_samples: &[Vec<f64>],
    densities: &[f64],
    f: &CylinderFunction,
    phi: &TestFunction,
) -> Result<(f64, f64)> {
    let values: Vec<f64> = y_samples
        .iter()
        .map(|y| limit_field_functional(y, densities, f, phi))
        .collect::<Result<_>>()?;
    if values.len() < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: values.len() });
    }
    let (mean, var) = mean_and_variance(&values);
    Ok((mean, (var / values.len() as f64).sqrt()))
}
