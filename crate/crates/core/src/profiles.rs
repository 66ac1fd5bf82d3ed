//! Macroscopic step profiles, meeting-point validation, product-measure
//! sampling of the coupled initial configurations, and exact expectations of
//! cylinder functions under the Bernoulli product measures.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{MulticlassConfig, HOLE};
use crate::error::{Error, Result};

/// Relative tolerance for the meeting-consistency check.
pub const MEETING_REL_TOL: f64 = 1e-9;

/// Largest cylinder-function radius; bounds the truth table at 2^25 entries.
pub const MAX_CYLINDER_RADIUS: usize = 12;

/// Stream id used to derive the initial-condition RNG from a seed, so that the
/// same seed can drive both sampling and dynamics without overlap.
pub(crate) const INIT_STREAM: u64 = 0x5eed_0001;

/// An increasing step density profile: densities `rho_0 < ... < rho_n` on the
/// intervals separated by breakpoints `c_1 < ... < c_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepProfile {
    breakpoints: Vec<f64>,
    densities: Vec<f64>,
}

impl StepProfile {
    pub fn new(breakpoints: Vec<f64>, densities: Vec<f64>) -> Result<Self> {
        if breakpoints.is_empty() {
            return Err(Error::BadInput("need at least one breakpoint".into()));
        }
        if densities.len() != breakpoints.len() + 1 {
            return Err(Error::BadInput(format!(
                "{} breakpoints require {} densities, got {}",
                breakpoints.len(),
                breakpoints.len() + 1,
                densities.len()
            )));
        }
        if breakpoints.len() > 250 {
            return Err(Error::BadInput("more than 250 shocks are not supported".into()));
        }
        if !breakpoints.iter().all(|c| c.is_finite()) {
            return Err(Error::BadInput("breakpoints must be finite".into()));
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::BadInput("breakpoints must be strictly increasing".into()));
        }
        if !densities.iter().all(|r| r.is_finite() && (0.0..=1.0).contains(r)) {
            return Err(Error::BadInput("densities must lie in [0, 1]".into()));
        }
        if densities.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::BadInput("densities must be strictly increasing".into()));
        }
        Ok(Self { breakpoints, densities })
    }

    /// Number of shocks `n`.
    pub fn shock_count(&self) -> usize {
        self.breakpoints.len()
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn densities(&self) -> &[f64] {
        &self.densities
    }

    /// Velocity of the isolated shock `k` (1-based): `1 - rho_{k-1} - rho_k`.
    pub fn shock_velocity(&self, k: usize) -> f64 {
        assert!((1..=self.shock_count()).contains(&k));
        1.0 - self.densities[k - 1] - self.densities[k]
    }

    /// Lattice site of the tagged label-`k` particle: `floor(c_k / epsilon)`.
    pub fn tagged_site(&self, k: usize, epsilon: f64) -> i64 {
        assert!((1..=self.shock_count()).contains(&k));
        (self.breakpoints[k - 1] / epsilon).floor() as i64
    }
}

/// A validated profile together with the common meeting point of its shocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeetingScenario {
    profile: StepProfile,
    r_star: f64,
    t_star: f64,
}

impl MeetingScenario {
    pub fn profile(&self) -> &StepProfile {
        &self.profile
    }

    /// Macroscopic meeting position `r*`.
    pub fn r_star(&self) -> f64 {
        self.r_star
    }

    /// Macroscopic meeting time `t*`.
    pub fn t_star(&self) -> f64 {
        self.t_star
    }

    /// Microscopic meeting time `t* / epsilon`.
    pub fn tau(&self, epsilon: f64) -> f64 {
        self.t_star / epsilon
    }

    /// Centering site `floor(r* / epsilon)`.
    pub fn x_center(&self, epsilon: f64) -> i64 {
        (self.r_star / epsilon).floor() as i64
    }

    /// Variance of the limiting Gaussian fluctuation of shock `k`:
    /// `(rho_{k-1}(1-rho_{k-1}) + rho_k(1-rho_k)) / (rho_k - rho_{k-1}) * t*`.
    pub fn limit_variance(&self, k: usize) -> f64 {
        let rho = self.profile.densities();
        let lo = rho[k - 1];
        let hi = rho[k];
        (lo * (1.0 - lo) + hi * (1.0 - hi)) / (hi - lo) * self.t_star
    }
}

/// Checks that all shocks of `profile` meet at a single space-time point and
/// returns the validated scenario.
///
/// For `n >= 2` the meeting time is forced by any adjacent pair of shocks,
/// `t* = (c_{k+1} - c_k) / (rho_{k+1} - rho_{k-1})`, and all pairs must agree
/// to relative tolerance [`MEETING_REL_TOL`]. A supplied hint must then agree
/// with the computed value. For `n = 1` any time qualifies, so the hint is
/// mandatory.
pub fn validate_meeting(profile: StepProfile, t_star_hint: Option<f64>) -> Result<MeetingScenario> {
    let n = profile.shock_count();
    if let Some(h) = t_star_hint {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::BadInput("t_star_hint must be positive and finite".into()));
        }
    }
    let t_star = if n == 1 {
        t_star_hint.ok_or(Error::MissingHint)?
    } else {
        let c = profile.breakpoints();
        let rho = profile.densities();
        let first = (c[1] - c[0]) / (rho[2] - rho[0]);
        for k in 1..n - 1 {
            let tk = (c[k + 1] - c[k]) / (rho[k + 2] - rho[k]);
            if (tk - first).abs() > MEETING_REL_TOL * first.abs() {
                return Err(Error::InconsistentMeeting(format!(
                    "pair (1,2) gives t*={first}, pair ({},{}) gives t*={tk}",
                    k + 1,
                    k + 2
                )));
            }
        }
        if let Some(h) = t_star_hint {
            if (h - first).abs() > MEETING_REL_TOL * first.abs() {
                return Err(Error::InconsistentMeeting(format!(
                    "hint t*={h} disagrees with computed t*={first}"
                )));
            }
        }
        first
    };
    let r_star = profile.breakpoints()[0] + profile.shock_velocity(1) * t_star;
    Ok(MeetingScenario { profile, r_star, t_star })
}

/// Draws the coupled initial configurations `sigma^0..sigma^n` on `window`,
/// encoded as one priority value per site.
///
/// Site `floor(c_j / epsilon)` holds the tagged label-`j` particle (priority
/// `j`); every other site draws one uniform `U_x` and receives priority
/// `min{k : U_x < rho_k}`, or a hole if no such `k` exists. The encoding makes
/// `sigma^k(x) = 1{priority(x) <= k}` for all `k` simultaneously.
///
/// The same uniforms also seed the companion plain configuration with the
/// unconditioned product profile: off the tagged sites it coincides with the
/// reconstruction, at a tagged site it is Bernoulli with the profile density
/// there, so the two differ at no more than `n` sites for all time.
pub fn sample_initial(
    scenario: &MeetingScenario,
    epsilon: f64,
    window: (i64, i64),
    seed: u64,
) -> Result<MulticlassConfig> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::BadInput(format!("epsilon must lie in (0, 1], got {epsilon}")));
    }
    let profile = scenario.profile();
    let n = profile.shock_count();
    let (lo, hi) = window;
    if lo >= hi {
        return Err(Error::BadInput(format!("empty window ({lo}, {hi})")));
    }
    let mut tagged = Vec::with_capacity(n);
    for k in 1..=n {
        let site = profile.tagged_site(k, epsilon);
        if site < lo || site > hi {
            return Err(Error::WindowTooSmall { site, window });
        }
        if let Some(prev) = tagged.last() {
            if *prev == site {
                return Err(Error::TaggedCollision { a: k - 1, b: k, site });
            }
        }
        tagged.push(site);
    }

    let len = (hi - lo + 1) as usize;
    let mut priority = vec![HOLE; len];
    let mut label_at = vec![0u8; len];
    let mut eta = vec![0u8; len];
    let rho = profile.densities();
    // Profile density at a tagged site per the half-open macroscopic profile.
    let mu_density: Vec<f64> = tagged
        .iter()
        .map(|&site| {
            let r = epsilon * site as f64;
            let region = profile.breakpoints().iter().filter(|&&c| c <= r).count();
            rho[region]
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(INIT_STREAM);
    let mut next_tag = 0usize;
    for i in 0..len {
        let x = lo + i as i64;
        let u: f64 = rng.random();
        if next_tag < n && tagged[next_tag] == x {
            priority[i] = (next_tag + 1) as u8;
            label_at[i] = (next_tag + 1) as u8;
            eta[i] = u8::from(u < mu_density[next_tag]);
            next_tag += 1;
            continue;
        }
        priority[i] = rho
            .iter()
            .position(|&r| u < r)
            .map_or(HOLE, |k| k as u8);
        eta[i] = u8::from(u < rho[next_tag]);
    }
    MulticlassConfig::from_parts(window, priority, label_at, tagged, Some(eta))
}

/// A function of the configuration restricted to the sites `{-M..M}`,
/// represented by its full truth table. Bit `i` of a pattern index is the
/// occupancy of site `i - M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CylinderFunction {
    window_radius: usize,
    table: Vec<f64>,
}

impl CylinderFunction {
    pub fn new(window_radius: usize, table: Vec<f64>) -> Result<Self> {
        if window_radius > MAX_CYLINDER_RADIUS {
            return Err(Error::BadInput(format!(
                "cylinder radius {window_radius} exceeds the limit {MAX_CYLINDER_RADIUS}"
            )));
        }
        let expected = 1usize << (2 * window_radius + 1);
        if table.len() != expected {
            return Err(Error::BadInput(format!(
                "radius {window_radius} needs a table of {expected} entries, got {}",
                table.len()
            )));
        }
        if !table.iter().all(|v| v.is_finite()) {
            return Err(Error::BadInput("table values must be finite".into()));
        }
        Ok(Self { window_radius, table })
    }

    /// Builds the table by enumerating all patterns; `pattern[i]` is the
    /// occupancy of site `i - M`.
    pub fn from_fn(window_radius: usize, f: impl Fn(&[bool]) -> f64) -> Result<Self> {
        let width = 2 * window_radius + 1;
        if window_radius > MAX_CYLINDER_RADIUS {
            return Err(Error::BadInput(format!(
                "cylinder radius {window_radius} exceeds the limit {MAX_CYLINDER_RADIUS}"
            )));
        }
        let mut pattern = vec![false; width];
        let table = (0..1usize << width)
            .map(|idx| {
                for (i, slot) in pattern.iter_mut().enumerate() {
                    *slot = idx >> i & 1 == 1;
                }
                f(&pattern)
            })
            .collect();
        Self::new(window_radius, table)
    }

    /// Occupancy of the origin: `f(eta) = eta(0)`.
    pub fn occupancy() -> Self {
        Self { window_radius: 0, table: vec![0.0, 1.0] }
    }

    /// Indicator of one exact pattern on `{-M..M}`.
    pub fn indicator(pattern: &[bool]) -> Result<Self> {
        if pattern.len().is_multiple_of(2) {
            return Err(Error::BadInput("pattern must have odd width".into()));
        }
        let radius = pattern.len() / 2;
        let idx: usize = pattern
            .iter()
            .enumerate()
            .map(|(i, &b)| usize::from(b) << i)
            .sum();
        Self::from_fn(radius, |p| {
            let q: usize = p.iter().enumerate().map(|(i, &b)| usize::from(b) << i).sum();
            f64::from(q == idx)
        })
    }

    pub fn window_radius(&self) -> usize {
        self.window_radius
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    /// Evaluates `f(theta_center eta)` where `occ(x)` gives the occupancy of
    /// the absolute site `x`.
    pub fn evaluate(&self, center: i64, occ: impl Fn(i64) -> bool) -> f64 {
        let m = self.window_radius as i64;
        let mut idx = 0usize;
        for (i, s) in (-m..=m).enumerate() {
            idx |= usize::from(occ(center + s)) << i;
        }
        self.table[idx]
    }

    /// Uniform bound `max |f|`, used for test-side error estimates.
    pub fn sup_norm(&self) -> f64 {
        self.table.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
    }
}

/// Exact expectation of `f` under the product Bernoulli measure with density
/// `rho`, by enumeration of all `2^(2M+1)` patterns.
pub fn nu_expectation(f: &CylinderFunction, rho: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::BadInput(format!("density must lie in [0, 1], got {rho}")));
    }
    let width = 2 * f.window_radius() + 1;
    let mut total = 0.0;
    for (idx, value) in f.table().iter().enumerate() {
        if *value == 0.0 {
            continue;
        }
        let ones = idx.count_ones();
        let weight = rho.powi(ones as i32) * (1.0 - rho).powi((width as u32 - ones) as i32);
        total += value * weight;
    }
    Ok(total)
}
