//! Discrete-event simulation of the coupled multiclass totally asymmetric
//! exclusion process via the graphical construction.
//!
//! A single priority value per site encodes all coupled configurations at
//! once: `sigma^k(x) = 1{priority(x) <= k}`, holes carry the largest value.
//! An arrow at bond `(x, x+1)` exchanges the contents iff
//! `priority(x) < priority(x+1)`, which reproduces simple exclusion for every
//! marginal `sigma^k` simultaneously and gives lower labels priority over
//! higher ones.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profiles::MeetingScenario;

/// Priority value of an empty site; compares greater than every particle.
pub const HOLE: u8 = u8::MAX;

/// Stream id for the dynamics RNG (the initial sampler uses its own stream).
pub(crate) const DYN_STREAM: u64 = 0x5eed_0002;

/// Tracked positions abort the run when they come this close to the window.
const BOUNDARY_MARGIN: i64 = 2;

/// Lattice window with per-site priority values and tagged particles.
#[derive(Debug, Clone, PartialEq)]
pub struct MulticlassConfig {
    window: (i64, i64),
    priority: Vec<u8>,
    label_at: Vec<u8>,
    tagged: Vec<i64>,
    /// The companion plain-exclusion configuration started from the
    /// unconditioned product profile, evolved on the same arrows. It differs
    /// from the reconstruction `eta'` at no more than `n` sites (the pair
    /// discrepancies of the coupling). Absent for bare segment configs.
    eta: Option<Vec<u8>>,
    time: f64,
}

impl MulticlassConfig {
    pub(crate) fn from_parts(
        window: (i64, i64),
        priority: Vec<u8>,
        label_at: Vec<u8>,
        tagged: Vec<i64>,
        eta: Option<Vec<u8>>,
    ) -> Result<Self> {
        let (lo, hi) = window;
        let len = (hi - lo + 1) as usize;
        if priority.len() != len || label_at.len() != len {
            return Err(Error::BadInput("window and site arrays disagree".into()));
        }
        if tagged.len() > 250 {
            return Err(Error::BadInput("more than 250 tagged labels".into()));
        }
        if let Some(e) = &eta {
            if e.len() != len || e.iter().any(|&v| v > 1) {
                return Err(Error::BadInput("companion configuration malformed".into()));
            }
        }
        let config = Self { window, priority, label_at, tagged, eta, time: 0.0 };
        for (idx, &site) in config.tagged.iter().enumerate() {
            let label = idx + 1;
            if config.priority_at(site) != label as u8 || config.label_at(site) != label as u8 {
                return Err(Error::BadInput(format!(
                    "tagged site {site} does not hold label {label}"
                )));
            }
        }
        Ok(config)
    }

    /// A window holding plain particles (priority 0) and holes, no tags.
    pub fn from_occupancies(window: (i64, i64), occupied: &[bool]) -> Result<Self> {
        let priority = occupied.iter().map(|&b| if b { 0 } else { HOLE }).collect();
        let label_at = vec![0; occupied.len()];
        Self::from_parts(window, priority, label_at, Vec::new(), None)
    }

    /// Inclusive window bounds.
    pub fn window(&self) -> (i64, i64) {
        self.window
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Number of coupled labels `n`.
    pub fn label_count(&self) -> usize {
        self.tagged.len()
    }

    fn idx(&self, x: i64) -> usize {
        debug_assert!(x >= self.window.0 && x <= self.window.1);
        (x - self.window.0) as usize
    }

    pub fn priority_at(&self, x: i64) -> u8 {
        self.priority[self.idx(x)]
    }

    /// Tagged label at `x`, or 0 when the site is untagged.
    pub fn label_at(&self, x: i64) -> u8 {
        self.label_at[self.idx(x)]
    }

    /// Occupancy of `x` in the coupled configuration `sigma^k`.
    pub fn sigma(&self, k: u8, x: i64) -> bool {
        self.priority_at(x) <= k
    }

    /// Current site of the tagged label-`k` particle.
    pub fn tagged_position(&self, k: usize) -> i64 {
        self.tagged[k - 1]
    }

    pub fn tagged_positions(&self) -> &[i64] {
        &self.tagged
    }

    /// Particle count per priority value (index 255 counts holes).
    pub fn particle_counts(&self) -> [u64; 256] {
        let mut counts = [0u64; 256];
        for &p in &self.priority {
            counts[p as usize] += 1;
        }
        counts
    }

    /// Occupancy of the companion unconditioned configuration at `x`, when
    /// the configuration carries one.
    pub fn eta_at(&self, x: i64) -> Option<bool> {
        self.eta.as_ref().map(|e| e[self.idx(x)] == 1)
    }

    pub fn has_eta(&self) -> bool {
        self.eta.is_some()
    }

    /// Particle count of the companion configuration.
    pub fn eta_count(&self) -> Option<u64> {
        self.eta.as_ref().map(|e| e.iter().map(|&v| u64::from(v)).sum())
    }

    pub(crate) fn priorities(&self) -> &[u8] {
        &self.priority
    }

    #[cfg(test)]
    pub(crate) fn set_time(&mut self, t: f64) {
        self.time = t;
    }

    #[allow(clippy::type_complexity)]
    pub(crate) fn raw_parts(&self) -> ((i64, i64), &[u8], &[u8], &[i64], Option<&[u8]>, f64) {
        (
            self.window,
            &self.priority,
            &self.label_at,
            &self.tagged,
            self.eta.as_deref(),
            self.time,
        )
    }

    pub(crate) fn from_raw_parts(
        window: (i64, i64),
        priority: Vec<u8>,
        label_at: Vec<u8>,
        tagged: Vec<i64>,
        eta: Option<Vec<u8>>,
        time: f64,
    ) -> Result<Self> {
        let mut config = Self::from_parts(window, priority, label_at, tagged, eta)?;
        config.time = time;
        Ok(config)
    }
}

/// One coalescence of two adjacent label blocks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossingEvent {
    pub time: f64,
    /// Lowest label of the merged block.
    pub low: usize,
    /// Highest label of the merged block.
    pub high: usize,
    /// Label boundary that crossed: blocks `[low..=boundary]` and
    /// `[boundary+1..=high]` merged.
    pub boundary: usize,
    pub position: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Block {
    low: usize,
    high: usize,
    pos: i64,
}

/// Coalescing-group state: the inductively defined shock positions `Y^k_t`.
/// Labels partition into blocks of consecutive labels;
/// a singleton block rides its tagged particle, a merged block `[low..high]`
/// follows the `sigma^{low-1} | sigma^{high}` discrepancy at its position.
#[derive(Debug, Clone, PartialEq)]
pub struct ShockTracker {
    blocks: Vec<Block>,
    crossings: Vec<CrossingEvent>,
}

impl ShockTracker {
    pub fn new(config: &MulticlassConfig) -> Self {
        let blocks = config
            .tagged
            .iter()
            .enumerate()
            .map(|(i, &pos)| Block { low: i + 1, high: i + 1, pos })
            .collect();
        Self { blocks, crossings: Vec::new() }
    }

    /// `Y^k`: position of the block containing label `k`.
    pub fn position_of_label(&self, k: usize) -> i64 {
        self.blocks
            .iter()
            .find(|b| b.low <= k && k <= b.high)
            .expect("label outside tracker")
            .pos
    }

    /// All `Y^1..Y^n` in label order (nondecreasing).
    pub fn label_positions(&self) -> Vec<i64> {
        let n = self.blocks.last().map_or(0, |b| b.high);
        let mut out = Vec::with_capacity(n);
        for b in &self.blocks {
            for _ in b.low..=b.high {
                out.push(b.pos);
            }
        }
        out
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    /// Blocks as `(low, high, position)` triples in label order.
    pub fn block_spans(&self) -> Vec<(usize, usize, i64)> {
        self.blocks.iter().map(|b| (b.low, b.high, b.pos)).collect()
    }

    pub fn crossings(&self) -> &[CrossingEvent] {
        &self.crossings
    }

    fn check_consistent(&self, config: &MulticlassConfig) -> Result<()> {
        let mut expect = 1usize;
        for b in &self.blocks {
            if b.low != expect || b.high < b.low {
                return Err(Error::BadInput("tracker blocks do not partition labels".into()));
            }
            expect = b.high + 1;
            let p = config.priority_at(b.pos);
            if (p as usize) < b.low || (p as usize) > b.high {
                return Err(Error::BadInput(format!(
                    "block [{}..{}] at {} sits on priority {}",
                    b.low, b.high, b.pos, p
                )));
            }
        }
        if expect != config.label_count() + 1 {
            return Err(Error::BadInput("tracker label count mismatch".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Event {
    time: f64,
    bond: u32,
}

impl Eq for Event {}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Ties (measure zero in continuous time, possible in floating point)
        // resolve to the smaller bond index.
        self.time.total_cmp(&other.time).then(self.bond.cmp(&other.bond))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Outcome of an `evolve` call. `events` counts arrows that changed the
/// priority configuration; `eta_events` counts arrows that moved only the
/// companion configuration near a pair discrepancy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolveReport {
    pub events: u64,
    pub eta_events: u64,
    pub horizon: f64,
}

/// Optional evolve behavior. `paranoid` re-validates the tracker against the
/// configuration after every event (slow; meant for tests).
#[derive(Default)]
pub struct EvolveOptions<'w> {
    pub paranoid: bool,
    pub log: Option<&'w mut dyn Write>,
}

/// Runs the rejection-free event engine to `horizon`.
///
/// Only bonds where a swap is currently possible hold a pending event; when a
/// site changes, its adjacent bonds are re-armed with fresh exponential
/// delays, which is distributionally equivalent to the full arrow process by
/// memorylessness. Tagged labels move with their particles; tracker blocks
/// follow the discrepancy rules and merge when adjacent blocks cross.
pub fn evolve(
    config: &mut MulticlassConfig,
    mut tracker: Option<&mut ShockTracker>,
    horizon: f64,
    seed: u64,
    mut options: EvolveOptions<'_>,
) -> Result<EvolveReport> {
    if !(horizon.is_finite() && horizon >= 0.0) {
        return Err(Error::BadInput(format!("horizon must be finite and >= 0, got {horizon}")));
    }
    if let Some(tr) = tracker.as_deref() {
        tr.check_consistent(config)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(DYN_STREAM);

    let (lo, hi) = config.window;
    let bonds = config.priority.len().saturating_sub(1);
    let mut armed = vec![f64::INFINITY; bonds];
    let mut heap: BinaryHeap<Reverse<Event>> = BinaryHeap::with_capacity(bonds.max(16));
    let start = config.time;

    // A bond holds a pending event iff an arrow there would change the
    // priority configuration or the companion one. Away from the pair
    // discrepancies the second condition is implied by the first.
    let swappable = |priority: &[u8], eta: &Option<Vec<u8>>, b: usize| -> bool {
        priority[b] < priority[b + 1]
            || eta.as_ref().is_some_and(|e| e[b] == 1 && e[b + 1] == 0)
    };

    macro_rules! arm {
        ($b:expr, $now:expr) => {{
            let b = $b;
            if swappable(&config.priority, &config.eta, b) {
                let delay: f64 = rng.sample(Exp1);
                let t = $now + delay;
                armed[b] = t;
                heap.push(Reverse(Event { time: t, bond: b as u32 }));
            } else {
                armed[b] = f64::INFINITY;
            }
        }};
    }

    for b in 0..bonds {
        arm!(b, start);
    }

    let mut events = 0u64;
    let mut eta_events = 0u64;
    let end = start + horizon;
    while let Some(&Reverse(Event { time, bond })) = heap.peek() {
        if time > end {
            break;
        }
        heap.pop();
        let b = bond as usize;
        if armed[b] != time {
            continue; // stale entry superseded by a re-arm
        }
        armed[b] = f64::INFINITY;
        let x = lo + b as i64;
        let pa = config.priority[b];
        let pb = config.priority[b + 1];
        let swaps_priority = pa < pb;
        if let Some(e) = &mut config.eta {
            if e[b] == 1 && e[b + 1] == 0 {
                e.swap(b, b + 1);
                eta_events += 1;
            }
        }
        if !swaps_priority {
            config.time = time;
            if b > 0 {
                arm!(b - 1, time);
            }
            arm!(b, time);
            if b + 1 < bonds {
                arm!(b + 1, time);
            }
            continue;
        }

        config.priority.swap(b, b + 1);
        config.label_at.swap(b, b + 1);
        config.time = time;
        events += 1;

        // Tagged labels ride their particles.
        let la = config.label_at[b + 1]; // moved right from x
        let lb = config.label_at[b]; // bumped left from x+1
        if la != 0 {
            config.tagged[la as usize - 1] = x + 1;
            if x + 1 > hi - BOUNDARY_MARGIN {
                return Err(Error::BoundaryReached { position: x + 1, window: (lo, hi), time });
            }
        }
        if lb != 0 {
            config.tagged[lb as usize - 1] = x;
            if x < lo + BOUNDARY_MARGIN {
                return Err(Error::BoundaryReached { position: x, window: (lo, hi), time });
            }
        }

        if let Some(tr) = tracker.as_deref_mut() {
            let mut moved = false;
            for blk in tr.blocks.iter_mut() {
                if blk.pos == x && (pb as usize) > blk.high {
                    blk.pos = x + 1;
                    moved = true;
                    if blk.pos > hi - BOUNDARY_MARGIN {
                        return Err(Error::BoundaryReached {
                            position: blk.pos,
                            window: (lo, hi),
                            time,
                        });
                    }
                } else if blk.pos == x + 1 && (pa as usize) < blk.low {
                    blk.pos = x;
                    moved = true;
                    if blk.pos < lo + BOUNDARY_MARGIN {
                        return Err(Error::BoundaryReached {
                            position: blk.pos,
                            window: (lo, hi),
                            time,
                        });
                    }
                }
            }
            if moved {
                // Positions move one site per event, so a crossing cannot be
                // jumped over; merge until none is left.
                while let Some(i) = (0..tr.blocks.len().saturating_sub(1))
                    .find(|&i| tr.blocks[i].pos == tr.blocks[i + 1].pos + 1)
                {
                    let right = tr.blocks.remove(i + 1);
                    let left = &mut tr.blocks[i];
                    tr.crossings.push(CrossingEvent {
                        time,
                        low: left.low,
                        high: right.high,
                        boundary: left.high,
                        position: right.pos,
                    });
                    left.high = right.high;
                    left.pos = right.pos;
                }
            }
            if options.paranoid {
                tr.check_consistent(config)?;
            }
        }

        if let Some(log) = options.log.as_deref_mut() {
            write!(log, "{time},{x},{x},{}", x + 1)?;
            if let Some(tr) = tracker.as_deref() {
                for p in tr.label_positions() {
                    write!(log, ",{p}")?;
                }
            }
            writeln!(log)?;
        }

        if b > 0 {
            arm!(b - 1, time);
        }
        arm!(b, time);
        if b + 1 < bonds {
            arm!(b + 1, time);
        }
    }
    config.time = end;
    Ok(EvolveReport { events, eta_events, horizon: end })
}

/// Evolves a configuration without any shock tracking.
pub fn evolve_untracked(config: &mut MulticlassConfig, horizon: f64, seed: u64) -> Result<EvolveReport> {
    evolve(config, None, horizon, seed, EvolveOptions::default())
}

/// Naive graphical construction used for cross-validation: every bond fires a
/// rate-1 Poisson arrow stream regardless of content, and an arrow swaps only
/// if the exclusion rule allows it. The arrow stream is independent of the
/// configuration, so coupled runs with equal seeds share their randomness.
pub fn evolve_naive(config: &mut MulticlassConfig, horizon: f64, seed: u64) -> Result<EvolveReport> {
    if !(horizon.is_finite() && horizon >= 0.0) {
        return Err(Error::BadInput(format!("horizon must be finite and >= 0, got {horizon}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(DYN_STREAM);
    let bonds = config.priority.len().saturating_sub(1);
    let start = config.time;
    let end = start + horizon;
    let mut heap: BinaryHeap<Reverse<Event>> = BinaryHeap::with_capacity(bonds.max(16));
    for b in 0..bonds {
        let delay: f64 = rng.sample(Exp1);
        heap.push(Reverse(Event { time: start + delay, bond: b as u32 }));
    }
    let mut events = 0u64;
    let mut eta_events = 0u64;
    while let Some(Reverse(Event { time, bond })) = heap.pop() {
        if time > end {
            break;
        }
        let b = bond as usize;
        if let Some(e) = &mut config.eta {
            if e[b] == 1 && e[b + 1] == 0 {
                e.swap(b, b + 1);
                eta_events += 1;
            }
        }
        if config.priority[b] < config.priority[b + 1] {
            config.priority.swap(b, b + 1);
            config.label_at.swap(b, b + 1);
            let la = config.label_at[b + 1];
            let lb = config.label_at[b];
            let x = config.window.0 + b as i64;
            if la != 0 {
                config.tagged[la as usize - 1] = x + 1;
            }
            if lb != 0 {
                config.tagged[lb as usize - 1] = x;
            }
            events += 1;
        }
        let delay: f64 = rng.sample(Exp1);
        heap.push(Reverse(Event { time: time + delay, bond }));
    }
    config.time = end;
    Ok(EvolveReport { events, eta_events, horizon: end })
}

/// Reconstructs the single configuration `eta'` of the coupled construction:
/// `eta'(x) = sigma^k(x)` on `Y^k <= x < Y^{k+1}` with `Y^0 = -inf`,
/// `Y^{n+1} = +inf`. Coalesced blocks make the intermediate bands vanish.
pub fn reconstruct_eta_prime(config: &MulticlassConfig, tracker: &ShockTracker) -> Vec<bool> {
    let positions = tracker.label_positions();
    let (lo, hi) = config.window();
    let mut out = Vec::with_capacity((hi - lo + 1) as usize);
    let mut k = 0usize;
    for x in lo..=hi {
        while k < positions.len() && positions[k] <= x {
            k += 1;
        }
        out.push(config.sigma(k as u8, x));
    }
    out
}

/// Initial-condition predictor for the displacement of shock `k` by
/// macroscopic time `t`: counts holes of `sigma^k` ahead of the tagged site
/// minus `sigma^{k-1}` particles behind it, over ranges of macroscopic length
/// `t (rho_k - rho_{k-1})`. The predicted position is
/// `c_k/eps + N / (rho_k - rho_{k-1})`.
pub fn n_predictor(
    initial: &MulticlassConfig,
    scenario: &MeetingScenario,
    k: usize,
    t: f64,
    epsilon: f64,
) -> Result<f64> {
    let profile = scenario.profile();
    if k < 1 || k > profile.shock_count() {
        return Err(Error::BadInput(format!("label {k} outside 1..={}", profile.shock_count())));
    }
    let rho = profile.densities();
    let delta = rho[k] - rho[k - 1];
    let c = profile.breakpoints()[k - 1];
    let center = (c / epsilon).floor() as i64;
    let right_hi = ((c + t * delta) / epsilon).floor() as i64;
    let left_lo = ((c - t * delta) / epsilon).floor() as i64;
    let (lo, hi) = initial.window();
    if left_lo < lo || right_hi > hi {
        return Err(Error::RangeOutOfWindow { lo: left_lo, hi: right_hi, window: (lo, hi) });
    }
    let mut n = 0i64;
    for x in center + 1..=right_hi {
        n += i64::from(!initial.sigma(k as u8, x));
    }
    for x in left_lo + 1..=center {
        n -= i64::from(initial.sigma(k as u8 - 1, x));
    }
    Ok(n as f64)
}

/// Exact time-`t` distribution of the totally asymmetric dynamics on a closed
/// segment of `l <= 6` sites, by uniformization of the forward equation.
/// State indices are bit masks with bit `i` = occupancy of the `i`-th site
/// from the left. The truncation error is below 1e-12 in total variation.
pub fn exact_distribution(l: usize, initial: usize, t: f64) -> Result<Vec<f64>> {
    if l == 0 {
        return Err(Error::BadInput("segment must have at least one site".into()));
    }
    if l > 6 {
        return Err(Error::TooLarge(l));
    }
    if initial >= 1 << l {
        return Err(Error::BadInput(format!("state {initial} outside {l}-site space")));
    }
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::BadInput(format!("time must be finite and >= 0, got {t}")));
    }
    let states = 1usize << l;
    // Jump targets per state; each carries rate 1.
    let moves: Vec<Vec<usize>> = (0..states)
        .map(|m| {
            (0..l - 1)
                .filter(|&i| m >> i & 1 == 1 && m >> (i + 1) & 1 == 0)
                .map(|i| m ^ (0b11 << i))
                .collect()
        })
        .collect();
    let lambda = (l - 1) as f64;
    let lt = lambda * t;

    let mut v = vec![0.0f64; states];
    v[initial] = 1.0;
    let mut p = vec![0.0f64; states];
    let mut weight = (-lt).exp();
    let mut cumulative = weight;
    for (pi, vi) in p.iter_mut().zip(&v) {
        *pi = weight * vi;
    }
    let mut j = 0u32;
    while cumulative < 1.0 - 1e-13 {
        j += 1;
        // v <- P_hat v with P_hat = I + Q / lambda.
        let mut next = vec![0.0f64; states];
        for m in 0..states {
            let vm = v[m];
            if vm == 0.0 {
                continue;
            }
            let out = moves[m].len() as f64;
            next[m] += vm * (1.0 - out / lambda);
            for &target in &moves[m] {
                next[target] += vm / lambda;
            }
        }
        v = next;
        weight *= lt / f64::from(j);
        cumulative += weight;
        for (pi, vi) in p.iter_mut().zip(&v) {
            *pi += weight * vi;
        }
        if j > 100_000 {
            return Err(Error::BadInput("uniformization failed to converge".into()));
        }
    }
    Ok(p)
}

/// Runs the rejection-free engine on a closed segment of `l` sites starting
/// from the bit mask `initial`; returns the final mask.
pub fn simulate_segment(l: usize, initial: usize, t: f64, seed: u64) -> Result<usize> {
    let occupied: Vec<bool> = (0..l).map(|i| initial >> i & 1 == 1).collect();
    let mut config = MulticlassConfig::from_occupancies((0, l as i64 - 1), &occupied)?;
    evolve_untracked(&mut config, t, seed)?;
    Ok(mask_of(&config))
}

/// Same as [`simulate_segment`] but with the naive all-bonds scheduler.
pub fn simulate_segment_naive(l: usize, initial: usize, t: f64, seed: u64) -> Result<usize> {
    let occupied: Vec<bool> = (0..l).map(|i| initial >> i & 1 == 1).collect();
    let mut config = MulticlassConfig::from_occupancies((0, l as i64 - 1), &occupied)?;
    evolve_naive(&mut config, t, seed)?;
    Ok(mask_of(&config))
}

fn mask_of(config: &MulticlassConfig) -> usize {
    config
        .priorities()
        .iter()
        .enumerate()
        .map(|(i, &p)| usize::from(p != HOLE) << i)
        .sum()
}

/// Total-variation distance between two probability vectors.
pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::{sample_initial, validate_meeting, StepProfile};

    fn scenario(c: &[f64], rho: &[f64], hint: Option<f64>) -> MeetingScenario {
        validate_meeting(StepProfile::new(c.to_vec(), rho.to_vec()).unwrap(), hint).unwrap()
    }

    #[test]
    fn lone_particle_displacement_is_poisson() {
        // A lone totally asymmetric particle jumps right at rate 1.
        let t = 8.0;
        let reps = 10_000u64;
        let mut sum = 0.0;
        for seed in 0..reps {
            let mut occupied = vec![false; 80];
            occupied[5] = true;
            let mut config = MulticlassConfig::from_occupancies((-5, 74), &occupied).unwrap();
            evolve_untracked(&mut config, t, seed).unwrap();
            let pos = (0..75)
                .find(|&x| config.priority_at(x) == 0)
                .expect("particle lost");
            sum += pos as f64;
        }
        let mean = sum / reps as f64;
        let se = (t / reps as f64).sqrt();
        assert!((mean - t).abs() < 3.0 * se, "mean {mean} vs {t} (se {se})");
    }

    #[test]
    fn fully_occupied_window_is_frozen() {
        let occupied = vec![true; 30];
        let mut config = MulticlassConfig::from_occupancies((0, 29), &occupied).unwrap();
        let before = config.clone();
        let report = evolve_untracked(&mut config, 50.0, 4).unwrap();
        assert_eq!(report.events, 0);
        assert_eq!(config.priorities(), before.priorities());
    }

    #[test]
    fn single_label_block_rides_the_tagged_particle() {
        let s = scenario(&[0.0], &[0.2, 0.8], Some(1.0));
        for seed in 0..20u64 {
            let mut config = sample_initial(&s, 0.1, (-120, 120), seed).unwrap();
            let mut tracker = ShockTracker::new(&config);
            evolve(
                &mut config,
                Some(&mut tracker),
                25.0,
                seed,
                EvolveOptions { paranoid: true, log: None },
            )
            .unwrap();
            assert_eq!(tracker.position_of_label(1), config.tagged_position(1));
            assert_eq!(tracker.block_count(), 1);
        }
    }

    #[test]
    fn per_priority_counts_are_conserved() {
        let s = scenario(&[-1.0, 1.0], &[0.0, 0.5, 1.0], None);
        let mut config = sample_initial(&s, 0.05, (-120, 120), 21).unwrap();
        let before = config.particle_counts();
        let mut tracker = ShockTracker::new(&config);
        evolve(&mut config, Some(&mut tracker), 30.0, 21, EvolveOptions::default()).unwrap();
        assert_eq!(config.particle_counts(), before);
    }

    #[test]
    fn evolve_is_reproducible() {
        let s = scenario(&[-1.0, 1.0], &[0.1, 0.5, 0.9], None);
        let run = |seed: u64| {
            let mut config = sample_initial(&s, 0.1, (-80, 80), seed).unwrap();
            let mut tracker = ShockTracker::new(&config);
            evolve(&mut config, Some(&mut tracker), 12.0, seed, EvolveOptions::default())
                .unwrap();
            (config, tracker)
        };
        let (c1, t1) = run(9);
        let (c2, t2) = run(9);
        assert_eq!(c1, c2);
        assert_eq!(t1, t2);
        let (c3, _) = run(10);
        assert_ne!(c1, c3);
    }

    #[test]
    fn trajectory_log_records_events() {
        let s = scenario(&[0.0], &[0.2, 0.8], Some(1.0));
        let mut config = sample_initial(&s, 0.25, (-40, 40), 3).unwrap();
        let mut tracker = ShockTracker::new(&config);
        let mut log = Vec::new();
        let report = evolve(
            &mut config,
            Some(&mut tracker),
            5.0,
            3,
            EvolveOptions { paranoid: false, log: Some(&mut log) },
        )
        .unwrap();
        let text = String::from_utf8(log).unwrap();
        assert_eq!(text.lines().count() as u64, report.events);
        let first = text.lines().next().unwrap();
        assert_eq!(first.split(',').count(), 5); // time, bond, from, to, y1
    }

    #[test]
    fn boundary_contact_is_loud() {
        // One particle two sites from the right edge, tagged as label 1.
        let window = (0i64, 9i64);
        let mut priority = vec![HOLE; 10];
        let mut label_at = vec![0u8; 10];
        priority[6] = 1;
        label_at[6] = 1;
        let mut config =
            MulticlassConfig::from_parts(window, priority, label_at, vec![6], None).unwrap();
        let mut tracker = ShockTracker::new(&config);
        let err = evolve(&mut config, Some(&mut tracker), 100.0, 5, EvolveOptions::default())
            .unwrap_err();
        assert!(matches!(err, Error::BoundaryReached { .. }), "got {err:?}");
    }

    #[test]
    fn nesting_is_preserved_sitewise() {
        let s = scenario(&[-1.0, 0.0, 1.0], &[0.0, 0.3, 0.6, 0.9], None);
        let mut config = sample_initial(&s, 0.1, (-100, 100), 13).unwrap();
        let mut tracker = ShockTracker::new(&config);
        evolve(
            &mut config,
            Some(&mut tracker),
            15.0,
            13,
            EvolveOptions { paranoid: true, log: None },
        )
        .unwrap();
        let (lo, hi) = config.window();
        for x in lo..=hi {
            for k in 0..3u8 {
                assert!(!config.sigma(k, x) || config.sigma(k + 1, x));
            }
        }
    }

    #[test]
    fn marginals_match_joint_under_shared_arrows() {
        // Evolving the joint priority configuration and each sigma^k marginal
        // separately with the same naive arrow stream must agree exactly.
        let s = scenario(&[-1.0, 1.0], &[0.1, 0.4, 0.8], None);
        let eps = 0.2;
        for seed in 0..10u64 {
            let joint0 = sample_initial(&s, eps, (-40, 40), seed).unwrap();
            let mut joint = joint0.clone();
            evolve_naive(&mut joint, 9.0, seed + 400).unwrap();
            for k in 0..=2u8 {
                let (lo, hi) = joint0.window();
                let occupied: Vec<bool> = (lo..=hi).map(|x| joint0.sigma(k, x)).collect();
                let mut single =
                    MulticlassConfig::from_occupancies((lo, hi), &occupied).unwrap();
                evolve_naive(&mut single, 9.0, seed + 400).unwrap();
                for x in lo..=hi {
                    assert_eq!(
                        single.sigma(0, x),
                        joint.sigma(k, x),
                        "seed {seed} sigma^{k} mismatch at {x}"
                    );
                }
            }
        }
    }

    #[test]
    fn blocks_merge_and_never_split() {
        // Force a crossing quickly: two tagged shocks close together.
        let s = scenario(&[-0.5, 0.5], &[0.0, 0.5, 1.0], None);
        let mut merged_runs = 0;
        for seed in 0..30u64 {
            let mut config = sample_initial(&s, 0.05, (-120, 120), seed).unwrap();
            let mut tracker = ShockTracker::new(&config);
            evolve(
                &mut config,
                Some(&mut tracker),
                60.0,
                seed,
                EvolveOptions { paranoid: true, log: None },
            )
            .unwrap();
            match tracker.block_count() {
                1 => {
                    merged_runs += 1;
                    assert_eq!(tracker.crossings().len(), 1);
                    let ev = tracker.crossings()[0];
                    assert_eq!((ev.low, ev.high, ev.boundary), (1, 2, 1));
                    let y = tracker.label_positions();
                    assert_eq!(y[0], y[1]);
                }
                2 => assert!(tracker.crossings().is_empty()),
                other => panic!("unexpected block count {other}"),
            }
        }
        // t* = 1/eps = 20 << 60, so nearly every run has coalesced.
        assert!(merged_runs >= 25, "only {merged_runs} of 30 runs merged");
    }

    #[test]
    fn eta_prime_reconstruction_examples() {
        // Hand-built 6-site example with n=2, Y^1 = -1, Y^2 = 2.
        let window = (-3i64, 2i64);
        // sites:      -3    -2    -1     0     1     2
        let priority = [0u8, HOLE, 1, HOLE, 0, 2];
        let label_at = [0u8, 0, 1, 0, 0, 2];
        let config = MulticlassConfig::from_parts(
            window,
            priority.to_vec(),
            label_at.to_vec(),
            vec![-1, 2],
            None,
        )
        .unwrap();
        let tracker = ShockTracker::new(&config);
        let eta = reconstruct_eta_prime(&config, &tracker);
        let expect: Vec<bool> = (-3i64..=2)
            .map(|x| {
                let k = if x < -1 {
                    0
                } else if x < 2 {
                    1
                } else {
                    2
                };
                config.sigma(k, x)
            })
            .collect();
        assert_eq!(eta, expect);

        // All blocks merged at site 0: eta' = sigma^0 left of 0, sigma^2 after.
        let mut tracker2 = tracker.clone();
        tracker2.blocks = vec![Block { low: 1, high: 2, pos: 0 }];
        // Place a mid-priority particle at 0 so the block is a valid discrepancy.
        let mut p2 = priority.to_vec();
        p2[3] = 1;
        let mut l2 = label_at.to_vec();
        l2[2] = 0;
        l2[3] = 1;
        let config2 =
            MulticlassConfig::from_parts(window, p2, l2, vec![0, 2], None).unwrap();
        let eta2 = reconstruct_eta_prime(&config2, &tracker2);
        for (i, x) in (-3i64..=2).enumerate() {
            let k = if x < 0 { 0 } else { 2 };
            assert_eq!(eta2[i], config2.sigma(k, x), "site {x}");
        }
    }

    #[test]
    fn companion_tracks_the_reconstruction() {
        // The unconditioned configuration and the tracker reconstruction are
        // coupled with at most n pair discrepancies for all time; this pins
        // the inductive shock bookkeeping to the actual particle dynamics.
        let s = scenario(&[-1.0, 1.0], &[0.0, 0.5, 1.0], None);
        for seed in 0..12u64 {
            let mut config = sample_initial(&s, 0.1, (-150, 150), seed).unwrap();
            let eta0 = config.eta_count().unwrap();
            let mut tracker = ShockTracker::new(&config);
            // Horizon past the meeting time t*/eps = 20.
            evolve(&mut config, Some(&mut tracker), 30.0, seed, EvolveOptions::default())
                .unwrap();
            assert_eq!(config.eta_count().unwrap(), eta0);
            let prime = reconstruct_eta_prime(&config, &tracker);
            let (lo, hi) = config.window();
            let diff = (lo..=hi)
                .zip(&prime)
                .filter(|&(x, &p)| config.eta_at(x) != Some(p))
                .count();
            assert!(diff <= 2, "seed {seed}: {diff} pair discrepancies");
        }
    }

    #[test]
    fn predictor_hand_examples() {
        let s = scenario(&[0.0], &[0.25, 0.75], Some(1.0));
        // Window [-6, 6], tagged site 0 (priority 1). delta = 0.5 exactly, eps = 1,
        // t = 8 gives ranges of 4 sites each side.
        let window = (-6i64, 6i64);
        let mut priority = vec![HOLE; 13];
        let mut label_at = vec![0u8; 13];
        priority[6] = 1;
        label_at[6] = 1;
        // Left range {-3..0}: no sigma^0 particles (all holes already).
        let config =
            MulticlassConfig::from_parts(window, priority.clone(), label_at.clone(), vec![0], None)
                .unwrap();
        let n = n_predictor(&config, &s, 1, 8.0, 1.0).unwrap();
        assert_eq!(n, 4.0);
        // Predicted displacement n / delta = 8 sites.
        assert_eq!(n / 0.5, 8.0);

        // t = 0: both ranges empty.
        assert_eq!(n_predictor(&config, &s, 1, 0.0, 1.0).unwrap(), 0.0);

        // Right range fully occupied by sigma^1 particles and left range fully
        // occupied by sigma^0 particles: N = -L. Built without tags; the
        // predictor reads only the sigma marginals.
        for p in &mut priority[7..=10] {
            *p = 1;
        }
        for p in &mut priority[2..=6] {
            *p = 0;
        }
        label_at[6] = 0;
        let config2 =
            MulticlassConfig::from_parts(window, priority, label_at, vec![], None).unwrap();
        let n2 = n_predictor(&config2, &s, 1, 8.0, 1.0).unwrap();
        assert_eq!(n2, -4.0);

        // Range leaving the window is an error.
        assert!(matches!(
            n_predictor(&config2, &s, 1, 20.0, 1.0),
            Err(Error::RangeOutOfWindow { .. })
        ));
    }

    #[test]
    fn exact_two_site_relaxation() {
        let t = std::f64::consts::LN_2;
        let p = exact_distribution(2, 0b01, t).unwrap();
        assert!((p[0b10] - 0.5).abs() < 1e-12);
        assert!((p[0b01] - 0.5).abs() < 1e-12);
        // General t: P(moved) = 1 - e^{-t}.
        let p2 = exact_distribution(2, 0b01, 1.7).unwrap();
        assert!((p2[0b10] - (1.0 - (-1.7f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn exact_distribution_edge_cases() {
        let p = exact_distribution(3, 0b011, 0.0).unwrap();
        assert_eq!(p[0b011], 1.0);
        let p1 = exact_distribution(3, 0b001, 1.0).unwrap();
        assert!((p1.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(matches!(exact_distribution(7, 0, 1.0), Err(Error::TooLarge(7))));
    }

    #[test]
    fn segment_simulators_match_exact_law() {
        let l = 5;
        let initial = 0b00101usize;
        let t = 1.0;
        let reps = 20_000u64;
        let exact = exact_distribution(l, initial, t).unwrap();
        let mut hist_fast = vec![0u64; 1 << l];
        let mut hist_naive = vec![0u64; 1 << l];
        for seed in 0..reps {
            hist_fast[simulate_segment(l, initial, t, seed).unwrap()] += 1;
            hist_naive[simulate_segment_naive(l, initial, t, seed + reps).unwrap()] += 1;
        }
        let emp_fast: Vec<f64> = hist_fast.iter().map(|&c| c as f64 / reps as f64).collect();
        let emp_naive: Vec<f64> =
            hist_naive.iter().map(|&c| c as f64 / reps as f64).collect();
        let tv_fast = total_variation(&emp_fast, &exact);
        let tv_naive = total_variation(&emp_naive, &exact);
        let tv_cross = total_variation(&emp_fast, &emp_naive);
        assert!(tv_fast < 0.03, "rejection-free vs exact: {tv_fast}");
        assert!(tv_naive < 0.03, "naive vs exact: {tv_naive}");
        assert!(tv_cross < 0.03, "schedulers disagree: {tv_cross}");
    }
}
