//! Exact front tracking for the inviscid Burgers equation with increasing
//! step data, and the shock-coalescence map `psi` built on top of it.
//!
//! Fronts move at constant velocity `1 - rho_left - rho_right` between
//! collisions; colliding fronts coalesce, the intermediate densities vanish,
//! and the merged front continues with the velocity set by the surviving
//! densities on either side. Everything is computed in closed form; the only
//! time-stepping code is [`march_fronts`], a deliberately independent
//! verification oracle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack when grouping collisions as simultaneous.
const COLLISION_REL_TOL: f64 = 1e-12;

/// One coalescence: the labels `low..=high` merged at `position` at `time`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontCoalescence {
    pub time: f64,
    pub low: usize,
    pub high: usize,
    pub position: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct FrontBlock {
    low: usize,
    high: usize,
    position: f64,
}

/// Shock fronts of the entropy solution at a fixed time, with the coalesced
/// label groups and the full collision history.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontState {
    densities: Vec<f64>,
    blocks: Vec<FrontBlock>,
    time: f64,
    events: Vec<FrontCoalescence>,
}

impl FrontState {
    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn densities(&self) -> &[f64] {
        &self.densities
    }

    /// Front blocks as `(low_label, high_label, position)`, ordered.
    pub fn block_spans(&self) -> Vec<(usize, usize, f64)> {
        self.blocks.iter().map(|b| (b.low, b.high, b.position)).collect()
    }

    /// Position of each label `1..=n`; merged labels share a coordinate.
    pub fn label_positions(&self) -> Vec<f64> {
        let n = self.blocks.last().map_or(0, |b| b.high);
        let mut out = Vec::with_capacity(n);
        for b in &self.blocks {
            for _ in b.low..=b.high {
                out.push(b.position);
            }
        }
        out
    }

    /// Coalescence events in time order.
    pub fn events(&self) -> &[FrontCoalescence] {
        &self.events
    }

    fn velocity(&self, b: &FrontBlock) -> f64 {
        1.0 - self.densities[b.low - 1] - self.densities[b.high]
    }
}

fn check_densities(densities: &[f64]) -> Result<()> {
    if densities.len() < 2 {
        return Err(Error::BadInput("need at least two densities".into()));
    }
    if !densities.iter().all(|r| r.is_finite() && (0.0..=1.0).contains(r)) {
        return Err(Error::BadInput("densities must lie in [0, 1]".into()));
    }
    if densities.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::BadInput("densities must be strictly increasing".into()));
    }
    Ok(())
}

/// Advances fronts started at `initial_positions` for time `t`, coalescing
/// collisions in closed form. Simultaneous collisions merge together.
pub fn solve_fronts(initial_positions: &[f64], densities: &[f64], t: f64) -> Result<FrontState> {
    check_densities(densities)?;
    let n = initial_positions.len();
    if n == 0 || densities.len() != n + 1 {
        return Err(Error::BadInput(format!(
            "{n} fronts require {} densities, got {}",
            n + 1,
            densities.len()
        )));
    }
    if !initial_positions.iter().all(|p| p.is_finite()) {
        return Err(Error::BadInput("positions must be finite".into()));
    }
    if initial_positions.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::BadInput("positions must be strictly increasing".into()));
    }
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::BadInput(format!("time must be finite and >= 0, got {t}")));
    }

    let mut state = FrontState {
        densities: densities.to_vec(),
        blocks: initial_positions
            .iter()
            .enumerate()
            .map(|(i, &p)| FrontBlock { low: i + 1, high: i + 1, position: p })
            .collect(),
        time: 0.0,
        events: Vec::new(),
    };

    loop {
        let remaining = t - state.time;
        if state.blocks.len() == 1 {
            let v = state.velocity(&state.blocks[0]);
            state.blocks[0].position += remaining * v;
            state.time = t;
            return Ok(state);
        }
        // Adjacent fronts always approach: the closing speed is
        // rho_{high(i+1)} - rho_{low(i)-1} > 0.
        let collision_times: Vec<f64> = state
            .blocks
            .windows(2)
            .map(|pair| {
                let gap = pair[1].position - pair[0].position;
                let closing = state.densities[pair[1].high] - state.densities[pair[0].low - 1];
                gap / closing
            })
            .collect();
        let earliest = collision_times.iter().cloned().fold(f64::INFINITY, f64::min);
        if earliest > remaining {
            for b in state.blocks.iter_mut() {
                let v = 1.0 - state.densities[b.low - 1] - state.densities[b.high];
                b.position += remaining * v;
            }
            state.time = t;
            return Ok(state);
        }
        for b in state.blocks.iter_mut() {
            let v = 1.0 - state.densities[b.low - 1] - state.densities[b.high];
            b.position += earliest * v;
        }
        state.time += earliest;
        // Group maximal runs of boundaries that collide now.
        let slack = COLLISION_REL_TOL * earliest.max(1e-300);
        let colliding: Vec<bool> =
            collision_times.iter().map(|&tc| tc - earliest <= slack).collect();
        let mut merged = Vec::with_capacity(state.blocks.len());
        let mut i = 0usize;
        while i < state.blocks.len() {
            let mut j = i;
            while j < colliding.len() && colliding[j] {
                j += 1;
            }
            if j > i {
                let low = state.blocks[i].low;
                let high = state.blocks[j].high;
                let position = state.blocks[i].position;
                state.events.push(FrontCoalescence {
                    time: state.time,
                    low,
                    high,
                    position,
                });
                merged.push(FrontBlock { low, high, position });
                i = j + 1;
            } else {
                merged.push(state.blocks[i]);
                i += 1;
            }
        }
        state.blocks = merged;
    }
}

/// Density of the entropy solution at `r`: the density to the right of the
/// last front at or before `r` (half-open convention), `rho_0` below all
/// fronts.
pub fn evaluate_density(state: &FrontState, r: f64) -> f64 {
    let mut density = state.densities[0];
    for b in &state.blocks {
        if b.position <= r {
            density = state.densities[b.high];
        } else {
            break;
        }
    }
    density
}

/// Integral of the density over `[a, b]`, exact for the piecewise-constant
/// profile.
pub fn integrate_density(state: &FrontState, a: f64, b: f64) -> f64 {
    assert!(a <= b);
    let mut total = 0.0;
    let mut left = a;
    let mut density = state.densities[0];
    for blk in &state.blocks {
        let p = blk.position.clamp(a, b);
        if p > left {
            total += density * (p - left);
            left = p;
        }
        if blk.position <= b {
            density = state.densities[blk.high];
        }
    }
    total += density * (b - left);
    total
}

/// Smallest pull-back time that strictly orders the characteristics of `x`,
/// plus a margin of one.
pub fn ordering_time(x: &[f64], densities: &[f64]) -> f64 {
    let mut needed = 0.0f64;
    for k in 0..x.len().saturating_sub(1) {
        let closing = densities[k + 2] - densities[k];
        needed = needed.max((x[k] - x[k + 1]) / closing);
    }
    1.0 + needed.max(0.0)
}

/// The shock-coalescence map: pulls each coordinate back along its one-shock
/// characteristic for a time that orders them, then reruns the joint front
/// dynamics for the same duration. Merged labels share a coordinate, and the
/// result does not depend on the pull-back time.
pub fn psi(x: &[f64], densities: &[f64], t_choice: Option<f64>) -> Result<Vec<f64>> {
    check_densities(densities)?;
    let n = x.len();
    if n == 0 || densities.len() != n + 1 {
        return Err(Error::BadInput(format!(
            "{n} coordinates require {} densities, got {}",
            n + 1,
            densities.len()
        )));
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::BadInput("coordinates must be finite".into()));
    }
    let t = match t_choice {
        Some(t) if t > 0.0 && t.is_finite() => t,
        Some(t) => return Err(Error::BadInput(format!("t_choice must be positive, got {t}"))),
        None => ordering_time(x, densities),
    };
    let b: Vec<f64> = x
        .iter()
        .enumerate()
        .map(|(i, &xi)| xi - t * (1.0 - densities[i] - densities[i + 1]))
        .collect();
    if b.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::OrderingFailed { t });
    }
    let state = solve_fronts(&b, densities, t)?;
    Ok(state.label_positions())
}

/// Time-shifted coalescence map: the shock positions at time `t(x) + s` of
/// the fronts pulled back by `t(x)`. For `s <= -t(x)` this is the plain
/// characteristic translation `x_k + s (1 - rho_{k-1} - rho_k)`.
pub fn psi_s(x: &[f64], s: f64, densities: &[f64]) -> Result<Vec<f64>> {
    check_densities(densities)?;
    let n = x.len();
    if n == 0 || densities.len() != n + 1 {
        return Err(Error::BadInput(format!(
            "{n} coordinates require {} densities, got {}",
            n + 1,
            densities.len()
        )));
    }
    if !(s.is_finite()) {
        return Err(Error::BadInput("shift must be finite".into()));
    }
    let t = ordering_time(x, densities);
    if s <= -t {
        return Ok(x
            .iter()
            .enumerate()
            .map(|(i, &xi)| xi + s * (1.0 - densities[i] - densities[i + 1]))
            .collect());
    }
    let b: Vec<f64> = x
        .iter()
        .enumerate()
        .map(|(i, &xi)| xi - t * (1.0 - densities[i] - densities[i + 1]))
        .collect();
    if b.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::OrderingFailed { t });
    }
    let state = solve_fronts(&b, densities, t + s)?;
    Ok(state.label_positions())
}

/// Small-step time-marching front tracker, kept independent of
/// [`solve_fronts`] as a verification oracle. Error is `O(dt)`.
pub fn march_fronts(
    initial_positions: &[f64],
    densities: &[f64],
    duration: f64,
    dt: f64,
) -> Result<Vec<f64>> {
    check_densities(densities)?;
    let n = initial_positions.len();
    if n == 0 || densities.len() != n + 1 {
        return Err(Error::BadInput("positions and densities disagree".into()));
    }
    if !dt.is_finite() || dt <= 0.0 {
        return Err(Error::BadInput("dt must be positive".into()));
    }
    // groups[g] = (low, high, position)
    let mut groups: Vec<(usize, usize, f64)> = initial_positions
        .iter()
        .enumerate()
        .map(|(i, &p)| (i + 1, i + 1, p))
        .collect();
    let steps = (duration / dt).ceil() as u64;
    let mut time = 0.0;
    for _ in 0..steps {
        let step = dt.min(duration - time);
        time += step;
        for g in groups.iter_mut() {
            let v = 1.0 - densities[g.0 - 1] - densities[g.1];
            g.2 += step * v;
        }
        let mut i = 0;
        while i + 1 < groups.len() {
            if groups[i].2 >= groups[i + 1].2 {
                let (la, _, pa) = groups[i];
                let (_, hb, pb) = groups.remove(i + 1);
                groups[i] = (la, hb, 0.5 * (pa + pb));
                i = i.saturating_sub(1);
            } else {
                i += 1;
            }
        }
    }
    let mut out = Vec::with_capacity(n);
    for &(low, high, pos) in &groups {
        for _ in low..=high {
            out.push(pos);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const RHO2: [f64; 3] = [0.0, 0.5, 1.0];

    #[test]
    fn two_fronts_coalesce_at_the_meeting_point() {
        let state = solve_fronts(&[-1.0, 1.0], &RHO2, 3.0).unwrap();
        assert_eq!(state.label_positions(), vec![0.0, 0.0]);
        assert_eq!(state.events().len(), 1);
        let ev = state.events()[0];
        assert_eq!((ev.low, ev.high), (1, 2));
        assert!((ev.time - 2.0).abs() < 1e-12);
        assert!(ev.position.abs() < 1e-12);
        // Merged front is stationary: 1 - rho_0 - rho_2 = 0.
        let later = solve_fronts(&[-1.0, 1.0], &RHO2, 10.0).unwrap();
        assert_eq!(later.label_positions(), vec![0.0, 0.0]);
    }

    #[test]
    fn balanced_single_front_is_stationary() {
        let state = solve_fronts(&[0.25], &[0.3, 0.7], 17.0).unwrap();
        assert_eq!(state.label_positions(), vec![0.25]);
    }

    #[test]
    fn free_flight_before_first_collision() {
        let b = [-1.0, 1.0];
        let t = 1.5; // first collision at t = 2
        let state = solve_fronts(&b, &RHO2, t).unwrap();
        let expect: Vec<f64> = (0..2)
            .map(|k| b[k] + t * (1.0 - RHO2[k] - RHO2[k + 1]))
            .collect();
        for (got, want) in state.label_positions().iter().zip(&expect) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!(state.events().is_empty());
    }

    #[test]
    fn density_evaluation_follows_the_fronts() {
        let state = solve_fronts(&[-1.0, 1.0], &RHO2, 1.0).unwrap();
        // Fronts at -1/2 and 1/2.
        assert_eq!(evaluate_density(&state, 0.0), 0.5);
        assert_eq!(evaluate_density(&state, -0.5), 0.5); // right limit at a front
        assert_eq!(evaluate_density(&state, -0.6), 0.0);
        assert_eq!(evaluate_density(&state, 0.5), 1.0);
        assert_eq!(evaluate_density(&state, -10.0), 0.0);

        let after = solve_fronts(&[-1.0, 1.0], &RHO2, 3.0).unwrap();
        assert_eq!(evaluate_density(&after, -0.01), 0.0);
        assert_eq!(evaluate_density(&after, 0.0), 1.0);
        assert_eq!(evaluate_density(&after, 0.01), 1.0);
    }

    #[test]
    fn triple_simultaneous_collision_merges_together() {
        // Three shocks meeting at one point: c = (-1, 0, 1), equally spaced
        // densities.
        let rho = [0.0, 0.3, 0.6, 0.9];
        let t_star = 1.0 / 0.6;
        let b = [-1.0, 0.0, 1.0];
        let state = solve_fronts(&b, &rho, t_star + 0.5).unwrap();
        assert_eq!(state.events().len(), 1);
        let ev = state.events()[0];
        assert_eq!((ev.low, ev.high), (1, 3));
        let y = state.label_positions();
        assert!((y[0] - y[1]).abs() < 1e-12 && (y[1] - y[2]).abs() < 1e-12);
    }

    #[test]
    fn psi_identity_on_ordered_inputs() {
        let x = [-0.7, 0.3];
        let y = psi(&x, &RHO2, None).unwrap();
        for (a, b) in y.iter().zip(&x) {
            assert!((a - b).abs() < 1e-12);
        }
        // Boundary case x_1 = x_2 also maps to itself.
        let y2 = psi(&[0.4, 0.4], &RHO2, None).unwrap();
        assert!((y2[0] - 0.4).abs() < 1e-12 && (y2[1] - 0.4).abs() < 1e-12);

        let rho4 = [0.05, 0.3, 0.55, 0.8];
        let x3 = [-2.0, -0.5, 1.0];
        let y3 = psi(&x3, &rho4, None).unwrap();
        for (a, b) in y3.iter().zip(&x3) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn psi_symmetric_crossing_averages() {
        let y = psi(&[1.0, -1.0], &RHO2, None).unwrap();
        assert!(y[0].abs() < 1e-12 && y[1].abs() < 1e-12);
    }

    fn psi_closed_form_2(x: &[f64], rho: &[f64]) -> Vec<f64> {
        if x[0] <= x[1] {
            x.to_vec()
        } else {
            let w1 = (rho[1] - rho[0]) / (rho[2] - rho[0]);
            let w2 = (rho[2] - rho[1]) / (rho[2] - rho[0]);
            let m = x[0] * w1 + x[1] * w2;
            vec![m, m]
        }
    }

    #[test]
    fn psi_matches_two_shock_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        for _ in 0..500 {
            let r0: f64 = rng.random_range(0.0..0.4);
            let r1: f64 = rng.random_range(r0 + 0.05..0.7);
            let r2: f64 = rng.random_range(r1 + 0.05..1.0);
            let rho = [r0, r1, r2];
            let x = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
            let got = psi(&x, &rho, None).unwrap();
            let want = psi_closed_form_2(&x, &rho);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-12, "x={x:?} rho={rho:?}: {got:?} vs {want:?}");
            }
        }
    }

    #[test]
    fn psi_is_well_posed_in_the_pullback_time() {
        let mut rng = ChaCha8Rng::seed_from_u64(72);
        for _ in 0..500 {
            let rho = [0.1, 0.35, 0.6, 0.95];
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let t = ordering_time(&x, &rho);
            let a = psi(&x, &rho, Some(t)).unwrap();
            let b = psi(&x, &rho, Some(2.0 * t)).unwrap();
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() < 1e-9, "{a:?} vs {b:?}");
            }
            // Outputs are nondecreasing.
            for w in a.windows(2) {
                assert!(w[0] <= w[1] + 1e-12);
            }
        }
    }

    #[test]
    fn psi_rejects_bad_pullback_time() {
        // x badly crossed: tiny t cannot order the characteristics.
        let err = psi(&[5.0, -5.0], &RHO2, Some(1e-6)).unwrap_err();
        assert!(matches!(err, Error::OrderingFailed { .. }));
    }

    #[test]
    fn psi_matches_time_marching_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(73);
        for _ in 0..25 {
            let rho = [0.05, 0.4, 0.7, 0.9];
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.5..1.5)).collect();
            let t = ordering_time(&x, &rho);
            let b: Vec<f64> = x
                .iter()
                .enumerate()
                .map(|(i, &xi)| xi - t * (1.0 - rho[i] - rho[i + 1]))
                .collect();
            let fast = psi(&x, &rho, None).unwrap();
            let slow = march_fronts(&b, &rho, t, 1e-4).unwrap();
            for (f, s) in fast.iter().zip(&slow) {
                assert!((f - s).abs() < 1e-3, "{fast:?} vs {slow:?}");
            }
        }
    }

    #[test]
    fn psi_s_reduces_to_psi_and_translation() {
        let rho = RHO2;
        let x = [1.0, -1.0];
        let at_zero = psi_s(&x, 0.0, &rho).unwrap();
        let plain = psi(&x, &rho, None).unwrap();
        for (a, b) in at_zero.iter().zip(&plain) {
            assert!((a - b).abs() < 1e-12);
        }
        // Far in the past: pure characteristic translation.
        let t = ordering_time(&x, &rho);
        let s = -t - 3.0;
        let back = psi_s(&x, s, &rho).unwrap();
        for (k, b) in back.iter().enumerate() {
            let want = x[k] + s * (1.0 - rho[k] - rho[k + 1]);
            assert!((b - want).abs() < 1e-12);
        }
        // Far in the future the merged block is stationary for these densities.
        let fwd1 = psi_s(&x, 5.0, &rho).unwrap();
        let fwd2 = psi_s(&x, 50.0, &rho).unwrap();
        assert!((fwd1[0] - fwd1[1]).abs() < 1e-12);
        for (a, b) in fwd1.iter().zip(&fwd2) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn mass_is_conserved_between_snapshots() {
        // Rankine-Hugoniot bookkeeping: the mass change over [a, b] covering
        // all fronts equals t * (flux(rho_0) - flux(rho_n)).
        let flux = |r: f64| r * (1.0 - r);
        let mut rng = ChaCha8Rng::seed_from_u64(74);
        for _ in 0..200 {
            let rho = [
                rng.random_range(0.0..0.2),
                rng.random_range(0.25..0.45),
                rng.random_range(0.5..0.7),
                rng.random_range(0.75..1.0),
            ];
            let mut b: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            b.sort_by(f64::total_cmp);
            b[1] = b[0] + (b[1] - b[0]).max(1e-3);
            b[2] = b[1] + (b[2] - b[1]).max(1e-3);
            let t = rng.random_range(0.0..4.0);
            let state0 = solve_fronts(&b, &rho, 0.0).unwrap();
            let state1 = solve_fronts(&b, &rho, t).unwrap();
            let (a, z) = (-40.0, 40.0);
            let m0 = integrate_density(&state0, a, z);
            let m1 = integrate_density(&state1, a, z);
            let want = t * (flux(rho[0]) - flux(rho[3]));
            assert!(
                ((m1 - m0) - want).abs() < 1e-9,
                "mass change {} vs {want}",
                m1 - m0
            );
        }
    }

    #[test]
    fn translation_covariance() {
        // Exact for dyadic data; within roundoff for generic data.
        let rho = [0.0, 0.25, 0.5, 0.75];
        let b = [-1.0, 0.5, 2.0];
        let t = 3.0;
        let base = solve_fronts(&b, &rho, t).unwrap();
        let shift = 4.0;
        let shifted: Vec<f64> = b.iter().map(|p| p + shift).collect();
        let moved = solve_fronts(&shifted, &rho, t).unwrap();
        for (a, c) in base.label_positions().iter().zip(moved.label_positions()) {
            assert_eq!(a + shift, c);
        }

        let mut rng = ChaCha8Rng::seed_from_u64(75);
        for _ in 0..100 {
            let rho = [0.07, 0.33, 0.61, 0.88];
            let mut b: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            b.sort_by(f64::total_cmp);
            b[1] = b[0] + (b[1] - b[0]).max(1e-3);
            b[2] = b[1] + (b[2] - b[1]).max(1e-3);
            let dr: f64 = rng.random_range(-5.0..5.0);
            let t: f64 = rng.random_range(0.0..5.0);
            let base = solve_fronts(&b, &rho, t).unwrap();
            let shifted: Vec<f64> = b.iter().map(|p| p + dr).collect();
            let moved = solve_fronts(&shifted, &rho, t).unwrap();
            for (a, c) in base.label_positions().iter().zip(moved.label_positions()) {
                assert!((a + dr - c).abs() < 1e-12, "{a} + {dr} vs {c}");
            }
        }
    }

    #[test]
    fn bad_inputs_are_rejected() {
        assert!(solve_fronts(&[1.0, 0.0], &RHO2, 1.0).is_err());
        assert!(solve_fronts(&[0.0, 1.0], &[0.5, 0.2, 0.9], 1.0).is_err());
        assert!(solve_fronts(&[0.0], &[0.1, 1.2], 1.0).is_err());
        assert!(psi(&[0.0], &[0.2, 0.8], Some(-1.0)).is_err());
    }
}
