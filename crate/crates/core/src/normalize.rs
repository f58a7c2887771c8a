//! Reduction of an arbitrary evolution to the reference frame with zero
//! total momentum, center of mass at the origin, and unit kinetic energy,
//! plus the pivot time t0 minimizing the configuration norm |x(t)| and the
//! per-subfamily frame used by the decomposition.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::log::{CollisionEvent, EventLog, LogHeader, Termination};
use crate::state::SystemState;
use crate::tol::EPS_NUM;
use crate::vecd;

/// Parameters of the frame reduction applied by [`normalize`], with the
/// pivot data filled in once computed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameReport {
    /// Per-ball velocity shift that zeroes the total momentum.
    pub momentum_shift: Vec<f64>,
    /// Center of mass at the reference time; the affine trajectory
    /// `center_offset + (t - reference_time) * center_drift` was subtracted
    /// from all positions.
    pub center_offset: Vec<f64>,
    pub center_drift: Vec<f64>,
    pub reference_time: f64,
    /// Scalar applied to velocities to reach unit energy; event times
    /// rescale by its inverse around the reference time.
    pub speed_scale: f64,
    pub t0: Option<f64>,
    pub x_norm_at_t0: Option<f64>,
    /// Optional sampled angle between x(t) and v(t+), in radians.
    pub alpha_profile: Option<Vec<(f64, f64)>>,
}

/// Rewrites a log in the inertial frame with zero momentum and centered
/// configuration, with velocities rescaled to |v| = 1. Event times rescale
/// by the inverse speed scale around the log's start time; the collision
/// count and pair order are unchanged.
pub fn normalize(log: &EventLog) -> Result<(EventLog, FrameReport)> {
    let initial = log.initial_state();
    let n = initial.n() as f64;
    let t_ref = initial.t;
    let w = vecd::scale(&initial.momentum(), 1.0 / n);
    let energy_shifted: f64 = initial
        .velocities
        .iter()
        .map(|v| vecd::norm_sq(&vecd::sub(v, &w)))
        .sum();
    if energy_shifted <= 1e-300 {
        return Err(Error::ZeroEnergy);
    }
    let c1 = 1.0 / energy_shifted.sqrt();
    let c0 = initial.center_of_mass();

    let map_time = |t: f64| t_ref + (t - t_ref) / c1;
    let map_pos = |x: &[f64], t: f64| {
        let mut out = vecd::sub(x, &c0);
        vecd::axpy(&mut out, -(t - t_ref), &w);
        out
    };
    let map_vel = |v: &[f64]| vecd::scale(&vecd::sub(v, &w), c1);

    let events: Vec<CollisionEvent> = log
        .events()
        .iter()
        .map(|e| CollisionEvent {
            t: map_time(e.t),
            i: e.i,
            j: e.j,
            xi: map_pos(&e.xi, e.t),
            xj: map_pos(&e.xj, e.t),
            vi_pre: map_vel(&e.vi_pre),
            vj_pre: map_vel(&e.vj_pre),
            vi_post: map_vel(&e.vi_post),
            vj_post: map_vel(&e.vj_post),
        })
        .collect();

    let header = LogHeader {
        horizon: log.header.horizon.map(map_time),
        positions: initial.positions.iter().map(|x| map_pos(x, t_ref)).collect(),
        velocities: initial.velocities.iter().map(|v| map_vel(v)).collect(),
        ..log.header.clone()
    };
    let normalized = EventLog::assemble(header, events, log.terminated, log.is_backward_free())?;

    let report = FrameReport {
        momentum_shift: w.clone(),
        center_offset: c0,
        center_drift: w,
        reference_time: t_ref,
        speed_scale: c1,
        t0: None,
        x_norm_at_t0: None,
        alpha_profile: None,
    };
    Ok((normalized, report))
}

/// Global minimizer of the configuration norm |x(t)| over the whole (two-
/// sided) trajectory, together with the attained norm.
///
/// On each inter-event piece |x(t)|^2 is a quadratic with nonnegative
/// leading coefficient, so the minimum is at the clamped vertex; the global
/// minimum scans the pieces in time order, which also realizes the
/// earliest-point convention for degenerate flat stretches.
pub fn find_t0(log: &EventLog) -> Result<(f64, f64)> {
    if log.terminated != Termination::FreeFlight {
        return Err(Error::UncertifiedTail { side: "forward" });
    }
    if !log.is_backward_free() {
        return Err(Error::UncertifiedTail { side: "backward" });
    }

    let mut best: Option<(f64, f64)> = None; // (norm_sq, t)
    for piece in pieces(log) {
        let a = piece.anchor.config_norm().powi(2);
        let b: f64 = piece
            .anchor
            .positions
            .iter()
            .zip(&piece.anchor.velocities)
            .map(|(x, v)| vecd::dot(x, v))
            .sum();
        let c = piece.anchor.energy();
        let t_a = piece.anchor.t;
        let (tau, val) = if c > 1e-30 {
            let mut tau = -b / c;
            if piece.lo.is_finite() {
                tau = tau.max(piece.lo - t_a);
            }
            if piece.hi.is_finite() {
                tau = tau.min(piece.hi - t_a);
            }
            (tau, a + 2.0 * b * tau + c * tau * tau)
        } else {
            // All balls at rest on this piece: the norm is constant; take
            // the earliest finite point.
            let t_pick = if piece.lo.is_finite() {
                piece.lo
            } else if piece.hi.is_finite() {
                piece.hi
            } else {
                t_a
            };
            (t_pick - t_a, a)
        };
        let t_cand = t_a + tau;
        if best.map_or(true, |(v, _)| val < v) {
            best = Some((val, t_cand));
        }
    }
    let (val, t0) = best.expect("log has at least one piece");
    Ok((t0, val.max(0.0).sqrt()))
}

pub(crate) struct Piece {
    pub anchor: SystemState,
    pub lo: f64,
    pub hi: f64,
}

/// Inter-event pieces of the trajectory in time order, each with the state
/// at its left end (v(t+) convention). Tail pieces run to the covered-span
/// limits, which are infinite for certified free flight.
pub(crate) fn pieces(log: &EventLog) -> Vec<Piece> {
    let (lo, hi) = log.covered_span();
    let evs = log.events();
    let mut out = Vec::with_capacity(evs.len() + 1);
    if evs.is_empty() {
        out.push(Piece { anchor: log.initial_state(), lo, hi });
        return out;
    }
    out.push(Piece { anchor: log.initial_state(), lo, hi: evs[0].t });
    for k in 0..evs.len() {
        let piece_hi = if k + 1 < evs.len() { evs[k + 1].t } else { hi };
        let anchor = log
            .state_at(evs[k].t)
            .expect("event time is inside the covered span");
        out.push(Piece { anchor, lo: evs[k].t, hi: piece_hi });
    }
    out
}

/// Sampled angle between the configuration vector x(t) and the velocity
/// vector v(t+), for diagnostics. The angle crosses pi/2 exactly once, at
/// the pivot time.
pub fn alpha_profile(log: &EventLog, samples: usize) -> Vec<(f64, f64)> {
    let (lo, hi) = match (log.first_event_time(), log.last_event_time()) {
        (Some(a), Some(b)) => (a - 1.0, b + 1.0),
        _ => (log.header.t0 - 1.0, log.header.t0 + 1.0),
    };
    let mut out = Vec::with_capacity(samples + 1);
    for k in 0..=samples {
        let t = lo + (hi - lo) * k as f64 / samples.max(1) as f64;
        let Ok(s) = log.state_at(t) else { continue };
        let x2 = s.config_norm();
        let v2 = s.energy().sqrt();
        if x2 <= 1e-300 || v2 <= 1e-300 {
            continue;
        }
        let cosang: f64 = s
            .positions
            .iter()
            .zip(&s.velocities)
            .map(|(x, v)| vecd::dot(x, v))
            .sum::<f64>()
            / (x2 * v2);
        out.push((t, cosang.clamp(-1.0, 1.0).acos()));
    }
    out
}

/// Restricts a log to the subfamily `family` on the closed interval
/// [t1, t2], rewritten in the inertial frame fixing the subfamily's center
/// of mass at the origin. Returns the restricted log (with local ball
/// indices following the order of `family`) and the subfamily speed |v_F|,
/// which is constant across the interval.
///
/// Fails with an external-collision error if any ball of the subfamily
/// collides with an outside ball strictly inside (t1, t2).
pub fn subfamily_frame(
    log: &EventLog,
    family: &[usize],
    t1: f64,
    t2: f64,
) -> Result<(EventLog, f64)> {
    let n = log.header.n;
    if family.is_empty() || family.windows(2).any(|w| w[0] >= w[1]) || family[family.len() - 1] >= n
    {
        return Err(Error::InvalidParam(format!(
            "family {family:?} is not a sorted subset of 0..{n}"
        )));
    }
    if !(t1.is_finite() && t2.is_finite() && t1 <= t2) {
        return Err(Error::InvalidParam(format!("bad interval [{t1}, {t2}]")));
    }
    let mut in_f = vec![false; n];
    for &k in family {
        in_f[k] = true;
    }
    let local = |orig: usize| family.iter().position(|&k| k == orig).unwrap();

    // Isolation on the open interval; internal events on the closed interval
    // belong to the restricted trajectory (endpoint collisions included).
    let mut internal: Vec<&CollisionEvent> = Vec::new();
    for e in log.events() {
        if e.t < t1 || e.t > t2 {
            continue;
        }
        match (in_f[e.i], in_f[e.j]) {
            (true, true) => internal.push(e),
            (false, false) => {}
            (inside_i, _) => {
                if e.t > t1 && e.t < t2 {
                    let (inside, outside) = if inside_i { (e.i, e.j) } else { (e.j, e.i) };
                    return Err(Error::ExternalCollision { inside, outside, t: e.t });
                }
                // Boundary-time external collisions are ghosted; the anchor
                // convention below accounts for them.
            }
        }
    }

    // Anchor at t1 with v(t1+); an internal event exactly at t1 stays in the
    // restricted event list, so un-apply it here to keep the replay
    // consistent (and to give backward extension the pre-collision state).
    let full = log.state_at(t1)?;
    let mut anchor = full.restrict(family);
    if let Some(e0) = internal.first().filter(|e| e.t == t1) {
        anchor.velocities[local(e0.i)] = e0.vi_pre.clone();
        anchor.velocities[local(e0.j)] = e0.vj_pre.clone();
    }

    let nf = family.len() as f64;
    let w_f = vecd::scale(&anchor.momentum(), 1.0 / nf);
    let c_f = anchor.center_of_mass();
    let v_norm = anchor
        .velocities
        .iter()
        .map(|v| vecd::norm_sq(&vecd::sub(v, &w_f)))
        .sum::<f64>()
        .sqrt();

    let map_pos = |x: &[f64], t: f64| {
        let mut out = vecd::sub(x, &c_f);
        vecd::axpy(&mut out, -(t - t1), &w_f);
        out
    };
    let map_vel = |v: &[f64]| vecd::sub(v, &w_f);

    let events: Vec<CollisionEvent> = internal
        .iter()
        .map(|e| CollisionEvent {
            t: e.t,
            i: local(e.i),
            j: local(e.j),
            xi: map_pos(&e.xi, e.t),
            xj: map_pos(&e.xj, e.t),
            vi_pre: map_vel(&e.vi_pre),
            vj_pre: map_vel(&e.vj_pre),
            vi_post: map_vel(&e.vi_post),
            vj_post: map_vel(&e.vj_post),
        })
        .collect();

    let header = LogHeader {
        n: family.len(),
        t0: t1,
        horizon: Some(t2),
        positions: anchor.positions.iter().map(|x| map_pos(x, t1)).collect(),
        velocities: anchor.velocities.iter().map(|v| map_vel(v)).collect(),
        ..log.header.clone()
    };
    let restricted = EventLog::assemble(header, events, Termination::Horizon, false)?;

    debug_assert!(
        vecd::norm(&restricted.initial_state().momentum()) <= EPS_NUM * nf.max(1.0),
        "subfamily momentum not removed"
    );
    Ok((restricted, v_norm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{certify_backward, extend_backward, simulate};

    fn head_on_log() -> EventLog {
        let s = SystemState {
            dim: 2,
            t: 0.0,
            positions: vec![vec![-3.0, 0.0], vec![3.0, 0.0]],
            velocities: vec![vec![1.0, 0.0], vec![-1.0, 0.0]],
        };
        simulate(&s, None, 100, 7, "head_on").unwrap()
    }

    #[test]
    fn normalize_already_normalized_is_identity() {
        let r = 0.5f64.sqrt();
        let s = SystemState {
            dim: 2,
            t: 0.0,
            positions: vec![vec![-3.0, 0.0], vec![3.0, 0.0]],
            velocities: vec![vec![r, 0.0], vec![-r, 0.0]],
        };
        let log = simulate(&s, None, 100, 0, "t").unwrap();
        let (nl, rep) = normalize(&log).unwrap();
        assert!(vecd::norm(&rep.momentum_shift) < 1e-15);
        assert!((rep.speed_scale - 1.0).abs() < 1e-12);
        assert_eq!(nl.pair_sequence(), log.pair_sequence());
        assert!((nl.events()[0].t - log.events()[0].t).abs() < 1e-12);
    }

    #[test]
    fn normalize_removes_uniform_velocity_shift() {
        let base = head_on_log();
        let shifted = SystemState {
            dim: 2,
            t: 0.0,
            positions: vec![vec![-3.0, 0.0], vec![3.0, 0.0]],
            velocities: vec![vec![1.7, 0.25], vec![-0.3, 0.25]],
        };
        let log = simulate(&shifted, None, 100, 7, "shifted").unwrap();
        let (nl, rep) = normalize(&log).unwrap();
        let (nb, _) = normalize(&base).unwrap();
        assert_eq!(nl.pair_sequence(), nb.pair_sequence());
        assert!((rep.momentum_shift[0] - 0.7).abs() < 1e-12);
        assert!((rep.momentum_shift[1] - 0.25).abs() < 1e-12);
        for (a, b) in nl.events().iter().zip(nb.events()) {
            assert!((a.t - b.t).abs() < 1e-9);
        }
    }

    #[test]
    fn normalize_halves_spans_when_velocities_double() {
        let base = head_on_log();
        let fast = SystemState {
            dim: 2,
            t: 0.0,
            positions: vec![vec![-3.0, 0.0], vec![3.0, 0.0]],
            velocities: vec![vec![2.0, 0.0], vec![-2.0, 0.0]],
        };
        let log = simulate(&fast, None, 100, 7, "fast").unwrap();
        assert_eq!(log.events()[0].t, 1.0); // raw event at t=1 instead of 2
        let (nl, _) = normalize(&log).unwrap();
        let (nb, _) = normalize(&base).unwrap();
        assert_eq!(nl.pair_sequence(), nb.pair_sequence());
        // same trajectory at a different rate: identical normalized times
        assert!((nl.events()[0].t - nb.events()[0].t).abs() < 1e-12);
    }

    #[test]
    fn normalize_is_idempotent() {
        let log = head_on_log();
        let (n1, _) = normalize(&log).unwrap();
        let (n2, rep2) = normalize(&n1).unwrap();
        assert!((rep2.speed_scale - 1.0).abs() < 1e-12);
        assert!(vecd::norm(&rep2.momentum_shift) < 1e-12);
        for (a, b) in n1.events().iter().zip(n2.events()) {
            assert!((a.t - b.t).abs() < EPS_NUM * a.t.abs().max(1.0));
        }
    }

    #[test]
    fn normalize_zero_energy_rejected() {
        let s = SystemState {
            dim: 2,
            t: 0.0,
            positions: vec![vec![-3.0, 0.0], vec![3.0, 0.0]],
            velocities: vec![vec![0.4, 0.1], vec![0.4, 0.1]],
        };
        let log = simulate(&s, None, 10, 0, "drift").unwrap();
        assert!(matches!(normalize(&log), Err(Error::ZeroEnergy)));
    }

    #[test]
    fn find_t0_single_free_flight_piece() {
        // one piece: t0 at the vertex -x0.v/|v|^2
        let s = SystemState {
            dim: 2,
            t: 0.0,
            positions: vec![vec![-10.0, 2.5], vec![10.0, -2.5]],
            velocities: vec![vec![0.5, 0.0], vec![-0.5, 0.0]],
        };
        let mut log = simulate(&s, None, 100, 0, "flyby").unwrap();
        assert_eq!(log.event_count(), 0); // miss distance 5 > 2
        certify_backward(&mut log).unwrap();
        let (t0, xn) = find_t0(&log).unwrap();
        // x0.v = 2 * (-10 * 0.5) = -10, |v|^2 = 0.5 -> t0 = 20
        assert!((t0 - 20.0).abs() < 1e-12);
        assert!((xn - (2.0 * 2.5f64 * 2.5).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn find_t0_head_on_is_collision_time() {
        // normalized two-ball head-on: centers +-3, unit total energy
        let r = 0.5f64.sqrt();
        let s = SystemState {
            dim: 2,
            t: 0.0,
            positions: vec![vec![-3.0, 0.0], vec![3.0, 0.0]],
            velocities: vec![vec![r, 0.0], vec![-r, 0.0]],
        };
        let log = simulate(&s, None, 100, 0, "t").unwrap();
        let full = extend_backward(&log, 100).unwrap();
        let (t0, xn) = find_t0(&full).unwrap();
        let t_coll = log.events()[0].t; // gap 4 closing at sqrt(2)
        assert!((t_coll - 4.0 / 2.0f64.sqrt()).abs() < 1e-12);
        assert!((t0 - t_coll).abs() < 1e-12);
        assert!((xn - 2.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn find_t0_requires_certified_tails() {
        let log = head_on_log();
        assert!(matches!(find_t0(&log), Err(Error::UncertifiedTail { .. })));
    }

    #[test]
    fn find_t0_is_global_minimum_on_samples() {
        let r = 0.5f64.sqrt();
        let s = SystemState {
            dim: 2,
            t: 0.0,
            positions: vec![vec![-3.0, 1.0], vec![3.0, -1.0]],
            velocities: vec![vec![r, 0.0], vec![-r, 0.0]],
        };
        let log = simulate(&s, None, 100, 0, "t").unwrap();
        let full = extend_backward(&log, 100).unwrap();
        let (t0, xn) = find_t0(&full).unwrap();
        for k in 0..=1000 {
            let t = t0 - 50.0 + k as f64 * 0.1;
            let norm = full.state_at(t).unwrap().config_norm();
            assert!(norm >= xn - 1e-9, "norm {norm} below minimum {xn} at t={t}");
        }
    }

    #[test]
    fn subfamily_identity_on_full_family() {
        let r = 0.5f64.sqrt();
        let s = SystemState {
            dim: 2,
            t: 0.0,
            positions: vec![vec![-3.0, 0.0], vec![3.0, 0.0]],
            velocities: vec![vec![r, 0.0], vec![-r, 0.0]],
        };
        let log = simulate(&s, None, 100, 0, "t").unwrap();
        let (sub, v_norm) = subfamily_frame(&log, &[0, 1], 0.0, 10.0).unwrap();
        assert!((v_norm - 1.0).abs() < 1e-12);
        assert_eq!(sub.event_count(), 1);
        assert_eq!(sub.events()[0].t, log.events()[0].t);
    }

    #[test]
    fn subfamily_single_ball_rest_frame() {
        let s = SystemState {
            dim: 2,
            t: 0.0,
            positions: vec![vec![-3.0, 0.0], vec![3.0, 0.0]],
            velocities: vec![vec![1.0, 0.0], vec![-1.0, 0.0]],
        };
        let log = simulate(&s, None, 100, 0, "t").unwrap();
        let (sub, v_norm) = subfamily_frame(&log, &[0], 0.0, 1.0).unwrap();
        assert_eq!(v_norm, 0.0);
        assert_eq!(sub.event_count(), 0);
        let st = sub.state_at(0.5).unwrap();
        assert!(vecd::norm(&st.positions[0]) < 1e-12);
    }

    #[test]
    fn subfamily_center_stays_at_origin() {
        // pair (0,1) collides; ball 2 passes far away
        let s = SystemState {
            dim: 2,
            t: 0.0,
            positions: vec![vec![-4.0, 0.0], vec![4.0, 0.0], vec![0.0, 100.0]],
            velocities: vec![vec![1.0, 0.1], vec![-1.0, 0.1], vec![0.0, 1.0]],
        };
        let log = simulate(&s, None, 100, 0, "t").unwrap();
        let (sub, _) = subfamily_frame(&log, &[0, 1], 0.0, 8.0).unwrap();
        for k in 0..=100 {
            let t = 8.0 * k as f64 / 100.0;
            let st = sub.state_at(t).unwrap();
            let c = st.center_of_mass();
            assert!(vecd::norm(&c) < 1e-9, "center {c:?} drifted at t={t}");
        }
    }

    #[test]
    fn subfamily_rejects_external_collision() {
        let s = SystemState {
            dim: 2,
            t: 0.0,
            positions: vec![vec![-4.0, 0.0], vec![4.0, 0.0], vec![0.0, 100.0]],
            velocities: vec![vec![1.0, 0.1], vec![-1.0, 0.1], vec![0.0, 1.0]],
        };
        let log = simulate(&s, None, 100, 0, "t").unwrap();
        let r = subfamily_frame(&log, &[0, 2], 0.0, 8.0);
        assert!(matches!(r, Err(Error::ExternalCollision { .. })));
    }
}
