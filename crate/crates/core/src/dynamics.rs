//! Event-driven evolution: exact pair collision times, the equal-mass
//! exchange law, the full-scan scheduler, and the simulation loop.

use crate::error::{Error, Result};
use crate::log::{CollisionEvent, EventLog, LogHeader, Termination, FORMAT_VERSION};
use crate::state::SystemState;
use crate::tol::{CONTACT, EPS_GEOM, EPS_T};
use crate::vecd;

/// First time t > 0 at which |w + t u| = 2 with strict approach, where w is
/// the relative position x_i - x_j and u the relative velocity v_i - v_j.
///
/// Returns `None` for receding pairs, misses, and exact grazing contacts
/// (zero discriminant or zero approach product): a grazing touch does not
/// change velocities, so it is not a collision.
///
/// The root is computed as c / (-b + sqrt(disc)) to avoid cancellation
/// between -w.u and the discriminant root when the contact is nearly
/// immediate.
pub fn pair_collision_time(w: &[f64], u: &[f64]) -> Result<Option<f64>> {
    let c = vecd::norm_sq(w) - CONTACT * CONTACT;
    let dist = vecd::norm(w);
    if dist < CONTACT - EPS_GEOM {
        return Err(Error::Overlap { i: 0, j: 0, dist, min: CONTACT - EPS_GEOM });
    }
    let b = vecd::dot(w, u);
    if b >= 0.0 {
        return Ok(None); // receding or parallel
    }
    let a = vecd::norm_sq(u);
    if a == 0.0 {
        return Ok(None);
    }
    let disc = b * b - a * c;
    if disc <= 0.0 {
        return Ok(None); // miss, or exact grazing at disc == 0
    }
    let t = c / (-b + disc.sqrt());
    if t > 0.0 {
        Ok(Some(t))
    } else {
        Ok(None)
    }
}

/// Applies the equal-mass elastic exchange to balls i and j, which must be
/// in contact and approaching: the velocity components along the center
/// line are swapped, the orthogonal components are untouched, and every
/// other ball is unchanged.
pub fn apply_collision(state: &SystemState, i: usize, j: usize) -> Result<SystemState> {
    let w = vecd::sub(&state.positions[i], &state.positions[j]);
    let dist = vecd::norm(&w);
    if (dist - CONTACT).abs() > EPS_GEOM {
        return Err(Error::NonContact { i, j, dist });
    }
    let n = vecd::scale(&w, 1.0 / dist);
    let vi = &state.velocities[i];
    let vj = &state.velocities[j];
    let radial = vecd::dot(&vecd::sub(vi, vj), &n);
    if radial >= 0.0 {
        return Err(Error::NonApproaching { i, j, radial });
    }
    let ai = vecd::dot(vi, &n);
    let aj = vecd::dot(vj, &n);
    let mut out = state.clone();
    out.velocities[i] = vecd::add_scaled(vi, aj - ai, &n);
    out.velocities[j] = vecd::add_scaled(vj, ai - aj, &n);
    Ok(out)
}

/// Minimum over all pairs of `pair_collision_time`, as an absolute time with
/// the colliding pair; `None` when every pair recedes or misses (permanent
/// free flight).
///
/// Full O(n^2) scan; this is the oracle any accelerated scheduler has to
/// match. Aborts when the two earliest candidates are closer than EPS_T:
/// the imminent event would be ambiguous, violating the no-simultaneous-
/// collisions assumption.
pub fn next_event(state: &SystemState) -> Result<Option<(f64, (usize, usize))>> {
    let n = state.n();
    let mut best: Option<(f64, (usize, usize))> = None;
    let mut second: Option<(f64, (usize, usize))> = None;
    for i in 0..n {
        for j in (i + 1)..n {
            let w = vecd::sub(&state.positions[i], &state.positions[j]);
            let u = vecd::sub(&state.velocities[i], &state.velocities[j]);
            let dt = match pair_collision_time(&w, &u) {
                Ok(Some(dt)) => dt,
                Ok(None) => continue,
                Err(Error::Overlap { dist, min, .. }) => {
                    return Err(Error::Overlap { i, j, dist, min })
                }
                Err(e) => return Err(e),
            };
            let cand = (dt, (i, j));
            match best {
                None => best = Some(cand),
                Some(b) if dt < b.0 => {
                    second = Some(b);
                    best = Some(cand);
                }
                Some(_) => match second {
                    None => second = Some(cand),
                    Some(s) if dt < s.0 => second = Some(cand),
                    Some(_) => {}
                },
            }
        }
    }
    if let (Some(b), Some(s)) = (best, second) {
        if s.0 - b.0 < EPS_T {
            return Err(Error::Simultaneity {
                i1: b.1 .0,
                j1: b.1 .1,
                t1: state.t + b.0,
                i2: s.1 .0,
                j2: s.1 .1,
                t2: state.t + s.0,
            });
        }
    }
    Ok(best.map(|(dt, pair)| (state.t + dt, pair)))
}

/// Advances the system event by event, recording every collision, until the
/// horizon is passed, the event budget is reached, or no collision remains.
///
/// Positions move by exact linear steps to each event time; the contact
/// residual is monitored (via log assembly) but never corrected, keeping
/// the trajectory exactly piecewise-linear and replayable. Deterministic:
/// identical inputs give bit-identical logs on one platform.
pub fn simulate(
    initial: &SystemState,
    horizon: Option<f64>,
    max_events: usize,
    seed: u64,
    scenario: &str,
) -> Result<EventLog> {
    initial.validate()?;
    let header = LogHeader {
        format_version: FORMAT_VERSION,
        n: initial.n(),
        d: initial.dim,
        seed,
        scenario: scenario.to_string(),
        t0: initial.t,
        horizon,
        positions: initial.positions.clone(),
        velocities: initial.velocities.clone(),
    };

    let mut state = initial.clone();
    let mut events: Vec<CollisionEvent> = Vec::new();
    let terminated = loop {
        let (t_next, (i, j)) = match next_event(&state)? {
            None => break Termination::FreeFlight,
            Some(hit) => hit,
        };
        if let Some(h) = horizon {
            if t_next > h {
                break Termination::Horizon;
            }
        }
        if events.len() >= max_events {
            break Termination::Budget;
        }
        if let Some(prev) = events.last() {
            if t_next - prev.t <= EPS_T {
                return Err(Error::Simultaneity {
                    i1: prev.i,
                    j1: prev.j,
                    t1: prev.t,
                    i2: i,
                    j2: j,
                    t2: t_next,
                });
            }
        }
        state.advance(t_next - state.t);
        let post = apply_collision(&state, i, j)?;
        events.push(CollisionEvent {
            t: t_next,
            i,
            j,
            xi: state.positions[i].clone(),
            xj: state.positions[j].clone(),
            vi_pre: state.velocities[i].clone(),
            vj_pre: state.velocities[j].clone(),
            vi_post: post.velocities[i].clone(),
            vj_post: post.velocities[j].clone(),
        });
        state = post;
    };

    EventLog::assemble(header, events, terminated, false)
}

/// Extends a log backward in time until permanent free flight, by running
/// the time-reversed system forward and mirroring its events. The returned
/// log starts strictly before every collision, so it is certified on the
/// backward tail.
pub fn extend_backward(log: &EventLog, max_events: usize) -> Result<EventLog> {
    let t_anchor = log.header.t0;
    let rev = log.initial_state().reversed();
    let revlog = simulate(&rev, None, max_events, log.header.seed, &log.header.scenario)?;
    if revlog.terminated != Termination::FreeFlight {
        return Err(Error::BudgetExceeded { budget: max_events });
    }
    if revlog.event_count() == 0 {
        let mut out = log.clone();
        out.set_backward_free(true);
        return Ok(out);
    }

    // One time unit past the last reversed event is safely inside the
    // reversed system's free flight.
    let sigma_end = revlog.last_event_time().unwrap() + 1.0;
    let rev_final = revlog.state_at(sigma_end)?;
    let t_new = 2.0 * t_anchor - sigma_end;
    let new_initial = rev_final.reversed();

    // A reversed event at sigma maps to an original-time event at
    // 2 t_anchor - sigma with pre/post roles mirrored and negated.
    let mut events: Vec<CollisionEvent> = revlog
        .events()
        .iter()
        .rev()
        .map(|e| CollisionEvent {
            t: 2.0 * t_anchor - e.t,
            i: e.i,
            j: e.j,
            xi: e.xi.clone(),
            xj: e.xj.clone(),
            vi_pre: vecd::scale(&e.vi_post, -1.0),
            vj_pre: vecd::scale(&e.vj_post, -1.0),
            vi_post: vecd::scale(&e.vi_pre, -1.0),
            vj_post: vecd::scale(&e.vj_pre, -1.0),
        })
        .collect();
    events.extend(log.events().iter().cloned());

    let header = LogHeader {
        t0: t_new,
        positions: new_initial.positions.clone(),
        velocities: new_initial.velocities.clone(),
        ..log.header.clone()
    };
    EventLog::assemble(header, events, log.terminated, true)
}

/// Checks (and records on success) that no collision happens before the
/// log's initial time: the time-reversed initial state must be in permanent
/// free flight.
pub fn certify_backward(log: &mut EventLog) -> Result<bool> {
    let free = next_event(&log.initial_state().reversed())?.is_none();
    if free {
        log.set_backward_free(true);
    }
    Ok(free)
}
