//! The modified evolution of an isolated subfamily: inside its interval it
//! coincides with the recorded trajectory; beyond the interval the
//! subfamily keeps colliding internally while every outside ball is ignored
//! (outside balls pass through like ghosts). Both tails are extended until
//! certified permanent free flight.

use crate::dynamics::simulate;
use crate::error::{Error, Result};
use crate::log::{CollisionEvent, EventLog, LogHeader, Termination};
use crate::normalize::subfamily_frame;
use crate::tol::EPS_NUM;
use crate::tree::TimeBound;
use crate::vecd;

/// A subfamily's modified evolution in its own center-of-mass frame,
/// covering all of time with certified free-flight tails. Ball indices in
/// the log are local (0..family.len()); `family` maps them back to the
/// parent's indices. Interval-interior event times are bit-exact copies of
/// the parent log's times.
#[derive(Debug, Clone)]
pub struct GhostLog {
    pub log: EventLog,
    /// Original ball indices, sorted ascending.
    pub family: Vec<usize>,
    pub t1: TimeBound,
    pub t2: TimeBound,
    /// Subfamily speed |v_F|, constant on [t1, t2].
    pub v_norm: f64,
}

impl GhostLog {
    pub fn to_original_index(&self, local: usize) -> usize {
        self.family[local]
    }

    pub fn family_size(&self) -> usize {
        self.family.len()
    }
}

/// Builds the modified evolution of `family` anchored on [t1, t2] of the
/// parent log. Infinite bounds are only meaningful for the full family on a
/// log that is already certified on both tails (the decomposition root), in
/// which case the log itself is the modified evolution.
pub fn ghost_extend(
    log: &EventLog,
    family: &[usize],
    t1: TimeBound,
    t2: TimeBound,
    budget: usize,
) -> Result<GhostLog> {
    match (t1, t2) {
        (TimeBound::NegInf, TimeBound::PosInf) => {
            if family.len() != log.header.n {
                return Err(Error::InvalidParam(
                    "infinite interval is only valid for the full family".into(),
                ));
            }
            if log.terminated != Termination::FreeFlight {
                return Err(Error::UncertifiedTail { side: "forward" });
            }
            if !log.is_backward_free() {
                return Err(Error::UncertifiedTail { side: "backward" });
            }
            let v_norm = log.initial_state().energy().sqrt();
            Ok(GhostLog { log: log.clone(), family: family.to_vec(), t1, t2, v_norm })
        }
        (TimeBound::Finite(a), TimeBound::Finite(b)) => {
            ghost_extend_finite(log, family, a, b, budget)
        }
        _ => Err(Error::InvalidParam(
            "half-infinite subfamily intervals do not occur".into(),
        )),
    }
}

fn ghost_extend_finite(
    log: &EventLog,
    family: &[usize],
    t1: f64,
    t2: f64,
    budget: usize,
) -> Result<GhostLog> {
    let (restricted, v_norm) = subfamily_frame(log, family, t1, t2)?;

    // Backward: reverse at t1 and run forward; the restricted anchor holds
    // the pre-collision state of any internal event at exactly t1, so the
    // reversed system recedes from it.
    let rev = restricted.initial_state().reversed();
    let revlog = simulate(&rev, None, budget, log.header.seed, &log.header.scenario)?;
    if revlog.terminated != Termination::FreeFlight {
        return Err(Error::BudgetExceeded { budget });
    }

    // Forward: replaying the restricted log to t2 applies internal events
    // only, which is exactly the modified evolution's state there (an
    // external collision at t2 never enters the restricted list).
    let fwd_start = restricted.state_at(t2)?;
    let fwdlog = simulate(&fwd_start, None, budget, log.header.seed, &log.header.scenario)?;
    if fwdlog.terminated != Termination::FreeFlight {
        return Err(Error::BudgetExceeded { budget });
    }

    // Anchor the assembled log in the certified backward free flight.
    let initial = if let Some(last) = revlog.last_event_time() {
        let sigma_end = last + 1.0;
        revlog.state_at(sigma_end)?.reversed()
    } else {
        restricted.initial_state()
    };
    let t_init = if revlog.event_count() == 0 { t1 } else { 2.0 * t1 - initial.t };

    let mut events: Vec<CollisionEvent> = revlog
        .events()
        .iter()
        .rev()
        .map(|e| CollisionEvent {
            t: 2.0 * t1 - e.t,
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
    events.extend(restricted.events().iter().cloned());
    events.extend(fwdlog.events().iter().cloned());

    let header = LogHeader {
        n: family.len(),
        t0: t_init,
        horizon: None,
        positions: initial.positions.clone(),
        velocities: initial.velocities.clone(),
        ..log.header.clone()
    };
    let ghost = EventLog::assemble(header, events, Termination::FreeFlight, true)?;

    debug_assert!(
        (ghost.initial_state().energy().sqrt() - v_norm).abs() <= EPS_NUM * v_norm.max(1.0)
    );
    Ok(GhostLog {
        log: ghost,
        family: family.to_vec(),
        t1: TimeBound::Finite(t1),
        t2: TimeBound::Finite(t2),
        v_norm,
    })
}
