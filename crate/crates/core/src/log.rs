use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::SystemState;
use crate::tol::{CONTACT, EPS_GEOM, EPS_NUM, EPS_T};
use crate::vecd;

/// One elastic collision: the unit of counting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionEvent {
    pub t: f64,
    /// Ball indices, i < j.
    pub i: usize,
    pub j: usize,
    /// Centers at impact, |xi - xj| = 2 within EPS_GEOM.
    pub xi: Vec<f64>,
    pub xj: Vec<f64>,
    pub vi_pre: Vec<f64>,
    pub vj_pre: Vec<f64>,
    pub vi_post: Vec<f64>,
    pub vj_post: Vec<f64>,
}

impl CollisionEvent {
    pub fn pair(&self) -> (usize, usize) {
        (self.i, self.j)
    }

    /// Unit vector from ball j to ball i at impact.
    pub fn contact_normal(&self) -> Vec<f64> {
        let w = vecd::sub(&self.xi, &self.xj);
        vecd::scale(&w, 1.0 / vecd::norm(&w))
    }
}

/// How a simulation run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// No pair will ever collide again: the log is valid for all later times.
    FreeFlight,
    /// The requested horizon was reached.
    Horizon,
    /// The event budget was exhausted; the log is only valid up to its last
    /// event.
    Budget,
}

/// First line of the JSONL serialization: run metadata plus the initial
/// state inline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub format_version: u32,
    pub n: usize,
    pub d: usize,
    pub seed: u64,
    pub scenario: String,
    /// Start time of the log; the initial state refers to this instant.
    pub t0: f64,
    pub horizon: Option<f64>,
    pub positions: Vec<Vec<f64>>,
    pub velocities: Vec<Vec<f64>>,
}

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Trailer {
    terminated: Termination,
    event_count: usize,
}

/// A complete, replayable trajectory: initial state plus the time-ordered
/// collision events. States between events are reconstructed exactly by
/// linear interpolation.
///
/// Construction always goes through [`EventLog::assemble`], which replays
/// the initial state through the event list, verifies each recorded
/// pre-state, and caches the post-event snapshots used by `state_at`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    pub header: LogHeader,
    events: Vec<CollisionEvent>,
    pub terminated: Termination,
    /// True when it is certified that no collision occurs before the
    /// initial time (established by backward extension; not serialized).
    backward_free: bool,
    /// State just after event k, built by replay.
    snapshots: Vec<SystemState>,
}

impl EventLog {
    /// Builds a log from parts, replaying the initial state through the
    /// events. Fails if event times are not strictly increasing with gaps
    /// above EPS_T, or if a recorded pre-state disagrees with the replay.
    pub fn assemble(
        header: LogHeader,
        events: Vec<CollisionEvent>,
        terminated: Termination,
        backward_free: bool,
    ) -> Result<Self> {
        let initial = SystemState::new(
            header.d,
            header.t0,
            header.positions.clone(),
            header.velocities.clone(),
        )?;
        if header.n != initial.n() {
            return Err(Error::InvalidLog(format!(
                "header says n={} but {} balls present",
                header.n,
                initial.n()
            )));
        }

        let mut snapshots = Vec::with_capacity(events.len());
        let mut cur = initial;
        let mut prev_t = header.t0;
        for (k, e) in events.iter().enumerate() {
            if e.i >= e.j || e.j >= header.n {
                return Err(Error::InvalidLog(format!(
                    "event {k}: bad pair ({}, {})",
                    e.i, e.j
                )));
            }
            if e.t < prev_t || (k > 0 && e.t - prev_t <= EPS_T) {
                return Err(Error::InvalidLog(format!(
                    "event {k}: time {} does not increase past {} by more than {}",
                    e.t, prev_t, EPS_T
                )));
            }
            cur.advance(e.t - cur.t);
            let gap = vecd::dist(&cur.positions[e.i], &cur.positions[e.j]);
            if (gap - CONTACT).abs() > EPS_GEOM {
                return Err(Error::InvalidLog(format!(
                    "event {k}: replayed centers are {gap} apart, not {CONTACT}"
                )));
            }
            for (recorded, replayed, what) in [
                (&e.xi, &cur.positions[e.i], "xi"),
                (&e.xj, &cur.positions[e.j], "xj"),
                (&e.vi_pre, &cur.velocities[e.i], "vi_pre"),
                (&e.vj_pre, &cur.velocities[e.j], "vj_pre"),
            ] {
                if !close(recorded, replayed) {
                    return Err(Error::InvalidLog(format!(
                        "event {k}: recorded {what} {recorded:?} disagrees with replay {replayed:?}"
                    )));
                }
            }
            cur.velocities[e.i] = e.vi_post.clone();
            cur.velocities[e.j] = e.vj_post.clone();
            snapshots.push(cur.clone());
            prev_t = e.t;
        }

        Ok(Self { header, events, terminated, backward_free, snapshots })
    }

    pub fn events(&self) -> &[CollisionEvent] {
        &self.events
    }

    pub fn event_count(&self) -> usize {
        self.events.len()
    }

    pub fn initial_state(&self) -> SystemState {
        SystemState {
            dim: self.header.d,
            t: self.header.t0,
            positions: self.header.positions.clone(),
            velocities: self.header.velocities.clone(),
        }
    }

    pub fn first_event_time(&self) -> Option<f64> {
        self.events.first().map(|e| e.t)
    }

    pub fn last_event_time(&self) -> Option<f64> {
        self.events.last().map(|e| e.t)
    }

    pub fn is_backward_free(&self) -> bool {
        self.backward_free
    }

    pub(crate) fn set_backward_free(&mut self, flag: bool) {
        self.backward_free = flag;
    }

    /// Time span on which `state_at` is defined. Free-flight tails extend
    /// the span to infinity on their side.
    pub fn covered_span(&self) -> (f64, f64) {
        let lo = if self.backward_free { f64::NEG_INFINITY } else { self.header.t0 };
        let hi = match self.terminated {
            Termination::FreeFlight => f64::INFINITY,
            Termination::Horizon => self
                .header
                .horizon
                .unwrap_or_else(|| self.last_event_time().unwrap_or(self.header.t0)),
            Termination::Budget => self.last_event_time().unwrap_or(self.header.t0),
        };
        (lo, hi)
    }

    /// Exact piecewise-linear state at time t, with velocities following the
    /// right-continuous v(t+) convention at event times.
    pub fn state_at(&self, t: f64) -> Result<SystemState> {
        let (lo, hi) = self.covered_span();
        if t < lo || t > hi {
            return Err(Error::OutOfSpan { t, lo, hi });
        }
        // Last event with time <= t.
        let k = self.events.partition_point(|e| e.t <= t);
        let base = if k == 0 { self.initial_state() } else { self.snapshots[k - 1].clone() };
        Ok(base.advanced(t - base.t))
    }

    /// Like `state_at` but with the left-continuous v(t-) convention: the
    /// effect of an event exactly at t is not yet applied.
    pub fn state_before(&self, t: f64) -> Result<SystemState> {
        let (lo, hi) = self.covered_span();
        if t < lo || t > hi {
            return Err(Error::OutOfSpan { t, lo, hi });
        }
        let k = self.events.partition_point(|e| e.t < t);
        let base = if k == 0 { self.initial_state() } else { self.snapshots[k - 1].clone() };
        Ok(base.advanced(t - base.t))
    }

    /// Minimum pairwise center distance over all events and `sample_count`
    /// uniformly sampled times across the covered (finite) span. Free-flight
    /// tails cannot dip below contact distance (a dip would imply a collision
    /// root), so sampling the event span suffices.
    pub fn min_gap(&self, sample_count: usize) -> f64 {
        let mut m = f64::INFINITY;
        for s in &self.snapshots {
            m = m.min(s.min_pair_distance());
        }
        let lo = self.header.t0;
        let (_, span_hi) = self.covered_span();
        let hi = if span_hi.is_finite() {
            span_hi
        } else {
            self.last_event_time().unwrap_or(lo)
        };
        if hi <= lo || sample_count == 0 {
            return m.min(self.initial_state().min_pair_distance());
        }
        let step = (hi - lo) / sample_count as f64;
        for k in 0..=sample_count {
            let t = lo + step * k as f64;
            if let Ok(s) = self.state_at(t) {
                m = m.min(s.min_pair_distance());
            }
        }
        m
    }

    /// Ordered list of colliding index pairs; invariant under frame changes.
    pub fn pair_sequence(&self) -> Vec<(usize, usize)> {
        self.events.iter().map(|e| (e.i, e.j)).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_jsonl(&mut w)
    }

    pub fn write_jsonl<W: Write>(&self, w: &mut W) -> Result<()> {
        serde_json::to_writer(&mut *w, &self.header)?;
        w.write_all(b"\n")?;
        for e in &self.events {
            serde_json::to_writer(&mut *w, e)?;
            w.write_all(b"\n")?;
        }
        let trailer = Trailer { terminated: self.terminated, event_count: self.events.len() };
        serde_json::to_writer(&mut *w, &trailer)?;
        w.write_all(b"\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        Self::read_jsonl(&mut r)
    }

    pub fn read_jsonl<R: BufRead>(r: &mut R) -> Result<Self> {
        let mut lines = r.lines();
        let header_line = lines
            .next()
            .ok_or_else(|| Error::InvalidLog("empty file".into()))??;
        let header: LogHeader = serde_json::from_str(&header_line)?;
        if header.format_version != FORMAT_VERSION {
            return Err(Error::InvalidLog(format!(
                "unsupported format_version {}",
                header.format_version
            )));
        }
        let mut events = Vec::new();
        let mut trailer: Option<Trailer> = None;
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            if trailer.is_some() {
                return Err(Error::InvalidLog("data after trailer".into()));
            }
            if let Ok(t) = serde_json::from_str::<Trailer>(&line) {
                trailer = Some(t);
            } else {
                events.push(serde_json::from_str::<CollisionEvent>(&line)?);
            }
        }
        let trailer = trailer.ok_or_else(|| Error::InvalidLog("missing trailer".into()))?;
        if trailer.event_count != events.len() {
            return Err(Error::InvalidLog(format!(
                "trailer says {} events, found {}",
                trailer.event_count,
                events.len()
            )));
        }
        Self::assemble(header, events, trailer.terminated, false)
    }
}

fn close(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| {
        let scale = x.abs().max(y.abs()).max(1.0);
        (x - y).abs() <= EPS_NUM * scale
    })
}
