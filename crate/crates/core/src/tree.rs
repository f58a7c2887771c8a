//! The branching decomposition of a recorded trajectory: every node is a
//! ball subfamily with a time interval on which it is isolated, split times
//! beyond which it separates into non-interacting parts, and the derived
//! interval quantities. Collisions are counted inside the leaves.

use std::fmt;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::ghost::{ghost_extend, GhostLog};
use crate::log::EventLog;
use crate::normalize::{find_t0, pieces};
use crate::state::SystemState;
use crate::tol::{CONTACT, EPS_NUM};
use crate::vecd;

/// Event budget for each ghost-tail simulation. Tails of desk-scale
/// subfamilies settle after a handful of events; hitting this cap signals a
/// pathological scenario.
pub const GHOST_BUDGET: usize = 100_000;

/// An interval endpoint; the root interval is the whole time axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeBound {
    NegInf,
    Finite(f64),
    PosInf,
}

impl TimeBound {
    pub fn finite(self) -> Option<f64> {
        match self {
            TimeBound::Finite(x) => Some(x),
            _ => None,
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            TimeBound::NegInf => f64::NEG_INFINITY,
            TimeBound::Finite(x) => x,
            TimeBound::PosInf => f64::INFINITY,
        }
    }

    /// self < t (strictly), for open-interval membership.
    pub fn below(self, t: f64) -> bool {
        self.as_f64() < t
    }

    /// self > t (strictly).
    pub fn above(self, t: f64) -> bool {
        self.as_f64() > t
    }
}

impl Serialize for TimeBound {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            TimeBound::NegInf => s.serialize_str("-inf"),
            TimeBound::PosInf => s.serialize_str("inf"),
            TimeBound::Finite(x) => s.serialize_f64(*x),
        }
    }
}

impl<'de> Deserialize<'de> for TimeBound {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = TimeBound;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number, \"-inf\", or \"inf\"")
            }
            fn visit_f64<E: de::Error>(self, x: f64) -> std::result::Result<TimeBound, E> {
                Ok(TimeBound::Finite(x))
            }
            fn visit_i64<E: de::Error>(self, x: i64) -> std::result::Result<TimeBound, E> {
                Ok(TimeBound::Finite(x as f64))
            }
            fn visit_u64<E: de::Error>(self, x: u64) -> std::result::Result<TimeBound, E> {
                Ok(TimeBound::Finite(x as f64))
            }
            fn visit_str<E: de::Error>(self, s: &str) -> std::result::Result<TimeBound, E> {
                match s {
                    "-inf" => Ok(TimeBound::NegInf),
                    "inf" => Ok(TimeBound::PosInf),
                    _ => Err(E::custom(format!("bad time bound {s:?}"))),
                }
            }
        }
        d.deserialize_any(V)
    }
}

/// Where a node comes from in the branching construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Root,
    /// One side of the bipartition valid before the split, on (T1, U1].
    SplitBefore,
    /// One side of the bipartition valid after the split, on [U2, T2).
    SplitAfter,
    /// The whole family restricted to [U1, U2] (compact case); always a leaf.
    Inner,
    /// A proximity-graph component on one chain slice [t_k, t_{k+1}]
    /// (spread case); no cross-component collision may occur on the slice.
    Chain,
}

/// Node of the branching tree: the subfamily, its interval, and every
/// derived quantity (split times, inner interval, spread profile, frame
/// speed).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FamilyNode {
    pub id: usize,
    pub kind: NodeKind,
    /// Original ball indices, sorted.
    pub family: Vec<usize>,
    pub t1: TimeBound,
    pub t2: TimeBound,
    /// Infimum over [t1, t2] of the maximum pairwise center distance.
    pub r: f64,
    /// Earliest time attaining `r`.
    pub t_star: f64,
    /// Configuration norm |x_F(t_star)| in the subfamily frame.
    pub x_norm_t_star: f64,
    /// Pivot time of the subfamily's modified evolution.
    pub t0: f64,
    pub x_norm_t0: f64,
    /// Outermost times beyond which the subfamily separates (backward /
    /// forward).
    pub s1: f64,
    pub s2: f64,
    /// Inner interval: u1 = max(s1, t1), u2 = min(s2, t2), collapsed to a
    /// point when empty.
    pub u1: f64,
    pub u2: f64,
    /// Subfamily speed |v_F| on the interval.
    pub v_norm: f64,
    pub is_leaf: bool,
    pub offspring: Vec<FamilyNode>,
}

impl FamilyNode {
    pub fn family_size(&self) -> usize {
        self.family.len()
    }

    /// Preorder traversal.
    pub fn iter(&self) -> Vec<&FamilyNode> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(n) = stack.pop() {
            out.push(n);
            for c in n.offspring.iter().rev() {
                stack.push(c);
            }
        }
        out
    }

    pub fn node_count(&self) -> usize {
        1 + self.offspring.iter().map(|c| c.node_count()).sum::<usize>()
    }

    pub fn leaf_count(&self) -> usize {
        if self.is_leaf {
            1
        } else {
            self.offspring.iter().map(|c| c.leaf_count()).sum()
        }
    }

    pub fn depth(&self) -> usize {
        1 + self.offspring.iter().map(|c| c.depth()).max().unwrap_or(0)
    }

    pub fn max_offspring(&self) -> usize {
        self.iter().iter().map(|n| n.offspring.len()).max().unwrap_or(0)
    }
}

struct UnionFind {
    parent: Vec<usize>,
    components: usize,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect(), components: n }
    }

    fn find(&mut self, x: usize) -> usize {
        if self.parent[x] != x {
            let r = self.find(self.parent[x]);
            self.parent[x] = r;
        }
        self.parent[x]
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[rb] = ra;
            self.components -= 1;
        }
    }
}

/// Split structure of a subfamily's modified evolution.
#[derive(Debug, Clone)]
pub struct SplitTimes {
    pub t0: f64,
    pub x_norm_t0: f64,
    pub s1: f64,
    pub s2: f64,
    /// Bipartition with no cross collision strictly before s1 (original
    /// indices, each side sorted).
    pub before: (Vec<usize>, Vec<usize>),
    /// Bipartition with no cross collision strictly after s2.
    pub after: (Vec<usize>, Vec<usize>),
}

/// Latest time below which the collision graph (edges = pairs colliding
/// strictly earlier) stays disconnected: the time of the edge that first
/// connects everything, or +inf if the full graph never connects.
fn first_connect_time(nf: usize, edges: &[(f64, usize, usize)]) -> Option<f64> {
    let mut uf = UnionFind::new(nf);
    for &(t, i, j) in edges {
        uf.union(i, j);
        if uf.components == 1 {
            return Some(t);
        }
    }
    None
}

/// Connected components of the graph over 0..nf with the given edges; the
/// component containing ball 0 versus the rest.
fn component_split(nf: usize, edges: impl Iterator<Item = (usize, usize)>) -> (Vec<usize>, Vec<usize>) {
    let mut uf = UnionFind::new(nf);
    for (i, j) in edges {
        uf.union(i, j);
    }
    let root0 = uf.find(0);
    let mut low = Vec::new();
    let mut rest = Vec::new();
    for k in 0..nf {
        if uf.find(k) == root0 {
            low.push(k);
        } else {
            rest.push(k);
        }
    }
    (low, rest)
}

/// Split times of the ghost evolution: s2 is the smallest time >= t0 such
/// that the pairs colliding strictly after it no longer connect the family;
/// s1 is the mirror image backward. The scan runs over the finite event
/// list, so finite split times land exactly on event times. Also returns
/// the chosen bipartitions (component of the lowest index versus the rest).
pub fn split_times(g: &GhostLog) -> Result<SplitTimes> {
    let nf = g.family_size();
    if nf < 2 {
        return Err(Error::Degenerate("split of a single-ball family".into()));
    }
    let (t0, x_norm_t0) = find_t0(&g.log)?;

    let asc: Vec<(f64, usize, usize)> =
        g.log.events().iter().map(|e| (e.t, e.i, e.j)).collect();
    let desc: Vec<(f64, usize, usize)> = asc.iter().rev().copied().collect();

    // d1 = sup{s : graph of edges before s is disconnected}; the graph
    // gains the connecting edge at d1, so it is the matching event time.
    let d1 = first_connect_time(nf, &asc);
    let d2 = first_connect_time(nf, &desc);
    let s1 = d1.map_or(t0, |d| d.min(t0));
    let s2 = d2.map_or(t0, |d| d.max(t0));

    let before = component_split(
        nf,
        asc.iter().filter(|&&(t, _, _)| t < s1).map(|&(_, i, j)| (i, j)),
    );
    let after = component_split(
        nf,
        asc.iter().filter(|&&(t, _, _)| t > s2).map(|&(_, i, j)| (i, j)),
    );
    if before.1.is_empty() || after.1.is_empty() {
        return Err(Error::Degenerate(
            "split graph unexpectedly connected at its own split time".into(),
        ));
    }

    let to_orig = |side: Vec<usize>| side.into_iter().map(|k| g.family[k]).collect::<Vec<_>>();
    Ok(SplitTimes {
        t0,
        x_norm_t0,
        s1,
        s2,
        before: (to_orig(before.0), to_orig(before.1)),
        after: (to_orig(after.0), to_orig(after.1)),
    })
}

/// Maximum pairwise center distance squared after advancing the anchored
/// piece by tau.
fn max_pair_dist_sq(anchor: &SystemState, tau: f64) -> f64 {
    let n = anchor.n();
    let mut m: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let mut d2 = 0.0;
            for c in 0..anchor.dim {
                let w = anchor.positions[i][c] - anchor.positions[j][c]
                    + tau * (anchor.velocities[i][c] - anchor.velocities[j][c]);
                d2 += w * w;
            }
            m = m.max(d2);
        }
    }
    m
}

/// Infimum over [t1, t2] of the maximum pairwise center distance of the
/// subfamily, with the earliest attaining time.
///
/// Per inter-event piece each pairwise distance is convex in t, so their
/// maximum is convex and ternary search finds the piece minimum. An
/// infinite bound (root) is reduced to a finite window: beyond the last
/// per-pair distance vertex on a free-flight tail every distance grows, so
/// the infimum is attained inside the window.
pub fn r_profile(g: &GhostLog, t1: TimeBound, t2: TimeBound) -> Result<(f64, f64)> {
    let log = &g.log;
    if g.family_size() == 1 {
        let t_ref = t1.finite().or(t2.finite()).unwrap_or(log.header.t0);
        return Ok((0.0, t_ref));
    }
    let all = pieces(log);
    let lo = match t1 {
        TimeBound::Finite(a) => a,
        TimeBound::NegInf => tail_vertex_window(&all[0].anchor, all[0].anchor.t, true),
        TimeBound::PosInf => {
            return Err(Error::InvalidParam("t1 = +inf".into()));
        }
    };
    let hi = match t2 {
        TimeBound::Finite(b) => b,
        TimeBound::PosInf => {
            let last = &all[all.len() - 1].anchor;
            tail_vertex_window(last, last.t, false)
        }
        TimeBound::NegInf => {
            return Err(Error::InvalidParam("t2 = -inf".into()));
        }
    };
    if lo > hi {
        return Err(Error::InvalidParam(format!("empty interval [{lo}, {hi}]")));
    }

    let mut bounds = vec![lo];
    for e in log.events() {
        if e.t > lo && e.t < hi {
            bounds.push(e.t);
        }
    }
    bounds.push(hi);

    let mut best: Option<(f64, f64)> = None; // (max_dist_sq, t)
    for w in bounds.windows(2) {
        let (a, b) = (w[0], w[1]);
        let anchor = log.state_at(a)?;
        let len = b - a;
        let f = |tau: f64| max_pair_dist_sq(&anchor, tau);
        let (tau, val) = if len <= 0.0 {
            (0.0, f(0.0))
        } else {
            let (mut x, mut y) = (0.0f64, len);
            while y - x > 1e-14 * len.max(1.0) {
                let m1 = x + (y - x) / 3.0;
                let m2 = y - (y - x) / 3.0;
                if f(m1) <= f(m2) {
                    y = m2;
                } else {
                    x = m1;
                }
            }
            let tm = 0.5 * (x + y);
            let fm = f(tm);
            let fa = f(0.0);
            // prefer the piece start on flat bottoms (earliest minimizer)
            if fa <= fm + 1e-12 * fm.max(1.0) {
                (0.0, fa)
            } else {
                (tm, fm)
            }
        };
        if best.map_or(true, |(v, _)| val < v) {
            best = Some((val, a + tau));
        }
    }
    let (val, t_star) = best.expect("interval has at least one piece");
    Ok((val.max(0.0).sqrt(), t_star))
}

/// Start (backward) or end (forward) of the finite search window replacing
/// an infinite tail: the outermost per-pair distance vertex on the tail
/// piece.
fn tail_vertex_window(anchor: &SystemState, fallback: f64, backward: bool) -> f64 {
    let n = anchor.n();
    let mut out = fallback;
    for i in 0..n {
        for j in (i + 1)..n {
            let w = vecd::sub(&anchor.positions[i], &anchor.positions[j]);
            let u = vecd::sub(&anchor.velocities[i], &anchor.velocities[j]);
            let usq = vecd::norm_sq(&u);
            if usq <= 1e-30 {
                continue;
            }
            let tv = anchor.t - vecd::dot(&w, &u) / usq;
            out = if backward { out.min(tv) } else { out.max(tv) };
        }
    }
    out
}

/// Inner interval from split times clamped by the node interval:
/// u1 = max(s1, t1), u2 = min(s2, t2); an empty result collapses to the
/// single point max(s1, t1) clamped into [t1, t2].
pub fn u_interval(s1: f64, s2: f64, t1: TimeBound, t2: TimeBound) -> (f64, f64) {
    let u1 = match t1 {
        TimeBound::Finite(a) => s1.max(a),
        _ => s1,
    };
    let u2 = match t2 {
        TimeBound::Finite(b) => s2.min(b),
        _ => s2,
    };
    if u1 > u2 {
        let c = u1.min(t2.as_f64()).max(t1.as_f64());
        (c, c)
    } else {
        (u1, u2)
    }
}

/// Partition of the subfamily by proximity at time t: balls are adjacent
/// when their surface gap |x_i - x_j| - 2 is at most beta; returns the
/// component of the lowest-index ball versus the rest (original indices).
///
/// When the node's spread exceeds 4 n_F the chain bound guarantees the
/// graph is disconnected; a connected graph here means a computation bug.
pub fn beta_partition(g: &GhostLog, t: f64, beta: f64) -> Result<(Vec<usize>, Vec<usize>)> {
    let state = g.log.state_at(t)?;
    let (low, rest) = proximity_split(&state, beta);
    if rest.is_empty() {
        return Err(Error::ConnectedProximityGraph { t, beta });
    }
    let to_orig = |side: Vec<usize>| side.into_iter().map(|k| g.family[k]).collect::<Vec<_>>();
    Ok((to_orig(low), to_orig(rest)))
}

fn proximity_split(state: &SystemState, beta: f64) -> (Vec<usize>, Vec<usize>) {
    let n = state.n();
    component_split(
        n,
        (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).filter(|&(i, j)| {
            vecd::dist(&state.positions[i], &state.positions[j]) - CONTACT <= beta
        }),
    )
}

/// Chain schedule over [u1, u2]: k_star = ceil((u2-u1) |v_F| / beta) slices
/// whose interior boundaries advance by beta/|v_F|, the safety time during
/// which two groups separated by a gap beta cannot meet. Returns k_star and
/// the k_star+1 slice boundaries.
pub fn chain_schedule(u1: f64, u2: f64, v_norm: f64, beta: f64) -> Result<(usize, Vec<f64>)> {
    let span = u2 - u1;
    if span < 0.0 {
        return Err(Error::InvalidParam(format!("u2 {u2} < u1 {u1}")));
    }
    if span == 0.0 {
        return Ok((0, vec![u1]));
    }
    if v_norm <= 0.0 {
        // a family at relative rest never re-partitions
        return Ok((1, vec![u1, u2]));
    }
    if beta <= 0.0 {
        return Err(Error::InvalidParam(format!("beta {beta} <= 0")));
    }
    let q = span * v_norm / beta;
    let k_star = ((q - 1e-12).ceil().max(1.0)) as usize;
    let mut times = Vec::with_capacity(k_star + 1);
    times.push(u1);
    for k in 2..=k_star {
        times.push(u1 + (k - 1) as f64 * beta / v_norm);
    }
    times.push(u2);
    Ok((k_star, times))
}

/// Builds the branching tree over a normalized log with certified
/// free-flight tails. The root is the full family on the whole time axis;
/// at each non-leaf the offspring are the two split parts on each side of
/// the inner interval, plus either the whole family on the inner interval
/// (a leaf, when the spread r is at most 4 n_F) or the chain of proximity
/// bipartitions across the inner interval.
pub fn build_tree(log: &EventLog) -> Result<FamilyNode> {
    let n = log.header.n;
    let momentum = vecd::norm(&log.initial_state().momentum());
    if momentum > EPS_NUM * (n as f64) {
        return Err(Error::InvalidParam(format!(
            "log is not momentum-normalized (|p| = {momentum})"
        )));
    }
    let family: Vec<usize> = (0..n).collect();
    let mut counter = 0;
    build_node(
        log,
        family,
        TimeBound::NegInf,
        TimeBound::PosInf,
        NodeKind::Root,
        1,
        n + 1,
        &mut counter,
    )
}

#[allow(clippy::too_many_arguments)]
fn build_node(
    log: &EventLog,
    family: Vec<usize>,
    t1: TimeBound,
    t2: TimeBound,
    kind: NodeKind,
    depth: usize,
    limit: usize,
    counter: &mut usize,
) -> Result<FamilyNode> {
    if depth > limit {
        return Err(Error::DepthExceeded { depth, limit });
    }
    let id = *counter;
    *counter += 1;

    if family.len() == 1 {
        // A lone ball rests at the origin of its own frame; every time
        // quantity collapses to a reference point inside the interval.
        let t_ref = t1.finite().or(t2.finite()).unwrap_or(0.0);
        return Ok(FamilyNode {
            id,
            kind,
            family,
            t1,
            t2,
            r: 0.0,
            t_star: t_ref,
            x_norm_t_star: 0.0,
            t0: t_ref,
            x_norm_t0: 0.0,
            s1: t_ref,
            s2: t_ref,
            u1: t_ref,
            u2: t_ref,
            v_norm: 0.0,
            is_leaf: true,
            offspring: Vec::new(),
        });
    }

    let ghost = ghost_extend(log, &family, t1, t2, GHOST_BUDGET)?;
    let split = split_times(&ghost)?;
    let (u1, u2) = u_interval(split.s1, split.s2, t1, t2);
    let (r, t_star) = r_profile(&ghost, t1, t2)?;
    let x_norm_t_star = ghost.log.state_at(t_star)?.config_norm();

    let nf = family.len();
    let interval_filled = t1 == TimeBound::Finite(u1) && t2 == TimeBound::Finite(u2);
    let is_leaf = nf <= 2 || interval_filled;

    let mut node = FamilyNode {
        id,
        kind,
        family,
        t1,
        t2,
        r,
        t_star,
        x_norm_t_star,
        t0: split.t0,
        x_norm_t0: split.x_norm_t0,
        s1: split.s1,
        s2: split.s2,
        u1,
        u2,
        v_norm: ghost.v_norm,
        is_leaf,
        offspring: Vec::new(),
    };
    if is_leaf {
        return Ok(node);
    }

    let mut kids = Vec::new();
    for fam in [split.before.0.clone(), split.before.1.clone()] {
        kids.push(build_node(
            log,
            fam,
            t1,
            TimeBound::Finite(u1),
            NodeKind::SplitBefore,
            depth + 1,
            limit,
            counter,
        )?);
    }

    if r <= 4.0 * nf as f64 {
        kids.push(inner_leaf(&ghost, &split, u1, u2, counter)?);
    } else {
        let beta = (r - 2.0 * nf as f64) / (nf as f64 - 1.0);
        let (k_star, times) = chain_schedule(u1, u2, ghost.v_norm, beta)?;
        for k in 0..k_star {
            let (h1, h2) = beta_partition(&ghost, times[k], beta)?;
            for fam in [h1, h2] {
                kids.push(build_node(
                    log,
                    fam,
                    TimeBound::Finite(times[k]),
                    TimeBound::Finite(times[k + 1]),
                    NodeKind::Chain,
                    depth + 1,
                    limit,
                    counter,
                )?);
            }
        }
    }

    for fam in [split.after.0.clone(), split.after.1.clone()] {
        kids.push(build_node(
            log,
            fam,
            TimeBound::Finite(u2),
            t2,
            NodeKind::SplitAfter,
            depth + 1,
            limit,
            counter,
        )?);
    }

    node.offspring = kids;
    Ok(node)
}

/// The whole family restricted to its inner interval [u1, u2]. The modified
/// evolution is the parent's, so the split data carry over and the node's
/// inner interval fills its whole interval: a leaf by construction.
fn inner_leaf(
    ghost: &GhostLog,
    split: &SplitTimes,
    u1: f64,
    u2: f64,
    counter: &mut usize,
) -> Result<FamilyNode> {
    let id = *counter;
    *counter += 1;
    let (r, t_star) = r_profile(ghost, TimeBound::Finite(u1), TimeBound::Finite(u2))?;
    let x_norm_t_star = ghost.log.state_at(t_star)?.config_norm();
    let (uu1, uu2) = u_interval(split.s1, split.s2, TimeBound::Finite(u1), TimeBound::Finite(u2));
    debug_assert_eq!((uu1, uu2), (u1, u2));
    Ok(FamilyNode {
        id,
        kind: NodeKind::Inner,
        family: ghost.family.clone(),
        t1: TimeBound::Finite(u1),
        t2: TimeBound::Finite(u2),
        r,
        t_star,
        x_norm_t_star,
        t0: split.t0,
        x_norm_t0: split.x_norm_t0,
        s1: split.s1,
        s2: split.s2,
        u1: uu1,
        u2: uu2,
        v_norm: ghost.v_norm,
        is_leaf: true,
        offspring: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{extend_backward, simulate};

    #[test]
    fn connect_time_matches_spec_example() {
        // edges (1,2)@1, (2,3)@2, (1,2)@3 over three balls (0-indexed here)
        let edges = [(1.0, 0, 1), (2.0, 1, 2), (3.0, 0, 1)];
        let d1 = first_connect_time(3, &edges);
        assert_eq!(d1, Some(2.0));
        let desc: Vec<_> = edges.iter().rev().copied().collect();
        let d2 = first_connect_time(3, &desc);
        assert_eq!(d2, Some(2.0));
        // with t0 between the connect times, s1 = s2 = 2 and the forward
        // partition isolates ball 2: only (0,1) collides strictly after 2
        let (low, rest) = component_split(3, edges.iter().filter(|e| e.0 > 2.0).map(|e| (e.1, e.2)));
        assert_eq!(low, vec![0, 1]);
        assert_eq!(rest, vec![2]);
    }

    #[test]
    fn connect_time_none_when_disconnected() {
        let edges = [(1.0, 0, 1), (5.0, 0, 1)];
        assert_eq!(first_connect_time(3, &edges), None);
    }

    /// Brute-force oracle over all bipartitions: the latest disconnected
    /// prefix time is the maximum over bipartitions of the first cross-edge
    /// time (no cross edge at all means forever, i.e. None); mirrored for
    /// suffixes.
    fn split_oracle(nf: usize, edges: &[(f64, usize, usize)]) -> (Option<f64>, Option<f64>) {
        let mut d1 = f64::NEG_INFINITY;
        let mut d1_unbounded = false;
        let mut d2 = f64::INFINITY;
        let mut d2_unbounded = false;
        for mask in 1..(1u32 << (nf - 1)) {
            let side = |k: usize| k > 0 && (mask >> (k - 1)) & 1 == 1;
            let cross: Vec<f64> = edges
                .iter()
                .filter(|&&(_, i, j)| side(i) != side(j))
                .map(|&(t, _, _)| t)
                .collect();
            match cross.first() {
                None => d1_unbounded = true,
                Some(&t) => d1 = d1.max(t),
            }
            match cross.last() {
                None => d2_unbounded = true,
                Some(&t) => d2 = d2.min(t),
            }
        }
        (
            if d1_unbounded { None } else { Some(d1) },
            if d2_unbounded { None } else { Some(d2) },
        )
    }

    #[test]
    fn connect_times_match_bipartition_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let nf = rng.random_range(2..6);
            let m = rng.random_range(0..8);
            let mut edges: Vec<(f64, usize, usize)> = (0..m)
                .map(|k| {
                    let i = rng.random_range(0..nf);
                    let mut j = rng.random_range(0..nf);
                    while j == i {
                        j = rng.random_range(0..nf);
                    }
                    (k as f64, i.min(j), i.max(j))
                })
                .collect();
            edges.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            let d1 = first_connect_time(nf, &edges);
            let desc: Vec<_> = edges.iter().rev().copied().collect();
            let d2 = first_connect_time(nf, &desc);
            let (o1, o2) = split_oracle(nf, &edges);
            assert_eq!(d1, o1, "nf={nf} edges={edges:?}");
            assert_eq!(d2, o2, "nf={nf} edges={edges:?}");
        }
    }

    #[test]
    fn u_interval_cases() {
        // s-interval inside the node interval
        assert_eq!(
            u_interval(1.0, 2.0, TimeBound::Finite(0.0), TimeBound::Finite(3.0)),
            (1.0, 2.0)
        );
        // s-interval containing the node interval
        assert_eq!(
            u_interval(-1.0, 5.0, TimeBound::Finite(0.0), TimeBound::Finite(3.0)),
            (0.0, 3.0)
        );
        // s-interval entirely before the node interval collapses
        assert_eq!(
            u_interval(-2.0, -1.0, TimeBound::Finite(0.0), TimeBound::Finite(3.0)),
            (0.0, 0.0)
        );
        // infinite node interval passes the split times through
        assert_eq!(u_interval(1.0, 2.0, TimeBound::NegInf, TimeBound::PosInf), (1.0, 2.0));
    }

    #[test]
    fn chain_schedule_cases() {
        let (k, ts) = chain_schedule(0.0, 10.0, 1.0, 7.0).unwrap();
        assert_eq!(k, 2);
        assert_eq!(ts, vec![0.0, 7.0, 10.0]);

        let (k, ts) = chain_schedule(5.0, 5.0, 1.0, 7.0).unwrap();
        assert_eq!(k, 0);
        assert_eq!(ts, vec![5.0]);

        // exact division: the last point clamps to u2
        let (k, ts) = chain_schedule(0.0, 7.0, 1.0, 7.0).unwrap();
        assert_eq!(k, 1);
        assert_eq!(ts, vec![0.0, 7.0]);

        // zero speed degenerates to a single slice
        let (k, ts) = chain_schedule(0.0, 3.0, 0.0, 7.0).unwrap();
        assert_eq!(k, 1);
        assert_eq!(ts, vec![0.0, 3.0]);
    }

    #[test]
    fn proximity_split_two_clusters() {
        // two triples 10 apart; beta = 7 per the spread formula
        // (r = 20, n_F = 3 gives beta = (20 - 6) / 2 = 7)
        let s = SystemState {
            dim: 2,
            t: 0.0,
            positions: vec![
                vec![0.0, 0.0],
                vec![3.0, 0.0],
                vec![20.0, 0.0],
                vec![23.0, 0.0],
            ],
            velocities: vec![vec![0.0, 0.0]; 4],
        };
        let (low, rest) = proximity_split(&s, 7.0);
        assert_eq!(low, vec![0, 1]);
        assert_eq!(rest, vec![2, 3]);
    }

    #[test]
    fn proximity_split_all_far_apart() {
        let s = SystemState {
            dim: 2,
            t: 0.0,
            positions: vec![vec![0.0, 0.0], vec![20.0, 0.0], vec![40.0, 0.0]],
            velocities: vec![vec![0.0, 0.0]; 3],
        };
        let (low, rest) = proximity_split(&s, 1.0);
        assert_eq!(low, vec![0]);
        assert_eq!(rest, vec![1, 2]);
    }

    #[test]
    fn proximity_split_matches_pairwise_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let n = rng.random_range(2..7);
            let mut positions = Vec::new();
            'place: while positions.len() < n {
                let cand = vec![rng.random_range(-30.0..30.0), rng.random_range(-30.0..30.0)];
                for p in &positions {
                    if vecd::dist(p, &cand) < 2.001 {
                        continue 'place;
                    }
                }
                positions.push(cand);
            }
            let s = SystemState {
                dim: 2,
                t: 0.0,
                positions,
                velocities: vec![vec![0.0, 0.0]; n],
            };
            let beta = rng.random_range(0.5..10.0);
            let (low, rest) = proximity_split(&s, beta);
            // oracle: transitive closure by repeated sweeps
            let mut comp: Vec<usize> = (0..n).collect();
            loop {
                let mut changed = false;
                for i in 0..n {
                    for j in 0..n {
                        if i != j
                            && vecd::dist(&s.positions[i], &s.positions[j]) - CONTACT <= beta
                            && comp[i].min(comp[j]) < comp[i].max(comp[j])
                        {
                            let m = comp[i].min(comp[j]);
                            comp[i] = m;
                            comp[j] = m;
                            changed = true;
                        }
                    }
                }
                if !changed {
                    break;
                }
            }
            let oracle_low: Vec<usize> = (0..n).filter(|&k| comp[k] == comp[0]).collect();
            assert_eq!(low, oracle_low);
            assert_eq!(low.len() + rest.len(), n);
        }
    }

    fn certified(s: &SystemState) -> EventLog {
        let log = simulate(s, None, 10_000, 0, "test").unwrap();
        extend_backward(&log, 10_000).unwrap()
    }

    #[test]
    fn r_profile_static_triangle() {
        // 3-4-5 triangle at rest: r(F, t) = 5 for every t
        let s = SystemState {
            dim: 2,
            t: 0.0,
            positions: vec![vec![0.0, 0.0], vec![4.0, 0.0], vec![0.0, 3.0]],
            velocities: vec![vec![0.0, 0.0]; 3],
        };
        let log = certified(&s);
        let g = ghost_extend(&log, &[0, 1, 2], TimeBound::NegInf, TimeBound::PosInf, 100).unwrap();
        let (r, _) = r_profile(&g, TimeBound::NegInf, TimeBound::PosInf).unwrap();
        assert!((r - 5.0).abs() < 1e-9);
    }

    #[test]
    fn r_profile_two_ball_flyby_is_miss_distance() {
        let s = SystemState {
            dim: 2,
            t: 0.0,
            positions: vec![vec![-20.0, 1.5], vec![20.0, -1.5]],
            velocities: vec![vec![1.0, 0.0], vec![-1.0, 0.0]],
        };
        let log = certified(&s);
        let g = ghost_extend(&log, &[0, 1], TimeBound::NegInf, TimeBound::PosInf, 100).unwrap();
        let (r, t_star) = r_profile(&g, TimeBound::NegInf, TimeBound::PosInf).unwrap();
        assert!((r - 3.0).abs() < 1e-9, "miss distance 3, got {r}");
        assert!((t_star - 20.0).abs() < 1e-6);
    }

    #[test]
    fn r_profile_matches_dense_sampling() {
        let s = SystemState {
            dim: 2,
            t: 0.0,
            positions: vec![vec![-8.0, 0.3], vec![8.0, -0.2], vec![0.5, 12.0]],
            velocities: vec![vec![0.9, 0.05], vec![-1.0, 0.0], vec![-0.02, -1.1]],
        };
        let log = certified(&s);
        let fam = [0, 1, 2];
        let g = ghost_extend(&log, &fam, TimeBound::Finite(-5.0), TimeBound::Finite(25.0), 1000)
            .unwrap();
        let (r, t_star) = r_profile(&g, TimeBound::Finite(-5.0), TimeBound::Finite(25.0)).unwrap();
        let mut best = f64::INFINITY;
        for k in 0..=300_000 {
            let t = -5.0 + 30.0 * k as f64 / 300_000.0;
            let v = max_pair_dist_sq(&g.log.state_at(t).unwrap(), 0.0).sqrt();
            best = best.min(v);
        }
        assert!((r - best).abs() < 1e-6, "ternary {r} vs sampled {best}");
        assert!(t_star >= -5.0 && t_star <= 25.0);
    }

    #[test]
    fn build_tree_two_ball_root_is_leaf() {
        let r = 0.5f64.sqrt();
        let s = SystemState {
            dim: 2,
            t: 0.0,
            positions: vec![vec![-3.0, 0.0], vec![3.0, 0.0]],
            velocities: vec![vec![r, 0.0], vec![-r, 0.0]],
        };
        let log = certified(&s);
        let root = build_tree(&log).unwrap();
        assert!(root.is_leaf);
        assert_eq!(root.family, vec![0, 1]);
        assert_eq!(root.node_count(), 1);
        assert_eq!(root.depth(), 1);
        assert!((root.v_norm - 1.0).abs() < 1e-9);
    }

    #[test]
    fn build_tree_spectator_splits_off() {
        // balls 0,1 collide once; ball 2 never collides: the root split
        // isolates it on both sides
        let s = SystemState {
            dim: 2,
            t: 0.0,
            positions: vec![vec![-5.0, 0.0], vec![5.0, 0.0], vec![1.0, 300.0]],
            velocities: vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.1, 2.0]],
        };
        let (log, _) = crate::normalize::normalize(&certified(&s)).unwrap();
        let root = build_tree(&log).unwrap();
        assert!(!root.is_leaf);
        assert_eq!(root.depth(), 2);
        // ball 2 never collides, so the collision graph never connects and
        // both split times collapse to the pivot; the inner interval is a
        // point, leaving only the four split offspring
        assert_eq!(root.s1, root.s2);
        assert_eq!(root.u1, root.u2);
        assert_eq!(root.offspring.len(), 4);
        for k in &root.offspring {
            assert!(k.is_leaf);
        }
        // before the pivot nothing has collided: {0} splits off; after it
        // the colliding pair {0,1} separates from the spectator {2}
        let fams: Vec<Vec<usize>> = root.offspring.iter().map(|k| k.family.clone()).collect();
        assert!(fams.contains(&vec![0]));
        assert!(fams.contains(&vec![1, 2]));
        assert!(fams.contains(&vec![0, 1]));
        assert!(fams.contains(&vec![2]));
    }
}
