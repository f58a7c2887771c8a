use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tol::{CONTACT, EPS_GEOM};
use crate::vecd;

/// Phase point of the system: center positions and velocities of all balls
/// at one time instant. Balls have unit radius and unit mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    /// Space dimension d >= 2.
    pub dim: usize,
    /// Time the snapshot refers to.
    pub t: f64,
    /// Ball centers, one vector of length `dim` per ball.
    pub positions: Vec<Vec<f64>>,
    /// Ball velocities; at event times these follow the right-continuous
    /// v(t+) convention.
    pub velocities: Vec<Vec<f64>>,
}

impl SystemState {
    pub fn new(
        dim: usize,
        t: f64,
        positions: Vec<Vec<f64>>,
        velocities: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let state = Self { dim, t, positions, velocities };
        state.validate()?;
        Ok(state)
    }

    pub fn n(&self) -> usize {
        self.positions.len()
    }

    /// Checks structural invariants: d >= 2, n >= 1, vector lengths, and the
    /// no-overlap condition |x_i - x_j| >= 2 - EPS_GEOM.
    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::InvalidParam(format!("dimension {} < 2", self.dim)));
        }
        if self.positions.is_empty() {
            return Err(Error::InvalidParam("no balls".into()));
        }
        if self.positions.len() != self.velocities.len() {
            return Err(Error::InvalidParam(format!(
                "{} positions vs {} velocities",
                self.positions.len(),
                self.velocities.len()
            )));
        }
        for v in self.positions.iter().chain(self.velocities.iter()) {
            if v.len() != self.dim {
                return Err(Error::InvalidParam(format!(
                    "vector of length {} in dimension-{} state",
                    v.len(),
                    self.dim
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidParam("non-finite component".into()));
            }
        }
        for i in 0..self.n() {
            for j in (i + 1)..self.n() {
                let d = vecd::dist(&self.positions[i], &self.positions[j]);
                if d < CONTACT - EPS_GEOM {
                    return Err(Error::Overlap { i, j, dist: d, min: CONTACT - EPS_GEOM });
                }
            }
        }
        Ok(())
    }

    /// Free flight: x += dt * v, t += dt. Exact linear step, no projection.
    pub fn advance(&mut self, dt: f64) {
        for (x, v) in self.positions.iter_mut().zip(&self.velocities) {
            vecd::axpy(x, dt, v);
        }
        self.t += dt;
    }

    pub fn advanced(&self, dt: f64) -> SystemState {
        let mut s = self.clone();
        s.advance(dt);
        s
    }

    /// Total kinetic "energy" |v|^2 = sum of squared speeds (unit masses,
    /// no 1/2 factor).
    pub fn energy(&self) -> f64 {
        self.velocities.iter().map(|v| vecd::norm_sq(v)).sum()
    }

    /// Total momentum (= sum of velocities for unit masses).
    pub fn momentum(&self) -> Vec<f64> {
        let mut p = vecd::zeros(self.dim);
        for v in &self.velocities {
            vecd::axpy(&mut p, 1.0, v);
        }
        p
    }

    pub fn center_of_mass(&self) -> Vec<f64> {
        let mut c = vecd::zeros(self.dim);
        for x in &self.positions {
            vecd::axpy(&mut c, 1.0, x);
        }
        vecd::scale(&c, 1.0 / self.n() as f64)
    }

    /// Norm of the stacked configuration vector (x^1, ..., x^n) in R^{dn}.
    pub fn config_norm(&self) -> f64 {
        self.positions
            .iter()
            .map(|x| vecd::norm_sq(x))
            .sum::<f64>()
            .sqrt()
    }

    pub fn min_pair_distance(&self) -> f64 {
        let mut m = f64::INFINITY;
        for i in 0..self.n() {
            for j in (i + 1)..self.n() {
                m = m.min(vecd::dist(&self.positions[i], &self.positions[j]));
            }
        }
        m
    }

    /// Time-reversed copy: same positions, negated velocities, same t.
    pub fn reversed(&self) -> SystemState {
        SystemState {
            dim: self.dim,
            t: self.t,
            positions: self.positions.clone(),
            velocities: self.velocities.iter().map(|v| vecd::scale(v, -1.0)).collect(),
        }
    }

    /// Restriction to the balls listed in `idx` (kept in the given order).
    pub fn restrict(&self, idx: &[usize]) -> SystemState {
        SystemState {
            dim: self.dim,
            t: self.t,
            positions: idx.iter().map(|&k| self.positions[k].clone()).collect(),
            velocities: idx.iter().map(|&k| self.velocities[k].clone()).collect(),
        }
    }
}
