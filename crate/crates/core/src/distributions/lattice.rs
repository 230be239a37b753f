use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numerics::convolve_truncated;

/// Tail mass above which a lattice is rejected as too short.
pub const GRID_TAIL_BOUND: f64 = 1e-3;

/// Lattice geometry: spacing and number of nodes `0, h, ..., (points - 1) h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub step: f64,
    pub points: usize,
}

impl LatticeSpec {
    pub fn new(step: f64, points: usize) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(invalid(format!("lattice step must be positive, got {step}")));
        }
        if points < 2 {
            return Err(invalid(format!("lattice needs at least 2 points, got {points}")));
        }
        Ok(Self { step, points })
    }

    /// Step `0.01 * mean`, covering `mean + 40 sd` (or `1000 * mean` when the
    /// variance is infinite).
    pub fn default_for(mean: f64, variance: f64) -> Self {
        let step = 0.01 * mean;
        let reach = if variance.is_finite() {
            mean + 40.0 * variance.sqrt()
        } else {
            1000.0 * mean
        };
        let points = ((reach / step).ceil() as usize + 1).clamp(2, 1 << 21);
        Self { step, points }
    }

    pub fn end(&self) -> f64 {
        self.step * (self.points - 1) as f64
    }
}

/// A cdf tabulated on a uniform lattice.
///
/// Masses are node-centred: `masses[k]` is the probability of the cell
/// `[(k - 1/2) h, (k + 1/2) h)` (the first cell is `[0, h/2)`), placed at `k h`.
/// `values[k]` is the cdf at node `k h`, read as the mass strictly below the node
/// plus half of the node mass. Node 0 reports the genuine point mass at zero
/// (`atom`), so positive laws have `values[0] = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GriddedDistribution {
    step: f64,
    values: Vec<f64>,
    masses: Vec<f64>,
    tail_mass: f64,
    atom: f64,
    /// `E[(X - b)^+]` at the upper tail-cell boundary `b = x_last + h/2`, when known.
    tail_stop_loss: Option<f64>,
}

impl GriddedDistribution {
    /// Builds the tabulation from node-centred masses.
    ///
    /// `atom` is the part of `masses[0]` sitting exactly at zero; the rest of the
    /// node-0 cell is read as lying strictly above zero.
    pub fn from_masses(
        step: f64,
        masses: Vec<f64>,
        atom: f64,
        tail_stop_loss: Option<f64>,
    ) -> Result<Self> {
        Self::from_parts(step, masses, None, atom, tail_stop_loss)
    }

    /// Like [`from_masses`](Self::from_masses) with an explicitly known residual
    /// tail mass (more accurate than `1 - sum(masses)` far in the tail).
    pub fn from_parts(
        step: f64,
        mut masses: Vec<f64>,
        tail_mass: Option<f64>,
        atom: f64,
        tail_stop_loss: Option<f64>,
    ) -> Result<Self> {
        if !(step > 0.0) {
            return Err(invalid("lattice step must be positive"));
        }
        if masses.len() < 2 {
            return Err(invalid("lattice needs at least 2 points"));
        }
        for m in masses.iter_mut() {
            if !m.is_finite() || *m < 0.0 {
                *m = 0.0;
            }
        }
        let total: f64 = masses.iter().sum();
        if total > 1.0 + 1e-9 {
            return Err(invalid(format!("lattice masses sum to {total} > 1")));
        }
        if total > 1.0 {
            masses.iter_mut().for_each(|m| *m /= total);
        }
        let tail_mass = tail_mass
            .unwrap_or_else(|| 1.0 - masses.iter().sum::<f64>())
            .max(0.0);
        let atom = atom.clamp(0.0, masses[0]);
        let values = cdf_from_masses(&masses, atom);
        Ok(Self { step, values, masses, tail_mass, atom, tail_stop_loss })
    }

    /// Builds the tabulation from nodal cdf values. Node-centred masses are
    /// recovered by averaging the cdf at neighbouring nodes.
    pub fn from_cdf_values(step: f64, values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(invalid("lattice needs at least 2 points"));
        }
        if values.iter().any(|v| !(0.0..=1.0 + 1e-12).contains(v)) {
            return Err(invalid("cdf values must lie in [0, 1]"));
        }
        if values.windows(2).any(|w| w[1] < w[0] - 1e-12) {
            return Err(invalid("cdf values must be nondecreasing"));
        }
        let n = values.len();
        let half = |k: usize| -> f64 {
            // cdf at (k + 1/2) h
            if k + 1 < n {
                0.5 * (values[k] + values[k + 1])
            } else {
                values[n - 1]
            }
        };
        let mut masses = Vec::with_capacity(n);
        masses.push(half(0));
        for k in 1..n {
            masses.push((half(k) - half(k - 1)).max(0.0));
        }
        let tail_mass = (1.0 - values[n - 1]).max(0.0);
        Ok(Self {
            atom: values[0].min(masses[0]),
            step,
            values: values.into_iter().map(|v| v.min(1.0)).collect(),
            masses,
            tail_mass,
            tail_stop_loss: None,
        })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    /// Point mass at zero.
    pub fn atom(&self) -> f64 {
        self.atom
    }

    pub fn tail_stop_loss(&self) -> Option<f64> {
        self.tail_stop_loss
    }

    pub fn node(&self, k: usize) -> f64 {
        self.step * k as f64
    }

    pub fn end(&self) -> f64 {
        self.node(self.len() - 1)
    }

    /// Errors with `GridTooCoarse` when the residual tail exceeds `bound`.
    pub fn check_tail(&self, bound: f64) -> Result<()> {
        if self.tail_mass > bound {
            return Err(Error::GridTooCoarse { tail_mass: self.tail_mass, bound });
        }
        Ok(())
    }

    /// Cdf by linear interpolation between nodes; `0` below zero, the last value
    /// beyond the lattice end.
    pub fn cdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        let pos = x / self.step;
        let k = pos.floor() as usize;
        if k + 1 >= self.len() {
            return self.values[self.len() - 1];
        }
        let t = pos - k as f64;
        self.values[k] * (1.0 - t) + self.values[k + 1] * t
    }

    /// Nodal survival accumulated from the right (`1 - values[k]` without the
    /// cancellation far in the tail).
    pub fn survival_at_nodes(&self) -> Vec<f64> {
        let n = self.len();
        let mut out = vec![0.0; n];
        let mut above = self.tail_mass;
        for k in (0..n).rev() {
            out[k] = above + 0.5 * self.masses[k];
            above += self.masses[k];
        }
        out[0] = 1.0 - self.atom;
        out
    }

    /// Survival `1 - cdf(x)`.
    pub fn sf(&self, x: f64) -> f64 {
        1.0 - self.cdf(x)
    }

    /// Mean of the lattice law; without a known tail stop-loss the residual tail
    /// is placed at the upper tail-cell boundary.
    pub fn mean(&self) -> f64 {
        let body: f64 = self
            .masses
            .iter()
            .enumerate()
            .map(|(k, m)| m * self.node(k))
            .sum();
        let boundary = self.end() + 0.5 * self.step;
        let tail = self.tail_mass * boundary + self.tail_stop_loss.unwrap_or(0.0);
        body + tail
    }

    pub fn second_moment(&self) -> f64 {
        self.masses
            .iter()
            .enumerate()
            .map(|(k, m)| m * self.node(k).powi(2))
            .sum()
    }

    /// `sum_k m_k exp(-s x_k)` over the lattice body.
    pub fn lst(&self, s: f64) -> f64 {
        self.masses
            .iter()
            .enumerate()
            .map(|(k, m)| m * (-s * self.node(k)).exp())
            .sum()
    }

    /// Inverse cdf by linear interpolation between nodes. Levels beyond the last
    /// tabulated value map to the lattice end.
    pub fn quantile(&self, p: f64) -> f64 {
        let v = &self.values;
        if p <= v[0] {
            return 0.0;
        }
        let n = v.len();
        if p >= v[n - 1] {
            return self.end();
        }
        // first index with v[k] >= p
        let k = v.partition_point(|&x| x < p);
        let (lo, hi) = (v[k - 1], v[k]);
        let t = if hi > lo { (p - lo) / (hi - lo) } else { 0.0 };
        self.step * ((k - 1) as f64 + t)
    }

    /// Sup-distance between the nodal cdfs of two lattices with the same step,
    /// over their common nodes.
    pub fn sup_distance(&self, other: &Self) -> f64 {
        if (self.step - other.step).abs() > 1e-12 * self.step {
            // different geometry: compare on this lattice by interpolation
            return (0..self.len())
                .map(|k| (self.values[k] - other.cdf(self.node(k))).abs())
                .fold(0.0, f64::max);
        }
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Truncated lattice convolution with another law on the same step.
    pub fn convolve(&self, other: &Self) -> Result<Self> {
        if (self.step - other.step).abs() > 1e-12 * self.step {
            return Err(invalid("cannot convolve lattices with different steps"));
        }
        let len = self.len().min(other.len());
        let masses = convolve_truncated(&self.masses, &other.masses, len);
        Self::from_masses(self.step, masses, self.atom * other.atom, None)
    }
}

/// Nodal cdf from node-centred masses (half of the node mass counts as below;
/// node 0 reports the point mass `atom`).
pub fn cdf_from_masses(masses: &[f64], atom: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(masses.len());
    let mut below = 0.0;
    for (k, &m) in masses.iter().enumerate() {
        let v = if k == 0 { atom } else { below + 0.5 * m };
        out.push(v.clamp(0.0, 1.0));
        below += m;
    }
    out
}

/// Integer power of a node-centred mass vector by binary exponentiation,
/// truncated to `len`.
pub fn mass_power(base: &[f64], n: u32, len: usize) -> Vec<f64> {
    let mut result = unit_mass(len);
    if n == 0 {
        return result;
    }
    let mut square = base[..base.len().min(len)].to_vec();
    square.resize(len, 0.0);
    let mut k = n;
    let mut first = true;
    loop {
        if k & 1 == 1 {
            result = if first { square.clone() } else { convolve_truncated(&result, &square, len) };
            first = false;
        }
        k >>= 1;
        if k == 0 {
            break;
        }
        square = convolve_truncated(&square, &square, len);
    }
    result
}

/// Unit mass at the origin.
pub fn unit_mass(len: usize) -> Vec<f64> {
    let mut v = vec![0.0; len];
    if len > 0 {
        v[0] = 1.0;
    }
    v
}
