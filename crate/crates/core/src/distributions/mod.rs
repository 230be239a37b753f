//! Positive claim-size laws: cdf, moments, transforms, lattice tabulation,
//! convolution powers, integrated tails and sampling.

mod lattice;

pub use lattice::{
    cdf_from_masses, mass_power, unit_mass, GriddedDistribution, LatticeSpec, GRID_TAIL_BOUND,
};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, gamma_ur, ln_gamma};

use crate::error::{invalid, Error, Result};
use crate::numerics::{integrate, integrate_to_infinity, normal_cdf, QUAD_ABS_TOL};

/// A positive claim-size law.
///
/// Pareto is supported on `[scale, inf)`. `EmpiricalLattice` carries a tabulated
/// law and is meant as a numeric carrier only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "kebab-case")]
pub enum ClaimDistribution {
    Exponential { rate: f64 },
    Erlang { shape: u32, rate: f64 },
    Pareto { alpha: f64, scale: f64 },
    Lognormal { mu: f64, sigma: f64 },
    Weibull { shape: f64, scale: f64 },
    Uniform { a: f64, b: f64 },
    EmpiricalLattice(GriddedDistribution),
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive and finite, got {v}")))
    }
}

/// `P(Poisson(y) < k)`, i.e. the Erlang(k) survival at rate-scaled `y`.
fn poisson_below(k: u32, y: f64) -> f64 {
    if y <= 0.0 {
        return 1.0;
    }
    gamma_ur(k as f64, y)
}

impl ClaimDistribution {
    pub fn exponential(rate: f64) -> Self {
        Self::Exponential { rate }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Exponential { rate } => positive("exponential rate", rate),
            Self::Erlang { shape, rate } => {
                if shape == 0 {
                    return Err(invalid("erlang shape must be at least 1"));
                }
                positive("erlang rate", rate)
            }
            Self::Pareto { alpha, scale } => {
                positive("pareto alpha", alpha)?;
                positive("pareto scale", scale)
            }
            Self::Lognormal { mu, sigma } => {
                if !mu.is_finite() {
                    return Err(invalid("lognormal mu must be finite"));
                }
                positive("lognormal sigma", sigma)
            }
            Self::Weibull { shape, scale } => {
                positive("weibull shape", shape)?;
                positive("weibull scale", scale)
            }
            Self::Uniform { a, b } => {
                if !(a >= 0.0 && b > a && b.is_finite()) {
                    return Err(invalid(format!("uniform needs 0 <= a < b, got a = {a}, b = {b}")));
                }
                Ok(())
            }
            Self::EmpiricalLattice(ref g) => {
                if g.atom() > 0.0 {
                    return Err(invalid("claim sizes must be positive: empirical law has an atom at 0"));
                }
                Ok(())
            }
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            Self::Exponential { .. } => "exponential",
            Self::Erlang { .. } => "erlang",
            Self::Pareto { .. } => "pareto",
            Self::Lognormal { .. } => "lognormal",
            Self::Weibull { .. } => "weibull",
            Self::Uniform { .. } => "uniform",
            Self::EmpiricalLattice(_) => "empirical-lattice",
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match *self {
            Self::Exponential { rate } => -(-rate * x).exp_m1(),
            Self::Erlang { .. } | Self::Lognormal { .. } | Self::Pareto { .. } | Self::Weibull { .. } => {
                1.0 - self.sf(x)
            }
            Self::Uniform { a, b } => ((x - a) / (b - a)).clamp(0.0, 1.0),
            Self::EmpiricalLattice(ref g) => g.cdf(x),
        }
    }

    /// Survival `P(Y > x)`, evaluated directly to keep precision far in the tail.
    pub fn sf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 1.0;
        }
        match *self {
            Self::Exponential { rate } => (-rate * x).exp(),
            Self::Erlang { shape, rate } => poisson_below(shape, rate * x),
            Self::Pareto { alpha, scale } => {
                if x < scale {
                    1.0
                } else {
                    (scale / x).powf(alpha)
                }
            }
            Self::Lognormal { mu, sigma } => normal_cdf(-(x.ln() - mu) / sigma),
            Self::Weibull { shape, scale } => (-(x / scale).powf(shape)).exp(),
            Self::Uniform { .. } | Self::EmpiricalLattice(_) => 1.0 - self.cdf(x),
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        match *self {
            Self::Exponential { rate } => rate * (-rate * x).exp(),
            Self::Erlang { shape, rate } => {
                if x == 0.0 {
                    return if shape == 1 { rate } else { 0.0 };
                }
                let k = shape as f64;
                (k * rate.ln() + (k - 1.0) * x.ln() - rate * x - ln_gamma(k)).exp()
            }
            Self::Pareto { alpha, scale } => {
                if x < scale {
                    0.0
                } else {
                    alpha * scale.powf(alpha) / x.powf(alpha + 1.0)
                }
            }
            Self::Lognormal { mu, sigma } => {
                if x == 0.0 {
                    return 0.0;
                }
                let z = (x.ln() - mu) / sigma;
                (-0.5 * z * z).exp() / (x * sigma * (2.0 * std::f64::consts::PI).sqrt())
            }
            Self::Weibull { shape, scale } => {
                if x == 0.0 {
                    return if shape < 1.0 {
                        f64::INFINITY
                    } else if shape == 1.0 {
                        1.0 / scale
                    } else {
                        0.0
                    };
                }
                let t = x / scale;
                shape / scale * t.powf(shape - 1.0) * (-t.powf(shape)).exp()
            }
            Self::Uniform { a, b } => {
                if x >= a && x <= b {
                    1.0 / (b - a)
                } else {
                    0.0
                }
            }
            Self::EmpiricalLattice(ref g) => {
                let h = g.step();
                let k = (x / h).floor() as usize;
                if k + 1 >= g.len() {
                    return 0.0;
                }
                (g.values()[k + 1] - g.values()[k]) / h
            }
        }
    }

    pub fn mean(&self) -> Result<f64> {
        Ok(match *self {
            Self::Exponential { rate } => 1.0 / rate,
            Self::Erlang { shape, rate } => shape as f64 / rate,
            Self::Pareto { alpha, scale } => {
                if alpha <= 1.0 {
                    return Err(Error::InfiniteMean);
                }
                alpha * scale / (alpha - 1.0)
            }
            Self::Lognormal { mu, sigma } => (mu + 0.5 * sigma * sigma).exp(),
            Self::Weibull { shape, scale } => scale * gamma(1.0 + 1.0 / shape),
            Self::Uniform { a, b } => 0.5 * (a + b),
            Self::EmpiricalLattice(ref g) => g.mean(),
        })
    }

    /// `E[Y^2]`; `+inf` when it diverges.
    pub fn second_moment(&self) -> f64 {
        match *self {
            Self::Exponential { rate } => 2.0 / (rate * rate),
            Self::Erlang { shape, rate } => {
                let k = shape as f64;
                k * (k + 1.0) / (rate * rate)
            }
            Self::Pareto { alpha, scale } => {
                if alpha <= 2.0 {
                    f64::INFINITY
                } else {
                    alpha * scale * scale / (alpha - 2.0)
                }
            }
            Self::Lognormal { mu, sigma } => (2.0 * mu + 2.0 * sigma * sigma).exp(),
            Self::Weibull { shape, scale } => scale * scale * gamma(1.0 + 2.0 / shape),
            Self::Uniform { a, b } => (a * a + a * b + b * b) / 3.0,
            Self::EmpiricalLattice(ref g) => g.second_moment(),
        }
    }

    /// Variance; `+inf` when the second moment diverges.
    pub fn variance(&self) -> Result<f64> {
        let m = self.mean()?;
        let m2 = self.second_moment();
        if m2.is_infinite() {
            return Ok(f64::INFINITY);
        }
        Ok((m2 - m * m).max(0.0))
    }

    /// Left end of the half-line where `E[e^{-sY}]` is finite. `None` means the
    /// transform exists for every real `s`.
    pub fn lst_abscissa(&self) -> Option<f64> {
        match *self {
            Self::Exponential { rate } | Self::Erlang { rate, .. } => Some(-rate),
            Self::Pareto { .. } | Self::Lognormal { .. } => Some(0.0),
            Self::Weibull { shape, scale } => {
                if shape < 1.0 {
                    Some(0.0)
                } else if shape == 1.0 {
                    Some(-1.0 / scale)
                } else {
                    None
                }
            }
            Self::Uniform { .. } | Self::EmpiricalLattice(_) => None,
        }
    }

    pub fn is_heavy_tailed(&self) -> bool {
        match *self {
            Self::Pareto { .. } | Self::Lognormal { .. } => true,
            Self::Weibull { shape, .. } => shape < 1.0,
            _ => false,
        }
    }

    /// `E[e^{-sY}]`. Closed forms for exponential, Erlang and uniform laws,
    /// adaptive quadrature otherwise.
    pub fn lst(&self, s: f64) -> Result<f64> {
        if s == 0.0 {
            return Ok(1.0);
        }
        if s < 0.0 {
            if let Some(abscissa) = self.lst_abscissa() {
                if s <= abscissa {
                    return Err(Error::DivergentTransform { s, abscissa });
                }
            }
        }
        Ok(match *self {
            Self::Exponential { rate } => rate / (rate + s),
            Self::Erlang { shape, rate } => (rate / (rate + s)).powi(shape as i32),
            Self::Uniform { a, b } => {
                let w = b - a;
                // (e^{-sa} - e^{-sb}) / (s w), written with exp_m1 for small s w
                (-s * a).exp() * -(-s * w).exp_m1() / (s * w)
            }
            Self::Pareto { alpha, scale } => {
                // t = scale / y maps [scale, inf) onto (0, 1]
                integrate(
                    |t: f64| {
                        if t <= 0.0 {
                            0.0
                        } else {
                            alpha * t.powf(alpha - 1.0) * (-s * scale / t).exp()
                        }
                    },
                    0.0,
                    1.0,
                    QUAD_ABS_TOL,
                )
            }
            Self::Lognormal { mu, sigma } => {
                let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
                integrate(
                    |z: f64| norm * (-0.5 * z * z).exp() * (-s * (mu + sigma * z).exp()).exp(),
                    -12.0,
                    12.0,
                    QUAD_ABS_TOL,
                )
            }
            Self::Weibull { shape, scale } => {
                // Y = scale * W^{1/shape} with W ~ Exp(1)
                integrate_to_infinity(
                    |w: f64| (-w - s * scale * w.powf(1.0 / shape)).exp(),
                    0.0,
                    QUAD_ABS_TOL,
                )
            }
            Self::EmpiricalLattice(ref g) => {
                g.lst(s) + g.tail_mass() * (-s * (g.end() + 0.5 * g.step())).exp()
            }
        })
    }

    /// Stop-loss transform `E[(Y - x)^+]`.
    pub fn stop_loss(&self, x: f64) -> Result<f64> {
        let mean = self.mean()?;
        if x <= 0.0 {
            return Ok(mean - x);
        }
        Ok(match *self {
            Self::Exponential { rate } => (-rate * x).exp() / rate,
            Self::Erlang { shape, rate } => {
                let y = rate * x;
                mean * poisson_below(shape + 1, y) - x * poisson_below(shape, y)
            }
            Self::Pareto { alpha, scale } => {
                if x < scale {
                    mean - x
                } else {
                    scale.powf(alpha) * x.powf(1.0 - alpha) / (alpha - 1.0)
                }
            }
            Self::Lognormal { mu, sigma } => {
                let lx = x.ln();
                mean * normal_cdf((mu + sigma * sigma - lx) / sigma)
                    - x * normal_cdf((mu - lx) / sigma)
            }
            Self::Weibull { shape, scale } => {
                let t = (x / scale).powf(shape);
                mean * gamma_ur(1.0 + 1.0 / shape, t) - x * (-t).exp()
            }
            Self::Uniform { a, b } => {
                if x < a {
                    mean - x
                } else if x < b {
                    (b - x) * (b - x) / (2.0 * (b - a))
                } else {
                    0.0
                }
            }
            Self::EmpiricalLattice(ref g) => {
                let body: f64 = g
                    .masses()
                    .iter()
                    .enumerate()
                    .map(|(k, m)| m * (g.node(k) - x).max(0.0))
                    .sum();
                let boundary = g.end() + 0.5 * g.step();
                body + g.tail_mass() * (boundary - x).max(0.0)
                    + g.tail_stop_loss().unwrap_or(0.0)
            }
        }
        .max(0.0))
    }

    /// Draws one claim size. Inverse cdf where it is explicit, a sum of
    /// exponentials for Erlang, a normal transform for lognormal, and lattice
    /// inversion for empirical laws.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::Exponential { rate } => std_exp(rng) / rate,
            Self::Erlang { shape, rate } => (0..shape).map(|_| std_exp(rng)).sum::<f64>() / rate,
            Self::Pareto { alpha, scale } => {
                let v: f64 = 1.0 - rng.gen::<f64>();
                scale * v.powf(-1.0 / alpha)
            }
            Self::Lognormal { mu, sigma } => {
                let z: f64 = rng.sample(StandardNormal);
                (mu + sigma * z).exp()
            }
            Self::Weibull { shape, scale } => scale * std_exp(rng).powf(1.0 / shape),
            Self::Uniform { a, b } => a + (b - a) * rng.gen::<f64>(),
            Self::EmpiricalLattice(ref g) => g.quantile(rng.gen::<f64>()),
        }
    }

    /// Default lattice for this law (step `0.01 * mean`).
    pub fn default_lattice(&self) -> Result<LatticeSpec> {
        Ok(LatticeSpec::default_for(self.mean()?, self.variance()?))
    }

    /// Node-centred lattice tabulation of the law itself.
    pub fn discretize(&self, spec: LatticeSpec) -> Result<GriddedDistribution> {
        let h = spec.step;
        if let Self::EmpiricalLattice(ref g) = *self {
            if (g.step() - h).abs() <= 1e-12 * h {
                let mut masses = g.masses().to_vec();
                masses.resize(spec.points, 0.0);
                let kept: f64 = masses.iter().sum();
                let tail = g.tail_mass() + (g.masses().iter().sum::<f64>() - kept).max(0.0);
                return GriddedDistribution::from_parts(h, masses, Some(tail), 0.0, None);
            }
        }
        let n = spec.points;
        let mut masses = Vec::with_capacity(n);
        let mut upper_sf = self.sf(0.5 * h);
        masses.push(1.0 - upper_sf);
        for k in 1..n {
            let next = self.sf((k as f64 + 0.5) * h);
            masses.push((upper_sf - next).max(0.0));
            upper_sf = next;
        }
        let boundary = (n as f64 - 0.5) * h;
        let sl = self.stop_loss(boundary).ok();
        GriddedDistribution::from_parts(h, masses, Some(upper_sf), 0.0, sl)
    }
}

fn std_exp<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    -(-rng.gen::<f64>()).ln_1p()
}

/// Lattice tabulation of the `n`-fold convolution `F^{n*}` (doubling). `n = 0`
/// gives the unit step at the origin.
pub fn convolve_power(d: &ClaimDistribution, n: u32, step: f64, points: usize) -> Result<GriddedDistribution> {
    let spec = LatticeSpec::new(step, points)?;
    if n == 0 {
        return GriddedDistribution::from_masses(step, unit_mass(points), 1.0, None);
    }
    let base = d.discretize(spec)?;
    let masses = mass_power(base.masses(), n, points);
    let out = GriddedDistribution::from_masses(step, masses, 0.0, None)?;
    out.check_tail(GRID_TAIL_BOUND)?;
    Ok(out)
}

/// Lattice tabulation of the integrated-tail (equilibrium) law
/// `F_I(x) = (1/E Y) int_0^x (1 - F(y)) dy`.
///
/// Cell masses are differences of the exact stop-loss transform, so the far tail
/// carries no accumulated quadrature error.
pub fn integrated_tail(d: &ClaimDistribution, step: f64, points: usize) -> Result<GriddedDistribution> {
    let spec = LatticeSpec::new(step, points)?;
    let mean = d.mean()?;
    let h = spec.step;
    let mut masses = Vec::with_capacity(points);
    let mut upper = d.stop_loss(0.5 * h)?;
    masses.push((mean - upper) / mean);
    for k in 1..points {
        let next = d.stop_loss((k as f64 + 0.5) * h)?;
        masses.push(((upper - next) / mean).max(0.0));
        upper = next;
    }
    let tail = upper / mean;
    GriddedDistribution::from_parts(h, masses, Some(tail), 0.0, None)
}
