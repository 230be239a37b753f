//! Ruin quantities of a reduced scalar model: safety loading, ruin probability
//! with zero capital, mean ruin time, Lundberg exponent, Pollaczek-Khinchin
//! evaluation, renewal and Gerber-Shiu solvers, deficit laws and asymptotics.

use serde::{Deserialize, Serialize};

use crate::distributions::{GriddedDistribution, GRID_TAIL_BOUND};
use crate::error::{invalid, Error, Result};
use crate::numerics::convolve_truncated;
use crate::reduction::ReducedClModel;

/// How a reported number was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ClosedForm,
    Lattice,
    MonteCarlo,
}

/// A scalar tagged with its method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scalar {
    pub value: f64,
    pub method: Method,
}

impl Scalar {
    pub fn closed_form(value: f64) -> Self {
        Self { value, method: Method::ClosedForm }
    }

    pub fn lattice(value: f64) -> Self {
        Self { value, method: Method::Lattice }
    }
}

/// `rho = c / (lambda E Y1) - 1`.
pub fn safety_loading(m: &ReducedClModel, c: f64) -> f64 {
    c / (m.lambda * m.y1_mean) - 1.0
}

pub fn net_profit_holds(m: &ReducedClModel, c: f64) -> bool {
    c > m.lambda * m.y1_mean
}

fn require_net_profit(m: &ReducedClModel, c: f64) -> Result<()> {
    if net_profit_holds(m, c) {
        Ok(())
    } else {
        Err(Error::NetProfitViolated { premium_rate: c, claim_rate: m.lambda * m.y1_mean })
    }
}

/// `(psi(0), delta(0)) = (lambda E Y1 / c, 1 - psi(0))`.
pub fn ruin_at_zero(m: &ReducedClModel, c: f64) -> Result<(f64, f64)> {
    require_net_profit(m, c)?;
    let psi0 = m.lambda * m.y1_mean / c;
    Ok((psi0, 1.0 - psi0))
}

/// `E[tau(0) | tau(0) < inf] = E Y1^2 / (2 E Y1 (c - lambda E Y1))`.
pub fn expected_ruin_time_zero(m: &ReducedClModel, c: f64) -> Result<f64> {
    require_net_profit(m, c)?;
    if !m.y1_second_moment.is_finite() {
        return Err(Error::InfiniteVariance);
    }
    Ok(m.y1_second_moment / (2.0 * m.y1_mean * (c - m.lambda * m.y1_mean)))
}

/// `h(eps) = E e^{eps Y1} - 1 - (c / lambda) eps`; `None` outside the domain of
/// the transform (or when it overflows).
fn lundberg_h(m: &ReducedClModel, c: f64, eps: f64) -> Option<f64> {
    match m.y1_lst(-eps) {
        Ok(v) if v.is_finite() => Some(v - 1.0 - c / m.lambda * eps),
        _ => None,
    }
}

/// Positive root of `h`, or `None` when no root exists inside the convergence
/// domain of the transform (heavy tails).
///
/// The bracket grows geometrically from `1e-6`; near a finite abscissa it
/// halves the distance to the abscissa instead. Bisection to `1e-14` relative.
pub fn lundberg_exponent(m: &ReducedClModel, c: f64) -> Result<Option<f64>> {
    require_net_profit(m, c)?;
    let limit = match m.lst_abscissa() {
        Some(a) if a >= 0.0 => return Ok(None),
        Some(a) => -a,
        None => f64::INFINITY,
    };
    let mut lo = 0.0;
    let mut hi = 1e-6f64.min(0.5 * limit);
    let mut found = false;
    for _ in 0..400 {
        match lundberg_h(m, c, hi) {
            Some(v) if v > 0.0 => {
                found = true;
                break;
            }
            Some(_) => {
                lo = hi;
                hi = if 2.0 * hi < limit { 2.0 * hi } else { 0.5 * (hi + limit) };
            }
            // overflow inside the domain: the root lies below
            None if hi < limit => {
                found = true;
                break;
            }
            None => return Ok(None),
        }
        if limit.is_finite() && limit - hi <= 1e-15 * limit {
            break;
        }
    }
    if !found {
        return Ok(None);
    }
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        match lundberg_h(m, c, mid) {
            Some(v) if v <= 0.0 => lo = mid,
            _ => hi = mid,
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}

/// Premium rate for which the Lundberg bound at capital `u` equals `alpha`:
/// `eps = -ln(alpha) / u`, `c = lambda (E e^{eps Y1} - 1) / eps`.
pub fn calibrate_premium(m: &ReducedClModel, alpha: f64, u: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid(format!("target bound must lie in (0, 1), got {alpha}")));
    }
    if !(u > 0.0) {
        return Err(invalid("capital must be positive for calibration"));
    }
    let eps = -alpha.ln() / u;
    let l = m.y1_lst(-eps)?;
    if !l.is_finite() {
        return Err(Error::DivergentTransform { s: -eps, abscissa: m.lst_abscissa().unwrap_or(f64::NEG_INFINITY) });
    }
    Ok(m.lambda * (l - 1.0) / eps)
}

/// Closed forms for exponential claims with rate `mu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentialClosedForm {
    pub rho: f64,
    pub psi0: f64,
    pub epsilon: f64,
    pub psi: f64,
    pub delta: f64,
    pub expected_ruin_time: f64,
}

/// `psi(u) = psi(0) e^{-eps u}` with `eps = rho mu / (1 + rho)`, together with
/// `delta(u)` and `E[tau(u) | ruin] = (c + lambda u) / (c (c mu - lambda))`.
pub fn psi_exponential_closed_form(mu: f64, lambda: f64, c: f64, u: f64) -> Result<ExponentialClosedForm> {
    if !(mu > 0.0 && lambda > 0.0 && c > 0.0 && u >= 0.0) {
        return Err(invalid("exponential closed form needs mu, lambda, c > 0 and u >= 0"));
    }
    if c * mu <= lambda {
        return Err(Error::NetProfitViolated { premium_rate: c, claim_rate: lambda / mu });
    }
    let rho = c * mu / lambda - 1.0;
    let psi0 = 1.0 / (1.0 + rho);
    let epsilon = rho * mu / (1.0 + rho);
    let psi = psi0 * (-epsilon * u).exp();
    Ok(ExponentialClosedForm {
        rho,
        psi0,
        epsilon,
        psi,
        delta: 1.0 - psi,
        expected_ruin_time: (c + lambda * u) / (c * (c * mu - lambda)),
    })
}

/// Ruin probabilities tabulated on a capital grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsiTable {
    pub u: Vec<f64>,
    pub psi: Vec<f64>,
    /// Number of convolution terms kept in the series.
    pub terms: usize,
    /// Bound on the neglected series remainder.
    pub truncation_bound: f64,
}

impl PsiTable {
    pub fn at(&self, u: f64) -> f64 {
        interpolate(&self.u, &self.psi, u)
    }
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let k = xs.partition_point(|&v| v < x);
    if k == 0 {
        return ys[0];
    }
    if k >= xs.len() {
        return ys[ys.len() - 1];
    }
    let (x0, x1) = (xs[k - 1], xs[k]);
    let t = if x1 > x0 { (x - x0) / (x1 - x0) } else { 0.0 };
    ys[k - 1] * (1.0 - t) + ys[k] * t
}

fn nodal_to_grid(grid_step: f64, nodal: &[f64], u_grid: &[f64]) -> Result<Vec<f64>> {
    let end = grid_step * (nodal.len() - 1) as f64;
    u_grid
        .iter()
        .map(|&u| {
            if u < 0.0 {
                return Err(invalid(format!("capital must be nonnegative, got {u}")));
            }
            if u > end * (1.0 + 1e-12) {
                return Err(Error::OutsideLattice { requested: u, lattice_end: end });
            }
            let pos = u / grid_step;
            let k = (pos.floor() as usize).min(nodal.len() - 1);
            if k + 1 >= nodal.len() {
                return Ok(nodal[k]);
            }
            let t = pos - k as f64;
            Ok(nodal[k] * (1.0 - t) + nodal[k + 1] * t)
        })
        .collect()
}

/// Compound-geometric law `(1 - a) sum_{i<k} a^i F_I^{i*}` on the lattice, with
/// `k` the smallest power of two such that `a^k / (1 - a) < tol`.
fn compound_geometric(fi: &GriddedDistribution, a: f64, tol: f64) -> Result<(GriddedDistribution, usize, f64)> {
    let n = fi.len();
    let mut k = 1usize;
    while a.powi(k as i32) / (1.0 - a) >= tol && k < 1 << 20 {
        k *= 2;
    }
    // S_k = sum_{i<k} (a q)^{*i},  P_k = (a q)^{*k}
    let mut sum = crate::distributions::unit_mass(n);
    let mut pow: Vec<f64> = fi.masses().iter().map(|q| a * q).collect();
    let mut have = 1usize;
    while have < k {
        let cross = convolve_truncated(&pow, &sum, n);
        for (s, x) in sum.iter_mut().zip(&cross) {
            *s += x;
        }
        have *= 2;
        if have < k {
            pow = convolve_truncated(&pow, &pow, n);
        }
    }
    let masses: Vec<f64> = sum.iter().map(|s| (1.0 - a) * s).collect();
    let g = GriddedDistribution::from_masses(fi.step(), masses, 1.0 - a, None)?;
    Ok((g, k - 1, a.powi(k as i32) / (1.0 - a)))
}

/// Nodal ruin probabilities from the compound-geometric series.
fn psi_nodal(m: &ReducedClModel, c: f64, tol: f64) -> Result<(Vec<f64>, usize, f64)> {
    let (a, _) = ruin_at_zero(m, c)?;
    m.fi_grid.check_tail(GRID_TAIL_BOUND)?;
    let (g, terms, bound) = compound_geometric(&m.fi_grid, a, tol)?;
    let mut out = Vec::with_capacity(g.len());
    let mut running = a;
    for &v in g.values() {
        let psi = (1.0 - v).clamp(0.0, a);
        running = running.min(psi);
        out.push(running);
    }
    out[0] = a;
    Ok((out, terms, bound))
}

/// Ruin probability by the Pollaczek-Khinchin series
/// `psi(u) = (1 - a) sum_{i>=1} a^i (1 - F_I^{i*}(u))`, `a = psi(0)`,
/// evaluated on the lattice by doubling.
pub fn psi_pollaczek_khinchin(m: &ReducedClModel, c: f64, u_grid: &[f64], tol: f64) -> Result<PsiTable> {
    if !(tol > 0.0) {
        return Err(invalid("series tolerance must be positive"));
    }
    let (nodal, terms, bound) = psi_nodal(m, c, tol)?;
    let psi = nodal_to_grid(m.fi_grid.step(), &nodal, u_grid)?;
    Ok(PsiTable { u: u_grid.to_vec(), psi, terms, truncation_bound: bound })
}

/// Density of the integrated tail at the lattice nodes, `F̄_{Y1}(x_k) / E Y1`.
fn fi_density(m: &ReducedClModel, n: usize) -> Vec<f64> {
    let surv = m.y1_grid.survival_at_nodes();
    (0..n).map(|k| surv.get(k).copied().unwrap_or(0.0) / m.y1_mean).collect()
}

/// Trapezoidal marching for `x(u) = a int_0^u x(u - y) f(y) dy + b(u)` on the
/// lattice nodes `0..n`; the diagonal term is solved implicitly.
fn volterra_march(a: f64, f: &[f64], h: f64, forcing: &[f64]) -> Vec<f64> {
    let n = forcing.len();
    let mut x = vec![0.0; n];
    x[0] = forcing[0];
    let diag = 1.0 - 0.5 * a * h * f[0];
    for k in 1..n {
        let mut acc = 0.5 * f[k] * x[0];
        for j in 1..k {
            acc += f[j] * x[k - j];
        }
        x[k] = (forcing[k] + a * h * acc) / diag;
    }
    x
}

fn nodes_up_to(m: &ReducedClModel, u_max: f64) -> Result<usize> {
    let h = m.y1_grid.step();
    let end = m.y1_grid.end();
    if u_max > end * (1.0 + 1e-12) {
        return Err(Error::OutsideLattice { requested: u_max, lattice_end: end });
    }
    Ok(((u_max / h).ceil() as usize + 1).min(m.y1_grid.len()).max(2))
}

/// Survival probability from the defective renewal equation
/// `delta(u) = (1 - a) + a int_0^u delta(u - y) dF_I(y)`.
pub fn delta_renewal_solve(m: &ReducedClModel, c: f64, u_grid: &[f64]) -> Result<Vec<f64>> {
    let (a, delta0) = ruin_at_zero(m, c)?;
    let u_max = u_grid.iter().copied().fold(0.0, f64::max);
    let n = nodes_up_to(m, u_max)?;
    let f = fi_density(m, n);
    let nodal = volterra_march(a, &f, m.y1_grid.step(), &vec![delta0; n]);
    let nodal: Vec<f64> = nodal.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
    nodal_to_grid(m.y1_grid.step(), &nodal, u_grid)
}

/// `G(u, y) = P(deficit at ruin <= y, ruin | capital u)` on a `u x y` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GerberShiuGrid {
    pub u: Vec<f64>,
    pub y: Vec<f64>,
    /// `values[i][j] = G(u[i], y[j])`.
    pub values: Vec<Vec<f64>>,
}

/// Solves `G(u, y) = a int_0^u G(u - x, y) dF_I(x) + a (F_I(u + y) - F_I(u))`
/// for each `y` by trapezoidal marching in `u`; `G(0, y) = a F_I(y)`.
pub fn gerber_shiu_solve(m: &ReducedClModel, c: f64, u_grid: &[f64], y_grid: &[f64]) -> Result<GerberShiuGrid> {
    let (a, _) = ruin_at_zero(m, c)?;
    if y_grid.iter().any(|&y| !(y >= 0.0)) {
        return Err(invalid("deficit levels must be nonnegative"));
    }
    let u_max = u_grid.iter().copied().fold(0.0, f64::max);
    let n = nodes_up_to(m, u_max)?;
    let h = m.y1_grid.step();
    let f = fi_density(m, n);
    let fi = &m.fi_grid;
    let columns: Vec<Vec<f64>> = y_grid
        .iter()
        .map(|&y| {
            let forcing: Vec<f64> = (0..n)
                .map(|k| {
                    let u = h * k as f64;
                    a * (fi.cdf(u + y) - fi.cdf(u)).max(0.0)
                })
                .collect();
            let nodal = volterra_march(a, &f, h, &forcing);
            nodal_to_grid(h, &nodal, u_grid)
        })
        .collect::<Result<_>>()?;
    let values = (0..u_grid.len())
        .map(|i| {
            let mut row: Vec<f64> = columns.iter().map(|col| col[i].clamp(0.0, 1.0)).collect();
            for j in 1..row.len() {
                if y_grid[j] >= y_grid[j - 1] && row[j] < row[j - 1] {
                    row[j] = row[j - 1];
                }
            }
            row
        })
        .collect();
    Ok(GerberShiuGrid { u: u_grid.to_vec(), y: y_grid.to_vec(), values })
}

/// Laws attached to ruin from zero capital.
#[derive(Debug, Clone, PartialEq)]
pub struct DeficitLaws {
    /// Deficit `-R(tau+)` given ruin: the integrated tail.
    pub deficit: GriddedDistribution,
    /// `E Y1^2 / (2 E Y1)`, absent when the second moment diverges.
    pub mean_deficit: Option<f64>,
    /// Size-biased law `(1 / E Y1) int_0^x y dF_{Y1}(y)` of the claim causing ruin.
    pub claim_causing_ruin: GriddedDistribution,
    /// `E Y1^2 / E Y1`, absent when the second moment diverges.
    pub claim_causing_ruin_mean: Option<f64>,
}

impl DeficitLaws {
    /// `P(deficit > x, surplus before ruin > y | ruin) = F̄_I(x + y)`.
    pub fn joint_survival(&self, x: f64, y: f64) -> f64 {
        if x + y <= 0.0 {
            return 1.0;
        }
        self.deficit.sf(x + y)
    }
}

pub fn deficit_laws_at_zero(m: &ReducedClModel) -> Result<DeficitLaws> {
    let g = &m.y1_grid;
    let masses: Vec<f64> = g
        .masses()
        .iter()
        .enumerate()
        .map(|(k, p)| g.node(k) * p / m.y1_mean)
        .collect();
    let claim_causing_ruin = GriddedDistribution::from_masses(g.step(), masses, 0.0, None)?;
    let second = m.y1_second_moment.is_finite().then_some(m.y1_second_moment);
    Ok(DeficitLaws {
        deficit: m.fi_grid.clone(),
        mean_deficit: second.map(|s| s / (2.0 * m.y1_mean)),
        claim_causing_ruin,
        claim_causing_ruin_mean: second.map(|s| s / m.y1_mean),
    })
}

/// Constant `C` of `psi(u) ~ C e^{-eps u}`, `C = rho / (eps int x e^{eps x} dF_I)`.
///
/// The integral is a lattice sum; `None` when there is no Lundberg exponent or
/// when the last tenth of the lattice still carries more than `1e-4` of the sum.
pub fn cl_approximation(m: &ReducedClModel, c: f64) -> Result<Option<f64>> {
    let eps = match lundberg_exponent(m, c)? {
        Some(e) => e,
        None => return Ok(None),
    };
    let fi = &m.fi_grid;
    let terms: Vec<f64> = fi
        .masses()
        .iter()
        .enumerate()
        .map(|(k, q)| {
            let x = fi.node(k);
            q * x * (eps * x).exp()
        })
        .collect();
    let total: f64 = terms.iter().sum();
    let last = &terms[terms.len() - terms.len() / 10..];
    let tail: f64 = last.iter().sum();
    if !total.is_finite() || tail > 1e-4 * total {
        return Ok(None);
    }
    let rho = safety_loading(m, c);
    Ok(Some(rho / (eps * total)))
}

/// `psi(u) / F̄_I(u)` on a capital grid, with the heavy-tail limit `1 / rho`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeavyTailTable {
    pub u: Vec<f64>,
    pub psi: Vec<f64>,
    pub fi_survival: Vec<f64>,
    pub ratio: Vec<f64>,
    pub limit: f64,
    /// False for light-tailed claims: the limit does not apply.
    pub applicable: bool,
    /// Largest grid capital whose ruin probability dominates the series
    /// truncation bound by three orders of magnitude.
    pub largest_reliable_u: Option<f64>,
}

pub fn heavy_tail_asymptotic(m: &ReducedClModel, c: f64, u_grid: &[f64], tol: f64) -> Result<HeavyTailTable> {
    let table = psi_pollaczek_khinchin(m, c, u_grid, tol)?;
    let surv = m.fi_grid.survival_at_nodes();
    let fi_survival = nodal_to_grid(m.fi_grid.step(), &surv, u_grid)?;
    let ratio: Vec<f64> = table.psi.iter().zip(&fi_survival).map(|(p, s)| p / s).collect();
    let floor = 1e3 * table.truncation_bound.max(1e-13);
    let largest_reliable_u = u_grid
        .iter()
        .zip(&table.psi)
        .zip(&ratio)
        .filter(|((_, &p), r)| p > floor && r.is_finite())
        .map(|((&u, _), _)| u)
        .fold(None, |acc: Option<f64>, u| Some(acc.map_or(u, |b| b.max(u))));
    Ok(HeavyTailTable {
        u: u_grid.to_vec(),
        psi: table.psi,
        fi_survival,
        ratio,
        limit: 1.0 / safety_loading(m, c),
        applicable: m.is_heavy_tailed(),
        largest_reliable_u,
    })
}

/// `int e^{-su} d delta(u) = (rho / (1 + rho)) / (1 - (1 / (1 + rho)) (1 - l_Y1(s)) / (s E Y1))`.
pub fn delta_lst(m: &ReducedClModel, c: f64, s: f64) -> Result<f64> {
    let (a, d0) = ruin_at_zero(m, c)?;
    if s == 0.0 {
        return Ok(1.0);
    }
    let li = (1.0 - m.y1_lst(s)?) / (s * m.y1_mean);
    Ok(d0 / (1.0 - a * li))
}

/// Scalar summary of the analytic ruin quantities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuinReport {
    pub lambda: Scalar,
    pub y1_mean: Scalar,
    pub y1_second_moment: Option<Scalar>,
    pub rho: Scalar,
    pub psi0: Scalar,
    pub delta0: Scalar,
    pub expected_ruin_time_given_ruin_u0: Option<Scalar>,
    pub lundberg_epsilon: Option<Scalar>,
    pub cl_constant: Option<Scalar>,
    pub mean_deficit_u0: Option<Scalar>,
    pub psi_at_capital: Scalar,
    pub psi_grid: PsiTable,
}

/// Runs the scalar analytics plus the series on `u_grid`; `capital` must lie on
/// the lattice.
pub fn analyze(m: &ReducedClModel, c: f64, capital: f64, u_grid: &[f64], tol: f64) -> Result<RuinReport> {
    let (psi0, delta0) = ruin_at_zero(m, c)?;
    let rho = safety_loading(m, c);
    let tau = match expected_ruin_time_zero(m, c) {
        Ok(v) => Some(Scalar::closed_form(v)),
        Err(Error::InfiniteVariance) => None,
        Err(e) => return Err(e),
    };
    let eps = lundberg_exponent(m, c)?;
    let cl = cl_approximation(m, c)?;
    let psi_grid = psi_pollaczek_khinchin(m, c, u_grid, tol)?;
    let at_capital = psi_pollaczek_khinchin(m, c, &[capital], tol)?.psi[0];
    let second = m.y1_second_moment.is_finite().then_some(m.y1_second_moment);
    Ok(RuinReport {
        lambda: Scalar::closed_form(m.lambda),
        y1_mean: Scalar::closed_form(m.y1_mean),
        y1_second_moment: second.map(Scalar::closed_form),
        rho: Scalar::closed_form(rho),
        psi0: Scalar::closed_form(psi0),
        delta0: Scalar::closed_form(delta0),
        expected_ruin_time_given_ruin_u0: tau,
        lundberg_epsilon: eps.map(Scalar::closed_form),
        cl_constant: cl.map(Scalar::lattice),
        mean_deficit_u0: second.map(|s| Scalar::closed_form(s / (2.0 * m.y1_mean))),
        psi_at_capital: Scalar::lattice(at_capital),
        psi_grid,
    })
}
