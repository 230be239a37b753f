//! Reduction of a group-arrival, multi-type claim model to the equivalent scalar
//! Cramer-Lundberg model: intensity of non-empty groups, law of the total claim
//! per group `Y1` and its integrated tail.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{mass_power, ClaimDistribution, GriddedDistribution, LatticeSpec, GRID_TAIL_BOUND};
use crate::error::{invalid, Result};
use crate::group_models::{merge_streams, thin_empty, ArrivalSpec, Atom, GroupSizeModel};
use crate::numerics::convolve_truncated;

/// Full model: arrivals, count law(s), one claim law per type, premium rate and
/// initial capital.
///
/// For a single stream `groups` holds one joint law of dimension `d`; for
/// independent streams it holds `d` univariate laws, one per stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskModelSpec {
    pub arrivals: ArrivalSpec,
    pub groups: Vec<GroupSizeModel>,
    pub claims: Vec<ClaimDistribution>,
    pub premium_rate: f64,
    pub initial_capital: f64,
}

impl RiskModelSpec {
    pub fn validate(&self) -> Result<()> {
        self.arrivals.validate()?;
        let d = self.claims.len();
        if d == 0 {
            return Err(invalid("at least one claim type is required"));
        }
        match &self.arrivals {
            ArrivalSpec::SingleStream(_) => {
                if self.groups.len() != 1 {
                    return Err(invalid("a single stream needs exactly one joint group law"));
                }
                if self.groups[0].dim() != d {
                    return Err(invalid(format!(
                        "group law has {} claim types but {d} claim laws are given",
                        self.groups[0].dim()
                    )));
                }
            }
            ArrivalSpec::IndependentStreams(rates) => {
                if rates.len() != d || self.groups.len() != d {
                    return Err(invalid(format!(
                        "independent streams need one intensity and one count law per claim type ({d})"
                    )));
                }
                if self.groups.iter().any(|g| g.dim() != 1) {
                    return Err(invalid("per-stream count laws must be univariate"));
                }
            }
        }
        for c in &self.claims {
            c.validate()?;
        }
        if !(self.premium_rate > 0.0 && self.premium_rate.is_finite()) {
            return Err(invalid(format!("premium rate must be positive, got {}", self.premium_rate)));
        }
        if !(self.initial_capital >= 0.0 && self.initial_capital.is_finite()) {
            return Err(invalid(format!("initial capital must be nonnegative, got {}", self.initial_capital)));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.claims.len()
    }

    /// Single-stream view: group intensity and joint law, empty groups included.
    /// Independent streams are merged first.
    pub fn single_stream(&self) -> Result<(f64, GroupSizeModel)> {
        match &self.arrivals {
            ArrivalSpec::SingleStream(rate) => Ok((*rate, self.groups[0].clone())),
            ArrivalSpec::IndependentStreams(rates) => {
                let m = merge_streams(rates, &self.groups)?;
                Ok((m.total_intensity, m.merged))
            }
        }
    }

    /// Same model as one stream (empty groups kept).
    pub fn merged(&self) -> Result<Self> {
        let (rate, g) = self.single_stream()?;
        Ok(Self { arrivals: ArrivalSpec::SingleStream(rate), groups: vec![g], ..self.clone() })
    }

    /// Same model as one stream of non-empty groups only.
    pub fn thinned(&self) -> Result<Self> {
        let (rate, g) = self.single_stream()?;
        let (lambda, cond) = thin_empty(rate, &g)?;
        Ok(Self { arrivals: ArrivalSpec::SingleStream(lambda), groups: vec![cond], ..self.clone() })
    }

    /// Exact `(E Y1, E Y1^2)` of the total claim of a non-empty group.
    pub fn y1_moments(&self) -> Result<(f64, f64)> {
        let (_, g) = self.single_stream()?;
        let cond = g.condition_nonempty()?;
        mixture_moments(cond.atoms(), &self.claims)
    }

    /// Default lattice: step `0.01 E Y1`, reaching `E Y1 + 40 sd` (or `1000 E Y1`
    /// when the variance is infinite).
    pub fn default_lattice(&self) -> Result<LatticeSpec> {
        let (m, m2) = self.y1_moments()?;
        Ok(LatticeSpec::default_for(m, m2 - m * m))
    }
}

fn mixture_moments(atoms: &[Atom], claims: &[ClaimDistribution]) -> Result<(f64, f64)> {
    let means = claims.iter().map(|c| c.mean()).collect::<Result<Vec<_>>>()?;
    let vars = claims.iter().map(|c| c.variance()).collect::<Result<Vec<_>>>()?;
    let mut m1 = 0.0;
    let mut m2 = 0.0;
    for a in atoms {
        let mean: f64 = a.counts.iter().zip(&means).map(|(&u, m)| u as f64 * m).sum();
        let var: f64 = a
            .counts
            .iter()
            .zip(&vars)
            .filter(|(&u, _)| u > 0)
            .map(|(&u, v)| u as f64 * v)
            .sum();
        m1 += a.prob * mean;
        m2 += a.prob * (var + mean * mean);
    }
    Ok((m1, m2))
}

/// The equivalent scalar model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedClModel {
    /// Intensity of non-empty groups.
    pub lambda: f64,
    /// Intensity of all groups (empty ones included).
    pub lambda_tilde: f64,
    pub p0: f64,
    /// Count law given a non-empty group.
    pub groups: GroupSizeModel,
    pub claims: Vec<ClaimDistribution>,
    pub y1_mean: f64,
    /// `+inf` when some claim law has infinite variance.
    pub y1_second_moment: f64,
    pub y1_grid: GriddedDistribution,
    pub fi_grid: GriddedDistribution,
}

impl ReducedClModel {
    /// Mixture weights and count vectors of `Y1`.
    pub fn atoms(&self) -> &[Atom] {
        self.groups.atoms()
    }

    pub fn y1_variance(&self) -> f64 {
        self.y1_second_moment - self.y1_mean * self.y1_mean
    }

    pub fn lattice(&self) -> LatticeSpec {
        LatticeSpec { step: self.y1_grid.step(), points: self.y1_grid.len() }
    }

    pub fn is_heavy_tailed(&self) -> bool {
        self.claims.iter().any(|c| c.is_heavy_tailed())
    }

    /// `E[e^{-s Y1}]` through the group PGF composed with the per-type transforms.
    pub fn y1_lst(&self, s: f64) -> Result<f64> {
        let per_type = self.claims.iter().map(|c| c.lst(s)).collect::<Result<Vec<_>>>()?;
        self.groups.pgf(&per_type)
    }

    /// Largest left abscissa among the claim transforms (`None`: entire).
    pub fn lst_abscissa(&self) -> Option<f64> {
        let used: Vec<usize> = (0..self.claims.len())
            .filter(|&s| self.groups.atoms().iter().any(|a| a.counts[s] > 0))
            .collect();
        used.iter()
            .filter_map(|&s| self.claims[s].lst_abscissa())
            .fold(None, |acc: Option<f64>, a| Some(acc.map_or(a, |b| b.max(a))))
    }

    /// Lattice law of the total claim per group with empty groups kept
    /// (`P(Y~1 = 0) = p0`).
    pub fn empty_inclusive_y1_grid(&self) -> Result<GriddedDistribution> {
        let keep = 1.0 - self.p0;
        let mut masses: Vec<f64> = self.y1_grid.masses().iter().map(|m| keep * m).collect();
        masses[0] += self.p0;
        GriddedDistribution::from_parts(
            self.y1_grid.step(),
            masses,
            Some(keep * self.y1_grid.tail_mass()),
            self.p0,
            None,
        )
    }
}

/// Equilibrium law of a lattice law with exact mean `mean`:
/// cell masses `h S(x_k) / mean` (midpoint rule on the nodal survival), first
/// cell from the linear cdf over `[0, h]`. `tail_stop_loss` is
/// `E[(Y - b)^+]` at the upper tail-cell boundary and fixes the residual tail.
pub fn equilibrium_grid(grid: &GriddedDistribution, mean: f64, tail_stop_loss: f64) -> Result<GriddedDistribution> {
    if !(mean > 0.0 && mean.is_finite()) {
        return Err(crate::error::Error::InfiniteMean);
    }
    let h = grid.step();
    let n = grid.len();
    let surv = grid.survival_at_nodes();
    let atom = grid.atom();
    let f_quarter = atom + 0.25 * (grid.values()[1] - atom);
    let mut masses = Vec::with_capacity(n);
    masses.push(0.5 * h * (1.0 - f_quarter) / mean);
    for &s in &surv[1..] {
        masses.push(h * s / mean);
    }
    let tail = (tail_stop_loss / mean).clamp(0.0, 1.0);
    let body: f64 = masses.iter().sum();
    let scale = (1.0 - tail) / body;
    masses.iter_mut().for_each(|m| *m *= scale);
    GriddedDistribution::from_parts(h, masses, Some(tail), 0.0, None)
}

/// Stop-loss of the sum of `counts[s]` claims of each type at `x`; exact for a
/// single claim, one-big-jump form otherwise.
fn atom_stop_loss(counts: &[u32], claims: &[ClaimDistribution], means: &[f64], x: f64) -> Result<f64> {
    let total_mean: f64 = counts.iter().zip(means).map(|(&u, m)| u as f64 * m).sum();
    let mut sl = 0.0;
    for (s, &u) in counts.iter().enumerate() {
        if u == 0 {
            continue;
        }
        sl += u as f64 * claims[s].stop_loss(x - (total_mean - means[s]))?;
    }
    Ok(sl)
}

/// Per-type convolution powers for the exponents in `needed` (sorted), each
/// obtained from the previous one by a doubling power of the base.
fn powers_for(base: &[f64], needed: &BTreeSet<u32>, len: usize) -> Vec<(u32, Vec<f64>)> {
    let mut out: Vec<(u32, Vec<f64>)> = Vec::with_capacity(needed.len());
    for &u in needed {
        if u == 0 {
            continue;
        }
        let next = match out.last() {
            None => mass_power(base, u, len),
            Some((prev_u, prev)) => {
                let step = mass_power(base, u - prev_u, len);
                convolve_truncated(prev, &step, len)
            }
        };
        out.push((u, next));
    }
    out
}

fn power(table: &[(u32, Vec<f64>)], u: u32) -> &[f64] {
    let idx = table.binary_search_by_key(&u, |(k, _)| *k).expect("power precomputed");
    &table[idx].1
}

/// Mixture over atoms (sorted, sharing prefixes) of per-type power products.
fn mixture(level: usize, atoms: &[(&[u32], f64)], powers: &[Vec<(u32, Vec<f64>)>], len: usize) -> Vec<f64> {
    let d = powers.len();
    let groups = split_by_level(level, atoms);
    if level + 1 == d {
        let mut acc = vec![0.0; len];
        for (v, sub) in groups {
            let w: f64 = sub.iter().map(|a| a.1).sum();
            if v == 0 {
                acc[0] += w;
            } else {
                for (o, p) in acc.iter_mut().zip(power(&powers[level], v)) {
                    *o += w * p;
                }
            }
        }
        return acc;
    }
    let parts: Vec<Vec<f64>> = if level == 0 {
        groups
            .par_iter()
            .map(|(v, sub)| combine(level, *v, sub, powers, len))
            .collect()
    } else {
        groups.iter().map(|(v, sub)| combine(level, *v, sub, powers, len)).collect()
    };
    let mut acc = vec![0.0; len];
    for p in parts {
        for (o, x) in acc.iter_mut().zip(&p) {
            *o += x;
        }
    }
    acc
}

fn combine(level: usize, v: u32, sub: &[(&[u32], f64)], powers: &[Vec<(u32, Vec<f64>)>], len: usize) -> Vec<f64> {
    let inner = mixture(level + 1, sub, powers, len);
    if v == 0 {
        inner
    } else {
        convolve_truncated(power(&powers[level], v), &inner, len)
    }
}

type AtomRef<'a> = (&'a [u32], f64);

fn split_by_level<'a, 'b>(level: usize, atoms: &'b [AtomRef<'a>]) -> Vec<(u32, &'b [AtomRef<'a>])> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < atoms.len() {
        let v = atoms[start].0[level];
        let mut end = start + 1;
        while end < atoms.len() && atoms[end].0[level] == v {
            end += 1;
        }
        out.push((v, &atoms[start..end]));
        start = end;
    }
    out
}

/// Builds the equivalent scalar model on the given lattice.
pub fn reduce(spec: &RiskModelSpec, lattice: LatticeSpec) -> Result<ReducedClModel> {
    spec.validate()?;
    let lattice = LatticeSpec::new(lattice.step, lattice.points)?;
    let (lambda_tilde, with_empties) = spec.single_stream()?;
    let p0 = with_empties.p0();
    let (lambda, cond) = thin_empty(lambda_tilde, &with_empties)?;
    let (y1_mean, y1_second_moment) = mixture_moments(cond.atoms(), &spec.claims)?;
    let means = spec.claims.iter().map(|c| c.mean()).collect::<Result<Vec<_>>>()?;

    let d = spec.dim();
    let len = lattice.points;
    let bases = spec
        .claims
        .iter()
        .map(|c| c.discretize(lattice))
        .collect::<Result<Vec<_>>>()?;
    let needed: Vec<BTreeSet<u32>> = (0..d)
        .map(|s| cond.atoms().iter().map(|a| a.counts[s]).collect())
        .collect();
    let powers: Vec<Vec<(u32, Vec<f64>)>> = (0..d)
        .into_par_iter()
        .map(|s| powers_for(bases[s].masses(), &needed[s], len))
        .collect();
    let atom_refs: Vec<(&[u32], f64)> = cond.atoms().iter().map(|a| (a.counts.as_slice(), a.prob)).collect();
    let masses = mixture(0, &atom_refs, &powers, len);
    let y1_grid = GriddedDistribution::from_masses(lattice.step, masses, 0.0, None)?;
    y1_grid.check_tail(GRID_TAIL_BOUND)?;

    let boundary = (len as f64 - 0.5) * lattice.step;
    let mut tail_sl = 0.0;
    for a in cond.atoms() {
        tail_sl += a.prob * atom_stop_loss(&a.counts, &spec.claims, &means, boundary)?;
    }
    let fi_grid = equilibrium_grid(&y1_grid, y1_mean, tail_sl)?;
    Ok(ReducedClModel {
        lambda,
        lambda_tilde,
        p0,
        groups: cond,
        claims: spec.claims.clone(),
        y1_mean,
        y1_second_moment,
        y1_grid,
        fi_grid,
    })
}

/// One compared quantity of an equivalence check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceRow {
    pub quantity: String,
    pub a: f64,
    pub b: f64,
    pub delta: f64,
    pub tolerance: f64,
    pub agree: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub rows: Vec<EquivalenceRow>,
    pub equivalent: bool,
}

impl EquivalenceReport {
    pub fn verdict(&self) -> &'static str {
        if self.equivalent {
            "EQUIVALENT"
        } else {
            "DIFFERENT"
        }
    }
}

/// Relative tolerance for exactly computed quantities.
pub const EXACT_TOLERANCE: f64 = 1e-8;
/// Sup-distance tolerance for integrated-tail lattices.
pub const LATTICE_TOLERANCE: f64 = 1e-6;

/// Compares the aggregate-claim layers of two models (premium and capital are
/// ignored): non-empty intensity, `Y1` moments, `lambda E Y1`, `Y1` transform on
/// an `s`-grid, and the integrated-tail lattices.
pub fn equivalence_report(a: &RiskModelSpec, b: &RiskModelSpec, lattice: Option<LatticeSpec>) -> Result<EquivalenceReport> {
    let lattice = match lattice {
        Some(l) => l,
        None => {
            let la = a.default_lattice()?;
            let lb = b.default_lattice()?;
            let step = la.step.min(lb.step);
            let end = la.end().max(lb.end());
            LatticeSpec::new(step, ((end / step).ceil() as usize + 1).min(1 << 21))?
        }
    };
    let ra = reduce(a, lattice)?;
    let rb = reduce(b, lattice)?;
    let mut rows = Vec::new();
    let mut push = |quantity: String, x: f64, y: f64, tol: f64| {
        let delta = (x - y).abs();
        let scale = x.abs().max(y.abs()).max(1.0);
        rows.push(EquivalenceRow { quantity, a: x, b: y, delta, tolerance: tol, agree: delta <= tol * scale });
    };
    push("lambda".into(), ra.lambda, rb.lambda, EXACT_TOLERANCE);
    push("E[Y1]".into(), ra.y1_mean, rb.y1_mean, EXACT_TOLERANCE);
    push("E[Y1^2]".into(), ra.y1_second_moment, rb.y1_second_moment, EXACT_TOLERANCE);
    push("lambda*E[Y1]".into(), ra.lambda * ra.y1_mean, rb.lambda * rb.y1_mean, EXACT_TOLERANCE);
    for s in [0.1, 0.5, 1.0, 2.0] {
        push(format!("lst_Y1({s})"), ra.y1_lst(s)?, rb.y1_lst(s)?, EXACT_TOLERANCE);
    }
    push("sup|F_I(a)-F_I(b)|".into(), ra.fi_grid.sup_distance(&rb.fi_grid), 0.0, LATTICE_TOLERANCE);
    let equivalent = rows.iter().all(|r| r.agree);
    Ok(EquivalenceReport { rows, equivalent })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group_models::GroupFamily;

    fn exp_spec(groups: GroupSizeModel, claims: Vec<ClaimDistribution>) -> RiskModelSpec {
        RiskModelSpec {
            arrivals: ArrivalSpec::SingleStream(1.0),
            groups: vec![groups],
            claims,
            premium_rate: 3.0,
            initial_capital: 0.0,
        }
    }

    fn fixed(n: u32) -> GroupSizeModel {
        GroupSizeModel::from_atoms(1, vec![Atom { counts: vec![n], prob: 1.0 }]).unwrap()
    }

    #[test]
    fn single_claim_groups_reduce_to_the_claim_law() {
        let d = ClaimDistribution::exponential(1.0);
        let spec = exp_spec(fixed(1), vec![d.clone()]);
        let r = reduce(&spec, LatticeSpec::new(0.01, 4000).unwrap()).unwrap();
        for k in (0..4000).step_by(97) {
            assert!((r.y1_grid.values()[k] - d.cdf(0.01 * k as f64)).abs() < 1e-4);
        }
        assert_eq!(r.y1_mean, 1.0);
    }

    #[test]
    fn pairs_of_exponential_claims_give_erlang() {
        let spec = exp_spec(fixed(2), vec![ClaimDistribution::exponential(1.0)]);
        let r = reduce(&spec, LatticeSpec::new(0.01, 5000).unwrap()).unwrap();
        let erlang = ClaimDistribution::Erlang { shape: 2, rate: 1.0 };
        for k in (0..5000).step_by(101) {
            assert!((r.y1_grid.values()[k] - erlang.cdf(0.01 * k as f64)).abs() < 1e-4);
        }
        assert_eq!(r.y1_mean, 2.0);
        assert_eq!(r.y1_second_moment, 6.0);
        assert!((r.y1_lst(1.0).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(r.y1_lst(0.0).unwrap(), 1.0);
        assert!((r.y1_grid.lst(0.5) - r.y1_lst(0.5).unwrap()).abs() < 1e-3);
        // integrated tail of Erlang(2,1): 1 - (1 + x/2) e^{-x}
        for k in (0..3000).step_by(101) {
            let x = 0.01 * k as f64;
            let want = 1.0 - (1.0 + 0.5 * x) * (-x).exp();
            assert!((r.fi_grid.values()[k] - want).abs() < 1e-4, "x={x}");
        }
    }

    #[test]
    fn two_type_mixture_mean() {
        let g = GroupSizeModel::from_atoms(
            2,
            vec![Atom { counts: vec![1, 0], prob: 0.5 }, Atom { counts: vec![0, 1], prob: 0.5 }],
        )
        .unwrap();
        let spec = exp_spec(g, vec![ClaimDistribution::exponential(1.0), ClaimDistribution::exponential(2.0)]);
        let r = reduce(&spec, spec.default_lattice().unwrap()).unwrap();
        assert!((r.y1_mean - 0.75).abs() < 1e-15);
        assert!((r.y1_grid.mean() - 0.75).abs() < 1e-4);
    }

    #[test]
    fn cross_type_covariance_enters_the_second_moment() {
        // counts (1,1) w.p. 1/2 and (0,0) otherwise: Y1 = Y_a + Y_b
        let g = GroupSizeModel::from_atoms(
            2,
            vec![Atom { counts: vec![1, 1], prob: 0.5 }, Atom { counts: vec![0, 0], prob: 0.5 }],
        )
        .unwrap();
        let spec = exp_spec(g, vec![ClaimDistribution::exponential(1.0), ClaimDistribution::exponential(2.0)]);
        let r = reduce(&spec, spec.default_lattice().unwrap()).unwrap();
        // E (Ya + Yb)^2 = 2 + 2 * 1 * 0.5 + 0.5
        assert!((r.y1_second_moment - 3.5).abs() < 1e-14);
        assert!((r.y1_grid.second_moment() - 3.5).abs() < 1e-3);
        assert!((r.p0 - 0.5).abs() < 1e-15);
        assert!((r.lambda - 0.5).abs() < 1e-15);
    }

    #[test]
    fn empty_groups_scale_the_survival() {
        let g = GroupFamily::NegativeMultinomial { n: 1, p: vec![0.3, 0.2] }.build().unwrap();
        let spec = exp_spec(g, vec![ClaimDistribution::exponential(1.0), ClaimDistribution::exponential(0.5)]);
        let r = reduce(&spec, spec.default_lattice().unwrap()).unwrap();
        let tilde = r.empty_inclusive_y1_grid().unwrap();
        let (st, s) = (tilde.survival_at_nodes(), r.y1_grid.survival_at_nodes());
        for k in 1..s.len() {
            assert!((st[k] - (1.0 - r.p0) * s[k]).abs() < 1e-14);
        }
        let tilde_mean = (1.0 - r.p0) * r.y1_mean;
        let fi_tilde = equilibrium_grid(&tilde, tilde_mean, (1.0 - r.p0) * r.fi_grid.tail_mass() * r.y1_mean).unwrap();
        assert!(fi_tilde.sup_distance(&r.fi_grid) < 1e-12);
        assert!((r.lambda * r.y1_mean - r.lambda_tilde * tilde_mean).abs() < 1e-12);
    }

    #[test]
    fn thinned_and_merged_forms_are_equivalent() {
        let g = GroupFamily::IndependentBernoulli { q: vec![0.5, 0.4] }.build().unwrap();
        let spec = exp_spec(g, vec![ClaimDistribution::exponential(1.0), ClaimDistribution::exponential(2.0)]);
        let rep = equivalence_report(&spec, &spec.thinned().unwrap(), None).unwrap();
        assert!(rep.equivalent, "{rep:?}");

        let streams = RiskModelSpec {
            arrivals: ArrivalSpec::IndependentStreams(vec![1.0, 2.0]),
            groups: vec![
                GroupFamily::IndependentNegBinomial { n: vec![1], p: vec![0.5] }.build().unwrap(),
                GroupFamily::SingleTypeGeneric { pmf: vec![0.3, 0.7] }.build().unwrap(),
            ],
            claims: vec![ClaimDistribution::exponential(1.0), ClaimDistribution::exponential(2.0)],
            premium_rate: 10.0,
            initial_capital: 0.0,
        };
        let mut merged = streams.merged().unwrap();
        merged.premium_rate = 4.0;
        let rep = equivalence_report(&streams, &merged, None).unwrap();
        assert!(rep.equivalent, "{rep:?}");

        let mut other = merged.clone();
        other.claims[0] = ClaimDistribution::exponential(0.5);
        let rep = equivalence_report(&streams, &other, None).unwrap();
        assert_eq!(rep.verdict(), "DIFFERENT");
        assert!(!rep.rows.iter().find(|r| r.quantity == "E[Y1]").unwrap().agree);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let spec = exp_spec(fixed(1), vec![ClaimDistribution::exponential(1.0); 2]);
        assert!(spec.validate().is_err());
    }
}
