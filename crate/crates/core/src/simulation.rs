//! Monte Carlo: direct surplus paths of the group model and the ladder-height
//! (compound geometric) estimator of the ruin probability.
//!
//! Replication `i` draws from its own ChaCha8 stream `seed`, stream
//! `i * stream_stride`, so results do not depend on the thread count. Chunks
//! are reduced in index order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, WeightedAliasIndex};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::ClaimDistribution;
use crate::error::{invalid, Error, Result};
use crate::group_models::ArrivalSpec;
use crate::reduction::{ReducedClModel, RiskModelSpec};
use crate::ruin::{lundberg_exponent, ruin_at_zero};

const CHUNK: u64 = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub replications: u64,
    /// Time cap of a surplus path.
    pub horizon: f64,
    pub seed: u64,
    /// Replication `i` uses rng stream `i * stream_stride`.
    pub stream_stride: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self { replications: 100_000, horizon: 10_000.0, seed: 1, stream_stride: 1 }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(invalid("at least one replication is required"));
        }
        if !(self.horizon > 0.0) {
            return Err(invalid(format!("horizon must be positive, got {}", self.horizon)));
        }
        if self.stream_stride == 0 {
            return Err(invalid("stream stride must be positive"));
        }
        Ok(())
    }

    /// Generator of replication `i`.
    pub fn rng(&self, i: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(i.wrapping_mul(self.stream_stride));
        rng
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateWithCI {
    pub estimate: f64,
    pub std_error: f64,
    pub replications: u64,
}

impl EstimateWithCI {
    /// Proportion estimate with binomial standard error.
    pub fn proportion(hits: u64, n: u64) -> Self {
        let p = hits as f64 / n as f64;
        Self { estimate: p, std_error: (p * (1.0 - p) / n as f64).sqrt(), replications: n }
    }

    /// Sample mean with standard error `sd / sqrt(n)`.
    pub fn mean_of(xs: &[f64]) -> Option<Self> {
        let n = xs.len();
        if n == 0 {
            return None;
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Some(Self { estimate: mean, std_error: (var / n as f64).sqrt(), replications: n as u64 })
    }

    /// `|estimate - target|` in standard errors (infinite when `se = 0` and they differ).
    pub fn z_score(&self, target: f64) -> f64 {
        let d = (self.estimate - target).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.std_error
        }
    }
}

/// `|a - b| / sqrt(se_a^2 + se_b^2)`.
pub fn pooled_z(a: &EstimateWithCI, b: &EstimateWithCI) -> f64 {
    let d = (a.estimate - b.estimate).abs();
    if d == 0.0 {
        return 0.0;
    }
    d / (a.std_error.powi(2) + b.std_error.powi(2)).sqrt()
}

/// Runs `f(i, rng_i)` for every replication in parallel, keeping index order.
fn replicate<T, F>(cfg: &SimulationConfig, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng) -> T + Sync,
{
    let n = cfg.replications;
    let chunks: Vec<u64> = (0..n.div_ceil(CHUNK)).collect();
    chunks
        .par_iter()
        .map(|&c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(n);
            (lo..hi).map(|i| f(&mut cfg.rng(i))).collect::<Vec<T>>()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

struct CountSampler {
    counts: Vec<Vec<u32>>,
    index: Option<WeightedAliasIndex<f64>>,
}

impl CountSampler {
    fn new(atoms: &[crate::group_models::Atom]) -> Result<Self> {
        let counts: Vec<Vec<u32>> = atoms.iter().map(|a| a.counts.clone()).collect();
        let index = if atoms.len() > 1 {
            Some(
                WeightedAliasIndex::new(atoms.iter().map(|a| a.prob).collect())
                    .map_err(|e| invalid(format!("cannot sample group law: {e}")))?,
            )
        } else {
            None
        };
        Ok(Self { counts, index })
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> &[u32] {
        match &self.index {
            Some(ix) => &self.counts[ix.sample(rng)],
            None => &self.counts[0],
        }
    }
}

/// Group arrival streams with their count samplers.
struct Streams {
    rates: Vec<f64>,
    samplers: Vec<CountSampler>,
    /// Claim type fed by each stream (`None`: joint single stream).
    types: Vec<Option<usize>>,
}

impl Streams {
    fn new(spec: &RiskModelSpec) -> Result<Self> {
        spec.validate()?;
        match &spec.arrivals {
            ArrivalSpec::SingleStream(rate) => Ok(Self {
                rates: vec![*rate],
                samplers: vec![CountSampler::new(spec.groups[0].atoms())?],
                types: vec![None],
            }),
            ArrivalSpec::IndependentStreams(rates) => Ok(Self {
                rates: rates.clone(),
                samplers: spec.groups.iter().map(|g| CountSampler::new(g.atoms())).collect::<Result<_>>()?,
                types: (0..rates.len()).map(Some).collect(),
            }),
        }
    }
}

/// One group arrival along a path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEvent {
    pub time: f64,
    pub counts: Vec<u32>,
    pub group_claim: f64,
    pub surplus: f64,
}

/// How a surplus path ended.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PathEnd {
    Ruined {
        time: f64,
        /// `-R(tau)`.
        deficit: f64,
        /// `R(tau-)`.
        surplus_before: f64,
        /// Total claim of the group causing ruin.
        claim: f64,
    },
    /// Surplus reached the escape level; counted as survival.
    Escaped,
    /// Horizon reached without ruin or escape.
    Censored,
}

fn exp_gap<R: Rng>(rng: &mut R, rate: f64) -> f64 {
    -(-rng.gen::<f64>()).ln_1p() / rate
}

#[allow(clippy::too_many_arguments)]
fn run_path<R: Rng>(
    streams: &Streams,
    claims: &[ClaimDistribution],
    c: f64,
    u: f64,
    horizon: f64,
    escape: Option<f64>,
    rng: &mut R,
    mut log: Option<&mut Vec<PathEvent>>,
) -> PathEnd {
    let d = claims.len();
    let mut clocks: Vec<f64> = streams.rates.iter().map(|&r| exp_gap(rng, r)).collect();
    let mut paid = 0.0;
    let mut counts = vec![0u32; d];
    loop {
        let (s, &t) = clocks
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("at least one stream");
        if t > horizon {
            return PathEnd::Censored;
        }
        let drawn = streams.samplers[s].draw(rng);
        match streams.types[s] {
            None => counts.copy_from_slice(drawn),
            Some(ty) => {
                counts.iter_mut().for_each(|x| *x = 0);
                counts[ty] = drawn[0];
            }
        }
        let mut group = 0.0;
        for (ty, &n) in counts.iter().enumerate() {
            for _ in 0..n {
                group += claims[ty].sample(rng);
            }
        }
        let before = u + c * t - paid;
        paid += group;
        let after = before - group;
        if let Some(log) = log.as_deref_mut() {
            log.push(PathEvent { time: t, counts: counts.clone(), group_claim: group, surplus: after });
        }
        if after < 0.0 {
            return PathEnd::Ruined { time: t, deficit: -after, surplus_before: before, claim: group };
        }
        if let Some(level) = escape {
            if after >= level {
                return PathEnd::Escaped;
            }
        }
        clocks[s] = t + exp_gap(rng, streams.rates[s]);
    }
}

/// Escape level `u + ln(1e5 / psi(0)) / eps`: beyond it the Lundberg bound puts
/// later ruin below `1e-5 psi(0) e^{-eps u}`. `None` without a Lundberg exponent.
pub fn escape_level(m: &ReducedClModel, c: f64, u: f64) -> Result<Option<f64>> {
    let (psi0, _) = ruin_at_zero(m, c)?;
    Ok(lundberg_exponent(m, c)?.map(|eps| u + (1e5 / psi0).ln() / eps))
}

/// One surplus path with its event log.
pub fn simulate_path<R: Rng>(
    spec: &RiskModelSpec,
    cfg: &SimulationConfig,
    escape: Option<f64>,
    rng: &mut R,
) -> Result<(PathEnd, Vec<PathEvent>)> {
    cfg.validate()?;
    let streams = Streams::new(spec)?;
    let mut log = Vec::new();
    let end = run_path(
        &streams,
        &spec.claims,
        spec.premium_rate,
        spec.initial_capital,
        cfg.horizon,
        escape,
        rng,
        Some(&mut log),
    );
    Ok((end, log))
}

/// Ends of `cfg.replications` independent paths started at capital `u`.
pub fn simulate_paths(spec: &RiskModelSpec, u: f64, cfg: &SimulationConfig, escape: Option<f64>) -> Result<Vec<PathEnd>> {
    cfg.validate()?;
    let streams = Streams::new(spec)?;
    let c = spec.premium_rate;
    Ok(replicate(cfg, |rng| run_path(&streams, &spec.claims, c, u, cfg.horizon, escape, rng, None)))
}

/// Ruin statistics of a batch of paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSummary {
    pub ruin_probability: EstimateWithCI,
    pub ruined: u64,
    /// Fraction of paths that neither ruined nor escaped before the horizon.
    pub censored_fraction: f64,
    /// Conditional mean ruin time given ruin.
    pub ruin_time: Option<EstimateWithCI>,
}

pub fn summarize(ends: &[PathEnd]) -> PathSummary {
    let n = ends.len() as u64;
    let times: Vec<f64> = ends
        .iter()
        .filter_map(|e| match e {
            PathEnd::Ruined { time, .. } => Some(*time),
            _ => None,
        })
        .collect();
    let censored = ends.iter().filter(|e| matches!(e, PathEnd::Censored)).count();
    PathSummary {
        ruin_probability: EstimateWithCI::proportion(times.len() as u64, n),
        ruined: times.len() as u64,
        censored_fraction: censored as f64 / n as f64,
        ruin_time: EstimateWithCI::mean_of(&times),
    }
}

/// Path estimate of `psi(u)` (escape rule from the Lundberg exponent when it
/// exists, horizon truncation otherwise).
pub fn estimate_psi_path(spec: &RiskModelSpec, m: &ReducedClModel, u: f64, cfg: &SimulationConfig) -> Result<PathSummary> {
    let escape = escape_level(m, spec.premium_rate, u)?;
    Ok(summarize(&simulate_paths(spec, u, cfg, escape)?))
}

/// Conditional mean ruin time `E[tau(u) | tau(u) < inf]` from paths, with the
/// censored fraction disclosed.
pub fn estimate_ruin_time(spec: &RiskModelSpec, m: &ReducedClModel, cfg: &SimulationConfig, u: f64) -> Result<(EstimateWithCI, f64)> {
    let s = estimate_psi_path(spec, m, u, cfg)?;
    let est = s.ruin_time.ok_or(Error::NoRuinObserved)?;
    Ok((est, s.censored_fraction))
}

/// Ladder-height estimator of `psi(u)` at each capital in `u_values`: the
/// maximal loss is a geometric number (success probability `delta(0)`) of
/// integrated-tail draws (lattice inverse cdf).
pub fn estimate_psi_ladder_grid(m: &ReducedClModel, c: f64, u_values: &[f64], cfg: &SimulationConfig) -> Result<Vec<EstimateWithCI>> {
    cfg.validate()?;
    let (a, _) = ruin_at_zero(m, c)?;
    let fi = &m.fi_grid;
    let losses = replicate(cfg, |rng| {
        let mut total = 0.0;
        while rng.gen::<f64>() < a {
            total += fi.quantile(rng.gen::<f64>());
        }
        total
    });
    Ok(u_values
        .iter()
        .map(|&u| EstimateWithCI::proportion(losses.iter().filter(|&&l| l > u).count() as u64, cfg.replications))
        .collect())
}

pub fn estimate_psi_ladder(m: &ReducedClModel, c: f64, u: f64, cfg: &SimulationConfig) -> Result<EstimateWithCI> {
    Ok(estimate_psi_ladder_grid(m, c, &[u], cfg)?[0])
}

/// Ruin-related samples from paths started at zero capital.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeficitSample {
    pub deficits: Vec<f64>,
    pub surplus_before: Vec<f64>,
    pub causing_claims: Vec<f64>,
    /// Kolmogorov distance of the deficits from the lattice integrated tail.
    pub ks_distance: f64,
    /// Asymptotic 1% critical value `1.628 / sqrt(n)`.
    pub ks_critical_1pct: f64,
}

pub fn empirical_deficit(spec: &RiskModelSpec, m: &ReducedClModel, cfg: &SimulationConfig) -> Result<DeficitSample> {
    let escape = escape_level(m, spec.premium_rate, 0.0)?;
    let ends = simulate_paths(spec, 0.0, cfg, escape)?;
    let mut deficits = Vec::new();
    let mut surplus_before = Vec::new();
    let mut causing_claims = Vec::new();
    for e in &ends {
        if let PathEnd::Ruined { deficit, surplus_before: s, claim, .. } = *e {
            deficits.push(deficit);
            surplus_before.push(s);
            causing_claims.push(claim);
        }
    }
    if deficits.is_empty() {
        return Err(Error::NoRuinObserved);
    }
    let ks_distance = ks_distance(&deficits, |x| m.fi_grid.cdf(x));
    let ks_critical_1pct = 1.628 / (deficits.len() as f64).sqrt();
    Ok(DeficitSample { deficits, surplus_before, causing_claims, ks_distance, ks_critical_1pct })
}

/// `sup_x |F_n(x) - F(x)|` of a sample against a continuous cdf.
pub fn ks_distance<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Per-type claim counts `N_{c,s}(t)` over `[0, t]`, sample means with errors.
pub fn simulate_claim_counts(spec: &RiskModelSpec, t: f64, cfg: &SimulationConfig) -> Result<Vec<EstimateWithCI>> {
    cfg.validate()?;
    let streams = Streams::new(spec)?;
    let d = spec.dim();
    let rows = replicate(cfg, |rng| {
        let mut totals = vec![0.0; d];
        for (s, &rate) in streams.rates.iter().enumerate() {
            let mut clock = exp_gap(rng, rate);
            while clock <= t {
                let drawn = streams.samplers[s].draw(rng);
                match streams.types[s] {
                    None => totals.iter_mut().zip(drawn).for_each(|(x, &n)| *x += n as f64),
                    Some(ty) => totals[ty] += drawn[0] as f64,
                }
                clock += exp_gap(rng, rate);
            }
        }
        totals
    });
    Ok((0..d)
        .map(|s| {
            let col: Vec<f64> = rows.iter().map(|r| r[s]).collect();
            EstimateWithCI::mean_of(&col).expect("replications >= 1")
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::LatticeSpec;
    use crate::group_models::{Atom, GroupFamily, GroupSizeModel};
    use crate::reduction::reduce;

    fn exp_spec(c: f64, u: f64) -> RiskModelSpec {
        RiskModelSpec {
            arrivals: ArrivalSpec::SingleStream(1.0),
            groups: vec![GroupSizeModel::from_atoms(1, vec![Atom { counts: vec![1], prob: 1.0 }]).unwrap()],
            claims: vec![ClaimDistribution::exponential(1.0)],
            premium_rate: c,
            initial_capital: u,
        }
    }

    fn cfg(n: u64, seed: u64) -> SimulationConfig {
        SimulationConfig { replications: n, horizon: 1e4, seed, stream_stride: 1 }
    }

    #[test]
    fn paths_are_reproducible() {
        let spec = exp_spec(2.0, 1.0);
        let c = cfg(10, 42);
        let (e1, l1) = simulate_path(&spec, &c, Some(30.0), &mut c.rng(3)).unwrap();
        let (e2, l2) = simulate_path(&spec, &c, Some(30.0), &mut c.rng(3)).unwrap();
        assert_eq!(e1, e2);
        assert_eq!(l1, l2);
        assert!(!l1.is_empty());
    }

    #[test]
    fn parallel_and_serial_runs_agree() {
        let spec = exp_spec(2.0, 0.0);
        let c = cfg(5000, 9);
        let par = simulate_paths(&spec, 0.0, &c, Some(25.0)).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let ser = pool.install(|| simulate_paths(&spec, 0.0, &c, Some(25.0)).unwrap());
        assert_eq!(par, ser);
    }

    #[test]
    fn huge_premium_rarely_ruins() {
        let spec = exp_spec(50.0, 5.0);
        let s = summarize(&simulate_paths(&spec, 5.0, &cfg(20_000, 1), Some(60.0)).unwrap());
        assert!(s.ruin_probability.estimate < 1e-3);
    }

    #[test]
    fn ladder_estimator_matches_closed_form() {
        let spec = exp_spec(2.0, 0.0);
        let m = reduce(&spec, LatticeSpec::new(0.01, 4001).unwrap()).unwrap();
        let est = estimate_psi_ladder_grid(&m, 2.0, &[0.0, 1.0], &cfg(200_000, 5)).unwrap();
        assert!(est[0].z_score(0.5) < 4.0);
        assert!(est[1].z_score(0.5 * (-0.5f64).exp()) < 4.0);
    }

    #[test]
    fn ruin_time_and_counts() {
        let spec = RiskModelSpec { claims: vec![ClaimDistribution::exponential(3.0)], premium_rate: 1.0, ..exp_spec(1.0, 0.0) };
        let m = reduce(&spec, LatticeSpec::new(0.005, 3000).unwrap()).unwrap();
        let (t, censored) = estimate_ruin_time(&spec, &m, &cfg(100_000, 3), 0.0).unwrap();
        assert!(t.z_score(0.5) < 4.0, "{t:?}");
        assert!(censored < 1e-3);

        let g = GroupFamily::IndependentBernoulli { q: vec![0.5, 0.6] }.build().unwrap();
        let spec = RiskModelSpec {
            arrivals: ArrivalSpec::SingleStream(2.0),
            groups: vec![g.clone()],
            claims: vec![ClaimDistribution::exponential(1.0); 2],
            premium_rate: 5.0,
            initial_capital: 0.0,
        };
        let thinned = spec.thinned().unwrap();
        for sp in [&spec, &thinned] {
            let counts = simulate_claim_counts(sp, 5.0, &cfg(40_000, 8)).unwrap();
            assert!(counts[0].z_score(2.0 * 5.0 * 0.5) < 4.0);
            assert!(counts[1].z_score(2.0 * 5.0 * 0.6) < 4.0);
        }
    }

    #[test]
    fn ks_distance_of_a_perfect_sample() {
        let xs: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        assert!((ks_distance(&xs, |x| x.clamp(0.0, 1.0)) - 0.005).abs() < 1e-12);
    }
}
