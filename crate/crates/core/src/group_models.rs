//! Joint laws of the claim-count vector of one group: families, PGF, empty-group
//! probability, conditioning on non-empty groups and merging of independent
//! arrival streams.

use std::collections::BTreeMap;
use std::ops::{Add, Div, Mul, Sub};

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Infinite-support count families are cut at the first `R` whose tail is below this.
pub const COUNT_TRUNCATION_TAIL: f64 = 1e-10;

const MASS_TOLERANCE: f64 = 1e-9;

/// One support point of a joint count law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub counts: Vec<u32>,
    pub prob: f64,
}

impl Atom {
    pub fn is_empty_group(&self) -> bool {
        self.counts.iter().all(|&u| u == 0)
    }

    pub fn total(&self) -> u32 {
        self.counts.iter().sum()
    }
}

/// Finitely supported joint law of `(U_1, ..., U_d)`, stored as a sorted atom list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSizeModel {
    dim: usize,
    atoms: Vec<Atom>,
    label: String,
    /// Count level at which an infinite-support family was truncated.
    truncated_at: Option<u32>,
}

/// Arrival mode of the groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "intensities", rename_all = "kebab-case")]
pub enum ArrivalSpec {
    /// One Poisson stream of groups with the given intensity.
    SingleStream(f64),
    /// One independent Poisson stream per claim type.
    IndependentStreams(Vec<f64>),
}

impl ArrivalSpec {
    pub fn validate(&self) -> Result<()> {
        let rates: &[f64] = match self {
            Self::SingleStream(r) => std::slice::from_ref(r),
            Self::IndependentStreams(r) => r,
        };
        if rates.is_empty() {
            return Err(invalid("at least one arrival intensity is required"));
        }
        for &r in rates {
            if !(r > 0.0 && r.is_finite()) {
                return Err(invalid(format!("arrival intensities must be positive, got {r}")));
            }
        }
        Ok(())
    }

    pub fn total_intensity(&self) -> f64 {
        match self {
            Self::SingleStream(r) => *r,
            Self::IndependentStreams(r) => r.iter().sum(),
        }
    }
}

impl GroupSizeModel {
    /// Builds a model from explicit atoms. Duplicate count vectors are merged,
    /// zero-probability atoms dropped; masses must sum to one within `1e-9` and
    /// are renormalized.
    pub fn from_atoms(dim: usize, atoms: Vec<Atom>) -> Result<Self> {
        Self::build(dim, atoms, "atoms", None)
    }

    fn build(dim: usize, atoms: Vec<Atom>, label: &str, truncated_at: Option<u32>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("group model needs at least one claim type"));
        }
        let mut merged: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
        for a in atoms {
            if a.counts.len() != dim {
                return Err(invalid(format!(
                    "atom {:?} has {} coordinates, expected {dim}",
                    a.counts,
                    a.counts.len()
                )));
            }
            if !(a.prob >= 0.0 && a.prob.is_finite()) {
                return Err(invalid(format!("atom probability must be nonnegative, got {}", a.prob)));
            }
            *merged.entry(a.counts).or_insert(0.0) += a.prob;
        }
        let total: f64 = merged.values().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(invalid(format!("group pmf sums to {total}, expected 1")));
        }
        let atoms: Vec<Atom> = merged
            .into_iter()
            .filter(|(_, p)| *p > 0.0)
            .map(|(counts, p)| Atom { counts, prob: p / total })
            .collect();
        Ok(Self { dim, atoms, label: label.to_string(), truncated_at })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn truncated_at(&self) -> Option<u32> {
        self.truncated_at
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.prob).sum()
    }

    /// Probability of an empty group.
    pub fn p0(&self) -> f64 {
        self.atoms.iter().filter(|a| a.is_empty_group()).map(|a| a.prob).sum()
    }

    /// `E[prod_s z_s^{U_s}]`.
    pub fn pgf(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.dim {
            return Err(invalid(format!("pgf needs {} arguments, got {}", self.dim, z.len())));
        }
        Ok(self
            .atoms
            .iter()
            .map(|a| a.prob * a.counts.iter().zip(z).map(|(&u, &zs)| zs.powi(u as i32)).product::<f64>())
            .sum())
    }

    /// Per-type `(lowest, highest)` count carrying mass.
    pub fn supports(&self) -> Vec<(u32, u32)> {
        (0..self.dim)
            .map(|s| {
                let lo = self.atoms.iter().map(|a| a.counts[s]).min().unwrap_or(0);
                let hi = self.atoms.iter().map(|a| a.counts[s]).max().unwrap_or(0);
                (lo, hi)
            })
            .collect()
    }

    pub fn marginal_mean(&self, s: usize) -> f64 {
        self.atoms.iter().map(|a| a.prob * a.counts[s] as f64).sum()
    }

    pub fn marginal_variance(&self, s: usize) -> f64 {
        let m = self.marginal_mean(s);
        let m2: f64 = self.atoms.iter().map(|a| a.prob * (a.counts[s] as f64).powi(2)).sum();
        (m2 - m * m).max(0.0)
    }

    /// Marginal pmf of coordinate `s` on `0..=max`.
    pub fn marginal_pmf(&self, s: usize) -> Vec<f64> {
        let hi = self.atoms.iter().map(|a| a.counts[s]).max().unwrap_or(0) as usize;
        let mut out = vec![0.0; hi + 1];
        for a in &self.atoms {
            out[a.counts[s] as usize] += a.prob;
        }
        out
    }

    /// Law of the count vector given that the group is not empty.
    pub fn condition_nonempty(&self) -> Result<Self> {
        let pairs: Vec<(Vec<u32>, f64)> = self.atoms.iter().map(|a| (a.counts.clone(), a.prob)).collect();
        let p0 = self.p0();
        if 1.0 - p0 < 1e-12 {
            return Err(Error::DegenerateModel);
        }
        if p0 == 0.0 {
            return Ok(self.clone());
        }
        let cond = condition_atoms(&pairs).ok_or(Error::DegenerateModel)?;
        let atoms = cond.into_iter().map(|(counts, prob)| Atom { counts, prob }).collect();
        Self::build(self.dim, atoms, &self.label, self.truncated_at)
    }
}

/// Removes the zero count vector and rescales by `1 / (1 - p0)`; generic so the
/// same code runs in floating point and in exact rational arithmetic. `None`
/// when every atom is the zero vector.
pub fn condition_atoms<T>(atoms: &[(Vec<u32>, T)]) -> Option<Vec<(Vec<u32>, T)>>
where
    T: Clone + Zero + One + PartialEq + Sub<Output = T> + Div<Output = T>,
{
    let mut p0 = T::zero();
    for (c, p) in atoms {
        if c.iter().all(|&u| u == 0) {
            p0 = p0 + p.clone();
        }
    }
    let keep = T::one() - p0;
    if keep == T::zero() {
        return None;
    }
    Some(
        atoms
            .iter()
            .filter(|(c, _)| c.iter().any(|&u| u != 0))
            .map(|(c, p)| (c.clone(), p.clone() / keep.clone()))
            .collect(),
    )
}

/// Marginal `(mean, variance)` of coordinate `s` of an atom list (generic).
pub fn marginal_moments<T>(atoms: &[(Vec<u32>, T)], s: usize) -> (T, T)
where
    T: Clone + Zero + One + Add<Output = T> + Sub<Output = T> + Mul<Output = T>,
{
    let lift = |n: u32| (0..n).fold(T::zero(), |acc, _| acc + T::one());
    let mut m = T::zero();
    let mut m2 = T::zero();
    for (c, p) in atoms {
        let u = lift(c[s]);
        m = m + p.clone() * u.clone();
        m2 = m2 + p.clone() * u.clone() * u;
    }
    let var = m2 - m.clone() * m.clone();
    (m, var)
}

/// Outcome of merging independent per-type streams into one group stream.
#[derive(Debug, Clone, PartialEq)]
pub struct MergedStreams {
    /// Sum of the per-type intensities.
    pub total_intensity: f64,
    /// Mixture law including empty groups.
    pub merged: GroupSizeModel,
    /// Intensity of non-empty groups.
    pub lambda: f64,
    /// Mixture law given a non-empty group.
    pub conditioned: GroupSizeModel,
}

/// Superposes independent per-type streams (`per_type[s]` univariate, possibly
/// with mass at 0) into one stream whose group carries claims of the arriving
/// type only.
pub fn merge_streams(intensities: &[f64], per_type: &[GroupSizeModel]) -> Result<MergedStreams> {
    ArrivalSpec::IndependentStreams(intensities.to_vec()).validate()?;
    if intensities.len() != per_type.len() {
        return Err(invalid(format!(
            "{} intensities but {} per-type count laws",
            intensities.len(),
            per_type.len()
        )));
    }
    let d = per_type.len();
    let total: f64 = intensities.iter().sum();
    let mut atoms = Vec::new();
    for (s, (g, &rate)) in per_type.iter().zip(intensities).enumerate() {
        if g.dim() != 1 {
            return Err(invalid("merge_streams needs univariate per-type count laws"));
        }
        for a in g.atoms() {
            let mut counts = vec![0; d];
            counts[s] = a.counts[0];
            atoms.push(Atom { counts, prob: rate / total * a.prob });
        }
    }
    let truncated_at = per_type.iter().filter_map(|g| g.truncated_at()).max();
    let merged = GroupSizeModel::build(d, atoms, "merged-streams", truncated_at)?;
    let lambda: f64 = per_type
        .iter()
        .zip(intensities)
        .map(|(g, &rate)| (1.0 - g.p0()) * rate)
        .sum();
    let conditioned = merged.condition_nonempty()?;
    Ok(MergedStreams { total_intensity: total, merged, lambda, conditioned })
}

/// Drops empty groups: intensity `lambda_tilde (1 - p0)` and the conditioned law.
pub fn thin_empty(intensity: f64, g: &GroupSizeModel) -> Result<(f64, GroupSizeModel)> {
    let p0 = g.p0();
    let cond = g.condition_nonempty()?;
    Ok((intensity * (1.0 - p0), cond))
}

/// Named parametric count families (plus explicit atoms).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "kebab-case")]
pub enum GroupFamily {
    /// Uniform on `{1, ..., k}`.
    UniformOrderK { k: u32 },
    /// Geometric truncated to `{1, ..., k}`: `P(i) = p (1-p)^{i-1} / (1 - (1-p)^k)`.
    TruncatedGeometricOrderK { p: f64, k: u32 },
    /// Failure counts before the `n`-th success, split over `d` categories with
    /// probabilities `p_s` (success probability `1 - sum p`).
    NegativeMultinomial { n: u32, p: Vec<f64> },
    /// Independent negative binomial coordinates, `P(U_s = 0) = p_s^{n_s}`.
    IndependentNegBinomial { n: Vec<u32>, p: Vec<f64> },
    /// Univariate `n + NB(n, p)`, supported on `{n, n+1, ...}`; `n = 1` is the
    /// geometric law `p (1-p)^{i-1}` on `{1, 2, ...}`.
    ShiftedNegBinomial { n: u32, p: f64 },
    /// Three lines with a common shock; atoms weighted by the seven intensities.
    CommonShock3 {
        l11: f64,
        l22: f64,
        l33: f64,
        l12: f64,
        l13: f64,
        l23: f64,
        l123: f64,
    },
    /// Univariate pmf on `{0, 1, ..., len-1}`.
    SingleTypeGeneric { pmf: Vec<f64> },
    /// Independent indicators: at most one claim per type, `P(U_s = 1) = q_s`.
    IndependentBernoulli { q: Vec<f64> },
    /// Explicit joint atoms.
    Atoms { dim: usize, atoms: Vec<Atom> },
}

fn probability(name: &str, p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} must lie in (0, 1), got {p}")))
    }
}

/// Negative binomial failure-count pmf `C(n+k-1, k) p^n (1-p)^k`, truncated at
/// the first `R` whose tail falls below [`COUNT_TRUNCATION_TAIL`].
pub fn neg_binomial_pmf(n: u32, p: f64) -> Vec<f64> {
    let mut pmf = vec![p.powi(n as i32)];
    let mut cum = pmf[0];
    let mut k = 0u32;
    while 1.0 - cum >= COUNT_TRUNCATION_TAIL && k < 1_000_000 {
        let next = pmf[k as usize] * (n + k) as f64 / (k + 1) as f64 * (1.0 - p);
        pmf.push(next);
        cum += next;
        k += 1;
    }
    pmf
}

fn multinomial_compositions(t: u32, probs: &[f64], prefix: &mut Vec<u32>, weight: f64, out: &mut Vec<(Vec<u32>, f64)>) {
    if probs.len() == 1 {
        let mut c = prefix.clone();
        c.push(t);
        out.push((c, weight * probs[0].powi(t as i32)));
        return;
    }
    // coefficient t! / (j! (t-j)!) applied incrementally
    let mut binom = 1.0;
    for j in 0..=t {
        if j > 0 {
            binom *= (t - j + 1) as f64 / j as f64;
        }
        prefix.push(j);
        multinomial_compositions(t - j, &probs[1..], prefix, weight * binom * probs[0].powi(j as i32), out);
        prefix.pop();
    }
}

impl GroupFamily {
    pub fn name(&self) -> &'static str {
        match self {
            Self::UniformOrderK { .. } => "uniform-order-k",
            Self::TruncatedGeometricOrderK { .. } => "truncated-geometric-order-k",
            Self::NegativeMultinomial { .. } => "negative-multinomial",
            Self::IndependentNegBinomial { .. } => "independent-neg-binomial",
            Self::ShiftedNegBinomial { .. } => "shifted-neg-binomial",
            Self::CommonShock3 { .. } => "common-shock3",
            Self::SingleTypeGeneric { .. } => "single-type-generic",
            Self::IndependentBernoulli { .. } => "independent-bernoulli",
            Self::Atoms { .. } => "atoms",
        }
    }

    pub fn build(&self) -> Result<GroupSizeModel> {
        let label = self.name();
        match self {
            Self::UniformOrderK { k } => {
                if *k == 0 {
                    return Err(invalid("order k must be at least 1"));
                }
                let atoms = (1..=*k).map(|i| Atom { counts: vec![i], prob: 1.0 / *k as f64 }).collect();
                GroupSizeModel::build(1, atoms, label, None)
            }
            Self::TruncatedGeometricOrderK { p, k } => {
                probability("p", *p)?;
                if *k == 0 {
                    return Err(invalid("order k must be at least 1"));
                }
                let norm = 1.0 - (1.0 - p).powi(*k as i32);
                let atoms = (1..=*k)
                    .map(|i| Atom { counts: vec![i], prob: p * (1.0 - p).powi(i as i32 - 1) / norm })
                    .collect();
                GroupSizeModel::build(1, atoms, label, None)
            }
            Self::NegativeMultinomial { n, p } => {
                if *n == 0 {
                    return Err(invalid("negative multinomial n must be at least 1"));
                }
                if p.is_empty() {
                    return Err(invalid("negative multinomial needs at least one p"));
                }
                for &ps in p {
                    probability("p_s", ps)?;
                }
                let sum: f64 = p.iter().sum();
                if sum >= 1.0 {
                    return Err(invalid(format!("negative multinomial needs sum p < 1, got {sum}")));
                }
                let totals = neg_binomial_pmf(*n, 1.0 - sum);
                let split: Vec<f64> = p.iter().map(|ps| ps / sum).collect();
                let mut atoms = Vec::new();
                for (t, &pt) in totals.iter().enumerate() {
                    let mut out = Vec::new();
                    multinomial_compositions(t as u32, &split, &mut Vec::new(), pt, &mut out);
                    atoms.extend(out.into_iter().map(|(counts, prob)| Atom { counts, prob }));
                }
                let r = totals.len() as u32 - 1;
                renormalized(p.len(), atoms, label, Some(r))
            }
            Self::IndependentNegBinomial { n, p } => {
                if n.len() != p.len() || n.is_empty() {
                    return Err(invalid("independent negative binomial needs equally many n and p"));
                }
                let mut marginals = Vec::new();
                for (&ns, &ps) in n.iter().zip(p) {
                    if ns == 0 {
                        return Err(invalid("negative binomial n must be at least 1"));
                    }
                    probability("p_s", ps)?;
                    marginals.push(neg_binomial_pmf(ns, ps));
                }
                let r = marginals.iter().map(|m| m.len() as u32 - 1).max();
                renormalized(n.len(), product_atoms(&marginals), label, r)
            }
            Self::ShiftedNegBinomial { n, p } => {
                if *n == 0 {
                    return Err(invalid("shifted negative binomial n must be at least 1"));
                }
                probability("p", *p)?;
                let pmf = neg_binomial_pmf(*n, *p);
                let r = *n + pmf.len() as u32 - 1;
                let atoms = pmf
                    .into_iter()
                    .enumerate()
                    .map(|(k, prob)| Atom { counts: vec![*n + k as u32], prob })
                    .collect();
                renormalized(1, atoms, label, Some(r))
            }
            Self::CommonShock3 { l11, l22, l33, l12, l13, l23, l123 } => {
                let ls = [*l11, *l22, *l33, *l12, *l13, *l23, *l123];
                if ls.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
                    return Err(invalid("common-shock intensities must be nonnegative"));
                }
                let l0: f64 = ls.iter().sum();
                if l0 <= 0.0 {
                    return Err(invalid("common-shock intensities must not all vanish"));
                }
                let vectors = [
                    [1, 0, 0],
                    [0, 1, 0],
                    [0, 0, 1],
                    [1, 1, 0],
                    [1, 0, 1],
                    [0, 1, 1],
                    [1, 1, 1],
                ];
                let atoms = vectors
                    .iter()
                    .zip(ls)
                    .map(|(c, l)| Atom { counts: c.to_vec(), prob: l / l0 })
                    .collect();
                GroupSizeModel::build(3, atoms, label, None)
            }
            Self::SingleTypeGeneric { pmf } => {
                let atoms = pmf
                    .iter()
                    .enumerate()
                    .map(|(i, &prob)| Atom { counts: vec![i as u32], prob })
                    .collect();
                GroupSizeModel::build(1, atoms, label, None)
            }
            Self::IndependentBernoulli { q } => {
                if q.is_empty() {
                    return Err(invalid("at least one indicator probability is required"));
                }
                let mut marginals = Vec::new();
                for &qs in q {
                    if !(qs > 0.0 && qs <= 1.0) {
                        return Err(invalid(format!("indicator probability must lie in (0, 1], got {qs}")));
                    }
                    marginals.push(vec![1.0 - qs, qs]);
                }
                GroupSizeModel::build(q.len(), product_atoms(&marginals), label, None)
            }
            Self::Atoms { dim, atoms } => GroupSizeModel::build(*dim, atoms.clone(), label, None),
        }
    }
}

/// Joint atoms of independent coordinates; products below `1e-18` are dropped.
fn product_atoms(marginals: &[Vec<f64>]) -> Vec<Atom> {
    let mut atoms = vec![Atom { counts: Vec::new(), prob: 1.0 }];
    for pmf in marginals {
        let mut next = Vec::with_capacity(atoms.len() * pmf.len());
        for a in &atoms {
            for (k, &q) in pmf.iter().enumerate() {
                let prob = a.prob * q;
                if prob < 1e-18 {
                    continue;
                }
                let mut counts = a.counts.clone();
                counts.push(k as u32);
                next.push(Atom { counts, prob });
            }
        }
        atoms = next;
    }
    atoms
}

fn renormalized(dim: usize, mut atoms: Vec<Atom>, label: &str, truncated_at: Option<u32>) -> Result<GroupSizeModel> {
    let total: f64 = atoms.iter().map(|a| a.prob).sum();
    if total <= 0.0 {
        return Err(invalid("count law has no mass"));
    }
    atoms.iter_mut().for_each(|a| a.prob /= total);
    GroupSizeModel::build(dim, atoms, label, truncated_at)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(pmf: &[f64]) -> GroupSizeModel {
        GroupFamily::SingleTypeGeneric { pmf: pmf.to_vec() }.build().unwrap()
    }

    fn unit_shock() -> GroupSizeModel {
        GroupFamily::CommonShock3 { l11: 1.0, l22: 1.0, l33: 1.0, l12: 1.0, l13: 1.0, l23: 1.0, l123: 1.0 }
            .build()
            .unwrap()
    }

    #[test]
    fn pgf_examples() {
        let g = GroupFamily::UniformOrderK { k: 2 }.build().unwrap();
        assert!((g.pgf(&[0.5]).unwrap() - 0.375).abs() < 1e-15);
        assert!((g.pgf(&[1.0]).unwrap() - 1.0).abs() < 1e-15);
        let cs = unit_shock();
        assert!((cs.pgf(&[1.0, 1.0, 0.0]).unwrap() - 3.0 / 7.0).abs() < 1e-15);
        assert!(cs.pgf(&[1.0]).is_err());
    }

    #[test]
    fn conditioning_examples() {
        let g = single(&[0.5, 0.0, 0.5]).condition_nonempty().unwrap();
        assert!((g.marginal_mean(0) - 2.0).abs() < 1e-15);
        assert!(g.marginal_variance(0) < 1e-15);
        let g = single(&[0.2, 0.5, 0.3]).condition_nonempty().unwrap();
        assert!((g.marginal_mean(0) - 1.375).abs() < 1e-15);
        let g = single(&[0.0, 0.4, 0.6]);
        assert_eq!(g.condition_nonempty().unwrap(), g);
        assert!(matches!(single(&[1.0]).condition_nonempty(), Err(Error::DegenerateModel)));
    }

    #[test]
    fn conditioning_matches_thinning_moment_formulas() {
        let g = GroupFamily::NegativeMultinomial { n: 2, p: vec![0.2, 0.3] }.build().unwrap();
        let p0 = g.p0();
        assert!((p0 - 0.25).abs() < 1e-9);
        let c = g.condition_nonempty().unwrap();
        for s in 0..2 {
            let (m, v) = (g.marginal_mean(s), g.marginal_variance(s));
            assert!((c.marginal_mean(s) - m / (1.0 - p0)).abs() < 1e-12);
            let want = v / (1.0 - p0) - p0 * m * m / (1.0 - p0).powi(2);
            assert!((c.marginal_variance(s) - want).abs() < 1e-10);
        }
    }

    #[test]
    fn merge_examples() {
        let one = single(&[0.0, 1.0]);
        let m = merge_streams(&[1.0, 1.0], &[one.clone(), one.clone()]).unwrap();
        assert_eq!(m.merged.p0(), 0.0);
        assert!((m.lambda - 2.0).abs() < 1e-15);
        assert!((m.merged.pgf(&[0.0, 1.0]).unwrap() - 0.5).abs() < 1e-15);

        let half = single(&[0.5, 0.5]);
        let m = merge_streams(&[1.0, 3.0], &[half.clone(), one.clone()]).unwrap();
        assert!((m.merged.p0() - 0.125).abs() < 1e-15);
        assert!((m.lambda - 3.5).abs() < 1e-15);
        let atoms = m.conditioned.atoms();
        assert_eq!(atoms.len(), 2);
        let p10 = atoms.iter().find(|a| a.counts == [1, 0]).unwrap().prob;
        let p01 = atoms.iter().find(|a| a.counts == [0, 1]).unwrap().prob;
        assert!((p10 - 1.0 / 7.0).abs() < 1e-15);
        assert!((p01 - 6.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn merged_marginal_pgf_identity() {
        let a = GroupFamily::IndependentNegBinomial { n: vec![1], p: vec![0.5] }.build().unwrap();
        let b = GroupFamily::IndependentNegBinomial { n: vec![2], p: vec![0.6] }.build().unwrap();
        let rates = [1.5, 0.7];
        let m = merge_streams(&rates, &[a.clone(), b.clone()]).unwrap();
        let total: f64 = rates.iter().sum();
        for z in [0.0, 0.2, 0.5, 0.9] {
            let ga = m.merged.pgf(&[z, 1.0]).unwrap();
            let want = 1.0 - rates[0] * (1.0 - a.pgf(&[z]).unwrap()) / total;
            assert!((ga - want).abs() < 1e-12);
            let joint = m.merged.pgf(&[z, 0.3]).unwrap();
            let want = (rates[0] * a.pgf(&[z]).unwrap() + rates[1] * b.pgf(&[0.3]).unwrap()) / total;
            assert!((joint - want).abs() < 1e-12);
        }
        assert!(m.merged.atoms().iter().all(|a| a.counts.iter().filter(|&&u| u > 0).count() <= 1));
    }

    #[test]
    fn thinning_identity_and_idempotence() {
        let g = GroupFamily::IndependentBernoulli { q: vec![0.5, 0.5] }.build().unwrap();
        let (lambda, c) = thin_empty(2.0, &g).unwrap();
        assert!((lambda - 1.5).abs() < 1e-15);
        let (again, c2) = thin_empty(lambda, &c).unwrap();
        assert_eq!(again, lambda);
        assert_eq!(c2, c);
        // compound transforms of the counting vector at time t agree
        let t = 1.7;
        for z in [[0.1, 0.9], [0.5, 0.5], [0.8, 0.3]] {
            let lhs = (-2.0 * t * (1.0 - g.pgf(&z).unwrap())).exp();
            let rhs = (-lambda * t * (1.0 - c.pgf(&z).unwrap())).exp();
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn families_sum_to_one_and_match_known_means() {
        let tg = GroupFamily::TruncatedGeometricOrderK { p: 0.5, k: 2 }.build().unwrap();
        assert!((tg.atoms()[0].prob - 2.0 / 3.0).abs() < 1e-15);
        let (p, k) = (0.5f64, 2);
        let closed = (1.0 - (1.0 - p).powi(k) * (1.0 + k as f64 * p)) / (p * (1.0 - (1.0 - p).powi(k)));
        assert!((tg.marginal_mean(0) - closed).abs() < 1e-15);
        assert!((closed - 4.0 / 3.0).abs() < 1e-15);

        let nm = GroupFamily::NegativeMultinomial { n: 2, p: vec![0.2, 0.3] }.build().unwrap();
        assert!((nm.total_mass() - 1.0).abs() < 1e-12);
        // E U_s = n p_s / (1 - sum p)
        assert!((nm.marginal_mean(0) - 0.8).abs() < 1e-8);
        assert!((nm.marginal_mean(1) - 1.2).abs() < 1e-8);
        assert!(nm.truncated_at().is_some());

        let sh = GroupFamily::ShiftedNegBinomial { n: 1, p: 0.4 }.build().unwrap();
        assert_eq!(sh.p0(), 0.0);
        assert!((sh.marginal_mean(0) - 2.5).abs() < 1e-8);

        let cs = unit_shock();
        assert_eq!(cs.atoms().len(), 7);
        assert!(cs.atoms().iter().all(|a| (a.prob - 1.0 / 7.0).abs() < 1e-15));
        assert_eq!(cs.supports(), vec![(0, 1); 3]);
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(GroupFamily::TruncatedGeometricOrderK { p: 1.2, k: 3 }.build().is_err());
        assert!(GroupFamily::NegativeMultinomial { n: 1, p: vec![0.6, 0.5] }.build().is_err());
        assert!(GroupFamily::SingleTypeGeneric { pmf: vec![0.5, 0.4] }.build().is_err());
        assert!(GroupSizeModel::from_atoms(2, vec![Atom { counts: vec![1], prob: 1.0 }]).is_err());
    }
}
