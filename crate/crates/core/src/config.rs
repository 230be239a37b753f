//! JSON model configuration.
//!
//! ```json
//! {
//!   "arrivals": {"mode": "single-stream", "intensities": [1.0]},
//!   "groups": {"family": "uniform-order-k", "params": {"k": 3}},
//!   "claims": [{"family": "exponential", "params": {"rate": 1.0}}],
//!   "premium_rate": 3.0,
//!   "initial_capital": 0.0,
//!   "numerics": {"step": 0.01, "points": 4001, "tol": 1e-10},
//!   "simulation": {"replications": 100000, "horizon": 10000, "seed": 1}
//! }
//! ```
//!
//! `groups` is a family (`{family, params}`), explicit joint atoms
//! (`{atoms: [{counts, prob}]}`) or, for `independent-streams`, one family per
//! stream (`{per_type: [...]}`).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::distributions::{ClaimDistribution, LatticeSpec};
use crate::error::{Error, Result};
use crate::group_models::{ArrivalSpec, Atom, GroupFamily, GroupSizeModel};
use crate::reduction::RiskModelSpec;
use crate::simulation::SimulationConfig;

pub const DEFAULT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArrivalMode {
    SingleStream,
    IndependentStreams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrivalsConfig {
    pub mode: ArrivalMode,
    pub intensities: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GroupsConfig {
    PerType { per_type: Vec<GroupFamily> },
    Atoms { atoms: Vec<Atom> },
    Family(GroupFamily),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericsConfig {
    pub step: Option<f64>,
    pub points: Option<usize>,
    /// Truncation bound of the compound-geometric series.
    pub tol: Option<f64>,
    /// Largest capital written to the tables.
    pub u_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub replications: Option<u64>,
    pub horizon: Option<f64>,
    pub seed: Option<u64>,
    pub stream_stride: Option<u64>,
    /// Capitals at which ruin probabilities are estimated.
    pub u_values: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfigFile {
    pub arrivals: ArrivalsConfig,
    pub groups: GroupsConfig,
    pub claims: Vec<ClaimDistribution>,
    pub premium_rate: f64,
    #[serde(default)]
    pub initial_capital: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub numerics: Option<NumericsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationSection>,
}

fn schema(msg: impl Into<String>) -> Error {
    Error::Schema(msg.into())
}

impl ModelConfigFile {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
        if let Some(groups) = value.get("groups") {
            let ok = groups.get("per_type").is_some() || groups.get("atoms").is_some() || groups.get("family").is_some();
            if !ok {
                return Err(schema("groups must be {family, params}, {atoms} or {per_type}"));
            }
        }
        let cfg: Self = serde_json::from_value(value).map_err(|e| schema(e.to_string()))?;
        cfg.to_spec()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn arrival_spec(&self) -> Result<ArrivalSpec> {
        let rates = &self.arrivals.intensities;
        match self.arrivals.mode {
            ArrivalMode::SingleStream => match rates.as_slice() {
                [r] => Ok(ArrivalSpec::SingleStream(*r)),
                _ => Err(schema(format!("single-stream needs exactly one intensity, got {}", rates.len()))),
            },
            ArrivalMode::IndependentStreams => Ok(ArrivalSpec::IndependentStreams(rates.clone())),
        }
    }

    pub fn group_models(&self) -> Result<Vec<GroupSizeModel>> {
        let d = self.claims.len();
        match (&self.groups, self.arrivals.mode) {
            (GroupsConfig::PerType { per_type }, ArrivalMode::IndependentStreams) => {
                per_type.iter().map(|f| f.build()).collect()
            }
            (GroupsConfig::PerType { .. }, ArrivalMode::SingleStream) => {
                Err(schema("groups.per_type requires arrivals.mode = independent-streams"))
            }
            (_, ArrivalMode::IndependentStreams) => {
                Err(schema("independent-streams requires groups.per_type (one count law per stream)"))
            }
            (GroupsConfig::Atoms { atoms }, ArrivalMode::SingleStream) => {
                Ok(vec![GroupSizeModel::from_atoms(d, atoms.clone())?])
            }
            (GroupsConfig::Family(f), ArrivalMode::SingleStream) => Ok(vec![f.build()?]),
        }
    }

    /// Builds and validates the model; parameter errors surface as `Schema`.
    pub fn to_spec(&self) -> Result<RiskModelSpec> {
        self.build_spec().map_err(|e| match e {
            Error::InvalidParams(m) => schema(m),
            other => other,
        })
    }

    pub(crate) fn build_spec(&self) -> Result<RiskModelSpec> {
        let spec = RiskModelSpec {
            arrivals: self.arrival_spec()?,
            groups: self.group_models()?,
            claims: self.claims.clone(),
            premium_rate: self.premium_rate,
            initial_capital: self.initial_capital,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Lattice from `numerics`, falling back to the model default per field.
    pub fn lattice(&self, spec: &RiskModelSpec) -> Result<LatticeSpec> {
        let default = spec.default_lattice()?;
        let n = self.numerics.unwrap_or_default();
        match (n.step, n.points) {
            (None, None) => Ok(default),
            (Some(h), None) => LatticeSpec::new(h, ((default.end() / h).ceil() as usize + 1).max(2)),
            (None, Some(p)) => LatticeSpec::new(default.end() / (p.max(2) - 1) as f64, p),
            (Some(h), Some(p)) => LatticeSpec::new(h, p),
        }
    }

    pub fn tol(&self) -> f64 {
        self.numerics.and_then(|n| n.tol).unwrap_or(DEFAULT_TOL)
    }

    pub fn u_max(&self) -> Option<f64> {
        self.numerics.and_then(|n| n.u_max)
    }

    pub fn simulation_config(&self) -> SimulationConfig {
        let d = SimulationConfig::default();
        match &self.simulation {
            None => d,
            Some(s) => SimulationConfig {
                replications: s.replications.unwrap_or(d.replications),
                horizon: s.horizon.unwrap_or(d.horizon),
                seed: s.seed.unwrap_or(d.seed),
                stream_stride: s.stream_stride.unwrap_or(d.stream_stride),
            },
        }
    }

    pub fn u_values(&self) -> Vec<f64> {
        self.simulation
            .as_ref()
            .and_then(|s| s.u_values.clone())
            .unwrap_or_else(|| vec![0.0, 1.0, 5.0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXP: &str = r#"{
        "arrivals": {"mode": "single-stream", "intensities": [1.0]},
        "groups": {"atoms": [{"counts": [1], "prob": 1.0}]},
        "claims": [{"family": "exponential", "params": {"rate": 1.0}}],
        "premium_rate": 2.0
    }"#;

    #[test]
    fn parses_atoms_family_and_streams() {
        let cfg = ModelConfigFile::from_json_str(EXP).unwrap();
        let spec = cfg.to_spec().unwrap();
        assert_eq!(spec.arrivals, ArrivalSpec::SingleStream(1.0));
        assert_eq!(cfg.tol(), DEFAULT_TOL);

        let fam = EXP.replace(
            r#"{"atoms": [{"counts": [1], "prob": 1.0}]}"#,
            r#"{"family": "uniform-order-k", "params": {"k": 4}}"#,
        );
        let spec = ModelConfigFile::from_json_str(&fam).unwrap().to_spec().unwrap();
        assert_eq!(spec.groups[0].atoms().len(), 4);

        let streams = r#"{
            "arrivals": {"mode": "independent-streams", "intensities": [1.0, 2.0]},
            "groups": {"per_type": [
                {"family": "shifted-neg-binomial", "params": {"n": 1, "p": 0.5}},
                {"family": "single-type-generic", "params": {"pmf": [0.5, 0.5]}}
            ]},
            "claims": [{"family": "exponential", "params": {"rate": 1.0}},
                       {"family": "pareto", "params": {"alpha": 3.0, "scale": 1.0}}],
            "premium_rate": 10.0,
            "simulation": {"seed": 7, "u_values": [0, 2]}
        }"#;
        let cfg = ModelConfigFile::from_json_str(streams).unwrap();
        assert_eq!(cfg.to_spec().unwrap().groups.len(), 2);
        assert_eq!(cfg.simulation_config().seed, 7);
        assert_eq!(cfg.u_values(), vec![0.0, 2.0]);
        let again = ModelConfigFile::from_json_str(&cfg.to_json()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn error_kinds() {
        assert!(matches!(ModelConfigFile::from_json_str("{ not json"), Err(Error::ConfigParse(_))));
        let missing = r#"{"arrivals": {"mode": "single-stream", "intensities": [1.0]}}"#;
        assert!(matches!(ModelConfigFile::from_json_str(missing), Err(Error::Schema(_))));
        let dims = EXP.replace(r#""counts": [1]"#, r#""counts": [1, 0]"#);
        assert!(matches!(ModelConfigFile::from_json_str(&dims), Err(Error::Schema(_))));
        let mode = EXP.replace("single-stream", "two-streams");
        assert!(matches!(ModelConfigFile::from_json_str(&mode), Err(Error::Schema(_))));
        let extra = EXP.replace(r#""premium_rate""#, r#""colour": 1, "premium_rate""#);
        assert!(matches!(ModelConfigFile::from_json_str(&extra), Err(Error::Schema(_))));
    }

    #[test]
    fn lattice_overrides() {
        let cfg = ModelConfigFile::from_json_str(&EXP.replace(
            r#""premium_rate""#,
            r#""numerics": {"step": 0.05}, "premium_rate""#,
        ))
        .unwrap();
        let spec = cfg.to_spec().unwrap();
        let l = cfg.lattice(&spec).unwrap();
        assert_eq!(l.step, 0.05);
        assert!(l.end() >= spec.default_lattice().unwrap().end());
    }
}
