//! Named preset models.
//!
//! Every preset accepts a JSON object of parameters. Missing keys take their
//! defaults. Shared keys: `loading` (premium is `(1 + loading) lambda E[Y1]`),
//! `initial_capital` and `claims` (one claim law per type, default
//! exponential with unit mean).

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{ArrivalMode, ArrivalsConfig, GroupsConfig, ModelConfigFile};
use crate::distributions::ClaimDistribution;
use crate::error::{invalid, Error, Result};
use crate::group_models::GroupFamily;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PresetInfo {
    pub name: &'static str,
    pub example: u32,
    pub title: &'static str,
    /// Parameter names with their default values.
    pub params: Value,
}

pub const PRESET_NAMES: [&str; 8] = [
    "poisson-order-k",
    "polya-aeppli-order-k",
    "neg-multinomial",
    "independent-neg-binomial",
    "polya-aeppli",
    "compound-compound",
    "wang-lines",
    "common-shock",
];

pub const DEFAULT_LOADING: f64 = 0.5;

fn info(name: &str) -> Result<PresetInfo> {
    let common = |mut v: Value| {
        let o = v.as_object_mut().expect("object");
        o.insert("loading".into(), json!(DEFAULT_LOADING));
        o.insert("initial_capital".into(), json!(0.0));
        o.insert("claims".into(), json!("exponential(1) per type"));
        v
    };
    let (example, title, params) = match name {
        "poisson-order-k" => (1, "group size uniform on {1..k}", json!({"intensity": 1.0, "k": 3})),
        "polya-aeppli-order-k" => (
            2,
            "group size geometric truncated to {1..k}",
            json!({"intensity": 1.0, "p": 0.5, "k": 2}),
        ),
        "neg-multinomial" => (
            3,
            "dependent negative multinomial counts (n; p_1..p_d), sum p < 1",
            json!({"intensity": 1.0, "n": 2, "p": [0.2, 0.3]}),
        ),
        "independent-neg-binomial" => (
            4,
            "independent streams with negative binomial (n_s, p_s) counts, empty groups allowed",
            json!({"intensities": [1.0, 1.0], "n": [1, 2], "p": [0.5, 0.6]}),
        ),
        "polya-aeppli" => (
            5,
            "independent streams with shifted negative binomial (n_s, p_s) counts",
            json!({"intensities": [1.0, 1.0], "n": [1, 1], "p": [0.5, 0.4]}),
        ),
        "compound-compound" => (
            6,
            "single type, arbitrary count pmf on {0, 1, ...}",
            json!({"intensity": 1.0, "pmf": [0.2, 0.5, 0.3]}),
        ),
        "wang-lines" => (
            7,
            "at most one claim per line, independent indicators q_s, empty groups allowed",
            json!({"intensity": 1.0, "q": [0.5, 0.5]}),
        ),
        "common-shock" => (
            8,
            "three lines, shocks hitting each subset with its own intensity",
            json!({"l11": 1.0, "l22": 1.0, "l33": 1.0, "l12": 1.0, "l13": 1.0, "l23": 1.0, "l123": 1.0}),
        ),
        other => return Err(Error::UnknownPreset(other.to_string())),
    };
    Ok(PresetInfo { name: PRESET_NAMES.iter().find(|n| **n == name).expect("listed"), example, title, params: common(params) })
}

pub fn list() -> Vec<PresetInfo> {
    PRESET_NAMES.iter().map(|n| info(n).expect("listed preset")).collect()
}

pub fn show(name: &str) -> Result<PresetInfo> {
    info(name)
}

#[derive(Debug, Deserialize)]
struct Shared {
    #[serde(default = "default_loading")]
    loading: f64,
    #[serde(default)]
    initial_capital: f64,
    #[serde(default)]
    claims: Option<Vec<ClaimDistribution>>,
}

fn default_loading() -> f64 {
    DEFAULT_LOADING
}

fn check_keys(params: &Value, allowed: &[&str]) -> Result<()> {
    let obj = match params {
        Value::Null => return Ok(()),
        Value::Object(o) => o,
        _ => return Err(invalid("preset parameters must be a JSON object")),
    };
    match obj.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(invalid(format!("unknown preset parameter `{k}`"))),
        None => Ok(()),
    }
}

fn shared(params: &Value) -> Result<Shared> {
    let obj = match params {
        Value::Object(o) => o.clone(),
        _ => serde_json::Map::new(),
    };
    let keep: serde_json::Map<String, Value> = obj
        .into_iter()
        .filter(|(k, _)| ["loading", "initial_capital", "claims"].contains(&k.as_str()))
        .collect();
    serde_json::from_value(Value::Object(keep)).map_err(|e| invalid(e.to_string()))
}

fn get<T: DeserializeOwned>(v: &Value, key: &str, default: Value) -> Result<T> {
    let raw = v.get(key).cloned().unwrap_or(default);
    serde_json::from_value(raw).map_err(|e| invalid(format!("parameter `{key}`: {e}")))
}

/// Builds the model config of preset `name` with parameter overrides `params`.
pub fn build(name: &str, params: &Value) -> Result<ModelConfigFile> {
    let info = info(name)?;
    let defaults = &info.params;
    let allowed: Vec<&str> = defaults.as_object().expect("object").keys().map(|k| k.as_str()).collect();
    check_keys(params, &allowed)?;
    let p = |key: &str| params.get(key).cloned().unwrap_or_else(|| defaults[key].clone());
    let single = |rate: Value, family: GroupFamily| -> Result<(ArrivalsConfig, GroupsConfig, usize)> {
        let rate: f64 = serde_json::from_value(rate).map_err(|e| invalid(format!("parameter `intensity`: {e}")))?;
        let d = family.build()?.dim();
        Ok((ArrivalsConfig { mode: ArrivalMode::SingleStream, intensities: vec![rate] }, GroupsConfig::Family(family), d))
    };
    let (arrivals, groups, d) = match name {
        "poisson-order-k" => single(p("intensity"), GroupFamily::UniformOrderK { k: get(params, "k", p("k"))? })?,
        "polya-aeppli-order-k" => single(
            p("intensity"),
            GroupFamily::TruncatedGeometricOrderK { p: get(params, "p", p("p"))?, k: get(params, "k", p("k"))? },
        )?,
        "neg-multinomial" => single(
            p("intensity"),
            GroupFamily::NegativeMultinomial { n: get(params, "n", p("n"))?, p: get(params, "p", p("p"))? },
        )?,
        "compound-compound" => {
            single(p("intensity"), GroupFamily::SingleTypeGeneric { pmf: get(params, "pmf", p("pmf"))? })?
        }
        "wang-lines" => single(p("intensity"), GroupFamily::IndependentBernoulli { q: get(params, "q", p("q"))? })?,
        "common-shock" => {
            let l = |k: &str| get::<f64>(params, k, p(k));
            let family = GroupFamily::CommonShock3 {
                l11: l("l11")?,
                l22: l("l22")?,
                l33: l("l33")?,
                l12: l("l12")?,
                l13: l("l13")?,
                l23: l("l23")?,
                l123: l("l123")?,
            };
            let total: f64 = ["l11", "l22", "l33", "l12", "l13", "l23", "l123"]
                .iter()
                .map(|k| l(k))
                .sum::<Result<f64>>()?;
            single(json!(total), family)?
        }
        "independent-neg-binomial" | "polya-aeppli" => {
            let rates: Vec<f64> = get(params, "intensities", p("intensities"))?;
            let n: Vec<u32> = get(params, "n", p("n"))?;
            let ps: Vec<f64> = get(params, "p", p("p"))?;
            if rates.len() != n.len() || n.len() != ps.len() {
                return Err(invalid("intensities, n and p must have equal lengths"));
            }
            let per_type = n
                .iter()
                .zip(&ps)
                .map(|(&n, &p)| {
                    if name == "polya-aeppli" {
                        GroupFamily::ShiftedNegBinomial { n, p }
                    } else {
                        GroupFamily::IndependentNegBinomial { n: vec![n], p: vec![p] }
                    }
                })
                .collect();
            let d = rates.len();
            (ArrivalsConfig { mode: ArrivalMode::IndependentStreams, intensities: rates }, GroupsConfig::PerType { per_type }, d)
        }
        _ => unreachable!("names checked by info"),
    };
    let sh = shared(params)?;
    let claims = match sh.claims {
        Some(c) if c.len() == d => c,
        Some(c) => return Err(invalid(format!("preset has {d} claim types but {} claim laws were given", c.len()))),
        None => vec![ClaimDistribution::exponential(1.0); d],
    };
    if !(sh.loading > 0.0 && sh.loading.is_finite()) {
        return Err(invalid(format!("loading must be positive, got {}", sh.loading)));
    }
    let mut cfg = ModelConfigFile {
        arrivals,
        groups,
        claims,
        premium_rate: 1.0,
        initial_capital: sh.initial_capital,
        numerics: None,
        simulation: None,
    };
    let spec = cfg.build_spec()?;
    let thinned = spec.thinned()?;
    let (m, _) = thinned.y1_moments()?;
    let lambda = thinned.arrivals.total_intensity();
    cfg.premium_rate = (1.0 + sh.loading) * lambda * m;
    cfg.to_spec().map_err(|e| match e {
        Error::Schema(m) => Error::InvalidParams(m),
        other => other,
    })?;
    Ok(cfg)
}
