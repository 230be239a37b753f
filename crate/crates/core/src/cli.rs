//! Command-line front end: `analyze`, `simulate`, `equivalence`, `catalog`.
//!
//! Exit codes: 0 ok, 1 numerical failure, 2 config or parameter error,
//! 3 net profit condition violated, 4 `--check` failure.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::catalog;
use crate::config::ModelConfigFile;
use crate::distributions::{ClaimDistribution, LatticeSpec};
use crate::error::{Error, Result};
use crate::reduction::{equivalence_report, reduce, ReducedClModel, RiskModelSpec};
use crate::ruin::{
    analyze, delta_renewal_solve, gerber_shiu_solve, heavy_tail_asymptotic, lundberg_exponent, net_profit_holds,
    psi_exponential_closed_form, Method,
};
use crate::simulation::{estimate_psi_ladder_grid, estimate_psi_path, EstimateWithCI, SimulationConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NET_PROFIT: i32 = 3;
pub const EXIT_CHECK: i32 = 4;

/// Largest number of rows in the capital-indexed tables.
const MAX_ROWS: usize = 2000;
/// Discrepancy, in standard errors, tolerated by `simulate --check`.
const CHECK_SIGMAS: f64 = 4.0;

#[derive(Debug, Parser)]
#[command(name = "grouprisk", version, about = "Ruin analytics for group-arrival multi-type risk models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct ModelSource {
    /// JSON model config.
    #[arg(required_unless_present = "preset", conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Analyze a catalog preset instead of a config file.
    #[arg(long)]
    pub preset: Option<String>,
    /// JSON object of preset parameter overrides.
    #[arg(long, requires = "preset")]
    pub params: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SimMethod {
    Ladder,
    Path,
    Both,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Reduce the model and tabulate ruin quantities.
    Analyze {
        #[command(flatten)]
        source: ModelSource,
        #[arg(long)]
        step: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
        /// Truncation bound of the compound-geometric series.
        #[arg(long)]
        tol: Option<f64>,
        /// Largest capital in the tables.
        #[arg(long)]
        u_max: Option<f64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Monte Carlo ruin probabilities next to the analytic values.
    Simulate {
        #[command(flatten)]
        source: ModelSource,
        #[arg(long, value_enum, default_value = "ladder")]
        method: SimMethod,
        #[arg(long)]
        reps: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Exit with code 4 when an estimate misses the analytic value by more than 4 se.
        #[arg(long)]
        check: bool,
        #[arg(long)]
        step: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Compare the reduced scalar models of two configs.
    Equivalence {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        step: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
    },
    /// List presets or show one.
    Catalog {
        #[command(subcommand)]
        action: Option<CatalogAction>,
    },
}

#[derive(Debug, Clone, Subcommand)]
pub enum CatalogAction {
    List,
    Show { name: String },
}

/// Exit code of a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::ConfigParse(_) | Error::Schema(_) | Error::UnknownPreset(_) | Error::InvalidParams(_) | Error::Io(_) => {
            EXIT_CONFIG
        }
        Error::NetProfitViolated { .. } => EXIT_NET_PROFIT,
        _ => EXIT_FAILURE,
    }
}

/// Parses `args` (program name first) and runs the command, printing to
/// stdout/stderr. Returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let mut stdout = String::new();
    let code = match execute(&cli.command, &mut stdout) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    };
    print!("{stdout}");
    code
}

/// Runs a parsed command, appending human-readable output to `out`.
pub fn execute(command: &Command, out: &mut String) -> Result<i32> {
    match command {
        Command::Analyze { source, step, points, tol, u_max, out: dir } => {
            let cfg = load(source)?;
            cmd_analyze(&cfg, LatticeOverride { step: *step, points: *points }, *tol, *u_max, dir, out)
        }
        Command::Simulate { source, method, reps, seed, check, step, points, out: dir } => {
            let cfg = load(source)?;
            let flags = SimulateFlags { method: *method, reps: *reps, seed: *seed, check: *check };
            cmd_simulate(&cfg, LatticeOverride { step: *step, points: *points }, flags, dir, out)
        }
        Command::Equivalence { a, b, step, points } => {
            let a = ModelConfigFile::from_path(a)?;
            let b = ModelConfigFile::from_path(b)?;
            cmd_equivalence(&a, &b, LatticeOverride { step: *step, points: *points }, out)
        }
        Command::Catalog { action } => cmd_catalog(action.clone().unwrap_or(CatalogAction::List), out),
    }
}

fn load(source: &ModelSource) -> Result<ModelConfigFile> {
    match (&source.config, &source.preset) {
        (_, Some(name)) => {
            let params: Value = match &source.params {
                Some(text) => serde_json::from_str(text).map_err(|e| Error::InvalidParams(format!("--params: {e}")))?,
                None => Value::Null,
            };
            catalog::build(name, &params)
        }
        (Some(path), None) => ModelConfigFile::from_path(path),
        (None, None) => Err(Error::Schema("a config path or --preset is required".into())),
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LatticeOverride {
    pub step: Option<f64>,
    pub points: Option<usize>,
}

fn lattice_for(cfg: &ModelConfigFile, spec: &RiskModelSpec, o: LatticeOverride) -> Result<LatticeSpec> {
    let mut cfg = cfg.clone();
    let mut n = cfg.numerics.unwrap_or_default();
    if o.step.is_some() {
        n.step = o.step;
    }
    if o.points.is_some() {
        n.points = o.points;
    }
    cfg.numerics = Some(n);
    cfg.lattice(spec)
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn write_json(dir: &Path, name: &str, v: &Value) -> Result<()> {
    write_file(dir, name, &(serde_json::to_string_pretty(v).expect("json") + "\n"))
}

fn scalar(value: f64, method: Method) -> Value {
    json!({ "value": value, "method": method })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Rate of `Y1` when it is exponential: every group carries exactly one claim
/// and all used claim types share one exponential law.
fn exponential_y1_rate(m: &ReducedClModel) -> Option<f64> {
    let mut rate = None;
    for a in m.atoms() {
        if a.total() != 1 {
            return None;
        }
        let s = a.counts.iter().position(|&n| n == 1)?;
        match (&m.claims[s], rate) {
            (ClaimDistribution::Exponential { rate: r }, None) => rate = Some(*r),
            (ClaimDistribution::Exponential { rate: r }, Some(q)) if *r == q => {}
            _ => return None,
        }
    }
    rate
}

/// Diagnostic summary for a model violating the net profit condition.
fn net_profit_failure(m: &ReducedClModel, c: f64, command: &str, dir: &Path) -> Result<i32> {
    let claim_rate = m.lambda * m.y1_mean;
    let e = Error::NetProfitViolated { premium_rate: c, claim_rate };
    write_json(
        dir,
        "summary.json",
        &json!({
            "command": command,
            "status": "net-profit-violated",
            "message": e.to_string(),
            "premium_rate": c,
            "claim_rate": scalar(claim_rate, Method::ClosedForm),
            "rho": scalar(c / claim_rate - 1.0, Method::ClosedForm),
        }),
    )?;
    Err(e)
}

fn u_table(m: &ReducedClModel, u_max: f64) -> Vec<f64> {
    let h = m.fi_grid.step();
    let nodes = (u_max / h).floor() as usize + 1;
    let stride = nodes.div_ceil(MAX_ROWS).max(1);
    (0..nodes).step_by(stride).map(|k| k as f64 * h).collect()
}

pub fn cmd_analyze(
    cfg: &ModelConfigFile,
    lattice: LatticeOverride,
    tol: Option<f64>,
    u_max: Option<f64>,
    dir: &Path,
    out: &mut String,
) -> Result<i32> {
    let spec = cfg.to_spec()?;
    let lattice = lattice_for(cfg, &spec, lattice)?;
    let m = reduce(&spec, lattice)?;
    let c = spec.premium_rate;
    if !net_profit_holds(&m, c) {
        return net_profit_failure(&m, c, "analyze", dir);
    }
    let tol = tol.unwrap_or_else(|| cfg.tol());
    let end = lattice.end();
    let u_max = u_max.or(cfg.u_max()).unwrap_or_else(|| end.min(50.0 * m.y1_mean)).min(end);
    let u = u_table(&m, u_max);
    let report = analyze(&m, c, spec.initial_capital, &u, tol)?;
    let eps = report.lundberg_epsilon.map(|s| s.value);

    let exp_rate = exponential_y1_rate(&m);
    let closed: Option<Vec<f64>> = exp_rate
        .map(|mu| u.iter().map(|&x| psi_exponential_closed_form(mu, m.lambda, c, x).map(|f| f.psi)).collect())
        .transpose()?;
    let mut psi_csv = String::from("u,psi_series,lundberg_bound,psi_closed_form\n");
    for (i, &x) in u.iter().enumerate() {
        let bound = eps.map(|e| (-e * x).exp());
        let cf = closed.as_ref().map(|v| v[i]);
        writeln!(psi_csv, "{x},{},{},{}", report.psi_grid.psi[i], opt(bound), opt(cf)).unwrap();
    }

    let delta = delta_renewal_solve(&m, c, &u)?;
    let mut delta_csv = String::from("u,delta_renewal,delta_series\n");
    for (i, &x) in u.iter().enumerate() {
        writeln!(delta_csv, "{x},{},{}", delta[i], 1.0 - report.psi_grid.psi[i]).unwrap();
    }

    let u_gs_max = u_max.min(10.0 * m.y1_mean);
    let u_gs: Vec<f64> = (0..=10).map(|i| u_gs_max * i as f64 / 10.0).collect();
    let y_gs: Vec<f64> = (0..=50).map(|j| 50.0 * m.y1_mean * j as f64 / 50.0).collect();
    let gs = gerber_shiu_solve(&m, c, &u_gs, &y_gs)?;
    let mut gs_csv = String::from("u,y,G\n");
    for (i, &x) in gs.u.iter().enumerate() {
        for (j, &y) in gs.y.iter().enumerate() {
            writeln!(gs_csv, "{x},{y},{}", gs.values[i][j]).unwrap();
        }
    }

    let heavy = heavy_tail_asymptotic(&m, c, &u, tol)?;
    let cl = report.cl_constant.map(|s| s.value);
    let mut asym_csv = String::from("u,psi_series,fi_survival,ratio,heavy_tail_limit,cl_approximation\n");
    for (i, &x) in u.iter().enumerate() {
        let cl_value = match (cl, eps) {
            (Some(k), Some(e)) => Some(k * (-e * x).exp()),
            _ => None,
        };
        writeln!(
            asym_csv,
            "{x},{},{},{},{},{}",
            heavy.psi[i],
            heavy.fi_survival[i],
            heavy.ratio[i],
            if heavy.applicable { heavy.limit.to_string() } else { String::new() },
            opt(cl_value)
        )
        .unwrap();
    }

    let mut scalars = serde_json::to_value(&report).expect("report serializes");
    let obj = scalars.as_object_mut().expect("object");
    obj.remove("psi_grid");
    let summary = json!({
        "command": "analyze",
        "status": "ok",
        "lattice": { "step": lattice.step, "points": lattice.points },
        "series": { "terms": report.psi_grid.terms, "truncation_bound": report.psi_grid.truncation_bound },
        "heavy_tailed": m.is_heavy_tailed(),
        "largest_reliable_u": heavy.largest_reliable_u,
        "scalars": scalars,
        "model": serde_json::to_value(cfg).expect("config serializes"),
    });
    write_json(dir, "summary.json", &summary)?;
    write_file(dir, "psi.csv", &psi_csv)?;
    write_file(dir, "delta.csv", &delta_csv)?;
    write_file(dir, "gerber_shiu.csv", &gs_csv)?;
    write_file(dir, "asymptotic.csv", &asym_csv)?;

    writeln!(out, "lambda   = {}", m.lambda).unwrap();
    writeln!(out, "E[Y1]    = {}", m.y1_mean).unwrap();
    writeln!(out, "rho      = {}", report.rho.value).unwrap();
    writeln!(out, "psi(0)   = {}", report.psi0.value).unwrap();
    writeln!(out, "epsilon  = {}", opt(eps)).unwrap();
    writeln!(out, "psi({}) = {}", spec.initial_capital, report.psi_at_capital.value).unwrap();
    writeln!(out, "wrote summary.json, psi.csv, delta.csv, gerber_shiu.csv, asymptotic.csv to {}", dir.display()).unwrap();
    Ok(EXIT_OK)
}

#[derive(Debug, Clone, Copy)]
pub struct SimulateFlags {
    pub method: SimMethod,
    pub reps: Option<u64>,
    pub seed: Option<u64>,
    pub check: bool,
}

/// `|estimate - target|` in standard errors, the error floored at the binomial
/// error of the target itself (a zero-variance sample is not infinitely precise).
fn check_z(e: &EstimateWithCI, target: f64) -> f64 {
    let floor = (target * (1.0 - target) / e.replications as f64).max(0.0).sqrt();
    let se = e.std_error.max(floor);
    let d = (e.estimate - target).abs();
    if d == 0.0 {
        0.0
    } else {
        d / se
    }
}

pub fn cmd_simulate(
    cfg: &ModelConfigFile,
    lattice: LatticeOverride,
    flags: SimulateFlags,
    dir: &Path,
    out: &mut String,
) -> Result<i32> {
    let spec = cfg.to_spec()?;
    let lattice = lattice_for(cfg, &spec, lattice)?;
    let m = reduce(&spec, lattice)?;
    let c = spec.premium_rate;
    if !net_profit_holds(&m, c) {
        return net_profit_failure(&m, c, "simulate", dir);
    }
    let mut sim: SimulationConfig = cfg.simulation_config();
    if let Some(r) = flags.reps {
        sim.replications = r;
    }
    if let Some(s) = flags.seed {
        sim.seed = s;
    }
    sim.validate()?;
    let u_values = cfg.u_values();
    let analytic = crate::ruin::psi_pollaczek_khinchin(&m, c, &u_values, cfg.tol())?;

    let ladder = match flags.method {
        SimMethod::Ladder | SimMethod::Both => Some(estimate_psi_ladder_grid(&m, c, &u_values, &sim)?),
        SimMethod::Path => None,
    };
    let paths = match flags.method {
        SimMethod::Path | SimMethod::Both => {
            Some(u_values.iter().map(|&u| estimate_psi_path(&spec, &m, u, &sim)).collect::<Result<Vec<_>>>()?)
        }
        SimMethod::Ladder => None,
    };

    let mut csv = String::from(
        "u,psi_analytic,ladder_psi,ladder_se,path_psi,path_se,path_censored_fraction,path_ruin_time,path_ruin_time_se\n",
    );
    let mut worst: f64 = 0.0;
    let mut warnings = Vec::new();
    for (i, &u) in u_values.iter().enumerate() {
        let a = analytic.psi[i];
        let l = ladder.as_ref().map(|v| v[i]);
        let p = paths.as_ref().map(|v| &v[i]);
        if let Some(e) = &l {
            worst = worst.max(check_z(e, a));
        }
        if let Some(s) = p {
            worst = worst.max(check_z(&s.ruin_probability, a));
            if s.ruin_time.is_none() {
                warnings.push(format!("no ruined path at u = {u}: {}", Error::NoRuinObserved));
            }
        }
        writeln!(
            csv,
            "{u},{a},{},{},{},{},{},{},{}",
            opt(l.map(|e| e.estimate)),
            opt(l.map(|e| e.std_error)),
            opt(p.map(|s| s.ruin_probability.estimate)),
            opt(p.map(|s| s.ruin_probability.std_error)),
            opt(p.map(|s| s.censored_fraction)),
            opt(p.and_then(|s| s.ruin_time.map(|t| t.estimate))),
            opt(p.and_then(|s| s.ruin_time.map(|t| t.std_error))),
        )
        .unwrap();
    }
    for w in &warnings {
        writeln!(csv, "# warning: {w}").unwrap();
    }
    let eps = lundberg_exponent(&m, c)?;
    let passed = worst <= CHECK_SIGMAS;
    let summary = json!({
        "command": "simulate",
        "status": if flags.check && !passed { "check-failed" } else { "ok" },
        "replications": sim.replications,
        "seed": sim.seed,
        "stream_stride": sim.stream_stride,
        "horizon": sim.horizon,
        "method": format!("{:?}", flags.method).to_lowercase(),
        "max_discrepancy_se": worst,
        "psi0": scalar(1.0 / (1.0 + crate::ruin::safety_loading(&m, c)), Method::ClosedForm),
        "lundberg_epsilon": eps.map(|e| scalar(e, Method::ClosedForm)),
        "warnings": warnings,
    });
    write_json(dir, "summary.json", &summary)?;
    write_file(dir, "simulation.csv", &csv)?;
    writeln!(out, "largest discrepancy: {worst:.3} se over {} capitals", u_values.len()).unwrap();
    writeln!(out, "wrote summary.json, simulation.csv to {}", dir.display()).unwrap();
    if flags.check && !passed {
        eprintln!("check failed: discrepancy {worst:.3} se exceeds {CHECK_SIGMAS}");
        return Ok(EXIT_CHECK);
    }
    Ok(EXIT_OK)
}

pub fn cmd_equivalence(a: &ModelConfigFile, b: &ModelConfigFile, lattice: LatticeOverride, out: &mut String) -> Result<i32> {
    let sa = a.to_spec()?;
    let sb = b.to_spec()?;
    let l = if lattice.step.is_some() || lattice.points.is_some() { Some(lattice_for(a, &sa, lattice)?) } else { None };
    let report = equivalence_report(&sa, &sb, l)?;
    writeln!(out, "{:<20} {:>22} {:>22} {:>12} {:>10}", "quantity", "a", "b", "delta", "agree").unwrap();
    for r in &report.rows {
        writeln!(out, "{:<20} {:>22} {:>22} {:>12.3e} {:>10}", r.quantity, r.a, r.b, r.delta, if r.agree { "yes" } else { "NO" })
            .unwrap();
    }
    writeln!(out, "{}", report.verdict()).unwrap();
    Ok(EXIT_OK)
}

pub fn cmd_catalog(action: CatalogAction, out: &mut String) -> Result<i32> {
    match action {
        CatalogAction::List => {
            for p in catalog::list() {
                writeln!(out, "example {}  {:<26} {}", p.example, p.name, p.title).unwrap();
            }
        }
        CatalogAction::Show { name } => {
            let p = catalog::show(&name)?;
            writeln!(out, "{} (example {})", p.name, p.example).unwrap();
            writeln!(out, "{}", p.title).unwrap();
            writeln!(out, "parameters (defaults):").unwrap();
            writeln!(out, "{}", serde_json::to_string_pretty(&p.params).expect("json")).unwrap();
        }
    }
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Schema("x".into())), EXIT_CONFIG);
        assert_eq!(exit_code(&Error::UnknownPreset("x".into())), EXIT_CONFIG);
        assert_eq!(exit_code(&Error::NetProfitViolated { premium_rate: 1.0, claim_rate: 2.0 }), EXIT_NET_PROFIT);
        assert_eq!(exit_code(&Error::NoRuinObserved), EXIT_FAILURE);
    }

    #[test]
    fn catalog_output() {
        let mut s = String::new();
        assert_eq!(cmd_catalog(CatalogAction::List, &mut s).unwrap(), EXIT_OK);
        assert_eq!(s.lines().count(), 8);
        let mut s = String::new();
        cmd_catalog(CatalogAction::Show { name: "common-shock".into() }, &mut s).unwrap();
        for k in ["l11", "l22", "l33", "l12", "l13", "l23", "l123"] {
            assert!(s.contains(&format!("\"{k}\"")));
        }
        assert!(matches!(cmd_catalog(CatalogAction::Show { name: "bogus".into() }, &mut s), Err(Error::UnknownPreset(_))));
    }

    #[test]
    fn parses_flags() {
        let cli = Cli::try_parse_from(["grouprisk", "simulate", "m.json", "--method", "path", "--reps", "10", "--check"]).unwrap();
        match cli.command {
            Command::Simulate { method, reps, check, .. } => {
                assert_eq!(method, SimMethod::Path);
                assert_eq!(reps, Some(10));
                assert!(check);
            }
            _ => panic!("wrong command"),
        }
        assert!(Cli::try_parse_from(["grouprisk", "analyze"]).is_err());
        assert!(Cli::try_parse_from(["grouprisk", "analyze", "--preset", "common-shock"]).is_ok());
    }
}
