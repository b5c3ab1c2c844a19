//! `smc-synth`: synthesis, certification, simulation and parameter sweeps
//! for robust sliding-mode controllers.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 infeasible or
//! uncertified.

mod config;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use smc_synth::lmi::ReachingSet;
use smc_synth::polytope::SimplexPoint;
use smc_synth::sim::{empirical_vs_bound, simulate};
use smc_synth::synthesis::{
    certify_uvc_gain, certify_vsc_gain, sweep, synth_uvc, synth_vsc, ControlLaw, Design, SynthesisOptions,
};
use smc_synth::{Error, SlidingModeDesign};

use config::{DesignFile, Scenario};

#[derive(Debug)]
pub struct CliError {
    code: u8,
    msg: String,
}

impl CliError {
    fn input(msg: impl Into<String>) -> Self {
        Self { code: 1, msg: msg.into() }
    }

    fn uncertified(msg: impl Into<String>) -> Self {
        Self { code: 2, msg: msg.into() }
    }

    fn context(self, ctx: &str) -> Self {
        Self {
            code: self.code,
            msg: format!("{ctx}: {}", self.msg),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::SynthesisInfeasible(_) | Error::NumericalFailure(_) => 2,
            _ => 1,
        };
        Self { code, msg: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::input(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "smc-synth", version, about = "Robust sliding-mode controller synthesis via LMIs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct SolverFlags {
    /// Interior-point stopping tolerance.
    #[arg(long)]
    sdp_tol: Option<f64>,
    #[arg(long)]
    sdp_max_iter: Option<usize>,
    /// Margin imposed on strict matrix inequalities.
    #[arg(long)]
    sdp_margin: Option<f64>,
}

impl SolverFlags {
    fn options(&self) -> SynthesisOptions {
        let mut o = SynthesisOptions::default();
        if let Some(v) = self.sdp_tol {
            o.solver.tol = v;
        }
        if let Some(v) = self.sdp_max_iter {
            o.solver.max_iter = v;
        }
        if let Some(v) = self.sdp_margin {
            o.margin = v;
        }
        o
    }
}

#[derive(Args, Clone)]
struct SimFlags {
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    reg_eps: Option<f64>,
    #[arg(long)]
    reach_tol: Option<f64>,
    /// Simulated time in seconds (default: 4 x the reaching-time bound).
    #[arg(long)]
    horizon: Option<f64>,
}

impl SimFlags {
    fn apply(&self, sc: &mut Scenario) {
        let s = &mut sc.sim;
        s.dt = self.dt.or(s.dt);
        s.reg_eps = self.reg_eps.or(s.reg_eps);
        s.reach_tol = self.reach_tol.or(s.reach_tol);
        s.horizon = self.horizon.or(s.horizon);
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve the synthesis LMIs and write the certified design as JSON.
    Synth {
        #[arg(long)]
        config: PathBuf,
        /// Output file (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverFlags,
    },
    /// Certify a design, or find a certificate for a gain-only design file.
    Verify {
        #[arg(long)]
        design: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Write the (possibly recovered) design here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverFlags,
    },
    /// Simulate the closed loop for one plant of the polytope.
    Simulate {
        #[arg(long)]
        design: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// 1-based vertex index.
        #[arg(long, conflicts_with = "alpha")]
        vertex: Option<usize>,
        /// Simplex weights, comma separated.
        #[arg(long, value_delimiter = ',')]
        alpha: Option<Vec<f64>>,
        /// Output prefix for `<prefix>.csv` and `<prefix>.reach.json`.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        sim: SimFlags,
    },
    /// Minimize the reaching-time bound over a grid of xi (VSC) or mu (UVC).
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// `start:stop:steps`, or `start:stop:steps,log` for a geometric grid.
        #[arg(long)]
        grid: String,
        /// CSV output (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads.
        #[arg(long)]
        jobs: Option<usize>,
        #[command(flatten)]
        solver: SolverFlags,
    },
    /// Monte-Carlo comparison of simulated reaching times with the bound.
    Montecarlo {
        #[arg(long)]
        design: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        jobs: Option<usize>,
        /// JSON report (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        sim: SimFlags,
    },
}

fn write_output(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::input(format!("cannot write {}: {e}", p.display()))),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable output")
}

fn synthesize(sc: &Scenario, opts: &SynthesisOptions) -> Result<Design, CliError> {
    let rs = sc.reaching();
    Ok(match sc.law {
        ControlLaw::Vsc => Design::Vsc(synth_vsc(&sc.system, sc.xi_or_mu, &rs, opts)?),
        ControlLaw::Uvc => Design::Uvc(synth_uvc(&sc.system, sc.xi_or_mu, &rs, opts)?),
    })
}

/// Full design from a file; gain-only files get their certificate from the
/// fixed-gain LMIs with the scenario parameters.
fn resolve_design(file: DesignFile, sc: &Scenario, opts: &SynthesisOptions) -> Result<Design, CliError> {
    match file {
        DesignFile::Full(d) => Ok(*d),
        DesignFile::GainOnly { law, k } => {
            let rs: ReachingSet = sc.reaching();
            let d = match law {
                ControlLaw::Vsc => certify_vsc_gain(&sc.system, &k, sc.xi_or_mu, &rs, opts).map(Design::Vsc),
                ControlLaw::Uvc => certify_uvc_gain(&sc.system, &k, sc.xi_or_mu, &rs, opts).map(Design::Uvc),
            };
            d.map_err(|e| CliError::from(e).context("no certificate found for the given gain"))
        }
    }
}

fn cmd_synth(config: &Path, out: Option<&Path>, solver: &SolverFlags) -> Result<(), CliError> {
    let sc = Scenario::load(config)?;
    let design = synthesize(&sc, &solver.options())?;
    let d = design.as_dyn();
    eprintln!(
        "{} design: margin {:.4e}, T_bound {}",
        d.law(),
        d.verify(&sc.system)?,
        d.t_bound().map_or("n/a".into(), |t| format!("{t:.6} s"))
    );
    write_output(out, &to_json(&design))
}

#[derive(Serialize)]
struct VerifyReport {
    law: ControlLaw,
    margin: f64,
    certified: bool,
    lambda_min_q: f64,
    rho: Option<f64>,
    /// `λ_min(Q) >= 1/ρ` (up to 1e-6).
    rho_consistent: Option<bool>,
    p_max_eig: f64,
    phi: f64,
    t_bound: Option<f64>,
    sigma0_in_omega: bool,
    sigma0_bound: Option<f64>,
}

fn cmd_verify(design: &Path, config: &Path, out: Option<&Path>, solver: &SolverFlags) -> Result<(), CliError> {
    let sc = Scenario::load(config)?;
    let design = resolve_design(DesignFile::load(design)?, &sc, &solver.options())?;
    let (lambda_min_q, rho, phi) = match &design {
        Design::Vsc(d) => (d.lambda_min_q, d.rho, d.phi),
        Design::Uvc(d) => (d.lambda_min_q, d.rho, d.phi),
    };
    let d = design.as_dyn();
    let margin = d.verify(&sc.system)?;
    let sigma0_bound = if sc.sigma0.iter().all(|v| *v == 0.0) { None } else { Some(d.reaching_bound(&sc.sigma0)?) };
    let report = VerifyReport {
        law: d.law(),
        margin,
        certified: margin < 0.0,
        lambda_min_q,
        rho,
        rho_consistent: rho.map(|r| lambda_min_q >= 1.0 / r - 1e-6),
        p_max_eig: smc_synth::matkernel::lambda_max(d.weight())?,
        phi,
        t_bound: d.t_bound(),
        sigma0_in_omega: d.in_omega(&sc.sigma0)?,
        sigma0_bound,
    };
    println!("{}", to_json(&report));
    if let Some(p) = out {
        write_output(Some(p), &to_json(&design))?;
    }
    if margin < 0.0 {
        Ok(())
    } else {
        Err(CliError::uncertified(format!("not certified: margin {margin:.4e} >= 0")))
    }
}

fn default_horizon(d: &dyn SlidingModeDesign, sigma0: &[f64]) -> f64 {
    let bound = d
        .t_bound()
        .or_else(|| d.reaching_bound(sigma0).ok().filter(|b| *b > 0.0));
    bound.map_or(1.0, |b| smc_synth::tol::SIM_HORIZON_FACTOR * b)
}

fn cmd_simulate(
    design: &Path,
    config: &Path,
    vertex: Option<usize>,
    alpha: Option<Vec<f64>>,
    out: &Path,
    sim: &SimFlags,
) -> Result<(), CliError> {
    let mut sc = Scenario::load(config)?;
    sim.apply(&mut sc);
    let design = resolve_design(DesignFile::load(design)?, &sc, &SynthesisOptions::default())?;
    let d = design.as_dyn();
    let nv = sc.system.num_vertices();
    let b = match (vertex, alpha) {
        (_, Some(a)) => sc.system.combine(&SimplexPoint::new(a)?)?,
        (v, None) => {
            let v = v.unwrap_or(1);
            if v == 0 || v > nv {
                return Err(CliError::input(format!("vertex {v} out of range 1..={nv}")));
            }
            sc.system.vertices()[v - 1].clone()
        }
    };
    let cfg = sc.sim_config(default_horizon(d, &sc.sigma0));
    let trace = simulate(d.law(), &b, d.gain(), d.weight(), &sc.sigma0, &cfg)?;
    let bound = if sc.sigma0.iter().all(|v| *v == 0.0) { Some(0.0) } else { Some(d.reaching_bound(&sc.sigma0)?) };

    let csv_path = PathBuf::from(format!("{}.csv", out.display()));
    let mut w = BufWriter::new(File::create(&csv_path).map_err(|e| CliError::input(format!("cannot write {}: {e}", csv_path.display())))?);
    trace.write_csv(&mut w)?;
    w.flush()?;
    let json_path = PathBuf::from(format!("{}.reach.json", out.display()));
    std::fs::write(&json_path, to_json(&trace.reach_json(bound)))?;

    let show = |t: Option<f64>| t.map_or("not reached".to_string(), |t| format!("{t:.4} s"));
    println!("reach_time: {}", show(trace.reach_time));
    for (i, t) in trace.reach_time_per_state.iter().enumerate() {
        println!("reach_time sigma_{}: {}", i + 1, show(*t));
    }
    if let Some(b) = bound {
        println!("bound: {b:.4} s");
    }
    if let Some(t) = d.t_bound() {
        println!("T_bound: {t:.4} s");
    }
    Ok(())
}

/// `start:stop:steps[,log]`.
fn parse_grid(grid: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::input(format!("invalid grid {grid:?}; expected start:stop:steps[,log]"));
    let (range, log) = match grid.split_once(',') {
        Some((r, "log")) => (r, true),
        Some(_) => return Err(bad()),
        None => (grid, false),
    };
    let parts: Vec<&str> = range.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let start: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let stop: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let steps: usize = parts[2].trim().parse().map_err(|_| bad())?;
    if steps == 0 {
        return Err(CliError::input("grid is empty"));
    }
    if !(start > 0.0 && stop > 0.0 && start.is_finite() && stop.is_finite()) {
        return Err(CliError::input("grid values must be positive"));
    }
    if steps == 1 {
        return Ok(vec![start]);
    }
    let frac = |i: usize| i as f64 / (steps - 1) as f64;
    Ok((0..steps)
        .map(|i| {
            if log {
                (start.ln() + frac(i) * (stop.ln() - start.ln())).exp()
            } else {
                start + frac(i) * (stop - start)
            }
        })
        .collect())
}

fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    match jobs {
        None => Ok(f()),
        Some(0) => Err(CliError::input("--jobs must be at least 1")),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::input(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

fn cmd_sweep(config: &Path, grid: &str, out: Option<&Path>, jobs: Option<usize>, solver: &SolverFlags) -> Result<(), CliError> {
    let sc = Scenario::load(config)?;
    let grid = parse_grid(grid)?;
    let opts = solver.options();
    let points = with_jobs(jobs, || sweep(&sc.system, sc.law, &grid, sc.phi, &opts))??;
    let mut csv = String::from("param,T_bound,status\n");
    for p in &points {
        let t = p.t_bound.map_or(String::new(), |t| t.to_string());
        let status = if p.status.contains(',') { format!("\"{}\"", p.status.replace('"', "'")) } else { p.status.clone() };
        csv.push_str(&format!("{},{t},{status}\n", p.param));
    }
    match out {
        Some(p) => std::fs::write(p, csv).map_err(|e| CliError::input(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn cmd_montecarlo(
    design: &Path,
    config: &Path,
    trials: usize,
    seed: u64,
    jobs: Option<usize>,
    out: Option<&Path>,
    sim: &SimFlags,
) -> Result<(), CliError> {
    let mut sc = Scenario::load(config)?;
    sim.apply(&mut sc);
    let design = resolve_design(DesignFile::load(design)?, &sc, &SynthesisOptions::default())?;
    let d = design.as_dyn();
    let t_bound = d
        .t_bound()
        .ok_or_else(|| CliError::input("Monte-Carlo runs need a design with a reaching-time bound"))?;
    let cfg = sc.sim_config(smc_synth::tol::SIM_HORIZON_FACTOR * t_bound);
    let report = with_jobs(jobs, || empirical_vs_bound(d, &sc.system, trials, &cfg, seed))??;
    eprintln!(
        "{} trials: max reach/bound ratio {:.4}, {} violations, {} Lyapunov increases",
        report.trials.len(),
        report.max_ratio,
        report.violations.len(),
        report.lyapunov_violations
    );
    write_output(out, &to_json(&report))?;
    if report.violations.is_empty() && report.lyapunov_violations == 0 {
        Ok(())
    } else {
        Err(CliError::uncertified("bound violations observed"))
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth { config, out, solver } => cmd_synth(&config, out.as_deref(), &solver),
        Command::Verify { design, config, out, solver } => cmd_verify(&design, &config, out.as_deref(), &solver),
        Command::Simulate { design, config, vertex, alpha, out, sim } => {
            cmd_simulate(&design, &config, vertex, alpha, &out, &sim)
        }
        Command::Sweep { config, grid, out, jobs, solver } => cmd_sweep(&config, &grid, out.as_deref(), jobs, &solver),
        Command::Montecarlo { design, config, trials, seed, jobs, out, sim } => {
            cmd_montecarlo(&design, &config, trials, seed, jobs, out.as_deref(), &sim)
        }
    }
}

fn main() -> ExitCode {
    // Usage errors share exit code 1 with input errors.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.msg);
            ExitCode::from(e.code)
        }
    }
}
