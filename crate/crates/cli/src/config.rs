//! Scenario files: the uncertain system, the control law and its
//! parameters, the initial state and simulation settings.

use std::path::Path;

use serde::Deserialize;
use serde_json::Value;
use smc_synth::lmi::ReachingSet;
use smc_synth::polytope::{rov_polytope, visual_servo_polytope, RovParams};
use smc_synth::sim::SimConfig;
use smc_synth::synthesis::{ControlLaw, Design};
use smc_synth::{Matrix, PolytopicSystem};

use crate::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSettings {
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub reg_eps: Option<f64>,
    pub reach_tol: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    system: Value,
    law: ControlLaw,
    xi_or_mu: f64,
    phi: f64,
    #[serde(default)]
    rho_fixed: Option<f64>,
    #[serde(default)]
    optimize: Option<bool>,
    sigma0: Vec<f64>,
    #[serde(default)]
    sim: SimSettings,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub system: PolytopicSystem,
    pub law: ControlLaw,
    pub xi_or_mu: f64,
    pub phi: f64,
    pub rho_fixed: Option<f64>,
    pub optimize: bool,
    pub sigma0: Vec<f64>,
    pub sim: SimSettings,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct VisualServoParams {
    phi_bar: f64,
    delta_bar: f64,
}

fn build_system(v: Value) -> Result<PolytopicSystem, CliError> {
    let Value::Object(mut obj) = v else {
        return Err(CliError::input("system must be a JSON object"));
    };
    let builder = obj.remove("builder");
    let vertices = obj.remove("vertices");
    match (builder, vertices) {
        (Some(_), Some(_)) => Err(CliError::input("system: give either a builder or explicit vertices, not both")),
        (None, None) => Err(CliError::input("system: missing builder or vertices")),
        (None, Some(vs)) => {
            let declared = (obj.remove("n"), obj.remove("m"));
            if let Some(k) = obj.keys().next() {
                return Err(CliError::input(format!("system: unknown field {k:?}")));
            }
            let vs: Vec<Matrix> = serde_json::from_value(vs).map_err(|e| CliError::input(format!("system.vertices: {e}")))?;
            let sys = PolytopicSystem::new(vs)?;
            if let Some(n) = &declared.0 {
                if n.as_u64() != Some(sys.n() as u64) {
                    return Err(CliError::input("system.n does not match the vertices"));
                }
            }
            if let Some(m) = &declared.1 {
                if m.as_u64() != Some(sys.m() as u64) {
                    return Err(CliError::input("system.m does not match the vertices"));
                }
            }
            Ok(sys)
        }
        (Some(b), None) => match b.as_str() {
            Some("visual_servo") => {
                let params: VisualServoParams = serde_json::from_value(Value::Object(obj))
                    .map_err(|e| CliError::input(format!("system (visual_servo): {e}")))?;
                Ok(visual_servo_polytope(params.phi_bar, params.delta_bar)?)
            }
            Some("rov") => {
                let params: RovParams = serde_json::from_value(Value::Object(obj))
                    .map_err(|e| CliError::input(format!("system (rov): {e}")))?;
                Ok(rov_polytope(&params)?)
            }
            _ => Err(CliError::input(format!("system: unknown builder {b}"))),
        },
    }
}

fn read_json(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::input(format!("{}: invalid JSON: {e}", path.display())))
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let raw: RawScenario = serde_json::from_value(read_json(path)?)
            .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        let system = build_system(raw.system).map_err(|e| e.context(&path.display().to_string()))?;
        if raw.sigma0.len() != system.n() {
            return Err(CliError::input(format!(
                "{}: sigma0 has length {}, system has n = {}",
                path.display(),
                raw.sigma0.len(),
                system.n()
            )));
        }
        Ok(Self {
            system,
            law: raw.law,
            xi_or_mu: raw.xi_or_mu,
            phi: raw.phi,
            rho_fixed: raw.rho_fixed,
            optimize: raw.optimize.unwrap_or(raw.rho_fixed.is_none()),
            sigma0: raw.sigma0,
            sim: raw.sim,
        })
    }

    /// Fixed `ρ` wins over optimization; otherwise `ρ` is minimized or left free.
    pub fn reaching(&self) -> ReachingSet {
        match (self.rho_fixed, self.optimize) {
            (Some(r), _) => ReachingSet::fixed(self.phi, r),
            (None, true) => ReachingSet::minimize(self.phi),
            (None, false) => ReachingSet::free(self.phi),
        }
    }

    /// Simulation settings with defaults for anything unset.
    pub fn sim_config(&self, horizon: f64) -> SimConfig {
        let mut cfg = SimConfig::with_horizon(self.sim.horizon.unwrap_or(horizon));
        if let Some(v) = self.sim.dt {
            cfg.dt = v;
        }
        if let Some(v) = self.sim.reg_eps {
            cfg.reg_eps = v;
        }
        if let Some(v) = self.sim.reach_tol {
            cfg.reach_tol = v;
        }
        if let Some(v) = self.sim.seed {
            cfg.seed = v;
        }
        cfg
    }
}

/// A design file: a full design, or only a law and a gain whose
/// certificate is searched for.
pub enum DesignFile {
    Full(Box<Design>),
    GainOnly { law: ControlLaw, k: Matrix },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GainOnly {
    law: ControlLaw,
    k: Matrix,
}

impl DesignFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let v = read_json(path)?;
        let is_full = v.get("p").is_some();
        if is_full {
            let d: Design = serde_json::from_value(v).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
            Ok(DesignFile::Full(Box::new(d)))
        } else {
            let g: GainOnly = serde_json::from_value(v).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
            Ok(DesignFile::GainOnly { law: g.law, k: g.k })
        }
    }
}
