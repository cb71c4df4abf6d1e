//! Experiment configuration: one JSON document, overridable by dotted path.

use std::fs;
use std::path::{Path, PathBuf};

use robust_insurance::{MarketParams, SimulationConfig, SolverConfig, SweepAxis};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            axis: SweepAxis::Gamma,
            values: vec![0.02, 0.1, 0.2, 0.3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub emit_csv: bool,
    pub emit_svg: bool,
    /// Keep every `stride`-th step of simulated paths.
    pub stride: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("out"),
            emit_csv: true,
            emit_svg: false,
            stride: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub market: MarketParams,
    pub solver: SolverConfig,
    pub simulation: SimulationConfig,
    pub sweep: SweepSpec,
    pub output: OutputConfig,
}

impl ExperimentConfig {
    /// Defaults, then the file, then each `key=value` override in order.
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut doc = serde_json::to_value(Self::default()).expect("defaults serialize");
        if let Some(path) = file {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            let layer: Value =
                serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            if !layer.is_object() {
                return Err(CliError::Config(format!(
                    "{}: top level must be an object",
                    path.display()
                )));
            }
            merge(&mut doc, layer);
        }
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let cfg: Self = serde_json::from_value(doc).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.market.validate()?;
        self.solver.validate()?;
        self.simulation.validate()?;
        if self.output.stride == 0 {
            return Err(CliError::Config("output.stride must be >= 1".into()));
        }
        Ok(())
    }
}

/// Recursive object merge; anything that is not an object replaces outright.
fn merge(base: &mut Value, layer: Value) {
    match (base, layer) {
        (Value::Object(b), Value::Object(l)) => {
            for (k, v) in l {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn apply_override(doc: &mut Value, spec: &str) -> Result<(), CliError> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{spec}` is not key=value")))?;
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::Config(format!("override `{spec}` has an empty key")));
    }
    // Bare words such as `gamma` or `reference` are taken as strings.
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut slot = &mut *doc;
    for (i, key) in keys.iter().enumerate() {
        let obj = slot
            .as_object_mut()
            .ok_or_else(|| CliError::Config(format!("`{}` is not a block", keys[..i].join("."))))?;
        if !obj.contains_key(*key) {
            return Err(CliError::Config(format!("unknown key `{path}`")));
        }
        slot = obj.get_mut(*key).unwrap();
    }
    *slot = value;
    Ok(())
}

/// Creates the directory and probes that it accepts files.
pub fn prepare_output(dir: &Path) -> Result<(), CliError> {
    let unwritable =
        |e: std::io::Error| CliError::Config(format!("output directory {} is not writable: {e}", dir.display()));
    fs::create_dir_all(dir).map_err(unwritable)?;
    let probe = dir.join(".robins-write-probe");
    fs::write(&probe, b"").map_err(unwritable)?;
    let _ = fs::remove_file(probe);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(file: Option<&str>, sets: &[&str]) -> Result<ExperimentConfig, CliError> {
        let dir = tempfile::tempdir().unwrap();
        let path = file.map(|text| {
            let p = dir.path().join("cfg.json");
            fs::write(&p, text).unwrap();
            p
        });
        let sets: Vec<String> = sets.iter().map(|s| s.to_string()).collect();
        ExperimentConfig::load(path.as_deref(), &sets)
    }

    #[test]
    fn defaults_are_the_benchmark() {
        let cfg = load(None, &[]).unwrap();
        assert_eq!(cfg.market, MarketParams::benchmark());
        assert_eq!(cfg.solver, SolverConfig::default());
    }

    #[test]
    fn flag_beats_file_beats_default() {
        let file = r#"{"market": {"rho": 0.2, "gamma": 0.1}}"#;
        let cfg = load(Some(file), &["market.rho=0.5"]).unwrap();
        assert_eq!(cfg.market.rho, 0.5);
        assert_eq!(cfg.market.gamma, 0.1);
        assert_eq!(cfg.market.theta, MarketParams::benchmark().theta);
    }

    #[test]
    fn later_overrides_win() {
        let cfg = load(None, &["solver.grid_size=101", "solver.grid_size=201"]).unwrap();
        assert_eq!(cfg.solver.grid_size, 201);
    }

    #[test]
    fn string_and_null_overrides() {
        let cfg = load(
            None,
            &["sweep.axis=theta", "simulation.measure=reference", "simulation.m0=1.0"],
        )
        .unwrap();
        assert_eq!(cfg.sweep.axis, SweepAxis::Theta);
        assert_eq!(cfg.simulation.m0, Some(1.0));
        let cfg = load(Some(r#"{"simulation": {"m0": 1.0}}"#), &["simulation.m0=null"]).unwrap();
        assert_eq!(cfg.simulation.m0, None);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(
            load(Some(r#"{"market": {"kappa": 1}}"#), &[]),
            Err(CliError::Config(_))
        ));
        assert!(matches!(load(Some(r#"{"plots": {}}"#), &[]), Err(CliError::Config(_))));
        assert!(matches!(load(None, &["market.kappa=1"]), Err(CliError::Config(_))));
        assert!(matches!(load(None, &["market.rho.x=1"]), Err(CliError::Config(_))));
        assert!(matches!(load(None, &["market.rho"]), Err(CliError::Config(_))));
    }

    #[test]
    fn invalid_blocks_are_config_errors() {
        let e = load(None, &["market.theta=0"]).unwrap_err();
        assert!(e.to_string().contains("theta"), "{e}");
        assert!(matches!(e, CliError::Config(_)));
        assert!(matches!(load(None, &["solver.grid_size=2"]), Err(CliError::Config(_))));
        assert!(matches!(load(None, &["output.stride=0"]), Err(CliError::Config(_))));
        assert!(matches!(load(Some("[1, 2]"), &[]), Err(CliError::Config(_))));
    }
}
