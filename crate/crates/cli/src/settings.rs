use std::path::Path;

use restoration::conic::SolverSettings;
use restoration::engine::EngineConfig;
use restoration::models::EXACTNESS_THRESHOLD;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Environment variable naming a TOML file of default [`Settings`].
pub const SETTINGS_ENV: &str = "RESTORE_SETTINGS";

/// Tunable tolerances, read from a settings file and overridden by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub solver_tol: f64,
    pub max_iter: u32,
    pub integrality_tol: f64,
    pub binding_tol: f64,
    pub exactness_threshold: f64,
    pub dominance_margin: f64,
    pub ampacity_multiple: f64,
    pub kw_gap: f64,
    pub node_limit: usize,
    pub oracle_max_loads: usize,
}

impl Default for Settings {
    fn default() -> Self {
        let e = EngineConfig::default();
        let s = SolverSettings::<f64>::default();
        Settings {
            solver_tol: s.tol,
            max_iter: s.max_iter,
            integrality_tol: e.integrality_tol,
            binding_tol: e.binding_tol,
            exactness_threshold: EXACTNESS_THRESHOLD,
            dominance_margin: e.dominance_margin,
            ampacity_multiple: e.ampacity_multiple,
            kw_gap: e.kw_gap,
            node_limit: s.node_limit,
            oracle_max_loads: 16,
        }
    }
}

impl Settings {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Settings(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(path.display().to_string(), e))?;
        Self::from_toml(&text)
    }

    pub fn solver(&self) -> SolverSettings<f64> {
        SolverSettings {
            tol: self.solver_tol,
            max_iter: self.max_iter,
            node_limit: self.node_limit,
            ..SolverSettings::default()
        }
    }

    pub fn engine(&self, reference: Option<String>) -> EngineConfig {
        EngineConfig {
            integrality_tol: self.integrality_tol,
            binding_tol: self.binding_tol,
            exactness_threshold: self.exactness_threshold,
            dominance_margin: self.dominance_margin,
            ampacity_multiple: self.ampacity_multiple,
            kw_gap: self.kw_gap,
            reference,
            solver: self.solver(),
            ..EngineConfig::default()
        }
    }

    pub fn oracle(&self) -> restoration::oracle::OracleConfig {
        restoration::oracle::OracleConfig {
            max_loads: self.oracle_max_loads,
            exactness_threshold: self.exactness_threshold,
            solver: self.solver(),
            ..Default::default()
        }
    }

    pub fn check(&self) -> Result<(), CliError> {
        let positive = [
            ("solver_tol", self.solver_tol),
            ("integrality_tol", self.integrality_tol),
            ("binding_tol", self.binding_tol),
            ("exactness_threshold", self.exactness_threshold),
            ("dominance_margin", self.dominance_margin),
            ("ampacity_multiple", self.ampacity_multiple),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CliError::Settings(format!("{name} must be positive")));
            }
        }
        if !(self.integrality_tol < 0.5) {
            return Err(CliError::Settings("integrality_tol must be below 0.5".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let s = Settings::from_toml("solver_tol = 1e-9\n").unwrap();
        assert_eq!(s.solver_tol, 1e-9);
        assert_eq!(s.integrality_tol, 1e-4);
        assert!(Settings::from_toml("bogus = 1\n").is_err());
    }

    #[test]
    fn bad_values_rejected() {
        let s = Settings {
            integrality_tol: 0.7,
            ..Settings::default()
        };
        assert!(s.check().is_err());
        assert!(Settings::default().check().is_ok());
    }
}
