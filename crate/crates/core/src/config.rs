//! Experiment configuration, read from JSON or TOML and range-checked before
//! any computation starts.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::FadingScenario;
use crate::error::{Error, Result};
use crate::optimizer::{ArmijoConfig, InitStrategy};
use crate::system::PowerConvention;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "proposed_iterI")]
    ProposedIterI,
    #[serde(rename = "proposed_iterII")]
    ProposedIterII,
    #[serde(rename = "proposed_distributed")]
    ProposedDistributed,
    #[serde(rename = "proposed_naive")]
    ProposedNaive,
    #[serde(rename = "best_relay_naive")]
    BestRelayNaive,
    #[serde(rename = "conventional_af_naive")]
    ConventionalAfNaive,
}

impl Scheme {
    pub const ALL: [Scheme; 6] = [
        Scheme::ProposedIterI,
        Scheme::ProposedIterII,
        Scheme::ProposedDistributed,
        Scheme::ProposedNaive,
        Scheme::BestRelayNaive,
        Scheme::ConventionalAfNaive,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::ProposedIterI => "proposed_iterI",
            Scheme::ProposedIterII => "proposed_iterII",
            Scheme::ProposedDistributed => "proposed_distributed",
            Scheme::ProposedNaive => "proposed_naive",
            Scheme::BestRelayNaive => "best_relay_naive",
            Scheme::ConventionalAfNaive => "conventional_af_naive",
        }
    }

    pub fn is_optimized(&self) -> bool {
        matches!(
            self,
            Scheme::ProposedIterI | Scheme::ProposedIterII | Scheme::ProposedDistributed
        )
    }

    /// The fading scenario a scheme is restricted to, if any.
    pub fn required_scenario(&self) -> Option<FadingScenario> {
        match self {
            Scheme::ProposedIterI => Some(FadingScenario::SlowFading),
            Scheme::ProposedDistributed => Some(FadingScenario::BlockPerTwoSlots),
            _ => None,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: FadingScenario,
    pub scheme: Scheme,
    /// Antennas per node.
    pub m: usize,
    pub snr_grid_db: Vec<f64>,
    /// Trials per SNR for rate curves.
    pub trials: usize,
    /// Trials per SNR for outage curves.
    pub outage_trials: usize,
    pub seed: u64,
    pub power_convention: PowerConvention,
    /// `I_out` in bits/s/Hz.
    pub outage_threshold_bits: f64,
    pub epsilon_outage: f64,
    pub armijo: ArmijoConfig,
    pub init: InitStrategy,
    /// Slot pairs averaged per trial in the time-varying scenarios, after
    /// the bootstrap pair.
    pub window_pairs: usize,
    /// SNR pair (dB) for the high-SNR slope estimate.
    pub dof_snr_db: [f64; 2],
    /// SNR (dB) at which convergence traces are collected.
    pub converge_snr_db: f64,
    /// Largest fraction of trials that may be redrawn after a numerical
    /// failure.
    pub max_resample_fraction: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scenario: FadingScenario::SlowFading,
            scheme: Scheme::ProposedNaive,
            m: 4,
            snr_grid_db: vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
            trials: 500,
            outage_trials: 2000,
            seed: 1,
            power_convention: PowerConvention::Equal,
            outage_threshold_bits: 2.0,
            epsilon_outage: 0.1,
            armijo: ArmijoConfig::default(),
            init: InitStrategy::default(),
            window_pairs: 4,
            dof_snr_db: [40.0, 60.0],
            converge_snr_db: 30.0,
            max_resample_fraction: 0.01,
        }
    }
}

impl ExperimentConfig {
    /// Every range problem, in field order.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.m < 2 || self.m % 2 != 0 {
            out.push(format!("M must be even and at least 2, got {}", self.m));
        }
        if self.snr_grid_db.is_empty() {
            out.push("snr_grid_db must not be empty".into());
        }
        if self.snr_grid_db.iter().any(|s| !s.is_finite()) {
            out.push("snr_grid_db entries must be finite".into());
        }
        if self.trials == 0 {
            out.push("trials must be at least 1".into());
        }
        if self.outage_trials == 0 {
            out.push("outage_trials must be at least 1".into());
        }
        if !(self.outage_threshold_bits.is_finite() && self.outage_threshold_bits >= 0.0) {
            out.push(format!(
                "outage_threshold_bits must be finite and nonnegative, got {}",
                self.outage_threshold_bits
            ));
        }
        if !(0.0..=1.0).contains(&self.epsilon_outage) {
            out.push(format!("epsilon_outage must lie in [0, 1], got {}", self.epsilon_outage));
        }
        out.extend(self.armijo.problems());
        if let InitStrategy::PerturbedNaive { scale } = self.init {
            if !(scale.is_finite() && scale >= 0.0) {
                out.push(format!("init scale must be finite and nonnegative, got {scale}"));
            }
        }
        if self.window_pairs == 0 {
            out.push("window_pairs must be at least 1".into());
        }
        let [lo, hi] = self.dof_snr_db;
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            out.push(format!("dof_snr_db must be finite and increasing, got [{lo}, {hi}]"));
        }
        if !self.converge_snr_db.is_finite() {
            out.push("converge_snr_db must be finite".into());
        }
        if !(0.0..=1.0).contains(&self.max_resample_fraction) {
            out.push(format!(
                "max_resample_fraction must lie in [0, 1], got {}",
                self.max_resample_fraction
            ));
        }
        if let Some(required) = self.scheme.required_scenario() {
            if required != self.scenario {
                out.push(format!(
                    "scheme {} requires scenario {}, got {}",
                    self.scheme,
                    required.name(),
                    self.scenario.name()
                ));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConfigFormat {
    Json,
    Toml,
}

impl ConfigFormat {
    /// TOML for a `.toml` extension, JSON otherwise.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("toml") => ConfigFormat::Toml,
            _ => ConfigFormat::Json,
        }
    }
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str, format: ConfigFormat) -> Result<ExperimentConfig> {
    let parsed: std::result::Result<ExperimentConfig, String> = match format {
        ConfigFormat::Json => serde_json::from_str(text).map_err(|e| e.to_string()),
        ConfigFormat::Toml => toml::from_str(text).map_err(|e| e.to_string()),
    };
    let cfg = parsed.map_err(|e| Error::Config(vec![format!("parse error: {}", e.trim())]))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Reads, parses and validates the configuration at `path`.
pub fn validate_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(vec![format!("cannot read {}: {e}", path.display())]))?;
    parse_config(&text, ConfigFormat::from_path(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problems_of(json: &str) -> Vec<String> {
        match parse_config(json, ConfigFormat::Json) {
            Err(Error::Config(p)) => p,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn defaults_are_valid() {
        let cfg = parse_config("{}", ConfigFormat::Json).unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.armijo.zeta, 0.2);
        assert_eq!(cfg.armijo.nu, 0.5);
        assert_eq!(cfg.armijo.epsilon, 1e-2);
        assert_eq!(cfg.outage_threshold_bits, 2.0);
        assert_eq!(cfg.epsilon_outage, 0.1);
    }

    #[test]
    fn odd_antenna_count_rejected() {
        let p = problems_of(r#"{"m": 3}"#);
        assert!(p.iter().any(|s| s.contains("M must be even")));
    }

    #[test]
    fn out_of_range_zeta_rejected() {
        let p = problems_of(r#"{"armijo": {"zeta": 1.5}}"#);
        assert!(p.iter().any(|s| s.contains("zeta")));
    }

    #[test]
    fn problems_are_aggregated() {
        let p = problems_of(r#"{"m": 3, "trials": 0, "epsilon_outage": 2.0, "armijo": {"nu": 0.0}}"#);
        assert_eq!(p.len(), 4, "{p:?}");
    }

    #[test]
    fn scheme_scenario_mismatch_rejected() {
        let p = problems_of(r#"{"scheme": "proposed_iterI", "scenario": "block_per_slot"}"#);
        assert!(p[0].contains("requires scenario slow_fading"));
    }

    #[test]
    fn unknown_field_rejected() {
        let p = problems_of(r#"{"antennas": 4}"#);
        assert!(p[0].starts_with("parse error"));
    }

    #[test]
    fn toml_reader_matches_json() {
        let toml_text = "scheme = \"proposed_distributed\"\nscenario = \"block_per_two_slots\"\nm = 2\nsnr_grid_db = [10.0, 20.0]\n\n[armijo]\nepsilon = 0.001\n\n[init]\nkind = \"random\"\n";
        let json_text = r#"{"scheme": "proposed_distributed", "scenario": "block_per_two_slots", "m": 2,
            "snr_grid_db": [10.0, 20.0], "armijo": {"epsilon": 0.001}, "init": {"kind": "random"}}"#;
        let a = parse_config(toml_text, ConfigFormat::Toml).unwrap();
        let b = parse_config(json_text, ConfigFormat::Json).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.init, InitStrategy::Random);
    }

    #[test]
    fn round_trip_through_json() {
        let cfg = ExperimentConfig {
            scheme: Scheme::ProposedIterII,
            scenario: FadingScenario::BlockPerSlot,
            ..Default::default()
        };
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        assert_eq!(parse_config(&text, ConfigFormat::Json).unwrap(), cfg);
        assert!(text.contains("\"proposed_iterII\""));
    }

    #[test]
    fn missing_file_is_a_config_error() {
        let err = validate_config(Path::new("/nonexistent/config.json")).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }
}
