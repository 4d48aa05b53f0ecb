//! Scenario configuration: flat `key = value` text files in
//! experimentalist units (ordinary MHz, us), preset definitions, and the
//! conversion to the internal angular representation.
//!
//! Unknown keys are errors. Without a `preset` base every physics key
//! must be given explicitly; with one, file keys override the preset.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use sptrain_core::params::{angular_from_mhz, check_regime, derive};
use sptrain_core::pulse::{ShapeKind, TrainError};
use sptrain_core::{DerivedRates, PulseTrain, RawParams, RegimeWarning, SubpulseShape};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Parse { line: usize, text: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value for `{key}`: {reason}")]
    BadValue { line: usize, key: String, reason: String },
    #[error("unknown preset `{0}` (available: paper-d1, paper-d2)")]
    UnknownPreset(String),
    #[error("missing required key(s) without a preset base: {0}")]
    MissingKeys(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("pulse train: {0}")]
    Train(#[from] TrainError),
}

/// Subpulse profile selector as written in config files.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum PulseShapeKey {
    Gaussian,
    SineSquared,
    FlatTop,
}

impl PulseShapeKey {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "gaussian" => Some(Self::Gaussian),
            "sine-squared" => Some(Self::SineSquared),
            "flat-top" => Some(Self::FlatTop),
            _ => None,
        }
    }

    fn as_str(&self) -> &'static str {
        match self {
            Self::Gaussian => "gaussian",
            Self::SineSquared => "sine-squared",
            Self::FlatTop => "flat-top",
        }
    }

    fn kind(&self) -> ShapeKind {
        match self {
            Self::Gaussian => ShapeKind::Gaussian,
            Self::SineSquared => ShapeKind::SineSquared,
            Self::FlatTop => ShapeKind::FlatTop,
        }
    }
}

/// A fully resolved run description in boundary units. The MHz/us values
/// are the source of truth; angular quantities are derived on demand so a
/// load -> emit -> load round trip is bit-exact.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: String,
    // Physical rates, ordinary frequency in MHz.
    pub g1_mhz: f64,
    pub g2_mhz: f64,
    pub omega1_mhz: f64,
    pub omega2_mhz: f64,
    pub delta1_mhz: f64,
    pub delta2_mhz: f64,
    pub kappa_mhz: f64,
    pub gamma_42_mhz: f64,
    pub gamma_31_mhz: f64,
    pub gamma_4out_mhz: f64,
    pub gamma_3out_mhz: f64,
    pub gamma_sp_mhz: f64,
    pub delta_b_mhz: f64,
    // Pulse train, times in us.
    pub pulse_shape: PulseShapeKey,
    pub pulse_fwhm_us: f64,
    pub n_subpulses: usize,
    pub period_us: f64,
    pub tau_delay_us: f64,
    pub t_first_us: f64,
    // Grids.
    pub points_per_fwhm: usize,
    /// Delay-grid extent; `None` means `n_subpulses * period`.
    pub tau_max_us: Option<f64>,
    // Toggles.
    pub losses: bool,
    pub oracle: bool,
    pub g2_out_loss: bool,
    // Full-model settings.
    pub fock_cutoff: usize,
    // Solver tolerances.
    pub rel_tol: f64,
    pub abs_tol: f64,
    // Sweep settings (used by the sweep subcommand only).
    pub sweep_key: Option<String>,
    pub sweep_values: Option<Vec<f64>>,
}

/// Keys a config file must provide when no preset base is named.
const REQUIRED_KEYS: &[&str] = &[
    "g1_mhz",
    "g2_mhz",
    "omega1_mhz",
    "omega2_mhz",
    "delta1_mhz",
    "delta2_mhz",
    "kappa_mhz",
    "gamma_42_mhz",
    "gamma_31_mhz",
    "gamma_4out_mhz",
    "gamma_3out_mhz",
    "gamma_sp_mhz",
    "delta_b_mhz",
    "pulse_shape",
    "pulse_fwhm_us",
    "n_subpulses",
    "period_us",
    "tau_delay_us",
    "t_first_us",
    "points_per_fwhm",
    "losses",
    "oracle",
    "g2_out_loss",
    "fock_cutoff",
    "rel_tol",
    "abs_tol",
];

impl Scenario {
    /// Versioned immutable presets. `paper-d1` models the lossy line
    /// (every partial decay rate set to a third of the total upper-state
    /// decay); `paper-d2` is the noise-free cycling-transition idealization.
    pub fn preset(name: &str) -> Result<Self, ConfigError> {
        let base = Scenario {
            name: "paper-d1".to_owned(),
            g1_mhz: 10.0,
            g2_mhz: 10.0,
            omega1_mhz: 10.0,
            omega2_mhz: 10.0,
            delta1_mhz: 100.0,
            delta2_mhz: 100.0,
            kappa_mhz: 3.0,
            gamma_42_mhz: 2.0,
            gamma_31_mhz: 2.0,
            gamma_4out_mhz: 2.0,
            gamma_3out_mhz: 2.0,
            gamma_sp_mhz: 6.0,
            delta_b_mhz: 14.0,
            pulse_shape: PulseShapeKey::Gaussian,
            pulse_fwhm_us: 1.0,
            n_subpulses: 4,
            period_us: 6.0,
            tau_delay_us: 3.0,
            t_first_us: 0.0,
            points_per_fwhm: 40,
            tau_max_us: None,
            losses: true,
            oracle: true,
            g2_out_loss: true,
            fock_cutoff: 3,
            rel_tol: 1e-9,
            abs_tol: 1e-12,
            sweep_key: None,
            sweep_values: None,
        };
        match name {
            "paper-d1" => Ok(base),
            "paper-d2" => Ok(Scenario { name: "paper-d2".to_owned(), losses: false, ..base }),
            other => Err(ConfigError::UnknownPreset(other.to_owned())),
        }
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse_str(&text)
    }

    /// Parse config text. A `preset` key anywhere selects the base; the
    /// remaining keys are applied in file order on top of it.
    pub fn parse_str(text: &str) -> Result<Self, ConfigError> {
        let mut entries: Vec<(usize, String, String)> = Vec::new();
        for (i, raw_line) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = match raw_line.find('#') {
                Some(pos) => &raw_line[..pos],
                None => raw_line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::Parse { line: line_no, text: raw_line.trim().to_owned() });
            };
            entries.push((line_no, key.trim().to_owned(), value.trim().to_owned()));
        }

        let preset = entries.iter().find(|(_, k, _)| k == "preset");
        let (mut scenario, from_preset) = match preset {
            Some((_, _, value)) => (Self::preset(value)?, true),
            None => (Self::preset("paper-d1")?, false),
        };
        if !from_preset {
            scenario.name = "custom".to_owned();
            let mut seen: BTreeMap<&str, bool> =
                REQUIRED_KEYS.iter().map(|k| (*k, false)).collect();
            for (_, k, _) in &entries {
                if let Some(flag) = seen.get_mut(k.as_str()) {
                    *flag = true;
                }
            }
            let missing: Vec<&str> =
                seen.iter().filter(|(_, seen)| !**seen).map(|(k, _)| *k).collect();
            if !missing.is_empty() {
                return Err(ConfigError::MissingKeys(missing.join(", ")));
            }
        }
        for (line, key, value) in &entries {
            if key == "preset" {
                continue;
            }
            scenario.apply_kv(key, value, *line)?;
        }
        scenario.validate()?;
        Ok(scenario)
    }

    /// Apply one `key = value` assignment (config line or `--override`).
    pub fn apply_kv(&mut self, key: &str, value: &str, line: usize) -> Result<(), ConfigError> {
        let bad = |reason: String| ConfigError::BadValue {
            line,
            key: key.to_owned(),
            reason,
        };
        let parse_f64 = |value: &str| -> Result<f64, ConfigError> {
            value
                .parse::<f64>()
                .map_err(|e| bad(format!("{e}")))
                .and_then(|v| {
                    if v.is_finite() {
                        Ok(v)
                    } else {
                        Err(bad("must be finite".to_owned()))
                    }
                })
        };
        let parse_rate = |value: &str| -> Result<f64, ConfigError> {
            let v = parse_f64(value)?;
            if v < 0.0 {
                return Err(bad("rates must be nonnegative".to_owned()));
            }
            Ok(v)
        };
        let parse_usize = |value: &str| -> Result<usize, ConfigError> {
            value.parse::<usize>().map_err(|e| bad(format!("{e}")))
        };
        let parse_bool = |value: &str| -> Result<bool, ConfigError> {
            match value {
                "on" | "true" => Ok(true),
                "off" | "false" => Ok(false),
                _ => Err(bad("expected on/off".to_owned())),
            }
        };
        match key {
            "name" => self.name = value.to_owned(),
            "g1_mhz" => self.g1_mhz = parse_rate(value)?,
            "g2_mhz" => self.g2_mhz = parse_rate(value)?,
            "omega1_mhz" => self.omega1_mhz = parse_rate(value)?,
            "omega2_mhz" => self.omega2_mhz = parse_rate(value)?,
            "delta1_mhz" => self.delta1_mhz = parse_rate(value)?,
            "delta2_mhz" => self.delta2_mhz = parse_rate(value)?,
            "kappa_mhz" => self.kappa_mhz = parse_rate(value)?,
            "gamma_42_mhz" => self.gamma_42_mhz = parse_rate(value)?,
            "gamma_31_mhz" => self.gamma_31_mhz = parse_rate(value)?,
            "gamma_4out_mhz" => self.gamma_4out_mhz = parse_rate(value)?,
            "gamma_3out_mhz" => self.gamma_3out_mhz = parse_rate(value)?,
            "gamma_sp_mhz" => self.gamma_sp_mhz = parse_rate(value)?,
            "delta_b_mhz" => self.delta_b_mhz = parse_rate(value)?,
            "pulse_shape" => {
                self.pulse_shape = PulseShapeKey::parse(value)
                    .ok_or_else(|| bad("expected gaussian, sine-squared or flat-top".into()))?
            }
            "pulse_fwhm_us" => self.pulse_fwhm_us = parse_rate(value)?,
            "n_subpulses" => self.n_subpulses = parse_usize(value)?,
            "period_us" => self.period_us = parse_f64(value)?,
            "tau_delay_us" => self.tau_delay_us = parse_f64(value)?,
            "t_first_us" => self.t_first_us = parse_f64(value)?,
            "points_per_fwhm" => self.points_per_fwhm = parse_usize(value)?,
            "tau_max_us" => {
                self.tau_max_us = if value == "auto" { None } else { Some(parse_f64(value)?) }
            }
            "losses" => self.losses = parse_bool(value)?,
            "oracle" => self.oracle = parse_bool(value)?,
            "g2_out_loss" => self.g2_out_loss = parse_bool(value)?,
            "fock_cutoff" => self.fock_cutoff = parse_usize(value)?,
            "rel_tol" => self.rel_tol = parse_f64(value)?,
            "abs_tol" => self.abs_tol = parse_f64(value)?,
            "sweep_key" => self.sweep_key = Some(value.to_owned()),
            "sweep_values" => {
                let vals: Result<Vec<f64>, _> =
                    value.split(',').map(|v| v.trim().parse::<f64>()).collect();
                self.sweep_values = Some(vals.map_err(|e| bad(format!("{e}")))?);
            }
            _ => return Err(ConfigError::UnknownKey { line, key: key.to_owned() }),
        }
        Ok(())
    }

    /// Structural checks beyond per-key parsing.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.raw_params()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.pulse_train()?;
        if self.points_per_fwhm == 0 {
            return Err(ConfigError::Invalid("points_per_fwhm must be at least 1".into()));
        }
        if self.fock_cutoff == 0 {
            return Err(ConfigError::Invalid("fock_cutoff must be at least 1".into()));
        }
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(ConfigError::Invalid("tolerances must be positive".into()));
        }
        if let Some(tau) = self.tau_max_us {
            if !(tau > 0.0) {
                return Err(ConfigError::Invalid("tau_max_us must be positive".into()));
            }
        }
        if let Some(values) = &self.sweep_values {
            if values.is_empty() {
                return Err(ConfigError::Invalid("sweep_values must not be empty".into()));
            }
        }
        Ok(())
    }

    /// Internal angular parameters. With `losses = off` the four partial
    /// decay rates are zeroed: the noise-free idealization.
    pub fn raw_params(&self) -> RawParams {
        let loss = |v: f64| if self.losses { angular_from_mhz(v) } else { 0.0 };
        RawParams {
            g1: angular_from_mhz(self.g1_mhz),
            g2: angular_from_mhz(self.g2_mhz),
            omega1: angular_from_mhz(self.omega1_mhz),
            omega2: angular_from_mhz(self.omega2_mhz),
            delta1: angular_from_mhz(self.delta1_mhz),
            delta2: angular_from_mhz(self.delta2_mhz),
            kappa: angular_from_mhz(self.kappa_mhz),
            gamma_42: loss(self.gamma_42_mhz),
            gamma_31: loss(self.gamma_31_mhz),
            gamma_4out: loss(self.gamma_4out_mhz),
            gamma_3out: loss(self.gamma_3out_mhz),
            gamma_sp: angular_from_mhz(self.gamma_sp_mhz),
            delta_b: angular_from_mhz(self.delta_b_mhz),
        }
    }

    pub fn derived(&self) -> Result<DerivedRates, ConfigError> {
        derive(&self.raw_params()).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn pulse_train(&self) -> Result<PulseTrain, ConfigError> {
        let shape = SubpulseShape::new(self.pulse_shape.kind(), self.pulse_fwhm_us)?;
        Ok(PulseTrain::new(
            shape,
            self.n_subpulses,
            self.period_us,
            self.tau_delay_us,
            self.t_first_us,
        )?)
    }

    /// Regime warnings for the resolved parameters.
    pub fn warnings(&self) -> Result<Vec<RegimeWarning>, ConfigError> {
        let raw = self.raw_params();
        let derived = self.derived()?;
        Ok(check_regime(&raw, &derived))
    }

    /// Uniform output grid covering the train support at the configured
    /// density, padded past the last pulse so cavity ring-down and final
    /// populations are captured.
    pub fn time_grid(&self) -> Result<Vec<f64>, ConfigError> {
        let train = self.pulse_train()?;
        let kappa = angular_from_mhz(self.kappa_mhz);
        let pad = (12.0 / kappa).max(1.0);
        let t0 = train.support_start();
        let t1 = train.support_end() + pad;
        Ok(uniform_grid(t0, t1, self.grid_step(), self.points_per_fwhm))
    }

    /// Delay grid `[0, tau_max]` at the same density as the time grid.
    pub fn tau_grid(&self) -> Vec<f64> {
        let tau_max = self.tau_max_us.unwrap_or_else(|| {
            if self.n_subpulses > 0 {
                self.n_subpulses as f64 * self.period_us
            } else {
                self.period_us
            }
        });
        uniform_grid(0.0, tau_max, self.grid_step(), self.points_per_fwhm)
    }

    fn grid_step(&self) -> f64 {
        if self.pulse_fwhm_us > 0.0 {
            self.pulse_fwhm_us / self.points_per_fwhm as f64
        } else {
            self.period_us.max(1.0) / self.points_per_fwhm as f64
        }
    }

    /// Emit the scenario as config text; reparsing yields an identical
    /// scenario. The float formatting is shortest-round-trip.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "name = {}", self.name);
        let _ = writeln!(s, "g1_mhz = {}", self.g1_mhz);
        let _ = writeln!(s, "g2_mhz = {}", self.g2_mhz);
        let _ = writeln!(s, "omega1_mhz = {}", self.omega1_mhz);
        let _ = writeln!(s, "omega2_mhz = {}", self.omega2_mhz);
        let _ = writeln!(s, "delta1_mhz = {}", self.delta1_mhz);
        let _ = writeln!(s, "delta2_mhz = {}", self.delta2_mhz);
        let _ = writeln!(s, "kappa_mhz = {}", self.kappa_mhz);
        let _ = writeln!(s, "gamma_42_mhz = {}", self.gamma_42_mhz);
        let _ = writeln!(s, "gamma_31_mhz = {}", self.gamma_31_mhz);
        let _ = writeln!(s, "gamma_4out_mhz = {}", self.gamma_4out_mhz);
        let _ = writeln!(s, "gamma_3out_mhz = {}", self.gamma_3out_mhz);
        let _ = writeln!(s, "gamma_sp_mhz = {}", self.gamma_sp_mhz);
        let _ = writeln!(s, "delta_b_mhz = {}", self.delta_b_mhz);
        let _ = writeln!(s, "pulse_shape = {}", self.pulse_shape.as_str());
        let _ = writeln!(s, "pulse_fwhm_us = {}", self.pulse_fwhm_us);
        let _ = writeln!(s, "n_subpulses = {}", self.n_subpulses);
        let _ = writeln!(s, "period_us = {}", self.period_us);
        let _ = writeln!(s, "tau_delay_us = {}", self.tau_delay_us);
        let _ = writeln!(s, "t_first_us = {}", self.t_first_us);
        let _ = writeln!(s, "points_per_fwhm = {}", self.points_per_fwhm);
        match self.tau_max_us {
            Some(v) => {
                let _ = writeln!(s, "tau_max_us = {v}");
            }
            None => {
                let _ = writeln!(s, "tau_max_us = auto");
            }
        }
        let _ = writeln!(s, "losses = {}", onoff(self.losses));
        let _ = writeln!(s, "oracle = {}", onoff(self.oracle));
        let _ = writeln!(s, "g2_out_loss = {}", onoff(self.g2_out_loss));
        let _ = writeln!(s, "fock_cutoff = {}", self.fock_cutoff);
        let _ = writeln!(s, "rel_tol = {}", self.rel_tol);
        let _ = writeln!(s, "abs_tol = {}", self.abs_tol);
        if let Some(key) = &self.sweep_key {
            let _ = writeln!(s, "sweep_key = {key}");
        }
        if let Some(values) = &self.sweep_values {
            let joined: Vec<String> = values.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(s, "sweep_values = {}", joined.join(","));
        }
        s
    }
}

fn onoff(v: bool) -> &'static str {
    if v {
        "on"
    } else {
        "off"
    }
}

/// Uniform closed grid from `t0` to `t1` with step at most `step`.
pub fn uniform_grid(t0: f64, t1: f64, step: f64, min_points: usize) -> Vec<f64> {
    let n = (((t1 - t0) / step).ceil() as usize).max(min_points).max(2);
    (0..=n).map(|i| t0 + (t1 - t0) * i as f64 / n as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_round_trip_to_documented_values() {
        let d1 = Scenario::preset("paper-d1").unwrap();
        assert_eq!(d1.g1_mhz, 10.0);
        assert_eq!(d1.kappa_mhz, 3.0);
        assert_eq!(d1.gamma_sp_mhz, 6.0);
        assert_eq!(d1.omega1_mhz, 10.0);
        assert_eq!(d1.delta1_mhz, 100.0);
        assert_eq!(d1.pulse_fwhm_us, 1.0);
        assert_eq!(d1.tau_delay_us, 3.0);
        assert_eq!(d1.n_subpulses, 4);
        assert!(d1.losses);

        let d2 = Scenario::preset("paper-d2").unwrap();
        assert!(!d2.losses);
        // The cycling idealization zeroes every partial decay channel.
        let raw = d2.raw_params();
        assert_eq!(raw.gamma_42, 0.0);
        assert_eq!(raw.gamma_4out, 0.0);

        assert!(Scenario::preset("nope").is_err());
    }

    #[test]
    fn paper_preset_has_no_warnings() {
        let d1 = Scenario::preset("paper-d1").unwrap();
        assert!(d1.warnings().unwrap().is_empty());
    }

    #[test]
    fn config_round_trip_is_identity() {
        let mut s = Scenario::preset("paper-d1").unwrap();
        s.sweep_key = Some("omega1_mhz".to_owned());
        s.sweep_values = Some(vec![5.0, 10.0, 20.0]);
        s.tau_max_us = Some(7.25);
        let text = s.to_config_string();
        let back = Scenario::parse_str(&text).unwrap();
        assert_eq!(s, back);

        // And again with the auto delay grid.
        s.tau_max_us = None;
        let back = Scenario::parse_str(&s.to_config_string()).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let err = Scenario::parse_str("preset = paper-d1\nomega_mhz = 3\n").unwrap_err();
        assert!(matches!(err, ConfigError::UnknownKey { line: 2, .. }));

        let err = Scenario::parse_str("preset = paper-d1\nomega1_mhz = -3\n").unwrap_err();
        assert!(matches!(err, ConfigError::BadValue { line: 2, .. }));

        let err = Scenario::parse_str("preset = paper-d1\nnot a kv line\n").unwrap_err();
        assert!(matches!(err, ConfigError::Parse { line: 2, .. }));

        // Overlapping pulses are a config error.
        let err =
            Scenario::parse_str("preset = paper-d1\ntau_delay_us = 0.5\n").unwrap_err();
        assert!(matches!(err, ConfigError::Train(_)));
    }

    #[test]
    fn full_explicit_config_requires_all_keys() {
        let err = Scenario::parse_str("g1_mhz = 10\n").unwrap_err();
        assert!(matches!(err, ConfigError::MissingKeys(_)));

        // The emitted form of a preset is complete, so it parses without
        // naming the preset.
        let text = Scenario::preset("paper-d2").unwrap().to_config_string();
        let s = Scenario::parse_str(&text).unwrap();
        assert_eq!(s.name, "paper-d2");
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let s = Scenario::parse_str(
            "# base\npreset = paper-d1\n\nomega1_mhz = 5 # half drive\n",
        )
        .unwrap();
        assert_eq!(s.omega1_mhz, 5.0);
    }

    #[test]
    fn grids_cover_support_with_density() {
        let s = Scenario::preset("paper-d1").unwrap();
        let grid = s.time_grid().unwrap();
        let train = s.pulse_train().unwrap();
        assert!(grid[0] <= train.support_start());
        assert!(*grid.last().unwrap() >= train.support_end() + 1.0);
        let step = grid[1] - grid[0];
        assert!(step <= 1.0 / 40.0 + 1e-12);
        let taus = s.tau_grid();
        assert_eq!(taus[0], 0.0);
        assert!((taus.last().unwrap() - 24.0).abs() < 1e-12);
    }
}
