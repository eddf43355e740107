//! Scenario configuration: a versioned JSON document with unit-suffixed
//! quantities, resolved into validated simulator inputs at load time.

use serde::Deserialize;
use std::path::{Path, PathBuf};
use thiserror::Error;

use tripwire_core::detection::DetectionError;
use tripwire_core::interferometer::InterferometerError;
use tripwire_core::io::RecordFormat;
use tripwire_core::monitor::MonitorError;
use tripwire_core::units::SINC_GAUSSIAN_FACTOR;
use tripwire_core::{
    AlarmConfig, Corner, DetectorModel, DetectorWindow, IntrusionScenario, PerimeterGeometry,
    PhaseMode, SourceError, SourceParams,
};

use crate::quantity::{Angle, Dispersion, Frequency, Length, Time};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    /// serde_json reports line and column.
    #[error("{path}: {source}")]
    Syntax {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{path}: unsupported schema_version {found} (expected {SCHEMA_VERSION})")]
    Schema { path: PathBuf, found: u32 },
    #[error("field `{field}`: {message}")]
    Invalid {
        field: &'static str,
        message: String,
    },
}

fn invalid(field: &'static str, message: impl ToString) -> ConfigError {
    ConfigError::Invalid {
        field,
        message: message.to_string(),
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    pub source: SourceSection,
    pub geometry: GeometrySection,
    #[serde(default)]
    pub detector: DetectorSection,
    #[serde(default)]
    pub scenario: ScenarioSpec,
    #[serde(default)]
    pub schedule: ScheduleSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub alarm: AlarmSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub analytic: AnalyticSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSection {
    pub pump_wavelength: Length,
    pub idler_bandwidth: Frequency,
    pub herald_rate: Frequency,
    pub crystal_length: Option<Length>,
    pub group_velocity_mismatch: Option<Dispersion>,
    pub sinc_gaussian_factor: Option<f64>,
    #[serde(default = "yes")]
    pub compensate_delay: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    pub left: Length,
    pub top: Length,
    pub right: Length,
    /// Defaults to the balanced length.
    pub bottom: Option<Length>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSection {
    /// Defaults to √β.
    pub resolving_time: Option<Time>,
    pub efficiency_w1: f64,
    pub efficiency_w2: f64,
    pub dark_count_rate: Frequency,
}

impl Default for DetectorSection {
    fn default() -> Self {
        DetectorSection {
            resolving_time: None,
            efficiency_w1: 1.0,
            efficiency_w2: 1.0,
            dark_count_rate: Frequency(0.0),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScenarioSpec {
    #[default]
    Normal,
    Block,
    SideIntrusion {
        delta: Time,
        /// Explicit phase offset; otherwise derived from `delta`.
        xi: Option<Angle>,
        /// Wavelength converting `delta` to a phase; defaults to the pump.
        xi_wavelength: Option<Length>,
    },
    CrossIntrusion {
        phi_int: Angle,
        corner: Corner,
    },
    InterceptResend,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    pub mode: PhaseMode,
    /// Constant (φ₁, φ₂) for fixed-secret mode; a random string otherwise.
    pub phases: Option<[Angle; 2]>,
    pub broadcast_delay: Time,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        ScheduleSection {
            mode: PhaseMode::FixedSecret,
            phases: None,
            broadcast_delay: Time(0.0),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub heralds: Option<usize>,
    pub duration: Option<Time>,
    /// Herald index at which the scenario starts; earlier heralds see a normal perimeter.
    pub intrusion_onset: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlarmSection {
    pub nu: f64,
    pub epsilon: [f64; 2],
    pub window: usize,
    pub calibration_heralds: usize,
    pub match_threshold: Option<f64>,
}

impl Default for AlarmSection {
    fn default() -> Self {
        let d = AlarmConfig::default();
        AlarmSection {
            nu: d.nu,
            epsilon: d.epsilon,
            window: d.window,
            calibration_heralds: 10_000,
            match_threshold: d.match_threshold,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub delta_min: Time,
    pub delta_max: Time,
    pub points: usize,
    pub xi: Option<Angle>,
    pub oracle_resolution: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            delta_min: Time(0.0),
            delta_max: Time(0.3),
            points: 301,
            xi: None,
            oracle_resolution: 4096,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalyticSection {
    pub delta_max: Time,
    pub delta_points: usize,
    pub phi_points: usize,
    pub oracle_resolution: usize,
}

impl Default for AnalyticSection {
    fn default() -> Self {
        AnalyticSection {
            delta_max: Time(0.3),
            delta_points: 7,
            phi_points: 8,
            oracle_resolution: 4096,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub records: Option<PathBuf>,
    pub schedule: Option<PathBuf>,
    pub summary: Option<PathBuf>,
    pub format: Option<RecordFormat>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RunLength {
    Heralds(usize),
    Duration(f64),
}

/// Fully validated inputs for every subcommand.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub seed: u64,
    pub source: SourceParams,
    pub geometry: PerimeterGeometry,
    pub detector: DetectorModel,
    pub scenario: IntrusionScenario,
    pub mode: PhaseMode,
    pub fixed_phases: Option<(f64, f64)>,
    pub broadcast_delay: f64,
    pub run_length: RunLength,
    pub intrusion_onset: Option<usize>,
    pub alarm: AlarmConfig,
    pub calibration_heralds: usize,
    pub sweep: SweepSection,
    pub analytic: AnalyticSection,
    pub output: OutputSection,
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        // check the version before the full schema so old files get a clear message
        #[derive(Deserialize)]
        struct Version {
            schema_version: Option<u32>,
        }
        let version: Version =
            serde_json::from_str(text).map_err(|source| ConfigError::Syntax {
                path: path.to_path_buf(),
                source,
            })?;
        match version.schema_version {
            Some(SCHEMA_VERSION) | None => {}
            Some(found) => {
                return Err(ConfigError::Schema {
                    path: path.to_path_buf(),
                    found,
                })
            }
        }
        serde_json::from_str(text).map_err(|source| ConfigError::Syntax {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn resolve(&self) -> Result<Resolved, ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(
                "schema_version",
                format!("expected {SCHEMA_VERSION}"),
            ));
        }
        let src = &self.source;
        let mut source = SourceParams::from_pump_wavelength(
            src.pump_wavelength.nanometres(),
            src.idler_bandwidth.0,
            src.herald_rate.0,
        )
        .map_err(|e| source_field(&e))?;
        source.crystal_length_mm = src.crystal_length.map_or(0.0, Length::millimetres);
        source.group_velocity_mismatch = src.group_velocity_mismatch.map_or(0.0, |d| d.0);
        source.sinc_gaussian_factor = src.sinc_gaussian_factor.unwrap_or(SINC_GAUSSIAN_FACTOR);
        source.compensate_delay = src.compensate_delay;
        source.validate().map_err(|e| source_field(&e))?;
        let beta = source.beta().map_err(|e| source_field(&e))?;

        let g = &self.geometry;
        let geometry = match g.bottom {
            None => PerimeterGeometry::balanced(g.left.0, g.top.0, g.right.0),
            Some(b) => PerimeterGeometry::new(g.left.0, g.top.0, g.right.0, b.0)
                .and_then(|geo| geo.check_balanced().map(|_| geo)),
        }
        .map_err(|e| invalid("geometry", e))?;

        let d = &self.detector;
        let window = DetectorWindow::new(d.resolving_time.map_or(beta.sqrt(), |t| t.0))
            .map_err(|e| invalid("detector.resolving_time", e))?;
        let detector = DetectorModel {
            efficiency_w1: d.efficiency_w1,
            efficiency_w2: d.efficiency_w2,
            dark_count_rate: d.dark_count_rate.0,
            window,
        };
        detector
            .validate()
            .map_err(|e: DetectionError| invalid("detector", e))?;

        let pump_nm = source.pump_wavelength_nm;
        let scenario = match &self.scenario {
            ScenarioSpec::Normal => IntrusionScenario::Normal,
            ScenarioSpec::Block => IntrusionScenario::Block,
            ScenarioSpec::SideIntrusion {
                delta,
                xi,
                xi_wavelength,
            } => IntrusionScenario::SideIntrusion {
                delta: delta.0,
                xi_override: xi.map(|a| a.0),
                xi_wavelength_nm: xi_wavelength.map_or(pump_nm, Length::nanometres),
            },
            ScenarioSpec::CrossIntrusion { phi_int, corner } => IntrusionScenario::CrossIntrusion {
                phi_int: phi_int.0,
                corner: *corner,
            },
            ScenarioSpec::InterceptResend => IntrusionScenario::InterceptResend,
        };
        scenario
            .validate()
            .map_err(|e: InterferometerError| invalid("scenario", e))?;

        let s = &self.schedule;
        let fixed_phases = s.phases.map(|[a, b]| (a.0, b.0));
        if s.mode == PhaseMode::QrngBinary && fixed_phases.is_some() {
            return Err(invalid(
                "schedule.phases",
                "QRNG mode draws its own phases; remove the constant pair",
            ));
        }
        if !(s.broadcast_delay.0 >= 0.0) {
            return Err(invalid("schedule.broadcast_delay", "must be ≥ 0"));
        }

        let run_length = match (self.run.heralds, self.run.duration) {
            (Some(_), Some(_)) => {
                return Err(invalid(
                    "run",
                    "give either `heralds` or `duration`, not both",
                ))
            }
            (Some(0), None) => return Err(invalid("run.heralds", "must be positive")),
            (Some(n), None) => RunLength::Heralds(n),
            (None, Some(t)) if t.0 > 0.0 => RunLength::Duration(t.0),
            (None, Some(_)) => return Err(invalid("run.duration", "must be positive")),
            (None, None) => RunLength::Heralds(10_000),
        };
        if let (Some(onset), RunLength::Heralds(n)) = (self.run.intrusion_onset, run_length) {
            if onset > n {
                return Err(invalid(
                    "run.intrusion_onset",
                    format!("onset {onset} beyond the {n} heralds of the run"),
                ));
            }
        }

        let a = &self.alarm;
        let alarm = AlarmConfig {
            nu: a.nu,
            epsilon: a.epsilon,
            window: a.window,
            match_threshold: a.match_threshold,
        };
        alarm
            .validate()
            .map_err(|e: MonitorError| invalid("alarm", e))?;
        if a.calibration_heralds == 0 {
            return Err(invalid("alarm.calibration_heralds", "must be positive"));
        }

        let sw = &self.sweep;
        if sw.points < 2 {
            return Err(invalid("sweep.points", "need at least 2 points"));
        }
        if !(sw.delta_min.0 >= 0.0 && sw.delta_max.0 > sw.delta_min.0) {
            return Err(invalid("sweep", "need 0 ≤ delta_min < delta_max"));
        }
        let an = &self.analytic;
        if an.delta_points < 2 || an.phi_points == 0 {
            return Err(invalid(
                "analytic",
                "need delta_points ≥ 2 and phi_points ≥ 1",
            ));
        }
        if !(an.delta_max.0 > 0.0) {
            return Err(invalid("analytic.delta_max", "must be positive"));
        }

        Ok(Resolved {
            seed: self.seed,
            source,
            geometry,
            detector,
            scenario,
            mode: s.mode,
            fixed_phases,
            broadcast_delay: s.broadcast_delay.0,
            run_length,
            intrusion_onset: self.run.intrusion_onset,
            alarm,
            calibration_heralds: a.calibration_heralds,
            sweep: sw.clone(),
            analytic: an.clone(),
            output: self.output.clone(),
        })
    }
}

fn source_field(e: &SourceError) -> ConfigError {
    let field = match e {
        SourceError::InvalidParameter { name, .. } => match *name {
            "pump_frequency" | "pump_wavelength" => "source.pump_wavelength",
            "idler_bandwidth" => "source.idler_bandwidth",
            "herald_rate" => "source.herald_rate",
            "crystal_length" => "source.crystal_length",
            "group_velocity_mismatch" => "source.group_velocity_mismatch",
            "sinc_gaussian_factor" => "source.sinc_gaussian_factor",
            _ => "source",
        },
        SourceError::NonPositiveBeta(_) => "source",
    };
    invalid(field, e)
}
