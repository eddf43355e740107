//! Subcommand implementations.

use serde::{Serialize, Serializer};
use std::f64::consts::PI;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

use tripwire_core::io::{
    format_decimal, read_records, read_schedule, write_records, write_schedule, FormatError,
    RecordFormat,
};
use tripwire_core::monitor::Verdict;
use tripwire_core::{
    calibrate, evaluate_alarm, numeric_window_count_with_phases, sample_herald_count,
    sample_heralds, simulate_run, verify_broadcast, AlarmConfig, AlarmReason, AnalyticModel,
    BroadcastVerdict, Calibration, Corner, DetectionError, DetectionRecord, HeraldEvent,
    IntrusionScenario, MonitorError, MonitorState, PhaseMode, PhaseSchedule, PortCounts,
    PortLabeling, RunSetup, SourceError,
};

use crate::config::{Resolved, RunLength};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{path}: {source}")]
    File { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Format { path: PathBuf, source: FormatError },
    #[error("writing output: {0}")]
    Output(#[from] io::Error),
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error(transparent)]
    Detection(#[from] DetectionError),
    #[error(transparent)]
    Monitor(#[from] MonitorError),
    #[error("numeric oracle: {0}")]
    Oracle(#[from] tripwire_core::InterferometerError),
    #[error("{0}")]
    Usage(String),
}

/// What a command concluded, mapped to the process exit status by the caller.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    Alarm,
}

/// Float written as plain decimal with at least 12 significant digits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decimal(pub f64);

impl Serialize for Decimal {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return s.serialize_none();
        }
        let raw = serde_json::value::RawValue::from_string(format_decimal(self.0))
            .map_err(serde::ser::Error::custom)?;
        raw.serialize(s)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, RunError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| RunError::File {
            path: path.to_path_buf(),
            source,
        })
}

fn open(path: &Path) -> Result<BufReader<File>, RunError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| RunError::File {
            path: path.to_path_buf(),
            source,
        })
}

fn sink(out: Option<&Path>) -> Result<Box<dyn Write>, RunError> {
    Ok(match out {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// Table rows written either as CSV or as one JSON object per line.
trait Row: Serialize {
    const HEADER: &'static [&'static str];
    fn cells(&self) -> Vec<String>;
}

fn cell(x: Option<Decimal>) -> String {
    x.map_or_else(String::new, |d| format_decimal(d.0))
}

fn write_table<R: Row>(
    mut out: impl Write,
    rows: &[R],
    format: RecordFormat,
) -> Result<(), RunError> {
    match format {
        RecordFormat::Csv => {
            writeln!(out, "{}", R::HEADER.join(","))?;
            for r in rows {
                writeln!(out, "{}", r.cells().join(","))?;
            }
        }
        RecordFormat::JsonLines => {
            for r in rows {
                serde_json::to_writer(&mut out, r).map_err(io::Error::from)?;
                writeln!(out)?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

fn relative_deviation(closed: PortCounts, numeric: PortCounts) -> f64 {
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-9);
    rel(closed.w1, numeric.w1).max(rel(closed.w2, numeric.w2))
}

#[derive(Debug, Serialize)]
pub struct AnalyticRow {
    scenario: &'static str,
    delta_ns: Option<Decimal>,
    xi_rad: Option<Decimal>,
    phi_int_rad: Option<Decimal>,
    count_w1: Decimal,
    count_w2: Decimal,
    oracle_w1: Decimal,
    oracle_w2: Decimal,
    relative_deviation: Decimal,
}

impl Row for AnalyticRow {
    const HEADER: &'static [&'static str] = &[
        "scenario",
        "delta_ns",
        "xi_rad",
        "phi_int_rad",
        "count_w1",
        "count_w2",
        "oracle_w1",
        "oracle_w2",
        "relative_deviation",
    ];

    fn cells(&self) -> Vec<String> {
        vec![
            self.scenario.to_string(),
            cell(self.delta_ns),
            cell(self.xi_rad),
            cell(self.phi_int_rad),
            cell(Some(self.count_w1)),
            cell(Some(self.count_w2)),
            cell(Some(self.oracle_w1)),
            cell(Some(self.oracle_w2)),
            cell(Some(self.relative_deviation)),
        ]
    }
}

fn phases_for_tables(cfg: &Resolved) -> (f64, f64) {
    cfg.fixed_phases.unwrap_or((0.0, 0.0))
}

/// Closed-form and oracle counts for every scenario. Returns the table and
/// its largest relative deviation.
pub fn analytic_table(cfg: &Resolved) -> Result<(Vec<AnalyticRow>, f64), RunError> {
    let model = AnalyticModel::from_source(&cfg.source, cfg.mode)?;
    let window = cfg.detector.window;
    let phases = phases_for_tables(cfg);
    let resolution = cfg.analytic.oracle_resolution;
    let pump_nm = cfg.source.pump_wavelength_nm;

    let mut scenarios: Vec<IntrusionScenario> = vec![
        IntrusionScenario::Normal,
        IntrusionScenario::Block,
        IntrusionScenario::InterceptResend,
    ];
    let n = cfg.analytic.delta_points;
    for i in 0..n {
        let delta = cfg.analytic.delta_max.0 * i as f64 / (n - 1) as f64;
        scenarios.push(IntrusionScenario::side_intrusion(delta, pump_nm));
    }
    for k in 0..cfg.analytic.phi_points {
        scenarios.push(IntrusionScenario::CrossIntrusion {
            phi_int: 2.0 * PI * k as f64 / cfg.analytic.phi_points as f64,
            corner: Corner::First,
        });
    }

    let mut rows = Vec::with_capacity(scenarios.len());
    let mut worst = 0.0f64;
    for s in &scenarios {
        let closed = model.port_counts(s, window, phases);
        let numeric =
            numeric_window_count_with_phases(s, &model, &cfg.geometry, window, phases, resolution)?;
        let dev = relative_deviation(closed, numeric);
        worst = worst.max(dev);
        let (delta, xi, phi) = match *s {
            IntrusionScenario::SideIntrusion { delta, .. } => {
                (Some(Decimal(delta)), Some(Decimal(s.xi())), None)
            }
            IntrusionScenario::CrossIntrusion { phi_int, .. } => {
                (None, None, Some(Decimal(phi_int)))
            }
            _ => (None, None, None),
        };
        rows.push(AnalyticRow {
            scenario: s.label(),
            delta_ns: delta,
            xi_rad: xi,
            phi_int_rad: phi,
            count_w1: Decimal(closed.w1),
            count_w2: Decimal(closed.w2),
            oracle_w1: Decimal(numeric.w1),
            oracle_w2: Decimal(numeric.w2),
            relative_deviation: Decimal(dev),
        });
    }
    Ok((rows, worst))
}

pub fn cmd_analytic(
    cfg: &Resolved,
    out: Option<&Path>,
    format: RecordFormat,
) -> Result<Status, RunError> {
    let (rows, worst) = analytic_table(cfg)?;
    write_table(sink(out)?, &rows, format)?;
    eprintln!(
        "max relative deviation (closed form vs oracle): {}",
        format_decimal(worst)
    );
    Ok(Status::Ok)
}

#[derive(Debug, Serialize)]
pub struct SweepRow {
    pub delta_ns: Decimal,
    pub xi_rad: Decimal,
    pub count_w1: Decimal,
    pub count_w2: Decimal,
    pub count_total: Decimal,
    pub oracle_w1: Decimal,
}

impl Row for SweepRow {
    const HEADER: &'static [&'static str] = &[
        "delta_ns",
        "xi_rad",
        "count_w1",
        "count_w2",
        "count_total",
        "oracle_w1",
    ];

    fn cells(&self) -> Vec<String> {
        [
            self.delta_ns,
            self.xi_rad,
            self.count_w1,
            self.count_w2,
            self.count_total,
            self.oracle_w1,
        ]
        .iter()
        .map(|d| format_decimal(d.0))
        .collect()
    }
}

/// Side-intrusion counts over the configured Δ grid.
pub fn sweep_table(cfg: &Resolved) -> Result<Vec<SweepRow>, RunError> {
    let model = AnalyticModel::from_source(&cfg.source, PhaseMode::FixedSecret)?;
    let window = cfg.detector.window;
    let sw = &cfg.sweep;
    let xi_wavelength = match cfg.scenario {
        IntrusionScenario::SideIntrusion {
            xi_wavelength_nm, ..
        } => xi_wavelength_nm,
        _ => cfg.source.pump_wavelength_nm,
    };
    let mut rows = Vec::with_capacity(sw.points);
    for i in 0..sw.points {
        let delta =
            sw.delta_min.0 + (sw.delta_max.0 - sw.delta_min.0) * i as f64 / (sw.points - 1) as f64;
        let s = IntrusionScenario::SideIntrusion {
            delta,
            xi_override: sw.xi.map(|a| a.0),
            xi_wavelength_nm: xi_wavelength,
        };
        let c = model.port_counts(&s, window, (0.0, 0.0));
        let numeric = numeric_window_count_with_phases(
            &s,
            &model,
            &cfg.geometry,
            window,
            (0.0, 0.0),
            sw.oracle_resolution,
        )?;
        rows.push(SweepRow {
            delta_ns: Decimal(delta),
            xi_rad: Decimal(s.xi()),
            count_w1: Decimal(c.w1),
            count_w2: Decimal(c.w2),
            count_total: Decimal(c.w1 + c.w2),
            oracle_w1: Decimal(numeric.w1),
        });
    }
    Ok(rows)
}

pub fn cmd_sweep_delta(
    cfg: &Resolved,
    out: Option<&Path>,
    format: RecordFormat,
) -> Result<Status, RunError> {
    let rows = sweep_table(cfg)?;
    let worst = rows
        .iter()
        .map(|r| (r.count_w1.0 - r.oracle_w1.0).abs() / r.count_w1.0.abs().max(1e-9))
        .fold(0.0, f64::max);
    write_table(sink(out)?, &rows, format)?;
    eprintln!(
        "max relative deviation of oracle_w1: {}",
        format_decimal(worst)
    );
    Ok(Status::Ok)
}

/// Independent seeds for the separate random streams of one invocation.
fn derived_seed(seed: u64, purpose: u64) -> u64 {
    seed ^ purpose.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

const CALIBRATION_SEED: u64 = 1;
const ONSET_SEED: u64 = 2;

fn sample(cfg: &Resolved, length: RunLength, seed: u64) -> Result<Vec<HeraldEvent>, RunError> {
    Ok(match length {
        RunLength::Heralds(n) => sample_herald_count(&cfg.source, n, seed)?,
        RunLength::Duration(t) => sample_heralds(&cfg.source, t, seed)?,
    })
}

fn schedule_for(cfg: &Resolved, len: usize, seed: u64) -> PhaseSchedule {
    match (cfg.mode, cfg.fixed_phases) {
        (PhaseMode::FixedSecret, Some((a, b))) => PhaseSchedule::fixed_constant(len, a, b),
        (PhaseMode::FixedSecret, None) => PhaseSchedule::fixed_random(len, seed),
        (PhaseMode::QrngBinary, _) => PhaseSchedule::qrng(len, seed, cfg.broadcast_delay),
    }
}

pub fn labeling(mode: PhaseMode) -> PortLabeling {
    match mode {
        PhaseMode::FixedSecret => PortLabeling::FixedBright,
        PhaseMode::QrngBinary => PortLabeling::FromPhases,
    }
}

#[derive(Debug, Serialize)]
pub struct BroadcastSummary {
    pub clicked: usize,
    pub matched: usize,
    pub match_fraction: Option<Decimal>,
    pub threshold: Decimal,
    pub verdict: Verdict,
}

impl From<&BroadcastVerdict> for BroadcastSummary {
    fn from(v: &BroadcastVerdict) -> Self {
        BroadcastSummary {
            clicked: v.clicked,
            matched: v.matched,
            match_fraction: v.match_fraction.map(Decimal),
            threshold: Decimal(v.threshold),
            verdict: v.verdict,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct SimulationSummary {
    pub scenario: &'static str,
    pub phase_mode: PhaseMode,
    pub seed: u64,
    pub heralds: usize,
    pub intrusion_onset: Option<usize>,
    pub i0: Decimal,
    pub calibration_p1: Decimal,
    pub calibration_p2: Decimal,
    pub n1: usize,
    pub n2: usize,
    pub theta: Option<Decimal>,
    pub gamma1: Decimal,
    pub gamma2: Decimal,
    pub evaluated: bool,
    pub alarm: bool,
    pub reasons: Vec<AlarmReason>,
    pub first_alarm_index: Option<usize>,
    pub broadcast: Option<BroadcastSummary>,
}

pub struct Simulation {
    pub records: Vec<DetectionRecord>,
    pub schedule: PhaseSchedule,
    pub summary: SimulationSummary,
}

/// Runs heralds, detection and the monitor; evaluates the alarm after every
/// herald once the window is full and reports the union of reasons.
pub fn simulate(cfg: &Resolved) -> Result<Simulation, RunError> {
    let model = AnalyticModel::from_source(&cfg.source, cfg.mode)?;
    let setup = RunSetup {
        model,
        geometry: cfg.geometry,
        detector: cfg.detector,
    };
    let heralds = sample(cfg, cfg.run_length, cfg.seed)?;
    let schedule = schedule_for(cfg, heralds.len(), cfg.seed);

    let onset = cfg.intrusion_onset.unwrap_or(0).min(heralds.len());
    let mut records = simulate_run(
        &setup,
        &IntrusionScenario::Normal,
        &heralds[..onset],
        &schedule,
        derived_seed(cfg.seed, ONSET_SEED),
    )?;
    records.extend(simulate_run(
        &setup,
        &cfg.scenario,
        &heralds[onset..],
        &schedule,
        cfg.seed,
    )?);

    let cal_seed = derived_seed(cfg.seed, CALIBRATION_SEED);
    let cal_heralds = sample(cfg, RunLength::Heralds(cfg.calibration_heralds), cal_seed)?;
    let cal_schedule = schedule_for(cfg, cal_heralds.len(), cal_seed);
    let cal_records = simulate_run(
        &setup,
        &IntrusionScenario::Normal,
        &cal_heralds,
        &cal_schedule,
        cal_seed,
    )?;
    let labels = labeling(cfg.mode);
    let baseline: Calibration = calibrate(&cal_records, labels)?;

    let i0 = model.i0(cfg.detector.window);
    let mut state = MonitorState::new(cfg.alarm.window, labels, baseline, i0)?;
    let mut reasons: Vec<AlarmReason> = Vec::new();
    let mut first_alarm = None;
    let mut last = None;
    for r in &records {
        state.update(r)?;
        if state.processed() >= cfg.alarm.window {
            let d = evaluate_alarm(&state, &cfg.alarm)?;
            if d.alarm {
                first_alarm.get_or_insert(r.index);
                for reason in &d.reasons {
                    if !reasons.contains(reason) {
                        reasons.push(*reason);
                    }
                }
            }
            last = Some(d);
        }
    }

    let broadcast = match cfg.mode {
        PhaseMode::QrngBinary => Some(verify_broadcast(&records, &schedule, &cfg.alarm)?),
        PhaseMode::FixedSecret => None,
    };
    if broadcast.is_some_and(|b| b.verdict == Verdict::Fail)
        && !reasons.contains(&AlarmReason::Broadcast)
    {
        reasons.push(AlarmReason::Broadcast);
    }
    let snapshot = state.summary(last.as_ref(), None);
    let summary = SimulationSummary {
        scenario: cfg.scenario.label(),
        phase_mode: cfg.mode,
        seed: cfg.seed,
        heralds: records.len(),
        intrusion_onset: cfg.intrusion_onset,
        i0: Decimal(i0),
        calibration_p1: Decimal(baseline.p1),
        calibration_p2: Decimal(baseline.p2),
        n1: snapshot.n1,
        n2: snapshot.n2,
        theta: snapshot.theta.map(Decimal),
        gamma1: Decimal(snapshot.gamma1),
        gamma2: Decimal(snapshot.gamma2),
        evaluated: last.is_some(),
        alarm: !reasons.is_empty(),
        reasons,
        first_alarm_index: first_alarm,
        broadcast: broadcast.as_ref().map(BroadcastSummary::from),
    };
    Ok(Simulation {
        records,
        schedule,
        summary,
    })
}

/// Schedule and summary paths default to siblings of the record file.
fn sibling(records: &Path, suffix: &str) -> PathBuf {
    let stem = records
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "records".into());
    records.with_file_name(format!("{stem}.{suffix}"))
}

pub fn cmd_simulate(
    cfg: &Resolved,
    out: Option<&Path>,
    format: RecordFormat,
) -> Result<Status, RunError> {
    let records_path = out
        .map(Path::to_path_buf)
        .or_else(|| cfg.output.records.clone())
        .ok_or_else(|| RunError::Usage("simulate needs --out or output.records".into()))?;
    let schedule_path = cfg
        .output
        .schedule
        .clone()
        .unwrap_or_else(|| sibling(&records_path, "schedule.csv"));
    let summary_path = cfg
        .output
        .summary
        .clone()
        .unwrap_or_else(|| sibling(&records_path, "summary.json"));

    let sim = simulate(cfg)?;
    let wrap = |path: &Path| {
        let path = path.to_path_buf();
        move |source| RunError::Format { path, source }
    };
    write_records(create(&records_path)?, &sim.records, format).map_err(wrap(&records_path))?;
    write_schedule(create(&schedule_path)?, &sim.schedule).map_err(wrap(&schedule_path))?;
    let mut summary_file = create(&summary_path)?;
    serde_json::to_writer_pretty(&mut summary_file, &sim.summary).map_err(io::Error::from)?;
    writeln!(summary_file)?;
    summary_file.flush()?;

    let mut stdout = io::stdout().lock();
    serde_json::to_writer_pretty(&mut stdout, &sim.summary).map_err(io::Error::from)?;
    writeln!(stdout)?;
    Ok(if sim.summary.alarm {
        Status::Alarm
    } else {
        Status::Ok
    })
}

pub fn cmd_verify_broadcast(
    records_path: &Path,
    schedule_path: &Path,
    alarm: &AlarmConfig,
    out: Option<&Path>,
) -> Result<Status, RunError> {
    let records = read_records(open(records_path)?).map_err(|source| RunError::Format {
        path: records_path.to_path_buf(),
        source,
    })?;
    let schedule =
        read_schedule(open(schedule_path)?, PhaseMode::QrngBinary, 0.0).map_err(|source| {
            RunError::Format {
                path: schedule_path.to_path_buf(),
                source,
            }
        })?;
    let verdict = verify_broadcast(&records, &schedule, alarm)?;
    let mut w = sink(out)?;
    serde_json::to_writer_pretty(&mut w, &BroadcastSummary::from(&verdict))
        .map_err(io::Error::from)?;
    writeln!(w)?;
    w.flush()?;
    Ok(match verdict.verdict {
        Verdict::Fail => Status::Alarm,
        Verdict::Pass | Verdict::InsufficientData => Status::Ok,
    })
}
