//! Scenario configuration, simulation runs, metrics and output files.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::path::{Path, PathBuf};

use crate::aero::CpSurface;
use crate::control::{ControlGains, ConverterGains, Mode, PitchGains};
use crate::curtailment::Curtailer;
use crate::error::{invalid, Error, Result};
use crate::gaindesign::{max_gsc_gain, DesignSpec, Designer, GainDesign};
use crate::params::{NetworkParams, SgParams, TurbineParams};
use crate::plant::{LoadEvent, LoadProfile, Plant, PlantState};
use crate::smallsignal::{
    build_model, lasalle_verify, linearization_plant, reduced_jacobian, stability_verdict, LaSalleReport, SmallSignalModel,
    SmallSignalParams, StabilityVerdict,
};
use crate::svg;

/// Columns of the trace CSV, in order.
pub const TRACE_COLUMNS: [&str; 10] =
    ["t", "f_g", "f_gsc", "v_dc", "omega_r", "beta", "p_wt", "p_gsc", "p_g", "omega_msc_pu"];

/// Minimum simulated time after the last event.
pub const MIN_SETTLE: f64 = 5.0;
const STEADY_WINDOW: f64 = 2.0;
const ROCOF_WINDOW: f64 = 0.1;
const PRE_EVENT_WINDOW: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlConfig {
    pub gsc: ConverterGains,
    pub msc: ConverterGains,
    pub pitch: PitchGains,
    pub v_dc_star: f64,
    /// Excursion limits used by the gain design
    pub design: DesignSpec,
}

impl Default for ControlConfig {
    fn default() -> Self {
        let g = ControlGains::default();
        Self { gsc: g.gsc, msc: g.msc, pitch: g.pitch, v_dc_star: g.v_dc_star, design: DesignSpec::table3() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub mode: Mode,
    /// Wind speed (m/s)
    pub v_w: f64,
    /// Deloading factor used in GFM_FR mode
    pub eta: f64,
    /// Pre-event load on the system base (pu)
    pub base_load: f64,
    pub events: Vec<LoadEvent>,
    /// Simulated time (s)
    pub duration: f64,
    /// Integration step (s)
    pub dt: f64,
    /// Output sampling interval (s)
    pub output_dt: f64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            mode: Mode::GfmFr,
            v_w: 8.0,
            eta: 0.9,
            base_load: 2.0,
            events: vec![LoadEvent { time: 30.0, delta: 0.4 }],
            duration: 60.0,
            dt: 5e-4,
            output_dt: 1e-3,
        }
    }
}

fn is_multiple(x: f64, step: f64) -> bool {
    let r = x / step;
    (r - r.round()).abs() < 1e-6
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.output_dt > 0.0 && self.duration > 0.0) {
            return Err(invalid("dt, output_dt and duration must be positive"));
        }
        if !is_multiple(self.output_dt, self.dt) {
            return Err(invalid("output_dt must be a multiple of dt"));
        }
        if !is_multiple(self.duration, self.output_dt) {
            return Err(invalid("duration must be a multiple of output_dt"));
        }
        if !(self.v_w > 0.0) {
            return Err(invalid("wind speed must be positive"));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(invalid(format!("eta must lie in (0, 1], got {}", self.eta)));
        }
        for e in &self.events {
            if !(e.time > 0.0 && e.time < self.duration) {
                return Err(invalid(format!("event at t = {} lies outside (0, duration)", e.time)));
            }
            if !is_multiple(e.time, self.dt) {
                return Err(invalid(format!("event time {} is not a multiple of dt", e.time)));
            }
            if !e.delta.is_finite() {
                return Err(invalid("event magnitude must be finite"));
            }
        }
        if let Some(last) = self.events.iter().map(|e| e.time).reduce(f64::max) {
            if self.duration - last < MIN_SETTLE {
                return Err(invalid(format!("need at least {MIN_SETTLE} s after the last event")));
            }
        }
        Ok(())
    }

    fn step_count(&self, t: f64) -> usize {
        (t / self.dt).round() as usize
    }
}

/// Complete run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub turbine: TurbineParams,
    pub sg: SgParams,
    pub network: NetworkParams,
    pub control: ControlConfig,
    pub scenario: Scenario,
    /// Power-coefficient surface; the calibrated analytic surface if absent
    #[serde(skip_serializing_if = "Option::is_none")]
    pub surface: Option<CpSurface>,
}

impl Config {
    pub fn from_json_str(text: &str) -> Result<Self> {
        Self::from_value(serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?)
    }

    pub fn from_value(v: Value) -> Result<Self> {
        serde_json::from_value(v).map_err(|e| Error::Config(e.to_string()))
    }

    /// Load an optional file and apply `key.path=value` overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut v = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => serde_json::to_value(Config::default())?,
        };
        for o in overrides {
            apply_override(&mut v, o)?;
        }
        let c = Self::from_value(v)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.turbine.validate()?;
        self.sg.validate()?;
        self.network.validate()?;
        self.control.design.validate()?;
        self.scenario.validate()
    }

    pub fn surface(&self) -> CpSurface {
        self.surface.clone().unwrap_or_else(|| CpSurface::calibrated_default().clone())
    }
}

/// Set a dotted path such as `scenario.v_w=10` inside a JSON document. The
/// value is parsed as JSON and falls back to a string. Intermediate objects
/// are created when missing.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) =
        assignment.split_once('=').ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::Config(format!("bad override key {path:?}")));
    }
    let value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().to_string()));
    let mut cur = doc;
    for (i, key) in keys.iter().enumerate() {
        let obj = cur.as_object_mut().ok_or_else(|| Error::Config(format!("{path}: {key} is not inside an object")))?;
        if i + 1 == keys.len() {
            obj.insert(key.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(key.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!()
}

/// Uniformly sampled simulation output.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SimTrace {
    pub t: Vec<f64>,
    /// SG frequency (Hz)
    pub f_g: Vec<f64>,
    /// GSC frequency (Hz)
    pub f_gsc: Vec<f64>,
    pub v_dc: Vec<f64>,
    pub omega_r: Vec<f64>,
    /// Pitch angle (deg)
    pub beta: Vec<f64>,
    pub p_wt: Vec<f64>,
    pub p_gsc: Vec<f64>,
    pub p_g: Vec<f64>,
    pub omega_msc: Vec<f64>,
}

impl SimTrace {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    fn columns(&self) -> [&Vec<f64>; 10] {
        [
            &self.t,
            &self.f_g,
            &self.f_gsc,
            &self.v_dc,
            &self.omega_r,
            &self.beta,
            &self.p_wt,
            &self.p_gsc,
            &self.p_g,
            &self.omega_msc,
        ]
    }

    fn columns_mut(&mut self) -> [&mut Vec<f64>; 10] {
        [
            &mut self.t,
            &mut self.f_g,
            &mut self.f_gsc,
            &mut self.v_dc,
            &mut self.omega_r,
            &mut self.beta,
            &mut self.p_wt,
            &mut self.p_gsc,
            &mut self.p_g,
            &mut self.omega_msc,
        ]
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(TRACE_COLUMNS)?;
        let cols = self.columns();
        let mut row = Vec::with_capacity(cols.len());
        for i in 0..self.len() {
            row.clear();
            row.extend(cols.iter().map(|c| c[i].to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if header != TRACE_COLUMNS {
            return Err(invalid(format!("unexpected trace header {header:?}")));
        }
        let mut trace = SimTrace::default();
        for rec in r.records() {
            let rec = rec?;
            for (col, field) in trace.columns_mut().into_iter().zip(rec.iter()) {
                col.push(field.parse().map_err(|_| invalid(format!("bad number {field:?}")))?);
            }
        }
        Ok(trace)
    }

    /// Index of the last sample strictly before `t`.
    fn before(&self, t: f64) -> Option<usize> {
        self.t.iter().rposition(|&x| x < t)
    }
}

/// A finished run with the gains actually used.
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub mode: Mode,
    pub v_w: f64,
    pub gains: ControlGains,
    pub design: Option<GainDesign>,
    pub equilibrium: PlantState,
    pub trace: SimTrace,
    pub f_base: f64,
}

/// Gains for a mode at a wind speed, with the design record in GFM_FR mode.
pub fn mode_gains(config: &Config, mode: Mode) -> Result<(ControlGains, Option<GainDesign>)> {
    let c = &config.control;
    let sc = &config.scenario;
    let surface = config.surface();
    let mut gains = ControlGains {
        gsc: c.gsc,
        msc: c.msc,
        pitch: c.pitch,
        v_dc_star: c.v_dc_star,
        omega_0: 1.0,
        omega_del: 1.0,
    };
    match mode {
        Mode::GfmFr => {
            let mut designer = Designer::new(&config.turbine, &surface, &c.design)?;
            designer.k_d_gsc = c.gsc.k_d;
            let d = designer.design(sc.v_w, sc.eta)?;
            Ok((d.apply(&gains), Some(d)))
        }
        Mode::GfmMppt | Mode::GflMppt => {
            let point = Curtailer::new(&config.turbine, &surface)?.point(sc.v_w, 1.0)?;
            let k = max_gsc_gain(&c.design);
            gains.gsc.k_theta = k;
            gains.msc.k_theta = k;
            gains.msc.k_d = gains.gsc.k_d;
            gains.omega_del = point.omega_del;
            gains.pitch.beta_del = point.beta_del;
            gains.pitch.k_p = 0.0;
            Ok((gains, None))
        }
    }
}

/// Simulate a scenario in the configured mode.
pub fn run_scenario(config: &Config) -> Result<ScenarioRun> {
    run_mode(config, config.scenario.mode)
}

/// Simulate a scenario in the given mode.
pub fn run_mode(config: &Config, mode: Mode) -> Result<ScenarioRun> {
    config.validate()?;
    let sc = &config.scenario;
    let (gains, design) = mode_gains(config, mode)?;
    let load = LoadProfile { base: sc.base_load, events: sc.events.clone() };
    let mut plant = Plant::new(
        config.turbine,
        config.sg,
        config.network,
        config.surface(),
        gains,
        mode,
        sc.v_w,
        load,
    )?;
    let equilibrium = plant.find_equilibrium()?;

    let n_steps = sc.step_count(sc.duration);
    let every = (sc.output_dt / sc.dt).round() as usize;
    let event_steps: Vec<(usize, f64)> = sc.events.iter().map(|e| (sc.step_count(e.time), e.delta)).collect();
    let load_at = |k: usize| sc.base_load + event_steps.iter().filter(|(s, _)| *s <= k).map(|(_, d)| d).sum::<f64>();

    let f_base = config.network.f_base;
    let mut trace = SimTrace::default();
    let n_out = n_steps / every + 1;
    for c in trace.columns_mut() {
        c.reserve(n_out);
    }
    let record = |trace: &mut SimTrace, s: &PlantState, k: usize| -> Result<()> {
        let t = k as f64 * sc.dt;
        let (_, out) = plant.derivative_with_load(s, load_at(k), t)?;
        trace.t.push(t);
        trace.f_g.push(s.omega_g * f_base);
        trace.f_gsc.push(out.omega_gsc * f_base);
        trace.v_dc.push(s.v_dc);
        trace.omega_r.push(s.omega_r);
        trace.beta.push(out.beta);
        trace.p_wt.push(out.p_wt);
        trace.p_gsc.push(out.p_gsc);
        trace.p_g.push(s.p_g);
        trace.omega_msc.push(out.omega_msc);
        Ok(())
    };

    let mut s = equilibrium;
    record(&mut trace, &s, 0)?;
    for k in 0..n_steps {
        let t = k as f64 * sc.dt;
        s = plant.step_rk4_with_load(&s, load_at(k), t, sc.dt)?;
        if (k + 1) % every == 0 {
            record(&mut trace, &s, k + 1)?;
        }
    }
    let gains = plant.gains;
    Ok(ScenarioRun { mode, v_w: sc.v_w, gains, design, equilibrium, trace, f_base })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyMetrics {
    pub pre_event_hz: f64,
    pub nadir_hz: f64,
    pub t_nadir: f64,
    /// Largest |Δf| over a 100 ms window after the event (Hz/s)
    pub rocof_max: f64,
    /// Mean SG frequency over the final 2 s (Hz)
    pub steady_state_hz: f64,
    /// Steady-state DC voltage change from the pre-event value (pu)
    pub dv_dc_ss: f64,
    /// Steady-state turbine power change (pu)
    pub dp_wt_ss: f64,
    /// `−Δω_g/ΔP_wt` in steady state; absent when the turbine power does not move
    pub droop: Option<f64>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Frequency metrics of a trace for an event at `event_time`.
pub fn compute_metrics(trace: &SimTrace, event_time: f64, f_base: f64) -> Result<FrequencyMetrics> {
    let n = trace.len();
    let Some(t_end) = trace.t.last().copied() else {
        return Err(Error::TraceTooShort("empty trace".into()));
    };
    let Some(i_pre) = trace.before(event_time) else {
        return Err(Error::TraceTooShort(format!("no samples before the event at {event_time} s")));
    };
    if t_end - event_time < STEADY_WINDOW {
        return Err(Error::TraceTooShort(format!("less than {STEADY_WINDOW} s after the event")));
    }
    let i_evt = i_pre + 1;
    let pre_lo = trace.t.iter().position(|&x| x >= event_time - PRE_EVENT_WINDOW).unwrap_or(0).min(i_pre);
    let pre = |c: &[f64]| mean(&c[pre_lo..=i_pre]);
    let ss_lo = trace.t.iter().position(|&x| x >= t_end - STEADY_WINDOW).unwrap_or(0).max(i_evt);
    let ss = |c: &[f64]| mean(&c[ss_lo..n]);

    let (i_nadir, nadir) = (i_evt..n).map(|i| (i, trace.f_g[i])).fold((i_evt, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });

    let mut rocof: f64 = 0.0;
    let mut j = i_pre;
    for i in i_pre..n {
        while j < n && trace.t[j] - trace.t[i] < ROCOF_WINDOW - 1e-12 {
            j += 1;
        }
        if j >= n {
            break;
        }
        let w = trace.t[j] - trace.t[i];
        rocof = rocof.max(((trace.f_g[j] - trace.f_g[i]) / w).abs());
    }

    let f_pre = pre(&trace.f_g);
    let f_ss = ss(&trace.f_g);
    let dp = ss(&trace.p_wt) - pre(&trace.p_wt);
    let dw = (f_ss - f_pre) / f_base;
    let droop = if dp.abs() > 1e-6 { Some(-dw / dp) } else { None };
    Ok(FrequencyMetrics {
        pre_event_hz: f_pre,
        nadir_hz: nadir,
        t_nadir: trace.t[i_nadir],
        rocof_max: rocof,
        steady_state_hz: f_ss,
        dv_dc_ss: ss(&trace.v_dc) - pre(&trace.v_dc),
        dp_wt_ss: dp,
        droop,
    })
}

/// A named pass/fail check with its measured values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self { name: name.to_string(), passed, detail }
    }
}

/// Post-run checks on means over the final 2 s.
pub fn steady_state_checks(run: &ScenarioRun, metrics: &FrequencyMetrics) -> Vec<Check> {
    let mut checks = Vec::new();
    if !run.mode.is_grid_forming() {
        return checks;
    }
    let tr = &run.trace;
    let t_end = *tr.t.last().unwrap();
    let lo = tr.t.iter().position(|&x| x >= t_end - STEADY_WINDOW).unwrap_or(0);
    let avg = |c: &[f64]| mean(&c[lo..]);
    let g = &run.gains;
    let dv = avg(&tr.v_dc) - g.v_dc_star;
    let w_gsc = avg(&tr.f_gsc) / run.f_base;
    let w_g = avg(&tr.f_g) / run.f_base;
    let w_msc = avg(&tr.omega_msc);
    let w_r = avg(&tr.omega_r);
    let e1 = (w_gsc - g.omega_0 - g.gsc.k_theta * dv).abs();
    let e2 = (w_msc - g.omega_del - g.msc.k_theta * dv).abs();
    checks.push(Check::new("gsc_proportional", e1 < 1e-3, format!("|dw_gsc - Kθ·dv| = {e1:.3e}")));
    checks.push(Check::new("msc_proportional", e2 < 1e-3, format!("|dw_msc - Kθ·dv| = {e2:.3e}")));
    let s1 = (w_gsc - w_g).abs();
    let s2 = (w_msc - w_r).abs();
    checks.push(Check::new("gsc_synchronized", s1 < 1e-4, format!("|w_gsc - w_g| = {s1:.3e}")));
    checks.push(Check::new("msc_synchronized", s2 < 1e-4, format!("|w_msc - w_r| = {s2:.3e}")));
    match run.mode {
        Mode::GfmMppt => {
            let dp = metrics.dp_wt_ss.abs();
            checks.push(Check::new("inertia_only", dp < 5e-3, format!("|dP_wt,ss| = {dp:.3e}")));
        }
        Mode::GfmFr => {
            let predicted = run.design.and_then(|d| d.m_p);
            let (ok, detail) = match (predicted, metrics.droop) {
                (Some(p), Some(m)) => {
                    let rel = (m - p).abs() / p;
                    (rel <= 0.02, format!("measured {m:.5}, predicted {p:.5}, rel. error {:.2}%", 100.0 * rel))
                }
                (p, m) => (false, format!("measured {m:?}, predicted {p:?}")),
            };
            checks.push(Check::new("droop_matches_design", ok, detail));
        }
        Mode::GflMppt => {}
    }
    checks
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub mode: Mode,
    pub v_w: f64,
    pub eta: f64,
    pub design: Option<GainDesign>,
    pub metrics: FrequencyMetrics,
    pub checks: Vec<Check>,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn first_event(config: &Config) -> Result<f64> {
    config
        .scenario
        .events
        .iter()
        .map(|e| e.time)
        .reduce(f64::min)
        .ok_or_else(|| Error::Config("scenario has no load events".into()))
}

pub fn report_run(config: &Config, run: &ScenarioRun) -> Result<RunReport> {
    let metrics = compute_metrics(&run.trace, first_event(config)?, run.f_base)?;
    let checks = steady_state_checks(run, &metrics);
    Ok(RunReport { mode: run.mode, v_w: run.v_w, eta: config.scenario.eta, design: run.design, metrics, checks })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub v_w: f64,
    /// One report per mode in `Mode::ALL` order
    pub runs: Vec<RunReport>,
    pub checks: Vec<Check>,
}

impl Comparison {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn run(&self, mode: Mode) -> Option<&RunReport> {
        self.runs.iter().find(|r| r.mode == mode)
    }
}

/// Run all three modes on the same events and compare their responses.
pub fn compare_modes(config: &Config) -> Result<(Comparison, Vec<ScenarioRun>)> {
    let event = first_event(config)?;
    let runs: Vec<ScenarioRun> = Mode::ALL.par_iter().map(|&m| run_mode(config, m)).collect::<Result<_>>()?;
    let reports: Vec<RunReport> = runs.iter().map(|r| report_run(config, r)).collect::<Result<_>>()?;
    let by = |m: Mode| reports.iter().position(|r| r.mode == m).unwrap();
    let (gfl, mppt, fr) = (by(Mode::GflMppt), by(Mode::GfmMppt), by(Mode::GfmFr));
    let n = |i: usize| reports[i].metrics.nadir_hz;
    let ss = |i: usize| reports[i].metrics.steady_state_hz;
    let load_up = config.scenario.events.iter().map(|e| e.delta).sum::<f64>() > 0.0;

    let mut checks = vec![
        Check::new(
            "nadir_ordering",
            n(fr) > n(mppt) && n(mppt) >= n(gfl),
            format!("GFM_FR {:.4} Hz, GFM_MPPT {:.4} Hz, GFL_MPPT {:.4} Hz", n(fr), n(mppt), n(gfl)),
        ),
        Check::new(
            "steady_state_improved",
            ss(fr) > ss(mppt) && ss(fr) > ss(gfl),
            format!("GFM_FR {:.4} Hz, GFM_MPPT {:.4} Hz, GFL_MPPT {:.4} Hz", ss(fr), ss(mppt), ss(gfl)),
        ),
    ];
    if load_up {
        let tr = &runs[fr].trace;
        let i0 = tr.before(event).unwrap_or(0);
        let v_min = tr.v_dc[i0..].iter().copied().fold(f64::INFINITY, f64::min);
        checks.push(Check::new(
            "dc_voltage_dips",
            v_min < tr.v_dc[i0],
            format!("pre-event {:.5} pu, minimum {v_min:.5} pu", tr.v_dc[i0]),
        ));
        let w_end = *tr.omega_r.last().unwrap();
        checks.push(Check::new(
            "rotor_decelerates",
            w_end < tr.omega_r[i0],
            format!("pre-event {:.5} pu, final {w_end:.5} pu", tr.omega_r[i0]),
        ));
        let b0 = tr.beta[i0];
        if b0 > 0.0 {
            let b_end = *tr.beta.last().unwrap();
            checks.push(Check::new(
                "pitch_decreases",
                b_end < b0,
                format!("pre-event {b0:.4} deg, final {b_end:.4} deg"),
            ));
        }
        let gfl_tr = &runs[gfl].trace;
        let flat = gfl_tr.v_dc.iter().all(|v| (v - 1.0).abs() < 1e-9);
        checks.push(Check::new("gfl_dc_voltage_held", flat, "GFL_MPPT keeps v_dc at 1 pu".into()));
    }
    Ok((Comparison { v_w: config.scenario.v_w, runs: reports, checks }, runs))
}

/// Linear model at the pre-event operating point of a scenario, with the
/// deviation from the Jacobian of the nonlinear loop.
#[derive(Debug, Clone)]
pub struct SmallSignalReport {
    pub mode: Mode,
    pub v_w: f64,
    pub model: SmallSignalModel,
    pub verdict: StabilityVerdict,
    pub lasalle: Option<LaSalleReport>,
    pub theorem1: bool,
    /// `max |J − T⁻¹A|` over all entries
    pub jacobian_deviation: f64,
}

impl SmallSignalReport {
    pub fn to_json(&self) -> Result<Value> {
        let mut v = self.model.to_json()?;
        let obj = v.as_object_mut().expect("model JSON is an object");
        obj.insert("mode".into(), serde_json::to_value(self.mode)?);
        obj.insert("v_w".into(), self.v_w.into());
        obj.insert("theorem1".into(), self.theorem1.into());
        obj.insert("lasalle".into(), serde_json::to_value(&self.lasalle)?);
        obj.insert("jacobian_deviation".into(), self.jacobian_deviation.into());
        Ok(v)
    }
}

/// Linearise the configured scenario with ideal PD filters, an ideal pitch
/// actuator and the limiters removed.
pub fn smallsignal_report(config: &Config, mode: Mode) -> Result<SmallSignalReport> {
    config.validate()?;
    if !mode.is_grid_forming() {
        return Err(Error::Config("the linear model covers the grid-forming modes only".into()));
    }
    let sc = &config.scenario;
    let (gains, _) = mode_gains(config, mode)?;
    let load = LoadProfile { base: sc.base_load, events: Vec::new() };
    let plant = Plant::new(config.turbine, config.sg, config.network, config.surface(), gains, mode, sc.v_w, load)?;
    let mut plant = linearization_plant(&plant);
    let eq = plant.find_equilibrium()?;
    let params = SmallSignalParams::from_plant(&plant, &eq)?;
    let model = build_model(&params)?;
    let verdict = stability_verdict(&model)?;
    let theorem1 = params.k_wt >= 0.0
        && crate::control::ratio_matches(params.k_d_gsc, params.k_theta_gsc, params.k_d_msc, params.k_theta_msc);
    let lasalle = if theorem1 { Some(lasalle_verify(&model)?) } else { None };
    let jac = reduced_jacobian(&plant, &eq)?;
    let jacobian_deviation = (jac - model.state_matrix()).abs().max();
    Ok(SmallSignalReport { mode, v_w: sc.v_w, model, verdict, lasalle, theorem1, jacobian_deviation })
}

/// SVG panels of one or more traces on a shared time axis.
pub fn trace_svg(title: &str, runs: &[(&str, &SimTrace)]) -> String {
    let Some((_, first)) = runs.first() else {
        return svg::line_panels(title, &[], &[]);
    };
    let panel = |label: &'static str, pick: fn(&SimTrace) -> &Vec<f64>| svg::Panel {
        label,
        series: runs.iter().map(|(name, tr)| svg::Series { name, values: pick(tr) }).collect(),
    };
    let panels = [
        panel("f_g (Hz)", |t| &t.f_g),
        panel("v_dc (pu)", |t| &t.v_dc),
        panel("omega_r (pu)", |t| &t.omega_r),
        panel("beta (deg)", |t| &t.beta),
        panel("P_wt (pu)", |t| &t.p_wt),
        panel("P_g (pu)", |t| &t.p_g),
    ];
    svg::line_panels(title, &first.t, &panels)
}

/// Files written by [`emit_run`] and [`emit_comparison`].
#[derive(Debug, Clone, Default)]
pub struct Emitted {
    pub files: Vec<PathBuf>,
}

fn write_file(path: PathBuf, content: &[u8], out: &mut Emitted) -> Result<()> {
    std::fs::write(&path, content)?;
    out.files.push(path);
    Ok(())
}

fn trace_name(mode: Mode, v_w: f64) -> String {
    format!("trace_{}_{}ms", mode.name(), v_w)
}

/// Trace CSV, metrics JSON and optionally an SVG plot for one run.
pub fn emit_run(dir: &Path, run: &ScenarioRun, report: &RunReport, plot: bool) -> Result<Emitted> {
    std::fs::create_dir_all(dir)?;
    let mut out = Emitted::default();
    let stem = trace_name(run.mode, run.v_w);
    let mut csv = Vec::new();
    run.trace.write_csv(&mut csv)?;
    write_file(dir.join(format!("{stem}.csv")), &csv, &mut out)?;
    write_file(dir.join("metrics.json"), serde_json::to_string_pretty(report)?.as_bytes(), &mut out)?;
    if plot {
        let svg = trace_svg(&format!("{} at {} m/s", run.mode.name(), run.v_w), &[(run.mode.name(), &run.trace)]);
        write_file(dir.join(format!("{stem}.svg")), svg.as_bytes(), &mut out)?;
    }
    Ok(out)
}

/// Trace CSVs, the comparison JSON and optionally an overlay plot.
pub fn emit_comparison(dir: &Path, cmp: &Comparison, runs: &[ScenarioRun], plot: bool) -> Result<Emitted> {
    std::fs::create_dir_all(dir)?;
    let mut out = Emitted::default();
    for run in runs {
        let mut csv = Vec::new();
        run.trace.write_csv(&mut csv)?;
        write_file(dir.join(format!("{}.csv", trace_name(run.mode, run.v_w))), &csv, &mut out)?;
    }
    write_file(dir.join("comparison.json"), serde_json::to_string_pretty(cmp)?.as_bytes(), &mut out)?;
    if plot {
        let series: Vec<(&str, &SimTrace)> = runs.iter().map(|r| (r.mode.name(), &r.trace)).collect();
        let svg = trace_svg(&format!("Mode comparison at {} m/s", cmp.v_w), &series);
        write_file(dir.join(format!("compare_{}ms.svg", cmp.v_w)), svg.as_bytes(), &mut out)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(f: impl Fn(f64) -> f64) -> SimTrace {
        let mut tr = SimTrace::default();
        for k in 0..=10_000 {
            let t = k as f64 * 1e-3;
            tr.t.push(t);
            tr.f_g.push(f(t));
            tr.f_gsc.push(f(t));
            tr.v_dc.push(1.0);
            tr.omega_r.push(1.0);
            tr.beta.push(0.0);
            tr.p_wt.push(if t >= 2.0 { 0.5 } else { 0.4 });
            tr.p_gsc.push(0.4);
            tr.p_g.push(1.0);
            tr.omega_msc.push(1.0);
        }
        tr
    }

    #[test]
    fn nadir_of_dip() {
        let tr = synthetic(|t| if t < 2.0 { 50.0 } else { 49.644 + 0.08 * (t - 2.0).min(1.0) });
        let m = compute_metrics(&tr, 2.0, 50.0).unwrap();
        assert!((m.nadir_hz - 49.644).abs() < 1e-12);
        assert!((m.t_nadir - 2.0).abs() < 1e-12);
        assert!((m.steady_state_hz - 49.724).abs() < 1e-9);
    }

    #[test]
    fn rocof_of_ramp() {
        let tr = synthetic(|t| 50.0 - 0.1 * t);
        let m = compute_metrics(&tr, 2.0, 50.0).unwrap();
        assert!((m.rocof_max - 0.1).abs() < 1e-9);
    }

    #[test]
    fn droop_sign() {
        let tr = synthetic(|t| if t < 2.0 { 50.0 } else { 49.9 });
        let m = compute_metrics(&tr, 2.0, 50.0).unwrap();
        // Δω = −0.002 pu, ΔP = 0.1 pu
        assert!((m.droop.unwrap() - 0.02).abs() < 1e-9);
    }

    #[test]
    fn short_trace() {
        let tr = synthetic(|_| 50.0);
        assert!(matches!(compute_metrics(&tr, 9.5, 50.0), Err(Error::TraceTooShort(_))));
        assert!(matches!(compute_metrics(&tr, 0.0, 50.0), Err(Error::TraceTooShort(_))));
        assert!(matches!(compute_metrics(&SimTrace::default(), 1.0, 50.0), Err(Error::TraceTooShort(_))));
    }

    #[test]
    fn csv_round_trip() {
        let tr = synthetic(|t| 50.0 - 0.013 * t.sin());
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let back = SimTrace::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, tr);
        assert!(String::from_utf8(buf).unwrap().starts_with("t,f_g,f_gsc,v_dc,omega_r,beta,p_wt,p_gsc,p_g,omega_msc_pu\n"));
    }

    #[test]
    fn overrides() {
        let mut v = serde_json::to_value(Config::default()).unwrap();
        apply_override(&mut v, "scenario.v_w=10").unwrap();
        apply_override(&mut v, "scenario.mode=GFM_MPPT").unwrap();
        apply_override(&mut v, "control.design.delta_omega_max=0.005").unwrap();
        let c = Config::from_value(v.clone()).unwrap();
        assert_eq!(c.scenario.v_w, 10.0);
        assert_eq!(c.scenario.mode, Mode::GfmMppt);
        assert_eq!(c.control.design.delta_omega_max, 0.005);
        assert!(apply_override(&mut v, "novalue").is_err());
        apply_override(&mut v, "scenario.bogus=1").unwrap();
        assert!(matches!(Config::from_value(v), Err(Error::Config(_))));
    }

    #[test]
    fn scenario_validation() {
        let mut s = Scenario::default();
        assert!(s.validate().is_ok());
        s.events[0].time = 30.00025;
        assert!(s.validate().is_err());
        let s = Scenario { duration: 33.0, ..Scenario::default() };
        assert!(s.validate().is_err());
        let s = Scenario { output_dt: 7e-4, ..Scenario::default() };
        assert!(s.validate().is_err());
        let s = Scenario { eta: 1.2, ..Scenario::default() };
        assert!(s.validate().is_err());
    }

    #[test]
    fn json_round_trip() {
        let c = Config::default();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(Config::from_json_str(&text).unwrap(), c);
        let v: Value = serde_json::from_str(&text).unwrap();
        for key in ["turbine", "sg", "network", "control", "scenario"] {
            assert!(v.get(key).is_some());
        }
    }
}
