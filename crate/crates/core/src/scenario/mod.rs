//! Scenario description: devices, controller modes, events and simulation
//! settings, plus the text format they are read from.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use sha2::{Digest, Sha256};

use crate::dynamics::{IntegratorConfig, Method};
use crate::machine::{ControlGains, DroopParams, FrequencyMode, MachineMode, MachineParams, VoltageMode};
use crate::network::equilibrium::{
    ActiveControl, EmfLaw, EquilibriumProblem, ReactiveControl, SourceSpec,
};
use crate::network::{GridSourceParams, RLLoadParams, ReactiveSense, WindInjection};

mod fixtures;
mod parse;
mod sim;
mod sweep;
pub mod wind;

pub use fixtures::{fixture_text, load_fixture, FIXTURE_NAMES};
pub use parse::{load_scenario, parse_scenario, parse_scenario_with};
pub use sim::{equilibrium_at, output_columns, run, steady_state, SimError, SteadyMethod, SteadyState};
pub use sweep::{sweep, SweepTable};
pub use wind::{wind_current_at, MappingKind, WindMapping, WindSeries};

/// One problem found while reading or validating a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioError {
    /// 1-based line in the scenario text, when known.
    pub line: Option<usize>,
    /// Section the problem belongs to, e.g. `machine.sg1`.
    pub location: String,
    pub message: String,
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.line, self.location.is_empty()) {
            (Some(l), _) => write!(f, "line {l}: ")?,
            (None, false) => write!(f, "[{}] ", self.location)?,
            _ => {}
        }
        f.write_str(&self.message)
    }
}

/// Every problem found in a scenario, in line order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioErrors(pub Vec<ScenarioError>);

impl fmt::Display for ScenarioErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, e) in self.0.iter().enumerate() {
            if k > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ScenarioErrors {}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSettings {
    pub t_end: f64,
    pub integrator: IntegratorConfig,
    pub output_interval: f64,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self { t_end: 1.0, integrator: IntegratorConfig::default(), output_interval: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub id: String,
    pub params: GridSourceParams,
    pub connected: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GovernorKind {
    ConstPower,
    SpeedRef,
    Droop,
}

impl FromStr for GovernorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "const_power" => Ok(Self::ConstPower),
            "speed_ref" => Ok(Self::SpeedRef),
            "droop" => Ok(Self::Droop),
            _ => Err(format!("unknown mode `{s}` (expected const_power, speed_ref or droop)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AvrKind {
    Pi,
    Fixed,
    Droop,
}

impl FromStr for AvrKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "pi" => Ok(Self::Pi),
            "fixed" => Ok(Self::Fixed),
            "droop" => Ok(Self::Droop),
            _ => Err(format!("unknown avr `{s}` (expected pi, fixed or droop)")),
        }
    }
}

/// A synchronous machine as configured. `droop.f0` doubles as the speed
/// reference and `droop.v0_ll` as the PI voltage setpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct MachineSpec {
    pub id: String,
    pub params: MachineParams,
    pub gains: ControlGains,
    pub governor: GovernorKind,
    pub avr: AvrKind,
    pub p_mech: f64,
    pub droop: DroopParams,
    pub delta0: f64,
}

impl MachineSpec {
    pub fn new(id: &str) -> Self {
        Self {
            id: id.into(),
            params: MachineParams::default(),
            gains: ControlGains::default(),
            governor: GovernorKind::ConstPower,
            avr: AvrKind::Fixed,
            p_mech: 0.0,
            droop: DroopParams::default(),
            delta0: 0.0,
        }
    }

    pub fn mode(&self) -> MachineMode {
        let frequency = match self.governor {
            GovernorKind::ConstPower => FrequencyMode::ConstPower { p_mech: self.p_mech },
            GovernorKind::SpeedRef => FrequencyMode::SpeedReference { omega_ref: 2.0 * PI * self.droop.f0 },
            GovernorKind::Droop => FrequencyMode::DroopGovernor(self.droop),
        };
        let voltage = match self.avr {
            AvrKind::Pi => VoltageMode::PiTerminalVoltage { v_ref_ll: self.droop.v0_ll },
            AvrKind::Fixed => VoltageMode::FixedFlux(self.params.flux_nominal),
            AvrKind::Droop => VoltageMode::VoltDroop(self.droop),
        };
        MachineMode { frequency, voltage }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadSpec {
    pub id: String,
    pub params: RLLoadParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindSpec {
    pub id: String,
    pub injection: WindInjection,
    /// When present, the active current follows the profile.
    pub series: Option<WindSeries>,
    pub mapping: WindMapping,
    pub connected: bool,
}

impl WindSpec {
    pub fn new(id: &str) -> Self {
        Self {
            id: id.into(),
            injection: WindInjection { id_rms: 0.0, iq_rms: 0.0, sense: ReactiveSense::Supply },
            series: None,
            mapping: WindMapping::default(),
            connected: true,
        }
    }

    pub fn id_at(&self, t: f64) -> f64 {
        match &self.series {
            Some(s) => wind_current_at(s, &self.mapping, t),
            None => self.injection.id_rms,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventAction {
    CloseSwitch,
    OpenSwitch,
    SetMechPower(f64),
    SetIq(f64),
    SetId(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    /// Label from the `[event.<label>]` header.
    pub label: String,
    pub time: f64,
    pub action: EventAction,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scenario {
    pub sim: SimSettings,
    pub grid: Option<GridSpec>,
    pub machines: Vec<MachineSpec>,
    pub loads: Vec<LoadSpec>,
    pub winds: Vec<WindSpec>,
    /// Sorted by time; same-time events keep declaration order.
    pub events: Vec<Event>,
}

fn num(value: &str) -> Result<f64, String> {
    let v: f64 = value.trim().parse().map_err(|_| format!("`{value}` is not a number"))?;
    if !v.is_finite() {
        return Err(format!("`{value}` is not finite"));
    }
    Ok(v)
}

fn flag(value: &str) -> Result<bool, String> {
    match value.trim() {
        "true" | "closed" | "1" | "yes" => Ok(true),
        "false" | "open" | "0" | "no" => Ok(false),
        other => Err(format!("`{other}` is not a boolean (true/false)")),
    }
}

fn unknown(key: &str, section: &str) -> String {
    format!("unknown key `{key}` in [{section}]")
}

fn apply_sim(s: &mut SimSettings, key: &str, value: &str) -> Result<(), String> {
    match key {
        "t_end" => s.t_end = num(value)?,
        "dt" => s.integrator.dt = num(value)?,
        "method" => s.integrator.method = value.parse::<Method>()?,
        "output_interval" => s.output_interval = num(value)?,
        "rel_tol" => s.integrator.rel_tol = num(value)?,
        "abs_tol" => s.integrator.abs_tol = num(value)?,
        _ => return Err(unknown(key, "sim")),
    }
    Ok(())
}

fn apply_grid(g: &mut GridSpec, key: &str, value: &str) -> Result<(), String> {
    match key {
        "v_ll" => g.params.v_ll_rms = num(value)?,
        "f" => g.params.f = num(value)?,
        "r" => g.params.r_internal = num(value)?,
        "l" => g.params.l_internal = num(value)?,
        "connected" => g.connected = flag(value)?,
        _ => return Err(unknown(key, "grid")),
    }
    Ok(())
}

fn apply_machine(m: &mut MachineSpec, key: &str, value: &str) -> Result<(), String> {
    let p = &mut m.params;
    match key {
        "s_rated" => p.s_rated = num(value)?,
        "v_ll" => p.v_rated_ll = num(value)?,
        "f" => p.f_rated = num(value)?,
        "poles" => {
            let v = num(value)?;
            if v.fract() != 0.0 || v < 0.0 || v > u32::MAX as f64 {
                return Err(format!("poles must be a non-negative integer, got `{value}`"));
            }
            p.poles = v as u32;
        }
        "xs" => p.xs = num(value)?,
        "h" => p.h_inertia = num(value)?,
        "d" => p.d_damping = num(value)?,
        "flux0" => p.flux_nominal = num(value)?,
        "mode" => m.governor = value.parse()?,
        "avr" => m.avr = value.parse()?,
        "p_mech" => m.p_mech = num(value)?,
        "f0" => m.droop.f0 = num(value)?,
        "m_droop" => m.droop.m = num(value)?,
        "p_nom" => m.droop.p_nominal = num(value)?,
        "v0" => m.droop.v0_ll = num(value)?,
        "n_droop" => m.droop.n = num(value)?,
        "q0" => m.droop.q0 = num(value)?,
        "kg" => m.gains.governor_kg = num(value)?,
        "avr_kp" => m.gains.avr_kp = num(value)?,
        "avr_ki" => m.gains.avr_ki = num(value)?,
        "droop_kp" => m.gains.droop_kp = num(value)?,
        "droop_ki" => m.gains.droop_ki = num(value)?,
        "t_field" => m.gains.t_field = num(value)?,
        "delta0" => m.delta0 = num(value)?.to_radians(),
        _ => return Err(unknown(key, &format!("machine.{}", m.id))),
    }
    Ok(())
}

fn apply_load(l: &mut LoadSpec, key: &str, value: &str) -> Result<(), String> {
    match key {
        "r" => l.params.r = num(value)?,
        "l" => l.params.l = num(value)?,
        "connected" => l.params.connected = flag(value)?,
        _ => return Err(unknown(key, &format!("load.{}", l.id))),
    }
    Ok(())
}

/// `series_file` needs file access and is handled by the parser.
fn apply_wind(w: &mut WindSpec, key: &str, value: &str) -> Result<(), String> {
    match key {
        "id_rms" => w.injection.id_rms = num(value)?,
        "iq_rms" => w.injection.iq_rms = num(value)?,
        "q_mode" | "iq_mode" => {
            w.injection.sense = match value.trim() {
                "supply" => ReactiveSense::Supply,
                "absorb" => ReactiveSense::Absorb,
                other => return Err(format!("unknown q_mode `{other}` (expected supply or absorb)")),
            }
        }
        "mapping" => w.mapping.kind = value.parse()?,
        "gain" => w.mapping.gain = num(value)?,
        "v_ref" => w.mapping.v_ref = num(value)?,
        "i_max" => w.mapping.i_max = num(value)?,
        "connected" => w.connected = flag(value)?,
        _ => return Err(unknown(key, &format!("wind.{}", w.id))),
    }
    Ok(())
}

/// Event fields while the section is being read; the action needs both
/// `action` and `value`.
#[derive(Debug, Clone, Default)]
struct EventDraft {
    time: Option<f64>,
    action: Option<String>,
    target: Option<String>,
    value: Option<f64>,
}

fn apply_event_key(e: &mut EventDraft, key: &str, value: &str) -> Result<(), String> {
    match key {
        "time" => e.time = Some(num(value)?),
        "action" => e.action = Some(value.trim().to_string()),
        "target" => e.target = Some(value.trim().to_string()),
        "value" => e.value = Some(num(value)?),
        _ => return Err(format!("unknown key `{key}` in event section")),
    }
    Ok(())
}

fn event_from_draft(label: &str, d: &EventDraft) -> Result<Event, Vec<String>> {
    let mut errs = Vec::new();
    let time = d.time.unwrap_or_else(|| {
        errs.push("event is missing `time`".to_string());
        0.0
    });
    let target = d.target.clone().unwrap_or_else(|| {
        errs.push("event is missing `target`".to_string());
        String::new()
    });
    let value = || d.value.ok_or_else(|| "event action needs a `value`".to_string());
    let action = match d.action.as_deref() {
        Some("close_switch") => Ok(EventAction::CloseSwitch),
        Some("open_switch") => Ok(EventAction::OpenSwitch),
        Some("set_mech_power") => value().map(EventAction::SetMechPower),
        Some("set_iq") => value().map(EventAction::SetIq),
        Some("set_id") => value().map(EventAction::SetId),
        Some(other) => Err(format!(
            "unknown action `{other}` (expected close_switch, open_switch, set_mech_power, set_iq or set_id)"
        )),
        None => Err("event is missing `action`".to_string()),
    };
    match action {
        Ok(action) if errs.is_empty() => Ok(Event { label: label.into(), time, action, target }),
        Ok(_) => Err(errs),
        Err(e) => {
            errs.push(e);
            Err(errs)
        }
    }
}

fn err_at(location: &str, message: impl Into<String>) -> ScenarioError {
    ScenarioError { line: None, location: location.into(), message: message.into() }
}

impl Scenario {
    /// Ids of every device, grid first.
    pub fn device_ids(&self) -> Vec<&str> {
        self.grid
            .iter()
            .map(|g| g.id.as_str())
            .chain(self.machines.iter().map(|m| m.id.as_str()))
            .chain(self.loads.iter().map(|l| l.id.as_str()))
            .chain(self.winds.iter().map(|w| w.id.as_str()))
            .collect()
    }

    pub fn machine(&self, id: &str) -> Option<&MachineSpec> {
        self.machines.iter().find(|m| m.id == id)
    }

    /// Semantic checks; every error carries the section it belongs to.
    pub fn validate(&self) -> Vec<ScenarioError> {
        let mut errs = Vec::new();
        let s = &self.sim;
        if !(s.t_end > 0.0) {
            errs.push(err_at("sim", "t_end must be positive"));
        }
        if let Err(e) = s.integrator.validate() {
            errs.push(err_at("sim", e.to_string()));
        }
        if !(s.output_interval > 0.0) {
            errs.push(err_at("sim", "output_interval must be positive"));
        }
        if self.grid.is_none() && self.machines.is_empty() {
            errs.push(err_at("", "no voltage source: add a [grid] or a [machine.<id>] section"));
        }
        if let Some(g) = &self.grid {
            let p = &g.params;
            if !(p.f > 0.0) {
                errs.push(err_at("grid", "f must be positive"));
            }
            if !(p.v_ll_rms >= 0.0 && p.r_internal >= 0.0 && p.l_internal >= 0.0) {
                errs.push(err_at("grid", "v_ll, r and l must be non-negative"));
            }
            if p.r_internal == 0.0 && p.l_internal == 0.0 {
                errs.push(err_at("grid", "internal impedance must be non-zero"));
            }
        }
        for m in &self.machines {
            let loc = format!("machine.{}", m.id);
            if let Err(e) = m.params.validate() {
                errs.push(err_at(&loc, e.to_string()));
            }
            if m.governor == GovernorKind::Droop && !(m.droop.m > 0.0) {
                errs.push(err_at(&loc, "m_droop must be positive"));
            }
            if m.avr == AvrKind::Droop && !(m.droop.n > 0.0) {
                errs.push(err_at(&loc, "n_droop must be positive"));
            }
            if m.governor == GovernorKind::SpeedRef && !(m.droop.f0 > 0.0) {
                errs.push(err_at(&loc, "f0 must be positive"));
            }
            let g = &m.gains;
            if !(g.t_field > 0.0 && g.governor_kg >= 0.0 && g.avr_kp >= 0.0 && g.avr_ki >= 0.0 && g.droop_kp >= 0.0 && g.droop_ki >= 0.0) {
                errs.push(err_at(&loc, "controller gains must be non-negative and t_field positive"));
            }
        }
        for l in &self.loads {
            let p = &l.params;
            if !(p.r >= 0.0 && p.l >= 0.0) {
                errs.push(err_at(&format!("load.{}", l.id), "r and l must be non-negative"));
            } else if p.r == 0.0 && p.l == 0.0 {
                errs.push(err_at(&format!("load.{}", l.id), "r and l cannot both be zero"));
            }
        }
        for w in &self.winds {
            let loc = format!("wind.{}", w.id);
            if !(w.mapping.gain >= 0.0) {
                errs.push(err_at(&loc, "gain must be non-negative"));
            }
            if !(w.mapping.i_max > 0.0) {
                errs.push(err_at(&loc, "i_max must be positive"));
            }
            if w.mapping.kind == MappingKind::Cubic && !(w.mapping.v_ref > 0.0) {
                errs.push(err_at(&loc, "v_ref must be positive for the cubic mapping"));
            }
        }
        let ids = self.device_ids();
        for (k, id) in ids.iter().enumerate() {
            if ids[..k].contains(id) {
                errs.push(err_at(id, format!("duplicate device id `{id}`")));
            }
        }
        for e in &self.events {
            let loc = format!("event.{}", e.label);
            if !(e.time >= 0.0 && e.time <= s.t_end) {
                errs.push(err_at(&loc, format!("time {} outside [0, t_end = {}]", e.time, s.t_end)));
            }
            if let Err(m) = self.check_event_target(e) {
                errs.push(err_at(&loc, m));
            }
        }
        errs
    }

    fn check_event_target(&self, e: &Event) -> Result<(), String> {
        let t = e.target.as_str();
        let is_grid = self.grid.as_ref().is_some_and(|g| g.id == t);
        let is_load = self.loads.iter().any(|l| l.id == t);
        let is_wind = self.winds.iter().any(|w| w.id == t);
        let machine = self.machine(t);
        if !(is_grid || is_load || is_wind || machine.is_some()) {
            return Err(format!("event target `{t}` does not name a device"));
        }
        match e.action {
            EventAction::CloseSwitch | EventAction::OpenSwitch if !(is_grid || is_load || is_wind) => {
                Err(format!("`{t}` has no switch (only the grid, loads and wind converters do)"))
            }
            EventAction::SetMechPower(_) => match machine {
                Some(m) if m.governor != GovernorKind::SpeedRef => Ok(()),
                _ => Err(format!("set_mech_power needs a const_power or droop machine, `{t}` is not one")),
            },
            EventAction::SetIq(_) | EventAction::SetId(_) if !is_wind => {
                Err(format!("`{t}` is not a wind converter"))
            }
            _ => Ok(()),
        }
    }

    /// Applies one event's action to the device configuration.
    pub fn apply_action(&mut self, e: &Event) -> Result<(), String> {
        self.check_event_target(e)?;
        let t = e.target.as_str();
        match e.action {
            EventAction::CloseSwitch | EventAction::OpenSwitch => {
                let closed = e.action == EventAction::CloseSwitch;
                if let Some(g) = self.grid.as_mut().filter(|g| g.id == t) {
                    g.connected = closed;
                } else if let Some(l) = self.loads.iter_mut().find(|l| l.id == t) {
                    l.params.connected = closed;
                } else if let Some(w) = self.winds.iter_mut().find(|w| w.id == t) {
                    w.connected = closed;
                }
            }
            EventAction::SetMechPower(p) => {
                let m = self.machines.iter_mut().find(|m| m.id == t).expect("checked");
                match m.governor {
                    GovernorKind::ConstPower => m.p_mech = p,
                    _ => m.droop.p_nominal = p,
                }
            }
            EventAction::SetIq(v) => self.winds.iter_mut().find(|w| w.id == t).expect("checked").injection.iq_rms = v,
            EventAction::SetId(v) => {
                let w = self.winds.iter_mut().find(|w| w.id == t).expect("checked");
                w.injection.id_rms = v;
                w.series = None;
            }
        }
        Ok(())
    }

    /// Device configuration after every event at or before `t`, with those
    /// events removed.
    pub fn configuration_at(&self, t: f64) -> Scenario {
        let mut sc = self.clone();
        let (done, rest): (Vec<Event>, Vec<Event>) = sc.events.drain(..).partition(|e| e.time <= t);
        for e in &done {
            // targets are validated at parse time
            let _ = sc.apply_action(e);
        }
        sc.events = rest;
        sc
    }

    /// Sets a numeric field addressed as `<section>.<key>`, e.g.
    /// `load.load.r`, `machine.sg1.xs`, `sim.t_end`, `grid.l`,
    /// `event.1.time`.
    pub fn set_param(&mut self, path: &str, value: f64) -> Result<(), String> {
        const TEXT_KEYS: [&str; 8] = ["mode", "avr", "connected", "mapping", "q_mode", "iq_mode", "method", "series_file"];
        let raw = value.to_string();
        let parts: Vec<&str> = path.split('.').collect();
        if parts.last().is_some_and(|k| TEXT_KEYS.contains(k)) {
            return Err(format!("`{path}` is not a numeric field"));
        }
        match parts.as_slice() {
            ["sim", key] => apply_sim(&mut self.sim, key, &raw),
            ["grid", key] => match self.grid.as_mut() {
                Some(g) => apply_grid(g, key, &raw),
                None => Err("scenario has no grid".into()),
            },
            ["machine", id, key] => match self.machines.iter_mut().find(|m| m.id == *id) {
                Some(m) => apply_machine(m, key, &raw),
                None => Err(format!("no machine `{id}`")),
            },
            ["load", id, key] => match self.loads.iter_mut().find(|l| l.id == *id) {
                Some(l) => apply_load(l, key, &raw),
                None => Err(format!("no load `{id}`")),
            },
            ["wind", id, key] => match self.winds.iter_mut().find(|w| w.id == *id) {
                Some(w) => {
                    if *key == "id_rms" {
                        w.series = None;
                    }
                    apply_wind(w, key, &raw)
                }
                None => Err(format!("no wind converter `{id}`")),
            },
            ["event", label, key] => {
                let e = self.events.iter_mut().find(|e| e.label == *label).ok_or(format!("no event `{label}`"))?;
                match (*key, &mut e.action) {
                    ("time", _) => e.time = value,
                    ("value", EventAction::SetMechPower(v) | EventAction::SetIq(v) | EventAction::SetId(v)) => *v = value,
                    _ => return Err(format!("event field `{key}` is not numeric")),
                }
                self.sort_events();
                Ok(())
            }
            _ => Err(format!("cannot resolve parameter path `{path}`")),
        }
    }

    pub(crate) fn sort_events(&mut self) {
        self.events.sort_by(|a, b| a.time.total_cmp(&b.time));
    }

    /// SHA-256 of the complete configuration.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(format!("{self:?}").as_bytes()))
    }

    /// Power base used for the grid in the steady-state solver.
    fn grid_rating(&self) -> f64 {
        self.machines.iter().map(|m| m.params.s_rated).fold(0.0, f64::max).max(1e6)
    }

    /// The algebraic steady-state problem of the configuration in force
    /// after `t`, or `None` when a device has no algebraic counterpart.
    pub fn equilibrium_problem(&self, t: f64) -> Option<EquilibriumProblem> {
        let sc = self.configuration_at(t);
        let f_rated = sc
            .machines
            .first()
            .map(|m| m.params.f_rated)
            .or(sc.grid.as_ref().map(|g| g.params.f))?;
        let v_rated_ll = sc
            .machines
            .first()
            .map(|m| m.params.v_rated_ll)
            .or(sc.grid.as_ref().map(|g| g.params.v_ll_rms))?;
        let mut sources = Vec::new();
        if let Some(g) = sc.grid.as_ref().filter(|g| g.connected) {
            sources.push(SourceSpec {
                id: g.id.clone(),
                s_rated: sc.grid_rating(),
                f_rated: g.params.f,
                v_rated_ll: g.params.v_ll_rms,
                impedance: Complex64::new(g.params.r_internal, 2.0 * PI * g.params.f * g.params.l_internal),
                active: ActiveControl::Isochronous { f_ref: g.params.f },
                reactive: ReactiveControl::FixedEmf(EmfLaw::Constant(g.params.emf())),
            });
        }
        for m in &sc.machines {
            let p = &m.params;
            let active = match m.governor {
                GovernorKind::ConstPower => ActiveControl::Fixed { p_mech: m.p_mech, damping: p.d_damping },
                GovernorKind::SpeedRef => ActiveControl::Isochronous { f_ref: m.droop.f0 },
                GovernorKind::Droop => {
                    ActiveControl::Droop { f0: m.droop.f0, m: m.droop.m, p_nominal: m.droop.p_nominal }
                }
            };
            let reactive = match m.avr {
                AvrKind::Pi => ReactiveControl::Regulated { v_ref_ll: m.droop.v0_ll },
                AvrKind::Fixed => ReactiveControl::FixedEmf(EmfLaw::Flux(p.flux_nominal)),
                AvrKind::Droop => ReactiveControl::Droop { v0_ll: m.droop.v0_ll, n: m.droop.n, q0: m.droop.q0 },
            };
            sources.push(SourceSpec {
                id: m.id.clone(),
                s_rated: p.s_rated,
                f_rated: p.f_rated,
                v_rated_ll: p.v_rated_ll,
                impedance: Complex64::new(0.0, p.xs),
                active,
                reactive,
            });
        }
        Some(EquilibriumProblem {
            f_rated,
            v_rated_ll,
            sources,
            loads: sc.loads.iter().filter(|l| l.params.connected).map(|l| (l.id.clone(), l.params)).collect(),
            winds: sc
                .winds
                .iter()
                .filter(|w| w.connected)
                .map(|w| (w.id.clone(), WindInjection { id_rms: w.id_at(t), ..w.injection }))
                .collect(),
        })
    }
}
