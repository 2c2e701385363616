//! Time-domain simulation of a scenario and steady-state extraction.

use std::f64::consts::{PI, SQRT_2};

use thiserror::Error;

use super::{Event, GovernorKind, Scenario, ScenarioErrors};
use crate::dynamics::{integrate_observed, DynamicsError, IntegratorConfig, ModelError, OdeSystem};
use crate::machine::{
    avr_derivatives, electrical_output, emf_magnitude, load_angle, machine_norton, swing_derivatives,
    ControlGains, FrequencyMode, MachineMode, MachineParams, MachineState,
};
use crate::network::equilibrium::{steady_state_droop_solve, EquilibriumError, EquilibriumSolution, NewtonOptions};
use crate::network::{
    GridConnection, LoadConnection, NetworkError, NetworkModel, NetworkSolution, NortonSource, WindConnection,
};
use crate::phasor::phase_line_convert;
use crate::report::TimeSeries;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario:\n{0}")]
    Invalid(ScenarioErrors),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("steady-state solve failed: {0}")]
    Equilibrium(#[from] EquilibriumError),
    #[error("{0}")]
    Parameter(String),
}

struct MachineRt {
    params: MachineParams,
    mode: MachineMode,
    gains: ControlGains,
}

/// Scenario bound to a network model and the integrator.
struct Plant {
    sc: Scenario,
    events: Vec<Event>,
    event_times: Vec<f64>,
    machines: Vec<MachineRt>,
    net: NetworkModel,
}

const STATE_LEN: usize = MachineState::LEN;

impl Plant {
    fn new(sc: &Scenario) -> Self {
        let f = sc.machines.first().map(|m| m.params.f_rated).or(sc.grid.as_ref().map(|g| g.params.f)).unwrap_or(50.0);
        let mut net = NetworkModel::single_bus(f);
        if let Some(g) = &sc.grid {
            net.grids.push(GridConnection { id: g.id.clone(), bus: 0, params: g.params, angle: 0.0, connected: g.connected });
        }
        for l in &sc.loads {
            net.loads.push(LoadConnection { id: l.id.clone(), bus: 0, params: l.params });
        }
        for m in &sc.machines {
            net.sources.push(NortonSource { id: m.id.clone(), bus: 0, injection: Default::default(), admittance: Default::default() });
        }
        for w in &sc.winds {
            net.winds.push(WindConnection { id: w.id.clone(), bus: 0, injection: w.injection, connected: w.connected });
        }
        let mut event_times: Vec<f64> = sc.events.iter().map(|e| e.time).collect();
        event_times.dedup();
        let mut plant = Self {
            sc: sc.clone(),
            events: sc.events.clone(),
            event_times,
            machines: Vec::new(),
            net,
        };
        plant.sync();
        plant
    }

    /// Pushes the current device configuration into the runtime models.
    fn sync(&mut self) {
        let sc = &self.sc;
        if let (Some(g), Some(c)) = (&sc.grid, self.net.grids.first_mut()) {
            c.connected = g.connected;
        }
        for (c, l) in self.net.loads.iter_mut().zip(&sc.loads) {
            c.params = l.params;
        }
        for (c, w) in self.net.winds.iter_mut().zip(&sc.winds) {
            c.injection = w.injection;
            c.connected = w.connected;
        }
        self.machines = sc
            .machines
            .iter()
            .map(|m| MachineRt { params: m.params, mode: m.mode(), gains: m.gains })
            .collect();
    }

    fn initial_state(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.machines.len() * STATE_LEN];
        for (k, (rt, spec)) in self.machines.iter().zip(&self.sc.machines).enumerate() {
            let mut s = MachineState::initial(&rt.params, &rt.mode, spec.delta0);
            if spec.governor == GovernorKind::Droop {
                s.governor_integ = spec.p_mech;
            }
            s.write(&mut x[k * STATE_LEN..]);
        }
        x
    }

    fn state(x: &[f64], k: usize) -> MachineState {
        MachineState::from_slice(&x[k * STATE_LEN..])
    }

    fn solve(&mut self, t: f64, x: &[f64]) -> Result<NetworkSolution, NetworkError> {
        for (c, w) in self.net.winds.iter_mut().zip(&self.sc.winds) {
            c.injection.id_rms = w.id_at(t);
        }
        for (k, rt) in self.machines.iter().enumerate() {
            let (inj, y) = machine_norton(&Self::state(x, k), &rt.params);
            self.net.sources[k].injection = inj;
            self.net.sources[k].admittance = y;
        }
        self.net.solve_bus_voltages()
    }

    /// Grid frequency when the grid is connected, else the speed of the
    /// first speed-referenced machine, else the inertia-weighted mean speed.
    fn system_frequency(&self, x: &[f64]) -> f64 {
        if let Some(g) = self.sc.grid.as_ref().filter(|g| g.connected) {
            return g.params.f;
        }
        if let Some(k) = self.machines.iter().position(|m| matches!(m.mode.frequency, FrequencyMode::SpeedReference { .. })) {
            return Self::state(x, k).frequency();
        }
        let (num, den) = self.machines.iter().enumerate().fold((0.0, 0.0), |(n, d), (k, m)| {
            let w = m.params.h_inertia * m.params.s_rated;
            (n + w * Self::state(x, k).frequency(), d + w)
        });
        num / den
    }

    fn record(&mut self, t: f64, x: &[f64]) -> Result<Vec<f64>, NetworkError> {
        let sol = self.solve(t, x)?;
        let v = sol.v[0];
        let flows = self.net.device_flows(&sol);
        let mut row = vec![t, self.system_frequency(x), phase_line_convert(v.norm())];
        let mut flow = flows.iter();
        for _ in &self.net.grids {
            let f = flow.next().expect("grid flow");
            row.extend([f.p, f.q, f.i_rms]);
        }
        for (k, rt) in self.machines.iter().enumerate() {
            let f = flow.next().expect("machine flow");
            let s = Self::state(x, k);
            row.extend([
                f.p,
                f.q,
                f.i_rms,
                load_angle(&s, v).to_degrees(),
                rt.params.mechanical_speed(s.omega),
                s.flux,
                emf_magnitude(s.omega, s.flux),
            ]);
        }
        for _ in &self.net.loads {
            let f = flow.next().expect("load flow");
            row.extend([f.p, f.q, f.i_rms]);
        }
        for w in &self.net.winds {
            let f = flow.next().expect("wind flow");
            let (id, iq) = if w.connected { (w.injection.id_rms, w.injection.iq_rms) } else { (0.0, 0.0) };
            row.extend([f.p, f.q, f.i_rms, id, iq]);
        }
        Ok(row)
    }
}

impl OdeSystem for Plant {
    fn dim(&self) -> usize {
        self.machines.len() * STATE_LEN
    }

    fn derivatives(&mut self, t: f64, x: &[f64], dx: &mut [f64]) -> Result<(), ModelError> {
        let sol = self.solve(t, x)?;
        let v = sol.v[0];
        for (k, rt) in self.machines.iter().enumerate() {
            let s = Self::state(x, k);
            let (p, q) = electrical_output(&s, &rt.params, v);
            let sw = swing_derivatives(&s, p, &rt.params, &rt.mode.frequency, &rt.gains);
            let ex = avr_derivatives(&s, v.norm(), q, &rt.params, &rt.mode.voltage, &rt.gains);
            dx[k * STATE_LEN..(k + 1) * STATE_LEN].copy_from_slice(&[sw.d_delta, sw.d_omega, ex.d_flux, sw.d_governor, ex.d_avr]);
        }
        Ok(())
    }

    fn apply_event(&mut self, index: usize, _t: f64, _x: &mut [f64]) -> Result<(), ModelError> {
        let at = self.event_times[index];
        for e in self.events.iter().filter(|e| e.time == at) {
            self.sc.apply_action(e)?;
        }
        self.sync();
        Ok(())
    }

    fn state_scale(&self, i: usize) -> f64 {
        let m = &self.machines[i / STATE_LEN].params;
        match i % STATE_LEN {
            1 => m.omega_rated(),
            2 => m.flux_nominal,
            3 => m.s_rated,
            _ => 1.0,
        }
    }
}

/// Output column names of a scenario, shared by time-domain runs and
/// steady-state rows.
pub fn output_columns(sc: &Scenario) -> Vec<String> {
    let mut c: Vec<String> = ["t", "f_hz", "v_bus_ll"].map(String::from).to_vec();
    if let Some(g) = &sc.grid {
        c.extend(["p", "q", "i_rms"].map(|k| format!("{}.{k}", g.id)));
    }
    for m in &sc.machines {
        c.extend(["p", "q", "i_rms", "delta_deg", "speed", "flux", "ef"].map(|k| format!("machine.{}.{k}", m.id)));
    }
    for l in &sc.loads {
        c.extend(["p", "q", "i_rms"].map(|k| format!("load.{}.{k}", l.id)));
    }
    for w in &sc.winds {
        c.extend(["p", "q", "i_rms", "id_rms", "iq_rms"].map(|k| format!("wind.{}.{k}", w.id)));
    }
    c
}

fn check(sc: &Scenario) -> Result<(), SimError> {
    let errs = sc.validate();
    if errs.is_empty() {
        Ok(())
    } else {
        Err(SimError::Invalid(ScenarioErrors(errs)))
    }
}

/// Integrates the scenario from a flat start to `t_end`, sampling every
/// output interval and at every event.
pub fn run(sc: &Scenario) -> Result<TimeSeries, SimError> {
    check(sc)?;
    let mut plant = Plant::new(sc);
    let cfg = IntegratorConfig { output_interval: Some(sc.sim.output_interval), ..sc.sim.integrator };
    let mut ts = TimeSeries::new(output_columns(sc));
    let md = &mut ts.metadata;
    md.insert("scenario_sha256".into(), sc.hash());
    md.insert("method".into(), cfg.method.to_string());
    md.insert("dt".into(), cfg.dt.to_string());
    md.insert("rel_tol".into(), cfg.rel_tol.to_string());
    md.insert("abs_tol".into(), cfg.abs_tol.to_string());
    md.insert("output_interval".into(), sc.sim.output_interval.to_string());
    md.insert("t_end".into(), sc.sim.t_end.to_string());
    let x0 = plant.initial_state();
    let times = plant.event_times.clone();
    let mut rows = Vec::new();
    integrate_observed(&mut plant, &x0, 0.0, sc.sim.t_end, &cfg, &times, |p: &mut Plant, t, x| {
        rows.push(p.record(t, x)?);
        Ok(())
    })?;
    for r in rows {
        ts.push(r).map_err(|e| SimError::Parameter(e.to_string()))?;
    }
    Ok(ts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SteadyMethod {
    /// Algebraic solve when the scenario maps onto it, else a full run.
    #[default]
    Auto,
    Equilibrium,
    Dynamic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    pub columns: Vec<String>,
    pub values: Vec<f64>,
    /// `"equilibrium"` or `"dynamic"`.
    pub method: &'static str,
}

impl SteadyState {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.columns.iter().position(|c| c == name).map(|k| self.values[k])
    }
}

fn equilibrium_row(sc: &Scenario, t: f64, sol: &EquilibriumSolution) -> Vec<f64> {
    let cfg = sc.configuration_at(t);
    let mut row = vec![t, sol.f_hz, sol.v_ll()];
    let omega = 2.0 * PI * sol.f_hz;
    if let Some(g) = &cfg.grid {
        row.extend(match sol.source(&g.id) {
            Some(s) => [s.p, s.q, s.i_rms],
            None => [0.0; 3],
        });
    }
    for m in &cfg.machines {
        let s = sol.source(&m.id).expect("every machine is a source");
        row.extend([
            s.p,
            s.q,
            s.i_rms,
            s.delta.to_degrees(),
            m.params.mechanical_speed(omega),
            s.emf * SQRT_2 / omega,
            s.emf,
        ]);
    }
    for l in &cfg.loads {
        row.extend(match sol.loads.iter().find(|f| f.id == l.id) {
            Some(f) => [f.p, f.q, f.i_rms],
            None => [0.0; 3],
        });
    }
    for w in &cfg.winds {
        row.extend(match sol.winds.iter().find(|f| f.id == w.id) {
            Some(f) => [f.p, f.q, f.i_rms, w.id_at(t), w.injection.iq_rms],
            None => [0.0; 5],
        });
    }
    row
}

/// Solves the algebraic steady state of the configuration in force at `t`
/// (all events up to `t` applied, wind current taken from the profile).
pub fn equilibrium_at(sc: &Scenario, t: f64) -> Result<SteadyState, SimError> {
    check(sc)?;
    let problem = sc
        .equilibrium_problem(t)
        .ok_or_else(|| SimError::Parameter("scenario has no sources".into()))?;
    let sol = steady_state_droop_solve(&problem, &NewtonOptions::default())?;
    Ok(SteadyState { columns: output_columns(sc), values: equilibrium_row(sc, t, &sol), method: "equilibrium" })
}

/// Steady operating point after every event. The dynamic variant averages
/// the final 10% of a full run.
pub fn steady_state(sc: &Scenario, method: SteadyMethod) -> Result<SteadyState, SimError> {
    let dynamic = |sc: &Scenario| -> Result<SteadyState, SimError> {
        let ts = run(sc)?;
        Ok(SteadyState { columns: ts.columns().to_vec(), values: ts.steady_state(), method: "dynamic" })
    };
    match method {
        SteadyMethod::Dynamic => dynamic(sc),
        SteadyMethod::Equilibrium => equilibrium_at(sc, sc.sim.t_end),
        SteadyMethod::Auto => match equilibrium_at(sc, sc.sim.t_end) {
            Ok(s) => Ok(s),
            Err(SimError::Equilibrium(_)) => dynamic(sc),
            Err(e) => Err(e),
        },
    }
}
