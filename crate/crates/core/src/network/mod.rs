//! Quasi-static single-frequency phasor network.
//!
//! Devices attach to buses as shunt admittances (loads, source internal
//! impedances) and current injections (Norton sources, converter currents).
//! Each solve assembles `Y·V = I` and solves it with a dense complex LU.

pub mod equilibrium;

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::phasor::{complex_power, line_phase_convert, Phasor};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("load `{0}` has zero impedance")]
    ZeroImpedanceLoad(String),
    #[error("no voltage-establishing source is connected; the network is de-energized")]
    NoVoltageSource,
    #[error("admittance matrix is singular")]
    Singular,
    #[error("unknown device `{0}`")]
    UnknownDevice(String),
    #[error("device `{0}` has no switch")]
    NotSwitchable(String),
    #[error("converter injection did not converge after {0} iterations")]
    InjectionNotConverged(usize),
    #[error("bus index {bus} out of range for a {n_buses}-bus network")]
    BadBus { bus: usize, n_buses: usize },
}

/// Stiff three-phase source behind an R–L impedance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSourceParams {
    pub v_ll_rms: f64,
    pub f: f64,
    pub r_internal: f64,
    pub l_internal: f64,
}

impl Default for GridSourceParams {
    fn default() -> Self {
        Self { v_ll_rms: 11e3, f: 50.0, r_internal: 1e-5, l_internal: 0.04 }
    }
}

impl GridSourceParams {
    pub fn impedance(&self) -> Complex64 {
        Complex64::new(self.r_internal, 2.0 * PI * self.f * self.l_internal)
    }

    pub fn emf(&self) -> f64 {
        line_phase_convert(self.v_ll_rms)
    }
}

/// Series R–L load per phase, star connected.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RLLoadParams {
    pub r: f64,
    pub l: f64,
    pub connected: bool,
}

impl RLLoadParams {
    pub fn resistive(r: f64) -> Self {
        Self { r, l: 0.0, connected: true }
    }
}

/// Sign of the reactive component of a converter current.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReactiveSense {
    /// Positive `iq` delivers reactive power to the bus.
    #[default]
    Supply,
    /// Positive `iq` draws reactive power from the bus.
    Absorb,
}

impl ReactiveSense {
    pub fn sign(self) -> f64 {
        match self {
            ReactiveSense::Supply => 1.0,
            ReactiveSense::Absorb => -1.0,
        }
    }
}

/// Grid-feeding converter: an ideal current source phase-locked to its bus.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WindInjection {
    pub id_rms: f64,
    pub iq_rms: f64,
    pub sense: ReactiveSense,
}

/// Load admittance at frequency `f`; zero when disconnected.
pub fn load_admittance(load: &RLLoadParams, f: f64) -> Result<Complex64, NetworkError> {
    if !load.connected {
        return Ok(ZERO);
    }
    let z = Complex64::new(load.r, 2.0 * PI * f * load.l);
    if z.norm() == 0.0 {
        return Err(NetworkError::ZeroImpedanceLoad(String::new()));
    }
    Ok(z.inv())
}

/// Norton equivalent `(E/Z, 1/Z)` of the grid, with the grid EMF at angle 0.
pub fn grid_norton(g: &GridSourceParams) -> (Phasor, Complex64) {
    let z = g.impedance();
    if !z.norm().is_finite() || z.norm() == 0.0 {
        return (ZERO, ZERO);
    }
    let y = z.inv();
    (Phasor::new(g.emf(), 0.0) * y, y)
}

/// Converter current `(id − j·iq)·V/|V|` for a supplying converter; zero on
/// a de-energized bus.
pub fn wind_injection(id_rms: f64, iq_rms: f64, v_bus: Phasor) -> Phasor {
    converter_current(&WindInjection { id_rms, iq_rms, sense: ReactiveSense::Supply }, v_bus)
}

pub fn converter_current(w: &WindInjection, v_bus: Phasor) -> Phasor {
    let mag = v_bus.norm();
    if mag == 0.0 {
        return ZERO;
    }
    Complex64::new(w.id_rms, -w.sense.sign() * w.iq_rms) * (v_bus / mag)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridConnection {
    pub id: String,
    pub bus: usize,
    pub params: GridSourceParams,
    /// Angle of the grid EMF, rad.
    pub angle: f64,
    pub connected: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadConnection {
    pub id: String,
    pub bus: usize,
    pub params: RLLoadParams,
}

/// Norton source fixed for the duration of one solve (e.g. a machine).
#[derive(Debug, Clone, PartialEq)]
pub struct NortonSource {
    pub id: String,
    pub bus: usize,
    pub injection: Phasor,
    pub admittance: Complex64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindConnection {
    pub id: String,
    pub bus: usize,
    pub injection: WindInjection,
    pub connected: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    pub impedance: Complex64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    pub n_buses: usize,
    /// Frequency at which load and branch reactances are evaluated.
    pub f_system: f64,
    pub grids: Vec<GridConnection>,
    pub loads: Vec<LoadConnection>,
    pub sources: Vec<NortonSource>,
    pub winds: Vec<WindConnection>,
    pub branches: Vec<Branch>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeviceKind {
    Grid,
    Machine,
    Load,
    Wind,
}

impl DeviceKind {
    pub fn is_source(self) -> bool {
        !matches!(self, DeviceKind::Load)
    }

    pub fn label(self) -> &'static str {
        match self {
            DeviceKind::Grid => "grid",
            DeviceKind::Machine => "machine",
            DeviceKind::Load => "load",
            DeviceKind::Wind => "wind",
        }
    }
}

/// Power at a device terminal. Sources report delivered power, loads report
/// absorbed power.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceFlow {
    pub id: String,
    pub kind: DeviceKind,
    pub p: f64,
    pub q: f64,
    pub i_rms: f64,
    pub current: Phasor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSolution {
    pub v: Vec<Phasor>,
    /// Converter currents in the order of `NetworkModel::winds`.
    pub wind_currents: Vec<Phasor>,
    pub iterations: usize,
}

impl NetworkModel {
    pub fn single_bus(f_system: f64) -> Self {
        Self {
            n_buses: 1,
            f_system,
            grids: Vec::new(),
            loads: Vec::new(),
            sources: Vec::new(),
            winds: Vec::new(),
            branches: Vec::new(),
        }
    }

    fn check_bus(&self, bus: usize) -> Result<(), NetworkError> {
        if bus < self.n_buses {
            Ok(())
        } else {
            Err(NetworkError::BadBus { bus, n_buses: self.n_buses })
        }
    }

    fn grid_norton_at(g: &GridConnection) -> (Phasor, Complex64) {
        let (inj, y) = grid_norton(&g.params);
        (inj * Complex64::from_polar(1.0, g.angle), y)
    }

    /// Admittance matrix and the fixed (voltage-independent) injections.
    pub fn assemble(&self) -> Result<(DMatrix<Complex64>, DVector<Complex64>), NetworkError> {
        let n = self.n_buses;
        let mut y = DMatrix::from_element(n, n, ZERO);
        let mut i = DVector::from_element(n, ZERO);
        for g in self.grids.iter().filter(|g| g.connected) {
            self.check_bus(g.bus)?;
            let (inj, adm) = Self::grid_norton_at(g);
            y[(g.bus, g.bus)] += adm;
            i[g.bus] += inj;
        }
        for l in &self.loads {
            self.check_bus(l.bus)?;
            y[(l.bus, l.bus)] += load_admittance(&l.params, self.f_system)
                .map_err(|_| NetworkError::ZeroImpedanceLoad(l.id.clone()))?;
        }
        for s in &self.sources {
            self.check_bus(s.bus)?;
            y[(s.bus, s.bus)] += s.admittance;
            i[s.bus] += s.injection;
        }
        for b in &self.branches {
            self.check_bus(b.from)?;
            self.check_bus(b.to)?;
            let adm = b.impedance.inv();
            y[(b.from, b.from)] += adm;
            y[(b.to, b.to)] += adm;
            y[(b.from, b.to)] -= adm;
            y[(b.to, b.from)] -= adm;
        }
        Ok((y, i))
    }

    /// Opens or closes the switch of a grid, load or converter. Idempotent.
    pub fn apply_switch(&mut self, target: &str, closed: bool) -> Result<(), NetworkError> {
        if let Some(g) = self.grids.iter_mut().find(|g| g.id == target) {
            g.connected = closed;
        } else if let Some(l) = self.loads.iter_mut().find(|l| l.id == target) {
            l.params.connected = closed;
        } else if let Some(w) = self.winds.iter_mut().find(|w| w.id == target) {
            w.connected = closed;
        } else if self.sources.iter().any(|s| s.id == target) {
            return Err(NetworkError::NotSwitchable(target.to_string()));
        } else {
            return Err(NetworkError::UnknownDevice(target.to_string()));
        }
        Ok(())
    }

    /// Solves for the bus voltages. Converter currents depend on the bus
    /// voltage angle and are resolved by fixed-point iteration on the
    /// factorized admittance matrix.
    pub fn solve_bus_voltages(&self) -> Result<NetworkSolution, NetworkError> {
        let energized = self.grids.iter().any(|g| g.connected && g.params.emf() > 0.0)
            || self.sources.iter().any(|s| s.injection.norm() > 0.0);
        if !energized {
            return Err(NetworkError::NoVoltageSource);
        }
        let (y, i_fixed) = self.assemble()?;
        let lu = y.lu();
        let solve = |rhs: &DVector<Complex64>| lu.solve(rhs).ok_or(NetworkError::Singular);

        let mut v = solve(&i_fixed)?;
        if v.iter().any(|x| !x.re.is_finite() || !x.im.is_finite()) {
            return Err(NetworkError::Singular);
        }
        let active: Vec<&WindConnection> = self.winds.iter().filter(|w| w.connected).collect();
        let mut wind_currents = vec![ZERO; self.winds.len()];
        let mut iterations = 1;
        if !active.is_empty() {
            const MAX_ITER: usize = 100;
            loop {
                let mut rhs = i_fixed.clone();
                for (k, w) in self.winds.iter().enumerate() {
                    wind_currents[k] =
                        if w.connected { converter_current(&w.injection, v[w.bus]) } else { ZERO };
                    rhs[w.bus] += wind_currents[k];
                }
                let next = solve(&rhs)?;
                let scale = v.iter().map(|x| x.norm()).fold(0.0, f64::max).max(1.0);
                let delta = (&next - &v).iter().map(|x| x.norm()).fold(0.0, f64::max);
                v = next;
                iterations += 1;
                if delta <= 1e-13 * scale {
                    break;
                }
                if iterations > MAX_ITER {
                    return Err(NetworkError::InjectionNotConverged(MAX_ITER));
                }
            }
            for (k, w) in self.winds.iter().enumerate() {
                wind_currents[k] =
                    if w.connected { converter_current(&w.injection, v[w.bus]) } else { ZERO };
            }
        }
        if v.iter().all(|x| x.norm() == 0.0) {
            return Err(NetworkError::NoVoltageSource);
        }
        Ok(NetworkSolution { v: v.iter().copied().collect(), wind_currents, iterations })
    }

    /// `‖Y·V − I‖ / ‖I‖` for a solution, including converter currents.
    pub fn relative_residual(&self, sol: &NetworkSolution) -> Result<f64, NetworkError> {
        let (y, mut i) = self.assemble()?;
        for (k, w) in self.winds.iter().enumerate() {
            i[w.bus] += sol.wind_currents[k];
        }
        let v = DVector::from_vec(sol.v.clone());
        let r = &y * &v - &i;
        Ok(r.norm() / i.norm().max(f64::MIN_POSITIVE))
    }

    /// Terminal flows of every device, in the order grids, sources, loads, winds.
    pub fn device_flows(&self, sol: &NetworkSolution) -> Vec<DeviceFlow> {
        let flow = |id: &str, kind, v: Phasor, current: Phasor| {
            let r = complex_power(v, current);
            DeviceFlow { id: id.to_string(), kind, p: r.p_active, q: r.q_reactive, i_rms: r.i_rms_phase, current }
        };
        let mut out = Vec::new();
        for g in &self.grids {
            let v = sol.v[g.bus];
            let cur = if g.connected {
                let (inj, y) = Self::grid_norton_at(g);
                inj - y * v
            } else {
                ZERO
            };
            out.push(flow(&g.id, DeviceKind::Grid, v, cur));
        }
        for s in &self.sources {
            let v = sol.v[s.bus];
            out.push(flow(&s.id, DeviceKind::Machine, v, s.injection - s.admittance * v));
        }
        for l in &self.loads {
            let v = sol.v[l.bus];
            let y = load_admittance(&l.params, self.f_system).unwrap_or(ZERO);
            out.push(flow(&l.id, DeviceKind::Load, v, y * v));
        }
        for (k, w) in self.winds.iter().enumerate() {
            out.push(flow(&w.id, DeviceKind::Wind, sol.v[w.bus], sol.wind_currents[k]));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid() -> GridConnection {
        GridConnection {
            id: "grid".into(),
            bus: 0,
            params: GridSourceParams::default(),
            angle: 0.0,
            connected: true,
        }
    }

    fn load(id: &str, r: f64, l: f64, connected: bool) -> LoadConnection {
        LoadConnection { id: id.into(), bus: 0, params: RLLoadParams { r, l, connected } }
    }

    #[test]
    fn load_admittance_examples() {
        let y = load_admittance(&RLLoadParams::resistive(121.0), 50.0).unwrap();
        assert_relative_eq!(y.re, 1.0 / 121.0, epsilon = 1e-15);
        assert_eq!(y.im, 0.0);

        let y = load_admittance(&RLLoadParams { r: 121.0, l: 0.1, connected: true }, 50.0).unwrap();
        let z = Complex64::new(121.0, 31.415_926_535_897_93);
        assert!((y - z.inv()).norm() < 1e-15);

        let off = RLLoadParams { r: 121.0, l: 0.1, connected: false };
        assert_eq!(load_admittance(&off, 50.0).unwrap(), ZERO);
        let short = RLLoadParams { r: 0.0, l: 0.0, connected: true };
        assert!(load_admittance(&short, 50.0).is_err());
    }

    #[test]
    fn grid_norton_examples() {
        let g = GridSourceParams::default();
        let z = g.impedance();
        assert_relative_eq!(z.im, 12.566, epsilon = 1e-3);
        assert_relative_eq!(z.norm(), 12.566, epsilon = 1e-3);
        let (inj, _) = grid_norton(&g);
        assert!((inj.norm() - 505.3).abs() < 0.2, "{}", inj.norm());

        let open = GridSourceParams { r_internal: f64::INFINITY, ..g };
        assert_eq!(grid_norton(&open), (ZERO, ZERO));
    }

    #[test]
    fn wind_injection_examples() {
        let v = Phasor::new(6350.0, 0.0);
        let i = wind_injection(20.0, 0.0, v);
        let r = complex_power(v, i);
        assert_relative_eq!(r.p_active, 0.381e6, epsilon = 1.0);
        assert!(r.q_reactive.abs() < 1e-9);

        assert_eq!(wind_injection(0.0, 0.0, v), ZERO);

        let r = complex_power(v, wind_injection(0.0, 10.0, v));
        assert_relative_eq!(r.q_reactive, 190.5e3, epsilon = 1e-6);
        assert!(r.p_active.abs() < 1e-9);

        assert_eq!(wind_injection(20.0, 5.0, ZERO), ZERO);

        // aligned with an arbitrary bus angle
        let v = Phasor::from_polar(6000.0, 0.7);
        let r = complex_power(v, wind_injection(3.0, 2.0, v));
        assert_relative_eq!(r.p_active, 3.0 * 6000.0 * 3.0, max_relative = 1e-12);
        assert_relative_eq!(r.q_reactive, 3.0 * 6000.0 * 2.0, max_relative = 1e-12);

        let absorb = WindInjection { id_rms: 0.0, iq_rms: 2.0, sense: ReactiveSense::Absorb };
        let r = complex_power(v, converter_current(&absorb, v));
        assert_relative_eq!(r.q_reactive, -3.0 * 6000.0 * 2.0, max_relative = 1e-12);
    }

    #[test]
    fn grid_alone_holds_emf() {
        let mut net = NetworkModel::single_bus(50.0);
        net.grids.push(grid());
        let sol = net.solve_bus_voltages().unwrap();
        assert!((sol.v[0] - Phasor::new(GridSourceParams::default().emf(), 0.0)).norm() < 1e-9);
    }

    #[test]
    fn grid_with_one_megawatt_load() {
        let mut net = NetworkModel::single_bus(50.0);
        net.grids.push(grid());
        net.loads.push(load("load", 121.0, 0.0, true));
        let sol = net.solve_bus_voltages().unwrap();
        let v_ll = sol.v[0].norm() * 3f64.sqrt();
        assert!((v_ll - 11e3).abs() / 11e3 < 0.01, "{v_ll}");
        let flows = net.device_flows(&sol);
        let l = flows.iter().find(|f| f.kind == DeviceKind::Load).unwrap();
        assert!((l.i_rms - 52.5).abs() / 52.5 < 0.01, "{}", l.i_rms);
        assert!(net.relative_residual(&sol).unwrap() < 1e-9);
    }

    #[test]
    fn symmetric_machines_share_equally() {
        let mut net = NetworkModel::single_bus(50.0);
        let y = Complex64::new(0.0, -1.0 / 88.6);
        let e = Phasor::from_polar(6500.0, 0.2);
        for id in ["sg1", "sg2"] {
            net.sources.push(NortonSource { id: id.into(), bus: 0, injection: e * y, admittance: y });
        }
        net.loads.push(load("load", 121.0, 0.1, true));
        let sol = net.solve_bus_voltages().unwrap();
        let flows = net.device_flows(&sol);
        assert_eq!(flows[0].current, flows[1].current);
        assert!(net.relative_residual(&sol).unwrap() < 1e-9);
    }

    #[test]
    fn de_energized_network_is_rejected() {
        let mut net = NetworkModel::single_bus(50.0);
        net.loads.push(load("load", 121.0, 0.0, true));
        assert_eq!(net.solve_bus_voltages(), Err(NetworkError::NoVoltageSource));

        let mut g = grid();
        g.connected = false;
        net.grids.push(g);
        assert_eq!(net.solve_bus_voltages(), Err(NetworkError::NoVoltageSource));
    }

    #[test]
    fn switching() {
        let mut net = NetworkModel::single_bus(50.0);
        net.grids.push(grid());
        net.loads.push(load("load", 121.0, 0.0, false));
        let before = net.clone();
        net.apply_switch("load", false).unwrap();
        assert_eq!(net, before);
        net.apply_switch("load", true).unwrap();
        assert!(net.loads[0].params.connected);
        net.apply_switch("load", true).unwrap();
        assert!(net.loads[0].params.connected);
        assert_eq!(
            net.apply_switch("nope", true),
            Err(NetworkError::UnknownDevice("nope".into()))
        );
        net.sources.push(NortonSource { id: "sg".into(), bus: 0, injection: ZERO, admittance: ZERO });
        assert_eq!(net.apply_switch("sg", false), Err(NetworkError::NotSwitchable("sg".into())));
    }

    #[test]
    fn wind_solution_is_consistent() {
        let mut net = NetworkModel::single_bus(50.0);
        net.grids.push(grid());
        net.loads.push(load("load", 121.0, 0.1, true));
        net.winds.push(WindConnection {
            id: "wind".into(),
            bus: 0,
            injection: WindInjection { id_rms: 20.0, iq_rms: 5.0, sense: ReactiveSense::Supply },
            connected: true,
        });
        let sol = net.solve_bus_voltages().unwrap();
        assert!(net.relative_residual(&sol).unwrap() < 1e-9);
        let flows = net.device_flows(&sol);
        let w = flows.iter().find(|f| f.kind == DeviceKind::Wind).unwrap();
        let vm = sol.v[0].norm();
        assert_relative_eq!(w.p, 3.0 * vm * 20.0, max_relative = 1e-12);
        assert_relative_eq!(w.q, 3.0 * vm * 5.0, max_relative = 1e-12);

        let src: f64 = flows.iter().filter(|f| f.kind.is_source()).map(|f| f.p).sum();
        let sink: f64 = flows.iter().filter(|f| !f.kind.is_source()).map(|f| f.p).sum();
        assert!((src - sink).abs() < 1e-6 * sink);
    }

    #[test]
    fn two_bus_tie() {
        let mut net = NetworkModel::single_bus(50.0);
        net.n_buses = 2;
        net.grids.push(grid());
        net.loads.push(LoadConnection { id: "far".into(), bus: 1, params: RLLoadParams::resistive(121.0) });
        net.branches.push(Branch { from: 0, to: 1, impedance: Complex64::new(0.5, 2.0) });
        let (y, _) = net.assemble().unwrap();
        assert_eq!(y[(0, 1)], y[(1, 0)]);
        let sol = net.solve_bus_voltages().unwrap();
        assert!(sol.v[1].norm() < sol.v[0].norm());
        assert!(net.relative_residual(&sol).unwrap() < 1e-9);
    }
}
