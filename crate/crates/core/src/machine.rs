//! Classical synchronous generator: EMF behind synchronous reactance, swing
//! dynamics, governor and excitation control.
//!
//! Speeds in [`MachineState`] are electrical (rad/s); the mechanical shaft
//! speed is `omega · 2 / poles`. Droop coefficients are per-unit on the
//! machine rating, with frequency and voltage in per-unit of their rated
//! values.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
use thiserror::Error;

use crate::phasor::{complex_power, line_phase_convert, Phasor};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MachineError {
    #[error("pole count must be even and at least 2, got {0}")]
    InvalidPoles(u32),
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("short-circuit current must be positive")]
    ZeroShortCircuitCurrent,
}

fn positive(name: &'static str, value: f64) -> Result<(), MachineError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(MachineError::NonPositive { name, value })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MachineParams {
    /// Apparent power rating, VA.
    pub s_rated: f64,
    /// Rated line-to-line RMS voltage.
    pub v_rated_ll: f64,
    pub f_rated: f64,
    pub poles: u32,
    /// Synchronous reactance, ohms.
    pub xs: f64,
    /// Inertia constant, seconds.
    pub h_inertia: f64,
    /// Damping, per-unit power per per-unit speed deviation.
    pub d_damping: f64,
    /// Field flux at which the AVR command is centred, webers.
    pub flux_nominal: f64,
}

impl Default for MachineParams {
    fn default() -> Self {
        Self {
            s_rated: 1.5e6,
            v_rated_ll: 11e3,
            f_rated: 50.0,
            poles: 4,
            xs: 88.6,
            h_inertia: 1.0,
            d_damping: 20.0,
            flux_nominal: 28.0,
        }
    }
}

impl MachineParams {
    pub fn validate(&self) -> Result<(), MachineError> {
        positive("s_rated", self.s_rated)?;
        positive("v_rated_ll", self.v_rated_ll)?;
        positive("f_rated", self.f_rated)?;
        positive("xs", self.xs)?;
        positive("h_inertia", self.h_inertia)?;
        if self.poles < 2 || !self.poles.is_multiple_of(2) {
            return Err(MachineError::InvalidPoles(self.poles));
        }
        if !(self.d_damping >= 0.0) {
            return Err(MachineError::NonPositive { name: "d_damping", value: self.d_damping });
        }
        if !(self.flux_nominal >= 0.0) {
            return Err(MachineError::NonPositive { name: "flux_nominal", value: self.flux_nominal });
        }
        Ok(())
    }

    /// Rated electrical angular speed, rad/s.
    pub fn omega_rated(&self) -> f64 {
        2.0 * PI * self.f_rated
    }

    /// Phase RMS voltage base.
    pub fn v_base(&self) -> f64 {
        line_phase_convert(self.v_rated_ll)
    }

    /// Swing-equation coefficient `2·H·S/ω_s`, in W·s²/rad.
    pub fn inertia_coefficient(&self) -> f64 {
        2.0 * self.h_inertia * self.s_rated / self.omega_rated()
    }

    pub fn mechanical_speed(&self, omega_e: f64) -> f64 {
        omega_e * 2.0 / self.poles as f64
    }

    /// Damping power `D·S·(ω − ω_s)/ω_s` at electrical speed `omega`.
    pub fn damping_power(&self, omega: f64) -> f64 {
        let ws = self.omega_rated();
        self.d_damping * self.s_rated * (omega - ws) / ws
    }
}

/// Controller gains and time constants. Gains act on per-unit errors and
/// produce webers (excitation) or watts per second (governor, per unit of
/// power error).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlGains {
    /// Governor integral gain, 1/s.
    pub governor_kg: f64,
    /// Terminal-voltage PI: Wb per pu voltage error, and Wb/s per pu.
    pub avr_kp: f64,
    pub avr_ki: f64,
    /// Droop PI on the drooped voltage reference `V0 − n·Q`: Wb per pu
    /// voltage error, and Wb/s per pu.
    pub droop_kp: f64,
    pub droop_ki: f64,
    /// Field lag between flux command and flux, s.
    pub t_field: f64,
    /// Time constant of the speed-reference tracker, s.
    pub speed_tau: f64,
}

impl Default for ControlGains {
    fn default() -> Self {
        Self {
            governor_kg: 10.0,
            avr_kp: 2000.0,
            avr_ki: 50000.0,
            droop_kp: 10000.0,
            droop_ki: 30000.0,
            t_field: 0.5,
            speed_tau: 1e-3,
        }
    }
}

/// Coefficients of the `f = f0 − m·P` and `V = V0 − n·Q` laws.
///
/// Per-unit form: `f/f_rated = f0/f_rated − m·(P − p_nominal)/S` and
/// `V/V_rated = V0/V_rated − n·(Q − q0)/S`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DroopParams {
    pub f0: f64,
    pub m: f64,
    pub p_nominal: f64,
    /// No-load line-to-line voltage.
    pub v0_ll: f64,
    pub n: f64,
    pub q0: f64,
}

impl Default for DroopParams {
    fn default() -> Self {
        Self { f0: 50.0, m: 0.01, p_nominal: 0.0, v0_ll: 11e3, n: 0.01, q0: 0.0 }
    }
}

impl DroopParams {
    /// Power the governor steers towards at frequency `f`.
    pub fn p_target(&self, params: &MachineParams, f: f64) -> f64 {
        self.p_nominal + params.s_rated * (self.f0 - f) / (self.m * params.f_rated)
    }

    /// Reactive power the excitation steers towards at phase voltage `v`.
    pub fn q_target(&self, params: &MachineParams, v_phase: f64) -> f64 {
        let v_pu = v_phase / params.v_base();
        let v0_pu = self.v0_ll / params.v_rated_ll;
        self.q0 + params.s_rated * (v0_pu - v_pu) / self.n
    }

    /// `f − (f0 − m·ΔP_pu·f_rated)` in Hz.
    pub fn frequency_residual(&self, params: &MachineParams, f: f64, p: f64) -> f64 {
        f - (self.f0 - self.m * (p - self.p_nominal) / params.s_rated * params.f_rated)
    }

    /// `V_pu − (V0_pu − n·ΔQ_pu)`.
    pub fn voltage_residual(&self, params: &MachineParams, v_phase: f64, q: f64) -> f64 {
        v_phase / params.v_base()
            - (self.v0_ll / params.v_rated_ll - self.n * (q - self.q0) / params.s_rated)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FrequencyMode {
    /// Fixed mechanical input; the machine follows the network frequency.
    ConstPower { p_mech: f64 },
    /// Shaft driven to a fixed electrical speed (rad/s).
    SpeedReference { omega_ref: f64 },
    DroopGovernor(DroopParams),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VoltageMode {
    FixedFlux(f64),
    /// PI regulation of the bus voltage to a line-to-line setpoint.
    PiTerminalVoltage { v_ref_ll: f64 },
    VoltDroop(DroopParams),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MachineMode {
    pub frequency: FrequencyMode,
    pub voltage: VoltageMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MachineState {
    /// Internal EMF angle in the frame rotating at rated speed, rad (unwrapped).
    pub delta: f64,
    /// Electrical speed, rad/s.
    pub omega: f64,
    pub flux: f64,
    /// Mechanical power command of the droop governor, W.
    pub governor_integ: f64,
    /// Integral part of the excitation command, Wb.
    pub avr_integ: f64,
}

impl MachineState {
    pub const LEN: usize = 5;

    pub fn from_slice(x: &[f64]) -> Self {
        Self { delta: x[0], omega: x[1], flux: x[2], governor_integ: x[3], avr_integ: x[4] }
    }

    pub fn write(&self, x: &mut [f64]) {
        x[..Self::LEN].copy_from_slice(&[
            self.delta,
            self.omega,
            self.flux,
            self.governor_integ,
            self.avr_integ,
        ]);
    }

    /// Flat-start state: rotor aligned with the reference at rated speed.
    pub fn initial(params: &MachineParams, mode: &MachineMode, delta0: f64) -> Self {
        let omega = match mode.frequency {
            FrequencyMode::SpeedReference { omega_ref } => omega_ref,
            _ => params.omega_rated(),
        };
        let flux = match mode.voltage {
            VoltageMode::FixedFlux(f) => f,
            _ => params.flux_nominal,
        };
        let governor_integ = match mode.frequency {
            FrequencyMode::ConstPower { p_mech } => p_mech,
            FrequencyMode::DroopGovernor(d) => d.p_nominal,
            FrequencyMode::SpeedReference { .. } => 0.0,
        };
        Self { delta: delta0, omega, flux, governor_integ, avr_integ: 0.0 }
    }

    pub fn frequency(&self) -> f64 {
        self.omega / (2.0 * PI)
    }
}

/// Wraps an angle to (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyncSpeed {
    pub rpm: f64,
    /// Mechanical rad/s.
    pub rad_per_s: f64,
}

/// `N_s = 120·f/P`.
pub fn sync_speed(f: f64, poles: u32) -> Result<SyncSpeed, MachineError> {
    positive("frequency", f)?;
    if poles < 2 || !poles.is_multiple_of(2) {
        return Err(MachineError::InvalidPoles(poles));
    }
    let rpm = 120.0 * f / poles as f64;
    Ok(SyncSpeed { rpm, rad_per_s: rpm * 2.0 * PI / 60.0 })
}

/// RMS phase EMF from electrical speed and flux (peak `ω·ψ` over √2).
pub fn emf_magnitude(omega_e: f64, flux: f64) -> f64 {
    omega_e * flux * FRAC_1_SQRT_2
}

/// Synchronous reactance from an open-circuit EMF and a short-circuit current
/// measured in the same convention.
pub fn xs_from_short_circuit(ef_rms: f64, isc_rms: f64) -> Result<f64, MachineError> {
    if !(isc_rms > 0.0) {
        return Err(MachineError::ZeroShortCircuitCurrent);
    }
    Ok(ef_rms / isc_rms)
}

/// Three-phase power over the reactance, `3·Vt·Ef·sin δ / Xs`.
pub fn electrical_power_delta(vt: f64, ef: f64, xs: f64, delta: f64) -> f64 {
    3.0 * vt * ef * delta.sin() / xs
}

/// `(no_load − full_load) / full_load`.
pub fn speed_droop_ratio(no_load: f64, full_load: f64) -> Result<f64, MachineError> {
    positive("full-load speed", full_load)?;
    Ok((no_load - full_load) / full_load)
}

/// Internal EMF phasor of the machine.
pub fn internal_emf(state: &MachineState) -> Phasor {
    Phasor::from_polar(emf_magnitude(state.omega, state.flux), state.delta)
}

/// Norton equivalent `(E/(jXs), 1/(jXs))` of the classical model.
pub fn machine_norton(state: &MachineState, params: &MachineParams) -> (Phasor, Complex64) {
    let y = Complex64::new(0.0, -1.0 / params.xs);
    (internal_emf(state) * y, y)
}

/// Terminal current injected into the bus at voltage `v_bus`.
pub fn terminal_current(state: &MachineState, params: &MachineParams, v_bus: Phasor) -> Phasor {
    let (inj, y) = machine_norton(state, params);
    inj - y * v_bus
}

/// Load angle between internal EMF and bus voltage, wrapped to (−π, π].
pub fn load_angle(state: &MachineState, v_bus: Phasor) -> f64 {
    wrap_angle(state.delta - v_bus.arg())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwingDerivatives {
    pub d_delta: f64,
    pub d_omega: f64,
    pub d_governor: f64,
}

/// Mechanical power currently applied to the shaft.
pub fn mechanical_power(state: &MachineState, mode: &FrequencyMode) -> f64 {
    match *mode {
        FrequencyMode::ConstPower { p_mech } => p_mech,
        FrequencyMode::DroopGovernor(_) => state.governor_integ,
        FrequencyMode::SpeedReference { .. } => f64::NAN,
    }
}

/// Rotor and governor dynamics given the electrical power `pe` delivered to
/// the network.
pub fn swing_derivatives(
    state: &MachineState,
    pe: f64,
    params: &MachineParams,
    mode: &FrequencyMode,
    gains: &ControlGains,
) -> SwingDerivatives {
    let d_delta = state.omega - params.omega_rated();
    let accel = |pm: f64| (pm - pe - params.damping_power(state.omega)) / params.inertia_coefficient();
    match *mode {
        FrequencyMode::ConstPower { p_mech } => {
            SwingDerivatives { d_delta, d_omega: accel(p_mech), d_governor: 0.0 }
        }
        FrequencyMode::SpeedReference { omega_ref } => SwingDerivatives {
            d_delta,
            d_omega: (omega_ref - state.omega) / gains.speed_tau,
            d_governor: 0.0,
        },
        FrequencyMode::DroopGovernor(droop) => SwingDerivatives {
            d_delta,
            d_omega: accel(state.governor_integ),
            d_governor: gains.governor_kg * (droop.p_target(params, state.frequency()) - pe),
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExcitationDerivatives {
    pub d_flux: f64,
    pub d_avr: f64,
}

/// Excitation dynamics: PI (or fixed) command, clamped to `[0, 2·ψ_nom]`,
/// followed by a first-order field lag. The integrator holds while the
/// command is saturated in the direction of the error.
pub fn avr_derivatives(
    state: &MachineState,
    v_bus_rms: f64,
    q_machine: f64,
    params: &MachineParams,
    mode: &VoltageMode,
    gains: &ControlGains,
) -> ExcitationDerivatives {
    let flux_max = 2.0 * params.flux_nominal;
    let (command, error, ki) = match *mode {
        VoltageMode::FixedFlux(f) => (f, 0.0, 0.0),
        VoltageMode::PiTerminalVoltage { v_ref_ll } => {
            let e = (line_phase_convert(v_ref_ll) - v_bus_rms) / params.v_base();
            (params.flux_nominal + gains.avr_kp * e + state.avr_integ, e, gains.avr_ki)
        }
        VoltageMode::VoltDroop(droop) => {
            let e = -droop.voltage_residual(params, v_bus_rms, q_machine);
            (params.flux_nominal + gains.droop_kp * e + state.avr_integ, e, gains.droop_ki)
        }
    };
    let clamped = match mode {
        VoltageMode::FixedFlux(_) => command,
        _ => command.max(0.0).min(flux_max),
    };
    let winding_up = (command > flux_max && error > 0.0) || (command < 0.0 && error < 0.0);
    ExcitationDerivatives {
        d_flux: (clamped - state.flux) / gains.t_field,
        d_avr: if winding_up { 0.0 } else { ki * error },
    }
}

/// Forward-Euler excitation update over `dt` with the bus voltage and
/// reactive output held fixed. Returns `(flux, avr_integ)`.
pub fn avr_update(
    state: &MachineState,
    v_bus_rms: f64,
    q_machine: f64,
    params: &MachineParams,
    mode: &VoltageMode,
    gains: &ControlGains,
    dt: f64,
) -> (f64, f64) {
    let d = avr_derivatives(state, v_bus_rms, q_machine, params, mode, gains);
    (state.flux + dt * d.d_flux, state.avr_integ + dt * d.d_avr)
}

/// Bolted three-phase short at the terminals, reported in both the RMS and
/// peak conventions for the current.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShortCircuitReport {
    pub ef_rms: f64,
    pub isc_rms: f64,
    pub isc_peak: f64,
    /// `Ef_rms / Isc_rms`.
    pub xs_rms: f64,
    /// `Ef_rms / Isc_peak`.
    pub xs_rms_over_peak: f64,
}

/// Simulated short-circuit test at electrical speed `omega_e` and `flux`.
/// The terminals are tied through `r_fault` ohms.
pub fn short_circuit_test(
    params: &MachineParams,
    omega_e: f64,
    flux: f64,
    r_fault: f64,
) -> ShortCircuitReport {
    let state = MachineState { omega: omega_e, flux, ..Default::default() };
    let (inj, y) = machine_norton(&state, params);
    let y_fault = Complex64::new(1.0 / r_fault, 0.0);
    let v = inj / (y + y_fault);
    let i = terminal_current(&state, params, v);
    let ef_rms = emf_magnitude(omega_e, flux);
    let isc_rms = i.norm();
    ShortCircuitReport {
        ef_rms,
        isc_rms,
        isc_peak: isc_rms * std::f64::consts::SQRT_2,
        xs_rms: ef_rms / isc_rms,
        xs_rms_over_peak: ef_rms / (isc_rms * std::f64::consts::SQRT_2),
    }
}

/// Electrical output `(P, Q)` of the machine at bus voltage `v_bus`.
pub fn electrical_output(state: &MachineState, params: &MachineParams, v_bus: Phasor) -> (f64, f64) {
    let r = complex_power(v_bus, terminal_current(state, params, v_bus));
    (r.p_active, r.q_reactive)
}
