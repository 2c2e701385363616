//! Explicit time integration with event-aligned stepping.
//!
//! Steps never straddle a scheduled event or an output instant: the step
//! that would cross one is shortened to land on it exactly, so parameter
//! discontinuities always take effect on a step boundary.

// Stage loops index several arrays at once, mirroring the tableau.
#![allow(clippy::needless_range_loop)]

use std::convert::Infallible;

use thiserror::Error;

/// Error raised by a model while evaluating derivatives or applying events.
pub type ModelError = Box<dyn std::error::Error + Send + Sync>;

/// Smallest step the adaptive controller may take before giving up.
pub const MIN_STEP: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(String),
    #[error("step size underflow at t = {t} s (dt = {dt:e} s)")]
    StepUnderflow { t: f64, dt: f64 },
    #[error("model failure at t = {t} s: {source}")]
    Model {
        t: f64,
        #[source]
        source: ModelError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    #[default]
    Rk4,
    /// Bogacki–Shampine 3(2) embedded pair with step-size control.
    Rk23,
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rk4" => Ok(Method::Rk4),
            "rk23" | "rk23-adaptive" => Ok(Method::Rk23),
            other => Err(format!("unknown integration method `{other}` (expected rk4 or rk23)")),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Rk4 => "rk4",
            Method::Rk23 => "rk23",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    /// Fixed step for RK4; initial step for RK23.
    pub dt: f64,
    pub method: Method,
    pub rel_tol: f64,
    /// Absolute tolerance, multiplied by [`OdeSystem::state_scale`] per state.
    pub abs_tol: f64,
    /// Sampling interval of the returned trajectory; `None` records every step.
    pub output_interval: Option<f64>,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            method: Method::Rk4,
            rel_tol: 1e-6,
            abs_tol: 1e-8,
            output_interval: None,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        let bad = |m: &str| Err(DynamicsError::InvalidConfig(m.to_string()));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive");
        }
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        if let Some(h) = self.output_interval {
            if !(h > 0.0 && h.is_finite()) {
                return bad("output interval must be positive");
            }
        }
        Ok(())
    }
}

/// A first-order system `dx/dt = f(t, x)` with optional discrete events.
pub trait OdeSystem {
    fn dim(&self) -> usize;

    fn derivatives(&mut self, t: f64, x: &[f64], dx: &mut [f64]) -> Result<(), ModelError>;

    /// Called once per scheduled event, in schedule order, when integration
    /// reaches the event time.
    fn apply_event(&mut self, _index: usize, _t: f64, _x: &mut [f64]) -> Result<(), ModelError> {
        Ok(())
    }

    /// Typical magnitude of state `i`, used to scale the absolute tolerance.
    fn state_scale(&self, _i: usize) -> f64 {
        1.0
    }
}

/// Sampled solution: `states[k]` is the state at `times[k]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn last_state(&self) -> Option<&[f64]> {
        self.states.last().map(Vec::as_slice)
    }
}

/// Adapter turning a plain closure into an [`OdeSystem`] without events.
pub struct FnSystem<F> {
    dim: usize,
    f: F,
}

impl<F> FnSystem<F>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> OdeSystem for FnSystem<F>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn derivatives(&mut self, t: f64, x: &[f64], dx: &mut [f64]) -> Result<(), ModelError> {
        (self.f)(t, x, dx);
        Ok(())
    }
}

/// One classical fourth-order Runge–Kutta step.
pub fn rk4_step<F>(mut deriv: F, x: &[f64], t: f64, dt: f64) -> Vec<f64>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let mut ws = Workspace::new(x.len());
    let mut out = x.to_vec();
    let r: Result<(), Infallible> = rk4_into(
        &mut |t, x, dx| {
            deriv(t, x, dx);
            Ok(())
        },
        &mut ws,
        &mut out,
        t,
        dt,
    );
    match r {
        Ok(()) => out,
        Err(never) => match never {},
    }
}

struct Workspace {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
    next: Vec<f64>,
    fsal_valid: bool,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Self {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
            next: vec![0.0; n],
            fsal_valid: false,
        }
    }
}

fn rk4_into<E, F>(f: &mut F, ws: &mut Workspace, x: &mut [f64], t: f64, h: f64) -> Result<(), E>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<(), E>,
{
    let n = x.len();
    f(t, x, &mut ws.k1)?;
    for i in 0..n {
        ws.tmp[i] = x[i] + 0.5 * h * ws.k1[i];
    }
    f(t + 0.5 * h, &ws.tmp, &mut ws.k2)?;
    for i in 0..n {
        ws.tmp[i] = x[i] + 0.5 * h * ws.k2[i];
    }
    f(t + 0.5 * h, &ws.tmp, &mut ws.k3)?;
    for i in 0..n {
        ws.tmp[i] = x[i] + h * ws.k3[i];
    }
    f(t + h, &ws.tmp, &mut ws.k4)?;
    for i in 0..n {
        x[i] += h / 6.0 * (ws.k1[i] + 2.0 * ws.k2[i] + 2.0 * ws.k3[i] + ws.k4[i]);
    }
    Ok(())
}

/// Attempts one Bogacki–Shampine step. Writes the candidate into `ws.next`
/// and returns the scaled RMS error estimate.
fn rk23_attempt<S: OdeSystem>(
    sys: &mut S,
    cfg: &IntegratorConfig,
    ws: &mut Workspace,
    x: &[f64],
    t: f64,
    h: f64,
) -> Result<f64, ModelError> {
    let n = x.len();
    if !ws.fsal_valid {
        sys.derivatives(t, x, &mut ws.k1)?;
        ws.fsal_valid = true;
    }
    for i in 0..n {
        ws.tmp[i] = x[i] + 0.5 * h * ws.k1[i];
    }
    sys.derivatives(t + 0.5 * h, &ws.tmp, &mut ws.k2)?;
    for i in 0..n {
        ws.tmp[i] = x[i] + 0.75 * h * ws.k2[i];
    }
    sys.derivatives(t + 0.75 * h, &ws.tmp, &mut ws.k3)?;
    for i in 0..n {
        ws.next[i] = x[i] + h * (2.0 / 9.0 * ws.k1[i] + ws.k2[i] / 3.0 + 4.0 / 9.0 * ws.k3[i]);
    }
    sys.derivatives(t + h, &ws.next, &mut ws.k4)?;
    let mut acc = 0.0;
    for i in 0..n {
        let err = h
            * (-5.0 / 72.0 * ws.k1[i] + ws.k2[i] / 12.0 + ws.k3[i] / 9.0 - 0.125 * ws.k4[i]);
        let sc = cfg.abs_tol * sys.state_scale(i) + cfg.rel_tol * x[i].abs().max(ws.next[i].abs());
        acc += (err / sc).powi(2);
    }
    Ok(if n == 0 { 0.0 } else { (acc / n as f64).sqrt() })
}

/// Integrates `sys` from `t0` to `t1`, recording the state at `t0`, at every
/// output instant, at every event time (after the event is applied) and at
/// `t1`.
pub fn integrate<S: OdeSystem>(
    sys: &mut S,
    x0: &[f64],
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
    events: &[f64],
) -> Result<Trajectory, DynamicsError> {
    let mut traj = Trajectory::default();
    integrate_observed(sys, x0, t0, t1, cfg, events, |_, t, x| {
        traj.times.push(t);
        traj.states.push(x.to_vec());
        Ok(())
    })?;
    Ok(traj)
}

/// Like [`integrate`] but hands each recorded point to `observer` instead of
/// collecting states. The observer receives the system with all events up
/// to and including `t` applied.
pub fn integrate_observed<S, O>(
    sys: &mut S,
    x0: &[f64],
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
    events: &[f64],
    mut observer: O,
) -> Result<Vec<f64>, DynamicsError>
where
    S: OdeSystem,
    O: FnMut(&mut S, f64, &[f64]) -> Result<(), ModelError>,
{
    cfg.validate()?;
    if !(t1 > t0) {
        return Err(DynamicsError::InvalidConfig(format!("t1 ({t1}) must exceed t0 ({t0})")));
    }
    if x0.len() != sys.dim() {
        return Err(DynamicsError::InvalidConfig(format!(
            "initial state has {} entries, system expects {}",
            x0.len(),
            sys.dim()
        )));
    }
    if events.windows(2).any(|w| w[1] < w[0]) {
        return Err(DynamicsError::InvalidConfig("event times must be sorted".into()));
    }
    if let Some(&e) = events.iter().find(|&&e| e < t0 || e > t1) {
        return Err(DynamicsError::InvalidConfig(format!("event time {e} outside [{t0}, {t1}]")));
    }

    let model_err = |t: f64| move |source: ModelError| DynamicsError::Model { t, source };
    let mut x = x0.to_vec();
    let mut ws = Workspace::new(x.len());
    let mut next_event = 0usize;
    let mut out_index = 1u64;
    let next_output = |k: u64| cfg.output_interval.map(|h| t0 + k as f64 * h);

    let mut t = t0;
    while next_event < events.len() && events[next_event] <= t0 {
        sys.apply_event(next_event, t0, &mut x).map_err(model_err(t0))?;
        next_event += 1;
    }
    observer(sys, t0, &x).map_err(model_err(t0))?;

    let mut h_adaptive = cfg.dt;
    while t < t1 {
        while let Some(o) = next_output(out_index) {
            if o <= t {
                out_index += 1;
            } else {
                break;
            }
        }
        let mut boundary = t1;
        if let Some(&e) = events.get(next_event) {
            boundary = boundary.min(e);
        }
        if let Some(o) = next_output(out_index) {
            boundary = boundary.min(o);
        }

        let h_nominal = match cfg.method {
            Method::Rk4 => cfg.dt,
            Method::Rk23 => h_adaptive,
        };
        // snap to the boundary when the nominal step would land within a hair of it
        let lands = t + h_nominal >= boundary - 1e-9 * h_nominal;
        let h = if lands { boundary - t } else { h_nominal };

        match cfg.method {
            Method::Rk4 => {
                rk4_into(
                    &mut |tt, xx: &[f64], dx: &mut [f64]| sys.derivatives(tt, xx, dx),
                    &mut ws,
                    &mut x,
                    t,
                    h,
                )
                .map_err(model_err(t))?;
            }
            Method::Rk23 => {
                let err = rk23_attempt(sys, cfg, &mut ws, &x, t, h).map_err(model_err(t))?;
                let factor = if err == 0.0 {
                    5.0
                } else if err.is_finite() {
                    (0.9 * err.powf(-1.0 / 3.0)).clamp(0.2, 5.0)
                } else {
                    0.2
                };
                if !err.is_finite() || err > 1.0 {
                    h_adaptive = h * factor;
                    if h_adaptive < MIN_STEP {
                        return Err(DynamicsError::StepUnderflow { t, dt: h_adaptive });
                    }
                    continue;
                }
                std::mem::swap(&mut x, &mut ws.next);
                std::mem::swap(&mut ws.k1, &mut ws.k4);
                // a shortened landing step does not shrink the proposal for the next one
                h_adaptive = if lands { h_nominal.max(h * factor) } else { h * factor };
            }
        }
        t = if lands { boundary } else { t + h };

        let mut record = t >= t1;
        while next_event < events.len() && events[next_event] <= t {
            sys.apply_event(next_event, t, &mut x).map_err(model_err(t))?;
            next_event += 1;
            ws.fsal_valid = false;
            record = true;
        }
        match next_output(out_index) {
            Some(o) if o <= t => {
                out_index += 1;
                record = true;
            }
            None => record = true,
            _ => {}
        }
        if record {
            observer(sys, t, &x).map_err(model_err(t))?;
        }
    }
    Ok(x)
}
