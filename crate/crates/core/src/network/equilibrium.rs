//! Algebraic steady state of a single-bus island or grid-tied system.
//!
//! Unknowns are the common frequency, the bus voltage magnitude (the bus
//! voltage is the angle reference) and each source's P and Q, plus the
//! internal angle of every source with a fixed EMF. The equations are the
//! per-source control laws and the active/reactive balance at the bus. They
//! are solved by damped Newton iteration on per-unit scaled unknowns.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use super::{load_admittance, RLLoadParams, WindInjection};
use crate::phasor::line_phase_convert;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EquilibriumError {
    #[error("no sources to balance the bus")]
    NoSources,
    #[error("source `{id}`: {message}")]
    InvalidSource { id: String, message: String },
    #[error("load `{0}` has zero impedance")]
    ZeroImpedanceLoad(String),
    #[error("jacobian is singular at iteration {0}; the operating point is not determined by the control laws")]
    Singular(usize),
    #[error("no convergence after {iterations} iterations (max residual {max_residual:e})")]
    NonConvergence { iterations: usize, max_residual: f64, residuals: Vec<f64> },
}

/// Frequency-side behaviour of a source at steady state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActiveControl {
    /// `f/f_r = f0/f_r − m·(P − p_nominal)/S`.
    Droop { f0: f64, m: f64, p_nominal: f64 },
    /// Holds the system frequency; P is whatever balances the bus.
    Isochronous { f_ref: f64 },
    /// Constant shaft power less the damping power at off-nominal speed.
    Fixed { p_mech: f64, damping: f64 },
}

/// How the internal EMF of a fixed-excitation source scales with frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EmfLaw {
    /// Machine flux in webers: `E = 2π·f·ψ/√2`.
    Flux(f64),
    /// Constant RMS phase EMF.
    Constant(f64),
}

impl EmfLaw {
    pub fn emf(&self, f: f64) -> f64 {
        match *self {
            EmfLaw::Flux(psi) => 2.0 * PI * f * psi * FRAC_1_SQRT_2,
            EmfLaw::Constant(e) => e,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReactiveControl {
    /// `V/V_r = V0/V_r − n·(Q − q0)/S`.
    Droop { v0_ll: f64, n: f64, q0: f64 },
    /// Bus voltage held at a line-to-line setpoint.
    Regulated { v_ref_ll: f64 },
    /// EMF fixed by excitation; P and Q follow from the power-angle relations.
    FixedEmf(EmfLaw),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceSpec {
    pub id: String,
    pub s_rated: f64,
    pub f_rated: f64,
    pub v_rated_ll: f64,
    /// Internal impedance behind the EMF (`j·Xs` for a machine).
    pub impedance: Complex64,
    pub active: ActiveControl,
    pub reactive: ReactiveControl,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumProblem {
    pub f_rated: f64,
    pub v_rated_ll: f64,
    pub sources: Vec<SourceSpec>,
    pub loads: Vec<(String, RLLoadParams)>,
    pub winds: Vec<(String, WindInjection)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub damping: f64,
    /// Residual below which full Newton steps are taken.
    pub full_step_below: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { damping: 0.5, full_step_below: 1e-6, tol: 1e-8, max_iter: 200 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceResult {
    pub id: String,
    pub p: f64,
    pub q: f64,
    /// RMS phase EMF behind the internal impedance.
    pub emf: f64,
    /// Angle of the EMF relative to the bus voltage, rad.
    pub delta: f64,
    pub i_rms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowResult {
    pub id: String,
    pub p: f64,
    pub q: f64,
    pub i_rms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumSolution {
    pub f_hz: f64,
    /// Bus phase RMS voltage.
    pub v_phase: f64,
    pub sources: Vec<SourceResult>,
    pub loads: Vec<FlowResult>,
    pub winds: Vec<FlowResult>,
    pub iterations: usize,
    pub max_residual: f64,
}

impl EquilibriumSolution {
    pub fn v_ll(&self) -> f64 {
        self.v_phase * 3f64.sqrt()
    }

    pub fn source(&self, id: &str) -> Option<&SourceResult> {
        self.sources.iter().find(|s| s.id == id)
    }
}

struct Layout {
    /// Offset of each source's (P, Q[, δ]) block.
    offsets: Vec<usize>,
    len: usize,
}

struct System<'a> {
    p: &'a EquilibriumProblem,
    layout: Layout,
    s_base: f64,
    v_base: f64,
    /// Total load admittance at the bus.
    y_load: Complex64,
}

impl<'a> System<'a> {
    fn new(p: &'a EquilibriumProblem) -> Result<Self, EquilibriumError> {
        if p.sources.is_empty() {
            return Err(EquilibriumError::NoSources);
        }
        let mut offsets = Vec::with_capacity(p.sources.len());
        let mut len = 2;
        for s in &p.sources {
            let invalid = |m: &str| EquilibriumError::InvalidSource { id: s.id.clone(), message: m.into() };
            if !(s.s_rated > 0.0 && s.f_rated > 0.0 && s.v_rated_ll > 0.0) {
                return Err(invalid("ratings must be positive"));
            }
            match s.active {
                ActiveControl::Droop { m, .. } if !(m > 0.0) => return Err(invalid("frequency droop gain must be positive")),
                _ => {}
            }
            match s.reactive {
                ReactiveControl::Droop { n, .. } if !(n > 0.0) => return Err(invalid("voltage droop gain must be positive")),
                ReactiveControl::FixedEmf(_) if s.impedance.norm() == 0.0 => {
                    return Err(invalid("fixed-EMF source needs a non-zero internal impedance"))
                }
                _ => {}
            }
            offsets.push(len);
            len += if matches!(s.reactive, ReactiveControl::FixedEmf(_)) { 3 } else { 2 };
        }
        let mut y_load = Complex64::new(0.0, 0.0);
        for (id, l) in &p.loads {
            y_load += load_admittance(l, p.f_rated)
                .map_err(|_| EquilibriumError::ZeroImpedanceLoad(id.clone()))?;
        }
        let s_base = p.sources.iter().map(|s| s.s_rated).fold(0.0, f64::max);
        Ok(Self {
            p,
            layout: Layout { offsets, len },
            s_base,
            v_base: line_phase_convert(p.v_rated_ll),
            y_load,
        })
    }

    fn wind_pq(&self, v: f64) -> (f64, f64) {
        self.p.winds.iter().fold((0.0, 0.0), |(p, q), (_, w)| {
            (p + 3.0 * v * w.id_rms, q + 3.0 * v * w.sense.sign() * w.iq_rms)
        })
    }

    /// Complex power delivered by a fixed-EMF source at bus voltage `v`.
    fn emf_power(s: &SourceSpec, law: &EmfLaw, f: f64, v: f64, delta: f64) -> Complex64 {
        let e = Complex64::from_polar(law.emf(f), delta);
        let i = (e - v) / s.impedance;
        3.0 * v * i.conj()
    }

    fn residuals(&self, x: &[f64], r: &mut [f64]) {
        let p = self.p;
        let f = x[0] * p.f_rated;
        let v = x[1] * self.v_base;
        let mut k = 0;
        let (mut p_sum, mut q_sum) = (0.0, 0.0);
        for (s, &o) in p.sources.iter().zip(&self.layout.offsets) {
            let (ps, qs) = (x[o] * self.s_base, x[o + 1] * self.s_base);
            p_sum += ps;
            q_sum += qs;
            r[k] = match s.active {
                ActiveControl::Droop { f0, m, p_nominal } => {
                    f / s.f_rated - (f0 / s.f_rated - m * (ps - p_nominal) / s.s_rated)
                }
                ActiveControl::Isochronous { f_ref } => (f - f_ref) / s.f_rated,
                ActiveControl::Fixed { p_mech, damping } => {
                    let pd = damping * s.s_rated * (f - s.f_rated) / s.f_rated;
                    (ps - (p_mech - pd)) / self.s_base
                }
            };
            k += 1;
            match s.reactive {
                ReactiveControl::Droop { v0_ll, n, q0 } => {
                    let vb = line_phase_convert(s.v_rated_ll);
                    r[k] = v / vb - (v0_ll / s.v_rated_ll - n * (qs - q0) / s.s_rated);
                    k += 1;
                }
                ReactiveControl::Regulated { v_ref_ll } => {
                    r[k] = (v - line_phase_convert(v_ref_ll)) / self.v_base;
                    k += 1;
                }
                ReactiveControl::FixedEmf(law) => {
                    let se = Self::emf_power(s, &law, f, v, x[o + 2]);
                    r[k] = (ps - se.re) / self.s_base;
                    r[k + 1] = (qs - se.im) / self.s_base;
                    k += 2;
                }
            }
        }
        let (pw, qw) = self.wind_pq(v);
        let s_load = 3.0 * v * v * self.y_load.conj();
        r[k] = (p_sum + pw - s_load.re) / self.s_base;
        r[k + 1] = (q_sum + qw - s_load.im) / self.s_base;
    }

    fn initial_guess(&self) -> Vec<f64> {
        let p = self.p;
        let mut x = vec![0.0; self.layout.len];
        x[0] = p
            .sources
            .iter()
            .find_map(|s| match s.active {
                ActiveControl::Isochronous { f_ref } => Some(f_ref / p.f_rated),
                _ => None,
            })
            .unwrap_or(1.0);
        x[1] = p
            .sources
            .iter()
            .find_map(|s| match s.reactive {
                ReactiveControl::Regulated { v_ref_ll } => Some(v_ref_ll / p.v_rated_ll),
                _ => None,
            })
            .unwrap_or(1.0);
        let s_load = 3.0 * self.v_base * self.v_base * self.y_load.conj();
        let n = p.sources.len() as f64;
        for (s, &o) in p.sources.iter().zip(&self.layout.offsets) {
            x[o] = match s.active {
                ActiveControl::Fixed { p_mech, .. } => p_mech,
                _ => s_load.re / n,
            } / self.s_base;
            x[o + 1] = s_load.im / n / self.s_base;
            if matches!(s.reactive, ReactiveControl::FixedEmf(_)) {
                x[o + 2] = 0.1;
            }
        }
        x
    }

    fn jacobian(&self, x: &[f64], r0: &[f64]) -> DMatrix<f64> {
        let n = x.len();
        let mut j = DMatrix::zeros(n, n);
        let mut xp = x.to_vec();
        let mut rp = vec![0.0; n];
        let mut rm = vec![0.0; n];
        for c in 0..n {
            let h = 1e-7 * x[c].abs().max(1.0);
            xp[c] = x[c] + h;
            self.residuals(&xp, &mut rp);
            xp[c] = x[c] - h;
            self.residuals(&xp, &mut rm);
            xp[c] = x[c];
            for row in 0..n {
                j[(row, c)] = (rp[row] - rm[row]) / (2.0 * h);
            }
        }
        let _ = r0;
        j
    }

    fn solution(&self, x: &[f64], iterations: usize, max_residual: f64) -> EquilibriumSolution {
        let p = self.p;
        let f = x[0] * p.f_rated;
        let v = x[1] * self.v_base;
        let sources = p
            .sources
            .iter()
            .zip(&self.layout.offsets)
            .map(|(s, &o)| {
                let (ps, qs) = (x[o] * self.s_base, x[o + 1] * self.s_base);
                let i = Complex64::new(ps, qs).conj() / (3.0 * v);
                let (emf, delta) = match s.reactive {
                    ReactiveControl::FixedEmf(law) => (law.emf(f), x[o + 2]),
                    _ => {
                        let e = v + s.impedance * i;
                        (e.norm(), e.arg())
                    }
                };
                SourceResult { id: s.id.clone(), p: ps, q: qs, emf, delta, i_rms: i.norm() }
            })
            .collect();
        let loads = p
            .loads
            .iter()
            .map(|(id, l)| {
                let y = load_admittance(l, p.f_rated).unwrap_or_default();
                let s = 3.0 * v * v * y.conj();
                FlowResult { id: id.clone(), p: s.re, q: s.im, i_rms: (y * v).norm() }
            })
            .collect();
        let winds = p
            .winds
            .iter()
            .map(|(id, w)| FlowResult {
                id: id.clone(),
                p: 3.0 * v * w.id_rms,
                q: 3.0 * v * w.sense.sign() * w.iq_rms,
                i_rms: w.id_rms.hypot(w.iq_rms),
            })
            .collect();
        EquilibriumSolution { f_hz: f, v_phase: v, sources, loads, winds, iterations, max_residual }
    }
}

fn max_abs(r: &[f64]) -> f64 {
    r.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Solves the steady state of `problem`. Converged when every scaled
/// residual is below `opts.tol`; one further full Newton step then polishes
/// the result.
pub fn steady_state_droop_solve(
    problem: &EquilibriumProblem,
    opts: &NewtonOptions,
) -> Result<EquilibriumSolution, EquilibriumError> {
    let sys = System::new(problem)?;
    let n = sys.layout.len;
    let mut x = sys.initial_guess();
    let mut r = vec![0.0; n];
    sys.residuals(&x, &mut r);
    let mut polished = false;
    for iter in 0..opts.max_iter {
        let norm = max_abs(&r);
        if !norm.is_finite() {
            break;
        }
        if norm < opts.tol && polished {
            return Ok(sys.solution(&x, iter, norm));
        }
        let j = sys.jacobian(&x, &r);
        let rhs = DVector::from_iterator(n, r.iter().map(|v| -v));
        let step = j.lu().solve(&rhs).ok_or(EquilibriumError::Singular(iter))?;
        if step.iter().any(|s| !s.is_finite()) {
            return Err(EquilibriumError::Singular(iter));
        }
        let lambda = if norm > opts.full_step_below { opts.damping } else { 1.0 };
        for (xi, si) in x.iter_mut().zip(step.iter()) {
            *xi += lambda * si;
        }
        if norm < opts.tol {
            polished = true;
        }
        sys.residuals(&x, &mut r);
    }
    let max_residual = max_abs(&r);
    if max_residual < opts.tol {
        return Ok(sys.solution(&x, opts.max_iter, max_residual));
    }
    Err(EquilibriumError::NonConvergence { iterations: opts.max_iter, max_residual, residuals: r })
}
