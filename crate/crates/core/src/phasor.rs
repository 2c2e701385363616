//! Phasor arithmetic, reference-frame transforms and three-phase power measurement.
//!
//! Every stored phasor is a per-phase RMS quantity at system frequency. The
//! instantaneous (peak) convention only appears at the waveform boundary
//! ([`ThreePhaseSample::from_phasor`] and the αβ power routines).

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

use num_complex::Complex64;

/// Complex per-phase RMS voltage or current.
pub type Phasor = Complex64;

const SQRT_3: f64 = 1.732_050_807_568_877_2;
const TWO_PI_OVER_3: f64 = 2.0 * PI / 3.0;

/// Instantaneous values of the three line quantities at one time instant.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ThreePhaseSample {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl ThreePhaseSample {
    pub fn new(a: f64, b: f64, c: f64) -> Self {
        Self { a, b, c }
    }

    /// Samples the balanced positive-sequence waveform described by an RMS
    /// phasor at electrical angle `theta = ωt`.
    pub fn from_phasor(p: Phasor, theta: f64) -> Self {
        let peak = p.norm() * SQRT_2;
        let phi = p.arg();
        Self {
            a: peak * (theta + phi).cos(),
            b: peak * (theta + phi - TWO_PI_OVER_3).cos(),
            c: peak * (theta + phi + TWO_PI_OVER_3).cos(),
        }
    }

    pub fn zero_sequence(&self) -> f64 {
        (self.a + self.b + self.c) / 3.0
    }
}

/// Result of a three-phase power measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerReading {
    /// Three-phase active power in watts.
    pub p_active: f64,
    /// Three-phase reactive power in vars.
    pub q_reactive: f64,
    pub v_rms_phase: f64,
    pub i_rms_phase: f64,
    /// `|cos φ|`; 1 when no apparent power flows.
    pub power_factor: f64,
}

impl PowerReading {
    pub fn apparent(&self) -> f64 {
        self.p_active.hypot(self.q_reactive)
    }
}

/// Amplitude-invariant Clarke transform.
pub fn clarke(abc: ThreePhaseSample) -> (f64, f64) {
    let alpha = (2.0 * abc.a - abc.b - abc.c) / 3.0;
    let beta = (abc.b - abc.c) / SQRT_3;
    (alpha, beta)
}

/// Inverse of [`clarke`] for sets without a zero-sequence component.
pub fn inverse_clarke(alpha: f64, beta: f64) -> ThreePhaseSample {
    ThreePhaseSample {
        a: alpha,
        b: -0.5 * alpha + 0.5 * SQRT_3 * beta,
        c: -0.5 * alpha - 0.5 * SQRT_3 * beta,
    }
}

/// Rotates the stationary αβ frame into a dq frame at angle `theta`.
pub fn park(alpha: f64, beta: f64, theta: f64) -> (f64, f64) {
    let (s, c) = theta.sin_cos();
    (alpha * c + beta * s, -alpha * s + beta * c)
}

pub fn inverse_park(d: f64, q: f64, theta: f64) -> (f64, f64) {
    let (s, c) = theta.sin_cos();
    (d * c - q * s, d * s + q * c)
}

/// Three-phase power from per-phase RMS phasors, `S = 3·V·conj(I)`.
///
/// Positive P/Q means power flowing in the direction the current is measured.
pub fn complex_power(v: Phasor, i: Phasor) -> PowerReading {
    let p = 3.0 * (v.re * i.re + v.im * i.im);
    let q = 3.0 * (v.im * i.re - v.re * i.im);
    let s = p.hypot(q);
    PowerReading {
        p_active: p,
        q_reactive: q,
        v_rms_phase: v.norm(),
        i_rms_phase: i.norm(),
        power_factor: if s > 0.0 { p.abs() / s } else { 1.0 },
    }
}

/// Instantaneous three-phase active and reactive power from abc samples,
/// evaluated in the αβ frame (amplitude-invariant, hence the 3/2 factor).
pub fn instantaneous_power(v: ThreePhaseSample, i: ThreePhaseSample) -> (f64, f64) {
    let (va, vb) = clarke(v);
    let (ia, ib) = clarke(i);
    (1.5 * (va * ia + vb * ib), 1.5 * (vb * ia - va * ib))
}

/// Line-to-line RMS to phase RMS.
pub fn line_phase_convert(v_ll_rms: f64) -> f64 {
    v_ll_rms / SQRT_3
}

pub fn phase_line_convert(v_phase_rms: f64) -> f64 {
    v_phase_rms * SQRT_3
}

pub fn peak_to_rms(peak: f64) -> f64 {
    peak * FRAC_1_SQRT_2
}

pub fn rms_to_peak(rms: f64) -> f64 {
    rms * SQRT_2
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn clarke_examples() {
        assert_eq!(clarke(ThreePhaseSample::new(0.0, 0.0, 0.0)), (0.0, 0.0));

        let bal = ThreePhaseSample::new(
            1.0,
            (-TWO_PI_OVER_3).cos(),
            TWO_PI_OVER_3.cos(),
        );
        let (a, b) = clarke(bal);
        assert_relative_eq!(a, 1.0, epsilon = 1e-15);
        assert!(b.abs() < 1e-15);

        let (a, b) = clarke(ThreePhaseSample::new(1.0, 0.0, 0.0));
        assert_relative_eq!(a, 2.0 / 3.0, epsilon = 1e-15);
        assert_eq!(b, 0.0);
    }

    #[test]
    fn park_examples() {
        assert_eq!(park(1.0, 0.0, 0.0), (1.0, 0.0));
        let (d, q) = park(1.0, 0.0, PI / 2.0);
        assert!(d.abs() < 1e-15);
        assert_relative_eq!(q, -1.0, epsilon = 1e-15);
    }

    #[test]
    fn complex_power_examples() {
        let r = complex_power(Phasor::new(6353.0, 0.0), Phasor::new(52.5, 0.0));
        assert_relative_eq!(r.p_active, 1.0006e6, max_relative = 1e-4);
        assert_eq!(r.q_reactive, 0.0);
        assert_eq!(r.power_factor, 1.0);

        let r = complex_power(Phasor::new(6350.0, 0.0), Phasor::new(0.0, 0.0));
        assert_eq!((r.p_active, r.q_reactive), (0.0, 0.0));

        // lagging current: the measured branch absorbs Q
        let r = complex_power(Phasor::new(100.0, 0.0), Phasor::new(0.0, -10.0));
        assert_eq!(r.p_active, 0.0);
        assert_relative_eq!(r.q_reactive, 3000.0, epsilon = 1e-12);
        assert_eq!(r.power_factor, 0.0);
    }

    #[test]
    fn line_phase_examples() {
        assert_relative_eq!(line_phase_convert(11_000.0), 6350.853, epsilon = 1e-3);
        // measured 6353 V phase agrees within 0.05 %
        assert!((line_phase_convert(11_000.0) - 6353.0).abs() / 6353.0 < 5e-4);
        assert_eq!(line_phase_convert(0.0), 0.0);
        assert_relative_eq!(line_phase_convert(3f64.sqrt()), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn balanced_set_sums_to_zero() {
        let s = ThreePhaseSample::from_phasor(Phasor::from_polar(6350.0, 0.3), 1.234);
        assert!(s.zero_sequence().abs() < 1e-9 * 6350.0);
    }

    #[test]
    fn resistive_reading_satisfies_pf_identity() {
        let v = Phasor::from_polar(6350.0, 0.2);
        let i = Phasor::from_polar(40.0, 0.2 - 0.5);
        let r = complex_power(v, i);
        let rebuilt = 3.0 * r.v_rms_phase * r.i_rms_phase * r.power_factor;
        assert_relative_eq!(r.p_active, rebuilt, max_relative = 1e-9);
    }

    proptest! {
        #[test]
        fn park_round_trip(alpha in -1e4f64..1e4, beta in -1e4f64..1e4, theta in -10.0f64..10.0) {
            let (d, q) = park(alpha, beta, theta);
            // independent inverse: rotate back by -theta with the forward map
            let (a2, b2) = {
                let (s, c) = (-theta).sin_cos();
                (d * c + q * s, -d * s + q * c)
            };
            let scale = 1.0 + alpha.abs() + beta.abs();
            prop_assert!((a2 - alpha).abs() < 1e-12 * scale);
            prop_assert!((b2 - beta).abs() < 1e-12 * scale);
            let (a3, b3) = inverse_park(d, q, theta);
            prop_assert!((a3 - alpha).abs() < 1e-12 * scale);
            prop_assert!((b3 - beta).abs() < 1e-12 * scale);
        }

        #[test]
        fn clarke_round_trip(alpha in -1e4f64..1e4, beta in -1e4f64..1e4) {
            let abc = inverse_clarke(alpha, beta);
            let (a2, b2) = clarke(abc);
            let scale = 1.0 + alpha.abs() + beta.abs();
            prop_assert!((a2 - alpha).abs() < 1e-12 * scale);
            prop_assert!((b2 - beta).abs() < 1e-12 * scale);
        }

        #[test]
        fn apparent_power_identity(
            vm in 1.0f64..1e4, va in -3.2f64..3.2, im in 0.0f64..1e3, ia in -3.2f64..3.2
        ) {
            let r = complex_power(Phasor::from_polar(vm, va), Phasor::from_polar(im, ia));
            let s = 3.0 * vm * im;
            let lhs = r.p_active.powi(2) + r.q_reactive.powi(2);
            prop_assert!((lhs - s * s).abs() <= 1e-9 * (s * s).max(1e-300));
        }

        #[test]
        fn dq_constant_for_balanced_sinusoid(
            mag in 1.0f64..1e4, phase in -3.0f64..3.0, t in 0.0f64..1.0
        ) {
            let omega = 2.0 * PI * 50.0;
            let p = Phasor::from_polar(mag, phase);
            let (a0, b0) = clarke(ThreePhaseSample::from_phasor(p, 0.0));
            let (d0, q0) = park(a0, b0, 0.0);
            let theta = omega * t;
            let (a, b) = clarke(ThreePhaseSample::from_phasor(p, theta));
            let (d, q) = park(a, b, theta);
            let peak = mag * SQRT_2;
            prop_assert!((d - d0).abs() < 1e-9 * peak);
            prop_assert!((q - q0).abs() < 1e-9 * peak);
        }

        #[test]
        fn waveform_power_matches_phasor_power(
            vm in 1.0f64..1e4, va in -3.0f64..3.0, im in 0.0f64..1e3, ia in -3.0f64..3.0,
            theta in 0.0f64..6.3
        ) {
            let v = Phasor::from_polar(vm, va);
            let i = Phasor::from_polar(im, ia);
            let r = complex_power(v, i);
            let (p, q) = instantaneous_power(
                ThreePhaseSample::from_phasor(v, theta),
                ThreePhaseSample::from_phasor(i, theta),
            );
            let s = 3.0 * vm * im + 1e-9;
            prop_assert!((p - r.p_active).abs() < 1e-9 * s);
            prop_assert!((q - r.q_reactive).abs() < 1e-9 * s);
        }
    }
}
