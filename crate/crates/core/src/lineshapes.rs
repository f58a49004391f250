//! Lock-in lineshapes and finite-pulse Fourier coefficients.
//!
//! All lineshapes have removable singularities at `δτ = 0`. Inside
//! `|ωs δτ| < SINGULAR_GUARD` the closed forms are replaced by their Taylor
//! expansions.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SINGULAR_GUARD: f64 = 1e-8;

/// Default truncation for the `a_s`, `b_s` sums.
pub const DEFAULT_K_MAX: usize = 200;

/// `sin²(L ωs δτ / 2) / sin(ωs δτ / 2)`; odd in `δτ`, zero at resonance.
pub fn cp_lineshape(delta_tau: f64, omega_s: f64, pulses: u32) -> f64 {
    let y = omega_s * delta_tau;
    let l = f64::from(pulses);
    let x = 0.5 * y;
    if y.abs() < SINGULAR_GUARD {
        let l2 = l * l;
        return l2 * x + (l2 / 6.0 - l2 * l2 / 3.0) * x.powi(3);
    }
    (l * x).sin().powi(2) / x.sin()
}

/// `sin(L ωs δτ) / (ωs δτ)`; even in `δτ`, equal to `L` at resonance.
pub fn pdd_lineshape(delta_tau: f64, omega_s: f64, pulses: u32) -> f64 {
    let y = omega_s * delta_tau;
    let l = f64::from(pulses);
    if y.abs() < SINGULAR_GUARD {
        let ly2 = (l * y).powi(2);
        return l * (1.0 - ly2 / 6.0 + ly2 * ly2 / 120.0);
    }
    (l * y).sin() / y
}

/// `sin²(L ωs δτ / 2) / (L ωs δτ / 2)`; odd, zero at resonance.
pub fn sinc2_lineshape(delta_tau: f64, omega_s: f64, pulses: u32) -> f64 {
    let u = 0.5 * f64::from(pulses) * omega_s * delta_tau;
    if (omega_s * delta_tau).abs() < SINGULAR_GUARD {
        return u - u.powi(3) / 3.0 + 2.0 * u.powi(5) / 45.0;
    }
    u.sin().powi(2) / u
}

/// `sin(L ωs δτ) / (L ωs δτ)`; even, one at resonance.
pub fn sinc_lineshape(delta_tau: f64, omega_s: f64, pulses: u32) -> f64 {
    let u = f64::from(pulses) * omega_s * delta_tau;
    if (omega_s * delta_tau).abs() < SINGULAR_GUARD {
        let u2 = u * u;
        return 1.0 - u2 / 6.0 + u2 * u2 / 120.0;
    }
    u.sin() / u
}

/// Fourier coefficients of `cos α(t)` and `sin α(t)` for a CP train of
/// finite-length π pulses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierCoefficients {
    /// `a_k` for `k = 1..=k_max` (index `k - 1`).
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// `Σ a_k²` over the truncated series.
    pub a_s: f64,
    pub b_s: f64,
    /// Closed-form first harmonics.
    pub a_1: f64,
    pub b_1: f64,
}

impl FourierCoefficients {
    pub fn a_k(&self, k: usize) -> f64 {
        self.a[k - 1]
    }

    pub fn b_k(&self, k: usize) -> f64 {
        self.b[k - 1]
    }

    pub fn k_max(&self) -> usize {
        self.a.len()
    }
}

/// Single coefficient
/// `a_k = 2[1-(-1)^k]/(kπ) · [sin(kπ/2 - kπr/2) + cos((k+1)π/2 + kπr/2) / (1 - (1/(kr))²)]`
/// with `r = T_Ω/τ_r`.
pub fn a_coefficient(k: usize, ratio: f64) -> f64 {
    if k.is_multiple_of(2) {
        return 0.0;
    }
    let kf = k as f64;
    let u = kf * ratio;
    let phase = (kf + 1.0) * PI / 2.0;
    let resonant = if (u - 1.0).abs() < 1e-7 {
        // 0/0 at k T_Ω = τ_r: ratio of derivatives with respect to u
        -(PI / 4.0) * (phase + PI / 2.0).sin()
    } else {
        (phase + PI * u / 2.0).cos() / (1.0 - 1.0 / (u * u))
    };
    4.0 / (kf * PI) * ((kf * PI / 2.0 - PI * u / 2.0).sin() + resonant)
}

/// Computes `a_k`, `b_k = k T_Ω a_k / τ_r` up to `k_max`, their squared sums,
/// and the closed forms `a_1`, `b_1`.
pub fn fourier_coefficients(t_pulse: f64, tau_r: f64, k_max: usize) -> Result<FourierCoefficients> {
    if !(t_pulse >= 0.0 && t_pulse < tau_r) {
        return Err(Error::InvalidParameter(format!(
            "Fourier coefficients need 0 <= T_pulse < tau_r (got {t_pulse}, {tau_r})"
        )));
    }
    if k_max == 0 {
        return Err(Error::InvalidParameter("k_max must be positive".into()));
    }
    let ratio = t_pulse / tau_r;
    let a: Vec<f64> = (1..=k_max).map(|k| a_coefficient(k, ratio)).collect();
    let b: Vec<f64> = a.iter().enumerate().map(|(i, ak)| (i + 1) as f64 * ratio * ak).collect();
    let a_s = a.iter().map(|x| x * x).sum();
    let b_s = b.iter().map(|x| x * x).sum();
    let (a_1, b_1) = first_harmonics(ratio);
    Ok(FourierCoefficients { a, b, a_s, b_s, a_1, b_1 })
}

/// `a_1 = 4 (τ_r/T_Ω)² cos(πT_Ω/2τ_r) / (π[(τ_r/T_Ω)² - 1])`,
/// `b_1 = 4 (τ_r/T_Ω) cos(πT_Ω/2τ_r) / (π[(τ_r/T_Ω)² - 1])`.
fn first_harmonics(ratio: f64) -> (f64, f64) {
    if ratio == 0.0 {
        return (4.0 / PI, 0.0);
    }
    let inv = 1.0 / ratio;
    let c = (PI * ratio / 2.0).cos();
    let den = PI * (inv * inv - 1.0);
    (4.0 * inv * inv * c / den, 4.0 * inv * c / den)
}
