//! Ohmic reservoir with a Lorentz–Drude cutoff: spectral density, noise and
//! dissipation kernels, and the second-order time-convolutionless rates
//!
//! ```text
//! Δ(t) = α² ∫₀ᵗ k(τ) cos(ω₀τ) dτ        γ(t) = α² ∫₀ᵗ μ(τ) sin(ω₀τ) dτ
//! ```
//!
//! γ(t) has a closed form. Δ(t) is evaluated with the τ-integral done
//! analytically, leaving one frequency quadrature per time point:
//!
//! ```text
//! Δ(t) = α² ∫₀^∞ J(ω) coth(ω/2k_BT) [sin((ω−ω₀)t)/(ω−ω₀) + sin((ω+ω₀)t)/(ω+ω₀)] dω
//! ```
//!
//! The frequency axis is truncated at Ω = max(50ω_c, 50ω₀, 20k_BT) and the
//! discarded tail is bounded explicitly; the bound is folded into the
//! returned error estimate.

mod table;

pub use table::{build_coefficient_table, CoefficientTable, RefinementReport, TableConfig};

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::quadrature::{integrate, panel_edges, Tolerance};

/// Physical constants of the reservoir and the measurement channel.
///
/// Units: ħ = 1, frequencies in rad/time, `kbt` in energy units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReservoirParams {
    pub omega0: f64,
    pub gamma0: f64,
    pub omega_c: f64,
    pub kbt: f64,
    pub alpha_sq: f64,
    /// Measurement strength M (1/time).
    pub measurement_strength: f64,
    /// Detection efficiency η.
    pub efficiency: f64,
}

impl Default for ReservoirParams {
    fn default() -> Self {
        ReservoirParams {
            omega0: 1.0,
            gamma0: 1.0,
            omega_c: 0.5,
            kbt: 1.0,
            alpha_sq: 0.01,
            measurement_strength: 0.05,
            efficiency: 1.0,
        }
    }
}

impl ReservoirParams {
    pub fn validate(&self) -> Result<()> {
        let positive = |field, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::validation(
                    field,
                    format!("must be finite and > 0, got {v}"),
                ))
            }
        };
        let nonnegative = |field, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::validation(
                    field,
                    format!("must be finite and >= 0, got {v}"),
                ))
            }
        };
        positive("omega0", self.omega0)?;
        positive("gamma0", self.gamma0)?;
        positive("omega_c", self.omega_c)?;
        nonnegative("kBT", self.kbt)?;
        nonnegative("alpha_sq", self.alpha_sq)?;
        nonnegative("M", self.measurement_strength)?;
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::validation(
                "eta",
                format!("must lie in [0, 1], got {}", self.efficiency),
            ));
        }
        if !self.ratio().is_finite() {
            return Err(Error::validation(
                "omega_c",
                "ratio omega_c/omega0 is not finite",
            ));
        }
        Ok(())
    }

    /// r = ω_c / ω₀.
    pub fn ratio(&self) -> f64 {
        self.omega_c / self.omega0
    }

    /// Truncation frequency for the ω-quadratures.
    pub fn frequency_cutoff(&self) -> f64 {
        (50.0 * self.omega_c)
            .max(50.0 * self.omega0)
            .max(20.0 * self.kbt)
    }
}

/// A quadrature value with its error estimate (including the tail bound).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

/// Diffusion and damping rates at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Rates {
    pub delta: f64,
    pub gamma: f64,
}

impl Rates {
    /// Γ1 = Δ + γ, the σ⁻ channel rate.
    pub fn gamma1(&self) -> f64 {
        self.delta + self.gamma
    }

    /// Γ2 = Δ − γ, the σ⁺ channel rate.
    pub fn gamma2(&self) -> f64 {
        self.delta - self.gamma
    }
}

/// J(ω) = (2γ₀/π) ω ω_c² / (ω_c² + ω²).
pub fn spectral_density(omega: f64, p: &ReservoirParams) -> Result<f64> {
    if !(omega >= 0.0) {
        return Err(Error::domain(
            "spectral_density",
            format!("omega must be >= 0, got {omega}"),
        ));
    }
    Ok(ohmic(omega, p))
}

fn ohmic(omega: f64, p: &ReservoirParams) -> f64 {
    let wc2 = p.omega_c * p.omega_c;
    2.0 * p.gamma0 / PI * omega * wc2 / (wc2 + omega * omega)
}

fn coth(x: f64) -> f64 {
    1.0 / x.tanh()
}

/// J(ω)·coth(ω/2k_BT), with coth ≡ 1 at zero temperature and the finite
/// ω → 0 limit 4γ₀k_BT/π built in.
fn thermal_density(omega: f64, p: &ReservoirParams) -> f64 {
    if p.kbt == 0.0 {
        return ohmic(omega, p);
    }
    let wc2 = p.omega_c * p.omega_c;
    let x = omega / (2.0 * p.kbt);
    let x_coth_x = if x < 1e-6 {
        1.0 + x * x / 3.0
    } else {
        x * coth(x)
    };
    2.0 * p.gamma0 / PI * wc2 / (wc2 + omega * omega) * 2.0 * p.kbt * x_coth_x
}

fn thermal_factor(omega: f64, kbt: f64) -> f64 {
    if kbt == 0.0 {
        1.0
    } else {
        coth(omega / (2.0 * kbt))
    }
}

/// μ(τ) = 2∫J(ω) sin(ωτ) dω = 2γ₀ω_c² e^{−ω_c τ} for τ > 0.
pub fn dissipation_kernel(tau: f64, p: &ReservoirParams) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::domain(
            "dissipation_kernel",
            format!("tau must be > 0 (sine transform is discontinuous at 0), got {tau}"),
        ));
    }
    Ok(2.0 * p.gamma0 * p.omega_c * p.omega_c * (-p.omega_c * tau).exp())
}

/// k(τ) = 2∫₀^∞ J(ω) coth(ω/2k_BT) cos(ωτ) dω by adaptive quadrature.
///
/// Even in τ. At τ = 0 the integral diverges logarithmically (J ~ 1/ω at
/// large ω) for every temperature, so τ = 0 is rejected.
pub fn noise_kernel(tau: f64, p: &ReservoirParams, tol: Tolerance) -> Result<Estimate> {
    if tau == 0.0 || !tau.is_finite() {
        return Err(Error::domain(
            "noise_kernel",
            format!("tau must be finite and nonzero (log-divergent at 0), got {tau}"),
        ));
    }
    let tau = tau.abs();
    let cutoff = p.frequency_cutoff();
    let width = (2.0 * PI / tau).min(cutoff / 8.0);
    let edges = panel_edges(0.0, cutoff, width, &[p.omega_c, 2.0 * p.kbt]);
    let r = integrate(
        |w| 2.0 * thermal_density(w, p) * (w * tau).cos(),
        &edges,
        tol,
    );
    // g(ω) = 2J(ω)coth(...) is decreasing past the cutoff, so the
    // oscillatory tail is bounded by 2g(Ω)/τ.
    let tail = 4.0 * ohmic(cutoff, p) * thermal_factor(cutoff, p.kbt) / tau;
    Ok(Estimate {
        value: r.value,
        error: r.error + tail,
    })
}

/// sin(d·t)/d with the removable singularity at d = 0.
fn sin_ratio(d: f64, t: f64) -> f64 {
    let x = d * t;
    if x.abs() < 1e-5 {
        t * (1.0 - x * x / 6.0)
    } else {
        x.sin() / d
    }
}

/// Δ(t) via the swapped-order frequency quadrature.
pub fn diffusion_coefficient(t: f64, p: &ReservoirParams, tol: Tolerance) -> Result<Estimate> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::domain(
            "diffusion_coefficient",
            format!("t must be >= 0, got {t}"),
        ));
    }
    if t == 0.0 {
        return Ok(Estimate {
            value: 0.0,
            error: 0.0,
        });
    }
    let w0 = p.omega0;
    let cutoff = p.frequency_cutoff();
    let width = (2.0 * PI / t).min(cutoff / 8.0);
    let edges = panel_edges(0.0, cutoff, width, &[w0, p.omega_c, 2.0 * p.kbt]);
    let r = integrate(
        |w| thermal_density(w, p) * (sin_ratio(w - w0, t) + sin_ratio(w + w0, t)),
        &edges,
        tol,
    );
    let tail = diffusion_tail_bound(t, p, cutoff);
    Ok(Estimate {
        value: p.alpha_sq * r.value,
        error: p.alpha_sq * (r.error + tail),
    })
}

/// Bound on the discarded ∫_Ω^∞ of the Δ integrand: the smaller of the
/// absolute-value bound and the oscillatory (second mean value) bound.
fn diffusion_tail_bound(t: f64, p: &ReservoirParams, cutoff: f64) -> f64 {
    let w0 = p.omega0;
    let c = thermal_factor(cutoff, p.kbt);
    let absolute =
        4.0 * p.gamma0 * p.omega_c * p.omega_c / PI * c * (cutoff / (cutoff - w0)).ln() / w0;
    let j = ohmic(cutoff, p) * c;
    let oscillatory = 2.0 * (j / (cutoff - w0) + j / (cutoff + w0)) / t;
    absolute.min(oscillatory)
}

/// γ(t) = α² 2γ₀ω_c² [ω₀ − e^{−ω_c t}(ω₀ cos ω₀t + ω_c sin ω₀t)] / (ω_c² + ω₀²).
pub fn damping_coefficient(t: f64, p: &ReservoirParams) -> Result<f64> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::domain(
            "damping_coefficient",
            format!("t must be >= 0, got {t}"),
        ));
    }
    let (w0, wc) = (p.omega0, p.omega_c);
    let (s, c) = (w0 * t).sin_cos();
    let bracket = w0 - (-wc * t).exp() * (w0 * c + wc * s);
    Ok(p.alpha_sq * 2.0 * p.gamma0 * wc * wc * bracket / (wc * wc + w0 * w0))
}

/// γ(t) by direct τ-quadrature of μ(τ) sin(ω₀τ). Independent of the closed
/// form; used to cross-check it.
pub fn damping_coefficient_by_quadrature(
    t: f64,
    p: &ReservoirParams,
    tol: Tolerance,
) -> Result<Estimate> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::domain(
            "damping_coefficient",
            format!("t must be >= 0, got {t}"),
        ));
    }
    if t == 0.0 {
        return Ok(Estimate {
            value: 0.0,
            error: 0.0,
        });
    }
    let width = (PI / p.omega0).min(1.0 / p.omega_c);
    let edges = panel_edges(0.0, t, width, &[]);
    let mu0 = 2.0 * p.gamma0 * p.omega_c * p.omega_c;
    let r = integrate(
        |tau| mu0 * (-p.omega_c * tau).exp() * (p.omega0 * tau).sin(),
        &edges,
        tol,
    );
    Ok(Estimate {
        value: p.alpha_sq * r.value,
        error: p.alpha_sq * r.error,
    })
}

/// t → ∞ limits (Δ_∞, γ_∞) used by the Markovian comparison mode.
pub fn markov_rates(p: &ReservoirParams) -> Rates {
    let (w0, wc) = (p.omega0, p.omega_c);
    let gamma = p.alpha_sq * 2.0 * p.gamma0 * wc * wc * w0 / (wc * wc + w0 * w0);
    let delta = p.alpha_sq * PI * ohmic(w0, p) * thermal_factor(w0, p.kbt);
    Rates { delta, gamma }
}
