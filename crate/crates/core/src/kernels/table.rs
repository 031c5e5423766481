use std::io::{self, Write};

use rayon::prelude::*;

use super::{
    damping_coefficient, diffusion_coefficient, markov_rates, Estimate, Rates, ReservoirParams,
};
use crate::error::{Error, Result};
use crate::quadrature::Tolerance;
use crate::qubit::ModeFlag;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableConfig {
    pub t_max: f64,
    pub dt: f64,
    pub quadrature: Tolerance,
    /// Largest number of grid samples a table may hold.
    pub max_samples: usize,
    /// Re-evaluate Δ at half the quadrature tolerance and record the result.
    pub check_refinement: bool,
}

impl TableConfig {
    pub fn new(t_max: f64, dt: f64) -> Self {
        TableConfig {
            t_max,
            dt,
            quadrature: Tolerance::default(),
            max_samples: 20_000_000,
            check_refinement: true,
        }
    }
}

/// Outcome of re-running the Δ quadrature at half the tolerance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefinementReport {
    /// Largest |Δ_tol − Δ_tol/2| over the grid.
    pub max_change: f64,
    /// Index of the sample with the largest change relative to its estimate.
    pub worst_index: usize,
    /// Every change stayed below the reported error estimate.
    pub passed: bool,
}

/// Δ(t), γ(t) and the channel rates Γ1 = Δ+γ, Γ2 = Δ−γ sampled on a uniform
/// grid starting at t = 0. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTable {
    dt: f64,
    times: Vec<f64>,
    delta: Vec<f64>,
    gamma: Vec<f64>,
    gamma1: Vec<f64>,
    gamma2: Vec<f64>,
    delta_error: Vec<f64>,
    markov: Rates,
    refinement: Option<RefinementReport>,
    gamma_violations: Vec<usize>,
}

fn grid(t_max: f64, dt: f64, max_samples: usize) -> Result<Vec<f64>> {
    if !(t_max > 0.0) || !t_max.is_finite() {
        return Err(Error::validation(
            "t_max",
            format!("must be > 0, got {t_max}"),
        ));
    }
    if !(dt > 0.0 && dt <= t_max) {
        return Err(Error::validation(
            "dt",
            format!("must satisfy 0 < dt <= t_max, got {dt}"),
        ));
    }
    let steps = (t_max / dt).round();
    if steps + 1.0 > max_samples as f64 {
        return Err(Error::Resource {
            requested: if steps < usize::MAX as f64 {
                steps as usize + 1
            } else {
                usize::MAX
            },
            available: max_samples,
        });
    }
    Ok((0..=steps as usize).map(|k| k as f64 * dt).collect())
}

impl CoefficientTable {
    fn from_columns(
        dt: f64,
        times: Vec<f64>,
        delta: Vec<f64>,
        gamma: Vec<f64>,
        delta_error: Vec<f64>,
        markov: Rates,
        refinement: Option<RefinementReport>,
    ) -> Self {
        // Δ and γ are re-derived from the channel rates so that
        // Γ1 ± Γ2 = 2Δ, 2γ hold exactly in floating point (halving is exact).
        let gamma1: Vec<f64> = delta.iter().zip(&gamma).map(|(d, g)| d + g).collect();
        let gamma2: Vec<f64> = delta.iter().zip(&gamma).map(|(d, g)| d - g).collect();
        let delta: Vec<f64> = gamma1
            .iter()
            .zip(&gamma2)
            .map(|(a, b)| (a + b) / 2.0)
            .collect();
        let gamma: Vec<f64> = gamma1
            .iter()
            .zip(&gamma2)
            .map(|(a, b)| (a - b) / 2.0)
            .collect();
        let gamma_violations = gamma
            .iter()
            .enumerate()
            .filter(|(_, g)| **g < 0.0)
            .map(|(i, _)| i)
            .collect();
        CoefficientTable {
            dt,
            times,
            delta,
            gamma,
            gamma1,
            gamma2,
            delta_error,
            markov,
            refinement,
            gamma_violations,
        }
    }

    /// Table whose every row (and Markovian limit) equals `rates`.
    pub fn constant(rates: Rates, t_max: f64, dt: f64) -> Result<Self> {
        let times = grid(t_max, dt, usize::MAX)?;
        let n = times.len();
        Ok(Self::from_columns(
            dt,
            times,
            vec![rates.delta; n],
            vec![rates.gamma; n],
            vec![0.0; n],
            rates,
            None,
        ))
    }

    /// Constant rows filled with the asymptotic rates (Δ_∞, γ_∞).
    pub fn markovian(p: &ReservoirParams, t_max: f64, dt: f64) -> Result<Self> {
        p.validate()?;
        Self::constant(markov_rates(p), t_max, dt)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t_max(&self) -> f64 {
        *self.times.last().expect("table is never empty")
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn delta(&self) -> &[f64] {
        &self.delta
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn gamma1(&self) -> &[f64] {
        &self.gamma1
    }

    pub fn gamma2(&self) -> &[f64] {
        &self.gamma2
    }

    pub fn delta_error(&self) -> &[f64] {
        &self.delta_error
    }

    pub fn markov(&self) -> Rates {
        self.markov
    }

    pub fn refinement(&self) -> Option<RefinementReport> {
        self.refinement
    }

    /// Grid indices where γ came out negative. Reported, never clamped.
    pub fn gamma_violations(&self) -> &[usize] {
        &self.gamma_violations
    }

    /// Rates at time `t`: linear interpolation of the samples, or the
    /// asymptotic constants in Markovian mode.
    pub fn rates_at(&self, t: f64, mode: ModeFlag) -> Result<Rates> {
        let t_max = self.t_max();
        let slack = 1e-9 * self.dt;
        if !(t >= -slack && t <= t_max + slack) {
            return Err(Error::Range { t, t_max });
        }
        if mode == ModeFlag::Markovian {
            return Ok(self.markov);
        }
        let n = self.times.len();
        if n == 1 {
            return Ok(Rates {
                delta: self.delta[0],
                gamma: self.gamma[0],
            });
        }
        let pos = (t / self.dt).clamp(0.0, (n - 1) as f64);
        let i = (pos.floor() as usize).min(n - 2);
        let frac = pos - i as f64;
        let lerp = |v: &[f64]| {
            if frac == 0.0 {
                v[i]
            } else {
                v[i] + frac * (v[i + 1] - v[i])
            }
        };
        Ok(Rates {
            delta: lerp(&self.delta),
            gamma: lerp(&self.gamma),
        })
    }

    /// Check that a dynamics grid of step `dt` up to `t_max` can read this
    /// table: steps must be integer multiples or divisors of each other.
    pub fn check_grid(&self, dt: f64, t_max: f64) -> Result<()> {
        let integral = |x: f64| (x - x.round()).abs() <= 1e-9 * x.max(1.0) && x.round() >= 1.0;
        if !(integral(dt / self.dt) || integral(self.dt / dt)) {
            return Err(Error::validation(
                "dt",
                format!(
                    "dynamics step {dt} is neither a multiple nor a divisor of table step {}",
                    self.dt
                ),
            ));
        }
        if t_max > self.t_max() * (1.0 + 1e-12) + 1e-12 {
            return Err(Error::Range {
                t: t_max,
                t_max: self.t_max(),
            });
        }
        Ok(())
    }

    /// Columns `t,Delta,gamma,Gamma1,Gamma2`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,Delta,gamma,Gamma1,Gamma2")?;
        for i in 0..self.times.len() {
            writeln!(
                w,
                "{},{},{},{},{}",
                self.times[i], self.delta[i], self.gamma[i], self.gamma1[i], self.gamma2[i]
            )?;
        }
        Ok(())
    }
}

/// Sample Δ(t) and γ(t) on `[0, t_max]` with step `dt`.
pub fn build_coefficient_table(p: &ReservoirParams, cfg: &TableConfig) -> Result<CoefficientTable> {
    p.validate()?;
    let times = grid(cfg.t_max, cfg.dt, cfg.max_samples)?;
    // Samples are independent; collect() keeps grid order, so the result does
    // not depend on the thread count.
    let samples: Vec<(Estimate, Option<f64>, f64)> = times
        .par_iter()
        .map(|&t| {
            let d = diffusion_coefficient(t, p, cfg.quadrature)?;
            let fine = if cfg.check_refinement {
                Some(diffusion_coefficient(t, p, cfg.quadrature.halved())?.value)
            } else {
                None
            };
            Ok((d, fine, damping_coefficient(t, p)?))
        })
        .collect::<Result<_>>()?;

    let mut refinement = cfg.check_refinement.then_some(RefinementReport {
        max_change: 0.0,
        worst_index: 0,
        passed: true,
    });
    let mut worst_ratio = 0.0;
    if let Some(report) = refinement.as_mut() {
        for (i, (d, fine, _)) in samples.iter().enumerate() {
            let change = (fine.unwrap_or(d.value) - d.value).abs();
            report.max_change = report.max_change.max(change);
            if change > d.error {
                report.passed = false;
            }
            let ratio = if d.error > 0.0 { change / d.error } else { 0.0 };
            if ratio > worst_ratio {
                worst_ratio = ratio;
                report.worst_index = i;
            }
        }
    }
    let delta = samples.iter().map(|s| s.0.value).collect();
    let delta_error = samples.iter().map(|s| s.0.error).collect();
    let gamma = samples.iter().map(|s| s.2).collect();
    Ok(CoefficientTable::from_columns(
        cfg.dt,
        times,
        delta,
        gamma,
        delta_error,
        markov_rates(p),
        refinement,
    ))
}
