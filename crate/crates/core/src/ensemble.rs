//! Monte Carlo ensembles and the figure-level comparisons built on them.

use std::io::{self, Write};

use rayon::prelude::*;

use crate::control::{
    forward_backward_sweep, integrate_heun, ControlTrajectory, FeedbackPolicy, OCConfig, OCResult,
};
use crate::error::{Error, Result};
use crate::kernels::{build_coefficient_table, CoefficientTable, ReservoirParams, TableConfig};
use crate::qubit::{coherence_factor, BlochState, ModeFlag};
use crate::sde::{simulate, ControlLaw, IntegratorConfig, TrajectoryRecord, ZeroControl};

/// Trajectories simulated per parallel batch. Fixed so that the reduction
/// order never depends on the pool size.
const CHUNK: usize = 64;

/// Stream namespaces used by [`compare_modes`].
pub const BRANCH_CONTROLLED: u8 = 1;
pub const BRANCH_UNCONTROLLED: u8 = 2;
pub const BRANCH_MARKOVIAN: u8 = 3;

#[derive(Debug, Clone, Default)]
struct Welford {
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    fn new(n: usize) -> Self {
        Welford {
            mean: vec![0.0; n],
            m2: vec![0.0; n],
        }
    }

    fn push(&mut self, count: usize, values: impl Iterator<Item = f64>) {
        let c = count as f64;
        for ((m, s), v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(values) {
            let d = v - *m;
            *m += d / c;
            *s += d * (v - *m);
        }
    }

    fn variance(&self, count: usize) -> Vec<f64> {
        if count < 2 {
            return vec![0.0; self.m2.len()];
        }
        self.m2
            .iter()
            .map(|s| s.max(0.0) / (count - 1) as f64)
            .collect()
    }
}

/// Per-time-point sample means and (unbiased) variances across an ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub times: Vec<f64>,
    pub mean_lambda: Vec<f64>,
    pub var_lambda: Vec<f64>,
    pub mean_x: Vec<f64>,
    pub var_x: Vec<f64>,
    pub mean_y: Vec<f64>,
    pub var_y: Vec<f64>,
    pub mean_z: Vec<f64>,
    pub var_z: Vec<f64>,
    pub trajectory_count: usize,
    pub master_seed: u64,
    pub branch: u8,
    /// Clamp events per step, averaged over trajectories.
    pub clamp_rate: f64,
}

impl EnsembleStats {
    pub fn final_mean_lambda(&self) -> f64 {
        *self.mean_lambda.last().unwrap_or(&f64::NAN)
    }

    /// Index of the sample closest to time `t`.
    pub fn index_at(&self, t: f64) -> usize {
        let dt = if self.times.len() > 1 {
            self.times[1] - self.times[0]
        } else {
            1.0
        };
        ((t / dt).round().max(0.0) as usize).min(self.times.len().saturating_sub(1))
    }

    /// Columns `t,mean_Lambda,var_Lambda,mean_x,mean_y,mean_z`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,mean_Lambda,var_Lambda,mean_x,mean_y,mean_z")?;
        for k in 0..self.times.len() {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                self.times[k],
                self.mean_lambda[k],
                self.var_lambda[k],
                self.mean_x[k],
                self.mean_y[k],
                self.mean_z[k]
            )?;
        }
        Ok(())
    }
}

/// Simulate trajectories `0..n` of `cfg`'s branch and reduce them in index
/// order. Bitwise reproducible for any rayon pool size.
pub fn run_ensemble(
    p: &ReservoirParams,
    table: &CoefficientTable,
    s0: &BlochState,
    cfg: &IntegratorConfig,
    policy: &dyn ControlLaw,
    n: usize,
    mode: ModeFlag,
) -> Result<EnsembleStats> {
    if n == 0 {
        return Err(Error::validation("ensemble_size", "must be at least 1"));
    }
    cfg.validate()?;
    let len = cfg.steps() + 1;
    let mut acc = [
        Welford::new(len),
        Welford::new(len),
        Welford::new(len),
        Welford::new(len),
    ];
    let mut times = Vec::new();
    let mut clamps: u64 = 0;
    let mut count = 0;

    for start in (0..n).step_by(CHUNK) {
        let end = (start + CHUNK).min(n);
        let batch: Vec<Result<TrajectoryRecord>> = (start..end)
            .into_par_iter()
            .map(|i| simulate(p, table, s0, &cfg.with_index(i as u64), policy, mode))
            .collect();
        for (offset, rec) in batch.into_iter().enumerate() {
            let rec = rec.map_err(|e| Error::Trajectory {
                index: (start + offset) as u64,
                source: Box::new(e),
            })?;
            count += 1;
            acc[0].push(count, rec.lambda.iter().copied());
            acc[1].push(count, rec.states.iter().map(|s| s.x));
            acc[2].push(count, rec.states.iter().map(|s| s.y));
            acc[3].push(count, rec.states.iter().map(|s| s.z));
            clamps += rec.clamp_count;
            if times.is_empty() {
                times = rec.times;
            }
        }
    }

    let steps = (len - 1).max(1) as f64;
    let [l, x, y, z] = acc;
    Ok(EnsembleStats {
        times,
        var_lambda: l.variance(count),
        mean_lambda: l.mean,
        var_x: x.variance(count),
        mean_x: x.mean,
        var_y: y.variance(count),
        mean_y: y.mean,
        var_z: z.variance(count),
        mean_z: z.mean,
        trajectory_count: count,
        master_seed: cfg.master_seed,
        branch: cfg.branch,
        clamp_rate: clamps as f64 / (count as f64 * steps),
    })
}

/// The four curves of one comparison panel.
#[derive(Debug, Clone)]
pub struct ModeComparison {
    /// Non-Markovian rates, feedback from the solved costate.
    pub controlled: EnsembleStats,
    /// Non-Markovian rates, u ≡ 0.
    pub uncontrolled: EnsembleStats,
    /// Asymptotic rates, u ≡ 0.
    pub markovian: EnsembleStats,
    /// Λ ≡ 1 on the same grid.
    pub target: Vec<f64>,
    pub control: OCResult,
}

/// Solve the control problem for `p`, then run the three ensembles on
/// separate noise branches.
pub fn compare_modes(
    p: &ReservoirParams,
    table: &CoefficientTable,
    s0: &BlochState,
    oc: &OCConfig,
    cfg: &IntegratorConfig,
    n: usize,
) -> Result<ModeComparison> {
    let control = forward_backward_sweep(p, table, s0, oc, ModeFlag::NonMarkovian)?;
    let policy = FeedbackPolicy::from_result(&control);
    let branch = |b: u8| IntegratorConfig { branch: b, ..*cfg };
    let controlled = run_ensemble(
        p,
        table,
        s0,
        &branch(BRANCH_CONTROLLED),
        &policy,
        n,
        ModeFlag::NonMarkovian,
    )?;
    let uncontrolled = run_ensemble(
        p,
        table,
        s0,
        &branch(BRANCH_UNCONTROLLED),
        &ZeroControl,
        n,
        ModeFlag::NonMarkovian,
    )?;
    let markovian = run_ensemble(
        p,
        table,
        s0,
        &branch(BRANCH_MARKOVIAN),
        &ZeroControl,
        n,
        ModeFlag::Markovian,
    )?;
    let target = vec![1.0; controlled.times.len()];
    Ok(ModeComparison {
        controlled,
        uncontrolled,
        markovian,
        target,
        control,
    })
}

/// Λ(t) of the control-free, measurement-free deterministic dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanCurve {
    pub kbt: f64,
    pub mode: ModeFlag,
    pub times: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl ScanCurve {
    pub fn is_non_increasing(&self) -> bool {
        self.lambda.windows(2).all(|w| w[1] <= w[0])
    }

    /// Columns `t,Lambda`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,Lambda")?;
        for (t, l) in self.times.iter().zip(&self.lambda) {
            writeln!(w, "{t},{l}")?;
        }
        Ok(())
    }
}

/// For every temperature, build the rate table and integrate with u ≡ 0 and
/// M = 0 in both modes. Curves come back ordered by temperature, then
/// non-Markovian before Markovian.
pub fn temperature_scan(
    p: &ReservoirParams,
    kbt_values: &[f64],
    s0: &BlochState,
    table_cfg: &TableConfig,
    dt: f64,
) -> Result<Vec<ScanCurve>> {
    if kbt_values.is_empty() {
        return Err(Error::validation("kbt_values", "must not be empty"));
    }
    let steps = (table_cfg.t_max / dt).round() as usize;
    let times: Vec<f64> = (0..=steps).map(|k| k as f64 * dt).collect();
    let mut out = Vec::with_capacity(2 * kbt_values.len());
    for &kbt in kbt_values {
        let q = ReservoirParams {
            kbt,
            measurement_strength: 0.0,
            ..*p
        };
        let table = build_coefficient_table(&q, table_cfg)?;
        table.check_grid(dt, table_cfg.t_max)?;
        for mode in [ModeFlag::NonMarkovian, ModeFlag::Markovian] {
            let ctl = ControlTrajectory::zeros(times.clone());
            let path = integrate_heun(&q, &table, s0, &ctl, dt, mode)?;
            let lambda = path
                .iter()
                .map(|s| coherence_factor(s, s0))
                .collect::<Result<_>>()?;
            out.push(ScanCurve {
                kbt,
                mode,
                times: times.clone(),
                lambda,
            });
        }
    }
    Ok(out)
}
