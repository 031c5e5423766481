//! Euler–Maruyama integration of the conditioned Bloch equation.
//!
//! Noise comes from per-trajectory ChaCha8 streams: the 64-bit seed keys the
//! generator and `(branch << 56) | trajectory_index` selects the stream, so a
//! path depends only on its own coordinates and never on scheduling.

use std::io::{self, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::kernels::{CoefficientTable, ReservoirParams};
use crate::qubit::{coherence_factor, diffusion, drift, BlochState, ControlInput, ModeFlag};

/// Upper bound on noise redraws for one step under [`ClampPolicy::RejectStep`].
pub const MAX_REJECTIONS: u32 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    #[default]
    EulerMaruyama,
}

/// What to do when a step leaves the Bloch ball.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClampPolicy {
    /// Rescale to unit length.
    #[default]
    ProjectToBall,
    /// Redraw the increment (up to [`MAX_REJECTIONS`] times).
    RejectStep,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub t_max: f64,
    pub scheme: Scheme,
    pub clamp_policy: ClampPolicy,
    pub master_seed: u64,
    pub trajectory_index: u64,
    /// Stream namespace; ensembles that must not share noise use distinct
    /// branches.
    pub branch: u8,
}

impl IntegratorConfig {
    pub fn new(dt: f64, t_max: f64, master_seed: u64) -> Self {
        IntegratorConfig {
            dt,
            t_max,
            scheme: Scheme::EulerMaruyama,
            clamp_policy: ClampPolicy::ProjectToBall,
            master_seed,
            trajectory_index: 0,
            branch: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::validation(
                "dt",
                format!("must be > 0, got {}", self.dt),
            ));
        }
        if !(self.t_max >= self.dt && self.t_max.is_finite()) {
            return Err(Error::validation(
                "t_max",
                format!(
                    "must satisfy dt <= t_max, got dt={} t_max={}",
                    self.dt, self.t_max
                ),
            ));
        }
        if self.trajectory_index >= 1 << 56 {
            return Err(Error::validation("trajectory_index", "must be below 2^56"));
        }
        Ok(())
    }

    /// Number of steps; the horizon is rounded to the nearest whole step.
    pub fn steps(&self) -> usize {
        (self.t_max / self.dt).round() as usize
    }

    pub fn with_index(self, trajectory_index: u64) -> Self {
        IntegratorConfig {
            trajectory_index,
            ..self
        }
    }
}

/// Gaussian increments with variance `dt` from one substream.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    rng: ChaCha8Rng,
    sqrt_dt: f64,
}

impl NoiseStream {
    pub fn new(master_seed: u64, branch: u8, trajectory_index: u64, dt: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(((branch as u64) << 56) | trajectory_index);
        NoiseStream {
            rng,
            sqrt_dt: dt.sqrt(),
        }
    }

    pub fn next_increment(&mut self) -> f64 {
        let z: f64 = StandardNormal.sample(&mut self.rng);
        z * self.sqrt_dt
    }
}

/// The first `n` increments of stream `(master_seed, 0, trajectory_index)`.
pub fn wiener_increments(n: usize, dt: f64, master_seed: u64, trajectory_index: u64) -> Vec<f64> {
    let mut stream = NoiseStream::new(master_seed, 0, trajectory_index, dt);
    (0..n).map(|_| stream.next_increment()).collect()
}

/// A control rule u(t, s). Implementations must be shareable across threads.
pub trait ControlLaw: Sync {
    fn control(&self, t: f64, s: &BlochState) -> Result<ControlInput>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroControl;

impl ControlLaw for ZeroControl {
    fn control(&self, _t: f64, _s: &BlochState) -> Result<ControlInput> {
        Ok(ControlInput::ZERO)
    }
}

/// Tabulated u(t) on a uniform grid, linearly interpolated and held constant
/// past either end.
#[derive(Debug, Clone)]
pub struct OpenLoop {
    dt: f64,
    values: Vec<ControlInput>,
}

impl OpenLoop {
    pub fn new(dt: f64, values: Vec<ControlInput>) -> Result<Self> {
        if values.is_empty() || !(dt > 0.0) {
            return Err(Error::validation(
                "control",
                "open-loop table needs dt > 0 and samples",
            ));
        }
        Ok(OpenLoop { dt, values })
    }
}

impl ControlLaw for OpenLoop {
    fn control(&self, t: f64, _s: &BlochState) -> Result<ControlInput> {
        let n = self.values.len();
        let pos = (t / self.dt).clamp(0.0, (n - 1) as f64);
        let i = pos.floor() as usize;
        if i + 1 >= n {
            return Ok(self.values[n - 1]);
        }
        let f = pos - i as f64;
        let (a, b) = (self.values[i], self.values[i + 1]);
        Ok(ControlInput::new(
            a.ux + f * (b.ux - a.ux),
            a.uy + f * (b.uy - a.uy),
        ))
    }
}

/// One unclamped Euler–Maruyama step: s + drift·dt + diffusion·dW.
#[allow(clippy::too_many_arguments)]
pub fn em_step(
    s: &BlochState,
    t: f64,
    dt: f64,
    u: &ControlInput,
    dw: f64,
    table: &CoefficientTable,
    p: &ReservoirParams,
    mode: ModeFlag,
) -> Result<BlochState> {
    let a = drift(s, t, u, table, p, mode)?;
    let b = diffusion(s, p);
    let next = *s + a * dt + b * dw;
    if !next.is_finite() {
        return Err(Error::Integration {
            t,
            state: *s,
            control: *u,
            reason: "non-finite state after step".into(),
        });
    }
    Ok(next)
}

/// One sampled path. Entry `k` of every column belongs to time `t_k`;
/// `noise[k]` is the increment that led into `t_k` (zero at `k = 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub states: Vec<BlochState>,
    pub controls: Vec<ControlInput>,
    pub noise: Vec<f64>,
    pub record: Vec<f64>,
    pub lambda: Vec<f64>,
    pub clamp_count: u64,
    pub rejection_count: u64,
}

impl TrajectoryRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> BlochState {
        *self
            .states
            .last()
            .expect("trajectory has at least one sample")
    }

    /// Columns `t,x,y,z,ux,uy,dW,Y,Lambda`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,x,y,z,ux,uy,dW,Y,Lambda")?;
        for k in 0..self.len() {
            let (s, u) = (self.states[k], self.controls[k]);
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                self.times[k],
                s.x,
                s.y,
                s.z,
                u.ux,
                u.uy,
                self.noise[k],
                self.record[k],
                self.lambda[k]
            )?;
        }
        Ok(())
    }
}

/// Integrate one trajectory from `s0` over `[0, cfg.t_max]`.
///
/// The measurement record accumulates dY = dW + √(ηM)·tr(Fρ)·dt with
/// F = −σz/2, so tr(Fρ) = −z/2. Λ(t) is taken against `s0`, which must
/// therefore have a transverse component.
pub fn simulate(
    p: &ReservoirParams,
    table: &CoefficientTable,
    s0: &BlochState,
    cfg: &IntegratorConfig,
    policy: &dyn ControlLaw,
    mode: ModeFlag,
) -> Result<TrajectoryRecord> {
    cfg.validate()?;
    p.validate()?;
    s0.validate()?;
    table.check_grid(cfg.dt, cfg.t_max)?;
    let n = cfg.steps();
    let dt = cfg.dt;
    let readout = (p.efficiency * p.measurement_strength).sqrt();
    let mut stream = NoiseStream::new(cfg.master_seed, cfg.branch, cfg.trajectory_index, dt);

    let mut rec = TrajectoryRecord {
        times: Vec::with_capacity(n + 1),
        states: Vec::with_capacity(n + 1),
        controls: Vec::with_capacity(n + 1),
        noise: Vec::with_capacity(n + 1),
        record: Vec::with_capacity(n + 1),
        lambda: Vec::with_capacity(n + 1),
        clamp_count: 0,
        rejection_count: 0,
    };

    let evaluate = |t: f64, s: &BlochState| -> Result<ControlInput> {
        let u = policy.control(t, s)?;
        if !u.is_finite() {
            return Err(Error::Policy {
                t,
                reason: format!("non-finite control {u:?}"),
            });
        }
        Ok(u)
    };

    let mut s = *s0;
    let mut y = 0.0;
    let mut dw_in = 0.0;
    for k in 0..=n {
        let t = k as f64 * dt;
        let u = evaluate(t, &s)?;
        rec.times.push(t);
        rec.states.push(s);
        rec.controls.push(u);
        rec.noise.push(dw_in);
        rec.record.push(y);
        rec.lambda.push(coherence_factor(&s, s0)?);
        if k == n {
            break;
        }

        let mut dw = stream.next_increment();
        let mut next = em_step(&s, t, dt, &u, dw, table, p, mode)?;
        if next.norm_sq() > 1.0 {
            match cfg.clamp_policy {
                ClampPolicy::ProjectToBall => {
                    next = next * (1.0 / next.norm());
                    rec.clamp_count += 1;
                }
                ClampPolicy::RejectStep => {
                    let mut tries = 0;
                    while next.norm_sq() > 1.0 {
                        if tries == MAX_REJECTIONS {
                            return Err(Error::Integration {
                                t,
                                state: s,
                                control: u,
                                reason: format!("{MAX_REJECTIONS} redraws all left the Bloch ball"),
                            });
                        }
                        tries += 1;
                        rec.rejection_count += 1;
                        dw = stream.next_increment();
                        next = em_step(&s, t, dt, &u, dw, table, p, mode)?;
                    }
                    rec.clamp_count += 1;
                }
            }
        }
        y += dw - readout * 0.5 * s.z * dt;
        dw_in = dw;
        s = next;
    }
    Ok(rec)
}
