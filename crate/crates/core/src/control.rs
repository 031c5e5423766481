//! Open-loop optimal control on the noise-free drift, and its deployment as
//! a state-feedback rule.
//!
//! Cost, in Bloch coordinates:
//!
//! ```text
//! J = (θ/4)|s(T) − s_T(T)|² + ½∫(u_x² + u_y²) dt
//! ```
//!
//! The state is propagated with Heun's method (explicit trapezoid) on the
//! control nodes, and the costate is the exact discrete adjoint of that
//! scheme, so the gradient returned by [`cost_and_gradient`] is the true
//! gradient of the discretised J. Its continuous limit is
//! λ̇ = −Aᵀλ with λ(T) = (θ/2)(s(T) − s_T(T)).

use std::io::{self, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::kernels::{CoefficientTable, Rates, ReservoirParams};
use crate::qubit::{
    control_jacobian, drift_jacobian, drift_with_rates, target_state, BlochState, ControlInput,
    ModeFlag,
};
use crate::sde::ControlLaw;

/// Seed for the random base point and directions of [`gradient_check`].
const GRADIENT_CHECK_SEED: u64 = 0x5eed_0c0c;
const GRADIENT_CHECK_DIRECTIONS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OCConfig {
    pub theta: f64,
    /// Blending factor β in u ← (1−β)u + βu*.
    pub relaxation: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub dt: f64,
    pub t_max: f64,
}

impl Default for OCConfig {
    fn default() -> Self {
        OCConfig {
            theta: 1.0,
            relaxation: 0.3,
            tol: 1e-6,
            max_iter: 500,
            dt: 0.01,
            t_max: 15.0,
        }
    }
}

impl OCConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta >= 0.0 && self.theta.is_finite()) {
            return Err(Error::validation(
                "theta",
                format!("must be >= 0, got {}", self.theta),
            ));
        }
        if !(self.relaxation > 0.0 && self.relaxation <= 1.0) {
            return Err(Error::validation(
                "relaxation",
                format!("must lie in (0, 1], got {}", self.relaxation),
            ));
        }
        if !(self.tol > 0.0) {
            return Err(Error::validation(
                "tol",
                format!("must be > 0, got {}", self.tol),
            ));
        }
        if self.max_iter == 0 {
            return Err(Error::validation("max_iter", "must be at least 1"));
        }
        if !(self.dt > 0.0 && self.dt <= self.t_max && self.t_max.is_finite()) {
            return Err(Error::validation(
                "dt",
                format!(
                    "need 0 < dt <= t_max, got dt={} t_max={}",
                    self.dt, self.t_max
                ),
            ));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_max / self.dt).round() as usize
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps()).map(|k| k as f64 * self.dt).collect()
    }
}

/// Control values on the nodes t_k = k·dt.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlTrajectory {
    pub times: Vec<f64>,
    pub values: Vec<ControlInput>,
}

impl ControlTrajectory {
    pub fn zeros(times: Vec<f64>) -> Self {
        let values = vec![ControlInput::ZERO; times.len()];
        ControlTrajectory { times, values }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values
            .iter()
            .map(|u| u.ux.abs().max(u.uy.abs()))
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostateTrajectory {
    pub times: Vec<f64>,
    pub lambda: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OCResult {
    pub control: ControlTrajectory,
    pub costate: CostateTrajectory,
    pub state_path: Vec<BlochState>,
    pub target_path: Vec<BlochState>,
    pub cost: f64,
    /// J with u ≡ 0, for comparison.
    pub zero_control_cost: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Cost of the control entering each iteration.
    pub history: Vec<f64>,
    /// Whether `history` never increased.
    pub monotone: bool,
    /// sup |u* − u| at the last iteration.
    pub residual: f64,
    pub tol: f64,
    pub theta: f64,
}

impl OCResult {
    pub fn terminal_error(&self) -> f64 {
        let (s, r) = (self.state_path.last(), self.target_path.last());
        match (s, r) {
            (Some(s), Some(r)) => (*s - *r).norm(),
            _ => 0.0,
        }
    }

    /// sup over the grid of |∂H/∂u| = |u − u*(λ, s)|.
    pub fn hamiltonian_gradient(&self) -> f64 {
        self.control
            .values
            .iter()
            .zip(&self.costate.lambda)
            .zip(&self.state_path)
            .map(|((u, l), s)| {
                let star = stationarity_control(l, s);
                (u.ux - star.ux).abs().max((u.uy - star.uy).abs())
            })
            .fold(0.0, f64::max)
    }

    pub fn max_costate(&self) -> f64 {
        self.costate
            .lambda
            .iter()
            .flat_map(|l| l.iter().map(|v| v.abs()))
            .fold(0.0, f64::max)
    }

    pub fn summary(&self) -> String {
        format!(
            "cost={},zero_control_cost={},iterations={},converged={},tol={},residual={}",
            self.cost,
            self.zero_control_cost,
            self.iterations,
            self.converged,
            self.tol,
            self.residual
        )
    }

    /// Columns `t,ux,uy,l1,l2,l3,x,y,z`, then a `# summary:` line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,ux,uy,l1,l2,l3,x,y,z")?;
        for k in 0..self.control.times.len() {
            let (u, l, s) = (
                self.control.values[k],
                self.costate.lambda[k],
                self.state_path[k],
            );
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                self.control.times[k], u.ux, u.uy, l[0], l[1], l[2], s.x, s.y, s.z
            )?;
        }
        writeln!(w, "# summary: {}", self.summary())
    }
}

fn mat_t_vec(a: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (j, o) in out.iter_mut().enumerate() {
        *o = a[0][j] * v[0] + a[1][j] * v[1] + a[2][j] * v[2];
    }
    out
}

fn axpy(a: f64, x: [f64; 3], y: [f64; 3]) -> [f64; 3] {
    [a * x[0] + y[0], a * x[1] + y[1], a * x[2] + y[2]]
}

fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// λ̇ = −Aᵀλ, A the drift Jacobian in (x, y, z).
pub fn costate_rhs(
    lambda: &[f64; 3],
    t: f64,
    u: &ControlInput,
    table: &CoefficientTable,
    p: &ReservoirParams,
    mode: ModeFlag,
) -> Result<[f64; 3]> {
    let a = drift_jacobian(u, table.rates_at(t, mode)?, p);
    Ok(mat_t_vec(&a, *lambda).map(|v| -v))
}

/// Minimiser of H = ½|u|² + λ·f(s, u):
/// u_x = λ2 z − λ3 y, u_y = λ3 x − λ1 z.
pub fn stationarity_control(lambda: &[f64; 3], s: &BlochState) -> ControlInput {
    ControlInput::new(
        lambda[1] * s.z - lambda[2] * s.y,
        lambda[2] * s.x - lambda[0] * s.z,
    )
}

/// Trapezoid weights for the running cost.
fn node_weight(k: usize, n: usize) -> f64 {
    if k == 0 || k == n {
        0.5
    } else {
        1.0
    }
}

/// J for a state path and control on the same grid.
pub fn total_cost(
    state_path: &[BlochState],
    control: &ControlTrajectory,
    target_path: &[BlochState],
    theta: f64,
    dt: f64,
) -> Result<f64> {
    let n = state_path.len();
    if n == 0 || control.values.len() != n || target_path.len() != n {
        return Err(Error::validation(
            "grid",
            format!(
                "state ({n}), control ({}) and target ({}) must share one non-empty grid",
                control.values.len(),
                target_path.len()
            ),
        ));
    }
    let miss = state_path[n - 1] - target_path[n - 1];
    let running: f64 = control
        .values
        .iter()
        .enumerate()
        .map(|(k, u)| node_weight(k, n - 1) * u.norm_sq())
        .sum();
    Ok(0.25 * theta * miss.norm_sq() + 0.5 * dt * running)
}

fn rates_on_grid(table: &CoefficientTable, times: &[f64], mode: ModeFlag) -> Result<Vec<Rates>> {
    times.iter().map(|&t| table.rates_at(t, mode)).collect()
}

/// Heun's method on the nodes: predictor with u_k, corrector with u_{k+1}.
fn heun_path(
    p: &ReservoirParams,
    rates: &[Rates],
    s0: &BlochState,
    controls: &[ControlInput],
    dt: f64,
) -> Result<Vec<BlochState>> {
    let mut path = Vec::with_capacity(controls.len());
    let mut s = *s0;
    path.push(s);
    for k in 0..controls.len() - 1 {
        let k1 = drift_with_rates(&s, &controls[k], rates[k], p);
        let pred = s + k1 * dt;
        let k2 = drift_with_rates(&pred, &controls[k + 1], rates[k + 1], p);
        s = s + (k1 + k2) * (0.5 * dt);
        if !s.is_finite() {
            return Err(Error::Integration {
                t: (k + 1) as f64 * dt,
                state: path[k],
                control: controls[k],
                reason: "non-finite state in deterministic sweep".into(),
            });
        }
        path.push(s);
    }
    Ok(path)
}

/// Deterministic (noise-free) trajectory under a node control sequence.
pub fn integrate_heun(
    p: &ReservoirParams,
    table: &CoefficientTable,
    s0: &BlochState,
    control: &ControlTrajectory,
    dt: f64,
    mode: ModeFlag,
) -> Result<Vec<BlochState>> {
    let rates = rates_on_grid(table, &control.times, mode)?;
    heun_path(p, &rates, s0, &control.values, dt)
}

/// Reverse sweep through [`heun_path`]. Returns the costates λ_k = ∂J/∂s_k
/// and the control sensitivities of the terminal cost.
fn heun_adjoint(
    p: &ReservoirParams,
    rates: &[Rates],
    path: &[BlochState],
    controls: &[ControlInput],
    terminal: [f64; 3],
    dt: f64,
) -> (Vec<[f64; 3]>, Vec<[f64; 2]>) {
    let n = path.len() - 1;
    let mut lambda = vec![[0.0; 3]; n + 1];
    let mut ubar = vec![[0.0; 2]; n + 1];
    lambda[n] = terminal;
    for k in (0..n).rev() {
        let next = lambda[k + 1];
        let s = path[k];
        let k1 = drift_with_rates(&s, &controls[k], rates[k], p);
        let pred = s + k1 * dt;

        let k2bar = next.map(|v| 0.5 * dt * v);
        let a2 = drift_jacobian(&controls[k + 1], rates[k + 1], p);
        let predbar = mat_t_vec(&a2, k2bar);
        let [bx, by] = control_jacobian(&pred);
        ubar[k + 1][0] += dot3(bx.to_array(), k2bar);
        ubar[k + 1][1] += dot3(by.to_array(), k2bar);

        let k1bar = axpy(dt, predbar, k2bar);
        let a1 = drift_jacobian(&controls[k], rates[k], p);
        let [bx, by] = control_jacobian(&s);
        ubar[k][0] += dot3(bx.to_array(), k1bar);
        ubar[k][1] += dot3(by.to_array(), k1bar);

        let from_k1 = mat_t_vec(&a1, k1bar);
        lambda[k] = [
            next[0] + predbar[0] + from_k1[0],
            next[1] + predbar[1] + from_k1[1],
            next[2] + predbar[2] + from_k1[2],
        ];
    }
    (lambda, ubar)
}

/// Everything one forward/backward pass produces.
struct Pass {
    path: Vec<BlochState>,
    cost: f64,
    lambda: Vec<[f64; 3]>,
    gradient: Vec<[f64; 2]>,
}

struct Problem<'a> {
    p: &'a ReservoirParams,
    rates: Vec<Rates>,
    times: Vec<f64>,
    target: Vec<BlochState>,
    s0: BlochState,
    theta: f64,
    dt: f64,
}

impl<'a> Problem<'a> {
    fn new(
        p: &'a ReservoirParams,
        table: &CoefficientTable,
        s0: &BlochState,
        oc: &OCConfig,
        mode: ModeFlag,
    ) -> Result<Self> {
        p.validate()?;
        oc.validate()?;
        s0.validate()?;
        table.check_grid(oc.dt, oc.t_max)?;
        let times = oc.times();
        let target = times
            .iter()
            .map(|&t| target_state(t, s0, p.omega0))
            .collect();
        Ok(Problem {
            p,
            rates: rates_on_grid(table, &times, mode)?,
            times,
            target,
            s0: *s0,
            theta: oc.theta,
            dt: oc.dt,
        })
    }

    fn cost(&self, controls: &[ControlInput]) -> Result<(Vec<BlochState>, f64)> {
        let path = heun_path(self.p, &self.rates, &self.s0, controls, self.dt)?;
        let ctl = ControlTrajectory {
            times: self.times.clone(),
            values: controls.to_vec(),
        };
        let j = total_cost(&path, &ctl, &self.target, self.theta, self.dt)?;
        Ok((path, j))
    }

    fn pass(&self, controls: &[ControlInput]) -> Result<Pass> {
        let (path, cost) = self.cost(controls)?;
        let n = path.len() - 1;
        let miss = (path[n] - self.target[n]).to_array();
        let terminal = miss.map(|v| 0.5 * self.theta * v);
        let (lambda, ubar) = heun_adjoint(self.p, &self.rates, &path, controls, terminal, self.dt);
        let gradient = controls
            .iter()
            .zip(&ubar)
            .enumerate()
            .map(|(k, (u, b))| {
                let w = self.dt * node_weight(k, n);
                [w * u.ux + b[0], w * u.uy + b[1]]
            })
            .collect();
        Ok(Pass {
            path,
            cost,
            lambda,
            gradient,
        })
    }
}

/// J and ∂J/∂(u_x, u_y)_k of the discretised problem.
pub fn cost_and_gradient(
    p: &ReservoirParams,
    table: &CoefficientTable,
    s0: &BlochState,
    oc: &OCConfig,
    control: &ControlTrajectory,
    mode: ModeFlag,
) -> Result<(f64, Vec<[f64; 2]>)> {
    let prob = Problem::new(p, table, s0, oc, mode)?;
    if control.values.len() != prob.times.len() {
        return Err(Error::validation(
            "control",
            "length does not match the grid",
        ));
    }
    let pass = prob.pass(&control.values)?;
    Ok((pass.cost, pass.gradient))
}

/// Forward–backward sweep from u ≡ 0. Non-convergence is reported through
/// `converged = false`, not as an error.
pub fn forward_backward_sweep(
    p: &ReservoirParams,
    table: &CoefficientTable,
    s0: &BlochState,
    oc: &OCConfig,
    mode: ModeFlag,
) -> Result<OCResult> {
    let prob = Problem::new(p, table, s0, oc, mode)?;
    let beta = oc.relaxation;
    let mut u = vec![ControlInput::ZERO; prob.times.len()];
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    let mut zero_control_cost = f64::NAN;
    let mut last = None;

    for iter in 1..=oc.max_iter {
        iterations = iter;
        let pass = prob.pass(&u)?;
        if iter == 1 {
            zero_control_cost = pass.cost;
        }
        history.push(pass.cost);
        let star: Vec<ControlInput> = pass
            .lambda
            .iter()
            .zip(&pass.path)
            .map(|(l, s)| stationarity_control(l, s))
            .collect();
        residual = u
            .iter()
            .zip(&star)
            .map(|(a, b)| (a.ux - b.ux).abs().max((a.uy - b.uy).abs()))
            .fold(0.0, f64::max);
        if residual <= oc.tol {
            converged = true;
            last = Some(pass);
            break;
        }
        if iter == oc.max_iter {
            last = Some(pass);
            break;
        }
        for (a, b) in u.iter_mut().zip(&star) {
            a.ux = (1.0 - beta) * a.ux + beta * b.ux;
            a.uy = (1.0 - beta) * a.uy + beta * b.uy;
        }
    }

    let pass = last.expect("at least one iteration runs");
    let monotone = history
        .windows(2)
        .all(|w| w[1] <= w[0] + 1e-12 * w[0].abs().max(1e-300));
    Ok(OCResult {
        control: ControlTrajectory {
            times: prob.times.clone(),
            values: u,
        },
        costate: CostateTrajectory {
            times: prob.times.clone(),
            lambda: pass.lambda,
        },
        state_path: pass.path,
        target_path: prob.target,
        cost: pass.cost,
        zero_control_cost,
        converged,
        iterations,
        history,
        monotone,
        residual,
        tol: oc.tol,
        theta: oc.theta,
    })
}

/// Worst relative mismatch between adjoint directional derivatives and
/// central finite differences with step `epsilon`, over
/// random directions about a random base control of amplitude 0.1.
pub fn gradient_check(
    p: &ReservoirParams,
    table: &CoefficientTable,
    s0: &BlochState,
    oc: &OCConfig,
    epsilon: f64,
    mode: ModeFlag,
) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::validation("epsilon", "must be > 0"));
    }
    let prob = Problem::new(p, table, s0, oc, mode)?;
    let mut rng = ChaCha8Rng::seed_from_u64(GRADIENT_CHECK_SEED);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let m = prob.times.len();
    let base: Vec<ControlInput> = (0..m)
        .map(|_| ControlInput::new(0.1 * normal(), 0.1 * normal()))
        .collect();
    let grad = prob.pass(&base)?.gradient;

    let mut worst: f64 = 0.0;
    for _ in 0..GRADIENT_CHECK_DIRECTIONS {
        let dir: Vec<[f64; 2]> = (0..m).map(|_| [normal(), normal()]).collect();
        let shifted = |h: f64| -> Vec<ControlInput> {
            base.iter()
                .zip(&dir)
                .map(|(u, d)| ControlInput::new(u.ux + h * d[0], u.uy + h * d[1]))
                .collect()
        };
        let plus = prob.cost(&shifted(epsilon))?.1;
        let minus = prob.cost(&shifted(-epsilon))?.1;
        let fd = (plus - minus) / (2.0 * epsilon);
        let adjoint: f64 = grad
            .iter()
            .zip(&dir)
            .map(|(g, d)| g[0] * d[0] + g[1] * d[1])
            .sum();
        let scale = adjoint.abs().max(fd.abs()).max(f64::MIN_POSITIVE);
        worst = worst.max((adjoint - fd).abs() / scale);
    }
    Ok(worst)
}

/// u(t, s) = stationarity_control(λ(t), s) with λ linearly interpolated from
/// a solved costate and held at its end values outside the horizon.
#[derive(Debug, Clone)]
pub struct FeedbackPolicy {
    dt: f64,
    lambda: Vec<[f64; 3]>,
}

impl FeedbackPolicy {
    pub fn from_result(res: &OCResult) -> Self {
        let times = &res.costate.times;
        let dt = if times.len() > 1 {
            times[1] - times[0]
        } else {
            1.0
        };
        FeedbackPolicy {
            dt,
            lambda: res.costate.lambda.clone(),
        }
    }

    pub fn lambda_at(&self, t: f64) -> [f64; 3] {
        let n = self.lambda.len();
        let pos = (t / self.dt).clamp(0.0, (n - 1) as f64);
        let i = pos.floor() as usize;
        if i + 1 >= n {
            return self.lambda[n - 1];
        }
        let f = pos - i as f64;
        let (a, b) = (self.lambda[i], self.lambda[i + 1]);
        if f == 0.0 {
            return a;
        }
        [
            a[0] + f * (b[0] - a[0]),
            a[1] + f * (b[1] - a[1]),
            a[2] + f * (b[2] - a[2]),
        ]
    }
}

impl ControlLaw for FeedbackPolicy {
    fn control(&self, t: f64, s: &BlochState) -> Result<ControlInput> {
        Ok(stationarity_control(&self.lambda_at(t), s))
    }
}
