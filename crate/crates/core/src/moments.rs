//! Mean and covariance of the tracking error, analytic and Monte Carlo, and the
//! deterministic cost built on them.
//!
//! For `ż = Ā z + B c + B w` with constant drift input `c` and white noise of
//! intensity `W = B B' (s²σν² + k²σμ² + σζ²)`, the moments obey
//! `ṁ = Ā m + B c` and `Ṗ = Ā P + P Ā' + W`. [`propagate_moments`] steps these
//! with their exact discretisation, so its fixed point is the Lyapunov solution
//! regardless of the step size.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use rayon::prelude::*;

use crate::dynamics::{closed_loop_matrices, design_kernel, AgentConfig, ConnectionSpec, SimConfig};
use crate::linalg::{is_hurwitz, sym_min_eigenvalue, symmetrize, van_loan_noise, zoh};
use crate::signalgen::{Channel, NoiseSpec, SeededStream, TargetSpec};
use crate::units::DEG_PER_RAD;
use crate::{Error, Result};

const PSD_TOLERANCE: f64 = 1e-10;
const MC_CHUNK: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateMoments {
    pub m: Vector2<f64>,
    pub p: Matrix2<f64>,
}

impl StateMoments {
    pub fn zero() -> Self {
        Self {
            m: Vector2::zeros(),
            p: Matrix2::zeros(),
        }
    }

    pub fn new(m: Vector2<f64>, p: Matrix2<f64>) -> Result<Self> {
        let s = Self { m, p };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if (self.p[(0, 1)] - self.p[(1, 0)]).abs() > 1e-12 {
            return Err(Error::Contract("covariance is not symmetric".into()));
        }
        if sym_min_eigenvalue(&self.p) < -PSD_TOLERANCE {
            return Err(Error::Contract("covariance is not positive semi-definite".into()));
        }
        Ok(())
    }
}

/// Quadratic cost weights.
///
/// `error_scale` converts the state before weighting: with `180/π` the error
/// terms are evaluated in degrees and degrees per second.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostWeights {
    pub q: Matrix2<f64>,
    pub q_terminal: Matrix2<f64>,
    pub r: f64,
    pub error_scale: f64,
}

impl CostWeights {
    pub fn new(q: Matrix2<f64>, q_terminal: Matrix2<f64>, r: f64) -> Result<Self> {
        let w = Self {
            q,
            q_terminal,
            r,
            error_scale: 1.0,
        };
        w.validate()?;
        Ok(w)
    }

    /// `Q = diag(1, 0.01)` on errors in degrees, `R = 4.02`, no terminal weight.
    pub fn nominal() -> Self {
        Self {
            q: Matrix2::new(1.0, 0.0, 0.0, 0.01),
            q_terminal: Matrix2::zeros(),
            r: 4.02,
            error_scale: DEG_PER_RAD,
        }
    }

    pub fn with_r(mut self, r: f64) -> Self {
        self.r = r;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, m) in [("Q", &self.q), ("Q_T", &self.q_terminal)] {
            if !m.iter().all(|x| x.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite")));
            }
            if (m[(0, 1)] - m[(1, 0)]).abs() > 1e-12 || sym_min_eigenvalue(m) < -1e-12 {
                return Err(Error::Config(format!("{name} must be symmetric PSD")));
            }
        }
        if !(self.r >= 0.0) || !self.r.is_finite() {
            return Err(Error::Config(format!("R must be finite and >= 0, got {}", self.r)));
        }
        if !(self.error_scale > 0.0) || !self.error_scale.is_finite() {
            return Err(Error::Config("error scale must be positive".into()));
        }
        Ok(())
    }

    fn scaled(&self, m: &Matrix2<f64>) -> Matrix2<f64> {
        m * (self.error_scale * self.error_scale)
    }
}

/// Scalar drift input `−s δν + k δμ` and diffusion intensity of one agent.
pub fn noise_inputs(agent: &AgentConfig, conn: &ConnectionSpec, haptic: NoiseSpec) -> (f64, Matrix2<f64>) {
    let s = agent.stiffness();
    let k = conn.stiffness;
    let c = -s * agent.sensing.bias + k * haptic.bias;
    let var = (s * agent.sensing.std).powi(2) + (k * haptic.std).powi(2) + agent.motor_std.powi(2);
    let b = agent.input_matrix();
    (c, b * b.transpose() * var)
}

fn step_count(dt: f64, horizon: f64) -> Result<usize> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Config(format!("dt must be positive, got {dt}")));
    }
    if !(horizon >= dt) {
        return Err(Error::Config(format!("horizon {horizon} s shorter than dt {dt} s")));
    }
    Ok((horizon / dt + 1e-9).floor() as usize)
}

/// Moments at `t = 0, dt, …, N·dt` with `N = ⌊T/dt⌋`.
pub fn propagate_moments(
    agent: &AgentConfig,
    conn: &ConnectionSpec,
    haptic: NoiseSpec,
    init: StateMoments,
    dt: f64,
    horizon: f64,
) -> Result<Vec<StateMoments>> {
    agent.validate()?;
    conn.validate()?;
    init.validate()?;
    let n = step_count(dt, horizon)?;
    let (a_bar, b) = closed_loop_matrices(agent, conn);
    let (c, w) = noise_inputs(agent, conn, haptic);
    let (phi, gamma) = zoh(&a_bar, &b, dt);
    let qd = van_loan_noise(&a_bar, &w, dt);
    let drift = gamma * c;

    let mut out = Vec::with_capacity(n + 1);
    let mut cur = init;
    out.push(cur);
    for i in 1..=n {
        let m = phi * cur.m + drift;
        let p = symmetrize(&(phi * cur.p * phi.transpose() + qd));
        if !m.iter().chain(p.iter()).all(|x| x.is_finite()) || sym_min_eigenvalue(&p) < -PSD_TOLERANCE {
            return Err(Error::Numerical(format!(
                "covariance lost positive semi-definiteness at step {i}; try a smaller dt"
            )));
        }
        cur = StateMoments { m, p };
        out.push(cur);
    }
    Ok(out)
}

/// Moments with the mean split into the part driven by the initial state and
/// own sensing bias, and the part driven by the haptic bias alone.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitMoments {
    pub own: Vec<StateMoments>,
    pub haptic_mean: Vec<Vector2<f64>>,
}

impl SplitMoments {
    /// Full moments for a given sign of the haptic bias.
    pub fn combined(&self, sign: f64) -> Vec<StateMoments> {
        self.own
            .iter()
            .zip(&self.haptic_mean)
            .map(|(s, h)| StateMoments {
                m: s.m + h * sign,
                p: s.p,
            })
            .collect()
    }
}

/// Same recursion as [`propagate_moments`], keeping the haptic-bias response
/// separate so both signs of the bias can be evaluated from one pass.
pub fn propagate_split(
    agent: &AgentConfig,
    conn: &ConnectionSpec,
    haptic: NoiseSpec,
    init: StateMoments,
    dt: f64,
    horizon: f64,
) -> Result<SplitMoments> {
    agent.validate()?;
    conn.validate()?;
    init.validate()?;
    let n = step_count(dt, horizon)?;
    let (a_bar, b) = closed_loop_matrices(agent, conn);
    let (_, w) = noise_inputs(agent, conn, haptic);
    let (phi, gamma) = zoh(&a_bar, &b, dt);
    let qd = van_loan_noise(&a_bar, &w, dt);
    let own_drift = gamma * (-agent.stiffness() * agent.sensing.bias);
    let hap_drift = gamma * (conn.stiffness * haptic.bias);

    let mut own = Vec::with_capacity(n + 1);
    let mut haptic_mean = Vec::with_capacity(n + 1);
    let mut cur = init;
    let mut h = Vector2::zeros();
    own.push(cur);
    haptic_mean.push(h);
    for i in 1..=n {
        let m = phi * cur.m + own_drift;
        h = phi * h + hap_drift;
        let p = symmetrize(&(phi * cur.p * phi.transpose() + qd));
        if !m.iter().chain(h.iter()).chain(p.iter()).all(|x| x.is_finite()) || sym_min_eigenvalue(&p) < -PSD_TOLERANCE {
            return Err(Error::Numerical(format!(
                "covariance lost positive semi-definiteness at step {i}; try a smaller dt"
            )));
        }
        cur = StateMoments { m, p };
        own.push(cur);
        haptic_mean.push(h);
    }
    Ok(SplitMoments { own, haptic_mean })
}

/// Cost averaged over both signs of the haptic bias:
/// the mean terms become `m_o'Q m_o + m_h'Q m_h`.
pub fn sign_symmetric_cost(split: &SplitMoments, lambda: f64, weights: &CostWeights, dt: f64) -> Result<f64> {
    let last = split
        .own
        .last()
        .ok_or_else(|| Error::Contract("empty moment trajectory".into()))?;
    weights.validate()?;
    let q = weights.scaled(&weights.q);
    let qt = weights.scaled(&weights.q_terminal);
    let effort = weights.r * lambda * lambda;
    let running: f64 = split.own[1..]
        .iter()
        .zip(&split.haptic_mean[1..])
        .map(|(s, h)| (s.m.dot(&(q * s.m)) + h.dot(&(q * h)) + effort + (q * s.p).trace()) * dt)
        .sum();
    let h = split.haptic_mean.last().expect("same length");
    Ok(running + last.m.dot(&(qt * last.m)) + h.dot(&(qt * h)) + (qt * last.p).trace())
}

/// Solves `Ā P + P Ā' + W = 0` for symmetric `P`.
pub fn lyapunov_steady_state(a_bar: &Matrix2<f64>, w: &Matrix2<f64>) -> Result<Matrix2<f64>> {
    if !is_hurwitz(a_bar) {
        return Err(Error::NoSteadyState(
            "closed-loop matrix is not Hurwitz; the covariance grows without bound".into(),
        ));
    }
    let a = a_bar;
    // Unknowns (p00, p01, p11).
    let lhs = Matrix3::new(
        2.0 * a[(0, 0)],
        2.0 * a[(0, 1)],
        0.0,
        a[(1, 0)],
        a[(0, 0)] + a[(1, 1)],
        a[(0, 1)],
        0.0,
        2.0 * a[(1, 0)],
        2.0 * a[(1, 1)],
    );
    let rhs = -Vector3::new(w[(0, 0)], 0.5 * (w[(0, 1)] + w[(1, 0)]), w[(1, 1)]);
    let x = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("singular Lyapunov system".into()))?;
    Ok(Matrix2::new(x[0], x[1], x[1], x[2]))
}

/// `Σ_{i≥1} [m'Qm + Rλ² + tr(QP)]·dt + m_N'Q_T m_N + tr(Q_T P_N)`.
pub fn deterministic_cost(traj: &[StateMoments], lambda: f64, weights: &CostWeights, dt: f64) -> Result<f64> {
    let last = traj
        .last()
        .ok_or_else(|| Error::Contract("empty moment trajectory".into()))?;
    weights.validate()?;
    let q = weights.scaled(&weights.q);
    let qt = weights.scaled(&weights.q_terminal);
    let effort = weights.r * lambda * lambda;
    let running: f64 = traj[1..]
        .iter()
        .map(|s| (s.m.dot(&(q * s.m)) + effort + (q * s.p).trace()) * dt)
        .sum();
    Ok(running + last.m.dot(&(qt * last.m)) + (qt * last.p).trace())
}

/// Monte Carlo moment estimates with their standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct McMoments {
    pub moments: Vec<StateMoments>,
    pub mean_se: Vec<Vector2<f64>>,
    /// Standard errors of the entries of P (same layout as P).
    pub cov_se: Vec<Matrix2<f64>>,
    pub n_trials: usize,
}

/// Per-step sums of deviations `d = z − c` from a deterministic reference `c`.
#[derive(Clone)]
struct Sums {
    d: Vec<[f64; 2]>,
    dd: Vec<[f64; 3]>,
    d4: Vec<[f64; 3]>,
}

impl Sums {
    fn new(n: usize) -> Self {
        Self {
            d: vec![[0.0; 2]; n],
            dd: vec![[0.0; 3]; n],
            d4: vec![[0.0; 3]; n],
        }
    }

    fn add_sample(&mut self, i: usize, d: &Vector2<f64>) {
        let (x, y) = (d[0], d[1]);
        self.d[i][0] += x;
        self.d[i][1] += y;
        self.dd[i][0] += x * x;
        self.dd[i][1] += x * y;
        self.dd[i][2] += y * y;
        self.d4[i][0] += x * x * x * x;
        self.d4[i][1] += x * x * y * y;
        self.d4[i][2] += y * y * y * y;
    }

    fn merge(&mut self, other: &Sums) {
        for i in 0..self.d.len() {
            for k in 0..2 {
                self.d[i][k] += other.d[i][k];
            }
            for k in 0..3 {
                self.dd[i][k] += other.dd[i][k];
                self.d4[i][k] += other.d4[i][k];
            }
        }
    }
}

/// Runs `n_trials` seeded design-model trials and estimates the moments per step.
///
/// Trial `i` uses stream `(master_seed, i)`. Sums are accumulated in fixed
/// chunks of trials and merged in chunk order, so the result does not depend
/// on the thread count. The covariance divisor is `n`.
#[allow(clippy::too_many_arguments)]
pub fn mc_estimate_moments(
    agent: &AgentConfig,
    conn: &ConnectionSpec,
    haptic: NoiseSpec,
    init: StateMoments,
    sim: &SimConfig,
    horizon: f64,
    n_trials: usize,
    master_seed: u64,
) -> Result<McMoments> {
    if n_trials < 2 {
        return Err(Error::Config("Monte Carlo needs at least two trials".into()));
    }
    init.validate()?;
    // Only the duration matters; with perfect feedforward the target never enters the error.
    let target = TargetSpec {
        amplitude: 1.0,
        alpha: 1.0,
        beta: 1.0,
        duration: horizon,
        t0: 0.0,
    };
    let sim = SimConfig {
        perfect_feedforward: true,
        ..*sim
    };
    let steps = sim.validate(horizon)?;
    let n = steps + 1;

    // Noise-free reference trajectory from the same kernel.
    let quiet_agent = AgentConfig {
        sensing: NoiseSpec {
            std: 0.0,
            ..agent.sensing
        },
        motor_std: 0.0,
        ..*agent
    };
    let quiet_haptic = NoiseSpec { std: 0.0, ..haptic };
    let mut reference = Vec::with_capacity(n);
    let quiet_sim = SimConfig {
        z0: [init.m[0], init.m[1]],
        ..sim
    };
    design_kernel(
        &quiet_agent,
        conn,
        quiet_haptic,
        &target,
        &quiet_sim,
        SeededStream::new(master_seed, 0, Channel::Sensing),
        |_, z, _, _| {
            reference.push(*z);
            Ok(())
        },
    )?;

    let chol = init_factor(&init.p)?;
    let chunks: Vec<(usize, usize)> = (0..n_trials)
        .step_by(MC_CHUNK)
        .map(|s| (s, (s + MC_CHUNK).min(n_trials)))
        .collect();
    let partials: Vec<Result<Sums>> = chunks
        .par_iter()
        .map(|&(lo, hi)| {
            let mut sums = Sums::new(n);
            for trial in lo..hi {
                let stream = SeededStream::new(master_seed, trial as u64, Channel::Sensing);
                let z0 = init.m + chol * standard_pair(stream.with_channel(Channel::InitialState));
                let trial_sim = SimConfig {
                    z0: [z0[0], z0[1]],
                    ..sim
                };
                design_kernel(agent, conn, haptic, &target, &trial_sim, stream, |i, z, _, _| {
                    sums.add_sample(i, &(z - reference[i]));
                    Ok(())
                })?;
            }
            Ok(sums)
        })
        .collect();
    let mut total = Sums::new(n);
    for p in partials {
        total.merge(&p?);
    }

    let nf = n_trials as f64;
    let mut moments = Vec::with_capacity(n);
    let mut mean_se = Vec::with_capacity(n);
    let mut cov_se = Vec::with_capacity(n);
    for (i, base) in reference.iter().enumerate().take(n) {
        let dm = Vector2::new(total.d[i][0] / nf, total.d[i][1] / nf);
        let raw = Matrix2::new(
            total.dd[i][0] / nf,
            total.dd[i][1] / nf,
            total.dd[i][1] / nf,
            total.dd[i][2] / nf,
        );
        let p = symmetrize(&(raw - dm * dm.transpose()));
        moments.push(StateMoments { m: base + dm, p });
        mean_se.push(Vector2::new((p[(0, 0)] / nf).sqrt(), (p[(1, 1)] / nf).sqrt()));
        // Var(d_a d_b) ≈ E[d_a² d_b²] − P_ab², with d centred on the exact mean.
        let v = |e4: f64, pab: f64| ((e4 / nf - pab * pab).max(0.0) / nf).sqrt();
        let se01 = v(total.d4[i][1], p[(0, 1)]);
        cov_se.push(Matrix2::new(
            v(total.d4[i][0], p[(0, 0)]),
            se01,
            se01,
            v(total.d4[i][2], p[(1, 1)]),
        ));
    }
    Ok(McMoments {
        moments,
        mean_se,
        cov_se,
        n_trials,
    })
}

/// Lower-triangular factor of a PSD 2×2 matrix (zero rows allowed).
fn init_factor(p: &Matrix2<f64>) -> Result<Matrix2<f64>> {
    let l00 = p[(0, 0)].max(0.0).sqrt();
    let l10 = if l00 > 0.0 { p[(1, 0)] / l00 } else { 0.0 };
    let r = p[(1, 1)] - l10 * l10;
    if r < -PSD_TOLERANCE {
        return Err(Error::Contract("initial covariance is not PSD".into()));
    }
    Ok(Matrix2::new(l00, 0.0, l10, r.max(0.0).sqrt()))
}

fn standard_pair(stream: SeededStream) -> Vector2<f64> {
    let mut g = stream.gaussian(NoiseSpec { bias: 0.0, std: 1.0 });
    Vector2::new(g.next_sample(), g.next_sample())
}
