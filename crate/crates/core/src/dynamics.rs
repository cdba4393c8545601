//! Closed-loop tracking-error dynamics of one agent and of two coupled agents.
//!
//! The state of each agent is its tracking error `z = [q − η, q̇ − η̇]`. With a
//! perfect inverse-dynamics feedforward the residual plant is a pure inertia,
//! so
//!
//! ```text
//! ż = Ā z − B L'ν + B H μ + B ζ,    Ā = A − B H − B L'
//! ```
//!
//! Both simulators advance the state on `substeps` sub-intervals of `dt` with
//! the exact zero-order-hold discretisation of `Ā`. Noise is redrawn on every
//! sub-interval with standard deviation `σ/√h`, so `σ` is the square root of
//! the continuous noise intensity and results do not depend on the substep.
//! Samples are recorded every `dt`.

use std::collections::BTreeMap;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::linalg::zoh;
use crate::signalgen::{Channel, GaussianSource, NoiseSpec, SeededStream, TargetSpec};
use crate::units::{DEFAULT_INERTIA, DEFAULT_VISCOELASTIC_RATIO, KAPPA0_NM_PER_RAD};
use crate::{Error, Result};

/// State norm above which a trial is declared diverged.
pub const DIVERGENCE_THRESHOLD: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    Soie,
    FixedHigh,
    FixedLow,
    Fixed(f64),
}

impl ControllerKind {
    pub fn label(&self) -> &'static str {
        match self {
            ControllerKind::Soie => "soie",
            ControllerKind::FixedHigh => "fixed_high",
            ControllerKind::FixedLow => "fixed_low",
            ControllerKind::Fixed(_) => "fixed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    /// kg·m²
    pub inertia: f64,
    pub controller: ControllerKind,
    pub lambda: f64,
    /// Position-sensing noise ν (rad).
    pub sensing: NoiseSpec,
    /// Motor noise standard deviation (Nm).
    pub motor_std: f64,
    /// Viscosity-to-stiffness ratio ρ (s).
    pub ratio: f64,
}

impl AgentConfig {
    pub fn new(lambda: f64, sensing: NoiseSpec) -> Result<Self> {
        let agent = Self {
            inertia: DEFAULT_INERTIA,
            controller: ControllerKind::Fixed(lambda),
            lambda,
            sensing,
            motor_std: 0.0,
            ratio: DEFAULT_VISCOELASTIC_RATIO,
        };
        agent.validate()?;
        Ok(agent)
    }

    pub fn with_controller(mut self, controller: ControllerKind) -> Self {
        self.controller = controller;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.inertia > 0.0) || !self.inertia.is_finite() {
            return Err(Error::Config(format!("inertia must be positive, got {}", self.inertia)));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Domain(format!("lambda {} outside [0, 1]", self.lambda)));
        }
        if !(self.motor_std >= 0.0) || !self.motor_std.is_finite() {
            return Err(Error::Config("motor noise std must be finite and >= 0".into()));
        }
        if !(self.ratio >= 0.0) || !self.ratio.is_finite() {
            return Err(Error::Config("viscoelastic ratio must be finite and >= 0".into()));
        }
        Ok(())
    }

    /// Position gain implied by λ (Nm/rad).
    pub fn stiffness(&self) -> f64 {
        self.lambda * KAPPA0_NM_PER_RAD
    }

    /// Feedback gain row `L' = λ·[κ0, ρκ0]`.
    pub fn feedback_gain(&self) -> Vector2<f64> {
        let s = self.stiffness();
        Vector2::new(s, self.ratio * s)
    }

    pub fn input_matrix(&self) -> Vector2<f64> {
        Vector2::new(0.0, 1.0 / self.inertia)
    }
}

/// Viscoelastic connection between the agents, `H = [stiffness, damping]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConnectionSpec {
    /// Nm/rad
    pub stiffness: f64,
    /// Nm·s/rad
    pub damping: f64,
}

impl ConnectionSpec {
    pub fn new(stiffness: f64, damping: f64) -> Result<Self> {
        let c = Self { stiffness, damping };
        c.validate()?;
        Ok(c)
    }

    pub fn spring(stiffness: f64) -> Result<Self> {
        Self::new(stiffness, 0.0)
    }

    pub fn none() -> Self {
        Self {
            stiffness: 0.0,
            damping: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x >= 0.0;
        if !ok(self.stiffness) || !ok(self.damping) {
            return Err(Error::Config("connection stiffness and damping must be >= 0".into()));
        }
        Ok(())
    }

    pub fn gain(&self) -> Vector2<f64> {
        Vector2::new(self.stiffness, self.damping)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Recording interval (s).
    pub dt: f64,
    /// Integration sub-intervals per recording interval.
    pub substeps: usize,
    /// Initial tracking error `[rad, rad/s]`.
    pub z0: [f64; 2],
    /// When false the target acceleration is not compensated and enters the error dynamics.
    pub perfect_feedforward: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            substeps: 10,
            z0: [0.0, 0.0],
            perfect_feedforward: true,
        }
    }
}

impl SimConfig {
    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn validate(&self, duration: f64) -> Result<usize> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if self.substeps == 0 {
            return Err(Error::Config("substeps must be >= 1".into()));
        }
        let steps = sample_count(duration, self.dt) - 1;
        if steps < 2 {
            return Err(Error::Config(format!(
                "duration {duration} s gives fewer than two steps of {} s",
                self.dt
            )));
        }
        Ok(steps)
    }

    fn substep(&self) -> f64 {
        self.dt / self.substeps as f64
    }
}

/// `floor(duration/dt) + 1`, robust to `duration/dt` landing just below an integer.
pub fn sample_count(duration: f64, dt: f64) -> usize {
    (duration / dt + 1e-9).floor() as usize + 1
}

/// Per-agent recorded series, all sampled every `dt`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AgentSeries {
    /// rad
    pub q: Vec<f64>,
    /// rad/s
    pub qdot: Vec<f64>,
    /// True target (rad).
    pub eta: Vec<f64>,
    /// Sensed target `η − ν̄` with ν̄ the noise averaged over the following interval (rad).
    pub eta_sensed: Vec<f64>,
    /// Interaction torque acting on this agent (Nm).
    pub tau: Vec<f64>,
}

impl AgentSeries {
    fn with_capacity(n: usize) -> Self {
        Self {
            q: Vec::with_capacity(n),
            qdot: Vec::with_capacity(n),
            eta: Vec::with_capacity(n),
            eta_sensed: Vec::with_capacity(n),
            tau: Vec::with_capacity(n),
        }
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    /// Tracking error `q − η` (rad).
    pub fn error(&self) -> Vec<f64> {
        self.q.iter().zip(&self.eta).map(|(q, e)| q - e).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub dt: f64,
    pub agents: Vec<AgentSeries>,
    pub metrics: BTreeMap<String, f64>,
}

impl TrialRecord {
    pub fn len(&self) -> usize {
        self.agents.first().map_or(0, AgentSeries::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn agent(&self, which: usize) -> Result<&AgentSeries> {
        self.agents
            .get(which)
            .ok_or_else(|| Error::Contract(format!("trial has no agent {which}")))
    }
}

/// `(Ā, B)` for one agent attached to a connection.
pub fn closed_loop_matrices(agent: &AgentConfig, conn: &ConnectionSpec) -> (Matrix2<f64>, Vector2<f64>) {
    let b = agent.input_matrix();
    let a = Matrix2::new(0.0, 1.0, 0.0, 0.0);
    let a_bar = a - b * conn.gain().transpose() - b * agent.feedback_gain().transpose();
    (a_bar, b)
}

/// Discretised loop of one agent plus its noise sources.
struct AgentLoop {
    phi: Matrix2<f64>,
    gamma: Vector2<f64>,
    stiffness: f64,
    inertia: f64,
    sensing: GaussianSource,
    motor: GaussianSource,
    z: Vector2<f64>,
    nu_acc: f64,
}

impl AgentLoop {
    fn new(agent: &AgentConfig, conn: &ConnectionSpec, sim: &SimConfig, stream: SeededStream) -> Self {
        let (a_bar, b) = closed_loop_matrices(agent, conn);
        let (phi, gamma) = zoh(&a_bar, &b, sim.substep());
        Self {
            phi,
            gamma,
            stiffness: agent.stiffness(),
            inertia: agent.inertia,
            sensing: stream.with_channel(Channel::Sensing).gaussian(agent.sensing),
            motor: stream.with_channel(Channel::Motor).gaussian(NoiseSpec {
                bias: 0.0,
                std: agent.motor_std,
            }),
            z: Vector2::new(sim.z0[0], sim.z0[1]),
            nu_acc: 0.0,
        }
    }

    /// Advances one substep under the generalised torque `haptic` (Nm) from the connection.
    #[inline]
    fn step(&mut self, haptic: f64, target_acc: f64, noise_scale: f64) {
        let nu = self.sensing.next_scaled(noise_scale);
        let zeta = self.motor.next_scaled(noise_scale);
        self.nu_acc += nu;
        let u = -self.stiffness * nu + haptic + zeta - self.inertia * target_acc;
        self.z = self.phi * self.z + self.gamma * u;
    }

    fn take_nu_mean(&mut self, substeps: usize) -> f64 {
        let m = self.nu_acc / substeps as f64;
        self.nu_acc = 0.0;
        m
    }
}

fn check_divergence(z: &Vector2<f64>, trial: u64, step: usize) -> Result<()> {
    if !z.norm().is_finite() || z.norm() > DIVERGENCE_THRESHOLD {
        return Err(Error::Diverged { trial, step });
    }
    Ok(())
}

fn target_acc(target: &TargetSpec, sim: &SimConfig, t: f64) -> f64 {
    if sim.perfect_feedforward {
        0.0
    } else {
        target.acceleration(t.min(target.duration)).unwrap_or(0.0)
    }
}

/// Single agent driven by exogenous haptic noise through the connection.
pub fn simulate_design_model(
    agent: &AgentConfig,
    conn: &ConnectionSpec,
    haptic: NoiseSpec,
    target: &TargetSpec,
    sim: &SimConfig,
    stream: SeededStream,
) -> Result<TrialRecord> {
    let n = sample_count(target.duration, sim.dt);
    let mut series = AgentSeries::with_capacity(n);
    let k = conn.stiffness;
    design_kernel(agent, conn, haptic, target, sim, stream, |i, z, nu_bar, mu_bar| {
        let t = i as f64 * sim.dt;
        let eta = target.position(t)?;
        series.q.push(eta + z[0]);
        series.qdot.push(target.velocity(t)? + z[1]);
        series.eta.push(eta);
        series.eta_sensed.push(eta - nu_bar);
        series.tau.push(k * (mu_bar - z[0]) - conn.damping * z[1]);
        Ok(())
    })?;
    Ok(TrialRecord {
        dt: sim.dt,
        agents: vec![series],
        metrics: BTreeMap::new(),
    })
}

/// Runs the design model and hands each recorded sample to `on_sample` as
/// `(index, z, ν̄, μ̄)`, where the noise means cover the interval after the sample.
pub(crate) fn design_kernel(
    agent: &AgentConfig,
    conn: &ConnectionSpec,
    haptic: NoiseSpec,
    target: &TargetSpec,
    sim: &SimConfig,
    stream: SeededStream,
    mut on_sample: impl FnMut(usize, &Vector2<f64>, f64, f64) -> Result<()>,
) -> Result<()> {
    agent.validate()?;
    conn.validate()?;
    let steps = sim.validate(target.duration)?;
    let h = sim.substep();
    let scale = 1.0 / h.sqrt();
    let mut lp = AgentLoop::new(agent, conn, sim, stream);
    let mut mu_src = stream.with_channel(Channel::Haptic).gaussian(haptic);
    let k = conn.stiffness;
    let mut last = (0.0, 0.0);

    for i in 0..=steps {
        let t = i as f64 * sim.dt;
        let z_rec = lp.z;
        if i < steps {
            let mut mu_acc = 0.0;
            for j in 0..sim.substeps {
                let mu = mu_src.next_scaled(scale);
                mu_acc += mu;
                let acc = target_acc(target, sim, t + j as f64 * h);
                lp.step(k * mu, acc, scale);
            }
            last = (lp.take_nu_mean(sim.substeps), mu_acc / sim.substeps as f64);
            check_divergence(&lp.z, stream.trial_index, i + 1)?;
        }
        on_sample(i, &z_rec, last.0, last.1)?;
    }
    Ok(())
}

/// Two agents exchanging the real connection torque `τ₁ = H(z₂ − z₁) = −τ₂`.
///
/// Agent `i` draws its noise from `stream.for_agent(i)`. Over each substep the
/// partner state is held at its value from the start of the substep.
pub fn simulate_coupled_pair(
    a1: &AgentConfig,
    a2: &AgentConfig,
    conn: &ConnectionSpec,
    target: &TargetSpec,
    sim: &SimConfig,
    stream: SeededStream,
) -> Result<TrialRecord> {
    a1.validate()?;
    a2.validate()?;
    conn.validate()?;
    let steps = sim.validate(target.duration)?;
    let n = steps + 1;
    let h = sim.substep();
    let scale = 1.0 / h.sqrt();
    let mut l1 = AgentLoop::new(a1, conn, sim, stream.for_agent(0));
    let mut l2 = AgentLoop::new(a2, conn, sim, stream.for_agent(1));
    let hg = conn.gain();
    let mut s1 = AgentSeries::with_capacity(n);
    let mut s2 = AgentSeries::with_capacity(n);
    let mut last = (0.0, 0.0);

    for i in 0..=steps {
        let t = i as f64 * sim.dt;
        let (z1, z2) = (l1.z, l2.z);
        if i < steps {
            for j in 0..sim.substeps {
                let acc = target_acc(target, sim, t + j as f64 * h);
                let f1 = hg.dot(&l2.z);
                let f2 = hg.dot(&l1.z);
                l1.step(f1, acc, scale);
                l2.step(f2, acc, scale);
            }
            last = (l1.take_nu_mean(sim.substeps), l2.take_nu_mean(sim.substeps));
            check_divergence(&l1.z, stream.trial_index, i + 1)?;
            check_divergence(&l2.z, stream.trial_index, i + 1)?;
        }
        let eta = target.position(t)?;
        let eta_dot = target.velocity(t)?;
        let tau1 = hg.dot(&(z2 - z1));
        for (s, z, nu_bar, tau) in [(&mut s1, z1, last.0, tau1), (&mut s2, z2, last.1, -tau1)] {
            s.q.push(eta + z[0]);
            s.qdot.push(eta_dot + z[1]);
            s.eta.push(eta);
            s.eta_sensed.push(eta - nu_bar);
            s.tau.push(tau);
        }
    }
    Ok(TrialRecord {
        dt: sim.dt,
        agents: vec![s1, s2],
        metrics: BTreeMap::new(),
    })
}

/// Target estimate `η̂ + τ/K_L` combining own sensing with the interaction torque.
pub fn decode_target(trial: &TrialRecord, agent_lambda: f64, which: usize) -> Result<Vec<f64>> {
    if agent_lambda == 0.0 {
        return Err(Error::DivisionByZero(
            "cannot decode the target with zero impedance".into(),
        ));
    }
    if !(0.0..=1.0).contains(&agent_lambda) {
        return Err(Error::Domain(format!("lambda {agent_lambda} outside [0, 1]")));
    }
    let s = trial.agent(which)?;
    let k_l = agent_lambda * KAPPA0_NM_PER_RAD;
    Ok(s.eta_sensed.iter().zip(&s.tau).map(|(e, t)| e + t / k_l).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::deg_to_rad;

    fn quiet_agent(lambda: f64) -> AgentConfig {
        AgentConfig::new(lambda, NoiseSpec::zero()).unwrap()
    }

    fn stream() -> SeededStream {
        SeededStream::new(11, 0, Channel::Sensing)
    }

    #[test]
    fn no_feedback_no_spring_is_a_double_integrator() {
        let (a, b) = closed_loop_matrices(&quiet_agent(0.0), &ConnectionSpec::none());
        assert_eq!(a, Matrix2::new(0.0, 1.0, 0.0, 0.0));
        assert_eq!(b, Vector2::new(0.0, 125.0));
    }

    #[test]
    fn stiffness_entry_adds_both_springs() {
        let agent = quiet_agent(17.32 / KAPPA0_NM_PER_RAD);
        let (a, _) = closed_loop_matrices(&agent, &ConnectionSpec::spring(17.32).unwrap());
        assert!((a[(1, 0)] + (17.32 + 17.32) / 0.008).abs() < 1e-9);
    }

    #[test]
    fn positive_lambda_is_stable() {
        for i in 1..=100 {
            let (a, _) = closed_loop_matrices(&quiet_agent(i as f64 / 100.0), &ConnectionSpec::none());
            assert!(crate::linalg::is_hurwitz(&a));
        }
    }

    #[test]
    fn equilibrium_stays_put() {
        let t = TargetSpec::robot_robot();
        let rec = simulate_design_model(
            &quiet_agent(0.4),
            &ConnectionSpec::spring(17.32).unwrap(),
            NoiseSpec::zero(),
            &t,
            &SimConfig::default(),
            stream(),
        )
        .unwrap();
        assert_eq!(rec.len(), 1001);
        for e in rec.agents[0].error() {
            assert!(e.abs() < 1e-9);
        }
    }

    #[test]
    fn initial_error_decays() {
        let t = TargetSpec::robot_robot();
        let sim = SimConfig {
            z0: [0.1, 0.0],
            ..SimConfig::default()
        };
        let rec = simulate_design_model(
            &quiet_agent(0.3),
            &ConnectionSpec::none(),
            NoiseSpec::zero(),
            &t,
            &sim,
            stream(),
        )
        .unwrap();
        let e = rec.agents[0].error();
        assert!(e.last().unwrap().abs() < 0.1);
        // Envelope: maxima over successive seconds shrink.
        let peaks: Vec<f64> = e
            .chunks(100)
            .map(|c| c.iter().fold(0.0_f64, |m, x| m.max(x.abs())))
            .collect();
        for w in peaks.windows(2) {
            assert!(w[1] <= w[0] + 1e-15);
        }
    }

    #[test]
    fn unstable_loop_reports_divergence() {
        // An initial velocity far past the threshold leaves the bound on the first step.
        let t = TargetSpec::robot_robot();
        let sim = SimConfig {
            z0: [0.0, 1e7],
            ..SimConfig::default()
        };
        let r = simulate_design_model(
            &quiet_agent(0.0),
            &ConnectionSpec::none(),
            NoiseSpec::zero(),
            &t,
            &sim,
            stream(),
        );
        assert!(matches!(r, Err(Error::Diverged { step: 1, .. })));
    }

    #[test]
    fn decoupled_pair_equals_two_design_runs() {
        let t = TargetSpec::robot_robot();
        let sim = SimConfig::default();
        let a1 = AgentConfig::new(0.3, NoiseSpec::from_degrees(2.0, 0.05).unwrap()).unwrap();
        let a2 = AgentConfig::new(0.6, NoiseSpec::from_degrees(5.0, 0.05).unwrap()).unwrap();
        let s = SeededStream::new(5, 3, Channel::Sensing);
        let pair = simulate_coupled_pair(&a1, &a2, &ConnectionSpec::none(), &t, &sim, s).unwrap();
        for (i, a) in [a1, a2].iter().enumerate() {
            let solo = simulate_design_model(
                a,
                &ConnectionSpec::none(),
                NoiseSpec::zero(),
                &t,
                &sim,
                s.for_agent(i as u8),
            )
            .unwrap();
            assert_eq!(pair.agents[i].q, solo.agents[0].q);
            assert_eq!(pair.agents[i].eta_sensed, solo.agents[0].eta_sensed);
        }
    }

    #[test]
    fn identical_agents_exchange_no_torque() {
        let t = TargetSpec::robot_robot();
        let a = AgentConfig::new(0.5, NoiseSpec::from_degrees(3.0, 0.0).unwrap()).unwrap();
        let rec = simulate_coupled_pair(
            &a,
            &a,
            &ConnectionSpec::spring(17.2).unwrap(),
            &t,
            &SimConfig::default(),
            stream(),
        )
        .unwrap();
        assert!(rec.agents[0].tau.iter().all(|&x| x == 0.0));
        for (a, b) in rec.agents[0].tau.iter().zip(&rec.agents[1].tau) {
            assert_eq!(*a, -*b);
        }
    }

    #[test]
    fn sharp_partner_helps_noisy_agent() {
        let t = TargetSpec::robot_robot();
        let sim = SimConfig::default();
        let sharp = AgentConfig::new(0.3, NoiseSpec::from_degrees(0.0, 0.05).unwrap()).unwrap();
        let noisy = AgentConfig::new(0.3, NoiseSpec::from_degrees(7.0, 0.05).unwrap()).unwrap();
        let s = SeededStream::new(99, 0, Channel::Sensing);
        let rms = |v: Vec<f64>| (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt();
        let coupled =
            simulate_coupled_pair(&sharp, &noisy, &ConnectionSpec::spring(17.2).unwrap(), &t, &sim, s).unwrap();
        let solo = simulate_coupled_pair(&sharp, &noisy, &ConnectionSpec::none(), &t, &sim, s).unwrap();
        assert!(rms(coupled.agents[1].error()) < rms(solo.agents[1].error()));
    }

    #[test]
    fn decoding_without_torque_returns_sensed_target() {
        let t = TargetSpec::robot_robot();
        let rec = simulate_design_model(
            &AgentConfig::new(0.5, NoiseSpec::from_degrees(1.0, 0.05).unwrap()).unwrap(),
            &ConnectionSpec::none(),
            NoiseSpec::zero(),
            &t,
            &SimConfig::default(),
            stream(),
        )
        .unwrap();
        let d = decode_target(&rec, 0.5, 0).unwrap();
        assert_eq!(d, rec.agents[0].eta_sensed);
        assert!(matches!(decode_target(&rec, 0.0, 0), Err(Error::DivisionByZero(_))));
    }

    #[test]
    fn decoding_shrinks_own_bias_when_partner_is_on_target() {
        let t = TargetSpec::robot_robot();
        let delta = deg_to_rad(5.0);
        let me = AgentConfig::new(0.4, NoiseSpec::new(delta, 0.0).unwrap()).unwrap();
        let partner = AgentConfig::new(0.4, NoiseSpec::zero()).unwrap();
        let rec = simulate_coupled_pair(
            &me,
            &partner,
            &ConnectionSpec::spring(17.2).unwrap(),
            &t,
            &SimConfig::default(),
            stream(),
        )
        .unwrap();
        let d = decode_target(&rec, 0.4, 0).unwrap();
        let n = d.len();
        let bias: f64 = (n / 2..n).map(|i| d[i] - rec.agents[0].eta[i]).sum::<f64>() / (n - n / 2) as f64;
        assert!(bias.abs() < delta);
    }
}
