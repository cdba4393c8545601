//! Target trajectories and reproducible noise substreams.
//!
//! Every random quantity in the crate is drawn from a [`SeededStream`], a
//! ChaCha stream keyed by `(master_seed, trial_index, channel, agent)`. The
//! key selects the ChaCha stream id, so two streams with different keys never
//! share state and a trial produces the same samples no matter which thread
//! runs it or in what order trials are scheduled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::units::{deg_to_rad, rad_to_deg};
use crate::{Error, Result};

/// Tolerance used when deciding that a start offset lies on a target zero.
const ZERO_TOLERANCE: f64 = 1e-9;

/// Multisine target `A·sin(α(t+t0))·sin(β(t+t0))`.
///
/// The amplitude is stored in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub amplitude: f64,
    pub alpha: f64,
    pub beta: f64,
    pub duration: f64,
    pub t0: f64,
}

impl TargetSpec {
    pub fn new(amplitude_deg: f64, alpha: f64, beta: f64, duration: f64) -> Result<Self> {
        let spec = Self {
            amplitude: deg_to_rad(amplitude_deg),
            alpha,
            beta,
            duration,
            t0: 0.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Robot-robot and human-human target: 18.5°, α = 2.031 rad/s, β = 1.093 rad/s, 10 s.
    pub fn robot_robot() -> Self {
        Self::new(18.5, 2.031, 1.093, 10.0).expect("valid constants")
    }

    /// Faster human-robot target: α = 3.04 rad/s, β = 2.51 rad/s, 20 s.
    pub fn human_robot() -> Self {
        Self::new(18.5, 3.04, 2.51, 20.0).expect("valid constants")
    }

    /// Returns a copy starting at `t0`, which must be a zero of the multisine in [0, 10] s.
    pub fn with_start_offset(mut self, t0: f64) -> Result<Self> {
        self.t0 = t0;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.amplitude, self.alpha, self.beta, self.duration, self.t0]
            .iter()
            .all(|x| x.is_finite());
        if !finite {
            return Err(Error::Config("target parameters must be finite".into()));
        }
        if self.amplitude <= 0.0 {
            return Err(Error::Config("target amplitude must be positive".into()));
        }
        if self.alpha <= 0.0 || self.beta <= 0.0 {
            return Err(Error::Config("target frequencies must be positive".into()));
        }
        if self.duration <= 0.0 {
            return Err(Error::Config("target duration must be positive".into()));
        }
        if !(0.0..=10.0).contains(&self.t0) {
            return Err(Error::Config(format!("start offset {} s outside [0, 10] s", self.t0)));
        }
        let shape = (self.alpha * self.t0).sin() * (self.beta * self.t0).sin();
        if shape.abs() > ZERO_TOLERANCE {
            return Err(Error::Config(format!(
                "start offset {} s is not a zero of the target",
                self.t0
            )));
        }
        Ok(())
    }

    fn check_time(&self, t: f64) -> Result<()> {
        // Allow the last sample of a grid whose spacing does not divide the duration exactly.
        if !(t >= 0.0 && t <= self.duration * (1.0 + 1e-12)) {
            return Err(Error::Domain(format!("time {t} s outside [0, {}] s", self.duration)));
        }
        Ok(())
    }

    fn phases(&self, t: f64) -> (f64, f64, f64, f64) {
        let u = t + self.t0;
        let (sa, ca) = (self.alpha * u).sin_cos();
        let (sb, cb) = (self.beta * u).sin_cos();
        (sa, ca, sb, cb)
    }

    /// Target position (rad) at trial time `t`.
    pub fn position(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        let (sa, _, sb, _) = self.phases(t);
        Ok(self.amplitude * sa * sb)
    }

    pub fn position_deg(&self, t: f64) -> Result<f64> {
        self.position(t).map(rad_to_deg)
    }

    /// Analytic first derivative (rad/s).
    pub fn velocity(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        let (sa, ca, sb, cb) = self.phases(t);
        Ok(self.amplitude * (self.alpha * ca * sb + self.beta * sa * cb))
    }

    /// Analytic second derivative (rad/s²), used by the feedforward term.
    pub fn acceleration(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        let (sa, ca, sb, cb) = self.phases(t);
        let (a, b) = (self.alpha, self.beta);
        Ok(self.amplitude * (-(a * a + b * b) * sa * sb + 2.0 * a * b * ca * cb))
    }
}

/// Free-function form of [`TargetSpec::position`] returning degrees.
pub fn target_position(spec: &TargetSpec, t: f64) -> Result<f64> {
    spec.position_deg(t)
}

/// All zeros of `sin(αt)·sin(βt)` on `[lo, hi]`, ascending.
///
/// The product vanishes exactly where either factor does, so each factor is
/// bracketed on a fine grid and refined by bisection to 1e-12 s.
pub fn multisine_zeros(alpha: f64, beta: f64, lo: f64, hi: f64) -> Vec<f64> {
    let mut zeros = Vec::new();
    for w in [alpha, beta] {
        if w <= 0.0 || !w.is_finite() {
            continue;
        }
        let f = |t: f64| (w * t).sin();
        let step = (std::f64::consts::PI / w) / 16.0;
        let n = ((hi - lo) / step).ceil() as usize;
        let mut t_prev = lo;
        let mut f_prev = f(lo);
        if f_prev == 0.0 {
            zeros.push(lo);
        }
        for i in 1..=n {
            let t = (lo + i as f64 * step).min(hi);
            let ft = f(t);
            if ft == 0.0 {
                zeros.push(t);
            } else if f_prev != 0.0 && f_prev.signum() != ft.signum() {
                zeros.push(bisect(&f, t_prev, t, 1e-12));
            }
            t_prev = t;
            f_prev = ft;
        }
    }
    zeros.sort_by(|a, b| a.total_cmp(b));
    zeros.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    zeros
}

fn bisect(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let mut fa = f(a);
    while b - a > tol {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if fa.signum() == fm.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Biased Gaussian noise `N(bias, std²)`. Stored in radians.
///
/// Sensing noise enters the sensed target as `η̂ = η − ν`, the sign that makes
/// `−B L' ν` appear in the closed-loop error dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub bias: f64,
    pub std: f64,
}

impl NoiseSpec {
    pub fn new(bias: f64, std: f64) -> Result<Self> {
        if !bias.is_finite() || !std.is_finite() || std < 0.0 {
            return Err(Error::Config(format!(
                "invalid noise (bias {bias}, std {std}); std must be finite and >= 0"
            )));
        }
        Ok(Self { bias, std })
    }

    pub fn from_degrees(bias_deg: f64, std_deg: f64) -> Result<Self> {
        Self::new(deg_to_rad(bias_deg), deg_to_rad(std_deg))
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn bias_deg(&self) -> f64 {
        rad_to_deg(self.bias)
    }

    pub fn std_deg(&self) -> f64 {
        rad_to_deg(self.std)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Sensing = 0,
    Haptic = 1,
    Motor = 2,
    StartOffset = 3,
    InitialState = 4,
}

/// Key of one independent random substream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeededStream {
    pub master_seed: u64,
    pub trial_index: u64,
    pub channel: Channel,
    pub agent: u8,
}

impl SeededStream {
    pub fn new(master_seed: u64, trial_index: u64, channel: Channel) -> Self {
        Self {
            master_seed,
            trial_index,
            channel,
            agent: 0,
        }
    }

    pub fn with_channel(self, channel: Channel) -> Self {
        Self { channel, ..self }
    }

    pub fn for_agent(self, agent: u8) -> Self {
        Self { agent, ..self }
    }

    fn stream_id(&self) -> u64 {
        debug_assert!(self.trial_index < (1 << 52), "trial index too large");
        debug_assert!(self.agent < 16);
        (self.trial_index << 12) | ((self.channel as u64) << 4) | u64::from(self.agent & 0x0f)
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_id());
        rng
    }

    pub fn gaussian(&self, spec: NoiseSpec) -> GaussianSource {
        GaussianSource {
            rng: self.rng(),
            mean: spec.bias,
            std: spec.std,
        }
    }
}

/// Endless sequence of draws from one Gaussian on one substream.
#[derive(Debug, Clone)]
pub struct GaussianSource {
    rng: ChaCha8Rng,
    mean: f64,
    std: f64,
}

impl GaussianSource {
    /// Draws with the standard deviation multiplied by `scale`.
    #[inline]
    pub fn next_scaled(&mut self, scale: f64) -> f64 {
        if self.std == 0.0 {
            return self.mean;
        }
        let x: f64 = self.rng.sample(StandardNormal);
        self.mean + self.std * scale * x
    }

    #[inline]
    pub fn next_sample(&mut self) -> f64 {
        self.next_scaled(1.0)
    }
}

/// `n` independent draws from `N(bias, std²)` in radians.
pub fn sample_noise(spec: NoiseSpec, stream: SeededStream, n: usize) -> Vec<f64> {
    let mut src = stream.gaussian(spec);
    (0..n).map(|_| src.next_sample()).collect()
}

/// Picks one start offset uniformly from a precomputed list of target zeros.
pub fn sample_start_offset(stream: SeededStream, zeros: &[f64]) -> Result<f64> {
    if zeros.is_empty() {
        return Err(Error::Config("no target zeros to draw a start offset from".into()));
    }
    let mut rng = stream.with_channel(Channel::StartOffset).rng();
    Ok(zeros[rng.random_range(0..zeros.len())])
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn target_starts_at_zero() {
        let t = TargetSpec::robot_robot();
        assert_eq!(target_position(&t, 0.0).unwrap(), 0.0);
        let fast = TargetSpec::human_robot();
        assert_eq!(target_position(&fast, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn target_half_second_matches_high_precision_value() {
        // 18.5·sin(2.031·0.5)·sin(1.093·0.5) evaluated with 30-digit arithmetic.
        let t = TargetSpec::robot_robot();
        let v = target_position(&t, 0.5).unwrap();
        assert!((v - 8.169_826_766_176_128).abs() < 1e-9, "{v}");
    }

    #[test]
    fn target_rejects_out_of_range_time() {
        let t = TargetSpec::robot_robot();
        assert!(matches!(t.position(-0.1), Err(Error::Domain(_))));
        assert!(matches!(t.position(10.5), Err(Error::Domain(_))));
    }

    #[test]
    fn analytic_derivatives_match_central_differences() {
        let t = TargetSpec::robot_robot().with_start_offset(PI / 2.031).unwrap();
        let h = 1e-6;
        for &s in &[0.3, 1.7, 4.2, 8.9] {
            let fd_v = (t.position(s + h).unwrap() - t.position(s - h).unwrap()) / (2.0 * h);
            let v = t.velocity(s).unwrap();
            assert!((fd_v - v).abs() <= 1e-6 * v.abs().max(1e-3), "v at {s}");
            let fd_a = (t.velocity(s + h).unwrap() - t.velocity(s - h).unwrap()) / (2.0 * h);
            let a = t.acceleration(s).unwrap();
            assert!((fd_a - a).abs() <= 1e-6 * a.abs().max(1e-3), "a at {s}");
        }
    }

    #[test]
    fn zeros_include_origin_and_first_alpha_root() {
        let zeros = multisine_zeros(2.031, 1.093, 0.0, 10.0);
        assert_eq!(zeros[0], 0.0);
        assert!(zeros.iter().any(|z| (z - PI / 2.031).abs() < 1e-10));
        assert!(zeros.iter().any(|z| (z - PI / 1.093).abs() < 1e-10));
        // ⌊10·α/π⌋ + ⌊10·β/π⌋ roots after the origin.
        assert_eq!(zeros.len(), 1 + 6 + 3);
        for z in &zeros {
            assert!(((2.031 * z).sin() * (1.093 * z).sin()).abs() < 1e-9);
        }
    }

    #[test]
    fn start_offsets_are_zeros_and_deterministic() {
        let zeros = multisine_zeros(2.031, 1.093, 0.0, 10.0);
        let target = TargetSpec::robot_robot();
        for trial in 0..50 {
            let s = SeededStream::new(17, trial, Channel::StartOffset);
            let t0 = sample_start_offset(s, &zeros).unwrap();
            assert_eq!(t0, sample_start_offset(s, &zeros).unwrap());
            let shifted = target.with_start_offset(t0).unwrap();
            assert!(shifted.position(0.0).unwrap().abs() < 1e-9 * target.amplitude);
        }
    }

    #[test]
    fn empty_zero_list_is_a_configuration_error() {
        let s = SeededStream::new(1, 0, Channel::StartOffset);
        assert!(matches!(sample_start_offset(s, &[]), Err(Error::Config(_))));
    }

    #[test]
    fn degenerate_noise_is_the_bias() {
        let s = SeededStream::new(3, 0, Channel::Sensing);
        assert_eq!(sample_noise(NoiseSpec::zero(), s, 3), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn noise_statistics_match_specification() {
        let spec = NoiseSpec::from_degrees(7.01, 0.05).unwrap();
        let s = SeededStream::new(2024, 5, Channel::Sensing);
        let xs: Vec<f64> = sample_noise(spec, s, 100_000).into_iter().map(rad_to_deg).collect();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((mean - 7.01).abs() < 0.001, "{mean}");
        assert!((sd - 0.05).abs() < 0.002, "{sd}");

        let sharp = NoiseSpec::from_degrees(2.56, 0.05).unwrap();
        let ys = sample_noise(sharp, s.with_channel(Channel::Haptic), 100_000);
        let m = rad_to_deg(ys.iter().sum::<f64>() / ys.len() as f64);
        assert!((m - 2.56).abs() < 0.001);
    }

    #[test]
    fn streams_are_order_independent_and_distinct() {
        let spec = NoiseSpec::from_degrees(0.0, 1.0).unwrap();
        let a = SeededStream::new(9, 4, Channel::Sensing);
        let first = sample_noise(spec, a, 64);
        // Drawing other streams in between must not perturb stream `a`.
        let _ = sample_noise(spec, a.with_channel(Channel::Motor), 1000);
        let _ = sample_noise(spec, SeededStream::new(9, 5, Channel::Sensing), 1000);
        assert_eq!(first, sample_noise(spec, a, 64));
        assert_ne!(first, sample_noise(spec, a.for_agent(1), 64));
        assert_ne!(first, sample_noise(spec, a.with_channel(Channel::Haptic), 64));
        assert_ne!(
            first,
            sample_noise(spec, SeededStream::new(10, 4, Channel::Sensing), 64)
        );
    }

    #[test]
    fn off_zero_start_offset_is_rejected() {
        assert!(TargetSpec::robot_robot().with_start_offset(0.3).is_err());
        assert!(TargetSpec::robot_robot().with_start_offset(11.0).is_err());
    }
}
