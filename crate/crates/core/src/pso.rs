//! Bounded global-best particle swarm optimisation and the fit of the human
//! model hyperparameters (sharp and noisy sensing bias, effort weight).

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::moments::propagate_split;
use crate::signalgen::NoiseSpec;
use crate::soie::{optimal_lambda, partner_haptic, DesignConfig};
use crate::units::rad_to_deg;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsoConfig {
    pub particles: usize,
    pub iterations: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    /// Per-dimension `(lo, hi)`.
    pub bounds: Vec<(f64, f64)>,
    /// Maximum speed as a fraction of each dimension's width.
    pub velocity_clamp: f64,
    pub seed: u64,
}

impl PsoConfig {
    pub fn new(bounds: Vec<(f64, f64)>, seed: u64) -> Self {
        Self {
            particles: 30,
            iterations: 200,
            inertia: 0.729,
            cognitive: 1.49445,
            social: 1.49445,
            bounds,
            velocity_clamp: 0.2,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.particles < 2 {
            return Err(Error::Config("PSO needs at least two particles".into()));
        }
        if self.bounds.is_empty() {
            return Err(Error::Config("PSO needs at least one dimension".into()));
        }
        for (i, &(lo, hi)) in self.bounds.iter().enumerate() {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::Config(format!("PSO bound {i} must satisfy lo < hi")));
            }
        }
        if !(self.velocity_clamp > 0.0) {
            return Err(Error::Config("velocity clamp must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsoResult {
    pub x: Vec<f64>,
    pub f: f64,
    /// Global-best value after initialisation and after each iteration.
    pub trace: Vec<f64>,
}

fn finite_or_inf(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

/// Reflects `x` back into `[lo, hi]`, flipping the velocity on a bounce.
fn reflect(x: &mut f64, v: &mut f64, lo: f64, hi: f64) {
    if *x < lo {
        *x = lo + (lo - *x);
        *v = -*v;
    } else if *x > hi {
        *x = hi - (*x - hi);
        *v = -*v;
    }
    *x = x.clamp(lo, hi);
}

/// Minimises `objective` over the box in `config.bounds`.
///
/// Evaluations within an iteration may run in parallel; all random numbers
/// are drawn on the calling thread, so results depend only on the seed.
pub fn pso_minimize<F>(objective: F, config: &PsoConfig) -> Result<PsoResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    config.validate()?;
    let dim = config.bounds.len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let vmax: Vec<f64> = config
        .bounds
        .iter()
        .map(|(lo, hi)| config.velocity_clamp * (hi - lo))
        .collect();

    let mut pos: Vec<Vec<f64>> = (0..config.particles)
        .map(|_| {
            config
                .bounds
                .iter()
                .map(|&(lo, hi)| rng.random_range(lo..=hi))
                .collect()
        })
        .collect();
    let mut vel: Vec<Vec<f64>> = (0..config.particles)
        .map(|_| vmax.iter().map(|&m| rng.random_range(-m..=m)).collect())
        .collect();

    let evaluate = |pos: &[Vec<f64>]| -> Vec<f64> { pos.par_iter().map(|p| finite_or_inf(objective(p))).collect() };

    let vals = evaluate(&pos);
    if vals.iter().all(|v| v.is_infinite()) {
        return Err(Error::AllCandidatesRejected(0));
    }
    let mut pbest = pos.clone();
    let mut pbest_f = vals;
    let mut g = argmin(&pbest_f);
    let mut gbest = pbest[g].clone();
    let mut gbest_f = pbest_f[g];
    let mut trace = Vec::with_capacity(config.iterations + 1);
    trace.push(gbest_f);

    for it in 1..=config.iterations {
        for i in 0..config.particles {
            for d in 0..dim {
                let r1: f64 = rng.random();
                let r2: f64 = rng.random();
                let v = config.inertia * vel[i][d]
                    + config.cognitive * r1 * (pbest[i][d] - pos[i][d])
                    + config.social * r2 * (gbest[d] - pos[i][d]);
                vel[i][d] = v.clamp(-vmax[d], vmax[d]);
                pos[i][d] += vel[i][d];
                let (lo, hi) = config.bounds[d];
                reflect(&mut pos[i][d], &mut vel[i][d], lo, hi);
            }
        }
        let vals = evaluate(&pos);
        if vals.iter().all(|v| v.is_infinite()) {
            return Err(Error::AllCandidatesRejected(it));
        }
        for i in 0..config.particles {
            if vals[i] < pbest_f[i] {
                pbest_f[i] = vals[i];
                pbest[i].clone_from(&pos[i]);
            }
        }
        g = argmin(&pbest_f);
        if pbest_f[g] < gbest_f {
            gbest_f = pbest_f[g];
            gbest.clone_from(&pbest[g]);
        }
        trace.push(gbest_f);
    }
    Ok(PsoResult {
        x: gbest,
        f: gbest_f,
        trace,
    })
}

fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x < v[best] {
            best = i;
        }
    }
    best
}

/// Sensory condition of a pair: own noise, then partner noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Condition {
    SS,
    SN,
    NS,
    NN,
}

impl Condition {
    pub const ALL: [Condition; 4] = [Condition::SS, Condition::SN, Condition::NS, Condition::NN];

    pub fn own_noisy(self) -> bool {
        matches!(self, Condition::NS | Condition::NN)
    }

    pub fn partner_noisy(self) -> bool {
        matches!(self, Condition::SN | Condition::NN)
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Condition::SS => "SS",
            Condition::SN => "SN",
            Condition::NS => "NS",
            Condition::NN => "NN",
        };
        f.write_str(s)
    }
}

impl FromStr for Condition {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "SS" => Ok(Condition::SS),
            "SN" => Ok(Condition::SN),
            "NS" => Ok(Condition::NS),
            "NN" => Ok(Condition::NN),
            other => Err(Error::Config(format!("unknown condition {other:?}"))),
        }
    }
}

/// Measured or predicted condition means.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionTarget {
    /// Tracking error (deg).
    pub error_deg: f64,
    /// Cocontraction expressed on the impedance-parameter scale.
    pub cocontraction: f64,
}

/// Human model hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HumanParams {
    pub delta_sharp_deg: f64,
    pub delta_noisy_deg: f64,
    pub effort_weight: f64,
}

impl HumanParams {
    /// Values used when no fit is available: 2.56°, 3.67°, 4.02.
    pub fn nominal() -> Self {
        Self {
            delta_sharp_deg: 2.56,
            delta_noisy_deg: 3.67,
            effort_weight: 4.02,
        }
    }

    fn bias_deg(&self, noisy: bool) -> f64 {
        if noisy {
            self.delta_noisy_deg
        } else {
            self.delta_sharp_deg
        }
    }
}

/// Model prediction for one condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionPrediction {
    pub condition: Condition,
    pub lambda: f64,
    pub error_deg: f64,
}

/// Predicted λ* and RMS tracking error for every condition.
pub fn predict_conditions(
    params: &HumanParams,
    noise_std_deg: f64,
    design: &DesignConfig,
) -> Result<Vec<ConditionPrediction>> {
    let cfg = DesignConfig {
        weights: design.weights.with_r(params.effort_weight),
        ..*design
    };
    let sensing = |noisy: bool| NoiseSpec::from_degrees(params.bias_deg(noisy), noise_std_deg);
    let haptic_sharp = partner_haptic(sensing(false)?, &cfg)?;
    let haptic_noisy = partner_haptic(sensing(true)?, &cfg)?;
    Condition::ALL
        .iter()
        .map(|&c| {
            let own = sensing(c.own_noisy())?;
            let haptic = if c.partner_noisy() { haptic_noisy } else { haptic_sharp };
            let opt = optimal_lambda(own, haptic, &cfg)?;
            Ok(ConditionPrediction {
                condition: c,
                lambda: opt.lambda,
                error_deg: predicted_rms_error(own, haptic, opt.lambda, &cfg)?,
            })
        })
        .collect()
}

/// RMS position error (deg) over the horizon implied by the moment trajectory,
/// with the haptic bias entering as in the sign-symmetric cost.
pub fn predicted_rms_error(own: NoiseSpec, haptic: NoiseSpec, lambda: f64, cfg: &DesignConfig) -> Result<f64> {
    let agent = cfg.agent(lambda, own)?;
    let split = propagate_split(&agent, &cfg.connection, haptic, cfg.init, cfg.dt, cfg.horizon)?;
    let n = split.own.len() - 1;
    let ms: f64 = split.own[1..]
        .iter()
        .zip(&split.haptic_mean[1..])
        .map(|(s, h)| s.m[0] * s.m[0] + h[0] * h[0] + s.p[(0, 0)])
        .sum::<f64>()
        / n as f64;
    Ok(rad_to_deg(ms.sqrt()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub pso: PsoConfig,
    pub design: DesignConfig,
    pub noise_std_deg: f64,
}

impl FitConfig {
    /// Bounds δ ∈ [0°, 10°] for both biases and R ∈ [0.1, 50].
    pub fn new(seed: u64) -> Self {
        let mut pso = PsoConfig::new(vec![(0.0, 10.0), (0.0, 10.0), (0.1, 50.0)], seed);
        pso.particles = 16;
        pso.iterations = 40;
        Self {
            pso,
            design: DesignConfig::default(),
            noise_std_deg: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: HumanParams,
    pub objective: f64,
    pub trace: Vec<f64>,
    pub predictions: Vec<ConditionPrediction>,
}

/// Sum of squared residuals, each normalised by the mean of its target column.
pub fn fit_objective(
    params: &HumanParams,
    targets: &BTreeMap<Condition, ConditionTarget>,
    cfg: &FitConfig,
) -> Result<f64> {
    let n = targets.len() as f64;
    let err_scale = targets.values().map(|t| t.error_deg.abs()).sum::<f64>() / n;
    let coc_scale = targets.values().map(|t| t.cocontraction.abs()).sum::<f64>() / n;
    if !(err_scale > 0.0) || !(coc_scale > 0.0) {
        return Err(Error::Config(
            "targets must have nonzero error and cocontraction means".into(),
        ));
    }
    let predictions = predict_conditions(params, cfg.noise_std_deg, &cfg.design)?;
    let mut total = 0.0;
    for p in predictions {
        let Some(t) = targets.get(&p.condition) else {
            continue;
        };
        total += ((p.error_deg - t.error_deg) / err_scale).powi(2);
        total += ((p.lambda - t.cocontraction) / coc_scale).powi(2);
    }
    Ok(total)
}

pub fn fit_human_hyperparams(targets: &BTreeMap<Condition, ConditionTarget>, cfg: &FitConfig) -> Result<FitResult> {
    for c in Condition::ALL {
        if !targets.contains_key(&c) {
            return Err(Error::Contract(format!("targets lack condition {c}")));
        }
    }
    if cfg.pso.bounds.len() != 3 {
        return Err(Error::Config("the human fit has exactly three parameters".into()));
    }
    let to_params = |x: &[f64]| HumanParams {
        delta_sharp_deg: x[0],
        delta_noisy_deg: x[1],
        effort_weight: x[2],
    };
    let res = pso_minimize(
        |x| fit_objective(&to_params(x), targets, cfg).unwrap_or(f64::INFINITY),
        &cfg.pso,
    )?;
    let params = to_params(&res.x);
    let predictions = predict_conditions(&params, cfg.noise_std_deg, &cfg.design)?;
    Ok(FitResult {
        params,
        objective: res.f,
        trace: res.trace,
        predictions,
    })
}

/// Targets generated by the model itself.
pub fn model_targets(
    params: &HumanParams,
    noise_std_deg: f64,
    design: &DesignConfig,
) -> Result<BTreeMap<Condition, ConditionTarget>> {
    Ok(predict_conditions(params, noise_std_deg, design)?
        .into_iter()
        .map(|p| {
            (
                p.condition,
                ConditionTarget {
                    error_deg: p.error_deg,
                    cocontraction: p.lambda,
                },
            )
        })
        .collect())
}
