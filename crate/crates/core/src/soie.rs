//! Optimal impedance selection.
//!
//! An agent picks the scalar impedance parameter λ ∈ [0, 1] that minimises the
//! deterministic cost of its propagated error moments. The partner enters only
//! as haptic noise: its bias is the partner's own stationary tracking error and
//! its spread is a fixed haptic noise level.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{AgentConfig, ConnectionSpec, ControllerKind};
use crate::moments::{
    deterministic_cost, propagate_moments, propagate_split, sign_symmetric_cost, CostWeights, StateMoments,
};
use crate::signalgen::NoiseSpec;
use crate::units::{
    deg_to_rad, DEFAULT_INERTIA, DEFAULT_VISCOELASTIC_RATIO, DESIGN_CONNECTION_STIFFNESS, KAPPA0_NM_PER_RAD,
};
use crate::{Error, Result};

const GRID_POINTS: usize = 101;
const GOLDEN_TOLERANCE: f64 = 1e-4;
const FLAT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpedanceGains {
    pub lambda: f64,
    /// Nm/rad
    pub stiffness: f64,
    /// Nm·s/rad
    pub viscosity: f64,
    /// s
    pub ratio: f64,
}

pub fn gains_from_lambda(lambda: f64) -> Result<ImpedanceGains> {
    gains_with_ratio(lambda, DEFAULT_VISCOELASTIC_RATIO)
}

pub fn gains_with_ratio(lambda: f64, ratio: f64) -> Result<ImpedanceGains> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Domain(format!("lambda {lambda} outside [0, 1]")));
    }
    let stiffness = lambda * KAPPA0_NM_PER_RAD;
    Ok(ImpedanceGains {
        lambda,
        stiffness,
        viscosity: ratio * stiffness,
        ratio,
    })
}

/// Inverse of [`gains_from_lambda`] for the stiffness (Nm/rad).
pub fn lambda_from_stiffness(stiffness: f64) -> f64 {
    stiffness / KAPPA0_NM_PER_RAD
}

/// How the sign of the partner's tracking bias is treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HapticBiasMode {
    /// The haptic bias keeps its sign.
    Signed,
    /// The cost averages over both signs of the haptic bias, which is the
    /// expectation when the direction of the partner's error is unknown.
    SignSymmetric,
}

/// What the agent assumes about the partner when computing the haptic bias.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PartnerModel {
    /// The partner optimises alone, without haptic bias.
    OneShot,
    /// Alternate best responses of both agents for a number of rounds.
    FixedPoint { iterations: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignConfig {
    pub inertia: f64,
    pub ratio: f64,
    pub connection: ConnectionSpec,
    pub weights: CostWeights,
    pub dt: f64,
    pub horizon: f64,
    /// Spread of the haptic noise (rad).
    pub haptic_std: f64,
    /// Motor noise (Nm).
    pub motor_std: f64,
    pub init: StateMoments,
    pub bias_mode: HapticBiasMode,
    pub partner_model: PartnerModel,
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self {
            inertia: DEFAULT_INERTIA,
            ratio: DEFAULT_VISCOELASTIC_RATIO,
            connection: ConnectionSpec {
                stiffness: DESIGN_CONNECTION_STIFFNESS,
                damping: 0.0,
            },
            weights: CostWeights::nominal(),
            dt: 0.01,
            horizon: 20.0,
            haptic_std: deg_to_rad(0.05),
            motor_std: 0.0,
            init: StateMoments::zero(),
            bias_mode: HapticBiasMode::SignSymmetric,
            partner_model: PartnerModel::OneShot,
        }
    }
}

impl DesignConfig {
    pub fn agent(&self, lambda: f64, sensing: NoiseSpec) -> Result<AgentConfig> {
        let agent = AgentConfig {
            inertia: self.inertia,
            controller: ControllerKind::Soie,
            lambda,
            sensing,
            motor_std: self.motor_std,
            ratio: self.ratio,
        };
        agent.validate()?;
        Ok(agent)
    }

    pub fn haptic(&self, bias: f64) -> NoiseSpec {
        NoiseSpec {
            bias,
            std: self.haptic_std,
        }
    }
}

/// Cost of running with `lambda` under own sensing noise and haptic noise.
pub fn cost_for_lambda(own: NoiseSpec, haptic: NoiseSpec, lambda: f64, cfg: &DesignConfig) -> Result<f64> {
    let agent = cfg.agent(lambda, own)?;
    match cfg.bias_mode {
        HapticBiasMode::Signed => {
            let traj = propagate_moments(&agent, &cfg.connection, haptic, cfg.init, cfg.dt, cfg.horizon)?;
            deterministic_cost(&traj, lambda, &cfg.weights, cfg.dt)
        }
        HapticBiasMode::SignSymmetric => {
            let split = propagate_split(&agent, &cfg.connection, haptic, cfg.init, cfg.dt, cfg.horizon)?;
            sign_symmetric_cost(&split, lambda, &cfg.weights, cfg.dt)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    pub lambda: f64,
    pub cost: f64,
    /// The cost was flat over the grid; `lambda` is the smallest grid minimiser.
    pub tie: bool,
}

/// Minimises a cost over [0, 1] by a 101-point sweep and golden-section refinement.
pub fn minimize_on_unit_interval(mut f: impl FnMut(f64) -> Result<f64>) -> Result<Optimum> {
    let grid: Vec<f64> = (0..GRID_POINTS).map(|i| i as f64 / (GRID_POINTS - 1) as f64).collect();
    let mut costs = Vec::with_capacity(GRID_POINTS);
    for &l in &grid {
        costs.push(f(l)?);
    }
    if let Some(bad) = costs.iter().position(|c| !c.is_finite()) {
        return Err(Error::Numerical(format!("non-finite cost at lambda {}", grid[bad])));
    }
    let (mut best_i, mut best_c, mut worst) = (0, costs[0], costs[0]);
    for (i, &c) in costs.iter().enumerate() {
        if c < best_c {
            best_i = i;
            best_c = c;
        }
        worst = worst.max(c);
    }
    if worst - best_c < FLAT_TOLERANCE {
        return Ok(Optimum {
            lambda: grid[best_i],
            cost: best_c,
            tie: true,
        });
    }

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = grid[best_i.saturating_sub(1)];
    let mut b = grid[(best_i + 1).min(GRID_POINTS - 1)];
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    while b - a > GOLDEN_TOLERANCE {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2)?;
        }
    }
    let (xg, fg) = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
    Ok(if fg.is_finite() && fg < best_c {
        Optimum {
            lambda: xg,
            cost: fg,
            tie: false,
        }
    } else {
        Optimum {
            lambda: grid[best_i],
            cost: best_c,
            tie: false,
        }
    })
}

/// λ* for given own sensing noise and haptic noise.
pub fn optimal_lambda(own: NoiseSpec, haptic: NoiseSpec, cfg: &DesignConfig) -> Result<Optimum> {
    cfg.weights.validate()?;
    minimize_on_unit_interval(|l| cost_for_lambda(own, haptic, l, cfg))
}

/// Stationary mean position error of an agent running at `lambda` (rad, signed).
///
/// Averaged over the second half of the horizon to smooth residual transients.
pub fn stationary_mean_error(sensing: NoiseSpec, haptic: NoiseSpec, lambda: f64, cfg: &DesignConfig) -> Result<f64> {
    let agent = cfg.agent(lambda, sensing)?;
    let traj = propagate_moments(
        &agent,
        &cfg.connection,
        haptic,
        StateMoments::zero(),
        cfg.dt,
        cfg.horizon,
    )?;
    let tail = &traj[traj.len() / 2..];
    Ok(tail.iter().map(|s| s.m[0]).sum::<f64>() / tail.len() as f64)
}

/// Haptic noise produced by a partner with the given sensing noise.
///
/// The partner is assumed to run its own optimum without haptic bias; the
/// bias is the magnitude of its stationary mean error.
pub fn partner_haptic(partner_sensing: NoiseSpec, cfg: &DesignConfig) -> Result<NoiseSpec> {
    let solo = optimal_lambda(partner_sensing, cfg.haptic(0.0), cfg)?;
    let err = stationary_mean_error(partner_sensing, cfg.haptic(0.0), solo.lambda, cfg)?;
    Ok(cfg.haptic(err.abs()))
}

/// Pair optimum under the configured partner model. Returns (own, partner).
pub fn pair_optimum(own: NoiseSpec, partner: NoiseSpec, cfg: &DesignConfig) -> Result<(Optimum, Optimum)> {
    let mut h_own = partner_haptic(partner, cfg)?;
    let mut h_partner = partner_haptic(own, cfg)?;
    let mut o = optimal_lambda(own, h_own, cfg)?;
    let mut p = optimal_lambda(partner, h_partner, cfg)?;
    if let PartnerModel::FixedPoint { iterations } = cfg.partner_model {
        for _ in 0..iterations {
            let zero = cfg.haptic(0.0);
            h_own = cfg.haptic(stationary_mean_error(partner, zero, p.lambda, cfg)?.abs());
            h_partner = cfg.haptic(stationary_mean_error(own, zero, o.lambda, cfg)?.abs());
            let o_next = optimal_lambda(own, h_own, cfg)?;
            let p_next = optimal_lambda(partner, h_partner, cfg)?;
            let done = (o_next.lambda - o.lambda).abs() < GOLDEN_TOLERANCE
                && (p_next.lambda - p.lambda).abs() < GOLDEN_TOLERANCE;
            o = o_next;
            p = p_next;
            if done {
                break;
            }
        }
    }
    Ok((o, p))
}

/// λ* over an own-noise × partner-noise grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpedanceSurface {
    /// Own sensing noise per row.
    pub own: Vec<NoiseSpec>,
    /// Partner sensing noise per column.
    pub partner: Vec<NoiseSpec>,
    pub lambda: Vec<Vec<f64>>,
    pub cost: Vec<Vec<f64>>,
}

impl ImpedanceSurface {
    pub fn min_lambda(&self) -> f64 {
        self.lambda.iter().flatten().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_lambda(&self) -> f64 {
        self.lambda.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// λ* of an agent with own noise row `own` facing partner column `partner`.
    pub fn get(&self, own: usize, partner: usize) -> Result<f64> {
        self.lambda
            .get(own)
            .and_then(|r| r.get(partner))
            .copied()
            .ok_or_else(|| Error::Contract(format!("surface has no cell ({own}, {partner})")))
    }
}

pub fn impedance_surface(own: &[NoiseSpec], partner: &[NoiseSpec], cfg: &DesignConfig) -> Result<ImpedanceSurface> {
    if own.is_empty() || partner.is_empty() {
        return Err(Error::Config("noise grids must be nonempty".into()));
    }
    let cells: Vec<(usize, usize)> = (0..own.len())
        .flat_map(|i| (0..partner.len()).map(move |j| (i, j)))
        .collect();
    let solved: Vec<Result<Optimum>> = match cfg.partner_model {
        PartnerModel::OneShot => {
            let haptics: Vec<Result<NoiseSpec>> = partner.par_iter().map(|p| partner_haptic(*p, cfg)).collect();
            let haptics: Vec<NoiseSpec> = haptics.into_iter().collect::<Result<_>>()?;
            cells
                .par_iter()
                .map(|&(i, j)| optimal_lambda(own[i], haptics[j], cfg))
                .collect()
        }
        PartnerModel::FixedPoint { .. } => cells
            .par_iter()
            .map(|&(i, j)| pair_optimum(own[i], partner[j], cfg).map(|(o, _)| o))
            .collect(),
    };
    let mut lambda = vec![vec![0.0; partner.len()]; own.len()];
    let mut cost = vec![vec![0.0; partner.len()]; own.len()];
    for (&(i, j), r) in cells.iter().zip(solved) {
        let o = r?;
        lambda[i][j] = o.lambda;
        cost[i][j] = o.cost;
    }
    Ok(ImpedanceSurface {
        own: own.to_vec(),
        partner: partner.to_vec(),
        lambda,
        cost,
    })
}

/// Sensing noise grid `δν ∈ {0°, 1°, …, 7°}` with the given spread in degrees.
pub fn standard_noise_grid(std_deg: f64) -> Vec<NoiseSpec> {
    (0..8)
        .map(|d| NoiseSpec::from_degrees(d as f64, std_deg).expect("valid grid"))
        .collect()
}
