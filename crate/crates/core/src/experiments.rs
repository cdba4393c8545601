//! Batch studies: the robot-robot noise grid, the human-human prediction and the
//! human-robot controller comparison, plus deterministic result export.
//!
//! Every run is described by a manifest whose SHA-256 (over its canonical JSON
//! form) is written into each exported file. Trials are keyed by index, so the
//! same manifest produces byte-identical files for any worker count.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{decode_target, simulate_coupled_pair, AgentConfig, ConnectionSpec, ControllerKind, SimConfig};
use crate::metrics::{
    paired_test, pearson_r, rms_effort, rms_tracking_error, snr_db, xcorr_delay, TestKind, TestResult,
};
use crate::pso::{predict_conditions, ConditionPrediction, HumanParams};
use crate::signalgen::{multisine_zeros, sample_start_offset, Channel, NoiseSpec, SeededStream, TargetSpec};
use crate::soie::{optimal_lambda, partner_haptic, DesignConfig, ImpedanceSurface};
use crate::units::{DEFAULT_INERTIA, DEFAULT_VISCOELASTIC_RATIO};
use crate::{Error, Result};

/// Hex SHA-256 of the canonical JSON encoding of `value`.
pub fn canonical_hash<T: Serialize>(value: &T) -> Result<String> {
    let bytes = serde_json::to_vec(value)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Multisine target parameters in configuration units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetParams {
    pub amplitude_deg: f64,
    pub alpha_rad_per_s: f64,
    pub beta_rad_per_s: f64,
    pub duration_s: f64,
}

impl TargetParams {
    pub fn robot_robot() -> Self {
        Self {
            amplitude_deg: 18.5,
            alpha_rad_per_s: 2.031,
            beta_rad_per_s: 1.093,
            duration_s: 10.0,
        }
    }

    pub fn human_robot() -> Self {
        Self {
            alpha_rad_per_s: 3.04,
            beta_rad_per_s: 2.51,
            duration_s: 20.0,
            ..Self::robot_robot()
        }
    }

    pub fn spec(&self) -> Result<TargetSpec> {
        TargetSpec::new(
            self.amplitude_deg,
            self.alpha_rad_per_s,
            self.beta_rad_per_s,
            self.duration_s,
        )
    }
}

/// Everything that determines a robot-robot grid run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub experiment_id: String,
    pub master_seed: u64,
    pub dt_s: f64,
    pub substeps: usize,
    pub target: TargetParams,
    pub controllers: Vec<ControllerKind>,
    /// Sensing bias levels of each agent (deg).
    pub noise_bias_deg: Vec<f64>,
    pub noise_std_deg: f64,
    pub stiffness_nm_per_rad: f64,
    pub damping_nms_per_rad: f64,
    pub inertia_kg_m2: f64,
    pub viscoelastic_ratio_s: f64,
    pub motor_std_nm: f64,
    pub trials_per_cell: usize,
    /// λ* surface, rows = own bias level, columns = partner bias level.
    pub surface: Vec<Vec<f64>>,
}

impl RunManifest {
    /// Grid defaults with the given λ* surface.
    pub fn robot_robot(master_seed: u64, surface: &ImpedanceSurface) -> Self {
        Self {
            experiment_id: "robot_robot_grid".into(),
            master_seed,
            dt_s: 0.01,
            substeps: 10,
            target: TargetParams::robot_robot(),
            controllers: vec![
                ControllerKind::Soie,
                ControllerKind::FixedHigh,
                ControllerKind::FixedLow,
            ],
            noise_bias_deg: surface.own.iter().map(NoiseSpec::bias_deg).collect(),
            noise_std_deg: 0.05,
            stiffness_nm_per_rad: crate::units::EXPERIMENT_CONNECTION_STIFFNESS,
            damping_nms_per_rad: 0.0,
            inertia_kg_m2: DEFAULT_INERTIA,
            viscoelastic_ratio_s: DEFAULT_VISCOELASTIC_RATIO,
            motor_std_nm: 0.0,
            trials_per_cell: 1,
            surface: surface.lambda.clone(),
        }
    }

    pub fn hash(&self) -> Result<String> {
        canonical_hash(self)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.noise_bias_deg.len();
        if self.surface.is_empty() {
            return Err(Error::MissingPrerequisite(
                "no impedance surface; run `soie optimize` first".into(),
            ));
        }
        if self.surface.len() != n || self.surface.iter().any(|r| r.len() != n) {
            return Err(Error::Config(format!(
                "surface must be {n}×{n} to match the noise grid"
            )));
        }
        if self.surface.iter().flatten().any(|l| !(0.0..=1.0).contains(l)) {
            return Err(Error::Config("surface values must lie in [0, 1]".into()));
        }
        if self.controllers.is_empty() {
            return Err(Error::Config("no controllers selected".into()));
        }
        self.target.spec()?;
        self.sim().validate(self.target.duration_s)?;
        ConnectionSpec::new(self.stiffness_nm_per_rad, self.damping_nms_per_rad)?;
        NoiseSpec::from_degrees(0.0, self.noise_std_deg)?;
        Ok(())
    }

    fn sim(&self) -> SimConfig {
        SimConfig {
            dt: self.dt_s,
            substeps: self.substeps,
            ..SimConfig::default()
        }
    }

    fn extremes(&self) -> (f64, f64) {
        let all = self.surface.iter().flatten().copied();
        let lo = all.clone().fold(f64::INFINITY, f64::min);
        let hi = all.fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    /// λ of both agents in cell `(i, j)` under `controller`.
    pub fn lambdas(&self, controller: ControllerKind, i: usize, j: usize) -> (f64, f64) {
        let (lo, hi) = self.extremes();
        match controller {
            ControllerKind::Soie => (self.surface[i][j], self.surface[j][i]),
            ControllerKind::FixedHigh => (hi, hi),
            ControllerKind::FixedLow => (lo, lo),
            ControllerKind::Fixed(l) => (l, l),
        }
    }

    fn agent(&self, lambda: f64, bias_deg: f64, controller: ControllerKind) -> Result<AgentConfig> {
        let a = AgentConfig {
            inertia: self.inertia_kg_m2,
            controller,
            lambda,
            sensing: NoiseSpec::from_degrees(bias_deg, self.noise_std_deg)?,
            motor_std: self.motor_std_nm,
            ratio: self.viscoelastic_ratio_s,
        };
        a.validate()?;
        Ok(a)
    }
}

/// Running sums over samples of a decoded target `x` against the truth `y`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DecodeSums {
    pub n: f64,
    pub sx: f64,
    pub sy: f64,
    pub sxx: f64,
    pub syy: f64,
    pub sxy: f64,
    /// Σ (x − y)²
    pub see: f64,
}

impl DecodeSums {
    pub fn from_series(x: &[f64], y: &[f64]) -> Self {
        let mut s = Self::default();
        for (a, b) in x.iter().zip(y) {
            s.n += 1.0;
            s.sx += a;
            s.sy += b;
            s.sxx += a * a;
            s.syy += b * b;
            s.sxy += a * b;
            s.see += (a - b) * (a - b);
        }
        s
    }

    pub fn merge(&mut self, o: &Self) {
        self.n += o.n;
        self.sx += o.sx;
        self.sy += o.sy;
        self.sxx += o.sxx;
        self.syy += o.syy;
        self.sxy += o.sxy;
        self.see += o.see;
    }

    pub fn pearson(&self) -> f64 {
        let cxy = self.sxy - self.sx * self.sy / self.n;
        let cxx = self.sxx - self.sx * self.sx / self.n;
        let cyy = self.syy - self.sy * self.sy / self.n;
        (cxy / (cxx * cyy).sqrt()).clamp(-1.0, 1.0)
    }

    /// Power of the truth over power of the decoding error (dB).
    pub fn snr_db(&self) -> f64 {
        10.0 * (self.syy / self.see).log10()
    }
}

/// One coupled-pair trial of the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub cell: usize,
    pub bias1_deg: f64,
    pub bias2_deg: f64,
    pub controller: String,
    pub trial: usize,
    pub start_offset_s: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub error1_deg: f64,
    pub error2_deg: f64,
    pub error_deg: f64,
    pub effort_nm: f64,
    pub r1: f64,
    pub r2: f64,
    pub snr1_db: f64,
    pub snr2_db: f64,
    pub delay1_s: f64,
    pub delay2_s: f64,
    #[serde(skip)]
    pub decode: [DecodeSums; 2],
}

/// Aggregates of one controller over the whole grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerSummary {
    pub controller: String,
    pub trials: usize,
    pub mean_error_deg: f64,
    pub mean_effort_nm: f64,
    /// Correlation of all decoded samples (both agents, all trials) with the target.
    pub pooled_r: f64,
    /// Mean of per-agent, per-trial correlations.
    pub mean_trial_r: f64,
    pub pooled_snr_db: f64,
    pub mean_trial_snr_db: f64,
    pub mean_delay_s: f64,
    /// Mean error difference to SOIE per cell against |bias1 − bias2|.
    pub error_trend_r: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub metric: String,
    pub controller: String,
    pub reference: String,
    pub mean_difference: f64,
    pub t_test: TestResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub manifest: RunManifest,
    pub manifest_hash: String,
    pub rows: Vec<GridRow>,
    pub summaries: Vec<ControllerSummary>,
    pub comparisons: Vec<Comparison>,
}

impl GridResult {
    pub fn summary(&self, controller: ControllerKind) -> Option<&ControllerSummary> {
        self.summaries.iter().find(|s| s.controller == controller.label())
    }

    pub fn comparison(&self, metric: &str, controller: ControllerKind) -> Option<&Comparison> {
        self.comparisons
            .iter()
            .find(|c| c.metric == metric && c.controller == controller.label())
    }
}

/// Per-agent communication metrics of a decoded target.
fn decode_metrics(decoded: &[f64], truth: &[f64], dt: f64) -> Result<(f64, f64, f64, DecodeSums)> {
    let r = pearson_r(decoded, truth)?;
    let err: Vec<f64> = decoded.iter().zip(truth).map(|(d, t)| d - t).collect();
    let snr = snr_db(truth, &err)?;
    let delay = xcorr_delay(decoded, truth, dt)?;
    Ok((r, snr, delay, DecodeSums::from_series(decoded, truth)))
}

pub fn run_robot_robot_grid(manifest: &RunManifest) -> Result<GridResult> {
    manifest.validate()?;
    let hash = manifest.hash()?;
    let n = manifest.noise_bias_deg.len();
    let target = manifest.target.spec()?;
    let zeros = multisine_zeros(target.alpha, target.beta, 0.0, 10.0);
    let conn = ConnectionSpec::new(manifest.stiffness_nm_per_rad, manifest.damping_nms_per_rad)?;
    let sim = manifest.sim();
    let tpc = manifest.trials_per_cell;

    let jobs: Vec<(usize, ControllerKind, usize)> = (0..n * n)
        .flat_map(|cell| {
            manifest
                .controllers
                .iter()
                .flat_map(move |&c| (0..tpc).map(move |t| (cell, c, t)))
        })
        .collect();

    let rows: Vec<Result<GridRow>> = jobs
        .par_iter()
        .map(|&(cell, controller, trial)| {
            let (i, j) = (cell / n, cell % n);
            let (l1, l2) = manifest.lambdas(controller, i, j);
            let (b1, b2) = (manifest.noise_bias_deg[i], manifest.noise_bias_deg[j]);
            let a1 = manifest.agent(l1, b1, controller)?;
            let a2 = manifest.agent(l2, b2, controller)?;
            // Common random numbers: the trial index does not depend on the controller.
            let trial_index = (cell * tpc + trial) as u64;
            let stream = SeededStream::new(manifest.master_seed, trial_index, Channel::Sensing);
            let t0 = sample_start_offset(stream, &zeros)?;
            let tgt = target.with_start_offset(t0)?;
            let rec = simulate_coupled_pair(&a1, &a2, &conn, &tgt, &sim, stream)?;
            let (s1, s2) = (&rec.agents[0], &rec.agents[1]);
            let e1 = rms_tracking_error(&s1.q, &s1.eta, sim.dt)?;
            let e2 = rms_tracking_error(&s2.q, &s2.eta, sim.dt)?;
            let effort = rms_effort(&s1.tau, sim.dt)?;
            let d1 = decode_metrics(&decode_target(&rec, l1, 0)?, &s1.eta, sim.dt)?;
            let d2 = decode_metrics(&decode_target(&rec, l2, 1)?, &s2.eta, sim.dt)?;
            Ok(GridRow {
                cell,
                bias1_deg: b1,
                bias2_deg: b2,
                controller: controller.label().to_string(),
                trial,
                start_offset_s: t0,
                lambda1: l1,
                lambda2: l2,
                error1_deg: e1,
                error2_deg: e2,
                error_deg: e1 + e2,
                effort_nm: effort,
                r1: d1.0,
                r2: d2.0,
                snr1_db: d1.1,
                snr2_db: d2.1,
                delay1_s: d1.2,
                delay2_s: d2.2,
                decode: [d1.3, d2.3],
            })
        })
        .collect();
    let rows: Vec<GridRow> = rows.into_iter().collect::<Result<_>>()?;
    let (summaries, comparisons) = aggregate(manifest, &rows)?;
    Ok(GridResult {
        manifest: manifest.clone(),
        manifest_hash: hash,
        rows,
        summaries,
        comparisons,
    })
}

fn mean(v: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = v.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

/// Per-controller values of a metric ordered by (cell, trial).
fn column(rows: &[GridRow], label: &str, f: impl Fn(&GridRow) -> f64) -> Vec<f64> {
    rows.iter().filter(|r| r.controller == label).map(f).collect()
}

fn aggregate(manifest: &RunManifest, rows: &[GridRow]) -> Result<(Vec<ControllerSummary>, Vec<Comparison>)> {
    let n = manifest.noise_bias_deg.len();
    let soie_label = ControllerKind::Soie.label();
    let has_soie = manifest.controllers.contains(&ControllerKind::Soie);
    let cell_means = |label: &str, f: &dyn Fn(&GridRow) -> f64| -> Vec<f64> {
        (0..n * n)
            .map(|c| mean(rows.iter().filter(|r| r.cell == c && r.controller == label).map(f)))
            .collect()
    };
    let bias_gap: Vec<f64> = (0..n * n)
        .map(|c| (manifest.noise_bias_deg[c / n] - manifest.noise_bias_deg[c % n]).abs())
        .collect();
    let soie_cell_err = cell_means(soie_label, &|r| r.error_deg);

    let mut summaries = Vec::new();
    for c in &manifest.controllers {
        let label = c.label();
        let mine: Vec<&GridRow> = rows.iter().filter(|r| r.controller == label).collect();
        if mine.is_empty() {
            continue;
        }
        let mut pooled = DecodeSums::default();
        for r in &mine {
            pooled.merge(&r.decode[0]);
            pooled.merge(&r.decode[1]);
        }
        let error_trend_r = if has_soie && *c != ControllerKind::Soie {
            let diff: Vec<f64> = cell_means(label, &|r| r.error_deg)
                .iter()
                .zip(&soie_cell_err)
                .map(|(a, b)| a - b)
                .collect();
            pearson_r(&diff, &bias_gap).ok()
        } else {
            None
        };
        summaries.push(ControllerSummary {
            controller: label.to_string(),
            trials: mine.len(),
            mean_error_deg: mean(mine.iter().map(|r| r.error_deg)),
            mean_effort_nm: mean(mine.iter().map(|r| r.effort_nm)),
            pooled_r: pooled.pearson(),
            mean_trial_r: mean(mine.iter().flat_map(|r| [r.r1, r.r2])),
            pooled_snr_db: pooled.snr_db(),
            mean_trial_snr_db: mean(mine.iter().flat_map(|r| [r.snr1_db, r.snr2_db])),
            mean_delay_s: mean(mine.iter().flat_map(|r| [r.delay1_s, r.delay2_s])),
            error_trend_r,
        });
    }

    let mut comparisons = Vec::new();
    if has_soie {
        for c in manifest.controllers.iter().filter(|c| **c != ControllerKind::Soie) {
            for (metric, f) in [
                ("error_deg", (|r: &GridRow| r.error_deg) as fn(&GridRow) -> f64),
                ("effort_nm", |r: &GridRow| r.effort_nm),
            ] {
                let x = column(rows, c.label(), f);
                let y = column(rows, soie_label, f);
                if x.len() < 5 {
                    continue;
                }
                comparisons.push(Comparison {
                    metric: metric.to_string(),
                    controller: c.label().to_string(),
                    reference: soie_label.to_string(),
                    mean_difference: mean(x.iter().zip(&y).map(|(a, b)| a - b)),
                    t_test: paired_test(&x, &y, TestKind::T)?,
                });
            }
        }
    }
    Ok((summaries, comparisons))
}

/// Model predictions for the four human-human sensory conditions.
pub fn run_human_human_prediction(
    params: &HumanParams,
    noise_std_deg: f64,
    design: &DesignConfig,
) -> Result<Vec<ConditionPrediction>> {
    predict_conditions(params, noise_std_deg, design)
}

/// Human-robot study: the robot is agent 1, a simulated human agent 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanRobotManifest {
    pub experiment_id: String,
    pub master_seed: u64,
    pub dt_s: f64,
    pub substeps: usize,
    pub target: TargetParams,
    pub robot_noisy_bias_deg: f64,
    pub robot_noisy_std_deg: f64,
    pub human: HumanParams,
    pub human_std_deg: f64,
    pub stiffness_nm_per_rad: f64,
    pub trials_per_condition: usize,
}

impl HumanRobotManifest {
    pub fn new(master_seed: u64, human: HumanParams) -> Self {
        Self {
            experiment_id: "human_robot".into(),
            master_seed,
            dt_s: 0.01,
            substeps: 10,
            target: TargetParams::human_robot(),
            robot_noisy_bias_deg: 7.01,
            robot_noisy_std_deg: 0.05,
            human,
            human_std_deg: 0.05,
            stiffness_nm_per_rad: crate::units::EXPERIMENT_CONNECTION_STIFFNESS,
            trials_per_condition: 10,
        }
    }

    pub fn hash(&self) -> Result<String> {
        canonical_hash(self)
    }
}

/// Robot and human sensory state; the first letter is the robot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HrCondition {
    SN,
    SS,
    NS,
    NN,
}

impl HrCondition {
    pub const ALL: [HrCondition; 4] = [HrCondition::SN, HrCondition::SS, HrCondition::NS, HrCondition::NN];

    pub fn robot_noisy(self) -> bool {
        matches!(self, HrCondition::NS | HrCondition::NN)
    }

    pub fn human_noisy(self) -> bool {
        matches!(self, HrCondition::SN | HrCondition::NN)
    }

    pub fn label(self) -> &'static str {
        match self {
            HrCondition::SN => "SN",
            HrCondition::SS => "SS",
            HrCondition::NS => "NS",
            HrCondition::NN => "NN",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanRobotRow {
    pub condition: String,
    pub controller: String,
    pub robot_lambda: f64,
    pub robot_stiffness_nm_per_rad: f64,
    pub human_lambda: f64,
    pub robot_error_deg: f64,
    pub human_error_deg: f64,
    pub effort_nm: f64,
    pub robot_decode_r: f64,
    pub robot_decode_snr_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanRobotResult {
    pub manifest: HumanRobotManifest,
    pub manifest_hash: String,
    /// Per condition and controller, averaged over trials.
    pub rows: Vec<HumanRobotRow>,
}

impl HumanRobotResult {
    pub fn row(&self, condition: HrCondition, controller: &str) -> Option<&HumanRobotRow> {
        self.rows
            .iter()
            .find(|r| r.condition == condition.label() && r.controller == controller)
    }
}

pub const HIC_LABEL: &str = "hic";

pub fn run_human_robot_conditions(manifest: &HumanRobotManifest) -> Result<HumanRobotResult> {
    let hash = manifest.hash()?;
    let target = manifest.target.spec()?;
    let zeros = multisine_zeros(target.alpha, target.beta, 0.0, 10.0);
    let conn = ConnectionSpec::spring(manifest.stiffness_nm_per_rad)?;
    let sim = SimConfig {
        dt: manifest.dt_s,
        substeps: manifest.substeps,
        ..SimConfig::default()
    };
    sim.validate(target.duration)?;
    if manifest.trials_per_condition == 0 {
        return Err(Error::Config("trials_per_condition must be >= 1".into()));
    }
    let design = DesignConfig {
        connection: conn,
        ..DesignConfig::default()
    };
    let human_design = DesignConfig {
        weights: design.weights.with_r(manifest.human.effort_weight),
        ..design
    };
    let robot_noise = |noisy: bool| -> Result<NoiseSpec> {
        if noisy {
            NoiseSpec::from_degrees(manifest.robot_noisy_bias_deg, manifest.robot_noisy_std_deg)
        } else {
            Ok(NoiseSpec::zero())
        }
    };
    let human_noise = |noisy: bool| -> Result<NoiseSpec> {
        let h = &manifest.human;
        let bias = if noisy { h.delta_noisy_deg } else { h.delta_sharp_deg };
        NoiseSpec::from_degrees(bias, manifest.human_std_deg)
    };

    // Optimal impedance of both agents in every condition.
    let mut plan = Vec::new();
    for c in HrCondition::ALL {
        let rn = robot_noise(c.robot_noisy())?;
        let hn = human_noise(c.human_noisy())?;
        let robot = optimal_lambda(rn, partner_haptic(hn, &human_design)?, &design)?.lambda;
        let human = optimal_lambda(hn, partner_haptic(rn, &design)?, &human_design)?.lambda;
        plan.push((c, rn, hn, robot, human));
    }
    let hic = plan[0].3;

    let jobs: Vec<(usize, bool, usize)> = (0..plan.len())
        .flat_map(|p| {
            [true, false]
                .into_iter()
                .flat_map(move |s| (0..manifest.trials_per_condition).map(move |t| (p, s, t)))
        })
        .collect();
    let trials: Vec<Result<[f64; 5]>> = jobs
        .par_iter()
        .map(|&(p, is_soie, t)| {
            let (_, rn, hn, robot_soie, human) = plan[p];
            let robot_lambda = if is_soie { robot_soie } else { hic };
            let kind = if is_soie {
                ControllerKind::Soie
            } else {
                ControllerKind::Fixed(hic)
            };
            let robot = AgentConfig {
                controller: kind,
                ..AgentConfig::new(robot_lambda, rn)?
            };
            let person = AgentConfig {
                controller: ControllerKind::Soie,
                ..AgentConfig::new(human, hn)?
            };
            let trial_index = (p * manifest.trials_per_condition + t) as u64;
            let stream = SeededStream::new(manifest.master_seed, trial_index, Channel::Sensing);
            let tgt = target.with_start_offset(sample_start_offset(stream, &zeros)?)?;
            let rec = simulate_coupled_pair(&robot, &person, &conn, &tgt, &sim, stream)?;
            let (r, h) = (&rec.agents[0], &rec.agents[1]);
            let dec = decode_target(&rec, robot_lambda, 0)?;
            let (dr, dsnr, _, _) = decode_metrics(&dec, &r.eta, sim.dt)?;
            Ok([
                rms_tracking_error(&r.q, &r.eta, sim.dt)?,
                rms_tracking_error(&h.q, &h.eta, sim.dt)?,
                rms_effort(&r.tau, sim.dt)?,
                dr,
                dsnr,
            ])
        })
        .collect();
    let trials: Vec<[f64; 5]> = trials.into_iter().collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let per = manifest.trials_per_condition;
    for (k, chunk) in trials.chunks(per).enumerate() {
        let (p, is_soie) = (k / 2, k % 2 == 0);
        let (c, _, _, robot_soie, human) = plan[p];
        let robot_lambda = if is_soie { robot_soie } else { hic };
        let avg = |i: usize| mean(chunk.iter().map(|v| v[i]));
        rows.push(HumanRobotRow {
            condition: c.label().to_string(),
            controller: if is_soie {
                ControllerKind::Soie.label()
            } else {
                HIC_LABEL
            }
            .to_string(),
            robot_lambda,
            robot_stiffness_nm_per_rad: crate::soie::gains_from_lambda(robot_lambda)?.stiffness,
            human_lambda: human,
            robot_error_deg: avg(0),
            human_error_deg: avg(1),
            effort_nm: avg(2),
            robot_decode_r: avg(3),
            robot_decode_snr_db: avg(4),
        });
    }
    Ok(HumanRobotResult {
        manifest: manifest.clone(),
        manifest_hash: hash,
        rows,
    })
}

/// Writes `rows` as CSV preceded by a `# manifest_hash=` comment line.
pub fn write_csv<T: Serialize>(path: &Path, hash: &str, header: &[&str], rows: &[T]) -> Result<()> {
    let mut buf = Vec::new();
    writeln!(buf, "# manifest_hash={hash}")?;
    {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(&mut buf);
        w.write_record(header)?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
    }
    fs::write(path, buf)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

#[derive(Serialize)]
struct ManifestFile<'a, M: Serialize> {
    manifest_hash: &'a str,
    manifest: &'a M,
}

/// Long-format `(controller, metric, value)` row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongRow {
    pub controller: String,
    pub metric: String,
    pub value: f64,
}

pub const GRID_ROWS_FILE: &str = "grid_rows.csv";
pub const GRID_SUMMARY_FILE: &str = "grid_summary.csv";
pub const GRID_TESTS_FILE: &str = "grid_tests.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

pub const GRID_ROW_HEADER: [&str; 18] = [
    "cell",
    "bias1_deg",
    "bias2_deg",
    "controller",
    "trial",
    "start_offset_s",
    "lambda1",
    "lambda2",
    "error1_deg",
    "error2_deg",
    "error_deg",
    "effort_nm",
    "r1",
    "r2",
    "snr1_db",
    "snr2_db",
    "delay1_s",
    "delay2_s",
];

pub fn summary_long_rows(summaries: &[ControllerSummary]) -> Vec<LongRow> {
    let mut out = Vec::new();
    for s in summaries {
        let mut push = |metric: &str, value: f64| {
            out.push(LongRow {
                controller: s.controller.clone(),
                metric: metric.to_string(),
                value,
            })
        };
        push("trials", s.trials as f64);
        push("mean_error_deg", s.mean_error_deg);
        push("mean_effort_nm", s.mean_effort_nm);
        push("pooled_r", s.pooled_r);
        push("mean_trial_r", s.mean_trial_r);
        push("pooled_snr_db", s.pooled_snr_db);
        push("mean_trial_snr_db", s.mean_trial_snr_db);
        push("mean_delay_s", s.mean_delay_s);
        if let Some(r) = s.error_trend_r {
            push("error_trend_r", r);
        }
    }
    out
}

#[derive(Serialize)]
struct TestRow<'a> {
    metric: &'a str,
    controller: &'a str,
    reference: &'a str,
    mean_difference: f64,
    t: f64,
    p: f64,
    n: usize,
}

/// Writes the grid rows, summaries, paired tests and the manifest into `dir`.
pub fn export_grid(result: &GridResult, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let h = &result.manifest_hash;
    let rows_path = dir.join(GRID_ROWS_FILE);
    write_csv(&rows_path, h, &GRID_ROW_HEADER, &result.rows)?;
    let summary_path = dir.join(GRID_SUMMARY_FILE);
    write_csv(
        &summary_path,
        h,
        &["controller", "metric", "value"],
        &summary_long_rows(&result.summaries),
    )?;
    let tests: Vec<TestRow> = result
        .comparisons
        .iter()
        .map(|c| TestRow {
            metric: &c.metric,
            controller: &c.controller,
            reference: &c.reference,
            mean_difference: c.mean_difference,
            t: c.t_test.statistic,
            p: c.t_test.p,
            n: c.t_test.n,
        })
        .collect();
    let tests_path = dir.join(GRID_TESTS_FILE);
    write_csv(
        &tests_path,
        h,
        &["metric", "controller", "reference", "mean_difference", "t", "p", "n"],
        &tests,
    )?;
    let manifest_path = dir.join(MANIFEST_FILE);
    write_json(
        &manifest_path,
        &ManifestFile {
            manifest_hash: h,
            manifest: &result.manifest,
        },
    )?;
    Ok(vec![rows_path, summary_path, tests_path, manifest_path])
}

pub const HUMAN_ROBOT_FILE: &str = "human_robot.csv";

pub fn export_human_robot(result: &HumanRobotResult, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let path = dir.join(HUMAN_ROBOT_FILE);
    write_csv(
        &path,
        &result.manifest_hash,
        &[
            "condition",
            "controller",
            "robot_lambda",
            "robot_stiffness_nm_per_rad",
            "human_lambda",
            "robot_error_deg",
            "human_error_deg",
            "effort_nm",
            "robot_decode_r",
            "robot_decode_snr_db",
        ],
        &result.rows,
    )?;
    let manifest_path = dir.join("human_robot_manifest.json");
    write_json(
        &manifest_path,
        &ManifestFile {
            manifest_hash: &result.manifest_hash,
            manifest: &result.manifest,
        },
    )?;
    Ok(vec![path, manifest_path])
}

/// Surface in file form, with noise levels in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceFile {
    pub manifest_hash: String,
    pub own_bias_deg: Vec<f64>,
    pub partner_bias_deg: Vec<f64>,
    pub noise_std_deg: f64,
    pub lambda: Vec<Vec<f64>>,
    pub cost: Vec<Vec<f64>>,
}

impl SurfaceFile {
    pub fn from_surface(surface: &ImpedanceSurface, hash: &str) -> Self {
        Self {
            manifest_hash: hash.to_string(),
            own_bias_deg: surface.own.iter().map(NoiseSpec::bias_deg).collect(),
            partner_bias_deg: surface.partner.iter().map(NoiseSpec::bias_deg).collect(),
            noise_std_deg: surface.own.first().map_or(0.0, NoiseSpec::std_deg),
            lambda: surface.lambda.clone(),
            cost: surface.cost.clone(),
        }
    }

    pub fn to_surface(&self) -> Result<ImpedanceSurface> {
        let spec = |b: &f64| NoiseSpec::from_degrees(*b, self.noise_std_deg);
        Ok(ImpedanceSurface {
            own: self.own_bias_deg.iter().map(spec).collect::<Result<_>>()?,
            partner: self.partner_bias_deg.iter().map(spec).collect::<Result<_>>()?,
            lambda: self.lambda.clone(),
            cost: self.cost.clone(),
        })
    }
}

pub const SURFACE_JSON_FILE: &str = "surface.json";
pub const SURFACE_CSV_FILE: &str = "surface.csv";

#[derive(Serialize)]
struct SurfaceRow {
    own_bias_deg: f64,
    partner_bias_deg: f64,
    lambda: f64,
    stiffness_nm_per_rad: f64,
    cost: f64,
}

pub fn export_surface(surface: &ImpedanceSurface, hash: &str, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut rows = Vec::new();
    for (i, own) in surface.own.iter().enumerate() {
        for (j, partner) in surface.partner.iter().enumerate() {
            rows.push(SurfaceRow {
                own_bias_deg: own.bias_deg(),
                partner_bias_deg: partner.bias_deg(),
                lambda: surface.lambda[i][j],
                stiffness_nm_per_rad: crate::soie::gains_from_lambda(surface.lambda[i][j])?.stiffness,
                cost: surface.cost[i][j],
            });
        }
    }
    let csv_path = dir.join(SURFACE_CSV_FILE);
    write_csv(
        &csv_path,
        hash,
        &[
            "own_bias_deg",
            "partner_bias_deg",
            "lambda",
            "stiffness_nm_per_rad",
            "cost",
        ],
        &rows,
    )?;
    let json_path = dir.join(SURFACE_JSON_FILE);
    write_json(&json_path, &SurfaceFile::from_surface(surface, hash))?;
    Ok(vec![csv_path, json_path])
}

pub fn load_surface(dir: &Path) -> Result<ImpedanceSurface> {
    let path = dir.join(SURFACE_JSON_FILE);
    if !path.exists() {
        return Err(Error::MissingPrerequisite(format!(
            "{} not found; run `soie optimize` first",
            path.display()
        )));
    }
    let file: SurfaceFile = serde_json::from_str(&fs::read_to_string(&path)?)?;
    file.to_surface()
}

/// Converts a bias grid in degrees into sensing noise specs.
pub fn noise_grid(bias_deg: &[f64], std_deg: f64) -> Result<Vec<NoiseSpec>> {
    bias_deg.iter().map(|b| NoiseSpec::from_degrees(*b, std_deg)).collect()
}

/// Monotonicity of a λ* surface along both noise axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceTrend {
    /// Largest count, over columns, of increases of λ* with own noise.
    pub own_violations: usize,
    /// Largest count, over rows, of decreases of λ* with partner noise.
    pub partner_violations: usize,
    /// Mean over columns of the λ* range along own noise.
    pub own_range: f64,
    /// Mean over rows of the λ* range along partner noise.
    pub partner_range: f64,
}

impl SurfaceTrend {
    pub fn holds(&self, max_violations: usize) -> bool {
        self.own_violations <= max_violations
            && self.partner_violations <= max_violations
            && self.own_range > self.partner_range
    }
}

fn line_range(v: impl Iterator<Item = f64> + Clone) -> f64 {
    v.clone().fold(f64::NEG_INFINITY, f64::max) - v.fold(f64::INFINITY, f64::min)
}

pub fn surface_trend(lambda: &[Vec<f64>]) -> SurfaceTrend {
    let rows = lambda.len();
    let cols = lambda.first().map_or(0, Vec::len);
    let own_violations = (0..cols)
        .map(|j| (1..rows).filter(|&i| lambda[i][j] > lambda[i - 1][j]).count())
        .max()
        .unwrap_or(0);
    let partner_violations = lambda
        .iter()
        .map(|r| r.windows(2).filter(|w| w[1] < w[0]).count())
        .max()
        .unwrap_or(0);
    let own_range = (0..cols)
        .map(|j| line_range(lambda.iter().map(move |r| r[j])))
        .sum::<f64>()
        / cols.max(1) as f64;
    let partner_range = lambda.iter().map(|r| line_range(r.iter().copied())).sum::<f64>() / rows.max(1) as f64;
    SurfaceTrend {
        own_violations,
        partner_violations,
        own_range,
        partner_range,
    }
}
