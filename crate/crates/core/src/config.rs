//! JSON configuration. Keys carry their units; unknown keys are rejected.
//! Every section is optional and falls back to the defaults below.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::dynamics::{ConnectionSpec, SimConfig};
use crate::experiments::{HumanRobotManifest, TargetParams};
use crate::moments::{CostWeights, StateMoments};
use crate::pso::{Condition, ConditionTarget, FitConfig, HumanParams, PsoConfig};
use crate::signalgen::NoiseSpec;
use crate::soie::{DesignConfig, HapticBiasMode, PartnerModel};
use crate::units::{
    deg_to_rad, DEFAULT_INERTIA, DEFAULT_VISCOELASTIC_RATIO, DEG_PER_RAD, DESIGN_CONNECTION_STIFFNESS,
    EXPERIMENT_CONNECTION_STIFFNESS,
};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: u64,
    pub simulation: SimulationSection,
    pub agent: AgentSection,
    pub connection: ConnectionSection,
    pub cost: CostSection,
    pub design: DesignSection,
    pub noise_grid: NoiseGridSection,
    pub robot_robot: RobotRobotSection,
    pub human: HumanSection,
    pub human_robot: HumanRobotSection,
    pub pso: PsoSection,
}

impl Default for ConfigFile {
    fn default() -> Self {
        Self {
            seed: 42,
            simulation: Default::default(),
            agent: Default::default(),
            connection: Default::default(),
            cost: Default::default(),
            design: Default::default(),
            noise_grid: Default::default(),
            robot_robot: Default::default(),
            human: Default::default(),
            human_robot: Default::default(),
            pso: Default::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    pub dt_s: f64,
    pub substeps: usize,
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self {
            dt_s: 0.01,
            substeps: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentSection {
    pub inertia_kg_m2: f64,
    pub viscoelastic_ratio_s: f64,
    pub motor_std_nm: f64,
}

impl Default for AgentSection {
    fn default() -> Self {
        Self {
            inertia_kg_m2: DEFAULT_INERTIA,
            viscoelastic_ratio_s: DEFAULT_VISCOELASTIC_RATIO,
            motor_std_nm: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConnectionSection {
    /// Stiffness assumed when computing optimal impedance.
    pub design_stiffness_nm_per_rad: f64,
    /// Stiffness used in the simulated experiments.
    pub experiment_stiffness_nm_per_rad: f64,
    pub damping_nms_per_rad: f64,
}

impl Default for ConnectionSection {
    fn default() -> Self {
        Self {
            design_stiffness_nm_per_rad: DESIGN_CONNECTION_STIFFNESS,
            experiment_stiffness_nm_per_rad: EXPERIMENT_CONNECTION_STIFFNESS,
            damping_nms_per_rad: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorUnit {
    Deg,
    Rad,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostSection {
    pub q_position_per_deg2: f64,
    pub q_velocity_per_deg2_s2: f64,
    pub terminal_position_per_deg2: f64,
    pub terminal_velocity_per_deg2_s2: f64,
    pub r_effort: f64,
    /// Unit the error weights apply to.
    pub error_unit: ErrorUnit,
}

impl Default for CostSection {
    fn default() -> Self {
        Self {
            q_position_per_deg2: 1.0,
            q_velocity_per_deg2_s2: 0.01,
            terminal_position_per_deg2: 0.0,
            terminal_velocity_per_deg2_s2: 0.0,
            r_effort: 4.02,
            error_unit: ErrorUnit::Deg,
        }
    }
}

impl CostSection {
    pub fn weights(&self) -> Result<CostWeights> {
        let mut w = CostWeights::new(
            Matrix2::new(self.q_position_per_deg2, 0.0, 0.0, self.q_velocity_per_deg2_s2),
            Matrix2::new(
                self.terminal_position_per_deg2,
                0.0,
                0.0,
                self.terminal_velocity_per_deg2_s2,
            ),
            self.r_effort,
        )?;
        if self.error_unit == ErrorUnit::Deg {
            w.error_scale = DEG_PER_RAD;
        }
        Ok(w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignSection {
    pub horizon_s: f64,
    pub haptic_std_deg: f64,
    pub haptic_bias_mode: HapticBiasMode,
    pub partner_model: PartnerModel,
    pub initial_position_error_deg: f64,
    pub initial_velocity_error_deg_per_s: f64,
}

impl Default for DesignSection {
    fn default() -> Self {
        Self {
            horizon_s: 20.0,
            haptic_std_deg: 0.05,
            haptic_bias_mode: HapticBiasMode::SignSymmetric,
            partner_model: PartnerModel::OneShot,
            initial_position_error_deg: 0.0,
            initial_velocity_error_deg_per_s: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseGridSection {
    pub own_bias_deg: Vec<f64>,
    pub partner_bias_deg: Vec<f64>,
    pub std_deg: f64,
}

impl Default for NoiseGridSection {
    fn default() -> Self {
        let levels: Vec<f64> = (0..8).map(f64::from).collect();
        Self {
            own_bias_deg: levels.clone(),
            partner_bias_deg: levels,
            std_deg: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetSection {
    pub amplitude_deg: f64,
    pub alpha_rad_per_s: f64,
    pub beta_rad_per_s: f64,
    pub duration_s: f64,
}

impl From<TargetParams> for TargetSection {
    fn from(t: TargetParams) -> Self {
        Self {
            amplitude_deg: t.amplitude_deg,
            alpha_rad_per_s: t.alpha_rad_per_s,
            beta_rad_per_s: t.beta_rad_per_s,
            duration_s: t.duration_s,
        }
    }
}

impl From<TargetSection> for TargetParams {
    fn from(t: TargetSection) -> Self {
        Self {
            amplitude_deg: t.amplitude_deg,
            alpha_rad_per_s: t.alpha_rad_per_s,
            beta_rad_per_s: t.beta_rad_per_s,
            duration_s: t.duration_s,
        }
    }
}

impl Default for TargetSection {
    fn default() -> Self {
        TargetParams::robot_robot().into()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobotRobotSection {
    pub target: TargetSection,
    pub trials_per_cell: usize,
}

impl Default for RobotRobotSection {
    fn default() -> Self {
        Self {
            target: TargetSection::default(),
            trials_per_cell: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HumanSection {
    pub delta_sharp_deg: f64,
    pub delta_noisy_deg: f64,
    pub effort_weight: f64,
    pub noise_std_deg: f64,
}

impl Default for HumanSection {
    fn default() -> Self {
        let p = HumanParams::nominal();
        Self {
            delta_sharp_deg: p.delta_sharp_deg,
            delta_noisy_deg: p.delta_noisy_deg,
            effort_weight: p.effort_weight,
            noise_std_deg: 0.05,
        }
    }
}

impl HumanSection {
    pub fn params(&self) -> HumanParams {
        HumanParams {
            delta_sharp_deg: self.delta_sharp_deg,
            delta_noisy_deg: self.delta_noisy_deg,
            effort_weight: self.effort_weight,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HumanRobotSection {
    pub target: TargetSection,
    pub robot_noisy_bias_deg: f64,
    pub robot_noisy_std_deg: f64,
    pub trials_per_condition: usize,
}

impl Default for HumanRobotSection {
    fn default() -> Self {
        Self {
            target: TargetParams::human_robot().into(),
            robot_noisy_bias_deg: 7.01,
            robot_noisy_std_deg: 0.05,
            trials_per_condition: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PsoSection {
    pub particles: usize,
    pub iterations: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    pub velocity_clamp: f64,
    pub delta_bounds_deg: (f64, f64),
    pub effort_weight_bounds: (f64, f64),
}

impl Default for PsoSection {
    fn default() -> Self {
        let f = FitConfig::new(0);
        Self {
            particles: f.pso.particles,
            iterations: f.pso.iterations,
            inertia: f.pso.inertia,
            cognitive: f.pso.cognitive,
            social: f.pso.social,
            velocity_clamp: f.pso.velocity_clamp,
            delta_bounds_deg: f.pso.bounds[0],
            effort_weight_bounds: f.pso.bounds[2],
        }
    }
}

impl ConfigFile {
    /// Parses JSON, reporting the offending line and key on failure.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("line {}, column {}: {e}", e.line(), e.column())))?;
        cfg.validate().map_err(|e| match e {
            Error::Config(m) => Error::Config(m),
            other => Error::Config(other.to_string()),
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.design()?;
        self.sim().validate(self.robot_robot.target.duration_s)?;
        TargetParams::from(self.robot_robot.target).spec()?;
        TargetParams::from(self.human_robot.target).spec()?;
        self.experiment_connection()?;
        self.own_grid()?;
        self.partner_grid()?;
        self.fit(self.seed).pso.validate()?;
        Ok(())
    }

    pub fn sim(&self) -> SimConfig {
        SimConfig {
            dt: self.simulation.dt_s,
            substeps: self.simulation.substeps,
            ..SimConfig::default()
        }
    }

    pub fn design(&self) -> Result<DesignConfig> {
        let cfg = DesignConfig {
            inertia: self.agent.inertia_kg_m2,
            ratio: self.agent.viscoelastic_ratio_s,
            connection: ConnectionSpec::new(
                self.connection.design_stiffness_nm_per_rad,
                self.connection.damping_nms_per_rad,
            )?,
            weights: self.cost.weights()?,
            dt: self.simulation.dt_s,
            horizon: self.design.horizon_s,
            haptic_std: deg_to_rad(self.design.haptic_std_deg),
            motor_std: self.agent.motor_std_nm,
            init: StateMoments {
                m: nalgebra::Vector2::new(
                    deg_to_rad(self.design.initial_position_error_deg),
                    deg_to_rad(self.design.initial_velocity_error_deg_per_s),
                ),
                ..StateMoments::zero()
            },
            bias_mode: self.design.haptic_bias_mode,
            partner_model: self.design.partner_model,
        };
        if !(cfg.horizon > 0.0 && cfg.dt > 0.0 && cfg.haptic_std >= 0.0) {
            return Err(Error::Config(
                "design.horizon_s, simulation.dt_s must be positive and design.haptic_std_deg non-negative".into(),
            ));
        }
        cfg.agent(0.5, NoiseSpec::zero())?;
        Ok(cfg)
    }

    pub fn experiment_connection(&self) -> Result<ConnectionSpec> {
        ConnectionSpec::new(
            self.connection.experiment_stiffness_nm_per_rad,
            self.connection.damping_nms_per_rad,
        )
    }

    pub fn own_grid(&self) -> Result<Vec<NoiseSpec>> {
        crate::experiments::noise_grid(&self.noise_grid.own_bias_deg, self.noise_grid.std_deg)
    }

    pub fn partner_grid(&self) -> Result<Vec<NoiseSpec>> {
        crate::experiments::noise_grid(&self.noise_grid.partner_bias_deg, self.noise_grid.std_deg)
    }

    pub fn fit(&self, seed: u64) -> FitConfig {
        let p = &self.pso;
        let mut pso = PsoConfig::new(
            vec![p.delta_bounds_deg, p.delta_bounds_deg, p.effort_weight_bounds],
            seed,
        );
        pso.particles = p.particles;
        pso.iterations = p.iterations;
        pso.inertia = p.inertia;
        pso.cognitive = p.cognitive;
        pso.social = p.social;
        pso.velocity_clamp = p.velocity_clamp;
        FitConfig {
            pso,
            design: self.design().unwrap_or_default(),
            noise_std_deg: self.human.noise_std_deg,
        }
    }

    pub fn human_robot_manifest(&self, seed: u64) -> HumanRobotManifest {
        let h = &self.human_robot;
        HumanRobotManifest {
            dt_s: self.simulation.dt_s,
            substeps: self.simulation.substeps,
            target: h.target.into(),
            robot_noisy_bias_deg: h.robot_noisy_bias_deg,
            robot_noisy_std_deg: h.robot_noisy_std_deg,
            human_std_deg: self.human.noise_std_deg,
            stiffness_nm_per_rad: self.connection.experiment_stiffness_nm_per_rad,
            trials_per_condition: h.trials_per_condition,
            ..HumanRobotManifest::new(seed, self.human.params())
        }
    }
}

/// Human-human targets: one entry per condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetsFile {
    #[serde(default)]
    pub note: String,
    pub conditions: BTreeMap<Condition, ConditionTarget>,
}

impl TargetsFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| {
            Error::Config(format!(
                "{}: line {}, column {}: {e}",
                path.display(),
                e.line(),
                e.column()
            ))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let c = ConfigFile::from_json("{}").unwrap();
        assert_eq!(c, ConfigFile::default());
        let d = c.design().unwrap();
        let reference = DesignConfig::default();
        assert_eq!(d.weights, reference.weights);
        assert_eq!(d.connection, reference.connection);
        assert!((d.haptic_std - reference.haptic_std).abs() < 1e-18);
        assert_eq!(c.own_grid().unwrap().len(), 8);
    }

    #[test]
    fn unknown_key_is_rejected_with_location() {
        let err = ConfigFile::from_json("{\n  \"connection\": {\"stiffness\": 3}\n}").unwrap_err();
        let Error::Config(msg) = err else { panic!("{err:?}") };
        assert!(msg.contains("line 2"), "{msg}");
        assert!(msg.contains("stiffness"), "{msg}");
    }

    #[test]
    fn invalid_values_are_config_errors() {
        assert!(matches!(
            ConfigFile::from_json(r#"{"agent": {"inertia_kg_m2": -1}}"#),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            ConfigFile::from_json(r#"{"simulation": {"dt_s": 0}}"#),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn shipped_default_config_matches_defaults() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.json");
        assert_eq!(ConfigFile::load(&path).unwrap(), ConfigFile::default());
    }

    #[test]
    fn round_trips() {
        let c = ConfigFile::default();
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(ConfigFile::from_json(&s).unwrap(), c);
    }

    #[test]
    fn targets_parse() {
        let t: TargetsFile =
            serde_json::from_str(r#"{"conditions": {"SS": {"error_deg": 1.0, "cocontraction": 0.2}}}"#).unwrap();
        assert_eq!(t.conditions.len(), 1);
    }
}
