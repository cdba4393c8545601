//! Command-line front end.
//!
//! Exit codes: 0 success, 2 configuration error, 3 missing prerequisite,
//! 4 numerical failure, 1 anything else (I/O).

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::config::{ConfigFile, TargetsFile};
use crate::dynamics::{decode_target, simulate_coupled_pair, AgentConfig, ControllerKind};
use crate::experiments::{
    canonical_hash, export_grid, export_human_robot, export_surface, load_surface, run_human_human_prediction,
    run_human_robot_conditions, run_robot_robot_grid, surface_trend, write_csv, RunManifest, TargetParams,
    GRID_ROWS_FILE, GRID_SUMMARY_FILE, GRID_TESTS_FILE, HUMAN_ROBOT_FILE, SURFACE_JSON_FILE,
};
use crate::pso::fit_human_hyperparams;
use crate::signalgen::{multisine_zeros, sample_start_offset, Channel, NoiseSpec, SeededStream};
use crate::soie::{gains_from_lambda, impedance_surface};
use crate::units::rad_to_deg;
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "soie",
    version,
    about = "Optimal impedance for physically coupled tracking agents"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// JSON configuration file; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 0 uses all cores.
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    #[arg(long, global = true, default_value = "results")]
    pub out_dir: PathBuf,
    /// Sample interval in seconds (overrides the config).
    #[arg(long, global = true)]
    pub dt: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimal impedance over the noise grid, or for a single noise pair.
    Optimize {
        /// Own sensing bias (deg); requires --partner-bias.
        #[arg(long, requires = "partner_bias")]
        own_bias: Option<f64>,
        /// Partner sensing bias (deg); requires --own-bias.
        #[arg(long, requires = "own_bias")]
        partner_bias: Option<f64>,
    },
    /// Robot-robot grid using the surface in the output directory.
    Grid {
        #[arg(long)]
        trials_per_cell: Option<usize>,
        /// Directory holding surface.json (defaults to --out-dir).
        #[arg(long)]
        surface_dir: Option<PathBuf>,
    },
    /// Fit human noise and effort hyperparameters to condition targets.
    Fit {
        /// JSON targets file.
        targets: PathBuf,
    },
    /// Summary tables and trend checks from a results directory.
    Report {
        /// Defaults to --out-dir.
        results_dir: Option<PathBuf>,
    },
    /// Single coupled-pair trial, or the human-robot condition study.
    Simulate {
        #[arg(long, value_enum, default_value_t = Study::Pair)]
        study: Study,
        #[arg(long, default_value_t = 0.3)]
        lambda1: f64,
        #[arg(long, default_value_t = 0.3)]
        lambda2: f64,
        /// Sensing bias of agent 1 (deg).
        #[arg(long, default_value_t = 0.0)]
        bias1: f64,
        /// Sensing bias of agent 2 (deg).
        #[arg(long, default_value_t = 0.0)]
        bias2: f64,
        #[arg(long, default_value_t = 0)]
        trial: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Study {
    Pair,
    HumanRobot,
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Domain(_) | Error::Contract(_) | Error::Json(_) | Error::Csv(_) => 2,
        Error::MissingPrerequisite(_) => 3,
        Error::Numerical(_)
        | Error::NoSteadyState(_)
        | Error::Diverged { .. }
        | Error::DivisionByZero(_)
        | Error::RankDeficient(_)
        | Error::NoNonzeroDifferences
        | Error::AllCandidatesRejected(_) => 4,
        Error::Io(_) => 1,
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let g = cli.global;
    let mut cfg = match &g.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    if let Some(dt) = g.dt {
        cfg.simulation.dt_s = dt;
    }
    cfg.validate().map_err(|e| {
        if let Error::Config(_) = e {
            e
        } else {
            Error::Config(e.to_string())
        }
    })?;
    if g.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(g.jobs)
            .build_global()
            .map_err(|e| Error::Config(format!("--jobs: {e}")))?;
    }
    let out = g.out_dir.as_path();
    match cli.command {
        Command::Optimize { own_bias, partner_bias } => cmd_optimize(&cfg, own_bias.zip(partner_bias), out),
        Command::Grid {
            trials_per_cell,
            surface_dir,
        } => cmd_grid(&cfg, trials_per_cell, surface_dir.as_deref().unwrap_or(out), out),
        Command::Fit { targets } => cmd_fit(&cfg, &targets, out),
        Command::Report { results_dir } => cmd_report(results_dir.as_deref().unwrap_or(out)),
        Command::Simulate {
            study,
            lambda1,
            lambda2,
            bias1,
            bias2,
            trial,
        } => match study {
            Study::Pair => cmd_simulate_pair(&cfg, [lambda1, lambda2], [bias1, bias2], trial, out),
            Study::HumanRobot => cmd_human_robot(&cfg, out),
        },
    }
}

#[derive(Serialize)]
struct SurfaceManifest<'a> {
    experiment_id: &'static str,
    config: &'a ConfigFile,
    own_bias_deg: Vec<f64>,
    partner_bias_deg: Vec<f64>,
}

fn cmd_optimize(cfg: &ConfigFile, single: Option<(f64, f64)>, out: &Path) -> Result<()> {
    let design = cfg.design()?;
    let std = cfg.noise_grid.std_deg;
    let (own, partner) = match single {
        Some((o, p)) => (
            vec![NoiseSpec::from_degrees(o, std)?],
            vec![NoiseSpec::from_degrees(p, std)?],
        ),
        None => (cfg.own_grid()?, cfg.partner_grid()?),
    };
    let hash = canonical_hash(&SurfaceManifest {
        experiment_id: "impedance_surface",
        config: cfg,
        own_bias_deg: own.iter().map(NoiseSpec::bias_deg).collect(),
        partner_bias_deg: partner.iter().map(NoiseSpec::bias_deg).collect(),
    })?;
    let surface = impedance_surface(&own, &partner, &design)?;

    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "# manifest_hash={hash}")?;
    writeln!(stdout, "# lambda* (rows: own bias deg, columns: partner bias deg)")?;
    write!(stdout, "{:>8}", "")?;
    for p in &partner {
        write!(stdout, " {:>7.2}", p.bias_deg())?;
    }
    writeln!(stdout)?;
    for (i, o) in own.iter().enumerate() {
        write!(stdout, "{:>8.2}", o.bias_deg())?;
        for l in &surface.lambda[i] {
            write!(stdout, " {l:>7.4}")?;
        }
        writeln!(stdout)?;
    }
    if single.is_some() {
        let l = surface.lambda[0][0];
        writeln!(
            stdout,
            "lambda* = {l:.6} (stiffness {:.3} Nm/rad)",
            gains_from_lambda(l)?.stiffness
        )?;
    }
    for p in export_surface(&surface, &hash, out)? {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

fn grid_manifest(cfg: &ConfigFile, trials: Option<usize>, surface_dir: &Path) -> Result<RunManifest> {
    let surface = load_surface(surface_dir)?;
    let mut m = RunManifest::robot_robot(cfg.seed, &surface);
    m.dt_s = cfg.simulation.dt_s;
    m.substeps = cfg.simulation.substeps;
    m.target = TargetParams::from(cfg.robot_robot.target);
    m.noise_std_deg = cfg.noise_grid.std_deg;
    m.stiffness_nm_per_rad = cfg.connection.experiment_stiffness_nm_per_rad;
    m.damping_nms_per_rad = cfg.connection.damping_nms_per_rad;
    m.inertia_kg_m2 = cfg.agent.inertia_kg_m2;
    m.viscoelastic_ratio_s = cfg.agent.viscoelastic_ratio_s;
    m.motor_std_nm = cfg.agent.motor_std_nm;
    m.trials_per_cell = trials.unwrap_or(cfg.robot_robot.trials_per_cell);
    if m.trials_per_cell == 0 {
        return Err(Error::Config("trials per cell must be >= 1".into()));
    }
    if surface.own != surface.partner {
        return Err(Error::Config(format!(
            "{SURFACE_JSON_FILE} must use the same noise levels on both axes"
        )));
    }
    Ok(m)
}

fn cmd_grid(cfg: &ConfigFile, trials: Option<usize>, surface_dir: &Path, out: &Path) -> Result<()> {
    let manifest = grid_manifest(cfg, trials, surface_dir)?;
    let result = run_robot_robot_grid(&manifest)?;
    println!("# manifest_hash={}", result.manifest_hash);
    println!("{} trials", result.rows.len());
    for p in export_grid(&result, out)? {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct FitFile {
    manifest_hash: String,
    delta_sharp_deg: f64,
    delta_noisy_deg: f64,
    effort_weight: f64,
    objective: f64,
}

#[derive(Serialize)]
struct FitManifest<'a> {
    experiment_id: &'static str,
    config: &'a ConfigFile,
    targets: &'a TargetsFile,
}

#[derive(Serialize)]
struct PredictionRow {
    condition: String,
    lambda: f64,
    error_deg: f64,
    target_cocontraction: f64,
    target_error_deg: f64,
}

fn cmd_fit(cfg: &ConfigFile, targets_path: &Path, out: &Path) -> Result<()> {
    let targets = TargetsFile::load(targets_path)?;
    let hash = canonical_hash(&FitManifest {
        experiment_id: "human_fit",
        config: cfg,
        targets: &targets,
    })?;
    let fit = fit_human_hyperparams(&targets.conditions, &cfg.fit(cfg.seed))?;
    let p = fit.params;
    println!("# manifest_hash={hash}");
    println!(
        "delta_sharp_deg={:.6} delta_noisy_deg={:.6} effort_weight={:.6} objective={:.3e}",
        p.delta_sharp_deg, p.delta_noisy_deg, p.effort_weight, fit.objective
    );
    fs::create_dir_all(out)?;
    let file = FitFile {
        manifest_hash: hash.clone(),
        delta_sharp_deg: p.delta_sharp_deg,
        delta_noisy_deg: p.delta_noisy_deg,
        effort_weight: p.effort_weight,
        objective: fit.objective,
    };
    let path = out.join("fit.json");
    fs::write(&path, serde_json::to_string_pretty(&file)? + "\n")?;
    eprintln!("wrote {}", path.display());

    let preds = run_human_human_prediction(&p, cfg.human.noise_std_deg, &cfg.design()?)?;
    let rows: Vec<PredictionRow> = preds
        .iter()
        .map(|x| {
            let t = targets.conditions[&x.condition];
            PredictionRow {
                condition: x.condition.to_string(),
                lambda: x.lambda,
                error_deg: x.error_deg,
                target_cocontraction: t.cocontraction,
                target_error_deg: t.error_deg,
            }
        })
        .collect();
    let path = out.join("human_human.csv");
    write_csv(
        &path,
        &hash,
        &[
            "condition",
            "lambda",
            "error_deg",
            "target_cocontraction",
            "target_error_deg",
        ],
        &rows,
    )?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct PairManifest<'a> {
    experiment_id: &'static str,
    config: &'a ConfigFile,
    lambda: [f64; 2],
    bias_deg: [f64; 2],
    trial: u64,
}

#[derive(Serialize)]
struct SampleRow {
    t_s: f64,
    target_deg: f64,
    q1_deg: f64,
    q2_deg: f64,
    sensed1_deg: f64,
    sensed2_deg: f64,
    tau1_nm: f64,
    decoded1_deg: f64,
    decoded2_deg: f64,
}

fn cmd_simulate_pair(cfg: &ConfigFile, lambda: [f64; 2], bias: [f64; 2], trial: u64, out: &Path) -> Result<()> {
    let hash = canonical_hash(&PairManifest {
        experiment_id: "single_pair",
        config: cfg,
        lambda,
        bias_deg: bias,
        trial,
    })?;
    let target = TargetParams::from(cfg.robot_robot.target).spec()?;
    let zeros = multisine_zeros(target.alpha, target.beta, 0.0, 10.0);
    let stream = SeededStream::new(cfg.seed, trial, Channel::Sensing);
    let target = target.with_start_offset(sample_start_offset(stream, &zeros)?)?;
    let agent = |i: usize| -> Result<AgentConfig> {
        Ok(AgentConfig {
            inertia: cfg.agent.inertia_kg_m2,
            ratio: cfg.agent.viscoelastic_ratio_s,
            motor_std: cfg.agent.motor_std_nm,
            ..AgentConfig::new(lambda[i], NoiseSpec::from_degrees(bias[i], cfg.noise_grid.std_deg)?)?
                .with_controller(ControllerKind::Fixed(lambda[i]))
        })
    };
    let rec = simulate_coupled_pair(
        &agent(0)?,
        &agent(1)?,
        &cfg.experiment_connection()?,
        &target,
        &cfg.sim(),
        stream,
    )?;
    let d1 = decode_target(&rec, lambda[0], 0)?;
    let d2 = decode_target(&rec, lambda[1], 1)?;
    let (a, b) = (&rec.agents[0], &rec.agents[1]);
    let rows: Vec<SampleRow> = (0..a.q.len())
        .map(|i| SampleRow {
            t_s: i as f64 * rec.dt,
            target_deg: rad_to_deg(a.eta[i]),
            q1_deg: rad_to_deg(a.q[i]),
            q2_deg: rad_to_deg(b.q[i]),
            sensed1_deg: rad_to_deg(a.eta_sensed[i]),
            sensed2_deg: rad_to_deg(b.eta_sensed[i]),
            tau1_nm: a.tau[i],
            decoded1_deg: rad_to_deg(d1[i]),
            decoded2_deg: rad_to_deg(d2[i]),
        })
        .collect();
    fs::create_dir_all(out)?;
    let path = out.join("pair_trial.csv");
    write_csv(
        &path,
        &hash,
        &[
            "t_s",
            "target_deg",
            "q1_deg",
            "q2_deg",
            "sensed1_deg",
            "sensed2_deg",
            "tau1_nm",
            "decoded1_deg",
            "decoded2_deg",
        ],
        &rows,
    )?;
    println!("# manifest_hash={hash}");
    let e1 = crate::metrics::rms_tracking_error(&a.q, &a.eta, rec.dt)?;
    let e2 = crate::metrics::rms_tracking_error(&b.q, &b.eta, rec.dt)?;
    println!("error1_deg={e1:.4} error2_deg={e2:.4}");
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn cmd_human_robot(cfg: &ConfigFile, out: &Path) -> Result<()> {
    let result = run_human_robot_conditions(&cfg.human_robot_manifest(cfg.seed))?;
    println!("# manifest_hash={}", result.manifest_hash);
    println!(
        "{:<5} {:<5} {:>8} {:>10} {:>10} {:>10}",
        "cond", "ctrl", "lambda", "k_Nm/rad", "robot_err", "human_err"
    );
    for r in &result.rows {
        println!(
            "{:<5} {:<5} {:>8.4} {:>10.3} {:>10.3} {:>10.3}",
            r.condition,
            r.controller,
            r.robot_lambda,
            r.robot_stiffness_nm_per_rad,
            r.robot_error_deg,
            r.human_error_deg
        );
    }
    for p in export_human_robot(&result, out)? {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

/// Reads a CSV written by [`write_csv`], skipping the hash comment.
fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path)?;
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    r.deserialize().map(|x| x.map_err(Error::from)).collect()
}

#[derive(Deserialize)]
struct RowIn {
    controller: String,
    error_deg: f64,
    effort_nm: f64,
    r1: f64,
    r2: f64,
    snr1_db: f64,
    snr2_db: f64,
    delay1_s: f64,
    delay2_s: f64,
}

#[derive(Deserialize)]
struct LongIn {
    controller: String,
    metric: String,
    value: f64,
}

#[derive(Deserialize)]
struct TestIn {
    metric: String,
    controller: String,
    p: f64,
}

/// Per-controller means of the grid rows, in first-appearance order.
pub fn controller_means(rows_csv: &Path) -> Result<Vec<(String, [f64; 5], usize)>> {
    let rows: Vec<RowIn> = read_rows(rows_csv)?;
    let mut order: Vec<String> = Vec::new();
    let mut acc: BTreeMap<String, ([f64; 5], usize)> = BTreeMap::new();
    for r in &rows {
        if !acc.contains_key(&r.controller) {
            order.push(r.controller.clone());
        }
        let e = acc.entry(r.controller.clone()).or_insert(([0.0; 5], 0));
        let v = [
            r.error_deg,
            r.effort_nm,
            0.5 * (r.r1 + r.r2),
            0.5 * (r.snr1_db + r.snr2_db),
            0.5 * (r.delay1_s + r.delay2_s),
        ];
        for (a, b) in e.0.iter_mut().zip(v) {
            *a += b;
        }
        e.1 += 1;
    }
    Ok(order
        .into_iter()
        .map(|c| {
            let (s, n) = acc[&c];
            (c, s.map(|x| x / n as f64), n)
        })
        .collect())
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn cmd_report(dir: &Path) -> Result<()> {
    let rows_path = dir.join(GRID_ROWS_FILE);
    if !rows_path.exists() {
        return Err(Error::MissingPrerequisite(format!(
            "{} not found; run `soie grid` first",
            rows_path.display()
        )));
    }
    let means = controller_means(&rows_path)?;
    println!(
        "{:<11} {:>7} {:>10} {:>10} {:>8} {:>9} {:>8}",
        "controller", "trials", "error_deg", "effort_nm", "r", "snr_db", "delay_s"
    );
    for (c, v, n) in &means {
        println!(
            "{:<11} {:>7} {:>10.4} {:>10.4} {:>8.4} {:>9.3} {:>8.3}",
            c, n, v[0], v[1], v[2], v[3], v[4]
        );
    }
    let mean_of = |c: ControllerKind, k: usize| means.iter().find(|m| m.0 == c.label()).map(|m| m.1[k]);

    let summary: Vec<LongIn> = read_rows(&dir.join(GRID_SUMMARY_FILE)).unwrap_or_default();
    let metric = |c: ControllerKind, m: &str| {
        summary
            .iter()
            .find(|x| x.controller == c.label() && x.metric == m)
            .map(|x| x.value)
    };
    let tests: Vec<TestIn> = read_rows(&dir.join(GRID_TESTS_FILE)).unwrap_or_default();
    let p_of = |m: &str, c: ControllerKind| {
        tests
            .iter()
            .find(|t| t.metric == m && t.controller == c.label())
            .map(|t| t.p)
    };

    use ControllerKind::{FixedHigh as H, FixedLow as L, Soie as S};
    println!();
    if let Ok(text) = fs::read_to_string(dir.join(SURFACE_JSON_FILE)) {
        let file: crate::experiments::SurfaceFile = serde_json::from_str(&text)?;
        let t = surface_trend(&file.lambda);
        println!(
            "{} surface trend (violations own/partner {}/{}, range own {:.4} > partner {:.4})",
            verdict(t.holds(1)),
            t.own_violations,
            t.partner_violations,
            t.own_range,
            t.partner_range
        );
    }
    if let (Some(es), Some(el), Some(eh)) = (mean_of(S, 1), mean_of(L, 1), mean_of(H, 1)) {
        let sig = [("effort_nm", L), ("effort_nm", H)]
            .iter()
            .all(|(m, c)| p_of(m, *c).is_some_and(|p| p < 0.05));
        println!(
            "{} effort fixed_low < soie < fixed_high, p < 0.05",
            verdict(el < es && es < eh && sig)
        );
    }
    if let (Some(es), Some(el), Some(eh)) = (mean_of(S, 0), mean_of(L, 0), mean_of(H, 0)) {
        let sig = [("error_deg", L), ("error_deg", H)]
            .iter()
            .all(|(m, c)| p_of(m, *c).is_some_and(|p| p < 0.05));
        println!(
            "{} error soie < min(fixed_low, fixed_high), p < 0.05",
            verdict(es < el.min(eh) && sig)
        );
    }
    if let (Some(rs), Some(rl), Some(rh)) = (metric(S, "pooled_r"), metric(L, "pooled_r"), metric(H, "pooled_r")) {
        println!(
            "{} decoded r soie > fixed_low > fixed_high, soie >= 0.7 ({rs:.4}, {rl:.4}, {rh:.4})",
            verdict(rs > rl && rl > rh && rs >= 0.7)
        );
    }
    if let (Some(ss), Some(sl), Some(sh)) = (
        metric(S, "pooled_snr_db"),
        metric(L, "pooled_snr_db"),
        metric(H, "pooled_snr_db"),
    ) {
        println!(
            "{} SNR soie > both ({ss:.3}, {sl:.3}, {sh:.3} dB)",
            verdict(ss > sl && ss > sh)
        );
    }
    if let (Some(ds), Some(dl), Some(dh)) = (
        metric(S, "mean_delay_s"),
        metric(L, "mean_delay_s"),
        metric(H, "mean_delay_s"),
    ) {
        println!(
            "{} delay soie < both ({ds:.3}, {dl:.3}, {dh:.3} s)",
            verdict(ds < dl && ds < dh)
        );
    }
    for c in [H, L] {
        if let Some(r) = metric(c, "error_trend_r") {
            println!(
                "{} error difference trend {} r = {r:.4} >= 0.9",
                verdict(r >= 0.9),
                c.label()
            );
        }
    }
    if let Ok(hr) = read_rows::<crate::experiments::HumanRobotRow>(&dir.join(HUMAN_ROBOT_FILE)) {
        let get = |c: &str, ctrl: &str| hr.iter().find(|r| r.condition == c && r.controller == ctrl);
        let soie = ControllerKind::Soie.label();
        let lam = |c: &str| get(c, soie).map(|r| r.robot_lambda);
        if let (Some(sn), Some(ss), Some(ns), Some(nn)) = (lam("SN"), lam("SS"), lam("NS"), lam("NN")) {
            println!(
                "{} human-robot: sharp-robot lambda above noisy-robot lambda",
                verdict(sn.min(ss) > ns.max(nn))
            );
        }
        for c in ["NS", "NN"] {
            if let (Some(s), Some(h)) = (get(c, soie), get(c, crate::experiments::HIC_LABEL)) {
                let gain = h.robot_error_deg - s.robot_error_deg;
                println!(
                    "{} human-robot {c}: robot error reduction {gain:.3} deg >= 0.5",
                    verdict(gain >= 0.5)
                );
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(exit_code(&Error::Contract("x".into())), 2);
        assert_eq!(exit_code(&Error::MissingPrerequisite("x".into())), 3);
        assert_eq!(exit_code(&Error::Numerical("x".into())), 4);
        assert_eq!(exit_code(&Error::Diverged { trial: 0, step: 1 }), 4);
    }

    #[test]
    fn parses_global_flags_after_subcommand() {
        let cli =
            Cli::try_parse_from(["soie", "grid", "--jobs", "2", "--trials-per-cell", "20", "--seed", "5"]).unwrap();
        assert_eq!(cli.global.jobs, 2);
        assert_eq!(cli.global.seed, Some(5));
        assert!(matches!(
            cli.command,
            Command::Grid {
                trials_per_cell: Some(20),
                ..
            }
        ));
    }

    #[test]
    fn single_bias_requires_both() {
        assert!(Cli::try_parse_from(["soie", "optimize", "--own-bias", "0"]).is_err());
    }
}
