//! Command-line front end for the transfer-design toolkit.
//!
//! One subcommand per workflow: `solve` fits a shaped transfer, `sweep` runs
//! the penalty-weight trade study, `validate` replays a solution open loop
//! against the full dynamics, `mintime` runs the direct-collocation baseline,
//! and `compare` puts the shaped and minimum-time answers side by side.
//!
//! Exit codes: 0 on success, 1 for configuration or I/O problems, 2 when a
//! solver hit its iteration budget, 3 when the result is infeasible (or an
//! open-loop replay missed its deviation thresholds).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ffsb::scenario::load_scenario;
use ffsb::{
    integrate_open_loop, solve_min_time, sweep_with_mode, IntegratorOptions, NlpOptions,
    NlpStatus, OptimalSolution, ScenarioConfig, ShapeProblem, ShapeSolution, SweepMode,
    TrajectoryProfile,
};

#[derive(Parser)]
#[command(name = "ffsb-cli", version, about = "Shape-based low-thrust transfer design")]
struct Cli {
    /// Log filter: off, error, warn, info, debug, trace. RUST_LOG overrides.
    #[arg(long, global = true, default_value = "warn")]
    log_level: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a shaped transfer for a scenario file.
    Solve {
        scenario: PathBuf,
        /// Write trajectory.csv and run.manifest here.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Shaping solves across a set of penalty weights.
    Sweep {
        scenario: PathBuf,
        /// Comma-separated weights; the scenario's own omega is ignored.
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "0.0,0.01,0.05,0.1,0.2,0.3,0.5,0.7,0.9,0.99"
        )]
        omegas: Vec<f64>,
        #[arg(long, value_enum, default_value_t = Mode::Warm)]
        mode: Mode,
        /// Write sweep.csv and run.manifest here.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Replay the shaped thrust program open loop and score the deviation.
    Validate {
        scenario: PathBuf,
        /// Sample count for the replay grid.
        #[arg(long, default_value_t = 400)]
        samples: usize,
        /// Relative coefficient perturbation applied before the replay.
        #[arg(long, default_value_t = 0.0)]
        perturb: f64,
        /// Draw the perturbation from entropy instead of the fixed seed.
        #[arg(long)]
        seedless: bool,
        /// Largest tolerated radius deviation, fraction of the target radius.
        #[arg(long, default_value_t = 0.02)]
        radius_tol: f64,
        /// Largest tolerated angle deviation, degrees.
        #[arg(long, default_value_t = 5.0)]
        angle_tol_deg: f64,
        /// Write dense.csv and run.manifest here.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Solve the minimum-time transfer by direct collocation.
    Mintime {
        scenario: PathBuf,
        #[arg(long, default_value_t = 80)]
        segments: usize,
        /// Write trajectory.csv and run.manifest here.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Shaped transfer and minimum-time baseline side by side.
    Compare {
        scenario: PathBuf,
        #[arg(long, default_value_t = 80)]
        segments: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    /// Solve weights in order, each warm-started from the last.
    Warm,
    /// Solve weights independently across threads.
    Cold,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            // Bad arguments are configuration errors, same as a bad file.
            eprint!("{e}");
            return ExitCode::from(1);
        }
        Err(e) => {
            // --help / --version land here.
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(&cli.log_level))
        .init();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

type CliError = Box<dyn std::error::Error>;

fn run(command: Command) -> Result<u8, CliError> {
    match command {
        Command::Solve { scenario, out_dir } => solve_cmd(&scenario, out_dir.as_deref()),
        Command::Sweep {
            scenario,
            omegas,
            mode,
            out_dir,
        } => sweep_cmd(&scenario, &omegas, mode, out_dir.as_deref()),
        Command::Validate {
            scenario,
            samples,
            perturb,
            seedless,
            radius_tol,
            angle_tol_deg,
            out_dir,
        } => validate_cmd(
            &scenario,
            samples,
            perturb,
            seedless,
            radius_tol,
            angle_tol_deg,
            out_dir.as_deref(),
        ),
        Command::Mintime {
            scenario,
            segments,
            out_dir,
        } => mintime_cmd(&scenario, segments, out_dir.as_deref()),
        Command::Compare { scenario, segments } => compare_cmd(&scenario, segments),
    }
}

fn status_code(status: NlpStatus) -> u8 {
    match status {
        NlpStatus::Converged => 0,
        NlpStatus::IterationLimit => 2,
        NlpStatus::Infeasible => 3,
    }
}

fn solve_cmd(scenario: &Path, out_dir: Option<&Path>) -> Result<u8, CliError> {
    let cfg = load_scenario(scenario)?;
    let problem = ShapeProblem::new(&cfg)?;
    let sol = problem.solve(&NlpOptions::default())?;

    println!("status      {}", sol.status());
    println!("tof         {:.4} TU ({:.3} h)", sol.tof, cfg.tof_hours(sol.tof));
    println!("fsq         {:.6e}", sol.fsq);
    println!("delta_v     {:.6} DU/TU", sol.delta_v);
    println!("max |ta|    {:.6e} (bound {:.6e})", sol.max_ta, cfg.ta_max);

    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        write_atomic(&dir.join("trajectory.csv"), &trajectory_csv(&sol.profile))?;
        let mut manifest = manifest_header("solve", scenario, &cfg);
        let _ = writeln!(manifest, "status = {}", sol.status());
        let _ = writeln!(manifest, "tof_tu = {}", sol.tof);
        let _ = writeln!(manifest, "tof_hours = {}", cfg.tof_hours(sol.tof));
        let _ = writeln!(manifest, "fsq = {:e}", sol.fsq);
        let _ = writeln!(manifest, "delta_v_dutu = {}", sol.delta_v);
        let _ = writeln!(manifest, "max_ta = {:e}", sol.max_ta);
        write_atomic(&dir.join("run.manifest"), &manifest)?;
    }
    Ok(status_code(sol.status()))
}

fn sweep_cmd(
    scenario: &Path,
    omegas: &[f64],
    mode: Mode,
    out_dir: Option<&Path>,
) -> Result<u8, CliError> {
    let cfg = load_scenario(scenario)?;
    let mode = match mode {
        Mode::Warm => SweepMode::WarmSequential,
        Mode::Cold => SweepMode::ColdParallel,
    };
    let records = sweep_with_mode(&cfg, omegas, &NlpOptions::default(), mode)?;

    let mut csv = String::from("omega,fsq,tof_hours,delta_v,status\n");
    for rec in &records {
        let _ = writeln!(
            csv,
            "{},{:e},{},{},{}",
            rec.omega, rec.fsq, rec.tof_hours, rec.delta_v, rec.status
        );
    }
    print!("{csv}");

    let all_converged = records.iter().all(|r| r.status == NlpStatus::Converged);
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        write_atomic(&dir.join("sweep.csv"), &csv)?;
        let mut manifest = manifest_header("sweep", scenario, &cfg);
        let _ = writeln!(manifest, "n_weights = {}", records.len());
        let _ = writeln!(manifest, "all_converged = {all_converged}");
        write_atomic(&dir.join("run.manifest"), &manifest)?;
    }
    Ok(if all_converged { 0 } else { 2 })
}

fn validate_cmd(
    scenario: &Path,
    samples: usize,
    perturb: f64,
    seedless: bool,
    radius_tol: f64,
    angle_tol_deg: f64,
    out_dir: Option<&Path>,
) -> Result<u8, CliError> {
    let cfg = load_scenario(scenario)?;
    let problem = ShapeProblem::new(&cfg)?;
    let mut sol = problem.solve(&NlpOptions::default())?;

    if perturb != 0.0 {
        perturb_solution(&mut sol, perturb, seedless);
        println!("perturbation {perturb:e} applied to every coefficient");
    }

    let report = integrate_open_loop(&sol, samples.max(2), &IntegratorOptions::default())?;
    let dev = &report.deviation;
    let r_tol = radius_tol * cfg.bcs.r_f;
    let ang_tol = angle_tol_deg.to_radians();

    println!("solver status     {}", sol.status());
    println!(
        "radius deviation  max {:.4e} DU, final {:.4e} DU (tol {:.4e})",
        dev.max_radius, dev.final_radius, r_tol
    );
    println!(
        "angle deviation   max {:.4} deg, final {:.4} deg (tol {:.4})",
        dev.max_angle.to_degrees(),
        dev.final_angle.to_degrees(),
        ang_tol.to_degrees()
    );
    println!(
        "integrator        {} accepted / {} rejected steps",
        report.steps_accepted, report.steps_rejected
    );

    let within = dev.max_radius <= r_tol && dev.max_angle <= ang_tol;
    println!("verdict           {}", if within { "within tolerance" } else { "deviates" });

    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        write_atomic(&dir.join("dense.csv"), &dense_csv(&report.times, &report.propagated))?;
        let mut manifest = manifest_header("validate", scenario, &cfg);
        let _ = writeln!(manifest, "status = {}", sol.status());
        let _ = writeln!(manifest, "perturb = {perturb:e}");
        let _ = writeln!(manifest, "max_radius_dev_du = {:e}", dev.max_radius);
        let _ = writeln!(manifest, "max_angle_dev_rad = {:e}", dev.max_angle);
        let _ = writeln!(manifest, "final_radius_dev_du = {:e}", dev.final_radius);
        let _ = writeln!(manifest, "final_angle_dev_rad = {:e}", dev.final_angle);
        let _ = writeln!(manifest, "within_tolerance = {within}");
        write_atomic(&dir.join("run.manifest"), &manifest)?;
    }

    if !within {
        return Ok(3);
    }
    Ok(status_code(sol.status()))
}

fn mintime_cmd(scenario: &Path, segments: usize, out_dir: Option<&Path>) -> Result<u8, CliError> {
    let cfg = load_scenario(scenario)?;
    let sol = solve_min_time(&cfg, segments)?;
    print_mintime(&sol);

    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        write_atomic(&dir.join("trajectory.csv"), &mintime_csv(&sol))?;
        let mut manifest = manifest_header("mintime", scenario, &cfg);
        let _ = writeln!(manifest, "segments = {}", sol.grid.n_segments);
        let _ = writeln!(manifest, "status = {}", sol.status);
        let _ = writeln!(manifest, "tof_tu = {}", sol.grid.tof);
        let _ = writeln!(manifest, "tof_hours = {}", sol.tof_hours);
        let _ = writeln!(manifest, "defect_norm = {:e}", sol.defect_norm);
        let _ = writeln!(
            manifest,
            "saturation_fraction = {}",
            ffsb::collocation::stats::saturation_fraction(&sol)
        );
        write_atomic(&dir.join("run.manifest"), &manifest)?;
    }
    Ok(status_code(sol.status))
}

fn print_mintime(sol: &OptimalSolution) {
    println!("status      {}", sol.status);
    println!("tof         {:.4} TU ({:.3} h)", sol.grid.tof, sol.tof_hours);
    println!("defect      {:.3e}", sol.defect_norm);
    println!(
        "saturation  {:.3} (coast {:.3})",
        ffsb::collocation::stats::saturation_fraction(sol),
        ffsb::collocation::stats::coast_fraction(sol)
    );
}

fn compare_cmd(scenario: &Path, segments: usize) -> Result<u8, CliError> {
    let cfg = load_scenario(scenario)?;
    let problem = ShapeProblem::new(&cfg)?;
    let shaped = problem.solve(&NlpOptions::default())?;
    let optimal = solve_min_time(&cfg, segments)?;

    println!("{:<18}{:>14}{:>14}", "", "shaped", "min-time");
    println!(
        "{:<18}{:>14.3}{:>14.3}",
        "tof_hours",
        cfg.tof_hours(shaped.tof),
        optimal.tof_hours
    );
    println!(
        "{:<18}{:>14.4}{:>14.4}",
        "delta_v_dutu",
        shaped.delta_v,
        optimal.grid.tof / optimal.grid.n_segments as f64
            * optimal
                .grid
                .controls
                .windows(2)
                .map(|w| 0.5 * (w[0].abs() + w[1].abs()))
                .sum::<f64>()
    );
    println!(
        "{:<18}{:>14.6}{:>14.6}",
        "max_ta", shaped.max_ta,
        optimal.grid.controls.iter().fold(0.0f64, |m, &c| m.max(c.abs()))
    );
    println!(
        "{:<18}{:>14}{:>14}",
        "status",
        shaped.status().to_string(),
        optimal.status.to_string()
    );

    Ok(status_code(shaped.status()).max(status_code(optimal.status)))
}

/// Multiply every Fourier coefficient by (1 + eps·u), u uniform on [-1, 1].
fn perturb_solution(sol: &mut ShapeSolution, eps: f64, seedless: bool) {
    let mut rng = if seedless {
        ChaCha8Rng::from_entropy()
    } else {
        ChaCha8Rng::seed_from_u64(0x0F_F5_B0)
    };
    for c in sol.r_coeffs.iter_mut().chain(sol.theta_coeffs.iter_mut()) {
        *c *= 1.0 + eps * rng.gen_range(-1.0..=1.0);
    }
}

fn trajectory_csv(profile: &TrajectoryProfile) -> String {
    let mut csv = String::from("t,r,theta,rdot,thetadot,ta,alpha\n");
    for (s, th) in profile.states.iter().zip(&profile.thrust) {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            s.t, s.r, s.theta, s.rdot, s.thetadot, th.ta, th.alpha
        );
    }
    csv
}

fn mintime_csv(sol: &OptimalSolution) -> String {
    let mut csv = String::from("t,r,theta,rdot,thetadot,ta,alpha\n");
    for (state, th) in sol.grid.states.iter().zip(&sol.thrust) {
        let [r, theta, rdot, thetadot] = *state;
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            th.t, r, theta, rdot, thetadot, th.ta, th.alpha
        );
    }
    csv
}

fn dense_csv(times: &[f64], states: &[[f64; 4]]) -> String {
    let mut csv = String::from("t,r,theta,rdot,thetadot\n");
    for (t, s) in times.iter().zip(states) {
        let _ = writeln!(csv, "{},{},{},{},{}", t, s[0], s[1], s[2], s[3]);
    }
    csv
}

fn manifest_header(command: &str, scenario: &Path, cfg: &ScenarioConfig) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "command = {command}");
    let _ = writeln!(s, "scenario = {}", scenario.display());
    s.push_str(&cfg.echo());
    s
}

/// Write through a sibling temp file and rename, so readers never see a
/// half-written file.
fn write_atomic(path: &Path, content: &str) -> std::io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, content)?;
    std::fs::rename(&tmp, path)
}
