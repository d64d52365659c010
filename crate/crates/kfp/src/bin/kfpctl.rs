//! Command-line front end: `analyze` reports spectrum and stabilizability,
//! `riccati` designs and stores the feedback artifact, `simulate`
//! integrates the closed loop against a stored artifact, and `verify` runs
//! the acceptance checks. Every run is driven by one flat `key = value`
//! config file; outputs are deterministic (floats serialize with 17
//! significant digits, and the numerical kernels are single-threaded), so
//! rerunning a command with the same config reproduces identical bytes.

use clap::{Args, Parser, Subcommand};
use kfp::analyze::hautus_check;
use kfp::config::RunConfig;
use kfp::container::{metadata_diff, Container, LockGuard};
use kfp::error::{KfpError, Result};
use kfp::simulate::{decay_fit, make_initial, run_simulation};
use kfp::verify::{build_system, design_feedback, render_table, run_all, System};
use matkernel::DenseMatrix;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "kfpctl",
    version,
    about = "Kinetic Fokker-Planck discretization, feedback design, and simulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Assemble the model, validate the grid, and report the spectrum and
    /// the stabilizability test (exit 1 if any unstable mode is invisible)
    Analyze(CommonArgs),
    /// Solve the shifted Riccati equation and store the feedback artifact
    Riccati(RiccatiArgs),
    /// Integrate the (un)controlled closed loop against a stored artifact
    Simulate(SimulateArgs),
    /// Run every acceptance check and print the pass/fail table
    Verify,
}

#[derive(Args)]
struct CommonArgs {
    /// Configuration file (flat `key = value`); built-in defaults when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output.dir` from the config)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RiccatiArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Replace existing output files
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Feedback artifact written by `riccati` (default: OUT/pi.kfpbin)
    #[arg(long)]
    pi: Option<PathBuf>,
    /// Apply the stored feedback law (the default)
    #[arg(long, conflicts_with = "uncontrolled")]
    controlled: bool,
    /// Integrate the free dynamics instead
    #[arg(long)]
    uncontrolled: bool,
    /// Comma-separated times at which to write full-state snapshot files
    #[arg(long, value_delimiter = ',')]
    snapshot_times: Vec<f64>,
    /// Replace existing output files
    #[arg(long)]
    force: bool,
}

fn main() {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Analyze(args) => cmd_analyze(&args),
        Command::Riccati(args) => cmd_riccati(&args),
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Verify => cmd_verify(),
    };
    match outcome {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(1);
        }
    }
}

fn load_config(common: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

/// Writes text to `dir/name`, refusing to replace an existing file unless
/// `force` is set (same contract as the binary artifact writer).
fn write_text(dir: &Path, name: &str, text: &str, force: bool) -> Result<PathBuf> {
    let path = dir.join(name);
    if path.exists() && !force {
        return Err(KfpError::Io(std::io::Error::new(
            std::io::ErrorKind::AlreadyExists,
            format!(
                "refusing to overwrite existing '{}' (pass --force to replace it)",
                path.display()
            ),
        )));
    }
    std::fs::write(&path, text)?;
    Ok(path)
}

fn cmd_analyze(args: &CommonArgs) -> Result<i32> {
    let cfg = load_config(args)?;
    let sys = build_system(&cfg)?;
    println!(
        "assembled {}×{} grid ({} nodes); invariant direction: eigenvalue ≈ {:.3e}, \
         residual {:.3e}, candidate overlap {:.12}",
        sys.bundle.grid.points_x(),
        sys.bundle.grid.points_v(),
        sys.bundle.n(),
        sys.invariant.eigenvalue,
        sys.invariant.residual,
        sys.invariant.overlap
    );
    println!(
        "deflation defects: row {:.3e}, column {:.3e}",
        sys.deflated.defect_row, sys.deflated.defect_col
    );

    let b_hats: Vec<Vec<f64>> =
        sys.deflated.controls.iter().map(|c| c.b_hat.clone()).collect();
    let report = hautus_check(&sys.deflated.a_hat, &b_hats, cfg.delta)?;

    let mut csv = String::from("index,re,im\n");
    for (i, e) in report.spectrum.eigenvalues.iter().enumerate() {
        csv.push_str(&format!("{i},{:.16e},{:.16e}\n", e.re, e.im));
    }
    let _lock = LockGuard::acquire(&cfg.out_dir)?;
    let spec_path = write_text(&cfg.out_dir, "spectrum.csv", &csv, true)?;
    let json_path = write_text(&cfg.out_dir, "stabilizability.json", &report.to_json(), true)?;

    println!(
        "spectrum: {} eigenvalues, leading cluster of {} (gap at |Re λ| = {:.6}){}",
        report.spectrum.eigenvalues.len(),
        report.spectrum.gap_index,
        report.spectrum.gap_value,
        if report.spectrum.no_discernible_gap { " — WARNING: gap is weak" } else { "" }
    );
    println!("modes with Re λ > −{}: {}", report.delta, report.modes.len());
    for m in &report.modes {
        let best = m.magnitudes.iter().fold(0.0f64, |a, &b| a.max(b));
        println!(
            "  λ = {:+.6} {:+.6}i  max input magnitude {:.3e}  {}",
            m.re,
            m.im,
            best,
            if m.passed { "visible" } else { "NOT VISIBLE" }
        );
    }
    println!("wrote {} and {}", spec_path.display(), json_path.display());
    if report.passed {
        println!("stabilizability: PASS");
        Ok(0)
    } else {
        println!("stabilizability: FAIL — some unstable mode is invisible to the inputs");
        Ok(1)
    }
}

fn cmd_riccati(args: &RiccatiArgs) -> Result<i32> {
    let cfg = load_config(&args.common)?;
    let sys = build_system(&cfg)?;
    let b_hats: Vec<Vec<f64>> =
        sys.deflated.controls.iter().map(|c| c.b_hat.clone()).collect();
    // Validates δ against the spectral gap and the modes' visibility before
    // spending minutes on the large solve.
    let hautus = hautus_check(&sys.deflated.a_hat, &b_hats, cfg.delta)?;
    if !hautus.passed {
        return Err(KfpError::Stabilizability(
            "an unstable mode is invisible to the inputs; the shifted Riccati equation \
             has no stabilizing solution with these control shapes"
                .into(),
        ));
    }

    let design = design_feedback(&sys)?;
    let sol = &design.solution;
    println!(
        "converged in {} iterations: relative residual {:.3e}, closed-loop abscissa {:+.8}",
        sol.history.len(),
        sol.relative_residual,
        sol.closed_loop_spectrum.iter().map(|e| e.0).fold(f64::NEG_INFINITY, f64::max)
            - cfg.delta
    );

    let mut container = Container::new();
    container.push_metadata(&cfg.pi_metadata());
    container.push_matrix("pi", &sol.pi);
    container.push_matrix("gain", &design.gain);

    let mut history = String::from("k,update_norm,relative_residual,closed_loop_abscissa\n");
    for h in &sol.history {
        history.push_str(&format!(
            "{},{:.16e},{:.16e},{:.16e}\n",
            h.k, h.update_norm, h.relative_residual, h.closed_loop_abscissa
        ));
    }

    let _lock = LockGuard::acquire(&cfg.out_dir)?;
    let pi_path = cfg.out_dir.join("pi.kfpbin");
    container.save(&pi_path, args.force)?;
    let hist_path = write_text(&cfg.out_dir, "riccati_history.csv", &history, args.force)?;
    println!("wrote {} and {}", pi_path.display(), hist_path.display());
    Ok(0)
}

/// Reconstructs the full-grid state at one sample and renders it as CSV:
/// the weighted-space vector `w = lift(ζ̂) + m₀ŝ` and the density ratio
/// `y = w/t` (zero where the weight underflowed).
fn snapshot_csv(sys: &System, zeta: &[f64], mass_mode: f64, t: f64) -> String {
    let mut w = sys.deflated.lift(zeta);
    for (wk, sk) in w.iter_mut().zip(&sys.bundle.s_hat) {
        *wk += mass_mode * sk;
    }
    let grid = &sys.bundle.grid;
    let pv = grid.points_v();
    let mut csv = format!("# state snapshot at t = {t}\nx,v,density_ratio,weighted_state\n");
    for i in 0..grid.points_x() {
        for j in 0..pv {
            let k = i * pv + j;
            let tk = sys.bundle.t_diag[k];
            let ratio = if tk > 0.0 { w[k] / tk } else { 0.0 };
            csv.push_str(&format!(
                "{:.16e},{:.16e},{:.16e},{:.16e}\n",
                grid.x(i),
                grid.v(j),
                ratio,
                w[k]
            ));
        }
    }
    csv
}

fn cmd_simulate(args: &SimulateArgs) -> Result<i32> {
    let cfg = load_config(&args.common)?;
    let controlled = !args.uncontrolled;
    let mode = if controlled { "controlled" } else { "uncontrolled" };

    for &t in &args.snapshot_times {
        if !(t.is_finite() && (0.0..=cfg.horizon).contains(&t)) {
            return Err(KfpError::Config(format!(
                "snapshot time {t} lies outside the horizon [0, {}]",
                cfg.horizon
            )));
        }
    }

    let sys = build_system(&cfg)?;

    let pi_path =
        args.pi.clone().unwrap_or_else(|| cfg.out_dir.join("pi.kfpbin"));
    let container = Container::load(&pi_path)?;
    let diff = metadata_diff(&cfg.pi_metadata(), &container.metadata()?);
    if !diff.is_empty() {
        return Err(KfpError::Simulate(format!(
            "feedback artifact '{}' was produced under a different configuration; \
             refusing to mix them. Mismatched keys:\n  {}",
            pi_path.display(),
            diff.join("\n  ")
        )));
    }
    let gain: Option<&DenseMatrix> = if controlled {
        Some(container.matrix("gain").ok_or_else(|| {
            KfpError::Container(format!("'{}' holds no gain matrix", pi_path.display()))
        })?)
    } else {
        None
    };

    let initial = make_initial(
        &cfg.initial_kind(),
        &sys.bundle,
        &sys.deflated,
        cfg.effective_amplitude(),
    )?;

    let mut icfg = cfg.integrator_config();
    if !args.snapshot_times.is_empty() {
        let times = icfg.output_times.get_or_insert_with(Vec::new);
        times.extend(args.snapshot_times.iter().copied());
        times.sort_by(|a, b| a.partial_cmp(b).expect("validated finite"));
        times.dedup();
    }

    let traj = run_simulation(&sys.bundle, &sys.deflated, gain, &initial, cfg.horizon, &icfg)?;
    let fit = decay_fit(&traj, None)?;
    let mass0 = traj.mass.first().copied().unwrap_or(f64::NAN);
    let drift = traj.mass.iter().fold(0.0f64, |m, &v| m.max((v - mass0).abs()));
    let summary = serde_json::json!({
        "mode": mode,
        "initial_state": initial.label,
        "initial_norm": traj.norm_zeta.first(),
        "terminal_norm": traj.norm_zeta.last(),
        "fitted_slope": fit.slope,
        "fit_window_residual": fit.residual,
        "fit_truncated_at_underflow": fit.truncated,
        "mass": mass0,
        "mass_drift": drift,
        "samples": traj.times.len(),
        "horizon": cfg.horizon,
    });
    let summary_text = serde_json::to_string_pretty(&summary).expect("static keys");

    let _lock = LockGuard::acquire(&cfg.out_dir)?;
    let traj_path = write_text(
        &cfg.out_dir,
        &format!("trajectory_{mode}.csv"),
        &traj.to_csv(),
        args.force,
    )?;
    let summary_path =
        write_text(&cfg.out_dir, &format!("summary_{mode}.json"), &summary_text, args.force)?;
    println!("{summary_text}");
    println!("wrote {} and {}", traj_path.display(), summary_path.display());

    for &t in &args.snapshot_times {
        let idx = traj
            .times
            .iter()
            .position(|&ti| ti == t)
            .expect("snapshot times were merged into the sample times");
        let csv = snapshot_csv(&sys, &traj.states[idx], initial.mass_mode, t);
        let path = write_text(
            &cfg.out_dir,
            &format!("snapshot_{mode}_t{t}.csv"),
            &csv,
            args.force,
        )?;
        println!("wrote {}", path.display());
    }
    Ok(0)
}

fn cmd_verify() -> Result<i32> {
    let reports = run_all();
    print!("{}", render_table(&reports));
    Ok(if kfp::verify::all_passed(&reports) { 0 } else { 1 })
}
