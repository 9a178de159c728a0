//! Command-line front end: config ingestion, run orchestration, artifact
//! persistence and verification.
//!
//! Exit codes: 0 success, 1 solver/validation/threshold failure, 2 config or
//! manifest errors, 3 Picard non-convergence (partial outputs retained).

mod config;
mod manifest;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;

use config::RunConfig;
use manifest::{sha256_hex, OutputEntry, RunManifest};
use mlfrac_core::field_io::{read_field, write_csv, write_field, write_gnuplot_columns};
use mlfrac_core::fracops::TimeGrid;
use mlfrac_core::mlf::{ml_eval, MlParams};
use mlfrac_core::nonlinear::solve_nonlinear;
use mlfrac_core::oracle::{l1_ode_march, residual_check};
use mlfrac_core::symbol::{corollary_asymptotics_check, gershgorin_segments};
use mlfrac_core::{Propagator, SourceSpec, Space, StateField};

const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(name = "mlfrac", version, about = "Spectral solver for time-fractional PDE systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// worker threads (0 = automatic); falls back to MLFRAC_THREADS
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Check a symbol against the admissibility conditions and report R0,
    /// Gershgorin segments and the diagonal-dominance asymptotics.
    ValidateSymbol(RunArgs),
    /// Solve the linear problem and persist fields + manifest.
    SolveLinear(SolveArgs),
    /// Solve the nonlinear problem by Picard iteration.
    SolveNonlinear(SolveArgs),
    /// Re-run the independent oracle against a solve's outputs.
    Verify(VerifyArgs),
    /// Evaluate the two-parameter Mittag-Leffler function.
    MlEval(MlArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// additionally write per-time CSV and gnuplot columns
    #[arg(long)]
    emit_csv: bool,
}

#[derive(Args)]
struct VerifyArgs {
    /// path to a run manifest (manifest.json)
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct MlArgs {
    #[arg(long)]
    rho: f64,
    #[arg(long)]
    mu: f64,
    #[arg(long, allow_hyphen_values = true)]
    z: f64,
    #[arg(long)]
    json: bool,
}

fn main() {
    let cli = Cli::parse();
    let threads = cli
        .threads
        .or_else(|| {
            std::env::var("MLFRAC_THREADS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .unwrap_or(0);
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .ok();
    }
    let outcome = match cli.command {
        Command::ValidateSymbol(args) => cmd_validate(&args),
        Command::SolveLinear(args) => cmd_solve(&args, false),
        Command::SolveNonlinear(args) => cmd_solve(&args, true),
        Command::Verify(args) => cmd_verify(&args),
        Command::MlEval(args) => cmd_ml_eval(&args),
    };
    match outcome {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::exit(2);
        }
    }
}

fn out_dir(cfg: &RunConfig, flag: &Option<PathBuf>, config_path: &Path) -> Result<PathBuf> {
    let dir = flag
        .clone()
        .or_else(|| cfg.output.directory.clone())
        .unwrap_or_else(|| PathBuf::from("mlfrac-out"));
    let dir = if dir.is_absolute() {
        dir
    } else {
        config_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(dir)
    };
    std::fs::create_dir_all(&dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))?;
    Ok(dir)
}

fn base_dir(config_path: &Path) -> PathBuf {
    config_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .to_path_buf()
}

fn cmd_validate(args: &RunArgs) -> Result<i32> {
    let cfg = RunConfig::load(&args.config)?;
    let grid = cfg.build_grid()?;
    let sym = cfg.build_symbol()?;
    let dir = out_dir(&cfg, &args.out, &args.config)?;

    let (report, admissible, summary) = match sym.validate(&grid) {
        Ok(report) => {
            let ok = report.solver_admissible();
            let s = report.summary();
            (report, ok, s)
        }
        Err(mlfrac_core::Error::ValidationFailure { report, summary }) => {
            (*report, false, summary)
        }
        Err(e) => return Err(e.into()),
    };

    // Gershgorin segments + eigenvalues at a few sampled radii, and the
    // diagonal-dominance deviation table (structurally sound symbols only)
    let r_base = if report.r0.is_finite() && report.r0 > 0.0 {
        report.r0
    } else {
        1.0
    };
    let mut gershgorin = Vec::new();
    let mut corollary = serde_json::Value::Null;
    if report.structural_ok() {
        for mult in [1.0, 2.0, 4.0] {
            let mut xi = vec![0.0; sym.dim()];
            xi[0] = r_base * mult;
            let h = sym.eval(&xi);
            let segments = gershgorin_segments(&h)?;
            let eig = mlfrac_core::eig_hermitian(&h)?;
            gershgorin.push(serde_json::json!({
                "xi": xi,
                "segments": segments,
                "eigenvalues": eig.lambdas,
            }));
        }
        let radii: Vec<f64> = [2.0, 4.0, 8.0].iter().map(|m| r_base * m).collect();
        corollary = serde_json::to_value(corollary_asymptotics_check(&sym, &radii)?)?;
    }

    let doc = serde_json::json!({
        "report": report,
        "admissible": admissible,
        "summary": summary,
        "gershgorin": gershgorin,
        "corollary_deviation": corollary,
    });
    let path = dir.join("validation.json");
    std::fs::write(&path, serde_json::to_string_pretty(&doc)? + "\n")?;
    if args.json {
        println!("{}", serde_json::to_string(&doc)?);
    } else {
        println!(
            "symbol {}: {summary} (report: {})",
            if admissible { "admissible" } else { "rejected" },
            path.display()
        );
    }
    Ok(if admissible { 0 } else { 1 })
}

fn cmd_solve(args: &SolveArgs, nonlinear: bool) -> Result<i32> {
    let t_total = Instant::now();
    let cfg = RunConfig::load(&args.config)?;
    let dir = out_dir(&cfg, &args.out, &args.config)?;
    let base = base_dir(&args.config);
    let grid = cfg.build_grid()?;
    let sym = cfg.build_symbol()?;
    let mut timing: BTreeMap<String, u128> = BTreeMap::new();

    let t_val = Instant::now();
    let prop = match Propagator::new(grid.clone(), sym, cfg.problem.beta) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("solver error: {e}");
            return Ok(1);
        }
    };
    timing.insert("validate".into(), t_val.elapsed().as_millis());
    let validation_path = dir.join("validation.json");
    std::fs::write(
        &validation_path,
        serde_json::to_string_pretty(prop.validation_report())? + "\n",
    )?;

    let phi = cfg.build_initial(&grid, &base)?;
    let tail = phi.boundary_tail_fraction()?;
    if tail > 1e-8 {
        eprintln!(
            "warning: initial data carries boundary mass {tail:.3e} (> 1e-8); \
             the domain-truncation contract is violated"
        );
    }
    let source = cfg.build_source(&grid, &base)?;

    let t_solve = Instant::now();
    let mut status = "ok".to_string();
    let mut picard_path = None;
    let fields: Vec<(f64, StateField)> = if nonlinear {
        let rhs = match cfg.build_rhs(&prop, &phi) {
            Ok(r) => r,
            Err(e) => {
                eprintln!("solver error: {e:#}");
                return Ok(1);
            }
        };
        if !source.is_zero() {
            bail!("nonlinear runs take the source through [nonlinear], not [source]");
        }
        let solve_cfg = cfg.solve_config();
        match solve_nonlinear(&prop, &phi, &rhs, &cfg.problem.t_out, &solve_cfg) {
            Ok((fields, report)) => {
                let p = dir.join("picard.json");
                std::fs::write(&p, serde_json::to_string_pretty(&report)? + "\n")?;
                picard_path = Some("picard.json".to_string());
                if report.lipschitz_violations > 0 {
                    eprintln!(
                        "warning: Lipschitz audit found {}/{} violations of the declared L0",
                        report.lipschitz_violations, report.lipschitz_samples
                    );
                }
                if !report.converged {
                    status = "no-convergence".into();
                }
                cfg.problem.t_out.iter().copied().zip(fields).collect()
            }
            Err(e) => {
                eprintln!("solver error: {e}");
                return Ok(1);
            }
        }
    } else {
        match prop.solve_linear(
            &phi,
            &source,
            &cfg.problem.t_out,
            cfg.tolerances.quadrature_nodes,
        ) {
            Ok(fields) => cfg.problem.t_out.iter().copied().zip(fields).collect(),
            Err(e) => {
                eprintln!("solver error: {e}");
                return Ok(1);
            }
        }
    };
    timing.insert("solve".into(), t_solve.elapsed().as_millis());

    let mut outputs = Vec::new();
    for (idx, (t, field)) in fields.iter().enumerate() {
        let name = format!("u_{idx:03}.field");
        write_field(&dir.join(&name), field)?;
        let csv = if args.emit_csv {
            let csv_name = format!("u_{idx:03}.csv");
            write_csv(&dir.join(&csv_name), field)?;
            write_gnuplot_columns(&dir.join(format!("u_{idx:03}.dat")), field)?;
            Some(csv_name)
        } else {
            None
        };
        outputs.push(OutputEntry {
            t: *t,
            field: name,
            csv,
        });
    }

    // self-contained run directory: manifest references the config copy
    let config_bytes = std::fs::read(&args.config)?;
    std::fs::write(dir.join("config.toml"), &config_bytes)?;
    timing.insert("total".into(), t_total.elapsed().as_millis());
    let manifest = RunManifest {
        tool_version: TOOL_VERSION.into(),
        problem: cfg.problem.name.clone(),
        solver: if nonlinear { "nonlinear" } else { "linear" }.into(),
        beta: cfg.problem.beta,
        horizon: cfg.problem.horizon,
        config_file: "config.toml".into(),
        config_hash: sha256_hex(&config_bytes),
        status: status.clone(),
        outputs,
        validation_report: "validation.json".into(),
        picard_report: picard_path,
        timing_ms: timing,
    };
    manifest.write(&dir.join("manifest.json"))?;
    println!(
        "{} solve '{}' -> {} ({} outputs, status {status})",
        manifest.solver,
        cfg.problem.name,
        dir.display(),
        manifest.outputs.len()
    );
    Ok(if status == "ok" { 0 } else { 3 })
}

fn cmd_verify(args: &VerifyArgs) -> Result<i32> {
    let manifest = RunManifest::load(&args.manifest)?;
    let dir = args
        .manifest
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .to_path_buf();
    let cfg = RunConfig::load(&dir.join(&manifest.config_file))?;
    let grid = cfg.build_grid()?;
    let sym = cfg.build_symbol()?;
    let beta = manifest.beta;
    let phi = cfg.build_initial(&grid, &dir)?;

    let mut stored: Vec<(f64, StateField)> = Vec::new();
    for entry in &manifest.outputs {
        let f = read_field(&dir.join(&entry.field))?;
        stored.push((entry.t, f));
    }
    if stored.is_empty() {
        bail!("manifest lists no outputs");
    }

    // reconstruct the source for the oracle; zero-rhs nonlinear runs reduce
    // to the linear problem
    let source = if manifest.solver == "nonlinear" {
        SourceSpec::Zero
    } else {
        cfg.build_source(&grid, &dir)?
    };

    // residual of the stored outputs (uniform sampling, t = 0 prepended)
    let mut samples: Vec<(f64, StateField)> = Vec::new();
    if stored[0].0 > 0.0 {
        samples.push((0.0, phi.clone()));
    }
    samples.extend(stored.iter().map(|(t, f)| (*t, f.clone())));
    let dtv = samples[1].0 - samples[0].0;
    let uniform = samples
        .windows(2)
        .all(|w| ((w[1].0 - w[0].0) - dtv).abs() < 1e-9 * manifest.horizon.max(1.0));
    if !uniform {
        bail!("verify requires uniformly spaced output times (with t = 0)");
    }
    let steps = samples.len() - 1;
    if steps + 1 < 8 {
        bail!("need at least 8 uniform samples for the residual stencil");
    }
    let tg = TimeGrid::new(samples[steps].0, steps)?;
    let fields: Vec<StateField> = samples.iter().map(|(_, f)| f.clone()).collect();
    let src_fields: Option<Vec<StateField>> = match &source {
        SourceSpec::Zero => None,
        s => {
            let mut v = Vec::with_capacity(steps + 1);
            for i in 0..=steps {
                v.push(
                    s.eval(tg.time(i))?
                        .expect("non-zero source evaluates to fields"),
                );
            }
            Some(v)
        }
    };
    let report = residual_check(&fields, &sym, beta, src_fields.as_deref(), tg)?;
    let residual_tail = report.tail_max(0.25 * manifest.horizon);

    // independent oracle march per lattice mode
    let march_steps = cfg.tolerances.time_steps.max(steps);
    let mg = TimeGrid::new(manifest.horizon, march_steps)?;
    let phi_hat = phi.to_frequency()?;
    let m = sym.size();
    let len = grid.len();
    let mut src_hat: Vec<StateField> = Vec::new();
    if !source.is_zero() {
        for i in 0..=march_steps {
            let h = source.eval(mg.time(i))?.expect("non-zero source");
            src_hat.push(h.to_frequency()?);
        }
    }
    // map manifest times onto march indices
    let mut out_idx = Vec::new();
    for (t, _) in &stored {
        let pos = t / mg.dt();
        let i = pos.round() as usize;
        if (pos - i as f64).abs() > 1e-9 * march_steps as f64 {
            bail!("output time {t} does not lie on the oracle march grid");
        }
        out_idx.push(i.min(march_steps));
    }
    let mut marched: Vec<StateField> = out_idx
        .iter()
        .map(|_| StateField::zeros(grid.clone(), m, Space::Frequency))
        .collect();
    let mut xi = [0.0f64; 3];
    for flat in 0..len {
        grid.xi_at(flat, &mut xi);
        let a = sym.eval(&xi[..grid.dim()]);
        let u0 =
            nalgebra::DVector::from_iterator(m, (0..m).map(|c| phi_hat.component(c)[flat]));
        let src_mode: Option<Vec<nalgebra::DVector<Complex64>>> = if src_hat.is_empty() {
            None
        } else {
            Some(
                src_hat
                    .iter()
                    .map(|h| {
                        nalgebra::DVector::from_iterator(
                            m,
                            (0..m).map(|c| h.component(c)[flat]),
                        )
                    })
                    .collect(),
            )
        };
        let path = l1_ode_march(&a, beta, &u0, src_mode.as_deref(), mg)?;
        for (k, &i) in out_idx.iter().enumerate() {
            for c in 0..m {
                marched[k].component_mut(c)[flat] = path[i][c];
            }
        }
    }
    let mut oracle_dev = 0.0f64;
    for (k, (_, f)) in stored.iter().enumerate() {
        let mphys = marched[k].clone().fft_inverse()?;
        for c in 0..m {
            for (a, b) in f.component(c).iter().zip(mphys.component(c)) {
                oracle_dev = oracle_dev.max((a - b).norm());
            }
        }
    }

    // artifacts
    let mut csv = String::from("t,residual_linf\n");
    for (t, r) in report.times.iter().zip(&report.residual_linf) {
        csv.push_str(&format!("{t:.16e},{r:.16e}\n"));
    }
    std::fs::write(dir.join("residual.csv"), csv)?;
    let pass = residual_tail <= cfg.verify.residual_tol && oracle_dev <= cfg.verify.oracle_tol;
    let summary = serde_json::json!({
        "residual_tail_max": residual_tail,
        "residual_tol": cfg.verify.residual_tol,
        "oracle_deviation": oracle_dev,
        "oracle_tol": cfg.verify.oracle_tol,
        "march_steps": march_steps,
        "pass": pass,
    });
    std::fs::write(
        dir.join("verify.json"),
        serde_json::to_string_pretty(&summary)? + "\n",
    )?;
    if args.json {
        println!("{}", serde_json::to_string(&summary)?);
    } else {
        println!(
            "verify: residual {residual_tail:.3e} (tol {:.1e}), oracle deviation {oracle_dev:.3e} (tol {:.1e}) -> {}",
            cfg.verify.residual_tol,
            cfg.verify.oracle_tol,
            if pass { "pass" } else { "FAIL" }
        );
    }
    Ok(if pass { 0 } else { 1 })
}

fn cmd_ml_eval(args: &MlArgs) -> Result<i32> {
    let params = MlParams::new(args.rho, args.mu)?;
    let r = ml_eval(params, args.z)?;
    if args.json {
        println!(
            "{}",
            serde_json::json!({
                "value": r.value,
                "regime": r.regime,
                "est_abs_error": r.est_abs_error,
            })
        );
    } else {
        println!(
            "E_{{{}, {}}}({}) = {:.17e}  [{:?}, est abs error {:.3e}]",
            args.rho, args.mu, args.z, r.value, r.regime, r.est_abs_error
        );
    }
    Ok(0)
}
