//! Command-line front end: every subcommand is deterministic given
//! (config, seed) and writes a run manifest next to its outputs.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use photonroute::analysis::{
    bin_events, compare_to_classical, default_background_regions, estimate_background,
    photon_area, select_window, splitting_ratio,
};
use photonroute::calib::{extinction_ratios, predict_sweep};
use photonroute::config::{ModelFile, RunConfig, RunManifest};
use photonroute::csvio;
use photonroute::error::{Error, Result};
use photonroute::mesh::{
    clements_decompose, mesh_reconstruct, routing_fidelity, synthesize_switch,
};
use photonroute::source::{
    run_experiment, CHANNEL_PORT1, CHANNEL_PORT2, CHANNEL_REFERENCE,
};
use photonroute::xfer::TransferMatrix;

#[derive(Parser)]
#[command(
    name = "photonroute",
    version,
    about = "Simulate and analyze single-photon routing through a programmable MZI circuit"
)]
struct Cli {
    /// Run configuration (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (falls back to $PHOTONROUTE_OUT_DIR, then ".").
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the heater current in mA.
    #[arg(long, global = true)]
    current: Option<f64>,

    /// Override the attempt count.
    #[arg(long, global = true)]
    attempts: Option<u64>,

    /// Worker threads for simulation (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the circuit model from the device anchors and write it out.
    Fit,
    /// Evaluate the fitted model over the sweep currents and write a CSV.
    Sweep,
    /// Run the Monte Carlo experiment and write a time-tag CSV.
    Simulate,
    /// Reduce a time-tag CSV to histograms and a splitting report.
    Analyze {
        /// Time-tag CSV produced by `simulate`.
        stream: PathBuf,
    },
    /// Decompose a unitary matrix CSV into a mesh program CSV.
    Decompose {
        /// Matrix CSV: one row per matrix row, re,im pairs per entry.
        matrix: PathBuf,
    },
    /// Rebuild the matrix realized by a mesh program CSV.
    Reconstruct {
        /// Mesh program CSV produced by `decompose` or `route`.
        program: PathBuf,
    },
    /// Synthesize a switch program routing input j to output perm[j].
    Route {
        /// Permutation such as "2,0,1", inline or a path to a file.
        permutation: String,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(current) = cli.current {
        config.current_ma = current;
    }
    if let Some(attempts) = cli.attempts {
        config.n_attempts = attempts;
    }
    config.validate()?;

    let out_dir = cli
        .out_dir
        .clone()
        .or_else(|| std::env::var_os("PHOTONROUTE_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&out_dir)?;

    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::Validation(format!("thread pool: {e}")))?;
    }

    match &cli.command {
        Command::Fit => cmd_fit(&config, &out_dir),
        Command::Sweep => cmd_sweep(&config, &out_dir),
        Command::Simulate => cmd_simulate(&config, &out_dir),
        Command::Analyze { stream } => cmd_analyze(&config, &out_dir, stream),
        Command::Decompose { matrix } => cmd_decompose(&config, &out_dir, matrix),
        Command::Reconstruct { program } => cmd_reconstruct(&config, &out_dir, program),
        Command::Route { permutation } => cmd_route(&config, &out_dir, permutation),
    }
}

fn finish(manifest: &mut RunManifest, out_dir: &Path, written: &[PathBuf]) -> Result<()> {
    for path in written {
        manifest.record(path)?;
    }
    let mpath = out_dir.join("manifest.json");
    manifest.save(&mpath)?;
    Ok(())
}

fn cmd_fit(config: &RunConfig, out_dir: &Path) -> Result<()> {
    let (model, report) = config.fit_model()?;
    let path = out_dir.join("model.toml");
    ModelFile::from_model(&model, report.residual_ss).save(&path)?;
    println!(
        "fitted r1={:.6} r2={:.6} phi0={:.6} rad c={:.6} rad/mA^2 residual_ss={:.3e}",
        model.c1.r(),
        model.c2.r(),
        model.calib.phi0(),
        model.calib.coefficient(),
        report.residual_ss
    );
    for (current, achieved, fringe_max) in &report.near_max_checks {
        println!(
            "near-max check at {current} mA: fraction {achieved:.4} (fringe maximum {fringe_max:.4})"
        );
    }
    let mut manifest = RunManifest::new("fit", config);
    finish(&mut manifest, out_dir, &[path])
}

fn cmd_sweep(config: &RunConfig, out_dir: &Path) -> Result<()> {
    let (model, _) = config.fit_model()?;
    let currents = config.sweep_currents();
    if currents.is_empty() {
        return Err(Error::Validation("sweep current list is empty".into()));
    }
    let curve = predict_sweep(&model, &currents)?;
    let path = out_dir.join("sweep.csv");
    fs::write(&path, csvio::write_sweep_csv(&curve))?;

    let (er1, er2) = extinction_ratios(&curve)?;
    let totals: Vec<f64> = curve.points.iter().map(|p| p.p1 + p.p2).collect();
    let t_min = totals.iter().cloned().fold(f64::INFINITY, f64::min);
    let t_max = totals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    println!(
        "{} rows; extinction {er1:.2} dB / {er2:.2} dB; total transmission in [{t_min:.6}, {t_max:.6}]",
        curve.points.len()
    );
    let mut manifest = RunManifest::new("sweep", config);
    finish(&mut manifest, out_dir, &[path])
}

fn cmd_simulate(config: &RunConfig, out_dir: &Path) -> Result<()> {
    let setup = config.sim_setup()?;
    let stream = run_experiment(&setup, config.seed, config.n_attempts, &config.content_hash())?;
    let path = out_dir.join("timetags.csv");
    fs::write(&path, csvio::write_time_tag_csv(&stream))?;
    println!(
        "{} events over {} attempts at {} mA (seed {})",
        stream.events.len(),
        config.n_attempts,
        config.current_ma,
        config.seed
    );
    let mut manifest = RunManifest::new("simulate", config);
    finish(&mut manifest, out_dir, &[path])
}

fn cmd_analyze(config: &RunConfig, out_dir: &Path, stream_path: &Path) -> Result<()> {
    let stream = csvio::read_time_tag_csv(&fs::read_to_string(stream_path)?)?;
    let an = &config.analysis;
    let period = config.source.cycle.period_ns();

    let reference = bin_events(&stream, CHANNEL_REFERENCE, an.bin_width_ns, period)?;
    let (window, captured) = select_window(&reference, an.window_width_ns)?;
    println!(
        "window [{:.1}, {:.1}) ns captures {:.1}% of reference counts",
        window.start_ns,
        window.end_ns(),
        100.0 * captured
    );

    let mut written = vec![out_dir.join("hist_reference.csv")];
    fs::write(&written[0], csvio::write_histogram_csv(&reference))?;

    let mut areas = Vec::new();
    for (channel, name) in [(CHANNEL_PORT1, "port1"), (CHANNEL_PORT2, "port2")] {
        let h = bin_events(&stream, channel, an.bin_width_ns, period)?;
        let regions = default_background_regions(&h, &window, an.background_guard_ns);
        let bg = estimate_background(&h, &regions, &window)?;
        let pa = photon_area(&h, &window, bg)?;
        println!("{name}: area {:.1} +- {:.1}", pa.area, pa.sigma);
        let subtracted = subtract_background(&h, bg);
        let path = out_dir.join(format!("hist_{name}.csv"));
        fs::write(&path, csvio::write_histogram_csv(&subtracted))?;
        written.push(path);
        areas.push(pa);
    }

    let est = splitting_ratio(&areas[0], &areas[1], an.eff_ratio, an.eff_ratio_sigma)?;
    let (model, _) = config.fit_model()?;
    let rows = vec![(config.current_ma, est)];
    let pulls = compare_to_classical(&rows, &model)?;
    println!(
        "s1 = {:.4} +- {:.4} (model {:.4}, pull {:+.2})",
        est.s1, est.sigma1, pulls[0].model_s1, pulls[0].pull
    );
    let path = out_dir.join("splitting.csv");
    fs::write(&path, csvio::write_splitting_report_csv(&rows, &pulls))?;
    written.push(path);

    let mut manifest = RunManifest::new("analyze", config);
    finish(&mut manifest, out_dir, &written)
}

fn subtract_background(
    h: &photonroute::analysis::Histogram,
    (rate, rate_var): (f64, f64),
) -> photonroute::analysis::Histogram {
    let per_bin = rate * h.bin_width_ns;
    let var_bin = rate_var * h.bin_width_ns * h.bin_width_ns;
    photonroute::analysis::Histogram {
        bin_width_ns: h.bin_width_ns,
        t_start_ns: h.t_start_ns,
        counts: h.counts.iter().map(|c| c - per_bin).collect(),
        variance: h.variance.iter().map(|v| v + var_bin).collect(),
    }
}

fn cmd_decompose(config: &RunConfig, out_dir: &Path, matrix_path: &Path) -> Result<()> {
    let u = csvio::read_matrix_csv(&fs::read_to_string(matrix_path)?)?;
    let program = clements_decompose(&u, u.dim())?;
    let rebuilt = mesh_reconstruct(&program)?;
    let residual = rebuilt.frobenius_distance(&u);
    println!(
        "{} modes, {} settings, round-trip residual {residual:.3e}",
        program.n,
        program.settings.len()
    );
    let path = out_dir.join("program.csv");
    fs::write(&path, csvio::write_mesh_program_csv(&program))?;
    let mut manifest = RunManifest::new("decompose", config);
    finish(&mut manifest, out_dir, &[path])?;
    if residual > 1e-8 {
        return Err(Error::Validation(format!(
            "round-trip residual {residual:.3e} exceeds 1e-8"
        )));
    }
    Ok(())
}

fn cmd_reconstruct(config: &RunConfig, out_dir: &Path, program_path: &Path) -> Result<()> {
    let program = csvio::read_mesh_program_csv(&fs::read_to_string(program_path)?)?;
    let u = mesh_reconstruct(&program)?;
    println!(
        "{} modes; unitarity deviation {:.3e}",
        u.dim(),
        u.unitarity_deviation()
    );
    let path = out_dir.join("matrix.csv");
    fs::write(&path, csvio::write_matrix_csv(&u))?;
    let mut manifest = RunManifest::new("reconstruct", config);
    finish(&mut manifest, out_dir, &[path])
}

fn cmd_route(config: &RunConfig, out_dir: &Path, permutation: &str) -> Result<()> {
    let text = if Path::new(permutation).is_file() {
        fs::read_to_string(permutation)?
    } else {
        permutation.to_string()
    };
    let perm = csvio::parse_permutation(&text)?;
    let program = synthesize_switch::<f64>(&perm)?;
    let u: TransferMatrix<f64> = mesh_reconstruct(&program)?;
    let fidelity = routing_fidelity(&u, &perm);
    for (j, &t) in perm.iter().enumerate() {
        println!("input {j} -> output {t}: power {:.6}", u.get(t, j).norm_sqr());
    }
    println!("worst routed power {fidelity:.6}");
    let path = out_dir.join("program.csv");
    fs::write(&path, csvio::write_mesh_program_csv(&program))?;
    let mut manifest = RunManifest::new("route", config);
    finish(&mut manifest, out_dir, &[path])
}
