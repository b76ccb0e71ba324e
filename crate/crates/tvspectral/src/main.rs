//! Command-line surface for the TV spectral decomposition pipeline.
//!
//! Exit codes: 0 success, 2 usage error, 3 input/output or format error,
//! 4 numerical divergence.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tvspectral::analysis::{cluster_bands, detect_peaks, Band, BandMethod, DEFAULT_MIN_PROMINENCE};
use tvspectral::error::{Error, Result};
use tvspectral::io::{
    fmt_sig12, load_decomposition, parse_phantom_spec, read_image, save_decomposition,
    write_outputs, write_pgm, write_ppm, RunConfig, DECOMP_FILE,
};
use tvspectral::phantom::{disc_phantom, disc_support, mean_over, vanishing_stage, Disc, PhantomSpec};
use tvspectral::scale_space::{compute_scale_space, make_scale_grid, ScaleSpace, Spacing};
use tvspectral::solver::{solve_denoise, Fidelity, SolverConfig};
use tvspectral::spectral::{
    segment as spectral_segment, transform_l1, transform_l2, FilterSpec, SpectralDecomposition,
};
use tvspectral::ScalarField;

#[derive(Parser)]
#[command(
    name = "tvspectral",
    version,
    about = "Multi-scale TV spectral decomposition, filtering and size-based segmentation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Profile {
    /// Reference settings: 50000 iterations, no early stopping.
    Full,
    /// Desk-scale settings: 5000 iterations, early stop at 1e-8.
    Test,
}

fn parse_profile(s: &str) -> std::result::Result<Profile, String> {
    match s.to_ascii_lowercase().as_str() {
        "full" => Ok(Profile::Full),
        "test" => Ok(Profile::Test),
        other => Err(format!("unknown profile {other:?} (expected full or test)")),
    }
}

fn parse_fidelity(s: &str) -> std::result::Result<Fidelity, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_spacing(s: &str) -> std::result::Result<Spacing, String> {
    match s.parse() {
        Ok(Spacing::Explicit) => Err("spacing must be linear or logarithmic".into()),
        Ok(sp) => Ok(sp),
        Err(e) => Err(e.to_string()),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Render a phantom description file to a PGM image
    Phantom {
        /// Description file: key = value lines plus repeated disc = cx,cy,r,c
        #[arg(long)]
        spec: PathBuf,
        /// Output PGM path
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep the denoiser over a scale grid and save the decomposition
    Decompose(Box<DecomposeArgs>),
    /// Reconstruct scale bands (and a color composite) from a decomposition
    Filter {
        /// Directory holding a decomposition produced by `decompose`
        #[arg(long)]
        decomp: PathBuf,
        /// Band selection: auto | otsu | manual:<i0-i1,...>
        #[arg(long, default_value = "auto")]
        bands: String,
        /// Pixel threshold for composite coloring
        #[arg(long, default_value_t = 1e-3)]
        epsilon: f64,
    },
    /// Write binary size-band masks from a decomposition
    Segment {
        /// Directory holding a decomposition produced by `decompose`
        #[arg(long)]
        decomp: PathBuf,
        /// Band selection: auto | otsu | manual:<i0-i1,...>
        #[arg(long, default_value = "auto")]
        bands: String,
        /// Mask threshold on the filtered slice sum
        #[arg(long, default_value_t = 1e-3)]
        epsilon: f64,
    },
    /// Compare measured disc behavior against the closed-form solutions
    OracleCheck {
        /// Disc radius in pixels
        #[arg(long)]
        r: f64,
        /// Disc contrast
        #[arg(long)]
        c: f64,
        #[arg(long, value_parser = parse_fidelity)]
        fidelity: Fidelity,
        /// Square image side in pixels
        #[arg(long, default_value_t = 128)]
        size: usize,
        #[arg(long, value_parser = parse_profile, default_value = "test")]
        profile: Profile,
    },
    /// Run both fidelities on one image and print peak statistics
    Compare {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 20)]
        n_scales: usize,
        #[arg(long)]
        t_min: Option<f64>,
        #[arg(long)]
        t_max: Option<f64>,
        #[arg(long, value_parser = parse_spacing, default_value = "linear")]
        spacing: Spacing,
        #[arg(long, value_parser = parse_profile, default_value = "test")]
        profile: Profile,
    },
}

#[derive(Args)]
struct DecomposeArgs {
    /// Input image: PGM (P2/P5) or 8/16-bit grayscale PNG
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_parser = parse_fidelity, default_value = "l1")]
    fidelity: Fidelity,
    #[arg(long, default_value_t = 20)]
    n_scales: usize,
    /// Smallest scale (default 0.5)
    #[arg(long)]
    t_min: Option<f64>,
    /// Largest scale (default 1.25 * max(width, height) / 4)
    #[arg(long)]
    t_max: Option<f64>,
    #[arg(long, value_parser = parse_spacing, default_value = "linear")]
    spacing: Spacing,
    /// Primal step (default 0.2)
    #[arg(long)]
    tau: Option<f64>,
    /// Dual step (default 0.625)
    #[arg(long)]
    sigma: Option<f64>,
    /// Extrapolation weight (default 1)
    #[arg(long)]
    theta: Option<f64>,
    /// Iteration budget per scale (overrides the profile)
    #[arg(long)]
    max_its: Option<usize>,
    /// Early-stop threshold on relative change, 0 disables (overrides the profile)
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, value_parser = parse_profile, default_value = "full")]
    profile: Profile,
    /// Echoed into run_config.txt for provenance
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            if err.is_divergence() {
                ExitCode::from(4)
            } else {
                ExitCode::from(3)
            }
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Phantom { spec, out } => cmd_phantom(&spec, &out),
        Command::Decompose(args) => cmd_decompose(&args),
        Command::Filter {
            decomp,
            bands,
            epsilon,
        } => cmd_filter(&decomp, &bands, epsilon),
        Command::Segment {
            decomp,
            bands,
            epsilon,
        } => cmd_segment(&decomp, &bands, epsilon),
        Command::OracleCheck {
            r,
            c,
            fidelity,
            size,
            profile,
        } => cmd_oracle_check(r, c, fidelity, size, profile),
        Command::Compare {
            input,
            n_scales,
            t_min,
            t_max,
            spacing,
            profile,
        } => cmd_compare(&input, n_scales, t_min, t_max, spacing, profile),
    }
}

fn solver_config(profile: Profile) -> SolverConfig {
    match profile {
        Profile::Full => SolverConfig::default(),
        Profile::Test => SolverConfig::test_profile(),
    }
}

/// Band selection flag: `auto`, `otsu` or `manual:<i0-i1,...>`. Parse
/// errors are usage errors and exit with code 2.
fn parse_band_method(s: &str) -> std::result::Result<BandMethod, String> {
    if s == "auto" {
        return Ok(BandMethod::Peaks {
            min_prominence: DEFAULT_MIN_PROMINENCE,
        });
    }
    if s == "otsu" {
        return Ok(BandMethod::Otsu);
    }
    if let Some(rest) = s.strip_prefix("manual:") {
        let mut intervals = Vec::new();
        for part in rest.split(',') {
            let (a, b) = part
                .split_once('-')
                .ok_or_else(|| format!("bad interval {part:?} (expected i0-i1)"))?;
            let first = a.trim().parse().map_err(|_| format!("bad index {a:?}"))?;
            let last = b.trim().parse().map_err(|_| format!("bad index {b:?}"))?;
            intervals.push((first, last));
        }
        if intervals.is_empty() {
            return Err("manual band list is empty".into());
        }
        return Ok(BandMethod::Manual(intervals));
    }
    Err(format!(
        "unknown band selection {s:?} (expected auto, otsu or manual:<i0-i1,...>)"
    ))
}

fn band_method_or_exit(s: &str) -> BandMethod {
    match parse_band_method(s) {
        Ok(m) => m,
        Err(msg) => {
            eprintln!("error: {msg}");
            std::process::exit(2);
        }
    }
}

fn cmd_phantom(spec_path: &Path, out: &Path) -> Result<()> {
    let text = std::fs::read_to_string(spec_path)?;
    let spec = parse_phantom_spec(&text)?;
    let f = disc_phantom(&spec)?;
    write_pgm(out, &f)?;
    println!(
        "wrote {} ({}x{}, {} discs)",
        out.display(),
        f.width(),
        f.height(),
        spec.discs.len()
    );
    Ok(())
}

fn decompose_image(
    f: &ScalarField,
    fidelity: Fidelity,
    n_scales: usize,
    t_min: f64,
    t_max: f64,
    spacing: Spacing,
    config: &SolverConfig,
) -> Result<(ScaleSpace, SpectralDecomposition)> {
    let grid = make_scale_grid(n_scales, t_min, t_max, spacing)?;
    let space = compute_scale_space(f, &grid, fidelity, config)?;
    let dec = match fidelity {
        Fidelity::L1 => transform_l1(&space, f)?,
        Fidelity::L2 => transform_l2(&space, f)?,
    };
    Ok((space, dec))
}

fn default_t_max(f: &ScalarField) -> f64 {
    1.25 * f.width().max(f.height()) as f64 / 4.0
}

fn cmd_decompose(args: &DecomposeArgs) -> Result<()> {
    let f = read_image(&args.input)?;
    let base = solver_config(args.profile);
    let config = SolverConfig::new(
        args.tau.unwrap_or(base.tau()),
        args.sigma.unwrap_or(base.sigma()),
        args.theta.unwrap_or(base.theta()),
        args.max_its.unwrap_or(base.max_its()),
        args.tol.unwrap_or(base.rel_tol()),
    )?;
    let t_min = args.t_min.unwrap_or(0.5);
    let t_max = args.t_max.unwrap_or_else(|| default_t_max(&f));
    let (_, dec) = decompose_image(
        &f,
        args.fidelity,
        args.n_scales,
        t_min,
        t_max,
        args.spacing,
        &config,
    )?;
    let run_config = RunConfig {
        fidelity: args.fidelity,
        n_scales: args.n_scales,
        t_min,
        t_max,
        spacing: args.spacing,
        solver: config,
        band_method: BandMethod::default(),
        epsilon_seg: 1e-3,
        seed: args.seed,
        output_dir: args.out_dir.display().to_string(),
    };
    write_outputs(&args.out_dir, &dec, &f, &[], &[], &run_config)?;
    save_decomposition(&args.out_dir.join(DECOMP_FILE), &dec, &f)?;
    println!(
        "wrote {}: response.csv, run_config.txt, {DECOMP_FILE} ({} scales, fidelity {})",
        args.out_dir.display(),
        args.n_scales,
        args.fidelity.as_str()
    );
    Ok(())
}

fn load_and_cluster(decomp_dir: &Path, bands_flag: &str) -> Result<(SpectralDecomposition, ScalarField, Vec<Band>)> {
    let method = band_method_or_exit(bands_flag);
    let (dec, f) = load_decomposition(&decomp_dir.join(DECOMP_FILE))?;
    let response = dec.response_magnitude();
    let bands = cluster_bands(&response, &method)?;
    Ok((dec, f, bands))
}

fn cmd_filter(decomp_dir: &Path, bands_flag: &str, epsilon: f64) -> Result<()> {
    let (dec, f, bands) = load_and_cluster(decomp_dir, bands_flag)?;
    if bands.is_empty() {
        println!("no bands detected; nothing to reconstruct");
        return Ok(());
    }
    let t = dec.grid().values();
    for band in &bands {
        let filter = FilterSpec::band(dec.grid().len(), band.first, band.last)?;
        let recon = tvspectral::spectral::reconstruct(&dec, &filter)?;
        let path = decomp_dir.join(format!("band_{}.pgm", band.label));
        write_pgm(&path, &recon)?;
        println!(
            "band {}: scale indices [{}, {}], t in [{:.4}, {:.4}] -> {}",
            band.label,
            band.first,
            band.last,
            t[band.first],
            t[band.last],
            path.display()
        );
    }
    let composite = tvspectral::analysis::colorize_bands(&dec, &bands, &f, epsilon)?;
    let path = decomp_dir.join("composite.ppm");
    write_ppm(&path, &composite)?;
    println!("composite -> {}", path.display());
    Ok(())
}

fn cmd_segment(decomp_dir: &Path, bands_flag: &str, epsilon: f64) -> Result<()> {
    let (dec, _, bands) = load_and_cluster(decomp_dir, bands_flag)?;
    if bands.is_empty() {
        println!("no bands detected; nothing to segment");
        return Ok(());
    }
    for band in &bands {
        let filter = FilterSpec::band(dec.grid().len(), band.first, band.last)?;
        let mask = spectral_segment(&dec, &filter, epsilon)?;
        let pixels = mask.values().iter().filter(|&&v| v == 1.0).count();
        let path = decomp_dir.join(format!("mask_{}.pgm", band.label));
        write_pgm(&path, &mask)?;
        println!(
            "mask {}: scale indices [{}, {}], {} pixels -> {}",
            band.label,
            band.first,
            band.last,
            pixels,
            path.display()
        );
    }
    Ok(())
}

fn centered_disc_phantom(size: usize, r: f64, c: f64) -> Result<(ScalarField, Vec<usize>)> {
    let disc = Disc {
        center_x: size as f64 / 2.0,
        center_y: size as f64 / 2.0,
        radius: r,
        contrast: c,
    };
    let spec = PhantomSpec {
        width: size,
        height: size,
        background: 0.0,
        discs: vec![disc],
    };
    Ok((disc_phantom(&spec)?, disc_support(&disc, size, size)))
}

fn cmd_oracle_check(r: f64, c: f64, fidelity: Fidelity, size: usize, profile: Profile) -> Result<()> {
    let (f, support) = centered_disc_phantom(size, r, c)?;
    let config = solver_config(profile);
    println!(
        "fidelity = {}, r = {}, c = {}, size = {}",
        fidelity.as_str(),
        r,
        c,
        size
    );
    match fidelity {
        Fidelity::L1 => {
            let grid = make_scale_grid(20, r / 8.0, 1.25 * r, Spacing::Linear)?;
            let space = compute_scale_space(&f, &grid, Fidelity::L1, &config)?;
            let critical = r / 2.0;
            println!("closed-form critical scale r/2 = {}", fmt_sig12(critical));
            match vanishing_stage(&space, &support, &f, 0.01) {
                Some(stage) => {
                    let t = grid.values()[stage];
                    println!(
                        "measured vanishing stage = {stage} (t_alpha = {})",
                        fmt_sig12(t)
                    );
                    println!(
                        "deviation from r/2 = {:+.2}%",
                        100.0 * (t - critical) / critical
                    );
                }
                None => println!("measured vanishing stage = none (survived the whole grid)"),
            }
        }
        Fidelity::L2 => {
            let ideal = -2.0 / r;
            let t_samples: Vec<f64> = [0.25, 0.35, 0.45]
                .iter()
                .map(|frac| frac * c * r / 2.0)
                .collect();
            let core = disc_support(
                &Disc {
                    center_x: size as f64 / 2.0,
                    center_y: size as f64 / 2.0,
                    radius: (r - 3.0).max(2.0),
                    contrast: c,
                },
                size,
                size,
            );
            let mut heights = Vec::new();
            for &t in &t_samples {
                let sol = solve_denoise(&f, t, Fidelity::L2, &config, None)?;
                heights.push(mean_over(&sol.u, &core));
            }
            let slope = least_squares_slope(&t_samples, &heights);
            println!("closed-form decay slope -2/r = {}", fmt_sig12(ideal));
            println!("measured plateau slope = {}", fmt_sig12(slope));
            println!("deviation = {:+.2}%", 100.0 * (slope - ideal) / ideal.abs());
        }
    }
    Ok(())
}

fn least_squares_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let num: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    num / den
}

fn cmd_compare(
    input: &Path,
    n_scales: usize,
    t_min: Option<f64>,
    t_max: Option<f64>,
    spacing: Spacing,
    profile: Profile,
) -> Result<()> {
    let f = read_image(input)?;
    let config = solver_config(profile);
    let t_min = t_min.unwrap_or(0.5);
    let t_max = t_max.unwrap_or_else(|| default_t_max(&f));
    println!(
        "grid: {} scales, t in [{}, {}], {}",
        n_scales,
        fmt_sig12(t_min),
        fmt_sig12(t_max),
        spacing.as_str()
    );
    for fidelity in [Fidelity::L1, Fidelity::L2] {
        let (_, dec) = decompose_image(&f, fidelity, n_scales, t_min, t_max, spacing, &config)?;
        let magnitude = dec.response_magnitude();
        let peaks = detect_peaks(&magnitude, DEFAULT_MIN_PROMINENCE);
        let t = dec.grid().values();
        let scales: Vec<String> = peaks.iter().map(|&i| format!("{:.4}", t[i])).collect();
        let raw = dec.response();
        let raw_max = raw.iter().cloned().fold(f64::MIN, f64::max);
        let support = raw.iter().filter(|&&v| v > 0.1 * raw_max).count();
        println!(
            "{}: peaks = {} at t = [{}]; response entries above 10% of max = {}",
            fidelity.as_str(),
            peaks.len(),
            scales.join(", "),
            support
        );
    }
    Ok(())
}
