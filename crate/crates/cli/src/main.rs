//! Command-line front end for the factorization library.
//!
//! Exit codes: 0 on success, 2 for invalid flags or inputs, 3 for numerical
//! failures. Every run writes a `manifest.json` whose `argv` field reproduces
//! the run bit for bit (the trace's wall-clock column aside).

mod io;
mod manifest;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use io::IoError;
use manifest::RunManifest;
use volfact::bssmf::{bssmf_fit, BssmfProblem, Centering};
use volfact::datagen::{fixture, gen_completion_instance, gen_separable_instance, SyntheticSpec};
use volfact::maxvol::{maxvol_fit, MaxvolAlgorithm, MaxvolModel};
use volfact::metrics::relative_error;
use volfact::minvol::{init_hyperparams, minvol_fit, warm_start_nmf, MinvolModel, MinvolVariant};
use volfact::projections::Bounds;
use volfact::separable::{randspa, spa_select, RandSpaConfig, SelectionResult};
use volfact::ssc::check_ssc1_necessary;
use volfact::{ConvergenceTrace, DenseMatrix, FactorPair, ObservationMask, SolverOptions};

#[derive(Parser)]
#[command(
    name = "volfact",
    version,
    about = "Volume-based low-rank matrix factorizations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic data or dump a named fixture matrix
    Gen(GenArgs),
    /// Separable NMF by greedy column selection (SPA / randomized SPA)
    Spa(SpaArgs),
    /// Bounded simplex-structured factorization
    Bssmf(BssmfArgs),
    /// Minimum-volume NMF on fully observed data
    Minvol(MinvolArgs),
    /// Minimum-volume NMF on partially observed data
    #[command(name = "minvol-complete")]
    MinvolComplete(MinvolArgs),
    /// Maximum-volume NMF (adaptive gradient or ADMM)
    Maxvol(MaxvolArgs),
    /// Row-normalized maximum-volume NMF
    Nmaxvol(NmaxvolArgs),
    /// Necessary-condition diagnostics for sufficient scattering
    #[command(name = "ssc-check")]
    SscCheck(SscArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Input data matrix (CSV)
    #[arg(long)]
    input: PathBuf,
    /// Observation mask (CSV with entries in [0, 1])
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Treat `nan` cells of the input as missing entries
    #[arg(long)]
    missing_nan: bool,
    /// Factorization rank
    #[arg(long)]
    rank: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Outer iterations
    #[arg(long, default_value_t = 500)]
    outer: usize,
    /// Inner iterations per block
    #[arg(long, default_value_t = 20)]
    inner: usize,
    /// Output directory (created if absent)
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Write the per-iteration trace TSV
    #[arg(long)]
    trace: bool,
    /// Export each row of H as a WIDTHxHEIGHT abundance map (PGM)
    #[arg(long)]
    maps: Option<String>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 200)]
    m: usize,
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 5)]
    rank: usize,
    /// Fraction of H entries set to zero
    #[arg(long, default_value_t = 0.0)]
    h_zero_frac: f64,
    /// Fraction of hidden entries
    #[arg(long, default_value_t = 0.0)]
    missing_frac: f64,
    /// Target RMSE of the added noise (completion) or per-column noise norm
    /// (separable)
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Instance family
    #[arg(long, default_value = "completion", value_parser = ["completion", "separable"])]
    kind: String,
    /// Draw H columns from a Dirichlet(0.2) instead of uniform-with-zeros
    #[arg(long)]
    dirichlet: bool,
    /// Skip rescaling the clean data to mean one
    #[arg(long)]
    no_normalize: bool,
    /// Dump a named fixture matrix instead of generating data
    #[arg(long)]
    fixture: Option<String>,
}

#[derive(Args)]
struct SpaArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Columns of the random criterion matrix Q (0 = use all m rows: plain SPA
    /// territory)
    #[arg(long, default_value_t = 0)]
    nu: usize,
    /// Condition number of Q Q^T
    #[arg(long, default_value_t = 1.0)]
    kappa: f64,
    /// Number of randomized restarts; the best run wins
    #[arg(long, default_value_t = 1)]
    runs: usize,
}

#[derive(Args)]
struct BssmfArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// `auto`, two scalars `a,b`, or two vector CSV files `aFile,bFile`
    #[arg(long, default_value = "auto")]
    bounds: String,
    #[arg(long, default_value = "none", value_parser = ["none", "global", "row-wise"])]
    centering: String,
}

#[derive(Args)]
struct MinvolArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, default_value = "minvol", value_parser = ["minvol", "new-minvol", "nmf"])]
    variant: String,
    /// Volume weight; derived from the warm start when omitted
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    delta: f64,
    /// Frobenius weight for the new-minvol variant; derived when omitted
    #[arg(long)]
    gamma: Option<f64>,
    /// Re-balance lambda (and gamma) when the objective stalls
    #[arg(long)]
    autotune: bool,
    /// Plain-NMF warm start iterations (0 = random start)
    #[arg(long, default_value_t = 500)]
    warm_start_iters: usize,
}

#[derive(Args)]
struct MaxvolArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, default_value = "adgrad", value_parser = ["adgrad", "admm", "admm-bregman"])]
    algo: String,
    #[arg(long, default_value_t = 0.01)]
    rho: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    delta: f64,
}

#[derive(Args)]
struct NmaxvolArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 0.5)]
    delta: f64,
}

#[derive(Args)]
struct SscArgs {
    /// Factor matrix H (CSV), rows = rank
    #[arg(long)]
    input: PathBuf,
    /// Relative zero/membership tolerance
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

enum AppError {
    /// Bad flags or unusable input files: exit 2.
    Invalid(String),
    /// The solver failed numerically: exit 3.
    Numerical(String),
}

impl From<IoError> for AppError {
    fn from(e: IoError) -> Self {
        AppError::Invalid(e.to_string())
    }
}

type AppResult<T> = Result<T, AppError>;

fn main() {
    let cli = Cli::parse();
    let code = match dispatch(cli) {
        Ok(()) => 0,
        Err(AppError::Invalid(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(AppError::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            3
        }
    };
    std::process::exit(code);
}

fn dispatch(cli: Cli) -> AppResult<()> {
    match cli.command {
        Command::Gen(args) => run_gen(args),
        Command::Spa(args) => run_spa(args),
        Command::Bssmf(args) => run_bssmf(args),
        Command::Minvol(args) => run_minvol(args, false),
        Command::MinvolComplete(args) => run_minvol(args, true),
        Command::Maxvol(args) => run_maxvol(args),
        Command::Nmaxvol(args) => run_nmaxvol(args),
        Command::SscCheck(args) => run_ssc(args),
    }
}

fn ensure_dir(dir: &Path) -> AppResult<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| AppError::Invalid(format!("cannot create {}: {e}", dir.display())))
}

fn path_str(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

fn invalid<T>(msg: impl Into<String>) -> AppResult<T> {
    Err(AppError::Invalid(msg.into()))
}

fn numerical(e: volfact::Error) -> AppError {
    AppError::Numerical(e.to_string())
}

/// Loads the data matrix plus the mask from either `--mask` or
/// `--missing-nan` (giving both is ambiguous and rejected).
fn load_input(common: &CommonArgs) -> AppResult<(DenseMatrix, Option<ObservationMask>)> {
    if common.mask.is_some() && common.missing_nan {
        return invalid("--mask and --missing-nan are mutually exclusive");
    }
    let (x, nan_mask) = io::read_matrix_csv(&common.input, common.missing_nan)?;
    let mask = match &common.mask {
        Some(path) => {
            let (weights, _) = io::read_matrix_csv(path, false)?;
            if weights.shape() != x.shape() {
                return invalid(format!(
                    "mask is {}x{}, data is {}x{}",
                    weights.rows(),
                    weights.cols(),
                    x.rows(),
                    x.cols()
                ));
            }
            Some(ObservationMask::new(weights).map_err(|e| AppError::Invalid(e.to_string()))?)
        }
        None => nan_mask,
    };
    Ok((x, mask))
}

fn check_rank(rank: usize, x: &DenseMatrix) -> AppResult<()> {
    if rank == 0 || rank > x.rows().min(x.cols()) {
        return invalid(format!(
            "rank {rank} must lie in [1, min({}, {}) = {}]",
            x.rows(),
            x.cols(),
            x.rows().min(x.cols())
        ));
    }
    Ok(())
}

fn parse_maps(maps: &Option<String>, n: usize) -> AppResult<Option<(usize, usize)>> {
    let Some(spec) = maps else { return Ok(None) };
    let parts: Vec<&str> = spec.split('x').collect();
    let dims: Option<(usize, usize)> = match parts.as_slice() {
        [w, h] => w.parse().ok().zip(h.parse().ok()),
        _ => None,
    };
    let Some((w, h)) = dims else {
        return invalid(format!("--maps expects WIDTHxHEIGHT, got `{spec}`"));
    };
    if w * h != n {
        return invalid(format!(
            "--maps {w}x{h} does not cover the {n} columns of H"
        ));
    }
    Ok(Some((w, h)))
}

/// Writes W, H, the optional trace and abundance maps; returns the list of
/// written files.
fn write_factor_outputs(
    dir: &Path,
    factors: &FactorPair,
    trace: Option<&ConvergenceTrace>,
    maps: Option<(usize, usize)>,
) -> AppResult<Vec<String>> {
    let mut outputs = Vec::new();
    let w_path = dir.join("W.csv");
    io::write_matrix_csv(&factors.w, &w_path)?;
    outputs.push(path_str(&w_path));
    let h_path = dir.join("H.csv");
    io::write_matrix_csv(&factors.h, &h_path)?;
    outputs.push(path_str(&h_path));
    if let Some(trace) = trace {
        let t_path = dir.join("trace.tsv");
        io::write_trace_tsv(trace, &t_path)?;
        outputs.push(path_str(&t_path));
    }
    if let Some((w, h)) = maps {
        for k in 0..factors.h.rows() {
            let p = dir.join(format!("map_{k}.pgm"));
            io::write_abundance_pgm(factors.h.row(k), w, h, &p)?;
            outputs.push(path_str(&p));
        }
    }
    Ok(outputs)
}

fn report_warnings(trace: &ConvergenceTrace) {
    for w in &trace.warnings {
        eprintln!("warning: {w}");
    }
}

fn common_argv(common: &CommonArgs) -> Vec<String> {
    let mut argv = vec![
        "--input".into(),
        path_str(&common.input),
        "--rank".into(),
        common.rank.to_string(),
        "--seed".into(),
        common.seed.to_string(),
        "--outer".into(),
        common.outer.to_string(),
        "--inner".into(),
        common.inner.to_string(),
        "--out-dir".into(),
        path_str(&common.out_dir),
    ];
    if let Some(mask) = &common.mask {
        argv.push("--mask".into());
        argv.push(path_str(mask));
    }
    if common.missing_nan {
        argv.push("--missing-nan".into());
    }
    if common.trace {
        argv.push("--trace".into());
    }
    if let Some(maps) = &common.maps {
        argv.push("--maps".into());
        argv.push(maps.clone());
    }
    argv
}

fn run_gen(args: GenArgs) -> AppResult<()> {
    let start = Instant::now();
    ensure_dir(&args.out_dir)?;
    let dir = &args.out_dir;
    let mut outputs = Vec::new();
    let mut argv = vec!["gen".to_string()];

    if let Some(name) = &args.fixture {
        let matrix = fixture(name).map_err(|e| AppError::Invalid(e.to_string()))?;
        let p = dir.join("fixture.csv");
        io::write_matrix_csv(&matrix, &p)?;
        outputs.push(path_str(&p));
        argv.extend([
            "--fixture".into(),
            name.clone(),
            "--out-dir".into(),
            path_str(dir),
        ]);
        let manifest = RunManifest {
            subcommand: "gen".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed: args.seed,
            argv,
            inputs: vec![],
            outputs,
            options: json!({ "fixture": name }),
            wall_time_s: start.elapsed().as_secs_f64(),
        };
        manifest
            .write(dir)
            .map_err(|e| AppError::Invalid(e.to_string()))?;
        return Ok(());
    }

    argv.extend([
        "--m".into(),
        args.m.to_string(),
        "--n".into(),
        args.n.to_string(),
        "--rank".into(),
        args.rank.to_string(),
        "--h-zero-frac".into(),
        args.h_zero_frac.to_string(),
        "--missing-frac".into(),
        args.missing_frac.to_string(),
        "--noise".into(),
        args.noise.to_string(),
        "--seed".into(),
        args.seed.to_string(),
        "--out-dir".into(),
        path_str(dir),
        "--kind".into(),
        args.kind.clone(),
    ]);
    if args.dirichlet {
        argv.push("--dirichlet".into());
    }
    if args.no_normalize {
        argv.push("--no-normalize".into());
    }

    match args.kind.as_str() {
        "separable" => {
            let (x, indices) =
                gen_separable_instance(args.m, args.n, args.rank, args.noise, args.seed)
                    .map_err(|e| AppError::Invalid(e.to_string()))?;
            let p = dir.join("X.csv");
            io::write_matrix_csv(&x, &p)?;
            outputs.push(path_str(&p));
            let idx_path = dir.join("true_indices.tsv");
            let line: Vec<String> = indices.iter().map(|i| i.to_string()).collect();
            std::fs::write(&idx_path, line.join("\t") + "\n")
                .map_err(|e| AppError::Invalid(e.to_string()))?;
            outputs.push(path_str(&idx_path));
        }
        _ => {
            let spec = SyntheticSpec {
                m: args.m,
                n: args.n,
                rank: args.rank,
                h_zero_fraction: args.h_zero_frac,
                missing_fraction: args.missing_frac,
                noise_level: args.noise,
                normalize_mean_to_one: !args.no_normalize,
                seed: args.seed,
                dirichlet_h: args.dirichlet,
            };
            let inst =
                gen_completion_instance(&spec).map_err(|e| AppError::Invalid(e.to_string()))?;
            for (name, matrix) in [
                ("X.csv", &inst.x_noisy),
                ("Xclean.csv", &inst.x_clean),
                ("mask.csv", &inst.mask.weights),
                ("Wtrue.csv", &inst.w_true),
                ("Htrue.csv", &inst.h_true),
            ] {
                let p = dir.join(name);
                io::write_matrix_csv(matrix, &p)?;
                outputs.push(path_str(&p));
            }
            let spec_json = json!({
                "m": spec.m,
                "n": spec.n,
                "rank": spec.rank,
                "h_zero_fraction": spec.h_zero_fraction,
                "missing_fraction": spec.missing_fraction,
                "noise_level": spec.noise_level,
                "normalize_mean_to_one": spec.normalize_mean_to_one,
                "seed": spec.seed,
                "dirichlet_h": spec.dirichlet_h,
            });
            let p = dir.join("gen_spec.json");
            std::fs::write(&p, serde_json::to_string_pretty(&spec_json).unwrap())
                .map_err(|e| AppError::Invalid(e.to_string()))?;
            outputs.push(path_str(&p));
        }
    }

    let manifest = RunManifest {
        subcommand: "gen".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: args.seed,
        argv,
        inputs: vec![],
        outputs,
        options: json!({
            "m": args.m, "n": args.n, "rank": args.rank,
            "h_zero_frac": args.h_zero_frac, "missing_frac": args.missing_frac,
            "noise": args.noise, "kind": args.kind,
            "dirichlet": args.dirichlet, "no_normalize": args.no_normalize,
        }),
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    manifest
        .write(dir)
        .map_err(|e| AppError::Invalid(e.to_string()))?;
    Ok(())
}

fn run_spa(args: SpaArgs) -> AppResult<()> {
    let start = Instant::now();
    let (x, mask) = load_input(&args.common)?;
    if mask.is_some() {
        return invalid("the selection step needs fully observed data; drop --mask/--missing-nan");
    }
    check_rank(args.common.rank, &x)?;
    let nu = if args.nu == 0 { x.rows() } else { args.nu };
    if nu > x.rows() {
        return invalid(format!("--nu {nu} exceeds the number of rows {}", x.rows()));
    }
    if args.kappa < 1.0 {
        return invalid("--kappa must be >= 1");
    }
    if args.runs < 1 {
        return invalid("--runs must be >= 1");
    }
    let maps = parse_maps(&args.common.maps, x.cols())?;
    ensure_dir(&args.common.out_dir)?;
    let dir = &args.common.out_dir;

    // plain SPA when the criterion degenerates to the squared norm and a
    // single run is requested
    let plain_spa = args.runs == 1 && args.kappa == 1.0 && nu == x.rows();
    let result: SelectionResult = if plain_spa {
        spa_select(&x, args.common.rank, None).map_err(numerical)?
    } else {
        let config = RandSpaConfig {
            rank: args.common.rank,
            nu,
            kappa: args.kappa,
            runs: args.runs,
            seed: args.common.seed,
        };
        randspa(&x, &config).map_err(numerical)?
    };

    let mut outputs = Vec::new();
    let idx_path = dir.join("indices.tsv");
    let line: Vec<String> = result.indices.iter().map(|i| i.to_string()).collect();
    std::fs::write(&idx_path, line.join("\t") + "\n")
        .map_err(|e| AppError::Invalid(e.to_string()))?;
    outputs.push(path_str(&idx_path));

    let mut w = DenseMatrix::zeros(x.rows(), result.indices.len());
    for (k, &j) in result.indices.iter().enumerate() {
        w.set_col(k, &x.col(j));
    }
    let h = volfact::separable::nnls_solve(&w, &x).h;
    let factors = FactorPair::new(w, h);
    outputs.extend(write_factor_outputs(dir, &factors, None, maps)?);

    println!("selected indices: {:?}", result.indices);
    println!("relative error: {:.6e}", result.relative_error);
    if !result.nnls_converged {
        eprintln!("warning: the NNLS solve hit its iteration budget");
    }

    let mut argv = vec!["spa".to_string()];
    argv.extend(common_argv(&args.common));
    argv.extend([
        "--nu".into(),
        args.nu.to_string(),
        "--kappa".into(),
        args.kappa.to_string(),
        "--runs".into(),
        args.runs.to_string(),
    ]);
    let manifest = RunManifest {
        subcommand: "spa".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: args.common.seed,
        argv,
        inputs: vec![path_str(&args.common.input)],
        outputs,
        options: json!({
            "rank": args.common.rank, "nu": nu, "kappa": args.kappa,
            "runs": args.runs, "plain_spa": plain_spa,
            "relative_error": result.relative_error,
        }),
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    manifest
        .write(dir)
        .map_err(|e| AppError::Invalid(e.to_string()))?;
    Ok(())
}

fn parse_bounds(spec: &str, x: &DenseMatrix, mask: Option<&ObservationMask>) -> AppResult<Bounds> {
    if spec == "auto" {
        return BssmfProblem::auto_bounds(x, mask).map_err(|e| AppError::Invalid(e.to_string()));
    }
    let parts: Vec<&str> = spec.split(',').collect();
    if parts.len() != 2 {
        return invalid(format!(
            "--bounds expects `auto`, `a,b`, or `aFile,bFile`, got `{spec}`"
        ));
    }
    if let (Ok(a), Ok(b)) = (parts[0].parse::<f64>(), parts[1].parse::<f64>()) {
        return Bounds::constant(a, b, x.rows()).map_err(|e| AppError::Invalid(e.to_string()));
    }
    let a = io::read_vector_csv(Path::new(parts[0]))?;
    let b = io::read_vector_csv(Path::new(parts[1]))?;
    if a.len() != x.rows() || b.len() != x.rows() {
        return invalid(format!(
            "bound vectors must have {} entries (got {} and {})",
            x.rows(),
            a.len(),
            b.len()
        ));
    }
    Bounds::new(a, b).map_err(|e| AppError::Invalid(e.to_string()))
}

fn run_bssmf(args: BssmfArgs) -> AppResult<()> {
    let start = Instant::now();
    let (x, mask) = load_input(&args.common)?;
    check_rank(args.common.rank, &x)?;
    let bounds = parse_bounds(&args.bounds, &x, mask.as_ref())?;
    let centering = match args.centering.as_str() {
        "global" => Centering::Global,
        "row-wise" => Centering::RowWise,
        _ => Centering::None,
    };
    let maps = parse_maps(&args.common.maps, x.cols())?;
    ensure_dir(&args.common.out_dir)?;
    let dir = &args.common.out_dir;

    let problem = BssmfProblem {
        x: x.clone(),
        mask,
        bounds,
        rank: args.common.rank,
        centering,
    };
    let opts = SolverOptions::new(args.common.rank, args.common.seed).with_budgets(
        args.common.outer,
        args.common.inner,
        args.common.inner,
    );
    let (factors, trace) = bssmf_fit(&problem, &opts).map_err(numerical)?;
    report_warnings(&trace);
    let err =
        relative_error(&x, &factors.w, &factors.h, problem.mask.as_ref()).map_err(numerical)?;
    println!("relative error: {err:.6e}");

    let outputs = write_factor_outputs(
        dir,
        &factors,
        if args.common.trace {
            Some(&trace)
        } else {
            None
        },
        maps,
    )?;
    let mut argv = vec!["bssmf".to_string()];
    argv.extend(common_argv(&args.common));
    argv.extend([
        "--bounds".into(),
        args.bounds.clone(),
        "--centering".into(),
        args.centering.clone(),
    ]);
    let manifest = RunManifest {
        subcommand: "bssmf".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: args.common.seed,
        argv,
        inputs: vec![path_str(&args.common.input)],
        outputs,
        options: json!({
            "rank": args.common.rank, "bounds": args.bounds, "centering": args.centering,
            "outer": args.common.outer, "inner": args.common.inner,
            "relative_error": err,
        }),
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    manifest
        .write(dir)
        .map_err(|e| AppError::Invalid(e.to_string()))?;
    Ok(())
}

fn run_minvol(args: MinvolArgs, completion: bool) -> AppResult<()> {
    let start = Instant::now();
    let (x, mask) = load_input(&args.common)?;
    check_rank(args.common.rank, &x)?;
    let maps = parse_maps(&args.common.maps, x.cols())?;
    ensure_dir(&args.common.out_dir)?;
    let dir = &args.common.out_dir;

    let variant = match args.variant.as_str() {
        "new-minvol" => MinvolVariant::NewMinVol,
        "nmf" => MinvolVariant::NmfBaseline,
        _ if completion => MinvolVariant::MinVolComplete,
        _ => MinvolVariant::MinVol,
    };
    let mut model = MinvolModel::new(variant);
    model.delta = args.delta;
    model.autotune = args.autotune;
    if let Some(lambda) = args.lambda {
        model.lambda = lambda;
    }
    if let Some(gamma) = args.gamma {
        model.gamma = gamma;
    }

    let init = if args.warm_start_iters > 0 {
        let pair = warm_start_nmf(
            &x,
            mask.as_ref(),
            args.common.rank,
            args.warm_start_iters,
            args.common.seed,
        )
        .map_err(numerical)?;
        // hyperparameters not given explicitly are derived from the warm start
        if variant != MinvolVariant::NmfBaseline && (args.lambda.is_none() || args.gamma.is_none())
        {
            let tuned =
                init_hyperparams(&x, mask.as_ref(), &pair.w, &pair.h, &model).map_err(numerical)?;
            if args.lambda.is_none() {
                model.lambda = tuned.lambda;
            }
            if args.gamma.is_none() {
                model.gamma = tuned.gamma;
            }
        }
        Some(pair)
    } else {
        None
    };

    let opts = SolverOptions::new(args.common.rank, args.common.seed).with_budgets(
        args.common.outer,
        args.common.inner,
        args.common.inner,
    );
    let (factors, trace) =
        minvol_fit(&x, mask.as_ref(), &model, &opts, init.as_ref()).map_err(numerical)?;
    report_warnings(&trace);
    let err = relative_error(&x, &factors.w, &factors.h, mask.as_ref()).map_err(numerical)?;
    println!("relative error: {err:.6e}");

    let outputs = write_factor_outputs(
        dir,
        &factors,
        if args.common.trace {
            Some(&trace)
        } else {
            None
        },
        maps,
    )?;
    let name = if completion {
        "minvol-complete"
    } else {
        "minvol"
    };
    let mut argv = vec![name.to_string()];
    argv.extend(common_argv(&args.common));
    argv.extend([
        "--variant".into(),
        args.variant.clone(),
        "--lambda".into(),
        model.lambda.to_string(),
        "--delta".into(),
        args.delta.to_string(),
        "--gamma".into(),
        model.gamma.to_string(),
        "--warm-start-iters".into(),
        args.warm_start_iters.to_string(),
    ]);
    if args.autotune {
        argv.push("--autotune".into());
    }
    let manifest = RunManifest {
        subcommand: name.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: args.common.seed,
        argv,
        inputs: vec![path_str(&args.common.input)],
        outputs,
        options: json!({
            "rank": args.common.rank, "variant": args.variant,
            "lambda": model.lambda, "delta": args.delta, "gamma": model.gamma,
            "autotune": args.autotune, "warm_start_iters": args.warm_start_iters,
            "outer": args.common.outer, "inner": args.common.inner,
            "relative_error": err,
        }),
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    manifest
        .write(dir)
        .map_err(|e| AppError::Invalid(e.to_string()))?;
    Ok(())
}

fn run_maxvol(args: MaxvolArgs) -> AppResult<()> {
    let start = Instant::now();
    let (x, mask) = load_input(&args.common)?;
    if mask.is_some() {
        return invalid("maxvol works on fully observed data; drop --mask/--missing-nan");
    }
    check_rank(args.common.rank, &x)?;
    let maps = parse_maps(&args.common.maps, x.cols())?;
    ensure_dir(&args.common.out_dir)?;
    let dir = &args.common.out_dir;

    let algorithm = match args.algo.as_str() {
        "admm-bregman" => MaxvolAlgorithm::AdmmBregman,
        "admm" => MaxvolAlgorithm::AdmmAdgrad,
        _ => MaxvolAlgorithm::Adgrad2,
    };
    let model = MaxvolModel {
        lambda: args.lambda,
        delta: args.delta,
        normalized: false,
        algorithm,
        rho: args.rho,
    };
    let opts = SolverOptions::new(args.common.rank, args.common.seed).with_budgets(
        args.common.outer,
        args.common.inner,
        args.common.inner,
    );
    let (factors, trace) = maxvol_fit(&x, &model, &opts).map_err(numerical)?;
    report_warnings(&trace);
    let err = relative_error(&x, &factors.w, &factors.h, None).map_err(numerical)?;
    println!("relative error: {err:.6e}");

    let outputs = write_factor_outputs(
        dir,
        &factors,
        if args.common.trace {
            Some(&trace)
        } else {
            None
        },
        maps,
    )?;
    let mut argv = vec!["maxvol".to_string()];
    argv.extend(common_argv(&args.common));
    argv.extend([
        "--algo".into(),
        args.algo.clone(),
        "--rho".into(),
        args.rho.to_string(),
        "--lambda".into(),
        args.lambda.to_string(),
        "--delta".into(),
        args.delta.to_string(),
    ]);
    let manifest = RunManifest {
        subcommand: "maxvol".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: args.common.seed,
        argv,
        inputs: vec![path_str(&args.common.input)],
        outputs,
        options: json!({
            "rank": args.common.rank, "algo": args.algo, "rho": args.rho,
            "lambda": args.lambda, "delta": args.delta,
            "outer": args.common.outer, "inner": args.common.inner,
            "relative_error": err,
        }),
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    manifest
        .write(dir)
        .map_err(|e| AppError::Invalid(e.to_string()))?;
    Ok(())
}

fn run_nmaxvol(args: NmaxvolArgs) -> AppResult<()> {
    let start = Instant::now();
    let (x, mask) = load_input(&args.common)?;
    if mask.is_some() {
        return invalid("nmaxvol works on fully observed data; drop --mask/--missing-nan");
    }
    check_rank(args.common.rank, &x)?;
    let maps = parse_maps(&args.common.maps, x.cols())?;
    ensure_dir(&args.common.out_dir)?;
    let dir = &args.common.out_dir;

    let mut model = MaxvolModel::normalized(args.lambda);
    model.delta = args.delta;
    let opts = SolverOptions::new(args.common.rank, args.common.seed).with_budgets(
        args.common.outer,
        args.common.inner,
        args.common.inner,
    );
    let (factors, trace) = maxvol_fit(&x, &model, &opts).map_err(numerical)?;
    report_warnings(&trace);
    let err = relative_error(&x, &factors.w, &factors.h, None).map_err(numerical)?;
    println!("relative error: {err:.6e}");

    let outputs = write_factor_outputs(
        dir,
        &factors,
        if args.common.trace {
            Some(&trace)
        } else {
            None
        },
        maps,
    )?;
    let mut argv = vec!["nmaxvol".to_string()];
    argv.extend(common_argv(&args.common));
    argv.extend([
        "--lambda".into(),
        args.lambda.to_string(),
        "--delta".into(),
        args.delta.to_string(),
    ]);
    let manifest = RunManifest {
        subcommand: "nmaxvol".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: args.common.seed,
        argv,
        inputs: vec![path_str(&args.common.input)],
        outputs,
        options: json!({
            "rank": args.common.rank, "lambda": args.lambda, "delta": args.delta,
            "outer": args.common.outer, "inner": args.common.inner,
            "relative_error": err,
        }),
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    manifest
        .write(dir)
        .map_err(|e| AppError::Invalid(e.to_string()))?;
    Ok(())
}

fn run_ssc(args: SscArgs) -> AppResult<()> {
    let start = Instant::now();
    let (h, _) = io::read_matrix_csv(&args.input, false)?;
    ensure_dir(&args.out_dir)?;
    let report = check_ssc1_necessary(&h, args.tol).map_err(numerical)?;

    let fmt_bools = |bs: &[bool]| {
        bs.iter()
            .map(|b| b.to_string())
            .collect::<Vec<_>>()
            .join(",")
    };
    let counts = report
        .row_zero_counts
        .iter()
        .map(|c| c.to_string())
        .collect::<Vec<_>>()
        .join(",");
    let mut tsv = String::from("metric\tvalue\n");
    tsv.push_str(&format!("row_zero_counts\t{counts}\n"));
    tsv.push_str(&format!("row_sparsity_ok\t{}\n", report.row_sparsity_ok));
    tsv.push_str(&format!(
        "corner_membership\t{}\n",
        fmt_bools(&report.corner_membership)
    ));
    tsv.push_str(&format!("necessary_ok\t{}\n", report.necessary_ok));
    print!("{tsv}");
    let p = args.out_dir.join("ssc_report.tsv");
    std::fs::write(&p, &tsv).map_err(|e| AppError::Invalid(e.to_string()))?;

    let argv = vec![
        "ssc-check".to_string(),
        "--input".into(),
        path_str(&args.input),
        "--tol".into(),
        args.tol.to_string(),
        "--out-dir".into(),
        path_str(&args.out_dir),
    ];
    let manifest = RunManifest {
        subcommand: "ssc-check".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: 0,
        argv,
        inputs: vec![path_str(&args.input)],
        outputs: vec![path_str(&p)],
        options: json!({ "tol": args.tol, "necessary_ok": report.necessary_ok }),
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    manifest
        .write(&args.out_dir)
        .map_err(|e| AppError::Invalid(e.to_string()))?;
    Ok(())
}
