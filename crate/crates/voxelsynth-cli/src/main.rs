//! `synth` — coarse-to-fine binary volume synthesis from the command line.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use voxelsynth::encode::NbhdSize;
use voxelsynth::io::{load_volume, save_volume, VolumeFormat};
use voxelsynth::metrics::{dsc, hausdorff};
use voxelsynth::morph::KeepRule;
use voxelsynth::phantom::{make_phantom, PhantomSpec};
use voxelsynth::pipeline::{run_pipeline, Backend, DenoiseParams, PipelineConfig};
use voxelsynth::resample::{downsample2x, upsample_interp, InterpOrder, SmoothMode};
use voxelsynth::surface::{export_mesh, marching_cubes, MeshFormat};
use voxelsynth::synth::{
    build_index, synthesize_level, FallbackPolicy, ParallelMode, SynthesisConfig,
};
use voxelsynth::VoxelGrid;

#[derive(Parser)]
#[command(
    name = "synth",
    about = "Upsample coarse binary volumes by template-guided hierarchical synthesis",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline: synthesize, extract, mesh, evaluate, export.
    Run(RunArgs),
    /// Compare two volumes: DSC and Hausdorff distances.
    Eval(EvalArgs),
    /// Triangulate a volume with marching cubes and export STL/OBJ.
    Mesh(MeshArgs),
    /// Generate a deterministic test phantom volume.
    Phantom(PhantomArgs),
    /// Time one synthesis level on a shell phantom.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendArg {
    Hash,
    Kdtree,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FallbackArg {
    Random,
    Keep,
    Majority,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MeshFormatArg {
    Stl,
    Obj,
}

#[derive(Args)]
struct RunArgs {
    /// Input volume: the coarse volume, or a full-resolution volume with
    /// --simulate-coarse.
    #[arg(long)]
    input: PathBuf,
    /// Smooth high-resolution template volume.
    #[arg(long)]
    template: PathBuf,
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    /// Pyramid levels to synthesize.
    #[arg(long)]
    levels: Option<u32>,
    /// Neighborhood edge length (3 or 5).
    #[arg(long)]
    nbhd: Option<u32>,
    /// Hamming-ball precomputation radius.
    #[arg(long)]
    radius: Option<u32>,
    #[arg(long, value_enum)]
    fallback: Option<FallbackArg>,
    #[arg(long)]
    seed: Option<u64>,
    /// serial, shared:P, or partitioned:P.
    #[arg(long)]
    parallel: Option<String>,
    /// Downsample the input first (stand-in for a coarse network output).
    #[arg(long)]
    simulate_coarse: bool,
    /// Subtract this volume from the synthesized output (implant
    /// extraction).
    #[arg(long)]
    subtract: Option<PathBuf>,
    /// largest, or min:N (keep components with at least N voxels).
    #[arg(long)]
    denoise: Option<String>,
    /// Opening radius applied after component filtering.
    #[arg(long)]
    morph_radius: Option<usize>,
    /// Ground-truth volume for DSC/HD evaluation.
    #[arg(long)]
    gt: Option<PathBuf>,
    /// PCA dimension for the kdtree backend.
    #[arg(long)]
    kd_dims: Option<usize>,
    #[arg(long, value_enum)]
    mesh_format: Option<MeshFormatArg>,
    /// TOML file with default parameter values (flags take precedence).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
}

#[derive(Args)]
struct MeshArgs {
    #[arg(long)]
    input: PathBuf,
    /// Output path; format from extension (.stl or .obj).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PhantomArgs {
    /// sphere_shell, staircase, or cube.
    #[arg(long)]
    kind: String,
    /// Voxel counts as X,Y,Z.
    #[arg(long)]
    dims: String,
    /// Spacing in mm as SX,SY,SZ.
    #[arg(long, default_value = "1,1,1")]
    spacing: String,
    #[arg(long, default_value_t = 0.0)]
    r_in: f64,
    #[arg(long, default_value_t = 0.0)]
    r_out: f64,
    /// Surface perturbation rate in [0,1] (sphere_shell only).
    #[arg(long, default_value_t = 0.0)]
    perturb: f64,
    #[arg(long, default_value_t = 0)]
    base: usize,
    #[arg(long, default_value_t = 1)]
    step: usize,
    #[arg(long)]
    alternating: bool,
    #[arg(long, default_value_t = 4)]
    side: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Cubic level size to synthesize (e.g. 64, 128, 256).
    #[arg(long, default_value_t = 128)]
    level_size: usize,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2)]
    radius: u32,
}

/// Optional TOML config carrying the numeric defaults; CLI flags override.
#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    backend: Option<String>,
    levels: Option<u32>,
    nbhd: Option<u32>,
    radius: Option<u32>,
    fallback: Option<String>,
    seed: Option<u64>,
    parallel: Option<String>,
    kd_dims: Option<usize>,
    sigma: Option<f64>,
    smooth: Option<String>,
    mesh_format: Option<String>,
    morph_radius: Option<usize>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Lib(voxelsynth::Error),
}

impl From<voxelsynth::Error> for CliError {
    fn from(e: voxelsynth::Error) -> Self {
        CliError::Lib(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "{msg}"),
            // thiserror Display strings already chain their sources
            CliError::Lib(e) => write!(f, "{e}"),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Lib(e) => {
                if e.is_validation() {
                    2
                } else {
                    3
                }
            }
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn parse_triple<T: std::str::FromStr + Copy>(s: &str, what: &str) -> Result<(T, T, T), CliError> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(usage(format!(
            "{what} must be three comma-separated values"
        )));
    }
    let mut vals = Vec::with_capacity(3);
    for p in &parts {
        vals.push(
            p.trim()
                .parse::<T>()
                .map_err(|_| usage(format!("bad {what} component '{p}'")))?,
        );
    }
    Ok((vals[0], vals[1], vals[2]))
}

fn parse_parallel(s: &str, env_threads: Option<usize>) -> Result<ParallelMode, CliError> {
    let apply = |p: usize| env_threads.unwrap_or(p);
    if s == "serial" {
        return Ok(match env_threads {
            Some(p) if p > 1 => ParallelMode::SharedIndex(p),
            _ => ParallelMode::Serial,
        });
    }
    if let Some(rest) = s.strip_prefix("shared:") {
        let p: usize = rest
            .parse()
            .map_err(|_| usage(format!("bad worker count '{rest}'")))?;
        return Ok(ParallelMode::SharedIndex(apply(p)));
    }
    if let Some(rest) = s.strip_prefix("partitioned:") {
        let p: usize = rest
            .parse()
            .map_err(|_| usage(format!("bad worker count '{rest}'")))?;
        return Ok(ParallelMode::PartitionedIndex(apply(p)));
    }
    Err(usage(format!(
        "bad --parallel value '{s}'; use serial, shared:P or partitioned:P"
    )))
}

fn parse_nbhd(n: u32) -> Result<NbhdSize, CliError> {
    match n {
        3 => Ok(NbhdSize::Three),
        5 => Ok(NbhdSize::Five),
        other => Err(usage(format!(
            "neighborhood size must be 3 or 5, got {other}"
        ))),
    }
}

fn env_threads() -> Result<Option<usize>, CliError> {
    match std::env::var("SYNTH_THREADS") {
        Ok(v) => {
            let p: usize = v
                .parse()
                .map_err(|_| usage(format!("bad SYNTH_THREADS value '{v}'")))?;
            if p == 0 {
                return Err(usage("SYNTH_THREADS must be >= 1"));
            }
            Ok(Some(p))
        }
        Err(_) => Ok(None),
    }
}

fn load_auto(path: &Path) -> Result<VoxelGrid, CliError> {
    let format = VolumeFormat::from_path(path).ok_or_else(|| {
        usage(format!(
            "cannot infer volume format from '{}'; use .nrrd/.nhdr or .raw/.json",
            path.display()
        ))
    })?;
    Ok(load_volume(path, format)?)
}

fn cmd_run(args: RunArgs) -> Result<(), CliError> {
    let file_cfg: FileConfig = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| usage(format!("cannot read config '{}': {e}", path.display())))?;
            toml::from_str(&text)
                .map_err(|e| usage(format!("bad config '{}': {e}", path.display())))?
        }
        None => FileConfig::default(),
    };

    let backend = match args.backend {
        Some(BackendArg::Hash) => Backend::Hash,
        Some(BackendArg::Kdtree) => Backend::Kdtree,
        None => match file_cfg.backend.as_deref() {
            Some("hash") | None => Backend::Hash,
            Some("kdtree") => Backend::Kdtree,
            Some(other) => return Err(usage(format!("bad backend '{other}' in config"))),
        },
    };
    let fallback = match args.fallback {
        Some(FallbackArg::Random) => FallbackPolicy::Random,
        Some(FallbackArg::Keep) => FallbackPolicy::KeepCoarse,
        Some(FallbackArg::Majority) => FallbackPolicy::Majority,
        None => match file_cfg.fallback.as_deref() {
            Some("random") | None => FallbackPolicy::Random,
            Some("keep") => FallbackPolicy::KeepCoarse,
            Some("majority") => FallbackPolicy::Majority,
            Some(other) => return Err(usage(format!("bad fallback '{other}' in config"))),
        },
    };
    let sigma = file_cfg.sigma.unwrap_or(0.8);
    let pyramid_smooth = match file_cfg.smooth.as_deref() {
        Some("mean") => SmoothMode::Mean,
        Some("gaussian") | None => SmoothMode::Gaussian { sigma },
        Some(other) => return Err(usage(format!("bad smooth mode '{other}' in config"))),
    };
    let env = env_threads()?;
    let parallel = match (&args.parallel, &file_cfg.parallel) {
        (Some(s), _) => parse_parallel(s, env)?,
        (None, Some(s)) => parse_parallel(s, env)?,
        (None, None) => parse_parallel("serial", env)?,
    };
    let synthesis = SynthesisConfig {
        nbhd: parse_nbhd(args.nbhd.or(file_cfg.nbhd).unwrap_or(3))?,
        radius: args.radius.or(file_cfg.radius).unwrap_or(2),
        fallback,
        levels: args.levels.or(file_cfg.levels).unwrap_or(2),
        parallel,
        seed: args.seed.or(file_cfg.seed).unwrap_or(0),
        pyramid_smooth,
    };
    let denoise = match args.denoise.as_deref() {
        None => None,
        Some("largest") => Some(DenoiseParams {
            keep: KeepRule::LargestComponent,
            morph_radius: args.morph_radius.or(file_cfg.morph_radius).unwrap_or(0),
        }),
        Some(spec) => {
            let n = spec
                .strip_prefix("min:")
                .and_then(|v| v.parse::<u64>().ok())
                .ok_or_else(|| {
                    usage(format!(
                        "bad --denoise value '{spec}'; use largest or min:N"
                    ))
                })?;
            Some(DenoiseParams {
                keep: KeepRule::MinSize(n),
                morph_radius: args.morph_radius.or(file_cfg.morph_radius).unwrap_or(0),
            })
        }
    };
    let mesh_format = match args.mesh_format {
        Some(MeshFormatArg::Stl) => MeshFormat::StlBinary,
        Some(MeshFormatArg::Obj) => MeshFormat::Obj,
        None => match file_cfg.mesh_format.as_deref() {
            Some("obj") => MeshFormat::Obj,
            _ => MeshFormat::StlBinary,
        },
    };

    let cfg = PipelineConfig {
        backend,
        synthesis,
        simulate_coarse: args.simulate_coarse,
        kd_dims: args.kd_dims.or(file_cfg.kd_dims).unwrap_or(20),
        subtract: args.subtract,
        denoise,
        ground_truth: args.gt,
        mesh_format,
    };
    let out = run_pipeline(&args.input, &args.template, &cfg, &args.out)?;
    println!("{}", out.report.stable_json());
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<(), CliError> {
    let pred = load_auto(&args.pred)?;
    let gt = load_auto(&args.gt)?;
    let d = dsc(&pred, &gt)?;
    let (hd, hd95) = if !pred.is_empty() && !gt.is_empty() {
        (
            Some(hausdorff(&pred, &gt, 100.0)?),
            Some(hausdorff(&pred, &gt, 95.0)?),
        )
    } else {
        (None, None)
    };
    let report = serde_json::json!({
        "dsc": d,
        "hd95_mm": hd95,
        "hd_mm": hd,
    });
    println!("{}", serde_json::to_string_pretty(&report).unwrap());
    Ok(())
}

fn cmd_mesh(args: MeshArgs) -> Result<(), CliError> {
    let format = MeshFormat::from_path(&args.out)
        .ok_or_else(|| usage("output extension must be .stl or .obj"))?;
    let grid = load_auto(&args.input)?;
    let mesh = marching_cubes(&grid, 0.5)?;
    export_mesh(&mesh, &args.out, format)?;
    println!(
        "{} vertices, {} triangles -> {}",
        mesh.vertices.len(),
        mesh.triangles.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_phantom(args: PhantomArgs) -> Result<(), CliError> {
    let dims = parse_triple::<usize>(&args.dims, "--dims")?;
    let spacing = parse_triple::<f64>(&args.spacing, "--spacing")?;
    let spec = match args.kind.as_str() {
        "sphere_shell" => PhantomSpec::SphereShell {
            r_in: args.r_in,
            r_out: args.r_out,
            perturb_rate: args.perturb,
        },
        "staircase" => PhantomSpec::Staircase {
            base: args.base,
            step: args.step,
            alternating: args.alternating,
        },
        "cube" => PhantomSpec::Cube { side: args.side },
        other => {
            return Err(usage(format!(
                "bad --kind '{other}'; use sphere_shell, staircase or cube"
            )));
        }
    };
    let grid = make_phantom(&spec, dims, spacing, args.seed)?;
    let format = VolumeFormat::from_path(&args.out)
        .ok_or_else(|| usage("output extension must be .nrrd/.nhdr or .raw/.json"))?;
    save_volume(&grid, &args.out, format)?;
    println!(
        "{} occupied of {} voxels -> {}",
        grid.count_occupied(),
        grid.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<(), CliError> {
    let threads = env_threads()?.unwrap_or(args.threads);
    let n = args.level_size;
    if n < 16 || !n.is_multiple_of(4) {
        return Err(usage("--level-size must be a multiple of 4, at least 16"));
    }
    let template = make_phantom(
        &PhantomSpec::SphereShell {
            r_in: 0.34 * n as f64,
            r_out: 0.41 * n as f64,
            perturb_rate: 0.0,
        },
        (n, n, n),
        (1.0, 1.0, 1.0),
        0,
    )?;
    let cfg = SynthesisConfig {
        radius: args.radius,
        seed: args.seed,
        parallel: if threads > 1 {
            ParallelMode::SharedIndex(threads)
        } else {
            ParallelMode::Serial
        },
        ..SynthesisConfig::default()
    };
    let coarse = downsample2x(&template, cfg.pyramid_smooth)?;
    let guess = upsample_interp(&coarse, 2, InterpOrder::Trilinear)?;

    let t0 = Instant::now();
    let index = build_index(&template, &cfg);
    let build_s = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let (_, stats) = synthesize_level(&guess, &template, &index, &cfg)?;
    let synthesize_s = t1.elapsed().as_secs_f64();

    let out = serde_json::json!({
        "build_s": build_s,
        "level_size": n,
        "stats": stats,
        "synthesize_s": synthesize_s,
        "threads": threads,
        "total_s": build_s + synthesize_s,
    });
    println!("{}", serde_json::to_string_pretty(&out).unwrap());
    Ok(())
}

fn real_main() -> Result<(), CliError> {
    match Cli::parse().command {
        Command::Run(args) => cmd_run(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Mesh(args) => cmd_mesh(args),
        Command::Phantom(args) => cmd_phantom(args),
        Command::Bench(args) => cmd_bench(args),
    }
}

fn main() -> ExitCode {
    match std::panic::catch_unwind(real_main) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
        Err(_) => {
            eprintln!("internal error");
            ExitCode::from(4)
        }
    }
}
