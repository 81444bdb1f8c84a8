//! The end-to-end coarse-to-fine run: load, pad, (optionally) simulate the
//! coarse input by downsampling, hierarchically synthesize against the
//! template, optionally extract an implant (subtract + denoise), triangulate,
//! evaluate, and export volume/mesh/report artifacts.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::error::{Error, Result};
use crate::grid::{subtract, VoxelGrid};
use crate::io::{load_volume, save_volume, VolumeFormat};
use crate::kdtree::synthesize_hierarchical_kdtree;
use crate::metrics::{dsc, hausdorff, MetricReport};
use crate::morph::{denoise, KeepRule};
use crate::resample::{downsample2x, pad_to_pow2};
use crate::surface::{export_mesh, marching_cubes, Mesh, MeshFormat};
use crate::synth::{synthesize_hierarchical, IndexStats, SynthesisConfig, SynthesisRun};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    Hash,
    Kdtree,
}

impl Backend {
    pub fn name(&self) -> &'static str {
        match self {
            Backend::Hash => "hash",
            Backend::Kdtree => "kdtree",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DenoiseParams {
    pub keep: KeepRule,
    pub morph_radius: usize,
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub backend: Backend,
    pub synthesis: SynthesisConfig,
    /// Downsample the input `levels` times first, standing in for the coarse
    /// network output the full system would provide.
    pub simulate_coarse: bool,
    /// PCA target dimension for the kd backend.
    pub kd_dims: usize,
    /// Subtract this volume from the synthesized output (implant
    /// extraction).
    pub subtract: Option<PathBuf>,
    /// Post-subtraction cleanup.
    pub denoise: Option<DenoiseParams>,
    /// Evaluate DSC/Hausdorff against this volume.
    pub ground_truth: Option<PathBuf>,
    pub mesh_format: MeshFormat,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            backend: Backend::Hash,
            synthesis: SynthesisConfig::default(),
            simulate_coarse: false,
            kd_dims: 20,
            subtract: None,
            denoise: None,
            ground_truth: None,
            mesh_format: MeshFormat::StlBinary,
        }
    }
}

fn stage<T>(
    name: &'static str,
    report: &mut MetricReport,
    f: impl FnOnce() -> Result<T>,
) -> Result<T> {
    let start = Instant::now();
    let out = f().map_err(|e| Error::Stage {
        stage: name,
        source: Box::new(e),
    })?;
    report
        .runtime_s
        .insert(name.to_string(), start.elapsed().as_secs_f64());
    Ok(out)
}

fn load_auto(path: &Path) -> Result<VoxelGrid> {
    let format = VolumeFormat::from_path(path).ok_or_else(|| {
        Error::validation(format!(
            "cannot infer volume format from '{}'; use .nrrd/.nhdr or .raw/.json",
            path.display()
        ))
    })?;
    load_volume(path, format)
}

/// Everything a pipeline run leaves behind, plus the in-memory results.
#[derive(Debug)]
pub struct PipelineOutput {
    pub report: MetricReport,
    pub volume: VoxelGrid,
    pub mesh: Mesh,
    pub level_stats: Vec<IndexStats>,
    pub written: Vec<PathBuf>,
}

/// Run the full pipeline, writing `volume.nrrd`, `mesh.stl`/`mesh.obj`,
/// `stats.json`, `report.json` and `timings.json` into `out_dir`. Any stage
/// failure aborts with the stage name and removes partially written outputs.
pub fn run_pipeline(
    input: &Path,
    template: &Path,
    cfg: &PipelineConfig,
    out_dir: &Path,
) -> Result<PipelineOutput> {
    let mut written: Vec<PathBuf> = Vec::new();
    match run_pipeline_inner(input, template, cfg, out_dir, &mut written) {
        Ok(out) => Ok(out),
        Err(e) => {
            for path in written {
                let _ = fs::remove_file(path);
            }
            Err(e)
        }
    }
}

fn run_pipeline_inner(
    input: &Path,
    template: &Path,
    cfg: &PipelineConfig,
    out_dir: &Path,
    written: &mut Vec<PathBuf>,
) -> Result<PipelineOutput> {
    let mut report = MetricReport {
        backend: cfg.backend.name().to_string(),
        seed: cfg.synthesis.seed,
        ..Default::default()
    };
    let levels = cfg.synthesis.levels;

    let (input_grid, template_grid) = stage("load", &mut report, || {
        Ok((load_auto(input)?, load_auto(template)?))
    })?;

    // pad the template up to the pyramid's divisibility requirement and
    // derive (or validate) the coarse input
    let (coarse, template_padded, template_orig_dims) = stage("prepare", &mut report, || {
        if levels == 0 {
            // pass-through mode: no synthesis, input is already full-res
            input_grid.check_same_dims(&template_grid)?;
            let dims = template_grid.dims();
            return Ok((input_grid.clone(), template_grid.clone(), dims));
        }
        let (template_padded, orig_dims) = pad_to_pow2(&template_grid, levels)?;
        let coarse = if cfg.simulate_coarse {
            input_grid.check_same_dims(&template_grid)?;
            let mut g = input_grid.pad_to(template_padded.dims())?;
            for _ in 0..levels {
                g = downsample2x(&g, cfg.synthesis.pyramid_smooth)?;
            }
            g
        } else {
            let m = 1usize << levels;
            let (tx, ty, tz) = template_padded.dims();
            let expect = (tx / m, ty / m, tz / m);
            if input_grid.dims() != expect {
                return Err(Error::DimsMismatch {
                    left: input_grid.dims(),
                    right: expect,
                });
            }
            input_grid.clone()
        };
        Ok((coarse, template_padded, orig_dims))
    })?;

    let (synthesized, level_stats) = stage("synthesize", &mut report, || {
        if levels == 0 {
            return Ok((coarse.clone(), Vec::new()));
        }
        let SynthesisRun {
            output,
            level_stats,
        } = match cfg.backend {
            Backend::Hash => synthesize_hierarchical(&coarse, &template_padded, &cfg.synthesis)?,
            Backend::Kdtree => synthesize_hierarchical_kdtree(
                &coarse,
                &template_padded,
                &cfg.synthesis,
                cfg.kd_dims,
            )?,
        };
        let cropped = if output.dims() != template_orig_dims {
            output.crop_to(template_orig_dims)?
        } else {
            output
        };
        Ok((cropped, level_stats))
    })?;

    report.hit_rate = level_stats.iter().map(|s| s.hit_rate()).collect();
    report.bytes_index = level_stats.iter().map(|s| s.bytes_index).max();
    report.bytes_features = level_stats.iter().filter_map(|s| s.bytes_features).max();

    let volume = stage("extract", &mut report, || {
        let mut vol = synthesized.clone();
        if let Some(defective_path) = &cfg.subtract {
            let defective = load_auto(defective_path)?;
            vol = subtract(&vol, &defective)?;
        }
        if let Some(params) = &cfg.denoise {
            vol = denoise(&vol, params.keep, params.morph_radius)?;
        }
        Ok(vol)
    })?;

    let mesh = stage("mesh", &mut report, || marching_cubes(&volume, 0.5))?;

    let quality = stage("evaluate", &mut report, || {
        let Some(gt_path) = &cfg.ground_truth else {
            return Ok(None);
        };
        let gt = load_auto(gt_path)?;
        let d = dsc(&volume, &gt)?;
        let (hd, hd95) = if !volume.is_empty() && !gt.is_empty() {
            (
                Some(hausdorff(&volume, &gt, 100.0)?),
                Some(hausdorff(&volume, &gt, 95.0)?),
            )
        } else {
            (None, None)
        };
        Ok(Some((d, hd, hd95)))
    })?;
    if let Some((d, hd, hd95)) = quality {
        report.dsc = Some(d);
        report.hd_mm = hd;
        report.hd95_mm = hd95;
    }

    stage("export", &mut report, || {
        fs::create_dir_all(out_dir).map_err(|e| Error::Io {
            path: out_dir.to_path_buf(),
            source: e,
        })?;
        let volume_path = out_dir.join("volume.nrrd");
        save_volume(&volume, &volume_path, VolumeFormat::Nrrd)?;
        written.push(volume_path);

        let mesh_path = out_dir.join(match cfg.mesh_format {
            MeshFormat::StlBinary => "mesh.stl",
            MeshFormat::Obj => "mesh.obj",
        });
        export_mesh(&mesh, &mesh_path, cfg.mesh_format)?;
        written.push(mesh_path);

        let stats_path = out_dir.join("stats.json");
        let stats_json =
            serde_json::to_string_pretty(&level_stats).expect("stats serialization cannot fail");
        fs::write(&stats_path, stats_json).map_err(|e| Error::Io {
            path: stats_path.clone(),
            source: e,
        })?;
        written.push(stats_path);
        Ok(())
    })?;

    // the report itself is written last so its timings cover every stage
    let report_path = out_dir.join("report.json");
    fs::write(&report_path, report.stable_json()).map_err(|e| Error::Io {
        path: report_path.clone(),
        source: e,
    })?;
    written.push(report_path);
    let timings_path = out_dir.join("timings.json");
    fs::write(&timings_path, report.timings_json()).map_err(|e| Error::Io {
        path: timings_path.clone(),
        source: e,
    })?;
    written.push(timings_path);

    Ok(PipelineOutput {
        report,
        volume,
        mesh,
        level_stats,
        written: written.clone(),
    })
}
