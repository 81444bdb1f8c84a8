//! Upsampling of coarse binary 3D segmentation masks by template-guided
//! hierarchical synthesis.
//!
//! The pipeline refines a coarse binary volume level by level against a
//! Gaussian pyramid built from a smooth high-resolution template. At each
//! level, every voxel near the surface is re-decided by a nearest-neighbor
//! search over bit-encoded 3^3 (or 5^3) neighborhoods: either an O(1)
//! Hamming-distance hash lookup ([`synth`]) or an exact kd-tree search in a
//! PCA-projected feature space ([`kdtree`]). Supporting machinery covers
//! bit-packed voxel grids with NRRD / raw+json I/O ([`grid`], [`io`]),
//! resampling and morphology ([`resample`], [`morph`]), patch tiling
//! ([`tile`]), marching-cubes triangulation and mesh export ([`surface`]),
//! and DSC / Hausdorff evaluation ([`metrics`]).

pub mod encode;
pub mod error;
pub mod grid;
pub mod io;
pub mod kdtree;
pub mod metrics;
pub mod morph;
pub mod phantom;
pub mod pipeline;
pub mod resample;
pub mod surface;
mod surface_tables;
pub mod synth;
pub mod tile;

pub use encode::{
    active_voxels, encode_neighborhood, hamming, hamming_ball, ActiveSet, BitKey, Coord, NbhdSize,
};
pub use error::{Error, Result};
pub use grid::{subtract, VoxelGrid};
pub use io::{load_volume, save_volume, VolumeFormat};
pub use kdtree::{
    build_kd_index, kdtree_build, kdtree_query, linear_nns, pca_fit, pca_project, KdIndex, KdTree,
    PcaModel,
};
pub use metrics::{dsc, hausdorff, MetricReport};
pub use morph::{denoise, dilate_cube, erode_cube, KeepRule};
pub use phantom::{make_phantom, PhantomSpec};
pub use pipeline::{run_pipeline, Backend, PipelineConfig};
pub use resample::{downsample2x, pad_to_pow2, upsample_interp, InterpOrder, Pyramid, SmoothMode};
pub use surface::{export_mesh, marching_cubes, terracing_stats, Mesh, MeshFormat, StepHistogram};
pub use synth::{
    build_index, lookup, partition, synthesize_hierarchical, synthesize_level, FallbackPolicy,
    HashIndex, IndexStats, MatchResult, ParallelMode, SynthesisConfig,
};
pub use tile::{stitch_volume, tile_volume, PatchLayout};
