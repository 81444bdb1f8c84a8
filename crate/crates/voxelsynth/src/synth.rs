//! Hash-indexed approximate nearest-neighbor search and hierarchical
//! synthesis.
//!
//! The index maps bit-encoded neighborhood keys of a template level to the
//! template coordinates that produced them (`s_ta`), plus every key within a
//! fixed Hamming radius of an actual key (`s_tn`), precomputed so queries
//! resolve in at most two O(1) map probes. Lookup follows the two-branch
//! order strictly: exact key first, ball neighbor second, configurable
//! fallback last.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::encode::{active_voxels, hamming_ball, BitKey, Coord, NbhdSize};
use crate::error::{Error, Result};
use crate::grid::VoxelGrid;
use crate::resample::{upsample_interp, InterpOrder, Pyramid, SmoothMode};

/// What to assign when a query key misses both maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FallbackPolicy {
    /// Seeded per-voxel random bit.
    Random,
    /// Keep the coarse voxel's value unchanged.
    KeepCoarse,
    /// Occupied iff more than half the key bits are set.
    Majority,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParallelMode {
    Serial,
    /// One index shared by P workers; bit-identical to serial.
    SharedIndex(usize),
    /// The volume is split into P subvolumes, each with its own index built
    /// from the matching template subvolume. Deterministic, but may differ
    /// from the serial result because the per-patch indexes differ.
    PartitionedIndex(usize),
}

impl ParallelMode {
    fn threads(&self) -> usize {
        match *self {
            ParallelMode::Serial => 1,
            ParallelMode::SharedIndex(p) | ParallelMode::PartitionedIndex(p) => p,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisConfig {
    pub nbhd: NbhdSize,
    pub radius: u32,
    pub fallback: FallbackPolicy,
    pub levels: u32,
    pub parallel: ParallelMode,
    pub seed: u64,
    pub pyramid_smooth: SmoothMode,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        SynthesisConfig {
            nbhd: NbhdSize::Three,
            radius: 2,
            fallback: FallbackPolicy::Random,
            levels: 2,
            parallel: ParallelMode::Serial,
            seed: 0,
            pyramid_smooth: SmoothMode::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchSource {
    Actual,
    Neighbor,
    Fallback,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MatchResult {
    /// Exact key hit; coordinates of every template voxel with this key.
    Actual { coords: Vec<Coord> },
    /// Ball-neighbor hit; union of the source keys' coordinates.
    Neighbor { coords: Vec<Coord> },
    /// Both maps missed; the fallback policy assigned a value.
    Fallback { value: bool },
}

impl MatchResult {
    pub fn source(&self) -> MatchSource {
        match self {
            MatchResult::Actual { .. } => MatchSource::Actual,
            MatchResult::Neighbor { .. } => MatchSource::Neighbor,
            MatchResult::Fallback { .. } => MatchSource::Fallback,
        }
    }
}

/// Per-voxel query context for the fallback branch.
#[derive(Debug, Clone, Copy)]
pub struct QueryCtx {
    pub voxel_linear: u64,
    pub coarse_value: bool,
}

const SPILL_FLAG: u32 = 1 << 31;

/// Per-chunk query output: (voxel linear index, value) writes plus hit
/// counters (actual, neighbor, fallback).
type ChunkWrites = (Vec<(u64, bool)>, [u64; 3]);

/// Two-tier Hamming hash index over a template level's active voxels.
pub struct HashIndex {
    width: u16,
    radius: u32,
    source_dims: (usize, usize, usize),
    /// actual key -> entry id
    actual: HashMap<BitKey, u32>,
    /// entry id -> coordinates sharing that key, raster-sorted
    entries: Vec<Vec<Coord>>,
    /// entry id -> its key, in discovery order (for deterministic rebuild)
    entry_keys: Vec<BitKey>,
    /// ball-neighbor key -> source entry id, or SPILL_FLAG | spill index
    neighbor: HashMap<BitKey, u32>,
    spill: Vec<Vec<u32>>,
}

impl HashIndex {
    pub fn width(&self) -> usize {
        self.width as usize
    }

    pub fn radius(&self) -> u32 {
        self.radius
    }

    pub fn source_dims(&self) -> (usize, usize, usize) {
        self.source_dims
    }

    /// Distinct actual template keys (|S_ta|).
    pub fn keys_actual(&self) -> usize {
        self.actual.len()
    }

    /// Distinct precomputed ball-neighbor keys (|S_tn|).
    pub fn keys_neighbor(&self) -> usize {
        self.neighbor.len()
    }

    /// Bytes per key when bit-packed into whole machine words.
    pub fn key_bytes(&self) -> usize {
        self.width().div_ceil(64) * 8
    }

    /// Bit-packed size of all stored keys (S_ta and S_tn).
    pub fn bytes_keys_packed(&self) -> u64 {
        ((self.actual.len() + self.neighbor.len()) * self.key_bytes()) as u64
    }

    /// Bit-packed size of the actual keys only.
    pub fn bytes_actual_keys_packed(&self) -> u64 {
        (self.actual.len() * self.key_bytes()) as u64
    }

    pub fn is_empty(&self) -> bool {
        self.actual.is_empty()
    }

    /// Coordinates stored under an actual key, if present.
    pub fn actual_coords(&self, key: &BitKey) -> Option<&[Coord]> {
        self.actual
            .get(key)
            .map(|&id| self.entries[id as usize].as_slice())
    }

    /// Actual keys with their coordinate lists, in discovery (raster) order.
    pub fn actual_entries(&self) -> impl Iterator<Item = (&BitKey, &[Coord])> + '_ {
        self.entry_keys
            .iter()
            .zip(self.entries.iter().map(|v| v.as_slice()))
    }

    fn neighbor_coords(&self, slot: u32) -> Vec<Coord> {
        if slot & SPILL_FLAG == 0 {
            return self.entries[slot as usize].clone();
        }
        let ids = &self.spill[(slot & !SPILL_FLAG) as usize];
        let mut coords: Vec<Coord> = ids
            .iter()
            .flat_map(|&id| self.entries[id as usize].iter().copied())
            .collect();
        coords.sort_unstable_by_key(|&(x, y, z)| (z, y, x));
        coords
    }

    /// Hot-path lookup: branch source plus the lexicographically smallest
    /// matched coordinate, without allocating.
    #[inline]
    pub(crate) fn lookup_first(&self, key: &BitKey) -> Option<(MatchSource, Coord)> {
        if let Some(&id) = self.actual.get(key) {
            return Some((MatchSource::Actual, self.entries[id as usize][0]));
        }
        if let Some(&slot) = self.neighbor.get(key) {
            let c = if slot & SPILL_FLAG == 0 {
                self.entries[slot as usize][0]
            } else {
                self.spill[(slot & !SPILL_FLAG) as usize]
                    .iter()
                    .map(|&id| self.entries[id as usize][0])
                    .min_by_key(|&(x, y, z)| (z, y, x))
                    .expect("spill lists are non-empty")
            };
            return Some((MatchSource::Neighbor, c));
        }
        None
    }
}

/// Build the two-tier index from a template level: one `s_ta` entry per
/// distinct active-voxel key (all coordinates sharing it, raster-sorted), and
/// every Hamming-ball neighbor of every actual key in `s_tn`, coordinate
/// lists merged where balls overlap.
pub fn build_index(template_level: &VoxelGrid, cfg: &SynthesisConfig) -> HashIndex {
    let active = active_voxels(template_level, cfg.nbhd);
    let mut actual: HashMap<BitKey, u32> = HashMap::new();
    let mut entries: Vec<Vec<Coord>> = Vec::new();
    let mut entry_keys: Vec<BitKey> = Vec::new();

    for (coord, key) in active.iter() {
        match actual.entry(*key) {
            std::collections::hash_map::Entry::Occupied(e) => {
                entries[*e.get() as usize].push(coord);
            }
            std::collections::hash_map::Entry::Vacant(v) => {
                let id = entries.len() as u32;
                v.insert(id);
                entries.push(vec![coord]);
                entry_keys.push(*key);
            }
        }
    }

    let mut neighbor: HashMap<BitKey, u32> = HashMap::new();
    let mut spill: Vec<Vec<u32>> = Vec::new();
    for (id, key) in entry_keys.iter().enumerate() {
        let id = id as u32;
        for nk in hamming_ball(key, cfg.radius as usize) {
            match neighbor.entry(nk) {
                std::collections::hash_map::Entry::Vacant(v) => {
                    v.insert(id);
                }
                std::collections::hash_map::Entry::Occupied(mut e) => {
                    let slot = *e.get();
                    if slot & SPILL_FLAG != 0 {
                        let list = &mut spill[(slot & !SPILL_FLAG) as usize];
                        if *list.last().unwrap() != id {
                            list.push(id);
                        }
                    } else if slot != id {
                        spill.push(vec![slot, id]);
                        *e.get_mut() = SPILL_FLAG | (spill.len() as u32 - 1);
                    }
                }
            }
        }
    }

    HashIndex {
        width: cfg.nbhd.width() as u16,
        radius: cfg.radius,
        source_dims: template_level.dims(),
        actual,
        entries,
        entry_keys,
        neighbor,
        spill,
    }
}

/// Per-voxel pseudo-random bit; counter-based so parallel execution order
/// cannot change draws.
#[inline]
pub(crate) fn fallback_bit(seed: u64, voxel_linear: u64) -> bool {
    let mut z = (seed ^ voxel_linear).wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^= z >> 31;
    z & 1 == 1
}

/// Algorithm-1 retrieval: `s_ta` hit, else `s_tn` hit, else fallback.
pub fn lookup(
    index: &HashIndex,
    key: &BitKey,
    cfg: &SynthesisConfig,
    ctx: &QueryCtx,
) -> Result<MatchResult> {
    if key.width() != index.width() {
        return Err(Error::WidthMismatch {
            left: key.width(),
            right: index.width(),
        });
    }
    if let Some(&id) = index.actual.get(key) {
        return Ok(MatchResult::Actual {
            coords: index.entries[id as usize].clone(),
        });
    }
    if let Some(&slot) = index.neighbor.get(key) {
        return Ok(MatchResult::Neighbor {
            coords: index.neighbor_coords(slot),
        });
    }
    let value = match cfg.fallback {
        FallbackPolicy::Random => fallback_bit(cfg.seed, ctx.voxel_linear),
        FallbackPolicy::KeepCoarse => ctx.coarse_value,
        FallbackPolicy::Majority => 2 * key.popcount() as usize > key.width(),
    };
    Ok(MatchResult::Fallback { value })
}

/// Query counters for one synthesized level; serializes to the stats JSON.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndexStats {
    /// kd backend only: bytes of the n x d float feature matrix.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bytes_features: Option<u64>,
    /// Bit-packed bytes of the distinct actual keys -- the hash index's
    /// representation of the active-set feature vectors. The precomputed
    /// ball tier adds `keys_neighbor` further keys of the same packed size.
    pub bytes_index: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    pub fallbacks: u64,
    pub hits_actual: u64,
    pub hits_neighbor: u64,
    pub keys_actual: u64,
    pub keys_neighbor: u64,
    pub queries: u64,
}

impl IndexStats {
    /// Fraction of queries resolved by `s_ta` or `s_tn`. A level with no
    /// queries (empty coarse input) counts as fully resolved.
    pub fn hit_rate(&self) -> f64 {
        if self.queries == 0 {
            1.0
        } else {
            (self.hits_actual + self.hits_neighbor) as f64 / self.queries as f64
        }
    }

    fn accumulate(&mut self, other: &IndexStats) {
        self.bytes_index += other.bytes_index;
        self.fallbacks += other.fallbacks;
        self.hits_actual += other.hits_actual;
        self.hits_neighbor += other.hits_neighbor;
        self.keys_actual += other.keys_actual;
        self.keys_neighbor += other.keys_neighbor;
        self.queries += other.queries;
    }
}

fn empty_stats(index: &HashIndex) -> IndexStats {
    IndexStats {
        bytes_features: None,
        bytes_index: index.bytes_actual_keys_packed(),
        d: None,
        fallbacks: 0,
        hits_actual: 0,
        hits_neighbor: 0,
        keys_actual: index.keys_actual() as u64,
        keys_neighbor: index.keys_neighbor() as u64,
        queries: 0,
    }
}

/// Replace every active voxel of `coarse_up` by the template occupancy at
/// its best-matching coordinate (double-buffered: all reads from the input,
/// all writes to a fresh output). Non-active voxels copy through unchanged.
///
/// `ParallelMode::Serial` runs single-threaded; both parallel modes run the
/// queries over `P` workers against the given shared index and are
/// bit-identical to serial (per-patch indexes are the business of
/// [`synthesize_level_partitioned`]).
pub fn synthesize_level(
    coarse_up: &VoxelGrid,
    template_level: &VoxelGrid,
    index: &HashIndex,
    cfg: &SynthesisConfig,
) -> Result<(VoxelGrid, IndexStats)> {
    coarse_up.check_same_dims(template_level)?;
    if index.width() != cfg.nbhd.width() {
        return Err(Error::WidthMismatch {
            left: cfg.nbhd.width(),
            right: index.width(),
        });
    }
    if index.source_dims() != template_level.dims() {
        return Err(Error::validation(format!(
            "index was built from dims {:?}, template level has {:?}",
            index.source_dims(),
            template_level.dims()
        )));
    }
    let threads = cfg.parallel.threads();
    if threads == 0 {
        return Err(Error::validation("parallel worker count must be >= 1"));
    }

    let active = active_voxels(coarse_up, cfg.nbhd);
    let mut out = coarse_up.clone();
    let mut stats = empty_stats(index);
    stats.queries = active.len() as u64;

    let process = |coords: &[Coord], keys: &[BitKey]| -> ChunkWrites {
        let mut writes = Vec::with_capacity(coords.len());
        let mut counts = [0u64; 3]; // actual, neighbor, fallback
        for (&(x, y, z), key) in coords.iter().zip(keys) {
            let linear = coarse_up.linear(x as usize, y as usize, z as usize) as u64;
            let value = match index.lookup_first(key) {
                Some((MatchSource::Actual, c)) => {
                    counts[0] += 1;
                    template_level.get(c.0 as usize, c.1 as usize, c.2 as usize)
                }
                Some((MatchSource::Neighbor, c)) => {
                    counts[1] += 1;
                    template_level.get(c.0 as usize, c.1 as usize, c.2 as usize)
                }
                Some((MatchSource::Fallback, _)) => unreachable!(),
                None => {
                    counts[2] += 1;
                    match cfg.fallback {
                        FallbackPolicy::Random => fallback_bit(cfg.seed, linear),
                        FallbackPolicy::KeepCoarse => coarse_up.get_linear(linear as usize),
                        FallbackPolicy::Majority => 2 * key.popcount() as usize > key.width(),
                    }
                }
            };
            writes.push((linear, value));
        }
        (writes, counts)
    };

    let results: Vec<ChunkWrites> = if threads == 1 {
        vec![process(&active.coords, &active.keys)]
    } else {
        let chunk = active.len().div_ceil(threads).max(1);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::validation(format!("thread pool: {e}")))?;
        pool.install(|| {
            active
                .coords
                .par_chunks(chunk)
                .zip(active.keys.par_chunks(chunk))
                .map(|(c, k)| process(c, k))
                .collect()
        })
    };

    for (writes, counts) in results {
        stats.hits_actual += counts[0];
        stats.hits_neighbor += counts[1];
        stats.fallbacks += counts[2];
        for (linear, value) in writes {
            out.set_linear(linear as usize, value);
        }
    }
    Ok((out, stats))
}

/// One subvolume of an axis-aligned binary partition. `grid` carries halo
/// skirts so every core neighborhood is complete; only the core is written
/// back on reassembly.
#[derive(Debug, Clone)]
pub struct SubVolume {
    pub grid: VoxelGrid,
    pub core_offset: (usize, usize, usize),
    pub core_dims: (usize, usize, usize),
    /// Core origin in the subvolume's local coordinates.
    pub local_core: (usize, usize, usize),
}

/// Split into P subvolumes (P in {1,2,4,8}: binary splits along x, then y,
/// then z) with `halo` voxels of read-only overlap.
pub fn partition(grid: &VoxelGrid, p: usize, halo: usize) -> Result<Vec<SubVolume>> {
    let splits: (usize, usize, usize) = match p {
        1 => (1, 1, 1),
        2 => (2, 1, 1),
        4 => (2, 2, 1),
        8 => (2, 2, 2),
        other => {
            return Err(Error::validation(format!(
                "unsupported partition count {other}; use 1, 2, 4 or 8"
            )));
        }
    };
    let (nx, ny, nz) = grid.dims();
    let halves = |n: usize, s: usize| -> Vec<(usize, usize)> {
        if s == 1 {
            vec![(0, n)]
        } else {
            vec![(0, n / 2), (n / 2, n - n / 2)]
        }
    };
    let mut out = Vec::with_capacity(p);
    for (z0, zn) in halves(nz, splits.2) {
        for (y0, yn) in halves(ny, splits.1) {
            for (x0, xn) in halves(nx, splits.0) {
                if xn < 2 * halo || yn < 2 * halo || zn < 2 * halo {
                    return Err(Error::validation(format!(
                        "subvolume {xn}x{yn}x{zn} smaller than 2*halo ({halo})"
                    )));
                }
                let lo = (
                    x0.saturating_sub(halo),
                    y0.saturating_sub(halo),
                    z0.saturating_sub(halo),
                );
                let hi = (
                    (x0 + xn + halo).min(nx),
                    (y0 + yn + halo).min(ny),
                    (z0 + zn + halo).min(nz),
                );
                let sub = grid.extract_block(lo, (hi.0 - lo.0, hi.1 - lo.1, hi.2 - lo.2))?;
                out.push(SubVolume {
                    grid: sub,
                    core_offset: (x0, y0, z0),
                    core_dims: (xn, yn, zn),
                    local_core: (x0 - lo.0, y0 - lo.1, z0 - lo.2),
                });
            }
        }
    }
    Ok(out)
}

/// Fig-4(c) data parallelism: partition both volumes into P pieces, build a
/// separate index per template piece, synthesize pieces concurrently, and
/// reassemble the cores. Deterministic for a fixed seed, but not guaranteed
/// equal to the serial result (the per-patch indexes see less context).
pub fn synthesize_level_partitioned(
    coarse_up: &VoxelGrid,
    template_level: &VoxelGrid,
    cfg: &SynthesisConfig,
    p: usize,
) -> Result<(VoxelGrid, IndexStats)> {
    coarse_up.check_same_dims(template_level)?;
    let halo = cfg.nbhd.radius() as usize;
    let coarse_parts = partition(coarse_up, p, halo)?;
    let template_parts = partition(template_level, p, halo)?;

    let serial_cfg = SynthesisConfig {
        parallel: ParallelMode::Serial,
        ..cfg.clone()
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(p)
        .build()
        .map_err(|e| Error::validation(format!("thread pool: {e}")))?;
    let piece_results: Vec<Result<(VoxelGrid, IndexStats)>> = pool.install(|| {
        coarse_parts
            .par_iter()
            .zip(template_parts.par_iter())
            .map(|(cp, tp)| {
                let index = build_index(&tp.grid, &serial_cfg);
                synthesize_level(&cp.grid, &tp.grid, &index, &serial_cfg)
            })
            .collect()
    });

    let mut out = coarse_up.clone();
    let mut total: Option<IndexStats> = None;
    for (piece, part) in piece_results.into_iter().zip(&coarse_parts) {
        let (grid, stats) = piece?;
        let core = grid.extract_block(part.local_core, part.core_dims)?;
        out.write_block(part.core_offset, &core)?;
        match &mut total {
            Some(t) => t.accumulate(&stats),
            None => total = Some(stats),
        }
    }
    Ok((out, total.expect("partition yields at least one piece")))
}

/// The full hierarchical run: output volume plus per-level query stats.
#[derive(Debug)]
pub struct SynthesisRun {
    pub output: VoxelGrid,
    pub level_stats: Vec<IndexStats>,
}

/// Build the template pyramid, then refine level by level: upsample the
/// previous result 2x (trilinear, re-thresholded) and synthesize it against
/// the next template level with a fresh index.
pub fn synthesize_hierarchical(
    coarse_l0: &VoxelGrid,
    template_full: &VoxelGrid,
    cfg: &SynthesisConfig,
) -> Result<SynthesisRun> {
    if cfg.levels == 0 {
        return Err(Error::validation("levels must be >= 1"));
    }
    let (cx, cy, cz) = coarse_l0.dims();
    let m = 1usize << cfg.levels;
    let expect = (cx * m, cy * m, cz * m);
    if template_full.dims() != expect {
        return Err(Error::validation(format!(
            "dimension chain mismatch: coarse {:?} x 2^{} = {:?}, template is {:?}",
            coarse_l0.dims(),
            cfg.levels,
            expect,
            template_full.dims()
        )));
    }
    let pyramid = Pyramid::build(template_full, cfg.levels, cfg.pyramid_smooth)?;

    let mut result = coarse_l0.clone();
    let mut level_stats = Vec::with_capacity(cfg.levels as usize);
    for level in 1..=cfg.levels as usize {
        let up = upsample_interp(&result, 2, InterpOrder::Trilinear)?;
        let template_level = &pyramid.levels[level];
        let (next, stats) = match cfg.parallel {
            ParallelMode::PartitionedIndex(p) => {
                synthesize_level_partitioned(&up, template_level, cfg, p)?
            }
            _ => {
                let index = build_index(template_level, cfg);
                synthesize_level(&up, template_level, &index, cfg)?
            }
        };
        result = next;
        level_stats.push(stats);
    }
    Ok(SynthesisRun {
        output: result,
        level_stats,
    })
}
