//! Isosurface triangulation, mesh export, and the terracing statistic.
//!
//! Marching cubes runs the full 256-entry table over the binary mask with an
//! implicit 1-voxel zero border, so surfaces of boundary-touching objects
//! close. Vertices sit at cube-edge midpoints (linear interpolation is
//! degenerate on binary data) and are deduplicated by global edge identity,
//! which makes every mesh watertight: each undirected triangle edge is
//! shared by exactly two triangles.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::VoxelGrid;
use crate::surface_tables::{EDGE_CORNERS, TRI_TABLE};

/// Indexed triangle surface in physical (mm) coordinates,
/// counter-clockwise winding viewed from outside.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<[f64; 3]>,
    pub triangles: Vec<[u32; 3]>,
}

impl Mesh {
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    /// Total surface area in mm^2.
    pub fn area(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let [a, b, c] = self.triangle_points(t);
                let u = sub(b, a);
                let v = sub(c, a);
                norm(cross(u, v)) / 2.0
            })
            .sum()
    }

    /// Signed enclosed volume in mm^3; positive for consistently
    /// outward-oriented closed surfaces.
    pub fn signed_volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let [a, b, c] = self.triangle_points(t);
                dot(a, cross(b, c)) / 6.0
            })
            .sum()
    }

    /// Multiset of undirected edges with occurrence counts.
    pub fn edge_multiplicities(&self) -> HashMap<(u32, u32), u32> {
        let mut edges = HashMap::new();
        for t in &self.triangles {
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                let key = (a.min(b), a.max(b));
                *edges.entry(key).or_insert(0) += 1;
            }
        }
        edges
    }

    /// True when every undirected edge is shared by exactly two triangles.
    pub fn is_watertight(&self) -> bool {
        !self.is_empty() && self.edge_multiplicities().values().all(|&m| m == 2)
    }

    fn triangle_points(&self, t: &[u32; 3]) -> [[f64; 3]; 3] {
        [
            self.vertices[t[0] as usize],
            self.vertices[t[1] as usize],
            self.vertices[t[2] as usize],
        ]
    }
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

const CORNER_OFFSETS: [[i64; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [1, 1, 1],
    [0, 1, 1],
];

/// Extract the isosurface of a binary mask. `iso` must lie strictly between
/// 0 and 1; on binary data every crossing lands at an edge midpoint, so the
/// exact value only selects which voxels count as inside -- 0.5 is the
/// convention used throughout.
pub fn marching_cubes(grid: &VoxelGrid, iso: f64) -> Result<Mesh> {
    if !(0.0 < iso && iso < 1.0) {
        return Err(Error::validation(format!(
            "iso level must be in (0, 1) for binary masks, got {iso}"
        )));
    }
    let (nx, ny, nz) = grid.dims();
    let (sx, sy, sz) = grid.spacing();

    let mut vertices: Vec<[f64; 3]> = Vec::new();
    let mut triangles: Vec<[u32; 3]> = Vec::new();
    // global edge identity -> vertex id; key = (lattice point, axis)
    let mut edge_vertex: HashMap<(i64, i64, i64, u8), u32> = HashMap::new();

    // cube anchors range over the padded lattice [-1, n-1]
    for cz in -1..nz as i64 {
        for cy in -1..ny as i64 {
            for cx in -1..nx as i64 {
                let mut index = 0usize;
                for (i, off) in CORNER_OFFSETS.iter().enumerate() {
                    // bit set for corners OUTSIDE the solid, matching the
                    // table's orientation convention
                    if !grid.get_padded(cx + off[0], cy + off[1], cz + off[2]) {
                        index |= 1 << i;
                    }
                }
                if index == 0 || index == 255 {
                    continue;
                }
                let row = &TRI_TABLE[index];
                let mut e = 0;
                while row[e] >= 0 {
                    let mut tri = [0u32; 3];
                    for (slot, &edge_id) in tri.iter_mut().zip(&row[e..e + 3]) {
                        let [a, b] = EDGE_CORNERS[edge_id as usize];
                        let pa = CORNER_OFFSETS[a];
                        let pb = CORNER_OFFSETS[b];
                        // canonical edge key: lower endpoint + axis
                        let lo = (
                            cx + pa[0].min(pb[0]),
                            cy + pa[1].min(pb[1]),
                            cz + pa[2].min(pb[2]),
                        );
                        let axis = if pa[0] != pb[0] {
                            0u8
                        } else if pa[1] != pb[1] {
                            1
                        } else {
                            2
                        };
                        let key = (lo.0, lo.1, lo.2, axis);
                        let id = *edge_vertex.entry(key).or_insert_with(|| {
                            let mid = [
                                (lo.0 as f64 + if axis == 0 { 0.5 } else { 0.0 }) * sx,
                                (lo.1 as f64 + if axis == 1 { 0.5 } else { 0.0 }) * sy,
                                (lo.2 as f64 + if axis == 2 { 0.5 } else { 0.0 }) * sz,
                            ];
                            vertices.push(mid);
                            vertices.len() as u32 - 1
                        });
                        *slot = id;
                    }
                    triangles.push(tri);
                    e += 3;
                }
            }
        }
    }
    Ok(Mesh {
        vertices,
        triangles,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    StlBinary,
    Obj,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Option<MeshFormat> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("stl") => Some(MeshFormat::StlBinary),
            Some("obj") => Some(MeshFormat::Obj),
            _ => None,
        }
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Write a mesh. Binary STL stores 50-byte little-endian triangle records
/// with normals recomputed from the winding; it flattens shared vertices
/// into a triangle soup. OBJ keeps indexed topology (1-based) and
/// round-trips vertices exactly via shortest-round-trip decimal floats.
pub fn export_mesh(mesh: &Mesh, path: &Path, format: MeshFormat) -> Result<()> {
    match format {
        MeshFormat::StlBinary => {
            let mut header = [0u8; 80];
            let tag = b"binary STL; units mm";
            header[..tag.len()].copy_from_slice(tag);
            let mut out = Vec::with_capacity(84 + 50 * mesh.triangles.len());
            out.extend_from_slice(&header);
            out.extend_from_slice(&(mesh.triangles.len() as u32).to_le_bytes());
            for t in &mesh.triangles {
                let [a, b, c] = [
                    mesh.vertices[t[0] as usize],
                    mesh.vertices[t[1] as usize],
                    mesh.vertices[t[2] as usize],
                ];
                let n = cross(sub(b, a), sub(c, a));
                let len = norm(n);
                let n = if len > 0.0 {
                    [n[0] / len, n[1] / len, n[2] / len]
                } else {
                    [0.0, 0.0, 0.0]
                };
                for v in [n, a, b, c] {
                    for x in v {
                        out.extend_from_slice(&(x as f32).to_le_bytes());
                    }
                }
                out.extend_from_slice(&0u16.to_le_bytes()); // attribute bytes
            }
            fs::write(path, out).map_err(|e| io_err(path, e))
        }
        MeshFormat::Obj => {
            let mut out = String::new();
            for v in &mesh.vertices {
                out.push_str(&format!("v {} {} {}\n", v[0], v[1], v[2]));
            }
            for t in &mesh.triangles {
                out.push_str(&format!("f {} {} {}\n", t[0] + 1, t[1] + 1, t[2] + 1));
            }
            fs::write(path, out).map_err(|e| io_err(path, e))
        }
    }
}

/// Read back a binary STL as a triangle soup (vertices are not merged).
pub fn import_stl(path: &Path) -> Result<Mesh> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    if bytes.len() < 84 {
        return Err(Error::MalformedHeader {
            path: path.to_path_buf(),
            reason: "binary STL shorter than 84 bytes".into(),
        });
    }
    let count = u32::from_le_bytes(bytes[80..84].try_into().unwrap()) as usize;
    if bytes.len() != 84 + 50 * count {
        return Err(Error::MalformedHeader {
            path: path.to_path_buf(),
            reason: format!("expected {count} triangle records"),
        });
    }
    let mut mesh = Mesh {
        vertices: Vec::with_capacity(3 * count),
        triangles: Vec::with_capacity(count),
    };
    for i in 0..count {
        let rec = &bytes[84 + 50 * i..84 + 50 * (i + 1)];
        let mut tri = [0u32; 3];
        for (v, slot) in tri.iter_mut().enumerate() {
            let base = 12 + 12 * v; // skip the normal
            let mut p = [0.0f64; 3];
            for (k, x) in p.iter_mut().enumerate() {
                *x = f32::from_le_bytes(rec[base + 4 * k..base + 4 * k + 4].try_into().unwrap())
                    as f64;
            }
            mesh.vertices.push(p);
            *slot = mesh.vertices.len() as u32 - 1;
        }
        mesh.triangles.push(tri);
    }
    Ok(mesh)
}

/// Read back an OBJ written by `export_mesh` (v/f records only).
pub fn import_obj(path: &Path) -> Result<Mesh> {
    let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut mesh = Mesh {
        vertices: Vec::new(),
        triangles: Vec::new(),
    };
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| io_err(path, e))?;
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("v") => {
                let mut p = [0.0f64; 3];
                for x in p.iter_mut() {
                    *x = parts.next().and_then(|s| s.parse().ok()).ok_or_else(|| {
                        Error::MalformedHeader {
                            path: path.to_path_buf(),
                            reason: format!("bad vertex line '{line}'"),
                        }
                    })?;
                }
                mesh.vertices.push(p);
            }
            Some("f") => {
                let mut t = [0u32; 3];
                for slot in t.iter_mut() {
                    let idx: u32 = parts
                        .next()
                        .and_then(|s| s.split('/').next())
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| Error::MalformedHeader {
                            path: path.to_path_buf(),
                            reason: format!("bad face line '{line}'"),
                        })?;
                    *slot = idx - 1;
                }
                mesh.triangles.push(t);
            }
            _ => {}
        }
    }
    Ok(mesh)
}

/// Step-size histogram of outer-surface height profiles, the measurable
/// counterpart of terracing artifacts: nearest-neighbor upsampling produces
/// steps of the scale factor, smooth surfaces steps of one voxel.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepHistogram {
    /// per scan axis: |Δheight| in voxels -> occurrence count (zero steps
    /// are excluded)
    pub counts: [BTreeMap<u32, u64>; 3],
    /// sign changes between consecutive nonzero height deltas along scan
    /// lines
    pub derivative_sign_flips: u64,
}

impl StepHistogram {
    pub fn total_steps(&self) -> u64 {
        self.counts.iter().flat_map(|m| m.values()).sum()
    }

    pub fn mean_step(&self) -> f64 {
        let total = self.total_steps();
        if total == 0 {
            return 0.0;
        }
        let weighted: u64 = self
            .counts
            .iter()
            .flat_map(|m| m.iter())
            .map(|(&step, &count)| step as u64 * count)
            .sum();
        weighted as f64 / total as f64
    }

    pub fn is_empty(&self) -> bool {
        self.total_steps() == 0
    }
}

/// Height of the outermost occupied voxel along `axis` in direction `sense`
/// for every perpendicular column; `None` where the column is empty.
fn height_map(
    grid: &VoxelGrid,
    axis: usize,
    outward_max: bool,
) -> (Vec<Option<i64>>, usize, usize) {
    let dims = [grid.dims().0, grid.dims().1, grid.dims().2];
    let (p1, p2) = match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let (n1, n2, na) = (dims[p1], dims[p2], dims[axis]);
    let mut heights = vec![None; n1 * n2];
    for c2 in 0..n2 {
        for c1 in 0..n1 {
            let mut coord = [0usize; 3];
            coord[p1] = c1;
            coord[p2] = c2;
            let mut best = None;
            for a in 0..na {
                coord[axis] = a;
                if grid.get(coord[0], coord[1], coord[2]) {
                    best = Some(if outward_max {
                        a as i64
                    } else {
                        match best {
                            None => a as i64,
                            Some(b) => b,
                        }
                    });
                    if !outward_max {
                        break;
                    }
                }
            }
            if !outward_max && best.is_none() {
                heights[c2 * n1 + c1] = None;
                continue;
            }
            heights[c2 * n1 + c1] = best;
        }
    }
    (heights, n1, n2)
}

/// Accumulate steps and sign flips along one family of scan lines.
fn scan_lines(
    heights: &[Option<i64>],
    n1: usize,
    n2: usize,
    along_first: bool,
    counts: &mut BTreeMap<u32, u64>,
    flips: &mut u64,
) {
    let (lines, len) = if along_first { (n2, n1) } else { (n1, n2) };
    for line in 0..lines {
        let mut prev: Option<i64> = None;
        let mut prev_sign: Option<i64> = None;
        for i in 0..len {
            let idx = if along_first {
                line * n1 + i
            } else {
                i * n1 + line
            };
            match heights[idx] {
                Some(h) => {
                    if let Some(p) = prev {
                        let delta = h - p;
                        if delta != 0 {
                            *counts.entry(delta.unsigned_abs() as u32).or_insert(0) += 1;
                            let sign = delta.signum();
                            if let Some(ps) = prev_sign {
                                if sign != ps {
                                    *flips += 1;
                                }
                            }
                            prev_sign = Some(sign);
                        }
                    }
                    prev = Some(h);
                }
                None => {
                    // empty column breaks the run
                    prev = None;
                    prev_sign = None;
                }
            }
        }
    }
}

/// Measure surface steps: for each axis and each outward direction (toward
/// +axis and toward -axis), build the outer-surface height profile over
/// perpendicular columns and record |Δheight| between adjacent non-empty
/// columns, plus sign flips of consecutive nonzero deltas along scan lines.
pub fn terracing_stats(grid: &VoxelGrid) -> StepHistogram {
    let mut hist = StepHistogram::default();
    for axis in 0..3 {
        for outward_max in [true, false] {
            let (heights, n1, n2) = height_map(grid, axis, outward_max);
            scan_lines(
                &heights,
                n1,
                n2,
                true,
                &mut hist.counts[axis],
                &mut hist.derivative_sign_flips,
            );
            scan_lines(
                &heights,
                n1,
                n2,
                false,
                &mut hist.counts[axis],
                &mut hist.derivative_sign_flips,
            );
        }
    }
    hist
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{make_phantom, PhantomSpec};

    fn grid(dims: (usize, usize, usize)) -> VoxelGrid {
        VoxelGrid::new(dims, (1.0, 1.0, 1.0)).unwrap()
    }

    #[test]
    fn empty_grid_gives_empty_mesh() {
        let mesh = marching_cubes(&grid((8, 8, 8)), 0.5).unwrap();
        assert!(mesh.vertices.is_empty());
        assert!(mesh.triangles.is_empty());
    }

    #[test]
    fn single_voxel_gives_closed_octahedron() {
        let mut g = grid((5, 5, 5));
        g.set(2, 2, 2, true);
        let mesh = marching_cubes(&g, 0.5).unwrap();
        assert_eq!(mesh.triangles.len(), 8);
        assert_eq!(mesh.vertices.len(), 6);
        assert!(mesh.is_watertight());
        assert!(
            mesh.signed_volume() > 0.0,
            "volume {}",
            mesh.signed_volume()
        );
    }

    #[test]
    fn boundary_voxel_still_closes() {
        let mut g = grid((3, 3, 3));
        g.set(0, 0, 0, true);
        let mesh = marching_cubes(&g, 0.5).unwrap();
        assert!(mesh.is_watertight());
    }

    #[test]
    fn all_256_two_cube_configurations_are_watertight() {
        // exhaustive corner patterns of a 2x2x2 block; padding closes every
        // surface, so any crack in the table shows up as a bad multiplicity
        for pattern in 0u32..256 {
            let mut g = grid((2, 2, 2));
            for bit in 0..8 {
                if pattern >> bit & 1 == 1 {
                    g.set(bit & 1, (bit >> 1) & 1, (bit >> 2) & 1, true);
                }
            }
            let mesh = marching_cubes(&g, 0.5).unwrap();
            if pattern == 0 {
                assert!(mesh.is_empty());
            } else {
                assert!(mesh.is_watertight(), "pattern {pattern:#010b}");
                assert!(mesh.signed_volume() > 0.0, "pattern {pattern:#010b}");
            }
        }
    }

    #[test]
    fn vertices_sit_on_half_integer_edge_midpoints() {
        let mut g = grid((6, 6, 6));
        g.set(2, 2, 2, true);
        g.set(3, 2, 2, true);
        g.set(3, 3, 2, true);
        let mesh = marching_cubes(&g, 0.5).unwrap();
        for v in &mesh.vertices {
            let half_integers = v
                .iter()
                .filter(|&&x| ((x * 2.0).round() as i64) % 2 != 0)
                .count();
            assert_eq!(half_integers, 1, "vertex {v:?}");
        }
    }

    #[test]
    fn no_degenerate_triangles() {
        let g = make_phantom(
            &PhantomSpec::SphereShell {
                r_in: 0.0,
                r_out: 6.0,
                perturb_rate: 0.0,
            },
            (16, 16, 16),
            (1.0, 1.0, 1.0),
            0,
        )
        .unwrap();
        let mesh = marching_cubes(&g, 0.5).unwrap();
        for t in &mesh.triangles {
            let [a, b, c] = [
                mesh.vertices[t[0] as usize],
                mesh.vertices[t[1] as usize],
                mesh.vertices[t[2] as usize],
            ];
            let area = norm(cross(sub(b, a), sub(c, a))) / 2.0;
            assert!(area > 1e-12, "triangle {t:?} area {area}");
        }
    }

    #[test]
    fn sphere_mesh_area_and_volume_near_analytic() {
        let g = make_phantom(
            &PhantomSpec::SphereShell {
                r_in: 0.0,
                r_out: 6.0,
                perturb_rate: 0.0,
            },
            (16, 16, 16),
            (1.0, 1.0, 1.0),
            0,
        )
        .unwrap();
        let mesh = marching_cubes(&g, 0.5).unwrap();
        assert!(mesh.is_watertight());
        let analytic_area = 4.0 * std::f64::consts::PI * 36.0;
        let analytic_volume = 4.0 / 3.0 * std::f64::consts::PI * 216.0;
        let area = mesh.area();
        let volume = mesh.signed_volume();
        assert!(
            (area - analytic_area).abs() / analytic_area < 0.15,
            "area {area} vs {analytic_area}"
        );
        assert!(
            (volume - analytic_volume).abs() / analytic_volume < 0.15,
            "volume {volume} vs {analytic_volume}"
        );
    }

    #[test]
    fn spacing_scales_mesh_coordinates() {
        let mut g = VoxelGrid::new((4, 4, 4), (2.0, 1.0, 0.5)).unwrap();
        g.set(1, 1, 1, true);
        let mesh = marching_cubes(&g, 0.5).unwrap();
        let max_x = mesh.vertices.iter().map(|v| v[0]).fold(f64::MIN, f64::max);
        let min_x = mesh.vertices.iter().map(|v| v[0]).fold(f64::MAX, f64::min);
        assert_eq!(max_x - min_x, 2.0); // one voxel step in x = 2mm
    }

    #[test]
    fn stl_export_empty_and_single_triangle_normal() {
        let dir = tempfile::tempdir().unwrap();
        let empty = Mesh {
            vertices: vec![],
            triangles: vec![],
        };
        let p = dir.path().join("empty.stl");
        export_mesh(&empty, &p, MeshFormat::StlBinary).unwrap();
        let bytes = fs::read(&p).unwrap();
        assert_eq!(bytes.len(), 84);
        assert_eq!(u32::from_le_bytes(bytes[80..84].try_into().unwrap()), 0);

        let tri = Mesh {
            vertices: vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            triangles: vec![[0, 1, 2]],
        };
        let p = dir.path().join("tri.stl");
        export_mesh(&tri, &p, MeshFormat::StlBinary).unwrap();
        let bytes = fs::read(&p).unwrap();
        assert_eq!(bytes.len(), 84 + 50);
        let n: Vec<f32> = (0..3)
            .map(|k| f32::from_le_bytes(bytes[84 + 4 * k..88 + 4 * k].try_into().unwrap()))
            .collect();
        assert_eq!(n, vec![0.0, 0.0, 1.0]); // cross product of the winding
    }

    #[test]
    fn obj_roundtrip_is_exact() {
        let g = make_phantom(
            &PhantomSpec::SphereShell {
                r_in: 0.0,
                r_out: 5.0,
                perturb_rate: 0.0,
            },
            (14, 14, 14),
            (0.7, 1.0, 1.3),
            0,
        )
        .unwrap();
        let mesh = marching_cubes(&g, 0.5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("mesh.obj");
        export_mesh(&mesh, &p, MeshFormat::Obj).unwrap();
        let back = import_obj(&p).unwrap();
        assert_eq!(back, mesh);
    }

    #[test]
    fn stl_roundtrip_preserves_triangle_soup() {
        let mesh = Mesh {
            vertices: vec![
                [0.0, 0.0, 0.0],
                [1.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
                [0.0, 0.0, 1.5],
            ],
            triangles: vec![[0, 1, 2], [0, 2, 3]],
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("mesh.stl");
        export_mesh(&mesh, &p, MeshFormat::StlBinary).unwrap();
        let back = import_stl(&p).unwrap();
        assert_eq!(back.triangles.len(), 2);
        // soup: every triangle's vertex positions match, topology is lost
        for (t_orig, t_back) in mesh.triangles.iter().zip(&back.triangles) {
            for k in 0..3 {
                let orig = mesh.vertices[t_orig[k] as usize];
                let got = back.vertices[t_back[k] as usize];
                assert_eq!(orig.map(|x| x as f32), got.map(|x| x as f32));
            }
        }
    }

    #[test]
    fn terracing_flat_surface_is_stepless() {
        // full half-space: flat top, flat bottom, flat sides
        let mut g = grid((8, 8, 8));
        for z in 0..4 {
            for y in 0..8 {
                for x in 0..8 {
                    g.set(x, y, z, true);
                }
            }
        }
        let hist = terracing_stats(&g);
        assert!(hist.is_empty(), "{hist:?}");
        assert_eq!(hist.derivative_sign_flips, 0);
    }

    #[test]
    fn terracing_monotone_unit_staircase() {
        let g = make_phantom(
            &PhantomSpec::Staircase {
                base: 0,
                step: 1,
                alternating: false,
            },
            (6, 1, 8),
            (1.0, 1.0, 1.0),
            0,
        )
        .unwrap();
        let hist = terracing_stats(&g);
        assert!(!hist.is_empty());
        for (axis, counts) in hist.counts.iter().enumerate() {
            for &step in counts.keys() {
                assert_eq!(step, 1, "axis {axis}: {counts:?}");
            }
        }
        assert_eq!(hist.derivative_sign_flips, 0);
        assert_eq!(hist.mean_step(), 1.0);
    }

    #[test]
    fn terracing_alternating_staircase_steps_and_flips() {
        // columns 0..7 alternate heights 3 and 1 (step 2), starting and
        // ending high so the side scans stay flat
        let g = make_phantom(
            &PhantomSpec::Staircase {
                base: 1,
                step: 2,
                alternating: true,
            },
            (7, 1, 8),
            (1.0, 1.0, 1.0),
            0,
        )
        .unwrap();
        let hist = terracing_stats(&g);
        for counts in &hist.counts {
            for &step in counts.keys() {
                assert_eq!(step, 2, "{hist:?}");
            }
        }
        assert_eq!(hist.mean_step(), 2.0);
        // 7 columns -> 6 deltas, all alternating -> 5 flips
        assert_eq!(hist.derivative_sign_flips, 5);
    }

    #[test]
    fn terracing_ranks_nearest_upsample_worse_than_smooth() {
        let smooth = make_phantom(
            &PhantomSpec::SphereShell {
                r_in: 0.0,
                r_out: 12.0,
                perturb_rate: 0.0,
            },
            (32, 32, 32),
            (1.0, 1.0, 1.0),
            0,
        )
        .unwrap();
        let coarse =
            crate::resample::downsample2x(&smooth, crate::resample::SmoothMode::gaussian())
                .unwrap();
        let blocky =
            crate::resample::upsample_interp(&coarse, 2, crate::resample::InterpOrder::Nearest)
                .unwrap();
        let hist_smooth = terracing_stats(&smooth);
        let hist_blocky = terracing_stats(&blocky);
        assert!(
            hist_blocky.mean_step() > hist_smooth.mean_step(),
            "blocky {} vs smooth {}",
            hist_blocky.mean_step(),
            hist_smooth.mean_step()
        );
    }
}
