//! Volume file I/O: NRRD and raw+json.
//!
//! Both formats are bit-exact on round-trip, including spacing (floats are
//! written in shortest round-trip decimal form). Payloads are strictly
//! binary: any voxel value outside {0,1} is rejected with a count of the
//! offending voxels.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::VoxelGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VolumeFormat {
    Nrrd,
    RawJson,
}

impl VolumeFormat {
    /// Guess the format from a file extension.
    pub fn from_path(path: &Path) -> Option<VolumeFormat> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("nrrd") | Some("nhdr") => Some(VolumeFormat::Nrrd),
            Some("raw") | Some("json") => Some(VolumeFormat::RawJson),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NrrdEncoding {
    Raw,
    Gzip,
}

pub fn load_volume(path: &Path, format: VolumeFormat) -> Result<VoxelGrid> {
    match format {
        VolumeFormat::Nrrd => load_nrrd(path),
        VolumeFormat::RawJson => load_raw_json(path),
    }
}

pub fn save_volume(grid: &VoxelGrid, path: &Path, format: VolumeFormat) -> Result<()> {
    match format {
        VolumeFormat::Nrrd => save_nrrd(grid, path, NrrdEncoding::Gzip),
        VolumeFormat::RawJson => save_raw_json(grid, path),
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn header_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::MalformedHeader {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Binarize a byte-per-voxel payload. Values outside {0,1} are rejected with
/// the number of offending voxels.
fn binarize(
    dims: (usize, usize, usize),
    spacing: (f64, f64, f64),
    bytes: &[u8],
) -> Result<VoxelGrid> {
    let bad = bytes.iter().filter(|&&b| b > 1).count() as u64;
    if bad > 0 {
        return Err(Error::NonBinaryPayload { count: bad });
    }
    VoxelGrid::from_binary_bytes(dims, spacing, bytes)
}

// ---------------------------------------------------------------------------
// NRRD
// ---------------------------------------------------------------------------

struct NrrdHeader {
    dims: (usize, usize, usize),
    spacing: (f64, f64, f64),
    encoding: NrrdEncoding,
    data_file: Option<PathBuf>,
    payload_offset: usize,
}

fn parse_space_directions(path: &Path, value: &str) -> Result<(f64, f64, f64)> {
    // Expect three parenthesized vectors; only diagonal entries may be nonzero.
    let vecs: Vec<&str> = value.split_whitespace().collect();
    if vecs.len() != 3 {
        return Err(header_err(
            path,
            format!("space directions must list 3 vectors, got {}", vecs.len()),
        ));
    }
    let mut diag = [0.0f64; 3];
    for (axis, v) in vecs.iter().enumerate() {
        let inner = v
            .strip_prefix('(')
            .and_then(|s| s.strip_suffix(')'))
            .ok_or_else(|| header_err(path, format!("bad space direction vector '{v}'")))?;
        let comps: Vec<f64> = inner
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| header_err(path, format!("bad space direction vector '{v}'")))?;
        if comps.len() != 3 {
            return Err(header_err(
                path,
                format!("bad space direction vector '{v}'"),
            ));
        }
        for (i, &c) in comps.iter().enumerate() {
            if i == axis {
                if c <= 0.0 {
                    return Err(header_err(
                        path,
                        "space directions must be positive diagonal",
                    ));
                }
                diag[axis] = c;
            } else if c != 0.0 {
                return Err(header_err(
                    path,
                    "only diagonal space directions are supported",
                ));
            }
        }
    }
    Ok((diag[0], diag[1], diag[2]))
}

fn parse_nrrd_header(path: &Path, bytes: &[u8]) -> Result<NrrdHeader> {
    // Header is ASCII lines terminated by an empty line (attached payload
    // follows) or end of file (detached).
    let mut dims = None;
    let mut spacing = None;
    let mut encoding = None;
    let mut ty_ok = false;
    let mut dim_ok = false;
    let mut data_file = None;

    let mut pos = 0usize;
    let mut first = true;
    loop {
        let rest = &bytes[pos..];
        let line_end = rest.iter().position(|&b| b == b'\n');
        let (line_bytes, consumed) = match line_end {
            Some(e) => (&rest[..e], e + 1),
            None => (rest, rest.len()),
        };
        pos += consumed;
        let line = std::str::from_utf8(line_bytes)
            .map_err(|_| header_err(path, "non-UTF8 header line"))?
            .trim_end_matches('\r');

        if first {
            if !line.starts_with("NRRD") {
                return Err(header_err(path, "missing NRRD magic"));
            }
            first = false;
            continue;
        }
        if line.is_empty() {
            break; // header/payload separator
        }
        if line.starts_with('#') {
            if pos >= bytes.len() {
                break;
            }
            continue;
        }
        let Some((key, value)) = line.split_once(':') else {
            return Err(header_err(path, format!("bad header line '{line}'")));
        };
        let key = key.trim().to_ascii_lowercase();
        let value = value.trim();
        match key.as_str() {
            "type" => match value.to_ascii_lowercase().as_str() {
                "uint8" | "uchar" | "unsigned char" | "uint8_t" => ty_ok = true,
                other => {
                    return Err(header_err(path, format!("unsupported type '{other}'")));
                }
            },
            "dimension" => {
                if value != "3" {
                    return Err(header_err(
                        path,
                        format!("dimension must be 3, got '{value}'"),
                    ));
                }
                dim_ok = true;
            }
            "sizes" => {
                let s: Vec<usize> = value
                    .split_whitespace()
                    .map(|v| v.parse::<usize>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| header_err(path, format!("bad sizes '{value}'")))?;
                if s.len() != 3 {
                    return Err(header_err(
                        path,
                        format!("sizes must have 3 entries, got {}", s.len()),
                    ));
                }
                dims = Some((s[0], s[1], s[2]));
            }
            "space directions" => {
                spacing = Some(parse_space_directions(path, value)?);
            }
            "spacings" => {
                let s: Vec<f64> = value
                    .split_whitespace()
                    .map(|v| v.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| header_err(path, format!("bad spacings '{value}'")))?;
                if s.len() != 3 {
                    return Err(header_err(path, "spacings must have 3 entries"));
                }
                spacing = Some((s[0], s[1], s[2]));
            }
            "encoding" => {
                encoding = Some(match value.to_ascii_lowercase().as_str() {
                    "raw" => NrrdEncoding::Raw,
                    "gzip" | "gz" => NrrdEncoding::Gzip,
                    other => {
                        return Err(header_err(path, format!("unsupported encoding '{other}'")));
                    }
                });
            }
            "data file" | "datafile" => {
                data_file = Some(PathBuf::from(value));
            }
            // endian is irrelevant for uint8; other fields are ignored
            _ => {}
        }
        if pos >= bytes.len() {
            break;
        }
    }

    if !ty_ok {
        return Err(header_err(path, "missing 'type' field"));
    }
    if !dim_ok {
        return Err(header_err(path, "missing 'dimension' field"));
    }
    let dims = dims.ok_or_else(|| header_err(path, "missing 'sizes' field"))?;
    Ok(NrrdHeader {
        dims,
        spacing: spacing.unwrap_or((1.0, 1.0, 1.0)),
        encoding: encoding.ok_or_else(|| header_err(path, "missing 'encoding' field"))?,
        data_file,
        payload_offset: pos,
    })
}

fn load_nrrd(path: &Path) -> Result<VoxelGrid> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let header = parse_nrrd_header(path, &bytes)?;

    let raw_payload: Vec<u8> = match &header.data_file {
        Some(rel) => {
            let data_path = match path.parent() {
                Some(dir) => dir.join(rel),
                None => rel.clone(),
            };
            fs::read(&data_path).map_err(|e| io_err(&data_path, e))?
        }
        None => bytes[header.payload_offset..].to_vec(),
    };

    let n = header
        .dims
        .0
        .checked_mul(header.dims.1)
        .and_then(|v| v.checked_mul(header.dims.2))
        .ok_or(Error::DimsOverflow { dims: header.dims })?;

    let payload = match header.encoding {
        NrrdEncoding::Raw => raw_payload,
        NrrdEncoding::Gzip => {
            let mut out = Vec::with_capacity(n);
            GzDecoder::new(&raw_payload[..])
                .read_to_end(&mut out)
                .map_err(|e| io_err(path, e))?;
            out
        }
    };
    if payload.len() != n {
        return Err(header_err(
            path,
            format!("payload has {} bytes, expected {}", payload.len(), n),
        ));
    }
    binarize(header.dims, header.spacing, &payload)
}

/// Write an attached-header NRRD with the given payload encoding.
pub fn save_nrrd(grid: &VoxelGrid, path: &Path, encoding: NrrdEncoding) -> Result<()> {
    let (nx, ny, nz) = grid.dims();
    let (sx, sy, sz) = grid.spacing();
    let mut header = String::new();
    header.push_str("NRRD0004\n");
    header.push_str("type: uint8\n");
    header.push_str("dimension: 3\n");
    header.push_str(&format!("sizes: {nx} {ny} {nz}\n"));
    header.push_str(&format!(
        "space directions: ({sx},0,0) (0,{sy},0) (0,0,{sz})\n"
    ));
    header.push_str(&format!(
        "encoding: {}\n",
        match encoding {
            NrrdEncoding::Raw => "raw",
            NrrdEncoding::Gzip => "gzip",
        }
    ));
    header.push('\n');

    let payload = grid.to_bytes();
    let mut file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    file.write_all(header.as_bytes())
        .map_err(|e| io_err(path, e))?;
    match encoding {
        NrrdEncoding::Raw => file.write_all(&payload).map_err(|e| io_err(path, e))?,
        NrrdEncoding::Gzip => {
            let mut enc = GzEncoder::new(&mut file, flate2::Compression::default());
            enc.write_all(&payload).map_err(|e| io_err(path, e))?;
            enc.finish().map_err(|e| io_err(path, e))?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// raw + json sidecar
// ---------------------------------------------------------------------------

fn default_element() -> String {
    "u8".to_string()
}

#[derive(Serialize, Deserialize)]
struct RawSidecar {
    dims: [usize; 3],
    spacing: [f64; 3],
    #[serde(default = "default_element")]
    element: String,
}

fn sidecar_paths(path: &Path) -> (PathBuf, PathBuf) {
    // Accept either the .raw or the .json path; derive the other.
    if path.extension().and_then(|e| e.to_str()) == Some("json") {
        (path.with_extension("raw"), path.to_path_buf())
    } else {
        (path.to_path_buf(), path.with_extension("json"))
    }
}

fn load_raw_json(path: &Path) -> Result<VoxelGrid> {
    let (raw_path, json_path) = sidecar_paths(path);
    let sidecar_text = fs::read_to_string(&json_path).map_err(|e| io_err(&json_path, e))?;
    let sidecar: RawSidecar = serde_json::from_str(&sidecar_text)
        .map_err(|e| header_err(&json_path, format!("bad sidecar JSON: {e}")))?;
    let dims = (sidecar.dims[0], sidecar.dims[1], sidecar.dims[2]);
    let spacing = (sidecar.spacing[0], sidecar.spacing[1], sidecar.spacing[2]);
    let n = dims
        .0
        .checked_mul(dims.1)
        .and_then(|v| v.checked_mul(dims.2))
        .ok_or(Error::DimsOverflow { dims })?;
    let payload = fs::read(&raw_path).map_err(|e| io_err(&raw_path, e))?;

    match sidecar.element.as_str() {
        "u8" => {
            if payload.len() != n {
                return Err(header_err(
                    &json_path,
                    format!("payload has {} bytes, expected {}", payload.len(), n),
                ));
            }
            binarize(dims, spacing, &payload)
        }
        "bit" => {
            let expect = n.div_ceil(8);
            if payload.len() != expect {
                return Err(header_err(
                    &json_path,
                    format!(
                        "bit payload has {} bytes, expected {}",
                        payload.len(),
                        expect
                    ),
                ));
            }
            let mut grid = VoxelGrid::new(dims, spacing)?;
            for i in 0..n {
                if (payload[i / 8] >> (i % 8)) & 1 == 1 {
                    grid.set_linear(i, true);
                }
            }
            Ok(grid)
        }
        other => Err(header_err(
            &json_path,
            format!("unsupported element type '{other}'"),
        )),
    }
}

fn save_raw_json(grid: &VoxelGrid, path: &Path) -> Result<()> {
    let (raw_path, json_path) = sidecar_paths(path);
    let (nx, ny, nz) = grid.dims();
    let (sx, sy, sz) = grid.spacing();
    let sidecar = RawSidecar {
        dims: [nx, ny, nz],
        spacing: [sx, sy, sz],
        element: default_element(),
    };
    let json = serde_json::to_string_pretty(&sidecar).expect("sidecar serialization cannot fail");
    fs::write(&json_path, json).map_err(|e| io_err(&json_path, e))?;
    fs::write(&raw_path, grid.to_bytes()).map_err(|e| io_err(&raw_path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn tmpdir() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    fn random_grid(dims: (usize, usize, usize), fill: f64, seed: u64) -> VoxelGrid {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut g = VoxelGrid::new(dims, (0.5, 0.5, 2.0)).unwrap();
        for i in 0..g.len() {
            if rng.gen_bool(fill) {
                g.set_linear(i, true);
            }
        }
        g
    }

    #[test]
    fn raw_json_empty_volume_is_all_zero() {
        let dir = tmpdir();
        let path = dir.path().join("empty.raw");
        let g = VoxelGrid::new((4, 4, 4), (1.0, 1.0, 1.0)).unwrap();
        save_volume(&g, &path, VolumeFormat::RawJson).unwrap();
        assert_eq!(fs::read(&path).unwrap(), vec![0u8; 64]);
        let back = load_volume(&path, VolumeFormat::RawJson).unwrap();
        assert_eq!(back.count_occupied(), 0);
        assert_eq!(back, g);
    }

    #[test]
    fn raw_json_full_volume_is_all_one() {
        let dir = tmpdir();
        let path = dir.path().join("full.raw");
        let mut g = VoxelGrid::new((2, 2, 2), (1.0, 1.0, 1.0)).unwrap();
        g.fill(true);
        save_volume(&g, &path, VolumeFormat::RawJson).unwrap();
        assert_eq!(fs::read(&path).unwrap(), vec![1u8; 8]);
        let back = load_volume(&path, VolumeFormat::RawJson).unwrap();
        assert_eq!(back.count_occupied(), 8);
    }

    #[test]
    fn raw_json_roundtrip_random_grid() {
        let dir = tmpdir();
        let path = dir.path().join("rand.raw");
        let g = random_grid((32, 32, 32), 0.2, 7);
        save_volume(&g, &path, VolumeFormat::RawJson).unwrap();
        let back = load_volume(&path, VolumeFormat::RawJson).unwrap();
        assert_eq!(back, g);
        // loading via the sidecar path works too
        let via_json = load_volume(&dir.path().join("rand.json"), VolumeFormat::RawJson).unwrap();
        assert_eq!(via_json, g);
    }

    #[test]
    fn nrrd_gzip_roundtrip() {
        let dir = tmpdir();
        let path = dir.path().join("vol.nrrd");
        let g = random_grid((16, 16, 16), 0.3, 11);
        save_volume(&g, &path, VolumeFormat::Nrrd).unwrap();
        let back = load_volume(&path, VolumeFormat::Nrrd).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn nrrd_raw_roundtrip_nonpow2_z() {
        let dir = tmpdir();
        let path = dir.path().join("vol.nrrd");
        let g = random_grid((8, 8, 13), 0.4, 3);
        save_nrrd(&g, &path, NrrdEncoding::Raw).unwrap();
        let back = load_volume(&path, VolumeFormat::Nrrd).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn nrrd_detached_header() {
        let dir = tmpdir();
        let g = random_grid((4, 5, 6), 0.5, 5);
        fs::write(dir.path().join("payload.raw"), g.to_bytes()).unwrap();
        let header = "NRRD0004\n\
                      type: uint8\n\
                      dimension: 3\n\
                      sizes: 4 5 6\n\
                      space directions: (0.5,0,0) (0,0.5,0) (0,0,2)\n\
                      encoding: raw\n\
                      data file: payload.raw\n";
        let hdr_path = dir.path().join("vol.nhdr");
        fs::write(&hdr_path, header).unwrap();
        let back = load_volume(&hdr_path, VolumeFormat::Nrrd).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn raw_json_bit_element_reads_packed_payload() {
        let dir = tmpdir();
        // 2x2x2 with voxels 0 and 7 set: one byte 0b10000001
        fs::write(dir.path().join("bits.raw"), [0b1000_0001u8]).unwrap();
        fs::write(
            dir.path().join("bits.json"),
            r#"{"dims":[2,2,2],"spacing":[1,1,1],"element":"bit"}"#,
        )
        .unwrap();
        let g = load_volume(&dir.path().join("bits.raw"), VolumeFormat::RawJson).unwrap();
        assert_eq!(g.count_occupied(), 2);
        assert!(g.get(0, 0, 0));
        assert!(g.get(1, 1, 1));
    }

    #[test]
    fn non_binary_payload_reports_count() {
        let dir = tmpdir();
        let path = dir.path().join("bad.raw");
        fs::write(&path, [0u8, 1, 2, 255, 1, 0, 7, 0]).unwrap();
        fs::write(
            dir.path().join("bad.json"),
            r#"{"dims":[2,2,2],"spacing":[1,1,1]}"#,
        )
        .unwrap();
        let err = load_volume(&path, VolumeFormat::RawJson).unwrap_err();
        match err {
            Error::NonBinaryPayload { count } => assert_eq!(count, 3),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn malformed_nrrd_headers_are_rejected() {
        let dir = tmpdir();
        let cases = [
            ("no magic", "type: uint8\ndimension: 3\n"),
            ("bad type", "NRRD0004\ntype: float\ndimension: 3\nsizes: 1 1 1\nencoding: raw\n"),
            ("bad dim", "NRRD0004\ntype: uint8\ndimension: 2\nsizes: 1 1\nencoding: raw\n"),
            (
                "off-diagonal",
                "NRRD0004\ntype: uint8\ndimension: 3\nsizes: 1 1 1\nspace directions: (1,1,0) (0,1,0) (0,0,1)\nencoding: raw\n",
            ),
            ("no encoding", "NRRD0004\ntype: uint8\ndimension: 3\nsizes: 1 1 1\n"),
        ];
        for (name, text) in cases {
            let p = dir.path().join("h.nrrd");
            fs::write(&p, text).unwrap();
            let err = load_volume(&p, VolumeFormat::Nrrd);
            assert!(
                matches!(err, Err(Error::MalformedHeader { .. })),
                "case '{name}' should fail with MalformedHeader, got {err:?}"
            );
        }
    }

    #[test]
    fn missing_file_reports_io_error_with_path() {
        let err = load_volume(Path::new("/nonexistent/foo.nrrd"), VolumeFormat::Nrrd).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn spacing_survives_roundtrip_exactly() {
        let dir = tmpdir();
        let path = dir.path().join("sp.nrrd");
        let mut g = VoxelGrid::new((3, 3, 3), (0.1, 0.30000000000000004, 1.25)).unwrap();
        g.set(1, 1, 1, true);
        save_volume(&g, &path, VolumeFormat::Nrrd).unwrap();
        let back = load_volume(&path, VolumeFormat::Nrrd).unwrap();
        assert_eq!(back.spacing(), g.spacing());
    }
}
