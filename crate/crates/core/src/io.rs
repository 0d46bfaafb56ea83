//! File formats: P4 bitmaps and little-endian f64 fields, each with a JSON sidecar.
//!
//! Bitmap layout: image width is the x₁ count. Row 0 of each slice is the
//! highest x₂ index; in 3D the x₃ slices are stacked vertically, slice 0 first.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::cut::CutProblem;
use crate::grid::{BinaryMask, FieldUnit, GridDomain, PerimeterWeights, ScalarField};

/// Header shared by mask and field files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub kind: String,
    pub n: usize,
    pub counts: Vec<usize>,
    pub h: f64,
    pub origin: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<FieldUnit>,
}

impl Sidecar {
    fn of(kind: &str, d: &GridDomain, unit: Option<FieldUnit>) -> Self {
        Self {
            kind: kind.into(),
            n: d.dim(),
            counts: d.counts().to_vec(),
            h: d.spacing(),
            origin: d.origin().to_vec(),
            unit,
        }
    }

    fn domain(&self, path: &Path) -> Result<GridDomain> {
        if self.counts.len() != self.n {
            return Err(format_err(path, "`counts` length differs from `n`"));
        }
        GridDomain::new(&self.counts, self.h, &self.origin).map_err(|e| format_err(path, e.to_string()))
    }
}

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Sidecar path: same stem, `.json` extension.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn write_sidecar(path: &Path, s: &Sidecar) -> Result<()> {
    let p = sidecar_path(path);
    fs::write(&p, serde_json::to_vec_pretty(s)?).map_err(io_err(&p))
}

fn read_sidecar(path: &Path, kind: &str) -> Result<Sidecar> {
    let p = sidecar_path(path);
    let bytes = fs::read(&p).map_err(io_err(&p))?;
    let s: Sidecar = serde_json::from_slice(&bytes).map_err(|e| format_err(&p, e.to_string()))?;
    if s.kind != kind {
        return Err(format_err(&p, format!("expected kind `{kind}`, found `{}`", s.kind)));
    }
    Ok(s)
}

/// Image row order: (j, k) for each of the `ny·nz` rows.
fn row_cells(d: &GridDomain, row: usize) -> (usize, usize) {
    let [_, ny, _] = d.counts3();
    (ny - 1 - row % ny, row / ny)
}

pub fn encode_pbm(mask: &BinaryMask) -> Vec<u8> {
    let d = mask.domain();
    let [nx, ny, nz] = d.counts3();
    let rows = ny * nz;
    let stride = nx.div_ceil(8);
    let mut out = format!("P4\n{nx} {rows}\n").into_bytes();
    out.reserve(stride * rows);
    for r in 0..rows {
        let (j, k) = row_cells(d, r);
        let base = d.index([0, j, k]);
        let mut line = vec![0u8; stride];
        for i in 0..nx {
            if mask.get(base + i) {
                line[i / 8] |= 0x80 >> (i % 8);
            }
        }
        out.extend_from_slice(&line);
    }
    out
}

fn pbm_header(bytes: &[u8]) -> Option<(usize, usize, usize)> {
    // magic, width, height, each separated by whitespace; comments start with '#'
    let mut pos = 0;
    let mut tokens = Vec::new();
    while tokens.len() < 3 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return None;
        }
        tokens.push(std::str::from_utf8(&bytes[start..pos]).ok()?.to_string());
    }
    if tokens[0] != "P4" {
        return None;
    }
    let w = tokens[1].parse().ok()?;
    let h = tokens[2].parse().ok()?;
    // exactly one whitespace byte before the raster
    Some((w, h, pos + 1))
}

pub fn decode_pbm(bytes: &[u8], domain: GridDomain, path: &Path) -> Result<BinaryMask> {
    let (w, h, start) = pbm_header(bytes).ok_or_else(|| format_err(path, "not a P4 bitmap"))?;
    let [nx, ny, nz] = domain.counts3();
    if w != nx || h != ny * nz {
        return Err(format_err(
            path,
            format!("bitmap is {w}x{h}, sidecar implies {nx}x{}", ny * nz),
        ));
    }
    let stride = nx.div_ceil(8);
    if bytes.len() < start + stride * h {
        return Err(format_err(path, "truncated raster"));
    }
    let mut mask = BinaryMask::empty(domain);
    for r in 0..h {
        let (j, k) = row_cells(&domain, r);
        let base = domain.index([0, j, k]);
        let line = &bytes[start + r * stride..start + (r + 1) * stride];
        for i in 0..nx {
            mask.set(base + i, line[i / 8] & (0x80 >> (i % 8)) != 0);
        }
    }
    Ok(mask)
}

/// Writes `path` (P4) and its sidecar.
pub fn write_mask(path: &Path, mask: &BinaryMask) -> Result<()> {
    fs::write(path, encode_pbm(mask)).map_err(io_err(path))?;
    write_sidecar(path, &Sidecar::of("mask", mask.domain(), None))
}

pub fn read_mask(path: &Path) -> Result<BinaryMask> {
    let side = read_sidecar(path, "mask")?;
    let domain = side.domain(path)?;
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode_pbm(&bytes, domain, path)
}

/// Writes raw little-endian f64 values in cell index order, plus the sidecar.
pub fn write_field(path: &Path, field: &ScalarField) -> Result<()> {
    let mut buf = Vec::with_capacity(8 * field.values().len());
    for v in field.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, buf).map_err(io_err(path))?;
    write_sidecar(path, &Sidecar::of("field", field.domain(), field.unit()))
}

pub fn read_field(path: &Path) -> Result<ScalarField> {
    let side = read_sidecar(path, "field")?;
    let domain = side.domain(path)?;
    let bytes = fs::read(path).map_err(io_err(path))?;
    if bytes.len() != 8 * domain.cell_count() {
        return Err(format_err(
            path,
            format!("{} bytes, expected {}", bytes.len(), 8 * domain.cell_count()),
        ));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    ScalarField::new(domain, values, side.unit).map_err(|e| format_err(path, e.to_string()))
}

/// Per-cell dump: cell index, center coordinates, then one column per field.
pub fn write_cells_csv(path: &Path, fields: &[(&str, &ScalarField)]) -> Result<()> {
    let Some((_, first)) = fields.first() else {
        return Err(crate::error::invalid("fields", "nothing to write"));
    };
    let d = *first.domain();
    for (name, f) in fields {
        d.check_same(f.domain(), name)?;
    }
    let mut out = std::io::BufWriter::new(fs::File::create(path).map_err(io_err(path))?);
    let axes = ["x1", "x2", "x3"];
    let mut header = vec!["cell".to_string()];
    header.extend(axes[..d.dim()].iter().map(|s| s.to_string()));
    header.extend(fields.iter().map(|(n, _)| n.to_string()));
    writeln!(out, "{}", header.join(",")).map_err(io_err(path))?;
    for i in 0..d.cell_count() {
        let x = d.center(i);
        let mut row = vec![i.to_string()];
        row.extend(x[..d.dim()].iter().map(|v| v.to_string()));
        row.extend(fields.iter().map(|(_, f)| f.get(i).to_string()));
        writeln!(out, "{}", row.join(",")).map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

/// JSON manifest of a cut problem; paths are relative to the manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutBundle {
    pub curvature: PathBuf,
    pub datum: PathBuf,
    pub free: PathBuf,
    /// Stencil name accepted by [`PerimeterWeights::by_name`].
    pub weights: String,
}

pub fn load_cut_problem(path: &Path) -> Result<CutProblem> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let b: CutBundle = serde_json::from_slice(&bytes).map_err(|e| format_err(path, e.to_string()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let curvature = read_field(&base.join(&b.curvature))?;
    let datum = read_mask(&base.join(&b.datum))?;
    let free = read_mask(&base.join(&b.free))?;
    let weights = PerimeterWeights::by_name(&b.weights).map_err(|e| format_err(path, e.to_string()))?;
    CutProblem::new(curvature, datum, free, weights)
}

/// Writes `curvature.f64`, `datum.pbm`, `free.pbm` and the manifest `problem.json` into `dir`.
pub fn save_cut_problem(dir: &Path, problem: &CutProblem) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let b = CutBundle {
        curvature: "curvature.f64".into(),
        datum: "datum.pbm".into(),
        free: "free.pbm".into(),
        weights: problem.weights().name().to_string(),
    };
    write_field(&dir.join(&b.curvature), problem.curvature())?;
    write_mask(&dir.join(&b.datum), problem.datum())?;
    write_mask(&dir.join(&b.free), problem.free())?;
    let path = dir.join("problem.json");
    fs::write(&path, serde_json::to_vec_pretty(&b)?).map_err(io_err(&path))?;
    Ok(path)
}

/// Any serializable value as pretty JSON.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_vec_pretty(value)?).map_err(io_err(path))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    serde_json::from_slice(&bytes).map_err(|e| format_err(path, e.to_string()))
}
