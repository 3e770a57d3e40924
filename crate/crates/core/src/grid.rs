//! Regular 2D grids: binary facies fields, continuous fields and hard data,
//! plus the plain-text `SGRID` exchange format.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};

/// A row-major `ny × nx` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid<T> {
    ny: usize,
    nx: usize,
    data: Vec<T>,
}

/// Binary facies field; every cell holds 0 or 1.
pub type BinaryField = Grid<u8>;

/// Real-valued field on the same lattice (decoder output, heads).
pub type ContinuousField = Grid<f64>;

impl<T: Copy> Grid<T> {
    pub fn filled(ny: usize, nx: usize, value: T) -> Result<Self> {
        if ny == 0 || nx == 0 {
            return Err(dim_err!("grid dimensions must be positive, got {ny}×{nx}"));
        }
        Ok(Grid {
            ny,
            nx,
            data: vec![value; ny * nx],
        })
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.ny, self.nx)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[row * self.nx + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: T) {
        self.data[row * self.nx + col] = value;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Grid<U> {
        Grid {
            ny: self.ny,
            nx: self.nx,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn same_dims<U>(&self, other: &Grid<U>) -> bool {
        self.ny == other.ny && self.nx == other.nx
    }
}

impl ContinuousField {
    pub fn from_vec(ny: usize, nx: usize, data: Vec<f64>) -> Result<Self> {
        if ny == 0 || nx == 0 || data.len() != ny * nx {
            return Err(dim_err!(
                "{} values cannot fill a {ny}×{nx} grid",
                data.len()
            ));
        }
        Ok(Grid { ny, nx, data })
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Binarize: values strictly above `threshold` become facies 1.
    pub fn threshold(&self, threshold: f64) -> BinaryField {
        self.map(|v| u8::from(v > threshold))
    }
}

impl BinaryField {
    pub fn from_vec(ny: usize, nx: usize, data: Vec<u8>) -> Result<Self> {
        if ny == 0 || nx == 0 || data.len() != ny * nx {
            return Err(dim_err!(
                "{} values cannot fill a {ny}×{nx} grid",
                data.len()
            ));
        }
        if let Some(bad) = data.iter().find(|&&v| v > 1) {
            return Err(Error::Contract(format!("binary field holds value {bad}")));
        }
        Ok(Grid { ny, nx, data })
    }

    pub fn zeros(ny: usize, nx: usize) -> Result<Self> {
        Self::filled(ny, nx, 0)
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1).count()
    }

    /// Fraction of cells in facies 1.
    pub fn fraction(&self) -> f64 {
        self.count_ones() as f64 / self.data.len() as f64
    }

    pub fn complement(&self) -> BinaryField {
        self.map(|v| 1 - v)
    }

    pub fn to_f64(&self) -> ContinuousField {
        self.map(f64::from)
    }

    /// Copy the `h × w` window whose top-left corner is `(row, col)`.
    pub fn window(&self, row: usize, col: usize, h: usize, w: usize) -> Result<BinaryField> {
        if row + h > self.ny || col + w > self.nx || h == 0 || w == 0 {
            return Err(dim_err!(
                "window {h}×{w} at ({row},{col}) exceeds {}×{}",
                self.ny,
                self.nx
            ));
        }
        let mut data = Vec::with_capacity(h * w);
        for r in row..row + h {
            data.extend_from_slice(&self.data[r * self.nx + col..r * self.nx + col + w]);
        }
        Ok(Grid { ny: h, nx: w, data })
    }

    pub fn to_sgrid(&self) -> String {
        let mut out = format!("SGRID 1\n{} {}\n", self.ny, self.nx);
        for row in self.data.chunks(self.nx) {
            let line: Vec<&str> = row.iter().map(|&v| if v == 1 { "1" } else { "0" }).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn parse_sgrid(text: &str, origin: &Path) -> Result<Self> {
        let (ny, nx, tokens) = parse_header(text, "SGRID 1", origin)?;
        let mut data = Vec::with_capacity(ny * nx);
        for tok in tokens {
            match tok {
                "0" => data.push(0),
                "1" => data.push(1),
                other => {
                    return Err(Error::format("SGRID", origin, format!("non-binary token `{other}`")))
                }
            }
        }
        if data.len() != ny * nx {
            return Err(Error::format(
                "SGRID",
                origin,
                format!("expected {} values, found {}", ny * nx, data.len()),
            ));
        }
        Ok(Grid { ny, nx, data })
    }

    pub fn write_sgrid(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_sgrid())?;
        Ok(())
    }

    pub fn read_sgrid(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse_sgrid(&text, path)
    }
}

impl ContinuousField {
    /// Real-valued variant of the grid format (`SGRIDF 1` header).
    pub fn to_sgridf(&self) -> String {
        let mut out = format!("SGRIDF 1\n{} {}\n", self.ny, self.nx);
        for row in self.data.chunks(self.nx) {
            for (i, v) in row.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                // `{:?}` prints the shortest representation that round-trips.
                let _ = write!(out, "{v:?}");
            }
            out.push('\n');
        }
        out
    }

    pub fn parse_sgridf(text: &str, origin: &Path) -> Result<Self> {
        let (ny, nx, tokens) = parse_header(text, "SGRIDF 1", origin)?;
        let data = tokens
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|e| Error::format("SGRIDF", origin, format!("`{t}`: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if data.len() != ny * nx {
            return Err(Error::format(
                "SGRIDF",
                origin,
                format!("expected {} values, found {}", ny * nx, data.len()),
            ));
        }
        Ok(Grid { ny, nx, data })
    }

    pub fn write_sgridf(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_sgridf())?;
        Ok(())
    }

    pub fn read_sgridf(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse_sgridf(&text, path)
    }
}

fn parse_header<'a>(
    text: &'a str,
    magic: &str,
    origin: &Path,
) -> Result<(usize, usize, impl Iterator<Item = &'a str>)> {
    let mut lines = text.lines();
    let first = lines.next().unwrap_or_default().trim();
    if first != magic {
        return Err(Error::format(
            "grid header",
            origin,
            format!("expected `{magic}`, found `{first}`"),
        ));
    }
    let dims_line = lines.next().unwrap_or_default();
    let dims: Vec<usize> = dims_line
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::format("grid header", origin, e))?;
    let [ny, nx] = dims[..] else {
        return Err(Error::format(
            "grid header",
            origin,
            format!("expected `<ny> <nx>`, found `{dims_line}`"),
        ));
    };
    if ny == 0 || nx == 0 {
        return Err(Error::format("grid header", origin, "zero dimension"));
    }
    Ok((ny, nx, lines.flat_map(str::split_whitespace)))
}

/// One known facies value at a grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HardDatum {
    pub row: usize,
    pub col: usize,
    pub facies: u8,
}

/// Conditioning data: cells whose facies every realization must honor.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HardData {
    points: Vec<HardDatum>,
}

impl HardData {
    pub fn new(points: Vec<HardDatum>, ny: usize, nx: usize) -> Result<Self> {
        for (i, p) in points.iter().enumerate() {
            if p.row >= ny || p.col >= nx {
                return Err(Error::Config(format!(
                    "hard datum ({}, {}) lies outside the {ny}×{nx} grid",
                    p.row, p.col
                )));
            }
            if p.facies > 1 {
                return Err(Error::Config(format!("hard datum facies {} is not binary", p.facies)));
            }
            if points[..i]
                .iter()
                .any(|q| q.row == p.row && q.col == p.col && q.facies != p.facies)
            {
                return Err(Error::Config(format!(
                    "conflicting hard data at ({}, {})",
                    p.row, p.col
                )));
            }
        }
        Ok(HardData { points })
    }

    pub fn empty() -> Self {
        HardData::default()
    }

    pub fn points(&self) -> &[HardDatum] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_honored_by(&self, field: &BinaryField) -> bool {
        self.mismatches(field) == 0
    }

    pub fn mismatches(&self, field: &BinaryField) -> usize {
        self.points
            .iter()
            .filter(|p| field.get(p.row, p.col) != p.facies)
            .count()
    }

    /// Sample `field` on a regular `k × k` lattice of cells.
    pub fn lattice_from(field: &BinaryField, k: usize) -> Result<Self> {
        let rows = crate::flow::lattice_positions(field.ny(), k)?;
        let cols = crate::flow::lattice_positions(field.nx(), k)?;
        let mut points = Vec::with_capacity(k * k);
        for &row in &rows {
            for &col in &cols {
                points.push(HardDatum {
                    row,
                    col,
                    facies: field.get(row, col),
                });
            }
        }
        HardData::new(points, field.ny(), field.nx())
    }

    /// CSV with header `row,col,facies`.
    pub fn read_csv(path: &Path, ny: usize, nx: usize) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let points = reader
            .deserialize::<HardDatum>()
            .collect::<std::result::Result<Vec<_>, _>>()?;
        HardData::new(points, ny, nx)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut writer = csv::Writer::from_path(path)?;
        for p in &self.points {
            writer.serialize(p)?;
        }
        writer.flush()?;
        Ok(())
    }
}
