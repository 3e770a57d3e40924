//! Training-set construction: an object-based channel generator, a
//! simplified direct-sampling multiple-point simulator, and conditioning to
//! hard data.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::grid::{BinaryField, HardData};
use crate::rng::{self, Rng};

/// Parameters of the channel generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TiConfig {
    /// Inclusive channel width range in cells.
    pub width_range: (usize, usize),
    /// Inclusive range of segment angles, degrees from the +column axis.
    pub orientation_deg_range: (f64, f64),
    pub target_fraction: f64,
    pub seed: u64,
}

impl Default for TiConfig {
    fn default() -> Self {
        TiConfig {
            width_range: (3, 5),
            orientation_deg_range: (-15.0, 15.0),
            target_fraction: 0.3,
            seed: 0,
        }
    }
}

impl TiConfig {
    pub fn validate(&self) -> Result<()> {
        let (w0, w1) = self.width_range;
        let (a0, a1) = self.orientation_deg_range;
        if w0 == 0 || w0 > w1 {
            return Err(Error::Config(format!("invalid width range {w0}..={w1}")));
        }
        if !(a0 <= a1) || !a0.is_finite() || !a1.is_finite() {
            return Err(Error::Config(format!("invalid orientation range {a0}..={a1}")));
        }
        if !(self.target_fraction > 0.0 && self.target_fraction < 1.0) {
            return Err(Error::Config(format!(
                "target fraction must lie in (0, 1), got {}",
                self.target_fraction
            )));
        }
        Ok(())
    }
}

/// Acceptance band around the target facies-1 fraction.
pub const FRACTION_TOLERANCE: f64 = 0.05;
const SEGMENT_LENGTH: f64 = 6.0;
const ATTEMPTS_PER_FIELD: usize = 400;
const RESTARTS: usize = 50;

/// Rasterized centerline band.
struct Channel {
    cells: Vec<usize>,
}

fn draw_channel(ny: usize, nx: usize, anchor: (f64, f64), cfg: &TiConfig, rng: &mut Rng) -> Channel {
    let width = rng.random_range(cfg.width_range.0..=cfg.width_range.1);
    let half = width as f64 / 2.0;
    let (a0, a1) = cfg.orientation_deg_range;
    let mut angle = || {
        let deg = if a0 == a1 { a0 } else { rng.random_range(a0..=a1) };
        deg.to_radians()
    };
    // Even widths put the centerline between cell centres so that a straight
    // band covers exactly `width` rows.
    let (mut y, x) = anchor;
    if width % 2 == 0 {
        y += 0.5;
    }
    let inside = |(py, px): (f64, f64)| {
        py > -half - 1.0 && py < ny as f64 + half && px > -half - 1.0 && px < nx as f64 + half
    };
    let max_segments = 4 * (ny + nx) / SEGMENT_LENGTH as usize + 4;
    let mut forward = vec![(y, x)];
    let mut backward = Vec::new();
    for (dir, points) in [(1.0, &mut forward), (-1.0, &mut backward)] {
        let mut p = (y, x);
        for _ in 0..max_segments {
            let t = angle();
            p = (p.0 + dir * SEGMENT_LENGTH * t.sin(), p.1 + dir * SEGMENT_LENGTH * t.cos());
            points.push(p);
            if !inside(p) {
                break;
            }
        }
    }
    backward.reverse();
    backward.extend(forward);
    let line = backward;

    let mut mask = vec![false; ny * nx];
    for seg in line.windows(2) {
        let ((y0, x0), (y1, x1)) = (seg[0], seg[1]);
        let rmin = (y0.min(y1) - half).floor().max(0.0) as usize;
        let rmax = (y0.max(y1) + half).ceil().min(ny as f64 - 1.0);
        let cmin = (x0.min(x1) - half).floor().max(0.0) as usize;
        let cmax = (x0.max(x1) + half).ceil().min(nx as f64 - 1.0);
        if rmax < 0.0 || cmax < 0.0 {
            continue;
        }
        for r in rmin..=rmax as usize {
            for c in cmin..=cmax as usize {
                if point_segment_distance((r as f64, c as f64), seg[0], seg[1]) <= half + 1e-9 {
                    mask[r * nx + c] = true;
                }
            }
        }
    }
    Channel {
        cells: mask.iter().enumerate().filter_map(|(i, &m)| m.then_some(i)).collect(),
    }
}

fn point_segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dy, dx) = (b.0 - a.0, b.1 - a.1);
    let len2 = dy * dy + dx * dx;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dy + (p.1 - a.1) * dx) / len2).clamp(0.0, 1.0)
    };
    let (qy, qx) = (a.0 + t * dy, a.1 + t * dx);
    ((p.0 - qy).powi(2) + (p.1 - qx).powi(2)).sqrt()
}

/// True if any cell of `cells` is facies 1 or 8-adjacent to facies 1 in `field`.
fn touches(field: &[u8], ny: usize, nx: usize, cells: &[usize]) -> bool {
    cells.iter().any(|&i| {
        let (r, c) = (i / nx, i % nx);
        (r.saturating_sub(1)..=(r + 1).min(ny - 1))
            .any(|rr| (c.saturating_sub(1)..=(c + 1).min(nx - 1)).any(|cc| field[rr * nx + cc] == 1))
    })
}

/// Place non-touching sinuous channels of facies 1 on a facies-0 matrix
/// until the facies-1 fraction reaches `target ± 0.05`.
pub fn gen_channels(cfg: &TiConfig, ny: usize, nx: usize, rng: &mut Rng) -> Result<BinaryField> {
    gen_channels_conditional(cfg, ny, nx, &HardData::empty(), rng)
}

/// [`gen_channels`] honoring hard data: channels are first threaded through
/// every facies-1 datum, and no channel may cover a facies-0 datum.
pub fn gen_channels_conditional(
    cfg: &TiConfig,
    ny: usize,
    nx: usize,
    hard: &HardData,
    rng: &mut Rng,
) -> Result<BinaryField> {
    cfg.validate()?;
    if ny < 16 || nx < 16 {
        return Err(dim_err!("channel fields need at least 16×16 cells, got {ny}×{nx}"));
    }
    let n = (ny * nx) as f64;
    let target = cfg.target_fraction;
    let hi = target + FRACTION_TOLERANCE;
    // Stop once within a small band under the target so the ensemble mean
    // sits near it rather than at the lower edge.
    let enough = target - 0.01;
    let mut forbidden = vec![false; ny * nx];
    for p in hard.points().iter().filter(|p| p.facies == 0) {
        forbidden[p.row * nx + p.col] = true;
    }
    let ones: Vec<_> = hard.points().iter().filter(|p| p.facies == 1).collect();

    'restart: for _ in 0..RESTARTS {
        let mut field = vec![0u8; ny * nx];
        let mut count = 0usize;
        let mut attempts = 0usize;
        let place = |field: &mut Vec<u8>, count: &mut usize, ch: &Channel| -> bool {
            if ch.cells.is_empty()
                || ch.cells.iter().any(|&i| forbidden[i])
                || touches(field, ny, nx, &ch.cells)
                || (*count + ch.cells.len()) as f64 / n > hi
            {
                return false;
            }
            for &i in &ch.cells {
                field[i] = 1;
            }
            *count += ch.cells.len();
            true
        };
        for p in &ones {
            if field[p.row * nx + p.col] == 1 {
                continue;
            }
            let mut placed = false;
            while attempts < ATTEMPTS_PER_FIELD {
                attempts += 1;
                let ch = draw_channel(ny, nx, (p.row as f64, p.col as f64), cfg, rng);
                if ch.cells.contains(&(p.row * nx + p.col)) && place(&mut field, &mut count, &ch) {
                    placed = true;
                    break;
                }
            }
            if !placed {
                continue 'restart;
            }
        }
        while (count as f64 / n) < enough {
            if attempts >= ATTEMPTS_PER_FIELD {
                continue 'restart;
            }
            attempts += 1;
            let anchor = (rng.random_range(0..ny) as f64, rng.random_range(0..nx) as f64);
            let ch = draw_channel(ny, nx, anchor, cfg, rng);
            place(&mut field, &mut count, &ch);
        }
        let out = BinaryField::from_vec(ny, nx, field)?;
        if hard.is_honored_by(&out) {
            return Ok(out);
        }
    }
    Err(Error::Config(format!(
        "could not reach facies-1 fraction {target} ± {FRACTION_TOLERANCE} on a {ny}×{nx} grid with widths {:?}",
        cfg.width_range
    )))
}

/// Direct-sampling parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DsParams {
    pub n_neighbors: usize,
    /// Acceptance threshold on the normalized Hamming distance.
    pub dist_threshold: f64,
    /// Fraction of training-image locations scanned per cell.
    pub scan_fraction: f64,
}

impl Default for DsParams {
    fn default() -> Self {
        DsParams {
            n_neighbors: 20,
            dist_threshold: 0.05,
            scan_fraction: 0.5,
        }
    }
}

impl DsParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_neighbors == 0 {
            return Err(Error::Config("direct sampling needs at least one neighbour".into()));
        }
        if !(0.0..=1.0).contains(&self.dist_threshold) {
            return Err(Error::Config(format!("distance threshold {} not in [0, 1]", self.dist_threshold)));
        }
        if !(self.scan_fraction > 0.0 && self.scan_fraction <= 1.0) {
            return Err(Error::Config(format!("scan fraction {} not in (0, 1]", self.scan_fraction)));
        }
        Ok(())
    }
}

/// Record of one simulated cell: its conditioning data event, the copied
/// value and the distance of the match it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct DsEvent {
    pub row: usize,
    pub col: usize,
    pub value: u8,
    pub distance: f64,
    /// `(Δrow, Δcol, facies)` of the informed neighbours used.
    pub neighbors: Vec<(isize, isize, u8)>,
}

/// Axis-aligned block of cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub row: usize,
    pub col: usize,
    pub height: usize,
    pub width: usize,
}

impl Rect {
    pub fn contains(&self, r: usize, c: usize) -> bool {
        r >= self.row && r < self.row + self.height && c >= self.col && c < self.col + self.width
    }

    /// A uniformly placed rectangle covering about `frac` of an `ny × nx`
    /// grid, with the domain's aspect ratio.
    pub fn random(ny: usize, nx: usize, frac: f64, rng: &mut Rng) -> Rect {
        let s = frac.clamp(0.0, 1.0).sqrt();
        let height = ((ny as f64 * s).round() as usize).clamp(1, ny);
        let width = ((nx as f64 * s).round() as usize).clamp(1, nx);
        Rect {
            row: rng.random_range(0..=ny - height),
            col: rng.random_range(0..=nx - width),
            height,
            width,
        }
    }
}

/// Offsets sorted by distance, then row, then column.
fn spiral_offsets(ny: usize, nx: usize) -> Vec<(isize, isize)> {
    let rmax = ny.max(nx).min(32) as isize;
    let mut v: Vec<(isize, isize)> = (-rmax..=rmax)
        .flat_map(|dr| (-rmax..=rmax).map(move |dc| (dr, dc)))
        .filter(|&(dr, dc)| (dr, dc) != (0, 0) && dr * dr + dc * dc <= rmax * rmax)
        .collect();
    v.sort_by_key(|&(dr, dc)| (dr * dr + dc * dc, dr, dc));
    v
}

fn ds_core(
    ti: &BinaryField,
    ny: usize,
    nx: usize,
    values: &mut [u8],
    known: &mut [bool],
    params: &DsParams,
    rng: &mut Rng,
    mut trace: Option<&mut Vec<DsEvent>>,
) -> Result<()> {
    params.validate()?;
    if ti.len() <= params.n_neighbors {
        return Err(dim_err!(
            "training image of {} cells is not larger than the {}-neighbour template",
            ti.len(),
            params.n_neighbors
        ));
    }
    let (ty, tx) = ti.dims();
    let tv = ti.as_slice();
    let offsets = spiral_offsets(ny, nx);
    let mut path: Vec<usize> = (0..ny * nx).filter(|&i| !known[i]).collect();
    path.shuffle(rng);
    let n_scan = ((params.scan_fraction * ti.len() as f64).ceil() as usize).clamp(1, ti.len());
    let mut event: Vec<(isize, isize, u8)> = Vec::with_capacity(params.n_neighbors);
    for cell in path {
        let (r, c) = ((cell / nx) as isize, (cell % nx) as isize);
        event.clear();
        for &(dr, dc) in &offsets {
            let (rr, cc) = (r + dr, c + dc);
            if rr < 0 || cc < 0 || rr >= ny as isize || cc >= nx as isize {
                continue;
            }
            let j = rr as usize * nx + cc as usize;
            if known[j] {
                event.push((dr, dc, values[j]));
                if event.len() == params.n_neighbors {
                    break;
                }
            }
        }
        // With a zero threshold the farthest neighbour is dropped until an
        // exact match exists, so every data event used occurs in the TI.
        let (value, distance) = loop {
            if event.is_empty() {
                break (tv[rng.random_range(0..tv.len())], 0.0);
            }
            let accept = (params.dist_threshold * event.len() as f64 + 1e-9).floor() as usize;
            let start = rng.random_range(0..tv.len());
            let mut best = (usize::MAX, 0usize);
            for k in 0..n_scan {
                let idx = (start + k) % tv.len();
                let (tr, tc) = ((idx / tx) as isize, (idx % tx) as isize);
                let mut mism = 0usize;
                for &(dr, dc, v) in &event {
                    let (rr, cc) = (tr + dr, tc + dc);
                    let ok = rr >= 0
                        && cc >= 0
                        && rr < ty as isize
                        && cc < tx as isize
                        && tv[rr as usize * tx + cc as usize] == v;
                    if !ok {
                        mism += 1;
                        if mism >= best.0 {
                            break;
                        }
                    }
                }
                if mism < best.0 {
                    best = (mism, idx);
                    if mism <= accept {
                        break;
                    }
                }
            }
            if best.0 > 0 && params.dist_threshold == 0.0 {
                event.pop();
                continue;
            }
            break (tv[best.1], best.0 as f64 / event.len() as f64);
        };
        values[cell] = value;
        known[cell] = true;
        if let Some(t) = trace.as_deref_mut() {
            t.push(DsEvent {
                row: r as usize,
                col: c as usize,
                value,
                distance,
                neighbors: event.clone(),
            });
        }
    }
    Ok(())
}

fn seed_hard(ny: usize, nx: usize, hard: &HardData) -> Result<(Vec<u8>, Vec<bool>)> {
    let mut values = vec![0u8; ny * nx];
    let mut known = vec![false; ny * nx];
    for p in hard.points() {
        if p.row >= ny || p.col >= nx {
            return Err(dim_err!("hard datum ({}, {}) outside {ny}×{nx} grid", p.row, p.col));
        }
        values[p.row * nx + p.col] = p.facies;
        known[p.row * nx + p.col] = true;
    }
    Ok((values, known))
}

/// Simulate an `ny × nx` field from training image `ti` by direct sampling.
/// Hard data are fixed before the random path starts.
pub fn ds_simulate(
    ti: &BinaryField,
    ny: usize,
    nx: usize,
    hard: &HardData,
    params: &DsParams,
    rng: &mut Rng,
) -> Result<BinaryField> {
    let (mut values, mut known) = seed_hard(ny, nx, hard)?;
    ds_core(ti, ny, nx, &mut values, &mut known, params, rng, None)?;
    BinaryField::from_vec(ny, nx, values)
}

/// [`ds_simulate`] that also returns one [`DsEvent`] per simulated cell in
/// path order.
pub fn ds_simulate_traced(
    ti: &BinaryField,
    ny: usize,
    nx: usize,
    hard: &HardData,
    params: &DsParams,
    rng: &mut Rng,
) -> Result<(BinaryField, Vec<DsEvent>)> {
    let (mut values, mut known) = seed_hard(ny, nx, hard)?;
    let mut trace = Vec::new();
    ds_core(ti, ny, nx, &mut values, &mut known, params, rng, Some(&mut trace))?;
    Ok((BinaryField::from_vec(ny, nx, values)?, trace))
}

/// Redraw the cells of `region` (except hard data) conditioned on the rest
/// of `current`.
pub fn ds_resimulate(
    ti: &BinaryField,
    current: &BinaryField,
    region: &Rect,
    hard: &HardData,
    params: &DsParams,
    rng: &mut Rng,
) -> Result<BinaryField> {
    let (ny, nx) = current.dims();
    let mut values = current.as_slice().to_vec();
    let mut known: Vec<bool> = (0..ny * nx).map(|i| !region.contains(i / nx, i % nx)).collect();
    for p in hard.points() {
        if p.row >= ny || p.col >= nx {
            return Err(dim_err!("hard datum ({}, {}) outside {ny}×{nx} grid", p.row, p.col));
        }
        values[p.row * nx + p.col] = p.facies;
        known[p.row * nx + p.col] = true;
    }
    ds_core(ti, ny, nx, &mut values, &mut known, params, rng, None)?;
    BinaryField::from_vec(ny, nx, values)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Source {
    Object(TiConfig),
    Ds { ti: BinaryField, params: DsParams },
}

impl Source {
    pub fn name(&self) -> &'static str {
        match self {
            Source::Object(_) => "object",
            Source::Ds { .. } => "ds",
        }
    }
}

/// One row of a training-set manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub index: usize,
    pub seed: u64,
    pub source: String,
    pub fraction: f64,
}

/// `count` realizations with seeds `master_seed + i`, all honoring `hard`.
/// Realizations are generated in parallel; the result does not depend on
/// the thread count.
pub fn build_training_set(
    source: &Source,
    ny: usize,
    nx: usize,
    count: usize,
    hard: &HardData,
    master_seed: u64,
) -> Result<(Vec<BinaryField>, Vec<ManifestRow>)> {
    if count == 0 {
        return Err(Error::Config("training set count must be at least 1".into()));
    }
    let fields: Vec<BinaryField> = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::seeded(master_seed.wrapping_add(i as u64));
            match source {
                Source::Object(cfg) => gen_channels_conditional(cfg, ny, nx, hard, &mut r),
                Source::Ds { ti, params } => ds_simulate(ti, ny, nx, hard, params, &mut r),
            }
        })
        .collect::<Result<_>>()?;
    let manifest = fields
        .iter()
        .enumerate()
        .map(|(index, f)| ManifestRow {
            index,
            seed: master_seed.wrapping_add(index as u64),
            source: source.name().to_string(),
            fraction: f.fraction(),
        })
        .collect();
    Ok((fields, manifest))
}

pub const MANIFEST_FILE: &str = "manifest.csv";

pub fn realization_file(index: usize) -> String {
    format!("real_{index:05}.sgrid")
}

/// Write `real_NNNNN.sgrid` files plus `manifest.csv` into `dir`.
pub fn write_training_set(dir: &Path, fields: &[BinaryField], manifest: &[ManifestRow]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (i, f) in fields.iter().enumerate() {
        f.write_sgrid(&dir.join(realization_file(i)))?;
    }
    let mut w = csv::Writer::from_path(dir.join(MANIFEST_FILE))?;
    for row in manifest {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Read every `*.sgrid` file of `dir` in file-name order.
pub fn read_training_set(dir: &Path) -> Result<Vec<BinaryField>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "sgrid"));
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Config(format!("no .sgrid files in {}", dir.display())));
    }
    paths.iter().map(|p| BinaryField::read_sgrid(p)).collect()
}
