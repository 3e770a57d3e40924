//! Steady-state saturated groundwater flow on a facies grid.
//!
//! Block-centred finite differences: every cell holds one head, the first
//! and last columns are fixed-head cells, the top and bottom edges are
//! no-flow, and a pumping well withdraws a fixed rate from one cell. The
//! interior system is symmetric positive definite and is solved by
//! Jacobi-preconditioned conjugate gradients.

use std::path::Path;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::grid::{BinaryField, ContinuousField};
use crate::rng;

/// Heads in metres, one per cell.
pub type HeadField = ContinuousField;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Well {
    pub row: usize,
    pub col: usize,
    /// Extraction rate in m³/s; positive withdraws water.
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    /// Hydraulic conductivity (m/s) of facies 0 and facies 1.
    pub k_facies: [f64; 2],
    pub cell_size: f64,
    pub thickness: f64,
    pub h_left: f64,
    pub h_right: f64,
    pub well: Option<Well>,
    pub obs_points: Vec<(usize, usize)>,
    /// Relative residual `‖b − Ah‖ / ‖b‖` at which the solve stops.
    pub tol: f64,
}

pub const K_MATRIX: f64 = 1e-4;
pub const K_CHANNEL: f64 = 1e-2;
pub const HEAD_GRADIENT: f64 = 0.01;
pub const WELL_RATE: f64 = 1e-3;
pub const DEFAULT_TOL: f64 = 1e-13;

impl FlowConfig {
    /// Channel/matrix conductivities, a 0.01 head gradient in +x starting
    /// from 1 m, a 0.001 m³/s well in the central cell and a `k × k`
    /// observation lattice.
    pub fn standard(ny: usize, nx: usize, k: usize) -> Result<Self> {
        if nx < 3 {
            return Err(dim_err!("flow grid needs at least 3 columns, got {nx}"));
        }
        Ok(FlowConfig {
            k_facies: [K_MATRIX, K_CHANNEL],
            cell_size: 1.0,
            thickness: 1.0,
            h_left: 1.0,
            h_right: 1.0 - HEAD_GRADIENT * (nx - 1) as f64,
            well: Some(Well {
                row: ny / 2,
                col: nx / 2,
                rate: WELL_RATE,
            }),
            obs_points: lattice_points(ny, nx, k)?,
            tol: DEFAULT_TOL,
        })
    }

    pub fn validate(&self, ny: usize, nx: usize) -> Result<()> {
        if ny == 0 || nx < 3 {
            return Err(dim_err!("flow grid must be at least 1×3, got {ny}×{nx}"));
        }
        if !self.k_facies.iter().all(|k| *k > 0.0 && k.is_finite()) {
            return Err(Error::Config(format!("conductivities must be positive, got {:?}", self.k_facies)));
        }
        if !(self.cell_size > 0.0) || !(self.thickness > 0.0) {
            return Err(Error::Config("cell size and thickness must be positive".into()));
        }
        if !self.h_left.is_finite() || !self.h_right.is_finite() {
            return Err(Error::Config("boundary heads must be finite".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config("solver tolerance must be positive".into()));
        }
        if let Some(w) = &self.well {
            if w.row >= ny || w.col == 0 || w.col + 1 >= nx || !w.rate.is_finite() {
                return Err(Error::Config(format!(
                    "well at ({}, {}) must lie in a non-boundary column of the {ny}×{nx} grid",
                    w.row, w.col
                )));
            }
        }
        if let Some(&(r, c)) = self.obs_points.iter().find(|&&(r, c)| r >= ny || c >= nx) {
            return Err(dim_err!("observation point ({r}, {c}) outside {ny}×{nx} grid"));
        }
        Ok(())
    }

    fn well_rate(&self) -> f64 {
        self.well.map_or(0.0, |w| w.rate)
    }
}

/// `k` evenly spaced, centred positions in `0..n`: spacing `⌊n/(k+1)⌋`.
pub fn lattice_positions(n: usize, k: usize) -> Result<Vec<usize>> {
    let step = n / (k + 1);
    if k == 0 || step == 0 {
        return Err(dim_err!("cannot place {k} lattice positions in {n} cells"));
    }
    let start = (n - 1 - (k - 1) * step) / 2;
    Ok((0..k).map(|i| start + i * step).collect())
}

/// Row-major `k × k` lattice of cells.
pub fn lattice_points(ny: usize, nx: usize, k: usize) -> Result<Vec<(usize, usize)>> {
    let rows = lattice_positions(ny, k)?;
    let cols = lattice_positions(nx, k)?;
    Ok(rows.iter().flat_map(|&r| cols.iter().map(move |&c| (r, c))).collect())
}

fn harmonic(a: f64, b: f64) -> f64 {
    2.0 * a * b / (a + b)
}

/// Inter-cell conductances of a facies grid.
struct Conductances {
    ny: usize,
    nx: usize,
    /// Between `(i, j)` and `(i, j + 1)`, indexed `i * (nx − 1) + j`.
    x: Vec<f64>,
    /// Between `(i, j)` and `(i + 1, j)`, indexed `i * nx + j`.
    y: Vec<f64>,
}

impl Conductances {
    fn new(m: &BinaryField, cfg: &FlowConfig) -> Self {
        let (ny, nx) = m.dims();
        let k = |i, j| cfg.k_facies[m.get(i, j) as usize];
        // Square cells: face width / centre distance = 1.
        let b = cfg.thickness;
        let mut x = Vec::with_capacity(ny * (nx - 1));
        for i in 0..ny {
            for j in 0..nx - 1 {
                x.push(harmonic(k(i, j), k(i, j + 1)) * b);
            }
        }
        let mut y = Vec::with_capacity(ny.saturating_sub(1) * nx);
        for i in 0..ny.saturating_sub(1) {
            for j in 0..nx {
                y.push(harmonic(k(i, j), k(i + 1, j)) * b);
            }
        }
        Conductances { ny, nx, x, y }
    }

    fn cx(&self, i: usize, j: usize) -> f64 {
        self.x[i * (self.nx - 1) + j]
    }

    fn cy(&self, i: usize, j: usize) -> f64 {
        self.y[i * self.nx + j]
    }

    /// Net inflow into cell `(i, j)` from its neighbours for heads `h`.
    fn net_inflow(&self, h: &[f64], i: usize, j: usize) -> f64 {
        let nx = self.nx;
        let hc = h[i * nx + j];
        let mut q = 0.0;
        if j > 0 {
            q += self.cx(i, j - 1) * (h[i * nx + j - 1] - hc);
        }
        if j + 1 < nx {
            q += self.cx(i, j) * (h[i * nx + j + 1] - hc);
        }
        if i > 0 {
            q += self.cy(i - 1, j) * (h[(i - 1) * nx + j] - hc);
        }
        if i + 1 < self.ny {
            q += self.cy(i, j) * (h[(i + 1) * nx + j] - hc);
        }
        q
    }
}

/// Interior operator on unknowns `(i, j)`, `1 ≤ j ≤ nx − 2`.
struct Interior<'a> {
    c: &'a Conductances,
    diag: Vec<f64>,
}

impl<'a> Interior<'a> {
    fn new(c: &'a Conductances) -> Self {
        let (ny, nx) = (c.ny, c.nx);
        let mut diag = Vec::with_capacity(ny * (nx - 2));
        for i in 0..ny {
            for j in 1..nx - 1 {
                let mut d = c.cx(i, j - 1) + c.cx(i, j);
                if i > 0 {
                    d += c.cy(i - 1, j);
                }
                if i + 1 < ny {
                    d += c.cy(i, j);
                }
                diag.push(d);
            }
        }
        Interior { c, diag }
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let (ny, nx) = (self.c.ny, self.c.nx);
        let w = nx - 2;
        for i in 0..ny {
            for jj in 0..w {
                let j = jj + 1;
                let u = i * w + jj;
                let mut v = self.diag[u] * x[u];
                if jj > 0 {
                    v -= self.c.cx(i, j - 1) * x[u - 1];
                }
                if jj + 1 < w {
                    v -= self.c.cx(i, j) * x[u + 1];
                }
                if i > 0 {
                    v -= self.c.cy(i - 1, j) * x[u - w];
                }
                if i + 1 < ny {
                    v -= self.c.cy(i, j) * x[u + w];
                }
                y[u] = v;
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Preconditioned CG from a zero start. Returns the solution and the final
/// relative residual.
fn pcg(op: &Interior<'_>, b: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&op.diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut rel = 1.0;
    for _ in 0..max_iter {
        op.apply(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        rel = dot(&r, &r).sqrt() / bnorm;
        if rel <= tol {
            // Confirm against the true residual; recursion drift can hide error.
            op.apply(&x, &mut ap);
            let true_rel = b.iter().zip(&ap).map(|(b, a)| (b - a) * (b - a)).sum::<f64>().sqrt() / bnorm;
            if true_rel <= tol {
                return Ok(x);
            }
            r.iter_mut().zip(b.iter().zip(&ap)).for_each(|(r, (b, a))| *r = b - a);
        }
        for k in 0..n {
            z[k] = r[k] / op.diag[k];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual: rel,
    })
}

/// Solve for steady heads on facies grid `m`.
pub fn assemble_and_solve(m: &BinaryField, cfg: &FlowConfig) -> Result<HeadField> {
    let (ny, nx) = m.dims();
    cfg.validate(ny, nx)?;
    let c = Conductances::new(m, cfg);
    let op = Interior::new(&c);
    let w = nx - 2;
    let mut b = vec![0.0; ny * w];
    for i in 0..ny {
        b[i * w] += c.cx(i, 0) * cfg.h_left;
        b[i * w + w - 1] += c.cx(i, nx - 2) * cfg.h_right;
    }
    if let Some(well) = &cfg.well {
        b[well.row * w + well.col - 1] -= well.rate;
    }
    let x = pcg(&op, &b, cfg.tol, 50 * ny * nx)?;
    let mut h = Vec::with_capacity(ny * nx);
    for i in 0..ny {
        h.push(cfg.h_left);
        h.extend_from_slice(&x[i * w..(i + 1) * w]);
        h.push(cfg.h_right);
    }
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { name: "heads".into() });
    }
    if cfg.well_rate() >= 0.0 {
        // Maximum principle: without injection no head exceeds the boundary.
        let top = cfg.h_left.max(cfg.h_right);
        let slack = 1e-6 * (1.0 + top.abs());
        if let Some(v) = h.iter().find(|&&v| v > top + slack) {
            return Err(Error::Numeric(format!("head {v} exceeds boundary maximum {top}")));
        }
    }
    ContinuousField::from_vec(ny, nx, h)
}

/// Water budget of a solved head field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowBudget {
    /// Net flow entering the interior through both fixed-head columns.
    pub boundary_inflow: f64,
    pub well_rate: f64,
    /// Largest `|net inflow − withdrawal|` over non-boundary cells.
    pub max_cell_imbalance: f64,
}

pub fn budget(m: &BinaryField, cfg: &FlowConfig, h: &HeadField) -> Result<FlowBudget> {
    let (ny, nx) = m.dims();
    cfg.validate(ny, nx)?;
    if !m.same_dims(h) {
        return Err(dim_err!("heads are {}×{}, field {ny}×{nx}", h.ny(), h.nx()));
    }
    let c = Conductances::new(m, cfg);
    let hv = h.as_slice();
    let mut boundary_inflow = 0.0;
    for i in 0..ny {
        boundary_inflow += c.cx(i, 0) * (hv[i * nx] - hv[i * nx + 1]);
        boundary_inflow += c.cx(i, nx - 2) * (hv[i * nx + nx - 1] - hv[i * nx + nx - 2]);
    }
    let mut max_cell_imbalance: f64 = 0.0;
    for i in 0..ny {
        for j in 1..nx - 1 {
            let sink = match &cfg.well {
                Some(w) if w.row == i && w.col == j => w.rate,
                _ => 0.0,
            };
            max_cell_imbalance = max_cell_imbalance.max((c.net_inflow(hv, i, j) - sink).abs());
        }
    }
    Ok(FlowBudget {
        boundary_inflow,
        well_rate: cfg.well_rate(),
        max_cell_imbalance,
    })
}

/// Heads at `points`, in the given order.
pub fn observe(h: &HeadField, points: &[(usize, usize)]) -> Result<Vec<f64>> {
    points
        .iter()
        .map(|&(r, c)| {
            if r < h.ny() && c < h.nx() {
                Ok(h.get(r, c))
            } else {
                Err(dim_err!("observation point ({r}, {c}) outside {}×{} grid", h.ny(), h.nx()))
            }
        })
        .collect()
}

/// `observe(assemble_and_solve(m, cfg), cfg.obs_points)`.
pub fn forward(m: &BinaryField, cfg: &FlowConfig) -> Result<Vec<f64>> {
    observe(&assemble_and_solve(m, cfg)?, &cfg.obs_points)
}

pub fn rmse(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    (a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64).sqrt()
}

/// Measured heads with their noise level.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    pub locations: Vec<(usize, usize)>,
    pub values: Vec<f64>,
    pub sigma_e: f64,
    /// RMSE of the noise actually added, when known.
    pub noise_rmse: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct ObsRow {
    row: usize,
    col: usize,
    value: f64,
}

impl ObservationSet {
    pub fn new(locations: Vec<(usize, usize)>, values: Vec<f64>, sigma_e: f64) -> Result<Self> {
        if locations.len() != values.len() {
            return Err(dim_err!("{} locations but {} values", locations.len(), values.len()));
        }
        if !(sigma_e > 0.0) || !sigma_e.is_finite() {
            return Err(Error::Config(format!("noise level must be positive, got {sigma_e}")));
        }
        Ok(ObservationSet {
            locations,
            values,
            sigma_e,
            noise_rmse: None,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// CSV with header `row,col,value`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for (&(row, col), &value) in self.locations.iter().zip(&self.values) {
            w.serialize(ObsRow { row, col, value })?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path, sigma_e: f64) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let mut locations = Vec::new();
        let mut values = Vec::new();
        for rec in r.deserialize() {
            let rec: ObsRow = rec?;
            locations.push((rec.row, rec.col));
            values.push(rec.value);
        }
        ObservationSet::new(locations, values, sigma_e)
    }
}

/// Add iid `N(0, σ_e²)` noise to exact observations.
pub fn corrupt(values: &[f64], locations: &[(usize, usize)], sigma_e: f64, seed: u64) -> Result<ObservationSet> {
    let mut set = ObservationSet::new(locations.to_vec(), values.to_vec(), sigma_e)?;
    let mut r = rng::seeded(seed);
    let mut sq = 0.0;
    for v in &mut set.values {
        let e: f64 = sigma_e * r.sample::<f64, _>(StandardNormal);
        *v += e;
        sq += e * e;
    }
    set.noise_rmse = (!values.is_empty()).then(|| (sq / values.len() as f64).sqrt());
    Ok(set)
}

/// Mean RMSE between prior draws' simulated data and `truth_obs`, in units
/// of `sigma_e`.
pub fn snr(prior_draws: &[BinaryField], cfg: &FlowConfig, truth_obs: &[f64], sigma_e: f64) -> Result<f64> {
    if prior_draws.len() < 10 {
        return Err(Error::Config(format!("need at least 10 prior draws, got {}", prior_draws.len())));
    }
    if !(sigma_e > 0.0) {
        return Err(Error::Config("noise level must be positive".into()));
    }
    let mut total = 0.0;
    for m in prior_draws {
        let sim = forward(m, cfg)?;
        if sim.len() != truth_obs.len() {
            return Err(dim_err!("{} simulated values vs {} observations", sim.len(), truth_obs.len()));
        }
        total += rmse(&sim, truth_obs);
    }
    Ok(total / prior_draws.len() as f64 / sigma_e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn no_well(cfg: &mut FlowConfig) {
        cfg.well = None;
    }

    fn random_field(ny: usize, nx: usize, seed: u64) -> BinaryField {
        let mut r = rng::seeded(seed);
        BinaryField::from_vec(ny, nx, (0..ny * nx).map(|_| r.random_bool(0.3) as u8).collect()).unwrap()
    }

    #[test]
    fn linear_profile_without_well() {
        let m = BinaryField::zeros(4, 11).unwrap();
        let mut cfg = FlowConfig::standard(4, 11, 1).unwrap();
        no_well(&mut cfg);
        cfg.h_left = 1.0;
        cfg.h_right = 0.0;
        let h = assemble_and_solve(&m, &cfg).unwrap();
        for i in 0..4 {
            for j in 0..11 {
                assert!((h.get(i, j) - (1.0 - j as f64 / 10.0)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn lattice_arithmetic() {
        assert_eq!(lattice_positions(100, 7).unwrap(), vec![13, 25, 37, 49, 61, 73, 85]);
        assert_eq!(lattice_positions(32, 5).unwrap(), vec![5, 10, 15, 20, 25]);
        assert!(lattice_positions(3, 5).is_err());
        let pts = lattice_points(100, 100, 7).unwrap();
        assert_eq!(pts.len(), 49);
        assert_eq!(pts[0], (13, 13));
        assert_eq!(pts[1], (13, 25));
    }

    #[test]
    fn observe_dirichlet_and_bounds() {
        let m = random_field(6, 8, 1);
        let cfg = FlowConfig::standard(6, 8, 2).unwrap();
        let h = assemble_and_solve(&m, &cfg).unwrap();
        assert_eq!(observe(&h, &[(3, 0)]).unwrap(), vec![cfg.h_left]);
        assert!(observe(&h, &[(6, 0)]).is_err());
    }

    #[test]
    fn well_in_boundary_column_is_rejected() {
        let m = BinaryField::zeros(5, 5).unwrap();
        let mut cfg = FlowConfig::standard(5, 5, 1).unwrap();
        cfg.well = Some(Well { row: 2, col: 0, rate: 1e-3 });
        assert!(assemble_and_solve(&m, &cfg).is_err());
    }

    #[test]
    fn corrupt_is_seeded_and_scaled() {
        let vals = vec![1.0; 2000];
        let locs = vec![(0, 0); 2000];
        let a = corrupt(&vals, &locs, 0.02, 5).unwrap();
        let b = corrupt(&vals, &locs, 0.02, 5).unwrap();
        assert_eq!(a, b);
        let r = a.noise_rmse.unwrap();
        assert!((r - 0.02).abs() < 0.002, "{r}");
        let tiny = corrupt(&vals, &locs, 1e-300, 1).unwrap();
        assert!(tiny.values.iter().all(|&v| v == 1.0));
        assert!(corrupt(&vals, &locs, 0.0, 1).is_err());
    }

    #[test]
    fn snr_of_self_draw_term_is_zero() {
        let cfg = FlowConfig::standard(12, 12, 3).unwrap();
        let draws: Vec<_> = (0..10).map(|s| random_field(12, 12, s)).collect();
        let truth = forward(&draws[0], &cfg).unwrap();
        assert_eq!(rmse(&forward(&draws[0], &cfg).unwrap(), &truth), 0.0);
        assert!(snr(&draws, &cfg, &truth, 0.02).unwrap() > 0.0);
        assert!(snr(&draws[..9], &cfg, &truth, 0.02).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn mass_balance_holds(seed in 0u64..1000, ny in 3usize..20, nx in 3usize..20) {
            let m = random_field(ny, nx, seed);
            let mut cfg = FlowConfig::standard(ny, nx, 1).unwrap();
            cfg.well = Some(Well { row: ny / 2, col: nx / 2, rate: WELL_RATE });
            let h = assemble_and_solve(&m, &cfg).unwrap();
            let b = budget(&m, &cfg, &h).unwrap();
            prop_assert!((b.boundary_inflow - WELL_RATE).abs() / WELL_RATE < 1e-8);
            prop_assert!(b.max_cell_imbalance < 1e-10 * WELL_RATE);
        }

        #[test]
        fn more_pumping_lowers_heads(seed in 0u64..1000) {
            let m = random_field(10, 10, seed);
            let mut cfg = FlowConfig::standard(10, 10, 2).unwrap();
            let low = assemble_and_solve(&m, &cfg).unwrap();
            cfg.well.as_mut().unwrap().rate *= 2.0;
            let high = assemble_and_solve(&m, &cfg).unwrap();
            for (a, b) in low.as_slice().iter().zip(high.as_slice()) {
                prop_assert!(*b <= *a + 1e-12);
            }
        }

        #[test]
        fn relabeling_symmetry(seed in 0u64..1000) {
            let m = random_field(9, 11, seed);
            let cfg = FlowConfig::standard(9, 11, 2).unwrap();
            let mut swapped = cfg.clone();
            swapped.k_facies = [cfg.k_facies[1], cfg.k_facies[0]];
            let a = assemble_and_solve(&m, &cfg).unwrap();
            let b = assemble_and_solve(&m.complement(), &swapped).unwrap();
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                prop_assert!((x - y).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn repeated_solves_agree() {
        let m = random_field(15, 15, 3);
        let cfg = FlowConfig::standard(15, 15, 3).unwrap();
        assert_eq!(assemble_and_solve(&m, &cfg).unwrap(), assemble_and_solve(&m, &cfg).unwrap());
    }
}
