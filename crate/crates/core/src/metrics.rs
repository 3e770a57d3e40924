//! Geostatistical quality measures: connectivity functions, multiple-point
//! histograms and their divergence, the space of uncertainty, conditioning
//! accuracy and facies-match scores.

use std::collections::{BTreeMap, VecDeque};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::grid::{BinaryField, HardData};

/// Lag direction of a connectivity curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Direction {
    /// Along a row: offset `(0, h)`.
    #[serde(rename = "x")]
    X,
    /// Along a column: offset `(h, 0)`.
    #[serde(rename = "y")]
    Y,
    /// Diagonal: offset `(h, h)`.
    #[serde(rename = "d_xy")]
    Dxy,
}

impl Direction {
    pub const ALL: [Direction; 3] = [Direction::X, Direction::Y, Direction::Dxy];

    pub fn name(self) -> &'static str {
        match self {
            Direction::X => "x",
            Direction::Y => "y",
            Direction::Dxy => "d_xy",
        }
    }

    /// `(Δrow, Δcol)` of lag `h`.
    pub fn offset(self, h: usize) -> (usize, usize) {
        match self {
            Direction::X => (0, h),
            Direction::Y => (h, 0),
            Direction::Dxy => (h, h),
        }
    }

    /// Number of cells along this direction in an `ny × nx` grid.
    pub fn extent(self, ny: usize, nx: usize) -> usize {
        match self {
            Direction::X => nx,
            Direction::Y => ny,
            Direction::Dxy => ny.min(nx),
        }
    }
}

/// Connectivity function of one facies along one direction.
#[derive(Debug, Clone, PartialEq)]
pub struct CfCurve {
    pub facies: u8,
    pub direction: Direction,
    pub lags: Vec<usize>,
    /// `None` where no same-facies pair exists at that lag.
    pub prob: Vec<Option<f64>>,
    /// The facies does not occur in the field.
    pub empty: bool,
}

/// 4-connected component label of every cell of `facies`; other cells get
/// `u32::MAX`.
pub fn component_labels(m: &BinaryField, facies: u8) -> Vec<u32> {
    let (ny, nx) = m.dims();
    let v = m.as_slice();
    let mut labels = vec![u32::MAX; ny * nx];
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for seed in 0..ny * nx {
        if v[seed] != facies || labels[seed] != u32::MAX {
            continue;
        }
        labels[seed] = next;
        queue.push_back(seed);
        while let Some(i) = queue.pop_front() {
            let (r, c) = (i / nx, i % nx);
            let mut visit = |j: usize| {
                if v[j] == facies && labels[j] == u32::MAX {
                    labels[j] = next;
                    queue.push_back(j);
                }
            };
            if r > 0 {
                visit(i - nx);
            }
            if r + 1 < ny {
                visit(i + nx);
            }
            if c > 0 {
                visit(i - 1);
            }
            if c + 1 < nx {
                visit(i + 1);
            }
        }
        next += 1;
    }
    labels
}

/// Probability that two cells of `facies` at lag `h` along `direction` lie
/// in the same 4-connected component, for `h = 0..=max_lag`.
pub fn connectivity_function(m: &BinaryField, facies: u8, direction: Direction, max_lag: usize) -> Result<CfCurve> {
    let labels = component_labels(m, facies);
    cf_from_labels(m, &labels, facies, direction, max_lag)
}

fn cf_from_labels(
    m: &BinaryField,
    labels: &[u32],
    facies: u8,
    direction: Direction,
    max_lag: usize,
) -> Result<CfCurve> {
    let (ny, nx) = m.dims();
    if max_lag >= direction.extent(ny, nx) {
        return Err(dim_err!(
            "max lag {max_lag} must be below the {} extent {} of a {ny}×{nx} field",
            direction.name(),
            direction.extent(ny, nx)
        ));
    }
    let empty = labels.iter().all(|&l| l == u32::MAX);
    let mut prob = Vec::with_capacity(max_lag + 1);
    for h in 0..=max_lag {
        if empty {
            prob.push(None);
            continue;
        }
        let (dr, dc) = direction.offset(h);
        let (mut pairs, mut joined) = (0u64, 0u64);
        for r in 0..ny - dr {
            for c in 0..nx - dc {
                let a = labels[r * nx + c];
                let b = labels[(r + dr) * nx + c + dc];
                if a != u32::MAX && b != u32::MAX {
                    pairs += 1;
                    joined += u64::from(a == b);
                }
            }
        }
        prob.push((pairs > 0).then(|| joined as f64 / pairs as f64));
    }
    Ok(CfCurve {
        facies,
        direction,
        lags: (0..=max_lag).collect(),
        prob,
        empty,
    })
}

/// Curves for both facies and all three directions, facies-major.
pub fn all_curves(m: &BinaryField, max_lag: usize) -> Result<Vec<CfCurve>> {
    let mut out = Vec::with_capacity(6);
    for facies in [0u8, 1] {
        let labels = component_labels(m, facies);
        for d in Direction::ALL {
            out.push(cf_from_labels(m, &labels, facies, d, max_lag)?);
        }
    }
    Ok(out)
}

/// Largest lag usable in every direction: half the shorter side.
pub fn default_max_lag(ny: usize, nx: usize) -> usize {
    (ny.min(nx) / 2).max(1).min(ny.min(nx) - 1)
}

/// CSV with header `facies,direction,lag,prob`; undefined lags are blank.
pub fn write_cf_csv(curves: &[CfCurve], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["facies", "direction", "lag", "prob"])?;
    for c in curves {
        for (lag, p) in c.lags.iter().zip(&c.prob) {
            w.write_record([
                c.facies.to_string(),
                c.direction.name().to_string(),
                lag.to_string(),
                p.map(|v| v.to_string()).unwrap_or_default(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Pointwise ensemble statistics of one (facies, direction) curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CfEnvelope {
    pub facies: u8,
    pub direction: Direction,
    pub lags: Vec<usize>,
    pub mean: Vec<Option<f64>>,
    pub min: Vec<Option<f64>>,
    pub max: Vec<Option<f64>>,
}

/// Mean, minimum and maximum of each curve over an ensemble, using only the
/// realizations where the lag is defined.
pub fn cf_envelopes(fields: &[BinaryField], max_lag: usize) -> Result<Vec<CfEnvelope>> {
    if fields.is_empty() {
        return Err(Error::Config("empty ensemble".into()));
    }
    let per_field: Vec<Vec<CfCurve>> = fields.par_iter().map(|f| all_curves(f, max_lag)).collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(6);
    for (k, proto) in per_field[0].iter().enumerate() {
        let n = proto.lags.len();
        let mut mean = vec![None; n];
        let mut min = vec![None; n];
        let mut max = vec![None; n];
        for lag in 0..n {
            let vals: Vec<f64> = per_field.iter().filter_map(|c| c[k].prob[lag]).collect();
            if vals.is_empty() {
                continue;
            }
            mean[lag] = Some(vals.iter().sum::<f64>() / vals.len() as f64);
            min[lag] = vals.iter().copied().reduce(f64::min);
            max[lag] = vals.iter().copied().reduce(f64::max);
        }
        out.push(CfEnvelope {
            facies: proto.facies,
            direction: proto.direction,
            lags: proto.lags.clone(),
            mean,
            min,
            max,
        });
    }
    Ok(out)
}

/// Fraction of lags, over all curves, at which the mean of `test` lies
/// outside the min–max band of `reference`. Lags undefined in either are
/// skipped.
pub fn fraction_outside(reference: &[CfEnvelope], test: &[CfEnvelope]) -> Result<f64> {
    let (mut total, mut outside) = (0usize, 0usize);
    for t in test {
        let r = reference
            .iter()
            .find(|r| r.facies == t.facies && r.direction == t.direction)
            .ok_or_else(|| dim_err!("no reference curve for facies {} {}", t.facies, t.direction.name()))?;
        for lag in 0..t.lags.len().min(r.lags.len()) {
            if let (Some(m), Some(lo), Some(hi)) = (t.mean[lag], r.min[lag], r.max[lag]) {
                total += 1;
                outside += usize::from(m < lo - 1e-12 || m > hi + 1e-12);
            }
        }
    }
    if total == 0 {
        return Err(Error::Numeric("no lag is defined in both ensembles".into()));
    }
    Ok(outside as f64 / total as f64)
}

/// CSV with header `facies,direction,lag,mean,min,max`.
pub fn write_envelope_csv(envelopes: &[CfEnvelope], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["facies", "direction", "lag", "mean", "min", "max"])?;
    let fmt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    for e in envelopes {
        for (i, lag) in e.lags.iter().enumerate() {
            w.write_record([
                e.facies.to_string(),
                e.direction.name().to_string(),
                lag.to_string(),
                fmt(e.mean[i]),
                fmt(e.min[i]),
                fmt(e.max[i]),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Side of the square multiple-point template.
pub const TEMPLATE: usize = 4;
/// Number of distinct 4×4 binary patterns.
pub const N_BINS: usize = 1 << (TEMPLATE * TEMPLATE);

/// Sparse multiple-point histogram over 4×4 patterns.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MphVector {
    counts: BTreeMap<u16, u64>,
    total: u64,
}

impl MphVector {
    pub fn from_counts(counts: BTreeMap<u16, u64>) -> Self {
        let total = counts.values().sum();
        MphVector { counts, total }
    }

    pub fn counts(&self) -> &BTreeMap<u16, u64> {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn get(&self, id: u16) -> u64 {
        self.counts.get(&id).copied().unwrap_or(0)
    }

    /// Bin frequencies of the observed patterns.
    pub fn normalized(&self) -> BTreeMap<u16, f64> {
        let t = self.total as f64;
        self.counts.iter().map(|(&k, &c)| (k, c as f64 / t)).collect()
    }

    /// CSV with header `pattern_id,count`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["pattern_id", "count"])?;
        for (id, c) in &self.counts {
            w.write_record([id.to_string(), c.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Slide the 4×4 template over every in-bounds position. Window cell
/// `(i, j)` contributes bit `4i + j` of the pattern id.
pub fn mph(m: &BinaryField) -> Result<MphVector> {
    let (ny, nx) = m.dims();
    if ny < TEMPLATE || nx < TEMPLATE {
        return Err(dim_err!("multiple-point histogram needs at least 4×4 cells, got {ny}×{nx}"));
    }
    let v = m.as_slice();
    let mut counts = BTreeMap::new();
    for r in 0..=ny - TEMPLATE {
        for c in 0..=nx - TEMPLATE {
            let mut id = 0u16;
            for i in 0..TEMPLATE {
                for j in 0..TEMPLATE {
                    id |= u16::from(v[(r + i) * nx + c + j]) << (TEMPLATE * i + j);
                }
            }
            *counts.entry(id).or_insert(0u64) += 1;
        }
    }
    Ok(MphVector::from_counts(counts))
}

/// Symmetrized divergence `½ Σ p ln(p/q) + ½ Σ q ln(q/p)` of two strictly
/// positive distributions.
pub fn js_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(dim_err!("distributions have {} and {} bins", p.len(), q.len()));
    }
    if p.iter().chain(q).any(|&v| !(v > 0.0)) {
        return Err(Error::Numeric("divergence needs strictly positive bins".into()));
    }
    Ok(p.iter().zip(q).map(|(&a, &b)| 0.5 * (a - b) * (a / b).ln()).sum())
}

/// Pseudo-count added to every normalized bin before renormalizing.
pub const SMOOTHING: f64 = 1.0 / (2.0 * N_BINS as f64);

/// [`js_divergence`] of two histograms after adding [`SMOOTHING`] to every
/// one of the 65 536 bins. Bins empty in both contribute nothing, so only
/// the observed patterns are visited.
pub fn js_distance(a: &MphVector, b: &MphVector) -> f64 {
    let norm = 1.0 + SMOOTHING * N_BINS as f64;
    let (ta, tb) = (a.total as f64, b.total as f64);
    let term = |ca: u64, cb: u64| {
        let p = (ca as f64 / ta + SMOOTHING) / norm;
        let q = (cb as f64 / tb + SMOOTHING) / norm;
        0.5 * (p - q) * (p / q).ln()
    };
    let mut d = 0.0;
    for (&id, &ca) in &a.counts {
        d += term(ca, b.get(id));
    }
    for (&id, &cb) in &b.counts {
        if !a.counts.contains_key(&id) {
            d += term(0, cb);
        }
    }
    d
}

/// Mean pairwise [`js_distance`] over all ordered pairs `k ≠ k′`.
pub fn space_of_uncertainty(realizations: &[BinaryField]) -> Result<f64> {
    let hists: Vec<MphVector> = realizations.par_iter().map(mph).collect::<Result<_>>()?;
    space_of_uncertainty_mph(&hists)
}

pub fn space_of_uncertainty_mph(hists: &[MphVector]) -> Result<f64> {
    let k = hists.len();
    if k < 2 {
        return Err(Error::Config(format!("space of uncertainty needs at least 2 realizations, got {k}")));
    }
    let sum: f64 = (0..k)
        .into_par_iter()
        .map(|i| (i + 1..k).map(|j| js_distance(&hists[i], &hists[j])).sum::<f64>())
        .sum();
    // Each unordered pair stands for two ordered terms of the symmetric sum.
    Ok(2.0 * sum / (k * (k - 1)) as f64)
}

/// How well an ensemble reproduces hard data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditioningStats {
    pub frac_all_honored: f64,
    pub frac_at_most_one_wrong: f64,
    /// Fraction of facies-0 data honored over all realizations.
    pub facies0_rate: Option<f64>,
    pub facies1_rate: Option<f64>,
}

pub fn conditioning_accuracy(realizations: &[BinaryField], hard: &HardData) -> Result<ConditioningStats> {
    if realizations.is_empty() || hard.is_empty() {
        return Err(Error::Config("conditioning accuracy needs realizations and hard data".into()));
    }
    let (mut all, mut one) = (0usize, 0usize);
    let mut hit = [0usize; 2];
    let mut seen = [0usize; 2];
    for f in realizations {
        let mut wrong = 0;
        for p in hard.points() {
            if p.row >= f.ny() || p.col >= f.nx() {
                return Err(dim_err!("hard datum ({}, {}) outside {}×{} field", p.row, p.col, f.ny(), f.nx()));
            }
            let ok = f.get(p.row, p.col) == p.facies;
            seen[p.facies as usize] += 1;
            hit[p.facies as usize] += usize::from(ok);
            wrong += usize::from(!ok);
        }
        all += usize::from(wrong == 0);
        one += usize::from(wrong <= 1);
    }
    let n = realizations.len() as f64;
    let rate = |f: usize| (seen[f] > 0).then(|| hit[f] as f64 / seen[f] as f64);
    Ok(ConditioningStats {
        frac_all_honored: all as f64 / n,
        frac_at_most_one_wrong: one as f64 / n,
        facies0_rate: rate(0),
        facies1_rate: rate(1),
    })
}

/// Mean fraction of cells whose facies equals the truth's (`f_PO`).
pub fn facies_match(truth: &BinaryField, ensemble: &[BinaryField]) -> Result<f64> {
    if ensemble.is_empty() {
        return Err(Error::Config("empty ensemble".into()));
    }
    let t = truth.as_slice();
    let mut sum = 0.0;
    for f in ensemble {
        if !f.same_dims(truth) {
            return Err(dim_err!("field {}×{} vs truth {}×{}", f.ny(), f.nx(), truth.ny(), truth.nx()));
        }
        let same = f.as_slice().iter().zip(t).filter(|(a, b)| a == b).count();
        sum += same as f64 / t.len() as f64;
    }
    Ok(sum / ensemble.len() as f64)
}

/// Expected match of an independent prior draw (`f_PR`):
/// `Σ_f prior_f · truth_f`.
pub fn prior_match(prior_fracs: [f64; 2], truth_fracs: [f64; 2]) -> f64 {
    prior_fracs[0] * truth_fracs[0] + prior_fracs[1] * truth_fracs[1]
}

/// `[facies-0, facies-1]` fractions pooled over fields.
pub fn facies_fractions(fields: &[BinaryField]) -> Result<[f64; 2]> {
    let cells: usize = fields.iter().map(|f| f.len()).sum();
    if cells == 0 {
        return Err(Error::Config("empty ensemble".into()));
    }
    let ones: usize = fields.iter().map(|f| f.count_ones()).sum();
    let p1 = ones as f64 / cells as f64;
    Ok([1.0 - p1, p1])
}

/// Quality summary of an ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleReport {
    pub envelopes: Vec<CfEnvelope>,
    pub d_bar_js: f64,
    pub mean_fraction: f64,
    pub conditioning: Option<ConditioningStats>,
}

pub fn ensemble_report(fields: &[BinaryField], max_lag: usize, hard: Option<&HardData>) -> Result<EnsembleReport> {
    Ok(EnsembleReport {
        envelopes: cf_envelopes(fields, max_lag)?,
        d_bar_js: space_of_uncertainty(fields)?,
        mean_fraction: facies_fractions(fields)?[1],
        conditioning: match hard {
            Some(h) if !h.is_empty() => Some(conditioning_accuracy(fields, h)?),
            _ => None,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geostat::{gen_channels, TiConfig};
    use crate::grid::HardDatum;
    use crate::rng;
    use proptest::prelude::*;
    use rand::Rng as _;

    fn field(rows: &[&[u8]]) -> BinaryField {
        BinaryField::from_vec(rows.len(), rows[0].len(), rows.concat()).unwrap()
    }

    fn random_field(ny: usize, nx: usize, p: f64, seed: u64) -> BinaryField {
        let mut r = rng::seeded(seed);
        BinaryField::from_vec(ny, nx, (0..ny * nx).map(|_| r.random_bool(p) as u8).collect()).unwrap()
    }

    #[test]
    fn cf_examples() {
        let ones = BinaryField::filled(6, 7, 1).unwrap();
        for d in Direction::ALL {
            let c = connectivity_function(&ones, 1, d, 4).unwrap();
            assert!(c.prob.iter().all(|&p| p == Some(1.0)));
        }
        let mut two = BinaryField::zeros(3, 8).unwrap();
        two.set(0, 0, 1);
        two.set(0, 5, 1);
        let c = connectivity_function(&two, 1, Direction::X, 5).unwrap();
        assert_eq!(c.prob[5], Some(0.0));
        assert_eq!(c.prob[3], None);
        let none = BinaryField::zeros(4, 4).unwrap();
        let c = connectivity_function(&none, 1, Direction::Y, 2).unwrap();
        assert!(c.empty && c.prob.iter().all(Option::is_none));
        assert!(connectivity_function(&none, 0, Direction::X, 4).is_err());
    }

    #[test]
    fn cf_block_example() {
        let f = field(&[&[1, 1, 0, 0], &[1, 1, 0, 0], &[0, 0, 1, 1], &[0, 0, 1, 1]]);
        let c = connectivity_function(&f, 1, Direction::X, 1).unwrap();
        assert_eq!(c.prob[1], Some(1.0));
        // The blocks touch only diagonally, so diagonal lag-1 pairs across
        // them are disconnected.
        let d = connectivity_function(&f, 1, Direction::Dxy, 1).unwrap();
        assert_eq!(d.prob[1], Some(2.0 / 3.0));
    }

    #[test]
    fn mph_examples() {
        let z = BinaryField::zeros(7, 9).unwrap();
        let h = mph(&z).unwrap();
        assert_eq!(h.counts().len(), 1);
        assert_eq!(h.get(0), 24);
        let o = BinaryField::filled(5, 5, 1).unwrap();
        assert_eq!(mph(&o).unwrap().get(65535), 4);
        let mut f = BinaryField::zeros(4, 5).unwrap();
        f.set(0, 0, 1);
        let h = mph(&f).unwrap();
        assert_eq!((h.get(1), h.get(0), h.total()), (1, 1, 2));
        let mut g = BinaryField::zeros(4, 4).unwrap();
        g.set(1, 2, 1);
        assert_eq!(mph(&g).unwrap().get(1 << 6), 1);
        assert!(mph(&BinaryField::zeros(3, 8).unwrap()).is_err());
    }

    #[test]
    fn two_bin_divergence() {
        let d = js_divergence(&[0.5, 0.5], &[0.9, 0.1]).unwrap();
        let oracle = 0.5 * (0.5 * (0.5f64 / 0.9).ln() + 0.5 * (0.5f64 / 0.1).ln())
            + 0.5 * (0.9 * (0.9f64 / 0.5).ln() + 0.1 * (0.1f64 / 0.5).ln());
        assert!((d - oracle).abs() < 1e-15);
        assert!((d - 0.4394).abs() < 1e-4);
        assert!(js_divergence(&[1.0, 0.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn sparse_distance_matches_dense_smoothed_sum() {
        let a = mph(&random_field(10, 12, 0.3, 1)).unwrap();
        let b = mph(&random_field(10, 12, 0.5, 2)).unwrap();
        let dense = |h: &MphVector| -> Vec<f64> {
            (0..N_BINS)
                .map(|i| (h.get(i as u16) as f64 / h.total() as f64 + SMOOTHING) / 1.5)
                .collect()
        };
        let oracle = js_divergence(&dense(&a), &dense(&b)).unwrap();
        assert!((js_distance(&a, &b) - oracle).abs() < 1e-10);
    }

    #[test]
    fn space_of_uncertainty_examples() {
        let f = random_field(12, 12, 0.3, 3);
        assert_eq!(space_of_uncertainty(&[f.clone(), f.clone(), f.clone()]).unwrap(), 0.0);
        let g = random_field(12, 12, 0.3, 4);
        let d = js_distance(&mph(&f).unwrap(), &mph(&g).unwrap());
        assert!((space_of_uncertainty(&[f.clone(), g]).unwrap() - d).abs() < 1e-15);
        assert!(space_of_uncertainty(&[f]).is_err());
    }

    #[test]
    fn conditioning_examples() {
        let hard = HardData::new(
            vec![HardDatum { row: 0, col: 0, facies: 1 }, HardDatum { row: 2, col: 3, facies: 0 }],
            4,
            4,
        )
        .unwrap();
        let mut good = BinaryField::zeros(4, 4).unwrap();
        good.set(0, 0, 1);
        let s = conditioning_accuracy(&[good.clone(), good.clone()], &hard).unwrap();
        assert_eq!((s.frac_all_honored, s.frac_at_most_one_wrong), (1.0, 1.0));
        assert_eq!((s.facies0_rate, s.facies1_rate), (Some(1.0), Some(1.0)));
        let bad = BinaryField::zeros(4, 4).unwrap();
        let s = conditioning_accuracy(&[good, bad], &hard).unwrap();
        assert_eq!((s.frac_all_honored, s.frac_at_most_one_wrong), (0.5, 1.0));
        assert_eq!(s.facies1_rate, Some(0.5));
    }

    #[test]
    fn facies_match_examples() {
        let t = random_field(8, 8, 0.4, 5);
        assert_eq!(facies_match(&t, std::slice::from_ref(&t)).unwrap(), 1.0);
        assert_eq!(facies_match(&t, &[t.complement()]).unwrap(), 0.0);
        assert!((prior_match([0.7, 0.3], [0.75, 0.25]) - 0.60).abs() < 1e-12);
    }

    #[test]
    fn prior_draw_match_converges_to_prior_expectation() {
        let cfg = TiConfig::default();
        let draws: Vec<_> = (0..201).map(|s| gen_channels(&cfg, 32, 32, &mut rng::seeded(s)).unwrap()).collect();
        let (truth, ensemble) = draws.split_first().unwrap();
        let f_po = facies_match(truth, ensemble).unwrap();
        let f_pr = prior_match(facies_fractions(ensemble).unwrap(), facies_fractions(std::slice::from_ref(truth)).unwrap());
        assert!((f_po - f_pr).abs() < 0.03, "f_PO {f_po} f_PR {f_pr}");
    }

    #[test]
    fn envelopes_and_outside_fraction() {
        let fields: Vec<_> = (0..5).map(|s| random_field(10, 10, 0.5, s)).collect();
        let env = cf_envelopes(&fields, 4).unwrap();
        assert_eq!(env.len(), 6);
        for e in &env {
            for i in 0..e.lags.len() {
                if let (Some(lo), Some(m), Some(hi)) = (e.min[i], e.mean[i], e.max[i]) {
                    assert!(lo <= m + 1e-15 && m <= hi + 1e-15);
                }
            }
        }
        assert_eq!(fraction_outside(&env, &env).unwrap(), 0.0);
        let ones = vec![BinaryField::filled(10, 10, 1).unwrap()];
        let far = cf_envelopes(&ones, 4).unwrap();
        assert!(fraction_outside(&env, &far).unwrap() > 0.0);
    }

    #[test]
    fn csv_outputs_have_headers() {
        let dir = tempfile::tempdir().unwrap();
        let f = random_field(8, 8, 0.5, 1);
        let p = dir.path().join("cf.csv");
        write_cf_csv(&all_curves(&f, 3).unwrap(), &p).unwrap();
        assert!(std::fs::read_to_string(&p).unwrap().starts_with("facies,direction,lag,prob\n"));
        let p = dir.path().join("env.csv");
        write_envelope_csv(&cf_envelopes(std::slice::from_ref(&f), 3).unwrap(), &p).unwrap();
        assert!(std::fs::read_to_string(&p).unwrap().starts_with("facies,direction,lag,mean,min,max\n"));
        let p = dir.path().join("mph.csv");
        mph(&f).unwrap().write_csv(&p).unwrap();
        assert!(std::fs::read_to_string(&p).unwrap().starts_with("pattern_id,count\n"));
    }

    fn brute_cf(f: &BinaryField, facies: u8, d: Direction, h: usize) -> Option<f64> {
        // Union-find over 4-neighbour links, independent of the BFS labeller.
        let (ny, nx) = f.dims();
        let mut parent: Vec<usize> = (0..ny * nx).collect();
        fn find(p: &mut [usize], i: usize) -> usize {
            let mut i = i;
            while p[i] != i {
                p[i] = p[p[i]];
                i = p[i];
            }
            i
        }
        for r in 0..ny {
            for c in 0..nx {
                if f.get(r, c) != facies {
                    continue;
                }
                for (rr, cc) in [(r + 1, c), (r, c + 1)] {
                    if rr < ny && cc < nx && f.get(rr, cc) == facies {
                        let (a, b) = (find(&mut parent, r * nx + c), find(&mut parent, rr * nx + cc));
                        parent[a] = b;
                    }
                }
            }
        }
        let (dr, dc) = d.offset(h);
        let (mut n, mut k) = (0, 0);
        for r in 0..ny {
            for c in 0..nx {
                let (rr, cc) = (r + dr, c + dc);
                if rr < ny && cc < nx && f.get(r, c) == facies && f.get(rr, cc) == facies {
                    n += 1;
                    if find(&mut parent, r * nx + c) == find(&mut parent, rr * nx + cc) {
                        k += 1;
                    }
                }
            }
        }
        (n > 0).then(|| k as f64 / n as f64)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn cf_matches_union_find_and_is_bounded(seed in 0u64..10_000, p in 0.1f64..0.9) {
            let f = random_field(9, 11, p, seed);
            for facies in [0u8, 1] {
                for d in Direction::ALL {
                    let c = connectivity_function(&f, facies, d, 7).unwrap();
                    if !c.empty {
                        prop_assert_eq!(c.prob[0], Some(1.0));
                    }
                    for h in 0..=7 {
                        prop_assert_eq!(c.prob[h], brute_cf(&f, facies, d, h));
                        if let Some(v) = c.prob[h] {
                            prop_assert!((0.0..=1.0).contains(&v));
                        }
                    }
                }
            }
        }

        #[test]
        fn mph_total_and_normalization(seed in 0u64..10_000, ny in 4usize..12, nx in 4usize..12) {
            let h = mph(&random_field(ny, nx, 0.4, seed)).unwrap();
            prop_assert_eq!(h.total() as usize, (ny - 3) * (nx - 3));
            let s: f64 = h.normalized().values().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
        }

        #[test]
        fn js_distance_is_a_symmetric_premetric(a in 0u64..10_000, b in 0u64..10_000) {
            let ha = mph(&random_field(8, 8, 0.4, a)).unwrap();
            let hb = mph(&random_field(8, 8, 0.4, b)).unwrap();
            let d = js_distance(&ha, &hb);
            prop_assert!(d >= 0.0);
            prop_assert!((d - js_distance(&hb, &ha)).abs() < 1e-12);
            prop_assert_eq!(js_distance(&ha, &ha), 0.0);
            if ha != hb {
                prop_assert!(d > 0.0);
            }
        }

        #[test]
        fn space_of_uncertainty_is_permutation_invariant(seed in 0u64..1000) {
            let mut fields: Vec<_> = (0..5).map(|i| random_field(8, 8, 0.4, seed * 10 + i)).collect();
            let a = space_of_uncertainty(&fields).unwrap();
            fields.reverse();
            fields.swap(0, 2);
            let b = space_of_uncertainty(&fields).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
