//! Classical parameterizations for comparison: PCA and truncated DCT
//! generators, and sequential geostatistical resampling (SGR) inversion.

use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::container::Container;
use crate::error::{dim_err, Error, Result};
use crate::flow::ObservationSet;
use crate::geostat::{ds_resimulate, ds_simulate, DsParams, Rect};
use crate::grid::{BinaryField, ContinuousField, HardData};
use crate::inversion::{loglik_of, metropolis_accept};
use crate::nn::Tensor;
use crate::rng::Rng;

pub const PCA_MAGIC: &[u8; 4] = b"PCAB";
pub const DCT_MAGIC: &[u8; 4] = b"DCTB";
pub const DEFAULT_PCA_COMPONENTS: usize = 70;
pub const DEFAULT_DCT_COEFFICIENTS: usize = 250;

/// Binarize so that the `round(fraction · n)` largest values become facies 1.
/// Ties are broken by cell index.
pub fn threshold_to_fraction(values: &ContinuousField, fraction: f64) -> BinaryField {
    let v = values.as_slice();
    let k = ((fraction.clamp(0.0, 1.0) * v.len() as f64).round() as usize).min(v.len());
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
    let mut out = vec![0u8; v.len()];
    for &i in &order[..k] {
        out[i] = 1;
    }
    BinaryField::from_vec(values.ny(), values.nx(), out).expect("same dims")
}

fn check_set(set: &[BinaryField]) -> Result<(usize, usize)> {
    let first = set.first().ok_or_else(|| Error::Config("training set is empty".into()))?;
    let dims = first.dims();
    if let Some(f) = set.iter().find(|f| f.dims() != dims) {
        return Err(dim_err!("training set mixes {}×{} and {}×{} fields", dims.0, dims.1, f.ny(), f.nx()));
    }
    Ok(dims)
}

#[derive(Serialize, Deserialize)]
struct BasisMeta {
    ny: usize,
    nx: usize,
    n_train: usize,
}

/// Mean-centred principal components of a training set.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaBasis {
    pub ny: usize,
    pub nx: usize,
    pub mean: Vec<f64>,
    /// Row `j` is component `j`, unit length.
    pub components: Vec<Vec<f64>>,
    /// Singular values of the centred data matrix, non-increasing.
    pub singular_values: Vec<f64>,
    pub n_train: usize,
}

/// Fit the top `n_components` principal components by SVD of the centred
/// `images × pixels` matrix.
pub fn pca_fit(set: &[BinaryField], n_components: usize) -> Result<PcaBasis> {
    let (ny, nx) = check_set(set)?;
    let (k, p) = (set.len(), ny * nx);
    if n_components > k.min(p) {
        return Err(Error::Config(format!(
            "{n_components} components requested from {k} images of {p} pixels"
        )));
    }
    let mut mean = vec![0.0; p];
    for f in set {
        for (m, &v) in mean.iter_mut().zip(f.as_slice()) {
            *m += f64::from(v);
        }
    }
    mean.iter_mut().for_each(|m| *m /= k as f64);
    let mut data = Vec::with_capacity(k * p);
    for f in set {
        data.extend(f.as_slice().iter().zip(&mean).map(|(&v, m)| f64::from(v) - m));
    }
    let x = DMatrix::from_row_slice(k, p, &data);
    let svd = x
        .try_svd(false, true, 1e-14, 10_000)
        .ok_or_else(|| Error::Numeric("SVD did not converge".into()))?;
    let s = &svd.singular_values;
    if s.iter().all(|&v| v <= 1e-12) {
        return Err(Error::Numeric("training set has rank zero after centring".into()));
    }
    let vt = svd.v_t.expect("right singular vectors requested");
    let components = (0..n_components)
        .map(|j| vt.row(j).iter().copied().collect())
        .collect();
    Ok(PcaBasis {
        ny,
        nx,
        mean,
        components,
        singular_values: s.iter().take(n_components).copied().collect(),
        n_train: k,
    })
}

impl PcaBasis {
    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn project(&self, f: &BinaryField) -> Result<Vec<f64>> {
        if f.dims() != (self.ny, self.nx) {
            return Err(dim_err!("field {}×{} vs basis {}×{}", f.ny(), f.nx(), self.ny, self.nx));
        }
        Ok(self
            .components
            .iter()
            .map(|c| {
                c.iter()
                    .zip(f.as_slice().iter().zip(&self.mean))
                    .map(|(ci, (&v, m))| ci * (f64::from(v) - m))
                    .sum()
            })
            .collect())
    }

    pub fn reconstruct(&self, coeffs: &[f64]) -> Result<ContinuousField> {
        if coeffs.len() != self.n_components() {
            return Err(dim_err!("{} coefficients for {} components", coeffs.len(), self.n_components()));
        }
        let mut out = self.mean.clone();
        for (c, comp) in coeffs.iter().zip(&self.components) {
            for (o, v) in out.iter_mut().zip(comp) {
                *o += c * v;
            }
        }
        ContinuousField::from_vec(self.ny, self.nx, out)
    }

    /// Standard deviation of the training coefficients along each component.
    pub fn coefficient_sd(&self) -> Vec<f64> {
        let dof = (self.n_train.max(2) - 1) as f64;
        self.singular_values.iter().map(|s| s / dof.sqrt()).collect()
    }

    pub fn to_container(&self) -> Container {
        let meta = BasisMeta { ny: self.ny, nx: self.nx, n_train: self.n_train };
        let mut c = Container::new(PCA_MAGIC, serde_json::to_string(&meta).expect("meta serializes"));
        let p = self.ny * self.nx;
        c.push("mean", Tensor::new(vec![p], self.mean.clone()).expect("mean size"));
        c.push(
            "components",
            Tensor::new(vec![self.n_components(), p], self.components.concat()).expect("component size"),
        );
        c.push(
            "singular_values",
            Tensor::new(vec![self.n_components()], self.singular_values.clone()).expect("value count"),
        );
        c
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container().write(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let c = Container::read(path, PCA_MAGIC)?;
        let meta: BasisMeta = serde_json::from_str(&c.meta).map_err(|e| Error::format("PCA basis", path, e))?;
        let get = |n: &str| c.get(n).ok_or_else(|| Error::format("PCA basis", path, format!("missing `{n}`")));
        let p = meta.ny * meta.nx;
        let (mean, comps, sv) = (get("mean")?, get("components")?, get("singular_values")?);
        let n = sv.len();
        if mean.shape() != [p] || comps.shape() != [n, p] {
            return Err(Error::format("PCA basis", path, "tensor shapes do not match the grid"));
        }
        Ok(PcaBasis {
            ny: meta.ny,
            nx: meta.nx,
            mean: mean.data().to_vec(),
            components: comps.data().chunks(p.max(1)).take(n).map(<[f64]>::to_vec).collect(),
            singular_values: sv.data().to_vec(),
            n_train: meta.n_train,
        })
    }
}

/// Draw coefficients `c_j ~ N(0, s_j² / (K − 1))`, reconstruct and binarize
/// to `target_fraction`.
pub fn pca_generate(basis: &PcaBasis, target_fraction: f64, rng: &mut Rng) -> Result<BinaryField> {
    let coeffs: Vec<f64> = basis
        .coefficient_sd()
        .iter()
        .map(|s| s * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Ok(threshold_to_fraction(&basis.reconstruct(&coeffs)?, target_fraction))
}

/// Orthonormal DCT-II matrix: `C[k][n] = a_k cos(π (2n + 1) k / 2N)`.
fn dct_matrix(n: usize) -> Vec<f64> {
    let mut c = vec![0.0; n * n];
    for k in 0..n {
        let a = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
        for i in 0..n {
            c[k * n + i] = a * (std::f64::consts::PI * (2 * i + 1) as f64 * k as f64 / (2 * n) as f64).cos();
        }
    }
    c
}

/// `C_ny · X · C_nxᵀ` (forward) or `C_nyᵀ · Y · C_nx` (inverse).
fn dct2(values: &[f64], ny: usize, nx: usize, inverse: bool) -> Vec<f64> {
    let (cy, cx) = (dct_matrix(ny), dct_matrix(nx));
    let at = |c: &[f64], n: usize, r: usize, s: usize| if inverse { c[s * n + r] } else { c[r * n + s] };
    // Rows first: T[i][l] = Σ_j X[i][j] · M_x[l][j].
    let mut t = vec![0.0; ny * nx];
    for i in 0..ny {
        for l in 0..nx {
            t[i * nx + l] = (0..nx).map(|j| values[i * nx + j] * at(&cx, nx, l, j)).sum();
        }
    }
    let mut out = vec![0.0; ny * nx];
    for k in 0..ny {
        for l in 0..nx {
            out[k * nx + l] = (0..ny).map(|i| at(&cy, ny, k, i) * t[i * nx + l]).sum();
        }
    }
    out
}

/// Orthonormal 2D DCT-II coefficients, row-major.
pub fn dct_forward(f: &ContinuousField) -> ContinuousField {
    let (ny, nx) = f.dims();
    ContinuousField::from_vec(ny, nx, dct2(f.as_slice(), ny, nx, false)).expect("same dims")
}

pub fn dct_inverse(c: &ContinuousField) -> ContinuousField {
    let (ny, nx) = c.dims();
    ContinuousField::from_vec(ny, nx, dct2(c.as_slice(), ny, nx, true)).expect("same dims")
}

/// Retained DCT coefficients with their empirical ranges.
#[derive(Debug, Clone, PartialEq)]
pub struct DctBasis {
    pub ny: usize,
    pub nx: usize,
    /// Row-major coefficient indices, by decreasing mean magnitude.
    pub indices: Vec<usize>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub n_train: usize,
}

/// Keep the `n_keep` coefficients with the largest mean absolute value over
/// the training set, recording each one's min and max.
pub fn dct_fit(set: &[BinaryField], n_keep: usize) -> Result<DctBasis> {
    let (ny, nx) = check_set(set)?;
    let p = ny * nx;
    if n_keep == 0 || n_keep > p {
        return Err(Error::Config(format!("cannot retain {n_keep} of {p} coefficients")));
    }
    let coeffs: Vec<Vec<f64>> = set.iter().map(|f| dct2(&f.to_f64().into_vec(), ny, nx, false)).collect();
    let mut mean_abs = vec![0.0; p];
    for c in &coeffs {
        for (m, v) in mean_abs.iter_mut().zip(c) {
            *m += v.abs();
        }
    }
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| mean_abs[b].total_cmp(&mean_abs[a]).then(a.cmp(&b)));
    order.truncate(n_keep);
    let lower = order
        .iter()
        .map(|&i| coeffs.iter().map(|c| c[i]).fold(f64::INFINITY, f64::min))
        .collect();
    let upper = order
        .iter()
        .map(|&i| coeffs.iter().map(|c| c[i]).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    Ok(DctBasis { ny, nx, indices: order, lower, upper, n_train: set.len() })
}

impl DctBasis {
    pub fn to_container(&self) -> Container {
        let meta = BasisMeta { ny: self.ny, nx: self.nx, n_train: self.n_train };
        let mut c = Container::new(DCT_MAGIC, serde_json::to_string(&meta).expect("meta serializes"));
        let n = self.indices.len();
        let idx = self.indices.iter().map(|&i| i as f64).collect();
        c.push("indices", Tensor::new(vec![n], idx).expect("index count"));
        c.push("lower", Tensor::new(vec![n], self.lower.clone()).expect("bound count"));
        c.push("upper", Tensor::new(vec![n], self.upper.clone()).expect("bound count"));
        c
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container().write(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let c = Container::read(path, DCT_MAGIC)?;
        let meta: BasisMeta = serde_json::from_str(&c.meta).map_err(|e| Error::format("DCT basis", path, e))?;
        let get = |n: &str| c.get(n).ok_or_else(|| Error::format("DCT basis", path, format!("missing `{n}`")));
        let (idx, lo, hi) = (get("indices")?, get("lower")?, get("upper")?);
        let p = meta.ny * meta.nx;
        if idx.len() != lo.len() || idx.len() != hi.len() || idx.data().iter().any(|&i| i < 0.0 || i as usize >= p) {
            return Err(Error::format("DCT basis", path, "inconsistent coefficient tables"));
        }
        Ok(DctBasis {
            ny: meta.ny,
            nx: meta.nx,
            indices: idx.data().iter().map(|&i| i as usize).collect(),
            lower: lo.data().to_vec(),
            upper: hi.data().to_vec(),
            n_train: meta.n_train,
        })
    }
}

/// Sample every retained coefficient uniformly within its range, zero the
/// rest, invert and binarize to `target_fraction`.
pub fn dct_generate(basis: &DctBasis, target_fraction: f64, rng: &mut Rng) -> Result<BinaryField> {
    let mut c = vec![0.0; basis.ny * basis.nx];
    for (k, &i) in basis.indices.iter().enumerate() {
        let (lo, hi) = (basis.lower[k], basis.upper[k]);
        c[i] = if hi > lo { rng.random_range(lo..hi) } else { lo };
    }
    let coeffs = ContinuousField::from_vec(basis.ny, basis.nx, c)?;
    Ok(threshold_to_fraction(&dct_inverse(&coeffs), target_fraction))
}

/// SGR settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgrConfig {
    /// Share of the domain redrawn per step.
    pub frac_resim: f64,
    pub iters: usize,
    /// Store every `thin`-th state.
    pub thin: usize,
    pub ds: DsParams,
}

impl Default for SgrConfig {
    fn default() -> Self {
        SgrConfig {
            frac_resim: 0.1,
            iters: 1000,
            thin: 10,
            ds: DsParams::default(),
        }
    }
}

/// One Metropolis step of an SGR chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgrStep {
    pub iter: usize,
    /// RMSE of the chain state after the step.
    pub rmse: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgrRun {
    pub trace: Vec<SgrStep>,
    /// `(iteration, state)` every `thin` steps, starting with the initial state.
    pub states: Vec<(usize, BinaryField)>,
    pub current: BinaryField,
    /// Steps whose forward evaluation failed; they count as rejections.
    pub failures: Vec<usize>,
}

impl SgrRun {
    /// Best RMSE seen up to each step.
    pub fn best_rmse(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.trace
            .iter()
            .map(|s| {
                best = best.min(s.rmse);
                best
            })
            .collect()
    }

    /// CSV with header `iter,rmse,accepted`.
    pub fn write_trace(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for s in &self.trace {
            w.serialize(s)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Metropolis chain that redraws a random rectangle covering `frac_resim`
/// of the domain by direct sampling, conditioned on the rest of the field
/// and on `hard`, and accepts by the Gaussian likelihood ratio. Starts from
/// `init` or from an unconditional simulation.
pub fn sgr_invert<F>(
    ti: &BinaryField,
    hard: &HardData,
    forward_op: F,
    obs: &ObservationSet,
    dims: (usize, usize),
    init: Option<BinaryField>,
    cfg: &SgrConfig,
    rng: &mut Rng,
) -> Result<SgrRun>
where
    F: Fn(&BinaryField) -> Result<Vec<f64>>,
{
    if !(cfg.frac_resim > 0.0 && cfg.frac_resim <= 1.0) {
        return Err(Error::Config(format!("resimulation fraction {} not in (0, 1]", cfg.frac_resim)));
    }
    let (ny, nx) = dims;
    let mut current = match init {
        Some(f) if f.dims() == dims => f,
        Some(f) => return Err(dim_err!("initial field {}×{} vs {ny}×{nx}", f.ny(), f.nx())),
        None => ds_simulate(ti, ny, nx, hard, &cfg.ds, rng)?,
    };
    let (mut cur_ll, mut cur_rmse) = loglik_of(&forward_op(&current)?, obs)?;
    let thin = cfg.thin.max(1);
    let mut run = SgrRun {
        trace: Vec::with_capacity(cfg.iters),
        states: vec![(0, current.clone())],
        current: current.clone(),
        failures: Vec::new(),
    };
    for iter in 1..=cfg.iters {
        let rect = Rect::random(ny, nx, cfg.frac_resim, rng);
        let prop = ds_resimulate(ti, &current, &rect, hard, &cfg.ds, rng)?;
        let evaluated = forward_op(&prop).and_then(|sim| loglik_of(&sim, obs));
        let accepted = match evaluated {
            Ok((ll, rmse)) => {
                let ok = metropolis_accept(ll - cur_ll, rng);
                if ok {
                    current = prop;
                    cur_ll = ll;
                    cur_rmse = rmse;
                }
                ok
            }
            Err(_) => {
                run.failures.push(iter);
                false
            }
        };
        run.trace.push(SgrStep { iter, rmse: cur_rmse, accepted });
        if iter % thin == 0 {
            run.states.push((iter, current.clone()));
        }
    }
    run.current = current;
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geostat::{gen_channels, TiConfig};
    use crate::rng;
    use proptest::prelude::*;

    fn channel_set(n: usize, size: usize) -> Vec<BinaryField> {
        (0..n)
            .map(|s| gen_channels(&TiConfig::default(), size, size, &mut rng::seeded(s as u64)).unwrap())
            .collect()
    }

    #[test]
    fn pca_zero_components_reconstructs_mean() {
        let set = channel_set(8, 16);
        let b = pca_fit(&set, 0).unwrap();
        let r = b.reconstruct(&[]).unwrap();
        assert_eq!(r.as_slice(), &b.mean[..]);
        let g = pca_generate(&b, 0.3, &mut rng::seeded(1)).unwrap();
        let mean = ContinuousField::from_vec(16, 16, b.mean.clone()).unwrap();
        assert_eq!(g, threshold_to_fraction(&mean, 0.3));
    }

    #[test]
    fn pca_full_rank_reconstructs_training_images() {
        let set = channel_set(10, 16);
        let b = pca_fit(&set, 10).unwrap();
        for f in &set {
            let r = b.reconstruct(&b.project(f).unwrap()).unwrap();
            for (a, v) in r.as_slice().iter().zip(f.as_slice()) {
                assert!((a - f64::from(*v)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn pca_components_orthonormal_and_sorted() {
        let set = channel_set(12, 16);
        let b = pca_fit(&set, 8).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                let d: f64 = b.components[i].iter().zip(&b.components[j]).map(|(x, y)| x * y).sum();
                assert!((d - if i == j { 1.0 } else { 0.0 }).abs() < 1e-8);
            }
        }
        assert!(b.singular_values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn pca_rejects_degenerate_sets() {
        let f = BinaryField::zeros(8, 8).unwrap();
        assert!(matches!(pca_fit(&[f.clone(), f.clone(), f], 1), Err(Error::Numeric(_))));
        assert!(pca_fit(&channel_set(3, 16), 4).is_err());
        assert!(pca_fit(&[], 0).is_err());
    }

    #[test]
    fn pca_generation_matches_target_fraction() {
        let b = pca_fit(&channel_set(20, 16), 10).unwrap();
        let mut r = rng::seeded(2);
        for _ in 0..10 {
            let f = pca_generate(&b, 0.3, &mut r).unwrap();
            assert!((f.fraction() - 0.3).abs() <= 0.05);
        }
    }

    #[test]
    fn dct_constant_field_has_only_dc() {
        let f = ContinuousField::from_vec(6, 5, vec![2.0; 30]).unwrap();
        let c = dct_forward(&f);
        assert!((c.as_slice()[0] - 2.0 * 30f64.sqrt()).abs() < 1e-12);
        assert!(c.as_slice()[1..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn dct_basis_generation_and_persistence() {
        let set = channel_set(10, 16);
        let b = dct_fit(&set, 40).unwrap();
        assert_eq!(b.indices[0], 0);
        let mut sorted = b.indices.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 40);
        let f = dct_generate(&b, 0.3, &mut rng::seeded(3)).unwrap();
        assert!((f.fraction() - 0.3).abs() <= 0.05);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.dctb");
        b.save(&p).unwrap();
        assert_eq!(DctBasis::load(&p).unwrap(), b);
        assert!(PcaBasis::load(&p).is_err());
        let pca = pca_fit(&set, 5).unwrap();
        let p = dir.path().join("b.pcab");
        pca.save(&p).unwrap();
        assert_eq!(PcaBasis::load(&p).unwrap(), pca);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn dct_roundtrip_and_parseval(ny in 1usize..12, nx in 1usize..12, seed in 0u64..1000) {
            let mut r = rng::seeded(seed);
            let f = ContinuousField::from_vec(ny, nx, (0..ny * nx).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap();
            let c = dct_forward(&f);
            let back = dct_inverse(&c);
            for (a, b) in back.as_slice().iter().zip(f.as_slice()) {
                prop_assert!((a - b).abs() < 1e-10);
            }
            let e1: f64 = f.as_slice().iter().map(|v| v * v).sum();
            let e2: f64 = c.as_slice().iter().map(|v| v * v).sum();
            prop_assert!((e1 - e2).abs() < 1e-10);
        }
    }

    #[test]
    fn sgr_accepts_identical_and_uphill_moves() {
        // A constant forward model makes every proposal tie with the
        // current state, so every step is accepted.
        let ti = gen_channels(&TiConfig::default(), 32, 32, &mut rng::seeded(1)).unwrap();
        let obs = ObservationSet::new(vec![(0, 0)], vec![1.0], 0.1).unwrap();
        let cfg = SgrConfig { iters: 20, thin: 5, ..Default::default() };
        let run = sgr_invert(&ti, &HardData::empty(), |_| Ok(vec![1.0]), &obs, (16, 16), None, &cfg, &mut rng::seeded(2))
            .unwrap();
        assert!(run.trace.iter().all(|s| s.accepted));
        assert_eq!(run.states.len(), 5);
    }

    #[test]
    fn sgr_best_rmse_is_monotone_and_failures_are_rejected() {
        let ti = gen_channels(&TiConfig::default(), 32, 32, &mut rng::seeded(1)).unwrap();
        let obs = ObservationSet::new(vec![(0, 0)], vec![0.3], 0.05).unwrap();
        let fwd = |f: &BinaryField| {
            if f.get(0, 0) == 1 && f.get(0, 1) == 1 {
                Err(Error::Numeric("synthetic failure".into()))
            } else {
                Ok(vec![f.fraction()])
            }
        };
        let cfg = SgrConfig { iters: 200, ..Default::default() };
        let init = BinaryField::zeros(16, 16).unwrap();
        let run = sgr_invert(&ti, &HardData::empty(), fwd, &obs, (16, 16), Some(init), &cfg, &mut rng::seeded(3)).unwrap();
        let best = run.best_rmse();
        assert!(best.windows(2).all(|w| w[1] <= w[0]));
        for &i in &run.failures {
            assert!(!run.trace[i - 1].accepted);
        }
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sgr.csv");
        run.write_trace(&p).unwrap();
        assert!(std::fs::read_to_string(p).unwrap().starts_with("iter,rmse,accepted\n"));
    }
}
