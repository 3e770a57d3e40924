//! Bayesian inversion in the latent space: Gaussian likelihood, a
//! multi-chain differential-evolution sampler with an archive of past states
//! (parallel-direction and snooker jumps, adaptive crossover), convergence
//! diagnostics and posterior summaries.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::flow::{self, FlowConfig, ObservationSet};
use crate::grid::BinaryField;
use crate::metrics::{self, CfEnvelope};
use crate::rng::{self, Rng};
use crate::vae::{LatentVector, VaeModel, DEFAULT_RELOOPS, DEFAULT_THRESHOLD};

/// Half-width of the uniform prior box.
pub const PRIOR_BOUND: f64 = 5.0;

/// `ℓ = −(N/2) ln 2π − N ln σ_e − ½ σ_e⁻² Σ r²` for `n` residuals whose
/// squares sum to `sum_sq`.
pub fn gaussian_loglik(sum_sq: f64, n: usize, sigma_e: f64) -> f64 {
    let n = n as f64;
    -0.5 * n * (2.0 * PI).ln() - n * sigma_e.ln() - 0.5 * sum_sq / (sigma_e * sigma_e)
}

/// `(ℓ, rmse)` of simulated data against observations.
pub fn loglik_of(sim: &[f64], obs: &ObservationSet) -> Result<(f64, f64)> {
    if sim.len() != obs.values.len() || sim.is_empty() {
        return Err(dim_err!("{} simulated values vs {} observations", sim.len(), obs.values.len()));
    }
    let sum_sq: f64 = sim.iter().zip(&obs.values).map(|(s, d)| (d - s) * (d - s)).sum();
    let n = sim.len();
    Ok((gaussian_loglik(sum_sq, n, obs.sigma_e), (sum_sq / n as f64).sqrt()))
}

/// Likelihood of one latent vector: generate the facies field, solve flow,
/// compare at the observation points.
pub fn log_likelihood(theta: &[f64], model: &VaeModel, flowcfg: &FlowConfig, obs: &ObservationSet) -> Result<(f64, f64)> {
    if theta.iter().any(|t| t.abs() > PRIOR_BOUND) {
        return Err(Error::Contract(format!("theta outside [−{PRIOR_BOUND}, {PRIOR_BOUND}]")));
    }
    let m = model.generate(&LatentVector::new(theta.to_vec())?, DEFAULT_RELOOPS, DEFAULT_THRESHOLD)?;
    loglik_of(&flow::forward(&m, flowcfg)?, obs)
}

/// Outcome of one likelihood evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub loglik: f64,
    pub rmse: f64,
    /// The forward model failed; `loglik` is −∞.
    pub failed: bool,
}

impl Evaluation {
    pub fn ok(loglik: f64, rmse: f64) -> Self {
        Evaluation { loglik, rmse, failed: false }
    }

    pub fn failure() -> Self {
        Evaluation {
            loglik: f64::NEG_INFINITY,
            rmse: f64::INFINITY,
            failed: true,
        }
    }
}

/// A log-likelihood over `[−5, 5]^d`, evaluated for a batch of points at a
/// time so that all chains' proposals share one forward pass.
pub trait Target: Sync {
    fn dim(&self) -> usize;
    fn evaluate(&self, thetas: &[Vec<f64>]) -> Vec<Evaluation>;
}

/// Generate with the VAE, then simulate flow.
pub struct FlowTarget<'a> {
    pub model: &'a VaeModel,
    pub flow: &'a FlowConfig,
    pub obs: &'a ObservationSet,
    pub reloops: usize,
    pub threshold: f64,
}

impl<'a> FlowTarget<'a> {
    pub fn new(model: &'a VaeModel, flow: &'a FlowConfig, obs: &'a ObservationSet) -> Self {
        FlowTarget {
            model,
            flow,
            obs,
            reloops: DEFAULT_RELOOPS,
            threshold: DEFAULT_THRESHOLD,
        }
    }

    pub fn fields(&self, thetas: &[Vec<f64>]) -> Result<Vec<BinaryField>> {
        let zs = thetas
            .iter()
            .map(|t| LatentVector::new(t.clone()))
            .collect::<Result<Vec<_>>>()?;
        self.model.generate_batch(&zs, self.reloops, self.threshold)
    }
}

impl Target for FlowTarget<'_> {
    fn dim(&self) -> usize {
        self.model.latent_dim()
    }

    fn evaluate(&self, thetas: &[Vec<f64>]) -> Vec<Evaluation> {
        let Ok(fields) = self.fields(thetas) else {
            return vec![Evaluation::failure(); thetas.len()];
        };
        fields
            .par_iter()
            .map(|m| match flow::forward(m, self.flow).and_then(|sim| loglik_of(&sim, self.obs)) {
                Ok((l, r)) => Evaluation::ok(l, r),
                Err(_) => Evaluation::failure(),
            })
            .collect()
    }
}

/// Independent Gaussian log-density `−½ Σ ((θ − μ)/σ)²`, used to calibrate
/// the sampler. The reported "rmse" is the root-mean-square standardized
/// deviation.
pub struct GaussianTarget {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Target for GaussianTarget {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn evaluate(&self, thetas: &[Vec<f64>]) -> Vec<Evaluation> {
        thetas
            .iter()
            .map(|t| {
                let ss: f64 = t
                    .iter()
                    .zip(self.mean.iter().zip(&self.sd))
                    .map(|(x, (m, s))| ((x - m) / s).powi(2))
                    .sum();
                Evaluation::ok(-0.5 * ss, (ss / t.len() as f64).sqrt())
            })
            .collect()
    }
}

/// Flat likelihood: the sampler then targets the prior.
pub struct ConstantTarget {
    pub dim: usize,
}

impl Target for ConstantTarget {
    fn dim(&self) -> usize {
        self.dim
    }

    fn evaluate(&self, thetas: &[Vec<f64>]) -> Vec<Evaluation> {
        vec![Evaluation::ok(0.0, 0.0); thetas.len()]
    }
}

/// Prior on the latent vector; both are truncated to `[−5, 5]^d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Prior {
    Uniform,
    Normal,
}

impl Prior {
    fn log_density(self, theta: &[f64]) -> f64 {
        match self {
            Prior::Uniform => 0.0,
            Prior::Normal => -0.5 * theta.iter().map(|t| t * t).sum::<f64>(),
        }
    }

    fn draw(self, d: usize, rng: &mut Rng) -> Vec<f64> {
        (0..d)
            .map(|_| match self {
                Prior::Uniform => rng.random_range(-PRIOR_BOUND..PRIOR_BOUND),
                Prior::Normal => reflect(rng.sample(StandardNormal), -PRIOR_BOUND, PRIOR_BOUND),
            })
            .collect()
    }
}

/// Sampler settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DreamConfig {
    pub n_chains: usize,
    pub n_iters: usize,
    /// Chains' states are appended to the archive every this many iterations.
    pub archive_period: usize,
    /// Initial archive size; `None` means `10 · d`.
    pub initial_archive: Option<usize>,
    pub snooker_prob: f64,
    /// Probability of a unit jump rate (mode hopping).
    pub unit_gamma_prob: f64,
    pub n_cr: usize,
    /// Crossover probabilities adapt during this leading fraction of the run.
    pub adapt_fraction: f64,
    /// Half-width of the multiplicative jitter `e`.
    pub jitter: f64,
    /// Standard deviation of the additive noise `ε`.
    pub eps_sd: f64,
    pub prior: Prior,
    /// Abort when a chain sees this many forward failures in a row.
    pub max_consecutive_failures: usize,
}

impl Default for DreamConfig {
    fn default() -> Self {
        DreamConfig {
            n_chains: 4,
            n_iters: 10_000,
            archive_period: 10,
            initial_archive: None,
            snooker_prob: 0.1,
            unit_gamma_prob: 0.2,
            n_cr: 3,
            adapt_fraction: 0.5,
            jitter: 0.05,
            eps_sd: 1e-6,
            prior: Prior::Uniform,
            max_consecutive_failures: 200,
        }
    }
}

impl DreamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_chains < 3 {
            return Err(Error::Config(format!("need at least 3 chains, got {}", self.n_chains)));
        }
        if self.archive_period == 0 || self.n_cr == 0 {
            return Err(Error::Config("archive period and crossover count must be positive".into()));
        }
        let probs = [self.snooker_prob, self.unit_gamma_prob, self.adapt_fraction];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Config("probabilities must lie in [0, 1]".into()));
        }
        if !(self.jitter >= 0.0) || !(self.eps_sd >= 0.0) {
            return Err(Error::Config("jitter and noise scale must be non-negative".into()));
        }
        Ok(())
    }

    fn archive_size(&self, d: usize) -> usize {
        self.initial_archive.unwrap_or(10 * d).max(3)
    }
}

/// Parallel-direction jump rate `2.38 / √(2 δ d′)`.
pub fn jump_rate(delta: usize, d_prime: usize) -> f64 {
    2.38 / ((2 * delta * d_prime) as f64).sqrt()
}

/// Fold `x` back into `[lo, hi]` by mirror reflection at the bounds.
pub fn reflect(mut x: f64, lo: f64, hi: f64) -> f64 {
    let width = hi - lo;
    if !x.is_finite() {
        return lo + 0.5 * width;
    }
    if x < lo || x > hi {
        // Reflection is periodic with period 2·width.
        let mut y = (x - lo).rem_euclid(2.0 * width);
        if y > width {
            y = 2.0 * width - y;
        }
        x = lo + y;
    }
    x
}

/// `θ*_i = θ_i + (1 + e_i) γ (a_i − b_i) + ε_i` on the crossover dimensions
/// `dims`; other components are copied.
pub fn de_jump(theta: &[f64], a: &[f64], b: &[f64], dims: &[usize], gamma: f64, e: &[f64], eps: &[f64]) -> Vec<f64> {
    let mut out = theta.to_vec();
    for (k, &i) in dims.iter().enumerate() {
        out[i] += (1.0 + e[k]) * gamma * (a[i] - b[i]) + eps[k];
    }
    out
}

/// A proposed point and the bookkeeping its acceptance needs.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub theta: Vec<f64>,
    /// Crossover index used by a parallel-direction jump.
    pub cr_index: Option<usize>,
    /// Log of the snooker acceptance correction (0 for parallel jumps).
    pub log_correction: f64,
}

fn distinct_indices(n: usize, k: usize, rng: &mut Rng) -> Vec<usize> {
    rand::seq::index::sample(rng, n, k).into_vec()
}

/// Draw a proposal for a chain at `theta` from archive `z`.
pub fn propose(theta: &[f64], z: &[Vec<f64>], cr_probs: &[f64], cfg: &DreamConfig, rng: &mut Rng) -> Result<Proposal> {
    let d = theta.len();
    if z.len() < 3 {
        return Err(Error::Contract(format!("archive holds {} states, need at least 3", z.len())));
    }
    let (lo, hi) = (-PRIOR_BOUND, PRIOR_BOUND);
    if rng.random_bool(cfg.snooker_prob) {
        let idx = distinct_indices(z.len(), 3, rng);
        let (zc, z1, z2) = (&z[idx[0]], &z[idx[1]], &z[idx[2]]);
        let u: Vec<f64> = theta.iter().zip(zc).map(|(t, c)| t - c).collect();
        let uu: f64 = u.iter().map(|v| v * v).sum();
        if uu == 0.0 {
            return Ok(Proposal { theta: theta.to_vec(), cr_index: None, log_correction: 0.0 });
        }
        let proj = |v: &[f64]| v.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>() / uu;
        let step = rng.random_range(1.2..2.2) * (proj(z1) - proj(z2));
        let prop: Vec<f64> = theta
            .iter()
            .zip(&u)
            .map(|(t, ui)| reflect(t + step * ui, lo, hi))
            .collect();
        let norm_new: f64 = prop.iter().zip(zc).map(|(p, c)| (p - c) * (p - c)).sum::<f64>().sqrt();
        let log_correction = (d as f64 - 1.0) * (norm_new.ln() - 0.5 * uu.ln());
        return Ok(Proposal { theta: prop, cr_index: None, log_correction });
    }
    let cr_index = sample_index(cr_probs, rng);
    let cr = (cr_index + 1) as f64 / cr_probs.len() as f64;
    let mut dims: Vec<usize> = (0..d).filter(|_| rng.random::<f64>() < cr).collect();
    if dims.is_empty() {
        dims.push(rng.random_range(0..d));
    }
    let gamma = if rng.random_bool(cfg.unit_gamma_prob) {
        1.0
    } else {
        jump_rate(1, dims.len())
    };
    let idx = distinct_indices(z.len(), 2, rng);
    let e: Vec<f64> = dims.iter().map(|_| rng.random_range(-cfg.jitter..=cfg.jitter)).collect();
    let eps: Vec<f64> = dims.iter().map(|_| cfg.eps_sd * rng.sample::<f64, _>(StandardNormal)).collect();
    let mut prop = de_jump(theta, &z[idx[0]], &z[idx[1]], &dims, gamma, &e, &eps);
    for v in &mut prop {
        *v = reflect(*v, lo, hi);
    }
    Ok(Proposal { theta: prop, cr_index: Some(cr_index), log_correction: 0.0 })
}

fn sample_index(probs: &[f64], rng: &mut Rng) -> usize {
    let u: f64 = rng.random::<f64>() * probs.iter().sum::<f64>();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Metropolis rule `accept with min(1, exp(log_ratio))`; non-finite ratios
/// from a failed proposal are rejected.
pub fn metropolis_accept(log_ratio: f64, rng: &mut Rng) -> bool {
    if log_ratio.is_nan() || log_ratio == f64::NEG_INFINITY {
        return false;
    }
    log_ratio >= 0.0 || rng.random::<f64>() < log_ratio.exp()
}

/// Current state of one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    pub theta: Vec<f64>,
    #[serde(with = "float_text")]
    pub loglik: f64,
    #[serde(with = "float_text")]
    pub rmse: f64,
    pub log_prior: f64,
    pub iter: usize,
}

/// Round-trips any `f64`, infinities included, through its decimal text.
mod float_text {
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        String::deserialize(d)?.parse().map_err(D::Error::custom)
    }
}

/// One stored sample.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub rmse: f64,
    pub loglik: f64,
    pub theta: Vec<f64>,
}

/// Resumable sampler state apart from traces and archive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Checkpoint {
    seed: u64,
    iter: usize,
    chains: Vec<ChainState>,
    cr_probs: Vec<f64>,
    cr_jump: Vec<f64>,
    cr_count: Vec<u64>,
    accepted: Vec<u64>,
    proposed: Vec<u64>,
    failures: Vec<usize>,
    /// ChaCha word positions of the chain streams.
    rng_words: Vec<String>,
}

/// Multi-chain archive sampler. Chain `c` draws from stream `c + 1` of the
/// master seed and stream 0 fills the initial archive, so runs are
/// reproducible regardless of thread count.
pub struct Sampler<'t, T: Target + ?Sized> {
    target: &'t T,
    pub cfg: DreamConfig,
    seed: u64,
    iter: usize,
    chains: Vec<ChainState>,
    archive: Vec<Vec<f64>>,
    traces: Vec<Vec<TraceRow>>,
    cr_probs: Vec<f64>,
    cr_jump: Vec<f64>,
    cr_count: Vec<u64>,
    accepted: Vec<u64>,
    proposed: Vec<u64>,
    failures: Vec<usize>,
    rngs: Vec<Rng>,
}

impl<'t, T: Target + ?Sized> Sampler<'t, T> {
    pub fn new(target: &'t T, cfg: DreamConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let d = target.dim();
        if d == 0 {
            return Err(Error::Config("target has no parameters".into()));
        }
        let mut arng = rng::stream(seed, 0);
        let archive: Vec<Vec<f64>> = (0..cfg.archive_size(d)).map(|_| cfg.prior.draw(d, &mut arng)).collect();
        let mut rngs: Vec<Rng> = (0..cfg.n_chains).map(|c| rng::stream(seed, c as u64 + 1)).collect();
        let thetas: Vec<Vec<f64>> = rngs.iter_mut().map(|r| cfg.prior.draw(d, r)).collect();
        let evals = target.evaluate(&thetas);
        let chains = thetas
            .into_iter()
            .zip(evals)
            .map(|(theta, ev)| ChainState {
                log_prior: cfg.prior.log_density(&theta),
                theta,
                loglik: ev.loglik,
                rmse: ev.rmse,
                iter: 0,
            })
            .collect::<Vec<_>>();
        let n = cfg.n_chains;
        let traces = chains
            .iter()
            .map(|c| {
                vec![TraceRow {
                    iter: 0,
                    rmse: c.rmse,
                    loglik: c.loglik,
                    theta: c.theta.clone(),
                }]
            })
            .collect();
        Ok(Sampler {
            target,
            seed,
            iter: 0,
            chains,
            archive,
            traces,
            cr_probs: vec![1.0 / cfg.n_cr as f64; cfg.n_cr],
            cr_jump: vec![0.0; cfg.n_cr],
            cr_count: vec![0; cfg.n_cr],
            accepted: vec![0; n],
            proposed: vec![0; n],
            failures: vec![0; n],
            rngs,
            cfg,
        })
    }

    pub fn iteration(&self) -> usize {
        self.iter
    }

    pub fn chains(&self) -> &[ChainState] {
        &self.chains
    }

    pub fn archive(&self) -> &[Vec<f64>] {
        &self.archive
    }

    pub fn traces(&self) -> &[Vec<TraceRow>] {
        &self.traces
    }

    pub fn crossover_probs(&self) -> &[f64] {
        &self.cr_probs
    }

    /// One iteration for every chain.
    pub fn step(&mut self) -> Result<()> {
        let d = self.target.dim();
        // All chains read the archive as it stood at the start of the
        // iteration.
        let snapshot = &self.archive[..];
        let mut proposals = Vec::with_capacity(self.chains.len());
        for (c, chain) in self.chains.iter().enumerate() {
            proposals.push(propose(&chain.theta, snapshot, &self.cr_probs, &self.cfg, &mut self.rngs[c])?);
        }
        let thetas: Vec<Vec<f64>> = proposals.iter().map(|p| p.theta.clone()).collect();
        let evals = self.target.evaluate(&thetas);
        let adapting = (self.iter as f64) < self.cfg.adapt_fraction * self.cfg.n_iters as f64;
        let sd = if adapting { chain_spread(&self.chains, d) } else { Vec::new() };
        self.iter += 1;
        for (c, (prop, ev)) in proposals.into_iter().zip(evals).enumerate() {
            let chain = &mut self.chains[c];
            self.proposed[c] += 1;
            let log_prior = self.cfg.prior.log_density(&prop.theta);
            let ratio = ev.loglik + log_prior - chain.loglik - chain.log_prior + prop.log_correction;
            let accept = !ev.failed && metropolis_accept(ratio, &mut self.rngs[c]);
            if ev.failed {
                self.failures[c] += 1;
                if self.failures[c] >= self.cfg.max_consecutive_failures {
                    return Err(Error::Numeric(format!(
                        "chain {c} hit {} consecutive forward failures at iteration {}",
                        self.failures[c], self.iter
                    )));
                }
            } else {
                self.failures[c] = 0;
            }
            if let (true, Some(m)) = (adapting, prop.cr_index) {
                let jump: f64 = if accept {
                    prop.theta
                        .iter()
                        .zip(&chain.theta)
                        .zip(&sd)
                        .map(|((a, b), s)| if *s > 0.0 { ((a - b) / s).powi(2) } else { 0.0 })
                        .sum()
                } else {
                    0.0
                };
                self.cr_jump[m] += jump;
                self.cr_count[m] += 1;
            }
            if accept {
                self.accepted[c] += 1;
                chain.theta = prop.theta;
                chain.loglik = ev.loglik;
                chain.rmse = ev.rmse;
                chain.log_prior = log_prior;
            }
            chain.iter = self.iter;
            self.traces[c].push(TraceRow {
                iter: self.iter,
                rmse: chain.rmse,
                loglik: chain.loglik,
                theta: chain.theta.clone(),
            });
        }
        if self.iter.is_multiple_of(self.cfg.archive_period) {
            self.archive.extend(self.chains.iter().map(|c| c.theta.clone()));
            if adapting {
                self.update_crossover();
            }
        }
        Ok(())
    }

    fn update_crossover(&mut self) {
        if self.cr_count.contains(&0) {
            return;
        }
        let rates: Vec<f64> = self
            .cr_jump
            .iter()
            .zip(&self.cr_count)
            .map(|(j, &n)| j / n as f64)
            .collect();
        let total: f64 = rates.iter().sum();
        if total > 0.0 {
            // Keep every crossover value reachable.
            let floor = 0.02;
            let raw: Vec<f64> = rates.iter().map(|r| (r / total).max(floor)).collect();
            let s: f64 = raw.iter().sum();
            self.cr_probs = raw.into_iter().map(|p| p / s).collect();
        }
    }

    /// Advance to `cfg.n_iters` total iterations.
    pub fn run(&mut self) -> Result<()> {
        while self.iter < self.cfg.n_iters {
            self.step()?;
        }
        Ok(())
    }

    pub fn acceptance_rates(&self) -> Vec<f64> {
        self.accepted
            .iter()
            .zip(&self.proposed)
            .map(|(&a, &p)| if p == 0 { 0.0 } else { a as f64 / p as f64 })
            .collect()
    }

    pub fn record(&self) -> RunRecord {
        let theta_traces: Vec<Vec<Vec<f64>>> = self
            .traces
            .iter()
            .map(|t| t.iter().map(|r| r.theta.clone()).collect())
            .collect();
        RunRecord {
            dim: self.target.dim(),
            seed: self.seed,
            config: self.cfg.clone(),
            traces: self.traces.clone(),
            acceptance: self.acceptance_rates(),
            rhat: gelman_rubin(&theta_traces, 0.5).unwrap_or_default(),
            archive_len: self.archive.len(),
            cr_probs: self.cr_probs.clone(),
        }
    }

    /// Persist traces, archive, diagnostics and the resume checkpoint.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(CONFIG_FILE), serde_json::to_string_pretty(&self.cfg)?)?;
        let d = self.target.dim();
        for (c, trace) in self.traces.iter().enumerate() {
            write_trace(&dir.join(format!("chain_{c}.csv")), trace, d)?;
        }
        let mut w = csv::Writer::from_path(dir.join(ARCHIVE_FILE))?;
        w.write_record((0..d).map(|i| format!("theta_{i}")))?;
        for z in &self.archive {
            w.write_record(z.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        write_rhat(&dir.join(RHAT_FILE), &self.record().rhat)?;
        let ck = Checkpoint {
            seed: self.seed,
            iter: self.iter,
            chains: self.chains.clone(),
            cr_probs: self.cr_probs.clone(),
            cr_jump: self.cr_jump.clone(),
            cr_count: self.cr_count.clone(),
            accepted: self.accepted.clone(),
            proposed: self.proposed.clone(),
            failures: self.failures.clone(),
            rng_words: self.rngs.iter().map(|r| r.get_word_pos().to_string()).collect(),
        };
        fs::write(dir.join(STATE_FILE), serde_json::to_string(&ck)?)?;
        Ok(())
    }

    /// Reload a run saved by [`Sampler::save`]. `cfg` replaces the stored
    /// configuration (typically to raise `n_iters`); the chain count must
    /// match.
    pub fn resume(target: &'t T, dir: &Path, cfg: Option<DreamConfig>) -> Result<Self> {
        let stored: DreamConfig = serde_json::from_str(&fs::read_to_string(dir.join(CONFIG_FILE))?)?;
        let cfg = cfg.unwrap_or(stored.clone());
        cfg.validate()?;
        if cfg.n_chains != stored.n_chains || cfg.n_cr != stored.n_cr {
            return Err(Error::Config("resumed run must keep the chain and crossover counts".into()));
        }
        let state_path = dir.join(STATE_FILE);
        let ck: Checkpoint = serde_json::from_str(&fs::read_to_string(&state_path)?)?;
        let d = target.dim();
        if ck.chains.iter().any(|c| c.theta.len() != d) || ck.chains.len() != cfg.n_chains {
            return Err(Error::format("run state", &state_path, "chain dimensions do not match the target"));
        }
        let mut rngs = Vec::with_capacity(cfg.n_chains);
        for (c, w) in ck.rng_words.iter().enumerate() {
            let pos: u128 = w
                .parse()
                .map_err(|e| Error::format("run state", &state_path, format!("rng position: {e}")))?;
            let mut r = rng::stream(ck.seed, c as u64 + 1);
            r.set_word_pos(pos);
            rngs.push(r);
        }
        let traces = (0..cfg.n_chains)
            .map(|c| read_trace(&dir.join(format!("chain_{c}.csv")), d))
            .collect::<Result<Vec<_>>>()?;
        let mut archive = Vec::new();
        let mut r = csv::Reader::from_path(dir.join(ARCHIVE_FILE))?;
        for rec in r.records() {
            let rec = rec?;
            let z = rec
                .iter()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::format("archive", dir.join(ARCHIVE_FILE), e))?;
            if z.len() != d {
                return Err(Error::format("archive", dir.join(ARCHIVE_FILE), "wrong row length"));
            }
            archive.push(z);
        }
        Ok(Sampler {
            target,
            cfg,
            seed: ck.seed,
            iter: ck.iter,
            chains: ck.chains,
            archive,
            traces,
            cr_probs: ck.cr_probs,
            cr_jump: ck.cr_jump,
            cr_count: ck.cr_count,
            accepted: ck.accepted,
            proposed: ck.proposed,
            failures: ck.failures,
            rngs,
        })
    }
}

fn chain_spread(chains: &[ChainState], d: usize) -> Vec<f64> {
    let n = chains.len() as f64;
    (0..d)
        .map(|i| {
            let m = chains.iter().map(|c| c.theta[i]).sum::<f64>() / n;
            (chains.iter().map(|c| (c.theta[i] - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        })
        .collect()
}

pub const CONFIG_FILE: &str = "config.json";
pub const STATE_FILE: &str = "state.json";
pub const ARCHIVE_FILE: &str = "archive.csv";
pub const RHAT_FILE: &str = "rhat.csv";

/// CSV with header `iter,rmse,loglik,theta_0..theta_{d-1}`.
pub fn write_trace(path: &Path, trace: &[TraceRow], d: usize) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["iter".to_string(), "rmse".into(), "loglik".into()];
    header.extend((0..d).map(|i| format!("theta_{i}")));
    w.write_record(&header)?;
    for row in trace {
        let mut rec = vec![row.iter.to_string(), row.rmse.to_string(), row.loglik.to_string()];
        rec.extend(row.theta.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace(path: &Path, d: usize) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let bad = |detail: String| Error::format("chain trace", path, detail);
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != 3 + d {
            return Err(bad(format!("expected {} columns, found {}", 3 + d, rec.len())));
        }
        let num = |i: usize| rec[i].parse::<f64>().map_err(|e| bad(e.to_string()));
        out.push(TraceRow {
            iter: rec[0].parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
            rmse: num(1)?,
            loglik: num(2)?,
            theta: (3..3 + d).map(num).collect::<Result<_>>()?,
        });
    }
    Ok(out)
}

/// CSV with header `dim,rhat`; undefined values are blank.
pub fn write_rhat(path: &Path, rhat: &[Option<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["dim", "rhat"])?;
    for (i, r) in rhat.iter().enumerate() {
        w.write_record([i.to_string(), r.map(|v| v.to_string()).unwrap_or_default()])?;
    }
    w.flush()?;
    Ok(())
}

/// Everything a finished run reports.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub dim: usize,
    pub seed: u64,
    pub config: DreamConfig,
    /// Per chain, the initial state followed by one row per iteration.
    pub traces: Vec<Vec<TraceRow>>,
    pub acceptance: Vec<f64>,
    pub rhat: Vec<Option<f64>>,
    pub archive_len: usize,
    pub cr_probs: Vec<f64>,
}

impl RunRecord {
    /// Smallest RMSE each chain visited.
    pub fn best_rmse(&self) -> Vec<f64> {
        self.traces
            .iter()
            .map(|t| t.iter().map(|r| r.rmse).fold(f64::INFINITY, f64::min))
            .collect()
    }

    /// Pooled samples from the last `frac` of every chain, taking every
    /// `thin`-th row.
    pub fn tail_samples(&self, frac: f64, thin: usize) -> Vec<Vec<f64>> {
        let thin = thin.max(1);
        self.traces
            .iter()
            .flat_map(|t| {
                let start = t.len() - ((t.len() as f64 * frac).round() as usize).clamp(1, t.len());
                t[start..].iter().step_by(thin).map(|r| r.theta.clone())
            })
            .collect()
    }
}

/// Run the sampler from scratch for `cfg.n_iters` iterations.
pub fn run_mcmc<T: Target + ?Sized>(target: &T, cfg: DreamConfig, seed: u64) -> Result<RunRecord> {
    let mut s = Sampler::new(target, cfg, seed)?;
    s.run()?;
    Ok(s.record())
}

/// Potential scale reduction per dimension from the samples after the first
/// `burn_frac` of each chain. `traces[c][t][i]` is dimension `i` of chain
/// `c` at step `t`. Dimensions with zero within-chain variance give `None`.
pub fn gelman_rubin(traces: &[Vec<Vec<f64>>], burn_frac: f64) -> Result<Vec<Option<f64>>> {
    let m = traces.len();
    if m < 2 {
        return Err(Error::Config(format!("R-hat needs at least 2 chains, got {m}")));
    }
    let len = traces.iter().map(Vec::len).min().unwrap_or(0);
    let start = (len as f64 * burn_frac).floor() as usize;
    let n = len - start.min(len);
    if n < 10 {
        return Err(Error::Config(format!("R-hat needs at least 10 post-burn samples, got {n}")));
    }
    let d = traces[0][0].len();
    let mut out = Vec::with_capacity(d);
    for i in 0..d {
        let (mut means, mut vars) = (Vec::with_capacity(m), Vec::with_capacity(m));
        for t in traces {
            let xs = &t[t.len() - n..];
            let mean = xs.iter().map(|x| x[i]).sum::<f64>() / n as f64;
            let var = xs.iter().map(|x| (x[i] - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
            means.push(mean);
            vars.push(var);
        }
        let w = vars.iter().sum::<f64>() / m as f64;
        let grand = means.iter().sum::<f64>() / m as f64;
        let b_over_n = means.iter().map(|x| (x - grand).powi(2)).sum::<f64>() / (m as f64 - 1.0);
        let nf = n as f64;
        let var_plus = (nf - 1.0) / nf * w + b_over_n;
        out.push((w > 0.0).then(|| (var_plus / w).sqrt()));
    }
    Ok(out)
}

/// One-sample Kolmogorov–Smirnov test against `U(lo, hi)`. Returns the
/// statistic `D` and its asymptotic p-value.
pub fn ks_uniform(samples: &[f64], lo: f64, hi: f64) -> (f64, f64) {
    let mut xs: Vec<f64> = samples.iter().map(|x| (x - lo) / (hi - lo)).collect();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let d = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let x = x.clamp(0.0, 1.0);
            ((i as f64 + 1.0) / n - x).max(x - i as f64 / n)
        })
        .fold(0.0, f64::max);
    let sn = n.sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    let mut p = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp();
        p += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    (d, p.clamp(0.0, 1.0))
}

/// Posterior summary against a known truth.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSummary {
    pub f_po: f64,
    pub f_pr: f64,
    pub ratio: f64,
    /// 5 %, 50 % and 95 % quantiles of the sampled RMSE.
    pub rmse_quantiles: [f64; 3],
    pub envelopes: Vec<CfEnvelope>,
    pub fields: Vec<BinaryField>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportOptions {
    /// Trailing fraction of every chain treated as posterior.
    pub tail_frac: f64,
    /// Cap on the number of decoded fields.
    pub max_fields: usize,
    pub max_lag: Option<usize>,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            tail_frac: 0.25,
            max_fields: 200,
            max_lag: None,
        }
    }
}

/// Decode posterior samples and score them against `truth`. `prior_fracs`
/// are the prior facies proportions used for `f_PR`.
pub fn posterior_report(
    record: &RunRecord,
    model: &VaeModel,
    truth: &BinaryField,
    prior_fracs: [f64; 2],
    opts: &ReportOptions,
) -> Result<PosteriorSummary> {
    let pooled: usize = record
        .traces
        .iter()
        .map(|t| ((t.len() as f64 * opts.tail_frac).round() as usize).clamp(1, t.len()))
        .sum();
    let thin = pooled.div_ceil(opts.max_fields.max(1)).max(1);
    let thetas = record.tail_samples(opts.tail_frac, thin);
    let zs = thetas
        .into_iter()
        .map(LatentVector::new)
        .collect::<Result<Vec<_>>>()?;
    let fields = model.generate_batch(&zs, DEFAULT_RELOOPS, DEFAULT_THRESHOLD)?;
    posterior_report_fields(record, fields, truth, prior_fracs, opts)
}

/// [`posterior_report`] for already generated posterior fields.
pub fn posterior_report_fields(
    record: &RunRecord,
    fields: Vec<BinaryField>,
    truth: &BinaryField,
    prior_fracs: [f64; 2],
    opts: &ReportOptions,
) -> Result<PosteriorSummary> {
    let f_po = metrics::facies_match(truth, &fields)?;
    let f_pr = metrics::prior_match(prior_fracs, metrics::facies_fractions(std::slice::from_ref(truth))?);
    let mut rmse: Vec<f64> = record
        .traces
        .iter()
        .flat_map(|t| {
            let k = ((t.len() as f64 * opts.tail_frac).round() as usize).clamp(1, t.len());
            t[t.len() - k..].iter().map(|r| r.rmse)
        })
        .collect();
    rmse.sort_by(f64::total_cmp);
    let q = |p: f64| rmse[((rmse.len() - 1) as f64 * p).round() as usize];
    let max_lag = opts
        .max_lag
        .unwrap_or_else(|| metrics::default_max_lag(truth.ny(), truth.nx()));
    Ok(PosteriorSummary {
        f_po,
        f_pr,
        ratio: f_po / f_pr,
        rmse_quantiles: [q(0.05), q(0.5), q(0.95)],
        envelopes: metrics::cf_envelopes(&fields, max_lag)?,
        fields,
    })
}
