use std::fs;
use std::path::{Path, PathBuf};

use geodr::baselines::{
    dct_fit, dct_generate, pca_fit, pca_generate, sgr_invert, SgrConfig, SgrRun, DEFAULT_DCT_COEFFICIENTS,
    DEFAULT_PCA_COMPONENTS,
};
use geodr::error::{Error, Result};
use geodr::flow::{self, assemble_and_solve, budget, corrupt, observe, FlowConfig, ObservationSet, Well};
use geodr::geostat::{
    build_training_set, read_training_set, write_training_set, DsParams, ManifestRow, Source, TiConfig,
};
use geodr::inversion::{
    posterior_report_fields, DreamConfig, FlowTarget, Prior, ReportOptions, Sampler,
};
use geodr::metrics::{self, default_max_lag, ensemble_report, fraction_outside, write_envelope_csv};
use geodr::nn::AdamState;
use geodr::rng;
use geodr::vae::{read_loss_csv, train_with, write_loss_csv, Architecture, TrainConfig, VaeModel};
use geodr::{BinaryField, HardData};
use rayon::prelude::*;

use crate::export::{sibling, write_pgm, write_summary};
use crate::settings::{Section, Settings};
use crate::{BaselineArgs, FlowArgs, GenTiArgs, InvertArgs, MetricsArgs, SampleArgs, TrainArgs};

/// Resolved configuration written into every output directory.
pub const CONFIG_FILE: &str = "config.ini";

const FLOW: Section = (
    "flow",
    &[
        ("k0", "1e-4"),
        ("k1", "1e-2"),
        ("cell_size", "1"),
        ("thickness", "1"),
        ("h_left", "1"),
        // Empty: a 0.01 gradient across the grid.
        ("h_right", ""),
        ("well", "true"),
        // Empty: the central cell.
        ("well_row", ""),
        ("well_col", ""),
        ("well_rate", "1e-3"),
        ("obs_lattice", "5"),
        ("tol", "1e-13"),
    ],
);

const DS_KEYS: [(&str, &str); 3] = [("ds_neighbors", "20"), ("ds_threshold", "0.05"), ("ds_scan", "0.5")];

const GEN_TI: &[Section] = &[(
    "gen-ti",
    &[
        ("mode", "object"),
        ("count", "100"),
        ("ny", "64"),
        ("nx", "64"),
        ("seed", "0"),
        ("ti", ""),
        ("hard", ""),
        ("width_min", "3"),
        ("width_max", "5"),
        ("angle_min", "-15"),
        ("angle_max", "15"),
        ("target_fraction", "0.3"),
        DS_KEYS[0],
        DS_KEYS[1],
        DS_KEYS[2],
    ],
)];

const TRAIN: &[Section] = &[(
    "train",
    &[
        ("data", ""),
        ("epochs", "30"),
        ("alpha", "20"),
        ("latent", "50"),
        ("batch_size", "8"),
        ("lr", "1e-3"),
        ("seed", "0"),
        ("conv1", "16"),
        ("conv2", "32"),
        ("dense", "256"),
    ],
)];

const SAMPLE: &[Section] = &[(
    "sample",
    &[("model", ""), ("count", "100"), ("reloops", "10"), ("threshold", "0.5"), ("seed", "0")],
)];

const METRICS: &[Section] = &[(
    "metrics",
    &[("set_a", ""), ("set_b", ""), ("hard", ""), ("max_lag", ""), ("max_fields", "200")],
)];

const FLOW_CMD: &[Section] = &[
    ("forward", &[("field", ""), ("noise_sd", "0"), ("noise_seed", "0")]),
    FLOW,
];

const INVERT: &[Section] = &[
    (
        "invert",
        &[
            ("model", ""),
            ("obs", ""),
            ("chains", "4"),
            ("iters", "10000"),
            ("seed", "0"),
            ("sigma_e", "0.02"),
            ("reloops", "10"),
            ("threshold", "0.5"),
            ("prior", "uniform"),
            ("truth", ""),
            ("tail_frac", "0.25"),
            ("max_fields", "200"),
            ("prior_draws", "200"),
            ("checkpoint", "1000"),
            ("archive_period", "10"),
            ("snooker_prob", "0.1"),
            ("unit_gamma_prob", "0.2"),
            ("n_cr", "3"),
            ("adapt_fraction", "0.5"),
            ("jitter", "0.05"),
            ("eps_sd", "1e-6"),
            ("max_failures", "200"),
        ],
    ),
    FLOW,
];

const BASELINE: &[Section] = &[
    (
        "baseline",
        &[
            ("kind", ""),
            ("data", ""),
            ("count", "100"),
            ("components", ""),
            ("target_fraction", ""),
            ("seed", "0"),
            ("ti", ""),
            ("obs", ""),
            ("hard", ""),
            ("truth", ""),
            ("ny", ""),
            ("nx", ""),
            ("iters", "1000"),
            ("frac_resim", "0.1"),
            ("thin", "10"),
            ("trials", "1"),
            ("sigma_e", "0.02"),
            ("tail_frac", "0.25"),
            DS_KEYS[0],
            DS_KEYS[1],
            DS_KEYS[2],
        ],
    ),
    FLOW,
];

fn path_str(p: Option<PathBuf>) -> Option<String> {
    p.map(|p| p.display().to_string())
}

fn show<T: ToString>(v: Option<T>) -> Option<String> {
    v.map(|v| v.to_string())
}

fn read_hard(s: &Settings, sec: &str, ny: usize, nx: usize) -> Result<HardData> {
    match s.opt::<PathBuf>(sec, "hard")? {
        Some(p) => HardData::read_csv(&p, ny, nx),
        None => Ok(HardData::empty()),
    }
}

fn ds_params(s: &Settings, sec: &str) -> Result<DsParams> {
    let p = DsParams {
        n_neighbors: s.get(sec, "ds_neighbors")?,
        dist_threshold: s.get(sec, "ds_threshold")?,
        scan_fraction: s.get(sec, "ds_scan")?,
    };
    p.validate()?;
    Ok(p)
}

fn flow_config(s: &Settings, ny: usize, nx: usize) -> Result<FlowConfig> {
    let mut cfg = FlowConfig::standard(ny, nx, s.get("flow", "obs_lattice")?)?;
    cfg.k_facies = [s.get("flow", "k0")?, s.get("flow", "k1")?];
    cfg.cell_size = s.get("flow", "cell_size")?;
    cfg.thickness = s.get("flow", "thickness")?;
    cfg.h_left = s.get("flow", "h_left")?;
    cfg.h_right = s
        .opt("flow", "h_right")?
        .unwrap_or(cfg.h_left - flow::HEAD_GRADIENT * (nx - 1) as f64);
    cfg.tol = s.get("flow", "tol")?;
    cfg.well = if s.get("flow", "well")? {
        Some(Well {
            row: s.opt("flow", "well_row")?.unwrap_or(ny / 2),
            col: s.opt("flow", "well_col")?.unwrap_or(nx / 2),
            rate: s.get("flow", "well_rate")?,
        })
    } else {
        None
    };
    cfg.validate(ny, nx)?;
    Ok(cfg)
}

fn write_fields(dir: &Path, fields: &[BinaryField], manifest: &[ManifestRow], pgm: bool) -> Result<()> {
    write_training_set(dir, fields, manifest)?;
    if pgm {
        for (i, f) in fields.iter().enumerate() {
            write_pgm(f, &dir.join(format!("real_{i:05}.pgm")))?;
        }
    }
    Ok(())
}

fn manifest(fields: &[BinaryField], source: &str, seed: u64) -> Vec<ManifestRow> {
    fields
        .iter()
        .enumerate()
        .map(|(index, f)| ManifestRow {
            index,
            seed,
            source: source.to_string(),
            fraction: f.fraction(),
        })
        .collect()
}

fn prepare_dir(out: &Path, s: &Settings) -> Result<()> {
    fs::create_dir_all(out)?;
    s.write(&out.join(CONFIG_FILE))
}

pub fn gen_ti(a: GenTiArgs) -> Result<()> {
    let sec = "gen-ti";
    let s = Settings::resolve(
        GEN_TI,
        a.config.as_deref(),
        &[
            (sec, "mode", a.mode),
            (sec, "count", show(a.count)),
            (sec, "ny", show(a.ny)),
            (sec, "nx", show(a.nx)),
            (sec, "seed", show(a.seed)),
            (sec, "ti", path_str(a.ti)),
            (sec, "hard", path_str(a.hard)),
        ],
    )?;
    let (ny, nx): (usize, usize) = (s.get(sec, "ny")?, s.get(sec, "nx")?);
    let hard = read_hard(&s, sec, ny, nx)?;
    let mode: String = s.get(sec, "mode")?;
    let source = match mode.as_str() {
        "object" => {
            let cfg = TiConfig {
                width_range: (s.get(sec, "width_min")?, s.get(sec, "width_max")?),
                orientation_deg_range: (s.get(sec, "angle_min")?, s.get(sec, "angle_max")?),
                target_fraction: s.get(sec, "target_fraction")?,
                ..TiConfig::default()
            };
            cfg.validate()?;
            Source::Object(cfg)
        }
        "ds" => {
            let ti: PathBuf = s
                .opt(sec, "ti")?
                .ok_or_else(|| Error::Config("--mode ds requires --ti FILE".into()))?;
            Source::Ds {
                ti: BinaryField::read_sgrid(&ti)?,
                params: ds_params(&s, sec)?,
            }
        }
        other => return Err(Error::Config(format!("unknown mode `{other}` (expected object or ds)"))),
    };
    let seed = s.get(sec, "seed")?;
    let (fields, rows) = build_training_set(&source, ny, nx, s.get(sec, "count")?, &hard, seed)?;
    prepare_dir(&a.out, &s)?;
    write_fields(&a.out, &fields, &rows, a.pgm)?;
    let mean = metrics::facies_fractions(&fields)?[1];
    println!("wrote {} {ny}×{nx} realizations (mean facies-1 fraction {mean:.4})", fields.len());
    Ok(())
}

pub fn train(a: TrainArgs) -> Result<()> {
    let sec = "train";
    let s = Settings::resolve(
        TRAIN,
        a.config.as_deref(),
        &[
            (sec, "data", path_str(a.data)),
            (sec, "epochs", show(a.epochs)),
            (sec, "alpha", show(a.alpha)),
            (sec, "latent", show(a.latent)),
            (sec, "batch_size", show(a.batch_size)),
            (sec, "lr", show(a.lr)),
            (sec, "seed", show(a.seed)),
        ],
    )?;
    let cfg = TrainConfig {
        epochs: s.get(sec, "epochs")?,
        batch_size: s.get(sec, "batch_size")?,
        alpha: s.get(sec, "alpha")?,
        seed: s.get(sec, "seed")?,
        lr: s.get(sec, "lr")?,
    };
    cfg.validate()?;
    let latent: usize = s.get(sec, "latent")?;
    let data_dir: PathBuf = s.get(sec, "data")?;
    let data = read_training_set(&data_dir)?;
    let (ny, nx) = data[0].dims();
    let (loss_path, adam_path) = (sibling(&a.out, ".loss.csv"), sibling(&a.out, ".adam"));
    let (mut model, mut adam, mut history) = if a.resume {
        if !a.out.exists() {
            return Err(Error::Config(format!("--resume: no model at {}", a.out.display())));
        }
        let model = VaeModel::load(&a.out)?;
        if model.latent_dim() != latent {
            return Err(Error::Config(format!(
                "model has latent dimension {}, config asks for {latent}",
                model.latent_dim()
            )));
        }
        let history = if loss_path.exists() { read_loss_csv(&loss_path)? } else { Vec::new() };
        (model, AdamState::load(&adam_path)?, history)
    } else {
        let arch = Architecture::with_widths(ny, nx, latent, s.get(sec, "conv1")?, s.get(sec, "conv2")?, s.get(sec, "dense")?)?;
        // Stream u64::MAX is reserved for initialization; epochs use 0, 1, ...
        let model = VaeModel::new(arch, cfg.alpha, &mut rng::stream(cfg.seed, u64::MAX))?;
        (model, AdamState::new(cfg.lr), Vec::new())
    };
    let new = train_with(&mut model, &data, &cfg, &mut adam, |e| {
        eprintln!("epoch {:>4}  bce {:>12.4}  kl {:>10.4}  total {:>12.4}", e.epoch, e.bce, e.kl, e.total);
    })?;
    history.extend(new);
    model.save(&a.out)?;
    adam.save(&adam_path)?;
    write_loss_csv(&history, &loss_path)?;
    s.write(&sibling(&a.out, ".ini"))?;
    println!("trained {} epochs in total, model at {}", model.trained_epochs, a.out.display());
    Ok(())
}

pub fn sample(a: SampleArgs) -> Result<()> {
    let sec = "sample";
    let s = Settings::resolve(
        SAMPLE,
        a.config.as_deref(),
        &[
            (sec, "model", path_str(a.model)),
            (sec, "count", show(a.count)),
            (sec, "reloops", show(a.reloops)),
            (sec, "threshold", show(a.threshold)),
            (sec, "seed", show(a.seed)),
        ],
    )?;
    let model = VaeModel::load(&s.get::<PathBuf>(sec, "model")?)?;
    let seed = s.get(sec, "seed")?;
    let fields = model.sample_prior_with(
        s.get(sec, "count")?,
        s.get(sec, "reloops")?,
        s.get(sec, "threshold")?,
        &mut rng::seeded(seed),
    )?;
    prepare_dir(&a.out, &s)?;
    write_fields(&a.out, &fields, &manifest(&fields, "vae", seed), a.pgm)?;
    println!("wrote {} realizations", fields.len());
    Ok(())
}

fn read_capped(dir: &Path, cap: usize) -> Result<Vec<BinaryField>> {
    let mut fields = read_training_set(dir)?;
    fields.truncate(cap.max(1));
    Ok(fields)
}

pub fn metrics(a: MetricsArgs) -> Result<()> {
    let sec = "metrics";
    let s = Settings::resolve(
        METRICS,
        a.config.as_deref(),
        &[
            (sec, "set_a", path_str(a.set_a)),
            (sec, "set_b", path_str(a.set_b)),
            (sec, "hard", path_str(a.hard)),
            (sec, "max_lag", show(a.max_lag)),
            (sec, "max_fields", show(a.max_fields)),
        ],
    )?;
    let cap = s.get(sec, "max_fields")?;
    let set_a = read_capped(&s.get::<PathBuf>(sec, "set_a")?, cap)?;
    let set_b = read_capped(&s.get::<PathBuf>(sec, "set_b")?, cap)?;
    let (ny, nx) = set_a[0].dims();
    if set_b[0].dims() != (ny, nx) {
        return Err(Error::Dimension(format!(
            "set_a is {ny}×{nx}, set_b is {}×{}",
            set_b[0].ny(),
            set_b[0].nx()
        )));
    }
    let hard = read_hard(&s, sec, ny, nx)?;
    let max_lag = s.opt(sec, "max_lag")?.unwrap_or_else(|| default_max_lag(ny, nx));
    let ra = ensemble_report(&set_a, max_lag, Some(&hard))?;
    let rb = ensemble_report(&set_b, max_lag, Some(&hard))?;
    let mut rows = Vec::new();
    for (name, set, r) in [("a", &set_a, &ra), ("b", &set_b, &rb)] {
        rows.push((format!("{name}.count"), set.len() as f64));
        rows.push((format!("{name}.mean_fraction"), r.mean_fraction));
        rows.push((format!("{name}.d_bar_js"), r.d_bar_js));
        rows.push((format!("{name}.cf_outside_a"), fraction_outside(&ra.envelopes, &r.envelopes)?));
        if let Some(c) = &r.conditioning {
            rows.push((format!("{name}.frac_all_honored"), c.frac_all_honored));
            rows.push((format!("{name}.frac_at_most_one_wrong"), c.frac_at_most_one_wrong));
            for (k, v) in [("facies0_rate", c.facies0_rate), ("facies1_rate", c.facies1_rate)] {
                if let Some(v) = v {
                    rows.push((format!("{name}.{k}"), v));
                }
            }
        }
    }
    rows.push(("d_bar_js_ratio".into(), rb.d_bar_js / ra.d_bar_js));
    if let Some(parent) = a.report.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    write_summary(&a.report, &rows)?;
    write_envelope_csv(&ra.envelopes, &sibling(&a.report, ".envelopes_a.csv"))?;
    write_envelope_csv(&rb.envelopes, &sibling(&a.report, ".envelopes_b.csv"))?;
    s.write(&sibling(&a.report, ".ini"))?;
    for (k, v) in &rows {
        println!("{k:<28} {v:.6}");
    }
    Ok(())
}

pub fn flow(a: FlowArgs) -> Result<()> {
    let sec = "forward";
    let s = Settings::resolve(
        FLOW_CMD,
        a.config.as_deref(),
        &[
            (sec, "field", path_str(a.field)),
            (sec, "noise_sd", show(a.noise_sd)),
            (sec, "noise_seed", show(a.noise_seed)),
        ],
    )?;
    let field = BinaryField::read_sgrid(&s.get::<PathBuf>(sec, "field")?)?;
    let (ny, nx) = field.dims();
    let cfg = flow_config(&s, ny, nx)?;
    let h = assemble_and_solve(&field, &cfg)?;
    let values = observe(&h, &cfg.obs_points)?;
    let noise_sd: f64 = s.get(sec, "noise_sd")?;
    let obs = if noise_sd > 0.0 {
        corrupt(&values, &cfg.obs_points, noise_sd, s.get(sec, "noise_seed")?)?
    } else if noise_sd == 0.0 {
        ObservationSet::new(cfg.obs_points.clone(), values, 1.0)?
    } else {
        return Err(Error::Config(format!("noise_sd must be non-negative, got {noise_sd}")));
    };
    let b = budget(&field, &cfg, &h)?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    h.write_sgridf(&a.out)?;
    obs.write_csv(&sibling(&a.out, ".obs.csv"))?;
    s.write(&sibling(&a.out, ".ini"))?;
    println!(
        "boundary inflow {:.6e}, well rate {:.6e}, max cell imbalance {:.3e}, {} observations",
        b.boundary_inflow,
        b.well_rate,
        b.max_cell_imbalance,
        obs.len()
    );
    Ok(())
}

/// Number of rows `tail_samples(frac, thin)` pools, and the thinning that
/// keeps it at most `max`.
fn thinning(lens: impl Iterator<Item = usize>, frac: f64, max: usize) -> usize {
    let pooled: usize = lens
        .map(|n| ((n as f64 * frac).round() as usize).clamp(1, n.max(1)))
        .sum();
    pooled.div_ceil(max.max(1)).max(1)
}

pub fn invert(a: InvertArgs) -> Result<()> {
    let sec = "invert";
    let s = Settings::resolve(
        INVERT,
        a.config.as_deref(),
        &[
            (sec, "model", path_str(a.model)),
            (sec, "obs", path_str(a.obs)),
            (sec, "chains", show(a.chains)),
            (sec, "iters", show(a.iters)),
            (sec, "sigma_e", show(a.sigma_e)),
            (sec, "seed", show(a.seed)),
            (sec, "truth", path_str(a.truth)),
        ],
    )?;
    let model = VaeModel::load(&s.get::<PathBuf>(sec, "model")?)?;
    let (ny, nx) = model.image_dims();
    let obs = ObservationSet::read_csv(&s.get::<PathBuf>(sec, "obs")?, s.get(sec, "sigma_e")?)?;
    let mut flow_cfg = flow_config(&s, ny, nx)?;
    flow_cfg.obs_points = obs.locations.clone();
    flow_cfg.validate(ny, nx)?;
    let prior = match s.get::<String>(sec, "prior")?.as_str() {
        "uniform" => Prior::Uniform,
        "normal" => Prior::Normal,
        other => return Err(Error::Config(format!("unknown prior `{other}` (expected uniform or normal)"))),
    };
    let truth = s
        .opt::<PathBuf>(sec, "truth")?
        .map(|p| BinaryField::read_sgrid(&p))
        .transpose()?;
    if let Some(t) = &truth {
        if t.dims() != (ny, nx) {
            return Err(Error::Dimension(format!("truth is {}×{}, model {ny}×{nx}", t.ny(), t.nx())));
        }
    }
    let mut target = FlowTarget::new(&model, &flow_cfg, &obs);
    target.reloops = s.get(sec, "reloops")?;
    target.threshold = s.get(sec, "threshold")?;
    let iters: usize = s.get(sec, "iters")?;
    let cfg = DreamConfig {
        n_chains: s.get(sec, "chains")?,
        n_iters: iters,
        archive_period: s.get(sec, "archive_period")?,
        initial_archive: None,
        snooker_prob: s.get(sec, "snooker_prob")?,
        unit_gamma_prob: s.get(sec, "unit_gamma_prob")?,
        n_cr: s.get(sec, "n_cr")?,
        adapt_fraction: s.get(sec, "adapt_fraction")?,
        jitter: s.get(sec, "jitter")?,
        eps_sd: s.get(sec, "eps_sd")?,
        prior,
        max_consecutive_failures: s.get(sec, "max_failures")?,
    };
    let seed: u64 = s.get(sec, "seed")?;
    let checkpoint: usize = s.get::<usize>(sec, "checkpoint")?.max(1);
    let mut sampler = if a.resume {
        Sampler::resume(&target, &a.out, Some(cfg))?
    } else {
        Sampler::new(&target, cfg, seed)?
    };
    prepare_dir(&a.out, &s)?;
    while sampler.iteration() < iters {
        sampler.step()?;
        if sampler.iteration() % checkpoint == 0 {
            sampler.save(&a.out)?;
            let best = sampler.chains().iter().map(|c| c.rmse).fold(f64::INFINITY, f64::min);
            eprintln!("iteration {:>7}  best current rmse {best:.5}", sampler.iteration());
        }
    }
    sampler.save(&a.out)?;
    let record = sampler.record();

    // RMSE trace table: one column per chain.
    let mut w = csv::Writer::from_path(a.out.join("rmse_trace.csv"))?;
    let mut header = vec!["iter".to_string()];
    header.extend((0..record.traces.len()).map(|c| format!("chain_{c}")));
    w.write_record(&header)?;
    let len = record.traces.iter().map(Vec::len).min().unwrap_or(0);
    for t in 0..len {
        let mut row = vec![record.traces[0][t].iter.to_string()];
        row.extend(record.traces.iter().map(|tr| tr[t].rmse.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;

    let tail_frac: f64 = s.get(sec, "tail_frac")?;
    let thin = thinning(record.traces.iter().map(Vec::len), tail_frac, s.get(sec, "max_fields")?);
    let fields = target.fields(&record.tail_samples(tail_frac, thin))?;
    let post_dir = a.out.join("posterior");
    if post_dir.exists() {
        fs::remove_dir_all(&post_dir)?;
    }
    write_fields(&post_dir, &fields, &manifest(&fields, "posterior", seed), a.pgm)?;

    let best = record.best_rmse().into_iter().fold(f64::INFINITY, f64::min);
    let mut rows = vec![
        ("iterations".to_string(), sampler.iteration() as f64),
        ("best_rmse".into(), best),
        ("best_rmse_over_sigma".into(), best / obs.sigma_e),
        (
            "mean_acceptance".into(),
            record.acceptance.iter().sum::<f64>() / record.acceptance.len() as f64,
        ),
        ("archive_len".into(), record.archive_len as f64),
    ];
    if let Some(r) = record.rhat.iter().flatten().copied().reduce(f64::max) {
        rows.push(("max_rhat".into(), r));
        let converged = record.rhat.iter().flatten().filter(|&&r| r <= 1.2).count();
        rows.push(("dims_rhat_le_1.2".into(), converged as f64));
    }
    if let Some(truth) = &truth {
        let draws = model.sample_prior_with(
            s.get(sec, "prior_draws")?,
            target.reloops,
            target.threshold,
            &mut rng::stream(seed, u64::MAX),
        )?;
        let prior_fracs = metrics::facies_fractions(&draws)?;
        let opts = ReportOptions { tail_frac, ..ReportOptions::default() };
        let summary = posterior_report_fields(&record, fields, truth, prior_fracs, &opts)?;
        rows.push(("f_po".into(), summary.f_po));
        rows.push(("f_pr".into(), summary.f_pr));
        rows.push(("f_po_over_f_pr".into(), summary.ratio));
        for (q, v) in ["rmse_q05", "rmse_q50", "rmse_q95"].iter().zip(summary.rmse_quantiles) {
            rows.push(((*q).into(), v));
        }
    }
    write_summary(&a.out.join("summary.csv"), &rows)?;
    for (k, v) in &rows {
        println!("{k:<24} {v:.6}");
    }
    Ok(())
}

pub fn baseline(a: BaselineArgs) -> Result<()> {
    let sec = "baseline";
    let s = Settings::resolve(
        BASELINE,
        a.config.as_deref(),
        &[
            (sec, "kind", a.kind),
            (sec, "data", path_str(a.data)),
            (sec, "count", show(a.count)),
            (sec, "components", show(a.components)),
            (sec, "ti", path_str(a.ti)),
            (sec, "obs", path_str(a.obs)),
            (sec, "hard", path_str(a.hard)),
            (sec, "truth", path_str(a.truth)),
            (sec, "iters", show(a.iters)),
            (sec, "trials", show(a.trials)),
            (sec, "seed", show(a.seed)),
        ],
    )?;
    let kind: String = s
        .opt(sec, "kind")?
        .ok_or_else(|| Error::Config("--kind pca|dct|sgr is required".into()))?;
    match kind.as_str() {
        "pca" | "dct" => generate_baseline(&kind, &s, &a.out, a.pgm),
        "sgr" => sgr(&s, &a.out, a.pgm),
        other => Err(Error::Config(format!("unknown baseline `{other}` (expected pca, dct or sgr)"))),
    }
}

fn generate_baseline(kind: &str, s: &Settings, out: &Path, pgm: bool) -> Result<()> {
    let sec = "baseline";
    let data = read_training_set(&s.get::<PathBuf>(sec, "data")?)?;
    let target = match s.opt(sec, "target_fraction")? {
        Some(f) => f,
        None => metrics::facies_fractions(&data)?[1],
    };
    let count: usize = s.get(sec, "count")?;
    let seed: u64 = s.get(sec, "seed")?;
    let components: Option<usize> = s.opt(sec, "components")?;
    let gen: Box<dyn Fn(&mut rng::Rng) -> Result<BinaryField> + Sync> = if kind == "pca" {
        let basis = pca_fit(&data, components.unwrap_or(DEFAULT_PCA_COMPONENTS))?;
        prepare_dir(out, s)?;
        basis.save(&out.join("basis.pcab"))?;
        Box::new(move |r| pca_generate(&basis, target, r))
    } else {
        let basis = dct_fit(&data, components.unwrap_or(DEFAULT_DCT_COEFFICIENTS))?;
        prepare_dir(out, s)?;
        basis.save(&out.join("basis.dctb"))?;
        Box::new(move |r| dct_generate(&basis, target, r))
    };
    let fields = (0..count)
        .into_par_iter()
        .map(|i| gen(&mut rng::stream(seed, i as u64)))
        .collect::<Result<Vec<_>>>()?;
    write_fields(out, &fields, &manifest(&fields, kind, seed), pgm)?;
    println!("wrote {} {kind} realizations (target fraction {target:.4})", fields.len());
    Ok(())
}

fn sgr(s: &Settings, out: &Path, pgm: bool) -> Result<()> {
    let sec = "baseline";
    let ti = BinaryField::read_sgrid(&s.get::<PathBuf>(sec, "ti")?)?;
    let obs = ObservationSet::read_csv(&s.get::<PathBuf>(sec, "obs")?, s.get(sec, "sigma_e")?)?;
    let truth = s
        .opt::<PathBuf>(sec, "truth")?
        .map(|p| BinaryField::read_sgrid(&p))
        .transpose()?;
    let (ny, nx) = match (&truth, s.opt::<usize>(sec, "ny")?, s.opt::<usize>(sec, "nx")?) {
        (_, Some(ny), Some(nx)) => (ny, nx),
        (Some(t), _, _) => t.dims(),
        _ => return Err(Error::Config("sgr needs ny and nx or a truth field".into())),
    };
    if let Some(t) = &truth {
        if t.dims() != (ny, nx) {
            return Err(Error::Dimension(format!("truth is {}×{}, grid {ny}×{nx}", t.ny(), t.nx())));
        }
    }
    let hard = read_hard(s, sec, ny, nx)?;
    let mut flow_cfg = flow_config(s, ny, nx)?;
    flow_cfg.obs_points = obs.locations.clone();
    flow_cfg.validate(ny, nx)?;
    let cfg = SgrConfig {
        frac_resim: s.get(sec, "frac_resim")?,
        iters: s.get(sec, "iters")?,
        thin: s.get(sec, "thin")?,
        ds: ds_params(s, sec)?,
    };
    let seed: u64 = s.get(sec, "seed")?;
    let trials: usize = s.get(sec, "trials")?;
    if trials == 0 {
        return Err(Error::Config("trials must be at least 1".into()));
    }
    let runs: Vec<SgrRun> = (0..trials)
        .into_par_iter()
        .map(|t| {
            sgr_invert(
                &ti,
                &hard,
                |f| flow::forward(f, &flow_cfg),
                &obs,
                (ny, nx),
                None,
                &cfg,
                &mut rng::stream(seed, t as u64),
            )
        })
        .collect::<Result<_>>()?;
    prepare_dir(out, s)?;
    let tail_frac: f64 = s.get(sec, "tail_frac")?;
    let mut rows = Vec::new();
    let mut posterior = Vec::new();
    for (t, run) in runs.iter().enumerate() {
        let dir = out.join(format!("trial_{t}"));
        fs::create_dir_all(&dir)?;
        run.write_trace(&dir.join("trace.csv"))?;
        for (iter, f) in &run.states {
            f.write_sgrid(&dir.join(format!("state_{iter:07}.sgrid")))?;
            if pgm {
                write_pgm(f, &dir.join(format!("state_{iter:07}.pgm")))?;
            }
        }
        let k = ((run.states.len() as f64 * tail_frac).round() as usize).clamp(1, run.states.len());
        posterior.extend(run.states[run.states.len() - k..].iter().map(|(_, f)| f.clone()));
        let accepted = run.trace.iter().filter(|st| st.accepted).count();
        rows.push((format!("trial_{t}.best_rmse"), run.best_rmse().last().copied().unwrap_or(f64::NAN)));
        rows.push((format!("trial_{t}.acceptance"), accepted as f64 / run.trace.len().max(1) as f64));
        rows.push((format!("trial_{t}.failures"), run.failures.len() as f64));
    }
    if let Some(truth) = &truth {
        let f_po = metrics::facies_match(truth, &posterior)?;
        let f_pr = metrics::prior_match(
            metrics::facies_fractions(std::slice::from_ref(&ti))?,
            metrics::facies_fractions(std::slice::from_ref(truth))?,
        );
        rows.push(("f_po".into(), f_po));
        rows.push(("f_pr".into(), f_pr));
        rows.push(("f_po_over_f_pr".into(), f_po / f_pr));
    }
    write_summary(&out.join("summary.csv"), &rows)?;
    for (k, v) in &rows {
        println!("{k:<24} {v:.6}");
    }
    Ok(())
}
