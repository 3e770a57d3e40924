//! Acceptance suite: one PASS/FAIL line per criterion. Runs as a plain
//! binary so the scaled-down experiments can share trained models within
//! one process; the exit status is nonzero if any criterion fails.
//!
//! Criteria 4, 5, 7 and 8 train real models and take tens of minutes on a
//! single core.

use std::collections::VecDeque;
use std::time::Instant;

use geodr::baselines::{
    dct_fit, dct_generate, pca_fit, pca_generate, sgr_invert, SgrConfig, DEFAULT_DCT_COEFFICIENTS,
    DEFAULT_PCA_COMPONENTS,
};
use geodr::flow::{self, FlowConfig, ObservationSet};
use geodr::geostat::{build_training_set, gen_channels, DsParams, Source, TiConfig};
use geodr::inversion::{
    ks_uniform, posterior_report, ConstantTarget, DreamConfig, FlowTarget, GaussianTarget, ReportOptions,
    Sampler,
};
use geodr::metrics::{
    self, all_curves, cf_envelopes, connectivity_function, default_max_lag, fraction_outside, js_divergence, mph,
    space_of_uncertainty, CfEnvelope, Direction,
};
use geodr::nn::Tensor;
use geodr::vae::{
    batch_loss, batch_tensor, loss_and_gradients, loss_bce, loss_kl, train, Architecture, LatentVector,
    TrainConfig, VaeModel,
};
use geodr::{rng, BinaryField, HardData};
use rand::Rng as _;
use rand_distr::StandardNormal;

type Outcome = (bool, String);

/// Desk-scale experiment sizes.
const TRAIN_COUNT: usize = 2000;
const EPOCHS: usize = 30;
const LATENT: usize = 20;
const FRACTION: f64 = 0.3;
const SIGMA_E: f64 = 0.02;
const DR_ITERS: usize = 10_000;

// ---------------------------------------------------------------- oracles

/// 4-connected components by breadth-first flood fill; 0 marks other facies.
fn flood_labels(m: &BinaryField, facies: u8) -> Vec<usize> {
    let (ny, nx) = m.dims();
    let mut label = vec![0usize; ny * nx];
    let mut next = 0;
    for start in 0..ny * nx {
        if label[start] != 0 || m.as_slice()[start] != facies {
            continue;
        }
        next += 1;
        label[start] = next;
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            let (r, c) = (i / nx, i % nx);
            let mut nb = Vec::with_capacity(4);
            if r > 0 {
                nb.push(i - nx);
            }
            if r + 1 < ny {
                nb.push(i + nx);
            }
            if c > 0 {
                nb.push(i - 1);
            }
            if c + 1 < nx {
                nb.push(i + 1);
            }
            for j in nb {
                if label[j] == 0 && m.as_slice()[j] == facies {
                    label[j] = next;
                    queue.push_back(j);
                }
            }
        }
    }
    label
}

/// Connected fraction over every same-facies pair at offset `(dr, dc)`.
fn brute_force_cf(m: &BinaryField, facies: u8, dr: usize, dc: usize) -> Option<f64> {
    let labels = flood_labels(m, facies);
    let (ny, nx) = m.dims();
    let (mut pairs, mut connected) = (0usize, 0usize);
    for r in 0..ny.saturating_sub(dr) {
        for c in 0..nx.saturating_sub(dc) {
            let (a, b) = (r * nx + c, (r + dr) * nx + c + dc);
            if m.as_slice()[a] == facies && m.as_slice()[b] == facies {
                pairs += 1;
                connected += usize::from(labels[a] == labels[b]);
            }
        }
    }
    (pairs > 0).then(|| connected as f64 / pairs as f64)
}

/// Heads of a 1-row column with fixed end heads: series conductances with
/// harmonic-mean interfaces, `q = Δh / Σ 1/C`.
fn series_heads(k: &[f64], h_left: f64, h_right: f64) -> Vec<f64> {
    let resist: Vec<f64> = k.windows(2).map(|w| (w[0] + w[1]) / (2.0 * w[0] * w[1])).collect();
    let q = (h_left - h_right) / resist.iter().sum::<f64>();
    let mut h = vec![h_left];
    for r in &resist {
        h.push(h.last().unwrap() - q * r);
    }
    h
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Per curve, the fraction of defined lags where `test`'s mean lies inside
/// `reference`'s min–max band.
fn inside_fractions(reference: &[CfEnvelope], test: &[CfEnvelope]) -> Vec<(String, f64)> {
    test.iter()
        .map(|t| {
            let r = reference
                .iter()
                .find(|r| r.facies == t.facies && r.direction == t.direction)
                .expect("matching reference curve");
            let (mut n, mut inside) = (0usize, 0usize);
            for lag in 0..t.lags.len() {
                if let (Some(m), Some(lo), Some(hi)) = (t.mean[lag], r.min[lag], r.max[lag]) {
                    n += 1;
                    inside += usize::from(m >= lo - 1e-12 && m <= hi + 1e-12);
                }
            }
            (format!("f{}-{}", t.facies, t.direction.name()), inside as f64 / n.max(1) as f64)
        })
        .collect()
}

// --------------------------------------------------------------- fixtures

struct Desk {
    size: usize,
    train_set: Vec<BinaryField>,
    model: VaeModel,
}

fn object_source() -> Source {
    Source::Object(TiConfig {
        target_fraction: FRACTION,
        ..TiConfig::default()
    })
}

fn desk(size: usize, source: &Source, hard: &HardData, seed: u64) -> Desk {
    let t = Instant::now();
    let (train_set, _) = build_training_set(source, size, size, TRAIN_COUNT, hard, seed).unwrap();
    let arch = Architecture::reference(size, size, LATENT).unwrap();
    let mut model = VaeModel::new(arch, 20.0, &mut rng::seeded(seed)).unwrap();
    let tc = TrainConfig {
        epochs: EPOCHS,
        seed,
        ..TrainConfig::default()
    };
    let hist = train(&mut model, &train_set, &tc).unwrap();
    eprintln!(
        "  [{size}×{size} VAE trained in {:.0?}; final loss {:.2}]",
        t.elapsed(),
        hist.last().unwrap().total
    );
    Desk { size, train_set, model }
}

fn prior_draws(model: &VaeModel, n: usize, reloops: usize, seed: u64) -> Vec<BinaryField> {
    let mut r = rng::seeded(seed);
    let zs: Vec<_> = (0..n).map(|_| LatentVector::standard_normal(model.latent_dim(), &mut r)).collect();
    model.generate_batch(&zs, reloops, 0.5).unwrap()
}

/// The 32×32 inversion problem shared by criteria 7 and 8(b).
struct Inversion {
    truth: BinaryField,
    flow: FlowConfig,
    obs: ObservationSet,
    dr_ratio: f64,
}

// ------------------------------------------------------------- criteria

fn c1_gradients() -> Outcome {
    let arch = Architecture::with_widths(8, 8, 3, 2, 3, 6).unwrap();
    let mut model = VaeModel::new(arch, 20.0, &mut rng::seeded(11)).unwrap();
    let mut r = rng::seeded(12);
    // Nonzero biases keep ReLU pre-activations off the kink at 0.
    for (name, w) in model.weights.iter_mut() {
        if name.ends_with(".b") {
            w.data_mut().iter_mut().for_each(|v| *v = r.random_range(-0.3..0.3));
        }
    }
    let fields: Vec<_> = (0..4)
        .map(|_| BinaryField::from_vec(8, 8, (0..64).map(|_| r.random_bool(0.35) as u8).collect()).unwrap())
        .collect();
    let x = batch_tensor(&fields.iter().collect::<Vec<_>>()).unwrap();
    let noise = Tensor::new(vec![4, 3], (0..12).map(|_| r.sample(StandardNormal)).collect()).unwrap();
    let (_, grads) = loss_and_gradients(&model, &x, &noise).unwrap();
    let h = 1e-5;
    let (mut worst, mut count) = (0.0f64, 0usize);
    let names: Vec<String> = model.weights.keys().cloned().collect();
    for name in names {
        for i in 0..model.weights[&name].len() {
            let orig = model.weights[&name].data()[i];
            let mut eval = |v: f64| {
                model.weights.get_mut(&name).unwrap().data_mut()[i] = v;
                batch_loss(&model, &x, &noise).unwrap().total
            };
            let fd = (eval(orig + h) - eval(orig - h)) / (2.0 * h);
            eval(orig);
            let g = grads[&name].data()[i];
            worst = worst.max((g - fd).abs() / g.abs().max(fd.abs()).max(1e-6));
            count += 1;
        }
    }
    (worst < 1e-4, format!("{count} parameters, worst relative error {worst:.2e} (< 1e-4)"))
}

fn c2_loss_oracles() -> Outcome {
    let kl0 = loss_kl(&[0.0], &[0.0]).unwrap();
    let kl1 = loss_kl(&[1.0, 0.0], &[0.0, 0.0]).unwrap();
    let bce = loss_bce(&[1.0, 0.0], &[0.5, 0.5]).unwrap();
    let errs = [kl0.abs(), (kl1 - 0.5).abs(), (bce - 2.0 * 2f64.ln()).abs()];
    let worst = errs.iter().copied().fold(0.0, f64::max);
    (
        worst <= 1e-12,
        format!("kl(0,0) = {kl0}, kl((1,0),(0,0)) = {kl1}, bce = {bce}; worst error {worst:.1e}"),
    )
}

fn c3_flow() -> Outcome {
    let (ny, nx) = (50, 50);
    let mut cfg = FlowConfig::standard(ny, nx, 5).unwrap();
    cfg.well = None;
    let h = flow::assemble_and_solve(&BinaryField::zeros(ny, nx).unwrap(), &cfg).unwrap();
    let mut lin_err: f64 = 0.0;
    for i in 0..ny {
        for j in 0..nx {
            let exact = cfg.h_left + (cfg.h_right - cfg.h_left) * j as f64 / (nx - 1) as f64;
            lin_err = lin_err.max((h.get(i, j) - exact).abs());
        }
    }

    let n = 21;
    let column = BinaryField::from_vec(1, n, (0..n).map(|j| u8::from(j < n / 2)).collect()).unwrap();
    let cfg1 = FlowConfig {
        well: None,
        obs_points: Vec::new(),
        h_right: cfg.h_left - flow::HEAD_GRADIENT * (n - 1) as f64,
        ..cfg.clone()
    };
    let h1 = flow::assemble_and_solve(&column, &cfg1).unwrap();
    let k: Vec<f64> = column.as_slice().iter().map(|&f| cfg1.k_facies[f as usize]).collect();
    let oracle = series_heads(&k, cfg1.h_left, cfg1.h_right);
    let zone_err = (0..n).map(|j| (h1.get(0, j) - oracle[j]).abs()).fold(0.0, f64::max);

    let mut r = rng::seeded(33);
    let cfgw = FlowConfig::standard(ny, nx, 5).unwrap();
    let mut mass_err: f64 = 0.0;
    for _ in 0..20 {
        let m = BinaryField::from_vec(ny, nx, (0..ny * nx).map(|_| r.random_bool(0.3) as u8).collect()).unwrap();
        let h = flow::assemble_and_solve(&m, &cfgw).unwrap();
        let b = flow::budget(&m, &cfgw, &h).unwrap();
        mass_err = mass_err.max((b.boundary_inflow - b.well_rate).abs() / b.well_rate);
    }
    (
        lin_err < 1e-8 && zone_err < 1e-8 && mass_err < 1e-8,
        format!(
            "linear profile error {lin_err:.1e}, two-zone error {zone_err:.1e}, worst mass balance {mass_err:.1e} (all < 1e-8)"
        ),
    )
}

fn c4_generation(d: &Desk, samples: &[BinaryField], reference: &[CfEnvelope]) -> Outcome {
    let frac = mean(&samples.iter().map(BinaryField::fraction).collect::<Vec<_>>());
    let env = cf_envelopes(samples, default_max_lag(d.size, d.size)).unwrap();
    let inside = inside_fractions(reference, &env);
    let worst = inside.iter().map(|(_, f)| *f).fold(1.0, f64::min);
    let js_dr = space_of_uncertainty(samples).unwrap();
    let js_tr = space_of_uncertainty(&d.train_set[..samples.len()]).unwrap();
    let ratio = js_dr / js_tr;
    let ok = (frac - FRACTION).abs() <= 0.1 && worst >= 0.8 && (0.7..=1.4).contains(&ratio);
    let curves: Vec<String> = inside.iter().map(|(n, f)| format!("{n} {f:.2}")).collect();
    (
        ok,
        format!(
            "mean fraction {frac:.3} (0.3 ± 0.1); CF lags inside envelope [{}] (≥ 0.80); d̄_JS DR/TR = {js_dr:.4}/{js_tr:.4} = {ratio:.3} (0.7–1.4)",
            curves.join(", ")
        ),
    )
}

fn c5_conditioning() -> Outcome {
    // Conditioned direct-sampling training set, as DS leaves the isolated
    // conditioning points that relooping tends to erase.
    let size = 32;
    let ti = gen_channels(&TiConfig::default(), 100, 100, &mut rng::seeded(500)).unwrap();
    let reference = gen_channels(&TiConfig::default(), size, size, &mut rng::seeded(505)).unwrap();
    let hard = HardData::lattice_from(&reference, 3).unwrap();
    let source = Source::Ds {
        ti,
        params: DsParams::default(),
    };
    let d = desk(size, &source, &hard, 5000);
    let mut r = rng::seeded(55);
    let zs: Vec<_> = (0..500).map(|_| LatentVector::standard_normal(LATENT, &mut r)).collect();
    let with = d.model.generate_batch(&zs, 10, 0.5).unwrap();
    let without = d.model.generate_batch(&zs, 0, 0.5).unwrap();
    let sw = metrics::conditioning_accuracy(&with, &hard).unwrap();
    let so = metrics::conditioning_accuracy(&without, &hard).unwrap();
    let ok = sw.frac_all_honored >= 0.5
        && sw.frac_at_most_one_wrong >= 0.9
        && so.frac_all_honored > sw.frac_all_honored;
    (
        ok,
        format!(
            "relooping 10: all 9 honored {:.3} (≥ 0.5), ≤ 1 mismatch {:.3} (≥ 0.9); relooping off: all honored {:.3} (must exceed {:.3})",
            sw.frac_all_honored, sw.frac_at_most_one_wrong, so.frac_all_honored, sw.frac_all_honored
        ),
    )
}

fn c6_calibration() -> Outcome {
    let d = 5;
    let iters = 50_000;
    let gauss = GaussianTarget {
        mean: vec![0.0; d],
        sd: vec![1.0; d],
    };
    let cfg = DreamConfig {
        n_iters: iters,
        ..DreamConfig::default()
    };
    let mut s = Sampler::new(&gauss, cfg.clone(), 61).unwrap();
    s.run().unwrap();
    let rec = s.record();
    let post = rec.tail_samples(0.5, 1);
    let means: Vec<f64> = (0..d).map(|i| mean(&post.iter().map(|t| t[i]).collect::<Vec<_>>())).collect();
    let worst_mean = means.iter().map(|m| m.abs()).fold(0.0, f64::max);
    let worst_rhat = rec.rhat.iter().map(|r| r.unwrap_or(f64::INFINITY)).fold(0.0, f64::max);

    let flat = ConstantTarget { dim: d };
    let mut s = Sampler::new(&flat, cfg, 62).unwrap();
    s.run().unwrap();
    let pooled = s.record().tail_samples(0.5, 20);
    let pmin = (0..d)
        .map(|i| ks_uniform(&pooled.iter().map(|t| t[i]).collect::<Vec<_>>(), -5.0, 5.0).1)
        .fold(1.0, f64::min);
    let ok = worst_mean <= 0.05 && worst_rhat <= 1.1 && pmin > 0.01;
    (
        ok,
        format!(
            "Gaussian: {} post-burn samples, worst |mean| {worst_mean:.4} (≤ 0.05), worst R̂ {worst_rhat:.4} (≤ 1.1); flat: {} thinned samples, smallest KS p {pmin:.3} (> 0.01)",
            post.len(),
            pooled.len()
        ),
    )
}

fn c7_inversion(d: &Desk) -> (Outcome, Inversion) {
    let n = d.size;
    let mut r = rng::seeded(77);
    let z = LatentVector::standard_normal(LATENT, &mut r);
    let truth = d.model.generate(&z, 10, 0.5).unwrap();
    let flow = FlowConfig::standard(n, n, 5).unwrap();
    let clean = flow::forward(&truth, &flow).unwrap();
    let obs = flow::corrupt(&clean, &flow.obs_points, SIGMA_E, 5).unwrap();
    let prior_fracs = metrics::facies_fractions(&prior_draws(&d.model, 200, 10, 3)).unwrap();

    let target = FlowTarget::new(&d.model, &flow, &obs);
    let cfg = DreamConfig {
        n_iters: DR_ITERS,
        ..DreamConfig::default()
    };
    let t = Instant::now();
    let mut s = Sampler::new(&target, cfg, 7).unwrap();
    s.run().unwrap();
    let rec = s.record();
    let best = rec.best_rmse().into_iter().fold(f64::INFINITY, f64::min);
    let rep = posterior_report(&rec, &d.model, &truth, prior_fracs, &ReportOptions::default()).unwrap();
    eprintln!("  [DREAM: {} iterations × 4 chains in {:.0?}]", s.iteration(), t.elapsed());
    let ok = best <= 1.2 * SIGMA_E && rep.ratio > 1.1;
    let outcome = (
        ok,
        format!(
            "{} obs, {} iterations × 4 chains: best RMSE {best:.4} (≤ {:.3}); f_PO/f_PR = {:.3}/{:.3} = {:.3} (> 1.1); posterior RMSE median {:.4}",
            obs.len(),
            s.iteration(),
            1.2 * SIGMA_E,
            rep.f_po,
            rep.f_pr,
            rep.ratio,
            rep.rmse_quantiles[1]
        ),
    );
    let inv = Inversion {
        truth,
        flow,
        obs,
        dr_ratio: rep.ratio,
    };
    (outcome, inv)
}

fn c8a_envelopes(d: &Desk, vae_samples: &[BinaryField], reference: &[CfEnvelope]) -> Outcome {
    let max_lag = default_max_lag(d.size, d.size);
    let n = vae_samples.len();
    let pca = pca_fit(&d.train_set, DEFAULT_PCA_COMPONENTS).unwrap();
    let mut r = rng::seeded(81);
    let pca_set: Vec<_> = (0..n).map(|_| pca_generate(&pca, FRACTION, &mut r).unwrap()).collect();
    let dct = dct_fit(&d.train_set, DEFAULT_DCT_COEFFICIENTS).unwrap();
    let dct_set: Vec<_> = (0..n).map(|_| dct_generate(&dct, FRACTION, &mut r).unwrap()).collect();
    let out = |set: &[BinaryField]| fraction_outside(reference, &cf_envelopes(set, max_lag).unwrap()).unwrap();
    let (v, p, c) = (out(vae_samples), out(&pca_set), out(&dct_set));
    (
        p > v && c > v,
        format!("CF lags outside training envelope: VAE {v:.3}, PCA {p:.3}, DCT {c:.3} (PCA, DCT must exceed VAE)"),
    )
}

fn c8b_sgr(inv: &Inversion) -> Outcome {
    let (ny, nx) = inv.truth.dims();
    let ti = gen_channels(&TiConfig::default(), 100, 100, &mut rng::seeded(808)).unwrap();
    let cfg = SgrConfig {
        iters: 10_000,
        thin: 10,
        ds: DsParams::default(),
        ..SgrConfig::default()
    };
    let t = Instant::now();
    let run = sgr_invert(
        &ti,
        &HardData::empty(),
        |m| flow::forward(m, &inv.flow),
        &inv.obs,
        (ny, nx),
        None,
        &cfg,
        &mut rng::seeded(88),
    )
    .unwrap();
    eprintln!("  [SGR: {} iterations in {:.0?}]", cfg.iters, t.elapsed());
    let tail_start = cfg.iters - cfg.iters / 4;
    let post: Vec<BinaryField> = run
        .states
        .iter()
        .filter(|(i, _)| *i > tail_start)
        .map(|(_, f)| f.clone())
        .collect();
    let f_po = metrics::facies_match(&inv.truth, &post).unwrap();
    let prior = metrics::facies_fractions(std::slice::from_ref(&ti)).unwrap();
    let f_pr = metrics::prior_match(prior, metrics::facies_fractions(std::slice::from_ref(&inv.truth)).unwrap());
    let ratio = f_po / f_pr;
    let best = run.best_rmse().last().copied().unwrap_or(f64::NAN);
    (
        ratio < inv.dr_ratio,
        format!(
            "SGR f_PO/f_PR = {f_po:.3}/{f_pr:.3} = {ratio:.3} vs DR {:.3} (SGR must be lower); SGR best RMSE {best:.4}",
            inv.dr_ratio
        ),
    )
}

fn c9_metric_oracles() -> Outcome {
    let js = js_divergence(&[0.5, 0.5], &[0.9, 0.1]).unwrap();

    let mut r = rng::seeded(99);
    let mut mph_ok = true;
    for (ny, nx) in [(4, 4), (7, 5), (20, 31), (64, 64)] {
        let m = BinaryField::from_vec(ny, nx, (0..ny * nx).map(|_| r.random_bool(0.4) as u8).collect()).unwrap();
        mph_ok &= mph(&m).unwrap().total() == ((ny - 3) * (nx - 3)) as u64;
    }

    let block = BinaryField::from_vec(4, 4, vec![1, 1, 0, 0, 1, 1, 0, 0, 0, 0, 1, 1, 0, 0, 1, 1]).unwrap();
    let block_x1 = connectivity_function(&block, 1, Direction::X, 1).unwrap().prob[0];
    let mut cf_ok = block_x1 == Some(1.0);
    let mut fields = vec![block];
    fields.extend(
        (0..5).map(|_| BinaryField::from_vec(12, 9, (0..108).map(|_| r.random_bool(0.5) as u8).collect()).unwrap()),
    );
    for m in &fields {
        let max_lag = default_max_lag(m.ny(), m.nx());
        for curve in all_curves(m, max_lag).unwrap() {
            for (k, &lag) in curve.lags.iter().enumerate() {
                let (dr, dc) = curve.direction.offset(lag);
                cf_ok &= curve.prob[k] == brute_force_cf(m, curve.facies, dr, dc);
            }
        }
    }
    let ok = (js - 0.4394).abs() <= 1e-4 && mph_ok && cf_ok;
    (
        ok,
        format!(
            "two-bin divergence {js:.6} (0.4394 ± 1e-4); MPH totals {}; CF vs brute force {} (block x lag 1 = {block_x1:?})",
            if mph_ok { "match" } else { "MISMATCH" },
            if cf_ok { "exact" } else { "MISMATCH" }
        ),
    )
}

fn main() {
    // Integration-test binaries receive harness flags; a `--list` probe
    // must not start the experiments. Bare arguments select criteria.
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        return;
    }
    let only: Vec<&str> = args.iter().filter(|a| !a.starts_with('-')).map(String::as_str).collect();
    let want = |ids: &[&str]| only.is_empty() || ids.iter().any(|id| only.contains(id));
    let mut failed = 0;
    let mut report = |id: &str, name: &str, started: Instant, (ok, detail): Outcome| {
        println!(
            "{} {id} {name}: {detail} [{:.1?}]",
            if ok { "PASS" } else { "FAIL" },
            started.elapsed()
        );
        failed += usize::from(!ok);
    };

    if want(&["1"]) {
        let t = Instant::now();
        report("1", "gradient correctness", t, c1_gradients());
    }
    if want(&["2"]) {
        let t = Instant::now();
        report("2", "loss oracles", t, c2_loss_oracles());
    }
    if want(&["3"]) {
        let t = Instant::now();
        report("3", "flow solver", t, c3_flow());
    }
    if want(&["9"]) {
        let t = Instant::now();
        report("9", "metric oracles", t, c9_metric_oracles());
    }
    if want(&["6"]) {
        let t = Instant::now();
        report("6", "sampler calibration", t, c6_calibration());
    }
    if want(&["4", "8a"]) {
        let t = Instant::now();
        let d64 = desk(64, &object_source(), &HardData::empty(), 4000);
        let samples = prior_draws(&d64.model, 100, 10, 44);
        let reference = cf_envelopes(&d64.train_set[..100], default_max_lag(64, 64)).unwrap();
        report("4", "desk-scale generation quality", t, c4_generation(&d64, &samples, &reference));
        let t = Instant::now();
        report("8a", "baseline CF envelopes", t, c8a_envelopes(&d64, &samples, &reference));
    }
    if want(&["5"]) {
        let t = Instant::now();
        report("5", "conditioning", t, c5_conditioning());
    }
    if want(&["7", "8b"]) {
        let t = Instant::now();
        let d32 = desk(32, &object_source(), &HardData::empty(), 7000);
        let (outcome, inv) = c7_inversion(&d32);
        report("7", "end-to-end inversion", t, outcome);
        let t = Instant::now();
        report("8b", "SGR versus latent-space inversion", t, c8b_sgr(&inv));
    }

    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
