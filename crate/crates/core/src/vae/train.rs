use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::loss::LossParts;
use super::model::VaeModel;
use crate::error::{dim_err, Error, Result};
use crate::grid::BinaryField;
use crate::nn::{adam_step, AdamState, Params, Tape, Tensor};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub alpha: f64,
    pub seed: u64,
    pub lr: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            // Few thousand images need many small steps; with batches of 32
            // the KL term collapses the posterior before the decoder uses z.
            batch_size: 8,
            alpha: super::model::DEFAULT_ALPHA,
            seed: 0,
            lr: 1e-3,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch size must be at least 1".into()));
        }
        if !(self.alpha > 0.0) || !(self.lr >= 0.0) {
            return Err(Error::Config(format!(
                "alpha must be positive and lr non-negative (alpha = {}, lr = {})",
                self.alpha, self.lr
            )));
        }
        Ok(())
    }
}

/// Mean per-image losses over one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub bce: f64,
    pub kl: f64,
    pub total: f64,
}

/// Stack fields into a `[n, 1, h, w]` batch.
pub fn batch_tensor(fields: &[&BinaryField]) -> Result<Tensor> {
    let first = fields.first().ok_or_else(|| dim_err!("empty batch"))?;
    let (h, w) = first.dims();
    let mut data = Vec::with_capacity(fields.len() * h * w);
    for f in fields {
        if f.dims() != (h, w) {
            return Err(dim_err!("batch mixes {h}×{w} and {}×{} fields", f.ny(), f.nx()));
        }
        data.extend(f.as_slice().iter().map(|&v| f64::from(v)));
    }
    Tensor::new(vec![fields.len(), 1, h, w], data)
}

/// Batch-mean loss `(Σ Lˣ + α Σ Lᶻ) / n` for fixed reparameterization noise.
pub fn batch_loss(model: &VaeModel, x: &Tensor, noise: &Tensor) -> Result<LossParts> {
    let mut tape = Tape::new();
    let (loss, parts, _) = record_loss(model, &mut tape, x, noise)?;
    let _ = loss;
    Ok(parts)
}

/// Batch-mean loss and its gradient with respect to every weight tensor.
pub fn loss_and_gradients(model: &VaeModel, x: &Tensor, noise: &Tensor) -> Result<(LossParts, Params)> {
    let mut tape = Tape::new();
    let (loss, parts, params) = record_loss(model, &mut tape, x, noise)?;
    let mut grads = tape.backward(loss)?;
    let mut out = Params::new();
    for (name, var) in params {
        let g = grads
            .take(var)
            .unwrap_or_else(|| Tensor::zeros(model.weights[&name].shape()));
        out.insert(name, g);
    }
    Ok((parts, out))
}

fn record_loss(
    model: &VaeModel,
    tape: &mut Tape,
    x: &Tensor,
    noise: &Tensor,
) -> Result<(crate::nn::Var, LossParts, std::collections::BTreeMap<String, crate::nn::Var>)> {
    let n = x.shape()[0];
    if noise.shape() != [n, model.latent_dim()] {
        return Err(dim_err!("noise must be [{n}, {}], got {:?}", model.latent_dim(), noise.shape()));
    }
    let xv = tape.leaf(x.clone());
    let (params, mu, logvar, xhat) = model.forward_tape(tape, xv, noise.clone())?;
    let bce = tape.bce(xhat, x.clone())?;
    let kl = tape.kl(mu, logvar)?;
    let weighted = tape.scale(kl, model.alpha);
    let sum = tape.add(bce, weighted)?;
    let loss = tape.scale(sum, 1.0 / n as f64);
    let inv = 1.0 / n as f64;
    let parts = LossParts {
        bce: tape.value(bce).item() * inv,
        kl: tape.value(kl).item() * inv,
        total: tape.value(loss).item(),
    };
    Ok((loss, parts, params))
}

/// Mini-batch ADAM on the weighted VAE loss. Uses `cfg.alpha` as the model's
/// KL weight from here on. Epoch `e` (counted over the model's lifetime)
/// shuffles and draws noise from stream `e` of `cfg.seed`, so resumed runs
/// continue the same sequence.
pub fn train(model: &mut VaeModel, data: &[BinaryField], cfg: &TrainConfig) -> Result<Vec<EpochLoss>> {
    let mut adam = AdamState::new(cfg.lr);
    train_with(model, data, cfg, &mut adam, |_| {})
}

pub fn train_with(
    model: &mut VaeModel,
    data: &[BinaryField],
    cfg: &TrainConfig,
    adam: &mut AdamState,
    mut on_epoch: impl FnMut(&EpochLoss),
) -> Result<Vec<EpochLoss>> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let dims = model.image_dims();
    if let Some(bad) = data.iter().find(|f| f.dims() != dims) {
        return Err(dim_err!(
            "training field is {}×{}, model expects {}×{}",
            bad.ny(),
            bad.nx(),
            dims.0,
            dims.1
        ));
    }
    model.alpha = cfg.alpha;
    adam.lr = cfg.lr;
    let d = model.latent_dim();
    let mut history = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let epoch = model.trained_epochs;
        let mut r = rng::stream(cfg.seed, epoch as u64);
        // The permutation depends on the epoch index only, so a resumed run
        // sees the same batches as an uninterrupted one.
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut r);
        let (mut bce, mut kl, mut total) = (0.0, 0.0, 0.0);
        for (batch_idx, idx) in order.chunks(cfg.batch_size).enumerate() {
            let fields: Vec<&BinaryField> = idx.iter().map(|&i| &data[i]).collect();
            let x = batch_tensor(&fields)?;
            let noise_data = (0..idx.len() * d).map(|_| r.sample(StandardNormal)).collect();
            let noise = Tensor::new(vec![idx.len(), d], noise_data)?;
            let (parts, grads) = loss_and_gradients(model, &x, &noise)?;
            if !parts.total.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: batch_idx,
                    loss: parts.total,
                });
            }
            adam_step(&mut model.weights, &grads, adam)?;
            let w = idx.len() as f64;
            bce += parts.bce * w;
            kl += parts.kl * w;
            total += parts.total * w;
        }
        let n = data.len() as f64;
        let rec = EpochLoss {
            epoch,
            bce: bce / n,
            kl: kl / n,
            total: total / n,
        };
        model.trained_epochs += 1;
        on_epoch(&rec);
        history.push(rec);
    }
    Ok(history)
}

/// CSV with header `epoch,bce,kl,total`.
pub fn write_loss_csv(history: &[EpochLoss], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for rec in history {
        w.serialize(rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_loss_csv(path: &Path) -> Result<Vec<EpochLoss>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vae::Architecture;

    /// Denominator floor for relative gradient error; below it the check is
    /// effectively absolute.
    const FD_FLOOR: f64 = 1e-6;

    fn tiny_model(seed: u64) -> VaeModel {
        let arch = Architecture::with_widths(8, 8, 3, 2, 3, 6).unwrap();
        VaeModel::new(arch, 20.0, &mut rng::seeded(seed)).unwrap()
    }

    fn stripes(offset: usize) -> BinaryField {
        BinaryField::from_vec(8, 8, (0..64).map(|i| (i / 8 + offset).is_multiple_of(3) as u8).collect()).unwrap()
    }

    #[test]
    fn zero_learning_rate_keeps_weights() {
        let mut model = tiny_model(1);
        let before = model.weights.clone();
        let cfg = TrainConfig { epochs: 1, batch_size: 4, lr: 0.0, ..Default::default() };
        let hist = train(&mut model, &[stripes(0)], &cfg).unwrap();
        assert_eq!(hist.len(), 1);
        assert_eq!(model.weights, before);
        assert_eq!(model.trained_epochs, 1);
    }

    #[test]
    fn training_is_reproducible_and_resumable() {
        let data: Vec<_> = (0..6).map(stripes).collect();
        let cfg = TrainConfig { epochs: 3, batch_size: 4, lr: 1e-2, seed: 11, ..Default::default() };
        let mut a = tiny_model(2);
        let mut b = tiny_model(2);
        let ha = train(&mut a, &data, &cfg).unwrap();
        let hb = train(&mut b, &data, &cfg).unwrap();
        assert_eq!(a.weights, b.weights);
        assert_eq!(ha, hb);
        assert_eq!(a.trained_epochs, 3);
        let hist = train(&mut a, &data, &TrainConfig { epochs: 2, ..cfg }).unwrap();
        assert_eq!(hist[0].epoch, 3);
        assert_eq!(a.trained_epochs, 5);

        // One epoch, then two more with the same optimizer state, equals
        // three epochs in one go.
        let mut c = tiny_model(2);
        let mut adam = AdamState::new(cfg.lr);
        train_with(&mut c, &data, &TrainConfig { epochs: 1, ..cfg }, &mut adam, |_| {}).unwrap();
        train_with(&mut c, &data, &TrainConfig { epochs: 2, ..cfg }, &mut adam, |_| {}).unwrap();
        assert_eq!(c.weights, b.weights);
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut m = tiny_model(3);
        assert!(train(&mut m, &[], &TrainConfig::default()).is_err());
        let wrong = BinaryField::zeros(4, 4).unwrap();
        assert!(train(&mut m, &[wrong], &TrainConfig::default()).is_err());
        let cfg = TrainConfig { batch_size: 0, ..Default::default() };
        assert!(train(&mut m, &[stripes(0)], &cfg).is_err());
    }

    #[test]
    fn loss_decreases_on_a_tiny_set() {
        let data: Vec<_> = (0..8).map(stripes).collect();
        let mut m = tiny_model(4);
        let cfg = TrainConfig { epochs: 40, batch_size: 4, lr: 5e-3, seed: 1, alpha: 1.0 };
        let hist = train(&mut m, &data, &cfg).unwrap();
        assert!(hist.last().unwrap().total < hist[0].total);
    }

    #[test]
    fn analytic_gradients_match_central_differences() {
        // Nonzero biases keep ReLU pre-activations off the kink at 0.
        let mut model = tiny_model(5);
        let mut r = rng::seeded(6);
        for (name, w) in model.weights.iter_mut() {
            if name.ends_with(".b") {
                w.data_mut().iter_mut().for_each(|v| *v = r.random_range(-0.3..0.3));
            }
        }
        let fields: Vec<_> = (0..3)
            .map(|_| BinaryField::from_vec(8, 8, (0..64).map(|_| r.random_bool(0.4) as u8).collect()).unwrap())
            .collect();
        let x = batch_tensor(&fields.iter().collect::<Vec<_>>()).unwrap();
        let noise = Tensor::new(vec![3, 3], (0..9).map(|_| r.sample(StandardNormal)).collect()).unwrap();
        let (_, grads) = loss_and_gradients(&model, &x, &noise).unwrap();
        let h = 1e-5;
        let mut checked = 0;
        for name in model.weights.keys().cloned().collect::<Vec<_>>() {
            for i in 0..model.weights[&name].len() {
                let orig = model.weights[&name].data()[i];
                let mut eval = |v: f64| {
                    model.weights.get_mut(&name).unwrap().data_mut()[i] = v;
                    batch_loss(&model, &x, &noise).unwrap().total
                };
                let fd = (eval(orig + h) - eval(orig - h)) / (2.0 * h);
                eval(orig);
                let g = grads[&name].data()[i];
                let rel = (g - fd).abs() / g.abs().max(fd.abs()).max(FD_FLOOR);
                assert!(rel < 1e-4, "{name}[{i}]: analytic {g:e}, numeric {fd:e}");
                checked += 1;
            }
        }
        let total: usize = model.weights.values().map(Tensor::len).sum();
        assert_eq!(checked, total);
    }
}
