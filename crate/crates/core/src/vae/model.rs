use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::arch::{Architecture, Layer};
use crate::container::Container;
use crate::error::{dim_err, Error, Result};
use crate::grid::{BinaryField, ContinuousField};
use crate::nn::{self, Params, Tape, Tensor, Var};
use crate::rng::Rng;

pub const WEIGHTS_MAGIC: &[u8; 4] = b"VAEW";

/// Default number of encode/decode cycles applied after the first decode.
pub const DEFAULT_RELOOPS: usize = 10;
/// Default binarization cutoff.
pub const DEFAULT_THRESHOLD: f64 = 0.5;
/// Default latent dimension.
pub const DEFAULT_LATENT_DIM: usize = 50;
/// Default KL weight.
pub const DEFAULT_ALPHA: f64 = 20.0;

/// A point in latent space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentVector(Vec<f64>);

impl LatentVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || !values.iter().all(|v| v.is_finite()) {
            return Err(Error::Contract("latent vector must be non-empty and finite".into()));
        }
        Ok(LatentVector(values))
    }

    pub fn zeros(d: usize) -> Self {
        LatentVector(vec![0.0; d])
    }

    /// Draw `z ~ N(0, I_d)`.
    pub fn standard_normal(d: usize, rng: &mut Rng) -> Self {
        LatentVector((0..d).map(|_| rng.sample(StandardNormal)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// `z = z_l ⊙ exp(logvar / 2) + mu` for a given standard-normal draw `z_l`.
pub fn rescale(mu: &LatentVector, logvar: &LatentVector, z_l: &[f64]) -> Result<LatentVector> {
    if mu.len() != logvar.len() || mu.len() != z_l.len() {
        return Err(dim_err!(
            "mu ({}), logvar ({}) and noise ({}) lengths differ",
            mu.len(),
            logvar.len(),
            z_l.len()
        ));
    }
    let z = mu
        .0
        .iter()
        .zip(&logvar.0)
        .zip(z_l)
        .map(|((&m, &lv), &e)| e * (0.5 * lv).exp() + m)
        .collect();
    Ok(LatentVector(z))
}

/// Reparameterized sample `z = z_l ⊙ σ + μ` with fresh `z_l ~ N(0, I)`.
pub fn reparameterize(mu: &LatentVector, logvar: &LatentVector, rng: &mut Rng) -> Result<LatentVector> {
    let z_l: Vec<f64> = (0..mu.len()).map(|_| rng.sample(StandardNormal)).collect();
    rescale(mu, logvar, &z_l)
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    arch: Architecture,
    alpha: f64,
    trained_epochs: usize,
}

/// Variational autoencoder: architecture, named weights, KL weight and the
/// number of epochs trained so far.
#[derive(Debug, Clone, PartialEq)]
pub struct VaeModel {
    pub arch: Architecture,
    pub weights: Params,
    pub alpha: f64,
    pub trained_epochs: usize,
}

/// Largest batch pushed through the network in one inference call.
const INFERENCE_CHUNK: usize = 64;

impl VaeModel {
    /// Glorot-uniform weights, zero biases.
    pub fn new(arch: Architecture, alpha: f64, rng: &mut Rng) -> Result<Self> {
        let mut weights = Params::new();
        for spec in arch.params()? {
            let t = if spec.name.ends_with(".b") {
                Tensor::zeros(&spec.shape)
            } else {
                let limit = (6.0 / (spec.fan_in + spec.fan_out) as f64).sqrt();
                let n: usize = spec.shape.iter().product();
                let data = (0..n).map(|_| rng.random_range(-limit..limit)).collect();
                Tensor::new(spec.shape.clone(), data)?
            };
            weights.insert(spec.name, t);
        }
        Self::check_alpha(alpha)?;
        Ok(VaeModel {
            arch,
            weights,
            alpha,
            trained_epochs: 0,
        })
    }

    /// Every weight and bias set to zero.
    pub fn zeros(arch: Architecture, alpha: f64) -> Result<Self> {
        let weights = arch
            .params()?
            .into_iter()
            .map(|s| {
                let t = Tensor::zeros(&s.shape);
                (s.name, t)
            })
            .collect();
        Self::check_alpha(alpha)?;
        Ok(VaeModel {
            arch,
            weights,
            alpha,
            trained_epochs: 0,
        })
    }

    fn check_alpha(alpha: f64) -> Result<()> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Config(format!("KL weight must be positive, got {alpha}")));
        }
        Ok(())
    }

    pub fn latent_dim(&self) -> usize {
        self.arch.latent_dim
    }

    pub fn image_dims(&self) -> (usize, usize) {
        (self.arch.height, self.arch.width)
    }

    fn w(&self, name: &str) -> &Tensor {
        &self.weights[name]
    }

    fn run_layers(&self, layers: &[Layer], prefix: &str, mut x: Tensor) -> Result<Tensor> {
        for (i, layer) in layers.iter().enumerate() {
            let n = x.shape()[0];
            x = match *layer {
                Layer::Conv { kernel, activation, .. } => {
                    let mut y = nn::conv2d_fwd(
                        &x,
                        self.w(&format!("{prefix}.{i}.w")),
                        self.w(&format!("{prefix}.{i}.b")),
                        1,
                        kernel / 2,
                    )?;
                    activation.apply_inplace(y.data_mut());
                    y
                }
                Layer::MaxPool { window } => nn::maxpool_fwd(&x, window)?.0,
                Layer::Upsample { factor } => nn::upsample2d(&x, factor)?,
                Layer::Dense { activation, .. } => {
                    let mut y = nn::linear_fwd(
                        &x,
                        self.w(&format!("{prefix}.{i}.w")),
                        self.w(&format!("{prefix}.{i}.b")),
                    )?;
                    activation.apply_inplace(y.data_mut());
                    y
                }
                Layer::Flatten => {
                    let f = x.len() / n;
                    x.reshape(&[n, f])?
                }
                Layer::Reshape { channels, height, width } => x.reshape(&[n, channels, height, width])?,
            };
        }
        Ok(x)
    }

    /// Batched encoder: `[n, 1, h, w]` images to `[n, d]` means and log-variances.
    pub fn encode_batch(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let (h, w) = self.image_dims();
        if x.rank() != 4 || x.shape()[1..] != [1, h, w] {
            return Err(dim_err!("encoder expects [n, 1, {h}, {w}], got {:?}", x.shape()));
        }
        let trunk = self.run_layers(&self.arch.encoder, "enc", x.clone())?;
        let mu = nn::linear_fwd(&trunk, self.w("mu.w"), self.w("mu.b"))?;
        let logvar = nn::linear_fwd(&trunk, self.w("logvar.w"), self.w("logvar.b"))?;
        Ok((mu, logvar))
    }

    /// Batched decoder: `[n, d]` latent rows to `[n, 1, h, w]` probabilities.
    pub fn decode_batch(&self, z: &Tensor) -> Result<Tensor> {
        let d = self.latent_dim();
        if z.rank() != 2 || z.shape()[1] != d {
            return Err(dim_err!("decoder expects [n, {d}], got {:?}", z.shape()));
        }
        self.run_layers(&self.arch.decoder, "dec", z.clone())
    }

    fn field_tensor(&self, f: &ContinuousField) -> Result<Tensor> {
        let (h, w) = self.image_dims();
        if f.dims() != (h, w) {
            return Err(dim_err!("field is {}×{}, model expects {h}×{w}", f.ny(), f.nx()));
        }
        Tensor::new(vec![1, 1, h, w], f.as_slice().to_vec())
    }

    pub fn encode(&self, x: &BinaryField) -> Result<(LatentVector, LatentVector)> {
        self.encode_continuous(&x.to_f64())
    }

    pub fn encode_continuous(&self, x: &ContinuousField) -> Result<(LatentVector, LatentVector)> {
        let (mu, logvar) = self.encode_batch(&self.field_tensor(x)?)?;
        Ok((LatentVector(mu.into_data()), LatentVector(logvar.into_data())))
    }

    pub fn decode(&self, z: &LatentVector) -> Result<ContinuousField> {
        let d = self.latent_dim();
        if z.len() != d {
            return Err(dim_err!("latent vector has {} entries, model uses {d}", z.len()));
        }
        let out = self.decode_batch(&Tensor::new(vec![1, d], z.0.clone())?)?;
        let (h, w) = self.image_dims();
        ContinuousField::from_vec(h, w, out.into_data())
    }

    /// Decode, then `reloops` times binarize the current field at
    /// `threshold`, re-encode it and decode its mean. Returns the final
    /// continuous field for every input.
    ///
    /// The encoder only ever sees binary fields in training; feeding it the
    /// blurred continuous output instead erodes channels a little on every
    /// pass.
    pub fn generate_continuous_batch(
        &self,
        zs: &[LatentVector],
        reloops: usize,
        threshold: f64,
    ) -> Result<Vec<ContinuousField>> {
        check_threshold(threshold)?;
        let d = self.latent_dim();
        let (h, w) = self.image_dims();
        let mut out = Vec::with_capacity(zs.len());
        for chunk in zs.chunks(INFERENCE_CHUNK) {
            let mut flat = Vec::with_capacity(chunk.len() * d);
            for z in chunk {
                if z.len() != d {
                    return Err(dim_err!("latent vector has {} entries, model uses {d}", z.len()));
                }
                flat.extend_from_slice(&z.0);
            }
            let mut z = Tensor::new(vec![chunk.len(), d], flat)?;
            let mut x = self.decode_batch(&z)?;
            for _ in 0..reloops {
                let binary = x.map(|v| f64::from(u8::from(v > threshold)));
                z = self.encode_batch(&binary)?.0;
                x = self.decode_batch(&z)?;
            }
            out.extend(
                x.data()
                    .chunks(h * w)
                    .map(|c| ContinuousField::from_vec(h, w, c.to_vec()).expect("decoder output size")),
            );
        }
        Ok(out)
    }

    pub fn generate_batch(&self, zs: &[LatentVector], reloops: usize, threshold: f64) -> Result<Vec<BinaryField>> {
        Ok(self
            .generate_continuous_batch(zs, reloops, threshold)?
            .iter()
            .map(|f| f.threshold(threshold))
            .collect())
    }

    /// Deterministic generation from `z`: decode, reloop through the full
    /// network using the encoder mean of the binarized field, then binarize
    /// (`> threshold` → 1).
    pub fn generate(&self, z: &LatentVector, reloops: usize, threshold: f64) -> Result<BinaryField> {
        Ok(self
            .generate_batch(std::slice::from_ref(z), reloops, threshold)?
            .pop()
            .expect("one output per input"))
    }

    /// `n` realizations from `z ~ N(0, I)` with default relooping and cutoff.
    pub fn sample_prior(&self, n: usize, rng: &mut Rng) -> Result<Vec<BinaryField>> {
        self.sample_prior_with(n, DEFAULT_RELOOPS, DEFAULT_THRESHOLD, rng)
    }

    pub fn sample_prior_with(&self, n: usize, reloops: usize, threshold: f64, rng: &mut Rng) -> Result<Vec<BinaryField>> {
        if n == 0 {
            return Err(Error::Config("sample count must be at least 1".into()));
        }
        let zs: Vec<_> = (0..n)
            .map(|_| LatentVector::standard_normal(self.latent_dim(), rng))
            .collect();
        self.generate_batch(&zs, reloops, threshold)
    }

    /// Record the full forward pass for a batch on `tape`. Returns
    /// `(params, mu, logvar, xhat)` vars; `noise` supplies `z_l` as `[n, d]`.
    pub(crate) fn forward_tape(
        &self,
        tape: &mut Tape,
        x: Var,
        noise: Tensor,
    ) -> Result<(BTreeMap<String, Var>, Var, Var, Var)> {
        let params: BTreeMap<String, Var> = self
            .weights
            .iter()
            .map(|(name, t)| (name.clone(), tape.leaf(t.clone())))
            .collect();
        let trunk = record_layers(tape, &params, &self.arch.encoder, "enc", x)?;
        let mu = tape.linear(trunk, params["mu.w"], params["mu.b"])?;
        let logvar = tape.linear(trunk, params["logvar.w"], params["logvar.b"])?;
        let half = tape.scale(logvar, 0.5);
        let sigma = tape.exp(half);
        let eps = tape.leaf(noise);
        let scaled = tape.mul(sigma, eps)?;
        let z = tape.add(scaled, mu)?;
        let xhat = record_layers(tape, &params, &self.arch.decoder, "dec", z)?;
        Ok((params, mu, logvar, xhat))
    }

    pub fn to_container(&self) -> Container {
        let manifest = Manifest {
            arch: self.arch.clone(),
            alpha: self.alpha,
            trained_epochs: self.trained_epochs,
        };
        let mut c = Container::new(
            WEIGHTS_MAGIC,
            serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
        );
        for (name, t) in &self.weights {
            c.push(name.clone(), t.clone());
        }
        c
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container().write(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let c = Container::read(path, WEIGHTS_MAGIC)?;
        let manifest: Manifest =
            serde_json::from_str(&c.meta).map_err(|e| Error::format("model manifest", path, e))?;
        let specs = manifest.arch.params()?;
        let mut weights = Params::new();
        for spec in specs {
            let t = c
                .get(&spec.name)
                .ok_or_else(|| Error::format("model weights", path, format!("missing `{}`", spec.name)))?;
            if t.shape() != spec.shape.as_slice() {
                return Err(Error::format(
                    "model weights",
                    path,
                    format!("`{}` has shape {:?}, expected {:?}", spec.name, t.shape(), spec.shape),
                ));
            }
            weights.insert(spec.name, t.clone());
        }
        Self::check_alpha(manifest.alpha)?;
        Ok(VaeModel {
            arch: manifest.arch,
            weights,
            alpha: manifest.alpha,
            trained_epochs: manifest.trained_epochs,
        })
    }
}

fn check_threshold(threshold: f64) -> Result<()> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Config(format!("threshold must lie in (0, 1), got {threshold}")));
    }
    Ok(())
}

fn record_layers(
    tape: &mut Tape,
    params: &BTreeMap<String, Var>,
    layers: &[Layer],
    prefix: &str,
    mut x: Var,
) -> Result<Var> {
    for (i, layer) in layers.iter().enumerate() {
        let n = tape.value(x).shape()[0];
        x = match *layer {
            Layer::Conv { kernel, activation, .. } => {
                let y = tape.conv2d(
                    x,
                    params[&format!("{prefix}.{i}.w")],
                    params[&format!("{prefix}.{i}.b")],
                    1,
                    kernel / 2,
                )?;
                tape.activation(y, activation)
            }
            Layer::MaxPool { window } => tape.maxpool(x, window)?,
            Layer::Upsample { factor } => tape.upsample(x, factor)?,
            Layer::Dense { activation, .. } => {
                let y = tape.linear(x, params[&format!("{prefix}.{i}.w")], params[&format!("{prefix}.{i}.b")])?;
                tape.activation(y, activation)
            }
            Layer::Flatten => {
                let f = tape.value(x).len() / n;
                tape.reshape(x, &[n, f])?
            }
            Layer::Reshape { channels, height, width } => tape.reshape(x, &[n, channels, height, width])?,
        };
    }
    Ok(x)
}
