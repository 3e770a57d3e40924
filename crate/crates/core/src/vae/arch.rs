use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Activation;

/// One layer of the encoder trunk or decoder.
///
/// Convolutions use stride 1 and `kernel / 2` zero padding, so odd kernels
/// preserve spatial size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layer {
    Conv {
        filters: usize,
        kernel: usize,
        activation: Activation,
    },
    MaxPool {
        window: usize,
    },
    Upsample {
        factor: usize,
    },
    Dense {
        units: usize,
        activation: Activation,
    },
    Flatten,
    Reshape {
        channels: usize,
        height: usize,
        width: usize,
    },
}

/// Activation shape between layers (batch dimension omitted).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Image { c: usize, h: usize, w: usize },
    Flat(usize),
}

impl Shape {
    pub fn size(self) -> usize {
        match self {
            Shape::Image { c, h, w } => c * h * w,
            Shape::Flat(n) => n,
        }
    }
}

/// A trainable tensor implied by the architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub fan_in: usize,
    pub fan_out: usize,
}

/// Architecture manifest: input size, latent dimension and layer lists.
///
/// The encoder trunk must end in a flat shape; two dense heads of size
/// `latent_dim` (mean and log-variance) follow it. The decoder maps the
/// latent vector back to a `1 × height × width` image whose last layer uses
/// a sigmoid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub height: usize,
    pub width: usize,
    pub latent_dim: usize,
    pub encoder: Vec<Layer>,
    pub decoder: Vec<Layer>,
}

impl Architecture {
    /// The default network: two conv/pool stages, a dense bottleneck and a
    /// mirrored upsampling decoder.
    pub fn reference(height: usize, width: usize, latent_dim: usize) -> Result<Self> {
        Self::with_widths(height, width, latent_dim, 16, 32, 256)
    }

    /// Same topology as [`Architecture::reference`] with custom widths.
    pub fn with_widths(
        height: usize,
        width: usize,
        latent_dim: usize,
        conv1: usize,
        conv2: usize,
        dense: usize,
    ) -> Result<Self> {
        if !height.is_multiple_of(4) || !width.is_multiple_of(4) {
            return Err(Error::Config(format!(
                "image size {height}×{width} must be divisible by 4"
            )));
        }
        use Activation::{Relu, Sigmoid};
        let conv = |filters, activation| Layer::Conv {
            filters,
            kernel: 3,
            activation,
        };
        let arch = Architecture {
            height,
            width,
            latent_dim,
            encoder: vec![
                conv(conv1, Relu),
                Layer::MaxPool { window: 2 },
                conv(conv2, Relu),
                Layer::MaxPool { window: 2 },
                Layer::Flatten,
                Layer::Dense {
                    units: dense,
                    activation: Relu,
                },
            ],
            decoder: vec![
                Layer::Dense {
                    units: dense,
                    activation: Relu,
                },
                Layer::Dense {
                    units: conv2 * (height / 4) * (width / 4),
                    activation: Relu,
                },
                Layer::Reshape {
                    channels: conv2,
                    height: height / 4,
                    width: width / 4,
                },
                Layer::Upsample { factor: 2 },
                conv(conv1, Relu),
                Layer::Upsample { factor: 2 },
                conv(1, Sigmoid),
            ],
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn input_shape(&self) -> Shape {
        Shape::Image {
            c: 1,
            h: self.height,
            w: self.width,
        }
    }

    /// Pixels per latent dimension.
    pub fn compression_ratio(&self) -> f64 {
        (self.height * self.width) as f64 / self.latent_dim as f64
    }

    /// Walk both halves, checking shapes, and list every parameter tensor in
    /// forward order.
    pub fn params(&self) -> Result<Vec<ParamSpec>> {
        if self.latent_dim == 0 {
            return Err(Error::Config("latent dimension must be positive".into()));
        }
        let mut specs = Vec::new();
        let trunk = walk(&self.encoder, "enc", self.input_shape(), &mut specs)?;
        let Shape::Flat(features) = trunk else {
            return Err(Error::Config("encoder trunk must end with a flat layer".into()));
        };
        for head in ["mu", "logvar"] {
            specs.push(ParamSpec {
                name: format!("{head}.w"),
                shape: vec![self.latent_dim, features],
                fan_in: features,
                fan_out: self.latent_dim,
            });
            specs.push(ParamSpec {
                name: format!("{head}.b"),
                shape: vec![self.latent_dim],
                fan_in: features,
                fan_out: self.latent_dim,
            });
        }
        let out = walk(&self.decoder, "dec", Shape::Flat(self.latent_dim), &mut specs)?;
        if out != self.input_shape() {
            return Err(Error::Config(format!(
                "decoder produces {out:?}, expected {:?}",
                self.input_shape()
            )));
        }
        match self.decoder.iter().rev().find(|l| matches!(l, Layer::Conv { .. } | Layer::Dense { .. })) {
            Some(Layer::Conv { activation: Activation::Sigmoid, .. })
            | Some(Layer::Dense { activation: Activation::Sigmoid, .. }) => {}
            _ => return Err(Error::Config("decoder must end with a sigmoid layer".into())),
        }
        Ok(specs)
    }

    pub fn validate(&self) -> Result<()> {
        self.params().map(|_| ())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("architecture serializes")
    }
}

fn walk(layers: &[Layer], prefix: &str, mut shape: Shape, specs: &mut Vec<ParamSpec>) -> Result<Shape> {
    for (i, layer) in layers.iter().enumerate() {
        let bad = |msg: String| Error::Config(format!("{prefix} layer {i} ({layer:?}): {msg}"));
        shape = match (*layer, shape) {
            (Layer::Conv { filters, kernel, .. }, Shape::Image { c, h, w }) => {
                if kernel == 0 || kernel % 2 == 0 || filters == 0 {
                    return Err(bad("kernel must be odd and filters positive".into()));
                }
                specs.push(ParamSpec {
                    name: format!("{prefix}.{i}.w"),
                    shape: vec![filters, c, kernel, kernel],
                    fan_in: c * kernel * kernel,
                    fan_out: filters * kernel * kernel,
                });
                specs.push(ParamSpec {
                    name: format!("{prefix}.{i}.b"),
                    shape: vec![filters],
                    fan_in: c * kernel * kernel,
                    fan_out: filters * kernel * kernel,
                });
                Shape::Image { c: filters, h, w }
            }
            (Layer::MaxPool { window }, Shape::Image { c, h, w }) => {
                if window == 0 || h % window != 0 || w % window != 0 {
                    return Err(bad(format!("window does not divide {h}×{w}")));
                }
                Shape::Image {
                    c,
                    h: h / window,
                    w: w / window,
                }
            }
            (Layer::Upsample { factor }, Shape::Image { c, h, w }) => {
                if factor == 0 {
                    return Err(bad("factor must be positive".into()));
                }
                Shape::Image {
                    c,
                    h: h * factor,
                    w: w * factor,
                }
            }
            (Layer::Flatten, s) => Shape::Flat(s.size()),
            (Layer::Dense { units, .. }, Shape::Flat(n)) => {
                if units == 0 {
                    return Err(bad("units must be positive".into()));
                }
                specs.push(ParamSpec {
                    name: format!("{prefix}.{i}.w"),
                    shape: vec![units, n],
                    fan_in: n,
                    fan_out: units,
                });
                specs.push(ParamSpec {
                    name: format!("{prefix}.{i}.b"),
                    shape: vec![units],
                    fan_in: n,
                    fan_out: units,
                });
                Shape::Flat(units)
            }
            (Layer::Reshape { channels, height, width }, s) => {
                if channels * height * width != s.size() || s.size() == 0 {
                    return Err(bad(format!("cannot reshape {} values", s.size())));
                }
                Shape::Image {
                    c: channels,
                    h: height,
                    w: width,
                }
            }
            (_, s) => return Err(bad(format!("not applicable to {s:?}"))),
        };
    }
    Ok(shape)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_architecture_shapes() {
        let arch = Architecture::reference(64, 64, 20).unwrap();
        let params = arch.params().unwrap();
        let find = |n: &str| params.iter().find(|p| p.name == n).unwrap().shape.clone();
        assert_eq!(find("enc.0.w"), vec![16, 1, 3, 3]);
        assert_eq!(find("enc.2.w"), vec![32, 16, 3, 3]);
        assert_eq!(find("enc.5.w"), vec![256, 32 * 16 * 16]);
        assert_eq!(find("mu.w"), vec![20, 256]);
        assert_eq!(find("logvar.b"), vec![20]);
        assert_eq!(find("dec.1.w"), vec![32 * 16 * 16, 256]);
        assert_eq!(find("dec.6.w"), vec![1, 16, 3, 3]);
    }

    #[test]
    fn compression_ratio_of_paper_setting() {
        let arch = Architecture::reference(100, 100, 50).unwrap();
        assert_eq!(arch.compression_ratio(), 200.0);
    }

    #[test]
    fn invalid_architectures() {
        assert!(Architecture::reference(30, 32, 5).is_err());
        let mut arch = Architecture::reference(8, 8, 3).unwrap();
        arch.decoder.pop();
        assert!(arch.validate().is_err());
        let mut arch = Architecture::reference(8, 8, 3).unwrap();
        if let Some(Layer::Conv { activation, .. }) = arch.decoder.last_mut() {
            *activation = Activation::Relu;
        }
        assert!(arch.validate().is_err());
    }

    #[test]
    fn json_roundtrip() {
        let arch = Architecture::with_widths(8, 12, 3, 2, 3, 5).unwrap();
        let back: Architecture = serde_json::from_str(&arch.to_json()).unwrap();
        assert_eq!(back, arch);
    }
}
