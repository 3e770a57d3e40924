use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::container::Container;
use crate::error::{Error, Result};

/// Named parameter tensors, ordered by name.
pub type Params = BTreeMap<String, Tensor>;

pub const ADAM_MAGIC: &[u8; 4] = b"ADAM";

/// Moment estimates and hyper-parameters of the ADAM optimizer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Params,
    v: Params,
}

impl Default for AdamState {
    fn default() -> Self {
        AdamState::new(1e-3)
    }
}

impl AdamState {
    pub fn new(lr: f64) -> Self {
        AdamState {
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: Params::new(),
            v: Params::new(),
        }
    }

    pub fn first_moment(&self, name: &str) -> Option<&Tensor> {
        self.m.get(name)
    }

    /// Hyper-parameters as JSON metadata, moments as `m/<name>` and
    /// `v/<name>` tensors.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut c = Container::new(ADAM_MAGIC, serde_json::to_string(&self.clone_hyper())?);
        for (prefix, moments) in [("m/", &self.m), ("v/", &self.v)] {
            for (name, t) in moments {
                c.push(format!("{prefix}{name}"), t.clone());
            }
        }
        c.write(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let c = Container::read(path, ADAM_MAGIC)?;
        let mut state: AdamState =
            serde_json::from_str(&c.meta).map_err(|e| Error::format("optimizer state", path, e))?;
        for (name, t) in c.tensors {
            let slot = match name.split_at_checked(2) {
                Some(("m/", rest)) => state.m.insert(rest.to_string(), t),
                Some(("v/", rest)) => state.v.insert(rest.to_string(), t),
                _ => return Err(Error::format("optimizer state", path, format!("unexpected tensor `{name}`"))),
            };
            if slot.is_some() {
                return Err(Error::format("optimizer state", path, format!("duplicate tensor `{name}`")));
            }
        }
        Ok(state)
    }

    fn clone_hyper(&self) -> AdamState {
        AdamState {
            step: self.step,
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            m: Params::new(),
            v: Params::new(),
        }
    }
}

/// One bias-corrected ADAM update of every parameter that has a gradient.
///
/// All gradients are checked before any parameter is touched, so a
/// non-finite gradient leaves both `params` and `state` unchanged.
pub fn adam_step(params: &mut Params, grads: &Params, state: &mut AdamState) -> Result<()> {
    for (name, g) in grads {
        let p = params
            .get(name)
            .ok_or_else(|| Error::Contract(format!("gradient for unknown parameter `{name}`")))?;
        if p.shape() != g.shape() {
            return Err(Error::Dimension(format!(
                "gradient of `{name}` has shape {:?}, parameter {:?}",
                g.shape(),
                p.shape()
            )));
        }
        if !g.all_finite() {
            return Err(Error::NonFinite { name: name.clone() });
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    let (b1, b2, lr, eps) = (state.beta1, state.beta2, state.lr, state.eps);
    for (name, g) in grads {
        let p = params.get_mut(name).expect("checked above");
        let m = state
            .m
            .entry(name.clone())
            .or_insert_with(|| Tensor::zeros(g.shape()));
        let v = state
            .v
            .entry(name.clone())
            .or_insert_with(|| Tensor::zeros(g.shape()));
        for (((pv, &gv), mv), vv) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *mv = b1 * *mv + (1.0 - b1) * gv;
            *vv = b2 * *vv + (1.0 - b2) * gv * gv;
            let mhat = *mv / c1;
            let vhat = *vv / c2;
            *pv -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}
