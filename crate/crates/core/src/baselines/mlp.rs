use crate::eval::WordTransfer;
use crate::neural::{Mlp, Parameters, Tape};
use crate::reflection::AttributeVector;
use crate::training::Trainable;
use crate::vector::{check_dim, concat};
use crate::{Error, Result};
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

/// Direct regression `v_y = MLP([v_x ; z])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpTransfer {
    pub attribute: AttributeVector,
    pub mlp: Mlp,
}

impl MlpTransfer {
    /// `hidden = [300]` is the 2-layer network, `[300, 300]` the 3-layer one.
    pub fn new(attribute: AttributeVector, hidden: &[usize], seed: u64) -> Result<Self> {
        let d = attribute.z.len();
        let mut dims = vec![2 * d];
        dims.extend_from_slice(hidden);
        dims.push(d);
        Ok(MlpTransfer {
            mlp: Mlp::init(crate::reflection::derive_seed(seed, 3), &dims)?,
            attribute,
        })
    }

    pub fn from_parts(attribute: AttributeVector, mlp: Mlp) -> Result<Self> {
        let d = attribute.z.len();
        if mlp.input_dim() != 2 * d || mlp.output_dim() != d {
            return Err(Error::DimensionMismatch {
                expected: 2 * d,
                found: mlp.input_dim(),
            });
        }
        Ok(MlpTransfer { attribute, mlp })
    }

    pub fn dim(&self) -> usize {
        self.attribute.z.len()
    }

    pub fn transfer(&self, v_x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), v_x)?;
        self.mlp.predict(&concat(v_x, &self.attribute.z))
    }
}

impl WordTransfer for MlpTransfer {
    fn transfer_word(&self, _: &str, v: &[f64]) -> Result<Vec<f64>> {
        self.transfer(v)
    }
}

impl Parameters for MlpTransfer {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        if self.attribute.trainable {
            f(&self.attribute.z);
        }
        self.mlp.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        if self.attribute.trainable {
            f(&mut self.attribute.z);
        }
        self.mlp.visit_mut(f);
    }
}

impl Trainable for MlpTransfer {
    type Cache = Tape;

    fn forward_train(&self, v_x: &[f64]) -> Result<(Vec<f64>, Tape)> {
        check_dim(self.dim(), v_x)?;
        self.mlp.forward(&concat(v_x, &self.attribute.z))
    }

    fn backward_train(&self, tape: &Tape, grad_y: &[f64], grads: &mut Self) -> Result<()> {
        let gin = self.mlp.backward_into(tape, grad_y, &mut grads.mlp)?;
        if self.attribute.trainable {
            let d = self.dim();
            for (g, x) in grads.attribute.z.iter_mut().zip(&gin[d..]) {
                *g += x;
            }
        }
        Ok(())
    }
}
