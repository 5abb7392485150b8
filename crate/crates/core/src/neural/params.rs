use crate::{Error, Result};
use alloc::vec::Vec;

/// A bag of trainable `f64` slices visited in a fixed order.
///
/// The gradient of a model has the same type as the model, so optimizers and
/// the gradient checker can walk both in lockstep.
pub trait Parameters {
    fn visit(&self, f: &mut dyn FnMut(&[f64]));

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64]));

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |s| n += s.len());
        n
    }

    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        self.visit(&mut |s| out.extend_from_slice(s));
        out
    }

    fn assign(&mut self, flat: &[f64]) -> Result<()> {
        let n = self.num_params();
        if flat.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: flat.len(),
            });
        }
        let mut offset = 0;
        self.visit_mut(&mut |s| {
            s.copy_from_slice(&flat[offset..offset + s.len()]);
            offset += s.len();
        });
        Ok(())
    }

    /// Reads the coordinate at flat position `index`.
    fn get_coord(&self, index: usize) -> Option<f64> {
        let mut offset = 0;
        let mut out = None;
        self.visit(&mut |s| {
            if out.is_none() && index < offset + s.len() {
                out = Some(s[index - offset]);
            }
            offset += s.len();
        });
        out
    }

    /// Writes the coordinate at flat position `index`. Returns false when out of range.
    fn set_coord(&mut self, index: usize, value: f64) -> bool {
        let mut offset = 0;
        let mut done = false;
        self.visit_mut(&mut |s| {
            if !done && index < offset + s.len() {
                s[index - offset] = value;
                done = true;
            }
            offset += s.len();
        });
        done
    }

    fn fill(&mut self, value: f64) {
        self.visit_mut(&mut |s| s.iter_mut().for_each(|x| *x = value));
    }

    fn zeros_like(&self) -> Self
    where
        Self: Clone,
    {
        let mut z = self.clone();
        z.fill(0.0);
        z
    }

    /// `self += alpha * other`; shapes must agree.
    fn add_scaled(&mut self, alpha: f64, other: &Self) -> Result<()>
    where
        Self: Sized,
    {
        let flat = other.flatten();
        if flat.len() != self.num_params() {
            return Err(Error::DimensionMismatch {
                expected: self.num_params(),
                found: flat.len(),
            });
        }
        let mut offset = 0;
        self.visit_mut(&mut |s| {
            for (x, g) in s.iter_mut().zip(&flat[offset..]) {
                *x += alpha * g;
            }
            offset += s.len();
        });
        Ok(())
    }
}

impl Parameters for Vec<f64> {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        f(self)
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        f(self)
    }
}
