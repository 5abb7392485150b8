use super::Parameters;
use crate::{Error, Result};
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

/// Adam hyperparameters. Defaults: `alpha = 1e-4`, `beta1 = 0.9`, `beta2 = 0.999`, `eps = 1e-8`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            alpha: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_alpha(alpha: f64) -> Self {
        AdamConfig {
            alpha,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.alpha > 0.0
            && self.eps > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2);
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("Adam needs alpha > 0, eps > 0 and betas in [0, 1)"))
        }
    }
}

/// Moment accumulators and step counter for one parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    pub t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(config: AdamConfig, num_params: usize) -> Result<Self> {
        config.validate()?;
        Ok(AdamState {
            config,
            t: 0,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
        })
    }

    pub fn for_params<P: Parameters>(config: AdamConfig, params: &P) -> Result<Self> {
        Self::new(config, params.num_params())
    }

    pub fn num_params(&self) -> usize {
        self.m.len()
    }

    /// One bias-corrected Adam update. A non-finite gradient leaves both the
    /// parameters and the state untouched.
    pub fn step<P: Parameters>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        let g = grads.flatten();
        if g.len() != self.m.len() || params.num_params() != self.m.len() {
            return Err(Error::DimensionMismatch {
                expected: self.m.len(),
                found: g.len(),
            });
        }
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteGradient);
        }
        let AdamConfig {
            alpha,
            beta1,
            beta2,
            eps,
        } = self.config;
        self.t += 1;
        let bc1 = 1.0 - libm::pow(beta1, self.t as f64);
        let bc2 = 1.0 - libm::pow(beta2, self.t as f64);
        for ((m, v), &gi) in self.m.iter_mut().zip(&mut self.v).zip(&g) {
            *m = beta1 * *m + (1.0 - beta1) * gi;
            *v = beta2 * *v + (1.0 - beta2) * gi * gi;
        }
        let (m, v) = (&self.m, &self.v);
        let mut offset = 0;
        params.visit_mut(&mut |s| {
            for (j, x) in s.iter_mut().enumerate() {
                let mhat = m[offset + j] / bc1;
                let vhat = v[offset + j] / bc2;
                *x -= alpha * mhat / (libm::sqrt(vhat) + eps);
            }
            offset += s.len();
        });
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = vec![1.0, -2.0, 3.5];
        let before = p.clone();
        let mut st = AdamState::for_params(AdamConfig::default(), &p).unwrap();
        for _ in 0..5 {
            st.step(&mut p, &vec![0.0; 3]).unwrap();
        }
        assert_eq!(p, before);
        assert_eq!(st.t, 5);
    }

    #[test]
    fn first_step_moves_by_alpha() {
        let mut p = vec![0.5];
        let mut st = AdamState::new(AdamConfig::with_alpha(1e-3), 1).unwrap();
        st.step(&mut p, &vec![1.0]).unwrap();
        assert!((0.5 - p[0] - 1e-3).abs() < 1e-6);
    }

    /// Scalar Adam written out directly, for f(x) = x^2.
    fn reference_quadratic(x0: f64, alpha: f64, steps: usize) -> f64 {
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
        let (mut x, mut m, mut v) = (x0, 0.0, 0.0);
        for t in 1..=steps {
            let g = 2.0 * x;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t as i32));
            let vh = v / (1.0 - b2.powi(t as i32));
            x -= alpha * mh / (vh.sqrt() + eps);
        }
        x
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut p = vec![1.0];
        let mut st = AdamState::new(AdamConfig::with_alpha(0.1), 1).unwrap();
        for _ in 0..200 {
            let g = vec![2.0 * p[0]];
            st.step(&mut p, &g).unwrap();
        }
        assert!(p[0].abs() < 0.05, "{}", p[0]);
        let r = reference_quadratic(1.0, 0.1, 200);
        assert!((p[0] - r).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        let mut p = vec![1.0, 2.0];
        let mut st = AdamState::new(AdamConfig::default(), 2).unwrap();
        assert_eq!(
            st.step(&mut p, &vec![f64::NAN, 0.0]),
            Err(Error::NonFiniteGradient)
        );
        assert_eq!(st.t, 0);
        assert_eq!(p, vec![1.0, 2.0]);
        assert!(matches!(
            st.step(&mut p, &vec![1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(AdamState::new(
            AdamConfig {
                beta1: 1.0,
                ..AdamConfig::default()
            },
            1
        )
        .is_err());
    }

    #[test]
    fn step_counter_increments_by_one() {
        let mut p = vec![0.0; 4];
        let mut st = AdamState::for_params(AdamConfig::default(), &p).unwrap();
        for k in 1..=3 {
            st.step(&mut p, &vec![0.1; 4]).unwrap();
            assert_eq!(st.t, k);
        }
    }
}
