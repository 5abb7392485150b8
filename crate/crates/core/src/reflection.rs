//! Reflection across a learned hyperplane ("mirror") and the two transfer
//! models built on it: a single mirror per attribute, and mirrors
//! parameterized by the input word.

use crate::neural::{Mlp, Parameters, Tape};
use crate::training::{LossBatch, Trainable};
use crate::vector::{all_finite, check_dim, concat, dot, norm};
use crate::{Error, Result};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Normals shorter than this are rejected outside of training.
pub const MIRROR_EPS: f64 = 1e-8;

/// Added to `a·a` in the training loss so random early mirrors cannot divide by zero.
pub const TRAIN_EPS: f64 = 1e-12;

/// Hyperplane through `point` with normal `normal`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mirror {
    normal: Vec<f64>,
    point: Vec<f64>,
}

impl Mirror {
    pub fn new(normal: Vec<f64>, point: Vec<f64>) -> Result<Self> {
        check_dim(normal.len(), &point)?;
        if !all_finite(&normal) || !all_finite(&point) {
            return Err(Error::NonFinite("mirror"));
        }
        let n = norm(&normal);
        if !(n >= MIRROR_EPS) {
            return Err(Error::DegenerateMirror {
                norm: n,
                word: None,
            });
        }
        Ok(Mirror { normal, point })
    }

    pub fn normal(&self) -> &[f64] {
        &self.normal
    }

    pub fn point(&self) -> &[f64] {
        &self.point
    }

    pub fn dim(&self) -> usize {
        self.normal.len()
    }

    /// `(v - c)·a / (a·a)`: half the multiple of `a` that reflection subtracts.
    fn coefficient(&self, v: &[f64]) -> f64 {
        let p: f64 = v
            .iter()
            .zip(&self.point)
            .zip(&self.normal)
            .map(|((vi, ci), ai)| (vi - ci) * ai)
            .sum();
        p / dot(&self.normal, &self.normal)
    }

    /// `v - 2 ((v - c)·a / (a·a)) a`
    pub fn reflect(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), v)?;
        let s = 2.0 * self.coefficient(v);
        Ok(v.iter().zip(&self.normal).map(|(vi, ai)| vi - s * ai).collect())
    }

    /// Signed point-to-hyperplane distance, positive on the side `a` points to.
    pub fn signed_distance(&self, v: &[f64]) -> Result<f64> {
        check_dim(self.dim(), v)?;
        Ok(self.coefficient(v) * norm(&self.normal))
    }

    /// `|(v - c)·a| / |a|`
    pub fn distance(&self, v: &[f64]) -> Result<f64> {
        self.signed_distance(v).map(f64::abs)
    }
}

/// Reflects `v` across `mirror`.
pub fn reflect(mirror: &Mirror, v: &[f64]) -> Result<Vec<f64>> {
    mirror.reflect(v)
}

pub fn distance_to_mirror(mirror: &Mirror, v: &[f64]) -> Result<f64> {
    mirror.distance(v)
}

/// Embedded attribute id `z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeVector {
    pub id: String,
    pub z: Vec<f64>,
    pub trainable: bool,
}

impl AttributeVector {
    /// `z ~ N(0, I) / sqrt(dim)`, seeded.
    pub fn random(id: impl Into<String>, dim: usize, seed: u64, trainable: bool) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / libm::sqrt(dim as f64);
        let z = (0..dim)
            .map(|_| { let g: f64 = StandardNormal.sample(&mut rng); scale * g })
            .collect();
        AttributeVector {
            id: id.into(),
            z,
            trainable,
        }
    }
}

/// Reflection-based transfer model. `mlp_a` yields the mirror normal, `mlp_c`
/// a point on it. Both read `z`, or `[z ; v_x]` when `parameterized`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefModel {
    pub attribute: AttributeVector,
    pub mlp_a: Mlp,
    pub mlp_c: Mlp,
    pub parameterized: bool,
}

pub(crate) fn derive_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer
    let mut x = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

impl RefModel {
    /// Fresh model for `dim`-dimensional embeddings with the given hidden widths.
    pub fn new(
        attribute: AttributeVector,
        hidden: &[usize],
        parameterized: bool,
        seed: u64,
    ) -> Result<Self> {
        let dim = attribute.z.len();
        if dim == 0 {
            return Err(Error::invalid("attribute vector is empty"));
        }
        let input = if parameterized { 2 * dim } else { dim };
        let mut dims = vec![input];
        dims.extend_from_slice(hidden);
        dims.push(dim);
        Ok(RefModel {
            attribute,
            mlp_a: Mlp::init(derive_seed(seed, 1), &dims)?,
            mlp_c: Mlp::init(derive_seed(seed, 2), &dims)?,
            parameterized,
        })
    }

    /// Assembles a model from parts, checking the dimension contract.
    pub fn from_parts(
        attribute: AttributeVector,
        mlp_a: Mlp,
        mlp_c: Mlp,
        parameterized: bool,
    ) -> Result<Self> {
        let d = attribute.z.len();
        let input = if parameterized { 2 * d } else { d };
        for m in [&mlp_a, &mlp_c] {
            if m.input_dim() != input {
                return Err(Error::DimensionMismatch {
                    expected: input,
                    found: m.input_dim(),
                });
            }
            if m.output_dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: m.output_dim(),
                });
            }
        }
        Ok(RefModel {
            attribute,
            mlp_a,
            mlp_c,
            parameterized,
        })
    }

    pub fn dim(&self) -> usize {
        self.attribute.z.len()
    }

    fn mlp_input(&self, v_x: Option<&[f64]>) -> Result<Vec<f64>> {
        if !self.parameterized {
            return Ok(self.attribute.z.clone());
        }
        let v = v_x.ok_or_else(|| Error::invalid("parameterized mirror needs the input word vector"))?;
        check_dim(self.dim(), v)?;
        Ok(concat(&self.attribute.z, v))
    }

    /// The mirror used for `v_x`; `v_x` is ignored by a single-mirror model.
    pub fn mirror_for(&self, v_x: Option<&[f64]>) -> Result<Mirror> {
        let input = self.mlp_input(v_x)?;
        let a = self.mlp_a.predict(&input)?;
        let c = self.mlp_c.predict(&input)?;
        Mirror::new(a, c)
    }

    pub fn transfer(&self, v_x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), v_x)?;
        self.mirror_for(Some(v_x))?.reflect(v_x)
    }
}

/// Reflection with `TRAIN_EPS` added to `a·a`, plus what its backward pass needs.
struct SoftReflection {
    y: Vec<f64>,
    u: Vec<f64>,
    p: f64,
    q: f64,
}

fn soft_reflect(v: &[f64], a: &[f64], c: &[f64]) -> SoftReflection {
    let u: Vec<f64> = v.iter().zip(c).map(|(vi, ci)| vi - ci).collect();
    let p = dot(&u, a);
    let q = dot(a, a) + TRAIN_EPS;
    let s = 2.0 * p / q;
    let y = v.iter().zip(a).map(|(vi, ai)| vi - s * ai).collect();
    SoftReflection { y, u, p, q }
}

/// Accumulates `dL/da` and `dL/dc` for `y = v - 2 (u·a / q) a`, `u = v - c`, `q = a·a + eps`.
fn soft_reflect_backward(r: &SoftReflection, a: &[f64], gy: &[f64], ga_out: &mut [f64], gc_out: &mut [f64]) {
    let s = r.p / r.q;
    let g_dot_a = dot(gy, a);
    let k = 2.0 * g_dot_a / r.q;
    let k2 = 4.0 * g_dot_a * r.p / (r.q * r.q);
    for i in 0..a.len() {
        ga_out[i] += -2.0 * s * gy[i] - k * r.u[i] + k2 * a[i];
        gc_out[i] += k * a[i];
    }
}

pub struct RefCache {
    tape_a: Tape,
    tape_c: Tape,
    a: Vec<f64>,
    reflection: SoftReflection,
}

impl Parameters for RefModel {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        if self.attribute.trainable {
            f(&self.attribute.z);
        }
        self.mlp_a.visit(f);
        self.mlp_c.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        if self.attribute.trainable {
            f(&mut self.attribute.z);
        }
        self.mlp_a.visit_mut(f);
        self.mlp_c.visit_mut(f);
    }
}

impl RefModel {
    /// Pushes MLP-input gradients back into `z` (first `dim` coordinates).
    fn accumulate_z(&self, grads: &mut RefModel, gin_a: &[f64], gin_c: &[f64]) {
        if self.attribute.trainable {
            for (i, g) in grads.attribute.z.iter_mut().enumerate() {
                *g += gin_a[i] + gin_c[i];
            }
        }
    }

    fn single_mirror_batch_loss(&self, batch: &LossBatch<'_>) -> Result<(f64, RefModel)> {
        let d = self.dim();
        let input = self.attribute.z.clone();
        let (a, tape_a) = self.mlp_a.forward(&input)?;
        let (c, tape_c) = self.mlp_c.forward(&input)?;
        let mut ga = vec![0.0; d];
        let mut gc = vec![0.0; d];
        let mut total = 0.0;
        let mut visit = |v: &[f64], target: &[f64], weight: f64| -> Result<()> {
            check_dim(d, v)?;
            check_dim(d, target)?;
            let r = soft_reflect(v, &a, &c);
            let diff: Vec<f64> = r.y.iter().zip(target).map(|(y, t)| y - t).collect();
            total += weight * dot(&diff, &diff);
            let gy: Vec<f64> = diff.iter().map(|x| 2.0 * weight * x).collect();
            soft_reflect_backward(&r, &a, &gy, &mut ga, &mut gc);
            Ok(())
        };
        let (wa, wn) = batch.term_scales();
        for (v, t) in &batch.attribute {
            visit(v, t, wa)?;
        }
        for v in &batch.non_attribute {
            visit(v, v, wn)?;
        }
        let mut grads = self.zeros_like();
        let gin_a = self.mlp_a.backward_into(&tape_a, &ga, &mut grads.mlp_a)?;
        let gin_c = self.mlp_c.backward_into(&tape_c, &gc, &mut grads.mlp_c)?;
        self.accumulate_z(&mut grads, &gin_a, &gin_c);
        Ok((total, grads))
    }
}

impl Trainable for RefModel {
    type Cache = RefCache;

    fn forward_train(&self, v_x: &[f64]) -> Result<(Vec<f64>, RefCache)> {
        check_dim(self.dim(), v_x)?;
        let input = self.mlp_input(Some(v_x))?;
        let (a, tape_a) = self.mlp_a.forward(&input)?;
        let (c, tape_c) = self.mlp_c.forward(&input)?;
        let reflection = soft_reflect(v_x, &a, &c);
        Ok((
            reflection.y.clone(),
            RefCache {
                tape_a,
                tape_c,
                a,
                reflection,
            },
        ))
    }

    fn backward_train(&self, cache: &RefCache, grad_y: &[f64], grads: &mut Self) -> Result<()> {
        let d = self.dim();
        let mut ga = vec![0.0; d];
        let mut gc = vec![0.0; d];
        soft_reflect_backward(&cache.reflection, &cache.a, grad_y, &mut ga, &mut gc);
        let gin_a = self.mlp_a.backward_into(&cache.tape_a, &ga, &mut grads.mlp_a)?;
        let gin_c = self.mlp_c.backward_into(&cache.tape_c, &gc, &mut grads.mlp_c)?;
        self.accumulate_z(grads, &gin_a, &gin_c);
        Ok(())
    }

    fn batch_loss(&self, batch: &LossBatch<'_>) -> Result<(f64, Self)> {
        if self.parameterized {
            crate::training::per_example_batch_loss(self, batch)
        } else {
            self.single_mirror_batch_loss(batch)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{grad_check, Activation, DenseLayer, GradCheckOptions};
    use crate::training::LossWeights;

    fn rng_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
        (0..n)
            .map(|_| { let g: f64 = StandardNormal.sample(rng); scale * g })
            .collect()
    }

    fn rel(u: &[f64], v: &[f64]) -> f64 {
        crate::vector::distance(u, v) / norm(v).max(1.0)
    }

    #[test]
    fn axis_reflection_examples() {
        let m = Mirror::new(vec![1.0, 0.0], vec![0.0, 0.0]).unwrap();
        assert_eq!(m.reflect(&[3.0, 2.0]).unwrap(), vec![-3.0, 2.0]);
        assert_eq!(m.reflect(&[0.0, 5.0]).unwrap(), vec![0.0, 5.0]);
        assert_eq!(m.distance(&[3.0, 2.0]).unwrap(), 3.0);
        assert_eq!(m.distance(&[0.0, 5.0]).unwrap(), 0.0);
    }

    #[test]
    fn degenerate_and_mismatched_mirrors() {
        assert!(matches!(
            Mirror::new(vec![1e-9, 0.0], vec![0.0, 0.0]),
            Err(Error::DegenerateMirror { .. })
        ));
        assert!(matches!(
            Mirror::new(vec![1.0, 0.0], vec![0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        let m = Mirror::new(vec![1.0, 0.0], vec![0.0, 0.0]).unwrap();
        assert!(m.reflect(&[1.0]).is_err());
    }

    #[test]
    fn involution_isometry_and_midpoint_d7() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..500 {
            let m = Mirror::new(rng_vec(&mut rng, 7, 1.0), rng_vec(&mut rng, 7, 2.0)).unwrap();
            let u = rng_vec(&mut rng, 7, 3.0);
            let v = rng_vec(&mut rng, 7, 3.0);
            let rv = m.reflect(&v).unwrap();
            assert!(rel(&m.reflect(&rv).unwrap(), &v) < 1e-10);
            let ru = m.reflect(&u).unwrap();
            let d0 = crate::vector::distance(&u, &v);
            let d1 = crate::vector::distance(&ru, &rv);
            assert!((d0 - d1).abs() <= 1e-10 * d0.max(1.0));
            let mid: Vec<f64> = v.iter().zip(&rv).map(|(a, b)| 0.5 * (a + b)).collect();
            assert!(m.distance(&mid).unwrap() <= 1e-10 * norm(&v).max(1.0));
            let dv = m.distance(&v).unwrap();
            assert!((dv - m.distance(&rv).unwrap()).abs() <= 1e-10 * dv.max(1.0));
        }
    }

    #[test]
    fn normal_scale_does_not_matter() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let a = rng_vec(&mut rng, 5, 1.0);
            let c = rng_vec(&mut rng, 5, 1.0);
            let v = rng_vec(&mut rng, 5, 1.0);
            let a2: Vec<f64> = a.iter().map(|x| 2.0 * x).collect();
            let r1 = Mirror::new(a, c.clone()).unwrap().reflect(&v).unwrap();
            let r2 = Mirror::new(a2, c).unwrap().reflect(&v).unwrap();
            assert!(rel(&r1, &r2) < 1e-12);
        }
    }

    fn tiny_models(parameterized: bool, trainable: bool) -> RefModel {
        let attr = AttributeVector::random("MF", 4, 3, trainable);
        RefModel::new(attr, &[6], parameterized, 11).unwrap()
    }

    #[test]
    fn single_mirror_ignores_input() {
        let m = tiny_models(false, true);
        let a = m.mirror_for(Some(&[1.0, 2.0, 3.0, 4.0])).unwrap();
        let b = m.mirror_for(Some(&[-1.0, 0.0, 7.0, 0.5])).unwrap();
        assert_eq!(a, b);
        assert_eq!(m.mirror_for(None).unwrap(), a);
    }

    #[test]
    fn parameterized_mirror_is_deterministic_and_needs_input() {
        let m = tiny_models(true, true);
        let v = [0.3, -0.2, 0.9, 1.1];
        assert_eq!(m.mirror_for(Some(&v)).unwrap(), m.mirror_for(Some(&v)).unwrap());
        assert!(m.mirror_for(None).is_err());
    }

    #[test]
    fn zero_weight_parameterized_mirror_is_output_bias() {
        let d = 3;
        let bias = vec![0.5, -1.0, 2.0];
        let mk = |b: Vec<f64>| {
            Mlp::from_layers(vec![
                DenseLayer::zeros(2 * d, 4, Activation::Relu),
                DenseLayer {
                    bias: b,
                    ..DenseLayer::zeros(4, d, Activation::Identity)
                },
            ])
            .unwrap()
        };
        let m = RefModel::from_parts(
            AttributeVector::random("x", d, 0, false),
            mk(bias.clone()),
            mk(vec![0.0; d]),
            true,
        )
        .unwrap();
        for v in [[1.0, 2.0, 3.0], [-4.0, 0.0, 0.1]] {
            assert_eq!(m.mirror_for(Some(&v)).unwrap().normal(), bias.as_slice());
        }
    }

    #[test]
    fn single_mirror_transfer_is_an_involution() {
        let m = tiny_models(false, true);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let v = rng_vec(&mut rng, 4, 2.0);
            let back = m.transfer(&m.transfer(&v).unwrap()).unwrap();
            assert!(rel(&back, &v) < 1e-8);
        }
    }

    #[test]
    fn on_mirror_vectors_are_fixed() {
        let m = tiny_models(false, true);
        let mirror = m.mirror_for(None).unwrap();
        let a = mirror.normal();
        let w = [1.0, -2.0, 0.5, 3.0];
        // project c + w onto the hyperplane
        let s = dot(&w, a) / dot(a, a);
        let v: Vec<f64> = (0..4).map(|i| mirror.point()[i] + w[i] - s * a[i]).collect();
        assert!(rel(&m.transfer(&v).unwrap(), &v) < 1e-10);
    }

    fn random_batch(rng: &mut ChaCha8Rng, d: usize) -> (Vec<(Vec<f64>, Vec<f64>)>, Vec<Vec<f64>>) {
        let a = (0..5)
            .map(|_| (rng_vec(rng, d, 1.0), rng_vec(rng, d, 1.0)))
            .collect();
        let n = (0..3).map(|_| rng_vec(rng, d, 1.0)).collect();
        (a, n)
    }

    fn check_model(model: &RefModel) {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let (pairs, words) = random_batch(&mut rng, model.dim());
        let batch = LossBatch::new(
            pairs.iter().map(|(x, t)| (x.as_slice(), t.as_slice())).collect(),
            words.iter().map(|w| w.as_slice()).collect(),
            LossWeights::default(),
        );
        let (_, grads) = model.batch_loss(&batch).unwrap();
        let loss = |m: &RefModel| m.batch_loss(&batch).unwrap().0;
        let r = grad_check(loss, model, &grads, &GradCheckOptions::default()).unwrap();
        assert!(r.max_relative_error < 1e-4, "{r:?}");
        // the per-example path must agree with the fused single-mirror path
        let (l2, g2) = crate::training::per_example_batch_loss(model, &batch).unwrap();
        let (l1, g1) = model.batch_loss(&batch).unwrap();
        assert!((l1 - l2).abs() < 1e-10 * l1.max(1.0));
        for (x, y) in g1.flatten().iter().zip(g2.flatten()) {
            assert!((x - y).abs() < 1e-9 * x.abs().max(1.0));
        }
    }

    #[test]
    fn loss_gradients_match_finite_differences() {
        check_model(&tiny_models(false, true));
        check_model(&tiny_models(true, true));
        check_model(&tiny_models(false, false));
        check_model(&tiny_models(true, false));
    }

    #[test]
    fn frozen_attribute_is_not_a_parameter() {
        let a = tiny_models(false, true);
        let b = tiny_models(false, false);
        assert_eq!(a.num_params(), b.num_params() + 4);
    }
}
