//! Synthetic embedding tables with planted mirrors.
//!
//! Each cluster owns a mirror. Pair members sit on opposite sides of their
//! cluster's mirror (the second member is the exact reflection of the first,
//! plus optional Gaussian noise). Non-attribute words sit on a mirror up to a
//! small jitter along its normal. Distractors fill out the vocabulary.
//!
//! Clusters share one attribute axis; `mirror_shift` moves each cluster's
//! mirror along that axis and `mirror_tilt` rotates its normal away from it.
//! With `shared_non_attribute`, non-attribute words lie on the intersection
//! of all cluster mirrors, i.e. they carry no component along any attribute
//! normal. `near_neighbors` adds distractors close to each non-attribute word
//! so that the vocabulary is locally dense, as real embedding spaces are.

use crate::dataset::{AttributeDataset, NonAttributeSet, SplitCounts, WordPair};
use crate::embedding::EmbeddingTable;
use crate::reflection::Mirror;
use crate::vector::{axpy, dot, norm};
use crate::{Error, Result};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub attribute: String,
    pub dim: usize,
    pub pairs: usize,
    pub split: SplitCounts,
    pub clusters: usize,
    /// Standard deviation of the noise added to each reflected partner.
    pub noise: f64,
    pub non_attribute: usize,
    /// How many of the non-attribute words go to training; the rest are test words.
    pub non_attribute_train: usize,
    /// Standard deviation of non-attribute offsets along the mirror normal.
    pub jitter: f64,
    pub distractors: usize,
    /// Spread of word positions around their cluster centre.
    pub spread: f64,
    /// Distance of the first pair member from its mirror, drawn uniformly.
    pub offset_min: f64,
    pub offset_max: f64,
    /// Distance of cluster centres from the origin (orthogonal to the attribute axis).
    pub cluster_separation: f64,
    /// Displacement along the attribute axis between consecutive cluster mirrors.
    pub mirror_shift: f64,
    /// Magnitude of the random rotation of each cluster normal.
    pub mirror_tilt: f64,
    /// Place non-attribute words on the intersection of all mirrors instead of their own cluster's mirror.
    pub shared_non_attribute: bool,
    /// Extra distractors per non-attribute word, each at `near_radius` from it.
    pub near_neighbors: usize,
    pub near_radius: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            attribute: "SYN".into(),
            dim: 20,
            pairs: 60,
            split: SplitCounts::new(36, 12, 12),
            clusters: 1,
            noise: 0.0,
            non_attribute: 200,
            non_attribute_train: 0,
            jitter: 0.0,
            distractors: 200,
            spread: 1.0,
            offset_min: 0.5,
            offset_max: 1.0,
            cluster_separation: 3.0,
            mirror_shift: 0.0,
            mirror_tilt: 0.0,
            shared_non_attribute: false,
            near_neighbors: 0,
            near_radius: 0.1,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::invalid(format!("synthetic spec: {m}")));
        if self.dim < 2 {
            return fail("dim must be at least 2");
        }
        if self.pairs == 0 || self.clusters == 0 {
            return fail("pairs and clusters must be positive");
        }
        if self.split.total() > self.pairs {
            return fail("split counts exceed the pair count");
        }
        if self.non_attribute_train > self.non_attribute {
            return fail("non_attribute_train exceeds non_attribute");
        }
        let finite_nonneg = |x: f64| x.is_finite() && x >= 0.0;
        if ![
            self.noise,
            self.jitter,
            self.spread,
            self.cluster_separation,
            self.mirror_tilt,
            self.near_radius,
        ]
            .into_iter()
            .all(finite_nonneg)
            || !self.mirror_shift.is_finite()
        {
            return fail("scales must be finite and non-negative");
        }
        if !(self.offset_min > 0.0 && self.offset_min <= self.offset_max && self.offset_max.is_finite()) {
            return fail("need 0 < offset_min <= offset_max");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub table: EmbeddingTable,
    pub dataset: AttributeDataset,
    pub non_attribute: NonAttributeSet,
    /// Ground-truth mirror per cluster.
    pub mirrors: Vec<Mirror>,
    /// All pairs in generation order (before splitting) with their cluster.
    pub pairs: Vec<(WordPair, usize)>,
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let n = norm(&v);
    v.iter_mut().for_each(|x| *x /= n);
    v
}

/// Removes from `v` its component along the unit vector `u`.
fn orthogonalize(v: &mut [f64], u: &[f64]) {
    let s = dot(v, u);
    axpy(-s, u, v);
}

/// Projects `v` onto the hyperplane through `c` with unit normal `n`.
fn project(v: &mut [f64], n: &[f64], c: &[f64]) {
    let s: f64 = v.iter().zip(c).zip(n).map(|((vi, ci), ni)| (vi - ci) * ni).sum();
    axpy(-s, n, v);
}

/// Projects `v` onto `{x : a_i·x = a_i·c_i for every mirror}` by solving the
/// `k × k` normal equations. Fails when the normals are linearly dependent.
fn project_onto_intersection(v: &mut [f64], mirrors: &[Mirror]) -> Result<()> {
    let k = mirrors.len();
    // augmented system [N Nᵀ | N v - b]
    let mut sys = vec![vec![0.0; k + 1]; k];
    for (i, mi) in mirrors.iter().enumerate() {
        for (j, mj) in mirrors.iter().enumerate() {
            sys[i][j] = dot(mi.normal(), mj.normal());
        }
        sys[i][k] = dot(mi.normal(), v) - dot(mi.normal(), mi.point());
    }
    for col in 0..k {
        let pivot = (col..k)
            .max_by(|&a, &b| sys[a][col].abs().total_cmp(&sys[b][col].abs()))
            .unwrap_or(col);
        if sys[pivot][col].abs() < 1e-9 {
            return Err(Error::invalid("synthetic spec: mirrors are parallel and have no common intersection"));
        }
        sys.swap(col, pivot);
        for r in 0..k {
            if r != col {
                let f = sys[r][col] / sys[col][col];
                for c in col..=k {
                    sys[r][c] -= f * sys[col][c];
                }
            }
        }
    }
    for (i, m) in mirrors.iter().enumerate() {
        axpy(-sys[i][k] / sys[i][i], m.normal(), v);
    }
    Ok(())
}

pub fn synth_generate(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let d = spec.dim;
    let k = spec.clusters;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let axis = unit(gaussian(&mut rng, d));
    let mut centers = Vec::with_capacity(k);
    let mut mirrors = Vec::with_capacity(k);
    for i in 0..k {
        let center = if k == 1 {
            vec![0.0; d]
        } else {
            let mut g = gaussian(&mut rng, d);
            orthogonalize(&mut g, &axis);
            let g = unit(g);
            g.iter().map(|x| x * spec.cluster_separation).collect()
        };
        let mut normal = axis.clone();
        let tilt = gaussian(&mut rng, d);
        axpy(spec.mirror_tilt / libm::sqrt(d as f64), &tilt, &mut normal);
        let normal = unit(normal);
        let mut point = center.clone();
        let shift = (i as f64 - (k - 1) as f64 / 2.0) * spec.mirror_shift;
        axpy(shift, &axis, &mut point);
        mirrors.push(Mirror::new(normal, point)?);
        centers.push(center);
    }

    let on_mirror = |rng: &mut ChaCha8Rng, cluster: usize| -> Vec<f64> {
        let m = &mirrors[cluster];
        let mut v = centers[cluster].clone();
        axpy(spec.spread, &gaussian(rng, d), &mut v);
        project(&mut v, m.normal(), m.point());
        v
    };

    let mut rows: Vec<(String, Vec<f64>)> = Vec::new();
    let mut pairs = Vec::with_capacity(spec.pairs);
    for j in 0..spec.pairs {
        let cluster = j % k;
        let mirror = &mirrors[cluster];
        let mut vm = on_mirror(&mut rng, cluster);
        let offset = rng.random_range(spec.offset_min..=spec.offset_max);
        axpy(offset, mirror.normal(), &mut vm);
        let mut vw = mirror.reflect(&vm)?;
        if spec.noise > 0.0 {
            axpy(spec.noise, &gaussian(&mut rng, d), &mut vw);
        }
        let (m, w) = (format!("m{j}"), format!("w{j}"));
        rows.push((m.clone(), vm));
        rows.push((w.clone(), vw));
        pairs.push((WordPair::new(m, w), cluster));
    }

    let mut non_attr = Vec::with_capacity(spec.non_attribute);
    for j in 0..spec.non_attribute {
        let cluster = j % k;
        let mut v = on_mirror(&mut rng, cluster);
        if spec.shared_non_attribute {
            project_onto_intersection(&mut v, &mirrors)?;
        }
        if spec.jitter > 0.0 {
            let e: f64 = StandardNormal.sample(&mut rng);
            axpy(spec.jitter * e, mirrors[cluster].normal(), &mut v);
        }
        let tok = format!("n{j}");
        rows.push((tok.clone(), v));
        non_attr.push(tok);
    }

    let mut near = Vec::with_capacity(spec.non_attribute * spec.near_neighbors);
    for j in 0..spec.non_attribute {
        for r in 0..spec.near_neighbors {
            let mut v = rows[2 * spec.pairs + j].1.clone();
            axpy(spec.near_radius, &unit(gaussian(&mut rng, d)), &mut v);
            near.push((format!("n{j}_{r}"), v));
        }
    }
    rows.extend(near);

    for j in 0..spec.distractors {
        let mut v = centers[j % k].clone();
        axpy(spec.spread, &gaussian(&mut rng, d), &mut v);
        rows.push((format!("x{j}"), v));
    }

    let table = EmbeddingTable::from_rows(d, rows)?;
    let dataset = AttributeDataset::split(
        spec.attribute.clone(),
        pairs.iter().map(|(p, _)| p.clone()).collect(),
        spec.split,
        spec.seed,
    )?;
    let test = non_attr.split_off(spec.non_attribute_train);
    let non_attribute = NonAttributeSet {
        attribute: spec.attribute.clone(),
        train: non_attr,
        test,
    };
    Ok(SyntheticData {
        table,
        dataset,
        non_attribute,
        mirrors,
        pairs,
    })
}
