use super::Parameters;
use crate::{Error, Result};
use alloc::vec::Vec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub h: f64,
    /// Coordinates beyond this count are checked on a seeded random subsample.
    pub max_coords: usize,
    pub seed: u64,
    /// Denominator floor, as a fraction of the largest numerical gradient magnitude.
    pub floor_ratio: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            h: 1e-5,
            max_coords: 10_000,
            seed: 0,
            floor_ratio: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Flat index of the worst coordinate.
    pub worst_index: usize,
    pub analytic: f64,
    pub numerical: f64,
    pub checked: usize,
}

/// Compares `analytic` against central differences of `loss` around `params`.
///
/// Per coordinate the error is `|g_a - g_n| / max(|g_n|, floor)`, where the
/// floor is `floor_ratio` times the largest `|g_n|` seen. A gradient that is
/// off by a factor of two on some coordinate therefore scores about 1.
pub fn grad_check<P, F>(
    loss: F,
    params: &P,
    analytic: &P,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport>
where
    P: Parameters + Clone,
    F: Fn(&P) -> f64,
{
    if !(opts.h > 0.0) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let n = params.num_params();
    if analytic.num_params() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: analytic.num_params(),
        });
    }
    let coords: Vec<usize> = if n > opts.max_coords {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut idx = rand::seq::index::sample(&mut rng, n, opts.max_coords).into_vec();
        idx.sort_unstable();
        idx
    } else {
        (0..n).collect()
    };

    let flat = params.flatten();
    let grad = analytic.flatten();
    let mut probe = params.clone();
    let mut numerical = Vec::with_capacity(coords.len());
    for &i in &coords {
        let x = flat[i];
        probe.set_coord(i, x + opts.h);
        let up = loss(&probe);
        probe.set_coord(i, x - opts.h);
        let down = loss(&probe);
        probe.set_coord(i, x);
        numerical.push((up - down) / (2.0 * opts.h));
    }

    let scale = numerical.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let floor = (opts.floor_ratio * scale).max(f64::MIN_POSITIVE);
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_index: coords.first().copied().unwrap_or(0),
        analytic: 0.0,
        numerical: 0.0,
        checked: coords.len(),
    };
    for (&i, &g_n) in coords.iter().zip(&numerical) {
        let g_a = grad[i];
        let err = if g_a == g_n {
            0.0
        } else {
            (g_a - g_n).abs() / g_n.abs().max(floor)
        };
        if !(err <= report.max_relative_error) {
            report.max_relative_error = err;
            report.worst_index = i;
            report.analytic = g_a;
            report.numerical = g_n;
        }
    }
    Ok(report)
}
