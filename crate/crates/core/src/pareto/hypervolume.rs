//! Hypervolume of a maximization front with respect to a reference point.

use super::{check_points, cmp, ParetoError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Settings for the Monte-Carlo estimate used when `m > 3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HypervolumeOptions {
    pub samples: usize,
    pub seed: u64,
}

impl Default for HypervolumeOptions {
    fn default() -> Self {
        Self {
            samples: 200_000,
            seed: 0,
        }
    }
}

pub fn hypervolume<P: AsRef<[f64]>>(front: &[P], reference: &[f64]) -> Result<f64, ParetoError> {
    hypervolume_with(front, reference, HypervolumeOptions::default())
}

/// Exact sweeps for two and three objectives, Monte Carlo otherwise.
///
/// Points not weakly dominating `reference` are dropped with a warning.
pub fn hypervolume_with<P: AsRef<[f64]>>(
    front: &[P],
    reference: &[f64],
    options: HypervolumeOptions,
) -> Result<f64, ParetoError> {
    if front.is_empty() {
        log::warn!("hypervolume of an empty front is 0");
        return Ok(0.0);
    }
    let m = check_points(front)?;
    if reference.len() != m {
        return Err(ParetoError::DimensionMismatch {
            expected: m,
            got: reference.len(),
        });
    }
    let pts: Vec<&[f64]> = front
        .iter()
        .map(|p| p.as_ref())
        .filter(|p| p.iter().zip(reference).all(|(a, r)| a >= r))
        .collect();
    if pts.len() < front.len() {
        log::warn!(
            "dropped {} point(s) below the hypervolume reference",
            front.len() - pts.len()
        );
    }
    if pts.is_empty() {
        log::warn!("no point dominates the hypervolume reference; returning 0");
        return Ok(0.0);
    }
    Ok(match m {
        1 => pts.iter().map(|p| p[0] - reference[0]).fold(0.0, f64::max),
        2 => area_2d(&pts, reference),
        3 => volume_3d(&pts, reference),
        _ => hypervolume_monte_carlo(&pts, reference, options.samples, options.seed),
    })
}

fn area_2d(pts: &[&[f64]], reference: &[f64]) -> f64 {
    let mut order: Vec<&[f64]> = pts.to_vec();
    order.sort_by(|a, b| cmp(b[0], a[0]));
    let mut area = 0.0;
    let mut height = reference[1];
    for p in order {
        if p[1] > height {
            area += (p[0] - reference[0]) * (p[1] - height);
            height = p[1];
        }
    }
    area
}

/// Slices along the last objective and sums the 2D areas of each slab.
fn volume_3d(pts: &[&[f64]], reference: &[f64]) -> f64 {
    let mut order: Vec<&[f64]> = pts.to_vec();
    order.sort_by(|a, b| cmp(b[2], a[2]));
    let mut volume = 0.0;
    let mut active: Vec<&[f64]> = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let level = order[i][2];
        while i < order.len() && order[i][2] == level {
            active.push(order[i]);
            i += 1;
        }
        let next = if i < order.len() { order[i][2] } else { reference[2] };
        volume += area_2d(&active, reference) * (level - next);
    }
    volume
}

/// Uniform-sampling estimate over the box spanned by `reference` and the
/// componentwise maximum of the front.
pub fn hypervolume_monte_carlo<P: AsRef<[f64]>>(front: &[P], reference: &[f64], samples: usize, seed: u64) -> f64 {
    let m = reference.len();
    let upper: Vec<f64> = (0..m)
        .map(|j| front.iter().map(|p| p.as_ref()[j]).fold(reference[j], f64::max))
        .collect();
    let box_volume: f64 = upper.iter().zip(reference).map(|(u, r)| u - r).product();
    if box_volume <= 0.0 || samples == 0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sample = vec![0.0; m];
    let mut hits = 0usize;
    for _ in 0..samples {
        for j in 0..m {
            sample[j] = reference[j] + rng.gen::<f64>() * (upper[j] - reference[j]);
        }
        if front
            .iter()
            .any(|p| p.as_ref().iter().zip(&sample).all(|(a, s)| a >= s))
        {
            hits += 1;
        }
    }
    box_volume * hits as f64 / samples as f64
}
