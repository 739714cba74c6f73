//! Synthetic measurement errors on the lateral channel.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::traj::{quantize_lat, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerturbationKind {
    Brownian,
    Bias,
}

impl PerturbationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PerturbationKind::Brownian => "brownian",
            PerturbationKind::Bias => "bias",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub kind: PerturbationKind,
    /// Offset in meters for bias, per-step standard deviation in meters for
    /// Brownian noise.
    pub magnitude: f64,
    /// Only used by Brownian noise.
    pub seed: u64,
}

impl Perturbation {
    pub fn bias(magnitude: f64) -> Self {
        Self {
            kind: PerturbationKind::Bias,
            magnitude,
            seed: 0,
        }
    }

    pub fn brownian(magnitude: f64, seed: u64) -> Self {
        Self {
            kind: PerturbationKind::Brownian,
            magnitude,
            seed,
        }
    }

    pub fn apply(&self, traj: &Trajectory) -> Result<Trajectory> {
        match self.kind {
            PerturbationKind::Bias => Ok(inject_bias(traj, self.magnitude)),
            PerturbationKind::Brownian => inject_brownian(traj, self.magnitude, self.seed),
        }
    }
}

/// Shifts the lateral offset by `b` meters. Other channels are untouched.
///
/// The shift is rounded to the lateral grid so that it cancels exactly in
/// every lateral difference.
pub fn inject_bias(traj: &Trajectory, b: f64) -> Trajectory {
    let b = quantize_lat(b);
    let mut out = traj.clone();
    for s in &mut out.samples {
        s.lat += b;
    }
    out
}

/// Random stream for one trajectory; depends only on `seed` and the vehicle id.
pub fn rng_for(seed: u64, vehicle_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(vehicle_id);
    rng
}

/// Seed of grid point `grid_index` derived from a run seed.
pub fn grid_seed(seed: u64, grid_index: usize) -> u64 {
    seed ^ (grid_index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Adds a random walk `W_k = W_{k-1} + N(0, step_std^2)`, `W_0 = 0`, to the
/// lateral offset.
pub fn inject_brownian(traj: &Trajectory, step_std: f64, seed: u64) -> Result<Trajectory> {
    if !(step_std >= 0.0) {
        return Err(invalid("step_std", "must be non-negative"));
    }
    if step_std == 0.0 {
        return Ok(traj.clone());
    }
    let normal = Normal::new(0.0, step_std).map_err(|e| invalid("step_std", e.to_string()))?;
    let mut rng = rng_for(seed, traj.vehicle_id);
    let mut out = traj.clone();
    let mut w = 0.0;
    for (k, s) in out.samples.iter_mut().enumerate() {
        if k > 0 {
            w += normal.sample(&mut rng);
        }
        s.lat = quantize_lat(s.lat + w);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traj::{Sample, VehicleShape};

    fn flat(lat: f64, n: usize) -> Trajectory {
        let samples = (0..n)
            .map(|k| Sample {
                t: k as f64 * 0.2,
                s: 6.0 * k as f64,
                lane: 1,
                lat,
                v: 30.0,
                a_lon: 0.1,
                a_lat: 0.0,
                d_left: Some(0.8 - lat),
                d_right: Some(0.8 + lat),
            })
            .collect();
        Trajectory::new(3, VehicleShape::car(), samples).unwrap()
    }

    #[test]
    fn zero_bias_is_identity() {
        let t = flat(0.2, 10);
        assert_eq!(inject_bias(&t, 0.0), t);
    }

    #[test]
    fn bias_shifts_only_lateral() {
        let t = flat(0.2, 10);
        let b = inject_bias(&t, 1.0);
        for (x, y) in t.samples.iter().zip(&b.samples) {
            assert!((y.lat - 1.2).abs() < 1e-12);
            assert_eq!((x.d_left, x.d_right, x.s, x.lane), (y.d_left, y.d_right, y.s, y.lane));
        }
    }

    #[test]
    fn bias_round_trips() {
        let t = flat(quantize_lat(0.37), 10);
        assert_eq!(inject_bias(&inject_bias(&t, 0.5), -0.5), t);
    }

    #[test]
    fn brownian_zero_and_deterministic() {
        let t = flat(0.0, 50);
        assert_eq!(inject_brownian(&t, 0.0, 9).unwrap(), t);
        let a = inject_brownian(&t, 0.05, 9).unwrap();
        assert_eq!(a, inject_brownian(&t, 0.05, 9).unwrap());
        assert_ne!(a, inject_brownian(&t, 0.05, 10).unwrap());
        assert_eq!(a.samples[0].lat, 0.0);
        assert!(inject_brownian(&t, -1.0, 9).is_err());
    }

    #[test]
    fn random_walk_variance_grows_linearly() {
        // Least-squares slope of Var(W_k) against k over 10^4 walks.
        let sigma = 0.05;
        let steps = 40;
        let runs = 10_000u64;
        let t = flat(0.0, steps);
        let mut sum = vec![0.0; steps];
        let mut sq = vec![0.0; steps];
        for seed in 0..runs {
            let w = inject_brownian(&t, sigma, seed).unwrap();
            for (k, s) in w.samples.iter().enumerate() {
                sum[k] += s.lat;
                sq[k] += s.lat * s.lat;
            }
        }
        let var: Vec<f64> = (0..steps)
            .map(|k| sq[k] / runs as f64 - (sum[k] / runs as f64).powi(2))
            .collect();
        let n = steps as f64;
        let mean_k = (n - 1.0) / 2.0;
        let mean_v = var.iter().sum::<f64>() / n;
        let (mut num, mut den) = (0.0, 0.0);
        for (k, v) in var.iter().enumerate() {
            num += (k as f64 - mean_k) * (v - mean_v);
            den += (k as f64 - mean_k).powi(2);
        }
        let slope = num / den;
        assert!((slope / (sigma * sigma) - 1.0).abs() < 0.15, "{slope}");
    }

    #[test]
    fn grid_seeds_differ() {
        assert_ne!(grid_seed(1, 0), grid_seed(1, 1));
        assert_ne!(grid_seed(1, 0), grid_seed(2, 0));
    }
}
