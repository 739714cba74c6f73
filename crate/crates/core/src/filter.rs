//! Zero-phase low-pass filtering of the lateral channel.

use crate::error::{invalid, Error, Result};
use crate::traj::{quantize_lat, Trajectory};

/// Second-order Butterworth section from the bilinear transform with
/// frequency prewarping. `a0` is normalized to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    pub fn butterworth_lowpass(cutoff: f64, rate: f64) -> Result<Self> {
        let nyquist = rate / 2.0;
        if !(cutoff > 0.0) {
            return Err(invalid("cutoff", "must be positive"));
        }
        if cutoff >= nyquist {
            return Err(Error::AboveNyquist { cutoff, nyquist });
        }
        let k = (std::f64::consts::PI * cutoff / rate).tan();
        let k2 = k * k;
        let sqrt2 = std::f64::consts::SQRT_2;
        let norm = 1.0 / (1.0 + sqrt2 * k + k2);
        let b0 = k2 * norm;
        Ok(Self {
            b: [b0, 2.0 * b0, b0],
            a: [2.0 * (k2 - 1.0) * norm, (1.0 - sqrt2 * k + k2) * norm],
        })
    }

    /// Transposed direct form II state that holds a unit step in steady state.
    fn unit_step_state(&self) -> [f64; 2] {
        let gain = self.b.iter().sum::<f64>() / (1.0 + self.a[0] + self.a[1]);
        let z2 = self.b[2] - self.a[1] * gain;
        let z1 = self.b[1] - self.a[0] * gain + z2;
        [z1, z2]
    }

    fn run(&self, x: &[f64], mut z: [f64; 2]) -> Vec<f64> {
        x.iter()
            .map(|&xi| {
                let y = self.b[0] * xi + z[0];
                z[0] = self.b[1] * xi - self.a[0] * y + z[1];
                z[1] = self.b[2] * xi - self.a[1] * y;
                y
            })
            .collect()
    }

    /// Forward-backward filtering with odd-reflection padding and
    /// steady-state initial conditions at both ends.
    pub fn filtfilt(&self, x: &[f64], padlen: usize) -> Vec<f64> {
        let n = x.len();
        if n < 2 {
            return x.to_vec();
        }
        let pad = padlen.min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

        let zi = self.unit_step_state();
        let scaled = |v: f64| [zi[0] * v, zi[1] * v];
        let mut fwd = self.run(&ext, scaled(ext[0]));
        fwd.reverse();
        let mut back = self.run(&fwd, scaled(fwd[0]));
        back.reverse();
        back[pad..pad + n].to_vec()
    }
}

/// Low-passes the lateral motion of `traj` at `cutoff` Hz without phase shift.
///
/// The filter runs on the continuous lateral coordinate relative to the first
/// sample, so lane re-referencing jumps are not smeared and the result is
/// independent of any constant offset of the lateral channel. Lane indices
/// and all other channels are left as they are.
pub fn lowpass(traj: &Trajectory, lane_width: f64, cutoff: f64) -> Result<Trajectory> {
    let bq = Biquad::butterworth_lowpass(cutoff, traj.rate)?;
    let first = traj.samples[0];
    let rel: Vec<f64> = traj
        .samples
        .iter()
        .map(|s| (s.lat - first.lat) + (s.lane - first.lane) as f64 * lane_width)
        .collect();
    // Roughly three time constants of the cutoff on each side.
    let padlen = ((3.0 * traj.rate / cutoff).ceil() as usize).max(9);
    let smooth = bq.filtfilt(&rel, padlen);
    let mut out = traj.clone();
    for (s, f) in out.samples.iter_mut().zip(smooth) {
        let offset = quantize_lat(f - (s.lane - first.lane) as f64 * lane_width);
        s.lat = first.lat + offset;
    }
    Ok(out)
}
