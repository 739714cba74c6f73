//! Lane-referenced trajectories and their preprocessing.
//!
//! Lateral positions are stored relative to the center of the lane the
//! vehicle is assigned to (`lane`, 0 = rightmost), positive toward the left.
//! [`ContinuousLateral`] stitches lane index and offset back into one global
//! lateral coordinate that is continuous across marking crossings.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Resolution of the stored lateral channel in meters (2^-30 m).
///
/// Lateral values on this dyadic grid add and subtract exactly for the
/// magnitudes found on a road cross-section, so a constant offset applied to
/// the channel cancels bit-for-bit in every difference taken downstream.
pub const LAT_RESOLUTION: f64 = 1.0 / (1u64 << 30) as f64;
const LAT_SCALE: f64 = (1u64 << 30) as f64;

/// Rounds a lateral value onto the [`LAT_RESOLUTION`] grid.
pub fn quantize_lat(x: f64) -> f64 {
    (x * LAT_SCALE).round() / LAT_SCALE
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaneLayout {
    pub lane_count: usize,
    pub lane_width: f64,
    /// Speed limit in m/s.
    pub speed_limit: f64,
}

impl LaneLayout {
    pub fn new(lane_count: usize, lane_width: f64, speed_limit: f64) -> Result<Self> {
        if lane_count == 0 {
            return Err(invalid("lane_count", "must be at least 1"));
        }
        if !(lane_width > 0.0) {
            return Err(invalid("lane_width", "must be positive"));
        }
        if !(speed_limit > 0.0) {
            return Err(invalid("speed_limit", "must be positive"));
        }
        Ok(Self {
            lane_count,
            lane_width,
            speed_limit,
        })
    }

    pub fn check_lane(&self, lane: i32) -> Result<()> {
        if lane < 0 || lane as usize >= self.lane_count {
            return Err(Error::LaneOutOfRange {
                lane,
                lane_count: self.lane_count,
            });
        }
        Ok(())
    }

    /// Global lateral coordinate of the center of `lane`.
    pub fn lane_center(&self, lane: i32) -> f64 {
        lane as f64 * self.lane_width
    }

    /// Index of the lane whose center is nearest to `y`, clamped to the road.
    pub fn nearest_lane(&self, y: f64) -> i32 {
        let raw = (y / self.lane_width).round();
        raw.clamp(0.0, (self.lane_count - 1) as f64) as i32
    }
}

impl Default for LaneLayout {
    fn default() -> Self {
        Self {
            lane_count: 3,
            lane_width: 3.5,
            speed_limit: 120.0 / 3.6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VehicleClass {
    Car,
    Truck,
}

impl VehicleClass {
    pub fn as_str(self) -> &'static str {
        match self {
            VehicleClass::Car => "car",
            VehicleClass::Truck => "truck",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleShape {
    pub length: f64,
    pub width: f64,
    pub class: VehicleClass,
}

impl VehicleShape {
    pub fn new(length: f64, width: f64, class: VehicleClass) -> Result<Self> {
        if !(width > 0.0 && width < length) {
            return Err(invalid(
                "shape",
                format!("need 0 < width < length, got width {width}, length {length}"),
            ));
        }
        Ok(Self { length, width, class })
    }

    pub fn car() -> Self {
        Self {
            length: 4.7,
            width: 1.9,
            class: VehicleClass::Car,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub s: f64,
    pub lane: i32,
    pub lat: f64,
    pub v: f64,
    pub a_lon: f64,
    pub a_lat: f64,
    pub d_left: Option<f64>,
    pub d_right: Option<f64>,
}

impl Sample {
    pub fn has_markings(&self) -> bool {
        self.d_left.is_some() && self.d_right.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub vehicle_id: u64,
    pub shape: VehicleShape,
    pub samples: Vec<Sample>,
    /// Sampling rate in Hz.
    pub rate: f64,
}

impl Trajectory {
    /// Builds a trajectory, estimating the rate from the median sample spacing.
    pub fn new(vehicle_id: u64, shape: VehicleShape, samples: Vec<Sample>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InsufficientSamples {
                needed: 2,
                got: samples.len(),
            });
        }
        let mut gaps: Vec<f64> = samples.windows(2).map(|w| w[1].t - w[0].t).collect();
        if gaps.iter().any(|g| !(*g > 0.0)) {
            return Err(invalid("samples", "timestamps must be strictly increasing"));
        }
        gaps.sort_by(f64::total_cmp);
        // Rounded to a micro-hertz so float jitter in timestamps does not leak in.
        let rate = (1e6 / gaps[gaps.len() / 2]).round() / 1e6;
        Ok(Self {
            vehicle_id,
            shape,
            samples,
            rate,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.rate
    }

    pub fn t_start(&self) -> f64 {
        self.samples[0].t
    }

    pub fn t_end(&self) -> f64 {
        self.samples[self.samples.len() - 1].t
    }

    pub fn has_markings(&self) -> bool {
        self.samples.iter().all(Sample::has_markings)
    }

    /// Index of the sample at time `t` on this trajectory's uniform grid, if any.
    pub fn index_at(&self, t: f64) -> Option<usize> {
        let k = ((t - self.t_start()) * self.rate).round();
        if k < 0.0 || k as usize >= self.samples.len() {
            return None;
        }
        let k = k as usize;
        ((self.samples[k].t - t).abs() < 0.25 / self.rate).then_some(k)
    }

    /// State at an arbitrary time inside the recorded span, `None` outside.
    ///
    /// Longitudinal channels are interpolated linearly; lane-relative channels
    /// follow the same rule as [`resample`].
    pub fn state_at(&self, t: f64) -> Option<Sample> {
        let n = self.samples.len();
        let eps = 1e-9;
        if t < self.t_start() - eps || t > self.t_end() + eps {
            return None;
        }
        let i = match self.samples.partition_point(|s| s.t <= t) {
            0 => 0,
            p => (p - 1).min(n - 2),
        };
        Some(interpolate(&self.samples[i], &self.samples[i + 1], t))
    }
}

fn lerp(a: f64, b: f64, f: f64) -> f64 {
    a + (b - a) * f
}

fn interpolate(a: &Sample, b: &Sample, t: f64) -> Sample {
    let span = b.t - a.t;
    if (t - a.t).abs() <= 1e-9 {
        return Sample { t, ..*a };
    }
    if (t - b.t).abs() <= 1e-9 {
        return Sample { t, ..*b };
    }
    let f = (t - a.t) / span;
    let mut out = Sample {
        t,
        s: lerp(a.s, b.s, f),
        v: lerp(a.v, b.v, f),
        a_lon: lerp(a.a_lon, b.a_lon, f),
        a_lat: lerp(a.a_lat, b.a_lat, f),
        ..*a
    };
    if a.lane == b.lane {
        out.lat = lerp(a.lat, b.lat, f);
        out.d_left = a.d_left.zip(b.d_left).map(|(x, y)| lerp(x, y, f));
        out.d_right = a.d_right.zip(b.d_right).map(|(x, y)| lerp(x, y, f));
    } else {
        // Bracket straddles a marking crossing: lane-relative channels come
        // from the nearer sample so the re-referencing jump stays a jump.
        let near = if f < 0.5 { a } else { b };
        out.lane = near.lane;
        out.lat = near.lat;
        out.d_left = near.d_left;
        out.d_right = near.d_right;
    }
    out
}

/// Resamples onto timestamps that are integer multiples of `1 / target_rate`.
pub fn resample(traj: &Trajectory, target_rate: f64) -> Result<Trajectory> {
    if traj.samples.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: traj.samples.len(),
        });
    }
    if !(target_rate > 0.0) {
        return Err(invalid("target_rate", "must be positive"));
    }
    let tol = 1e-9;
    let k0 = ((traj.t_start() - tol) * target_rate).ceil() as i64;
    let k1 = ((traj.t_end() + tol) * target_rate).floor() as i64;
    let mut out = Vec::with_capacity((k1 - k0 + 1).max(0) as usize);
    let n = traj.samples.len();
    let mut i = 0;
    for k in k0..=k1 {
        let t = k as f64 / target_rate;
        while i + 2 < n && traj.samples[i + 1].t <= t {
            i += 1;
        }
        out.push(interpolate(&traj.samples[i], &traj.samples[i + 1], t));
    }
    if out.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: out.len(),
        });
    }
    Ok(Trajectory {
        vehicle_id: traj.vehicle_id,
        shape: traj.shape,
        samples: out,
        rate: target_rate,
    })
}

/// Snaps the lateral channel onto the [`LAT_RESOLUTION`] grid.
pub fn quantize_lateral(traj: &Trajectory) -> Trajectory {
    let mut out = traj.clone();
    for s in &mut out.samples {
        s.lat = quantize_lat(s.lat);
    }
    out
}

/// Global lateral position split into lane index and in-lane offset.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousLateral {
    pub t: Vec<f64>,
    pub lane: Vec<i32>,
    pub lat: Vec<f64>,
    pub lane_width: f64,
    pub rate: f64,
}

impl ContinuousLateral {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// y = lane * lane_width + lat.
    pub fn y(&self, k: usize) -> f64 {
        self.lane[k] as f64 * self.lane_width + self.lat[k]
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.y(k)).collect()
    }

    /// Exact lateral displacement from sample `i` to sample `j`.
    ///
    /// Offsets and lane steps are differenced separately, so a constant added
    /// to every offset cancels exactly.
    pub fn displacement(&self, i: usize, j: usize) -> f64 {
        (self.lat[j] - self.lat[i]) + (self.lane[j] - self.lane[i]) as f64 * self.lane_width
    }

    /// dy/dt with central differences inside and second-order one-sided
    /// differences at the ends.
    pub fn derivative(&self) -> Result<Vec<f64>> {
        let n = self.len();
        if n < 2 {
            return Err(Error::InsufficientSamples { needed: 2, got: n });
        }
        let dt = 1.0 / self.rate;
        Ok(stencil(n, dt, |i, j| self.displacement(i, j)))
    }
}

pub fn continuous_lateral(traj: &Trajectory, layout: &LaneLayout) -> Result<ContinuousLateral> {
    for s in &traj.samples {
        layout.check_lane(s.lane)?;
    }
    Ok(ContinuousLateral {
        t: traj.samples.iter().map(|s| s.t).collect(),
        lane: traj.samples.iter().map(|s| s.lane).collect(),
        lat: traj.samples.iter().map(|s| s.lat).collect(),
        lane_width: layout.lane_width,
        rate: traj.rate,
    })
}

/// Central-difference derivative of a uniformly sampled series.
pub fn derivative(series: &[f64], dt: f64) -> Result<Vec<f64>> {
    let n = series.len();
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: n });
    }
    Ok(stencil(n, dt, |i, j| series[j] - series[i]))
}

/// Second-order differences written only in terms of pairwise displacements.
fn stencil(n: usize, dt: f64, diff: impl Fn(usize, usize) -> f64) -> Vec<f64> {
    if n == 2 {
        let d = diff(0, 1) / dt;
        return vec![d, d];
    }
    (0..n)
        .map(|k| {
            if k == 0 {
                (4.0 * diff(0, 1) - diff(0, 2)) / (2.0 * dt)
            } else if k == n - 1 {
                (4.0 * diff(n - 2, n - 1) - diff(n - 3, n - 1)) / (2.0 * dt)
            } else {
                diff(k - 1, k + 1) / (2.0 * dt)
            }
        })
        .collect()
}
