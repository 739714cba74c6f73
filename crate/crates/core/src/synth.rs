//! Synthetic lane-change corpus with known maneuvers.
//!
//! Each lane change is a logistic transition of one lane width. Its reference
//! duration is the time the transition takes from 8 % to 92 % of the width.
//! Lane keeping carries slow lateral jitter from three sinusoids.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::detect::Direction;
use crate::error::{invalid, Result};
use crate::perturb::rng_for;
use crate::traj::{LaneLayout, Sample, Trajectory, VehicleClass, VehicleShape};

/// ln(0.92 / 0.08): half the 8..92 % rise time in units of the logistic scale.
pub fn logistic_half_span() -> f64 {
    (0.92f64 / 0.08).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub layout: LaneLayout,
    pub rate: f64,
    pub duration: f64,
    pub vehicles_per_recording: usize,
    pub lc_duration_min: f64,
    pub lc_duration_max: f64,
    pub speed_min: f64,
    pub speed_max: f64,
    pub truck_share: f64,
    /// Amplitude of each jitter sinusoid, meters.
    pub jitter_amp: f64,
    /// Lane keeping between two lane changes of one vehicle, seconds.
    pub min_keep: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            layout: LaneLayout::default(),
            rate: 25.0,
            duration: 60.0,
            vehicles_per_recording: 20,
            lc_duration_min: 3.0,
            lc_duration_max: 10.0,
            speed_min: 22.0,
            speed_max: 42.0,
            truck_share: 0.15,
            jitter_amp: 0.05,
            min_keep: 8.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthEvent {
    pub vehicle_id: u64,
    pub t_mid: f64,
    pub duration: f64,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub trajectories: Vec<Trajectory>,
    /// Recording index of each trajectory.
    pub recording: Vec<usize>,
    pub truth: Vec<TruthEvent>,
}

impl SynthCorpus {
    pub fn recording_count(&self) -> usize {
        self.recording.iter().max().map_or(0, |r| r + 1)
    }

    pub fn recordings(&self) -> Vec<Vec<&Trajectory>> {
        let mut out = vec![Vec::new(); self.recording_count()];
        for (t, &r) in self.trajectories.iter().zip(&self.recording) {
            out[r].push(t);
        }
        out
    }
}

struct Maneuver {
    t_mid: f64,
    tau: f64,
    sign: f64,
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Generates `n` vehicles. Vehicle ids start at 1; output depends only on
/// `cfg`, `n` and `seed`.
pub fn generate_corpus(cfg: &SynthConfig, n: usize, seed: u64) -> Result<SynthCorpus> {
    if cfg.vehicles_per_recording == 0 {
        return Err(invalid("vehicles_per_recording", "must be positive"));
    }
    if !(cfg.lc_duration_min > 0.0 && cfg.lc_duration_min <= cfg.lc_duration_max) {
        return Err(invalid("lc_duration", "need 0 < min <= max"));
    }
    let needed = 2.0 * (cfg.lc_duration_max + 3.0) + cfg.lc_duration_max + cfg.min_keep;
    if cfg.duration < needed {
        return Err(invalid("duration", format!("must be at least {needed} s")));
    }
    let mut corpus = SynthCorpus {
        trajectories: Vec::with_capacity(n),
        recording: Vec::with_capacity(n),
        truth: Vec::new(),
    };
    for i in 0..n {
        let id = i as u64 + 1;
        let (traj, truth) = generate_vehicle(cfg, id, seed)?;
        corpus.trajectories.push(traj);
        corpus.recording.push(i / cfg.vehicles_per_recording);
        corpus.truth.extend(truth);
    }
    Ok(corpus)
}

fn generate_vehicle(cfg: &SynthConfig, id: u64, seed: u64) -> Result<(Trajectory, Vec<TruthEvent>)> {
    let mut rng = rng_for(seed, id);
    let layout = &cfg.layout;
    let w = layout.lane_width;

    let shape = if rng.random::<f64>() < cfg.truck_share {
        VehicleShape::new(rng.random_range(12.0..18.0), 2.5, VehicleClass::Truck)?
    } else {
        VehicleShape::new(
            rng.random_range(4.2..5.0),
            rng.random_range(1.75..2.0),
            VehicleClass::Car,
        )?
    };

    let u: f64 = rng.random();
    let count = if u < 0.3 {
        0
    } else if u < 0.8 {
        1
    } else {
        2
    };
    let durations: Vec<f64> = (0..count)
        .map(|_| rng.random_range(cfg.lc_duration_min..=cfg.lc_duration_max))
        .collect();

    let mut lane = rng.random_range(0..layout.lane_count as i32);
    let start_lane = lane;
    let mut maneuvers = Vec::with_capacity(count);
    let mut earliest = 0.0;
    for (k, &d) in durations.iter().enumerate() {
        // Room the later maneuvers need after this midpoint.
        let rest: f64 = (k + 1..count)
            .map(|j| durations[j - 1] / 2.0 + cfg.min_keep + durations[j] / 2.0)
            .sum();
        let last = durations[count - 1];
        let lo = if k == 0 { d + 3.0 } else { earliest + d / 2.0 };
        let hi = cfg.duration - last - 3.0 - rest;
        let t_mid = if hi > lo { rng.random_range(lo..hi) } else { lo };
        let can_left = lane + 1 < layout.lane_count as i32;
        let can_right = lane > 0;
        let left = match (can_left, can_right) {
            (true, true) => rng.random::<bool>(),
            (l, _) => l,
        };
        if !can_left && !can_right {
            break;
        }
        lane += if left { 1 } else { -1 };
        maneuvers.push(Maneuver {
            t_mid,
            tau: d / (2.0 * logistic_half_span()),
            sign: if left { 1.0 } else { -1.0 },
        });
        earliest = t_mid + d / 2.0 + cfg.min_keep;
    }

    let jitter: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                cfg.jitter_amp,
                2.0 * std::f64::consts::PI * rng.random_range(0.01..0.05),
                rng.random_range(0.0..2.0 * std::f64::consts::PI),
            )
        })
        .collect();

    let v0 = rng.random_range(cfg.speed_min..cfg.speed_max);
    let (dv, omega_v, phase_v) = (
        rng.random_range(0.0..1.0),
        2.0 * std::f64::consts::PI * rng.random_range(0.01..0.03),
        rng.random_range(0.0..2.0 * std::f64::consts::PI),
    );
    let s0 = rng.random_range(0.0..1500.0);
    let base = layout.lane_center(start_lane);

    let n = (cfg.duration * cfg.rate).round() as usize + 1;
    let samples = (0..n)
        .map(|k| {
            let t = k as f64 / cfg.rate;
            let (mut y, mut ay) = (base, 0.0);
            for m in &maneuvers {
                let g = logistic((t - m.t_mid) / m.tau);
                y += m.sign * w * g;
                ay += m.sign * w * g * (1.0 - g) * (1.0 - 2.0 * g) / (m.tau * m.tau);
            }
            for &(a, om, ph) in &jitter {
                y += a * (om * t + ph).sin();
                ay -= a * om * om * (om * t + ph).sin();
            }
            let lane = layout.nearest_lane(y);
            let lat = y - layout.lane_center(lane);
            let v = v0 + dv * (omega_v * t + phase_v).sin();
            let s = s0 + v0 * t - dv / omega_v * ((omega_v * t + phase_v).cos() - phase_v.cos());
            let half = (w - shape.width) / 2.0;
            Sample {
                t,
                s,
                lane,
                lat,
                v,
                a_lon: dv * omega_v * (omega_v * t + phase_v).cos(),
                a_lat: ay,
                d_left: Some(half - lat),
                d_right: Some(half + lat),
            }
        })
        .collect();

    let truth = maneuvers
        .iter()
        .zip(&durations)
        .map(|(m, &d)| TruthEvent {
            vehicle_id: id,
            t_mid: m.t_mid,
            duration: d,
            direction: if m.sign > 0.0 {
                Direction::Left
            } else {
                Direction::Right
            },
        })
        .collect();
    Ok((Trajectory::new(id, shape, samples)?, truth))
}

/// One scripted lane change: midpoint, 8..92 % duration, direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScriptedChange {
    pub t_mid: f64,
    pub duration: f64,
    pub direction: Direction,
}

/// Constant-speed trajectory on `[0, duration]` with logistic lane changes
/// and no jitter.
#[allow(clippy::too_many_arguments)]
pub fn scripted(
    id: u64,
    shape: VehicleShape,
    layout: &LaneLayout,
    rate: f64,
    duration: f64,
    s0: f64,
    v: f64,
    start_lane: i32,
    changes: &[ScriptedChange],
) -> Result<Trajectory> {
    layout.check_lane(start_lane)?;
    let w = layout.lane_width;
    let base = layout.lane_center(start_lane);
    let n = (duration * rate).round() as usize + 1;
    let half_free = (w - shape.width) / 2.0;
    let samples = (0..n)
        .map(|k| {
            let t = k as f64 / rate;
            let (mut y, mut ay) = (base, 0.0);
            for c in changes {
                let tau = c.duration / (2.0 * logistic_half_span());
                let g = logistic((t - c.t_mid) / tau);
                y += c.direction.sign() * w * g;
                ay += c.direction.sign() * w * g * (1.0 - g) * (1.0 - 2.0 * g) / (tau * tau);
            }
            let lane = layout.nearest_lane(y);
            let lat = y - layout.lane_center(lane);
            Sample {
                t,
                s: s0 + v * t,
                lane,
                lat,
                v,
                a_lon: 0.0,
                a_lat: ay,
                d_left: Some(half_free - lat),
                d_right: Some(half_free + lat),
            }
        })
        .collect();
    Trajectory::new(id, shape, samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        let cfg = SynthConfig::default();
        let a = generate_corpus(&cfg, 10, 7).unwrap();
        assert_eq!(a, generate_corpus(&cfg, 10, 7).unwrap());
        assert_ne!(a, generate_corpus(&cfg, 10, 8).unwrap());
    }

    #[test]
    fn prefix_is_stable() {
        let cfg = SynthConfig::default();
        let a = generate_corpus(&cfg, 5, 1).unwrap();
        let b = generate_corpus(&cfg, 9, 1).unwrap();
        assert_eq!(a.trajectories[..], b.trajectories[..5]);
    }

    #[test]
    fn maneuvers_fit_in_recording_and_lanes() {
        let cfg = SynthConfig::default();
        let c = generate_corpus(&cfg, 200, 11).unwrap();
        assert_eq!(c.recording_count(), 10);
        for t in &c.trajectories {
            assert!(t.samples.iter().all(|s| (0..3).contains(&s.lane)));
            assert!(t
                .samples
                .iter()
                .all(|s| s.lat.abs() < cfg.layout.lane_width / 2.0 + 1e-9));
            assert!((t.rate - 25.0).abs() < 1e-9);
        }
        for e in &c.truth {
            assert!(e.t_mid - e.duration >= 2.9 && e.t_mid + e.duration <= cfg.duration - 2.9);
            assert!((3.0..=10.0).contains(&e.duration));
        }
        let per_vehicle = |id| c.truth.iter().filter(|e| e.vehicle_id == id).count();
        assert!((1..=200).all(|id| per_vehicle(id) <= 2));
        assert!(c.truth.len() > 120 && c.truth.len() < 260, "{}", c.truth.len());
    }

    #[test]
    fn scripted_change_switches_lane_at_midpoint() {
        let layout = LaneLayout::default();
        let change = ScriptedChange {
            t_mid: 10.0,
            duration: 4.0,
            direction: Direction::Left,
        };
        let t = scripted(1, VehicleShape::car(), &layout, 5.0, 20.0, 0.0, 30.0, 0, &[change]).unwrap();
        assert_eq!(t.samples[49].lane, 0);
        assert_eq!(t.samples[50].lane, 1);
        assert_eq!(t.samples[100].s, 600.0);
    }

    #[test]
    fn logistic_span_covers_eight_to_ninety_two_percent() {
        let d = 6.0;
        let tau = d / (2.0 * logistic_half_span());
        assert!((logistic(-d / 2.0 / tau) - 0.08).abs() < 1e-12);
        assert!((logistic(d / 2.0 / tau) - 0.92).abs() < 1e-12);
    }
}
