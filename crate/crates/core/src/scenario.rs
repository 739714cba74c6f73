//! Replay of recorded traffic with one vehicle driven by the car-following
//! model, and sampling over the target time gap `cc1`.

use serde::{Deserialize, Serialize};

use crate::detect::Direction;
use crate::error::{invalid, Error, Result};
use crate::metrics::{thw, ObjectState};
use crate::synth::{scripted, ScriptedChange};
use crate::traj::{LaneLayout, Sample, Trajectory, VehicleClass, VehicleShape};
use crate::w99::{w99_accel, Leader, W99Params};

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub layout: LaneLayout,
    /// Replayed verbatim, except the substituted vehicle.
    pub trajectories: Vec<Trajectory>,
    pub substituted_id: u64,
    pub model: W99Params,
    pub dt: f64,
    pub duration: f64,
}

impl ScenarioSpec {
    pub fn substituted(&self) -> Result<&Trajectory> {
        self.trajectories
            .iter()
            .find(|t| t.vehicle_id == self.substituted_id)
            .ok_or(Error::MissingVehicle(self.substituted_id))
    }

    pub fn validate(&self) -> Result<()> {
        self.substituted()?;
        self.model.validate()?;
        if !(self.dt > 0.0 && self.dt <= 0.1) {
            return Err(invalid("dt", "must lie in (0, 0.1]"));
        }
        if !(self.duration > 0.0) {
            return Err(invalid("duration", "must be positive"));
        }
        Ok(())
    }

    fn opponents(&self) -> impl Iterator<Item = &Trajectory> {
        self.trajectories
            .iter()
            .filter(move |t| t.vehicle_id != self.substituted_id)
    }
}

/// Recorded state at `t`, holding the last sample after the record ends.
fn recorded_at(traj: &Trajectory, t: f64) -> Sample {
    traj.state_at(t).unwrap_or_else(|| {
        let edge = if t < traj.t_start() {
            traj.samples[0]
        } else {
            traj.samples[traj.len() - 1]
        };
        Sample { t, ..edge }
    })
}

pub fn object_state(sample: &Sample, shape: &VehicleShape, layout: &LaneLayout) -> ObjectState {
    ObjectState {
        s: sample.s,
        y: layout.lane_center(sample.lane) + sample.lat,
        vx: sample.v,
        vy: 0.0,
        length: shape.length,
        width: shape.width,
    }
}

/// Nearest replayed vehicle ahead in `lane` at time `t`.
fn leader(spec: &ScenarioSpec, t: f64, s: f64, lane: i32, length: f64) -> Option<Leader> {
    spec.opponents()
        .filter_map(|o| {
            let st = o.state_at(t)?;
            (st.lane == lane && st.s > s).then(|| Leader {
                gap: (st.s - s - (length + o.shape.length) / 2.0).max(0.0),
                v: st.v,
                a: st.a_lon,
            })
        })
        .min_by(|a, b| a.gap.total_cmp(&b.gap))
}

/// Forward-Euler run of the substituted vehicle. It starts from its first
/// recorded sample and keeps its recorded lane sequence.
pub fn simulate(spec: &ScenarioSpec) -> Result<Trajectory> {
    spec.validate()?;
    let own = spec.substituted()?;
    let first = own.samples[0];
    let steps = (spec.duration / spec.dt).round() as usize;
    let (mut s, mut v, mut a) = (first.s, first.v, first.a_lon);
    let mut samples = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let t = first.t + k as f64 * spec.dt;
        let rec = recorded_at(own, t);
        let lead = leader(spec, t, s, rec.lane, own.shape.length);
        a = w99_accel(v, a, lead.as_ref(), &spec.model);
        samples.push(Sample {
            t,
            s,
            v,
            a_lon: a,
            ..rec
        });
        s += v * spec.dt;
        v = (v + a * spec.dt).max(0.0);
    }
    Trajectory::new(own.vehicle_id, own.shape, samples)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThwTrace {
    pub opponent_id: u64,
    pub t: Vec<f64>,
    pub thw: Vec<Option<f64>>,
}

impl ThwTrace {
    pub fn min(&self) -> Option<f64> {
        self.thw.iter().flatten().copied().reduce(f64::min)
    }
}

/// THW of `ego` to each replayed opponent at every ego sample.
pub fn thw_traces(ego: &Trajectory, spec: &ScenarioSpec) -> Vec<ThwTrace> {
    spec.opponents()
        .map(|opp| {
            let thw = ego
                .samples
                .iter()
                .map(|e| {
                    let o = opp.state_at(e.t)?;
                    thw(
                        &object_state(e, &ego.shape, &spec.layout),
                        &object_state(&o, &opp.shape, &spec.layout),
                    )
                })
                .collect();
            ThwTrace {
                opponent_id: opp.vehicle_id,
                t: ego.samples.iter().map(|e| e.t).collect(),
                thw,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledScenario {
    pub cc1: f64,
    pub trajectory: Trajectory,
    pub traces: Vec<ThwTrace>,
}

impl SampledScenario {
    pub fn min_thw(&self, opponent_id: u64) -> Option<f64> {
        self.traces.iter().find(|t| t.opponent_id == opponent_id)?.min()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledScenarioSet {
    pub entries: Vec<SampledScenario>,
}

pub fn sample_cc1(spec: &ScenarioSpec, cc1_values: &[f64]) -> Result<SampledScenarioSet> {
    if cc1_values.is_empty() {
        return Err(invalid("cc1_values", "must not be empty"));
    }
    if cc1_values.iter().any(|c| !(*c > 0.0)) {
        return Err(invalid("cc1_values", "must be positive"));
    }
    let entries = cc1_values
        .iter()
        .map(|&cc1| {
            let run = ScenarioSpec {
                model: W99Params { cc1, ..spec.model },
                ..spec.clone()
            };
            let trajectory = simulate(&run)?;
            let traces = thw_traces(&trajectory, &run);
            Ok(SampledScenario {
                cc1,
                trajectory,
                traces,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SampledScenarioSet { entries })
}

pub const OVERTAKING_EGO: u64 = 1;
pub const OVERTAKING_OPP1: u64 = 2;
pub const OVERTAKING_OPP2: u64 = 3;

/// Ego cruises in the right lane behind a slower leader (Opp1)
/// while a faster vehicle (Opp2) passes it by briefly cutting in ahead; the
/// ego later moves left to overtake Opp1.
pub fn overtaking_fixture() -> Result<ScenarioSpec> {
    let layout = LaneLayout::default();
    let car = VehicleShape::new(4.7, 1.9, VehicleClass::Car)?;
    let (rate, duration) = (5.0, 90.0);
    let change = |t_mid, direction| ScriptedChange {
        t_mid,
        duration: 4.0,
        direction,
    };
    let ego = scripted(
        OVERTAKING_EGO,
        car,
        &layout,
        rate,
        duration,
        0.0,
        33.0,
        0,
        &[change(75.0, Direction::Left)],
    )?;
    let opp1 = scripted(OVERTAKING_OPP1, car, &layout, rate, duration, 400.0, 25.0, 0, &[])?;
    let opp2 = scripted(
        OVERTAKING_OPP2,
        car,
        &layout,
        rate,
        duration,
        -30.0,
        40.0,
        1,
        &[change(10.0, Direction::Right), change(22.0, Direction::Left)],
    )?;
    Ok(ScenarioSpec {
        layout,
        trajectories: vec![ego, opp1, opp2],
        substituted_id: OVERTAKING_EGO,
        model: W99Params {
            v_desired: 33.0,
            ..Default::default()
        },
        dt: 0.05,
        duration,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lone(v: f64) -> ScenarioSpec {
        let layout = LaneLayout::default();
        let t = scripted(1, VehicleShape::car(), &layout, 5.0, 60.0, 0.0, v, 1, &[]).unwrap();
        ScenarioSpec {
            layout,
            trajectories: vec![t],
            substituted_id: 1,
            model: W99Params {
                v_desired: v,
                ..Default::default()
            },
            dt: 0.05,
            duration: 60.0,
        }
    }

    #[test]
    fn alone_keeps_speed() {
        let out = simulate(&lone(30.0)).unwrap();
        assert!(out.samples.iter().all(|s| (s.v - 30.0).abs() < 1e-6));
        assert_eq!(out.len(), 1201);
    }

    #[test]
    fn missing_vehicle_is_an_error() {
        let mut spec = lone(30.0);
        spec.substituted_id = 9;
        assert!(matches!(simulate(&spec), Err(Error::MissingVehicle(9))));
        let mut spec = lone(30.0);
        spec.dt = 0.2;
        assert!(simulate(&spec).is_err());
    }

    fn following(dt: f64) -> (ScenarioSpec, Trajectory) {
        let layout = LaneLayout::default();
        let car = VehicleShape::car();
        let ego = scripted(1, car, &layout, 5.0, 300.0, 0.0, 35.0, 1, &[]).unwrap();
        let lead = scripted(2, car, &layout, 5.0, 300.0, 100.0 + car.length, 25.0, 1, &[]).unwrap();
        let spec = ScenarioSpec {
            layout,
            trajectories: vec![ego, lead],
            substituted_id: 1,
            model: W99Params {
                v_desired: 36.0,
                ..Default::default()
            },
            dt,
            duration: 300.0,
        };
        let out = simulate(&spec).unwrap();
        (spec, out)
    }

    #[test]
    fn converges_behind_slower_leader() {
        let (spec, out) = following(0.05);
        let tail = &out.samples[out.len() - 1200..];
        let v = tail.iter().map(|s| s.v).sum::<f64>() / tail.len() as f64;
        assert!((v - 25.0).abs() < 0.3, "{v}");
        let lead = &spec.trajectories[1];
        let gap = tail
            .iter()
            .map(|s| lead.state_at(s.t).unwrap().s - s.s - lead.shape.length)
            .sum::<f64>()
            / tail.len() as f64;
        let target = spec.model.desired_gap(25.0);
        assert!((gap / target - 1.0).abs() < 0.15, "{gap} vs {target}");
        assert!(out
            .samples
            .iter()
            .all(|s| s.v >= 0.0 && s.a_lon >= -8.0 && s.a_lon <= 5.0));
    }

    #[test]
    fn step_halving_changes_little() {
        let (_, coarse) = following(0.05);
        let (_, fine) = following(0.025);
        let worst = coarse
            .samples
            .iter()
            .filter(|s| s.t <= 60.0)
            .map(|s| (fine.state_at(s.t).unwrap().s - s.s).abs())
            .fold(0.0, f64::max);
        assert!(worst < 0.5, "{worst}");
    }

    #[test]
    fn deterministic() {
        let spec = overtaking_fixture().unwrap();
        assert_eq!(simulate(&spec).unwrap(), simulate(&spec).unwrap());
    }

    #[test]
    fn single_cc1_matches_plain_run() {
        let spec = overtaking_fixture().unwrap();
        let set = sample_cc1(&spec, &[spec.model.cc1]).unwrap();
        assert_eq!(set.entries[0].trajectory, simulate(&spec).unwrap());
        assert!(sample_cc1(&spec, &[]).is_err());
        assert!(sample_cc1(&spec, &[0.0]).is_err());
    }

    #[test]
    fn cc1_sweep_pattern() {
        let spec = overtaking_fixture().unwrap();
        let set = sample_cc1(&spec, &[0.9, 0.7, 0.5, 0.3, 0.1]).unwrap();
        let opp1: Vec<f64> = set
            .entries
            .iter()
            .map(|e| e.min_thw(OVERTAKING_OPP1).unwrap())
            .collect();
        let opp2: Vec<f64> = set
            .entries
            .iter()
            .map(|e| e.min_thw(OVERTAKING_OPP2).unwrap())
            .collect();
        assert!(opp1.windows(2).all(|w| w[1] <= w[0]), "{opp1:?}");
        let (lo, hi) = opp2
            .iter()
            .fold((f64::MAX, f64::MIN), |(l, h), x| (l.min(*x), h.max(*x)));
        assert!((hi - lo) / hi < 0.05, "{opp2:?}");
    }
}
