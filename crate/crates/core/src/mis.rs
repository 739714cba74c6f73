//! Margin increase system: an automated ego that, when a fast rear vehicle
//! is about to overtake closely, brakes gently ahead of time so that it need
//! not brake while the rear vehicle changes lanes behind it.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::metrics::{euclidean_distance, thw, ttce_dce, ObjectState};
use crate::traj::{LaneLayout, VehicleShape};
use crate::w99::{w99_step, Leader, Regime, W99Params};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MisConfig {
    pub rear_detect_range: f64,
    pub delta_v_min: f64,
    pub thw_increase: f64,
    pub comfort_decel_cap: f64,
    /// Front THW setpoint of the automated cruise.
    pub thw_setpoint: f64,
    /// Engagement needs front THW below `thw_setpoint + engage_slack`.
    pub engage_slack: f64,
    /// Look-ahead over which the left-lane corridor must stay empty.
    pub corridor_horizon: f64,
    /// Clearance around the corridor, meters.
    pub corridor_margin: f64,
    /// Rear-gap violation below this footprint distance.
    pub d_crit: f64,
}

impl Default for MisConfig {
    fn default() -> Self {
        Self {
            rear_detect_range: 100.0,
            delta_v_min: 10.0 / 3.6,
            thw_increase: 2.0,
            comfort_decel_cap: 1.5,
            thw_setpoint: 0.9,
            engage_slack: 0.5,
            corridor_horizon: 10.0,
            corridor_margin: 20.0,
            d_crit: 1.0,
        }
    }
}

impl MisConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rear_detect_range", self.rear_detect_range),
            ("delta_v_min", self.delta_v_min),
            ("thw_increase", self.thw_increase),
            ("comfort_decel_cap", self.comfort_decel_cap),
            ("thw_setpoint", self.thw_setpoint),
            ("engage_slack", self.engage_slack),
            ("corridor_horizon", self.corridor_horizon),
            ("corridor_margin", self.corridor_margin),
            ("d_crit", self.d_crit),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(invalid(name, "must be positive"));
            }
        }
        Ok(())
    }
}

/// Constant-time-headway cruise control.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccParams {
    pub thw_set: f64,
    pub standstill_gap: f64,
    pub k_gap: f64,
    pub k_speed: f64,
    pub v_set: f64,
    pub a_min: f64,
    pub a_max: f64,
}

impl Default for AccParams {
    fn default() -> Self {
        Self {
            thw_set: 0.9,
            standstill_gap: 2.0,
            k_gap: 0.2,
            k_speed: 0.8,
            v_set: 120.0 / 3.6,
            a_min: -8.0,
            a_max: 1.5,
        }
    }
}

impl AccParams {
    /// Command for net gap `gap` to a front vehicle at `v_front`, or cruise
    /// toward `v_set` without one.
    pub fn accel(&self, v: f64, front: Option<(f64, f64)>) -> f64 {
        let cruise = self.k_speed * (self.v_set - v);
        let a = match front {
            Some((gap, v_front)) => {
                let follow = self.k_gap * (gap - self.standstill_gap - self.thw_set * v) + self.k_speed * (v_front - v);
                follow.min(cruise)
            }
            None => cruise,
        };
        a.clamp(self.a_min, self.a_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Idle,
    Engaged,
    Completed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MisState {
    pub mode: Mode,
    /// Magnitude, in `[0, comfort_decel_cap]`.
    pub commanded_decel: f64,
    pub engagement_time: Option<f64>,
    pub target_front_thw: Option<f64>,
}

impl Default for MisState {
    fn default() -> Self {
        Self {
            mode: Mode::Idle,
            commanded_decel: 0.0,
            engagement_time: None,
            target_front_thw: None,
        }
    }
}

/// Object-level view of the ego's surroundings at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub automated: bool,
    pub ego: ObjectState,
    pub front: Option<ObjectState>,
    /// Nearest vehicle behind in the ego lane.
    pub rear: Option<ObjectState>,
    /// Vehicles in the lane left of the ego.
    pub left_lane: Vec<ObjectState>,
}

/// Net longitudinal gap from `back` to `ahead`.
pub fn net_gap(back: &ObjectState, ahead: &ObjectState) -> f64 {
    ahead.s - back.s - (ahead.length + back.length) / 2.0
}

/// No left-lane vehicle comes within `corridor_margin` of the stretch
/// between rear and ego, all moving at constant speed over the horizon.
pub fn left_lane_free(ego: &ObjectState, rear: &ObjectState, left: &[ObjectState], cfg: &MisConfig) -> bool {
    let steps = (cfg.corridor_horizon / 0.5).ceil() as usize;
    left.iter().all(|o| {
        (0..=steps).all(|k| {
            let tau = k as f64 * 0.5;
            let s_o = o.s + o.vx * tau;
            let lo = rear.s + rear.vx * tau - rear.length / 2.0 - cfg.corridor_margin;
            let hi = ego.s + ego.vx * tau + ego.length / 2.0 + cfg.corridor_margin;
            s_o + o.length / 2.0 < lo || s_o - o.length / 2.0 > hi
        })
    })
}

/// All four engagement conditions at once.
pub fn engagement_check(snap: &Snapshot, cfg: &MisConfig) -> bool {
    let (Some(front), Some(rear)) = (&snap.front, &snap.rear) else {
        return false;
    };
    let short_margin = thw(&snap.ego, front).is_some_and(|t| t < cfg.thw_setpoint + cfg.engage_slack);
    let in_range = net_gap(rear, &snap.ego) <= cfg.rear_detect_range;
    let closing = rear.vx - snap.ego.vx >= cfg.delta_v_min;
    snap.automated && short_margin && in_range && closing && left_lane_free(&snap.ego, rear, &snap.left_lane, cfg)
}

/// Constant deceleration that raises the front THW by `thw_increase` by the
/// time the rear vehicle reaches its closest encounter with the ego.
///
/// With front speed held, the gap after braking at `a` for `t` is
/// `g0 + (vf - v0) t + a t^2 / 2` and must equal `(thw0 + dthw)(v0 - a t)`.
pub fn plan_decel(ego: &ObjectState, front: &ObjectState, rear: &ObjectState, cfg: &MisConfig) -> Result<f64> {
    let thw0 = thw(ego, front)
        .ok_or_else(|| Error::EngagementPrecondition("no front vehicle ahead in the ego lane".into()))?;
    let (t_star, _) = ttce_dce(ego, rear);
    if !(t_star > 0.0) {
        return Err(Error::EngagementPrecondition(
            "ego and rear vehicle are not closing".into(),
        ));
    }
    let target = thw0 + cfg.thw_increase;
    let g0 = net_gap(ego, front);
    let need = target * ego.vx - g0 - (front.vx - ego.vx) * t_star;
    let a = need / (0.5 * t_star * t_star + target * t_star);
    Ok(a.clamp(0.0, cfg.comfort_decel_cap))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoleVehicle {
    pub id: u64,
    pub shape: VehicleShape,
    pub s0: f64,
    pub v0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BrakeTiming {
    /// At an absolute time.
    Absolute(f64),
    /// This many seconds after the rear vehicle starts its lane change.
    AfterCutOut(f64),
    /// When the rear vehicle's net gap to the ego first drops to this value.
    RearWithin(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontBrake {
    pub timing: BrakeTiming,
    pub decel: f64,
    pub duration: f64,
}

/// Ego, front and rear in one lane with optional traffic in the lane to the
/// left. The rear vehicle follows the ego with the car-following model and
/// starts a lane change to the left `rear_lc_hold` seconds after its net gap
/// first drops to `rear_lc_gap`.
#[derive(Debug, Clone, PartialEq)]
pub struct MisScenario {
    pub layout: LaneLayout,
    pub lane: i32,
    pub automated: bool,
    pub ego: Option<RoleVehicle>,
    pub front: Option<RoleVehicle>,
    pub rear: Option<RoleVehicle>,
    pub left_traffic: Vec<RoleVehicle>,
    pub acc: AccParams,
    pub rear_model: W99Params,
    /// Brake reaction time of the rear driver in emergencies, seconds.
    pub rear_reaction: f64,
    pub rear_lc_gap: f64,
    /// Time the rear vehicle tailgates inside `rear_lc_gap` before pulling out.
    pub rear_lc_hold: f64,
    pub rear_lc_duration: f64,
    pub dt: f64,
    pub duration: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub mode: Mode,
    pub commanded_decel: f64,
    pub a_ego: f64,
    pub v_ego: f64,
    pub v_rear: f64,
    pub front_thw: Option<f64>,
    pub rear_thw: Option<f64>,
    /// Footprint distance between ego and rear vehicle.
    pub rear_distance: f64,
    pub rear_lane: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MisEvalReport {
    pub mis_enabled: bool,
    pub engaged: bool,
    pub engagement_time: Option<f64>,
    pub rear_gap_at_engagement: Option<f64>,
    pub planned_decel: Option<f64>,
    pub initial_front_thw: Option<f64>,
    pub target_front_thw: Option<f64>,
    /// Seconds from engagement until the target front THW is reached.
    pub time_to_target: Option<f64>,
    /// First time the rear vehicle's net gap to the ego is 5 m or less.
    pub rear_within_5m_time: Option<f64>,
    /// Rear vehicle's lane change, start and end.
    pub cut_window: Option<(f64, f64)>,
    pub braked_in_window: bool,
    pub max_brake_in_window: f64,
    /// Smallest footprint distance while the rear vehicle is behind the ego
    /// and overlaps it laterally.
    pub min_rear_gap: f64,
    pub rear_gap_violation: bool,
    pub collision: bool,
    pub trace: Vec<TraceRow>,
}

fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * x * (10.0 - 15.0 * x + 6.0 * x * x)
}

struct Body {
    shape: VehicleShape,
    s: f64,
    v: f64,
    y: f64,
}

impl Body {
    fn new(r: &RoleVehicle, y: f64) -> Self {
        Self {
            shape: r.shape,
            s: r.s0,
            v: r.v0,
            y,
        }
    }

    fn state(&self) -> ObjectState {
        ObjectState {
            s: self.s,
            y: self.y,
            vx: self.v,
            vy: 0.0,
            length: self.shape.length,
            width: self.shape.width,
        }
    }
}

/// Simulates the scenario with the margin increase system on (`Some(cfg)`)
/// or off (`None`), optionally with the front vehicle braking.
pub fn run_closed_loop(sc: &MisScenario, mis: Option<&MisConfig>, brake: Option<FrontBrake>) -> Result<MisEvalReport> {
    let ego_role = sc.ego.ok_or(Error::MissingRole("ego"))?;
    let front_role = sc.front.ok_or(Error::MissingRole("front"))?;
    let rear_role = sc.rear.ok_or(Error::MissingRole("rear"))?;
    if let Some(cfg) = mis {
        cfg.validate()?;
    }
    if !(sc.dt > 0.0 && sc.dt <= 0.1) {
        return Err(invalid("dt", "must lie in (0, 0.1]"));
    }
    sc.layout.check_lane(sc.lane)?;
    sc.layout.check_lane(sc.lane + 1)?;
    let w = sc.layout.lane_width;
    let y0 = sc.layout.lane_center(sc.lane);
    let d_crit = mis.map_or(MisConfig::default().d_crit, |c| c.d_crit);

    let mut ego = Body::new(&ego_role, y0);
    let mut front = Body::new(&front_role, y0);
    let mut rear = Body::new(&rear_role, y0);
    let mut left: Vec<Body> = sc.left_traffic.iter().map(|r| Body::new(r, y0 + w)).collect();

    let delay = (sc.rear_reaction / sc.dt).round() as usize;
    let mut rear_commands = std::collections::VecDeque::from(vec![0.0; delay]);
    let mut a_rear_cmd = 0.0;
    let mut state = MisState::default();
    let mut report = MisEvalReport {
        mis_enabled: mis.is_some(),
        engaged: false,
        engagement_time: None,
        rear_gap_at_engagement: None,
        planned_decel: None,
        initial_front_thw: None,
        target_front_thw: None,
        time_to_target: None,
        rear_within_5m_time: None,
        cut_window: None,
        braked_in_window: false,
        max_brake_in_window: 0.0,
        min_rear_gap: f64::INFINITY,
        rear_gap_violation: false,
        collision: false,
        trace: Vec::new(),
    };
    let mut cut_start: Option<f64> = None;
    let mut tailgate_since: Option<f64> = None;
    let mut rear_close_since: Option<f64> = None;

    let steps = (sc.duration / sc.dt).round() as usize;
    for k in 0..=steps {
        let t = k as f64 * sc.dt;

        // Rear lateral motion.
        let (e, r) = (ego.state(), rear.state());
        if tailgate_since.is_none() && r.s < e.s && net_gap(&r, &e) <= sc.rear_lc_gap {
            tailgate_since = Some(t);
        }
        if cut_start.is_none() && tailgate_since.is_some_and(|t0| t >= t0 + sc.rear_lc_hold - 1e-9) {
            cut_start = Some(t);
            report.cut_window = Some((t, t + sc.rear_lc_duration));
        }
        if let Some(t0) = cut_start {
            rear.y = y0 + w * smoothstep((t - t0) / sc.rear_lc_duration);
        }
        let rear_lane = sc.layout.nearest_lane(rear.y);
        let rear_done = cut_start.is_some_and(|t0| t >= t0 + sc.rear_lc_duration);

        let (e, f, r) = (ego.state(), front.state(), rear.state());
        let front_thw = thw(&e, &f);
        let rear_in_lane = rear_lane == sc.lane && r.s < e.s;

        // Ego.
        let acc = sc.acc.accel(e.vx, (f.s > e.s).then(|| (net_gap(&e, &f), f.vx)));
        if let Some(cfg) = mis {
            match state.mode {
                Mode::Idle => {
                    let perceived = (rear_in_lane && net_gap(&r, &e) <= cfg.rear_detect_range).then_some(r);
                    let snap = Snapshot {
                        automated: sc.automated,
                        ego: e,
                        front: (f.s > e.s).then_some(f),
                        rear: perceived,
                        left_lane: left.iter().map(Body::state).collect(),
                    };
                    if engagement_check(&snap, cfg) {
                        if let Ok(a) = plan_decel(&e, &f, &r, cfg) {
                            let thw0 = front_thw.unwrap_or(0.0);
                            state = MisState {
                                mode: Mode::Engaged,
                                commanded_decel: a,
                                engagement_time: Some(t),
                                target_front_thw: Some(thw0 + cfg.thw_increase),
                            };
                            report.engaged = true;
                            report.engagement_time = Some(t);
                            report.rear_gap_at_engagement = Some(net_gap(&r, &e));
                            report.planned_decel = Some(a);
                            report.initial_front_thw = Some(thw0);
                            report.target_front_thw = state.target_front_thw;
                            log::debug!("engaged at {t:.2} s, decel {a:.3}");
                        }
                    }
                }
                Mode::Engaged => {
                    let reached = matches!((front_thw, state.target_front_thw), (Some(x), Some(target)) if x >= target);
                    if reached && report.time_to_target.is_none() {
                        report.time_to_target = state.engagement_time.map(|t0| t - t0);
                    }
                    if reached {
                        state.commanded_decel = 0.0;
                    }
                    if rear_done {
                        state.mode = Mode::Completed;
                        state.commanded_decel = 0.0;
                    }
                }
                Mode::Completed => {}
            }
        }
        let a_ego = match state.mode {
            Mode::Engaged if state.commanded_decel > 0.0 => acc.min(-state.commanded_decel),
            Mode::Engaged => {
                let too_close = front_thw.is_some_and(|x| x < sc.acc.thw_set);
                if too_close {
                    acc.min(0.0)
                } else {
                    0.0
                }
            }
            _ => acc,
        };

        // Rear: car-following on whatever is ahead in its lane.
        let mut candidates = vec![(e, sc.lane, a_ego)];
        candidates.extend(left.iter().map(|b| (b.state(), sc.lane + 1, 0.0)));
        let ahead = candidates
            .iter()
            .filter(|(o, lane, _)| *lane == rear_lane && o.s > r.s)
            .map(|(o, _, a)| Leader {
                gap: net_gap(&r, o).max(0.0),
                v: o.vx,
                a: *a,
            })
            .min_by(|a, b| a.gap.total_cmp(&b.gap));
        // Anticipated approach acts at once; emergency braking comes one
        // reaction time late, and sticks at the prior command until then.
        let (a_now, regime) = w99_step(r.vx, a_rear_cmd, ahead.as_ref(), &sc.rear_model);
        rear_commands.push_back(a_now);
        let a_late = rear_commands.pop_front().unwrap_or(a_now);
        a_rear_cmd = if regime == Regime::Emergency { a_late } else { a_now };

        // Front.
        if let Some(FrontBrake {
            timing: BrakeTiming::RearWithin(g),
            ..
        }) = brake
        {
            if rear_close_since.is_none() && rear_in_lane && net_gap(&r, &e) <= g {
                rear_close_since = Some(t);
            }
        }
        let brake_start = brake.and_then(|b| match b.timing {
            BrakeTiming::Absolute(t0) => Some(t0),
            BrakeTiming::AfterCutOut(dt) => cut_start.map(|c| c + dt),
            BrakeTiming::RearWithin(_) => rear_close_since,
        });
        let a_front = match (brake, brake_start) {
            (Some(b), Some(t0)) if t >= t0 && t < t0 + b.duration => -b.decel,
            _ => 0.0,
        };

        // Bookkeeping.
        let d = euclidean_distance(&e, &r);
        // Only a rear-end conflict counts; passing alongside does not.
        let overlap = (r.y - e.y).abs() < (r.width + e.width) / 2.0;
        if overlap && r.s < e.s {
            report.min_rear_gap = report.min_rear_gap.min(d);
        }
        if report.rear_within_5m_time.is_none() && r.s < e.s && net_gap(&r, &e) <= 5.0 {
            report.rear_within_5m_time = Some(t);
        }
        if let Some((t0, t1)) = report.cut_window {
            if t >= t0 && t <= t1 && a_ego < 0.0 {
                report.braked_in_window = true;
                report.max_brake_in_window = report.max_brake_in_window.max(-a_ego);
            }
        }
        report.trace.push(TraceRow {
            t,
            mode: state.mode,
            commanded_decel: state.commanded_decel,
            a_ego,
            v_ego: e.vx,
            v_rear: r.vx,
            front_thw,
            rear_thw: thw(&r, &e),
            rear_distance: d,
            rear_lane,
        });

        // Integration.
        for (body, a) in [(&mut ego, a_ego), (&mut front, a_front), (&mut rear, a_rear_cmd)] {
            body.s += body.v * sc.dt;
            body.v = (body.v + a * sc.dt).max(0.0);
        }
        for b in &mut left {
            b.s += b.v * sc.dt;
        }
    }
    report.rear_gap_violation = report.min_rear_gap < d_crit;
    report.collision = report.min_rear_gap <= 0.0;
    Ok(report)
}

/// Reference situation: ego cruising at 120 km/h close behind its front
/// vehicle, a rear vehicle closing at about 42 km/h from beyond sensor range.
pub fn reference_fixture() -> MisScenario {
    let car = VehicleShape::car();
    let v0 = 120.0 / 3.6;
    let acc = AccParams::default();
    let gap0 = acc.standstill_gap + acc.thw_set * v0;
    MisScenario {
        layout: LaneLayout::default(),
        lane: 0,
        automated: true,
        ego: Some(RoleVehicle {
            id: 1,
            shape: car,
            s0: 0.0,
            v0,
        }),
        front: Some(RoleVehicle {
            id: 2,
            shape: car,
            s0: gap0 + car.length,
            v0,
        }),
        rear: Some(RoleVehicle {
            id: 3,
            shape: car,
            s0: -130.0,
            v0: 45.0,
        }),
        left_traffic: Vec::new(),
        acc,
        rear_model: W99Params {
            cc1: 0.12,
            v_desired: 45.0,
            ..Default::default()
        },
        rear_reaction: 1.2,
        rear_lc_gap: 6.0,
        rear_lc_hold: 2.0,
        rear_lc_duration: 4.0,
        dt: 0.05,
        duration: 60.0,
    }
}

/// Front braking at 4 m/s² for 3 s, starting as the rear vehicle of
/// [`reference_fixture`] begins to tailgate.
pub fn reference_front_brake() -> FrontBrake {
    FrontBrake {
        timing: BrakeTiming::RearWithin(reference_fixture().rear_lc_gap),
        decel: 4.0,
        duration: 3.0,
    }
}
