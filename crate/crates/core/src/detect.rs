//! Lane-change detection.
//!
//! Three detectors share one event type:
//!
//! * **gradient**: the jump in the lane-marking distance channels when the
//!   referenced marking changes. Needs in-car style marking channels and is
//!   used as ground truth.
//! * **distance**: lateral displacement from the nearest lane center beyond a
//!   fixed threshold, followed by settling in another lane.
//! * **peak**: peaks of the lateral velocity, with the maneuver duration taken
//!   from the peak width at a vehicle-dependent relative height. Only
//!   differences of the lateral signal enter, so a constant lateral offset has
//!   no effect on its output.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::peaks::{find_peaks, peak_width, rel_height_for, PeakParams};
use crate::traj::{continuous_lateral, ContinuousLateral, LaneLayout, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Left,
    Right,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Left => 1.0,
            Direction::Right => -1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Left => "left",
            Direction::Right => "right",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Single,
    Double,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Single => "single",
            EventKind::Double => "double",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Gradient,
    Distance,
    Peak,
}

impl Criterion {
    pub fn as_str(self) -> &'static str {
        match self {
            Criterion::Gradient => "gradient",
            Criterion::Distance => "distance",
            Criterion::Peak => "peak",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "gradient" => Some(Criterion::Gradient),
            "distance" => Some(Criterion::Distance),
            "peak" => Some(Criterion::Peak),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaneChangeEvent {
    pub vehicle_id: u64,
    pub criterion: Criterion,
    pub t_start: f64,
    /// Marking-crossing instant.
    pub t_mid: f64,
    pub t_end: f64,
    pub duration: f64,
    pub direction: Direction,
    pub v_mid: f64,
    pub lateral_extent: f64,
    pub kind: EventKind,
    /// Maneuver not fully inside the record; excluded from statistics.
    pub truncated: bool,
}

impl LaneChangeEvent {
    pub fn counts_for_statistics(&self) -> bool {
        !self.truncated && self.kind == EventKind::Single
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionParams {
    /// Distance criterion threshold, meters from the lane center.
    pub distance_threshold: f64,
    /// Time the distance criterion needs below threshold to call a lane settled.
    pub settle_time: f64,
    pub prominence_min: f64,
    pub min_peak_separation: f64,
    /// Peak events with smaller lateral extent are discarded.
    pub min_lateral_extent: f64,
    /// Half-width of the window in which the gradient criterion looks for the
    /// velocity peak that sets its start and end.
    pub gradient_search_window: f64,
}

impl Default for DetectionParams {
    fn default() -> Self {
        Self {
            distance_threshold: 0.8,
            settle_time: 1.0,
            prominence_min: 0.15,
            min_peak_separation: 4.0,
            min_lateral_extent: 2.5,
            gradient_search_window: 5.0,
        }
    }
}

impl DetectionParams {
    pub fn peak_params(&self, width_obj: f64, lane_width: f64) -> Result<PeakParams> {
        PeakParams::new(
            self.prominence_min,
            self.min_peak_separation,
            rel_height_for(width_obj, lane_width),
        )
    }
}

/// One velocity peak with its width, before event assembly.
#[derive(Debug, Clone, Copy)]
struct Candidate {
    direction: Direction,
    peak_index: usize,
    height: f64,
    t_start: f64,
    t_end: f64,
    first: usize,
    last: usize,
    extent: f64,
    truncated: bool,
}

fn candidates(y: &ContinuousLateral, dy: &[f64], pp: &PeakParams, direction: Direction) -> Vec<Candidate> {
    let n = dy.len();
    let signal: Vec<f64> = dy.iter().map(|d| direction.sign() * d).collect();
    let t0 = y.t[0];
    find_peaks(&signal, y.rate, pp)
        .into_iter()
        .map(|peak| {
            let w = peak_width(&signal, t0, y.rate, &peak, pp.rel_height);
            let first = w.left_ip.floor() as usize;
            let last = (w.right_ip.ceil() as usize).min(n - 1);
            Candidate {
                direction,
                peak_index: peak.index,
                height: peak.height,
                t_start: w.t_start,
                t_end: w.t_end,
                first,
                last,
                extent: direction.sign() * y.displacement(first, last),
                truncated: w.truncated,
            }
        })
        .collect()
}

/// Sample index of the lane switch in `direction` inside `first..=last`
/// nearest to `near`.
fn lane_switch(y: &ContinuousLateral, first: usize, last: usize, near: usize, direction: Direction) -> Option<usize> {
    (first.max(1)..=last)
        .filter(|&k| {
            let step = y.lane[k] - y.lane[k - 1];
            match direction {
                Direction::Left => step > 0,
                Direction::Right => step < 0,
            }
        })
        .min_by_key(|&k| k.abs_diff(near))
}

fn assemble(
    traj: &Trajectory,
    y: &ContinuousLateral,
    c: &Candidate,
    criterion: Criterion,
    t_mid_index: Option<usize>,
) -> LaneChangeEvent {
    let mut truncated = c.truncated;
    let t_mid = match t_mid_index {
        Some(k) => y.t[k],
        None => {
            truncated = true;
            y.t[c.peak_index]
        }
    };
    if !(c.t_start < t_mid && t_mid < c.t_end) {
        truncated = true;
    }
    LaneChangeEvent {
        vehicle_id: traj.vehicle_id,
        criterion,
        t_start: c.t_start,
        t_mid,
        t_end: c.t_end,
        duration: c.t_end - c.t_start,
        direction: c.direction,
        v_mid: traj.samples[c.peak_index].v,
        lateral_extent: c.extent.abs(),
        kind: EventKind::Single,
        truncated,
    }
}

/// Peak criterion.
pub fn detect_peak(traj: &Trajectory, layout: &LaneLayout, params: &DetectionParams) -> Result<Vec<LaneChangeEvent>> {
    let y = continuous_lateral(traj, layout)?;
    let dy = y.derivative()?;
    let pp = params.peak_params(traj.shape.width, layout.lane_width)?;

    let mut found: Vec<Candidate> = [Direction::Left, Direction::Right]
        .into_iter()
        .flat_map(|d| candidates(&y, &dy, &pp, d))
        .filter(|c| c.extent > params.min_lateral_extent)
        .collect();

    // Opposite-sign peaks overlapping in time belong to one maneuver; keep
    // the dominant one.
    found.sort_by(|a, b| b.height.total_cmp(&a.height).then(a.peak_index.cmp(&b.peak_index)));
    let mut kept: Vec<Candidate> = Vec::with_capacity(found.len());
    for c in found {
        let clash = kept
            .iter()
            .any(|k| k.direction != c.direction && k.t_start < c.t_end && c.t_start < k.t_end);
        if !clash {
            kept.push(c);
        }
    }

    let mut events: Vec<LaneChangeEvent> = kept
        .iter()
        .map(|c| {
            let k = lane_switch(&y, c.first, c.last, c.peak_index, c.direction);
            assemble(traj, &y, c, Criterion::Peak, k)
        })
        .collect();
    events.sort_by(|a, b| a.t_mid.total_cmp(&b.t_mid));
    Ok(events)
}

/// Gradient criterion on the lane-marking distance channels.
///
/// Each re-referencing jump larger than half a lane width marks one crossing;
/// start and end come from the nearest same-direction velocity peak.
pub fn detect_gradient(
    traj: &Trajectory,
    layout: &LaneLayout,
    params: &DetectionParams,
) -> Result<Vec<LaneChangeEvent>> {
    if !traj.has_markings() {
        return Err(Error::GradientUnavailable(traj.vehicle_id));
    }
    let y = continuous_lateral(traj, layout)?;
    let dy = y.derivative()?;
    let pp = params.peak_params(traj.shape.width, layout.lane_width)?;
    let jump = 0.5 * layout.lane_width;
    let window = (params.gradient_search_window * traj.rate).round() as usize;

    let mut peaks_by_dir = [Direction::Left, Direction::Right].map(|d| candidates(&y, &dy, &pp, d));
    let mut events = Vec::new();
    for k in 1..traj.len() {
        let (a, b) = (&traj.samples[k - 1], &traj.samples[k]);
        let dl = b.d_left.unwrap_or(0.0) - a.d_left.unwrap_or(0.0);
        let dr = b.d_right.unwrap_or(0.0) - a.d_right.unwrap_or(0.0);
        let direction = if dr.abs() > jump {
            if dr > 0.0 {
                Direction::Right
            } else {
                Direction::Left
            }
        } else if dl.abs() > jump {
            if dl > 0.0 {
                Direction::Left
            } else {
                Direction::Right
            }
        } else {
            continue;
        };
        let pool = &mut peaks_by_dir[(direction == Direction::Right) as usize];
        let refined = pool
            .iter()
            .filter(|c| c.peak_index.abs_diff(k) <= window)
            .min_by_key(|c| c.peak_index.abs_diff(k))
            .copied();
        let event = match refined {
            Some(c) => {
                let mut e = assemble(traj, &y, &c, Criterion::Gradient, Some(k));
                e.v_mid = b.v;
                e
            }
            None => {
                let (first, last) = (k - 1, (k + 1).min(traj.len() - 1));
                LaneChangeEvent {
                    vehicle_id: traj.vehicle_id,
                    criterion: Criterion::Gradient,
                    t_start: y.t[first],
                    t_mid: y.t[k],
                    t_end: y.t[last],
                    duration: y.t[last] - y.t[first],
                    direction,
                    v_mid: b.v,
                    lateral_extent: y.displacement(first, last).abs(),
                    kind: EventKind::Single,
                    truncated: true,
                }
            }
        };
        events.push(event);
    }
    Ok(events)
}

/// Per-sample predicate of the distance criterion: lateral displacement from
/// the nearest lane center exceeds `threshold`.
pub fn distance_predicate(y: &ContinuousLateral, layout: &LaneLayout, threshold: f64) -> Vec<bool> {
    (0..y.len())
        .map(|k| {
            let yk = y.y(k);
            (yk - layout.lane_center(layout.nearest_lane(yk))).abs() > threshold
        })
        .collect()
}

/// Distance criterion.
///
/// The vehicle counts as settled in a lane after `settle_time` below the
/// threshold. Every stretch between two settled periods in different lanes
/// is one event; shorter dips below the threshold inside it are merged.
pub fn detect_distance(
    traj: &Trajectory,
    layout: &LaneLayout,
    params: &DetectionParams,
) -> Result<Vec<LaneChangeEvent>> {
    let threshold = params.distance_threshold;
    if !(threshold > 0.0 && threshold < layout.lane_width / 2.0) {
        return Err(crate::error::invalid(
            "distance_threshold",
            "must lie in (0, lane_width / 2)",
        ));
    }
    let y = continuous_lateral(traj, layout)?;
    let exceeds = distance_predicate(&y, layout, threshold);
    let settle = ((params.settle_time * traj.rate).round() as usize).max(1);

    // (first, last, lane) of each settled period.
    let mut settled: Vec<(usize, usize, i32)> = Vec::new();
    let mut k = 0;
    while k < exceeds.len() {
        if exceeds[k] {
            k += 1;
            continue;
        }
        let start = k;
        while k < exceeds.len() && !exceeds[k] {
            k += 1;
        }
        if k - start >= settle {
            settled.push((start, k - 1, layout.nearest_lane(y.y(start))));
        }
    }

    let mut events = Vec::new();
    for pair in settled.windows(2) {
        let ((_, a_end, lane_a), (b_start, _, lane_b)) = (pair[0], pair[1]);
        if lane_a == lane_b {
            continue;
        }
        let direction = if lane_b > lane_a {
            Direction::Left
        } else {
            Direction::Right
        };
        let (first, last) = (a_end + 1, b_start - 1);
        if last <= first {
            continue;
        }
        let (t_start, t_end) = (y.t[first], y.t[last]);
        let boundary = layout.lane_center(lane_a) + direction.sign() * layout.lane_width / 2.0;
        let crossing = (a_end..b_start).find_map(|i| {
            let (y0, y1) = (y.y(i) - boundary, y.y(i + 1) - boundary);
            (y0 * direction.sign() < 0.0 && y1 * direction.sign() >= 0.0)
                .then(|| y.t[i] + (y.t[i + 1] - y.t[i]) * (-y0 / (y1 - y0)))
        });
        let t_mid = match crossing {
            Some(t) if t_start < t && t < t_end => t,
            _ => 0.5 * (t_start + t_end),
        };
        let mid_index = ((t_mid - y.t[0]) * traj.rate).round() as usize;
        events.push(LaneChangeEvent {
            vehicle_id: traj.vehicle_id,
            criterion: Criterion::Distance,
            t_start,
            t_mid,
            t_end,
            duration: t_end - t_start,
            direction,
            v_mid: traj.samples[mid_index.min(traj.len() - 1)].v,
            lateral_extent: y.displacement(a_end, b_start).abs(),
            kind: EventKind::Single,
            truncated: false,
        });
    }
    Ok(events)
}

pub fn detect(
    criterion: Criterion,
    traj: &Trajectory,
    layout: &LaneLayout,
    params: &DetectionParams,
) -> Result<Vec<LaneChangeEvent>> {
    match criterion {
        Criterion::Gradient => detect_gradient(traj, layout, params),
        Criterion::Distance => detect_distance(traj, layout, params),
        Criterion::Peak => detect_peak(traj, layout, params),
    }
}

/// Marks double lane changes.
///
/// An event spanning at least one and a half lane widths is a double; two
/// same-direction events with overlapping windows are merged into one double.
pub fn classify_double(events: &[LaneChangeEvent], layout: &LaneLayout) -> Vec<LaneChangeEvent> {
    let limit = 1.5 * layout.lane_width;
    let mut out: Vec<LaneChangeEvent> = Vec::with_capacity(events.len());
    for e in events {
        let mut e = *e;
        if e.lateral_extent >= limit {
            e.kind = EventKind::Double;
        }
        if let Some(prev) = out.last_mut() {
            if prev.vehicle_id == e.vehicle_id
                && prev.direction == e.direction
                && e.t_start < prev.t_end
                && prev.t_start < e.t_end
            {
                prev.t_start = prev.t_start.min(e.t_start);
                prev.t_end = prev.t_end.max(e.t_end);
                prev.duration = prev.t_end - prev.t_start;
                prev.lateral_extent += e.lateral_extent;
                prev.truncated |= e.truncated;
                prev.kind = EventKind::Double;
                continue;
            }
        }
        out.push(e);
    }
    out
}
