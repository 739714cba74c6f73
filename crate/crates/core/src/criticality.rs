//! Worst-case criticality of lane-change events against all other vehicles
//! recorded at the same time.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::detect::{Direction, EventKind, LaneChangeEvent};
use crate::error::Result;
use crate::metrics::{euclidean_distance, thw, ttce_dce, ObjectState, Thresholds};
use crate::stats::BoxStats;
use crate::traj::{continuous_lateral, LaneLayout, Trajectory, VehicleShape};

/// Trajectory in global road coordinates with velocity components.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub vehicle_id: u64,
    pub shape: VehicleShape,
    pub rate: f64,
    pub t: Vec<f64>,
    pub s: Vec<f64>,
    pub y: Vec<f64>,
    pub vx: Vec<f64>,
    pub vy: Vec<f64>,
    pub a_lon: Vec<f64>,
    pub a_lat: Vec<f64>,
}

impl Track {
    pub fn new(traj: &Trajectory, layout: &LaneLayout) -> Result<Self> {
        let lateral = continuous_lateral(traj, layout)?;
        Ok(Self {
            vehicle_id: traj.vehicle_id,
            shape: traj.shape,
            rate: traj.rate,
            t: lateral.t.clone(),
            s: traj.samples.iter().map(|x| x.s).collect(),
            y: lateral.values(),
            vx: traj.samples.iter().map(|x| x.v).collect(),
            vy: lateral.derivative()?,
            a_lon: traj.samples.iter().map(|x| x.a_lon).collect(),
            a_lat: traj.samples.iter().map(|x| x.a_lat).collect(),
        })
    }

    pub fn state(&self, k: usize) -> ObjectState {
        ObjectState {
            s: self.s[k],
            y: self.y[k],
            vx: self.vx[k],
            vy: self.vy[k],
            length: self.shape.length,
            width: self.shape.width,
        }
    }

    /// Sample at time `t`, if this track has one within a quarter period.
    pub fn index_at(&self, t: f64) -> Option<usize> {
        let k = ((t - self.t[0]) * self.rate).round();
        if k < 0.0 || k as usize >= self.t.len() {
            return None;
        }
        let k = k as usize;
        ((self.t[k] - t).abs() < 0.25 / self.rate).then_some(k)
    }

    /// Sample indices inside `[t0, t1]`; the sample nearest `t_mid` if none.
    fn window(&self, t0: f64, t1: f64, t_mid: f64) -> Vec<usize> {
        let ks: Vec<usize> = (0..self.t.len())
            .filter(|&k| self.t[k] >= t0 && self.t[k] <= t1)
            .collect();
        if !ks.is_empty() {
            return ks;
        }
        let nearest = (0..self.t.len())
            .min_by(|&a, &b| (self.t[a] - t_mid).abs().total_cmp(&(self.t[b] - t_mid).abs()))
            .unwrap_or(0);
        vec![nearest]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSample {
    pub t: f64,
    pub opponent_id: u64,
    pub d: f64,
    pub thw: Option<f64>,
    pub ttce: Option<f64>,
    pub dce: Option<f64>,
}

/// Pairwise metrics at every ego sample in `[t0, t1]` where `opp` has a sample.
pub fn metric_samples(ego: &Track, opp: &Track, t0: f64, t1: f64, t_mid: f64) -> Vec<MetricSample> {
    ego.window(t0, t1, t_mid)
        .into_iter()
        .filter_map(|k| {
            let j = opp.index_at(ego.t[k])?;
            let (e, o) = (ego.state(k), opp.state(j));
            let (ttce, dce) = ttce_dce(&e, &o);
            Some(MetricSample {
                t: ego.t[k],
                opponent_id: opp.vehicle_id,
                d: euclidean_distance(&e, &o),
                thw: thw(&e, &o),
                ttce: Some(ttce),
                dce: Some(dce),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    D,
    V,
    ALon,
    ALat,
    Thw,
    Dce,
}

impl Metric {
    pub const ALL: [Metric; 6] = [
        Metric::D,
        Metric::V,
        Metric::ALon,
        Metric::ALat,
        Metric::Thw,
        Metric::Dce,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::D => "d",
            Metric::V => "v",
            Metric::ALon => "a_lon",
            Metric::ALat => "a_lat",
            Metric::Thw => "thw",
            Metric::Dce => "dce",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flags {
    pub d: bool,
    pub v: bool,
    pub a_lon: bool,
    pub a_lat: bool,
    pub thw: bool,
    pub dce: bool,
}

impl Flags {
    pub fn get(&self, m: Metric) -> bool {
        match m {
            Metric::D => self.d,
            Metric::V => self.v,
            Metric::ALon => self.a_lon,
            Metric::ALat => self.a_lat,
            Metric::Thw => self.thw,
            Metric::Dce => self.dce,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalityRecord {
    pub vehicle_id: u64,
    pub recording: usize,
    pub direction: Direction,
    pub kind: EventKind,
    pub t_start: f64,
    pub t_mid: f64,
    pub t_end: f64,
    pub duration: f64,
    pub v_mid: f64,
    pub min_d: Option<f64>,
    pub max_v: f64,
    /// Largest magnitude of longitudinal acceleration.
    pub max_a_lon: f64,
    /// Largest magnitude of lateral acceleration.
    pub max_a_lat: f64,
    pub min_thw: Option<f64>,
    /// Over samples with TTCE below the gate only.
    pub min_dce: Option<f64>,
    /// Over approaching samples (TTCE > 0) only.
    pub min_ttce: Option<f64>,
    pub flags: Flags,
}

impl CriticalityRecord {
    pub fn value(&self, m: Metric) -> Option<f64> {
        match m {
            Metric::D => self.min_d,
            Metric::V => Some(self.max_v),
            Metric::ALon => Some(self.max_a_lon),
            Metric::ALat => Some(self.max_a_lat),
            Metric::Thw => self.min_thw,
            Metric::Dce => self.min_dce,
        }
    }
}

fn fold_min(acc: Option<f64>, x: Option<f64>) -> Option<f64> {
    match (acc, x) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    }
}

/// Worst case over the event window and every opponent.
pub fn most_critical(
    ego: &Track,
    opponents: &[&Track],
    event: &LaneChangeEvent,
    recording: usize,
    thresholds: &Thresholds,
    v_lim: f64,
) -> CriticalityRecord {
    let ks = ego.window(event.t_start, event.t_end, event.t_mid);
    let max_of = |xs: &[f64], abs: bool| {
        ks.iter()
            .map(|&k| if abs { xs[k].abs() } else { xs[k] })
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let (max_v, max_a_lon, max_a_lat) = (
        max_of(&ego.vx, false),
        max_of(&ego.a_lon, true),
        max_of(&ego.a_lat, true),
    );

    let (mut min_d, mut min_thw, mut min_dce, mut min_ttce) = (None, None, None, None);
    for opp in opponents.iter().filter(|o| o.vehicle_id != ego.vehicle_id) {
        for m in metric_samples(ego, opp, event.t_start, event.t_end, event.t_mid) {
            min_d = fold_min(min_d, Some(m.d));
            min_thw = fold_min(min_thw, m.thw);
            if let (Some(ttce), Some(dce)) = (m.ttce, m.dce) {
                if thresholds.dce_counts(ttce) {
                    min_dce = fold_min(min_dce, Some(dce));
                }
                if ttce > 0.0 {
                    min_ttce = fold_min(min_ttce, Some(ttce));
                }
            }
        }
    }

    CriticalityRecord {
        vehicle_id: ego.vehicle_id,
        recording,
        direction: event.direction,
        kind: event.kind,
        t_start: event.t_start,
        t_mid: event.t_mid,
        t_end: event.t_end,
        duration: event.duration,
        v_mid: event.v_mid,
        min_d,
        max_v,
        max_a_lon,
        max_a_lat,
        min_thw,
        min_dce,
        min_ttce,
        flags: Flags {
            d: min_d.is_some_and(|d| thresholds.d_critical(d)),
            v: thresholds.v_critical(max_v, v_lim),
            a_lon: thresholds.a_lon_critical(max_a_lon),
            a_lat: thresholds.a_lat_critical(max_a_lat),
            thw: min_thw.is_some_and(|t| thresholds.thw_critical(t)),
            // Gating already applied when collecting min_dce.
            dce: min_dce.is_some_and(|d| d < thresholds.dce_crit),
        },
    }
}

/// Records for every countable event of one recording.
pub fn analyze_recording(
    tracks: &[Track],
    events: &[LaneChangeEvent],
    recording: usize,
    thresholds: &Thresholds,
    v_lim: f64,
) -> Vec<CriticalityRecord> {
    let all: Vec<&Track> = tracks.iter().collect();
    events
        .iter()
        .filter(|e| e.counts_for_statistics())
        .filter_map(|e| {
            let ego = tracks.iter().find(|t| t.vehicle_id == e.vehicle_id)?;
            Some(most_critical(ego, &all, e, recording, thresholds, v_lim))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionStat {
    pub metric: Metric,
    pub direction: Direction,
    /// (recording, percentage of critical events).
    pub per_recording: Vec<(usize, f64)>,
    pub summary: BoxStats,
}

/// Share of critical events per recording and direction, summarized across
/// recordings. Double lane changes are skipped; empty groups are omitted.
pub fn direction_stats(records: &[CriticalityRecord], whisker_iqr: f64) -> Vec<DirectionStat> {
    let mut recordings: Vec<usize> = records.iter().map(|r| r.recording).collect();
    recordings.sort_unstable();
    recordings.dedup();
    let mut out = Vec::new();
    for metric in Metric::ALL {
        for direction in [Direction::Left, Direction::Right] {
            let per_recording: Vec<(usize, f64)> = recordings
                .iter()
                .filter_map(|&rec| {
                    let group: Vec<&CriticalityRecord> = records
                        .iter()
                        .filter(|r| r.recording == rec && r.direction == direction && r.kind == EventKind::Single)
                        .collect();
                    if group.is_empty() {
                        return None;
                    }
                    let hits = group.iter().filter(|r| r.flags.get(metric)).count();
                    Some((rec, 100.0 * hits as f64 / group.len() as f64))
                })
                .collect();
            let values: Vec<f64> = per_recording.iter().map(|p| p.1).collect();
            match BoxStats::from_values(&values, whisker_iqr) {
                Some(summary) => out.push(DirectionStat {
                    metric,
                    direction,
                    per_recording,
                    summary,
                }),
                None => log::warn!("no {} events for {}", direction.as_str(), metric.as_str()),
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub metric: Metric,
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub threshold: f64,
}

pub fn threshold_of(metric: Metric, thresholds: &Thresholds, v_lim: f64) -> f64 {
    match metric {
        Metric::D => thresholds.d_crit,
        Metric::V => thresholds.v_factor * v_lim,
        Metric::ALon => thresholds.a_lon_crit,
        Metric::ALat => thresholds.a_lat_crit,
        Metric::Thw => thresholds.thw_crit,
        Metric::Dce => thresholds.dce_crit,
    }
}

/// Equal-width histogram of the defined values of `metric`; `None` when no
/// record defines it.
pub fn histogram(records: &[CriticalityRecord], metric: Metric, bins: usize, threshold: f64) -> Option<Histogram> {
    let values: Vec<f64> = records
        .iter()
        .filter(|r| r.kind == EventKind::Single)
        .filter_map(|r| r.value(metric))
        .collect();
    if values.is_empty() || bins == 0 {
        return None;
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min).min(threshold);
    let mut hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max).max(threshold);
    if hi <= lo {
        hi = lo + 1.0;
    }
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| lo + width * i as f64).collect();
    let mut counts = vec![0; bins];
    for v in values {
        let i = (((v - lo) / width) as usize).min(bins - 1);
        counts[i] += 1;
    }
    Some(Histogram {
        metric,
        edges,
        counts,
        threshold,
    })
}

pub fn histograms_json(records: &[CriticalityRecord], bins: usize, thresholds: &Thresholds, v_lim: f64) -> Value {
    let panels: Vec<Value> = Metric::ALL
        .iter()
        .filter_map(|&m| histogram(records, m, bins, threshold_of(m, thresholds, v_lim)))
        .map(|h| serde_json::to_value(h).unwrap_or(Value::Null))
        .collect();
    json!({ "schema": 1, "histograms": panels })
}

pub fn boxplot_json(stats: &[DirectionStat]) -> Value {
    json!({ "schema": 1, "boxes": stats })
}
