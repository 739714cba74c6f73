//! Box-plot summaries.

use serde::{Deserialize, Serialize};

use crate::detect::{Criterion, Direction, LaneChangeEvent};
use crate::traj::VehicleClass;

/// Quantile with linear interpolation between order statistics; `sorted`
/// must be ascending and non-empty.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    /// Most extreme values within `whisker_iqr` IQRs of the box.
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
}

impl BoxStats {
    /// `None` for an empty or non-finite input.
    pub fn from_values(values: &[f64], whisker_iqr: f64) -> Option<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q1 = quantile(&v, 0.25);
        let q3 = quantile(&v, 0.75);
        let iqr = q3 - q1;
        let (lo_fence, hi_fence) = (q1 - whisker_iqr * iqr, q3 + whisker_iqr * iqr);
        let inside = v.iter().copied().filter(|x| (lo_fence..=hi_fence).contains(x));
        let whisker_low = inside.clone().fold(f64::INFINITY, f64::min);
        let whisker_high = inside.fold(f64::NEG_INFINITY, f64::max);
        Some(Self {
            n: v.len(),
            mean: v.iter().sum::<f64>() / v.len() as f64,
            median: quantile(&v, 0.5),
            q1,
            q3,
            whisker_low,
            whisker_high,
            outliers: v.iter().copied().filter(|x| *x < lo_fence || *x > hi_fence).collect(),
        })
    }
}

/// One box per (criterion, class, direction, quantity); `"all"` pools a
/// dimension. Truncated and double events are left out.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventGroupStats {
    pub criterion: Criterion,
    pub class: String,
    pub direction: String,
    pub quantity: &'static str,
    pub stats: BoxStats,
}

/// Events of vehicles that `class_of` does not know only enter the `"all"`
/// class groups.
pub fn event_stats(
    events: &[LaneChangeEvent],
    class_of: impl Fn(u64) -> Option<VehicleClass>,
    whisker_iqr: f64,
) -> Vec<EventGroupStats> {
    let usable: Vec<&LaneChangeEvent> = events.iter().filter(|e| e.counts_for_statistics()).collect();
    let classes = [None, Some(VehicleClass::Car), Some(VehicleClass::Truck)];
    let directions = [None, Some(Direction::Left), Some(Direction::Right)];
    type Quantity = (&'static str, fn(&LaneChangeEvent) -> f64);
    let quantities: [Quantity; 2] = [("duration", |e| e.duration), ("v_mid", |e| e.v_mid)];
    let mut out = Vec::new();
    for criterion in [Criterion::Gradient, Criterion::Distance, Criterion::Peak] {
        for class in classes {
            for direction in directions {
                let group: Vec<&&LaneChangeEvent> = usable
                    .iter()
                    .filter(|e| e.criterion == criterion)
                    .filter(|e| class.is_none() || class_of(e.vehicle_id) == class)
                    .filter(|e| direction.is_none_or(|d| e.direction == d))
                    .collect();
                for (quantity, get) in quantities {
                    let values: Vec<f64> = group.iter().map(|e| get(e)).collect();
                    if let Some(stats) = BoxStats::from_values(&values, whisker_iqr) {
                        out.push(EventGroupStats {
                            criterion,
                            class: class.map_or("all", VehicleClass::as_str).to_string(),
                            direction: direction.map_or("all", Direction::as_str).to_string(),
                            quantity,
                            stats,
                        });
                    }
                }
            }
        }
    }
    out
}
