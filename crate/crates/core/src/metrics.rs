//! Pairwise and ego-only criticality metrics with their thresholds.
//!
//! Footprints are rectangles aligned with the road axis, centered at (s, y).

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectState {
    pub s: f64,
    pub y: f64,
    /// Longitudinal velocity.
    pub vx: f64,
    /// Lateral velocity.
    pub vy: f64,
    pub length: f64,
    pub width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub d_crit: f64,
    pub v_factor: f64,
    pub a_lon_crit: f64,
    pub a_lat_crit: f64,
    pub thw_crit: f64,
    pub dce_crit: f64,
    pub ttce_gate: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            d_crit: 1.0,
            v_factor: 1.3,
            a_lon_crit: 8.0,
            a_lat_crit: 8.0,
            thw_crit: 0.9,
            dce_crit: 1.0,
            ttce_gate: 2.6,
        }
    }
}

impl Thresholds {
    pub fn d_critical(&self, d: f64) -> bool {
        d < self.d_crit
    }

    pub fn v_critical(&self, v: f64, v_lim: f64) -> bool {
        v > self.v_factor * v_lim
    }

    pub fn a_lon_critical(&self, a: f64) -> bool {
        a.abs() > self.a_lon_crit
    }

    pub fn a_lat_critical(&self, a: f64) -> bool {
        a.abs() > self.a_lat_crit
    }

    pub fn thw_critical(&self, thw: f64) -> bool {
        thw < self.thw_crit
    }

    /// DCE only counts while the encounter is close in time.
    pub fn dce_counts(&self, ttce: f64) -> bool {
        ttce < self.ttce_gate
    }

    pub fn dce_critical(&self, dce: f64, ttce: f64) -> bool {
        self.dce_counts(ttce) && dce < self.dce_crit
    }
}

fn gap_1d(delta: f64, size_a: f64, size_b: f64) -> f64 {
    (delta.abs() - (size_a + size_b) / 2.0).max(0.0)
}

/// Gap between two footprints whose centers are `ds`, `dy` apart.
fn footprint_gap(ds: f64, dy: f64, a: &ObjectState, b: &ObjectState) -> f64 {
    gap_1d(ds, a.length, b.length).hypot(gap_1d(dy, a.width, b.width))
}

/// Minimum distance between the two footprints; 0 when they overlap.
pub fn euclidean_distance(a: &ObjectState, b: &ObjectState) -> f64 {
    footprint_gap(b.s - a.s, b.y - a.y, a, b)
}

/// Bumper-to-bumper time headway of `ego` to `opp`.
///
/// Defined only when `opp` is ahead, the lateral extents overlap and ego
/// moves at 0.1 m/s or more.
pub fn thw(ego: &ObjectState, opp: &ObjectState) -> Option<f64> {
    let ahead = opp.s > ego.s;
    let overlap = (opp.y - ego.y).abs() < (ego.width + opp.width) / 2.0;
    if !ahead || !overlap || ego.vx < 0.1 {
        return None;
    }
    Some(gap_1d(opp.s - ego.s, ego.length, opp.length) / ego.vx)
}

/// Time and distance of closest encounter under constant velocities.
///
/// The time comes from the centers' relative motion and is clamped at 0; the
/// distance is the footprint gap at that time.
pub fn ttce_dce(ego: &ObjectState, opp: &ObjectState) -> (f64, f64) {
    let (px, py) = (opp.s - ego.s, opp.y - ego.y);
    let (vx, vy) = (opp.vx - ego.vx, opp.vy - ego.vy);
    let v2 = vx * vx + vy * vy;
    let t = if v2 > 0.0 {
        (-(px * vx + py * vy) / v2).max(0.0)
    } else {
        0.0
    };
    (t, footprint_gap(px + t * vx, py + t * vy, ego, opp))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn obj(s: f64, y: f64, vx: f64, vy: f64, length: f64, width: f64) -> ObjectState {
        ObjectState {
            s,
            y,
            vx,
            vy,
            length,
            width,
        }
    }

    #[test]
    fn distance_examples() {
        let a = obj(0.0, 0.0, 0.0, 0.0, 5.0, 2.0);
        assert_eq!(euclidean_distance(&a, &obj(0.0, 0.0, 0.0, 0.0, 12.0, 2.5)), 0.0);
        assert_eq!(euclidean_distance(&a, &obj(30.0, 0.0, 0.0, 0.0, 5.0, 2.0)), 25.0);
        assert_eq!(euclidean_distance(&a, &obj(0.0, 3.5, 0.0, 0.0, 5.0, 2.0)), 1.5);
        let corner = euclidean_distance(&a, &obj(8.0, 6.0, 0.0, 0.0, 5.0, 2.0));
        assert!((corner - 5.0).abs() < 1e-12);
    }

    #[test]
    fn thw_examples() {
        let ego = obj(0.0, 0.0, 30.0, 0.0, 4.0, 2.0);
        // Center distance 31 m with 4 m cars: 27 m bumper gap.
        assert_eq!(thw(&ego, &obj(31.0, 0.0, 30.0, 0.0, 4.0, 2.0)), Some(0.9));
        assert_eq!(thw(&ego, &obj(22.0, 0.0, 30.0, 0.0, 4.0, 2.0)), Some(0.6));
        assert_eq!(thw(&ego, &obj(-31.0, 0.0, 30.0, 0.0, 4.0, 2.0)), None);
        assert_eq!(thw(&ego, &obj(31.0, 3.5, 30.0, 0.0, 4.0, 2.0)), None);
        let stopped = obj(0.0, 0.0, 0.05, 0.0, 4.0, 2.0);
        assert_eq!(thw(&stopped, &obj(31.0, 0.0, 30.0, 0.0, 4.0, 2.0)), None);
    }

    #[test]
    fn ttce_examples() {
        let ego = obj(0.0, 0.0, 20.0, 0.0, 0.0, 0.0);
        let opp = obj(60.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        assert_eq!(ttce_dce(&ego, &opp), (3.0, 0.0));
        let away = obj(60.0, 0.0, 30.0, 0.0, 0.0, 0.0);
        assert_eq!(ttce_dce(&ego, &away), (0.0, 60.0));
        let same = obj(60.0, 2.0, 20.0, 0.0, 0.0, 0.0);
        assert_eq!(ttce_dce(&ego, &same).0, 0.0);
    }

    #[test]
    fn passing_with_lateral_offset() {
        let ego = obj(0.0, 0.0, 30.0, 0.0, 4.0, 2.0);
        let opp = obj(40.0, 3.5, 20.0, 0.0, 4.0, 2.0);
        let (t, d) = ttce_dce(&ego, &opp);
        assert!((t - 4.0).abs() < 1e-12);
        assert!((d - 1.5).abs() < 1e-12);
    }
}
