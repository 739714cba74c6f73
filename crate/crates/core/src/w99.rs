//! Wiedemann 99 car-following acceleration.
//!
//! Speed difference is `dv = v_leader - v`, so approaching gives `dv < 0`.
//! Gaps are net (bumper to bumper).

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Speed at which `cc9` applies, 80 km/h.
const V_CC9: f64 = 80.0 / 3.6;
pub const A_MIN: f64 = -8.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct W99Params {
    pub cc0: f64,
    pub cc1: f64,
    pub cc2: f64,
    pub cc3: f64,
    pub cc4: f64,
    pub cc5: f64,
    pub cc6: f64,
    pub cc7: f64,
    pub cc8: f64,
    pub cc9: f64,
    pub v_desired: f64,
}

impl Default for W99Params {
    fn default() -> Self {
        Self {
            cc0: 1.5,
            cc1: 0.9,
            cc2: 4.0,
            cc3: -8.0,
            cc4: -0.35,
            cc5: 0.35,
            cc6: 11.44,
            cc7: 0.25,
            cc8: 3.5,
            cc9: 1.5,
            v_desired: 120.0 / 3.6,
        }
    }
}

impl W99Params {
    pub fn validate(&self) -> Result<()> {
        if !(self.cc0 > 0.0) {
            return Err(invalid("cc0", "must be positive"));
        }
        if !(self.cc1 > 0.0) {
            return Err(invalid("cc1", "must be positive"));
        }
        if !(self.cc8 > 0.0) {
            return Err(invalid("cc8", "must be positive"));
        }
        if !(self.cc4 < 0.0 && self.cc5 > 0.0) {
            return Err(invalid("cc4/cc5", "need cc4 < 0 < cc5"));
        }
        if !(self.v_desired >= 0.0) {
            return Err(invalid("v_desired", "must be non-negative"));
        }
        Ok(())
    }

    pub fn a_max_out(&self) -> f64 {
        self.cc8 + self.cc9
    }

    /// Free acceleration at speed `v`, from `cc8` at standstill to `cc9` at 80 km/h.
    pub fn free_accel(&self, v: f64) -> f64 {
        self.cc8 + (self.cc9 - self.cc8) * v.min(V_CC9) / V_CC9
    }

    /// Desired net gap behind a leader when the slower of both drives at `v`.
    pub fn desired_gap(&self, v: f64) -> f64 {
        self.cc0 + self.cc1 * v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Leader {
    pub gap: f64,
    pub v: f64,
    pub a: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Free,
    Closing,
    Following,
    Emergency,
}

/// Acceleration of a follower at speed `v` whose previous acceleration was
/// `a_prev`. Clamped to `[-8, cc8 + cc9]`.
pub fn w99_accel(v: f64, a_prev: f64, leader: Option<&Leader>, p: &W99Params) -> f64 {
    w99_step(v, a_prev, leader, p).0
}

pub fn w99_step(v: f64, a_prev: f64, leader: Option<&Leader>, p: &W99Params) -> (f64, Regime) {
    let (a, regime) = match leader {
        None => (p.free_accel(v), Regime::Free),
        Some(l) => regime_accel(v, a_prev, l, p),
    };
    let a = a.min(p.v_desired - v);
    (a.clamp(A_MIN, p.a_max_out()), regime)
}

fn regime_accel(v: f64, a_prev: f64, l: &Leader, p: &W99Params) -> (f64, Regime) {
    let dx = l.gap;
    let dv = l.v - v;
    let v_slower = v.min(l.v);
    let sdxc = p.desired_gap(v_slower);
    let sdxo = sdxc + p.cc2;
    let sdxv = sdxo + p.cc3 * (dv - p.cc4);
    let sdv = p.cc6 * dx * dx / 10_000.0;
    let sdvc = if v > 0.0 { p.cc4 - sdv } else { 0.0 };
    let sdvo = if l.v > p.cc5 { p.cc5 + sdv } else { 0.0 };

    if dv < sdvo && dx <= sdxc {
        let a = if l.v > 0.0 {
            let a = if dv >= 0.0 {
                0.0
            } else if dx > p.cc0 {
                (l.a + dv * dv / (p.cc0 - dx)).min(0.0)
            } else {
                (l.a + 0.5 * (dv - sdvo)).min(0.0)
            };
            // Always open the gap at least at the oscillation rate.
            a.min(-p.cc7).max(-10.0 + 0.5 * v.sqrt())
        } else if v > 0.0 {
            A_MIN
        } else {
            0.0
        };
        return (a, Regime::Emergency);
    }
    if dv < sdvc && dx < sdxv {
        return (0.5 * dv * dv / (-dx + sdxc - 0.1), Regime::Closing);
    }
    if dv < sdvo && dx < sdxo {
        let a = if a_prev <= 0.0 {
            a_prev.min(-p.cc7)
        } else {
            a_prev.max(p.cc7)
        };
        return (a, Regime::Following);
    }
    let a_max = p.free_accel(v);
    let a = if dx < sdxo {
        (dv * dv / (sdxo - dx)).min(a_max)
    } else {
        a_max
    };
    (a, Regime::Free)
}
