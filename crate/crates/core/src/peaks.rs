//! Peak picking with topographic prominence and width at relative height.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Relative height at which a lane change is measured for a vehicle of width
/// `width_obj` on lanes of width `width_lane`.
pub fn rel_height_for(width_obj: f64, width_lane: f64) -> f64 {
    1.0 - (width_obj / width_lane) / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakParams {
    /// Minimum prominence in m/s.
    pub prominence_min: f64,
    /// Minimum spacing between kept peaks, seconds.
    pub min_peak_separation: f64,
    pub rel_height: f64,
}

impl PeakParams {
    pub fn new(prominence_min: f64, min_peak_separation: f64, rel_height: f64) -> Result<Self> {
        if !(prominence_min > 0.0) {
            return Err(invalid("prominence_min", "must be positive"));
        }
        if !(min_peak_separation >= 0.0) {
            return Err(invalid("min_peak_separation", "must be non-negative"));
        }
        if !(rel_height > 0.0 && rel_height < 1.0) {
            return Err(invalid("rel_height", "must lie in (0, 1)"));
        }
        Ok(Self {
            prominence_min,
            min_peak_separation,
            rel_height,
        })
    }

    /// Parameters for a given vehicle and lane width.
    pub fn for_vehicle(prominence_min: f64, min_peak_separation: f64, width_obj: f64, width_lane: f64) -> Result<Self> {
        Self::new(
            prominence_min,
            min_peak_separation,
            rel_height_for(width_obj, width_lane),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub index: usize,
    pub height: f64,
    pub prominence: f64,
    pub left_base: usize,
    pub right_base: usize,
}

/// Strict local maxima; a flat top counts once, at its middle sample.
fn local_maxima(x: &[f64]) -> Vec<usize> {
    let n = x.len();
    let mut out = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if x[i - 1] < x[i] {
            let mut ahead = i + 1;
            while ahead + 1 < n && x[ahead] == x[i] {
                ahead += 1;
            }
            if x[ahead] < x[i] {
                out.push((i + ahead - 1) / 2);
                i = ahead;
                continue;
            }
        }
        i += 1;
    }
    out
}

fn prominence(x: &[f64], peak: usize) -> (f64, usize, usize) {
    let h = x[peak];
    let (mut left_min, mut left_base) = (h, peak);
    let mut j = peak;
    loop {
        if x[j] > h {
            break;
        }
        if x[j] < left_min {
            left_min = x[j];
            left_base = j;
        }
        if j == 0 {
            break;
        }
        j -= 1;
    }
    let (mut right_min, mut right_base) = (h, peak);
    for (j, &v) in x.iter().enumerate().skip(peak) {
        if v > h {
            break;
        }
        if v < right_min {
            right_min = v;
            right_base = j;
        }
    }
    (h - left_min.max(right_min), left_base, right_base)
}

/// Local maxima of `series` with prominence of at least `params.prominence_min`.
///
/// Among surviving peaks closer than `min_peak_separation` only the higher is
/// kept. Results are ordered by index.
pub fn find_peaks(series: &[f64], rate: f64, params: &PeakParams) -> Vec<Peak> {
    let mut peaks: Vec<Peak> = local_maxima(series)
        .into_iter()
        .filter_map(|index| {
            let (prom, left_base, right_base) = prominence(series, index);
            (prom >= params.prominence_min).then_some(Peak {
                index,
                height: series[index],
                prominence: prom,
                left_base,
                right_base,
            })
        })
        .collect();

    let distance = (params.min_peak_separation * rate).round() as usize;
    if distance > 1 && peaks.len() > 1 {
        let mut order: Vec<usize> = (0..peaks.len()).collect();
        order.sort_by(|&a, &b| {
            peaks[b]
                .height
                .total_cmp(&peaks[a].height)
                .then(peaks[a].index.cmp(&peaks[b].index))
        });
        let mut keep = vec![true; peaks.len()];
        for (rank, &p) in order.iter().enumerate() {
            if !keep[p] {
                continue;
            }
            for &q in &order[rank + 1..] {
                if peaks[p].index.abs_diff(peaks[q].index) < distance {
                    keep[q] = false;
                }
            }
        }
        let mut k = keep.into_iter();
        peaks.retain(|_| k.next().unwrap_or(false));
    }
    peaks
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakWidth {
    pub t_start: f64,
    pub t_end: f64,
    pub duration: f64,
    /// Fractional sample positions of the two crossings.
    pub left_ip: f64,
    pub right_ip: f64,
    /// The evaluation height was not crossed on at least one side and the
    /// width was clamped to the series bounds.
    pub truncated: bool,
}

/// Width of `peak` at `peak.height - rel_height * peak.prominence`.
pub fn peak_width(series: &[f64], t0: f64, rate: f64, peak: &Peak, rel_height: f64) -> PeakWidth {
    let x = series;
    let n = x.len();
    let level = peak.height - rel_height * peak.prominence;
    let mut truncated = false;

    let mut i = peak.index;
    while i > 0 && level < x[i] {
        i -= 1;
    }
    let left_ip = if x[i] < level {
        i as f64 + (level - x[i]) / (x[i + 1] - x[i])
    } else {
        truncated |= level < x[i];
        i as f64
    };

    let mut j = peak.index;
    while j + 1 < n && level < x[j] {
        j += 1;
    }
    let right_ip = if x[j] < level {
        j as f64 - (level - x[j]) / (x[j - 1] - x[j])
    } else {
        truncated |= level < x[j];
        j as f64
    };

    let t_start = t0 + left_ip / rate;
    let t_end = t0 + right_ip / rate;
    PeakWidth {
        t_start,
        t_end,
        duration: t_end - t_start,
        left_ip,
        right_ip,
        truncated,
    }
}
