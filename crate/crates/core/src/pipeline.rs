//! Preprocessing chain shared by detection and robustness runs:
//! resample, snap to the lateral grid, perturb, optionally low-pass.

use serde::{Deserialize, Serialize};

use crate::detect::{classify_double, detect, Criterion, DetectionParams, LaneChangeEvent};
use crate::error::Result;
use crate::filter::lowpass;
use crate::perturb::Perturbation;
use crate::traj::{quantize_lateral, resample, LaneLayout, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Preprocess {
    pub target_rate: f64,
    /// `None` disables the low-pass stage.
    pub lowpass_cutoff: Option<f64>,
}

impl Default for Preprocess {
    fn default() -> Self {
        Self {
            target_rate: 5.0,
            lowpass_cutoff: Some(1.3),
        }
    }
}

impl Preprocess {
    /// Resampled and grid-snapped copy of `traj`.
    pub fn prepare(&self, traj: &Trajectory) -> Result<Trajectory> {
        Ok(quantize_lateral(&resample(traj, self.target_rate)?))
    }

    pub fn finish(&self, traj: Trajectory, layout: &LaneLayout) -> Result<Trajectory> {
        match self.lowpass_cutoff {
            Some(cutoff) => lowpass(&traj, layout.lane_width, cutoff),
            None => Ok(traj),
        }
    }

    /// Full chain with an optional perturbation between the two stages.
    pub fn run(
        &self,
        traj: &Trajectory,
        layout: &LaneLayout,
        perturbation: Option<&Perturbation>,
    ) -> Result<Trajectory> {
        let prepared = self.prepare(traj)?;
        let perturbed = match perturbation {
            Some(p) => p.apply(&prepared)?,
            None => prepared,
        };
        self.finish(perturbed, layout)
    }
}

/// Preprocesses and detects with double lane changes marked.
pub fn detect_events(
    traj: &Trajectory,
    criterion: Criterion,
    layout: &LaneLayout,
    pre: &Preprocess,
    params: &DetectionParams,
) -> Result<Vec<LaneChangeEvent>> {
    let ready = pre.run(traj, layout, None)?;
    Ok(classify_double(&detect(criterion, &ready, layout, params)?, layout))
}
