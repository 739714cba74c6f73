//! Detection counts under injected lateral measurement errors.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::detect::{classify_double, detect, Criterion, DetectionParams};
use crate::error::{Error, Result};
use crate::perturb::{grid_seed, Perturbation, PerturbationKind};
use crate::pipeline::Preprocess;
use crate::traj::{LaneLayout, Trajectory};

pub const DEFAULT_BIAS_GRID: [f64; 7] = [0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5];
pub const DEFAULT_BROWNIAN_GRID: [f64; 5] = [0.0, 0.005, 0.01, 0.02, 0.05];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRow {
    pub criterion: Criterion,
    pub kind: PerturbationKind,
    pub magnitude: f64,
    pub detected: usize,
    pub truth: usize,
    pub ratio: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub rows: Vec<RobustnessRow>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSetup {
    pub layout: LaneLayout,
    pub preprocess: Preprocess,
    pub params: DetectionParams,
}

/// Builds a grid of one perturbation kind; Brownian points get independent
/// streams derived from `seed`.
pub fn grid(kind: PerturbationKind, magnitudes: &[f64], seed: u64) -> Vec<Perturbation> {
    magnitudes
        .iter()
        .enumerate()
        .map(|(i, &m)| match kind {
            PerturbationKind::Bias => Perturbation::bias(m),
            PerturbationKind::Brownian => Perturbation::brownian(m, grid_seed(seed, i)),
        })
        .collect()
}

/// Ground-truth event count from the marking channels of the unperturbed corpus.
pub fn ground_truth_count(corpus: &[Trajectory], setup: &SweepSetup) -> Result<usize> {
    let mut total = 0;
    for traj in corpus {
        if !traj.has_markings() {
            return Err(Error::NoGroundTruth);
        }
        let ready = setup.preprocess.run(traj, &setup.layout, None)?;
        total += classify_double(
            &detect(Criterion::Gradient, &ready, &setup.layout, &setup.params)?,
            &setup.layout,
        )
        .len();
    }
    if total == 0 {
        return Err(Error::NoGroundTruth);
    }
    Ok(total)
}

/// Count of `criterion` events on the corpus perturbed by `p`.
pub fn count_under(corpus: &[Trajectory], criterion: Criterion, p: &Perturbation, setup: &SweepSetup) -> Result<usize> {
    let mut total = 0;
    for traj in corpus {
        let ready = setup.preprocess.run(traj, &setup.layout, Some(p))?;
        total += classify_double(&detect(criterion, &ready, &setup.layout, &setup.params)?, &setup.layout).len();
    }
    Ok(total)
}

pub fn sweep(
    corpus: &[Trajectory],
    criterion: Criterion,
    grid: &[Perturbation],
    setup: &SweepSetup,
) -> Result<RobustnessReport> {
    let truth = ground_truth_count(corpus, setup)?;
    let mut rows = Vec::with_capacity(grid.len());
    for p in grid {
        let detected = count_under(corpus, criterion, p, setup)?;
        log::debug!(
            "{} {} {}: {detected}/{truth}",
            criterion.as_str(),
            p.kind.as_str(),
            p.magnitude
        );
        rows.push(RobustnessRow {
            criterion,
            kind: p.kind,
            magnitude: p.magnitude,
            detected,
            truth,
            ratio: detected as f64 / truth as f64,
        });
    }
    Ok(RobustnessReport { rows })
}

impl RobustnessReport {
    pub fn extend(&mut self, other: RobustnessReport) {
        self.rows.extend(other.rows);
    }

    /// One series of (magnitude, ratio) points per criterion and perturbation kind.
    pub fn plot_data(&self) -> Value {
        let mut keys: Vec<(Criterion, PerturbationKind)> = Vec::new();
        for r in &self.rows {
            if !keys.contains(&(r.criterion, r.kind)) {
                keys.push((r.criterion, r.kind));
            }
        }
        let series: Vec<Value> = keys
            .iter()
            .map(|&(c, k)| {
                let rows = self.rows.iter().filter(|r| r.criterion == c && r.kind == k);
                json!({
                    "criterion": c.as_str(),
                    "perturbation": k.as_str(),
                    "x": rows.clone().map(|r| r.magnitude).collect::<Vec<_>>(),
                    "y": rows.map(|r| r.ratio).collect::<Vec<_>>(),
                })
            })
            .collect();
        json!({ "schema": 1, "series": series })
    }
}
