//! Flat `key = value` configuration with `#` comments.
//!
//! Every key is declared once in a field table that drives both parsing and
//! rendering, so a rendered config always parses back to the same values.

use std::path::{Path, PathBuf};

use crate::criticality::Metric;
use crate::detect::{Criterion, DetectionParams};
use crate::error::{Error, Result};
use crate::io::{num, read_trajectories};
use crate::metrics::Thresholds;
use crate::mis::{reference_fixture, AccParams, MisConfig, MisScenario, RoleVehicle};
use crate::pipeline::Preprocess;
use crate::robustness::{DEFAULT_BIAS_GRID, DEFAULT_BROWNIAN_GRID};
use crate::scenario::ScenarioSpec;
use crate::synth::SynthConfig;
use crate::traj::{LaneLayout, VehicleClass, VehicleShape};
use crate::w99::W99Params;

/// `(line, key, value)` in file order. Duplicate keys are an error.
pub fn parse_kv(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out: Vec<(usize, String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| Error::Config {
            line,
            reason: format!("expected `key = value`, got {content:?}"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            return Err(Error::Config {
                line,
                reason: "empty key".into(),
            });
        }
        if let Some((first, ..)) = out.iter().find(|(_, k, _)| k == key) {
            return Err(Error::Config {
                line,
                reason: format!("duplicate key `{key}`, first set on line {first}"),
            });
        }
        out.push((line, key.to_string(), value.to_string()));
    }
    Ok(out)
}

fn bad(key: &str, reason: impl Into<String>) -> Error {
    Error::ConfigValue {
        key: key.to_string(),
        reason: reason.into(),
    }
}

fn parse_f64(key: &str, s: &str) -> Result<f64> {
    let x: f64 = s.parse().map_err(|_| bad(key, format!("not a number: {s:?}")))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(bad(key, "must be finite"))
    }
}

fn parse_list(key: &str, s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| parse_f64(key, p))
        .collect()
}

fn render_list(xs: &[f64]) -> String {
    xs.iter().map(|&x| num(x)).collect::<Vec<_>>().join(", ")
}

pub enum Field<'a> {
    F64(&'a mut f64),
    /// `none` disables.
    OptF64(&'a mut Option<f64>),
    Usize(&'a mut usize),
    U64(&'a mut u64),
    I32(&'a mut i32),
    Bool(&'a mut bool),
    F64List(&'a mut Vec<f64>),
    Criteria(&'a mut Vec<Criterion>),
    Criterion(&'a mut Criterion),
    Path(&'a mut Option<PathBuf>),
    Dir(&'a mut PathBuf),
}

impl Field<'_> {
    fn set(&mut self, key: &str, s: &str) -> Result<()> {
        let int = |what: &str| bad(key, format!("not {what}: {s:?}"));
        match self {
            Field::F64(x) => **x = parse_f64(key, s)?,
            Field::OptF64(x) => **x = if s == "none" { None } else { Some(parse_f64(key, s)?) },
            Field::Usize(x) => **x = s.parse().map_err(|_| int("a non-negative integer"))?,
            Field::U64(x) => **x = s.parse().map_err(|_| int("a non-negative integer"))?,
            Field::I32(x) => **x = s.parse().map_err(|_| int("an integer"))?,
            Field::Bool(x) => **x = s.parse().map_err(|_| int("true or false"))?,
            Field::F64List(x) => **x = parse_list(key, s)?,
            Field::Criteria(x) => {
                **x = s
                    .split(',')
                    .map(str::trim)
                    .filter(|p| !p.is_empty())
                    .map(|p| Criterion::parse(p).ok_or_else(|| bad(key, format!("unknown criterion {p:?}"))))
                    .collect::<Result<_>>()?
            }
            Field::Criterion(x) => {
                **x = Criterion::parse(s).ok_or_else(|| bad(key, format!("unknown criterion {s:?}")))?
            }
            Field::Path(x) => **x = if s.is_empty() { None } else { Some(PathBuf::from(s)) },
            Field::Dir(_) if s.is_empty() => return Err(bad(key, "must not be empty")),
            Field::Dir(x) => **x = PathBuf::from(s),
        }
        Ok(())
    }

    fn render(&self) -> String {
        match self {
            Field::F64(x) => num(**x),
            Field::OptF64(x) => x.map_or_else(|| "none".to_string(), num),
            Field::Usize(x) => x.to_string(),
            Field::U64(x) => x.to_string(),
            Field::I32(x) => x.to_string(),
            Field::Bool(x) => x.to_string(),
            Field::F64List(x) => render_list(x),
            Field::Criteria(x) => x.iter().map(|c| c.as_str()).collect::<Vec<_>>().join(", "),
            Field::Criterion(x) => x.as_str().to_string(),
            Field::Path(x) => x.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
            Field::Dir(x) => x.display().to_string(),
        }
    }
}

/// `(key, unit or meaning, field)`.
type Table<'a> = Vec<(String, &'static str, Field<'a>)>;

fn apply(table: &mut Table<'_>, entries: &[(usize, String, String)]) -> Result<()> {
    for (line, key, value) in entries {
        let (_, _, field) = table.iter_mut().find(|(k, ..)| k == key).ok_or_else(|| match line {
            0 => bad(key, "unknown key"),
            _ => Error::Config {
                line: *line,
                reason: format!("unknown key `{key}`"),
            },
        })?;
        field.set(key, value)?;
    }
    Ok(())
}

fn render(table: &Table<'_>) -> String {
    let mut out = String::new();
    for (key, doc, field) in table {
        out.push_str(&format!("{key} = {}  # {doc}\n", field.render()));
    }
    out
}

fn layout_fields<'a>(prefix: &str, l: &'a mut LaneLayout) -> Table<'a> {
    vec![
        (
            format!("{prefix}lane_count"),
            "lanes, index 0 is rightmost",
            Field::Usize(&mut l.lane_count),
        ),
        (format!("{prefix}lane_width"), "m", Field::F64(&mut l.lane_width)),
        (format!("{prefix}speed_limit"), "m/s", Field::F64(&mut l.speed_limit)),
    ]
}

fn w99_fields<'a>(prefix: &str, p: &'a mut W99Params) -> Table<'a> {
    vec![
        (format!("{prefix}cc0"), "standstill distance, m", Field::F64(&mut p.cc0)),
        (format!("{prefix}cc1"), "time gap, s", Field::F64(&mut p.cc1)),
        (format!("{prefix}cc2"), "following variation, m", Field::F64(&mut p.cc2)),
        (
            format!("{prefix}cc3"),
            "threshold for entering following, s",
            Field::F64(&mut p.cc3),
        ),
        (
            format!("{prefix}cc4"),
            "negative following threshold, m/s",
            Field::F64(&mut p.cc4),
        ),
        (
            format!("{prefix}cc5"),
            "positive following threshold, m/s",
            Field::F64(&mut p.cc5),
        ),
        (
            format!("{prefix}cc6"),
            "speed dependency of oscillation, 1/(m s)",
            Field::F64(&mut p.cc6),
        ),
        (
            format!("{prefix}cc7"),
            "oscillation acceleration, m/s2",
            Field::F64(&mut p.cc7),
        ),
        (
            format!("{prefix}cc8"),
            "standstill acceleration, m/s2",
            Field::F64(&mut p.cc8),
        ),
        (
            format!("{prefix}cc9"),
            "acceleration at 80 km/h, m/s2",
            Field::F64(&mut p.cc9),
        ),
        (format!("{prefix}v_desired"), "m/s", Field::F64(&mut p.v_desired)),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessConfig {
    pub criteria: Vec<Criterion>,
    pub bias_grid: Vec<f64>,
    pub brownian_grid: Vec<f64>,
    /// Replaces `detect.min_lateral_extent` during sweeps.
    pub min_lateral_extent: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleConfig {
    pub cc1_values: Vec<f64>,
    /// Scenario file; the built-in overtaking fixture when unset.
    pub scenario: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MisRunConfig {
    /// Scenario file; the built-in reference fixture when unset.
    pub scenario: Option<PathBuf>,
    /// Front braking for the comparison run; zero disables it.
    pub brake_decel: f64,
    pub brake_duration: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub input: Option<PathBuf>,
    pub output: PathBuf,
    pub layout: LaneLayout,
    pub preprocess: Preprocess,
    pub detect: DetectionParams,
    pub criteria: Vec<Criterion>,
    pub thresholds: Thresholds,
    pub histogram_bins: usize,
    pub whisker_iqr: f64,
    /// Event source for the criticality analysis.
    pub criticality_criterion: Criterion,
    pub robustness: RobustnessConfig,
    pub w99: W99Params,
    pub sample: SampleConfig,
    pub mis: MisConfig,
    pub mis_run: MisRunConfig,
    pub synth: SynthConfig,
    pub synth_count: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            input: None,
            output: PathBuf::from("out"),
            layout: LaneLayout::default(),
            preprocess: Preprocess::default(),
            detect: DetectionParams::default(),
            criteria: vec![Criterion::Gradient, Criterion::Distance, Criterion::Peak],
            thresholds: Thresholds::default(),
            histogram_bins: 20,
            whisker_iqr: 1.5,
            criticality_criterion: Criterion::Peak,
            robustness: RobustnessConfig {
                criteria: vec![Criterion::Distance, Criterion::Peak],
                bias_grid: DEFAULT_BIAS_GRID.to_vec(),
                brownian_grid: DEFAULT_BROWNIAN_GRID.to_vec(),
                min_lateral_extent: 0.0,
            },
            w99: W99Params {
                v_desired: 33.0,
                ..Default::default()
            },
            sample: SampleConfig {
                cc1_values: vec![0.9, 0.7, 0.5, 0.3, 0.1],
                scenario: None,
            },
            mis: MisConfig::default(),
            mis_run: MisRunConfig {
                scenario: None,
                brake_decel: 4.0,
                brake_duration: 3.0,
            },
            synth: SynthConfig::default(),
            synth_count: 200,
        }
    }
}

impl RunConfig {
    fn table(&mut self) -> Table<'_> {
        let mut t: Table<'_> = vec![
            ("seed".into(), "random seed", Field::U64(&mut self.seed)),
            (
                "input".into(),
                "trajectory CSV file or directory",
                Field::Path(&mut self.input),
            ),
        ];
        t.extend(layout_fields("layout.", &mut self.layout));
        let Self {
            output,
            preprocess: pre,
            detect: d,
            criteria,
            thresholds: th,
            histogram_bins,
            whisker_iqr,
            criticality_criterion,
            robustness: r,
            w99,
            sample,
            mis: m,
            mis_run,
            synth: sy,
            synth_count,
            ..
        } = self;
        t.push(("output".into(), "output directory", Field::Dir(output)));
        t.extend([
            ("preprocess.target_rate".into(), "Hz", Field::F64(&mut pre.target_rate)),
            (
                "preprocess.lowpass_cutoff".into(),
                "Hz, or none",
                Field::OptF64(&mut pre.lowpass_cutoff),
            ),
            (
                "detect.criteria".into(),
                "gradient, distance, peak",
                Field::Criteria(criteria),
            ),
            (
                "detect.distance_threshold".into(),
                "m from lane center",
                Field::F64(&mut d.distance_threshold),
            ),
            ("detect.settle_time".into(), "s", Field::F64(&mut d.settle_time)),
            ("detect.prominence".into(), "m/s", Field::F64(&mut d.prominence_min)),
            ("detect.separation".into(), "s", Field::F64(&mut d.min_peak_separation)),
            (
                "detect.min_lateral_extent".into(),
                "m",
                Field::F64(&mut d.min_lateral_extent),
            ),
            (
                "detect.gradient_search_window".into(),
                "s",
                Field::F64(&mut d.gradient_search_window),
            ),
            ("thresholds.d".into(), "m, critical below", Field::F64(&mut th.d_crit)),
            (
                "thresholds.v_factor".into(),
                "critical above factor times speed limit",
                Field::F64(&mut th.v_factor),
            ),
            (
                "thresholds.a_lon".into(),
                "m/s2, critical above",
                Field::F64(&mut th.a_lon_crit),
            ),
            (
                "thresholds.a_lat".into(),
                "m/s2, critical above",
                Field::F64(&mut th.a_lat_crit),
            ),
            (
                "thresholds.thw".into(),
                "s, critical below",
                Field::F64(&mut th.thw_crit),
            ),
            (
                "thresholds.dce".into(),
                "m, critical below",
                Field::F64(&mut th.dce_crit),
            ),
            (
                "thresholds.ttce_gate".into(),
                "s, DCE counted below",
                Field::F64(&mut th.ttce_gate),
            ),
            (
                "stats.histogram_bins".into(),
                "bins per metric",
                Field::Usize(histogram_bins),
            ),
            (
                "stats.whisker_iqr".into(),
                "whisker reach in IQR",
                Field::F64(whisker_iqr),
            ),
            (
                "criticality.criterion".into(),
                "events analyzed: gradient, distance or peak",
                Field::Criterion(criticality_criterion),
            ),
            (
                "robustness.criteria".into(),
                "distance, peak, gradient",
                Field::Criteria(&mut r.criteria),
            ),
            ("robustness.bias_grid".into(), "m", Field::F64List(&mut r.bias_grid)),
            (
                "robustness.brownian_grid".into(),
                "m per step, standard deviation",
                Field::F64List(&mut r.brownian_grid),
            ),
            (
                "robustness.min_lateral_extent".into(),
                "m",
                Field::F64(&mut r.min_lateral_extent),
            ),
            ("sample.cc1_values".into(), "s", Field::F64List(&mut sample.cc1_values)),
            (
                "sample.scenario".into(),
                "scenario file, empty for built-in",
                Field::Path(&mut sample.scenario),
            ),
        ]);
        t.extend(w99_fields("w99.", w99));
        t.extend([
            (
                "mis.rear_detect_range".into(),
                "m",
                Field::F64(&mut m.rear_detect_range),
            ),
            ("mis.delta_v_min".into(), "m/s", Field::F64(&mut m.delta_v_min)),
            ("mis.thw_increase".into(), "s", Field::F64(&mut m.thw_increase)),
            (
                "mis.comfort_decel_cap".into(),
                "m/s2",
                Field::F64(&mut m.comfort_decel_cap),
            ),
            ("mis.thw_setpoint".into(), "s", Field::F64(&mut m.thw_setpoint)),
            ("mis.engage_slack".into(), "s", Field::F64(&mut m.engage_slack)),
            ("mis.corridor_horizon".into(), "s", Field::F64(&mut m.corridor_horizon)),
            ("mis.corridor_margin".into(), "m", Field::F64(&mut m.corridor_margin)),
            (
                "mis.d_crit".into(),
                "m, rear-gap violation below",
                Field::F64(&mut m.d_crit),
            ),
            (
                "mis.scenario".into(),
                "scenario file, empty for built-in",
                Field::Path(&mut mis_run.scenario),
            ),
            (
                "mis.brake_decel".into(),
                "m/s2, 0 disables",
                Field::F64(&mut mis_run.brake_decel),
            ),
            (
                "mis.brake_duration".into(),
                "s",
                Field::F64(&mut mis_run.brake_duration),
            ),
            ("synth.count".into(), "trajectories", Field::Usize(synth_count)),
            ("synth.rate".into(), "Hz", Field::F64(&mut sy.rate)),
            ("synth.duration".into(), "s per recording", Field::F64(&mut sy.duration)),
            (
                "synth.vehicles_per_recording".into(),
                "trajectories",
                Field::Usize(&mut sy.vehicles_per_recording),
            ),
            ("synth.lc_duration_min".into(), "s", Field::F64(&mut sy.lc_duration_min)),
            ("synth.lc_duration_max".into(), "s", Field::F64(&mut sy.lc_duration_max)),
            ("synth.speed_min".into(), "m/s", Field::F64(&mut sy.speed_min)),
            ("synth.speed_max".into(), "m/s", Field::F64(&mut sy.speed_max)),
            ("synth.truck_share".into(), "fraction", Field::F64(&mut sy.truck_share)),
            (
                "synth.jitter_amp".into(),
                "m per sinusoid",
                Field::F64(&mut sy.jitter_amp),
            ),
            (
                "synth.min_keep".into(),
                "s between lane changes",
                Field::F64(&mut sy.min_keep),
            ),
        ]);
        t
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.set_all(&parse_kv(text)?)?;
        Ok(cfg)
    }

    /// Applies overrides given as `(line, key, value)`.
    pub fn set_all(&mut self, entries: &[(usize, String, String)]) -> Result<()> {
        apply(&mut self.table(), entries)?;
        self.synth.layout = self.layout;
        Ok(())
    }

    /// `key=value` override from the command line.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| bad(assignment, "expected key=value"))?;
        self.set_all(&[(0, k.trim().to_string(), v.trim().to_string())])
    }

    /// Reads a config file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::parse(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.input, &mut cfg.sample.scenario, &mut cfg.mis_run.scenario]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn render(&self) -> String {
        render(&self.clone().table())
    }

    pub fn validate(&self) -> Result<()> {
        LaneLayout::new(self.layout.lane_count, self.layout.lane_width, self.layout.speed_limit)?;
        self.w99.validate()?;
        self.mis.validate()?;
        for (key, p) in [
            ("input", &self.input),
            ("sample.scenario", &self.sample.scenario),
            ("mis.scenario", &self.mis_run.scenario),
        ] {
            if let Some(p) = p {
                if !p.exists() {
                    return Err(bad(key, format!("{} does not exist", p.display())));
                }
            }
        }
        if !(self.whisker_iqr > 0.0) {
            return Err(bad("stats.whisker_iqr", "must be positive"));
        }
        if self.histogram_bins == 0 {
            return Err(bad("stats.histogram_bins", "must be positive"));
        }
        if self.sample.cc1_values.is_empty() {
            return Err(bad("sample.cc1_values", "must not be empty"));
        }
        Ok(())
    }

    /// Threshold in the unit the histogram of `metric` uses.
    pub fn threshold(&self, metric: Metric) -> f64 {
        crate::criticality::threshold_of(metric, &self.thresholds, self.layout.speed_limit)
    }
}

fn sample_table<'a>(spec: &'a mut ScenarioSpec) -> Table<'a> {
    let mut t = layout_fields("layout.", &mut spec.layout);
    t.extend([
        (
            "substituted_id".to_string(),
            "vehicle driven by the model",
            Field::U64(&mut spec.substituted_id),
        ),
        ("dt".to_string(), "s", Field::F64(&mut spec.dt)),
        ("duration".to_string(), "s", Field::F64(&mut spec.duration)),
    ]);
    t.extend(w99_fields("w99.", &mut spec.model));
    t
}

/// Car-following scenario file: `trajectories` names a trajectory CSV
/// relative to `base`; W99 keys default to `model`.
pub fn parse_sample_scenario(text: &str, base: &Path, model: W99Params) -> Result<ScenarioSpec> {
    let entries = parse_kv(text)?;
    let (paths, rest): (Vec<_>, Vec<_>) = entries.into_iter().partition(|(_, k, _)| k == "trajectories");
    let (line, _, file) = paths.into_iter().next().ok_or_else(|| bad("trajectories", "missing"))?;
    let mut spec = ScenarioSpec {
        layout: LaneLayout::default(),
        trajectories: Vec::new(),
        substituted_id: 0,
        model,
        dt: 0.05,
        duration: 0.0,
    };
    apply(&mut sample_table(&mut spec), &rest)?;
    let path = base.join(&file);
    let rec = read_trajectories(
        std::fs::File::open(&path).map_err(|e| Error::Config {
            line,
            reason: format!("{}: {e}", path.display()),
        })?,
        &path.display().to_string(),
    )?;
    spec.trajectories = rec.trajectories;
    if spec.duration == 0.0 {
        spec.duration = spec.trajectories.iter().map(|t| t.t_end()).fold(0.0, f64::max);
    }
    spec.validate()?;
    Ok(spec)
}

pub fn render_sample_scenario(spec: &ScenarioSpec, trajectories: &str) -> String {
    let mut copy = spec.clone();
    format!("trajectories = {trajectories}\n{}", render(&sample_table(&mut copy)))
}

fn mis_table<'a>(sc: &'a mut MisScenario) -> Table<'a> {
    let mut t = layout_fields("layout.", &mut sc.layout);
    let acc: &mut AccParams = &mut sc.acc;
    t.extend([
        ("lane".to_string(), "ego lane index", Field::I32(&mut sc.lane)),
        (
            "automated".to_string(),
            "ego in automated mode",
            Field::Bool(&mut sc.automated),
        ),
        ("dt".to_string(), "s", Field::F64(&mut sc.dt)),
        ("duration".to_string(), "s", Field::F64(&mut sc.duration)),
        (
            "rear_reaction".to_string(),
            "s, emergency brake reaction",
            Field::F64(&mut sc.rear_reaction),
        ),
        (
            "rear_lc_gap".to_string(),
            "m, tailgating starts below",
            Field::F64(&mut sc.rear_lc_gap),
        ),
        (
            "rear_lc_hold".to_string(),
            "s of tailgating before pulling out",
            Field::F64(&mut sc.rear_lc_hold),
        ),
        (
            "rear_lc_duration".to_string(),
            "s",
            Field::F64(&mut sc.rear_lc_duration),
        ),
        ("acc.thw_set".to_string(), "s", Field::F64(&mut acc.thw_set)),
        (
            "acc.standstill_gap".to_string(),
            "m",
            Field::F64(&mut acc.standstill_gap),
        ),
        ("acc.k_gap".to_string(), "1/s2", Field::F64(&mut acc.k_gap)),
        ("acc.k_speed".to_string(), "1/s", Field::F64(&mut acc.k_speed)),
        ("acc.v_set".to_string(), "m/s", Field::F64(&mut acc.v_set)),
        ("acc.a_min".to_string(), "m/s2", Field::F64(&mut acc.a_min)),
        ("acc.a_max".to_string(), "m/s2", Field::F64(&mut acc.a_max)),
    ]);
    t.extend(w99_fields("rear.w99.", &mut sc.rear_model));
    t
}

#[derive(Default)]
struct VehicleKeys {
    line: usize,
    role: Option<String>,
    s0: Option<f64>,
    v0: Option<f64>,
    length: Option<f64>,
    width: Option<f64>,
    class: Option<VehicleClass>,
}

/// MIS scenario file: the reference fixture overridden key by key. Any
/// `vehicle.<id>.<field>` key replaces the fixture's vehicles; each listed
/// vehicle needs `role` (ego, front, rear or left), `s0` and `v0`.
pub fn parse_mis_scenario(text: &str) -> Result<MisScenario> {
    let entries = parse_kv(text)?;
    let (vehicle, rest): (Vec<_>, Vec<_>) = entries.into_iter().partition(|(_, k, _)| k.starts_with("vehicle."));
    let mut sc = reference_fixture();
    apply(&mut mis_table(&mut sc), &rest)?;
    if vehicle.is_empty() {
        return Ok(sc);
    }

    let mut ids: Vec<u64> = Vec::new();
    let mut keys: std::collections::HashMap<u64, VehicleKeys> = Default::default();
    for (line, key, value) in &vehicle {
        let mut parts = key.splitn(3, '.').skip(1);
        let (Some(id), Some(field)) = (parts.next(), parts.next()) else {
            return Err(Error::Config {
                line: *line,
                reason: format!("expected vehicle.<id>.<field>, got `{key}`"),
            });
        };
        let id: u64 = id.parse().map_err(|_| bad(key, "vehicle id must be an integer"))?;
        let v = keys.entry(id).or_insert_with(|| {
            ids.push(id);
            VehicleKeys {
                line: *line,
                ..Default::default()
            }
        });
        match field {
            "role" => v.role = Some(value.clone()),
            "s0" => v.s0 = Some(parse_f64(key, value)?),
            "v0" => v.v0 = Some(parse_f64(key, value)?),
            "length" => v.length = Some(parse_f64(key, value)?),
            "width" => v.width = Some(parse_f64(key, value)?),
            "class" => {
                v.class = Some(match value.as_str() {
                    "car" => VehicleClass::Car,
                    "truck" => VehicleClass::Truck,
                    _ => return Err(bad(key, "expected car or truck")),
                })
            }
            _ => {
                return Err(Error::Config {
                    line: *line,
                    reason: format!("unknown key `{key}`"),
                })
            }
        }
    }

    sc.ego = None;
    sc.front = None;
    sc.rear = None;
    sc.left_traffic.clear();
    for id in ids {
        let v = &keys[&id];
        let missing = |what: &str| Error::Config {
            line: v.line,
            reason: format!("vehicle {id} has no `{what}`"),
        };
        let car = VehicleShape::car();
        let class = v.class.unwrap_or(VehicleClass::Car);
        let shape = VehicleShape::new(v.length.unwrap_or(car.length), v.width.unwrap_or(car.width), class)?;
        let role = RoleVehicle {
            id,
            shape,
            s0: v.s0.ok_or_else(|| missing("s0"))?,
            v0: v.v0.ok_or_else(|| missing("v0"))?,
        };
        let slot = match v.role.as_deref().ok_or_else(|| missing("role"))? {
            "ego" => &mut sc.ego,
            "front" => &mut sc.front,
            "rear" => &mut sc.rear,
            "left" => {
                sc.left_traffic.push(role);
                continue;
            }
            other => {
                return Err(Error::Config {
                    line: v.line,
                    reason: format!("unknown role `{other}`"),
                })
            }
        };
        if slot.replace(role).is_some() {
            return Err(Error::Config {
                line: v.line,
                reason: "role assigned twice".into(),
            });
        }
    }
    Ok(sc)
}

pub fn render_mis_scenario(sc: &MisScenario) -> String {
    let mut copy = sc.clone();
    let mut out = render(&mis_table(&mut copy));
    let tagged = [("ego", sc.ego), ("front", sc.front), ("rear", sc.rear)]
        .into_iter()
        .filter_map(|(role, v)| v.map(|v| (role, v)))
        .chain(sc.left_traffic.iter().map(|&v| ("left", v)));
    for (role, v) in tagged {
        let p = format!("vehicle.{}", v.id);
        out.push_str(&format!("{p}.role = {role}\n"));
        out.push_str(&format!("{p}.s0 = {}  # m\n", num(v.s0)));
        out.push_str(&format!("{p}.v0 = {}  # m/s\n", num(v.v0)));
        out.push_str(&format!("{p}.length = {}  # m\n", num(v.shape.length)));
        out.push_str(&format!("{p}.width = {}  # m\n", num(v.shape.width)));
        out.push_str(&format!("{p}.class = {}\n", v.shape.class.as_str()));
    }
    out
}
