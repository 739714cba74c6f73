//! CSV ingest and CSV/JSON emission.
//!
//! Floats are written in the shortest decimal form that parses back to the
//! same bits, so emit followed by ingest is lossless.

use std::collections::HashMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::criticality::{CriticalityRecord, Metric};
use crate::detect::{Criterion, Direction, EventKind, LaneChangeEvent};
use crate::error::{Error, Result};
use crate::mis::{Mode, TraceRow};
use crate::robustness::RobustnessReport;
use crate::scenario::SampledScenarioSet;
use crate::stats::EventGroupStats;
use crate::synth::TruthEvent;
use crate::traj::{Sample, Trajectory, VehicleClass, VehicleShape};

pub const TRAJECTORY_COLUMNS: [&str; 10] = [
    "vehicle_id",
    "t",
    "s",
    "lane",
    "lat",
    "v",
    "a_lon",
    "a_lat",
    "d_left",
    "d_right",
];
/// Optional trailing columns; a file without them is read as all cars.
pub const SHAPE_COLUMNS: [&str; 3] = ["length", "width", "class"];
pub const EVENT_COLUMNS: [&str; 11] = [
    "vehicle_id",
    "criterion",
    "t_start",
    "t_mid",
    "t_end",
    "duration",
    "direction",
    "v_mid",
    "lateral_extent",
    "kind",
    "truncated",
];
pub const SCHEMA_VERSION: u64 = 1;

pub fn num(x: f64) -> String {
    format!("{x}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowIssue {
    /// One-based line in the source, header is line 1.
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IngestReport {
    pub source: String,
    pub rows: usize,
    pub rejected_rows: Vec<RowIssue>,
    pub rejected_trajectories: Vec<(u64, String)>,
    pub warnings: Vec<String>,
}

/// All trajectories of one file.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub source: String,
    pub trajectories: Vec<Trajectory>,
    pub report: IngestReport,
}

fn malformed(source: &str, reason: impl Into<String>) -> Error {
    Error::MalformedHeader {
        path: source.to_string(),
        reason: reason.into(),
    }
}

fn finite(field: &str, name: &str) -> std::result::Result<f64, String> {
    let x: f64 = field
        .trim()
        .parse()
        .map_err(|_| format!("`{name}` is not a number: {field:?}"))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(format!("`{name}` is not finite"))
    }
}

fn optional(field: &str, name: &str) -> std::result::Result<Option<f64>, String> {
    if field.trim().is_empty() {
        Ok(None)
    } else {
        finite(field, name).map(Some)
    }
}

fn parse_class(s: &str) -> Option<VehicleClass> {
    match s.trim() {
        "car" => Some(VehicleClass::Car),
        "truck" => Some(VehicleClass::Truck),
        _ => None,
    }
}

fn parse_row(
    rec: &csv::StringRecord,
    with_shape: bool,
) -> std::result::Result<(u64, Sample, Option<VehicleShape>), String> {
    let want = TRAJECTORY_COLUMNS.len() + if with_shape { SHAPE_COLUMNS.len() } else { 0 };
    if rec.len() != want {
        return Err(format!("expected {want} fields, got {}", rec.len()));
    }
    let id: u64 = rec[0]
        .trim()
        .parse()
        .map_err(|_| format!("bad vehicle_id {:?}", &rec[0]))?;
    let lane: i32 = rec[3].trim().parse().map_err(|_| format!("bad lane {:?}", &rec[3]))?;
    let sample = Sample {
        t: finite(&rec[1], "t")?,
        s: finite(&rec[2], "s")?,
        lane,
        lat: finite(&rec[4], "lat")?,
        v: finite(&rec[5], "v")?,
        a_lon: finite(&rec[6], "a_lon")?,
        a_lat: finite(&rec[7], "a_lat")?,
        d_left: optional(&rec[8], "d_left")?,
        d_right: optional(&rec[9], "d_right")?,
    };
    let shape = if with_shape {
        let class = parse_class(&rec[12]).ok_or_else(|| format!("bad class {:?}", &rec[12]))?;
        let shape = VehicleShape::new(finite(&rec[10], "length")?, finite(&rec[11], "width")?, class)
            .map_err(|e| e.to_string())?;
        Some(shape)
    } else {
        None
    };
    Ok((id, sample, shape))
}

/// Reads one trajectory CSV.
///
/// A bad header is a hard error. Rows with unparsable or non-finite values
/// are dropped and listed; vehicles whose time is not strictly increasing,
/// or with fewer than two rows, are dropped and listed. Vehicle order is
/// first appearance in the file.
pub fn read_trajectories<R: Read>(reader: R, source: &str) -> Result<Recording> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header.len() < TRAJECTORY_COLUMNS.len() || header[..TRAJECTORY_COLUMNS.len()] != TRAJECTORY_COLUMNS {
        return Err(malformed(
            source,
            format!("expected columns {}", TRAJECTORY_COLUMNS.join(",")),
        ));
    }
    let with_shape = match &header[TRAJECTORY_COLUMNS.len()..] {
        [] => false,
        rest if rest == SHAPE_COLUMNS => true,
        rest => {
            return Err(malformed(
                source,
                format!("unexpected trailing columns {}", rest.join(",")),
            ))
        }
    };

    let mut report = IngestReport {
        source: source.to_string(),
        ..Default::default()
    };
    let mut order: Vec<u64> = Vec::new();
    let mut groups: HashMap<u64, (Vec<Sample>, Option<VehicleShape>)> = HashMap::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        report.rows += 1;
        let line = rec.position().map_or(k as u64 + 2, |p| p.line());
        match parse_row(&rec, with_shape) {
            Ok((id, sample, shape)) => {
                let entry = groups.entry(id).or_insert_with(|| {
                    order.push(id);
                    (Vec::new(), shape)
                });
                entry.0.push(sample);
            }
            Err(reason) => report.rejected_rows.push(RowIssue { line, reason }),
        }
    }
    if report.rows == 0 {
        let msg = format!("{source}: header only, no samples");
        log::warn!("{msg}");
        report.warnings.push(msg);
    }
    if !report.rejected_rows.is_empty() {
        log::warn!(
            "{source}: rejected {} of {} rows",
            report.rejected_rows.len(),
            report.rows
        );
    }

    let mut trajectories = Vec::with_capacity(order.len());
    for id in order {
        let (samples, shape) = groups.remove(&id).unwrap_or_default();
        match Trajectory::new(id, shape.unwrap_or_else(VehicleShape::car), samples) {
            Ok(t) => trajectories.push(t),
            Err(e) => {
                log::warn!("{source}: vehicle {id} rejected: {e}");
                report.rejected_trajectories.push((id, e.to_string()));
            }
        }
    }
    Ok(Recording {
        source: source.to_string(),
        trajectories,
        report,
    })
}

/// CSV files under `path`, or `path` itself, in name order.
pub fn csv_files(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        files.sort();
        Ok(files)
    } else {
        Ok(vec![path.to_path_buf()])
    }
}

/// One recording per CSV file, files read in parallel.
pub fn ingest(path: &Path) -> Result<Vec<Recording>> {
    let files = csv_files(path)?;
    std::thread::scope(|scope| {
        let handles: Vec<_> = files
            .iter()
            .map(|f| {
                scope.spawn(move || {
                    let file = fs::File::open(f)?;
                    read_trajectories(std::io::BufReader::new(file), &f.display().to_string())
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("ingest worker panicked"))
            .collect()
    })
}

pub fn write_trajectories<W: Write>(w: W, trajectories: &[Trajectory]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(TRAJECTORY_COLUMNS.iter().chain(&SHAPE_COLUMNS))?;
    for traj in trajectories {
        let sh = traj.shape;
        for s in &traj.samples {
            out.write_record([
                traj.vehicle_id.to_string(),
                num(s.t),
                num(s.s),
                s.lane.to_string(),
                num(s.lat),
                num(s.v),
                num(s.a_lon),
                num(s.a_lat),
                opt(s.d_left),
                opt(s.d_right),
                num(sh.length),
                num(sh.width),
                sh.class.as_str().to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_events<W: Write>(w: W, events: &[LaneChangeEvent]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(EVENT_COLUMNS)?;
    for e in events {
        out.write_record([
            e.vehicle_id.to_string(),
            e.criterion.as_str().to_string(),
            num(e.t_start),
            num(e.t_mid),
            num(e.t_end),
            num(e.duration),
            e.direction.as_str().to_string(),
            num(e.v_mid),
            num(e.lateral_extent),
            e.kind.as_str().to_string(),
            e.truncated.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

fn parse_direction(s: &str) -> Option<Direction> {
    match s {
        "left" => Some(Direction::Left),
        "right" => Some(Direction::Right),
        _ => None,
    }
}

fn parse_kind(s: &str) -> Option<EventKind> {
    match s {
        "single" => Some(EventKind::Single),
        "double" => Some(EventKind::Double),
        _ => None,
    }
}

/// Reads an events CSV written by [`write_events`]. The trailing
/// `truncated` column may be absent and then reads as `false`.
pub fn read_events<R: Read>(reader: R, source: &str) -> Result<Vec<LaneChangeEvent>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let base = &EVENT_COLUMNS[..EVENT_COLUMNS.len() - 1];
    if header != base && header != EVENT_COLUMNS {
        return Err(malformed(
            source,
            format!("expected columns {}", EVENT_COLUMNS.join(",")),
        ));
    }
    let mut events = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |what: &str| malformed(source, format!("line {line}: bad {what}"));
        if rec.len() != header.len() {
            return Err(bad("field count"));
        }
        let f =
            |i: usize, name: &str| finite(&rec[i], name).map_err(|r| malformed(source, format!("line {line}: {r}")));
        events.push(LaneChangeEvent {
            vehicle_id: rec[0].trim().parse().map_err(|_| bad("vehicle_id"))?,
            criterion: Criterion::parse(rec[1].trim()).ok_or_else(|| bad("criterion"))?,
            t_start: f(2, "t_start")?,
            t_mid: f(3, "t_mid")?,
            t_end: f(4, "t_end")?,
            duration: f(5, "duration")?,
            direction: parse_direction(rec[6].trim()).ok_or_else(|| bad("direction"))?,
            v_mid: f(7, "v_mid")?,
            lateral_extent: f(8, "lateral_extent")?,
            kind: parse_kind(rec[9].trim()).ok_or_else(|| bad("kind"))?,
            truncated: match rec.get(10).map(str::trim) {
                None | Some("false") => false,
                Some("true") => true,
                Some(_) => return Err(bad("truncated")),
            },
        });
    }
    Ok(events)
}

pub fn write_truth<W: Write>(w: W, truth: &[TruthEvent], recording_of: impl Fn(u64) -> usize) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["vehicle_id", "recording", "t_mid", "duration", "direction"])?;
    for e in truth {
        out.write_record([
            e.vehicle_id.to_string(),
            recording_of(e.vehicle_id).to_string(),
            num(e.t_mid),
            num(e.duration),
            e.direction.as_str().to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_robustness<W: Write>(w: W, report: &RobustnessReport) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["criterion", "kind", "magnitude", "detected", "truth", "ratio"])?;
    for r in &report.rows {
        out.write_record([
            r.criterion.as_str().to_string(),
            r.kind.as_str().to_string(),
            num(r.magnitude),
            r.detected.to_string(),
            r.truth.to_string(),
            num(r.ratio),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// One row per sample and opponent; undefined headways are left empty.
pub fn write_thw_traces<W: Write>(w: W, set: &SampledScenarioSet) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t", "opponent_id", "thw", "cc1"])?;
    for entry in &set.entries {
        for trace in &entry.traces {
            for (t, thw) in trace.t.iter().zip(&trace.thw) {
                out.write_record([num(*t), trace.opponent_id.to_string(), opt(*thw), num(entry.cc1)])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_criticality<W: Write>(w: W, records: &[CriticalityRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<String> = [
        "vehicle_id",
        "recording",
        "direction",
        "kind",
        "t_start",
        "t_mid",
        "t_end",
        "duration",
        "v_mid",
        "min_d",
        "max_v",
        "max_a_lon",
        "max_a_lat",
        "min_thw",
        "min_dce",
        "min_ttce",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend(Metric::ALL.iter().map(|m| format!("critical_{}", m.as_str())));
    out.write_record(&header)?;
    for r in records {
        let mut row = vec![
            r.vehicle_id.to_string(),
            r.recording.to_string(),
            r.direction.as_str().to_string(),
            r.kind.as_str().to_string(),
            num(r.t_start),
            num(r.t_mid),
            num(r.t_end),
            num(r.duration),
            num(r.v_mid),
            opt(r.min_d),
            num(r.max_v),
            num(r.max_a_lon),
            num(r.max_a_lat),
            opt(r.min_thw),
            opt(r.min_dce),
            opt(r.min_ttce),
        ];
        row.extend(Metric::ALL.iter().map(|&m| r.flags.get(m).to_string()));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_event_stats<W: Write>(w: W, groups: &[EventGroupStats]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "criterion",
        "class",
        "direction",
        "quantity",
        "n",
        "mean",
        "median",
        "q1",
        "q3",
        "whisker_low",
        "whisker_high",
        "outliers",
    ])?;
    for g in groups {
        let b = &g.stats;
        out.write_record([
            g.criterion.as_str().to_string(),
            g.class.clone(),
            g.direction.clone(),
            g.quantity.to_string(),
            b.n.to_string(),
            num(b.mean),
            num(b.median),
            num(b.q1),
            num(b.q3),
            num(b.whisker_low),
            num(b.whisker_high),
            b.outliers.len().to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_mis_trace<W: Write>(w: W, trace: &[TraceRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "t",
        "mode",
        "commanded_decel",
        "a_ego",
        "v_ego",
        "v_rear",
        "front_thw",
        "rear_thw",
        "rear_distance",
        "rear_lane",
    ])?;
    for r in trace {
        let mode = match r.mode {
            Mode::Idle => "idle",
            Mode::Engaged => "engaged",
            Mode::Completed => "completed",
        };
        out.write_record([
            num(r.t),
            mode.to_string(),
            num(r.commanded_decel),
            num(r.a_ego),
            num(r.v_ego),
            num(r.v_rear),
            opt(r.front_thw),
            opt(r.rear_thw),
            num(r.rear_distance),
            r.rear_lane.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// `value` with `"schema": 1` added at the top level.
pub fn with_schema<T: Serialize>(value: &T) -> Result<Value> {
    let mut v = serde_json::to_value(value)?;
    match &mut v {
        Value::Object(map) => {
            map.insert("schema".into(), json!(SCHEMA_VERSION));
            Ok(v)
        }
        _ => Ok(json!({ "schema": SCHEMA_VERSION, "data": v })),
    }
}

pub fn write_json<W: Write, T: Serialize>(mut w: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, &with_schema(value)?)?;
    w.write_all(b"\n")?;
    Ok(())
}

/// Creates the parent directory and writes through `f`.
pub fn write_file(path: &Path, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut file = std::io::BufWriter::new(fs::File::create(path)?);
    f(&mut file)?;
    file.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "vehicle_id,t,s,lane,lat,v,a_lon,a_lat,d_left,d_right\n";

    fn read(text: &str) -> Result<Recording> {
        read_trajectories(text.as_bytes(), "mem")
    }

    #[test]
    fn two_vehicles_give_two_trajectories() {
        let text = format!(
            "{HEADER}1,0,0,0,0,30,0,0,,\n2,0,5,1,0.1,28,0,0,1.6,1.9\n1,0.2,6,0,0,30,0,0,,\n2,0.2,10.6,1,0.1,28,0,0,1.6,1.9\n"
        );
        let rec = read(&text).unwrap();
        assert_eq!(rec.trajectories.len(), 2);
        assert_eq!(rec.trajectories[0].vehicle_id, 1);
        assert_eq!(rec.trajectories[1].samples[0].d_left, Some(1.6));
        assert_eq!(rec.trajectories[0].samples[0].d_left, None);
        assert_eq!(rec.trajectories[0].shape, VehicleShape::car());
    }

    #[test]
    fn nan_row_is_rejected_and_counted() {
        let text = format!("{HEADER}1,0,0,0,0,30,0,0,,\n1,0.2,6,0,0,NaN,0,0,,\n1,0.4,12,0,0,30,0,0,,\n");
        let rec = read(&text).unwrap();
        assert_eq!(rec.report.rows, 3);
        assert_eq!(rec.report.rejected_rows.len(), 1);
        assert_eq!(rec.report.rejected_rows[0].line, 3);
        assert_eq!(rec.trajectories[0].len(), 2);
    }

    #[test]
    fn header_only_is_empty_with_warning() {
        let rec = read(HEADER).unwrap();
        assert!(rec.trajectories.is_empty());
        assert_eq!(rec.report.warnings.len(), 1);
    }

    #[test]
    fn malformed_header_is_an_error() {
        let err = read("vehicle,t,s\n1,0,0\n").unwrap_err();
        assert!(matches!(err, Error::MalformedHeader { .. }));
        let err = read("vehicle_id,t,s,lane,lat,v,a_lon,a_lat,d_left,d_right,extra\n").unwrap_err();
        assert!(matches!(err, Error::MalformedHeader { .. }));
    }

    #[test]
    fn non_monotone_time_rejects_the_vehicle() {
        let text = format!(
            "{HEADER}1,0,0,0,0,30,0,0,,\n1,0.4,6,0,0,30,0,0,,\n1,0.2,12,0,0,30,0,0,,\n2,0,0,0,0,30,0,0,,\n2,0.2,6,0,0,30,0,0,,\n"
        );
        let rec = read(&text).unwrap();
        assert_eq!(rec.trajectories.len(), 1);
        assert_eq!(rec.report.rejected_trajectories.len(), 1);
        assert_eq!(rec.report.rejected_trajectories[0].0, 1);
    }

    #[test]
    fn shape_columns_round_trip() {
        let truck = VehicleShape::new(16.5, 2.55, VehicleClass::Truck).unwrap();
        let samples = (0..3)
            .map(|k| Sample {
                t: k as f64 * 0.04,
                s: 0.1 + k as f64 / 3.0,
                lane: 2,
                lat: -0.123_456_789_012_345_6,
                v: 22.2,
                a_lon: 1e-9,
                a_lat: -0.0,
                d_left: Some(std::f64::consts::PI),
                d_right: None,
            })
            .collect();
        let t = Trajectory::new(9, truck, samples).unwrap();
        let mut buf = Vec::new();
        write_trajectories(&mut buf, std::slice::from_ref(&t)).unwrap();
        let back = read_trajectories(buf.as_slice(), "mem").unwrap();
        assert_eq!(back.trajectories, vec![t]);
    }

    #[test]
    fn json_carries_schema() {
        let v = with_schema(&json!({"a": 1})).unwrap();
        assert_eq!(v["schema"], 1);
        let v = with_schema(&vec![1, 2]).unwrap();
        assert_eq!(v["schema"], 1);
        assert_eq!(v["data"][1], 2);
    }

    #[test]
    fn events_round_trip() {
        let e = LaneChangeEvent {
            vehicle_id: 4,
            criterion: Criterion::Peak,
            t_start: 1.25,
            t_mid: 4.0,
            t_end: 7.1,
            duration: 5.85,
            direction: Direction::Right,
            v_mid: 31.3,
            lateral_extent: 3.4,
            kind: EventKind::Double,
            truncated: true,
        };
        let mut buf = Vec::new();
        write_events(&mut buf, &[e]).unwrap();
        assert_eq!(read_events(buf.as_slice(), "mem").unwrap(), vec![e]);
    }
}
