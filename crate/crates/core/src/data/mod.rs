//! Trajectory ingestion, stationary filtering, sequence windowing, and
//! train/test splitting.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{angle_diff_deg, normalize_heading_deg};
use crate::{IN_STEPS, OUT_STEPS, STRIDE_FRAMES};

pub mod synthetic;

pub use synthetic::{generate_synthetic, IntersectionSpec, Maneuver, SpeedProfile};

/// One vehicle observation at a single frame (30 frames = 1 s).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub frame: i64,
    pub vehicle_id: String,
    pub x_ft: f64,
    pub y_ft: f64,
    pub speed_mph: f64,
    /// Degrees counterclockwise from +x, in [0, 360).
    pub heading_deg: f64,
    pub length_ft: f64,
    pub width_ft: f64,
}

/// Waypoints of a single vehicle, strictly increasing in frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub vehicle_id: String,
    pub waypoints: Vec<Waypoint>,
}

/// One supervised pair: 10 input steps of (x, y, speed, heading) and
/// 6 target steps of (x, y, heading), consecutive rows 15 frames apart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceSample {
    pub vehicle_id: String,
    /// Frame of the last input step.
    pub anchor_frame: i64,
    pub input: Vec<[f64; 4]>,
    pub target: Vec<[f64; 3]>,
    pub length_ft: f64,
    pub width_ft: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<SequenceSample>,
    pub test: Vec<SequenceSample>,
    pub seed: u64,
}

/// How vehicle dimensions appear in the source table.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DimsSource {
    Columns {
        length: String,
        width: String,
    },
    /// Four corner coordinate columns; length/width are derived from the
    /// corner quadrilateral side lengths.
    Corners {
        corners: [(String, String); 4],
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnMapping {
    pub frame: String,
    pub id: String,
    pub x: String,
    pub y: String,
    pub speed: String,
    pub heading: String,
    #[serde(flatten)]
    pub dims: DimsSource,
}

#[derive(Debug, Default, Clone, Serialize)]
pub struct IngestStats {
    pub rows: usize,
    pub vehicles: usize,
    /// Rows whose corner-derived long axis disagreed with the heading
    /// column by more than 15 degrees (mod 180).
    pub heading_mismatches: usize,
}

struct ColIdx {
    frame: usize,
    id: usize,
    x: usize,
    y: usize,
    speed: usize,
    heading: usize,
    dims: DimCols,
}

enum DimCols {
    Columns { length: usize, width: usize },
    Corners([(usize, usize); 4]),
}

fn find_col(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::MissingColumn(name.to_string()))
}

fn parse_field(rec: &csv::StringRecord, idx: usize, col: &str, line: u64) -> Result<f64> {
    let raw = rec.get(idx).unwrap_or("");
    let v: f64 = raw
        .trim()
        .parse()
        .map_err(|_| Error::Data(format!("line {line}: unparseable `{col}` value `{raw}`")))?;
    if !v.is_finite() {
        return Err(Error::Data(format!("line {line}: non-finite `{col}` value")));
    }
    Ok(v)
}

/// Read a trajectory table and group it into per-vehicle trajectories,
/// sorted by frame, headings normalized into [0, 360).
pub fn ingest_csv(path: &Path, mapping: &ColumnMapping) -> Result<(Vec<Trajectory>, IngestStats)> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let idx = ColIdx {
        frame: find_col(&headers, &mapping.frame)?,
        id: find_col(&headers, &mapping.id)?,
        x: find_col(&headers, &mapping.x)?,
        y: find_col(&headers, &mapping.y)?,
        speed: find_col(&headers, &mapping.speed)?,
        heading: find_col(&headers, &mapping.heading)?,
        dims: match &mapping.dims {
            DimsSource::Columns { length, width } => DimCols::Columns {
                length: find_col(&headers, length)?,
                width: find_col(&headers, width)?,
            },
            DimsSource::Corners { corners } => {
                let mut out = [(0usize, 0usize); 4];
                for (k, (cx, cy)) in corners.iter().enumerate() {
                    out[k] = (find_col(&headers, cx)?, find_col(&headers, cy)?);
                }
                DimCols::Corners(out)
            }
        },
    };

    let mut stats = IngestStats::default();
    let mut by_vehicle: BTreeMap<String, Vec<Waypoint>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let frame_f = parse_field(&rec, idx.frame, &mapping.frame, line)?;
        let frame = frame_f as i64;
        let vehicle_id = rec.get(idx.id).unwrap_or("").trim().to_string();
        if vehicle_id.is_empty() {
            return Err(Error::Data(format!("line {line}: empty vehicle id")));
        }
        let x_ft = parse_field(&rec, idx.x, &mapping.x, line)?;
        let y_ft = parse_field(&rec, idx.y, &mapping.y, line)?;
        let speed_mph = parse_field(&rec, idx.speed, &mapping.speed, line)?;
        let heading_raw = parse_field(&rec, idx.heading, &mapping.heading, line)?;
        let heading_deg = normalize_heading_deg(heading_raw);
        let (length_ft, width_ft) = match &idx.dims {
            DimCols::Columns { length, width } => (
                parse_field(&rec, *length, "length", line)?,
                parse_field(&rec, *width, "width", line)?,
            ),
            DimCols::Corners(cols) => {
                let mut pts = [(0.0f64, 0.0f64); 4];
                for (k, (cxi, cyi)) in cols.iter().enumerate() {
                    pts[k] = (
                        parse_field(&rec, *cxi, "corner x", line)?,
                        parse_field(&rec, *cyi, "corner y", line)?,
                    );
                }
                let (l, w, axis_deg) = dims_from_corners(&pts);
                let mismatch = {
                    let d = angle_diff_deg(axis_deg, heading_deg);
                    d.min(180.0 - d)
                };
                if mismatch > 15.0 {
                    stats.heading_mismatches += 1;
                }
                (l, w)
            }
        };
        if length_ft <= 0.0 || width_ft <= 0.0 {
            return Err(Error::Data(format!(
                "line {line}: non-positive box dimensions for vehicle {vehicle_id}"
            )));
        }
        if speed_mph < 0.0 {
            return Err(Error::Data(format!(
                "line {line}: negative speed for vehicle {vehicle_id}"
            )));
        }
        stats.rows += 1;
        by_vehicle.entry(vehicle_id.clone()).or_default().push(Waypoint {
            frame,
            vehicle_id,
            x_ft,
            y_ft,
            speed_mph,
            heading_deg,
            length_ft,
            width_ft,
        });
    }

    let mut out = Vec::with_capacity(by_vehicle.len());
    for (vehicle_id, mut wps) in by_vehicle {
        wps.sort_by_key(|w| w.frame);
        for pair in wps.windows(2) {
            if pair[0].frame == pair[1].frame {
                return Err(Error::Data(format!(
                    "duplicate frame {} for vehicle {}",
                    pair[0].frame, vehicle_id
                )));
            }
        }
        out.push(Trajectory { vehicle_id, waypoints: wps });
    }
    stats.vehicles = out.len();
    Ok((out, stats))
}

/// Side lengths and long-axis angle of a corner quadrilateral.
fn dims_from_corners(pts: &[(f64, f64); 4]) -> (f64, f64, f64) {
    let side = |a: (f64, f64), b: (f64, f64)| (b.0 - a.0, b.1 - a.1);
    let s1 = side(pts[0], pts[1]);
    let s2 = side(pts[1], pts[2]);
    let l1 = s1.0.hypot(s1.1);
    let l2 = s2.0.hypot(s2.1);
    if l1 >= l2 {
        (l1, l2, normalize_heading_deg(s1.1.atan2(s1.0).to_degrees()))
    } else {
        (l2, l1, normalize_heading_deg(s2.1.atan2(s2.0).to_degrees()))
    }
}

/// Split a trajectory into maximal contiguous runs where every waypoint
/// moves faster than `speed_eps_mph`; runs shorter than `min_run`
/// waypoints are dropped.
pub fn filter_stationary(traj: &Trajectory, speed_eps_mph: f64, min_run: usize) -> Vec<Trajectory> {
    let mut out = Vec::new();
    let mut run: Vec<Waypoint> = Vec::new();
    let flush = |run: &mut Vec<Waypoint>, out: &mut Vec<Trajectory>| {
        if run.len() >= min_run.max(1) {
            out.push(Trajectory {
                vehicle_id: run[0].vehicle_id.clone(),
                waypoints: std::mem::take(run),
            });
        } else {
            run.clear();
        }
    };
    for wp in &traj.waypoints {
        if wp.speed_mph > speed_eps_mph {
            run.push(wp.clone());
        } else {
            flush(&mut run, &mut out);
        }
    }
    flush(&mut run, &mut out);
    out
}

/// Window a trajectory into supervised samples on the 15-frame lattice
/// anchored at the trajectory's first frame. Windows slide one lattice
/// step at a time.
pub fn window_sequences(
    traj: &Trajectory,
    in_steps: usize,
    out_steps: usize,
    stride_frames: i64,
) -> Vec<SequenceSample> {
    if traj.waypoints.is_empty() {
        return Vec::new();
    }
    let f0 = traj.waypoints[0].frame;
    // Lattice index -> waypoint; off-lattice frames are ignored.
    let mut lattice: BTreeMap<i64, &Waypoint> = BTreeMap::new();
    for wp in &traj.waypoints {
        let d = wp.frame - f0;
        if d % stride_frames == 0 {
            lattice.insert(d / stride_frames, wp);
        }
    }
    let total = in_steps + out_steps;
    let max_k = match lattice.keys().next_back() {
        Some(k) => *k,
        None => return Vec::new(),
    };
    let mut out = Vec::new();
    for start in 0..=(max_k - total as i64 + 1).max(0) {
        let wps: Option<Vec<&Waypoint>> =
            (start..start + total as i64).map(|k| lattice.get(&k).copied()).collect();
        let Some(wps) = wps else { continue };
        let anchor = wps[in_steps - 1];
        out.push(SequenceSample {
            vehicle_id: traj.vehicle_id.clone(),
            anchor_frame: anchor.frame,
            input: wps[..in_steps]
                .iter()
                .map(|w| [w.x_ft, w.y_ft, w.speed_mph, w.heading_deg])
                .collect(),
            target: wps[in_steps..]
                .iter()
                .map(|w| [w.x_ft, w.y_ft, w.heading_deg])
                .collect(),
            length_ft: anchor.length_ft,
            width_ft: anchor.width_ft,
        });
    }
    out
}

/// Convenience: default windowing parameters (10 in, 6 out, 15 frames).
pub fn window_default(traj: &Trajectory) -> Vec<SequenceSample> {
    window_sequences(traj, IN_STEPS, OUT_STEPS, STRIDE_FRAMES)
}

/// Vehicle-granular seeded split: all samples from one vehicle land on
/// one side.
pub fn split_dataset(
    samples: &[SequenceSample],
    test_fraction: f64,
    seed: u64,
) -> Result<DatasetSplit> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Config(format!(
            "test_fraction must be in (0,1), got {test_fraction}"
        )));
    }
    let mut by_vehicle: BTreeMap<&str, Vec<&SequenceSample>> = BTreeMap::new();
    for s in samples {
        by_vehicle.entry(&s.vehicle_id).or_default().push(s);
    }
    if by_vehicle.len() < 2 {
        return Err(Error::Split(format!(
            "need at least 2 vehicles to split, got {}",
            by_vehicle.len()
        )));
    }
    let mut vehicles: Vec<&str> = by_vehicle.keys().copied().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    vehicles.shuffle(&mut rng);

    let total = samples.len() as f64;
    let mut test_ids: Vec<&str> = Vec::new();
    let mut test_count = 0usize;
    for v in &vehicles {
        if (test_count as f64) / total >= test_fraction {
            break;
        }
        if test_ids.len() + 1 == vehicles.len() {
            break; // keep at least one vehicle in train
        }
        test_ids.push(v);
        test_count += by_vehicle[v].len();
    }
    if test_ids.is_empty() {
        test_ids.push(vehicles[0]);
    }
    let in_test = |id: &str| test_ids.contains(&id);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for s in samples {
        if in_test(&s.vehicle_id) {
            test.push(s.clone());
        } else {
            train.push(s.clone());
        }
    }
    Ok(DatasetSplit { train, test, seed })
}

/// Flat sample CSV: one row per sample. Column order:
/// vehicle_id, anchor_frame, length_ft, width_ft,
/// in{k}_x, in{k}_y, in{k}_speed, in{k}_heading for k = 0..in_steps,
/// out{k}_x, out{k}_y, out{k}_heading for k = 0..out_steps.
pub fn write_samples_csv<W: Write>(w: W, samples: &[SequenceSample]) -> Result<()> {
    let (in_steps, out_steps) = match samples.first() {
        Some(s) => (s.input.len(), s.target.len()),
        None => (IN_STEPS, OUT_STEPS),
    };
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec![
        "vehicle_id".to_string(),
        "anchor_frame".to_string(),
        "length_ft".to_string(),
        "width_ft".to_string(),
    ];
    for k in 0..in_steps {
        for f in ["x", "y", "speed", "heading"] {
            header.push(format!("in{k}_{f}"));
        }
    }
    for k in 0..out_steps {
        for f in ["x", "y", "heading"] {
            header.push(format!("out{k}_{f}"));
        }
    }
    wtr.write_record(&header)?;
    for s in samples {
        let mut rec = vec![
            s.vehicle_id.clone(),
            s.anchor_frame.to_string(),
            fmt_f64(s.length_ft),
            fmt_f64(s.width_ft),
        ];
        for row in &s.input {
            rec.extend(row.iter().map(|v| fmt_f64(*v)));
        }
        for row in &s.target {
            rec.extend(row.iter().map(|v| fmt_f64(*v)));
        }
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_samples_csv<R: std::io::Read>(r: R) -> Result<Vec<SequenceSample>> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    let in_steps = headers.iter().filter(|h| h.starts_with("in") && h.ends_with("_x")).count();
    let out_steps = headers.iter().filter(|h| h.starts_with("out") && h.ends_with("_x")).count();
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let get = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|v| v.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::Data(format!("samples csv line {line}: bad field {i}")))
        };
        let mut i = 4;
        let mut input = Vec::with_capacity(in_steps);
        for _ in 0..in_steps {
            input.push([get(i)?, get(i + 1)?, get(i + 2)?, get(i + 3)?]);
            i += 4;
        }
        let mut target = Vec::with_capacity(out_steps);
        for _ in 0..out_steps {
            target.push([get(i)?, get(i + 1)?, get(i + 2)?]);
            i += 3;
        }
        out.push(SequenceSample {
            vehicle_id: rec.get(0).unwrap_or("").to_string(),
            anchor_frame: rec
                .get(1)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Data(format!("samples csv line {line}: bad anchor_frame")))?,
            input,
            target,
            length_ft: get(2)?,
            width_ft: get(3)?,
        });
    }
    Ok(out)
}

/// Shortest round-trip decimal form of an f64.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}
