//! TTC conflict identification from forecasts: pairwise detection,
//! frame-cadence scanning, TET / minTTC aggregation, and heatmap export.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::Trajectory;
use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::predict::{PredictedState, Predictor, TrajectoryForecast};
use crate::{HORIZONS_S, IN_STEPS, MPH_TO_FTPS, STRIDE_FRAMES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ConflictMode {
    #[default]
    BoundingBox,
    CenterPoint,
}

impl std::fmt::Display for ConflictMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConflictMode::BoundingBox => write!(f, "bb"),
            ConflictMode::CenterPoint => write!(f, "cp"),
        }
    }
}

/// One TTC detection between a vehicle pair at a frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConflictEvent {
    pub vehicle_a: String,
    pub vehicle_b: String,
    pub frame: i64,
    pub ttc_s: f64,
    pub mode: ConflictMode,
    /// Midpoint of the two predicted geometries at the conflict horizon.
    pub location: Point2,
}

/// Ordered detections for one unordered vehicle pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTimeline {
    pub vehicle_a: String,
    pub vehicle_b: String,
    /// (frame, ttc_s, conflict location), frames strictly increasing.
    pub detections: Vec<(i64, f64, Point2)>,
}

/// TET seconds and minTTC pair counts per threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TtcSummary {
    pub thresholds_s: [f64; 6],
    pub tet_s: [f64; 6],
    pub min_ttc_pairs: [usize; 6],
}

/// Earliest horizon at which the two forecasts conflict, if any.
/// Bounding-box mode intersects oriented boxes; center-point mode uses a
/// distance threshold.
pub fn detect_ttc(
    a: &TrajectoryForecast,
    b: &TrajectoryForecast,
    mode: ConflictMode,
    cp_radius_ft: f64,
) -> Result<Option<(f64, Point2)>> {
    if a.anchor_frame != b.anchor_frame {
        return Err(Error::Contract(format!(
            "mismatched anchor frames {} vs {}",
            a.anchor_frame, b.anchor_frame
        )));
    }
    for k in 0..HORIZONS_S.len() {
        let sa = &a.states[k];
        let sb = &b.states[k];
        let hit = match mode {
            ConflictMode::BoundingBox => a.box_at(k)?.intersects(&b.box_at(k)?),
            ConflictMode::CenterPoint => {
                (sa.x_ft - sb.x_ft).hypot(sa.y_ft - sb.y_ft) <= cp_radius_ft
            }
        };
        if hit {
            let mid = Point2::new((sa.x_ft + sb.x_ft) / 2.0, (sa.y_ft + sb.y_ft) / 2.0);
            return Ok(Some((HORIZONS_S[k], mid)));
        }
    }
    Ok(None)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanParams {
    pub cadence_frames: i64,
    pub gate_ft: f64,
    pub mode: ConflictMode,
    pub cp_radius_ft: f64,
    /// Vehicles at or below this speed get a constant-position forecast
    /// instead of the predictor.
    pub stationary_eps_mph: f64,
    pub fps: u32,
}

impl Default for ScanParams {
    fn default() -> Self {
        ScanParams {
            cadence_frames: 1,
            gate_ft: 150.0,
            mode: ConflictMode::BoundingBox,
            cp_radius_ft: 3.0,
            stationary_eps_mph: 0.5,
            fps: crate::FPS,
        }
    }
}

fn constant_position_forecast(
    wp: &crate::data::Waypoint,
    anchor_frame: i64,
) -> TrajectoryForecast {
    let states = HORIZONS_S.map(|t| PredictedState {
        t_pred_s: t,
        x_ft: wp.x_ft,
        y_ft: wp.y_ft,
        heading_deg: wp.heading_deg,
    });
    TrajectoryForecast {
        vehicle_id: wp.vehicle_id.clone(),
        anchor_frame,
        states,
        length_ft: wp.length_ft,
        width_ft: wp.width_ft,
        fallback: false,
    }
}

/// Scan trajectories at a frame cadence: at each scan frame, forecast
/// every vehicle with 5 s of moving history (stationary vehicles are
/// held at their current pose), run pairwise detection inside the
/// distance gate, and accumulate per-pair timelines.
pub fn scan_conflicts(
    trajectories: &[Trajectory],
    predictor: &dyn Predictor,
    params: &ScanParams,
) -> Result<Vec<PairTimeline>> {
    if params.cadence_frames < 1 {
        return Err(Error::Config("cadence_frames must be >= 1".into()));
    }
    if params.gate_ft <= 0.0 {
        return Err(Error::Config("gate_ft must be positive".into()));
    }
    // frame -> waypoint index per vehicle
    let mut by_vehicle: BTreeMap<&str, BTreeMap<i64, &crate::data::Waypoint>> = BTreeMap::new();
    let mut min_frame = i64::MAX;
    let mut max_frame = i64::MIN;
    for t in trajectories {
        let m = by_vehicle.entry(&t.vehicle_id).or_default();
        for w in &t.waypoints {
            min_frame = min_frame.min(w.frame);
            max_frame = max_frame.max(w.frame);
            m.insert(w.frame, w);
        }
    }
    if by_vehicle.len() < 2 || min_frame > max_frame {
        return Ok(Vec::new());
    }

    // gate sanity: a 3 s conflict needs closing distance within reach
    let max_speed = trajectories
        .iter()
        .flat_map(|t| t.waypoints.iter().map(|w| w.speed_mph))
        .fold(0.0f64, f64::max);
    let max_diag = trajectories
        .iter()
        .flat_map(|t| t.waypoints.iter().map(|w| w.length_ft.hypot(w.width_ft)))
        .fold(0.0f64, f64::max);
    let reach = 2.0 * max_speed * MPH_TO_FTPS * HORIZONS_S[HORIZONS_S.len() - 1] + max_diag;
    let gate = if reach > params.gate_ft {
        eprintln!(
            "warning: pair gate {:.0} ft below 3 s conflict reach {:.0} ft; widening",
            params.gate_ft, reach
        );
        reach
    } else {
        params.gate_ft
    };

    let mut timelines: BTreeMap<(String, String), Vec<(i64, f64, Point2)>> = BTreeMap::new();
    let history_span = (IN_STEPS as i64 - 1) * STRIDE_FRAMES;
    let mut frame = min_frame;
    while frame <= max_frame {
        // forecasts plus current positions for vehicles active at this frame
        let mut forecasts: Vec<(Point2, TrajectoryForecast)> = Vec::new();
        for frames in by_vehicle.values() {
            let Some(wp) = frames.get(&frame) else { continue };
            let here = Point2::new(wp.x_ft, wp.y_ft);
            if wp.speed_mph <= params.stationary_eps_mph {
                forecasts.push((here, constant_position_forecast(wp, frame)));
                continue;
            }
            // trailing 5 s of moving history on the 15-frame lattice
            let window: Option<Vec<[f64; 4]>> = (0..IN_STEPS as i64)
                .map(|k| {
                    frames
                        .get(&(frame - history_span + k * STRIDE_FRAMES))
                        .filter(|w| w.speed_mph > params.stationary_eps_mph)
                        .map(|w| [w.x_ft, w.y_ft, w.speed_mph, w.heading_deg])
                })
                .collect();
            let Some(window) = window else { continue };
            forecasts.push((
                here,
                predictor.forecast(&wp.vehicle_id, frame, &window, wp.length_ft, wp.width_ft)?,
            ));
        }
        for i in 0..forecasts.len() {
            for j in (i + 1)..forecasts.len() {
                let (pa, fa) = &forecasts[i];
                let (pb, fb) = &forecasts[j];
                if pa.distance(pb) > gate {
                    continue;
                }
                if let Some((ttc, loc)) = detect_ttc(fa, fb, params.mode, params.cp_radius_ft)? {
                    let key = pair_key(&fa.vehicle_id, &fb.vehicle_id);
                    timelines.entry(key).or_default().push((frame, ttc, loc));
                }
            }
        }
        frame += params.cadence_frames;
    }

    Ok(timelines
        .into_iter()
        .map(|((a, b), detections)| PairTimeline { vehicle_a: a, vehicle_b: b, detections })
        .collect())
}

fn pair_key(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

/// TET(τ) = detections with ttc ≤ τ × cadence/fps; minTTC count(τ) =
/// pairs whose minimum ttc ≤ τ.
pub fn aggregate(timelines: &[PairTimeline], cadence_frames: i64, fps: u32) -> TtcSummary {
    let dt = cadence_frames as f64 / fps as f64;
    let mut tet = [0.0; 6];
    let mut pairs = [0usize; 6];
    for tl in timelines {
        let min_ttc = tl
            .detections
            .iter()
            .map(|(_, ttc, _)| *ttc)
            .fold(f64::INFINITY, f64::min);
        for (k, tau) in HORIZONS_S.iter().enumerate() {
            tet[k] += tl.detections.iter().filter(|(_, ttc, _)| ttc <= tau).count() as f64 * dt;
            if min_ttc <= *tau {
                pairs[k] += 1;
            }
        }
    }
    TtcSummary { thresholds_s: HORIZONS_S, tet_s: tet, min_ttc_pairs: pairs }
}

/// Per-pair minimum-TTC events (earliest frame achieving the minimum).
pub fn min_ttc_events(timelines: &[PairTimeline], mode: ConflictMode) -> Vec<ConflictEvent> {
    let mut out = Vec::new();
    for tl in timelines {
        let Some(best) = tl
            .detections
            .iter()
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        else {
            continue;
        };
        out.push(ConflictEvent {
            vehicle_a: tl.vehicle_a.clone(),
            vehicle_b: tl.vehicle_b.clone(),
            frame: best.0,
            ttc_s: best.1,
            mode,
            location: best.2,
        });
    }
    out
}

/// Scene extent for heatmap binning.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Extent {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Heatmap {
    pub origin: (f64, f64),
    pub cell_ft: f64,
    pub cols: usize,
    pub rows: usize,
    /// Row-major counts, row 0 at min_y.
    pub counts: Vec<u32>,
    /// Events outside the extent, counted in the clamped border cell.
    pub clamped: usize,
}

/// Count event locations on a grid; out-of-extent events are clamped to
/// the border and reported.
pub fn heatmap(events: &[ConflictEvent], cell_ft: f64, extent: Extent) -> Result<Heatmap> {
    if cell_ft <= 0.0 {
        return Err(Error::Config("cell_ft must be positive".into()));
    }
    if extent.max_x <= extent.min_x || extent.max_y <= extent.min_y {
        return Err(Error::Config("empty heatmap extent".into()));
    }
    let cols = (((extent.max_x - extent.min_x) / cell_ft).ceil() as usize).max(1);
    let rows = (((extent.max_y - extent.min_y) / cell_ft).ceil() as usize).max(1);
    let mut counts = vec![0u32; cols * rows];
    let mut clamped = 0;
    for ev in events {
        let cx = ((ev.location.x - extent.min_x) / cell_ft).floor();
        let cy = ((ev.location.y - extent.min_y) / cell_ft).floor();
        if cx < 0.0 || cy < 0.0 || cx >= cols as f64 || cy >= rows as f64 {
            clamped += 1;
        }
        let ix = (cx.max(0.0) as usize).min(cols - 1);
        let iy = (cy.max(0.0) as usize).min(rows - 1);
        counts[iy * cols + ix] += 1;
    }
    Ok(Heatmap {
        origin: (extent.min_x, extent.min_y),
        cell_ft,
        cols,
        rows,
        counts,
        clamped,
    })
}

/// Events/timeline CSV: vehicle_a, vehicle_b, frame, ttc_s, mode, x_ft, y_ft.
pub fn write_events_csv<W: std::io::Write>(w: W, events: &[ConflictEvent]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["vehicle_a", "vehicle_b", "frame", "ttc_s", "mode", "x_ft", "y_ft"])?;
    for e in events {
        wtr.write_record([
            e.vehicle_a.clone(),
            e.vehicle_b.clone(),
            e.frame.to_string(),
            format!("{}", e.ttc_s),
            e.mode.to_string(),
            format!("{}", e.location.x),
            format!("{}", e.location.y),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// All timeline detections flattened to the events CSV schema.
pub fn timeline_events(timelines: &[PairTimeline], mode: ConflictMode) -> Vec<ConflictEvent> {
    let mut out = Vec::new();
    for tl in timelines {
        for (frame, ttc, loc) in &tl.detections {
            out.push(ConflictEvent {
                vehicle_a: tl.vehicle_a.clone(),
                vehicle_b: tl.vehicle_b.clone(),
                frame: *frame,
                ttc_s: *ttc,
                mode,
                location: *loc,
            });
        }
    }
    out
}

/// Heatmap CSV matrix plus a sidecar header describing origin, cell size,
/// threshold, and mode.
pub fn write_heatmap_csv<W: std::io::Write>(
    mut w: W,
    hm: &Heatmap,
    threshold_s: f64,
    mode: ConflictMode,
) -> Result<()> {
    writeln!(
        w,
        "# origin_x_ft={} origin_y_ft={} cell_ft={} threshold_s={} mode={} clamped={}",
        hm.origin.0, hm.origin.1, hm.cell_ft, threshold_s, mode, hm.clamped
    )?;
    for r in 0..hm.rows {
        let row: Vec<String> =
            (0..hm.cols).map(|c| hm.counts[r * hm.cols + c].to_string()).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}
