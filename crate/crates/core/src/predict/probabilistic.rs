//! Empirical conditional grid model: the training set is quantized into
//! 3 ft position bins plus speed/heading centile bins, and each key maps
//! to a per-horizon discrete distribution over quantized outcomes. The
//! prediction is the probability-weighted mean of the outcome-bin
//! representatives.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::SequenceSample;
use crate::error::{Error, Result};
use crate::geometry::normalize_heading_deg;
use crate::predict::{predict_constant_velocity, Predictor, TrajectoryForecast};
use crate::{HORIZONS_S, OUT_STEPS};

pub const GRID_SIZE_FT: f64 = 3.0;
pub const N_CENTILES: usize = 100;

/// Conditioning key: quantized last input row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Key {
    pub x_bin: i64,
    pub y_bin: i64,
    pub speed_centile: u8,
    pub heading_centile: u8,
}

/// Outcome bin: quantized target row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OutcomeBin {
    pub x_bin: i64,
    pub y_bin: i64,
    pub heading_centile: u8,
}

/// Accumulated representative for one outcome bin: means of the training
/// values that fell in it (circular mean for heading).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Outcome {
    pub count: u64,
    pub x_mean: f64,
    pub y_mean: f64,
    pub heading_deg: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbModel {
    pub grid_size_ft: f64,
    /// 99 internal quantile cut points for speed and heading.
    pub speed_bounds: Vec<f64>,
    pub heading_bounds: Vec<f64>,
    /// key -> per-horizon outcome table.
    #[serde(with = "table_serde")]
    pub table: BTreeMap<Key, Vec<BTreeMap<OutcomeBin, Outcome>>>,
    pub n_train: usize,
}

/// JSON maps need string keys, so the table persists as entry lists.
mod table_serde {
    use super::{Key, Outcome, OutcomeBin};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use std::collections::BTreeMap;

    type Table = BTreeMap<Key, Vec<BTreeMap<OutcomeBin, Outcome>>>;

    pub fn serialize<S: Serializer>(table: &Table, s: S) -> Result<S::Ok, S::Error> {
        let entries: Vec<(&Key, Vec<Vec<(&OutcomeBin, &Outcome)>>)> = table
            .iter()
            .map(|(k, hs)| (k, hs.iter().map(|m| m.iter().collect()).collect()))
            .collect();
        entries.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Table, D::Error> {
        let entries: Vec<(Key, Vec<Vec<(OutcomeBin, Outcome)>>)> = Vec::deserialize(d)?;
        Ok(entries
            .into_iter()
            .map(|(k, hs)| (k, hs.into_iter().map(|m| m.into_iter().collect()).collect()))
            .collect())
    }
}

fn pos_bin(v: f64, grid: f64) -> i64 {
    (v / grid).floor() as i64
}

/// Centile index of a value given sorted cut points: the number of cut
/// points <= value, capped at 99.
pub fn centile_bin(bounds: &[f64], v: f64) -> u8 {
    bounds.partition_point(|b| *b <= v).min(N_CENTILES - 1) as u8
}

fn quantile_bounds(mut values: Vec<f64>) -> Vec<f64> {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    (1..N_CENTILES).map(|k| values[(k * n / N_CENTILES).min(n - 1)]).collect()
}

impl ProbModel {
    pub fn key_of(&self, last: &[f64; 4]) -> Key {
        Key {
            x_bin: pos_bin(last[0], self.grid_size_ft),
            y_bin: pos_bin(last[1], self.grid_size_ft),
            speed_centile: centile_bin(&self.speed_bounds, last[2]),
            heading_centile: centile_bin(&self.heading_bounds, last[3]),
        }
    }

    pub fn outcome_bin_of(&self, row: &[f64; 3]) -> OutcomeBin {
        OutcomeBin {
            x_bin: pos_bin(row[0], self.grid_size_ft),
            y_bin: pos_bin(row[1], self.grid_size_ft),
            heading_centile: centile_bin(&self.heading_bounds, normalize_heading_deg(row[2])),
        }
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<ProbModel> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    /// Flat-table export: one row per (key, horizon, outcome) with its
    /// probability and representative value.
    pub fn write_table_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record([
            "x_bin",
            "y_bin",
            "speed_centile",
            "heading_centile",
            "horizon_s",
            "out_x_ft",
            "out_y_ft",
            "out_heading_deg",
            "probability",
        ])?;
        for (key, horizons) in &self.table {
            for (h, outcomes) in horizons.iter().enumerate() {
                let total: u64 = outcomes.values().map(|o| o.count).sum();
                for o in outcomes.values() {
                    wtr.write_record([
                        key.x_bin.to_string(),
                        key.y_bin.to_string(),
                        key.speed_centile.to_string(),
                        key.heading_centile.to_string(),
                        format!("{}", HORIZONS_S[h]),
                        format!("{}", o.x_mean),
                        format!("{}", o.y_mean),
                        format!("{}", o.heading_deg),
                        format!("{}", o.count as f64 / total as f64),
                    ])?;
                }
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Build the empirical conditional model from training samples.
pub fn fit_probabilistic(train: &[SequenceSample]) -> Result<ProbModel> {
    if train.is_empty() {
        return Err(Error::Fit("empty training set".into()));
    }
    let speeds: Vec<f64> = train.iter().map(|s| s.input[s.input.len() - 1][2]).collect();
    let headings: Vec<f64> = train.iter().map(|s| s.input[s.input.len() - 1][3]).collect();
    let mut model = ProbModel {
        grid_size_ft: GRID_SIZE_FT,
        speed_bounds: quantile_bounds(speeds),
        heading_bounds: quantile_bounds(headings),
        table: BTreeMap::new(),
        n_train: train.len(),
    };
    // accumulate sums first, divide at the end
    #[derive(Default)]
    struct Acc {
        count: u64,
        sx: f64,
        sy: f64,
        ssin: f64,
        scos: f64,
    }
    let mut acc: BTreeMap<Key, Vec<BTreeMap<OutcomeBin, Acc>>> = BTreeMap::new();
    for s in train {
        let key = model.key_of(&s.input[s.input.len() - 1]);
        let horizons = acc.entry(key).or_insert_with(|| {
            (0..OUT_STEPS).map(|_| BTreeMap::new()).collect()
        });
        for (h, row) in s.target.iter().enumerate() {
            let ob = model.outcome_bin_of(row);
            let a = horizons[h].entry(ob).or_default();
            a.count += 1;
            a.sx += row[0];
            a.sy += row[1];
            let th = row[2].to_radians();
            a.ssin += th.sin();
            a.scos += th.cos();
        }
    }
    for (key, horizons) in acc {
        let mut out_h = Vec::with_capacity(OUT_STEPS);
        for outcomes in horizons {
            let mut m = BTreeMap::new();
            for (ob, a) in outcomes {
                let n = a.count as f64;
                m.insert(
                    ob,
                    Outcome {
                        count: a.count,
                        x_mean: a.sx / n,
                        y_mean: a.sy / n,
                        heading_deg: normalize_heading_deg(
                            (a.ssin / n).atan2(a.scos / n).to_degrees(),
                        ),
                    },
                );
            }
            out_h.push(m);
        }
        model.table.insert(key, out_h);
    }
    Ok(model)
}

/// Probability-weighted mean over outcome-bin representatives; heading is
/// the circular weighted mean. Unseen keys fall back to constant velocity
/// and flag the forecast.
pub fn predict_probabilistic(
    model: &ProbModel,
    vehicle_id: &str,
    anchor_frame: i64,
    input: &[[f64; 4]],
    length_ft: f64,
    width_ft: f64,
) -> Result<TrajectoryForecast> {
    let last = input
        .last()
        .ok_or_else(|| Error::Contract("empty input window".into()))?;
    let key = model.key_of(last);
    let Some(horizons) = model.table.get(&key) else {
        let mut fc = predict_constant_velocity(vehicle_id, anchor_frame, last, length_ft, width_ft);
        fc.fallback = true;
        return Ok(fc);
    };
    let mut fc = predict_constant_velocity(vehicle_id, anchor_frame, last, length_ft, width_ft);
    fc.fallback = false;
    for (h, outcomes) in horizons.iter().enumerate() {
        let total: u64 = outcomes.values().map(|o| o.count).sum();
        let mut x = 0.0;
        let mut y = 0.0;
        let mut ssin = 0.0;
        let mut scos = 0.0;
        for o in outcomes.values() {
            let p = o.count as f64 / total as f64;
            x += p * o.x_mean;
            y += p * o.y_mean;
            let th = o.heading_deg.to_radians();
            ssin += p * th.sin();
            scos += p * th.cos();
        }
        fc.states[h].x_ft = x;
        fc.states[h].y_ft = y;
        fc.states[h].heading_deg = normalize_heading_deg(ssin.atan2(scos).to_degrees());
    }
    Ok(fc)
}

impl Predictor for ProbModel {
    fn name(&self) -> &'static str {
        "probabilistic"
    }

    fn forecast(
        &self,
        vehicle_id: &str,
        anchor_frame: i64,
        input: &[[f64; 4]],
        length_ft: f64,
        width_ft: f64,
    ) -> Result<TrajectoryForecast> {
        predict_probabilistic(self, vehicle_id, anchor_frame, input, length_ft, width_ft)
    }
}
