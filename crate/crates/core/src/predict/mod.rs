//! Trajectory predictors: constant velocity, probabilistic grid, and an
//! LSTM encoder–decoder, behind one forecasting interface.

use serde::{Deserialize, Serialize};

use crate::data::{SequenceSample, Waypoint};
use crate::error::{Error, Result};
use crate::geometry::{normalize_heading_deg, OrientedBox};
use crate::{HORIZONS_S, IN_STEPS, MPH_TO_FTPS};

pub mod lstm;
pub mod probabilistic;

pub use lstm::{loss, loss_gradients, seq2seq_forward, train_seq2seq, LstmParams, TrainConfig};
pub use probabilistic::{fit_probabilistic, ProbModel};

/// Predicted vehicle state at one forecast horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictedState {
    pub t_pred_s: f64,
    pub x_ft: f64,
    pub y_ft: f64,
    pub heading_deg: f64,
}

/// Six predicted states, 0.5 s apart, plus box dimensions carried from
/// the observed vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryForecast {
    pub vehicle_id: String,
    pub anchor_frame: i64,
    pub states: [PredictedState; 6],
    pub length_ft: f64,
    pub width_ft: f64,
    /// Set when a probabilistic lookup missed and the forecast fell back
    /// to constant velocity.
    pub fallback: bool,
}

impl TrajectoryForecast {
    /// Oriented box at horizon index k (0-based, 0.5 s steps).
    pub fn box_at(&self, k: usize) -> Result<OrientedBox> {
        let s = &self.states[k];
        OrientedBox::new(s.x_ft, s.y_ft, self.length_ft, self.width_ft, s.heading_deg)
    }
}

/// Uniform predictor interface over the evaluation and conflict modules.
/// `input` is the 10-step window of (x, y, speed, heading) rows.
pub trait Predictor {
    fn name(&self) -> &'static str;

    fn forecast(
        &self,
        vehicle_id: &str,
        anchor_frame: i64,
        input: &[[f64; 4]],
        length_ft: f64,
        width_ft: f64,
    ) -> Result<TrajectoryForecast>;

    fn forecast_sample(&self, sample: &SequenceSample) -> Result<TrajectoryForecast> {
        self.forecast(
            &sample.vehicle_id,
            sample.anchor_frame,
            &sample.input,
            sample.length_ft,
            sample.width_ft,
        )
    }
}

fn check_input(input: &[[f64; 4]]) -> Result<()> {
    if input.len() != IN_STEPS {
        return Err(Error::Contract(format!(
            "input window must have {IN_STEPS} rows, got {}",
            input.len()
        )));
    }
    Ok(())
}

/// Constant speed and heading extrapolation of the last observed row.
pub fn predict_constant_velocity(
    vehicle_id: &str,
    anchor_frame: i64,
    last: &[f64; 4],
    length_ft: f64,
    width_ft: f64,
) -> TrajectoryForecast {
    let [x0, y0, speed_mph, heading_deg] = *last;
    let v = speed_mph * MPH_TO_FTPS;
    let th = heading_deg.to_radians();
    let (s, c) = th.sin_cos();
    let states = HORIZONS_S.map(|t| PredictedState {
        t_pred_s: t,
        x_ft: x0 + v * c * t,
        y_ft: y0 + v * s * t,
        heading_deg: normalize_heading_deg(heading_deg),
    });
    TrajectoryForecast {
        vehicle_id: vehicle_id.to_string(),
        anchor_frame,
        states,
        length_ft,
        width_ft,
        fallback: false,
    }
}

/// Constant-velocity forecast straight from a waypoint.
pub fn constant_velocity_from_waypoint(wp: &Waypoint) -> TrajectoryForecast {
    predict_constant_velocity(
        &wp.vehicle_id,
        wp.frame,
        &[wp.x_ft, wp.y_ft, wp.speed_mph, wp.heading_deg],
        wp.length_ft,
        wp.width_ft,
    )
}

/// The constant-velocity baseline as a [`Predictor`].
#[derive(Debug, Clone, Copy, Default)]
pub struct ConstantVelocity;

impl Predictor for ConstantVelocity {
    fn name(&self) -> &'static str {
        "constant_velocity"
    }

    fn forecast(
        &self,
        vehicle_id: &str,
        anchor_frame: i64,
        input: &[[f64; 4]],
        length_ft: f64,
        width_ft: f64,
    ) -> Result<TrajectoryForecast> {
        check_input(input)?;
        Ok(predict_constant_velocity(
            vehicle_id,
            anchor_frame,
            input.last().unwrap(),
            length_ft,
            width_ft,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cv_stationary_fixed_point() {
        let fc = predict_constant_velocity("a", 0, &[3.0, 4.0, 0.0, 120.0], 16.0, 6.0);
        for s in &fc.states {
            assert_eq!((s.x_ft, s.y_ft, s.heading_deg), (3.0, 4.0, 120.0));
        }
    }

    #[test]
    fn cv_30mph_east_one_second() {
        // 30 mph = 44 ft/s
        let fc = predict_constant_velocity("a", 0, &[0.0, 0.0, 30.0, 0.0], 16.0, 6.0);
        let s = &fc.states[1]; // t = 1.0 s
        assert!((s.x_ft - 44.0).abs() < 1e-12);
        assert!(s.y_ft.abs() < 1e-12);
        assert_eq!(s.heading_deg, 0.0);
    }

    #[test]
    fn cv_north_half_second() {
        let fc = predict_constant_velocity("a", 0, &[0.0, 0.0, 30.0, 90.0], 16.0, 6.0);
        let s = &fc.states[0]; // t = 0.5 s
        assert!(s.x_ft.abs() < 1e-12);
        assert!((s.y_ft - 22.0).abs() < 1e-12);
        assert_eq!(s.heading_deg, 90.0);
    }

    #[test]
    fn cv_translation_equivariance() {
        let base = predict_constant_velocity("a", 0, &[1.0, 2.0, 25.0, 33.0], 16.0, 6.0);
        let moved = predict_constant_velocity("a", 0, &[1.0 + 7.5, 2.0 - 3.25, 25.0, 33.0], 16.0, 6.0);
        for (b, m) in base.states.iter().zip(&moved.states) {
            assert!((m.x_ft - b.x_ft - 7.5).abs() < 1e-12);
            assert!((m.y_ft - b.y_ft + 3.25).abs() < 1e-12);
        }
    }

    #[test]
    fn cv_predictor_dispatch() {
        let input: Vec<[f64; 4]> = (0..10).map(|i| [i as f64, 0.0, 30.0, 0.0]).collect();
        let fc = ConstantVelocity.forecast("a", 135, &input, 16.0, 6.0).unwrap();
        let direct = predict_constant_velocity("a", 135, &input[9], 16.0, 6.0);
        assert_eq!(fc.states, direct.states);
        assert!(!fc.fallback);
    }

    #[test]
    fn cv_rejects_short_window() {
        let input = vec![[0.0; 4]; 3];
        assert!(ConstantVelocity.forecast("a", 0, &input, 16.0, 6.0).is_err());
    }
}
