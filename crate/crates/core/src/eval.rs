//! Per-horizon MAE/RMSE for position and heading, ADE, and predictor
//! comparison reports over a shared test set.

use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{fmt_f64, SequenceSample};
use crate::error::{Error, Result};
use crate::geometry::angle_diff_deg;
use crate::predict::Predictor;
use crate::{HORIZONS_S, OUT_STEPS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalCell {
    pub pos_mae_ft: f64,
    pub pos_rmse_ft: f64,
    pub head_mae_deg: f64,
    pub head_rmse_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub predictor: String,
    pub cells: [EvalCell; OUT_STEPS],
    pub ade_ft: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub n_samples: usize,
    pub config_fingerprint: String,
}

fn mae_rmse(errors: &[f64]) -> (f64, f64) {
    let n = errors.len() as f64;
    let mae = errors.iter().map(|e| e.abs()).sum::<f64>() / n;
    let rmse = (errors.iter().map(|e| e * e).sum::<f64>() / n).sqrt();
    (mae, rmse)
}

/// MAE/RMSE of the Euclidean displacement between aligned position sets.
pub fn position_errors(preds: &[(f64, f64)], targets: &[(f64, f64)]) -> Result<(f64, f64)> {
    if preds.is_empty() || preds.len() != targets.len() {
        return Err(Error::Contract(format!(
            "position_errors needs matched non-empty sets, got {} vs {}",
            preds.len(),
            targets.len()
        )));
    }
    let errs: Vec<f64> = preds
        .iter()
        .zip(targets)
        .map(|(p, t)| (p.0 - t.0).hypot(p.1 - t.1))
        .collect();
    Ok(mae_rmse(&errs))
}

/// MAE/RMSE of the minimal circular distance between aligned heading sets.
pub fn heading_errors(preds: &[f64], targets: &[f64]) -> Result<(f64, f64)> {
    if preds.is_empty() || preds.len() != targets.len() {
        return Err(Error::Contract(format!(
            "heading_errors needs matched non-empty sets, got {} vs {}",
            preds.len(),
            targets.len()
        )));
    }
    let errs: Vec<f64> =
        preds.iter().zip(targets).map(|(p, t)| angle_diff_deg(*p, *t)).collect();
    Ok(mae_rmse(&errs))
}

/// Mean position MAE over the six horizons.
pub fn ade(mae_per_horizon: &[f64]) -> Result<f64> {
    if mae_per_horizon.len() != OUT_STEPS {
        return Err(Error::Contract(format!(
            "ade expects {OUT_STEPS} horizon values, got {}",
            mae_per_horizon.len()
        )));
    }
    Ok(mae_per_horizon.iter().sum::<f64>() / OUT_STEPS as f64)
}

/// Evaluates every predictor on the same test set. Row order follows the
/// registration order of `predictors`.
pub fn compare_predictors(
    test: &[SequenceSample],
    predictors: &[(&str, &dyn Predictor)],
    config_fingerprint: &str,
) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::Contract("compare_predictors needs a non-empty test set".into()));
    }
    let mut rows = Vec::with_capacity(predictors.len());
    for (name, predictor) in predictors {
        let mut pred_xy = vec![Vec::with_capacity(test.len()); OUT_STEPS];
        let mut true_xy = vec![Vec::with_capacity(test.len()); OUT_STEPS];
        let mut pred_h = vec![Vec::with_capacity(test.len()); OUT_STEPS];
        let mut true_h = vec![Vec::with_capacity(test.len()); OUT_STEPS];
        for sample in test {
            let fc = predictor.forecast_sample(sample)?;
            for k in 0..OUT_STEPS {
                pred_xy[k].push((fc.states[k].x_ft, fc.states[k].y_ft));
                true_xy[k].push((sample.target[k][0], sample.target[k][1]));
                pred_h[k].push(fc.states[k].heading_deg);
                true_h[k].push(sample.target[k][2]);
            }
        }
        let mut cells = [EvalCell {
            pos_mae_ft: 0.0,
            pos_rmse_ft: 0.0,
            head_mae_deg: 0.0,
            head_rmse_deg: 0.0,
        }; OUT_STEPS];
        let mut maes = [0.0; OUT_STEPS];
        for k in 0..OUT_STEPS {
            let (pm, pr) = position_errors(&pred_xy[k], &true_xy[k])?;
            let (hm, hr) = heading_errors(&pred_h[k], &true_h[k])?;
            cells[k] = EvalCell {
                pos_mae_ft: pm,
                pos_rmse_ft: pr,
                head_mae_deg: hm,
                head_rmse_deg: hr,
            };
            maes[k] = pm;
        }
        rows.push(EvalRow { predictor: name.to_string(), cells, ade_ft: ade(&maes)? });
    }
    Ok(EvalReport {
        rows,
        n_samples: test.len(),
        config_fingerprint: config_fingerprint.to_string(),
    })
}

/// CSV schema: predictor, horizon_s, pos_mae_ft, pos_rmse_ft, head_mae_deg,
/// head_rmse_deg; one summary row per predictor with horizon_s = "ade".
pub fn write_report_csv(report: &EvalReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "predictor",
        "horizon_s",
        "pos_mae_ft",
        "pos_rmse_ft",
        "head_mae_deg",
        "head_rmse_deg",
    ])?;
    for row in &report.rows {
        for (k, cell) in row.cells.iter().enumerate() {
            w.write_record([
                row.predictor.as_str(),
                &fmt_f64(HORIZONS_S[k]),
                &fmt_f64(cell.pos_mae_ft),
                &fmt_f64(cell.pos_rmse_ft),
                &fmt_f64(cell.head_mae_deg),
                &fmt_f64(cell.head_rmse_deg),
            ])?;
        }
        w.write_record([row.predictor.as_str(), "ade", &fmt_f64(row.ade_ft), "", "", ""])?;
    }
    w.flush()?;
    Ok(())
}

/// Aligned text table: one block of horizon rows per predictor, with an
/// ADE summary line, mirroring the usual results-table layout.
pub fn format_report_table(report: &EvalReport) -> String {
    let mut out = Vec::new();
    let _ = writeln!(
        out,
        "{:<18} {:>9} {:>12} {:>12} {:>13} {:>13}",
        "predictor", "horizon_s", "pos_mae_ft", "pos_rmse_ft", "head_mae_deg", "head_rmse_deg"
    );
    for row in &report.rows {
        for (k, cell) in row.cells.iter().enumerate() {
            let _ = writeln!(
                out,
                "{:<18} {:>9.1} {:>12.3} {:>12.3} {:>13.3} {:>13.3}",
                row.predictor,
                HORIZONS_S[k],
                cell.pos_mae_ft,
                cell.pos_rmse_ft,
                cell.head_mae_deg,
                cell.head_rmse_deg
            );
        }
        let _ = writeln!(out, "{:<18} {:>9} {:>12.3}", row.predictor, "ADE(ft)", row.ade_ft);
    }
    let _ = writeln!(
        out,
        "samples: {}  config: {}",
        report.n_samples, report.config_fingerprint
    );
    String::from_utf8(out).expect("table is utf-8")
}
