//! LSTM encoder–decoder trajectory model, written directly against flat
//! `f64` buffers. The encoder consumes 10 steps of (x, y, speed, heading)
//! features; its final hidden/cell state seeds a decoder that unrolls
//! 6 output steps of (x, y, heading).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::SequenceSample;
use crate::error::{Error, Result};

pub mod net;
pub mod train;

pub use net::{loss, loss_gradients, lstm_cell_step, seq2seq_forward};
pub use train::{load_model, save_model, train_seq2seq, EpochStats, ModelFile, TrainConfig};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Matrix {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    /// out = A x
    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for r in 0..self.rows {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(x) {
                acc += a * b;
            }
            out[r] = acc;
        }
    }

    /// out += Aᵀ y
    pub fn tr_matvec_acc(&self, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for r in 0..self.rows {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            let yr = y[r];
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * yr;
            }
        }
    }

    /// A += y xᵀ
    pub fn outer_acc(&mut self, y: &[f64], x: &[f64]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(x.len(), self.cols);
        for r in 0..self.rows {
            let row = &mut self.data[r * self.cols..(r + 1) * self.cols];
            let yr = y[r];
            for (o, b) in row.iter_mut().zip(x) {
                *o += yr * b;
            }
        }
    }
}

/// Gate order inside per-layer arrays.
pub const GATE_I: usize = 0;
pub const GATE_F: usize = 1;
pub const GATE_O: usize = 2;
pub const GATE_G: usize = 3;

/// One LSTM layer: per-gate weights over the concatenated [h_prev, x]
/// vector plus per-gate biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmLayer {
    pub hidden: usize,
    pub input: usize,
    /// Each matrix is hidden × (hidden + input).
    pub w: [Matrix; 4],
    pub b: [Vec<f64>; 4],
}

impl LstmLayer {
    pub fn zeros(hidden: usize, input: usize) -> LstmLayer {
        LstmLayer {
            hidden,
            input,
            w: std::array::from_fn(|_| Matrix::zeros(hidden, hidden + input)),
            b: std::array::from_fn(|_| vec![0.0; hidden]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HeadingEncoding {
    /// Heading fed as a single scalar scaled by 1/360.
    #[default]
    Scalar,
    /// Heading fed as (sin, cos) — 5 input features.
    SinCos,
}

impl HeadingEncoding {
    pub fn input_dim(&self) -> usize {
        match self {
            HeadingEncoding::Scalar => 4,
            HeadingEncoding::SinCos => 5,
        }
    }
}

/// Per-feature normalization statistics from the training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub in_mean: Vec<f64>,
    pub in_scale: Vec<f64>,
    pub out_mean: [f64; 3],
    pub out_scale: [f64; 3],
}

impl Normalization {
    /// Identity statistics, useful for small exact tests.
    pub fn identity(encoding: HeadingEncoding) -> Normalization {
        let d = encoding.input_dim();
        Normalization {
            in_mean: vec![0.0; d],
            in_scale: vec![1.0; d],
            out_mean: [0.0; 3],
            out_scale: [1.0; 3],
        }
    }

    pub fn fit(train: &[SequenceSample], encoding: HeadingEncoding) -> Result<Normalization> {
        if train.is_empty() {
            return Err(Error::Fit("cannot fit normalization on empty set".into()));
        }
        // mean/std over all input rows for x, y, speed
        let mut sums = [0.0f64; 3];
        let mut sqs = [0.0f64; 3];
        let mut n = 0.0f64;
        for s in train {
            for row in &s.input {
                for k in 0..3 {
                    sums[k] += row[k];
                    sqs[k] += row[k] * row[k];
                }
                n += 1.0;
            }
        }
        let mean: Vec<f64> = sums.iter().map(|s| s / n).collect();
        let scale: Vec<f64> = (0..3)
            .map(|k| ((sqs[k] / n - mean[k] * mean[k]).max(0.0)).sqrt().max(1e-8))
            .collect();
        let (in_mean, in_scale) = match encoding {
            HeadingEncoding::Scalar => (
                vec![mean[0], mean[1], mean[2], 0.0],
                vec![scale[0], scale[1], scale[2], 360.0],
            ),
            HeadingEncoding::SinCos => (
                vec![mean[0], mean[1], mean[2], 0.0, 0.0],
                vec![scale[0], scale[1], scale[2], 1.0, 1.0],
            ),
        };
        Ok(Normalization {
            in_mean,
            in_scale,
            out_mean: [mean[0], mean[1], 0.0],
            out_scale: [scale[0], scale[1], 360.0],
        })
    }

    pub fn encode_input_row(&self, row: &[f64; 4], encoding: HeadingEncoding) -> Vec<f64> {
        match encoding {
            HeadingEncoding::Scalar => (0..4)
                .map(|k| (row[k] - self.in_mean[k]) / self.in_scale[k])
                .collect(),
            HeadingEncoding::SinCos => {
                let th = row[3].to_radians();
                vec![
                    (row[0] - self.in_mean[0]) / self.in_scale[0],
                    (row[1] - self.in_mean[1]) / self.in_scale[1],
                    (row[2] - self.in_mean[2]) / self.in_scale[2],
                    th.sin(),
                    th.cos(),
                ]
            }
        }
    }

    /// Decoder input features from a raw (x, y, heading) triple.
    pub fn encode_dec_row(&self, x: f64, y: f64, heading_deg: f64) -> [f64; 3] {
        [
            (x - self.out_mean[0]) / self.out_scale[0],
            (y - self.out_mean[1]) / self.out_scale[1],
            (heading_deg - self.out_mean[2]) / self.out_scale[2],
        ]
    }

    /// Normalized model output back to raw (x, y, heading); heading is
    /// left unwrapped so training stays smooth.
    pub fn decode_output(&self, y: &[f64; 3]) -> [f64; 3] {
        [
            y[0] * self.out_scale[0] + self.out_mean[0],
            y[1] * self.out_scale[1] + self.out_mean[1],
            y[2] * self.out_scale[2] + self.out_mean[2],
        ]
    }
}

/// All trainable parameters plus the normalization statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub hidden: usize,
    pub heading_encoding: HeadingEncoding,
    pub encoder: LstmLayer,
    pub decoder: LstmLayer,
    /// 3 × hidden output projection.
    pub proj_w: Matrix,
    pub proj_b: Vec<f64>,
    pub norm: Normalization,
}

impl LstmParams {
    /// Uniform init in ±1/√hidden, forget-gate bias 1.0.
    pub fn init<R: Rng>(
        hidden: usize,
        encoding: HeadingEncoding,
        norm: Normalization,
        rng: &mut R,
    ) -> LstmParams {
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut fill = |m: &mut Matrix| {
            for v in &mut m.data {
                *v = rng.gen_range(-bound..bound);
            }
        };
        let mut encoder = LstmLayer::zeros(hidden, encoding.input_dim());
        let mut decoder = LstmLayer::zeros(hidden, 3);
        for layer in [&mut encoder, &mut decoder] {
            for g in 0..4 {
                fill(&mut layer.w[g]);
            }
            for v in &mut layer.b[GATE_F] {
                *v = 1.0;
            }
        }
        let mut proj_w = Matrix::zeros(3, hidden);
        fill(&mut proj_w);
        LstmParams {
            hidden,
            heading_encoding: encoding,
            encoder,
            decoder,
            proj_w,
            proj_b: vec![0.0; 3],
            norm,
        }
    }

    /// Same shapes, all parameters zero (gradient accumulator).
    pub fn zeros_like(&self) -> LstmParams {
        LstmParams {
            hidden: self.hidden,
            heading_encoding: self.heading_encoding,
            encoder: LstmLayer::zeros(self.encoder.hidden, self.encoder.input),
            decoder: LstmLayer::zeros(self.decoder.hidden, self.decoder.input),
            proj_w: Matrix::zeros(self.proj_w.rows, self.proj_w.cols),
            proj_b: vec![0.0; self.proj_b.len()],
            norm: self.norm.clone(),
        }
    }

    pub fn n_params(&self) -> usize {
        self.flatten().len()
    }

    /// Flat parameter vector. Order: encoder gates i,f,o,g (weights
    /// row-major, then biases), decoder likewise, projection weights
    /// row-major, projection bias.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for layer in [&self.encoder, &self.decoder] {
            for g in 0..4 {
                out.extend_from_slice(&layer.w[g].data);
            }
            for g in 0..4 {
                out.extend_from_slice(&layer.b[g]);
            }
        }
        out.extend_from_slice(&self.proj_w.data);
        out.extend_from_slice(&self.proj_b);
        out
    }

    /// Inverse of [`flatten`]; shapes must already match.
    pub fn set_from_flat(&mut self, v: &[f64]) {
        let mut i = 0;
        let mut take = |dst: &mut [f64]| {
            dst.copy_from_slice(&v[i..i + dst.len()]);
            i += dst.len();
        };
        for layer in [&mut self.encoder, &mut self.decoder] {
            for g in 0..4 {
                take(&mut layer.w[g].data);
            }
            for g in 0..4 {
                take(&mut layer.b[g]);
            }
        }
        take(&mut self.proj_w.data);
        take(&mut self.proj_b);
        assert_eq!(i, v.len(), "flat parameter length mismatch");
    }
}
