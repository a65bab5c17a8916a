//! Surrogate models of the simulator: inputs are Bag-of-Cards encodings,
//! outputs are the objective, both measures and (optionally) ancillary data.
//!
//! Output vectors use a fixed layout: index 0 is the objective, 1..=2 the
//! measures, and the remaining nine entries the [`AncillaryData`] fields in
//! declaration order.

mod checkpoint;
mod model;

use std::fmt::Write as _;

pub use model::{
    elu, finite_difference_check, initialize_model, AdamConfig, Gradients, ModelKind,
    Prediction, SurrogateModel, TrainConfig, DEFAULT_HIDDEN,
};

use crate::{Error, Result};

pub const ANCILLARY_LEN: usize = 9;
pub const BASE_OUTPUTS: usize = 3;
pub const FULL_OUTPUTS: usize = BASE_OUTPUTS + ANCILLARY_LEN;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AncillaryData {
    pub win_percentage: f64,
    pub total_damage: f64,
    pub cards_drawn: f64,
    pub mana_spent: f64,
    pub mana_wasted: f64,
    pub mana_sum: f64,
    pub mana_variance: f64,
    pub minion_count: f64,
    pub spell_count: f64,
}

impl AncillaryData {
    pub const FIELDS: [&'static str; ANCILLARY_LEN] = [
        "win_percentage",
        "total_damage",
        "cards_drawn",
        "mana_spent",
        "mana_wasted",
        "mana_sum",
        "mana_variance",
        "minion_count",
        "spell_count",
    ];

    pub fn to_array(&self) -> [f64; ANCILLARY_LEN] {
        [
            self.win_percentage,
            self.total_damage,
            self.cards_drawn,
            self.mana_spent,
            self.mana_wasted,
            self.mana_sum,
            self.mana_variance,
            self.minion_count,
            self.spell_count,
        ]
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() != ANCILLARY_LEN {
            return Err(Error::invalid(format!(
                "ancillary data needs {ANCILLARY_LEN} values, got {}",
                v.len()
            )));
        }
        Ok(Self {
            win_percentage: v[0],
            total_damage: v[1],
            cards_drawn: v[2],
            mana_spent: v[3],
            mana_wasted: v[4],
            mana_sum: v[5],
            mana_variance: v[6],
            minion_count: v[7],
            spell_count: v[8],
        })
    }
}

/// Packs `(f, m, alpha)` into the output layout.
pub fn pack_outputs(f: f64, m: [f64; 2], alpha: Option<&AncillaryData>) -> Vec<f64> {
    let mut out = vec![f, m[0], m[1]];
    if let Some(a) = alpha {
        out.extend_from_slice(&a.to_array());
    }
    out
}

/// Splits an output vector into `(f, m, alpha)`.
pub fn split_outputs(y: &[f64]) -> Result<(f64, [f64; 2], Option<AncillaryData>)> {
    match y.len() {
        BASE_OUTPUTS => Ok((y[0], [y[1], y[2]], None)),
        FULL_OUTPUTS => Ok((y[0], [y[1], y[2]], Some(AncillaryData::from_slice(&y[3..])?))),
        n => Err(Error::invalid(format!(
            "output vector must have {BASE_OUTPUTS} or {FULL_OUTPUTS} entries, got {n}"
        ))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub x: Vec<f64>,
    pub f: f64,
    pub m: [f64; 2],
    pub alpha: Option<AncillaryData>,
}

impl LabeledSample {
    /// Target vector for a model with `output_dim` outputs.
    pub fn target(&self, output_dim: usize) -> Result<Vec<f64>> {
        match output_dim {
            BASE_OUTPUTS => Ok(pack_outputs(self.f, self.m, None)),
            FULL_OUTPUTS => {
                let alpha = self
                    .alpha
                    .as_ref()
                    .ok_or_else(|| Error::invalid("sample has no ancillary data"))?;
                Ok(pack_outputs(self.f, self.m, Some(alpha)))
            }
            n => Err(Error::invalid(format!("unsupported output dimension {n}"))),
        }
    }
}

/// Per-output standardization.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    /// Population mean and standard deviation per column. Degenerate
    /// (zero or non-finite) deviations are replaced by 1.
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows.first().ok_or_else(|| Error::invalid("cannot fit a scaler on no rows"))?;
        let dim = first.len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd.is_finite() && sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn standardize(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn destandardize(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }
}

/// Append-only labeled dataset.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DataBuffer {
    samples: Vec<LabeledSample>,
}

pub const BUFFER_CSV_HEADER: &str = "x,f,m0,m1,win_percentage,total_damage,cards_drawn,mana_spent,mana_wasted,mana_sum,mana_variance,minion_count,spell_count";

impl DataBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, sample: LabeledSample) {
        self.samples.push(sample);
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[LabeledSample] {
        &self.samples
    }

    pub fn fit_scaler(&self, output_dim: usize) -> Result<Scaler> {
        let rows = self
            .samples
            .iter()
            .map(|s| s.target(output_dim))
            .collect::<Result<Vec<_>>>()?;
        Scaler::fit(&rows)
    }

    /// CSV with the encoding `;`-joined in the first column; ancillary
    /// columns are empty when absent. Floats are shortest round-trip.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{BUFFER_CSV_HEADER}\n");
        for s in &self.samples {
            let x: Vec<String> = s.x.iter().map(f64::to_string).collect();
            let _ = write!(out, "{},{},{},{}", x.join(";"), s.f, s.m[0], s.m[1]);
            match &s.alpha {
                Some(a) => a.to_array().iter().for_each(|v| {
                    let _ = write!(out, ",{v}");
                }),
                None => out.push_str(&",".repeat(ANCILLARY_LEN)),
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == BUFFER_CSV_HEADER => {}
            other => return Err(Error::parse("buffer csv", format!("bad header {other:?}"))),
        }
        let mut buf = DataBuffer::new();
        for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let ctx = || format!("buffer csv line {}", n + 2);
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 + ANCILLARY_LEN {
                return Err(Error::parse(ctx(), "wrong field count"));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| Error::parse(ctx(), e.to_string()));
            let x = f[0].split(';').map(num).collect::<Result<Vec<_>>>()?;
            let alpha = if f[4..].iter().all(|s| s.is_empty()) {
                None
            } else {
                let v = f[4..].iter().map(|s| num(s)).collect::<Result<Vec<_>>>()?;
                Some(AncillaryData::from_slice(&v)?)
            };
            buf.push(LabeledSample {
                x,
                f: num(f[1])?,
                m: [num(f[2])?, num(f[3])?],
                alpha,
            });
        }
        Ok(buf)
    }
}
