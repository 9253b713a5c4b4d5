//! Lossless text checkpoint: header, `key = value` settings, then named
//! arrays written with 17 significant digits.
//!
//! ```text
//! VTINV1
//! model.activation = relu
//! model.dense_units = 300
//! ...
//! [array dense1.w 39 300]
//! <row of space-separated values>
//! ...
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::params::{init_params, Activation, ModelConfig, ModelParams};
use crate::error::{Error, Result};
use crate::numfmt::fmt_g17;

pub const CHECKPOINT_MAGIC: &str = "VTINV1";

const RESERVED: [&str; 5] = [
    "model.activation",
    "model.dense_units",
    "model.input_dim",
    "model.lstm_units",
    "model.output_dim",
];

/// Trained parameters plus free-form settings and auxiliary arrays
/// (normalization statistics and the like).
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub settings: BTreeMap<String, String>,
    pub extras: BTreeMap<String, Array2<f64>>,
}

impl Checkpoint {
    pub fn new(params: ModelParams) -> Self {
        Self {
            params,
            settings: BTreeMap::new(),
            extras: BTreeMap::new(),
        }
    }

    pub fn setting(&self, key: &str) -> Result<&str> {
        self.settings
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Config(format!("checkpoint lacks setting `{key}`")))
    }

    pub fn extra(&self, name: &str) -> Result<&Array2<f64>> {
        self.extras
            .get(name)
            .ok_or_else(|| Error::Config(format!("checkpoint lacks array `{name}`")))
    }

    /// Reconstructs the model configuration; the seed is not recorded and is
    /// returned as 0.
    pub fn model_config(&self) -> ModelConfig {
        let (input_dim, dense_units, lstm_units, output_dim) = self.params.config_dims();
        ModelConfig {
            input_dim,
            dense_units,
            lstm_units,
            output_dim,
            dense_activation: self.params.activation,
            seed: 0,
        }
    }

    pub fn to_text(&self) -> Result<String> {
        let mut settings = self.settings.clone();
        for key in RESERVED {
            if settings.contains_key(key) {
                return Err(Error::contract(format!("setting `{key}` is reserved")));
            }
        }
        let cfg = self.model_config();
        settings.insert("model.activation".into(), cfg.dense_activation.name().into());
        settings.insert("model.dense_units".into(), cfg.dense_units.to_string());
        settings.insert("model.input_dim".into(), cfg.input_dim.to_string());
        settings.insert("model.lstm_units".into(), cfg.lstm_units.to_string());
        settings.insert("model.output_dim".into(), cfg.output_dim.to_string());

        let mut out = format!("{CHECKPOINT_MAGIC}\n");
        for (k, v) in &settings {
            if k.is_empty() || k.contains(char::is_whitespace) || k.contains('=') || k.starts_with('[') {
                return Err(Error::contract(format!("invalid setting key `{k}`")));
            }
            if v.contains('\n') || v.trim() != v {
                return Err(Error::contract(format!("invalid value for `{k}`: {v:?}")));
            }
            out.push_str(&format!("{k} = {v}\n"));
        }
        for ((name, (rows, cols)), data) in self.params.shapes().into_iter().zip(self.params.slices()) {
            write_array(&mut out, name, rows, cols, data);
        }
        for (name, a) in &self.extras {
            if self.params.shapes().iter().any(|(n, _)| n == name) || name.contains(char::is_whitespace) {
                return Err(Error::contract(format!("invalid extra array name `{name}`")));
            }
            let data: Vec<f64> = a.iter().copied().collect();
            write_array(&mut out, name, a.nrows(), a.ncols(), &data);
        }
        Ok(out)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let what = "checkpoint";
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l)).peekable();
        match lines.next() {
            Some((_, CHECKPOINT_MAGIC)) => {}
            _ => return Err(Error::parse(what, 1, format!("expected `{CHECKPOINT_MAGIC}` header"))),
        }
        let mut settings = BTreeMap::new();
        while let Some(&(ln, line)) = lines.peek() {
            if line.starts_with('[') {
                break;
            }
            lines.next();
            if line.trim().is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once(" = ")
                .ok_or_else(|| Error::parse(what, ln, "expected `key = value`"))?;
            if settings.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::parse(what, ln, format!("duplicate setting `{k}`")));
            }
        }

        let mut arrays: BTreeMap<String, Array2<f64>> = BTreeMap::new();
        while let Some((ln, line)) = lines.next() {
            if line.trim().is_empty() {
                continue;
            }
            let inner = line
                .strip_prefix("[array ")
                .and_then(|s| s.strip_suffix(']'))
                .ok_or_else(|| Error::parse(what, ln, "expected `[array <name> <rows> <cols>]`"))?;
            let parts: Vec<&str> = inner.split(' ').collect();
            let [name, rows, cols] = parts[..] else {
                return Err(Error::parse(what, ln, "expected `[array <name> <rows> <cols>]`"));
            };
            let rows: usize = rows
                .parse()
                .map_err(|_| Error::parse(what, ln, format!("bad row count `{rows}`")))?;
            let cols: usize = cols
                .parse()
                .map_err(|_| Error::parse(what, ln, format!("bad column count `{cols}`")))?;
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                let (rln, row) = lines
                    .next()
                    .ok_or_else(|| Error::parse(what, ln, format!("array `{name}` is truncated")))?;
                let before = data.len();
                for tok in row.split(' ').filter(|t| !t.is_empty()) {
                    let v: f64 = tok
                        .parse()
                        .map_err(|_| Error::parse(what, rln, format!("bad number `{tok}`")))?;
                    data.push(v);
                }
                if data.len() - before != cols {
                    return Err(Error::parse(
                        what,
                        rln,
                        format!("expected {cols} values, found {}", data.len() - before),
                    ));
                }
            }
            let a = Array2::from_shape_vec((rows, cols), data).expect("shape checked");
            if arrays.insert(name.to_string(), a).is_some() {
                return Err(Error::parse(what, ln, format!("duplicate array `{name}`")));
            }
        }

        let get = |key: &str| -> Result<String> {
            settings
                .get(key)
                .cloned()
                .ok_or_else(|| Error::Config(format!("checkpoint lacks setting `{key}`")))
        };
        let dim = |key: &str| -> Result<usize> {
            let v = get(key)?;
            v.parse()
                .map_err(|_| Error::Config(format!("setting `{key}` is not a count: `{v}`")))
        };
        let cfg = ModelConfig {
            input_dim: dim("model.input_dim")?,
            dense_units: dim("model.dense_units")?,
            lstm_units: dim("model.lstm_units")?,
            output_dim: dim("model.output_dim")?,
            dense_activation: get("model.activation")?
                .parse::<Activation>()
                .map_err(Error::Config)?,
            seed: 0,
        };
        let mut params = init_params(&cfg)?;
        let shapes = params.shapes();
        for ((name, shape), dst) in shapes.into_iter().zip(params.slices_mut()) {
            let a = arrays
                .remove(name)
                .ok_or_else(|| Error::Config(format!("checkpoint lacks array `{name}`")))?;
            if a.dim() != shape {
                return Err(Error::Config(format!(
                    "array `{name}` has shape {:?}, expected {shape:?}",
                    a.dim()
                )));
            }
            dst.iter_mut().zip(a.iter()).for_each(|(d, s)| *d = *s);
        }
        for key in RESERVED {
            settings.remove(key);
        }
        Ok(Self {
            params,
            settings,
            extras: arrays,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = self.to_text()?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

fn write_array(out: &mut String, name: &str, rows: usize, cols: usize, data: &[f64]) {
    out.push_str(&format!("[array {name} {rows} {cols}]\n"));
    for r in 0..rows {
        let row = &data[r * cols..(r + 1) * cols];
        let line: Vec<String> = row.iter().map(|v| fmt_g17(*v)).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
}

/// Packs a vector as a `1 × n` array for storage among the extras.
pub fn row_array(v: &[f64]) -> Array2<f64> {
    Array2::from_shape_vec((1, v.len()), v.to_vec()).expect("1 × n")
}

/// Inverse of [`row_array`].
pub fn array_row(a: &Array2<f64>) -> Result<Array1<f64>> {
    if a.nrows() != 1 {
        return Err(Error::Config(format!("expected a single-row array, got {:?}", a.dim())));
    }
    Ok(a.row(0).to_owned())
}
