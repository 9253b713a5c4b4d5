use ndarray::{Array1, Array2};

use crate::corpus::CONTOUR_DIM;
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }

    pub(crate) fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through pre-activation `x` and output `y`.
    pub(crate) fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            _ => Err(format!("unknown activation `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub dense_units: usize,
    pub lstm_units: usize,
    pub output_dim: usize,
    pub dense_activation: Activation,
    pub seed: u64,
}

impl ModelConfig {
    /// Full-size network: 300-unit dense and recurrent layers, 800 outputs.
    pub fn full_size(input_dim: usize) -> Self {
        Self {
            input_dim,
            dense_units: 300,
            lstm_units: 300,
            output_dim: CONTOUR_DIM,
            dense_activation: Activation::Relu,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.dense_units == 0 || self.lstm_units == 0 || self.output_dim == 0 {
            return Err(Error::Config(format!("all model dimensions must be positive: {self:?}")));
        }
        Ok(())
    }
}

/// Fully connected layer computing `x · w + b` on row vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `in × out`
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

/// One direction of an LSTM layer. Gate blocks along the `4H` axis are
/// ordered input, forget, cell candidate, output.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmDir {
    /// `in × 4H`
    pub w_ih: Array2<f64>,
    /// `H × 4H`
    pub w_hh: Array2<f64>,
    pub b: Array1<f64>,
}

impl LstmDir {
    pub fn hidden(&self) -> usize {
        self.w_hh.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiLstm {
    pub fwd: LstmDir,
    pub bwd: LstmDir,
}

/// All weights of the Dense → Dense → BiLSTM → BiLSTM → Dense network.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub activation: Activation,
    pub dense1: Dense,
    pub dense2: Dense,
    pub bilstm1: BiLstm,
    pub bilstm2: BiLstm,
    pub out: Dense,
}

fn glorot(rng: &mut Rng, rows: usize, cols: usize) -> Array2<f64> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.uniform_range(-bound, bound))
}

fn dense(rng: &mut Rng, input: usize, output: usize) -> Dense {
    Dense {
        w: glorot(rng, input, output),
        b: Array1::zeros(output),
    }
}

fn lstm_dir(rng: &mut Rng, input: usize, hidden: usize) -> LstmDir {
    let mut b = Array1::zeros(4 * hidden);
    b.slice_mut(ndarray::s![hidden..2 * hidden]).fill(1.0);
    LstmDir {
        w_ih: glorot(rng, input, 4 * hidden),
        w_hh: glorot(rng, hidden, 4 * hidden),
        b,
    }
}

/// Glorot-uniform weights, zero biases except forget-gate biases of 1.
pub fn init_params(cfg: &ModelConfig) -> Result<ModelParams> {
    cfg.validate()?;
    let mut rng = Rng::new(cfg.seed);
    let (d, u, h) = (cfg.input_dim, cfg.dense_units, cfg.lstm_units);
    let dense1 = dense(&mut rng, d, u);
    let dense2 = dense(&mut rng, u, u);
    let bilstm1 = BiLstm {
        fwd: lstm_dir(&mut rng, u, h),
        bwd: lstm_dir(&mut rng, u, h),
    };
    let bilstm2 = BiLstm {
        fwd: lstm_dir(&mut rng, 2 * h, h),
        bwd: lstm_dir(&mut rng, 2 * h, h),
    };
    let out = dense(&mut rng, 2 * h, cfg.output_dim);
    Ok(ModelParams {
        activation: cfg.dense_activation,
        dense1,
        dense2,
        bilstm1,
        bilstm2,
        out,
    })
}

macro_rules! tensor_list {
    ($p:expr, $view:ident) => {
        vec![
            ("dense1.w", $p.dense1.w.$view().expect("parameters are contiguous")),
            ("dense1.b", $p.dense1.b.$view().expect("parameters are contiguous")),
            ("dense2.w", $p.dense2.w.$view().expect("parameters are contiguous")),
            ("dense2.b", $p.dense2.b.$view().expect("parameters are contiguous")),
            ("bilstm1.fwd.w_ih", $p.bilstm1.fwd.w_ih.$view().expect("parameters are contiguous")),
            ("bilstm1.fwd.w_hh", $p.bilstm1.fwd.w_hh.$view().expect("parameters are contiguous")),
            ("bilstm1.fwd.b", $p.bilstm1.fwd.b.$view().expect("parameters are contiguous")),
            ("bilstm1.bwd.w_ih", $p.bilstm1.bwd.w_ih.$view().expect("parameters are contiguous")),
            ("bilstm1.bwd.w_hh", $p.bilstm1.bwd.w_hh.$view().expect("parameters are contiguous")),
            ("bilstm1.bwd.b", $p.bilstm1.bwd.b.$view().expect("parameters are contiguous")),
            ("bilstm2.fwd.w_ih", $p.bilstm2.fwd.w_ih.$view().expect("parameters are contiguous")),
            ("bilstm2.fwd.w_hh", $p.bilstm2.fwd.w_hh.$view().expect("parameters are contiguous")),
            ("bilstm2.fwd.b", $p.bilstm2.fwd.b.$view().expect("parameters are contiguous")),
            ("bilstm2.bwd.w_ih", $p.bilstm2.bwd.w_ih.$view().expect("parameters are contiguous")),
            ("bilstm2.bwd.w_hh", $p.bilstm2.bwd.w_hh.$view().expect("parameters are contiguous")),
            ("bilstm2.bwd.b", $p.bilstm2.bwd.b.$view().expect("parameters are contiguous")),
            ("out.w", $p.out.w.$view().expect("parameters are contiguous")),
            ("out.b", $p.out.b.$view().expect("parameters are contiguous")),
        ]
    };
}

impl ModelParams {
    /// All-zero parameters shaped like `self` (gradient / moment buffers).
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for s in z.slices_mut() {
            s.fill(0.0);
        }
        z
    }

    pub fn config_dims(&self) -> (usize, usize, usize, usize) {
        (
            self.dense1.w.nrows(),
            self.dense1.w.ncols(),
            self.bilstm1.fwd.hidden(),
            self.out.w.ncols(),
        )
    }

    /// Tensor names and `(rows, cols)` shapes in canonical order; biases are
    /// reported as `1 × n`.
    pub fn shapes(&self) -> Vec<(&'static str, (usize, usize))> {
        let mut out = Vec::new();
        for (name, s) in self.named_slices() {
            let shape = match name {
                "dense1.w" => self.dense1.w.dim(),
                "dense2.w" => self.dense2.w.dim(),
                "bilstm1.fwd.w_ih" => self.bilstm1.fwd.w_ih.dim(),
                "bilstm1.fwd.w_hh" => self.bilstm1.fwd.w_hh.dim(),
                "bilstm1.bwd.w_ih" => self.bilstm1.bwd.w_ih.dim(),
                "bilstm1.bwd.w_hh" => self.bilstm1.bwd.w_hh.dim(),
                "bilstm2.fwd.w_ih" => self.bilstm2.fwd.w_ih.dim(),
                "bilstm2.fwd.w_hh" => self.bilstm2.fwd.w_hh.dim(),
                "bilstm2.bwd.w_ih" => self.bilstm2.bwd.w_ih.dim(),
                "bilstm2.bwd.w_hh" => self.bilstm2.bwd.w_hh.dim(),
                "out.w" => self.out.w.dim(),
                _ => (1, s.len()),
            };
            out.push((name, shape));
        }
        out
    }

    pub fn named_slices(&self) -> Vec<(&'static str, &[f64])> {
        tensor_list!(self, as_slice)
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        self.named_slices().into_iter().map(|(_, s)| s).collect()
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        tensor_list!(self, as_slice_mut)
            .into_iter()
            .map(|(_, s)| s)
            .collect()
    }

    pub fn n_params(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    /// `self += other`, tensor by tensor.
    pub fn add_assign(&mut self, other: &ModelParams) {
        for (a, b) in self.slices_mut().into_iter().zip(other.slices()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    /// FNV-1a hash over parameter bit patterns.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for s in self.slices() {
            for v in s {
                h ^= v.to_bits();
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }

    pub fn max_abs_diff(&self, other: &ModelParams) -> f64 {
        self.slices()
            .into_iter()
            .zip(other.slices())
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(seed: u64) -> ModelConfig {
        ModelConfig {
            input_dim: 7,
            dense_units: 12,
            lstm_units: 6,
            output_dim: 800,
            dense_activation: Activation::Relu,
            seed,
        }
    }

    #[test]
    fn init_is_deterministic() {
        let a = init_params(&cfg(3)).unwrap();
        let b = init_params(&cfg(3)).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_eq!(a, b);
        assert_ne!(a, init_params(&cfg(4)).unwrap());
    }

    #[test]
    fn glorot_bounds_and_biases() {
        let p = init_params(&cfg(0)).unwrap();
        let bound = (6.0f64 / (7.0 + 12.0)).sqrt();
        assert!(p.dense1.w.iter().all(|w| w.abs() <= bound));
        assert!(p.dense1.b.iter().all(|&b| b == 0.0));
        for dir in [&p.bilstm1.fwd, &p.bilstm1.bwd, &p.bilstm2.fwd, &p.bilstm2.bwd] {
            let h = dir.hidden();
            for (k, &b) in dir.b.iter().enumerate() {
                let expected = if (h..2 * h).contains(&k) { 1.0 } else { 0.0 };
                assert_eq!(b, expected);
            }
        }
    }

    #[test]
    fn shapes_follow_config() {
        let p = init_params(&cfg(0)).unwrap();
        assert_eq!(p.bilstm2.fwd.w_ih.dim(), (12, 24));
        assert_eq!(p.out.w.dim(), (12, 800));
        let shapes = p.shapes();
        assert_eq!(shapes.len(), 18);
        let total: usize = shapes.iter().map(|(_, (r, c))| r * c).sum();
        assert_eq!(total, p.n_params());
        assert_eq!(p.config_dims(), (7, 12, 6, 800));
    }

    #[test]
    fn zero_config_rejected() {
        let mut c = cfg(0);
        c.lstm_units = 0;
        assert!(init_params(&c).is_err());
    }
}
