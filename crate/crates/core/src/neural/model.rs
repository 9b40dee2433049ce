use ndarray::{ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::seed::rng_from_seed;
use crate::{Error, Result};

/// Which way the model maps between driving fields and observables.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Direction {
    /// Field values (+ time) in, observables out.
    Dynamics,
    /// Observables (+ time) in, field values out.
    Hamiltonian,
}

impl Direction {
    pub fn name(self) -> &'static str {
        match self {
            Direction::Dynamics => "dynamics",
            Direction::Hamiltonian => "hamiltonian",
        }
    }
}

impl std::str::FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dynamics" => Ok(Direction::Dynamics),
            "hamiltonian" => Ok(Direction::Hamiltonian),
            _ => Err(Error::InvalidArgument(format!("unknown direction {s:?}"))),
        }
    }
}

/// Architecture of a [`SequenceModel`].
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelConfig {
    pub direction: Direction,
    /// Width of one input row, including the trailing time component.
    pub input_width: usize,
    pub output_width: usize,
    /// Width of the initial-moment vector fed to the encoders.
    pub o0_width: usize,
    pub hidden: usize,
    pub n_layers: usize,
    /// Number of dense layers per encoder.
    pub encoder_depth: usize,
    pub encoder_width: usize,
}

impl ModelConfig {
    /// 2 LSTM layers of width 128 and 3-layer encoders of width 128.
    pub fn desk(direction: Direction, input_width: usize, output_width: usize, o0_width: usize) -> Self {
        Self {
            direction,
            input_width,
            output_width,
            o0_width,
            hidden: 128,
            n_layers: 2,
            encoder_depth: 3,
            encoder_width: 128,
        }
    }

    /// 4 LSTM layers of width 500 and 4-layer encoders of width 500.
    pub fn full(direction: Direction, input_width: usize, output_width: usize, o0_width: usize) -> Self {
        Self {
            direction,
            input_width,
            output_width,
            o0_width,
            hidden: 500,
            n_layers: 4,
            encoder_depth: 4,
            encoder_width: 500,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let widths = [
            ("input_width", self.input_width),
            ("output_width", self.output_width),
            ("o0_width", self.o0_width),
            ("hidden", self.hidden),
            ("n_layers", self.n_layers),
            ("encoder_depth", self.encoder_depth),
            ("encoder_width", self.encoder_width),
        ];
        match widths.iter().find(|(_, w)| *w == 0) {
            Some((name, _)) => Err(Error::InvalidArgument(format!("model {name} must be positive"))),
            None => Ok(()),
        }
    }
}

/// A `rows × cols` matrix stored row-major inside the flat parameter vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Block {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Block {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }

    pub fn matrix<'a>(&self, p: &'a [f64]) -> ArrayView2<'a, f64> {
        ArrayView2::from_shape((self.rows, self.cols), &p[self.range()]).expect("block inside buffer")
    }

    pub fn matrix_mut<'a>(&self, p: &'a mut [f64]) -> ArrayViewMut2<'a, f64> {
        ArrayViewMut2::from_shape((self.rows, self.cols), &mut p[self.range()]).expect("block inside buffer")
    }

    pub fn vector<'a>(&self, p: &'a [f64]) -> ArrayView1<'a, f64> {
        ArrayView1::from(&p[self.range()])
    }

    pub fn vector_mut<'a>(&self, p: &'a mut [f64]) -> ArrayViewMut1<'a, f64> {
        ArrayViewMut1::from(&mut p[self.range()])
    }
}

/// Weight (`out × in`) and bias (`out × 1`) of an affine map.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Affine {
    pub w: Block,
    pub b: Block,
}

/// Position of every parameter block in the flat vector.
///
/// LSTM weights stack the four gates row-wise in the order forget, input,
/// candidate, output, each acting on `[h_prev | x]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    pub encoder_h: Vec<Affine>,
    pub encoder_c: Vec<Affine>,
    pub lstm: Vec<Affine>,
    pub head: Affine,
    pub len: usize,
}

impl Layout {
    pub fn new(cfg: &ModelConfig) -> Self {
        let mut alloc = Allocator(0);
        let encoder = |alloc: &mut Allocator| -> Vec<Affine> {
            (0..cfg.encoder_depth)
                .map(|k| {
                    let inp = if k == 0 { cfg.o0_width } else { cfg.encoder_width };
                    let out = if k + 1 == cfg.encoder_depth { cfg.hidden } else { cfg.encoder_width };
                    alloc.affine(out, inp)
                })
                .collect()
        };
        let encoder_h = encoder(&mut alloc);
        let encoder_c = encoder(&mut alloc);
        let lstm = (0..cfg.n_layers)
            .map(|l| {
                let inp = if l == 0 { cfg.input_width } else { cfg.hidden };
                alloc.affine(4 * cfg.hidden, cfg.hidden + inp)
            })
            .collect();
        let head = alloc.affine(cfg.output_width, cfg.hidden);
        Self { encoder_h, encoder_c, lstm, head, len: alloc.0 }
    }

    /// Every block with a descriptive name and its fan-in (`None` for biases).
    pub fn named_blocks(&self) -> Vec<(String, Block, Option<usize>)> {
        let mut out = Vec::new();
        let mut push = |prefix: String, a: &Affine| {
            out.push((format!("{prefix}.w"), a.w, Some(a.w.cols)));
            out.push((format!("{prefix}.b"), a.b, None));
        };
        for (k, a) in self.encoder_h.iter().enumerate() {
            push(format!("encoder_h.{k}"), a);
        }
        for (k, a) in self.encoder_c.iter().enumerate() {
            push(format!("encoder_c.{k}"), a);
        }
        for (k, a) in self.lstm.iter().enumerate() {
            push(format!("lstm.{k}"), a);
        }
        push("head".into(), &self.head);
        out
    }
}

struct Allocator(usize);

impl Allocator {
    fn affine(&mut self, out: usize, inp: usize) -> Affine {
        let w = Block { offset: self.0, rows: out, cols: inp };
        let b = Block { offset: w.offset + w.len(), rows: out, cols: 1 };
        self.0 = b.offset + b.len();
        Affine { w, b }
    }
}

/// Encoder pair, stacked LSTM and linear head, with all parameters in one
/// flat vector described by [`Layout`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceModel {
    config: ModelConfig,
    params: Vec<f64>,
}

impl SequenceModel {
    /// Weights uniform in `±1/√fan_in`, biases zero, forget-gate bias one.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        let mut params = vec![0.0; layout.len];
        let mut rng = rng_from_seed(seed);
        for (_, block, fan_in) in layout.named_blocks() {
            if let Some(fan_in) = fan_in {
                let a = 1.0 / (fan_in as f64).sqrt();
                for v in &mut params[block.range()] {
                    *v = rng.random_range(-a..a);
                }
            }
        }
        for layer in &layout.lstm {
            let forget = layer.b.offset..layer.b.offset + config.hidden;
            params[forget].iter_mut().for_each(|v| *v = 1.0);
        }
        Ok(Self { config, params })
    }

    pub fn from_parts(config: ModelConfig, params: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let expect = Layout::new(&config).len;
        if params.len() != expect {
            return Err(Error::Shape(format!("{} parameters for a layout of {expect}", params.len())));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidArgument("non-finite parameter".into()));
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn direction(&self) -> Direction {
        self.config.direction
    }

    pub fn layout(&self) -> Layout {
        Layout::new(&self.config)
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ModelConfig {
        ModelConfig {
            direction: Direction::Dynamics,
            input_width: 2,
            output_width: 3,
            o0_width: 3,
            hidden: 4,
            n_layers: 2,
            encoder_depth: 2,
            encoder_width: 5,
        }
    }

    #[test]
    fn layout_is_contiguous() {
        let layout = Layout::new(&small());
        let mut next = 0;
        for (_, b, _) in layout.named_blocks() {
            assert_eq!(b.offset, next);
            next += b.len();
        }
        assert_eq!(next, layout.len);
        assert_eq!(layout.lstm[0].w.rows, 16);
        assert_eq!(layout.lstm[0].w.cols, 6);
        assert_eq!(layout.lstm[1].w.cols, 8);
        assert_eq!(layout.encoder_h[1].w.rows, 4);
    }

    #[test]
    fn initialisation_rules() {
        let m = SequenceModel::new(small(), 9).unwrap();
        let layout = m.layout();
        for (name, b, fan_in) in layout.named_blocks() {
            let vals = &m.params()[b.range()];
            match fan_in {
                Some(f) => assert!(vals.iter().all(|v| v.abs() < 1.0 / (f as f64).sqrt()), "{name}"),
                None if name.starts_with("lstm") => {
                    assert!(vals[..4].iter().all(|v| *v == 1.0));
                    assert!(vals[4..].iter().all(|v| *v == 0.0));
                }
                None => assert!(vals.iter().all(|v| *v == 0.0), "{name}"),
            }
        }
        assert_eq!(m, SequenceModel::new(small(), 9).unwrap());
        assert_ne!(m, SequenceModel::new(small(), 10).unwrap());
    }

    #[test]
    fn from_parts_checks_length() {
        assert!(SequenceModel::from_parts(small(), vec![0.0; 3]).is_err());
        let n = Layout::new(&small()).len;
        assert!(SequenceModel::from_parts(small(), vec![0.0; n]).is_ok());
    }

    #[test]
    fn direction_parsing() {
        assert_eq!("Dynamics".parse::<Direction>().unwrap(), Direction::Dynamics);
        assert!("sideways".parse::<Direction>().is_err());
    }
}
