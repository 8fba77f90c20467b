//! Two-layer cloak network: `n -> 256 -> d`, each linear layer followed by
//! batch normalization, with ReLU after the first and Tanh after the second.
//! Gradients are derived by hand for this fixed architecture.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::RngStream;

pub const HIDDEN_WIDTH: usize = 256;

/// Names of the trainable parameter groups, in the order used by
/// [`CloakNetwork::param_slices_mut`] and [`Gradients::slices`].
pub const PARAM_GROUPS: [&str; 8] = [
    "layer1.weight",
    "layer1.bias",
    "bn1.scale",
    "bn1.shift",
    "layer2.weight",
    "layer2.bias",
    "bn2.scale",
    "bn2.shift",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Normalize with batch statistics.
    Train,
    /// Normalize with running statistics.
    Eval,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm {
    pub scale: Array1<f64>,
    pub shift: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
}

impl BatchNorm {
    pub fn new(width: usize) -> Self {
        Self {
            scale: Array1::ones(width),
            shift: Array1::zeros(width),
            running_mean: Array1::zeros(width),
            running_var: Array1::ones(width),
        }
    }

    fn width(&self) -> usize {
        self.scale.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CloakNetwork {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub bn1: BatchNorm,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub bn2: BatchNorm,
    pub epsilon: f64,
    /// Weight on the old running statistic in `running = m * running + (1 - m) * batch`.
    pub momentum: f64,
}

#[derive(Clone, Debug)]
struct NormCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

/// Intermediates of a forward pass, consumed by the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    mode: Mode,
    input: Array2<f64>,
    norm1: NormCache,
    pre_relu: Array2<f64>,
    hidden: Array2<f64>,
    norm2: NormCache,
    output: Array2<f64>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Hidden activations before the ReLU.
    pub fn pre_activation(&self) -> &Array2<f64> {
        &self.pre_relu
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub scale1: Array1<f64>,
    pub shift1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub scale2: Array1<f64>,
    pub shift2: Array1<f64>,
}

impl Gradients {
    pub fn slices(&self) -> [&[f64]; 8] {
        [
            std_slice(&self.w1),
            self.b1.as_slice().expect("contiguous"),
            self.scale1.as_slice().expect("contiguous"),
            self.shift1.as_slice().expect("contiguous"),
            std_slice(&self.w2),
            self.b2.as_slice().expect("contiguous"),
            self.scale2.as_slice().expect("contiguous"),
            self.shift2.as_slice().expect("contiguous"),
        ]
    }
}

fn std_slice(a: &Array2<f64>) -> &[f64] {
    a.as_slice().expect("parameter arrays are in standard layout")
}

fn glorot(rng: &mut impl Rng, rows: usize, cols: usize) -> Array2<f64> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-limit..=limit))
}

impl CloakNetwork {
    pub const DEFAULT_EPSILON: f64 = 1e-5;
    pub const DEFAULT_MOMENTUM: f64 = 0.9;

    /// Glorot-uniform weights, zero biases, identity batch normalization.
    pub fn init(input_dim: usize, hash_dim: usize, stream: &RngStream) -> Result<Self> {
        Self::init_with(
            input_dim,
            hash_dim,
            Self::DEFAULT_EPSILON,
            Self::DEFAULT_MOMENTUM,
            stream,
        )
    }

    pub fn init_with(
        input_dim: usize,
        hash_dim: usize,
        epsilon: f64,
        momentum: f64,
        stream: &RngStream,
    ) -> Result<Self> {
        if input_dim < 2 || hash_dim < 1 {
            return Err(Error::config(format!(
                "network dimensions must satisfy n >= 2, d >= 1 (got n={input_dim}, d={hash_dim})"
            )));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) || !(0.0..1.0).contains(&momentum) {
            return Err(Error::config(
                "batch-norm epsilon must be positive and momentum in [0, 1)",
            ));
        }
        let mut rng = stream.rng();
        let w1 = glorot(&mut rng, HIDDEN_WIDTH, input_dim);
        let w2 = glorot(&mut rng, hash_dim, HIDDEN_WIDTH);
        Ok(Self {
            w1,
            b1: Array1::zeros(HIDDEN_WIDTH),
            bn1: BatchNorm::new(HIDDEN_WIDTH),
            w2,
            b2: Array1::zeros(hash_dim),
            bn2: BatchNorm::new(hash_dim),
            epsilon,
            momentum,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn hash_dim(&self) -> usize {
        self.w2.nrows()
    }

    pub fn num_parameters(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }

    /// Checks shapes, finiteness and non-negative running variances.
    pub fn validate(&self) -> Result<()> {
        let (h, n) = self.w1.dim();
        let d = self.w2.nrows();
        let shapes_ok = n >= 2
            && d >= 1
            && self.b1.len() == h
            && self.bn1.width() == h
            && self.bn1.shift.len() == h
            && self.bn1.running_mean.len() == h
            && self.bn1.running_var.len() == h
            && self.w2.ncols() == h
            && self.b2.len() == d
            && self.bn2.width() == d
            && self.bn2.shift.len() == d
            && self.bn2.running_mean.len() == d
            && self.bn2.running_var.len() == d;
        if !shapes_ok {
            return Err(Error::Record("inconsistent network parameter shapes".into()));
        }
        let running = [
            &self.bn1.running_mean,
            &self.bn1.running_var,
            &self.bn2.running_mean,
            &self.bn2.running_var,
        ];
        let all_finite = self
            .param_slices()
            .iter()
            .all(|s| s.iter().all(|v| v.is_finite()))
            && running.iter().all(|a| a.iter().all(|v| v.is_finite()));
        if !all_finite {
            return Err(Error::Record("network contains non-finite values".into()));
        }
        if self
            .bn1
            .running_var
            .iter()
            .chain(&self.bn2.running_var)
            .any(|v| *v < 0.0)
        {
            return Err(Error::Record("negative running variance".into()));
        }
        if !(self.epsilon > 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Record("invalid batch-norm epsilon or momentum".into()));
        }
        Ok(())
    }

    pub fn param_slices(&self) -> [&[f64]; 8] {
        [
            std_slice(&self.w1),
            self.b1.as_slice().expect("contiguous"),
            self.bn1.scale.as_slice().expect("contiguous"),
            self.bn1.shift.as_slice().expect("contiguous"),
            std_slice(&self.w2),
            self.b2.as_slice().expect("contiguous"),
            self.bn2.scale.as_slice().expect("contiguous"),
            self.bn2.shift.as_slice().expect("contiguous"),
        ]
    }

    pub fn param_slices_mut(&mut self) -> [&mut [f64]; 8] {
        [
            self.w1.as_slice_mut().expect("contiguous"),
            self.b1.as_slice_mut().expect("contiguous"),
            self.bn1.scale.as_slice_mut().expect("contiguous"),
            self.bn1.shift.as_slice_mut().expect("contiguous"),
            self.w2.as_slice_mut().expect("contiguous"),
            self.b2.as_slice_mut().expect("contiguous"),
            self.bn2.scale.as_slice_mut().expect("contiguous"),
            self.bn2.shift.as_slice_mut().expect("contiguous"),
        ]
    }

    /// Rounds every stored value to the nearest `f32`, so that the network
    /// survives a single-precision serialization unchanged.
    pub fn round_to_f32(&mut self) {
        let round = |a: &mut [f64]| a.iter_mut().for_each(|v| *v = *v as f32 as f64);
        for s in self.param_slices_mut() {
            round(s);
        }
        for a in [
            &mut self.bn1.running_mean,
            &mut self.bn1.running_var,
            &mut self.bn2.running_mean,
            &mut self.bn2.running_var,
        ] {
            round(a.as_slice_mut().expect("contiguous"));
        }
    }

    fn check_batch(&self, batch: &ArrayView2<f64>, mode: Mode) -> Result<()> {
        Error::check_dim(self.input_dim(), batch.ncols())?;
        match (mode, batch.nrows()) {
            (_, 0) => Err(Error::input("empty batch")),
            (Mode::Train, 1) => Err(Error::BatchTooSmall(1)),
            _ => Ok(()),
        }
    }

    /// Forward pass without touching running statistics.
    pub fn forward(&self, batch: ArrayView2<f64>, mode: Mode) -> Result<ForwardCache> {
        self.check_batch(&batch, mode)?;
        Ok(self.forward_unchecked(batch, mode).0)
    }

    /// Training-mode forward pass that also folds the batch statistics into
    /// the running statistics.
    pub fn forward_train(&mut self, batch: ArrayView2<f64>) -> Result<ForwardCache> {
        self.check_batch(&batch, Mode::Train)?;
        let (cache, stats) = self.forward_unchecked(batch, Mode::Train);
        let [(m1, v1), (m2, v2)] = stats.expect("train mode yields batch statistics");
        let mom = self.momentum;
        for (bn, m, v) in [(&mut self.bn1, m1, v1), (&mut self.bn2, m2, v2)] {
            bn.running_mean = &bn.running_mean * mom + &(m * (1.0 - mom));
            bn.running_var = &bn.running_var * mom + &(v * (1.0 - mom));
        }
        Ok(cache)
    }

    /// Eval-mode outputs, one row per input row.
    pub fn predict(&self, batch: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward(batch, Mode::Eval)?.output)
    }

    pub fn predict_one(&self, input: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, input.len()), input)
            .map_err(|e| Error::input(e.to_string()))?;
        Ok(self.predict(view)?.row(0).to_vec())
    }

    #[allow(clippy::type_complexity)]
    fn forward_unchecked(
        &self,
        batch: ArrayView2<f64>,
        mode: Mode,
    ) -> (ForwardCache, Option<[(Array1<f64>, Array1<f64>); 2]>) {
        let input = batch.to_owned();
        let z1 = input.dot(&self.w1.t()) + &self.b1;
        let (norm1, y1, stats1) = self.normalize(z1, &self.bn1, mode);
        let hidden = y1.mapv(|v| v.max(0.0));
        let z2 = hidden.dot(&self.w2.t()) + &self.b2;
        let (norm2, y2, stats2) = self.normalize(z2, &self.bn2, mode);
        let output = y2.mapv(f64::tanh);
        let stats = stats1.zip(stats2).map(|(a, b)| [a, b]);
        (
            ForwardCache {
                mode,
                input,
                norm1,
                pre_relu: y1,
                hidden,
                norm2,
                output,
            },
            stats,
        )
    }

    /// Returns the cache, the affine output, and (train mode) the batch mean
    /// and unbiased batch variance for the running-statistics update.
    fn normalize(
        &self,
        z: Array2<f64>,
        bn: &BatchNorm,
        mode: Mode,
    ) -> (NormCache, Array2<f64>, Option<(Array1<f64>, Array1<f64>)>) {
        let (mean, var, stats) = match mode {
            Mode::Train => {
                let b = z.nrows() as f64;
                let mean = z.mean_axis(Axis(0)).expect("non-empty batch");
                let centered = &z - &mean;
                let var = centered.mapv(|v| v * v).sum_axis(Axis(0)) / b;
                let unbiased = &var * (b / (b - 1.0));
                (mean.clone(), var, Some((mean, unbiased)))
            }
            Mode::Eval => (bn.running_mean.clone(), bn.running_var.clone(), None),
        };
        let inv_std = var.mapv(|v| 1.0 / (v + self.epsilon).sqrt());
        let mut xhat = z;
        xhat -= &mean;
        xhat *= &inv_std;
        let y = &xhat * &bn.scale + &bn.shift;
        (NormCache { xhat, inv_std }, y, stats)
    }

    /// Gradient through a batch-norm layer with respect to its input,
    /// plus the scale and shift gradients.
    fn normalize_backward(
        cache: &NormCache,
        scale: &Array1<f64>,
        dy: &Array2<f64>,
        mode: Mode,
    ) -> (Array2<f64>, Array1<f64>, Array1<f64>) {
        let dscale = (dy * &cache.xhat).sum_axis(Axis(0));
        let dshift = dy.sum_axis(Axis(0));
        let dxhat = dy * scale;
        let dz = match mode {
            Mode::Eval => dxhat * &cache.inv_std,
            Mode::Train => {
                let b = dy.nrows() as f64;
                let sum_dxhat = dxhat.sum_axis(Axis(0));
                let sum_dxhat_xhat = (&dxhat * &cache.xhat).sum_axis(Axis(0));
                let mut dz = dxhat * b;
                dz -= &sum_dxhat;
                dz -= &(&cache.xhat * &sum_dxhat_xhat);
                dz *= &(&cache.inv_std / b);
                dz
            }
        };
        (dz, dscale, dshift)
    }

    /// Backpropagates `d loss / d output` down to the first layer's
    /// pre-activation, returning it with the parameter gradients of the
    /// upper layers.
    fn backward_to_first(
        &self,
        cache: &ForwardCache,
        d_output: &Array2<f64>,
    ) -> (Array2<f64>, [Array1<f64>; 2], Array2<f64>, [Array1<f64>; 3]) {
        let mode = cache.mode;
        let mut dy2 = d_output.clone();
        Zip::from(&mut dy2)
            .and(&cache.output)
            .for_each(|g, &o| *g *= 1.0 - o * o);
        let (dz2, dscale2, dshift2) =
            Self::normalize_backward(&cache.norm2, &self.bn2.scale, &dy2, mode);
        let dw2 = dz2.t().dot(&cache.hidden);
        let db2 = dz2.sum_axis(Axis(0));

        let mut dy1 = dz2.dot(&self.w2);
        Zip::from(&mut dy1)
            .and(&cache.pre_relu)
            .for_each(|g, &y| {
                if y <= 0.0 {
                    *g = 0.0
                }
            });
        let (dz1, dscale1, dshift1) =
            Self::normalize_backward(&cache.norm1, &self.bn1.scale, &dy1, mode);
        (dz1, [dscale1, dshift1], dw2, [db2, dscale2, dshift2])
    }

    /// Parameter gradients given `d loss / d output` for every row of the batch.
    pub fn backward(&self, cache: &ForwardCache, d_output: &Array2<f64>) -> Gradients {
        let (dz1, [scale1, shift1], w2, [b2, scale2, shift2]) =
            self.backward_to_first(cache, d_output);
        let w1 = dz1.t().dot(&cache.input);
        let b1 = dz1.sum_axis(Axis(0));
        Gradients {
            w1,
            b1,
            scale1,
            shift1,
            w2,
            b2,
            scale2,
            shift2,
        }
    }

    /// Gradient with respect to the input rows.
    pub fn input_gradient(&self, cache: &ForwardCache, d_output: &Array2<f64>) -> Array2<f64> {
        let (dz1, ..) = self.backward_to_first(cache, d_output);
        dz1.dot(&self.w1)
    }
}
