//! Multi-branch dense network: one small MLP per feature block, outputs
//! concatenated into a softmax fusion head. Forward pass, backpropagation,
//! cross-entropy with per-layer L2, inverted dropout.

mod adam;
mod checkpoint;
mod train;

use std::fmt;
use std::str::FromStr;

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::Stance;
use crate::error::{Error, Result};
use crate::features::{Block, BlockLayout};
use crate::par::{self, Execution};

pub use adam::{adam_step, AdamState};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use train::{train, train_with_scorer, Dataset, EpochRecord, TrainConfig, TrainOutcome};

pub const NUM_CLASSES: usize = 4;
pub const PROBABILITY_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Relu,
    Softmax,
    Identity,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Relu => "relu",
            Activation::Softmax => "softmax",
            Activation::Identity => "identity",
        }
    }

    fn apply(self, z: &mut Array2<f64>) {
        match self {
            Activation::Sigmoid => z.mapv_inplace(|x| 1.0 / (1.0 + (-x).exp())),
            Activation::Relu => z.mapv_inplace(|x| x.max(0.0)),
            Activation::Identity => {}
            Activation::Softmax => {
                for mut row in z.rows_mut() {
                    let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
                    row.mapv_inplace(|x| (x - max).exp());
                    let sum = row.sum();
                    row.mapv_inplace(|x| x / sum);
                }
            }
        }
    }

    /// dL/dz from dL/da, given the activation output `a`.
    fn backprop(self, activated: &Array2<f64>, mut grad: Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Sigmoid => grad.zip_mut_with(activated, |g, &a| *g *= a * (1.0 - a)),
            Activation::Relu => grad.zip_mut_with(activated, |g, &a| {
                if a <= 0.0 {
                    *g = 0.0
                }
            }),
            Activation::Identity => {}
            Activation::Softmax => unreachable!("softmax gradients are fused with cross-entropy"),
        }
        grad
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigmoid" => Ok(Activation::Sigmoid),
            "relu" => Ok(Activation::Relu),
            "softmax" => Ok(Activation::Softmax),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::Format(format!("unknown activation `{other}`"))),
        }
    }
}

/// Shape and regularization of one dense layer. `dropout_keep` applies to
/// the layer's output; `l2` to its weights only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerSpec {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
    pub dropout_keep: f64,
    pub l2: f64,
}

impl LayerSpec {
    pub fn new(inputs: usize, outputs: usize, activation: Activation) -> Self {
        LayerSpec {
            inputs,
            outputs,
            activation,
            dropout_keep: 1.0,
            l2: 0.0,
        }
    }

    pub fn with_dropout_keep(mut self, keep: f64) -> Self {
        self.dropout_keep = keep;
        self
    }

    pub fn with_l2(mut self, l2: f64) -> Self {
        self.l2 = l2;
        self
    }

    fn validate(&self, name: &str) -> Result<()> {
        if self.inputs == 0 || self.outputs == 0 {
            return Err(Error::Parameter(format!("layer {name} has a zero dimension")));
        }
        if !(self.dropout_keep > 0.0 && self.dropout_keep <= 1.0) {
            return Err(Error::Parameter(format!(
                "layer {name}: dropout keep {} outside (0, 1]",
                self.dropout_keep
            )));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::Parameter(format!("layer {name}: bad L2 coefficient {}", self.l2)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchSpec {
    pub block: Block,
    pub layers: Vec<LayerSpec>,
}

impl BranchSpec {
    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.outputs).unwrap_or(0)
    }
}

/// Full network shape: branches in canonical block order plus the head.
#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    pub branches: Vec<BranchSpec>,
    pub head: LayerSpec,
}

/// Hyperparameters of one branch: hidden widths, activation, and the
/// dropout rate / L2 coefficient of its first layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchHyper {
    pub widths: Vec<usize>,
    pub activation: Activation,
    pub first_dropout_rate: f64,
    pub first_l2: f64,
}

impl BranchHyper {
    /// Neural branch: 500 then 100 sigmoid units, dropout 0.2 and L2 1e-8
    /// on the first layer.
    pub fn neural_default() -> Self {
        BranchHyper {
            widths: vec![500, 100],
            activation: Activation::Sigmoid,
            first_dropout_rate: 0.2,
            first_l2: 1e-8,
        }
    }

    /// Statistical branch: 500 then 50 relu units, dropout 0.4 and L2 5e-5
    /// on the first layer.
    pub fn statistical_default() -> Self {
        BranchHyper {
            widths: vec![500, 50],
            activation: Activation::Relu,
            first_dropout_rate: 0.4,
            first_l2: 5e-5,
        }
    }

    /// External branch: one 50-unit relu layer.
    pub fn external_default() -> Self {
        BranchHyper {
            widths: vec![50],
            activation: Activation::Relu,
            first_dropout_rate: 0.0,
            first_l2: 0.0,
        }
    }

    pub fn default_for(block: Block) -> Self {
        match block {
            Block::Neural => Self::neural_default(),
            Block::Statistical => Self::statistical_default(),
            Block::External => Self::external_default(),
        }
    }

    fn layers(&self, input: usize) -> Vec<LayerSpec> {
        let mut layers = Vec::with_capacity(self.widths.len());
        let mut fan_in = input;
        for (i, &w) in self.widths.iter().enumerate() {
            let mut spec = LayerSpec::new(fan_in, w, self.activation);
            if i == 0 {
                spec = spec
                    .with_dropout_keep(1.0 - self.first_dropout_rate)
                    .with_l2(self.first_l2);
            }
            layers.push(spec);
            fan_in = w;
        }
        layers
    }
}

impl Architecture {
    /// Builds branches for every block in `layout` from per-block
    /// hyperparameters, with a softmax head over the concatenated outputs.
    pub fn from_layout(layout: &BlockLayout, hyper: impl Fn(Block) -> BranchHyper) -> Result<Self> {
        let branches: Vec<BranchSpec> = layout
            .entries()
            .iter()
            .map(|&(block, dim)| BranchSpec {
                block,
                layers: hyper(block).layers(dim),
            })
            .collect();
        let fused = branches.iter().map(BranchSpec::output_dim).sum();
        let arch = Architecture {
            branches,
            head: LayerSpec::new(fused, NUM_CLASSES, Activation::Softmax),
        };
        arch.validate()?;
        Ok(arch)
    }

    /// The default three-branch shape for the given layout.
    pub fn default_for(layout: &BlockLayout) -> Result<Self> {
        Self::from_layout(layout, BranchHyper::default_for)
    }

    pub fn layout(&self) -> BlockLayout {
        BlockLayout::new(self.branches.iter().map(|b| (b.block, b.input_dim())).collect())
            .expect("validated architecture")
    }

    pub fn validate(&self) -> Result<()> {
        if self.branches.is_empty() {
            return Err(Error::Parameter("network needs at least one branch".into()));
        }
        for (i, branch) in self.branches.iter().enumerate() {
            if branch.layers.is_empty() {
                return Err(Error::Parameter(format!("{} branch has no layers", branch.block)));
            }
            if i > 0 && self.branches[i - 1].block >= branch.block {
                return Err(Error::Parameter("branches must be distinct and in canonical order".into()));
            }
            for (j, layer) in branch.layers.iter().enumerate() {
                let name = format!("{}.{j}", branch.block);
                layer.validate(&name)?;
                if layer.activation == Activation::Softmax {
                    return Err(Error::Parameter(format!("softmax only allowed in the head, found in {name}")));
                }
                if j > 0 && branch.layers[j - 1].outputs != layer.inputs {
                    return Err(Error::Parameter(format!("layer {name} input width does not chain")));
                }
            }
        }
        self.head.validate("head")?;
        let fused: usize = self.branches.iter().map(BranchSpec::output_dim).sum();
        if self.head.inputs != fused {
            return Err(Error::Parameter(format!(
                "head expects {} inputs but branches produce {fused}",
                self.head.inputs
            )));
        }
        if self.head.outputs != NUM_CLASSES || self.head.activation != Activation::Softmax {
            return Err(Error::Parameter("head must be a 4-way softmax".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `[outputs × inputs]`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
    pub dropout_keep: f64,
    pub l2: f64,
}

impl DenseLayer {
    pub fn zeros(spec: &LayerSpec) -> Self {
        DenseLayer {
            weights: Array2::zeros((spec.outputs, spec.inputs)),
            bias: Array1::zeros(spec.outputs),
            activation: spec.activation,
            dropout_keep: spec.dropout_keep,
            l2: spec.l2,
        }
    }

    /// Glorot uniform weights, zero bias.
    pub fn glorot(spec: &LayerSpec, rng: &mut ChaCha8Rng) -> Self {
        let mut layer = Self::zeros(spec);
        let limit = (6.0 / (spec.inputs + spec.outputs) as f64).sqrt();
        layer.weights.mapv_inplace(|_| rng.random_range(-limit..limit));
        layer
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec {
            inputs: self.weights.ncols(),
            outputs: self.weights.nrows(),
            activation: self.activation,
            dropout_keep: self.dropout_keep,
            l2: self.l2,
        }
    }

    pub fn num_parameters(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn l2_penalty(&self) -> f64 {
        if self.l2 == 0.0 {
            0.0
        } else {
            self.l2 * self.weights.iter().map(|w| w * w).sum::<f64>()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub block: Block,
    pub layers: Vec<DenseLayer>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub branches: Vec<Branch>,
    pub head: DenseLayer,
}

/// Whether dropout is sampled. Train mode draws masks from the generator.
pub enum Mode<'a> {
    Train(&'a mut ChaCha8Rng),
    Infer,
}

#[derive(Debug, Clone)]
struct LayerCache {
    input: Array2<f64>,
    activated: Array2<f64>,
    /// Kept units scaled by `1 / keep`, dropped units 0.
    mask: Option<Array2<f64>>,
}

/// Activations recorded by a forward pass, consumed by [`MlpModel::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    branches: Vec<Vec<LayerCache>>,
    head_input: Array2<f64>,
    probabilities: Array2<f64>,
}

impl ForwardCache {
    /// `[batch × 4]` class probabilities.
    pub fn probabilities(&self) -> &Array2<f64> {
        &self.probabilities
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Gradients in [`MlpModel::layers`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<LayerGradient>);

impl MlpModel {
    pub fn zeros(arch: &Architecture) -> Result<Self> {
        Self::build(arch, DenseLayer::zeros)
    }

    pub fn init(arch: &Architecture, rng: &mut ChaCha8Rng) -> Result<Self> {
        Self::build(arch, |spec| DenseLayer::glorot(spec, rng))
    }

    fn build(arch: &Architecture, mut make: impl FnMut(&LayerSpec) -> DenseLayer) -> Result<Self> {
        arch.validate()?;
        let branches = arch
            .branches
            .iter()
            .map(|b| Branch {
                block: b.block,
                layers: b.layers.iter().map(&mut make).collect(),
            })
            .collect();
        let head = make(&arch.head);
        Ok(MlpModel { branches, head })
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            branches: self
                .branches
                .iter()
                .map(|b| BranchSpec {
                    block: b.block,
                    layers: b.layers.iter().map(DenseLayer::spec).collect(),
                })
                .collect(),
            head: self.head.spec(),
        }
    }

    pub fn layout(&self) -> BlockLayout {
        self.architecture().layout()
    }

    /// Every layer: branch layers in order, then the head.
    pub fn layers(&self) -> impl Iterator<Item = &DenseLayer> {
        self.branches.iter().flat_map(|b| b.layers.iter()).chain(std::iter::once(&self.head))
    }

    pub fn layers_mut(&mut self) -> impl Iterator<Item = &mut DenseLayer> {
        self.branches
            .iter_mut()
            .flat_map(|b| b.layers.iter_mut())
            .chain(std::iter::once(&mut self.head))
    }

    /// Names matching [`MlpModel::layers`], e.g. `neural.0`, `head`.
    pub fn layer_names(&self) -> Vec<String> {
        self.branches
            .iter()
            .flat_map(|b| (0..b.layers.len()).map(move |i| format!("{}.{i}", b.block)))
            .chain(std::iter::once("head".to_string()))
            .collect()
    }

    pub fn num_parameters(&self) -> usize {
        self.layers().map(DenseLayer::num_parameters).sum()
    }

    pub fn l2_penalty(&self) -> f64 {
        self.layers().map(DenseLayer::l2_penalty).sum()
    }

    fn check_inputs(&self, inputs: &[ArrayView2<f64>]) -> Result<usize> {
        if inputs.len() != self.branches.len() {
            return Err(Error::Shape {
                branch: "all".into(),
                expected: self.branches.len(),
                actual: inputs.len(),
            });
        }
        let rows = inputs[0].nrows();
        for (branch, input) in self.branches.iter().zip(inputs) {
            let expected = branch.layers[0].weights.ncols();
            if input.ncols() != expected {
                return Err(Error::Shape {
                    branch: branch.block.to_string(),
                    expected,
                    actual: input.ncols(),
                });
            }
            if input.nrows() != rows {
                return Err(Error::Shape {
                    branch: branch.block.to_string(),
                    expected: rows,
                    actual: input.nrows(),
                });
            }
        }
        Ok(rows)
    }

    /// Batched forward pass; `inputs[i]` is `[batch × width]` for branch `i`.
    pub fn forward(&self, inputs: &[ArrayView2<f64>], mut mode: Mode<'_>, exec: Execution) -> Result<ForwardCache> {
        self.check_inputs(inputs)?;
        let mut branch_caches = Vec::with_capacity(self.branches.len());
        let mut outputs = Vec::with_capacity(self.branches.len());
        for (branch, input) in self.branches.iter().zip(inputs) {
            let mut caches = Vec::with_capacity(branch.layers.len());
            let mut x = input.to_owned();
            for layer in &branch.layers {
                let (out, cache) = layer_forward(layer, x, &mut mode, exec);
                caches.push(cache);
                x = out;
            }
            outputs.push(x);
            branch_caches.push(caches);
        }
        let views: Vec<ArrayView2<f64>> = outputs.iter().map(|o| o.view()).collect();
        let head_input = concatenate(Axis(1), &views).expect("branch outputs share a batch size");
        let mut probabilities = affine(&self.head, head_input.view(), exec);
        Activation::Softmax.apply(&mut probabilities);
        Ok(ForwardCache {
            branches: branch_caches,
            head_input,
            probabilities,
        })
    }

    /// Inference probabilities, `[batch × 4]`.
    pub fn predict_proba(&self, inputs: &[ArrayView2<f64>], exec: Execution) -> Result<Array2<f64>> {
        Ok(self.forward(inputs, Mode::Infer, exec)?.probabilities)
    }

    pub fn predict(&self, inputs: &[ArrayView2<f64>], exec: Execution) -> Result<Vec<Stance>> {
        let probs = self.predict_proba(inputs, exec)?;
        Ok(probs.rows().into_iter().map(|r| argmax_stance(r.as_slice().unwrap())).collect())
    }

    /// Mean cross-entropy over the batch plus the L2 penalty.
    pub fn loss(&self, probabilities: &Array2<f64>, golds: &[Stance]) -> f64 {
        let ce: f64 = probabilities
            .rows()
            .into_iter()
            .zip(golds)
            .map(|(p, g)| -p[g.index()].max(PROBABILITY_FLOOR).ln())
            .sum();
        ce / golds.len() as f64 + self.l2_penalty()
    }

    /// Gradients of [`MlpModel::loss`] for the batch that produced `cache`.
    /// Dropout masks recorded in the cache are reused.
    pub fn backward(&self, cache: &ForwardCache, golds: &[Stance], exec: Execution) -> Result<Gradients> {
        let batch = cache.probabilities.nrows();
        if golds.len() != batch
            || cache.branches.len() != self.branches.len()
            || cache.head_input.ncols() != self.head.weights.ncols()
        {
            return Err(Error::Shape {
                branch: "cache".into(),
                expected: batch,
                actual: golds.len(),
            });
        }
        for (branch, caches) in self.branches.iter().zip(&cache.branches) {
            let stale = caches.len() != branch.layers.len()
                || caches
                    .iter()
                    .zip(&branch.layers)
                    .any(|(c, l)| c.input.ncols() != l.weights.ncols() || c.activated.ncols() != l.weights.nrows());
            if stale {
                return Err(Error::Shape {
                    branch: branch.block.to_string(),
                    expected: branch.layers.len(),
                    actual: caches.len(),
                });
            }
        }

        // Softmax + cross-entropy: dL/dz = (p - onehot) / batch.
        let mut dz = cache.probabilities.clone();
        for (mut row, gold) in dz.rows_mut().into_iter().zip(golds) {
            row[gold.index()] -= 1.0;
        }
        dz /= batch as f64;
        let head_grad = layer_gradient(&self.head, cache.head_input.view(), dz.view(), exec);
        let d_fused = par::matmul(exec, dz.view(), self.head.weights.view());

        let mut per_branch = Vec::with_capacity(self.branches.len());
        let mut offset = 0;
        for (branch, caches) in self.branches.iter().zip(&cache.branches) {
            let width = branch.layers.last().unwrap().weights.nrows();
            let mut upstream = d_fused.slice(s![.., offset..offset + width]).to_owned();
            offset += width;
            let mut grads = Vec::with_capacity(branch.layers.len());
            for (i, (layer, lc)) in branch.layers.iter().zip(caches).enumerate().rev() {
                if let Some(mask) = &lc.mask {
                    upstream *= mask;
                }
                let dz = layer.activation.backprop(&lc.activated, upstream);
                grads.push(layer_gradient(layer, lc.input.view(), dz.view(), exec));
                upstream = if i > 0 {
                    par::matmul(exec, dz.view(), layer.weights.view())
                } else {
                    Array2::zeros((0, 0))
                };
            }
            grads.reverse();
            per_branch.push(grads);
        }
        let mut all: Vec<LayerGradient> = per_branch.into_iter().flatten().collect();
        all.push(head_grad);
        Ok(Gradients(all))
    }
}

fn affine(layer: &DenseLayer, x: ArrayView2<f64>, exec: Execution) -> Array2<f64> {
    let mut z = par::matmul_transposed(exec, x, layer.weights.view());
    z += &layer.bias;
    z
}

fn layer_forward(layer: &DenseLayer, x: Array2<f64>, mode: &mut Mode<'_>, exec: Execution) -> (Array2<f64>, LayerCache) {
    let mut activated = affine(layer, x.view(), exec);
    layer.activation.apply(&mut activated);
    let mask = match mode {
        Mode::Train(rng) if layer.dropout_keep < 1.0 => {
            let keep = layer.dropout_keep;
            let scale = 1.0 / keep;
            let mut mask = Array2::zeros(activated.raw_dim());
            for m in mask.iter_mut() {
                *m = if rng.random::<f64>() < keep { scale } else { 0.0 };
            }
            Some(mask)
        }
        _ => None,
    };
    let out = match &mask {
        Some(m) => &activated * m,
        None => activated.clone(),
    };
    (out, LayerCache { input: x, activated, mask })
}

fn layer_gradient(layer: &DenseLayer, input: ArrayView2<f64>, dz: ArrayView2<f64>, exec: Execution) -> LayerGradient {
    let mut weights = par::matmul_lhs_transposed(exec, dz, input);
    if layer.l2 != 0.0 {
        weights.scaled_add(2.0 * layer.l2, &layer.weights);
    }
    LayerGradient {
        weights,
        bias: dz.sum_axis(Axis(0)),
    }
}

/// Index of the largest probability; ties go to the earliest label.
pub fn argmax_stance(probabilities: &[f64]) -> Stance {
    let mut best = 0;
    for (i, &p) in probabilities.iter().enumerate().skip(1) {
        if p > probabilities[best] {
            best = i;
        }
    }
    Stance::from_index(best).expect("four-way output")
}

#[cfg(test)]
mod tests;
