//! Dense feed-forward networks with a manual reverse pass.
//!
//! Every layer is `a = act(W x + b)` with `W` stored as `(out, in)`. Batched
//! calls take one sample per row, so a whole minibatch goes through a single
//! matrix product per layer.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Elu,
    Linear,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Elu => {
                if z > 0.0 {
                    z
                } else {
                    z.exp_m1()
                }
            }
            Activation::Linear => z,
        }
    }

    /// First derivative, given both the pre-activation `z` and output `a`.
    #[inline]
    fn slope(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Elu => {
                if z > 0.0 {
                    1.0
                } else {
                    a + 1.0
                }
            }
            Activation::Linear => 1.0,
        }
    }

    #[inline]
    fn curvature(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Tanh => -2.0 * a * (1.0 - a * a),
            Activation::Elu => {
                if z > 0.0 {
                    0.0
                } else {
                    a + 1.0
                }
            }
            Activation::Linear => 0.0,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Elu => "elu",
            Activation::Linear => "linear",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        match tag {
            "tanh" => Ok(Activation::Tanh),
            "elu" => Ok(Activation::Elu),
            "linear" => Ok(Activation::Linear),
            other => Err(Error::Config(format!("unknown activation tag `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub name: String,
    /// Shape `(out, in)`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }
}

/// Weights and biases of one network, input layer first.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTree {
    layers: Vec<Layer>,
}

impl ParamTree {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("network needs at least one layer".into()));
        }
        for layer in &layers {
            if layer.bias.len() != layer.out_dim() {
                return Err(Error::Shape(format!(
                    "layer `{}`: bias length {} != out dim {}",
                    layer.name,
                    layer.bias.len(),
                    layer.out_dim()
                )));
            }
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::Shape(format!(
                    "layer `{}` outputs {} but `{}` expects {}",
                    pair[0].name,
                    pair[0].out_dim(),
                    pair[1].name,
                    pair[1].in_dim()
                )));
            }
        }
        let tree = ParamTree { layers };
        if !tree.is_finite() {
            return Err(Error::Numeric("non-finite parameter".into()));
        }
        Ok(tree)
    }

    /// Builds an MLP `sizes[0] -> ... -> sizes[last]` with orthogonal init.
    ///
    /// Hidden layers use `hidden` and gain `hidden_gain`; the last layer is
    /// linear with gain `output_gain`. Biases start at zero.
    pub fn mlp<R: Rng + ?Sized>(
        prefix: &str,
        sizes: &[usize],
        hidden: Activation,
        hidden_gain: f64,
        output_gain: f64,
        rng: &mut R,
    ) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let last = i + 1 == n;
                let gain = if last { output_gain } else { hidden_gain };
                Layer {
                    name: format!("{prefix}.{i}"),
                    weight: orthogonal(sizes[i + 1], sizes[i], gain, rng),
                    bias: Array1::zeros(sizes[i + 1]),
                    activation: if last { Activation::Linear } else { hidden },
                }
            })
            .collect();
        ParamTree { layers }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    /// `(out, in)` per layer.
    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|l| l.weight.dim()).collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    /// Flattened parameters, layer by layer, weight (row-major) then bias.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend(l.weight.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::Shape(format!(
                "flat vector has {} entries, network has {}",
                flat.len(),
                self.num_params()
            )));
        }
        let mut it = flat.iter();
        for l in &mut self.layers {
            for (w, v) in l.weight.iter_mut().zip(&mut it) {
                *w = *v;
            }
            for (b, v) in l.bias.iter_mut().zip(&mut it) {
                *b = *v;
            }
        }
        Ok(())
    }

    /// Zeroes every weight, keeping biases.
    pub fn zero_weights(&mut self) {
        for l in &mut self.layers {
            l.weight.fill(0.0);
        }
    }
}

/// Per-parameter partials, shaped like the `ParamTree` that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct GradTree {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl GradTree {
    pub fn zeros_like(params: &ParamTree) -> Self {
        GradTree {
            weights: params.layers.iter().map(|l| Array2::zeros(l.weight.dim())).collect(),
            biases: params.layers.iter().map(|l| Array1::zeros(l.bias.len())).collect(),
        }
    }

    pub fn matches(&self, params: &ParamTree) -> bool {
        self.weights.len() == params.layers.len()
            && self
                .weights
                .iter()
                .zip(&self.biases)
                .zip(&params.layers)
                .all(|((w, b), l)| w.dim() == l.weight.dim() && b.len() == l.bias.len())
    }

    pub fn add_assign(&mut self, other: &GradTree) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            *a += b;
        }
    }

    pub fn scale(&mut self, k: f64) {
        for w in &mut self.weights {
            w.mapv_inplace(|v| v * k);
        }
        for b in &mut self.biases {
            b.mapv_inplace(|v| v * k);
        }
    }

    pub fn norm_sq(&self) -> f64 {
        self.values().map(|v| v * v).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.values().all(|v| v == 0.0)
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }

    fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.weights
            .iter()
            .flat_map(|w| w.iter().copied())
            .chain(self.biases.iter().flat_map(|b| b.iter().copied()))
    }
}

/// Activations recorded by a forward pass; one row per sample.
#[derive(Debug, Clone)]
pub struct Tape {
    input: Array2<f64>,
    pre: Vec<Array2<f64>>,
    post: Vec<Array2<f64>>,
}

impl Tape {
    pub fn batch_size(&self) -> usize {
        self.input.nrows()
    }

    pub fn output(&self) -> &Array2<f64> {
        self.post.last().expect("tape has at least one layer")
    }

    fn layer_input(&self, layer: usize) -> &Array2<f64> {
        if layer == 0 {
            &self.input
        } else {
            &self.post[layer - 1]
        }
    }
}

fn affine(layer: &Layer, x: &ArrayView2<f64>) -> Array2<f64> {
    let mut z = x.dot(&layer.weight.t());
    z += &layer.bias;
    z
}

pub fn forward_batch(params: &ParamTree, input: ArrayView2<f64>) -> Result<(Array2<f64>, Tape)> {
    if input.ncols() != params.in_dim() {
        return Err(Error::Shape(format!(
            "input has {} columns, network expects {}",
            input.ncols(),
            params.in_dim()
        )));
    }
    let mut pre = Vec::with_capacity(params.layers.len());
    let mut post: Vec<Array2<f64>> = Vec::with_capacity(params.layers.len());
    for layer in &params.layers {
        let z = match post.last() {
            Some(a) => affine(layer, &a.view()),
            None => affine(layer, &input),
        };
        let act = layer.activation;
        let a = z.mapv(|v| act.apply(v));
        pre.push(z);
        post.push(a);
    }
    let tape = Tape { input: input.to_owned(), pre, post };
    Ok((tape.output().clone(), tape))
}

/// Forward pass without keeping a tape.
pub fn predict_batch(params: &ParamTree, input: ArrayView2<f64>) -> Result<Array2<f64>> {
    if input.ncols() != params.in_dim() {
        return Err(Error::Shape(format!(
            "input has {} columns, network expects {}",
            input.ncols(),
            params.in_dim()
        )));
    }
    let mut x = input.to_owned();
    for layer in &params.layers {
        let act = layer.activation;
        x = affine(layer, &x.view());
        x.mapv_inplace(|v| act.apply(v));
    }
    Ok(x)
}

fn check_tape(params: &ParamTree, tape: &Tape) -> Result<()> {
    let ok = tape.pre.len() == params.layers.len()
        && tape.input.ncols() == params.in_dim()
        && tape
            .pre
            .iter()
            .zip(&params.layers)
            .all(|(z, l)| z.ncols() == l.out_dim());
    if ok {
        Ok(())
    } else {
        Err(Error::Shape("tape was not produced by this network".into()))
    }
}

/// Reverse pass. Parameter gradients are summed over the batch.
pub fn backward_batch(
    params: &ParamTree,
    tape: &Tape,
    output_grad: ArrayView2<f64>,
) -> Result<(GradTree, Array2<f64>)> {
    check_tape(params, tape)?;
    if output_grad.dim() != tape.output().dim() {
        return Err(Error::Shape(format!(
            "output gradient {:?} does not match output {:?}",
            output_grad.dim(),
            tape.output().dim()
        )));
    }
    let n_layers = params.layers.len();
    let mut grads = GradTree::zeros_like(params);
    let mut delta = output_grad.to_owned();
    for l in (0..n_layers).rev() {
        let layer = &params.layers[l];
        let act = layer.activation;
        if act != Activation::Linear {
            Zip::from(&mut delta)
                .and(&tape.pre[l])
                .and(&tape.post[l])
                .for_each(|d, &z, &a| *d *= act.slope(z, a));
        }
        grads.weights[l] = delta.t().dot(tape.layer_input(l));
        grads.biases[l] = delta.sum_axis(Axis(0));
        delta = delta.dot(&layer.weight);
    }
    Ok((grads, delta))
}

pub fn forward(params: &ParamTree, input: &[f64]) -> Result<(Vec<f64>, Tape)> {
    let x = ArrayView2::from_shape((1, input.len()), input)
        .map_err(|e| Error::Shape(e.to_string()))?;
    let (y, tape) = forward_batch(params, x)?;
    Ok((y.into_raw_vec(), tape))
}

pub fn backward(params: &ParamTree, tape: &Tape, output_grad: &[f64]) -> Result<(GradTree, Vec<f64>)> {
    let g = ArrayView2::from_shape((1, output_grad.len()), output_grad)
        .map_err(|e| Error::Shape(e.to_string()))?;
    let (grads, input_grad) = backward_batch(params, tape, g)?;
    Ok((grads, input_grad.into_raw_vec()))
}

/// Input-gradient penalty of a scalar-output network.
///
/// Returns `mean_i ||dD/dx (x_i)||^2` and its exact gradient with respect to
/// the parameters. The parameter gradient is the directional derivative of
/// `grad_theta D` along the input gradient, obtained by pushing a tangent
/// through the forward and reverse passes.
pub fn input_gradient_penalty(params: &ParamTree, input: ArrayView2<f64>) -> Result<(f64, GradTree)> {
    if params.out_dim() != 1 {
        return Err(Error::Shape("input-gradient penalty needs a scalar output".into()));
    }
    let n = input.nrows();
    if n == 0 {
        return Err(Error::Config("empty batch".into()));
    }
    let (_, tape) = forward_batch(params, input)?;
    let n_layers = params.layers.len();

    // Reverse pass seeded with dD = 1 gives the input gradient g.
    let mut slopes = Vec::with_capacity(n_layers);
    let mut deltas = vec![Array2::zeros((0, 0)); n_layers];
    let mut delta = Array2::<f64>::ones((n, 1));
    for l in (0..n_layers).rev() {
        let act = params.layers[l].activation;
        let s = Zip::from(&tape.pre[l])
            .and(&tape.post[l])
            .map_collect(|&z, &a| act.slope(z, a));
        deltas[l] = delta.clone();
        let u = &delta * &s;
        delta = u.dot(&params.layers[l].weight);
        slopes.push(s);
    }
    slopes.reverse();
    let g = delta;
    let penalty = g.iter().map(|v| v * v).sum::<f64>() / n as f64;

    // Tangent forward along g.
    let mut z_dots = Vec::with_capacity(n_layers);
    let mut a_dots: Vec<Array2<f64>> = Vec::with_capacity(n_layers);
    for l in 0..n_layers {
        let a_prev_dot = if l == 0 { &g } else { &a_dots[l - 1] };
        let z_dot = a_prev_dot.dot(&params.layers[l].weight.t());
        a_dots.push(&slopes[l] * &z_dot);
        z_dots.push(z_dot);
    }

    // Tangent of the parameter-gradient reverse pass.
    let mut grads = GradTree::zeros_like(params);
    let mut delta_dot = Array2::<f64>::zeros((n, 1));
    for l in (0..n_layers).rev() {
        let act = params.layers[l].activation;
        let u = &deltas[l] * &slopes[l];
        let mut u_dot = &delta_dot * &slopes[l];
        if act != Activation::Linear {
            let curv = Zip::from(&tape.pre[l])
                .and(&tape.post[l])
                .map_collect(|&z, &a| act.curvature(z, a));
            u_dot = u_dot + &deltas[l] * &curv * &z_dots[l];
        }
        let a_prev = tape.layer_input(l);
        let a_prev_dot = if l == 0 { &g } else { &a_dots[l - 1] };
        grads.weights[l] = u_dot.t().dot(a_prev) + u.t().dot(a_prev_dot);
        grads.biases[l] = u_dot.sum_axis(Axis(0));
        delta_dot = u_dot.dot(&params.layers[l].weight);
    }
    grads.scale(2.0 / n as f64);
    Ok((penalty, grads))
}

/// Per-sample input gradients `dD/dx` of a scalar-output network.
pub fn input_gradients(params: &ParamTree, input: ArrayView2<f64>) -> Result<Array2<f64>> {
    let (y, tape) = forward_batch(params, input)?;
    if y.ncols() != 1 {
        return Err(Error::Shape("input gradients need a scalar output".into()));
    }
    let seed = Array2::ones(y.dim());
    let (_, g) = backward_batch(params, &tape, seed.view())?;
    Ok(g)
}

/// Random matrix with orthonormal rows (or columns, when taller than wide).
pub fn orthogonal<R: Rng + ?Sized>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> Array2<f64> {
    let (short, long) = if rows <= cols { (rows, cols) } else { (cols, rows) };
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(short);
    while basis.len() < short {
        let mut v: Vec<f64> = (0..long).map(|_| rng.sample(StandardNormal)).collect();
        for b in &basis {
            let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    Array2::from_shape_fn((rows, cols), |(i, j)| {
        let (k, m) = if rows <= cols { (i, j) } else { (j, i) };
        gain * basis[k][m]
    })
}

pub fn row(v: &[f64]) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((1, v.len()), v).expect("contiguous slice")
}
