use serde::{Deserialize, Serialize};

use super::Params;
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Real, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply<T: Real>(self, m: &mut Matrix<T>) {
        if self == Activation::Relu {
            m.as_mut_slice()
                .iter_mut()
                .for_each(|v| *v = v.max(T::zero()));
        }
    }
}

/// Dense layer, weight stored `out × in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear<T = f32> {
    pub weight: Matrix<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Linear<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Matrix::zeros(outputs, inputs),
            bias: vec![T::zero(); outputs],
        }
    }

    /// Weights `Uniform(-bound, bound)`, bias zero.
    pub fn uniform(inputs: usize, outputs: usize, bound: f64, rng: &mut Rng) -> Self {
        Self {
            weight: Matrix::from_fn(outputs, inputs, |_, _| {
                T::lift(rng.uniform_range(-bound, bound))
            }),
            bias: vec![T::zero(); outputs],
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.rows()
    }

    fn apply(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        let mut z = x.matmul_nt(&self.weight)?;
        z.add_row_vector(&self.bias)?;
        Ok(z)
    }

    pub fn cast<U: Real>(&self) -> Linear<U> {
        Linear {
            weight: self.weight.cast(),
            bias: self.bias.iter().map(|b| U::lift(b.widen())).collect(),
        }
    }
}

/// MLP backbone `input → hidden… → D` plus a `C × D` classifier whose first
/// `n_base` rows are the base classes.
#[derive(Clone, Debug, PartialEq)]
pub struct Network<T = f32> {
    widths: Vec<usize>,
    layers: Vec<Linear<T>>,
    classifier: Linear<T>,
    n_base: usize,
    activation: Activation,
}

/// Activations retained by [`Network::forward`] for the backward pass.
#[derive(Clone, Debug)]
pub struct Tape<T = f32> {
    /// Input to every backbone layer.
    inputs: Vec<Matrix<T>>,
    features: Matrix<T>,
}

#[derive(Clone, Debug)]
pub struct Forward<T = f32> {
    pub features: Matrix<T>,
    pub logits: Matrix<T>,
    pub tape: Tape<T>,
}

/// Parameter gradients, laid out like the network.
#[derive(Clone, Debug)]
pub struct Gradients<T = f32> {
    pub layers: Vec<Linear<T>>,
    pub classifier: Linear<T>,
}

impl<T: Real> Gradients<T> {
    pub fn slices(&self) -> Vec<&[T]> {
        let mut out = Vec::with_capacity(2 * self.layers.len() + 2);
        for l in self.layers.iter().chain(std::iter::once(&self.classifier)) {
            out.push(l.weight.as_slice());
            out.push(&l.bias[..]);
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.slices()
            .iter()
            .flat_map(|s| s.iter())
            .fold(0.0, |m, v| m.max(v.widen().abs()))
    }
}

impl<T: Real> Network<T> {
    /// Randomly initialised network.
    ///
    /// Backbone layers use He-uniform bounds; the classifier uses
    /// `Uniform(-1/√D, 1/√D)` with zero bias.
    pub fn new(
        widths: &[usize],
        n_classes: usize,
        n_base: usize,
        activation: Activation,
        rng: &mut Rng,
    ) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::config(
                "widths",
                "need at least input and embedding widths, all positive",
            ));
        }
        if n_base > n_classes || n_classes == 0 {
            return Err(Error::config(
                "classes",
                format!("{n_base} base classes out of {n_classes}"),
            ));
        }
        let n_layers = widths.len() - 1;
        let layers = (0..n_layers)
            .map(|l| {
                let fan_in = widths[l] as f64;
                let gain = if l + 1 < n_layers && activation == Activation::Relu {
                    6.0
                } else {
                    3.0
                };
                Linear::uniform(widths[l], widths[l + 1], (gain / fan_in).sqrt(), rng)
            })
            .collect();
        let d = widths[n_layers];
        let classifier = Linear::uniform(d, n_classes, 1.0 / (d as f64).sqrt(), rng);
        Ok(Self {
            widths: widths.to_vec(),
            layers,
            classifier,
            n_base,
            activation,
        })
    }

    pub fn from_parts(
        layers: Vec<Linear<T>>,
        classifier: Linear<T>,
        n_base: usize,
        activation: Activation,
    ) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::config("widths", "network needs at least one layer"));
        }
        let mut widths = vec![layers[0].inputs()];
        for l in &layers {
            if l.inputs() != *widths.last().unwrap() || l.bias.len() != l.outputs() {
                return Err(Error::shape(
                    format!("layer taking {} inputs", widths.last().unwrap()),
                    l.weight.shape_str(),
                ));
            }
            widths.push(l.outputs());
        }
        if classifier.inputs() != *widths.last().unwrap()
            || classifier.bias.len() != classifier.outputs()
            || n_base > classifier.outputs()
        {
            return Err(Error::shape(
                format!("classifier over {} features", widths.last().unwrap()),
                classifier.weight.shape_str(),
            ));
        }
        Ok(Self {
            widths,
            layers,
            classifier,
            n_base,
            activation,
        })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn embed_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn n_classes(&self) -> usize {
        self.classifier.outputs()
    }

    pub fn n_base(&self) -> usize {
        self.n_base
    }

    pub fn n_novel(&self) -> usize {
        self.n_classes() - self.n_base
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn layers(&self) -> &[Linear<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Linear<T>] {
        &mut self.layers
    }

    pub fn classifier(&self) -> &Linear<T> {
        &self.classifier
    }

    pub fn classifier_mut(&mut self) -> &mut Linear<T> {
        &mut self.classifier
    }

    /// Novel-class classifier rows `[n_base, C)`.
    pub fn novel_weights(&self) -> Matrix<T> {
        self.classifier
            .weight
            .slice_rows(self.n_base..self.n_classes())
    }

    /// Fresh classifier head with the construction-time initialisation.
    pub fn reset_classifier(&mut self, rng: &mut Rng) {
        let d = self.embed_dim();
        self.classifier =
            Linear::uniform(d, self.n_classes(), 1.0 / (d as f64).sqrt(), rng);
    }

    pub fn cast<U: Real>(&self) -> Network<U> {
        Network {
            widths: self.widths.clone(),
            layers: self.layers.iter().map(Linear::cast).collect(),
            classifier: self.classifier.cast(),
            n_base: self.n_base,
            activation: self.activation,
        }
    }

    pub fn forward(&self, batch: &Matrix<T>) -> Result<Forward<T>> {
        if batch.cols() != self.input_dim() {
            return Err(Error::shape(
                format!("batch width {}", self.input_dim()),
                batch.shape_str(),
            ));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut a = batch.clone();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = layer.apply(&a)?;
            if l < last {
                self.activation.apply(&mut z);
            }
            inputs.push(std::mem::replace(&mut a, z));
        }
        let logits = self.classifier.apply(&a)?;
        Ok(Forward {
            features: a.clone(),
            logits,
            tape: Tape {
                inputs,
                features: a,
            },
        })
    }

    /// Backbone features only (the classifier is skipped).
    pub fn features(&self, batch: &Matrix<T>) -> Result<Matrix<T>> {
        if batch.cols() != self.input_dim() {
            return Err(Error::shape(
                format!("batch width {}", self.input_dim()),
                batch.shape_str(),
            ));
        }
        let mut a = batch.clone();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            a = layer.apply(&a)?;
            if l < last {
                self.activation.apply(&mut a);
            }
        }
        Ok(a)
    }

    /// Gradients for upstream `d_features` (n×D) and `d_logits` (n×C), which
    /// are summed at the feature layer.
    pub fn backward(
        &self,
        tape: &Tape<T>,
        d_features: &Matrix<T>,
        d_logits: &Matrix<T>,
    ) -> Result<Gradients<T>> {
        let n = tape.features.rows();
        if d_features.shape() != tape.features.shape() {
            return Err(Error::shape(tape.features.shape_str(), d_features.shape_str()));
        }
        if d_logits.shape() != (n, self.n_classes()) {
            return Err(Error::shape(
                format!("{n}x{}", self.n_classes()),
                d_logits.shape_str(),
            ));
        }
        let classifier = Linear {
            weight: d_logits.matmul_tn(&tape.features)?,
            bias: sums(d_logits),
        };
        let mut g = d_logits.matmul(&self.classifier.weight)?;
        g.axpy(T::one(), d_features)?;

        let mut layers = Vec::with_capacity(self.layers.len());
        for l in (0..self.layers.len()).rev() {
            let input = &tape.inputs[l];
            layers.push(Linear {
                weight: g.matmul_tn(input)?,
                bias: sums(&g),
            });
            if l > 0 {
                g = g.matmul(&self.layers[l].weight)?;
                if self.activation == Activation::Relu {
                    for (gv, &a) in g.as_mut_slice().iter_mut().zip(input.as_slice()) {
                        if a <= T::zero() {
                            *gv = T::zero();
                        }
                    }
                }
            }
        }
        layers.reverse();
        Ok(Gradients { layers, classifier })
    }

    pub fn same_shape(&self, other: &Network<T>) -> bool {
        self.widths == other.widths && self.n_classes() == other.n_classes()
    }
}

fn sums<T: Real>(m: &Matrix<T>) -> Vec<T> {
    m.column_sums().into_iter().map(T::lift).collect()
}

impl<T: Real> Params<T> for Network<T> {
    fn param_slices(&self) -> Vec<&[T]> {
        let mut out = Vec::with_capacity(2 * self.layers.len() + 2);
        for l in self.layers.iter().chain(std::iter::once(&self.classifier)) {
            out.push(l.weight.as_slice());
            out.push(&l.bias[..]);
        }
        out
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [T]> {
        let mut out = Vec::with_capacity(2 * self.layers.len() + 2);
        for l in self
            .layers
            .iter_mut()
            .chain(std::iter::once(&mut self.classifier))
        {
            out.push(l.weight.as_mut_slice());
            out.push(&mut l.bias[..]);
        }
        out
    }
}

/// `target ← m·target + (1−m)·source`, parameter-wise.
pub fn ema_params<T: Real, P: Params<T>>(target: &mut P, source: &P, momentum: f64) -> Result<()> {
    let src = source.param_slices();
    let mut dst = target.param_slices_mut();
    if src.len() != dst.len() || src.iter().zip(&dst).any(|(s, d)| s.len() != d.len()) {
        return Err(Error::shape("identically shaped parameters", "different shapes"));
    }
    let m = T::lift(momentum);
    let rest = T::lift(1.0 - momentum);
    for (d, s) in dst.iter_mut().zip(src) {
        for (dv, &sv) in d.iter_mut().zip(s) {
            *dv = m * *dv + rest * sv;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_logits(net: &Network<f64>, x: &Matrix<f64>) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        for i in 0..x.rows() {
            let mut a: Vec<f64> = x.row(i).to_vec();
            for (l, layer) in net.layers().iter().enumerate() {
                let mut z = Vec::new();
                for o in 0..layer.outputs() {
                    let mut s = layer.bias[o];
                    for k in 0..layer.inputs() {
                        s += layer.weight.get(o, k) * a[k];
                    }
                    if l + 1 < net.layers().len() {
                        s = s.max(0.0);
                    }
                    z.push(s);
                }
                a = z;
            }
            let c = net.classifier();
            out.push(
                (0..c.outputs())
                    .map(|o| c.bias[o] + (0..a.len()).map(|k| c.weight.get(o, k) * a[k]).sum::<f64>())
                    .collect(),
            );
        }
        out
    }

    #[test]
    fn zero_weights_give_zero_logits() {
        let mut rng = Rng::new(0, 0);
        let mut net = Network::<f32>::new(&[3, 4, 2], 5, 2, Activation::Relu, &mut rng).unwrap();
        for p in net.param_slices_mut() {
            p.iter_mut().for_each(|v| *v = 0.0);
        }
        let x = Matrix::from_fn(3, 3, |i, j| (i + j) as f32);
        let f = net.forward(&x).unwrap();
        assert!(f.logits.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_layer_passes_input() {
        let layer = Linear {
            weight: Matrix::<f32>::identity(2),
            bias: vec![0.0; 2],
        };
        let net = Network::from_parts(vec![layer], Linear::zeros(2, 3), 1, Activation::Relu).unwrap();
        let x = Matrix::from_rows(&[[1.0f32, 2.0]]).unwrap();
        assert_eq!(net.forward(&x).unwrap().features.as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn forward_matches_straight_line_reference() {
        let mut rng = Rng::new(11, 0);
        let net = Network::<f64>::new(&[5, 7, 4], 6, 3, Activation::Relu, &mut rng).unwrap();
        let x = Matrix::from_fn(9, 5, |_, _| rng.normal());
        let got = net.forward(&x).unwrap().logits;
        let want = reference_logits(&net, &x);
        for i in 0..9 {
            for j in 0..6 {
                assert!((got.get(i, j) - want[i][j]).abs() < 1e-5);
            }
        }
        let f32net = net.cast::<f32>();
        let got32 = f32net.forward(&x.cast()).unwrap().logits;
        for i in 0..9 {
            for j in 0..6 {
                assert!((got32.get(i, j) as f64 - want[i][j]).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = Rng::new(1, 0);
        let net = Network::<f64>::new(&[3, 5, 2], 4, 2, Activation::Relu, &mut rng).unwrap();
        let x = Matrix::from_fn(4, 3, |_, _| rng.normal());
        let f = net.forward(&x).unwrap();
        let g = net
            .backward(&f.tape, &Matrix::zeros(4, 2), &Matrix::zeros(4, 4))
            .unwrap();
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn single_layer_sum_of_logits() {
        // loss = Σ logits: dWc[c] = Σ_n features_n, dbc = n
        let mut rng = Rng::new(2, 0);
        let net = Network::<f64>::new(&[3, 2], 3, 1, Activation::Relu, &mut rng).unwrap();
        let x = Matrix::from_fn(5, 3, |_, _| rng.normal());
        let f = net.forward(&x).unwrap();
        let ones = Matrix::from_fn(5, 3, |_, _| 1.0);
        let g = net.backward(&f.tape, &Matrix::zeros(5, 2), &ones).unwrap();
        let fsum = f.features.column_sums();
        for c in 0..3 {
            for d in 0..2 {
                assert!((g.classifier.weight.get(c, d) - fsum[d]).abs() < 1e-12);
            }
            assert_eq!(g.classifier.bias[c], 5.0);
        }
    }

    #[test]
    fn backward_shape_errors() {
        let mut rng = Rng::new(2, 0);
        let net = Network::<f64>::new(&[3, 2], 3, 1, Activation::Relu, &mut rng).unwrap();
        assert!(net.forward(&Matrix::zeros(2, 4)).is_err());
        let f = net.forward(&Matrix::zeros(2, 3)).unwrap();
        assert!(net.backward(&f.tape, &Matrix::zeros(2, 3), &Matrix::zeros(2, 3)).is_err());
        assert!(net.backward(&f.tape, &Matrix::zeros(2, 2), &Matrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn ema_examples() {
        let mut rng = Rng::new(5, 0);
        let src = Network::<f64>::new(&[2, 3], 2, 1, Activation::Relu, &mut rng).unwrap();
        let mut tgt = Network::<f64>::new(&[2, 3], 2, 1, Activation::Relu, &mut rng).unwrap();
        let before = tgt.clone();
        ema_params(&mut tgt, &src, 1.0 - 1e-9).unwrap();
        for (a, b) in tgt.param_slices().iter().zip(before.param_slices()) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-8);
            }
        }
        ema_params(&mut tgt, &src, 0.0).unwrap();
        assert_eq!(tgt, src);

        for p in tgt.param_slices_mut() {
            p.iter_mut().for_each(|v| *v = 2.0);
        }
        let mut zero = src.clone();
        for p in zero.param_slices_mut() {
            p.iter_mut().for_each(|v| *v = 0.0);
        }
        ema_params(&mut tgt, &zero, 0.5).unwrap();
        assert!(tgt.param_slices().iter().all(|s| s.iter().all(|&v| v == 1.0)));

        let other = Network::<f64>::new(&[2, 4], 2, 1, Activation::Relu, &mut rng).unwrap();
        assert!(ema_params(&mut tgt, &other, 0.5).is_err());
    }
}
