use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{matmul_nn, matmul_nt, matmul_tn_acc, Mat, Real};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn apply<R: Real>(self, z: R) -> R {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(R::zero()),
            Activation::Tanh => z.tanh_act(),
            Activation::Sigmoid => R::one() / (R::one() + (-z).exp()),
        }
    }

    /// Derivative expressed through the activation output `y = f(z)`.
    /// ReLU uses `f'(0) = 0`.
    pub fn derivative_from_output<R: Real>(self, y: R) -> R {
        match self {
            Activation::Identity => R::one(),
            Activation::Relu => {
                if y > R::zero() {
                    R::one()
                } else {
                    R::zero()
                }
            }
            Activation::Tanh => R::one() - y * y,
            Activation::Sigmoid => y * (R::one() - y),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense<R> {
    /// `out x in`.
    pub w: Mat<R>,
    pub b: Vec<R>,
    pub activation: Activation,
}

impl<R: Real> Dense<R> {
    /// Uniform initialisation in `+-sqrt(6 / (in + out))`, zero bias.
    pub fn new<G: Rng + ?Sized>(inputs: usize, outputs: usize, activation: Activation, rng: &mut G) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let w = Mat::from_fn(outputs, inputs, |_, _| {
            R::from_f64(rng.random_range(-limit..=limit))
        });
        Self {
            w,
            b: vec![R::zero(); outputs],
            activation,
        }
    }

    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Self {
            w: Mat::zeros(outputs, inputs),
            b: vec![R::zero(); outputs],
            activation,
        }
    }

    pub fn inputs(&self) -> usize {
        self.w.cols()
    }

    pub fn outputs(&self) -> usize {
        self.w.rows()
    }

    pub fn forward(&self, x: &Mat<R>) -> Mat<R> {
        let mut y = Mat::zeros(x.rows(), self.outputs());
        matmul_nt(x, &self.w, &mut y);
        let act = self.activation;
        for i in 0..y.rows() {
            for (v, b) in y.row_mut(i).iter_mut().zip(&self.b) {
                *v = act.apply(*v + *b);
            }
        }
        y
    }

    /// Accumulate parameter gradients into `grads` given the layer input `x`,
    /// its output `y` and `dy = dL/dy`; returns `dL/dx` when requested.
    pub fn backward(
        &self,
        x: &Mat<R>,
        y: &Mat<R>,
        dy: &Mat<R>,
        grads: &mut Dense<R>,
        want_dx: bool,
    ) -> Option<Mat<R>> {
        let mut dz = dy.clone();
        if self.activation != Activation::Identity {
            for (d, &o) in dz.data_mut().iter_mut().zip(y.data()) {
                *d *= self.activation.derivative_from_output(o);
            }
        }
        matmul_tn_acc(&dz, x, &mut grads.w);
        for i in 0..dz.rows() {
            for (g, d) in grads.b.iter_mut().zip(dz.row(i)) {
                *g += *d;
            }
        }
        want_dx.then(|| {
            let mut dx = Mat::zeros(x.rows(), self.inputs());
            matmul_nn(&dz, &self.w, &mut dx);
            dx
        })
    }
}

/// Activations of every layer boundary from one forward pass; entry 0 is the
/// input.
#[derive(Debug, Clone)]
pub struct MlpCache<R> {
    pub activations: Vec<Mat<R>>,
}

impl<R: Real> MlpCache<R> {
    pub fn output(&self) -> &Mat<R> {
        self.activations.last().expect("at least the input")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<R> {
    pub layers: Vec<Dense<R>>,
}

impl<R: Real> Mlp<R> {
    /// `sizes = [in, h1, ..., out]`, one activation per layer.
    pub fn new<G: Rng + ?Sized>(sizes: &[usize], activations: &[Activation], rng: &mut G) -> Self {
        assert_eq!(sizes.len(), activations.len() + 1);
        Self {
            layers: sizes
                .windows(2)
                .zip(activations)
                .map(|(s, &a)| Dense::new(s[0], s[1], a, rng))
                .collect(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Dense::zeros(l.inputs(), l.outputs(), l.activation))
                .collect(),
        }
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn outputs(&self) -> usize {
        self.layers.last().expect("nonempty").outputs()
    }

    pub fn forward(&self, x: &Mat<R>) -> Result<MlpCache<R>> {
        self.forward_owned(x.clone())
    }

    /// Like [`Mlp::forward`] but moves the input into the cache.
    pub fn forward_owned(&self, x: Mat<R>) -> Result<MlpCache<R>> {
        if x.cols() != self.inputs() {
            return Err(Error::Shape(format!(
                "network expects {} inputs, got {}",
                self.inputs(),
                x.cols()
            )));
        }
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x);
        for layer in &self.layers {
            let y = layer.forward(activations.last().expect("input"));
            activations.push(y);
        }
        Ok(MlpCache { activations })
    }

    /// Output only.
    pub fn predict(&self, x: &Mat<R>) -> Result<Mat<R>> {
        if x.cols() != self.inputs() {
            return Err(Error::Shape(format!(
                "network expects {} inputs, got {}",
                self.inputs(),
                x.cols()
            )));
        }
        let mut h = self.layers[0].forward(x);
        for layer in &self.layers[1..] {
            h = layer.forward(&h);
        }
        Ok(h)
    }

    /// Accumulate gradients into `grads`; returns `dL/dx` when requested.
    pub fn backward(
        &self,
        cache: &MlpCache<R>,
        dy: &Mat<R>,
        grads: &mut Mlp<R>,
        want_dx: bool,
    ) -> Option<Mat<R>> {
        let n = self.layers.len();
        let mut upstream = dy.clone();
        for i in (0..n).rev() {
            let need = want_dx || i > 0;
            let dx = self.layers[i].backward(
                &cache.activations[i],
                &cache.activations[i + 1],
                &upstream,
                &mut grads.layers[i],
                need,
            );
            match dx {
                Some(d) => upstream = d,
                None => return None,
            }
        }
        Some(upstream)
    }

    /// Visit `(name, shape, values)` for every weight and bias.
    pub fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &'a [R])) {
        for (i, l) in self.layers.iter().enumerate() {
            f(&format!("{prefix}.{i}.w"), &[l.outputs(), l.inputs()], l.w.data());
            f(&format!("{prefix}.{i}.b"), &[l.outputs()], &l.b);
        }
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &mut [R])) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            let (o, n) = (l.outputs(), l.inputs());
            f(&format!("{prefix}.{i}.w"), &[o, n], l.w.data_mut());
            f(&format!("{prefix}.{i}.b"), &[o], &mut l.b);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.is_finite() && l.b.iter().all(|v| v.is_finite()))
    }
}

impl<R: Real> super::Parameterized<R> for Mlp<R> {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&str, &[usize], &'a [R])) {
        Mlp::visit(self, "mlp", f)
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &[usize], &mut [R])) {
        Mlp::visit_mut(self, "mlp", f)
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::nn::{ParamVector, Parameterized};

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(17)
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let mut l = Dense::<f64>::zeros(3, 3, Activation::Identity);
        for i in 0..3 {
            l.w.set(i, i, 1.0);
        }
        let x = Mat::from_rows(&[[0.5, -1.0, 2.0]]);
        assert_eq!(l.forward(&x), x);
    }

    #[test]
    fn activation_values() {
        assert_eq!(Activation::Relu.apply(-1.0f64), 0.0);
        assert_eq!(Activation::Relu.apply(2.0f64), 2.0);
        assert_eq!(Activation::Sigmoid.apply(0.0f64), 0.5);
        assert_eq!(Activation::Relu.derivative_from_output(Activation::Relu.apply(-0.5f64)), 0.0);
    }

    #[test]
    fn linear_weight_gradient_is_outer_product() {
        let l = Dense::<f64>::new(3, 2, Activation::Identity, &mut rng());
        let x = Mat::from_rows(&[[1.0, 2.0, 3.0]]);
        let y = l.forward(&x);
        let dy = Mat::from_rows(&[[0.5, -2.0]]);
        let mut g = Dense::zeros(3, 2, Activation::Identity);
        l.backward(&x, &y, &dy, &mut g, false);
        for i in 0..2 {
            for j in 0..3 {
                assert_eq!(g.w.get(i, j), dy.get(0, i) * x.get(0, j));
            }
        }
        assert_eq!(g.b, vec![0.5, -2.0]);
    }

    #[test]
    fn relu_blocks_gradient_at_negative_preactivation() {
        let mut l = Dense::<f64>::zeros(1, 1, Activation::Relu);
        l.w.set(0, 0, 1.0);
        let x = Mat::from_rows(&[[-1.0]]);
        let y = l.forward(&x);
        let mut g = Dense::zeros(1, 1, Activation::Relu);
        let dx = l.backward(&x, &y, &Mat::from_rows(&[[1.0]]), &mut g, true).unwrap();
        assert_eq!(dx.get(0, 0), 0.0);
        assert_eq!(g.w.get(0, 0), 0.0);
    }

    fn loss(net: &Mlp<f64>, x: &Mat<f64>) -> f64 {
        // Weighted sum so every output element gets a distinct upstream gradient.
        let y = net.predict(x).unwrap();
        y.data()
            .iter()
            .enumerate()
            .map(|(i, v)| v * (1.0 + 0.1 * i as f64))
            .sum()
    }

    fn check_gradients(sizes: &[usize], acts: &[Activation]) {
        let mut r = rng();
        let net = Mlp::<f64>::new(sizes, acts, &mut r);
        let x = Mat::from_fn(4, sizes[0], |_, _| r.random_range(-1.0..1.0));
        let cache = net.forward(&x).unwrap();
        let out = cache.output();
        let dy = Mat::from_fn(out.rows(), out.cols(), |i, j| 1.0 + 0.1 * (i * out.cols() + j) as f64);
        let mut grads = net.zeros_like();
        let dx = net.backward(&cache, &dy, &mut grads, true).unwrap();

        let h = 1e-5;
        let analytic = ParamVector::from_model(&grads);
        let base = ParamVector::from_model(&net);
        let mut worst: f64 = 0.0;
        for k in 0..base.data.len() {
            let mut p = base.clone();
            p.data[k] += h;
            let mut plus = net.clone();
            p.write_into(&mut plus).unwrap();
            p.data[k] -= 2.0 * h;
            let mut minus = net.clone();
            p.write_into(&mut minus).unwrap();
            let fd = (loss(&plus, &x) - loss(&minus, &x)) / (2.0 * h);
            let a = analytic.data[k];
            worst = worst.max((fd - a).abs() / a.abs().max(fd.abs()).max(1e-6));
        }
        assert!(worst < 1e-4, "worst parameter relative error {worst}");
        for i in 0..x.rows() {
            for j in 0..x.cols() {
                let mut xp = x.clone();
                xp.set(i, j, x.get(i, j) + h);
                let mut xm = x.clone();
                xm.set(i, j, x.get(i, j) - h);
                let fd = (loss(&net, &xp) - loss(&net, &xm)) / (2.0 * h);
                let a = dx.get(i, j);
                assert!((fd - a).abs() / a.abs().max(fd.abs()).max(1e-6) < 1e-4);
            }
        }
    }

    #[test]
    fn relu_mlp_gradient_matches_finite_differences() {
        check_gradients(&[6, 128, 1], &[Activation::Relu, Activation::Identity]);
    }

    #[test]
    fn every_activation_passes_gradient_check() {
        for act in [
            Activation::Identity,
            Activation::Relu,
            Activation::Tanh,
            Activation::Sigmoid,
        ] {
            check_gradients(&[5, 7, 3], &[act, act]);
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let net = Mlp::<f64>::new(&[3, 2], &[Activation::Relu], &mut rng());
        assert!(matches!(net.forward(&Mat::zeros(1, 4)), Err(Error::Shape(_))));
    }

    #[test]
    fn init_respects_glorot_bound() {
        let l = Dense::<f64>::new(6, 128, Activation::Relu, &mut rng());
        let bound = (6.0f64 / 134.0).sqrt();
        assert!(l.w.data().iter().all(|w| w.abs() <= bound));
        assert!(l.b.iter().all(|b| *b == 0.0));
        let net = Mlp::<f64>::new(&[2, 3], &[Activation::Relu], &mut rng());
        assert_eq!(ParamVector::from_model(&net).data.len(), 9);
        let mut n = 0;
        Parameterized::visit(&net, &mut |_, _, v| n += v.len());
        assert_eq!(n, 9);
    }
}
