//! Feed-forward networks with ReLU and inverted dropout.
//!
//! Layout of an `n`-layer [`Mlp`]:
//!
//! ```text
//! h0 = x
//! a_i = W_i h_i + b_i
//! h_{i+1} = mask_i ⊙ relu(a_i)          for i < n-1
//! y = a_{n-1}   (or relu(a_{n-1}) when `final_relu` is set)
//! ```
//!
//! Dropout sits between layers only. Masks hold `0` or `1/(1-p)`, so Eval
//! mode uses the raw activations with no rescaling.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::container;
use crate::error::{ensure_dim, Error, Result};
use crate::numerics::{Mat, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Mat,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Linear {
            weight: Mat::zeros(out_dim, in_dim),
            bias: vec![0.0; out_dim],
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.weight.matvec(x);
        for (o, b) in y.iter_mut().zip(&self.bias) {
            *o += b;
        }
        y
    }
}

/// Shape and regularisation settings of an [`Mlp`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    /// `[in, hidden.., out]`; a network has `sizes.len() - 1` layers.
    pub sizes: Vec<usize>,
    pub dropout: f64,
    #[serde(default)]
    pub final_relu: bool,
}

impl MlpSpec {
    pub fn new(sizes: Vec<usize>, dropout: f64) -> Result<Self> {
        let spec = MlpSpec {
            sizes,
            dropout,
            final_relu: false,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sizes.len() < 2 {
            return Err(Error::invalid("an MLP needs at least an input and an output size"));
        }
        if self.sizes.contains(&0) {
            return Err(Error::invalid(format!(
                "layer sizes must be positive, got {:?}",
                self.sizes
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid(format!(
                "dropout rate {} must lie in [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }

    pub fn in_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn out_dim(&self) -> usize {
        *self.sizes.last().expect("validated")
    }

    pub fn param_count(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

/// Sizes `[in, .., out]` for `layers` layers, interpolated geometrically
/// between the endpoints and rounded to the nearest integer.
pub fn geometric_sizes(in_dim: usize, out_dim: usize, layers: usize) -> Vec<usize> {
    let ratio = (out_dim as f64 / in_dim as f64).powf(1.0 / layers as f64);
    (0..=layers)
        .map(|i| match i {
            0 => in_dim,
            i if i == layers => out_dim,
            i => ((in_dim as f64) * ratio.powi(i as i32)).round().max(1.0) as usize,
        })
        .collect()
}

static NEXT_VERSION: AtomicU64 = AtomicU64::new(1);

fn fresh_version() -> u64 {
    NEXT_VERSION.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone)]
pub struct Mlp {
    spec: MlpSpec,
    layers: Vec<Linear>,
    mode: Mode,
    // identifies the current parameter values; caches from older values are rejected
    version: u64,
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec && self.layers == other.layers && self.mode == other.mode
    }
}

/// Intermediate values of one forward pass, consumed by [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    version: u64,
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    masks: Vec<Option<Vec<f64>>>,
}

impl ForwardCache {
    pub fn masks(&self) -> &[Option<Vec<f64>>] {
        &self.masks
    }

    /// Layer outputs before the activation, one vector per layer.
    pub fn pre_activations(&self) -> &[Vec<f64>] {
        &self.pre
    }
}

/// Gradients with the same shapes as an [`Mlp`]'s parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<Linear>,
}

impl MlpGrads {
    pub fn zeros_for(spec: &MlpSpec) -> Self {
        MlpGrads {
            layers: spec
                .sizes
                .windows(2)
                .map(|w| Linear::zeros(w[0], w[1]))
                .collect(),
        }
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
            .collect()
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn add_scaled(&mut self, other: &MlpGrads, scale: f64) {
        for (a, b) in self.slices_mut().into_iter().zip(other.slices()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for a in self.slices_mut() {
            a.iter_mut().for_each(|x| *x *= s);
        }
    }
}

#[derive(Serialize, Deserialize)]
struct MlpHeader {
    kind: String,
    spec: MlpSpec,
    seed: u64,
}

impl Mlp {
    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases,
    /// Train mode.
    pub fn init(spec: &MlpSpec, rng: &mut SeededRng) -> Result<Self> {
        spec.validate()?;
        let layers = spec
            .sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let mut layer = Linear::zeros(fan_in, fan_out);
                for x in layer.weight.as_mut_slice() {
                    *x = rng.uniform_range(-bound, bound);
                }
                layer
            })
            .collect();
        Ok(Mlp {
            spec: spec.clone(),
            layers,
            mode: Mode::Train,
            version: fresh_version(),
        })
    }

    pub fn from_layers(spec: MlpSpec, layers: Vec<Linear>) -> Result<Self> {
        spec.validate()?;
        ensure_dim("layer count", spec.sizes.len() - 1, layers.len())?;
        for (i, (l, w)) in layers.iter().zip(spec.sizes.windows(2)).enumerate() {
            if l.in_dim() != w[0] || l.out_dim() != w[1] || l.bias.len() != w[1] {
                return Err(Error::invalid(format!(
                    "layer {i} has shape {}x{} but the spec says {}x{}",
                    l.out_dim(),
                    l.in_dim(),
                    w[1],
                    w[0]
                )));
            }
        }
        Ok(Mlp {
            spec,
            layers,
            mode: Mode::Train,
            version: fresh_version(),
        })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.spec.in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.spec.out_dim()
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    fn relu_at(&self, layer: usize) -> bool {
        layer + 1 < self.layers.len() || self.spec.final_relu
    }

    fn sample_masks(&self, rng: &mut SeededRng) -> Vec<Option<Vec<f64>>> {
        let p = self.spec.dropout;
        let hidden = self.layers.len() - 1;
        if self.mode == Mode::Eval || p == 0.0 {
            return vec![None; hidden];
        }
        let keep = 1.0 / (1.0 - p);
        self.layers[..hidden]
            .iter()
            .map(|l| {
                Some(
                    (0..l.out_dim())
                        .map(|_| if rng.uniform() < p { 0.0 } else { keep })
                        .collect(),
                )
            })
            .collect()
    }

    /// Forward pass in the current mode. Train mode draws fresh dropout masks
    /// from `rng`; Eval mode ignores it.
    pub fn forward(&self, x: &[f64], rng: &mut SeededRng) -> Result<(Vec<f64>, ForwardCache)> {
        let masks = self.sample_masks(rng);
        self.forward_with_masks(x, &masks)
    }

    /// Forward pass with explicit dropout masks (one per hidden layer).
    pub fn forward_with_masks(
        &self,
        x: &[f64],
        masks: &[Option<Vec<f64>>],
    ) -> Result<(Vec<f64>, ForwardCache)> {
        ensure_dim("mlp input", self.in_dim(), x.len())?;
        ensure_dim("dropout mask count", self.layers.len() - 1, masks.len())?;
        let n = self.layers.len();
        let mut inputs = Vec::with_capacity(n);
        let mut pre = Vec::with_capacity(n);
        let mut h = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let a = layer.apply(&h);
            let mut out = a.clone();
            if self.relu_at(i) {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            if i + 1 < n {
                if let Some(mask) = &masks[i] {
                    ensure_dim("dropout mask", out.len(), mask.len())?;
                    out.iter_mut().zip(mask).for_each(|(v, m)| *v *= m);
                }
            }
            inputs.push(std::mem::replace(&mut h, out));
            pre.push(a);
        }
        Ok((
            h,
            ForwardCache {
                version: self.version,
                inputs,
                pre,
                masks: masks.to_vec(),
            },
        ))
    }

    /// Deterministic forward with no dropout, regardless of mode.
    pub fn infer(&self, x: &[f64]) -> Result<Vec<f64>> {
        ensure_dim("mlp input", self.in_dim(), x.len())?;
        let mut h = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.apply(&h);
            if self.relu_at(i) {
                h.iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        Ok(h)
    }

    /// Accumulates parameter gradients into `grads` and returns `∂/∂x`.
    pub fn backward_into(
        &self,
        cache: &ForwardCache,
        grad_y: &[f64],
        grads: &mut MlpGrads,
    ) -> Result<Vec<f64>> {
        if cache.version != self.version || cache.inputs.len() != self.layers.len() {
            return Err(Error::Contract(
                "forward cache does not belong to the current parameters".into(),
            ));
        }
        ensure_dim("mlp output gradient", self.out_dim(), grad_y.len())?;
        ensure_dim("gradient buffer", self.layers.len(), grads.layers.len())?;
        let n = self.layers.len();
        let mut g = grad_y.to_vec();
        for i in (0..n).rev() {
            if i + 1 < n {
                if let Some(mask) = &cache.masks[i] {
                    g.iter_mut().zip(mask).for_each(|(v, m)| *v *= m);
                }
            }
            if self.relu_at(i) {
                g.iter_mut()
                    .zip(&cache.pre[i])
                    .for_each(|(v, &a)| if a <= 0.0 { *v = 0.0 });
            }
            let slot = &mut grads.layers[i];
            slot.weight.add_outer(&g, &cache.inputs[i], 1.0);
            slot.bias.iter_mut().zip(&g).for_each(|(b, v)| *b += v);
            g = self.layers[i].weight.matvec_t(&g);
        }
        Ok(g)
    }

    pub fn backward(&self, cache: &ForwardCache, grad_y: &[f64]) -> Result<(Vec<f64>, MlpGrads)> {
        let mut grads = MlpGrads::zeros_for(&self.spec);
        let gx = self.backward_into(cache, grad_y, &mut grads)?;
        Ok((gx, grads))
    }

    pub fn param_slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
            .collect()
    }

    /// Mutable parameter views. Invalidates outstanding forward caches.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.version = fresh_version();
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    /// Parameters in layer order, each layer's weights row-major then its bias.
    pub fn flat_params(&self) -> Vec<f64> {
        self.param_slices().concat()
    }

    pub fn from_flat(spec: MlpSpec, params: &[f64]) -> Result<Self> {
        spec.validate()?;
        ensure_dim("flat parameter count", spec.param_count(), params.len())?;
        let mut rest = params;
        let mut layers = Vec::with_capacity(spec.sizes.len() - 1);
        for w in spec.sizes.windows(2) {
            let (wpart, tail) = rest.split_at(w[0] * w[1]);
            let (bpart, tail) = tail.split_at(w[1]);
            rest = tail;
            crate::numerics::ensure_finite("mlp parameters", wpart)?;
            crate::numerics::ensure_finite("mlp parameters", bpart)?;
            layers.push(Linear {
                weight: Mat::from_vec(w[1], w[0], wpart.to_vec())?,
                bias: bpart.to_vec(),
            });
        }
        Mlp::from_layers(spec, layers)
    }

    pub fn save(&self, path: &std::path::Path, seed: u64) -> Result<()> {
        let header = MlpHeader {
            kind: "mlp".into(),
            spec: self.spec.clone(),
            seed,
        };
        container::write_file(path, &header, &self.flat_params())
    }

    /// Loads a network saved with [`Mlp::save`]; returns it with its seed.
    pub fn load(path: &std::path::Path) -> Result<(Self, u64)> {
        let (header, payload): (MlpHeader, _) = container::decode(&container::read_file(path)?)?;
        if header.kind != "mlp" {
            return Err(Error::invalid(format!(
                "{} holds a '{}' artifact, not an mlp",
                path.display(),
                header.kind
            )));
        }
        Ok((Mlp::from_flat(header.spec, &payload)?, header.seed))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(sizes: &[usize], dropout: f64) -> MlpSpec {
        MlpSpec::new(sizes.to_vec(), dropout).unwrap()
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let s = spec(&[1024, 662, 445, 300], 0.5);
        let a = Mlp::init(&s, &mut SeededRng::new(7)).unwrap();
        let b = Mlp::init(&s, &mut SeededRng::new(7)).unwrap();
        assert_eq!(a.flat_params(), b.flat_params());
        for (layer, w) in a.layers().iter().zip(s.sizes.windows(2)) {
            let bound = (6.0 / (w[0] + w[1]) as f64).sqrt();
            assert!(layer.weight.as_slice().iter().all(|x| x.abs() <= bound));
            assert!(layer.bias.iter().all(|&b| b == 0.0));
        }
        let first = a.layers()[0].weight.as_slice();
        let mean = first.iter().sum::<f64>() / first.len() as f64;
        assert!(mean.abs() < 0.005, "mean {mean}");
        assert_eq!(a.mode(), Mode::Train);
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(MlpSpec::new(vec![4, 0, 2], 0.1).is_err());
        assert!(MlpSpec::new(vec![4], 0.1).is_err());
        assert!(MlpSpec::new(vec![4, 2], 1.0).is_err());
    }

    #[test]
    fn geometric_sizes_decrease() {
        assert_eq!(geometric_sizes(64, 16, 3), vec![64, 40, 25, 16]);
        assert_eq!(geometric_sizes(16, 16, 3), vec![16, 16, 16, 16]);
        let s = geometric_sizes(1024, 300, 3);
        assert_eq!(s.first(), Some(&1024));
        assert_eq!(s.last(), Some(&300));
        assert!(s.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn zero_network_outputs_zero() {
        let s = spec(&[3, 4, 4, 2], 0.0);
        let layers = s.sizes.windows(2).map(|w| Linear::zeros(w[0], w[1])).collect();
        let m = Mlp::from_layers(s, layers).unwrap();
        assert_eq!(m.infer(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_path_passes_nonnegative_input() {
        let s = spec(&[3, 3, 3, 3], 0.0);
        let eye = || {
            let mut w = Mat::zeros(3, 3);
            (0..3).for_each(|i| w.set(i, i, 1.0));
            Linear {
                weight: w,
                bias: vec![0.0; 3],
            }
        };
        let m = Mlp::from_layers(s, vec![eye(), eye(), eye()]).unwrap();
        let x = [0.5, 0.0, 2.25];
        let (y, _) = m.forward(&x, &mut SeededRng::new(0)).unwrap();
        assert_eq!(y, x.to_vec());
    }

    #[test]
    fn eval_mode_is_deterministic_and_train_equals_eval_without_dropout() {
        let mut rng = SeededRng::new(5);
        let mut m = Mlp::init(&spec(&[5, 4, 3, 2], 0.5), &mut rng).unwrap();
        m.set_mode(Mode::Eval);
        let x = [0.3, -0.1, 0.8, 1.2, -0.7];
        let (a, _) = m.forward(&x, &mut rng).unwrap();
        let (b, _) = m.forward(&x, &mut rng).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, m.infer(&x).unwrap());

        let m0 = Mlp::init(&spec(&[5, 4, 3, 2], 0.0), &mut rng).unwrap();
        let (train, _) = m0.forward(&x, &mut rng).unwrap();
        assert_eq!(train, m0.infer(&x).unwrap());
    }

    #[test]
    fn hidden_activations_nonnegative() {
        let mut rng = SeededRng::new(9);
        let m = Mlp::init(&spec(&[6, 5, 4, 3], 0.3), &mut rng).unwrap();
        let x: Vec<f64> = (0..6).map(|_| rng.normal()).collect();
        let (_, cache) = m.forward(&x, &mut rng).unwrap();
        for h in &cache.inputs[1..] {
            assert!(h.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn inverted_dropout_mean_matches_eval() {
        // One dropout layer followed by a linear layer: the train-mode output is
        // unbiased for the eval output, so a Monte-Carlo mean must converge to it.
        let mut rng = SeededRng::new(21);
        let m = Mlp::init(&spec(&[4, 64, 3], 0.5), &mut rng).unwrap();
        let x = [0.9, -0.4, 0.2, 1.1];
        let eval = m.infer(&x).unwrap();
        let draws = 10_000;
        let mut mean = vec![0.0; 3];
        for _ in 0..draws {
            let (y, _) = m.forward(&x, &mut rng).unwrap();
            mean.iter_mut().zip(&y).for_each(|(a, b)| *a += b / draws as f64);
        }
        let err = crate::numerics::l2_distance(&mean, &eval).unwrap();
        let scale = crate::numerics::l2_norm(&eval);
        assert!(err <= 0.02 * scale, "err {err} scale {scale}");
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_grads() {
        let mut rng = SeededRng::new(1);
        let m = Mlp::init(&spec(&[4, 3, 3, 2], 0.2), &mut rng).unwrap();
        let (_, cache) = m.forward(&[1.0, 2.0, 3.0, 4.0], &mut rng).unwrap();
        let (gx, grads) = m.backward(&cache, &[0.0, 0.0]).unwrap();
        assert!(gx.iter().all(|&g| g == 0.0));
        assert!(grads.slices().iter().all(|s| s.iter().all(|&g| g == 0.0)));
    }

    #[test]
    fn single_layer_half_square_norm() {
        // L = ½‖y‖², dL/dy = y, dL/dW = y xᵀ
        let mut rng = SeededRng::new(2);
        let m = Mlp::init(&spec(&[3, 2], 0.0), &mut rng).unwrap();
        let x = [0.5, -1.0, 2.0];
        let (y, cache) = m.forward(&x, &mut rng).unwrap();
        let (_, grads) = m.backward(&cache, &y).unwrap();
        for r in 0..2 {
            for c in 0..3 {
                assert!((grads.layers[0].weight.get(r, c) - y[r] * x[c]).abs() < 1e-15);
            }
            assert_eq!(grads.layers[0].bias[r], y[r]);
        }
    }

    fn fd_check(sizes: &[usize], dropout: f64, final_relu: bool, seed: u64) {
        let mut rng = SeededRng::new(seed);
        let mut s = spec(sizes, dropout);
        s.final_relu = final_relu;
        // nonzero biases keep pre-activations off the ReLU kink even when
        // dropout zeroes a unit's whole input
        let mut flat = Mlp::init(&s, &mut rng).unwrap().flat_params();
        flat.iter_mut().for_each(|p| *p += 0.1 * rng.normal());
        let m = Mlp::from_flat(s.clone(), &flat).unwrap();
        let x: Vec<f64> = (0..sizes[0]).map(|_| rng.normal()).collect();
        let w: Vec<f64> = (0..*sizes.last().unwrap()).map(|_| rng.normal()).collect();
        let (_, cache) = m.forward(&x, &mut rng).unwrap();
        let masks = cache.masks().to_vec();
        // scalar objective: w·y
        let objective = |net: &Mlp, input: &[f64]| -> f64 {
            let (y, _) = net.forward_with_masks(input, &masks).unwrap();
            y.iter().zip(&w).map(|(a, b)| a * b).sum()
        };
        let (gx, grads) = m.backward(&cache, &w).unwrap();
        let eps = 1e-5;
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-6);

        let flat = m.flat_params();
        let analytic: Vec<f64> = grads.slices().concat();
        for i in 0..flat.len() {
            let mut plus = flat.clone();
            plus[i] += eps;
            let mut minus = flat.clone();
            minus[i] -= eps;
            let fp = objective(&Mlp::from_flat(s.clone(), &plus).unwrap(), &x);
            let fm = objective(&Mlp::from_flat(s.clone(), &minus).unwrap(), &x);
            let numeric = (fp - fm) / (2.0 * eps);
            assert!(
                rel(numeric, analytic[i]) <= 1e-4,
                "param {i}: fd {numeric} vs analytic {}",
                analytic[i]
            );
        }
        for i in 0..x.len() {
            let mut plus = x.clone();
            plus[i] += eps;
            let mut minus = x.clone();
            minus[i] -= eps;
            let numeric = (objective(&m, &plus) - objective(&m, &minus)) / (2.0 * eps);
            assert!(rel(numeric, gx[i]) <= 1e-4, "input {i}");
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..5 {
            fd_check(&[6, 4, 3, 2], 0.0, false, seed);
            fd_check(&[6, 4, 3, 2], 0.5, false, 100 + seed);
            fd_check(&[5, 7, 3], 0.25, true, 200 + seed);
        }
    }

    #[test]
    fn stale_cache_rejected() {
        let mut rng = SeededRng::new(4);
        let mut m = Mlp::init(&spec(&[3, 3, 2], 0.0), &mut rng).unwrap();
        let (_, cache) = m.forward(&[1.0, 1.0, 1.0], &mut rng).unwrap();
        m.param_slices_mut()[0][0] += 0.1;
        assert!(matches!(
            m.backward(&cache, &[1.0, 1.0]),
            Err(Error::Contract(_))
        ));
        assert!(m.forward(&[1.0, 1.0], &mut rng).is_err());
    }

    #[test]
    fn save_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.bin");
        let mut rng = SeededRng::new(8);
        let m = Mlp::init(&spec(&[4, 3, 2], 0.1), &mut rng).unwrap();
        m.save(&path, 8).unwrap();
        let (back, seed) = Mlp::load(&path).unwrap();
        assert_eq!(seed, 8);
        let x = [0.1, 0.2, -0.3, 0.4];
        assert_eq!(
            m.infer(&x).unwrap().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            back.infer(&x).unwrap().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }
}
