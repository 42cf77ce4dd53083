use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::Point3;
use crate::sampling::DataSample;
use crate::solver::Adam;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Layer {
    pub(crate) inputs: usize,
    pub(crate) outputs: usize,
    /// Row-major `outputs x inputs`.
    pub(crate) weights: Vec<f64>,
    pub(crate) bias: Vec<f64>,
}

/// Feed-forward field on `concat(z, x)` with softplus hidden activations and
/// a linear scalar output.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpField {
    latent_dim: usize,
    layers: Vec<Layer>,
}

fn softplus(v: f64) -> f64 {
    v.max(0.0) + (-v.abs()).exp().ln_1p()
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Activations kept for the backward pass.
struct Tape {
    /// Input to each layer (first entry is the network input).
    inputs: Vec<Vec<f64>>,
    /// Pre-activations of each hidden layer.
    pre: Vec<Vec<f64>>,
    output: f64,
}

impl MlpField {
    /// Build from layer widths `[3 + K, h_1, ..., h_n, 1]` and flat parameters.
    pub fn from_layers(latent_dim: usize, widths: &[usize], params: Vec<(Vec<f64>, Vec<f64>)>) -> Result<Self> {
        if widths.len() < 3 {
            return Err(Error::Precondition("an MLP field needs at least one hidden layer".into()));
        }
        if widths[0] != latent_dim + 3 || *widths.last().unwrap() != 1 {
            return Err(Error::Precondition(format!(
                "layer widths {widths:?} must start at {} and end at 1",
                latent_dim + 3
            )));
        }
        if widths.contains(&0) {
            return Err(Error::Precondition("layer widths must be positive".into()));
        }
        if params.len() != widths.len() - 1 {
            return Err(Error::dim("MLP layer blocks", widths.len() - 1, params.len()));
        }
        let mut layers = Vec::with_capacity(params.len());
        for (l, (w, b)) in params.into_iter().enumerate() {
            let (i, o) = (widths[l], widths[l + 1]);
            if w.len() != i * o {
                return Err(Error::dim("MLP weight block", i * o, w.len()));
            }
            if b.len() != o {
                return Err(Error::dim("MLP bias block", o, b.len()));
            }
            if w.iter().chain(&b).any(|v| !v.is_finite()) {
                return Err(Error::Precondition("MLP parameters must be finite".into()));
            }
            layers.push(Layer {
                inputs: i,
                outputs: o,
                weights: w,
                bias: b,
            });
        }
        Ok(MlpField { latent_dim, layers })
    }

    /// Gaussian-initialized network with weight stddev `scale / sqrt(fan_in)`.
    pub fn random(latent_dim: usize, hidden: &[usize], seed: u64, scale: f64) -> Result<Self> {
        let mut widths = vec![latent_dim + 3];
        widths.extend_from_slice(hidden);
        widths.push(1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = widths
            .windows(2)
            .map(|w| {
                let normal = Normal::new(0.0, scale / (w[0] as f64).sqrt()).expect("valid stddev");
                let weights = (0..w[0] * w[1]).map(|_| normal.sample(&mut rng)).collect();
                let bias = (0..w[1]).map(|_| 0.1 * normal.sample(&mut rng)).collect();
                (weights, bias)
            })
            .collect();
        Self::from_layers(latent_dim, &widths, params)
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.layers[0].inputs];
        w.extend(self.layers.iter().map(|l| l.outputs));
        w
    }

    pub(crate) fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    fn forward(&self, z: &[f64], x: Point3) -> Tape {
        let mut input: Vec<f64> = z.iter().copied().chain([x.x, x.y, x.z]).collect();
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len() - 1);
        let last = self.layers.len() - 1;
        let mut output = 0.0;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut out = layer.bias.clone();
            for (o, row) in out.iter_mut().zip(layer.weights.chunks_exact(layer.inputs)) {
                *o += row.iter().zip(&input).map(|(w, a)| w * a).sum::<f64>();
            }
            inputs.push(input);
            if l == last {
                output = out[0];
                input = Vec::new();
            } else {
                input = out.iter().map(|&v| softplus(v)).collect();
                pre.push(out);
            }
        }
        Tape { inputs, pre, output }
    }

    /// Backpropagate `d output`; optionally accumulate parameter gradients.
    /// Returns the gradient with respect to the network input.
    fn backward(&self, tape: &Tape, seed: f64, mut param_grad: Option<&mut [f64]>) -> Vec<f64> {
        let mut delta = vec![seed];
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for l in &self.layers {
            offsets.push(off);
            off += l.weights.len() + l.bias.len();
        }
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let input = &tape.inputs[l];
            if let Some(g) = param_grad.as_deref_mut() {
                let base = offsets[l];
                for (o, d) in delta.iter().enumerate() {
                    let row = &mut g[base + o * layer.inputs..base + (o + 1) * layer.inputs];
                    for (gw, a) in row.iter_mut().zip(input) {
                        *gw += d * a;
                    }
                }
                let bias = &mut g[base + layer.weights.len()..base + layer.weights.len() + layer.outputs];
                for (gb, d) in bias.iter_mut().zip(&delta) {
                    *gb += d;
                }
            }
            let mut back = vec![0.0; layer.inputs];
            for (d, row) in delta.iter().zip(layer.weights.chunks_exact(layer.inputs)) {
                for (b, w) in back.iter_mut().zip(row) {
                    *b += d * w;
                }
            }
            if l > 0 {
                for (b, p) in back.iter_mut().zip(&tape.pre[l - 1]) {
                    *b *= sigmoid(*p);
                }
            }
            delta = back;
        }
        delta
    }

    pub(crate) fn value(&self, z: &[f64], x: Point3) -> f64 {
        self.forward(z, x).output
    }

    /// Value and `df/dz` by reverse-mode differentiation.
    pub(crate) fn value_and_grads(&self, z: &[f64], x: Point3) -> (f64, Vec<f64>) {
        let tape = self.forward(z, x);
        let mut g = self.backward(&tape, 1.0, None);
        g.truncate(self.latent_dim);
        (tape.output, g)
    }

    /// `df/dx` by reverse-mode differentiation.
    pub fn grad_input_spatial(&self, z: &[f64], x: Point3) -> Result<Point3> {
        if z.len() != self.latent_dim {
            return Err(Error::dim("latent vector", self.latent_dim, z.len()));
        }
        let tape = self.forward(z, x);
        let g = self.backward(&tape, 1.0, None);
        let k = self.latent_dim;
        Ok(Point3::new(g[k], g[k + 1], g[k + 2]))
    }

    /// Gradient of `f(z, x)` with respect to every weight and bias, flattened
    /// layer by layer (weights row-major, then bias).
    pub fn grad_weights(&self, z: &[f64], x: Point3) -> Result<Vec<f64>> {
        if z.len() != self.latent_dim {
            return Err(Error::dim("latent vector", self.latent_dim, z.len()));
        }
        let tape = self.forward(z, x);
        let mut g = vec![0.0; self.parameter_count()];
        self.backward(&tape, 1.0, Some(&mut g));
        Ok(g)
    }

    pub fn parameters(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }

    pub fn set_parameters(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.parameter_count() {
            return Err(Error::dim("MLP parameters", self.parameter_count(), flat.len()));
        }
        let mut off = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&flat[off..off + nw]);
            off += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&flat[off..off + nb]);
            off += nb;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct AutoDecoderConfig {
    pub hidden: Vec<usize>,
    pub latent_dim: usize,
    pub iterations: usize,
    /// Samples drawn per shape per iteration.
    pub batch_per_shape: usize,
    pub step: f64,
    /// Weight of the `|z|^2` prior on every latent code.
    pub latent_regularization: f64,
    pub seed: u64,
}

impl Default for AutoDecoderConfig {
    fn default() -> Self {
        AutoDecoderConfig {
            hidden: vec![64, 64],
            latent_dim: 8,
            iterations: 2000,
            batch_per_shape: 256,
            step: 1e-3,
            latent_regularization: 1e-4,
            seed: 0,
        }
    }
}

impl MlpField {
    /// Jointly train network weights and one latent code per shape with the
    /// clamp-free L1 reconstruction loss. Returns the trained field and the
    /// per-shape latents.
    pub fn fit_auto_decoder(
        shapes: &[Vec<DataSample>],
        config: &AutoDecoderConfig,
    ) -> Result<(MlpField, Vec<Vec<f64>>)> {
        if shapes.is_empty() || shapes.iter().any(|s| s.is_empty()) {
            return Err(Error::Precondition("auto-decoder needs non-empty sample sets".into()));
        }
        let k = config.latent_dim;
        let mut field = MlpField::random(k, &config.hidden, config.seed, 1.0)?;
        let mut latents = vec![vec![0.0; k]; shapes.len()];
        let np = field.parameter_count();
        let mut weight_opt = Adam::new(np, config.step);
        let mut latent_opts: Vec<Adam> = (0..shapes.len()).map(|_| Adam::new(k, config.step)).collect();

        for it in 0..config.iterations {
            let grads: Vec<(Vec<f64>, Vec<f64>, f64)> = shapes
                .par_iter()
                .enumerate()
                .map(|(s, samples)| {
                    let mut gw = vec![0.0; np];
                    let mut gz = vec![0.0; k];
                    let mut loss = 0.0;
                    let n = samples.len();
                    let b = config.batch_per_shape.min(n);
                    // Deterministic strided minibatch.
                    let start = (it * b + s * 7919) % n;
                    for j in 0..b {
                        let sample = &samples[(start + j) % n];
                        let tape = field.forward(&latents[s], sample.point);
                        let r = tape.output - sample.distance;
                        loss += r.abs();
                        let seed = if r > 0.0 {
                            1.0 / b as f64
                        } else if r < 0.0 {
                            -1.0 / b as f64
                        } else {
                            0.0
                        };
                        let gin = field.backward(&tape, seed, Some(&mut gw));
                        for (g, v) in gz.iter_mut().zip(&gin[..k]) {
                            *g += v;
                        }
                    }
                    for (g, z) in gz.iter_mut().zip(&latents[s]) {
                        *g += 2.0 * config.latent_regularization * z;
                    }
                    (gw, gz, loss / b as f64)
                })
                .collect();
            let mut gw_total = vec![0.0; np];
            let mut loss = 0.0;
            for (gw, _, l) in &grads {
                for (t, g) in gw_total.iter_mut().zip(gw) {
                    *t += g;
                }
                loss += l;
            }
            if !loss.is_finite() {
                return Err(Error::Optimization {
                    iteration: it,
                    message: "auto-decoder loss is not finite".into(),
                });
            }
            let mut params = field.parameters();
            weight_opt.step(&mut params, &gw_total);
            field.set_parameters(&params)?;
            for ((z, opt), (_, gz, _)) in latents.iter_mut().zip(&mut latent_opts).zip(&grads) {
                opt.step(z, gz);
            }
        }
        Ok((field, latents))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn fd_latent(f: &MlpField, z: &[f64], x: Point3, k: usize, h: f64) -> f64 {
        let mut zp = z.to_vec();
        let mut zm = z.to_vec();
        zp[k] += h;
        zm[k] -= h;
        (f.value(&zp, x) - f.value(&zm, x)) / (2.0 * h)
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
    }

    #[test]
    fn latent_gradient_matches_central_differences() {
        let f = MlpField::random(8, &[64, 64], 21, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let z: Vec<f64> = (0..8).map(|_| rng.random_range(-0.5..0.5)).collect();
            let x = Point3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let (_, g) = f.value_and_grads(&z, x);
            for k in 0..8 {
                let fd = fd_latent(&f, &z, x, k, 1e-4);
                assert!(rel_err(g[k], fd) < 1e-4, "k={k}: {} vs {fd}", g[k]);
            }
        }
    }

    #[test]
    fn spatial_and_weight_gradients_match_central_differences() {
        let mut f = MlpField::random(2, &[6, 5], 8, 1.0).unwrap();
        let z = [0.2, -0.3];
        let x = Point3::new(0.1, -0.4, 0.3);
        let gs = f.grad_input_spatial(&z, x).unwrap();
        let fd = crate::field::central_difference(|p| f.value(&z, p), x, 1e-5);
        assert!((gs - fd).norm() < 1e-8);

        let gw = f.grad_weights(&z, x).unwrap();
        let params = f.parameters();
        for i in (0..params.len()).step_by(3) {
            let mut p = params.clone();
            p[i] += 1e-5;
            f.set_parameters(&p).unwrap();
            let up = f.value(&z, x);
            p[i] -= 2e-5;
            f.set_parameters(&p).unwrap();
            let down = f.value(&z, x);
            f.set_parameters(&params).unwrap();
            let fd = (up - down) / 2e-5;
            assert!((fd - gw[i]).abs() < 1e-7, "param {i}: {fd} vs {}", gw[i]);
        }
    }

    #[test]
    fn softplus_is_stable_for_large_inputs() {
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0 && softplus(-1000.0) < 1e-300);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn rejects_inconsistent_widths() {
        assert!(MlpField::from_layers(1, &[4, 1], vec![(vec![0.0; 4], vec![0.0])]).is_err());
        assert!(MlpField::from_layers(1, &[5, 2, 1], vec![(vec![0.0; 8], vec![0.0; 2]), (vec![0.0; 2], vec![0.0])]).is_err());
    }

    #[test]
    fn auto_decoder_learns_two_spheres() {
        use crate::field::{AnalyticField, Field};
        use crate::geom::BoundingBox;
        use crate::sampling::near_surface_samples;
        let bbox = BoundingBox::cube(1.0);
        let shapes: Vec<Vec<DataSample>> = [0.4, 0.6]
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                let f = Field::from(AnalyticField::sphere(Point3::ZERO, r));
                near_surface_samples(&f, &[], &bbox, 2000, 0.9, 0.05, i as u64).unwrap()
            })
            .collect();
        let config = AutoDecoderConfig {
            hidden: vec![32, 32],
            latent_dim: 2,
            iterations: 4000,
            batch_per_shape: 256,
            step: 3e-3,
            ..Default::default()
        };
        let (field, latents) = MlpField::fit_auto_decoder(&shapes, &config).unwrap();
        for (samples, z) in shapes.iter().zip(&latents) {
            let mae: f64 =
                samples.iter().map(|s| (field.value(z, s.point) - s.distance).abs()).sum::<f64>() / samples.len() as f64;
            assert!(mae < 0.03, "mean abs error {mae}");
        }
    }
}
