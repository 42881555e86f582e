//! Small fully connected network with tanh hidden layers and a linear output,
//! differentiated by hand.
//!
//! Parameters live in one flat vector. Layer `l` stores its weights as an
//! `inputs x outputs` row-major block followed by `outputs` biases, so the
//! input-major weight rows can skip zero inputs.

use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
    params: Vec<f64>,
}

/// Post-activation values of every layer, input included.
#[derive(Debug, Clone, Default)]
pub struct Activations {
    layers: Vec<Vec<f64>>,
}

impl Activations {
    pub fn output(&self) -> &[f64] {
        self.layers.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

fn layout(sizes: &[usize]) -> (Vec<usize>, usize) {
    let mut offsets = Vec::with_capacity(sizes.len() - 1);
    let mut total = 0;
    for w in sizes.windows(2) {
        offsets.push(total);
        total += w[0] * w[1] + w[1];
    }
    (offsets, total)
}

impl Mlp {
    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "network needs an input and an output layer");
        let (offsets, total) = layout(sizes);
        Self {
            sizes: sizes.to_vec(),
            offsets,
            params: vec![0.0; total],
        }
    }

    /// Weights uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, zero biases.
    pub fn init<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        let mut net = Self::zeros(sizes);
        for l in 0..net.num_layers() {
            let (fan_in, fan_out) = (net.sizes[l], net.sizes[l + 1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let off = net.offsets[l];
            for w in &mut net.params[off..off + fan_in * fan_out] {
                *w = rng.gen_range(-bound..bound);
            }
        }
        net
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Option<Self> {
        let (offsets, total) = layout(sizes);
        (params.len() == total).then(|| Self {
            sizes: sizes.to_vec(),
            offsets,
            params,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn input_len(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_len(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        let mut acts = Activations::default();
        self.forward_cached(input, &mut acts);
        acts.layers.pop().unwrap()
    }

    /// Forward pass keeping every layer's activations for [`Mlp::backward`].
    pub fn forward_cached(&self, input: &[f64], acts: &mut Activations) {
        assert_eq!(input.len(), self.input_len(), "input length mismatch");
        acts.layers.resize_with(self.sizes.len(), Vec::new);
        acts.layers[0].clear();
        acts.layers[0].extend_from_slice(input);
        for l in 0..self.num_layers() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = self.offsets[l];
            let weights = &self.params[off..off + n_in * n_out];
            let bias = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            let (head, tail) = acts.layers.split_at_mut(l + 1);
            let x = &head[l];
            let out = &mut tail[0];
            out.clear();
            out.extend_from_slice(bias);
            for (j, &xj) in x.iter().enumerate() {
                if xj == 0.0 {
                    continue;
                }
                let row = &weights[j * n_out..(j + 1) * n_out];
                for (o, &w) in out.iter_mut().zip(row) {
                    *o += xj * w;
                }
            }
            if l + 1 < self.num_layers() {
                for o in out.iter_mut() {
                    *o = o.tanh();
                }
            }
        }
    }

    /// Accumulates `d loss / d params` into `grad` given `d loss / d output`.
    pub fn backward(&self, acts: &Activations, d_output: &[f64], grad: &mut [f64]) {
        debug_assert_eq!(grad.len(), self.params.len());
        let mut delta = d_output.to_vec();
        let mut next = Vec::new();
        for l in (0..self.num_layers()).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = self.offsets[l];
            let x = &acts.layers[l];
            let (gw, gb) = grad[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
            for (g, &d) in gb.iter_mut().zip(&delta) {
                *g += d;
            }
            for (j, &xj) in x.iter().enumerate() {
                if xj == 0.0 {
                    continue;
                }
                for (g, &d) in gw[j * n_out..(j + 1) * n_out].iter_mut().zip(&delta) {
                    *g += xj * d;
                }
            }
            if l == 0 {
                break;
            }
            // Propagate through the weights and the tanh of layer l.
            let weights = &self.params[off..off + n_in * n_out];
            next.clear();
            next.extend(x.iter().enumerate().map(|(j, &xj)| {
                let row = &weights[j * n_out..(j + 1) * n_out];
                let s: f64 = row.iter().zip(&delta).map(|(w, d)| w * d).sum();
                s * (1.0 - xj * xj)
            }));
            std::mem::swap(&mut delta, &mut next);
        }
    }
}
