//! Small dense networks in double precision: forward, exact backprop, Adam,
//! a text parameter format, and a finite-difference gradient checker.

use std::fmt::Write as _;

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `y`.
    fn derivative(self, z: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Identity => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Identity => "identity",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            "identity" => Ok(Activation::Identity),
            _ => Err(Error::Argument(format!("unknown activation `{name}`"))),
        }
    }
}

/// Affine map followed by an activation. `weights` is `out x in`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
            activation,
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut R) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let weights = (0..in_dim * out_dim)
            .map(|_| rng.random_range(-limit..limit))
            .collect();
        Self {
            in_dim,
            out_dim,
            weights,
            bias: vec![0.0; out_dim],
            activation,
        }
    }

    fn row(&self, o: usize) -> &[f64] {
        &self.weights[o * self.in_dim..(o + 1) * self.in_dim]
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        let i = 4 * k;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Feed-forward network.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
}

/// Per-layer pre-activations and outputs of one forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    input: Vec<f64>,
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.post.last().map(Vec::as_slice).unwrap_or(&self.input)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Gradients with the same shapes as an [`Mlp`]'s parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weights: vec![0.0; l.weights.len()],
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            axpy(1.0, &b.weights, &mut a.weights);
            axpy(1.0, &b.bias, &mut a.bias);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|w| *w *= factor);
            l.bias.iter_mut().for_each(|b| *b *= factor);
        }
    }

    /// Flat view in layer order, weights before bias.
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.flatten().iter().all(|g| *g == 0.0)
    }
}

impl Mlp {
    /// Builds a network from explicit layers, checking that dimensions chain.
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Argument("network needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.weights.len() != l.in_dim * l.out_dim || l.bias.len() != l.out_dim {
                return Err(Error::Argument(format!("layer {i} parameter shapes do not match its dims")));
            }
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::Argument(format!(
                    "layer {} outputs {} values but layer {} expects {}",
                    i,
                    pair[0].out_dim,
                    i + 1,
                    pair[1].in_dim
                )));
            }
        }
        Ok(Self { layers })
    }

    /// Glorot-initialized network over `dims = [input, hidden.., output]`.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], hidden: Activation, output: Activation, rng: &mut R) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Argument("need at least input and output dims".into()));
        }
        let last = dims.len() - 2;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| Layer::glorot(w[0], w[1], if i == last { output } else { hidden }, rng))
            .collect();
        Self::from_layers(layers)
    }

    /// Like [`Mlp::new`] but restricted to 1-2 hidden layers of 32-64 units.
    pub fn compact<R: Rng + ?Sized>(
        input: usize,
        hidden_units: &[usize],
        output: usize,
        hidden: Activation,
        out_act: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if !(1..=2).contains(&hidden_units.len()) {
            return Err(Error::Argument(format!(
                "compact networks have 1-2 hidden layers, got {}",
                hidden_units.len()
            )));
        }
        if let Some(u) = hidden_units.iter().find(|u| !(32..=64).contains(*u)) {
            return Err(Error::Argument(format!("compact hidden layers have 32-64 units, got {u}")));
        }
        let mut dims = vec![input];
        dims.extend_from_slice(hidden_units);
        dims.push(output);
        Self::new(&dims, hidden, out_act, rng)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::Argument(format!(
                "input has {} values, network expects {}",
                input.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut x = input.to_vec();
        for l in &self.layers {
            x = (0..l.out_dim)
                .map(|o| l.activation.apply(l.bias[o] + dot(l.row(o), &x)))
                .collect();
        }
        Ok(x)
    }

    pub fn forward_trace(&self, input: &[f64]) -> Result<Trace> {
        self.check_input(input)?;
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let x: &[f64] = post.last().map(|v| v.as_slice()).unwrap_or(input);
            let z: Vec<f64> = (0..l.out_dim).map(|o| l.bias[o] + dot(l.row(o), x)).collect();
            let y = z.iter().map(|&v| l.activation.apply(v)).collect();
            pre.push(z);
            post.push(y);
        }
        Ok(Trace {
            input: input.to_vec(),
            pre,
            post,
        })
    }

    /// Reverse-mode gradients of `output . upstream` given a forward trace.
    /// Gradients are accumulated into `grads`; the input gradient is returned.
    pub fn backward_into(&self, trace: &Trace, upstream: &[f64], grads: &mut Gradients) -> Result<Vec<f64>> {
        if upstream.len() != self.output_dim() {
            return Err(Error::Argument(format!(
                "upstream gradient has {} values, network outputs {}",
                upstream.len(),
                self.output_dim()
            )));
        }
        if trace.pre.len() != self.layers.len() || grads.layers.len() != self.layers.len() {
            return Err(Error::Argument("trace or gradient shapes do not match the network".into()));
        }
        let mut g = upstream.to_vec();
        for (idx, l) in self.layers.iter().enumerate().rev() {
            let z = &trace.pre[idx];
            let y = &trace.post[idx];
            let x = if idx == 0 { &trace.input } else { &trace.post[idx - 1] };
            let delta: Vec<f64> = (0..l.out_dim)
                .map(|o| g[o] * l.activation.derivative(z[o], y[o]))
                .collect();
            let lg = &mut grads.layers[idx];
            let mut g_prev = vec![0.0; l.in_dim];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                lg.bias[o] += d;
                axpy(d, x, &mut lg.weights[o * l.in_dim..(o + 1) * l.in_dim]);
                axpy(d, l.row(o), &mut g_prev);
            }
            g = g_prev;
        }
        Ok(g)
    }

    /// Parameter gradients and input gradient of `output . upstream` at `input`.
    pub fn backward(&self, input: &[f64], upstream: &[f64]) -> Result<(Gradients, Vec<f64>)> {
        let trace = self.forward_trace(input)?;
        let mut grads = Gradients::zeros_like(self);
        let input_grad = self.backward_into(&trace, upstream, &mut grads)?;
        Ok((grads, input_grad))
    }

    /// Polyak averaging `self <- tau * source + (1 - tau) * self`.
    pub fn soft_update_from(&mut self, source: &Mlp, tau: f64) {
        for (t, s) in self.layers.iter_mut().zip(&source.layers) {
            for (a, b) in t.weights.iter_mut().zip(&s.weights) {
                *a = tau * b + (1.0 - tau) * *a;
            }
            for (a, b) in t.bias.iter_mut().zip(&s.bias) {
                *a = tau * b + (1.0 - tau) * *a;
            }
        }
    }

    fn param_mut(&mut self, flat: usize) -> &mut f64 {
        let mut k = flat;
        for l in &mut self.layers {
            if k < l.weights.len() {
                return &mut l.weights[k];
            }
            k -= l.weights.len();
            if k < l.bias.len() {
                return &mut l.bias[k];
            }
            k -= l.bias.len();
        }
        panic!("parameter index {flat} out of range");
    }

    /// Text parameter format: optional `# key=value` provenance lines, a
    /// header `mlp dims=a,b,c act=x,y`, then one line per tensor.
    pub fn to_text(&self, provenance: &[(&str, String)]) -> String {
        let mut out = String::new();
        for (k, v) in provenance {
            let _ = writeln!(out, "# {k}={v}");
        }
        let mut dims = vec![self.input_dim().to_string()];
        dims.extend(self.layers.iter().map(|l| l.out_dim.to_string()));
        let acts: Vec<&str> = self.layers.iter().map(|l| l.activation.name()).collect();
        let _ = writeln!(out, "mlp dims={} act={}", dims.join(","), acts.join(","));
        for (i, l) in self.layers.iter().enumerate() {
            let w: Vec<String> = l.weights.iter().map(|v| format!("{v:?}")).collect();
            let b: Vec<String> = l.bias.iter().map(|v| format!("{v:?}")).collect();
            let _ = writeln!(out, "w{i} {}", w.join(" "));
            let _ = writeln!(out, "b{i} {}", b.join(" "));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
        let (hline, header) = lines.next().ok_or(Error::Parse {
            line: 0,
            reason: "empty parameter file".into(),
        })?;
        let perr = |line: usize, reason: String| Error::Parse { line: line + 1, reason };
        let mut dims: Vec<usize> = Vec::new();
        let mut acts: Vec<Activation> = Vec::new();
        let mut parts = header.split_whitespace();
        if parts.next() != Some("mlp") {
            return Err(perr(hline, "header must start with `mlp`".into()));
        }
        for p in parts {
            if let Some(d) = p.strip_prefix("dims=") {
                dims = d
                    .split(',')
                    .map(|x| x.parse::<usize>().map_err(|e| perr(hline, e.to_string())))
                    .collect::<Result<_>>()?;
            } else if let Some(a) = p.strip_prefix("act=") {
                acts = a.split(',').map(Activation::from_name).collect::<Result<_>>()?;
            }
        }
        if dims.len() < 2 || acts.len() != dims.len() - 1 {
            return Err(perr(hline, "header dims/act counts disagree".into()));
        }
        let mut layers = Vec::new();
        for (i, w) in dims.windows(2).enumerate() {
            let mut layer = Layer::zeros(w[0], w[1], acts[i]);
            for (tag, target) in [("w", &mut layer.weights), ("b", &mut layer.bias)] {
                let (ln, line) = lines
                    .next()
                    .ok_or_else(|| perr(hline, format!("missing tensor {tag}{i}")))?;
                let mut toks = line.split_whitespace();
                let name = toks.next().unwrap_or("");
                if name != format!("{tag}{i}") {
                    return Err(perr(ln, format!("expected tensor {tag}{i}, found `{name}`")));
                }
                let values: Vec<f64> = toks
                    .map(|t| t.parse::<f64>().map_err(|e| perr(ln, e.to_string())))
                    .collect::<Result<_>>()?;
                if values.len() != target.len() {
                    return Err(perr(ln, format!("{tag}{i} has {} values, expected {}", values.len(), target.len())));
                }
                *target = values;
            }
            layers.push(layer);
        }
        Self::from_layers(layers)
    }
}

/// Adam moments and hyperparameters for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Gradients,
    v: Gradients,
}

impl AdamState {
    pub fn new(net: &Mlp, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Gradients::zeros_like(net),
            v: Gradients::zeros_like(net),
        }
    }
}

/// One bias-corrected Adam step. Rejects non-finite gradients before
/// touching any parameter.
pub fn adam_update(net: &mut Mlp, grads: &Gradients, state: &mut AdamState) -> Result<()> {
    if grads.layers.len() != net.layers.len() || state.m.layers.len() != net.layers.len() {
        return Err(Error::Argument("gradient/optimizer shapes do not match the network".into()));
    }
    for (idx, (g, l)) in grads.layers.iter().zip(&net.layers).enumerate() {
        if g.weights.len() != l.weights.len() || g.bias.len() != l.bias.len() {
            return Err(Error::Argument(format!("gradient shape mismatch in layer {idx}")));
        }
        if g.weights.iter().chain(&g.bias).any(|v| !v.is_finite()) {
            return Err(Error::Numeric {
                layer: idx,
                reason: "non-finite gradient".into(),
            });
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
        for k in 0..p.len() {
            m[k] = b1 * m[k] + (1.0 - b1) * g[k];
            v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
            let m_hat = m[k] / c1;
            let v_hat = v[k] / c2;
            p[k] -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
        }
    };
    for (idx, l) in net.layers.iter_mut().enumerate() {
        let g = &grads.layers[idx];
        let m = &mut state.m.layers[idx];
        let v = &mut state.v.layers[idx];
        update(&mut l.weights, &g.weights, &mut m.weights, &mut v.weights);
        update(&mut l.bias, &g.bias, &mut m.bias, &mut v.bias);
    }
    Ok(())
}

/// Fixed upstream weighting used by [`gradient_check`]: `u_k = 1 / (k + 1)`.
pub fn check_upstream(out_dim: usize) -> Vec<f64> {
    (0..out_dim).map(|k| 1.0 / (k as f64 + 1.0)).collect()
}

/// Result of comparing analytic gradients with central differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheck {
    pub max_rel_error: f64,
    pub passed: bool,
}

pub const FD_STEP: f64 = 1e-5;

/// Max relative error between `analytic` gradients and central finite
/// differences (step `1e-5`) of `output . upstream`, over every parameter.
pub fn gradient_check_with<F>(net: &Mlp, input: &[f64], upstream: &[f64], analytic: F) -> Result<f64>
where
    F: Fn(&Mlp, &[f64], &[f64]) -> Result<Gradients>,
{
    let grads = analytic(net, input, upstream)?.flatten();
    let objective = |n: &Mlp| -> Result<f64> { Ok(n.forward(input)?.iter().zip(upstream).map(|(y, u)| y * u).sum()) };
    let mut probe = net.clone();
    let mut worst = 0.0_f64;
    for (k, &a) in grads.iter().enumerate() {
        let orig = *probe.param_mut(k);
        *probe.param_mut(k) = orig + FD_STEP;
        let plus = objective(&probe)?;
        *probe.param_mut(k) = orig - FD_STEP;
        let minus = objective(&probe)?;
        *probe.param_mut(k) = orig;
        let numeric = (plus - minus) / (2.0 * FD_STEP);
        let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}

pub fn gradient_check(net: &Mlp, input: &[f64], tolerance: f64) -> Result<GradientCheck> {
    let upstream = check_upstream(net.output_dim());
    let max_rel_error = gradient_check_with(net, input, &upstream, |n, x, u| Ok(n.backward(x, u)?.0))?;
    Ok(GradientCheck {
        max_rel_error,
        passed: max_rel_error < tolerance,
    })
}
