//! Dense dueling multi-objective Q-network.
//!
//! ```text
//! x -> [dense+relu]* -> h ; z = [h | w]  (w only when conditioned)
//! advantage: z -> [dense+relu]? -> dense -> A  (|A| x N)
//! value:     z -> [dense+relu]? -> dense -> V  (N)
//! Q(a, n) = V(n) + A(a, n) - mean_a' A(a', n)
//! ```
//!
//! Everything is batched over rows of `f64` matrices. Gradients are computed
//! by hand; the loss only touches the taken action's row.

use std::io::{Read, Write};

use ndarray::{concatenate, s, Array1, Array2, Array3, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MorlError, Result};

/// Architecture of a network. `weight_len == 0` means unconditioned.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetShape {
    pub input_len: usize,
    pub weight_len: usize,
    pub hidden: Vec<usize>,
    /// Hidden width of each stream; 0 makes the streams linear.
    pub stream_hidden: usize,
    pub num_actions: usize,
    pub num_objectives: usize,
}

impl NetShape {
    pub fn conditioned(&self) -> bool {
        self.weight_len > 0
    }

    fn head_input(&self) -> usize {
        self.hidden.last().copied().unwrap_or(self.input_len) + self.weight_len
    }

    /// `(fan_in, fan_out)` of every dense layer in storage order: features,
    /// advantage stream, value stream.
    fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::new();
        let mut prev = self.input_len;
        for &h in &self.hidden {
            dims.push((prev, h));
            prev = h;
        }
        let z = self.head_input();
        for out in [self.num_actions * self.num_objectives, self.num_objectives] {
            if self.stream_hidden > 0 {
                dims.push((z, self.stream_hidden));
                dims.push((self.stream_hidden, out));
            } else {
                dims.push((z, out));
            }
        }
        dims
    }

    fn validate(&self) -> Result<()> {
        if self.input_len == 0 || self.num_actions == 0 || self.num_objectives == 0 {
            return Err(MorlError::Shape("input, action and objective counts must be >= 1".into()));
        }
        if self.hidden.contains(&0) {
            return Err(MorlError::Shape("hidden layer widths must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// `|y - Q|`, averaged over objectives.
    Absolute,
    /// `(y - Q)^2`, averaged over objectives.
    Squared,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    /// `fan_in x fan_out`.
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Layer {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Layer {
            w: Array2::zeros((fan_in, fan_out)),
            b: Array1::zeros(fan_out),
        }
    }
}

/// All learnable parameters. Also used for gradients and momentum slots.
#[derive(Clone, Debug, PartialEq)]
pub struct QParams {
    shape: NetShape,
    layers: Vec<Layer>,
}

/// Per-batch intermediate values kept for the backward pass.
struct Cache {
    /// Inputs of every layer, in storage order.
    inputs: Vec<Array2<f64>>,
    /// Pre-activations of the rectified layers, indexed like `inputs`.
    pre: Vec<Option<Array2<f64>>>,
    q: Array3<f64>,
}

impl QParams {
    pub fn zeros(shape: &NetShape) -> Result<Self> {
        shape.validate()?;
        Ok(QParams {
            shape: shape.clone(),
            layers: shape.layer_dims().into_iter().map(|(i, o)| Layer::zeros(i, o)).collect(),
        })
    }

    /// Uniform fan-in initialization: `sqrt(6 / fan_in)` bound for rectified
    /// layers, `sqrt(3 / fan_in)` for the linear outputs; zero biases.
    pub fn init(shape: &NetShape, seed: u64) -> Result<Self> {
        let mut p = QParams::zeros(shape)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let outputs = p.output_layers();
        for (k, layer) in p.layers.iter_mut().enumerate() {
            let fan_in = layer.w.nrows() as f64;
            let bound = if outputs.contains(&k) { (3.0 / fan_in).sqrt() } else { (6.0 / fan_in).sqrt() };
            layer.w.mapv_inplace(|_| rng.random_range(-bound..bound));
        }
        Ok(p)
    }

    pub fn shape(&self) -> &NetShape {
        &self.shape
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn num_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Flat view of parameter `i` in storage order (weights row-major, then
    /// biases, layer by layer).
    pub fn get_flat(&self, mut i: usize) -> f64 {
        for l in &self.layers {
            if i < l.w.len() {
                return l.w.as_slice().expect("standard layout")[i];
            }
            i -= l.w.len();
            if i < l.b.len() {
                return l.b[i];
            }
            i -= l.b.len();
        }
        panic!("parameter index out of range");
    }

    pub fn set_flat(&mut self, mut i: usize, value: f64) {
        for l in &mut self.layers {
            if i < l.w.len() {
                l.w.as_slice_mut().expect("standard layout")[i] = value;
                return;
            }
            i -= l.w.len();
            if i < l.b.len() {
                l.b[i] = value;
                return;
            }
            i -= l.b.len();
        }
        panic!("parameter index out of range");
    }

    /// Adds `other` element-wise (gradient accumulation).
    pub fn add_assign(&mut self, other: &QParams) -> Result<()> {
        if other.shape != self.shape {
            return Err(MorlError::Shape("parameter shapes differ".into()));
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.w += &b.w;
            a.b += &b.b;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().chain(l.b.iter()).all(|v| v.is_finite()))
    }

    fn features(&self) -> usize {
        self.shape.hidden.len()
    }

    fn stream_layers(&self) -> usize {
        if self.shape.stream_hidden > 0 {
            2
        } else {
            1
        }
    }

    /// Index of the first advantage layer and of the first value layer.
    fn stream_starts(&self) -> (usize, usize) {
        let f = self.features();
        (f, f + self.stream_layers())
    }

    fn output_layers(&self) -> [usize; 2] {
        let (a, v) = self.stream_starts();
        let k = self.stream_layers() - 1;
        [a + k, v + k]
    }

    fn check_inputs(&self, obs: &ArrayView2<f64>, weights: Option<&ArrayView2<f64>>) -> Result<()> {
        MorlError::check_dim(self.shape.input_len, obs.ncols())?;
        match (self.shape.conditioned(), weights) {
            (true, Some(w)) => {
                MorlError::check_dim(self.shape.weight_len, w.ncols())?;
                MorlError::check_dim(obs.nrows(), w.nrows())
            }
            (false, None) => Ok(()),
            (true, None) => Err(MorlError::Shape("conditioned network needs a weight input".into())),
            (false, Some(_)) => Err(MorlError::Shape("unconditioned network takes no weight input".into())),
        }
    }

    fn run(&self, obs: ArrayView2<f64>, weights: Option<ArrayView2<f64>>, keep: bool) -> Result<Cache> {
        self.check_inputs(&obs, weights.as_ref())?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = obs.to_owned();
        for l in &self.layers[..self.features()] {
            let p = h.dot(&l.w) + &l.b;
            let out = p.mapv(|v| v.max(0.0));
            if keep {
                inputs.push(h);
                pre.push(Some(p));
            }
            h = out;
        }
        let z = match weights {
            Some(w) => concatenate![Axis(1), h, w],
            None => h,
        };
        let (a0, v0) = self.stream_starts();
        let mut stream = |start: usize| -> Array2<f64> {
            let mut x = z.clone();
            for k in 0..self.stream_layers() {
                let l = &self.layers[start + k];
                let p = x.dot(&l.w) + &l.b;
                let last = k + 1 == self.stream_layers();
                let out = if last { p.clone() } else { p.mapv(|v| v.max(0.0)) };
                if keep {
                    inputs.push(x);
                    pre.push((!last).then_some(p));
                }
                x = out;
            }
            x
        };
        let adv = stream(a0);
        let val = stream(v0);
        let (b, na, n) = (obs.nrows(), self.shape.num_actions, self.shape.num_objectives);
        let adv = adv.into_shape_with_order((b, na, n)).expect("advantage width is |A| x N");
        let mean = adv.mean_axis(Axis(1)).expect("at least one action");
        let q = adv - &mean.insert_axis(Axis(1)) + &val.insert_axis(Axis(1));
        Ok(Cache { inputs, pre, q })
    }

    /// Q-values, shape `(batch, actions, objectives)`.
    pub fn forward(&self, obs: ArrayView2<f64>, weights: Option<ArrayView2<f64>>) -> Result<Array3<f64>> {
        Ok(self.run(obs, weights, false)?.q)
    }

    /// Value-stream output alone, shape `(batch, objectives)`.
    pub fn value_stream(&self, obs: ArrayView2<f64>, weights: Option<ArrayView2<f64>>) -> Result<Array2<f64>> {
        let mut only_value = self.clone();
        let (a0, _) = self.stream_starts();
        let out = self.output_layers()[0];
        for l in &mut only_value.layers[a0..=out] {
            l.w.fill(0.0);
            l.b.fill(0.0);
        }
        let q = only_value.forward(obs, weights)?;
        Ok(q.index_axis(Axis(1), 0).to_owned())
    }

    /// Loss and its gradient. Row `i` contributes
    /// `scale[i] * mean_n loss(targets[i, n] - Q[i, actions[i], n])`.
    /// Returns `(loss, gradients, Q[i, actions[i], :])`.
    pub fn loss_and_grad(
        &self,
        obs: ArrayView2<f64>,
        weights: Option<ArrayView2<f64>>,
        actions: &[usize],
        targets: ArrayView2<f64>,
        scale: &[f64],
        kind: LossKind,
    ) -> Result<(f64, QParams, Array2<f64>)> {
        let (b, na, n) = (obs.nrows(), self.shape.num_actions, self.shape.num_objectives);
        MorlError::check_dim(b, actions.len())?;
        MorlError::check_dim(b, scale.len())?;
        MorlError::check_dim(b, targets.nrows())?;
        MorlError::check_dim(n, targets.ncols())?;
        if targets.iter().any(|v| !v.is_finite()) {
            return Err(MorlError::NonFinite("training targets"));
        }
        if let Some(&a) = actions.iter().find(|&&a| a >= na) {
            return Err(MorlError::InvalidAction { action: a, count: na });
        }
        let cache = self.run(obs, weights, true)?;
        let mut taken = Array2::zeros((b, n));
        let mut dq = Array2::<f64>::zeros((b, n));
        let mut loss = 0.0;
        for i in 0..b {
            for k in 0..n {
                let q = cache.q[[i, actions[i], k]];
                taken[[i, k]] = q;
                let e = q - targets[[i, k]];
                let (l, d) = match kind {
                    LossKind::Absolute => (e.abs(), if e > 0.0 { 1.0 } else if e < 0.0 { -1.0 } else { 0.0 }),
                    LossKind::Squared => (e * e, 2.0 * e),
                };
                loss += scale[i] * l / n as f64;
                dq[[i, k]] = scale[i] * d / n as f64;
            }
        }
        // dueling head: dV = dQ; dA(a) = dQ * ([a = taken] - 1/|A|)
        let dval = dq.clone();
        let mut dadv = Array2::<f64>::zeros((b, na * n));
        for i in 0..b {
            for a in 0..na {
                let ind = if a == actions[i] { 1.0 } else { 0.0 };
                for k in 0..n {
                    dadv[[i, a * n + k]] = dq[[i, k]] * (ind - 1.0 / na as f64);
                }
            }
        }
        let mut grads = QParams::zeros(&self.shape)?;
        let (a0, v0) = self.stream_starts();
        let dz_adv = self.backprop_range(&cache, &mut grads, a0, self.stream_layers(), dadv);
        let dz_val = self.backprop_range(&cache, &mut grads, v0, self.stream_layers(), dval);
        let dz = dz_adv + dz_val;
        let h_len = self.shape.head_input() - self.shape.weight_len;
        let dh = dz.slice(s![.., ..h_len]).to_owned();
        if self.features() > 0 {
            self.backprop_range(&cache, &mut grads, 0, self.features(), dh);
        }
        Ok((loss, grads, taken))
    }

    /// Backpropagates `dout` through layers `start..start+count` and returns
    /// the gradient with respect to the first layer's input.
    fn backprop_range(&self, cache: &Cache, grads: &mut QParams, start: usize, count: usize, dout: Array2<f64>) -> Array2<f64> {
        let mut d = dout;
        for k in (start..start + count).rev() {
            if let Some(p) = &cache.pre[k] {
                d.zip_mut_with(p, |g, &v| {
                    if v <= 0.0 {
                        *g = 0.0
                    }
                });
            }
            let input = &cache.inputs[k];
            grads.layers[k].w.assign(&input.t().dot(&d));
            grads.layers[k].b = d.sum_axis(Axis(0));
            d = d.dot(&self.layers[k].w.t());
        }
        d
    }

    /// Writes the parameters in the flat binary format:
    /// magic `MORLQNET`, u32 version, then u64 `input_len weight_len
    /// stream_hidden num_actions num_objectives hidden_count hidden...`,
    /// then every layer's weights (row-major) and biases as f64, all
    /// little-endian.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(b"MORLQNET")?;
        out.write_all(&1u32.to_le_bytes())?;
        let s = &self.shape;
        let mut header = vec![s.input_len, s.weight_len, s.stream_hidden, s.num_actions, s.num_objectives, s.hidden.len()];
        header.extend(&s.hidden);
        for v in header {
            out.write_all(&(v as u64).to_le_bytes())?;
        }
        for l in &self.layers {
            for v in l.w.iter().chain(l.b.iter()) {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != b"MORLQNET" {
            return Err(MorlError::Parse("not a parameter file".into()));
        }
        let mut b4 = [0u8; 4];
        input.read_exact(&mut b4)?;
        if u32::from_le_bytes(b4) != 1 {
            return Err(MorlError::Parse("unsupported parameter file version".into()));
        }
        let mut next = || -> Result<u64> {
            let mut b8 = [0u8; 8];
            input.read_exact(&mut b8)?;
            Ok(u64::from_le_bytes(b8))
        };
        let mut h = [0usize; 6];
        for v in &mut h {
            *v = next()? as usize;
        }
        if h[5] > 1024 {
            return Err(MorlError::Parse("implausible layer count".into()));
        }
        let hidden = (0..h[5]).map(|_| next().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
        let shape = NetShape {
            input_len: h[0],
            weight_len: h[1],
            stream_hidden: h[2],
            num_actions: h[3],
            num_objectives: h[4],
            hidden,
        };
        let mut p = QParams::zeros(&shape)?;
        for l in &mut p.layers {
            for v in l.w.iter_mut().chain(l.b.iter_mut()) {
                *v = f64::from_bits(next()?);
            }
        }
        Ok(p)
    }
}

/// Network size and optimizer settings as read from a config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    pub hidden: Vec<usize>,
    pub stream_hidden: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub nesterov: bool,
}

impl Default for NetConfig {
    fn default() -> Self {
        let sgd = SgdConfig::default();
        NetConfig {
            hidden: vec![64],
            stream_hidden: 64,
            learning_rate: sgd.learning_rate,
            momentum: sgd.momentum,
            nesterov: sgd.nesterov,
        }
    }
}

impl NetConfig {
    pub fn shape(&self, input_len: usize, weight_len: usize, num_actions: usize, num_objectives: usize) -> NetShape {
        NetShape {
            input_len,
            weight_len,
            hidden: self.hidden.clone(),
            stream_hidden: self.stream_hidden,
            num_actions,
            num_objectives,
        }
    }

    pub fn sgd(&self) -> SgdConfig {
        SgdConfig {
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            nesterov: self.nesterov,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden.contains(&0) {
            return Err(MorlError::config("net.hidden", "layer widths must be >= 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(MorlError::config("net.learning_rate", "must be > 0"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(MorlError::config("net.momentum", "must be in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub nesterov: bool,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            learning_rate: 0.02,
            momentum: 0.9,
            nesterov: true,
        }
    }
}

/// Online network, target copy and optimizer state.
#[derive(Clone, Debug, PartialEq)]
pub struct QNetwork {
    online: QParams,
    target: QParams,
    velocity: QParams,
    sgd: SgdConfig,
}

impl QNetwork {
    pub fn new(shape: &NetShape, sgd: SgdConfig, seed: u64) -> Result<Self> {
        let online = QParams::init(shape, seed)?;
        Ok(QNetwork {
            target: online.clone(),
            velocity: QParams::zeros(shape)?,
            online,
            sgd,
        })
    }

    pub fn from_params(online: QParams, sgd: SgdConfig) -> Result<Self> {
        let velocity = QParams::zeros(online.shape())?;
        Ok(QNetwork {
            target: online.clone(),
            online,
            velocity,
            sgd,
        })
    }

    pub fn shape(&self) -> &NetShape {
        self.online.shape()
    }

    pub fn online(&self) -> &QParams {
        &self.online
    }

    pub fn target(&self) -> &QParams {
        &self.target
    }

    pub fn online_mut(&mut self) -> &mut QParams {
        &mut self.online
    }

    /// One SGD step. With Nesterov momentum:
    /// `v = mu v + g; p -= lr (g + mu v)`; without: `p -= lr v`.
    pub fn apply_update(&mut self, grads: &QParams) -> Result<()> {
        if grads.shape() != self.online.shape() {
            return Err(MorlError::Shape("gradient shape differs from parameters".into()));
        }
        let SgdConfig { learning_rate: lr, momentum: mu, nesterov } = self.sgd;
        for ((p, v), g) in self.online.layers.iter_mut().zip(&mut self.velocity.layers).zip(&grads.layers) {
            for (pp, (vv, gg)) in p
                .w
                .iter_mut()
                .chain(p.b.iter_mut())
                .zip(v.w.iter_mut().chain(v.b.iter_mut()).zip(g.w.iter().chain(g.b.iter())))
            {
                *vv = mu * *vv + gg;
                *pp -= if nesterov { lr * (gg + mu * *vv) } else { lr * *vv };
            }
        }
        if !self.online.is_finite() {
            return Err(MorlError::NonFinite("network parameters"));
        }
        Ok(())
    }

    pub fn sync_target(&mut self) {
        self.target.clone_from(&self.online);
    }

    /// Q-values of one observation, shape `(actions, objectives)`.
    pub fn q_values(&self, obs: &[f64], weight: Option<&[f64]>) -> Result<Array2<f64>> {
        let o = ArrayView2::from_shape((1, obs.len()), obs).expect("row vector");
        let w = weight.map(|w| ArrayView2::from_shape((1, w.len()), w).expect("row vector"));
        Ok(self.online.forward(o, w)?.index_axis_move(Axis(0), 0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn small_shape(conditioned: bool, stream_hidden: usize) -> NetShape {
        NetShape {
            input_len: 5,
            weight_len: if conditioned { 2 } else { 0 },
            hidden: vec![6, 4],
            stream_hidden,
            num_actions: 3,
            num_objectives: 2,
        }
    }

    fn random_batch(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn zero_advantage_gives_q_equal_v() {
        let shape = small_shape(false, 4);
        let mut p = QParams::init(&shape, 1).unwrap();
        let out = p.output_layers()[0];
        p.layers[out].w.fill(0.0);
        p.layers[out].b.fill(0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = random_batch(4, 5, &mut rng);
        let q = p.forward(x.view(), None).unwrap();
        let v = p.value_stream(x.view(), None).unwrap();
        for b in 0..4 {
            for a in 0..3 {
                for n in 0..2 {
                    assert!((q[[b, a, n]] - v[[b, n]]).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn single_action_q_is_v() {
        let shape = NetShape { num_actions: 1, ..small_shape(true, 0) };
        let p = QParams::init(&shape, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_batch(3, 5, &mut rng);
        let w = random_batch(3, 2, &mut rng);
        let q = p.forward(x.view(), Some(w.view())).unwrap();
        let v = p.value_stream(x.view(), Some(w.view())).unwrap();
        assert_eq!(q.index_axis(Axis(1), 0), v);
    }

    #[test]
    fn weight_input_is_required_iff_conditioned() {
        let x = Array2::zeros((1, 5));
        let w = Array2::zeros((1, 2));
        let c = QParams::init(&small_shape(true, 0), 0).unwrap();
        assert!(c.forward(x.view(), None).is_err());
        let u = QParams::init(&small_shape(false, 0), 0).unwrap();
        assert!(u.forward(x.view(), Some(w.view())).is_err());
        assert!(u.forward(Array2::zeros((1, 4)).view(), None).is_err());
    }

    #[test]
    fn zero_error_gives_zero_gradient() {
        let p = QParams::init(&small_shape(true, 3), 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_batch(2, 5, &mut rng);
        let w = random_batch(2, 2, &mut rng);
        let q = p.forward(x.view(), Some(w.view())).unwrap();
        let targets = q.index_axis(Axis(1), 1).to_owned();
        let (loss, g, _) = p
            .loss_and_grad(x.view(), Some(w.view()), &[1, 1], targets.view(), &[0.5, 0.5], LossKind::Absolute)
            .unwrap();
        assert_eq!(loss, 0.0);
        assert!((0..g.num_parameters()).all(|i| g.get_flat(i) == 0.0));
    }

    #[test]
    fn non_finite_targets_are_rejected() {
        let p = QParams::init(&small_shape(false, 0), 5).unwrap();
        let x = Array2::zeros((1, 5));
        let t = Array2::from_elem((1, 2), f64::NAN);
        assert!(matches!(
            p.loss_and_grad(x.view(), None, &[0], t.view(), &[1.0], LossKind::Squared),
            Err(MorlError::NonFinite(_))
        ));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for (seed, kind, cond, sh) in [
            (1, LossKind::Absolute, true, 3),
            (2, LossKind::Squared, false, 0),
            (3, LossKind::Squared, true, 0),
        ] {
            let p = QParams::init(&small_shape(cond, sh), seed).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_batch(3, 5, &mut rng);
            let w = cond.then(|| random_batch(3, 2, &mut rng));
            let y = random_batch(3, 2, &mut rng) * 3.0;
            let acts = [0, 2, 1];
            let scale = [0.2, 0.3, 0.5];
            let wv = w.as_ref().map(|w| w.view());
            let (_, g, _) = p.loss_and_grad(x.view(), wv, &acts, y.view(), &scale, kind).unwrap();
            let h = 1e-5;
            for i in 0..p.num_parameters() {
                let mut plus = p.clone();
                plus.set_flat(i, p.get_flat(i) + h);
                let mut minus = p.clone();
                minus.set_flat(i, p.get_flat(i) - h);
                let lp = plus.loss_and_grad(x.view(), wv, &acts, y.view(), &scale, kind).unwrap().0;
                let lm = minus.loss_and_grad(x.view(), wv, &acts, y.view(), &scale, kind).unwrap().0;
                let fd = (lp - lm) / (2.0 * h);
                let an = g.get_flat(i);
                assert!((fd - an).abs() <= 1e-4 * fd.abs().max(an.abs()).max(1e-6), "param {i}: {an} vs {fd}");
            }
        }
    }

    #[test]
    fn nesterov_step_by_hand() {
        let shape = NetShape {
            input_len: 1,
            weight_len: 0,
            hidden: vec![],
            stream_hidden: 0,
            num_actions: 1,
            num_objectives: 1,
        };
        let mut net = QNetwork::new(&shape, SgdConfig::default(), 0).unwrap();
        let before = net.online().clone();
        let mut g = QParams::zeros(&shape).unwrap();
        net.apply_update(&g).unwrap();
        assert_eq!(net.online(), &before);
        g.set_flat(0, 1.0);
        net.apply_update(&g).unwrap();
        // v = 1, step = 0.02 * (1 + 0.9 * 1)
        assert!((net.online().get_flat(0) - (before.get_flat(0) - 0.038)).abs() < 1e-15);
        net.apply_update(&g).unwrap();
        // v = 1.9, step = 0.02 * (1 + 0.9 * 1.9)
        assert!((net.online().get_flat(0) - (before.get_flat(0) - 0.038 - 0.0542)).abs() < 1e-14);
    }

    #[test]
    fn target_sync() {
        let shape = small_shape(false, 0);
        let mut net = QNetwork::new(&shape, SgdConfig::default(), 4).unwrap();
        let mut g = QParams::zeros(&shape).unwrap();
        g.set_flat(3, 1.0);
        net.apply_update(&g).unwrap();
        assert_ne!(net.online(), net.target());
        net.sync_target();
        assert_eq!(net.online(), net.target());
        net.sync_target();
        assert_eq!(net.online(), net.target());
    }

    #[test]
    fn save_load_round_trip() {
        let p = QParams::init(&small_shape(true, 3), 9).unwrap();
        let mut bytes = Vec::new();
        p.write_to(&mut bytes).unwrap();
        assert_eq!(bytes.len(), 8 + 4 + 8 * (6 + 2) + 8 * p.num_parameters());
        assert_eq!(QParams::read_from(bytes.as_slice()).unwrap(), p);
        assert!(QParams::read_from(&b"NOTANET!"[..]).is_err());
    }

    #[test]
    fn identical_seeds_identical_updates() {
        let shape = small_shape(true, 3);
        let run = || {
            let mut net = QNetwork::new(&shape, SgdConfig::default(), 11).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            for _ in 0..20 {
                let x = random_batch(4, 5, &mut rng);
                let w = random_batch(4, 2, &mut rng);
                let y = random_batch(4, 2, &mut rng);
                let (_, g, _) = net
                    .online()
                    .loss_and_grad(x.view(), Some(w.view()), &[0, 1, 2, 0], y.view(), &[0.25; 4], LossKind::Absolute)
                    .unwrap();
                net.apply_update(&g).unwrap();
            }
            net
        };
        assert_eq!(run(), run());
    }
}
