//! Successor networks for continuous states: a tanh MLP with one linear head
//! per action, a target copy, RMSprop and inverted dropout.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView1, Axis};
use rand::Rng;

use crate::domain::{argmax, Action, N_ACTIONS};
use crate::error::{BsrError, Result};

const MAGIC: &[u8; 4] = b"BSRN";
const VERSION: u32 = 1;

/// Glorot-uniform weights of shape `fan_in × fan_out`.
pub fn glorot_init<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Array2<f64> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Array2::from_shape_fn((fan_in, fan_out), |_| rng.random_range(-bound..bound))
}

/// Fully connected network; every layer but the last applies `tanh`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
}

/// Activations kept from a training forward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    /// Layer inputs: the network input followed by each (dropped-out) hidden
    /// activation.
    inputs: Vec<Array2<f64>>,
    /// Hidden activations before dropout.
    hidden: Vec<Array2<f64>>,
    masks: Vec<Array2<f64>>,
    pub output: Array2<f64>,
}

/// Parameter gradients, laid out like the network.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Mlp {
    /// Glorot weights and zero biases for layer widths `sizes`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "a network needs input and output widths");
        let weights = sizes.windows(2).map(|p| glorot_init(p[0], p[1], rng)).collect();
        let biases = sizes[1..].iter().map(|&n| Array1::zeros(n)).collect();
        Mlp { weights, biases }
    }

    pub fn from_parts(weights: Vec<Array2<f64>>, biases: Vec<Array1<f64>>) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(BsrError::Config("layer count mismatch".into()));
        }
        for (i, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.ncols() != b.len() {
                return Err(BsrError::Dimension { expected: w.ncols(), got: b.len() });
            }
            if i > 0 && weights[i - 1].ncols() != w.nrows() {
                return Err(BsrError::Dimension { expected: weights[i - 1].ncols(), got: w.nrows() });
            }
        }
        Ok(Mlp { weights, biases })
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.weights
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.last().expect("non-empty").ncols()
    }

    pub fn hidden_sizes(&self) -> Vec<usize> {
        self.weights[..self.weights.len() - 1].iter().map(|w| w.ncols()).collect()
    }

    /// Evaluation pass over a batch of rows.
    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let last = self.weights.len() - 1;
        let mut h = x.clone();
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = h.dot(w) + b;
            if i < last {
                z.mapv_inplace(f64::tanh);
            }
            h = z;
        }
        h
    }

    /// Training pass; `masks[l]` multiplies hidden layer `l` (already scaled
    /// for inverted dropout). Missing masks mean no dropout.
    pub fn forward_train(&self, x: &Array2<f64>, masks: &[Array2<f64>]) -> ForwardCache {
        let last = self.weights.len() - 1;
        let mut inputs = vec![x.clone()];
        let mut hidden = Vec::with_capacity(last);
        let mut output = Array2::zeros((0, 0));
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let z = inputs[i].dot(w) + b;
            if i < last {
                let h = z.mapv(f64::tanh);
                let dropped = match masks.get(i) {
                    Some(m) => &h * m,
                    None => h.clone(),
                };
                hidden.push(h);
                inputs.push(dropped);
            } else {
                output = z;
            }
        }
        ForwardCache {
            inputs,
            hidden,
            masks: masks.to_vec(),
            output,
        }
    }

    /// Back-propagate `d_out = ∂L/∂output` through a cached pass.
    pub fn backward(&self, cache: &ForwardCache, d_out: &Array2<f64>) -> Gradients {
        let n = self.weights.len();
        let mut gw = vec![Array2::zeros((0, 0)); n];
        let mut gb = vec![Array1::zeros(0); n];
        let mut delta = d_out.clone();
        for l in (0..n).rev() {
            gw[l] = cache.inputs[l].t().dot(&delta);
            gb[l] = delta.sum_axis(Axis(0));
            if l > 0 {
                let mut d = delta.dot(&self.weights[l].t());
                if let Some(m) = cache.masks.get(l - 1) {
                    d *= m;
                }
                let h = &cache.hidden[l - 1];
                d.zip_mut_with(h, |g, &a| *g *= 1.0 - a * a);
                delta = d;
            }
        }
        Gradients { weights: gw, biases: gb }
    }

    pub fn n_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// Binary checkpoint: `BSRN`, version, layer count, then per layer the
    /// row and column counts followed by row-major weights and the bias, all
    /// little-endian (`u32` sizes, `f64` values).
    pub fn write_to(&self, mut out: impl Write) -> Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&VERSION.to_le_bytes())?;
        out.write_all(&(self.weights.len() as u32).to_le_bytes())?;
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.write_all(&(w.nrows() as u32).to_le_bytes())?;
            out.write_all(&(w.ncols() as u32).to_le_bytes())?;
            for x in w.iter().chain(b.iter()) {
                out.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(mut input: impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(BsrError::Config("not a network checkpoint".into()));
        }
        let read_u32 = |r: &mut dyn Read| -> Result<u32> {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            Ok(u32::from_le_bytes(b))
        };
        let version = read_u32(&mut input)?;
        if version != VERSION {
            return Err(BsrError::Config(format!("unsupported checkpoint version {version}")));
        }
        let layers = read_u32(&mut input)? as usize;
        let mut weights = Vec::with_capacity(layers);
        let mut biases = Vec::with_capacity(layers);
        let read_f64s = |r: &mut dyn Read, n: usize| -> Result<Vec<f64>> {
            let mut buf = vec![0u8; n * 8];
            r.read_exact(&mut buf)?;
            Ok(buf
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect())
        };
        for _ in 0..layers {
            let rows = read_u32(&mut input)? as usize;
            let cols = read_u32(&mut input)? as usize;
            let w = read_f64s(&mut input, rows * cols)?;
            let b = read_f64s(&mut input, cols)?;
            weights.push(Array2::from_shape_vec((rows, cols), w).map_err(|e| BsrError::Config(e.to_string()))?);
            biases.push(Array1::from(b));
        }
        Self::from_parts(weights, biases)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_to(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// Inverted-dropout masks for every hidden layer: kept units scaled by
/// `1 / (1 − rate)`.
pub fn dropout_masks<R: Rng + ?Sized>(net: &Mlp, batch: usize, rate: f64, rng: &mut R) -> Vec<Array2<f64>> {
    if rate <= 0.0 {
        return Vec::new();
    }
    let keep = 1.0 / (1.0 - rate);
    net.hidden_sizes()
        .into_iter()
        .map(|h| Array2::from_shape_fn((batch, h), |_| if rng.random::<f64>() < rate { 0.0 } else { keep }))
        .collect()
}

/// RMSprop: running mean of squared gradients per parameter.
#[derive(Clone, Debug)]
pub struct RmsProp {
    pub lr: f64,
    pub decay: f64,
    pub eps: f64,
    sq_w: Vec<Array2<f64>>,
    sq_b: Vec<Array1<f64>>,
}

impl RmsProp {
    pub fn new(net: &Mlp, lr: f64, decay: f64, eps: f64) -> Self {
        RmsProp {
            lr,
            decay,
            eps,
            sq_w: net.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            sq_b: net.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
        }
    }

    /// Descend along `grads`.
    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients) {
        let (lr, decay, eps) = (self.lr, self.decay, self.eps);
        let upd = |p: &mut f64, s: &mut f64, g: f64| {
            *s = decay * *s + (1.0 - decay) * g * g;
            *p -= lr * g / (s.sqrt() + eps);
        };
        for l in 0..net.weights.len() {
            ndarray::Zip::from(&mut net.weights[l])
                .and(&mut self.sq_w[l])
                .and(&grads.weights[l])
                .for_each(|p, s, &g| upd(p, s, g));
            ndarray::Zip::from(&mut net.biases[l])
                .and(&mut self.sq_b[l])
                .and(&grads.biases[l])
                .for_each(|p, s, &g| upd(p, s, g));
        }
    }

    pub fn accumulators_nonnegative(&self) -> bool {
        self.sq_w.iter().all(|a| a.iter().all(|x| *x >= 0.0)) && self.sq_b.iter().all(|a| a.iter().all(|x| *x >= 0.0))
    }
}

/// Hyperparameters of a successor network.
#[derive(Clone, Debug, PartialEq)]
pub struct NetSettings {
    pub dim: usize,
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub decay: f64,
    pub eps: f64,
    pub dropout: f64,
    pub gamma: f64,
}

/// One sampled transition for a network update.
#[derive(Clone, Copy, Debug)]
pub struct NetSample<'a> {
    pub state: &'a [f64],
    pub action: Action,
    pub next_state: &'a [f64],
}

/// Online and target successor networks with their optimiser. Output
/// columns `a·d .. (a+1)·d` hold the successor features of action `a`.
#[derive(Clone, Debug)]
pub struct SuccessorNetwork {
    online: Mlp,
    target: Mlp,
    opt: RmsProp,
    settings: NetSettings,
}

fn rows(batch: &[&[f64]], dim: usize) -> Array2<f64> {
    let mut x = Array2::zeros((batch.len(), dim));
    for (mut row, v) in x.rows_mut().into_iter().zip(batch) {
        row.assign(&ArrayView1::from(*v));
    }
    x
}

impl SuccessorNetwork {
    pub fn new<R: Rng + ?Sized>(settings: NetSettings, rng: &mut R) -> Self {
        let mut sizes = vec![settings.dim];
        sizes.extend(&settings.hidden);
        sizes.push(N_ACTIONS * settings.dim);
        let online = Mlp::new(&sizes, rng);
        let opt = RmsProp::new(&online, settings.lr, settings.decay, settings.eps);
        SuccessorNetwork {
            target: online.clone(),
            online,
            opt,
            settings,
        }
    }

    pub fn online(&self) -> &Mlp {
        &self.online
    }

    pub fn target(&self) -> &Mlp {
        &self.target
    }

    pub fn online_mut(&mut self) -> &mut Mlp {
        &mut self.online
    }

    pub fn optimizer(&self) -> &RmsProp {
        &self.opt
    }

    pub fn settings(&self) -> &NetSettings {
        &self.settings
    }

    /// Re-draw parameters and reset the optimiser.
    pub fn reinitialize<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        *self = SuccessorNetwork::new(self.settings.clone(), rng);
    }

    pub fn sync_target(&mut self) {
        self.target = self.online.clone();
    }

    /// Successor features of every action at `phi`, one row per action.
    pub fn predict(&self, phi: &[f64]) -> Array2<f64> {
        let out = self.online.forward(&rows(&[phi], self.settings.dim));
        out.into_shape_with_order((N_ACTIONS, self.settings.dim)).expect("head layout")
    }

    pub fn q_values(&self, phi: &[f64], w: &[f64]) -> [f64; N_ACTIONS] {
        let m = self.predict(phi);
        let w = ArrayView1::from(w);
        std::array::from_fn(|a| m.row(a).dot(&w))
    }

    /// Semi-gradient TD step on a minibatch: bootstrap actions are greedy
    /// under the target network with reward weights `w`; the squared error
    /// of the online prediction (mean over the batch) is minimised with
    /// RMSprop. Returns the pre-update loss.
    pub fn td_update<R: Rng + ?Sized>(&mut self, batch: &[NetSample<'_>], w: &[f64], rng: &mut R) -> f64 {
        if batch.is_empty() {
            return 0.0;
        }
        let d = self.settings.dim;
        let b = batch.len();
        let next: Vec<&[f64]> = batch.iter().map(|t| t.next_state).collect();
        let x_next = rows(&next, d);
        let target_out = self.target.forward(&x_next);
        let wv = ArrayView1::from(w);
        let mut targets = Array2::zeros((b, d));
        for i in 0..b {
            let q: Vec<f64> = (0..N_ACTIONS)
                .map(|a| target_out.slice(s![i, a * d..(a + 1) * d]).dot(&wv))
                .collect();
            let a_next = argmax(&q);
            let boot = target_out.slice(s![i, a_next * d..(a_next + 1) * d]);
            let mut row = targets.row_mut(i);
            row.assign(&x_next.row(i));
            row.scaled_add(self.settings.gamma, &boot);
        }
        let cur: Vec<&[f64]> = batch.iter().map(|t| t.state).collect();
        let x = rows(&cur, d);
        let masks = dropout_masks(&self.online, b, self.settings.dropout, rng);
        let actions: Vec<Action> = batch.iter().map(|t| t.action).collect();
        let (loss, grads) = self.loss_and_gradients(&x, &actions, &targets, &masks);
        self.opt.step(&mut self.online, &grads);
        loss
    }

    /// Loss `(1/2B) Σ ‖target_i − m(s_i, a_i)‖²` and its gradients.
    pub fn loss_and_gradients(
        &self,
        x: &Array2<f64>,
        actions: &[Action],
        targets: &Array2<f64>,
        masks: &[Array2<f64>],
    ) -> (f64, Gradients) {
        let d = self.settings.dim;
        let b = actions.len() as f64;
        let cache = self.online.forward_train(x, masks);
        let mut d_out = Array2::zeros(cache.output.raw_dim());
        let mut loss = 0.0;
        for (i, a) in actions.iter().enumerate() {
            let cols = a.index() * d..(a.index() + 1) * d;
            let pred = cache.output.slice(s![i, cols.clone()]);
            let err = &pred - &targets.row(i);
            loss += 0.5 * err.dot(&err) / b;
            d_out.slice_mut(s![i, cols]).assign(&(err / b));
        }
        (loss, self.online.backward(&cache, &d_out))
    }
}

/// One extra pass of reward-weight regression over an episode's
/// `(features of the arrival state, reward)` pairs, in order.
pub fn episode_end_w_pass(steps: &[(Vec<f64>, f64)], w: &mut [f64], alpha_w: f64) {
    for (phi, r) in steps {
        crate::sr::reward_weight_update(w, phi, *r, alpha_w);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, RngRole};
    use approx::assert_relative_eq;

    fn settings(dim: usize, hidden: usize) -> NetSettings {
        NetSettings {
            dim,
            hidden: vec![hidden],
            lr: 1e-3,
            decay: 0.9,
            eps: 1e-8,
            dropout: 0.0,
            gamma: 0.9,
        }
    }

    #[test]
    fn glorot_bound_and_variance() {
        let mut rng = stream(0, RngRole::Init);
        let w = glorot_init(100, 150, &mut rng);
        let bound = (6.0f64 / 250.0).sqrt();
        assert_relative_eq!(bound, 0.1549, epsilon = 1e-4);
        assert!(w.iter().all(|x| x.abs() <= bound));
        let big = glorot_init(500, 200, &mut rng);
        let var = big.iter().map(|x| x * x).sum::<f64>() / big.len() as f64;
        let expected = 2.0 / 700.0;
        assert!((var - expected).abs() / expected < 0.05, "{var} vs {expected}");
        let net = Mlp::new(&[100, 150, 400], &mut rng);
        assert!(net.biases().iter().all(|b| b.iter().all(|x| *x == 0.0)));
    }

    #[test]
    fn zero_input_zero_bias_gives_zero_output() {
        let mut rng = stream(1, RngRole::Init);
        let net = Mlp::new(&[5, 7, 8], &mut rng);
        let out = net.forward(&Array2::zeros((2, 5)));
        assert!(out.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn forward_matches_independent_arithmetic() {
        let mut rng = stream(2, RngRole::Init);
        let mut net = Mlp::new(&[4, 6, 3], &mut rng);
        for b in &mut net.biases {
            b.mapv_inplace(|_| rng.random_range(-0.5..0.5));
        }
        let x = [0.3, -0.2, 0.9, 0.05];
        let out = net.forward(&Array2::from_shape_vec((1, 4), x.to_vec()).unwrap());
        let (w1, b1, w2, b2) = (&net.weights[0], &net.biases[0], &net.weights[1], &net.biases[1]);
        let mut h = [0.0; 6];
        for j in 0..6 {
            let mut z = b1[j];
            for i in 0..4 {
                z += x[i] * w1[[i, j]];
            }
            h[j] = z.tanh();
        }
        for k in 0..3 {
            let mut z = b2[k];
            for j in 0..6 {
                z += h[j] * w2[[j, k]];
            }
            assert_relative_eq!(out[[0, k]], z, epsilon = 1e-12);
        }
    }

    fn finite_difference_check(masks_on: bool) {
        let mut rng = stream(3, RngRole::Init);
        let mut s = settings(5, 6);
        s.dropout = if masks_on { 0.3 } else { 0.0 };
        let mut net = SuccessorNetwork::new(s, &mut rng);
        for b in &mut net.online.biases {
            b.mapv_inplace(|_| rng.random_range(-0.3..0.3));
        }
        let x = Array2::from_shape_fn((3, 5), |_| rng.random_range(-1.0..1.0));
        let targets = Array2::from_shape_fn((3, 5), |_| rng.random_range(-1.0..1.0));
        let actions = [Action::Up, Action::Left, Action::Right];
        let masks = dropout_masks(&net.online, 3, net.settings.dropout, &mut rng);
        let (_, g) = net.loss_and_gradients(&x, &actions, &targets, &masks);
        let h = 1e-6;
        for l in 0..2 {
            let (r, c) = net.online.weights[l].dim();
            for &(i, j) in &[(0, 0), (r - 1, c - 1), (r / 2, c / 3), (1, c - 2), (r - 2, 1)] {
                let orig = net.online.weights[l][[i, j]];
                net.online.weights[l][[i, j]] = orig + h;
                let lp = net.loss_and_gradients(&x, &actions, &targets, &masks).0;
                net.online.weights[l][[i, j]] = orig - h;
                let lm = net.loss_and_gradients(&x, &actions, &targets, &masks).0;
                net.online.weights[l][[i, j]] = orig;
                let fd = (lp - lm) / (2.0 * h);
                let an = g.weights[l][[i, j]];
                let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8);
                assert!(rel < 1e-4 || (fd - an).abs() < 1e-10, "layer {l} ({i},{j}): {fd} vs {an}");
            }
            for j in [0, net.online.biases[l].len() - 1] {
                let orig = net.online.biases[l][j];
                net.online.biases[l][j] = orig + h;
                let lp = net.loss_and_gradients(&x, &actions, &targets, &masks).0;
                net.online.biases[l][j] = orig - h;
                let lm = net.loss_and_gradients(&x, &actions, &targets, &masks).0;
                net.online.biases[l][j] = orig;
                let fd = (lp - lm) / (2.0 * h);
                let an = g.biases[l][j];
                let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8);
                assert!(rel < 1e-4 || (fd - an).abs() < 1e-10, "bias {l} {j}: {fd} vs {an}");
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        finite_difference_check(false);
    }

    #[test]
    fn gradients_match_finite_differences_with_dropout_mask() {
        finite_difference_check(true);
    }

    #[test]
    fn target_is_frozen_until_sync() {
        let mut rng = stream(4, RngRole::Init);
        let mut net = SuccessorNetwork::new(settings(5, 6), &mut rng);
        let before = net.target().clone();
        let s = [0.1, 0.2, 0.3, 0.4, 0.5];
        let n = [0.5, 0.4, 0.3, 0.2, 0.1];
        let batch = [NetSample { state: &s, action: Action::Down, next_state: &n }];
        for _ in 0..5 {
            net.td_update(&batch, &[1.0; 5], &mut rng);
        }
        assert_eq!(net.target(), &before);
        assert_ne!(net.online(), &before);
        net.sync_target();
        let x = Array2::from_shape_vec((1, 5), s.to_vec()).unwrap();
        let a = net.online().forward(&x);
        let b = net.target().forward(&x);
        for (p, q) in a.iter().zip(b.iter()) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_discount_regresses_onto_next_features() {
        let mut rng = stream(5, RngRole::Init);
        let mut s = settings(3, 8);
        s.gamma = 0.0;
        s.lr = 0.01;
        let mut net = SuccessorNetwork::new(s, &mut rng);
        let x = [0.2, 0.5, 0.1];
        let y = [0.7, 0.0, 0.3];
        let batch = [NetSample { state: &x, action: Action::Left, next_state: &y }];
        let first = net.td_update(&batch, &[0.0; 3], &mut rng);
        let mut last = first;
        for _ in 0..2000 {
            last = net.td_update(&batch, &[0.0; 3], &mut rng);
        }
        assert!(last < first * 1e-2, "{first} -> {last}");
        let m = net.predict(&x);
        for (p, q) in m.row(Action::Left.index()).iter().zip(y) {
            assert!((p - q).abs() < 0.02);
        }
    }

    #[test]
    fn rmsprop_sign_pattern_is_scale_invariant() {
        let mut rng = stream(6, RngRole::Init);
        let net = Mlp::new(&[3, 4, 2], &mut rng);
        let cache = net.forward_train(&Array2::from_elem((1, 3), 0.5), &[]);
        let d = Array2::from_shape_vec((1, 2), vec![0.3, -0.7]).unwrap();
        let g1 = net.backward(&cache, &d);
        let g2 = net.backward(&cache, &(&d * 50.0));
        let mut a = net.clone();
        let mut b = net.clone();
        let mut oa = RmsProp::new(&a, 0.01, 0.9, 1e-8);
        let mut ob = RmsProp::new(&b, 0.01, 0.9, 1e-8);
        oa.step(&mut a, &g1);
        ob.step(&mut b, &g2);
        for l in 0..2 {
            for ((x, y), z) in a.weights[l].iter().zip(b.weights[l].iter()).zip(net.weights[l].iter()) {
                assert_eq!((x - z).signum(), (y - z).signum());
            }
            for (g, h) in g1.weights[l].iter().zip(g2.weights[l].iter()) {
                assert_relative_eq!(g * 50.0, *h, epsilon = 1e-12);
            }
        }
        assert!(oa.accumulators_nonnegative());
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = stream(7, RngRole::Init);
        let net = Mlp::new(&[4, 5, 6], &mut rng);
        let mut buf = Vec::new();
        net.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"BSRN");
        assert_eq!(buf.len(), 4 + 4 + 4 + 2 * 8 + (4 * 5 + 5 + 5 * 6 + 6) * 8);
        let back = Mlp::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, net);
        assert!(Mlp::read_from(&b"XXXX"[..]).is_err());
    }

    #[test]
    fn w_pass_examples() {
        let mut w = vec![0.0; 3];
        episode_end_w_pass(&[(vec![1.0, 0.0, 0.0], 0.0)], &mut w, 0.5);
        assert_eq!(w, vec![0.0; 3]);
        let phi = vec![0.0, 1.0, 0.0];
        episode_end_w_pass(&[(phi.clone(), 10.0)], &mut w, 0.5);
        assert_eq!(w, vec![0.0, 5.0, 0.0]);
    }

    #[test]
    fn w_pass_does_not_increase_error() {
        let mut rng = stream(8, RngRole::Init);
        let steps: Vec<(Vec<f64>, f64)> = (0..30)
            .map(|_| {
                let phi: Vec<f64> = (0..6).map(|_| rng.random_range(0.0..0.3)).collect();
                let r = if rng.random::<f64>() < 0.2 { 10.0 } else { 0.0 };
                (phi, r)
            })
            .collect();
        let sse = |w: &[f64]| -> f64 {
            steps.iter().map(|(p, r)| (r - crate::domain::dot(p, w)).powi(2)).sum()
        };
        let mut w = vec![0.0; 6];
        let mut prev = sse(&w);
        for _ in 0..20 {
            episode_end_w_pass(&steps, &mut w, 0.05);
            let cur = sse(&w);
            assert!(cur <= prev + 1e-9, "{prev} -> {cur}");
            prev = cur;
        }
    }
}
