//! Parameter storage, layers, initializers and optimizers.

use ndarray::{Array1, Array2, Array4, ArrayD};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::{ParamMode, Tape, Var};

/// Index of a parameter inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Flat, name-addressed parameter storage. Creation order is the canonical
/// order for optimizers and checkpoints, so identical construction code
/// yields identical layouts.
#[derive(Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<ArrayD<f32>>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: ArrayD<f32>) -> ParamId {
        let name = name.into();
        assert!(!self.names.contains(&name), "duplicate parameter name {name}");
        self.names.push(name);
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, id: ParamId) -> &ArrayD<f32> {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut ArrayD<f32> {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn id_by_name(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ArrayD<f32>)> {
        self.names.iter().map(|s| s.as_str()).zip(self.values.iter())
    }

    /// FNV-1a over the exact parameter bits, for cheap change detection.
    pub fn content_hash(&self, ids: &[ParamId]) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for &id in ids {
            for &v in self.values[id.0].iter() {
                for b in v.to_bits().to_le_bytes() {
                    h ^= b as u64;
                    h = h.wrapping_mul(0x100000001b3);
                }
            }
        }
        h
    }
}

/// Derive a stream seed from a base seed; splitmix64 keeps distinct streams
/// decorrelated without shared mutable RNG state.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9e3779b97f4a7c15) ^ index.wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

pub fn rng_from(base: u64, stream: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, stream, index))
}

fn kaiming_conv(rng: &mut impl Rng, cout: usize, cin: usize, k: usize) -> Array4<f32> {
    let std = (2.0 / (cin * k * k) as f32).sqrt();
    Array4::from_shape_simple_fn((cout, cin, k, k), || {
        // Box-Muller from two uniforms; keeps us off rand_distr.
        let u1: f32 = rng.gen_range(1e-7f32..1.0);
        let u2: f32 = rng.gen_range(0.0f32..1.0);
        std * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f32::consts::PI * u2).cos()
    })
}

fn kaiming_linear(rng: &mut impl Rng, rows: usize, cols: usize) -> Array2<f32> {
    let std = (2.0 / cols as f32).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || {
        let u1: f32 = rng.gen_range(1e-7f32..1.0);
        let u2: f32 = rng.gen_range(0.0f32..1.0);
        std * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f32::consts::PI * u2).cos()
    })
}

/// 3x3 (or any odd k) same-padding convolution layer.
pub struct Conv2dLayer {
    pub w: ParamId,
    pub b: ParamId,
    pub pad: usize,
}

impl Conv2dLayer {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut impl Rng,
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
    ) -> Self {
        assert!(k % 2 == 1, "same-padding conv needs an odd kernel");
        let w = store.add(format!("{name}.weight"), kaiming_conv(rng, cout, cin, k).into_dyn());
        let b = store.add(format!("{name}.bias"), Array1::<f32>::zeros(cout).into_dyn());
        Conv2dLayer { w, b, pad: k / 2 }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var, mode: ParamMode) -> Var {
        let w = tape.param(store, self.w, mode);
        let b = tape.param(store, self.b, mode);
        tape.conv2d(x, w, b, self.pad)
    }
}

/// Fully-connected layer; `w` rows are output classes over feature columns,
/// matching the weight-row view that class activation maps consume.
pub struct LinearLayer {
    pub w: ParamId,
    pub b: ParamId,
}

impl LinearLayer {
    pub fn new(store: &mut ParamStore, rng: &mut impl Rng, name: &str, in_dim: usize, out_dim: usize) -> Self {
        let w = store.add(format!("{name}.weight"), kaiming_linear(rng, out_dim, in_dim).into_dyn());
        let b = store.add(format!("{name}.bias"), Array1::<f32>::zeros(out_dim).into_dyn());
        LinearLayer { w, b }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var, mode: ParamMode) -> Var {
        let w = tape.param(store, self.w, mode);
        let b = tape.param(store, self.b, mode);
        tape.affine(x, w, b)
    }
}

/// SGD with momentum and decoupled-from-nothing classic weight decay
/// (`g = grad + wd * p`, `v = mu * v + g`, `p -= lr * v`).
pub struct SgdMomentum {
    pub momentum: f32,
    pub weight_decay: f32,
    velocity: Vec<Option<ArrayD<f32>>>,
}

impl SgdMomentum {
    pub fn new(momentum: f32, weight_decay: f32, n_params: usize) -> Self {
        let mut velocity = Vec::new();
        velocity.resize_with(n_params, || None);
        SgdMomentum { momentum, weight_decay, velocity }
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &crate::autograd::Gradients, ids: &[ParamId], lr: f32) {
        for &id in ids {
            let Some(g) = grads.get(id) else { continue };
            let p = store.value_mut(id);
            let mut g = g.clone();
            if self.weight_decay != 0.0 {
                g.zip_mut_with(p, |gv, &pv| *gv += self.weight_decay * pv);
            }
            let v = match &mut self.velocity[id.index()] {
                Some(v) => {
                    v.zip_mut_with(&g, |vv, &gv| *vv = self.momentum * *vv + gv);
                    v
                }
                slot => {
                    *slot = Some(g);
                    slot.as_mut().unwrap()
                }
            };
            p.zip_mut_with(v, |pv, &vv| *pv -= lr * vv);
        }
    }

    pub fn state(&self) -> &[Option<ArrayD<f32>>] {
        &self.velocity
    }

    pub fn set_state(&mut self, idx: usize, v: ArrayD<f32>) {
        self.velocity[idx] = Some(v);
    }
}

/// Adam with the standard bias correction; no weight decay.
pub struct Adam {
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    pub t: u64,
    m: Vec<Option<ArrayD<f32>>>,
    v: Vec<Option<ArrayD<f32>>>,
}

impl Adam {
    pub fn new(n_params: usize) -> Self {
        let mut m = Vec::new();
        m.resize_with(n_params, || None);
        let mut v = Vec::new();
        v.resize_with(n_params, || None);
        Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m, v }
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &crate::autograd::Gradients, ids: &[ParamId], lr: f32) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for &id in ids {
            let Some(g) = grads.get(id) else { continue };
            let idx = id.index();
            if self.m[idx].is_none() {
                self.m[idx] = Some(ArrayD::zeros(g.raw_dim()));
                self.v[idx] = Some(ArrayD::zeros(g.raw_dim()));
            }
            let m = self.m[idx].as_mut().unwrap();
            let v = self.v[idx].as_mut().unwrap();
            m.zip_mut_with(g, |mv, &gv| *mv = self.beta1 * *mv + (1.0 - self.beta1) * gv);
            v.zip_mut_with(g, |vv, &gv| *vv = self.beta2 * *vv + (1.0 - self.beta2) * gv * gv);
            let p = store.value_mut(id);
            ndarray::Zip::from(p).and(&*m).and(&*v).for_each(|pv, &mv, &vv| {
                let mhat = mv / bc1;
                let vhat = vv / bc2;
                *pv -= lr * mhat / (vhat.sqrt() + self.eps);
            });
        }
    }

    pub fn state(&self) -> (&[Option<ArrayD<f32>>], &[Option<ArrayD<f32>>], u64) {
        (&self.m, &self.v, self.t)
    }

    pub fn set_state(&mut self, idx: usize, m: ArrayD<f32>, v: ArrayD<f32>) {
        self.m[idx] = Some(m);
        self.v[idx] = Some(v);
    }

    pub fn set_t(&mut self, t: u64) {
        self.t = t;
    }
}
