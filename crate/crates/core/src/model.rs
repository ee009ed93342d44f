//! Conditional velocity network `v(x, t, c)`.
//!
//! An MLP over `[x | time embedding | domain embedding]` with SiLU hidden
//! activations. The domain table carries one extra row for the
//! unconditional (null) token used by classifier-free guidance. The output
//! head starts at zero, so an untrained model is the zero field and its flow
//! is the identity map.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DomainLabel {
    Domain(usize),
    /// Unconditional token; never a translation target.
    Null,
}

impl DomainLabel {
    /// Row of the embedding table for a model with `num_domains` domains.
    pub fn index(self, num_domains: usize) -> Result<usize> {
        match self {
            DomainLabel::Domain(id) if id < num_domains => Ok(id),
            DomainLabel::Domain(id) => Err(Error::Label {
                id,
                domains: num_domains,
            }),
            DomainLabel::Null => Ok(num_domains),
        }
    }

    pub fn is_null(self) -> bool {
        matches!(self, DomainLabel::Null)
    }
}

/// Sinusoidal embedding of `t ∈ [0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeEmbedding {
    pub dim: usize,
    pub base: f32,
}

/// Time is stretched onto a diffusion-style `[0, 1000]` range before embedding.
const TIME_SCALE: f32 = 1000.0;

impl TimeEmbedding {
    pub fn new(dim: usize, base: f32) -> Result<Self> {
        if dim == 0 || !dim.is_multiple_of(2) {
            return Err(Error::Config(format!("time embedding dim must be even and positive, got {dim}")));
        }
        if !(base > 0.0) {
            return Err(Error::Config(format!("time embedding base must be positive, got {base}")));
        }
        Ok(Self { dim, base })
    }

    pub fn embed(&self, t: f32, out: &mut [f32]) {
        let half = self.dim / 2;
        let ts = t * TIME_SCALE;
        for i in 0..half {
            let freq = (-(self.base.ln()) * i as f32 / half as f32).exp();
            let arg = ts * freq;
            out[i] = arg.sin();
            out[half + i] = arg.cos();
        }
    }

    pub fn embed_batch(&self, ts: &[f32]) -> Result<Tensor> {
        let mut data = vec![0.0; ts.len() * self.dim];
        for (row, &t) in data.chunks_exact_mut(self.dim).zip(ts) {
            self.embed(t, row);
        }
        Tensor::new(vec![ts.len(), self.dim], data)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub data_dim: usize,
    pub hidden: Vec<usize>,
    pub time_dim: usize,
    pub domain_dim: usize,
    pub num_domains: usize,
}

impl ModelSpec {
    pub fn new(data_dim: usize, hidden: Vec<usize>, num_domains: usize) -> Self {
        Self {
            data_dim,
            hidden,
            time_dim: 64,
            domain_dim: 16,
            num_domains,
        }
    }

    pub fn input_width(&self) -> usize {
        self.data_dim + self.time_dim + self.domain_dim
    }

    pub fn validate(&self) -> Result<()> {
        if self.data_dim == 0 || self.num_domains == 0 || self.domain_dim == 0 {
            return Err(Error::Config(format!("degenerate model spec {self:?}")));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        TimeEmbedding::new(self.time_dim, TIME_BASE)?;
        Ok(())
    }

    /// `(name, shape)` of every parameter tensor in storage order.
    pub fn param_layout(&self) -> Vec<(String, Vec<usize>)> {
        let mut layout = vec![("domain_embedding".to_string(), vec![self.num_domains + 1, self.domain_dim])];
        let mut fan_in = self.input_width();
        for (i, &w) in self.hidden.iter().enumerate() {
            layout.push((format!("hidden{i}.weight"), vec![fan_in, w]));
            layout.push((format!("hidden{i}.bias"), vec![w]));
            fan_in = w;
        }
        layout.push(("head.weight".into(), vec![fan_in, self.data_dim]));
        layout.push(("head.bias".into(), vec![self.data_dim]));
        layout
    }
}

pub const TIME_BASE: f32 = 10_000.0;

#[derive(Debug, Clone, PartialEq)]
pub struct VectorFieldModel {
    spec: ModelSpec,
    names: Vec<String>,
    params: Vec<Tensor>,
    ema: Vec<Tensor>,
    pub ema_rate: f32,
}

impl VectorFieldModel {
    /// Seeded initialization: PyTorch-style uniform hidden layers, standard
    /// normal domain embeddings, zero output head.
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut names = Vec::new();
        let mut params = Vec::new();
        let mut fan_in = 1;
        for (name, shape) in spec.param_layout() {
            let n: usize = shape.iter().product();
            let data: Vec<f32> = if name == "domain_embedding" {
                (0..n).map(|_| rng.sample(StandardNormal)).collect()
            } else if name.starts_with("head") {
                vec![0.0; n]
            } else {
                if name.ends_with("weight") {
                    fan_in = shape[0];
                }
                let bound = 1.0 / (fan_in as f32).sqrt();
                (0..n).map(|_| rng.random_range(-bound..bound)).collect()
            };
            names.push(name);
            params.push(Tensor::new(shape, data)?);
        }
        let ema = params.clone();
        Ok(Self {
            spec,
            names,
            params,
            ema,
            ema_rate: 0.999,
        })
    }

    /// Rebuilds a model from stored parameter arrays.
    pub fn from_parts(spec: ModelSpec, params: Vec<Tensor>, ema: Vec<Tensor>, ema_rate: f32) -> Result<Self> {
        spec.validate()?;
        let layout = spec.param_layout();
        if params.len() != layout.len() || ema.len() != layout.len() {
            return Err(Error::Schema(format!(
                "expected {} parameter tensors, got {} / {}",
                layout.len(),
                params.len(),
                ema.len()
            )));
        }
        for ((name, shape), (p, e)) in layout.iter().zip(params.iter().zip(&ema)) {
            if p.shape() != shape.as_slice() || e.shape() != shape.as_slice() {
                return Err(Error::Schema(format!("parameter {name} has wrong shape")));
            }
        }
        Ok(Self {
            names: layout.into_iter().map(|(n, _)| n).collect(),
            spec,
            params,
            ema,
            ema_rate,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn param_names(&self) -> &[String] {
        &self.names
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn ema_params(&self) -> &[Tensor] {
        &self.ema
    }

    pub fn ema_params_mut(&mut self) -> &mut [Tensor] {
        &mut self.ema
    }

    pub fn param_lens(&self) -> Vec<usize> {
        self.params.iter().map(Tensor::len).collect()
    }

    pub fn num_params(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn num_domains(&self) -> usize {
        self.spec.num_domains
    }

    pub fn data_dim(&self) -> usize {
        self.spec.data_dim
    }

    fn time_embedding(&self) -> TimeEmbedding {
        TimeEmbedding {
            dim: self.spec.time_dim,
            base: TIME_BASE,
        }
    }

    /// Records the forward pass on `tape` using the given parameter handles.
    pub fn forward_on_tape(
        &self,
        tape: &mut Tape,
        params: &[Var],
        x: &Tensor,
        t: &[f32],
        labels: &[DomainLabel],
    ) -> Result<Var> {
        self.check_inputs(x, t, labels)?;
        let rows: Vec<usize> = labels
            .iter()
            .map(|l| l.index(self.spec.num_domains))
            .collect::<Result<_>>()?;

        let xv = tape.constant(x.clone());
        let tv = tape.constant(self.time_embedding().embed_batch(t)?);
        let dv = tape.gather_rows(params[0], &rows)?;
        let mut h = tape.concat_cols(&[xv, tv, dv])?;

        let layers = self.spec.hidden.len();
        for i in 0..layers {
            let (w, b) = (params[1 + 2 * i], params[2 + 2 * i]);
            let z = tape.matmul(h, w)?;
            let z = tape.add_bias(z, b)?;
            h = tape.silu(z)?;
        }
        let (w, b) = (params[1 + 2 * layers], params[2 + 2 * layers]);
        let out = tape.matmul(h, w)?;
        tape.add_bias(out, b)
    }

    /// Velocity for each row of `x`; `t` and `labels` are per row.
    pub fn forward(&self, x: &Tensor, t: &[f32], labels: &[DomainLabel], use_ema: bool) -> Result<Tensor> {
        let source = if use_ema { &self.ema } else { &self.params };
        let mut tape = Tape::new();
        let vars: Vec<Var> = source.iter().map(|p| tape.constant(p.clone())).collect();
        let out = self.forward_on_tape(&mut tape, &vars, x, t, labels)?;
        let v = tape.value(out).clone();
        if !v.is_finite() {
            return Err(Error::Numeric("vector field output".into()));
        }
        Ok(v)
    }

    fn check_inputs(&self, x: &Tensor, t: &[f32], labels: &[DomainLabel]) -> Result<()> {
        if x.shape().len() != 2 || x.cols() != self.spec.data_dim {
            return Err(Error::shape("vector field input", x.shape(), &[x.rows(), self.spec.data_dim]));
        }
        if t.len() != x.rows() || labels.len() != x.rows() {
            return Err(Error::shape("vector field conditioning", &[x.rows()], &[t.len(), labels.len()]));
        }
        if !x.is_finite() {
            return Err(Error::Numeric("vector field input x".into()));
        }
        if let Some(bad) = t.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Numeric(format!("time {bad} outside [0, 1]")));
        }
        Ok(())
    }

    /// `ema ← rate·ema + (1−rate)·params`, element-wise.
    pub fn ema_update(&mut self) {
        let rate = self.ema_rate;
        for (e, p) in self.ema.iter_mut().zip(&self.params) {
            for (ev, &pv) in e.data_mut().iter_mut().zip(p.data()) {
                *ev = rate * *ev + (1.0 - rate) * pv;
            }
        }
    }

    /// Replaces the shadow copy with the live parameters.
    pub fn sync_ema(&mut self) {
        self.ema = self.params.clone();
    }
}
