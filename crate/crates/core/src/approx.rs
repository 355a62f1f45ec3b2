//! Value-function approximators and their optimizer plumbing.
//!
//! Three interchangeable architectures sit behind one flat parameter vector:
//! lookup tables, linear maps on feature vectors, and a single-hidden-layer
//! ReLU network. Gradients come back as sparse coordinate lists so tabular
//! fits touch only visited rows; the Adam implementation applies the decayed
//! catch-up for coordinates it skipped, which keeps it exactly equivalent to
//! the dense update whenever every gradient is dense. Parameters round-trip
//! through a small binary checkpoint format.

use std::fmt;
use std::io::{Read as IoRead, Write as IoWrite};
use std::path::Path;

use rand::Rng;

use crate::pomdp::Observation;

/// Network shape. `dim` is the input feature length; `outputs` is 1 for a
/// state-value head and `num_actions` for an action-value head.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arch {
    /// One parameter per (input id, output): exact lookup.
    Table,
    /// Weight matrix on the feature vector, no bias.
    Linear,
    /// feature -> 64 ReLU units -> outputs, with biases on both layers.
    Mlp,
}

/// What a parameter set predicts; stored in checkpoints so a value head is
/// never silently loaded where an action-value head was expected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    StateValue,
    ActionValue,
}

pub const MLP_HIDDEN: usize = 64;

/// One gradient coordinate: flat parameter index and partial derivative.
pub type GradEntry = (usize, f64);

#[derive(Debug)]
pub enum CheckpointError {
    Io(std::io::Error),
    BadMagic,
    BadVersion(u8),
    BadTag(u8),
    ShapeMismatch { expected: usize, found: usize },
}

impl fmt::Display for CheckpointError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CheckpointError::Io(e) => write!(f, "checkpoint io error: {e}"),
            CheckpointError::BadMagic => write!(f, "not a parameter checkpoint"),
            CheckpointError::BadVersion(v) => write!(f, "unsupported checkpoint version {v}"),
            CheckpointError::BadTag(t) => write!(f, "unknown tag byte {t}"),
            CheckpointError::ShapeMismatch { expected, found } => {
                write!(f, "payload length {found} does not match header {expected}")
            }
        }
    }
}

impl std::error::Error for CheckpointError {}

impl From<std::io::Error> for CheckpointError {
    fn from(e: std::io::Error) -> Self {
        CheckpointError::Io(e)
    }
}

/// A flat parameter vector plus the shape information needed to use it.
#[derive(Debug, Clone)]
pub struct ParamSet {
    pub arch: Arch,
    pub role: Role,
    /// Input feature length (for `Table`, the number of input ids).
    pub dim: usize,
    /// Output count: 1 for a value head, `num_actions` for an action head.
    pub outputs: usize,
    pub values: Vec<f64>,
}

impl ParamSet {
    /// Parameter count for the given shape.
    pub fn len_for(arch: Arch, dim: usize, outputs: usize) -> usize {
        match arch {
            Arch::Table => dim * outputs,
            Arch::Linear => outputs * dim,
            Arch::Mlp => MLP_HIDDEN * dim + MLP_HIDDEN + outputs * MLP_HIDDEN + outputs,
        }
    }

    /// Zero-initialized set (tables and linear maps start all-zero).
    pub fn zeros(arch: Arch, role: Role, dim: usize, outputs: usize) -> Self {
        ParamSet { arch, role, dim, outputs, values: vec![0.0; Self::len_for(arch, dim, outputs)] }
    }

    /// Shape-appropriate random initialization. Tables and linear maps are
    /// zero; network weights draw uniform Xavier bounds with zero biases.
    pub fn init(arch: Arch, role: Role, dim: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let mut set = Self::zeros(arch, role, dim, outputs);
        if arch == Arch::Mlp {
            let b1 = (6.0 / (dim + MLP_HIDDEN) as f64).sqrt();
            for w in &mut set.values[..MLP_HIDDEN * dim] {
                *w = rng.gen_range(-b1..=b1);
            }
            let b2 = (6.0 / (MLP_HIDDEN + outputs) as f64).sqrt();
            let start = MLP_HIDDEN * dim + MLP_HIDDEN;
            for w in &mut set.values[start..start + outputs * MLP_HIDDEN] {
                *w = rng.gen_range(-b2..=b2);
            }
        }
        set
    }

    /// All output heads for one input, given its sparse one-feature list.
    /// `ones` holds the indices of features equal to 1 (everything else 0);
    /// for `Table` the lone entry is the input id.
    pub fn forward(&self, ones: &[usize]) -> Vec<f64> {
        match self.arch {
            Arch::Table => {
                let id = ones[0];
                (0..self.outputs).map(|m| self.values[id * self.outputs + m]).collect()
            }
            Arch::Linear => (0..self.outputs)
                .map(|m| ones.iter().map(|&j| self.values[m * self.dim + j]).sum())
                .collect(),
            Arch::Mlp => {
                let (h, _) = self.mlp_hidden(ones);
                let w2 = MLP_HIDDEN * self.dim + MLP_HIDDEN;
                let b2 = w2 + self.outputs * MLP_HIDDEN;
                (0..self.outputs)
                    .map(|m| {
                        self.values[b2 + m]
                            + h.iter()
                                .enumerate()
                                .map(|(u, &hu)| self.values[w2 + m * MLP_HIDDEN + u] * hu)
                                .sum::<f64>()
                    })
                    .collect()
            }
        }
    }

    /// Scalar convenience for single-output heads.
    pub fn forward_one(&self, ones: &[usize]) -> f64 {
        self.forward(ones)[0]
    }

    /// Evaluate the heads on an observation, picking the input view this
    /// architecture expects: lookup tables key on the dense observation id,
    /// feature architectures on the active feature indices. The two coincide
    /// only for plain one-hot observations, so trainers must go through this
    /// rather than passing `obs.ones` directly.
    pub fn forward_obs(&self, obs: &Observation) -> Vec<f64> {
        self.forward(self.input_key(obs))
    }

    /// First head of [`forward_obs`](Self::forward_obs).
    pub fn forward_obs_one(&self, obs: &Observation) -> f64 {
        self.forward_obs(obs)[0]
    }

    /// Gradient of head `m` at an observation; see [`forward_obs`](Self::forward_obs).
    pub fn grad_obs(&self, obs: &Observation, m: usize) -> Vec<GradEntry> {
        self.grad(self.input_key(obs), m)
    }

    fn input_key<'a>(&self, obs: &'a Observation) -> &'a [usize] {
        match self.arch {
            Arch::Table => std::slice::from_ref(&obs.id),
            Arch::Linear | Arch::Mlp => &obs.ones,
        }
    }

    /// Input width an architecture needs for an environment: tables are sized
    /// by the number of distinct observations, feature architectures by the
    /// feature vector length.
    pub fn input_dim_for(arch: Arch, num_observations: usize, feature_dim: usize) -> usize {
        match arch {
            Arch::Table => num_observations,
            Arch::Linear | Arch::Mlp => feature_dim,
        }
    }

    /// Gradient of output head `m` with respect to the parameters, as sparse
    /// coordinates. Scaling by a loss derivative is the caller's job.
    pub fn grad(&self, ones: &[usize], m: usize) -> Vec<GradEntry> {
        match self.arch {
            Arch::Table => vec![(ones[0] * self.outputs + m, 1.0)],
            Arch::Linear => ones.iter().map(|&j| (m * self.dim + j, 1.0)).collect(),
            Arch::Mlp => {
                let (h, pre) = self.mlp_hidden(ones);
                let w2 = MLP_HIDDEN * self.dim + MLP_HIDDEN;
                let b2 = w2 + self.outputs * MLP_HIDDEN;
                let mut out = Vec::with_capacity(MLP_HIDDEN * (ones.len() + 2) + 1);
                for u in 0..MLP_HIDDEN {
                    // Second-layer weight, then backprop through the ReLU.
                    out.push((w2 + m * MLP_HIDDEN + u, h[u]));
                    if pre[u] > 0.0 {
                        let up = self.values[w2 + m * MLP_HIDDEN + u];
                        out.push((MLP_HIDDEN * self.dim + u, up)); // hidden bias
                        for &j in ones {
                            out.push((u * self.dim + j, up));
                        }
                    }
                }
                out.push((b2 + m, 1.0));
                out
            }
        }
    }

    fn mlp_hidden(&self, ones: &[usize]) -> (Vec<f64>, Vec<f64>) {
        let mut pre = vec![0.0; MLP_HIDDEN];
        for u in 0..MLP_HIDDEN {
            let mut z = self.values[MLP_HIDDEN * self.dim + u];
            for &j in ones {
                z += self.values[u * self.dim + j];
            }
            pre[u] = z;
        }
        let h = pre.iter().map(|&z| z.max(0.0)).collect();
        (h, pre)
    }

    /// Write a versioned binary checkpoint: magic, version, role and arch
    /// tags, shape, then the raw little-endian values.
    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(b"PSET")?;
        f.write_all(&[1u8])?;
        f.write_all(&[match self.role {
            Role::StateValue => 0u8,
            Role::ActionValue => 1,
        }])?;
        f.write_all(&[match self.arch {
            Arch::Table => 0u8,
            Arch::Linear => 1,
            Arch::Mlp => 2,
        }])?;
        f.write_all(&(self.dim as u32).to_le_bytes())?;
        f.write_all(&(self.outputs as u32).to_le_bytes())?;
        f.write_all(&(self.values.len() as u64).to_le_bytes())?;
        for v in &self.values {
            f.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let mut f = std::fs::File::open(path)?;
        let mut magic = [0u8; 4];
        f.read_exact(&mut magic)?;
        if &magic != b"PSET" {
            return Err(CheckpointError::BadMagic);
        }
        let mut byte = [0u8; 1];
        f.read_exact(&mut byte)?;
        if byte[0] != 1 {
            return Err(CheckpointError::BadVersion(byte[0]));
        }
        f.read_exact(&mut byte)?;
        let role = match byte[0] {
            0 => Role::StateValue,
            1 => Role::ActionValue,
            t => return Err(CheckpointError::BadTag(t)),
        };
        f.read_exact(&mut byte)?;
        let arch = match byte[0] {
            0 => Arch::Table,
            1 => Arch::Linear,
            2 => Arch::Mlp,
            t => return Err(CheckpointError::BadTag(t)),
        };
        let mut four = [0u8; 4];
        f.read_exact(&mut four)?;
        let dim = u32::from_le_bytes(four) as usize;
        f.read_exact(&mut four)?;
        let outputs = u32::from_le_bytes(four) as usize;
        let mut eight = [0u8; 8];
        f.read_exact(&mut eight)?;
        let len = u64::from_le_bytes(eight) as usize;
        let expected = Self::len_for(arch, dim, outputs);
        if len != expected {
            return Err(CheckpointError::ShapeMismatch { expected, found: len });
        }
        let mut values = Vec::with_capacity(len);
        for _ in 0..len {
            f.read_exact(&mut eight)?;
            values.push(f64::from_le_bytes(eight));
        }
        Ok(ParamSet { arch, role, dim, outputs, values })
    }
}

/// Adam optimizer state over one flat parameter vector.
///
/// Updates arrive as sparse coordinate lists; moments for untouched
/// coordinates are left stale and caught up exactly (geometric decay of both
/// moments over the skipped steps) the next time the coordinate appears.
/// A coordinate with zero accumulated gradient in a step is never moved, and
/// for fully dense gradients the trajectory is identical to textbook Adam.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    /// Global step counter (bias correction uses this).
    step: u64,
    /// Step at which each coordinate's moments were last decayed.
    last: Vec<u64>,
}

impl AdamState {
    pub fn new(len: usize, lr: f64) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
            last: vec![0; len],
        }
    }

    /// Apply one optimizer step for the coordinates in `grad` (duplicate
    /// indices are summed first). Descends: pass the gradient of the loss.
    pub fn step(&mut self, params: &mut [f64], grad: &[GradEntry]) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        // Sum duplicates without hashing: sort a scratch copy.
        let mut entries: Vec<GradEntry> = grad.to_vec();
        entries.sort_unstable_by_key(|&(i, _)| i);
        let mut k = 0;
        while k < entries.len() {
            let (i, mut g) = entries[k];
            k += 1;
            while k < entries.len() && entries[k].0 == i {
                g += entries[k].1;
                k += 1;
            }
            let skipped = (self.step - 1).saturating_sub(self.last[i]);
            if skipped > 0 {
                self.m[i] *= self.beta1.powi(skipped as i32);
                self.v[i] *= self.beta2.powi(skipped as i32);
            }
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            self.last[i] = self.step;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Move `target` a fraction `tau` of the way toward `source`:
/// `target <- (1 - tau) * target + tau * source`. `tau = 0` is the identity
/// and `tau = 1` copies `source` exactly.
pub fn polyak_update(target: &mut [f64], source: &[f64], tau: f64) {
    debug_assert_eq!(target.len(), source.len());
    if tau == 0.0 {
        return;
    }
    if tau == 1.0 {
        target.copy_from_slice(source);
        return;
    }
    for (t, &s) in target.iter_mut().zip(source) {
        *t = (1.0 - tau) * *t + tau * s;
    }
}
