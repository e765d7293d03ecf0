use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{LatentError, LatentVector, ModelConfig, Result};
use crate::geometry::{Vec3, VoxelGrid};
use crate::tensor::{
    read_checkpoint, write_checkpoint, BatchNormMode, BatchStats, ParameterSet, Tape, Tensor, Var,
};

pub(crate) const BN_MOMENTUM: f64 = 0.1;

/// Autoencoder plus critic, with all weights and batch-norm buffers.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParameterSet,
}

/// JSON written next to a checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub config: ModelConfig,
    pub seed: u64,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// How a forward pass binds parameters onto the tape.
pub(crate) struct Binder<'a> {
    params: &'a ParameterSet,
    /// Registered as constants: no gradient, no statistics recorded.
    frozen_prefix: Option<&'static str>,
    train: bool,
    pub(crate) stats: Vec<(String, BatchStats)>,
}

impl<'a> Binder<'a> {
    pub(crate) fn new(params: &'a ParameterSet, train: bool) -> Self {
        Self {
            params,
            frozen_prefix: None,
            train,
            stats: Vec::new(),
        }
    }

    pub(crate) fn freezing(mut self, prefix: &'static str) -> Self {
        self.frozen_prefix = Some(prefix);
        self
    }

    fn frozen(&self, name: &str) -> bool {
        self.frozen_prefix.is_some_and(|p| name.starts_with(p))
    }

    fn var(&mut self, tape: &mut Tape, name: &str) -> Result<Var> {
        let t = self.params.get(name)?;
        Ok(if self.frozen(name) {
            tape.constant(t.clone())
        } else {
            tape.param(name, t)
        })
    }

    fn batchnorm(&mut self, tape: &mut Tape, prefix: &str, x: Var) -> Result<Var> {
        let scale = self.var(tape, &format!("{prefix}.scale"))?;
        let shift = self.var(tape, &format!("{prefix}.shift"))?;
        if self.train {
            let (y, stats) = tape.batchnorm(x, scale, shift, BatchNormMode::Train)?;
            if !self.frozen(prefix) {
                self.stats.push((prefix.to_string(), stats.expect("train mode")));
            }
            Ok(y)
        } else {
            let mean = self.params.get(&format!("{prefix}.running_mean"))?.data();
            let var = self.params.get(&format!("{prefix}.running_var"))?.data();
            let (y, _) = tape.batchnorm(x, scale, shift, BatchNormMode::Eval { mean, var })?;
            Ok(y)
        }
    }

    fn linear(&mut self, tape: &mut Tape, prefix: &str, x: Var) -> Result<Var> {
        let w = self.var(tape, &format!("{prefix}.weight"))?;
        let b = self.var(tape, &format!("{prefix}.bias"))?;
        Ok(tape.linear(x, w, b)?)
    }
}

impl Model {
    /// Glorot-uniform weights, zero biases, identity batch norms.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParameterSet::new();
        let k3 = config.kernel_size.pow(3);
        let kk = config.kernel_size;
        let ch = &config.channels;
        let layers = ch.len();

        let mut glorot = |params: &mut ParameterSet, name: String, shape: &[usize], fan_in, fan_out| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let t = Tensor::from_fn(shape, |_| rng.random_range(-limit..limit));
            params.insert(name, t)
        };
        let bn = |params: &mut ParameterSet, prefix: &str, c: usize| -> Result<()> {
            params.insert(format!("{prefix}.scale"), Tensor::full(&[c], 1.0))?;
            params.insert(format!("{prefix}.shift"), Tensor::zeros(&[c]))?;
            params.insert(format!("{prefix}.running_mean"), Tensor::zeros(&[c]))?;
            params.insert(format!("{prefix}.running_var"), Tensor::full(&[c], 1.0))?;
            Ok(())
        };
        let feat = config.feature_len();
        let latent = config.latent_dim;

        for net in ["enc", "critic"] {
            for i in 0..layers {
                let cin = if i == 0 { 1 } else { ch[i - 1] };
                glorot(
                    &mut params,
                    format!("{net}.conv{i}.weight"),
                    &[ch[i], cin, kk, kk, kk],
                    cin * k3,
                    ch[i] * k3,
                )?;
                params.insert(format!("{net}.conv{i}.bias"), Tensor::zeros(&[ch[i]]))?;
                bn(&mut params, &format!("{net}.bn{i}"), ch[i])?;
            }
            glorot(&mut params, format!("{net}.fc.weight"), &[latent, feat], feat, latent)?;
            params.insert(format!("{net}.fc.bias"), Tensor::zeros(&[latent]))?;
        }
        glorot(&mut params, "critic.out.weight".into(), &[1, latent], latent, 1)?;
        params.insert("critic.out.bias", Tensor::zeros(&[1]))?;

        glorot(&mut params, "dec.fc.weight".into(), &[feat, latent], latent, feat)?;
        params.insert("dec.fc.bias", Tensor::zeros(&[feat]))?;
        for j in 0..layers {
            let cin = ch[layers - 1 - j];
            let cout = if j + 1 < layers { ch[layers - 2 - j] } else { 1 };
            glorot(
                &mut params,
                format!("dec.tconv{j}.weight"),
                &[cin, cout, kk, kk, kk],
                cin * k3,
                cout * k3,
            )?;
            params.insert(format!("dec.tconv{j}.bias"), Tensor::zeros(&[cout]))?;
            if j + 1 < layers {
                bn(&mut params, &format!("dec.bn{j}"), cout)?;
            }
        }
        Ok(Self { config, params })
    }

    /// Stacks grids into a `[B, 1, R, R, R]` tensor.
    pub fn batch_tensor(&self, grids: &[&VoxelGrid]) -> Result<Tensor> {
        let r = self.config.resolution;
        let mut data = Vec::with_capacity(grids.len() * r * r * r);
        for g in grids {
            if g.resolution() != r {
                return Err(LatentError::Dimension(format!(
                    "grid resolution {} does not match model resolution {r}",
                    g.resolution()
                )));
            }
            data.extend_from_slice(g.occupancy());
        }
        Ok(Tensor::new(vec![grids.len(), 1, r, r, r], data)?)
    }

    fn conv_stack(&self, tape: &mut Tape, b: &mut Binder, net: &str, x: Var) -> Result<Var> {
        let (s, p) = (self.config.stride, self.config.padding());
        let mut h = x;
        for i in 0..self.config.channels.len() {
            let w = b.var(tape, &format!("{net}.conv{i}.weight"))?;
            let bias = b.var(tape, &format!("{net}.conv{i}.bias"))?;
            h = tape.conv3d(h, w, bias, s, p)?;
            h = b.batchnorm(tape, &format!("{net}.bn{i}"), h)?;
            h = tape.relu(h);
        }
        let batch = tape.value(h).shape()[0];
        Ok(tape.reshape(h, &[batch, self.config.feature_len()])?)
    }

    pub(crate) fn encoder(&self, tape: &mut Tape, b: &mut Binder, x: Var) -> Result<Var> {
        let h = self.conv_stack(tape, b, "enc", x)?;
        b.linear(tape, "enc.fc", h)
    }

    pub(crate) fn decoder(&self, tape: &mut Tape, b: &mut Binder, z: Var) -> Result<Var> {
        let c = &self.config;
        let batch = tape.value(z).shape()[0];
        let h = b.linear(tape, "dec.fc", z)?;
        let h = tape.relu(h);
        let side = c.bottleneck_side();
        let top = *c.channels.last().expect("validated");
        let mut h = tape.reshape(h, &[batch, top, side, side, side])?;
        let layers = c.channels.len();
        for j in 0..layers {
            let w = b.var(tape, &format!("dec.tconv{j}.weight"))?;
            let bias = b.var(tape, &format!("dec.tconv{j}.bias"))?;
            h = tape.conv3d_transposed(h, w, bias, c.stride, c.padding())?;
            if j + 1 < layers {
                h = b.batchnorm(tape, &format!("dec.bn{j}"), h)?;
                h = tape.relu(h);
            }
        }
        Ok(tape.sigmoid(h))
    }

    /// Raw critic output, shape `[B, 1]`.
    pub(crate) fn critic(&self, tape: &mut Tape, b: &mut Binder, x: Var) -> Result<Var> {
        let h = self.conv_stack(tape, b, "critic", x)?;
        let h = b.linear(tape, "critic.fc", h)?;
        let h = tape.relu(h);
        b.linear(tape, "critic.out", h)
    }

    pub fn encode(&self, grid: &VoxelGrid) -> Result<LatentVector> {
        Ok(self.encode_batch(&[grid])?.remove(0))
    }

    /// Eval-mode encoding; each row is independent of the rest of the batch.
    pub fn encode_batch(&self, grids: &[&VoxelGrid]) -> Result<Vec<LatentVector>> {
        let x = self.batch_tensor(grids)?;
        let mut tape = Tape::new();
        let mut b = Binder::new(&self.params, false);
        let xv = tape.constant(x);
        let z = self.encoder(&mut tape, &mut b, xv)?;
        Ok(tape
            .value(z)
            .data()
            .chunks(self.config.latent_dim)
            .map(|c| LatentVector::new(c.to_vec()))
            .collect::<Result<_>>()?)
    }

    /// Eval-mode decoding to a unit-spaced occupancy grid.
    pub fn decode(&self, z: &LatentVector) -> Result<VoxelGrid> {
        Ok(self.decode_batch(std::slice::from_ref(z))?.remove(0))
    }

    pub fn decode_batch(&self, zs: &[LatentVector]) -> Result<Vec<VoxelGrid>> {
        let d = self.config.latent_dim;
        if let Some(z) = zs.iter().find(|z| z.len() != d) {
            return Err(LatentError::Dimension(format!(
                "latent of length {} for latent dimension {d}",
                z.len()
            )));
        }
        if zs.is_empty() {
            return Ok(Vec::new());
        }
        let data: Vec<f64> = zs.iter().flat_map(|z| z.values().iter().copied()).collect();
        let mut tape = Tape::new();
        let mut b = Binder::new(&self.params, false);
        let zv = tape.constant(Tensor::new(vec![zs.len(), d], data)?);
        let out = self.decoder(&mut tape, &mut b, zv)?;
        let r = self.config.resolution;
        tape.value(out)
            .data()
            .chunks(r * r * r)
            .map(|c| Ok(VoxelGrid::from_occupancy(r, Vec3::zeros(), 1.0, c.to_vec())?))
            .collect()
    }

    /// Eval-mode critic output on one grid, unclamped.
    pub fn critic_score(&self, grid: &VoxelGrid) -> Result<f64> {
        let x = self.batch_tensor(&[grid])?;
        let mut tape = Tape::new();
        let mut b = Binder::new(&self.params, false);
        let xv = tape.constant(x);
        let c = self.critic(&mut tape, &mut b, xv)?;
        Ok(tape.value(c).data()[0])
    }

    /// Folds recorded train-mode statistics into the running buffers.
    pub(crate) fn update_running_stats(&mut self, stats: &[(String, BatchStats)]) -> Result<()> {
        for (prefix, s) in stats {
            let mean_name = format!("{prefix}.running_mean");
            let var_name = format!("{prefix}.running_var");
            let correction = if s.count > 1 {
                s.count as f64 / (s.count - 1) as f64
            } else {
                1.0
            };
            let rm = self.params.get(&mean_name)?;
            let rv = self.params.get(&var_name)?;
            let new_mean = Tensor::from_fn(rm.shape(), |i| {
                (1.0 - BN_MOMENTUM) * rm.data()[i] + BN_MOMENTUM * s.mean[i]
            });
            let new_var = Tensor::from_fn(rv.shape(), |i| {
                (1.0 - BN_MOMENTUM) * rv.data()[i] + BN_MOMENTUM * s.var[i] * correction
            });
            self.params.set(&mean_name, new_mean)?;
            self.params.set(&var_name, new_var)?;
        }
        Ok(())
    }

    /// Writes the binary checkpoint and its JSON sidecar.
    pub fn save(&self, path: &Path, seed: u64) -> Result<()> {
        write_checkpoint(BufWriter::new(File::create(path)?), &self.params)?;
        let meta = CheckpointMeta {
            config: self.config.clone(),
            seed,
        };
        std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&meta)? + "\n")?;
        Ok(())
    }

    /// Reads a checkpoint and sidecar; every parameter must match the config's shapes.
    pub fn load(path: &Path) -> Result<(Self, CheckpointMeta)> {
        let meta: CheckpointMeta = serde_json::from_str(&std::fs::read_to_string(sidecar_path(path))?)?;
        let params = read_checkpoint(BufReader::new(File::open(path)?))?;
        let template = Model::new(meta.config.clone(), 0)?;
        let expected: BTreeMap<&str, &[usize]> =
            template.params.iter().map(|(n, t)| (n, t.shape())).collect();
        let found: BTreeMap<&str, &[usize]> = params.iter().map(|(n, t)| (n, t.shape())).collect();
        if expected != found {
            return Err(LatentError::Dimension(
                "checkpoint parameters do not match its config".into(),
            ));
        }
        Ok((
            Self {
                config: meta.config.clone(),
                params,
            },
            meta,
        ))
    }
}
