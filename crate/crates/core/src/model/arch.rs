//! Multi-input CNN: one branch per input (three raw signals, three spectra,
//! three scalograms), each reducing its input to a common length, joined along
//! channels, a shared convolutional trunk, and one sigmoid head per fault.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dsp::{FeatureProfile, ModelInput};
use crate::error::{Error, Result};
use crate::nn::{LayerSpec, Network, NetworkSpec, ParamSet, Tensor};

/// Widths and join geometry of the diagnosis network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchConfig {
    /// Output channels of the two conv blocks in signal and spectrum branches.
    pub branch_widths: [usize; 2],
    /// Output channels of the two conv blocks in scalogram branches.
    pub cwt_widths: [usize; 2],
    /// Scale rows left after the scalogram branch reduces its height.
    pub cwt_rows: usize,
    /// Length every branch is reduced to before the join.
    pub join_len: usize,
    pub trunk_width: usize,
    pub head_units: usize,
}

impl ArchConfig {
    pub fn desk() -> Self {
        ArchConfig {
            branch_widths: [4, 8],
            cwt_widths: [4, 8],
            cwt_rows: 2,
            join_len: 16,
            trunk_width: 12,
            head_units: 32,
        }
    }

    pub fn paper_shape() -> Self {
        ArchConfig {
            branch_widths: [8, 16],
            cwt_widths: [8, 16],
            cwt_rows: 4,
            join_len: 16,
            trunk_width: 32,
            head_units: 64,
        }
    }

    pub fn for_profile(profile: &FeatureProfile) -> Self {
        if profile.name == "paper-shape" {
            Self::paper_shape()
        } else {
            Self::desk()
        }
    }
}

/// Splits a reduction factor into per-op factors (conv stride, pool, conv
/// stride, pool, ...), each at most 4, front-loaded. Two conv blocks are used
/// when they suffice, otherwise three.
fn plan_reduction(total: usize, what: &str) -> Result<Vec<usize>> {
    let mut primes = Vec::new();
    let mut r = total;
    for p in [2, 3] {
        while r % p == 0 {
            primes.push(p);
            r /= p;
        }
    }
    if r != 1 || total == 0 {
        return Err(Error::structural(
            what,
            format!("reduction factor {total} is not of the form 2^a 3^b"),
        ));
    }
    primes.sort_unstable_by(|a, b| b.cmp(a));
    'blocks: for blocks in 2..=3 {
        let mut ops = vec![1usize; 2 * blocks];
        let mut slot = 0;
        for &p in &primes {
            while slot < ops.len() && ops[slot] * p > 4 {
                slot += 1;
            }
            if slot == ops.len() {
                continue 'blocks;
            }
            ops[slot] *= p;
        }
        return Ok(ops);
    }
    Err(Error::structural(
        what,
        format!("reduction factor {total} needs more than three conv blocks"),
    ))
}

fn conv1d(in_ch: usize, out_ch: usize, stride: usize) -> LayerSpec {
    LayerSpec::Conv1d {
        in_ch,
        out_ch,
        kernel: stride + 2,
        stride,
        padding: 1,
    }
}

fn branch_1d(len: usize, widths: [usize; 2], join: usize, what: &str) -> Result<Vec<LayerSpec>> {
    if len % join != 0 {
        return Err(Error::structural(
            what,
            format!("length {len} is not a multiple of join length {join}"),
        ));
    }
    let ops = plan_reduction(len / join, what)?;
    let mut layers = Vec::new();
    let mut in_ch = 1;
    for (b, op) in ops.chunks(2).enumerate() {
        let out_ch = widths[b.min(1)];
        layers.extend([conv1d(in_ch, out_ch, op[0]), LayerSpec::Relu]);
        if op[1] > 1 {
            layers.push(LayerSpec::MaxPool {
                window: vec![op[1]],
            });
        }
        in_ch = out_ch;
    }
    Ok(layers)
}

fn branch_2d(rows: usize, cols: usize, arch: &ArchConfig, what: &str) -> Result<Vec<LayerSpec>> {
    if rows % arch.cwt_rows != 0 || cols % arch.join_len != 0 {
        return Err(Error::structural(
            what,
            format!(
                "scalogram {rows}x{cols} does not reduce to {}x{}",
                arch.cwt_rows, arch.join_len
            ),
        ));
    }
    let h = plan_reduction(rows / arch.cwt_rows, what)?;
    let w = plan_reduction(cols / arch.join_len, what)?;
    let conv = |in_ch, out_ch, sh: usize, sw: usize| LayerSpec::Conv2d {
        in_ch,
        out_ch,
        kernel: [sh + 2, sw + 2],
        stride: [sh, sw],
        padding: [1, 1],
    };
    let blocks = h.len().max(w.len()) / 2;
    let (mut h, mut w) = (h, w);
    h.resize(2 * blocks, 1);
    w.resize(2 * blocks, 1);
    let mut layers = Vec::new();
    let mut in_ch = 1;
    for b in 0..blocks {
        let out_ch = arch.cwt_widths[b.min(1)];
        layers.extend([conv(in_ch, out_ch, h[2 * b], w[2 * b]), LayerSpec::Relu]);
        if h[2 * b + 1] * w[2 * b + 1] > 1 {
            layers.push(LayerSpec::MaxPool {
                window: vec![h[2 * b + 1], w[2 * b + 1]],
            });
        }
        in_ch = out_ch;
    }
    layers.push(LayerSpec::Flatten { keep_trailing: 1 });
    Ok(layers)
}

/// Layer table for `profile` with `n_tasks` heads.
pub fn network_spec(
    profile: &FeatureProfile,
    arch: &ArchConfig,
    n_tasks: usize,
) -> Result<NetworkSpec> {
    if n_tasks == 0 {
        return Err(Error::structural("heads", "at least one task is required"));
    }
    let mut branches = Vec::new();
    for (c, ch) in profile.channels.iter().enumerate() {
        branches.push(branch_1d(
            ch.signal_len,
            arch.branch_widths,
            arch.join_len,
            &format!("signal{c}"),
        )?);
    }
    for (c, ch) in profile.channels.iter().enumerate() {
        branches.push(branch_1d(
            ch.spectrum_len,
            arch.branch_widths,
            arch.join_len,
            &format!("spectrum{c}"),
        )?);
    }
    for (c, ch) in profile.channels.iter().enumerate() {
        branches.push(branch_2d(
            ch.cwt_scales,
            ch.cwt_time,
            arch,
            &format!("scalogram{c}"),
        )?);
    }
    let n = profile.channels.len();
    let join_ch = n * (2 * arch.branch_widths[1] + arch.cwt_widths[1] * arch.cwt_rows);
    let trunk_len = arch.join_len / 2;
    let trunk = vec![
        conv1d(join_ch, arch.trunk_width, 2),
        LayerSpec::Relu,
        LayerSpec::Flatten { keep_trailing: 0 },
    ];
    let flat = arch.trunk_width * trunk_len;
    let heads = (0..n_tasks)
        .map(|_| {
            vec![
                LayerSpec::Dense {
                    inputs: flat,
                    units: arch.head_units,
                },
                LayerSpec::Relu,
                LayerSpec::Dense {
                    inputs: arch.head_units,
                    units: 1,
                },
                LayerSpec::Sigmoid,
            ]
        })
        .collect();
    Ok(NetworkSpec {
        input_shapes: profile.input_shapes(),
        branches,
        trunk,
        heads,
    })
}

/// Network plus its parameters. The network is shared; parameters are owned.
#[derive(Debug, Clone)]
pub struct DiagnosisModel {
    pub net: Arc<Network>,
    pub params: ParamSet<f32>,
    pub n_tasks: usize,
}

impl DiagnosisModel {
    pub fn param_count(&self) -> usize {
        self.params.param_count()
    }

    pub fn with_params(&self, params: ParamSet<f32>) -> Result<Self> {
        if !self.params.same_structure(&params) {
            return Err(Error::structural(
                "parameters",
                "parameter set does not match the model",
            ));
        }
        Ok(DiagnosisModel {
            net: self.net.clone(),
            params,
            n_tasks: self.n_tasks,
        })
    }

    /// Fault probabilities for one record.
    pub fn predict(&self, input: &ModelInput) -> Result<Vec<f64>> {
        predict_with(&self.net, &self.params, input)
    }
}

pub(crate) fn to_tensors(net: &Network, input: &ModelInput) -> Result<Vec<Tensor<f32>>> {
    let shapes = &net.spec().input_shapes;
    if input.0.len() != shapes.len() {
        return Err(Error::structural(
            "inputs",
            format!("expected {} inputs, got {}", shapes.len(), input.0.len()),
        ));
    }
    input
        .0
        .iter()
        .zip(shapes)
        .map(|(v, s)| {
            Tensor::new(s.clone(), v.clone())
                .map_err(|e| Error::structural("inputs", e.to_string()))
        })
        .collect()
}

pub fn predict_with(net: &Network, params: &ParamSet<f32>, input: &ModelInput) -> Result<Vec<f64>> {
    let y = net.predict(params, to_tensors(net, input)?)?;
    Ok(y.data.iter().map(|&v| v as f64).collect())
}

pub fn build_model(profile: &FeatureProfile, n_tasks: usize, seed: u64) -> Result<DiagnosisModel> {
    build_model_with(profile, &ArchConfig::for_profile(profile), n_tasks, seed)
}

pub fn build_model_with(
    profile: &FeatureProfile,
    arch: &ArchConfig,
    n_tasks: usize,
    seed: u64,
) -> Result<DiagnosisModel> {
    let net = Network::new(network_spec(profile, arch, n_tasks)?)?;
    let params = net.init_params(seed);
    Ok(DiagnosisModel {
        net: Arc::new(net),
        params,
        n_tasks,
    })
}
