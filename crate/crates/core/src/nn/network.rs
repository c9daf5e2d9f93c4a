//! Multi-input networks: parallel branches joined by channel concatenation,
//! a shared trunk, and independent heads whose outputs are stacked.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layer::{self, LayerCache, LayerSpec};
use super::params::{ParamArray, ParamSet, Partition};
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};
use crate::seed::{self, stream};

/// Layer graph. With no heads the trunk output is the network output; with
/// heads, each head's output is flattened and the results concatenated.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_shapes: Vec<Vec<usize>>,
    pub branches: Vec<Vec<LayerSpec>>,
    pub trunk: Vec<LayerSpec>,
    pub heads: Vec<Vec<LayerSpec>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stage {
    Branch(usize),
    Trunk,
    Head(usize),
}

#[derive(Debug, Clone)]
struct Node {
    spec: LayerSpec,
    out_shape: Vec<usize>,
    /// Index of the weight array; the bias follows it.
    param: Option<usize>,
}

/// A shape-checked network with a fixed parameter layout.
#[derive(Debug, Clone)]
pub struct Network {
    spec: NetworkSpec,
    stages: Vec<(Stage, Vec<Node>)>,
    branch_out: Vec<Vec<usize>>,
    trunk_in: Vec<usize>,
    layout: ParamSet<f32>,
    output_len: usize,
    signature: u64,
}

/// Activations kept by [`Network::forward`] for one sample.
#[derive(Debug)]
pub struct ForwardCache<F> {
    signature: u64,
    layers: Vec<Vec<Option<LayerCache<F>>>>,
}

fn stage_name(stage: Stage, i: usize) -> String {
    match stage {
        Stage::Branch(b) => format!("branch{b}.{i}"),
        Stage::Trunk => format!("trunk.{i}"),
        Stage::Head(h) => format!("head{h}.{i}"),
    }
}

impl Network {
    pub fn new(spec: NetworkSpec) -> Result<Self> {
        if spec.branches.is_empty() || spec.branches.len() != spec.input_shapes.len() {
            return Err(Error::structural(
                "network",
                format!(
                    "{} branches for {} inputs",
                    spec.branches.len(),
                    spec.input_shapes.len()
                ),
            ));
        }
        let mut arrays: Vec<ParamArray<f32>> = Vec::new();
        let mut stages = Vec::new();

        let build = |stage: Stage,
                     layers: &[LayerSpec],
                     mut shape: Vec<usize>,
                     arrays: &mut Vec<ParamArray<f32>>| {
            let mut nodes = Vec::with_capacity(layers.len());
            for (i, l) in layers.iter().enumerate() {
                let name = stage_name(stage, i);
                let out = l.output_shape(&shape, &name)?;
                let param = l.param_shapes().map(|(ws, bs, _)| {
                    let partition = match stage {
                        Stage::Head(h) => Partition::Head(h as u32),
                        _ => Partition::Common,
                    };
                    let idx = arrays.len();
                    for (suffix, s) in [("weight", ws), ("bias", bs)] {
                        let n = s.iter().product();
                        arrays.push(ParamArray {
                            name: format!("{name}.{suffix}"),
                            partition,
                            shape: s,
                            values: vec![0.0; n],
                        });
                    }
                    idx
                });
                nodes.push(Node {
                    spec: l.clone(),
                    out_shape: out.clone(),
                    param,
                });
                shape = out;
            }
            Ok::<_, Error>((nodes, shape))
        };

        let mut branch_out = Vec::new();
        for (b, (layers, input)) in spec.branches.iter().zip(&spec.input_shapes).enumerate() {
            let (nodes, out) = build(Stage::Branch(b), layers, input.clone(), &mut arrays)?;
            stages.push((Stage::Branch(b), nodes));
            branch_out.push(out);
        }
        let trunk_in = if branch_out.len() == 1 {
            branch_out[0].clone()
        } else {
            let tail = &branch_out[0][1..];
            if let Some((b, s)) = branch_out
                .iter()
                .enumerate()
                .find(|(_, s)| s.is_empty() || &s[1..] != tail)
            {
                return Err(Error::structural(
                    "join (concat)",
                    format!("branch {b} output {s:?} does not match trailing dims {tail:?}"),
                ));
            }
            let mut s = vec![branch_out.iter().map(|s| s[0]).sum()];
            s.extend_from_slice(tail);
            s
        };
        let (trunk_nodes, trunk_out) =
            build(Stage::Trunk, &spec.trunk, trunk_in.clone(), &mut arrays)?;
        stages.push((Stage::Trunk, trunk_nodes));
        let mut output_len = trunk_out.iter().product();
        if !spec.heads.is_empty() {
            output_len = 0;
            for (h, layers) in spec.heads.iter().enumerate() {
                let (nodes, out) = build(Stage::Head(h), layers, trunk_out.clone(), &mut arrays)?;
                output_len += out.iter().product::<usize>();
                stages.push((Stage::Head(h), nodes));
            }
        }
        let mut hasher = DefaultHasher::new();
        spec.hash(&mut hasher);
        Ok(Network {
            signature: hasher.finish(),
            spec,
            stages,
            branch_out,
            trunk_in,
            layout: ParamSet { arrays },
            output_len,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn output_len(&self) -> usize {
        self.output_len
    }

    pub fn param_count(&self) -> usize {
        self.layout.param_count()
    }

    /// Zero-valued parameter set with this network's layout.
    pub fn zero_params<F: Scalar>(&self) -> ParamSet<F> {
        self.layout.cast()
    }

    /// He-uniform weights `U(-sqrt(6/fan_in), sqrt(6/fan_in))`, zero biases.
    pub fn init_params(&self, seed: u64) -> ParamSet<f32> {
        let mut p = self.layout.clone();
        for (_, nodes) in &self.stages {
            for node in nodes {
                if let (Some(idx), Some((_, _, fan_in))) = (node.param, node.spec.param_shapes()) {
                    let limit = (6.0 / fan_in as f64).sqrt();
                    let mut rng = seed::rng(seed, &[stream::INIT, idx as u64]);
                    for v in p.arrays[idx].values.iter_mut() {
                        *v = (rng.random::<f64>() * 2.0 * limit - limit) as f32;
                    }
                }
            }
        }
        p
    }

    fn check_params<F: Scalar>(&self, params: &ParamSet<F>) -> Result<()> {
        if self.layout.same_structure(params) {
            Ok(())
        } else {
            Err(Error::structural(
                "parameters",
                "parameter set does not match the network layout",
            ))
        }
    }

    fn check_inputs<F: Scalar>(&self, inputs: &[Tensor<F>]) -> Result<()> {
        if inputs.len() != self.spec.input_shapes.len() {
            return Err(Error::structural(
                "inputs",
                format!(
                    "expected {} inputs, got {}",
                    self.spec.input_shapes.len(),
                    inputs.len()
                ),
            ));
        }
        for (i, (t, s)) in inputs.iter().zip(&self.spec.input_shapes).enumerate() {
            if &t.shape != s {
                return Err(Error::structural(
                    format!("branch{i}.input"),
                    format!("expected shape {s:?}, got {:?}", t.shape),
                ));
            }
        }
        Ok(())
    }

    fn wb<'a, F: Scalar>(params: &'a ParamSet<F>, node: &Node) -> Option<(&'a [F], &'a [F])> {
        node.param.map(|i| {
            (
                params.arrays[i].values.as_slice(),
                params.arrays[i + 1].values.as_slice(),
            )
        })
    }

    fn run<F: Scalar>(
        &self,
        params: &ParamSet<F>,
        inputs: Vec<Tensor<F>>,
        keep: bool,
    ) -> (Tensor<F>, Vec<Vec<Option<LayerCache<F>>>>) {
        let mut caches = Vec::with_capacity(self.stages.len());
        let run_stage = |nodes: &[Node],
                         mut x: Tensor<F>,
                         caches: &mut Vec<Vec<Option<LayerCache<F>>>>| {
            let mut c = Vec::with_capacity(nodes.len());
            for node in nodes {
                let (y, cache) =
                    layer::forward(&node.spec, Self::wb(params, node), x, &node.out_shape, keep);
                c.push(cache);
                x = y;
            }
            caches.push(c);
            x
        };
        let n_branches = self.branch_out.len();
        let mut joined = Vec::with_capacity(self.trunk_in.iter().product());
        for ((_, nodes), x) in self.stages[..n_branches].iter().zip(inputs) {
            let y = run_stage(nodes, x, &mut caches);
            joined.extend_from_slice(&y.data);
        }
        let trunk_in = Tensor {
            shape: self.trunk_in.clone(),
            data: joined,
        };
        let trunk_out = run_stage(&self.stages[n_branches].1, trunk_in, &mut caches);
        if self.spec.heads.is_empty() {
            return (trunk_out, caches);
        }
        let mut out = Vec::with_capacity(self.output_len);
        for (_, nodes) in &self.stages[n_branches + 1..] {
            let y = run_stage(nodes, trunk_out.clone(), &mut caches);
            out.extend_from_slice(&y.data);
        }
        (Tensor::from_vec(out), caches)
    }

    /// Inference without keeping activations.
    pub fn predict<F: Scalar>(
        &self,
        params: &ParamSet<F>,
        inputs: Vec<Tensor<F>>,
    ) -> Result<Tensor<F>> {
        self.check_params(params)?;
        self.check_inputs(&inputs)?;
        Ok(self.run(params, inputs, false).0)
    }

    pub fn forward<F: Scalar>(
        &self,
        params: &ParamSet<F>,
        inputs: Vec<Tensor<F>>,
    ) -> Result<(Tensor<F>, ForwardCache<F>)> {
        self.check_params(params)?;
        self.check_inputs(&inputs)?;
        let (y, layers) = self.run(params, inputs, true);
        Ok((
            y,
            ForwardCache {
                signature: self.signature,
                layers,
            },
        ))
    }

    /// Adds the parameter gradient of `<out_grad, output>` to `grads`.
    pub fn backward_into<F: Scalar>(
        &self,
        params: &ParamSet<F>,
        cache: ForwardCache<F>,
        out_grad: &Tensor<F>,
        grads: &mut ParamSet<F>,
    ) -> Result<()> {
        if cache.signature != self.signature || cache.layers.len() != self.stages.len() {
            return Err(Error::Usage(
                "forward cache was produced by a different network".into(),
            ));
        }
        if out_grad.numel() != self.output_len {
            return Err(Error::Usage(format!(
                "output gradient has {} values, network output has {}",
                out_grad.numel(),
                self.output_len
            )));
        }
        self.check_params(params)?;
        self.check_params(grads)?;
        let n_branches = self.branch_out.len();
        let mut caches = cache.layers;

        let mut back_stage =
            |stage_idx: usize, mut dy: Tensor<F>, caches: &mut Vec<Vec<Option<LayerCache<F>>>>| {
                let nodes = &self.stages[stage_idx].1;
                let stage_caches = std::mem::take(&mut caches[stage_idx]);
                for (node, c) in nodes.iter().zip(stage_caches).rev() {
                    let c = c.expect("forward cache kept");
                    let wb = Self::wb(params, node);
                    dy = match node.param {
                        Some(i) => {
                            let (lo, hi) = grads.arrays.split_at_mut(i + 1);
                            let gwb =
                                Some((lo[i].values.as_mut_slice(), hi[0].values.as_mut_slice()));
                            layer::backward(&node.spec, wb, gwb, c, dy)
                        }
                        None => layer::backward(&node.spec, wb, None, c, dy),
                    };
                }
                dy
            };

        let trunk_out_shape = self.stages[n_branches]
            .1
            .last()
            .map_or(self.trunk_in.clone(), |n| n.out_shape.clone());
        let d_trunk_out = if self.spec.heads.is_empty() {
            Tensor {
                shape: trunk_out_shape,
                data: out_grad.data.clone(),
            }
        } else {
            let mut acc = Tensor::zeros(trunk_out_shape);
            let mut off = 0;
            for h in 0..self.spec.heads.len() {
                let stage_idx = n_branches + 1 + h;
                let shape = self.stages[stage_idx]
                    .1
                    .last()
                    .map_or(acc.shape.clone(), |n| n.out_shape.clone());
                let n: usize = shape.iter().product();
                let dy = Tensor {
                    shape,
                    data: out_grad.data[off..off + n].to_vec(),
                };
                off += n;
                let dx = back_stage(stage_idx, dy, &mut caches);
                for (a, b) in acc.data.iter_mut().zip(&dx.data) {
                    *a += *b;
                }
            }
            acc
        };
        let d_join = back_stage(n_branches, d_trunk_out, &mut caches);
        let mut off = 0;
        for b in 0..n_branches {
            let shape = self.branch_out[b].clone();
            let n: usize = shape.iter().product();
            let dy = Tensor {
                shape,
                data: d_join.data[off..off + n].to_vec(),
            };
            off += n;
            back_stage(b, dy, &mut caches);
        }
        Ok(())
    }

    /// Gradient of `<out_grad, output>` alone.
    pub fn backward<F: Scalar>(
        &self,
        params: &ParamSet<F>,
        cache: ForwardCache<F>,
        out_grad: &Tensor<F>,
    ) -> Result<ParamSet<F>> {
        let mut g = self.zero_params();
        self.backward_into(params, cache, out_grad, &mut g)?;
        Ok(g)
    }
}

/// Single-input, single-path network.
pub fn sequential(input_shape: Vec<usize>, layers: Vec<LayerSpec>) -> Result<Network> {
    Network::new(NetworkSpec {
        input_shapes: vec![input_shape],
        branches: vec![layers],
        trunk: vec![],
        heads: vec![],
    })
}
