//! Static computation graph with reverse-mode differentiation.
//!
//! Nodes are appended in topological order, so a node id is always larger
//! than the ids of its inputs. Every node has a static output shape; spatial
//! activations are `[H, W, C]` and losses are `[1]`.

use super::params::{Gradients, Init, ParamSpec, ParamStore};
use crate::error::{Error, Result};
use crate::layers::{
    self, filter3_geometry, pool2_geometry, ConvGeometry, ConvSpec, DeconvSpec, DenseBlockSpec, PoolKind,
};
use crate::scalar::Real;
use crate::tensor::{Shape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    /// Bound by the caller at forward time.
    Input,
    /// Emits a parameter tensor as an activation.
    Param(ParamId),
    Conv {
        spec: ConvSpec,
        weight: ParamId,
        bias: ParamId,
        relu: bool,
    },
    Deconv {
        spec: DeconvSpec,
        weight: ParamId,
        bias: ParamId,
        relu: bool,
    },
    /// 2×2, stride 2, ceil mode.
    Pool2(PoolKind),
    /// 3×3 max, stride 1.
    MaxFilter3,
    Upsample,
    Concat,
    Relu,
    Add,
    Scale(f64),
    /// `mean((pred - target)^2)` over every element; inputs `[pred, target]`.
    Mse,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub op: Op,
    pub inputs: Vec<NodeId>,
    pub shape: Shape,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Graph {
    nodes: Vec<Node>,
    params: Vec<ParamSpec>,
}

fn hwc(shape: &Shape) -> (usize, usize, usize) {
    shape.as_hwc().expect("spatial node")
}

impl Graph {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn param_specs(&self) -> &[ParamSpec] {
        &self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.shape.numel()).sum()
    }

    pub fn inputs(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().filter(|n| n.op == Op::Input).map(|n| n.id)
    }

    fn ancestors(&self, targets: &[NodeId]) -> Vec<bool> {
        let mut need = vec![false; self.nodes.len()];
        for t in targets {
            need[t.0] = true;
        }
        for i in (0..self.nodes.len()).rev() {
            if need[i] {
                for inp in &self.nodes[i].inputs {
                    need[inp.0] = true;
                }
            }
        }
        need
    }

    fn bind<T: Real>(&self, inputs: &[(NodeId, &Tensor)], need: &[bool]) -> Result<Vec<Option<Vec<T>>>> {
        let mut values: Vec<Option<Vec<T>>> = vec![None; self.nodes.len()];
        for (id, t) in inputs {
            let node = self
                .nodes
                .get(id.0)
                .ok_or_else(|| Error::Graph(format!("no node {}", id.0)))?;
            if node.op != Op::Input {
                return Err(Error::Graph(format!("node {} is not an input", id.0)));
            }
            if t.shape() != &node.shape {
                return Err(Error::ShapeMismatch {
                    op: "bind input",
                    left: t.dims().to_vec(),
                    right: node.shape.dims().to_vec(),
                });
            }
            values[id.0] = Some(t.to_real_vec());
        }
        for node in &self.nodes {
            if node.op == Op::Input && need[node.id.0] && values[node.id.0].is_none() {
                return Err(Error::Graph(format!("input node {} is unbound", node.id.0)));
            }
        }
        Ok(values)
    }

    /// Evaluates every node.
    pub fn forward<T: Real>(&self, params: &ParamStore<T>, inputs: &[(NodeId, &Tensor)]) -> Result<Activations<T>> {
        let all: Vec<NodeId> = (0..self.nodes.len()).map(NodeId).collect();
        self.forward_to(params, inputs, &all)
    }

    /// Evaluates only the ancestors of `targets`.
    pub fn forward_to<T: Real>(
        &self,
        params: &ParamStore<T>,
        inputs: &[(NodeId, &Tensor)],
        targets: &[NodeId],
    ) -> Result<Activations<T>> {
        self.check_params(params)?;
        let need = self.ancestors(targets);
        let mut values = self.bind(inputs, &need)?;
        for node in &self.nodes {
            if !need[node.id.0] || node.op == Op::Input {
                continue;
            }
            let out = self.eval(node, params, &values);
            values[node.id.0] = Some(out);
        }
        Ok(Activations { values })
    }

    /// Inference-only pass: returns `output` and frees every intermediate
    /// once its last consumer has run.
    pub fn infer<T: Real>(
        &self,
        params: &ParamStore<T>,
        inputs: &[(NodeId, &Tensor)],
        output: NodeId,
    ) -> Result<Tensor> {
        self.check_params(params)?;
        let need = self.ancestors(&[output]);
        let mut last_use = vec![0usize; self.nodes.len()];
        for node in &self.nodes {
            if need[node.id.0] {
                for inp in &node.inputs {
                    last_use[inp.0] = node.id.0;
                }
            }
        }
        let mut values = self.bind(inputs, &need)?;
        for node in &self.nodes {
            if !need[node.id.0] || node.op == Op::Input {
                continue;
            }
            let out = self.eval(node, params, &values);
            values[node.id.0] = Some(out);
            for inp in &node.inputs {
                if last_use[inp.0] == node.id.0 && *inp != output {
                    values[inp.0] = None;
                }
            }
        }
        let data = values[output.0].take().expect("output computed");
        Tensor::from_vec(self.nodes[output.0].shape.clone(), data)
    }

    fn check_params<T: Real>(&self, params: &ParamStore<T>) -> Result<()> {
        if params.len() != self.params.len()
            || self
                .params
                .iter()
                .zip(params.ids())
                .any(|(spec, id)| params.shape(id) != &spec.shape)
        {
            return Err(Error::Graph("parameter store does not match graph layout".into()));
        }
        Ok(())
    }

    fn eval<T: Real>(&self, node: &Node, params: &ParamStore<T>, values: &[Option<Vec<T>>]) -> Vec<T> {
        let arg = |k: usize| -> &[T] { values[node.inputs[k].0].as_deref().expect("inputs evaluated first") };
        let in_shape = |k: usize| &self.nodes[node.inputs[k].0].shape;
        let mut out = vec![T::zero(); node.shape.numel()];
        match &node.op {
            Op::Input => unreachable!("inputs are bound, not evaluated"),
            Op::Param(p) => out.copy_from_slice(params.get(*p)),
            Op::Conv {
                spec,
                weight,
                bias,
                relu,
            } => {
                let (h, w, c) = hwc(in_shape(0));
                let g = spec.geometry(h, w);
                layers::conv2d_forward(
                    arg(0),
                    c,
                    &g,
                    params.get(*weight),
                    params.get(*bias),
                    spec.out_channels,
                    *relu,
                    &mut out,
                );
            }
            Op::Deconv {
                spec,
                weight,
                bias,
                relu,
            } => {
                let g = self.deconv_geometry(node, spec);
                layers::deconv2_forward(
                    arg(0),
                    spec.in_channels,
                    &g,
                    params.get(*weight),
                    params.get(*bias),
                    spec.out_channels,
                    *relu,
                    &mut out,
                );
            }
            Op::Pool2(kind) => {
                let (h, w, c) = hwc(in_shape(0));
                layers::pool_forward(*kind, arg(0), c, &pool2_geometry(h, w), &mut out);
            }
            Op::MaxFilter3 => {
                let (h, w, c) = hwc(in_shape(0));
                layers::pool_forward(PoolKind::Max, arg(0), c, &filter3_geometry(h, w), &mut out);
            }
            Op::Upsample => {
                let (th, tw, _) = hwc(&node.shape);
                layers::upsample_forward(arg(0), hwc(in_shape(0)), (th, tw), &mut out);
            }
            Op::Concat => {
                let widths: Vec<usize> = (0..node.inputs.len()).map(|k| hwc(in_shape(k)).2).collect();
                let total: usize = widths.iter().sum();
                let mut off = 0;
                for (k, &cw) in widths.iter().enumerate() {
                    for (dst, src) in out.chunks_exact_mut(total).zip(arg(k).chunks_exact(cw)) {
                        dst[off..off + cw].copy_from_slice(src);
                    }
                    off += cw;
                }
            }
            Op::Relu => layers::relu_forward(arg(0), &mut out),
            Op::Add => {
                for ((o, &a), &b) in out.iter_mut().zip(arg(0)).zip(arg(1)) {
                    *o = a + b;
                }
            }
            Op::Scale(k) => {
                let k = T::from_f64(*k);
                for (o, &a) in out.iter_mut().zip(arg(0)) {
                    *o = a * k;
                }
            }
            Op::Mse => {
                let (p, t) = (arg(0), arg(1));
                let sum: f64 = p.iter().zip(t).map(|(&a, &b)| (a - b).to_f64().powi(2)).sum();
                out[0] = T::from_f64(sum / p.len() as f64);
            }
        }
        out
    }

    fn deconv_geometry(&self, node: &Node, spec: &DeconvSpec) -> ConvGeometry {
        let (h, w, _) = hwc(&self.nodes[node.inputs[0].0].shape);
        let (th, tw, _) = hwc(&node.shape);
        spec.geometry(h, w, (th, tw)).expect("validated at build time")
    }

    /// Gradients of the scalar node `loss` with respect to every parameter.
    ///
    /// Adjoints are propagated in reverse node order; a node consumed by
    /// several others sums their contributions.
    pub fn backward<T: Real>(
        &self,
        params: &ParamStore<T>,
        acts: &Activations<T>,
        loss: NodeId,
    ) -> Result<Gradients<T>> {
        let loss_node = self
            .nodes
            .get(loss.0)
            .ok_or_else(|| Error::Graph(format!("no node {}", loss.0)))?;
        if loss_node.shape.numel() != 1 {
            return Err(Error::Graph(format!(
                "loss node {} is not scalar: shape {:?}",
                loss.0, loss_node.shape
            )));
        }
        if acts.get(loss).is_none() {
            return Err(Error::Graph("forward has not computed the loss node".into()));
        }

        let mut trainable = vec![false; self.nodes.len()];
        for node in &self.nodes {
            trainable[node.id.0] = matches!(node.op, Op::Param(_) | Op::Conv { .. } | Op::Deconv { .. })
                || node.inputs.iter().any(|i| trainable[i.0]);
        }

        let mut grads = Gradients::zeros_like(params);
        let mut adj: Vec<Option<Vec<T>>> = vec![None; self.nodes.len()];
        adj[loss.0] = Some(vec![T::one()]);

        for idx in (0..=loss.0).rev() {
            let Some(dy) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !trainable[idx] {
                continue;
            }
            let act = |id: NodeId| acts.values[id.0].as_deref().expect("activation retained");
            match &node.op {
                Op::Input => {}
                Op::Param(p) => {
                    for (g, &d) in grads.get_mut(*p).iter_mut().zip(&dy) {
                        *g += d;
                    }
                }
                Op::Conv {
                    spec,
                    weight,
                    bias,
                    relu,
                } => {
                    let dy = if *relu { mask_relu(act(node.id), dy) } else { dy };
                    let x = node.inputs[0];
                    let (h, w, c) = hwc(&self.nodes[x.0].shape);
                    let g = spec.geometry(h, w);
                    let (mut dw, mut db) = (grads.take(*weight), grads.take(*bias));
                    let dx = trainable[x.0].then(|| adjoint(&mut adj, x, &self.nodes[x.0].shape));
                    layers::conv2d_backward(
                        act(x),
                        c,
                        &g,
                        params.get(*weight),
                        spec.out_channels,
                        &dy,
                        &mut dw,
                        &mut db,
                        dx,
                    );
                    grads.put(*weight, dw);
                    grads.put(*bias, db);
                }
                Op::Deconv {
                    spec,
                    weight,
                    bias,
                    relu,
                } => {
                    let dy = if *relu { mask_relu(act(node.id), dy) } else { dy };
                    let x = node.inputs[0];
                    let g = self.deconv_geometry(node, spec);
                    let (mut dw, mut db) = (grads.take(*weight), grads.take(*bias));
                    let dx = trainable[x.0].then(|| adjoint(&mut adj, x, &self.nodes[x.0].shape));
                    layers::deconv2_backward(
                        act(x),
                        spec.in_channels,
                        &g,
                        params.get(*weight),
                        spec.out_channels,
                        &dy,
                        &mut dw,
                        &mut db,
                        dx,
                    );
                    grads.put(*weight, dw);
                    grads.put(*bias, db);
                }
                Op::Pool2(kind) => {
                    let x = node.inputs[0];
                    let (h, w, c) = hwc(&self.nodes[x.0].shape);
                    let dx = adjoint(&mut adj, x, &self.nodes[x.0].shape);
                    layers::pool_backward(*kind, act(x), c, &pool2_geometry(h, w), &dy, dx);
                }
                Op::MaxFilter3 => {
                    let x = node.inputs[0];
                    let (h, w, c) = hwc(&self.nodes[x.0].shape);
                    let dx = adjoint(&mut adj, x, &self.nodes[x.0].shape);
                    layers::pool_backward(PoolKind::Max, act(x), c, &filter3_geometry(h, w), &dy, dx);
                }
                Op::Upsample => {
                    let x = node.inputs[0];
                    let (th, tw, _) = hwc(&node.shape);
                    let dx = adjoint(&mut adj, x, &self.nodes[x.0].shape);
                    layers::upsample_backward(hwc(&self.nodes[x.0].shape), (th, tw), &dy, dx);
                }
                Op::Concat => {
                    let total = hwc(&node.shape).2;
                    let mut off = 0;
                    for &x in &node.inputs {
                        let cw = hwc(&self.nodes[x.0].shape).2;
                        if trainable[x.0] {
                            let dx = adjoint(&mut adj, x, &self.nodes[x.0].shape);
                            for (d, g) in dx.chunks_exact_mut(cw).zip(dy.chunks_exact(total)) {
                                for (a, &b) in d.iter_mut().zip(&g[off..off + cw]) {
                                    *a += b;
                                }
                            }
                        }
                        off += cw;
                    }
                }
                Op::Relu => {
                    let x = node.inputs[0];
                    let dx = adjoint(&mut adj, x, &self.nodes[x.0].shape);
                    layers::relu_backward(act(x), &dy, dx);
                }
                Op::Add => {
                    for &x in &node.inputs {
                        if trainable[x.0] {
                            let dx = adjoint(&mut adj, x, &self.nodes[x.0].shape);
                            for (a, &b) in dx.iter_mut().zip(&dy) {
                                *a += b;
                            }
                        }
                    }
                }
                Op::Scale(k) => {
                    let k = T::from_f64(*k);
                    let x = node.inputs[0];
                    let dx = adjoint(&mut adj, x, &self.nodes[x.0].shape);
                    for (a, &b) in dx.iter_mut().zip(&dy) {
                        *a += b * k;
                    }
                }
                Op::Mse => {
                    let (p, t) = (node.inputs[0], node.inputs[1]);
                    let (pv, tv) = (act(p), act(t));
                    let scale = dy[0] * T::from_f64(2.0 / pv.len() as f64);
                    for (x, sign) in [(p, T::one()), (t, -T::one())] {
                        if trainable[x.0] {
                            let dx = adjoint(&mut adj, x, &self.nodes[x.0].shape);
                            for ((a, &pp), &tt) in dx.iter_mut().zip(pv).zip(tv) {
                                *a += sign * scale * (pp - tt);
                            }
                        }
                    }
                }
            }
        }
        Ok(grads)
    }
}

fn mask_relu<T: Real>(y: &[T], mut dy: Vec<T>) -> Vec<T> {
    for (d, &v) in dy.iter_mut().zip(y) {
        if v <= T::zero() {
            *d = T::zero();
        }
    }
    dy
}

fn adjoint<'a, T: Real>(adj: &'a mut [Option<Vec<T>>], id: NodeId, shape: &Shape) -> &'a mut [T] {
    adj[id.0].get_or_insert_with(|| vec![T::zero(); shape.numel()])
}

/// Forward values, one buffer per evaluated node.
#[derive(Debug, Clone, PartialEq)]
pub struct Activations<T> {
    values: Vec<Option<Vec<T>>>,
}

impl<T: Real> Activations<T> {
    pub fn get(&self, id: NodeId) -> Option<&[T]> {
        self.values.get(id.0).and_then(|v| v.as_deref())
    }

    pub fn tensor(&self, graph: &Graph, id: NodeId) -> Option<Tensor> {
        let v = self.get(id)?;
        Tensor::from_vec(graph.node(id).shape.clone(), v.to_vec()).ok()
    }

    /// Value of a scalar node.
    pub fn scalar(&self, id: NodeId) -> Option<T> {
        self.get(id).and_then(|v| (v.len() == 1).then(|| v[0]))
    }
}

/// Appends nodes in topological order and validates shapes as it goes.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    graph: Graph,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn shape(&self, id: NodeId) -> &Shape {
        &self.graph.nodes[id.0].shape
    }

    pub fn finish(self) -> Graph {
        self.graph
    }

    fn push(&mut self, op: Op, inputs: Vec<NodeId>, shape: Shape) -> NodeId {
        let id = NodeId(self.graph.nodes.len());
        self.graph.nodes.push(Node { id, op, inputs, shape });
        id
    }

    fn spatial(&self, id: NodeId, op: &str) -> Result<(usize, usize, usize)> {
        self.graph
            .nodes
            .get(id.0)
            .ok_or_else(|| Error::Graph(format!("{op}: no node {}", id.0)))?
            .shape
            .as_hwc()
            .ok_or_else(|| Error::Graph(format!("{op}: node {} is not [H, W, C]", id.0)))
    }

    pub fn add_param(&mut self, name: impl Into<String>, dims: Vec<usize>, init: Init) -> Result<ParamId> {
        let name = name.into();
        if self.graph.params.iter().any(|p| p.name == name) {
            return Err(Error::Graph(format!("duplicate parameter name `{name}`")));
        }
        let id = ParamId(self.graph.params.len());
        self.graph.params.push(ParamSpec {
            name,
            shape: Shape::new(dims)?,
            init,
        });
        Ok(id)
    }

    pub fn input(&mut self, shape: Shape) -> NodeId {
        self.push(Op::Input, vec![], shape)
    }

    /// A parameter exposed as a node, e.g. to differentiate a parameter-free
    /// op with respect to its input.
    pub fn param_node(&mut self, name: impl Into<String>, shape: Shape, init: Init) -> Result<NodeId> {
        let p = self.add_param(name, shape.dims().to_vec(), init)?;
        Ok(self.push(Op::Param(p), vec![], shape))
    }

    pub fn conv(&mut self, x: NodeId, spec: ConvSpec, relu: bool, name: &str) -> Result<NodeId> {
        let init = Init::KaimingNormal { fan_in: spec.fan_in() };
        self.conv_with_init(x, spec, relu, name, init)
    }

    /// As [`GraphBuilder::conv`] with an explicit weight initializer.
    pub fn conv_with_init(&mut self, x: NodeId, spec: ConvSpec, relu: bool, name: &str, init: Init) -> Result<NodeId> {
        spec.validate()?;
        let (h, w, c) = self.spatial(x, "conv")?;
        if c != spec.in_channels {
            return Err(Error::Graph(format!(
                "conv `{name}`: input has {c} channels, spec expects {}",
                spec.in_channels
            )));
        }
        let weight = self.add_param(format!("{name}.weight"), spec.weight_dims().to_vec(), init)?;
        let bias = self.add_param(format!("{name}.bias"), vec![spec.out_channels], Init::Zeros)?;
        let g = spec.geometry(h, w);
        let shape = Shape::hwc(g.out_h, g.out_w, spec.out_channels)?;
        Ok(self.push(
            Op::Conv {
                spec,
                weight,
                bias,
                relu,
            },
            vec![x],
            shape,
        ))
    }

    pub fn deconv(
        &mut self,
        x: NodeId,
        out_channels: usize,
        target: (usize, usize),
        relu: bool,
        name: &str,
    ) -> Result<NodeId> {
        let (h, w, c) = self.spatial(x, "deconv")?;
        let spec = DeconvSpec::new(c, out_channels, 3);
        spec.geometry(h, w, target)?;
        let weight = self.add_param(
            format!("{name}.weight"),
            spec.weight_dims().to_vec(),
            Init::KaimingNormal { fan_in: spec.fan_in() },
        )?;
        let bias = self.add_param(format!("{name}.bias"), vec![out_channels], Init::Zeros)?;
        let shape = Shape::hwc(target.0, target.1, out_channels)?;
        Ok(self.push(
            Op::Deconv {
                spec,
                weight,
                bias,
                relu,
            },
            vec![x],
            shape,
        ))
    }

    pub fn pool2(&mut self, x: NodeId, kind: PoolKind) -> Result<NodeId> {
        let (h, w, c) = self.spatial(x, "pool2")?;
        let g = pool2_geometry(h, w);
        let shape = Shape::hwc(g.out_h, g.out_w, c)?;
        Ok(self.push(Op::Pool2(kind), vec![x], shape))
    }

    pub fn max_filter3(&mut self, x: NodeId) -> Result<NodeId> {
        let shape = self.shape(x).clone();
        self.spatial(x, "max_filter3")?;
        Ok(self.push(Op::MaxFilter3, vec![x], shape))
    }

    pub fn upsample(&mut self, x: NodeId, target: (usize, usize)) -> Result<NodeId> {
        let (h, w, c) = self.spatial(x, "upsample")?;
        if target.0 < h || target.1 < w {
            return Err(Error::Graph(format!(
                "upsample target {}x{} smaller than input {h}x{w}",
                target.0, target.1
            )));
        }
        let shape = Shape::hwc(target.0, target.1, c)?;
        Ok(self.push(Op::Upsample, vec![x], shape))
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::Graph("concat of zero tensors".into()))?;
        let (h, w, _) = self.spatial(first, "concat")?;
        let mut total = 0;
        for &p in parts {
            let (ph, pw, pc) = self.spatial(p, "concat")?;
            if (ph, pw) != (h, w) {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    left: vec![h, w],
                    right: vec![ph, pw],
                });
            }
            total += pc;
        }
        let shape = Shape::hwc(h, w, total)?;
        Ok(self.push(Op::Concat, parts.to_vec(), shape))
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        let shape = self.shape(x).clone();
        Ok(self.push(Op::Relu, vec![x], shape))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::ShapeMismatch {
                op: "add",
                left: self.shape(a).dims().to_vec(),
                right: self.shape(b).dims().to_vec(),
            });
        }
        let shape = self.shape(a).clone();
        Ok(self.push(Op::Add, vec![a, b], shape))
    }

    pub fn scale(&mut self, x: NodeId, k: f64) -> Result<NodeId> {
        let shape = self.shape(x).clone();
        Ok(self.push(Op::Scale(k), vec![x], shape))
    }

    pub fn mse(&mut self, pred: NodeId, target: NodeId) -> Result<NodeId> {
        if self.shape(pred) != self.shape(target) {
            return Err(Error::ShapeMismatch {
                op: "mse",
                left: self.shape(pred).dims().to_vec(),
                right: self.shape(target).dims().to_vec(),
            });
        }
        Ok(self.push(Op::Mse, vec![pred, target], Shape::new(vec![1])?))
    }

    /// Expands a dense block into primitive nodes. `side`, when given, is
    /// concatenated onto the dense features right before the transition conv.
    pub fn dense_block(
        &mut self,
        x: NodeId,
        spec: &DenseBlockSpec,
        side: Option<NodeId>,
        name: &str,
    ) -> Result<NodeId> {
        spec.validate()?;
        let (_, _, c) = self.spatial(x, "dense_block")?;
        if c != spec.in_channels {
            return Err(Error::Graph(format!(
                "dense block `{name}`: input has {c} channels, spec expects {}",
                spec.in_channels
            )));
        }
        let side_c = match side {
            Some(s) => self.spatial(s, "dense_block side")?.2,
            None => 0,
        };
        if side_c != spec.side_channels {
            return Err(Error::Graph(format!(
                "dense block `{name}`: side branch has {side_c} channels, spec expects {}",
                spec.side_channels
            )));
        }
        let mut features = x;
        for i in 0..spec.num_layers {
            let y = self.conv(features, spec.layer_spec(i), true, &format!("{name}.layer{i}"))?;
            features = self.concat(&[features, y])?;
        }
        if let Some(s) = side {
            features = self.concat(&[features, s])?;
        }
        self.conv(
            features,
            spec.transition_spec(),
            spec.relu_transition,
            &format!("{name}.transition"),
        )
    }
}
