//! Central-difference gradient checking in `f64`.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, NodeId, ParamId};
use super::params::{Gradients, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub eps: f64,
    /// Check at most this many elements per parameter (random subsample).
    pub max_per_param: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            eps: 1e-6,
            max_per_param: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mismatch {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    pub worst: Option<Mismatch>,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12)
}

fn loss_at(graph: &Graph, params: &ParamStore<f64>, inputs: &[(NodeId, &Tensor)], loss: NodeId) -> Result<f64> {
    graph
        .forward_to(params, inputs, &[loss])?
        .scalar(loss)
        .ok_or_else(|| Error::Graph("loss node is not scalar".into()))
}

/// Compares analytic gradients against `(L(p+eps) - L(p-eps)) / (2 eps)`.
pub fn grad_check(
    graph: &Graph,
    params: &ParamStore<f64>,
    inputs: &[(NodeId, &Tensor)],
    loss: NodeId,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let acts = graph.forward(params, inputs)?;
    let grads = graph.backward(params, &acts, loss)?;
    compare(graph, params, inputs, loss, &grads, opts)
}

/// As [`grad_check`], but against caller-supplied analytic gradients. Used to
/// confirm the checker notices a broken backward pass.
pub fn compare(
    graph: &Graph,
    params: &ParamStore<f64>,
    inputs: &[(NodeId, &Tensor)],
    loss: NodeId,
    grads: &Gradients<f64>,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut probe = params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        worst: None,
    };
    let ids: Vec<ParamId> = params.ids().collect();
    for id in ids {
        let n = params.get(id).len();
        let picks: Vec<usize> = match opts.max_per_param {
            Some(k) if k < n => {
                let mut v = sample(&mut rng, n, k).into_vec();
                v.sort_unstable();
                v
            }
            _ => (0..n).collect(),
        };
        for i in picks {
            let orig = params.get(id)[i];
            probe.get_mut(id)[i] = orig + opts.eps;
            let up = loss_at(graph, &probe, inputs, loss)?;
            probe.get_mut(id)[i] = orig - opts.eps;
            let down = loss_at(graph, &probe, inputs, loss)?;
            probe.get_mut(id)[i] = orig;

            let numeric = (up - down) / (2.0 * opts.eps);
            let analytic = grads.get(id)[i];
            let err = relative_error(analytic, numeric);
            report.checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = Some(Mismatch {
                    param: params.name(id).to_string(),
                    index: i,
                    analytic,
                    numeric,
                    rel_error: err,
                });
            }
        }
    }
    Ok(report)
}
