//! Central finite-difference gradient checker.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, TrustError};
use crate::numerics::{Graph, Matrix, NodeId};

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    /// Finite-difference step.
    pub step: f64,
    /// When set, check this many coordinates per parameter, drawn with `seed`.
    pub max_coords_per_param: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-5,
            max_coords_per_param: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// (parameter index, flat coordinate) of the worst coordinate.
    pub worst: Option<(usize, usize)>,
    pub coords_checked: usize,
}

/// Compares analytic gradients from [`Graph::backward`] with central
/// differences of `loss_fn` for every coordinate of every parameter.
///
/// `loss_fn` receives a fresh graph and the parameter node ids (in the order
/// of `params`) and must return a 1×1 node. The error per coordinate is
/// `|analytic − numeric| / max(1, |analytic|, |numeric|)`.
pub fn grad_check<F>(loss_fn: F, params: &[Matrix], opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[NodeId]) -> Result<NodeId>,
{
    if !(opts.step > 0.0) {
        return Err(TrustError::InvalidArgument("finite-difference step must be > 0".into()));
    }
    let eval = |values: &[Matrix]| -> Result<(Graph, Vec<NodeId>, NodeId)> {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = values.iter().map(|m| g.param(m.clone())).collect();
        let out = loss_fn(&mut g, &ids)?;
        Ok((g, ids, out))
    };

    let (graph, ids, out) = eval(params)?;
    let grads = graph.backward(out)?;
    let analytic: Vec<Matrix> = ids
        .iter()
        .zip(params)
        .map(|(&id, p)| grads.get_or_zeros(id, p.rows(), p.cols()))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        coords_checked: 0,
    };
    let mut perturbed: Vec<Matrix> = params.to_vec();
    for (pi, p) in params.iter().enumerate() {
        let coords: Vec<usize> = match opts.max_coords_per_param {
            Some(k) if k < p.len() => {
                let mut c = sample(&mut rng, p.len(), k).into_vec();
                c.sort_unstable();
                c
            }
            _ => (0..p.len()).collect(),
        };
        for k in coords {
            let orig = p.as_slice()[k];
            perturbed[pi].as_mut_slice()[k] = orig + opts.step;
            let (g_plus, _, o_plus) = eval(&perturbed)?;
            perturbed[pi].as_mut_slice()[k] = orig - opts.step;
            let (g_minus, _, o_minus) = eval(&perturbed)?;
            perturbed[pi].as_mut_slice()[k] = orig;

            let numeric = (g_plus.scalar(o_plus) - g_minus.scalar(o_minus)) / (2.0 * opts.step);
            let a = analytic[pi].as_slice()[k];
            let err = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
            report.coords_checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = err;
                report.worst = Some((pi, k));
            }
        }
    }
    Ok(report)
}
