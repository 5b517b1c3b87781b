use crate::error::Result;
use crate::graph::{Graph, NodeId};
use crate::params::ParamSet;

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    /// Central-difference probe step.
    pub step: f64,
    /// Gradient magnitude below which errors are measured absolutely.
    pub abs_floor: f64,
    /// Check at most this many evenly spaced coordinates per parameter.
    pub max_coords_per_param: Option<usize>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            abs_floor: 1e-6,
            max_coords_per_param: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    /// Smallest |ReLU pre-activation| met during the analytic pass.
    pub relu_margin: f64,
    pub coords_checked: usize,
}

impl GradCheckReport {
    /// True when no ReLU input sits within a few probe steps of its kink.
    pub fn kink_free(&self, step: f64) -> bool {
        self.relu_margin > 10.0 * step
    }
}

fn coords(len: usize, limit: Option<usize>) -> Vec<usize> {
    match limit {
        Some(m) if m < len => (0..m).map(|i| i * len / m).collect(),
        _ => (0..len).collect(),
    }
}

/// Compares reverse-mode gradients of `loss` against central differences
/// for every (or a sample of every) parameter coordinate.
///
/// `loss` receives a fresh graph and the ids of `params` bound into it.
pub fn grad_check<F>(params: &ParamSet, loss: F, opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<'_>, &[NodeId]) -> Result<NodeId>,
{
    let (analytic, relu_margin) = {
        let mut g = Graph::new();
        let ids = params.bind(&mut g);
        let l = loss(&mut g, &ids)?;
        let grads = g.backward(l)?;
        (params.collect_grads(&ids, &grads), g.relu_margin())
    };

    let eval = |p: &ParamSet| -> Result<f64> {
        let mut g = Graph::new();
        let ids = p.bind_frozen(&mut g);
        let l = loss(&mut g, &ids)?;
        Ok(g.value(l).item())
    };

    let mut work = params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        relu_margin,
        coords_checked: 0,
    };
    let h = opts.step;
    for (pi, grad) in analytic.iter().enumerate() {
        for j in coords(grad.len(), opts.max_coords_per_param) {
            let orig = work.get(pi).data()[j];
            work.get_mut(pi).data_mut()[j] = orig + h;
            let up = eval(&work)?;
            work.get_mut(pi).data_mut()[j] = orig - h;
            let down = eval(&work)?;
            work.get_mut(pi).data_mut()[j] = orig;

            let numeric = (up - down) / (2.0 * h);
            let a = grad.data()[j];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(opts.abs_floor);
            report.coords_checked += 1;
            if err > report.max_rel_error || report.worst_param.is_empty() {
                report.max_rel_error = err;
                report.worst_param = params.name(pi).to_string();
                report.worst_index = j;
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}
