//! Affine layers and ReLU MLPs whose weights live in a [`ParamSet`].
//!
//! Layers store indices into the parameter set; forward passes take the
//! node ids that the set was bound to, so the same architecture can run on
//! trainable, frozen or perturbed copies of its weights.

use poseae_autodiff::{Graph, NodeId, ParamSet, Tensor};
use rand::Rng;

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Linear {
    pub weight: usize,
    pub bias: usize,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    /// Registers `name.weight` (`[fan_in, fan_out]`) and `name.bias`.
    ///
    /// Weights are uniform with variance `2 / fan_in` when a ReLU follows
    /// and `1 / fan_in` otherwise; biases start at zero.
    pub fn init<R: Rng>(
        params: &mut ParamSet,
        rng: &mut R,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        relu_follows: bool,
    ) -> Self {
        let gain = if relu_follows { 6.0 } else { 3.0 };
        let bound = (gain / fan_in as f64).sqrt();
        let w = (0..fan_in * fan_out)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        let weight = params.push(
            format!("{name}.weight"),
            Tensor::new(vec![fan_in, fan_out], w).expect("shape matches data"),
        );
        let bias = params.push(format!("{name}.bias"), Tensor::zeros(&[fan_out]));
        Self {
            weight,
            bias,
            fan_in,
            fan_out,
        }
    }

    pub fn forward(&self, g: &mut Graph<'_>, ids: &[NodeId], x: NodeId) -> Result<NodeId> {
        let z = g.matmul(x, ids[self.weight])?;
        Ok(g.add(z, ids[self.bias])?)
    }

    /// Plain-`f64` evaluation of `x W + b` for one input row.
    pub fn apply(&self, params: &ParamSet, x: &[f64]) -> Vec<f64> {
        let w = params.get(self.weight).data();
        let mut out = params.get(self.bias).data().to_vec();
        for (i, xi) in x.iter().enumerate() {
            let row = &w[i * self.fan_out..(i + 1) * self.fan_out];
            for (o, wv) in out.iter_mut().zip(row) {
                *o += xi * wv;
            }
        }
        out
    }
}

/// Stack of affine layers with ReLU between them (and optionally after the
/// last one).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub relu_last: bool,
}

impl Mlp {
    /// `widths` lists every layer width including the input.
    pub fn init<R: Rng>(
        params: &mut ParamSet,
        rng: &mut R,
        name: &str,
        widths: &[usize],
        relu_last: bool,
    ) -> Self {
        let n = widths.len() - 1;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                Linear::init(
                    params,
                    rng,
                    &format!("{name}.{i}"),
                    w[0],
                    w[1],
                    i + 1 < n || relu_last,
                )
            })
            .collect();
        Self { layers, relu_last }
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].fan_in
    }

    pub fn output_len(&self) -> usize {
        self.layers.last().unwrap().fan_out
    }

    pub fn forward(&self, g: &mut Graph<'_>, ids: &[NodeId], x: NodeId) -> Result<NodeId> {
        let mut h = x;
        let n = self.layers.len();
        for (i, l) in self.layers.iter().enumerate() {
            h = l.forward(g, ids, h)?;
            if i + 1 < n || self.relu_last {
                h = g.relu(h)?;
            }
        }
        Ok(h)
    }
}

/// Copies `src` into `dst` after checking that names and shapes agree.
pub(crate) fn replace_params(dst: &mut ParamSet, src: ParamSet) -> Result<()> {
    if dst.len() != src.len() {
        return Err(crate::error::invalid!(
            "parameter count mismatch: model has {}, source has {}",
            dst.len(),
            src.len()
        ));
    }
    for i in 0..dst.len() {
        if dst.name(i) != src.name(i) || dst.get(i).shape() != src.get(i).shape() {
            return Err(crate::error::invalid!(
                "parameter {i} mismatch: `{}` {:?} vs `{}` {:?}",
                dst.name(i),
                dst.get(i).shape(),
                src.name(i),
                src.get(i).shape()
            ));
        }
    }
    *dst = src;
    Ok(())
}

/// Stacks rows into a `[rows, width]` tensor.
pub fn stack_rows(rows: &[Vec<f64>]) -> Result<Tensor> {
    let width = rows.first().map(Vec::len).unwrap_or(0);
    let mut data = Vec::with_capacity(rows.len() * width);
    for r in rows {
        if r.len() != width {
            return Err(crate::error::invalid!("ragged batch: {} vs {width}", r.len()));
        }
        data.extend_from_slice(r);
    }
    Ok(Tensor::new(vec![rows.len(), width], data)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_xoshiro::SplitMix64;

    #[test]
    fn apply_matches_graph() {
        let mut p = ParamSet::new();
        let mut rng = SplitMix64::seed_from_u64(0);
        let l = Linear::init(&mut p, &mut rng, "l", 4, 3, true);
        p.get_mut(l.bias).data_mut().copy_from_slice(&[0.1, -0.2, 0.3]);
        let x = vec![0.5, -1.0, 2.0, 0.25];
        let mut g = Graph::new();
        let ids = p.bind(&mut g);
        let xi = g.constant(Tensor::matrix(1, 4, x.clone()).unwrap());
        let y = l.forward(&mut g, &ids, xi).unwrap();
        let direct = l.apply(&p, &x);
        for (a, b) in g.value(y).data().iter().zip(&direct) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn mlp_shapes() {
        let mut p = ParamSet::new();
        let mut rng = SplitMix64::seed_from_u64(1);
        let m = Mlp::init(&mut p, &mut rng, "m", &[5, 7, 2], false);
        assert_eq!(p.len(), 4);
        assert_eq!(m.input_len(), 5);
        assert_eq!(m.output_len(), 2);
        assert_eq!(p.name(0), "m.0.weight");
    }
}
