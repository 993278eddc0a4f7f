use rand::Rng;

use crate::autodiff::{Graph, NodeId, ParamId, ParamStore, Real, Tensor};
use crate::error::{Error, Result};

/// Weights of one GRU direction. `W_*` are `[h, d]`, `U_*` are `[h, h]`,
/// biases `[h]`.
#[derive(Debug, Clone, Copy)]
pub struct GruCellParams {
    pub w_z: ParamId,
    pub w_r: ParamId,
    pub w_h: ParamId,
    pub u_z: ParamId,
    pub u_r: ParamId,
    pub u_h: ParamId,
    pub b_z: ParamId,
    pub b_r: ParamId,
    pub b_h: ParamId,
    pub input_dim: usize,
    pub hidden: usize,
}

fn uniform<F: Real, R: Rng>(rng: &mut R, shape: &[usize], fan: usize) -> Tensor<F> {
    let bound = 1.0 / (fan as f64).sqrt();
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = F::from_f64_lossy(rng.gen_range(-bound..bound));
    }
    t
}

impl GruCellParams {
    /// `W_*` ~ uniform(±1/√d), `U_*` ~ uniform(±1/√h), zero biases.
    pub fn register<F: Real, R: Rng>(
        store: &mut ParamStore<F>,
        prefix: &str,
        input_dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut add = |name: &str, t: Tensor<F>| store.add(format!("{prefix}.{name}"), t);
        let w_z = add("W_z", uniform(rng, &[hidden, input_dim], input_dim))?;
        let w_r = add("W_r", uniform(rng, &[hidden, input_dim], input_dim))?;
        let w_h = add("W_h", uniform(rng, &[hidden, input_dim], input_dim))?;
        let u_z = add("U_z", uniform(rng, &[hidden, hidden], hidden))?;
        let u_r = add("U_r", uniform(rng, &[hidden, hidden], hidden))?;
        let u_h = add("U_h", uniform(rng, &[hidden, hidden], hidden))?;
        let b_z = add("b_z", Tensor::zeros(&[hidden]))?;
        let b_r = add("b_r", Tensor::zeros(&[hidden]))?;
        let b_h = add("b_h", Tensor::zeros(&[hidden]))?;
        Ok(GruCellParams {
            w_z,
            w_r,
            w_h,
            u_z,
            u_r,
            u_h,
            b_z,
            b_r,
            b_h,
            input_dim,
            hidden,
        })
    }

    pub(crate) fn nodes<F: Real>(&self, g: &mut Graph<F>, store: &ParamStore<F>) -> Result<GruNodes> {
        Ok(GruNodes {
            w_z: g.param(store, self.w_z)?,
            w_r: g.param(store, self.w_r)?,
            w_h: g.param(store, self.w_h)?,
            u_z: g.param(store, self.u_z)?,
            u_r: g.param(store, self.u_r)?,
            u_h: g.param(store, self.u_h)?,
            b_z: g.param(store, self.b_z)?,
            b_r: g.param(store, self.b_r)?,
            b_h: g.param(store, self.b_h)?,
        })
    }
}

/// A GRU direction's parameters placed on a tape.
#[derive(Debug, Clone, Copy)]
pub(crate) struct GruNodes {
    w_z: NodeId,
    w_r: NodeId,
    w_h: NodeId,
    u_z: NodeId,
    u_r: NodeId,
    u_h: NodeId,
    b_z: NodeId,
    b_r: NodeId,
    b_h: NodeId,
}

/// Input projections `x·W_*ᵀ` for a block of inputs, computed once per
/// sequence and sliced per time step.
pub(crate) struct InputProjections {
    z: NodeId,
    r: NodeId,
    h: NodeId,
}

impl GruNodes {
    pub(crate) fn project<F: Real>(&self, g: &mut Graph<F>, x: NodeId) -> Result<InputProjections> {
        Ok(InputProjections {
            z: g.matmul_t(x, self.w_z)?,
            r: g.matmul_t(x, self.w_r)?,
            h: g.matmul_t(x, self.w_h)?,
        })
    }

    /// One step for rows `[start, start + rows)` of the projected inputs.
    pub(crate) fn step<F: Real>(
        &self,
        g: &mut Graph<F>,
        proj: &InputProjections,
        start: usize,
        rows: usize,
        h_prev: NodeId,
    ) -> Result<NodeId> {
        let xz = g.slice(proj.z, 0, start, rows)?;
        let xr = g.slice(proj.r, 0, start, rows)?;
        let xh = g.slice(proj.h, 0, start, rows)?;

        let hz = g.matmul_t(h_prev, self.u_z)?;
        let z = g.add(xz, hz)?;
        let z = g.add(z, self.b_z)?;
        let z = g.sigmoid(z)?;

        let hr = g.matmul_t(h_prev, self.u_r)?;
        let r = g.add(xr, hr)?;
        let r = g.add(r, self.b_r)?;
        let r = g.sigmoid(r)?;

        let gated = g.mul(r, h_prev)?;
        let hh = g.matmul_t(gated, self.u_h)?;
        let cand = g.add(xh, hh)?;
        let cand = g.add(cand, self.b_h)?;
        let cand = g.tanh(cand)?;

        let shape = g.value(z).shape().to_vec();
        let ones = g.constant(Tensor::full(&shape, F::one()))?;
        let keep = g.sub(ones, z)?;
        let kept = g.mul(keep, h_prev)?;
        let update = g.mul(z, cand)?;
        g.add(kept, update)
    }
}

/// `z = σ(W_z x + U_z h + b_z)`, `r = σ(W_r x + U_r h + b_r)`,
/// `ĥ = tanh(W_h x + U_h (r ⊙ h) + b_h)`, `h' = (1 − z) ⊙ h + z ⊙ ĥ`.
///
/// `x` is `[B, d]` and `h_prev` is `[B, h]`.
pub fn gru_cell<F: Real>(
    g: &mut Graph<F>,
    store: &ParamStore<F>,
    params: &GruCellParams,
    x: NodeId,
    h_prev: NodeId,
) -> Result<NodeId> {
    let (rows, d) = g.value(x).dims2();
    let (h_rows, h) = g.value(h_prev).dims2();
    if d != params.input_dim || h != params.hidden || rows != h_rows {
        return Err(Error::shape(
            "gru_cell",
            format!(
                "x {:?}, h {:?} for cell d={} h={}",
                g.value(x).shape(),
                g.value(h_prev).shape(),
                params.input_dim,
                params.hidden
            ),
        ));
    }
    let nodes = params.nodes(g, store)?;
    let proj = nodes.project(g, x)?;
    nodes.step(g, &proj, 0, rows, h_prev)
}

/// Forward and backward GRU directions.
#[derive(Debug, Clone, Copy)]
pub struct BiGruParams {
    pub forward: GruCellParams,
    pub backward: GruCellParams,
}

impl BiGruParams {
    pub fn register<F: Real, R: Rng>(
        store: &mut ParamStore<F>,
        input_dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let forward = GruCellParams::register(store, "gru.fwd", input_dim, hidden, rng)?;
        let backward = GruCellParams::register(store, "gru.bwd", input_dim, hidden, rng)?;
        Ok(BiGruParams { forward, backward })
    }

    pub fn output_dim(&self) -> usize {
        2 * self.forward.hidden
    }
}

/// Runs both directions over `xs`, a `[len * rows, d]` block in time-major
/// order (row `t * rows + b`). `mask[t * rows + b]` marks real positions;
/// at padded positions the state is carried through unchanged.
///
/// Returns `[len * rows, 2h]` in the same order, each row `[h_fwd ; h_bwd]`.
pub fn bigru_forward<F: Real>(
    g: &mut Graph<F>,
    store: &ParamStore<F>,
    params: &BiGruParams,
    xs: NodeId,
    rows: usize,
    mask: &[bool],
) -> Result<NodeId> {
    let (slots, d) = g.value(xs).dims2();
    if rows == 0 || slots % rows != 0 || mask.len() != slots || d != params.forward.input_dim {
        return Err(Error::shape(
            "bigru_forward",
            format!(
                "inputs {:?}, {rows} rows, mask of {} for input dim {}",
                g.value(xs).shape(),
                mask.len(),
                params.forward.input_dim
            ),
        ));
    }
    let len = slots / rows;
    let hidden = params.forward.hidden;

    let fwd = params.forward.nodes(g, store)?;
    let bwd = params.backward.nodes(g, store)?;
    let fwd_proj = fwd.project(g, xs)?;
    let bwd_proj = bwd.project(g, xs)?;

    let zero = g.constant(Tensor::zeros(&[rows, hidden]))?;
    let run = |g: &mut Graph<F>, nodes: &GruNodes, proj: &InputProjections, order: Vec<usize>| -> Result<Vec<NodeId>> {
        let mut states = vec![zero; len];
        let mut h = zero;
        for t in order {
            let step_mask = &mask[t * rows..(t + 1) * rows];
            if step_mask.iter().any(|&m| m) {
                let next = nodes.step(g, proj, t * rows, rows, h)?;
                h = if step_mask.iter().all(|&m| m) {
                    next
                } else {
                    masked_update(g, next, h, step_mask, hidden)?
                };
            }
            states[t] = h;
        }
        Ok(states)
    };
    let forward_states = run(g, &fwd, &fwd_proj, (0..len).collect())?;
    let backward_states = run(g, &bwd, &bwd_proj, (0..len).rev().collect())?;

    let mut per_step = Vec::with_capacity(len);
    for t in 0..len {
        per_step.push(g.concat(&[forward_states[t], backward_states[t]], 1)?);
    }
    g.concat(&per_step, 0)
}

/// `m ⊙ next + (1 − m) ⊙ prev` with a per-row 0/1 mask.
fn masked_update<F: Real>(
    g: &mut Graph<F>,
    next: NodeId,
    prev: NodeId,
    mask: &[bool],
    hidden: usize,
) -> Result<NodeId> {
    let rows = mask.len();
    let mut on = Vec::with_capacity(rows * hidden);
    let mut off = Vec::with_capacity(rows * hidden);
    for &m in mask {
        let (a, b) = if m { (F::one(), F::zero()) } else { (F::zero(), F::one()) };
        on.extend(std::iter::repeat_n(a, hidden));
        off.extend(std::iter::repeat_n(b, hidden));
    }
    let on = g.constant(Tensor::matrix(rows, hidden, on)?)?;
    let off = g.constant(Tensor::matrix(rows, hidden, off)?)?;
    let a = g.mul(on, next)?;
    let b = g.mul(off, prev)?;
    g.add(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cell(d: usize, h: usize, seed: u64) -> (ParamStore<f64>, GruCellParams) {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = GruCellParams::register(&mut store, "c", d, h, &mut rng).unwrap();
        (store, p)
    }

    fn zero_all(store: &mut ParamStore<f64>) {
        for p in store.iter_mut() {
            p.value.data_mut().fill(0.0);
        }
    }

    #[test]
    fn zero_params_halve_the_state() {
        let (mut store, p) = cell(3, 2, 1);
        zero_all(&mut store);
        let mut g = Graph::new();
        let x = g.constant(Tensor::row(vec![5.0, -3.0, 1.0])).unwrap();
        let h = g.constant(Tensor::row(vec![0.8, -0.4])).unwrap();
        let out = gru_cell(&mut g, &store, &p, x, h).unwrap();
        assert_eq!(g.value(out).data(), &[0.4, -0.2]);

        let h0 = g.constant(Tensor::row(vec![0.0, 0.0])).unwrap();
        let out = gru_cell(&mut g, &store, &p, x, h0).unwrap();
        assert_eq!(g.value(out).data(), &[0.0, 0.0]);
    }

    #[test]
    fn scalar_cell_step_through() {
        let (mut store, p) = cell(1, 1, 1);
        for id in [p.w_z, p.u_z, p.w_r, p.u_r, p.w_h, p.u_h] {
            store.get_mut(id).value.data_mut()[0] = 1.0;
        }
        for id in [p.b_z, p.b_r, p.b_h] {
            store.get_mut(id).value.data_mut()[0] = 0.0;
        }
        let mut g = Graph::new();
        let x = g.constant(Tensor::row(vec![1.0])).unwrap();
        let h = g.constant(Tensor::row(vec![0.0])).unwrap();
        let out = gru_cell(&mut g, &store, &p, x, h).unwrap();
        // z = σ(1), r = σ(1), ĥ = tanh(1 + r·0), h' = z·tanh(1)
        let z = 1.0 / (1.0 + (-1.0f64).exp());
        let expected = z * 1.0f64.tanh();
        assert!((g.value(out).item() - expected).abs() < 1e-15);
    }

    #[test]
    fn cell_shape_error() {
        let (store, p) = cell(3, 2, 1);
        let mut g = Graph::new();
        let x = g.constant(Tensor::row(vec![1.0, 2.0])).unwrap();
        let h = g.constant(Tensor::row(vec![0.0, 0.0])).unwrap();
        assert!(matches!(gru_cell(&mut g, &store, &p, x, h), Err(Error::Shape { .. })));
    }

    #[test]
    fn single_step_is_both_cells_on_same_input() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let bi = BiGruParams::register(&mut store, 3, 2, &mut rng).unwrap();
        let mut g = Graph::new();
        let x = g.constant(Tensor::row(vec![0.5, -1.0, 2.0])).unwrap();
        let out = bigru_forward(&mut g, &store, &bi, x, 1, &[true]).unwrap();
        let h0 = g.constant(Tensor::zeros(&[1, 2])).unwrap();
        let f = gru_cell(&mut g, &store, &bi.forward, x, h0).unwrap();
        let b = gru_cell(&mut g, &store, &bi.backward, x, h0).unwrap();
        let mut expected = g.value(f).data().to_vec();
        expected.extend_from_slice(g.value(b).data());
        assert_eq!(g.value(out).data(), expected.as_slice());
    }
}
