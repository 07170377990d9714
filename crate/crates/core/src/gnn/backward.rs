use ndarray::{Array1, Array2, Axis};

use super::forward::{ForwardCache, Topology};
use super::{GcnModel, GnnError, Gradients};

/// Reverse pass for `loss(s)` with `s = X^L y`, given `dL/ds`.
///
/// Replays the dropout masks and ReLU patterns stored in `cache`.
pub fn backward(
    model: &GcnModel,
    topo: &Topology,
    y: &Array1<f64>,
    score_grads: &Array1<f64>,
    cache: &ForwardCache,
) -> Result<Gradients, GnnError> {
    if cache.stamp != model.stamp()
        || cache.n != topo.node_count()
        || cache.edges != topo.edges()
        || cache.layers.len() != model.layers().len()
    {
        return Err(GnnError::StaleCache);
    }
    let n = topo.node_count();
    if score_grads.len() != n {
        return Err(GnnError::DimMismatch {
            what: "score gradient",
            expected: n,
            found: score_grads.len(),
        });
    }
    let d_last = model.layers()[model.layers().len() - 1].d_out();
    if y.len() != d_last {
        return Err(GnnError::DimMismatch {
            what: "question vector",
            expected: d_last,
            found: y.len(),
        });
    }

    let edges = topo.edges();
    let m = edges.len();
    let mut grads = Gradients::zeros_like(model);
    let n_layers = model.layers().len();

    // dL/dX^L = g y^T
    let mut g_h: Array2<f64> = score_grads
        .view()
        .insert_axis(Axis(1))
        .dot(&y.view().insert_axis(Axis(0)));
    // Gradient wrt the edge features leaving the current layer.
    let mut g_e_out: Array2<f64> = Array2::zeros((m, 2));

    for l in (0..n_layers).rev() {
        let p = &model.layers()[l];
        let c = &cache.layers[l];
        let gl = &mut grads.layers[l];

        let mut g_z = g_h;
        if l + 1 != n_layers {
            if let Some(mask) = &c.mask {
                g_z *= mask;
            }
            g_z.zip_mut_with(&c.z, |g, &z| {
                if z <= 0.0 {
                    *g = 0.0;
                }
            });
        }

        gl.b += &g_z.sum_axis(Axis(0));
        gl.w_self += &c.x_in.t().dot(&g_z);
        gl.w_nbr += &c.agg.t().dot(&g_z);
        let mut g_x = g_z.dot(&p.w_self.t());
        let g_agg = g_z.dot(&p.w_nbr.t());

        let mut g_e_in: Array2<f64> = Array2::zeros((m, 2));
        for v in 0..n {
            let inc = topo.incoming(v);
            if inc.is_empty() {
                continue;
            }
            let inv = 1.0 / inc.len() as f64;
            let ga = g_agg.row(v);
            for &k in inc {
                let u = edges[k].0;
                let weight = c.e_in[[k, 0]] + c.e_in[[k, 1]];
                g_x.row_mut(u).scaled_add(weight * inv, &ga);
                let g_weight = c.x_in.row(u).dot(&ga) * inv;
                g_e_in[[k, 0]] += g_weight;
                g_e_in[[k, 1]] += g_weight;
            }
        }

        // The last layer's edge update feeds nothing, so its gradient is zero.
        if l + 1 != n_layers && m > 0 {
            let mut g_pre = g_e_out;
            g_pre.zip_mut_with(&c.edge_pre, |g, &v| {
                if v <= 0.0 {
                    *g = 0.0;
                }
            });
            let m_src = Array2::from_shape_fn((m, 2), |(k, ch)| c.edge_mean[[edges[k].0, ch]]);
            gl.w_e += &c.e_in.t().dot(&g_pre);
            gl.u_e += &m_src.t().dot(&g_pre);
            gl.b_e += &g_pre.sum_axis(Axis(0));
            g_e_in += &g_pre.dot(&p.w_e.t());
            let g_m = g_pre.dot(&p.u_e.t());
            for (k, &(u, _)) in edges.iter().enumerate() {
                let inc = topo.incoming(u);
                let inv = 1.0 / inc.len() as f64;
                for &k2 in inc {
                    g_e_in[[k2, 0]] += g_m[[k, 0]] * inv;
                    g_e_in[[k2, 1]] += g_m[[k, 1]] * inv;
                }
            }
        }

        g_h = g_x;
        g_e_out = g_e_in;
    }
    Ok(grads)
}
