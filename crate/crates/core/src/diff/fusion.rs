use ndarray::{s, Array2, ArrayView2, Axis};

use super::{log_softmax_backward, softmax_backward, GradRecord};
use crate::error::Result;
use crate::fusion::coattention::{self, CoAttentionParams};
use crate::fusion::conv::{conv1d, fold, unfold, ConvFusionParams};
use crate::fusion::moe::MoEParams;
use crate::fusion::{col_sum, concat, softmax_rows, Gating, LinearFusionParams};
use crate::params::Params;

/// Gradients through `y = [a ‖ b] W + bias`: returns `(dW, dbias, da, db)`.
fn concat_projection_backward(
    a: ArrayView2<f64>,
    b: ArrayView2<f64>,
    w: &Array2<f64>,
    g: ArrayView2<f64>,
) -> (Array2<f64>, Array2<f64>, Array2<f64>, Array2<f64>) {
    let d = a.ncols();
    let cat = concat(a, b);
    let dw = cat.t().dot(&g);
    let db = col_sum(&g.to_owned());
    let dcat = g.dot(&w.t());
    let da = dcat.slice(s![.., ..d]).to_owned();
    let dbb = dcat.slice(s![.., d..]).to_owned();
    (dw, db, da, dbb)
}

fn record<P: Params>(p: &P, grads: Vec<Array2<f64>>, f_sf: Array2<f64>, f_ssl: Array2<f64>) -> GradRecord {
    let names: Vec<&'static str> = p.tensors().iter().map(|(n, _)| *n).collect();
    debug_assert_eq!(names.len(), grads.len());
    GradRecord {
        names,
        params: grads,
        f_sf,
        f_ssl,
    }
}

pub fn linear_backward(
    f_sf: ArrayView2<f64>,
    f_ssl: ArrayView2<f64>,
    p: &LinearFusionParams,
    g: ArrayView2<f64>,
) -> GradRecord {
    let (dw, db, da, dbb) = concat_projection_backward(f_sf, f_ssl, &p.w_cat, g);
    let mut grads = vec![dw];
    if p.bias.is_some() {
        grads.push(db);
    }
    record(p, grads, da, dbb)
}

pub fn conv_backward(
    f_sf: ArrayView2<f64>,
    f_ssl: ArrayView2<f64>,
    p: &ConvFusionParams,
    g: ArrayView2<f64>,
) -> GradRecord {
    let ks = p.kernel_size;
    let d = p.dim();
    let cols_sf = unfold(f_sf, ks);
    let cols_ssl = unfold(f_ssl, ks);
    let z_sf = conv1d(f_sf, &p.k_sf, p.b_sf.as_ref(), ks);
    let z_ssl = conv1d(f_ssl, &p.k_ssl, p.b_ssl.as_ref(), ks);

    let (dw, db, dz_sf, dz_ssl) = concat_projection_backward(z_sf.view(), z_ssl.view(), &p.w_cat, g);
    let dk_sf = cols_sf.t().dot(&dz_sf);
    let dk_ssl = cols_ssl.t().dot(&dz_ssl);
    let da = fold(dz_sf.dot(&p.k_sf.t()).view(), ks, d);
    let dbb = fold(dz_ssl.dot(&p.k_ssl.t()).view(), ks, d);

    let mut grads = vec![dk_sf, dk_ssl];
    if p.b_sf.is_some() {
        grads.push(col_sum(&dz_sf));
    }
    if p.b_ssl.is_some() {
        grads.push(col_sum(&dz_ssl));
    }
    grads.push(dw);
    if p.bias.is_some() {
        grads.push(db);
    }
    record(p, grads, da, dbb)
}

pub fn coattention_backward(
    f_sf: ArrayView2<f64>,
    f_ssl: ArrayView2<f64>,
    p: &CoAttentionParams,
    g: ArrayView2<f64>,
) -> Result<GradRecord> {
    let tr = coattention::trace(f_sf, f_ssl, p)?;
    let scale = 1.0 / (p.dim() as f64).sqrt();

    let (dw_out, db_out, dh_sf, dh_ssl) =
        concat_projection_backward(tr.h_sf.view(), tr.h_ssl.view(), &p.w_out, g);

    // h_sf = A_sf V_ssl + f_sf, A_sf = softmax(Q_sf K_sslᵀ · scale)
    let dv_ssl = tr.attn_sf.t().dot(&dh_sf);
    let ds_sf = softmax_backward(&tr.attn_sf, &dh_sf.dot(&tr.v_ssl.t())) * scale;
    let dq_sf = ds_sf.dot(&tr.k_ssl);
    let dk_ssl = ds_sf.t().dot(&tr.q_sf);

    // h_ssl = A_ssl V_sf + f_ssl, A_ssl = softmax(Q_ssl K_sfᵀ · scale)
    let dv_sf = tr.attn_ssl.t().dot(&dh_ssl);
    let ds_ssl = softmax_backward(&tr.attn_ssl, &dh_ssl.dot(&tr.v_sf.t())) * scale;
    let dq_ssl = ds_ssl.dot(&tr.k_sf);
    let dk_sf = ds_ssl.t().dot(&tr.q_ssl);

    let x_sf_t = f_sf.t();
    let x_ssl_t = f_ssl.t();
    let mut grads = vec![
        x_sf_t.dot(&dq_sf),
        x_sf_t.dot(&dk_sf),
        x_sf_t.dot(&dv_sf),
        x_ssl_t.dot(&dq_ssl),
        x_ssl_t.dot(&dk_ssl),
        x_ssl_t.dot(&dv_ssl),
        dw_out,
    ];
    if p.b_out.is_some() {
        grads.push(db_out);
    }

    let da = dh_sf
        + dq_sf.dot(&p.w_sf_q.t())
        + dk_sf.dot(&p.w_sf_k.t())
        + dv_sf.dot(&p.w_sf_v.t());
    let dbb = dh_ssl
        + dq_ssl.dot(&p.w_ssl_q.t())
        + dk_ssl.dot(&p.w_ssl_k.t())
        + dv_ssl.dot(&p.w_ssl_v.t());
    Ok(record(p, grads, da, dbb))
}

pub fn moe_backward(
    f_sf: ArrayView2<f64>,
    f_ssl: ArrayView2<f64>,
    p: &MoEParams,
    g: ArrayView2<f64>,
) -> Result<GradRecord> {
    let logits = f_sf.dot(&p.w_moe);
    let probs = softmax_rows(logits.view());
    let w = match p.theta {
        Gating::SoftMax => probs.clone(),
        Gating::LogSoftMax => crate::fusion::log_softmax_rows(logits.view()),
    };

    // dL/dw[t, e] = g[t] · f_e[t]
    let t = f_sf.nrows();
    let mut dw = Array2::zeros((t, 2));
    for r in 0..t {
        dw[[r, 0]] = g.row(r).dot(&f_sf.row(r));
        dw[[r, 1]] = g.row(r).dot(&f_ssl.row(r));
    }
    let dlogits = match p.theta {
        Gating::SoftMax => softmax_backward(&probs, &dw),
        Gating::LogSoftMax => log_softmax_backward(&probs, &dw),
    };

    let grad_w_moe = f_sf.t().dot(&dlogits);
    let mut da = &g * &w.column(0).insert_axis(Axis(1));
    da += &dlogits.dot(&p.w_moe.t());
    let dbb = &g * &w.column(1).insert_axis(Axis(1));
    Ok(record(p, vec![grad_w_moe], da, dbb))
}
