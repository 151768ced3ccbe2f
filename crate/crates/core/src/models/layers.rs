//! Graph operators and the differentiable layers built from them.
//!
//! Batched node features are stored node-major: an `(N * B) x c` array whose
//! row `n * B + b` holds node `n` of batch item `b`. Reshaping to `N x (B*c)`
//! then lets one `N x N` product act on every batch item at once.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::models::tape::{Tape, Var};

fn check_square(w: &Array2<f64>) -> Result<usize> {
    let (r, c) = w.dim();
    if r != c || r == 0 {
        return Err(Error::Shape(format!("adjacency must be square and non-empty, got {r}x{c}")));
    }
    if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::validation("adjacency entries must be finite and non-negative"));
    }
    Ok(r)
}

fn row_normalize(w: &Array2<f64>, what: &str) -> Result<Array2<f64>> {
    let mut out = w.clone();
    for (i, mut row) in out.rows_mut().into_iter().enumerate() {
        let d: f64 = row.sum();
        if d <= 0.0 {
            return Err(Error::Degenerate(format!(
                "node {i} has zero {what} degree and no self-loop"
            )));
        }
        row /= d;
    }
    Ok(out)
}

/// Forward `D_out^-1 W` and backward `D_in^-1 W^T` transition matrices.
pub fn random_walk_matrices(w: &Array2<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
    check_square(w)?;
    let forward = row_normalize(w, "out")?;
    let backward = row_normalize(&w.t().to_owned(), "in")?;
    Ok((forward, backward))
}

/// Largest eigenvalue of a symmetric positive semi-definite matrix by power
/// iteration with a Rayleigh-quotient estimate.
pub fn largest_eigenvalue(m: &Array2<f64>) -> f64 {
    let n = m.nrows();
    // fixed, non-degenerate start vector
    let mut v: Array2<f64> = Array2::from_shape_fn((n, 1), |(i, _)| 1.0 + ((i as f64 + 1.0) * 0.618_033_988_75).fract());
    let mut lambda = 0.0;
    for _ in 0..100_000 {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        v /= norm;
        let mv = m.dot(&v);
        let next = (&v * &mv).sum();
        let converged = (next - lambda).abs() <= 1e-15 * next.abs().max(1.0);
        lambda = next;
        v = mv;
        if converged {
            break;
        }
    }
    lambda
}

/// `2 L / lambda_max - I` with `L = I - D^-1/2 W D^-1/2` on the symmetrized
/// graph `max(W, W^T)`. When `L` vanishes, `lambda_max` is taken as 2.
pub fn scaled_laplacian(w: &Array2<f64>) -> Result<Array2<f64>> {
    let n = check_square(w)?;
    let sym = Array2::from_shape_fn((n, n), |(i, j)| w[[i, j]].max(w[[j, i]]));
    let deg: Vec<f64> = sym.rows().into_iter().map(|r| r.sum()).collect();
    if let Some(i) = deg.iter().position(|d| *d <= 0.0) {
        return Err(Error::Degenerate(format!("node {i} has zero degree and no self-loop")));
    }
    let l = Array2::from_shape_fn((n, n), |(i, j)| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - sym[[i, j]] / (deg[i].sqrt() * deg[j].sqrt())
    });
    let mut lambda = largest_eigenvalue(&l);
    if lambda <= 1e-12 {
        lambda = 2.0;
    }
    Ok(Array2::from_shape_fn((n, n), |(i, j)| {
        2.0 * l[[i, j]] / lambda - if i == j { 1.0 } else { 0.0 }
    }))
}

/// `S X` applied to each batch item of a node-major `(N*B) x c` variable.
pub fn graph_mul(tape: &mut Tape, s: Var, x: Var, batch: usize) -> Var {
    let n = tape.shape(s).0;
    let (rows, c) = tape.shape(x);
    debug_assert_eq!(rows, n * batch);
    let wide = tape.reshape(x, n, batch * c);
    let y = tape.matmul(s, wide);
    tape.reshape(y, n * batch, c)
}

fn check_rows(tape: &Tape, x: Var, n: usize, batch: usize, what: &str) -> Result<()> {
    let rows = tape.shape(x).0;
    if rows != n * batch {
        return Err(Error::Shape(format!(
            "{what}: input has {rows} rows, expected {n} nodes x {batch} batch"
        )));
    }
    Ok(())
}

/// Diffusion convolution: stacks `[X, S1 X, S1^2 X, .., S2 X, S2^2 X, ..]`
/// up to power `k` per support (one shared identity term) and multiplies by
/// `theta`, whose rows are `(1 + supports * k) * c`.
pub fn diffusion_conv(tape: &mut Tape, x: Var, supports: &[Var], k: usize, theta: Var, batch: usize) -> Result<Var> {
    let (_, c) = tape.shape(x);
    let n = supports.first().map(|s| tape.shape(*s).0).unwrap_or(tape.shape(x).0 / batch);
    check_rows(tape, x, n, batch, "diffusion_conv")?;
    let expected = (1 + supports.len() * k) * c;
    if tape.shape(theta).0 != expected {
        return Err(Error::Shape(format!(
            "diffusion_conv: theta has {} rows, expected {expected}",
            tape.shape(theta).0
        )));
    }
    let mut terms = vec![x];
    for s in supports {
        let mut cur = x;
        for _ in 0..k {
            cur = graph_mul(tape, *s, cur, batch);
            terms.push(cur);
        }
    }
    let stacked = if terms.len() == 1 { x } else { tape.concat_cols(&terms) };
    Ok(tape.matmul(stacked, theta))
}

/// Parameters of one diffusion-convolutional GRU cell.
#[derive(Debug, Clone, Copy)]
pub struct DcgruParams {
    pub ru_w: Var,
    pub ru_b: Var,
    pub c_w: Var,
    pub c_b: Var,
}

/// One recurrent step: reset and update gates from the diffusion convolution
/// of `[x, h]`, candidate from `[x, r * h]`, then `u * h + (1 - u) * c`.
pub fn dcgru_step(
    tape: &mut Tape,
    x: Var,
    h_prev: Var,
    p: &DcgruParams,
    supports: &[Var],
    k: usize,
    batch: usize,
) -> Result<Var> {
    let hidden = tape.shape(h_prev).1;
    if tape.shape(p.ru_b).1 != 2 * hidden || tape.shape(p.c_b).1 != hidden {
        return Err(Error::Shape("dcgru_step: bias widths disagree with hidden state".into()));
    }
    let xh = tape.concat_cols(&[x, h_prev]);
    let ru = diffusion_conv(tape, xh, supports, k, p.ru_w, batch)?;
    let ru = tape.add_row(ru, p.ru_b);
    let ru = tape.sigmoid(ru);
    let r = tape.slice_cols(ru, 0, hidden);
    let u = tape.slice_cols(ru, hidden, hidden);
    let rh = tape.mul(r, h_prev);
    let xrh = tape.concat_cols(&[x, rh]);
    let c = diffusion_conv(tape, xrh, supports, k, p.c_w, batch)?;
    let c = tape.add_row(c, p.c_b);
    let c = tape.tanh(c);
    let keep = tape.mul(u, h_prev);
    let one_minus_u = tape.one_minus(u);
    let fresh = tape.mul(one_minus_u, c);
    Ok(tape.add(keep, fresh))
}

/// Chebyshev graph convolution `sum_k T_k(L) X theta_k` with the recursion
/// `T_k = 2 L T_{k-1} - T_{k-2}`; `theta` has `ks * c` rows.
pub fn cheb_graph_conv(tape: &mut Tape, x: Var, lap: Var, theta: Var, ks: usize, batch: usize) -> Result<Var> {
    if ks == 0 {
        return Err(Error::validation("Chebyshev order must be at least 1"));
    }
    let n = tape.shape(lap).0;
    check_rows(tape, x, n, batch, "cheb_graph_conv")?;
    let c = tape.shape(x).1;
    if tape.shape(theta).0 != ks * c {
        return Err(Error::Shape(format!(
            "cheb_graph_conv: theta has {} rows, expected {}",
            tape.shape(theta).0,
            ks * c
        )));
    }
    let mut terms = vec![x];
    if ks > 1 {
        terms.push(graph_mul(tape, lap, x, batch));
    }
    for k in 2..ks {
        let lt = graph_mul(tape, lap, terms[k - 1], batch);
        let twice = tape.scale(lt, 2.0);
        terms.push(tape.sub(twice, terms[k - 2]));
    }
    let stacked = if terms.len() == 1 { x } else { tape.concat_cols(&terms) };
    Ok(tape.matmul(stacked, theta))
}

/// Gated temporal convolution over a time-ordered list of `(N*B) x c`
/// frames. Each output frame is `P * sigmoid(Q)` where `[P | Q]` is the
/// window `[x_t .. x_{t+kt-1}]` times `w` plus `b`. Output has
/// `T - kt + 1` frames of width `w.ncols() / 2`.
pub fn temporal_gated_conv(tape: &mut Tape, xs: &[Var], w: Var, b: Var, kt: usize) -> Result<Vec<Var>> {
    if kt == 0 || xs.len() < kt {
        return Err(Error::Shape(format!(
            "temporal kernel {kt} needs at least that many frames, got {}",
            xs.len()
        )));
    }
    let c = tape.shape(xs[0]).1;
    let (wr, wc) = tape.shape(w);
    if wr != kt * c || wc % 2 != 0 || tape.shape(b) != (1, wc) {
        return Err(Error::Shape(format!(
            "temporal conv weight {wr}x{wc} does not fit kernel {kt} over {c} channels"
        )));
    }
    let h = wc / 2;
    let mut out = Vec::with_capacity(xs.len() - kt + 1);
    for t in 0..=xs.len() - kt {
        let window = if kt == 1 { xs[t] } else { tape.concat_cols(&xs[t..t + kt]) };
        let pq = tape.matmul(window, w);
        let pq = tape.add_row(pq, b);
        let p = tape.slice_cols(pq, 0, h);
        let q = tape.slice_cols(pq, h, h);
        let gate = tape.sigmoid(q);
        out.push(tape.mul(p, gate));
    }
    Ok(out)
}
