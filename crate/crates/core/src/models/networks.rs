//! Parameter layouts and forward passes of the two forecasters.

use ndarray::Array2;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::config::{ModelConfig, ModelKind};
use crate::models::layers::{
    cheb_graph_conv, dcgru_step, random_walk_matrices, scaled_laplacian, temporal_gated_conv, DcgruParams,
};
use crate::models::tape::{Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// Uniform on +-sqrt(6 / (rows + cols)).
    Glorot,
    Constant(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub init: Init,
}

fn spec(name: &str, rows: usize, cols: usize, init: Init) -> ParamSpec {
    ParamSpec {
        name: name.to_string(),
        rows,
        cols,
        init,
    }
}

/// Named parameter arrays in a fixed declared order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    pub specs: Vec<ParamSpec>,
    pub values: Vec<Array2<f64>>,
}

impl ParamSet {
    pub fn init(specs: Vec<ParamSpec>, rng: &mut impl Rng) -> Self {
        let values = specs
            .iter()
            .map(|s| match s.init {
                Init::Glorot => {
                    let a = (6.0 / (s.rows + s.cols) as f64).sqrt();
                    Array2::from_shape_fn((s.rows, s.cols), |_| rng.random_range(-a..a))
                }
                Init::Constant(c) => Array2::from_elem((s.rows, s.cols), c),
            })
            .collect();
        ParamSet { specs, values }
    }

    pub fn from_values(specs: Vec<ParamSpec>, values: Vec<Array2<f64>>) -> Result<Self> {
        if specs.len() != values.len() {
            return Err(Error::Shape(format!("{} specs for {} arrays", specs.len(), values.len())));
        }
        for (s, v) in specs.iter().zip(&values) {
            if v.dim() != (s.rows, s.cols) {
                return Err(Error::Shape(format!(
                    "parameter {} is {:?}, declared {}x{}",
                    s.name,
                    v.dim(),
                    s.rows,
                    s.cols
                )));
            }
        }
        Ok(ParamSet { specs, values })
    }

    pub fn count(&self) -> usize {
        self.values.iter().map(Array2::len).sum()
    }

    /// Registers every parameter on the tape as a differentiable leaf.
    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.values.iter().map(|v| tape.leaf(v.clone(), true)).collect()
    }
}

fn dcgru_specs(prefix: &str, input: usize, hidden: usize, matrices: usize) -> Vec<ParamSpec> {
    let rows = matrices * (input + hidden);
    vec![
        spec(&format!("{prefix}.ru.w"), rows, 2 * hidden, Init::Glorot),
        // open gates at start so the state carries through early training
        spec(&format!("{prefix}.ru.b"), 1, 2 * hidden, Init::Constant(1.0)),
        spec(&format!("{prefix}.c.w"), rows, hidden, Init::Glorot),
        spec(&format!("{prefix}.c.b"), 1, hidden, Init::Constant(0.0)),
    ]
}

fn temporal_specs(prefix: &str, kt: usize, input: usize, out: usize) -> Vec<ParamSpec> {
    vec![
        spec(&format!("{prefix}.w"), kt * input, 2 * out, Init::Glorot),
        spec(&format!("{prefix}.b"), 1, 2 * out, Init::Constant(0.0)),
    ]
}

/// Parameter declaration for a configuration, in serialization order.
pub fn param_layout(cfg: &ModelConfig) -> Vec<ParamSpec> {
    let h = cfg.hidden_units;
    let f = cfg.input_features;
    match cfg.kind {
        ModelKind::Dcrnn => {
            let m = 1 + 2 * cfg.diffusion_steps;
            let mut out = dcgru_specs("encoder", f, h, m);
            out.extend(dcgru_specs("decoder", 1, h, m));
            out.push(spec("proj.w", h, 1, Init::Glorot));
            out.push(spec("proj.b", 1, 1, Init::Constant(0.0)));
            out
        }
        ModelKind::Stgcn => {
            let (kt, ks) = (cfg.temporal_kernel, cfg.cheb_order);
            let mut out = Vec::new();
            for (block, input) in [("block1", f), ("block2", h)] {
                out.extend(temporal_specs(&format!("{block}.temporal1"), kt, input, h));
                out.push(spec(&format!("{block}.cheb.w"), ks * h, h, Init::Glorot));
                out.push(spec(&format!("{block}.cheb.b"), 1, h, Init::Constant(0.0)));
                out.extend(temporal_specs(&format!("{block}.temporal2"), kt, h, h));
            }
            out.extend(temporal_specs("output.temporal", cfg.stgcn_remaining_steps(), h, h));
            out.push(spec("output.fc.w", h, 1, Init::Glorot));
            out.push(spec("output.fc.b", 1, 1, Init::Constant(0.0)));
            out
        }
    }
}

/// Fixed graph operators a model needs: random-walk supports for DCRNN, the
/// scaled Laplacian for STGCN.
#[derive(Debug, Clone)]
pub enum GraphOperators {
    Supports(Vec<Array2<f64>>),
    Laplacian(Array2<f64>),
}

impl GraphOperators {
    pub fn build(kind: ModelKind, adjacency: &Array2<f64>) -> Result<Self> {
        match kind {
            ModelKind::Dcrnn => {
                let (f, b) = random_walk_matrices(adjacency)?;
                Ok(GraphOperators::Supports(vec![f, b]))
            }
            ModelKind::Stgcn => Ok(GraphOperators::Laplacian(scaled_laplacian(adjacency)?)),
        }
    }

    fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        match self {
            GraphOperators::Supports(s) => s.iter().map(|m| tape.constant(m.clone())).collect(),
            GraphOperators::Laplacian(l) => vec![tape.constant(l.clone())],
        }
    }
}

/// Inverse-sigmoid decay `tau / (tau + exp(i / tau))`, kept strictly
/// positive.
pub fn scheduled_sampling_prob(iteration: u64, tau: f64) -> f64 {
    let p = tau / (tau + (iteration as f64 / tau).exp());
    p.max(f64::MIN_POSITIVE)
}

/// Ground truth for scheduled sampling. `prob` is the chance of feeding the
/// true value to the next decoder step.
pub struct Teacher<'a> {
    pub prob: f64,
    pub targets: Option<&'a [Var]>,
    pub rng: Option<&'a mut dyn RngCore>,
}

impl Teacher<'_> {
    pub fn none() -> Teacher<'static> {
        Teacher {
            prob: 0.0,
            targets: None,
            rng: None,
        }
    }
}

struct DcrnnVars {
    encoder: DcgruParams,
    decoder: DcgruParams,
    proj_w: Var,
    proj_b: Var,
}

fn cell(v: &[Var]) -> DcgruParams {
    DcgruParams {
        ru_w: v[0],
        ru_b: v[1],
        c_w: v[2],
        c_b: v[3],
    }
}

/// Encoder-decoder over diffusion-convolutional GRUs. The encoder reads the
/// `H` history frames; the decoder starts from a zero input and the final
/// encoder state and emits `P` frames, each fed back as the next input
/// unless the teacher supplies the true value.
pub fn encoder_decoder_forward(
    tape: &mut Tape,
    cfg: &ModelConfig,
    supports: &[Var],
    params: &[Var],
    history: &[Var],
    batch: usize,
    teacher: Teacher<'_>,
) -> Result<Vec<Var>> {
    if params.len() != 10 {
        return Err(Error::Shape(format!("DCRNN expects 10 parameter arrays, got {}", params.len())));
    }
    if history.len() != cfg.history_steps {
        return Err(Error::Shape(format!(
            "history has {} frames, model expects {}",
            history.len(),
            cfg.history_steps
        )));
    }
    let Teacher { prob, targets, mut rng } = teacher;
    if prob > 0.0 {
        match targets {
            None => return Err(Error::validation("scheduled sampling needs targets")),
            Some(t) if t.len() != cfg.horizon_steps => {
                return Err(Error::Shape(format!("{} targets for horizon {}", t.len(), cfg.horizon_steps)))
            }
            _ => {}
        }
        if prob < 1.0 && rng.is_none() {
            return Err(Error::validation("scheduled sampling below probability 1 needs a random source"));
        }
    }
    let p = DcrnnVars {
        encoder: cell(&params[0..4]),
        decoder: cell(&params[4..8]),
        proj_w: params[8],
        proj_b: params[9],
    };
    let rows = cfg.num_nodes * batch;
    let k = cfg.diffusion_steps;
    let mut h = tape.constant(Array2::zeros((rows, cfg.hidden_units)));
    for x in history {
        if tape.shape(*x) != (rows, cfg.input_features) {
            return Err(Error::Shape(format!(
                "history frame is {:?}, expected ({rows}, {})",
                tape.shape(*x),
                cfg.input_features
            )));
        }
        h = dcgru_step(tape, *x, h, &p.encoder, supports, k, batch)?;
    }
    let mut input = tape.constant(Array2::zeros((rows, 1)));
    let mut outputs = Vec::with_capacity(cfg.horizon_steps);
    for step in 0..cfg.horizon_steps {
        h = dcgru_step(tape, input, h, &p.decoder, supports, k, batch)?;
        let y = tape.matmul(h, p.proj_w);
        let y = tape.add_row(y, p.proj_b);
        outputs.push(y);
        let use_truth = if prob >= 1.0 {
            true
        } else if prob <= 0.0 {
            false
        } else {
            let r = rng.as_deref_mut().expect("checked above");
            ((r.next_u64() >> 11) as f64 / (1u64 << 53) as f64) < prob
        };
        input = match (use_truth, targets) {
            (true, Some(t)) => t[step],
            _ => y,
        };
    }
    Ok(outputs)
}

fn stgcn_step(tape: &mut Tape, cfg: &ModelConfig, lap: Var, p: &[Var], frames: &[Var], batch: usize) -> Result<Var> {
    let (kt, ks) = (cfg.temporal_kernel, cfg.cheb_order);
    let mut xs = frames.to_vec();
    for block in 0..2 {
        let q = &p[block * 6..block * 6 + 6];
        let t1 = temporal_gated_conv(tape, &xs, q[0], q[1], kt)?;
        let mut spatial = Vec::with_capacity(t1.len());
        for x in t1 {
            let g = cheb_graph_conv(tape, x, lap, q[2], ks, batch)?;
            let g = tape.add_row(g, q[3]);
            spatial.push(tape.relu(g));
        }
        xs = temporal_gated_conv(tape, &spatial, q[4], q[5], kt)?;
    }
    let out = temporal_gated_conv(tape, &xs, p[12], p[13], xs.len())?;
    let y = tape.matmul(out[0], p[14]);
    Ok(tape.add_row(y, p[15]))
}

/// Two spatio-temporal blocks (gated temporal conv, Chebyshev graph conv
/// with ReLU, gated temporal conv), an output temporal conv spanning the
/// remaining frames and a linear head. Multi-step forecasts feed each
/// prediction back as the newest frame.
pub fn stgcn_forward(
    tape: &mut Tape,
    cfg: &ModelConfig,
    lap: Var,
    params: &[Var],
    history: &[Var],
    batch: usize,
) -> Result<Vec<Var>> {
    cfg.validate()?;
    if params.len() != 16 {
        return Err(Error::Shape(format!("STGCN expects 16 parameter arrays, got {}", params.len())));
    }
    if history.len() != cfg.history_steps {
        return Err(Error::validation(format!(
            "STGCN needs {} history frames, got {}",
            cfg.history_steps,
            history.len()
        )));
    }
    let mut frames = history.to_vec();
    let mut outputs = Vec::with_capacity(cfg.horizon_steps);
    for _ in 0..cfg.horizon_steps {
        let window = &frames[frames.len() - cfg.history_steps..];
        let y = stgcn_step(tape, cfg, lap, params, window, batch)?;
        outputs.push(y);
        frames.push(y);
    }
    Ok(outputs)
}

/// Dispatches to the configured architecture. Returns `P` frames of shape
/// `(N*B) x 1`.
pub fn model_forward(
    tape: &mut Tape,
    cfg: &ModelConfig,
    ops: &GraphOperators,
    params: &[Var],
    history: &[Var],
    batch: usize,
    teacher: Teacher<'_>,
) -> Result<Vec<Var>> {
    let g = ops.bind(tape);
    match cfg.kind {
        ModelKind::Dcrnn => encoder_decoder_forward(tape, cfg, &g, params, history, batch, teacher),
        ModelKind::Stgcn => stgcn_forward(tape, cfg, g[0], params, history, batch),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::layers::tests::{random, random_graph};
    use crate::models::tape::max_relative_error;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small(kind: ModelKind) -> ModelConfig {
        let mut c = ModelConfig::new(kind, 4);
        c.history_steps = 8;
        c.horizon_steps = 2;
        c.hidden_units = 3;
        c.temporal_kernel = 2;
        c
    }

    fn run(cfg: &ModelConfig, ops: &GraphOperators, params: &[Array2<f64>], hist: &[Array2<f64>], batch: usize) -> Vec<Array2<f64>> {
        let mut t = Tape::new();
        let p: Vec<Var> = params.iter().map(|a| t.leaf(a.clone(), false)).collect();
        let h: Vec<Var> = hist.iter().map(|a| t.constant(a.clone())).collect();
        let out = model_forward(&mut t, cfg, ops, &p, &h, batch, Teacher::none()).unwrap();
        out.iter().map(|v| t.value(*v).clone()).collect()
    }

    #[test]
    fn sampling_schedule() {
        assert_eq!(scheduled_sampling_prob(0, 1.0), 0.5);
        assert!((scheduled_sampling_prob(0, 2000.0) - 2000.0 / 2001.0).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let tau = rng.random_range(0.1..5000.0);
            let i = rng.random_range(0..100_000u64);
            let (a, b) = (scheduled_sampling_prob(i, tau), scheduled_sampling_prob(i + 1, tau));
            assert!(b <= a && b > 0.0 && a <= 1.0);
        }
        assert!(scheduled_sampling_prob(u64::MAX, 0.5) > 0.0);
    }

    #[test]
    fn output_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for kind in [ModelKind::Dcrnn, ModelKind::Stgcn] {
            let mut cfg = ModelConfig::new(kind, 6);
            cfg.hidden_units = 4;
            let w = random_graph(&mut rng, 6);
            let ops = GraphOperators::build(kind, &w).unwrap();
            let params = ParamSet::init(param_layout(&cfg), &mut rng);
            let hist: Vec<Array2<f64>> = (0..12).map(|_| random(&mut rng, 12, 1)).collect();
            let out = run(&cfg, &ops, &params.values, &hist, 2);
            assert_eq!(out.len(), 3);
            assert!(out.iter().all(|o| o.dim() == (12, 1)));
            let mut one = cfg.clone();
            one.horizon_steps = 1;
            let params = ParamSet::init(param_layout(&one), &mut rng);
            assert_eq!(run(&one, &ops, &params.values, &hist, 2).len(), 1);
            assert!({
                let mut t = Tape::new();
                let p: Vec<Var> = params.values.iter().map(|a| t.leaf(a.clone(), false)).collect();
                let h: Vec<Var> = hist[..5].iter().map(|a| t.constant(a.clone())).collect();
                model_forward(&mut t, &one, &ops, &p, &h, 2, Teacher::none()).is_err()
            });
        }
    }

    #[test]
    fn teacher_forcing_with_own_outputs_is_a_no_op() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = small(ModelKind::Dcrnn);
        let w = random_graph(&mut rng, 4);
        let ops = GraphOperators::build(cfg.kind, &w).unwrap();
        let params = ParamSet::init(param_layout(&cfg), &mut rng);
        let hist: Vec<Array2<f64>> = (0..8).map(|_| random(&mut rng, 4, 1)).collect();
        let free = run(&cfg, &ops, &params.values, &hist, 1);

        let mut t = Tape::new();
        let p: Vec<Var> = params.values.iter().map(|a| t.leaf(a.clone(), false)).collect();
        let h: Vec<Var> = hist.iter().map(|a| t.constant(a.clone())).collect();
        let targets: Vec<Var> = free.iter().map(|a| t.constant(a.clone())).collect();
        let teacher = Teacher { prob: 1.0, targets: Some(&targets), rng: None };
        let forced = model_forward(&mut t, &cfg, &ops, &p, &h, 1, teacher).unwrap();
        for (a, b) in forced.iter().zip(&free) {
            assert_eq!(t.value(*a), b);
        }

        let missing = Teacher { prob: 0.5, targets: None, rng: None };
        assert!(model_forward(&mut t, &cfg, &ops, &p, &h, 1, missing).is_err());
    }

    fn permute_rows(a: &Array2<f64>, perm: &[usize], batch: usize) -> Array2<f64> {
        // row n*B + b of the result is node perm[n]
        Array2::from_shape_fn(a.dim(), |(r, c)| a[[perm[r / batch] * batch + r % batch, c]])
    }

    #[test]
    fn permutation_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let perm = [2usize, 0, 3, 1];
        let batch = 2;
        for kind in [ModelKind::Dcrnn, ModelKind::Stgcn] {
            let cfg = small(kind);
            let w = random_graph(&mut rng, 4);
            let wp = Array2::from_shape_fn((4, 4), |(i, j)| w[[perm[i], perm[j]]]);
            let params = ParamSet::init(param_layout(&cfg), &mut rng);
            let hist: Vec<Array2<f64>> = (0..8).map(|_| random(&mut rng, 4 * batch, 1)).collect();
            let hist_p: Vec<Array2<f64>> = hist.iter().map(|a| permute_rows(a, &perm, batch)).collect();
            let out = run(&cfg, &GraphOperators::build(kind, &w).unwrap(), &params.values, &hist, batch);
            let out_p = run(&cfg, &GraphOperators::build(kind, &wp).unwrap(), &params.values, &hist_p, batch);
            for (a, b) in out.iter().zip(&out_p) {
                let expected = permute_rows(a, &perm, batch);
                assert!(expected.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-10), "{kind}");
            }
        }
    }

    #[test]
    fn single_node_stgcn_is_temporal_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut cfg = ModelConfig::new(ModelKind::Stgcn, 1);
        cfg.hidden_units = 2;
        cfg.horizon_steps = 1;
        let ops = GraphOperators::build(cfg.kind, &Array2::eye(1)).unwrap();
        let params = ParamSet::init(param_layout(&cfg), &mut rng);
        let hist: Vec<Array2<f64>> = (0..12).map(|_| random(&mut rng, 1, 1)).collect();
        let got = run(&cfg, &ops, &params.values, &hist, 1)[0][[0, 0]];

        // plain loops: with one self-looped node the scaled Laplacian is -1,
        // so the Chebyshev terms are x, -x, x
        let p = &params.values;
        let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
        let glu = |seq: &[Vec<f64>], w: &Array2<f64>, b: &Array2<f64>, kt: usize| -> Vec<Vec<f64>> {
            let h = w.ncols() / 2;
            (0..=seq.len() - kt)
                .map(|t| {
                    let window: Vec<f64> = seq[t..t + kt].iter().flatten().copied().collect();
                    (0..h)
                        .map(|j| {
                            let mut a = b[[0, j]];
                            let mut g = b[[0, h + j]];
                            for (i, x) in window.iter().enumerate() {
                                a += x * w[[i, j]];
                                g += x * w[[i, h + j]];
                            }
                            a * sig(g)
                        })
                        .collect()
                })
                .collect()
        };
        let mut seq: Vec<Vec<f64>> = hist.iter().map(|a| vec![a[[0, 0]]]).collect();
        for block in 0..2 {
            let o = block * 6;
            let t1 = glu(&seq, &p[o], &p[o + 1], 3);
            let theta = &p[o + 2];
            let h = theta.ncols();
            let spatial: Vec<Vec<f64>> = t1
                .iter()
                .map(|x| {
                    (0..h)
                        .map(|j| {
                            let mut acc = p[o + 3][[0, j]];
                            for (i, xi) in x.iter().enumerate() {
                                acc += xi * (theta[[i, j]] - theta[[h + i, j]] + theta[[2 * h + i, j]]);
                            }
                            acc.max(0.0)
                        })
                        .collect()
                })
                .collect();
            seq = glu(&spatial, &p[o + 4], &p[o + 5], 3);
        }
        let last = glu(&seq, &p[12], &p[13], seq.len());
        let expected: f64 = last[0].iter().enumerate().map(|(i, v)| v * p[14][[i, 0]]).sum::<f64>() + p[15][[0, 0]];
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    }

    #[test]
    fn full_model_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let batch = 2;
        for kind in [ModelKind::Dcrnn, ModelKind::Stgcn] {
            let cfg = small(kind);
            let w = random_graph(&mut rng, 4);
            let ops = GraphOperators::build(kind, &w).unwrap();
            let params = ParamSet::init(param_layout(&cfg), &mut rng);
            let hist: Vec<Array2<f64>> = (0..8).map(|_| random(&mut rng, 4 * batch, 1)).collect();
            let probes: Vec<Array2<f64>> = (0..2).map(|_| random(&mut rng, 4 * batch, 1)).collect();
            let loss = |t: &mut Tape, p: &[Var]| {
                let h: Vec<Var> = hist.iter().map(|a| t.constant(a.clone())).collect();
                let out = model_forward(t, &cfg, &ops, p, &h, batch, Teacher::none()).unwrap();
                let mut total = None;
                for (o, pr) in out.iter().zip(&probes) {
                    let pv = t.constant(pr.clone());
                    let m = t.mul(*o, pv);
                    let s = t.sum(m);
                    total = Some(match total {
                        None => s,
                        Some(acc) => t.add(acc, s),
                    });
                }
                total.unwrap()
            };
            let mut t = Tape::new();
            let vars = params.bind(&mut t);
            let l = loss(&mut t, &vars);
            let g = t.backward(l);
            let analytic: Vec<Array2<f64>> = vars.iter().map(|v| g.get(*v).unwrap().clone()).collect();
            let err = max_relative_error(&params.values, &analytic, |xs| {
                let mut t = Tape::new();
                let v: Vec<Var> = xs.iter().map(|a| t.leaf(a.clone(), true)).collect();
                let l = loss(&mut t, &v);
                t.value(l)[[0, 0]]
            });
            assert!(err < 1e-4, "{kind}: {err}");
        }
    }
}
