//! Mini-batch training with Adam, gradient clipping and early stopping.

use std::time::Instant;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{evaluate_forecaster, Forecaster, HistoricalAverage, Metrics};
use crate::ingest::DatasetBundle;
use crate::models::config::{ModelConfig, ModelKind, TrainConfig};
use crate::models::data::{batch_frames, windows, DaySplit, DenseSeries, Normalizer, Window};
use crate::models::networks::{model_forward, param_layout, scheduled_sampling_prob, GraphOperators, ParamSet, Teacher};
use crate::models::tape::{Tape, Var};
use crate::types::SensorId;

/// A parameter snapshot with everything needed to forecast in original
/// units.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub config: ModelConfig,
    pub params: ParamSet,
    pub normalizer: Normalizer,
    pub seed: u64,
    pub sensors: Vec<SensorId>,
    pub adjacency: Array2<f64>,
    ops: GraphOperators,
}

const PREDICT_CHUNK: usize = 128;

impl TrainedModel {
    pub fn new(
        config: ModelConfig,
        params: ParamSet,
        normalizer: Normalizer,
        seed: u64,
        sensors: Vec<SensorId>,
        adjacency: Array2<f64>,
    ) -> Result<Self> {
        config.validate()?;
        if sensors.len() != config.num_nodes || adjacency.dim() != (config.num_nodes, config.num_nodes) {
            return Err(Error::Shape(format!(
                "model has {} nodes but {} sensors and a {:?} adjacency",
                config.num_nodes,
                sensors.len(),
                adjacency.dim()
            )));
        }
        let expected = param_layout(&config);
        if params.specs != expected {
            return Err(Error::Shape("parameter layout does not match the model configuration".into()));
        }
        let ops = GraphOperators::build(config.kind, &adjacency)?;
        Ok(TrainedModel {
            config,
            params,
            normalizer,
            seed,
            sensors,
            adjacency,
            ops,
        })
    }

    /// Forecasts `P x N` blocks from `H x N` histories, all in original
    /// units.
    pub fn predict_many(&self, histories: &[Array2<f64>]) -> Result<Vec<Array2<f64>>> {
        let (h, n, p) = (self.config.history_steps, self.config.num_nodes, self.config.horizon_steps);
        if let Some(bad) = histories.iter().find(|x| x.dim() != (h, n)) {
            return Err(Error::validation(format!(
                "history window is {:?}, model expects {h} steps x {n} sensors",
                bad.dim()
            )));
        }
        let mut out = Vec::with_capacity(histories.len());
        for chunk in histories.chunks(PREDICT_CHUNK) {
            let b = chunk.len();
            let mut tape = Tape::new();
            let vars: Vec<Var> = self.params.values.iter().map(|v| tape.leaf(v.clone(), false)).collect();
            let frames: Vec<Var> = (0..h)
                .map(|t| {
                    let a = Array2::from_shape_fn((n * b, 1), |(r, _)| {
                        self.normalizer.transform(chunk[r % b][[t, r / b]])
                    });
                    tape.constant(a)
                })
                .collect();
            let ys = model_forward(&mut tape, &self.config, &self.ops, &vars, &frames, b, Teacher::none())?;
            for bi in 0..b {
                out.push(Array2::from_shape_fn((p, n), |(step, node)| {
                    self.normalizer.inverse(tape.value(ys[step])[[node * b + bi, 0]])
                }));
            }
        }
        if out.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("model produced non-finite forecasts".into()));
        }
        Ok(out)
    }

    /// `P x N` forecast for one `H x N` history window.
    pub fn predict(&self, history: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(self.predict_many(std::slice::from_ref(history))?.remove(0))
    }

    /// Mean absolute error over horizons on a normalized batch and its
    /// gradient with respect to every parameter.
    fn loss_and_grads(
        &self,
        series: &DenseSeries,
        batch: &[Window],
        ss_prob: f64,
        rng: &mut dyn RngCore,
    ) -> Result<(f64, Vec<Array2<f64>>)> {
        let (h, p) = (self.config.history_steps, self.config.horizon_steps);
        let mut tape = Tape::new();
        let vars = self.params.bind(&mut tape);
        let hist: Vec<Var> = batch_frames(series, batch, 0, h, &self.normalizer)
            .into_iter()
            .map(|a| tape.constant(a))
            .collect();
        let targets: Vec<Var> = batch_frames(series, batch, h, p, &self.normalizer)
            .into_iter()
            .map(|a| tape.constant(a))
            .collect();
        let teacher = Teacher {
            prob: if self.config.kind == ModelKind::Dcrnn { ss_prob } else { 0.0 },
            targets: Some(&targets),
            rng: Some(rng),
        };
        let outputs = model_forward(&mut tape, &self.config, &self.ops, &vars, &hist, batch.len(), teacher)?;
        let mut total: Option<Var> = None;
        for (o, t) in outputs.iter().zip(&targets) {
            let d = tape.sub(*o, *t);
            let a = tape.abs(d);
            let m = tape.mean(a);
            total = Some(match total {
                None => m,
                Some(acc) => tape.add(acc, m),
            });
        }
        let loss = tape.scale(total.expect("horizon is at least 1"), 1.0 / p as f64);
        let value = tape.value(loss)[[0, 0]];
        let grads = tape.backward(loss);
        let g = vars
            .iter()
            .zip(&self.params.values)
            .map(|(v, w)| grads.get(*v).cloned().unwrap_or_else(|| Array2::zeros(w.dim())))
            .collect();
        Ok((value, g))
    }
}

impl Forecaster for TrainedModel {
    fn name(&self) -> String {
        self.config.kind.to_string()
    }

    fn history_steps(&self) -> usize {
        self.config.history_steps
    }

    fn horizon_steps(&self) -> usize {
        self.config.horizon_steps
    }

    fn forecast(&self, series: &DenseSeries, windows: &[Window]) -> Result<Vec<Array2<f64>>> {
        let h = self.config.history_steps;
        let histories: Vec<Array2<f64>> = windows.iter().map(|w| series.block(w.day, w.start, h)).collect();
        self.predict_many(&histories)
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: i32,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

impl Adam {
    pub fn new(params: &[Array2<f64>], learning_rate: f64) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: params.iter().map(|p| Array2::zeros(p.dim())).collect(),
            v: params.iter().map(|p| Array2::zeros(p.dim())).collect(),
        }
    }

    pub fn update(&mut self, params: &mut [Array2<f64>], grads: &[Array2<f64>]) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            m.zip_mut_with(g, |m, g| *m = self.beta1 * *m + (1.0 - self.beta1) * g);
            v.zip_mut_with(g, |v, g| *v = self.beta2 * *v + (1.0 - self.beta2) * g * g);
            ndarray::Zip::from(p).and(&*m).and(&*v).for_each(|p, m, v| {
                *p -= self.learning_rate * (m / c1) / ((v / c2).sqrt() + self.epsilon);
            });
        }
    }
}

/// Rescales gradients so their joint Euclidean norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Array2<f64>], max_norm: f64) -> f64 {
    let norm = grads.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let k = max_norm / norm;
        for g in grads.iter_mut() {
            *g *= k;
        }
    }
    norm
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_mae: f64,
    pub best_val_mae: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub dataset: String,
    pub model_config: ModelConfig,
    pub train_config: TrainConfig,
    pub split: DaySplit,
    pub parameter_count: usize,
    pub epochs: Vec<EpochLog>,
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
    pub iterations: u64,
    pub test: Metrics,
    pub baseline_test: Metrics,
    pub wall_clock_seconds: f64,
}

/// Trains on the chronological training days, early-stops on validation
/// MAE and reports test metrics for the best parameters alongside the
/// historical-average baseline on the same windows.
pub fn train_model(bundle: &DatasetBundle, mcfg: &ModelConfig, tcfg: &TrainConfig) -> Result<(TrainedModel, TrainReport)> {
    let started = Instant::now();
    mcfg.validate()?;
    tcfg.validate()?;
    if mcfg.num_nodes != bundle.registry.len() {
        return Err(Error::validation(format!(
            "model configured for {} nodes, bundle has {} sensors",
            mcfg.num_nodes,
            bundle.registry.len()
        )));
    }
    if mcfg.input_features != 1 {
        return Err(Error::validation("bundles carry one feature per sensor; set input_features = 1"));
    }
    let series = DenseSeries::from_matrix(&bundle.matrix)?;
    let split = DaySplit::new(series.num_days(), tcfg.split)?;
    let (h, p, slots) = (mcfg.history_steps, mcfg.horizon_steps, series.slots_per_day());
    let train_w = windows(split.train.clone(), slots, h, p)?;
    let val_w = windows(split.val.clone(), slots, h, p)?;
    let test_w = windows(split.test.clone(), slots, h, p)?;
    let normalizer = Normalizer::fit(&series, split.train.clone());

    let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed);
    let params = ParamSet::init(param_layout(mcfg), &mut rng);
    let mut model = TrainedModel::new(
        mcfg.clone(),
        params,
        normalizer,
        tcfg.seed,
        bundle.registry.ids().to_vec(),
        bundle.graph.adjacency().clone(),
    )?;
    let mut adam = Adam::new(&model.params.values, tcfg.learning_rate);
    let mut best_val = f64::INFINITY;
    let mut best_params = model.params.values.clone();
    let mut best_epoch = None;
    let mut since_best = 0;
    let mut iterations: u64 = 0;
    let mut logs = Vec::new();
    let mut stopped_early = false;

    for epoch in 0..tcfg.epochs {
        let t0 = Instant::now();
        let mut order = train_w.clone();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for (bi, batch) in order.chunks(tcfg.batch_size).enumerate() {
            let ss = scheduled_sampling_prob(iterations, tcfg.scheduled_sampling_tau);
            let (loss, mut grads) = model.loss_and_grads(&series, batch, ss, &mut rng)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: bi,
                    learning_rate: tcfg.learning_rate,
                });
            }
            clip_global_norm(&mut grads, tcfg.clip_norm);
            adam.update(&mut model.params.values, &grads);
            loss_sum += loss;
            batches += 1;
            iterations += 1;
        }
        let val_mae = match evaluate_forecaster(&model, &series, &val_w) {
            Ok(m) if m.mae.is_finite() => m.mae,
            Ok(_) | Err(Error::Numerical(_)) => {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batches,
                    learning_rate: tcfg.learning_rate,
                })
            }
            Err(e) => return Err(e),
        };
        if val_mae < best_val {
            best_val = val_mae;
            best_params = model.params.values.clone();
            best_epoch = Some(epoch);
            since_best = 0;
        } else {
            since_best += 1;
        }
        let train_loss = loss_sum / batches.max(1) as f64;
        log::info!("{} epoch {epoch}: train loss {train_loss:.4}, val MAE {val_mae:.4}", mcfg.kind);
        logs.push(EpochLog {
            epoch,
            train_loss,
            val_mae,
            best_val_mae: best_val,
            seconds: t0.elapsed().as_secs_f64(),
        });
        if since_best >= tcfg.patience {
            stopped_early = true;
            break;
        }
    }
    model.params.values = best_params;

    let test = evaluate_forecaster(&model, &series, &test_w)?;
    let ha = HistoricalAverage::fit(&series, split.train.clone(), h, p);
    let baseline_test = evaluate_forecaster(&ha, &series, &test_w)?;
    let report = TrainReport {
        dataset: bundle.name.clone(),
        model_config: mcfg.clone(),
        train_config: tcfg.clone(),
        split,
        parameter_count: model.params.count(),
        epochs: logs,
        best_epoch,
        stopped_early,
        iterations,
        test,
        baseline_test,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    Ok((model, report))
}
