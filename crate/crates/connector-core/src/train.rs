//! Desk-scale synthetic training harness.
//!
//! Planted-signal classification tasks probe what a connector preserves:
//! the coarse task is decidable from global patch statistics, the fine task
//! from exactly one planted patch, and the reasoning task from combining
//! two planted signals. A tiny cross-attention reader head sits on top of
//! the connector tokens; mean pooling would erase exactly the positional
//! information under test, so the head attends instead.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::autodiff::{NodeId, Tape};
use crate::connector::{forward, init_params, ConnectorSpec, ParamNodes};
use crate::error::CoreError;
use crate::geometry::GridShape;
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum TaskKind {
    Coarse,
    Fine,
    Reasoning,
}

impl TaskKind {
    pub fn name(&self) -> &'static str {
        match self {
            TaskKind::Coarse => "coarse",
            TaskKind::Fine => "fine",
            TaskKind::Reasoning => "reasoning",
        }
    }

    pub fn parse(s: &str) -> Result<Self, CoreError> {
        match s.to_ascii_lowercase().as_str() {
            "coarse" => Ok(TaskKind::Coarse),
            "fine" => Ok(TaskKind::Fine),
            "reasoning" => Ok(TaskKind::Reasoning),
            other => Err(CoreError::Config(format!("unknown task kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DatasetConfig {
    pub task: TaskKind,
    pub samples: usize,
    pub grid: GridShape,
    pub d_v: usize,
    pub classes: usize,
    /// Scale of the additive background noise.
    pub noise: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct Sample {
    pub patches: Tensor,
    pub label: usize,
    /// Planted patch positions, if any (fine: one, reasoning: two).
    pub planted: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub config: DatasetConfig,
    pub samples: Vec<Sample>,
    /// The k class signal vectors (prototypes for the coarse task).
    pub signals: Vec<Vec<f64>>,
}

fn class_signals(rng: &mut Rng, k: usize, d_v: usize) -> Vec<Vec<f64>> {
    (0..k)
        .map(|_| {
            let v: Vec<f64> = (0..d_v).map(|_| rng.normal()).collect();
            let norm = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>()).max(1e-12);
            v.iter().map(|x| x / norm).collect()
        })
        .collect()
}

/// Generate a deterministic synthetic dataset for one task kind.
pub fn gen_dataset(config: &DatasetConfig) -> Result<Dataset, CoreError> {
    if config.samples == 0 || config.classes == 0 {
        return Err(CoreError::Config("need at least one sample and one class".into()));
    }
    let max_classes = 1usize << config.d_v.min(20);
    if config.classes > max_classes {
        return Err(CoreError::Config(format!(
            "{} classes exceed the {} signals representable in {} dims",
            config.classes, max_classes, config.d_v
        )));
    }
    let p = config.grid.patches();
    if config.task == TaskKind::Reasoning && p < 2 {
        return Err(CoreError::Geometry(
            "reasoning task needs at least two patches".into(),
        ));
    }
    let mut rng = Rng::new(config.seed);
    let signals = class_signals(&mut rng, config.classes, config.d_v);

    let mut samples = Vec::with_capacity(config.samples);
    for idx in 0..config.samples {
        let mut r = rng.fork(idx as u64 + 1);
        let mut data = vec![0.0; p * config.d_v];
        for v in data.iter_mut() {
            *v = config.noise * r.normal();
        }
        let (label, planted) = match config.task {
            TaskKind::Coarse => {
                let label = r.below(config.classes);
                for patch in 0..p {
                    for (c, s) in signals[label].iter().enumerate() {
                        data[patch * config.d_v + c] += s;
                    }
                }
                (label, vec![])
            }
            TaskKind::Fine => {
                let label = r.below(config.classes);
                let pos = r.below(p);
                for (c, s) in signals[label].iter().enumerate() {
                    data[pos * config.d_v + c] = *s;
                }
                (label, vec![pos])
            }
            TaskKind::Reasoning => {
                let a = r.below(config.classes);
                let b = r.below(config.classes);
                let pos_a = r.below(p);
                let pos_b = (pos_a + 1 + r.below(p - 1)) % p;
                for (c, s) in signals[a].iter().enumerate() {
                    data[pos_a * config.d_v + c] = *s;
                }
                for (c, s) in signals[b].iter().enumerate() {
                    data[pos_b * config.d_v + c] = *s;
                }
                ((a + b) % config.classes, vec![pos_a, pos_b])
            }
        };
        samples.push(Sample {
            patches: Tensor::new(vec![p, config.d_v], data)?,
            label,
            planted,
        });
    }
    Ok(Dataset {
        config: config.clone(),
        samples,
        signals,
    })
}

/// Hyperparameters for the SGD loop.
#[derive(Debug, Clone)]
pub struct Hyper {
    pub lr: f64,
    pub steps: usize,
    pub batch: usize,
    pub momentum: f64,
    /// Fraction of the dataset held out for the final accuracy measurement.
    pub holdout_fraction: f64,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper {
            lr: 0.5,
            steps: 300,
            batch: 8,
            momentum: 0.0,
            holdout_fraction: 0.2,
        }
    }
}

/// Outcome of one deterministic training run.
#[derive(Debug, Clone)]
pub struct TrainRun {
    pub connector: String,
    pub task: TaskKind,
    pub seed: u64,
    pub loss_curve: Vec<f64>,
    pub final_accuracy: f64,
}

impl TrainRun {
    /// Training loss at a checkpoint (1-based step count).
    pub fn loss_at(&self, step: usize) -> Option<f64> {
        self.loss_curve.get(step.checked_sub(1)?).copied()
    }
}

/// Cross-attention reader head: one learnable query attends over the
/// connector tokens, the context vector feeds a linear classifier.
struct HeadParams {
    query: Tensor,
    w_out: Tensor,
    b_out: Tensor,
}

fn init_head(d: usize, classes: usize, rng: &mut Rng) -> HeadParams {
    let bound = 1.0 / libm::sqrt(d as f64);
    HeadParams {
        query: Tensor::new(vec![1, d], (0..d).map(|_| 0.02 * rng.normal()).collect()).unwrap(),
        w_out: Tensor::new(
            vec![d, classes],
            (0..d * classes)
                .map(|_| rng.uniform_range(-bound, bound))
                .collect(),
        )
        .unwrap(),
        b_out: Tensor::zeros(vec![classes]),
    }
}

fn head_forward(
    tape: &mut Tape,
    tokens: NodeId,
    query: NodeId,
    w_out: NodeId,
    b_out: NodeId,
    d: usize,
) -> Result<NodeId, CoreError> {
    let tokens_t = tape.transpose(tokens)?;
    let scores = tape.matmul(query, tokens_t)?;
    let scaled = tape.scale(scores, 1.0 / libm::sqrt(d as f64))?;
    let attn = tape.softmax_rows(scaled)?;
    let ctx = tape.matmul(attn, tokens)?;
    let logits = tape.matmul(ctx, w_out)?;
    tape.add_row_bias(logits, b_out)
}

struct SgdState {
    velocity: Vec<Vec<f64>>,
}

fn sgd_update(
    tensors: &mut [Tensor],
    grads: &[Vec<f64>],
    state: &mut SgdState,
    lr: f64,
    momentum: f64,
) {
    for ((tensor, grad), vel) in tensors.iter_mut().zip(grads).zip(&mut state.velocity) {
        for ((w, &g), v) in tensor.data_mut().iter_mut().zip(grad).zip(vel.iter_mut()) {
            *v = momentum * *v + g;
            *w -= lr * *v;
        }
    }
}

/// Train a connector plus reader head on a synthetic dataset.
///
/// Fully deterministic: (spec, dataset, hyper, seed) fixes the loss curve
/// bit-for-bit. Non-finite loss aborts with the offending step.
pub fn train(
    spec: &ConnectorSpec,
    dataset: &Dataset,
    hyper: &Hyper,
    seed: u64,
) -> Result<TrainRun, CoreError> {
    if dataset.samples.is_empty() {
        return Err(CoreError::Config("dataset is empty".into()));
    }
    if !hyper.lr.is_finite() || hyper.lr < 0.0 {
        return Err(CoreError::Config(format!(
            "learning rate must be finite and non-negative, got {}",
            hyper.lr
        )));
    }
    if !hyper.momentum.is_finite() || !(0.0..1.0).contains(&hyper.momentum) {
        return Err(CoreError::Config(format!(
            "momentum must lie in [0, 1), got {}",
            hyper.momentum
        )));
    }
    if !hyper.holdout_fraction.is_finite() || !(0.0..1.0).contains(&hyper.holdout_fraction) {
        return Err(CoreError::Config(format!(
            "holdout fraction must lie in [0, 1), got {}",
            hyper.holdout_fraction
        )));
    }
    if hyper.steps == 0 || hyper.batch == 0 {
        return Err(CoreError::Config("steps and batch must be at least 1".into()));
    }
    let grid = dataset.config.grid;
    let classes = dataset.config.classes;
    let d = spec.d_llm;

    let holdout = ((dataset.samples.len() as f64 * hyper.holdout_fraction) as usize)
        .min(dataset.samples.len() - 1);
    let train_n = dataset.samples.len() - holdout;

    let mut rng = Rng::new(seed ^ spec.seed.rotate_left(17));
    let connector = init_params(spec)?;
    let head = init_head(d, classes, &mut rng);

    // flat parameter vector: connector tensors then head tensors
    let mut tensors: Vec<Tensor> = connector
        .entries
        .iter()
        .map(|(_, t)| t.clone())
        .collect();
    let names: Vec<String> = connector.entries.iter().map(|(n, _)| n.clone()).collect();
    tensors.push(head.query);
    tensors.push(head.w_out);
    tensors.push(head.b_out);

    let mut state = SgdState {
        velocity: tensors.iter().map(|t| vec![0.0; t.numel()]).collect(),
    };

    let mut loss_curve = Vec::with_capacity(hyper.steps);
    for step in 0..hyper.steps {
        // full-batch when the batch size covers the training split, so the
        // loss curve is constant under lr = 0
        let batch: Vec<usize> = if hyper.batch >= train_n {
            (0..train_n).collect()
        } else {
            let mut batch_rng = rng.fork(step as u64);
            (0..hyper.batch).map(|_| batch_rng.below(train_n)).collect()
        };

        let mut tape = Tape::new();
        let param_ids: Vec<NodeId> = tensors
            .iter()
            .map(|t| tape.leaf(t.clone(), true))
            .collect();
        let nodes = ParamNodes {
            ids: names
                .iter()
                .cloned()
                .zip(param_ids.iter().cloned())
                .collect(),
        };
        let (q_id, w_id, b_id) = (
            param_ids[param_ids.len() - 3],
            param_ids[param_ids.len() - 2],
            param_ids[param_ids.len() - 1],
        );

        let mut logit_rows = Vec::with_capacity(batch.len());
        let mut labels = Vec::with_capacity(batch.len());
        // overflow anywhere in the step means the run diverged, not that the
        // math is wrong
        let diverged = |e| match e {
            CoreError::NonFinite { .. } => CoreError::Diverged { step },
            other => other,
        };
        for &idx in &batch {
            let sample = &dataset.samples[idx];
            let input = tape.leaf(sample.patches.clone(), false);
            let tokens = forward(&mut tape, spec, &nodes, input, &grid).map_err(diverged)?;
            let logits =
                head_forward(&mut tape, tokens, q_id, w_id, b_id, d).map_err(diverged)?;
            logit_rows.push(logits);
            labels.push(sample.label);
        }
        let all_logits = tape.concat_rows(&logit_rows).map_err(diverged)?;
        let loss = tape.cross_entropy(all_logits, &labels).map_err(diverged)?;
        let loss_val = tape.value(loss).data()[0];
        if !loss_val.is_finite() {
            return Err(CoreError::Diverged { step });
        }
        loss_curve.push(loss_val);

        if hyper.lr != 0.0 {
            tape.backward(loss)?;
            let grads: Vec<Vec<f64>> = param_ids
                .iter()
                .map(|&id| tape.grad(id).unwrap().to_vec())
                .collect();
            sgd_update(&mut tensors, &grads, &mut state, hyper.lr, hyper.momentum);
            if tensors
                .iter()
                .any(|t| t.data().iter().any(|v| !v.is_finite()))
            {
                return Err(CoreError::Diverged { step });
            }
        }
    }

    // held-out accuracy
    let mut correct = 0usize;
    let eval_set = &dataset.samples[train_n..];
    let eval_set: &[Sample] = if eval_set.is_empty() {
        &dataset.samples
    } else {
        eval_set
    };
    for sample in eval_set {
        let mut tape = Tape::new();
        let param_ids: Vec<NodeId> = tensors
            .iter()
            .map(|t| tape.leaf(t.clone(), false))
            .collect();
        let nodes = ParamNodes {
            ids: names
                .iter()
                .cloned()
                .zip(param_ids.iter().cloned())
                .collect(),
        };
        let (q_id, w_id, b_id) = (
            param_ids[param_ids.len() - 3],
            param_ids[param_ids.len() - 2],
            param_ids[param_ids.len() - 1],
        );
        let diverged = |e| match e {
            CoreError::NonFinite { .. } => CoreError::Diverged { step: hyper.steps },
            other => other,
        };
        let input = tape.leaf(sample.patches.clone(), false);
        let tokens = forward(&mut tape, spec, &nodes, input, &grid).map_err(diverged)?;
        let logits = head_forward(&mut tape, tokens, q_id, w_id, b_id, d).map_err(diverged)?;
        let row = tape.value(logits).data();
        let pred = row
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        if pred == sample.label {
            correct += 1;
        }
    }

    Ok(TrainRun {
        connector: spec.kind.name().into(),
        task: dataset.config.task,
        seed,
        loss_curve,
        final_accuracy: correct as f64 / eval_set.len() as f64,
    })
}

/// One aggregated row of a comparison sweep.
#[derive(Debug, Clone)]
pub struct CompareRow {
    pub task: TaskKind,
    pub connector: String,
    pub mean_final_accuracy: f64,
    /// (checkpoint step, mean loss) pairs.
    pub mean_loss_at: Vec<(usize, f64)>,
    pub diverged_seeds: Vec<u64>,
}

#[derive(Debug, Clone)]
pub struct CompareReport {
    pub rows: Vec<CompareRow>,
    pub checkpoints: Vec<usize>,
    pub seeds: Vec<u64>,
}

/// Run every (task, spec) pair across the given seeds and aggregate.
/// Diverged runs are flagged per row, never silently dropped.
pub fn compare(
    specs: &[ConnectorSpec],
    tasks: &[TaskKind],
    seeds: &[u64],
    base_dataset: &DatasetConfig,
    hyper: &Hyper,
) -> Result<CompareReport, CoreError> {
    if specs.is_empty() || tasks.is_empty() || seeds.is_empty() {
        return Err(CoreError::Config("compare needs specs, tasks, and seeds".into()));
    }
    let quarter = (hyper.steps / 4).max(1);
    let checkpoints = vec![quarter, quarter * 2, hyper.steps];

    let mut rows = Vec::new();
    for &task in tasks {
        let data_cfg = DatasetConfig {
            task,
            ..base_dataset.clone()
        };
        for spec in specs {
            let mut accs = Vec::new();
            let mut losses: Vec<Vec<f64>> = vec![Vec::new(); checkpoints.len()];
            let mut diverged = Vec::new();
            for &seed in seeds {
                let dataset = gen_dataset(&DatasetConfig {
                    seed: data_cfg.seed ^ seed,
                    ..data_cfg.clone()
                })?;
                let run_spec = ConnectorSpec {
                    seed: spec.seed ^ seed,
                    ..spec.clone()
                };
                match train(&run_spec, &dataset, hyper, seed) {
                    Ok(run) => {
                        accs.push(run.final_accuracy);
                        for (slot, &cp) in losses.iter_mut().zip(&checkpoints) {
                            slot.push(run.loss_at(cp).unwrap_or(f64::NAN));
                        }
                    }
                    Err(CoreError::Diverged { .. }) => diverged.push(seed),
                    Err(e) => return Err(e),
                }
            }
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
            rows.push(CompareRow {
                task,
                connector: spec.kind.name().into(),
                mean_final_accuracy: mean(&accs),
                mean_loss_at: checkpoints
                    .iter()
                    .zip(&losses)
                    .map(|(&cp, vals)| (cp, mean(vals)))
                    .collect(),
                diverged_seeds: diverged,
            });
        }
    }
    Ok(CompareReport {
        rows,
        checkpoints,
        seeds: seeds.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::connector::ConnectorKind;

    fn small_grid() -> GridShape {
        GridShape {
            height: 4,
            width: 4,
            patch_size: 14,
        }
    }

    fn cfg(task: TaskKind) -> DatasetConfig {
        DatasetConfig {
            task,
            samples: 40,
            grid: small_grid(),
            d_v: 8,
            classes: 4,
            noise: 0.1,
            seed: 7,
        }
    }

    #[test]
    fn dataset_regeneration_is_identical() {
        let a = gen_dataset(&cfg(TaskKind::Fine)).unwrap();
        let b = gen_dataset(&cfg(TaskKind::Fine)).unwrap();
        for (x, y) in a.samples.iter().zip(&b.samples) {
            assert_eq!(x.patches, y.patches);
            assert_eq!(x.label, y.label);
        }
    }

    #[test]
    fn coarse_noiseless_prototypes_mean_pool_separable() {
        let mut c = cfg(TaskKind::Coarse);
        c.noise = 0.0;
        let ds = gen_dataset(&c).unwrap();
        // with zero noise every patch equals the class prototype; nearest
        // prototype on the patch mean classifies perfectly
        for s in &ds.samples {
            let p = ds.config.grid.patches();
            let d_v = ds.config.d_v;
            let mut mean = vec![0.0; d_v];
            for patch in 0..p {
                for c in 0..d_v {
                    mean[c] += s.patches.data()[patch * d_v + c] / p as f64;
                }
            }
            let best = ds
                .signals
                .iter()
                .enumerate()
                .max_by(|a, b| {
                    let da: f64 = a.1.iter().zip(&mean).map(|(x, y)| x * y).sum();
                    let db: f64 = b.1.iter().zip(&mean).map(|(x, y)| x * y).sum();
                    da.partial_cmp(&db).unwrap()
                })
                .unwrap()
                .0;
            assert_eq!(best, s.label);
        }
    }

    #[test]
    fn fine_noiseless_patch_scan_oracle_is_perfect() {
        let mut c = cfg(TaskKind::Fine);
        c.noise = 0.0;
        let ds = gen_dataset(&c).unwrap();
        for s in &ds.samples {
            let d_v = ds.config.d_v;
            // scan every patch for the best-matching signal
            let mut best = (f64::NEG_INFINITY, 0);
            for patch in 0..ds.config.grid.patches() {
                let row = &s.patches.data()[patch * d_v..(patch + 1) * d_v];
                for (sig_idx, sig) in ds.signals.iter().enumerate() {
                    let dot: f64 = row.iter().zip(sig).map(|(x, y)| x * y).sum();
                    if dot > best.0 {
                        best = (dot, sig_idx);
                    }
                }
            }
            assert_eq!(best.1, s.label);
        }
    }

    #[test]
    fn rejects_unrepresentable_class_count() {
        let mut c = cfg(TaskKind::Coarse);
        c.d_v = 2;
        c.classes = 100;
        assert!(gen_dataset(&c).is_err());
    }

    fn mlp_spec() -> ConnectorSpec {
        ConnectorSpec::new(ConnectorKind::TwoLayerMlp, 8, 16, 1)
    }

    #[test]
    fn zero_lr_freezes_loss_curve() {
        let ds = gen_dataset(&cfg(TaskKind::Coarse)).unwrap();
        let hyper = Hyper {
            lr: 0.0,
            steps: 5,
            batch: 64, // full batch
            ..Hyper::default()
        };
        let run = train(&mlp_spec(), &ds, &hyper, 3).unwrap();
        assert!(run.loss_curve.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn same_seed_identical_loss_curve() {
        let ds = gen_dataset(&cfg(TaskKind::Coarse)).unwrap();
        let hyper = Hyper {
            steps: 10,
            batch: 4,
            lr: 0.2,
            ..Hyper::default()
        };
        let a = train(&mlp_spec(), &ds, &hyper, 3).unwrap();
        let b = train(&mlp_spec(), &ds, &hyper, 3).unwrap();
        assert_eq!(a.loss_curve, b.loss_curve);
        assert_eq!(a.final_accuracy, b.final_accuracy);
    }

    #[test]
    fn first_steps_reduce_loss_on_coarse_task() {
        let ds = gen_dataset(&cfg(TaskKind::Coarse)).unwrap();
        let hyper = Hyper {
            steps: 30,
            batch: 8,
            lr: 0.2,
            ..Hyper::default()
        };
        let run = train(&mlp_spec(), &ds, &hyper, 5).unwrap();
        let head: f64 = run.loss_curve[..5].iter().sum::<f64>() / 5.0;
        let tail: f64 = run.loss_curve[25..].iter().sum::<f64>() / 5.0;
        assert!(tail < head, "loss did not decrease: {head} -> {tail}");
    }

    #[test]
    fn compare_single_spec_reports_one_row_per_task() {
        let base = cfg(TaskKind::Coarse);
        let hyper = Hyper {
            steps: 8,
            batch: 4,
            lr: 0.2,
            ..Hyper::default()
        };
        let report = compare(
            &[mlp_spec()],
            &[TaskKind::Coarse, TaskKind::Fine],
            &[1],
            &base,
            &hyper,
        )
        .unwrap();
        assert_eq!(report.rows.len(), 2);
    }
}
