//! Subcommand implementations: resolve config, execute, write outputs and
//! the run manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use connector_core::checkpoint;
use connector_core::connector::{forward, init_params, ConnectorKind, ConnectorSpec, ParamNodes};
use connector_core::cost::{
    cost_report, predict_time_reduction, PipelineConfig, DEFAULT_TEXT_TOKENS_STAGE1,
    DEFAULT_TEXT_TOKENS_STAGE2,
};
use connector_core::gradcheck::grad_check_multi;
use connector_core::rng::Rng;
use connector_core::taxonomy::{
    advise, aggregate, AggregateMode, Budget, Granularity, Priority, SubTaskResult, TaskTaxonomy,
};
use connector_core::train::{compare, gen_dataset, train, DatasetConfig, Hyper, TaskKind};
use connector_core::{GridShape, Tape, Tensor};

use crate::config::{write_manifest, Resolved};
use crate::{CliError, Cmd, Common, ConnectorFlags, DatasetFlags, HyperFlags};

const GRADCHECK_THRESHOLD: f64 = 1e-5;

pub fn dispatch(cmd: Cmd) -> Result<(), CliError> {
    match cmd {
        Cmd::Gradcheck { common, connector, eps } => run_gradcheck(common, connector, eps),
        Cmd::Forward { common, connector, grid_side, checkpoint, save_checkpoint } => {
            run_forward(common, connector, grid_side, checkpoint, save_checkpoint)
        }
        Cmd::Cost { common, connector, resolution, stage, text_tokens, llm_hidden, llm_layers } => {
            run_cost(common, connector, resolution, stage, text_tokens, llm_hidden, llm_layers)
        }
        Cmd::ToyTrain { common, connector, dataset, hyper } => {
            run_toy_train(common, connector, dataset, hyper)
        }
        Cmd::Compare { common, connectors, tasks, seeds, tokens, d_v, d_llm, dataset, hyper } => {
            run_compare(common, connectors, tasks, seeds, tokens, d_v, d_llm, dataset, hyper)
        }
        Cmd::Score { common, results, mode, taxonomy } => run_score(common, results, mode, taxonomy),
        Cmd::Advise { common, resolution, priority, budget } => {
            run_advise(common, resolution, priority, budget)
        }
    }
}

fn resolve(
    defaults: &[(&str, &str)],
    common: &Common,
    flags: &[(&str, Option<String>)],
) -> Result<Resolved, CliError> {
    let mut cfg = Resolved::new(defaults);
    if let Some(path) = &common.config {
        cfg.overlay_file(path)?;
    }
    cfg.set_flag("out_dir", common.out_dir.as_ref().map(|p| p.display().to_string()));
    cfg.set_flag("seed", common.seed.map(|s| s.to_string()));
    for (key, value) in flags {
        cfg.set_flag(key, value.clone());
    }
    Ok(cfg)
}

fn out_dir(cfg: &Resolved) -> Result<PathBuf, CliError> {
    let dir = PathBuf::from(cfg.get("out_dir"));
    fs::create_dir_all(&dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn write_output(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, contents)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

const CONNECTOR_DEFAULTS: &[(&str, &str)] = &[
    ("connector", "mlp"),
    ("d_v", "32"),
    ("d_llm", "64"),
    ("tokens", ""),
    ("attn_dim", ""),
    ("kernel", ""),
    ("bias", "true"),
];

fn connector_flag_overrides(flags: &ConnectorFlags) -> Vec<(&'static str, Option<String>)> {
    vec![
        ("connector", flags.connector.clone()),
        ("d_v", flags.d_v.map(|v| v.to_string())),
        ("d_llm", flags.d_llm.map(|v| v.to_string())),
        ("tokens", flags.tokens.map(|v| v.to_string())),
        ("attn_dim", flags.attn_dim.map(|v| v.to_string())),
        ("kernel", flags.kernel.map(|v| v.to_string())),
        ("bias", flags.bias.map(|v| v.to_string())),
    ]
}

fn connector_spec(cfg: &Resolved, seed: u64) -> Result<ConnectorSpec, CliError> {
    let kind = ConnectorKind::parse(cfg.get("connector"))?;
    let mut spec = ConnectorSpec::new(kind, cfg.get_usize("d_v")?, cfg.get_usize("d_llm")?, seed);
    if let Some(q) = cfg.get_opt_usize("tokens")? {
        spec = spec.with_tokens(q);
    }
    if let Some(d_c) = cfg.get_opt_usize("attn_dim")? {
        spec = spec.with_attn_dim(d_c);
    }
    if let Some(k) = cfg.get_opt_usize("kernel")? {
        spec = spec.with_kernel(k);
    }
    if !cfg.get_bool("bias")? {
        spec = spec.without_bias();
    }
    spec.validate()?;
    Ok(spec)
}

const DATASET_DEFAULTS: &[(&str, &str)] = &[
    ("task", "coarse"),
    ("grid_side", "24"),
    ("classes", "4"),
    ("noise", "0.3"),
    ("samples", "120"),
];

fn dataset_flag_overrides(flags: &DatasetFlags) -> Vec<(&'static str, Option<String>)> {
    vec![
        ("task", flags.task.clone()),
        ("grid_side", flags.grid_side.map(|v| v.to_string())),
        ("classes", flags.classes.map(|v| v.to_string())),
        ("noise", flags.noise.map(|v| v.to_string())),
        ("samples", flags.samples.map(|v| v.to_string())),
    ]
}

fn dataset_config(cfg: &Resolved, task: TaskKind, seed: u64) -> Result<DatasetConfig, CliError> {
    let side = cfg.get_usize("grid_side")?;
    Ok(DatasetConfig {
        task,
        samples: cfg.get_usize("samples")?,
        grid: GridShape { height: side, width: side, patch_size: 14 },
        d_v: cfg.get_usize("d_v")?,
        classes: cfg.get_usize("classes")?,
        noise: cfg.get_f64("noise")?,
        seed,
    })
}

const HYPER_DEFAULTS: &[(&str, &str)] = &[
    ("lr", "0.1"),
    ("steps", "300"),
    ("batch", "8"),
    ("momentum", "0"),
    ("holdout", "0.2"),
];

fn hyper_flag_overrides(flags: &HyperFlags) -> Vec<(&'static str, Option<String>)> {
    vec![
        ("lr", flags.lr.map(|v| v.to_string())),
        ("steps", flags.steps.map(|v| v.to_string())),
        ("batch", flags.batch.map(|v| v.to_string())),
        ("momentum", flags.momentum.map(|v| v.to_string())),
        ("holdout", flags.holdout.map(|v| v.to_string())),
    ]
}

fn hyper_config(cfg: &Resolved) -> Result<Hyper, CliError> {
    Ok(Hyper {
        lr: cfg.get_f64("lr")?,
        steps: cfg.get_usize("steps")?,
        batch: cfg.get_usize("batch")?,
        momentum: cfg.get_f64("momentum")?,
        holdout_fraction: cfg.get_f64("holdout")?,
    })
}

// ---------------------------------------------------------------- gradcheck

fn run_gradcheck(common: Common, connector: Option<String>, eps: Option<f64>) -> Result<(), CliError> {
    let defaults = [("out_dir", "out"), ("seed", "0"), ("connector", "all"), ("eps", "1e-5")];
    let cfg = resolve(
        &defaults,
        &common,
        &[("connector", connector), ("eps", eps.map(|e| e.to_string()))],
    )?;
    let dir = out_dir(&cfg)?;
    let seed = cfg.get_u64("seed")?;
    let eps = cfg.get_f64("eps")?;

    let kinds: Vec<ConnectorKind> = match cfg.get("connector") {
        "all" => vec![
            ConnectorKind::Linear,
            ConnectorKind::TwoLayerMlp,
            ConnectorKind::AvgPool,
            ConnectorKind::AttnPool,
            ConnectorKind::ConvMap,
        ],
        name => vec![ConnectorKind::parse(name)?],
    };

    let grid = GridShape { height: 3, width: 3, patch_size: 14 };
    let mut csv = String::from("connector,seed,max_rel_error\n");
    let mut worst: f64 = 0.0;
    for kind in kinds {
        for sub in 0..3u64 {
            let run_seed = seed + sub;
            let mut spec = ConnectorSpec::new(kind, 4, 5, run_seed);
            if kind.is_compressing() {
                spec = spec.with_tokens(4);
            }
            if kind == ConnectorKind::AttnPool {
                spec = spec.with_attn_dim(3);
            }
            let params = init_params(&spec)?;
            let names: Vec<String> = params.entries.iter().map(|(n, _)| n.clone()).collect();
            let mut points: Vec<Tensor> =
                params.entries.iter().map(|(_, t)| t.clone()).collect();
            let mut rng = Rng::new(run_seed ^ 0x67726164);
            points.push(Tensor::new(
                vec![grid.patches(), spec.d_v],
                (0..grid.patches() * spec.d_v).map(|_| rng.normal()).collect(),
            )?);

            let err = grad_check_multi(
                |tape, ids| {
                    let nodes = ParamNodes {
                        ids: names.iter().cloned().zip(ids.iter().cloned()).collect(),
                    };
                    let out = forward(tape, &spec, &nodes, ids[ids.len() - 1], &grid)?;
                    tape.sum_all(out)
                },
                &points,
                eps,
            )?;
            worst = worst.max(err);
            println!("gradcheck {:8} seed {run_seed}: max rel err {err:.3e}", kind.name());
            let _ = writeln!(csv, "{},{run_seed},{err:e}", kind.name());
        }
    }
    write_output(&dir, "gradcheck.csv", &csv)?;
    write_manifest(&dir, "gradcheck", &cfg, &[("report", "gradcheck.csv".into())])?;
    if worst >= GRADCHECK_THRESHOLD {
        return Err(CliError::Runtime(format!(
            "gradient check failed: max rel err {worst:.3e} >= {GRADCHECK_THRESHOLD:e}"
        )));
    }
    Ok(())
}

// ------------------------------------------------------------------ forward

fn run_forward(
    common: Common,
    connector: ConnectorFlags,
    grid_side: Option<usize>,
    checkpoint_in: Option<String>,
    save_checkpoint: Option<String>,
) -> Result<(), CliError> {
    let mut defaults = vec![
        ("out_dir", "out"),
        ("seed", "0"),
        ("grid_side", "24"),
        ("checkpoint", ""),
        ("save_checkpoint", ""),
    ];
    defaults.extend_from_slice(CONNECTOR_DEFAULTS);
    let mut flags = connector_flag_overrides(&connector);
    flags.push(("grid_side", grid_side.map(|v| v.to_string())));
    flags.push(("checkpoint", checkpoint_in));
    flags.push(("save_checkpoint", save_checkpoint));
    let cfg = resolve(&defaults, &common, &flags)?;
    let dir = out_dir(&cfg)?;
    let seed = cfg.get_u64("seed")?;
    let spec = connector_spec(&cfg, seed)?;
    let side = cfg.get_usize("grid_side")?;
    let grid = GridShape { height: side, width: side, patch_size: 14 };

    let params = match cfg.get_opt("checkpoint") {
        Some(path) => {
            let bytes = fs::read(path)
                .map_err(|e| CliError::Validation(format!("cannot read checkpoint {path}: {e}")))?;
            checkpoint::from_bytes(&bytes)?
        }
        None => init_params(&spec)?,
    };

    let mut rng = Rng::new(seed ^ 0x70617463);
    let input = Tensor::new(
        vec![grid.patches(), spec.d_v],
        (0..grid.patches() * spec.d_v).map(|_| rng.normal()).collect(),
    )?;

    let mut tape = Tape::new();
    let nodes = ParamNodes::register(&mut tape, &params);
    let in_id = tape.leaf(input, false);
    let out_id = forward(&mut tape, &spec, &nodes, in_id, &grid)?;
    let out = tape.value(out_id);

    let mut csv = String::from("token");
    for c in 0..out.cols() {
        let _ = write!(csv, ",c{c}");
    }
    csv.push('\n');
    for i in 0..out.rows() {
        let _ = write!(csv, "{i}");
        for j in 0..out.cols() {
            let _ = write!(csv, ",{}", out.at2(i, j));
        }
        csv.push('\n');
    }
    write_output(&dir, "tokens.csv", &csv)?;

    let mut outputs = vec![("tokens", "tokens.csv".to_string())];
    if let Some(name) = cfg.get_opt("save_checkpoint") {
        let bytes = checkpoint::to_bytes(&params);
        let path = dir.join(name);
        fs::write(&path, bytes)
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
        outputs.push(("checkpoint", name.to_string()));
    }
    println!(
        "forward {}: {} patches -> {} tokens of dim {}",
        spec.kind.name(),
        grid.patches(),
        out.rows(),
        out.cols()
    );
    write_manifest(&dir, "forward", &cfg, &outputs)
}

// --------------------------------------------------------------------- cost

fn run_cost(
    common: Common,
    connector: ConnectorFlags,
    resolution: Option<usize>,
    stage: Option<usize>,
    text_tokens: Option<usize>,
    llm_hidden: Option<usize>,
    llm_layers: Option<usize>,
) -> Result<(), CliError> {
    let mut defaults = vec![
        ("out_dir", "out"),
        ("seed", "0"),
        ("resolution", "336"),
        ("stage", "1"),
        ("text_tokens", ""),
        ("llm_hidden", "4096"),
        ("llm_layers", "32"),
    ];
    defaults.extend_from_slice(CONNECTOR_DEFAULTS);
    // encoder-scale dimension defaults for costing, unlike the toy-scale
    // forward pass (later entries win)
    defaults.push(("d_v", "1024"));
    defaults.push(("d_llm", "4096"));
    let mut flags = connector_flag_overrides(&connector);
    flags.push(("resolution", resolution.map(|v| v.to_string())));
    flags.push(("stage", stage.map(|v| v.to_string())));
    flags.push(("text_tokens", text_tokens.map(|v| v.to_string())));
    flags.push(("llm_hidden", llm_hidden.map(|v| v.to_string())));
    flags.push(("llm_layers", llm_layers.map(|v| v.to_string())));
    let cfg = resolve(&defaults, &common, &flags)?;
    let dir = out_dir(&cfg)?;
    let seed = cfg.get_u64("seed")?;

    let stage = cfg.get_usize("stage")?;
    let text = match cfg.get_opt_usize("text_tokens")? {
        Some(t) => t,
        None => match stage {
            1 => DEFAULT_TEXT_TOKENS_STAGE1,
            2 => DEFAULT_TEXT_TOKENS_STAGE2,
            other => {
                return Err(CliError::Validation(format!(
                    "stage must be 1 or 2, got {other}"
                )))
            }
        },
    };

    let spec = connector_spec(&cfg, seed)?;
    let pipeline = PipelineConfig {
        connector: spec.clone(),
        resolution: cfg.get_usize("resolution")?,
        text_tokens: text,
        llm_hidden: cfg.get_usize("llm_hidden")?,
        llm_layers: cfg.get_usize("llm_layers")?,
    };
    let report = cost_report(&pipeline)?;

    // reduction is always quoted against the feature-preserving MLP baseline
    let baseline = PipelineConfig {
        connector: ConnectorSpec::new(ConnectorKind::TwoLayerMlp, spec.d_v, spec.d_llm, seed),
        ..pipeline.clone()
    };
    let reduction = predict_time_reduction(&baseline, &pipeline, 0)?;

    let mut csv =
        String::from("connector,resolution,tokens,stage,connector_flops,llm_flops,predicted_reduction_pct\n");
    let _ = writeln!(
        csv,
        "{},{},{},{},{},{},{:.2}",
        spec.kind.name(),
        pipeline.resolution,
        report.visual_tokens,
        stage,
        report.connector_flops,
        report.llm_flops,
        reduction
    );
    write_output(&dir, "cost.csv", &csv)?;
    println!(
        "cost {} @{}px stage {}: {} visual tokens, predicted reduction vs mlp {:.2}%",
        spec.kind.name(),
        pipeline.resolution,
        stage,
        report.visual_tokens,
        reduction
    );
    write_manifest(&dir, "cost", &cfg, &[("report", "cost.csv".into())])
}

// ---------------------------------------------------------------- toy-train

fn run_toy_train(
    common: Common,
    connector: ConnectorFlags,
    dataset: DatasetFlags,
    hyper: HyperFlags,
) -> Result<(), CliError> {
    let mut defaults = vec![("out_dir", "out"), ("seed", "0")];
    defaults.extend_from_slice(CONNECTOR_DEFAULTS);
    defaults.extend_from_slice(DATASET_DEFAULTS);
    defaults.extend_from_slice(HYPER_DEFAULTS);
    let mut flags = connector_flag_overrides(&connector);
    flags.extend(dataset_flag_overrides(&dataset));
    flags.extend(hyper_flag_overrides(&hyper));
    let cfg = resolve(&defaults, &common, &flags)?;
    let dir = out_dir(&cfg)?;
    let seed = cfg.get_u64("seed")?;

    let task = TaskKind::parse(cfg.get("task"))?;
    let spec = connector_spec(&cfg, seed)?;
    let data_cfg = dataset_config(&cfg, task, seed)?;
    let hyper = hyper_config(&cfg)?;
    let ds = gen_dataset(&data_cfg)?;
    let run = train(&spec, &ds, &hyper, seed)?;

    let mut curve = String::from("step,loss\n");
    for (i, loss) in run.loss_curve.iter().enumerate() {
        let _ = writeln!(curve, "{},{}", i + 1, loss);
    }
    write_output(&dir, "loss_curve.csv", &curve)?;

    let mut summary = String::from("connector,task,seed,final_accuracy\n");
    let _ = writeln!(
        summary,
        "{},{},{},{}",
        run.connector,
        run.task.name(),
        run.seed,
        run.final_accuracy
    );
    write_output(&dir, "summary.csv", &summary)?;
    println!(
        "toy-train {} on {}: final loss {:.4}, holdout accuracy {:.3}",
        run.connector,
        run.task.name(),
        run.loss_curve.last().unwrap(),
        run.final_accuracy
    );
    write_manifest(
        &dir,
        "toy-train",
        &cfg,
        &[
            ("loss_curve", "loss_curve.csv".into()),
            ("summary", "summary.csv".into()),
        ],
    )
}

// ------------------------------------------------------------------ compare

#[allow(clippy::too_many_arguments)]
fn run_compare(
    common: Common,
    connectors: Option<String>,
    tasks: Option<String>,
    seeds: Option<String>,
    tokens: Option<usize>,
    d_v: Option<usize>,
    d_llm: Option<usize>,
    dataset: DatasetFlags,
    hyper: HyperFlags,
) -> Result<(), CliError> {
    let mut defaults = vec![
        ("out_dir", "out"),
        ("seed", "0"),
        ("connectors", "avgpool,attnpool,convmap"),
        ("tasks", "coarse"),
        ("seeds", "101,202,303"),
        ("tokens", "36"),
        ("d_v", "32"),
        ("d_llm", "64"),
    ];
    defaults.extend_from_slice(DATASET_DEFAULTS);
    defaults.extend_from_slice(HYPER_DEFAULTS);
    let mut flags = vec![
        ("connectors", connectors),
        ("tasks", tasks),
        ("seeds", seeds),
        ("tokens", tokens.map(|v| v.to_string())),
        ("d_v", d_v.map(|v| v.to_string())),
        ("d_llm", d_llm.map(|v| v.to_string())),
    ];
    flags.extend(dataset_flag_overrides(&dataset));
    flags.extend(hyper_flag_overrides(&hyper));
    let cfg = resolve(&defaults, &common, &flags)?;
    let dir = out_dir(&cfg)?;
    let seed = cfg.get_u64("seed")?;

    let d_v = cfg.get_usize("d_v")?;
    let d_llm = cfg.get_usize("d_llm")?;
    let q = cfg.get_usize("tokens")?;
    let mut specs = Vec::new();
    for (idx, name) in cfg.get_list("connectors").iter().enumerate() {
        let kind = ConnectorKind::parse(name)?;
        let mut spec = ConnectorSpec::new(kind, d_v, d_llm, idx as u64 + 1);
        if kind.is_compressing() {
            spec = spec.with_tokens(q);
        }
        spec.validate()?;
        specs.push(spec);
    }
    let mut task_kinds = Vec::new();
    for name in cfg.get_list("tasks") {
        task_kinds.push(TaskKind::parse(&name)?);
    }
    let mut run_seeds = Vec::new();
    for s in cfg.get_list("seeds") {
        run_seeds.push(s.parse::<u64>().map_err(|_| {
            CliError::Validation(format!("seeds: expected an integer, got '{s}'"))
        })?);
    }

    let base = dataset_config(&cfg, TaskKind::Coarse, seed)?;
    let hyper = hyper_config(&cfg)?;
    let report = compare(&specs, &task_kinds, &run_seeds, &base, &hyper)?;

    let mut md = String::from("# connector comparison\n\n");
    let _ = writeln!(
        md,
        "seeds: {}\n",
        report.seeds.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(", ")
    );
    let mut header = String::from("| task | connector | mean final accuracy |");
    let mut rule = String::from("|---|---|---|");
    for cp in &report.checkpoints {
        let _ = write!(header, " mean loss @{cp} |");
        rule.push_str("---|");
    }
    header.push_str(" diverged seeds |");
    rule.push_str("---|");
    md.push_str(&header);
    md.push('\n');
    md.push_str(&rule);
    md.push('\n');
    for row in &report.rows {
        let _ = write!(
            md,
            "| {} | {} | {:.4} |",
            row.task.name(),
            row.connector,
            row.mean_final_accuracy
        );
        for (_, loss) in &row.mean_loss_at {
            let _ = write!(md, " {loss:.6} |");
        }
        let diverged = if row.diverged_seeds.is_empty() {
            "-".to_string()
        } else {
            row.diverged_seeds.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(" ")
        };
        let _ = writeln!(md, " {diverged} |");
    }
    write_output(&dir, "compare.md", &md)?;
    print!("{md}");
    write_manifest(&dir, "compare", &cfg, &[("ranking", "compare.md".into())])
}

// -------------------------------------------------------------------- score

fn parse_results_csv(text: &str) -> Result<Vec<SubTaskResult>, CliError> {
    let mut lines = text.lines().enumerate();
    let header = lines
        .next()
        .ok_or_else(|| CliError::Validation("results file is empty".into()))?
        .1;
    let cols: Vec<String> = header.split(',').map(|c| c.trim().to_lowercase()).collect();
    if cols != ["benchmark", "sub_task", "correct", "total"] {
        return Err(CliError::Validation(format!(
            "results header must be 'benchmark,sub_task,correct,total', got '{header}'"
        )));
    }
    let mut rows = Vec::new();
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(|f| f.trim()).collect();
        if fields.len() != 4 {
            return Err(CliError::Validation(format!(
                "results line {}: expected 4 fields, got {}",
                lineno + 1,
                fields.len()
            )));
        }
        let parse_count = |s: &str, what: &str| {
            s.parse::<u64>().map_err(|_| {
                CliError::Validation(format!(
                    "results line {}: {what} '{s}' is not a count",
                    lineno + 1
                ))
            })
        };
        let row = SubTaskResult {
            benchmark: fields[0].to_string(),
            sub_task: fields[1].to_string(),
            correct: parse_count(fields[2], "correct")?,
            total: parse_count(fields[3], "total")?,
        };
        row.validate()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::Validation("results file has no data rows".into()));
    }
    Ok(rows)
}

fn load_taxonomy(path: Option<&str>) -> Result<TaskTaxonomy, CliError> {
    let mut taxonomy = TaskTaxonomy::builtin();
    let Some(path) = path else { return Ok(taxonomy) };
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read taxonomy {path}: {e}")))?;
    let mut lines = text.lines().enumerate();
    let header = lines
        .next()
        .ok_or_else(|| CliError::Validation("taxonomy file is empty".into()))?
        .1;
    let cols: Vec<String> = header.split(',').map(|c| c.trim().to_lowercase()).collect();
    if cols != ["benchmark", "sub_task", "granularity"] {
        return Err(CliError::Validation(format!(
            "taxonomy header must be 'benchmark,sub_task,granularity', got '{header}'"
        )));
    }
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(|f| f.trim()).collect();
        if fields.len() != 3 {
            return Err(CliError::Validation(format!(
                "taxonomy line {}: expected 3 fields, got {}",
                lineno + 1,
                fields.len()
            )));
        }
        taxonomy.register(fields[0], fields[1], Granularity::parse(fields[2])?)?;
    }
    Ok(taxonomy)
}

fn run_score(
    common: Common,
    results: Option<String>,
    mode: Option<String>,
    taxonomy: Option<String>,
) -> Result<(), CliError> {
    let defaults = [
        ("out_dir", "out"),
        ("seed", "0"),
        ("results", ""),
        ("mode", "macro"),
        ("taxonomy", ""),
    ];
    let cfg = resolve(
        &defaults,
        &common,
        &[("results", results), ("mode", mode), ("taxonomy", taxonomy)],
    )?;
    let dir = out_dir(&cfg)?;

    let results_path = cfg
        .get_opt("results")
        .ok_or_else(|| CliError::Validation("score needs --results <csv>".into()))?;
    let text = fs::read_to_string(results_path)
        .map_err(|e| CliError::Validation(format!("cannot read results {results_path}: {e}")))?;
    let rows = parse_results_csv(&text)?;
    let taxonomy = load_taxonomy(cfg.get_opt("taxonomy"))?;
    let mode = AggregateMode::parse(cfg.get("mode"))?;
    let report = aggregate(&taxonomy, &rows, mode)?;

    let mut csv = String::from("scope,granularity,score\n");
    for (g, score) in &report.pooled {
        let _ = writeln!(csv, "pooled,{},{}", g.name(), score);
    }
    for (bench, buckets) in &report.per_benchmark {
        for (g, score) in buckets {
            let _ = writeln!(csv, "{bench},{},{}", g.name(), score);
        }
    }
    write_output(&dir, "score.csv", &csv)?;

    let mut radar = String::from("granularity,sub_task,score\n");
    for (g, _, sub, score) in &report.per_sub_task {
        let _ = writeln!(radar, "{},{sub},{score}", g.name());
    }
    write_output(&dir, "radar.csv", &radar)?;

    let mode_name = match mode {
        AggregateMode::Macro => "macro",
        AggregateMode::Micro => "micro",
    };
    let mut md = format!("# granularity scores ({mode_name})\n\n");
    md.push_str("| scope | coarse | fine | reasoning |\n|---|---|---|---|\n");
    let bucket = |scores: &std::collections::BTreeMap<Granularity, f64>, g| {
        scores
            .get(&g)
            .map(|s| format!("{s:.4}"))
            .unwrap_or_else(|| "-".into())
    };
    let _ = writeln!(
        md,
        "| pooled | {} | {} | {} |",
        bucket(&report.pooled, Granularity::Coarse),
        bucket(&report.pooled, Granularity::Fine),
        bucket(&report.pooled, Granularity::Reasoning)
    );
    for (bench, buckets) in &report.per_benchmark {
        let _ = writeln!(
            md,
            "| {bench} | {} | {} | {} |",
            bucket(buckets, Granularity::Coarse),
            bucket(buckets, Granularity::Fine),
            bucket(buckets, Granularity::Reasoning)
        );
    }
    write_output(&dir, "score.md", &md)?;
    print!("{md}");
    write_manifest(
        &dir,
        "score",
        &cfg,
        &[
            ("scores", "score.csv".into()),
            ("radar", "radar.csv".into()),
            ("report", "score.md".into()),
        ],
    )
}

// ------------------------------------------------------------------- advise

fn run_advise(
    common: Common,
    resolution: Option<usize>,
    priority: Option<String>,
    budget: Option<String>,
) -> Result<(), CliError> {
    let defaults = [
        ("out_dir", "out"),
        ("seed", "0"),
        ("resolution", "336"),
        ("priority", "balanced"),
        ("budget", "ample"),
    ];
    let cfg = resolve(
        &defaults,
        &common,
        &[
            ("resolution", resolution.map(|v| v.to_string())),
            ("priority", priority),
            ("budget", budget),
        ],
    )?;
    let dir = out_dir(&cfg)?;

    let resolution = cfg.get_usize("resolution")?;
    let priority = Priority::parse(cfg.get("priority"))?;
    let budget = Budget::parse(cfg.get("budget"))?;
    let advice = advise(resolution, priority, budget)?;

    let recommended = advice
        .recommended
        .iter()
        .map(|r| match r.tokens {
            Some(t) => format!("{} ({t} tokens)", r.kind.name()),
            None => r.kind.name().to_string(),
        })
        .collect::<Vec<_>>()
        .join(", ");
    let text = format!(
        "resolution: {resolution}\npriority: {}\nbudget: {}\nrecommended: {recommended}\nrationale: {}\n",
        priority.name(),
        budget.name(),
        advice.rationale
    );
    write_output(&dir, "advice.txt", &text)?;
    print!("{text}");
    write_manifest(&dir, "advise", &cfg, &[("advice", "advice.txt".into())])
}
