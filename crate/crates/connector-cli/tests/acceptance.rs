//! Acceptance suite: one test per release criterion, each printing a single
//! pass/fail line. Run with `cargo test --test acceptance -- --nocapture`
//! to see the lines; a failing criterion also fails the test.

use std::fs;
use std::panic::{catch_unwind, resume_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;

use connector_core::connector::{
    forward, forward_fresh, init_params, ConnectorKind, ConnectorParams, ConnectorSpec, ParamNodes,
};
use connector_core::cost::{
    predict_time_reduction, PipelineConfig, DEFAULT_LLM_HIDDEN, DEFAULT_LLM_LAYERS,
    DEFAULT_TEXT_TOKENS_STAGE1, DEFAULT_TEXT_TOKENS_STAGE2,
};
use connector_core::geometry::{patch_count, window_partition};
use connector_core::gradcheck::grad_check_multi;
use connector_core::rng::Rng;
use connector_core::taxonomy::{advise, Budget, Granularity, Priority, TaskTaxonomy};
use connector_core::train::{compare, DatasetConfig, Hyper, TaskKind};
use connector_core::{GridShape, Tensor};

/// Run one criterion body and print its pass/fail line.
fn criterion(n: usize, name: &str, body: impl FnOnce()) {
    let result = catch_unwind(AssertUnwindSafe(body));
    match &result {
        Ok(()) => println!("acceptance {n} {name}: pass"),
        Err(_) => println!("acceptance {n} {name}: FAIL"),
    }
    if let Err(e) = result {
        resume_unwind(e);
    }
}

// ---------------------------------------------------------------- criterion 1

fn grad_spec(kind: ConnectorKind, seed: u64) -> ConnectorSpec {
    let spec = ConnectorSpec::new(kind, 4, 5, seed);
    match kind {
        ConnectorKind::Linear | ConnectorKind::TwoLayerMlp => spec,
        ConnectorKind::AvgPool => spec.with_tokens(4),
        ConnectorKind::AttnPool => spec.with_tokens(4).with_attn_dim(3),
        ConnectorKind::ConvMap => spec.with_tokens(4).with_kernel(3),
    }
}

#[test]
fn criterion_1_gradient_fidelity() {
    criterion(1, "gradient-fidelity", || {
        let grid = GridShape { height: 3, width: 3, patch_size: 14 };
        for kind in [
            ConnectorKind::Linear,
            ConnectorKind::TwoLayerMlp,
            ConnectorKind::AvgPool,
            ConnectorKind::AttnPool,
            ConnectorKind::ConvMap,
        ] {
            for seed in [11u64, 42, 2024] {
                let spec = grad_spec(kind, seed);
                let params = init_params(&spec).unwrap();
                let names: Vec<String> =
                    params.entries.iter().map(|(n, _)| n.clone()).collect();
                let mut points: Vec<Tensor> =
                    params.entries.iter().map(|(_, t)| t.clone()).collect();
                let mut rng = Rng::new(seed ^ 0x5eed);
                let input = Tensor::new(
                    vec![grid.patches(), spec.d_v],
                    (0..grid.patches() * spec.d_v).map(|_| rng.normal()).collect(),
                )
                .unwrap();
                points.push(input);
                let err = grad_check_multi(
                    |tape, ids| {
                        let nodes = ParamNodes {
                            ids: names.iter().cloned().zip(ids.iter().cloned()).collect(),
                        };
                        let out = forward(tape, &spec, &nodes, ids[ids.len() - 1], &grid)?;
                        tape.sum_all(out)
                    },
                    &points,
                    1e-5,
                )
                .unwrap();
                assert!(err < 1e-5, "{} seed {seed}: max rel err {err}", kind.name());
            }
        }
    });
}

// ---------------------------------------------------------------- criterion 2
// Independent brute-force oracles, written with plain nested loops.

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

fn mat(t: &Tensor) -> Vec<Vec<f64>> {
    let (r, c) = (t.rows(), t.cols());
    (0..r).map(|i| t.data()[i * c..(i + 1) * c].to_vec()).collect()
}

fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in 0..m {
            for l in 0..k {
                out[i][j] += a[i][l] * b[l][j];
            }
        }
    }
    out
}

fn add_bias(x: &mut [Vec<f64>], b: Option<&Tensor>) {
    if let Some(b) = b {
        for row in x.iter_mut() {
            for (v, bv) in row.iter_mut().zip(b.data()) {
                *v += bv;
            }
        }
    }
}

fn mlp(params: &ConnectorParams, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut h = matmul(x, &mat(params.get("w1").unwrap()));
    add_bias(&mut h, params.get("b1"));
    for row in h.iter_mut() {
        for v in row.iter_mut() {
            *v = gelu(*v);
        }
    }
    let mut out = matmul(&h, &mat(params.get("w2").unwrap()));
    add_bias(&mut out, params.get("b2"));
    out
}

fn window_means(input: &[Vec<f64>], h: usize, w: usize, q_side: usize) -> Vec<Vec<f64>> {
    let d = input[0].len();
    let mut out = Vec::new();
    for wy in 0..q_side {
        let (y0, y1) = (wy * h / q_side, (wy + 1) * h / q_side);
        for wx in 0..q_side {
            let (x0, x1) = (wx * w / q_side, (wx + 1) * w / q_side);
            let mut mean = vec![0.0; d];
            let count = ((y1 - y0) * (x1 - x0)) as f64;
            for y in y0..y1 {
                for x in x0..x1 {
                    for c in 0..d {
                        mean[c] += input[y * w + x][c] / count;
                    }
                }
            }
            out.push(mean);
        }
    }
    out
}

fn attnpool_oracle(params: &ConnectorParams, input: &[Vec<f64>], d_c: usize) -> Vec<Vec<f64>> {
    let mut keys = matmul(input, &mat(params.get("w_k").unwrap()));
    add_bias(&mut keys, params.get("b_k"));
    let mut values = matmul(input, &mat(params.get("w_v").unwrap()));
    add_bias(&mut values, params.get("b_v"));
    let scale = 1.0 / (d_c as f64).sqrt();
    let mut pooled = Vec::new();
    for q in &mat(params.get("queries").unwrap()) {
        let scores: Vec<f64> = keys
            .iter()
            .map(|k| scale * q.iter().zip(k).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        let mut ctx = vec![0.0; d_c];
        for (e, v) in exps.iter().zip(&values) {
            for (cv, vv) in ctx.iter_mut().zip(v) {
                *cv += e / z * vv;
            }
        }
        pooled.push(ctx);
    }
    mlp(params, &pooled)
}

fn conv_same(
    input: &[Vec<f64>],
    weight: &Tensor,
    bias: Option<&Tensor>,
    h: usize,
    w: usize,
) -> Vec<Vec<f64>> {
    let k = weight.shape()[0];
    let c_in = weight.shape()[2];
    let c_out = weight.shape()[3];
    let half = k / 2;
    let mut out = vec![vec![0.0; c_out]; h * w];
    for y in 0..h {
        for x in 0..w {
            for co in 0..c_out {
                let mut acc = bias.map_or(0.0, |b| b.data()[co]);
                for ky in 0..k {
                    for kx in 0..k {
                        let sy = y as isize + ky as isize - half as isize;
                        let sx = x as isize + kx as isize - half as isize;
                        if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                            continue;
                        }
                        for ci in 0..c_in {
                            let wv = weight.data()[((ky * k + kx) * c_in + ci) * c_out + co];
                            acc += wv * input[sy as usize * w + sx as usize][ci];
                        }
                    }
                }
                out[y * w + x][co] = acc;
            }
        }
    }
    out
}

fn convmap_oracle(
    params: &ConnectorParams,
    input: &[Vec<f64>],
    h: usize,
    w: usize,
    q_side: usize,
) -> Vec<Vec<f64>> {
    let pre = conv_same(input, params.get("conv_pre").unwrap(), params.get("conv_pre_b"), h, w);
    let pooled = window_means(&pre, h, w, q_side);
    let post = conv_same(
        &pooled,
        params.get("conv_post").unwrap(),
        params.get("conv_post_b"),
        q_side,
        q_side,
    );
    let mut out = matmul(&post, &mat(params.get("proj").unwrap()));
    add_bias(&mut out, params.get("proj_b"));
    out
}

fn assert_close(case: usize, got: &Tensor, want: &[Vec<f64>]) {
    assert_eq!(got.rows(), want.len(), "case {case}: row count");
    for (i, row) in want.iter().enumerate() {
        for (j, &w) in row.iter().enumerate() {
            let g = got.at2(i, j);
            assert!((g - w).abs() < 1e-12, "case {case}: ({i},{j}) {g} vs oracle {w}");
        }
    }
}

#[test]
fn criterion_2_oracle_equivalence() {
    criterion(2, "oracle-equivalence", || {
        let mut rng = Rng::new(7101);
        for case in 0..50usize {
            let side = 2 + rng.below(7);
            let q_side = 1 + rng.below(side);
            let d_v = 2 + rng.below(4);
            let d_llm = 2 + rng.below(5);
            let d_c = 2 + rng.below(4);
            let kernel = if rng.below(2) == 0 { 1 } else { 3 };
            let grid = GridShape { height: side, width: side, patch_size: 14 };
            let p = side * side;
            let data: Vec<f64> = (0..p * d_v).map(|_| rng.normal()).collect();
            let rows: Vec<Vec<f64>> =
                (0..p).map(|i| data[i * d_v..(i + 1) * d_v].to_vec()).collect();
            let input = Tensor::new(vec![p, d_v], data).unwrap();

            let spec = ConnectorSpec::new(ConnectorKind::AvgPool, d_v, d_llm, case as u64)
                .with_tokens(q_side * q_side);
            let params = init_params(&spec).unwrap();
            let got = forward_fresh(&spec, &input, &grid).unwrap();
            assert_close(case, &got, &mlp(&params, &window_means(&rows, side, side, q_side)));

            let spec = ConnectorSpec::new(ConnectorKind::AttnPool, d_v, d_llm, case as u64)
                .with_tokens(q_side * q_side)
                .with_attn_dim(d_c);
            let params = init_params(&spec).unwrap();
            let got = forward_fresh(&spec, &input, &grid).unwrap();
            assert_close(case, &got, &attnpool_oracle(&params, &rows, d_c));

            let spec = ConnectorSpec::new(ConnectorKind::ConvMap, d_v, d_llm, case as u64)
                .with_tokens(q_side * q_side)
                .with_kernel(kernel);
            let params = init_params(&spec).unwrap();
            let got = forward_fresh(&spec, &input, &grid).unwrap();
            assert_close(case, &got, &convmap_oracle(&params, &rows, side, side, q_side));
        }
    });
}

// ---------------------------------------------------------------- criterion 3

#[test]
fn criterion_3_taxonomy_exactness() {
    use Granularity::{Coarse, Fine, Reasoning};
    criterion(3, "taxonomy-exactness", || {
        // the full 42-row golden table, frozen here independently of the
        // library's internal list
        let golden: &[(&str, &str, Granularity)] = &[
            ("MMBench", "Image Quality", Coarse),
            ("MMBench", "Image Topic", Coarse),
            ("MMBench", "Image Emotion", Coarse),
            ("MMBench", "Image Scene", Coarse),
            ("MMBench", "Image Style", Coarse),
            ("MME", "Artwork", Coarse),
            ("MME", "Landmark", Coarse),
            ("MME", "Posters", Coarse),
            ("MME", "Scene", Coarse),
            ("SEED-Bench", "Scene Understanding", Coarse),
            ("MMBench", "OCR", Fine),
            ("MMBench", "Celebrity Recognition", Fine),
            ("MMBench", "Object Localization", Fine),
            ("MMBench", "Attribute Recognition", Fine),
            ("MMBench", "Action Recognition", Fine),
            ("MMBench", "Attribute Comparison", Fine),
            ("MMBench", "Spatial Relationship", Fine),
            ("MME", "OCR", Fine),
            ("MME", "Celebrity", Fine),
            ("MME", "Color", Fine),
            ("MME", "Count", Fine),
            ("MME", "Existence", Fine),
            ("MME", "Position", Fine),
            ("SEED-Bench", "Instance Identity", Fine),
            ("SEED-Bench", "Instance Attribute", Fine),
            ("SEED-Bench", "Instance Location", Fine),
            ("SEED-Bench", "Instance Counting", Fine),
            ("SEED-Bench", "Spatial Relationship", Fine),
            ("SEED-Bench", "Instance Interaction", Fine),
            ("MMBench", "Function Reasoning", Reasoning),
            ("MMBench", "Identity Reasoning", Reasoning),
            ("MMBench", "Physical Property Reasoning", Reasoning),
            ("MMBench", "Future Prediction", Reasoning),
            ("MMBench", "Image-Text Understanding", Reasoning),
            ("MMBench", "Nature Relation", Reasoning),
            ("MMBench", "Physical Relation", Reasoning),
            ("MMBench", "Social Relation", Reasoning),
            ("MME", "Code Reasoning", Reasoning),
            ("MME", "Commonsense Reasoning", Reasoning),
            ("MME", "Numerical Calculation", Reasoning),
            ("MME", "Text Translation", Reasoning),
            ("SEED-Bench", "Visual Reasoning", Reasoning),
        ];
        assert_eq!(golden.len(), 42);
        assert_eq!(TaskTaxonomy::builtin_rows(), 42);
        let t = TaskTaxonomy::builtin();
        for &(bench, sub, want) in golden {
            assert_eq!(t.classify(bench, sub).unwrap(), want, "{bench}/{sub}");
        }
        // reclassified spellings from the per-benchmark reclassification
        // tables that differ from the golden table's spelling
        let reclassified: &[(&str, &str, Granularity)] = &[
            ("MME", "Poster", Coarse),
            ("SEED-Bench", "Spatial Relation", Fine),
            ("SEED-Bench", "Text Recognition", Fine),
        ];
        for &(bench, sub, want) in reclassified {
            assert_eq!(t.classify(bench, sub).unwrap(), want, "{bench}/{sub}");
        }
    });
}

// ---------------------------------------------------------------- criterion 4

#[test]
fn criterion_4_geometry_exactness() {
    criterion(4, "geometry-exactness", || {
        for (resolution, want) in [(224usize, 256usize), (336, 576), (448, 1024)] {
            let grid = patch_count(resolution, 14).unwrap();
            assert_eq!(grid.patches(), want, "resolution {resolution}");
        }
        let grid = GridShape { height: 32, width: 32, patch_size: 14 };
        let groups = window_partition(&grid, 12).unwrap();
        assert_eq!(groups.len(), 144);
        let mut covered = vec![false; 32 * 32];
        for group in &groups {
            let ys: std::collections::BTreeSet<usize> =
                group.iter().map(|i| i / 32).collect();
            let xs: std::collections::BTreeSet<usize> =
                group.iter().map(|i| i % 32).collect();
            assert!([2, 3].contains(&ys.len()), "window height {}", ys.len());
            assert!([2, 3].contains(&xs.len()), "window width {}", xs.len());
            for &i in group {
                assert!(!covered[i], "patch {i} covered twice");
                covered[i] = true;
            }
        }
        assert!(covered.iter().all(|&c| c));
    });
}

// ---------------------------------------------------------------- criterion 5

fn pipeline(kind: ConnectorKind, resolution: usize, text_tokens: usize) -> PipelineConfig {
    let mut spec = ConnectorSpec::new(kind, 1024, 4096, 0);
    if kind.is_compressing() {
        spec = spec.with_tokens(144);
    }
    if kind == ConnectorKind::ConvMap {
        spec = spec.with_kernel(3);
    }
    PipelineConfig {
        connector: spec,
        resolution,
        text_tokens,
        llm_hidden: DEFAULT_LLM_HIDDEN,
        llm_layers: DEFAULT_LLM_LAYERS,
    }
}

#[test]
fn criterion_5_cost_model_fidelity() {
    criterion(5, "cost-model-fidelity", || {
        let reduction = |kind, resolution, text| {
            predict_time_reduction(
                &pipeline(ConnectorKind::TwoLayerMlp, resolution, text),
                &pipeline(kind, resolution, text),
                0,
            )
            .unwrap()
        };
        for kind in [ConnectorKind::AvgPool, ConnectorKind::ConvMap] {
            for (resolution, stage_text, target) in [
                (336usize, DEFAULT_TEXT_TOKENS_STAGE1, 67.0f64),
                (336, DEFAULT_TEXT_TOKENS_STAGE2, 33.0),
                (448, DEFAULT_TEXT_TOKENS_STAGE1, 80.0),
                (448, DEFAULT_TEXT_TOKENS_STAGE2, 51.0),
            ] {
                let r = reduction(kind, resolution, stage_text);
                assert!(
                    (r - target).abs() <= 10.0,
                    "{} at {resolution}: {r:.1}% vs target {target}%",
                    kind.name()
                );
            }
            // 224 is out of model range: no published reduction figure, and
            // the prediction falls far outside the 336 band
            let r224 = reduction(kind, 224, DEFAULT_TEXT_TOKENS_STAGE1);
            assert!((r224 - 67.0).abs() > 10.0, "224 unexpectedly in band: {r224:.1}%");
        }
    });
}

// ---------------------------------------------------------------- criterion 6

#[test]
fn criterion_6_coarse_trainability_ordering() {
    criterion(6, "coarse-trainability-ordering", || {
        // frozen at calibration: 8 prototypes in d_v=3 (not linearly
        // separable from the pooled feature), checkpoint at step 100
        let d_llm = 32;
        let specs = vec![
            ConnectorSpec::new(ConnectorKind::AvgPool, 3, d_llm, 2).with_tokens(4),
            ConnectorSpec::new(ConnectorKind::AttnPool, 3, d_llm, 3).with_tokens(4),
            ConnectorSpec::new(ConnectorKind::ConvMap, 3, d_llm, 4).with_tokens(4),
        ];
        let base = DatasetConfig {
            task: TaskKind::Coarse,
            samples: 160,
            grid: GridShape { height: 8, width: 8, patch_size: 14 },
            d_v: 3,
            classes: 8,
            noise: 0.3,
            seed: 11,
        };
        let hyper = Hyper {
            lr: 0.15,
            steps: 200,
            batch: 8,
            momentum: 0.0,
            holdout_fraction: 0.2,
        };
        let report = compare(&specs, &[TaskKind::Coarse], &[101, 202, 303], &base, &hyper).unwrap();
        let loss_at_100 = |name: &str| {
            let row = report.rows.iter().find(|r| r.connector == name).unwrap();
            assert!(row.diverged_seeds.is_empty(), "{name} diverged: {:?}", row.diverged_seeds);
            row.mean_loss_at.iter().find(|(c, _)| *c == 100).unwrap().1
        };
        let avg = loss_at_100("avgpool");
        let conv = loss_at_100("convmap");
        let attn = loss_at_100("attnpool");
        assert!(
            avg <= conv && conv <= attn,
            "mean loss at step 100: avgpool {avg:.3}, convmap {conv:.3}, attnpool {attn:.3}"
        );
    });
}

// ---------------------------------------------------------------- criterion 7

#[test]
fn criterion_7_fine_grained_gap() {
    criterion(7, "fine-grained-gap", || {
        let d_llm = 32;
        let specs = vec![
            ConnectorSpec::new(ConnectorKind::TwoLayerMlp, 8, d_llm, 1),
            ConnectorSpec::new(ConnectorKind::AttnPool, 8, d_llm, 3).with_tokens(4),
        ];
        let base = DatasetConfig {
            task: TaskKind::Fine,
            samples: 150,
            grid: GridShape { height: 4, width: 4, patch_size: 14 },
            d_v: 8,
            classes: 3,
            noise: 0.05,
            seed: 11,
        };
        let hyper = Hyper {
            lr: 0.5,
            steps: 400,
            batch: 8,
            momentum: 0.0,
            holdout_fraction: 0.2,
        };
        let report = compare(&specs, &[TaskKind::Fine], &[101, 202, 303], &base, &hyper).unwrap();
        let acc = |name: &str| {
            report
                .rows
                .iter()
                .find(|r| r.connector == name)
                .unwrap()
                .mean_final_accuracy
        };
        let mlp_acc = acc("mlp");
        let attn_acc = acc("attnpool");
        assert!(
            mlp_acc >= attn_acc + 0.05,
            "mean accuracy: mlp {mlp_acc:.3} vs attnpool {attn_acc:.3}, need >= 5 point gap"
        );
    });
}

// ---------------------------------------------------------------- criterion 8

fn run_cli(args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_connector"))
        .args(args)
        .output()
        .expect("spawn connector");
    assert!(
        out.status.success(),
        "connector {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn rerun_from_manifest(first: &Path, second: &Path) {
    let manifest = fs::read_dir(first)
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .find(|p| p.file_name().unwrap().to_str().unwrap().ends_with("-manifest.txt"))
        .expect("manifest written");
    let sub = manifest
        .file_name()
        .unwrap()
        .to_str()
        .unwrap()
        .trim_end_matches("-manifest.txt")
        .to_string();
    run_cli(&[
        &sub,
        "--config",
        manifest.to_str().unwrap(),
        "--out-dir",
        second.to_str().unwrap(),
    ]);
    for entry in fs::read_dir(first).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_str().unwrap().to_string();
        if name.ends_with("-manifest.txt") {
            continue; // records out_dir, which differs by construction
        }
        let a = fs::read(&path).unwrap();
        let b = fs::read(second.join(&name)).unwrap_or_else(|_| {
            panic!("{sub}: rerun did not produce {name}")
        });
        assert_eq!(a, b, "{sub}: {name} differs between runs");
    }
}

#[test]
fn criterion_8_determinism() {
    criterion(8, "determinism", || {
        let root = tempfile::tempdir().unwrap();
        let dir = |name: &str| root.path().join(name);
        let results = dir("results.csv");
        fs::write(
            &results,
            "benchmark,sub_task,correct,total\nMME,Color,25,30\nMME,Scene,20,30\nMMBench,OCR,40,60\n",
        )
        .unwrap();
        let s = |p: &Path| p.to_str().unwrap().to_string();

        let runs: Vec<(&str, Vec<String>)> = vec![
            ("gradcheck", vec!["gradcheck".into(), "--seed".into(), "5".into()]),
            (
                "forward",
                vec![
                    "forward".into(), "--connector".into(), "avgpool".into(),
                    "--tokens".into(), "4".into(), "--grid-side".into(), "4".into(),
                    "--d-v".into(), "4".into(), "--d-llm".into(), "6".into(),
                    "--seed".into(), "9".into(),
                ],
            ),
            (
                "cost",
                vec![
                    "cost".into(), "--connector".into(), "convmap".into(),
                    "--tokens".into(), "144".into(), "--resolution".into(), "336".into(),
                ],
            ),
            (
                "toy-train",
                vec![
                    "toy-train".into(), "--connector".into(), "avgpool".into(),
                    "--tokens".into(), "4".into(), "--task".into(), "coarse".into(),
                    "--grid-side".into(), "6".into(), "--d-v".into(), "4".into(),
                    "--d-llm".into(), "8".into(), "--samples".into(), "40".into(),
                    "--steps".into(), "30".into(), "--seed".into(), "3".into(),
                ],
            ),
            (
                "compare",
                vec![
                    "compare".into(), "--connectors".into(), "avgpool,convmap".into(),
                    "--seeds".into(), "1,2".into(), "--tokens".into(), "4".into(),
                    "--grid-side".into(), "6".into(), "--d-v".into(), "4".into(),
                    "--d-llm".into(), "8".into(), "--samples".into(), "40".into(),
                    "--steps".into(), "30".into(),
                ],
            ),
            ("score", vec!["score".into(), "--results".into(), s(&results)]),
            (
                "advise",
                vec![
                    "advise".into(), "--resolution".into(), "448".into(),
                    "--priority".into(), "coarse".into(), "--budget".into(), "limited".into(),
                ],
            ),
        ];
        for (name, args) in &runs {
            let first = dir(&format!("{name}-a"));
            let second = dir(&format!("{name}-b"));
            let mut argv: Vec<&str> = args.iter().map(|a| a.as_str()).collect();
            let first_s = s(&first);
            argv.push("--out-dir");
            argv.push(&first_s);
            run_cli(&argv);
            rerun_from_manifest(&first, &second);
        }
    });
}

// ---------------------------------------------------------------- criterion 9

#[test]
fn criterion_9_advisor_conformance() {
    criterion(9, "advisor-conformance", || {
        let a224 = advise(224, Priority::Balanced, Budget::Ample).unwrap();
        assert!(
            a224.rationale.contains("using a two-layer MLP is advisable"),
            "224 rationale: {}",
            a224.rationale
        );
        assert_eq!(a224.recommended.len(), 1);
        assert_eq!(a224.recommended[0].kind, ConnectorKind::TwoLayerMlp);

        let a336 = advise(336, Priority::Fine, Budget::Ample).unwrap();
        assert!(
            a336.rationale.contains("the two-layer MLP may be more suitable"),
            "336 rationale: {}",
            a336.rationale
        );
        assert_eq!(a336.recommended[0].kind, ConnectorKind::TwoLayerMlp);

        let a448 = advise(448, Priority::Balanced, Budget::Limited).unwrap();
        assert!(
            a448.rationale
                .contains("C-Abstractor and average pooling 144tks emerge as more optimal choices"),
            "448 rationale: {}",
            a448.rationale
        );
        let kinds: Vec<ConnectorKind> = a448.recommended.iter().map(|r| r.kind).collect();
        assert!(kinds.contains(&ConnectorKind::ConvMap) && kinds.contains(&ConnectorKind::AvgPool));
        assert!(a448.recommended.iter().all(|r| r.tokens == Some(144)));
    });
}
