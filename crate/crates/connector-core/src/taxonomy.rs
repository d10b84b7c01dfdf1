//! Unified coarse/fine/reasoning task taxonomy over MMBench, MME, and
//! SEED-Bench, score aggregation across granularities, and the connector
//! selection advisor.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::connector::ConnectorKind;
use crate::error::CoreError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Granularity {
    Coarse,
    Fine,
    Reasoning,
}

impl Granularity {
    pub fn name(&self) -> &'static str {
        match self {
            Granularity::Coarse => "coarse",
            Granularity::Fine => "fine",
            Granularity::Reasoning => "reasoning",
        }
    }

    pub fn parse(s: &str) -> Result<Self, CoreError> {
        match normalize(s).as_str() {
            "coarse" | "coarse-grained perception" | "coarse-grained" => Ok(Granularity::Coarse),
            "fine" | "fine-grained perception" | "fine-grained" => Ok(Granularity::Fine),
            "reasoning" => Ok(Granularity::Reasoning),
            other => Err(CoreError::Config(format!("unknown granularity '{other}'"))),
        }
    }
}

fn normalize(s: &str) -> String {
    s.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_ascii_lowercase()
}

/// Reclassified parent task for every benchmark sub-task, with runtime
/// extension for benchmarks outside the built-in three. Built-in entries
/// are immutable.
#[derive(Debug, Clone)]
pub struct TaskTaxonomy {
    builtin: BTreeMap<(String, String), Granularity>,
    user: BTreeMap<(String, String), Granularity>,
}

use Granularity::{Coarse, Fine, Reasoning};

/// (benchmark, sub-task, reclassified parent) for the three built-in
/// benchmarks, plus a handful of alias spellings used across the source
/// benchmark releases (Poster/Posters, Spatial Relation/Relationship).
const BUILTIN: &[(&str, &str, Granularity)] = &[
    // MMBench, coarse
    ("MMBench", "Image Quality", Coarse),
    ("MMBench", "Image Topic", Coarse),
    ("MMBench", "Image Emotion", Coarse),
    ("MMBench", "Image Scene", Coarse),
    ("MMBench", "Image Style", Coarse),
    // MMBench, fine
    ("MMBench", "OCR", Fine),
    ("MMBench", "Celebrity Recognition", Fine),
    ("MMBench", "Object Localization", Fine),
    ("MMBench", "Attribute Recognition", Fine),
    ("MMBench", "Action Recognition", Fine),
    ("MMBench", "Attribute Comparison", Fine),
    ("MMBench", "Spatial Relationship", Fine),
    // MMBench, reasoning
    ("MMBench", "Function Reasoning", Reasoning),
    ("MMBench", "Identity Reasoning", Reasoning),
    ("MMBench", "Physical Property Reasoning", Reasoning),
    ("MMBench", "Future Prediction", Reasoning),
    ("MMBench", "Image-Text Understanding", Reasoning),
    ("MMBench", "Nature Relation", Reasoning),
    ("MMBench", "Physical Relation", Reasoning),
    ("MMBench", "Social Relation", Reasoning),
    // MME, coarse
    ("MME", "Artwork", Coarse),
    ("MME", "Landmark", Coarse),
    ("MME", "Posters", Coarse),
    ("MME", "Scene", Coarse),
    // MME, fine
    ("MME", "OCR", Fine),
    ("MME", "Celebrity", Fine),
    ("MME", "Color", Fine),
    ("MME", "Count", Fine),
    ("MME", "Existence", Fine),
    ("MME", "Position", Fine),
    // MME, reasoning
    ("MME", "Code Reasoning", Reasoning),
    ("MME", "Commonsense Reasoning", Reasoning),
    ("MME", "Numerical Calculation", Reasoning),
    ("MME", "Text Translation", Reasoning),
    // SEED-Bench
    ("SEED-Bench", "Scene Understanding", Coarse),
    ("SEED-Bench", "Instance Identity", Fine),
    ("SEED-Bench", "Instance Attribute", Fine),
    ("SEED-Bench", "Instance Location", Fine),
    ("SEED-Bench", "Instance Counting", Fine),
    ("SEED-Bench", "Spatial Relationship", Fine),
    ("SEED-Bench", "Instance Interaction", Fine),
    ("SEED-Bench", "Visual Reasoning", Reasoning),
];

/// Alias spellings that resolve to a built-in entry's class. Text
/// Recognition is a SEED sub-task that appears only in the benchmark's own
/// listing; it classifies as fine-grained like the other text tasks.
const ALIASES: &[(&str, &str, Granularity)] = &[
    ("MME", "Poster", Coarse),
    ("SEED-Bench", "Spatial Relation", Fine),
    ("SEED-Bench", "Text Recognition", Fine),
];

impl Default for TaskTaxonomy {
    fn default() -> Self {
        Self::builtin()
    }
}

impl TaskTaxonomy {
    pub fn builtin() -> Self {
        let mut builtin = BTreeMap::new();
        for &(bench, sub, class) in BUILTIN.iter().chain(ALIASES) {
            builtin.insert((normalize(bench), normalize(sub)), class);
        }
        TaskTaxonomy {
            builtin,
            user: BTreeMap::new(),
        }
    }

    /// Number of built-in (benchmark, sub-task) rows, aliases excluded.
    pub fn builtin_rows() -> usize {
        BUILTIN.len()
    }

    /// Register a user taxonomy entry. Built-ins cannot be overridden.
    pub fn register(
        &mut self,
        benchmark: &str,
        sub_task: &str,
        class: Granularity,
    ) -> Result<(), CoreError> {
        let key = (normalize(benchmark), normalize(sub_task));
        if self.builtin.contains_key(&key) {
            return Err(CoreError::Config(format!(
                "({benchmark}, {sub_task}) is a built-in entry and cannot be overridden"
            )));
        }
        self.user.insert(key, class);
        Ok(())
    }

    /// Reclassified parent task for a (benchmark, sub-task) pair. Lookup is
    /// case-insensitive and whitespace-normalized; failures list the
    /// nearest known sub-task names.
    pub fn classify(&self, benchmark: &str, sub_task: &str) -> Result<Granularity, CoreError> {
        let key = (normalize(benchmark), normalize(sub_task));
        if let Some(&class) = self.builtin.get(&key).or_else(|| self.user.get(&key)) {
            return Ok(class);
        }
        let mut candidates: Vec<(usize, &str)> = BUILTIN
            .iter()
            .chain(ALIASES)
            .filter(|(b, _, _)| normalize(b) == key.0)
            .map(|(_, s, _)| (levenshtein(&key.1, &normalize(s)), *s))
            .collect();
        candidates.sort();
        Err(CoreError::UnknownSubTask {
            benchmark: benchmark.to_string(),
            sub_task: sub_task.to_string(),
            nearest: candidates.iter().take(3).map(|(_, s)| s.to_string()).collect(),
        })
    }
}

fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    for (i, &ca) in a.iter().enumerate() {
        let mut cur = vec![i + 1];
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur.push(sub.min(prev[j + 1] + 1).min(cur[j] + 1));
        }
        prev = cur;
    }
    prev[b.len()]
}

/// One benchmark sub-task's raw result.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubTaskResult {
    pub benchmark: String,
    pub sub_task: String,
    pub correct: u64,
    pub total: u64,
}

impl SubTaskResult {
    pub fn validate(&self) -> Result<(), CoreError> {
        if self.total == 0 || self.correct > self.total {
            return Err(CoreError::Config(format!(
                "invalid counts {}/{} for ({}, {})",
                self.correct, self.total, self.benchmark, self.sub_task
            )));
        }
        Ok(())
    }

    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.total as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggregateMode {
    /// Unweighted mean of sub-task accuracies per granularity.
    Macro,
    /// Pooled Σcorrect/Σtotal per granularity.
    Micro,
}

impl AggregateMode {
    pub fn parse(s: &str) -> Result<Self, CoreError> {
        match normalize(s).as_str() {
            "macro" => Ok(AggregateMode::Macro),
            "micro" => Ok(AggregateMode::Micro),
            other => Err(CoreError::Config(format!("unknown aggregation mode '{other}'"))),
        }
    }
}

/// Per-granularity scores; buckets with no results are absent, not zero.
pub type BucketScores = BTreeMap<Granularity, f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateReport {
    pub mode: AggregateMode,
    pub pooled: BucketScores,
    pub per_benchmark: BTreeMap<String, BucketScores>,
    /// (granularity, benchmark, sub-task, accuracy) rows for radar plotting.
    pub per_sub_task: Vec<(Granularity, String, String, f64)>,
}

fn bucket_score(mode: AggregateMode, rows: &[&SubTaskResult]) -> f64 {
    match mode {
        AggregateMode::Macro => {
            rows.iter().map(|r| r.accuracy()).sum::<f64>() / rows.len() as f64
        }
        AggregateMode::Micro => {
            let correct: u64 = rows.iter().map(|r| r.correct).sum();
            let total: u64 = rows.iter().map(|r| r.total).sum();
            correct as f64 / total as f64
        }
    }
}

/// Aggregate sub-task results into coarse/fine/reasoning scores, pooled and
/// per benchmark. Every result must be classifiable.
pub fn aggregate(
    taxonomy: &TaskTaxonomy,
    results: &[SubTaskResult],
    mode: AggregateMode,
) -> Result<AggregateReport, CoreError> {
    let mut classified: Vec<(Granularity, &SubTaskResult)> = Vec::with_capacity(results.len());
    for r in results {
        r.validate()?;
        classified.push((taxonomy.classify(&r.benchmark, &r.sub_task)?, r));
    }

    let mut pooled: BTreeMap<Granularity, Vec<&SubTaskResult>> = BTreeMap::new();
    let mut per_bench: BTreeMap<String, BTreeMap<Granularity, Vec<&SubTaskResult>>> =
        BTreeMap::new();
    for &(class, r) in &classified {
        pooled.entry(class).or_default().push(r);
        per_bench
            .entry(r.benchmark.clone())
            .or_default()
            .entry(class)
            .or_default()
            .push(r);
    }

    let per_sub_task = classified
        .iter()
        .map(|&(class, r)| (class, r.benchmark.clone(), r.sub_task.clone(), r.accuracy()))
        .collect();

    Ok(AggregateReport {
        mode,
        pooled: pooled
            .iter()
            .map(|(&g, rows)| (g, bucket_score(mode, rows)))
            .collect(),
        per_benchmark: per_bench
            .iter()
            .map(|(b, buckets)| {
                (
                    b.clone(),
                    buckets
                        .iter()
                        .map(|(&g, rows)| (g, bucket_score(mode, rows)))
                        .collect(),
                )
            })
            .collect(),
        per_sub_task,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Priority {
    Coarse,
    Fine,
    Reasoning,
    Balanced,
}

impl Priority {
    pub fn parse(s: &str) -> Result<Self, CoreError> {
        match normalize(s).as_str() {
            "coarse" => Ok(Priority::Coarse),
            "fine" => Ok(Priority::Fine),
            "reasoning" => Ok(Priority::Reasoning),
            "balanced" => Ok(Priority::Balanced),
            other => Err(CoreError::Config(format!("unknown priority '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Priority::Coarse => "coarse",
            Priority::Fine => "fine",
            Priority::Reasoning => "reasoning",
            Priority::Balanced => "balanced",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Budget {
    Ample,
    Limited,
}

impl Budget {
    pub fn parse(s: &str) -> Result<Self, CoreError> {
        match normalize(s).as_str() {
            "ample" => Ok(Budget::Ample),
            "limited" => Ok(Budget::Limited),
            other => Err(CoreError::Config(format!("unknown budget '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Budget::Ample => "ample",
            Budget::Limited => "limited",
        }
    }
}

/// A recommended connector, with token count for compressing kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Recommendation {
    pub kind: ConnectorKind,
    pub tokens: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Advice {
    /// Ties are returned as a set, never broken arbitrarily.
    pub recommended: Vec<Recommendation>,
    /// The selection rule applied, cited verbatim.
    pub rationale: String,
}

const SUPPORTED_RESOLUTIONS: &[usize] = &[224, 336, 448];

fn compressing_pair() -> Vec<Recommendation> {
    vec![
        Recommendation {
            kind: ConnectorKind::ConvMap,
            tokens: Some(144),
        },
        Recommendation {
            kind: ConnectorKind::AvgPool,
            tokens: Some(144),
        },
    ]
}

/// Connector recommendation for a resolution, task priority, and compute
/// budget, following the published selection rules.
pub fn advise(resolution: usize, priority: Priority, budget: Budget) -> Result<Advice, CoreError> {
    if !SUPPORTED_RESOLUTIONS.contains(&resolution) {
        let nearest = SUPPORTED_RESOLUTIONS
            .iter()
            .min_by_key(|&&r| r.abs_diff(resolution))
            .unwrap();
        return Err(CoreError::Config(format!(
            "unsupported resolution {resolution}; nearest supported is {nearest}"
        )));
    }
    let mlp = vec![Recommendation {
        kind: ConnectorKind::TwoLayerMlp,
        tokens: None,
    }];
    Ok(match resolution {
        224 => Advice {
            recommended: mlp,
            rationale: "at 224: \"using a two-layer MLP is advisable\"".into(),
        },
        336 => {
            if priority == Priority::Fine && budget == Budget::Ample {
                Advice {
                    recommended: mlp,
                    rationale:
                        "at 336 with fine-grained priority: \"the two-layer MLP may be more suitable\""
                            .into(),
                }
            } else {
                Advice {
                    recommended: compressing_pair(),
                    rationale: format!(
                        "at 336 with {} priority and {} budget: the C-Abstractor and average pooling are recommended for their balance between efficiency and effectiveness",
                        priority.name(),
                        budget.name()
                    ),
                }
            }
        }
        _ => Advice {
            recommended: compressing_pair(),
            rationale: "at 448: \"C-Abstractor and average pooling 144tks emerge as more optimal choices\""
                .into(),
        },
    })
}
