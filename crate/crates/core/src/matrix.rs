//! Detection matrix: every scenario through a fresh inline pipeline,
//! folded into the Detected / Prevented / False Positives table.

use serde::{Deserialize, Serialize};

use crate::pipeline::{run_pipeline, PipelineError, PipelineOptions, RunSummary};
use crate::policy::{CompileError, PolicyHandle, PolicySet};
use crate::probe::{generate_scenario, BufferMode, ScenarioKind};

/// Headline rows, in display order.
pub const TABLE_ROWS: [(&str, &[ScenarioKind]); 5] = [
    (
        "Reverse Shell (bash/nc)",
        &[ScenarioKind::ReverseShellBash, ScenarioKind::ReverseShellNc],
    ),
    (
        "Container Escape (CVE-2022-0185)",
        &[ScenarioKind::ContainerEscapeFsconfig],
    ),
    ("Sensitive File Read", &[ScenarioKind::SensitiveFileRead]),
    ("Privilege Escalation via ptrace", &[ScenarioKind::PtraceAbuse]),
    ("Benign Admin Script", &[ScenarioKind::BenignAdminScript]),
];

/// Scenarios run in addition to the table rows.
pub const EXTRA_ROWS: [(&str, &[ScenarioKind]); 2] = [
    ("Fileless Execution (curl | bash)", &[ScenarioKind::FilelessExecution]),
    ("Benign Background", &[ScenarioKind::BenignBackground]),
];

/// Table row charged with a false positive from a rule on `syscall`.
fn row_for_syscall(syscall: &str) -> Option<usize> {
    match syscall {
        "execve" => Some(0),
        "fsconfig" => Some(1),
        "open" | "openat" => Some(2),
        "ptrace" => Some(3),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixRow {
    pub attack: String,
    pub scenarios: Vec<ScenarioKind>,
    pub detected: bool,
    pub prevented: bool,
    pub false_positives: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionMatrix {
    pub pack: String,
    pub seed: u64,
    pub rows: Vec<MatrixRow>,
    pub extra: Vec<MatrixRow>,
    pub total_false_positives: u64,
    pub runs: Vec<(ScenarioKind, RunSummary)>,
}

#[derive(Debug, thiserror::Error)]
pub enum MatrixError {
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error("{scenario}: {source}")]
    Pipeline {
        scenario: ScenarioKind,
        #[source]
        source: PipelineError,
    },
}

/// Runs all eight scenarios against `policies`. Mode is forced to inline so
/// prevention is observable.
pub fn run_matrix(
    pack: &str,
    policies: &PolicySet,
    seed: u64,
    base: &PipelineOptions,
) -> Result<DetectionMatrix, MatrixError> {
    let opts = PipelineOptions {
        mode: BufferMode::Inline,
        pause_consumer: false,
        reload_at: None,
        ..base.clone()
    };
    let mut runs = Vec::new();
    for kind in ScenarioKind::ALL {
        let handle = PolicyHandle::from_policies(policies)?;
        let trace = generate_scenario(kind, seed);
        let out =
            run_pipeline(&trace, &handle, &opts).map_err(|source| MatrixError::Pipeline { scenario: kind, source })?;
        runs.push((kind, out.summary));
    }

    let build = |defs: &[(&str, &[ScenarioKind])]| -> Vec<MatrixRow> {
        defs.iter()
            .map(|(name, kinds)| {
                let outcomes: Vec<_> = kinds
                    .iter()
                    .filter_map(|k| {
                        runs.iter()
                            .find(|(r, _)| r == k)
                            .and_then(|(_, s)| s.scenarios.iter().find(|o| o.scenario == *k))
                    })
                    .collect();
                let all = |f: fn(&crate::pipeline::ScenarioOutcome) -> bool| {
                    !outcomes.is_empty() && outcomes.iter().all(|o| f(o))
                };
                MatrixRow {
                    attack: name.to_string(),
                    scenarios: kinds.to_vec(),
                    detected: all(|o| o.detected),
                    prevented: all(|o| o.prevented),
                    false_positives: 0,
                }
            })
            .collect()
    };
    let mut rows = build(&TABLE_ROWS);
    let mut extra = build(&EXTRA_ROWS);

    let mut total = 0;
    for (kind, summary) in &runs {
        for (rule, n) in &summary.false_positive_rules {
            total += n;
            let by_rule = policies.rule(rule).and_then(|r| row_for_syscall(&r.syscall));
            match by_rule {
                Some(i) => rows[i].false_positives += n,
                None => {
                    let own = rows
                        .iter_mut()
                        .chain(extra.iter_mut())
                        .find(|r| r.scenarios.contains(kind))
                        .expect("every scenario has a row");
                    own.false_positives += n;
                }
            }
        }
    }

    Ok(DetectionMatrix {
        pack: pack.to_string(),
        seed,
        rows,
        extra,
        total_false_positives: total,
        runs,
    })
}

fn mark(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

/// Plain-text Detected / Prevented / False Positives table.
pub fn render_matrix(m: &DetectionMatrix) -> String {
    let width = TABLE_ROWS
        .iter()
        .chain(EXTRA_ROWS.iter())
        .map(|(n, _)| n.len())
        .max()
        .unwrap_or(0);
    let mut out = format!("Detection results: pack `{}`, seed {}\n", m.pack, m.seed);
    out.push_str(&format!(
        "{:<width$}  {:<8}  {:<9}  {}\n",
        "Attack", "Detected", "Prevented", "False Positives"
    ));
    out.push_str(&format!("{}\n", "-".repeat(width + 40)));
    let line = |r: &MatrixRow| {
        format!(
            "{:<width$}  {:<8}  {:<9}  {}\n",
            r.attack,
            mark(r.detected),
            mark(r.prevented),
            r.false_positives
        )
    };
    for r in &m.rows {
        out.push_str(&line(r));
    }
    out.push_str(&format!("{}\n", "-".repeat(width + 40)));
    for r in &m.extra {
        out.push_str(&line(r));
    }
    out.push_str(&format!("Total false positives: {}\n", m.total_false_positives));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::pack;

    #[test]
    fn shipped_and_adjusted_packs() {
        let opts = PipelineOptions::default();
        let shipped = run_matrix("shipped", &pack::default_pack(), 1, &opts).unwrap();
        let expected = [
            (true, true, 0),
            (true, true, 0),
            (true, true, 0),
            (true, true, 1),
            (false, false, 0),
        ];
        for (row, (d, p, fp)) in shipped.rows.iter().zip(expected) {
            assert_eq!(
                (row.detected, row.prevented, row.false_positives),
                (d, p, fp),
                "{}",
                row.attack
            );
        }
        assert_eq!(shipped.total_false_positives, 1);

        let adjusted = run_matrix("adjusted", &pack::adjusted_pack(), 1, &opts).unwrap();
        assert_eq!(adjusted.total_false_positives, 0);
        assert!(adjusted.rows[..4].iter().all(|r| r.detected && r.prevented));
        let text = render_matrix(&shipped);
        assert!(text.contains("Privilege Escalation via ptrace"));
    }
}
