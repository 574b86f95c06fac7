use std::fmt::Write as _;
use std::path::Path;

use crate::harness::{BenchmarkRow, EvalReport, TrialResult, TrialStatus};
use crate::realism::Setting;

use super::trajectory::float;
use super::IoError;

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>, IoError> {
    csv::Writer::from_path(path).map_err(|e| IoError::csv(path, e))
}

fn put<W: std::io::Write>(w: &mut csv::Writer<W>, path: &Path, row: Vec<String>) -> Result<(), IoError> {
    w.write_record(row).map_err(|e| IoError::csv(path, e))
}

/// One row per evaluated episode.
pub fn write_episodes(path: &Path, reports: &[EvalReport]) -> Result<(), IoError> {
    let mut w = writer(path)?;
    put(&mut w, path, ["policy", "env", "setting", "seed", "episode", "return", "length", "terminated"].map(String::from).to_vec())?;
    for r in reports {
        for e in &r.episodes {
            put(
                &mut w,
                path,
                vec![
                    r.policy.clone(),
                    r.env.clone(),
                    r.setting.to_string(),
                    e.seed.to_string(),
                    e.episode.to_string(),
                    float(e.total_return),
                    e.length.to_string(),
                    u8::from(e.terminated).to_string(),
                ],
            )?;
        }
    }
    w.flush().map_err(|e| IoError::at(path, e))
}

pub fn count_rows(path: &Path) -> Result<usize, IoError> {
    let mut rd = csv::Reader::from_path(path).map_err(|e| IoError::csv(path, e))?;
    let mut n = 0;
    for rec in rd.records() {
        rec.map_err(|e| IoError::csv(path, e))?;
        n += 1;
    }
    Ok(n)
}

fn opt(x: Option<f64>) -> String {
    x.map(float).unwrap_or_default()
}

/// Summary statistics, one row per report or benchmark cell.
pub fn write_summary(path: &Path, rows: &[BenchmarkRow]) -> Result<(), IoError> {
    let mut w = writer(path)?;
    put(
        &mut w,
        path,
        ["policy", "env", "setting", "mean", "std", "count", "stderr", "per_seed_means", "observation_mse", "rank", "error"]
            .map(String::from)
            .to_vec(),
    )?;
    for row in rows {
        let r = row.report.as_ref();
        let s = row.stats();
        put(
            &mut w,
            path,
            vec![
                row.policy.clone(),
                row.env.clone(),
                row.setting.to_string(),
                opt(s.map(|s| s.mean)),
                opt(s.map(|s| s.std)),
                s.map(|s| s.count.to_string()).unwrap_or_default(),
                opt(s.map(|s| s.standard_error())),
                r.map(|r| r.per_seed.iter().map(|p| float(p.mean)).collect::<Vec<_>>().join(" "))
                    .unwrap_or_default(),
                opt(r.and_then(|r| r.observation_mse)),
                row.rank.map(|k| k.to_string()).unwrap_or_default(),
                row.error.clone().unwrap_or_default(),
            ],
        )?;
    }
    w.flush().map_err(|e| IoError::at(path, e))
}

/// Rows from single-cell evaluations, with the best baseline appended.
pub fn rows_from_reports(reports: &[EvalReport]) -> Vec<BenchmarkRow> {
    reports
        .iter()
        .map(|r| BenchmarkRow {
            policy: r.policy.clone(),
            env: r.env.clone(),
            setting: r.setting,
            report: Some(r.clone()),
            error: None,
            rank: None,
        })
        .collect()
}

fn cell(row: &BenchmarkRow) -> String {
    match (row.stats(), &row.error) {
        (Some(s), _) => {
            let mark = match row.rank {
                Some(1) => " **",
                Some(2) => " *",
                _ => "",
            };
            format!("{:.2} ± {:.2}{mark}", s.mean, s.std)
        }
        (None, Some(_)) => "failed".into(),
        (None, None) => "-".into(),
    }
}

/// Text table per environment: policies down, settings across, cells
/// `mean ± std` with `**` on the best and `*` on the runner-up, and a last
/// line with the observation error of each setting.
pub fn format_report(rows: &[BenchmarkRow]) -> String {
    let mut envs: Vec<&str> = Vec::new();
    for r in rows {
        if !envs.contains(&r.env.as_str()) {
            envs.push(&r.env);
        }
    }
    let mut out = String::new();
    for env in envs {
        let here: Vec<&BenchmarkRow> = rows.iter().filter(|r| r.env == env).collect();
        let mut settings: Vec<Setting> = here.iter().map(|r| r.setting).collect();
        settings.sort();
        settings.dedup();
        let mut policies: Vec<&str> = Vec::new();
        for r in &here {
            if !policies.contains(&r.policy.as_str()) {
                policies.push(&r.policy);
            }
        }
        let mut table: Vec<Vec<String>> = Vec::new();
        let mut head = vec![env.to_string()];
        head.extend(settings.iter().map(|s| s.label().to_string()));
        table.push(head);
        for p in policies {
            let mut line = vec![p.to_string()];
            for s in &settings {
                line.push(
                    here.iter()
                        .find(|r| r.policy == p && r.setting == *s)
                        .map(|r| cell(r))
                        .unwrap_or_else(|| "-".into()),
                );
            }
            table.push(line);
        }
        let mut mse = vec!["obs mse".to_string()];
        for s in &settings {
            let v = here
                .iter()
                .filter(|r| r.setting == *s)
                .find_map(|r| r.report.as_ref().and_then(|rep| rep.observation_mse));
            mse.push(v.map(|x| format!("{x:.3e}")).unwrap_or_else(|| "0".into()));
        }
        table.push(mse);
        let widths: Vec<usize> = (0..table[0].len())
            .map(|j| table.iter().map(|l| l[j].chars().count()).max().unwrap_or(0))
            .collect();
        for line in &table {
            let cells: Vec<String> = line
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect();
            writeln!(out, "| {} |", cells.join(" | ")).expect("writing to a string");
        }
        out.push('\n');
    }
    out
}

pub fn write_trials(path: &Path, trials: &[TrialResult]) -> Result<(), IoError> {
    let mut w = writer(path)?;
    let names: Vec<String> = trials.first().map(|t| t.params.keys().cloned().collect()).unwrap_or_default();
    let mut head = vec!["trial".to_string(), "status".into(), "mean".into(), "std".into(), "count".into()];
    head.extend(names.iter().cloned());
    put(&mut w, path, head)?;
    for t in trials {
        let mut row = vec![
            t.number.to_string(),
            match t.status {
                TrialStatus::Complete => "complete".into(),
                TrialStatus::Pruned => "pruned".into(),
            },
            float(t.stats.mean),
            float(t.stats.std),
            t.stats.count.to_string(),
        ];
        row.extend(names.iter().map(|n| t.params[n].to_string()));
        put(&mut w, path, row)?;
    }
    w.flush().map_err(|e| IoError::at(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{EpisodeSummary, Stats};

    fn row(policy: &str, setting: Setting, mean: f64, rank: Option<u8>) -> BenchmarkRow {
        BenchmarkRow {
            policy: policy.into(),
            env: "AhnChemoEnv".into(),
            setting,
            report: Some(EvalReport {
                env: "AhnChemoEnv".into(),
                setting,
                policy: policy.into(),
                seeds: vec![1],
                per_seed: vec![Stats::of(&[mean])],
                pooled: Stats::of(&[mean]),
                observation_mse: (setting >= Setting::Noise).then_some(0.01),
                episodes: vec![EpisodeSummary {
                    seed: 1,
                    episode: 0,
                    total_return: mean,
                    length: 3,
                    terminated: false,
                }],
            }),
            error: None,
            rank,
        }
    }

    #[test]
    fn report_layout() {
        let rows = vec![
            row("dqn", Setting::Base, 1.0, Some(1)),
            row("random", Setting::Base, 0.5, Some(2)),
            row("dqn", Setting::Noise, -1.0, Some(1)),
        ];
        let text = format_report(&rows);
        let lines: Vec<&str> = text.lines().filter(|l| !l.is_empty()).collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].starts_with("| AhnChemoEnv | p "));
        assert!(lines[0].contains("| p2"));
        assert!(lines[1].contains("1.00 ± 0.00 **"));
        assert!(lines[2].contains("0.50 ± 0.00 *"));
        assert!(lines[2].split('|').nth(3).unwrap().trim() == "-", "{}", lines[2]);
        assert!(lines[3].starts_with("| obs mse"));
        assert!(lines[3].contains("1.000e-2"));
    }

    #[test]
    fn episodes_file_counts() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("episodes.csv");
        let r = row("dqn", Setting::Base, 1.0, None).report.unwrap();
        write_episodes(&path, &[r.clone(), r]).unwrap();
        assert_eq!(count_rows(&path).unwrap(), 2);
    }
}
