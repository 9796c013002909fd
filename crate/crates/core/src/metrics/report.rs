use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{si_snr, stoi};
use crate::data::{load_pair, missing_files, read_wav, Manifest, ManifestRecord, Split};
use crate::error::{Error, Result};
use crate::model::Generator;

/// Where enhanced audio for each manifest record comes from.
pub enum Enhanced<'a> {
    /// Score mixtures only.
    None,
    /// `dir/<mixture file name>` for every record.
    Dir(&'a Path),
    /// Run the generator on each mixture.
    Model(&'a Generator<f32>),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScoreRow {
    pub utterance_id: String,
    pub noise_id: String,
    pub snr_db: f64,
    pub split: Split,
    pub seen_noise: bool,
    pub seen_snr: bool,
    pub stoi_mixture: f64,
    pub si_snr_mixture: f64,
    pub stoi_enhanced: Option<f64>,
    pub si_snr_enhanced: Option<f64>,
}

/// Mean of every row sharing a (noise, SNR) cell.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupMean {
    pub noise_id: String,
    pub snr_db: f64,
    pub seen_noise: bool,
    pub seen_snr: bool,
    pub count: usize,
    pub stoi_mixture: f64,
    pub si_snr_mixture: f64,
    pub stoi_enhanced: Option<f64>,
    pub si_snr_enhanced: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreReport {
    pub rows: Vec<ScoreRow>,
    /// Sorted by noise id, then by descending SNR.
    pub groups: Vec<GroupMean>,
}

pub fn enhanced_path(dir: &Path, r: &ManifestRecord) -> PathBuf {
    dir.join(r.mixture_path.file_name().unwrap_or_default())
}

/// Scores every record of `split`. All missing inputs are reported together
/// before any audio is read.
pub fn score_manifest(m: &Manifest, split: Split, enhanced: Enhanced<'_>) -> Result<ScoreReport> {
    let records: Vec<&ManifestRecord> = m.split(split).collect();
    if records.is_empty() {
        return Err(Error::EmptyCorpus(format!(
            "no {split} records in manifest"
        )));
    }
    let mut missing: Vec<PathBuf> = missing_files(m)
        .into_iter()
        .filter(|p| {
            records
                .iter()
                .any(|r| &r.mixture_path == p || &r.clean_path == p)
        })
        .collect();
    if let Enhanced::Dir(dir) = enhanced {
        missing.extend(
            records
                .iter()
                .map(|r| enhanced_path(dir, r))
                .filter(|p| !p.exists()),
        );
    }
    if !missing.is_empty() {
        return Err(Error::MissingFiles(missing));
    }

    let mut rows = Vec::with_capacity(records.len());
    for r in records {
        let (mix, clean) = load_pair(r)?;
        let enh = match enhanced {
            Enhanced::None => None,
            Enhanced::Dir(dir) => Some(read_wav(&enhanced_path(dir, r))?.samples),
            Enhanced::Model(g) => Some(g.enhance(&mix)?),
        };
        let ctx = |e: Error| e.context(r.mixture_path.display().to_string());
        let (stoi_enhanced, si_snr_enhanced) = match &enh {
            Some(e) => (
                Some(stoi(&clean, e).map_err(ctx)?),
                Some(si_snr(&clean, e).map_err(ctx)?),
            ),
            None => (None, None),
        };
        rows.push(ScoreRow {
            utterance_id: r.utterance_id.clone(),
            noise_id: r.noise_id.clone(),
            snr_db: r.snr_db,
            split: r.split,
            seen_noise: m.is_seen(&r.noise_id),
            seen_snr: m.train_snrs.contains(&r.snr_db),
            stoi_mixture: stoi(&clean, &mix).map_err(ctx)?,
            si_snr_mixture: si_snr(&clean, &mix).map_err(ctx)?,
            stoi_enhanced,
            si_snr_enhanced,
        });
    }
    let groups = group_means(&rows);
    Ok(ScoreReport { rows, groups })
}

/// Arithmetic means per (noise, SNR), summed in row order.
pub fn group_means(rows: &[ScoreRow]) -> Vec<GroupMean> {
    let mut keys: Vec<(String, f64)> = Vec::new();
    for r in rows {
        if !keys.iter().any(|(n, s)| *n == r.noise_id && *s == r.snr_db) {
            keys.push((r.noise_id.clone(), r.snr_db));
        }
    }
    keys.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.total_cmp(&a.1)));
    keys.into_iter()
        .map(|(noise_id, snr_db)| {
            let members: Vec<&ScoreRow> = rows
                .iter()
                .filter(|r| r.noise_id == noise_id && r.snr_db == snr_db)
                .collect();
            let n = members.len() as f64;
            let mean = |f: fn(&ScoreRow) -> f64| members.iter().map(|r| f(r)).sum::<f64>() / n;
            let mean_opt = |f: fn(&ScoreRow) -> Option<f64>| {
                members
                    .iter()
                    .map(|r| f(r))
                    .sum::<Option<f64>>()
                    .map(|s| s / n)
            };
            GroupMean {
                seen_noise: members[0].seen_noise,
                seen_snr: members[0].seen_snr,
                count: members.len(),
                stoi_mixture: mean(|r| r.stoi_mixture),
                si_snr_mixture: mean(|r| r.si_snr_mixture),
                stoi_enhanced: mean_opt(|r| r.stoi_enhanced),
                si_snr_enhanced: mean_opt(|r| r.si_snr_enhanced),
                noise_id,
                snr_db,
            }
        })
        .collect()
}

impl ScoreReport {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r)
                .map_err(|e| Error::io("<report>", e.into()))?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::io("<report>", e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Seen SNRs (descending) followed by unseen ones.
    pub fn snr_columns(&self) -> (Vec<f64>, Vec<f64>) {
        let mut seen: Vec<f64> = Vec::new();
        let mut unseen: Vec<f64> = Vec::new();
        for g in &self.groups {
            let col = if g.seen_snr { &mut seen } else { &mut unseen };
            if !col.contains(&g.snr_db) {
                col.push(g.snr_db);
            }
        }
        seen.sort_by(|a, b| b.total_cmp(a));
        unseen.sort_by(|a, b| b.total_cmp(a));
        (seen, unseen)
    }

    fn cell(&self, noise: &str, snr: f64) -> Option<&GroupMean> {
        self.groups
            .iter()
            .find(|g| g.noise_id == noise && g.snr_db == snr)
    }

    /// One block per metric with a Mixture and an Enhanced line per noise
    /// and SNR columns split into Seen and Unseen groups. Noises absent from
    /// training are marked `*`.
    pub fn table(&self) -> String {
        let (seen, unseen) = self.snr_columns();
        let mut noises: Vec<&str> = Vec::new();
        for g in &self.groups {
            if !noises.contains(&g.noise_id.as_str()) {
                noises.push(&g.noise_id);
            }
        }
        let width = noises.iter().map(|n| n.len() + 1).max().unwrap_or(5).max(5);
        let metrics: [(
            &str,
            usize,
            fn(&GroupMean) -> f64,
            fn(&GroupMean) -> Option<f64>,
        ); 2] = [
            ("STOI", 3, |g| g.stoi_mixture, |g| g.stoi_enhanced),
            (
                "SI-SNR (dB)",
                2,
                |g| g.si_snr_mixture,
                |g| g.si_snr_enhanced,
            ),
        ];
        let col = 8;
        let mut out = String::new();
        for (name, prec, mix, enh) in metrics {
            let _ = writeln!(out, "{name}");
            let _ = write!(out, "{:<width$} {:<8} |", "", "");
            let _ = write!(out, " {:<w$}|", "Seen", w = (col * seen.len()).max(5));
            let _ = writeln!(out, " {:<w$}", "Unseen", w = (col * unseen.len()).max(6));
            let _ = write!(out, "{:<width$} {:<8} |", "Noise", "Target");
            for cols in [&seen, &unseen] {
                let mut s = String::new();
                for snr in cols {
                    let _ = write!(s, "{:>col$}", format!("{snr}dB"));
                }
                let _ = write!(out, "{s:<w$}|", w = (col * cols.len()).max(5) + 1);
            }
            out.pop();
            out.push('\n');
            for noise in &noises {
                let marked = if self
                    .groups
                    .iter()
                    .any(|g| g.noise_id == *noise && g.seen_noise)
                {
                    noise.to_string()
                } else {
                    format!("{noise}*")
                };
                for (target, get) in [("Mixture", Some(mix)), ("Enhanced", None)] {
                    let label = if target == "Mixture" {
                        marked.as_str()
                    } else {
                        ""
                    };
                    let _ = write!(out, "{label:<width$} {target:<8} |");
                    for cols in [&seen, &unseen] {
                        let mut s = String::new();
                        for &snr in cols.iter() {
                            let v = self.cell(noise, snr).and_then(|g| match get {
                                Some(f) => Some(f(g)),
                                None => enh(g),
                            });
                            let txt = v.map_or("-".to_string(), |v| format!("{v:.prec$}"));
                            let _ = write!(s, "{txt:>col$}");
                        }
                        let _ = write!(out, "{s:<w$}|", w = (col * cols.len()).max(5) + 1);
                    }
                    out.pop();
                    out.push('\n');
                }
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(noise: &str, snr: f64, seen_snr: bool, stoi: f64, enh: Option<f64>) -> ScoreRow {
        ScoreRow {
            utterance_id: "u".into(),
            noise_id: noise.into(),
            snr_db: snr,
            split: Split::Test,
            seen_noise: noise != "n2",
            seen_snr,
            stoi_mixture: stoi,
            si_snr_mixture: stoi * 10.0,
            stoi_enhanced: enh,
            si_snr_enhanced: enh.map(|v| v * 10.0),
        }
    }

    #[test]
    fn group_means_match_hand_values() {
        let rows = vec![
            row("n1", 0.0, true, 0.7, Some(0.9)),
            row("n1", -3.0, false, 0.6, Some(0.8)),
            row("n1", 0.0, true, 0.5, Some(0.7)),
            row("n2", 0.0, true, 0.4, None),
        ];
        let g = group_means(&rows);
        assert_eq!(g.len(), 3);
        assert_eq!(
            (g[0].noise_id.as_str(), g[0].snr_db, g[0].count),
            ("n1", 0.0, 2)
        );
        assert!((g[0].stoi_mixture - 0.6).abs() < 1e-12);
        assert!((g[0].stoi_enhanced.unwrap() - 0.8).abs() < 1e-12);
        assert_eq!(g[1].snr_db, -3.0);
        assert_eq!(g[2].stoi_enhanced, None);
    }

    #[test]
    fn table_has_seen_and_unseen_groups() {
        let rows = vec![
            row("n1", 0.0, true, 0.7, Some(0.9)),
            row("n1", -3.0, false, 0.6, Some(0.8)),
            row("n2", 0.0, true, 0.4, None),
            row("n2", -3.0, false, 0.3, None),
        ];
        let report = ScoreReport {
            groups: group_means(&rows),
            rows,
        };
        let t = report.table();
        let header = t.lines().nth(1).unwrap();
        assert!(header.contains("Seen") && header.contains("Unseen"));
        assert!(header.find("Seen").unwrap() < header.find("Unseen").unwrap());
        assert!(t.contains("n2*"));
        assert!(t.contains("0.700") && t.contains("0.800"));
        assert!(t.lines().any(|l| l.contains("Enhanced") && l.contains('-')));
        let (seen, unseen) = report.snr_columns();
        assert_eq!((seen, unseen), (vec![0.0], vec![-3.0]));
        assert_eq!(report.to_csv().unwrap().lines().count(), 5);
    }
}
