use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::Deserialize;

use super::ablation::EvalReport;
use super::metrics::ScoredSet;
use crate::error::{Error, Result};
use crate::synth::DatasetManifest;

fn table_err(path: &Path, e: impl ToString) -> Error {
    Error::BadScoreTable {
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}

/// CSV with columns `name,auroc,auprc,accuracy,threshold,orientation,seconds_per_patch`.
pub fn reports_to_csv(reports: &[EvalReport]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in reports {
        w.serialize(r).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
}

pub fn write_reports_csv(path: impl AsRef<Path>, reports: &[EvalReport]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, reports_to_csv(reports)).map_err(|e| Error::io(path, e))
}

pub fn write_reports_json(path: impl AsRef<Path>, reports: &[EvalReport]) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(reports)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Fixed-width table for terminals.
pub fn format_table(reports: &[EvalReport]) -> String {
    let mut out = format!(
        "{:<10} {:>8} {:>8} {:>8} {:>12}\n",
        "method", "AUROC", "AUPRC", "Acc", "s/patch"
    );
    for r in reports {
        let speed = r
            .seconds_per_patch
            .map_or_else(|| "-".to_string(), |s| format!("{s:.6}"));
        out += &format!(
            "{:<10} {:>8.4} {:>8.4} {:>8.4} {:>12}\n",
            r.name, r.auroc, r.auprc, r.accuracy, speed
        );
    }
    out
}

#[derive(Deserialize)]
struct ScoreRow {
    id: String,
    score: f64,
}

/// Reads an `id,score` CSV (with header).
pub fn read_scores_csv(path: impl AsRef<Path>) -> Result<Vec<(String, f64)>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    rdr.deserialize::<ScoreRow>()
        .map(|row| row.map(|r| (r.id, r.score)).map_err(|e| table_err(path, e)))
        .collect()
}

/// Attaches manifest labels to externally computed scores. Every id must
/// appear in the manifest exactly once; records without a score are left out.
pub fn join_scores(manifest: &DatasetManifest, scores: &[(String, f64)]) -> Result<ScoredSet> {
    let labels: HashMap<&str, u8> = manifest.records.iter().map(|r| (r.id.as_str(), r.label)).collect();
    let mut seen = HashSet::new();
    let mut s = Vec::with_capacity(scores.len());
    let mut y = Vec::with_capacity(scores.len());
    for (id, score) in scores {
        let label = *labels
            .get(id.as_str())
            .ok_or_else(|| Error::InvalidConfig(format!("score id `{id}` is not in the manifest")))?;
        if !seen.insert(id.as_str()) {
            return Err(Error::InvalidConfig(format!("score id `{id}` appears twice")));
        }
        s.push(*score);
        y.push(label);
    }
    ScoredSet::new(s, y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::Orientation;
    use crate::synth::ManifestRecord;

    fn report(name: &str) -> EvalReport {
        EvalReport {
            name: name.into(),
            auroc: 0.9,
            auprc: 0.8,
            accuracy: 0.85,
            threshold: 0.5,
            orientation: Orientation::HigherPositive,
            seconds_per_patch: Some(0.01),
        }
    }

    #[test]
    fn csv_has_table_columns() {
        let text = reports_to_csv(&[report("FS-BAND"), report("SB-HFM")]);
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "name,auroc,auprc,accuracy,threshold,orientation,seconds_per_patch"
        );
        assert_eq!(lines.count(), 2);
        assert!(format_table(&[report("FS-BAND")]).contains("FS-BAND"));
    }

    fn manifest() -> DatasetManifest {
        let rec = |id: &str, label| ManifestRecord {
            id: id.into(),
            label,
            kind: "texture".into(),
            bits: None,
            seed: 0,
            path: format!("{id}.pgm"),
            dither: false,
        };
        DatasetManifest {
            records: vec![rec("a", 1), rec("b", 0), rec("c", 0)],
            root: Default::default(),
        }
    }

    #[test]
    fn scores_join_to_labels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        std::fs::write(&path, "id,score\na, 0.9\nc,0.2\n").unwrap();
        let scores = read_scores_csv(&path).unwrap();
        let set = join_scores(&manifest(), &scores).unwrap();
        assert_eq!(set.labels(), &[1, 0]);
        assert_eq!(set.scores(), &[0.9, 0.2]);

        std::fs::write(&path, "id,score\na,high\n").unwrap();
        assert!(matches!(read_scores_csv(&path), Err(Error::BadScoreTable { .. })));
        assert!(join_scores(&manifest(), &[("zz".into(), 1.0)]).is_err());
        assert!(join_scores(&manifest(), &[("a".into(), 1.0), ("a".into(), 2.0)]).is_err());
    }
}
