use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One evaluated component or pair. Absent metrics are omitted from the output.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    /// Component name, or `a|b` for a pair.
    pub subject: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chamfer: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub area_difference: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normal_consistency: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contact_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_gap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intersection_volume: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contact_vertices: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contact_area: Option<f64>,
}

/// JSON lines, one record per line.
pub fn write_report(path: impl AsRef<Path>, records: &[MetricsRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(|e| Error::config("report", e.to_string()))?;
        out.write_all(b"\n").expect("writing to a Vec cannot fail");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_report(path: impl AsRef<Path>) -> Result<Vec<MetricsRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                file: path.display().to_string(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_round_trip() {
        let recs = vec![
            MetricsRecord {
                subject: "a".into(),
                chamfer: Some(0.01),
                normal_consistency: Some(0.999),
                ..Default::default()
            },
            MetricsRecord {
                subject: "a|b".into(),
                contact_ratio: Some(0.27),
                min_gap: Some(-0.001),
                ..Default::default()
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.jsonl");
        write_report(&p, &recs).unwrap();
        assert_eq!(read_report(&p).unwrap(), recs);
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(!text.contains("intersection_volume"));
    }
}
