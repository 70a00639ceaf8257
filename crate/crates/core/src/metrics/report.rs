use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// One row of a quality table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: String,
    pub fvd: f64,
    pub psnr: f64,
    pub lpips: f64,
    pub ssim: f64,
    pub n_clips: usize,
}

impl MetricsReport {
    pub fn is_finite(&self) -> bool {
        [self.fvd, self.psnr, self.lpips, self.ssim].iter().all(|v| v.is_finite())
    }
}

/// Writes `<stem>.json` and `<stem>.csv` (columns
/// `model,fvd,psnr,lpips,ssim,n_clips`).
pub fn write_reports(stem: impl AsRef<Path>, reports: &[MetricsReport]) -> Result<()> {
    let stem = stem.as_ref();
    if let Some(dir) = stem.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut json = serde_json::to_string_pretty(reports)?;
    json.push('\n');
    fs::write(stem.with_extension("json"), json)?;
    let mut w = csv::Writer::from_path(stem.with_extension("csv"))?;
    for r in reports {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_header_and_json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("report");
        let r = MetricsReport {
            model: "m".into(),
            fvd: 1.5,
            psnr: 20.0,
            lpips: 0.1,
            ssim: 0.9,
            n_clips: 3,
        };
        write_reports(&stem, std::slice::from_ref(&r)).unwrap();
        let csv = fs::read_to_string(stem.with_extension("csv")).unwrap();
        assert_eq!(csv.lines().next().unwrap(), "model,fvd,psnr,lpips,ssim,n_clips");
        let back: Vec<MetricsReport> =
            serde_json::from_str(&fs::read_to_string(stem.with_extension("json")).unwrap()).unwrap();
        assert_eq!(back, vec![r]);
    }
}
