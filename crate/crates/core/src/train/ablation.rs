use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use super::{evaluate, train, BundleGenerator, EvalConfig, TrainConfig};
use crate::codec::Codec;
use crate::conditioning::{ConditioningKind, FusionKind, TextEncoder};
use crate::data::Clip;
use crate::error::{Error, Result};
use crate::metrics::MetricsReport;

/// Distinct (conditioning, fusion) pairs to train and compare.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AblationGrid {
    rows: Vec<(ConditioningKind, FusionKind)>,
}

impl AblationGrid {
    pub fn new(rows: Vec<(ConditioningKind, FusionKind)>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Empty("ablation grid has no rows".into()));
        }
        for (i, row) in rows.iter().enumerate() {
            if rows[..i].contains(row) {
                return Err(Error::Config(format!(
                    "duplicate ablation row ({}, {})",
                    row.0.as_str(),
                    row.1.as_str()
                )));
            }
        }
        Ok(Self { rows })
    }

    /// The unconditioned baseline plus the six encoder/fusion variants.
    pub fn table2() -> Self {
        use ConditioningKind as C;
        use FusionKind as F;
        Self::new(vec![
            (C::None, F::Linear),
            (C::Learnable, F::Linear),
            (C::Learnable, F::AttnImageQuery),
            (C::Text, F::Linear),
            (C::TextFinetuned, F::Linear),
            (C::TextFinetuned, F::AttnImageQuery),
            (C::TextFinetuned, F::AttnTripletQuery),
        ])
        .expect("rows are distinct")
    }

    pub fn rows(&self) -> &[(ConditioningKind, FusionKind)] {
        &self.rows
    }

    pub fn needs_text(&self) -> bool {
        self.rows.iter().any(|(c, _)| c.uses_text())
    }
}

impl FromStr for AblationGrid {
    type Err = Error;

    /// `table2`, or comma-separated `conditioning:fusion` pairs such as
    /// `none:linear,learnable:att-t`.
    fn from_str(s: &str) -> Result<Self> {
        if s == "table2" {
            return Ok(Self::table2());
        }
        let rows = s
            .split(',')
            .map(|pair| {
                let (c, f) = pair
                    .split_once(':')
                    .ok_or_else(|| Error::Config(format!("expected conditioning:fusion, got {pair:?}")))?;
                Ok((c.trim().parse()?, f.trim().parse()?))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(rows)
    }
}

/// One ablation result. `report` is `None` when the row failed.
#[derive(Debug, Clone)]
pub struct AblationRow {
    pub conditioning: ConditioningKind,
    pub fusion: FusionKind,
    pub report: Option<MetricsReport>,
    pub status: String,
}

impl AblationRow {
    pub fn label(&self) -> (&'static str, &'static str) {
        match self.conditioning {
            ConditioningKind::None => ("-", "-"),
            c => (c.as_str(), self.fusion.as_str()),
        }
    }
}

/// Trains and evaluates one model per grid row with the same seed, data and
/// iteration budget. A failing row is recorded and the remaining rows still
/// run.
pub fn run_ablation(
    grid: &AblationGrid,
    base: &TrainConfig,
    train_clips: &[Clip],
    test_clips: &[Clip],
    codec: &Codec,
    text: Option<&TextEncoder>,
    eval: &EvalConfig,
) -> Vec<AblationRow> {
    grid.rows()
        .iter()
        .map(|&(conditioning, fusion)| {
            let name = format!("{}+{}", conditioning.as_str(), fusion.as_str());
            log::info!("ablation row {name}");
            let config = TrainConfig {
                conditioning,
                fusion,
                ..base.clone()
            };
            let result = train(&config, train_clips, codec.clone(), text.cloned(), None).and_then(|out| {
                let generator = BundleGenerator {
                    bundle: &out.bundle,
                    steps: eval.steps,
                };
                evaluate(&name, &generator, test_clips, eval)
            });
            match result {
                Ok(report) => AblationRow {
                    conditioning,
                    fusion,
                    report: Some(report),
                    status: "ok".into(),
                },
                Err(e) => {
                    log::warn!("ablation row {name} failed: {e}");
                    AblationRow {
                        conditioning,
                        fusion,
                        report: None,
                        status: format!("failed: {e}"),
                    }
                }
            }
        })
        .collect()
}

#[derive(Serialize)]
struct CsvRow<'a> {
    conditioning: &'a str,
    fusion: &'a str,
    fvd: Option<f64>,
    psnr: Option<f64>,
    lpips: Option<f64>,
    ssim: Option<f64>,
    status: &'a str,
}

/// Writes `conditioning,fusion,fvd,psnr,lpips,ssim,status`; failed rows
/// leave the metric cells empty.
pub fn write_ablation_csv(path: impl AsRef<Path>, rows: &[AblationRow]) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        let (conditioning, fusion) = row.label();
        let r = row.report.as_ref();
        w.serialize(CsvRow {
            conditioning,
            fusion,
            fvd: r.map(|r| r.fvd),
            psnr: r.map(|r| r.psnr),
            lpips: r.map(|r| r.lpips),
            ssim: r.map(|r| r.ssim),
            status: &row.status,
        })?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table2_shape() {
        let g = AblationGrid::table2();
        assert_eq!(g.rows().len(), 7);
        assert!(g.needs_text());
        assert_eq!(g.rows()[0].0, ConditioningKind::None);
    }

    #[test]
    fn duplicates_rejected() {
        let row = (ConditioningKind::Learnable, FusionKind::Linear);
        assert!(AblationGrid::new(vec![row, row]).is_err());
        assert!("learnable:linear,learnable:linear".parse::<AblationGrid>().is_err());
    }

    #[test]
    fn parse_pairs() {
        let g: AblationGrid = "none:linear, learnable:att-t".parse().unwrap();
        assert_eq!(
            g.rows(),
            &[
                (ConditioningKind::None, FusionKind::Linear),
                (ConditioningKind::Learnable, FusionKind::AttnTripletQuery)
            ]
        );
        assert!("learnable".parse::<AblationGrid>().is_err());
        assert!("learnable:concat".parse::<AblationGrid>().is_err());
    }

    #[test]
    fn csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        let rows = vec![
            AblationRow {
                conditioning: ConditioningKind::None,
                fusion: FusionKind::Linear,
                report: Some(MetricsReport {
                    model: "x".into(),
                    fvd: 1.0,
                    psnr: 2.0,
                    lpips: 3.0,
                    ssim: 0.5,
                    n_clips: 4,
                }),
                status: "ok".into(),
            },
            AblationRow {
                conditioning: ConditioningKind::Text,
                fusion: FusionKind::Linear,
                report: None,
                status: "failed: no text".into(),
            },
        ];
        write_ablation_csv(&p, &rows).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "conditioning,fusion,fvd,psnr,lpips,ssim,status");
        assert_eq!(lines[1], "-,-,1.0,2.0,3.0,0.5,ok");
        assert_eq!(lines[2], "text,linear,,,,,failed: no text");
    }
}
