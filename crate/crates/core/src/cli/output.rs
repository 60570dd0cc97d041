//! Run manifests and CSV serialization. Floats use Rust's shortest
//! round-trip formatting, so identical runs give identical bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::curriculum::{AblationRow, AblationSummary, TrainRow};

pub const METRICS_HEADER: &str = "iter,loss_total,loss_recon,loss_pr,alpha,num_gaussians,psnr,ssim";
pub const ABLATION_HEADER: &str = "target,levels,mode,seed,peak_gaussians,final_psnr,final_ssim,final_alpha";

/// Center crop applied to an input image at ingestion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Crop {
    pub path: String,
    pub original: [usize; 2],
    pub cropped: [usize; 2],
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: Option<u64>,
    pub config: BTreeMap<String, String>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub crops: Vec<Crop>,
    pub results: BTreeMap<String, String>,
    pub duration_seconds: f64,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: None,
            config: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            crops: Vec::new(),
            results: BTreeMap::new(),
            duration_seconds: 0.0,
        }
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        let mut text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        text.push('\n');
        std::fs::write(dir.join("manifest.json"), text)
    }
}

pub fn metrics_csv(rows: &[TrainRow]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.iter, r.loss_total, r.loss_recon, r.loss_pr, r.alpha, r.gaussian_count, r.psnr, r.ssim
        );
    }
    out
}

fn mode_name(mode: Option<crate::filterbank::LearnMode>) -> String {
    mode.map_or_else(|| "none".to_string(), |m| m.to_string())
}

/// Data rows followed by one `mean` row per `(levels, mode)` group, whose
/// seed column reads `all`.
pub fn ablation_csv(rows: &[AblationRow], summary: &[AblationSummary]) -> String {
    let mut out = String::from(ABLATION_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.target,
            r.levels,
            mode_name(r.mode),
            r.seed,
            r.peak_count,
            r.final_psnr,
            r.final_ssim,
            r.final_alpha
        );
    }
    for s in summary {
        let _ = writeln!(
            out,
            "mean,{},{},all,{},{},{},{}",
            s.levels,
            mode_name(s.mode),
            s.mean_peak_count,
            s.mean_final_psnr,
            s.mean_final_ssim,
            s.mean_final_alpha
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filterbank::LearnMode;

    #[test]
    fn metrics_rows() {
        let row = TrainRow {
            iter: 3,
            loss_total: 0.25,
            loss_recon: 0.2,
            loss_pr: 1.0,
            alpha: 0.1,
            gaussian_count: 40,
            psnr: 21.5,
            ssim: 0.75,
        };
        assert_eq!(metrics_csv(&[row]), format!("{METRICS_HEADER}\n3,0.25,0.2,1,0.1,40,21.5,0.75\n"));
    }

    #[test]
    fn ablation_rows_and_means() {
        let row = |levels, mode, seed, peak| AblationRow {
            target: "t".into(),
            levels,
            mode,
            seed,
            peak_count: peak,
            final_psnr: 30.0,
            final_ssim: 0.9,
            final_alpha: 1.0,
        };
        let rows = vec![row(0, None, 0, 10), row(2, Some(LearnMode::Scale), 0, 7)];
        let summary = crate::curriculum::summarize(&rows);
        let csv = ablation_csv(&rows, &summary);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[1], "t,0,none,0,10,30,0.9,1");
        assert_eq!(lines[2], "t,2,scale,0,7,30,0.9,1");
        assert_eq!(lines[3], "mean,0,none,all,10,30,0.9,1");
        assert!(!csv.contains('\r'));
    }
}
