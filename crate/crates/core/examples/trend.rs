//! Runs a level/mode sweep over the built-in three-target corpus and prints
//! per-group means. Extra `key=value` arguments override the config, using
//! the same keys as an `ablate` config file.
//!
//! `only=noise,photo` restricts the corpus.
//!
//!     cargo run --release --example trend -- iterations=1000 seeds=0

use std::time::Instant;

use freqmod::cli::config::parse_ablation_config;
use freqmod::corpus;
use freqmod::curriculum::{ablate, summarize};
use freqmod::pngio::read_png;

fn main() -> anyhow::Result<()> {
    let (only, rest): (Vec<String>, Vec<String>) = std::env::args().skip(1).partition(|a| a.starts_with("only="));
    let text: String = rest.into_iter().map(|a| a + "\n").collect();
    let (config, spec) = parse_ablation_config(&text)?;
    let photo = read_png(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/photo_crop.png"))?;
    let targets = corpus::trend_targets(&photo);
    let targets: Vec<_> = match only.first() {
        Some(o) => targets.into_iter().filter(|(n, _)| o[5..].split(',').any(|x| x == n)).collect(),
        None => targets,
    };
    let start = Instant::now();
    let rows = ablate(&config, &targets, &spec)?;
    for r in &rows {
        println!(
            "{:8} L{} {:6} s{} peak {:5} psnr {:6.2} ssim {:.4} alpha {:.4}",
            r.target,
            r.levels,
            r.mode.map_or("none".to_string(), |m| m.to_string()),
            r.seed,
            r.peak_count,
            r.final_psnr,
            r.final_ssim,
            r.final_alpha
        );
    }
    for s in summarize(&rows) {
        println!(
            "MEAN L{} {:6} runs {} peak {:8.1} psnr {:6.2} ssim {:.4} alpha {:.4}",
            s.levels,
            s.mode.map_or("none".to_string(), |m| m.to_string()),
            s.runs,
            s.mean_peak_count,
            s.mean_final_psnr,
            s.mean_final_ssim,
            s.mean_final_alpha
        );
    }
    println!("elapsed {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
