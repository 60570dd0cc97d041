//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any hard criterion fails. Criterion 7 is soft: a miss is
//! reported as FLAG and does not fail the run.
//!
//! `ACCEPTANCE_ONLY=1,3,8` runs a subset.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use freqmod::cli::config::parse_ablation_config;
use freqmod::corpus::trend_targets;
use freqmod::curriculum::{ablate, summarize, train, AblationRow, AblationSpec, TrainConfig};
use freqmod::pngio::{read_png, write_png};
use freqmod::splat2d::{render, render_backward, Gaussian2D, GaussianCloud, N_PARAMS};
use freqmod::transform::{modulate, modulate_vjp};
use freqmod::{FilterBank, FilterTaps, ImageBuffer, LearnMode, PrGrad};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DATA: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data");

enum Verdict {
    Pass,
    Fail,
    Flag,
}

struct Outcome {
    verdict: Verdict,
    detail: String,
}

fn hard(pass: bool, detail: String) -> Outcome {
    Outcome { verdict: if pass { Verdict::Pass } else { Verdict::Fail }, detail }
}

fn soft(pass: bool, detail: String) -> Outcome {
    Outcome { verdict: if pass { Verdict::Pass } else { Verdict::Flag }, detail }
}

fn random_corpus() -> Vec<ImageBuffer> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    (0..20)
        .map(|i| {
            let h = 8 * rng.gen_range(2..=8);
            let w = 8 * rng.gen_range(2..=8);
            let ch = if i % 2 == 0 { 1 } else { 3 };
            ImageBuffer::from_fn(h, w, ch, |_, _, _| rng.gen::<f64>())
        })
        .collect()
}

fn pr_identity() -> Outcome {
    let start = Instant::now();
    let bank = FilterBank::haar(LearnMode::Scale, 1.0);
    let mut worst = 0.0f64;
    for img in random_corpus() {
        for levels in 1..=3 {
            worst = worst.max(modulate(&img, &bank, levels).unwrap().max_abs_diff(&img));
        }
    }
    let elapsed = start.elapsed();
    hard(
        worst < 1e-9 && elapsed < Duration::from_secs(5),
        format!("max error {worst:.3e} (< 1e-9), {:.2}s (< 5s)", elapsed.as_secs_f64()),
    )
}

fn block_mean_limit() -> Outcome {
    let bank = FilterBank::haar(LearnMode::Scale, 0.0);
    let mut worst = 0.0f64;
    for img in random_corpus() {
        for levels in 1..=3 {
            let out = modulate(&img, &bank, levels).unwrap();
            worst = worst.max(out.max_abs_diff(&img.block_mean(1 << levels)));
        }
    }
    hard(worst < 1e-9, format!("max error {worst:.3e} (< 1e-9)"))
}

fn closed_form_pr_loss() -> Outcome {
    let mut loss_err = 0.0f64;
    let mut grad_err = 0.0f64;
    for alpha in [-1.0, -0.5, 0.0, 0.25, 0.5, 0.75, 1.0, 1.5] {
        let bank = FilterBank::haar(LearnMode::Scale, alpha);
        loss_err = loss_err.max((bank.pr_loss() - 2.0 * (1.0 - alpha) * (1.0 - alpha)).abs());
        let PrGrad::Scale(g) = bank.pr_grad() else { unreachable!() };
        grad_err = grad_err.max((g + 4.0 * (1.0 - alpha)).abs());
    }
    let mut whole_rel = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..5 {
        let taps: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let mut bank = FilterBank::haar(LearnMode::Whole, 0.0);
        bank.set_free_taps(FilterTaps::new(taps.clone()).unwrap());
        let PrGrad::Whole(g) = bank.pr_grad() else { unreachable!() };
        for k in 0..2 {
            let eps = 1e-6;
            let at = |d: f64| {
                let mut t = taps.clone();
                t[k] += d;
                let mut b = bank.clone();
                b.set_free_taps(FilterTaps::new(t).unwrap());
                b.pr_loss()
            };
            let numeric = (at(eps) - at(-eps)) / (2.0 * eps);
            whole_rel = whole_rel.max((g[k] - numeric).abs() / g[k].abs().max(numeric.abs()).max(1e-12));
        }
    }
    hard(
        loss_err < 1e-12 && grad_err < 1e-12 && whole_rel < 1e-6,
        format!("loss err {loss_err:.3e}, grad err {grad_err:.3e} (< 1e-12); whole rel {whole_rel:.3e} (< 1e-6)"),
    )
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

fn adjoint_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let img = ImageBuffer::from_fn(16, 16, 3, |_, _, _| rng.gen::<f64>());
    let cot = ImageBuffer::from_fn(16, 16, 3, |_, _, _| rng.gen_range(-1.0..1.0));
    let mut vjp_rel = 0.0f64;
    for levels in 1..=3 {
        for alpha in [0.0, 0.4, 1.0] {
            let bank = FilterBank::haar(LearnMode::Scale, alpha);
            let f = |a: f64| modulate(&img, &FilterBank::haar(LearnMode::Scale, a), levels).unwrap().dot(&cot);
            let eps = 1e-6;
            let numeric = (f(alpha + eps) - f(alpha - eps)) / (2.0 * eps);
            vjp_rel = vjp_rel.max(rel(modulate_vjp(&img, &bank, levels, &cot).unwrap(), numeric));
        }
    }

    let cloud = GaussianCloud::new(vec![
        Gaussian2D { mean: [5.3, 6.1], log_scale: [1.1, 0.5], rotation: 0.3, color: [0.9, 0.2, 0.4], opacity_logit: 0.4 },
        Gaussian2D { mean: [10.7, 9.2], log_scale: [0.6, 1.0], rotation: -1.1, color: [0.1, 0.7, -0.3], opacity_logit: -0.8 },
        Gaussian2D { mean: [8.2, 3.9], log_scale: [1.3, 1.2], rotation: 2.0, color: [0.5, 0.5, 0.8], opacity_logit: 1.5 },
    ]);
    let weights = ImageBuffer::from_fn(16, 16, 3, |_, _, _| rng.gen_range(-1.0..1.0));
    let grads = render_backward(&cloud, &weights);
    let mut render_rel = 0.0f64;
    for (i, g) in cloud.gaussians().iter().enumerate() {
        for k in 0..N_PARAMS {
            let eps = 1e-6;
            let at = |d: f64| {
                let mut p = g.params();
                p[k] += d;
                let mut c = cloud.clone();
                c.gaussians_mut()[i] = Gaussian2D::from_params(&p);
                render(&c, 16, 16, 3).dot(&weights)
            };
            let numeric = (at(eps) - at(-eps)) / (2.0 * eps);
            render_rel = render_rel.max(rel(grads.params[i][k], numeric));
        }
    }
    hard(
        vjp_rel < 1e-5 && render_rel < 1e-4,
        format!("modulate vjp rel {vjp_rel:.3e} (< 1e-5), render rel {render_rel:.3e} (< 1e-4)"),
    )
}

fn alpha_trajectory() -> Outcome {
    let start = Instant::now();
    let target = ImageBuffer::filled(8, 8, 1, 0.5);
    let config = TrainConfig {
        levels: 2,
        iterations: 10_000,
        alpha_lr: 1e-4,
        lambda_pr: 0.05,
        pr_only: true,
        n0: 1,
        // alpha is decoupled from the fit; keep the cloud at one primitive
        densify_from: 10_000,
        ..TrainConfig::default()
    };
    let report = train(&config, &target).unwrap();
    let rate: f64 = 1.0 - 2e-5;
    let worst = report
        .rows
        .iter()
        .map(|r| ((1.0 - r.alpha) - rate.powi(r.iter as i32)).abs())
        .fold(0.0f64, f64::max);
    let final_gap = 1.0 - report.final_alpha;
    let elapsed = start.elapsed();
    hard(
        worst < 1e-9 && elapsed < Duration::from_secs(10),
        format!(
            "1 - alpha_T = {final_gap:.6} (closed form {:.6}), worst step error {worst:.3e} (< 1e-9), {:.2}s (< 10s)",
            rate.powi(10_000),
            elapsed.as_secs_f64()
        ),
    )
}

fn trend_inputs() -> (TrainConfig, Vec<(String, ImageBuffer)>) {
    let text = std::fs::read_to_string(Path::new(DATA).join("trend.cfg")).unwrap();
    let (config, _) = parse_ablation_config(&text).unwrap();
    let photo = read_png(Path::new(DATA).join("photo_crop.png")).unwrap();
    (config, trend_targets(&photo))
}

fn mean_peak(rows: &[AblationRow], levels: usize, mode: Option<LearnMode>) -> f64 {
    let s = summarize(rows);
    s.iter().find(|s| s.levels == levels && s.mode == mode).map(|s| s.mean_peak_count).unwrap()
}

fn peak_trend(rows: &[AblationRow], elapsed: Duration) -> Outcome {
    let scale = Some(LearnMode::Scale);
    let summary = summarize(rows);
    let find = |l, m| summary.iter().find(|s| s.levels == l && s.mode == m).unwrap();
    let (l0, l1, l2) = (find(0, None), find(1, scale), find(2, scale));
    let strictly = l0.mean_peak_count > l1.mean_peak_count && l1.mean_peak_count > l2.mean_peak_count;
    let peak = |t: &str, l: usize, s: u64| {
        rows.iter().find(|r| r.target == t && r.levels == l && r.seed == s && (l == 0 || r.mode == scale)).unwrap().peak_count
    };
    let mut pairs = 0;
    let mut total = 0;
    for r in rows.iter().filter(|r| r.levels == 0) {
        total += 1;
        if peak(&r.target, 2, r.seed) <= r.peak_count {
            pairs += 1;
        }
    }
    let psnr_gap = l0.mean_final_psnr - l2.mean_final_psnr;
    let in_time = elapsed < Duration::from_secs(30 * 60);
    hard(
        strictly && pairs >= 7 && psnr_gap <= 1.5 && in_time,
        format!(
            "mean peak {:.1} > {:.1} > {:.1}: {strictly}; levels-2 <= levels-0 in {pairs}/{total} pairs (>= 7); \
             mean PSNR {:.2} vs {:.2} dB (gap {psnr_gap:.2} <= 1.5); {:.0}s (< 1800s)",
            l0.mean_peak_count,
            l1.mean_peak_count,
            l2.mean_peak_count,
            l0.mean_final_psnr,
            l2.mean_final_psnr,
            elapsed.as_secs_f64()
        ),
    )
}

fn scale_vs_whole(scale_rows: &[AblationRow], whole_rows: &[AblationRow]) -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for levels in [1, 2] {
        let s = mean_peak(scale_rows, levels, Some(LearnMode::Scale));
        let w = mean_peak(whole_rows, levels, Some(LearnMode::Whole));
        ok &= s <= w;
        parts.push(format!("levels {levels}: scale {s:.1} vs whole {w:.1}"));
    }
    soft(ok, parts.join("; "))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("target.png");
    let photo = read_png(Path::new(DATA).join("photo_crop.png")).unwrap();
    let crop = ImageBuffer::from_fn(32, 32, 3, |r, c, k| photo.get(r + 48, c + 48, k));
    write_png(&target, &crop).unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "iterations = 150\nlevels = 2\nn0 = 20\ndensify_from = 20\ndensify_interval = 20\n").unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_freqmod"))
            .args(["train", "--config", cfg.to_str().unwrap(), "--target", target.to_str().unwrap()])
            .args(["--out", out.to_str().unwrap(), "--seed", "5"])
            .status()
            .unwrap();
        assert!(status.success());
        std::fs::read(out.join("metrics.csv")).unwrap()
    };
    let (a, b) = (run("a"), run("b"));
    hard(a == b && !a.is_empty(), format!("{} bytes, identical: {}", a.len(), a == b))
}

fn main() {
    let only: Option<Vec<u32>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let wanted = |id: u32| only.as_ref().map_or(true, |o| o.contains(&id));
    let mut outcomes: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut report = |id: u32, name: &'static str, o: Outcome| {
        let tag = match o.verdict {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Flag => "FLAG",
        };
        println!("criterion {id} [{tag}] {name}: {}", o.detail);
        outcomes.push((id, name, o));
    };

    if wanted(1) {
        report(1, "perfect reconstruction at alpha = 1", pr_identity());
    }
    if wanted(2) {
        report(2, "block-mean limit at alpha = 0", block_mean_limit());
    }
    if wanted(3) {
        report(3, "closed-form PR loss and gradient", closed_form_pr_loss());
    }
    if wanted(4) {
        report(4, "adjoint finite-difference checks", adjoint_checks());
    }
    if wanted(5) {
        report(5, "pr-only alpha trajectory", alpha_trajectory());
    }
    if wanted(6) || wanted(7) {
        let (config, targets) = trend_inputs();
        let start = Instant::now();
        let spec = AblationSpec { levels: vec![0, 1, 2], modes: vec![LearnMode::Scale], seeds: vec![0, 1, 2] };
        let scale_rows = ablate(&config, &targets, &spec).unwrap();
        let elapsed = start.elapsed();
        print_rows(&scale_rows);
        if wanted(6) {
            report(6, "peak Gaussian count falls with levels", peak_trend(&scale_rows, elapsed));
        }
        if wanted(7) {
            let spec = AblationSpec { levels: vec![1, 2], modes: vec![LearnMode::Whole], seeds: vec![0, 1, 2] };
            let whole_rows = ablate(&config, &targets, &spec).unwrap();
            print_rows(&whole_rows);
            report(7, "scale mode peaks no higher than whole mode (soft)", scale_vs_whole(&scale_rows, &whole_rows));
        }
    }
    if wanted(8) {
        report(8, "byte-identical metrics.csv across reruns", determinism());
    }

    let failed: Vec<u32> =
        outcomes.iter().filter(|(_, _, o)| matches!(o.verdict, Verdict::Fail)).map(|(id, _, _)| *id).collect();
    let flagged = outcomes.iter().filter(|(_, _, o)| matches!(o.verdict, Verdict::Flag)).count();
    println!("acceptance: {} run, {} failed {failed:?}, {flagged} flagged", outcomes.len(), failed.len());
    if !failed.is_empty() {
        std::process::exit(1);
    }
}

fn print_rows(rows: &[AblationRow]) {
    for r in rows {
        println!(
            "  {:8} levels {} {:5} seed {} peak {:5} psnr {:6.2} ssim {:.4} alpha {:.4}",
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
}
