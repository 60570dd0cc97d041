use freqmod::corpus::{band_limited_noise, checker_blob};
use freqmod::curriculum::{ablate, summarize, train, AblationSpec, TrainConfig};
use freqmod::splat2d::{init_cloud, SplatFitter};
use freqmod::transform::modulate;
use freqmod::{FilterBank, LearnMode};

fn small(iterations: usize) -> TrainConfig {
    TrainConfig { iterations, n0: 6, densify_from: 5, densify_interval: 10, ..TrainConfig::default() }
}

#[test]
fn pr_only_alpha_follows_geometric_decay() {
    let target = band_limited_noise(16, 3, 1);
    let config = TrainConfig { pr_only: true, alpha_lr: 1e-2, lambda_pr: 0.5, ..small(120) };
    let report = train(&config, &target).unwrap();
    let rate = 1.0 - 4.0 * config.alpha_lr * config.lambda_pr;
    for row in &report.rows {
        let expected = 1.0 - rate.powi(row.iter as i32);
        assert!((row.alpha - expected).abs() < 1e-12, "iter {}: {} vs {expected}", row.iter, row.alpha);
    }
    for pair in report.rows.windows(2) {
        assert!(pair[1].loss_pr <= pair[0].loss_pr);
    }
}

#[test]
fn lazy_regularization_matches_every_step_on_average() {
    let target = band_limited_noise(16, 3, 1);
    let every = TrainConfig { pr_only: true, alpha_lr: 1e-3, ..small(60) };
    let lazy = TrainConfig { pr_stride: 4, ..every.clone() };
    let a = train(&every, &target).unwrap();
    let b = train(&lazy, &target).unwrap();
    // between regularization steps alpha stays put
    assert_eq!(b.rows[0].alpha, 0.0);
    assert_eq!(b.rows[2].alpha, 0.0);
    assert!(b.rows[3].alpha > 0.0);
    assert!((a.final_alpha - b.final_alpha).abs() < 1e-3);
}

#[test]
fn zero_levels_is_plain_fitting() {
    let target = checker_blob(16, 4, 2);
    let config = TrainConfig { levels: 0, densify_from: 1000, ..small(40) };
    let report = train(&config, &target).unwrap();
    let (h, w, ch) = target.shape();
    let mut fitter =
        SplatFitter::new(init_cloud(&target, config.n0, config.seed), config.learning_rates(h, w), config.lambda_ssim, 40);
    for row in &report.rows {
        let step = fitter.step(&target, false).unwrap();
        assert_eq!(row.loss_recon, step.loss.value);
        assert_eq!(row.loss_total, row.loss_recon);
        assert_eq!(row.loss_pr, 0.0);
        assert_eq!(row.alpha, 0.0);
    }
    assert_eq!(report.final_render, fitter.render(h, w, ch));
}

#[test]
fn training_is_deterministic() {
    let target = band_limited_noise(16, 3, 4);
    let config = TrainConfig { seed: 9, ..small(30) };
    let a = train(&config, &target).unwrap();
    let b = train(&config, &target).unwrap();
    assert_eq!(a.rows, b.rows);
    assert_eq!(a.final_render, b.final_render);
}

#[test]
fn peak_count_is_the_row_maximum() {
    let target = checker_blob(16, 4, 5);
    let config = TrainConfig { densify_threshold: 1e-7, ..small(40) };
    let report = train(&config, &target).unwrap();
    let max = report.rows.iter().map(|r| r.gaussian_count).max().unwrap();
    assert_eq!(report.peak_count, max);
    assert!(max > config.n0);
}

#[test]
fn full_spectrum_alpha_gives_the_true_target() {
    let target = band_limited_noise(32, 5, 6);
    let bank = FilterBank::haar(LearnMode::Scale, 1.0 - 1e-6);
    assert!(modulate(&target, &bank, 3).unwrap().max_abs_diff(&target) < 1e-5);
}

#[test]
fn whole_mode_reports_projected_alpha() {
    let target = band_limited_noise(16, 3, 1);
    let config = TrainConfig { mode: LearnMode::Whole, pr_only: true, alpha_lr: 1e-2, lambda_pr: 0.5, ..small(50) };
    let report = train(&config, &target).unwrap();
    let scale = train(&TrainConfig { mode: LearnMode::Scale, ..config.clone() }, &target).unwrap();
    assert!(report.final_alpha > 0.0 && report.final_alpha < 1.0);
    assert!(report.rows.windows(2).all(|p| p[1].loss_pr <= p[0].loss_pr));
    // both residuals vanish together; the free taps may approach from any direction
    assert!(report.rows.last().unwrap().loss_pr < report.rows[0].loss_pr);
    assert!(scale.final_alpha > 0.0);
}

#[test]
fn ablation_rows_and_summary_means() {
    let targets = vec![("a".to_string(), band_limited_noise(16, 3, 1)), ("b".to_string(), checker_blob(16, 4, 1))];
    let spec = AblationSpec { levels: vec![0, 1], modes: vec![LearnMode::Scale, LearnMode::Whole], seeds: vec![0, 1] };
    let rows = ablate(&small(12), &targets, &spec).unwrap();
    assert_eq!(rows.len(), 2 * 2 + 2 * 2 * 2);
    assert_eq!(rows, ablate(&small(12), &targets, &spec).unwrap());
    let summary = summarize(&rows);
    assert_eq!(summary.len(), 3);
    for s in &summary {
        let matching: Vec<_> = rows.iter().filter(|r| r.levels == s.levels && r.mode == s.mode).collect();
        assert_eq!(s.runs, matching.len());
        let psnr = matching.iter().map(|r| r.final_psnr).sum::<f64>() / matching.len() as f64;
        assert_eq!(s.mean_final_psnr, psnr);
    }
}
