use std::f64::consts::PI;

use cdquench::coefficients::{
    correlation_length, h_m_analytic, h_m_exact, truncated_kernel, CdConfig, CoeffMode, Filter, KernelEvaluator,
};
use cdquench::momentum::{cd_kernel_exact, momentum_grid};
use proptest::prelude::*;

fn residuals(g: f64, cfg: CdConfig, n: usize) -> Vec<(f64, f64)> {
    let eval = KernelEvaluator::new(n, cfg).unwrap();
    let w = eval.weighted_coefficients(g);
    eval.grid()
        .iter()
        .map(|&k| (k, cd_kernel_exact(k, g).unwrap() / 2.0 - eval.kernel_at(k, &w)))
        .collect()
}

#[test]
fn exact_matches_large_n_limit() {
    let n = 1600;
    let mut worst = 0.0f64;
    let gs = [0.1, 0.3, 0.5, 0.7, 0.9, -0.5, -0.9, 1.1, 1.5, 2.0, 5.0, 10.0, -3.0];
    for &g in &gs {
        for m in 1..=20 {
            let d = (h_m_exact(m, g, n).unwrap() - h_m_analytic(m, g)).abs();
            worst = worst.max(d);
        }
    }
    assert!(worst <= 1e-6, "worst deviation {worst}");
}

#[test]
fn log_slope_recovers_correlation_length() {
    let g = 0.5;
    let pts: Vec<(f64, f64)> = (1..=20)
        .map(|m| (m as f64, h_m_exact(m, g, 1600).unwrap().abs().ln()))
        .collect();
    let n = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / n, sy / n);
    let num: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    let slope = num / den;
    let target = -1.0 / correlation_length(g);
    assert!((slope / target - 1.0).abs() < 0.01, "slope {slope} vs {target}");
}

#[test]
fn full_series_recomposes_kernel() {
    let n = 1600;
    let full = CdConfig::full(n);
    for g in [0.5, 2.0] {
        let worst = residuals(g, full, n).iter().fold(0.0f64, |m, (_, r)| m.max(r.abs()));
        assert!(worst <= 1e-10, "g={g}: {worst}");
    }
    for (k, r) in residuals(1.0, full, n).into_iter().skip(2) {
        let f = cd_kernel_exact(k, 1.0).unwrap();
        assert!(r.abs() <= 1e-3 * f.abs(), "k={k}: residual {r}, f {f}");
    }
}

#[test]
fn dirichlet_residual_oscillates() {
    let cfg = CdConfig::new(16, Filter::Dirichlet, CoeffMode::Exact);
    let r = residuals(1.0, cfg, 1600);
    let changes = r.windows(2).filter(|w| w[0].1.signum() != w[1].1.signum()).count();
    assert!(changes >= 3, "{changes} sign changes");
}

#[test]
fn raised_cosine_residual_is_one_signed_with_shrinking_ripples() {
    let m = 16;
    let cfg = CdConfig::new(m, Filter::RaisedCosine, CoeffMode::Exact);
    let tail: Vec<f64> = residuals(1.0, cfg, 1600)
        .into_iter()
        .filter(|(k, _)| *k > 4.0 * PI / m as f64)
        .map(|(_, r)| r)
        .collect();
    let sign = tail[0].signum();
    assert!(
        tail.iter().all(|r| r.signum() == sign),
        "residual changes sign beyond 4π/M"
    );

    let mag: Vec<f64> = tail.iter().map(|r| r.abs()).collect();
    let peaks: Vec<f64> = mag
        .windows(3)
        .filter(|w| w[1] > w[0] && w[1] >= w[2])
        .map(|w| w[1])
        .collect();
    let envelope: Vec<f64> = std::iter::once(mag[0]).chain(peaks).collect();
    assert!(envelope.len() >= 3);
    for w in envelope.windows(2) {
        assert!(w[1] < w[0], "ripple envelope grows: {envelope:?}");
    }
}

#[test]
fn truncated_kernel_at_generic_points_matches_direct_sum() {
    let cfg = CdConfig::new(4, Filter::Dirichlet, CoeffMode::Analytic);
    for k in [0.1, 0.7, 2.9] {
        let direct: f64 = (1..=4).map(|m| (m as f64 * k).sin() / 8.0).sum();
        assert!((truncated_kernel(k, 1.0, &cfg, 1600).unwrap() - direct).abs() < 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn coefficients_decay_inside_ferromagnet(g in -0.95..0.95f64) {
        let n = 400;
        let mut prev = f64::INFINITY;
        for m in 1..=30 {
            let h = h_m_exact(m, g, n).unwrap().abs();
            prop_assert!(h <= prev + 1e-15, "m={} {} > {}", m, h, prev);
            prev = h;
        }
    }

    #[test]
    fn analytic_magnitude_is_exponential_in_range(g in 0.05..0.95f64, m in 1usize..40) {
        let xi = correlation_length(g);
        let expected = (-((m - 1) as f64) / xi).exp() / 8.0;
        prop_assert!((h_m_analytic(m, g).abs() - expected).abs() <= 1e-12 * expected.max(1e-300) + 1e-300);
    }

    #[test]
    fn kernel_is_odd_in_k(k in 0.01..3.1f64, g in 0.0..3.0f64, m in 1usize..20) {
        let cfg = CdConfig::new(m, Filter::RaisedCosine, CoeffMode::Analytic);
        let a = truncated_kernel(k, g, &cfg, 64).unwrap();
        let b = truncated_kernel(-k, g, &cfg, 64).unwrap();
        prop_assert!((a + b).abs() <= 1e-14);
    }

    #[test]
    fn full_series_on_small_chains(half in 1usize..40, g in prop_oneof![0.0..0.9f64, 1.1..4.0f64]) {
        let n = 2 * half;
        let full = CdConfig::full(n);
        for k in momentum_grid(n).unwrap() {
            let f = cd_kernel_exact(k, g).unwrap() / 2.0;
            prop_assert!((truncated_kernel(k, g, &full, n).unwrap() - f).abs() <= 1e-12);
        }
    }
}
