//! Learning-curve metrics and their CSV/plot emission.

use std::collections::BTreeMap;

/// Cumulative shortfall against a reference value: Σ_t (J* − J_t).
///
/// Nonnegative whenever `j_star` dominates the trace, and additive over
/// trace concatenation.
pub fn overall_regret(j_trace: &[f64], j_star: f64) -> f64 {
    j_trace.iter().map(|j| j_star - j).sum()
}

/// Area under a learning curve: the trapezoidal integral of return against
/// environment steps, normalized by the steps the curve spans. A single
/// point has no span and evaluates to its own return.
///
/// Points must be sorted by step (strictly increasing, as in any metrics
/// trace).
pub fn auc(points: &[(u64, f64)]) -> f64 {
    assert!(!points.is_empty(), "auc needs at least one metrics row");
    let span = points[points.len() - 1].0 - points[0].0;
    if span == 0 {
        return points[0].1;
    }
    let mut area = 0.0;
    for w in points.windows(2) {
        area += 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0) as f64;
    }
    area / span as f64
}

/// Mean and population standard deviation.
pub(crate) fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// One parsed learner curve: which algorithm produced it and the
/// per-iteration `(env_steps, mean_return)` points.
#[derive(Debug, Clone)]
pub struct RunCurve {
    pub algorithm: String,
    pub points: Vec<(u64, f64)>,
}

/// Linear interpolation of a curve at step `x` (clamped to its endpoints).
fn interp(points: &[(u64, f64)], x: f64) -> f64 {
    if x <= points[0].0 as f64 {
        return points[0].1;
    }
    for w in points.windows(2) {
        let (x0, y0) = (w[0].0 as f64, w[0].1);
        let (x1, y1) = (w[1].0 as f64, w[1].1);
        if x <= x1 {
            return y0 + (y1 - y0) * (x - x0) / (x1 - x0);
        }
    }
    points[points.len() - 1].1
}

/// Long-format plot data: per-algorithm mean ± std curves.
///
/// Runs of one algorithm may report on different step grids (batch
/// boundaries drift with episode lengths), so each run is linearly
/// interpolated onto a uniform grid over the steps all of them cover; the
/// grid has as many points as the shortest run. Output columns:
/// `algorithm,env_steps,mean_return,std_return`.
pub fn emit_plot_data(runs: &[RunCurve]) -> String {
    let mut by_algo: BTreeMap<&str, Vec<&RunCurve>> = BTreeMap::new();
    for run in runs {
        by_algo.entry(run.algorithm.as_str()).or_default().push(run);
    }
    let mut out = String::from("algorithm,env_steps,mean_return,std_return\n");
    for (algo, group) in by_algo {
        let grid_len = group.iter().map(|r| r.points.len()).min().unwrap();
        let lo = group.iter().map(|r| r.points[0].0).max().unwrap() as f64;
        let hi = group.iter().map(|r| r.points[r.points.len() - 1].0).min().unwrap() as f64;
        for i in 0..grid_len {
            let x = if grid_len == 1 {
                lo
            } else {
                lo + (hi - lo) * i as f64 / (grid_len - 1) as f64
            };
            let ys: Vec<f64> = group.iter().map(|r| interp(&r.points, x)).collect();
            let (mean, std) = mean_std(&ys);
            out.push_str(&format!("{algo},{x},{mean},{std}\n"));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regret_of_an_optimal_trace_is_zero() {
        assert_eq!(overall_regret(&[2.5, 2.5, 2.5], 2.5), 0.0);
    }

    #[test]
    fn regret_sums_the_per_iteration_gaps() {
        assert!((overall_regret(&[0.5, 0.75], 1.0) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn regret_is_additive_over_concatenation() {
        let (a, b) = (vec![0.1, 0.7, 0.3], vec![0.9, 0.2]);
        let whole: Vec<f64> = a.iter().chain(&b).copied().collect();
        let split = overall_regret(&a, 1.0) + overall_regret(&b, 1.0);
        assert!((overall_regret(&whole, 1.0) - split).abs() < 1e-12);
    }

    #[test]
    fn regret_is_nonnegative_under_a_dominating_reference() {
        let trace = [0.0, 0.4, 0.99, 1.0];
        assert!(overall_regret(&trace, 1.0) >= 0.0);
    }

    #[test]
    fn solver_regret_grows_sublinearly_on_the_aliased_env() {
        // The aliased env is symmetric, so the clipped solver's iterates stay
        // uniform — which is also the best memoryless policy. Overall regret
        // is identically zero and the sublinearity bound (quadrupling the
        // iterations at most doubles the regret) holds degenerately.
        use crate::cfr::{cfr_solve, CfrVariant};
        use crate::pomdp::{aliased_two_state, best_memoryless_policy, SearchSpec};

        let model = aliased_two_state();
        let j_star =
            best_memoryless_policy(&model, model.discount, &SearchSpec::default()).unwrap().value;
        let outcome = cfr_solve(&model, 4096, CfrVariant::CfrPlus);
        let js: Vec<f64> = outcome.trace.iter().map(|r| r.j).collect();
        let r_1024 = overall_regret(&js[..1024], j_star);
        let r_4096 = overall_regret(&js, j_star);
        assert!(r_1024.abs() < 1e-9, "expected zero regret, got {r_1024}");
        assert!(r_4096 <= 2.0 * r_1024 + 1e-9, "{r_4096} vs {r_1024}");
    }

    #[test]
    fn auc_of_a_flat_curve_is_its_level() {
        let pts: Vec<(u64, f64)> = (1..=10).map(|i| (i * 100, 0.7)).collect();
        assert!((auc(&pts) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn auc_of_a_linear_ramp_is_half() {
        let pts: Vec<(u64, f64)> = (0..=100).map(|i| (i * 10, i as f64 / 100.0)).collect();
        assert!((auc(&pts) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn auc_of_a_single_row_is_that_row() {
        assert_eq!(auc(&[(1024, 0.33)]), 0.33);
    }

    #[test]
    fn plot_data_for_one_run_is_the_run_with_zero_std() {
        let run = RunCurve { algorithm: "arm".into(), points: vec![(100, 0.1), (200, 0.5)] };
        let csv = emit_plot_data(&[run]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "algorithm,env_steps,mean_return,std_return");
        assert_eq!(lines[1], "arm,100,0.1,0");
        assert_eq!(lines[2], "arm,200,0.5,0");
    }

    #[test]
    fn identical_runs_have_zero_std() {
        let run = RunCurve { algorithm: "dqn".into(), points: vec![(50, 0.2), (150, 0.4)] };
        let csv = emit_plot_data(&[run.clone(), run]);
        for line in csv.lines().skip(1) {
            assert!(line.ends_with(",0"), "{line}");
        }
    }

    #[test]
    fn mismatched_grids_are_aligned_by_interpolation() {
        // One run reports at 100/200/300, the other at 150/300: the grid has
        // two points spanning [150, 300] and the first run is interpolated.
        let a = RunCurve { algorithm: "arm".into(), points: vec![(100, 0.0), (200, 1.0), (300, 1.0)] };
        let b = RunCurve { algorithm: "arm".into(), points: vec![(150, 0.5), (300, 0.9)] };
        let csv = emit_plot_data(&[a, b]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        let first: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(first[1], "150");
        // Run a at 150 interpolates to 0.5; run b starts at 0.5 → mean 0.5, std 0.
        assert_eq!(first[2], "0.5");
        assert_eq!(first[3], "0");
        let second: Vec<&str> = lines[2].split(',').collect();
        assert_eq!(second[1], "300");
        assert!((second[2].parse::<f64>().unwrap() - 0.95).abs() < 1e-12);
    }

    #[test]
    fn curves_of_different_algorithms_stay_separate() {
        let a = RunCurve { algorithm: "arm".into(), points: vec![(100, 0.1)] };
        let b = RunCurve { algorithm: "dqn".into(), points: vec![(100, 0.9)] };
        let csv = emit_plot_data(&[b, a]);
        let lines: Vec<&str> = csv.lines().collect();
        assert!(lines[1].starts_with("arm,"));
        assert!(lines[2].starts_with("dqn,"));
    }
}
