use std::sync::Arc;

use proptest::prelude::*;
use sag_core::experiment::{emit_csv, parse_csv, MetricsRow};
use sag_core::optim::{lipschitz_backtrack, SagBasicState, SagState, SagStep};
use sag_core::{
    Dataset, EvalCounter, Loss, Objective, Preprocessor, SparseVector, Standardize, StepRule,
    SyntheticSpec,
};

fn loss() -> impl Strategy<Value = Loss> {
    prop_oneof![Just(Loss::Logistic), Just(Loss::Squared)]
}

/// Small datasets with about 40% zero entries and labels in {-1, +1}.
fn rows(max_n: usize, max_p: usize) -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>)> {
    (1..=max_n, 1..=max_p).prop_flat_map(|(n, p)| {
        let entry = prop_oneof![2 => Just(0.0), 3 => -3.0..3.0f64];
        (
            proptest::collection::vec(proptest::collection::vec(entry, p), n),
            proptest::collection::vec(prop_oneof![Just(-1.0), Just(1.0)], n),
        )
    })
}

fn objective(rows: &[Vec<f64>], labels: &[f64], loss: Loss, lambda: f64) -> Objective {
    let data = Dataset::from_dense_rows(rows, labels).unwrap();
    Objective::new(Arc::new(data), loss, lambda).unwrap()
}

fn point(p: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-2.0..2.0f64, p)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Objective, a point and a second point of matching dimension.
fn problem() -> impl Strategy<Value = (Objective, Vec<f64>, Vec<f64>)> {
    (rows(8, 5), loss(), 0.0..1.0f64).prop_flat_map(|((r, l), loss, lambda)| {
        let obj = objective(&r, &l, loss, lambda);
        let p = obj.dim();
        (Just(obj), point(p), point(p))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn gradient_matches_central_differences((obj, x, _) in problem()) {
        let g = obj.gradient(&x);
        let h = 1e-6;
        for j in 0..x.len() {
            let mut up = x.clone();
            let mut down = x.clone();
            up[j] += h;
            down[j] -= h;
            let fd = (obj.value(&up) - obj.value(&down)) / (2.0 * h);
            prop_assert!((fd - g[j]).abs() <= 1e-6 * (1.0 + g[j].abs()), "coord {j}: {fd} vs {}", g[j]);
        }
    }

    #[test]
    fn full_gradient_is_mean_of_components((obj, x, _) in problem()) {
        let n = obj.n();
        let mut mean = vec![0.0; obj.dim()];
        for i in 0..n {
            for (m, g) in mean.iter_mut().zip(obj.component_gradient(i, &x)) {
                *m += g / n as f64;
            }
        }
        for (a, b) in mean.iter().zip(obj.gradient(&x)) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn smoothness_and_strong_convexity_sandwich((obj, x, y) in problem()) {
        let c = obj.constants();
        let r = dist_sq(&x, &y);
        let diff: Vec<f64> = y.iter().zip(&x).map(|(a, b)| a - b).collect();
        let tol = 1e-10;
        for i in 0..obj.n() {
            let upper = obj.component_value(i, &x)
                + dot(&obj.component_gradient(i, &x), &diff)
                + 0.5 * c.lipschitz * r;
            prop_assert!(obj.component_value(i, &y) <= upper + tol * (1.0 + upper.abs()));
        }
        let lower = obj.value(&x) + dot(&obj.gradient(&x), &diff) + 0.5 * c.mu * r;
        prop_assert!(obj.value(&y) >= lower - tol * (1.0 + lower.abs()));
    }

    #[test]
    fn backtracking_result_satisfies_inequality(
        loss in loss(),
        label in prop_oneof![Just(-1.0), Just(1.0)],
        z in -20.0..20.0f64,
        q in 1e-3..50.0f64,
        l0 in 1e-4..10.0f64,
    ) {
        let lambda = 0.3;
        let mut counter = EvalCounter::default();
        let l = lipschitz_backtrack(loss, label, z, q, lambda, l0, &mut counter).unwrap();
        prop_assert_eq!(l, l0 * 2f64.powi(counter.line_search_evals as i32));
        // the component is l(b, aᵀx) + (λ/2)‖x‖²; step Δ = −(s/L)a with ‖Δ‖² = s²q/L²
        let s = loss.derivative(label, z);
        let delta_sq = s * s * q / (l * l);
        let lhs = loss.value(label, z - s * q / l) - loss.value(label, z) + 0.5 * lambda * delta_sq;
        let rhs = -s * s * q / l + 0.5 * l * delta_sq;
        prop_assert!(lhs <= rhs + 1e-12 * (1.0 + loss.value(label, z).abs()));
        // a global curvature bound never needs doubling
        let mut fresh = EvalCounter::default();
        let safe = loss.curvature_bound() * q + lambda;
        prop_assert_eq!(lipschitz_backtrack(loss, label, z, q, lambda, safe, &mut fresh).unwrap(), safe);
    }

    #[test]
    fn libsvm_round_trip((r, l) in rows(10, 6)) {
        let data = Dataset::from_dense_rows(&r, &l).unwrap();
        let back = Dataset::parse_libsvm_with_dim(&data.to_libsvm(), Some(data.dim())).unwrap();
        prop_assert_eq!(&back, &data);
        prop_assert_eq!(back.content_hash(), data.content_hash());
    }

    #[test]
    fn split_partitions((r, l) in rows(15, 3), seed in any::<u64>()) {
        prop_assume!(r.len() >= 2);
        let data = Dataset::from_dense_rows(&r, &l).unwrap();
        let (train, test) = data.split_half(seed).unwrap();
        prop_assert_eq!(train.n(), r.len().div_ceil(2));
        prop_assert_eq!(train.n() + test.n(), data.n());
        let mut all: Vec<String> = train.examples().iter().chain(test.examples())
            .map(|e| format!("{:?}", e)).collect();
        let mut orig: Vec<String> = data.examples().iter().map(|e| format!("{:?}", e)).collect();
        all.sort();
        orig.sort();
        prop_assert_eq!(all, orig);
        prop_assert_eq!(data.split_half(seed).unwrap(), (train, test));
    }

    #[test]
    fn standardized_columns((r, l) in rows(12, 4)) {
        let data = Dataset::from_dense_rows(&r, &l).unwrap();
        let out = Preprocessor::fit(&data, Standardize::Always).transform(&data).unwrap();
        let p = data.dim();
        prop_assert_eq!(out.dim(), p + 1);
        let n = out.n() as f64;
        let dense: Vec<Vec<f64>> = out.examples().iter().map(|e| e.features.to_dense()).collect();
        for row in &dense {
            prop_assert_eq!(row[p], 1.0);
        }
        for j in 0..p {
            let mean = dense.iter().map(|row| row[j]).sum::<f64>() / n;
            let var = dense.iter().map(|row| (row[j] - mean).powi(2)).sum::<f64>() / n;
            prop_assert!(mean.abs() < 1e-10);
            let constant = r.iter().all(|row| row[j] == r[0][j]);
            if constant {
                prop_assert!(var == 0.0);
            } else {
                prop_assert!((var - 1.0).abs() < 1e-9, "column {j} variance {var}");
            }
        }
    }

    #[test]
    fn sparse_vector_dot_matches_dense(v in point(9), x in point(9)) {
        let sv = SparseVector::from_dense(&v);
        prop_assert!((sv.dot(&x) - dot(&v, &x)).abs() < 1e-12);
        prop_assert_eq!(sv.to_dense(), v);
    }

    #[test]
    fn memory_sum_tracks_stored_gradients(
        (obj, _, _) in problem(),
        picks in proptest::collection::vec(any::<prop::sample::Index>(), 1..60),
        lazy in any::<bool>(),
    ) {
        let n = obj.n();
        let mut state = SagState::new(n, vec![0.0; obj.dim()], lazy);
        let mut counter = EvalCounter::default();
        let alpha = 0.5 / obj.constants().lipschitz;
        for pick in &picks {
            state.step(&obj, SagStep::Constant(alpha), pick.index(n), &mut counter).unwrap();
        }
        let mut exact = vec![0.0; obj.dim()];
        for (i, &s) in state.memory().iter().enumerate() {
            for (j, v) in obj.features(i).iter() {
                exact[j] += s * v;
            }
        }
        for (a, b) in exact.iter().zip(state.memory_sum()) {
            prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
        }
        prop_assert_eq!(state.m(), state.seen().iter().filter(|&&s| s).count());
    }

    #[test]
    fn basic_memory_sum_is_row_sum(
        (obj, _, _) in problem(),
        picks in proptest::collection::vec(any::<prop::sample::Index>(), 1..40),
    ) {
        let n = obj.n();
        let mut state = SagBasicState::new(n, vec![0.0; obj.dim()]);
        let mut counter = EvalCounter::default();
        let alpha = 1.0 / obj.constants().lipschitz;
        for pick in &picks {
            state.step(&obj, alpha, pick.index(n), &mut counter).unwrap();
        }
        for j in 0..obj.dim() {
            let sum: f64 = (0..n).map(|i| state.memory(i)[j]).sum();
            prop_assert!((sum - state.memory_sum()[j]).abs() <= 1e-10 * (1.0 + sum.abs()));
        }
        prop_assert_eq!(counter.component_gradients, picks.len() as u64);
    }

    #[test]
    fn lazy_matches_eager(
        n in 2usize..30,
        p in 2usize..40,
        density in 0.05..0.5f64,
        seed in any::<u64>(),
        loss in loss(),
        picks in proptest::collection::vec(any::<prop::sample::Index>(), 1..150),
    ) {
        let data = SyntheticSpec::new(n, p, density, seed).generate_train(loss).unwrap();
        let obj = Objective::new(Arc::new(data), loss, 0.1).unwrap();
        let c = obj.constants();
        let alpha = 2.0 / (c.lipschitz + n as f64 * c.mu);
        let mut lazy = SagState::new(n, vec![0.0; obj.dim()], true);
        let mut eager = SagState::new(n, vec![0.0; obj.dim()], false);
        let mut counter = EvalCounter::default();
        for pick in &picks {
            let i = pick.index(n);
            lazy.step(&obj, SagStep::Constant(alpha), i, &mut counter).unwrap();
            eager.step(&obj, SagStep::Constant(alpha), i, &mut counter).unwrap();
        }
        let e = eager.x().to_vec();
        for (a, b) in lazy.x().iter().zip(&e) {
            prop_assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn step_rule_display_round_trips(c in 1e-8..1e8f64, which in 0usize..6) {
        let rule = match which {
            0 => StepRule::Constant(c),
            1 => StepRule::InverseLipschitz(c),
            2 => StepRule::SagDefault,
            3 => StepRule::SmallTheory,
            4 => StepRule::LargeTheory,
            _ => StepRule::LineSearch,
        };
        let text = rule.to_string();
        prop_assert!(!text.contains(','));
        prop_assert_eq!(text.parse::<StepRule>().unwrap(), rule);
    }

    #[test]
    fn synthetic_spec_round_trips(n in 1usize..10_000, p in 1usize..500, density in 0.001..=1.0f64, seed in any::<u64>()) {
        let spec = SyntheticSpec::new(n, p, density, seed);
        prop_assert_eq!(spec.to_string().parse::<SyntheticSpec>().unwrap(), spec);
    }

    #[test]
    fn csv_round_trips(
        values in proptest::collection::vec((any::<f64>(), any::<f64>(), 0.0..=1.0f64, any::<u64>()), 0..20)
    ) {
        let rows: Vec<MetricsRow> = values.iter().enumerate().map(|(k, &(a, b, e, seed))| MetricsRow {
            method: "sag".into(),
            step: "1e-2/L".into(),
            seed,
            effective_pass: k as f64,
            train_obj: a,
            train_gap: b,
            test_obj: a * 0.5,
            test_error: e,
        }).collect();
        let text = emit_csv(&rows);
        prop_assert_eq!(text.lines().count(), rows.len() + 1);
        let back = parse_csv(&text).unwrap();
        prop_assert_eq!(back.len(), rows.len());
        for (x, y) in back.iter().zip(&rows) {
            for (u, v) in [(x.train_obj, y.train_obj), (x.train_gap, y.train_gap), (x.test_obj, y.test_obj), (x.test_error, y.test_error)] {
                prop_assert!(u.to_bits() == v.to_bits() || (u.is_nan() && v.is_nan()));
            }
            prop_assert_eq!(x.seed, y.seed);
        }
    }
}
