//! Property tests over random shapes and laws.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use multidescent::designer::{BetaMode, CurvePlan, StepCertificate, Verdict};
use multidescent::distributions::{FeatureLaw, ProductLaw};
use multidescent::pinv::{moore_penrose_residuals, pinv_direct, relative_frobenius_error, DesignMatrix};
use multidescent::plan::{read_plan, write_plan};
use multidescent::risk::{estimate_curve, BetaSpec};

fn matrix(n: usize, d: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-3.0f64..3.0, n * d).prop_map(move |v| DMatrix::from_vec(n, d, v))
}

fn shape_and_columns() -> impl Strategy<Value = (DMatrix<f64>, Vec<DVector<f64>>)> {
    (3usize..10, 1usize..14, 1usize..6).prop_flat_map(|(n, d, k)| {
        (
            matrix(n, d),
            prop::collection::vec(prop::collection::vec(-3.0f64..3.0, n).prop_map(DVector::from_vec), k),
        )
    })
}

fn feature_law() -> impl Strategy<Value = FeatureLaw> {
    prop_oneof![
        Just(FeatureLaw::StdGaussian),
        (1e-6f64..10.0).prop_map(|s| FeatureLaw::gaussian(s).unwrap()),
        (1e-6f64..10.0, 1e-3f64..1e6).prop_map(|(s, m)| FeatureLaw::trimodal(s, m).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn appends_track_direct_pseudoinverse((a, cols) in shape_and_columns()) {
        let mut state = pinv_direct(&DesignMatrix::new(a).unwrap());
        for b in &cols {
            state = state.append(b).unwrap();
            let direct = pinv_direct(state.design());
            prop_assert!(relative_frobenius_error(state.pinv(), direct.pinv()) <= 1e-7);
            for r in moore_penrose_residuals(state.a(), state.pinv()) {
                prop_assert!(r <= 1e-7, "residual {r}");
            }
        }
    }

    #[test]
    fn plans_round_trip(
        n in 1usize..12,
        designed in prop::collection::vec(feature_law().prop_filter("designed laws", |l| *l != FeatureLaw::StdGaussian), 1..6),
        eta in 1e-3f64..10.0,
        rho in prop::option::of(1e-4f64..10.0),
        stats in prop::collection::vec((-1e3f64..1e3, 0.0f64..1e2, 2usize..10_000_000, 0u64..i64::MAX as u64, 0usize..3), 6),
    ) {
        let base = n + 8;
        let mut laws = vec![FeatureLaw::StdGaussian; base];
        laws.extend(designed.iter().copied());
        let verdicts = [Verdict::Certified, Verdict::Inconclusive, Verdict::Flipped];
        let certification = (0..designed.len())
            .map(|k| {
                let (m, s, t, seed, v) = stats[k];
                StepCertificate { d: base + k, delta_mean: m, delta_stderr: s, trials: t, seed, verdict: verdicts[v] }
            })
            .collect();
        let plan = CurvePlan {
            n,
            laws: ProductLaw::new(laws).unwrap(),
            eta,
            beta_mode: if rho.is_some() { BetaMode::GaussianBeta } else { BetaMode::Zero },
            rho,
            certification,
        };
        let text = write_plan(&plan, &["round trip".into()]).unwrap();
        prop_assert_eq!(read_plan(&text).unwrap(), plan);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Below n the risk cannot decrease, whatever the laws; common draws
    /// across d make this hold for the estimates too, not only in expectation.
    #[test]
    fn underparam_curve_is_monotone(laws in prop::collection::vec(feature_law(), 6), seed in 0u64..1000) {
        let law = ProductLaw::new(laws).unwrap();
        let curve = estimate_curve(&law, 9, 1, 6, 1.0, &BetaSpec::Zero, 400, seed).unwrap();
        for w in curve.windows(2) {
            prop_assert!(w[1].mean >= w[0].mean * (1.0 - 1e-10), "{} -> {}", w[0].mean, w[1].mean);
        }
    }
}
