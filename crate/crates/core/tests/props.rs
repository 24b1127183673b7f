//! Property suites over the model layer and grid geometry.

use eb_core::grid::{fs_distance, SphereGrid};
use eb_core::model::{
    classify_divisor, cone_angles, lambda_of_b, Divisor, DivisorEntry, ModelParams, P1Point,
};
use proptest::prelude::*;

/// Pool of pairwise distinct divisor points.
fn point_pool() -> Vec<P1Point> {
    vec![
        P1Point::Infinity,
        P1Point::finite(0.0, 0.0),
        P1Point::finite(1.0, 0.0),
        P1Point::finite(0.0, 1.0),
        P1Point::finite(-0.5, 0.3),
        P1Point::finite(2.0, 0.0),
        P1Point::finite(0.3, -0.7),
        P1Point::finite(-1.0, -1.0),
    ]
}

fn divisor_strategy() -> impl Strategy<Value = (Divisor, u32)> {
    (2usize..=5)
        .prop_flat_map(|k| {
            (
                proptest::sample::subsequence((0..point_pool().len()).collect::<Vec<_>>(), k),
                proptest::collection::vec(1u32..=3, k),
            )
        })
        .prop_map(|(idx, mults)| {
            let pool = point_pool();
            let entries: Vec<DivisorEntry> = idx
                .iter()
                .zip(mults.iter())
                .map(|(&i, &m)| DivisorEntry { point: pool[i], multiplicity: m })
                .collect();
            let n: u32 = mults.iter().sum();
            (Divisor::new(entries).expect("pool points are distinct"), n)
        })
}

/// Stable divisors: at least three simple points.
fn stable_divisor_strategy() -> impl Strategy<Value = (Divisor, u32)> {
    (3usize..=7)
        .prop_flat_map(|k| {
            proptest::sample::subsequence((0..point_pool().len()).collect::<Vec<_>>(), k)
        })
        .prop_map(|idx| {
            let pool = point_pool();
            let entries: Vec<DivisorEntry> = idx
                .iter()
                .map(|&i| DivisorEntry { point: pool[i], multiplicity: 1 })
                .collect();
            let n = entries.len() as u32;
            (Divisor::new(entries).expect("pool points are distinct"), n)
        })
}

proptest! {
    #[test]
    fn classification_ignores_entry_order((divisor, n) in divisor_strategy(), seed in 0u64..1000) {
        let params = ModelParams::compact(1.0, n).unwrap();
        let base = classify_divisor(&divisor, &params).unwrap();
        // Rotate the entry list by a pseudo-random offset.
        let mut entries = divisor.entries().to_vec();
        let k = (seed as usize) % entries.len();
        entries.rotate_left(k);
        let permuted = Divisor::new(entries).unwrap();
        prop_assert_eq!(base, classify_divisor(&permuted, &params).unwrap());
    }

    #[test]
    fn angle_defect_closes_the_sphere((divisor, n) in stable_divisor_strategy()) {
        let params = ModelParams::compact(1.0, n).unwrap();
        let angles = cone_angles(&divisor, &params).unwrap();
        // Exact in the stored fractions.
        let num: i64 = angles.iter().map(|a| a.denominator - a.numerator).sum();
        prop_assert_eq!(num, 2 * n as i64);
        let float: f64 = angles.iter().map(|a| 1.0 - a.value).sum();
        prop_assert!((float - 2.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_couplings_sit_below_critical_and_fall(
        b in 0.3f64..6.0,
        delta in 0.05f64..2.0,
        half in 1u32..4,
    ) {
        let params = ModelParams::compact(1.0, 2 * half).unwrap();
        let lam = lambda_of_b(b, &params).unwrap();
        let lam2 = lambda_of_b(b + delta, &params).unwrap();
        prop_assert!(lam < params.lambda_critical().unwrap());
        prop_assert!(lam2 < lam, "coupling must fall as the family parameter grows");
    }

    #[test]
    fn blend_partitions_unity_across_charts(r in 0.4f64..2.5) {
        let grid = SphereGrid::build(16, 1.2).unwrap();
        let sum = grid.chi_at(r) + grid.chi_at(1.0 / r);
        prop_assert!((sum - 1.0).abs() < 1e-12, "chi sum {sum}");
    }

    #[test]
    fn round_distance_is_symmetric_and_chart_free(
        ax in -1.5f64..1.5, ay in -1.5f64..1.5,
        bx in -1.5f64..1.5, by in -1.5f64..1.5,
    ) {
        let d = fs_distance(0, ax, ay, 0, bx, by);
        let d_rev = fs_distance(0, bx, by, 0, ax, ay);
        prop_assert_eq!(d, d_rev);
        prop_assert!(d <= std::f64::consts::PI / std::f64::consts::SQRT_2 + 1e-12);
        // Same pair expressed in the other chart, away from its pole.
        let (ra, rb) = (ax.hypot(ay), bx.hypot(by));
        if ra > 0.2 && rb > 0.2 {
            let (wax, way) = (ax / (ra * ra), -ay / (ra * ra));
            let (wbx, wby) = (bx / (rb * rb), -by / (rb * rb));
            let d_other = fs_distance(1, wax, way, 1, wbx, wby);
            prop_assert!((d - d_other).abs() < 1e-9, "{d} vs {d_other}");
        }
    }

    #[test]
    fn divisor_serialization_round_trips((divisor, _n) in divisor_strategy()) {
        let text = serde_json::to_string(&divisor).unwrap();
        let back: Divisor = serde_json::from_str(&text).unwrap();
        let text2 = serde_json::to_string(&back).unwrap();
        prop_assert_eq!(text, text2);
        prop_assert_eq!(divisor.total(), back.total());
    }
}
