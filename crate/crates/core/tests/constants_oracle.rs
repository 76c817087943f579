mod common;

use proptest::prelude::*;
use regularity_lab::rough::explicit_constants;

use common::{rel_err, CONSTANTS_ORACLE};

#[test]
fn constants_match_high_precision_oracle() {
    for (args, want) in CONSTANTS_ORACLE {
        let [d, p, q, a0, c0] = args;
        let c = explicit_constants(d as usize, p, q, a0, c0).unwrap();
        let got = [c.gamma, c.beta, c.delta, c.amplitude, c.amplitude_proof, c.alpha, c.k1];
        let names = ["gamma", "beta", "delta", "A", "A_proof", "alpha", "K1"];
        for ((g, w), name) in got.iter().zip(want).zip(names) {
            assert!(rel_err(*g, w) < 1e-12, "{name} at {args:?}: {g:e} vs {w:e}");
        }
    }
}

#[test]
fn constants_are_bit_deterministic() {
    for (args, _) in CONSTANTS_ORACLE {
        let [d, p, q, a0, c0] = args;
        let a = explicit_constants(d as usize, p, q, a0, c0).unwrap();
        let b = explicit_constants(d as usize, p, q, a0, c0).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }
}

#[test]
fn constants_round_trip_through_json_with_infinite_exponents() {
    let c = explicit_constants(2, f64::INFINITY, f64::INFINITY, 1.0, 1.0).unwrap();
    let text = serde_json::to_string(&c).unwrap();
    let back: regularity_lab::rough::ConstantsBundle = serde_json::from_str(&text).unwrap();
    assert_eq!(c, back);
}

#[test]
fn inadmissible_exponents_are_rejected() {
    assert!(explicit_constants(3, 2.0, 2.0, 1.0, 1.0).is_err());
    assert!(explicit_constants(1, 1.0, 4.0, 1.0, 1.0).is_err());
    assert!(explicit_constants(1, 4.0, 4.0, 1.0, 0.5).is_err());
    assert!(explicit_constants(1, 4.0, 4.0, 0.0, 1.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exponent_and_decay_ranges(d in 1usize..5, p in 2.0f64..20.0, q_over in 1.0f64..4.0, a0 in 0.1f64..4.0, c0 in 1.0f64..5.0) {
        let q = (d as f64 * 1.01).max(2.0) * q_over;
        prop_assume!(2.0 - 2.0 / p - d as f64 / q > 0.0);
        prop_assume!(d as f64 * (p / (p - 1.0)) / (2.0 * q) < 1.0);
        let c = explicit_constants(d, p, q, a0, c0).unwrap();
        prop_assert!(c.delta > 0.0 && c.delta < 1.0);
        prop_assert!(c.alpha > 0.0 && c.alpha <= c.gamma.min(0.5));
        prop_assert!(c.alpha <= c.alpha_practical * 2.0);
        prop_assert!(c.amplitude > 0.0 && c.k1 > 0.0);
        prop_assert!(rel_err(c.beta, 49.0 * a0 / (200.0 * d as f64)) < 1e-15);
    }

    #[test]
    fn delta_decreases_with_ellipticity_ratio(d in 1usize..4, c0 in 1.0f64..5.0, dc in 0.1f64..3.0) {
        let lo = explicit_constants(d, 8.0, 8.0, 1.0, c0).unwrap();
        let hi = explicit_constants(d, 8.0, 8.0, 1.0, c0 + dc).unwrap();
        prop_assert!(hi.delta < lo.delta);
        prop_assert!(hi.alpha <= lo.alpha);
    }
}
