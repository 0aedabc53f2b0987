mod common;

use common::{dtcwt_directional_energy, haar_directional_energy, shift_sensitivity, step_edge};

#[test]
fn dual_tree_is_less_shift_sensitive_than_haar() {
    for at in [32, 40, 47] {
        let (a, b) = (step_edge(64, at), step_edge(64, at + 1));
        let (ca, cb) = (
            dtcwt_directional_energy(&a, 3),
            dtcwt_directional_energy(&b, 3),
        );
        let (ha, hb) = (
            haar_directional_energy(&a, 3),
            haar_directional_energy(&b, 3),
        );
        for l in 0..3 {
            let (c, h) = (
                shift_sensitivity(&ca[l], &cb[l]),
                shift_sensitivity(&ha[l], &hb[l]),
            );
            assert!(c <= 0.05, "edge {at} level {l}: {c}");
            assert!(c < h, "edge {at} level {l}: dual tree {c} vs haar {h}");
        }
    }
}

#[test]
fn haar_baseline_is_orthonormal() {
    let x = common::random_grid((32, 32), 1);
    let e = haar_directional_energy(&x, 5);
    let detail: f64 = e.iter().flatten().sum();
    let ll: f64 = x.sum() / 32.0;
    assert!((detail + ll * ll - common::norm(&x).powi(2)).abs() < 1e-9);
}
