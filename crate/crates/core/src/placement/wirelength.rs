//! Exact and log-sum-exp smoothed wirelength.

use super::instance::MicroPlacementInstance;

/// Sum over nets of the x-span plus y-span of member centres.
pub fn hpwl(instance: &MicroPlacementInstance, positions: &[f64]) -> f64 {
    instance
        .nets
        .iter()
        .map(|net| span(net, positions, 0) + span(net, positions, 1))
        .sum()
}

fn span(net: &[usize], positions: &[f64], axis: usize) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &c in net {
        let v = positions[2 * c + axis];
        lo = lo.min(v);
        hi = hi.max(v);
    }
    hi - lo
}

/// `gamma * ln(sum(exp(v / gamma)))`, shifted for stability, plus the
/// softmax weights.
fn lse(values: &[f64], gamma: f64) -> (f64, Vec<f64>) {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = values.iter().map(|v| ((v - m) / gamma).exp()).collect();
    let total: f64 = exps.iter().sum();
    (m + gamma * total.ln(), exps.into_iter().map(|e| e / total).collect())
}

/// Smoothed wirelength and its gradient with respect to the interleaved
/// positions. Per net and axis: `LSE_gamma(v) + LSE_gamma(-v)`.
pub fn smooth_wl(instance: &MicroPlacementInstance, positions: &[f64], gamma: f64) -> (f64, Vec<f64>) {
    assert!(gamma > 0.0, "gamma must be positive");
    let mut grad = vec![0.0; positions.len()];
    let mut total = 0.0;
    let mut vals = Vec::new();
    let mut neg = Vec::new();
    for net in &instance.nets {
        for axis in 0..2 {
            vals.clear();
            vals.extend(net.iter().map(|&c| positions[2 * c + axis]));
            neg.clear();
            neg.extend(vals.iter().map(|v| -v));
            let (hi, wp) = lse(&vals, gamma);
            let (lo, wn) = lse(&neg, gamma);
            total += hi + lo;
            for (k, &c) in net.iter().enumerate() {
                grad[2 * c + axis] += wp[k] - wn[k];
            }
        }
    }
    (total, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::placement::instance::{Cell, MicroPlacementInstance};

    fn two_cell() -> MicroPlacementInstance {
        MicroPlacementInstance {
            name: "pair".into(),
            cells: vec![
                Cell { id: "a".into(), w: 1.0, h: 1.0 },
                Cell { id: "b".into(), w: 1.0, h: 1.0 },
            ],
            nets: vec![vec![0, 1]],
            layout_width: 8.0,
            layout_height: 8.0,
            bins_x: 2,
            bins_y: 2,
            target_density: 1.0,
            target_overflow: 0.1,
            seed: 0,
            initial_positions: vec![0.0, 0.0, 3.0, 4.0],
        }
    }

    #[test]
    fn single_net_example() {
        let inst = two_cell();
        assert_eq!(hpwl(&inst, &[0.0, 0.0, 3.0, 4.0]), 7.0);
        assert_eq!(hpwl(&inst, &[2.0, 2.0, 2.0, 2.0]), 0.0);
    }

    #[test]
    fn small_gamma_approaches_hpwl() {
        let inst = two_cell();
        let (v, _) = smooth_wl(&inst, &[0.0, 0.0, 3.0, 4.0], 1e-3);
        assert!((v - 7.0).abs() < 1e-3);
    }

    #[test]
    fn coincident_cells_bound() {
        let inst = two_cell();
        let gamma = 0.5;
        let (v, _) = smooth_wl(&inst, &[1.0, 1.0, 1.0, 1.0], gamma);
        // Two axes, each at most 2 * gamma * ln(2) above the true span of 0.
        assert!(v >= 0.0 && v <= 4.0 * gamma * 2f64.ln() + 1e-12);
    }

    fn brute_hpwl(inst: &MicroPlacementInstance, pos: &[f64]) -> f64 {
        let mut total = 0.0;
        for net in &inst.nets {
            for axis in 0..2 {
                let mut best: f64 = 0.0;
                for &a in net {
                    for &b in net {
                        best = best.max((pos[2 * a + axis] - pos[2 * b + axis]).abs());
                    }
                }
                total += best;
            }
        }
        total
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(32))]

        #[test]
        fn hpwl_equals_pairwise_max(seed in 0u64..10_000) {
            use rand::{Rng, SeedableRng};
            let inst = crate::placement::instance::reference_instance();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let pos: Vec<f64> = (0..inst.initial_positions.len()).map(|_| rng.random_range(0.0..32.0)).collect();
            let fast = hpwl(&inst, &pos);
            proptest::prop_assert!((fast - brute_hpwl(&inst, &pos)).abs() < 1e-9);
        }

        #[test]
        fn smooth_wl_bounds_hpwl(seed in 0u64..10_000, gamma in 0.05f64..4.0) {
            use rand::{Rng, SeedableRng};
            let inst = crate::placement::instance::reference_instance();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let pos: Vec<f64> = (0..inst.initial_positions.len()).map(|_| rng.random_range(0.0..32.0)).collect();
            let exact = hpwl(&inst, &pos);
            let (smooth, _) = smooth_wl(&inst, &pos, gamma);
            // Each LSE over n values overshoots the max by at most gamma ln n.
            let slack: f64 = inst.nets.iter().map(|n| 4.0 * gamma * (n.len() as f64).ln()).sum();
            proptest::prop_assert!(smooth >= exact - 1e-9);
            proptest::prop_assert!(smooth <= exact + slack + 1e-9);
        }

        #[test]
        fn smooth_wl_gradient_matches_finite_differences(seed in 0u64..10_000, gamma in 0.2f64..4.0) {
            use rand::{Rng, SeedableRng};
            let inst = crate::placement::instance::reference_instance();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let pos: Vec<f64> = (0..inst.initial_positions.len()).map(|_| rng.random_range(0.0..32.0)).collect();
            let (_, grad) = smooth_wl(&inst, &pos, gamma);
            let h = 1e-5;
            for coord in (0..pos.len()).step_by(5) {
                let mut up = pos.clone();
                up[coord] += h;
                let mut down = pos.clone();
                down[coord] -= h;
                let fd = (smooth_wl(&inst, &up, gamma).0 - smooth_wl(&inst, &down, gamma).0) / (2.0 * h);
                proptest::prop_assert!((fd - grad[coord]).abs() < 1e-5, "coord {coord}: {fd} vs {}", grad[coord]);
            }
        }
    }
}
