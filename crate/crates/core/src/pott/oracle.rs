//! Closed-form and exhaustive transport oracles, used only to validate the
//! learned solver.

use itertools::Itertools;

use crate::diff::Tensor;

/// Exact optimal coupling between two equal-size uniform point clouds, by
/// enumerating assignments. For uniform marginals of equal size the optimum
/// of the coupling polytope is attained at a permutation, so exhaustive
/// assignment search is exact.
///
/// `cost` is the [n, n] pairwise cost matrix; returns the optimal coupling
/// (entries 0 or 1/n) and its transport cost.
pub fn kantorovich_lp(cost: &Tensor) -> (Tensor, f64) {
    let s = cost.shape();
    assert_eq!(s.len(), 2, "cost must be a matrix");
    assert_eq!(s[0], s[1], "equal-size marginals only, got {:?}", s);
    let n = s[0];
    assert!(
        (1..=8).contains(&n),
        "assignment enumeration is exhaustive only up to 8 points, got {}",
        n
    );
    let mut best_cost = f64::INFINITY;
    let mut best_perm: Vec<usize> = (0..n).collect();
    for perm in (0..n).permutations(n) {
        let c = perm
            .iter()
            .enumerate()
            .map(|(i, &j)| cost.data()[i * n + j])
            .sum::<f64>()
            / n as f64;
        if c < best_cost {
            best_cost = c;
            best_perm = perm;
        }
    }
    let mut coupling = Tensor::zeros(&[n, n]);
    for (i, &j) in best_perm.iter().enumerate() {
        coupling.data_mut()[i * n + j] = 1.0 / n as f64;
    }
    (coupling, best_cost)
}

/// Affine optimal map between 1-d Gaussians, returned as (a, b) with
/// T(x) = a x + b, a = sigma_t / sigma_s, b = mu_t - a mu_s. Sigmas are
/// standard deviations.
pub fn gaussian_monge_oracle(mu_s: f64, sigma_s: f64, mu_t: f64, sigma_t: f64) -> (f64, f64) {
    assert!(
        sigma_s > 0.0 && sigma_t > 0.0,
        "standard deviations must be positive, got {} and {}",
        sigma_s,
        sigma_t
    );
    let a = sigma_t / sigma_s;
    (a, mu_t - a * mu_s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pairwise_sq(a: &[f64], b: &[f64]) -> Tensor {
        let n = a.len();
        Tensor::from_fn(&[n, n], |i| {
            let d = a[i / n] - b[i % n];
            d * d
        })
    }

    #[test]
    fn identical_clouds_couple_for_free() {
        let pts = [0.1, 0.5, -0.3, 2.0];
        let (coupling, cost) = kantorovich_lp(&pairwise_sq(&pts, &pts));
        assert_eq!(cost, 0.0);
        for i in 0..4 {
            assert_eq!(coupling.data()[i * 4 + i], 0.25, "diagonal coupling expected");
        }
    }

    #[test]
    fn two_point_crossed_costs_pick_the_cheap_matching() {
        let cost = Tensor::new(vec![2, 2], vec![5.0, 1.0, 1.0, 5.0]);
        let (coupling, c) = kantorovich_lp(&cost);
        assert_eq!(c, 1.0);
        assert_eq!(coupling.data(), &[0.0, 0.5, 0.5, 0.0]);
    }

    #[test]
    #[should_panic(expected = "up to 8 points")]
    fn oversized_instances_are_refused() {
        kantorovich_lp(&Tensor::zeros(&[9, 9]));
    }

    proptest! {
        #[test]
        fn positive_scaling_preserves_the_optimal_coupling(
            entries in prop::collection::vec(0.0f64..10.0, 9),
            s in 0.1f64..10.0,
        ) {
            let cost = Tensor::new(vec![3, 3], entries.clone());
            let scaled = cost.map(|v| v * s);
            let (p1, c1) = kantorovich_lp(&cost);
            let (p2, c2) = kantorovich_lp(&scaled);
            prop_assert_eq!(p1, p2);
            prop_assert!((c2 - s * c1).abs() <= 1e-12 * (1.0 + c2.abs()));
        }
    }

    #[test]
    fn unit_gaussians_map_by_identity() {
        assert_eq!(gaussian_monge_oracle(0.0, 1.0, 0.0, 1.0), (1.0, 0.0));
    }

    #[test]
    fn the_benchmark_pair_halves_and_shifts() {
        let (a, b) = gaussian_monge_oracle(0.0, 1.0, 2.0, 0.5);
        assert_eq!(a, 0.5);
        assert_eq!(b, 2.0);
    }

    #[test]
    fn quantiles_land_on_target_quantiles() {
        // a monotone optimal map satisfies T(mu_s + sigma_s z) = mu_t + sigma_t z
        let (mu_s, sig_s, mu_t, sig_t) = (0.3, 1.7, -2.0, 0.4);
        let (a, b) = gaussian_monge_oracle(mu_s, sig_s, mu_t, sig_t);
        let mut z = -3.0;
        while z <= 3.0 {
            let x = mu_s + sig_s * z;
            let want = mu_t + sig_t * z;
            assert!((a * x + b - want).abs() < 1e-12);
            z += 0.25;
        }
    }

    #[test]
    #[should_panic(expected = "must be positive")]
    fn zero_spread_is_rejected() {
        gaussian_monge_oracle(0.0, 0.0, 1.0, 1.0);
    }
}
