//! Transported source datasets used as replay material during transfer.

use crate::pde::grid::{Dataset, GridFunction, SamplePair};
use crate::pott::map::TransportMap;

/// A source split pushed through a trained transport map. Rows keep their
/// source order so a transported pair can be traced back to its origin.
#[derive(Clone, Debug)]
pub struct PushforwardDataset {
    pub data: Dataset,
    /// Position i holds the index of the source pair row i came from.
    pub source_index: Vec<usize>,
}

pub fn pushforward(map: &TransportMap, src: &Dataset) -> PushforwardDataset {
    assert!(!src.is_empty(), "cannot transport an empty split");
    let kd = src.k_domain();
    let ud = src.u_domain();
    assert_eq!(map.n_k(), kd.numel(), "map width does not match the input grid");
    assert_eq!(map.n_u(), ud.numel(), "map width does not match the solution grid");

    let tk = map.push_k(&src.stack_k());
    let tu = map.push_u(&src.stack_u());
    let (nk, nu) = (kd.numel(), ud.numel());
    let pairs = (0..src.len())
        .map(|i| SamplePair {
            k: GridFunction::from_vec(kd, tk.data()[i * nk..(i + 1) * nk].to_vec()),
            u: GridFunction::from_vec(ud, tu.data()[i * nu..(i + 1) * nu].to_vec()),
        })
        .collect();
    PushforwardDataset {
        data: Dataset {
            pairs,
            family: src.family.clone(),
            domain_id: src.domain_id.clone(),
            split: "pushforward".into(),
            seed: src.seed,
        },
        source_index: (0..src.len()).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::grid::Domain;
    use crate::pott::dual::{dual_train, PottConfig, RegKind};
    use crate::pott::map::MapConfig;
    use crate::rng::stream;
    use rand_distr::{Distribution, Normal};

    fn cloud(xs: &[f64], split: &str) -> Dataset {
        let d = Domain::Interval { n: 1 };
        Dataset {
            pairs: xs
                .iter()
                .map(|&x| SamplePair {
                    k: GridFunction::from_vec(d, vec![x]),
                    u: GridFunction::from_vec(d, vec![x]),
                })
                .collect(),
            family: "toy".into(),
            domain_id: "cloud".into(),
            split: split.into(),
            seed: 0,
        }
    }

    fn gaussian_cloud(mu: f64, sigma: f64, n: usize, tag: &str) -> Vec<f64> {
        let normal = Normal::new(mu, sigma).unwrap();
        let mut rng = stream(4321, tag, 0);
        (0..n).map(|_| normal.sample(&mut rng)).collect()
    }

    #[test]
    fn fresh_map_transports_to_an_exact_copy() {
        let src = cloud(&[0.5, -1.25, 3.0], "train");
        let map = TransportMap::init(1, 1, MapConfig { hidden: 8, depth: 1 }, &mut stream(0, "m", 0));
        let pf = pushforward(&map, &src);
        assert_eq!(pf.data.len(), src.len());
        assert_eq!(pf.data.split, "pushforward");
        assert_eq!(pf.data.family, src.family);
        assert_eq!(pf.data.domain_id, src.domain_id);
        assert_eq!(pf.source_index, vec![0, 1, 2]);
        for (a, b) in pf.data.pairs.iter().zip(&src.pairs) {
            assert_eq!(a.k.values, b.k.values);
            assert_eq!(a.u.values, b.u.values);
        }
    }

    #[test]
    #[should_panic(expected = "does not match the input grid")]
    fn mismatched_map_width_is_refused() {
        let src = cloud(&[0.0, 1.0], "train");
        let map = TransportMap::init(3, 1, MapConfig { hidden: 8, depth: 1 }, &mut stream(0, "m", 0));
        pushforward(&map, &src);
    }

    #[test]
    fn transported_moments_track_the_target() {
        let src = cloud(&gaussian_cloud(0.0, 1.0, 200, "pf-src"), "train");
        let tgt_xs = gaussian_cloud(1.5, 1.0, 2000, "pf-tgt");
        let tgt = cloud(&tgt_xs, "train");
        let cfg = PottConfig {
            lambda: 0.0,
            reg: RegKind::None,
            n11: 400,
            n12: 10,
            batch: 32,
            map: MapConfig { hidden: 16, depth: 1 },
            potential_hidden: 32,
            potential_depth: 1,
            ..PottConfig::default()
        };
        let (map, _, _) = dual_train(&src, &tgt, None, &cfg, 17).unwrap();
        let pf = pushforward(&map, &src);

        let mean_t = tgt_xs.iter().sum::<f64>() / tgt_xs.len() as f64;
        let var_t = tgt_xs.iter().map(|x| (x - mean_t).powi(2)).sum::<f64>() / tgt_xs.len() as f64;
        let se = (var_t / tgt_xs.len() as f64).sqrt();
        let mean_k = pf.data.stack_k().data().iter().sum::<f64>() / pf.data.len() as f64;
        let mean_u = pf.data.stack_u().data().iter().sum::<f64>() / pf.data.len() as f64;
        assert!(
            (mean_k - mean_t).abs() < 3.0 * se,
            "transported input mean {} vs target mean {} (se {})",
            mean_k,
            mean_t,
            se
        );
        assert!(
            (mean_u - mean_t).abs() < 3.0 * se,
            "transported solution mean {} vs target mean {} (se {})",
            mean_u,
            mean_t,
            se
        );
    }
}
