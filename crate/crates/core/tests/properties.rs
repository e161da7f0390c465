use std::sync::Arc;

use fracdivcurl::gauge::{gauge_energy, random_gauge, GaugeField, MatrixOffDiagField};
use fracdivcurl::manifold::{random_unit, SphereMap};
use fracdivcurl::solver::{energy, sphere_omega};
use fracdivcurl::{build_domain, Domain, Topology, VectorMap};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn torus(dim: usize, m: usize) -> Arc<Domain> {
    build_domain(dim, Topology::PeriodicTorus { side: 1.0 }, m).unwrap()
}

fn sphere_map(d: &Arc<Domain>, n: usize, rng: &mut ChaCha8Rng) -> SphereMap {
    let mut v = VectorMap::zeros(d.clone(), n);
    for i in 0..d.len() {
        v.at_mut(i).copy_from_slice(&random_unit(n, rng));
    }
    SphereMap::new(v).unwrap()
}

// Rotation about the first two axes.
fn plane_rotation(n: usize, t: f64) -> Vec<f64> {
    let mut r = vec![0.0; n * n];
    for i in 0..n {
        r[i * n + i] = 1.0;
    }
    r[0] = t.cos();
    r[1] = -t.sin();
    r[n] = t.sin();
    r[n + 1] = t.cos();
    r
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn energy_is_rotation_invariant(seed in any::<u64>(), n in 2usize..5, s in 0.1f64..0.9, p in 2.0f64..5.0, t in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = sphere_map(&torus(1, 12), n, &mut rng);
        let e0 = energy(u.as_map(), s, p).unwrap();
        let e1 = energy(u.rotated(&plane_rotation(n, t)).unwrap().as_map(), s, p).unwrap();
        prop_assert!((e0 - e1).abs() <= 1e-11 * e0.max(1.0));
    }

    #[test]
    fn sphere_omega_is_antisymmetric(seed in any::<u64>(), n in 2usize..5, s in 0.1f64..0.9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = sphere_map(&torus(2, 4), n, &mut rng);
        let m = u.domain().len();
        for om in sphere_omega(&u, s).unwrap() {
            for i in 0..m {
                for j in 0..m {
                    if i != j {
                        prop_assert!((om.field.scalar(i, j) + om.field.scalar(j, i)).abs() <= 1e-14);
                    }
                }
            }
        }
    }

    #[test]
    fn gauge_energy_is_nonnegative_and_identity_matches_norm(seed in any::<u64>(), n in 2usize..5, s in 0.1f64..0.9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = torus(1, 10);
        let om = MatrixOffDiagField::random_antisymmetric(d.clone(), n, 1.0, &mut rng);
        let fi = gauge_energy(&GaugeField::identity(d.clone(), n), &om, s).unwrap();
        prop_assert!((fi - om.norm_sq()).abs() <= 1e-12 * fi.max(1.0));
        let p = random_gauge(d, n, 1.0, &mut rng).unwrap();
        prop_assert!(gauge_energy(&p, &om, s).unwrap() >= 0.0);
    }
}
