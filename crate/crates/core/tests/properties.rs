use lprobe::landscape::{
    eig_index, filter_normalize, grid_point, normalized_tv, roughness_index, sample_directions, Direction,
};
use lprobe::linalg::Matrix;
use lprobe::network::init_xavier;
use lprobe::optimize::{AdamConfig, AdamState};
use lprobe::pde::{dgm_loss, drm_loss, monte_carlo, simpson_1d};
use lprobe::{FilterLayout, NetworkSpec, Normalization, ProbeConfig, Problem, ProblemKind};
use proptest::prelude::*;

fn spd(n: usize, entries: &[f64]) -> Matrix {
    let mut a = Matrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = entries[(i * n + j) % entries.len()];
        }
    }
    let mut h = a.matmul(&a.transpose());
    for i in 0..n {
        h[(i, i)] += 0.1;
    }
    h
}

fn quad_form(h: &Matrix, x: &[f64]) -> f64 {
    0.5 * x.iter().zip(h.mul_vec(x)).map(|(a, b)| a * b).sum::<f64>()
}

fn toy_closed_forms(t0: f64, t1: f64) -> (f64, f64) {
    let g = 4.0 * ((t1 - 2.0).powi(2) + (t1 - 2.0) * (t0 - 1.0) + (t0 - 1.0).powi(2));
    let r = (4.5 * t1 * t1 + 12.0 * t1) / 5.0
        + 0.5 * (3.0 * t1 * (t0 - t1) + 6.0 * t0 - 7.0 * t1)
        + (2.0 * t0 * t0 + 2.0 * t1 * t1 - 7.0 * t0 * t1 + 2.0 * t1 - 14.0 * t0) / 3.0
        - 0.5 * t0 * t0
        + t0 * t1
        + t0;
    (g, r)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn quadratic_index_vanishes(
        n in 2usize..50,
        entries in prop::collection::vec(-1.0f64..1.0, 1..64),
        l in prop::sample::select(vec![0.1, 1.0, 10.0]),
        m in prop::sample::select(vec![10usize, 100]),
        seed in any::<u64>(),
    ) {
        let h = spd(n, &entries);
        let mut cfg = ProbeConfig::new(10, l, m, seed);
        cfg.normalization = Normalization::None;
        let r = roughness_index(&|x: &[f64]| Ok(quad_form(&h, x)), &vec![0.0; n], &FilterLayout::single(n), &cfg).unwrap();
        prop_assert!(r.index < 1e-12, "index {}", r.index);
        prop_assert_eq!(r.excluded, 0);
    }

    #[test]
    fn even_convex_projection_has_t_one_over_l(p in 1.1f64..4.0, l in 0.01f64..10.0, m in 2usize..200) {
        let f: Vec<f64> = (0..=m).map(|j| grid_point(l, m, j).abs().powf(p)).collect();
        let t = normalized_tv(&f, l).unwrap();
        prop_assert!((t * l - 1.0).abs() < 1e-12);
    }

    #[test]
    fn monotone_projection_has_t_one_over_two_l(a in 0.1f64..5.0, l in 0.01f64..10.0, m in 2usize..200) {
        let f: Vec<f64> = (0..=m).map(|j| (a * grid_point(l, m, j)).atan()).collect();
        let t = normalized_tv(&f, l).unwrap();
        prop_assert!((2.0 * t * l - 1.0).abs() < 1e-12);
    }

    #[test]
    fn index_invariant_under_scale_and_offset(alpha in 0.01f64..100.0, c in -100.0f64..100.0, seed in any::<u64>()) {
        let base = |x: &[f64]| (2.0 * x[0]).sin() * x[1] + (x[2] - x[0]).cos() + x[1].powi(3);
        let theta = [0.4, -0.3, 0.9];
        let layout = FilterLayout::single(3);
        let cfg = ProbeConfig::new(8, 1.5, 20, seed);
        let r0 = roughness_index(&|x: &[f64]| Ok(base(x)), &theta, &layout, &cfg).unwrap();
        let r1 = roughness_index(&|x: &[f64]| Ok(alpha * base(x) + c), &theta, &layout, &cfg).unwrap();
        for (a, b) in r0.ts.iter().zip(&r1.ts) {
            let (a, b) = (a.unwrap(), b.unwrap());
            prop_assert!((a - b).abs() <= 1e-8 * a);
        }
        prop_assert!((r0.index - r1.index).abs() <= 1e-7 * r0.index.max(1e-12));
    }

    #[test]
    fn toy_losses_match_closed_forms(t0 in -5.0f64..5.0, t1 in -5.0f64..5.0) {
        let p = Problem::new(ProblemKind::Box1DCubic).unwrap();
        let spec = NetworkSpec::linear_toy();
        let q = simpson_1d(2001).unwrap();
        let (g, r) = toy_closed_forms(t0, t1);
        prop_assert!((dgm_loss(&p, &spec, &[t0, t1], &q).unwrap() - g).abs() < 1e-10);
        prop_assert!((drm_loss(&p, &spec, &[t0, t1], &q).unwrap() - r).abs() < 1e-10);
    }

    #[test]
    fn dgm_loss_is_nonnegative(seed in any::<u64>(), w in 1usize..6, blocks in 0usize..3) {
        let p = Problem::new(ProblemKind::Sphere3DLowReg).unwrap();
        let spec = NetworkSpec::resnet(3, w, blocks);
        let theta = init_xavier(&spec, seed).unwrap().values;
        let q = monte_carlo(p.domain(), 16, seed).unwrap();
        prop_assert!(dgm_loss(&p, &spec, &theta, &q).unwrap() >= 0.0);
    }

    #[test]
    fn v_increases_exactly_when_eigenvalue_exceeds_one(mut lam in prop::collection::vec(1e-3f64..1e3, 2..20)) {
        lam.sort_by(|a, b| b.total_cmp(a));
        for k in 1..lam.len() {
            let vk = eig_index(&lam, k).unwrap().value;
            let vk1 = eig_index(&lam, k + 1).unwrap().value;
            prop_assert_eq!(vk1 >= vk, lam[k] >= 1.0);
        }
    }

    #[test]
    fn adam_first_step_bounded_by_learning_rate(g in prop::collection::vec(-1e6f64..1e6, 1..20)) {
        let mut s = AdamState::new(g.len(), AdamConfig::default());
        let mut theta = vec![0.0; g.len()];
        s.step(&mut theta, &g).unwrap();
        for t in theta {
            prop_assert!(t.abs() <= 1e-3 * (1.0 + 1e-9));
        }
        prop_assert!(s.v.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn filter_blocks_take_theta_norms(seed in any::<u64>(), w in 1usize..6) {
        let spec = NetworkSpec::fcnet(2, w, 1);
        let theta = init_xavier(&spec, seed).unwrap().values;
        let layout = FilterLayout::for_spec(&spec);
        let d = sample_directions(theta.len(), 1, seed ^ 1).remove(0);
        let out = filter_normalize(&d, &theta, &layout).unwrap();
        for f in layout.filters() {
            let n = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let (a, b) = (n(&out.values[f.range.clone()]), n(&theta[f.range.clone()]));
            prop_assert!((a - b).abs() <= 1e-12 * b.max(1e-300));
        }
        let same = Direction { values: theta.clone(), normalized: false };
        let fixed = filter_normalize(&same, &theta, &layout).unwrap();
        for (a, b) in fixed.values.iter().zip(&theta) {
            prop_assert!((a - b).abs() <= 1e-15 * b.abs().max(1.0));
        }
    }
}
