mod common;

use num_complex::Complex64;
use proptest::prelude::*;
use rand::Rng;

use nnsym::complexan::{cluster_points, density_along, poles_in_window, DensityTarget, LineSpec, PointCloud};
use nnsym::json::{from_json_str, to_json_string};
use nnsym::rewrite::{
    anchor_input, apply_modification, find_reduction, invert_modification, networks_close, reduce_to_regular,
    regularity_report, sign_isomorphic,
};
use nnsym::sampling::{random_points, rng};
use nnsym::symmetry::{discover_symmetry, tanh_symmetry_catalog, verify_symmetry};
use nnsym::{Network, NodeId, NodeSet, Nonlinearity, Term};

use common::*;

fn blob(r: &mut impl Rng, c: Complex64, n: usize) -> Vec<Complex64> {
    (0..n).map(|_| c + Complex64::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0))).collect()
}

fn cases(n: u32) -> ProptestConfig {
    ProptestConfig { cases: n, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(cases(48))]

    #[test]
    fn modification_preserves_map_and_layering(seed in any::<u64>(), k in 0usize..PLAN_KINDS.len()) {
        let mut r = rng(seed);
        let (net, rho, plan) = random_plan_case(&mut r, PLAN_KINDS[k]);
        let m = apply_modification(&net, &rho, &plan).unwrap();
        prop_assert!(max_gap(&net, &m, &rho, seed, 50, -3.0, 3.0) < 1e-9);
        prop_assert!(m.validate().is_empty());
        prop_assert!(m.is_layered().unwrap());
    }

    #[test]
    fn inverse_plan_restores_the_host(seed in any::<u64>(), k in 0usize..PLAN_KINDS.len()) {
        let mut r = rng(seed);
        let (net, rho, plan) = random_plan_case(&mut r, PLAN_KINDS[k]);
        let m = apply_modification(&net, &rho, &plan).unwrap();
        let inv = invert_modification(&net, &rho, &plan, &m).unwrap();
        let back = apply_modification(&m, &rho, &inv).unwrap();
        prop_assert!(networks_close(&back, &net, 1e-12));
    }

    #[test]
    fn sign_isomorphic_nets_agree(seed in any::<u64>(), hidden in 1usize..=6) {
        let mut r = rng(seed);
        let net = random_tanh_net(&mut r, hidden);
        let copy = sign_flipped_copy(&mut r, &net);
        prop_assume!(regularity_report(&net, &Nonlinearity::Tanh).unwrap().regular);
        prop_assert!(sign_isomorphic(&net, &copy).unwrap().is_some());
        prop_assert!(max_gap(&net, &copy, &Nonlinearity::Tanh, seed, 50, -3.0, 3.0) < 1e-12);
    }

    #[test]
    fn reduction_reaches_a_regular_fixed_point(seed in any::<u64>(), hidden in 1usize..=4) {
        // Plant an odd partner next to one node so there is something to reduce.
        let mut r = rng(seed);
        let net = random_tanh_net(&mut r, hidden);
        let u = net.hidden().next().unwrap().clone();
        let mut b = Network::builder(1).constants(net.constants().to_vec());
        for v in net.nodes() {
            b = match net.bias(v) {
                Some(t) => b.node(v.clone(), t),
                None => b.input(v.clone()),
            };
        }
        for (f, t, w) in net.edges() {
            b = b.edge(f.clone(), t.clone(), w);
        }
        b = b.node("odd", -net.bias(&u).unwrap());
        for (p, w) in net.parents(&u) {
            b = b.edge(p.clone(), "odd", -w);
        }
        for (v, l) in net.outputs() {
            b = b.output(v.clone(), l.clone());
        }
        let planted = b.output("odd", vec![weight(&mut r)]).build();
        let rho = Nonlinearity::Tanh;
        prop_assert!(find_reduction(&planted, &rho).is_some());
        let (m, trail) = reduce_to_regular(&planted, &rho).unwrap();
        prop_assert!(!trail.is_empty());
        prop_assert!(find_reduction(&m, &rho).is_none());
        prop_assert!(regularity_report(&m, &rho).unwrap().non_degenerate);
        prop_assert!(max_gap(&planted, &m, &rho, seed, 50, -3.0, 3.0) < 1e-9);
        let (again, more) = reduce_to_regular(&m, &rho).unwrap();
        prop_assert!(more.is_empty());
        prop_assert!(networks_close(&again, &m, 0.0));
    }

    #[test]
    fn anchoring_keeps_strong_non_degeneracy(seed in any::<u64>(), a in -3.0f64..3.0) {
        let mut r = rng(seed);
        let net = anchoring_case(&mut r);
        let m = anchor_input(&net, &Nonlinearity::Tanh, &NodeId::new("v3"), a).unwrap();
        prop_assert!(m.warnings.iter().all(|w| !w.contains("strongly")));
        prop_assert!(regularity_report(&m.network, &Nonlinearity::Tanh).unwrap().strongly_non_degenerate);
    }

    #[test]
    fn json_round_trip_is_exact(seed in any::<u64>(), hidden in 1usize..=8) {
        let mut r = rng(seed);
        let net = random_tanh_net(&mut r, hidden);
        let back = from_json_str(&to_json_string(&net)).unwrap();
        prop_assert_eq!(back, net);
    }

    #[test]
    fn subnetworks_are_valid(seed in any::<u64>(), hidden in 2usize..=6) {
        let mut r = rng(seed);
        let net = random_tanh_net(&mut r, hidden);
        let all: Vec<NodeId> = net.hidden().cloned().collect();
        let u = all[r.gen_range(0..all.len())].clone();
        let set: NodeSet = [u.clone()].into();
        let anc = net.ancestors(&set).unwrap();
        let inputs: NodeSet = anc.intersection(net.inputs()).cloned().collect();
        let sub = net.subnetwork(&set, &inputs, [(u.clone(), vec![1.0])].into(), vec![0.0]).unwrap();
        prop_assert!(sub.validate().is_empty());
        prop_assert_eq!(sub.nodes(), &anc);
    }

    #[test]
    fn complex_evaluation_matches_on_the_real_line(seed in any::<u64>(), hidden in 1usize..=6) {
        let mut r = rng(seed);
        let net = random_tanh_net(&mut r, hidden);
        let ev = net.evaluator().unwrap();
        let rho = Nonlinearity::Tanh;
        for t in random_points(seed, 20, net.inputs().len(), -4.0, 4.0) {
            let z: Vec<Complex64> = t.iter().map(|&x| Complex64::new(x, 0.0)).collect();
            let y = ev.eval(&rho, &t).unwrap();
            let w = ev.eval_complex(&rho, &z).unwrap().unwrap();
            for (a, b) in y.iter().zip(&w) {
                prop_assert!((a - b.re).abs() < 1e-12 && b.im.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zab_agrees_with_its_real_restriction(seed in any::<u64>(), t in -5.0f64..5.0) {
        let mut r = rng(seed);
        let z = random_zab(&mut r);
        let rho = Nonlinearity::Zab(z.clone());
        let c = rho.eval_complex(Complex64::new(t, 0.0)).unwrap().unwrap();
        prop_assert!((c - z.eval_on_real(t)).norm() < 1e-10 * (1.0 + c.norm()));
    }
}

proptest! {
    #![proptest_config(cases(64))]

    #[test]
    fn trivial_networks_are_fixed_points(inputs in 1usize..=4, dim in 1usize..=3) {
        let names: Vec<String> = (0..inputs).map(|i| format!("v{i}")).collect();
        let t = Network::trivial(names, dim);
        prop_assert!(t.is_layered().unwrap());
        prop_assert!(regularity_report(&t, &Nonlinearity::Tanh).unwrap().regular);
        let (m, trail) = reduce_to_regular(&t, &Nonlinearity::Tanh).unwrap();
        prop_assert!(trail.is_empty());
        prop_assert!(networks_close(&m, &t, 0.0));
    }

    #[test]
    fn tanh_catalog_holds_at_every_scale(beta in 0.2f64..3.0, gamma in -2.0f64..2.0, alpha in 0.2f64..3.0, c in 0.1f64..10.0) {
        for s in tanh_symmetry_catalog(beta, gamma, alpha) {
            let check = verify_symmetry(&Nonlinearity::Tanh, &s, 1e-12);
            prop_assert!(check.holds && check.minimal);
            let scaled = verify_symmetry(&Nonlinearity::Tanh, &s.scaled(c), 1e-11);
            prop_assert!(scaled.holds && scaled.minimal);
        }
    }

    #[test]
    fn discovery_honors_the_required_index(beta in 0.3f64..2.0, gamma in -1.0f64..1.0, extra in 0.3f64..2.0, req in 0usize..3) {
        let cands = [(beta, gamma), (-beta, -gamma), (extra, 1.5)];
        let found = discover_symmetry(&Nonlinearity::Tanh, &cands, Some(req)).unwrap();
        if let Some(s) = found {
            let t = cands[req];
            prop_assert!(s.terms.iter().any(|x| x.beta == t.0 && x.gamma == t.1 && x.alpha != 0.0));
            prop_assert!(verify_symmetry(&Nonlinearity::Tanh, &s, 1e-9).holds);
        } else {
            prop_assert_eq!(req, 2);
        }
    }

    #[test]
    fn density_grows_with_eps_and_is_subadditive(seed in any::<u64>(), e1 in 0.01f64..0.5, e2 in 0.01f64..0.5) {
        let mut r = rng(seed);
        let pts: Vec<Complex64> = (0..300)
            .map(|_| Complex64::new(r.gen_range(-20.0..20.0), r.gen_range(-2.0..2.0)))
            .collect();
        let cloud = PointCloud::new(pts, 30.0);
        let line = DensityTarget::Line(LineSpec::real_axis());
        let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
        let d_lo = density_along(&line, &cloud, lo, 20.0).unwrap();
        let d_hi = density_along(&line, &cloud, hi, 20.0).unwrap();
        prop_assert!(d_lo <= d_hi);
        let shifted = DensityTarget::Line(LineSpec::new(Complex64::new(0.0, 1.0), Complex64::new(1.0, 0.0)).unwrap());
        let a = density_along(&line, &cloud, lo, 20.0).unwrap();
        let b = density_along(&shifted, &cloud, lo, 20.0).unwrap();
        let union: Vec<Complex64> = cloud
            .points
            .iter()
            .copied()
            .filter(|p| p.im.abs() <= lo || (p.im - 1.0).abs() <= lo)
            .collect();
        let u = union.iter().filter(|p| p.norm() <= 20.0).count() as f64 / 40.0;
        prop_assert!(u <= a + b + 1e-12);
    }

    #[test]
    fn clusters_of_separated_clouds_take_the_union(seed in any::<u64>(), eps in 0.05f64..0.3) {
        let mut r = rng(seed);
        let a = blob(&mut r, Complex64::new(-10.0, 0.0), 40);
        let b = blob(&mut r, Complex64::new(10.0, 0.0), 40);
        let mut joint = a.clone();
        joint.extend(&b);
        let mut want = cluster_points(&a, eps, 3);
        want.extend(cluster_points(&b, eps, 3));
        want.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
        prop_assert_eq!(cluster_points(&joint, eps, 3), want);
    }

    #[test]
    fn smaller_windows_prune_consistently(seed in any::<u64>(), n in 2.0f64..12.0) {
        let mut r = rng(seed);
        let sigma = random_zab(&mut r);
        let terms: Vec<Term> = (0..r.gen_range(1..=3))
            .map(|_| Term::new(r.gen_range(-2.0..2.0), r.gen_range(0.5..2.0), r.gen_range(-1.0..1.0)))
            .collect();
        let big = poles_in_window(&sigma, &terms, 15.0).unwrap();
        let small = poles_in_window(&sigma, &terms, n).unwrap();
        let mut expect: Vec<Complex64> = big.points.iter().copied().filter(|p| p.norm() <= n).collect();
        let mut got = small.points.clone();
        let key = |x: &Complex64, y: &Complex64| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im));
        expect.sort_by(key);
        got.sort_by(key);
        prop_assert_eq!(got.len(), expect.len());
        for (p, q) in got.iter().zip(&expect) {
            prop_assert!((p - q).norm() < 1e-9);
        }
    }
}
