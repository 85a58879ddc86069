use std::collections::BTreeMap;

use magic_mps::config::{Defaults, ExperimentConfig, ExperimentKind};
use magic_mps::gates::{cnot, hadamard, kron, phase_s};
use magic_mps::haar::{sample_haar_u4, trajectory_gates};
use magic_mps::harness::{
    aggregate, compute_deviations, run_experiment1, run_experiment2, trajectory_final, trajectory_key, RunSpec,
    SweepAxis,
};
use magic_mps::magic::PauliSampler;
use magic_mps::oracle::{evolve_exact, exact_entropy, exact_sre, exact_xi_distribution, Statevector};
use magic_mps::{m2_haar, BondCap, BrickworkSchedule, MpsState, SeedTree, SreRank};
use nalgebra::Matrix2;
use num_complex::Complex64 as C64;
use proptest::prelude::*;

fn mps_of(n: usize, depth: usize, seed: u64, cap: BondCap) -> (MpsState, Statevector) {
    let schedule = BrickworkSchedule::new(n, depth).unwrap();
    let gates = trajectory_gates(&schedule, seed, 0);
    let mut state = MpsState::zeros(n).unwrap().with_bond_cap(cap);
    for (slot, g) in schedule.slots().zip(&gates) {
        state.apply_two_qubit_gate(g, slot.left_site).unwrap();
    }
    (state, evolve_exact(n, &schedule, &gates).unwrap())
}

#[test]
fn haar_u4_moments() {
    let draws = 10_000;
    let (mut m2, mut m4) = (0.0, 0.0);
    for k in 0..draws {
        let u = sample_haar_u4(&mut SeedTree::gate(99, 0, k).derive_stream());
        let a = u[(1, 2)].norm_sqr();
        m2 += a;
        m4 += a * a;
    }
    let (m2, m4) = (m2 / draws as f64, m4 / draws as f64);
    // E|U_ij|^2 = 1/d, E|U_ij|^4 = 2/(d(d+1)) for d = 4
    assert!((m2 - 0.25).abs() < 0.01, "{m2}");
    assert!((m4 - 0.1).abs() < 0.006, "{m4}");
}

#[test]
fn product_cap_matches_single_qubit_haar_average() {
    // E over the Bloch sphere of -ln((1 + x^4 + y^4 + z^4) / 2)
    let grid = 400;
    let mut acc = 0.0;
    let mut weight = 0.0;
    for i in 0..grid {
        let theta = std::f64::consts::PI * (i as f64 + 0.5) / grid as f64;
        for j in 0..2 * grid {
            let phi = std::f64::consts::PI * (j as f64 + 0.5) / grid as f64;
            let (x, y, z) = (theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos());
            let w = theta.sin();
            acc += w * -((1.0 + x.powi(4) + y.powi(4) + z.powi(4)) / 2.0).ln();
            weight += w;
        }
    }
    let per_qubit = acc / weight;

    let n = 6;
    let spec = RunSpec { n_sites: n, cap: BondCap::Finite(1), depth: 10, n_samples: 4000, master_seed: 4, svd_tol: 1e-8 };
    let ms: Vec<_> = (0..150).map(|k| trajectory_final(&spec, k).unwrap()).collect();
    let p = aggregate(n, BondCap::Finite(1), None, &ms);
    assert_eq!(p.s_bar, 0.0);
    let expected = n as f64 * per_qubit;
    assert!((p.m2_bar - expected).abs() <= 3.0 * p.sem2 + 0.01, "{} vs {expected}", p.m2_bar);

    let devs = compute_deviations(&[p], SweepAxis::Chi).unwrap();
    assert!((devs[0].delta_m2 - (m2_haar(n) - p.m2_bar)).abs() < 1e-12);
}

#[test]
fn reverse_order_trajectories_match_bit_for_bit() {
    let mut cfg = ExperimentConfig::new(ExperimentKind::One, Defaults::Desk);
    cfg.n_list = vec![8];
    cfg.chi_list = vec![16];
    cfg.n_trajectories = 20;
    cfg.n_samples = Some(200);
    cfg.master_seed = 8;
    let forward = run_experiment1(&cfg, 1).unwrap();

    let spec = RunSpec { n_sites: 8, cap: BondCap::Finite(16), depth: 40, n_samples: 200, master_seed: 8, svd_tol: 1e-8 };
    let mut back: Vec<_> = (0..20).rev().map(|k| (k, trajectory_final(&spec, k).unwrap())).collect();
    back.sort_by_key(|(k, _)| *k);
    let ms: Vec<_> = back.into_iter().map(|(_, m)| m).collect();
    assert_eq!(forward[0], aggregate(8, BondCap::Finite(16), None, &ms));
}

#[test]
fn time_series_invariants() {
    let mut cfg = ExperimentConfig::new(ExperimentKind::Two, Defaults::Desk);
    cfg.n_list = vec![8];
    cfg.chi_sre_map.insert(8, BondCap::Finite(4));
    cfg.depth = 12;
    cfg.n_trajectories = 12;
    cfg.n_samples = Some(400);
    let pts = run_experiment2(&cfg, 1).unwrap();
    assert_eq!(pts.len(), 13);
    assert_eq!((pts[0].m1_bar, pts[0].m2_bar, pts[0].s_bar), (0.0, 0.0, 0.0));
    for p in &pts {
        assert!(p.s_bar <= 2.0 + 1e-12);
        assert!(p.sem1 >= 0.0 && p.sem2 >= 0.0 && p.sem_s >= 0.0);
    }
    // nondecreasing up to noise
    for w in pts.windows(2) {
        let noise = 2.0 * (w[0].sem2.powi(2) + w[1].sem2.powi(2)).sqrt();
        assert!(w[1].m2_bar >= w[0].m2_bar - noise - 0.05, "t={:?}", w[1].t);
    }
    // required bond doubles per layer until the tolerance or the cap bites
    assert_eq!(pts[1].required_bond_mean, 2.0);
    assert_eq!(pts[2].required_bond_mean, 4.0);
}

#[test]
fn sampler_matches_exact_distribution_on_two_qubits() {
    let (mut state, sv) = mps_of(2, 3, 17, BondCap::Infinite);
    state.move_center(0);
    let xi = exact_xi_distribution(&sv).unwrap();
    let draws = 40_000;
    let mut rng = SeedTree::sampling(17, 0, 0).derive_stream();
    let mut sampler = PauliSampler::new(&state).unwrap();
    let mut counts: BTreeMap<_, usize> = BTreeMap::new();
    for _ in 0..draws {
        let rec = sampler.sample(&mut rng).unwrap();
        assert!((rec.xi - xi[&rec.string]).abs() < 1e-10);
        *counts.entry(rec.string).or_default() += 1;
    }
    let tv: f64 = 0.5 * xi.iter().map(|(s, p)| (*counts.get(s).unwrap_or(&0) as f64 / draws as f64 - p).abs()).sum::<f64>();
    assert!(tv < 0.015, "{tv}");
}

#[test]
fn haar_saturation_asymptote() {
    assert!((m2_haar(20) - 20.0 * 2f64.ln() + 4f64.ln()).abs() <= 1e-5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn infinite_mode_matches_statevector(n in 2usize..=7, depth in 0usize..=10, seed in any::<u64>()) {
        let (state, sv) = mps_of(n, depth, seed, BondCap::Infinite);
        let fid = sv.fidelity(&state.to_statevector().unwrap());
        prop_assert!(fid >= 1.0 - 1e-8);
        let profile = state.entanglement_profile();
        for (cut, s) in profile.per_cut.iter().enumerate() {
            prop_assert!((exact_entropy(&sv, cut + 1).unwrap() - s).abs() < 1e-8);
        }
        state.check_invariants(1e-9).unwrap();
    }

    #[test]
    fn capped_bonds_and_entropy(n in 4usize..=9, chi in 1usize..=6, seed in any::<u64>()) {
        let (state, _) = mps_of(n, 8, seed, BondCap::Finite(chi));
        prop_assert!(state.bond_dims().iter().all(|&b| b <= chi));
        let profile = state.entanglement_profile();
        prop_assert!(profile.max_cut_value <= (chi as f64).log2() + 1e-9);
        prop_assert!((state.norm_sqr() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn clifford_gates_preserve_sre(seed in any::<u64>(), picks in proptest::collection::vec((0usize..4, 0usize..3), 1..8)) {
        let schedule = BrickworkSchedule::new(4, 3).unwrap();
        let mut sv = evolve_exact(4, &schedule, &trajectory_gates(&schedule, seed, trajectory_key(4, 0))).unwrap();
        let before = [exact_sre(&sv, SreRank::One).unwrap(), exact_sre(&sv, SreRank::Two).unwrap()];
        let id = Matrix2::<C64>::identity();
        let gates = [kron(&hadamard(), &id), kron(&phase_s(), &id), cnot(), kron(&id, &hadamard())];
        for (g, site) in picks {
            sv.apply_two_qubit_gate(&gates[g], site).unwrap();
        }
        let after = [exact_sre(&sv, SreRank::One).unwrap(), exact_sre(&sv, SreRank::Two).unwrap()];
        prop_assert!((before[0] - after[0]).abs() <= 1e-10);
        prop_assert!((before[1] - after[1]).abs() <= 1e-10);
    }

    #[test]
    fn xi_sums_to_one(n in 1usize..=5, seed in any::<u64>()) {
        let sv = if n == 1 {
            Statevector::from_amplitudes(vec![C64::new(0.6, 0.0), C64::new(0.0, 0.8)]).unwrap()
        } else {
            mps_of(n, 4, seed, BondCap::Infinite).1
        };
        let total: f64 = exact_xi_distribution(&sv).unwrap().values().sum();
        prop_assert!((total - 1.0).abs() <= 1e-9);
    }
}

#[test]
fn shipped_configs_parse() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for (file, kind) in [("exp1_desk.cfg", ExperimentKind::One), ("exp2_desk.cfg", ExperimentKind::Two)] {
        let text = std::fs::read_to_string(dir.join(file)).unwrap();
        let cfg = ExperimentConfig::parse(&text, kind, Defaults::Desk).unwrap();
        cfg.check_desk_scale().unwrap();
    }
}
