//! Property tests for the invariants the simulator relies on.

mod common;

use proptest::prelude::*;

use poresim::biology::{total_mass, transform_node, BioParams, BioState, Species};
use poresim::calibration::{cosine, plane_profile, plane_profile_with, ProfileBinning};
use poresim::drainage::{drain_by_threshold, drain_to_saturation};
use poresim::explicit::{diffusion_step_explicit, negativity, reallocate_negatives, DiffusionOperator};
use poresim::implicit::{assemble, diffusion_step_implicit};
use poresim::linalg::{matvec, pcg_solve, SolverConfig};
use poresim::network::{
    compute_contact_area, connected_components, read_network, write_network, AdjacencyArc, BallNode, LoadOptions,
    PoreNetwork,
};
use poresim::synthetic::{generate_synthetic_network, SyntheticKind};

use common::{dense_implicit_matrix, dense_solve, rel_linf};

/// Random graph: nodes with random radii and positions, arcs from a random
/// subset of pairs with geometry-consistent contact areas.
fn arb_network(max_nodes: usize) -> impl Strategy<Value = PoreNetwork> {
    (2..=max_nodes)
        .prop_flat_map(|n| {
            (
                prop::collection::vec((0.5f64..4.0, -20.0f64..20.0, -20.0f64..20.0, -20.0f64..20.0), n),
                prop::collection::vec((0..n, 0..n), 0..3 * n),
            )
        })
        .prop_map(|(balls, pairs)| {
            let nodes: Vec<BallNode> = balls
                .iter()
                .enumerate()
                .map(|(k, &(r, x, y, z))| BallNode::new(k, [x, y, z], r))
                .collect();
            let mut seen = std::collections::HashSet::new();
            let mut arcs = Vec::new();
            for (a, b) in pairs {
                let (i, j) = (a.min(b), a.max(b));
                if i == j || !seen.insert((i, j)) {
                    continue;
                }
                let d = nodes[i].distance_to(&nodes[j]).max(0.1);
                let s = compute_contact_area(nodes[i].radius, nodes[j].radius, 0.6).unwrap();
                arcs.push(AdjacencyArc {
                    i,
                    j,
                    distance: d,
                    contact_area: s,
                });
            }
            PoreNetwork::new(nodes, arcs).unwrap()
        })
}

fn arb_masses(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..10.0, n)
}

fn arb_state() -> impl Strategy<Value = BioState> {
    (0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0)
        .prop_map(|(a, b, c, d, e)| BioState::new(a, b, c, d, e))
}

fn net_and_dom(max_nodes: usize) -> impl Strategy<Value = (PoreNetwork, Vec<f64>)> {
    arb_network(max_nodes).prop_flat_map(|net| {
        let n = net.node_count();
        (Just(net), arb_masses(n))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn contact_area_is_symmetric(r1 in 0.01f64..100.0, r2 in 0.01f64..100.0, alpha in 0.01f64..1.0) {
        let a = compute_contact_area(r1, r2, alpha).unwrap();
        let b = compute_contact_area(r2, r1, alpha).unwrap();
        prop_assert_eq!(a, b);
        prop_assert!(a > 0.0);
        prop_assert!(a <= std::f64::consts::PI * r1.min(r2).powi(2) * (1.0 + 1e-15));
    }

    #[test]
    fn components_partition_active_nodes(
        net in arb_network(30),
        mask_bits in prop::collection::vec(any::<bool>(), 30),
    ) {
        let active: Vec<bool> = mask_bits[..net.node_count()].to_vec();
        let comps = connected_components(&net, &active);
        let mut seen = vec![0usize; net.node_count()];
        for c in &comps {
            prop_assert!(!c.is_empty());
            for &v in c {
                seen[v] += 1;
            }
        }
        for (v, &count) in seen.iter().enumerate() {
            prop_assert_eq!(count, usize::from(active[v]));
        }
        // no active arc crosses two components
        let mut label = vec![usize::MAX; net.node_count()];
        for (k, c) in comps.iter().enumerate() {
            for &v in c {
                label[v] = k;
            }
        }
        for arc in net.arcs() {
            if active[arc.i] && active[arc.j] {
                prop_assert_eq!(label[arc.i], label[arc.j]);
            }
        }
    }

    #[test]
    fn network_text_round_trip_is_exact(net in arb_network(25)) {
        // a file without arc records means "derive arcs from tangency", so an
        // arcless network of overlapping balls has no text form
        prop_assume!(net.arc_count() > 0);
        let mut buf = Vec::new();
        write_network(&net, &mut buf).unwrap();
        let back = read_network(&buf[..], LoadOptions::default()).unwrap();
        prop_assert_eq!(back.nodes(), net.nodes());
        prop_assert_eq!(back.arcs(), net.arcs());
    }

    #[test]
    fn transform_conserves_mass(x in arb_state(), volume in 0.1f64..100.0, dt_s in 0.1f64..60.0) {
        let p = BioParams::paper_2021();
        let y = transform_node(&x, volume, &p, dt_s / 86_400.0);
        let rel = (y.total() - x.total()).abs() / x.total().max(1e-300);
        prop_assert!(rel <= 1e-12, "relative drift {rel:e}");
    }

    #[test]
    fn transform_never_decreases_co2(x in arb_state(), volume in 0.1f64..100.0, dt_s in 0.1f64..60.0) {
        let y = transform_node(&x, volume, &BioParams::paper_2021(), dt_s / 86_400.0);
        prop_assert!(y.co2 >= x.co2);
    }

    #[test]
    fn explicit_diffusion_conserves_mass_for_any_step((net, dom) in net_and_dom(30), dt in 1e-6f64..1.0) {
        let water = vec![true; net.node_count()];
        let out = diffusion_step_explicit(&dom, &net, &water, 40_000.0, dt);
        let before: f64 = dom.iter().sum();
        let after: f64 = out.iter().sum();
        prop_assert!((after - before).abs() <= 1e-12 * before.max(1.0));
    }

    #[test]
    fn explicit_flux_is_antisymmetric(
        ci in 0.0f64..5.0, cj in 0.0f64..5.0, s in 0.01f64..10.0, d in 0.1f64..10.0, dt in 1e-6f64..1e-2,
    ) {
        let f = poresim::explicit::fick_flow(ci, cj, s, d, 40_000.0, dt);
        let g = poresim::explicit::fick_flow(cj, ci, s, d, 40_000.0, dt);
        prop_assert_eq!(f, -g);
        // flux runs from high to low concentration
        prop_assert!(f * (ci - cj) <= 0.0);
    }

    #[test]
    fn uniform_concentration_is_stationary(net in arb_network(25), c in 0.0f64..5.0) {
        let water = vec![true; net.node_count()];
        let dom: Vec<f64> = net.nodes().iter().map(|n| c * n.volume).collect();
        let op = DiffusionOperator::new(&net, &water);
        let delta = op.delta(&dom, 40_000.0, 1e-3);
        let scale = dom.iter().cloned().fold(1.0, f64::max);
        prop_assert!(delta.iter().all(|d| d.abs() <= 1e-12 * scale));
    }

    #[test]
    fn reallocation_preserves_species_totals(
        values in prop::collection::vec(-0.05f64..1.0, 3..40),
        seed_vol in 0.5f64..5.0,
    ) {
        let n = values.len();
        let volumes: Vec<f64> = (0..n).map(|k| seed_vol + k as f64 * 0.1).collect();
        let states: Vec<BioState> = values.iter().map(|&v| BioState::new(0.0, v, 0.0, 0.0, 0.0)).collect();
        let neg = negativity(&states);
        prop_assume!(neg.m.dom > 0.0);
        let h = neg.h.get(Species::Dom);
        // only situations the policing step would hand to reallocation
        prop_assume!(h < 0.01 * neg.m.dom);
        let fixed = reallocate_negatives(&states, &volumes, &neg).unwrap();
        prop_assert!(fixed.iter().all(|x| x.dom >= 0.0));
        let before = total_mass(&states);
        let after = total_mass(&fixed);
        prop_assert!((after - before).abs() <= 1e-12 * before.abs().max(1.0));
    }

    #[test]
    fn implicit_step_conserves_and_stays_nonnegative((net, dom) in net_and_dom(25), dt in 1e-6f64..100.0) {
        let water = vec![true; net.node_count()];
        let solver = SolverConfig::default();
        for comp in connected_components(&net, &water) {
            let sys = assemble(&net, &water, &comp, 40_000.0, dt).unwrap();
            let local: Vec<f64> = comp.iter().map(|&g| dom[g]).collect();
            let step = diffusion_step_implicit(&local, &sys, &solver).unwrap();
            prop_assert!(step.masses.iter().all(|&m| m >= 0.0));
            let before: f64 = local.iter().sum();
            let after: f64 = step.masses.iter().sum();
            prop_assert!((after - before).abs() <= 1e-12 * before.max(1.0));
            // bounded by the initial maximum concentration
            let cmax = comp.iter().map(|&g| dom[g] / net.node(g).volume).fold(0.0, f64::max);
            for (m, v) in step.masses.iter().zip(&sys.volumes) {
                prop_assert!(m / v <= cmax * (1.0 + 1e-8) + 1e-12);
            }
        }
    }

    #[test]
    fn implicit_matrix_rows_sum_to_volumes(net in arb_network(25), dt in 1e-6f64..10.0) {
        let water = vec![true; net.node_count()];
        for comp in connected_components(&net, &water) {
            let sys = assemble(&net, &water, &comp, 40_000.0, dt).unwrap();
            let ones = vec![1.0; sys.dim()];
            let row_sums = matvec(&sys.matrix, &ones).unwrap();
            for (s, v) in row_sums.iter().zip(&sys.volumes) {
                prop_assert!((s - v).abs() <= 1e-9 * (1.0 + sys.matrix.diagonal().iter().cloned().fold(0.0, f64::max)));
            }
        }
    }

    #[test]
    fn pcg_matches_dense_elimination(seed in 0u64..1_000, dt in 1e-4f64..10.0) {
        let net = generate_synthetic_network(SyntheticKind::RandomTangent, 60, seed).unwrap();
        let water = vec![true; 60];
        let comp: Vec<usize> = (0..60).collect();
        let sys = assemble(&net, &water, &comp, 1.0, dt).unwrap();
        let b: Vec<f64> = (0..60).map(|k| ((k * 37 + seed as usize) % 11) as f64 + 0.5).collect();
        let sol = pcg_solve(&sys.matrix, &b, 1e-12, 1_000).unwrap();
        let dense = dense_solve(dense_implicit_matrix(&net, &comp, 1.0, dt), b);
        prop_assert!(rel_linf(&sol.x, &dense) <= 1e-9);
        prop_assert!(sol.residual <= sol.initial_residual);
    }

    #[test]
    fn drainage_is_monotone_in_threshold(seed in 0u64..1_000, t1 in 0.5f64..3.5, t2 in 0.5f64..3.5) {
        let net = generate_synthetic_network(SyntheticKind::RandomTangent, 80, seed).unwrap();
        let (lo, hi) = (t1.min(t2), t1.max(t2));
        let a = drain_by_threshold(&net, lo).unwrap();
        let b = drain_by_threshold(&net, hi).unwrap();
        for (x, y) in a.water_mask.iter().zip(&b.water_mask) {
            prop_assert!(!*x || *y);
        }
        prop_assert!(a.achieved_saturation <= b.achieved_saturation);
    }

    #[test]
    fn drainage_meets_target(seed in 0u64..1_000, target in 0.01f64..1.0) {
        let net = generate_synthetic_network(SyntheticKind::RandomTangent, 80, seed).unwrap();
        let r = drain_to_saturation(&net, target).unwrap();
        prop_assert!(r.achieved_saturation >= target - 1e-12);
        let again = drain_by_threshold(&net, r.threshold).unwrap();
        prop_assert_eq!(again.water_mask, r.water_mask);
    }

    #[test]
    fn cosine_is_scale_invariant(
        l in prop::collection::vec(0.0f64..10.0, 1..50),
        a in 1e-6f64..1e6,
        b in 1e-6f64..1e6,
    ) {
        prop_assume!(l.iter().any(|&v| v > 0.0));
        let m: Vec<f64> = l.iter().rev().cloned().collect();
        let la: Vec<f64> = l.iter().map(|v| v * a).collect();
        let mb: Vec<f64> = m.iter().map(|v| v * b).collect();
        let c1 = cosine(&l, &m).unwrap();
        let c2 = cosine(&la, &mb).unwrap();
        prop_assert!((c1 - c2).abs() <= 1e-12);
        prop_assert!((cosine(&l, &l).unwrap() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn plane_profile_conserves_mass(seed in 0u64..1_000, planes in 1usize..120) {
        let net = generate_synthetic_network(SyntheticKind::RandomTangent, 60, seed).unwrap();
        let dom: Vec<f64> = (0..60).map(|k| (k % 7) as f64 + 0.25).collect();
        let total: f64 = dom.iter().sum();
        for binning in [ProfileBinning::Center, ProfileBinning::VolumeOverlap] {
            let p = plane_profile_with(&net, &dom, planes, binning);
            prop_assert!((p.total() + p.dropped - total).abs() <= 1e-10 * total);
        }
        let p = plane_profile(&net, &dom, planes);
        prop_assert_eq!(p.len(), planes);
    }
}
