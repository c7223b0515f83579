mod common;

use common::{instance, run, Draw};
use inca_lab::adversary::{reconstruct_check, AdversarySystem, AdversaryView, ViewMode};
use inca_lab::linalg::{min_norm_lstsq, svd_rank};
use inca_lab::protocol::{run_inca, NoiseSplit, ProtocolConfig, SplitKind};
use inca_lab::rng;
use inca_lab::topology::{static_schedule, CommSchedule, OnlineHistory, WeightMatrix};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn cycle(n: usize, t: usize) -> CommSchedule {
    let w = DMatrix::from_fn(n, n, |i, j| if i == j || i == (j + 1) % n { 0.5 } else { 0.0 });
    static_schedule(&WeightMatrix::from_dense(&w).unwrap(), t).unwrap()
}

fn observed_set(v: &AdversaryView) -> Vec<(usize, usize)> {
    let mut pairs = v.observed_pairs();
    pairs.sort();
    pairs
}

#[test]
fn collusion_view_by_hand() {
    // 0 → 1, 1 → 2, 2 → 0 with party 2 corrupted
    let view = AdversaryView::collusion(&cycle(3, 1), vec![false, false, true]).unwrap();
    let mut want = vec![(1, 0), (2, 0), (0, 1), (1, 1), (2, 1)];
    want.sort();
    assert_eq!(observed_set(&view), want);
}

#[test]
fn everyone_corrupted_sees_everything() {
    let s = cycle(4, 3);
    let view = AdversaryView::collusion(&s, vec![true; 4]).unwrap();
    assert_eq!(view.observed_pairs().len(), 16);
    assert!(view.honest().is_empty());
    let split = NoiseSplit::incremental(3, 1.0).unwrap();
    assert!(AdversarySystem::build(&s, &OnlineHistory::all_online(4, 3), &split, &view).is_err());
}

#[test]
fn final_messages_only() {
    let view = AdversaryView::eavesdrop(3, 2, 0.0, &mut rng::stream(1, &[])).unwrap();
    assert_eq!(observed_set(&view), vec![(0, 2), (1, 2), (2, 2)]);
    let split = NoiseSplit::incremental(2, 1.0).unwrap();
    let sys = AdversarySystem::build(&cycle(3, 2), &OnlineHistory::all_online(3, 2), &split, &view).unwrap();
    assert_eq!(sys.l.shape(), (3, 3));
    assert_eq!(sys.n.shape(), (3, 6));
}

fn fully_observed(n: usize, t: usize) -> AdversaryView {
    AdversaryView::new(ViewMode::Eavesdrop, vec![vec![true; n]; t + 1], vec![false; n]).unwrap()
}

#[test]
fn full_observation_is_square_and_invertible() {
    for (n, t, seed) in [(3, 2, 1u64), (5, 3, 2), (8, 4, 3)] {
        let d = Draw { n, k: 1, t, gamma: 0.0, mode: ViewMode::Eavesdrop, fraction: 1.0, kind: SplitKind::Incremental, sigma_delta_sq: 1.0 };
        let inst = instance(&d, seed);
        let sys = AdversarySystem::build(&inst.schedule, &inst.history, &inst.split, &fully_observed(n, t)).unwrap();
        let a = sys.stacked();
        assert_eq!(a.shape(), (n * (t + 1), n * (t + 1)));
        assert_eq!(svd_rank(&a, 1e-9), n * (t + 1));
    }
}

#[test]
fn early_split_starts_from_identity() {
    let s = cycle(4, 2);
    let split = NoiseSplit::early(2, 1.0).unwrap();
    let sys = AdversarySystem::build(&s, &OnlineHistory::all_online(4, 2), &split, &fully_observed(4, 2)).unwrap();
    let mut seen = 0;
    for (r, &(i, t)) in sys.rows.iter().enumerate() {
        if t == 0 {
            let want = DVector::from_fn(4, |j, _| if j == i { 1.0 } else { 0.0 });
            assert_eq!(sys.l.row(r).transpose(), want);
            seen += 1;
        }
    }
    assert_eq!(seen, 4);
}

#[test]
fn reconstruction_detects_tampering() {
    let d = Draw { n: 12, k: 2, t: 5, gamma: 0.2, mode: ViewMode::Collusion, fraction: 0.25, kind: SplitKind::Incremental, sigma_delta_sq: 3.0 };
    let inst = instance(&d, 9);
    let sys = AdversarySystem::build(&inst.schedule, &inst.history, &inst.split, &inst.view).unwrap();
    let mut tr = run(&inst, 2.0, 9);
    assert!(reconstruct_check(&sys, &tr) <= 1e-9);
    let (i, t) = sys.rows[0];
    tr.messages[t][i] += 0.01;
    assert!(reconstruct_check(&sys, &tr) > 1e-6);
}

#[test]
fn zero_noise_reconstruction_is_tight() {
    let d = Draw { n: 10, k: 2, t: 4, gamma: 0.0, mode: ViewMode::Eavesdrop, fraction: 0.5, kind: SplitKind::Early, sigma_delta_sq: 0.0 };
    let inst = instance(&d, 10);
    let sys = AdversarySystem::build(&inst.schedule, &inst.history, &inst.split, &inst.view).unwrap();
    let cfg = ProtocolConfig { n: 10, iterations: 4, sigma_ind_sq: 0.0, split: inst.split.clone(), seed: 1 };
    let tr = run_inca(&cfg, &inst.schedule, &inst.history, &inst.x).unwrap();
    assert!(reconstruct_check(&sys, &tr) <= 1e-12);
}

fn draw() -> impl Strategy<Value = (Draw, u64)> {
    (3usize..16, 1usize..4, 1usize..6, 0.0f64..0.4, any::<bool>(), 0.0f64..0.6, any::<bool>(), any::<u64>()).prop_map(
        |(n, k, t, gamma, collude, fraction, early, seed)| {
            let mode = if collude { ViewMode::Collusion } else { ViewMode::Eavesdrop };
            let fraction = if collude { fraction.min(0.5) } else { fraction };
            let kind = if early { SplitKind::Early } else { SplitKind::Incremental };
            (Draw { n, k: k.min(n - 1), t, gamma, mode, fraction, kind, sigma_delta_sq: 1.5 }, seed)
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn system_is_consistent_and_reduced((d, seed) in draw()) {
        let inst = instance(&d, seed);
        let sys = AdversarySystem::build(&inst.schedule, &inst.history, &inst.split, &inst.view).unwrap();
        let a = sys.stacked();
        let nh = sys.honest.len();
        prop_assert_eq!(svd_rank(&a, 1e-9), a.nrows());
        prop_assert!(a.nrows() <= nh + nh * d.t);
        prop_assert!(reconstruct_check(&sys, &run(&inst, 1.0, seed)) <= 1e-9);

        // every dropped row lies in the span of the retained ones
        let at = a.transpose();
        for r in 0..sys.unreduced.nrows() {
            let row = sys.unreduced.row(r).transpose();
            let (_, res) = min_norm_lstsq(&at, &row, 1e-12);
            prop_assert!(res <= 1e-9 * row.norm().max(1.0), "row {} residual {}", r, res);
        }
    }

    #[test]
    fn rank_grows_with_the_view((mut d, seed) in draw(), extra in prop::collection::vec((0usize..16, 0usize..6), 1..12)) {
        d.mode = ViewMode::Eavesdrop;
        let inst = instance(&d, seed);
        let mut view = inst.view.clone();
        let mut last = AdversarySystem::build(&inst.schedule, &inst.history, &inst.split, &view).unwrap().rows.len();
        for (i, t) in extra {
            view.observe(i % d.n, t % (d.t + 1));
            let m = AdversarySystem::build(&inst.schedule, &inst.history, &inst.split, &view).unwrap().rows.len();
            prop_assert!(m >= last);
            last = m;
        }
    }
}
