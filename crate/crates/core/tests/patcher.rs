use std::collections::HashSet;

use eclab::holo::{HoloFunc, C64};
use eclab::patcher::*;
use eclab::Error;
use proptest::prelude::*;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn k(re: f64) -> HoloFunc {
    HoloFunc::constant(c(re, 0.0))
}

/// Cantor enumeration by walking the diagonals, independent of the closed form.
fn diagonal_walk(count: usize) -> Vec<(u64, u64)> {
    let mut out = Vec::with_capacity(count);
    let mut w = 0u64;
    while out.len() < count {
        for y in 0..=w {
            out.push((w - y + 1, y + 1));
            if out.len() == count {
                break;
            }
        }
        w += 1;
    }
    out
}

fn programs() -> DiscProgram {
    DiscProgram {
        discs: vec![
            DiscMap {
                g1: HoloFunc::identity(),
                g2: HoloFunc::poly_real(&[1.0, 0.0, 0.5]),
                radius: 1.0,
            },
            DiscMap {
                g1: HoloFunc::constant(c(0.3, 0.2)),
                g2: HoloFunc::poly(vec![c(0.0, 0.0), c(0.0, 1.0)]),
                radius: 0.5,
            },
            DiscMap {
                g1: HoloFunc::poly_real(&[0.0, 2.0, 0.0, -1.0 / 3.0]),
                g2: HoloFunc::poly(vec![c(0.5, 0.5), c(1.0, -1.0)]),
                radius: 0.75,
            },
        ],
        target: Default::default(),
    }
}

#[test]
fn pairing_base_and_walk() {
    assert_eq!(schedule(1, 3), (1, 1));
    assert_eq!(cantor_unpair(1), (1, 1));
    for (j, &p) in diagonal_walk(10_000).iter().enumerate() {
        assert_eq!(cantor_unpair(j as u64 + 1), p);
    }
}

#[test]
fn pairing_is_bijective() {
    let mut seen = HashSet::new();
    for j in 1..=10_000u64 {
        let (x, y) = cantor_unpair(j);
        assert!(seen.insert((x, y)));
        assert_eq!(cantor_pair(x, y), j);
    }
}

#[test]
fn every_source_recurs() {
    let mut counts = [0usize; 3];
    for j in 1..=100 {
        counts[schedule(j, 3).0 - 1] += 1;
    }
    assert!(counts.iter().all(|&n| n >= 8), "{counts:?}");

    // Fairness: every window of length 9 sees every source.
    let picks: Vec<usize> = (1..=2000).map(|j| schedule(j, 3).0).collect();
    for w in picks.windows(9) {
        for s in 1..=3 {
            assert!(w.contains(&s));
        }
    }
    // Repetition counts number the visits of each source.
    let mut seen = [0u64; 3];
    for j in 1..=200 {
        let (s, rep) = schedule(j, 3);
        seen[s - 1] += 1;
        assert_eq!(rep, seen[s - 1]);
    }
}

#[test]
fn scaling_to_the_boundary() {
    let f = HoloFunc::poly_real(&[0.3, -1.0, 2.0, 0.5]);
    let f1 = scale_to_boundary(&f, 1).unwrap();
    assert!((f1.eval(c(2.0, 0.0)).unwrap() - f.eval(c(1.0, 0.0)).unwrap()).norm() < 1e-15);
    let z0 = c(0.4, -0.7);
    let mut last = f64::INFINITY;
    for l in 1..=20 {
        let gap = (scale_to_boundary(&f, l).unwrap().eval(z0).unwrap() - f.eval(z0).unwrap()).norm();
        assert!(gap <= last);
        last = gap;
    }
    assert!(last < 1e-5);
    // Coefficients scale by (1 - 2^{-ℓ})^k: compare values at the points u^k.
    let s = 1.0 - 0.5f64.powi(3);
    let g = scale_to_boundary(&f, 3).unwrap();
    let coeffs = [0.3, -1.0, 2.0, 0.5];
    for z in [c(1.0, 0.0), c(-0.5, 1.5), c(0.0, 2.0)] {
        let expected: C64 = coeffs.iter().enumerate().map(|(k, &a)| a * s.powi(k as i32) * z.powu(k as u32)).sum();
        assert!((g.eval(z).unwrap() - expected).norm() < 1e-13);
    }
    assert!(scale_to_boundary(&f, 0).is_err());
}

#[test]
fn merging_a_map_with_itself_changes_nothing() {
    let g1 = HoloFunc::poly_real(&[0.0, 1.0, 0.25]);
    let g2 = HoloFunc::poly_real(&[1.0, -0.5]);
    let first = Piece { g1: g1.clone(), g2: g2.clone(), center: c(0.0, 0.0), radius: 1.0 };
    let second = Piece { g1: g1.clone(), g2: g2.clone(), center: c(3.0, 0.0), radius: 0.5 };
    let m = merge_two_discs(&first, &second, 4.0, 1e-6, &MergeOptions::default()).unwrap();
    assert_eq!((m.g1, m.g2), (g1, g2));
    assert_eq!(m.deviation_first, 0.0);
    assert_eq!(m.deviation_second, 0.0);
}

#[test]
fn merging_two_constants() {
    let first = Piece { g1: k(0.0), g2: k(0.0), center: c(-3.0, 0.0), radius: 1.0 };
    let second = Piece { g1: k(1.0), g2: k(0.0), center: c(3.0, 0.0), radius: 1.0 };
    let eps = 1e-3;
    let m = merge_two_discs(&first, &second, 4.5, eps, &MergeOptions::default()).unwrap();
    assert!(m.deviation_first <= eps && m.deviation_second <= eps);
    assert!(m.resampled_first <= eps && m.resampled_second <= eps);
    // Independent check at points the certification never visited.
    for j in 0..1000 {
        let t = 0.1 + j as f64 * 0.0061;
        for (center, want) in [(c(-3.0, 0.0), 0.0), (c(3.0, 0.0), 1.0)] {
            for s in [1.0, 0.5] {
                let z = center + C64::from_polar(s, t);
                assert!((m.g1.eval(z).unwrap() - want).norm() <= eps);
                assert!(m.g2.eval(z).unwrap().norm() <= eps);
            }
        }
    }
}

#[test]
fn merge_preconditions() {
    let a = Piece { g1: k(0.0), g2: k(0.0), center: c(0.0, 0.0), radius: 1.0 };
    let b = Piece { g1: k(1.0), g2: k(0.0), center: c(1.5, 0.0), radius: 1.0 };
    assert!(matches!(
        merge_two_discs(&a, &b, 4.0, 1e-3, &MergeOptions::default()),
        Err(Error::Parameter(_))
    ));
    let b = Piece { center: c(3.0, 0.0), ..b };
    assert!(merge_two_discs(&a, &b, 4.0, 0.0, &MergeOptions::default()).is_err());
    assert!(merge_two_discs(&a, &b, 3.5, 1e-3, &MergeOptions::default()).is_err());
}

#[test]
fn single_constant_program() {
    let program = DiscProgram {
        discs: vec![DiscMap { g1: k(0.25), g2: k(-1.0), radius: 1.0 }],
        target: Default::default(),
    };
    let cfg = PatchConfig { steps: 1, ..PatchConfig::default() };
    let run = run_patch(&program, &cfg).unwrap();
    assert_eq!(run.trace.len(), 1);
    assert_eq!(run.trace[0].g1, k(0.25));
    assert_eq!(run.deviations[0].sampled, 0.0);
    assert!(run.all_hold());
}

#[test]
fn empty_program_is_rejected() {
    let program = DiscProgram { discs: vec![], target: Default::default() };
    let r = run_patch(&program, &PatchConfig::default());
    assert!(matches!(r, Err(e) if matches!(e.error, Error::Config(_))));
}

#[test]
fn one_merge_with_telescoping() {
    let cfg = PatchConfig { steps: 2, ..PatchConfig::default() };
    let run = run_patch(&programs(), &cfg).unwrap();
    assert_eq!(run.trace.len(), 2);
    let s = &run.trace[1];
    // Geometry: gap of one, enclosing radius.
    assert_eq!(s.center, c(run.trace[0].radius + 1.0 + s.disc_radius, 0.0));
    assert!(s.radius > s.center.norm() + s.disc_radius);
    let m = s.merge.as_ref().unwrap();
    assert!(m.deviation_first <= s.epsilon && m.deviation_second <= s.epsilon);
    assert!(m.resampled_first <= s.epsilon && m.resampled_second <= s.epsilon);
    for d in &run.deviations {
        assert!(d.holds, "{d:?}");
    }
    assert!(run.deviation_csv().lines().count() == 3);
}

/// Each merge has to reproduce the previous map on a disc where that map is
/// already huge, so later merges hit the floating-point floor and the run
/// stops with the partial trace.
#[test]
fn long_runs_stop_with_a_partial_trace() {
    let cfg = PatchConfig { steps: 4, ..PatchConfig::default() };
    match run_patch(&programs(), &cfg) {
        Ok(run) => assert!(run.all_hold()),
        Err(a) => {
            assert!(matches!(a.error, Error::Approximation(_)));
            assert!(!a.trace.is_empty() && a.trace.len() < 4);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn pair_unpair_round_trip(x in 1u64..100_000, y in 1u64..100_000) {
        prop_assert_eq!(cantor_unpair(cantor_pair(x, y)), (x, y));
    }
}
