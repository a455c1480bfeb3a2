use eclab::holo::C64;
use eclab::torus::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Integer coordinates of `z` in the basis `(a, b)`, solved by Cramer's rule.
fn solve(a: C64, b: C64, z: C64) -> (f64, f64) {
    let det = a.re * b.im - a.im * b.re;
    ((z.re * b.im - z.im * b.re) / det, (a.re * z.im - a.im * z.re) / det)
}

/// Distance from `z` to the lattice by brute force over 25 translates of the
/// given generators around the rounded coordinates.
fn brute_dist(l: &Lattice, z: C64) -> f64 {
    let (s, t) = solve(l.omega1, l.omega2, z);
    let mut best = f64::INFINITY;
    for i in -2..=2 {
        for j in -2..=2 {
            let g = l.omega1 * (s.round() + i as f64) + l.omega2 * (t.round() + j as f64);
            best = best.min((z - g).norm());
        }
    }
    best
}

#[test]
fn reduce_examples() {
    let sq = Lattice::square();
    assert!((sq.reduce(c(2.5, 0.25)).rep - c(0.5, 0.25)).norm() < 1e-15);
    assert_eq!(sq.reduce(c(0.3, 0.7)).rep, c(0.3, 0.7));

    let l = Lattice::new(c(2.0, 0.0), c(1.0, 1.0)).unwrap();
    let z = c(3.0, 2.0);
    let r = l.reduce(z).rep;
    let (a, b) = solve(c(2.0, 0.0), c(1.0, 1.0), z - r);
    assert!((a - a.round()).abs() < 1e-9 && (b - b.round()).abs() < 1e-9);
    let (s, t) = solve(c(2.0, 0.0), c(1.0, 1.0), r);
    assert!((0.0..1.0).contains(&s) && (0.0..1.0).contains(&t));
}

#[test]
fn degenerate_lattices_are_rejected() {
    assert!(Lattice::new(c(1.0, 0.0), c(2.0, 0.0)).is_err());
    assert!(Lattice::new(c(0.0, 1.0), c(1.0, 0.0)).is_err());
    assert!(serde_json::from_str::<Lattice>(r#"{"omega1":[1.0,0.0],"omega2":[3.0,0.0]}"#).is_err());
}

#[test]
fn distance_examples() {
    let sq = Lattice::square();
    let p = sq.reduce(c(0.05, 0.0));
    let q = sq.reduce(c(0.95, 0.0));
    assert!((torus_dist(&sq, &p, &q).unwrap() - 0.1).abs() < 1e-12);
    assert_eq!(torus_dist(&sq, &p, &p).unwrap(), 0.0);
    let h = Lattice::hexagonal().reduce(c(0.1, 0.1));
    assert!(torus_dist(&sq, &p, &h).is_err());
}

#[test]
fn distances_against_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for l in [Lattice::square(), Lattice::hexagonal(), Lattice::new(c(2.0, 0.0), c(1.0, 1.0)).unwrap()] {
        for _ in 0..500 {
            let a = c(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
            let b = c(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
            let (p, q) = (l.reduce(a), l.reduce(b));
            let d = p.dist(&q).unwrap();
            assert!(d <= (p.rep - q.rep).norm() + 1e-12);
            assert!((d - brute_dist(&l, a - b)).abs() < 1e-12);
            assert!((d - q.dist(&p).unwrap()).abs() < 1e-12);
        }
    }
}

#[test]
fn triangle_inequality() {
    let l = Lattice::hexagonal();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..1000 {
        let [x, y, z] = [(); 3].map(|_| l.reduce(c(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0))));
        assert!(x.dist(&z).unwrap() <= x.dist(&y).unwrap() + y.dist(&z).unwrap() + 1e-12);
    }
}

#[test]
fn tube_membership() {
    let sq = Lattice::square();
    let hex = Lattice::hexagonal();
    let center = sq.reduce(c(0.2, 0.3));
    let other = hex.reduce(c(0.0, 0.0));
    let tube = TubeNbhd::new(Factor::First, center, 0.25).unwrap();
    assert!(in_tube(&tube, (&center, &other)).unwrap());
    let edge = sq.reduce(c(0.45, 0.3));
    assert!(!in_tube(&tube, (&edge, &other)).unwrap());

    let rho = sq.covering_radius() / 2.0;
    let tube = TubeNbhd::new(Factor::First, center, rho).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..2000 {
        let w = c(rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0));
        let x = sq.reduce(w);
        let expected = brute_dist(&sq, w - center.rep) < rho;
        assert_eq!(in_tube(&tube, (&x, &other)).unwrap(), expected);
        assert_eq!(tube.contains_lift(w), expected);
    }
    assert!(TubeNbhd::new(Factor::Second, other, 0.0).is_err());
}

#[test]
fn dense_sequence_properties() {
    let sq = Lattice::square();
    let first = sq.dense_sequence(1).unwrap();
    assert_eq!(first.rep, c(PLASTIC_A1, PLASTIC_A2));
    assert_eq!(sq.dense_sequence(1).unwrap(), first);
    assert!(sq.dense_sequence(0).is_err());

    let mut boxes = [[0u32; 16]; 16];
    let mut seen = std::collections::HashSet::new();
    for k in 1..=10_000u64 {
        let p = sq.dense_sequence(k).unwrap().rep;
        boxes[(p.re * 16.0) as usize][(p.im * 16.0) as usize] += 1;
        assert!(seen.insert((p.re.to_bits(), p.im.to_bits())), "repeat at {k}");
    }
    assert!(boxes.iter().flatten().all(|&n| n > 0));
}

#[test]
fn covering_radius_of_the_square_lattice() {
    assert!((Lattice::square().covering_radius() - 0.5f64.sqrt()).abs() < 1e-15);
    assert!((Lattice::hexagonal().covering_radius() - 1.0 / 3f64.sqrt()).abs() < 1e-15);
}

proptest! {
    #[test]
    fn reduce_is_idempotent_and_equivariant(
        x in -50.0f64..50.0, y in -50.0f64..50.0, a in -20i32..20, b in -20i32..20, hex in any::<bool>()
    ) {
        let l = if hex { Lattice::hexagonal() } else { Lattice::square() };
        let z = c(x, y);
        let r = l.reduce(z);
        prop_assert!((l.reduce(r.rep).rep - r.rep).norm() < 1e-9);
        let g = l.omega1 * a as f64 + l.omega2 * b as f64;
        let shifted = l.reduce(z + g);
        prop_assert!(shifted.dist(&r).unwrap() < 1e-9);
    }
}
