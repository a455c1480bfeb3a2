use std::f64::consts::PI;

use eclab::currents::*;
use eclab::holo::{HoloFunc, C64};
use eclab::quad::QuadSpec;
use eclab::torus::{Factor, Lattice, ProductTarget, TubeNbhd};
use eclab::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn line(scale: f64, r: f64) -> MapDisc {
    MapDisc::new(
        HoloFunc::poly_real(&[0.0, scale]),
        HoloFunc::constant(c(0.0, 0.0)),
        r,
        ProductTarget::default(),
    )
    .unwrap()
}

#[test]
fn identity_closed_forms() {
    let q = QuadSpec::default();
    for r in [1.0, 2.0, 5.0] {
        let md = line(1.0, r);
        let t = nevanlinna_t(&md, &q).unwrap();
        assert!(rel(t.log_kernel.to_f64(), PI * r * r / 2.0) < 1e-4);
        assert!(rel(t.nested.to_f64(), PI * r * r / 2.0) < 1e-4);
        assert!(rel(nevanlinna_l(&md, &q).unwrap().to_f64(), 2.0 * PI * r) < 1e-4);
        let (area, boundary) = ahlfors_pair(&md, &q).unwrap();
        assert!(rel(area.to_f64(), PI * r * r) < 1e-4);
        assert!(rel(boundary.to_f64(), 2.0 * PI * r) < 1e-4);
    }
}

#[test]
fn scaled_and_squared_maps() {
    let q = QuadSpec::default();
    assert!(rel(nevanlinna_l(&line(2.0, 1.0), &q).unwrap().to_f64(), 4.0 * PI) < 1e-4);
    let sq = MapDisc::new(
        HoloFunc::poly_real(&[0.0, 0.0, 1.0]),
        HoloFunc::constant(c(0.0, 0.0)),
        1.0,
        ProductTarget::default(),
    )
    .unwrap();
    let (area, boundary) = ahlfors_pair(&sq, &q).unwrap();
    assert!(rel(area.to_f64(), 2.0 * PI) < 1e-4);
    assert!(rel(boundary.to_f64(), 4.0 * PI) < 1e-4);
}

#[test]
fn constant_maps_are_rejected() {
    let r = MapDisc::new(
        HoloFunc::constant(c(1.0, 0.0)),
        HoloFunc::constant(c(0.0, 2.0)),
        1.0,
        ProductTarget::default(),
    );
    assert!(matches!(r, Err(Error::Degenerate(_))));
}

#[test]
fn coarse_grids_are_rejected() {
    let q = QuadSpec {
        radial: 8,
        ..QuadSpec::default()
    };
    assert!(nevanlinna_t(&line(1.0, 1.0), &q).is_err());
}

#[test]
fn homogeneity_in_the_second_coordinate() {
    let q = QuadSpec::default();
    for k in [c(1.0, 0.0), c(0.0, 3.0), c(-0.5, 0.5)] {
        let md = MapDisc::new(
            HoloFunc::constant(c(0.0, 0.0)),
            HoloFunc::poly(vec![c(0.0, 0.0), k]),
            1.5,
            ProductTarget::default(),
        )
        .unwrap();
        let (area, _) = ahlfors_pair(&md, &q).unwrap();
        assert!(rel(area.to_f64(), k.norm_sqr() * PI * 1.5 * 1.5) < 1e-6);
    }
}

#[test]
fn fubini_on_random_polynomials() {
    let q = QuadSpec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..3 {
        let mut coord = || {
            let d = rng.gen_range(1..=6);
            HoloFunc::poly((0..=d).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect())
        };
        let (g1, g2) = (coord(), coord());
        let md = MapDisc::new(g1, g2, rng.gen_range(0.5..2.0), ProductTarget::default()).unwrap();
        let t = nevanlinna_t(&md, &q).unwrap();
        assert!(t.relative_gap < 1e-3, "{}", t.relative_gap);
    }
}

#[test]
fn masked_masses_limits() {
    let q = QuadSpec::default();
    let md = line(1.0, 1.0);
    let (area, _) = ahlfors_pair(&md, &q).unwrap();
    let t = nevanlinna_t(&md, &q).unwrap().log_kernel;
    let e = Lattice::square().reduce(c(0.0, 0.0));

    // Radius beyond the covering radius: every point is inside.
    let all = TubeNbhd::new(Factor::First, e, 0.75).unwrap();
    let (mt, ma) = masked_masses(&md, &all, &q).unwrap();
    assert_eq!((mt.to_f64(), ma.to_f64()), (0.0, 0.0));

    let thin = TubeNbhd::new(Factor::First, e, 1e-3).unwrap();
    let (mt, ma) = masked_masses(&md, &thin, &q).unwrap();
    assert!(rel(ma.to_f64(), area.to_f64()) < 1e-2);
    assert!(rel(mt.to_f64(), t.to_f64()) < 1e-2);
}

#[test]
fn masked_area_against_monte_carlo() {
    let q = QuadSpec::default();
    let md = line(1.0, 1.0);
    let sq = Lattice::square();
    let e = sq.reduce(c(0.0, 0.0));
    let tube = TubeNbhd::new(Factor::First, e, 0.25).unwrap();
    let (_, ma) = masked_masses(&md, &tube, &q).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let n = 1_000_000;
    let mut outside = 0usize;
    for _ in 0..n {
        // Uniform point of the unit disc.
        let z = C64::from_polar(rng.gen::<f64>().sqrt(), rng.gen_range(0.0..std::f64::consts::TAU));
        if sq.reduce(z).dist(&e).unwrap() >= 0.25 {
            outside += 1;
        }
    }
    let mc = PI * outside as f64 / n as f64;
    assert!(rel(ma.to_f64(), mc) < 2e-2, "{} vs {mc}", ma.to_f64());
}

#[test]
fn masked_masses_decrease_with_the_tube_radius() {
    let q = QuadSpec::default();
    let md = MapDisc::new(
        HoloFunc::poly_real(&[0.1, 1.0, 0.3]),
        HoloFunc::poly_real(&[0.0, 0.5]),
        1.5,
        ProductTarget::default(),
    )
    .unwrap();
    let e = Lattice::hexagonal().reduce(c(0.2, 0.1));
    let mut last = (f64::INFINITY, f64::INFINITY);
    for rho in [0.05, 0.1, 0.2, 0.3, 0.4] {
        let tube = TubeNbhd::new(Factor::Second, e, rho).unwrap();
        let (mt, ma) = masked_masses(&md, &tube, &q).unwrap();
        assert!(mt.to_f64() <= last.0 && ma.to_f64() <= last.1);
        last = (mt.to_f64(), ma.to_f64());
    }
}

#[test]
fn normalized_evaluations() {
    let q = QuadSpec::default();
    let md = MapDisc::new(
        HoloFunc::poly_real(&[0.0, 1.0, 0.5]),
        HoloFunc::poly_real(&[1.0, 0.25]),
        1.2,
        ProductTarget::default(),
    )
    .unwrap();
    assert!((normalized_eval(&md, &1.0, &q).unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(normalized_eval(&md, &0.0, &q).unwrap(), 0.0);

    let tube = TubeNbhd::new(Factor::First, Lattice::square().reduce(c(0.3, 0.3)), 0.2).unwrap();
    let inside = normalized_eval(&md, &TubeIndicator(tube), &q).unwrap();
    let (mt, _) = masked_masses(&md, &tube, &q).unwrap();
    let t = nevanlinna_t(&md, &q).unwrap().log_kernel;
    assert!((inside - (1.0 - mt.div(t).to_f64())).abs() < 1e-12);

    assert!(normalized_eval(&md, &1.5, &q).is_err());
}

#[test]
fn report_ratios() {
    let q = QuadSpec::default();
    let rep = report(&line(1.0, 1.0), None, &q).unwrap();
    assert!(rel(rep.l_over_t, 4.0) < 1e-4);
    assert!(rel(rep.boundary_over_area, 2.0) < 1e-4);
    assert_eq!(rep.masked_t_ratio, 0.0);
    let rep = report(&line(1.0, 100.0), None, &q).unwrap();
    assert!(rel(rep.l_over_t, 0.04) < 1e-4);

    let e = Lattice::square().reduce(c(0.0, 0.0));
    let all = TubeNbhd::new(Factor::First, e, 0.75).unwrap();
    let rep = report(&line(1.0, 1.0), Some(&all), &q).unwrap();
    assert_eq!((rep.masked_t_ratio, rep.masked_area_ratio), (0.0, 0.0));
    assert_eq!(rep.csv_row().split(',').count(), CurrentReport::CSV_HEADER.split(',').count());
}
