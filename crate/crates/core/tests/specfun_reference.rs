//! Bessel evaluations checked against a 40-digit mpmath table.

use mwtomo::specfun::{bessel_j, bessel_y, Order};

fn reference() -> Vec<[f64; 5]> {
    include_str!("data/bessel_reference.txt")
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            let v: Vec<f64> = l.split_whitespace().map(|t| t.parse().unwrap()).collect();
            [v[0], v[1], v[2], v[3], v[4]]
        })
        .collect()
}

#[test]
fn j_matches_reference_to_1e_12() {
    for [x, j0, j1, _, _] in reference() {
        let e0 = (bessel_j(Order::Zero, x).unwrap() - j0).abs();
        let e1 = (bessel_j(Order::One, x).unwrap() - j1).abs();
        assert!(e0 <= 1e-12, "J0({x}) error {e0:e}");
        assert!(e1 <= 1e-12, "J1({x}) error {e1:e}");
    }
}

#[test]
fn y_matches_reference_to_1e_10() {
    for [x, _, _, y0, y1] in reference() {
        let e0 = (bessel_y(Order::Zero, x).unwrap() - y0).abs();
        // Y1 ~ -2/(pi x) near the origin, so judge it relative to its size there.
        let e1 = (bessel_y(Order::One, x).unwrap() - y1).abs() / y1.abs().max(1.0);
        assert!(e0 <= 1e-10, "Y0({x}) error {e0:e}");
        assert!(e1 <= 1e-10, "Y1({x}) error {e1:e}");
    }
}

#[test]
fn wronskian_holds_on_dense_grid() {
    let mut x = 0.1;
    while x <= 50.0 {
        let j0 = bessel_j(Order::Zero, x).unwrap();
        let j1 = bessel_j(Order::One, x).unwrap();
        let y0 = bessel_y(Order::Zero, x).unwrap();
        let y1 = bessel_y(Order::One, x).unwrap();
        let expected = -2.0 / (std::f64::consts::PI * x);
        let rel = ((j0 * y1 - j1 * y0) - expected).abs() / expected.abs();
        assert!(rel <= 1e-9, "Wronskian at {x}: relative error {rel:e}");
        x += 0.01;
    }
}
