use proptest::prelude::*;

use mwtomo::domain::{
    rasterize, restrict_to_coarse, ComplexPermittivity, Grid, Mesh, PermittivityMap, Phantom, Point, Refinement,
    Region, Shape,
};
use mwtomo::enhance::{contrast_stretch, equalize, ks_uniform_distance, to_grayscale, Channel, ImageGrid};
use mwtomo::inverse::project;
use mwtomo::linalg::norm2;
use mwtomo::measurement::{
    build_geometry, contaminate, parse_dataset, render_dataset, synthesize, FieldMode, GeometryConfig,
    MeasurementSet,
};
use num_complex::Complex64;

fn uniform_map(values: &[(f64, f64)], nx: usize) -> PermittivityMap {
    let grid = Grid {
        origin: Point::new(0.0, 0.0),
        cell_size: 1.0,
        nx,
        ny: values.len() / nx,
    };
    let v = values.iter().map(|&(re, im)| ComplexPermittivity::new(re, im)).collect();
    PermittivityMap::new(Mesh::uniform(grid), v, vec![false; values.len()]).unwrap()
}

fn small_clean_set() -> MeasurementSet {
    let grid = Grid {
        origin: Point::new(-0.6, -0.6),
        cell_size: 0.6,
        nx: 2,
        ny: 2,
    };
    let geometry = build_geometry(
        &GeometryConfig {
            transmitters_per_side: 1,
            receivers_per_side: 2,
            standoff_cm: 2.0,
            aperture_cm: 1.0,
            elements: 3,
        },
        &grid,
        1.0,
    )
    .unwrap();
    let map = PermittivityMap::constant(Mesh::uniform(grid), ComplexPermittivity::new(30.0, -10.0));
    synthesize(&map, &geometry, 1.0, FieldMode::Total).unwrap()
}

proptest! {
    #[test]
    fn projection_is_admissible_and_idempotent(re in -1e3..1e3f64, im in -1e3..1e3f64) {
        let p = project(ComplexPermittivity::new(re, im));
        prop_assert!(p.is_admissible());
        prop_assert_eq!(project(p), p);
        if re >= 0.0 && im <= 0.0 {
            prop_assert_eq!(p, ComplexPermittivity::new(re, im));
        }
    }

    #[test]
    fn grayscale_preserves_order(values in prop::collection::vec((-100.0..100.0f64, -50.0..0.0f64), 16)) {
        let map = uniform_map(&values, 4);
        for channel in [Channel::Real, Channel::Imag] {
            let img = to_grayscale(&map, channel).unwrap();
            // image rows run top to bottom
            let pixel = |i: usize| img.pixels[(3 - i / 4) * 4 + i % 4];
            let field = |i: usize| if channel == Channel::Real { values[i].0 } else { values[i].1 };
            for a in 0..16 {
                for b in 0..16 {
                    if field(a) <= field(b) {
                        prop_assert!(pixel(a) <= pixel(b));
                    }
                }
            }
        }
    }

    #[test]
    fn equalization_preserves_order(pixels in prop::collection::vec(any::<u8>(), 1..200)) {
        let n = pixels.len();
        let img = ImageGrid::new(n, 1, pixels.clone(), Channel::Real, (0.0, 1.0)).unwrap();
        let eq = equalize(&img);
        for a in 0..n {
            for b in 0..n {
                if pixels[a] <= pixels[b] {
                    prop_assert!(eq.pixels[a] <= eq.pixels[b]);
                }
            }
        }
        prop_assert_eq!(eq.value_range, img.value_range);
    }

    /// Equalization flattens the histogram as far as the occupancy of the
    /// fullest level allows; with at least 32 levels each holding no more
    /// than 1/32 of the pixels the result is within 0.1 of uniform.
    #[test]
    fn equalized_images_are_near_uniform(
        levels in prop::collection::btree_set(any::<u8>(), 32..=256),
        counts in prop::collection::vec(1usize..4, 256),
    ) {
        let mut pixels = Vec::new();
        for (i, &g) in levels.iter().enumerate() {
            pixels.extend(std::iter::repeat(g).take(counts[i]));
        }
        let n = pixels.len();
        let max_share = levels.iter().enumerate().map(|(i, _)| counts[i]).max().unwrap() as f64 / n as f64;
        prop_assume!(max_share <= 1.0 / 32.0);
        let img = ImageGrid::new(n, 1, pixels, Channel::Imag, (0.0, 1.0)).unwrap();
        prop_assert!(ks_uniform_distance(&equalize(&img)) <= 0.1);
    }

    #[test]
    fn full_range_stretch_is_identity(mut pixels in prop::collection::vec(any::<u8>(), 2..100)) {
        pixels[0] = 0;
        pixels[1] = 255;
        let img = ImageGrid::new(pixels.len(), 1, pixels, Channel::Real, (0.0, 1.0)).unwrap();
        let (out, _) = contrast_stretch(&img, 0.0, 100.0).unwrap();
        prop_assert_eq!(out, img);
    }

    /// Rectangles on coarse cell edges sample the same either way.
    #[test]
    fn restriction_matches_direct_rasterization(
        c0 in 0usize..6, r0 in 0usize..6, w in 1usize..4, h in 1usize..4,
        re in 1.0..80.0f64, im in -40.0..0.0f64,
    ) {
        let outer = Grid { origin: Point::new(0.0, 0.0), cell_size: 0.6, nx: 8, ny: 8 };
        let fine = Mesh::refined(outer, Refinement { col0: 1, row0: 1, cols: 6, rows: 6, factor: 2 }).unwrap();
        let coarse = Mesh::uniform(outer);
        let shape = Shape::Rect {
            x0: 0.6 * (c0 + 1) as f64,
            y0: 0.6 * (r0 + 1) as f64,
            x1: 0.6 * (c0 + 1 + w) as f64,
            y1: 0.6 * (r0 + 1 + h) as f64,
        };
        let phantom = Phantom::new(
            ComplexPermittivity::new(76.0, -40.0),
            vec![Region { name: "block".into(), shape, permittivity: ComplexPermittivity::new(re, im) }],
            None,
        ).unwrap();
        let restricted = restrict_to_coarse(&rasterize(&phantom, &fine), &coarse).unwrap();
        let direct = rasterize(&phantom, &coarse);
        for (a, b) in restricted.values().iter().zip(direct.values()) {
            prop_assert!((a.re - b.re).abs() <= 1e-12 * b.re.abs().max(1.0));
            prop_assert!((a.im - b.im).abs() <= 1e-12 * b.im.abs().max(1.0));
        }
    }

    #[test]
    fn datasets_round_trip(
        values in prop::collection::vec((-1e3..1e3f64, -1e3..1e3f64), 24),
        percent in 0.0..20.0f64,
        seed in any::<u64>(),
    ) {
        let mut set = small_clean_set();
        prop_assert_eq!(set.values.len(), values.len());
        set.values = values.iter().map(|&(a, b)| Complex64::new(a, b)).collect();
        let set = contaminate(&set, percent, seed).unwrap();
        prop_assert_eq!(parse_dataset(&render_dataset(&set)).unwrap(), set);
    }

    #[test]
    fn noise_is_calibrated_per_view(percent in 0.01..50.0f64, seed in any::<u64>()) {
        let clean = small_clean_set();
        let noisy = contaminate(&clean, percent, seed).unwrap();
        for (c, n) in clean.views().iter().zip(noisy.views()) {
            let diff: Vec<Complex64> = c.iter().zip(n).map(|(a, b)| b - a).collect();
            let ratio = norm2(&diff) / norm2(c);
            prop_assert!((ratio - percent / 100.0).abs() <= 1e-12 * percent / 100.0);
        }
    }
}
