//! Eigenfunction-series solution for a unit line source illuminating a
//! homogeneous circular cylinder centred at the origin.
//!
//! Used only to validate the MoM solver; it relies on the `complex-bessel`
//! crate (complex-argument, arbitrary-order Bessel functions) and shares no
//! code with the solver's own special functions.

use complex_bessel::{besselj, hankel2};
use num_complex::Complex64;

use crate::domain::{ComplexPermittivity, Point};
use crate::error::{Error, Result};

const MAX_TERMS: usize = 200;
const REL_TOL: f64 = 1e-12;

fn bessel_err(e: complex_bessel::Error) -> Error {
    Error::Domain(format!("complex Bessel evaluation failed: {e:?}"))
}

fn jn(n: i32, z: Complex64) -> Result<Complex64> {
    besselj(n as f64, z).map_err(bessel_err)
}

fn hn(n: i32, x: f64) -> Result<Complex64> {
    hankel2(n as f64, Complex64::new(x, 0.0)).map_err(bessel_err)
}

/// Exterior scattering coefficient of order `n` for TM incidence:
/// the scattered field is `sum_n a_n H_n(2)(k rho_s) H_n(2)(k rho) e^{jn(phi - phi_s)}`.
fn coefficient(n: i32, k0: f64, k1: Complex64, radius: f64) -> Result<Complex64> {
    if k1 == Complex64::new(k0, 0.0) {
        // no contrast, no scattering
        return Ok(Complex64::new(0.0, 0.0));
    }
    let x = Complex64::new(k0 * radius, 0.0);
    let z = k1 * radius;
    let j_in = jn(n, z)?;
    let dj_in = (jn(n - 1, z)? - jn(n + 1, z)?) * 0.5;
    let j_out = jn(n, x)?;
    let dj_out = (jn(n - 1, x)? - jn(n + 1, x)?) * 0.5;
    let h_out = hn(n, x.re)?;
    let dh_out = (hn(n - 1, x.re)? - hn(n + 1, x.re)?) * 0.5;
    let num = k1 * dj_in * j_out - k0 * j_in * dj_out;
    let den = k0 * j_in * dh_out - k1 * dj_in * h_out;
    Ok(num / den)
}

/// Total field `H0(2)(k |r - r_s|) + E_s(r)` at each receiver for a unit line
/// source at `line_source` and a cylinder of the given radius and
/// permittivity. The series is truncated once a term contributes less than
/// `1e-12` of the running scattered sum.
pub fn mie_cylinder_oracle(
    radius: f64,
    epsilon: ComplexPermittivity,
    k0: f64,
    line_source: Point,
    receivers: &[Point],
) -> Result<Vec<Complex64>> {
    let origin = Point::new(0.0, 0.0);
    if !(radius > 0.0) {
        return Err(Error::Geometry("cylinder radius must be positive".into()));
    }
    if line_source.distance(origin) <= radius {
        return Err(Error::Geometry("line source lies inside the cylinder".into()));
    }
    if receivers.iter().any(|r| r.distance(origin) <= radius) {
        return Err(Error::Geometry("receiver lies inside the cylinder".into()));
    }
    let k1 = k0 * epsilon.to_complex().sqrt();
    let rho_s = line_source.distance(origin);
    let phi_s = line_source.y.atan2(line_source.x);

    let mut coefficients: Vec<Complex64> = Vec::new();
    let mut source_hankel: Vec<Complex64> = Vec::new();
    let mut out = Vec::with_capacity(receivers.len());
    for &r in receivers {
        let incident = hn(0, k0 * r.distance(line_source))?;
        let rho = r.distance(origin);
        let phi = r.y.atan2(r.x);
        let mut scattered = Complex64::new(0.0, 0.0);
        let mut converged = false;
        for n in 0..MAX_TERMS {
            if coefficients.len() <= n {
                coefficients.push(coefficient(n as i32, k0, k1, radius)?);
                source_hankel.push(hn(n as i32, k0 * rho_s)?);
            }
            let weight = if n == 0 { 1.0 } else { 2.0 };
            // Judge convergence on the angle-free magnitude so a vanishing
            // cosine cannot end the series early.
            let radial = coefficients[n] * source_hankel[n] * hn(n as i32, k0 * rho)? * weight;
            if !radial.re.is_finite() || !radial.im.is_finite() {
                return Err(Error::NonConvergence { terms: n });
            }
            scattered += radial * (n as f64 * (phi - phi_s)).cos();
            let size = scattered.norm();
            if n > 0 && (radial.norm() <= REL_TOL * size || size == 0.0) {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NonConvergence { terms: MAX_TERMS });
        }
        out.push(incident + scattered);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::wavenumber;

    #[test]
    fn free_space_cylinder_scatters_nothing() {
        let k0 = wavenumber(1.0).unwrap();
        let src = Point::new(0.0, -12.0);
        let rx = [Point::new(10.0, 3.0), Point::new(-4.0, 9.0)];
        let got = mie_cylinder_oracle(2.0, ComplexPermittivity::FREE_SPACE, k0, src, &rx).unwrap();
        for (g, r) in got.iter().zip(rx) {
            assert_eq!(*g, hn(0, k0 * r.distance(src)).unwrap());
        }
    }

    #[test]
    fn reciprocity() {
        let k0 = wavenumber(1.0).unwrap();
        let eps = ComplexPermittivity::new(50.0, -23.0);
        let a = Point::new(-4.05, -15.4);
        let b = Point::new(15.4, 2.7);
        let ab = mie_cylinder_oracle(1.8, eps, k0, a, &[b]).unwrap()[0];
        let ba = mie_cylinder_oracle(1.8, eps, k0, b, &[a]).unwrap()[0];
        assert!((ab - ba).norm() < 1e-13 * ab.norm());
    }

    #[test]
    fn points_inside_are_rejected() {
        let k0 = wavenumber(1.0).unwrap();
        let eps = ComplexPermittivity::new(8.0, -1.2);
        assert!(mie_cylinder_oracle(1.8, eps, k0, Point::new(0.0, 1.0), &[Point::new(5.0, 0.0)]).is_err());
        assert!(mie_cylinder_oracle(1.8, eps, k0, Point::new(0.0, 9.0), &[Point::new(1.0, 0.0)]).is_err());
    }
}
