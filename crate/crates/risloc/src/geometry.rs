//! RIS element grid and near-field steering vectors.
//!
//! The RIS is a rectangular lattice in a plane of constant z. Steering
//! vectors are referenced to the RIS center: entry m carries the phase of the
//! path-length difference between element m and the center, so an element at
//! the center always contributes a factor of one.

use nalgebra::Vector3;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Two positions closer than this are treated as coincident.
const MIN_SEPARATION_M: f64 = 1e-9;

/// Immutable scene description: carrier, RIS lattice, and node positions.
///
/// All positions are in meters. The element grid is precomputed at
/// construction, as is the steering vector towards the base station.
#[derive(Debug, Clone)]
pub struct SceneConfig {
    pub wavelength_m: f64,
    pub carrier_hz: f64,
    pub ris_rows: usize,
    pub ris_cols: usize,
    pub spacing_m: f64,
    pub p_ris: Vector3<f64>,
    pub p_bs: Vector3<f64>,
    pub p_ue_true: Vector3<f64>,
    element_positions: Vec<Vector3<f64>>,
    bs_steering: Vec<Complex64>,
}

impl SceneConfig {
    /// Build a scene from the carrier frequency; the wavelength is derived.
    /// `spacing_m = None` selects half-wavelength spacing.
    pub fn new(
        carrier_hz: f64,
        ris_rows: usize,
        ris_cols: usize,
        spacing_m: Option<f64>,
        p_ris: Vector3<f64>,
        p_bs: Vector3<f64>,
        p_ue_true: Vector3<f64>,
    ) -> Result<Self> {
        if !(carrier_hz.is_finite() && carrier_hz > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "carrier frequency must be positive, got {carrier_hz}"
            )));
        }
        let wavelength_m = SPEED_OF_LIGHT / carrier_hz;
        let spacing = spacing_m.unwrap_or(wavelength_m / 2.0);
        let element_positions = build_ris_grid(ris_rows, ris_cols, spacing, p_ris)?;
        let bs_steering =
            steering_over_elements(&element_positions, p_ris, wavelength_m, p_bs)?;
        let scene = SceneConfig {
            wavelength_m,
            carrier_hz,
            ris_rows,
            ris_cols,
            spacing_m: spacing,
            p_ris,
            p_bs,
            p_ue_true,
            element_positions,
            bs_steering,
        };
        // The true UE position must admit a steering vector as well.
        scene.steering_vector(p_ue_true)?;
        Ok(scene)
    }

    /// Build a scene from the wavelength; the carrier is derived.
    pub fn from_wavelength(
        wavelength_m: f64,
        ris_rows: usize,
        ris_cols: usize,
        spacing_m: Option<f64>,
        p_ris: Vector3<f64>,
        p_bs: Vector3<f64>,
        p_ue_true: Vector3<f64>,
    ) -> Result<Self> {
        if !(wavelength_m.is_finite() && wavelength_m > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "wavelength must be positive, got {wavelength_m}"
            )));
        }
        Self::new(
            SPEED_OF_LIGHT / wavelength_m,
            ris_rows,
            ris_cols,
            spacing_m,
            p_ris,
            p_bs,
            p_ue_true,
        )
    }

    /// Number of RIS elements M.
    pub fn num_elements(&self) -> usize {
        self.element_positions.len()
    }

    /// Element positions in row-major order (rows along x, columns along y).
    pub fn element_positions(&self) -> &[Vector3<f64>] {
        &self.element_positions
    }

    /// Cached steering vector towards the base station.
    pub fn bs_steering(&self) -> &[Complex64] {
        &self.bs_steering
    }

    /// Near-field steering vector a(p): unit-modulus entries carrying the
    /// relative delay of each element versus the RIS center.
    pub fn steering_vector(&self, p: Vector3<f64>) -> Result<Vec<Complex64>> {
        steering_over_elements(&self.element_positions, self.p_ris, self.wavelength_m, p)
    }

    /// Combined BS-RIS-UE response b(p) = a(p) .* a(p_bs).
    pub fn combined_response(&self, p: Vector3<f64>) -> Result<Vec<Complex64>> {
        let mut a = self.steering_vector(p)?;
        for (am, bs) in a.iter_mut().zip(&self.bs_steering) {
            *am *= bs;
        }
        Ok(a)
    }
}

/// Centered rectangular lattice of `rows * cols` element positions in the
/// z = center.z plane, row-major with rows along x and columns along y.
pub fn build_ris_grid(
    rows: usize,
    cols: usize,
    spacing: f64,
    center: Vector3<f64>,
) -> Result<Vec<Vector3<f64>>> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidArgument(format!(
            "grid dimensions must be positive, got {rows}x{cols}"
        )));
    }
    if !(spacing.is_finite() && spacing > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "element spacing must be positive, got {spacing}"
        )));
    }
    let mut positions = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        let x = (i as f64 - (rows as f64 - 1.0) / 2.0) * spacing;
        for j in 0..cols {
            let y = (j as f64 - (cols as f64 - 1.0) / 2.0) * spacing;
            positions.push(center + Vector3::new(x, y, 0.0));
        }
    }
    Ok(positions)
}

fn steering_over_elements(
    elements: &[Vector3<f64>],
    p_ris: Vector3<f64>,
    wavelength: f64,
    p: Vector3<f64>,
) -> Result<Vec<Complex64>> {
    let k = 2.0 * std::f64::consts::PI / wavelength;
    let d_ref = (p - p_ris).norm();
    let mut out = Vec::with_capacity(elements.len());
    for (m, pm) in elements.iter().enumerate() {
        let d = (p - pm).norm();
        if d < MIN_SEPARATION_M {
            return Err(Error::SingularGeometry(format!(
                "position {p:?} coincides with element {m}"
            )));
        }
        let phase = -k * (d - d_ref);
        out.push(Complex64::from_polar(1.0, phase));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn paper_scene() -> SceneConfig {
        let d = 5.0;
        SceneConfig::new(
            28e9,
            50,
            50,
            None,
            Vector3::zeros(),
            5.77 * Vector3::new(-1.0, 1.0, 1.0),
            d / 3f64.sqrt() * Vector3::new(1.0, 1.0, 1.0),
        )
        .unwrap()
    }

    #[test]
    fn degenerate_grid_is_single_element_at_center() {
        let g = build_ris_grid(1, 1, 0.005, Vector3::zeros()).unwrap();
        assert_eq!(g, vec![Vector3::zeros()]);
    }

    #[test]
    fn two_by_two_grid_is_centered() {
        let g = build_ris_grid(2, 2, 1.0, Vector3::zeros()).unwrap();
        let expect = [
            Vector3::new(-0.5, -0.5, 0.0),
            Vector3::new(-0.5, 0.5, 0.0),
            Vector3::new(0.5, -0.5, 0.0),
            Vector3::new(0.5, 0.5, 0.0),
        ];
        assert_eq!(g.as_slice(), expect.as_slice());
    }

    #[test]
    fn invalid_grid_arguments_are_rejected() {
        assert!(build_ris_grid(0, 2, 1.0, Vector3::zeros()).is_err());
        assert!(build_ris_grid(2, 2, 0.0, Vector3::zeros()).is_err());
        assert!(build_ris_grid(2, 2, -1.0, Vector3::zeros()).is_err());
    }

    #[test]
    fn paper_grid_invariants() {
        let scene = paper_scene();
        let g = scene.element_positions();
        assert_eq!(g.len(), 2500);
        // All elements in the z = 0 plane.
        assert!(g.iter().all(|p| p.z == 0.0));
        // Centroid at the RIS center.
        let centroid = g.iter().sum::<Vector3<f64>>() / g.len() as f64;
        assert!(centroid.norm() < 1e-12 * scene.spacing_m);
        // Adjacent elements along a column are exactly one spacing apart.
        for j in 0..49 {
            let step = g[j + 1] - g[j];
            assert_relative_eq!(step.y, scene.spacing_m, epsilon = 1e-15);
            assert_eq!(step.x, 0.0);
        }
        // Adjacent elements along a row likewise.
        let step = g[50] - g[0];
        assert_relative_eq!(step.x, scene.spacing_m, epsilon = 1e-15);
        assert_eq!(step.y, 0.0);
        // Wavelength/carrier consistency.
        assert_relative_eq!(
            scene.wavelength_m * scene.carrier_hz,
            SPEED_OF_LIGHT,
            max_relative = 1e-6
        );
    }

    #[test]
    fn steering_entry_at_center_element_is_one() {
        // Single element exactly at the RIS center: both norms cancel.
        let scene = SceneConfig::from_wavelength(
            2.0,
            1,
            1,
            Some(1.0),
            Vector3::zeros(),
            Vector3::new(0.0, 0.0, 3.0),
            Vector3::new(1.0, 2.0, 2.0),
        )
        .unwrap();
        let a = scene.steering_vector(Vector3::new(0.4, -0.2, 1.0)).unwrap();
        assert_relative_eq!(a[0].re, 1.0, epsilon = 1e-15);
        assert_relative_eq!(a[0].im, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn steering_phase_matches_scalar_evaluation() {
        // lambda = 2, p_ris = 0, element at (1,0,0), p = (0,0,1):
        // phase = -pi (sqrt(2) - 1) ~ -1.30129.
        let elements = vec![Vector3::new(1.0, 0.0, 0.0)];
        let a = steering_over_elements(&elements, Vector3::zeros(), 2.0, Vector3::new(0.0, 0.0, 1.0))
            .unwrap();
        let expect = -std::f64::consts::PI * (2f64.sqrt() - 1.0);
        assert_relative_eq!(a[0].arg(), expect, epsilon = 1e-12);
        assert_relative_eq!(a[0].arg(), -1.30129, epsilon = 1e-5);
    }

    #[test]
    fn steering_is_unit_modulus_and_matches_independent_recompute() {
        let scene = paper_scene();
        let p = Vector3::new(1.3, -0.4, 2.2);
        let a = scene.steering_vector(p).unwrap();
        let k = 2.0 * std::f64::consts::PI / scene.wavelength_m;
        for (m, pm) in scene.element_positions().iter().enumerate() {
            assert_relative_eq!(a[m].norm(), 1.0, epsilon = 1e-14);
            // Independent scalar-norm recompute of the same entry.
            let dx = [p.x - pm.x, p.y - pm.y, p.z - pm.z];
            let d = (dx[0] * dx[0] + dx[1] * dx[1] + dx[2] * dx[2]).sqrt();
            let dr = (p.x * p.x + p.y * p.y + p.z * p.z).sqrt();
            let expect = Complex64::from_polar(1.0, -k * (d - dr));
            assert!((a[m] - expect).norm() < 1e-14);
        }
    }

    #[test]
    fn steering_translation_invariance() {
        let scene = paper_scene();
        let p = Vector3::new(0.7, 1.9, 3.1);
        let a = scene.steering_vector(p).unwrap();

        let shift = Vector3::new(-3.2, 0.8, 12.5);
        let shifted = SceneConfig::new(
            scene.carrier_hz,
            scene.ris_rows,
            scene.ris_cols,
            Some(scene.spacing_m),
            scene.p_ris + shift,
            scene.p_bs + shift,
            scene.p_ue_true + shift,
        )
        .unwrap();
        let b = shifted.steering_vector(p + shift).unwrap();
        let max_dev = a
            .iter()
            .zip(&b)
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max);
        assert!(max_dev < 1e-12, "translation changed steering by {max_dev}");
    }

    #[test]
    fn steering_rejects_position_on_element() {
        let scene = paper_scene();
        let on_elem = scene.element_positions()[17];
        match scene.steering_vector(on_elem) {
            Err(Error::SingularGeometry(_)) => {}
            other => panic!("expected singular geometry, got {other:?}"),
        }
    }

    #[test]
    fn combined_response_at_bs_squares_the_bs_steering() {
        let scene = paper_scene();
        let b = scene.combined_response(scene.p_bs).unwrap();
        for (bm, am) in b.iter().zip(scene.bs_steering()) {
            assert!((bm - am * am).norm() < 1e-14);
            assert_relative_eq!(bm.norm(), 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn combined_response_two_element_hand_check() {
        // Two elements on the x axis, lambda = 1.
        let scene = SceneConfig::from_wavelength(
            1.0,
            2,
            1,
            Some(1.0),
            Vector3::zeros(),
            Vector3::new(0.0, 0.0, 2.0),
            Vector3::new(0.0, 1.0, 1.0),
        )
        .unwrap();
        let p = Vector3::new(0.0, 1.0, 1.0);
        let b = scene.combined_response(p).unwrap();
        let k = 2.0 * std::f64::consts::PI;
        for (pm, bm) in scene.element_positions().iter().zip(&b) {
            let phase_ue = -k * ((p - pm).norm() - p.norm());
            let phase_bs = -k * ((scene.p_bs - pm).norm() - scene.p_bs.norm());
            let expect = Complex64::from_polar(1.0, phase_ue + phase_bs);
            assert!((bm - expect).norm() < 1e-12);
        }
    }
}
