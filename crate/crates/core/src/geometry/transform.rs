use rand::Rng;
use serde::{Deserialize, Serialize};

use super::GeometryError;

/// Row-major 3×3 homogeneous matrix.
pub type Mat3 = [[f64; 3]; 3];

pub const IDENTITY3: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

pub const NEAR_RIGID_MAX_ANGLE: f64 = 15.0;
pub const NEAR_RIGID_MAX_SCALE_DEVIATION: f64 = 0.1;
/// Slack for comparisons against the near-rigid thresholds, so that values
/// parsed from decimal text (e.g. `1.1`) land on the inclusive side.
const THRESHOLD_SLACK: f64 = 1e-9;

pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

/// Inverse of an affine matrix (last row `[0, 0, 1]`).
pub fn affine_inverse(m: &Mat3) -> Option<Mat3> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    let (a, b, c, d) = (m[1][1] / det, -m[0][1] / det, -m[1][0] / det, m[0][0] / det);
    let tx = -(a * m[0][2] + b * m[1][2]);
    let ty = -(c * m[0][2] + d * m[1][2]);
    Some([[a, b, tx], [c, d, ty], [0.0, 0.0, 1.0]])
}

/// Largest absolute elementwise difference.
pub fn mat_max_diff(a: &Mat3, b: &Mat3) -> f64 {
    let mut m: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            m = m.max((a[i][j] - b[i][j]).abs());
        }
    }
    m
}

/// Maps an angle in degrees to `(-180, 180]`.
pub fn normalize_degrees(a: f64) -> f64 {
    let r = a.rem_euclid(360.0);
    if r > 180.0 {
        r - 360.0
    } else {
        r
    }
}

/// Rotation by `alpha_deg`, then axis scaling by `(fx, fy)`, then translation
/// by `(tx, ty)`: `H = T(t) · S(f) · R(alpha)`.
///
/// With anisotropic scaling the inverse of such a matrix is generally not of
/// the same form, so `inverse` marks a transform whose matrix is `H^{-1}`
/// for the stored parameters. Isotropic transforms are inverted in closed
/// form and stay canonical; anisotropic ones toggle the flag, so inverting
/// twice restores them exactly.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityTransform {
    pub alpha_deg: f64,
    pub fx: f64,
    pub fy: f64,
    pub tx: f64,
    pub ty: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub inverse: bool,
}

impl Default for SimilarityTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl SimilarityTransform {
    pub fn new(alpha_deg: f64, fx: f64, fy: f64, tx: f64, ty: f64) -> Result<Self, GeometryError> {
        let t = Self { alpha_deg, fx, fy, tx, ty, inverse: false };
        t.validate()?;
        Ok(t)
    }

    pub fn identity() -> Self {
        Self { alpha_deg: 0.0, fx: 1.0, fy: 1.0, tx: 0.0, ty: 0.0, inverse: false }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self { tx, ty, ..Self::identity() }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let all = [self.alpha_deg, self.fx, self.fy, self.tx, self.ty];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(GeometryError::NonPositiveScale { fx: self.fx, fy: self.fy });
        }
        Ok(())
    }

    /// `T · S · R` for the stored parameters, ignoring the inverse flag.
    pub fn forward_matrix(&self) -> Mat3 {
        let (s, c) = self.alpha_deg.to_radians().sin_cos();
        [
            [self.fx * c, -self.fx * s, self.tx],
            [self.fy * s, self.fy * c, self.ty],
            [0.0, 0.0, 1.0],
        ]
    }

    pub fn matrix(&self) -> Mat3 {
        let m = self.forward_matrix();
        if self.inverse {
            affine_inverse(&m).expect("positive scales give an invertible matrix")
        } else {
            m
        }
    }

    pub fn invert(&self) -> Self {
        if self.fx == self.fy && !self.inverse {
            // Isotropic case: the inverse stays in canonical form.
            let f = 1.0 / self.fx;
            let (s, c) = self.alpha_deg.to_radians().sin_cos();
            let tx = -f * (c * self.tx + s * self.ty);
            let ty = -f * (-s * self.tx + c * self.ty);
            let alpha_deg = normalize_degrees(-self.alpha_deg);
            return Self { alpha_deg, fx: f, fy: f, tx, ty, inverse: false };
        }
        Self { inverse: !self.inverse, ..*self }
    }

    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let m = self.matrix();
        (m[0][0] * x + m[0][1] * y + m[0][2], m[1][0] * x + m[1][1] * y + m[1][2])
    }

    /// Recovers parameters from an affine matrix whose linear part is
    /// `S · R` (rows orthogonal) or `(S · R)^{-1}` (columns orthogonal).
    pub fn from_matrix(m: &Mat3) -> Result<Self, GeometryError> {
        if let Some(t) = decompose_forward(m) {
            return Ok(t);
        }
        let inv = affine_inverse(m).ok_or(GeometryError::NotSimilarity)?;
        let t = decompose_forward(&inv).ok_or(GeometryError::NotSimilarity)?;
        Ok(Self { inverse: true, ..t })
    }

    /// The transform applying `inner` first and `outer` second.
    pub fn compose(outer: &Self, inner: &Self) -> Result<Self, GeometryError> {
        Self::from_matrix(&mat_mul(&outer.matrix(), &inner.matrix()))
    }

    /// Rotation angle and axis scales describing the deformation, independent
    /// of the inverse flag.
    pub fn deformation(&self) -> (f64, f64, f64) {
        (self.alpha_deg, self.fx, self.fy)
    }

    /// True iff `|alpha| <= 15`, `|fx - 1| <= 0.1` and `|fy - 1| <= 0.1`.
    pub fn is_near_rigid(&self) -> bool {
        self.is_near_rigid_within(NEAR_RIGID_MAX_ANGLE, NEAR_RIGID_MAX_SCALE_DEVIATION)
    }

    pub fn is_near_rigid_within(&self, max_angle: f64, max_scale_deviation: f64) -> bool {
        let (a, fx, fy) = self.deformation();
        normalize_degrees(a).abs() <= max_angle + THRESHOLD_SLACK
            && (fx - 1.0).abs() <= max_scale_deviation + THRESHOLD_SLACK
            && (fy - 1.0).abs() <= max_scale_deviation + THRESHOLD_SLACK
    }

    pub fn is_pure_translation(&self) -> bool {
        self.alpha_deg == 0.0 && self.fx == 1.0 && self.fy == 1.0
    }

    /// Shifts the angle by a uniform integer draw in `[-5, 5]` degrees and each
    /// scale by an independent uniform draw in `{-0.10, ..., 0.10}`.
    pub fn perturb<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Self, GeometryError> {
        self.perturb_within(rng, 5, 10)
    }

    /// Perturbation with custom half-widths: `alpha_steps` in degrees and
    /// `scale_steps` in hundredths. Zero widths leave the transform unchanged.
    pub fn perturb_within<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        alpha_steps: i32,
        scale_steps: i32,
    ) -> Result<Self, GeometryError> {
        let da = rng.gen_range(-alpha_steps..=alpha_steps);
        let dfx = rng.gen_range(-scale_steps..=scale_steps);
        let dfy = rng.gen_range(-scale_steps..=scale_steps);
        let t = Self {
            alpha_deg: normalize_degrees(self.alpha_deg + f64::from(da)),
            fx: shift_hundredths(self.fx, dfx),
            fy: shift_hundredths(self.fy, dfy),
            ..*self
        };
        t.validate()?;
        Ok(t)
    }
}

/// Adds `steps / 100`, staying on the hundredths grid when the input is on it.
fn shift_hundredths(v: f64, steps: i32) -> f64 {
    if steps == 0 {
        return v;
    }
    let h = (v * 100.0).round();
    if (v * 100.0 - h).abs() < 1e-9 {
        (h + f64::from(steps)) / 100.0
    } else {
        v + f64::from(steps) / 100.0
    }
}

fn decompose_forward(m: &Mat3) -> Option<SimilarityTransform> {
    let r1 = (m[0][0], m[0][1]);
    let r2 = (m[1][0], m[1][1]);
    let fx = r1.0.hypot(r1.1);
    let fy = r2.0.hypot(r2.1);
    if !(fx > 0.0 && fy > 0.0) || !fx.is_finite() || !fy.is_finite() {
        return None;
    }
    let (c1, s1) = (r1.0 / fx, -r1.1 / fx);
    let (s2, c2) = (r2.0 / fy, r2.1 / fy);
    // Both rows must describe the same rotation.
    if (c1 - c2).abs() > 1e-9 || (s1 - s2).abs() > 1e-9 {
        return None;
    }
    let alpha = normalize_degrees((s1 + s2).atan2(c1 + c2).to_degrees());
    Some(SimilarityTransform { alpha_deg: alpha, fx, fy, tx: m[0][2], ty: m[1][2], inverse: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_transform(rng: &mut ChaCha8Rng) -> SimilarityTransform {
        SimilarityTransform::new(
            rng.gen_range(-180.0..180.0),
            rng.gen_range(0.5..2.0),
            rng.gen_range(0.5..2.0),
            rng.gen_range(-500.0..500.0),
            rng.gen_range(-500.0..500.0),
        )
        .unwrap()
    }

    #[test]
    fn identity_and_quarter_turn_matrices() {
        assert_eq!(SimilarityTransform::identity().matrix(), IDENTITY3);
        let m = SimilarityTransform::new(90.0, 1.0, 1.0, 0.0, 0.0).unwrap().matrix();
        let expected = [[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(mat_max_diff(&m, &expected) < 1e-15);
    }

    #[test]
    fn matrix_is_translation_scale_rotation_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let t = random_transform(&mut rng);
            let (s, c) = t.alpha_deg.to_radians().sin_cos();
            let tm = [[1.0, 0.0, t.tx], [0.0, 1.0, t.ty], [0.0, 0.0, 1.0]];
            let sm = [[t.fx, 0.0, 0.0], [0.0, t.fy, 0.0], [0.0, 0.0, 1.0]];
            let rm = [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]];
            let prod = mat_mul(&tm, &mat_mul(&sm, &rm));
            assert!(mat_max_diff(&prod, &t.matrix()) < 1e-12);
        }
    }

    #[test]
    fn inversion_algebra_on_random_transforms() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10_000 {
            let t = random_transform(&mut rng);
            let inv = t.invert();
            assert!(mat_max_diff(&mat_mul(&t.matrix(), &inv.matrix()), &IDENTITY3) < 1e-9);
            assert!(mat_max_diff(&mat_mul(&inv.matrix(), &t.matrix()), &IDENTITY3) < 1e-9);
            let back = inv.invert();
            assert!((back.alpha_deg - t.alpha_deg).abs() < 1e-9);
            assert!((back.fx - t.fx).abs() < 1e-9 && (back.fy - t.fy).abs() < 1e-9);
            assert!((back.tx - t.tx).abs() < 1e-9 && (back.ty - t.ty).abs() < 1e-9);
            assert_eq!(back.inverse, t.inverse);
        }
    }

    #[test]
    fn inverse_of_translation_and_identity() {
        assert_eq!(SimilarityTransform::identity().invert(), SimilarityTransform::identity());
        let inv = SimilarityTransform::translation(10.0, 20.0).invert();
        assert_eq!(inv, SimilarityTransform::translation(-10.0, -20.0));
    }

    #[test]
    fn from_matrix_recovers_both_forms() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let t = random_transform(&mut rng);
            let back = SimilarityTransform::from_matrix(&t.matrix()).unwrap();
            assert!(mat_max_diff(&back.matrix(), &t.matrix()) < 1e-9);
            let inv = t.invert();
            let back = SimilarityTransform::from_matrix(&inv.matrix()).unwrap();
            assert!(mat_max_diff(&back.matrix(), &inv.matrix()) < 1e-9);
        }
        let shear = [[1.0, 0.5, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(SimilarityTransform::from_matrix(&shear).is_err());
    }

    #[test]
    fn near_rigid_thresholds() {
        let id = SimilarityTransform::identity();
        assert!(id.is_near_rigid());
        assert!(!SimilarityTransform { alpha_deg: 20.0, ..id }.is_near_rigid());
        assert!(SimilarityTransform { fx: 1.1, ..id }.is_near_rigid());
        assert!(SimilarityTransform { fy: 0.9, ..id }.is_near_rigid());
        assert!(!SimilarityTransform { fx: 1.11, ..id }.is_near_rigid());
        assert!(SimilarityTransform { alpha_deg: -15.0, ..id }.is_near_rigid());
        assert!(!SimilarityTransform { alpha_deg: 180.0, ..id }.is_near_rigid());
    }

    #[test]
    fn perturb_zero_width_is_identity() {
        let t = SimilarityTransform::new(2.0, 1.5, 0.8, 3.0, 4.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert_eq!(t.perturb_within(&mut rng, 0, 0).unwrap(), t);
    }

    #[test]
    fn perturb_stays_on_grid() {
        let t = SimilarityTransform::new(2.0, 0.5, 1.37, 0.0, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let p = t.perturb(&mut rng).unwrap();
            assert_eq!(p.alpha_deg.fract(), 0.0);
            assert!((-3.0..=7.0).contains(&p.alpha_deg));
            for v in [p.fx, p.fy] {
                let h = v * 100.0;
                assert!((h - h.round()).abs() < 1e-9);
            }
            assert!((0.4 - 1e-12..=0.6 + 1e-12).contains(&p.fx));
            assert_eq!((p.tx, p.ty), (0.0, 0.0));
        }
        let tiny = SimilarityTransform::new(0.0, 0.05, 1.0, 0.0, 0.0).unwrap();
        let mut hit_error = false;
        for _ in 0..200 {
            hit_error |= tiny.perturb(&mut rng).is_err();
        }
        assert!(hit_error);
    }

    #[test]
    fn alpha_arithmetic_example() {
        struct Fixed(Vec<u64>);
        impl rand::RngCore for Fixed {
            fn next_u32(&mut self) -> u32 {
                self.next_u64() as u32
            }
            fn next_u64(&mut self) -> u64 {
                self.0.remove(0)
            }
            fn fill_bytes(&mut self, d: &mut [u8]) {
                d.fill(0)
            }
            fn try_fill_bytes(&mut self, d: &mut [u8]) -> Result<(), rand::Error> {
                d.fill(0);
                Ok(())
            }
        }
        // A zero draw maps to the lowest value of each integer range.
        let t = SimilarityTransform::new(2.0, 1.0, 1.0, 0.0, 0.0).unwrap();
        let p = t.perturb(&mut Fixed(vec![0; 16])).unwrap();
        assert_eq!(p.alpha_deg, -3.0);
        assert_eq!(p.fx, 0.9);
    }

    #[test]
    fn serde_omits_inverse_flag_when_false() {
        let t = SimilarityTransform::new(10.0, 1.5, 0.8, 1.0, 2.0).unwrap();
        let s = serde_json::to_string(&t).unwrap();
        assert!(!s.contains("inverse"));
        assert_eq!(serde_json::from_str::<SimilarityTransform>(&s).unwrap(), t);
        let inv = t.invert();
        let s = serde_json::to_string(&inv).unwrap();
        assert_eq!(serde_json::from_str::<SimilarityTransform>(&s).unwrap(), inv);
    }
}
