use crate::{Error, Result};

/// Smooth radial projection `ρ_N` onto the ball of radius `N`.
///
/// `ρ_N(z) = z · φ(|z|)/|z|` with the radial profile
///
/// ```text
/// φ(r) = r                              r ≤ N − 1
/// φ(r) = N − 1 + 2(u − u³ + u⁴/2)       u = (r − N + 1)/2 ∈ [0, 1]
/// φ(r) = N                              r ≥ N + 1
/// ```
///
/// so `φ′ = 1 − smoothstep(u) ∈ [0, 1]` and `φ(r) ≤ r`. The Jacobian has
/// radial eigenvalue `φ′` and tangential eigenvalue `φ(r)/r`, both in
/// `[0, 1]`, which makes the map 1-Lipschitz and C².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truncation {
    level: f64,
}

impl Truncation {
    pub fn new(level: f64) -> Result<Self> {
        if !(level.is_finite() && level > 1.0) {
            return Err(Error::invalid(format!("truncation level must exceed 1, got {level}")));
        }
        Ok(Self { level })
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    /// `|ρ_N(z)|` as a function of `|z|`.
    pub fn radius(&self, r: f64) -> f64 {
        let inner = self.level - 1.0;
        if r <= inner {
            return r;
        }
        let u = ((r - inner) / 2.0).min(1.0);
        inner + 2.0 * (u - u * u * u + 0.5 * u * u * u * u)
    }

    pub fn apply(&self, z: &[f64], out: &mut [f64]) {
        let r = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        if r <= self.level - 1.0 {
            out.copy_from_slice(z);
            return;
        }
        let s = self.radius(r) / r;
        for (o, v) in out.iter_mut().zip(z) {
            *o = v * s;
        }
    }

    pub fn truncate(&self, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; z.len()];
        self.apply(z, &mut out);
        out
    }
}

/// `ρ_N(z)`.
pub fn truncate_z(trunc: &Truncation, z: &[f64]) -> Vec<f64> {
    trunc.truncate(z)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn norm(z: &[f64]) -> f64 {
        z.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    #[test]
    fn identity_inside_inner_ball() {
        let t = Truncation::new(2.0).unwrap();
        let z = [0.6, 0.8];
        assert_eq!(t.truncate(&z), z.to_vec());
        assert_eq!(t.truncate(&[0.0, 0.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn saturates_at_level() {
        let t = Truncation::new(2.0).unwrap();
        let out = t.truncate(&[6.0, 8.0]);
        assert!(norm(&out) <= 2.0);
        assert_eq!(t.radius(3.0), 2.0);
        assert!(Truncation::new(1.0).is_err());
    }

    #[test]
    fn profile_is_c1() {
        let t = Truncation::new(5.0).unwrap();
        let h = 1e-6;
        for r in [4.0, 6.0] {
            let left = (t.radius(r) - t.radius(r - h)) / h;
            let right = (t.radius(r + h) - t.radius(r)) / h;
            assert!((left - right).abs() < 1e-4, "kink at {r}");
        }
    }

    #[test]
    fn random_point_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let level = rng.random_range(1.5..20.0);
            let t = Truncation::new(level).unwrap();
            let d = rng.random_range(1..4);
            let scale = rng.random_range(0.0..3.0 * level);
            let z: Vec<f64> = (0..d).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
            let w: Vec<f64> = z.iter().map(|v| v + rng.random_range(-2.0..2.0)).collect();
            let (tz, tw) = (t.truncate(&z), t.truncate(&w));
            assert!(norm(&tz) <= level + 1e-12);
            let diff: Vec<f64> = tz.iter().zip(&tw).map(|(a, b)| a - b).collect();
            let dist: Vec<f64> = z.iter().zip(&w).map(|(a, b)| a - b).collect();
            assert!(norm(&diff) <= norm(&dist) * (1.0 + 1e-12) + 1e-15);
            if norm(&z) <= level - 1.0 {
                assert_eq!(tz, z);
            }
        }
    }

    proptest! {
        #[test]
        fn one_lipschitz(level in 1.1f64..50.0, a in -100.0f64..100.0, b in -100.0f64..100.0,
                         c in -100.0f64..100.0, e in -100.0f64..100.0) {
            let t = Truncation::new(level).unwrap();
            let (x, y) = ([a, b], [c, e]);
            let (tx, ty) = (t.truncate(&x), t.truncate(&y));
            let lhs = ((tx[0] - ty[0]).powi(2) + (tx[1] - ty[1]).powi(2)).sqrt();
            let rhs = ((a - c).powi(2) + (b - e).powi(2)).sqrt();
            prop_assert!(lhs <= rhs * (1.0 + 1e-12) + 1e-12);
            prop_assert!(norm(&tx) <= level + 1e-12);
        }
    }
}
