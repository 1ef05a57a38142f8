//! Seeded, splittable random streams and the few discrete samplers the
//! protocols need.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

/// Master seed for one random stream. Child streams derived with
/// [`RngSeed::derive`] are independent of each other and of scheduling order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RngSeed(pub u64);

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngSeed {
    pub fn derive(self, tag: u64) -> RngSeed {
        RngSeed(splitmix64(self.0 ^ splitmix64(tag.wrapping_add(0x5851_F42D_4C95_7F2D))))
    }

    /// Shorthand for a two-level derivation, e.g. `(step, basis)`.
    pub fn derive2(self, a: u64, b: u64) -> RngSeed {
        self.derive(a).derive(b)
    }

    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

impl From<u64> for RngSeed {
    fn from(s: u64) -> Self {
        RngSeed(s)
    }
}

pub fn binomial<R: Rng + ?Sized>(rng: &mut R, trials: u64, p: f64) -> u64 {
    if trials == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return trials;
    }
    Binomial::new(trials, p)
        .expect("probability in [0, 1]")
        .sample(rng)
}

/// Multinomial counts via sequential conditional binomials. `probs` need not
/// be normalized; any leftover mass is an implicit extra category whose
/// count is the remainder.
pub fn multinomial<R: Rng + ?Sized>(rng: &mut R, trials: u64, probs: &[f64]) -> Vec<u64> {
    let mut counts = Vec::with_capacity(probs.len());
    let mut left = trials;
    let mut mass = 1.0_f64;
    for &p in probs {
        let p = p.max(0.0);
        if left == 0 || mass <= 0.0 {
            counts.push(0);
            continue;
        }
        let k = binomial(rng, left, (p / mass).min(1.0));
        counts.push(k);
        left -= k;
        mass -= p;
    }
    counts
}

/// Draw one category index from (unnormalized, non-negative) weights;
/// returns `probs.len()` for the implicit remainder category.
pub fn categorical<R: Rng + ?Sized>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p.max(0.0);
        if u < acc {
            return i;
        }
    }
    probs.len()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_streams_are_deterministic_and_distinct() {
        let s = RngSeed(7);
        assert_eq!(s.derive(3), s.derive(3));
        assert_ne!(s.derive(3), s.derive(4));
        assert_ne!(s.derive2(1, 2), s.derive2(2, 1));
        let a: u64 = s.derive(1).rng().random();
        let b: u64 = s.derive(1).rng().random();
        assert_eq!(a, b);
    }

    #[test]
    fn multinomial_conserves_trials() {
        let mut rng = RngSeed(1).rng();
        let c = multinomial(&mut rng, 10_000, &[0.2, 0.3, 0.1]);
        assert!(c.iter().sum::<u64>() <= 10_000);
        let c = multinomial(&mut rng, 10_000, &[0.5, 0.5]);
        assert_eq!(c.iter().sum::<u64>(), 10_000);
    }

    #[test]
    fn degenerate_probabilities() {
        let mut rng = RngSeed(2).rng();
        assert_eq!(binomial(&mut rng, 50, 1.0), 50);
        assert_eq!(binomial(&mut rng, 50, 0.0), 0);
        assert_eq!(multinomial(&mut rng, 9, &[0.0, 1.0]), vec![0, 9]);
    }
}
