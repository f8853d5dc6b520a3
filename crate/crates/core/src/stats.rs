//! Small numeric helpers shared across modules.

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

/// The generator behind every seeded operation in the crate.
///
/// xoshiro256++ seeded through SplitMix64 (`seed_from_u64`), which is fully
/// specified and platform independent.
pub type SeededRng = Xoshiro256PlusPlus;

pub fn seeded_rng(seed: u64) -> SeededRng {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

/// Two independent standard normal draws via the Box–Muller transform.
pub fn box_muller<R: Rng + ?Sized>(rng: &mut R) -> (f64, f64) {
    // u1 in (0, 1] so the log is finite.
    let u1 = 1.0 - rng.random::<f64>();
    let u2 = rng.random::<f64>();
    let radius = (-2.0 * u1.ln()).sqrt();
    let angle = 2.0 * std::f64::consts::PI * u2;
    (radius * angle.cos(), radius * angle.sin())
}

/// Linear-interpolation quantile (Hyndman–Fan type 7) of already sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty slice");
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile_sorted(&sorted, q)
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population standard deviation (divisor n).
pub fn std_population(values: &[f64]) -> f64 {
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / values.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_matches_hand_interpolation() {
        let v: Vec<f64> = (1..=8).map(f64::from).collect();
        // h = 7 * 0.75 = 5.25 -> 6 + 0.25 * (7 - 6)
        assert_eq!(quantile(&v, 0.75), 6.25);
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 8.0);
        assert_eq!(quantile(&[3.0], 0.5), 3.0);
    }

    #[test]
    fn box_muller_is_seed_deterministic() {
        let mut a = seeded_rng(9);
        let mut b = seeded_rng(9);
        for _ in 0..10 {
            assert_eq!(box_muller(&mut a), box_muller(&mut b));
        }
    }

    #[test]
    fn box_muller_moments() {
        let mut rng = seeded_rng(1);
        let draws: Vec<f64> = (0..50_000)
            .flat_map(|_| {
                let (a, b) = box_muller(&mut rng);
                [a, b]
            })
            .collect();
        assert!(mean(&draws).abs() < 0.02);
        assert!((std_population(&draws) - 1.0).abs() < 0.02);
    }
}
