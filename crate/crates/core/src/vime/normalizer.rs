use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::numerics::linalg::median;

/// Divides raw KLs by the average of recent per-trajectory medians.
#[derive(Debug, Clone, PartialEq)]
pub struct KlNormalizer {
    window: VecDeque<f64>,
    window_length: usize,
    floor: f64,
}

impl KlNormalizer {
    pub fn new(window_length: usize, floor: f64) -> Result<Self> {
        if window_length == 0 {
            return Err(Error::InvalidArgument("window_length must be positive".into()));
        }
        if !(floor > 0.0) {
            return Err(Error::InvalidArgument(format!("floor must be positive, got {floor}")));
        }
        Ok(Self {
            window: VecDeque::with_capacity(window_length),
            window_length,
            floor,
        })
    }

    pub fn window(&self) -> Vec<f64> {
        self.window.iter().copied().collect()
    }

    /// 1 with no history, otherwise `max(mean(window), floor)`.
    pub fn divisor(&self) -> f64 {
        if self.window.is_empty() {
            return 1.0;
        }
        let avg = self.window.iter().sum::<f64>() / self.window.len() as f64;
        avg.max(self.floor)
    }

    /// Scales one trajectory's raw KLs by the current divisor, then records
    /// their median.
    pub fn normalize(&mut self, raw: &[f64]) -> Vec<f64> {
        let d = self.divisor();
        let out = raw.iter().map(|k| k / d).collect();
        if !raw.is_empty() {
            if self.window.len() == self.window_length {
                self.window.pop_front();
            }
            self.window.push_back(median(raw));
        }
        out
    }
}

impl Default for KlNormalizer {
    fn default() -> Self {
        Self::new(10, 1e-8).expect("valid defaults")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bootstrap_divisor_is_one() {
        let mut n = KlNormalizer::default();
        assert_eq!(n.normalize(&[2.0, 4.0]), vec![2.0, 4.0]);
        assert_eq!(n.window(), vec![3.0]);
    }

    #[test]
    fn divides_by_window_average() {
        let mut n = KlNormalizer::default();
        n.normalize(&[2.0]);
        n.normalize(&[4.0]);
        assert_eq!(n.normalize(&[3.0]), vec![1.0]);
    }

    #[test]
    fn zero_kls_hit_the_floor() {
        let mut n = KlNormalizer::default();
        n.normalize(&[0.0, 0.0]);
        assert_eq!(n.divisor(), 1e-8);
        assert_eq!(n.normalize(&[0.0, 0.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn window_drops_old_medians() {
        let mut n = KlNormalizer::new(2, 1e-8).unwrap();
        for m in [1.0, 2.0, 3.0] {
            n.normalize(&[m]);
        }
        assert_eq!(n.window(), vec![2.0, 3.0]);
    }

    proptest! {
        #[test]
        fn normalizer_follows_the_window_rules(
            trajs in prop::collection::vec(prop::collection::vec(0.0f64..10.0, 1..8), 1..25),
            window_length in 1usize..6,
        ) {
            let mut n = KlNormalizer::new(window_length, 1e-8).unwrap();
            let mut history: Vec<f64> = Vec::new();
            for raw in &trajs {
                let recent = &history[history.len().saturating_sub(window_length)..];
                let expected_div = if recent.is_empty() {
                    1.0
                } else {
                    (recent.iter().sum::<f64>() / recent.len() as f64).max(1e-8)
                };
                prop_assert!(n.divisor() > 0.0);
                prop_assert_eq!(n.divisor(), expected_div);
                let out = n.normalize(raw);
                for (o, r) in out.iter().zip(raw) {
                    prop_assert_eq!(*o, r / expected_div);
                }
                history.push(median(raw));
                prop_assert_eq!(n.window(), history[history.len().saturating_sub(window_length)..].to_vec());
            }
        }
    }
}
