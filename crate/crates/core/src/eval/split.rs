use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Views and lights withheld from training.
///
/// Training uses every remaining view under every remaining light; the test
/// set is every held-out view under every held-out light.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub held_out_views: Vec<usize>,
    pub held_out_lights: Vec<usize>,
    pub seed: u64,
}

impl SplitSpec {
    /// Draws `k_views` of `n_views` and `k_lights` of `n_lights` with a seeded RNG.
    pub fn random(n_views: usize, n_lights: usize, k_views: usize, k_lights: usize, seed: u64) -> Result<Self> {
        if k_views >= n_views || k_lights >= n_lights {
            return Err(Error::domain(format!(
                "cannot hold out {k_views}/{n_views} views and {k_lights}/{n_lights} lights and still train"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut views = sample(&mut rng, n_views, k_views).into_vec();
        let mut lights = sample(&mut rng, n_lights, k_lights).into_vec();
        views.sort_unstable();
        lights.sort_unstable();
        let s = Self {
            held_out_views: views,
            held_out_lights: lights,
            seed,
        };
        s.validate(n_views, n_lights)?;
        Ok(s)
    }

    pub fn validate(&self, n_views: usize, n_lights: usize) -> Result<()> {
        let check = |ids: &[usize], n: usize, what: &str| -> Result<()> {
            let mut sorted = ids.to_vec();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != ids.len() {
                return Err(Error::domain(format!("duplicate held-out {what} id")));
            }
            if let Some(bad) = ids.iter().find(|&&i| i >= n) {
                return Err(Error::domain(format!("held-out {what} {bad} does not exist ({n} available)")));
            }
            if ids.len() >= n {
                return Err(Error::domain(format!("no {what}s left for training")));
            }
            Ok(())
        };
        check(&self.held_out_views, n_views, "view")?;
        check(&self.held_out_lights, n_lights, "light")
    }

    pub fn training_views(&self, n_views: usize) -> Vec<usize> {
        (0..n_views).filter(|v| !self.held_out_views.contains(v)).collect()
    }

    pub fn training_lights(&self, n_lights: usize) -> Vec<usize> {
        (0..n_lights).filter(|l| !self.held_out_lights.contains(l)).collect()
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| {
            Error::parse(
                path,
                format!("line {} column {}: {e}", e.line(), e.column()),
            )
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("split serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_split_is_seeded_and_disjoint() {
        let a = SplitSpec::random(9, 16, 1, 3, 42).unwrap();
        assert_eq!(a, SplitSpec::random(9, 16, 1, 3, 42).unwrap());
        assert_eq!(a.held_out_views.len(), 1);
        assert_eq!(a.held_out_lights.len(), 3);
        let train = a.training_lights(16);
        assert_eq!(train.len(), 13);
        assert!(train.iter().all(|l| !a.held_out_lights.contains(l)));
    }

    #[test]
    fn invalid_splits_are_rejected() {
        assert!(SplitSpec::random(2, 4, 2, 1, 0).is_err());
        let s = SplitSpec {
            held_out_views: vec![1, 1],
            held_out_lights: vec![0],
            seed: 0,
        };
        assert!(s.validate(4, 4).is_err());
        let s = SplitSpec {
            held_out_views: vec![7],
            held_out_lights: vec![0],
            seed: 0,
        };
        assert!(s.validate(4, 4).is_err());
    }
}
