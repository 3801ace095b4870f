//! Reproducible ambiguous/disambiguating partitions and injection bookkeeping.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grammar::AgreementLabel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSizes {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

impl Default for SplitSizes {
    fn default() -> Self {
        SplitSizes {
            train: 15_000,
            validation: 1_000,
            test: 5_000,
        }
    }
}

/// Membership lists (dataset ordinals) for every split.
///
/// `injection_pool` holds the disambiguating items not used for testing, in
/// seeded order; a run at rate `r` injects its first `round(r × |train|)`
/// entries, so injected sets are nested across rates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub seed: u64,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
    pub injection_pool: Vec<usize>,
}

/// `round(rate × n)` with halves rounded up.
pub fn injected_count(rate: f64, n: usize) -> usize {
    // epsilon keeps exact halves such as 0.0001 × 15000 from rounding down
    (rate * n as f64 + 0.5 + 1e-9).floor() as usize
}

pub fn plan_splits(labels: &[AgreementLabel], seed: u64, sizes: SplitSizes) -> Result<SplitPlan> {
    let mut ambiguous: Vec<usize> = Vec::new();
    let mut disambiguating: Vec<usize> = Vec::new();
    for (i, l) in labels.iter().enumerate() {
        match l {
            AgreementLabel::Ambiguous => ambiguous.push(i),
            AgreementLabel::Disambiguating => disambiguating.push(i),
        }
    }
    if sizes.train + sizes.validation > ambiguous.len() {
        return Err(Error::Partition(format!(
            "train {} + validation {} exceeds the {} ambiguous items",
            sizes.train,
            sizes.validation,
            ambiguous.len()
        )));
    }
    if sizes.test > disambiguating.len() {
        return Err(Error::Partition(format!(
            "test {} exceeds the {} disambiguating items",
            sizes.test,
            disambiguating.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ambiguous.shuffle(&mut rng);
    disambiguating.shuffle(&mut rng);
    let validation = ambiguous[sizes.train..sizes.train + sizes.validation].to_vec();
    ambiguous.truncate(sizes.train);
    let injection_pool = disambiguating.split_off(sizes.test);
    Ok(SplitPlan {
        seed,
        train: ambiguous,
        validation,
        test: disambiguating,
        injection_pool,
    })
}

impl SplitPlan {
    /// Training base (optionally truncated to `train_size`) followed by the
    /// injected items; returns the list and the injected count.
    pub fn training_members(&self, rate: f64, train_size: Option<usize>) -> Result<(Vec<usize>, usize)> {
        if !(0.0..=1.0).contains(&rate) {
            return Err(Error::Config(format!("injection rate {rate} outside [0, 1]")));
        }
        let n = train_size.unwrap_or(self.train.len());
        if n > self.train.len() {
            return Err(Error::Partition(format!(
                "train size {n} exceeds the {} item training base",
                self.train.len()
            )));
        }
        let k = injected_count(rate, n);
        if k > self.injection_pool.len() {
            return Err(Error::Partition(format!(
                "rate {rate} needs {k} injected items but the pool holds {}",
                self.injection_pool.len()
            )));
        }
        let mut members = self.train[..n].to_vec();
        members.extend_from_slice(&self.injection_pool[..k]);
        Ok((members, k))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding() {
        assert_eq!(injected_count(0.01, 15_000), 150);
        assert_eq!(injected_count(0.005, 15_000), 75);
        assert_eq!(injected_count(0.001, 15_000), 15);
        assert_eq!(injected_count(0.001, 10_000), 10);
        assert_eq!(injected_count(0.0, 15_000), 0);
        assert_eq!(injected_count(0.5, 3), 2);
        assert_eq!(injected_count(0.1, 4), 0);
    }

    fn labels(amb: usize, dis: usize) -> Vec<AgreementLabel> {
        let mut v = vec![AgreementLabel::Ambiguous; amb];
        v.extend(vec![AgreementLabel::Disambiguating; dis]);
        v
    }

    #[test]
    fn plan_is_disjoint_and_seeded() {
        let l = labels(100, 60);
        let sizes = SplitSizes { train: 70, validation: 20, test: 30 };
        let p = plan_splits(&l, 7, sizes).unwrap();
        assert_eq!(p, plan_splits(&l, 7, sizes).unwrap());
        assert_ne!(p, plan_splits(&l, 8, sizes).unwrap());
        let mut all: Vec<usize> = [&p.train, &p.validation, &p.test, &p.injection_pool]
            .iter()
            .flat_map(|v| v.iter().copied())
            .collect();
        let n = all.len();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), n);
        assert!(p.train.iter().chain(&p.validation).all(|&i| i < 100));
        assert!(p.test.iter().chain(&p.injection_pool).all(|&i| i >= 100));
        assert_eq!(p.injection_pool.len(), 30);
    }

    #[test]
    fn oversize_requests_fail() {
        let l = labels(10, 5);
        let e = plan_splits(&l, 0, SplitSizes { train: 9, validation: 2, test: 1 });
        assert!(matches!(e, Err(Error::Partition(_))));
        let e = plan_splits(&l, 0, SplitSizes { train: 1, validation: 1, test: 6 });
        assert!(matches!(e, Err(Error::Partition(_))));
    }

    #[test]
    fn injected_sets_are_nested() {
        let l = labels(2000, 500);
        let p = plan_splits(&l, 1, SplitSizes { train: 1000, validation: 100, test: 100 }).unwrap();
        let (small, k1) = p.training_members(0.01, None).unwrap();
        let (big, k2) = p.training_members(0.05, None).unwrap();
        assert_eq!((k1, k2), (10, 50));
        assert_eq!(small[..], big[..small.len()]);
        let (none, k0) = p.training_members(0.0, Some(500)).unwrap();
        assert_eq!((none.len(), k0), (500, 0));
        assert!(p.training_members(0.5, None).is_err());
    }
}
