use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subset {
    Train,
    Val,
    Test,
}

impl Subset {
    pub fn as_str(&self) -> &'static str {
        match self {
            Subset::Train => "train",
            Subset::Val => "val",
            Subset::Test => "test",
        }
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train_ids: Vec<String>,
    pub val_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

impl DatasetSplit {
    pub fn subset_of(&self, id: &str) -> Option<Subset> {
        if self.train_ids.iter().any(|x| x == id) {
            Some(Subset::Train)
        } else if self.val_ids.iter().any(|x| x == id) {
            Some(Subset::Val)
        } else if self.test_ids.iter().any(|x| x == id) {
            Some(Subset::Test)
        } else {
            None
        }
    }

    pub fn ids(&self, subset: Subset) -> &[String] {
        match subset {
            Subset::Train => &self.train_ids,
            Subset::Val => &self.val_ids,
            Subset::Test => &self.test_ids,
        }
    }

    pub fn all_ids(&self) -> impl Iterator<Item = &String> {
        self.train_ids
            .iter()
            .chain(&self.val_ids)
            .chain(&self.test_ids)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl FoldSizes {
    pub fn new(train: usize, val: usize, test: usize) -> Self {
        Self { train, val, test }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub folds: Vec<DatasetSplit>,
    pub seed: u64,
}

/// Shuffles `ids` once with `seed` and tiles the test blocks contiguously
/// over the shuffled order. For fold `f`, validation and training ids are
/// taken, in that order, from the ids that follow the test block
/// (wrapping around). Ids beyond `train + val + test` stay unused.
pub fn make_folds(ids: &[String], n_folds: usize, sizes: FoldSizes, seed: u64) -> Result<FoldPlan> {
    let n = ids.len();
    if n_folds == 0 {
        return Err(Error::InfeasibleFolds("at least one fold is required".into()));
    }
    if n_folds * sizes.test > n {
        return Err(Error::InfeasibleFolds(format!(
            "{n_folds} folds x {} test ids > {n} ids",
            sizes.test
        )));
    }
    if sizes.train + sizes.val + sizes.test > n {
        return Err(Error::InfeasibleFolds(format!(
            "train + val + test = {} > {n} ids",
            sizes.train + sizes.val + sizes.test
        )));
    }
    let mut unique = ids.to_vec();
    unique.sort();
    unique.dedup();
    if unique.len() != n {
        return Err(Error::InfeasibleFolds("patient ids are not unique".into()));
    }

    let mut order = ids.to_vec();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let folds = (0..n_folds)
        .map(|f| {
            let start = f * sizes.test;
            let test_ids = order[start..start + sizes.test].to_vec();
            let rest: Vec<String> = (0..n - sizes.test)
                .map(|i| order[(start + sizes.test + i) % n].clone())
                .collect();
            DatasetSplit {
                val_ids: rest[..sizes.val].to_vec(),
                train_ids: rest[sizes.val..sizes.val + sizes.train].to_vec(),
                test_ids,
            }
        })
        .collect();
    Ok(FoldPlan { folds, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("p{i:03}")).collect()
    }

    fn disjoint(split: &DatasetSplit) -> bool {
        let all: Vec<_> = split.all_ids().collect();
        all.iter().collect::<HashSet<_>>().len() == all.len()
    }

    #[test]
    fn plan_for_285_patients() {
        let all = ids(285);
        let plan = make_folds(&all, 7, FoldSizes::new(205, 40, 40), 2018).unwrap();
        assert_eq!(plan.folds.len(), 7);
        let mut tests = HashSet::new();
        for split in &plan.folds {
            assert_eq!(
                (split.train_ids.len(), split.val_ids.len(), split.test_ids.len()),
                (205, 40, 40)
            );
            assert!(disjoint(split));
            let union: HashSet<_> = split.all_ids().cloned().collect();
            assert_eq!(union, all.iter().cloned().collect());
            for t in &split.test_ids {
                assert!(tests.insert(t.clone()), "test id {t} reused across folds");
            }
        }
        assert_eq!(tests.len(), 280);
    }

    #[test]
    fn three_way_rotation() {
        let all = ids(3);
        let plan = make_folds(&all, 3, FoldSizes::new(1, 1, 1), 5).unwrap();
        let first = &plan.folds[0];
        let perm = [
            first.test_ids[0].clone(),
            first.val_ids[0].clone(),
            first.train_ids[0].clone(),
        ];
        for (f, split) in plan.folds.iter().enumerate() {
            assert_eq!(split.test_ids[0], perm[f]);
            assert_eq!(split.val_ids[0], perm[(f + 1) % 3]);
            assert_eq!(split.train_ids[0], perm[(f + 2) % 3]);
        }
    }

    #[test]
    fn infeasible_sizes() {
        assert!(matches!(
            make_folds(&ids(5), 3, FoldSizes::new(2, 1, 2), 0),
            Err(Error::InfeasibleFolds(_))
        ));
        assert!(make_folds(&ids(5), 1, FoldSizes::new(4, 1, 1), 0).is_err());
        assert!(make_folds(&ids(5), 0, FoldSizes::new(1, 1, 1), 0).is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        let all = ids(40);
        let a = make_folds(&all, 4, FoldSizes::new(24, 6, 10), 9).unwrap();
        let b = make_folds(&all, 4, FoldSizes::new(24, 6, 10), 9).unwrap();
        assert_eq!(a, b);
        let c = make_folds(&all, 4, FoldSizes::new(24, 6, 10), 10).unwrap();
        assert_ne!(a, c);
    }

    proptest! {
        #[test]
        fn test_sets_tile_without_duplicates(seed in any::<u64>(), n_folds in 1usize..6, test in 1usize..5) {
            let all = ids(n_folds * test + 3);
            let plan = make_folds(&all, n_folds, FoldSizes::new(2, 1, test), seed).unwrap();
            let tests: Vec<_> = plan.folds.iter().flat_map(|s| s.test_ids.iter()).collect();
            let uniq: HashSet<_> = tests.iter().collect();
            prop_assert_eq!(tests.len(), n_folds * test);
            prop_assert_eq!(uniq.len(), tests.len());
            for s in &plan.folds {
                prop_assert!(disjoint(s));
            }
        }
    }
}
