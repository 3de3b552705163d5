//! Song-level train/eval/test partition.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};

pub const DEFAULT_RATIOS: [f64; 3] = [0.8, 0.1, 0.1];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Eval,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Eval, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Eval => "eval",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "eval" => Ok(Split::Eval),
            "test" => Ok(Split::Test),
            _ => Err(Error::Config(format!("unknown split {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub train: Vec<String>,
    pub eval: Vec<String>,
    pub test: Vec<String>,
    pub seed: u64,
    pub ratios: [f64; 3],
}

impl SplitManifest {
    pub fn ids(&self, split: Split) -> &[String] {
        match split {
            Split::Train => &self.train,
            Split::Eval => &self.eval,
            Split::Test => &self.test,
        }
    }

    pub fn split_of(&self, id: &str) -> Option<Split> {
        Split::ALL
            .into_iter()
            .find(|&s| self.ids(s).iter().any(|x| x == id))
    }

    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.eval.len(), self.test.len())
    }
}

/// Split sizes for `n` songs: each share is floored, then the leftover songs
/// go one at a time to test, eval and train, in that order.
pub fn split_sizes(n: usize, ratios: [f64; 3]) -> Result<[usize; 3]> {
    if ratios.iter().any(|r| !(r.is_finite() && *r >= 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split ratios {ratios:?} must be non-negative and sum to 1"
        )));
    }
    let mut sizes = ratios.map(|r| (n as f64 * r + 1e-9).floor() as usize);
    let mut rest = n - sizes.iter().sum::<usize>();
    for k in [2, 1, 0].into_iter().cycle() {
        if rest == 0 {
            break;
        }
        sizes[k] += 1;
        rest -= 1;
    }
    Ok(sizes)
}

/// Partition song ids deterministically: sort, shuffle with `seed`, then cut
/// into train/eval/test by [`split_sizes`]. Each list is returned sorted.
pub fn split_dataset(song_ids: &[String], ratios: [f64; 3], seed: u64) -> Result<SplitManifest> {
    let unique: BTreeSet<&String> = song_ids.iter().collect();
    if unique.len() != song_ids.len() {
        return Err(Error::Data("duplicate song ids".into()));
    }
    let mut ids: Vec<String> = unique.into_iter().cloned().collect();
    ids.shuffle(&mut stream(seed, Purpose::Split, 0));
    let [a, b, _] = split_sizes(ids.len(), ratios)?;
    let mut test = ids.split_off(a + b);
    let mut eval = ids.split_off(a);
    let mut train = ids;
    train.sort();
    eval.sort();
    test.sort();
    Ok(SplitManifest {
        train,
        eval,
        test,
        seed,
        ratios,
    })
}
