use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::record::PolicyRecord;
use crate::rng::{rng_from, sample_without_replacement};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Training policies drawn uniformly.
    Weak,
    /// Training policies are the lowest-return ones.
    Strong,
}

impl std::fmt::Display for SplitMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SplitMode::Weak => "weak",
            SplitMode::Strong => "strong",
        })
    }
}

impl std::str::FromStr for SplitMode {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weak" => Ok(SplitMode::Weak),
            "strong" => Ok(SplitMode::Strong),
            _ => Err(invalid(format!("unknown split mode '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpeSplit {
    pub mode: SplitMode,
    pub ratio: f64,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Splits `dataset` into `floor(ratio * n)` training and the remaining test
/// records. Both parts must be nonempty.
pub fn make_split(dataset: &[PolicyRecord], mode: SplitMode, ratio: f64, seed: u64) -> Result<OpeSplit> {
    if !(ratio > 0.0 && ratio <= 0.8) {
        return Err(invalid(format!("split ratio {ratio} must lie in (0, 0.8]")));
    }
    let n = dataset.len();
    let k = (ratio * n as f64).floor() as usize;
    if k == 0 || k == n {
        return Err(invalid(format!("split ratio {ratio} of {n} records leaves an empty side")));
    }
    let mut train = match mode {
        SplitMode::Weak => sample_without_replacement(&mut rng_from(seed), n, k),
        SplitMode::Strong => {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| dataset[a].mean_return.total_cmp(&dataset[b].mean_return).then(a.cmp(&b)));
            order.truncate(k);
            order
        }
    };
    train.sort_unstable();
    let test = (0..n).filter(|i| train.binary_search(i).is_err()).collect();
    Ok(OpeSplit { mode, ratio, train, test })
}
