//! Chart specifications and value-swap pairs.
//!
//! The spy chart is the original with two numeric values transposed; labels,
//! chart type and ordering are untouched.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::seed;

const MIN_CATEGORIES: usize = 3;
const MAX_CATEGORIES: usize = 8;
const MIN_VALUE: u32 = 1;
const MAX_VALUE: u32 = 100;

const LABELS: [&str; 12] = [
    "Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChartType {
    Line,
    Bar,
    Pie,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartSpec {
    pub chart_type: ChartType,
    pub categories: Vec<String>,
    pub values: Vec<f64>,
}

/// Indices of the two transposed values, `first < second`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwapLog {
    pub first: usize,
    pub second: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartPair {
    pub original: ChartSpec,
    pub swapped: ChartSpec,
    pub swap_log: SwapLog,
}

impl ChartSpec {
    pub fn with_swap(&self, swap: SwapLog) -> ChartSpec {
        let mut out = self.clone();
        out.values.swap(swap.first, swap.second);
        out
    }
}

impl ChartPair {
    pub fn validate(&self) -> Result<(), String> {
        let SwapLog { first, second } = self.swap_log;
        let n = self.original.values.len();
        if first >= second || second >= n {
            return Err(format!(
                "bad swap indices ({first}, {second}) for {n} values"
            ));
        }
        if self.original.categories.len() != n {
            return Err("category/value length mismatch".into());
        }
        if self.original.chart_type != self.swapped.chart_type
            || self.original.categories != self.swapped.categories
        {
            return Err("layout changed".into());
        }
        if self.original.with_swap(self.swap_log) != self.swapped {
            return Err("swapped spec is not the logged transposition of the original".into());
        }
        if self.original.values[first] == self.original.values[second] {
            return Err("swap is a no-op".into());
        }
        Ok(())
    }
}

pub fn generate_chart_pair(seed: u64) -> ChartPair {
    let mut rng = seed::rng(seed);
    let chart_type = *[ChartType::Line, ChartType::Bar, ChartType::Pie]
        .choose(&mut rng)
        .unwrap();
    let n = rng.gen_range(MIN_CATEGORIES..=MAX_CATEGORIES);
    let start = rng.gen_range(0..=LABELS.len() - n);
    let categories: Vec<String> = LABELS[start..start + n]
        .iter()
        .map(|s| s.to_string())
        .collect();

    let values: Vec<f64> = loop {
        let v: Vec<f64> = (0..n)
            .map(|_| f64::from(rng.gen_range(MIN_VALUE..=MAX_VALUE)))
            .collect();
        if v.iter().any(|x| *x != v[0]) {
            break v;
        }
    };
    let swap_log = loop {
        let idx = rand::seq::index::sample(&mut rng, n, 2);
        let (a, b) = (idx.index(0), idx.index(1));
        if values[a] != values[b] {
            break SwapLog {
                first: a.min(b),
                second: a.max(b),
            };
        }
    };

    let original = ChartSpec {
        chart_type,
        categories,
        values,
    };
    let swapped = original.with_swap(swap_log);
    let pair = ChartPair {
        original,
        swapped,
        swap_log,
    };
    debug_assert!(pair.validate().is_ok());
    pair
}
