use std::ops::Range;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::digest;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

/// Flat storage for every network parameter, with named ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ParamStore {
    pub specs: Vec<ParamSpec>,
    pub data: Vec<f64>,
}

impl ParamStore {
    /// Appends a parameter drawn from N(0, std^2) (zeros when std is 0).
    pub fn add<R: Rng + ?Sized>(&mut self, name: &str, len: usize, std: f64, rng: &mut R) -> Range<usize> {
        let offset = self.data.len();
        if std > 0.0 {
            let normal = Normal::new(0.0, std).expect("finite std");
            self.data.extend((0..len).map(|_| normal.sample(rng)));
        } else {
            self.data.extend(std::iter::repeat_n(0.0, len));
        }
        self.specs.push(ParamSpec { name: name.to_string(), offset, len });
        offset..offset + len
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn fingerprint(&self) -> String {
        digest::f64_digest(&self.data)
    }

    pub fn zeros_like(&self) -> Vec<f64> {
        vec![0.0; self.data.len()]
    }
}
