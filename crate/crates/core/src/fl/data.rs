use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// One user's samples.
#[derive(Debug, Clone, PartialEq)]
pub struct UserData {
    pub features: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

impl UserData {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn samples(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.features
            .iter()
            .map(Vec::as_slice)
            .zip(self.targets.iter().copied())
    }
}

/// Training data split across users.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    users: Vec<UserData>,
}

impl Dataset {
    pub fn new(users: Vec<UserData>) -> Result<Self> {
        let dim = users
            .iter()
            .flat_map(|u| u.features.first())
            .map(Vec::len)
            .next()
            .ok_or_else(|| Error::invalid("dataset has no samples"))?;
        if dim == 0 {
            return Err(Error::invalid("features must have at least one dimension"));
        }
        for (k, u) in users.iter().enumerate() {
            if u.is_empty() {
                return Err(Error::invalid(format!("user {k} has no samples")));
            }
            if u.features.len() != u.targets.len() {
                return Err(Error::invalid(format!(
                    "user {k} has mismatched features and targets"
                )));
            }
            if let Some(x) = u.features.iter().find(|x| x.len() != dim) {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: x.len(),
                });
            }
        }
        Ok(Dataset { dim, users })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn users(&self) -> &[UserData] {
        &self.users
    }

    pub fn user(&self, k: usize) -> &UserData {
        &self.users[k]
    }

    pub fn total_samples(&self) -> usize {
        self.users.iter().map(UserData::len).sum()
    }

    pub fn samples(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.users.iter().flat_map(UserData::samples)
    }
}

/// Linear-Gaussian regression data: `y = x·w* + noise·ε` with standard normal `x`, `w*`, `ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticRidge {
    pub dim: usize,
    pub users: usize,
    pub samples_per_user: usize,
    pub noise: f64,
}

impl SyntheticRidge {
    pub fn generate(&self, seed_value: u64) -> Result<Dataset> {
        if self.dim == 0 || self.users == 0 || self.samples_per_user == 0 {
            return Err(Error::invalid(
                "synthetic data needs positive dim, users and samples",
            ));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::invalid("noise must be finite and nonnegative"));
        }
        let mut rng = seed::derived_rng(seed_value, &[0]);
        let truth: Vec<f64> = (0..self.dim)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let users = (0..self.users)
            .map(|k| {
                let mut rng = seed::derived_rng(seed_value, &[1, k as u64]);
                let mut features = Vec::with_capacity(self.samples_per_user);
                let mut targets = Vec::with_capacity(self.samples_per_user);
                for _ in 0..self.samples_per_user {
                    let x: Vec<f64> = (0..self.dim)
                        .map(|_| StandardNormal.sample(&mut rng))
                        .collect();
                    let eps: f64 = StandardNormal.sample(&mut rng);
                    targets.push(dot(&x, &truth) + self.noise * eps);
                    features.push(x);
                }
                UserData { features, targets }
            })
            .collect();
        Dataset::new(users)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
