//! Finite discrete distributions with base-2 KL and Jensen-Shannon
//! divergence. Zero-mass terms contribute nothing (0 log 0 = 0).

use std::collections::BTreeMap;

use thiserror::Error;

/// Allowed deviation of the total mass from 1.
pub const MASS_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DivergenceError {
    #[error("distribution has no mass")]
    Empty,
    #[error("mass {0} is negative or not finite")]
    BadMass(f64),
    #[error("masses sum to {0}, not 1")]
    NotNormalized(f64),
    #[error("support of P is not contained in support of Q")]
    SupportViolation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Distribution<K: Ord> {
    mass: BTreeMap<K, f64>,
}

impl<K: Ord + Clone> Distribution<K> {
    /// Wraps probabilities that already sum to 1 within [`MASS_TOLERANCE`].
    pub fn new(mass: BTreeMap<K, f64>) -> Result<Self, DivergenceError> {
        let mut total = 0.0;
        for &m in mass.values() {
            if !m.is_finite() || m < 0.0 {
                return Err(DivergenceError::BadMass(m));
            }
            total += m;
        }
        if mass.is_empty() {
            return Err(DivergenceError::Empty);
        }
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(DivergenceError::NotNormalized(total));
        }
        Ok(Self { mass })
    }

    /// Normalizes non-negative weights.
    pub fn from_weights(weights: impl IntoIterator<Item = (K, f64)>) -> Result<Self, DivergenceError> {
        let mut mass = BTreeMap::new();
        for (k, w) in weights {
            if !w.is_finite() || w < 0.0 {
                return Err(DivergenceError::BadMass(w));
            }
            *mass.entry(k).or_insert(0.0) += w;
        }
        let total: f64 = mass.values().sum();
        if total <= 0.0 {
            return Err(DivergenceError::Empty);
        }
        for m in mass.values_mut() {
            *m /= total;
        }
        Ok(Self { mass })
    }

    pub fn get(&self, k: &K) -> f64 {
        self.mass.get(k).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.mass.values().sum()
    }

    /// Keys carrying positive mass.
    pub fn support(&self) -> impl Iterator<Item = &K> + '_ {
        self.mass.iter().filter(|(_, &m)| m > 0.0).map(|(k, _)| k)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&K, f64)> + '_ {
        self.mass.iter().map(|(k, &m)| (k, m))
    }

    /// Keeps the entries selected by `keep` and rescales them to sum to 1.
    pub fn restrict(&self, mut keep: impl FnMut(&K) -> bool) -> Result<Self, DivergenceError> {
        let kept: Vec<_> = self.mass.iter().filter(|(k, _)| keep(k)).collect();
        let total: f64 = kept.iter().map(|(_, &m)| m).sum();
        if total <= 0.0 {
            return Err(DivergenceError::Empty);
        }
        Ok(Self {
            mass: kept.into_iter().map(|(k, &m)| (k.clone(), m / total)).collect(),
        })
    }
}

impl<K: Ord> Distribution<K> {
    pub(crate) fn from_map_unchecked(mass: BTreeMap<K, f64>) -> Self {
        Self { mass }
    }
}

/// KL(P || Q) in bits.
pub fn kl_divergence<K: Ord + Clone>(p: &Distribution<K>, q: &Distribution<K>) -> Result<f64, DivergenceError> {
    let mut total = 0.0;
    for (k, pk) in p.iter() {
        if pk == 0.0 {
            continue;
        }
        let qk = q.get(k);
        if qk == 0.0 {
            return Err(DivergenceError::SupportViolation);
        }
        total += pk * (pk / qk).log2();
    }
    Ok(total)
}

/// Jensen-Shannon divergence in bits against the equal mixture of P and Q.
/// Clamped to [0, 1] against round-off.
pub fn jsd<K: Ord + Clone>(p: &Distribution<K>, q: &Distribution<K>) -> f64 {
    let mixture = p
        .mass
        .keys()
        .chain(q.mass.keys())
        .map(|k| (k.clone(), (p.get(k) + q.get(k)) / 2.0))
        .collect();
    let mixture = Distribution::from_map_unchecked(mixture);
    let left = kl_divergence(p, &mixture).expect("mixture covers P");
    let right = kl_divergence(q, &mixture).expect("mixture covers Q");
    (0.5 * left + 0.5 * right).clamp(0.0, 1.0)
}
