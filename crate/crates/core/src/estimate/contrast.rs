use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

use super::EstimateError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContrastMode {
    /// `g1 - g0` at each `k`.
    PerTime,
    /// Running sums of the per-time differences; the last entry is the total.
    Cumulative,
}

/// Sign of a cumulative contrast: negative means the treated regime lowers total dose.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    Sparing,
    Increasing,
    Null,
}

impl Direction {
    pub fn of<T: Scalar>(value: T) -> Self {
        if value < T::zero() {
            Self::Sparing
        } else if value > T::zero() {
            Self::Increasing
        } else {
            Self::Null
        }
    }
}

/// Contrasts between two per-time estimate series `(k, value)`, which must share
/// their time grid.
pub fn contrast<T: Scalar>(
    g1: &[(usize, T)],
    g0: &[(usize, T)],
    mode: ContrastMode,
) -> Result<Vec<(usize, T)>, EstimateError> {
    let k1: Vec<usize> = g1.iter().map(|p| p.0).collect();
    let k0: Vec<usize> = g0.iter().map(|p| p.0).collect();
    if k1 != k0 {
        return Err(EstimateError::GridMismatch(k1, k0));
    }
    let diffs = g1.iter().zip(g0).map(|(a, b)| (a.0, a.1 - b.1));
    Ok(match mode {
        ContrastMode::PerTime => diffs.collect(),
        ContrastMode::Cumulative => diffs
            .scan(T::zero(), |acc, (k, d)| {
                *acc = *acc + d;
                Some((k, *acc))
            })
            .collect(),
    })
}

pub fn per_time_contrast<T: Scalar>(g1: &[(usize, T)], g0: &[(usize, T)]) -> Result<Vec<(usize, T)>, EstimateError> {
    contrast(g1, g0, ContrastMode::PerTime)
}

/// Total of the per-time differences over the grid.
pub fn cumulative_contrast<T: Scalar>(g1: &[(usize, T)], g0: &[(usize, T)]) -> Result<T, EstimateError> {
    Ok(contrast(g1, g0, ContrastMode::Cumulative)?.last().map_or(T::zero(), |p| p.1))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(v: &[f64]) -> Vec<(usize, f64)> {
        v.iter().enumerate().map(|(i, &x)| (i + 1, x)).collect()
    }

    #[test]
    fn differences_and_running_sum() {
        let g1 = series(&[1.0, 4.0, 7.5]);
        let g0 = series(&[3.0, 5.0, 7.5]);
        assert_eq!(per_time_contrast(&g1, &g0).unwrap(), series(&[-2.0, -1.0, 0.0]));
        assert_eq!(contrast(&g1, &g0, ContrastMode::Cumulative).unwrap(), series(&[-2.0, -3.0, -3.0]));
        let total = cumulative_contrast(&g1, &g0).unwrap();
        assert_eq!(total, -3.0);
        assert_eq!(Direction::of(total), Direction::Sparing);
    }

    #[test]
    fn identical_inputs_give_zero() {
        let g = series(&[0.3, 12.25, 1e9]);
        assert!(per_time_contrast(&g, &g).unwrap().iter().all(|p| p.1 == 0.0));
        assert_eq!(cumulative_contrast(&g, &g).unwrap(), 0.0);
        assert_eq!(Direction::of(0.0), Direction::Null);
    }

    #[test]
    fn grid_mismatch() {
        let g1 = series(&[1.0, 2.0]);
        let g0 = vec![(1, 1.0), (3, 2.0)];
        assert_eq!(per_time_contrast(&g1, &g0), Err(EstimateError::GridMismatch(vec![1, 2], vec![1, 3])));
    }
}
