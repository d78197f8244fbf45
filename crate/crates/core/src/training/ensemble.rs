use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{checkpoint, NBeatsModel};
use crate::scalar::Scalar;

/// Elementwise median; an even member count averages the two middle
/// values.
pub fn median_combine<T: Scalar>(forecasts: &[Vec<T>]) -> Result<Vec<T>> {
    let first = forecasts
        .first()
        .ok_or_else(|| Error::Config("cannot combine zero forecasts".into()))?;
    let h = first.len();
    if let Some(bad) = forecasts.iter().find(|f| f.len() != h) {
        return Err(Error::Length {
            op: "ensemble horizon",
            left: bad.len(),
            right: h,
        });
    }
    let k = forecasts.len();
    let mut column = Vec::with_capacity(k);
    Ok((0..h)
        .map(|i| {
            column.clear();
            column.extend(forecasts.iter().map(|f| f[i]));
            column.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
            if k % 2 == 1 {
                column[k / 2]
            } else {
                (column[k / 2 - 1] + column[k / 2]) / T::of(2.0)
            }
        })
        .collect())
}

/// The last `lookback` points of `history`, left-padded with zeros.
pub fn lookback_window<T: Scalar>(history: &[T], lookback: usize) -> Vec<T> {
    let mut w = vec![T::zero(); lookback];
    let take = history.len().min(lookback);
    w[lookback - take..].copy_from_slice(&history[history.len() - take..]);
    w
}

/// Each member forecasts from its own lookback of `history`.
pub fn member_forecasts<T: Scalar>(members: &[NBeatsModel<T>], history: &[T]) -> Result<Vec<Vec<T>>> {
    let h = members
        .first()
        .ok_or_else(|| Error::Config("ensemble has no members".into()))?
        .horizon();
    members
        .iter()
        .map(|m| {
            if m.horizon() != h {
                return Err(Error::Length {
                    op: "ensemble horizon",
                    left: m.horizon(),
                    right: h,
                });
            }
            m.scaled_forecast(&lookback_window(history, m.lookback()))
        })
        .collect()
}

pub fn ensemble_forecast<T: Scalar>(members: &[NBeatsModel<T>], history: &[T]) -> Result<Vec<T>> {
    median_combine(&member_forecasts(members, history)?)
}

/// SHA-256 over the member checkpoint digests, in member order.
pub fn ensemble_digest<T: Scalar>(members: &[NBeatsModel<T>]) -> String {
    let mut h = Sha256::new();
    for m in members {
        h.update(checkpoint::digest(m).as_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
