//! Scalar abstraction for similarity scores and embedding components.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point type usable for embeddings and retrieval scores.
///
/// Implemented for `f32` and `f64`. Everything above the vector layer is
/// generic over it, with `f64` as the default at the crate root.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Tag written into sidecar headers.
    const KIND: &'static str;

    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).unwrap_or_else(Self::nan)
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {
    const KIND: &'static str = "f32";
}

impl Scalar for f64 {
    const KIND: &'static str = "f64";
}

/// Descending score, then ascending id. NaN sorts last.
pub fn rank_cmp<S: Scalar>(a: (S, u64), b: (S, u64)) -> std::cmp::Ordering {
    match b.0.partial_cmp(&a.0) {
        Some(std::cmp::Ordering::Equal) => a.1.cmp(&b.1),
        Some(o) => o,
        None => match (a.0.is_nan(), b.0.is_nan()) {
            (true, false) => std::cmp::Ordering::Greater,
            (false, true) => std::cmp::Ordering::Less,
            _ => a.1.cmp(&b.1),
        },
    }
}

/// Scores this close are treated as equal when ranking. Mathematically
/// equal cosines computed from different vectors can differ in the last
/// few bits, which must not decide their order.
pub fn tie_tolerance<S: Scalar>() -> S {
    S::epsilon() * S::from_f64_lossy(16.0)
}

/// Sorts by [`rank_cmp`], then orders runs of near-equal scores by id.
pub fn sort_ranked<T, S: Scalar>(items: &mut [T], key: impl Fn(&T) -> (S, u64)) {
    items.sort_by(|a, b| rank_cmp(key(a), key(b)));
    let tol = tie_tolerance::<S>();
    let mut start = 0;
    while start < items.len() {
        let head = key(&items[start]).0;
        let mut end = start + 1;
        while end < items.len() && (head - key(&items[end]).0).abs() <= tol * head.abs().max(S::one()) {
            end += 1;
        }
        if end - start > 1 {
            items[start..end].sort_by_key(|t| key(t).1);
        }
        start = end;
    }
}
