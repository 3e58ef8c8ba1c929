//! Counting primitives over strictly ascending `u32` slices.

use std::cmp::Ordering;

/// Size ratio above which galloping search beats a linear merge.
const GALLOP_RATIO: usize = 16;

/// Returns `|a ∩ b|` for two strictly ascending slices.
pub fn intersect_count(a: &[u32], b: &[u32]) -> usize {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    if small.is_empty() {
        return 0;
    }
    if small.len() * GALLOP_RATIO < large.len() {
        gallop_count(small, large)
    } else {
        merge_count(small, large)
    }
}

fn merge_count(a: &[u32], b: &[u32]) -> usize {
    let (mut i, mut j, mut count) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            Ordering::Less => i += 1,
            Ordering::Greater => j += 1,
            Ordering::Equal => {
                count += 1;
                i += 1;
                j += 1;
            }
        }
    }
    count
}

fn gallop_count(small: &[u32], large: &[u32]) -> usize {
    let mut rest = large;
    let mut count = 0;
    for &x in small {
        // exponential probe, then binary search inside the bracket
        let mut bound = 1;
        while bound < rest.len() && rest[bound] < x {
            bound *= 2;
        }
        let hi = (bound + 1).min(rest.len());
        match rest[..hi].binary_search(&x) {
            Ok(pos) => {
                count += 1;
                rest = &rest[pos + 1..];
            }
            Err(pos) => rest = &rest[pos..],
        }
        if rest.is_empty() {
            break;
        }
    }
    count
}

/// True when every element of `a` occurs in `b`; both strictly ascending.
pub fn is_subset(a: &[u32], b: &[u32]) -> bool {
    a.len() <= b.len() && intersect_count(a, b) == a.len()
}

/// First element of `a` missing from `b`, if any.
pub fn first_missing(a: &[u32], b: &[u32]) -> Option<u32> {
    a.iter().copied().find(|x| b.binary_search(x).is_err())
}

pub fn is_strictly_ascending(a: &[u32]) -> bool {
    a.windows(2).all(|w| w[0] < w[1])
}
