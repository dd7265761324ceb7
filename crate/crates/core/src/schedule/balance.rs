use std::collections::VecDeque;
use std::ops::Range;

use crate::SparseMatrixCsr;

/// Splits `items` (ascending iteration ids) into `num_tiles` contiguous chunks
/// weighted by the nonzero count of each row of `a`.
///
/// Fewer items than tiles yields one item per tile followed by empty tiles.
pub fn balance<T>(a: &SparseMatrixCsr<T>, items: &[usize], num_tiles: usize) -> Vec<Vec<usize>> {
    let weights: Vec<u64> = items.iter().map(|&j| a.row_nnz(j) as u64).collect();
    balance_by_weight(&weights, num_tiles)
        .into_iter()
        .map(|r| items[r].to_vec())
        .collect()
}

/// Contiguous partition of `weights` into exactly `num_tiles` ranges.
///
/// The heaviest chunk is as light as possible; among those partitions the
/// lightest chunk is as heavy as possible, and remaining ties put items in
/// earlier chunks.
pub fn balance_by_weight(weights: &[u64], num_tiles: usize) -> Vec<Range<usize>> {
    assert!(num_tiles >= 1, "num_tiles must be at least 1");
    let m = weights.len();
    if m <= num_tiles {
        let mut out: Vec<Range<usize>> = (0..m).map(|i| i..i + 1).collect();
        out.resize(num_tiles, m..m);
        return out;
    }

    let mut prefix = Vec::with_capacity(m + 1);
    prefix.push(0u64);
    for &w in weights {
        prefix.push(prefix.last().unwrap() + w);
    }
    let total = prefix[m];
    let heaviest = weights.iter().copied().max().unwrap_or(0);

    let (mut lo, mut hi) = (heaviest.max(total.div_ceil(num_tiles as u64)), total);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if greedy_chunk_count(weights, mid) <= num_tiles {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let upper = lo;

    let (mut floor_lo, mut floor_hi) = (0u64, upper.min(total / num_tiles as u64));
    while floor_lo < floor_hi {
        let mid = floor_lo + (floor_hi - floor_lo).div_ceil(2);
        if exact_partition(&prefix, num_tiles, mid, upper).is_some() {
            floor_lo = mid;
        } else {
            floor_hi = mid - 1;
        }
    }
    exact_partition(&prefix, num_tiles, floor_lo, upper)
        .unwrap_or_else(|| greedy_exact(weights, upper, num_tiles))
}

fn greedy_chunk_count(weights: &[u64], cap: u64) -> usize {
    let mut chunks = 1;
    let mut acc = 0u64;
    for &w in weights {
        if acc > 0 && acc + w > cap {
            chunks += 1;
            acc = 0;
        }
        acc += w;
    }
    chunks
}

/// Greedy fill under `cap`, closing chunks early once every remaining item is
/// needed to keep the later chunks nonempty.
fn greedy_exact(weights: &[u64], cap: u64, k: usize) -> Vec<Range<usize>> {
    let m = weights.len();
    let mut out = Vec::with_capacity(k);
    let (mut start, mut acc) = (0, 0u64);
    for (i, &w) in weights.iter().enumerate() {
        let later_chunks = k - out.len() - 1;
        if i > start && (acc + w > cap || m - i <= later_chunks) {
            out.push(start..i);
            start = i;
            acc = 0;
        }
        acc += w;
    }
    out.push(start..m);
    debug_assert_eq!(out.len(), k);
    out
}

/// Partition into exactly `k` nonempty chunks with every chunk weight in
/// `[floor, cap]`, or `None` when the search finds none.
///
/// `counts[i]` holds the range of chunk counts that can end exactly at
/// prefix position `i`; predecessors of `i` form a sliding window because
/// the prefix sums are non-decreasing.
fn exact_partition(prefix: &[u64], k: usize, floor: u64, cap: u64) -> Option<Vec<Range<usize>>> {
    let m = prefix.len() - 1;
    let mut counts: Vec<Option<(usize, usize)>> = vec![None; m + 1];
    let mut windows: Vec<(usize, usize)> = vec![(0, 0); m + 1];
    counts[0] = Some((0, 0));

    let mut min_q: VecDeque<usize> = VecDeque::new();
    let mut max_q: VecDeque<usize> = VecDeque::new();
    let (mut start, mut next) = (0usize, 0usize);
    for i in 1..=m {
        while start < i && prefix[start] + cap < prefix[i] {
            start += 1;
        }
        while next < i && prefix[next] + floor <= prefix[i] {
            if let Some((lo, hi)) = counts[next] {
                while min_q.back().is_some_and(|&b| counts[b].unwrap().0 >= lo) {
                    min_q.pop_back();
                }
                min_q.push_back(next);
                while max_q.back().is_some_and(|&b| counts[b].unwrap().1 <= hi) {
                    max_q.pop_back();
                }
                max_q.push_back(next);
            }
            next += 1;
        }
        while min_q.front().is_some_and(|&f| f < start) {
            min_q.pop_front();
        }
        while max_q.front().is_some_and(|&f| f < start) {
            max_q.pop_front();
        }
        windows[i] = (start, next);
        if let (Some(&lo_at), Some(&hi_at)) = (min_q.front(), max_q.front()) {
            counts[i] = Some((counts[lo_at].unwrap().0 + 1, counts[hi_at].unwrap().1 + 1));
        }
    }

    let mut cuts = Vec::with_capacity(k + 1);
    let (mut i, mut c) = (m, k);
    cuts.push(m);
    while i > 0 {
        if c == 0 {
            return None;
        }
        let (lo, hi) = windows[i];
        // Latest feasible predecessor keeps later chunks light.
        let j = (lo..hi).rev().find(|&j| {
            counts[j].is_some_and(|(a, b)| a < c && c - 1 <= b) && (j > 0 || c == 1)
        })?;
        cuts.push(j);
        i = j;
        c -= 1;
    }
    if c != 0 {
        return None;
    }
    cuts.reverse();
    Some(cuts.windows(2).map(|w| w[0]..w[1]).collect())
}
