//! Associative scans (all-prefix-sums) over arbitrary element types.
//!
//! Two engines are provided:
//!
//! * [`seq_scan`] / [`try_seq_scan`]: the left-to-right fold, used as the
//!   reference implementation.
//! * [`par_scan`] / [`try_par_scan`]: the Blelloch up-sweep/down-sweep scan.
//!   Every tree level is dispatched to the current rayon pool, and the shape of
//!   the combine tree depends only on the number of elements, so results are
//!   identical for any worker count.
//!
//! Both scans are inclusive. [`ScanDirection::Forward`] returns
//! `s_k = a_1 ⊗ … ⊗ a_k`, [`ScanDirection::Reverse`] returns
//! `s_k = a_k ⊗ … ⊗ a_T`. The operator is never assumed to be commutative.
//!
//! Each run reports [`ScanStats`]: the number of combine calls and the longest
//! chain of dependent combine calls, measured with per-node depth tags.

use std::convert::Infallible;
use std::fmt;

use rayon::prelude::*;

/// Direction of an inclusive scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScanDirection {
    /// Prefixes: `s_k = a_1 ⊗ … ⊗ a_k`.
    Forward,
    /// Suffixes: `s_k = a_k ⊗ … ⊗ a_T`.
    Reverse,
}

/// Instrumentation collected during a scan.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ScanStats {
    /// Total number of combine calls, including calls on identity padding.
    pub combine_count: usize,
    /// Longest chain of dependent combine calls.
    pub combine_depth: usize,
}

impl ScanStats {
    /// Merges the stats of two scans that ran one after the other.
    pub fn then(self, other: ScanStats) -> ScanStats {
        ScanStats {
            combine_count: self.combine_count + other.combine_count,
            combine_depth: self.combine_depth.max(other.combine_depth),
        }
    }
}

/// Upper bound on [`ScanStats::combine_depth`] for a parallel scan over `len`
/// elements: `2·ceil(log2 len) + 1`.
pub fn depth_bound(len: usize) -> usize {
    2 * ceil_log2(len) + 1
}

fn ceil_log2(len: usize) -> usize {
    if len <= 1 {
        0
    } else {
        (usize::BITS - (len - 1).leading_zeros()) as usize
    }
}

/// Error of a scan whose combine operator may itself fail with `X`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScanError<X = Infallible> {
    /// The input sequence was empty.
    Empty,
    /// The combine operator returned an error.
    Combine(X),
}

impl<X: fmt::Display> fmt::Display for ScanError<X> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScanError::Empty => f.write_str("empty scan"),
            ScanError::Combine(e) => write!(f, "{e}"),
        }
    }
}

impl<X: fmt::Debug + fmt::Display> std::error::Error for ScanError<X> {}

#[derive(Clone)]
struct Node<E> {
    value: E,
    depth: usize,
}

fn unwrap_infallible<T>(r: Result<T, ScanError<Infallible>>) -> Result<T, ScanError> {
    r.map_err(|e| match e {
        ScanError::Empty => ScanError::Empty,
        ScanError::Combine(never) => match never {},
    })
}

/// Sequential inclusive scan.
pub fn seq_scan<E, F>(elements: &[E], combine: F, direction: ScanDirection) -> Result<(Vec<E>, ScanStats), ScanError>
where
    E: Clone,
    F: Fn(&E, &E) -> E,
{
    unwrap_infallible(try_seq_scan(
        elements,
        |a: &E, b: &E| Ok::<E, Infallible>(combine(a, b)),
        direction,
    ))
}

/// Sequential inclusive scan with a fallible combine operator.
pub fn try_seq_scan<E, X, F>(
    elements: &[E],
    combine: F,
    direction: ScanDirection,
) -> Result<(Vec<E>, ScanStats), ScanError<X>>
where
    E: Clone,
    F: Fn(&E, &E) -> Result<E, X>,
{
    if elements.is_empty() {
        return Err(ScanError::Empty);
    }
    let n = elements.len();
    let mut out: Vec<E> = Vec::with_capacity(n);
    match direction {
        ScanDirection::Forward => {
            out.push(elements[0].clone());
            for a in &elements[1..] {
                let next = combine(&out[out.len() - 1], a).map_err(ScanError::Combine)?;
                out.push(next);
            }
        }
        ScanDirection::Reverse => {
            out.push(elements[n - 1].clone());
            for a in elements[..n - 1].iter().rev() {
                let next = combine(a, &out[out.len() - 1]).map_err(ScanError::Combine)?;
                out.push(next);
            }
            out.reverse();
        }
    }
    let stats = ScanStats {
        combine_count: n - 1,
        combine_depth: n - 1,
    };
    Ok((out, stats))
}

/// Parallel (Blelloch) inclusive scan.
///
/// `identity` must be a two-sided neutral element of `combine`; it is used to
/// pad the input to the next power of two and as the root of the down-sweep.
pub fn par_scan<E, F>(
    elements: &[E],
    combine: F,
    identity: &E,
    direction: ScanDirection,
) -> Result<(Vec<E>, ScanStats), ScanError>
where
    E: Clone + Send + Sync,
    F: Fn(&E, &E) -> E + Sync,
{
    unwrap_infallible(try_par_scan(
        elements,
        |a: &E, b: &E| Ok::<E, Infallible>(combine(a, b)),
        identity,
        direction,
    ))
}

/// Parallel (Blelloch) inclusive scan with a fallible combine operator.
///
/// When several combines fail in the same level, which error is reported is
/// unspecified.
pub fn try_par_scan<E, X, F>(
    elements: &[E],
    combine: F,
    identity: &E,
    direction: ScanDirection,
) -> Result<(Vec<E>, ScanStats), ScanError<X>>
where
    E: Clone + Send + Sync,
    X: Send,
    F: Fn(&E, &E) -> Result<E, X> + Sync,
{
    if elements.is_empty() {
        return Err(ScanError::Empty);
    }
    match direction {
        ScanDirection::Forward => blelloch(elements.iter().cloned(), combine, identity),
        ScanDirection::Reverse => {
            // Suffix scan = reversed prefix scan of the reversed input under the
            // argument-swapped operator.
            let (mut out, stats) = blelloch(elements.iter().rev().cloned(), |a: &E, b: &E| combine(b, a), identity)?;
            out.reverse();
            Ok((out, stats))
        }
    }
}

fn blelloch<E, X, F, I>(input: I, combine: F, identity: &E) -> Result<(Vec<E>, ScanStats), ScanError<X>>
where
    E: Clone + Send + Sync,
    X: Send,
    F: Fn(&E, &E) -> Result<E, X> + Sync,
    I: ExactSizeIterator<Item = E>,
{
    let len = input.len();
    let padded = len.next_power_of_two();
    let levels = ceil_log2(padded);

    let saved: Vec<Node<E>> = input
        .map(|value| Node { value, depth: 0 })
        .chain((len..padded).map(|_| Node {
            value: identity.clone(),
            depth: 0,
        }))
        .collect();
    let mut work = saved.clone();
    let mut count = 0usize;

    let op = |a: &Node<E>, b: &Node<E>| -> Result<Node<E>, X> {
        Ok(Node {
            value: combine(&a.value, &b.value)?,
            depth: a.depth.max(b.depth) + 1,
        })
    };

    // Up-sweep.
    for d in 0..levels {
        let span = 1usize << (d + 1);
        let half = span / 2;
        work.par_chunks_mut(span)
            .try_for_each(|chunk| -> Result<(), X> {
                chunk[span - 1] = op(&chunk[half - 1], &chunk[span - 1])?;
                Ok(())
            })
            .map_err(ScanError::Combine)?;
        count += padded / span;
    }

    work[padded - 1] = Node {
        value: identity.clone(),
        depth: 0,
    };

    // Down-sweep: exclusive prefixes.
    for d in (0..levels).rev() {
        let span = 1usize << (d + 1);
        let half = span / 2;
        work.par_chunks_mut(span)
            .try_for_each(|chunk| -> Result<(), X> {
                chunk.swap(half - 1, span - 1);
                chunk[span - 1] = op(&chunk[half - 1], &chunk[span - 1])?;
                Ok(())
            })
            .map_err(ScanError::Combine)?;
        count += padded / span;
    }

    // Final pass turns the exclusive result into the inclusive one.
    work.par_iter_mut()
        .zip(saved.par_iter())
        .try_for_each(|(acc, own)| -> Result<(), X> {
            *acc = op(acc, own)?;
            Ok(())
        })
        .map_err(ScanError::Combine)?;
    count += padded;

    let depth = work.iter().map(|n| n.depth).max().unwrap_or(0);
    work.truncate(len);
    let out = work.into_iter().map(|n| n.value).collect();
    Ok((
        out,
        ScanStats {
            combine_count: count,
            combine_depth: depth,
        },
    ))
}
