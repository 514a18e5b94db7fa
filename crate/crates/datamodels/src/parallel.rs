//! Data-parallel driver with a sequential fallback.
//!
//! Every parallel section in the crate is order-independent by construction
//! (row-keyed RNG, disjoint output slices), so the `parallel` feature only
//! changes wall-clock time, never results. The `*_seq` variants are the
//! fallback bodies; they stay available under the default feature so the
//! bench suite can compare both in one build.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `0..n` through `f`, collecting results in index order.
pub fn map_indexed<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_indexed_seq(n, f)
    }
}

/// Sequential body of [`map_indexed`].
pub fn map_indexed_seq<U, F>(n: usize, f: F) -> Vec<U>
where
    F: Fn(usize) -> U,
{
    (0..n).map(f).collect()
}

/// Run `f(chunk_index, chunk)` over consecutive `chunk_len`-sized slices of
/// `data`. Chunks are disjoint, so this parallelizes cleanly.
pub fn for_each_chunk_mut<T, F>(data: &mut [T], chunk_len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    assert!(chunk_len > 0);
    #[cfg(feature = "parallel")]
    {
        data.par_chunks_mut(chunk_len).enumerate().for_each(|(i, c)| f(i, c));
    }
    #[cfg(not(feature = "parallel"))]
    {
        for_each_chunk_mut_seq(data, chunk_len, f);
    }
}

/// Sequential body of [`for_each_chunk_mut`].
pub fn for_each_chunk_mut_seq<T, F>(data: &mut [T], chunk_len: usize, f: F)
where
    F: Fn(usize, &mut [T]),
{
    assert!(chunk_len > 0);
    for (i, c) in data.chunks_mut(chunk_len).enumerate() {
        f(i, c);
    }
}
