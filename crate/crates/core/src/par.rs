//! Thin wrappers over rayon so the crate also builds single-threaded
//! (wasm, `--no-default-features`). Chunk boundaries never depend on the
//! worker count, so reductions come out bit-identical.

/// Rows per parallel work item.
pub(crate) const CHUNK: usize = 1024;

/// Fills `out` in fixed-size chunks of `chunk_len` elements; `fill` gets
/// the chunk index and its slice.
pub(crate) fn fill_chunks<T, F>(out: &mut [T], chunk_len: usize, fill: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        out.par_chunks_mut(chunk_len)
            .enumerate()
            .for_each(|(i, c)| fill(i, c));
    }
    #[cfg(not(feature = "parallel"))]
    {
        out.chunks_mut(chunk_len)
            .enumerate()
            .for_each(|(i, c)| fill(i, c));
    }
}

/// Same as [`fill_chunks`] but stops at the first error, reporting the
/// error of the lowest failing chunk.
pub(crate) fn try_fill_chunks<T, E, F>(out: &mut [T], chunk_len: usize, fill: F) -> Result<(), E>
where
    T: Send,
    E: Send,
    F: Fn(usize, &mut [T]) -> Result<(), E> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        let results: Vec<Result<(), E>> = out
            .par_chunks_mut(chunk_len)
            .enumerate()
            .map(|(i, c)| fill(i, c))
            .collect();
        results.into_iter().collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        for (i, c) in out.chunks_mut(chunk_len).enumerate() {
            fill(i, c)?;
        }
        Ok(())
    }
}

/// Maps every index range `[k·CHUNK, (k+1)·CHUNK) ∩ [0, n)` and returns the
/// partial results in chunk order.
pub(crate) fn map_ranges<R, F>(n: usize, map: F) -> Vec<R>
where
    R: Send,
    F: Fn(std::ops::Range<usize>) -> R + Sync + Send,
{
    let chunks = n.div_ceil(CHUNK);
    let range = |k: usize| k * CHUNK..((k + 1) * CHUNK).min(n);
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..chunks).into_par_iter().map(|k| map(range(k))).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..chunks).map(|k| map(range(k))).collect()
    }
}
