//! Execution backend for the data-parallel inner loops.
//!
//! Every kernel that can fan out (FDTD half-steps over grid rows,
//! rasterization rows, Monte Carlo photon chunks) takes a
//! [`Backend`]. Work is always split into the same deterministic chunks, so
//! both backends produce bit-identical output; only the scheduling differs.

/// How to schedule independent chunks of work.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    /// Plain loops on the calling thread.
    Sequential,
    /// Rayon work-stealing pool.
    #[cfg(feature = "parallel")]
    Rayon,
}

impl Default for Backend {
    fn default() -> Self {
        #[cfg(feature = "parallel")]
        {
            Backend::Rayon
        }
        #[cfg(not(feature = "parallel"))]
        {
            Backend::Sequential
        }
    }
}

impl Backend {
    pub fn is_parallel(self) -> bool {
        #[cfg(feature = "parallel")]
        {
            matches!(self, Backend::Rayon)
        }
        #[cfg(not(feature = "parallel"))]
        {
            false
        }
    }

    /// Apply `f(row_index, row)` to each `row_len`-sized chunk of `data`.
    pub fn for_each_row<T, F>(self, data: &mut [T], row_len: usize, f: F)
    where
        T: Send,
        F: Fn(usize, &mut [T]) + Send + Sync,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            data.par_chunks_mut(row_len)
                .enumerate()
                .for_each(|(j, row)| f(j, row));
            return;
        }
        data.chunks_mut(row_len)
            .enumerate()
            .for_each(|(j, row)| f(j, row));
    }

    /// Like [`Backend::for_each_row`] over two equally shaped arrays.
    pub fn for_each_row2<T, U, F>(self, a: &mut [T], b: &mut [U], row_len: usize, f: F)
    where
        T: Send,
        U: Send,
        F: Fn(usize, &mut [T], &mut [U]) + Send + Sync,
    {
        debug_assert_eq!(a.len(), b.len());
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            a.par_chunks_mut(row_len)
                .zip(b.par_chunks_mut(row_len))
                .enumerate()
                .for_each(|(j, (ra, rb))| f(j, ra, rb));
            return;
        }
        a.chunks_mut(row_len)
            .zip(b.chunks_mut(row_len))
            .enumerate()
            .for_each(|(j, (ra, rb))| f(j, ra, rb));
    }

    /// Map `f` over `0..n`, collecting results in index order.
    pub fn map<R, F>(self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Send + Sync,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backends_agree_on_rows_and_maps() {
        let mut a = vec![0.0f64; 12];
        let mut b = a.clone();
        let f = |j: usize, row: &mut [f64]| {
            for (i, x) in row.iter_mut().enumerate() {
                *x = (j * 10 + i) as f64;
            }
        };
        Backend::Sequential.for_each_row(&mut a, 4, f);
        Backend::default().for_each_row(&mut b, 4, f);
        assert_eq!(a, b);
        assert_eq!(
            Backend::Sequential.map(5, |i| i * i),
            Backend::default().map(5, |i| i * i)
        );
    }
}
