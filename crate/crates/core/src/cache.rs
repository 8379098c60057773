//! Append-only feature cache holding one pooled embedding per frame.
//!
//! Entries are kept in a single contiguous buffer so read-outs are plain
//! slices. Public indices are 1-based and relative to the oldest retained
//! entry; with no capacity set this is the frame index since stream start.

use crate::error::{DacatError, Result};
use crate::types::{FeatureVector, Real};

#[derive(Clone, Debug)]
pub struct FeatureCache<T = f64> {
    dim: usize,
    capacity: Option<usize>,
    data: Vec<T>,
    /// Offset (in entries) of the oldest retained entry inside `data`.
    head: usize,
    len: usize,
    appended: usize,
}

impl<T: Real> FeatureCache<T> {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            capacity: None,
            data: Vec::new(),
            head: 0,
            len: 0,
            appended: 0,
        }
    }

    /// Cache that evicts its oldest entry once `capacity` entries are held.
    pub fn with_capacity(dim: usize, capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(DacatError::InvalidConfig("cache capacity must be >= 1".into()));
        }
        let mut cache = Self::new(dim);
        cache.capacity = Some(capacity);
        cache.data.reserve(2 * capacity * dim);
        Ok(cache)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn capacity(&self) -> Option<usize> {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Total number of frames appended since creation, including evicted ones.
    pub fn frames_seen(&self) -> usize {
        self.appended
    }

    pub fn clear(&mut self) {
        self.data.clear();
        self.head = 0;
        self.len = 0;
        self.appended = 0;
    }

    pub fn append(&mut self, f: &[T]) -> Result<()> {
        if f.len() != self.dim {
            return Err(DacatError::DimensionMismatch {
                expected: self.dim,
                found: f.len(),
            });
        }
        if let Some(cap) = self.capacity {
            if self.len == cap {
                self.head += 1;
                self.len -= 1;
                // Compact once the dead prefix is as large as the live window,
                // keeping the amortized cost per append at O(d).
                if self.head >= cap {
                    let start = self.head * self.dim;
                    self.data.copy_within(start.., 0);
                    self.data.truncate(self.len * self.dim);
                    self.head = 0;
                }
            }
        }
        self.data.extend_from_slice(f);
        self.len += 1;
        self.appended += 1;
        Ok(())
    }

    pub fn push(&mut self, f: &FeatureVector<T>) -> Result<()> {
        self.append(f.as_slice())
    }

    /// All retained entries, oldest first.
    pub fn view(&self) -> Clip<'_, T> {
        let start = self.head * self.dim;
        Clip {
            data: &self.data[start..start + self.len * self.dim],
            dim: self.dim,
        }
    }

    /// Entries `start..=len` (1-based, inclusive of the newest entry).
    pub fn slice(&self, start: usize) -> Result<Clip<'_, T>> {
        if start == 0 || start > self.len {
            return Err(DacatError::IndexOutOfRange {
                index: start,
                len: self.len,
            });
        }
        let view = self.view();
        Ok(Clip {
            data: &view.data[(start - 1) * self.dim..],
            dim: self.dim,
        })
    }

    /// Entry at 1-based position `i`.
    pub fn get(&self, i: usize) -> Option<&[T]> {
        if i == 0 || i > self.len {
            return None;
        }
        let off = (self.head + i - 1) * self.dim;
        Some(&self.data[off..off + self.dim])
    }

    pub fn last(&self) -> Option<&[T]> {
        self.get(self.len)
    }
}

/// Read-only view over consecutive cache entries.
#[derive(Clone, Copy, Debug)]
pub struct Clip<'a, T> {
    data: &'a [T],
    dim: usize,
}

impl<'a, T: Real> Clip<'a, T> {
    /// Builds a view over a row-major buffer of `data.len() / dim` entries.
    pub fn from_flat(data: &'a [T], dim: usize) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(DacatError::DimensionMismatch {
                expected: dim,
                found: data.len(),
            });
        }
        Ok(Self { data, dim })
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_flat(&self) -> &'a [T] {
        self.data
    }

    pub fn get(&self, i: usize) -> &'a [T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'a, T> {
        self.data.chunks_exact(self.dim)
    }

    /// Last `k` entries (or all of them when fewer are held).
    pub fn tail(&self, k: usize) -> Clip<'a, T> {
        let n = self.len();
        let skip = n.saturating_sub(k);
        Clip {
            data: &self.data[skip * self.dim..],
            dim: self.dim,
        }
    }

    pub fn to_vecs(&self) -> Vec<Vec<T>> {
        self.iter().map(|r| r.to_vec()).collect()
    }
}
