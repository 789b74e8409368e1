//! Periodic Haar wavelets on the unit torus `T^d`, `d ∈ {1, 2}`, with a
//! single global index `ℓ = 1, 2, …`.
//!
//! Ordering is level-major, then detail type, then lexicographic position.
//! `ℓ = 1` is the constant scaling function and for a detail function at
//! level `j` with type `e ∈ 1..2^d` and flattened position `p`,
//!
//! ```text
//! ℓ - 1 = e · 2^{dj} + p
//! ```
//!
//! Detail type `e` is a bit mask over axes (axis 0 is the most significant
//! bit); a set bit means the Haar mother wavelet is used along that axis and
//! a clear bit the box function. A truncation `N` completes a level when
//! `N = 2^{dJ}`, in which case levels `0..J` are fully present.
//!
//! Grid functions are sampled at cell midpoints of a uniform periodic grid
//! with `M` points per axis; on such grids the Haar functions are exactly
//! orthonormal under the quadrature weight `M^{-d}` whenever `M^d ≥ N`.

use crate::error::{invalid, Error, Result};

/// Which one-dimensional factor sits on each axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WaveletKind {
    Scaling,
    /// Detail type mask in `1..2^d`.
    Detail(u8),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GlobalIndex {
    pub ell: usize,
    pub level: u32,
    pub position: Vec<usize>,
    pub kind: WaveletKind,
}

fn check_dim(d: usize) -> Result<()> {
    if d == 1 || d == 2 {
        Ok(())
    } else {
        Err(invalid("d", format!("dimension must be 1 or 2, got {d}")))
    }
}

/// Decodes a global index into level, position and kind.
pub fn index_decode(ell: usize, d: usize) -> Result<GlobalIndex> {
    check_dim(d)?;
    if ell == 0 {
        return Err(invalid("ell", "global index starts at 1"));
    }
    if ell == 1 {
        return Ok(GlobalIndex {
            ell,
            level: 0,
            position: vec![0; d],
            kind: WaveletKind::Scaling,
        });
    }
    let m = ell - 1;
    // largest j with 2^{dj} <= m
    let level = (usize::BITS - 1 - m.leading_zeros()) / d as u32;
    let shift = d as u32 * level;
    let kind = (m >> shift) as u8;
    let flat = m & ((1usize << shift) - 1);
    let side = 1usize << level;
    let position = if d == 1 {
        vec![flat]
    } else {
        vec![flat / side, flat % side]
    };
    Ok(GlobalIndex {
        ell,
        level,
        position,
        kind: WaveletKind::Detail(kind),
    })
}

/// Inverse of [`index_decode`].
pub fn index_encode(index: &GlobalIndex, d: usize) -> Result<usize> {
    check_dim(d)?;
    if index.position.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: index.position.len(),
            context: "wavelet position",
        });
    }
    match index.kind {
        WaveletKind::Scaling => Ok(1),
        WaveletKind::Detail(e) => {
            if e == 0 || e as usize >= 1 << d {
                return Err(invalid("kind", format!("detail type {e} out of range for d={d}")));
            }
            let side = 1usize << index.level;
            if index.position.iter().any(|&k| k >= side) {
                return Err(invalid("position", "position outside [0, 2^level)"));
            }
            let flat = index.position.iter().fold(0, |acc, &k| acc * side + k);
            Ok(((e as usize) << (d as u32 * index.level)) + flat + 1)
        }
    }
}

/// Returns `J` if `n = 2^{dJ}`, i.e. if the truncation completes a level.
pub fn complete_levels(n: usize, d: usize) -> Option<u32> {
    if n == 0 || !n.is_power_of_two() {
        return None;
    }
    let bits = n.trailing_zeros();
    bits.is_multiple_of(d as u32).then_some(bits / d as u32)
}

/// Samples of a function on a uniform periodic grid, row-major for `d = 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub values: Vec<f64>,
    pub grid_size: usize,
    pub dim: usize,
}

impl GridFunction {
    pub fn new(values: Vec<f64>, grid_size: usize, dim: usize) -> Result<Self> {
        check_dim(dim)?;
        if !grid_size.is_power_of_two() {
            return Err(invalid("grid_size", format!("{grid_size} is not a power of two")));
        }
        let expected = grid_size.pow(dim as u32);
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: values.len(),
                context: "grid function samples",
            });
        }
        Ok(Self { values, grid_size, dim })
    }

    pub fn zeros(grid_size: usize, dim: usize) -> Result<Self> {
        Self::new(vec![0.0; grid_size.pow(dim as u32)], grid_size, dim)
    }

    /// Discrete L² norm with quadrature weight `M^{-d}`.
    pub fn l2_norm(&self) -> f64 {
        let w = 1.0 / self.values.len() as f64;
        (self.values.iter().map(|v| v * v).sum::<f64>() * w).sqrt()
    }
}

fn check_grid(n: usize, d: usize, grid_size: usize) -> Result<()> {
    check_dim(d)?;
    if !grid_size.is_power_of_two() {
        return Err(invalid("grid_size", format!("{grid_size} is not a power of two")));
    }
    if grid_size.pow(d as u32) < n {
        return Err(Error::GridTooCoarse {
            grid_size,
            dim: d,
            truncation: n,
        });
    }
    Ok(())
}

/// Calls `f(flat_grid_index, value)` for every grid point in the support of
/// the basis function `ell`.
fn for_each_sample(ell: usize, d: usize, grid_size: usize, mut f: impl FnMut(usize, f64)) {
    let index = index_decode(ell, d).expect("validated index");
    let mask = match index.kind {
        WaveletKind::Scaling => {
            for i in 0..grid_size.pow(d as u32) {
                f(i, 1.0);
            }
            return;
        }
        WaveletKind::Detail(e) => e,
    };
    let block = grid_size >> index.level;
    let half = block / 2;
    let amplitude = ((1u64 << (d as u32 * index.level)) as f64).sqrt();
    let factor = |axis: usize, offset: usize| -> f64 {
        let detail = mask >> (d - 1 - axis) & 1 == 1;
        if detail && offset >= half {
            -1.0
        } else {
            1.0
        }
    };
    if d == 1 {
        let start = index.position[0] * block;
        for off in 0..block {
            f(start + off, amplitude * factor(0, off));
        }
    } else {
        let (r0, c0) = (index.position[0] * block, index.position[1] * block);
        for a in 0..block {
            let fa = factor(0, a);
            for b in 0..block {
                f((r0 + a) * grid_size + c0 + b, amplitude * fa * factor(1, b));
            }
        }
    }
}

/// Evaluates `Σ_{ℓ≤N} c_ℓ ψ_ℓ` on the grid.
pub fn synthesize(coeffs: &[f64], d: usize, grid_size: usize) -> Result<GridFunction> {
    check_grid(coeffs.len(), d, grid_size)?;
    let mut out = GridFunction::zeros(grid_size, d)?;
    for (i, &c) in coeffs.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        for_each_sample(i + 1, d, grid_size, |k, v| out.values[k] += c * v);
    }
    Ok(out)
}

/// Discrete inner products `⟨f, ψ_ℓ⟩` for `ℓ ≤ n`.
pub fn analyze(f: &GridFunction, n: usize) -> Result<Vec<f64>> {
    check_grid(n, f.dim, f.grid_size)?;
    let w = 1.0 / f.values.len() as f64;
    Ok((1..=n)
        .map(|ell| {
            let mut acc = 0.0;
            for_each_sample(ell, f.dim, f.grid_size, |k, v| acc += f.values[k] * v);
            acc * w
        })
        .collect())
}

/// Samples of `ψ_ℓ` on the whole grid.
pub fn basis_function(ell: usize, d: usize, grid_size: usize) -> Result<GridFunction> {
    check_grid(ell, d, grid_size)?;
    let mut out = GridFunction::zeros(grid_size, d)?;
    for_each_sample(ell, d, grid_size, |k, v| out.values[k] = v);
    Ok(out)
}
