//! Row-major dense complex matrices of small dimension (gate blocks, local
//! generators). Large operators live in the oracle and use nalgebra.

use crate::scalar::{cone, czero, Real, C};

pub fn identity<T: Real>(dim: usize) -> Vec<C<T>> {
    let mut m = vec![czero(); dim * dim];
    for i in 0..dim {
        m[i * dim + i] = cone();
    }
    m
}

pub fn matmul<T: Real>(a: &[C<T>], b: &[C<T>], dim: usize) -> Vec<C<T>> {
    let mut out = vec![czero(); dim * dim];
    for i in 0..dim {
        for k in 0..dim {
            let aik = a[i * dim + k];
            if aik == czero() {
                continue;
            }
            for j in 0..dim {
                out[i * dim + j] += aik * b[k * dim + j];
            }
        }
    }
    out
}

pub fn dagger<T: Real>(a: &[C<T>], dim: usize) -> Vec<C<T>> {
    let mut out = vec![czero(); dim * dim];
    for i in 0..dim {
        for j in 0..dim {
            out[j * dim + i] = a[i * dim + j].conj();
        }
    }
    out
}

pub fn kron<T: Real>(a: &[C<T>], da: usize, b: &[C<T>], db: usize) -> Vec<C<T>> {
    let d = da * db;
    let mut out = vec![czero(); d * d];
    for i in 0..da {
        for j in 0..da {
            let aij = a[i * da + j];
            for k in 0..db {
                for l in 0..db {
                    out[(i * db + k) * d + j * db + l] = aij * b[k * db + l];
                }
            }
        }
    }
    out
}

/// max_ij |(A†A − I)_ij|
pub fn unitarity_deviation<T: Real>(a: &[C<T>], dim: usize) -> T {
    let p = matmul(&dagger(a, dim), a, dim);
    let mut dev = T::zero();
    for i in 0..dim {
        for j in 0..dim {
            let target = if i == j { cone() } else { czero() };
            dev = dev.max((p[i * dim + j] - target).norm());
        }
    }
    dev
}

fn one_norm<T: Real>(a: &[C<T>], dim: usize) -> T {
    (0..dim)
        .map(|j| (0..dim).map(|i| a[i * dim + j].norm()).sum::<T>())
        .fold(T::zero(), T::max)
}

/// `exp(-i·t·H)` for a small Hermitian `H`, by scaling and squaring of a
/// truncated Taylor series. Accurate to working precision for the block
/// sizes used here (dim ≤ 16).
pub fn expm_i<T: Real>(h: &[C<T>], t: T, dim: usize) -> Vec<C<T>> {
    let minus_i_t = C::new(T::zero(), -t);
    let a: Vec<C<T>> = h.iter().map(|&x| x * minus_i_t).collect();
    expm(&a, dim)
}

pub fn expm<T: Real>(a: &[C<T>], dim: usize) -> Vec<C<T>> {
    let norm = one_norm(a, dim).as_f64();
    let mut squarings = 0u32;
    if norm > 0.25 {
        squarings = (norm / 0.25).log2().ceil() as u32;
    }
    let scale = T::of(0.5f64.powi(squarings as i32));
    let scaled: Vec<C<T>> = a.iter().map(|&x| x * scale).collect();

    let mut result = identity::<T>(dim);
    let mut term = identity::<T>(dim);
    for k in 1..=20 {
        term = matmul(&term, &scaled, dim);
        let inv_k = T::one() / T::of(k as f64);
        for x in term.iter_mut() {
            *x = *x * inv_k;
        }
        let mut biggest = T::zero();
        for (r, x) in result.iter_mut().zip(&term) {
            *r += *x;
            biggest = biggest.max(x.norm());
        }
        if biggest < T::epsilon() * T::of(1e-2) {
            break;
        }
    }
    for _ in 0..squarings {
        result = matmul(&result, &result, dim);
    }
    result
}
