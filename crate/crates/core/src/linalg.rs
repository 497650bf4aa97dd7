//! Dense helpers over row-major `f64` slices.

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `out += m · x` for an `m` of shape `rows × x.len()`.
pub fn matvec_acc(m: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    debug_assert_eq!(m.len(), out.len() * cols);
    for (row, o) in m.chunks_exact(cols).zip(out.iter_mut()) {
        *o += dot(row, x);
    }
}

/// `out += mᵀ · dz` for an `m` of shape `dz.len() × out.len()`.
pub fn matvec_t_acc(m: &[f64], dz: &[f64], out: &mut [f64]) {
    let cols = out.len();
    debug_assert_eq!(m.len(), dz.len() * cols);
    for (row, &d) in m.chunks_exact(cols).zip(dz) {
        if d == 0.0 {
            continue;
        }
        for (o, &w) in out.iter_mut().zip(row) {
            *o += d * w;
        }
    }
}

/// `g += dz · xᵀ` for a `g` of shape `dz.len() × x.len()`.
pub fn outer_acc(g: &mut [f64], dz: &[f64], x: &[f64]) {
    let cols = x.len();
    debug_assert_eq!(g.len(), dz.len() * cols);
    for (row, &d) in g.chunks_exact_mut(cols).zip(dz) {
        if d == 0.0 {
            continue;
        }
        for (gv, &xv) in row.iter_mut().zip(x) {
            *gv += d * xv;
        }
    }
}

pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yv, &xv) in y.iter_mut().zip(x) {
        *yv += alpha * xv;
    }
}

/// Numerically stable softmax.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    out
}

/// Cosine similarity, defined as 0 when either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot(a, b) / (na * nb)
}
