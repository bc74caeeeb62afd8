//! Dense vector helpers. All reductions run strictly left to right so that
//! two code paths doing the same arithmetic agree bitwise.

/// A dense model, gradient or message vector.
pub type ParamVector = Vec<f64>;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + x * y)
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> ParamVector {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add_assign(acc: &mut [f64], v: &[f64]) {
    for (a, x) in acc.iter_mut().zip(v) {
        *a += x;
    }
}

/// `x <- x - gamma * g`
pub fn step(x: &mut [f64], gamma: f64, g: &[f64]) {
    for (xi, gi) in x.iter_mut().zip(g) {
        *xi -= gamma * gi;
    }
}

/// Left-to-right sum of equally sized vectors.
pub fn sum<'a, I>(dim: usize, vs: I) -> ParamVector
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut acc = vec![0.0; dim];
    for v in vs {
        add_assign(&mut acc, v);
    }
    acc
}

/// Left-to-right sum divided by the count.
pub fn mean<'a, I>(dim: usize, vs: I) -> ParamVector
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut n = 0usize;
    let mut acc = vec![0.0; dim];
    for v in vs {
        add_assign(&mut acc, v);
        n += 1;
    }
    let n = n as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
