use num_complex::Complex64 as C64;

/// Complex samples on the grid nodes, with an optional cache of eigenbasis
/// coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    values: Vec<C64>,
    coefficients: Option<Vec<C64>>,
}

impl SpectralField {
    pub fn new(values: Vec<C64>) -> Self {
        Self {
            values,
            coefficients: None,
        }
    }

    pub fn from_real(values: &[f64]) -> Self {
        Self::new(values.iter().map(|&v| C64::new(v, 0.0)).collect())
    }

    pub fn zeros(n: usize) -> Self {
        Self::new(vec![C64::new(0.0, 0.0); n])
    }

    pub(crate) fn with_cache(values: Vec<C64>, coefficients: Vec<C64>) -> Self {
        Self {
            values,
            coefficients: Some(coefficients),
        }
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<C64> {
        self.values
    }

    pub fn cached_coefficients(&self) -> Option<&[C64]> {
        self.coefficients.as_deref()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl From<Vec<C64>> for SpectralField {
    fn from(values: Vec<C64>) -> Self {
        Self::new(values)
    }
}

/// Continuum inner product `h * sum u conj(v)`.
pub fn inner(u: &[C64], v: &[C64], h: f64) -> C64 {
    debug_assert_eq!(u.len(), v.len());
    u.iter().zip(v).map(|(a, b)| a * b.conj()).sum::<C64>() * h
}

/// Real inner product `Re h * sum u conj(v)`.
pub fn real_inner(u: &[C64], v: &[C64], h: f64) -> f64 {
    u.iter()
        .zip(v)
        .map(|(a, b)| a.re * b.re + a.im * b.im)
        .sum::<f64>()
        * h
}

pub fn l2_norm(u: &[C64], h: f64) -> f64 {
    (u.iter().map(|v| v.norm_sqr()).sum::<f64>() * h).sqrt()
}

pub fn sup_norm(u: &[C64]) -> f64 {
    u.iter().fold(0.0f64, |m, v| m.max(v.norm()))
}

/// Discrete `L^p` norm with quadrature weight `h`; `p = inf` gives the sup norm.
pub fn lp_norm(u: &[C64], h: f64, p: f64) -> f64 {
    if p.is_infinite() {
        return sup_norm(u);
    }
    (u.iter().map(|v| v.norm().powf(p)).sum::<f64>() * h).powf(1.0 / p)
}

pub fn sub(u: &[C64], v: &[C64]) -> Vec<C64> {
    u.iter().zip(v).map(|(a, b)| a - b).collect()
}

pub fn add(u: &[C64], v: &[C64]) -> Vec<C64> {
    u.iter().zip(v).map(|(a, b)| a + b).collect()
}

pub fn scale(u: &[C64], s: C64) -> Vec<C64> {
    u.iter().map(|a| a * s).collect()
}

/// `u + s v` in place.
pub fn axpy(u: &mut [C64], s: C64, v: &[C64]) {
    for (a, b) in u.iter_mut().zip(v) {
        *a += s * b;
    }
}

pub fn to_complex(u: &[f64]) -> Vec<C64> {
    u.iter().map(|&v| C64::new(v, 0.0)).collect()
}
