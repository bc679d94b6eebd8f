//! Closed-form vector-field families `V = (V_1, ..., V_d)` on `R^N`.
//!
//! A [`VectorFieldSet`] evaluates the `N x d` matrix `V(x)`, its first and
//! second derivatives, an optional drift `V_0`, and carries the uniform
//! ellipticity constants `Λ₁ |ξ|² <= ξ* V V* ξ <= Λ₂ |ξ|²` of its family.
//! Families are built by name through [`registry_build`]:
//!
//! | name            | `V(x)`                               | params              |
//! |-----------------|--------------------------------------|---------------------|
//! | `identity`      | `I_N`                                | none                |
//! | `const-sigma`   | `σ (I + s U)`, `U` strictly upper 1s | `sigma`, `shear`    |
//! | `sin-perturbed` | `I + ε diag(sin x_i)`                | `eps`, `|ε| < 1`    |
//!
//! All built-in families have `d = N`.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::rng::stream_rng;

/// Half-width of the box `[-B, B]^N` on which ellipticity is certified.
pub const PROBE_BOX: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipticity {
    pub lambda1: f64,
    pub lambda2: f64,
}

/// Drift `V_0`.
#[derive(Debug, Clone, PartialEq)]
pub enum Drift {
    Constant(Vec<f64>),
    /// `V_0(x)_i = a cos(x_i)`
    Cosine {
        amplitude: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
enum Family {
    Identity,
    /// Row-major `N x d`.
    Constant(Vec<f64>),
    SinPerturbed {
        eps: f64,
    },
    /// `V(x) = diag(x)`; smooth but not elliptic, used for closed-form flows.
    DiagonalLinear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorFieldSet {
    name: String,
    state_dim: usize,
    noise_dim: usize,
    family: Family,
    drift: Option<Drift>,
    ellipticity: Option<Ellipticity>,
}

impl VectorFieldSet {
    pub fn identity(n: usize) -> Self {
        Self {
            name: "identity".into(),
            state_dim: n,
            noise_dim: n,
            family: Family::Identity,
            drift: None,
            ellipticity: Some(Ellipticity {
                lambda1: 1.0,
                lambda2: 1.0,
            }),
        }
    }

    /// Constant field `V(x) = sigma` for a full-rank square `sigma`.
    pub fn constant(sigma: DMatrix<f64>) -> Result<Self> {
        let (n, d) = sigma.shape();
        if n == 0 || n != d {
            return Err(Error::Dimension(format!(
                "constant field needs a square matrix, got {n}x{d}"
            )));
        }
        let gram = &sigma * sigma.transpose();
        let eig = gram.symmetric_eigen();
        let lambda1 = eig.eigenvalues.min();
        let lambda2 = eig.eigenvalues.max();
        if !(lambda1 > 0.0) || lambda2 / lambda1 > 1e12 {
            return Err(Error::NotElliptic(format!(
                "sigma sigma* has eigenvalues in [{lambda1:e}, {lambda2:e}]"
            )));
        }
        let mut rows = Vec::with_capacity(n * d);
        for i in 0..n {
            for a in 0..d {
                rows.push(sigma[(i, a)]);
            }
        }
        Ok(Self {
            name: "const-sigma".into(),
            state_dim: n,
            noise_dim: d,
            family: Family::Constant(rows),
            drift: None,
            ellipticity: Some(Ellipticity { lambda1, lambda2 }),
        })
    }

    pub fn sin_perturbed(n: usize, eps: f64) -> Result<Self> {
        if !eps.is_finite() || eps.abs() >= 1.0 {
            return Err(Error::NotElliptic(format!(
                "sin-perturbed needs |eps| < 1, got {eps}: 1 + eps sin(x) vanishes at sin(x) = {:.6}",
                -1.0 / eps
            )));
        }
        let lo = 1.0 - eps.abs();
        let hi = 1.0 + eps.abs();
        Ok(Self {
            name: "sin-perturbed".into(),
            state_dim: n,
            noise_dim: n,
            family: Family::SinPerturbed { eps },
            drift: None,
            ellipticity: Some(Ellipticity {
                lambda1: lo * lo,
                lambda2: hi * hi,
            }),
        })
    }

    /// `V(x) = diag(x)`. Not elliptic; exists for closed-form flow checks.
    pub fn diagonal_linear(n: usize) -> Self {
        Self {
            name: "diagonal-linear".into(),
            state_dim: n,
            noise_dim: n,
            family: Family::DiagonalLinear,
            drift: None,
            ellipticity: None,
        }
    }

    pub fn with_drift(mut self, drift: Drift) -> Result<Self> {
        if let Drift::Constant(c) = &drift {
            if c.len() != self.state_dim {
                return Err(Error::Dimension(format!(
                    "drift has {} components, state has {}",
                    c.len(),
                    self.state_dim
                )));
            }
        }
        self.drift = Some(drift);
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// `N`
    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    /// `d`
    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn drift(&self) -> Option<&Drift> {
        self.drift.as_ref()
    }

    pub fn ellipticity(&self) -> Option<Ellipticity> {
        self.ellipticity
    }

    /// The matrix `V(x)` with columns `V_1(x), ..., V_d(x)`.
    pub fn matrix(&self, x: &[f64]) -> DMatrix<f64> {
        let (n, d) = (self.state_dim, self.noise_dim);
        match &self.family {
            Family::Identity => DMatrix::identity(n, d),
            Family::Constant(rows) => DMatrix::from_row_slice(n, d, rows),
            Family::SinPerturbed { eps } => {
                DMatrix::from_fn(
                    n,
                    d,
                    |i, a| if i == a { 1.0 + eps * x[i].sin() } else { 0.0 },
                )
            }
            Family::DiagonalLinear => {
                DMatrix::from_fn(n, d, |i, a| if i == a { x[i] } else { 0.0 })
            }
        }
    }

    /// `∂_k V_{iα}(x)`, flattened as `[(i * d + α) * N + k]`.
    pub fn jacobian(&self, x: &[f64]) -> Vec<f64> {
        let (n, d) = (self.state_dim, self.noise_dim);
        let mut out = vec![0.0; n * d * n];
        match &self.family {
            Family::Identity | Family::Constant(_) => {}
            Family::SinPerturbed { eps } => {
                for i in 0..n {
                    out[(i * d + i) * n + i] = eps * x[i].cos();
                }
            }
            Family::DiagonalLinear => {
                for i in 0..n {
                    out[(i * d + i) * n + i] = 1.0;
                }
            }
        }
        out
    }

    /// `out = V(x) v`.
    pub fn apply(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        let (n, d) = (self.state_dim, self.noise_dim);
        match &self.family {
            Family::Identity => out[..n].copy_from_slice(&v[..n]),
            Family::Constant(rows) => {
                for i in 0..n {
                    out[i] = (0..d).map(|a| rows[i * d + a] * v[a]).sum();
                }
            }
            Family::SinPerturbed { eps } => {
                for i in 0..n {
                    out[i] = (1.0 + eps * x[i].sin()) * v[i];
                }
            }
            Family::DiagonalLinear => {
                for i in 0..n {
                    out[i] = x[i] * v[i];
                }
            }
        }
    }

    /// `out = (∂V(x)[w]) v`, i.e. `Σ_{α,k} ∂_k V_{iα}(x) v_α w_k`.
    pub fn apply_tangent(&self, x: &[f64], v: &[f64], w: &[f64], out: &mut [f64]) {
        let n = self.state_dim;
        match &self.family {
            Family::Identity | Family::Constant(_) => out[..n].fill(0.0),
            Family::SinPerturbed { eps } => {
                for i in 0..n {
                    out[i] = eps * x[i].cos() * v[i] * w[i];
                }
            }
            Family::DiagonalLinear => {
                for i in 0..n {
                    out[i] = v[i] * w[i];
                }
            }
        }
    }

    /// Row-major `N x N` matrix `A_{ik} = Σ_α ∂_k V_{iα}(x) v_α`, the
    /// derivative of `x -> V(x) v`.
    pub fn tangent(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        let n = self.state_dim;
        out[..n * n].fill(0.0);
        match &self.family {
            Family::Identity | Family::Constant(_) => {}
            Family::SinPerturbed { eps } => {
                for i in 0..n {
                    out[i * n + i] = eps * x[i].cos() * v[i];
                }
            }
            Family::DiagonalLinear => {
                for i in 0..n {
                    out[i * n + i] = v[i];
                }
            }
        }
    }

    /// Row-major `N x N` matrix `Σ_{α,l} ∂_k ∂_l V_{iα}(x) v_α w_l`.
    pub fn second_tangent(&self, x: &[f64], v: &[f64], w: &[f64], out: &mut [f64]) {
        let n = self.state_dim;
        out[..n * n].fill(0.0);
        if let Family::SinPerturbed { eps } = &self.family {
            for i in 0..n {
                out[i * n + i] = -eps * x[i].sin() * v[i] * w[i];
            }
        }
    }

    /// `out += scale * V_0(x)`; no-op without drift.
    pub fn add_drift(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        match &self.drift {
            None => {}
            Some(Drift::Constant(c)) => {
                for (o, c) in out.iter_mut().zip(c) {
                    *o += scale * c;
                }
            }
            Some(Drift::Cosine { amplitude }) => {
                for (o, xi) in out.iter_mut().zip(x) {
                    *o += scale * amplitude * xi.cos();
                }
            }
        }
    }

    /// `out += scale * ∂V_0(x)` (row-major `N x N`).
    pub fn add_drift_tangent(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        let n = self.state_dim;
        if let Some(Drift::Cosine { amplitude }) = &self.drift {
            for i in 0..n {
                out[i * n + i] -= scale * amplitude * x[i].sin();
            }
        }
    }

    /// Probes `count` random `(x, ξ)` pairs in `[-10, 10]^N` and checks
    /// `Λ₁|ξ|² <= ξ* V V* ξ <= Λ₂|ξ|²`.
    pub fn certify_ellipticity(&self, count: usize, seed: u64) -> Result<()> {
        let Some(e) = self.ellipticity else {
            return Err(Error::NotElliptic(format!(
                "`{}` declares no ellipticity constants",
                self.name
            )));
        };
        let n = self.state_dim;
        let mut rng = stream_rng(seed, 0);
        let mut x = vec![0.0; n];
        for _ in 0..count {
            x.iter_mut()
                .for_each(|v| *v = rng.gen_range(-PROBE_BOX..=PROBE_BOX));
            let xi = nalgebra::DVector::from_fn(n, |_, _| rng.gen_range(-1.0..=1.0));
            let m = self.matrix(&x);
            let q = (m.transpose() * &xi).norm_squared();
            let r = xi.norm_squared();
            let slack = 1e-12 * r;
            if q < e.lambda1 * r - slack || q > e.lambda2 * r + slack {
                return Err(Error::NotElliptic(format!(
                    "`{}`: ξ*VV*ξ = {q} outside [{}, {}] |ξ|² at x = {x:?}",
                    self.name,
                    e.lambda1 * r,
                    e.lambda2 * r
                )));
            }
        }
        Ok(())
    }
}

pub struct FieldParam {
    pub name: &'static str,
    pub default: f64,
    pub doc: &'static str,
}

pub struct FieldRegistryEntry {
    pub name: &'static str,
    pub params: &'static [FieldParam],
    pub doc: &'static str,
    build: fn(&BTreeMap<String, f64>, usize) -> Result<VectorFieldSet>,
}

impl FieldRegistryEntry {
    pub fn build(&self, params: &BTreeMap<String, f64>, n: usize) -> Result<VectorFieldSet> {
        for key in params.keys() {
            if !self.params.iter().any(|p| p.name == key) {
                return Err(invalid(
                    "field_param",
                    format!("`{key}` is not a parameter of `{}`", self.name),
                ));
            }
        }
        (self.build)(params, n)
    }

    fn param(&self, params: &BTreeMap<String, f64>, name: &str) -> f64 {
        params.get(name).copied().unwrap_or_else(|| {
            self.params
                .iter()
                .find(|p| p.name == name)
                .map(|p| p.default)
                .expect("declared parameter")
        })
    }
}

pub static REGISTRY: &[FieldRegistryEntry] = &[
    FieldRegistryEntry {
        name: "identity",
        params: &[],
        doc: "V(x) = I; Λ₁ = Λ₂ = 1",
        build: |_, n| Ok(VectorFieldSet::identity(n)),
    },
    FieldRegistryEntry {
        name: "const-sigma",
        params: &[
            FieldParam {
                name: "sigma",
                default: 1.0,
                doc: "overall scale, nonzero",
            },
            FieldParam {
                name: "shear",
                default: 0.0,
                doc: "value of every strictly upper-triangular entry before scaling",
            },
        ],
        doc: "V(x) = sigma (I + shear U); Λ₁, Λ₂ = extreme eigenvalues of VV*",
        build: |p, n| {
            let entry = entry("const-sigma").expect("registered");
            let sigma = entry.param(p, "sigma");
            let shear = entry.param(p, "shear");
            if sigma == 0.0 || !sigma.is_finite() || !shear.is_finite() {
                return Err(Error::NotElliptic(format!(
                    "const-sigma needs finite nonzero sigma, got sigma = {sigma}, shear = {shear}"
                )));
            }
            let m = DMatrix::from_fn(n, n, |i, j| {
                sigma
                    * match i.cmp(&j) {
                        std::cmp::Ordering::Equal => 1.0,
                        std::cmp::Ordering::Less => shear,
                        std::cmp::Ordering::Greater => 0.0,
                    }
            });
            VectorFieldSet::constant(m)
        },
    },
    FieldRegistryEntry {
        name: "sin-perturbed",
        params: &[FieldParam {
            name: "eps",
            default: 0.1,
            doc: "perturbation size, |eps| < 1",
        }],
        doc: "V(x) = I + eps diag(sin x_i); Λ₁ = (1-|eps|)², Λ₂ = (1+|eps|)²",
        build: |p, n| {
            let entry = entry("sin-perturbed").expect("registered");
            VectorFieldSet::sin_perturbed(n, entry.param(p, "eps"))
        },
    },
];

pub fn entry(name: &str) -> Option<&'static FieldRegistryEntry> {
    REGISTRY.iter().find(|e| e.name == name)
}

/// Builds the registered family `name` on `R^n` with `params` overriding the
/// documented defaults.
pub fn registry_build(
    name: &str,
    params: &BTreeMap<String, f64>,
    n: usize,
) -> Result<VectorFieldSet> {
    if n == 0 {
        return Err(invalid("n", "state dimension must be positive"));
    }
    let entry = entry(name).ok_or_else(|| Error::UnknownField(name.to_string()))?;
    entry.build(params, n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(kv: &[(&str, f64)]) -> BTreeMap<String, f64> {
        kv.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn identity_example() {
        let v = registry_build("identity", &BTreeMap::new(), 2).unwrap();
        assert_eq!(v.matrix(&[3.0, -1.0]), DMatrix::identity(2, 2));
        let e = v.ellipticity().unwrap();
        assert_eq!((e.lambda1, e.lambda2), (1.0, 1.0));
    }

    #[test]
    fn sin_perturbed_example() {
        let v = registry_build("sin-perturbed", &params(&[("eps", 0.1)]), 1).unwrap();
        let x = 0.7f64;
        assert!((v.matrix(&[x])[(0, 0)] - (1.0 + 0.1 * x.sin())).abs() < 1e-15);
        let e = v.ellipticity().unwrap();
        assert!((e.lambda1 - 0.81).abs() < 1e-15);
        assert!((e.lambda2 - 1.21).abs() < 1e-15);
    }

    #[test]
    fn sin_perturbed_rejects_large_eps() {
        let err = registry_build("sin-perturbed", &params(&[("eps", 1.5)]), 1).unwrap_err();
        assert!(matches!(err, Error::NotElliptic(_)));
        assert!(err.to_string().contains("-0.666667"));
    }

    #[test]
    fn unknown_name_and_param() {
        assert!(matches!(
            registry_build("nope", &BTreeMap::new(), 1),
            Err(Error::UnknownField(_))
        ));
        assert!(registry_build("identity", &params(&[("eps", 0.1)]), 1).is_err());
    }

    #[test]
    fn ellipticity_certificate_all_families() {
        let cases = [
            registry_build("identity", &BTreeMap::new(), 3).unwrap(),
            registry_build("const-sigma", &params(&[("sigma", 0.7), ("shear", 0.5)]), 3).unwrap(),
            registry_build("sin-perturbed", &params(&[("eps", 0.3)]), 2).unwrap(),
            registry_build("sin-perturbed", &params(&[("eps", -0.9)]), 1).unwrap(),
        ];
        for v in &cases {
            v.certify_ellipticity(100, 11).unwrap();
        }
        assert!(VectorFieldSet::diagonal_linear(1)
            .certify_ellipticity(10, 1)
            .is_err());
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let fields = [
            registry_build("sin-perturbed", &params(&[("eps", 0.4)]), 3).unwrap(),
            registry_build("const-sigma", &params(&[("shear", 0.2)]), 3).unwrap(),
            VectorFieldSet::diagonal_linear(3),
        ];
        let mut rng = stream_rng(5, 0);
        for v in &fields {
            let (n, d) = (v.state_dim(), v.noise_dim());
            for _ in 0..20 {
                let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
                let jac = v.jacobian(&x);
                let delta = 1e-6;
                for k in 0..n {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[k] += delta;
                    xm[k] -= delta;
                    let fd = (v.matrix(&xp) - v.matrix(&xm)) / (2.0 * delta);
                    for i in 0..n {
                        for a in 0..d {
                            let exact = jac[(i * d + a) * n + k];
                            let err = (fd[(i, a)] - exact).abs();
                            assert!(err <= 1e-6 * exact.abs().max(1.0), "{} {err}", v.name());
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn tangent_helpers_agree_with_jacobian() {
        let v = registry_build("sin-perturbed", &params(&[("eps", 0.4)]), 2).unwrap();
        let x = [0.3, -1.2];
        let b = [0.5, 2.0];
        let w = [1.5, -0.25];
        let jac = v.jacobian(&x);
        let mut a = [0.0; 4];
        v.tangent(&x, &b, &mut a);
        let mut tw = [0.0; 2];
        v.apply_tangent(&x, &b, &w, &mut tw);
        for i in 0..2 {
            let mut s = 0.0;
            for k in 0..2 {
                let aik: f64 = (0..2).map(|al| jac[(i * 2 + al) * 2 + k] * b[al]).sum();
                assert!((aik - a[i * 2 + k]).abs() < 1e-15);
                s += aik * w[k];
            }
            assert!((s - tw[i]).abs() < 1e-15);
        }
        // second derivative by differencing the tangent
        let delta = 1e-6;
        let mut s2 = [0.0; 4];
        v.second_tangent(&x, &b, &w, &mut s2);
        let xp = [x[0] + delta * w[0], x[1] + delta * w[1]];
        let xm = [x[0] - delta * w[0], x[1] - delta * w[1]];
        let (mut ap, mut am) = ([0.0; 4], [0.0; 4]);
        v.tangent(&xp, &b, &mut ap);
        v.tangent(&xm, &b, &mut am);
        for i in 0..4 {
            assert!(((ap[i] - am[i]) / (2.0 * delta) - s2[i]).abs() < 1e-8);
        }
    }
}
