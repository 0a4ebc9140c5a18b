//! Second moment for fbm-in-time noise and `sigma = identity` as a truncated
//! Wiener chaos series.
//!
//! Term `n` is `n! |h~_n|^2`, which equals the sum over permutations `pi` of
//! two independent ordered chains `(s, y)`, `(r, z)`:
//!
//! ```text
//! int int h(s, y) h(r, z) prod_i gamma(s_i - r_pi(i)) Lambda(y_i - z_pi(i))
//! ```
//!
//! with `h(s, y) = p(t - s_n, x, y_n) ... p(s_2 - s_1, y_2, y_1) (G u0)_{s_1}(y_1)`.
//! Chains are drawn backwards from `x`: ordered uniform times, and each point
//! from a Gaussian proposal of the kernel's width mixed with a uniform on the
//! domain. Both covariance kernels are cell-averaged so the integrand stays
//! bounded.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::gamma::gamma;

use crate::covariance::NoiseSpec;
use crate::error::{Error, Result};
use crate::noise::{fbm_cell_integral, riesz_cell_integral};
use crate::quad;
use crate::rng::StreamKey;
use crate::solver::InitialCondition;
use crate::spectral::{reference_kernel, SpectralBasis};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChaosOptions {
    pub samples: usize,
    pub seed: u64,
    /// Independent sample blocks; fixed so results do not depend on threads.
    pub blocks: usize,
    /// Weight of the uniform component in the spatial proposal.
    pub defensive: f64,
    /// Width of the time cells for `gamma`, as a fraction of `t`.
    pub time_cell_fraction: f64,
    /// Width of the space cells for `Lambda`; the basis grid spacing if absent.
    pub space_cell: Option<f64>,
}

impl ChaosOptions {
    pub fn new(samples: usize, seed: u64) -> Self {
        ChaosOptions { samples, seed, blocks: 64, defensive: 0.1, time_cell_fraction: 1e-3, space_cell: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChaosTerm {
    pub n: usize,
    /// `n! |h~_n|^2`.
    pub norm: f64,
    /// `xi^{2n} n! |h~_n|^2`.
    pub value: f64,
    /// Standard error of `value`.
    pub mc_error: f64,
    pub low_precision: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChaosResult {
    pub t: f64,
    pub x: f64,
    pub zeroth: f64,
    pub terms: Vec<ChaosTerm>,
    pub total: f64,
}

struct Integrand<'a> {
    alpha: f64,
    basis: &'a SpectralBasis,
    u0: InitialCondition,
    hurst: f64,
    beta: f64,
    time_cell: f64,
    space_cell: f64,
    defensive: f64,
    floor2: f64,
}

impl Integrand<'_> {
    fn kernel(&self, tau: f64, a: f64, b: f64) -> f64 {
        if self.alpha == 2.0 {
            reference_kernel(2.0, tau, a, b).unwrap_or(0.0)
        } else {
            self.basis.heat_kernel(tau, a, b).unwrap_or(0.0)
        }
    }

    fn semigroup(&self, s: f64, y: f64) -> f64 {
        self.u0.semigroup(self.alpha, s, y)
    }

    fn gamma(&self, d: f64) -> f64 {
        fbm_cell_integral(self.hurst, self.time_cell, d.abs()) / (self.time_cell * self.time_cell)
    }

    fn lambda(&self, d: f64) -> f64 {
        let h = self.space_cell;
        riesz_cell_integral(self.beta, (0.0, h), (d, d + h)) / (h * h)
    }

    fn proposal_sd(&self, tau: f64) -> f64 {
        (2.0 * tau.powf(2.0 / self.alpha) + self.floor2).sqrt()
    }

    /// Draw one ordered chain; returns its importance weight (zero when a
    /// point leaves the domain).
    fn chain<R: Rng>(&self, rng: &mut R, t: f64, x: f64, times: &mut [f64], points: &mut [f64]) -> f64 {
        let n = times.len();
        for s in times.iter_mut() {
            *s = rng.random::<f64>() * t;
        }
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut weight = t.powi(n as i32) / gamma(n as f64 + 1.0);
        let mut center = x;
        let mut upper = t;
        for i in (0..n).rev() {
            let tau = upper - times[i];
            if !(tau > 0.0) {
                return 0.0;
            }
            let sd = self.proposal_sd(tau);
            let y = if rng.random::<f64>() < self.defensive {
                rng.random::<f64>() * 2.0 - 1.0
            } else {
                center + sd * rng.sample::<f64, _>(StandardNormal)
            };
            if !(y.abs() < 1.0) {
                return 0.0;
            }
            let z = (y - center) / sd;
            let q = self.defensive / 2.0
                + (1.0 - self.defensive) * (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt());
            weight *= self.kernel(tau, center, y) / q;
            points[i] = y;
            center = y;
            upper = times[i];
        }
        weight * self.semigroup(times[0], points[0])
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..n {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out.sort();
    out
}

/// Mean and variance accumulator, merged in a fixed order.
#[derive(Clone, Copy, Default)]
struct Moments {
    count: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, v: f64) {
        self.count += 1.0;
        let d = v - self.mean;
        self.mean += d / self.count;
        self.m2 += d * (v - self.mean);
    }

    fn merge(self, o: Moments) -> Moments {
        if o.count == 0.0 {
            return self;
        }
        if self.count == 0.0 {
            return o;
        }
        let count = self.count + o.count;
        let d = o.mean - self.mean;
        Moments {
            count,
            mean: self.mean + d * o.count / count,
            m2: self.m2 + o.m2 + d * d * self.count * o.count / count,
        }
    }

    fn std_error(&self) -> f64 {
        if self.count < 2.0 {
            return f64::NAN;
        }
        (self.m2 / (self.count - 1.0) / self.count).sqrt()
    }
}

/// Truncated chaos series of `E|u_t(x)|^2` up to order `n_max <= 3`.
pub fn chaos_second_moment_fbm(
    basis: &SpectralBasis,
    noise: &NoiseSpec,
    u0: &InitialCondition,
    t: f64,
    x: f64,
    n_max: usize,
    opts: &ChaosOptions,
) -> Result<ChaosResult> {
    let hurst = noise
        .temporal
        .hurst()
        .ok_or_else(|| Error::Config("the chaos series is implemented for fbm time only".into()))?;
    noise.check_pairing(basis.alpha())?;
    let beta = noise.spatial.riesz_beta().unwrap_or_default();
    if n_max > 3 {
        return Err(Error::Config(format!("chaos order {n_max} above the supported 3")));
    }
    if !(t > 0.0) || !(x.abs() < 1.0) {
        return Err(Error::Domain(format!("need t > 0 and x in (-1, 1), got t={t}, x={x}")));
    }
    if opts.samples < 2 || opts.blocks == 0 {
        return Err(Error::Config("need at least two samples and one block".into()));
    }
    let alpha = basis.alpha();
    let n_modes = basis.n_modes() as f64;
    let ig = Integrand {
        alpha,
        basis,
        u0: *u0,
        hurst,
        beta,
        time_cell: opts.time_cell_fraction * t,
        space_cell: opts.space_cell.unwrap_or(basis.grid().spacing()),
        defensive: opts.defensive,
        floor2: (2.0 / n_modes).powi(2),
    };
    let zeroth = u0.semigroup(alpha, t, x).powi(2);
    let per_block = opts.samples.div_ceil(opts.blocks);
    let mut terms = Vec::new();
    for n in 1..=n_max {
        let perms = permutations(n);
        let stats: Vec<Moments> = (0..opts.blocks)
            .into_par_iter()
            .map(|b| {
                let mut rng = StreamKey::new(opts.seed, b as u64).step(n as u64);
                let mut acc = Moments::default();
                let (mut s, mut y) = (vec![0.0; n], vec![0.0; n]);
                let (mut r, mut z) = (vec![0.0; n], vec![0.0; n]);
                let count = per_block.min(opts.samples.saturating_sub(b * per_block));
                for _ in 0..count {
                    let w1 = ig.chain(&mut rng, t, x, &mut s, &mut y);
                    let w2 = ig.chain(&mut rng, t, x, &mut r, &mut z);
                    let mut v = 0.0;
                    if w1 != 0.0 && w2 != 0.0 {
                        for p in &perms {
                            let mut prod = 1.0;
                            for i in 0..n {
                                prod *= ig.gamma(s[i] - r[p[i]]) * ig.lambda(y[i] - z[p[i]]);
                            }
                            v += prod;
                        }
                        v *= w1 * w2;
                    }
                    acc.push(v);
                }
                acc
            })
            .collect();
        let total = stats.into_iter().fold(Moments::default(), Moments::merge);
        let scale = noise.xi.powi(2 * n as i32);
        let norm = total.mean;
        let se = total.std_error();
        terms.push(ChaosTerm {
            n,
            norm,
            value: scale * norm,
            mc_error: scale * se,
            low_precision: !(se <= 0.1 * norm.abs()),
        });
    }
    let total = zeroth + terms.iter().map(|c| c.value).sum::<f64>();
    Ok(ChaosResult { t, x, zeroth, terms, total })
}

/// First chaos norm for `alpha = 2` in free space with `(G u0) = 1`:
/// `C_H m_beta 2^{-beta/2} t^{2H - beta/2} J`, where `m_beta = E|Z|^{-beta}`
/// and `J = 2 I / (2H - beta/2)` with `I = int_0^1 w^{2H-2} (2-w)^{-beta/2} dw`.
///
/// Away from the boundary and at short times this matches the first chaos
/// term up to exponentially small corrections.
pub fn free_space_first_term(hurst: f64, beta: f64, t: f64) -> Result<f64> {
    if !(hurst > 0.5 && hurst < 1.0 && beta > 0.0 && beta < 1.0 && t > 0.0) {
        return Err(Error::Domain("need H in (1/2,1), beta in (0,1), t > 0".into()));
    }
    let c_h = hurst * (2.0 * hurst - 1.0);
    let m_beta = 2f64.powf(-beta / 2.0) * gamma((1.0 - beta) / 2.0) / std::f64::consts::PI.sqrt();
    let inner = quad::integrate_singular(
        |w: f64| w.powf(2.0 * hurst - 2.0) * (2.0 - w).powf(-beta / 2.0),
        0.0,
        1.0,
        2.0 - 2.0 * hurst,
        0.0,
        1e-13,
    )?;
    let j = 2.0 * inner / (2.0 * hurst - beta / 2.0);
    Ok(c_h * m_beta * 2f64.powf(-beta / 2.0) * t.powf(2.0 * hurst - beta / 2.0) * j)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::{SpatialKernel, TemporalKernel};

    fn fbm_noise(xi: f64) -> NoiseSpec {
        NoiseSpec::new(xi, SpatialKernel::riesz(0.5, 1).unwrap(), TemporalKernel::fbm(0.75).unwrap()).unwrap()
    }

    #[test]
    fn permutation_counts() {
        assert_eq!(permutations(1), vec![vec![0]]);
        assert_eq!(permutations(2).len(), 2);
        assert_eq!(permutations(3).len(), 6);
    }

    #[test]
    fn zeroth_term_and_nonnegativity() {
        let b = SpectralBasis::new(2.0, 64, 128).unwrap();
        let u0 = InitialCondition::Constant { value: 1.0 };
        let r = chaos_second_moment_fbm(&b, &fbm_noise(1.0), &u0, 0.2, 0.3, 2, &ChaosOptions::new(4000, 3)).unwrap();
        assert!((r.zeroth - u0.semigroup(2.0, 0.2, 0.3).powi(2)).abs() < 1e-15);
        assert!(r.terms.iter().all(|c| c.norm >= 0.0));
        assert!(r.total >= r.zeroth);
    }

    #[test]
    fn refuses_white_time_and_high_orders() {
        let b = SpectralBasis::new(2.0, 8, 16).unwrap();
        let u0 = InitialCondition::Constant { value: 1.0 };
        let white = NoiseSpec::new(1.0, SpatialKernel::riesz(0.5, 1).unwrap(), TemporalKernel::White).unwrap();
        assert!(chaos_second_moment_fbm(&b, &white, &u0, 0.1, 0.0, 1, &ChaosOptions::new(10, 0)).is_err());
        assert!(chaos_second_moment_fbm(&b, &fbm_noise(1.0), &u0, 0.1, 0.0, 4, &ChaosOptions::new(10, 0)).is_err());
    }

    #[test]
    fn first_term_against_free_space_quadrature() {
        let b = SpectralBasis::new(2.0, 512, 1024).unwrap();
        let u0 = InitialCondition::Constant { value: 1.0 };
        let t = 0.004;
        let r = chaos_second_moment_fbm(&b, &fbm_noise(1.0), &u0, t, 0.0, 1, &ChaosOptions::new(200_000, 11)).unwrap();
        let oracle = free_space_first_term(0.75, 0.5, t).unwrap();
        let term = r.terms[0];
        assert!((term.norm - oracle).abs() < 3.0 * term.mc_error, "{} +- {} vs {oracle}", term.norm, term.mc_error);
        assert!(!term.low_precision);
    }

    #[test]
    fn free_space_scaling() {
        let a = free_space_first_term(0.75, 0.5, 0.01).unwrap();
        let b = free_space_first_term(0.75, 0.5, 0.02).unwrap();
        assert!(((b / a).log2() - 1.25).abs() < 1e-12);
    }
}
