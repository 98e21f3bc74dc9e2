//! Synthetic streams: truncated vector moving averages in physical form,
//! locally stationary modulations of them, covariance breaks, and the
//! three-regime regression scenario.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, label, Rng};
use crate::stream::ObservationStream;

/// Change points of the regression scenario (last observation of a regime).
pub const REG63_BREAKS: [usize; 2] = [2000, 4000];
pub const REG63_LEN: usize = 50_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum Innovation {
    Normal,
    /// Student t scaled to unit variance.
    StudentT { df: f64 },
}

impl Innovation {
    fn validate(&self) -> Result<()> {
        match *self {
            Innovation::Normal => Ok(()),
            Innovation::StudentT { df } if df > 4.0 && df.is_finite() => Ok(()),
            Innovation::StudentT { df } => Err(Error::param(
                "df",
                format!("{df}: need df > 4 for finite moments of order q > 4"),
            )),
        }
    }

    fn sampler(&self) -> Sampler {
        match *self {
            Innovation::Normal => Sampler::Normal,
            Innovation::StudentT { df } => Sampler::T {
                dist: StudentT::new(df).expect("validated df"),
                scale: ((df - 2.0) / df).sqrt(),
            },
        }
    }
}

enum Sampler {
    Normal,
    T { dist: StudentT<f64>, scale: f64 },
}

impl Sampler {
    fn draw(&self, rng: &mut Rng) -> f64 {
        match self {
            Sampler::Normal => StandardNormal.sample(rng),
            Sampler::T { dist, scale } => scale * dist.sample(rng),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorKind {
    /// `Y_t = mu + sum_{l=0}^{L} l^{-beta} A_l eta_{t-l}` (weight 1 at lag 0).
    VectorMa {
        beta: f64,
        l_max: usize,
        innovation: Innovation,
        #[serde(default)]
        mu: Option<Vec<f64>>,
    },
    /// A vector MA base `X_t` modulated as `mu_j(t/len) + s_j(t/len) X_tj`
    /// with seeded Lipschitz curves `mu_j`, `s_j`.
    LocallyStationary {
        beta: f64,
        l_max: usize,
        innovation: Innovation,
        /// Rescaling length of the curves' argument; defaults to `n`.
        #[serde(default)]
        len: Option<usize>,
    },
    /// I.i.d. `N(0, sigma0)` up to and including `k_star`, `N(0, sigma_a)` after.
    CovarianceBreak {
        sigma0: DMatrix<f64>,
        sigma_a: DMatrix<f64>,
        k_star: usize,
    },
    Regression63 {
        /// Read the noise parameters 0.1 / 0.05 as standard deviations
        /// instead of variances.
        #[serde(default)]
        noise_as_sd: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    #[serde(flatten)]
    pub kind: GeneratorKind,
    pub d: usize,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn vector_ma(d: usize, beta: f64, l_max: usize, seed: u64) -> Self {
        Self {
            kind: GeneratorKind::VectorMa {
                beta,
                l_max,
                innovation: Innovation::Normal,
                mu: None,
            },
            d,
            seed,
        }
    }

    pub fn covariance_break(sigma0: DMatrix<f64>, sigma_a: DMatrix<f64>, k_star: usize, seed: u64) -> Self {
        Self {
            d: sigma0.nrows(),
            kind: GeneratorKind::CovarianceBreak {
                sigma0,
                sigma_a,
                k_star,
            },
            seed,
        }
    }

    pub fn regression63(seed: u64) -> Self {
        Self {
            kind: GeneratorKind::Regression63 { noise_as_sd: false },
            d: 3,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::param("d", "must be positive"));
        }
        match &self.kind {
            GeneratorKind::VectorMa {
                beta, innovation, mu, ..
            } => {
                check_beta(*beta)?;
                innovation.validate()?;
                if let Some(mu) = mu {
                    if mu.len() != self.d {
                        return Err(Error::DimensionMismatch {
                            expected: self.d,
                            got: mu.len(),
                        });
                    }
                }
            }
            GeneratorKind::LocallyStationary {
                beta, innovation, len, ..
            } => {
                check_beta(*beta)?;
                innovation.validate()?;
                if *len == Some(0) {
                    return Err(Error::param("len", "must be positive"));
                }
            }
            GeneratorKind::CovarianceBreak { sigma0, sigma_a, .. } => {
                for s in [sigma0, sigma_a] {
                    if s.nrows() != self.d || s.ncols() != self.d {
                        return Err(Error::DimensionMismatch {
                            expected: self.d,
                            got: s.nrows(),
                        });
                    }
                }
            }
            GeneratorKind::Regression63 { .. } => {
                if self.d != 3 {
                    return Err(Error::param("d", "regression scenario has 3 regressors"));
                }
            }
        }
        Ok(())
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 2.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(Error::param("beta", format!("{beta}: need beta > 2")))
    }
}

/// Lag weights `1, 1^{-beta}, 2^{-beta}, ..., L^{-beta}`.
pub fn ma_weights(beta: f64, l_max: usize) -> Vec<f64> {
    (0..=l_max)
        .map(|l| if l == 0 { 1.0 } else { (l as f64).powf(-beta) })
        .collect()
}

/// Seeded mixing matrices with unit-norm rows.
pub fn mixing_matrices(d: usize, l_max: usize, seed: u64) -> Vec<DMatrix<f64>> {
    let mut rng = rng::derive(seed, &[label::DATAGEN, 1]);
    (0..=l_max)
        .map(|_| {
            let mut a = DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(&mut rng));
            for mut row in a.row_iter_mut() {
                let n = row.norm();
                row /= n;
            }
            a
        })
        .collect()
}

/// Truncated MA filter with a ring buffer of the last `L + 1` innovations.
struct MaFilter {
    weights: Vec<f64>,
    mixing: Vec<DMatrix<f64>>,
    ring: Vec<DVector<f64>>,
    head: usize,
    sampler: Sampler,
    rng: Rng,
}

impl MaFilter {
    fn new(d: usize, beta: f64, l_max: usize, innovation: Innovation, seed: u64) -> Self {
        let sampler = innovation.sampler();
        let mut rng = rng::derive(seed, &[label::DATAGEN, 0]);
        // Presample history so the output is stationary from t = 1.
        let ring = (0..=l_max)
            .map(|_| DVector::from_fn(d, |_, _| sampler.draw(&mut rng)))
            .collect();
        Self {
            weights: ma_weights(beta, l_max),
            mixing: mixing_matrices(d, l_max, seed),
            ring,
            head: 0,
            sampler,
            rng,
        }
    }

    /// Innovation at lag `l` relative to the newest one.
    fn lagged(&self, l: usize) -> &DVector<f64> {
        let n = self.ring.len();
        &self.ring[(self.head + n - l) % n]
    }

    fn output(&self) -> DVector<f64> {
        let mut y = DVector::zeros(self.ring[0].len());
        for (l, (w, a)) in self.weights.iter().zip(&self.mixing).enumerate() {
            y.gemv(*w, a, self.lagged(l), 1.0);
        }
        y
    }

    fn next(&mut self) -> DVector<f64> {
        let n = self.ring.len();
        self.head = (self.head + 1) % n;
        let d = self.ring[0].len();
        let (sampler, rng) = (&self.sampler, &mut self.rng);
        self.ring[self.head] = DVector::from_fn(d, |_, _| sampler.draw(rng));
        self.output()
    }
}

/// Seeded Lipschitz mean and scale curves on `[0, 1]`.
#[derive(Debug, Clone)]
pub struct CurveFamily {
    amp: Vec<f64>,
    phase: Vec<f64>,
    slope: Vec<f64>,
}

impl CurveFamily {
    pub fn new(d: usize, seed: u64) -> Self {
        let mut rng = rng::derive(seed, &[label::DATAGEN, 2]);
        let mut draw = |lo: f64, hi: f64| -> Vec<f64> { (0..d).map(|_| rng.random_range(lo..hi)).collect() };
        Self {
            amp: draw(0.0, 1.0),
            phase: draw(0.0, std::f64::consts::TAU),
            slope: draw(-0.5, 0.5),
        }
    }

    pub fn mean(&self, j: usize, u: f64) -> f64 {
        self.amp[j] * (std::f64::consts::TAU * u + self.phase[j]).sin()
    }

    /// Stays in `[0.5, 1.5]` on `[0, 1]`.
    pub fn scale(&self, j: usize, u: f64) -> f64 {
        1.0 + self.slope[j] * (2.0 * u - 1.0)
    }

    /// Common Lipschitz bound of the mean and scale curves.
    pub fn lipschitz(&self) -> f64 {
        let m = self.amp.iter().fold(0.0f64, |a, x| a.max(x * std::f64::consts::TAU));
        let s = self.slope.iter().fold(0.0f64, |a, x| a.max(2.0 * x.abs()));
        m.max(s)
    }
}

/// Generate `n` observations; the training length of the result is `0`.
pub fn generate(spec: &GeneratorSpec, n: usize) -> Result<ObservationStream> {
    if n == 0 {
        return Err(Error::param("n", "must be at least 1"));
    }
    spec.validate()?;
    let d = spec.d;
    match &spec.kind {
        GeneratorKind::VectorMa {
            beta,
            l_max,
            innovation,
            mu,
        } => {
            let mut f = MaFilter::new(d, *beta, *l_max, *innovation, spec.seed);
            let mut data = Vec::with_capacity(n * d);
            for _ in 0..n {
                let y = f.next();
                match mu {
                    Some(mu) => data.extend(y.iter().zip(mu).map(|(y, m)| y + m)),
                    None => data.extend(y.iter()),
                }
            }
            ObservationStream::new(d, 0, data)
        }
        GeneratorKind::LocallyStationary {
            beta,
            l_max,
            innovation,
            len,
        } => {
            let mut f = MaFilter::new(d, *beta, *l_max, *innovation, spec.seed);
            let curves = CurveFamily::new(d, spec.seed);
            let len = len.unwrap_or(n) as f64;
            let mut data = Vec::with_capacity(n * d);
            for t in 1..=n {
                let u = t as f64 / len;
                let x = f.next();
                data.extend(x.iter().enumerate().map(|(j, x)| curves.mean(j, u) + curves.scale(j, u) * x));
            }
            ObservationStream::new(d, 0, data)
        }
        GeneratorKind::CovarianceBreak {
            sigma0,
            sigma_a,
            k_star,
        } => {
            let l0 = cholesky(sigma0)?;
            let la = cholesky(sigma_a)?;
            let mut rng = rng::derive(spec.seed, &[label::DATAGEN, 0]);
            let mut data = Vec::with_capacity(n * d);
            for t in 1..=n {
                let z = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
                let l = if t <= *k_star { &l0 } else { &la };
                data.extend((l * z).iter());
            }
            ObservationStream::new(d, 0, data)
        }
        GeneratorKind::Regression63 { noise_as_sd } => generate_regression63_with(spec.seed, n, *noise_as_sd),
    }
}

fn cholesky(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !s.is_square() || s.iter().any(|x| !x.is_finite()) {
        return Err(Error::NotPositiveDefinite);
    }
    nalgebra::Cholesky::new(s.clone())
        .map(|c| c.unpack())
        .ok_or(Error::NotPositiveDefinite)
}

/// The three-regime regression scenario with `REG63_LEN` observations.
pub fn generate_regression63(seed: u64) -> ObservationStream {
    generate_regression63_with(seed, REG63_LEN, false).expect("n > 0")
}

/// Regressors `x_t` (law switching after `t = 2000`) and two U(0,1) columns;
/// response `cos(10 pi x) + e`, then `cos(10 pi x*) + e`, then
/// `cos(4 pi x*) + e*` after `t = 4000`, with noise variances 0.1 and 0.05.
pub fn generate_regression63_with(seed: u64, n: usize, noise_as_sd: bool) -> Result<ObservationStream> {
    if n == 0 {
        return Err(Error::param("n", "must be at least 1"));
    }
    let (s1, s2) = if noise_as_sd {
        (0.1, 0.05)
    } else {
        (0.1f64.sqrt(), 0.05f64.sqrt())
    };
    let mut rng = rng::derive(seed, &[label::DATAGEN, 0]);
    let pi = std::f64::consts::PI;
    let mut data = Vec::with_capacity(3 * n);
    let mut z = Vec::with_capacity(n);
    for t in 1..=n {
        let u: f64 = rng.random();
        let (x, mean, sd) = if t <= REG63_BREAKS[0] {
            let x = u - 0.5;
            (x, (10.0 * pi * x).cos(), s1)
        } else if t <= REG63_BREAKS[1] {
            (u, (10.0 * pi * u).cos(), s1)
        } else {
            (u, (4.0 * pi * u).cos(), s2)
        };
        let e: f64 = StandardNormal.sample(&mut rng);
        let x2: f64 = rng.random();
        let x3: f64 = rng.random();
        data.extend([x, x2, x3]);
        z.push(mean + sd * e);
    }
    ObservationStream::new(3, 0, data)?.with_response(z)
}

/// Physical-dependence proxy of a vector MA generator: for each lag `l`,
/// the mean of `||Y_t - Y_t'||` over `reps` couplings, where `Y_t'` uses an
/// independent copy of the innovation `eta_{t-l}`.
pub fn physical_dependence_proxy(spec: &GeneratorSpec, lags: &[usize], reps: usize) -> Result<Vec<f64>> {
    spec.validate()?;
    let (beta, l_max, innovation) = match &spec.kind {
        GeneratorKind::VectorMa {
            beta,
            l_max,
            innovation,
            ..
        }
        | GeneratorKind::LocallyStationary {
            beta,
            l_max,
            innovation,
            ..
        } => (*beta, *l_max, *innovation),
        _ => return Err(Error::param("kind", "physical-dependence proxy needs an MA generator")),
    };
    if let Some(&l) = lags.iter().find(|&&l| l > l_max) {
        return Err(Error::param("lag", format!("{l} exceeds l_max = {l_max}")));
    }
    if reps == 0 {
        return Err(Error::param("reps", "must be at least 1"));
    }
    let mut f = MaFilter::new(spec.d, beta, l_max, innovation, spec.seed);
    let mut copy_rng = rng::derive(spec.seed, &[label::DATAGEN, 3]);
    let mut acc = vec![0.0; lags.len()];
    for _ in 0..reps {
        let y = f.next();
        for (a, &l) in acc.iter_mut().zip(lags) {
            let n = f.ring.len();
            let slot = (f.head + n - l) % n;
            let saved = f.ring[slot].clone();
            f.ring[slot] = DVector::from_fn(spec.d, |_, _| f.sampler.draw(&mut copy_rng));
            *a += (&y - f.output()).norm();
            f.ring[slot] = saved;
        }
    }
    Ok(acc.into_iter().map(|a| a / reps as f64).collect())
}

/// Least-squares slope of `ln y` on `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}
