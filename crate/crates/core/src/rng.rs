//! Seeded, counter-based pseudo-random generation.
//!
//! Every stochastic routine in this crate draws from [`CounterRng`], a
//! SplitMix64-style generator: draw `i` of a stream is `mix64(seed + i*PHI)`
//! where `PHI` is the 64-bit golden-ratio constant and `mix64` is a bijective
//! finalizer. Output depends only on `(seed, i)`, so experiments replay
//! bit-identically on a given platform. Normal variates use Box-Muller,
//! Gamma variates Marsaglia-Tsang squeeze sampling; both consume the
//! underlying uniform stream in a fixed order.

const PHI: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based 64-bit generator with explicit stream splitting.
#[derive(Debug, Clone)]
pub struct CounterRng {
    seed: u64,
    counter: u64,
    /// Second Box-Muller variate, held until the next `normal()` call.
    spare_normal: Option<f64>,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        CounterRng { seed, counter: 0, spare_normal: None }
    }

    /// Derives an independent stream from this generator's seed and a tag.
    /// Splitting does not consume or depend on the counter, so the same
    /// `(seed, tag)` always yields the same stream.
    pub fn split(&self, tag: u64) -> Self {
        CounterRng::new(mix64(self.seed ^ mix64(tag.wrapping_add(PHI))))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.seed.wrapping_add(self.counter.wrapping_mul(PHI)))
    }

    /// Uniform on [0, 1) with 53-bit resolution.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on (0, 1); safe as a logarithm argument.
    #[inline]
    fn uniform_open(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in [0, n). Rejection sampling keeps it exactly uniform.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        let zone = u64::MAX - u64::MAX % n;
        loop {
            let x = self.next_u64();
            if x < zone {
                return (x % n) as usize;
            }
        }
    }

    /// Standard normal via Box-Muller. Pairs are generated together and the
    /// second value is cached, so consumption order stays deterministic.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = self.uniform_open();
        let u2 = self.uniform();
        let radius = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        self.spare_normal = Some(radius * theta.sin());
        radius * theta.cos()
    }

    /// Gamma(shape, 1) via Marsaglia-Tsang; `shape < 1` uses the boost
    /// `Gamma(a) = Gamma(a+1) * U^{1/a}`.
    pub fn gamma(&mut self, shape: f64) -> f64 {
        assert!(shape > 0.0 && shape.is_finite(), "gamma shape must be positive");
        if shape < 1.0 {
            let boost = self.uniform_open().powf(1.0 / shape);
            return self.gamma(shape + 1.0) * boost;
        }
        let d = shape - 1.0 / 3.0;
        let c = 1.0 / (9.0 * d).sqrt();
        loop {
            let x = self.normal();
            let v = (1.0 + c * x).powi(3);
            if v <= 0.0 {
                continue;
            }
            let u = self.uniform_open();
            if u < 1.0 - 0.0331 * x.powi(4) {
                return d * v;
            }
            if u.ln() < 0.5 * x * x + d * (1.0 - v + v.ln()) {
                return d * v;
            }
        }
    }

    /// Symmetric Dirichlet draw of length `k` with concentration `alpha`.
    pub fn dirichlet(&mut self, alpha: f64, k: usize) -> Vec<f64> {
        assert!(k > 0, "dirichlet length must be positive");
        loop {
            let g: Vec<f64> = (0..k).map(|_| self.gamma(alpha)).collect();
            let sum: f64 = g.iter().sum();
            if sum > 0.0 {
                return g.into_iter().map(|x| x / sum).collect();
            }
            // All gammas underflowed to zero; astronomically rare, retry.
        }
    }

    /// `k` distinct indices from `0..n`, sorted ascending. Partial
    /// Fisher-Yates, so the draw consumes exactly `k` uniform integers.
    pub fn sample_distinct(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n, "cannot sample {k} distinct from {n}");
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.below(n - i);
            pool.swap(i, j);
        }
        let mut picked = pool[..k].to_vec();
        picked.sort_unstable();
        picked
    }
}
