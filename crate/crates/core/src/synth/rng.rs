//! Counter-based random streams and the samplers built on them.
//!
//! Generator: every `(seed, tag, index)` triple names an independent stream
//! with key
//!
//! ```text
//! key = mix64(mix64(seed ^ (tag * 0xD1B54A32D192ED03)) + index * 0x9E3779B97F4A7C15)
//! ```
//!
//! and the `c`-th draw (`c = 1, 2, ...`) is `mix64(key ^ mix64(c * 0x9E3779B97F4A7C15))`,
//! where `mix64` is the SplitMix64 finalizer (all arithmetic wrapping mod 2⁶⁴).
//! Uniforms on (0, 1) are `((x >> 11) + 0.5) · 2⁻⁵³`.
//!
//! Samplers: Box–Muller normals (cosine branch only, two uniforms per
//! normal), Marsaglia–Tsang gamma with the squeeze `u < 1 − 0.0331 z⁴` and
//! the log test `ln u < z²/2 + d(1 − v + ln v)` (shape < 1 via `G(a+1)·U^{1/a}`),
//! and Poisson by multiplication of uniforms below mean 10 and by Hörmann's
//! PTRS transformed rejection above.

use statrs::function::gamma::ln_gamma;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const TAG_MUL: u64 = 0xD1B5_4A32_D192_ED03;

#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One substream of the counter-based generator.
#[derive(Debug, Clone)]
pub struct Stream {
    key: u64,
    counter: u64,
}

impl Stream {
    pub fn new(seed: u64, tag: u64, index: u64) -> Self {
        let base = mix64(seed ^ tag.wrapping_mul(TAG_MUL));
        Self {
            key: mix64(base.wrapping_add(index.wrapping_mul(GOLDEN))),
            counter: 0,
        }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key ^ mix64(self.counter.wrapping_mul(GOLDEN)))
    }

    /// Uniform on the open interval (0, 1).
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `lo..=hi`.
    pub fn int_between(&mut self, lo: u32, hi: u32) -> u32 {
        let span = u64::from(hi - lo) + 1;
        lo + ((self.uniform() * span as f64) as u64).min(span - 1) as u32
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn lognormal(&mut self, mu: f64, sigma: f64) -> f64 {
        (mu + sigma * self.normal()).exp()
    }

    pub fn exponential(&mut self, mean: f64) -> f64 {
        -mean * self.uniform().ln()
    }

    /// Gamma with the given shape and scale (mean `shape · scale`).
    pub fn gamma(&mut self, shape: f64, scale: f64) -> f64 {
        if shape < 1.0 {
            let boost = self.uniform().powf(1.0 / shape);
            return self.gamma(shape + 1.0, scale) * boost;
        }
        let d = shape - 1.0 / 3.0;
        let c = 1.0 / (9.0 * d).sqrt();
        loop {
            let z = self.normal();
            let v = 1.0 + c * z;
            if v <= 0.0 {
                continue;
            }
            let v = v * v * v;
            let u = self.uniform();
            let z2 = z * z;
            if u < 1.0 - 0.0331 * z2 * z2 || u.ln() < 0.5 * z2 + d * (1.0 - v + v.ln()) {
                return d * v * scale;
            }
        }
    }

    pub fn poisson(&mut self, mean: f64) -> u64 {
        if mean <= 0.0 {
            return 0;
        }
        if mean < 10.0 {
            let limit = (-mean).exp();
            let mut k = 0;
            let mut prod = self.uniform();
            while prod > limit {
                k += 1;
                prod *= self.uniform();
            }
            return k;
        }
        let slam = mean.sqrt();
        let loglam = mean.ln();
        let b = 0.931 + 2.53 * slam;
        let a = -0.059 + 0.02483 * b;
        let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
        let vr = 0.9277 - 3.6224 / (b - 2.0);
        loop {
            let u = self.uniform() - 0.5;
            let v = self.uniform();
            let us = 0.5 - u.abs();
            let k = ((2.0 * a / us + b) * u + mean + 0.43).floor();
            if us >= 0.07 && v <= vr {
                return k as u64;
            }
            if k < 0.0 || (us < 0.013 && v > us) {
                continue;
            }
            if v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln() <= -mean + k * loglam - ln_gamma(k + 1.0) {
                return k as u64;
            }
        }
    }

    /// Gamma–Poisson mixture with mean `mu` and variance `μ + κμ²`.
    pub fn negbin(&mut self, mu: f64, kappa: f64) -> u64 {
        if kappa == 0.0 {
            self.poisson(mu)
        } else {
            let rate = self.gamma(1.0 / kappa, kappa * mu);
            self.poisson(rate)
        }
    }
}
