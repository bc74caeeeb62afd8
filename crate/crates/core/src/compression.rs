//! Lossy compression operators `Q` and their encoded-size accounting.
//!
//! Encoded forms are modelled, not packed: each operator returns the decoded
//! vector, and [`Compressor::ratio`] gives the encoded size relative to raw
//! 32-bit storage. The ratio scales only the transfer term of a message.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::time::SimTime;
use crate::vecops::{self, ParamVector};

const RAW_BITS: i64 = 32;
const RANGE_BITS: i64 = 64;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Compressor {
    #[default]
    Identity,
    #[serde(alias = "rq")]
    RandomizedQuantization { bits: u32 },
    #[serde(alias = "sparsify")]
    RandomizedSparsification { p: f64 },
    #[serde(alias = "sign")]
    OneBitSign,
    Clipping { k: u32 },
}

impl Compressor {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Compressor::RandomizedQuantization { bits } if !(1..=32).contains(&bits) => {
                Err(Error::invalid(format!("quantization bits must be in 1..=32, got {bits}")))
            }
            Compressor::RandomizedSparsification { p } if !(p > 0.0 && p <= 1.0) => {
                Err(Error::invalid(format!("keep probability must be in (0, 1], got {p}")))
            }
            Compressor::Clipping { k } if k > 52 => {
                Err(Error::invalid(format!("clipping drops at most 52 bits, got {k}")))
            }
            _ => Ok(()),
        }
    }

    pub fn is_unbiased(&self) -> bool {
        matches!(
            self,
            Compressor::Identity
                | Compressor::RandomizedQuantization { .. }
                | Compressor::RandomizedSparsification { .. }
        )
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, Compressor::Identity)
    }

    pub fn label(&self) -> String {
        match self {
            Compressor::Identity => "identity".into(),
            Compressor::RandomizedQuantization { bits } => format!("rq{bits}"),
            Compressor::RandomizedSparsification { p } => format!("sparsify{p}"),
            Compressor::OneBitSign => "sign".into(),
            Compressor::Clipping { k } => format!("clip{k}"),
        }
    }

    /// Decoded `Q(x)`. Deterministic kinds ignore `rng`.
    pub fn compress(&self, x: &[f64], rng: &mut Rng) -> Result<ParamVector> {
        self.validate()?;
        match *self {
            Compressor::Identity => Ok(x.to_vec()),
            Compressor::RandomizedQuantization { bits } => Ok(quantize_rq(x, bits, rng)?.1),
            Compressor::RandomizedSparsification { p } => sparsify(x, p, rng),
            Compressor::OneBitSign => Ok(one_bit(x)),
            Compressor::Clipping { k } => clip_bits(x, k),
        }
    }

    /// Encoded size of a `len`-element message in bits.
    pub fn encoded_bits(&self, len: usize) -> Result<SimTime> {
        self.validate()?;
        let len = len as i64;
        Ok(match *self {
            Compressor::Identity => SimTime::from_integer(RAW_BITS * len),
            Compressor::RandomizedQuantization { bits } => {
                SimTime::from_integer(bits as i64 * len + RANGE_BITS)
            }
            Compressor::RandomizedSparsification { p } => {
                // index + value per kept element, never more than raw
                let keep = SimTime::from_f64(p)? * SimTime::from_integer(2 * RAW_BITS * len);
                let raw = SimTime::from_integer(RAW_BITS * len);
                if keep > raw {
                    raw
                } else {
                    keep
                }
            }
            Compressor::OneBitSign => {
                SimTime::from_integer((len + RAW_BITS).min(RAW_BITS * len))
            }
            Compressor::Clipping { k } => {
                SimTime::from_integer(len * (64 - k as i64)) / 2
            }
        })
    }

    /// Compression ratio `eta` for a `len`-element message.
    pub fn ratio(&self, len: usize) -> Result<SimTime> {
        if len == 0 {
            return Err(Error::invalid("message must carry at least one element"));
        }
        Ok(self.encoded_bits(len)? / SimTime::from_integer(RAW_BITS * len as i64))
    }
}

/// The packed representation of an RQ message.
#[derive(Clone, Debug, PartialEq)]
pub struct RqEncoded {
    pub min: f64,
    pub max: f64,
    pub bits: u32,
    pub levels: Vec<u32>,
}

impl RqEncoded {
    pub fn knob(&self, i: u32) -> f64 {
        rq_knob(self.min, self.max, self.bits, i)
    }

    pub fn decode(&self) -> ParamVector {
        self.levels.iter().map(|&i| self.knob(i)).collect()
    }

    pub fn payload_bits(&self) -> u64 {
        self.bits as u64 * self.levels.len() as u64 + RANGE_BITS as u64
    }
}

/// `c_i = i * (max - min) / (2^b - 1) + min`.
pub fn rq_knob(min: f64, max: f64, bits: u32, i: u32) -> f64 {
    if max == min {
        return min;
    }
    let top = ((1u64 << bits) - 1) as f64;
    i as f64 * ((max - min) / top) + min
}

/// Randomized quantization to `2^bits` evenly spaced knobs spanning
/// `[min(x), max(x)]`, rounding up with probability proportional to the
/// distance from the lower knob.
pub fn quantize_rq(x: &[f64], bits: u32, rng: &mut Rng) -> Result<(RqEncoded, ParamVector)> {
    if x.is_empty() {
        return Err(Error::invalid("cannot quantize an empty vector"));
    }
    Compressor::RandomizedQuantization { bits }.validate()?;
    let min = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !min.is_finite() || !max.is_finite() {
        return Err(Error::invalid("cannot quantize non-finite values"));
    }
    let mut enc = RqEncoded {
        min,
        max,
        bits,
        levels: vec![0; x.len()],
    };
    if max == min {
        return Ok((enc, x.to_vec()));
    }
    let top = ((1u64 << bits) - 1) as u32;
    let delta = (max - min) / top as f64;
    for (level, &v) in enc.levels.iter_mut().zip(x) {
        let mut i = (((v - min) / delta).floor().max(0.0) as u64).min(top as u64 - 1) as u32;
        while i > 0 && rq_knob(min, max, bits, i) > v {
            i -= 1;
        }
        while i < top - 1 && rq_knob(min, max, bits, i + 1) <= v {
            i += 1;
        }
        let lo = rq_knob(min, max, bits, i);
        let hi = rq_knob(min, max, bits, i + 1);
        let p_up = ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
        let xi: f64 = rng.random();
        *level = if xi < p_up { i + 1 } else { i };
    }
    let decoded = enc.decode();
    Ok((enc, decoded))
}

/// Keeps each element as `z / p` with probability `p`, else zero.
pub fn sparsify(x: &[f64], p: f64, rng: &mut Rng) -> Result<ParamVector> {
    Compressor::RandomizedSparsification { p }.validate()?;
    Ok(x
        .iter()
        .map(|&z| {
            let xi: f64 = rng.random();
            if xi < p {
                z / p
            } else {
                0.0
            }
        })
        .collect())
}

/// `||x|| sign(x)` with `sign(0) = +1`.
pub fn one_bit(x: &[f64]) -> ParamVector {
    let n = vecops::norm(x);
    x.iter().map(|&v| if v < 0.0 { -n } else { n }).collect()
}

/// Zeroes the lowest `k` mantissa bits of every element.
pub fn clip_bits(x: &[f64], k: u32) -> Result<ParamVector> {
    Compressor::Clipping { k }.validate()?;
    let mask = !((1u64 << k) - 1);
    Ok(x.iter().map(|v| f64::from_bits(v.to_bits() & mask)).collect())
}

/// Largest Monte Carlo estimate of `E||Q(y) - y||^2` over the probes, i.e. `sigma'^2`.
pub fn measure_sigma_prime(
    c: &Compressor,
    probes: &[ParamVector],
    trials: usize,
    rng: &mut Rng,
) -> Result<f64> {
    if probes.is_empty() {
        return Err(Error::invalid("need at least one probe vector"));
    }
    if trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    let mut worst: f64 = 0.0;
    for y in probes {
        let mut total = 0.0;
        for _ in 0..trials {
            total += vecops::norm_sq(&vecops::sub(&c.compress(y, rng)?, y));
        }
        worst = worst.max(total / trials as f64);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn rq_two_bit_knobs() {
        let knobs: Vec<f64> = (0..4).map(|i| rq_knob(-0.5, 1.3, 2, i)).collect();
        let want = [-0.5, 0.1, 0.7, 1.3];
        for (k, w) in knobs.iter().zip(want) {
            assert!((k - w).abs() < 1e-12);
        }
    }

    #[test]
    fn rq_probability_of_rounding_up() {
        let x = [-0.5, 0.3, 1.3];
        let mut r = rng::seeded(7);
        let trials = 30_000;
        let mut ups = 0;
        for _ in 0..trials {
            let (enc, _) = quantize_rq(&x, 2, &mut r).unwrap();
            assert_eq!(enc.levels[0], 0);
            assert_eq!(enc.levels[2], 3);
            if enc.levels[1] == 2 {
                ups += 1;
            } else {
                assert_eq!(enc.levels[1], 1);
            }
        }
        let frac = ups as f64 / trials as f64;
        assert!((frac - 1.0 / 3.0).abs() < 0.015, "{frac}");
    }

    #[test]
    fn rq_constant_vector_is_exact() {
        let mut r = rng::seeded(0);
        let (enc, dec) = quantize_rq(&[2.5; 4], 3, &mut r).unwrap();
        assert_eq!(dec, vec![2.5; 4]);
        assert_eq!(enc.payload_bits(), 3 * 4 + 64);
    }

    #[test]
    fn knob_valued_elements_are_fixed() {
        let mut r = rng::seeded(2);
        let x = [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0];
        for _ in 0..100 {
            let (_, dec) = quantize_rq(&x, 2, &mut r).unwrap();
            for (d, k) in dec.iter().zip((0..4).map(|i| rq_knob(0.0, 1.0, 2, i))) {
                assert_eq!(*d, k);
            }
        }
    }

    #[test]
    fn sparsify_outcomes() {
        let mut r = rng::seeded(4);
        for _ in 0..50 {
            let s = sparsify(&[2.0], 0.5, &mut r).unwrap();
            assert!(s[0] == 0.0 || s[0] == 4.0);
        }
        assert_eq!(sparsify(&[1.5, -2.0], 1.0, &mut r).unwrap(), vec![1.5, -2.0]);
        assert_eq!(sparsify(&[0.0; 3], 0.3, &mut r).unwrap(), vec![0.0; 3]);
        assert!(sparsify(&[1.0], 0.0, &mut r).is_err());
    }

    #[test]
    fn one_bit_examples() {
        assert_eq!(one_bit(&[3.0, -4.0]), vec![5.0, -5.0]);
        assert_eq!(one_bit(&[0.0, 0.0]), vec![0.0, 0.0]);
        assert_eq!(one_bit(&[2.0; 4]), vec![4.0; 4]);
    }

    #[test]
    fn clip_bits_examples() {
        let x = [1.23456, -7.5e-3, 3.0e10];
        assert_eq!(clip_bits(&x, 0).unwrap(), x.to_vec());
        let c = clip_bits(&x, 26).unwrap();
        assert_eq!(clip_bits(&c, 26).unwrap(), c);
        for (a, b) in c.iter().zip(&x) {
            let exp = b.abs().log2().floor();
            assert!((a - b).abs() <= 2f64.powf(exp - 26.0));
        }
        assert!(clip_bits(&x, 53).is_err());
    }

    #[test]
    fn ratios() {
        let rq8 = Compressor::RandomizedQuantization { bits: 8 };
        assert_eq!(rq8.ratio(16).unwrap(), SimTime::new(8 * 16 + 64, 32 * 16));
        assert_eq!(Compressor::Identity.ratio(5).unwrap(), SimTime::from_integer(1));
        assert_eq!(
            Compressor::RandomizedSparsification { p: 0.25 }.ratio(8).unwrap(),
            SimTime::new(1, 2)
        );
        assert_eq!(Compressor::Clipping { k: 32 }.ratio(3).unwrap(), SimTime::new(1, 2));
        assert_eq!(Compressor::OneBitSign.ratio(1).unwrap(), SimTime::from_integer(1));
        assert!(Compressor::RandomizedQuantization { bits: 0 }.validate().is_err());
    }

    #[test]
    fn sigma_prime_of_identity_is_zero() {
        let mut r = rng::seeded(1);
        let probes = vec![vec![1.0, -2.0, 3.0]];
        assert_eq!(measure_sigma_prime(&Compressor::Identity, &probes, 10, &mut r).unwrap(), 0.0);
        assert!(measure_sigma_prime(&Compressor::Identity, &[], 10, &mut r).is_err());
    }

    #[test]
    fn sigma_prime_of_fine_quantization_is_small() {
        let mut r = rng::seeded(1);
        let probes = vec![(0..8).map(|i| i as f64 / 7.0).collect::<Vec<_>>()];
        let c = Compressor::RandomizedQuantization { bits: 32 };
        assert!(measure_sigma_prime(&c, &probes, 200, &mut r).unwrap() <= 1e-6);
    }

    #[test]
    fn compressor_serde() {
        let c: Compressor = serde_json::from_str(r#"{"kind":"randomized-quantization","bits":4}"#).unwrap();
        assert_eq!(c, Compressor::RandomizedQuantization { bits: 4 });
        let c: Compressor = serde_json::from_str(r#"{"kind":"identity"}"#).unwrap();
        assert!(c.is_identity());
    }
}
