//! Windowed-sinc polyphase resampler with a Kaiser window.

use std::f64::consts::PI;

use super::{AudioClip, AudioError};

pub const KAISER_BETA: f64 = 8.6;
/// Zero crossings of the sinc kernel on each side of the centre tap.
pub const ZERO_CROSSINGS: usize = 64;

/// Above this many phases the filter taps are evaluated on the fly.
const MAX_TABLE_PHASES: u64 = 4096;

/// Zeroth-order modified Bessel function of the first kind.
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Low-pass interpolation kernel evaluated at an offset measured in input samples.
struct Kernel {
    /// Cutoff as a fraction of the input rate, times two (1.0 = input Nyquist).
    scale: f64,
    half_width: f64,
    i0_beta: f64,
}

impl Kernel {
    fn new(scale: f64) -> Self {
        Self {
            scale,
            half_width: ZERO_CROSSINGS as f64 / scale,
            i0_beta: bessel_i0(KAISER_BETA),
        }
    }

    fn at(&self, tau: f64) -> f64 {
        let r = tau / self.half_width;
        if r.abs() >= 1.0 {
            return 0.0;
        }
        let x = self.scale * tau;
        let sinc = if x == 0.0 { 1.0 } else { (PI * x).sin() / (PI * x) };
        let window = bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / self.i0_beta;
        self.scale * sinc * window
    }
}

/// Resamples every channel to `target_rate`.
///
/// Output length is `round(len * target_rate / sample_rate)`. The anti-alias
/// cutoff sits at half the lower of the two rates. Equal rates return the
/// input unchanged.
pub fn resample(clip: &AudioClip, target_rate: u32) -> Result<AudioClip, AudioError> {
    if target_rate == 0 {
        return Err(AudioError::Argument("target rate must be positive".into()));
    }
    let source_rate = clip.sample_rate();
    if source_rate == target_rate {
        return Ok(clip.clone());
    }
    let g = gcd(source_rate as u64, target_rate as u64);
    let up = target_rate as u64 / g; // number of phases
    let down = source_rate as u64 / g;
    let in_len = clip.len();
    let out_len = ((in_len as u128 * target_rate as u128 + source_rate as u128 / 2)
        / source_rate as u128) as usize;

    let kernel = Kernel::new((target_rate as f64 / source_rate as f64).min(1.0));
    let reach = kernel.half_width.ceil() as i64 + 1;
    let taps = (2 * reach + 1) as usize;

    // table[p][k] = h(p/up - (k - reach)) for tap offsets -reach..=reach
    let table: Option<Vec<f64>> = (up <= MAX_TABLE_PHASES).then(|| {
        let mut t = Vec::with_capacity(up as usize * taps);
        for p in 0..up {
            let frac = p as f64 / up as f64;
            t.extend((-reach..=reach).map(|k| kernel.at(frac - k as f64)));
        }
        t
    });

    let channels = clip
        .channels()
        .iter()
        .map(|x| {
            let mut y = Vec::with_capacity(out_len);
            let mut scratch = vec![0.0; taps];
            for m in 0..out_len as u64 {
                let pos = m * down;
                let base = (pos / up) as i64;
                let phase = pos % up;
                let coeffs: &[f64] = match &table {
                    Some(t) => &t[phase as usize * taps..(phase as usize + 1) * taps],
                    None => {
                        let frac = phase as f64 / up as f64;
                        for (k, c) in (-reach..=reach).zip(scratch.iter_mut()) {
                            *c = kernel.at(frac - k as f64);
                        }
                        &scratch
                    }
                };
                let lo = (base - reach).max(0);
                let hi = (base + reach).min(in_len as i64 - 1);
                let mut acc = 0.0;
                if lo <= hi {
                    let c0 = (lo - (base - reach)) as usize;
                    let xs = &x[lo as usize..=hi as usize];
                    for (s, c) in xs.iter().zip(&coeffs[c0..]) {
                        acc += s * c;
                    }
                }
                y.push(acc);
            }
            y
        })
        .collect();
    AudioClip::new(channels, target_rate)
}
