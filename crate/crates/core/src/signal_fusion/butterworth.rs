use std::f64::consts::PI;

use super::complementary::bilinear_quadratic;
use crate::error::{Error, Result};

pub const BUTTERWORTH_ORDER: usize = 3;

/// Direct-form-I section with numerator/denominator in powers of the delay.
#[derive(Debug, Clone)]
struct Section {
    b: Vec<f64>,
    a: Vec<f64>,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl Section {
    fn new(b: Vec<f64>, a: Vec<f64>) -> Self {
        let n = b.len() - 1;
        Self {
            b,
            a,
            x: vec![0.0; n],
            y: vec![0.0; n],
        }
    }

    fn process(&mut self, input: f64) -> f64 {
        let mut out = self.b[0] * input;
        for k in 1..self.b.len() {
            out += self.b[k] * self.x[k - 1] - self.a[k] * self.y[k - 1];
        }
        self.x.rotate_right(1);
        self.x[0] = input;
        self.y.rotate_right(1);
        self.y[0] = out;
        out
    }

    fn settle_at(&mut self, value: f64) {
        self.x.fill(value);
        self.y.fill(value);
    }
}

/// Third-order Butterworth low-pass: a first-order section cascaded with a
/// biquad, each mapped by the bilinear transform with the cutoff pre-warped.
#[derive(Debug, Clone)]
pub struct ButterworthLowpass {
    sections: [Section; 2],
}

impl ButterworthLowpass {
    pub fn new(cutoff: f64, fs: f64) -> Result<Self> {
        if !(fs.is_finite() && fs > 0.0 && cutoff.is_finite() && cutoff > 0.0 && cutoff < fs / 2.0) {
            return Err(Error::Parameter(format!(
                "Butterworth cutoff must satisfy 0 < cutoff < fs/2 (cutoff={cutoff}, fs={fs})"
            )));
        }
        let k = 2.0 * fs;
        let wc = k * (PI * cutoff / fs).tan();

        // wc / (s + wc)
        let a0 = k + wc;
        let first = Section::new(vec![wc / a0, wc / a0], vec![1.0, (wc - k) / a0]);

        // wc² / (s² + wc·s + wc²)
        let den = bilinear_quadratic([1.0, wc, wc * wc], k);
        let num = bilinear_quadratic([0.0, 0.0, wc * wc], k);
        let second = Section::new(
            num.iter().map(|v| v / den[0]).collect(),
            den.iter().map(|v| v / den[0]).collect(),
        );
        Ok(Self {
            sections: [first, second],
        })
    }

    pub fn process(&mut self, x: f64) -> f64 {
        self.sections.iter_mut().fold(x, |v, s| s.process(v))
    }

    /// Puts every section in the steady state for a constant input (unity
    /// DC gain makes that state `value` everywhere).
    pub fn settle_at(&mut self, value: f64) {
        for s in &mut self.sections {
            s.settle_at(value);
        }
    }
}

/// Causal, zero-initialized filtering of one channel.
pub fn butterworth_lowpass(input: &[f64], cutoff: f64, fs: f64) -> Result<Vec<f64>> {
    let mut f = ButterworthLowpass::new(cutoff, fs)?;
    Ok(input.iter().map(|&x| f.process(x)).collect())
}
