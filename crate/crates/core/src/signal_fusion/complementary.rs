use serde::{Deserialize, Serialize};

use super::{accel_to_angles, wrap_angle};
use crate::error::{Error, Result};

/// Proportional gain found by PID tuning for the handle-bar filter (1/s).
pub const DEFAULT_KP: f64 = 7.5924;
/// Integral gain found by PID tuning for the handle-bar filter (1/s²).
pub const DEFAULT_KI: f64 = 20.7015;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterGains {
    pub kp: f64,
    pub ki: f64,
    pub fs: f64,
}

impl FilterGains {
    pub fn new(kp: f64, ki: f64, fs: f64) -> Result<Self> {
        let g = Self { kp, ki, fs };
        g.validate()?;
        Ok(g)
    }

    /// Default tuned gains at the given rate.
    pub fn tuned(fs: f64) -> Self {
        Self {
            kp: DEFAULT_KP,
            ki: DEFAULT_KI,
            fs,
        }
    }

    /// With `kp, ki > 0` both roots of `s² + kp·s + ki` have negative real
    /// part, so positivity is the whole stability condition.
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !(ok(self.kp) && ok(self.ki) && ok(self.fs)) {
            return Err(Error::Parameter(format!(
                "filter gains must be positive and finite (kp={}, ki={}, fs={})",
                self.kp, self.ki, self.fs
            )));
        }
        Ok(())
    }
}

/// Difference-equation coefficients in ascending powers of the unit delay.
///
/// The gyro branch acts on the measured rate, the accel branch on the
/// gravity-derived angle; both share `den` (with `den[0] == 1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DigitalFilterCoefficients {
    pub gyro_num: Vec<f64>,
    pub accel_num: Vec<f64>,
    pub den: Vec<f64>,
    /// Bilinear constant `2·fs` the coefficients were built with.
    pub bilinear_k: f64,
}

/// Bilinear image of `(n2·s² + n1·s + n0)·(1+d)²` with `s = k·(1−d)/(1+d)`.
pub(crate) fn bilinear_quadratic(n: [f64; 3], k: f64) -> [f64; 3] {
    let [n2, n1, n0] = n;
    let k2 = k * k;
    [
        n2 * k2 + n1 * k + n0,
        -2.0 * n2 * k2 + 2.0 * n0,
        n2 * k2 - n1 * k + n0,
    ]
}

/// Discretizes both branches of the complementary filter,
/// `s/(s²+Kp·s+Ki)` on the rate and `(Kp·s+Ki)/(s²+Kp·s+Ki)` on the angle.
pub fn discretize(gains: &FilterGains) -> Result<DigitalFilterCoefficients> {
    gains.validate()?;
    let k = 2.0 * gains.fs;
    let den = bilinear_quadratic([1.0, gains.kp, gains.ki], k);
    let gyro = bilinear_quadratic([0.0, 1.0, 0.0], k);
    let accel = bilinear_quadratic([0.0, gains.kp, gains.ki], k);
    let a0 = den[0];
    Ok(DigitalFilterCoefficients {
        gyro_num: gyro.iter().map(|c| c / a0).collect(),
        accel_num: accel.iter().map(|c| c / a0).collect(),
        den: den.iter().map(|c| c / a0).collect(),
        bilinear_k: k,
    })
}

fn eval_poly(c: &[f64], d: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &v| acc * d + v)
}

impl DigitalFilterCoefficients {
    /// Gain of the accel branch at zero frequency (d = 1).
    pub fn accel_dc_gain(&self) -> f64 {
        eval_poly(&self.accel_num, 1.0) / eval_poly(&self.den, 1.0)
    }

    /// Gain of the gyro branch at zero frequency (d = 1).
    pub fn gyro_dc_gain(&self) -> f64 {
        eval_poly(&self.gyro_num, 1.0) / eval_poly(&self.den, 1.0)
    }

    /// Gyro numerator re-expressed as acting on an angle rather than a rate:
    /// multiply by the discrete differentiator `k·(1−d)/(1+d)`.
    pub fn gyro_num_in_angle_terms(&self) -> Vec<f64> {
        let k = self.bilinear_k;
        // times k·(1 − d)
        let mut p = vec![0.0; self.gyro_num.len() + 1];
        for (i, &c) in self.gyro_num.iter().enumerate() {
            p[i] += k * c;
            p[i + 1] -= k * c;
        }
        // exact division by (1 + d), highest power first
        let n = p.len() - 1;
        let mut q = vec![0.0; n];
        let mut rem = p[n];
        for i in (0..n).rev() {
            q[i] = rem;
            rem = p[i] - rem;
        }
        q
    }

    /// Denominator roots in the z-plane (complex pair or two reals).
    pub fn denominator_roots(&self) -> [(f64, f64); 2] {
        // den = 1 + a1 d + a2 d²; poles are roots of z² + a1 z + a2.
        let (a1, a2) = (self.den[1], self.den[2]);
        let disc = a1 * a1 - 4.0 * a2;
        if disc >= 0.0 {
            let r = disc.sqrt();
            [((-a1 + r) / 2.0, 0.0), ((-a1 - r) / 2.0, 0.0)]
        } else {
            let im = (-disc).sqrt() / 2.0;
            [(-a1 / 2.0, im), (-a1 / 2.0, -im)]
        }
    }

    pub fn is_stable(&self) -> bool {
        self.denominator_roots()
            .iter()
            .all(|&(re, im)| (re * re + im * im).sqrt() < 1.0)
    }
}

/// Delay lines for one fused angle.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    gyro_hist: Vec<f64>,
    accel_hist: Vec<f64>,
    out_hist: Vec<f64>,
}

impl FilterState {
    /// All-zero state sized for `coeffs`.
    pub fn zeroed(coeffs: &DigitalFilterCoefficients) -> Self {
        Self {
            gyro_hist: vec![0.0; coeffs.gyro_num.len() - 1],
            accel_hist: vec![0.0; coeffs.accel_num.len() - 1],
            out_hist: vec![0.0; coeffs.den.len() - 1],
        }
    }

    /// Steady state for a device resting at `angle`: past angles and outputs
    /// equal `angle`, past rates zero.
    pub fn warm_start(coeffs: &DigitalFilterCoefficients, angle: f64) -> Self {
        let mut s = Self::zeroed(coeffs);
        s.accel_hist.fill(angle);
        s.out_hist.fill(angle);
        s
    }

    fn fits(&self, coeffs: &DigitalFilterCoefficients) -> bool {
        self.gyro_hist.len() + 1 == coeffs.gyro_num.len()
            && self.accel_hist.len() + 1 == coeffs.accel_num.len()
            && self.out_hist.len() + 1 == coeffs.den.len()
    }
}

fn push_front(hist: &mut [f64], v: f64) {
    if hist.is_empty() {
        return;
    }
    hist.copy_within(0..hist.len() - 1, 1);
    hist[0] = v;
}

/// One recursion of the fused-angle difference equation.
///
/// The state is only advanced when the step succeeds. The returned angle is
/// wrapped to (−π, π]; the state keeps the unwrapped value.
pub fn filter_step(
    state: &mut FilterState,
    coeffs: &DigitalFilterCoefficients,
    gyro_rate: f64,
    accel_angle: f64,
) -> Result<f64> {
    if !state.fits(coeffs) {
        return Err(Error::Shape {
            expected: "filter state sized for coefficients".into(),
            got: "mismatched delay lines".into(),
        });
    }
    if !(gyro_rate.is_finite() && accel_angle.is_finite()) {
        return Err(Error::NonFinite(format!(
            "filter input (rate {gyro_rate}, angle {accel_angle})"
        )));
    }
    let mut y = coeffs.gyro_num[0] * gyro_rate + coeffs.accel_num[0] * accel_angle;
    y += dot(&coeffs.gyro_num[1..], &state.gyro_hist);
    y += dot(&coeffs.accel_num[1..], &state.accel_hist);
    y -= dot(&coeffs.den[1..], &state.out_hist);
    if !y.is_finite() {
        return Err(Error::NonFinite("filter output".into()));
    }
    push_front(&mut state.gyro_hist, gyro_rate);
    push_front(&mut state.accel_hist, accel_angle);
    push_front(&mut state.out_hist, y);
    Ok(wrap_angle(y))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientationEstimate {
    pub roll: f64,
    pub pitch: f64,
}

/// Roll and pitch fusion for one stream.
#[derive(Debug, Clone)]
pub struct ComplementaryFilter {
    coeffs: DigitalFilterCoefficients,
    roll: Option<FilterState>,
    pitch: Option<FilterState>,
    last_accel_angles: (f64, f64),
}

impl ComplementaryFilter {
    pub fn new(gains: &FilterGains) -> Result<Self> {
        Ok(Self {
            coeffs: discretize(gains)?,
            roll: None,
            pitch: None,
            last_accel_angles: (0.0, 0.0),
        })
    }

    pub fn coefficients(&self) -> &DigitalFilterCoefficients {
        &self.coeffs
    }

    /// Fuses one sample. In free fall the last observable accel angles are
    /// held.
    pub fn update(&mut self, accel: [f64; 3], gyro: [f64; 3]) -> Result<OrientationEstimate> {
        let (roll_a, pitch_a) = match accel_to_angles(accel) {
            Ok(a) => a,
            Err(Error::DegenerateInput(_)) => self.last_accel_angles,
            Err(e) => return Err(e),
        };
        let coeffs = &self.coeffs;
        let roll_state = self
            .roll
            .get_or_insert_with(|| FilterState::warm_start(coeffs, roll_a));
        let pitch_state = self
            .pitch
            .get_or_insert_with(|| FilterState::warm_start(coeffs, pitch_a));
        // Validate both before touching either state.
        if !(gyro[0].is_finite() && gyro[1].is_finite()) {
            return Err(Error::NonFinite(format!("gyro sample {gyro:?}")));
        }
        let roll = filter_step(roll_state, coeffs, gyro[0], roll_a)?;
        let pitch = filter_step(pitch_state, coeffs, gyro[1], pitch_a)?;
        self.last_accel_angles = (roll_a, pitch_a);
        Ok(OrientationEstimate { roll, pitch })
    }
}
