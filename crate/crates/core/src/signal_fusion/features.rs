use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{rotate_to_body, ButterworthLowpass, ComplementaryFilter, FilterGains, OrientationEstimate};
use crate::error::{Error, Result};
use crate::ingest::ImuSample;

/// One scalar feature derived per sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureChannel {
    FusedRoll,
    FusedPitch,
    RollRate,
    PitchRate,
    YawRate,
    /// Low-pass filtered accelerometer axis (0..3).
    Accel(u8),
    /// Low-pass filtered, gravity-compensated acceleration in the motion frame.
    BodyAccel(u8),
    /// Untouched file column (0..6), for traces that are not IMU data.
    Raw(u8),
}

impl FeatureChannel {
    fn needs_fusion(self) -> bool {
        matches!(
            self,
            FeatureChannel::FusedRoll | FeatureChannel::FusedPitch | FeatureChannel::BodyAccel(_)
        )
    }

    fn needs_lowpass(self) -> bool {
        matches!(self, FeatureChannel::Accel(_) | FeatureChannel::BodyAccel(_))
    }
}

const AXES: [char; 3] = ['x', 'y', 'z'];

impl fmt::Display for FeatureChannel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureChannel::FusedRoll => write!(f, "fused_roll"),
            FeatureChannel::FusedPitch => write!(f, "fused_pitch"),
            FeatureChannel::RollRate => write!(f, "roll_rate"),
            FeatureChannel::PitchRate => write!(f, "pitch_rate"),
            FeatureChannel::YawRate => write!(f, "yaw_rate"),
            FeatureChannel::Accel(i) => write!(f, "accel_{}", AXES[*i as usize]),
            FeatureChannel::BodyAccel(i) => write!(f, "body_accel_{}", AXES[*i as usize]),
            FeatureChannel::Raw(i) => write!(f, "raw{i}"),
        }
    }
}

impl FromStr for FeatureChannel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let axis = |c: &str| match c {
            "x" => Some(0u8),
            "y" => Some(1),
            "z" => Some(2),
            _ => None,
        };
        let parsed = match s {
            "fused_roll" => Some(FeatureChannel::FusedRoll),
            "fused_pitch" => Some(FeatureChannel::FusedPitch),
            "roll_rate" => Some(FeatureChannel::RollRate),
            "pitch_rate" => Some(FeatureChannel::PitchRate),
            "yaw_rate" => Some(FeatureChannel::YawRate),
            _ => {
                if let Some(a) = s.strip_prefix("body_accel_") {
                    axis(a).map(FeatureChannel::BodyAccel)
                } else if let Some(a) = s.strip_prefix("accel_") {
                    axis(a).map(FeatureChannel::Accel)
                } else if let Some(i) = s.strip_prefix("raw") {
                    i.parse::<u8>().ok().filter(|&i| i < 6).map(FeatureChannel::Raw)
                } else {
                    None
                }
            }
        };
        parsed.ok_or_else(|| Error::Config(format!("unknown feature channel `{s}`")))
    }
}

impl Serialize for FeatureChannel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FeatureChannel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub fs: f64,
    pub kp: f64,
    pub ki: f64,
    /// Low-pass cutoff for the accelerometer path, Hz.
    pub butterworth_cutoff: f64,
}

impl FusionConfig {
    pub fn gains(&self) -> FilterGains {
        FilterGains {
            kp: self.kp,
            ki: self.ki,
            fs: self.fs,
        }
    }
}

/// Causal per-sample feature computation for one stream.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    channels: Vec<FeatureChannel>,
    fusion: Option<ComplementaryFilter>,
    lowpass: Option<[ButterworthLowpass; 3]>,
    started: bool,
    last_orientation: OrientationEstimate,
}

impl FeatureExtractor {
    pub fn new(config: &FusionConfig, channels: &[FeatureChannel]) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::Config("at least one feature channel is required".into()));
        }
        let fusion = if channels.iter().any(|c| c.needs_fusion()) {
            Some(ComplementaryFilter::new(&config.gains())?)
        } else {
            None
        };
        let lowpass = if channels.iter().any(|c| c.needs_lowpass()) {
            let f = ButterworthLowpass::new(config.butterworth_cutoff, config.fs)?;
            Some([f.clone(), f.clone(), f])
        } else {
            None
        };
        Ok(Self {
            channels: channels.to_vec(),
            fusion,
            lowpass,
            started: false,
            last_orientation: OrientationEstimate {
                roll: 0.0,
                pitch: 0.0,
            },
        })
    }

    pub fn channels(&self) -> &[FeatureChannel] {
        &self.channels
    }

    /// Orientation from the most recent sample (zero if fusion is unused).
    pub fn orientation(&self) -> OrientationEstimate {
        self.last_orientation
    }

    /// Advances every filter by one sample and returns the selected features.
    pub fn push(&mut self, sample: &ImuSample) -> Result<Vec<f64>> {
        if let Some(f) = self.fusion.as_mut() {
            self.last_orientation = f.update(sample.accel, sample.gyro)?;
        }
        let mut filtered = sample.accel;
        if let Some(lp) = self.lowpass.as_mut() {
            for (i, f) in lp.iter_mut().enumerate() {
                if !self.started {
                    f.settle_at(sample.accel[i]);
                }
                filtered[i] = f.process(sample.accel[i]);
            }
        }
        self.started = true;
        let body = if self
            .channels
            .iter()
            .any(|c| matches!(c, FeatureChannel::BodyAccel(_)))
        {
            rotate_to_body(filtered, self.last_orientation.roll, self.last_orientation.pitch)?
        } else {
            [0.0; 3]
        };
        let raw = sample.channels();
        Ok(self
            .channels
            .iter()
            .map(|c| match *c {
                FeatureChannel::FusedRoll => self.last_orientation.roll,
                FeatureChannel::FusedPitch => self.last_orientation.pitch,
                FeatureChannel::RollRate => sample.gyro[0],
                FeatureChannel::PitchRate => sample.gyro[1],
                FeatureChannel::YawRate => sample.gyro[2],
                FeatureChannel::Accel(i) => filtered[i as usize],
                FeatureChannel::BodyAccel(i) => body[i as usize],
                FeatureChannel::Raw(i) => raw[i as usize],
            })
            .collect())
    }

    /// Features for a whole trace, one row per sample.
    pub fn extract_all(&mut self, samples: &[ImuSample]) -> Result<Vec<Vec<f64>>> {
        samples.iter().map(|s| self.push(s)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        let all = [
            FeatureChannel::FusedRoll,
            FeatureChannel::FusedPitch,
            FeatureChannel::RollRate,
            FeatureChannel::PitchRate,
            FeatureChannel::YawRate,
            FeatureChannel::Accel(2),
            FeatureChannel::BodyAccel(0),
            FeatureChannel::Raw(5),
        ];
        for c in all {
            assert_eq!(c.to_string().parse::<FeatureChannel>().unwrap(), c);
        }
        assert!("raw6".parse::<FeatureChannel>().is_err());
        assert!("pitch".parse::<FeatureChannel>().is_err());
    }

    #[test]
    fn resting_device_features() {
        let cfg = FusionConfig {
            fs: 20.0,
            kp: 7.5924,
            ki: 20.7015,
            butterworth_cutoff: 3.0,
        };
        let chans = [
            FeatureChannel::FusedPitch,
            FeatureChannel::PitchRate,
            FeatureChannel::BodyAccel(2),
        ];
        let mut fx = FeatureExtractor::new(&cfg, &chans).unwrap();
        let th: f64 = 0.1;
        let s = ImuSample::new(0.0, [-9.81 * th.sin(), 0.0, 9.81 * th.cos()], [0.0; 3]);
        for _ in 0..30 {
            let f = fx.push(&s).unwrap();
            assert!((f[0] - th).abs() < 1e-12);
            assert_eq!(f[1], 0.0);
            assert!(f[2].abs() < 1e-12);
        }
    }
}
