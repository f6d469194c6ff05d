use std::path::Path;

use crate::error::{Error, Result};
use crate::ingest::SignalTrace;
use crate::signal_fusion::{ComplementaryFilter, FilterGains, OrientationEstimate};

/// Fused roll and pitch for every sample of an IMU trace.
pub fn fuse_orientation(trace: &SignalTrace, gains: &FilterGains) -> Result<Vec<OrientationEstimate>> {
    let mut f = ComplementaryFilter::new(gains)?;
    trace
        .samples()
        .iter()
        .map(|s| f.update(s.accel, s.gyro))
        .collect()
}

/// Tidy table: `t, <raw channels>, fused_roll, fused_pitch, label`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotData {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl PlotData {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

pub fn emit_plot_data(
    path: impl AsRef<Path>,
    trace: &SignalTrace,
    fused: &[OrientationEstimate],
    labels: &[i64],
) -> Result<()> {
    let path = path.as_ref();
    if fused.len() != trace.len() || labels.len() != trace.len() {
        return Err(Error::Shape {
            expected: format!("{} samples", trace.len()),
            got: format!("{} fused, {} labels", fused.len(), labels.len()),
        });
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    let mut header = vec!["t".to_string()];
    header.extend(trace.channel_names().iter().cloned());
    header.extend(["fused_roll", "fused_pitch", "label"].map(String::from));
    w.write_record(&header).map_err(|e| csv_io(path, e))?;
    for ((s, o), l) in trace.samples().iter().zip(fused).zip(labels) {
        let mut rec = vec![format!("{}", s.t)];
        rec.extend(s.channels().iter().map(|v| format!("{v}")));
        rec.push(format!("{}", o.roll));
        rec.push(format!("{}", o.pitch));
        rec.push(l.to_string());
        w.write_record(&rec).map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_plot_data(path: impl AsRef<Path>) -> Result<PlotData> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_io(path, e))?;
    let header: Vec<String> = r
        .headers()
        .map_err(|e| csv_io(path, e))?
        .iter()
        .map(String::from)
        .collect();
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::Format {
            row: i + 2,
            message: e.to_string(),
        })?;
        let row = rec
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Format {
                row: i + 2,
                message: e.to_string(),
            })?;
        rows.push(row);
    }
    Ok(PlotData { header, rows })
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format {
            row: 0,
            message: format!("{other:?}"),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::ImuSample;
    use crate::signal_fusion::{accel_to_angles, GRAVITY};
    use proptest::prelude::{prop_assert, proptest, ProptestConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn rms(est: impl Iterator<Item = f64>, truth: &[f64]) -> f64 {
        let sq: f64 = est.zip(truth).map(|(e, t)| (e - t).powi(2)).sum();
        (sq / truth.len() as f64).sqrt()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        // Smooth pitch motion without linear acceleration; both sensors
        // carry their noise and the gyro a constant bias.
        #[test]
        fn fusion_beats_either_sensor_alone(
            seed in 0u64..10_000,
            amp in 0.0f64..0.2,
            hz in 0.05f64..1.0,
            bias in 0.005f64..0.02,
            negative in proptest::bool::ANY,
            secs in 30.0f64..90.0,
        ) {
            let fs = 20.0;
            let bias = if negative { -bias } else { bias };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let an = Normal::new(0.0, 0.3).unwrap();
            let gn = Normal::new(0.0, 0.02).unwrap();
            let w = 2.0 * std::f64::consts::PI * hz;
            let n = (secs * fs) as usize;
            let truth: Vec<f64> = (0..n).map(|i| 0.05 + amp * (w * i as f64 / fs).sin()).collect();
            let samples: Vec<ImuSample> = (0..n)
                .map(|i| {
                    let t = i as f64 / fs;
                    let p = truth[i];
                    let accel = [
                        -GRAVITY * p.sin() + an.sample(&mut rng),
                        an.sample(&mut rng),
                        GRAVITY * p.cos() + an.sample(&mut rng),
                    ];
                    let rate = amp * w * (w * t).cos();
                    ImuSample::new(t, accel, [gn.sample(&mut rng), rate + bias + gn.sample(&mut rng), 0.0])
                })
                .collect();
            let trace = SignalTrace::imu(samples, fs).unwrap();
            let fused = fuse_orientation(&trace, &FilterGains::tuned(fs)).unwrap();
            let fused_rms = rms(fused.iter().map(|o| o.pitch), &truth);
            let accel_rms = rms(trace.samples().iter().map(|s| accel_to_angles(s.accel).unwrap().1), &truth);
            let mut angle = truth[0];
            let integrated = trace.samples().iter().map(|s| {
                let a = angle;
                angle += s.gyro[1] / fs;
                a
            });
            let gyro_rms = rms(integrated, &truth);
            prop_assert!(fused_rms < accel_rms && fused_rms < gyro_rms,
                "fused {fused_rms}, accel {accel_rms}, gyro {gyro_rms}");
        }
    }

    #[test]
    fn hundred_rows_round_trip() {
        let samples: Vec<ImuSample> = (0..100)
            .map(|i| {
                let t = i as f64 / 20.0;
                ImuSample::new(t, [0.1 * t.sin(), 0.0, 9.81], [0.01, -0.02 * t, 1.0 / 3.0])
            })
            .collect();
        let trace = SignalTrace::imu(samples, 20.0).unwrap();
        let fused = fuse_orientation(&trace, &FilterGains::tuned(20.0)).unwrap();
        let labels: Vec<i64> = (0..100).map(|i| if i < 19 { -1 } else { i % 3 }).collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plot.csv");
        emit_plot_data(&path, &trace, &fused, &labels).unwrap();
        let back = load_plot_data(&path).unwrap();
        assert_eq!(back.rows.len(), 100);
        assert_eq!(back.header.len(), 10);
        for (row, s) in back.rows.iter().zip(trace.samples()) {
            assert!((row[0] - s.t).abs() < 1e-9);
            for k in 0..6 {
                assert!((row[k + 1] - s.channels()[k]).abs() < 1e-9);
            }
        }
        let l = back.column("label").unwrap();
        assert_eq!(l.iter().map(|v| *v as i64).collect::<Vec<_>>(), labels);
        let p = back.column("fused_pitch").unwrap();
        assert!(p.iter().zip(&fused).all(|(a, b)| (a - b.pitch).abs() < 1e-9));
    }

    #[test]
    fn unwritable_path() {
        let trace = SignalTrace::imu(vec![ImuSample::new(0.0, [0.0, 0.0, 9.81], [0.0; 3])], 20.0).unwrap();
        let fused = fuse_orientation(&trace, &FilterGains::tuned(20.0)).unwrap();
        let r = emit_plot_data("/nonexistent-dir/x.csv", &trace, &fused, &[0]);
        assert!(matches!(r, Err(Error::Io { .. })));
    }
}
