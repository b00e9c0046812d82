use std::fmt::Write as _;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::imaging::ImagePlane;
use crate::model::{infer, Mode, ModelParams};
use crate::scalar::Scalar;

/// Wall-clock forward times.
#[derive(Clone, Debug, PartialEq)]
pub struct TimingReport {
    /// Image name and one sample per repeat, in seconds.
    pub images: Vec<(String, Vec<f64>)>,
    pub threads: usize,
    pub precision: &'static str,
    pub profile: &'static str,
}

impl TimingReport {
    pub fn image_means(&self) -> Vec<f64> {
        self.images.iter().map(|(_, s)| s.iter().sum::<f64>() / s.len() as f64).collect()
    }

    /// Mean of the per-image means.
    pub fn mean(&self) -> f64 {
        let m = self.image_means();
        m.iter().sum::<f64>() / m.len() as f64
    }

    pub fn environment(&self) -> String {
        format!(
            "os={} arch={} cpus={} threads={} precision={} profile={}",
            std::env::consts::OS,
            std::env::consts::ARCH,
            std::thread::available_parallelism().map_or(1, |n| n.get()),
            self.threads,
            self.precision,
            self.profile
        )
    }

    /// Tab-separated table with a leading environment comment and a
    /// `#mean` row.
    pub fn to_tsv(&self) -> String {
        let repeats = self.images.first().map_or(0, |(_, s)| s.len());
        let mut out = format!("# {}\nimage\tmean_s", self.environment());
        for r in 0..repeats {
            write!(out, "\trun{}", r + 1).unwrap();
        }
        out.push('\n');
        for ((name, samples), mean) in self.images.iter().zip(self.image_means()) {
            write!(out, "{name}\t{mean:.6}").unwrap();
            for s in samples {
                write!(out, "\t{s:.6}").unwrap();
            }
            out.push('\n');
        }
        writeln!(out, "#mean\t{:.6}", self.mean()).unwrap();
        out
    }
}

/// Times `repeats` inference passes per image after one untimed warmup
/// pass. Only the forward pass is inside the timed region.
pub fn bench<T: Scalar>(params: &ModelParams<T>, images: &[(String, ImagePlane)], repeats: usize) -> Result<TimingReport> {
    if images.is_empty() {
        return Err(Error::usage("no images to time"));
    }
    if repeats == 0 {
        return Err(Error::usage("repeats must be at least 1"));
    }
    let mut rows = Vec::with_capacity(images.len());
    for (name, plane) in images {
        let x = plane.to_tensor::<T>();
        infer(params, &x, Mode::Infer)?;
        let mut samples = Vec::with_capacity(repeats);
        for _ in 0..repeats {
            let start = Instant::now();
            let y = infer(params, &x, Mode::Infer)?;
            samples.push(start.elapsed().as_secs_f64());
            drop(y);
        }
        rows.push((name.clone(), samples));
    }
    Ok(TimingReport {
        images: rows,
        threads: rayon::current_num_threads(),
        precision: T::NAME,
        profile: if cfg!(debug_assertions) { "debug" } else { "release" },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::Channel;
    use crate::model::IdnConfig;

    #[test]
    fn samples_per_image() {
        let c = IdnConfig { scale: 2, num_dblocks: 1, d3: 8, d: 2, s: 4, groups: 2, feat_channels: 8, ..Default::default() };
        let p = crate::model::init_params::<f32>(&c, 0).unwrap();
        let im = ImagePlane::filled(6, 7, Channel::Y, 0.5).unwrap();
        let r = bench(&p, &[("a".into(), im.clone()), ("b".into(), im)], 3).unwrap();
        assert_eq!(r.images.len(), 2);
        assert!(r.images.iter().all(|(_, s)| s.len() == 3 && s.iter().all(|&t| t > 0.0)));
        let tsv = r.to_tsv();
        assert_eq!(tsv.lines().count(), 5);
        assert!(tsv.contains(&format!("threads={}", r.threads)));
        assert!(tsv.lines().last().unwrap().starts_with("#mean\t"));
        assert!(matches!(bench(&p, &[], 3), Err(Error::Usage(_))));
    }
}
