//! The training loop, its log and resumable checkpoints.

use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::checkpoint::{get_u32, put_u32, read_tensor, write_tensor};
use crate::model::{idn_forward, load_checkpoint, save_checkpoint, Mode, ModelParams};
use crate::nn::{Graph, Tape};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::{AdamConfig, AdamState, Phase, TrainSchedule};

pub const LOG_FILE: &str = "loss.tsv";
pub const LATEST: &str = "latest.idnw";
pub const RESUME: &str = "latest.resume";
pub const FINAL: &str = "final.idnw";

const RESUME_MAGIC: &[u8; 4] = b"IDNR";
const RESUME_VERSION: u32 = 1;

/// Supplies training batches.
pub trait BatchSource<T: Scalar> {
    /// `batch` LR patches of edge `lr_size` and their labels of edge
    /// `m * lr_size - m + 1`, drawn from `rng`.
    fn sample(&mut self, lr_size: usize, batch: usize, rng: &mut ChaCha8Rng) -> Result<(Tensor<T>, Tensor<T>)>;
}

/// Generator for iteration `iter`; independent of how many draws earlier
/// iterations made, so resumed runs see the same batches.
pub fn iteration_rng(seed: u64, iter: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(iter);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogEntry {
    pub iter: u64,
    pub phase: Phase,
    pub loss: f64,
    pub lr: f64,
}

impl fmt::Display for LogEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{}\t{}\t{}", self.iter, self.phase, self.loss, self.lr)
    }
}

/// State owned by one training run.
pub struct Trainer<T> {
    params: ModelParams<T>,
    schedule: TrainSchedule,
    adam: AdamState<T>,
    adam_phase: Option<Phase>,
    iter: u64,
    log: Vec<LogEntry>,
    out: Option<PathBuf>,
}

fn write_atomic(path: &Path, f: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    let tmp = path.with_extension("tmp");
    f(&tmp)?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

impl<T: Scalar> Trainer<T> {
    /// Starts from `params` at iteration 0. With `out`, the log, periodic
    /// checkpoints and the final weights are written there.
    pub fn new(params: ModelParams<T>, schedule: TrainSchedule, out: Option<PathBuf>) -> Result<Self> {
        schedule.validate()?;
        if params.config().scale != schedule.scale {
            return Err(Error::config(format!(
                "model scale {} does not match schedule scale {}",
                params.config().scale,
                schedule.scale
            )));
        }
        if let Some(dir) = &out {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let adam = AdamState::new(params.layers(), schedule.adam);
        Ok(Self { params, schedule, adam, adam_phase: None, iter: 0, log: Vec::new(), out })
    }

    /// Continues a run from the latest checkpoint in `dir`.
    pub fn resume(dir: impl Into<PathBuf>, schedule: TrainSchedule) -> Result<Self> {
        let dir = dir.into();
        let params = load_checkpoint::<T>(dir.join(LATEST))?;
        let mut trainer = Self::new(params, schedule, Some(dir.clone()))?;
        let path = dir.join(RESUME);
        let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
        let (iter, phase, adam) = read_resume(&mut BufReader::new(file), trainer.params.layers().len())?;
        trainer.iter = iter;
        trainer.adam_phase = Some(phase);
        let config = AdamConfig { lr: trainer.schedule.plans()[phase.index()].lr, ..trainer.schedule.adam };
        trainer.adam = AdamState::from_moments(config, adam.0, adam.1, adam.2);
        trainer.truncate_log()?;
        Ok(trainer)
    }

    /// Drops log lines from iterations after the checkpoint being resumed,
    /// which an interrupted run may have written.
    fn truncate_log(&self) -> Result<()> {
        let Some(dir) = &self.out else { return Ok(()) };
        let path = dir.join(LOG_FILE);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(()),
            Err(e) => return Err(Error::io(&path, e)),
        };
        let kept: String = text
            .lines()
            .filter(|l| l.split('\t').next().and_then(|n| n.parse::<u64>().ok()).is_some_and(|n| n < self.iter))
            .map(|l| format!("{l}\n"))
            .collect();
        if kept.len() != text.len() {
            fs::write(&path, kept).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    pub fn params(&self) -> &ModelParams<T> {
        &self.params
    }

    pub fn iteration(&self) -> u64 {
        self.iter
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }

    pub fn is_done(&self) -> bool {
        self.iter >= self.schedule.total()
    }

    /// Loss of one batch under the current parameters, with its gradients.
    fn loss_and_grads(&self, x: Tensor<T>, y: &Tensor<T>, phase: Phase) -> Result<(f64, Vec<crate::nn::LayerParams<T>>)> {
        let mut tape = Tape::new(self.params.layers());
        let xv = tape.input(x);
        let out = idn_forward(&mut tape, self.params.config(), &xv, Mode::Train, None)?;
        let (loss, grad) = phase.loss().eval(tape.value(&out), y)?;
        if !loss.is_finite() {
            return Err(Error::Divergence { iteration: self.iter, loss });
        }
        Ok((loss, tape.backward(out, &grad)?.layers))
    }

    /// Runs a single iteration and returns its (pre-update) loss.
    pub fn step<S: BatchSource<T>>(&mut self, source: &mut S) -> Result<f64> {
        let (plan, _) = self
            .schedule
            .plan_at(self.iter)
            .ok_or_else(|| Error::State(format!("schedule finished at iteration {}", self.iter)))?;
        if self.adam_phase != Some(plan.phase) {
            // Each phase starts from the previous weights with fresh moments.
            self.adam = AdamState::new(self.params.layers(), AdamConfig { lr: plan.lr, ..self.schedule.adam });
            self.adam_phase = Some(plan.phase);
        }
        let mut rng = iteration_rng(self.schedule.seed, self.iter);
        let (x, y) = source.sample(plan.lr_patch, self.schedule.batch_size, &mut rng)?;
        let (loss, grads) = self.loss_and_grads(x, &y, plan.phase)?;
        self.adam.step(self.params.layers_mut(), &grads)?;

        if self.iter.is_multiple_of(self.schedule.log_every) {
            let entry = LogEntry { iter: self.iter, phase: plan.phase, loss, lr: plan.lr };
            self.append_log(&entry)?;
            self.log.push(entry);
        }
        self.iter += 1;
        if self.iter.is_multiple_of(self.schedule.checkpoint_every) {
            self.checkpoint()?;
        }
        Ok(loss)
    }

    fn append_log(&self, entry: &LogEntry) -> Result<()> {
        let Some(dir) = &self.out else { return Ok(()) };
        let path = dir.join(LOG_FILE);
        let mut f = OpenOptions::new().create(true).append(true).open(&path).map_err(|e| Error::io(&path, e))?;
        writeln!(f, "{entry}").map_err(|e| Error::io(&path, e))
    }

    fn params_finite(&self) -> bool {
        self.params
            .layers()
            .iter()
            .all(|l| l.weight.data().iter().chain(l.bias.data()).all(|v| v.is_finite()))
    }

    /// Writes the latest weights and resume record, unless they are
    /// non-finite, in which case the previous files are kept.
    pub fn checkpoint(&self) -> Result<()> {
        let Some(dir) = &self.out else { return Ok(()) };
        if !self.params_finite() {
            return Err(Error::Divergence { iteration: self.iter, loss: f64::NAN });
        }
        write_atomic(&dir.join(LATEST), |p| save_checkpoint(p, &self.params))?;
        write_atomic(&dir.join(RESUME), |p| {
            let file = File::create(p).map_err(|e| Error::io(p, e))?;
            let mut w = BufWriter::new(file);
            let phase = self.adam_phase.unwrap_or(Phase::Pretrain);
            write_resume(&mut w, self.iter, phase, &self.adam, &self.params.names())?;
            w.flush().map_err(|e| Error::io(p, e))
        })
    }

    /// Runs the remaining schedule, then writes the final weights.
    pub fn run<S: BatchSource<T>>(mut self, source: &mut S) -> Result<TrainOutcome<T>> {
        while !self.is_done() {
            self.step(source)?;
        }
        if let Some(dir) = &self.out {
            write_atomic(&dir.join(FINAL), |p| save_checkpoint(p, &self.params))?;
        }
        Ok(TrainOutcome { params: self.params, log: self.log })
    }
}

pub struct TrainOutcome<T> {
    pub params: ModelParams<T>,
    pub log: Vec<LogEntry>,
}

/// Runs `schedule` from `params` to completion.
pub fn train_loop<T: Scalar, S: BatchSource<T>>(
    params: ModelParams<T>,
    schedule: &TrainSchedule,
    source: &mut S,
    out: Option<&Path>,
) -> Result<TrainOutcome<T>> {
    Trainer::new(params, schedule.clone(), out.map(Path::to_path_buf))?.run(source)
}

fn write_resume<T: Scalar>(w: &mut impl Write, iter: u64, phase: Phase, adam: &AdamState<T>, names: &[String]) -> Result<()> {
    let io = |e| Error::Format(format!("write failed: {e}"));
    w.write_all(RESUME_MAGIC).map_err(io)?;
    put_u32(w, RESUME_VERSION).map_err(io)?;
    w.write_all(&iter.to_le_bytes()).map_err(io)?;
    put_u32(w, phase.index() as u32).map_err(io)?;
    w.write_all(&adam.t.to_le_bytes()).map_err(io)?;
    let (m, v) = adam.moments();
    let labels = names.iter().flat_map(|n| [format!("{n}.weight"), format!("{n}.bias")]);
    for (label, (mt, vt)) in labels.zip(m.iter().zip(v)) {
        write_tensor(w, &format!("m.{label}"), mt)?;
        write_tensor(w, &format!("v.{label}"), vt)?;
    }
    Ok(())
}

type Moments<T> = (u64, Vec<Tensor<T>>, Vec<Tensor<T>>);

fn read_resume<T: Scalar>(r: &mut impl Read, layers: usize) -> Result<(u64, Phase, Moments<T>)> {
    let eof = |e: std::io::Error| Error::Format(format!("truncated resume record: {e}"));
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(eof)?;
    if &magic != RESUME_MAGIC {
        return Err(Error::Format("not a resume record".into()));
    }
    let version = get_u32(r).map_err(eof)?;
    if version != RESUME_VERSION {
        return Err(Error::Format(format!("unsupported resume version {version}")));
    }
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(eof)?;
    let iter = u64::from_le_bytes(b);
    let phase = *Phase::ALL
        .get(get_u32(r).map_err(eof)? as usize)
        .ok_or_else(|| Error::Format("unknown phase index".into()))?;
    r.read_exact(&mut b).map_err(eof)?;
    let t = u64::from_le_bytes(b);
    let (mut m, mut v) = (Vec::new(), Vec::new());
    for _ in 0..2 * layers {
        m.push(read_tensor(r)?.1);
        v.push(read_tensor(r)?.1);
    }
    Ok((iter, phase, (t, m, v)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_params, IdnConfig};

    struct Fixed;

    impl BatchSource<f64> for Fixed {
        fn sample(&mut self, lr: usize, batch: usize, rng: &mut ChaCha8Rng) -> Result<(Tensor<f64>, Tensor<f64>)> {
            use rand::Rng;
            let hr = 2 * lr - 1;
            let x = Tensor::from_fn((batch, 1, lr, lr), |_| rng.gen_range(0.0..1.0))?;
            let y = Tensor::from_fn((batch, 1, hr, hr), |[_, _, i, j]| ((i + j) % 2) as f64)?;
            Ok((x, y))
        }
    }

    fn tiny() -> IdnConfig {
        IdnConfig { scale: 2, num_dblocks: 1, d3: 8, d: 2, s: 4, groups: 2, feat_channels: 8, rblock_kernel: 5, ..Default::default() }
    }

    fn schedule(iters: [u64; 3]) -> TrainSchedule {
        TrainSchedule {
            pretrain_iters: iters[0],
            train_iters: iters[1],
            finetune_iters: iters[2],
            train_patch: 6,
            finetune_patch: 7,
            batch_size: 2,
            log_every: 1,
            checkpoint_every: 2,
            seed: 3,
            ..TrainSchedule::for_scale(2).unwrap()
        }
    }

    #[test]
    fn zero_iterations_leave_params_untouched() {
        let p = init_params::<f64>(&tiny(), 1).unwrap();
        let out = train_loop(p.clone(), &schedule([0, 0, 0]), &mut Fixed, None).unwrap();
        assert_eq!(out.params, p);
        assert!(out.log.is_empty());
    }

    #[test]
    fn log_records_phases_and_lr() {
        let p = init_params::<f64>(&tiny(), 1).unwrap();
        let out = train_loop(p, &schedule([1, 1, 2]), &mut Fixed, None).unwrap();
        let phases: Vec<_> = out.log.iter().map(|e| (e.phase, e.lr)).collect();
        assert_eq!(
            phases,
            vec![
                (Phase::Pretrain, 1e-4),
                (Phase::MaeTrain, 1e-4),
                (Phase::MseFinetune, 1e-5),
                (Phase::MseFinetune, 1e-5)
            ]
        );
        assert_eq!(out.log[0].to_string().split('\t').count(), 4);
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let dir = tempfile::tempdir().unwrap();
        let p = init_params::<f64>(&tiny(), 2).unwrap();
        let full = train_loop(p.clone(), &schedule([2, 2, 2]), &mut Fixed, None).unwrap();

        let mut t = Trainer::new(p, schedule([2, 2, 2]), Some(dir.path().to_path_buf())).unwrap();
        for _ in 0..4 {
            t.step(&mut Fixed).unwrap();
        }
        drop(t);
        let resumed = Trainer::<f64>::resume(dir.path(), schedule([2, 2, 2])).unwrap();
        assert_eq!(resumed.iteration(), 4);
        let out = resumed.run(&mut Fixed).unwrap();
        // Checkpoints store f32, so a resumed f64 run agrees only to f32 precision.
        for (a, b) in out.params.layers().iter().zip(full.params.layers()) {
            let d = a.weight.sub(&b.weight).unwrap().max_abs();
            assert!(d < 1e-6, "weight drift {d}");
        }
        let text = fs::read_to_string(dir.path().join(LOG_FILE)).unwrap();
        assert_eq!(text.lines().count(), 6);
        assert!(dir.path().join(FINAL).exists());
    }

    #[test]
    fn resume_drops_log_lines_after_the_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let p = init_params::<f64>(&tiny(), 2).unwrap();
        let mut t = Trainer::new(p, schedule([3, 3, 0]), Some(dir.path().to_path_buf())).unwrap();
        for _ in 0..5 {
            t.step(&mut Fixed).unwrap();
        }
        drop(t);
        let resumed = Trainer::<f64>::resume(dir.path(), schedule([3, 3, 0])).unwrap();
        assert_eq!(resumed.iteration(), 4);
        resumed.run(&mut Fixed).unwrap();
        let text = fs::read_to_string(dir.path().join(LOG_FILE)).unwrap();
        let iters: Vec<u64> = text.lines().map(|l| l.split('\t').next().unwrap().parse().unwrap()).collect();
        assert_eq!(iters, [0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn divergence_keeps_last_checkpoint() {
        struct Poison(u32);
        impl BatchSource<f64> for Poison {
            fn sample(&mut self, lr: usize, batch: usize, rng: &mut ChaCha8Rng) -> Result<(Tensor<f64>, Tensor<f64>)> {
                self.0 += 1;
                let (x, mut y) = Fixed.sample(lr, batch, rng)?;
                if self.0 > 2 {
                    y.data_mut()[0] = f64::NAN;
                }
                Ok((x, y))
            }
        }
        let dir = tempfile::tempdir().unwrap();
        let p = init_params::<f64>(&tiny(), 2).unwrap();
        let t = Trainer::new(p, schedule([5, 0, 0]), Some(dir.path().to_path_buf())).unwrap();
        let err = t.run(&mut Poison(0)).err().unwrap();
        assert!(matches!(err, Error::Divergence { iteration: 2, .. }));
        let kept: ModelParams<f32> = load_checkpoint(dir.path().join(LATEST)).unwrap();
        assert_eq!(kept.config().scale, 2);
        assert!(!dir.path().join(FINAL).exists());
    }
}
