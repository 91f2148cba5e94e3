//! Levenberg-Marquardt training.
//!
//! Each epoch solves `(JᵀJ + μI) Δ = Jᵀe` at the current parameters and
//! proposes `x - Δ`. A proposal is accepted only if it lowers the sum of
//! squared residuals; otherwise μ grows and the same `J`, `e` are reused.
//! Only accepted updates count as epochs.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::WindowedDataset;
use crate::error::{Error, Result};
use crate::linalg::{solve_spd, Matrix, Vector};
use crate::network::{Dims, MlpParams};

#[derive(Debug, Clone, PartialEq)]
pub struct LmConfig {
    pub mu_init: f64,
    pub mu_inc: f64,
    pub mu_dec: f64,
    pub mu_max: f64,
    pub max_epochs: usize,
    /// Target mean squared error in normalised units.
    pub error_goal: f64,
    pub seed: u64,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            mu_init: 1e-3,
            mu_inc: 10.0,
            mu_dec: 0.1,
            mu_max: 1e10,
            max_epochs: 300,
            error_goal: 0.006,
            seed: 42,
        }
    }
}

impl LmConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::invalid(format!("LmConfig: {msg}")));
        if !(self.mu_init > 0.0 && self.mu_init.is_finite()) {
            return bad("mu_init must be > 0");
        }
        if !(self.mu_inc > 1.0 && self.mu_inc.is_finite()) {
            return bad("mu_inc must be > 1");
        }
        if !(self.mu_dec > 0.0 && self.mu_dec < 1.0) {
            return bad("mu_dec must lie in (0, 1)");
        }
        if !(self.mu_max > self.mu_init && self.mu_max.is_finite()) {
            return bad("mu_max must exceed mu_init");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be >= 1");
        }
        if !(self.error_goal > 0.0 && self.error_goal.is_finite()) {
            return bad("error_goal must be > 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    GoalReached,
    MaxEpochs,
    MuExceeded,
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StopReason::GoalReached => "goal_reached",
            StopReason::MaxEpochs => "max_epochs",
            StopReason::MuExceeded => "mu_exceeded",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mse: f64,
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmState {
    pub x: Vector,
    pub mu: f64,
    pub epoch: usize,
    pub mse: f64,
    /// Epoch 0 is the initial point; later rows are accepted updates.
    pub history: Vec<EpochRecord>,
}

impl LmState {
    pub fn new<P: LeastSquares + ?Sized>(problem: &P, x: Vector, cfg: &LmConfig) -> Result<Self> {
        let e = problem.residuals(&x)?;
        let mse = mse(&e)?;
        Ok(LmState {
            x,
            mu: cfg.mu_init,
            epoch: 0,
            mse,
            history: vec![EpochRecord {
                epoch: 0,
                mse,
                mu: cfg.mu_init,
            }],
        })
    }

    pub fn history_csv(&self) -> String {
        let mut s = String::from("epoch,mse,mu\n");
        for r in &self.history {
            let _ = writeln!(s, "{},{},{}", r.epoch, r.mse, r.mu);
        }
        s
    }

    pub fn write_history(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.history_csv()).map_err(|e| Error::io(path, e))
    }
}

/// A residual model `e(x)` with its Jacobian.
pub trait LeastSquares {
    fn num_params(&self) -> usize;
    fn residuals(&self, x: &Vector) -> Result<Vector>;
    fn jacobian(&self, x: &Vector) -> Result<Matrix>;
}

/// Every network parameter free.
pub struct MlpProblem<'a> {
    template: MlpParams,
    data: &'a WindowedDataset,
}

impl<'a> MlpProblem<'a> {
    /// `template` fixes the shape and activation; its values are ignored.
    pub fn new(template: &MlpParams, data: &'a WindowedDataset) -> Result<Self> {
        let dims = template.dims();
        if data.input_dim() != dims.input || data.output_dim() != dims.output {
            return Err(Error::invalid(format!(
                "network {dims} does not fit data with {} inputs and {} targets",
                data.input_dim(),
                data.output_dim()
            )));
        }
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(MlpProblem {
            template: template.clone(),
            data,
        })
    }
}

impl LeastSquares for MlpProblem<'_> {
    fn num_params(&self) -> usize {
        self.template.dims().num_params()
    }

    fn residuals(&self, x: &Vector) -> Result<Vector> {
        self.template.with_flat(x)?.error_vector(self.data)
    }

    fn jacobian(&self, x: &Vector) -> Result<Matrix> {
        self.template.with_flat(x)?.jacobian(self.data)
    }
}

/// Hidden layer frozen at the base network; only `w2` and `b2` are free.
/// With an identity hidden activation this is an ordinary linear
/// least-squares problem.
pub struct OutputLayerProblem<'a> {
    base: MlpParams,
    data: &'a WindowedDataset,
}

impl<'a> OutputLayerProblem<'a> {
    pub fn new(base: &MlpParams, data: &'a WindowedDataset) -> Result<Self> {
        MlpProblem::new(base, data)?;
        Ok(OutputLayerProblem {
            base: base.clone(),
            data,
        })
    }

    fn full(&self, x: &Vector) -> Result<MlpParams> {
        let off = self.base.dims().output_layer_offset();
        if x.len() != self.num_params() {
            return Err(Error::DimensionMismatch {
                op: "OutputLayerProblem",
                expected: self.num_params(),
                found: x.len(),
            });
        }
        let mut flat = self.base.flatten().into_inner();
        flat[off..].copy_from_slice(x.as_slice());
        self.base.with_flat(&Vector::new(flat)?)
    }

    /// Current output-layer parameters of the base network.
    pub fn initial(&self) -> Vector {
        let off = self.base.dims().output_layer_offset();
        Vector::new(self.base.flatten().as_slice()[off..].to_vec()).expect("finite")
    }
}

impl LeastSquares for OutputLayerProblem<'_> {
    fn num_params(&self) -> usize {
        let d = self.base.dims();
        d.num_params() - d.output_layer_offset()
    }

    fn residuals(&self, x: &Vector) -> Result<Vector> {
        self.full(x)?.error_vector(self.data)
    }

    fn jacobian(&self, x: &Vector) -> Result<Matrix> {
        let full = self.full(x)?.jacobian(self.data)?;
        let off = self.base.dims().output_layer_offset();
        let p = self.num_params();
        let mut data = Vec::with_capacity(full.rows() * p);
        for r in 0..full.rows() {
            data.extend_from_slice(&full.row(r)[off..]);
        }
        Matrix::new(full.rows(), p, data)
    }
}

/// Independent draws from U[-0.5, 0.5] in flat-parameter order.
pub fn init_params(seed: u64, dims: Dims) -> MlpParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = (0..dims.num_params())
        .map(|_| rng.random_range(-0.5..=0.5))
        .collect();
    MlpParams::unflatten(dims, &Vector::new(x).expect("finite draws")).expect("matching length")
}

pub fn mse(e: &Vector) -> Result<f64> {
    if e.is_empty() {
        return Err(Error::invalid("mse of an empty error vector"));
    }
    let v = e.iter().map(|x| x * x).sum::<f64>() / e.len() as f64;
    if !v.is_finite() {
        return Err(Error::NumericOverflow("mean squared error overflowed".into()));
    }
    Ok(v)
}

/// Solves `(JᵀJ + μI) Δ = Jᵀe` for the step `Δ`; the update is `x - Δ`.
pub fn propose_step(jtj: &Matrix, jte: &Vector, mu: f64) -> Result<Vector> {
    solve_spd(&jtj.add_diagonal(mu)?, jte)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Accepted,
    /// μ passed `mu_max` without any proposal lowering the error.
    MuExceeded,
}

pub fn lm_step<P: LeastSquares + ?Sized>(
    state: &LmState,
    problem: &P,
    cfg: &LmConfig,
) -> Result<(LmState, StepOutcome)> {
    let e = problem.residuals(&state.x)?;
    if e.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let sse: f64 = e.iter().map(|v| v * v).sum();
    let jac = problem.jacobian(&state.x)?;
    let jtj = jac.gram()?;
    let jte = jac.tr_matvec(&e)?;

    let mut mu = state.mu;
    loop {
        match propose_step(&jtj, &jte, mu) {
            Ok(delta) => {
                if let Ok(candidate) = state.x.sub(&delta) {
                    // A candidate whose residuals overflow is simply a bad step.
                    if let Ok(e_new) = problem.residuals(&candidate) {
                        let sse_new: f64 = e_new.iter().map(|v| v * v).sum();
                        if sse_new < sse {
                            let mu_next = mu * cfg.mu_dec;
                            let mut next = state.clone();
                            next.x = candidate;
                            next.mu = mu_next;
                            next.epoch += 1;
                            next.mse = sse_new / e_new.len() as f64;
                            next.history.push(EpochRecord {
                                epoch: next.epoch,
                                mse: next.mse,
                                mu: mu_next,
                            });
                            return Ok((next, StepOutcome::Accepted));
                        }
                    }
                }
            }
            Err(Error::NotPositiveDefinite { .. }) | Err(Error::NumericOverflow(_)) => {}
            Err(other) => return Err(other),
        }
        mu *= cfg.mu_inc;
        if mu > cfg.mu_max {
            let mut done = state.clone();
            done.mu = cfg.mu_max;
            return Ok((done, StepOutcome::MuExceeded));
        }
    }
}

/// Runs LM from `x0` until the goal, the epoch limit, or the μ ceiling.
pub fn train_problem<P: LeastSquares + ?Sized>(
    problem: &P,
    x0: Vector,
    cfg: &LmConfig,
) -> Result<(LmState, StopReason)> {
    cfg.validate()?;
    if x0.len() != problem.num_params() {
        return Err(Error::DimensionMismatch {
            op: "train",
            expected: problem.num_params(),
            found: x0.len(),
        });
    }
    let mut state = LmState::new(problem, x0, cfg)?;
    loop {
        if state.mse <= cfg.error_goal {
            return Ok((state, StopReason::GoalReached));
        }
        if state.epoch >= cfg.max_epochs {
            return Ok((state, StopReason::MaxEpochs));
        }
        let (next, outcome) = lm_step(&state, problem, cfg)?;
        if !next.mse.is_finite() {
            return Err(Error::NumericOverflow(format!(
                "loss became non-finite at epoch {}",
                next.epoch
            )));
        }
        state = next;
        if outcome == StepOutcome::MuExceeded {
            return Ok((state, StopReason::MuExceeded));
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub params: MlpParams,
    pub state: LmState,
    pub stop: StopReason,
}

/// Initialises a tansig network from `cfg.seed` and trains it full-batch.
pub fn train(data: &WindowedDataset, cfg: &LmConfig, dims: Dims) -> Result<Trained> {
    cfg.validate()?;
    let init = init_params(cfg.seed, dims);
    let problem = MlpProblem::new(&init, data)?;
    let (state, stop) = train_problem(&problem, init.flatten(), cfg)?;
    let params = init.with_flat(&state.x)?;
    Ok(Trained {
        params,
        state,
        stop,
    })
}
