//! Saddle-point training of the transport map against a dual potential.
//!
//! The map player minimizes transport cost minus the potential of the
//! transported pair, plus an optional physical penalty; the potential player
//! ascends the dual gap between target and transported-source batches. The
//! loop follows the N11 x (N12 + 1) structure: N12 map steps per single
//! potential step.

use rand::seq::index::sample as index_sample;
use serde::{Deserialize, Serialize};

use crate::diff::{Act, Adam, AdamConfig, Mlp, MlpVars, Tape, Tensor, Var};
use crate::error::TrainError;
use crate::model::train::gather_rows;
use crate::model::OperatorModel;
use crate::pde::grid::{Dataset, Domain};
use crate::pott::cost::{batch_cost, batch_cost_var};
use crate::pott::map::{MapConfig, TransportMap};
use crate::pott::regs::{conservation_reg, conservation_value, generic_reg, generic_value};
use crate::rng::stream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegKind {
    None,
    Conservation,
    Generic,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PottConfig {
    /// Physical penalty weight.
    pub lambda: f64,
    /// Replay weight used by the downstream transfer stage.
    pub beta: f64,
    pub reg: RegKind,
    /// Outer iterations.
    pub n11: usize,
    /// Map steps per outer iteration.
    pub n12: usize,
    /// Transfer epochs run by the downstream stage.
    pub n2: usize,
    pub lr_t: f64,
    pub lr_f: f64,
    /// Multiplier on the transport cost term.
    pub cost_scale: f64,
    pub batch: usize,
    pub map: MapConfig,
    pub potential_hidden: usize,
    pub potential_depth: usize,
}

impl Default for PottConfig {
    fn default() -> Self {
        PottConfig {
            lambda: 1.0,
            beta: 0.5,
            reg: RegKind::None,
            n11: 100,
            n12: 10,
            n2: 40,
            lr_t: 1e-3,
            lr_f: 1e-3,
            cost_scale: 1.0,
            batch: 20,
            map: MapConfig::default(),
            potential_hidden: 128,
            potential_depth: 2,
        }
    }
}

impl PottConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(TrainError::Config(format!(
                "penalty weight {} must be finite and nonnegative",
                self.lambda
            )));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(TrainError::Config(format!(
                "replay weight {} must be finite and nonnegative",
                self.beta
            )));
        }
        if self.n12 == 0 {
            return Err(TrainError::Config("need at least one map step per outer iteration".into()));
        }
        if self.batch == 0 {
            return Err(TrainError::Config("batch size must be positive".into()));
        }
        Ok(())
    }
}

/// Scalar witness network over the concatenated (k, u) rows.
#[derive(Clone, Debug)]
pub struct DualPotential {
    pub net: Mlp,
}

impl DualPotential {
    pub fn init(n_in: usize, hidden: usize, depth: usize, rng: &mut rand_chacha::ChaCha8Rng) -> DualPotential {
        let mut dims = vec![n_in];
        dims.extend(std::iter::repeat(hidden).take(depth));
        dims.push(1);
        DualPotential {
            net: Mlp::init(&dims, Act::Gelu, rng),
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.net.params()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.net.params_mut()
    }

    pub fn bind<'t>(&self, tape: &'t Tape, trainable: bool) -> PotentialVars<'t> {
        PotentialVars {
            tape,
            net: self.net.bind(tape, trainable),
        }
    }

    /// Gradient-free potential values for plain rows, one per sample.
    pub fn eval_rows(&self, k_rows: &Tensor, u_rows: &Tensor) -> Vec<f64> {
        let n = k_rows.shape()[0];
        assert_eq!(n, u_rows.shape()[0], "row counts differ across components");
        let mut out = Vec::with_capacity(n);
        let mut start = 0;
        while start < n {
            let len = 64.min(n - start);
            let kc = slice_rows(k_rows, start, len);
            let uc = slice_rows(u_rows, start, len);
            let tape = Tape::new();
            let v = self
                .bind(&tape, false)
                .eval(tape.constant(kc), tape.constant(uc))
                .value();
            out.extend_from_slice(v.data());
            start += len;
        }
        out
    }
}

fn slice_rows(x: &Tensor, start: usize, len: usize) -> Tensor {
    let w = x.shape()[1];
    Tensor::from_fn(&[len, w], |i| x.data()[start * w + i])
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub struct PotentialVars<'t> {
    tape: &'t Tape,
    pub net: MlpVars<'t>,
}

impl<'t> PotentialVars<'t> {
    /// Potential of each (k, u) row pair, shape [batch, 1].
    pub fn eval(&self, k_rows: Var<'t>, u_rows: Var<'t>) -> Var<'t> {
        self.net.forward(self.tape.concat(&[k_rows, u_rows], 1))
    }

    pub fn grads(&self) -> Vec<Tensor> {
        self.net.grads()
    }
}

/// Per-outer-iteration minibatch estimates of the dual objective and its
/// pieces: objective = cost - E_src f(T) + E_tgt f + lambda * reg.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DualStats {
    pub objective: f64,
    pub cost: f64,
    pub reg: f64,
}

fn sample_idx(seed: u64, tag: &str, index: u64, len: usize, amount: usize) -> Vec<usize> {
    index_sample(&mut stream(seed, tag, index), len, amount).into_vec()
}

fn largest_magnitude(params: &[&Tensor]) -> f64 {
    params
        .iter()
        .flat_map(|p| p.data())
        .fold(0.0f64, |a, &v| a.max(v.abs()))
}

/// See the trainer's parameter-blowup guard: the tape refuses non-finite
/// values, so runaway players must be caught right after their step.
const PARAM_BLOWUP: f64 = 1e30;

pub struct DualRunner<'a> {
    cfg: PottConfig,
    seed: u64,
    g_src: Option<&'a OperatorModel>,
    pub map: TransportMap,
    pub potential: DualPotential,
    adam_t: Adam,
    adam_f: Adam,
    src_k: Tensor,
    src_u: Tensor,
    tgt_k: Tensor,
    tgt_u: Tensor,
    u_dom: Domain,
    outer: usize,
    theta_steps: u64,
    trace: Vec<f64>,
}

impl<'a> DualRunner<'a> {
    pub fn new(
        src: &Dataset,
        tgt: &Dataset,
        g_src: Option<&'a OperatorModel>,
        cfg: PottConfig,
        seed: u64,
    ) -> Result<DualRunner<'a>, TrainError> {
        cfg.validate()?;
        if src.is_empty() {
            return Err(TrainError::Config("empty source split".into()));
        }
        if tgt.is_empty() {
            return Err(TrainError::Config("empty target split".into()));
        }
        if src.k_domain() != tgt.k_domain() || src.u_domain() != tgt.u_domain() {
            return Err(TrainError::Config(format!(
                "source and target discretizations differ: {:?}/{:?} vs {:?}/{:?}",
                src.k_domain(),
                src.u_domain(),
                tgt.k_domain(),
                tgt.u_domain()
            )));
        }
        if cfg.batch > src.len() {
            return Err(TrainError::Config(format!(
                "source batch {} larger than source split {}",
                cfg.batch,
                src.len()
            )));
        }
        if cfg.batch > tgt.len() {
            return Err(TrainError::Config(format!(
                "target batch {} larger than target split {}",
                cfg.batch,
                tgt.len()
            )));
        }
        match cfg.reg {
            RegKind::Generic if g_src.is_none() => {
                return Err(TrainError::Config(
                    "the generic physics penalty needs a frozen source operator".into(),
                ));
            }
            RegKind::Conservation => {
                if !matches!(src.u_domain(), Domain::SpaceTime { .. }) {
                    return Err(TrainError::Config(
                        "the conservation penalty needs space-time solutions".into(),
                    ));
                }
            }
            _ => {}
        }

        let n_k = src.k_domain().numel();
        let n_u = src.u_domain().numel();
        let map = TransportMap::init(n_k, n_u, cfg.map, &mut stream(seed, "pott/map", 0));
        let potential = DualPotential::init(
            n_k + n_u,
            cfg.potential_hidden,
            cfg.potential_depth,
            &mut stream(seed, "pott/potential", 0),
        );
        let mut adam_t = Adam::for_params(&map.params(), AdamConfig { lr: cfg.lr_t, ..AdamConfig::default() });
        adam_t.set_names(map.param_names());
        let mut adam_f = Adam::for_params(&potential.params(), AdamConfig { lr: cfg.lr_f, ..AdamConfig::default() });
        adam_f.set_names(potential.net.param_names("potential"));

        Ok(DualRunner {
            cfg,
            seed,
            g_src,
            map,
            potential,
            adam_t,
            adam_f,
            src_k: src.stack_k(),
            src_u: src.stack_u(),
            tgt_k: tgt.stack_k(),
            tgt_u: tgt.stack_u(),
            u_dom: src.u_domain(),
            outer: 0,
            theta_steps: 0,
            trace: Vec::new(),
        })
    }

    fn reg_term<'t>(&self, tape: &'t Tape, tk: Var<'t>, tu: Var<'t>) -> Option<Var<'t>> {
        match self.cfg.reg {
            RegKind::None => None,
            RegKind::Conservation => Some(conservation_reg(tu, &self.u_dom)),
            RegKind::Generic => Some(generic_reg(tape, self.g_src.expect("validated at construction"), tk, tu)),
        }
    }

    fn reg_value(&self, tk: &Tensor, tu: &Tensor) -> f64 {
        match self.cfg.reg {
            RegKind::None => 0.0,
            RegKind::Conservation => conservation_value(tu, &self.u_dom),
            RegKind::Generic => generic_value(self.g_src.expect("validated at construction"), tk, tu),
        }
    }

    fn diverged(&self, step: usize, loss: f64) -> TrainError {
        let tail_from = self.trace.len().saturating_sub(20);
        let mut trace = self.trace[tail_from..].to_vec();
        trace.push(loss);
        TrainError::Diverged { step, loss, trace }
    }

    /// N12 Adam steps on the map with the potential frozen.
    pub fn theta_phase(&mut self) -> Result<(), TrainError> {
        for _ in 0..self.cfg.n12 {
            let idx = sample_idx(
                self.seed,
                "pott/theta-batch",
                self.theta_steps,
                self.src_k.shape()[0],
                self.cfg.batch,
            );
            let kb = gather_rows(&self.src_k, &idx);
            let ub = gather_rows(&self.src_u, &idx);
            let grads = {
                let tape = Tape::new();
                let tv = self.map.bind(&tape, true);
                let pv = self.potential.bind(&tape, false);
                let kc = tape.constant(kb);
                let uc = tape.constant(ub);
                let tk = tv.map_k(kc);
                let tu = tv.map_u(uc);
                let cost = batch_cost_var(kc, uc, tk, tu).scale(self.cfg.cost_scale);
                let f_t = pv.eval(tk, tu).mean_all();
                let mut obj = cost - f_t;
                if self.cfg.lambda > 0.0 {
                    if let Some(reg) = self.reg_term(&tape, tk, tu) {
                        obj = obj + reg.scale(self.cfg.lambda);
                    }
                }
                let v = obj.item();
                if !v.is_finite() {
                    return Err(self.diverged(self.theta_steps as usize, v));
                }
                tape.backward(obj);
                tv.grads()
            };
            self.adam_t
                .step_with_lr(self.map.params_mut(), &grads, self.cfg.lr_t)?;
            let worst = largest_magnitude(&self.map.params());
            if !worst.is_finite() || worst > PARAM_BLOWUP {
                return Err(self.diverged(self.theta_steps as usize, worst));
            }
            self.theta_steps += 1;
        }
        Ok(())
    }

    /// One Adam ascent step on the potential with the map frozen; returns
    /// minibatch estimates of the dual objective.
    pub fn phi_step(&mut self) -> Result<DualStats, TrainError> {
        let si = sample_idx(
            self.seed,
            "pott/phi-src",
            self.outer as u64,
            self.src_k.shape()[0],
            self.cfg.batch,
        );
        let ti = sample_idx(
            self.seed,
            "pott/phi-tgt",
            self.outer as u64,
            self.tgt_k.shape()[0],
            self.cfg.batch,
        );
        let kb = gather_rows(&self.src_k, &si);
        let ub = gather_rows(&self.src_u, &si);
        let ktb = gather_rows(&self.tgt_k, &ti);
        let utb = gather_rows(&self.tgt_u, &ti);

        let (stats, grads) = {
            let tape = Tape::new();
            let tv = self.map.bind(&tape, false);
            let pv = self.potential.bind(&tape, true);
            let kc = tape.constant(kb.clone());
            let uc = tape.constant(ub.clone());
            let tk = tv.map_k(kc);
            let tu = tv.map_u(uc);
            let f_src = pv.eval(tk, tu).mean_all();
            let f_tgt = pv
                .eval(tape.constant(ktb), tape.constant(utb))
                .mean_all();
            // descent on f_src - f_tgt = ascent on the dual gap; the cost
            // term is constant in the potential and stays out of the graph
            let loss = f_src - f_tgt;
            let lv = loss.item();
            if !lv.is_finite() {
                return Err(self.diverged(self.outer, lv));
            }
            let tkv = tk.value();
            let tuv = tu.value();
            let cost = batch_cost(&kb, &ub, &tkv, &tuv) * self.cfg.cost_scale;
            let reg = self.reg_value(&tkv, &tuv);
            let objective = cost - f_src.item() + f_tgt.item() + self.cfg.lambda * reg;
            tape.backward(loss);
            (DualStats { objective, cost, reg }, pv.grads())
        };
        self.adam_f
            .step_with_lr(self.potential.params_mut(), &grads, self.cfg.lr_f)?;
        let worst = largest_magnitude(&self.potential.params());
        if !worst.is_finite() || worst > PARAM_BLOWUP {
            return Err(self.diverged(self.outer, worst));
        }
        self.outer += 1;
        self.trace.push(stats.objective);
        Ok(stats)
    }

    pub fn outer_iteration(&mut self) -> Result<DualStats, TrainError> {
        self.theta_phase()?;
        self.phi_step()
    }

    /// Full-split evaluation of the dual objective, gradient free.
    pub fn objective_estimate(&self) -> DualStats {
        let tk = self.map.push_k(&self.src_k);
        let tu = self.map.push_u(&self.src_u);
        let cost = batch_cost(&self.src_k, &self.src_u, &tk, &tu) * self.cfg.cost_scale;
        let f_src = mean(&self.potential.eval_rows(&tk, &tu));
        let f_tgt = mean(&self.potential.eval_rows(&self.tgt_k, &self.tgt_u));
        let reg = self.reg_value(&tk, &tu);
        DualStats {
            objective: cost - f_src + f_tgt + self.cfg.lambda * reg,
            cost,
            reg,
        }
    }
}

/// Run the full N11-iteration saddle loop and return the trained players
/// with the per-iteration objective trace.
pub fn dual_train(
    src: &Dataset,
    tgt: &Dataset,
    g_src: Option<&OperatorModel>,
    cfg: &PottConfig,
    seed: u64,
) -> Result<(TransportMap, DualPotential, Vec<DualStats>), TrainError> {
    let mut runner = DualRunner::new(src, tgt, g_src, *cfg, seed)?;
    let mut trace = Vec::with_capacity(cfg.n11);
    for _ in 0..cfg.n11 {
        trace.push(runner.outer_iteration()?);
    }
    let DualRunner { map, potential, .. } = runner;
    Ok((map, potential, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::grid::{GridFunction, SamplePair};
    use crate::pott::oracle::kantorovich_lp;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    /// 1-d point cloud as degenerate one-entry functions with k = u = x.
    fn cloud(xs: &[f64], split: &str) -> Dataset {
        let d = Domain::Interval { n: 1 };
        Dataset {
            pairs: xs
                .iter()
                .map(|&x| SamplePair {
                    k: GridFunction::from_vec(d, vec![x]),
                    u: GridFunction::from_vec(d, vec![x]),
                })
                .collect(),
            family: "toy".into(),
            domain_id: "cloud".into(),
            split: split.into(),
            seed: 0,
        }
    }

    fn gaussian_cloud(mu: f64, sigma: f64, n: usize, tag: &str) -> Vec<f64> {
        let normal = Normal::new(mu, sigma).unwrap();
        let mut rng = stream(1234, tag, 0);
        (0..n).map(|_| normal.sample(&mut rng)).collect()
    }

    fn tiny_cfg() -> PottConfig {
        PottConfig {
            lambda: 0.0,
            reg: RegKind::None,
            n11: 150,
            n12: 10,
            batch: 32,
            map: MapConfig { hidden: 16, depth: 1 },
            potential_hidden: 32,
            potential_depth: 1,
            ..PottConfig::default()
        }
    }

    #[test]
    fn identical_marginals_keep_the_cost_near_zero() {
        let xs = gaussian_cloud(0.0, 1.0, 128, "same");
        let src = cloud(&xs, "train");
        let tgt = cloud(&xs, "train");
        let (map, _, _) = dual_train(&src, &tgt, None, &tiny_cfg(), 5).unwrap();

        let sk = src.stack_k();
        let su = src.stack_u();
        let cost = batch_cost(&sk, &su, &map.push_k(&sk), &map.push_u(&su));
        // reference scale: cost of a shuffled pairing of the same cloud
        let mut perm: Vec<usize> = (0..xs.len()).collect();
        use rand::seq::SliceRandom;
        perm.shuffle(&mut stream(99, "pairing", 0));
        let shuffled = Tensor::from_fn(&[xs.len(), 1], |i| xs[perm[i]]);
        let random_cost = batch_cost(&sk, &su, &shuffled, &shuffled);
        assert!(
            cost < 0.05 * random_cost,
            "transport cost {} vs random pairing {}",
            cost,
            random_cost
        );
    }

    #[test]
    fn gaussian_shift_recovers_the_affine_monge_map() {
        // clouds large enough that empirical tail quantiles sit close to the
        // population ones; the reference map is the population optimum
        let src = cloud(&gaussian_cloud(0.0, 1.0, 2048, "src"), "train");
        let tgt = cloud(&gaussian_cloud(2.0, 0.5, 2048, "tgt"), "train");
        // the potential ascends once per outer iteration, so recovering a
        // displacement of ~2 needs a long outer loop and a faster witness
        let cfg = PottConfig {
            n11: 1500,
            batch: 128,
            lr_t: 2e-3,
            lr_f: 3e-3,
            ..tiny_cfg()
        };
        let (map, _, _) = dual_train(&src, &tgt, None, &cfg, 11).unwrap();

        let (a, b) = crate::pott::oracle::gaussian_monge_oracle(0.0, 1.0, 2.0, 0.5);
        let grid: Vec<f64> = (0..41).map(|i| -2.0 + i as f64 * 0.1).collect();
        let mapped = map.push_k(&Tensor::from_fn(&[41, 1], |i| grid[i]));
        let mut worst = 0.0f64;
        for (i, &x) in grid.iter().enumerate() {
            let want = b + a * x;
            worst = worst.max((mapped.data()[i] - want).abs());
        }
        assert!(worst < 0.1, "max deviation {} from the affine optimal map", worst);
    }

    #[test]
    fn four_point_instance_reaches_the_lp_cost() {
        let src_pts = [0.0, 1.0, 2.0, 3.0];
        let tgt_pts = [0.5, 1.5, 2.5, 3.5];
        let src = cloud(&src_pts, "train");
        let tgt = cloud(&tgt_pts, "train");
        let cfg = PottConfig {
            n11: 400,
            batch: 4,
            ..tiny_cfg()
        };
        let (map, potential, trace) = dual_train(&src, &tgt, None, &cfg, 21).unwrap();

        // exact optimum from exhaustive assignment on the same pair cost
        let cost = Tensor::from_fn(&[4, 4], |i| {
            let d = src_pts[i / 4] - tgt_pts[i % 4];
            d * d // (dk^2 + du^2) / 2 with k = u = x
        });
        let (_, lp) = kantorovich_lp(&cost);
        assert!((lp - 0.25).abs() < 1e-12, "monotone matching moves every point by 0.5");

        // rebuild a runner around the trained players for full evaluation
        let mut runner = DualRunner::new(&src, &tgt, None, cfg, 21).unwrap();
        runner.map = map;
        runner.potential = potential;
        let final_objective = runner.objective_estimate().objective;
        assert!(
            (final_objective - lp).abs() < 0.05 * lp,
            "objective {} vs exact {}",
            final_objective,
            lp
        );

        // stationarity: one extra map phase barely moves the objective
        runner.theta_phase().unwrap();
        let after = runner.objective_estimate().objective;
        assert!(
            (after - final_objective).abs() < 0.01 * final_objective.abs().max(0.05),
            "objective moved {} -> {} after an extra map phase",
            final_objective,
            after
        );
        let _ = trace;
    }

    #[test]
    fn dual_values_respect_weak_duality_on_an_eight_point_instance() {
        let mut rng = stream(7, "wd-points", 0);
        let src_pts: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let tgt_pts: Vec<f64> = (0..8).map(|_| rng.gen_range(1.0..3.0)).collect();
        let src = cloud(&src_pts, "train");
        let tgt = cloud(&tgt_pts, "train");
        let cfg = PottConfig {
            n11: 300,
            batch: 8,
            ..tiny_cfg()
        };
        let (_, _, trace) = dual_train(&src, &tgt, None, &cfg, 31).unwrap();

        let cost = Tensor::from_fn(&[8, 8], |i| {
            let d = src_pts[i / 8] - tgt_pts[i % 8];
            d * d
        });
        let (_, lp) = kantorovich_lp(&cost);
        // after burn-in the map tracks the potential closely enough that the
        // dual estimate must stay below the primal optimum (1% slack)
        for row in &trace[trace.len() / 2..] {
            assert!(
                row.objective <= lp * 1.01 + 1e-3,
                "dual value {} exceeds the exact cost {}",
                row.objective,
                lp
            );
        }
    }

    #[test]
    fn same_seed_same_players() {
        let src = cloud(&[0.0, 0.5, 1.0, 1.5], "train");
        let tgt = cloud(&[0.2, 0.7, 1.2, 1.7], "train");
        let cfg = PottConfig {
            n11: 5,
            batch: 4,
            ..tiny_cfg()
        };
        let (m1, p1, t1) = dual_train(&src, &tgt, None, &cfg, 3).unwrap();
        let (m2, p2, t2) = dual_train(&src, &tgt, None, &cfg, 3).unwrap();
        for (a, b) in m1.params().into_iter().zip(m2.params()) {
            assert_eq!(a, b);
        }
        for (a, b) in p1.params().into_iter().zip(p2.params()) {
            assert_eq!(a, b);
        }
        assert_eq!(
            t1.iter().map(|s| s.objective).collect::<Vec<_>>(),
            t2.iter().map(|s| s.objective).collect::<Vec<_>>()
        );
    }

    #[test]
    fn conservation_penalty_is_wired_through_the_runner() {
        use crate::pde::datagen::{generate, Family, GenSpec, Subdomain};
        let spec = |sub, seed| GenSpec {
            equation: Family::Advection,
            subdomain: sub,
            n_train: Some(4),
            n_val: 0,
            n_test: 0,
            seed,
            custom: None,
        };
        let src = generate(&spec(Subdomain::D1, 401)).unwrap().train;
        let tgt = generate(&spec(Subdomain::D2, 402)).unwrap().train;
        let cfg = PottConfig {
            lambda: 2.5,
            reg: RegKind::Conservation,
            n11: 1,
            n12: 2,
            batch: 4,
            map: MapConfig { hidden: 8, depth: 1 },
            potential_hidden: 16,
            potential_depth: 1,
            ..PottConfig::default()
        };
        let mut runner = DualRunner::new(&src, &tgt, None, cfg, 51).unwrap();

        // identity-initialized map: zero cost, and the penalty must equal
        // the drift statistic of the raw source solutions
        let stats = runner.objective_estimate();
        assert_eq!(stats.cost, 0.0);
        let want = conservation_value(&src.stack_u(), &src.u_domain());
        assert!((stats.reg - want).abs() < 1e-14, "{} vs {}", stats.reg, want);

        let s = runner.outer_iteration().unwrap();
        assert!(s.objective.is_finite());
        assert!(s.reg >= 0.0);
    }

    #[test]
    fn generic_penalty_vanishes_on_operator_consistent_pairs() {
        use crate::model::{DeepOnet, DeepOnetHyper};
        let d = Domain::Interval { n: 1 };
        let hyper = DeepOnetHyper {
            k_domain: d,
            u_domain: d,
            hidden: 4,
            latent: 4,
            depth: 1,
        };
        let g = OperatorModel::DeepOnet(DeepOnet::init(hyper, &mut stream(3, "wiring-g", 0)));
        let xs = [0.1, -0.4, 0.7, 1.3];
        let k = Tensor::from_fn(&[4, 1], |i| xs[i]);
        let u = g.predict_rows(&k);
        let src = Dataset {
            pairs: (0..4)
                .map(|i| SamplePair {
                    k: GridFunction::from_vec(d, vec![k.data()[i]]),
                    u: GridFunction::from_vec(d, vec![u.data()[i]]),
                })
                .collect(),
            family: "toy".into(),
            domain_id: "cloud".into(),
            split: "train".into(),
            seed: 0,
        };
        let cfg = PottConfig {
            lambda: 1.0,
            reg: RegKind::Generic,
            n11: 1,
            n12: 1,
            batch: 4,
            map: MapConfig { hidden: 8, depth: 1 },
            potential_hidden: 16,
            potential_depth: 1,
            ..PottConfig::default()
        };
        let runner = DualRunner::new(&src, &src, Some(&g), cfg, 9).unwrap();
        let stats = runner.objective_estimate();
        // identity transport of pairs that already satisfy u = G(k)
        assert_eq!(stats.reg, 0.0);
        assert_eq!(stats.cost, 0.0);
    }

    #[test]
    fn bad_configurations_are_refused_up_front() {
        let src = cloud(&[0.0, 1.0, 2.0, 3.0], "train");
        let tgt = cloud(&[0.5, 1.5], "train");
        let base = tiny_cfg();

        let oversized = PottConfig { batch: 4, ..base };
        let err = match DualRunner::new(&src, &tgt, None, oversized, 0) {
            Err(e) => e,
            Ok(_) => panic!("oversized target batch was accepted"),
        };
        assert!(
            err.to_string().contains("target batch 4 larger than target split 2"),
            "{}",
            err
        );

        let negative = PottConfig { lambda: -1.0, ..base };
        assert!(matches!(
            DualRunner::new(&src, &src, None, negative, 0),
            Err(TrainError::Config(_))
        ));

        let no_inner = PottConfig { n12: 0, ..base };
        assert!(matches!(
            DualRunner::new(&src, &src, None, no_inner, 0),
            Err(TrainError::Config(_))
        ));

        let needs_g = PottConfig { reg: RegKind::Generic, lambda: 1.0, batch: 2, ..base };
        assert!(matches!(
            DualRunner::new(&src, &src, None, needs_g, 0),
            Err(TrainError::Config(_))
        ));

        let needs_spacetime = PottConfig { reg: RegKind::Conservation, lambda: 1.0, batch: 2, ..base };
        assert!(matches!(
            DualRunner::new(&src, &src, None, needs_spacetime, 0),
            Err(TrainError::Config(_))
        ));
    }
}
