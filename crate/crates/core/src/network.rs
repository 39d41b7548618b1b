//! Two-layer networks for the critic and the actor.
//!
//! Every network has five inputs (four normalized state variables plus a
//! bias input), a six-neuron sigmoid hidden layer and scalar outputs. The
//! critic output is linear; the actor output is a sigmoid whose slope is
//! eight times the hidden-layer slope and yields the probability of a CCW
//! push.
//!
//! Two arrangements are supported:
//!
//! * [`SeparateNetWeights`]: independent evaluation (`a`, `c`) and action
//!   (`d`, `f`) networks, trained with the sign-heuristic update of
//!   [`separate_net_gradients`].
//! * [`SharedNetWeights`]: one hidden layer feeding both a value and a
//!   policy output, trained with exact gradients from
//!   [`shared_net_gradients`].

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const INPUTS: usize = 5;
pub const HIDDEN: usize = 6;

/// Slope of the action output sigmoid relative to the hidden neurons.
pub const OUTPUT_SLOPE: f64 = 8.0;

/// Action probabilities are clamped to `[PROB_EPS, 1 − PROB_EPS]`.
pub const PROB_EPS: f64 = 1e-6;

/// Half-width of the uniform distribution used for fresh weights.
pub const INIT_WEIGHT_RANGE: f64 = 0.3;

pub type Input = [f64; INPUTS];
pub type HiddenMatrix = [[f64; INPUTS]; HIDDEN];
pub type HiddenVector = [f64; HIDDEN];

pub fn sigmoid(u: f64, slope: f64) -> f64 {
    1.0 / (1.0 + (-slope * u).exp())
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

fn hidden_layer(w: &HiddenMatrix, x: &Input) -> HiddenVector {
    std::array::from_fn(|i| sigmoid(dot(&w[i], x), 1.0))
}

fn dot<const N: usize>(a: &[f64; N], b: &[f64; N]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

fn sgn(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn random_matrix<R: Rng + ?Sized>(rng: &mut R) -> HiddenMatrix {
    std::array::from_fn(|_| std::array::from_fn(|_| rng.random_range(-INIT_WEIGHT_RANGE..=INIT_WEIGHT_RANGE)))
}

fn random_vector<R: Rng + ?Sized>(rng: &mut R) -> HiddenVector {
    std::array::from_fn(|_| rng.random_range(-INIT_WEIGHT_RANGE..=INIT_WEIGHT_RANGE))
}

/// Shape of one weight block as stored in checkpoints and crossbars.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block {
    pub name: &'static str,
    pub rows: usize,
    pub cols: usize,
}

impl Block {
    pub const fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A weight set with a fixed block layout, flattened row-major.
pub trait WeightLayout: Sized + Clone {
    const TOPOLOGY: &'static str;
    const BLOCKS: &'static [Block];

    fn to_flat(&self) -> Vec<f64>;
    fn from_flat_unchecked(values: &[f64]) -> Self;

    fn len() -> usize {
        Self::BLOCKS.iter().map(Block::len).sum()
    }

    fn from_flat(values: &[f64]) -> Result<Self> {
        if values.len() != Self::len() {
            return Err(Error::Shape {
                expected: (Self::len(), 1),
                got: (values.len(), 1),
            });
        }
        Ok(Self::from_flat_unchecked(values))
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        let a = self.to_flat();
        let b = other.to_flat();
        let v: Vec<f64> = a.iter().zip(&b).map(|(x, y)| f(*x, *y)).collect();
        Self::from_flat_unchecked(&v)
    }

    fn add(&self, other: &Self) -> Self {
        self.zip_with(other, |x, y| x + y)
    }

    fn scale(&self, k: f64) -> Self {
        self.zip_with(self, |x, _| k * x)
    }

    fn max_abs(&self) -> f64 {
        self.to_flat().iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn push_matrix(out: &mut Vec<f64>, m: &HiddenMatrix) {
    for row in m {
        out.extend_from_slice(row);
    }
}

fn take_matrix(values: &[f64], offset: &mut usize) -> HiddenMatrix {
    let m = std::array::from_fn(|i| std::array::from_fn(|j| values[*offset + i * INPUTS + j]));
    *offset += HIDDEN * INPUTS;
    m
}

fn take_vector(values: &[f64], offset: &mut usize) -> HiddenVector {
    let v = std::array::from_fn(|i| values[*offset + i]);
    *offset += HIDDEN;
    v
}

/// Weights of the separate evaluation and action networks.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SeparateNetWeights {
    /// Evaluation net, input to hidden.
    pub a: HiddenMatrix,
    /// Evaluation net, hidden to output.
    pub c: HiddenVector,
    /// Action net, input to hidden.
    pub d: HiddenMatrix,
    /// Action net, hidden to output.
    pub f: HiddenVector,
}

impl SeparateNetWeights {
    pub fn zeros() -> Self {
        Self::default()
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            a: random_matrix(rng),
            c: random_vector(rng),
            d: random_matrix(rng),
            f: random_vector(rng),
        }
    }
}

impl WeightLayout for SeparateNetWeights {
    const TOPOLOGY: &'static str = "separate";
    const BLOCKS: &'static [Block] = &[
        Block {
            name: "a",
            rows: HIDDEN,
            cols: INPUTS,
        },
        Block {
            name: "c",
            rows: 1,
            cols: HIDDEN,
        },
        Block {
            name: "d",
            rows: HIDDEN,
            cols: INPUTS,
        },
        Block {
            name: "f",
            rows: 1,
            cols: HIDDEN,
        },
    ];

    fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(Self::len());
        push_matrix(&mut out, &self.a);
        out.extend_from_slice(&self.c);
        push_matrix(&mut out, &self.d);
        out.extend_from_slice(&self.f);
        out
    }

    fn from_flat_unchecked(values: &[f64]) -> Self {
        let mut o = 0;
        let a = take_matrix(values, &mut o);
        let c = take_vector(values, &mut o);
        let d = take_matrix(values, &mut o);
        let f = take_vector(values, &mut o);
        Self { a, c, d, f }
    }
}

/// Weights of the network shared by actor and critic.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SharedNetWeights {
    /// Input to hidden; belongs to both the value and the policy parameters.
    pub w_in: HiddenMatrix,
    /// Hidden to value output.
    pub w_v: HiddenVector,
    /// Hidden to policy output.
    pub w_p: HiddenVector,
}

impl SharedNetWeights {
    pub fn zeros() -> Self {
        Self::default()
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            w_in: random_matrix(rng),
            w_v: random_vector(rng),
            w_p: random_vector(rng),
        }
    }
}

impl WeightLayout for SharedNetWeights {
    const TOPOLOGY: &'static str = "shared";
    const BLOCKS: &'static [Block] = &[
        Block {
            name: "w_in",
            rows: HIDDEN,
            cols: INPUTS,
        },
        Block {
            name: "w_v",
            rows: 1,
            cols: HIDDEN,
        },
        Block {
            name: "w_p",
            rows: 1,
            cols: HIDDEN,
        },
    ];

    fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(Self::len());
        push_matrix(&mut out, &self.w_in);
        out.extend_from_slice(&self.w_v);
        out.extend_from_slice(&self.w_p);
        out
    }

    fn from_flat_unchecked(values: &[f64]) -> Self {
        let mut o = 0;
        let w_in = take_matrix(values, &mut o);
        let w_v = take_vector(values, &mut o);
        let w_p = take_vector(values, &mut o);
        Self { w_in, w_v, w_p }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalTrace {
    pub x: Input,
    pub hidden: HiddenVector,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionTrace {
    pub x: Input,
    pub hidden: HiddenVector,
    /// Probability of a CCW push.
    pub prob: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SharedTrace {
    pub x: Input,
    pub hidden: HiddenVector,
    pub value: f64,
    pub prob: f64,
}

pub fn eval_forward(w: &SeparateNetWeights, x: &Input) -> EvalTrace {
    let hidden = hidden_layer(&w.a, x);
    EvalTrace {
        x: *x,
        hidden,
        value: dot(&w.c, &hidden),
    }
}

pub fn action_forward(w: &SeparateNetWeights, x: &Input) -> ActionTrace {
    let hidden = hidden_layer(&w.d, x);
    ActionTrace {
        x: *x,
        hidden,
        prob: clamp_prob(sigmoid(dot(&w.f, &hidden), OUTPUT_SLOPE)),
    }
}

pub fn shared_forward(w: &SharedNetWeights, x: &Input) -> SharedTrace {
    let hidden = hidden_layer(&w.w_in, x);
    SharedTrace {
        x: *x,
        hidden,
        value: dot(&w.w_v, &hidden),
        prob: clamp_prob(sigmoid(dot(&w.w_p, &hidden), OUTPUT_SLOPE)),
    }
}

/// One-step temporal-difference error. A terminal transition does not
/// bootstrap from the next state.
pub fn td_error(reward: i32, v_next: f64, v: f64, gamma: f64, terminal: bool) -> f64 {
    if terminal {
        reward as f64 - v
    } else {
        reward as f64 + gamma * v_next - v
    }
}

/// Per-layer learning rates of the separate networks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearningRates {
    /// Evaluation net, output layer.
    pub beta: f64,
    /// Evaluation net, hidden layer.
    pub beta_h: f64,
    /// Action net, output layer.
    pub rho: f64,
    /// Action net, hidden layer.
    pub rho_h: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        Self {
            beta: 0.2,
            beta_h: 0.1,
            rho: 0.25,
            rho_h: 0.2,
        }
    }
}

impl LearningRates {
    pub fn validate(&self) -> Result<()> {
        if [self.beta, self.beta_h, self.rho, self.rho_h]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0)
        {
            Ok(())
        } else {
            Err(Error::config("learning rates must be positive"))
        }
    }
}

/// Weight changes for the separate networks. The evaluation-net hidden
/// layer and the action-net hidden layer use `sgn` of the downstream output
/// weight in place of the weight itself; this is not the exact gradient.
///
/// `q` is the action taken (1 for CCW) and `eval.hidden`, `action.hidden`,
/// `action.prob` come from the forward passes at the state the action was
/// taken in.
pub fn separate_net_gradients(
    w: &SeparateNetWeights,
    eval: &EvalTrace,
    action: &ActionTrace,
    delta: f64,
    q: f64,
    rates: &LearningRates,
) -> SeparateNetWeights {
    let mut out = SeparateNetWeights::zeros();
    let surprise = q - action.prob;
    for i in 0..HIDDEN {
        let y = eval.hidden[i];
        let z = action.hidden[i];
        out.c[i] = rates.beta * delta * y;
        out.f[i] = rates.rho * delta * surprise * z;
        let hidden_a = rates.beta_h * delta * y * (1.0 - y) * sgn(w.c[i]);
        let hidden_d = rates.rho_h * delta * surprise * z * (1.0 - z) * sgn(w.f[i]);
        for j in 0..INPUTS {
            out.a[i][j] = hidden_a * eval.x[j];
            out.d[i][j] = hidden_d * action.x[j];
        }
    }
    out
}

/// Gradient of `V(s)` with respect to all shared-net weights.
pub fn value_gradient(w: &SharedNetWeights, trace: &SharedTrace) -> SharedNetWeights {
    let mut g = SharedNetWeights::zeros();
    for i in 0..HIDDEN {
        let h = trace.hidden[i];
        g.w_v[i] = h;
        let back = w.w_v[i] * h * (1.0 - h);
        for j in 0..INPUTS {
            g.w_in[i][j] = back * trace.x[j];
        }
    }
    g
}

/// Gradient of `log π(q | s)` with respect to all shared-net weights.
pub fn log_policy_gradient(w: &SharedNetWeights, trace: &SharedTrace, q: f64) -> SharedNetWeights {
    let mut g = SharedNetWeights::zeros();
    let dlogit = OUTPUT_SLOPE * (q - trace.prob);
    for i in 0..HIDDEN {
        let h = trace.hidden[i];
        g.w_p[i] = dlogit * h;
        let back = dlogit * w.w_p[i] * h * (1.0 - h);
        for j in 0..INPUTS {
            g.w_in[i][j] = back * trace.x[j];
        }
    }
    g
}

/// Importance-weighted actor-critic gradients `(dθ_v, dθ_p)`.
pub fn shared_net_gradients(
    w: &SharedNetWeights,
    trace: &SharedTrace,
    delta: f64,
    q: f64,
    importance: f64,
) -> (SharedNetWeights, SharedNetWeights) {
    let k = importance * delta;
    (
        value_gradient(w, trace).scale(k),
        log_policy_gradient(w, trace, q).scale(k),
    )
}

/// Learning rates of the shared network, per output and layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SharedRates {
    pub value_output: f64,
    pub value_hidden: f64,
    pub policy_output: f64,
    pub policy_hidden: f64,
}

impl Default for SharedRates {
    fn default() -> Self {
        Self {
            value_output: 0.25,
            value_hidden: 0.2,
            policy_output: 0.2,
            policy_hidden: 0.1,
        }
    }
}

impl SharedRates {
    /// Combines value and policy gradients into one weight change. The
    /// shared hidden layer receives both contributions.
    pub fn apply(&self, d_value: &SharedNetWeights, d_policy: &SharedNetWeights) -> SharedNetWeights {
        let mut out = SharedNetWeights::zeros();
        for i in 0..HIDDEN {
            out.w_v[i] = self.value_output * d_value.w_v[i];
            out.w_p[i] = self.policy_output * d_policy.w_p[i];
            for j in 0..INPUTS {
                out.w_in[i][j] = self.value_hidden * d_value.w_in[i][j] + self.policy_hidden * d_policy.w_in[i][j];
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const BIAS: Input = [0.0, 0.0, 0.0, 0.0, 1.0];

    #[test]
    fn sigmoid_examples() {
        assert_eq!(sigmoid(0.0, 1.0), 0.5);
        let expected = 1.0 / (1.0 + (-2.0f64).exp());
        assert!((sigmoid(0.25, 8.0) - expected).abs() < 1e-15);
        assert!((sigmoid(0.25, 8.0) - 0.8808).abs() < 1e-4);
        for (u, s) in [(0.3, 1.0), (-2.0, 8.0), (5.0, 0.5)] {
            assert!((sigmoid(-u, s) - (1.0 - sigmoid(u, s))).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_weights_forward() {
        let w = SeparateNetWeights::zeros();
        let e = eval_forward(&w, &[0.3, -0.1, 0.5, 0.2, 1.0]);
        assert!(e.hidden.iter().all(|&y| y == 0.5));
        assert_eq!(e.value, 0.0);
        assert_eq!(action_forward(&w, &BIAS).prob, 0.5);
        let s = shared_forward(&SharedNetWeights::zeros(), &BIAS);
        assert_eq!((s.value, s.prob), (0.0, 0.5));
    }

    #[test]
    fn single_output_weight_reads_one_hidden_unit() {
        let mut w = SeparateNetWeights::zeros();
        w.c[0] = 1.0;
        assert_eq!(eval_forward(&w, &[1.0, 2.0, 3.0, 4.0, 1.0]).value, 0.5);
    }

    #[test]
    fn probability_is_clamped() {
        let mut w = SeparateNetWeights::zeros();
        w.f = [1e3; HIDDEN];
        assert_eq!(action_forward(&w, &BIAS).prob, 1.0 - PROB_EPS);
        w.f = [-1e3; HIDDEN];
        assert_eq!(action_forward(&w, &BIAS).prob, PROB_EPS);
    }

    #[test]
    fn negating_output_weights_flips_probability() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = SeparateNetWeights::random(&mut rng);
        let mut neg = w.clone();
        neg.f = w.f.map(|v| -v);
        let x = [0.2, -0.4, 0.1, 0.3, 1.0];
        let p = action_forward(&w, &x).prob;
        let p_neg = action_forward(&neg, &x).prob;
        assert!((p + p_neg - 1.0).abs() < 1e-12);
    }

    #[test]
    fn equal_heads_share_logit() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut w = SharedNetWeights::random(&mut rng);
        w.w_p = w.w_v;
        let t = shared_forward(&w, &[0.1, 0.2, -0.3, 0.4, 1.0]);
        let logit = (t.prob / (1.0 - t.prob)).ln() / OUTPUT_SLOPE;
        assert!((logit - t.value).abs() < 1e-9);
    }

    #[test]
    fn td_error_examples() {
        assert!((td_error(0, 1.0, 1.0, 0.9, false) - (-0.1)).abs() < 1e-12);
        assert_eq!(td_error(-1, 123.0, 0.0, 0.9, true), -1.0);
        assert_eq!(td_error(0, 5.0, 0.7, 0.0, false), -0.7);
    }

    #[test]
    fn zero_delta_gives_zero_update() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = SeparateNetWeights::random(&mut rng);
        let x = [0.1, 0.2, 0.3, 0.4, 1.0];
        let d = separate_net_gradients(
            &w,
            &eval_forward(&w, &x),
            &action_forward(&w, &x),
            0.0,
            1.0,
            &LearningRates::default(),
        );
        assert_eq!(d.max_abs(), 0.0);
    }

    #[test]
    fn output_update_arithmetic() {
        // Zero action-net weights give z_i = 0.5 and p = 0.5.
        let mut w = SeparateNetWeights::zeros();
        w.f = [0.0; HIDDEN];
        let e = eval_forward(&w, &BIAS);
        let a = action_forward(&w, &BIAS);
        let d = separate_net_gradients(&w, &e, &a, 1.0, 1.0, &LearningRates::default());
        for i in 0..HIDDEN {
            assert!((d.f[i] - 0.0625).abs() < 1e-15);
        }
    }

    #[test]
    fn flipping_output_sign_flips_hidden_row() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = SeparateNetWeights::random(&mut rng);
        let mut flipped = w.clone();
        flipped.c[2] = -w.c[2];
        let x = [0.5, -0.2, 0.3, 0.1, 1.0];
        let rates = LearningRates::default();
        let e = eval_forward(&w, &x);
        let a = action_forward(&w, &x);
        let d1 = separate_net_gradients(&w, &e, &a, 0.7, 0.0, &rates);
        let d2 = separate_net_gradients(&flipped, &e, &a, 0.7, 0.0, &rates);
        for j in 0..INPUTS {
            assert_eq!(d1.a[2][j], -d2.a[2][j]);
            assert_eq!(d1.a[1][j], d2.a[1][j]);
        }
    }

    #[test]
    fn zero_importance_gives_zero_update() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = SharedNetWeights::random(&mut rng);
        let t = shared_forward(&w, &[0.1, 0.2, 0.3, 0.4, 1.0]);
        let (dv, dp) = shared_net_gradients(&w, &t, 0.8, 1.0, 0.0);
        assert_eq!(dv.max_abs(), 0.0);
        assert_eq!(dp.max_abs(), 0.0);
    }

    #[test]
    fn value_output_gradient_is_hidden_activation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w = SharedNetWeights::random(&mut rng);
        let t = shared_forward(&w, &[0.1, -0.2, 0.3, 0.4, 1.0]);
        let (dv, _) = shared_net_gradients(&w, &t, 1.0, 0.0, 1.0);
        assert_eq!(dv.w_v, t.hidden);
    }

    #[test]
    fn flat_layout_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let w = SeparateNetWeights::random(&mut rng);
        assert_eq!(SeparateNetWeights::from_flat(&w.to_flat()).unwrap(), w);
        assert_eq!(SeparateNetWeights::len(), 72);
        assert_eq!(SharedNetWeights::len(), 42);
        assert!(SharedNetWeights::from_flat(&[0.0; 3]).is_err());
    }

    #[test]
    fn rate_application_sums_both_paths_into_hidden_layer() {
        let mut dv = SharedNetWeights::zeros();
        let mut dp = SharedNetWeights::zeros();
        dv.w_in[0][0] = 1.0;
        dp.w_in[0][0] = 1.0;
        dv.w_v[1] = 1.0;
        dp.w_p[1] = 1.0;
        let u = SharedRates::default().apply(&dv, &dp);
        assert!((u.w_in[0][0] - 0.3).abs() < 1e-15);
        assert_eq!(u.w_v[1], 0.25);
        assert_eq!(u.w_p[1], 0.2);
    }
}
