//! Rotary inverted (Furuta) pendulum.
//!
//! The arm rotates in the horizontal plane about a vertical shaft; the
//! pendulum hangs off the arm tip and swings in the plane perpendicular to
//! the arm. Both links are modeled as uniform rods. With `θ` the arm angle
//! (CCW positive) and `α` the pendulum angle (zero upright, positive when
//! the pendulum leans toward the arm's CCW direction of travel) the
//! Euler-Lagrange equations are
//!
//! ```text
//! (J_r + m_p L_r² + J_p sin²α) θ̈ + m_p l L_r cos α · α̈
//!     = τ − D_r θ̇ − 2 J_p sin α cos α · α̇ θ̇ + m_p l L_r sin α · α̇²
//! m_p l L_r cos α · θ̈ + J_p α̈
//!     = −D_p α̇ + J_p sin α cos α · θ̇² + m_p g l sin α
//! ```
//!
//! where `l = L_p / 2`, `J_p = m_p L_p² / 3` and `J_r = m_r L_r² / 3` are
//! taken about the respective pivots. A push applies a constant torque of
//! `±push_torque` to the arm for one control step of `dt` seconds, and the
//! equations are integrated with classical fourth-order Runge-Kutta.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Half-width of the upright region, in radians.
pub const UPRIGHT_LIMIT: f64 = 10.0 * std::f64::consts::PI / 180.0;

/// Trials end successfully after this many control steps.
pub const MAX_TRIAL_STEPS: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PendulumState {
    pub theta: f64,
    pub theta_dot: f64,
    pub alpha: f64,
    pub alpha_dot: f64,
}

impl PendulumState {
    pub const fn new(theta: f64, theta_dot: f64, alpha: f64, alpha_dot: f64) -> Self {
        Self {
            theta,
            theta_dot,
            alpha,
            alpha_dot,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.theta.is_finite() && self.theta_dot.is_finite() && self.alpha.is_finite() && self.alpha_dot.is_finite()
    }

    /// Pendulum angle wrapped into `(−π, π]`.
    pub fn wrapped_alpha(&self) -> f64 {
        wrap_angle(self.alpha)
    }

    pub fn mirrored(&self) -> Self {
        Self::new(-self.theta, -self.theta_dot, -self.alpha, -self.alpha_dot)
    }

    fn to_array(self) -> [f64; 4] {
        [self.theta, self.theta_dot, self.alpha, self.alpha_dot]
    }

    fn from_array(v: [f64; 4]) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

/// Wraps an angle into `(−π, π]`.
pub fn wrap_angle(angle: f64) -> f64 {
    use std::f64::consts::PI;
    if angle > -PI && angle <= PI {
        return angle;
    }
    let mut wrapped = angle.rem_euclid(2.0 * PI);
    if wrapped > PI {
        wrapped -= 2.0 * PI;
    }
    wrapped
}

/// Binary push direction. There is no "no push" action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Cw = 0,
    Ccw = 1,
}

impl Action {
    pub fn from_bit(bit: bool) -> Self {
        if bit {
            Action::Ccw
        } else {
            Action::Cw
        }
    }

    /// The action as the target `q ∈ {0, 1}` used by the policy update.
    pub fn q(self) -> f64 {
        match self {
            Action::Cw => 0.0,
            Action::Ccw => 1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Action::Cw => Action::Ccw,
            Action::Ccw => Action::Cw,
        }
    }

    /// Sign of the arm torque this action applies.
    pub fn torque_sign(self) -> f64 {
        match self {
            Action::Cw => -1.0,
            Action::Ccw => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PendulumConfig {
    pub pendulum_mass: f64,
    pub pendulum_length: f64,
    pub arm_mass: f64,
    pub arm_length: f64,
    pub gravity: f64,
    pub arm_viscous_damping: f64,
    pub pendulum_viscous_damping: f64,
    pub push_torque: f64,
    pub dt: f64,
}

impl Default for PendulumConfig {
    fn default() -> Self {
        Self {
            pendulum_mass: 0.127,
            pendulum_length: 0.3365,
            arm_mass: 0.257,
            arm_length: 0.216,
            gravity: 9.81,
            arm_viscous_damping: 0.0024,
            pendulum_viscous_damping: 0.0024,
            push_torque: 0.08,
            dt: 0.02,
        }
    }
}

impl PendulumConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("pendulum_mass", self.pendulum_mass),
            ("pendulum_length", self.pendulum_length),
            ("arm_mass", self.arm_mass),
            ("arm_length", self.arm_length),
            ("gravity", self.gravity),
            ("push_torque", self.push_torque),
            ("dt", self.dt),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::config(format!("pendulum.{name} must be positive, got {value}")));
            }
        }
        for (name, value) in [
            ("arm_viscous_damping", self.arm_viscous_damping),
            ("pendulum_viscous_damping", self.pendulum_viscous_damping),
        ] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(Error::config(format!(
                    "pendulum.{name} must be non-negative, got {value}"
                )));
            }
        }
        Ok(())
    }

    /// The same rig with pendulum mass and length scaled by the given
    /// percentages (e.g. `-5.0` for five percent lighter).
    pub fn with_variation(&self, mass_pct: f64, length_pct: f64) -> Self {
        Self {
            pendulum_mass: self.pendulum_mass * (1.0 + mass_pct / 100.0),
            pendulum_length: self.pendulum_length * (1.0 + length_pct / 100.0),
            ..self.clone()
        }
    }

    fn params(&self) -> Params {
        let mp = self.pendulum_mass;
        let l = 0.5 * self.pendulum_length;
        let lr = self.arm_length;
        Params {
            jp: mp * self.pendulum_length * self.pendulum_length / 3.0,
            jr_total: self.arm_mass * lr * lr / 3.0 + mp * lr * lr,
            coupling: mp * l * lr,
            gravity_moment: mp * self.gravity * l,
            dr: self.arm_viscous_damping,
            dp: self.pendulum_viscous_damping,
        }
    }
}

struct Params {
    jp: f64,
    jr_total: f64,
    coupling: f64,
    gravity_moment: f64,
    dr: f64,
    dp: f64,
}

impl Params {
    fn derivatives(&self, s: [f64; 4], torque: f64) -> [f64; 4] {
        let [_, theta_dot, alpha, alpha_dot] = s;
        let (sa, ca) = alpha.sin_cos();
        let m11 = self.jr_total + self.jp * sa * sa;
        let m12 = self.coupling * ca;
        let m22 = self.jp;
        let rhs1 = torque - self.dr * theta_dot - 2.0 * self.jp * sa * ca * alpha_dot * theta_dot
            + self.coupling * sa * alpha_dot * alpha_dot;
        let rhs2 = -self.dp * alpha_dot + self.jp * sa * ca * theta_dot * theta_dot + self.gravity_moment * sa;
        let det = m11 * m22 - m12 * m12;
        let theta_ddot = (m22 * rhs1 - m12 * rhs2) / det;
        let alpha_ddot = (m11 * rhs2 - m12 * rhs1) / det;
        [theta_dot, theta_ddot, alpha_dot, alpha_ddot]
    }
}

fn axpy(s: [f64; 4], k: [f64; 4], h: f64) -> [f64; 4] {
    [s[0] + h * k[0], s[1] + h * k[1], s[2] + h * k[2], s[3] + h * k[3]]
}

/// Integrates `duration` seconds under constant `torque` using `substeps`
/// RK4 steps.
pub fn integrate(
    state: PendulumState,
    torque: f64,
    config: &PendulumConfig,
    duration: f64,
    substeps: usize,
) -> PendulumState {
    let p = config.params();
    let h = duration / substeps as f64;
    let mut s = state.to_array();
    for _ in 0..substeps {
        let k1 = p.derivatives(s, torque);
        let k2 = p.derivatives(axpy(s, k1, 0.5 * h), torque);
        let k3 = p.derivatives(axpy(s, k2, 0.5 * h), torque);
        let k4 = p.derivatives(axpy(s, k3, h), torque);
        for i in 0..4 {
            s[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    PendulumState::from_array(s)
}

/// Kinetic plus potential energy, with zero potential at the pivot height.
pub fn mechanical_energy(state: &PendulumState, config: &PendulumConfig) -> f64 {
    let p = config.params();
    let (sa, ca) = state.alpha.sin_cos();
    let kinetic = 0.5
        * ((p.jr_total + p.jp * sa * sa) * state.theta_dot * state.theta_dot
            + 2.0 * p.coupling * ca * state.theta_dot * state.alpha_dot
            + p.jp * state.alpha_dot * state.alpha_dot);
    kinetic + p.gravity_moment * ca
}

/// Reward of a state: `0` inside the upright region, `−1` outside.
pub fn reward(state: &PendulumState) -> i32 {
    if state.wrapped_alpha().abs() < UPRIGHT_LIMIT {
        0
    } else {
        -1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub state: PendulumState,
    pub reward: i32,
    pub failed: bool,
}

/// Advances the pendulum by one control step under a push.
pub fn step(state: PendulumState, action: Action, config: &PendulumConfig) -> Result<StepOutcome> {
    let torque = action.torque_sign() * config.push_torque;
    let next = integrate(state, torque, config, config.dt, 1);
    if !next.is_finite() {
        return Err(Error::Diverged { step: 0 });
    }
    let r = reward(&next);
    Ok(StepOutcome {
        state: next,
        reward: r,
        failed: r == -1,
    })
}

/// Per-field maxima used to scale network inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NormalizationBounds {
    pub theta_max: f64,
    pub theta_dot_max: f64,
    pub alpha_max: f64,
    pub alpha_dot_max: f64,
}

impl Default for NormalizationBounds {
    fn default() -> Self {
        use std::f64::consts::PI;
        Self {
            theta_max: PI,
            theta_dot_max: 4.0,
            alpha_max: UPRIGHT_LIMIT,
            alpha_dot_max: 4.0,
        }
    }
}

impl NormalizationBounds {
    pub fn validate(&self) -> Result<()> {
        for v in [self.theta_max, self.theta_dot_max, self.alpha_max, self.alpha_dot_max] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config("normalization bounds must be positive"));
            }
        }
        Ok(())
    }
}

/// Network input: the four state variables scaled by their maxima, followed
/// by a constant bias input of 1.
pub fn normalize_state(state: &PendulumState, bounds: &NormalizationBounds) -> [f64; 5] {
    [
        state.theta / bounds.theta_max,
        state.theta_dot / bounds.theta_dot_max,
        state.alpha / bounds.alpha_max,
        state.alpha_dot / bounds.alpha_dot_max,
        1.0,
    ]
}

/// Half-widths of the uniform box initial states are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialStateRanges {
    pub theta: f64,
    pub theta_dot: f64,
    pub alpha: f64,
    pub alpha_dot: f64,
}

impl Default for InitialStateRanges {
    fn default() -> Self {
        Self {
            theta: 0.5,
            theta_dot: 0.5,
            alpha: 0.1,
            alpha_dot: 1.2,
        }
    }
}

impl InitialStateRanges {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < UPRIGHT_LIMIT) {
            return Err(Error::config(
                "initial alpha range must lie strictly inside the upright region",
            ));
        }
        for v in [self.theta, self.theta_dot, self.alpha_dot] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config("initial state ranges must be non-negative"));
            }
        }
        Ok(())
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> PendulumState {
        let mut draw = |half: f64| {
            if half > 0.0 {
                rng.random_range(-half..half)
            } else {
                0.0
            }
        };
        PendulumState::new(
            draw(self.theta),
            draw(self.theta_dot),
            draw(self.alpha),
            draw(self.alpha_dot),
        )
    }
}

/// A fixed set of initial states, each inside the upright region.
#[derive(Debug, Clone, PartialEq)]
pub struct StatePool {
    states: Vec<PendulumState>,
}

impl StatePool {
    pub fn new(states: Vec<PendulumState>) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::config("initial state pool is empty"));
        }
        if let Some(bad) = states.iter().find(|s| reward(s) != 0 || !s.is_finite()) {
            return Err(Error::config(format!(
                "initial state {bad:?} lies outside the upright region"
            )));
        }
        Ok(Self { states })
    }

    pub fn generate<R: Rng + ?Sized>(rng: &mut R, size: usize, ranges: &InitialStateRanges) -> Result<Self> {
        ranges.validate()?;
        Self::new((0..size).map(|_| ranges.sample(rng)).collect())
    }

    /// Uniform draw with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> PendulumState {
        self.states[rng.random_range(0..self.states.len())]
    }

    pub fn states(&self) -> &[PendulumState] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// The first `n` states (or all of them when `n` exceeds the pool).
    pub fn truncated(&self, n: usize) -> Self {
        Self {
            states: self.states[..n.min(self.states.len())].to_vec(),
        }
    }

    /// Little-endian dump of all state fields, for byte-level comparisons.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.states
            .iter()
            .flat_map(|s| s.to_array())
            .flat_map(f64::to_le_bytes)
            .collect()
    }
}

/// Pools used for pre-training, re-training and testing.
#[derive(Debug, Clone)]
pub struct PoolSet {
    pub pretrain: StatePool,
    pub retrain: StatePool,
    pub test: StatePool,
}

pub const PRETRAIN_POOL_SIZE: usize = 7000;
pub const RETRAIN_POOL_SIZE: usize = 2000;
pub const TEST_POOL_SIZE: usize = 500;

impl PoolSet {
    pub fn generate(master_seed: u64, ranges: &InitialStateRanges) -> Result<Self> {
        let pool = |tag: &str, size| {
            let mut rng = crate::seed::rng(master_seed, tag, 0);
            StatePool::generate(&mut rng, size, ranges)
        };
        Ok(Self {
            pretrain: pool("pool.pretrain", PRETRAIN_POOL_SIZE)?,
            retrain: pool("pool.retrain", RETRAIN_POOL_SIZE)?,
            test: pool("pool.test", TEST_POOL_SIZE)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn frictionless(config: &PendulumConfig) -> PendulumConfig {
        PendulumConfig {
            arm_viscous_damping: 0.0,
            pendulum_viscous_damping: 0.0,
            ..config.clone()
        }
    }

    #[test]
    fn equilibrium_without_torque() {
        let s = PendulumState::default();
        let out = integrate(s, 0.0, &PendulumConfig::default(), 0.02, 1);
        assert_eq!(out, PendulumState::default());
    }

    #[test]
    fn push_moves_upright_pendulum() {
        let out = step(PendulumState::default(), Action::Ccw, &PendulumConfig::default()).unwrap();
        assert!(out.state.theta_dot > 0.0);
        assert!(out.state.alpha != 0.0);
    }

    #[test]
    fn reward_region_examples() {
        let at = |alpha| reward(&PendulumState::new(0.0, 0.0, alpha, 0.0));
        assert_eq!(at(0.0), 0);
        assert_eq!(at(0.05), 0);
        assert_eq!(at(-0.05), 0);
        assert_eq!(at(0.25), -1);
        assert_eq!(at(UPRIGHT_LIMIT), -1);
        assert_eq!(at(-UPRIGHT_LIMIT), -1);
        assert_eq!(at(PI), -1);
        assert_eq!(at(2.0 * PI + 0.05), 0);
    }

    #[test]
    fn reward_grid_matches_wrapped_region() {
        for i in -2000..=2000 {
            let alpha = i as f64 * 0.01;
            let inside = wrap_angle(alpha).abs() < UPRIGHT_LIMIT;
            let r = reward(&PendulumState::new(0.0, 0.0, alpha, 0.0));
            assert_eq!(r == 0, inside, "alpha = {alpha}");
        }
    }

    #[test]
    fn step_reports_failure_from_new_state() {
        let config = PendulumConfig::default();
        let s = PendulumState::new(0.0, 0.0, 0.17, 2.0);
        let out = step(s, Action::Ccw, &config).unwrap();
        assert_eq!(out.failed, out.reward == -1);
        assert!(out.failed);
    }

    #[test]
    fn free_pendulum_falls() {
        let config = frictionless(&PendulumConfig::default());
        let mut s = PendulumState::new(0.0, 0.0, 5f64.to_radians(), 0.0);
        let mut last = s.alpha.abs();
        for _ in 0..5 {
            s = integrate(s, 0.0, &config, config.dt, 1);
            assert!(s.alpha.abs() > last);
            last = s.alpha.abs();
        }
    }

    #[test]
    fn energy_matches_fine_step_oracle() {
        let config = frictionless(&PendulumConfig::default());
        let states = [
            PendulumState::new(0.0, 0.0, 0.1, 0.0),
            PendulumState::new(0.3, 1.5, -0.15, 2.0),
            PendulumState::new(-1.0, -3.0, 0.05, -1.0),
        ];
        for s in states {
            let coarse = integrate(s, 0.0, &config, config.dt, 1);
            let fine = integrate(s, 0.0, &config, config.dt, 100);
            let e_coarse = mechanical_energy(&coarse, &config);
            let e_fine = mechanical_energy(&fine, &config);
            let rel = ((e_coarse - e_fine) / e_fine).abs();
            assert!(rel < 1e-3, "relative energy error {rel}");
        }
    }

    #[test]
    fn dynamics_are_mirror_symmetric() {
        let config = PendulumConfig::default();
        let s = PendulumState::new(0.4, -1.2, 0.07, 0.9);
        for a in [Action::Cw, Action::Ccw] {
            let out = step(s, a, &config).unwrap();
            let mirrored = step(s.mirrored(), a.flipped(), &config).unwrap();
            assert_eq!(out.state.mirrored(), mirrored.state);
        }
    }

    #[test]
    fn normalization_examples() {
        let b = NormalizationBounds::default();
        assert_eq!(
            normalize_state(&PendulumState::default(), &b),
            [0.0, 0.0, 0.0, 0.0, 1.0]
        );
        let x = normalize_state(&PendulumState::new(0.0, 0.0, b.alpha_max, 0.0), &b);
        assert_eq!(x[2], 1.0);
        let x = normalize_state(&PendulumState::new(0.0, 0.0, -b.alpha_max / 2.0, 0.0), &b);
        assert_eq!(x[2], -0.5);
    }

    #[test]
    fn pool_of_one_always_returns_it() {
        let s = PendulumState::new(0.1, 0.0, 0.02, 0.0);
        let pool = StatePool::new(vec![s]).unwrap();
        let mut rng = crate::seed::rng(1, "t", 0);
        for _ in 0..10 {
            assert_eq!(pool.sample(&mut rng), s);
        }
    }

    #[test]
    fn empty_pool_is_a_config_error() {
        assert!(matches!(StatePool::new(vec![]), Err(Error::Config(_))));
    }

    #[test]
    fn generated_pools_are_upright_and_deterministic() {
        let ranges = InitialStateRanges::default();
        let a = PoolSet::generate(42, &ranges).unwrap();
        let b = PoolSet::generate(42, &ranges).unwrap();
        assert_eq!(a.test.len(), 500);
        assert_eq!(a.retrain.len(), 2000);
        assert_eq!(a.pretrain.len(), 7000);
        assert_eq!(a.test.to_bytes(), b.test.to_bytes());
        assert!(a.pretrain.states().iter().all(|s| reward(s) == 0));
        let c = PoolSet::generate(43, &ranges).unwrap();
        assert_ne!(a.test.to_bytes(), c.test.to_bytes());
    }

    #[test]
    fn invalid_config_rejected() {
        let bad = PendulumConfig {
            dt: 0.0,
            ..PendulumConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(PendulumConfig::default().validate().is_ok());
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(3.0 * PI + 0.1) - (-PI + 0.1)).abs() < 1e-12);
    }
}
