//! FTRL over the Pareto set with the Shannon-entropy regularizer: the
//! closed-form iterate, both adaptive learning-rate schedules, and the
//! exploration transform.

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum FtrlError {
    /// Cumulative loss estimates or the learning rate are not finite.
    NonFiniteInput,
}

impl fmt::Display for FtrlError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NonFiniteInput => write!(f, "non-finite input to the FTRL iterate"),
        }
    }
}

impl std::error::Error for FtrlError {}

/// Entropy floor: coordinates are clamped here before the log, which
/// perturbs H by well under 1e-12 at that magnitude.
const Q_FLOOR: f64 = 1e-300;

/// The FTRL iterate: a softmax of `-eta * l_hat` over the Pareto actions,
/// returned as a full-length distribution with zeros elsewhere.
pub fn compute_q(l_hat: &[f64], pareto: &[usize], eta: f64) -> Result<Vec<f64>, FtrlError> {
    if !(eta > 0.0) || !eta.is_finite() || pareto.iter().any(|&a| !l_hat[a].is_finite()) {
        return Err(FtrlError::NonFiniteInput);
    }
    let min = pareto
        .iter()
        .map(|&a| l_hat[a])
        .fold(f64::INFINITY, f64::min);
    let mut q = vec![0.0; l_hat.len()];
    let mut z = 0.0;
    for &a in pareto {
        let w = (-eta * (l_hat[a] - min)).exp();
        q[a] = w;
        z += w;
    }
    for &a in pareto {
        q[a] /= z;
    }
    Ok(q)
}

/// Shannon entropy in nats, with `0 log 0 = 0`.
pub fn shannon_entropy(q: &[f64]) -> f64 {
    -q.iter().map(|&v| v * v.max(Q_FLOOR).ln()).sum::<f64>()
}

/// `p = (1 - gamma) q + (gamma / k) 1`, so `p_a >= gamma / k` everywhere.
pub fn mix_exploration(q: &[f64], gamma: f64) -> Vec<f64> {
    let k = q.len() as f64;
    q.iter().map(|&v| (1.0 - gamma) * v + gamma / k).collect()
}

/// Truncated entropy-adaptive schedule for the locally observable learner:
/// `beta'_1 = c1`, `beta'_{t+1} = beta'_t + c1 / sqrt(1 + H_sum / log k_pi)`,
/// `eta_t = 1 / max(B, beta'_t)`.
#[derive(Debug, Clone)]
pub struct LocalRate {
    c1: f64,
    floor_b: f64,
    log_kpi: f64,
    beta_prime: f64,
    entropy_sum: f64,
}

impl LocalRate {
    pub fn new(c1: f64, floor_b: f64, k_pi: usize) -> Self {
        assert!(k_pi >= 2, "trivial games short-circuit before FTRL");
        LocalRate {
            c1,
            floor_b,
            log_kpi: (k_pi as f64).ln(),
            beta_prime: c1,
            entropy_sum: 0.0,
        }
    }

    pub fn eta(&self) -> f64 {
        1.0 / self.floor_b.max(self.beta_prime)
    }

    pub fn beta(&self) -> f64 {
        self.floor_b.max(self.beta_prime)
    }

    pub fn entropy_sum(&self) -> f64 {
        self.entropy_sum
    }

    /// Fold in this round's entropy and return the next learning rate.
    pub fn advance(&mut self, h_qt: f64) -> f64 {
        self.entropy_sum += h_qt;
        self.beta_prime += self.c1 / (1.0 + self.entropy_sum / self.log_kpi).sqrt();
        self.eta()
    }
}

/// Per-round quantities of the globally observable schedule.
#[derive(Debug, Clone, Copy)]
pub struct GlobalRound {
    pub a_t: f64,
    pub b_t: f64,
    pub gamma_prime: f64,
    pub gamma: f64,
    pub beta: f64,
}

/// Adaptive schedule for the globally observable learner (and, with frozen
/// parameters, the fixed-rate baseline).
///
/// The beta increment divides `b_t` by `gamma'_t`, whose ratio is
/// `4 (c1 + B_t^{1/3}) / c1` independently of `b_t`; the update uses that
/// simplified form directly, which extends the recurrence continuously to
/// `b_t = 0`.
#[derive(Debug, Clone)]
pub struct GlobalRate {
    c1: f64,
    c2: f64,
    c_g: f64,
    beta: f64,
    b_sum: f64,
    s_sum: f64,
    prev_ratio: Option<f64>,
}

impl GlobalRate {
    pub fn new(c1: f64, c2: f64, c_g: f64, beta1_override: Option<f64>) -> Self {
        let beta1 = beta1_override.unwrap_or_else(|| c2.max(2.0 * c_g));
        GlobalRate {
            c1,
            c2,
            c_g,
            beta: beta1,
            b_sum: 0.0,
            s_sum: 0.0,
            prev_ratio: None,
        }
    }

    pub fn eta(&self) -> f64 {
        1.0 / self.beta
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Consume this round's iterate: returns `(a_t, b_t, gamma'_t, gamma_t)`
    /// with the beta in force this round, then advances beta for the next.
    pub fn advance(&mut self, q: &[f64], pareto: &[usize]) -> GlobalRound {
        let a_t = shannon_entropy(q);
        if let Some(r) = self.prev_ratio {
            self.s_sum += r * a_t;
        }
        let q_max = pareto.iter().map(|&a| q[a]).fold(0.0, f64::max);
        let b_t = (1.0 - q_max).max(0.0);
        self.b_sum += b_t;

        let cube = self.b_sum.cbrt();
        let (gamma_prime, ratio) = if self.c1 > 0.0 {
            (
                0.25 * self.c1 * b_t / (self.c1 + cube),
                4.0 * (self.c1 + cube) / self.c1,
            )
        } else {
            // Frozen schedule (baseline parity): no adaptive exploration.
            (0.0, 0.0)
        };
        let beta = self.beta;
        let gamma = gamma_prime + self.c_g / (2.0 * beta);

        self.beta += self.c2 * ratio / (self.c1 + self.s_sum).sqrt().max(f64::MIN_POSITIVE);
        self.prev_ratio = Some(ratio);

        GlobalRound {
            a_t,
            b_t,
            gamma_prime,
            gamma,
            beta,
        }
    }
}

/// Theorem-shaped default `c1` for the local schedule, with the order
/// constant set to one: `m k^{3/2} sqrt(log T / log k_pi)`.
pub fn local_c1_default(m: usize, k: usize, k_pi: usize, horizon: usize) -> f64 {
    let t = (horizon.max(3)) as f64;
    m as f64 * (k as f64).powf(1.5) * (t.ln() / (k_pi as f64).ln()).sqrt()
}

/// Default truncation floor `B = 2 m k^2`, the smallest value the local
/// analysis permits.
pub fn local_b_default(m: usize, k: usize) -> f64 {
    2.0 * m as f64 * (k as f64).powi(2)
}

/// Default `c1 = max(1, log k_pi, (c_G^2 log T log(k_pi T))^{1/3})` for the
/// global schedule.
pub fn global_c1_default(c_g: f64, k_pi: usize, horizon: usize) -> f64 {
    let t = (horizon.max(3)) as f64;
    let kpi = k_pi as f64;
    1.0f64
        .max(kpi.ln())
        .max((c_g * c_g * t.ln() * (kpi * t).ln()).cbrt())
}

/// Default `c2 = sqrt(c_G^2 log T)` for the global schedule.
pub fn global_c2_default(c_g: f64, horizon: usize) -> f64 {
    let t = (horizon.max(3)) as f64;
    (c_g * c_g * t.ln()).sqrt()
}
