//! Two-arm survival data with uniform administrative censoring.

use rand::Rng;
use rand_distr::{Distribution, Exp, Uniform, Weibull};
use serde::{Deserialize, Serialize};

use crate::dgm::EventDist;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalTwoArmConfig {
    pub n_obs: usize,
    pub eta1: f64,
    pub eta2: f64,
    pub u: f64,
    pub event_dist: EventDist,
}

impl SurvivalTwoArmConfig {
    pub fn new(n_obs: usize, eta1: f64, eta2: f64, u: f64, event_dist: EventDist) -> Result<Self> {
        if n_obs < 2 || !n_obs.is_multiple_of(2) {
            return Err(Error::input(format!(
                "n_obs must be even and >= 2, got {n_obs}"
            )));
        }
        for (name, v) in [("eta1", eta1), ("eta2", eta2), ("u", u)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::input(format!("{name} must be positive, got {v}")));
            }
        }
        if let EventDist::Weibull { shape } = event_dist {
            if !(shape > 0.0) {
                return Err(Error::input(format!(
                    "weibull shape must be positive, got {shape}"
                )));
            }
        }
        Ok(Self {
            n_obs,
            eta1,
            eta2,
            u,
            event_dist,
        })
    }
}

/// Observed time `y`, event indicator `d` and group `x` per individual.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SurvivalSample {
    pub y: Vec<f64>,
    pub d: Vec<bool>,
    pub x: Vec<u8>,
}

impl SurvivalSample {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Observed event times (rows with d = 1).
    pub fn event_times(&self) -> Vec<f64> {
        self.y
            .iter()
            .zip(&self.d)
            .filter(|(_, &d)| d)
            .map(|(&y, _)| y)
            .collect()
    }

    pub fn group(&self, g: u8) -> SurvivalSample {
        let mut out = SurvivalSample::default();
        for i in 0..self.len() {
            if self.x[i] == g {
                out.y.push(self.y[i]);
                out.d.push(self.d[i]);
                out.x.push(g);
            }
        }
        out
    }
}

/// Event time with hazard scale `rate`: Exp(rate), or Weibull with scale 1/rate.
pub fn draw_event_time<R: Rng + ?Sized>(dist: EventDist, rate: f64, rng: &mut R) -> f64 {
    match dist {
        EventDist::Exponential => Exp::new(rate).expect("rate > 0").sample(rng),
        EventDist::Weibull { shape } => Weibull::new(1.0 / rate, shape)
            .expect("positive parameters")
            .sample(rng),
    }
}

/// y = min(t, c), d = 1(t <= c) with t from the event distribution and
/// c ~ Unif(0, u), n_obs/2 per group.
pub fn sample_survival<R: Rng + ?Sized>(
    config: &SurvivalTwoArmConfig,
    rng: &mut R,
) -> SurvivalSample {
    let censor = Uniform::new(0.0, config.u).expect("u > 0");
    let m = config.n_obs / 2;
    let mut out = SurvivalSample {
        y: Vec::with_capacity(config.n_obs),
        d: Vec::with_capacity(config.n_obs),
        x: Vec::with_capacity(config.n_obs),
    };
    for (g, rate) in [(1u8, config.eta1), (2u8, config.eta2)] {
        for _ in 0..m {
            let t = draw_event_time(config.event_dist, rate, rng);
            let c = censor.sample(rng);
            out.y.push(t.min(c));
            out.d.push(t <= c);
            out.x.push(g);
        }
    }
    out
}

/// Expected censored fraction under exponential events with uniform censoring.
pub fn expected_censored_fraction(eta: f64, u: f64) -> f64 {
    let a = eta * u;
    // P(c < t) = E[exp(-eta c)] = (1 - exp(-eta u)) / (eta u)
    -(-a).exp_m1() / a
}
