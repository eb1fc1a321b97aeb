//! Static error-correction model for grasps and placements, and Monte Carlo
//! estimates of manipulation success under planar position error.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const CHUNK: usize = 4096;
const CALIBRATION_TOL: f64 = 0.005;
const SIGMA_BRACKET_M: (f64, f64) = (0.0, 1.0);
const MAX_BISECTIONS: usize = 60;

/// Axis-aligned closed acceptance region. `None` marks an axis the stage
/// cannot correct and therefore never rejects on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WindowDoc", into = "WindowDoc")]
pub struct ToleranceWindow {
    x_tol: Option<f64>,
    y_tol: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct WindowDoc {
    x_tol: Option<f64>,
    y_tol: Option<f64>,
}

impl ToleranceWindow {
    pub fn new(x_tol: Option<f64>, y_tol: Option<f64>) -> Result<Self> {
        for t in [x_tol, y_tol].into_iter().flatten() {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::domain(format!("window half-width must be positive, got {t}")));
            }
        }
        Ok(ToleranceWindow { x_tol, y_tol })
    }

    pub fn bounded(x_tol: f64, y_tol: f64) -> Result<Self> {
        ToleranceWindow::new(Some(x_tol), Some(y_tol))
    }

    pub fn x_tol(&self) -> Option<f64> {
        self.x_tol
    }

    pub fn y_tol(&self) -> Option<f64> {
        self.y_tol
    }
}

impl TryFrom<WindowDoc> for ToleranceWindow {
    type Error = Error;

    fn try_from(d: WindowDoc) -> Result<Self> {
        ToleranceWindow::new(d.x_tol, d.y_tol)
    }
}

impl From<ToleranceWindow> for WindowDoc {
    fn from(w: ToleranceWindow) -> Self {
        WindowDoc { x_tol: w.x_tol, y_tol: w.y_tol }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseError {
    pub dx: f64,
    pub dy: f64,
}

impl PoseError {
    pub fn new(dx: f64, dy: f64) -> Result<Self> {
        if !(dx.is_finite() && dy.is_finite()) {
            return Err(Error::domain("pose error must be finite"));
        }
        Ok(PoseError { dx, dy })
    }
}

pub fn within_window(err: PoseError, window: &ToleranceWindow) -> bool {
    let ok = |d: f64, tol: Option<f64>| tol.is_none_or(|t| d.abs() <= t);
    ok(err.dx, window.x_tol) && ok(err.dy, window.y_tol)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub name: String,
    pub window: ToleranceWindow,
}

/// Ordered stages a manipulation passes through; it succeeds only if every
/// stage accepts its error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ChainDoc", into = "ChainDoc")]
pub struct StageChain {
    stages: Vec<Stage>,
}

#[derive(Serialize, Deserialize)]
struct ChainDoc {
    stages: Vec<Stage>,
}

impl StageChain {
    pub fn new(stages: Vec<Stage>) -> Result<Self> {
        if stages.is_empty() {
            return Err(Error::config("stage chain must have at least one stage"));
        }
        for (i, s) in stages.iter().enumerate() {
            if stages[..i].iter().any(|p| p.name == s.name) {
                return Err(Error::config(format!("duplicate stage name {:?}", s.name)));
            }
        }
        Ok(StageChain { stages })
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    pub fn stage(&self, name: &str) -> Option<&Stage> {
        self.stages.iter().find(|s| s.name == name)
    }

    /// A chain holding only the named stage.
    pub fn single(&self, name: &str) -> Result<StageChain> {
        let s = self
            .stage(name)
            .ok_or_else(|| Error::config(format!("no stage named {name:?}")))?;
        StageChain::new(vec![s.clone()])
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

impl Default for StageChain {
    fn default() -> Self {
        let stage = |name: &str, x, y| Stage {
            name: name.to_string(),
            window: ToleranceWindow::new(x, y).expect("default windows are valid"),
        };
        StageChain::new(vec![
            stage("block_grasp", Some(0.06), None),
            stage("cone_grasp", Some(0.06), Some(0.07)),
            stage("cone_placement", Some(0.025), Some(0.05)),
        ])
        .expect("default chain is valid")
    }
}

impl TryFrom<ChainDoc> for StageChain {
    type Error = Error;

    fn try_from(d: ChainDoc) -> Result<Self> {
        StageChain::new(d.stages)
    }
}

impl From<StageChain> for ChainDoc {
    fn from(c: StageChain) -> Self {
        ChainDoc { stages: c.stages }
    }
}

fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Stream for one stage and chunk. Keyed by stage name so that a stage draws
/// the same errors whichever chain it appears in.
fn stage_rng(seed: u64, stage: &str, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(stage));
    rng.set_stream(chunk as u64);
    rng
}

fn chunk_successes(chain: &StageChain, sigma: f64, seed: u64, chunk: usize, len: usize) -> u64 {
    let mut ok = vec![true; len];
    for stage in &chain.stages {
        let mut rng = stage_rng(seed, &stage.name, chunk);
        for flag in ok.iter_mut() {
            let dx: f64 = StandardNormal.sample(&mut rng);
            let dy: f64 = StandardNormal.sample(&mut rng);
            let err = PoseError { dx: sigma * dx, dy: sigma * dy };
            *flag &= within_window(err, &stage.window);
        }
    }
    ok.iter().filter(|&&f| f).count() as u64
}

/// Fraction of `trials` manipulations whose every stage accepts an
/// independent N(0, sigma^2) error on each axis.
pub fn monte_carlo_success(chain: &StageChain, sigma: f64, trials: usize, seed: u64) -> Result<f64> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::domain(format!("sigma must be non-negative, got {sigma}")));
    }
    if trials == 0 {
        return Err(Error::domain("at least one trial is required"));
    }
    let chunks = trials.div_ceil(CHUNK);
    let hits: u64 = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let len = CHUNK.min(trials - c * CHUNK);
            chunk_successes(chain, sigma, seed, c, len)
        })
        .sum();
    Ok(hits as f64 / trials as f64)
}

/// `(sigma, rate)` pairs on a shared seed.
pub fn success_curve(chain: &StageChain, sigmas: &[f64], trials: usize, seed: u64) -> Result<Vec<(f64, f64)>> {
    sigmas
        .iter()
        .map(|&s| Ok((s, monte_carlo_success(chain, s, trials, seed)?)))
        .collect()
}

/// Sigma at which the chain's success rate matches `target_rate`.
pub fn calibrate_sigma(chain: &StageChain, target_rate: f64, trials: usize, seed: u64) -> Result<f64> {
    if !(target_rate > 0.0 && target_rate < 1.0) {
        return Err(Error::calibration(format!("target rate must lie in (0, 1), got {target_rate}")));
    }
    let (mut lo, mut hi) = SIGMA_BRACKET_M;
    let rate_hi = monte_carlo_success(chain, hi, trials, seed)?;
    if rate_hi - target_rate > CALIBRATION_TOL {
        return Err(Error::calibration(format!(
            "success rate {rate_hi:.4} at sigma {hi} m is still above target {target_rate}"
        )));
    }
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        let rate = monte_carlo_success(chain, mid, trials, seed)?;
        if (rate - target_rate).abs() <= CALIBRATION_TOL {
            return Ok(mid);
        }
        if rate > target_rate {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::calibration(format!(
        "bisection did not reach target {target_rate} within {CALIBRATION_TOL}"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn placement() -> ToleranceWindow {
        StageChain::default().stage("cone_placement").unwrap().window
    }

    #[test]
    fn window_examples() {
        let chain = StageChain::default();
        for s in chain.stages() {
            assert!(within_window(PoseError::new(0.0, 0.0).unwrap(), &s.window));
        }
        assert!(!within_window(PoseError::new(0.03, 0.0).unwrap(), &placement()));
        assert!(within_window(PoseError::new(0.0, 0.05).unwrap(), &placement()));
        assert!(within_window(PoseError::new(0.025, -0.05).unwrap(), &placement()));
    }

    #[test]
    fn unbounded_axis_never_rejects() {
        let grasp = StageChain::default().stage("block_grasp").unwrap().window;
        assert!(within_window(PoseError::new(0.0, 50.0).unwrap(), &grasp));
        assert!(!within_window(PoseError::new(0.061, 0.0).unwrap(), &grasp));
    }

    #[test]
    fn invalid_windows_and_chains() {
        assert!(ToleranceWindow::bounded(0.0, 0.1).is_err());
        assert!(ToleranceWindow::new(Some(-1.0), None).is_err());
        assert!(StageChain::new(vec![]).is_err());
        let s = StageChain::default().stages()[0].clone();
        assert!(StageChain::new(vec![s.clone(), s]).is_err());
        assert!(PoseError::new(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn chain_json_round_trip() {
        let c = StageChain::default();
        let text = c.to_json().unwrap();
        assert!(text.contains("\"y_tol\": null"));
        assert_eq!(StageChain::from_json(&text).unwrap(), c);
        assert!(StageChain::from_json(r#"{"stages":[]}"#).is_err());
    }

    #[test]
    fn zero_sigma_always_succeeds() {
        assert_eq!(monte_carlo_success(&StageChain::default(), 0.0, 1000, 1).unwrap(), 1.0);
    }

    #[test]
    fn large_sigma_defeats_placement() {
        let chain = StageChain::default().single("cone_placement").unwrap();
        let rate = monte_carlo_success(&chain, 0.6, 100_000, 7).unwrap();
        assert!(rate < 0.01, "{rate}");
    }

    #[test]
    fn deterministic_and_independent_of_thread_count() {
        let c = StageChain::default();
        let a = monte_carlo_success(&c, 0.02, 20_000, 3).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| monte_carlo_success(&c, 0.02, 20_000, 3).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn calibration_rejects_boundary_targets() {
        let c = StageChain::default();
        assert!(matches!(calibrate_sigma(&c, 1.0, 1000, 0), Err(Error::Calibration(_))));
        assert!(calibrate_sigma(&c, 0.0, 1000, 0).is_err());
    }

    #[test]
    fn calibrated_sigma_hits_target() {
        let c = StageChain::default();
        let s = calibrate_sigma(&c, 0.9225, 100_000, 11).unwrap();
        assert!(s > 0.0 && s < 0.05, "{s}");
        let rate = monte_carlo_success(&c, s, 100_000, 11).unwrap();
        assert!((rate - 0.9225).abs() <= 0.01, "{rate}");
        let half = calibrate_sigma(&c, 0.5, 100_000, 11).unwrap();
        assert!(half > s);
    }
}
