//! Underwater channel model: deterministic Beer–Lambert path loss plus
//! stochastic turbulence fading. The log-normal description is the physical
//! model; the Erlang description is the analysis model obtained by moment
//! matching. Both are normalized to unit mean so all average power loss lives
//! in the path-loss factor.

use rand::Rng;

use crate::error::{Error, Result};

/// Named water presets with their extinction coefficients (1/m).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WaterType {
    Clear,
    Coastal,
}

impl WaterType {
    pub fn extinction(self) -> f64 {
        match self {
            WaterType::Clear => 0.151,
            WaterType::Coastal => 0.339,
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "clear" => Ok(WaterType::Clear),
            "coastal" => Ok(WaterType::Coastal),
            other => Err(Error::domain(format!(
                "unknown water type {other:?}; expected \"clear\" or \"coastal\""
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            WaterType::Clear => "clear",
            WaterType::Coastal => "coastal",
        }
    }
}

/// Turbulence fading description. Both variants have unit mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TurbulenceModel {
    /// Log-normal irradiance with intensity `sigma_x`; the -sigma^2/2 shift
    /// in the exponent makes the mean exactly 1.
    LogNormal { sigma_x: f64 },
    /// Erlang approximation with integer shape and positive rate.
    Erlang { shape: u32, rate: f64 },
}

impl TurbulenceModel {
    pub fn log_normal(sigma_x: f64) -> Result<Self> {
        if !(sigma_x > 0.0) || !sigma_x.is_finite() {
            return Err(Error::domain(format!("sigma_x must be > 0, got {sigma_x}")));
        }
        Ok(TurbulenceModel::LogNormal { sigma_x })
    }

    pub fn erlang(shape: u32, rate: f64) -> Result<Self> {
        if shape < 1 {
            return Err(Error::domain("Erlang shape must be a positive integer".to_string()));
        }
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(Error::domain(format!("Erlang rate must be > 0, got {rate}")));
        }
        Ok(TurbulenceModel::Erlang { shape, rate })
    }

    /// Density of the fading coefficient at `i_t` (zero off the support).
    pub fn pdf(&self, i_t: f64) -> f64 {
        match *self {
            TurbulenceModel::LogNormal { sigma_x } => lognormal_pdf(i_t, sigma_x),
            TurbulenceModel::Erlang { shape, rate } => erlang_pdf(i_t, shape, rate),
        }
    }

    /// CDF of the fading coefficient at `i_t`.
    pub fn cdf(&self, i_t: f64) -> f64 {
        if i_t <= 0.0 {
            return 0.0;
        }
        match *self {
            TurbulenceModel::LogNormal { sigma_x } => {
                let z = (i_t.ln() + sigma_x * sigma_x / 2.0) / sigma_x;
                1.0 - crate::specfun::gaussian_q(z)
            }
            TurbulenceModel::Erlang { shape, rate } => {
                let x = rate * i_t;
                let mut term = (-x).exp();
                let mut tail = term;
                for k in 1..shape {
                    term *= x / k as f64;
                    tail += term;
                }
                1.0 - tail
            }
        }
    }

    /// Draws one fading realization. Erlang draws sum `shape` exponentials;
    /// log-normal exponentiates a shifted normal.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            TurbulenceModel::LogNormal { sigma_x } => {
                let g: f64 = rng.sample(rand_distr::StandardNormal);
                (sigma_x * g - sigma_x * sigma_x / 2.0).exp()
            }
            TurbulenceModel::Erlang { shape, rate } => {
                let mut sum = 0.0;
                for _ in 0..shape {
                    let u: f64 = rng.gen::<f64>();
                    // u in [0, 1); 1 - u in (0, 1] keeps the log finite
                    sum -= (1.0 - u).ln();
                }
                sum / rate
            }
        }
    }
}

/// Beer–Lambert transmittance over distance `d` with extinction `c`.
pub fn path_loss(extinction: f64, distance: f64) -> Result<f64> {
    if !(extinction > 0.0) || !extinction.is_finite() {
        return Err(Error::domain(format!("extinction must be > 0, got {extinction}")));
    }
    if !(distance >= 0.0) || !distance.is_finite() {
        return Err(Error::domain(format!("distance must be >= 0, got {distance}")));
    }
    Ok((-extinction * distance).exp())
}

/// Erlang density with integer shape `theta` and rate `lambda`.
pub fn erlang_pdf(i_t: f64, theta: u32, lambda: f64) -> f64 {
    debug_assert!(theta >= 1 && lambda > 0.0);
    if i_t <= 0.0 {
        return 0.0;
    }
    // log space keeps large-shape evaluations in range
    let th = theta as f64;
    let l = th * lambda.ln() + (th - 1.0) * i_t.ln() - lambda * i_t - libm::lgamma(th);
    l.exp()
}

/// Unit-mean log-normal density with intensity `sigma_x`.
pub fn lognormal_pdf(i_t: f64, sigma_x: f64) -> f64 {
    debug_assert!(sigma_x > 0.0);
    if i_t <= 0.0 {
        return 0.0;
    }
    let s2 = sigma_x * sigma_x;
    let dev = i_t.ln() + s2 / 2.0;
    (-dev * dev / (2.0 * s2)).exp() / (i_t * (2.0 * std::f64::consts::PI * s2).sqrt())
}

/// Moment-matched Erlang model for a log-normal intensity: the mean stays 1
/// (theta = lambda) and the shape is the nearest positive integer to the
/// inverse log-normal variance.
pub fn match_erlang(sigma_x: f64) -> Result<TurbulenceModel> {
    if !(sigma_x > 0.0) || !sigma_x.is_finite() {
        return Err(Error::domain(format!("sigma_x must be > 0, got {sigma_x}")));
    }
    let var = (sigma_x * sigma_x).exp_m1();
    let shape = (1.0 / var).round().max(1.0) as u32;
    TurbulenceModel::erlang(shape, shape as f64)
}

/// Channel constants; `path_loss_ip` is derived from `(extinction, distance)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    /// Extinction coefficient c in 1/m.
    pub extinction: f64,
    /// Link distance d in meters.
    pub distance: f64,
    /// Beer–Lambert path loss I_p = exp(-c d).
    pub path_loss_ip: f64,
    pub turbulence: TurbulenceModel,
}

impl ChannelParams {
    pub fn new(extinction: f64, distance: f64, turbulence: TurbulenceModel) -> Result<Self> {
        let path_loss_ip = path_loss(extinction, distance)?;
        Ok(ChannelParams { extinction, distance, path_loss_ip, turbulence })
    }

    pub fn for_water(water: WaterType, distance: f64, turbulence: TurbulenceModel) -> Result<Self> {
        Self::new(water.extinction(), distance, turbulence)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specfun::{integrate_semi_infinite, QuadratureSpec};
    use rand::SeedableRng;
    use rand_pcg::Pcg64Mcg;

    #[test]
    fn beer_lambert_values() {
        assert_eq!(path_loss(0.151, 0.0).unwrap(), 1.0);
        let clear = path_loss(WaterType::Clear.extinction(), 10.0).unwrap();
        assert!((clear - (-1.51f64).exp()).abs() < 1e-15);
        assert!((clear - 0.220910).abs() < 1e-6);
        let coastal = path_loss(WaterType::Coastal.extinction(), 10.0).unwrap();
        assert!((coastal - 0.033709).abs() < 1e-6);
        assert!(path_loss(0.151, -1.0).is_err());
        assert!(path_loss(0.0, 5.0).is_err());
    }

    #[test]
    fn path_loss_is_multiplicative() {
        for (d1, d2) in [(1.0, 2.0), (3.5, 10.0), (0.0, 30.0), (25.0, 30.0)] {
            let c = 0.339;
            let joint = path_loss(c, d1 + d2).unwrap();
            let split = path_loss(c, d1).unwrap() * path_loss(c, d2).unwrap();
            assert!((joint - split).abs() <= 1e-14 * joint, "{d1}+{d2}");
        }
    }

    #[test]
    fn erlang_pdf_values_and_moments() {
        assert!((erlang_pdf(1.0, 1, 1.0) - (-1f64).exp()).abs() < 1e-15);
        // log-space evaluation against direct formula at theta = lambda = 10
        let direct = 10f64.powi(10) * (-10f64).exp() / 362_880.0;
        assert!((erlang_pdf(1.0, 10, 10.0) - direct).abs() < 1e-12 * direct);
        let spec = QuadratureSpec::with_rel_tol(1e-11);
        for theta in [1u32, 3, 10] {
            let lambda = theta as f64;
            let mass = integrate_semi_infinite(|x| erlang_pdf(x, theta, lambda), &spec).unwrap();
            assert!((mass - 1.0).abs() < 1e-8, "theta={theta}: mass {mass}");
            let mean = integrate_semi_infinite(|x| x * erlang_pdf(x, theta, lambda), &spec).unwrap();
            assert!((mean - 1.0).abs() < 1e-8, "theta={theta}: mean {mean}");
            let m2 = integrate_semi_infinite(|x| x * x * erlang_pdf(x, theta, lambda), &spec).unwrap();
            assert!(
                (m2 - 1.0 - 1.0 / theta as f64).abs() < 1e-8,
                "theta={theta}: variance {}",
                m2 - 1.0
            );
        }
        assert_eq!(erlang_pdf(0.0, 3, 3.0), 0.0);
        assert_eq!(erlang_pdf(-0.5, 3, 3.0), 0.0);
    }

    #[test]
    fn lognormal_pdf_unit_mean_and_variance() {
        let spec = QuadratureSpec::with_rel_tol(1e-11);
        let sigma = 0.3;
        let mass = integrate_semi_infinite(|x| lognormal_pdf(x, sigma), &spec).unwrap();
        assert!((mass - 1.0).abs() < 1e-8);
        let mean = integrate_semi_infinite(|x| x * lognormal_pdf(x, sigma), &spec).unwrap();
        assert!((mean - 1.0).abs() < 1e-8);
        let m2 = integrate_semi_infinite(|x| x * x * lognormal_pdf(x, sigma), &spec).unwrap();
        let var_expect = (sigma * sigma).exp_m1();
        assert!(((m2 - 1.0) - var_expect).abs() < 1e-8);
    }

    #[test]
    fn erlang_matching_inverts_the_variance_relation() {
        let sigma3 = (1f64 + 1.0 / 3.0).ln().sqrt(); // variance 1/3
        match match_erlang(sigma3).unwrap() {
            TurbulenceModel::Erlang { shape, rate } => {
                assert_eq!(shape, 3);
                assert_eq!(rate, 3.0);
            }
            _ => unreachable!(),
        }
        let sigma10 = (1f64 + 0.1).ln().sqrt(); // variance 1/10
        match match_erlang(sigma10).unwrap() {
            TurbulenceModel::Erlang { shape, .. } => assert_eq!(shape, 10),
            _ => unreachable!(),
        }
        match match_erlang(4.0).unwrap() {
            TurbulenceModel::Erlang { shape, .. } => assert_eq!(shape, 1),
            _ => unreachable!(),
        }
    }

    #[test]
    fn sampling_moments() {
        let mut rng = Pcg64Mcg::seed_from_u64(11);
        let n = 1_000_000usize;

        let erl = TurbulenceModel::erlang(3, 3.0).unwrap();
        let mean: f64 = (0..n).map(|_| erl.sample(&mut rng)).sum::<f64>() / n as f64;
        let sd_mean = (1.0 / 3.0f64 / n as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * sd_mean, "erlang mean {mean}");

        let erl10 = TurbulenceModel::erlang(10, 10.0).unwrap();
        let draws: Vec<f64> = (0..n).map(|_| erl10.sample(&mut rng)).collect();
        let m: f64 = draws.iter().sum::<f64>() / n as f64;
        let v: f64 = draws.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n as f64 - 1.0);
        // variance of the sample variance ~ 2 v^2 / n for light-tailed laws
        let sd_var = (2.0 * 0.1f64 * 0.1 / n as f64).sqrt() * 2.0;
        assert!((v - 0.1).abs() < 3.0 * sd_var, "erlang variance {v}");

        let ln = TurbulenceModel::log_normal(0.3).unwrap();
        let mean_ln: f64 = (0..n).map(|_| ln.sample(&mut rng)).sum::<f64>() / n as f64;
        let var_ln = (0.3f64 * 0.3).exp_m1();
        let sd_ln = (var_ln / n as f64).sqrt();
        assert!((mean_ln - 1.0).abs() < 3.0 * sd_ln, "lognormal mean {mean_ln}");
    }

    #[test]
    fn sampled_cdf_matches_analytic() {
        let n = 100_000usize;
        for model in [
            TurbulenceModel::erlang(3, 3.0).unwrap(),
            TurbulenceModel::log_normal(0.4).unwrap(),
        ] {
            let mut rng = Pcg64Mcg::seed_from_u64(23);
            let mut draws: Vec<f64> = (0..n).map(|_| model.sample(&mut rng)).collect();
            draws.sort_by(|a, b| a.total_cmp(b));
            let mut ks: f64 = 0.0;
            for (i, x) in draws.iter().enumerate() {
                let cdf = model.cdf(*x);
                ks = ks
                    .max((cdf - i as f64 / n as f64).abs())
                    .max(((i + 1) as f64 / n as f64 - cdf).abs());
            }
            assert!(ks < 0.01, "{model:?}: KS {ks}");
        }
    }

    #[test]
    fn water_presets() {
        assert_eq!(WaterType::from_name("clear").unwrap(), WaterType::Clear);
        assert_eq!(WaterType::from_name("coastal").unwrap(), WaterType::Coastal);
        assert!(WaterType::from_name("lake").is_err());
        let ch = ChannelParams::for_water(
            WaterType::Clear,
            10.0,
            TurbulenceModel::erlang(3, 3.0).unwrap(),
        )
        .unwrap();
        assert!((ch.path_loss_ip - 0.220910).abs() < 1e-6);
    }
}
