//! Scalar Gaussian machinery: erf, standard-normal pdf/cdf, folded-normal and
//! truncated-normal means. Everything is f64 and pure.
//!
//! erf is implemented locally as three segmented near-minimax polynomial
//! approximations (Chebyshev fits, degrees 14/20/16); the fit residuals are
//! below 2e-16, far under the 1e-12 budget the rest of the crate assumes.
//! No platform libm erf is used, so results agree across targets at
//! tolerance level.

use crate::error::{Error, Result};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
const SQRT_2: f64 = std::f64::consts::SQRT_2;

// erf(x) = x * P(x^2) on |x| <= 1; max fit error 2.2e-21
const ERF_SMALL: [f64; 14] = [
    std::f64::consts::FRAC_2_SQRT_PI,
    -0.37612638903183754,
    0.1128379167095512,
    -0.02686617064512984,
    0.0052239776254232985,
    -0.000854832702193483,
    0.00012055332902888736,
    -1.4925647567519332e-05,
    1.6462045441468418e-06,
    -1.6364642158167616e-07,
    1.4792401209404813e-08,
    -1.216456005728345e-09,
    8.709045129053106e-11,
    -4.230945824295338e-12,
];

// erf(x) = P(x) on 1 <= x <= 2.4; max fit error 1.3e-17
const ERF_MID: [f64; 20] = [
    7.039990309099438e-05,
    1.1275198377777724,
    0.0049050578812471135,
    -0.39348144314362343,
    0.04249978186944752,
    0.03678388381382518,
    0.10207419438334138,
    -0.13005045014377836,
    0.07664612750141035,
    -0.03267946753425609,
    0.006853894316443685,
    0.006564457100352388,
    -0.008686090114328865,
    0.005254228995215038,
    -0.002016017169740871,
    0.0005261176050850701,
    -9.408986224599596e-05,
    1.113499519291099e-05,
    -7.908812645120468e-07,
    2.5656528944927527e-08,
];

// erfc(x) = exp(-x^2) * P(1/x^2) / x on 2.4 <= x < 6; max fit error 1.3e-16
const ERFC_TAIL: [f64; 16] = [
    0.5641895834852371,
    -0.28209477678134426,
    0.42314053719332023,
    -1.0577444010002666,
    3.697356662922538,
    -16.486870198661983,
    87.10176858838759,
    -502.0647126138405,
    2884.4866816907906,
    -15191.78807100168,
    68452.55877555648,
    -248942.2902032465,
    689558.6193239302,
    -1351651.4053214677,
    1659573.2571406653,
    -955883.4161588225,
];

fn poly(z: f64, coeff: &[f64]) -> f64 {
    let mut acc = 0.0;
    for &c in coeff.iter().rev() {
        acc = acc * z + c;
    }
    acc
}

fn require_finite(name: &str, x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be finite, got {x}")))
    }
}

/// Error function, odd, |erf(x)| <= 1.
pub fn erf(x: f64) -> Result<f64> {
    require_finite("erf input", x)?;
    let ax = x.abs();
    if ax <= 1.0 {
        return Ok(x * poly(x * x, &ERF_SMALL));
    }
    let v = if ax <= 2.4 {
        poly(ax, &ERF_MID)
    } else if ax < 6.0 {
        1.0 - (-ax * ax).exp() * poly(1.0 / (ax * ax), &ERFC_TAIL) / ax
    } else {
        // erfc(6) < 3e-17: saturated at tolerance level
        1.0
    };
    Ok(if x >= 0.0 { v } else { -v })
}

/// Standard normal density (1/sqrt(2*pi)) * exp(-x^2/2).
pub fn std_normal_pdf(x: f64) -> Result<f64> {
    require_finite("pdf input", x)?;
    Ok(FRAC_1_SQRT_2PI * (-0.5 * x * x).exp())
}

/// Standard normal CDF via Phi(x) = (1 + erf(x/sqrt(2)))/2.
pub fn std_normal_cdf(x: f64) -> Result<f64> {
    require_finite("cdf input", x)?;
    Ok(0.5 * (1.0 + erf(x / SQRT_2)?))
}

/// pdf and cdf evaluated together at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StdNormalEval {
    pub x: f64,
    pub pdf: f64,
    pub cdf: f64,
}

impl StdNormalEval {
    pub fn at(x: f64) -> Result<Self> {
        Ok(StdNormalEval {
            x,
            pdf: std_normal_pdf(x)?,
            cdf: std_normal_cdf(x)?,
        })
    }
}

/// Mean of |X| for X ~ N(0, sigma^2): sigma * sqrt(2/pi).
pub fn folded_normal_mean(sigma: f64) -> Result<f64> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::Domain(format!("sigma must be > 0, got {sigma}")));
    }
    Ok(sigma * (2.0 / std::f64::consts::PI).sqrt())
}

/// Mean of X ~ N(0, sigma^2) conditioned on X > t*sigma:
/// sigma * phi(t) / (1 - Phi(t)), t in sigma units.
///
/// The tail 1 - Phi(t) is computed directly from the CDF and rounds to zero
/// near t ~ 8; beyond that the closed form is unusable in f64 and an overflow
/// error points the caller at the asymptotic regime (tail mean ~ sigma*t).
pub fn truncated_normal_mean(t: f64, sigma: f64) -> Result<f64> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::Domain(format!("sigma must be > 0, got {sigma}")));
    }
    require_finite("threshold", t)?;
    let tail = 1.0 - std_normal_cdf(t)?;
    if tail <= 0.0 {
        return Err(Error::Overflow(format!(
            "1 - Phi({t}) underflows to zero; for t this large use the asymptotic \
             tail mean ~ sigma*t"
        )));
    }
    Ok(sigma * std_normal_pdf(t)? / tail)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngState;

    // Independent reference: 80-term Taylor series for |x| <= 2, Lentz
    // continued fraction for the erfc tail beyond. Shares no constants or
    // structure with the implementation.
    fn erf_reference(x: f64) -> f64 {
        if x < 0.0 {
            return -erf_reference(-x);
        }
        if x <= 2.0 {
            // erf(x) = 2/sqrt(pi) * sum (-1)^k x^(2k+1) / (k! (2k+1))
            let mut term = x;
            let mut sum = 0.0;
            for k in 0..80 {
                sum += term / (2 * k + 1) as f64;
                term *= -x * x / (k + 1) as f64;
            }
            return 2.0 / std::f64::consts::PI.sqrt() * sum;
        }
        // erfc(x)*sqrt(pi)*exp(x^2) = 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
        let mut f = x;
        let mut c = x;
        let mut d = 0.0f64;
        for n in 1..500 {
            let a = n as f64 / 2.0;
            d = 1.0 / (x + a * d);
            c = x + a / c;
            let delta = c * d;
            f *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        let erfc = (-x * x).exp() / std::f64::consts::PI.sqrt() / f;
        1.0 - erfc
    }

    #[test]
    fn erf_matches_series_reference_to_1e12() {
        let mut worst = 0.0f64;
        let mut x = -6.0;
        while x <= 6.0 {
            let got = erf(x).unwrap();
            let want = erf_reference(x);
            worst = worst.max((got - want).abs());
            x += 0.003;
        }
        assert!(worst <= 1e-12, "max abs error {worst:e}");
    }

    #[test]
    fn erf_frozen_points() {
        assert_eq!(erf(0.0).unwrap(), 0.0);
        assert!((erf(1.0).unwrap() - 0.842_700_792_949_714_9).abs() < 1e-12);
        assert!((erf(-1.0).unwrap() + 0.842_700_792_949_714_9).abs() < 1e-12);
    }

    #[test]
    fn erf_is_odd_and_bounded() {
        let mut x = 0.0;
        while x <= 8.0 {
            let p = erf(x).unwrap();
            let m = erf(-x).unwrap();
            assert!((p + m).abs() < 1e-14, "odd symmetry at {x}");
            assert!(p.abs() <= 1.0);
            x += 0.17;
        }
    }

    #[test]
    fn erf_rejects_non_finite() {
        assert!(erf(f64::NAN).is_err());
        assert!(erf(f64::INFINITY).is_err());
    }

    #[test]
    fn pdf_frozen_points() {
        assert!((std_normal_pdf(0.0).unwrap() - 0.398_942_280_401_432_7).abs() < 1e-12);
        assert!((std_normal_pdf(0.6).unwrap() - 0.333_224_602_891_799_6).abs() < 1e-12);
        let far = std_normal_pdf(10.0).unwrap();
        assert!((far - 7.694_598_626_706_419e-23).abs() < 1e-27);
        assert!(std_normal_pdf(f64::NAN).is_err());
    }

    #[test]
    fn pdf_symmetric() {
        let mut x = 0.0;
        while x < 6.0 {
            let d = (std_normal_pdf(x).unwrap() - std_normal_pdf(-x).unwrap()).abs();
            assert!(d < 1e-14);
            x += 0.31;
        }
    }

    #[test]
    fn cdf_frozen_points() {
        assert_eq!(std_normal_cdf(0.0).unwrap(), 0.5);
        assert!((std_normal_cdf(0.6).unwrap() - 0.725_746_882_249_926_4).abs() < 1e-12);
        assert!((std_normal_cdf(-0.6).unwrap() - 0.274_253_117_750_073_6).abs() < 1e-12);
    }

    #[test]
    fn cdf_monotone_and_symmetric() {
        let mut prev = -1.0;
        let mut x = -8.0;
        while x <= 8.0 {
            let c = std_normal_cdf(x).unwrap();
            assert!((0.0..=1.0).contains(&c));
            assert!(c >= prev, "monotone at {x}");
            assert!((std_normal_cdf(-x).unwrap() - (1.0 - c)).abs() < 1e-14);
            prev = c;
            x += 0.05;
        }
    }

    #[test]
    fn cdf_derivative_matches_pdf_on_dense_grid() {
        // central differences, h = 1e-4, 10^6 points in [-6, 6]
        let n = 1_000_000;
        let h = 1e-4;
        let mut worst = 0.0f64;
        for i in 0..n {
            let x = -6.0 + 12.0 * (i as f64 + 0.5) / n as f64;
            let d = (std_normal_cdf(x + h).unwrap() - std_normal_cdf(x - h).unwrap()) / (2.0 * h);
            worst = worst.max((d - std_normal_pdf(x).unwrap()).abs());
        }
        assert!(worst <= 1e-6, "max derivative mismatch {worst:e}");
    }

    #[test]
    fn folded_mean_values_and_domain() {
        assert!((folded_normal_mean(1.0).unwrap() - 0.797_884_560_802_865_4).abs() < 1e-12);
        assert!((folded_normal_mean(2.0).unwrap() - 1.595_769_121_605_730_7).abs() < 1e-12);
        assert!((folded_normal_mean(0.5).unwrap() - 0.398_942_280_401_432_7).abs() < 1e-12);
        assert!(folded_normal_mean(0.0).is_err());
        assert!(folded_normal_mean(-1.0).is_err());
    }

    #[test]
    fn folded_mean_agrees_with_sampling() {
        let mut rng = RngState::from_master(11, 0);
        let n = 1_000_000usize;
        let mut sum = 0.0;
        for _ in 0..n {
            sum += rng.standard_normal().abs();
        }
        let mean = sum / n as f64;
        // std of |N(0,1)| is sqrt(1 - 2/pi)
        let se = (1.0 - 2.0 / std::f64::consts::PI).sqrt() / (n as f64).sqrt();
        let diff = (mean - folded_normal_mean(1.0).unwrap()).abs();
        assert!(diff < 4.0 * se, "diff {diff} vs 4se {}", 4.0 * se);
    }

    #[test]
    fn truncated_mean_values() {
        assert!((truncated_normal_mean(0.0, 1.0).unwrap() - 0.797_884_560_802_865_4).abs() < 1e-12);
        assert!((truncated_normal_mean(0.6, 1.0).unwrap() - 1.215_025_760_237_543_3).abs() < 1e-9);
        assert!((truncated_normal_mean(0.0, 3.0).unwrap() - 2.393_653_682_408_596).abs() < 1e-12);
    }

    #[test]
    fn truncated_mean_exceeds_cut_point() {
        let mut t = 0.0;
        while t <= 4.0 {
            let m = truncated_normal_mean(t, 1.0).unwrap();
            assert!(m >= t, "tail mean {m} < t {t}");
            t += 0.25;
        }
    }

    #[test]
    fn truncated_mean_monotone_in_t() {
        let mut prev = 0.0;
        let mut i = 0;
        while i <= 400 {
            let t = i as f64 * 0.01;
            let m = truncated_normal_mean(t, 1.0).unwrap();
            assert!(m > prev, "not increasing at t={t}");
            prev = m;
            i += 1;
        }
    }

    #[test]
    fn truncated_mean_tail_underflow_is_reported() {
        assert!(truncated_normal_mean(1.0, 1.0).is_ok());
        let err = truncated_normal_mean(10.0, 1.0).unwrap_err();
        assert!(matches!(err, Error::Overflow(_)));
        assert!(truncated_normal_mean(0.0, 0.0).is_err());
    }

    #[test]
    fn eval_bundles_pdf_and_cdf() {
        let e = StdNormalEval::at(0.6).unwrap();
        assert_eq!(e.pdf, std_normal_pdf(0.6).unwrap());
        assert_eq!(e.cdf, std_normal_cdf(0.6).unwrap());
        assert!(StdNormalEval::at(f64::INFINITY).is_err());
    }
}
