//! Standard normal CDF and quantile.

use crate::error::{Error, Result};

/// Standard normal CDF, `Φ(z) = erfc(−z/√2)/2`.
///
/// Saturates to 0 or 1 in the far tails. NaN maps to NaN.
pub fn gaussian_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Standard normal density.
pub fn gaussian_pdf(z: f64) -> f64 {
    const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Inverse of the standard normal CDF on the open interval (0, 1).
pub fn gaussian_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!(
            "gaussian_quantile requires 0 < p < 1, got {p}"
        )));
    }
    Ok(ppnd16(p))
}

// Wichura's AS241 (PPND16); relative accuracy about 1e-16.
#[allow(clippy::excessive_precision)]
pub(crate) fn ppnd16(p: f64) -> f64 {
    const SPLIT1: f64 = 0.425;
    const SPLIT2: f64 = 5.0;
    const CONST1: f64 = 0.180625;
    const CONST2: f64 = 1.6;

    const A: [f64; 8] = [
        3.387_132_872_796_366_608_0e0,
        1.331_416_678_917_843_774_5e2,
        1.971_590_950_306_551_442_7e3,
        1.373_169_376_550_946_112_5e4,
        4.592_195_393_154_987_145_7e4,
        6.726_577_092_700_870_085_3e4,
        3.343_057_558_358_812_810_5e4,
        2.509_080_928_730_122_672_7e3,
    ];
    const B: [f64; 8] = [
        1.0,
        4.231_333_070_160_091_125_2e1,
        6.871_870_074_920_579_083_0e2,
        5.394_196_021_424_751_107_7e3,
        2.121_379_430_158_659_586_7e4,
        3.930_789_580_009_271_061_0e4,
        2.872_908_573_572_194_267_4e4,
        5.226_495_278_852_854_561_0e3,
    ];
    const C: [f64; 8] = [
        1.423_437_110_749_683_577_34e0,
        4.630_337_846_156_545_295_90e0,
        5.769_497_221_460_691_405_50e0,
        3.647_848_324_763_204_605_04e0,
        1.270_458_252_452_368_382_58e0,
        2.417_807_251_774_506_117_70e-1,
        2.272_384_498_926_918_458_33e-2,
        7.745_450_142_783_414_076_40e-4,
    ];
    const D: [f64; 8] = [
        1.0,
        2.053_191_626_637_758_821_87e0,
        1.676_384_830_183_803_849_40e0,
        6.897_673_349_851_000_045_50e-1,
        1.481_039_764_274_800_745_90e-1,
        1.519_866_656_361_645_719_66e-2,
        5.475_938_084_995_344_946_00e-4,
        1.050_750_071_644_416_843_24e-9,
    ];
    const E: [f64; 8] = [
        6.657_904_643_501_103_777_20e0,
        5.463_784_911_164_114_369_90e0,
        1.784_826_539_917_291_335_80e0,
        2.965_605_718_285_048_912_30e-1,
        2.653_218_952_657_612_309_30e-2,
        1.242_660_947_388_078_438_60e-3,
        2.711_555_568_743_487_578_15e-5,
        2.010_334_399_292_288_132_65e-7,
    ];
    const F: [f64; 8] = [
        1.0,
        5.998_322_065_558_879_376_90e-1,
        1.369_298_809_227_358_053_10e-1,
        1.487_536_129_085_061_485_25e-2,
        7.868_691_311_456_132_591_00e-4,
        1.846_318_317_510_054_681_80e-5,
        1.421_511_758_316_445_888_70e-7,
        2.044_263_103_389_939_785_64e-15,
    ];

    fn horner(coef: &[f64; 8], r: f64) -> f64 {
        coef.iter().rev().fold(0.0, |acc, &c| acc * r + c)
    }

    let q = p - 0.5;
    if q.abs() <= SPLIT1 {
        let r = CONST1 - q * q;
        return q * horner(&A, r) / horner(&B, r);
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-tail.ln()).sqrt();
    let z = if r <= SPLIT2 {
        r -= CONST2;
        horner(&C, r) / horner(&D, r)
    } else {
        r -= SPLIT2;
        horner(&E, r) / horner(&F, r)
    };
    if q < 0.0 {
        -z
    } else {
        z
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values from mpmath at 40 digits.
    const PHI_1: f64 = 0.841_344_746_068_542_9;

    #[test]
    fn cdf_reference_points() {
        assert_eq!(gaussian_cdf(0.0), 0.5);
        assert!((gaussian_cdf(1.0) - PHI_1).abs() < 1e-15);
        assert!((gaussian_cdf(-3.0) - 1.349_898_031_630_094_5e-3).abs() < 1e-16);
        assert_eq!(gaussian_cdf(f64::INFINITY), 1.0);
        assert_eq!(gaussian_cdf(f64::NEG_INFINITY), 0.0);
    }

    #[test]
    fn quantile_reference_points() {
        assert_eq!(gaussian_quantile(0.5).unwrap(), 0.0);
        assert!((gaussian_quantile(PHI_1).unwrap() - 1.0).abs() < 1e-12);
        // mpmath: Φ⁻¹(0.99993093) = 3.811475051160933
        assert!((gaussian_quantile(0.999_930_93).unwrap() - 3.811_475_051_160_933).abs() < 1e-9);
        assert!((gaussian_quantile(1e-12).unwrap() + 7.034_483_825_301_132).abs() < 1e-9);
    }

    #[test]
    fn quantile_rejects_closed_endpoints() {
        for p in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(gaussian_quantile(p), Err(Error::Domain(_))));
        }
    }

    #[test]
    fn round_trip_over_grid() {
        assert!((gaussian_cdf(gaussian_quantile(0.3).unwrap()) - 0.3).abs() < 1e-9);
        let mut p = 1e-12;
        while p < 1.0 - 1e-12 {
            let z = gaussian_quantile(p).unwrap();
            // relative error in the tail, absolute near the centre
            let back = gaussian_cdf(z);
            assert!((back - p).abs() <= 1e-9 * p.min(1.0 - p).max(1e-3), "p={p}");
            p = if p < 0.01 { p * 3.7 } else { p + 0.0137 };
        }
    }

    #[test]
    fn cdf_is_symmetric() {
        for i in -400..=400 {
            let z = i as f64 * 0.025;
            assert!((gaussian_cdf(-z) - (1.0 - gaussian_cdf(z))).abs() <= 1e-15);
        }
    }
}
