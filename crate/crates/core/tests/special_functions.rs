use fragstat_core::special::{
    bessel_k, bessel_k_with, bessel_k_weighted_derivative, gamma_fn, BesselEvalConfig,
};
use proptest::prelude::*;

// (order, argument, K) computed with 40-digit arithmetic
const BESSEL_TABLE: &[(f64, f64, f64)] = &[
    (0.0, 0.001, 7.0236888005623813),
    (0.0, 0.01, 4.721244730161095),
    (0.0, 0.1, 2.4270690247020166),
    (0.0, 0.5, 0.92441907122766586),
    (0.0, 1.0, 0.42102443824070833),
    (0.0, 1.999, 0.11403383058923292),
    (0.0, 2.001, 0.11375409873668461),
    (0.0, 3.7, 0.015630659921626662),
    (0.0, 5.0, 0.0036910983340425943),
    (0.0, 10.0, 1.7780062316167652e-5),
    (0.0, 19.99, 5.8003712004862175e-10),
    (0.0, 20.01, 5.6827079745724106e-10),
    (0.0, 35.0, 1.3310351491429469e-16),
    (0.0, 50.0, 3.4101677497894955e-23),
    (0.1, 0.001, 7.6735905190531843),
    (0.1, 0.01, 4.9346660097555971),
    (0.1, 0.1, 2.4670534102276832),
    (0.1, 0.5, 0.93008652913147853),
    (0.1, 1.0, 0.42256594495516929),
    (0.1, 1.999, 0.11427055282588269),
    (0.1, 2.001, 0.11399003879178781),
    (0.1, 3.7, 0.015649535843829672),
    (0.1, 5.0, 0.0036944832782554555),
    (0.1, 10.0, 1.7788551507869296e-5),
    (0.1, 19.99, 5.8017877230401634e-10),
    (0.1, 20.01, 5.6840944071197842e-10),
    (0.1, 35.0, 1.3312226741299782e-16),
    (0.1, 50.0, 3.4105054446047281e-23),
    (0.25, 0.001, 11.756476271934459),
    (0.25, 0.01, 6.1657412641392402),
    (0.25, 0.1, 2.6851568718760593),
    (0.25, 0.5, 0.96031632493188602),
    (0.25, 1.0, 0.43073977444858552),
    (0.25, 1.999, 0.115520696321975),
    (0.25, 2.001, 0.1152360457034714),
    (0.25, 3.7, 0.015748986212094453),
    (0.25, 5.0, 0.0037123027320318406),
    (0.25, 10.0, 1.7833184439806392e-5),
    (0.25, 19.99, 5.8092300575037313e-10),
    (0.25, 20.01, 5.6913786450143306e-10),
    (0.25, 35.0, 1.3322076099360987e-16),
    (0.25, 50.0, 3.4122788875748856e-23),
    (0.33333333333333333, 0.001, 16.71504693651746),
    (0.33333333333333333, 0.01, 7.4862246664512349),
    (0.33333333333333333, 0.1, 2.8998279809345772),
    (0.33333333333333333, 0.5, 0.98903107424672429),
    (0.33333333333333333, 1.0, 0.43843063344153436),
    (0.33333333333333333, 1.999, 0.11668932038807724),
    (0.33333333333333333, 2.001, 0.11640079411815876),
    (0.33333333333333333, 3.7, 0.015841598925097019),
    (0.33333333333333333, 5.0, 0.0037288750960535884),
    (0.33333333333333333, 10.0, 1.7874608271055335e-5),
    (0.33333333333333333, 19.99, 5.8161294903650515e-10),
    (0.33333333333333333, 20.01, 5.698131506197077e-10),
    (0.33333333333333333, 35.0, 1.3331202314165813e-16),
    (0.33333333333333333, 50.0, 3.4139217813583628e-23),
    (0.5, 0.001, 39.593659513116644),
    (0.5, 0.01, 12.40843453284693),
    (0.5, 0.1, 3.5861668387972601),
    (0.5, 0.5, 1.0750476034999202),
    (0.5, 1.0, 0.46106850444789456),
    (0.5, 1.999, 0.12008779543145007),
    (0.5, 2.001, 0.11978795089970773),
    (0.5, 3.7, 0.016109033825487326),
    (0.5, 5.0, 0.0037766133746428826),
    (0.5, 10.0, 1.799347809370518e-5),
    (0.5, 19.99, 5.8358866523740529e-10),
    (0.5, 20.01, 5.7174689047321931e-10),
    (0.5, 35.0, 1.3357311366035825e-16),
    (0.5, 50.0, 3.4186200954570746e-23),
    (0.75, 0.001, 183.23463852175822),
    (0.75, 0.01, 32.543452785357033),
    (0.75, 0.1, 5.5967025112681318),
    (0.75, 0.5, 1.2917498162179127),
    (0.75, 1.0, 0.51577530069591863),
    (0.75, 1.999, 0.12806643436299354),
    (0.75, 2.001, 0.12773975045570197),
    (0.75, 3.7, 0.016726352559962515),
    (0.75, 5.0, 0.0038861592549742765),
    (0.75, 10.0, 1.8263751436705313e-5),
    (0.75, 19.99, 5.8805822447429774e-10),
    (0.75, 20.01, 5.7612146596276698e-10),
    (0.75, 35.0, 1.3416242152303597e-16),
    (0.75, 50.0, 3.4292148046935574e-23),
    (0.999999, 0.001, 999.98921449277346),
    (0.999999, 0.01, 99.973421995019767),
    (0.999999, 0.1, 9.8538205102174526),
    (0.999999, 0.5, 1.6564392711669655),
    (0.999999, 1.0, 0.60190680917313667),
    (0.999999, 1.999, 0.1400497850317108),
    (0.999999, 2.001, 0.13968213145318147),
    (0.999999, 3.7, 0.017628030877723173),
    (0.999999, 5.0, 0.0040446127072329306),
    (0.999999, 10.0, 1.8648771675820324e-5),
    (0.999999, 19.99, 5.9437226288680706e-10),
    (0.999999, 20.01, 5.8230126950789907e-10),
    (0.999999, 35.0, 1.3499177959715495e-16),
    (0.999999, 50.0, 3.4441021585142354e-23),
    (1.0, 0.001, 999.99623815608557),
    (1.0, 0.01, 99.973894118296248),
    (1.0, 0.1, 9.8538447808706061),
    (1.0, 0.5, 1.6564411200033009),
    (1.0, 1.0, 0.60190723019723457),
    (1.0, 1.999, 0.14004984207710968),
    (1.0, 2.001, 0.13968218830176753),
    (1.0, 3.7, 0.017628035102223267),
    (1.0, 5.0, 0.0040446134454521642),
    (1.0, 10.0, 1.8648773453825585e-5),
    (1.0, 19.99, 5.9437229190315604e-10),
    (1.0, 20.01, 5.8230129790722439e-10),
    (1.0, 35.0, 1.3499178340011057e-16),
    (1.0, 50.0, 3.4441022267175556e-23),
    (1.0000001, 0.001, 999.99694052522052),
    (1.0000001, 0.01, 99.973941330755515),
    (1.0000001, 0.1, 9.8538472079400018),
    (1.0000001, 0.5, 1.6564413048871332),
    (1.0000001, 1.0, 0.6019072722996818),
    (1.0000001, 1.999, 0.14004984778165388),
    (1.0000001, 2.001, 0.13968219398663043),
    (1.0000001, 3.7, 0.017628035524673561),
    (1.0000001, 5.0, 0.0040446135192741352),
    (1.0000001, 10.0, 1.8648773631626217e-5),
    (1.0000001, 19.99, 5.9437229480479261e-10),
    (1.0000001, 20.01, 5.8230130074715856e-10),
    (1.0000001, 35.0, 1.3499178378040635e-16),
    (1.0000001, 50.0, 3.4441022335378915e-23),
    (1.5, 0.001, 39633.25317262976),
    (1.5, 0.01, 1253.2518878175399),
    (1.5, 0.1, 39.447835226769862),
    (1.5, 0.5, 3.2251428104997607),
    (1.5, 1.0, 0.92213700889578912),
    (1.5, 1.999, 0.18016173011451664),
    (1.5, 2.001, 0.17965199432784752),
    (1.5, 3.7, 0.020462826751294712),
    (1.5, 5.0, 0.0045319360495714591),
    (1.5, 10.0, 1.9792825903075698e-5),
    (1.5, 19.99, 6.1278269551441406e-10),
    (1.5, 20.01, 6.0031994846788294e-10),
    (1.5, 35.0, 1.3738948833636848e-16),
    (1.5, 50.0, 3.4869924973662161e-23),
    (2.0, 0.001, 1999999.5000009717),
    (2.0, 0.01, 19999.500068389411),
    (2.0, 0.1, 199.50396464211414),
    (2.0, 0.5, 7.5501835512408694),
    (2.0, 1.0, 1.6248388986351775),
    (2.0, 1.999, 0.25415373261735667),
    (2.0, 2.001, 0.25336648084739679),
    (2.0, 3.7, 0.025159327544450049),
    (2.0, 5.0, 0.00530894371222346),
    (2.0, 10.0, 2.1509817006932769e-5),
    (2.0, 19.99, 6.3950408272027318e-10),
    (2.0, 20.01, 6.2647182673332546e-10),
    (2.0, 35.0, 1.4081733110858672e-16),
    (2.0, 50.0, 3.5479318388581977e-23),
    (2.5, 0.001, 118899799.11154879),
    (2.5, 0.01, 375987.97477979483),
    (2.5, 0.1, 1187.0212236418931),
    (2.5, 0.5, 20.425904466498485),
    (2.5, 1.0, 3.2274795311352619),
    (2.5, 1.999, 0.39046557949525693),
    (2.5, 2.001, 0.38913127073156307),
    (2.5, 3.7, 0.032700514975185742),
    (2.5, 5.0, 0.006495775004385758),
    (2.5, 10.0, 2.3931325864627889e-5),
    (2.5, 19.99, 6.7555205125757749e-10),
    (2.5, 20.01, 6.6174988124801435e-10),
    (2.5, 35.0, 1.4534935551776126e-16),
    (2.5, 50.0, 3.6278396452990476e-23),
    (4.2, 0.001, 283773842706171.91),
    (4.2, 0.01, 17904780540.108443),
    (4.2, 0.1, 1128842.0083998389),
    (4.2, 0.5, 1284.8515612520771),
    (4.2, 1.0, 66.009022106017301),
    (4.2, 1.999, 2.89492768805305),
    (4.2, 2.001, 2.8811793216080139),
    (4.2, 3.7, 0.11699755669955023),
    (4.2, 5.0, 0.017563784933135291),
    (4.2, 10.0, 4.0876218717040477e-5),
    (4.2, 19.99, 8.9108218681667102e-10),
    (4.2, 20.01, 8.7264254605587238e-10),
    (4.2, 35.0, 1.7060592360096937e-16),
    (4.2, 50.0, 4.0606248849583712e-23),
];

const GAMMA_TABLE: &[(f64, f64)] = &[
    (0.001, 999.423_772_484_595_47),
    (0.1, 9.513_507_698_668_731_8),
    (0.5, 1.772_453_850_905_516),
    (1.5, 0.886_226_925_452_758_01),
    (2.5, 1.329_340_388_179_137),
    (3.7, 4.170_651_783_796_603_2),
    (10.0, 362_880.0),
    (25.5, 3.086_770_540_528_696_8e24),
    (100.0, 9.332_621_544_394_415_3e155),
    (170.5, 5.562_092_414_559_999_6e305),
];

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

#[test]
fn bessel_matches_reference_table() {
    for &(rho, z, k) in BESSEL_TABLE {
        let v = bessel_k(rho, z).unwrap();
        let tol = if rho <= 2.0 { 1e-10 } else { 1e-9 };
        assert!(rel(v, k) < tol, "K_{rho}({z}) = {v}, expected {k}");
    }
}

#[test]
fn gamma_matches_reference_table() {
    for &(x, g) in GAMMA_TABLE {
        assert!(rel(gamma_fn(x).unwrap(), g) < 1e-12, "gamma({x})");
    }
}

#[test]
fn half_order_identity_on_listed_arguments() {
    for &z in &[0.01, 0.1, 1.0, 5.0, 20.0] {
        let exact = (std::f64::consts::PI / (2.0 * z)).sqrt() * (-z).exp();
        assert!(rel(bessel_k(0.5, z).unwrap(), exact) < 1e-10);
    }
}

#[test]
fn order_symmetry() {
    for &rho in &[0.1, 0.5, 0.9] {
        for &z in &[0.5, 1.0, 5.0] {
            let a = bessel_k(rho, z).unwrap();
            let b = bessel_k(-rho, z).unwrap();
            assert!(rel(a, b) < 1e-10);
        }
    }
}

#[test]
fn regime_stitching_is_continuous() {
    let cfg = BesselEvalConfig::default();
    for &rho in &[0.0, 0.2, 0.5, 0.75, 1.0, 1.3, 2.0] {
        for &cut in &[cfg.series_cutoff, cfg.asymptotic_cutoff] {
            let lo = bessel_k_with(&cfg, rho, cut - 1e-8).unwrap();
            let hi = bessel_k_with(&cfg, rho, cut + 1e-8).unwrap();
            // the true function changes by about 2e-8 relative over this gap
            let slope = (bessel_k(rho, cut + 1e-4).unwrap() - bessel_k(rho, cut - 1e-4).unwrap()) / 2e-4;
            let expected = lo + slope * 2e-8;
            assert!(rel(hi, expected) < 1e-9, "rho={rho} cut={cut}");
        }
    }
}

#[test]
fn small_argument_law() {
    // the next correction is of relative size (z/2)^{2ρ}, below 1e-4 at z = 1e-6 once ρ > 0.32
    for &rho in &[0.35, 0.5, 1.0, 1.7] {
        let z: f64 = 1e-6;
        let limit = 2f64.powf(rho - 1.0) * gamma_fn(rho).unwrap();
        let v = bessel_k(rho, z).unwrap() * z.powf(rho);
        assert!(rel(v, limit) < 1e-4, "rho={rho}");
    }
}

#[test]
fn small_argument_two_term_law_for_small_orders() {
    for &rho in &[0.05, 0.1, 0.25] {
        let z: f64 = 1e-6;
        let g = gamma_fn(rho).unwrap();
        let gm = gamma_fn(1.0 - rho).unwrap() / (-rho);
        let approx = 0.5 * (g * (z / 2.0).powf(-rho) + gm * (z / 2.0).powf(rho));
        assert!(rel(bessel_k(rho, z).unwrap(), approx) < 1e-4, "rho={rho}");
    }
}

#[test]
fn near_integer_orders_are_smooth() {
    for &z in &[0.01, 0.5, 1.9] {
        let k1 = bessel_k(1.0, z).unwrap();
        for &d in &[1e-7, -1e-7, 1e-9] {
            assert!(rel(bessel_k(1.0 + d, z).unwrap(), k1) < 1e-6);
        }
    }
}

proptest! {
    #[test]
    fn k_is_positive_and_decreasing(rho in 0.0f64..2.0, z in 1e-3f64..40.0, dz in 1e-3f64..5.0) {
        let a = bessel_k(rho, z).unwrap();
        let b = bessel_k(rho, z + dz).unwrap();
        prop_assert!(a > 0.0 && b > 0.0);
        prop_assert!(b < a);
    }

    #[test]
    fn weighted_derivative_matches_difference(rho in 0.0f64..2.0, z in 0.05f64..30.0) {
        let h = 1e-5 * z;
        let g = |t: f64| t.powf(rho) * bessel_k(rho, t).unwrap();
        let fd = (g(z + h) - g(z - h)) / (2.0 * h);
        let d = bessel_k_weighted_derivative(rho, z).unwrap();
        prop_assert!((fd - d).abs() <= 1e-6 * d.abs() + 1e-300, "fd={} d={}", fd, d);
    }

    #[test]
    fn recurrence_holds(rho in 0.0f64..1.0, z in 1e-2f64..45.0) {
        // K_{ρ+1} = K_{ρ−1} + (2ρ/z) K_ρ
        let lhs = bessel_k(rho + 1.0, z).unwrap();
        let rhs = bessel_k(rho - 1.0, z).unwrap() + 2.0 * rho / z * bessel_k(rho, z).unwrap();
        prop_assert!(rel(lhs, rhs) < 1e-10);
    }

    #[test]
    fn gamma_functional_equation(x in 0.01f64..100.0) {
        let a = gamma_fn(x + 1.0).unwrap();
        let b = x * gamma_fn(x).unwrap();
        prop_assert!(rel(a, b) < 1e-12);
    }
}
