use proptest::prelude::*;

use realm::decoherence::decoherence_functional_pure;
use realm::histories::{exhaustiveness_defect, fine_grained_set};
use realm::maxent::missing_information;
use realm::random::{haar_state, haar_unitary, random_density, random_hermitian, stream_rng};
use realm::runner::format_float;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csv_floats_round_trip(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
        prop_assert_eq!(format_float(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn class_operators_sum_to_identity(seed in any::<u64>(), dim in 2usize..5, n in 1usize..4) {
        let mut rng = stream_rng(seed, 0);
        let bases: Vec<_> = (0..n).map(|_| haar_unitary(dim, &mut rng)).collect();
        let set = fine_grained_set(&bases, (0..n).map(|k| k as f64).collect()).unwrap();
        prop_assert!(exhaustiveness_defect(&set.class_operators()) < 1e-12);
        let r = decoherence_functional_pure(&set, &haar_state(dim, &mut rng), 1e-8).unwrap();
        prop_assert!((r.total_probability() - 1.0).abs() < 1e-10);
        prop_assert!(r.probabilities.iter().all(|&p| p >= -1e-15));
    }

    #[test]
    fn missing_information_is_bounded(seed in any::<u64>(), dim in 2usize..7, m in 1usize..3) {
        let mut rng = stream_rng(seed, 1);
        let rho = random_density(dim, &mut rng);
        let ops: Vec<_> = (0..m).map(|_| random_hermitian(dim, &mut rng)).collect();
        let s = missing_information(&ops, &rho).unwrap();
        prop_assert!(s >= -1e-12 && s <= (dim as f64).ln() + 1e-12, "S = {}", s);
    }
}
