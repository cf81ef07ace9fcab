//! Published reference values that the solvers are checked against.

/// Passive-testing contest sizes at fp = fn = 5%. Rows follow
/// [`crate::passive::TABLE_MARGINS`] x [`crate::passive::TABLE_DETECT_RATES`],
/// columns [`crate::passive::TABLE_BASE_RATES`].
pub const PASSIVE_5: [[u64; 3]; 10] = [
    [451_411, 893_176, 1_334_897],
    [37_334, 71_911, 106_627],
    [115_150, 225_706, 336_160],
    [9_919, 18_667, 27_325],
    [52_310, 101_382, 150_471],
    [4_651, 8_588, 12_445],
    [30_000, 57_575, 85_227],
    [2_788, 4_960, 7_144],
    [19_573, 37_245, 54_932],
    [1_838, 3_274, 4_689],
];

/// Same layout as [`PASSIVE_5`] at fp = fn = 1%.
pub const PASSIVE_1: [[u64; 3]; 10] = [
    [908_590, 1_792_330, 2_675_912],
    [76_077, 145_501, 214_845],
    [233_261, 454_295, 675_242],
    [20_624, 38_039, 55_442],
    [106_411, 204_651, 302_864],
    [9_870, 17_674, 25_359],
    [61_385, 116_631, 171_908],
    [5_971, 10_312, 14_681],
    [40_156, 75_671, 110_989],
    [4_036, 6_849, 9_650],
];

/// Training-sample lower bounds in millions: (confidence, test limit,
/// altered fraction, value). `None` is an unbounded test budget.
pub const MINIMAX: [(f64, Option<u64>, f64, f64); 16] = [
    (0.99, Some(2000), 0.005, 3.87),
    (0.99, Some(2000), 0.01, 3.58),
    (0.99, Some(2000), 0.03, 2.69),
    (0.99, Some(2000), 0.05, 2.09),
    (0.95, Some(2000), 0.005, 1.67),
    (0.95, Some(2000), 0.01, 1.59),
    (0.95, Some(2000), 0.03, 1.31),
    (0.95, Some(2000), 0.05, 1.10),
    (0.99, None, 0.005, 3.73),
    (0.99, None, 0.01, 3.46),
    (0.99, None, 0.03, 2.61),
    (0.99, None, 0.05, 2.04),
    (0.95, None, 0.005, 1.65),
    (0.95, None, 0.01, 1.57),
    (0.95, None, 0.03, 1.29),
    (0.95, None, 0.05, 1.08),
];

/// Support size used for the training-sample bounds.
pub const MINIMAX_SUPPORT: u64 = 6_140_000;

pub const OPTIMISTIC_CARDINALITY: u64 = 6_140_000;
pub const REALISTIC_CARDINALITY: f64 = 1.2e47;

pub const ORACLE_SAMPLES: u64 = 540;
pub const IID_TESTS_1PCT: u64 = 300;
pub const ELECTORATE_VOTERS: u64 = 6_580;
pub const ELECTORATE_BMDS: u64 = 47;
pub const MEDIAN_TURNOUT: u64 = 2_980;
