//! Confusion matrices and F1 values as printed in the published results
//! tables, in table order. Thousands separators in the source are dropped.

use spellscan::eval::{f1_from_matrix, ConfusionMatrix};

pub struct PublishedMatrix {
    pub table: &'static str,
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
    pub printed_f1: f64,
}

const fn m(table: &'static str, tp: u64, fn_: u64, fp: u64, tn: u64, printed_f1: f64) -> PublishedMatrix {
    PublishedMatrix {
        table,
        tp,
        fp,
        fn_,
        tn,
        printed_f1,
    }
}

/// Columns follow the printed layout: TP, FN, FP, TN.
pub const MATRICES: [PublishedMatrix; 14] = [
    m("3a", 279, 5, 78, 13_880, 0.8705),
    m("3b", 112, 0, 67, 14_063, 0.7698),
    m("4a", 278, 6, 75, 13_883, 0.8728),
    m("4b", 111, 1, 42, 14_088, 0.8377),
    m("5a", 262, 9, 43, 6_597, 0.9097),
    m("5b", 106, 2, 23, 6_780, 0.8945),
    m("6a", 197, 7, 11, 587, 0.9563),
    m("6b", 77, 7, 5, 716, 0.9277),
    m("7a", 195, 9, 9, 589, 0.9559),
    m("7b", 80, 3, 2, 717, 0.9697),
    m("9a", 274, 10, 129, 13_829, 0.7977),
    m("9b", 110, 2, 103, 14_027, 0.6769),
    m("8a", 54, 230, 57, 13_901, 0.2880),
    m("8b", 28, 84, 43, 14_087, 0.3060),
];

pub const F1_TOLERANCE: f64 = 0.0005;

/// Computed F1 and whether it lies within tolerance of the printed value.
pub fn reproduce(p: &PublishedMatrix) -> (f64, bool) {
    let f1 = f1_from_matrix(ConfusionMatrix::new(p.tp, p.fp, p.fn_, p.tn)).f1;
    (f1, (f1 - p.printed_f1).abs() <= F1_TOLERANCE)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f1_by_hand() {
        // 2tp / (2tp + fp + fn), written out for the first and last rows.
        assert!((reproduce(&MATRICES[0]).0 - 558.0 / 641.0).abs() < 1e-12);
        assert!((reproduce(&MATRICES[13]).0 - 56.0 / 183.0).abs() < 1e-12);
    }
}
