#![allow(dead_code)]

use affine_libor::model::{fit_term_structure, CalibratedModel, TenorStructure};
use affine_libor::processes::{CirParams, GammaOuParams, ProcessSpec, ProductProcess};

pub const MATURITIES: [f64; 10] = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0];
pub const DISCOUNTS: [f64; 10] = [
    0.9833630, 0.9647388, 0.9435826, 0.9228903, 0.9006922, 0.8790279, 0.8568412, 0.8352144,
    0.8133497, 0.7920573,
];

pub fn table1() -> TenorStructure {
    TenorStructure::new(MATURITIES.to_vec(), DISCOUNTS.to_vec()).unwrap()
}

pub fn cir_params() -> CirParams {
    CirParams::new(0.001, 0.5, 0.59, 1.25).unwrap()
}

pub fn gamma_ou_params() -> GammaOuParams {
    GammaOuParams::new(0.01, 2.0, 1.0, 1.25).unwrap()
}

pub fn cir_model() -> CalibratedModel {
    fit_term_structure(&table1(), &ProcessSpec::Cir(cir_params()), &[1.25], 1e-12).unwrap()
}

pub fn gamma_ou_model() -> CalibratedModel {
    fit_term_structure(&table1(), &ProcessSpec::GammaOu(gamma_ou_params()), &[1.25], 1e-12)
        .unwrap()
}

pub fn cir2f_process() -> ProcessSpec {
    ProcessSpec::Product(
        ProductProcess::new(vec![
            ProcessSpec::Cir(cir_params()),
            ProcessSpec::Cir(CirParams::new(0.3, 0.4, 0.3, 0.5).unwrap()),
        ])
        .unwrap(),
    )
}

pub fn cir2f_model() -> CalibratedModel {
    fit_term_structure(&table1(), &cir2f_process(), &[1.25, 0.5], 1e-12).unwrap()
}

pub fn cir_strikes() -> Vec<f64> {
    (0..=10).map(|i| 0.01 + 0.005 * i as f64).collect()
}

pub fn gamma_ou_strikes() -> Vec<f64> {
    (0..=9).map(|i| 0.025 + 0.005 * i as f64).collect()
}
