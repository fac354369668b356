//! libm-backed float operations missing from `core`.

// In test builds std is linked and the inherent methods shadow these,
// leaving the trait apparently unused.
#[allow(dead_code)]
pub(crate) trait FloatExt {
    fn sqrt(self) -> f64;
    fn powf(self, e: f64) -> f64;
}

impl FloatExt for f64 {
    fn sqrt(self) -> f64 {
        libm::sqrt(self)
    }
    fn powf(self, e: f64) -> f64 {
        libm::pow(self, e)
    }
}
