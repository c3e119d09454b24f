//! Arbitrary-precision ball arithmetic and the special functions behind the
//! exact matrix elements: Γ and beta functions, ₂F₁, and the incomplete beta
//! function.

pub mod ball;
pub mod escalate;
pub mod gamma;
pub mod hyp2f1;
pub mod incbeta;
pub mod policy;
pub mod real;

pub use ball::{bits_to_digits, digits_to_bits, float_to_decimal, Ball, CBall, Mag};
pub use gamma::{
    beta, beta_ball, beta_diag, beta_diag_ball, gamma, gamma_ball, gamma_cball, gamma_complex,
    lgamma_ball, rgamma_ball,
};
pub use hyp2f1::{hyp2f1, hyp2f1_ball};
pub use incbeta::{incomplete_beta, incomplete_beta_ball};
pub use policy::PrecisionPolicy;
pub use real::{Cplx, Real};

/// Version of the linked MPFR library.
pub fn mpfr_version() -> String {
    // SAFETY: MPFR returns a pointer to a static NUL-terminated string.
    unsafe { std::ffi::CStr::from_ptr(gmp_mpfr_sys::mpfr::get_version()) }
        .to_string_lossy()
        .into_owned()
}
