//! The guide's chapters, compiled as doc-tests so their snippets stay in
//! sync with the API.

#[doc = include_str!("../../../book/src/introduction.md")]
mod introduction {}
#[doc = include_str!("../../../book/src/precision.md")]
mod precision {}
#[doc = include_str!("../../../book/src/grids-and-basis.md")]
mod grids_and_basis {}
#[doc = include_str!("../../../book/src/matrix-elements.md")]
mod matrix_elements {}
#[doc = include_str!("../../../book/src/eigenproblem.md")]
mod eigenproblem {}
#[doc = include_str!("../../../book/src/sweeps.md")]
mod sweeps {}
#[doc = include_str!("../../../book/src/acceleration.md")]
mod acceleration {}
#[doc = include_str!("../../../book/src/side-results.md")]
mod side_results {}
