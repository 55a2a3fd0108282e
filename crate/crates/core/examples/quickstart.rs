//! Minimal end-to-end use: simulate a MAR sample, smooth the complete
//! cases, and evaluate the residual EDF.

use resid_edf::data::{generate, ErrorLaw, SimDesign};
use resid_edf::edf::edf_complete_case;
use resid_edf::polybasis::ProductKernel;
use resid_edf::smoother::{bandwidth_rule, fit_local_poly_in, DomainBox};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sample = generate(&SimDesign::new(200, ErrorLaw::StdNormal, 7));
    let kernel = ProductKernel::new(2, 1);
    let bandwidth = bandwidth_rule(200, 1.25)?;
    let fit = fit_local_poly_in(&sample, 1, &kernel, bandwidth, DomainBox::symmetric_unit(1))?;
    let edf = edf_complete_case(&sample, &fit)?;
    println!("N = {} complete cases", edf.n_complete());
    println!("F_hat(0) = {}", edf.evaluate(0.0));
    Ok(())
}
