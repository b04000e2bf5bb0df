//! The steady-state loop gain computed two ways: from frequency samples
//! through spectral projectors, and from the model through a Sylvester solve.

use nalgebra::DMatrix;
use sgtr::format::fmt_sig;
use sgtr::lti::StateSpaceModel;
use sgtr::servo::{Exosystem, ServoCompensator, SpectralData};
use sgtr::sslg::{build_m, sslg_apply_data, sslg_apply_model, FrequencyData};
use sgtr::linalg::vec_cols;

fn main() -> sgtr::Result<()> {
    let plant = StateSpaceModel::new_stable(
        DMatrix::from_row_slice(3, 3, &[-1.0, 0.4, 0.0, 0.0, -0.5, 1.0, 0.2, 0.0, -2.0]),
        DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.5, 0.5]),
        DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]),
        DMatrix::zeros(2, 2),
    )?;
    let exo = Exosystem::new(vec![0.3, 1.7])?;
    let servo = ServoCompensator::new(&exo, plant.r())?;
    let fd = FrequencyData::analytic(&plant, &exo)?;
    let spec = SpectralData::new(&exo);

    let f = DMatrix::from_fn(plant.m(), plant.r() * exo.q(), |i, j| ((i + 2 * j) as f64).sin());
    let from_data = sslg_apply_data(&fd, &spec, &f)?;
    let from_model = sslg_apply_model(&plant, &servo, &f)?;
    println!("relative gap {}", fmt_sig((&from_data - &from_model).norm() / from_model.norm()));

    let op = build_m(&fd, &spec)?;
    let via_m = op.matrix() * vec_cols(&f);
    println!("M vec(F) gap {}", fmt_sig((via_m - vec_cols(&from_data)).norm()));
    println!("sigma_min(M) = {}", fmt_sig(op.sigma_min()));
    Ok(())
}
