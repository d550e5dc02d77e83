//! Prints the bundled tutorial model as JSON (used to regenerate
//! `models/tutorial.json`).

use interdp_core::model::save_model;
use interdp_core::testmodels;

fn main() {
    println!("{}", save_model(&testmodels::fig3()));
}
