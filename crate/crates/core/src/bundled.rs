//! Model definitions shipped with the crate.

use crate::dsl::{parse_model, OdeModel};

pub const EXPONENTIAL: &str = include_str!("../models/exponential.ode");
pub const INVERSE_LINEAR: &str = include_str!("../models/inverse_linear.ode");
pub const GAUSE_MODEL1: &str = include_str!("../models/gause_model1.ode");
pub const GAUSE_MODEL2: &str = include_str!("../models/gause_model2.ode");
pub const GAUSE_MODEL3: &str = include_str!("../models/gause_model3.ode");
pub const GAUSE_MODEL4: &str = include_str!("../models/gause_model4.ode");
pub const GAUSE_MODEL2_REPARAM: &str = include_str!("../models/gause_model2_reparam.ode");
pub const LINEAR: &str = include_str!("../models/linear.ode");
pub const EXPONENTIAL3: &str = include_str!("../models/exponential3.ode");

/// `(file stem, source)` for every bundled model.
pub const ALL: [(&str, &str); 9] = [
    ("exponential", EXPONENTIAL),
    ("inverse_linear", INVERSE_LINEAR),
    ("gause_model1", GAUSE_MODEL1),
    ("gause_model2", GAUSE_MODEL2),
    ("gause_model3", GAUSE_MODEL3),
    ("gause_model4", GAUSE_MODEL4),
    ("gause_model2_reparam", GAUSE_MODEL2_REPARAM),
    ("linear", LINEAR),
    ("exponential3", EXPONENTIAL3),
];

/// Parse a bundled model by file stem.
pub fn load(stem: &str) -> Option<OdeModel> {
    ALL.iter()
        .find(|(s, _)| *s == stem)
        .map(|(_, src)| parse_model(src).expect("bundled model parses"))
}
