//! Built-in problem catalog. Every entry is an ordinary configuration, so
//! `--config` accepts either a file path or one of these names.

use crate::config::ProblemConfig;

pub const NAMES: &[&str] = &[
    "scalar-rho2-forced",
    "scalar-impulse-rho3",
    "volterra-z-linear",
    "gap-singular",
    "sin-eps",
    "commuting-2x2",
];

pub fn lookup(name: &str) -> Option<ProblemConfig> {
    let text = match name {
        // a = 0, rho = 2, f = 1: the periodic solution is y(t) = 1 + t
        "scalar-rho2-forced" => {
            r#"{
            "schema": 1, "name": "scalar-rho2-forced",
            "dimension": 1, "a": [[0.0]], "omega": 1.0, "rho": [[2.0]],
            "nonlinearity": {"kind": "none", "forcing": ["1"]},
            "solver": {"tol": 1e-11}, "seed": 1
        }"#
        }
        // a = 0, rho = 3, impulse (0.5, b=1, d=1): y0 = d/(rho - 1 - b) = 1
        "scalar-impulse-rho3" => {
            r#"{
            "schema": 1, "name": "scalar-impulse-rho3",
            "dimension": 1, "a": [[0.0]], "omega": 1.0, "rho": [[3.0]],
            "impulses": [{"tau": 0.5, "b": [[1.0]], "d": [1.0]}],
            "nonlinearity": {"kind": "none", "forcing": ["0"]},
            "solver": {"tol": 1e-11}, "seed": 1
        }"#
        }
        // f = lambda z with the zero-mean Volterra kernel: L C2 = 0.4
        "volterra-z-linear" => {
            r#"{
            "schema": 1, "name": "volterra-z-linear",
            "dimension": 1, "a": [[0.0]], "omega": 1.0, "rho": [[2.0]],
            "impulses": [{"tau": 0.5, "b": [[0.0]], "d": [0.2]}],
            "nonlinearity": {"kind": "builtin", "name": "volterra_linear",
                             "params": {"lambda": 0.1}},
            "solver": {"tol": 1e-11}, "nu": 10.0, "seed": 2
        }"#
        }
        // rho = T(omega) exactly: the gap operator is singular, (A4) fails
        "gap-singular" => {
            r#"{
            "schema": 1, "name": "gap-singular",
            "dimension": 1, "a": [[0.0]], "omega": 1.0, "rho": [[1.0]],
            "nonlinearity": {"kind": "none", "forcing": ["1"]},
            "seed": 3
        }"#
        }
        // ordinary periodicity, contractive sine nonlinearity
        "sin-eps" => {
            r#"{
            "schema": 1, "name": "sin-eps",
            "dimension": 1, "a": [[-1.0]], "omega": 1.0, "rho": [[1.0]],
            "nonlinearity": {"kind": "builtin", "name": "sin",
                             "params": {"eps": 0.2, "offset": [1.0]}},
            "solver": {"tol": 1e-11}, "nu": 20.0, "seed": 4
        }"#
        }
        // commuting 2x2 family with two impulses and smooth forcing
        "commuting-2x2" => {
            r#"{
            "schema": 1, "name": "commuting-2x2",
            "dimension": 2,
            "a": [[-0.5, 0.25], [0.25, -0.5]],
            "omega": 1.2,
            "rho": [[2.2, 0.4], [0.4, 2.2]],
            "impulses": [
                {"tau": 0.4, "b": [[0.3, 0.1], [0.1, 0.3]], "d": [0.5, -0.2]},
                {"tau": 0.9, "b": [[0.2, 0.0], [0.0, 0.2]], "d": [-0.1, 0.3]}
            ],
            "nonlinearity": {"kind": "none",
                             "forcing": ["1 + 0.5*sin(2*pi*t/1.2)", "0.3*cos(2*pi*t/1.2)"]},
            "solver": {"tol": 1e-11}, "seed": 5
        }"#
        }
        _ => return None,
    };
    Some(ProblemConfig::from_json(text).expect("catalog entries are valid"))
}
