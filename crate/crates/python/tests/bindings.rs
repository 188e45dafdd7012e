use std::ffi::CString;

use pyo3::prelude::*;
use pyo3::types::PyDict;

fn run_py(code: &str) {
    Python::attach(|py| {
        let module = pyo3::wrap_pymodule!(cuspform_py::cuspform_py)(py);
        let globals = PyDict::new(py);
        globals.set_item("cf", module).unwrap();
        let code = CString::new(code).unwrap();
        if let Err(e) = py.run(&code, Some(&globals), None) {
            e.print(py);
            panic!("python check failed");
        }
    });
}

#[test]
fn profile_grid_and_velocity_gradient() {
    run_py(
        r#"
p = cf.Profile("poly-bump", [3.0])
f = cf.Forcing(p, 1.0)
g = cf.Grid(f.support_end, 4096)
v = cf.velocity_gradient(f, g)
assert abs(v[0] + 3.2) < 1e-8, v[0]
assert len(v) == len(g) == 4096
"#,
    );
}

#[test]
fn constants_and_extrapolation() {
    run_py(
        r#"
k = cf.fit_k_bounds(cf.Forcing(cf.Profile("poly-bump", [3.0]), 0.1))
c = cf.select_constants(k["k0"], k["k1"])
assert c["beta"] == 0.95
t = [0.01 * i for i in range(100)]
fit = cf.extrapolate_ts([(1 - s) ** 2 for s in t], t)
assert abs(fit["ts_estimate"] - 1) < 0.01
"#,
    );
}

#[test]
fn errors_surface_as_cuspform_error() {
    run_py(
        r#"
for bad in (lambda: cf.Profile("spiky"), lambda: cf.Profile("flat-bump", [2.0]).require_strict_maximum(),
            lambda: cf.parse_run_config('mode = "certified"\neps0 = 0.5\n[profile]\nfamily = "poly-bump"\nparams = [3]\n')):
    try:
        bad()
    except cf.CuspformError:
        pass
    else:
        raise AssertionError("accepted")
"#,
    );
}

#[test]
fn zero_profile_run_exits_4() {
    run_py(
        r#"
code, report = cf.run_config('mode = "uncertified"\n[profile]\nfamily = "zero"\n[grid]\nn = 64\n')
assert code == 4
assert sorted(report) == sorted(["config", "constants", "blowup", "cusp_fit", "needle", "monitors", "violations", "timing"])
"#,
    );
}
