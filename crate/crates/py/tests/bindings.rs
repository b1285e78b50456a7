use pyo3::prelude::*;
use pyo3::types::PyModule;

fn with_module<F: for<'py> FnOnce(Python<'py>, &Bound<'py, PyModule>)>(f: F) {
    Python::attach(|py| {
        let m = PyModule::new(py, "fedmeta").unwrap();
        fedmeta_py::init_module(&m).unwrap();
        f(py, &m);
    });
}

fn run(py: Python<'_>, m: &Bound<'_, PyModule>, code: &str) {
    let globals = pyo3::types::PyDict::new(py);
    globals.set_item("fm", m).unwrap();
    let code = std::ffi::CString::new(code).unwrap();
    if let Err(e) = py.run(&code, Some(&globals), None) {
        e.print(py);
        panic!("python snippet failed");
    }
}

#[test]
fn scalar_and_model_functions() {
    with_module(|py, m| {
        run(
            py,
            m,
            r#"
cfg = fm.ModelConfig(3, [4], 2, batchnorm=False)
assert cfg.param_count() == 3 * 4 + 4 + 4 * 2 + 2
p = fm.init_params(cfg, 7)
assert len(p) == cfg.param_count()
x = [[0.1, -0.2, 0.3], [1.0, 0.5, -0.5]]
probs = fm.forward(cfg, p, x)
assert all(abs(sum(r) - 1.0) < 1e-12 for r in probs)
g = fm.grad(cfg, p, x, [0, 1])
hv = fm.hvp(cfg, p, x, [0, 1], g)
assert len(hv) == len(p)
assert fm.loss(cfg, p, x, [0, 1]) > 0
"#,
        );
    });
}

#[test]
fn meta_privacy_and_metrics() {
    with_module(|py, m| {
        run(
            py,
            m,
            r#"
cfg = fm.ModelConfig(2, [3], 2, batchnorm=False)
meta = fm.init_meta(cfg, 1)
sup = ([[0.0, 1.0], [1.0, 0.0]], [0, 1])
qry = ([[0.1, 0.9], [0.9, 0.1]], [0, 1])
dt, da = fm.meta_gradient(cfg, meta, sup, qry)
assert len(dt) == len(meta) and len(da) == len(meta)
a = fm.metasgd_step(cfg, meta, [(sup, qry)], beta=0.1)
b = fm.metadpsgd_step(cfg, meta, [(sup, qry)], 3, beta=0.1, clip_bound=None, sigma=0.0)
assert a == b
assert fm.clip_gradient([3.0], [4.0], 2.5) == ([1.5], [2.0])
s = fm.calibrate_sigma(1.0, 1e-3, 0.5, 100, c2=1.0)
assert s > 0
assert fm.min_delta_for(2.0, 0.5) > 0
avg = fm.fedavg([fm.MetaParams([0.0], [1.0]), fm.MetaParams([4.0], [1.0])], [1.0, 3.0])
assert avg.theta == [3.0]
i = fm.indicators(3, 1, 2, 4)
assert abs(i["accuracy"] - 0.7) < 1e-12 and abs(i["f1"] - 2 * 0.75 * 0.6 / 1.35) < 1e-12
r = fm.aggregate([{"accuracy": 0.8}, {"accuracy": 1.0}])
assert abs(r["accuracy"]["halfwidth"] - 0.196) < 1e-3
assert r["precision"]["mean"] is None
blob = avg.to_checkpoint(cfg, 5)
fp, rnd, back = fm.MetaParams.from_checkpoint(blob)
assert (fp, rnd, back) == (cfg.fingerprint(), 5, avg)
"#,
        );
    });
}

#[test]
fn data_and_scenarios() {
    with_module(|py, m| {
        run(
            py,
            m,
            r#"
import json
x, y = fm.generate_synthetic(examples_per_class=3, resolution=4, seed=2)
assert len(x) == 6 and len(x[0]) == 16 and sorted(set(y)) == [0, 1]
text = """kind = centralized
rounds = 1
eval_tasks = 2
[model]
hidden = 4
batchnorm = false
[meta]
tasks_per_batch = 2
batches_per_round = 1
[episodes]
k_shot = 2
q_query = 2
[data]
resolution = 4
examples_per_class = 20
"""
report = json.loads(fm.run_scenario(text))
assert report["arms"][0]["arm"] == "centralized"
try:
    fm.run_scenario("[privacy]\nepsilon = -1\n")
    raise AssertionError("expected a config error")
except ValueError as e:
    assert "line 2" in str(e)
"#,
        );
    });
}
