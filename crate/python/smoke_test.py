"""Builds the extension module, imports it and exercises the main entry points.

Usage: python3 python/smoke_test.py
"""

import json
import os
import shutil
import subprocess
import sys
import sysconfig
import tempfile

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def build_module(dest):
    subprocess.run(
        ["cargo", "build", "--release", "-p", "fedmeta-py", "--features", "extension-module"],
        cwd=ROOT,
        check=True,
    )
    target = os.environ.get("CARGO_TARGET_DIR", os.path.join(ROOT, "target"))
    lib = os.path.join(target, "release", "libfedmeta_py.so")
    if sys.platform == "darwin":
        lib = lib[: -len(".so")] + ".dylib"
    suffix = sysconfig.get_config_var("EXT_SUFFIX") or ".so"
    shutil.copy(lib, os.path.join(dest, "fedmeta" + suffix))


def main():
    with tempfile.TemporaryDirectory() as tmp:
        build_module(tmp)
        sys.path.insert(0, tmp)
        import fedmeta as fm

        cfg = fm.ModelConfig(4, [8], 2, batchnorm=True)
        params = fm.init_params(cfg, 0)
        assert len(params) == cfg.param_count()

        x, y = fm.generate_synthetic(examples_per_class=6, resolution=4, seed=1)
        rows, labels = x[:4], [y[0], y[1], y[6], y[7]]
        cfg = fm.ModelConfig(16, [8], 2, batchnorm=True)
        params = fm.init_params(cfg, 0)
        probs = fm.forward(cfg, params, rows)
        assert all(abs(sum(p) - 1.0) < 1e-12 for p in probs)

        # finite-difference check of one gradient coordinate
        g = fm.grad(cfg, params, x[:8], y[:8])
        h = 1e-6
        up = list(params)
        dn = list(params)
        up[3] += h
        dn[3] -= h
        fd = (fm.loss(cfg, up, x[:8], y[:8]) - fm.loss(cfg, dn, x[:8], y[:8])) / (2 * h)
        assert abs(fd - g[3]) < 1e-6, (fd, g[3])

        meta = fm.init_meta(cfg, 3)
        support = ([x[0], x[6]], [0, 1])
        query = ([x[1], x[7]], [0, 1])
        stepped = fm.metasgd_step(cfg, meta, [(support, query)], beta=0.05)
        private = fm.metadpsgd_step(cfg, meta, [(support, query)], 9, clip_bound=None, sigma=0.0)
        assert stepped == private

        assert fm.clip_gradient([3.0], [4.0], 2.5) == ([1.5], [2.0])
        sigma = fm.calibrate_sigma(1.0, 1e-3, 0.1, 1000)
        assert sigma > 0
        avg = fm.fedavg([fm.MetaParams([0.0], [0.1]), fm.MetaParams([4.0], [0.1])], [1, 3])
        assert avg.theta == [3.0]
        ind = fm.indicators(3, 1, 2, 4)
        assert (ind["accuracy"], ind["precision"], ind["recall"]) == (0.7, 0.75, 0.6)
        agg = fm.aggregate([{"accuracy": 0.8}, {"accuracy": 1.0}])
        assert abs(agg["accuracy"]["mean"] - 0.9) < 1e-12

        report = json.loads(
            fm.run_scenario(
                "kind = federated\nrounds = 2\neval_tasks = 4\n"
                "[model]\nhidden = 8\n[meta]\ntasks_per_batch = 2\nbatches_per_round = 2\n"
                "[federation]\nclients = 2\n[data]\nresolution = 4\nexamples_per_class = 60\n"
            )
        )
        assert [a["arm"] for a in report["arms"]] == ["centralized", "federated-2"]
    print("python smoke test passed")


if __name__ == "__main__":
    main()
