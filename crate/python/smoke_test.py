"""Smoke test for the smile_py extension.

Build first:  cargo build --release -p smile-py --features extension-module
Then run:     python3 python/smoke_test.py
"""

import importlib.util
import json
import pathlib
import shutil
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parents[1]


def load_extension():
    for profile in ("release", "debug"):
        lib = ROOT / "target" / profile / "libsmile_py.so"
        if lib.exists():
            break
    else:
        sys.exit("libsmile_py.so not found; build the smile-py crate first")
    tmp = pathlib.Path(tempfile.mkdtemp())
    dst = tmp / "smile_py.so"
    shutil.copy(lib, dst)
    spec = importlib.util.spec_from_file_location("smile_py", dst)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    return mod


def main():
    smile = load_extension()

    x, y, lo, hi = smile.gen_monotonic(0.0, 0.6, n=200, seed=1)
    assert len(x) == 200 and len(y) == 200
    assert lo[0] < hi[0]

    cfg = {
        "architecture": {"backboneHidden": [8], "auxHidden": None, "latentDim": 2},
        "pretrainEpochs": 5,
        "trainEpochs": 2,
        "postMaxIters": 20,
        "batchSize": 64,
    }
    prop = json.dumps({"kind": "robustness", "delta": 0.05, "eps": 1.0})
    model, report = smile.train(x, y, prop, lo, hi, json.dumps(cfg))
    report = json.loads(report)
    print("trained:", model, "violBound", report["violBound"])

    p = model.predict([0.0])
    assert isinstance(p, float)
    assert model.predict_rows([[0.0], [0.5]])[0] == p
    assert len(model.box_width([0.0])) == model.latent_dim

    clone = smile.Model.from_json(model.to_json())
    assert clone.predict([0.3]) == model.predict([0.3])

    status, bound = smile.certify(model, prop, lo, hi, t_max=8.0)
    print("certify:", status, bound)
    assert bound >= 0.0
    if report["violBound"] == 0.0:
        assert status == "Infeasible"

    try:
        model.predict([0.0, 1.0])
    except ValueError:
        pass
    else:
        raise AssertionError("dimension mismatch should raise ValueError")

    print("smoke test passed")


if __name__ == "__main__":
    main()
