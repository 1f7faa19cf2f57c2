"""Smoke test for the rerank_flops extension module.

Build and install first, e.g. `maturin build --release && pip install target/wheels/*.whl`
from crates/py, then run `python python/smoke_test.py`.
"""

import json
import os
import tempfile

import rerank_flops as rf


def main():
    toy = rf.ArchConfig("toy", "decoder-only", 2, 8, 32, 2, 2)
    assert rf.flops_ctx(toy, 4) == 13312
    assert rf.flops_opt(toy, 4, 3) == 10176
    assert rf.flops_call(toy, 4, 3) == 23488 == rf.oracle_flops_call(toy, 4, 3)
    assert rf.breakdown(toy, 4, 3)["total"] == 23488

    assert "flan-t5-large" in rf.models()
    large = rf.ArchConfig.load("flan-t5-large")
    assert large.family == "encoder-decoder"
    assert rf.flops_call(large, 152, 0) == 90_250_936_320

    allpair = rf.simulate("pairwise.allpair", n_docs=100, model="flan-t5-xl")
    assert allpair["calls"] == 9900
    assert abs(allpair["petaflops"] - 6.826) / 6.826 < 0.15
    sw = rf.simulate("listwise.generation", window=4, step=2, repeats=5)
    assert sw["calls"] == 245

    assert abs(rf.ndcg_at_k(["d2", "d1"], {"d1": 3, "d2": 1}) - 0.7098) < 1e-4
    assert abs(rf.rpp(0.557, 9 * 10**12) - 61.888) < 1e-2
    assert abs(rf.qpp([9 * 10**12]) - 111.11) < 1e-2

    try:
        rf.ArchConfig.load("nonexistent")
    except ValueError as e:
        assert "flan-t5-large" in str(e)
    else:
        raise AssertionError("unknown model accepted")

    with tempfile.TemporaryDirectory() as d:
        run = os.path.join(d, "run")
        qrels = os.path.join(d, "qrels")
        with open(run, "w") as f:
            f.write("".join(f"q1 Q0 d{i} {i + 1} {20 - i} bm25\n" for i in range(20)))
        with open(qrels, "w") as f:
            f.write("q1 0 d19 2\n")
        report = json.loads(rf.evaluate(run, qrels, "setwise.heapsort"))
        assert report[0]["queries"][0]["ndcg"] == 1.0

    print("smoke test passed")


if __name__ == "__main__":
    main()
