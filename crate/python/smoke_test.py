"""Smoke test for the dcne Python extension.

Build first, e.g. `maturin develop -m crates/python/Cargo.toml`, or
`cargo build --release -p dcne-py --features extension-module` and copy
`target/release/libdcne_py.so` to `dcne.so` on PYTHONPATH.
"""

import json
import sys
import tempfile
from pathlib import Path

import dcne


def check(cond, what):
    if not cond:
        sys.exit(f"FAIL: {what}")
    print(f"ok: {what}")


def main():
    net = dcne.Network.synthetic()
    check(net.condition_count >= 300, f"synthetic network has {net.condition_count} conditions")

    labels = dcne.dbscan([[0.0, 0.0]] * 5 + [[9.0, 9.0]] * 5)
    check(labels == [0] * 5 + [1] * 5, "dbscan separates two blobs")

    w, h, trace = dcne.nnmf([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]], components=1)
    check(all(b <= a + 1e-9 for a, b in zip(trace, trace[1:])), "nnmf objective is non-increasing")

    check(dcne.iou([[0.0, 1.0]], [[0, 255]], 0) == 1.0, "iou of a perfect map")

    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        manifest = dcne.synth(str(tmp / "data"), images_per_class=5)
        check(Path(manifest).exists(), "synthetic dataset written")

        c, hh, ww = net.input_shape
        gray = [[[0.5] * ww for _ in range(hh)] for _ in range(c)]
        ex = net.explain(gray, components=3, base_size=30)
        check(len(ex["concise_maps"]) == 3, "single-image explanation has 3 concise maps")

        index = json.loads(dcne.explain_dataset(manifest, str(tmp / "out"), components=4, base_size=60))
        methods = sorted({e["method"] for e in index["entries"]})
        check(methods == ["crp-4", "crp-60", "dcne"], f"explain wrote methods {methods}")

        report = json.loads(
            dcne.evaluate(manifest, [str(tmp / "out" / m) for m in ("dcne", "crp-60")], str(tmp / "eval"))
        )
        ratio = {s["method"]: s["complexity_per_image"] for s in report["summary"]}
        check(ratio == {"dcne": 4.0, "crp-60": 60.0}, f"complexity per image {ratio}")


if __name__ == "__main__":
    main()
