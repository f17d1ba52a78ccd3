"""Quick check that the extension imports and its main entry points run.

    pip install --no-build-isolation -e crates/py
    python python/smoke_test.py
"""

import math
import os
import tempfile

import veegan


def main():
    ring = veegan.Mixture.ring()
    assert ring.n_components == 8 and ring.dim == 2
    data = ring.sample(2000, seed=1)
    m = ring.evaluate(data)
    assert m["modes"] == 8 and m["hq_fraction"] > 0.95, m
    assert veegan.Mixture.from_json(ring.to_json()).means == ring.means

    model = veegan.train(ring, "VEEGAN", seed=3, steps=50, batch_size=32, gen_hidden=[16], rec_hidden=[16], disc_hidden=[16])
    assert model.method == "VEEGAN"
    xs = model.sample(10, seed=0)
    assert len(xs) == 10 and all(len(r) == 2 and all(math.isfinite(v) for v in r) for r in xs)
    again = veegan.train(ring, "VEEGAN", seed=3, steps=50, batch_size=32, gen_hidden=[16], rec_hidden=[16], disc_hidden=[16])
    assert again.to_bytes() == model.to_bytes()
    cols, rows = model.trace()
    assert cols == ["disc_loss", "recon_loss", "gen_loss"] and rows[-1][0] == 49, (cols, rows[-1])
    print("eval", model.evaluate(ring, seed=0, n_samples=500))

    try:
        veegan.train(ring, "VEEGAN", batch_sise=3)
    except ValueError as e:
        assert "batch_sise" in str(e)
    else:
        raise AssertionError("unknown key accepted")

    lhs, rhs = veegan.bound_point(0.0, 0.0, 1.0)
    assert abs(lhs - rhs) < 1e-9
    points, margin, violations = veegan.check_bound()
    assert points == 21 * 21 * 5 and violations == 0 and margin >= -1e-9

    worst = max(err for _, err in veegan.grad_check(0))
    assert worst < 1e-4, worst

    with tempfile.TemporaryDirectory() as d:
        cfg = os.path.join(d, "smoke.cfg")
        with open(cfg, "w") as f:
            f.write('[experiment]\nmethods = ["GAN", "VEEGAN"]\nn_runs = 2\n[trainer]\nsteps = 0\n')
        csv = veegan.run(cfg, os.path.join(d, "out"))
        assert csv.splitlines()[1].startswith("method,run,seed"), csv

    print("smoke test ok")


if __name__ == "__main__":
    main()
