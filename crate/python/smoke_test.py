"""Smoke test for the terrain_pitch extension module.

Build and install first:  maturin develop --release -m crates/python/Cargo.toml
"""

import math
import random
import sys
import tempfile
from pathlib import Path

import terrain_pitch as tp


def main() -> int:
    assert tp.max_episode_steps(0.1) == 320
    assert abs(tp.penalty_distance(0.3, 2) - 0.3) < 1e-12
    assert abs(tp.base_reward(0.1) - 240.0) < 1e-9

    field = tp.Heightfield()
    nx, nz = field.dims
    assert nx > 0 and nz > 0
    assert field.area_of(-1.0, 0.0) == "flat"
    assert field.height_at(-1.0, 0.0) == 0.0
    rough = field.heights_in("rough")
    assert max(rough) - min(rough) > 0.0

    env = tp.Env(field, "flat", seed=1)
    obs = env.observe()
    assert len(obs) == 10
    for _ in range(50):
        obs, reward, done = env.step(1.0, 1.0)
        assert math.isfinite(reward)
    assert env.pose()[3] == 0.0

    stds = tp.rolling_std([1.0, -1.0] * 10, 4)
    assert all(abs(s - 1.0) < 1e-12 for s in stds)

    rng = random.Random(0)
    data = [abs(rng.gauss(0.05, 0.01)) for _ in range(500)] + [abs(rng.gauss(0.11, 0.03)) for _ in range(500)]
    gmm = tp.fit_gmm(data)
    flat = gmm.alignment.index("flat")
    assert abs(gmm.means[flat] - 0.05) < 0.01
    assert gmm.classify([0.05, 0.2]) == ["flat", "rough"]
    assert abs(sum(gmm.responsibilities(0.08)) - 1.0) < 1e-12

    with tempfile.TemporaryDirectory() as out:
        tp.run_pipeline(out, steps=2304, stage="gen-terrain")
        tp.run_pipeline(out, steps=2304, stage="train")
        ckpt = tp.Checkpoint.load(str(Path(out) / "models" / "general.ckpt"))
        assert ckpt.stage == "general"
        loaded = tp.Heightfield.load(str(Path(out) / "terrain" / "heightfield.bin"))
        sin_x, sin_z = tp.collect(ckpt, loaded, "flat", n_steps=120, discard=20)
        assert len(sin_x) == 100 and all(v == 0.0 for v in sin_x + sin_z)
        try:
            tp.run_pipeline(out, stage="report")
        except RuntimeError as e:
            assert "run sweep first" in str(e)
        else:
            raise AssertionError("report without sweep should fail")

    print("terrain_pitch smoke test passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
