"""Smoke test for the nustab Python module.

Build and install first:
    pip install -e crates/py --no-build-isolation
then run:
    python python/smoke_test.py
"""

import json
import math

import nustab

CONFIG = {
    "A": [[1, -2, 0], [2, 1, 0], [0, 0, 0.5]],
    "B": [[0.5], [2], [1]],
}


def main():
    plant = nustab.Plant.from_config(json.dumps(CONFIG))
    assert (plant.n, plant.m) == (3, 1)

    cert = nustab.design(plant)
    assert 0.63 < cert.h_star < 0.65, cert.h_star
    assert not cert.right_censored
    print(f"h_star = {cert.h_star:.6f}, cond(T) = {cert.cond_t:.3f}, K_c = {cert.K_c}")

    again = nustab.Certificate.from_json(cert.to_json())
    again.validate(plant)
    assert again.h_star == cert.h_star

    gain = nustab.gain_at(plant, cert, 0.3)
    assert gain["sigma_achieved"] < 1.0
    a = nustab.residual_spectrum(plant, cert, 0.3)
    assert abs(a[0]) < 1e-12 and a[-1] < 1.0

    periods = nustab.gen_schedule("uniform_random", 0.01, 0.6, 100, seed=1)
    run = nustab.simulate(plant, cert, periods, [1.0, 1.0, 1.0])
    assert run["lyapunov_ok"]
    lyap = run["lyap"]
    assert all(b < a for a, b in zip(lyap, lyap[1:]))
    final = math.sqrt(sum(v * v for v in run["x"][-1]))
    assert final <= 1e-3 * math.sqrt(3.0), final
    print(f"|x_100| / |x_0| = {final / math.sqrt(3.0):.3e}")

    probes, violations, worst = nustab.verify(plant, cert, refinement=8)
    assert not violations and worst < 1.0
    print(f"verify: {probes} probes, max sigma_bar = {worst:.9f}")

    header = nustab.sweep_csv(plant, cert, 0.01, 1.0, 100).splitlines()[0]
    assert header == "h,a_1,a_2,a_3,sigma_bar,s_1,s_2,s_3", header

    e = nustab.expm([[0.0, 1.0], [-1.0, 0.0]])
    assert abs(e[0][0] - math.cos(1.0)) < 1e-14

    try:
        nustab.Plant([[1, 0], [0, 2]], [[1], [0]])
    except nustab.ValidationError as err:
        print(f"rejected: {err}")
    else:
        raise AssertionError("unstabilizable plant accepted")

    try:
        nustab.design(plant, gamma=0.9)
    except nustab.SynthesisError as err:
        print(f"gamma 0.9: {err}")
    else:
        raise AssertionError("gamma 0.9 should have no stabilizable period")

    print("smoke test passed")


if __name__ == "__main__":
    main()
