"""Smoke test for the slipscm extension module.

    maturin build --release -o dist && pip install dist/slipscm-*.whl
    python python/smoke_test.py
"""

import math

import slipscm


def main():
    p = slipscm.ModelParams.table2()
    assert p.k == 2500.0 and p.crank == "omega=20"
    assert abs(p.touchdown_height() - 0.4) < 1e-12
    print(p)

    nxt = slipscm.apex_return(p, 0.6, 30.0)
    assert 0.4 < nxt < 0.6, nxt

    sim = slipscm.simulate(p, 0.6, 30.0, strides=2)
    assert sim["apexes"][0] == 0.6 and len(sim["apexes"]) == 3
    assert len(sim["t"]) == len(sim["y"]) > 100
    assert set(sim["phase"]) == {"descent", "compression", "decompression", "ascent"}

    hat = slipscm.predict(p, 0.6, 30.0, liftoff="exact")
    assert hat["t_lo"] > hat["t_b"] > 0.0
    assert math.isclose(hat["y_a_next"], hat["y_lo"] + hat["ydot_lo"] ** 2 / (2 * p.g))

    inst = p.with_crank("instant")
    g = slipscm.grid(inst, ya_count=5, theta2_count=4)
    assert len(g["theta2_deg"]) == 4 and g["e_ap_mean"] >= 0.0

    target = slipscm.predict(p, 0.6, 40.0, liftoff="exact")["y_a_next"]
    theta, predicted, saturated = slipscm.deadbeat(p, 0.6, target, liftoff="exact")
    assert not saturated and abs(predicted - target) < 1e-6

    y = slipscm.fixed_point(p, 40.0, map="exact")
    assert y is not None
    lam = slipscm.eigen_apex(p, 40.0, y, map="exact")
    assert 0.0 < lam < 1.0, lam

    try:
        slipscm.apex_return(p, 0.3, 30.0)
    except slipscm.SlipError as e:
        assert "NoTouchdown" in str(e)
    else:
        raise AssertionError("expected SlipError")

    try:
        slipscm.ModelParams(d_bar=1000.0)
    except slipscm.SlipError as e:
        assert "OverDamped" in str(e)
    else:
        raise AssertionError("expected SlipError")

    print(f"apex 0.6 -> {nxt:.6f} m, fixed point at 40 deg {y:.6f} m (lambda {lam:.3f})")
    print("smoke test passed")


if __name__ == "__main__":
    main()
