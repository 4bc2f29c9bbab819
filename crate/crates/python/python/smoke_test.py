"""Smoke test for the pymanet extension: python smoke_test.py"""

import math

import pymanet


def main():
    thr = pymanet.rx_threshold()
    assert math.isclose(pymanet.received_power(250.0), thr, rel_tol=1e-12)
    assert pymanet.received_power(100.0) > thr
    hand = 0.28183815 * 1.5**4 / 150.0**4
    assert math.isclose(pymanet.received_power(150.0), hand, rel_tol=1e-12)

    assert math.isclose(pymanet.default_channel_occupation(), 686e-6, rel_tol=1e-12)
    assert math.isclose(pymanet.fpd(2e-9, 1e-3), 2e-6, rel_tol=1e-12)
    assert math.isclose(
        pymanet.discovery_period(1.862e-3, 0.872e-3, 1.846e-3, 1, 2), 7.298e-3, rel_tol=1e-12
    )

    # a quadratic is reproduced exactly
    q = lambda t: 3.0 - 0.5 * t + 0.25 * t * t
    samples = [(t, q(t)) for t in (0.0, 1.0, 2.5)]
    assert math.isclose(pymanet.lagrange_predict(samples, 4.0), q(4.0), rel_tol=1e-12)
    try:
        pymanet.lagrange_predict(samples[:2], 4.0)
    except ValueError:
        pass
    else:
        raise AssertionError("two samples should not predict")

    raw = pymanet.encode_rreq(1, 7, 3, 9, 2)
    assert isinstance(raw, bytes)
    m = pymanet.decode_rreq(raw)
    assert (m["src_addr"], m["src_seq"], m["broadcast_id"], m["dest_addr"], m["dest_seq"]) == (1, 7, 3, 9, 2)
    assert m["hop_count"] == 0

    cfg = "nodes = 10\nwidth = 500\nheight = 300\nduration = 10\nstart_spread = 2\n"
    r = pymanet.run("lo-ppaodv", 0.0, 2, 1, config=cfg)
    assert r["protocol"] == "lo-ppaodv" and r["nodes"] == 10
    assert r["data_generated"] > 0
    assert 0.0 <= r["pdf"] <= 1.0
    assert r == pymanet.run("lo-ppaodv", 0.0, 2, 1, config=cfg)

    try:
        pymanet.run("olsr", 0.0, 2, 1)
    except ValueError:
        pass
    else:
        raise AssertionError("unknown protocol accepted")

    print("pymanet smoke test ok:", {k: r[k] for k in ("pdf", "nrl", "route_errors")})


if __name__ == "__main__":
    main()
