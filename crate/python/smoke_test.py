"""Smoke test for the noma_offload extension module.

Build the extension and put it on the path first, e.g.

    cargo build --release -p noma-offload-python
    cp target/release/libnoma_offload.so python/noma_offload.so
    python3 python/smoke_test.py
"""

import math

import noma_offload as no


def main():
    s = no.Scenario(4)
    assert s.n_devices == 4 and s.k_common_bits == 6e6
    assert math.isclose(s.noise_power(), 10 ** (-20.4) * 1e6, rel_tol=1e-12)

    ch = no.sample_channel(s, 7)
    assert len(ch) == 4
    assert ch.gamma == sorted(ch.gamma, reverse=True)
    assert sorted(ch.order) == [0, 1, 2, 3]

    prop = no.solve(s, ch)
    assert prop.status == "feasible", prop
    assert min(prop.individual_bits) >= prop.objective * (1 - 1e-9)
    assert sum(prop.common_bits) >= s.k_common_bits * (1 - 1e-6)
    assert all(b >= a - 1e-9 * max(1.0, a) for a, b in zip(prop.phi_trace, prop.phi_trace[1:]))

    snoma = no.solve(s, ch, "s-noma")
    soma = no.solve(s, ch, "s-oma")
    assert snoma.selected_device is not None and soma.oma_slots is not None
    assert prop.objective >= snoma.objective * (1 - 1e-6)

    huge = no.Scenario(2, k_common_bits=1e9)
    res = no.solve(huge, no.sample_channel(huge, 0))
    assert res.status == "infeasible" and res.objective == 0.0

    assert math.isclose(no.jain_index([1.0, 2.0, 3.0]), 6 / 7)
    assert no.jain_index([0.0, 0.0]) == 1.0
    try:
        no.jain_index([1.0, -1.0])
    except ValueError:
        pass
    else:
        raise AssertionError("negative entries must be rejected")

    b, d, q = no.taylor_terms(1.0, [1.0], 1.0)
    assert math.isclose(b[0], 1.0) and math.isclose(d[0] + q[0], 1.0)

    s2 = no.Scenario(2)
    ch2 = no.sample_channel(s2, 0)
    sca = no.solve(s2, ch2).objective
    oracle = no.grid_oracle(s2, ch2, 32)
    assert oracle is not None and abs(sca - oracle) <= 0.05 * oracle, (sca, oracle)

    print("proposed", prop.objective, "s-noma", snoma.objective, "s-oma", soma.objective)
    print("smoke test passed")


if __name__ == "__main__":
    main()
