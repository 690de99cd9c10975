"""Quick end-to-end check of the pyporesim extension.

Build and install first, e.g. `pip install --no-build-isolation crates/python`,
then run `python crates/python/python/smoke_test.py`.
"""

import json
import math
import os
import tempfile

import pyporesim as ps


def close(a, b, rel=1e-9):
    return abs(a - b) <= rel * max(abs(a), abs(b), 1e-300)


def main():
    assert close(ps.contact_area(1.0, 2.0, 1.0), math.pi)

    net = ps.Network.generate("chain", 3)
    assert (net.node_count, net.arc_count) == (3, 2)
    assert all(d == 2.0 for _, _, d, _ in net.arcs())

    grid = ps.Network.generate("grid3d", 2)
    assert (len(grid), grid.arc_count) == (8, 12)

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "net.txt")
        rt = ps.Network.generate("random_tangent", 200, seed=3)
        rt.save(path)
        back = ps.Network.load(path)
        assert back.arcs() == rt.arcs()
        assert back.volumes() == rt.volumes()

    # two unit-volume balls, one explicit flow of 0.1
    pair = ps.Network.from_balls([(0, 0, 0, 1), (0, 0, 2, 1)])
    v = pair.volumes()[0]
    flow = ps.fick_flow(1.0, 0.0, 1.0, 1.0, 0.1, 1.0)
    assert close(flow, -0.1)

    # implicit steps conserve mass and stay non-negative at any step length
    dom = [float(k % 5) for k in range(len(rt))]
    after = ps.implicit_diffusion_step(rt, dom, 40_000.0, 1.0)
    assert close(sum(after), sum(dom), 1e-12)
    assert min(after) >= 0.0
    explicit = ps.explicit_diffusion_step(rt, dom, 40_000.0, 1e-8)
    assert close(sum(explicit), sum(dom), 1e-12)

    # biology conserves carbon and never removes CO2
    p = ps.Params()
    assert p.v_dom == 9.6 and p.kappa_b == 0.001
    x = (0.1, 0.2, 0.3, 0.4, 0.0)
    y = ps.transform_node(x, v, p, 10.0 / ps.SECONDS_PER_DAY)
    assert close(sum(y), sum(x), 1e-12)
    assert y[4] >= x[4]

    d = ps.drain(rt, 0.5)
    assert d["saturation"] >= 0.5
    assert len(d["water"]) == len(rt)

    prof = ps.plane_profile(rt, dom, 400)
    assert close(sum(prof), sum(v for v, (_, _, z) in zip(dom, rt.centers()) if 0 <= z < 400))
    assert close(ps.cosine_similarity(prof, [3 * v for v in prof]), 1.0, 1e-12)

    states = [(1e-4 if k % 10 == 0 else 0.0, 1e-3 * vol, 0.0, 1e-4, 0.0) for k, vol in enumerate(rt.volumes())]
    run = ps.simulate(rt, states, p, t_end=0.02, sample_every=0.01)
    assert len(run["times"]) == 3
    start, end = sum(run["totals"][0]), sum(run["totals"][-1])
    assert close(start, end, 1e-9)

    scn = json.loads(ps.preset("paper-2021"))
    scn.update(
        synthetic={"kind": "random_tangent", "size": 300, "seed": 1},
        t_end_days=None,
        t_end_hours=2.0,
        mb_placement={"type": "spots", "count": 50, "total": 0.104},
    )
    out = ps.run_scenario(json.dumps(scn))
    assert [r[0] for r in out["records"]] == [0.0, 1.0, 2.0]
    co2 = [r[1][4] for r in out["records"]]
    assert co2 == sorted(co2)

    try:
        ps.run_scenario('{"bogus": 1}')
    except ps.PoresimError:
        pass
    else:
        raise AssertionError("bad config accepted")

    print("pyporesim smoke test passed")


if __name__ == "__main__":
    main()
