"""Smoke tests for the python bindings: construction, core operations, a few
frozen oracles, and the exception mapping.  Runs standalone (python3 file.py)
with the package directory and the built module on PYTHONPATH."""

import math

import wtransport as wt


def test_grid_and_density():
    nodes = wt.grid_nodes(64)
    assert len(nodes) == 64 and abs(nodes[1] - wt.TWO_PI / 64) < 1e-15
    rho = wt.make_density(wt.GridField([1.0 + 0.3 * math.cos(x) for x in nodes]))
    assert abs(wt.integrate(wt.GridField(list(rho.values))) - 1.0) < 1e-12
    assert min(rho.values) > 0.0


def test_projection_idempotent_zero_mean():
    n = 128
    nodes = wt.grid_nodes(n)
    rho = wt.make_density(wt.GridField([1.0 + 0.3 * math.cos(x) for x in nodes]))
    v = wt.GridField([math.sin(2 * x) + 0.5 * math.cos(3 * x) for x in nodes])
    p1 = wt.project(rho, v)
    p2 = wt.project(rho, p1)
    assert max(abs(a - b) for a, b in zip(p1.values, p2.values)) < 1e-9
    mean = sum(a * b for a, b in zip(p1.values, rho.values)) * wt.TWO_PI / n
    assert abs(mean) < 1e-9


def test_deterministic_transport_conserves():
    n = 128
    nodes = wt.grid_nodes(n)
    rho = wt.make_density(wt.GridField([1.0 + 0.3 * math.cos(x) for x in nodes]))
    g0 = wt.GridField([math.sin(x) for x in nodes])
    res = wt.integrate_parallel_det(wt.VelocityPotential([(1, 0.0, 1.0)]), rho, g0, 0.2, 1e-3)
    assert res.norm_drift_rel <= 1e-8
    assert res.max_abs_mean_g <= 1e-10
    assert len(res.records) == 201 and res.records[0].t == 0.0


def test_flow_pushforward_mass():
    st = wt.FlowState.identity(128)
    wt.advance_flow(st, wt.VelocityPotential([(1, 0.2, 0.7)]), 0.3, 1e-3)
    assert abs(st.t - 0.3) < 1e-12
    assert wt.jacobian_consistency_gap(st) < 1e-9
    rho = wt.make_density(wt.GridField([1.0] * 128))
    pushed = wt.push_density(rho, st)
    assert abs(wt.integrate(wt.GridField(list(pushed.values))) - 1.0) < 1e-10


def test_driver_restriction_and_coupling():
    a = wt.sample_driver(7, 1e-3, 50, 2)
    b = wt.sample_driver(7, 1e-3, 50, 6)
    assert a.increment(13, 1) == b.increment(13, 1)
    c = a.coarsened(2)
    assert abs(c.increment(4, 0) - (a.increment(8, 0) + a.increment(9, 0))) < 1e-18


def test_stochastic_batch():
    n = 128
    nodes = wt.grid_nodes(n)
    rho = wt.make_density(wt.GridField([1.0 + 0.3 * math.cos(x) for x in nodes]))
    g0 = wt.GridField([math.sin(x) for x in nodes])
    chans = wt.FourierChannels(wt.NoiseBasis(4, 3.0))
    rep = wt.stoch_transport_batch(11, g0, rho, chans, 8, 1e-3, 0.1, wt.Scheme.STRAT_HEUN, 1)
    assert rep.paths == 8 and len(rep.norm_drifts) == 8
    assert rep.worst_norm_drift <= 5e-3
    assert rep.worst_kunita_gap <= 1e-10


def test_functional_oracles():
    n = 128
    nodes = wt.grid_nodes(n)
    uni = wt.make_density(wt.GridField([1.0] * n))
    assert abs(wt.evaluate(wt.InternalEnergy.entropy(), uni) - math.log(1.0 / wt.TWO_PI)) < 1e-13
    sin_field = wt.GridField([math.sin(x) for x in nodes])
    d1 = wt.first_derivative(wt.PotentialEnergy(sin_field), uni, sin_field)
    assert abs(d1 - 0.5) < 1e-13  # int cos^2 dmu on the uniform measure
    assert wt.functional_name(wt.InternalEnergy.power(2.0)) == "power"


def test_ito_verify_quick():
    rho = wt.make_density(wt.GridField([1.0] * 128))
    chans = wt.PotentialChannels([wt.VelocityPotential([(1, 0.0, 1.0)])], [1.0])
    rep = wt.ito_verify(wt.InternalEnergy.entropy(), rho, chans, 42, 64, 1e-3, 0.05, 5)
    assert rep.passed and rep.martingale_pass and len(rep.blocks) == 5
    assert abs(rep.z_score) <= 3.0


def test_moment_bound_quick():
    rep = wt.moment_bound_check(3, 4, 3.0, 128, 1e-3, 0.1, 2, 64)
    assert rep.estimate <= rep.bound
    assert rep.exact <= rep.bound


def test_exception_mapping():
    try:
        wt.InternalEnergy.power(0.5)
        raise AssertionError("power(0.5) should be rejected")
    except ValueError:
        pass
    st = wt.FlowState.identity(64)
    try:
        wt.advance_flow(st, wt.VelocityPotential([(1, 0.0, 50.0)]), 1.0, 0.5)
        raise AssertionError("violent step should break the diffeomorphism")
    except ArithmeticError:
        pass


if __name__ == "__main__":
    failed = 0
    for name, fn in sorted(globals().items()):
        if name.startswith("test_") and callable(fn):
            try:
                fn()
                print(f"ok   {name}")
            except AssertionError as exc:
                print(f"FAIL {name}: {exc}")
                failed += 1
    raise SystemExit(1 if failed else 0)
