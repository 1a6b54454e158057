import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from isac_rfid.conic import Status
from isac_rfid.model import (PolarPosition, Scenario, default_params, los_channel,
                             matched_combiner, reference_scenario, tag_user_channel)
from isac_rfid.zf import (DegenerateGeometryError, Dominant, UnreachableTagError,
                          ZfDirections, closed_form_power, dominant_constraint,
                          power_allocation_lp, zf_beams, zf_directions, zf_solution)


def geometry(sc, tag):
    p = sc.params
    g = los_channel(p, tag)
    return g, sc.user_channels(), sc.tag_user_channels(tag)


def leakages(dirs: ZfDirections, g, Hu):
    out = [abs(np.vdot(g, f)) / np.linalg.norm(g) for f in dirs.comm]
    out += [abs(np.vdot(h, dirs.sensing)) / np.linalg.norm(h) for h in Hu]
    for u, h in enumerate(Hu):
        out += [abs(np.vdot(h, f)) / np.linalg.norm(h) for l, f in enumerate(dirs.comm) if l != u]
    return out


def test_no_users_gives_matched_beam():
    g = los_channel(default_params(4, num_users=0), PolarPosition(3.0, 70.0))
    dirs = zf_directions(g, np.zeros((0, 4)))
    np.testing.assert_allclose(dirs.sensing, g / np.linalg.norm(g), atol=1e-14)


def test_orthogonal_channels_are_kept():
    g = np.array([1, 1, 0, 0], dtype=complex)
    h = np.array([0, 0, 1, -1j])
    dirs = zf_directions(g, h[None])
    np.testing.assert_allclose(abs(np.vdot(dirs.sensing, g / np.linalg.norm(g))), 1.0)
    np.testing.assert_allclose(abs(np.vdot(dirs.comm[0], h / np.linalg.norm(h))), 1.0)


def test_null_at_reference_geometry():
    sc = reference_scenario(4)
    g, Hu, _ = geometry(sc, PolarPosition(6.0, 90.0))
    dirs = zf_directions(g, Hu)
    assert abs(np.vdot(g, dirs.comm[0])) <= 1e-10 * np.linalg.norm(g)
    assert np.linalg.norm(dirs.sensing) == pytest.approx(1.0, abs=1e-12)


def test_collinear_tag_and_user_rejected():
    sc = reference_scenario(4)
    with pytest.raises(DegenerateGeometryError):
        zf_solution(PolarPosition(2.0, 135.0), sc.users, sc.params)


def test_unreachable_tag():
    g = np.array([1, 0, 0, 0], dtype=complex)
    with pytest.raises(UnreachableTagError):
        dominant_constraint(g, np.array([0, 1, 0, 0], dtype=complex), matched_combiner(g),
                            default_params(4))


@pytest.mark.parametrize("d,which", [(10.0, Dominant.TAG_ACTIVATION),
                                     (25.0, Dominant.READER_DETECTION)])
def test_dominant_constraint_regions(d, which):
    p = default_params(4)
    g = los_channel(p, PolarPosition(d, 60.0))
    dom = dominant_constraint(g, g / np.linalg.norm(g), matched_combiner(g), p)
    assert dom.which is which
    assert dom.required_sensing_power == max(dom.tag_bound, dom.reader_bound)


def test_closed_form_without_backscatter():
    p = default_params(4).replace(backscatter_efficiency=1e-300)
    sc = Scenario(p, (PolarPosition(5.0, 135.0),))
    g, Hu, htu = geometry(sc, PolarPosition(4.0, 60.0))
    dirs = zf_directions(g, Hu)
    alloc = closed_form_power(dirs, g, htu, p)
    assert alloc.comm[0] == pytest.approx(p.gamma_user * p.sigma2_user / dirs.user_gains[0],
                                          rel=1e-12)


def test_reference_power_level():
    sc = reference_scenario(4)
    sol = zf_solution(PolarPosition(6.0, 45.0), sc.users, sc.params)
    assert sol is not None and sol.total_power < 1.0


def test_reference_infeasible_and_near():
    sc = reference_scenario(4)
    assert zf_solution(PolarPosition(12.5, 45.0), sc.users, sc.params) is None
    near = zf_solution(PolarPosition(2.0, 45.0), sc.users, sc.params)
    assert near is not None and near.total_power < 0.1


def random_tag_geometry(seed):
    rng = np.random.default_rng(seed)
    M = int(rng.integers(2, 9))
    U = int(rng.integers(0, min(M - 1, 3) + 1))
    users = tuple(PolarPosition(rng.uniform(2, 10), rng.uniform(0, 180)) for _ in range(U))
    sc = Scenario(default_params(M, num_users=U), users)
    tag = PolarPosition(rng.uniform(0.5, 8), rng.uniform(0, 180))
    return sc, tag


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_zf_nulls_property(seed):
    sc, tag = random_tag_geometry(seed)
    g, Hu, _ = geometry(sc, tag)
    try:
        dirs = zf_directions(g, Hu)
    except DegenerateGeometryError:
        return
    assert max(leakages(dirs, g, Hu), default=0.0) <= 1e-10
    norms = [np.linalg.norm(dirs.sensing), *np.linalg.norm(dirs.comm, axis=1)]
    np.testing.assert_allclose(norms, 1.0, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_closed_form_constraints_active(seed):
    sc, tag = random_tag_geometry(seed)
    p = sc.params
    g, Hu, htu = geometry(sc, tag)
    try:
        sol, dom = zf_beams(g, Hu, htu, p)
    except DegenerateGeometryError:
        return
    if sol is None:
        return
    r = sol.sinrs
    assert r.tag >= p.gamma_tag * (1 - 1e-8) and r.reader >= p.gamma_reader * (1 - 1e-8)
    if dom.which is Dominant.TAG_ACTIVATION:
        assert r.tag == pytest.approx(p.gamma_tag, rel=1e-8)
    else:
        assert r.reader == pytest.approx(p.gamma_reader, rel=1e-8)
    for val in r.users:
        assert val == pytest.approx(p.gamma_user, rel=1e-8)


def test_lp_matches_closed_form_in_downlink_region():
    rng = np.random.default_rng(11)
    sc = reference_scenario(4)
    p = sc.params
    checked = 0
    while checked < 20:
        tag = PolarPosition(rng.uniform(1, 10), rng.uniform(0, 125))
        g, Hu, htu = geometry(sc, tag)
        dirs = zf_directions(g, Hu)
        cf = closed_form_power(dirs, g, htu, p)
        if not cf.feasible:
            continue
        lp = power_allocation_lp(dirs, g, Hu, htu, matched_combiner(g), p)
        assert lp.feasible
        assert lp.total == pytest.approx(cf.total, rel=1e-6)
        checked += 1


def test_lp_infeasible_for_huge_tag_threshold():
    sc = reference_scenario(4)
    p = sc.params.replace(tag_sensitivity=1e3)
    tag = PolarPosition(3.0, 60.0)
    g, Hu, htu = geometry(sc, tag)
    lp = power_allocation_lp(zf_directions(g, Hu), g, Hu, htu, matched_combiner(g), p)
    assert lp.status is Status.INFEASIBLE


def test_lp_against_grid_search():
    sc = reference_scenario(4)
    p = sc.params
    tag = PolarPosition(8.0, 70.0)
    g, Hu, htu = geometry(sc, tag)
    dirs = zf_directions(g, Hu)
    w = matched_combiner(g)
    lp = power_allocation_lp(dirs, g, Hu, htu, w, p)
    # brute force over (Ps, Pu) on a 100 x 100 grid bracketing the optimum
    from isac_rfid.model import BeamformingSolution, realized_sinrs
    best = np.inf
    for Ps in np.linspace(lp.sensing * 0.999, lp.sensing * 1.02, 100):
        for Pu in np.linspace(lp.comm[0] * 0.999, lp.comm[0] * 1.02, 100):
            sol = BeamformingSolution(np.sqrt(Ps) * dirs.sensing, np.sqrt(Pu) * dirs.comm, w)
            r = realized_sinrs(sol, g, Hu, htu, p)
            if (r.tag >= p.gamma_tag and r.reader >= p.gamma_reader
                    and r.users[0] >= p.gamma_user):
                best = min(best, Ps + Pu)
    assert best == pytest.approx(lp.total, rel=5e-3)
    assert best >= lp.total * (1 - 1e-9)


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 125), st.floats(0.5, 20))
def test_sensing_power_nondecreasing_in_distance(theta, d):
    p = default_params(4)
    def req(dist):
        g = los_channel(p, PolarPosition(dist, theta))
        return dominant_constraint(g, g / np.linalg.norm(g), matched_combiner(g),
                                   p).required_sensing_power
    assert req(d * 1.1) >= req(d)


def test_dominant_bound_implies_both_constraints():
    sc = reference_scenario(4)
    p = sc.params
    for d in (5.0, 15.0, 24.0, 30.0):
        tag = PolarPosition(d, 60.0)
        g = los_channel(p, tag)
        h = [tag_user_channel(tag, u, p.wavelength) for u in sc.users]
        sol, dom = zf_beams(g, sc.user_channels(), h, p.replace(total_power=1e3))
        assert sol.sinrs.tag >= p.gamma_tag * (1 - 1e-9)
        assert sol.sinrs.reader >= p.gamma_reader * (1 - 1e-9)
