import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from isac_rfid.joint import (Designer, SocpInstance, check_feasibility, design_single,
                             joint_min_power, max_interrogation_distance)
from isac_rfid.model import PolarPosition, Scenario, default_params, reference_scenario
from isac_rfid.zf import dominant_constraint, zf_solution


def test_no_users_matched_beam_at_dominant_power():
    sc = Scenario(default_params(4, num_users=0), ())
    inst = SocpInstance.at(PolarPosition(5.0, 60.0), sc)
    sol = joint_min_power(inst)
    g = inst.g
    dom = dominant_constraint(g, g / np.linalg.norm(g), inst.combiner, sc.params)
    assert sol.total_power == pytest.approx(dom.required_sensing_power, rel=1e-6)
    cos = abs(np.vdot(sol.sensing, g)) / (np.linalg.norm(sol.sensing) * np.linalg.norm(g))
    assert cos == pytest.approx(1.0, abs=1e-6)


def test_joint_saves_power_at_low_user_target():
    sc = reference_scenario(4, user_sinr_db=0.0)
    tag = PolarPosition(6.0, 45.0)
    joint = design_single(tag, sc, Designer.JOINT)
    zf = design_single(tag, sc, Designer.ZF)
    assert joint.total_power < zf.total_power


def test_joint_close_to_zf_at_high_user_target():
    sc = reference_scenario(4, user_sinr_db=10.0)
    tag = PolarPosition(6.0, 45.0)
    joint = design_single(tag, sc, Designer.JOINT)
    zf = design_single(tag, sc, Designer.ZF)
    assert 10 * np.log10(zf.total_power / joint.total_power) <= 0.5


@pytest.mark.parametrize("d,expected", [(1.0, True), (100.0, False)])
def test_feasibility_examples(d, expected):
    sc = reference_scenario(4)
    assert check_feasibility(SocpInstance.at(PolarPosition(d, 60.0), sc)) is expected


def test_infeasible_for_huge_user_target():
    sc = reference_scenario(4, user_sinr_db=200.0)
    assert not check_feasibility(SocpInstance.at(PolarPosition(2.0, 60.0), sc))


def random_instance(seed):
    rng = np.random.default_rng(seed)
    M = int(rng.integers(2, 9))
    U = int(rng.integers(0, min(M - 1, 2) + 1))
    users = tuple(PolarPosition(rng.uniform(2, 10), rng.uniform(0, 180)) for _ in range(U))
    sc = Scenario(default_params(M, num_users=U, user_sinr_db=float(rng.uniform(0, 10))), users)
    tag = PolarPosition(rng.uniform(0.5, 10), rng.uniform(0, 180))
    return sc, tag


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_socp_solution_meets_thresholds_and_sandwich(seed):
    sc, tag = random_instance(seed)
    p = sc.params
    sol = design_single(tag, sc, Designer.JOINT)
    if sol is None:
        return
    r = sol.sinrs
    assert r.tag >= p.gamma_tag * (1 - 1e-6)
    assert r.reader >= p.gamma_reader * (1 - 1e-6)
    assert all(v >= p.gamma_user * (1 - 1e-6) for v in r.users)
    assert sol.total_power <= p.total_power * (1 + 1e-6)
    # the dominant sensing constraint is active
    slack = min(r.tag / p.gamma_tag, r.reader / p.gamma_reader) - 1
    assert slack <= 1e-6
    try:
        zf = zf_solution(tag, sc.users, p)
    except ValueError:
        return
    if zf is not None:
        assert sol.total_power <= zf.total_power * (1 + 1e-6)


def test_phase_invariance_of_optimum():
    sc = reference_scenario(4)
    inst = SocpInstance.at(PolarPosition(7.0, 80.0), sc)
    base = joint_min_power(inst).total_power
    rot = SocpInstance(inst.g * np.exp(0.7j), inst.user_channels * np.exp(-1.3j),
                       inst.h_tu, inst.params)
    assert joint_min_power(rot).total_power == pytest.approx(base, rel=1e-8)


def test_max_distance_reference_values():
    r4 = max_interrogation_distance(45.0, reference_scenario(4), Designer.JOINT)
    r8 = max_interrogation_distance(45.0, reference_scenario(8), Designer.JOINT)
    assert r4.distance == pytest.approx(12.0, abs=1.0)
    assert r8.distance == pytest.approx(17.0, abs=1.0)
    assert r8.distance > r4.distance


def test_max_distance_dip_at_user_direction():
    sc = reference_scenario(4)
    at_user = max_interrogation_distance(135.0, sc, Designer.JOINT).distance
    near = [max_interrogation_distance(a, sc, Designer.JOINT).distance for a in (125.0, 145.0)]
    assert at_user < min(near)


def test_max_distance_zero_when_infeasible_everywhere():
    sc = reference_scenario(4, user_sinr_db=200.0)
    r = max_interrogation_distance(60.0, sc, Designer.JOINT)
    assert r.distance == 0.0 and not r.feasible_at_min
    with pytest.raises(ValueError):
        max_interrogation_distance(60.0, sc, Designer.JOINT, step=0.0)
