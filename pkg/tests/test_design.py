import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from isac_rfid.codebook.design import (Codebook, benchmark_codebook, design_sector,
                                       empty_codeword, evaluate_codebook, link_checks,
                                       rank1_extract, restore_users, sector_bounds, upper_bound)
from isac_rfid.codebook.grid import ConstantRadius, RadiusProfile, build_grid
from isac_rfid.codebook.io import (CodebookFormatError, codebook_from_dict, codebook_to_dict,
                                   load_codebook, load_meta, save_codebook)
from isac_rfid.codebook.sdr import sdr_sinrs
from isac_rfid.joint import Designer, design_single
from isac_rfid.model import (BeamformingSolution, PolarPosition, los_channel, matched_combiner,
                             realized_sinrs, reference_scenario)

from oracles import random_hermitian_psd

SC4 = reference_scenario(4)
SC8 = reference_scenario(8, 10.0)


# -- rank-1 extraction -----------------------------------------------------

def test_rank1_examples():
    np.testing.assert_allclose(rank1_extract(np.diag([4.0, 0.0])), [2.0, 0.0], atol=1e-15)
    f = rank1_extract(np.ones((2, 2)))
    np.testing.assert_allclose(f, [1.0, 1.0], atol=1e-12)
    np.testing.assert_array_equal(rank1_extract(np.zeros((3, 3))), np.zeros(3))


def test_rank1_rejects_bad_input():
    with pytest.raises(ValueError):
        rank1_extract(np.array([[1.0, 1.0], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        rank1_extract(np.diag([1.0, -1e-3]))
    with pytest.raises(ValueError):
        rank1_extract(np.ones((2, 3)))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2 ** 32 - 1))
def test_rank1_recovers_beam_up_to_phase(M, seed):
    rng = np.random.default_rng(seed)
    f = rng.standard_normal(M) + 1j * rng.standard_normal(M)
    g = rank1_extract(np.outer(f, f.conj()))
    c = np.vdot(g, f) / np.vdot(g, g)
    assert abs(c) == pytest.approx(1.0, rel=1e-9)
    np.testing.assert_allclose(c * g, f, atol=1e-9 * np.linalg.norm(f))
    k = np.argmax(np.abs(g))
    assert abs(g[k].imag) <= 1e-12 * abs(g[k]) and g[k].real > 0


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 6), st.integers(0, 2 ** 32 - 1))
def test_rank1_matches_eigen_oracle(M, seed):
    rng = np.random.default_rng(seed)
    F = random_hermitian_psd(rng, M)
    w, V = np.linalg.eigh(F)
    f = rank1_extract(F)
    assert np.vdot(f, f).real == pytest.approx(np.trace(F).real, rel=1e-9)
    assert abs(np.vdot(V[:, -1], f)) ** 2 == pytest.approx(np.trace(F).real, rel=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_rank1_beams_reproduce_sdr_sinrs(seed):
    rng = np.random.default_rng(seed)
    p = SC4.params
    tag = PolarPosition(rng.uniform(1, 15), rng.uniform(0, 180))
    g = los_channel(p, tag)
    Hu = SC4.user_channels()
    h_tu = SC4.tag_user_channels(tag)
    fs = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    fu = (rng.standard_normal((1, 4)) + 1j * rng.standard_normal((1, 4))) * 0.01
    Fs, Fu = np.outer(fs, fs.conj()), [np.outer(f, f.conj()) for f in fu]
    ref = sdr_sinrs(Fs, Fu, g, Hu, h_tu, p)
    bs, bu = rank1_extract(Fs), np.array([rank1_extract(F) for F in Fu])
    got = realized_sinrs(BeamformingSolution(bs, bu, matched_combiner(g)), g, Hu, h_tu, p)
    np.testing.assert_allclose([got.tag, got.reader, *got.users], [ref[0], ref[1], *ref[2]],
                               rtol=1e-8)
    total = np.trace(Fs).real + sum(np.trace(F).real for F in Fu)
    assert np.sum(np.abs(bs) ** 2) + np.sum(np.abs(bu) ** 2) == pytest.approx(total, rel=1e-9)


# -- link checks -----------------------------------------------------------

@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_link_checks_match_core_model(seed):
    rng = np.random.default_rng(seed)
    p = SC4.params
    K, T = 3, 5
    fs = (rng.standard_normal((K, 4)) + 1j * rng.standard_normal((K, 4))) * 0.3
    fu = (rng.standard_normal((K, 1, 4)) + 1j * rng.standard_normal((K, 1, 4))) * 1e-3
    ranges, angles = rng.uniform(0.5, 12, T), rng.uniform(0, 180, T)
    chk = link_checks(fs, fu, ranges, angles, SC4, rtol=0.0)
    for t in range(T):
        tag = PolarPosition(ranges[t], angles[t])
        g = los_channel(p, tag)
        for k in range(K):
            r = realized_sinrs(BeamformingSolution(fs[k], fu[k], matched_combiner(g)), g,
                               SC4.user_channels(), SC4.tag_user_channels(tag), p)
            assert chk.tag[t, k] == (r.tag >= p.gamma_tag)
            assert chk.reader[t, k] == (r.reader >= p.gamma_reader)
            assert chk.users[t, k] == all(u >= p.gamma_user for u in r.users)


# -- sectors and codebooks -------------------------------------------------

def test_sector_bounds_count():
    for step in (1.0, 2.0, 5.0, 7.0):
        b = sector_bounds(step)
        assert len(b) == int(np.ceil(180 / step))
        assert b[0][0] == 0.0 and b[-1][1] == 180.0
        assert all(x[1] == y[0] for x, y in zip(b, b[1:]))
    with pytest.raises(ValueError):
        sector_bounds(0.0)


def test_designed_sector_is_verified():
    prof = RadiusProfile(SC8)
    cw = design_sector(88.0, 90.0, SC8, prof, n_radial=4)
    assert cw.error is None and cw.converged
    assert cw.total_power <= SC8.params.total_power * (1 + 1e-9)
    assert cw.realized >= 1 and cw.users_ok and not cw.flagged
    chk = link_checks(cw.sensing[None], cw.comm[None], cw.grid_ranges, cw.grid_angles, SC8)
    np.testing.assert_array_equal(chk.interrogated[:, 0].astype(int), cw.y_realized)


def test_restore_users_finds_smallest_scale():
    grid = build_grid(60.0, 61.0, SC4, ConstantRadius(3.0), n_radial=1, dtheta=1.0)
    g = grid.channels[0]
    fs = g / np.linalg.norm(g) * 0.3
    h = SC4.user_channels()[0]
    fu = (h / np.linalg.norm(h) * 1e-7)[None]
    scale, ok = restore_users(fs, fu, grid, SC4)
    assert ok and scale > 1
    assert link_checks(fs[None], (fu * scale)[None], grid.ranges, grid.angles, SC4).users.all()
    assert not link_checks(fs[None], (fu * scale * (1 - 1e-6))[None], grid.ranges,
                           grid.angles, SC4).users.all()


def toy_codebook():
    sol = design_single(PolarPosition(1.0, 90.0), SC4, Designer.JOINT)
    cw = empty_codeword(85.0, 95.0, 4, 1)
    cw.sensing, cw.comm = sol.sensing, sol.comm.reshape(1, 4)
    cw.y_sdr = cw.y_realized = np.ones(1, dtype=int)
    cw.grid_ranges, cw.grid_angles = np.array([1.0]), np.array([90.0])
    return Codebook("sector", 10.0, 4, 1.0, [cw, empty_codeword(0.0, 10.0, 4, 1, "x")])


def test_evaluate_examples():
    cb = toy_codebook()
    assert evaluate_codebook(cb, [], [], SC4).rate == 1.0
    cov = evaluate_codebook(cb, [1.0, 40.0], [90.0, 90.0], SC4)
    np.testing.assert_array_equal(cov.covered, [True, False])
    assert upper_bound([], [], SC4).rate == 1.0


def test_upper_bound_dominates_codebook():
    rng = np.random.default_rng(3)
    cb = toy_codebook()
    r, th = 16.7 * np.sqrt(rng.uniform(size=40)), 180 * rng.uniform(size=40)
    cov, ub = evaluate_codebook(cb, r, th, SC4), upper_bound(r, th, SC4)
    assert np.all(ub.covered[cov.covered])


def test_benchmark_has_one_codeword_per_angle():
    cb = benchmark_codebook(SC4, ConstantRadius(6.0), step=30.0)
    assert len(cb) == 7 and cb.kind == "benchmark"
    for cw in cb.codewords:
        assert cw.error is None and cw.realized == 1
        assert cw.total_power <= 1.0 + 1e-9


# -- serialization ---------------------------------------------------------

def test_io_round_trip(tmp_path):
    cb = toy_codebook()
    cb.codewords[0].bounds = (-3.0, -3.4)
    path = save_codebook(cb, tmp_path / "cb.json", {"note": "x"})
    back = load_codebook(path)
    assert load_meta(path) == {"note": "x"}
    assert (back.kind, back.theta_step, back.num_antennas, len(back)) == ("sector", 10.0, 4, 2)
    for a, b in zip(cb.codewords, back.codewords):
        np.testing.assert_array_equal(a.sensing, b.sensing)
        np.testing.assert_array_equal(a.comm, b.comm)
        np.testing.assert_array_equal(a.y_realized, b.y_realized)
        assert a.error == b.error and a.flagged == b.flagged
    assert codebook_to_dict(back) == codebook_to_dict(cb)


def test_io_rejects_foreign_files(tmp_path):
    d = codebook_to_dict(toy_codebook())
    d["format"] = "something-else"
    with pytest.raises(CodebookFormatError):
        codebook_from_dict(d)
    d = codebook_to_dict(toy_codebook())
    d["version"] = 99
    with pytest.raises(CodebookFormatError):
        codebook_from_dict(json.loads(json.dumps(d)))
