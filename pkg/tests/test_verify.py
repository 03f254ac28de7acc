import json
import math

import numpy as np
import pytest

from ergolab.kernels import BandwidthSchedule, make_kernel
from ergolab.models import ModelError, make_ou_model, make_quartic_model
from ergolab.paths import simulate_planar_bm, time_change_isotropic
from ergolab.verify import (CSV_COLUMNS, ExperimentReport, PreconditionError, ball_volume,
                            batch_means_variance, bernstein_check, bernstein_tail_bound,
                            clock_resample, coefficient_moduli, equicontinuity_diagnostic, mc_clt,
                            mc_clt_smoothed, occupation_scaling_planar, smoothing_bias_audit,
                            sup_norm_estimate, time_changed_occupation, zeta, zeta_scaling)


def test_zeta_values():
    assert zeta(2, math.exp(-4)) == pytest.approx(16.0)
    assert zeta(2, 0.9) == 1.0
    assert zeta(3, 0.125) == pytest.approx(0.125 ** (1 / 3 - 1 / 2))
    with pytest.raises(ValueError):
        zeta(1, 0.5)
    with pytest.raises(ValueError):
        zeta(2, 0.0)


def test_ball_volume():
    assert ball_volume(1, 0.5) == pytest.approx(1.0)
    assert ball_volume(2, 1.0) == pytest.approx(math.pi)
    assert ball_volume(3, 2.0) == pytest.approx(4 / 3 * math.pi * 8)


def test_tail_bound_shape():
    b = bernstein_tail_bound([0.0, 1.0, 2.0], 1.0, 1.0, 2.0, 100.0)
    assert b[0] == 1.0
    assert b[1] == pytest.approx(math.exp(-1 / (2 * 1.2)))
    assert np.all(np.diff(b) < 0)
    # t -> infinity recovers the Gaussian tail exponent
    assert bernstein_tail_bound(1.5, 1.0, 1.0, 2.0, 1e12) == pytest.approx(math.exp(-1.125), rel=1e-5)


def test_batch_means_white_noise(rng):
    # iid N(0,1) sampled every dt has long-run variance dt
    x = rng.standard_normal((4, 40001, 1))
    v = batch_means_variance(x, 0.01, lambda y: y[:, 0], batch_time=1.0)
    assert v == pytest.approx(0.01, rel=0.1)
    with pytest.raises(PreconditionError):
        batch_means_variance(x[:, :50], 0.01, lambda y: y[:, 0], batch_time=1.0)


def test_sup_norm_estimate(cat1):
    assert sup_norm_estimate(cat1[3]) == pytest.approx(1.0, rel=1e-6)


def test_mc_clt_small(ou1, cat1):
    rep = mc_clt(ou1, cat1[0], 10.0, 0.02, 200, seed=3, g2=cat1[1])
    assert set(rep.criteria) == {"variance_within_rtol", "ks_normal", "dynkin_mean_zero",
                                 "dynkin_variance", "covariance"}
    assert len(rep.samples) == 200
    assert rep.summary["variance"] == pytest.approx(1.0, rel=0.3)
    assert rep.experiment == "clt" and rep.seed == 3


def test_mc_clt_preconditions(ou1, cat1):
    with pytest.raises(PreconditionError):
        mc_clt(ou1, cat1[0], 10.0, 0.02, 199)
    with pytest.raises(PreconditionError):
        mc_clt(ou1, cat1[0], 10.0, -0.01, 200)
    with pytest.raises(PreconditionError):
        mc_clt(ou1, cat1[0], 0.01, 0.02, 200)


def test_mc_clt_smoothed_small(ou1, cat1):
    K = make_kernel(1, 1)
    sch = BandwidthSchedule("corollary-ii", 1, 2.0)
    rep = mc_clt_smoothed(ou1, cat1[0], K, sch, 10.0, 0.02, 200, seed=1)
    kinds = {s.label for s in rep.samples}
    assert kinds == {"S", "G"} and len(rep.samples) == 400
    assert rep.summary["h"] == pytest.approx(sch(10.0))
    assert "bias_detected" in rep.flags
    with pytest.raises(PreconditionError):
        mc_clt_smoothed(ou1, cat1[0], K, sch, 10.0, 0.02, 200, h=0.1)
    with pytest.raises(PreconditionError):
        mc_clt_smoothed(ou1, cat1[0], make_kernel(2, 1), sch, 10.0, 0.02, 200)


def test_bernstein_small(ou1, cat1):
    rep = bernstein_check(ou1, None, 10.0, 0.02, 200, [0.5, 1.0, 2.0], seed=0, poisson=cat1[3])
    c = rep.tail_curve
    assert c.c_P == 1.0 and c.sigma2 > 0
    assert np.all(np.diff(c.bound) < 0)
    assert rep.summary["sigma2_source"] == "identity"
    rep2 = bernstein_check(ou1, cat1[3], 10.0, 0.02, 200, [0.5, 1.0], seed=0)
    assert rep2.summary["sigma2_source"] == "batch-means"
    assert abs(rep2.summary["mean"]) < 0.2


def test_bernstein_needs_gap(cat1):
    m = make_quartic_model(1, 1.0, 4.0)
    with pytest.raises(ModelError):
        bernstein_check(m, cat1[3], 10.0, 0.02, 200, [1.0])


def test_zeta_scaling_small():
    m = make_ou_model(2, 1.0)
    rep = zeta_scaling(m, [10.0], [0.3, 0.2], 0.02, 200, [0, 0], seed=0)
    assert "ratio_t10" in rep.criteria
    rows = [r for r in rep.tables["variance"] if "delta" in r]
    assert len(rows) == 2 and all(r["variance"] > 0 for r in rows)
    with pytest.raises(PreconditionError):
        zeta_scaling(make_ou_model(1, 1.0), [10.0], [0.3], 0.02, 200, [0])
    with pytest.raises(PreconditionError):
        zeta_scaling(m, [10.0], [0.3], 0.02, 200, [9.0, 9.0])


def test_occupation_small():
    rep = occupation_scaling_planar([2.0, 3.0, 4.0], [0.4, 0.3, 0.2], 1e-3, 2,
                                    [[-0.5, 0.5], [-0.5, 0.5]], seed=0, max_ratio=100, trend_floor=0.0)
    assert set(rep.criteria) == {"median_ratio", "no_decay_in_t"}
    assert len(rep.samples) == 2 * 9
    with pytest.raises(PreconditionError, match="exp"):
        occupation_scaling_planar([1.0, 2.0, 3.0], [0.4, 0.3, 0.2], 1e-3, 2, [[-1, 1], [-1, 1]])
    with pytest.raises(PreconditionError):
        occupation_scaling_planar([1.0, 2.0], [0.4, 0.3, 0.2], 1e-3, 2, [[-1, 1], [-1, 1]])


def test_clock_resample_total_weight():
    rec = time_change_isotropic("exp", simulate_planar_bm(1e-3, 0.5, 4))
    pts, w = clock_resample(rec)
    # weights exp(-2 Re B) du integrate the clock back to base time
    assert w.sum() == pytest.approx(rec.base_path.horizon, rel=2e-3)
    assert pts.shape == (rec.base_path.n_steps, 2)


def test_time_changed_occupation_small():
    rec = time_change_isotropic("exp", simulate_planar_bm(1e-3, 0.5, 4))
    rep = time_changed_occupation(rec, [[-1.5, 4.0], [-3.0, 3.0]], 0.3)
    assert rep.summary["direct_sup"] > 0
    assert rep.summary["relative_difference"] < 0.2
    lsm = rep.summary["level_set_measure"]
    assert set(lsm) == {"0.25", "1", "4"}
    assert lsm["0.25"] >= lsm["1"] >= lsm["4"] >= 0.0


def test_equicontinuity_diagnostic(ou1):
    from ergolab.functions import truncated_gaussian
    box = [(-4.0, 4.0)]
    fns = [truncated_gaussian([c], 0.6, box) for c in (0.0, 0.05, 0.1, 1.5)]
    out = equicontinuity_diagnostic(ou1, fns, 10.0, 0.02, 200, radius=0.5, seed=1)
    # only the three nearby bumps are within radius of each other
    assert out["n_pairs"] == 3
    for row in out["pairs"]:
        assert row["d_G"] <= 0.5
        assert row["std"] == pytest.approx(row["d_G"], rel=0.35)
    assert out["sup_std"] == max(r["std"] for r in out["pairs"])
    assert equicontinuity_diagnostic(ou1, fns, 10.0, 0.02, 200, radius=1e-6)["n_pairs"] == 0


def test_coefficient_moduli_ou():
    m = make_ou_model(1, 1.0)
    mod = coefficient_moduli(m, 0.1, [(-3, 3)])
    assert mod["b"] == pytest.approx(0.1, rel=1e-9)
    assert mod["a"] == 0.0
    assert 0 < mod["pi"] < 0.1


def test_bias_audit_small(ou1, cat1):
    rep = smoothing_bias_audit(ou1, cat1[3], make_kernel(1, 1), [0.2, 0.1], 5.0, 0.02, 3, seed=0)
    rows = rep.tables["audit"]
    assert [r["h"] for r in rows] == [0.1, 0.2]
    for r in rows:
        assert r["sqrt_t_delta_b"] == pytest.approx(math.sqrt(5.0) * r["h"], rel=1e-9)
    assert rep.criteria["dominated_by_fitted_bound"]
    with pytest.raises(PreconditionError):
        smoothing_bias_audit(ou1, cat1[3], make_kernel(1, 1), [0.2], 5.0)


def test_report_serialisation(ou1, cat1, tmp_path):
    rep = mc_clt(ou1, cat1[0], 5.0, 0.05, 200, seed=9)
    rep.wall_clock = 123.0
    js, cs = rep.write(tmp_path)
    assert js.endswith("clt_9.json") and cs.endswith("clt_9.csv")
    data = json.loads(open(js).read())
    assert data["seed"] == 9 and data["n_samples"] == 200
    assert "wall_clock" not in json.dumps(data)
    lines = open(cs).read().splitlines()
    assert tuple(lines[0].split(",")) == CSV_COLUMNS and len(lines) == 201
    again = mc_clt(ou1, cat1[0], 5.0, 0.05, 200, seed=9)
    assert again.to_json() == rep.to_json() and again.to_csv() == rep.to_csv()
    other = mc_clt(ou1, cat1[0], 5.0, 0.05, 200, seed=10)
    assert other.to_csv() != rep.to_csv()


def test_report_nonfinite_values_serialise():
    rep = ExperimentReport("x", 0, {}, summary={"ratio": float("inf")})
    assert json.loads(rep.to_json())["summary"]["ratio"] == "inf"
