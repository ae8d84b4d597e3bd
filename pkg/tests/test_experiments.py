import hashlib
import math

import numpy as np
import pytest

from levelperc.attenuation import exponential, truncated_power_law
from levelperc.config import parse_config
from levelperc.experiments import (ExperimentPlan, block_bootstrap_se, plan_from_config,
                                   plan_hash, plan_text, run_plan, verify_lemmas)
from levelperc.percolation import theta_hat
from levelperc.point_process import make_rng, poisson_survival


def tiny_plan(seed=3):
    return ExperimentPlan(
        spec=exponential(),
        intensity=1.0,
        sizes=(2.0, 3.0),
        alpha=0.5,
        n_replicates=6,
        seed=(seed,),
        eps=1e-2,
        block=4,
    )


class TestPlan:
    def test_round_trip_through_text(self):
        plan = ExperimentPlan(
            spec=truncated_power_law(scale=0.4, exponent=2.5, cutoff=1.7),
            intensity=1.25, sizes=(4.0, 8.0, 16.0), alpha=0.25,
            n_replicates=40, seed=(7, 9), eps=1e-4, dimension=2,
            axis=1, block=10, n_levels=32)
        back = plan_from_config(parse_config(plan_text(plan)))
        assert back == plan
        assert plan_hash(back) == plan_hash(plan)

    def test_hash_sensitive_to_inputs(self):
        assert plan_hash(tiny_plan(3)) != plan_hash(tiny_plan(4))
        a = tiny_plan()
        b = ExperimentPlan(a.spec, a.intensity, a.sizes, 0.25, a.n_replicates,
                           a.seed, a.eps)
        assert plan_hash(a) != plan_hash(b)

    def test_validation(self):
        with pytest.raises(ValueError, match="size"):
            ExperimentPlan(exponential(), 1.0, (), 0.5, 4, (1,))
        with pytest.raises(ValueError, match="positive"):
            ExperimentPlan(exponential(), 1.0, (2.0,), 0.5, 0, (1,))


class TestRunPlan:
    def test_single_worker_run(self, tmp_path):
        plan = tiny_plan()
        man = run_plan(plan, tmp_path / "run", workers=1)
        assert man.n_tasks == 4 and man.n_executed == 4
        assert man.n_rows == 12
        res = (tmp_path / "run" / "results.csv").read_text().splitlines()
        assert res[0] == "halfwidth,replicate,crossing_threshold,origin_threshold"
        assert len(res) == 13
        sizes = [float(ln.split(",")[0]) for ln in res[1:]]
        reps = [int(ln.split(",")[1]) for ln in res[1:]]
        assert sizes == sorted(sizes)
        assert reps == [0, 1, 2, 3, 4, 5] * 2
        th = (tmp_path / "run" / "thetas.csv").read_text().splitlines()
        assert th[0].startswith("halfwidth,h,theta_weak")

    def test_matches_direct_estimator(self, tmp_path):
        plan = tiny_plan()
        run_plan(plan, tmp_path / "run", workers=1)
        res = (tmp_path / "run" / "results.csv").read_text().splitlines()[1:]
        got = [float(ln.split(",")[2]) for ln in res if float(ln.split(",")[0]) == 2.0]
        direct = theta_hat(plan.spec, plan.intensity, 2.0, plan.alpha,
                           plan.n_replicates, plan.seed, eps=plan.eps)
        assert got == direct.crossing.tolist()

    def test_worker_count_invariance(self, tmp_path):
        plan = tiny_plan()
        m1 = run_plan(plan, tmp_path / "one", workers=1)
        m2 = run_plan(plan, tmp_path / "two", workers=2)
        b1 = (tmp_path / "one" / "results.csv").read_bytes()
        b2 = (tmp_path / "two" / "results.csv").read_bytes()
        assert b1 == b2
        assert (tmp_path / "one" / "thetas.csv").read_bytes() == \
               (tmp_path / "two" / "thetas.csv").read_bytes()
        assert m1.results_sha == m2.results_sha
        assert m1.thetas_sha == m2.thetas_sha

    def test_resume_skips_everything(self, tmp_path):
        plan = tiny_plan()
        run_plan(plan, tmp_path / "run", workers=1)
        before = (tmp_path / "run" / "results.csv").read_bytes()
        man = run_plan(plan, tmp_path / "run", workers=1)
        assert man.n_executed == 0
        assert (tmp_path / "run" / "results.csv").read_bytes() == before

    def test_corrupted_part_is_redone(self, tmp_path):
        plan = tiny_plan()
        run_plan(plan, tmp_path / "run", workers=1)
        before = (tmp_path / "run" / "results.csv").read_bytes()
        part = next((tmp_path / "run" / "parts").glob("*.csv"))
        part.write_text(part.read_text()[:-20])
        man = run_plan(plan, tmp_path / "run", workers=1)
        assert man.n_executed == 1
        assert (tmp_path / "run" / "results.csv").read_bytes() == before

    def test_refuses_foreign_directory(self, tmp_path):
        run_plan(tiny_plan(3), tmp_path / "run", workers=1)
        with pytest.raises(ValueError, match="different plan"):
            run_plan(tiny_plan(4), tmp_path / "run", workers=1)

    def test_manifest_contents(self, tmp_path):
        plan = tiny_plan()
        man = run_plan(plan, tmp_path / "run", workers=1)
        text = (tmp_path / "run" / "manifest.txt").read_text()
        cfg = parse_config(text)
        assert cfg["plan_sha"] == plan_hash(plan) == man.plan_sha
        assert cfg["results_sha"] == hashlib.sha256(
            (tmp_path / "run" / "results.csv").read_bytes()).hexdigest()


class TestBlockBootstrap:
    def test_block_one_equals_naive(self):
        rng = make_rng(1)
        vals = rng.random((30, 30))
        got = block_bootstrap_se(vals, 1)
        want = vals.std(ddof=1) / math.sqrt(vals.size)
        assert got == pytest.approx(want, rel=1e-12)

    def test_iid_blocks_match_naive_scale(self):
        rng = make_rng(2)
        vals = (rng.random((120, 120)) < 0.4).astype(float)
        naive = vals.std(ddof=1) / math.sqrt(vals.size)
        blocked = block_bootstrap_se(vals, 10)
        assert 0.6 * naive < blocked < 1.6 * naive

    def test_constant_is_zero(self):
        assert block_bootstrap_se(np.ones((8, 8)), 4) == 0.0

    def test_validation(self):
        with pytest.raises(ValueError):
            block_bootstrap_se(np.ones((4, 4)), 0)
        with pytest.raises(ValueError):
            block_bootstrap_se(np.ones((4, 4)), 9)
        with pytest.raises(ValueError, match="two blocks"):
            block_bootstrap_se(np.ones((4, 4)), 4)


class TestVerifyLemmas:
    def test_quick_battery_passes(self):
        rep = verify_lemmas("quick", seed=0)
        assert rep.ok
        assert len(rep.items) == 11
        lines = rep.lines()
        assert all(ln.startswith(("PASS", "FAIL", "OK")) for ln in lines)
        assert lines[-1].startswith("OK (11/11")

    def test_distance_note_surfaces_both_numbers(self):
        rep = verify_lemmas("quick", seed=0)
        item = next(it for it in rep.items if it.name == "shift-distance-bound")
        assert "0.270670566473" in item.detail
        assert "0.1128" in item.detail

    def test_negative_control_fails(self):
        surv = poisson_survival(2.0, 40)

        def corrupted(k):
            return float(surv[k]) + (0.5 if k == 3 else 0.0)

        rep = verify_lemmas("quick", seed=0, survival=corrupted)
        assert not rep.ok
        bad = [it for it in rep.items if not it.passed]
        assert [it.name for it in bad] == ["conditioned-tail-dominance"]
        assert rep.lines()[-1].startswith("FAILED")

    def test_unknown_level(self):
        with pytest.raises(ValueError, match="level"):
            verify_lemmas("medium")
