import random
import unittest
from fractions import Fraction

from hkcli.kit_dynamics import DynamicsMismatchError, OpinionProfile, simulate, step, trajectory_records
from hkcli.kit_invariants import (
    CheckSuiteResult,
    ViolationReport,
    check_cluster_coincide,
    check_decrement_floor,
    check_eq1,
    check_equal_stay_equal,
    check_extremes,
    check_increment_cap,
    check_initial_bound,
    check_lemma2,
    check_lemma3,
    check_order,
    check_total_budget,
    replay,
    run_suite,
)
from hkcli.kit_lyapunov import annotate
from hkcli.kit_phases import decompose


F = Fraction


def profile_of(*opinions, epsilon=1, time=0) -> OpinionProfile:
    return OpinionProfile(epsilon=epsilon, opinions=tuple(opinions), time=time)


class TestStepChecks(unittest.TestCase):
    def test_eq1(self):
        x_t = profile_of(0, 1, 2)
        # Tight: 1 <= 1.
        self.assertIsNone(check_eq1(x_t, step(x_t)))
        x_t = profile_of(0, 1, 1, 2)
        self.assertIsNone(check_eq1(x_t, step(x_t)))

        report = check_eq1(profile_of(0, 1, 2), profile_of(0, 1, 2))
        self.assertIsNotNone(report)
        self.assertEqual(report.check_id, "eq1")
        self.assertEqual(report.lhs, 1)
        self.assertEqual(report.rhs, 0)

    def test_eq1_not_applicable(self):
        # Consensus, and the nu agent out of reach.
        self.assertIsNone(check_eq1(profile_of(1, 1), profile_of(0, 0)))
        self.assertIsNone(check_eq1(profile_of(0, 2), profile_of(0, 0)))

    def test_increment_cap(self):
        x_t = profile_of(F(1, 2), 1, F(3, 2))
        self.assertIsNone(check_increment_cap(x_t, step(x_t)))

        report = check_increment_cap(profile_of(0, 1, 2), profile_of(0, 0, 5))
        self.assertEqual(report.check_id, "increment-cap")
        self.assertEqual(report.lhs, 7)
        self.assertEqual(report.rhs, 5)

        # nu does not grow: not applicable.
        self.assertIsNone(check_increment_cap(profile_of(0, 1, 2), profile_of(0, 1, 9)))

    def test_lemma3(self):
        self.assertIsNone(check_lemma3(profile_of(0, 1, 2)))

        report = check_lemma3(profile_of(0, F(1, 2)))
        self.assertEqual(report.check_id, "lemma3")
        self.assertEqual(report.lhs, 0)
        self.assertEqual(report.rhs, 1)

    def test_decrement_floor(self):
        x_t = profile_of(0, 1, 2)
        self.assertIsNone(check_decrement_floor(x_t, step(x_t)))

        report = check_decrement_floor(x_t, x_t)
        self.assertEqual(report.check_id, "decrement-floor")
        self.assertEqual(report.lhs, 0)
        self.assertEqual(report.rhs, F(1, 9))

    def test_order_and_extremes(self):
        self.assertIsNone(check_order((F(0), F(1), F(1)), 1))
        report = check_order((F(0), F(2), F(1)), 3)
        self.assertEqual(report.check_id, "order")
        self.assertEqual(report.t, 3)

        self.assertIsNone(check_extremes(profile_of(0, 1, 2), profile_of(F(1, 2), 1, F(3, 2))))
        self.assertEqual(check_extremes(profile_of(0, 1, 2), profile_of(0, 1, 3)).check_id, "extremes")
        self.assertEqual(check_extremes(profile_of(0, 1, 2), profile_of(-1, 1, 2)).check_id, "extremes")

    def test_leftmost_cluster_checks(self):
        x_t = profile_of(0, 0, F(1, 2))
        self.assertIsNone(check_lemma2(x_t, step(x_t)))
        self.assertIsNone(check_cluster_coincide(x_t, step(x_t)))

        broken = profile_of(0, F(1, 2), 2)
        self.assertEqual(check_lemma2(profile_of(0, 0, 2), broken).check_id, "lemma2")
        self.assertEqual(check_cluster_coincide(profile_of(0, 0, 2), broken).check_id, "cluster-coincide")

    def test_equal_stay_equal(self):
        x_t = profile_of(0, 1, 1, 3)
        self.assertIsNone(check_equal_stay_equal(x_t, step(x_t)))

        report = check_equal_stay_equal(x_t, profile_of(0, F(1, 2), 1, 3), phase=1)
        self.assertEqual(report.check_id, "equal-stay-equal")
        self.assertEqual((report.lhs, report.rhs, report.phase), (1, F(1, 2), 1))

    def test_initial_bound(self):
        self.assertIsNone(check_initial_bound(profile_of(0, 1, 2)))
        self.assertIsNone(check_initial_bound(profile_of(1, 1)))

    def test_context_is_attached(self):
        report = check_eq1(profile_of(0, 1, 2, time=4), profile_of(0, 1, 2), phase=2, step_class="D")
        self.assertEqual(report.t, 4)
        self.assertEqual(report.phase, 2)
        self.assertEqual(report.step_class, "D")
        self.assertEqual(report.model_dump(mode="json")["lhs"], "1")


class TestTotalBudget(unittest.TestCase):
    def test_total_budget(self):
        trajectory, _ = simulate(profile_of(0, 1, 2))
        self.assertIsNone(check_total_budget(trajectory))

        trajectory, _ = simulate(profile_of(0, 1, 2), max_steps=1)
        with self.assertRaises(ValueError):
            check_total_budget(trajectory)


class TestCheckSuiteResult(unittest.TestCase):
    def test_merge(self):
        a = CheckSuiteResult()
        a.record("eq1", None)
        a.observe_decrement_ratio(F(3))
        b = CheckSuiteResult()
        b.record("eq1", ViolationReport(check_id="eq1", t=0, lhs=1, rhs=0))
        b.record("lemma3", None)
        b.observe_decrement_ratio(F(2))

        a.merge(b)
        self.assertEqual(a.checks_run, 3)
        self.assertEqual(a.counters, {"eq1": 2, "lemma3": 1})
        self.assertEqual(a.min_decrement_ratio, 2)
        self.assertFalse(a.passed)

    def test_report_is_sorted(self):
        result = CheckSuiteResult()
        result.record("lemma3", ViolationReport(check_id="lemma3", t=2, lhs=0, rhs=1))
        result.record("eq1", ViolationReport(check_id="eq1", t=2, lhs=1, rhs=0))
        result.record("order", ViolationReport(check_id="order", t=0, lhs=2, rhs=1))
        result.canonicalize()
        self.assertEqual([(v.t, v.check_id) for v in result.violations], [(0, "order"), (2, "eq1"), (2, "lemma3")])
        self.assertEqual(result.to_report()["checks_run"], 3)


class TestRunSuite(unittest.TestCase):
    def test_chain_of_three(self):
        trajectory, _ = simulate(profile_of(0, 1, 2))
        result = run_suite(trajectory)
        self.assertTrue(result.passed)
        self.assertGreater(result.checks_run, 0)
        self.assertEqual(result.min_decrement_ratio, F(27, 2))
        for check_id in (
            "eq1",
            "equal-stay-equal",
            "lemma3",
            "decrement-floor",
            "increment-cap",
            "theorem1",
            "sum-bound",
            "telescoping",
        ):
            self.assertIn(check_id, result.counters)

    def test_runs_with_splits(self):
        for opinions in [(0, 1, F(5, 2)), (0, 1, F(5, 2), 3, 4), (0, 2), (0, 2, 4, 5)]:
            trajectory, _ = simulate(profile_of(*opinions))
            annotated = annotate(trajectory)
            result = run_suite(annotated, decompose(annotated))
            self.assertTrue(result.passed, result.violations)

    def test_no_violations_on_random_instances(self):
        rng = random.Random(2024)
        for _ in range(150):
            n = rng.randint(1, 7)
            opinions = sorted(F(rng.randint(0, 3 * n), rng.randint(1, 3)) for _ in range(n))
            epsilon = F(rng.randint(1, 6), 3)
            trajectory, _ = simulate(profile_of(*opinions, epsilon=epsilon))
            result = run_suite(trajectory)
            self.assertTrue(result.passed, result.violations)
            if result.min_decrement_ratio is not None:
                self.assertGreaterEqual(result.min_decrement_ratio, 1)

    def test_equidistant_chains(self):
        for n in range(2, 9):
            trajectory, _ = simulate(profile_of(*range(n)))
            self.assertTrue(run_suite(trajectory).passed)


class TestReplay(unittest.TestCase):
    def records_of(self, *opinions):
        trajectory, _ = simulate(profile_of(*opinions))
        return trajectory_records(trajectory)

    def test_round_trip(self):
        replayed = replay(self.records_of(0, 1, 2))
        self.assertEqual(replayed.T, 2)
        self.assertFalse(replayed.truncated)
        self.assertEqual(replayed.profiles[1].opinions, (F(1, 2), F(1), F(3, 2)))

    def test_explicit_epsilon(self):
        records = [{k: v for k, v in record.items() if k != "epsilon"} for record in self.records_of(0, 1, 2)]
        with self.assertRaises(ValueError):
            replay(records)
        self.assertEqual(replay(records, epsilon=F(1)).T, 2)

    def test_mismatch(self):
        records = self.records_of(0, 1, 2)
        records[1]["x"] = ["1/2", "1", "2"]
        with self.assertRaises(DynamicsMismatchError):
            replay(records)

    def test_unsorted_record(self):
        records = self.records_of(0, 1, 2)
        records[1]["x"] = ["1", "1/2", "3/2"]
        with self.assertRaises(DynamicsMismatchError):
            replay(records)

    def test_truncated(self):
        records = self.records_of(0, 1, 2)[:2]
        self.assertTrue(replay(records).truncated)

    def test_malformed(self):
        with self.assertRaises(ValueError):
            replay([])
        with self.assertRaises(ValueError):
            replay([{"t": 0, "epsilon": "1", "x": ["zero"]}])
        with self.assertRaises(ValueError):
            replay([{"t": 1, "epsilon": "1", "x": ["0"]}])


if __name__ == "__main__":
    unittest.main()
