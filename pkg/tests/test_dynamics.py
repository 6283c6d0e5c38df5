import random
import unittest
from fractions import Fraction
from itertools import pairwise

from hkcli.kit_dynamics import (
    NeighborInterval,
    OpinionProfile,
    all_neighbors,
    default_max_steps,
    is_terminated,
    naive_neighbors,
    neighbors,
    scale,
    simulate,
    step,
    to_float,
    trajectory_records,
    translate,
)


F = Fraction


def random_profile(rng: random.Random, n_max: int = 6) -> OpinionProfile:
    # Small denominators so that ties and gaps of exactly epsilon show up often.
    n = rng.randint(1, n_max)
    opinions = sorted(F(rng.randint(0, 4 * n), rng.randint(1, 4)) for _ in range(n))
    return OpinionProfile(epsilon=F(rng.randint(1, 8), 4), opinions=tuple(opinions))


class TestOpinionProfile(unittest.TestCase):
    def test_promotes_ints(self):
        profile = OpinionProfile(epsilon=1, opinions=(0, 1, 2))
        self.assertTrue(profile.is_exact)
        self.assertEqual(profile.opinions, (F(0), F(1), F(2)))
        self.assertEqual(profile.diameter, 2)

    def test_rejects_invalid_profiles(self):
        with self.assertRaises(ValueError):
            OpinionProfile(epsilon=1, opinions=())
        with self.assertRaises(ValueError):
            OpinionProfile(epsilon=0, opinions=(0, 1))
        with self.assertRaises(ValueError):
            OpinionProfile(epsilon=F(-1, 2), opinions=(0, 1))
        with self.assertRaises(ValueError):
            OpinionProfile(epsilon=1, opinions=(1, 0))


class TestNeighbors(unittest.TestCase):
    def test_chain(self):
        profile = OpinionProfile(epsilon=1, opinions=(0, 1, 2))
        self.assertEqual(neighbors(profile, 0), NeighborInterval(0, 1))
        self.assertEqual(neighbors(profile, 1), NeighborInterval(0, 2))
        self.assertEqual(neighbors(profile, 2), NeighborInterval(1, 2))
        self.assertIn(1, neighbors(profile, 2))
        self.assertEqual(neighbors(profile, 1).size, 3)

    def test_isolated_agent(self):
        profile = OpinionProfile(epsilon=1, opinions=(0, F(5, 2)))
        self.assertEqual(all_neighbors(profile), [NeighborInterval(0, 0), NeighborInterval(1, 1)])

    def test_out_of_range(self):
        profile = OpinionProfile(epsilon=1, opinions=(0, 1))
        with self.assertRaises(IndexError):
            neighbors(profile, 2)
        with self.assertRaises(IndexError):
            neighbors(profile, -1)

    def test_sweep_matches_pairwise_oracle(self):
        rng = random.Random(7)
        for _ in range(10_000):
            profile = random_profile(rng, n_max=12)
            expected = naive_neighbors(profile)
            self.assertEqual(all_neighbors(profile), expected)
            self.assertEqual([neighbors(profile, i) for i in range(profile.n)], expected)


class TestStep(unittest.TestCase):
    def test_chain(self):
        profile = OpinionProfile(epsilon=1, opinions=(0, 1, 2))
        nxt = step(profile)
        self.assertEqual(nxt.opinions, (F(1, 2), F(1), F(3, 2)))
        self.assertEqual(nxt.time, 1)
        self.assertEqual(step(nxt).opinions, (F(1), F(1), F(1)))

    def test_order_and_extremes_preserved(self):
        rng = random.Random(11)
        for _ in range(300):
            profile = random_profile(rng)
            nxt = step(profile)
            self.assertEqual(list(nxt.opinions), sorted(nxt.opinions))
            self.assertLessEqual(nxt.max, profile.max)
            self.assertGreaterEqual(nxt.min, profile.min)

    def test_is_terminated(self):
        self.assertTrue(is_terminated(OpinionProfile(epsilon=1, opinions=(1, 1, 1))))
        self.assertTrue(is_terminated(OpinionProfile(epsilon=1, opinions=(0, 2))))
        self.assertFalse(is_terminated(OpinionProfile(epsilon=1, opinions=(0, 1))))


class TestSimulate(unittest.TestCase):
    def test_chain_of_three(self):
        trajectory, result = simulate(OpinionProfile(epsilon=1, opinions=(0, 1, 2)))
        self.assertEqual(result.T, 2)
        self.assertFalse(result.truncated)
        self.assertEqual(result.steady_state.opinions, (F(1), F(1), F(1)))
        self.assertEqual(trajectory.T, 2)
        self.assertEqual([p.time for p in trajectory.profiles], [0, 1, 2])

    def test_already_fixed(self):
        trajectory, result = simulate(OpinionProfile(epsilon=1, opinions=(0, 2)))
        self.assertEqual(result.T, 0)
        self.assertEqual(len(trajectory.profiles), 1)

    def test_time_is_reset(self):
        _, result = simulate(OpinionProfile(epsilon=1, opinions=(0, 1, 2), time=5))
        self.assertEqual(result.T, 2)

    def test_truncation(self):
        trajectory, result = simulate(OpinionProfile(epsilon=1, opinions=(0, 1, 2)), max_steps=1)
        self.assertTrue(result.truncated)
        self.assertTrue(trajectory.truncated)
        self.assertEqual(result.T, 1)
        self.assertEqual(trajectory.T, 1)

        _, result = simulate(OpinionProfile(epsilon=1, opinions=(0, 1, 2)), max_steps=0)
        self.assertTrue(result.truncated)
        self.assertEqual(result.T, 0)

        with self.assertRaises(ValueError):
            simulate(OpinionProfile(epsilon=1, opinions=(0, 1)), max_steps=-1)

    def test_within_budget(self):
        rng = random.Random(3)
        for _ in range(100):
            profile = random_profile(rng)
            _, result = simulate(profile)
            self.assertFalse(result.truncated)
            self.assertLessEqual(result.T, default_max_steps(profile.n))
            self.assertTrue(is_terminated(result.steady_state))

    def test_equidistant_chain_is_slow(self):
        for n in range(10, 201, 10):
            _, result = simulate(OpinionProfile(epsilon=1, opinions=tuple(range(n))))
            self.assertFalse(result.truncated)
            self.assertGreaterEqual(result.T, n / 4)

    def test_equal_opinions_stay_equal(self):
        rng = random.Random(13)
        for _ in range(300):
            # Integers on a short grid give many ties.
            n = rng.randint(2, 12)
            opinions = sorted(rng.randint(0, n) for _ in range(n))
            trajectory, _ = simulate(OpinionProfile(epsilon=rng.randint(1, 3), opinions=tuple(opinions)))
            for before, after in pairwise(trajectory.profiles):
                for i in range(before.n - 1):
                    if before.opinions[i] == before.opinions[i + 1]:
                        self.assertEqual(after.opinions[i], after.opinions[i + 1])

    def test_float_mode(self):
        profile = to_float(OpinionProfile(epsilon=1, opinions=(0, 1, 2)))
        self.assertFalse(profile.is_exact)
        _, result = simulate(profile, tolerance=1e-12)
        self.assertEqual(result.T, 2)
        self.assertEqual(result.steady_state.opinions, (1.0, 1.0, 1.0))

        with self.assertRaises(ValueError):
            simulate(profile, tolerance=-1.0)

    def test_scale_and_translation_invariance(self):
        rng = random.Random(5)
        for _ in range(100):
            profile = random_profile(rng)
            c = F(rng.randint(1, 9), rng.randint(1, 9))
            shift = F(rng.randint(-9, 9), rng.randint(1, 9))
            trajectory, result = simulate(profile)

            scaled, scaled_result = simulate(scale(profile, c))
            self.assertEqual(scaled_result.T, result.T)
            for p, q in zip(trajectory.profiles, scaled.profiles, strict=True):
                self.assertEqual(q.opinions, tuple(x * c for x in p.opinions))

            moved, moved_result = simulate(translate(profile, shift))
            self.assertEqual(moved_result.T, result.T)
            for p, q in zip(trajectory.profiles, moved.profiles, strict=True):
                self.assertEqual(q.opinions, tuple(x + shift for x in p.opinions))

    def test_scale_must_be_positive(self):
        with self.assertRaises(ValueError):
            scale(OpinionProfile(epsilon=1, opinions=(0, 1)), F(0))

    def test_trajectory_records(self):
        trajectory, _ = simulate(OpinionProfile(epsilon=1, opinions=(0, 1, 2)))
        records = trajectory_records(trajectory)
        self.assertEqual(records[0], {"t": 0, "epsilon": "1", "x": ["0", "1", "2"]})
        self.assertEqual(records[1]["x"], ["1/2", "1", "3/2"])
        self.assertEqual(len(records), 3)


if __name__ == "__main__":
    unittest.main()
