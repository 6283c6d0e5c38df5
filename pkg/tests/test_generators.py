import io
import json
import os
import tempfile
import unittest
from fractions import Fraction
from pathlib import Path
from unittest import mock

from pydantic import ValidationError

from hkcli import constants
from hkcli.kit_dynamics import OpinionProfile
from hkcli.kit_generators import InstanceKind, InstanceSpec, dump, emit, generate, ingest, resolve_max_denominator


F = Fraction


class TestGenerate(unittest.TestCase):
    def test_equidistant(self):
        profile = generate(InstanceSpec(kind="equidistant", n=4, epsilon="1/2"))
        self.assertEqual(profile.epsilon, F(1, 2))
        self.assertEqual(profile.opinions, (0, F(1, 2), 1, F(3, 2)))

        profile = generate(InstanceSpec(kind="equidistant", n=3, epsilon=1, spacing="1/3", base=2))
        self.assertEqual(profile.opinions, (2, F(7, 3), F(8, 3)))

    def test_two_cluster(self):
        profile = generate(InstanceSpec(kind="two_cluster", n=5, epsilon=1))
        self.assertEqual(profile.opinions, (0, 0, 0, 1, 1))

        profile = generate(InstanceSpec(kind="two_cluster", n=4, epsilon=1, sizes=(1, 3), gap=2))
        self.assertEqual(profile.opinions, (0, 2, 2, 2))

    def test_dumbbell(self):
        profile = generate(InstanceSpec(kind="dumbbell", n=6, epsilon=1))
        self.assertEqual(profile.opinions, (0, 1, 2, 3, 4, 5))

        profile = generate(InstanceSpec(kind="dumbbell", n=6, epsilon=1, sizes=(2, 2)))
        self.assertEqual(profile.opinions, (0, 0, 1, 2, 3, 3))

        profile = generate(InstanceSpec(kind="dumbbell", n=8, epsilon=1, sizes=(3, 3), spacing="1/2"))
        self.assertEqual(profile.opinions, (0, 0, 0, F(1, 2), 1, F(3, 2), F(3, 2), F(3, 2)))

    def test_uniform_random(self):
        spec = InstanceSpec(kind="uniform_random", n=20, epsilon="1/2", seed=9, max_denominator=50)
        profile = generate(spec)
        self.assertEqual(profile.n, 20)
        self.assertEqual(list(profile.opinions), sorted(profile.opinions))
        self.assertTrue(all(0 <= x <= 10 for x in profile.opinions))
        # x = (n eps) k / q with q <= 50 and n eps = 10.
        self.assertTrue(all((x / 10).denominator <= 50 for x in profile.opinions))

        self.assertEqual(generate(spec), profile)
        self.assertNotEqual(generate(spec.with_n(20, seed=10)), profile)

    def test_with_n(self):
        spec = InstanceSpec(kind="two_cluster", n=4, epsilon=1)
        self.assertEqual(generate(spec.with_n(6)).opinions, (0, 0, 0, 1, 1, 1))
        self.assertEqual(spec.with_n(6, seed=3).seed, 3)

    def test_from_file(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            path = Path(tmpdir) / "profile.json"
            path.write_text(json.dumps({"epsilon": "1", "opinions": ["0", "1", "2"]}), encoding="utf-8")
            profile = generate(InstanceSpec(kind=InstanceKind.FROM_FILE, path=path))
        self.assertEqual(profile.opinions, (0, 1, 2))

    def test_invalid_parameters(self):
        with self.assertRaises(ValidationError):
            InstanceSpec(kind="two_cluster", n=5, sizes=(2, 2))
        with self.assertRaises(ValidationError):
            InstanceSpec(kind="equidistant", n=3, spacing=-1)
        with self.assertRaises(ValidationError):
            InstanceSpec(kind="two_cluster", n=3, gap="-1/2")
        with self.assertRaises(ValidationError):
            InstanceSpec(kind="equidistant", n=3, epsilon=0)
        with self.assertRaises(ValidationError):
            InstanceSpec(kind="from_file")
        with self.assertRaises(ValidationError):
            InstanceSpec(kind="equidistant")
        with self.assertRaises(ValidationError):
            InstanceSpec(kind="dumbbell", n=4, sizes=(3, 2))
        with self.assertRaises(ValidationError):
            InstanceSpec(kind="lattice", n=3)


class TestIngest(unittest.TestCase):
    def test_exact_parsing(self):
        profile = ingest(io.StringIO('{"epsilon": "0.1", "opinions": ["1/3", 0.1, 2]}'))
        self.assertEqual(profile.epsilon, F(1, 10))
        self.assertEqual(profile.opinions, (F(1, 10), F(1, 3), 2))

    def test_sorts_unsorted_input(self):
        profile = ingest(io.StringIO('{"epsilon": "1", "opinions": ["2", "0", "1/2"]}'))
        self.assertEqual(profile.opinions, (0, F(1, 2), 2))

    def test_errors(self):
        for document in [
            '{"epsilon": "1", "opinions": ["1/0"]}',
            '{"epsilon": "1", "opinions": ["one"]}',
            '{"epsilon": "0", "opinions": ["0"]}',
            '{"epsilon": "-1", "opinions": ["0"]}',
            '{"epsilon": "1", "opinions": []}',
            '{"opinions": ["0"]}',
            '["0", "1"]',
            "not json",
        ]:
            with self.subTest(document=document), self.assertRaises(ValueError):
                ingest(io.StringIO(document))

    def test_emit_and_dump(self):
        profile = OpinionProfile(epsilon=F(1, 2), opinions=(0, F(1, 3), 1))
        self.assertEqual(emit(profile), {"epsilon": "1/2", "opinions": ["0", "1/3", "1"]})
        with tempfile.TemporaryDirectory() as tmpdir:
            path = Path(tmpdir) / "profile.json"
            dump(profile, path)
            self.assertEqual(ingest(path), profile)
            self.assertEqual(ingest(str(path)), profile)


class TestResolveMaxDenominator(unittest.TestCase):
    def test_precedence(self):
        with mock.patch.dict(os.environ, {constants.ENV_MAX_DENOM: "77"}):
            self.assertEqual(resolve_max_denominator(5, 1000), 5)
            self.assertEqual(resolve_max_denominator(None, 1000), 77)
        with mock.patch.dict(os.environ, {}, clear=True):
            self.assertEqual(resolve_max_denominator(None, 1000), 1000)
        with mock.patch.dict(os.environ, {constants.ENV_MAX_DENOM: "many"}), self.assertRaises(ValueError):
            resolve_max_denominator(None, 1000)


if __name__ == "__main__":
    unittest.main()
