import unittest
import os
import shutil
import tempfile
from collections import Counter

import numpy as np

from stepgrid import model
from stepgrid.model import factory, intervals_overlap
from stepgrid.reader import Reader
from stepgrid.synthetic import SyntheticSpec, sample_disjoint_intervals, generate_synthetic, write_synthetic


class TestSpec(unittest.TestCase):

	def test_defaults(self):
		synth = SyntheticSpec()
		self.assertEqual(synth.queries_per_video, (2, 6))
		self.assertEqual(synth.noise_sigma, 0.0)

	def test_invalid(self):
		self.assertRaises(model.InfeasibleError, SyntheticSpec, 2, 4, (2, 5))
		self.assertRaises(model.ConfigurationError, SyntheticSpec, 2, 8, (4, 3))
		self.assertRaises(model.ConfigurationError, SyntheticSpec, 0, 8)
		self.assertRaises(model.ConfigurationError, SyntheticSpec, 2, 8, (1, 2), -0.1)
		self.assertRaises(model.ConfigurationError, SyntheticSpec, 2, 8, (1, 2), 0.0, 0, 0.0)
		self.assertRaises(model.ConfigurationError, SyntheticSpec, 2, 8, (1, 2), 0.0, -1)
		self.assertRaises(model.ConfigurationError, SyntheticSpec, 2, 8, (1, 2), 0.0, 0, 1.0, -1)


class TestPlacement(unittest.TestCase):

	def test_disjoint_and_ordered(self):
		rng = np.random.default_rng(70)
		for trial in range(300):
			n = int(rng.integers(1, 30))
			k = int(rng.integers(1, n + 1))
			intervals = sample_disjoint_intervals(rng, n, k)
			self.assertEqual(len(intervals), k)
			self.assertTrue(intervals[-1].end < n)
			for (a, b) in zip(intervals, intervals[1:]):
				self.assertTrue(a.end < b.start)
				self.assertFalse(intervals_overlap(a, b))

	def test_full(self):
		rng = np.random.default_rng(71)
		self.assertEqual([tuple(i) for i in sample_disjoint_intervals(rng, 4, 4)], [(0, 0), (1, 1), (2, 2), (3, 3)])
		self.assertRaises(model.InfeasibleError, sample_disjoint_intervals, rng, 3, 4)

	def test_uniform(self):
		# 15 ways to place two disjoint intervals in four clips
		rng = np.random.default_rng(72)
		counts = Counter(tuple(tuple(i) for i in sample_disjoint_intervals(rng, 4, 2)) for t in range(6000))
		self.assertEqual(len(counts), 15)
		for c in counts.values():
			self.assertTrue(250 < c < 550)


class TestGenerate(unittest.TestCase):

	def setUp(self):
		self.tmp = tempfile.mkdtemp()

	def tearDown(self):
		shutil.rmtree(self.tmp)

	def test_noiseless_argmax(self):
		for sharpness in (1.0, 2.5):
			(videos, gt) = generate_synthetic(SyntheticSpec(5, 12, (1, 5), 0.0, 3, sharpness))
			for v in videos:
				for q in v.queries:
					self.assertEqual(q.sentence.argmax(), gt.lookup(v.video_id, q.query_id))

	def test_ids_and_shapes(self):
		(videos, gt) = generate_synthetic(SyntheticSpec(3, 10, (2, 4), 0.1, 5, 1.0, 2))
		self.assertEqual([v.video_id for v in videos], ["video0000", "video0001", "video0002"])
		for v in videos:
			self.assertTrue(2 <= v.num_queries <= 4)
			self.assertEqual(v.queries[0].query_id, "q00")
			for q in v.queries:
				self.assertEqual(q.num_phrases, 2)
				self.assertEqual(q.importance_logits.shape, (3,))
				vals = q.sentence.valid_values()
				self.assertTrue(np.all(vals >= 0) and np.all(vals <= 1))
			spans = [i for (k, i) in gt.items() if k[0] == v.video_id]
			for (a, b) in zip(spans, spans[1:]):
				self.assertFalse(intervals_overlap(a, b))

	def test_deterministic(self):
		synth = SyntheticSpec(4, 10, (1, 4), 0.2, 99, 1.0, 1)
		(v1, g1) = generate_synthetic(synth)
		(v2, g2) = generate_synthetic(synth)
		self.assertEqual([factory.toString(v) for v in v1], [factory.toString(v) for v in v2])
		self.assertEqual(factory.toString(g1), factory.toString(g2))
		(v3, g3) = generate_synthetic(synth._replace(seed=100))
		self.assertNotEqual([factory.toString(v) for v in v1], [factory.toString(v) for v in v3])

	def test_write(self):
		(videos, gt) = generate_synthetic(SyntheticSpec(2, 6, (1, 3), 0.1, 1))
		for binary in (False, True):
			out = os.path.join(self.tmp, "bin" if binary else "json")
			(paths, gt_fn) = write_synthetic(videos, gt, out, binary)
			self.assertEqual(len(paths), 2)
			self.assertTrue(paths[0].endswith(".sgb" if binary else ".json"))
			reader = Reader()
			self.assertEqual(reader.read_file(paths[1]), videos[1])
			self.assertEqual(reader.read_file(gt_fn), gt)


if __name__ == '__main__':
	unittest.main()
