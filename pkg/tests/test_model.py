import unittest
import os
import io
import json
import shutil
import tempfile

import numpy as np

from stepgrid import model
from stepgrid.model import factory, ClipInterval, ScoreMap, ScoreStack, Assignment, \
	AssignmentEntry, interval_iou, intervals_overlap, valid_mask, iou_map


class TestIntervals(unittest.TestCase):

	def test_clip_interval(self):
		i = ClipInterval(3, 6)
		self.assertEqual(i.length, 4)
		self.assertEqual(str(i), "[3, 6]")
		self.assertEqual(ClipInterval(2, 2).length, 1)
		self.assertRaises(model.DataError, ClipInterval, 4, 3)
		self.assertRaises(model.DataError, ClipInterval, -1, 3)
		self.assertRaises(model.DataError, ClipInterval, 0.5, 3)

	def test_iou(self):
		self.assertEqual(interval_iou(ClipInterval(3, 6), ClipInterval(3, 6)), 1.0)
		self.assertEqual(interval_iou(ClipInterval(0, 1), ClipInterval(2, 5)), 0.0)
		self.assertAlmostEqual(interval_iou(ClipInterval(0, 3), ClipInterval(2, 5)), 1.0 / 3)

	def test_overlap(self):
		self.assertFalse(intervals_overlap(ClipInterval(0, 2), ClipInterval(3, 5)))
		self.assertTrue(intervals_overlap(ClipInterval(0, 2), ClipInterval(2, 5)))
		self.assertTrue(intervals_overlap(ClipInterval(1, 1), ClipInterval(1, 1)))

	def test_iou_properties(self):
		rng = np.random.default_rng(11)
		for trial in range(500):
			(s1, s2) = rng.integers(0, 20, 2)
			a = ClipInterval(int(s1), int(s1 + rng.integers(0, 10)))
			b = ClipInterval(int(s2), int(s2 + rng.integers(0, 10)))
			iou = interval_iou(a, b)
			self.assertEqual(iou, interval_iou(b, a))
			self.assertEqual(iou == 1.0, a == b)
			self.assertEqual(intervals_overlap(a, b), iou > 0)
			self.assertTrue(0.0 <= iou <= 1.0)

	def test_iou_map(self):
		gt = ClipInterval(1, 3)
		m = iou_map(5, gt)
		for s in range(5):
			for n in range(5):
				if s > n:
					self.assertTrue(np.isnan(m[s, n]))
				else:
					self.assertAlmostEqual(m[s, n], interval_iou(ClipInterval(s, n), gt))


class TestScoreMaps(unittest.TestCase):

	def test_valid_mask(self):
		m = valid_mask(3)
		self.assertEqual(int(m.sum()), 6)
		self.assertFalse(m[2, 0])
		self.assertRaises(ValueError, m.__setitem__, (0, 0), False)
		self.assertRaises(model.DataError, valid_mask, 0)

	def test_masking(self):
		vals = np.arange(9, dtype=float).reshape(3, 3)
		sm = ScoreMap(vals)
		self.assertTrue(np.isnan(sm.values[1, 0]))
		self.assertTrue(np.isnan(sm.values[2, 1]))
		self.assertEqual(sm[0, 2], 2.0)
		self.assertRaises(model.DataError, sm.__getitem__, (2, 0))
		self.assertEqual(list(sm.valid_values()), [0.0, 1.0, 2.0, 4.0, 5.0, 8.0])
		self.assertRaises(ValueError, sm.values.__setitem__, (0, 0), 1.0)

	def test_bad_maps(self):
		self.assertRaises(model.DataError, ScoreMap, np.zeros((2, 3)))
		vals = np.zeros((3, 3))
		vals[0, 1] = np.nan
		self.assertRaises(model.DataError, ScoreMap, vals)
		vals = np.zeros((3, 3))
		vals[2, 0] = np.inf
		# invalid cells are overwritten, never read
		self.assertTrue(np.isnan(ScoreMap(vals).values[2, 0]))

	def test_argmax_ties(self):
		sm = ScoreMap.constant(4, 0.5)
		self.assertEqual(sm.argmax(), ClipInterval(0, 0))
		vals = np.zeros((4, 4))
		vals[1, 3] = 1.0
		vals[2, 2] = 1.0
		self.assertEqual(ScoreMap(vals).argmax(), ClipInterval(1, 3))

	def test_stack(self):
		a = ScoreMap.constant(3, 0.1)
		b = ScoreMap.constant(4, 0.1)
		self.assertRaises(model.DataError, ScoreStack, "v", [a, b])
		self.assertRaises(model.DataError, ScoreStack, "v", [])
		self.assertRaises(model.DataError, ScoreStack, "v", [a, a], ["x", "x"])
		st = ScoreStack("v", [a, a])
		self.assertEqual(st.num_queries, 2)
		self.assertEqual(st.query_ids, ("0", "1"))
		self.assertEqual(st.values.shape, (2, 3, 3))


class TestAssignment(unittest.TestCase):

	def _entries(self, spans, lps):
		return [AssignmentEntry(k, str(k), ClipInterval(*s), lp) for (k, (s, lp)) in enumerate(zip(spans, lps))]

	def test_valid(self):
		a = Assignment("v", self._entries([(0, 0), (1, 2)], [-0.2, -0.25]), -0.45, "dp")
		self.assertEqual(a.num_queries, 2)
		self.assertIsNone(a.first_overlap())
		self.assertEqual(a.overlapping_queries(), set())

	def test_overlap_rejected_for_exact(self):
		entries = self._entries([(0, 1), (1, 2)], [-0.1, -0.1])
		self.assertRaises(model.InvariantError, Assignment, "v", entries, -0.2, "dp")
		self.assertRaises(model.InvariantError, Assignment, "v", entries, -0.2, "brute")
		a = Assignment("v", entries, -0.2, "greedy")
		self.assertEqual(a.first_overlap(), (0, 1))
		self.assertEqual(a.overlapping_queries(), set([0, 1]))
		a = Assignment("v", entries, -0.2, "greedy", fallback_used=True)
		self.assertTrue(a.fallback_used)

	def test_objective_and_coverage(self):
		entries = self._entries([(0, 0), (1, 2)], [-0.2, -0.25])
		self.assertRaises(model.InvariantError, Assignment, "v", entries, -0.5, "dp")
		self.assertRaises(model.InvariantError, Assignment, "v", entries[1:], -0.25, "dp")
		self.assertRaises(model.ConfigurationError, Assignment, "v", entries, -0.45, "beam")


class TestFactory(unittest.TestCase):

	def setUp(self):
		self.saved = factory.__dict__.copy()
		self.tmp = tempfile.mkdtemp()

	def tearDown(self):
		factory.__dict__.update(self.saved)
		shutil.rmtree(self.tmp)

	def test_defaults(self):
		self.assertEqual(factory.max_exact_queries, 17)
		self.assertEqual(factory.prob_map, "clamp")
		self.assertEqual(factory.epsilon, 1e-8)
		self.assertEqual(factory.thresholds, [0.3, 0.5, 0.7])
		cfg = factory.loss_config()
		self.assertEqual((cfg.alpha, cfg.beta, cfg.iou_scale_min, cfg.iou_scale_max), (0.1, 0.05, 0.5, 1.0))

	def test_set_debug(self):
		factory.set_debug('error_on_warning')
		self.assertEqual(factory.debug_level, 'error_on_warning')
		self.assertRaises(model.ConfigurationError, factory.set_debug, 'xxx')
		self.assertRaises(model.InvariantError, factory.maybe_warn, "test")

	def test_warn_stream(self):
		strm = io.StringIO()
		factory.set_debug_stream(strm)
		factory.maybe_warn("something odd")
		self.assertEqual(strm.getvalue(), "something odd\n")
		factory.set_debug('error')
		factory.maybe_warn("squashed")
		self.assertEqual(strm.getvalue(), "something odd\n")

	def test_load_config(self):
		fn = os.path.join(self.tmp, "cfg.json")
		fh = open(fn, 'w')
		json.dump({"max_exact_queries": 12, "alpha": 0.5}, fh)
		fh.close()
		factory.load_config(fn)
		self.assertEqual(factory.solver_config().max_exact_queries, 12)
		self.assertEqual(factory.loss_config().alpha, 0.5)

		self.assertRaises(model.ConfigurationError, factory.load_config, os.path.join(self.tmp, "missing.json"))
		fh = open(fn, 'w')
		fh.write("{not json")
		fh.close()
		self.assertRaises(model.ConfigurationError, factory.load_config, fn)

	def test_bad_settings_roll_back(self):
		self.assertRaises(model.ConfigurationError, factory.apply_settings, {"fishbat": 1})
		self.assertRaises(model.ConfigurationError, factory.apply_settings, {"alpha": 0.3, "epsilon": 2.0})
		self.assertEqual(factory.alpha, 0.1)
		self.assertEqual(factory.epsilon, 1e-8)
		self.assertRaises(model.ConfigurationError, factory.apply_settings, {"workers": 0})
		self.assertRaises(model.ConfigurationError, factory.apply_settings, {"thresholds": [1.5]})

	def test_config_views(self):
		cfg = factory.solver_config(method="greedy", epsilon=None)
		self.assertEqual(cfg.method, "greedy")
		self.assertEqual(cfg.epsilon, 1e-8)
		self.assertEqual(factory.method, "dp")
		self.assertRaises(model.ConfigurationError, factory.solver_config, prob_map="softmax")
		self.assertRaises(model.ConfigurationError, factory.solver_config, max_exact_queries=0)
		self.assertRaises(model.ConfigurationError, factory.loss_config, iou_scale_min=0.7, iou_scale_max=0.7)
		self.assertRaises(model.ConfigurationError, factory.loss_config, alpha=-1)

	def test_toString(self):
		a = Assignment("v", [AssignmentEntry(0, "q", ClipInterval(1, 2), -0.5)], -0.5, "dp")
		js = json.loads(factory.toString(a))
		self.assertEqual(js['format_version'], 1)
		self.assertEqual(js['entries'][0]['start'], 1)
		self.assertEqual(list(js.keys())[:3], ['format_version', 'video_id', 'method'])

	def test_toFile(self):
		a = Assignment("v", [AssignmentEntry(0, "q", ClipInterval(1, 2), -0.5)], -0.5, "dp")
		fn = os.path.join(self.tmp, "sub", "a.json")
		factory.toFile(a, fn)
		self.assertTrue(os.path.isfile(fn))


if __name__ == '__main__':
	unittest.main()
