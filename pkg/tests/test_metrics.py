import unittest
import io
import json

import numpy as np

from stepgrid import model
from stepgrid.model import factory, ClipInterval, Assignment, AssignmentEntry, PredictionSet, GroundTruth
from stepgrid.metrics import recall_at_iou, average_recall, overlap_fraction, evaluate, compare_reports


def assignment(vid, spans, method="greedy"):
	entries = [AssignmentEntry(k, "q%s" % k, ClipInterval(*s), -0.1) for (k, s) in enumerate(spans)]
	return Assignment(vid, entries, -0.1 * len(spans), method)


class TestRecall(unittest.TestCase):

	def test_exact(self):
		pairs = [("a", ClipInterval(0, 3)), ("b", ClipInterval(5, 5))]
		for t in (0.0, 0.3, 0.7, 1.0):
			self.assertEqual(recall_at_iou(pairs, pairs, t), 100.0)

	def test_half(self):
		gt = [(q, ClipInterval(0, 3)) for q in "abcd"]
		preds = [("a", ClipInterval(0, 3)), ("b", ClipInterval(0, 1)), ("c", ClipInterval(1, 3)), ("d", ClipInterval(4, 6))]
		# IoUs 1.0, 0.5, 0.75, 0.0
		self.assertEqual(recall_at_iou(preds, gt, 0.5), 75.0)
		self.assertEqual(recall_at_iou(preds[:1] + preds[3:] + preds[1:2] + [("c", ClipInterval(3, 6))], gt, 0.5), 50.0)

	def test_threshold_zero(self):
		gt = [("a", ClipInterval(0, 3)), ("b", ClipInterval(4, 7))]
		preds = [("a", ClipInterval(3, 9)), ("b", ClipInterval(0, 4))]
		self.assertEqual(recall_at_iou(preds, gt, 0.0), 100.0)

	def test_errors(self):
		self.assertRaises(model.DataError, recall_at_iou, [("x", ClipInterval(0, 0))], [("a", ClipInterval(0, 0))], 0.5)
		self.assertRaises(model.DataError, recall_at_iou, [], [("a", ClipInterval(0, 0))], 0.5)

	def test_monotone(self):
		rng = np.random.default_rng(50)
		gt = []
		preds = []
		for q in range(50):
			s = int(rng.integers(0, 20))
			gt.append((q, ClipInterval(s, s + int(rng.integers(0, 10)))))
			s = int(rng.integers(0, 20))
			preds.append((q, ClipInterval(s, s + int(rng.integers(0, 10)))))
		values = [recall_at_iou(preds, gt, t) for t in np.linspace(0, 1, 21)]
		for (a, b) in zip(values, values[1:]):
			self.assertTrue(a >= b)


class TestAverage(unittest.TestCase):

	def test_published_rows(self):
		self.assertTrue(abs(average_recall([59.43, 46.73, 27.57]) - 44.58) <= 0.01)
		self.assertTrue(abs(average_recall([70.22, 56.83, 34.73]) - 53.93) <= 0.01)
		self.assertAlmostEqual(average_recall([12.5, 12.5, 12.5]), 12.5)

	def test_empty(self):
		self.assertRaises(model.DataError, average_recall, [])


class TestOverlap(unittest.TestCase):

	def test_examples(self):
		self.assertEqual(overlap_fraction([assignment("v", [(0, 2), (3, 5)], "dp")]), 0.0)
		self.assertEqual(overlap_fraction([assignment("v", [(1, 4), (1, 4)])]), 100.0)
		self.assertAlmostEqual(overlap_fraction([assignment("v", [(0, 2), (1, 4), (6, 8)])]), 200 / 3.0)
		self.assertEqual(overlap_fraction([]), 0.0)

	def test_per_video(self):
		# the same span in different videos is not an overlap
		a = [assignment("v1", [(0, 3)]), assignment("v2", [(0, 3)])]
		self.assertEqual(overlap_fraction(a), 0.0)


class TestEvaluate(unittest.TestCase):

	def setUp(self):
		self.saved = factory.__dict__.copy()
		self.log = io.StringIO()
		factory.set_debug_stream(self.log)
		self.gt = GroundTruth()
		self.gt.add_video("v1", 10, [("q0", ClipInterval(0, 3)), ("q1", ClipInterval(4, 7))])
		self.gt.add_video("v2", 10, [("q0", ClipInterval(2, 2))])

	def tearDown(self):
		factory.__dict__.update(self.saved)

	def test_report(self):
		preds = PredictionSet("greedy", [assignment("v1", [(0, 3), (0, 5)]), assignment("v2", [(2, 2)])])
		report = evaluate(preds, self.gt, [0.7, 0.3, 0.5])
		self.assertEqual(list(report.recall_at.keys()), [0.3, 0.5, 0.7])
		self.assertAlmostEqual(report.recall_at[0.3], 200 / 3.0)
		self.assertAlmostEqual(report.avg, sum(report.recall_at.values()) / 3)
		self.assertEqual(report.overlap_fraction, 200 / 3.0)
		self.assertEqual((report.num_videos, report.num_queries, report.fallback_count), (2, 3, 0))
		js = json.loads(factory.toString(report))
		self.assertEqual(js['kind'], "report")
		self.assertEqual(sorted(js['recall_at'].keys()), ["0.3", "0.5", "0.7"])
		self.assertIn("AVG:", report.as_text())

	def test_video_order(self):
		a = [assignment("v1", [(0, 3), (0, 5)]), assignment("v2", [(2, 2)])]
		r1 = evaluate(PredictionSet("greedy", a), self.gt)
		r2 = evaluate(PredictionSet("greedy", a[::-1]), self.gt)
		self.assertEqual(r1._toJSON(), r2._toJSON())

	def test_missing_prediction_warns(self):
		report = evaluate(PredictionSet("dp", [assignment("v2", [(2, 2)], "dp")]), self.gt)
		self.assertEqual(report.avg, 100.0)
		self.assertIn("no prediction", self.log.getvalue())

	def test_fallback_count(self):
		entries = [AssignmentEntry(0, "q0", ClipInterval(0, 3), -0.1)]
		a = Assignment("v2", entries, -0.1, "greedy", fallback_used=True)
		report = evaluate(PredictionSet("dp", [a]), self.gt, [0.5])
		self.assertEqual(report.fallback_count, 1)
		self.assertEqual(report.recall_at[0.5], 0.0)

	def test_bad_thresholds(self):
		preds = PredictionSet("dp", [assignment("v2", [(2, 2)], "dp")])
		self.assertRaises(model.ConfigurationError, evaluate, preds, self.gt, [])
		self.assertRaises(model.ConfigurationError, evaluate, preds, self.gt, [1.2])

	def test_compare(self):
		r1 = evaluate(PredictionSet("greedy", [assignment("v2", [(2, 2)])]), self.gt)
		r2 = evaluate(PredictionSet("dp", [assignment("v2", [(2, 3)], "dp")]), self.gt)
		table = compare_reports([r1, r2]).split('\n')
		self.assertEqual(len(table), 3)
		self.assertTrue(table[1].startswith("greedy"))
		self.assertTrue(table[2].startswith("dp"))
		self.assertEqual(compare_reports([]), "")


if __name__ == '__main__':
	unittest.main()
