from collections import OrderedDict

from stepgrid.model import factory, DataError, interval_iou


def recall_at_iou(predictions, ground_truth, threshold):
	"""R@1: percentage of predicted queries whose interval reaches IoU >= threshold.

	predictions and ground_truth are (query id, ClipInterval) pairs; a
	query id may be any hashable, e.g. (video_id, query_id).
	"""
	gt = dict(ground_truth)
	predictions = list(predictions)
	if not predictions:
		raise DataError("No predictions to evaluate")
	hits = 0
	for (qid, interval) in predictions:
		if not qid in gt:
			raise DataError("No ground truth for predicted query %r" % (qid,))
		if interval_iou(interval, gt[qid]) >= threshold:
			hits += 1
	return 100.0 * hits / len(predictions)

def average_recall(recalls):
	recalls = list(recalls)
	if not recalls:
		raise DataError("Cannot average an empty list of recalls")
	return sum(recalls) / len(recalls)

def overlap_fraction(assignments):
	"""Percentage of queries overlapping at least one other prediction of their video."""
	total = 0
	hit = 0
	for a in assignments:
		total += a.num_queries
		hit += len(a.overlapping_queries())
	if not total:
		return 0.0
	return 100.0 * hit / total


class EvalReport(object):

	def __init__(self, recall_at, avg, overlap, num_videos, num_queries, fallback_count,
		method="", runtime_seconds=None, peak_memory_bytes=None):
		self.recall_at = recall_at
		self.avg = avg
		self.overlap_fraction = overlap
		self.num_videos = num_videos
		self.num_queries = num_queries
		self.fallback_count = fallback_count
		self.method = method
		self.runtime_seconds = runtime_seconds
		self.peak_memory_bytes = peak_memory_bytes

	def _toJSON(self):
		out = OrderedDict()
		out['kind'] = "report"
		out['method'] = self.method
		out['recall_at'] = OrderedDict(("%g" % t, v) for (t, v) in self.recall_at.items())
		out['avg'] = self.avg
		out['overlap_fraction'] = self.overlap_fraction
		out['num_videos'] = self.num_videos
		out['num_queries'] = self.num_queries
		out['fallback_count'] = self.fallback_count
		if self.runtime_seconds is not None:
			out['runtime_seconds'] = self.runtime_seconds
		if self.peak_memory_bytes is not None:
			out['peak_memory_bytes'] = self.peak_memory_bytes
		return out

	def as_text(self):
		lines = ["method: %s" % (self.method or "-")]
		for (t, v) in self.recall_at.items():
			lines.append("R@1 IoU=%g: %6.2f" % (t, v))
		lines.append("AVG:        %6.2f" % self.avg)
		lines.append("overlap:    %6.2f%%" % self.overlap_fraction)
		lines.append("videos: %s  queries: %s  fallbacks: %s" % (
			self.num_videos, self.num_queries, self.fallback_count))
		if self.runtime_seconds is not None:
			lines.append("runtime: %.3fs" % self.runtime_seconds)
		if self.peak_memory_bytes is not None:
			lines.append("peak memory: %s bytes" % self.peak_memory_bytes)
		return '\n'.join(lines)


def evaluate(predictions, ground_truth, thresholds=None, runtime_seconds=None, peak_memory_bytes=None):
	"""EvalReport for a PredictionSet against a GroundTruth."""
	if thresholds is None:
		thresholds = factory.thresholds
	thresholds = factory.check_thresholds(thresholds)
	pairs = list(predictions.items())
	gt_pairs = list(ground_truth.items())
	predicted = set(k for (k, v) in pairs)
	missing = [k for (k, v) in gt_pairs if k not in predicted]
	if missing:
		factory.maybe_warn("%s ground-truth queries have no prediction, e.g. %r" % (len(missing), missing[0]))
	recall = OrderedDict()
	for t in sorted(thresholds):
		recall[t] = recall_at_iou(pairs, gt_pairs, t)
	assignments = predictions.assignments
	return EvalReport(recall, average_recall(recall.values()), overlap_fraction(assignments),
		len(assignments), len(pairs), sum(1 for a in assignments if a.fallback_used),
		predictions.method, runtime_seconds, peak_memory_bytes)

def compare_reports(reports):
	"""Ablation table, one row per report."""
	reports = list(reports)
	if not reports:
		return ""
	thresholds = list(reports[0].recall_at.keys())
	head = "%-10s" % "method" + ''.join("  IoU=%-4g" % t for t in thresholds) + "     AVG  overlap%"
	lines = [head]
	for r in reports:
		cells = ''.join("  %8.2f" % r.recall_at.get(t, float('nan')) for t in thresholds)
		lines.append("%-10s%s  %6.2f  %8.2f" % (r.method, cells, r.avg, r.overlap_fraction))
	return '\n'.join(lines)


class ReportSet(object):
	"""Several EvalReports kept in one document, in input order."""

	def __init__(self, reports):
		self.reports = list(reports)

	def _toJSON(self):
		out = OrderedDict()
		out['kind'] = "reports"
		out['reports'] = [r._toJSON() for r in self.reports]
		return out
