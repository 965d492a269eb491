import os
import time
import tracemalloc
from collections import OrderedDict, namedtuple
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from stepgrid.model import factory, ConfigurationError, DataError, InvariantError, PredictionSet, \
	VideoScores, GroundTruth, _is_int
from stepgrid.fusion import fuse_video, fused_video_scores, video_from_features, ensemble_videos
from stepgrid.solver import LogProbStack, select_video, dp_select, dp_cell_count, dp_memory_estimate
from stepgrid.losses import video_loss
from stepgrid.metrics import evaluate, compare_reports
from stepgrid.reader import Reader, expand_paths

# Tolerance bands for measured DP time ratios
QUERY_RATIO_BAND = (1.6, 2.8)
CLIP_RATIO_BAND = (3.0, 5.5)


PipelineConfig = namedtuple("PipelineConfig", [
	'inputs', # score, binary score or feature files / directories
	'ground_truth', # path to a ground-truth file, or a GroundTruth
	'output_dir', # where predictions and reports go; None writes nothing
	'methods', # e.g. ["greedy", "dp"]
	'solver', # SolverConfig; its method is replaced by each entry of methods
	'thresholds', # IoU thresholds for R@1
	'workers' # videos solved concurrently
	])


def load_videos(paths):
	"""VideoScores for every input; feature files are fused on the way in."""
	files = expand_paths(paths)
	if not files:
		raise DataError("No input files given")
	reader = Reader()
	videos = []
	seen = set()
	for fn in files:
		what = reader.read_file(fn)
		if isinstance(what, tuple):
			(vid, fmap, queries) = what
			what = video_from_features(vid, fmap, queries)
		if not isinstance(what, VideoScores):
			raise DataError("%s: expected a score or feature file" % fn)
		if what.video_id in seen:
			raise DataError("%s: video '%s' appears in more than one input" % (fn, what.video_id))
		seen.add(what.video_id)
		videos.append(what)
	return videos

def load_ground_truth(source):
	if isinstance(source, GroundTruth):
		return source
	gt = Reader().read_file(source)
	if not isinstance(gt, GroundTruth):
		raise DataError("%s: expected a ground-truth file" % source)
	return gt

def _check_workers(workers):
	if not _is_int(workers) or workers < 1:
		raise ConfigurationError("workers must be a positive integer, got %r" % (workers,))

def select_videos(videos, solver_cfg=None, workers=1):
	"""PredictionSet in input order, whatever the worker count."""
	if solver_cfg is None:
		solver_cfg = factory.solver_config()
	_check_workers(workers)
	videos = list(videos)
	if not videos:
		raise DataError("No videos to select on")
	fn = lambda v: select_video(fuse_video(v), solver_cfg)
	if workers == 1:
		assignments = [fn(v) for v in videos]
	else:
		with ThreadPoolExecutor(max_workers=workers) as pool:
			assignments = list(pool.map(fn, videos))
	return PredictionSet(solver_cfg.method, assignments)

def fuse_inputs(paths, outdir, ensemble=False, binary=False):
	"""Write one fused score file per video; with ensemble, each path is one member run."""
	if ensemble:
		if len(paths) < 2:
			raise DataError("An ensemble needs at least two member inputs")
		videos = ensemble_videos([load_videos([p]) for p in paths])
	else:
		videos = [fused_video_scores(v) for v in load_videos(paths)]
	written = []
	for v in videos:
		if binary:
			fn = os.path.join(outdir, v.video_id + ".sgb")
			factory.toBinary(v, fn)
		else:
			fn = os.path.join(outdir, v.video_id + ".json")
			factory.toFile(v, fn, compact=True)
		written.append(fn)
	return written

def _measure(fn):
	tracemalloc.start()
	t0 = time.perf_counter()
	try:
		result = fn()
		elapsed = time.perf_counter() - t0
		peak = tracemalloc.get_traced_memory()[1]
	finally:
		tracemalloc.stop()
	return (result, elapsed, peak)

def run_pipeline(config):
	"""Select with each method, evaluate, and write predictions and reports.

	Returns an OrderedDict method -> (PredictionSet, EvalReport).
	"""
	if not config.methods:
		raise ConfigurationError("At least one selection method is required")
	videos = load_videos(config.inputs)
	gt = load_ground_truth(config.ground_truth)
	thresholds = factory.check_thresholds(config.thresholds or factory.thresholds)
	results = OrderedDict()
	for method in config.methods:
		cfg = config.solver._replace(method=method)
		(preds, elapsed, peak) = _measure(lambda: select_videos(videos, cfg, config.workers))
		report = evaluate(preds, gt, thresholds, elapsed, peak)
		results[method] = (preds, report)
		if config.output_dir:
			factory.toFile(preds, os.path.join(config.output_dir, "predictions_%s.json" % method))
			factory.toFile(report, os.path.join(config.output_dir, "report_%s.json" % method))
	if config.output_dir:
		fh = open(os.path.join(config.output_dir, "report.txt"), 'w')
		for (preds, report) in results.values():
			fh.write(report.as_text() + "\n\n")
		fh.write(compare_reports([r for (p, r) in results.values()]) + "\n")
		fh.close()
	return results


class LossSummary(object):

	def __init__(self, reports, cfg):
		self.reports = list(reports)
		self.config = cfg

	def mean(self, field):
		return float(np.mean([getattr(r, field) for r in self.reports]))

	def _toJSON(self):
		out = OrderedDict()
		out['kind'] = "loss"
		out['alpha'] = self.config.alpha
		out['beta'] = self.config.beta
		out['iou_scale_min'] = self.config.iou_scale_min
		out['iou_scale_max'] = self.config.iou_scale_max
		out['mean'] = OrderedDict((f, self.mean(f)) for f in ['bce', 'mm', 'exc', 'total'])
		out['videos'] = [r._toJSON() for r in self.reports]
		return out

	def as_text(self):
		lines = ["alpha=%g beta=%g iou_scale=[%g, %g]" % self.config]
		for r in self.reports:
			lines.append("%-16s bce=%.6f mm=%.6f exc=%.6f total=%.6f" % (r.video_id, r.bce, r.mm, r.exc, r.total))
		lines.append("%-16s bce=%.6f mm=%.6f exc=%.6f total=%.6f" % (
			"mean", self.mean('bce'), self.mean('mm'), self.mean('exc'), self.mean('total')))
		return '\n'.join(lines)


def loss_batch(videos, gt, cfg=None, solver_cfg=None, mm=0.0):
	if cfg is None:
		cfg = factory.loss_config()
	videos = list(videos)
	if not videos:
		raise DataError("No videos to score")
	return LossSummary([video_loss(fuse_video(v), gt, cfg, mm, solver_cfg) for v in videos], cfg)


def random_logprob(rng, num_queries, num_clips, epsilon=1e-8):
	return LogProbStack(np.log(rng.uniform(epsilon, 1.0, (num_queries, num_clips, num_clips))),
		"bench-K%s-N%s" % (num_queries, num_clips))


class BenchReport(object):

	def __init__(self, runs, ratios):
		self.runs = runs
		self.ratios = ratios

	def _toJSON(self):
		out = OrderedDict()
		out['kind'] = "bench"
		out['runs'] = self.runs
		out['ratios'] = self.ratios
		return out

	def as_text(self):
		lines = []
		for r in self.runs:
			lines.append("K=%-3s N=%-4s time=%.4fs peak=%s bytes est=%s bytes cells=%s" % (
				r['num_queries'], r['num_clips'], r['seconds'], r['peak_memory_bytes'],
				r['memory_estimate_bytes'], r['cell_evaluations']))
		for (name, info) in self.ratios.items():
			tr = "-" if info['time_ratio'] is None else "%.2f" % info['time_ratio']
			lines.append("%s: time x%s (band %s-%s, %s), cells x%.3f" % (name, tr,
				info['band'][0], info['band'][1], "ok" if info['within_band'] else "outside", info['cell_ratio']))
		return '\n'.join(lines)


def _bench_one(rng, k, n, repeats, max_exact):
	instances = [random_logprob(rng, k, n) for r in range(repeats)]
	# untimed warm-up, traced for peak memory
	(a, elapsed, peak) = _measure(lambda: dp_select(instances[0], max_exact))
	best = None
	for logp in instances:
		t0 = time.perf_counter()
		dp_select(logp, max_exact)
		elapsed = time.perf_counter() - t0
		best = elapsed if best is None else min(best, elapsed)
	return OrderedDict([('num_queries', k), ('num_clips', n), ('seconds', best),
		('peak_memory_bytes', peak), ('memory_estimate_bytes', dp_memory_estimate(k, n)),
		('cell_evaluations', dp_cell_count(k, n))])

def _ratio(name, base, other, band, enforce):
	if base['seconds'] > 0:
		tr = other['seconds'] / base['seconds']
	else:
		tr = None # below timer resolution
	ok = tr is not None and band[0] <= tr <= band[1]
	if not ok:
		msg = "bench %s: time ratio %s outside [%s, %s]" % (name, tr, band[0], band[1])
		if enforce:
			raise InvariantError(msg)
		factory.maybe_warn(msg)
	return OrderedDict([('time_ratio', tr), ('band', list(band)), ('within_band', ok),
		('cell_ratio', float(other['cell_evaluations']) / base['cell_evaluations'])])

def bench(num_queries, num_clips, repeats=3, seed=0, cap=None, scaling=True, enforce=False):
	"""Time dp_select at (K, N) and, with scaling, at (K+1, N) and (K, 2N).

	With enforce, a time ratio outside its band raises InvariantError;
	otherwise it is reported and warned about. The bands hold once the
	candidate blocks dominate the per-clip overhead, from about K=6, N=64.
	"""
	if cap is None:
		cap = factory.max_bench_queries
	if not _is_int(repeats) or repeats < 1:
		raise ConfigurationError("repeats must be a positive integer")
	if not _is_int(num_queries) or num_queries < 1 or num_queries > cap:
		raise ConfigurationError("Bench needs 1 <= K <= %s, got %r" % (cap, num_queries))
	if not _is_int(num_clips) or num_clips < num_queries:
		raise ConfigurationError("Bench needs N >= K, got N=%r" % (num_clips,))
	rng = np.random.default_rng(seed)
	max_exact = max(cap, num_queries + 1)
	base = _bench_one(rng, num_queries, num_clips, repeats, max_exact)
	runs = [base]
	ratios = OrderedDict()
	if scaling:
		if num_queries + 1 <= cap and num_queries + 1 <= num_clips:
			more = _bench_one(rng, num_queries + 1, num_clips, repeats, max_exact)
			runs.append(more)
			ratios['add_query'] = _ratio('add_query', base, more, QUERY_RATIO_BAND, enforce)
		wider = _bench_one(rng, num_queries, 2 * num_clips, repeats, max_exact)
		runs.append(wider)
		ratios['double_clips'] = _ratio('double_clips', base, wider, CLIP_RATIO_BAND, enforce)
	return BenchReport(runs, ratios)
