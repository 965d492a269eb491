"""Seeded synthetic videos standing in for a real grounding dataset.

Every video gets K disjoint ground-truth intervals, sampled uniformly over
all disjoint placements, and one score map per query that peaks at its
interval: score = clamp(IoU^sharpness + noise, 0, 1).
"""

import os
from collections import namedtuple

import numpy as np

from stepgrid.model import factory, ClipInterval, ScoreMap, QueryScores, VideoScores, \
	GroundTruth, ConfigurationError, InfeasibleError, valid_mask, iou_map, _is_int


class SyntheticSpec(namedtuple("SyntheticSpec", ['num_videos', 'num_clips', 'queries_per_video',
	'noise_sigma', 'seed', 'score_sharpness', 'num_phrases'])):

	__slots__ = ()

	def __new__(cls, num_videos=10, num_clips=32, queries_per_video=(2, 6), noise_sigma=0.0,
		seed=0, score_sharpness=1.0, num_phrases=0):
		(lo, hi) = queries_per_video
		if not _is_int(num_videos) or num_videos < 1:
			raise ConfigurationError("num_videos must be a positive integer")
		if not _is_int(num_clips) or num_clips < 1:
			raise ConfigurationError("num_clips must be a positive integer")
		if not _is_int(lo) or not _is_int(hi) or lo < 1 or lo > hi:
			raise ConfigurationError("queries_per_video must be a range 1 <= lo <= hi, got %r" % (queries_per_video,))
		if hi > num_clips:
			raise InfeasibleError("%s disjoint queries cannot fit in %s clips" % (hi, num_clips))
		if noise_sigma < 0:
			raise ConfigurationError("noise_sigma must be non-negative")
		if not score_sharpness > 0:
			raise ConfigurationError("score_sharpness must be positive")
		if not _is_int(seed) or not 0 <= seed < 2**64:
			raise ConfigurationError("seed must be a 64-bit unsigned integer")
		if not _is_int(num_phrases) or num_phrases < 0:
			raise ConfigurationError("num_phrases must be a non-negative integer")
		return super(SyntheticSpec, cls).__new__(cls, num_videos, num_clips, (lo, hi),
			float(noise_sigma), int(seed), float(score_sharpness), num_phrases)


def sample_disjoint_intervals(rng, num_clips, k):
	"""k disjoint intervals in temporal order, uniform over all placements.

	Placements map one-to-one onto 2k-subsets of {0 .. N+k-1}: the i-th
	interval [s, e] becomes the pair (s + i, e + i + 1).
	"""
	if k > num_clips:
		raise InfeasibleError("%s disjoint intervals cannot fit in %s clips" % (k, num_clips))
	pts = np.sort(rng.choice(num_clips + k, 2 * k, replace=False))
	return [ClipInterval(int(pts[2*i] - i), int(pts[2*i+1] - i - 1)) for i in range(k)]

def _peaked_map(rng, num_clips, gt, synth):
	vals = iou_map(num_clips, gt) ** synth.score_sharpness
	if synth.noise_sigma > 0:
		vals = vals + rng.normal(0.0, synth.noise_sigma, vals.shape)
	vals = np.clip(vals, 0.0, 1.0)
	vals[~valid_mask(num_clips)] = np.nan
	return ScoreMap(vals)

def generate_synthetic(synth):
	"""(list of VideoScores, GroundTruth), fully determined by synth.seed."""
	rng = np.random.default_rng(synth.seed)
	n = synth.num_clips
	(lo, hi) = synth.queries_per_video
	videos = []
	gt = GroundTruth()
	for v in range(synth.num_videos):
		vid = "video%04d" % v
		k = int(rng.integers(lo, hi + 1))
		intervals = sample_disjoint_intervals(rng, n, k)
		# queries need not follow temporal order
		order = rng.permutation(k)
		pairs = []
		queries = []
		for (q, idx) in enumerate(order):
			qid = "q%02d" % q
			interval = intervals[int(idx)]
			pairs.append((qid, interval))
			sentence = _peaked_map(rng, n, interval, synth)
			phrases = [_peaked_map(rng, n, interval, synth) for p in range(synth.num_phrases)]
			logits = rng.normal(0.0, 1.0, synth.num_phrases + 1) if synth.num_phrases else None
			queries.append(QueryScores(qid, sentence, phrases, logits))
		gt.add_video(vid, n, pairs)
		videos.append(VideoScores(vid, n, queries))
	return (videos, gt)

def write_synthetic(videos, gt, outdir, binary=False):
	"""Writes OUTDIR/scores/<video>.json (or .sgb) and OUTDIR/ground_truth.json; returns the paths."""
	paths = []
	for v in videos:
		if binary:
			fn = os.path.join(outdir, "scores", v.video_id + ".sgb")
			factory.toBinary(v, fn)
		else:
			fn = os.path.join(outdir, "scores", v.video_id + ".json")
			factory.toFile(v, fn, compact=True)
		paths.append(fn)
	gt_fn = os.path.join(outdir, "ground_truth.json")
	factory.toFile(gt, gt_fn)
	return (paths, gt_fn)
