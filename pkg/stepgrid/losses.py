"""Training losses as plain functions of score maps.

No optimisation happens here; the functions let stored predictions be
scored against ground truth the way they were supervised.
"""

from collections import OrderedDict

import numpy as np

from stepgrid.model import factory, DataError, ScoreMap, ScoreStack, \
	valid_mask, iou_map
from stepgrid.solver import score_to_logprob


def iou_targets(num_clips, gt, cfg=None):
	"""Scaled-IoU supervision map for one ground-truth interval."""
	if cfg is None:
		cfg = factory.loss_config()
	if gt.end >= num_clips:
		raise DataError("Ground truth %s is outside %s clips" % (gt, num_clips))
	iou = iou_map(num_clips, gt)
	scaled = (iou - cfg.iou_scale_min) / (cfg.iou_scale_max - cfg.iou_scale_min)
	return ScoreMap(np.clip(scaled, 0.0, 1.0))

def _pair(pred, target):
	if pred.num_clips != target.num_clips:
		raise DataError("Prediction has %s clips, target %s" % (pred.num_clips, target.num_clips))
	t = target.valid_values()
	if np.any(t < 0) or np.any(t > 1):
		raise DataError("Targets must lie in [0, 1]")
	return (pred.valid_values(), t)

def bce_loss(pred, target, epsilon=1e-8):
	"""Mean binary cross entropy over valid cells, predictions floored at epsilon on both sides."""
	(p, t) = _pair(pred, target)
	p = np.clip(p, epsilon, 1.0 - epsilon)
	loss = -(t * np.log(p) + (1.0 - t) * np.log(1.0 - p))
	return float(max(loss.mean(), 0.0))

def bce_gradient(pred, target, epsilon=1e-8):
	"""Analytic d(bce_loss)/d(pred) per valid cell; zero where the prediction is clamped."""
	(p, t) = _pair(pred, target)
	inside = (p > epsilon) & (p < 1.0 - epsilon)
	pc = np.clip(p, epsilon, 1.0 - epsilon)
	grad = np.where(inside, (-t / pc + (1.0 - t) / (1.0 - pc)) / p.size, 0.0)
	out = np.full((pred.num_clips, pred.num_clips), np.nan)
	out[pred.mask] = grad
	return ScoreMap(out)

def exclusiveness_loss(stack):
	"""Mean over valid cells of the product of the two highest query scores."""
	if stack.num_queries == 1:
		return 0.0
	mask = valid_mask(stack.num_clips)
	cells = stack.values[:, mask]
	if np.any(cells < 0) or np.any(cells > 1):
		raise DataError("Exclusiveness loss needs scores mapped into [0, 1]")
	top = np.sort(cells, axis=0)
	return float(np.mean(top[-1] * top[-2]))

def total_loss(bce, mm, exc, cfg=None):
	if cfg is None:
		cfg = factory.loss_config()
	if not all(np.isfinite(x) for x in (bce, mm, exc)):
		raise DataError("Loss components must be finite")
	return bce + cfg.alpha * mm + cfg.beta * exc


class LossReport(object):

	def __init__(self, video_id, bce, mm, exc, cfg):
		self.video_id = video_id
		self.bce = bce
		self.mm = mm
		self.exc = exc
		self.total = total_loss(bce, mm, exc, cfg)
		self.config = cfg

	def _toJSON(self):
		return OrderedDict([('video_id', self.video_id), ('bce', self.bce), ('mm', self.mm),
			('exclusiveness', self.exc), ('total', self.total),
			('alpha', self.config.alpha), ('beta', self.config.beta)])


def probability_stack(stack, prob_map="clamp", epsilon=1e-8, sigmoid_scale=1.0):
	"""ScoreStack of per-proposal probabilities under a probability mapping."""
	lp = score_to_logprob(stack, prob_map, epsilon, sigmoid_scale).logp
	mask = valid_mask(stack.num_clips)
	maps = []
	for k in range(stack.num_queries):
		p = np.full(mask.shape, np.nan)
		p[mask] = np.exp(lp[k][mask])
		maps.append(ScoreMap(p))
	return ScoreStack(stack.video_id, maps, stack.query_ids)

def video_loss(stack, ground_truth, cfg=None, mm=0.0, solver_cfg=None):
	"""LossReport for one video; BCE is averaged over its queries."""
	if cfg is None:
		cfg = factory.loss_config()
	if solver_cfg is None:
		solver_cfg = factory.solver_config()
	probs = probability_stack(stack, solver_cfg.prob_map, solver_cfg.epsilon, solver_cfg.sigmoid_scale)
	bces = []
	for (qid, pmap) in zip(probs.query_ids, probs.maps):
		gt = ground_truth.lookup(stack.video_id, qid)
		bces.append(bce_loss(pmap, iou_targets(stack.num_clips, gt, cfg), solver_cfg.epsilon))
	return LossReport(stack.video_id, float(np.mean(bces)), float(mm), exclusiveness_loss(probs), cfg)
