from collections import namedtuple

import numpy as np

from stepgrid.model import DataError, DegenerateFeatureError, ScoreMap, ScoreStack, \
	QueryScores, VideoScores, valid_mask


class ImportanceWeights(namedtuple("ImportanceWeights", ['sentence_weight', 'phrase_weights'])):
	"""Convex coefficients over the sentence map and its phrase maps"""

	__slots__ = ()

	def __new__(cls, sentence_weight, phrase_weights=()):
		pw = tuple(float(w) for w in phrase_weights)
		sw = float(sentence_weight)
		if sw < 0 or any(w < 0 for w in pw):
			raise DataError("Importance weights must be non-negative")
		if abs(sw + sum(pw) - 1.0) > 1e-6:
			raise DataError("Importance weights must sum to 1, got %r" % (sw + sum(pw)))
		return super(ImportanceWeights, cls).__new__(cls, sw, pw)


def cosine_score_map(features, text):
	"""Cosine similarity between every valid proposal vector and a text vector."""
	text = np.asarray(text, dtype=np.float64)
	if text.shape != (features.dim,):
		raise DataError("Text feature has shape %r, feature map dim is %s" % (text.shape, features.dim))
	tnorm = np.linalg.norm(text)
	if tnorm == 0:
		raise DegenerateFeatureError("degenerate text feature")
	n = features.num_clips
	mask = valid_mask(n)
	cells = features.values[mask]
	cnorm = np.linalg.norm(cells, axis=1)
	if np.any(cnorm == 0):
		bad = np.argwhere(mask)[int(np.argmax(cnorm == 0))]
		raise DegenerateFeatureError("degenerate proposal feature at cell (%s, %s)" % (bad[0], bad[1]))
	scores = np.full((n, n), np.nan)
	# clip guards against rounding just outside [-1, 1]
	scores[mask] = np.clip(cells.dot(text) / (cnorm * tnorm), -1.0, 1.0)
	return ScoreMap(scores)

def softmax_importance(logits):
	logits = np.asarray(logits, dtype=np.float64)
	if logits.ndim != 1 or not logits.size:
		raise DataError("Importance logits must be a non-empty vector")
	if not np.all(np.isfinite(logits)):
		raise DataError("Importance logits must be finite")
	e = np.exp(logits - logits.max())
	w = e / e.sum()
	return ImportanceWeights(w[0], w[1:])

def fuse_score_maps(sentence_map, phrase_maps, weights):
	"""Weighted sum w_s*S_s + sum_i w_i*S_i; no re-normalization."""
	phrase_maps = list(phrase_maps)
	if len(phrase_maps) != len(weights.phrase_weights):
		raise DataError("Got %s phrase maps but %s phrase weights" % (len(phrase_maps), len(weights.phrase_weights)))
	for p in phrase_maps:
		if p.num_clips != sentence_map.num_clips:
			raise DataError("Phrase map has %s clips, sentence map %s" % (p.num_clips, sentence_map.num_clips))
	fused = weights.sentence_weight * sentence_map.values
	for (w, p) in zip(weights.phrase_weights, phrase_maps):
		fused = fused + w * p.values
	return ScoreMap(fused)

def build_query_score_map(features, query):
	sentence = cosine_score_map(features, query.sentence)
	phrases = [cosine_score_map(features, p) for p in query.phrases]
	return fuse_score_maps(sentence, phrases, softmax_importance(query.importance_logits))

def fuse_query_scores(query):
	"""Fused map of a stored query; a query without phrases is returned as is."""
	if not query.num_phrases:
		return query.sentence
	return fuse_score_maps(query.sentence, query.phrases, softmax_importance(query.importance_logits))

def fuse_video(video):
	"""ScoreStack of fused maps, one per query, in file order."""
	return ScoreStack(video.video_id, [fuse_query_scores(q) for q in video.queries],
		[q.query_id for q in video.queries])

def fused_video_scores(video):
	"""VideoScores with every query collapsed to its fused map."""
	return VideoScores(video.video_id, video.num_clips,
		[QueryScores(q.query_id, fuse_query_scores(q)) for q in video.queries])

def video_from_features(video_id, features, queries):
	"""VideoScores of fused maps from a feature map and (query_id, QueryFeatures) pairs."""
	return VideoScores(video_id, features.num_clips,
		[QueryScores(qid, build_query_score_map(features, q)) for (qid, q) in queries])

def ensemble_score_maps(maps):
	"""Uniform element-wise mean of aligned score maps."""
	maps = list(maps)
	if not maps:
		raise DataError("Nothing to ensemble")
	n = maps[0].num_clips
	for m in maps:
		if m.num_clips != n:
			raise DataError("Cannot ensemble maps with %s and %s clips" % (n, m.num_clips))
	return ScoreMap(np.mean(np.stack([m.values for m in maps]), axis=0))

def ensemble_videos(runs):
	"""Average several runs of the same videos, aligned by video and query id.

	runs is a list of lists of VideoScores; every run must hold the same videos.
	Phrase maps are fused before averaging.
	"""
	if not runs:
		raise DataError("Nothing to ensemble")
	first = runs[0]
	out = []
	for (idx, video) in enumerate(first):
		members = []
		for run in runs:
			match = [v for v in run if v.video_id == video.video_id]
			if len(match) != 1:
				raise DataError("Video '%s' is not present exactly once in every ensemble member" % video.video_id)
			members.append(match[0])
		queries = []
		for q in video.queries:
			maps = []
			for m in members:
				if m.num_clips != video.num_clips:
					raise DataError("Video '%s' has %s clips in one member and %s in another" % (
						video.video_id, video.num_clips, m.num_clips))
				mq = [x for x in m.queries if x.query_id == q.query_id]
				if len(mq) != 1 or m.num_queries != video.num_queries:
					raise DataError("Query '%s' of video '%s' is not aligned across ensemble members" % (
						q.query_id, video.video_id))
				maps.append(fuse_query_scores(mq[0]))
			queries.append(QueryScores(q.query_id, ensemble_score_maps(maps)))
		out.append(VideoScores(video.video_id, video.num_clips, queries))
	for run in runs[1:]:
		if len(run) != len(first):
			raise DataError("Ensemble members hold different numbers of videos")
	return out
