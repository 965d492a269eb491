import os, sys
import json
import struct
from collections import OrderedDict, namedtuple

import numpy as np

FORMAT_VERSION = 1
BINARY_MAGIC = b"SGRD"
DEFAULTS_FILE = os.path.join(os.path.dirname(__file__), 'data', 'defaults.json')

PROB_MAPS = ["clamp", "sigmoid", "minmax"]
METHODS = ["dp", "greedy", "brute"]
DEBUG_LEVELS = ['error', 'warn', 'error_on_warning']

# Keys accepted in the defaults file and in user config files
SETTING_KEYS = ["prob_map", "epsilon", "sigmoid_scale", "method", "max_exact_queries",
	"thresholds", "alpha", "beta", "iou_scale_min", "iou_scale_max", "workers",
	"json_indent", "max_bench_queries", "seed"]


class GridError(Exception):
	"""Base exception class"""

	resource = None

	def __init__(self, msg, resource=None):
		"""Initialize GridError."""
		self.args = [msg]
		self.resource = resource

class ConfigurationError(GridError):
	"""Raised when the factory or a config view isn't configured properly for the current operation."""
	pass

class DataError(GridError):
	"""Raised when input data is malformed or not dimensionally consistent."""
	pass

class DegenerateFeatureError(DataError):
	"""Raised when a text or proposal feature vector has zero norm."""
	pass

class UnassignableQueryError(DataError):
	"""Raised when a query's score map has no finite cell."""
	pass

class InfeasibleError(GridError):
	"""Raised when no valid assignment or instance can exist."""
	pass

class InvariantError(GridError):
	"""Raised when an internal postcondition does not hold."""
	pass


def _is_int(value):
	return isinstance(value, (int, np.integer)) and not isinstance(value, bool)


class ClipInterval(namedtuple("ClipInterval", ['start', 'end'])):
	"""Inclusive, 0-based clip span [start, end]"""

	__slots__ = ()

	def __new__(cls, start, end):
		if not _is_int(start) or not _is_int(end):
			raise DataError("Interval bounds must be integers, got %r, %r" % (start, end))
		if start < 0 or start > end:
			raise DataError("Invalid interval [%s, %s]" % (start, end))
		return super(ClipInterval, cls).__new__(cls, int(start), int(end))

	@property
	def length(self):
		return self.end - self.start + 1

	def __str__(self):
		return "[%s, %s]" % (self.start, self.end)


def intervals_overlap(a, b):
	"""True iff a and b share at least one clip; adjacency is not overlap."""
	return max(a.start, b.start) <= min(a.end, b.end)

def interval_iou(a, b):
	inter = min(a.end, b.end) - max(a.start, b.start) + 1
	if inter <= 0:
		return 0.0
	union = a.length + b.length - inter
	return float(inter) / union


def iou_map(num_clips, interval):
	"""IoU of every proposal [s, n] with interval; NaN where s > n."""
	(s, n) = np.indices((num_clips, num_clips))
	inter = np.clip(np.minimum(n, interval.end) - np.maximum(s, interval.start) + 1, 0, None)
	union = (n - s + 1) + interval.length - inter
	with np.errstate(divide='ignore', invalid='ignore'):
		iou = inter / union.astype(np.float64)
	iou[~valid_mask(num_clips)] = np.nan
	return iou


_mask_cache = {}

def valid_mask(num_clips):
	"""Read-only N x N boolean array, True where start <= end."""
	try:
		return _mask_cache[num_clips]
	except KeyError:
		pass
	if not _is_int(num_clips) or num_clips < 1:
		raise DataError("Number of clips must be a positive integer, got %r" % (num_clips,))
	mask = np.triu(np.ones((num_clips, num_clips), dtype=bool))
	mask.flags.writeable = False
	_mask_cache[num_clips] = mask
	return mask

def _frozen(arr):
	arr = np.array(arr, dtype=np.float64, copy=True)
	arr.flags.writeable = False
	return arr


class TemporalFeatureMap(object):
	"""The N x N x D proposal feature tensor; cells with start > end are never read."""

	def __init__(self, values):
		values = np.asarray(values, dtype=np.float64)
		if values.ndim != 3 or values.shape[0] != values.shape[1] or values.shape[0] < 1 or values.shape[2] < 1:
			raise DataError("Feature map must be N x N x D, got shape %r" % (values.shape,))
		mask = valid_mask(values.shape[0])
		if not np.all(np.isfinite(values[mask])):
			raise DataError("Feature map has non-finite values in valid cells")
		values = values.copy()
		values[~mask] = np.nan
		self.values = _frozen(values)

	@property
	def num_clips(self):
		return self.values.shape[0]

	@property
	def dim(self):
		return self.values.shape[2]


class QueryFeatures(object):
	"""Sentence feature, phrase features and importance logits (sentence logit first)."""

	def __init__(self, sentence, phrases=None, importance_logits=None):
		sentence = np.asarray(sentence, dtype=np.float64)
		if sentence.ndim != 1 or not sentence.size:
			raise DataError("Sentence feature must be a non-empty vector")
		dim = sentence.shape[0]
		if phrases is None or len(phrases) == 0:
			phrases = np.zeros((0, dim))
		phrases = np.asarray(phrases, dtype=np.float64)
		if phrases.ndim != 2 or phrases.shape[1] != dim:
			raise DataError("Phrase features must be N_p x %s, got shape %r" % (dim, phrases.shape))
		if importance_logits is None:
			importance_logits = np.zeros(phrases.shape[0] + 1)
		logits = np.asarray(importance_logits, dtype=np.float64)
		if logits.shape != (phrases.shape[0] + 1,):
			raise DataError("Expected %s importance logits, got %r" % (phrases.shape[0] + 1, logits.shape))
		if not (np.all(np.isfinite(sentence)) and np.all(np.isfinite(phrases)) and np.all(np.isfinite(logits))):
			raise DataError("Query features must be finite")
		self.sentence = _frozen(sentence)
		self.phrases = _frozen(phrases)
		self.importance_logits = _frozen(logits)

	@property
	def dim(self):
		return self.sentence.shape[0]

	@property
	def num_phrases(self):
		return self.phrases.shape[0]


class ScoreMap(object):
	"""N x N matching scores. Invalid cells hold NaN as the mask sentinel."""

	def __init__(self, values):
		values = np.array(values, dtype=np.float64, copy=True)
		if values.ndim != 2 or values.shape[0] != values.shape[1] or values.shape[0] < 1:
			raise DataError("Score map must be N x N, got shape %r" % (values.shape,))
		mask = valid_mask(values.shape[0])
		if not np.all(np.isfinite(values[mask])):
			raise DataError("Score map has non-finite values in valid cells")
		values[~mask] = np.nan
		values.flags.writeable = False
		self.values = values

	@classmethod
	def constant(cls, num_clips, value):
		return cls(np.full((num_clips, num_clips), float(value)))

	@property
	def num_clips(self):
		return self.values.shape[0]

	@property
	def mask(self):
		return valid_mask(self.num_clips)

	def valid_values(self):
		"""Valid cells in row-major order."""
		return self.values[self.mask]

	def argmax(self):
		"""Best cell; ties prefer the smaller start, then the smaller end."""
		filled = np.where(self.mask, self.values, -np.inf)
		(s, n) = np.unravel_index(int(np.argmax(filled)), filled.shape)
		return ClipInterval(int(s), int(n))

	def __getitem__(self, cell):
		(s, n) = cell
		if s > n:
			raise DataError("Cell (%s, %s) is outside the valid region" % (s, n))
		return float(self.values[s, n])

	def __eq__(self, other):
		if not isinstance(other, ScoreMap):
			return False
		return np.array_equal(self.values, other.values, equal_nan=True)

	def __ne__(self, other):
		return not self.__eq__(other)


class ScoreStack(object):
	"""All K query maps of one video."""

	def __init__(self, video_id, maps, query_ids=None):
		maps = list(maps)
		if not maps:
			raise DataError("Video '%s' has no queries" % video_id)
		n = maps[0].num_clips
		for m in maps:
			if m.num_clips != n:
				raise DataError("Video '%s' mixes maps with %s and %s clips" % (video_id, n, m.num_clips))
		if query_ids is None:
			query_ids = [str(k) for k in range(len(maps))]
		query_ids = [str(q) for q in query_ids]
		if len(query_ids) != len(maps):
			raise DataError("Video '%s' has %s maps but %s query ids" % (video_id, len(maps), len(query_ids)))
		if len(set(query_ids)) != len(query_ids):
			raise DataError("Video '%s' has duplicate query ids" % video_id)
		self.video_id = str(video_id)
		self.maps = tuple(maps)
		self.query_ids = tuple(query_ids)

	@property
	def num_queries(self):
		return len(self.maps)

	@property
	def num_clips(self):
		return self.maps[0].num_clips

	@property
	def values(self):
		"""K x N x N array, NaN on invalid cells."""
		return np.stack([m.values for m in self.maps])


class AssignmentEntry(namedtuple("AssignmentEntry", ['query_index', 'query_id', 'interval', 'logprob'])):
	__slots__ = ()


class Assignment(object):
	"""One interval per query of a video, with the joint log-probability."""

	def __init__(self, video_id, entries, objective, method, fallback_used=False):
		if method not in METHODS:
			raise ConfigurationError("Unknown selection method '%s'" % method)
		entries = sorted(entries, key=lambda e: e.query_index)
		if [e.query_index for e in entries] != list(range(len(entries))):
			raise InvariantError("Assignment for '%s' must cover query indices 0..K-1 exactly once" % video_id)
		total = 0.0
		for e in entries:
			total += e.logprob
		if abs(total - objective) > 1e-9:
			raise InvariantError("Objective %r of '%s' differs from the entry sum %r" % (objective, video_id, total))
		self.video_id = str(video_id)
		self.entries = tuple(entries)
		self.objective = float(objective)
		self.method = method
		self.fallback_used = bool(fallback_used)
		if method in ("dp", "brute") and not self.fallback_used:
			pair = self.first_overlap()
			if pair is not None:
				raise InvariantError("Exact assignment for '%s' has overlapping queries %s and %s" % (
					video_id, pair[0], pair[1]), self)

	@property
	def num_queries(self):
		return len(self.entries)

	@property
	def intervals(self):
		return [e.interval for e in self.entries]

	def first_overlap(self):
		"""First pair of query indices whose intervals overlap, or None."""
		ordered = sorted(self.entries, key=lambda e: (e.interval.start, e.interval.end, e.query_index))
		for (a, b) in zip(ordered, ordered[1:]):
			if a.interval.end >= b.interval.start:
				return (a.query_index, b.query_index)
		return None

	def overlapping_queries(self):
		"""Query indices whose interval overlaps at least one other interval."""
		hit = set()
		for (i, a) in enumerate(self.entries):
			for b in self.entries[i+1:]:
				if intervals_overlap(a.interval, b.interval):
					hit.add(a.query_index)
					hit.add(b.query_index)
		return hit

	def _toJSON(self):
		out = OrderedDict()
		out['video_id'] = self.video_id
		out['method'] = self.method
		out['fallback_used'] = self.fallback_used
		out['objective'] = self.objective
		out['entries'] = [OrderedDict([('query_index', e.query_index), ('query_id', e.query_id),
			('start', e.interval.start), ('end', e.interval.end), ('logprob', e.logprob)])
			for e in self.entries]
		return out

	def __eq__(self, other):
		if not isinstance(other, Assignment):
			return False
		return self._toJSON() == other._toJSON()

	def __ne__(self, other):
		return not self.__eq__(other)


class PredictionSet(object):
	"""Assignments for a collection of videos, in input order."""

	def __init__(self, method, assignments):
		self.method = method
		self.assignments = tuple(assignments)
		seen = set()
		for a in self.assignments:
			if a.video_id in seen:
				raise DataError("Video '%s' is predicted more than once" % a.video_id)
			seen.add(a.video_id)

	def items(self):
		"""((video_id, query_id), interval) pairs."""
		for a in self.assignments:
			for e in a.entries:
				yield ((a.video_id, e.query_id), e.interval)

	def _toJSON(self):
		out = OrderedDict()
		out['kind'] = "predictions"
		out['method'] = self.method
		out['videos'] = [a._toJSON() for a in self.assignments]
		return out

	def __eq__(self, other):
		return isinstance(other, PredictionSet) and self._toJSON() == other._toJSON()

	def __ne__(self, other):
		return not self.__eq__(other)


class QueryScores(object):
	"""Stored sentence/phrase maps and importance logits of one query."""

	def __init__(self, query_id, sentence, phrases=None, importance_logits=None):
		phrases = list(phrases or [])
		if importance_logits is None:
			importance_logits = [0.0] * (len(phrases) + 1)
		logits = np.asarray(importance_logits, dtype=np.float64)
		if logits.shape != (len(phrases) + 1,):
			raise DataError("Query '%s' needs %s importance logits, got %s" % (
				query_id, len(phrases) + 1, logits.size))
		if not np.all(np.isfinite(logits)):
			raise DataError("Query '%s' has non-finite importance logits" % query_id)
		for p in phrases:
			if p.num_clips != sentence.num_clips:
				raise DataError("Query '%s' mixes maps with %s and %s clips" % (
					query_id, sentence.num_clips, p.num_clips))
		self.query_id = str(query_id)
		self.sentence = sentence
		self.phrases = tuple(phrases)
		self.importance_logits = _frozen(logits)

	@property
	def num_phrases(self):
		return len(self.phrases)


class VideoScores(object):
	"""In-memory form of a video score file."""

	def __init__(self, video_id, num_clips, queries):
		queries = list(queries)
		if not queries:
			raise DataError("Video '%s' has no queries" % video_id)
		ids = [q.query_id for q in queries]
		if len(set(ids)) != len(ids):
			raise DataError("Video '%s' has duplicate query ids" % video_id)
		for q in queries:
			if q.sentence.num_clips != num_clips:
				raise DataError("Query '%s' of video '%s' has %s clips, expected %s" % (
					q.query_id, video_id, q.sentence.num_clips, num_clips))
		self.video_id = str(video_id)
		self.num_clips = num_clips
		self.queries = tuple(queries)

	@property
	def num_queries(self):
		return len(self.queries)

	def _toJSON(self):
		out = OrderedDict()
		out['kind'] = "scores"
		out['video_id'] = self.video_id
		out['num_clips'] = self.num_clips
		qs = []
		for q in self.queries:
			qd = OrderedDict()
			qd['query_id'] = q.query_id
			qd['sentence_scores'] = _map_to_rows(q.sentence)
			if q.num_phrases:
				qd['phrase_scores'] = [_map_to_rows(p) for p in q.phrases]
				qd['importance_logits'] = [float(x) for x in q.importance_logits]
			qs.append(qd)
		out['queries'] = qs
		return out

	def __eq__(self, other):
		return isinstance(other, VideoScores) and self._toJSON() == other._toJSON()

	def __ne__(self, other):
		return not self.__eq__(other)


def _map_to_rows(smap):
	mask = smap.mask
	return [[float(v) if ok else None for (v, ok) in zip(row, mrow)]
		for (row, mrow) in zip(smap.values, mask)]


class GroundTruth(object):
	"""Ground-truth intervals per video: video_id -> [(query_id, ClipInterval)]"""

	def __init__(self):
		self.videos = OrderedDict()
		self.num_clips = {}

	def add_video(self, video_id, num_clips, queries):
		video_id = str(video_id)
		if video_id in self.videos:
			raise DataError("Ground truth lists video '%s' twice" % video_id)
		pairs = []
		seen = set()
		for (qid, interval) in queries:
			qid = str(qid)
			if qid in seen:
				raise DataError("Ground truth for '%s' lists query '%s' twice" % (video_id, qid))
			if interval.end >= num_clips:
				raise DataError("Ground truth %s of '%s'/'%s' exceeds %s clips" % (interval, video_id, qid, num_clips))
			seen.add(qid)
			pairs.append((qid, interval))
		self.videos[video_id] = pairs
		self.num_clips[video_id] = num_clips

	def items(self):
		"""((video_id, query_id), interval) pairs."""
		for (vid, pairs) in self.videos.items():
			for (qid, interval) in pairs:
				yield ((vid, qid), interval)

	def lookup(self, video_id, query_id):
		for (qid, interval) in self.videos.get(str(video_id), []):
			if qid == str(query_id):
				return interval
		raise DataError("No ground truth for query '%s' of video '%s'" % (query_id, video_id))

	def _toJSON(self):
		out = OrderedDict()
		out['kind'] = "ground_truth"
		out['videos'] = [OrderedDict([('video_id', vid), ('num_clips', self.num_clips[vid]),
			('queries', [OrderedDict([('query_id', q), ('start', i.start), ('end', i.end)]) for (q, i) in pairs])])
			for (vid, pairs) in self.videos.items()]
		return out

	def __eq__(self, other):
		return isinstance(other, GroundTruth) and self._toJSON() == other._toJSON()

	def __ne__(self, other):
		return not self.__eq__(other)


class SolverConfig(namedtuple("SolverConfig", ['method', 'max_exact_queries', 'prob_map', 'epsilon', 'sigmoid_scale'])):
	__slots__ = ()

	def __new__(cls, method="dp", max_exact_queries=17, prob_map="clamp", epsilon=1e-8, sigmoid_scale=1.0):
		if method not in METHODS:
			raise ConfigurationError("Unknown method '%s', expected one of %s" % (method, ', '.join(METHODS)))
		if not _is_int(max_exact_queries) or max_exact_queries < 1:
			raise ConfigurationError("max_exact_queries must be a positive integer")
		if prob_map not in PROB_MAPS:
			raise ConfigurationError("Unknown probability mapping '%s', expected one of %s" % (prob_map, ', '.join(PROB_MAPS)))
		if not 0 < epsilon < 1:
			raise ConfigurationError("epsilon must lie in (0, 1), got %r" % (epsilon,))
		if not sigmoid_scale > 0:
			raise ConfigurationError("sigmoid_scale must be positive")
		return super(SolverConfig, cls).__new__(cls, method, int(max_exact_queries), prob_map,
			float(epsilon), float(sigmoid_scale))


class LossConfig(namedtuple("LossConfig", ['alpha', 'beta', 'iou_scale_min', 'iou_scale_max'])):
	__slots__ = ()

	def __new__(cls, alpha=0.1, beta=0.05, iou_scale_min=0.5, iou_scale_max=1.0):
		if alpha < 0 or beta < 0:
			raise ConfigurationError("alpha and beta must be non-negative")
		if not 0 <= iou_scale_min < 1 or not iou_scale_min < iou_scale_max <= 1:
			raise ConfigurationError("IoU scaling needs 0 <= min < max <= 1, got %r, %r" % (iou_scale_min, iou_scale_max))
		return super(LossConfig, cls).__new__(cls, float(alpha), float(beta), float(iou_scale_min), float(iou_scale_max))


class GridFactory(object):

	def __init__(self, defaults_file=DEFAULTS_FILE, load_defaults=True):
		self.debug_level = "warn"
		self.log_stream = sys.stderr

		self.format_version = FORMAT_VERSION
		self.json_indent = 2

		self.method = "dp"
		self.prob_map = "clamp" # "clamp", "sigmoid", "minmax"
		self.epsilon = 1e-8
		self.sigmoid_scale = 1.0
		self.max_exact_queries = 17 # exact DP only runs up to this many queries per video

		self.thresholds = [0.3, 0.5, 0.7]

		self.alpha = 0.1
		self.beta = 0.05
		self.iou_scale_min = 0.5
		self.iou_scale_max = 1.0

		self.workers = 1
		self.max_bench_queries = 17
		self.seed = 0

		if load_defaults:
			self.load_defaults(defaults_file)

	def _load_settings(self, filename):
		try:
			fh = open(filename)
			data = fh.read()
			fh.close()
		except IOError:
			raise ConfigurationError("Config file %s does not exist" % filename)
		try:
			settings = json.loads(data)
		except ValueError:
			raise ConfigurationError("Config file %s does not have valid JSON" % filename)
		if type(settings) is not dict:
			raise ConfigurationError("Config file %s must hold a JSON object" % filename)
		return settings

	def load_defaults(self, filename=DEFAULTS_FILE):
		self.apply_settings(self._load_settings(filename), filename)

	def load_config(self, filename):
		self.apply_settings(self._load_settings(filename), filename)

	def apply_settings(self, settings, source="settings"):
		for k in settings:
			if not k in SETTING_KEYS:
				raise ConfigurationError("Unknown setting '%s' in %s" % (k, source))
		old = dict((k, getattr(self, k)) for k in SETTING_KEYS)
		for (k, v) in settings.items():
			setattr(self, k, v)
		try:
			self.solver_config()
			self.loss_config()
			self.check_thresholds(self.thresholds)
			if not _is_int(self.workers) or self.workers < 1:
				raise ConfigurationError("workers must be a positive integer")
		except ConfigurationError:
			for (k, v) in old.items():
				setattr(self, k, v)
			raise

	def check_thresholds(self, thresholds):
		if not thresholds:
			raise ConfigurationError("At least one IoU threshold is required")
		for t in thresholds:
			if not 0 <= t <= 1:
				raise ConfigurationError("IoU threshold %r is outside [0, 1]" % (t,))
		return [float(t) for t in thresholds]

	def solver_config(self, **kw):
		"""Immutable solver settings, with keyword overrides for a single call."""
		vals = dict(method=self.method, max_exact_queries=self.max_exact_queries,
			prob_map=self.prob_map, epsilon=self.epsilon, sigmoid_scale=self.sigmoid_scale)
		vals.update(dict((k, v) for (k, v) in kw.items() if v is not None))
		return SolverConfig(**vals)

	def loss_config(self, **kw):
		vals = dict(alpha=self.alpha, beta=self.beta,
			iou_scale_min=self.iou_scale_min, iou_scale_max=self.iou_scale_max)
		vals.update(dict((k, v) for (k, v) in kw.items() if v is not None))
		return LossConfig(**vals)

	def set_debug_stream(self, strm):
		"""Set debug stream."""
		self.log_stream = strm

	def set_debug(self, typ):
		"""Set behavior on errors and warnings.

		error = squash warnings
		warn = display warnings
		error_on_warning = raise exception for a warning rather than continuing
		"""
		if typ in DEBUG_LEVELS:
			self.debug_level = typ
		else:
			raise ConfigurationError("Only levels are 'error', 'warn' and 'error_on_warning'")

	def maybe_warn(self, msg):
		"""warn method that respects debug_level property."""
		if self.log_stream and self.debug_level == "warn":
			self.log_stream.write(msg + "\n")
			try:
				self.log_stream.flush()
			except:
				pass
		elif self.debug_level == "error_on_warning":
			raise InvariantError(msg)

	def toJSON(self, what):
		out = OrderedDict([('format_version', self.format_version)])
		out.update(what._toJSON())
		return out

	def _buildString(self, js, compact=True):
		"""Build string from JSON."""
		try:
			if compact:
				return json.dumps(js, separators=(',',':'), ensure_ascii=False, allow_nan=False)
			else:
				return json.dumps(js, indent=self.json_indent, ensure_ascii=False, allow_nan=False)
		except ValueError:
			raise InvariantError("Refusing to serialize non-finite values")

	def toString(self, what, compact=True):
		"""Return JSON serialization as string."""
		return self._buildString(self.toJSON(what), compact)

	def toFile(self, what, filename, compact=False):
		"""Write to local file, creating the directory if needed."""
		out = self.toString(what, compact)
		_ensure_dir(filename)
		fh = open(filename, 'w')
		fh.write(out)
		fh.write("\n")
		fh.close()
		return out

	def toBinary(self, video, filename=None):
		"""Packed little-endian form of a VideoScores; returns the bytes."""
		n = video.num_clips
		header = OrderedDict()
		header['video_id'] = video.video_id
		header['num_clips'] = n
		header['queries'] = [OrderedDict([('query_id', q.query_id), ('num_phrases', q.num_phrases),
			('importance_logits', [float(x) for x in q.importance_logits])]) for q in video.queries]
		hbytes = json.dumps(header, separators=(',',':'), ensure_ascii=False).encode('utf-8')
		mask = valid_mask(n)
		parts = [BINARY_MAGIC, struct.pack('<II', self.format_version, len(hbytes)), hbytes,
			mask.astype('u1').tobytes()]
		for q in video.queries:
			for m in (q.sentence,) + q.phrases:
				parts.append(np.where(mask, m.values, 0.0).astype('<f8').tobytes())
		data = b''.join(parts)
		if filename:
			_ensure_dir(filename)
			fh = open(filename, 'wb')
			fh.write(data)
			fh.close()
		return data


def _ensure_dir(filename):
	d = os.path.dirname(filename)
	if d:
		try:
			os.makedirs(d)
		except OSError:
			pass


factory = GridFactory()
