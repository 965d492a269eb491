import os
import json
import struct

import numpy as np

from stepgrid.model import factory, DataError, GridError, BINARY_MAGIC, ClipInterval, \
	ScoreMap, QueryScores, VideoScores, GroundTruth, Assignment, AssignmentEntry, \
	PredictionSet, TemporalFeatureMap, QueryFeatures, valid_mask, _is_int

SCORE_EXTENSIONS = ['.json', '.sgb']


class Reader(object):

	def __init__(self):
		self.source = "<data>"

	def _fail(self, field, msg):
		raise DataError("%s: %s: %s" % (self.source, field, msg))

	def _get(self, js, key, field):
		if type(js) is not dict or not key in js:
			self._fail(field, "missing '%s'" % key)
		return js[key]

	def _int(self, js, key, field, minimum=0):
		val = self._get(js, key, field)
		if not _is_int(val) or val < minimum:
			self._fail("%s.%s" % (field, key), "expected an integer >= %s, got %r" % (minimum, val))
		return val

	def read(self, data, source="<data>"):
		self.source = source
		if not data:
			self._fail("document", "no data provided")
		if type(data) in [bytes, str]:
			try:
				data = json.loads(data)
			except ValueError:
				self._fail("document", "not valid JSON")
		if type(data) is not dict or not data:
			self._fail("document", "expected a JSON object")
		version = data.get('format_version', None)
		if version != factory.format_version:
			self._fail("format_version", "unsupported format version %r" % (version,))
		kind = data.get('kind', None)
		if kind == "scores":
			return self.read_scores(data)
		elif kind == "features":
			return self.read_features(data)
		elif kind == "ground_truth":
			return self.read_ground_truth(data)
		elif kind == "predictions":
			return self.read_predictions(data)
		self._fail("kind", "unknown document kind %r" % (kind,))

	def read_file(self, filename):
		try:
			fh = open(filename, 'rb')
			data = fh.read()
			fh.close()
		except IOError:
			raise DataError("%s: cannot be read" % filename)
		if data.startswith(BINARY_MAGIC):
			return self.read_binary(data, filename)
		try:
			text = data.decode('utf-8')
		except UnicodeDecodeError:
			raise DataError("%s: not UTF-8 text" % filename)
		return self.read(text, filename)

	def _map(self, rows, n, field):
		if type(rows) is not list or len(rows) != n:
			self._fail(field, "expected %s rows" % n)
		vals = np.full((n, n), np.nan)
		for (s, row) in enumerate(rows):
			if type(row) is not list or len(row) != n:
				self._fail("%s[%s]" % (field, s), "expected %s columns" % n)
			for (e, v) in enumerate(row):
				if e < s:
					if v is not None:
						self._fail("%s[%s][%s]" % (field, s, e), "invalid cell must be null")
				elif v is None or type(v) not in [int, float] or isinstance(v, bool):
					self._fail("%s[%s][%s]" % (field, s, e), "expected a number, got %r" % (v,))
				else:
					vals[s, e] = v
		try:
			return ScoreMap(vals)
		except DataError as e:
			self._fail(field, e.args[0])

	def read_scores(self, js):
		vid = self._get(js, 'video_id', "video")
		n = self._int(js, 'num_clips', "video", 1)
		queries = self._get(js, 'queries', "video")
		if type(queries) is not list or not queries:
			self._fail("queries", "expected a non-empty list")
		out = []
		for (i, q) in enumerate(queries):
			field = "queries[%s]" % i
			qid = self._get(q, 'query_id', field)
			sentence = self._map(self._get(q, 'sentence_scores', field), n, field + ".sentence_scores")
			phrases = [self._map(p, n, "%s.phrase_scores[%s]" % (field, j))
				for (j, p) in enumerate(q.get('phrase_scores', []) or [])]
			logits = q.get('importance_logits', None)
			try:
				out.append(QueryScores(qid, sentence, phrases, logits))
			except (DataError, TypeError, ValueError) as e:
				self._fail(field, e.args[0] if e.args else "malformed query")
		try:
			return VideoScores(vid, n, out)
		except DataError as e:
			self._fail("video", e.args[0])

	def read_binary(self, data, source="<binary>"):
		self.source = source
		head = len(BINARY_MAGIC)
		if len(data) < head + 8:
			self._fail("header", "truncated file")
		(version, hlen) = struct.unpack('<II', data[head:head+8])
		if version != factory.format_version:
			self._fail("format_version", "unsupported format version %r" % (version,))
		pos = head + 8
		try:
			header = json.loads(data[pos:pos+hlen].decode('utf-8'))
		except (ValueError, UnicodeDecodeError):
			self._fail("header", "not valid JSON")
		pos += hlen
		vid = self._get(header, 'video_id', "header")
		n = self._int(header, 'num_clips', "header", 1)
		mask = valid_mask(n)
		stored = np.frombuffer(data[pos:pos+n*n], dtype='u1').reshape(-1)
		if stored.size != n * n or not np.array_equal(stored.reshape(n, n).astype(bool), mask):
			self._fail("mask", "validity mask does not match %s clips" % n)
		pos += n * n
		block = n * n * 8
		entries = self._get(header, 'queries', "header")
		if type(entries) is not list or not entries:
			self._fail("header.queries", "expected a non-empty list")
		queries = []
		for (i, q) in enumerate(entries):
			field = "queries[%s]" % i
			np_ = self._int(q, 'num_phrases', field)
			maps = []
			for j in range(np_ + 1):
				if pos + block > len(data):
					self._fail(field, "truncated score data")
				vals = np.frombuffer(data[pos:pos+block], dtype='<f8').reshape(n, n).astype(np.float64)
				pos += block
				vals = np.where(mask, vals, np.nan)
				try:
					maps.append(ScoreMap(vals))
				except DataError as e:
					self._fail(field, e.args[0])
			try:
				queries.append(QueryScores(self._get(q, 'query_id', field), maps[0], maps[1:],
					q.get('importance_logits', None)))
			except DataError as e:
				self._fail(field, e.args[0])
		if pos != len(data):
			self._fail("data", "%s trailing bytes" % (len(data) - pos))
		try:
			return VideoScores(vid, n, queries)
		except DataError as e:
			self._fail("video", e.args[0])

	def _interval(self, js, field):
		start = self._int(js, 'start', field)
		end = self._int(js, 'end', field)
		try:
			return ClipInterval(start, end)
		except DataError as e:
			self._fail(field, e.args[0])

	def read_ground_truth(self, js):
		gt = GroundTruth()
		for (i, v) in enumerate(self._get(js, 'videos', "ground_truth")):
			field = "videos[%s]" % i
			vid = self._get(v, 'video_id', field)
			n = self._int(v, 'num_clips', field, 1)
			pairs = []
			for (j, q) in enumerate(self._get(v, 'queries', field)):
				qf = "%s.queries[%s]" % (field, j)
				pairs.append((self._get(q, 'query_id', qf), self._interval(q, qf)))
			try:
				gt.add_video(vid, n, pairs)
			except DataError as e:
				self._fail(field, e.args[0])
		return gt

	def read_predictions(self, js):
		method = self._get(js, 'method', "predictions")
		assignments = []
		for (i, v) in enumerate(self._get(js, 'videos', "predictions")):
			field = "videos[%s]" % i
			entries = []
			for (j, e) in enumerate(self._get(v, 'entries', field)):
				ef = "%s.entries[%s]" % (field, j)
				lp = self._get(e, 'logprob', ef)
				if type(lp) not in [int, float]:
					self._fail(ef + ".logprob", "expected a number")
				entries.append(AssignmentEntry(self._int(e, 'query_index', ef), str(self._get(e, 'query_id', ef)),
					self._interval(e, ef), float(lp)))
			try:
				assignments.append(Assignment(self._get(v, 'video_id', field), entries,
					float(self._get(v, 'objective', field)), self._get(v, 'method', field),
					bool(self._get(v, 'fallback_used', field))))
			except GridError as e:
				self._fail(field, e.args[0])
		try:
			return PredictionSet(method, assignments)
		except DataError as e:
			self._fail("videos", e.args[0])

	def read_features(self, js):
		"""Returns (video_id, TemporalFeatureMap, [(query_id, QueryFeatures)])."""
		vid = self._get(js, 'video_id', "features")
		n = self._int(js, 'num_clips', "features", 1)
		d = self._int(js, 'dim', "features", 1)
		cells = self._get(js, 'features', "features")
		vals = np.full((n, n, d), np.nan)
		if type(cells) is not list or len(cells) != n:
			self._fail("features", "expected %s rows" % n)
		for (s, row) in enumerate(cells):
			if type(row) is not list or len(row) != n:
				self._fail("features[%s]" % s, "expected %s columns" % n)
			for (e, vec) in enumerate(row):
				if e < s:
					if vec is not None:
						self._fail("features[%s][%s]" % (s, e), "invalid cell must be null")
					continue
				if type(vec) is not list or len(vec) != d:
					self._fail("features[%s][%s]" % (s, e), "expected a %s-vector" % d)
				vals[s, e] = vec
		try:
			fmap = TemporalFeatureMap(vals)
		except (DataError, ValueError, TypeError) as e:
			self._fail("features", e.args[0] if e.args else "malformed feature map")
		queries = []
		for (i, q) in enumerate(self._get(js, 'queries', "features")):
			field = "queries[%s]" % i
			try:
				qf = QueryFeatures(self._get(q, 'sentence', field), q.get('phrases', None),
					q.get('importance_logits', None))
			except (ValueError, TypeError) as e:
				self._fail(field, "malformed query features")
			except DataError as e:
				self._fail(field, e.args[0])
			if qf.dim != d:
				self._fail(field + ".sentence", "expected a %s-vector" % d)
			queries.append((str(self._get(q, 'query_id', field)), qf))
		return (str(vid), fmap, queries)


def expand_paths(paths, extensions=SCORE_EXTENSIONS):
	"""Files as given; directories replaced by their matching files sorted by name."""
	out = []
	for p in paths:
		if os.path.isdir(p):
			for fn in sorted(os.listdir(p)):
				if os.path.splitext(fn)[1] in extensions:
					out.append(os.path.join(p, fn))
		else:
			out.append(p)
	return out
