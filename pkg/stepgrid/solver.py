"""Non-overlapping proposal assignment across the step queries of a video.

dp_select is exact: it maximizes the summed log-probability over assignments
whose intervals are pairwise disjoint, by dynamic programming over (subset of
queries, end clip) states in O(2^K * N^2 * K). greedy_select takes each
query's argmax independently, and brute_force_select enumerates every
disjoint assignment for small instances.

Ties are broken the same way everywhere: the smaller query index, then the
smaller start, then the smaller end. For full assignments the latest interval
is compared first by (query index, start, end), then the one before it, and
so on; with a single query this is the row-major first maximum of its map.
"""

import numpy as np

from stepgrid.model import factory, ClipInterval, Assignment, AssignmentEntry, \
	ConfigurationError, DataError, InfeasibleError, InvariantError, \
	UnassignableQueryError, SolverConfig, valid_mask, PROB_MAPS

BRUTE_FORCE_MAX_QUERIES = 6
BRUTE_FORCE_MAX_CLIPS = 12

# Upper bound on the float64 cells of one candidate block in build_dp_tables
DP_BLOCK_CELLS = 1 << 22


class LogProbStack(object):
	"""K x N x N log-probabilities; invalid cells are -inf."""

	def __init__(self, logp, video_id="", query_ids=None):
		logp = np.array(logp, dtype=np.float64, copy=True)
		if logp.ndim != 3 or logp.shape[1] != logp.shape[2] or logp.shape[0] < 1 or logp.shape[1] < 1:
			raise DataError("Log-probabilities must be K x N x N, got shape %r" % (logp.shape,))
		mask = valid_mask(logp.shape[1])
		logp[:, ~mask] = -np.inf
		if np.any(np.isnan(logp)) or np.any(logp == np.inf):
			raise DataError("Log-probabilities must not be NaN or +inf")
		if query_ids is None:
			query_ids = [str(k) for k in range(logp.shape[0])]
		if len(query_ids) != logp.shape[0]:
			raise DataError("Got %s query ids for %s maps" % (len(query_ids), logp.shape[0]))
		logp.flags.writeable = False
		self.logp = logp
		self.video_id = str(video_id)
		self.query_ids = tuple(str(q) for q in query_ids)

	@property
	def num_queries(self):
		return self.logp.shape[0]

	@property
	def num_clips(self):
		return self.logp.shape[1]

	def shifted(self, c):
		"""Copy with c added to every valid cell."""
		return LogProbStack(self.logp + c, self.video_id, self.query_ids)


class DpTables(object):
	"""Prefix-max table g and backpointers of the subset DP.

	g[mask, j] is the best score placing the queries in mask on disjoint
	intervals that all end before clip j; g_end[mask, j] is the end clip
	of the last interval in that solution. back_k / back_s give, for the
	best solution of (mask, n) whose last interval ends at n, that
	interval's query and start clip.
	"""

	def __init__(self, g, g_end, back_k, back_s):
		self.g = g
		self.g_end = g_end
		self.back_k = back_k
		self.back_s = back_s

	@property
	def best_score(self):
		return float(self.g[-1, -1])


def score_to_logprob(stack, mode="clamp", epsilon=1e-8, sigmoid_scale=1.0):
	if mode not in PROB_MAPS:
		raise ConfigurationError("Unknown probability mapping '%s', expected one of %s" % (mode, ', '.join(PROB_MAPS)))
	if not 0 < epsilon < 1:
		raise ConfigurationError("epsilon must lie in (0, 1), got %r" % (epsilon,))
	values = stack.values
	mask = valid_mask(stack.num_clips)
	out = np.full(values.shape, -np.inf)
	for (k, v) in enumerate(values):
		cells = v[mask]
		if mode == "clamp":
			lp = np.log(np.clip(cells, epsilon, 1.0))
		elif mode == "sigmoid":
			# log(1 / (1 + e^-x)) without overflow
			lp = -np.logaddexp(0.0, -sigmoid_scale * cells)
		else:
			lo = cells.min()
			hi = cells.max()
			if hi > lo:
				lp = np.log(epsilon + (cells - lo) / (hi - lo) * (1.0 - epsilon))
			else:
				lp = np.zeros(cells.shape)
		out[k][mask] = lp
	return LogProbStack(out, stack.video_id, stack.query_ids)

def _check_assignable(logp):
	for k in range(logp.num_queries):
		if not np.any(np.isfinite(logp.logp[k])):
			raise UnassignableQueryError("unassignable query '%s' in video '%s'" % (
				logp.query_ids[k], logp.video_id))

def _entry(logp, k, s, n):
	return AssignmentEntry(k, logp.query_ids[k], ClipInterval(int(s), int(n)), float(logp.logp[k, s, n]))

def _temporal_sum(entries):
	total = 0.0
	for e in sorted(entries, key=lambda e: e.interval.start):
		total += e.logprob
	return total

def _index_dtype(num_clips):
	"""Smallest signed integer type holding clip indices and the -1 sentinel."""
	return np.min_scalar_type(-(num_clips + 1))

def _query_blocks(K, N, block_cells):
	"""Runs of query indices whose candidate block stays under block_cells."""
	per_query = (1 << (K - 1)) * N
	step = max(1, block_cells // per_query)
	return [(lo, min(K, lo + step)) for lo in range(0, K, step)]

def build_dp_tables(logp, block_cells=DP_BLOCK_CELLS):
	K = logp.num_queries
	N = logp.num_clips
	full = 1 << K
	masks = np.arange(full)
	idx_type = _index_dtype(N)

	g = np.full((full, N + 1), -np.inf)
	g[0, :] = 0.0 # the empty assignment scores zero
	g_end = np.full((full, N + 1), -1, dtype=np.int32)
	g_k = np.full((full, N + 1), -1, dtype=np.int8)
	g_s = np.full((full, N + 1), -1, dtype=idx_type)
	back_k = np.full((full, N), -1, dtype=np.int8)
	back_s = np.full((full, N), -1, dtype=idx_type)

	# with_k[k] lists the subsets holding query k, without_k[k] the same subsets minus k
	with_k = np.stack([masks[((masks >> k) & 1) == 1] for k in range(K)])
	without_k = with_k ^ (1 << np.arange(K))[:, None]
	blocks = _query_blocks(K, N, block_cells)

	values = logp.logp
	f_all = np.empty((K, full))
	s_all = np.zeros((K, full), dtype=np.int64)
	for n in range(N):
		f_all.fill(-np.inf)
		for (lo, hi) in blocks:
			# cand[k, i, s] = g[with_k[k, i] - {k}, s] + S[k, s, n]
			cand = g[without_k[lo:hi], :n+1]
			cand += values[lo:hi, :n+1, n][:, None, :]
			s_best = np.argmax(cand, axis=2)
			rows = np.arange(lo, hi)[:, None]
			f_all[rows, with_k[lo:hi]] = cand.max(axis=2)
			s_all[rows, with_k[lo:hi]] = s_best
		k_best = np.argmax(f_all, axis=0) # first maximum is the smallest query index
		f = f_all[k_best, masks]
		found = np.isfinite(f)
		back_k[found, n] = k_best[found]
		back_s[found, n] = s_all[k_best, masks][found]

		# on equal scores the solution whose last interval has the smaller (k, s) wins;
		# when those match too the earlier end is kept
		prev = g[:, n]
		pk = g_k[:, n]
		ps = g_s[:, n]
		bk = back_k[:, n]
		bs = back_s[:, n]
		tie = found & (f == prev) & ((bk < pk) | ((bk == pk) & (bs < ps)))
		take = (f > prev) | tie
		g[:, n+1] = np.where(take, f, prev)
		g_end[:, n+1] = np.where(take, n, g_end[:, n])
		g_k[:, n+1] = np.where(take, bk, pk)
		g_s[:, n+1] = np.where(take, bs, ps)
	return DpTables(g, g_end, back_k, back_s)

def backtrack(logp, tables):
	mask = (1 << logp.num_queries) - 1
	j = logp.num_clips
	entries = []
	while mask:
		n = int(tables.g_end[mask, j])
		k = int(tables.back_k[mask, n])
		s = int(tables.back_s[mask, n])
		if n < 0 or k < 0 or s < 0 or not (mask >> k) & 1:
			raise InvariantError("Broken backpointer at subset %s, clip %s" % (mask, j))
		entries.append(_entry(logp, k, s, n))
		mask ^= 1 << k
		j = s
	return entries

def _fallback(logp, reason):
	factory.maybe_warn("Video '%s': %s; using greedy selection" % (logp.video_id, reason))
	return greedy_select(logp, fallback_used=True)

def dp_select(logp, max_exact_queries=17):
	K = logp.num_queries
	N = logp.num_clips
	_check_assignable(logp)
	if K > max_exact_queries:
		return _fallback(logp, "%s queries exceed the exact limit of %s" % (K, max_exact_queries))
	if K > N:
		return _fallback(logp, "%s queries cannot fit disjointly in %s clips" % (K, N))
	tables = build_dp_tables(logp)
	best = tables.best_score
	if not np.isfinite(best):
		return _fallback(logp, "no disjoint assignment has finite score")
	entries = backtrack(logp, tables)
	return Assignment(logp.video_id, entries, best, "dp")

def greedy_select(logp, fallback_used=False):
	_check_assignable(logp)
	entries = []
	for k in range(logp.num_queries):
		(s, n) = np.unravel_index(int(np.argmax(logp.logp[k])), logp.logp[k].shape)
		entries.append(_entry(logp, k, s, n))
	total = 0.0
	for e in entries:
		total += e.logprob
	return Assignment(logp.video_id, entries, total, "greedy", fallback_used)

def brute_force_select(logp):
	K = logp.num_queries
	N = logp.num_clips
	if K > BRUTE_FORCE_MAX_QUERIES or N > BRUTE_FORCE_MAX_CLIPS:
		raise ConfigurationError("Brute force is limited to %s queries and %s clips, got %s and %s" % (
			BRUTE_FORCE_MAX_QUERIES, BRUTE_FORCE_MAX_CLIPS, K, N))
	_check_assignable(logp)
	if K > N:
		raise InfeasibleError("%s disjoint intervals cannot fit in %s clips" % (K, N))

	cells = []
	for k in range(K):
		finite = np.argwhere(np.isfinite(logp.logp[k]))
		cells.append([(int(s), int(n)) for (s, n) in finite])

	best = {'score': None, 'key': None, 'entries': None}
	chosen = []

	def visit(k):
		if k == K:
			ordered = sorted(chosen, key=lambda e: e.interval.start)
			total = _temporal_sum(ordered)
			key = tuple((e.query_index, e.interval.start, e.interval.end) for e in reversed(ordered))
			if best['score'] is None or total > best['score'] or \
				(total == best['score'] and key < best['key']):
				best['score'] = total
				best['key'] = key
				best['entries'] = list(chosen)
			return
		for (s, n) in cells[k]:
			if any(max(s, e.interval.start) <= min(n, e.interval.end) for e in chosen):
				continue
			chosen.append(_entry(logp, k, s, n))
			visit(k + 1)
			chosen.pop()

	visit(0)
	if best['entries'] is None:
		raise InfeasibleError("Video '%s' has no disjoint assignment with finite score" % logp.video_id)
	return Assignment(logp.video_id, best['entries'], best['score'], "brute")

def rescore(assignment, logp):
	"""Objective of an assignment's intervals against a log-probability tensor."""
	entries = [_entry(logp, e.query_index, e.interval.start, e.interval.end) for e in assignment.entries]
	return _temporal_sum(entries)

def validate_assignment(assignment, num_queries):
	if assignment.num_queries != num_queries:
		raise InvariantError("Assignment for '%s' has %s entries, expected %s" % (
			assignment.video_id, assignment.num_queries, num_queries))
	if abs(sum(e.logprob for e in assignment.entries) - assignment.objective) > 1e-9:
		raise InvariantError("Objective of '%s' does not match its entries" % assignment.video_id)
	if assignment.method in ("dp", "brute") and not assignment.fallback_used:
		if assignment.first_overlap() is not None:
			raise InvariantError("Exact assignment for '%s' overlaps" % assignment.video_id)
	return True

def solve(logp, config=None):
	if config is None:
		config = factory.solver_config()
	if config.method == "dp":
		return dp_select(logp, config.max_exact_queries)
	elif config.method == "greedy":
		return greedy_select(logp)
	elif config.method == "brute":
		return brute_force_select(logp)
	raise ConfigurationError("Unknown selection method '%s'" % config.method)

def select_video(stack, config=None):
	"""Map a video's fused ScoreStack to log-probabilities and select intervals."""
	if config is None:
		config = factory.solver_config()
	logp = score_to_logprob(stack, config.prob_map, config.epsilon, config.sigmoid_scale)
	assignment = solve(logp, config)
	validate_assignment(assignment, stack.num_queries)
	return assignment

def dp_cell_count(num_queries, num_clips):
	"""Candidate (subset, query, start, end) evaluations made by build_dp_tables."""
	return num_queries * (1 << (num_queries - 1)) * num_clips * (num_clips + 1) // 2

def dp_memory_estimate(num_queries, num_clips, block_cells=DP_BLOCK_CELLS):
	"""Bytes held by the DP tables plus the per-clip working buffers."""
	full = 1 << num_queries
	half = full // 2
	sb = np.dtype(_index_dtype(num_clips)).itemsize
	tables = full * (num_clips + 1) * (8 + 4 + 1 + sb) + full * num_clips * (1 + sb)
	block = min(num_queries * half * num_clips, max(block_cells, half * num_clips))
	working = block * 8 + num_queries * full * (8 + 8) + full * 8 * 4
	return tables + working
