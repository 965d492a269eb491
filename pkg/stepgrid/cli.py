"""stepgrid command line.

Clip indices in every file are 0-based and inclusive: [start, end] covers
clips start..end.
"""

import sys
import argparse

from stepgrid.model import factory, GridError, ConfigurationError, DataError, \
	InfeasibleError, InvariantError, PredictionSet, METHODS, PROB_MAPS
from stepgrid.reader import Reader
from stepgrid.pipeline import PipelineConfig, load_videos, load_ground_truth, select_videos, \
	fuse_inputs, run_pipeline, loss_batch, bench
from stepgrid.metrics import evaluate, compare_reports, ReportSet
from stepgrid.synthetic import SyntheticSpec, generate_synthetic, write_synthetic

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_DATA = 3
EXIT_INFEASIBLE = 4
EXIT_INVARIANT = 5
EXIT_CONFIG = 6


def exit_code(exc):
	# subclasses first: every GridError maps to exactly one code
	if isinstance(exc, DataError):
		return EXIT_DATA
	elif isinstance(exc, InfeasibleError):
		return EXIT_INFEASIBLE
	elif isinstance(exc, InvariantError):
		return EXIT_INVARIANT
	elif isinstance(exc, ConfigurationError):
		return EXIT_CONFIG
	return EXIT_UNEXPECTED


def _solver_flags(p):
	p.add_argument('--max-exact-queries', dest="max_exact_queries", type=int)
	p.add_argument('--prob-map', dest="prob_map", choices=PROB_MAPS)
	p.add_argument('--epsilon', type=float)
	p.add_argument('--sigmoid-scale', dest="sigmoid_scale", type=float)
	p.add_argument('--workers', type=int)

def build_parser():
	parser = argparse.ArgumentParser(prog="stepgrid",
		description="Non-overlapping step grounding on 2D temporal score maps")
	parser.add_argument('--config', help="JSON file of factory settings")
	parser.add_argument('--quiet', action='store_true', help="squash warnings")
	parser.add_argument('--strict', action='store_true', help="treat warnings as errors")
	sub = parser.add_subparsers(dest="command")
	sub.required = True

	p = sub.add_parser('fuse', help="fuse phrase/sentence maps, or ensemble several runs")
	p.add_argument('inputs', nargs='+')
	p.add_argument('-o', '--output', required=True, help="output directory")
	p.add_argument('--ensemble', action='store_true', help="average aligned maps across the inputs")
	p.add_argument('--binary', action='store_true', help="write packed binary score files")

	p = sub.add_parser('select', help="assign one interval per query")
	p.add_argument('inputs', nargs='+')
	p.add_argument('-o', '--output', required=True, help="prediction file")
	p.add_argument('--method', choices=METHODS)
	_solver_flags(p)

	p = sub.add_parser('eval', help="R@1, AVG and overlap statistics")
	p.add_argument('predictions', nargs='+')
	p.add_argument('--gt', required=True)
	p.add_argument('--thresholds', nargs='+', type=float)
	p.add_argument('-o', '--output', help="JSON report file; several prediction files give one document listing every report")

	p = sub.add_parser('loss', help="score stored maps with the training losses")
	p.add_argument('inputs', nargs='+')
	p.add_argument('--gt', required=True)
	p.add_argument('--mm', type=float, default=0.0, help="externally computed mutual matching loss")
	p.add_argument('--alpha', type=float)
	p.add_argument('--beta', type=float)
	p.add_argument('--iou-scale-min', dest="iou_scale_min", type=float)
	p.add_argument('--iou-scale-max', dest="iou_scale_max", type=float)
	p.add_argument('--prob-map', dest="prob_map", choices=PROB_MAPS)
	p.add_argument('--epsilon', type=float)
	p.add_argument('--sigmoid-scale', dest="sigmoid_scale", type=float)
	p.add_argument('-o', '--output', help="JSON report file")

	p = sub.add_parser('gen', help="generate a seeded synthetic corpus")
	p.add_argument('-o', '--output', required=True, help="output directory")
	p.add_argument('--num-videos', dest="num_videos", type=int, default=10)
	p.add_argument('--num-clips', dest="num_clips", type=int, default=32)
	p.add_argument('--min-queries', dest="min_queries", type=int, default=2)
	p.add_argument('--max-queries', dest="max_queries", type=int, default=6)
	p.add_argument('--noise-sigma', dest="noise_sigma", type=float, default=0.0)
	p.add_argument('--sharpness', type=float, default=1.0)
	p.add_argument('--num-phrases', dest="num_phrases", type=int, default=0)
	p.add_argument('--seed', type=int)
	p.add_argument('--binary', action='store_true')

	p = sub.add_parser('run', help="select with several methods, evaluate and compare")
	p.add_argument('inputs', nargs='+')
	p.add_argument('--gt', required=True)
	p.add_argument('-o', '--output', required=True, help="output directory")
	p.add_argument('--methods', nargs='+', choices=METHODS, default=["greedy", "dp"])
	p.add_argument('--thresholds', nargs='+', type=float)
	_solver_flags(p)

	p = sub.add_parser('bench', help="time the exact solver")
	p.add_argument('--queries', type=int, required=True)
	p.add_argument('--clips', type=int, required=True)
	p.add_argument('--repeats', type=int, default=3)
	p.add_argument('--seed', type=int)
	p.add_argument('--no-scaling', dest="scaling", action='store_false')
	p.add_argument('--enforce', action='store_true', help="fail when a time ratio leaves its band")
	p.add_argument('-o', '--output', help="JSON report file")
	return parser


def _solver_config(args, method=None):
	return factory.solver_config(method=method or getattr(args, 'method', None),
		max_exact_queries=getattr(args, 'max_exact_queries', None), prob_map=args.prob_map,
		epsilon=args.epsilon, sigmoid_scale=args.sigmoid_scale)

def _workers(args):
	return args.workers if args.workers is not None else factory.workers

def cmd_fuse(args, out):
	written = fuse_inputs(args.inputs, args.output, args.ensemble, args.binary)
	out.write("wrote %s fused score files to %s\n" % (len(written), args.output))

def cmd_select(args, out):
	preds = select_videos(load_videos(args.inputs), _solver_config(args), _workers(args))
	factory.toFile(preds, args.output)
	fallbacks = sum(1 for a in preds.assignments if a.fallback_used)
	out.write("%s videos selected with %s (%s fallbacks)\n" % (len(preds.assignments), preds.method, fallbacks))

def cmd_eval(args, out):
	gt = load_ground_truth(args.gt)
	reader = Reader()
	reports = []
	for fn in args.predictions:
		preds = reader.read_file(fn)
		if not isinstance(preds, PredictionSet):
			raise DataError("%s: expected a predictions file" % fn)
		report = evaluate(preds, gt, args.thresholds)
		out.write(report.as_text() + "\n")
		reports.append(report)
	if len(reports) > 1:
		out.write(compare_reports(reports) + "\n")
	if args.output:
		factory.toFile(reports[0] if len(reports) == 1 else ReportSet(reports), args.output)

def cmd_loss(args, out):
	cfg = factory.loss_config(alpha=args.alpha, beta=args.beta,
		iou_scale_min=args.iou_scale_min, iou_scale_max=args.iou_scale_max)
	summary = loss_batch(load_videos(args.inputs), load_ground_truth(args.gt), cfg,
		factory.solver_config(prob_map=args.prob_map, epsilon=args.epsilon, sigmoid_scale=args.sigmoid_scale),
		args.mm)
	out.write(summary.as_text() + "\n")
	if args.output:
		factory.toFile(summary, args.output)

def cmd_gen(args, out):
	seed = args.seed if args.seed is not None else factory.seed
	synth = SyntheticSpec(args.num_videos, args.num_clips, (args.min_queries, args.max_queries),
		args.noise_sigma, seed, args.sharpness, args.num_phrases)
	(videos, gt) = generate_synthetic(synth)
	(paths, gt_fn) = write_synthetic(videos, gt, args.output, args.binary)
	out.write("wrote %s videos and %s\n" % (len(paths), gt_fn))

def cmd_run(args, out):
	config = PipelineConfig(args.inputs, args.gt, args.output, args.methods,
		_solver_config(args, method=args.methods[0]), args.thresholds, _workers(args))
	results = run_pipeline(config)
	out.write(compare_reports([r for (p, r) in results.values()]) + "\n")

def cmd_bench(args, out):
	seed = args.seed if args.seed is not None else factory.seed
	report = bench(args.queries, args.clips, args.repeats, seed, scaling=args.scaling, enforce=args.enforce)
	out.write(report.as_text() + "\n")
	if args.output:
		factory.toFile(report, args.output)

COMMANDS = {
	'fuse': cmd_fuse,
	'select': cmd_select,
	'eval': cmd_eval,
	'loss': cmd_loss,
	'gen': cmd_gen,
	'run': cmd_run,
	'bench': cmd_bench
}


def main(argv=None, out=None, err=None):
	out = out or sys.stdout
	err = err or sys.stderr
	args = build_parser().parse_args(argv)
	saved = factory.__dict__.copy()
	try:
		if args.config:
			factory.load_config(args.config)
		if args.quiet:
			factory.set_debug("error")
		elif args.strict:
			factory.set_debug("error_on_warning")
		COMMANDS[args.command](args, out)
		return EXIT_OK
	except GridError as e:
		err.write("stepgrid %s: %s\n" % (args.command, e.args[0]))
		return exit_code(e)
	finally:
		factory.__dict__.update(saved)

def run():
	sys.exit(main())

if __name__ == '__main__':
	run()
