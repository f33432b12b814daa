"""
Command-line entry point: ``python -m paperpuf <command>``.

Exit codes: 0 on success, 1 on usage errors, 2 on domain errors.
"""

from datetime import datetime
from pathlib import Path
from typing import List, Optional, Sequence
import argparse
import sys

from paperpuf.config import Settings, load_settings
from paperpuf.db.formats import (
    load_capture,
    load_codec,
    load_norm_map,
    load_patch,
    save_capture,
    save_codec,
    save_norm_map,
    save_patch,
)
from paperpuf.db.store import TemplateStore
from paperpuf.errors import InvalidParam, PufError
from paperpuf.middleware.logging import logger
from paperpuf.models.analysis import CollisionQuery
from paperpuf.models.attacks import DEFAULT_STRENGTHS, AttackKind, AttackMethod, AttackSpec
from paperpuf.models.latent import CodecComponent
from paperpuf.models.normmap import Component
from paperpuf.models.records import SourceTag
from paperpuf.services import analysis_service, latent_service
from paperpuf.services.auth_service import enroll_template, verify_query
from paperpuf.services.digattack_service import ScoreOracle, run_attack, success_rate_table
from paperpuf.services.estimator_service import extract_feature, lights_from_settings
from paperpuf.services.optics_service import align, render
from paperpuf.services.physattack_service import degradation_sweep
from paperpuf.services.scenario_service import build_attack_scenario, matched_unmatched_scores, simulate_sheet

EXIT_OK, EXIT_USAGE, EXIT_DOMAIN = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common_options(parser: argparse.ArgumentParser, suppress: bool):
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--seed", type=int, default=default, help="Seed for randomized commands")
    parser.add_argument("--config", default=default, help="TOML file with settings")
    parser.add_argument("--out", default=default, help="Output path; tables go to stdout when omitted")


def _announce_seed(settings: Settings) -> int:
    print(f"seed={settings.seed}", file=sys.stderr)
    return settings.seed


def _emit(text: str, out: Optional[str]):
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _require_out(args) -> str:
    if not args.out:
        raise InvalidParam(f"{args.command} needs --out")
    return args.out


# --- pipeline commands ---------------------------------------------------

def cmd_generate(args, settings: Settings) -> int:
    seed = _announce_seed(settings)
    patch = simulate_sheet(settings, seed)
    save_patch(_require_out(args), patch)
    logger.info(f"Wrote patch {args.out} ({patch.height}x{patch.width})")
    return EXIT_OK


def cmd_render(args, settings: Settings) -> int:
    seed = _announce_seed(settings)
    capture = render(
        load_patch(args.patch),
        lights_from_settings(settings),
        noise_sigma=settings.noise_sigma,
        seed=seed,
        max_shift=settings.max_shift,
        specular_weight=settings.specular_weight,
        specular_exponent=settings.specular_exponent,
    )
    save_capture(_require_out(args), capture)
    logger.info(f"Wrote {capture.count} images to {args.out}")
    return EXIT_OK


def cmd_align(args, settings: Settings) -> int:
    aligned = align(load_capture(args.capture), min_ncc=settings.min_alignment_ncc)
    save_capture(_require_out(args), aligned)
    offsets = ", ".join(f"({dy}, {dx})" for dy, dx in aligned.recovered_offsets.tolist())
    logger.info(f"Recovered offsets {offsets}")
    return EXIT_OK


def cmd_extract(args, settings: Settings) -> int:
    norm_map = extract_feature(load_capture(args.capture), min_ncc=settings.min_alignment_ncc)
    save_norm_map(_require_out(args), norm_map)
    logger.info(f"Wrote norm map {args.out}")
    return EXIT_OK


def cmd_enroll(args, settings: Settings) -> int:
    store = TemplateStore.open(args.store, settings.threshold)
    enrolled_at = datetime.fromisoformat(args.timestamp) if args.timestamp else None
    enroll_template(store, args.id, load_norm_map(args.norm_map), SourceTag(args.source), enrolled_at)
    return EXIT_OK


def cmd_verify(args, settings: Settings) -> int:
    store = TemplateStore.open(args.store)
    outcome = verify_query(store, load_norm_map(args.norm_map), None if args.search else args.id)
    _emit(
        analysis_service.to_csv(
            ("accepted", "corr_x", "corr_y", "matched_id"),
            [(str(outcome.accepted).lower(), outcome.score.corr_x, outcome.score.corr_y, outcome.matched_id)],
        ),
        args.out,
    )
    return EXIT_OK


# --- attacks -------------------------------------------------------------

def cmd_attack_phys(args, settings: Settings) -> int:
    seed = _announce_seed(settings)
    patch = load_patch(args.patch) if args.patch else simulate_sheet(settings, seed)
    strengths = tuple(args.strength) if args.strength else DEFAULT_STRENGTHS
    rows = degradation_sweep(patch, AttackKind(args.kind), strengths, args.trials, seed, settings)
    _emit(analysis_service.sweep_csv(rows), args.out)
    return EXIT_OK


def cmd_attack_digital(args, settings: Settings) -> int:
    seed = _announce_seed(settings)
    codec = load_codec(args.codec)
    companion = latent_service.mean_map(load_codec(args.companion_codec)) if args.companion_codec else None
    if args.server:
        from paperpuf.client import VerificationClient

        verifier = VerificationClient(args.server)
    else:
        verifier = TemplateStore.open(args.store)
    budget = args.budget if args.budget is not None else settings.budget
    component = Component(args.component or (codec.component.value if codec.component is not CodecComponent.JOINT else "min"))
    oracle = ScoreOracle(verifier, args.target_id, component)
    trace = run_attack(AttackMethod(args.method), oracle, codec, budget, seed, companion=companion, settings=settings)
    if args.trace:
        analysis_service.trace_csv(trace, args.trace)
    if args.forged and trace.forged is not None:
        save_norm_map(args.forged, trace.forged)
    _emit(
        analysis_service.to_csv(
            ("target_id", "method", "component", "success", "termination", "function_evals", "best_rho"),
            [(
                trace.target_id,
                trace.method,
                trace.component,
                str(trace.success).lower(),
                trace.termination,
                trace.function_evals,
                trace.best_rho,
            )],
        ),
        args.out,
    )
    return EXIT_OK


def cmd_codec_fit(args, settings: Settings) -> int:
    maps = [load_norm_map(path) for path in args.norm_maps]
    variance_target = args.variance_target if args.variance_target is not None else settings.variance_target
    codec = latent_service.fit(maps, variance_target, CodecComponent(args.component))
    save_codec(_require_out(args), codec)
    return EXIT_OK


# --- reports -------------------------------------------------------------

def cmd_report_hist(args, settings: Settings) -> int:
    seed = _announce_seed(settings)
    attack = AttackSpec(AttackKind(args.attack), args.attack_strength) if args.attack else None
    matched, unmatched = matched_unmatched_scores(settings, seed, args.pairs, attack)
    report = analysis_service.histogram_report([s.minimum for s in matched], [s.minimum for s in unmatched], args.bins)
    _emit(analysis_service.histogram_csv(report), args.out)
    print(f"gap={report.gap!r} overlap={report.overlap}", file=sys.stderr)
    return EXIT_OK


def cmd_report_sweep(args, settings: Settings) -> int:
    seed = _announce_seed(settings)
    patch = simulate_sheet(settings, seed)
    rows = []
    for kind in args.kinds or [kind.value for kind in AttackKind]:
        rows.extend(degradation_sweep(patch, AttackKind(kind), DEFAULT_STRENGTHS, args.trials, seed, settings))
    _emit(analysis_service.sweep_csv(rows), args.out)
    return EXIT_OK


def cmd_report_attacks(args, settings: Settings) -> int:
    seed = _announce_seed(settings)
    scenario = build_attack_scenario(settings, seed, args.holdout_sheets, args.reference_sheets, args.scans)
    budget = args.budget if args.budget is not None else settings.budget
    methods = [AttackMethod(m) for m in (args.methods or [m.value for m in AttackMethod])]
    rows = success_rate_table(
        scenario.store, scenario.target_ids, scenario.codec_x, scenario.codec_y, methods, budget, args.trials, seed, settings
    )
    _emit(analysis_service.success_rate_csv(rows), args.out)
    return EXIT_OK


def cmd_collide(args, settings: Settings) -> int:
    query = CollisionQuery(args.d, args.epsilon, args.radius)
    log10_p = analysis_service.collision_log10_probability(query)
    mantissa, exponent = analysis_service.collision_probability(query)
    header: List[str] = ["d", "epsilon", "radius", "log10_p", "mantissa", "exponent"]
    row: list = [query.d, query.epsilon, query.radius, log10_p, mantissa, exponent]
    if args.monte_carlo:
        seed = _announce_seed(settings)
        estimate = analysis_service.collision_monte_carlo(query, args.samples, seed)
        header += ["estimate", "hits", "samples", "sigma"]
        row += [estimate.probability, estimate.hits, estimate.samples, estimate.sigma]
    _emit(analysis_service.to_csv(header, [row]), args.out)
    return EXIT_OK


def cmd_serve(args, settings: Settings) -> int:
    import uvicorn

    from paperpuf.db.database import init_store

    init_store(args.store or settings.store_path)
    uvicorn.run("paperpuf.main:app", host=args.host, port=args.port, log_level=settings.log_level.lower())
    return EXIT_OK


# --- parser --------------------------------------------------------------

def _collide_arguments(parser: argparse.ArgumentParser, monte_carlo_flag: bool):
    parser.add_argument("--d", type=int, required=True, help="Dimension count")
    parser.add_argument("--epsilon", type=float, required=True, help="Similarity radius")
    parser.add_argument("--radius", type=float, default=1.0, help="Sampling-ball radius")
    parser.add_argument("--samples", type=int, default=1_000_000)
    if monte_carlo_flag:
        parser.add_argument("--monte-carlo", action="store_true", help="Add a Monte Carlo estimate")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="paperpuf", description="Paper PUF simulation, verification and attack toolkit")
    _common_options(parser, suppress=False)
    common = _Parser(add_help=False)
    _common_options(common, suppress=True)

    commands = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = commands.add_parser("generate", parents=[common], help="Synthesize a paper patch (.patch)")
    p.set_defaults(handler=cmd_generate)

    p = commands.add_parser("render", parents=[common], help="Render a patch into a capture directory")
    p.add_argument("patch")
    p.set_defaults(handler=cmd_render)

    p = commands.add_parser("align", parents=[common], help="Register the images of a capture")
    p.add_argument("capture")
    p.set_defaults(handler=cmd_align)

    p = commands.add_parser("extract", parents=[common], help="Estimate the norm map of a capture (.nmap)")
    p.add_argument("capture")
    p.set_defaults(handler=cmd_extract)

    p = commands.add_parser("enroll", parents=[common], help="Enroll a norm map into a store")
    p.add_argument("norm_map")
    p.add_argument("--store", required=True)
    p.add_argument("--id", required=True)
    p.add_argument("--source", choices=[s.value for s in SourceTag], default=SourceTag.SCANNER.value)
    p.add_argument("--timestamp", help="ISO-8601 enrollment time")
    p.set_defaults(handler=cmd_enroll)

    p = commands.add_parser("verify", parents=[common], help="Verify a norm map against a store")
    p.add_argument("norm_map")
    p.add_argument("--store", required=True)
    target = p.add_mutually_exclusive_group(required=True)
    target.add_argument("--id")
    target.add_argument("--search", action="store_true")
    p.set_defaults(handler=cmd_verify)

    attack = commands.add_parser("attack", help="Physical and digital attacks")
    attacks = attack.add_subparsers(dest="attack_command", required=True, parser_class=_Parser)

    p = attacks.add_parser("phys", parents=[common], help="Degradation sweep of one physical attack")
    p.add_argument("--kind", required=True, choices=[k.value for k in AttackKind])
    p.add_argument("--strength", type=float, nargs="+")
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--patch", help="Patch file; a sheet is generated from the seed when omitted")
    p.set_defaults(handler=cmd_attack_phys)

    p = attacks.add_parser("digital", parents=[common], help="Forge a norm map through the verify oracle")
    p.add_argument("--method", required=True, choices=[m.value for m in AttackMethod])
    p.add_argument("--target-id", required=True)
    p.add_argument("--codec", required=True, help="Codec (.lpc) fitted on the holdout")
    p.add_argument("--companion-codec", help="Codec whose mean fills the other component")
    p.add_argument("--component", choices=[c.value for c in Component])
    p.add_argument("--budget", type=int)
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--store")
    source.add_argument("--server", help="Base URL of a verification server")
    p.add_argument("--trace", help="Trace CSV (eval_index, rho_best)")
    p.add_argument("--forged", help="Write the best query as .nmap")
    p.set_defaults(handler=cmd_attack_digital)

    codec = commands.add_parser("codec", help="Latent codecs")
    codecs = codec.add_subparsers(dest="codec_command", required=True, parser_class=_Parser)
    p = codecs.add_parser("fit", parents=[common], help="Fit a PCA codec on holdout norm maps")
    p.add_argument("norm_maps", nargs="+")
    p.add_argument("--component", choices=[c.value for c in CodecComponent], default=CodecComponent.X.value)
    p.add_argument("--variance-target", type=float)
    p.set_defaults(handler=cmd_codec_fit)

    report = commands.add_parser("report", help="Experiment reports as CSV")
    reports = report.add_subparsers(dest="report_command", required=True, parser_class=_Parser)

    p = reports.add_parser("hist", parents=[common], help="Matched/unmatched score histogram")
    p.add_argument("--pairs", type=int, default=20)
    p.add_argument("--bins", type=int, default=20)
    p.add_argument("--attack", choices=[k.value for k in AttackKind])
    p.add_argument("--attack-strength", type=float, default=0.25)
    p.set_defaults(handler=cmd_report_hist)

    p = reports.add_parser("sweep", parents=[common], help="Degradation sweeps of all physical attacks")
    p.add_argument("--kinds", nargs="+", choices=[k.value for k in AttackKind])
    p.add_argument("--trials", type=int, default=10)
    p.set_defaults(handler=cmd_report_sweep)

    p = reports.add_parser("attacks", parents=[common], help="Digital attack success-rate table")
    p.add_argument("--methods", nargs="+", choices=[m.value for m in AttackMethod])
    p.add_argument("--budget", type=int)
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--holdout-sheets", type=int, default=14)
    p.add_argument("--reference-sheets", type=int, default=4)
    p.add_argument("--scans", type=int, default=3)
    p.set_defaults(handler=cmd_report_attacks)

    p = reports.add_parser("collide-mc", parents=[common], help="Collision probability with a Monte Carlo check")
    _collide_arguments(p, monte_carlo_flag=False)
    p.set_defaults(handler=cmd_collide, monte_carlo=True)

    p = commands.add_parser("collide", parents=[common], help="Collision probability (epsilon / R)^d")
    _collide_arguments(p, monte_carlo_flag=True)
    p.set_defaults(handler=cmd_collide)

    p = commands.add_parser("serve", parents=[common], help="Run the verification server")
    p.add_argument("--store")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(handler=cmd_serve)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        settings = load_settings(args.config, seed=args.seed)
        return args.handler(args, settings)
    except (PufError, ValueError, OSError) as e:
        # pydantic.ValidationError and TOML decode errors are ValueErrors
        logger.error(f"{type(e).__name__}: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DOMAIN
