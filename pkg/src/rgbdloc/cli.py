"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 input/output error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .errors import ConfigError, DimensionMismatch, FormatError, InvalidSpec, MissingGroundTruth
from .estimation import PROPOSED
from .feature_map import build_map, load_map, read_frames, save_map, write_frames, write_gen_sidecar
from .harness.config import ExperimentConfig, load_config, parse_set_args, render_config
from .harness.experiment import (
    ExperimentResult,
    Scenario,
    localize_all,
    make_localizer,
    run_experiment,
    simulate_evaluation,
    simulate_mapping,
    write_outputs,
)
from .harness.metrics import EvalConfig, evaluate
from .harness.reports import read_reports, write_reports
from .index import MapIndices
from .simworld import World, generate_world

EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 2, 3
log = logging.getLogger("rgbdloc")


def _config(args) -> ExperimentConfig:
    overrides = parse_set_args(args.set or [])
    for key in ("jobs", "output_dir"):
        v = getattr(args, key, None)
        if v is not None:
            overrides[key] = str(v)
    return load_config(args.config, overrides)


def gen_path(frames_path: str | Path) -> Path:
    """Sidecar ``<stem>.gen`` next to a frames file."""
    return Path(frames_path).with_suffix(".gen")


def cmd_genworld(args) -> int:
    cfg = _config(args)
    world = generate_world(cfg.world_spec())
    save_map(world.as_map(), args.out)
    log.info("wrote %d landmarks to %s", len(world), args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _config(args)
    if args.world:
        wm = load_map(args.world)
        world = World(wm.positions, wm.descriptors, None, None)
    else:
        world = generate_world(cfg.world_spec())
    sim = simulate_mapping if args.trajectory == "mapping" else simulate_evaluation
    frames, gen = sim(world, cfg)
    write_frames(frames, args.out, world.descriptors.shape[1])
    write_gen_sidecar(((i, j, int(lid)) for i, ids in enumerate(gen) for j, lid in enumerate(ids)), gen_path(args.out))
    log.info("wrote %d frames to %s", len(frames), args.out)
    return EXIT_OK


def cmd_build_map(args) -> int:
    cfg = _config(args)
    fmap = build_map(read_frames(args.frames), cfg.build_params())
    save_map(fmap, args.out)
    log.info("built map with %d features", len(fmap))
    return EXIT_OK


def _remote_localize(url: str, frames, approach: str):
    import httpx

    from .service.app import frame_to_request, response_to_report

    reports = []
    with httpx.Client(base_url=url, timeout=60.0) as client:
        for fr in frames:
            resp = client.post("/localize", json=frame_to_request(fr, approach))
            if resp.status_code == 422:
                raise ConfigError(f"server rejected request: {resp.text}")
            resp.raise_for_status()
            reports.append(response_to_report(resp.json()))
    return reports


def cmd_localize(args) -> int:
    cfg = _config(args)
    frames = read_frames(args.frames)
    approaches = args.approach or [PROPOSED]
    reports = []
    if args.server:
        import httpx

        try:
            for a in approaches:
                reports += _remote_localize(args.server, frames, a)
        except httpx.HTTPError as exc:
            raise OSError(f"server request failed: {exc}") from exc
    else:
        fmap = load_map(args.map)
        indices = MapIndices.build(fmap, cfg.descriptor_index, cfg.forest_params())
        for a in approaches:
            try:
                loc = make_localizer(a, fmap, indices, cfg)
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
            reports += localize_all(frames, loc, cfg.jobs)
    write_reports(reports, args.out)
    for a in approaches:
        ok = sum(r.success for r in reports if r.approach == a)
        print(f"{a}: {ok}/{len(frames)} frames localized")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    frames = read_frames(args.frames)
    if any(f.ground_truth is None for f in frames):
        raise MissingGroundTruth(f"{args.frames}: frames lack ground-truth poses")
    truth = {f.frame_index: f.ground_truth for f in frames}
    by_approach: dict[str, list] = {}
    for r in read_reports(args.reports):
        by_approach.setdefault(r.approach, []).append(r)
    result = ExperimentResult(cfg, list(by_approach), scenario=Scenario(None, frames))
    evalc = EvalConfig(cfg.failure_threshold)
    for name, reps in by_approach.items():
        reps.sort(key=lambda r: r.frame_index)
        missing = [r.frame_index for r in reps if r.frame_index not in truth]
        if missing:
            raise FormatError(f"reports reference unknown frames {missing[:5]}")
        result.reports[name] = reps
        m = result.metrics[name] = evaluate(reps, [truth[r.frame_index] for r in reps], evalc, name)
        print(f"{name}: success_rate={m.success_rate:.3f} rmse_xyz_m={m.rmse_xyz.round(4).tolist()} "
              f"rmse_angles_deg={m.rmse_angles_deg.round(3).tolist()}")
    if args.output_dir:
        write_outputs(result, args.output_dir)
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = _config(args)
    result = run_experiment(cfg)
    for name, m in result.metrics.items():
        print(f"{name}: success_rate={m.success_rate:.3f} total_s={m.mean_times['total']:.4f}")
    print(f"results in {cfg.output_dir}")
    return EXIT_OK


def cmd_config(args) -> int:
    sys.stdout.write(render_config(_config(args)))
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service.app import create_app

    cfg = _config(args)
    uvicorn.run(create_app(args.map, cfg), host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rgbdloc", description="Global 6-DoF localization in sparse feature maps")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def command(name, func, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="key = value config file")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (repeatable)")
        sp.set_defaults(func=func)
        return sp

    sp = command("genworld", cmd_genworld, "generate world landmarks (FMAP)")
    sp.add_argument("--out", required=True)

    sp = command("simulate", cmd_simulate, "render frames along a trajectory (FRAMES + .gen sidecar)")
    sp.add_argument("--world", help="world FMAP from genworld (default: generate from config)")
    sp.add_argument("--trajectory", choices=("mapping", "evaluation"), default="evaluation")
    sp.add_argument("--out", required=True)

    sp = command("build-map", cmd_build_map, "build a feature map from mapping frames")
    sp.add_argument("--frames", required=True)
    sp.add_argument("--out", required=True)

    sp = command("localize", cmd_localize, "localize frames, write a reports file")
    sp.add_argument("--map", help="FMAP file (required unless --server)")
    sp.add_argument("--frames", required=True)
    sp.add_argument("--approach", action="append", help="proposed (default) or baseline<k>; repeatable")
    sp.add_argument("--server", help="base URL of a running 'rgbdloc serve' instance")
    sp.add_argument("--jobs", type=int)
    sp.add_argument("--out", required=True)

    sp = command("evaluate", cmd_evaluate, "score a reports file against frame ground truth")
    sp.add_argument("--reports", required=True)
    sp.add_argument("--frames", required=True)
    sp.add_argument("--output-dir", help="also write CSV/SVG results here")

    sp = command("bench", cmd_bench, "run the full benchmark and write CSV/SVG results")
    sp.add_argument("--jobs", type=int)
    sp.add_argument("--output-dir")

    command("config", cmd_config, "print the effective config with documentation")

    sp = command("serve", cmd_serve, "serve localization over HTTP")
    sp.add_argument("--map", required=True)
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--port", type=int, default=8000)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "localize" and not (args.map or args.server):
        parser.error("localize needs --map or --server")
    try:
        return args.func(args)
    except (ConfigError, InvalidSpec) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, FormatError, MissingGroundTruth, DimensionMismatch) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
