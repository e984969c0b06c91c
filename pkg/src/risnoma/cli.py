"""Command-line client for the risnoma service.

Every subcommand becomes one HTTP request. With ``--server`` the request goes
to a running service; without it the application is driven in-process.
"""
from __future__ import annotations

import argparse
import json
import sys
import warnings

import httpx

from .config import BASELINE_VARIANTS, PROFILES


def _elements(text: str) -> list[int]:
    try:
        out = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not out:
        raise argparse.ArgumentTypeError("no element counts given")
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="risnoma", description=__doc__.splitlines()[0])
    p.add_argument("--server", help="base URL of a running service (default: in-process)")
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--profile", choices=PROFILES, help="named defaults (desk when nothing else is given)")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key, e.g. agent.episodes=500 (repeatable)")
    common.add_argument("--out", help="output directory")

    sp = sub.add_parser("predict", parents=[common], help="forecast endpoints only")
    sp.add_argument("--seed", type=int)
    sp = sub.add_parser("train", parents=[common], help="forecast, train and evaluate")
    sp.add_argument("--seed", type=int, required=True)
    sp = sub.add_parser("baseline", parents=[common], help="train one baseline scheme")
    sp.add_argument("--variant", required=True, choices=BASELINE_VARIANTS)
    sp.add_argument("--seed", type=int)
    sp = sub.add_parser("sweep", parents=[common], help="train once per RIS element count")
    sp.add_argument("--elements", type=_elements, required=True, metavar="K1,K2,...")
    sp.add_argument("--seed", type=int)
    sp = sub.add_parser("report", help="median results over every run below a directory")
    sp.add_argument("root", nargs="?", default="runs")

    sp = sub.add_parser("serve", help="run the HTTP service")
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--port", type=int, default=8000)
    return p


def request_for(args: argparse.Namespace) -> tuple[str, dict]:
    if args.command == "report":
        return "/report", {"root": args.root}
    body = {"profile": args.profile, "config_path": args.config, "overrides": args.overrides,
            "output_dir": args.out, "seed": args.seed}
    if args.command == "baseline":
        body["variant"] = args.variant
    elif args.command == "sweep":
        body["elements"] = args.elements
    return f"/{args.command}", {k: v for k, v in body.items() if v is not None}


def _client(server: str | None):
    if server:
        return httpx.Client(base_url=server, timeout=None)
    with warnings.catch_warnings():
        # starlette nags about its httpx backend; irrelevant for an in-process call
        warnings.simplefilter("ignore")
        from fastapi.testclient import TestClient
    from .service import app
    return TestClient(app)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "serve":
        import uvicorn
        uvicorn.run("risnoma.service:app", host=args.host, port=args.port)
        return 0
    path, body = request_for(args)
    try:
        with _client(args.server) as client:
            resp = client.post(path, json=body)
    except httpx.HTTPError as exc:
        print(f"error: cannot reach {args.server}: {exc}", file=sys.stderr)
        return 2
    if resp.status_code != 200:
        try:
            detail = resp.json().get("detail", resp.text)
        except ValueError:
            detail = resp.text
        print(f"error: {detail}", file=sys.stderr)
        return 1
    print(json.dumps(resp.json(), indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
