"""Command-line front end: gen -> collect -> attack/sweep -> authstats/protocol.

Every command is deterministic given its flags; outputs embed enough
configuration to regenerate them (wall-clock timing columns excepted).
Flag defaults may be overridden per-flag through environment variables
named RSO_PUF_<FLAG> (e.g. RSO_PUF_SEED=7), for CI sweeps.

Exit codes: 0 success, 2 usage, 3 I/O failure, 4 contract violation.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
import time

import numpy as np

from . import metrics, rso
from .attacks import (
    CrpDataset,
    evaluate,
    harvest_raw,
    harvest_rso,
    train_cmaes,
    train_lr,
    train_mlp,
)
from .attacks.report import REPORT_COLUMNS
from .core import (
    calibrate_noise,
    instance_from_text,
    instance_to_text,
    measured_flip_rate,
    random_challenges,
    sample_instance,
)
from .errors import ContractViolationError, ProtocolError
from .protocol import (
    DeviceState,
    ServerState,
    enroll,
    run_campaign,
    write_transcript_log,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_CONTRACT = 4

ENV_PREFIX = "RSO_PUF_"


def _env_default(name: str, fallback):
    return os.environ.get(ENV_PREFIX + name.upper().replace("-", "_"), fallback)


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-rso-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _append_csv(path: str, header: str, rows: list[str], config: dict) -> None:
    fresh = not os.path.exists(path)
    with open(path, "a") as fh:
        if fresh:
            fh.write(f"# config: {json.dumps(config, sort_keys=True)}\n")
            fh.write(header + "\n")
        for row in rows:
            fh.write(row + "\n")


def _load_instance(path: str):
    with open(path) as fh:
        return instance_from_text(fh.read())


def cmd_gen(args) -> int:
    instance = sample_instance(args.n, seed=args.seed)
    extra = {"flip_rate_target": args.p_intra_target}
    if args.p_intra_target > 0:
        sigma = calibrate_noise(instance, args.p_intra_target, seed=args.seed or 0)
        instance = instance.with_noise(sigma)
        check = random_challenges(args.n, 20000, rng=(args.seed or 0) + 1)
        extra["flip_rate_measured"] = repr(
            measured_flip_rate(instance, sigma, check)
        )
    _atomic_write(args.out, instance_to_text(instance, extra=extra))
    print(f"wrote instance n={args.n} seed={args.seed} -> {args.out}")
    return EXIT_OK


def _collect_rso_dataset(instance, count, m, seed, bank_count=4,
                         epsilon=0.05, set_updating=False):
    """Protocol sessions harvested from the eavesdropper's viewpoint."""
    n = instance.n
    sessions = math.ceil(count / n)
    ss = np.random.SeedSequence(seed)
    bank_seed, device_seed, server_seed = ss.spawn(3)
    bank = rso.build_bank(
        instance, m, bank_count=bank_count, rng=np.random.default_rng(bank_seed)
    )
    device = DeviceState.provision("d0", instance, bank, seed=device_seed)
    server = ServerState(
        epsilon=epsilon, tau=0.25, seed=np.random.default_rng(server_seed)
    )
    enroll(server, device)
    harvested = []
    run_campaign(
        server,
        [device],
        sessions,
        adversary=harvested.append,
        set_updating=set_updating,
        keep_transcripts=False,
    )
    return harvest_rso(harvested, n=n, seed=seed)


def cmd_collect(args) -> int:
    instance = _load_instance(args.instance)
    if args.mode == "raw":
        ds = harvest_raw(
            instance, args.count, noisy=not args.clean, rng=args.seed, seed=args.seed
        )
    elif args.mode == "rso":
        ds = _collect_rso_dataset(
            instance, args.count, args.m, args.seed,
            bank_count=args.bank_count, set_updating=args.set_updating,
        )
    else:
        raise ContractViolationError(f"unknown mode {args.mode!r}")
    ds.to_file(args.out)
    print(f"wrote {len(ds)} {args.mode} records -> {args.out}")
    return EXIT_OK


TRAINERS = {
    "lr": lambda ds, args, rng: train_lr(ds, max_epochs=args.max_epochs),
    "mlp": lambda ds, args, rng: train_mlp(ds, max_epochs=args.max_epochs, rng=rng),
    "cmaes": lambda ds, args, rng: train_cmaes(ds, generations=args.generations, rng=rng),
}


def _run_attack(ds: CrpDataset, method: str, args, m=None):
    rng = np.random.default_rng(args.seed)
    started = time.perf_counter()
    model = TRAINERS[method](ds, args, rng)
    seconds = time.perf_counter() - started
    if args.test_instance:
        inst = _load_instance(args.test_instance)
        test = harvest_raw(inst, args.test_count, noisy=args.test_noisy,
                           rng=(args.seed or 0) + 1)
        challenges, responses = test.challenges, test.responses
    else:
        challenges, responses = ds.test
    return evaluate(
        model, challenges, responses,
        method=method, train_size=len(ds.train[1]), seconds=seconds, m=m,
    )


def cmd_attack(args) -> int:
    if args.method not in TRAINERS:
        raise ContractViolationError(f"unknown method {args.method!r}")
    ds = CrpDataset.from_file(args.dataset)
    if len(ds) < 10:
        raise ContractViolationError("dataset too small to split")
    report = _run_attack(ds, args.method, args, m=args.m)
    config = {k: v for k, v in vars(args).items() if k != "func"}
    _append_csv(args.out, ",".join(REPORT_COLUMNS), [report.csv_row()], config)
    print(report.to_json())
    return EXIT_OK


def cmd_sweep_keys(args) -> int:
    instance = _load_instance(args.instance)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    for name in methods:
        if name not in TRAINERS:
            raise ContractViolationError(f"unknown method {name!r}")
    m_values = [int(tok) for tok in args.m_list.split(",")]
    rows = []
    for m in m_values:
        ds = _collect_rso_dataset(instance, args.count, m, args.seed)
        for method in methods:
            report = _run_attack(ds, method, args, m=m)
            rows.append(report.csv_row())
            print(report.to_json())
    config = {k: v for k, v in vars(args).items() if k != "func"}
    _append_csv(args.out, ",".join(REPORT_COLUMNS), rows, config)
    return EXIT_OK


def cmd_authstats(args) -> int:
    quality = metrics.eer_search(args.n, args.p_inter, args.p_intra)
    config = {"n": args.n, "p_inter": args.p_inter, "p_intra": args.p_intra}
    print(metrics.auth_quality_json(quality, config=config))
    print(
        "note: published-table normalization pairs with the balanced "
        f"(|FAR-FRR|-minimizing) point n={quality.n_balanced}; "
        f"max-minimizing point is n={quality.n_eer}"
    )
    if args.out:
        header = ",".join(metrics.AUTHSTATS_COLUMNS)
        rows = [metrics.auth_quality_csv_row(quality, row=args.row, balanced=True)]
        _append_csv(args.out, header, rows, config)
    if args.out_json:
        _atomic_write(args.out_json, metrics.auth_quality_json(quality, config=config))
    return EXIT_OK


def cmd_protocol(args) -> int:
    instance = _load_instance(args.instance)
    ss = np.random.SeedSequence(args.seed)
    bank_seed, device_seed, server_seed = ss.spawn(3)
    bank = rso.build_bank(
        instance, args.m, bank_count=args.bank_count,
        rng=np.random.default_rng(bank_seed),
    )
    device = DeviceState.provision("device-0", instance, bank, seed=device_seed)
    server = ServerState(
        epsilon=args.epsilon,
        tau=args.tau,
        n_tolerance=args.n_tolerance,
        seed=np.random.default_rng(server_seed),
    )
    enroll(server, device)
    report = run_campaign(server, [device], args.sessions)
    config = {k: v for k, v in vars(args).items() if k != "func"}
    if args.transcripts:
        write_transcript_log(report.transcripts, args.transcripts)
    _atomic_write(args.out, report.to_json(config=config))
    print(report.to_json(config=config))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rso-puf",
        description="Simulate masked-PUF authentication and attack it.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def opt(p, flag, **kwargs):
        dest = flag.lstrip("-").replace("-", "_")
        env = _env_default(dest, None)
        if env is not None:
            if kwargs.get("type") is not None:
                kwargs["default"] = kwargs["type"](env)
            else:
                kwargs["default"] = env
            kwargs.pop("required", None)
        p.add_argument(flag, **kwargs)

    p = sub.add_parser("gen", help="sample an instance and calibrate its noise")
    opt(p, "--n", type=int, default=64)
    opt(p, "--seed", type=int, default=0)
    opt(p, "--p-intra-target", type=float, default=0.05)
    opt(p, "--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("collect", help="harvest a CRP dataset (raw or masked)")
    opt(p, "--instance", required=True)
    opt(p, "--count", type=int, default=10000)
    opt(p, "--mode", choices=["raw", "rso"], default="raw")
    opt(p, "--m", type=int, default=8)
    opt(p, "--bank-count", type=int, default=4)
    opt(p, "--seed", type=int, default=0)
    p.add_argument("--clean", action="store_true",
                   help="raw mode: evaluate without measurement noise")
    p.add_argument("--set-updating", action="store_true",
                   help="rso mode: rotate keys at the exposure threshold "
                        "(held fixed by default for attack experiments)")
    opt(p, "--out", required=True)
    p.set_defaults(func=cmd_collect)

    def attack_opts(p):
        opt(p, "--seed", type=int, default=0)
        opt(p, "--max-epochs", type=int, default=500)
        opt(p, "--generations", type=int, default=300)
        opt(p, "--test-instance", default=None)
        opt(p, "--test-count", type=int, default=10000)
        p.add_argument("--test-noisy", action="store_true")
        opt(p, "--out", required=True)

    p = sub.add_parser("attack", help="train one attack on a dataset file")
    opt(p, "--dataset", required=True)
    opt(p, "--method", choices=sorted(TRAINERS), default="lr")
    opt(p, "--m", type=int, default=None)
    attack_opts(p)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("sweep-keys", help="attack accuracy across key-set sizes")
    opt(p, "--instance", required=True)
    opt(p, "--m-list", default="2,4,8,16,32")
    opt(p, "--count", type=int, default=100000)
    opt(p, "--methods", default="lr")
    attack_opts(p)
    p.set_defaults(func=cmd_sweep_keys)

    p = sub.add_parser("authstats", help="analytic FAR/FRR/EER table row")
    opt(p, "--n", type=int, required=True)
    opt(p, "--p-inter", type=float, required=True)
    opt(p, "--p-intra", type=float, required=True)
    opt(p, "--row", type=int, default=1)
    opt(p, "--out", default=None)
    opt(p, "--out-json", default=None)
    p.set_defaults(func=cmd_authstats)

    p = sub.add_parser("protocol", help="run an honest authentication campaign")
    opt(p, "--instance", required=True)
    opt(p, "--sessions", type=int, default=100)
    opt(p, "--m", type=int, default=2)
    opt(p, "--bank-count", type=int, default=8)
    opt(p, "--epsilon", type=float, default=0.05)
    opt(p, "--tau", type=float, default=None)
    opt(p, "--n-tolerance", type=int, default=13)
    opt(p, "--seed", type=int, default=0)
    opt(p, "--transcripts", default=None)
    opt(p, "--out", required=True)
    p.set_defaults(func=cmd_protocol)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ContractViolationError, ProtocolError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
