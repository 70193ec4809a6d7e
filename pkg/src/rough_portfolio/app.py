import argparse
import logging
import sys
from collections.abc import Sequence
from pathlib import Path

from rough_portfolio.models.coefficients import CoefficientField, ControlledCoefficients
from rough_portfolio.models.controlled_path import ControlledPath
from rough_portfolio.models.paths import PartitionScheme
from rough_portfolio.models.report import ExperimentReport
from rough_portfolio.models.rough_path import TimeAugmentedRoughPath
from rough_portfolio.models.sweep import SweepConfig
from rough_portfolio.services import lab, report_service
from rough_portfolio.services.config_service import ConfigService, parse_overrides
from rough_portfolio.services.market_lv import realized_wealth
from rough_portfolio.services.noise import generate, noise_lift, rie_report
from rough_portfolio.utils.constants import APP_NAME
from rough_portfolio.utils.errors import RoughPortfolioError

try:
    from rough_portfolio._version import __version__
except ImportError:
    __version__ = "0.0.0"

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ACCEPTANCE = 1
EXIT_ERROR = 2

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

# CLI noise flags -> config keys
_NOISE_FLAGS = {"kind": "noise.kind", "d": "noise.dim", "T": "noise.horizon", "level": "noise.level", "seed": "seeds"}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="Flat key=value experiment file.")
    common.add_argument("--out", type=Path, default=Path("."), help="Output directory.")
    common.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE", help="Override a config key."
    )
    common.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    noise = argparse.ArgumentParser(add_help=False)
    noise.add_argument("--kind", help="brownian, zero, identity or sin.")
    noise.add_argument("--d", type=int, help="Noise dimension.")
    noise.add_argument("--T", type=float, help="Horizon.")
    noise.add_argument("--level", type=int, help="Master grid level (2^level cells).")
    noise.add_argument("--seed", type=int, help="Noise seed.")

    parser = argparse.ArgumentParser(prog=APP_NAME, description="Pathwise log-optimal portfolios on rough paths.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-noise", parents=[common, noise], help="Write a driving path as CSV.")
    gen.set_defaults(handler=_gen_noise)

    lift = sub.add_parser("lift", parents=[common, noise], help="Write the Itô-type lift and its Riemann-sum diagnostic.")
    lift.add_argument("--scheme", default="dyadic", help="Partition scheme for the diagnostic.")
    lift.add_argument("--n-max", type=int, help="Finest partition level of the diagnostic.")
    lift.set_defaults(handler=_lift)

    solve = sub.add_parser("solve", parents=[common, noise], help="Solve the price path of the configured model.")
    solve.set_defaults(handler=_solve)

    portfolio = sub.add_parser("portfolio", parents=[common, noise], help="Build the log-optimal portfolio.")
    portfolio.set_defaults(handler=_portfolio)

    stability = sub.add_parser("stability", parents=[common], help="Run a stability sweep.")
    stability.set_defaults(handler=_experiment, experiment="stability")

    discretize = sub.add_parser("discretize", parents=[common], help="Run a discretization sweep.")
    discretize.set_defaults(handler=_experiment, experiment="discretization")

    selftest = sub.add_parser("selftest", parents=[common], help="Run the built-in numerical checks.")
    selftest.add_argument("--seed", type=int, default=0)
    selftest.add_argument("--ito-seeds", type=int, default=20)
    selftest.add_argument("--quick", action="store_true", help="Smaller grids for a fast smoke run.")
    selftest.set_defaults(handler=_selftest)
    return parser


def _load_config(args: argparse.Namespace, **forced: str) -> SweepConfig:
    overrides = parse_overrides(args.overrides)
    for flag, key in _NOISE_FLAGS.items():
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = str(value)
    overrides.update(forced)
    service = ConfigService()
    if args.config is not None:
        return service.load(args.config, overrides)
    return service.from_settings(overrides)


def _gen_noise(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    path = generate(cfg.noise.with_seed(cfg.seeds[0]))
    target = args.out if args.out.suffix == ".csv" else args.out / "noise.csv"
    print(report_service.write_path(path, target))
    return EXIT_OK


def _lift(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    spec = cfg.noise.with_seed(cfg.seeds[0])
    print(report_service.write_lift(noise_lift(spec), args.out / "lift.csv"))
    if args.n_max is not None:
        scheme, _ = PartitionScheme.parse(args.scheme, spec.horizon)
        diagnostic = rie_report(spec, scheme, cfg.p, args.n_max)
        print(report_service.write_records(diagnostic.to_records(), args.out / "rie.csv"))
        if not diagnostic.bounded:
            return EXIT_ACCEPTANCE
    return EXIT_OK


def _market(
    cfg: SweepConfig,
) -> tuple[TimeAugmentedRoughPath, CoefficientField | ControlledCoefficients, ControlledPath]:
    lift = noise_lift(cfg.noise.with_seed(cfg.seeds[0]))
    coeffs = lab.market_coefficients(cfg, lift, 0.0)
    return lift, coeffs, lab.market_price(cfg, coeffs, lift)


def _solve(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    _, _, price = _market(cfg)
    for name, value in sorted(price.diagnostics.items()):
        logger.info("price diagnostic %s = %.6g", name, value)
    print(report_service.write_path(price.value_path(), args.out / "price.csv", prefix="S"))
    return EXIT_OK


def _portfolio(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    lift, coeffs, price = _market(cfg)
    clock = lab.make_clock(cfg.clock, lift.times)
    portfolio, wealth = lab.market_portfolio(cfg, coeffs, price, clock)
    realized = realized_wealth(portfolio, price, clock)
    for name, value in sorted(portfolio.diagnostics.items()):
        logger.info("portfolio diagnostic %s = %.6g", name, value)
    frame = report_service.portfolio_frame(portfolio, wealth, realized)
    print(report_service.write_csv(frame, args.out / "portfolio.csv"))
    return EXIT_OK


def _finish(report: ExperimentReport, out: Path) -> int:
    json_path, csv_path = report_service.write_report(report, out)
    print(json_path)
    print(csv_path)
    print(f"{report.name}: {'passed' if report.passed else 'FAILED'}")
    return EXIT_OK if report.passed else EXIT_ACCEPTANCE


def _experiment(args: argparse.Namespace) -> int:
    cfg = _load_config(args, experiment=args.experiment)
    return _finish(lab.run_experiment(cfg), args.out)


def _selftest(args: argparse.Namespace) -> int:
    if args.quick:
        report = lab.selftest(
            args.seed, args.ito_seeds, ito_level=12, algebra_level=10, consistency_level=10, merton_level=12
        )
    else:
        report = lab.selftest(args.seed, args.ito_seeds)
    return _finish(report, args.out)


def run(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), format=LOG_FORMAT)
    try:
        return args.handler(args)
    except RoughPortfolioError as e:
        print(f"{APP_NAME}: error: {e}", file=sys.stderr)
        return EXIT_ERROR


def main():
    sys.exit(run())
