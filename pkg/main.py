from __future__ import annotations
import argparse
import logging
import sys
from pathlib import Path

from _version import __version__
from core.exceptions import ConfigurationError, OtocDimerError
from core.orchestrator import COMMANDS, Orchestrator
from utils import config_manager
from utils.error_logger import ErrorLogger
from utils.logger_setup import setup_logging
from utils.multithreading_utils import configure_max_workers

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def handle_unhandled_exception(exc_type, exc_value, exc_traceback):
    if issubclass(exc_type, KeyboardInterrupt):
        sys.__excepthook__(exc_type, exc_value, exc_traceback)
        return

    ErrorLogger.log_general_error(
        error_title="未处理的异常",
        error_message=str(exc_value),
        exception=exc_value,
        error_level="CRITICAL"
    )

    sys.__excepthook__(exc_type, exc_value, exc_traceback)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON 配置文件 (例如 configs/fig4.json)")
    common.add_argument("--theta", type=float, help="混合角 Θ ∈ [−π/2, π/2]")
    common.add_argument("--n", dest="n_particles", type=int, help="粒子数 N")
    common.add_argument("--omega", type=float, help="初始 Wigner 函数的压缩参数 ω")
    common.add_argument("--backend", choices=config_manager.VALID_BACKENDS, help="量子传播后端")
    common.add_argument("--seed", type=int, help="随机数种子")
    common.add_argument("--out", dest="output_dir", type=str, help="输出根目录")
    common.add_argument("--threads", type=int, help="工作线程数 (环境变量 OTOC_DIMER_THREADS 优先)")
    common.add_argument("--log-level", dest="log_level", choices=config_manager.VALID_LOG_LEVELS)
    common.add_argument("--plot-script", dest="plot_script", action="store_true", default=None,
                        help="在 CSV 旁写出 matplotlib 绘图脚本")
    common.add_argument("--set", dest="assignments", action="append", metavar="KEY=VALUE",
                        help="覆盖任意配置项，如 --set otoc.time_points=200")

    parser = argparse.ArgumentParser(prog="otoc-dimer", description="Bose-Hubbard 二聚体 OTOC 数值工具")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)
    helps = {
        "stability-scan": "反均匀不动点稳定指数 λs(Θ)",
        "phase-portrait": "等能线网格、不动点与分界线",
        "otoc": "量子 OTOC 与经典解析叠加、拟合与拐点",
        "husimi": "Husimi 分布时间演化帧",
        "scan": "Θ × N 参数扫描与指数拟合",
        "twa": "截断 Wigner 经典 OTOC 与解析式对照",
    }
    for command in COMMANDS:
        subparsers.add_parser(command, parents=[common], help=helps[command])
    return parser


def resolve_config(args: argparse.Namespace) -> dict:
    config = config_manager.load_config(args.config)
    flags = {key: getattr(args, key) for key in
             ("theta", "n_particles", "omega", "backend", "seed", "output_dir", "threads", "log_level",
              "plot_script")}
    config = config_manager.apply_overrides(config, flags)
    config = config_manager.apply_overrides(config, config_manager.parse_assignments(args.assignments))
    return config_manager.validate_config(config)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = resolve_config(args)
    except ConfigurationError as e:
        print(f"配置错误: {e}", file=sys.stderr)
        return EXIT_CONFIG

    output_root = Path(config["output_dir"])
    setup_logging(config["log_level"], output_root / "logs" / "application",
                  retention_days=int(config["log_retention_days"]), max_count=int(config["max_log_count"]))
    ErrorLogger.set_log_dir(output_root / "logs" / "errors")
    configure_max_workers(int(config["threads"]))
    logging.info(f"otoc-dimer {__version__}: 命令 {args.command}, Θ={config['theta']}, N={config['n_particles']}")

    try:
        Orchestrator(config).run(args.command)
    except ConfigurationError as e:
        print(f"配置错误: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OtocDimerError as e:
        print(f"数值计算失败: {e}", file=sys.stderr)
        logging.info(f"错误快照目录 {ErrorLogger.log_dir()}\n{ErrorLogger.get_error_summary()}")
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.excepthook = handle_unhandled_exception
    sys.exit(main())
