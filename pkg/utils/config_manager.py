from __future__ import annotations
import copy
import json
import logging
import math
from pathlib import Path

from packaging.version import parse as parse_version

from core.exceptions import ConfigurationError
from utils.file_utils import load_json

CONFIG_VERSION = "1.1"

DEFAULT_CONFIG = {
    "config_version": CONFIG_VERSION,
    "theta": 1.35,
    "n_particles": 1000,
    "epsilon0": 1.0,
    "omega": 1.0,
    "backend": "auto",
    "seed": 20240601,
    "output_dir": "output",
    "log_level": "INFO",
    "log_retention_days": 10,
    "max_log_count": 30,
    "threads": 0,
    "plot_script": False,
    "stability_scan": {
        "theta_min": -math.pi / 2,
        "theta_max": math.pi / 2,
        "points": 721,
        "extra_thetas": [1.35, math.atan(2.0)],
    },
    "phase_portrait": {
        "nz": 201,
        "nphi": 201,
        "separatrix_samples": 400,
        "trajectory_t_final": 20.0,
        "trajectory_start": [0.05, 0.0],
        "tol": 1e-10,
    },
    "otoc": {
        "time_points": 400,
        "span_factor": 1.5,
        "t_final": None,
        "squeeze_fraction": 0.0,
        "operator": "n1",
        "fit_shrink": 0.5,
        "n_list": [],
    },
    "husimi": {
        "nz": 201,
        "nphi": 201,
        "frames": 41,
        "t_final_factor": 1.0,
        "format": "csv",
        "squeeze_fraction": 0.0,
    },
    "scan": {
        "theta_min": 1.13,
        "theta_max": 1.55,
        "theta_points": 12,
        "n_list": [100, 1000],
        "time_points": 400,
        "fit_shrink": 0.5,
    },
    "twa": {
        "samples": 10000,
        "time_points": 20,
        "tol": 1e-8,
    },
}

VALID_BACKENDS = ("auto", "eigendecomposition", "chebyshev")
VALID_LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")
VALID_OPERATORS = ("n1", "n_half")
VALID_FRAME_FORMATS = ("csv", "binary")


def _migrate_config(config: dict) -> tuple[dict, bool]:
    config_updated = False
    version = str(config.get("config_version", "1.0"))

    if parse_version(version) < parse_version("1.1"):
        if "N" in config and "n_particles" not in config:
            logging.warning("检测到旧版配置键 'N'，已迁移为 'n_particles'")
            config["n_particles"] = config.pop("N")
        otoc_section = config.get("otoc", {})
        if "squeeze_t0" in otoc_section:
            # 旧版以 τE 为单位的负时间记录压缩
            old = otoc_section.pop("squeeze_t0")
            otoc_section["squeeze_fraction"] = abs(float(old)) if old else 0.0
            logging.warning("检测到旧版 'otoc.squeeze_t0'，已迁移为 'otoc.squeeze_fraction'")
        config["config_version"] = CONFIG_VERSION
        config_updated = True

    for key, value in DEFAULT_CONFIG.items():
        if key not in config:
            logging.debug(f"配置中缺少 '{key}' 项目，将使用默认值进行补充。")
            config[key] = copy.deepcopy(value)
            config_updated = True
        elif isinstance(value, dict):
            for sub_key, sub_value in value.items():
                if sub_key not in config[key]:
                    logging.debug(f"配置中缺少 '{key}.{sub_key}'，使用默认值 {sub_value!r}")
                    config[key][sub_key] = copy.deepcopy(sub_value)
                    config_updated = True

    return config, config_updated


def load_config(path: Path | str | None = None) -> dict:
    if path is None:
        return copy.deepcopy(DEFAULT_CONFIG)
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"配置文件不存在: {path}", "CONFIG_MISSING")
    config = load_json(path)
    if not isinstance(config, dict):
        raise ConfigurationError(f"配置文件无法解析为 JSON 对象: {path}", "CONFIG_PARSE")
    config, updated = _migrate_config(config)
    if updated:
        logging.info(f"配置 {path.name} 已补全/迁移到版本 {CONFIG_VERSION}")
    return config


def _coerce(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_overrides(config: dict, overrides: dict[str, object]) -> dict:
    """按 'section.key' 路径覆盖配置值；字符串值按 JSON 解析。"""
    config = copy.deepcopy(config)
    for dotted, value in overrides.items():
        if value is None:
            continue
        if isinstance(value, str):
            value = _coerce(value)
        parts = dotted.split(".")
        target = config
        for part in parts[:-1]:
            if not isinstance(target.get(part), dict):
                raise ConfigurationError(f"未知的配置节: {dotted}", "CONFIG_KEY")
            target = target[part]
        if parts[-1] not in target:
            raise ConfigurationError(f"未知的配置项: {dotted}", "CONFIG_KEY")
        target[parts[-1]] = value
    return config


def parse_assignments(assignments: list[str] | None) -> dict[str, str]:
    out = {}
    for item in assignments or []:
        if "=" not in item:
            raise ConfigurationError(f"--set 参数必须形如 key=value: {item!r}", "CONFIG_SET")
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def validate_config(config: dict) -> dict:
    def fail(message: str):
        raise ConfigurationError(message, "CONFIG_INVALID")

    try:
        theta = float(config["theta"])
        n_particles = config["n_particles"]
        omega = float(config["omega"])
        epsilon0 = float(config["epsilon0"])
    except (KeyError, TypeError, ValueError) as e:
        fail(f"基础参数缺失或类型错误: {e}")

    if not -math.pi / 2 <= theta <= math.pi / 2:
        fail(f"theta 必须位于 [−π/2, π/2]: {theta}")
    if not isinstance(n_particles, int) or n_particles < 1:
        fail(f"n_particles 必须为正整数: {n_particles!r}")
    if not omega > 0:
        fail(f"omega 必须为正: {omega}")
    if not epsilon0 > 0:
        fail(f"epsilon0 必须为正: {epsilon0}")
    if config["backend"] not in VALID_BACKENDS:
        fail(f"backend 必须是 {VALID_BACKENDS} 之一: {config['backend']!r}")
    if str(config["log_level"]).upper() not in VALID_LOG_LEVELS:
        fail(f"log_level 无效: {config['log_level']!r}")
    if config["otoc"]["operator"] not in VALID_OPERATORS:
        fail(f"otoc.operator 必须是 {VALID_OPERATORS} 之一")
    if config["husimi"]["format"] not in VALID_FRAME_FORMATS:
        fail(f"husimi.format 必须是 {VALID_FRAME_FORMATS} 之一")
    if int(config["otoc"]["time_points"]) < 2 or int(config["husimi"]["frames"]) < 1:
        fail("时间点/帧数过少")
    if int(config["twa"]["samples"]) < 2:
        fail("twa.samples 至少为 2")
    if not isinstance(config.get("seed"), int):
        fail(f"seed 必须为整数: {config.get('seed')!r}")
    return config


def resolved_backend(config: dict) -> str | None:
    return None if config["backend"] == "auto" else config["backend"]
