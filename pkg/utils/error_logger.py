from __future__ import annotations
import logging
import traceback
from datetime import datetime, timedelta
from pathlib import Path
from typing import Any

MAX_LOG_DAYS = 10

_log_dir: Path = Path("output") / "logs" / "errors"


class ErrorLogger:
    @staticmethod
    def set_log_dir(path: Path | str):
        global _log_dir
        _log_dir = Path(path)

    @staticmethod
    def log_dir() -> Path:
        return _log_dir

    @staticmethod
    def _clean_old_logs():
        if not _log_dir.exists():
            return
        cutoff_date = datetime.now() - timedelta(days=MAX_LOG_DAYS)
        for log_file in _log_dir.iterdir():
            if log_file.is_file() and datetime.fromtimestamp(log_file.stat().st_mtime) < cutoff_date:
                try:
                    log_file.unlink()
                    logging.debug(f"已清理旧日志文件: {log_file}")
                except OSError as e:
                    logging.warning(f"清理旧日志文件失败: {log_file} - {e}")

    @staticmethod
    def log_general_error(error_title: str, error_message: str, exception: BaseException | None = None,
                          context: dict[str, Any] | None = None, error_level: str = "ERROR") -> Path | None:
        try:
            _log_dir.mkdir(parents=True, exist_ok=True)
            ErrorLogger._clean_old_logs()
            timestamp = datetime.now().strftime("%Y%m%d_%H%M%S_%f")
            log_file_path = _log_dir / f"error_{error_level.lower()}_{timestamp}.log"

            log_content = [
                "# 错误快照",
                f"# 时间戳: {datetime.now().isoformat()}",
                f"# 错误级别: {error_level}",
                f"# 错误标题: {error_title}",
                "# --------------------------------------------------",
                "### 错误信息 ###",
                "# --------------------------------------------------",
                f"{error_message}",
            ]

            if exception is not None:
                tb_text = ''.join(traceback.format_exception(type(exception), exception, exception.__traceback__))
                log_content.extend([
                    "# --------------------------------------------------",
                    "### 异常详情 ###",
                    "# --------------------------------------------------",
                    f"Type: {type(exception).__name__}",
                    f"Code: {getattr(exception, 'error_code', '')}",
                    f"Message: {exception}",
                    "# --------------------------------------------------",
                    "### 调用栈 ###",
                    "# --------------------------------------------------",
                    tb_text,
                ])

            if context:
                log_content.extend([
                    "# --------------------------------------------------",
                    "### 上下文信息 ###",
                    "# --------------------------------------------------",
                ])
                for key, value in context.items():
                    log_content.append(f"{key}: {value}")

            log_file_path.write_text('\n'.join(log_content), encoding='utf-8')

            log_func = getattr(logging, error_level.lower(), logging.error)
            log_func(f"{error_title}: {error_message} (详细日志已保存到: {log_file_path.name})")
            return log_file_path
        except Exception as e:
            logging.error(f"写入错误快照时发生异常: {e}")
            return None

    @staticmethod
    def get_error_summary(limit: int = 5) -> str:
        if not _log_dir.exists():
            return "错误快照数量: 0"
        logs = sorted(_log_dir.glob("error_*.log"), reverse=True)
        summary = [f"错误快照数量: {len(logs)}"]
        if logs:
            summary.append("最近的错误快照:")
            summary.extend(f"  - {log.name}" for log in logs[:limit])
        return '\n'.join(summary)
