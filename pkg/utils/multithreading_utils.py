from __future__ import annotations
import concurrent.futures
import logging
import os
import threading
from typing import Any, Callable

from core.constants import DEFAULT_MAX_WORKERS, THREADS_ENV_VAR

_configured_workers: int | None = None


def configure_max_workers(workers: int | None):
    global _configured_workers
    _configured_workers = workers if workers and workers > 0 else None


def resolve_max_workers() -> int:
    env_value = os.environ.get(THREADS_ENV_VAR, "").strip()
    if env_value:
        try:
            value = int(env_value)
            if value > 0:
                return value
        except ValueError:
            logging.warning(f"环境变量 {THREADS_ENV_VAR} 不是整数，忽略: {env_value!r}")
    if _configured_workers:
        return _configured_workers
    return min(DEFAULT_MAX_WORKERS, os.cpu_count() or 1)


def process_items_with_threads(
    items: list[Any],
    process_func: Callable[[Any], Any],
    max_workers: int = DEFAULT_MAX_WORKERS,
    progress_callback: Callable[[int, int], None] | None = None,
    description: str = "处理项目"
) -> list[Any]:
    """并行处理，结果按输入顺序返回；失败项为 None。"""
    if not items:
        logging.info(f"{description}: 无项目需要处理")
        return []

    total_items = len(items)
    processed_count = 0
    processed_count_lock = threading.Lock()
    results: list[Any] = [None] * total_items

    logging.debug(f"{description}: 开始处理 {total_items} 个项目，使用最大线程数: {max_workers}")

    def wrapped_process_func(index: int):
        nonlocal processed_count
        try:
            results[index] = process_func(items[index])
        except Exception as e:
            logging.error(f"{description}: 处理第 {index} 项时发生错误: {e}")
        with processed_count_lock:
            processed_count += 1
            if progress_callback:
                progress_callback(processed_count, total_items)
            if processed_count % 50 == 0 or processed_count == total_items:
                logging.debug(f"{description}: 已处理 {processed_count}/{total_items} 个项目")

    if max_workers <= 1 or total_items == 1:
        for index in range(total_items):
            wrapped_process_func(index)
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=max_workers) as executor:
            futures = [executor.submit(wrapped_process_func, i) for i in range(total_items)]
            for future in concurrent.futures.as_completed(futures):
                try:
                    future.result()
                except Exception as e:
                    logging.error(f"{description}: 任务执行失败: {e}")

    logging.debug(f"{description}: 处理完成")
    return results
