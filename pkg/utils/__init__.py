from . import file_utils
from . import config_manager
from . import error_logger
from . import logger_setup
from . import multithreading_utils
