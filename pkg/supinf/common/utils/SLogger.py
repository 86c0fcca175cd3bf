import os
import appdirs
import logging
from logging.handlers import RotatingFileHandler
import multiprocessing


def get_process_logger(process_name=None):
    
    if process_name is None:
        process_name = f"{multiprocessing.current_process().name}_{os.getpid()}"
    
    logFormat = (
        '%(asctime)s.%(msecs)03d|'
        '%(levelname)s|'
        '%(thread)d|'
        '%(threadName)s|'
        '%(name)s|'
        '%(filename)s:%(lineno)d|'
        '%(funcName)s|'
        '%(message)s'
    )
    
    logger = logging.getLogger(f'supinf.{process_name}')
    if logger.handlers:
        return logger
    
    logger.setLevel(logging.INFO)
    formatter = logging.Formatter(logFormat)
    
    # Read-only home directories still get console logging.
    try:
        logDir = os.path.join(appdirs.user_log_dir("supinf"), "logs")
        os.makedirs(logDir, exist_ok=True)
        fileHandler = RotatingFileHandler(os.path.join(logDir, f"supinf_{process_name}.log"),
                                          maxBytes=10*1024*1024,
                                          backupCount=5)
        fileHandler.setLevel(logging.DEBUG)
        fileHandler.setFormatter(formatter)
        logger.addHandler(fileHandler)
    except OSError:
        pass
    
    consoleHandler = logging.StreamHandler()
    consoleHandler.setLevel(logging.DEBUG)
    consoleHandler.setFormatter(formatter)
    logger.addHandler(consoleHandler)
    
    logger.propagate = False
    return logger


logger = get_process_logger("main")


def set_log_level(level: str):
    for name, item in logging.root.manager.loggerDict.items():
        if name.startswith("supinf") and isinstance(item, logging.Logger):
            item.setLevel(level)
    return
