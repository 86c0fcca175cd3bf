from functools import wraps

from supinf.common.utils.SLogger import logger
from supinf.common.SExceptions import SExceptionNotReadyForOperation


def atomic_transition(trigger: str):
    """Guard a state-machine method: it runs under `methodLock`, only from a state that allows
    `trigger`, and the trigger fires after the method returns. The model needs `machine` and `methodLock`."""
    def decorator(func):
        @wraps(func)
        def wrapper(self, *args, **kwargs):
            with self.methodLock:
                source = self.state
                if trigger not in self.machine.get_triggers(source):
                    raise SExceptionNotReadyForOperation(f"'{func.__name__}' needs trigger '{trigger}', which state '{source}' does not allow.")
                ret = func(self, *args, **kwargs)
                getattr(self, trigger)()
                if source != self.state:
                    logger.debug(f"{type(self).__name__}: {source} -> {self.state} ({trigger})")
                return ret
        return wrapper
    return decorator
