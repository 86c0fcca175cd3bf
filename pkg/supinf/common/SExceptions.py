
class SExceptionInvalidMesh(Exception):
    pass

class SExceptionShapeMismatch(Exception):
    pass

class SExceptionInvalidField(Exception):
    pass

class SExceptionInvalidExponent(Exception):
    pass

class SExceptionNegativeDensity(Exception):
    pass

class SExceptionInvalidTensor(Exception):
    pass

class SExceptionKindMismatch(Exception):
    pass

class SExceptionInvalidConstraint(Exception):
    pass

class SExceptionInfeasible(Exception):
    pass

class SExceptionVanishingMultipliers(Exception):
    pass

class SExceptionConfig(Exception):
    def __init__(self, errors: list):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))

class SExceptionNotReadyForOperation(Exception):
    pass
