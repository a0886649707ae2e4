# Copyright (c) 2026 Graphcore Ltd. All rights reserved.

'''
Exceptions raised by MonoPlan. Each one carries the exit code used by the
command line front end.
'''


class MonoplanError(Exception):
    '''Base class for every error MonoPlan raises on purpose.'''
    exit_code = 1


class DomainError(MonoplanError, ValueError):
    '''An input is outside the domain of the requested operation.'''
    exit_code = 1


class SizeError(DomainError):
    '''An input is too large for one of the brute-force oracles.'''


class PreconditionError(DomainError):
    '''A plan failed a structural precondition. The offending
    MonotonicityReport (if any) is kept in `report`.'''

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class NumericError(MonoplanError, ArithmeticError):
    '''An iteration did not converge or an asserted identity did not hold.'''
    exit_code = 2


class UsageError(MonoplanError):
    '''Bad command line usage.'''
    exit_code = 3


def expect(condition, message, error=DomainError):
    '''Raise `error` with `message` unless condition holds.'''
    if not condition:
        raise error(message)
