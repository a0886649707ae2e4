# Copyright (c) 2026 Graphcore Ltd. All rights reserved.

'''
Provides the CSV columns of experiment and witness output.
'''

from enum import Enum


def _number(value):
    '''Shortest round-trip text of a float, empty for missing values.'''
    return "" if value is None else repr(float(value))


def _flag(value):
    return "" if value is None else str(bool(value)).lower()


def row_to_string(row, delimiter=','):
    '''Returns the row as a string according to fields in Field.'''
    return delimiter.join([f.as_string(row) for f in Field])


def header(delimiter=','):
    return delimiter.join([f.column_name for f in Field])


def rows_to_csv(rows, delimiter=','):
    '''Header plus one line per row, LF terminated.'''
    return "".join(line + "\n" for line in [header(delimiter)] +
                   [row_to_string(row, delimiter) for row in rows])


class Field(Enum):
    '''List of columns in order starting from A.
    Format used: ENTRY = "<Column name>", <function to get associated value>"'''

    N = "n", lambda row: str(int(row.n))
    TAU_N = "tau_n", lambda row: _number(row.tau_n)
    WRHO_TO_TARGET = "wrho_to_target", lambda row: _number(row.wrho_to_target)
    MONOTONE_OK = "monotone_ok", lambda row: _flag(row.monotone_ok)

    def __new__(cls, *_args, **_kwds):
        value = len(cls.__members__) + 1
        obj = object.__new__(cls)
        obj._value_ = value
        return obj

    def __init__(self, name, value_function):
        self.column_name = name
        self.column_letter = chr(self.value + ord('A') - 1)
        self.value_function = value_function

    def as_string(self, row):
        '''Get this field as a string.'''
        return self.value_function(row)
