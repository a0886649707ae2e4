#!/usr/bin/env python3

# Copyright (c) 2026 Graphcore Ltd. All rights reserved.

'''
A command line tool and library for the geometry of monotone transport plans
over a fixed first marginal on the real line.
'''


# This wrapper emulates the one usually generated by setuptools.
from monoplan.main import main

if __name__ == "__main__":
    main()
