#!/usr/bin/env python

import os
import sys

sys.path.insert(0, os.path.dirname(os.path.realpath(__file__)))

from beamlab.cli import main  # noqa: E402

if __name__ == '__main__':
    sys.exit(main(script=os.path.basename(sys.argv[0])))
