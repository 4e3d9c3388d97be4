#!/usr/bin/env python3
"""
Simple launcher for trilayer_magic experiments
Run this from the repository root: python3 run_experiment.py <command> [options]
Without arguments the magic-parameter discovery runs on data/sample_runs/equal_angles.conf
"""
import sys
import os

# Add current directory to path
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from trilayer_magic.main import start

DEFAULT_ARGS = ["magic", "--config", os.path.join(os.path.dirname(os.path.abspath(__file__)), "data", "sample_runs", "equal_angles.conf")]

if __name__ == "__main__":
    print("Outputs go to $TRILAYER_OUTPUT_DIR (default ./runs)")
    print("Press Ctrl+C to stop")
    sys.exit(start(sys.argv[1:] or DEFAULT_ARGS))
