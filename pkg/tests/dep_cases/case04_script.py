import sys

WIDTH = 80


def fmt(line):
    return line[:WIDTH]


def emit(line):
    sys.stdout.write(fmt(line) + "\n")


rows = ["a", "b"]
# CURSOR
