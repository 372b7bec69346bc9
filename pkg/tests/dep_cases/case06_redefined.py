mode = "fast"
mode = "safe"
retries = 3


def backoff(step):
    return step * retries


def target(step):
    wait = backoff(step)
    label = mode  # CURSOR
