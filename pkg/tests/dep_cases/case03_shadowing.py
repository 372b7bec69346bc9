table = {"a": 1}
offset = 10


def lookup(key):
    return table.get(key)


def target(key):
    table = {}
    table[key] = offset
    value = table.get(key)  # CURSOR
