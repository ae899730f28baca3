import os


def data_dir():
    root = os.path.dirname(__file__)
    return os.path.join(root, "data")
