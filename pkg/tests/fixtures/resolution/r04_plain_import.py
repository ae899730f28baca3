import numpy
import torch.linalg


def norms(x, A, B):
    total = numpy.sum(x)  # expect: numpy.sum
    sol = torch.linalg.lstsq(A, B)  # expect: torch.linalg.lstsq
    return total, sol
