import torch


def oops(A, B:
    return torch.lstsq(B, A)
