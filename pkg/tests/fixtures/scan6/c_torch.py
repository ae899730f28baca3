import torch


def old(A, B):
    A = torch.as_tensor(A)
    return torch.lstsq(B, A)
