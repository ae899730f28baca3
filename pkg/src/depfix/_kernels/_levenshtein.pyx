# cython: language_level=3, boundscheck=False, wraparound=False
from libc.stdlib cimport malloc, free


def levenshtein(str a, str b):
    """Character-level edit distance with unit insert/delete/substitute costs."""
    if a == b:
        return 0
    if len(a) < len(b):
        a, b = b, a
    cdef Py_ssize_t n = len(a), m = len(b), i, j
    if m == 0:
        return n
    cdef Py_UCS4 *ua = <Py_UCS4 *> malloc(n * sizeof(Py_UCS4))
    cdef Py_UCS4 *ub = <Py_UCS4 *> malloc(m * sizeof(Py_UCS4))
    cdef Py_ssize_t *row = <Py_ssize_t *> malloc((m + 1) * sizeof(Py_ssize_t))
    if ua == NULL or ub == NULL or row == NULL:
        free(ua); free(ub); free(row)
        raise MemoryError()
    cdef Py_ssize_t diag, up, best
    try:
        for i in range(n):
            ua[i] = a[i]
        for j in range(m):
            ub[j] = b[j]
        for j in range(m + 1):
            row[j] = j
        for i in range(1, n + 1):
            diag = row[0]
            row[0] = i
            for j in range(1, m + 1):
                up = row[j]
                best = diag + (ua[i - 1] != ub[j - 1])
                if up + 1 < best:
                    best = up + 1
                if row[j - 1] + 1 < best:
                    best = row[j - 1] + 1
                row[j] = best
                diag = up
        return row[m]
    finally:
        free(ua)
        free(ub)
        free(row)
