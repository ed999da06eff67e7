# Compiled bit-vector primitives. Semantics must match _pure.py exactly;
# the test suite cross-checks the two backends on random inputs.

BACKEND = "compiled"


def bor(bytes a, bytes b):
    cdef Py_ssize_t n = len(a)
    if len(b) != n:
        raise ValueError("width mismatch")
    cdef const unsigned char *pa = a
    cdef const unsigned char *pb = b
    out = bytearray(n)
    cdef unsigned char *po = out
    cdef Py_ssize_t i
    for i in range(n):
        po[i] = pa[i] | pb[i]
    return bytes(out)


def or_many(vectors, Py_ssize_t width_bytes):
    out = bytearray(width_bytes)
    cdef unsigned char *po = out
    cdef const unsigned char *pv
    cdef Py_ssize_t i
    for v in vectors:
        if len(v) != width_bytes:
            raise ValueError("width mismatch")
        pv = v
        for i in range(width_bytes):
            po[i] |= pv[i]
    return bytes(out)


def is_subset(bytes sub, bytes sup):
    cdef Py_ssize_t n = len(sub)
    if len(sup) != n:
        raise ValueError("width mismatch")
    cdef const unsigned char *pa = sub
    cdef const unsigned char *pb = sup
    cdef Py_ssize_t i
    for i in range(n):
        if pa[i] & ~pb[i]:
            return False
    return True


def popcount(bytes a):
    cdef const unsigned char *pa = a
    cdef Py_ssize_t i
    cdef unsigned int acc = 0
    cdef unsigned char v
    for i in range(len(a)):
        v = pa[i]
        while v:
            v &= v - 1
            acc += 1
    return acc


def select_covered(bytes fid, bytes packed, Py_ssize_t n, Py_ssize_t width_bytes):
    if len(packed) != n * width_bytes:
        raise ValueError("packed buffer size mismatch")
    if len(fid) != width_bytes:
        raise ValueError("width mismatch")
    cdef const unsigned char *pf = fid
    cdef const unsigned char *pp = packed
    cdef Py_ssize_t i, j, base
    cdef bint ok
    out = []
    for i in range(n):
        base = i * width_bytes
        ok = True
        for j in range(width_bytes):
            if pp[base + j] & ~pf[j]:
                ok = False
                break
        if ok:
            out.append(i)
    return out


def count_covered(bytes fid, bytes packed, Py_ssize_t n, Py_ssize_t width_bytes):
    if len(packed) != n * width_bytes:
        raise ValueError("packed buffer size mismatch")
    if len(fid) != width_bytes:
        raise ValueError("width mismatch")
    cdef const unsigned char *pf = fid
    cdef const unsigned char *pp = packed
    cdef Py_ssize_t i, j, base
    cdef Py_ssize_t hits = 0
    cdef bint ok
    for i in range(n):
        base = i * width_bytes
        ok = True
        for j in range(width_bytes):
            if pp[base + j] & ~pf[j]:
                ok = False
                break
        if ok:
            hits += 1
    return hits
