"""Convert a libsvm BRISQUE model plus its feature ranges into the binary model format.

Usage: convert_brisque_model.py svm.txt normalize.pickle out.bin

Layout (little-endian):
    b"BRSQ", u32 version (1), u32 n_features, u32 n_sv, f64 gamma, f64 rho,
    n_features x (f64 min, f64 max),
    n_sv x (f64 coef, n_features x f64 support vector)
"""
import pickle
import struct
import sys


def main(svm_path, ranges_path, out_path):
    header, svs = {}, []
    with open(svm_path) as f:
        lines = f.read().splitlines()
    body = lines.index("SV")
    for line in lines[:body]:
        key, *vals = line.split()
        header[key] = vals
    assert header["svm_type"] == ["epsilon_svr"] and header["kernel_type"] == ["rbf"]
    with open(ranges_path, "rb") as f:
        ranges = pickle.load(f)
    n_feat = len(ranges["min_"])
    for line in lines[body + 1:]:
        if not line.strip():
            continue
        coef, *pairs = line.split()
        sv = [0.0] * n_feat
        for p in pairs:
            i, v = p.split(":")
            sv[int(i) - 1] = float(v)
        svs.append((float(coef), sv))
    assert len(svs) == int(header["total_sv"][0])
    with open(out_path, "wb") as f:
        f.write(b"BRSQ")
        f.write(struct.pack("<III", 1, n_feat, len(svs)))
        f.write(struct.pack("<dd", float(header["gamma"][0]), float(header["rho"][0])))
        for lo, hi in zip(ranges["min_"], ranges["max_"]):
            f.write(struct.pack("<dd", lo, hi))
        for coef, sv in svs:
            f.write(struct.pack("<d", coef))
            f.write(struct.pack("<%dd" % n_feat, *sv))


if __name__ == "__main__":
    main(*sys.argv[1:4])
