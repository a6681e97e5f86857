# Child-side runtime for evolved candidates.
#
# argv: <source path> <component id> <entry point name>
# Loads the candidate source, announces itself with a hello line, then answers
# one JSON request per stdin line with one JSON response per stdout line.
import json
import math
import sys
import traceback


def norm_pdf(z):
    return math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)


def norm_cdf(z):
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def emit(obj):
    sys.stdout.write(json.dumps(obj) + "\n")
    sys.stdout.flush()


def main():
    source_path, component, entry_name = sys.argv[1], sys.argv[2], sys.argv[3]
    namespace = {
        "__name__": "candidate",
        "math": math,
        "norm_pdf": norm_pdf,
        "norm_cdf": norm_cdf,
    }
    try:
        with open(source_path, "r", encoding="utf-8") as fh:
            code = compile(fh.read(), "candidate.py", "exec")
        exec(code, namespace)
    except BaseException:
        traceback.print_exc()
        sys.exit(3)
    entry = namespace.get(entry_name)
    if not callable(entry):
        sys.stderr.write("candidate does not define callable '%s'\n" % entry_name)
        sys.exit(3)

    emit({"op": "hello", "component": component})

    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        request = json.loads(line)
        op = request.pop("op", None)
        if op == "bye":
            sys.exit(0)
        if op == "learning_rate":
            emit({"learning_rate": float(entry(**request))})
        elif op == "steps":
            emit({"steps": entry(**request)})
        elif op == "utility":
            points = request.pop("points")
            mu = [p["mu"] for p in points]
            sigma = [p["sigma"] for p in points]
            values = entry(mu=mu, sigma=sigma, **request)
            emit({"utility": [float(v) for v in values]})
        else:
            sys.stderr.write("unknown op %r\n" % (op,))
            sys.exit(4)


if __name__ == "__main__":
    main()
