"""Show the matcher undoing a wrong guess.

Both loads in this dot product use the same index, so the first operand
tried for b[i] is the one already taken by a[i]; the product check fails
and the search backs up to try the other load.

    python3 demos/backtracking.py
"""

from lilac.datasets import corpus_path, corpus_text
from lilac.ir import parse_ir
from lilac.lilacfile import parse_lilac
from lilac.matcher import detect

spec = parse_lilac(corpus_path("spec.lilac").read_text())
dot = next(w for w in spec.whats if w.name == "dotproduct")
(match,) = detect(parse_ir(corpus_text("backtrack.lir")), dot)

print(match.trace.format())
print()
print("final assignment:")
for node, value in match.trace.replay().items():
    print(f"  {node:20} {value}")
