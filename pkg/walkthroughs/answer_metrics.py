r"""
Scoring verbose answers
=======================

Stemmed token overlap rewards short answers: the same correct phrase
buried in a full sentence keeps recall at 1 but loses precision.
"""

from ragqa.evaluation import exact_match, normalize_tokens, precision_recall_f1

reference = "The Drug Enforcement Administration"
short = "the drug enforcement administration"
verbose = "The Drug Enforcement Administration has joined the investigation into Jackson's death."

print(normalize_tokens(verbose))

for answer in (short, verbose):
    p, r, f1, _ = precision_recall_f1(answer, [reference])
    print(f"EM={exact_match(answer, [reference])} P={p:.3f} R={r:.3f} F1={f1:.3f}  {answer!r}")
