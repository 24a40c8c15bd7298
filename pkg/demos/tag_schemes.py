"""
Reading a column corpus and switching tag schemes
=================================================

Corpora come as whitespace columns with one token per line and blank
lines between sentences.  Internally everything runs on IOBES.
"""

from stackner.corpus import IOB2, IOBES, convert_scheme, extract_spans, parse_column_corpus

text = """\
-DOCSTART- -X- O O

EU NNP B-NP B-ORG
rejects VBZ B-VP O
German JJ B-NP B-MISC
call NN I-NP O
. . O O

Peter NNP B-NP B-PER
Blackburn NNP I-NP I-PER
"""

corpus = parse_column_corpus(text, token_column=0, label_column=-1)
print(len(corpus), "sentences, documents start at", corpus.doc_starts)

for sent in corpus:
    print(list(zip(sent.words, sent.labels)))

###############################################################################
# The same labels in IOBES: single-token mentions become ``S-``, the last
# token of a longer one becomes ``E-``.

iobes = corpus.to_scheme(IOBES)
print(iobes[1].labels)
print(convert_scheme(iobes[1].labels, IOBES, IOB2))

###############################################################################
# Spans are ``(class, start, end)`` with an exclusive end.  Strict decoding
# refuses malformed gold labels; lenient decoding is what the scorer uses on
# predictions.

print(extract_spans(["B-PER", "E-PER", "O", "S-LOC"], IOBES))
print(extract_spans(["O", "I-PER", "E-PER"], IOBES, strict=False))
