"""FASTA ingestion, k-mer vocabularies and tokenization."""

from __future__ import annotations

import itertools
import os
from dataclasses import dataclass
from typing import IO, Iterable, Sequence, Union

import numpy as np

BASES = "ACGT"
SUPPORTED_K = (1, 3, 6, 9)
SPECIAL_TOKENS = ("[M]", "[PAD]", "[CLS]", "[BOS]", "[EOS]", "[UNK]", "[SEP]", "[RES1]", "[RES2]")


class FastaError(ValueError):
    """Malformed FASTA input."""


class VocabError(ValueError):
    pass


class TokenizeError(ValueError):
    pass


class NucleotideSequence(str):
    """An uppercase DNA string over ``{A, C, G, T}`` of length >= 1."""

    def __new__(cls, bases: str) -> "NucleotideSequence":
        s = str(bases).upper()
        if not s:
            raise ValueError("nucleotide sequence must be non-empty")
        bad = set(s) - set(BASES)
        if bad:
            raise ValueError(f"invalid nucleotide symbol(s): {''.join(sorted(bad))}")
        return super().__new__(cls, s)


@dataclass(frozen=True, eq=False)
class TokenSequence:
    """Clean token ids produced by a k-mer vocabulary."""

    ids: np.ndarray
    k: int

    def __post_init__(self):
        object.__setattr__(self, "ids", np.asarray(self.ids, dtype=np.int64))

    def __len__(self) -> int:
        return len(self.ids)

    def __eq__(self, other) -> bool:
        return (isinstance(other, TokenSequence) and self.k == other.k
                and np.array_equal(self.ids, other.ids))

    def __repr__(self) -> str:
        return f"TokenSequence(k={self.k}, ids={self.ids.tolist()})"


class Vocabulary:
    """All ``4**k`` k-mers in lexicographic order followed by the special tokens."""

    def __init__(self, k: int):
        if k not in SUPPORTED_K:
            raise VocabError(f"unsupported k={k}; expected one of {SUPPORTED_K}")
        self.k = k
        self.n_kmers = 4 ** k
        self.tokens = ["".join(p) for p in itertools.product(BASES, repeat=k)]
        self.tokens.extend(SPECIAL_TOKENS)
        self.token_to_id = {tok: i for i, tok in enumerate(self.tokens)}
        self.special_ids = {tok: self.n_kmers + i for i, tok in enumerate(SPECIAL_TOKENS)}
        self.mask_id = self.special_ids["[M]"]
        self.pad_id = self.special_ids["[PAD]"]
        # base-4 place values for vectorised k-mer -> id
        self._place = 4 ** np.arange(k - 1, -1, -1, dtype=np.int64)

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def size(self) -> int:
        return len(self.tokens)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.tokens == other.tokens

    def __repr__(self) -> str:
        return f"Vocabulary(k={self.k}, size={self.size})"

    def is_kmer(self, idx: int) -> bool:
        return 0 <= idx < self.n_kmers

    def save(self, path: Union[str, os.PathLike], note: str = "") -> None:
        with open(path, "w") as fh:
            fh.write(self.dumps(note))

    def dumps(self, note: str = "") -> str:
        """Header ``k=<k>`` (plus an optional ``# note``), then one ``token<TAB>id`` line per entry."""
        lines = [f"k={self.k}" + (f" # {note}" if note else "")]
        lines.extend(f"{tok}\t{i}" for i, tok in enumerate(self.tokens))
        return "\n".join(lines) + "\n"

    @classmethod
    def load(cls, path: Union[str, os.PathLike]) -> "Vocabulary":
        with open(path) as fh:
            header = fh.readline().split("#", 1)[0].strip()
            if not header.startswith("k="):
                raise VocabError(f"missing 'k=' header in {path}")
            vocab = cls(int(header[2:]))
            for line_no, line in enumerate(fh, start=2):
                tok, idx = line.rstrip("\n").split("\t")
                if vocab.token_to_id.get(tok) != int(idx):
                    raise VocabError(f"{path}:{line_no}: {tok!r} -> {idx} disagrees with k={vocab.k} layout")
        return vocab


def build_vocab(k: int) -> Vocabulary:
    return Vocabulary(k)


def vocab_from_size(size: int) -> Vocabulary:
    """Recover the vocabulary whose total size is ``size``."""
    for k in SUPPORTED_K:
        if 4 ** k + len(SPECIAL_TOKENS) == size:
            return Vocabulary(k)
    raise VocabError(f"no supported k gives vocabulary size {size}")


def _read_text(source) -> str:
    if isinstance(source, (bytes, bytearray)):
        return source.decode("ascii")
    if isinstance(source, str):
        return source
    if isinstance(source, os.PathLike):
        with open(source, "rb") as fh:
            return fh.read().decode("ascii")
    data = source.read()
    return data.decode("ascii") if isinstance(data, bytes) else data


def parse_fasta(source: Union[str, bytes, IO, os.PathLike], skip_n_records: bool = False
                ) -> list[tuple[str, NucleotideSequence]]:
    """Parse FASTA text into ``(header, sequence)`` pairs in file order.

    ``source`` may be raw text/bytes, an open file or a path-like object. Lines
    starting with ``;`` are comments. Lowercase bases are uppercased. A record
    containing ``N`` raises unless ``skip_n_records`` is set, in which case the
    record is silently dropped.
    """
    text = _read_text(source)
    records: list[tuple[str, NucleotideSequence]] = []
    header = None
    header_line = 0
    chunks: list[str] = []
    has_n = False

    def close():
        if header is None:
            return
        if not chunks:
            raise FastaError(f"line {header_line}: record {header!r} has no sequence")
        if has_n and skip_n_records:
            return
        records.append((header, NucleotideSequence("".join(chunks))))

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith(";"):
            continue
        if line.startswith(">"):
            close()
            header, header_line, chunks, has_n = line[1:].strip(), line_no, [], False
            continue
        if header is None:
            raise FastaError(f"line {line_no}: sequence data before the first '>' header")
        line = "".join(line.split()).upper()
        bad = set(line) - set(BASES)
        if bad - {"N"}:
            sym = next(c for c in line if c not in BASES and c != "N")
            raise FastaError(f"line {line_no}: invalid symbol {sym!r}")
        if "N" in bad:
            if not skip_n_records:
                raise FastaError(f"line {line_no}: ambiguous base 'N' (use skip_n_records to drop such records)")
            has_n = True
        chunks.append(line)
    close()
    return records


def read_fasta(path: Union[str, os.PathLike], skip_n_records: bool = False):
    with open(path, "rb") as fh:
        return parse_fasta(fh.read(), skip_n_records=skip_n_records)


def format_fasta(records: Iterable[tuple[str, str]], comments: Sequence[str] = (), width: int = 80) -> str:
    out = [f"; {c}" for c in comments]
    for header, seq in records:
        out.append(f">{header}")
        out.extend(seq[i:i + width] for i in range(0, len(seq), width))
    return "\n".join(out) + "\n"


def tokenize(seq: str, vocab: Vocabulary) -> TokenSequence:
    """Non-overlapping k-mer tokenization; a trailing partial k-mer is dropped."""
    seq = NucleotideSequence(seq)
    k = vocab.k
    if len(seq) < k:
        raise TokenizeError(f"sequence of length {len(seq)} is shorter than k={k}")
    n = len(seq) // k
    codes = np.frombuffer(seq[: n * k].encode("ascii"), dtype=np.uint8)
    digits = np.searchsorted(np.frombuffer(BASES.encode(), dtype=np.uint8), codes).reshape(n, k)
    return TokenSequence(digits @ vocab._place, k)


def detokenize(toks: TokenSequence, vocab: Vocabulary) -> NucleotideSequence:
    ids = np.asarray(toks.ids if isinstance(toks, TokenSequence) else toks)
    bad = np.flatnonzero((ids < 0) | (ids >= vocab.n_kmers))
    if bad.size:
        pos = int(bad[0])
        raise TokenizeError(f"position {pos}: id {int(ids[pos])} is not a k-mer token")
    return NucleotideSequence("".join(vocab.tokens[i] for i in ids.tolist()))
