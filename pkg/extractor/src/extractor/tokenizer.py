"""Text tokenizers for the dual encoder.

``BPETokenizer`` implements the byte-pair-encoding scheme of the released
RN50 model and needs its merges file (``bpe_simple_vocab_16e6.txt.gz``).
``ByteTokenizer`` is a self-contained fallback over raw UTF-8 bytes used
with randomly initialized models, where only shapes and determinism
matter. Both truncate at the context length and report it, keeping the
end-of-text token in place.
"""

from __future__ import annotations

import gzip
import html
import re
from functools import lru_cache

import torch


class ByteTokenizer:
    """UTF-8 bytes shifted by one; 0 = pad, then SOT / EOT on top."""

    def __init__(self, context_length=77):
        self.context_length = context_length
        self.sot = 257
        self.eot = 258
        self.vocab_size = 260

    def encode(self, text: str) -> list[int]:
        return [b + 1 for b in text.encode("utf-8")]

    def tokenize(self, texts, context_length=None):
        if isinstance(texts, str):
            texts = [texts]
        context_length = context_length or self.context_length
        out = torch.zeros(len(texts), context_length, dtype=torch.long)
        truncated = []
        for i, text in enumerate(texts):
            tokens = [self.sot] + self.encode(text) + [self.eot]
            if len(tokens) > context_length:
                tokens = tokens[: context_length - 1] + [self.eot]
                truncated.append(i)
            out[i, : len(tokens)] = torch.tensor(tokens)
        return out, truncated


@lru_cache()
def _bytes_to_unicode():
    bs = (list(range(ord("!"), ord("~") + 1))
          + list(range(ord("\xa1"), ord("\xac") + 1))
          + list(range(ord("\xae"), ord("\xff") + 1)))
    cs = bs[:]
    n = 0
    for b in range(256):
        if b not in bs:
            bs.append(b)
            cs.append(256 + n)
            n += 1
    return dict(zip(bs, [chr(c) for c in cs]))


def _get_pairs(word):
    return {(word[i], word[i + 1]) for i in range(len(word) - 1)}


def _basic_clean(text):
    return html.unescape(html.unescape(text)).strip()


def _whitespace_clean(text):
    return re.sub(r"\s+", " ", text).strip()


class BPETokenizer:
    """The released model's lower-cased BPE over a merges vocabulary."""

    def __init__(self, merges_path, context_length=77):
        self.context_length = context_length
        self.byte_encoder = _bytes_to_unicode()
        self.byte_decoder = {v: k for k, v in self.byte_encoder.items()}
        with gzip.open(merges_path, "rt", encoding="utf-8") as fh:
            merges = fh.read().split("\n")[1: 49152 - 256 - 2 + 1]
        merges = [tuple(m.split()) for m in merges]
        vocab = list(_bytes_to_unicode().values())
        vocab = vocab + [v + "</w>" for v in vocab]
        for merge in merges:
            vocab.append("".join(merge))
        vocab.extend(["<|startoftext|>", "<|endoftext|>"])
        self.encoder = dict(zip(vocab, range(len(vocab))))
        self.decoder = {v: k for k, v in self.encoder.items()}
        self.bpe_ranks = dict(zip(merges, range(len(merges))))
        self.cache = {"<|startoftext|>": "<|startoftext|>",
                      "<|endoftext|>": "<|endoftext|>"}
        # \w-based approximation of the reference \p{L}/\p{N} pattern;
        # equivalent for the dataset's Latin-script descriptions
        self.pat = re.compile(
            r"""<\|startoftext\|>|<\|endoftext\|>|'s|'t|'re|'ve|'m|'ll|'d"""
            r"""|[a-zA-Z]+|[0-9]|[^\sa-zA-Z0-9]+""",
            re.IGNORECASE,
        )
        self.sot = self.encoder["<|startoftext|>"]
        self.eot = self.encoder["<|endoftext|>"]
        self.vocab_size = len(self.encoder)

    def bpe(self, token):
        if token in self.cache:
            return self.cache[token]
        word = tuple(token[:-1]) + (token[-1] + "</w>",)
        pairs = _get_pairs(word)
        if not pairs:
            return token + "</w>"
        while True:
            bigram = min(pairs,
                         key=lambda p: self.bpe_ranks.get(p, float("inf")))
            if bigram not in self.bpe_ranks:
                break
            first, second = bigram
            new_word = []
            i = 0
            while i < len(word):
                try:
                    j = word.index(first, i)
                except ValueError:
                    new_word.extend(word[i:])
                    break
                new_word.extend(word[i:j])
                i = j
                if (word[i] == first and i < len(word) - 1
                        and word[i + 1] == second):
                    new_word.append(first + second)
                    i += 2
                else:
                    new_word.append(word[i])
                    i += 1
            word = tuple(new_word)
            if len(word) == 1:
                break
            pairs = _get_pairs(word)
        result = " ".join(word)
        self.cache[token] = result
        return result

    def encode(self, text: str) -> list[int]:
        tokens = []
        text = _whitespace_clean(_basic_clean(text)).lower()
        for token in re.findall(self.pat, text):
            token = "".join(self.byte_encoder[b]
                            for b in token.encode("utf-8"))
            tokens.extend(self.encoder[t] for t in self.bpe(token).split(" "))
        return tokens

    def tokenize(self, texts, context_length=None):
        if isinstance(texts, str):
            texts = [texts]
        context_length = context_length or self.context_length
        out = torch.zeros(len(texts), context_length, dtype=torch.long)
        truncated = []
        for i, text in enumerate(texts):
            tokens = [self.sot] + self.encode(text) + [self.eot]
            if len(tokens) > context_length:
                tokens = tokens[: context_length - 1] + [self.eot]
                truncated.append(i)
            out[i, : len(tokens)] = torch.tensor(tokens)
        return out, truncated
