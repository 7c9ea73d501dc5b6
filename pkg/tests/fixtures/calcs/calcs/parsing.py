"""Expression tokenizing; holds a Parser class duplicated in textutil."""

from __future__ import annotations

TOKENS = ("+", "-", "*", "/")


class Parser:
    """Numeric expression parser (duplicate bare name: see textutil.Parser)."""

    def __init__(self, text: str):
        self.text = text

    def tokens(self) -> list[str]:
        out: list[str] = []
        buffer = ""
        for ch in self.text:
            if ch in TOKENS:
                if buffer:
                    out.append(buffer)
                    buffer = ""
                out.append(ch)
            elif not ch.isspace():
                buffer += ch
        if buffer:
            out.append(buffer)
        return out

    def evaluate(self) -> float:
        toks = self.tokens()
        result = float(toks[0])
        i = 1
        while i < len(toks) - 1:
            op, rhs = toks[i], float(toks[i + 1])
            if op == "+":
                result += rhs
            elif op == "-":
                result -= rhs
            elif op == "*":
                result *= rhs
            else:
                result /= rhs
            i += 2
        return result
