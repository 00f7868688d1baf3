#!/usr/bin/env python3
"""Tool that evaluates integer arithmetic expressions exactly.

The expression is parsed by a hand-written recursive-descent parser and
evaluated with rational arithmetic, so results are exact and no host
language evaluation ever touches the input. Grammar:

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := "-" unary | atom
    atom   := integer | "(" expr ")"

Results render as an integer when whole, as a terminating decimal when the
denominator allows one, and as an exact fraction otherwise.
"""
import json
import sys
from fractions import Fraction

MANIFEST = {
    "id": "calculator",
    "kind": "tool",
    "name": "Calculator",
    "version": "1.0.0",
    "description": "Evaluates arithmetic over integers with + - * / and parentheses, exactly.",
    "author": "reference plugin pack",
    "tool_specs": [{
        "callable_name": "calculate",
        "description": "Evaluate an arithmetic expression over integers using + - * / and parentheses; returns the exact value as a decimal or fraction string.",
        "parameters": [
            {"name": "expression", "type": "string", "required": True,
             "description": "The expression to evaluate, e.g. (3*4)-5."},
        ],
    }],
}


class ParseError(ValueError):
    pass


class DivisionByZero(ValueError):
    pass


def tokenize(text):
    tokens = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch in " \t":
            i += 1
        elif ch.isdigit():
            j = i
            while j < len(text) and text[j].isdigit():
                j += 1
            tokens.append(("int", text[i:j]))
            i = j
        elif ch in "+-*/()":
            tokens.append((ch, ch))
            i += 1
        else:
            raise ParseError("unexpected character %r at position %d" % (ch, i))
    return tokens


class Parser:
    def __init__(self, tokens):
        self.tokens = tokens
        self.pos = 0

    def peek(self):
        if self.pos < len(self.tokens):
            return self.tokens[self.pos][0]
        return None

    def take(self, kind=None):
        if self.pos >= len(self.tokens):
            raise ParseError("unexpected end of expression")
        token = self.tokens[self.pos]
        if kind is not None and token[0] != kind:
            raise ParseError("expected %s, found %r" % (kind, token[1]))
        self.pos += 1
        return token

    def expression(self):
        value = self.term()
        while self.peek() in ("+", "-"):
            if self.take()[0] == "+":
                value = value + self.term()
            else:
                value = value - self.term()
        return value

    def term(self):
        value = self.unary()
        while self.peek() in ("*", "/"):
            if self.take()[0] == "*":
                value = value * self.unary()
            else:
                divisor = self.unary()
                if divisor == 0:
                    raise DivisionByZero("division by zero")
                value = value / divisor
        return value

    def unary(self):
        if self.peek() == "-":
            self.take()
            return -self.unary()
        return self.atom()

    def atom(self):
        if self.peek() == "(":
            self.take()
            value = self.expression()
            self.take(")")
            return value
        return Fraction(int(self.take("int")[1]))


def evaluate(expression):
    if not isinstance(expression, str) or not expression.strip():
        raise ParseError("expression must be a nonempty string")
    parser = Parser(tokenize(expression))
    value = parser.expression()
    if parser.pos != len(parser.tokens):
        raise ParseError("trailing input: %r" % (parser.tokens[parser.pos][1],))
    return value


def render(value):
    if value.denominator == 1:
        return str(value.numerator)
    reduced = value.denominator
    for prime in (2, 5):
        while reduced % prime == 0:
            reduced //= prime
    if reduced != 1:
        # no terminating decimal exists; keep the exact fraction
        return "%d/%d" % (value.numerator, value.denominator)
    digits = 0
    scaled = value
    while scaled.denominator != 1:
        scaled *= 10
        digits += 1
    body = str(abs(scaled.numerator)).rjust(digits + 1, "0")
    sign = "-" if value < 0 else ""
    return sign + body[:-digits] + "." + body[-digits:]


def run(callable_name, arguments):
    if callable_name != "calculate":
        raise ValueError("unknown callable %r" % (callable_name,))
    return render(evaluate(arguments.get("expression")))


def reply(doc):
    sys.stdout.write(json.dumps(doc) + "\n")
    sys.stdout.flush()


def serve():
    for line in sys.stdin:
        if not line.strip():
            continue
        try:
            request = json.loads(line)
        except ValueError:
            continue
        call_id = request.get("call_id")
        op = request.get("op")
        if op == "describe":
            reply({"op": "manifest", "call_id": call_id, "manifest": MANIFEST})
        elif op == "invoke":
            payload = request.get("payload") or {}
            try:
                value = run(request.get("callable"),
                            payload.get("arguments") or {})
            except Exception as exc:
                # the exception class is the error name on the wire
                reply({"op": "error", "call_id": call_id,
                       "message": "%s: %s" % (type(exc).__name__, exc)})
            else:
                reply({"op": "result", "call_id": call_id, "value": value})
        else:
            reply({"op": "error", "call_id": call_id,
                   "message": "unsupported op %r" % (op,)})


if __name__ == "__main__":
    serve()
