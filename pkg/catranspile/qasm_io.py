"""
Reading and writing circuits in a small OpenQASM 2 dialect.

The accepted grammar, in EBNF::

    program    = [ header ] , { statement } ;
    header     = "OPENQASM" , number , ";" ;
    statement  = qreg | creg | measure | barrier | reset | gate ;
    qreg       = "qreg" , ident , "[" , int , "]" , ";" ;
    creg       = "creg" , ident , "[" , int , "]" , ";" ;
    measure    = "measure" , arg , "->" , arg , ";" ;
    barrier    = "barrier" , arg , { "," , arg } , ";" ;
    reset      = "reset" , arg , ";" ;
    gate       = gatename , [ "(" , expr , ")" ] , arg , { "," , arg } , ";" ;
    gatename   = "x" | "sx" | "h" | "rx" | "ry" | "rz" | "cx" | "swap" ;
    arg        = ident , [ "[" , int , "]" ] ;
    expr       = term , { ( "+" | "-" ) , term } ;
    term       = factor , { ( "*" | "/" ) , factor } ;
    factor     = { "+" | "-" } , ( number | "pi" | ident | "(" , expr , ")" ) ;

Bare identifiers inside ``expr`` are free parameter symbols; the expression must stay linear in
them. A bare register argument is only accepted by ``barrier`` and ``measure``, which broadcast
over the whole register. ``//`` starts a comment. Comment pragmas carry circuit metadata:
``// @name <name>``, ``// @labels <q0>,<q1>,...`` (the physical qubit behind each wire) and
``// @symbols <ident>=<name>,...`` (the non-ASCII symbol an identifier stands for).
"""

import dataclasses
import math
import pathlib
import re
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import pyparsing as pp

from . import errors
from .circuit_ir import Circuit, Gate, GateKind, ParameterExpr, check_symbol, validate

_GATE_NAMES = {
    kind.value: kind
    for kind in GateKind
    if kind not in (GateKind.MEASURE, GateKind.BARRIER, GateKind.RESET)
}

MAX_REGISTER_SIZE = 4096

_PRAGMA_RE = re.compile(
    r"^[ \t]*//[ \t]*@(name|labels|symbols)[ \t]+(.*?)[ \t]*$", re.MULTILINE
)
_ASCII_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")

# Transliterations of Greek letters, which are common parameter names
_GREEK = {
    chr(0x3B1 + i): name
    for i, name in enumerate(
        "alpha beta gamma delta epsilon zeta eta theta iota kappa lambda mu nu xi omicron pi rho "
        "sigmaf sigma tau upsilon phi chi psi omega".split()
    )
}
_GREEK.update({c.upper(): n.capitalize() for c, n in _GREEK.items() if n != "sigmaf"})


@dataclasses.dataclass(frozen=True)
class SourceSpan:
    line: int
    column: int
    offset: int


@dataclasses.dataclass
class _Statement:
    kind: str
    loc: int
    tokens: List[Any]


def _located(kind: str) -> Any:
    def action(_s: str, loc: int, toks: pp.ParseResults) -> List[_Statement]:
        return [_Statement(kind, loc, toks.as_list())]

    return action


def _build_grammar() -> pp.ParserElement:
    lbrack, rbrack, lpar, rpar, semi, comma = map(pp.Suppress, "[]();,")

    ident = pp.Word(pp.alphas + "_", pp.alphanums + "_")
    integer = pp.Word(pp.nums).set_parse_action(lambda t: int(t[0]))
    number = pp.Regex(r"(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?").set_parse_action(
        lambda t: float(t[0])
    )

    operand = number | ident
    expr = pp.infix_notation(
        operand,
        [
            (pp.one_of("+ -"), 1, pp.OpAssoc.RIGHT),
            (pp.one_of("* /"), 2, pp.OpAssoc.LEFT),
            (pp.one_of("+ -"), 2, pp.OpAssoc.LEFT),
        ],
    )

    arg = pp.Group(ident + pp.Opt(lbrack + integer + rbrack))
    args = pp.Group(arg + pp.ZeroOrMore(comma + arg))

    header = (pp.Keyword("OPENQASM") + number + semi).set_parse_action(_located("header"))
    qreg = (pp.Keyword("qreg") + ident + lbrack + integer + rbrack + semi).set_parse_action(
        _located("qreg")
    )
    creg = (pp.Keyword("creg") + ident + lbrack + integer + rbrack + semi).set_parse_action(
        _located("creg")
    )
    measure = (pp.Keyword("measure") + arg + pp.Suppress("->") + arg + semi).set_parse_action(
        _located("measure")
    )
    barrier = (pp.Keyword("barrier") + args + semi).set_parse_action(_located("barrier"))
    reset = (pp.Keyword("reset") + arg + semi).set_parse_action(_located("reset"))
    gate = (ident + pp.Group(pp.Opt(lpar + expr + rpar)) + args + semi).set_parse_action(
        _located("gate")
    )

    statement = qreg | creg | measure | barrier | reset | gate
    program = pp.Opt(header) + pp.ZeroOrMore(statement) + pp.StringEnd()
    program.ignore(pp.dbl_slash_comment)
    return program


# Memoization keeps nested parentheses linear in the nesting depth
pp.ParserElement.enable_packrat()
_GRAMMAR = _build_grammar()


def _span(text: str, loc: int) -> SourceSpan:
    offset = len(text[:loc].encode("utf-8", "surrogatepass"))
    return SourceSpan(pp.lineno(loc, text), pp.col(loc, text), offset)


class _Builder:
    def __init__(self, text: str) -> None:
        self.text = text
        self.qreg: Optional[Tuple[str, int]] = None
        self.creg: Optional[Tuple[str, int]] = None
        self.gates: List[Gate] = []
        self.locs: List[int] = []
        # ASCII identifier in the source -> symbol name it stands for
        self.symbols: Dict[str, str] = {}

    def load_symbols(self, pragma: Optional[str]) -> None:
        if pragma is None:
            return
        for entry in pragma.split(","):
            ascii_name, _, original = entry.partition("=")
            ascii_name, original = ascii_name.strip(), original.strip()
            if (
                not _is_ascii_identifier(ascii_name)
                or ascii_name in self.symbols
                or ascii_name == "pi"
                or original.isascii()
                or original in self.symbols.values()
            ):
                raise self.error("Malformed @symbols pragma", 0)
            try:
                check_symbol(original)
            except errors.InvalidSymbolError as ex:
                raise self.error("Malformed @symbols pragma ({})".format(ex), 0) from None
            self.symbols[ascii_name] = original

    def error(self, message: str, loc: int) -> errors.QasmSyntaxError:
        return errors.QasmSyntaxError(message, _span(self.text, loc))

    def _eval(self, node: Any, loc: int) -> ParameterExpr:
        if isinstance(node, float):
            return ParameterExpr.literal(node)
        if isinstance(node, str):
            if node == "pi":
                return ParameterExpr.literal(math.pi)
            return ParameterExpr.symbol(self.symbols.get(node, node))

        if len(node) == 1:
            return self._eval(node[0], loc)

        if node[0] in ("+", "-"):
            inner = self._eval(node[1:] if len(node) > 2 else node[1], loc)
            return -inner if node[0] == "-" else inner

        result = self._eval(node[0], loc)
        for op, operand in zip(node[1::2], node[2::2]):
            rhs = self._eval(operand, loc)
            if op == "+":
                result = result + rhs
            elif op == "-":
                result = result - rhs
            elif op == "*":
                if result.is_bound:
                    result = rhs.scale(result.constant)
                elif rhs.is_bound:
                    result = result.scale(rhs.constant)
                else:
                    raise self.error("Non-linear parameter expression", loc)
            else:
                if not rhs.is_bound:
                    raise self.error("Division by a parameter symbol", loc)
                if rhs.constant == 0.0:
                    raise self.error("Division by zero", loc)
                result = result.scale(1.0 / rhs.constant)

        return result

    def _angle(self, node: Any, loc: int) -> ParameterExpr:
        result = self._eval(node, loc)
        if not all(math.isfinite(v) for v in [result.constant] + [c for _, c in result.terms]):
            raise self.error("Non-finite angle", loc)
        return result

    def _qubits(self, arg: List[Any], loc: int, broadcast: bool) -> List[int]:
        if self.qreg is None:
            raise self.error("Quantum register used before declaration", loc)
        name, size = self.qreg
        if arg[0] != name:
            raise self.error("Undeclared register {!r}".format(arg[0]), loc)
        if len(arg) == 1:
            if not broadcast:
                raise self.error("Register {!r} needs an index".format(name), loc)
            return list(range(size))
        if arg[1] >= size:
            raise self.error("Index {} out of range for {!r}".format(arg[1], name), loc)
        return [arg[1]]

    def _clbits(self, arg: List[Any], loc: int) -> List[int]:
        if self.creg is None:
            raise self.error("Classical register used before declaration", loc)
        name, size = self.creg
        if arg[0] != name:
            raise self.error("Undeclared register {!r}".format(arg[0]), loc)
        if len(arg) == 1:
            return list(range(size))
        if arg[1] >= size:
            raise self.error("Index {} out of range for {!r}".format(arg[1], name), loc)
        return [arg[1]]

    def _add(self, gate: Gate, loc: int) -> None:
        self.gates.append(gate)
        self.locs.append(loc)

    def feed(self, stmt: _Statement) -> None:
        toks = stmt.tokens
        loc = stmt.loc

        if stmt.kind == "header":
            return

        if stmt.kind in ("qreg", "creg"):
            if self.gates:
                raise self.error("Register declared after the first gate", loc)
            if toks[2] > MAX_REGISTER_SIZE:
                raise self.error("Register larger than {}".format(MAX_REGISTER_SIZE), loc)
            if stmt.kind == "qreg":
                if self.qreg is not None:
                    raise self.error("Only one quantum register is supported", loc)
                self.qreg = (toks[1], toks[2])
            else:
                if self.creg is not None:
                    raise self.error("Only one classical register is supported", loc)
                self.creg = (toks[1], toks[2])
            return

        if stmt.kind == "measure":
            qubits = self._qubits(toks[1], loc, broadcast=True)
            clbits = self._clbits(toks[2], loc)
            if len(qubits) != len(clbits):
                raise self.error("Measure register sizes differ", loc)
            for q, c in zip(qubits, clbits):
                self._add(Gate(GateKind.MEASURE, (q,), clbit=c), loc)
            return

        if stmt.kind == "barrier":
            # One barrier over every listed qubit, repeats dropped
            spanned: Dict[int, None] = {}
            for arg in toks[1]:
                spanned.update(dict.fromkeys(self._qubits(arg, loc, broadcast=True)))
            self._add(Gate(GateKind.BARRIER, tuple(spanned)), loc)
            return

        if stmt.kind == "reset":
            for q in self._qubits(toks[1], loc, broadcast=False):
                self._add(Gate(GateKind.RESET, (q,)), loc)
            return

        name, params, args = toks
        kind = _GATE_NAMES.get(name)
        if kind is None:
            raise self.error("Unknown gate {!r}".format(name), loc)
        if len(args) != kind.arity:
            raise self.error(
                "Gate {!r} takes {} qubit(s), got {}".format(name, kind.arity, len(args)), loc
            )
        if bool(params) != kind.parameterized:
            raise self.error(
                "Gate {!r} {} a parameter".format(
                    name, "requires" if kind.parameterized else "does not take"
                ),
                loc,
            )

        qubits = [self._qubits(arg, loc, broadcast=False)[0] for arg in args]
        param = self._angle(params[0], loc) if params else None
        self._add(Gate(kind, tuple(qubits), param), loc)

    def build(self, pragmas: Dict[str, str]) -> Circuit:
        if self.qreg is None:
            raise self.error("Missing quantum register declaration", len(self.text))

        labels = None
        if "labels" in pragmas:
            try:
                labels = tuple(int(v) for v in pragmas["labels"].split(","))
            except ValueError:
                raise self.error("Malformed @labels pragma", 0) from None
            if len(labels) != self.qreg[1]:
                raise self.error("@labels pragma does not match the register size", 0)

        circuit = Circuit(
            num_qubits=self.qreg[1],
            gates=tuple(self.gates),
            num_clbits=self.creg[1] if self.creg is not None else 0,
            name=pragmas.get("name", "circuit"),
            qubit_labels=labels,
        )

        violations = validate(circuit)
        if violations:
            index = int(re.search(r"at gate (\d+)", violations[0]).group(1))  # type: ignore
            raise self.error("Invalid circuit: {}".format(violations[0]), self.locs[index])

        return circuit


def parse(text: str) -> Circuit:
    """
    Parse ``text`` (see the module documentation for the grammar) into a ``Circuit``.

    Any malformed input raises ``QasmSyntaxError`` carrying the ``SourceSpan`` of the offending
    statement; no other exception type escapes.
    """

    pragmas = {m.group(1): m.group(2) for m in _PRAGMA_RE.finditer(text)}

    try:
        statements = _GRAMMAR.parse_string(text, parse_all=True)
    except pp.ParseBaseException as ex:
        raise errors.QasmSyntaxError(ex.msg, _span(text, min(ex.loc, len(text)))) from None
    except RecursionError:
        raise errors.QasmSyntaxError("Expression nested too deeply", _span(text, 0)) from None

    builder = _Builder(text)
    builder.load_symbols(pragmas.get("symbols"))
    try:
        for stmt in statements:
            builder.feed(stmt)
    except RecursionError:
        raise errors.QasmSyntaxError("Expression nested too deeply", _span(text, 0)) from None
    return builder.build(pragmas)


def _is_ascii_identifier(name: str) -> bool:
    return bool(_ASCII_IDENT_RE.match(name))


def _transliterate(name: str) -> str:
    return "".join(
        ch if ch.isascii() else _GREEK.get(ch, "u{:04x}".format(ord(ch))) for ch in name
    )


def ascii_symbols(symbols: Sequence[str]) -> Dict[str, str]:
    """
    Map every symbol to the identifier it is written as in OpenQASM.

    ASCII names stay as they are. Other names are transliterated (Greek letters by name, anything
    else by code point) and suffixed with ``_`` until they clash neither with another symbol nor
    with ``pi``.
    """

    result = {name: name for name in symbols if name.isascii()}
    used = set(result)
    for name in sorted(set(symbols) - used):
        candidate = _transliterate(name)
        while candidate in used or candidate == "pi":
            candidate += "_"
        used.add(candidate)
        result[name] = candidate
    return result


def _format_expr(param: ParameterExpr, names: Mapping[str, str]) -> str:
    parts = ["{!r}*{}".format(coeff, names[name]) for name, coeff in param.terms]
    if param.constant != 0.0 or not parts:
        parts.append(repr(param.constant))
    return " + ".join(parts)


def serialize(c: Circuit) -> str:
    """
    Write ``c`` in the dialect ``parse`` reads; ``parse(serialize(c)) == c`` for every valid ``c``.

    Symbols that are not ASCII identifiers are written as ``ascii_symbols`` renames them, and a
    ``// @symbols`` pragma records the original names.
    """

    names = ascii_symbols(c.free_symbols)
    renamed = {written: name for name, written in names.items() if written != name}

    lines = ["OPENQASM 2.0;", "// @name {}".format(" ".join(c.name.split()) or "circuit")]
    if c.qubit_labels is not None:
        lines.append("// @labels {}".format(",".join(str(q) for q in c.qubit_labels)))
    if renamed:
        entries = ("{}={}".format(written, name) for written, name in sorted(renamed.items()))
        lines.append("// @symbols {}".format(",".join(entries)))

    lines.append("qreg q[{}];".format(c.num_qubits))
    if c.num_clbits:
        lines.append("creg c[{}];".format(c.num_clbits))

    for gate in c.gates:
        qargs = ",".join("q[{}]".format(q) for q in gate.qubits)
        if gate.kind == GateKind.MEASURE:
            lines.append("measure {} -> c[{}];".format(qargs, gate.clbit))
        elif gate.param is not None:
            lines.append(
                "{}({}) {};".format(gate.kind.value, _format_expr(gate.param, names), qargs)
            )
        else:
            lines.append("{} {};".format(gate.kind.value, qargs))

    return "\n".join(lines) + "\n"


def load(path: Union[str, pathlib.Path]) -> Circuit:
    return parse(pathlib.Path(path).read_text(encoding="utf-8"))


def dump(c: Circuit, path: Union[str, pathlib.Path]) -> None:
    pathlib.Path(path).write_text(serialize(c), encoding="utf-8")
