"""Constrained decoding: prefix-derived generation states, allowed-token
masks per scheme, and a beam-search driver generic over a scoring callback.

The state machine tracks exactly what can be recomputed from the document
and the z prefix, so incremental advancing and from-scratch recomputation
agree (beam hypotheses can be replayed or forked freely).  Masks both
implement the published per-state token rules and tighten them just enough
that every accepted sequence parses to a valid annotation: mention ends
require non-empty content, a close may not duplicate an already-closed
(start, end, cluster) triple, and mentions cannot open past the end of the
source.  Every gold linearization remains accepted.

Score handling for the reduced action spaces is transfer-then-mask: the
copy action's score is written onto the next source token and the
new-cluster action's score onto the next fresh cluster-end symbol before
disallowed entries are removed.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Optional, Sequence

from .align import align_partial
from .linearize import (
    Diagnostics,
    LinearizedPair,
    PartialParse,
    Scheme,
    SchemeKind,
    delinearize,
)
from .model import (
    CorefAnnotation,
    CorefDataError,
    DEFAULT_SYMBOLS,
    Document,
    SymbolTable,
    Token,
)


class MaskViolation(CorefDataError):
    """A token outside the allowed set was fed to the state machine."""


class ScorerError(CorefDataError):
    """The scoring callback broke its contract."""


class UnsupportedSchemeError(CorefDataError):
    """The scheme has no constrained-decoding rules (codec-only ablation)."""


class StateTag(enum.Enum):
    OUTSIDE = "outside"
    INSIDE_MENTION = "inside-mention"
    INSIDE_CLUSTER_IDENTITY = "inside-cluster-identity"
    COMPLETE_SENTENCE = "complete-sentence"
    INSIDE_MENTION_SEEN = "inside-mention-seen"
    OUTSIDE_MENTION = "outside-mention"
    DONE = "done"


@dataclass(frozen=True)
class _OpenMention:
    start: int            # source position (full) or content position (partial)
    sep_end: Optional[int] = None   # partial: content length when | was seen


@dataclass(frozen=True)
class _Identity:
    digits: tuple[Token, ...] = ()


@dataclass(frozen=True)
class GenerationState:
    """Everything the masks need, derivable from (document, z prefix).

    Counters mirror the published state definitions; the open-mention stack
    and the closed-triple set carry the extra bookkeeping the tightened
    masks use.  `cursor` is the next unconsumed source position (full
    schemes); `emitted_content` counts non-special tokens (partial scheme).
    """

    scheme: Scheme
    m_starts: int = 0
    m_ends: int = 0
    seps: int = 0
    sent_starts: int = 0
    sent_ends: int = 0
    cursor: int = 1
    max_label: int = 0
    emitted_content: int = 0
    open_stack: tuple[_OpenMention, ...] = ()
    identity: Optional[_Identity] = None
    closed: frozenset[tuple[int, int, int]] = frozenset()
    terminal: bool = False

    @property
    def sentence_index(self) -> int:
        return self.sent_starts

    @property
    def in_sentence(self) -> bool:
        return self.sent_starts > self.sent_ends

    def tag(self) -> StateTag:
        if self.terminal:
            return StateTag.DONE
        if self.scheme.kind is SchemeKind.INTEGER_FREE:
            return (StateTag.INSIDE_MENTION_SEEN if self.open_stack
                    else StateTag.OUTSIDE_MENTION)
        if self.scheme.partial and self.scheme.sentence_markers and not self.in_sentence:
            return StateTag.COMPLETE_SENTENCE
        if self.identity is not None:
            return StateTag.INSIDE_CLUSTER_IDENTITY
        if self.open_stack:
            return StateTag.INSIDE_MENTION
        return StateTag.OUTSIDE


@dataclass(frozen=True)
class MaskDirective:
    """Allowed next tokens plus score transfers applied before masking."""

    allowed: frozenset[Token]
    transfers: tuple[tuple[Token, Token], ...] = ()

    @property
    def forced(self) -> Optional[Token]:
        if len(self.allowed) == 1:
            return next(iter(self.allowed))
        return None


def initial_state(scheme: Scheme) -> GenerationState:
    if not scheme.maskable:
        raise UnsupportedSchemeError(
            f"no constrained-decoding rules for scheme {scheme.name()}")
    return GenerationState(scheme=scheme)


def state_from_prefix(doc: Document, z_prefix: Sequence[Token], scheme: Scheme,
                      symbols: SymbolTable = DEFAULT_SYMBOLS,
                      loose_integers: bool = False) -> GenerationState:
    """Recompute the state for a prefix (which must begin with <s>)."""
    if not z_prefix or z_prefix[0] != symbols.seq_start:
        raise MaskViolation("prefix must begin with the start symbol")
    state = initial_state(scheme)
    for tok in z_prefix[1:]:
        state = advance(state, tok, doc, symbols, loose_integers)
    return state


# ---------------------------------------------------------------------------
# Masks
# ---------------------------------------------------------------------------

def mask(state: GenerationState, doc: Document,
         symbols: SymbolTable = DEFAULT_SYMBOLS,
         loose_integers: bool = False) -> MaskDirective:
    """Allowed-token directive for the current state.

    loose_integers switches the cluster-identity stage to the published
    wide-open rule (any integer token, close anytime); the default
    restricts integers to spellings of 1..l+1 that do not duplicate a
    closed triple, which preserves all gold sequences.
    """
    if state.terminal:
        raise MaskViolation("sequence already ended")
    kind = state.scheme.kind
    if kind is SchemeKind.INTEGER_FREE:
        return _mask_integer_free(state, doc, symbols)
    if kind is SchemeKind.PARTIAL_TOKEN:
        return _mask_partial(state, doc, symbols, loose_integers)
    if kind in (SchemeKind.FULL_TOKEN, SchemeKind.FULL_COPY):
        return _mask_full(state, doc, symbols, loose_integers)
    raise UnsupportedSchemeError(f"no mask rules for scheme {kind.value}")


def _plain_source(tok: Token, sm: SymbolTable) -> bool:
    """True when the copy action would stand for this source token."""
    return tok not in sm.all_specials()


def _digit_choices(sm: SymbolTable, pending: tuple[Token, ...], labels: Sequence[int],
                   ) -> tuple[set[Token], bool]:
    """Next digits extending `pending` toward a spelling of any label, and
    whether `pending` already spells one completely."""
    digits: set[Token] = set()
    complete = False
    for label in labels:
        spelling = sm.spell(label)
        if spelling == pending:
            complete = True
        elif spelling[:len(pending)] == pending:
            digits.add(spelling[len(pending)])
    return digits, complete


def _valid_close_labels(state: GenerationState, limit: Optional[int] = None) -> list[int]:
    """Labels that may legally close the innermost mention here: at most
    one past the seen maximum, and not duplicating a closed triple."""
    top = state.open_stack[-1]
    end = state.cursor - 1
    hi = state.max_label + 1 if limit is None else min(state.max_label + 1, limit)
    return [k for k in range(1, hi + 1)
            if (top.start, end, k) not in state.closed]


def _mask_full(state, doc, sm, loose):
    T = len(doc)
    nxt = doc.token(state.cursor) if state.cursor <= T else None
    transfers: tuple = ()

    if state.identity is not None:
        if loose:
            allowed = set(sm.integer_lexicon) | {sm.mention_end}
        else:
            labels = _valid_close_labels(state)
            digits, complete = _digit_choices(sm, state.identity.digits, labels)
            allowed = digits | ({sm.mention_end} if complete else set())
    elif state.open_stack:
        allowed = set()
        if nxt is not None:
            allowed |= {nxt, sm.mention_start}
        if state.cursor > state.open_stack[-1].start:
            allowed.add(sm.separator)
    else:
        allowed = {nxt, sm.mention_start} if nxt is not None else {sm.seq_end}

    if (state.scheme.kind is SchemeKind.FULL_COPY and nxt is not None
            and nxt in allowed and _plain_source(nxt, sm)):
        transfers = ((sm.copy, nxt),)
    return MaskDirective(frozenset(allowed), transfers)


def _mask_integer_free(state, doc, sm):
    T = len(doc)
    nxt = doc.token(state.cursor) if state.cursor <= T else None
    transfers: list[tuple[Token, Token]] = []
    allowed: set[Token] = set()

    if nxt is not None:
        allowed.add(nxt)
        same_start_depth = sum(1 for o in state.open_stack if o.start == state.cursor)
        if same_start_depth < sm.max_clusters:
            allowed.add(sm.mention_start)
        if _plain_source(nxt, sm):
            transfers.append((sm.copy, nxt))
    if state.open_stack:
        if state.cursor > state.open_stack[-1].start:
            for k in _valid_close_labels(state, limit=sm.max_clusters):
                allowed.add(sm.cluster_end(k))
            fresh = state.max_label + 1
            if fresh <= sm.max_clusters and sm.cluster_end(fresh) in allowed:
                transfers.append((sm.new_cluster, sm.cluster_end(fresh)))
    elif nxt is None:
        allowed.add(sm.seq_end)
    return MaskDirective(frozenset(allowed), tuple(transfers))


def _mask_partial(state, doc, sm, loose):
    markers = state.scheme.sentence_markers
    if markers and not state.in_sentence:
        if state.sent_starts < doc.num_sentences:
            return MaskDirective(frozenset({sm.sentence_start}))
        return MaskDirective(frozenset({sm.seq_end}))

    if markers:
        sent_tokens = set(doc.sentence_tokens(state.sentence_index))
    else:
        sent_tokens = set(doc.tokens)
    allowed = set(sent_tokens)

    if state.identity is not None:
        if loose:
            allowed |= set(sm.integer_lexicon) | {sm.mention_end}
        else:
            labels = list(range(1, state.max_label + 2))
            digits, complete = _digit_choices(sm, state.identity.digits, labels)
            allowed |= digits
            if complete:
                allowed.add(sm.mention_end)
    elif state.open_stack:
        allowed.add(sm.mention_start)
        top = state.open_stack[-1]
        if state.emitted_content + 1 > top.start:
            allowed.add(sm.separator)
    else:
        allowed.add(sm.mention_start)
        if not markers:
            allowed.add(sm.seq_end)
    if markers:
        allowed.add(sm.sentence_end)
    return MaskDirective(frozenset(allowed))


# ---------------------------------------------------------------------------
# Transitions
# ---------------------------------------------------------------------------

def advance(state: GenerationState, emitted: Token, doc: Document,
            symbols: SymbolTable = DEFAULT_SYMBOLS,
            loose_integers: bool = False) -> GenerationState:
    """State after emitting one allowed z token.

    Feeding a token outside the current allowed set raises MaskViolation:
    that is a driver bug (or a desynchronized external generator), not a
    data condition.
    """
    directive = mask(state, doc, symbols, loose_integers)
    if emitted not in directive.allowed:
        raise MaskViolation(
            f"token {emitted!r} not allowed in state {state.tag().value} "
            f"(allowed: {sorted(map(str, directive.allowed))})")
    sm = symbols
    kind = state.scheme.kind

    if emitted == sm.seq_end:
        return replace(state, terminal=True)

    if kind is SchemeKind.PARTIAL_TOKEN:
        return _advance_partial(state, emitted, sm)

    if emitted == sm.mention_start:
        return replace(state, m_starts=state.m_starts + 1,
                       open_stack=state.open_stack + (_OpenMention(state.cursor),))
    if emitted == sm.separator:
        return replace(state, seps=state.seps + 1, identity=_Identity())
    if state.identity is not None and emitted in sm.integer_lexicon:
        return replace(state, identity=_Identity(state.identity.digits + (emitted,)))
    if emitted == sm.mention_end or sm.cluster_end_label(emitted) is not None:
        if emitted == sm.mention_end:
            label = sm.parse_integer(state.identity.digits)
        else:
            label = sm.cluster_end_label(emitted)
        return _close_full(state, label)
    # A source token: the mask guarantees it matches the cursor.
    return replace(state, cursor=state.cursor + 1)


def _close_full(state: GenerationState, label: Optional[int]) -> GenerationState:
    top = state.open_stack[-1]
    end = state.cursor - 1
    closed = state.closed
    max_label = state.max_label
    if label is not None and end >= top.start:
        if label > state.max_label + 1:   # loose mode; mirror the parser's clamp
            label = state.max_label + 1
        closed = closed | {(top.start, end, label)}
        max_label = max(max_label, label)
    return replace(state, m_ends=state.m_ends + 1, identity=None,
                   open_stack=state.open_stack[:-1], closed=closed,
                   max_label=max_label)


def _advance_partial(state: GenerationState, emitted: Token, sm: SymbolTable,
                     ) -> GenerationState:
    if emitted == sm.sentence_start:
        return replace(state, sent_starts=state.sent_starts + 1)
    if emitted == sm.sentence_end:
        # Closing over open mentions drops them (the parser repairs the same way).
        return replace(state, sent_ends=state.sent_ends + 1, identity=None,
                       open_stack=())
    if emitted == sm.mention_start:
        return replace(state, m_starts=state.m_starts + 1,
                       open_stack=state.open_stack
                       + (_OpenMention(state.emitted_content + 1),))
    if emitted == sm.separator:
        top = state.open_stack[-1]
        stack = state.open_stack[:-1] + (replace(top, sep_end=state.emitted_content),)
        return replace(state, seps=state.seps + 1, identity=_Identity(),
                       open_stack=stack)
    if state.identity is not None and emitted in sm.integer_lexicon:
        return replace(state, identity=_Identity(state.identity.digits + (emitted,)))
    if emitted == sm.mention_end:
        label = sm.parse_integer(state.identity.digits) if state.identity else None
        max_label = state.max_label
        if label is not None:
            if label > max_label + 1:
                label = max_label + 1
            max_label = max(max_label, label)
        return replace(state, m_ends=state.m_ends + 1, identity=None,
                       open_stack=state.open_stack[:-1], max_label=max_label)
    # Source token: content under any scheme state, including the published
    # allowance for sentence tokens inside the cluster-identity stage.
    return replace(state, emitted_content=state.emitted_content + 1)


def check_sequence(doc: Document, z: Sequence[Token], scheme: Scheme,
                   symbols: SymbolTable = DEFAULT_SYMBOLS,
                   loose_integers: bool = False) -> GenerationState:
    """Replay a full z sequence through the masks; raises MaskViolation at
    the first disallowed token.  Returns the final state."""
    state = state_from_prefix(doc, z, scheme, symbols, loose_integers)
    if not state.terminal:
        raise MaskViolation("sequence did not end with the end symbol")
    return state


# ---------------------------------------------------------------------------
# Scorers
# ---------------------------------------------------------------------------

# A scorer maps (z prefix, state) to per-token scores.  The state is None
# on the unconstrained path, where no FSM is maintained.
Scorer = Callable[[tuple[Token, ...], Optional[GenerationState]], Mapping[Token, float]]


def decode_vocabulary(doc: Document, scheme: Scheme,
                      symbols: SymbolTable = DEFAULT_SYMBOLS,
                      include_actions: bool = True) -> tuple[Token, ...]:
    """The token universe a scorer must cover for this document/scheme."""
    toks: set[Token] = set(doc.tokens)
    toks |= {symbols.mention_start, symbols.mention_end, symbols.separator,
             symbols.seq_end, symbols.seq_start}
    toks |= set(symbols.integer_lexicon)
    if scheme.kind is SchemeKind.INTEGER_FREE:
        toks |= set(symbols.cluster_ends)
    if scheme.sentence_markers:
        toks |= {symbols.sentence_start, symbols.sentence_end}
    if include_actions and scheme.copy_action:
        toks |= {symbols.copy, symbols.new_cluster}
    return tuple(sorted(toks, key=_token_key))


def _token_key(tok: Token):
    return (tok.__class__.__name__, str(tok))


class OracleScorer:
    """Scores 1.0 for the gold continuation at gold prefixes, 0 elsewhere.

    level="action" rewards only the gold action token (exercising the
    copy/new-cluster score transfers exactly as a trained reduced-action
    model would).  level="z" additionally rewards the gold z token itself.
    Under copy schemes the transfer overwrites the next source token's
    direct score with the copy action's, so the action alias must carry
    the signal either way.
    """

    def __init__(self, pair: LinearizedPair, symbols: SymbolTable = DEFAULT_SYMBOLS,
                 level: str = "z"):
        if level not in ("z", "action"):
            raise ValueError("level must be 'z' or 'action'")
        self.pair = pair
        self.symbols = symbols
        self.level = level

    def __call__(self, prefix, state):
        scores = {}
        z = self.pair.z
        t = len(prefix)
        if tuple(prefix) == z[:t] and t < len(z):
            scores[self.pair.y[t - 1]] = 1.0
            if self.level == "z":
                scores[z[t]] = 1.0
        return _Defaulting(scores)


class RandomScorer:
    """Independent uniform scores per step, reproducible from the seed."""

    def __init__(self, seed: int):
        import random
        self.rng = random.Random(seed)

    def __call__(self, prefix, state):
        rng = self.rng
        return _Defaulting({}, default_fn=lambda tok: rng.random())


class AdversarialScorer:
    """Prefers structural specials everywhere, trying to break the masks."""

    def __init__(self, symbols: SymbolTable = DEFAULT_SYMBOLS):
        sm = symbols
        self.loved = {sm.mention_end: 9.0, sm.seq_end: 8.0, sm.separator: 7.0,
                      sm.new_cluster: 6.0, sm.copy: 5.5, sm.mention_start: 5.0,
                      sm.sentence_end: 4.0}
        for end in sm.cluster_ends:
            self.loved[end] = 6.5

    def __call__(self, prefix, state):
        return _Defaulting(dict(self.loved), default_fn=lambda tok: -1.0)


class ScriptedScorer:
    """Per-step score overrides from a test record:
    {"doc_key": ..., "steps": [{token: score, ...}, ...]}, default 0."""

    def __init__(self, record: Mapping):
        self.steps = [dict(s) for s in record.get("steps", [])]
        self.doc_key = record.get("doc_key", "")

    def __call__(self, prefix, state):
        t = len(prefix) - 1
        overrides = self.steps[t] if 0 <= t < len(self.steps) else {}
        return _Defaulting(dict(overrides))


class _Defaulting(dict):
    """Mapping with a default, so scorers satisfy 'finite score for every
    vocabulary token' without materializing the vocabulary each step."""

    def __init__(self, base, default_fn=None):
        super().__init__(base)
        self.default_fn = default_fn or (lambda tok: 0.0)

    def __missing__(self, tok):
        return self.default_fn(tok)


# ---------------------------------------------------------------------------
# Decoding drivers
# ---------------------------------------------------------------------------

@dataclass
class DecodeOptions:
    beam_width: int = 4
    max_steps: Optional[int] = None        # default 4 * len(doc) + 64
    loose_integers: bool = False
    length_penalty: float = 0.0            # ranking score / len(z) ** penalty
    gap_slope: float = 0.0                 # aligner knob for the partial scheme
    trace: Optional[list] = None           # filled with per-step dicts if given


@dataclass
class DecodeResult:
    annotation: CorefAnnotation
    z: tuple[Token, ...]
    score: float
    diagnostics: Diagnostics
    steps: int
    truncated: bool = False
    partial_parse: Optional[PartialParse] = None


@dataclass
class _Hyp:
    z: tuple[Token, ...]
    score: float
    state: GenerationState


def _effective_scores(raw: Mapping[Token, float], directive: MaskDirective,
                      ) -> dict[Token, float]:
    """Apply score transfers, then restrict to the allowed set."""
    out: dict[Token, float] = {}
    transferred = {dst: raw[src] for src, dst in directive.transfers}
    for tok in directive.allowed:
        val = transferred.get(tok, raw[tok])
        if val != val or val in (float("inf"), float("-inf")):
            raise ScorerError(f"non-finite score for token {tok!r}")
        out[tok] = float(val)
    return out


def decode(doc: Document, scorer: Scorer, scheme: Scheme,
           symbols: SymbolTable = DEFAULT_SYMBOLS,
           options: DecodeOptions = DecodeOptions()) -> DecodeResult:
    """Constrained beam search; always returns a valid annotation.

    Each step applies the mask directive (transfers, then masking, then
    top-k by cumulative raw score).  When the step limit is hit, the best
    live hypothesis is closed deterministically along allowed tokens and a
    truncation diagnostic is recorded.
    """
    if not scheme.maskable:
        raise UnsupportedSchemeError(
            f"scheme {scheme.name()} decodes through the unconstrained path")
    width = max(1, options.beam_width)
    limit = options.max_steps if options.max_steps is not None else 4 * len(doc) + 64
    hyps = [_Hyp((symbols.seq_start,), 0.0, initial_state(scheme))]
    finished: list[_Hyp] = []
    steps = 0
    truncated = False

    while hyps and steps < limit:
        steps += 1
        candidates: list[tuple[float, _Hyp, Token, GenerationState]] = []
        for hyp in hyps:
            directive = mask(hyp.state, doc, symbols, options.loose_integers)
            raw = scorer(hyp.z, hyp.state)
            eff = _effective_scores(raw, directive)
            if options.trace is not None:
                options.trace.append({
                    "step": steps, "state": hyp.state.tag().value,
                    "allowed": len(directive.allowed),
                    "prefix_len": len(hyp.z)})
            for tok in sorted(directive.allowed, key=_token_key):
                candidates.append((hyp.score + eff[tok], hyp, tok, hyp.state))
        candidates.sort(key=lambda c: -c[0])
        new_hyps: list[_Hyp] = []
        seen_prefixes: set[tuple[Token, ...]] = set()
        for rank, (total, hyp, tok, state) in enumerate(candidates):
            if len(new_hyps) >= width:
                break
            z = hyp.z + (tok,)
            if z in seen_prefixes:
                continue
            seen_prefixes.add(z)
            nstate = advance(state, tok, doc, symbols, options.loose_integers)
            if nstate.terminal:
                # Only well-ranked endings compete; garbage endings far down
                # the candidate list are not hypotheses the beam chose.
                if rank < 2 * width:
                    finished.append(_Hyp(z, total, nstate))
            else:
                new_hyps.append(_Hyp(z, total, nstate))
        hyps = new_hyps
        # The search is done once no live hypothesis outranks a finished one
        # (scores are raw cumulative sums, so a better live hypothesis may
        # still overtake; then the loop continues up to the step limit).
        if finished and hyps:
            if max(f.score for f in finished) >= max(h.score for h in hyps):
                break

    if not finished:
        truncated = True
        best = max(hyps, key=lambda h: h.score)
        finished = [_force_close(best, doc, symbols, options.loose_integers)]

    best = max(finished, key=lambda h: _ranked(h, options.length_penalty))
    return _finish(best, doc, scheme, symbols, steps, truncated, options)


def _ranked(hyp: _Hyp, penalty: float) -> float:
    if penalty:
        return hyp.score / (len(hyp.z) ** penalty)
    return hyp.score


_CLOSURE_RANK_DEFAULT = 50


def _closure_rank(tok: Token, sm: SymbolTable) -> int:
    if tok == sm.seq_end:
        return 0
    if tok == sm.mention_end or sm.cluster_end_label(tok) is not None:
        return 1
    if tok == sm.separator:
        return 2
    if tok in sm.integer_lexicon:
        return 3
    if tok == sm.sentence_end:
        return 4
    if tok == sm.sentence_start:
        return 6
    if tok == sm.mention_start:
        return 99
    return 5  # source tokens


def _force_close(hyp: _Hyp, doc, sm, loose) -> _Hyp:
    """Deterministically extend a hypothesis to a legal end state by always
    taking the most closing-like allowed token."""
    state, z = hyp.state, hyp.z
    while not state.terminal:
        directive = mask(state, doc, sm, loose)
        tok = min(directive.allowed, key=lambda t: (_closure_rank(t, sm), _token_key(t)))
        z = z + (tok,)
        state = advance(state, tok, doc, sm, loose)
    return _Hyp(z, hyp.score, state)


def _finish(best: _Hyp, doc, scheme, symbols, steps, truncated, options,
            ) -> DecodeResult:
    parsed, diag = delinearize(best.z, doc, scheme, symbols)
    if truncated:
        diag.notes.append("step limit reached; hypothesis force-closed")
    if isinstance(parsed, PartialParse):
        report, _ = align_partial(doc, parsed, diag, gap_slope=options.gap_slope)
        annotation = report.annotation
        return DecodeResult(annotation, best.z, best.score, diag, steps,
                            truncated, partial_parse=parsed)
    return DecodeResult(parsed, best.z, best.score, diag, steps, truncated)


def unconstrained_decode(doc: Document, scorer: Scorer, scheme: Scheme,
                         symbols: SymbolTable = DEFAULT_SYMBOLS,
                         options: DecodeOptions = DecodeOptions(beam_width=1),
                         ) -> tuple[tuple[Token, ...], int]:
    """Greedy decoding with no masks over the z-level vocabulary.

    No state machine is maintained (the scorer sees state=None); the output
    goes through delinearize's repair policy downstream.  Returns the raw
    sequence (including <s> and, if reached, </s>) and the step count.
    """
    vocab = decode_vocabulary(doc, scheme, symbols, include_actions=False)
    limit = options.max_steps if options.max_steps is not None else 4 * len(doc) + 64
    z: tuple[Token, ...] = (symbols.seq_start,)
    steps = 0
    while steps < limit:
        steps += 1
        raw = scorer(z, None)
        tok = max(vocab, key=lambda t: (raw[t], ))
        z = z + (tok,)
        if tok == symbols.seq_end:
            break
    return z, steps


# ---------------------------------------------------------------------------
# Exhaustive language enumeration (desk-scale verification)
# ---------------------------------------------------------------------------

def enumerate_language(doc: Document, scheme: Scheme,
                       symbols: SymbolTable = DEFAULT_SYMBOLS,
                       max_clusters: Optional[int] = None,
                       max_spans: Optional[int] = None,
                       loose_integers: bool = False):
    """Yield every z the mask FSM accepts over doc, depth-first.

    Only meaningful for full schemes (the partial language is infinite).
    max_clusters/max_spans prune the enumeration to a finite stratum; they
    bound the parsed annotation, not just the search.
    """
    if scheme.partial:
        raise UnsupportedSchemeError("the partial-scheme language is unbounded")
    if max_spans is None:
        if max_clusters is None:
            raise UnsupportedSchemeError(
                "enumeration needs max_spans or max_clusters to be finite")
        # Beyond this, every close would duplicate a (start, end, cluster)
        # triple within the cluster bound, so deeper branches are dead.
        positions = len(doc) * (len(doc) + 1) // 2
        max_spans = positions * max_clusters

    def walk(z: tuple[Token, ...], state: GenerationState):
        directive = mask(state, doc, symbols, loose_integers)
        for tok in sorted(directive.allowed, key=_token_key):
            nstate = advance(state, tok, doc, symbols, loose_integers)
            if max_clusters is not None and nstate.max_label > max_clusters:
                continue
            if max_spans is not None and nstate.m_starts > max_spans:
                continue
            nz = z + (tok,)
            if nstate.terminal:
                yield nz
            else:
                yield from walk(nz, nstate)

    yield from walk((symbols.seq_start,), initial_state(scheme))
