"""Shared strategies and helpers for the test suite."""

from pathlib import Path

from hypothesis import strategies as st

from xcompose.model import Article, ImageSlot, Paragraph

FIXTURES = Path(__file__).parent / "fixtures"

# Caption/paragraph text that survives the parsers' leniency rules unchanged:
# letters and single spaces, no leading/trailing whitespace, no digits (which
# could collide with caption anchors), no trailing punctuation to strip.
clean_text = (
    st.text(alphabet="abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ ", min_size=1, max_size=40)
    .map(lambda s: " ".join(s.split()))
    .filter(bool)
)

paragraph_text = st.text(
    alphabet="abcdefghijklmnopqrstuvwxyz .!?", min_size=1, max_size=120
).map(str.strip).filter(bool)


@st.composite
def articles(draw, max_paragraphs=6, with_slots=True):
    """Random valid Article instances."""
    n = draw(st.integers(min_value=1, max_value=max_paragraphs))
    paragraphs = [Paragraph(i, draw(paragraph_text)) for i in range(1, n + 1)]
    slots = []
    if with_slots:
        slot_indices = sorted(draw(st.sets(st.integers(min_value=1, max_value=n), max_size=n)))
        for idx in slot_indices:
            caption = draw(clean_text)
            n_candidates = draw(st.integers(min_value=0, max_value=4))
            candidates = tuple(f"img_{idx}_{k}" for k in range(n_candidates))
            selected = draw(st.sampled_from(candidates)) if candidates and draw(st.booleans()) else None
            if candidates and not caption:
                caption = "x"
            slots.append(ImageSlot(idx, caption if candidates else caption, candidates, selected))
    ident = draw(st.text(alphabet="abcdef0123456789", min_size=1, max_size=12))
    instruction = draw(clean_text)
    return Article.create(ident, instruction, paragraphs, slots)


@st.composite
def spotting_results(draw, max_paragraphs=9):
    """(placements, n_paragraphs) pairs for round-trip testing."""
    n = draw(st.integers(min_value=1, max_value=max_paragraphs))
    indices = sorted(draw(st.sets(st.integers(min_value=1, max_value=n), min_size=1, max_size=n)))
    placements = [(i, draw(clean_text)) for i in indices]
    return placements, n


def render_spotting_response(placements) -> str:
    """Harness-owned response renderer mirroring the expected reply sentence."""
    index_list = ", ".join(str(i) for i, _ in placements)
    caption_list = ", ".join(f"{i} paragraph: {c}" for i, c in placements)
    return (
        f"I think images can be added under the {index_list} paragraphs. "
        f"The image captions are as follows: {caption_list}"
    )
