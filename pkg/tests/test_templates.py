from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from promptrag.corpus import BenchmarkInstance
from promptrag.templates import (
    PLACEHOLDER,
    Category,
    ContextMode,
    DocLabelStyle,
    PromptTemplate,
    TemplateError,
    format_context,
    load_template_dir,
    parse_template_text,
    registry,
    render,
    template_to_text,
)
from promptrag.verify import load_published, published_path


def test_registry_has_24_unique_ids():
    ids = [t.id for t in registry()]
    assert len(ids) == 24
    assert len(set(ids)) == 24


def test_category_counts():
    counts = Counter(t.category for t in registry())
    assert counts == {
        Category.BASELINE: 1,
        Category.FOUNDATIONAL: 2,
        Category.REASONING: 2,
        Category.SELF_CORRECTION: 2,
        Category.ADVANCED: 3,
        Category.HYBRID: 14,
    }


def test_registry_order_starts_with_baseline_then_literature():
    tpls = registry()
    assert tpls[0].id == "standard_context_aware"
    assert tpls[0].category is Category.BASELINE
    assert all(t.category is not Category.HYBRID for t in tpls[1:10])
    assert all(t.category is Category.HYBRID for t in tpls[10:])


@pytest.mark.parametrize("table", ["qwen", "gemma"])
def test_registry_ids_match_published_tables(table):
    published = sorted(r.prompt_method for r in load_published(published_path(table)).rows)
    assert sorted(t.id for t in registry()) == published


def test_label_styles():
    by_id = {t.id: t for t in registry()}
    assert by_id["slm_hotpot_smec"].doc_label_style is DocLabelStyle.D_BRACKET
    assert by_id["multi_hop_compact_prompting"].doc_label_style is DocLabelStyle.NUM_BRACKET
    assert by_id["multi_hop_chain_prompting"].doc_label_style is DocLabelStyle.DOC_PLAIN
    assert by_id["hierarchical_synthesis"].context_mode is ContextMode.ENUMERATED
    assert by_id["adaptive_hybrid_prompting"].reconstructed


def test_body_invariants():
    for t in registry():
        names = PLACEHOLDER.findall(t.body)
        assert names.count("question") == 1, t.id
        if t.context_mode is ContextMode.MONOLITHIC:
            assert "context" in names
        else:
            assert "documents" in names


def test_format_context_monolithic():
    assert format_context(["A", "B"], ContextMode.MONOLITHIC) == "A\n\nB"


def test_format_context_enumerated_doc_bracket():
    segs = format_context(["A", "B"], ContextMode.ENUMERATED, DocLabelStyle.DOC_BRACKET)
    assert [f"{label} {doc}" for label, doc in segs] == ["[DOC-1] A", "[DOC-2] B"]


@pytest.mark.parametrize(
    "style, expected",
    [
        (DocLabelStyle.NUM_BRACKET, "[1] A"),
        (DocLabelStyle.D_BRACKET, "[D1] A"),
        (DocLabelStyle.DOC_PLAIN, "Doc1: A"),
    ],
)
def test_format_context_single_doc_styles(style, expected):
    [(label, doc)] = format_context(["A"], ContextMode.ENUMERATED, style)
    assert f"{label} {doc}" == expected


def test_format_context_rejects_empty():
    with pytest.raises(TemplateError):
        format_context([], ContextMode.MONOLITHIC)


def test_render_baseline_exact():
    tpl = registry()[0]
    inst = BenchmarkInstance("i", "Q?", "A", ("C1",))
    out = render(tpl, inst)
    assert out.text == "Context: C1\nQuestion: Q?\nAnswer:"
    assert out.char_length == len(out.text)
    assert (out.template_id, out.instance_id) == ("standard_context_aware", "i")


def test_render_hierarchical_synthesis_hand_built():
    tpl = next(t for t in registry() if t.id == "hierarchical_synthesis")
    inst = BenchmarkInstance("i", "Who?", "x", ("alpha", "beta", "gamma"))
    # built by hand from the template body
    expected = (
        "You have been provided with multiple documents. Your task is to synthesize the information "
        "from these documents to answer the question. When you use information from a document, "
        "cite it using its identifier.\n"
        "\n"
        "Context:\n"
        "[DOC-1] alpha\n"
        "[DOC-2] beta\n"
        "[DOC-3] gamma\n"
        "Question: Who?\n"
        "Answer (with citations):"
    )
    assert render(tpl, inst).text == expected


def test_render_normalizes_crlf():
    tpl = registry()[0]
    inst = BenchmarkInstance("i", "Q\r\nmore?", "A", ("C1\r\nC2",))
    assert "\r" not in render(tpl, inst).text


def test_placeholder_text_in_documents_is_not_expanded():
    tpl = registry()[0]
    inst = BenchmarkInstance("i", "Q?", "A", ("see {question} here",))
    assert render(tpl, inst).text == "Context: see {question} here\nQuestion: Q?\nAnswer:"


def test_unknown_placeholder_rejected():
    with pytest.raises(TemplateError, match="unknown placeholder"):
        PromptTemplate("x", Category.HYBRID, "{context} {question} {foo}", ContextMode.MONOLITHIC)


def test_literal_braces_rejected():
    with pytest.raises(TemplateError, match="braces"):
        PromptTemplate("x", Category.HYBRID, "{context} {question} {\"a\": 1}", ContextMode.MONOLITHIC)


def test_mode_slot_mismatch_rejected():
    with pytest.raises(TemplateError):
        PromptTemplate("x", Category.HYBRID, "{context} {question}", ContextMode.ENUMERATED)
    with pytest.raises(TemplateError):
        PromptTemplate("x", Category.HYBRID, "{documents} {question}", ContextMode.MONOLITHIC)


def test_file_round_trip():
    for t in registry():
        assert parse_template_text(template_to_text(t)) == t


def test_load_template_dir(tmp_path):
    (tmp_path / "custom.txt").write_text(
        "id: my_prompt\ncategory: hybrid\ncontext_mode: enumerated\ndoc_label_style: NUM_BRACKET\n---\n"
        "Docs:\n{documents}\nQ: {question}\nA:\n",
        encoding="utf-8",
    )
    [tpl] = load_template_dir(tmp_path)
    assert tpl.id == "my_prompt" and not tpl.reconstructed
    inst = BenchmarkInstance("i", "Why?", "x", ("one", "two"))
    assert render(tpl, inst).text == "Docs:\n[1] one\n[2] two\nQ: Why?\nA:"


def test_load_template_dir_missing_header(tmp_path):
    (tmp_path / "bad.txt").write_text("id: x\n---\n{context} {question}")
    with pytest.raises(TemplateError, match="category"):
        load_template_dir(tmp_path)


doc_text = st.text(st.characters(blacklist_categories=("Cs",)), min_size=1, max_size=40).filter(
    lambda s: s.strip()
)
question_text = st.text(
    st.characters(blacklist_categories=("Cs",), blacklist_characters="\r"), min_size=3, max_size=40
).filter(lambda s: s.strip())


@settings(max_examples=50, deadline=None)
@given(question=question_text, docs=st.lists(doc_text, min_size=1, max_size=5))
def test_render_property_all_templates(question, docs):
    inst = BenchmarkInstance("p", question, "gt", tuple(docs))
    for t in registry():
        first = render(t, inst)
        assert first.text == render(t, inst).text
        # the question text appears in the question slot, and the body minus slots
        # does not contain it elsewhere
        if question not in t.body and all(question not in d for d in docs):
            assert first.text.count(question) == 1
