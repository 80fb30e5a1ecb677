#include "doctest.h"

#include <cmath>
#include <random>

#include "mkgc/task_heads.hpp"
#include "mkgc/verify.hpp"

using namespace mkgc;

TEST_SUITE_BEGIN("task_heads");

TEST_CASE("templates instantiate the fixed prompt forms") {
    EntityVocabulary entities;
    EntityRecord rec;
    rec.id = "superman_returns";
    rec.name = "Superman Returns";
    rec.desc_tokens = tokenize("Superman Returns film");
    entities.add(rec);
    EntityRecord blank;
    blank.id = "blank";
    entities.add(blank);

    Vocabulary vocab;
    register_template_words(vocab);
    vocab.add_words(rec.desc_tokens);
    vocab.add_words({"director"});
    vocab.register_entities({"superman_returns", "blank"});

    const auto tpl = build_entity_modeling_input(entities, 0, vocab);
    REQUIRE(tpl.token_ids.size() == 10);
    CHECK(tpl.mask_index == 8);
    CHECK(tpl.token_ids.front() == Vocabulary::kCls);
    CHECK(tpl.token_ids[tpl.mask_index] == Vocabulary::kMask);
    CHECK(tpl.token_ids.back() == Vocabulary::kSep);
    CHECK(vocab.token(tpl.token_ids[1]) == "superman");

    const auto empty_tpl = build_entity_modeling_input(entities, 1, vocab);
    CHECK(empty_tpl.token_ids.size() == 7);
    CHECK(empty_tpl.mask_index == 5);

    for (auto dir : {QueryDirection::tail, QueryDirection::head}) {
        const auto q = build_triple_query_input(entities, 0, {"director"}, vocab, dir);
        std::size_t seps = 0, masks = 0;
        for (int id : q.token_ids) {
            seps += id == Vocabulary::kSep;
            masks += id == Vocabulary::kMask;
        }
        CHECK(seps == 3);
        CHECK(masks == 1);
        CHECK(q.token_ids[q.mask_index] == Vocabulary::kMask);
    }
    const auto tail_q = build_triple_query_input(entities, 0, {"director"}, vocab,
                                                 QueryDirection::tail);
    CHECK(vocab.token(tail_q.token_ids[1]) == "<superman_returns>");
}

TEST_CASE("masked entity logits are dot products") {
    std::mt19937_64 rng(31);
    std::normal_distribution<double> dist(0.0, 1.0);
    Matrix2D rows(5, 6);
    for (double& v : rows.data) v = dist(rng);
    Matrix2D h(1, 6);
    for (double& v : h.data) v = dist(rng);
    const Matrix2D logits = masked_entity_logits(h, rows);
    REQUIRE(logits.cols == 5);
    for (std::size_t e = 0; e < 5; ++e) {
        double dot = 0.0;
        for (std::size_t j = 0; j < 6; ++j) dot += h(0, j) * rows(e, j);
        CHECK(logits(0, e) == doctest::Approx(dot).epsilon(1e-12));
    }
    CHECK(max_abs_diff(masked_entity_logits(Matrix2D(1, 6), rows), Matrix2D(1, 5)) == 0.0);

    // ranking is invariant under positive rescaling of the state
    Matrix2D h2 = scale(h, 3.7);
    const Matrix2D logits2 = masked_entity_logits(h2, rows);
    std::size_t best1 = 0, best2 = 0;
    for (std::size_t e = 1; e < 5; ++e) {
        if (logits(0, e) > logits(0, best1)) best1 = e;
        if (logits2(0, e) > logits2(0, best2)) best2 = e;
    }
    CHECK(best1 == best2);
}

TEST_CASE("relation classification is a softmax distribution") {
    RelationLabelSet labels;
    labels.names = {"a", "b", "c", "d"};
    labels.weight = Parameter("w", 6, 4);
    std::mt19937_64 rng(32);
    std::normal_distribution<double> dist(0.0, 1.0);
    for (double& v : labels.weight.value.data) v = dist(rng);
    Matrix2D h(1, 6);
    for (double& v : h.data) v = dist(rng);

    const Matrix2D p = relation_classify(h, labels);
    double sum = 0.0;
    for (std::size_t j = 0; j < 4; ++j) {
        CHECK(p(0, j) >= 0.0);
        sum += p(0, j);
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(labels.index_of("c") == 2);
    CHECK_THROWS_AS(labels.index_of("nope"), vocab_error);
}

TEST_CASE("crf closed forms") {
    CRFParams p("p", 4, {"O", "B-A"});
    fill(p.transitions.value, 0.0);
    Matrix2D e1(1, 2);
    e1(0, 0) = 1.0;
    e1(0, 1) = 2.0;
    CHECK(crf_log_partition(e1, p) ==
          doctest::Approx(std::log(std::exp(1.0) + std::exp(2.0))).epsilon(1e-12));

    Matrix2D e2(3, 2, 0.0);
    CHECK(crf_log_partition(e2, p) == doctest::Approx(3.0 * std::log(2.0)).epsilon(1e-12));
    CHECK(crf_nll(e2, {0, 1, 0}, p) == doctest::Approx(3.0 * std::log(2.0)).epsilon(1e-12));

    CRFParams single("s", 4, {"O"});
    fill(single.transitions.value, 0.0);
    CHECK(crf_nll(Matrix2D(2, 1, 0.4), {0, 0}, single) == doctest::Approx(0.0).epsilon(1e-12));

    // n = 1 viterbi is the emissions argmax
    CHECK(crf_viterbi(e1, p) == std::vector<int>{1});
}

TEST_CASE("crf matches the exhaustive oracle on random instances") {
    std::mt19937_64 rng(33);
    std::normal_distribution<double> dist(0.0, 1.5);
    const std::vector<std::vector<std::string>> tag_sets = {
        {"O"}, {"O", "B-A"}, {"O", "B-A", "I-A"}, {"O", "B-A", "I-A", "B-B"}};
    for (int it = 0; it < 40; ++it) {
        const std::size_t n = 1 + rng() % 4;
        const std::size_t y = 1 + rng() % 4;
        CRFParams params("c", 4, tag_sets[y - 1]);
        for (double& v : params.transitions.value.data) v = dist(rng);
        Matrix2D emissions(n, y);
        for (double& v : emissions.data) v = dist(rng);
        const Matrix2D trans = params.effective_transitions();
        CHECK(std::fabs(crf_log_partition(emissions, params) -
                        verify::brute_force_log_partition(emissions, trans)) <= 1e-8);
        CHECK(crf_viterbi(emissions, params) == verify::brute_force_viterbi(emissions, trans));
    }
}

TEST_CASE("viterbi ties break toward the lower tag index at each backpointer") {
    // (0,1) and (1,0) tie as maximizers; the backpointer rule keeps the
    // lower tag at the last position, decoding (1,0).
    CRFParams p("p", 4, {"O", "B-A"});
    fill(p.transitions.value, 0.0);
    p.transitions.value(0, 1) = 1.0;
    p.transitions.value(1, 0) = 1.0;
    Matrix2D e(2, 2, 0.0);
    const auto got = crf_viterbi(e, p);
    CHECK(got == std::vector<int>{1, 0});
    CHECK(got == verify::brute_force_viterbi(e, p.effective_transitions()));

    // full tie: everything zero decodes to the all-lowest sequence
    CRFParams z("z", 4, {"O", "B-A", "I-A"});
    fill(z.transitions.value, 0.0);
    Matrix2D e3(3, 3, 0.0);
    CHECK(crf_viterbi(e3, z) == std::vector<int>{0, 0, 0});
    CHECK(verify::brute_force_viterbi(e3, z.effective_transitions()) ==
          std::vector<int>{0, 0, 0});
}

TEST_CASE("dominant diagonal transitions lock the decoded tag") {
    CRFParams p("p", 4, {"O", "B-A", "I-A"});
    fill(p.transitions.value, 0.0);
    for (int i = 0; i < 3; ++i) p.transitions.value(i, i) = 5.0;
    Matrix2D e(4, 3);
    for (std::size_t t = 0; t < 4; ++t) e(t, 1) = 2.0; // tag 1 dominates emissions
    const auto tags = crf_viterbi(e, p);
    CHECK(tags == std::vector<int>(4, 1));
}

TEST_CASE("bio validation") {
    const std::vector<std::string> names = {"O", "B-A", "I-A", "B-B", "I-B"};
    CHECK(bio_sequence_valid(names, {0, 1, 2, 0}));
    CHECK(bio_sequence_valid(names, {1, 2, 2, 3, 4}));
    CHECK_FALSE(bio_sequence_valid(names, {2}));          // opens with I-A
    CHECK_FALSE(bio_sequence_valid(names, {0, 2}));       // O -> I-A
    CHECK_FALSE(bio_sequence_valid(names, {1, 4}));       // B-A -> I-B
    CHECK_FALSE(bio_sequence_valid(names, {0, 9}));       // out of range

    CRFParams hard("h", 4, names);
    hard.hard_constraints = true;
    std::mt19937_64 rng(34);
    std::normal_distribution<double> dist(0.0, 1.0);
    for (double& v : hard.transitions.value.data) v = dist(rng);
    Matrix2D e(3, 5);
    for (double& v : e.data) v = dist(rng);
    CHECK_THROWS_AS(crf_nll(e, {0, 2, 0}, hard), value_error);
    // decoding under hard constraints only yields legal sequences
    for (int it = 0; it < 20; ++it) {
        for (double& v : e.data) v = dist(rng);
        CHECK(bio_sequence_valid(names, crf_viterbi(e, hard)));
    }
}

TEST_CASE("span extraction") {
    using Spans = std::vector<Span>;
    CHECK(extract_spans({"O", "O"}) == Spans{});
    CHECK(extract_spans({"B-A", "I-A", "O"}) == Spans{{0, 2, "A"}});
    CHECK(extract_spans({"B-A", "B-A"}) == Spans{{0, 1, "A"}, {1, 2, "A"}});
    // orphan I opens a span; type switches split spans
    CHECK(extract_spans({"O", "I-B", "I-B", "I-A"}) == Spans{{1, 3, "B"}, {3, 4, "A"}});
}

TEST_SUITE_END();
