#include <doctest.h>

#include <cmath>
#include <string>

#include "docrec/engines.hpp"
#include "docrec/record.hpp"
#include "docrec/record_io.hpp"
#include "oracles.hpp"

using namespace docrec;

namespace {

const RecordSchema* const kSchemas[] = {&music_schema(), &shapes_schema(), &lshape_schema()};

RecordSchema toy_schema() {
    RecordSchema s;
    s.name = "toy";
    s.structure = RecordStructure::Graph;
    s.types = {{"a", {}, {}, 0, true}, {"b", {}, {}, 0, true}, {"c", {}, {}, 0, true},
               {"edge", {}, {}, 2, true}};
    s.max_nodes = 8;
    return s;
}

}  // namespace

TEST_CASE("node_equal examples") {
    const auto& s = shapes_schema();
    // Pixel centers, so the argmax reconstruction is exact.
    Node line{shapes::kLine, {}, {70.5 / 280, 140.5 / 280, 210.5 / 280, 140.5 / 280}};
    CHECK(node_equal(s, line, line, 0.0));
    Node moved = line;
    moved.continuous[0] += 3.0 / 280.0;
    CHECK(node_equal(s, line, moved, 4.0 / 280.0));
    CHECK_FALSE(node_equal(s, line, moved, 2.0 / 280.0));
    Node circle{shapes::kCircle, {}, line.continuous};
    CHECK_FALSE(node_equal(s, line, circle, 1.0));
    Node bad{shapes::kLine, {}, {0.1}};
    CHECK_THROWS_AS(node_equal(s, line, bad, 0.0), InvalidInput);
}

TEST_CASE("record_equal examples") {
    const auto s = toy_schema();
    Record r{{{0, {}, {}}, {1, {}, {}}, {2, {}, {}}}, {{3, {0, 1}, {}, {}}}};
    Record reversed{{{2, {}, {}}, {1, {}, {}}, {0, {}, {}}}, {{3, {2, 1}, {}, {}}}};
    CHECK(record_equal(s, r, reversed, 0.0, false));
    CHECK_FALSE(record_equal(s, r, reversed, 0.0, true));

    Record fwd{{{0, {}, {}}, {0, {}, {}}}, {{3, {0, 1}, {}, {}}}};
    Record bwd{{{0, {}, {}}, {0, {}, {}}}, {{3, {1, 0}, {}, {}}}};
    // Identical nodes: the swap bijection maps 0->1 onto 1->0, so these are isomorphic.
    CHECK(record_equal(s, fwd, bwd, 0.0, false));
    Record fwd2{{{0, {}, {}}, {1, {}, {}}}, {{3, {0, 1}, {}, {}}}};
    Record bwd2{{{0, {}, {}}, {1, {}, {}}}, {{3, {1, 0}, {}, {}}}};
    CHECK_FALSE(record_equal(s, fwd2, bwd2, 0.0, false));
    CHECK(record_equal(s, Record{}, Record{}, 0.0, false));
    CHECK(record_equal(s, Record{}, Record{}, 0.0, true));
}

TEST_CASE("directed two-node edge reversal matches brute force") {
    const auto s = toy_schema();
    Record fwd{{{0, {}, {}}, {0, {}, {}}}, {{3, {0, 1}, {}, {}}}};
    Record bwd{{{0, {}, {}}, {0, {}, {}}}, {{3, {1, 0}, {}, {}}}};
    CHECK(record_equal(s, fwd, bwd, 0.0, false) == oracle::brute_force_equal(s, fwd, bwd, 0.0, false));
}

TEST_CASE("record_equal is reflexive and symmetric on generated records") {
    for (const auto* s : kSchemas) {
        CounterRng rng(101);
        for (int i = 0; i < 1000; ++i) {
            const auto a = oracle::random_record(*s, rng, 6, 4);
            const auto b = i % 2 ? oracle::shuffled(*s, a, rng) : oracle::mutated(*s, a, rng, 0.01);
            CHECK(record_equal(*s, a, a, 0.0, false));
            CHECK(record_equal(*s, a, a, 0.0, true));
            CHECK(record_equal(*s, a, b, 0.01, false) == record_equal(*s, b, a, 0.01, false));
        }
    }
}

TEST_CASE("unordered record_equal agrees with exhaustive matching") {
    for (const auto* s : kSchemas) {
        CounterRng rng(202);
        int equal = 0;
        for (int i = 0; i < 300; ++i) {
            const auto a = oracle::random_record(*s, rng, 5, 3);
            auto b = oracle::shuffled(*s, a, rng);
            if (i % 3 == 0) b = oracle::mutated(*s, b, rng, 0.01);
            const bool got = record_equal(*s, a, b, 0.01, false);
            CHECK(got == oracle::brute_force_equal(*s, a, b, 0.01, false));
            CHECK(record_equal(*s, a, b, 0.01, true) == oracle::brute_force_equal(*s, a, b, 0.01, true));
            equal += got ? 1 : 0;
        }
        CHECK(equal > 0);
        CHECK(equal < 300);
    }
}

TEST_CASE("node_dissimilarity examples") {
    const auto s = toy_schema();
    NodePrediction uniform;
    uniform.type_dist = {0.25, 0.25, 0.25, 0.25, 0.0};
    uniform.discrete.resize(4);
    uniform.points.resize(4);
    uniform.discrete[3] = {std::vector<double>(8, 0.125), std::vector<double>(8, 0.125)};
    CHECK(node_dissimilarity(s, Node{1, {}, {}}, uniform) == doctest::Approx(std::log(4.0)).epsilon(1e-12));

    const auto& sh = shapes_schema();
    // Pixel centers, so the argmax reconstruction is exact.
    Node line{shapes::kLine, {}, {70.5 / 280, 140.5 / 280, 210.5 / 280, 140.5 / 280}};
    PatchSet ps;
    ps.image_width = ps.image_height = 280;
    ps.grid_rows = ps.grid_cols = 28;
    for (int r = 0; r < 28; ++r) {
        for (int c = 0; c < 28; ++c) {
            ps.rows.push_back(r);
            ps.cols.push_back(c);
        }
    }
    ps.values.assign(ps.rows.size() * 100, 0.0f);
    auto perfect = oracle::perfect_prediction(sh, ps, line);
    CHECK(node_dissimilarity(sh, line, perfect) == 0.0);
    perfect.points[shapes::kLine][0].x += 0.1;
    CHECK(node_dissimilarity(sh, line, perfect) == doctest::Approx(0.01).epsilon(1e-9));
}

TEST_CASE("node_dissimilarity is non-negative and matches the oracle") {
    for (const auto* s : kSchemas) {
        CounterRng rng(303);
        for (int i = 0; i < 200; ++i) {
            const auto ps = oracle::random_patches(rng, 60, 40);
            const auto pred = oracle::random_prediction(*s, ps, rng);
            const int type = rng.range(0, s->type_count());
            const Node target = type == s->type_count() ? Node{type, {}, {}} : oracle::random_node(*s, type, rng);
            const double d = node_dissimilarity(*s, target, pred);
            CHECK(d >= 0.0);
            CHECK(d == doctest::Approx(oracle::dissimilarity(*s, target, pred)).epsilon(1e-12));
        }
    }
}

TEST_CASE("serialization round trip is exact") {
    for (const auto* s : kSchemas) {
        CounterRng rng(404);
        for (int i = 0; i < 200; ++i) {
            Record r = oracle::random_record(*s, rng, 6, 4);
            for (auto& n : r.nodes) {
                for (auto& v : n.continuous) v = rng.uniform();
            }
            const auto text = serialize_record(*s, r);
            const auto back = parse_record(text, *s);
            CHECK(back == r);
            CHECK(serialize_record(*s, back) == text);
        }
    }
}

TEST_CASE("empty record serializes with empty lists") {
    const auto text = serialize_record(shapes_schema(), Record{});
    CHECK(text.find("\"nodes\":[]") != std::string::npos);
    CHECK(text.find("\"relationships\":[]") != std::string::npos);
}

TEST_CASE("malformed input reports a byte offset") {
    const auto& s = shapes_schema();
    try {
        parse_record("{\"schema\": \"shapes\", \"nodes\": [", s);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.offset() > 0);
    }
    CHECK_THROWS_AS(parse_record("{\"schema\":\"shapes\",\"nodes\":[{\"type\":\"line\",\"dprops\":[],\"cprops\":[0.5]}],"
                                 "\"relationships\":[]}",
                                 s),
                    InvalidInput);
}

TEST_CASE("validation rejects out-of-range values") {
    const auto& s = lshape_schema();
    Record r{{{lshape::kLine, {}, {0.1, 0.1, 0.2, 1.5}}}, {}};
    CHECK_THROWS_AS(validate_record(s, r), InvalidInput);
    Record dangling{{{lshape::kLine, {}, {0.1, 0.1, 0.2, 0.2}}}, {{lshape::kConnection, {0, 3}, {}, {}}}};
    CHECK_THROWS_AS(validate_record(s, dangling), InvalidInput);
}
