#include <doctest.h>

#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "docrec/train.hpp"
#include "harness.hpp"

using namespace docrec;

namespace {

RunSetup tiny_setup(Domain d, Bias b) {
    RunSetup s;
    s.engine = harness::small_engine(d);
    s.bias = b;
    s.model = ModelConfig::tiny();
    s.train.batch_size = 2;
    s.train.steps = 4;
    s.train.seed = 3;
    s.train.data_seed = 100;
    return s;
}

}  // namespace

TEST_CASE("global norm clipping") {
    ParameterSet<float> p;
    p.add("a", 2, 2);
    p.add("b", 1, 3);
    p.zero_grads();
    p.grads["a"](0, 0) = 6.0f;
    p.grads["b"](0, 2) = 8.0f;
    CHECK(global_grad_norm(p) == doctest::Approx(10.0));
    const double before = clip_grad_norm(p, 0.1);
    CHECK(before == doctest::Approx(10.0));
    CHECK(global_grad_norm(p) == doctest::Approx(0.1).epsilon(1e-6));
    CHECK(p.grads["a"](0, 0) / p.grads["b"](0, 2) == doctest::Approx(0.75));
    // Below the threshold nothing changes.
    p.grads["a"](0, 0) = 0.01f;
    p.grads["b"](0, 2) = 0.0f;
    clip_grad_norm(p, 0.1);
    CHECK(p.grads["a"](0, 0) == 0.01f);
}

TEST_CASE("adamw matches a hand-computed trajectory") {
    TrainConfig cfg;
    cfg.lr = 0.01;
    cfg.weight_decay = 0.1;
    AdamW opt(cfg);
    ParameterSet<float> p;
    p.add("w", 1, 1);
    p.values["w"](0, 0) = 1.0f;
    double w = 1.0, m = 0.0, v = 0.0;
    const double grads[] = {0.5, -0.2, 0.3};
    for (int t = 1; t <= 3; ++t) {
        const double g = grads[t - 1];
        p.grads["w"](0, 0) = static_cast<float>(g);
        opt.update(p);
        w *= 1.0 - cfg.lr * cfg.weight_decay;
        m = 0.9 * m + 0.1 * g;
        v = 0.98 * v + 0.02 * g * g;
        const double mh = m / (1 - std::pow(0.9, t)), vh = v / (1 - std::pow(0.98, t));
        w -= cfg.lr * mh / (std::sqrt(vh) + 1e-9);
        CHECK(p.values["w"](0, 0) == doctest::Approx(w).epsilon(1e-6));
    }
}

TEST_CASE("train config defaults") {
    const TrainConfig c;
    CHECK(c.batch_size == 32);
    CHECK(c.lr == 1e-4);
    CHECK(c.beta1 == 0.9);
    CHECK(c.beta2 == 0.98);
    CHECK(c.eps == 1e-9);
    CHECK(c.clip_norm == 0.1);
    CHECK(c.weight_decay == 0.004);
}

TEST_CASE("sample seeds cycle through a fixed dataset") {
    TrainConfig cfg;
    cfg.batch_size = 4;
    cfg.data_seed = 10;
    cfg.dataset_size = 6;
    CHECK(sample_seed(cfg, 0, 0) == 10);
    CHECK(sample_seed(cfg, 1, 1) == 15);
    CHECK(sample_seed(cfg, 1, 2) == 10);
    cfg.dataset_size = 0;
    CHECK(sample_seed(cfg, 3, 1) == 23);
    CHECK(plan_seed(5, 1, 0) != plan_seed(5, 2, 0));
}

TEST_CASE("run setup json round trip and overrides") {
    auto s = tiny_setup(Domain::LShape, Bias::Graph);
    s.engine.lshape.annotation_probability = 0.5;
    s.train.lr = 3e-4;
    const auto text = setup_to_json(s);
    const auto back = setup_from_json(text);
    CHECK(setup_to_json(back) == text);
    CHECK(back.model == s.model);
    const auto merged = merge_setup(back, R"({"train": {"steps": 77}, "bias": "graph"})");
    CHECK(merged.train.steps == 77);
    CHECK(merged.train.lr == 3e-4);
    CHECK_THROWS(setup_from_json(R"({"trian": {}})"));
    CHECK_THROWS(merge_setup(back, R"({"model": {"preset": "huge"}})"));
    CHECK(setup_from_json(R"({"model": {"preset": "full"}})").model == ModelConfig::full());
}

TEST_CASE("resume reproduces an uninterrupted run bit for bit") {
    for (auto [d, b] : {std::pair{Domain::Music, Bias::Seq}, {Domain::Shapes, Bias::Set}, {Domain::LShape, Bias::Graph}}) {
        const auto setup = tiny_setup(d, b);
        Trainer full(setup);
        full.run(nullptr, "");
        Trainer first(setup);
        first.step();
        first.step();
        const auto bytes = encode_checkpoint(first.checkpoint());
        Trainer resumed = Trainer::resume(decode_checkpoint(bytes));
        CHECK(resumed.steps_done() == 2);
        resumed.run(nullptr, "");
        CHECK(resumed.network().params().values == full.network().params().values);
        CHECK(encode_checkpoint(resumed.checkpoint()) == encode_checkpoint(full.checkpoint()));
    }
}

TEST_CASE("metrics lines") {
    auto setup = tiny_setup(Domain::Shapes, Bias::SeqOnSet);
    setup.train.steps = 3;
    Trainer t(setup);
    std::ostringstream out;
    t.run(&out, "");
    std::istringstream in(out.str());
    std::string line;
    long long last = 0;
    int lines = 0;
    while (std::getline(in, line)) {
        const auto j = nlohmann::json::parse(line);
        CHECK(j.at("step").get<long long>() == last + 1);
        last = j.at("step").get<long long>();
        CHECK(std::isfinite(j.at("loss").get<double>()));
        CHECK(j.at("components").size() == 2);  // next, eos
        CHECK(j.contains("wall_s"));
        ++lines;
    }
    CHECK(lines == 3);
}

TEST_CASE("non-finite loss aborts with the batch seeds") {
    const auto setup = tiny_setup(Domain::Music, Bias::Seq);
    Trainer t(setup);
    t.network().params().at("head.type.b")(0, 0) = std::nanf("");
    try {
        t.step();
        FAIL("expected NonFiniteLoss");
    } catch (const NonFiniteLoss& e) {
        CHECK(e.step() == 0);
        CHECK(e.seeds() == std::vector<std::uint64_t>{100, 101});
    }
}

TEST_CASE("a model that emits EOS first decodes the empty record") {
    for (auto [d, b] : {std::pair{Domain::Music, Bias::Seq}, {Domain::Shapes, Bias::Set}, {Domain::LShape, Bias::Graph}}) {
        Network<float> net(ModelConfig::tiny(), schema_for(d));
        net.params().at("head.type.b")(0, schema_for(d).eos_type()) = 1e4f;
        const auto sample = make_sample(harness::small_engine(d), 1);
        const auto res = infer(net, b, schema_for(d), sample.patches);
        CHECK(res.record.nodes.empty());
        CHECK(res.record.relationships.empty());
        CHECK(res.steps.size() == 1);
        CHECK_FALSE(res.truncated);
    }
}

TEST_CASE("greedy decoding is deterministic and honours the limit") {
    Network<float> net(ModelConfig::tiny(), shapes_schema());
    net.init(21);
    net.params().at("head.type.b")(0, shapes_schema().eos_type()) = -1e4f;
    const auto sample = make_sample(harness::small_engine(Domain::Shapes), 2);
    const auto a = infer(net, Bias::Set, shapes_schema(), sample.patches, 4);
    const auto b = infer(net, Bias::Set, shapes_schema(), sample.patches, 4);
    CHECK(a.record == b.record);
    CHECK(a.truncated);
    CHECK(a.decoded.size() == 4);
}

TEST_CASE("incremental decoding agrees with the full plan") {
    for (auto [d, b] : {std::pair{Domain::Music, Bias::Seq}, {Domain::Shapes, Bias::Set}, {Domain::LShape, Bias::Graph},
                        {Domain::Music, Bias::SetOnSeq}, {Domain::Shapes, Bias::SeqOnSet}}) {
        const auto ms = model_schema(b, schema_for(d));
        Network<float> net(ModelConfig::tiny(), ms);
        net.init(31);
        net.params().at("head.type.b")(0, ms.eos_type()) = -1e4f;
        const auto sample = make_sample(harness::small_engine(d), 5);
        const auto res = infer(net, b, schema_for(d), sample.patches, 5);
        REQUIRE(res.decoded.size() == 5);
        const auto full = plan_in_order(b, ms, res.decoded);
        Session<float> s(net.params());
        const auto fwd = forward_plans(s, net, {&sample.patches}, {full}, true);
        const int C = net.layout().coord_heads;
        const auto full_logits = harness::position_logits(fwd, 0, full.length(), sample.patches.count(), C);
        const bool interleaved = b != Bias::Seq && b != Bias::SeqOnSet;
        for (std::size_t i = 0; i <= res.decoded.size(); ++i) {
            const std::vector<Node> prefix(res.decoded.begin(), res.decoded.begin() + static_cast<std::ptrdiff_t>(i));
            const auto plan = plan_in_order(b, ms, prefix);
            Session<float> ps(net.params());
            const auto step = forward_plans(ps, net, {&sample.patches}, {plan}, true);
            const auto logits = harness::position_logits(step, 0, plan.length(), sample.patches.count(), C);
            const auto pos = interleaved ? 2 * i : i;
            const auto& want = full_logits[pos];
            const auto& got = logits.back();
            REQUIRE(want.size() == got.size());
            double worst = 0.0;
            for (std::size_t j = 0; j < got.size(); ++j) worst = std::max(worst, std::fabs(got[j] - want[j]));
            CHECK(worst <= 1e-5);
            if (i < res.steps.size()) {
                for (std::size_t t = 0; t < res.steps[i].type_dist.size(); ++t) {
                    CHECK(std::fabs(res.steps[i].type_dist[t] - step.predictions[0].back().type_dist[t]) <= 1e-6);
                }
            }
        }
    }
}

TEST_CASE("decoded coordinates sit on pixel centers") {
    Network<float> net(ModelConfig::tiny(), lshape_schema());
    net.init(41);
    net.params().at("head.type.b")(0, lshape_schema().eos_type()) = -1e4f;
    const auto sample = make_sample(harness::small_engine(Domain::LShape), 3);
    const auto res = infer(net, Bias::Graph, lshape_schema(), sample.patches, 6);
    for (const auto& n : res.decoded) {
        for (double v : n.continuous) CHECK(std::fabs(v * 140 - 0.5 - std::floor(v * 140)) < 1e-9);
    }
}
