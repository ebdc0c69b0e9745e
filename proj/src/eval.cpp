#include "docrec/eval.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <nlohmann/json.hpp>
#include <ostream>
#include <sstream>

namespace docrec {

using nlohmann::json;

std::string_view to_string(FailureCategory c) {
    switch (c) {
        case FailureCategory::None: return "none";
        case FailureCategory::WrongCount: return "wrong_count";
        case FailureCategory::TypeError: return "type_error";
        case FailureCategory::PropertyError: return "property_error";
        case FailureCategory::StructureError: return "structure_error";
    }
    return "unknown";
}

FailureCategory classify(const RecordSchema& schema, const Record& truth, const Record& pred, double eps, bool ordered) {
    if (record_equal(schema, truth, pred, eps, ordered)) return FailureCategory::None;
    if (truth.nodes.size() != pred.nodes.size() || truth.relationships.size() != pred.relationships.size()) {
        return FailureCategory::WrongCount;
    }
    auto types = [](const auto& items) {
        std::vector<int> t;
        for (const auto& n : items) t.push_back(n.type);
        return t;
    };
    auto ta = types(truth.nodes), tb = types(pred.nodes);
    auto ra = types(truth.relationships), rb = types(pred.relationships);
    if (!ordered) {
        std::sort(ta.begin(), ta.end());
        std::sort(tb.begin(), tb.end());
    }
    std::sort(ra.begin(), ra.end());
    std::sort(rb.begin(), rb.end());
    if (ta != tb || ra != rb) return FailureCategory::TypeError;
    const Record na{truth.nodes, {}};
    const Record nb{pred.nodes, {}};
    if (!record_equal(schema, na, nb, eps, ordered)) return FailureCategory::PropertyError;
    return FailureCategory::StructureError;
}

AccuracyResult summarize(std::vector<ItemVerdict> items) {
    AccuracyResult r;
    int correct = 0;
    for (const auto& v : items) {
        correct += v.correct ? 1 : 0;
        if (!v.correct) ++r.failures[v.category];
        auto& bucket = r.by_length[v.truth_nodes];
        bucket.first += v.correct ? 1 : 0;
        bucket.second += 1;
    }
    r.accuracy = items.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(items.size());
    r.items = std::move(items);
    return r;
}

AccuracyResult transcription_accuracy(const Network<float>& net, Bias bias, const RecordSchema& schema,
                                      const std::vector<Sample>& samples, double eps) {
    const bool ordered = schema.structure == RecordStructure::Sequence;
    std::vector<ItemVerdict> items;
    for (const auto& s : samples) {
        const auto res = infer(net, bias, schema, s.patches);
        ItemVerdict v;
        v.seed = s.seed;
        v.category = classify(schema, s.record, res.record, eps, ordered);
        v.correct = v.category == FailureCategory::None;
        v.truth_nodes = static_cast<int>(s.record.nodes.size() + s.record.relationships.size());
        v.predicted_nodes = static_cast<int>(res.record.nodes.size() + res.record.relationships.size());
        v.truncated = res.truncated;
        items.push_back(v);
    }
    return summarize(std::move(items));
}

std::vector<Sample> make_samples(const EngineConfig& engine, std::uint64_t seed_begin, int count) {
    std::vector<Sample> out;
    out.reserve(static_cast<std::size_t>(std::max(0, count)));
    for (int i = 0; i < count; ++i) out.push_back(make_sample(engine, seed_begin + static_cast<std::uint64_t>(i)));
    return out;
}

namespace {

json accuracy_to_json(const AccuracyResult& r) {
    json failures = json::object();
    for (const auto& [c, n] : r.failures) failures[std::string(to_string(c))] = n;
    json lengths = json::object();
    for (const auto& [len, cnt] : r.by_length) lengths[std::to_string(len)] = {{"correct", cnt.first}, {"total", cnt.second}};
    json items = json::array();
    for (const auto& v : r.items) {
        items.push_back({{"seed", v.seed},
                         {"correct", v.correct},
                         {"category", std::string(to_string(v.category))},
                         {"truth_nodes", v.truth_nodes},
                         {"predicted_nodes", v.predicted_nodes},
                         {"truncated", v.truncated}});
    }
    return {{"accuracy", r.accuracy}, {"count", r.items.size()}, {"failures", failures}, {"by_length", lengths},
            {"items", items}};
}

}  // namespace

std::string accuracy_json(const AccuracyResult& r) { return accuracy_to_json(r).dump(); }

std::vector<std::pair<Domain, Bias>> ablation_cells() {
    return {{Domain::Music, Bias::Seq},
            {Domain::Music, Bias::SetOnSeq},
            {Domain::Shapes, Bias::SeqOnSet},
            {Domain::Shapes, Bias::Set},
            {Domain::LShape, Bias::Graph}};
}

const AblationCell* AblationReport::find(Domain d, Bias b) const {
    for (const auto& c : cells) {
        if (c.domain == d && c.bias == b) return &c;
    }
    return nullptr;
}

AblationReport run_ablation_grid(const AblationConfig& cfg, const std::vector<std::pair<Domain, Bias>>& only,
                                 std::ostream* log) {
    AblationReport report;
    for (const auto& [domain, bias] : ablation_cells()) {
        if (!only.empty() && std::find(only.begin(), only.end(), std::make_pair(domain, bias)) == only.end()) continue;
        RunSetup setup = cfg.base;
        setup.engine = domain == Domain::Music ? cfg.music : domain == Domain::Shapes ? cfg.shapes : cfg.lshape;
        setup.engine.domain = domain;
        setup.bias = bias;
        Trainer trainer(setup);
        const std::string tag = std::string(to_string(domain)) + "_" + std::string(to_string(bias));
        std::ofstream metrics;
        std::string ckpt;
        if (!cfg.run_dir.empty()) {
            metrics.open(cfg.run_dir + "/" + tag + ".metrics.ndjson");
            ckpt = cfg.run_dir + "/" + tag + ".ckpt";
        }
        trainer.run(metrics.is_open() ? &metrics : nullptr, ckpt, [&](const StepMetrics& m) {
            if (log && (m.step % 500 == 0)) *log << tag << " step " << m.step << " loss " << m.loss << std::endl;
        });
        const auto samples = make_samples(setup.engine, cfg.eval_seed, cfg.eval_count);
        AblationCell cell;
        cell.domain = domain;
        cell.bias = bias;
        cell.steps = setup.train.steps;
        cell.batch_size = setup.train.batch_size;
        cell.parameters = trainer.network().params().scalar_count();
        cell.result = transcription_accuracy(trainer.network(), bias, schema_for(domain), samples, default_eps(domain));
        cell.accuracy = cell.result.accuracy;
        if (log) *log << tag << " accuracy " << cell.accuracy << std::endl;
        report.cells.push_back(std::move(cell));
    }
    return report;
}

std::string format_ablation_table(const AblationReport& report) {
    std::ostringstream ss;
    const std::pair<const char*, Domain> rows[] = {{"seq", Domain::Music}, {"set", Domain::Shapes}, {"graph", Domain::LShape}};
    ss << "record \\ bias |      seq |      set |    graph\n";
    ss << "--------------+----------+----------+---------\n";
    for (const auto& [label, domain] : rows) {
        ss << std::left << std::setw(13) << label << " |";
        for (const char* col : {"seq", "set", "graph"}) {
            Bias b = parse_bias(col);
            if (domain == Domain::Music && b == Bias::Set) b = Bias::SetOnSeq;
            if (domain == Domain::Shapes && b == Bias::Seq) b = Bias::SeqOnSet;
            const auto* cell = report.find(domain, b);
            std::ostringstream v;
            if (cell) {
                v << std::fixed << std::setprecision(1) << 100.0 * cell->accuracy << " %";
            } else {
                v << "-";
            }
            ss << std::right << std::setw(9) << v.str() << (std::string(col) == "graph" ? "" : " |");
        }
        ss << '\n';
    }
    if (!report.cells.empty()) {
        const auto& c = report.cells.front();
        ss << "budget: " << c.steps << " steps x batch " << c.batch_size << ", " << c.parameters << " parameters\n";
    }
    for (const auto& c : report.cells) {
        ss << to_string(c.domain) << '/' << to_string(c.bias) << " by length:";
        for (const auto& [len, cnt] : c.result.by_length) ss << ' ' << len << ':' << cnt.first << '/' << cnt.second;
        ss << '\n';
    }
    return ss.str();
}

std::string ablation_json(const AblationReport& report) {
    json cells = json::array();
    for (const auto& c : report.cells) {
        json j = accuracy_to_json(c.result);
        j.erase("items");
        j["domain"] = std::string(to_string(c.domain));
        j["bias"] = std::string(to_string(c.bias));
        j["steps"] = c.steps;
        j["batch_size"] = c.batch_size;
        j["parameters"] = c.parameters;
        cells.push_back(j);
    }
    return json{{"cells", cells}}.dump(2);
}

DocumentImage render_prediction_overlay(Domain domain, const Record& truth, const Record& pred, const RenderStyle& style) {
    const auto a = render_record(domain, truth, style);
    const auto b = render_record(domain, pred, style);
    DocumentImage out(std::max(a.width, b.width), std::max(a.height, b.height), 255);
    for (int y = 0; y < out.height; ++y) {
        for (int x = 0; x < out.width; ++x) {
            const bool in_a = a.contains(x, y) && a.at(x, y) < 255;
            const bool in_b = b.contains(x, y) && b.at(x, y) < 255;
            if (in_a && in_b) {
                out.at(x, y) = overlay_tone::kBoth;
            } else if (in_a) {
                out.at(x, y) = overlay_tone::kTruthOnly;
            } else if (in_b) {
                out.at(x, y) = overlay_tone::kPredictionOnly;
            }
        }
    }
    return out;
}

}  // namespace docrec
