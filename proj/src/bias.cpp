#include "docrec/bias.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "docrec/rng.hpp"

namespace docrec {

std::string_view to_string(Bias b) {
    switch (b) {
        case Bias::Seq: return "seq";
        case Bias::Set: return "set";
        case Bias::Graph: return "graph";
        case Bias::SetOnSeq: return "set-on-seq";
        case Bias::SeqOnSet: return "seq-on-set";
    }
    return "unknown";
}

Bias parse_bias(std::string_view name) {
    for (Bias b : {Bias::Seq, Bias::Set, Bias::Graph, Bias::SetOnSeq, Bias::SeqOnSet}) {
        if (to_string(b) == name) return b;
    }
    throw InvalidInput("unknown bias '" + std::string(name) + "'");
}

Bias natural_bias(const RecordSchema& schema) {
    switch (schema.structure) {
        case RecordStructure::Sequence: return Bias::Seq;
        case RecordStructure::Set: return Bias::Set;
        case RecordStructure::Graph: return Bias::Graph;
    }
    return Bias::Set;
}

void check_bias(Bias bias, const RecordSchema& schema) {
    const auto s = schema.structure;
    const bool ok = (bias == Bias::Seq && s == RecordStructure::Sequence) ||
                    (bias == Bias::Set && s == RecordStructure::Set) ||
                    (bias == Bias::Graph && s == RecordStructure::Graph) ||
                    (bias == Bias::SetOnSeq && s == RecordStructure::Sequence) ||
                    (bias == Bias::SeqOnSet && s == RecordStructure::Set);
    if (!ok) {
        throw InvalidInput("bias '" + std::string(to_string(bias)) + "' does not apply to a " +
                           std::string(to_string(s)) + " schema");
    }
}

RecordSchema hpos_schema(const RecordSchema& schema) {
    RecordSchema out = schema;
    out.name = schema.name + "+hpos";
    for (auto& t : out.types) t.discrete.push_back({kHposProperty, schema.max_nodes});
    return out;
}

RecordSchema model_schema(Bias bias, const RecordSchema& schema) {
    return bias == Bias::SetOnSeq ? hpos_schema(schema) : schema;
}

namespace {

Token special(TokenKind kind, int position = -1) { return Token{kind, Node{}, position}; }

DecoderPlan sequence_plan(Bias bias, std::vector<Node> nodes, std::vector<int> permutation) {
    DecoderPlan plan;
    plan.bias = bias;
    const int m = static_cast<int>(nodes.size());
    plan.tokens.push_back(special(TokenKind::Bos, 0));
    for (int i = 0; i < m; ++i) plan.tokens.push_back({TokenKind::Node, nodes[static_cast<std::size_t>(i)], i + 1});
    for (int i = 0; i < m; ++i) plan.targets.push_back({TargetKind::Next, i, 0, 0, 0});
    plan.targets.push_back({TargetKind::Eos, -1, 0, 0, 0});
    const std::size_t L = static_cast<std::size_t>(m) + 1;
    plan.mask.assign(L * L, 0);
    for (std::size_t q = 0; q < L; ++q) {
        for (std::size_t k = 0; k <= q; ++k) plan.mask[q * L + k] = 1;
    }
    plan.nodes = std::move(nodes);
    plan.record_nodes = m;
    plan.permutation = std::move(permutation);
    return plan;
}

// P n1 P n2 ... P nk P. Remaining targets are split into the record-node and
// relationship segments; positions are optional.
DecoderPlan interleaved_plan(Bias bias, std::vector<Node> nodes, int record_nodes, bool positions) {
    DecoderPlan plan;
    plan.bias = bias;
    const int total = static_cast<int>(nodes.size());
    for (int i = 0; i < total; ++i) {
        const int pos = positions ? i : -1;
        plan.tokens.push_back(special(TokenKind::Prediction, pos));
        plan.tokens.push_back({TokenKind::Node, nodes[static_cast<std::size_t>(i)], pos});
        const bool rel = i >= record_nodes;
        plan.targets.push_back({TargetKind::Remaining, -1, i, rel ? total : record_nodes, rel ? 1 : 0});
        plan.targets.push_back({TargetKind::PassThrough, i, 0, 0, rel ? 1 : 0});
    }
    plan.tokens.push_back(special(TokenKind::Prediction, positions ? total : -1));
    plan.targets.push_back({TargetKind::Eos, -1, 0, 0, 0});
    const std::size_t L = plan.tokens.size();
    plan.mask.assign(L * L, 0);
    for (std::size_t q = 0; q < L; ++q) {
        for (std::size_t k = 0; k <= q; ++k) {
            if (k == q || plan.tokens[k].kind == TokenKind::Node) plan.mask[q * L + k] = 1;
        }
    }
    plan.nodes = std::move(nodes);
    plan.record_nodes = record_nodes;
    return plan;
}

std::vector<int> identity(int n) {
    std::vector<int> v(static_cast<std::size_t>(n));
    std::iota(v.begin(), v.end(), 0);
    return v;
}

void require_structure(const RecordSchema& schema, RecordStructure s, const char* op) {
    if (schema.structure != s) {
        throw InvalidInput(std::string(op) + " needs a " + std::string(to_string(s)) + " schema, got " +
                           std::string(to_string(schema.structure)));
    }
}

// Streams are keyed by purpose so the set and graph permutations never share draws.
constexpr std::uint64_t kNodePermTag = 0x9E3D;
constexpr std::uint64_t kRelPermTag = 0x9E3E;

}  // namespace

DecoderPlan plan_seq(const RecordSchema& schema, const Record& record) {
    require_structure(schema, RecordStructure::Sequence, "plan_seq");
    validate_record(schema, record);
    return sequence_plan(Bias::Seq, record.nodes, identity(static_cast<int>(record.nodes.size())));
}

DecoderPlan plan_set(const RecordSchema& schema, const Record& record, std::uint64_t seed) {
    require_structure(schema, RecordStructure::Set, "plan_set");
    validate_record(schema, record);
    const int m = static_cast<int>(record.nodes.size());
    auto perm = CounterRng(seed).fork(kNodePermTag).permutation(m);
    std::vector<Node> nodes;
    for (int i : perm) nodes.push_back(record.nodes[static_cast<std::size_t>(i)]);
    auto plan = interleaved_plan(Bias::Set, std::move(nodes), m, false);
    plan.permutation = std::move(perm);
    return plan;
}

DecoderPlan plan_graph(const RecordSchema& schema, const Record& record, std::uint64_t seed) {
    require_structure(schema, RecordStructure::Graph, "plan_graph");
    validate_record(schema, record);
    const int m = static_cast<int>(record.nodes.size());
    const int o = static_cast<int>(record.relationships.size());
    CounterRng rng(seed);
    auto perm = rng.fork(kNodePermTag).permutation(m);
    auto rel_perm = rng.fork(kRelPermTag).permutation(o);
    std::vector<int> inverse(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) inverse[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] = i;
    std::vector<Node> nodes;
    for (int i : perm) nodes.push_back(record.nodes[static_cast<std::size_t>(i)]);
    for (int j : rel_perm) {
        RelationshipNode rel = record.relationships[static_cast<std::size_t>(j)];
        for (int& e : rel.endpoints) e = inverse[static_cast<std::size_t>(e)];
        if (!schema.type(rel.type).directed) std::sort(rel.endpoints.begin(), rel.endpoints.end());
        nodes.push_back(flatten(schema, rel));
    }
    auto plan = interleaved_plan(Bias::Graph, std::move(nodes), m, true);
    plan.permutation = std::move(perm);
    plan.rel_permutation = std::move(rel_perm);
    return plan;
}

DecoderPlan plan_mismatch(const RecordSchema& schema, const Record& record, Bias bias, std::uint64_t seed) {
    if (bias == Bias::SetOnSeq) {
        require_structure(schema, RecordStructure::Sequence, "set-on-seq");
        validate_record(schema, record);
        const int m = static_cast<int>(record.nodes.size());
        if (m > schema.max_nodes) throw InvalidInput("record longer than max_nodes");
        auto perm = CounterRng(seed).fork(kNodePermTag).permutation(m);
        std::vector<Node> nodes;
        for (int i : perm) {
            Node n = record.nodes[static_cast<std::size_t>(i)];
            n.discrete.push_back(i);
            nodes.push_back(std::move(n));
        }
        auto plan = interleaved_plan(Bias::SetOnSeq, std::move(nodes), m, false);
        plan.permutation = std::move(perm);
        return plan;
    }
    if (bias == Bias::SeqOnSet) {
        require_structure(schema, RecordStructure::Set, "seq-on-set");
        validate_record(schema, record);
        const int m = static_cast<int>(record.nodes.size());
        auto perm = CounterRng(seed).fork(kNodePermTag).permutation(m);
        std::vector<Node> nodes;
        for (int i : perm) nodes.push_back(record.nodes[static_cast<std::size_t>(i)]);
        return sequence_plan(Bias::SeqOnSet, std::move(nodes), std::move(perm));
    }
    throw InvalidInput("plan_mismatch supports set-on-seq and seq-on-set only");
}

DecoderPlan make_plan(Bias bias, const RecordSchema& schema, const Record& record, std::uint64_t seed) {
    switch (bias) {
        case Bias::Seq: return plan_seq(schema, record);
        case Bias::Set: return plan_set(schema, record, seed);
        case Bias::Graph: return plan_graph(schema, record, seed);
        case Bias::SetOnSeq:
        case Bias::SeqOnSet: return plan_mismatch(schema, record, bias, seed);
    }
    throw InvalidInput("unknown bias");
}

DecoderPlan plan_in_order(Bias bias, const RecordSchema& model_schema, const std::vector<Node>& nodes) {
    for (const auto& n : nodes) validate_node(model_schema, n);
    const int m = static_cast<int>(nodes.size());
    if (bias == Bias::Seq || bias == Bias::SeqOnSet) return sequence_plan(bias, nodes, identity(m));
    int record_nodes = 0;
    while (record_nodes < m && !model_schema.type(nodes[static_cast<std::size_t>(record_nodes)].type).is_relationship()) {
        ++record_nodes;
    }
    auto plan = interleaved_plan(bias, nodes, record_nodes, bias == Bias::Graph);
    plan.permutation = identity(record_nodes);
    plan.rel_permutation = identity(m - record_nodes);
    return plan;
}

Record assemble_record(Bias bias, const RecordSchema& schema, const std::vector<Node>& decoded) {
    Record out;
    if (bias == Bias::SetOnSeq) {
        std::vector<Node> nodes = decoded;
        std::stable_sort(nodes.begin(), nodes.end(),
                         [](const Node& a, const Node& b) { return a.discrete.back() < b.discrete.back(); });
        for (auto& n : nodes) n.discrete.pop_back();
        out.nodes = std::move(nodes);
        return out;
    }
    if (bias != Bias::Graph) {
        out.nodes = decoded;
        return out;
    }
    std::vector<Node> rels;
    for (const auto& n : decoded) {
        if (schema.type(n.type).is_relationship()) {
            rels.push_back(n);
        } else {
            out.nodes.push_back(n);
        }
    }
    for (const auto& flat : rels) {
        auto rel = unflatten(schema, flat);
        const bool in_range = std::all_of(rel.endpoints.begin(), rel.endpoints.end(),
                                          [&](int e) { return e < static_cast<int>(out.nodes.size()); });
        if (in_range) out.relationships.push_back(std::move(rel));
    }
    return out;
}

std::vector<GatedTerm> gated_terms(const RecordSchema& schema, const PatchSet& patches, const Node& target,
                                   const NodePrediction& pred) {
    std::vector<GatedTerm> terms;
    auto nll = [](double p) { return -std::log(p); };
    const int eos = schema.eos_type();
    if (target.type < 0 || target.type > eos) throw InvalidInput("target type out of range");
    terms.push_back({TermKind::Type, target.type, 0, target.type, nll(pred.type_dist.at(static_cast<std::size_t>(target.type)))});
    if (target.type == eos) return terms;
    const int predicted = argmax_index(pred.type_dist.begin(), pred.type_dist.end());
    if (predicted != target.type) return terms;
    const auto t = static_cast<std::size_t>(target.type);
    for (std::size_t k = 0; k < target.discrete.size(); ++k) {
        const int v = target.discrete[k];
        terms.push_back({TermKind::Discrete, target.type, static_cast<int>(k), v,
                         nll(pred.discrete.at(t).at(k).at(static_cast<std::size_t>(v)))});
    }
    for (std::size_t p = 0; 2 * p < target.continuous.size(); ++p) {
        const auto loc = locate(target.continuous[2 * p], target.continuous[2 * p + 1], patches.image_width,
                                patches.image_height);
        const int patch = patches.find(loc.grid_row, loc.grid_col);
        if (patch < 0) continue;
        const auto& point = pred.points.at(t).at(p);
        terms.push_back({TermKind::Patch, target.type, static_cast<int>(p), patch,
                         nll(point.patch_dist.at(static_cast<std::size_t>(patch)))});
        if (argmax_index(point.patch_dist.begin(), point.patch_dist.end()) != patch) continue;
        terms.push_back({TermKind::Pixel, target.type, static_cast<int>(p), loc.pixel,
                         nll(point.pixel_dist.at(static_cast<std::size_t>(loc.pixel)))});
    }
    return terms;
}

double gated_node_loss(const RecordSchema& schema, const PatchSet& patches, const Node& target,
                       const NodePrediction& pred) {
    double total = 0.0;
    for (const auto& t : gated_terms(schema, patches, target, pred)) total += t.value;
    return total;
}

std::vector<RemainingMatch> match_remaining(const RecordSchema& schema, const DecoderPlan& plan,
                                            const std::vector<NodePrediction>& predictions) {
    std::vector<RemainingMatch> out;
    for (int pos = 0; pos < plan.length(); ++pos) {
        const auto& tgt = plan.targets[static_cast<std::size_t>(pos)];
        if (tgt.kind != TargetKind::Remaining) continue;
        RemainingMatch best{pos, -1, 0.0};
        for (int j = tgt.begin; j < tgt.end; ++j) {
            const double c = node_dissimilarity(schema, plan.nodes[static_cast<std::size_t>(j)],
                                                predictions.at(static_cast<std::size_t>(pos)));
            if (best.index < 0 || c < best.cost) {
                best.index = j;
                best.cost = c;
            }
        }
        out.push_back(best);
    }
    return out;
}

namespace {

Node eos_node(const RecordSchema& schema) { return Node{schema.eos_type(), {}, {}}; }

void score(LossReport& report, const RecordSchema& schema, const PatchSet& patches, int position,
           const std::string& component, const Node& node, const NodePrediction& pred) {
    ScoredTarget st;
    st.position = position;
    st.component = component;
    st.node = node;
    st.terms = gated_terms(schema, patches, node, pred);
    double v = 0.0;
    for (const auto& t : st.terms) v += t.value;
    report.components[component] += v;
    report.scored.push_back(std::move(st));
}

void finish(LossReport& report) {
    report.total = 0.0;
    for (const auto& [k, v] : report.components) report.total += v;
}

void check_predictions(const DecoderPlan& plan, const std::vector<NodePrediction>& predictions) {
    if (predictions.size() != plan.tokens.size()) throw InvalidInput("predictions are not aligned to the plan");
}

LossReport interleaved_loss(const RecordSchema& schema, const DecoderPlan& plan,
                            const std::vector<NodePrediction>& predictions, const PatchSet& patches, bool split) {
    check_predictions(plan, predictions);
    LossReport report;
    report.components["eos"] = 0.0;
    report.components["taken"] = 0.0;
    if (split) {
        report.components["rem_nodes"] = 0.0;
        report.components["rem_rel"] = 0.0;
    } else {
        report.components["rem"] = 0.0;
    }
    report.matches = match_remaining(schema, plan, predictions);
    std::size_t next_match = 0;
    for (int pos = 0; pos < plan.length(); ++pos) {
        const auto& tgt = plan.targets[static_cast<std::size_t>(pos)];
        const auto& pred = predictions[static_cast<std::size_t>(pos)];
        switch (tgt.kind) {
            case TargetKind::Remaining: {
                const auto& m = report.matches[next_match++];
                const std::string comp = split ? (tgt.segment == 0 ? "rem_nodes" : "rem_rel") : "rem";
                score(report, schema, patches, pos, comp, plan.nodes[static_cast<std::size_t>(m.index)], pred);
                break;
            }
            case TargetKind::PassThrough:
                score(report, schema, patches, pos, "taken", plan.nodes[static_cast<std::size_t>(tgt.node)], pred);
                break;
            case TargetKind::Eos: score(report, schema, patches, pos, "eos", eos_node(schema), pred); break;
            default: break;
        }
    }
    finish(report);
    return report;
}

}  // namespace

LossReport loss_seq(const RecordSchema& schema, const DecoderPlan& plan, const std::vector<NodePrediction>& predictions,
                    const PatchSet& patches) {
    check_predictions(plan, predictions);
    LossReport report;
    report.components["next"] = 0.0;
    report.components["eos"] = 0.0;
    for (int pos = 0; pos < plan.length(); ++pos) {
        const auto& tgt = plan.targets[static_cast<std::size_t>(pos)];
        const auto& pred = predictions[static_cast<std::size_t>(pos)];
        if (tgt.kind == TargetKind::Next) {
            score(report, schema, patches, pos, "next", plan.nodes[static_cast<std::size_t>(tgt.node)], pred);
        } else if (tgt.kind == TargetKind::Eos) {
            score(report, schema, patches, pos, "eos", eos_node(schema), pred);
        }
    }
    finish(report);
    return report;
}

LossReport loss_set(const RecordSchema& schema, const DecoderPlan& plan, const std::vector<NodePrediction>& predictions,
                    const PatchSet& patches) {
    return interleaved_loss(schema, plan, predictions, patches, false);
}

LossReport loss_graph(const RecordSchema& schema, const DecoderPlan& plan,
                      const std::vector<NodePrediction>& predictions, const PatchSet& patches) {
    return interleaved_loss(schema, plan, predictions, patches, true);
}

LossReport compute_loss(const RecordSchema& schema, const DecoderPlan& plan,
                        const std::vector<NodePrediction>& predictions, const PatchSet& patches) {
    switch (plan.bias) {
        case Bias::Seq:
        case Bias::SeqOnSet: return loss_seq(schema, plan, predictions, patches);
        case Bias::Set:
        case Bias::SetOnSeq: return loss_set(schema, plan, predictions, patches);
        case Bias::Graph: return loss_graph(schema, plan, predictions, patches);
    }
    throw InvalidInput("unknown bias");
}

PlanBatch assemble_plans(const std::vector<DecoderPlan>& plans, const RecordSchema& schema) {
    PlanBatch out;
    std::vector<std::vector<Token>> seqs;
    for (const auto& p : plans) seqs.push_back(p.tokens);
    out.nodes = encode_node_batch(seqs, schema);
    const std::size_t L = static_cast<std::size_t>(out.nodes.length);
    out.mask = std::make_shared<std::vector<std::uint8_t>>(plans.size() * L * L, 0);
    for (std::size_t b = 0; b < plans.size(); ++b) {
        const auto& p = plans[b];
        const std::size_t n = p.tokens.size();
        for (std::size_t q = 0; q < n; ++q) {
            for (std::size_t k = 0; k < n; ++k) (*out.mask)[(b * L + q) * L + k] = p.mask[q * n + k];
            if (p.targets[q].kind != TargetKind::None) out.target_rows.push_back(static_cast<int>(b * L + q));
        }
    }
    return out;
}

}  // namespace docrec
