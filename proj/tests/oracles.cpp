#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace oracle {

namespace {

bool same_props(const std::vector<int>& da, const std::vector<int>& db, const std::vector<double>& ca,
                const std::vector<double>& cb, double eps) {
    if (da != db || ca.size() != cb.size()) return false;
    for (std::size_t i = 0; i < ca.size(); ++i) {
        if (std::fabs(ca[i] - cb[i]) > eps) return false;
    }
    return true;
}

bool nodes_match(const Node& a, const Node& b, double eps) {
    return a.type == b.type && same_props(a.discrete, b.discrete, a.continuous, b.continuous, eps);
}

bool relationships_match(const RecordSchema& schema, const Record& a, const Record& b, const std::vector<int>& node_map,
                         double eps) {
    const std::size_t e = a.relationships.size();
    std::vector<int> perm(e);
    std::iota(perm.begin(), perm.end(), 0);
    do {
        bool ok = true;
        for (std::size_t r = 0; r < e && ok; ++r) {
            const auto& ra = a.relationships[r];
            const auto& rb = b.relationships[static_cast<std::size_t>(perm[r])];
            if (ra.type != rb.type || !same_props(ra.discrete, rb.discrete, ra.continuous, rb.continuous, eps)) {
                ok = false;
                break;
            }
            std::vector<int> mapped;
            for (int ep : ra.endpoints) mapped.push_back(node_map[static_cast<std::size_t>(ep)]);
            std::vector<int> other = rb.endpoints;
            if (!schema.type(ra.type).directed) {
                std::sort(mapped.begin(), mapped.end());
                std::sort(other.begin(), other.end());
            }
            ok = mapped == other;
        }
        if (ok) return true;
    } while (std::next_permutation(perm.begin(), perm.end()));
    return false;
}

double nll(double p) { return -std::log(p); }

}  // namespace

bool brute_force_equal(const RecordSchema& schema, const Record& a, const Record& b, double eps, bool ordered) {
    if (a.nodes.size() != b.nodes.size() || a.relationships.size() != b.relationships.size()) return false;
    std::vector<int> perm(a.nodes.size());
    std::iota(perm.begin(), perm.end(), 0);
    do {
        bool ok = true;
        for (std::size_t i = 0; i < perm.size() && ok; ++i) {
            ok = nodes_match(a.nodes[i], b.nodes[static_cast<std::size_t>(perm[i])], eps);
        }
        if (ok && relationships_match(schema, a, b, perm, eps)) return true;
        if (ordered) return false;
    } while (std::next_permutation(perm.begin(), perm.end()));
    return false;
}

double dissimilarity(const RecordSchema& schema, const Node& target, const NodePrediction& pred) {
    double loss = nll(pred.type_dist[static_cast<std::size_t>(target.type)]);
    if (target.type == schema.type_count()) return loss;
    const auto t = static_cast<std::size_t>(target.type);
    for (std::size_t k = 0; k < target.discrete.size(); ++k) {
        loss += nll(pred.discrete[t][k][static_cast<std::size_t>(target.discrete[k])]);
    }
    for (std::size_t p = 0; p < target.continuous.size() / 2; ++p) {
        loss += std::pow(pred.points[t][p].x - target.continuous[2 * p], 2) +
                std::pow(pred.points[t][p].y - target.continuous[2 * p + 1], 2);
    }
    return loss;
}

double gated_loss(const RecordSchema& schema, const PatchSet& patches, const Node& target, const NodePrediction& pred) {
    auto best = [](const std::vector<double>& d) {
        return static_cast<int>(std::max_element(d.begin(), d.end()) - d.begin());
    };
    double loss = nll(pred.type_dist[static_cast<std::size_t>(target.type)]);
    if (target.type == schema.type_count() || best(pred.type_dist) != target.type) return loss;
    const auto t = static_cast<std::size_t>(target.type);
    for (std::size_t k = 0; k < target.discrete.size(); ++k) {
        loss += nll(pred.discrete[t][k][static_cast<std::size_t>(target.discrete[k])]);
    }
    for (std::size_t p = 0; p < target.continuous.size() / 2; ++p) {
        const int px = std::min(patches.image_width - 1, static_cast<int>(target.continuous[2 * p] * patches.image_width));
        const int py = std::min(patches.image_height - 1, static_cast<int>(target.continuous[2 * p + 1] * patches.image_height));
        int patch = -1;
        for (int i = 0; i < patches.count(); ++i) {
            if (patches.rows[static_cast<std::size_t>(i)] == py / 10 && patches.cols[static_cast<std::size_t>(i)] == px / 10) patch = i;
        }
        if (patch < 0) continue;
        const auto& point = pred.points[t][p];
        loss += nll(point.patch_dist[static_cast<std::size_t>(patch)]);
        if (best(point.patch_dist) == patch) {
            loss += nll(point.pixel_dist[static_cast<std::size_t>((py % 10) * 10 + px % 10)]);
        }
    }
    return loss;
}

std::vector<Match> brute_force_matches(const RecordSchema& schema, const DecoderPlan& plan,
                                       const std::vector<NodePrediction>& predictions) {
    std::vector<Match> out;
    int taken = 0;
    for (int pos = 0; pos < plan.length(); ++pos) {
        const auto& tok = plan.tokens[static_cast<std::size_t>(pos)];
        if (tok.kind == TokenKind::Node) {
            ++taken;
            continue;
        }
        if (pos == plan.length() - 1) break;  // trailing P predicts EOS
        // The segment is decided by the node the P precedes.
        const bool rel_segment = taken >= plan.record_nodes;
        const int lo = taken;
        const int hi = rel_segment ? static_cast<int>(plan.nodes.size()) : plan.record_nodes;
        Match m{pos, -1, INFINITY};
        for (int j = lo; j < hi; ++j) {
            const double c = dissimilarity(schema, plan.nodes[static_cast<std::size_t>(j)], predictions[static_cast<std::size_t>(pos)]);
            if (c < m.cost) {
                m.cost = c;
                m.index = j;
            }
        }
        out.push_back(m);
    }
    return out;
}

Node random_node(const RecordSchema& schema, int type, CounterRng& rng, int grid) {
    const auto& spec = schema.type(type);
    Node n{type, {}, {}};
    for (int k = 0; k < spec.endpoints; ++k) n.discrete.push_back(0);
    for (const auto& d : spec.discrete) n.discrete.push_back(rng.range(0, std::min(d.vocab, grid + 1) - 1));
    for (int j = 0; j < spec.scalar_count(); ++j) n.continuous.push_back((rng.range(0, grid - 1) * 10 + 5) / (10.0 * grid));
    return n;
}

Record random_record(const RecordSchema& schema, CounterRng& rng, int max_nodes, int max_relationships, int grid) {
    std::vector<int> node_types, rel_types;
    for (int t = 0; t < schema.type_count(); ++t) (schema.type(t).is_relationship() ? rel_types : node_types).push_back(t);
    Record r;
    const int m = rng.range(0, max_nodes);
    for (int i = 0; i < m; ++i) {
        r.nodes.push_back(random_node(schema, node_types[rng.below(node_types.size())], rng, grid));
    }
    if (m > 0 && !rel_types.empty()) {
        const int o = rng.range(0, max_relationships);
        for (int i = 0; i < o; ++i) {
            const int t = rel_types[rng.below(rel_types.size())];
            auto flat = random_node(schema, t, rng, grid);
            auto rel = unflatten(schema, flat);
            for (auto& e : rel.endpoints) e = rng.range(0, m - 1);
            r.relationships.push_back(rel);
        }
    }
    return r;
}

Record shuffled(const RecordSchema& schema, const Record& r, CounterRng& rng, bool nodes_too) {
    const int m = static_cast<int>(r.nodes.size());
    std::vector<int> perm(static_cast<std::size_t>(m));
    std::iota(perm.begin(), perm.end(), 0);
    if (nodes_too) perm = rng.permutation(m);
    std::vector<int> where(static_cast<std::size_t>(m));
    Record out;
    for (int i = 0; i < m; ++i) {
        out.nodes.push_back(r.nodes[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])]);
        where[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] = i;
    }
    const auto rel_perm = rng.permutation(static_cast<int>(r.relationships.size()));
    for (int j : rel_perm) {
        auto rel = r.relationships[static_cast<std::size_t>(j)];
        for (auto& e : rel.endpoints) e = where[static_cast<std::size_t>(e)];
        if (!schema.type(rel.type).directed && rng.bernoulli(0.5)) std::reverse(rel.endpoints.begin(), rel.endpoints.end());
        out.relationships.push_back(rel);
    }
    return out;
}

Record mutated(const RecordSchema& schema, const Record& r, CounterRng& rng, double eps) {
    Record out = r;
    if (out.nodes.empty()) return out;
    const int kind = rng.range(0, 3);
    auto& n = out.nodes[rng.below(out.nodes.size())];
    const auto& spec = schema.type(n.type);
    if (kind == 0 && !n.continuous.empty()) {
        // Small move stays equal, large move does not.
        auto& v = n.continuous[rng.below(n.continuous.size())];
        const double delta = rng.bernoulli(0.5) ? 0.5 * eps : 3.0 * eps;
        v = v + delta <= 1.0 ? v + delta : v - delta;
    } else if (kind == 1 && !spec.discrete.empty()) {
        const std::size_t k = rng.below(spec.discrete.size());
        n.discrete[static_cast<std::size_t>(spec.endpoints) + k] = (n.discrete[static_cast<std::size_t>(spec.endpoints) + k] + 1) % spec.discrete[k].vocab;
    } else if (kind == 2 && !out.relationships.empty()) {
        auto& rel = out.relationships[rng.below(out.relationships.size())];
        rel.endpoints[rng.below(rel.endpoints.size())] = rng.range(0, static_cast<int>(out.nodes.size()) - 1);
    } else {
        // Swap two nodes' types where the arity allows it; otherwise leave as is.
        auto& other = out.nodes[rng.below(out.nodes.size())];
        if (schema.type(other.type).discrete.size() == spec.discrete.size() &&
            schema.type(other.type).points.size() == spec.points.size()) {
            std::swap(n.type, other.type);
            try {
                validate_node(schema, n);
                validate_node(schema, other);
            } catch (const InvalidInput&) {
                std::swap(n.type, other.type);
            }
        }
    }
    return out;
}

PatchSet random_patches(CounterRng& rng, int width, int height) {
    PatchSet ps;
    ps.image_width = width;
    ps.image_height = height;
    ps.grid_rows = (height + 9) / 10;
    ps.grid_cols = (width + 9) / 10;
    for (int r = 0; r < ps.grid_rows; ++r) {
        for (int c = 0; c < ps.grid_cols; ++c) {
            if (!rng.bernoulli(0.5)) continue;
            ps.rows.push_back(r);
            ps.cols.push_back(c);
            for (int j = 0; j < 100; ++j) ps.values.push_back(static_cast<float>(rng.uniform()));
        }
    }
    if (ps.rows.empty()) {
        ps.rows.push_back(0);
        ps.cols.push_back(0);
        ps.values.assign(100, 1.0f);
    }
    return ps;
}

namespace {

std::vector<double> random_dist(CounterRng& rng, int n, double sharpness) {
    std::vector<double> d(static_cast<std::size_t>(n));
    double total = 0.0;
    for (auto& v : d) {
        v = std::exp(sharpness * rng.normal());
        total += v;
    }
    for (auto& v : d) v /= total;
    return d;
}

std::vector<double> one_hot(int n, int k) {
    std::vector<double> d(static_cast<std::size_t>(n), 0.0);
    d[static_cast<std::size_t>(k)] = 1.0;
    return d;
}

void place_point(PointPrediction& pt, const PatchSet& patches) {
    const int patch = static_cast<int>(std::max_element(pt.patch_dist.begin(), pt.patch_dist.end()) - pt.patch_dist.begin());
    const int pixel = static_cast<int>(std::max_element(pt.pixel_dist.begin(), pt.pixel_dist.end()) - pt.pixel_dist.begin());
    pt.x = (patches.cols[static_cast<std::size_t>(patch)] * 10 + pixel % 10 + 0.5) / patches.image_width;
    pt.y = (patches.rows[static_cast<std::size_t>(patch)] * 10 + pixel / 10 + 0.5) / patches.image_height;
}

}  // namespace

NodePrediction random_prediction(const RecordSchema& schema, const PatchSet& patches, CounterRng& rng, double sharpness) {
    NodePrediction p;
    p.type_dist = random_dist(rng, schema.type_count() + 1, sharpness);
    for (int t = 0; t < schema.type_count(); ++t) {
        const auto& spec = schema.type(t);
        auto& disc = p.discrete.emplace_back();
        for (int k = 0; k < spec.endpoints; ++k) disc.push_back(random_dist(rng, schema.max_nodes, sharpness));
        for (const auto& d : spec.discrete) disc.push_back(random_dist(rng, d.vocab, sharpness));
        auto& pts = p.points.emplace_back();
        for (std::size_t q = 0; q < spec.points.size(); ++q) {
            PointPrediction pt;
            pt.patch_dist = random_dist(rng, patches.count(), sharpness);
            pt.pixel_dist = random_dist(rng, 100, sharpness);
            place_point(pt, patches);
            pts.push_back(pt);
        }
    }
    return p;
}

NodePrediction perfect_prediction(const RecordSchema& schema, const PatchSet& patches, const Node& target) {
    NodePrediction p;
    p.type_dist = one_hot(schema.type_count() + 1, target.type);
    for (int t = 0; t < schema.type_count(); ++t) {
        const auto& spec = schema.type(t);
        auto& disc = p.discrete.emplace_back();
        std::vector<int> vocab;
        for (int k = 0; k < spec.endpoints; ++k) vocab.push_back(schema.max_nodes);
        for (const auto& d : spec.discrete) vocab.push_back(d.vocab);
        for (std::size_t k = 0; k < vocab.size(); ++k) {
            const int v = t == target.type ? target.discrete[k] : 0;
            disc.push_back(one_hot(vocab[k], v));
        }
        auto& pts = p.points.emplace_back();
        for (std::size_t q = 0; q < spec.points.size(); ++q) {
            PointPrediction pt;
            int patch = 0, pixel = 0;
            if (t == target.type) {
                const int px = std::min(patches.image_width - 1, static_cast<int>(target.continuous[2 * q] * patches.image_width));
                const int py = std::min(patches.image_height - 1, static_cast<int>(target.continuous[2 * q + 1] * patches.image_height));
                for (int i = 0; i < patches.count(); ++i) {
                    if (patches.rows[static_cast<std::size_t>(i)] == py / 10 && patches.cols[static_cast<std::size_t>(i)] == px / 10) patch = i;
                }
                pixel = (py % 10) * 10 + px % 10;
            }
            pt.patch_dist = one_hot(patches.count(), patch);
            pt.pixel_dist = one_hot(100, pixel);
            place_point(pt, patches);
            pts.push_back(pt);
        }
    }
    return p;
}

std::vector<int> ink_pixels(const DocumentImage& img, int threshold) {
    std::vector<int> out;
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            if (img.at(x, y) < threshold) out.push_back(x + y * img.width);
        }
    }
    return out;
}

}  // namespace oracle
