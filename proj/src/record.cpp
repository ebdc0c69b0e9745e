#include "docrec/record.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

namespace docrec {

std::string_view to_string(RecordStructure s) {
    switch (s) {
        case RecordStructure::Sequence: return "sequence";
        case RecordStructure::Set: return "set";
        case RecordStructure::Graph: return "graph";
    }
    return "unknown";
}

int RecordSchema::type_index(std::string_view type_name) const {
    for (std::size_t i = 0; i < types.size(); ++i) {
        if (types[i].name == type_name) return static_cast<int>(i);
    }
    throw InvalidInput("schema '" + name + "' has no type '" + std::string(type_name) + "'");
}

const NodeTypeSpec& RecordSchema::type(int index) const {
    if (index < 0 || index >= type_count()) {
        throw InvalidInput("type index " + std::to_string(index) + " out of range for schema '" + name + "'");
    }
    return types[static_cast<std::size_t>(index)];
}

void RecordSchema::check() const {
    if (max_nodes <= 0) throw InvalidInput("max_nodes must be positive");
    std::set<std::string> seen;
    for (const auto& t : types) {
        if (!seen.insert(t.name).second) throw InvalidInput("duplicate type name '" + t.name + "'");
        for (const auto& d : t.discrete) {
            if (d.vocab < 2) throw InvalidInput("discrete property '" + d.name + "' needs a vocabulary of at least 2");
        }
        if (t.endpoints < 0) throw InvalidInput("negative endpoint count for '" + t.name + "'");
    }
}

namespace {

void check_continuous(const std::vector<double>& values) {
    for (double v : values) {
        if (!(v >= 0.0 && v <= 1.0)) throw InvalidInput("continuous property outside [0, 1]");
    }
}

bool endpoints_match(const std::vector<int>& mapped, const std::vector<int>& other, bool directed) {
    if (mapped.size() != other.size()) return false;
    if (directed) return mapped == other;
    auto x = mapped;
    auto y = other;
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    return x == y;
}

bool props_equal(const std::vector<int>& da, const std::vector<int>& db, const std::vector<double>& ca,
                 const std::vector<double>& cb, double eps) {
    if (da != db || ca.size() != cb.size()) return false;
    for (std::size_t i = 0; i < ca.size(); ++i) {
        if (!(std::abs(ca[i] - cb[i]) <= eps)) return false;
    }
    return true;
}

// Kuhn's augmenting-path matching; true iff a perfect matching exists.
bool has_perfect_matching(const std::vector<std::vector<int>>& adj, std::size_t right_size) {
    std::vector<int> match_right(right_size, -1);
    for (std::size_t u = 0; u < adj.size(); ++u) {
        std::vector<char> visited(right_size, 0);
        auto augment = [&](auto&& self, int left) -> bool {
            for (int v : adj[static_cast<std::size_t>(left)]) {
                if (visited[static_cast<std::size_t>(v)]) continue;
                visited[static_cast<std::size_t>(v)] = 1;
                if (match_right[static_cast<std::size_t>(v)] < 0 ||
                    self(self, match_right[static_cast<std::size_t>(v)])) {
                    match_right[static_cast<std::size_t>(v)] = left;
                    return true;
                }
            }
            return false;
        };
        if (!augment(augment, static_cast<int>(u))) return false;
    }
    return true;
}

class IsomorphismSearch {
public:
    IsomorphismSearch(const RecordSchema& schema, const Record& a, const Record& b, double eps)
        : schema_(schema), a_(a), b_(b) {
        const std::size_t n = a.nodes.size();
        const std::size_t e = a.relationships.size();
        node_compat_.assign(n, std::vector<char>(n, 0));
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                node_compat_[i][j] = node_equal(schema, a.nodes[i], b.nodes[j], eps) ? 1 : 0;
            }
        }
        rel_compat_.assign(e, std::vector<char>(e, 0));
        for (std::size_t i = 0; i < e; ++i) {
            for (std::size_t j = 0; j < e; ++j) {
                rel_compat_[i][j] = relationship_props_equal(schema, a.relationships[i], b.relationships[j], eps) ? 1 : 0;
            }
        }
        incident_a_.assign(n, {});
        for (std::size_t r = 0; r < e; ++r) {
            for (int ep : a.relationships[r].endpoints) incident_a_[static_cast<std::size_t>(ep)].push_back(r);
        }
        const auto sig_a = signatures(a);
        const auto sig_b = signatures(b);
        candidates_.assign(n, {});
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                if (node_compat_[i][j] && sig_a[i] == sig_b[j]) candidates_[i].push_back(static_cast<int>(j));
            }
        }
        // Most constrained first, then highest degree.
        order_.resize(n);
        std::iota(order_.begin(), order_.end(), 0);
        std::stable_sort(order_.begin(), order_.end(), [&](int x, int y) {
            const auto cx = candidates_[static_cast<std::size_t>(x)].size();
            const auto cy = candidates_[static_cast<std::size_t>(y)].size();
            if (cx != cy) return cx < cy;
            return incident_a_[static_cast<std::size_t>(x)].size() > incident_a_[static_cast<std::size_t>(y)].size();
        });
    }

    bool solve_unordered() {
        mapping_.assign(a_.nodes.size(), -1);
        used_.assign(a_.nodes.size(), 0);
        return assign(0);
    }

    bool solve_identity() {
        const std::size_t n = a_.nodes.size();
        mapping_.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            if (!node_compat_[i][i]) return false;
            mapping_[i] = static_cast<int>(i);
        }
        return relationships_match();
    }

private:
    // Per node: sorted (relationship type, endpoint slot) incidences. Undirected slots collapse to -1.
    std::vector<std::vector<std::pair<int, int>>> signatures(const Record& r) const {
        std::vector<std::vector<std::pair<int, int>>> sig(r.nodes.size());
        for (const auto& rel : r.relationships) {
            const bool directed = schema_.type(rel.type).directed;
            for (std::size_t k = 0; k < rel.endpoints.size(); ++k) {
                sig[static_cast<std::size_t>(rel.endpoints[k])].emplace_back(rel.type, directed ? static_cast<int>(k) : -1);
            }
        }
        for (auto& s : sig) std::sort(s.begin(), s.end());
        return sig;
    }

    std::vector<int> mapped_endpoints(const RelationshipNode& rel) const {
        std::vector<int> out;
        out.reserve(rel.endpoints.size());
        for (int ep : rel.endpoints) out.push_back(mapping_[static_cast<std::size_t>(ep)]);
        return out;
    }

    bool rel_pair_ok(std::size_t ra, std::size_t rb) const {
        if (!rel_compat_[ra][rb]) return false;
        const auto& rel = a_.relationships[ra];
        return endpoints_match(mapped_endpoints(rel), b_.relationships[rb].endpoints, schema_.type(rel.type).directed);
    }

    bool fully_assigned(const RelationshipNode& rel) const {
        return std::all_of(rel.endpoints.begin(), rel.endpoints.end(),
                           [&](int ep) { return mapping_[static_cast<std::size_t>(ep)] >= 0; });
    }

    bool consistent_after(int node) const {
        for (std::size_t ra : incident_a_[static_cast<std::size_t>(node)]) {
            if (!fully_assigned(a_.relationships[ra])) continue;
            bool any = false;
            for (std::size_t rb = 0; rb < b_.relationships.size() && !any; ++rb) any = rel_pair_ok(ra, rb);
            if (!any) return false;
        }
        return true;
    }

    bool relationships_match() const {
        const std::size_t e = a_.relationships.size();
        std::vector<std::vector<int>> adj(e);
        for (std::size_t ra = 0; ra < e; ++ra) {
            for (std::size_t rb = 0; rb < e; ++rb) {
                if (rel_pair_ok(ra, rb)) adj[ra].push_back(static_cast<int>(rb));
            }
            if (adj[ra].empty()) return false;
        }
        return has_perfect_matching(adj, e);
    }

    bool assign(std::size_t depth) {
        if (depth == order_.size()) return relationships_match();
        const int node = order_[depth];
        for (int cand : candidates_[static_cast<std::size_t>(node)]) {
            if (used_[static_cast<std::size_t>(cand)]) continue;
            mapping_[static_cast<std::size_t>(node)] = cand;
            used_[static_cast<std::size_t>(cand)] = 1;
            if (consistent_after(node) && assign(depth + 1)) return true;
            used_[static_cast<std::size_t>(cand)] = 0;
            mapping_[static_cast<std::size_t>(node)] = -1;
        }
        return false;
    }

    const RecordSchema& schema_;
    const Record& a_;
    const Record& b_;
    std::vector<std::vector<char>> node_compat_;
    std::vector<std::vector<char>> rel_compat_;
    std::vector<std::vector<std::size_t>> incident_a_;
    std::vector<std::vector<int>> candidates_;
    std::vector<int> order_;
    std::vector<int> mapping_;
    std::vector<char> used_;
};

double neg_log(double p) { return -std::log(p); }

}  // namespace

void validate_node(const RecordSchema& schema, const Node& node) {
    const auto& spec = schema.type(node.type);
    const std::size_t expected = static_cast<std::size_t>(spec.endpoints + spec.discrete_count());
    if (node.discrete.size() != expected) {
        throw InvalidInput("node of type '" + spec.name + "' expects " + std::to_string(expected) +
                           " discrete properties, got " + std::to_string(node.discrete.size()));
    }
    if (node.continuous.size() != static_cast<std::size_t>(spec.scalar_count())) {
        throw InvalidInput("node of type '" + spec.name + "' expects " + std::to_string(spec.scalar_count()) +
                           " continuous properties, got " + std::to_string(node.continuous.size()));
    }
    for (std::size_t k = 0; k < node.discrete.size(); ++k) {
        const int vocab = k < static_cast<std::size_t>(spec.endpoints)
                              ? schema.max_nodes
                              : spec.discrete[k - static_cast<std::size_t>(spec.endpoints)].vocab;
        if (node.discrete[k] < 0 || node.discrete[k] >= vocab) {
            throw InvalidInput("discrete value " + std::to_string(node.discrete[k]) + " out of range for type '" +
                               spec.name + "'");
        }
    }
    check_continuous(node.continuous);
}

void validate_relationship(const RecordSchema& schema, const RelationshipNode& rel, std::size_t node_count) {
    const auto& spec = schema.type(rel.type);
    if (!spec.is_relationship()) throw InvalidInput("type '" + spec.name + "' is not a relationship type");
    if (rel.endpoints.size() != static_cast<std::size_t>(spec.endpoints)) {
        throw InvalidInput("relationship '" + spec.name + "' expects " + std::to_string(spec.endpoints) + " endpoints");
    }
    for (int ep : rel.endpoints) {
        if (ep < 0 || static_cast<std::size_t>(ep) >= node_count || ep >= schema.max_nodes) {
            throw InvalidInput("relationship endpoint " + std::to_string(ep) + " does not reference a record node");
        }
    }
    validate_node(schema, flatten(schema, rel));
}

void validate_record(const RecordSchema& schema, const Record& record) {
    if (record.nodes.size() > static_cast<std::size_t>(schema.max_nodes)) {
        throw InvalidInput("record has more than max_nodes nodes");
    }
    for (const auto& n : record.nodes) {
        if (schema.type(n.type).is_relationship()) {
            throw InvalidInput("relationship type '" + schema.type(n.type).name + "' used as a record node");
        }
        validate_node(schema, n);
    }
    for (const auto& r : record.relationships) validate_relationship(schema, r, record.nodes.size());
}

Node flatten(const RecordSchema& schema, const RelationshipNode& rel) {
    (void)schema;
    Node flat;
    flat.type = rel.type;
    flat.discrete = rel.endpoints;
    flat.discrete.insert(flat.discrete.end(), rel.discrete.begin(), rel.discrete.end());
    flat.continuous = rel.continuous;
    return flat;
}

RelationshipNode unflatten(const RecordSchema& schema, const Node& flat) {
    const auto& spec = schema.type(flat.type);
    if (!spec.is_relationship() || flat.discrete.size() < static_cast<std::size_t>(spec.endpoints)) {
        throw InvalidInput("node of type '" + spec.name + "' cannot be read as a relationship");
    }
    RelationshipNode rel;
    rel.type = flat.type;
    const auto split = flat.discrete.begin() + spec.endpoints;
    rel.endpoints.assign(flat.discrete.begin(), split);
    rel.discrete.assign(split, flat.discrete.end());
    rel.continuous = flat.continuous;
    return rel;
}

bool node_equal(const RecordSchema& schema, const Node& a, const Node& b, double eps) {
    validate_node(schema, a);
    validate_node(schema, b);
    if (a.type != b.type) return false;
    return props_equal(a.discrete, b.discrete, a.continuous, b.continuous, eps);
}

bool relationship_props_equal(const RecordSchema& schema, const RelationshipNode& a, const RelationshipNode& b,
                              double eps) {
    (void)schema;
    if (a.type != b.type) return false;
    return props_equal(a.discrete, b.discrete, a.continuous, b.continuous, eps);
}

bool record_equal(const RecordSchema& schema, const Record& a, const Record& b, double eps, bool ordered) {
    validate_record(schema, a);
    validate_record(schema, b);
    if (a.nodes.size() != b.nodes.size() || a.relationships.size() != b.relationships.size()) return false;
    IsomorphismSearch search(schema, a, b, eps);
    return ordered ? search.solve_identity() : search.solve_unordered();
}

double node_dissimilarity(const RecordSchema& schema, const Node& target, const NodePrediction& pred) {
    if (pred.type_dist.size() != static_cast<std::size_t>(schema.type_count() + 1)) {
        throw InvalidInput("type distribution has wrong size");
    }
    if (target.type < 0 || target.type > schema.eos_type()) throw InvalidInput("target type out of range");
    double loss = neg_log(pred.type_dist[static_cast<std::size_t>(target.type)]);
    if (target.type == schema.eos_type()) return loss;
    validate_node(schema, target);
    const auto t = static_cast<std::size_t>(target.type);
    for (std::size_t k = 0; k < target.discrete.size(); ++k) {
        loss += neg_log(pred.discrete.at(t).at(k).at(static_cast<std::size_t>(target.discrete[k])));
    }
    for (std::size_t p = 0; p * 2 < target.continuous.size(); ++p) {
        const auto& point = pred.points.at(t).at(p);
        const double dx = target.continuous[2 * p] - point.x;
        const double dy = target.continuous[2 * p + 1] - point.y;
        loss += dx * dx + dy * dy;
    }
    return loss;
}

}  // namespace docrec
