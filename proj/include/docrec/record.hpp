#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace docrec {

/// Raised when a value does not conform to its schema or an operation's precondition.
class InvalidInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised by the record parser; carries the byte offset of the failure.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

enum class RecordStructure { Sequence, Set, Graph };

std::string_view to_string(RecordStructure s);

struct DiscreteProperty {
    std::string name;
    int vocab = 2;
};

/// A record node type or, when `endpoints > 0`, a relationship type.
///
/// Continuous properties are points: each contributes an (x, y) pair of scalars in [0, 1].
struct NodeTypeSpec {
    std::string name;
    std::vector<DiscreteProperty> discrete;
    std::vector<std::string> points;
    int endpoints = 0;
    bool directed = true;

    bool is_relationship() const { return endpoints > 0; }
    int discrete_count() const { return static_cast<int>(discrete.size()); }
    int scalar_count() const { return 2 * static_cast<int>(points.size()); }
};

struct RecordSchema {
    std::string name;
    RecordStructure structure = RecordStructure::Set;
    std::vector<NodeTypeSpec> types;
    int max_nodes = 32;

    int type_count() const { return static_cast<int>(types.size()); }
    /// EOS is a reserved, property-less type placed after all schema types.
    int eos_type() const { return type_count(); }
    int type_index(std::string_view type_name) const;
    const NodeTypeSpec& type(int index) const;

    /// Throws InvalidInput when names repeat, vocabularies are too small, or bounds are invalid.
    void check() const;
};

struct Node {
    int type = 0;
    std::vector<int> discrete;
    std::vector<double> continuous;

    friend bool operator==(const Node&, const Node&) = default;
};

struct RelationshipNode {
    int type = 0;
    std::vector<int> endpoints;
    std::vector<int> discrete;
    std::vector<double> continuous;

    friend bool operator==(const RelationshipNode&, const RelationshipNode&) = default;
};

struct Record {
    std::vector<Node> nodes;
    std::vector<RelationshipNode> relationships;

    friend bool operator==(const Record&, const Record&) = default;
};

/// Throws InvalidInput if `node` does not match the arity and ranges of its type.
void validate_node(const RecordSchema& schema, const Node& node);
void validate_relationship(const RecordSchema& schema, const RelationshipNode& rel, std::size_t node_count);
void validate_record(const RecordSchema& schema, const Record& record);

/// Relationship endpoints become the leading discrete properties of a flat node.
Node flatten(const RecordSchema& schema, const RelationshipNode& rel);
RelationshipNode unflatten(const RecordSchema& schema, const Node& flat);

/// Discrete properties compare exactly, continuous ones by absolute difference <= eps.
bool node_equal(const RecordSchema& schema, const Node& a, const Node& b, double eps);

/// Type and property equality of two relationships, ignoring endpoints.
bool relationship_props_equal(const RecordSchema& schema, const RelationshipNode& a, const RelationshipNode& b,
                              double eps);

/// Property-graph equality up to eps.
///
/// With `ordered` the node bijection is the identity (sequence records); otherwise a
/// backtracking search looks for node and relationship bijections that preserve node
/// equality, relationship equality and endpoint structure.
bool record_equal(const RecordSchema& schema, const Record& a, const Record& b, double eps, bool ordered);

/// Per-position output distributions for one decoder position.
///
/// Distributions are indexed by node type since property heads are type specific:
/// `discrete[t][k]` is the distribution of the k-th flat discrete slot of type t
/// (relationship endpoints first), `points[t][p]` the p-th point of type t.
struct PointPrediction {
    std::vector<double> patch_dist;
    std::vector<double> pixel_dist;
    double x = 0.0;
    double y = 0.0;
};

struct NodePrediction {
    std::vector<double> type_dist;
    std::vector<std::vector<std::vector<double>>> discrete;
    std::vector<std::vector<PointPrediction>> points;
};

/// Cross-entropy on the type, summed cross-entropy on the discrete properties and
/// squared error on every continuous scalar. An EOS target only scores the type.
double node_dissimilarity(const RecordSchema& schema, const Node& target, const NodePrediction& pred);

}  // namespace docrec
