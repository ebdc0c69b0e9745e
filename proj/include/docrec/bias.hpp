#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "docrec/record.hpp"
#include "docrec/tensorize.hpp"

namespace docrec {

/// Decoder biases. The two mismatch biases pair a structure with the "wrong" bias.
enum class Bias { Seq, Set, Graph, SetOnSeq, SeqOnSet };

std::string_view to_string(Bias b);
Bias parse_bias(std::string_view name);
/// The bias that matches a schema's structure.
Bias natural_bias(const RecordSchema& schema);
/// Throws InvalidInput when the bias cannot be applied to the schema's structure.
void check_bias(Bias bias, const RecordSchema& schema);

enum class TargetKind : std::uint8_t { None, Next, Remaining, PassThrough, Eos };

/// What the prediction at one decoder position is scored against.
/// `node` indexes DecoderPlan::nodes; Remaining targets range over [begin, end).
struct PlanTarget {
    TargetKind kind = TargetKind::None;
    int node = -1;
    int begin = 0;
    int end = 0;
    int segment = 0;  // 0 record nodes, 1 relationship nodes
};

struct DecoderPlan {
    Bias bias = Bias::Seq;
    std::vector<Token> tokens;
    std::vector<PlanTarget> targets;
    std::vector<std::uint8_t> mask;  // length x length, 1 = query may attend to key
    std::vector<Node> nodes;         // flat target nodes in plan order (relationships after record nodes)
    int record_nodes = 0;            // nodes[0, record_nodes) are record nodes
    std::vector<int> permutation;    // plan index -> original record node index
    std::vector<int> rel_permutation;

    int length() const { return static_cast<int>(tokens.size()); }
    bool allowed(int query, int key) const {
        return mask[static_cast<std::size_t>(query) * tokens.size() + static_cast<std::size_t>(key)] != 0;
    }
};

DecoderPlan plan_seq(const RecordSchema& schema, const Record& record);
DecoderPlan plan_set(const RecordSchema& schema, const Record& record, std::uint64_t seed);
DecoderPlan plan_graph(const RecordSchema& schema, const Record& record, std::uint64_t seed);
/// set-on-seq adds a horizontal-position property and plans as a set; seq-on-set permutes
/// the nodes and plans as a sequence.
DecoderPlan plan_mismatch(const RecordSchema& schema, const Record& record, Bias bias, std::uint64_t seed);
DecoderPlan make_plan(Bias bias, const RecordSchema& schema, const Record& record, std::uint64_t seed);

/// Plan over already-ordered flat nodes in the model schema, without permuting. This is the
/// decoder input at an inference step: its last position predicts the next node.
DecoderPlan plan_in_order(Bias bias, const RecordSchema& model_schema, const std::vector<Node>& nodes);

/// Schema the network is built for: the input schema, or its hpos-augmented form for set-on-seq.
RecordSchema model_schema(Bias bias, const RecordSchema& schema);
/// Appends a discrete "hpos" property (vocabulary max_nodes) to every node type.
RecordSchema hpos_schema(const RecordSchema& schema);
inline constexpr const char* kHposProperty = "hpos";

/// Turns a decoded node list (in the model schema) back into a record of the input schema.
/// Graph relationships whose endpoints fall outside the decoded nodes are dropped.
Record assemble_record(Bias bias, const RecordSchema& schema, const std::vector<Node>& decoded);

/// One cross-entropy term of the gated categorical node loss.
enum class TermKind : std::uint8_t { Type, Discrete, Patch, Pixel };
struct GatedTerm {
    TermKind kind = TermKind::Type;
    int type = 0;
    int slot = 0;    // discrete slot or coordinate point
    int target = 0;  // class index within the term's distribution
    double value = 0.0;
};

/// Type cross-entropy, plus discrete and patch cross-entropies when the type argmax is
/// right, plus the pixel cross-entropy when the patch argmax is right too. Points whose
/// patch was filtered out as background contribute no coordinate terms.
std::vector<GatedTerm> gated_terms(const RecordSchema& schema, const PatchSet& patches, const Node& target,
                                   const NodePrediction& pred);
double gated_node_loss(const RecordSchema& schema, const PatchSet& patches, const Node& target,
                       const NodePrediction& pred);

struct RemainingMatch {
    int position = 0;
    int index = 0;  // into DecoderPlan::nodes
    double cost = 0.0;
};

/// A scored target after matching: which node the prediction at `position` is trained on.
struct ScoredTarget {
    int position = 0;
    std::string component;
    Node node;
    std::vector<GatedTerm> terms;
};

struct LossReport {
    double total = 0.0;
    std::map<std::string, double> components;
    std::vector<RemainingMatch> matches;
    std::vector<ScoredTarget> scored;
};

/// Remaining-node matching: for every Remaining target, the candidate with the lowest
/// dissimilarity (type CE + discrete CE + squared coordinate error). Ties go to the lowest index.
std::vector<RemainingMatch> match_remaining(const RecordSchema& schema, const DecoderPlan& plan,
                                            const std::vector<NodePrediction>& predictions);

/// `predictions[i]` is the output at plan position i; `schema` is the model schema.
LossReport loss_seq(const RecordSchema& schema, const DecoderPlan& plan, const std::vector<NodePrediction>& predictions,
                    const PatchSet& patches);
LossReport loss_set(const RecordSchema& schema, const DecoderPlan& plan, const std::vector<NodePrediction>& predictions,
                    const PatchSet& patches);
LossReport loss_graph(const RecordSchema& schema, const DecoderPlan& plan,
                      const std::vector<NodePrediction>& predictions, const PatchSet& patches);
LossReport compute_loss(const RecordSchema& schema, const DecoderPlan& plan,
                        const std::vector<NodePrediction>& predictions, const PatchSet& patches);

/// Several plans padded into one node batch plus a batch x length x length mask.
struct PlanBatch {
    NodeBatch nodes;
    std::shared_ptr<std::vector<std::uint8_t>> mask;
    std::vector<int> target_rows;  // sorted decoder rows that carry a target
};
PlanBatch assemble_plans(const std::vector<DecoderPlan>& plans, const RecordSchema& schema);

}  // namespace docrec
