#pragma once

// Independent reference implementations used by the unit and acceptance tests. None of
// these call into the code they check beyond plain data types and schema accessors.

#include <cstdint>
#include <functional>
#include <vector>

#include "docrec/bias.hpp"
#include "docrec/record.hpp"
#include "docrec/rng.hpp"
#include "docrec/tensorize.hpp"

namespace oracle {

using namespace docrec;

/// Equality by enumerating every node permutation and, for each, every relationship permutation.
bool brute_force_equal(const RecordSchema& schema, const Record& a, const Record& b, double eps, bool ordered);

/// -log p(type) [- log p(discrete) ...] + squared coordinate error, written out directly.
double dissimilarity(const RecordSchema& schema, const Node& target, const NodePrediction& pred);

/// Gated categorical loss, written out directly.
double gated_loss(const RecordSchema& schema, const PatchSet& patches, const Node& target, const NodePrediction& pred);

struct Match {
    int position = 0;
    int index = 0;
    double cost = 0.0;
};

/// Enumerates, for every P position, all nodes not yet taken in its segment.
std::vector<Match> brute_force_matches(const RecordSchema& schema, const DecoderPlan& plan,
                                       const std::vector<NodePrediction>& predictions);

/// Random records with values on a coarse grid so that equal nodes occur often.
Node random_node(const RecordSchema& schema, int type, CounterRng& rng, int grid = 3);
Record random_record(const RecordSchema& schema, CounterRng& rng, int max_nodes, int max_relationships, int grid = 3);
/// Permutes nodes and relationships (endpoints rewritten, undirected endpoints shuffled).
Record shuffled(const RecordSchema& schema, const Record& r, CounterRng& rng, bool nodes_too = true);
/// Applies one random edit that may or may not break equality.
Record mutated(const RecordSchema& schema, const Record& r, CounterRng& rng, double eps);

/// Random PatchSet: a random subset (at least one) of the grid cells of a w x h image.
PatchSet random_patches(CounterRng& rng, int width, int height);
/// Random distributions for every head; coordinates follow the argmax patch and pixel.
NodePrediction random_prediction(const RecordSchema& schema, const PatchSet& patches, CounterRng& rng,
                                 double sharpness = 2.0);
/// Distributions that put (almost) all mass on `target`.
NodePrediction perfect_prediction(const RecordSchema& schema, const PatchSet& patches, const Node& target);

/// Every ink pixel (< threshold) of an image, as x + y * width.
std::vector<int> ink_pixels(const DocumentImage& img, int threshold);

}  // namespace oracle
