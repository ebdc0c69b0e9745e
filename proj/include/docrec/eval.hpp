#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "docrec/train.hpp"

namespace docrec {

enum class FailureCategory { None, WrongCount, TypeError, PropertyError, StructureError };
std::string_view to_string(FailureCategory c);

/// Why `pred` differs from `truth` (None when record_equal holds). Checked in order:
/// node or relationship counts, node types, node properties, relationship structure.
FailureCategory classify(const RecordSchema& schema, const Record& truth, const Record& pred, double eps, bool ordered);

struct ItemVerdict {
    std::uint64_t seed = 0;
    bool correct = false;
    FailureCategory category = FailureCategory::None;
    int truth_nodes = 0;  // record nodes plus relationships
    int predicted_nodes = 0;
    bool truncated = false;
};

struct AccuracyResult {
    double accuracy = 0.0;
    std::vector<ItemVerdict> items;
    std::map<FailureCategory, int> failures;
    std::map<int, std::pair<int, int>> by_length;  // truth size -> (correct, total)
};

/// Aggregates verdicts; accuracy is the mean of the per-item booleans.
AccuracyResult summarize(std::vector<ItemVerdict> items);

/// Infers every sample and compares with record_equal (ordered for sequence schemas).
AccuracyResult transcription_accuracy(const Network<float>& net, Bias bias, const RecordSchema& schema,
                                      const std::vector<Sample>& samples, double eps);

/// Samples with seeds [seed_begin, seed_begin + count).
std::vector<Sample> make_samples(const EngineConfig& engine, std::uint64_t seed_begin, int count);

std::string accuracy_json(const AccuracyResult& r);

struct AblationCell {
    Domain domain = Domain::Music;
    Bias bias = Bias::Seq;
    double accuracy = 0.0;
    long long steps = 0;
    int batch_size = 0;
    std::size_t parameters = 0;
    AccuracyResult result;
};

struct AblationConfig {
    RunSetup base;                 // model and training budget shared by every cell
    EngineConfig music;
    EngineConfig shapes;
    EngineConfig lshape;
    int eval_count = 1000;
    std::uint64_t eval_seed = 1'000'000'000ULL;  // held out: training seeds stay far below
    std::string run_dir;           // per-cell checkpoints and metrics when non-empty
};

/// The five populated cells of the structure x bias grid.
std::vector<std::pair<Domain, Bias>> ablation_cells();

struct AblationReport {
    std::vector<AblationCell> cells;
    const AblationCell* find(Domain d, Bias b) const;
};

/// Trains and evaluates every cell with the same model configuration, batch size and step count.
/// `only` restricts the run to a subset of cells (empty = all).
AblationReport run_ablation_grid(const AblationConfig& cfg, const std::vector<std::pair<Domain, Bias>>& only = {},
                                 std::ostream* log = nullptr);

/// Rows are record structures, columns are biases; untested cells print "-".
std::string format_ablation_table(const AblationReport& report);
std::string ablation_json(const AblationReport& report);

namespace overlay_tone {
inline constexpr std::uint8_t kTruthOnly = 160;
inline constexpr std::uint8_t kPredictionOnly = 96;
inline constexpr std::uint8_t kBoth = 0;
}  // namespace overlay_tone

/// Grayscale overlay: ink only in the truth rendering gets tone kTruthOnly, ink only in the
/// prediction kPredictionOnly, ink in both kBoth; background stays 255.
DocumentImage render_prediction_overlay(Domain domain, const Record& truth, const Record& pred,
                                        const RenderStyle& style = {});

}  // namespace docrec
