#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "docrec/bias.hpp"
#include "docrec/checkpoint.hpp"
#include "docrec/engines.hpp"
#include "docrec/image.hpp"
#include "docrec/model.hpp"
#include "docrec/render.hpp"
#include "docrec/tensorize.hpp"

namespace docrec {

/// One generated training or evaluation example.
struct Sample {
    std::uint64_t seed = 0;
    Record record;
    DocumentImage image;
    PatchSet patches;
};

/// Generates, renders (style drawn from the same seed) and tensorizes one example.
Sample make_sample(const EngineConfig& engine, std::uint64_t seed);

struct TrainConfig {
    int batch_size = 32;
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.98;
    double eps = 1e-9;
    double clip_norm = 0.1;
    double weight_decay = 0.004;
    long long steps = 1000;
    std::uint64_t seed = 0;        // parameter initialisation
    std::uint64_t data_seed = 0;   // first sample seed
    long long dataset_size = 0;    // > 0 cycles through a fixed virtual dataset
    long long checkpoint_interval = 0;
    long long log_interval = 1;

    void check() const;
};

/// Everything that defines a training run.
struct RunSetup {
    EngineConfig engine;
    Bias bias = Bias::Seq;
    ModelConfig model = ModelConfig::desk();
    TrainConfig train;
};

/// JSON round trip. Missing keys keep their defaults; unknown keys are an error.
std::string setup_to_json(const RunSetup& setup);
RunSetup setup_from_json(const std::string& text);
/// Applies `overrides` (a JSON object of the same shape) on top of `setup`.
RunSetup merge_setup(const RunSetup& setup, const std::string& overrides);

/// Seed of sample i in a step, following the virtual dataset.
std::uint64_t sample_seed(const TrainConfig& cfg, long long step, int index);
/// Seed for the bias permutation of sample i in a step (fresh every step).
std::uint64_t plan_seed(std::uint64_t sample, long long step, int index);

/// Forward pass of a batch of plans.
template <typename T>
struct BatchForward {
    PlanBatch batch;
    EncodedImages<T> encoded;
    HeadOutput<T> heads;
    /// Predictions per item and plan position (default-constructed where a row was not selected).
    std::vector<std::vector<NodePrediction>> predictions;
};

/// `all_rows` evaluates the heads at every non-padded position instead of only targeted ones.
template <typename T>
BatchForward<T> forward_plans(Session<T>& s, const Network<T>& net, const std::vector<const PatchSet*>& images,
                              const std::vector<DecoderPlan>& plans, bool all_rows = false);

template <typename T>
struct BatchObjective {
    ad::Var<T> total;
    std::map<std::string, ad::Var<T>> components;
    std::vector<LossReport> reports;  // per item, from the double-precision loss functions
    double reported_total = 0.0;
    std::map<std::string, double> reported_components;
};

/// Batch loss (sum over items). Matching and gating decisions come from the bias loss
/// functions; the differentiable total re-expresses their cross-entropy terms on the tape.
template <typename T>
BatchObjective<T> forward_loss(Session<T>& s, const Network<T>& net, const std::vector<const PatchSet*>& images,
                               const std::vector<DecoderPlan>& plans);

/// Decoupled-weight-decay Adam with bias correction.
struct AdamW {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.98;
    double eps = 1e-9;
    double weight_decay = 0.004;
    std::uint64_t step = 0;
    std::map<std::string, ad::Matrix<float>> m;
    std::map<std::string, ad::Matrix<float>> v;

    explicit AdamW(const TrainConfig& cfg);
    void update(ParameterSet<float>& params);
};

double global_grad_norm(const ParameterSet<float>& params);
/// Scales all gradients by max_norm / (norm + 1e-6) when norm exceeds max_norm; returns the pre-clip norm.
double clip_grad_norm(ParameterSet<float>& params, double max_norm);

class NonFiniteLoss : public std::runtime_error {
public:
    NonFiniteLoss(long long step, std::vector<std::uint64_t> seeds);
    long long step() const { return step_; }
    const std::vector<std::uint64_t>& seeds() const { return seeds_; }

private:
    long long step_;
    std::vector<std::uint64_t> seeds_;
};

struct StepMetrics {
    long long step = 0;  // steps completed after this update
    double loss = 0.0;
    std::map<std::string, double> components;
    double grad_norm = 0.0;
    double seconds = 0.0;
};

/// Metrics line: {"step":..,"loss":..,"components":{..},"grad_norm":..,"wall_s":..}
std::string metrics_json(const StepMetrics& m);

class Trainer {
public:
    explicit Trainer(const RunSetup& setup);
    /// Resumes parameters, optimizer moments and step counter.
    static Trainer resume(const Checkpoint& ckpt);

    StepMetrics step();
    /// Runs until `setup().train.steps`; writes one metrics line per log interval and
    /// saves `checkpoint_path` every checkpoint interval and at the end.
    void run(std::ostream* metrics, const std::string& checkpoint_path,
             const std::function<void(const StepMetrics&)>& on_step = {});

    Checkpoint checkpoint() const;
    const RunSetup& setup() const { return setup_; }
    const RecordSchema& schema() const { return schema_for(setup_.engine.domain); }
    Network<float>& network() { return *net_; }
    const Network<float>& network() const { return *net_; }
    long long steps_done() const { return static_cast<long long>(adam_.step); }

private:
    RunSetup setup_;
    std::unique_ptr<Network<float>> net_;
    AdamW adam_;
};

/// Builds the network described by a checkpoint and loads its parameters.
std::unique_ptr<Network<float>> network_from_checkpoint(const Checkpoint& ckpt, RunSetup* setup = nullptr);

struct InferenceResult {
    Record record;
    std::vector<Node> decoded;          // flat nodes in the model schema, in decoding order
    std::vector<NodePrediction> steps;  // head output at every decoding step
    bool truncated = false;
};

/// Greedy autoregressive decoding of at most `max_nodes` decoded items. The default (< 0) is
/// the schema's max_nodes, or four times that for graphs, whose relationships count too.
InferenceResult infer(const Network<float>& net, Bias bias, const RecordSchema& schema, const PatchSet& patches,
                      int max_nodes = -1);

/// Greedy node from a prediction; returns false on EOS.
bool greedy_node(const RecordSchema& model_schema, const NodePrediction& pred, Node& out);

}  // namespace docrec
