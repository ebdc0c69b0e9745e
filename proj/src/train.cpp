#include "docrec/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>
#include <sstream>

#include "docrec/rng.hpp"

namespace docrec {

using ad::Matrix;
using ad::Var;

Sample make_sample(const EngineConfig& engine, std::uint64_t seed) {
    Sample s;
    s.seed = seed;
    s.record = generate(engine, seed);
    s.image = render_record(engine.domain, s.record, sample_style(engine.domain, seed));
    s.patches = patchify(s.image);
    return s;
}

void TrainConfig::check() const {
    if (batch_size <= 0) throw InvalidInput("batch_size must be positive");
    if (!(lr > 0) || !(eps > 0) || !(clip_norm > 0) || weight_decay < 0) {
        throw InvalidInput("optimizer hyperparameters must be positive");
    }
    if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) throw InvalidInput("betas must lie in [0, 1)");
    if (steps < 0 || dataset_size < 0 || checkpoint_interval < 0 || log_interval <= 0) {
        throw InvalidInput("step counts must be non-negative and log_interval positive");
    }
}

std::uint64_t sample_seed(const TrainConfig& cfg, long long step, int index) {
    const auto k = static_cast<std::uint64_t>(step) * static_cast<std::uint64_t>(cfg.batch_size) + static_cast<std::uint64_t>(index);
    return cfg.data_seed + (cfg.dataset_size > 0 ? k % static_cast<std::uint64_t>(cfg.dataset_size) : k);
}

std::uint64_t plan_seed(std::uint64_t sample, long long step, int index) {
    return CounterRng::mix(sample ^ CounterRng::mix(static_cast<std::uint64_t>(step) * 0x10001ULL + static_cast<std::uint64_t>(index) + 0x51ED));
}

template <typename T>
BatchForward<T> forward_plans(Session<T>& s, const Network<T>& net, const std::vector<const PatchSet*>& images,
                              const std::vector<DecoderPlan>& plans, bool all_rows) {
    if (images.size() != plans.size()) throw InvalidInput("images and plans differ in count");
    BatchForward<T> out;
    out.batch = assemble_plans(plans, net.schema());
    const int B = static_cast<int>(plans.size());
    const int L = out.batch.nodes.length;
    out.encoded = net.encode(s, images);
    auto x = net.embed(s, out.batch.nodes);
    auto h = net.decode(s, x, out.encoded, B, L, out.batch.mask);
    std::vector<int> rows;
    if (all_rows) {
        for (int b = 0; b < B; ++b) {
            for (int p = 0; p < plans[static_cast<std::size_t>(b)].length(); ++p) rows.push_back(b * L + p);
        }
    } else {
        rows = out.batch.target_rows;
    }
    out.heads = net.heads(s, h, out.encoded, L, rows);
    out.predictions.resize(plans.size());
    for (int b = 0; b < B; ++b) out.predictions[static_cast<std::size_t>(b)].resize(static_cast<std::size_t>(plans[static_cast<std::size_t>(b)].length()));
    for (std::size_t i = 0; i < out.heads.rows.size(); ++i) {
        const int b = out.heads.rows[i] / L;
        const int p = out.heads.rows[i] % L;
        out.predictions[static_cast<std::size_t>(b)][static_cast<std::size_t>(p)] =
            net.prediction(out.heads, static_cast<int>(i), *images[static_cast<std::size_t>(b)]);
    }
    return out;
}

namespace {

struct TermLists {
    std::vector<ad::CrossEntropyTerm> type, discrete, patch;
    std::vector<std::vector<ad::CrossEntropyTerm>> pixel;
};

}  // namespace

template <typename T>
BatchObjective<T> forward_loss(Session<T>& s, const Network<T>& net, const std::vector<const PatchSet*>& images,
                               const std::vector<DecoderPlan>& plans) {
    auto fwd = forward_plans(s, net, images, plans, false);
    const auto& layout = net.layout();
    const int L = fwd.batch.nodes.length;
    const int C = layout.coord_heads;
    BatchObjective<T> obj;
    std::map<std::string, TermLists> lists;
    for (std::size_t b = 0; b < plans.size(); ++b) {
        auto report = compute_loss(net.schema(), plans[b], fwd.predictions[b], *images[b]);
        for (const auto& st : report.scored) {
            const int row = static_cast<int>(b) * L + st.position;
            const auto it = std::lower_bound(fwd.heads.rows.begin(), fwd.heads.rows.end(), row);
            const int index = static_cast<int>(it - fwd.heads.rows.begin());
            auto& tl = lists[st.component];
            tl.pixel.resize(static_cast<std::size_t>(C));
            for (const auto& term : st.terms) {
                const auto t = static_cast<std::size_t>(term.type);
                const auto k = static_cast<std::size_t>(term.slot);
                switch (term.kind) {
                    case TermKind::Type: tl.type.push_back({index, 0, layout.type_count + 1, term.target}); break;
                    case TermKind::Discrete:
                        tl.discrete.push_back({index, layout.logit_offset[t][k], layout.vocab[t][k], term.target});
                        break;
                    case TermKind::Patch: {
                        const int c = layout.coord_head[t][k];
                        tl.patch.push_back({index * C + c, 0, images[b]->count(), term.target});
                        break;
                    }
                    case TermKind::Pixel: {
                        const int c = layout.coord_head[t][k];
                        tl.pixel[static_cast<std::size_t>(c)].push_back({index, 0, net.config().pixel_vocab, term.target});
                        break;
                    }
                }
            }
        }
        for (const auto& [k, v] : report.components) obj.reported_components[k] += v;
        obj.reported_total += report.total;
        obj.reports.push_back(std::move(report));
    }
    std::vector<Var<T>> totals;
    for (const auto& [name, v] : obj.reported_components) {
        std::vector<Var<T>> parts;
        auto it = lists.find(name);
        if (it != lists.end()) {
            auto& tl = it->second;
            if (!tl.type.empty()) parts.push_back(ad::cross_entropy(fwd.heads.type_logits, std::move(tl.type)));
            if (!tl.discrete.empty()) parts.push_back(ad::cross_entropy(fwd.heads.discrete_logits, std::move(tl.discrete)));
            if (!tl.patch.empty()) parts.push_back(ad::cross_entropy(fwd.heads.patch_scores, std::move(tl.patch)));
            for (int c = 0; c < C; ++c) {
                auto& px = tl.pixel[static_cast<std::size_t>(c)];
                if (!px.empty()) parts.push_back(ad::cross_entropy(fwd.heads.pixel_logits[static_cast<std::size_t>(c)], std::move(px)));
            }
        }
        Var<T> comp = parts.empty() ? s.tape.constant(Matrix<T>::Zero(1, 1)) : ad::sum(parts);
        obj.components[name] = comp;
        totals.push_back(comp);
    }
    obj.total = totals.empty() ? s.tape.constant(Matrix<T>::Zero(1, 1)) : ad::sum(totals);
    return obj;
}

template BatchForward<float> forward_plans(Session<float>&, const Network<float>&, const std::vector<const PatchSet*>&,
                                           const std::vector<DecoderPlan>&, bool);
template BatchForward<double> forward_plans(Session<double>&, const Network<double>&, const std::vector<const PatchSet*>&,
                                            const std::vector<DecoderPlan>&, bool);
template BatchObjective<float> forward_loss(Session<float>&, const Network<float>&, const std::vector<const PatchSet*>&,
                                            const std::vector<DecoderPlan>&);
template BatchObjective<double> forward_loss(Session<double>&, const Network<double>&, const std::vector<const PatchSet*>&,
                                             const std::vector<DecoderPlan>&);

AdamW::AdamW(const TrainConfig& cfg)
    : lr(cfg.lr), beta1(cfg.beta1), beta2(cfg.beta2), eps(cfg.eps), weight_decay(cfg.weight_decay) {}

void AdamW::update(ParameterSet<float>& params) {
    ++step;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    const float decay = static_cast<float>(1.0 - lr * weight_decay);
    const float b1 = static_cast<float>(beta1), b2 = static_cast<float>(beta2);
    const float step_size = static_cast<float>(lr / c1);
    const float inv_sqrt_c2 = static_cast<float>(1.0 / std::sqrt(c2));
    const float e = static_cast<float>(eps);
    for (auto& [name, p] : params.values) {
        const auto& g = params.grads.at(name);
        auto& mm = m[name];
        auto& vv = v[name];
        if (mm.size() == 0) {
            mm = Matrix<float>::Zero(p.rows(), p.cols());
            vv = Matrix<float>::Zero(p.rows(), p.cols());
        }
        p *= decay;
        mm = b1 * mm + (1.0f - b1) * g;
        vv = b2 * vv + (1.0f - b2) * g.cwiseProduct(g);
        p.array() -= step_size * mm.array() / (vv.array().sqrt() * inv_sqrt_c2 + e);
    }
}

double global_grad_norm(const ParameterSet<float>& params) {
    double sq = 0.0;
    for (const auto& [name, g] : params.grads) {
        for (Eigen::Index i = 0; i < g.size(); ++i) sq += static_cast<double>(g.data()[i]) * static_cast<double>(g.data()[i]);
    }
    return std::sqrt(sq);
}

double clip_grad_norm(ParameterSet<float>& params, double max_norm) {
    const double norm = global_grad_norm(params);
    const double coef = max_norm / (norm + 1e-6);
    if (coef < 1.0) {
        for (auto& [name, g] : params.grads) g *= static_cast<float>(coef);
    }
    return norm;
}

NonFiniteLoss::NonFiniteLoss(long long step, std::vector<std::uint64_t> seeds)
    : std::runtime_error([&] {
          std::ostringstream ss;
          ss << "non-finite loss at step " << step << "; batch sample seeds:";
          for (auto s : seeds) ss << ' ' << s;
          return ss.str();
      }()),
      step_(step),
      seeds_(std::move(seeds)) {}

Trainer::Trainer(const RunSetup& setup) : setup_(setup), adam_(setup.train) {
    setup_.model.check();
    setup_.train.check();
    check_bias(setup_.bias, schema());
    net_ = std::make_unique<Network<float>>(setup_.model, model_schema(setup_.bias, schema()));
    net_->init(setup_.train.seed);
}

Trainer Trainer::resume(const Checkpoint& ckpt) {
    Trainer t(setup_from_json(ckpt.metadata));
    for (auto& [name, m] : t.net_->params().values) {
        auto it = ckpt.params.find(name);
        if (it == ckpt.params.end() || it->second.rows() != m.rows() || it->second.cols() != m.cols()) {
            throw std::runtime_error("checkpoint does not match the network at " + name);
        }
        m = it->second;
    }
    t.adam_.m = ckpt.moment1;
    t.adam_.v = ckpt.moment2;
    t.adam_.step = ckpt.step;
    return t;
}

StepMetrics Trainer::step() {
    const auto start = std::chrono::steady_clock::now();
    const auto& cfg = setup_.train;
    const long long k = steps_done();
    std::vector<Sample> samples;
    std::vector<DecoderPlan> plans;
    std::vector<std::uint64_t> seeds;
    for (int i = 0; i < cfg.batch_size; ++i) {
        const auto seed = sample_seed(cfg, k, i);
        seeds.push_back(seed);
        samples.push_back(make_sample(setup_.engine, seed));
        plans.push_back(make_plan(setup_.bias, schema(), samples.back().record, plan_seed(seed, k, i)));
    }
    std::vector<const PatchSet*> images;
    for (const auto& s : samples) images.push_back(&s.patches);
    auto& params = net_->params();
    params.zero_grads();
    StepMetrics metrics;
    {
        Session<float> session(params, true);
        auto obj = forward_loss(session, *net_, images, plans);
        const double loss = obj.total.value()(0, 0);
        if (!std::isfinite(loss)) throw NonFiniteLoss(k, seeds);
        session.tape.backward(obj.total);
        metrics.loss = loss;
        for (const auto& [name, v] : obj.components) metrics.components[name] = v.value()(0, 0);
    }
    metrics.grad_norm = clip_grad_norm(params, cfg.clip_norm);
    if (!std::isfinite(metrics.grad_norm)) throw NonFiniteLoss(k, seeds);
    adam_.update(params);
    metrics.step = steps_done();
    metrics.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return metrics;
}

void Trainer::run(std::ostream* metrics, const std::string& checkpoint_path,
                  const std::function<void(const StepMetrics&)>& on_step) {
    const auto& cfg = setup_.train;
    while (steps_done() < cfg.steps) {
        const auto m = step();
        if (metrics && (m.step % cfg.log_interval == 0 || m.step == cfg.steps)) {
            *metrics << metrics_json(m) << '\n';
            metrics->flush();
        }
        if (on_step) on_step(m);
        if (!checkpoint_path.empty() && cfg.checkpoint_interval > 0 && m.step % cfg.checkpoint_interval == 0) {
            save_checkpoint(checkpoint_path, checkpoint());
        }
    }
    if (!checkpoint_path.empty()) save_checkpoint(checkpoint_path, checkpoint());
}

Checkpoint Trainer::checkpoint() const {
    Checkpoint c;
    c.metadata = setup_to_json(setup_);
    c.step = adam_.step;
    c.params = net_->params().values;
    c.moment1 = adam_.m;
    c.moment2 = adam_.v;
    return c;
}

std::unique_ptr<Network<float>> network_from_checkpoint(const Checkpoint& ckpt, RunSetup* setup) {
    const auto s = setup_from_json(ckpt.metadata);
    auto net = std::make_unique<Network<float>>(s.model, model_schema(s.bias, schema_for(s.engine.domain)));
    for (auto& [name, m] : net->params().values) {
        auto it = ckpt.params.find(name);
        if (it == ckpt.params.end() || it->second.rows() != m.rows() || it->second.cols() != m.cols()) {
            throw std::runtime_error("checkpoint does not match the network at " + name);
        }
        m = it->second;
    }
    if (setup) *setup = s;
    return net;
}

bool greedy_node(const RecordSchema& model_schema, const NodePrediction& pred, Node& out) {
    const int type = argmax_index(pred.type_dist.begin(), pred.type_dist.end());
    if (type == model_schema.eos_type()) return false;
    out = Node{type, {}, {}};
    const auto t = static_cast<std::size_t>(type);
    for (const auto& dist : pred.discrete.at(t)) out.discrete.push_back(argmax_index(dist.begin(), dist.end()));
    for (const auto& point : pred.points.at(t)) {
        out.continuous.push_back(point.x);
        out.continuous.push_back(point.y);
    }
    return true;
}

InferenceResult infer(const Network<float>& net, Bias bias, const RecordSchema& schema, const PatchSet& patches,
                      int max_nodes) {
    check_bias(bias, schema);
    const auto& ms = net.schema();
    // Graph decodes relationship nodes too; an L-shape can carry as many relationships as nodes.
    const int default_limit = schema.structure == RecordStructure::Graph ? 4 * schema.max_nodes : schema.max_nodes;
    const int limit = max_nodes < 0 ? default_limit : max_nodes;
    InferenceResult result;
    Session<float> s(net.params());
    const std::vector<const PatchSet*> images{&patches};
    const auto encoded = net.encode(s, images);
    while (true) {
        const auto plan = plan_in_order(bias, ms, result.decoded);
        const PlanBatch batch = assemble_plans({plan}, ms);
        const int L = batch.nodes.length;
        auto x = net.embed(s, batch.nodes);
        auto h = net.decode(s, x, encoded, 1, L, batch.mask);
        const auto heads = net.heads(s, h, encoded, L, {L - 1});
        result.steps.push_back(net.prediction(heads, 0, patches));
        Node node;
        if (!greedy_node(ms, result.steps.back(), node)) break;
        if (static_cast<int>(result.decoded.size()) >= limit) {
            result.truncated = true;
            break;
        }
        result.decoded.push_back(std::move(node));
    }
    result.record = assemble_record(bias, schema, result.decoded);
    return result;
}

}  // namespace docrec
