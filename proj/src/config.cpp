#include <nlohmann/json.hpp>

#include "docrec/train.hpp"

namespace docrec {

using nlohmann::json;

namespace {

json to_json(const RunSetup& s) {
    const auto& e = s.engine;
    const auto& m = s.model;
    const auto& t = s.train;
    return json{
        {"domain", std::string(to_string(e.domain))},
        {"bias", std::string(to_string(s.bias))},
        {"engine",
         {{"music", {{"bars", e.music.bars}, {"forced_timesig", e.music.forced_timesig}}},
          {"shapes",
           {{"max_primitives", e.shapes.max_primitives},
            {"min_primitives", e.shapes.min_primitives},
            {"min_line_length", e.shapes.min_line_length},
            {"min_radius", e.shapes.min_radius},
            {"margin_min", e.shapes.margin_min},
            {"margin_max", e.shapes.margin_max},
            {"rectilinear_probability", e.shapes.rectilinear_probability}}},
          {"lshape", {{"annotation_probability", e.lshape.annotation_probability}, {"value_max", e.lshape.value_max}}}}},
        {"model",
         {{"embed_dim", m.embed_dim},
          {"encoder_layers", m.encoder_layers},
          {"decoder_layers", m.decoder_layers},
          {"heads", m.heads},
          {"ffn_hidden", m.ffn_hidden},
          {"property_dim", m.property_dim},
          {"patch_size", m.patch_size},
          {"pixel_vocab", m.pixel_vocab}}},
        {"train",
         {{"batch_size", t.batch_size},
          {"lr", t.lr},
          {"beta1", t.beta1},
          {"beta2", t.beta2},
          {"eps", t.eps},
          {"clip_norm", t.clip_norm},
          {"weight_decay", t.weight_decay},
          {"steps", t.steps},
          {"seed", t.seed},
          {"data_seed", t.data_seed},
          {"dataset_size", t.dataset_size},
          {"checkpoint_interval", t.checkpoint_interval},
          {"log_interval", t.log_interval}}},
    };
}

RunSetup from_json(const json& j) {
    RunSetup s;
    s.engine.domain = parse_domain(j.at("domain").get<std::string>());
    s.bias = parse_bias(j.at("bias").get<std::string>());
    const auto& e = j.at("engine");
    s.engine.music.bars = e.at("music").at("bars").get<int>();
    s.engine.music.forced_timesig = e.at("music").at("forced_timesig").get<int>();
    const auto& sh = e.at("shapes");
    s.engine.shapes.max_primitives = sh.at("max_primitives").get<int>();
    s.engine.shapes.min_primitives = sh.at("min_primitives").get<int>();
    s.engine.shapes.min_line_length = sh.at("min_line_length").get<double>();
    s.engine.shapes.min_radius = sh.at("min_radius").get<double>();
    s.engine.shapes.margin_min = sh.at("margin_min").get<double>();
    s.engine.shapes.margin_max = sh.at("margin_max").get<double>();
    s.engine.shapes.rectilinear_probability = sh.at("rectilinear_probability").get<double>();
    s.engine.lshape.annotation_probability = e.at("lshape").at("annotation_probability").get<double>();
    s.engine.lshape.value_max = e.at("lshape").at("value_max").get<int>();
    const auto& m = j.at("model");
    s.model.embed_dim = m.at("embed_dim").get<int>();
    s.model.encoder_layers = m.at("encoder_layers").get<int>();
    s.model.decoder_layers = m.at("decoder_layers").get<int>();
    s.model.heads = m.at("heads").get<int>();
    s.model.ffn_hidden = m.at("ffn_hidden").get<int>();
    s.model.property_dim = m.at("property_dim").get<int>();
    s.model.patch_size = m.at("patch_size").get<int>();
    s.model.pixel_vocab = m.at("pixel_vocab").get<int>();
    const auto& t = j.at("train");
    s.train.batch_size = t.at("batch_size").get<int>();
    s.train.lr = t.at("lr").get<double>();
    s.train.beta1 = t.at("beta1").get<double>();
    s.train.beta2 = t.at("beta2").get<double>();
    s.train.eps = t.at("eps").get<double>();
    s.train.clip_norm = t.at("clip_norm").get<double>();
    s.train.weight_decay = t.at("weight_decay").get<double>();
    s.train.steps = t.at("steps").get<long long>();
    s.train.seed = t.at("seed").get<std::uint64_t>();
    s.train.data_seed = t.at("data_seed").get<std::uint64_t>();
    s.train.dataset_size = t.at("dataset_size").get<long long>();
    s.train.checkpoint_interval = t.at("checkpoint_interval").get<long long>();
    s.train.log_interval = t.at("log_interval").get<long long>();
    s.engine.music.check();
    s.engine.shapes.check();
    s.engine.lshape.check();
    s.model.check();
    s.train.check();
    check_bias(s.bias, schema_for(s.engine.domain));
    return s;
}

void check_keys(const json& base, const json& over, const std::string& path) {
    if (!over.is_object()) throw InvalidInput("config '" + path + "' must be an object");
    for (const auto& [k, v] : over.items()) {
        const std::string here = path.empty() ? k : path + "." + k;
        if (here == "model.preset") continue;
        if (!base.contains(k)) throw InvalidInput("unknown config key '" + here + "'");
        if (base.at(k).is_object()) check_keys(base.at(k), v, here);
    }
}

}  // namespace

std::string setup_to_json(const RunSetup& setup) { return to_json(setup).dump(2); }

RunSetup merge_setup(const RunSetup& setup, const std::string& overrides) {
    json over;
    try {
        over = json::parse(overrides);
    } catch (const json::parse_error& e) {
        throw ParseError(e.what(), e.byte);
    }
    json base = to_json(setup);
    check_keys(base, over, "");
    if (over.contains("model") && over["model"].contains("preset")) {
        const auto preset = over["model"]["preset"].get<std::string>();
        RunSetup p = setup;
        if (preset == "desk") {
            p.model = ModelConfig::desk();
        } else if (preset == "full") {
            p.model = ModelConfig::full();
        } else if (preset == "tiny") {
            p.model = ModelConfig::tiny();
        } else {
            throw InvalidInput("unknown model preset '" + preset + "'");
        }
        base["model"] = to_json(p)["model"];
        over["model"].erase("preset");
    }
    base.merge_patch(over);
    try {
        return from_json(base);
    } catch (const json::exception& e) {
        throw InvalidInput(std::string("bad config value: ") + e.what());
    }
}

RunSetup setup_from_json(const std::string& text) { return merge_setup(RunSetup{}, text); }

std::string metrics_json(const StepMetrics& m) {
    json j{{"step", m.step}, {"loss", m.loss}, {"components", m.components}, {"grad_norm", m.grad_norm},
           {"wall_s", m.seconds}};
    return j.dump();
}

}  // namespace docrec
