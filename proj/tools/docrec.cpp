// docrec: generate, render, train, infer and evaluate document-to-record models.

#include "CLI11.hpp"
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "docrec/eval.hpp"
#include "docrec/record_io.hpp"

#ifdef DOCREC_HAVE_CHECKS
#include "criteria.hpp"
#endif

using namespace docrec;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kUsage = 1;
constexpr int kFailure = 2;

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string image_name(std::size_t i) {
    std::ostringstream ss;
    ss << std::setw(5) << std::setfill('0') << i << ".png";
    return ss.str();
}

std::string default_run_dir() {
    const char* env = std::getenv("DOCREC_RUN_DIR");
    return env ? env : "runs/latest";
}

// Engine options come from a run-setup JSON so that gen and train share one format.
EngineConfig engine_from(const std::string& config_path, const std::string& domain) {
    RunSetup setup;
    if (!config_path.empty()) setup = setup_from_json(read_text(config_path));
    if (!domain.empty()) {
        setup.engine.domain = parse_domain(domain);
        setup.bias = natural_bias(schema_for(setup.engine.domain));
    }
    return setup.engine;
}

Dataset load_dataset(const std::string& path, Domain* domain) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::string first;
    std::getline(in, first);
    const auto head = json::parse(first);
    const std::string schema = head.at("schema").get<std::string>();
    *domain = parse_domain(schema);
    in.clear();
    in.seekg(0);
    return read_dataset(in, schema_for(*domain));
}

std::uint64_t record_seed(const Dataset& ds, std::size_t i) {
    return static_cast<std::uint64_t>(ds.header.seed_begin) + i;
}

// gen ----------------------------------------------------------------------------------

struct GenArgs {
    std::string domain = "music", config, out_dir;
    int count = 10;
    std::uint64_t seed = 0;
    bool png = false;
};

int cmd_gen(const GenArgs& a) {
    auto engine = engine_from(a.config, a.domain);
    const auto& schema = schema_for(engine.domain);
    fs::create_directories(a.out_dir);
    std::vector<Record> records;
    for (int i = 0; i < a.count; ++i) {
        const auto seed = a.seed + static_cast<std::uint64_t>(i);
        if (a.png) {
            auto s = make_sample(engine, seed);
            write_png((fs::path(a.out_dir) / image_name(static_cast<std::size_t>(i))).string(), s.image);
            records.push_back(std::move(s.record));
        } else {
            records.push_back(generate(engine, seed));
        }
    }
    RunSetup setup;
    setup.engine = engine;
    setup.bias = natural_bias(schema);
    const auto engine_json = json::parse(setup_to_json(setup)).at("engine").dump();
    DatasetHeader header{schema.name, engine_json, static_cast<long long>(a.seed), static_cast<long long>(a.seed) + a.count};
    std::ofstream out(fs::path(a.out_dir) / "records.ndjson");
    write_dataset(out, schema, header, records);
    std::cout << "wrote " << a.count << " " << schema.name << " records to " << a.out_dir << "\n";
    return 0;
}

// render -------------------------------------------------------------------------------

struct RenderArgs {
    std::string records, out_dir, truth;
    long long style_seed = -1;
};

int cmd_render(const RenderArgs& a) {
    Domain domain;
    const auto ds = load_dataset(a.records, &domain);
    Dataset truth;
    if (!a.truth.empty()) {
        Domain td;
        truth = load_dataset(a.truth, &td);
        if (td != domain) throw InvalidInput("--truth has a different schema");
        if (truth.records.size() != ds.records.size()) throw InvalidInput("--truth has a different record count");
    }
    fs::create_directories(a.out_dir);
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
        // Without --style-seed a record gets the style its sample seed would give it.
        const auto seed = a.style_seed >= 0 ? static_cast<std::uint64_t>(a.style_seed) + i
                          : a.truth.empty()  ? record_seed(ds, i)
                                             : record_seed(truth, i);
        const auto style = sample_style(domain, seed);
        const auto img = a.truth.empty() ? render_record(domain, ds.records[i], style)
                                         : render_prediction_overlay(domain, truth.records[i], ds.records[i], style);
        write_png((fs::path(a.out_dir) / image_name(i)).string(), img);
    }
    std::cout << "rendered " << ds.records.size() << " images to " << a.out_dir << "\n";
    return 0;
}

// train --------------------------------------------------------------------------------

struct TrainArgs {
    std::string config, run_dir, resume, set;
    long long steps = -1;
};

int cmd_train(const TrainArgs& a) {
    const std::string run_dir = a.run_dir.empty() ? default_run_dir() : a.run_dir;
    fs::create_directories(run_dir);
    std::unique_ptr<Trainer> trainer;
    if (!a.resume.empty()) {
        trainer = std::make_unique<Trainer>(Trainer::resume(load_checkpoint(a.resume)));
        if (a.steps >= 0 || !a.set.empty()) {
            // Only the step budget can change on resume; anything else would change the run.
            auto setup = trainer->setup();
            if (a.steps >= 0) setup.train.steps = a.steps;
            if (!a.set.empty()) throw InvalidInput("--set cannot be combined with --resume");
            auto ckpt = trainer->checkpoint();
            ckpt.metadata = setup_to_json(setup);
            trainer = std::make_unique<Trainer>(Trainer::resume(ckpt));
        }
    } else {
        RunSetup setup = a.config.empty() ? RunSetup{} : setup_from_json(read_text(a.config));
        if (!a.set.empty()) setup = merge_setup(setup, a.set);
        if (a.steps >= 0) setup.train.steps = a.steps;
        trainer = std::make_unique<Trainer>(setup);
    }
    {
        std::ofstream cfg(fs::path(run_dir) / "config.json");
        cfg << setup_to_json(trainer->setup()) << '\n';
    }
    std::ofstream metrics(fs::path(run_dir) / "metrics.ndjson", a.resume.empty() ? std::ios::trunc : std::ios::app);
    const auto ckpt = (fs::path(run_dir) / "checkpoint.bin").string();
    const long long total = trainer->setup().train.steps;
    trainer->run(&metrics, ckpt, [&](const StepMetrics& m) {
        if (m.step % 100 == 0 || m.step == total) {
            std::cerr << "step " << m.step << "/" << total << " loss " << m.loss << " grad_norm " << m.grad_norm << "\n";
        }
    });
    std::cout << "checkpoint " << ckpt << "\n";
    return 0;
}

// infer / eval -------------------------------------------------------------------------

struct InferArgs {
    std::string checkpoint, out;
    std::vector<std::string> images;
    int max_nodes = -1;
};

int cmd_infer(const InferArgs& a) {
    RunSetup setup;
    const auto net = network_from_checkpoint(load_checkpoint(a.checkpoint), &setup);
    const auto& schema = schema_for(setup.engine.domain);
    std::vector<Record> records;
    for (const auto& path : a.images) {
        const auto res = infer(*net, setup.bias, schema, patchify(read_png(path)), a.max_nodes);
        if (res.truncated) std::cerr << path << ": decoding hit the node limit\n";
        records.push_back(res.record);
    }
    DatasetHeader header{schema.name, "{}", 0, 0};
    if (a.out.empty() || a.out == "-") {
        write_dataset(std::cout, schema, header, records);
    } else {
        std::ofstream out(a.out);
        write_dataset(out, schema, header, records);
    }
    return 0;
}

struct EvalArgs {
    std::string checkpoint, dataset, json_out;
    std::uint64_t seed = 1'000'000'000ULL;
    int count = 100;
    double eps = -1;
};

int cmd_eval(const EvalArgs& a) {
    RunSetup setup;
    const auto net = network_from_checkpoint(load_checkpoint(a.checkpoint), &setup);
    const Domain domain = setup.engine.domain;
    std::vector<Sample> samples;
    if (!a.dataset.empty()) {
        Domain d;
        const auto ds = load_dataset(a.dataset, &d);
        if (d != domain) throw InvalidInput("dataset schema does not match the checkpoint");
        for (std::size_t i = 0; i < ds.records.size(); ++i) {
            Sample s;
            s.seed = record_seed(ds, i);
            s.record = ds.records[i];
            s.image = render_record(domain, s.record, sample_style(domain, s.seed));
            s.patches = patchify(s.image);
            samples.push_back(std::move(s));
        }
    } else {
        samples = make_samples(setup.engine, a.seed, a.count);
    }
    const double eps = a.eps > 0 ? a.eps : default_eps(domain);
    const auto res = transcription_accuracy(*net, setup.bias, schema_for(domain), samples, eps);
    std::cout << "accuracy " << std::fixed << std::setprecision(3) << res.accuracy << " (" << samples.size() << " items)\n";
    for (const auto& [c, n] : res.failures) std::cout << "  " << to_string(c) << " " << n << "\n";
    if (!a.json_out.empty()) std::ofstream(a.json_out) << accuracy_json(res) << '\n';
    return 0;
}

// ablate -------------------------------------------------------------------------------

struct AblateArgs {
    std::string config, run_dir, cells;
    int eval_count = 1000;
};

int cmd_ablate(const AblateArgs& a) {
    AblationConfig cfg;
    if (!a.config.empty()) cfg.base = setup_from_json(read_text(a.config));
    cfg.music = cfg.shapes = cfg.lshape = cfg.base.engine;
    cfg.eval_count = a.eval_count;
    cfg.run_dir = a.run_dir.empty() ? default_run_dir() : a.run_dir;
    fs::create_directories(cfg.run_dir);
    std::vector<std::pair<Domain, Bias>> only;
    std::stringstream ss(a.cells);
    for (std::string item; std::getline(ss, item, ',');) {
        const auto slash = item.find('/');
        if (slash == std::string::npos) throw InvalidInput("cells are domain/bias, e.g. music/seq");
        only.emplace_back(parse_domain(item.substr(0, slash)), parse_bias(item.substr(slash + 1)));
    }
    const auto report = run_ablation_grid(cfg, only, &std::cerr);
    std::cout << format_ablation_table(report);
    std::ofstream(fs::path(cfg.run_dir) / "ablation.json") << ablation_json(report) << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"docrec: document images to structured records"};
    app.require_subcommand(1);

    GenArgs gen;
    auto* g = app.add_subcommand("gen", "generate records (and optionally images) with a synthetic engine");
    g->add_option("--domain", gen.domain, "music, shapes or lshape")->default_val("music");
    g->add_option("--count", gen.count, "number of records")->default_val(10);
    g->add_option("--seed", gen.seed, "first sample seed")->default_val(0);
    g->add_option("--config", gen.config, "run-setup JSON whose engine section is used");
    g->add_option("--out-dir", gen.out_dir, "output directory")->required();
    g->add_flag("--png", gen.png, "also write the rendered images");

    RenderArgs render;
    auto* r = app.add_subcommand("render", "render a records file to PNG images");
    r->add_option("--records", render.records, "records.ndjson")->required()->check(CLI::ExistingFile);
    r->add_option("--out-dir", render.out_dir, "output directory")->required();
    r->add_option("--style-seed", render.style_seed, "first style seed (default: the record seeds)");
    r->add_option("--truth", render.truth, "ground-truth records; writes overlays instead")->check(CLI::ExistingFile);

    TrainArgs train;
    auto* t = app.add_subcommand("train", "train a model");
    t->add_option("--config", train.config, "run-setup JSON")->check(CLI::ExistingFile);
    t->add_option("--run-dir", train.run_dir, "output directory (default $DOCREC_RUN_DIR or runs/latest)");
    t->add_option("--resume", train.resume, "checkpoint to resume")->check(CLI::ExistingFile);
    t->add_option("--steps", train.steps, "override the step budget");
    t->add_option("--set", train.set, "JSON object merged over the config");

    InferArgs inf;
    auto* i = app.add_subcommand("infer", "transcribe images");
    i->add_option("--checkpoint", inf.checkpoint)->required()->check(CLI::ExistingFile);
    i->add_option("--images", inf.images, "PNG files")->required()->check(CLI::ExistingFile);
    i->add_option("--out", inf.out, "records.ndjson (default stdout)");
    i->add_option("--max-nodes", inf.max_nodes, "decoding limit");

    EvalArgs ev;
    auto* e = app.add_subcommand("eval", "transcription accuracy of a checkpoint");
    e->add_option("--checkpoint", ev.checkpoint)->required()->check(CLI::ExistingFile);
    e->add_option("--dataset", ev.dataset, "records.ndjson from gen")->check(CLI::ExistingFile);
    e->add_option("--seed", ev.seed, "first held-out sample seed")->default_val(1'000'000'000ULL);
    e->add_option("--count", ev.count, "held-out sample count")->default_val(100);
    e->add_option("--eps", ev.eps, "coordinate tolerance (default 4 px)");
    e->add_option("--json", ev.json_out, "write per-item results");

    AblateArgs ab;
    auto* a = app.add_subcommand("ablate", "train and evaluate the structure x bias grid");
    a->add_option("--config", ab.config, "run-setup JSON shared by every cell")->check(CLI::ExistingFile);
    a->add_option("--run-dir", ab.run_dir, "per-cell checkpoints and metrics");
    a->add_option("--cells", ab.cells, "comma-separated domain/bias cells (default all five)");
    a->add_option("--eval-count", ab.eval_count)->default_val(1000);

#ifdef DOCREC_HAVE_CHECKS
    std::vector<int> ids;
    criteria::Options sopts;
    auto* st = app.add_subcommand("selftest", "run the acceptance criteria");
    st->add_option("--criteria", ids)->delimiter(',');
    st->add_option("--work-dir", sopts.work_dir)->default_val("selftest");
    st->add_option("--run-dir", sopts.run_dir);
    st->add_flag("--quick", sopts.quick);
#endif

    CLI11_PARSE(app, argc, argv);
    try {
        if (*g) return cmd_gen(gen);
        if (*r) return cmd_render(render);
        if (*t) return cmd_train(train);
        if (*i) return cmd_infer(inf);
        if (*e) return cmd_eval(ev);
        if (*a) return cmd_ablate(ab);
#ifdef DOCREC_HAVE_CHECKS
        if (*st) {
            sopts.cli = fs::canonical("/proc/self/exe").string();
            if (sopts.run_dir.empty()) sopts.run_dir = sopts.work_dir + "/runs";
            sopts.log = &std::cerr;
            if (ids.empty()) ids = criteria::fast_criteria();
            int failures = 0;
            for (int id : ids) {
                const auto res = criteria::run(id, sopts);
                std::cout << criteria::format(res) << std::endl;
                failures += !res.pass;
            }
            return failures == 0 ? 0 : kFailure;
        }
#endif
    } catch (const InvalidInput& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return kUsage;
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return kFailure;
    }
    return kUsage;
}
