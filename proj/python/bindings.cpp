#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>

#include "docrec/eval.hpp"
#include "docrec/record_io.hpp"

namespace py = pybind11;
using namespace docrec;

namespace {

// Records cross the boundary as their one-line JSON form; the Python layer decodes it.
const RecordSchema& schema_of(const std::string& domain) { return schema_for(parse_domain(domain)); }

py::array_t<std::uint8_t> to_array(const DocumentImage& img) {
    py::array_t<std::uint8_t> out({img.height, img.width});
    std::copy(img.pixels.begin(), img.pixels.end(), out.mutable_data());
    return out;
}

DocumentImage from_array(const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2) throw InvalidInput("image must be a 2-D uint8 array");
    DocumentImage img(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
    std::copy(a.data(), a.data() + a.size(), img.pixels.begin());
    return img;
}

py::dict patches_dict(const PatchSet& ps) {
    py::array_t<float> values({ps.count(), kPatchPixels});
    std::copy(ps.values.begin(), ps.values.end(), values.mutable_data());
    py::dict d;
    d["values"] = values;
    d["rows"] = ps.rows;
    d["cols"] = ps.cols;
    d["grid"] = py::make_tuple(ps.grid_rows, ps.grid_cols);
    d["image_size"] = py::make_tuple(ps.image_width, ps.image_height);
    return d;
}

RenderStyle style_for(Domain d, py::object style_seed) {
    return style_seed.is_none() ? RenderStyle{} : sample_style(d, style_seed.cast<std::uint64_t>());
}

class PyModel {
public:
    explicit PyModel(const std::string& checkpoint_path) {
        net_ = network_from_checkpoint(load_checkpoint(checkpoint_path), &setup_);
    }
    PyModel(std::unique_ptr<Network<float>> net, RunSetup setup) : setup_(std::move(setup)), net_(std::move(net)) {}

    std::string transcribe(const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& image,
                           int max_nodes) const {
        const auto& schema = schema_for(setup_.engine.domain);
        InferenceResult res;
        {
            py::gil_scoped_release release;
            res = infer(*net_, setup_.bias, schema, patchify(from_array(image)), max_nodes);
        }
        return serialize_record(schema, res.record);
    }

    double accuracy(std::uint64_t seed, int count, double eps) const {
        py::gil_scoped_release release;
        const auto samples = make_samples(setup_.engine, seed, count);
        const auto domain = setup_.engine.domain;
        return transcription_accuracy(*net_, setup_.bias, schema_for(domain), samples, eps > 0 ? eps : default_eps(domain))
            .accuracy;
    }

    std::string setup_json() const { return setup_to_json(setup_); }
    std::size_t parameters() const { return net_->params().scalar_count(); }

private:
    RunSetup setup_;
    std::unique_ptr<Network<float>> net_;
};

py::dict metrics_dict(const StepMetrics& m) {
    py::dict d;
    d["step"] = m.step;
    d["loss"] = m.loss;
    d["components"] = m.components;
    d["grad_norm"] = m.grad_norm;
    d["wall_s"] = m.seconds;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "docrec C++ core";

    py::register_exception<InvalidInput>(m, "InvalidInput", PyExc_ValueError);
    py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
    py::register_exception<NonFiniteLoss>(m, "NonFiniteLoss", PyExc_FloatingPointError);

    m.def("domains", [] { return std::vector<std::string>{"music", "shapes", "lshape"}; });
    m.def("default_eps", [](const std::string& d) { return default_eps(parse_domain(d)); });

    m.def(
        "generate",
        [](const std::string& domain, std::uint64_t seed, const std::string& config) {
            RunSetup setup;
            if (!config.empty()) setup = setup_from_json(config);
            setup.engine.domain = parse_domain(domain);
            return serialize_record(schema_of(domain), generate(setup.engine, seed));
        },
        py::arg("domain"), py::arg("seed"), py::arg("config") = "");

    m.def(
        "render",
        [](const std::string& domain, const std::string& record, py::object style_seed) {
            const auto d = parse_domain(domain);
            return to_array(render_record(d, parse_record(record, schema_for(d)), style_for(d, style_seed)));
        },
        py::arg("domain"), py::arg("record"), py::arg("style_seed") = py::none());

    m.def(
        "patchify",
        [](const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& image, int threshold) {
            return patches_dict(patchify(from_array(image), static_cast<std::uint8_t>(threshold)));
        },
        py::arg("image"), py::arg("threshold") = kDefaultBackgroundThreshold);

    m.def(
        "record_equal",
        [](const std::string& domain, const std::string& a, const std::string& b, double eps, py::object ordered) {
            const auto& s = schema_of(domain);
            const bool ord = ordered.is_none() ? s.structure == RecordStructure::Sequence : ordered.cast<bool>();
            return record_equal(s, parse_record(a, s), parse_record(b, s), eps > 0 ? eps : default_eps(parse_domain(domain)), ord);
        },
        py::arg("domain"), py::arg("a"), py::arg("b"), py::arg("eps") = -1.0, py::arg("ordered") = py::none());

    m.def(
        "sample",
        [](const std::string& domain, std::uint64_t seed) {
            EngineConfig e;
            e.domain = parse_domain(domain);
            const auto s = make_sample(e, seed);
            return py::make_tuple(serialize_record(schema_for(e.domain), s.record), to_array(s.image));
        },
        py::arg("domain"), py::arg("seed"));

    m.def("default_setup", [] { return setup_to_json(RunSetup{}); });
    m.def("merge_setup", [](const std::string& base, const std::string& over) {
        return setup_to_json(merge_setup(setup_from_json(base), over));
    });

    py::class_<PyModel>(m, "Model")
        .def(py::init<const std::string&>(), py::arg("checkpoint"))
        .def("transcribe", &PyModel::transcribe, py::arg("image"), py::arg("max_nodes") = -1)
        .def("accuracy", &PyModel::accuracy, py::arg("seed") = 1'000'000'000ULL, py::arg("count") = 100, py::arg("eps") = -1.0)
        .def_property_readonly("setup", &PyModel::setup_json)
        .def_property_readonly("parameters", &PyModel::parameters);

    py::class_<Trainer>(m, "Trainer")
        .def(py::init([](const std::string& setup) { return std::make_unique<Trainer>(setup_from_json(setup)); }),
             py::arg("setup"))
        .def_static(
            "resume", [](const std::string& path) { return std::make_unique<Trainer>(Trainer::resume(load_checkpoint(path))); },
            py::arg("checkpoint"))
        .def("step", [](Trainer& t) {
            StepMetrics m;
            {
                py::gil_scoped_release release;
                m = t.step();
            }
            return metrics_dict(m);
        })
        .def("save", [](const Trainer& t, const std::string& path) { save_checkpoint(path, t.checkpoint()); }, py::arg("path"))
        .def("model", [](const Trainer& t) {
            auto ckpt = t.checkpoint();
            RunSetup setup;
            auto net = network_from_checkpoint(ckpt, &setup);
            return PyModel(std::move(net), setup);
        })
        .def_property_readonly("steps_done", &Trainer::steps_done)
        .def_property_readonly("setup", [](const Trainer& t) { return setup_to_json(t.setup()); });
}
