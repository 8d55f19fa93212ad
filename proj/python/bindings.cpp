#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cursive/error.hpp"
#include "cursive/model/checkpoint.hpp"
#include "cursive/project.hpp"
#include "cursive/record.hpp"
#include "cursive/render.hpp"
#include "cursive/sampler.hpp"
#include "cursive/stroke.hpp"
#include "cursive/synth.hpp"
#include "cursive/tokenizer.hpp"
#include "cursive/wordbank.hpp"

namespace py = pybind11;
using namespace cursive;

namespace {

using PointTuple = std::tuple<double, double, int>;

TokenizerConfig tokenizer(int theta_bins, int r_bins, double r_max) {
  TokenizerConfig t{theta_bins, r_bins, r_max};
  t.validate();
  return t;
}

StrokeSequence to_points(const std::vector<PointTuple>& pts) {
  StrokeSequence out;
  out.reserve(pts.size());
  for (const auto& [x, y, p] : pts) out.push_back({x, y, p != 0});
  return out;
}

std::vector<PointTuple> from_points(const StrokeSequence& seq) {
  std::vector<PointTuple> out;
  out.reserve(seq.size());
  for (const auto& p : seq) out.emplace_back(p.x, p.y, p.pen ? 1 : 0);
  return out;
}

/// Checkpoint-backed generator; the sampler keeps a pointer to the model.
class Model {
 public:
  explicit Model(const std::string& path) : model_(load_checkpoint(path)), sampler_(model_) {}

  std::string config_hash() const { return model_.config_hash; }
  int max_tokens() const { return model_.model.config().max_stroke_context; }

  std::string generate(const std::string& text, double temperature, std::uint64_t seed, std::optional<int> max_tokens,
                       int line_width) const {
    SamplingConfig sc;
    sc.temperature = temperature;
    sc.seed = seed;
    sc.max_tokens = max_tokens.value_or(this->max_tokens());
    py::gil_scoped_release release;
    return page_to_json(generate_page(sampler_, text, sc, model_.config_hash), line_width).dump();
  }

  std::string regenerate(const std::string& page_json, const std::vector<std::size_t>& indices, double temperature,
                         std::uint64_t seed, std::optional<int> max_tokens, int line_width) const {
    const GeneratedPage page = page_from_json(nlohmann::json::parse(page_json));
    SamplingConfig sc;
    sc.temperature = temperature;
    sc.seed = seed;
    sc.max_tokens = max_tokens.value_or(this->max_tokens());
    py::gil_scoped_release release;
    return page_to_json(cursive::regenerate(sampler_, page, indices, sc), line_width).dump();
  }

 private:
  LoadedModel model_;
  Sampler sampler_;
};

}  // namespace

PYBIND11_MODULE(_cursive, m) {
  m.doc() = "Native core of the cursive handwriting toolkit";

  static py::exception<SchemaError> schema_error(m, "SchemaError", PyExc_ValueError);
  static py::exception<GrammarError> grammar_error(m, "GrammarError", PyExc_ValueError);
  static py::exception<ConfigError> config_error(m, "ConfigError", PyExc_ValueError);
  static py::exception<ArtifactError> artifact_error(m, "ArtifactError", PyExc_OSError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const SchemaError& e) {
      schema_error(e.what());
    } catch (const GrammarError& e) {
      grammar_error(e.what());
    } catch (const ConfigError& e) {
      config_error(e.what());
    } catch (const ArtifactError& e) {
      artifact_error(e.what());
    } catch (const nlohmann::json::exception& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    }
  });

  m.def(
      "word_bank",
      [](std::uint64_t seed, std::size_t n) { return generate_bank(seed, WordBankConfig::defaults(), n); },
      py::arg("seed"), py::arg("n"));

  m.def(
      "encode",
      [](const std::vector<PointTuple>& points, const std::vector<std::size_t>& word_breaks, int theta_bins,
         int r_bins, double r_max) {
        const StrokeTokenizer tok(tokenizer(theta_bins, r_bins, r_max));
        const auto seq = to_points(points);
        return tok.encode(to_polar(coords_to_offsets(seq)), word_breaks);
      },
      py::arg("points"), py::arg("word_breaks") = std::vector<std::size_t>{}, py::arg("theta_bins") = 220,
      py::arg("r_bins") = 150, py::arg("r_max") = 1.0);

  m.def(
      "decode",
      [](const std::vector<TokenId>& tokens, int theta_bins, int r_bins, double r_max) {
        const StrokeTokenizer tok(tokenizer(theta_bins, r_bins, r_max));
        const auto decoded = tok.decode(tokens);
        return std::make_pair(from_points(offsets_to_coords(to_cartesian(decoded.offsets))), decoded.word_breaks);
      },
      py::arg("tokens"), py::arg("theta_bins") = 220, py::arg("r_bins") = 150, py::arg("r_max") = 1.0);

  m.def(
      "validate_grammar",
      [](const std::vector<TokenId>& tokens, int theta_bins, int r_bins) {
        validate_grammar(tokens, tokenizer(theta_bins, r_bins, 1.0));
      },
      py::arg("tokens"), py::arg("theta_bins") = 220, py::arg("r_bins") = 150);

  m.def(
      "ingest_json", [](const std::string& text) { return export_json(ingest_json(text)); }, py::arg("text"));

  m.def(
      "synth_words",
      [](const std::vector<std::string>& words, std::uint64_t seed) {
        return export_json(render_words(words, GlyphSet::builtin(), SynthConfig{}, seed));
      },
      py::arg("words"), py::arg("seed"));

  m.def(
      "project_config",
      [](std::optional<std::string> path, const std::vector<std::string>& overrides) {
        const auto c = load_project(path, overrides);
        auto j = c.to_json();
        j["hash"] = c.hash();
        j["data_hash"] = c.data_hash();
        return j.dump();
      },
      py::arg("path") = py::none(), py::arg("overrides") = std::vector<std::string>{});

  m.def(
      "render_svg",
      [](const std::string& page_json, int line_width) {
        SvgOptions opt;
        opt.line_width_chars = line_width;
        return render_svg(page_from_json(nlohmann::json::parse(page_json)), opt);
      },
      py::arg("page_json"), py::arg("line_width") = 40);

  py::class_<Model>(m, "Model")
      .def(py::init<const std::string&>(), py::arg("checkpoint"))
      .def_property_readonly("config_hash", &Model::config_hash)
      .def_property_readonly("max_tokens", &Model::max_tokens)
      .def("generate", &Model::generate, py::arg("text"), py::arg("temperature") = 1.0, py::arg("seed") = 0,
           py::arg("max_tokens") = py::none(), py::arg("line_width") = 40)
      .def("regenerate", &Model::regenerate, py::arg("page_json"), py::arg("word_indices"),
           py::arg("temperature") = 1.0, py::arg("seed") = 0, py::arg("max_tokens") = py::none(),
           py::arg("line_width") = 40);
}
