#include "cursive/project.hpp"

#include <fstream>
#include <sstream>
#include <thread>

#include "cursive/ascii.hpp"
#include "cursive/error.hpp"
#include "cursive/hash.hpp"

namespace cursive {
namespace {

nlohmann::json tokenizer_json(const TokenizerConfig& tok, const std::optional<double>& r_max) {
  nlohmann::json j{{"theta_bins", tok.theta_bins}, {"r_bins", tok.r_bins}, {"r_max", nullptr}};
  if (r_max) j["r_max"] = *r_max;
  return j;
}

nlohmann::json hashed_sections(const ProjectConfig& c, bool data_only) {
  nlohmann::json j{{"seed", c.seed},
                   {"tokenizer", tokenizer_json(c.tokenizer, c.r_max)},
                   {"wordbank", c.wordbank.to_json()},
                   {"synth", c.synth.to_json()},
                   {"dataset", c.dataset.to_json()}};
  if (!data_only) {
    j["prompt_bank_size"] = c.prompt_bank_size;
    j["model"] = c.model.to_json();
    j["train"] = c.train.to_json();
  }
  return j;
}

template <typename F>
auto section(const nlohmann::json& j, const char* name, F&& parse) {
  try {
    return parse(j.at(name));
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string(name) + ": " + e.what());
  }
}

}  // namespace

void ProjectConfig::validate() const {
  auto check = [](const char* name, auto&& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      throw ConfigError(std::string(name) + ": " + e.what());
    }
  };
  check("tokenizer", [&] { tokenizer.validate(); });
  check("wordbank", [&] { wordbank.validate(); });
  check("synth", [&] { synth.validate(); });
  check("dataset", [&] { dataset.validate(); });
  check("model", [&] { model.validate(); });
  check("train", [&] { train.validate(); });
  if (r_max && !(*r_max > 0.0)) throw ConfigError("tokenizer.r_max must be positive");
  if (model.stroke_vocab != tokenizer.vocab_size()) {
    throw ConfigError("model.stroke_vocab is " + std::to_string(model.stroke_vocab) + " but the tokenizer has " +
                      std::to_string(tokenizer.vocab_size()) + " tokens");
  }
  if (model.ascii_vocab != AsciiTokenizer().vocab_size()) {
    throw ConfigError("model.ascii_vocab must be " + std::to_string(AsciiTokenizer().vocab_size()));
  }
  if (dataset.max_context > model.max_stroke_context) {
    throw ConfigError("dataset.max_context exceeds model.max_stroke_context");
  }
  if (dataset.max_ascii_context > model.max_ascii_context) {
    throw ConfigError("dataset.max_ascii_context exceeds model.max_ascii_context");
  }
  if (prompt_bank_size == 0) throw ConfigError("prompt_bank_size must be positive");
}

nlohmann::json ProjectConfig::to_json() const {
  nlohmann::json j = hashed_sections(*this, false);
  j["paths"] = {{"records", paths.records},         {"corpus", paths.corpus}, {"checkpoints", paths.checkpoints},
                {"checkpoint", paths.checkpoint},   {"store", paths.store},   {"glyphs", paths.glyphs}};
  j["threads"] = threads;
  return j;
}

ProjectConfig ProjectConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  ProjectConfig c;
  try {
    c.seed = j.value("seed", c.seed);
    c.threads = j.value("threads", c.threads);
    c.prompt_bank_size = j.value("prompt_bank_size", c.prompt_bank_size);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  if (j.contains("tokenizer")) {
    section(j, "tokenizer", [&](const nlohmann::json& t) {
      c.tokenizer.theta_bins = t.value("theta_bins", c.tokenizer.theta_bins);
      c.tokenizer.r_bins = t.value("r_bins", c.tokenizer.r_bins);
      if (t.contains("r_max") && !t["r_max"].is_null()) c.r_max = t["r_max"].get<double>();
      return 0;
    });
  }
  if (c.r_max) c.tokenizer.r_max = *c.r_max;
  // The model vocabulary follows the tokenizer unless stated explicitly.
  c.model.stroke_vocab = c.tokenizer.vocab_size();
  if (j.contains("wordbank")) c.wordbank = section(j, "wordbank", [&](const auto& s) { return WordBankConfig::from_json(s); });
  if (j.contains("synth")) c.synth = section(j, "synth", [&](const auto& s) { return SynthConfig::from_json(s); });
  if (j.contains("dataset")) c.dataset = section(j, "dataset", [&](const auto& s) { return DatasetConfig::from_json(s); });
  if (j.contains("model")) {
    nlohmann::json m = j["model"];
    if (m.is_object() && !m.contains("stroke_vocab")) m["stroke_vocab"] = c.model.stroke_vocab;
    c.model = section(nlohmann::json{{"model", m}}, "model", [&](const auto& s) { return ModelConfig::from_json(s); });
  }
  if (j.contains("train")) c.train = section(j, "train", [&](const auto& s) { return TrainConfig::from_json(s); });
  if (j.contains("paths")) {
    section(j, "paths", [&](const nlohmann::json& p) {
      c.paths.records = p.value("records", c.paths.records);
      c.paths.corpus = p.value("corpus", c.paths.corpus);
      c.paths.checkpoints = p.value("checkpoints", c.paths.checkpoints);
      c.paths.checkpoint = p.value("checkpoint", c.paths.checkpoint);
      c.paths.store = p.value("store", c.paths.store);
      c.paths.glyphs = p.value("glyphs", c.paths.glyphs);
      return 0;
    });
  }
  c.validate();
  return c;
}

std::string ProjectConfig::hash() const { return fnv1a_hex(hashed_sections(*this, false).dump()); }

std::string ProjectConfig::data_hash() const { return fnv1a_hex(hashed_sections(*this, true).dump()); }

unsigned ProjectConfig::resolved_threads() const {
  if (threads > 0) return threads;
  return std::max(1u, std::thread::hardware_concurrency());
}

CorpusOptions ProjectConfig::corpus_options() const {
  CorpusOptions o;
  o.dataset = dataset;
  o.tokenizer = tokenizer;
  o.r_max = r_max;
  o.seed = seed;
  o.config_hash = hash();
  o.data_hash = data_hash();
  o.threads = resolved_threads();
  return o;
}

void apply_override(nlohmann::json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(raw);
  } catch (const nlohmann::json::parse_error&) {
    value = raw;
  }
  nlohmann::json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("override key '" + key + "' has an empty component");
    if (!node->is_object()) {
      if (!node->is_null()) throw ConfigError("override key '" + key + "' descends into a non-object");
      *node = nlohmann::json::object();
    }
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

ProjectConfig load_project(const std::optional<std::string>& path, const std::vector<std::string>& overrides) {
  nlohmann::json doc = nlohmann::json::object();
  if (path) {
    std::ifstream in(*path);
    if (!in) throw ArtifactError("cannot read config " + *path);
    std::stringstream ss;
    ss << in.rdbuf();
    try {
      doc = nlohmann::json::parse(ss.str());
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError(*path + ": " + e.what());
    }
  }
  for (const auto& o : overrides) apply_override(doc, o);
  return ProjectConfig::from_json(doc);
}

}  // namespace cursive
