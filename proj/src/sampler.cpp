#include "cursive/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "cursive/error.hpp"
#include "cursive/rng.hpp"

namespace cursive {
namespace {

std::size_t count_word_tokens(const TokenStream& tokens, const TokenizerConfig& tok) {
  return static_cast<std::size_t>(std::count(tokens.begin(), tokens.end(), tok.word_id()));
}

/// Checks that `tokens` is a sequence of complete words without END.
void check_open_prefix(const TokenStream& tokens, const TokenizerConfig& tok, const char* what) {
  TokenStream closed = tokens;
  closed.push_back(tok.end_id());
  if (auto v = find_grammar_violation(closed, tok)) {
    throw std::invalid_argument(std::string(what) + ": token " + std::to_string(v->index) + ": " + v->reason);
  }
  if (!tokens.empty() && tokens.back() != tok.word_id()) {
    throw std::invalid_argument(std::string(what) + " must end with a WORD token");
  }
}

std::string context_text(const std::string& text, const std::optional<Warmup>& warmup) {
  return warmup ? warmup->text + " " + text : text;
}

}  // namespace

void SamplingConfig::validate() const {
  if (!std::isfinite(temperature) || temperature <= 0.0) {
    throw std::invalid_argument("temperature must be finite and positive, got " + std::to_string(temperature));
  }
  if (max_tokens < 2) throw std::invalid_argument("max_tokens must be at least 2");
}

nlohmann::json SamplingConfig::to_json() const {
  nlohmann::json j{{"temperature", temperature}, {"seed", seed}, {"max_tokens", max_tokens}, {"greedy", greedy}};
  if (warmup) j["warmup"] = {{"text", warmup->text}, {"tokens", warmup->tokens}};
  return j;
}

SamplingConfig SamplingConfig::from_json(const nlohmann::json& j) {
  SamplingConfig sc;
  sc.temperature = j.value("temperature", sc.temperature);
  sc.seed = j.value("seed", sc.seed);
  sc.max_tokens = j.value("max_tokens", sc.max_tokens);
  sc.greedy = j.value("greedy", sc.greedy);
  if (j.contains("warmup") && !j["warmup"].is_null()) {
    const auto& w = j["warmup"];
    sc.warmup = Warmup{w.at("text").get<std::string>(), w.at("tokens").get<TokenStream>()};
  }
  sc.validate();
  return sc;
}

double SampleResult::mean_entropy() const {
  if (entropies.empty()) return 0.0;
  double s = 0.0;
  for (double e : entropies) s += e;
  return s / static_cast<double>(entropies.size());
}

LoadedModel::LoadedModel(const Checkpoint& ckpt)
    : model(ckpt.model), tokenizer(ckpt.tokenizer), config_hash(ckpt.config_hash) {
  if (ckpt.params.size() != model.params().size()) {
    throw ArtifactError("checkpoint holds " + std::to_string(ckpt.params.size()) + " parameters, the model needs " +
                        std::to_string(model.params().size()));
  }
  if (tokenizer.vocab_size() != ckpt.model.stroke_vocab) {
    throw ArtifactError("checkpoint tokenizer vocabulary does not match the model");
  }
  model.params().assign(ckpt.params.begin(), ckpt.params.end());
}

LoadedModel::LoadedModel(Transformer<float> m, TokenizerConfig tok, std::string hash)
    : model(std::move(m)), tokenizer(tok), config_hash(std::move(hash)) {
  if (tokenizer.vocab_size() != model.config().stroke_vocab) {
    throw std::invalid_argument("tokenizer vocabulary does not match the model");
  }
}

Sampler::Sampler(const LoadedModel& model) : model_(&model.model), tok_(model.tokenizer) {}

SampleResult Sampler::sample(const std::string& text, const SamplingConfig& sc) const {
  return continue_from(text, {}, sc);
}

SampleResult Sampler::continue_from(const std::string& text, const TokenStream& prefix, const SamplingConfig& sc) const {
  sc.validate();
  const auto& mc = model_->config();
  const std::size_t words = split_words(text).size();
  if (words == 0) throw std::invalid_argument("text has no words");
  const std::vector<int> ascii = ascii_.encode(context_text(text, sc.warmup));
  if (ascii.size() > static_cast<std::size_t>(mc.max_ascii_context)) {
    throw std::invalid_argument("text has " + std::to_string(ascii.size()) + " characters, the model reads at most " +
                                std::to_string(mc.max_ascii_context));
  }
  TokenStream warm;
  if (sc.warmup) {
    check_open_prefix(sc.warmup->tokens, tok_, "warmup");
    if (count_word_tokens(sc.warmup->tokens, tok_) != split_words(sc.warmup->text).size()) {
      throw std::invalid_argument("warmup WORD tokens do not match the warmup text");
    }
    warm = sc.warmup->tokens;
  }
  check_open_prefix(prefix, tok_, "prefix");
  std::size_t words_done = count_word_tokens(prefix, tok_);
  if (words_done > words) throw std::invalid_argument("prefix has more words than the text");
  const auto budget = static_cast<std::size_t>(sc.max_tokens);
  if (prefix.size() + (words - words_done) + 1 > budget) {
    throw std::invalid_argument("max_tokens " + std::to_string(budget) + " cannot hold the prefix and the remaining words");
  }
  if (warm.size() + budget > static_cast<std::size_t>(mc.max_stroke_context)) {
    throw std::invalid_argument("warmup plus max_tokens exceed the model context of " +
                                std::to_string(mc.max_stroke_context));
  }

  typename Transformer<float>::Decoder dec(*model_, ascii);
  RowVector<float> logits = dec.step(tok_.end_id());
  for (TokenId t : warm) logits = dec.step(t);
  for (TokenId t : prefix) logits = dec.step(t);

  SampleResult res;
  res.tokens = prefix;
  Rng rng(sc.seed);
  bool after_theta = false;
  std::size_t pairs_in_word = 0;
  std::vector<TokenId> allowed;
  std::vector<double> weights;
  while (true) {
    allowed.clear();
    if (after_theta) {
      for (TokenId t = tok_.theta_bins; t < tok_.theta_bins + 2 * tok_.r_bins; ++t) allowed.push_back(t);
    } else {
      if (words_done == words) {
        res.tokens.push_back(tok_.end_id());
        break;
      }
      const std::size_t closers = (words - words_done) + 1;
      const std::size_t remaining = budget - res.tokens.size();
      if (remaining < closers + 2) {
        // No room for another offset: close the open words.
        for (; words_done < words; ++words_done) res.tokens.push_back(tok_.word_id());
        res.tokens.push_back(tok_.end_id());
        res.truncated = true;
        break;
      }
      for (TokenId t = 0; t < tok_.theta_bins; ++t) allowed.push_back(t);
      if (pairs_in_word > 0) allowed.push_back(tok_.word_id());
    }

    double max = -std::numeric_limits<double>::infinity();
    for (TokenId t : allowed) max = std::max(max, static_cast<double>(logits(t)) / sc.temperature);
    weights.resize(allowed.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < allowed.size(); ++i) {
      weights[i] = std::exp(static_cast<double>(logits(allowed[i])) / sc.temperature - max);
      sum += weights[i];
    }
    double entropy = 0.0;
    for (double w : weights) {
      const double q = w / sum;
      if (q > 0.0) entropy -= q * std::log(q);
    }
    res.entropies.push_back(entropy);

    std::size_t pick = 0;
    if (sc.greedy) {
      for (std::size_t i = 1; i < allowed.size(); ++i) {
        if (logits(allowed[i]) > logits(allowed[pick])) pick = i;
      }
    } else {
      const double u = rng.uniform() * sum;
      double acc = 0.0;
      pick = allowed.size() - 1;
      for (std::size_t i = 0; i < allowed.size(); ++i) {
        acc += weights[i];
        if (u < acc) {
          pick = i;
          break;
        }
      }
    }
    const TokenId token = allowed[pick];
    res.tokens.push_back(token);
    if (token == tok_.word_id()) {
      ++words_done;
      pairs_in_word = 0;
    } else if (tok_.is_theta(token)) {
      after_theta = true;
    } else {
      after_theta = false;
      ++pairs_in_word;
    }
    logits = dec.step(token);
  }
  return res;
}

std::vector<StrokeSequence> GeneratedPage::word_points() const {
  std::vector<StrokeSequence> out;
  if (tokens.empty()) return out;
  const StrokeTokenizer codec(tokenizer);
  const DecodedStream decoded = codec.decode(tokens);
  if (decoded.offsets.empty()) return std::vector<StrokeSequence>(decoded.word_breaks.size());
  const StrokeSequence all = offsets_to_coords(to_cartesian(decoded.offsets));
  std::size_t start = 0;
  for (std::size_t end : decoded.word_breaks) {
    out.emplace_back(all.begin() + static_cast<std::ptrdiff_t>(start), all.begin() + static_cast<std::ptrdiff_t>(end));
    start = end;
  }
  return out;
}

std::vector<WordSpan> word_spans(const TokenStream& tokens, const TokenizerConfig& tok) {
  validate_grammar(tokens, tok);
  std::vector<WordSpan> spans;
  std::size_t begin = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] == tok.word_id()) {
      spans.push_back({begin, i + 1});
      begin = i + 1;
    } else if (tokens[i] == tok.end_id()) {
      if (i != begin) throw GrammarError(begin, "offsets after the last WORD token");
      break;
    }
  }
  return spans;
}

GeneratedPage make_page(const std::string& text, const SampleResult& result, const TokenizerConfig& tok,
                        const SamplingConfig& sc, const std::string& config_hash) {
  GeneratedPage page;
  page.text = text;
  page.words = split_words(text);
  page.tokens = result.tokens;
  page.spans = word_spans(page.tokens, tok);
  if (page.spans.size() != page.words.size()) {
    throw std::logic_error("generated stream has " + std::to_string(page.spans.size()) + " words, text has " +
                           std::to_string(page.words.size()));
  }
  page.tokenizer = tok;
  page.temperature = sc.temperature;
  page.seed = sc.seed;
  page.truncated = result.truncated;
  page.warmup = sc.warmup;
  page.config_hash = config_hash;
  return page;
}

GeneratedPage generate_page(const Sampler& sampler, const std::string& text, const SamplingConfig& sc,
                            const std::string& config_hash) {
  return make_page(text, sampler.sample(text, sc), sampler.tokenizer(), sc, config_hash);
}

GeneratedPage regenerate(const Sampler& sampler, const GeneratedPage& page, const std::vector<std::size_t>& word_indices,
                         const SamplingConfig& sc) {
  for (std::size_t i : word_indices) {
    if (i >= page.spans.size()) {
      throw std::out_of_range("word index " + std::to_string(i) + " is out of range for a page of " +
                              std::to_string(page.spans.size()) + " words");
    }
  }
  if (word_indices.empty()) return page;
  if (!(sampler.tokenizer() == page.tokenizer)) throw std::invalid_argument("page was written with a different tokenizer");
  const std::size_t first = *std::min_element(word_indices.begin(), word_indices.end());
  const TokenStream prefix(page.tokens.begin(), page.tokens.begin() + static_cast<std::ptrdiff_t>(page.spans[first].begin));
  SamplingConfig run = sc;
  run.warmup = page.warmup;
  const SampleResult res = sampler.continue_from(page.text, prefix, run);
  return make_page(page.text, res, page.tokenizer, run, page.config_hash);
}

std::vector<int> line_breaks(const std::vector<std::string>& words, int line_width_chars) {
  if (line_width_chars < 1) throw std::invalid_argument("line width must be positive");
  std::vector<int> lines;
  int line = 0;
  std::size_t used = 0;
  const auto budget = static_cast<std::size_t>(line_width_chars);
  for (const auto& w : words) {
    if (used > 0 && used + 1 + w.size() > budget) {
      ++line;
      used = 0;
    }
    used += (used > 0 ? 1 : 0) + w.size();
    lines.push_back(line);
  }
  return lines;
}

namespace {

nlohmann::json tokenizer_json(const TokenizerConfig& tok) {
  return {{"theta_bins", tok.theta_bins}, {"r_bins", tok.r_bins}, {"r_max", tok.r_max}};
}

template <typename V>
V field(const nlohmann::json& j, const char* key, const std::string& path) {
  if (!j.contains(key)) throw SchemaError(path + "." + key, "missing");
  try {
    return j.at(key).get<V>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(path + "." + key, e.what());
  }
}

}  // namespace

nlohmann::json page_to_json(const GeneratedPage& page, int line_width_chars) {
  const auto points = page.word_points();
  const auto lines = line_breaks(page.words, line_width_chars);
  nlohmann::json words = nlohmann::json::array();
  for (std::size_t i = 0; i < page.words.size(); ++i) {
    nlohmann::json pts = nlohmann::json::array();
    if (i < points.size()) {
      for (const auto& p : points[i]) pts.push_back({p.x, p.y, p.pen ? 1 : 0});
    }
    nlohmann::json span = nlohmann::json::array();
    if (i < page.spans.size()) span = {page.spans[i].begin, page.spans[i].end};
    words.push_back({{"text", page.words[i]}, {"span", span}, {"line", lines[i]}, {"points", std::move(pts)}});
  }
  nlohmann::json j{{"format", "cursive-page"},
                   {"version", 1},
                   {"text", page.text},
                   {"tokens", page.tokens},
                   {"tokenizer", tokenizer_json(page.tokenizer)},
                   {"temperature", page.temperature},
                   {"seed", page.seed},
                   {"truncated", page.truncated},
                   {"config_hash", page.config_hash},
                   {"coords", "canonical"},
                   {"line_width_chars", line_width_chars},
                   {"words", std::move(words)}};
  if (page.warmup) j["warmup"] = {{"text", page.warmup->text}, {"tokens", page.warmup->tokens}};
  return j;
}

GeneratedPage page_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw SchemaError("$", "page must be an object");
  if (j.contains("format") && j["format"] != "cursive-page") throw SchemaError("$.format", "expected \"cursive-page\"");
  GeneratedPage page;
  page.text = field<std::string>(j, "text", "$");
  page.tokens = field<TokenStream>(j, "tokens", "$");
  if (!j.contains("tokenizer") || !j["tokenizer"].is_object()) throw SchemaError("$.tokenizer", "missing or not an object");
  const auto& t = j["tokenizer"];
  page.tokenizer.theta_bins = field<int>(t, "theta_bins", "$.tokenizer");
  page.tokenizer.r_bins = field<int>(t, "r_bins", "$.tokenizer");
  page.tokenizer.r_max = field<double>(t, "r_max", "$.tokenizer");
  try {
    page.tokenizer.validate();
  } catch (const std::exception& e) {
    throw SchemaError("$.tokenizer", e.what());
  }
  page.temperature = j.contains("temperature") ? field<double>(j, "temperature", "$") : 1.0;
  page.seed = j.contains("seed") ? field<std::uint64_t>(j, "seed", "$") : 0;
  page.truncated = j.contains("truncated") ? field<bool>(j, "truncated", "$") : false;
  page.config_hash = j.contains("config_hash") ? field<std::string>(j, "config_hash", "$") : "";
  if (j.contains("warmup") && !j["warmup"].is_null()) {
    page.warmup = Warmup{field<std::string>(j["warmup"], "text", "$.warmup"),
                         field<TokenStream>(j["warmup"], "tokens", "$.warmup")};
  }
  page.words = split_words(page.text);
  try {
    page.spans = word_spans(page.tokens, page.tokenizer);
  } catch (const GrammarError& e) {
    throw SchemaError("$.tokens[" + std::to_string(e.index()) + "]", e.what());
  }
  if (page.spans.size() != page.words.size()) {
    throw SchemaError("$.tokens", "stream has " + std::to_string(page.spans.size()) + " words, text has " +
                                      std::to_string(page.words.size()));
  }
  return page;
}

}  // namespace cursive
