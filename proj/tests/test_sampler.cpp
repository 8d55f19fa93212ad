#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <opencv2/imgcodecs.hpp>

#include "cursive/attention_plot.hpp"
#include "cursive/error.hpp"
#include "cursive/render.hpp"
#include "cursive/rng.hpp"
#include "cursive/sampler.hpp"
#include "doctest.h"

using namespace cursive;
namespace fs = std::filesystem;

namespace {

const TokenizerConfig kTok{8, 5, 1.0};

ModelConfig toy_config() {
  ModelConfig mc;
  mc.n_blocks = 2;
  mc.d_model = 16;
  mc.d_context = 16;
  mc.n_heads_self = 4;
  mc.n_heads_cross = 2;
  mc.max_stroke_context = 120;
  mc.max_ascii_context = 32;
  mc.stroke_vocab = kTok.vocab_size();
  return mc;
}

LoadedModel toy_model(std::uint64_t seed = 1) {
  Transformer<float> m(toy_config());
  m.init(seed);
  // Larger weights than the training init so distributions are peaked.
  Rng rng(seed + 100);
  for (auto& p : m.params()) p += static_cast<float>(0.3 * rng.normal());
  return LoadedModel(std::move(m), kTok);
}

std::size_t words_in(const TokenStream& s) {
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), kTok.word_id()));
}

SamplingConfig config(std::uint64_t seed, int max_tokens = 100, double temperature = 1.0) {
  SamplingConfig sc;
  sc.seed = seed;
  sc.max_tokens = max_tokens;
  sc.temperature = temperature;
  return sc;
}

std::string temp_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("cursive_test_" + name);
  fs::remove_all(dir);
  return dir.string();
}

}  // namespace

TEST_CASE("sampled streams follow the grammar and the word count") {
  const LoadedModel lm = toy_model();
  const Sampler sampler(lm);
  const StrokeTokenizer codec(kTok);
  const std::vector<std::string> texts{"a", "the anger", "of Achilles 42 (sing)", "x y z w"};
  for (std::uint64_t seed = 0; seed < 400; ++seed) {
    const auto& text = texts[seed % texts.size()];
    const auto res = sampler.sample(text, config(seed, 10 + static_cast<int>(seed % 90)));
    CHECK_NOTHROW(validate_grammar(res.tokens, kTok));
    CHECK(res.tokens.back() == kTok.end_id());
    CHECK(words_in(res.tokens) == split_words(text).size());
    CHECK(res.tokens.size() <= static_cast<std::size_t>(10 + seed % 90));
    CHECK_NOTHROW(codec.decode(res.tokens));
  }
}

TEST_CASE("a tight budget closes the stream and flags it") {
  const LoadedModel lm = toy_model();
  const Sampler sampler(lm);
  const auto res = sampler.sample("one two three", config(3, 6));
  CHECK(res.truncated);
  CHECK(res.tokens.size() <= 6);
  CHECK(words_in(res.tokens) == 3);
  CHECK_NOTHROW(validate_grammar(res.tokens, kTok));
  CHECK_THROWS_AS(sampler.sample("one two three", config(3, 3)), std::invalid_argument);
}

TEST_CASE("sampling is deterministic and the cold limit is greedy") {
  const LoadedModel lm = toy_model(2);
  const Sampler sampler(lm);
  const auto a = sampler.sample("hello world", config(9));
  const auto b = sampler.sample("hello world", config(9));
  CHECK(a.tokens == b.tokens);
  CHECK(a.entropies == b.entropies);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SamplingConfig greedy = config(seed, 80);
    greedy.greedy = true;
    const auto g = sampler.sample("hello world", greedy);
    const auto cold = sampler.sample("hello world", config(seed, 80, 1e-6));
    CHECK(g.tokens == cold.tokens);
  }
}

TEST_CASE("mean sampling entropy grows with temperature") {
  const LoadedModel lm = toy_model(3);
  const Sampler sampler(lm);
  std::vector<double> means;
  for (double t : {0.5, 1.0, 2.0}) {
    double sum = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) sum += sampler.sample("ab cd", config(seed, 40, t)).mean_entropy();
    means.push_back(sum / 100.0);
  }
  CHECK(means[0] <= means[1]);
  CHECK(means[1] <= means[2]);
}

TEST_CASE("sampler input errors") {
  const LoadedModel lm = toy_model();
  const Sampler sampler(lm);
  try {
    sampler.sample("caf\xc3\xa9", config(1));
    FAIL("expected an error");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("unknown character") != std::string::npos);
  }
  CHECK_THROWS_AS(sampler.sample("   ", config(1)), std::invalid_argument);
  CHECK_THROWS_AS(sampler.sample("a", config(1, 100, 0.0)), std::invalid_argument);
  CHECK_THROWS_AS(sampler.sample("a", config(1, 121)), std::invalid_argument);
  CHECK_THROWS_AS(sampler.sample(std::string(40, 'a'), config(1)), std::invalid_argument);
}

TEST_CASE("warmup tokens condition but are not returned") {
  const LoadedModel lm = toy_model();
  const Sampler sampler(lm);
  SamplingConfig sc = config(5, 60);
  sc.warmup = Warmup{"Vsrc", {1, 9, 2, 12, kTok.word_id()}};
  const auto res = sampler.sample("ab", sc);
  CHECK(words_in(res.tokens) == 1);
  CHECK_NOTHROW(validate_grammar(res.tokens, kTok));
  sc.warmup->tokens = {1, 9, 2};
  CHECK_THROWS_AS(sampler.sample("ab", sc), std::invalid_argument);
  sc.warmup = Warmup{"a b", {1, 9, kTok.word_id()}};
  CHECK_THROWS_AS(sampler.sample("ab", sc), std::invalid_argument);
}

TEST_CASE("regeneration splices after the kept words") {
  const LoadedModel lm = toy_model(4);
  const Sampler sampler(lm);
  const std::string text = "the anger of Achilles";
  const GeneratedPage page = generate_page(sampler, text, config(11, 110));
  REQUIRE(page.spans.size() == 4);

  const auto same = regenerate(sampler, page, {}, config(12, 110));
  CHECK(same.tokens == page.tokens);

  const auto regen = regenerate(sampler, page, {2}, config(12, 110));
  CHECK(regen.spans.size() == 4);
  CHECK(std::equal(page.tokens.begin(), page.tokens.begin() + static_cast<std::ptrdiff_t>(page.spans[2].begin),
                   regen.tokens.begin()));
  CHECK(regen.spans[1] == page.spans[1]);
  CHECK_NOTHROW(validate_grammar(regen.tokens, kTok));

  GeneratedPage cur = page;
  for (std::uint64_t r = 0; r < 3; ++r) {
    cur = regenerate(sampler, cur, {1, 3}, config(20 + r, 110));
    CHECK(cur.text == text);
    CHECK(cur.spans.size() == 4);
    CHECK(std::equal(page.tokens.begin(), page.tokens.begin() + static_cast<std::ptrdiff_t>(page.spans[0].end),
                     cur.tokens.begin()));
  }
  CHECK_THROWS_AS(regenerate(sampler, page, {4}, config(1)), std::out_of_range);
}

TEST_CASE("page JSON round trip and validation") {
  const LoadedModel lm = toy_model();
  const Sampler sampler(lm);
  SamplingConfig sc = config(7, 100, 0.85);
  sc.warmup = Warmup{"Vsrc", {1, 9, kTok.word_id()}};
  const auto page = generate_page(sampler, "the anger of", sc, "abc123");
  const auto j = page_to_json(page, 10);
  CHECK(j["words"].size() == 3);
  CHECK(j["words"][0]["line"] == 0);
  CHECK(j["words"][2]["line"] == 1);
  CHECK(j["coords"] == "canonical");
  const auto back = page_from_json(nlohmann::json::parse(j.dump()));
  CHECK(back.tokens == page.tokens);
  CHECK(back.spans == page.spans);
  CHECK(back.words == page.words);
  CHECK(back.warmup == page.warmup);
  CHECK(back.seed == 7);
  CHECK(back.config_hash == "abc123");
  CHECK(page_to_json(back, 10) == j);

  auto expect_path = [](nlohmann::json doc, const std::string& path) {
    try {
      page_from_json(doc);
      FAIL("expected a schema error");
    } catch (const SchemaError& e) {
      CHECK(e.path() == path);
    }
  };
  auto bad = j;
  bad.erase("text");
  expect_path(bad, "$.text");
  bad = j;
  bad["text"] = "the anger";
  expect_path(bad, "$.tokens");
  bad = j;
  bad["tokens"][1] = kTok.word_id();
  expect_path(bad, "$.tokens[1]");
  bad = j;
  bad["tokenizer"]["r_bins"] = "x";
  expect_path(bad, "$.tokenizer.r_bins");
}

TEST_CASE("greedy line breaking") {
  CHECK(line_breaks({"the", "anger", "of", "Achilles"}, 9) == std::vector<int>{0, 0, 1, 2});
  CHECK(line_breaks({"the", "anger", "of", "Achilles"}, 40) == std::vector<int>{0, 0, 0, 0});
  CHECK(line_breaks({"unbreakable", "a"}, 3) == std::vector<int>{0, 1});
  CHECK(line_breaks({}, 5).empty());
  CHECK_THROWS(line_breaks({"a"}, 0));
}

TEST_CASE("SVG rendering") {
  GeneratedPage empty;
  empty.tokenizer = kTok;
  const auto svg0 = render_svg(empty);
  CHECK(svg0.find("<svg") != std::string::npos);
  CHECK(svg0.find("</svg>") != std::string::npos);
  CHECK(svg0.find("<path") == std::string::npos);

  const LoadedModel lm = toy_model(5);
  const Sampler sampler(lm);
  const auto page = generate_page(sampler, "the anger of Achilles", config(3, 110));
  SvgOptions opt;
  opt.line_width_chars = 10;
  const auto svg = render_svg(page, opt);
  auto count = [&](const std::string& needle) {
    std::size_t n = 0;
    for (auto pos = svg.find(needle); pos != std::string::npos; pos = svg.find(needle, pos + 1)) ++n;
    return n;
  };
  CHECK(count("<g class=\"line\"") >= 2);
  CHECK(count("<path") == drawn_run_count(page));
  CHECK(render_svg(page, opt) == svg);
  opt.line_width_chars = 100;
  const auto one = render_svg(page, opt);
  CHECK(one.find("data-line=\"1\"") == std::string::npos);
}

TEST_CASE("attention extraction for the reference config") {
  Transformer<float> model{ModelConfig{}};
  model.init(1);
  const GeneratedPage page = [&] {
    GeneratedPage p;
    p.text = "ab";
    p.words = {"ab"};
    p.tokenizer = TokenizerConfig{};
    p.tokens = {3, 221, 7, 301, p.tokenizer.word_id(), p.tokenizer.end_id()};
    return p;
  }();
  const auto [ids, ascii] = page_inputs(page);
  CHECK(ids.size() == page.tokens.size());
  CHECK(ids.front() == page.tokenizer.end_id());
  const auto maps = extract_attention(model, ids, ascii);
  CHECK(maps.layers == 5);
  CHECK(maps.heads_self == 4);
  CHECK(maps.heads_cross == 4);
  CHECK(maps.self.size() == std::size_t(5 * 4 * 6 * 6));
  CHECK(maps.cross.size() == std::size_t(5 * 4 * 6 * 2));

  const auto dir = temp_dir("attn");
  const auto files = plot_attention(maps, page.text, dir);
  CHECK(files.size() == 40);
  CHECK(fs::exists(fs::path(dir) / "self_l4_h3.png"));
  CHECK(fs::exists(fs::path(dir) / "cross_l0_h0.png"));
  const auto img = cv::imread((fs::path(dir) / "cross_l2_h1.png").string(), cv::IMREAD_UNCHANGED);
  CHECK(img.channels() == 1);
  CHECK(img.depth() == CV_8U);

  auto read = [](const std::string& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
  };
  const std::string before = read(files[7]);
  plot_attention(maps, page.text, dir);
  CHECK(read(files[7]) == before);
  fs::remove_all(dir);

  const auto blocker = temp_dir("attn_blocker");
  std::ofstream(blocker) << "x";
  CHECK_THROWS_AS(plot_attention(maps, page.text, blocker + "/sub"), ArtifactError);
  fs::remove(blocker);
}

TEST_CASE("a diagonal attention map renders as a diagonal heatmap") {
  const int n = 30;
  std::vector<double> values(n * n, 0.0);
  for (int i = 0; i < n; ++i) {
    values[static_cast<std::size_t>(i * n + i)] = 0.7;
    if (i > 0) values[static_cast<std::size_t>(i * n + i - 1)] = 0.3;
  }
  const auto map = render_heatmap(values, n, n, {}, "diag");
  const cv::Mat img = cv::imdecode(map.png, cv::IMREAD_GRAYSCALE);
  const auto& g = map.geometry;
  for (int i = 0; i < n; ++i) {
    const int y = g.origin_y + i * g.cell_h + g.cell_h / 2;
    int best = 0;
    int best_x = -1;
    for (int x = g.origin_x; x < g.origin_x + n * g.cell_w; ++x) {
      if (img.at<unsigned char>(y, x) > best) {
        best = img.at<unsigned char>(y, x);
        best_x = x;
      }
    }
    CHECK((best_x - g.origin_x) / g.cell_w == i);
  }
  CHECK_THROWS(render_heatmap(values, n, n - 1, {}, "bad"));
}
