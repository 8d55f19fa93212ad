#include <algorithm>
#include <filesystem>
#include <set>
#include <stdexcept>

#include "cursive/dataset.hpp"
#include "cursive/synth.hpp"
#include "cursive/wordbank.hpp"
#include "doctest.h"

using namespace cursive;

namespace {

std::vector<SampleRecord> numbered_records(std::size_t n) {
  std::vector<SampleRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    SampleRecord r;
    r.word = "a";
    r.points = {{0, 0, false}, {double(i), 1, true}};
    out.push_back(r);
  }
  return out;
}

StrokeSequence random_strokes(Rng& rng, std::size_t n) {
  StrokeSequence s;
  for (std::size_t i = 0; i < n; ++i) s.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), i > 0 && rng.uniform() < 0.9});
  return s;
}

std::vector<std::pair<StrokePoint, StrokePoint>> run_endpoints(const StrokeSequence& s) {
  std::vector<std::pair<StrokePoint, StrokePoint>> out;
  for (const auto& run : pen_runs(s)) out.emplace_back(s[run.first], s[run.last]);
  return out;
}

const std::vector<SampleRecord>& synthetic_pool() {
  static const auto pool = render_words(generate_bank(5, WordBankConfig::defaults(), 300), GlyphSet::builtin(),
                                        SynthConfig{}, 6);
  return pool;
}

}  // namespace

TEST_CASE("split sizes and determinism") {
  const auto records = numbered_records(3500);
  const auto [train, test] = split(records, 0.95, 42);
  CHECK(train.size() == 3325);
  CHECK(test.size() == 175);
  const auto again = split(records, 0.95, 42);
  CHECK(again.first == train);
  CHECK(again.second == test);

  std::multiset<double> seen;
  for (const auto* pool : {&train, &test})
    for (const auto& r : *pool) seen.insert(r.points[1].x);
  CHECK(seen.size() == 3500);
  CHECK(std::set<double>(seen.begin(), seen.end()).size() == 3500);

  const auto one = split(numbered_records(1), 0.95, 1);
  CHECK(one.first.size() == 1);
  CHECK(one.second.empty());

  CHECK_THROWS_AS(split({}, 0.95, 1), std::invalid_argument);
  CHECK_THROWS_AS(split(records, 1.0, 1), std::invalid_argument);
}

TEST_CASE("downsample examples") {
  const StrokeSequence two{{0, 0, false}, {1, 1, true}};
  CHECK(downsample(two, 0.6, 3) == two);

  StrokeSequence line;
  for (int i = 0; i < 100; ++i) line.push_back({double(i), 0, i > 0});
  const auto kept = downsample(line, 0.60, 9);
  CHECK(kept.size() == 40);
  CHECK(kept.front() == line.front());
  CHECK(kept.back() == line.back());
  CHECK(downsample(line, 0.60, 9) == kept);
}

TEST_CASE("downsample removes every interior point when there are too few") {
  const StrokeSequence s{{0, 0, false}, {1, 0, true}, {2, 0, true}, {3, 0, false}, {4, 0, true}};
  const auto kept = downsample(s, 0.75, 1);
  CHECK(kept == StrokeSequence{{0, 0, false}, {2, 0, true}, {3, 0, false}, {4, 0, true}});
}

TEST_CASE("downsample preserves pen-run endpoints") {
  Rng rng(8);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto s = random_strokes(rng, 2 + rng.below(120));
    const double f = rng.uniform(0.55, 0.75);
    const auto kept = downsample(s, f, rng.next());
    CHECK(count_drawn_runs(kept) == count_drawn_runs(s));
    CHECK(run_endpoints(kept) == run_endpoints(s));
    std::size_t interior = 0;
    for (const auto& run : pen_runs(s)) interior += run.size() - std::min<std::size_t>(run.size(), 2);
    const auto target = static_cast<std::size_t>(std::floor(f * double(s.size()) + 1e-9));
    CHECK(s.size() - kept.size() == std::min(target, interior));
  }
}

TEST_CASE("augmentation draws stay inside their ranges") {
  const AugmentationRanges ranges;
  Rng rng(10);
  for (int i = 0; i < 1000; ++i) {
    const std::size_t m = 5 + rng.below(600);
    const auto p = draw_augmentation(rng, ranges, m);
    CHECK(ranges.shear_x.contains(p.shear_x));
    CHECK(ranges.scale.contains(p.scale_x));
    CHECK(ranges.scale.contains(p.scale_y));
    CHECK(ranges.drop_fraction.contains(p.drop_fraction));
    const auto removed = std::floor(p.drop_fraction * double(m) + 1e-9) / double(m);
    CHECK(ranges.drop_fraction.contains(removed));
  }
}

TEST_CASE("augment composes affine and downsampling") {
  const StrokeSequence two{{0, 0, false}, {1, 1, true}};
  CHECK(augment(two, AugmentationParams{0, 1, 1, 0.7, 4}) == two);

  const StrokeSequence box{{0, 0, false}, {2, 0, true}, {2, 3, true}, {0, 3, true}};
  const auto scaled = augment(box, AugmentationParams{0, 1.1, 0.9, 0.0, 1});
  const auto a = bounding_box(box);
  const auto b = bounding_box(scaled);
  CHECK(b.width() == doctest::Approx(1.1 * a.width()).epsilon(1e-15));
  CHECK(b.height() == doctest::Approx(0.9 * a.height()).epsilon(1e-15));

  const AugmentationParams p{0.2, 0.95, 1.05, 0.6, 77};
  Rng rng(2);
  const auto s = random_strokes(rng, 80);
  CHECK(augment(s, p) == augment(s, p));
}

TEST_CASE("assembled sequences have one WORD per word and fit the context") {
  const auto& pool = synthetic_pool();
  const DatasetConfig cfg;
  const SequenceAssembler assembler(pool, cfg, median_char_width(pool));
  const StrokeTokenizer tok(TokenizerConfig{220, 150, 0.5});
  CHECK(assembler.assemble(0, 1, tok).empty());
  const auto seqs = assembler.assemble(1000, 3, tok);
  REQUIRE(seqs.size() == 1000);
  for (const auto& s : seqs) {
    CHECK(std::count(s.stream.begin(), s.stream.end(), tok.config().word_id()) == 4);
    CHECK_FALSE(find_grammar_violation(s.stream, tok.config()).has_value());
    CHECK(s.stream.size() <= 1050);
    CHECK(split_words(s.text).size() == 4);
    CHECK(AsciiTokenizer().decode(s.ascii_ids) == s.text);
  }
  CHECK(assembler.assemble(20, 3, tok) == std::vector<TrainingSequence>(seqs.begin(), seqs.begin() + 20));
}

TEST_CASE("assembled geometry joins words left to right with a pen-up gap") {
  const auto& pool = synthetic_pool();
  DatasetConfig cfg;
  cfg.augmentation = {{0, 0}, {1, 1}, {0, 0}};
  const double gap = 0.7;
  const SequenceAssembler assembler(pool, cfg, gap);
  Rng rng(12);
  const auto geo = assembler.draw_geometry(rng);
  REQUIRE(geo.word_ends.size() == 4);
  CHECK(geo.word_ends.back() == geo.points.size());
  std::size_t begin = 0;
  double prev_right = 0;
  for (std::size_t w = 0; w < 4; ++w) {
    const std::span<const StrokePoint> word(geo.points.data() + begin, geo.word_ends[w] - begin);
    CHECK_FALSE(word.front().pen);
    const auto box = bounding_box(word);
    if (w == 0) CHECK(box.min_x == doctest::Approx(0.0));
    else CHECK(box.min_x == doctest::Approx(prev_right + gap));
    prev_right = box.max_x;
    begin = geo.word_ends[w];
  }
}

TEST_CASE("assembler errors") {
  CHECK_THROWS_AS(SequenceAssembler({}, DatasetConfig{}, 1.0), std::invalid_argument);
  SampleRecord huge;
  huge.word = "longword";
  for (int i = 0; i < 600; ++i) huge.points.push_back({double(i), 0, i > 0});
  try {
    SequenceAssembler({huge}, DatasetConfig{}, 1.0);
    FAIL("expected an error");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("longword") != std::string::npos);
  }
}

TEST_CASE("radius percentile uses nearest rank") {
  std::vector<double> r;
  for (int i = 1; i <= 1000; ++i) r.push_back(i);
  CHECK(radius_percentile(r, 99.9) == 999);
  CHECK(radius_percentile(r, 100) == 1000);
  CHECK(radius_percentile(r, 50) == 500);
  CHECK_THROWS(radius_percentile({}, 50));
}

TEST_CASE("corpus manifest is independent of the thread count") {
  CorpusOptions opt;
  opt.dataset.train_sequences = 3000;
  opt.dataset.test_sequences = 300;
  opt.dataset.pilot_sequences = 200;
  opt.seed = 9;
  opt.config_hash = "abc";
  std::size_t last_train = 0;
  bool ordered = true;
  opt.threads = 1;
  const auto serial = build_corpus(synthetic_pool(), opt, [&](Split s, std::size_t i, const TrainingSequence&) {
    if (s == Split::train) {
      ordered = ordered && (i == 0 || i == last_train + 1);
      last_train = i;
    }
  });
  CHECK(ordered);
  CHECK(last_train == 2999);
  opt.threads = 3;
  const auto parallel = build_corpus(synthetic_pool(), opt);
  CHECK(serial.dump() == parallel.dump());
  CHECK(serial.at("counts").at("train") == 3000);
  CHECK(serial.at("counts").at("train_pool") == 285);
  CHECK(serial.at("r_max_source").get<std::string>().find("percentile") == 0);
  CHECK(tokenizer_from_manifest(serial).r_max > 0.0);
}

TEST_CASE("corpus files round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "cursive_corpus_test";
  std::filesystem::remove_all(dir);
  CorpusOptions opt;
  opt.dataset.train_sequences = 50;
  opt.dataset.test_sequences = 10;
  opt.r_max = 0.4;
  const auto manifest = write_corpus(dir.string(), synthetic_pool(), opt);
  CHECK(manifest.at("r_max_source") == "configured");
  const auto corpus = load_corpus(dir.string());
  CHECK(corpus.manifest == manifest);
  CHECK(corpus.tokenizer.r_max == 0.4);
  REQUIRE(corpus.train.size() == 50);
  REQUIRE(corpus.test.size() == 10);

  const SequenceAssembler assembler(split(synthetic_pool(), 0.95, mix64(opt.seed ^ 1)).first, opt.dataset,
                                    manifest.at("word_gap").get<double>());
  CHECK(corpus.train[7] == assembler.assemble_one(mix64(opt.seed ^ 2), 7, StrokeTokenizer(corpus.tokenizer)));
  std::filesystem::remove_all(dir);
  CHECK_THROWS(load_corpus(dir.string()));
}

TEST_CASE("dataset config JSON round trip") {
  DatasetConfig cfg;
  cfg.train_sequences = 12;
  cfg.augmentation.shear_x = {-0.1, 0.2};
  const auto back = DatasetConfig::from_json(cfg.to_json());
  CHECK(back.to_json() == cfg.to_json());
  CHECK_THROWS(DatasetConfig::from_json({{"drop_fraction", {0.8, 0.5}}}));
}
