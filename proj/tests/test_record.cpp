#include <stdexcept>
#include "cursive/error.hpp"
#include "cursive/record.hpp"
#include "cursive/rng.hpp"
#include "doctest.h"

using namespace cursive;

namespace {

std::string error_path(const std::string& text) {
  try {
    ingest_json(text);
  } catch (const SchemaError& e) {
    return e.path();
  }
  return "<none>";
}

}  // namespace

TEST_CASE("export then ingest is the identity") {
  Rng rng(4);
  std::vector<SampleRecord> records;
  for (int i = 0; i < 100; ++i) {
    SampleRecord r;
    r.word = std::string(1 + i % 7, static_cast<char>('a' + i % 26));
    const auto n = 1 + rng.below(20);
    for (std::size_t k = 0; k < n; ++k) r.points.push_back({rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform() < 0.5});
    r.metadata = {{"coords", "canonical"}, {"author", "tester"}, {"index", i}};
    records.push_back(r);
  }
  CHECK(ingest_json(export_json(records)) == records);
}

TEST_CASE("screen coordinates are flipped at ingest") {
  const auto recs = ingest_json(R"([{"word": "ab", "points": [[1, 2, 0], [3, -4, 1]], "metadata": {"coords": "screen"}}])");
  REQUIRE(recs.size() == 1);
  CHECK(recs[0].points[0] == StrokePoint{1, -2, false});
  CHECK(recs[0].points[1] == StrokePoint{3, 4, true});
  CHECK(recs[0].metadata.at("coords") == "canonical");

  const auto canon = ingest_json(R"([{"word": "ab", "points": [[1, 2, 0]], "metadata": {"coords": "canonical"}}])");
  CHECK(canon[0].points[0].y == 2.0);
}

TEST_CASE("schema violations report a JSON path") {
  CHECK(error_path(R"([{"points": [[0, 0, 1]]}])") == "$[0].word");
  CHECK(error_path(R"([{"word": "a", "points": [[0, 0, 1]]}, {"word": "b"}])") == "$[1].points");
  CHECK(error_path(R"([{"word": "a", "points": []}])") == "$[0].points");
  CHECK(error_path(R"([{"word": "a", "points": [[0, 0]]}])") == "$[0].points[0]");
  CHECK(error_path(R"([{"word": "a", "points": [[0, 0, 1], [0, 0, 2]]}])") == "$[0].points[1][2]");
  CHECK(error_path(R"([{"word": "a", "points": [[0, 0, 1]], "metadata": {"coords": "polar"}}])") ==
        "$[0].metadata.coords");
  CHECK(error_path(R"({"word": "a"})") == "$");
  CHECK(error_path("not json") == "$");
}

TEST_CASE("words outside the conventions are tagged free-form") {
  const auto recs = ingest_json(R"([{"word": "the anger", "points": [[0, 0, 0]]}, {"word": "Joakn", "points": [[0, 0, 0]]}])");
  CHECK(recs[0].metadata.value("free_form", false));
  CHECK_FALSE(recs[1].metadata.contains("free_form"));
}
