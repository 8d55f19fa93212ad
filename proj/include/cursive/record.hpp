#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cursive/stroke.hpp"

namespace cursive {

/// One handwritten (or synthesized) word: the prompt and its pen trajectory
/// in canonical orientation (+y up).
struct SampleRecord {
  std::string word;
  StrokeSequence points;
  nlohmann::json metadata = nlohmann::json::object();

  friend bool operator==(const SampleRecord&, const SampleRecord&) = default;
};

/// Parses `[{"word": ..., "points": [[x, y, p], ...], "metadata": {...}}]`.
/// Records declaring `"coords": "screen"` have y negated and are re-tagged as
/// canonical. Words outside the word-bank conventions are kept and tagged
/// `"free_form": true`. Schema violations throw SchemaError with a JSON path.
std::vector<SampleRecord> ingest_json(std::string_view bytes);
std::vector<SampleRecord> ingest_document(const nlohmann::json& doc);

/// Validates and canonicalizes a single record object; `path` prefixes error
/// locations.
SampleRecord record_from_json(const nlohmann::json& j, const std::string& path);
nlohmann::json record_to_json(const SampleRecord& record);

std::string export_json(const std::vector<SampleRecord>& records);

}  // namespace cursive
