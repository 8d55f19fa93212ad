#include "cursive/record.hpp"

#include <cmath>

#include "cursive/error.hpp"
#include "cursive/wordbank.hpp"

namespace cursive {

SampleRecord record_from_json(const nlohmann::json& j, const std::string& path) {
  if (!j.is_object()) throw SchemaError(path, "expected an object");
  SampleRecord rec;

  const auto word = j.find("word");
  if (word == j.end()) throw SchemaError(path + ".word", "missing");
  if (!word->is_string()) throw SchemaError(path + ".word", "expected a string");
  rec.word = word->get<std::string>();

  const auto points = j.find("points");
  const std::string points_path = path + ".points";
  if (points == j.end()) throw SchemaError(points_path, "missing");
  if (!points->is_array() || points->empty()) throw SchemaError(points_path, "expected a non-empty array");
  rec.points.reserve(points->size());
  for (std::size_t i = 0; i < points->size(); ++i) {
    const auto& p = (*points)[i];
    const std::string pp = points_path + "[" + std::to_string(i) + "]";
    if (!p.is_array() || p.size() != 3) throw SchemaError(pp, "expected [x, y, p]");
    if (!p[0].is_number() || !p[1].is_number()) throw SchemaError(pp, "coordinates must be numbers");
    const double x = p[0].get<double>();
    const double y = p[1].get<double>();
    if (!std::isfinite(x) || !std::isfinite(y)) throw SchemaError(pp, "coordinates must be finite");
    if (!p[2].is_number_integer() || (p[2].get<int>() != 0 && p[2].get<int>() != 1)) {
      throw SchemaError(pp + "[2]", "pen flag must be 0 or 1");
    }
    rec.points.push_back({x, y, p[2].get<int>() == 1});
  }

  if (const auto meta = j.find("metadata"); meta != j.end()) {
    if (!meta->is_object()) throw SchemaError(path + ".metadata", "expected an object");
    rec.metadata = *meta;
  }
  const std::string coords = rec.metadata.value("coords", std::string("canonical"));
  if (coords == "screen") {
    for (auto& pt : rec.points) pt.y = -pt.y;
  } else if (coords != "canonical") {
    throw SchemaError(path + ".metadata.coords", "expected \"screen\" or \"canonical\"");
  }
  rec.metadata["coords"] = "canonical";
  if (!validate_word(rec.word).empty()) rec.metadata["free_form"] = true;
  return rec;
}

nlohmann::json record_to_json(const SampleRecord& record) {
  nlohmann::json points = nlohmann::json::array();
  for (const auto& pt : record.points) points.push_back({pt.x, pt.y, pt.pen ? 1 : 0});
  nlohmann::json meta = record.metadata.is_object() ? record.metadata : nlohmann::json::object();
  meta["coords"] = "canonical";
  return {{"word", record.word}, {"points", std::move(points)}, {"metadata", std::move(meta)}};
}

std::vector<SampleRecord> ingest_document(const nlohmann::json& doc) {
  if (!doc.is_array()) throw SchemaError("$", "expected an array of records");
  std::vector<SampleRecord> out;
  out.reserve(doc.size());
  for (std::size_t i = 0; i < doc.size(); ++i) out.push_back(record_from_json(doc[i], "$[" + std::to_string(i) + "]"));
  return out;
}

std::vector<SampleRecord> ingest_json(std::string_view bytes) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(bytes);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError("$", e.what());
  }
  return ingest_document(doc);
}

std::string export_json(const std::vector<SampleRecord>& records) {
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& r : records) doc.push_back(record_to_json(r));
  return doc.dump();
}

}  // namespace cursive
