#pragma once

#include <istream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "mancap/error.hpp"

namespace mancap {

enum class Split { train, test };

struct TextRecord {
  std::string text;
  std::map<std::string, std::string> labels;  // scheme -> category
  Split split = Split::train;
};

struct LabeledTextDataset {
  std::vector<TextRecord> records;

  std::vector<const TextRecord*> split(Split s) const {
    std::vector<const TextRecord*> out;
    for (const auto& r : records)
      if (r.split == s) out.push_back(&r);
    return out;
  }
};

/// Reads one JSON object per line: {"text": ..., "labels": {scheme: category}, "split": "train"|"test"}.
/// Blank lines are skipped. Every record must label every scheme in `schema`;
/// violations raise SchemaError carrying the 1-based line number.
inline LabeledTextDataset load_labeled_dataset(std::istream& in,
                                               const std::vector<std::string>& schema) {
  LabeledTextDataset ds;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;

    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw SchemaError("line " + std::to_string(lineno) + ": invalid JSON: " + e.what(), lineno);
    }
    auto fail = [&](const std::string& msg) -> SchemaError {
      return SchemaError("line " + std::to_string(lineno) + ": " + msg, lineno);
    };
    if (!j.is_object()) throw fail("record must be a JSON object");
    if (!j.contains("text") || !j["text"].is_string()) throw fail("missing string field 'text'");
    if (!j.contains("labels") || !j["labels"].is_object()) throw fail("missing object field 'labels'");
    if (!j.contains("split") || !j["split"].is_string()) throw fail("missing string field 'split'");

    TextRecord rec;
    rec.text = j["text"].get<std::string>();
    const auto split = j["split"].get<std::string>();
    if (split == "train") {
      rec.split = Split::train;
    } else if (split == "test") {
      rec.split = Split::test;
    } else {
      throw fail("split must be 'train' or 'test', got '" + split + "'");
    }
    for (const auto& [scheme, value] : j["labels"].items()) {
      if (!value.is_string()) throw fail("label '" + scheme + "' must be a string");
      rec.labels[scheme] = value.get<std::string>();
    }
    for (const auto& scheme : schema) {
      if (!rec.labels.contains(scheme)) throw fail("record lacks label scheme '" + scheme + "'");
    }
    ds.records.push_back(std::move(rec));
  }
  return ds;
}

}  // namespace mancap
