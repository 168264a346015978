#include "mate/data/nbest.hpp"

#include <fstream>
#include <json.hpp>

#include "mate/data/errors.hpp"

namespace mate::data {

namespace {

using nlohmann::json;

std::string line_tag(const std::filesystem::path& path, std::size_t line) {
  return path.string() + ":" + std::to_string(line);
}

const json& field(const json& obj, const char* key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw DataError("line " + std::to_string(line) + ": missing \"" + key + "\" field");
  }
  return *it;
}

std::string string_field(const json& obj, const char* key, std::size_t line) {
  const json& v = field(obj, key, line);
  if (!v.is_string()) {
    throw DataError("line " + std::to_string(line) + ": \"" + key + "\" must be a string");
  }
  return v.get<std::string>();
}

}  // namespace

NBestEntry parse_nbest_line(std::string_view line, std::size_t line_number) {
  json obj;
  try {
    obj = json::parse(line);
  } catch (const json::parse_error& e) {
    throw DataError("line " + std::to_string(line_number) + ": malformed JSON (" + e.what() + ")");
  }
  if (!obj.is_object()) {
    throw DataError("line " + std::to_string(line_number) + ": expected a JSON object");
  }
  NBestEntry entry;
  entry.utterance_id = string_field(obj, "utterance_id", line_number);
  entry.reference = obj.contains("reference") ? string_field(obj, "reference", line_number) : "";
  entry.features_path = string_field(obj, "features_path", line_number);
  const json& hyps = field(obj, "hypotheses", line_number);
  if (!hyps.is_array()) {
    throw DataError("line " + std::to_string(line_number) + ": \"hypotheses\" must be an array");
  }
  if (hyps.empty()) {
    throw DataError("line " + std::to_string(line_number) + ": empty hypothesis list");
  }
  int rank = 0;
  for (const json& h : hyps) {
    if (!h.is_object()) {
      throw DataError("line " + std::to_string(line_number) + ": hypothesis must be an object");
    }
    const json& score = field(h, "first_pass_score", line_number);
    if (!score.is_number()) {
      throw DataError("line " + std::to_string(line_number) +
                      ": \"first_pass_score\" must be a number");
    }
    entry.hypotheses.push_back(
        Hypothesis{string_field(h, "text", line_number), score.get<double>(), rank++});
  }
  return entry;
}

std::vector<NBestEntry> read_nbest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("cannot open n-best file " + path.string());
  }
  std::vector<NBestEntry> entries;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      entries.push_back(parse_nbest_line(line, number));
    } catch (const DataError& e) {
      throw DataError(path.string() + ": " + e.what());
    }
  }
  return entries;
}

void write_nbest(const std::filesystem::path& path, const std::vector<NBestEntry>& entries) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw DataError("cannot write n-best file " + path.string());
  }
  for (const auto& e : entries) {
    json hyps = json::array();
    for (const auto& h : e.hypotheses) {
      hyps.push_back(json{{"text", h.text}, {"first_pass_score", h.first_pass_score}});
    }
    json obj{{"utterance_id", e.utterance_id},
             {"reference", e.reference},
             {"features_path", e.features_path},
             {"hypotheses", std::move(hyps)}};
    out << obj.dump() << '\n';
  }
}

std::vector<TrainPair> read_train_pairs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("cannot open training list " + path.string());
  }
  std::vector<TrainPair> pairs;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json obj = json::parse(line);
      pairs.push_back(TrainPair{string_field(obj, "utterance_id", number),
                                string_field(obj, "text", number),
                                string_field(obj, "features_path", number)});
    } catch (const json::exception& e) {
      throw DataError(line_tag(path, number) + ": malformed JSON (" + e.what() + ")");
    } catch (const DataError& e) {
      throw DataError(path.string() + ": " + e.what());
    }
  }
  return pairs;
}

void write_train_pairs(const std::filesystem::path& path, const std::vector<TrainPair>& pairs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw DataError("cannot write training list " + path.string());
  }
  for (const auto& p : pairs) {
    out << json{{"utterance_id", p.utterance_id}, {"text", p.text}, {"features_path", p.features_path}}
               .dump()
        << '\n';
  }
}

std::filesystem::path resolve_relative(const std::filesystem::path& list_file,
                                       const std::string& features_path) {
  std::filesystem::path p(features_path);
  if (p.is_absolute()) return p;
  return list_file.parent_path() / p;
}

}  // namespace mate::data
