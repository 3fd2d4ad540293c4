#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <string>

#include <nlohmann/json.hpp>

#include "atars/errors.hpp"

namespace atars::jsonl {

using json = nlohmann::json;

// Calls fn(record, line_number) for every non-blank line. Malformed JSON
// becomes ParseError with "file:line" context.
inline void for_each_record(const std::filesystem::path& path,
                            const std::function<void(const json&, int)>& fn) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(path.filename().string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (!record.is_object())
      throw ParseError(path.filename().string() + ":" + std::to_string(lineno) +
                       ": expected a JSON object");
    fn(record, lineno);
  }
}

template <typename T>
T require_field(const json& record, const char* key, const std::string& where) {
  if (!record.contains(key)) throw ParseError(where + ": missing field \"" + key + "\"");
  try {
    return record.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ParseError(where + ": field \"" + key + "\": " + e.what());
  }
}

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : out_(path) {
    if (!out_) throw ConfigError("cannot write " + path.string());
  }
  void write(const json& record) { out_ << record.dump() << "\n"; }

 private:
  std::ofstream out_;
};

}  // namespace atars::jsonl
