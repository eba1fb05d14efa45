#pragma once

#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "snipsearch/common.hpp"

namespace snipsearch {

// Insertion-ordered JSON keeps field order stable in every artifact.
using Json = nlohmann::ordered_json;

template <typename T>
void write_jsonl(const std::string& path, const std::vector<T>& items,
                 const std::function<Json(const T&)>& encode) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  for (const auto& item : items) out << encode(item).dump() << '\n';
  if (!out) throw Error("write failed for " + path);
}

template <typename T>
std::vector<T> read_jsonl(const std::string& path, const std::function<T(const Json&)>& decode) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::vector<T> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(decode(Json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw Error(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

inline Json read_json_file(const std::string& path) {
  try {
    return Json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(path + ": " + e.what());
  }
}

inline void write_json_file(const std::string& path, const Json& value) {
  write_file(path, value.dump(2) + "\n");
}

}  // namespace snipsearch
