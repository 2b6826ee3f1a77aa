#include "pktdt/json_util.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace pktdt {

void JsonWhere::fail(const std::string& key, const std::string& problem) const {
  std::string loc = origin;
  if (line > 0) loc += ":" + std::to_string(line);
  throw DataError(loc + ": key '" + key + "': " + problem);
}

const Json& require_key(const Json& obj, const std::string& key, const JsonWhere& where) {
  const auto it = obj.find(key);
  if (it == obj.end()) where.fail(key, "missing");
  return *it;
}

double require_number(const Json& obj, const std::string& key, const JsonWhere& where) {
  const Json& v = require_key(obj, key, where);
  if (!v.is_number()) where.fail(key, "expected number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) where.fail(key, "expected finite number");
  return d;
}

long long require_integer(const Json& obj, const std::string& key, const JsonWhere& where, long long lo,
                          long long hi) {
  const Json& v = require_key(obj, key, where);
  if (!v.is_number_integer()) where.fail(key, "expected integer");
  const auto i = v.get<long long>();
  if (i < lo || i > hi) where.fail(key, "value " + std::to_string(i) + " out of range");
  return i;
}

std::string require_string(const Json& obj, const std::string& key, const JsonWhere& where) {
  const Json& v = require_key(obj, key, where);
  if (!v.is_string()) where.fail(key, "expected string");
  return v.get<std::string>();
}

void for_each_jsonl(std::istream& in, const std::string& origin,
                    const std::function<void(const Json&, const JsonWhere&)>& fn) {
  std::string line;
  JsonWhere where{origin, 0};
  while (std::getline(in, line)) {
    ++where.line;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Json obj;
    try {
      obj = Json::parse(line);
    } catch (const Json::parse_error& e) {
      throw DataError(origin + ":" + std::to_string(where.line) + ": invalid JSON: " + e.what());
    }
    if (!obj.is_object()) throw DataError(origin + ":" + std::to_string(where.line) + ": expected a JSON object");
    fn(obj, where);
  }
}

void for_each_jsonl(const std::filesystem::path& path,
                    const std::function<void(const Json&, const JsonWhere&)>& fn) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  for_each_jsonl(in, path.string(), fn);
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw DataError(path.string() + ": invalid JSON: " + e.what());
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

}  // namespace pktdt
