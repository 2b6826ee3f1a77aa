#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>

#include <json.hpp>

#include "pktdt/error.hpp"

namespace pktdt {

using Json = nlohmann::json;

// Location of a JSON object being validated, for error messages of the form
// "file:line: key 'x': expected number".
struct JsonWhere {
  std::string origin;
  std::size_t line = 0;

  [[noreturn]] void fail(const std::string& key, const std::string& problem) const;
};

const Json& require_key(const Json& obj, const std::string& key, const JsonWhere& where);
double require_number(const Json& obj, const std::string& key, const JsonWhere& where);
long long require_integer(const Json& obj, const std::string& key, const JsonWhere& where, long long lo,
                          long long hi);
std::string require_string(const Json& obj, const std::string& key, const JsonWhere& where);

// Calls fn(object, where) for each non-blank line; malformed JSON or a
// non-object line raises DataError naming the line.
void for_each_jsonl(std::istream& in, const std::string& origin,
                    const std::function<void(const Json&, const JsonWhere&)>& fn);
void for_each_jsonl(const std::filesystem::path& path,
                    const std::function<void(const Json&, const JsonWhere&)>& fn);

Json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace pktdt
