#include <cstdio>
#include <sstream>

#include "trustkit/cli.hpp"
#include "trustkit/errors.hpp"

namespace trustkit::cli {

const std::string& config_schema_text() {
  static const std::string text =
#include "trustkit/schema.inc"
      ;
  return text;
}

const json& config_schema() {
  static const json schema = json::parse(config_schema_text());
  return schema;
}

namespace {

std::string type_of(const json& v) {
  if (v.is_null()) return "null";
  if (v.is_boolean()) return "boolean";
  if (v.is_number_integer()) return "integer";
  if (v.is_number()) return "number";
  if (v.is_string()) return "string";
  if (v.is_array()) return "array";
  return "object";
}

bool type_matches(const json& v, const std::string& t) {
  if (t == "number") return v.is_number();
  if (t == "integer") {
    if (v.is_number_integer()) return true;
    return v.is_number_float() && v.get<double>() == static_cast<double>(static_cast<long long>(v.get<double>()));
  }
  return type_of(v) == t;
}

std::string escape_token(const std::string& key) {
  std::string out;
  for (char c : key) {
    if (c == '~')
      out += "~0";
    else if (c == '/')
      out += "~1";
    else
      out += c;
  }
  return out;
}

std::string where(const std::string& path) { return path.empty() ? "/" : path; }

void check(const json& v, const json& s, const std::string& path, std::vector<std::string>& errs) {
  if (s.is_boolean()) {
    if (!s.get<bool>()) errs.push_back(where(path) + ": property is not allowed");
    return;
  }
  if (s.contains("type")) {
    const json& t = s["type"];
    bool ok = false;
    if (t.is_string()) {
      ok = type_matches(v, t.get<std::string>());
    } else {
      for (const auto& one : t) ok = ok || type_matches(v, one.get<std::string>());
    }
    if (!ok) {
      errs.push_back(where(path) + ": expected " + t.dump() + ", got " + type_of(v));
      return;
    }
  }
  if (s.contains("enum")) {
    bool found = false;
    for (const auto& e : s["enum"]) found = found || e == v;
    if (!found) errs.push_back(where(path) + ": value " + v.dump() + " is not one of " + s["enum"].dump());
  }
  if (s.contains("const") && s["const"] != v) errs.push_back(where(path) + ": must equal " + s["const"].dump());
  if (v.is_number()) {
    const double x = v.get<double>();
    if (s.contains("minimum") && x < s["minimum"].get<double>())
      errs.push_back(where(path) + ": must be >= " + s["minimum"].dump());
    if (s.contains("maximum") && x > s["maximum"].get<double>())
      errs.push_back(where(path) + ": must be <= " + s["maximum"].dump());
    if (s.contains("exclusiveMinimum") && x <= s["exclusiveMinimum"].get<double>())
      errs.push_back(where(path) + ": must be > " + s["exclusiveMinimum"].dump());
    if (s.contains("exclusiveMaximum") && x >= s["exclusiveMaximum"].get<double>())
      errs.push_back(where(path) + ": must be < " + s["exclusiveMaximum"].dump());
  }
  if (v.is_array()) {
    if (s.contains("minItems") && v.size() < s["minItems"].get<std::size_t>())
      errs.push_back(where(path) + ": needs at least " + s["minItems"].dump() + " items");
    if (s.contains("maxItems") && v.size() > s["maxItems"].get<std::size_t>())
      errs.push_back(where(path) + ": allows at most " + s["maxItems"].dump() + " items");
    if (s.contains("items"))
      for (std::size_t i = 0; i < v.size(); ++i) check(v[i], s["items"], path + "/" + std::to_string(i), errs);
  }
  if (v.is_object()) {
    if (s.contains("required"))
      for (const auto& r : s["required"])
        if (!v.contains(r.get<std::string>()))
          errs.push_back(where(path) + ": missing required property \"" + r.get<std::string>() + "\"");
    const json* props = s.contains("properties") ? &s["properties"] : nullptr;
    for (auto it = v.begin(); it != v.end(); ++it) {
      const std::string child = path + "/" + escape_token(it.key());
      if (props && props->contains(it.key())) {
        check(it.value(), (*props)[it.key()], child, errs);
      } else if (s.contains("additionalProperties")) {
        const json& extra = s["additionalProperties"];
        if (extra.is_boolean() && !extra.get<bool>())
          errs.push_back(child + ": unknown property");
        else if (extra.is_object())
          check(it.value(), extra, child, errs);
      }
    }
  }
  if (s.contains("allOf"))
    for (const auto& sub : s["allOf"]) check(v, sub, path, errs);
  if (s.contains("if") && s.contains("then")) {
    std::vector<std::string> probe;
    check(v, s["if"], path, probe);
    if (probe.empty()) check(v, s["then"], path, errs);
  }
}

}  // namespace

std::vector<std::string> validate(const json& instance, const json& schema) {
  std::vector<std::string> errs;
  check(instance, schema, "", errs);
  return errs;
}

void validate_config(const json& config) {
  auto errs = validate(config, config_schema());
  if (errs.empty()) return;
  std::ostringstream os;
  os << "invalid config:";
  for (const auto& e : errs) os << "\n  " << e;
  throw ConfigError(os.str());
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string config_hash(const json& config) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(config.dump())));
  return std::string("fnv1a64:") + buf;
}

}  // namespace trustkit::cli
