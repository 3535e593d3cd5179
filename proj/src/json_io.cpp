#include "persist/json_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "persist/error.hpp"

namespace persist {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

void dump_value(const Json& j, std::string& out, int indent, int depth) {
  const std::string pad(static_cast<std::size_t>(indent) * depth, ' ');
  const std::string pad_in(static_cast<std::size_t>(indent) * (depth + 1), ' ');
  switch (j.type()) {
    case Json::value_t::null:
      out += "null";
      break;
    case Json::value_t::boolean:
      out += j.get<bool>() ? "true" : "false";
      break;
    case Json::value_t::number_integer:
      out += std::to_string(j.get<long long>());
      break;
    case Json::value_t::number_unsigned:
      out += std::to_string(j.get<unsigned long long>());
      break;
    case Json::value_t::number_float: {
      const double v = j.get<double>();
      if (!std::isfinite(v)) throw Error("non-finite number in report");
      out += format_double(v);
      break;
    }
    case Json::value_t::string:
      out += Json(j.get<std::string>()).dump();  // quoting and escaping
      break;
    case Json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        break;
      }
      out += "[\n";
      for (std::size_t i = 0; i < j.size(); ++i) {
        out += pad_in;
        dump_value(j[i], out, indent, depth + 1);
        if (i + 1 < j.size()) out += ',';
        out += '\n';
      }
      out += pad + "]";
      break;
    }
    case Json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        break;
      }
      out += "{\n";
      std::size_t i = 0;
      for (auto it = j.begin(); it != j.end(); ++it, ++i) {
        out += pad_in;
        out += Json(it.key()).dump();
        out += ": ";
        dump_value(it.value(), out, indent, depth + 1);
        if (i + 1 < j.size()) out += ',';
        out += '\n';
      }
      out += pad + "}";
      break;
    }
    default:
      throw Error("unsupported JSON value type");
  }
}

}  // namespace

std::string dump_json(const Json& j, int indent) {
  std::string out;
  dump_value(j, out, indent, 0);
  out += '\n';
  return out;
}

Json parse_json(const std::string& text, const std::string& what) {
  Json j = Json::parse(text, nullptr, false);
  if (j.is_discarded()) throw Error("malformed JSON in " + what);
  return j;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write file: " + path);
  out << content;
  if (!out) throw Error("write failed: " + path);
}

}  // namespace persist
