#include "msmle/toml.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "msmle/common.hpp"

namespace msmle::toml {

namespace {

[[noreturn]] void fail(int line, const std::string& msg) {
  throw data_error("toml parse error at line " + std::to_string(line) + ": " + msg);
}

struct Cursor {
  const std::string& s;
  size_t pos = 0;
  int line;

  bool done() const { return pos >= s.size(); }
  char peek() const { return s[pos]; }
  void skip_ws() {
    while (!done() && (s[pos] == ' ' || s[pos] == '\t')) ++pos;
  }
};

std::string parse_basic_string(Cursor& c) {
  ++c.pos;  // opening quote
  std::string out;
  while (!c.done() && c.peek() != '"') {
    char ch = c.s[c.pos++];
    if (ch == '\\') {
      if (c.done()) fail(c.line, "dangling escape");
      char e = c.s[c.pos++];
      switch (e) {
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case 'r': out += '\r'; break;
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        default: fail(c.line, std::string("unsupported escape \\") + e);
      }
    } else {
      out += ch;
    }
  }
  if (c.done()) fail(c.line, "unterminated string");
  ++c.pos;  // closing quote
  return out;
}

std::string parse_key_segment(Cursor& c) {
  c.skip_ws();
  if (c.done()) fail(c.line, "expected key");
  if (c.peek() == '"') return parse_basic_string(c);
  std::string out;
  while (!c.done()) {
    char ch = c.peek();
    if (std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-' ||
        ch == '>') {  // '>' admits transition labels like 1->2 as bare keys
      out += ch;
      ++c.pos;
    } else {
      break;
    }
  }
  if (out.empty()) fail(c.line, "empty key");
  return out;
}

Value parse_value(Cursor& c);

Value parse_scalar(Cursor& c) {
  c.skip_ws();
  if (c.done()) fail(c.line, "expected value");
  char ch = c.peek();
  if (ch == '"') return Value{parse_basic_string(c)};
  // bare token up to delimiter
  size_t start = c.pos;
  while (!c.done()) {
    char t = c.peek();
    if (t == ',' || t == ']' || t == '#' || t == ' ' || t == '\t') break;
    ++c.pos;
  }
  std::string tok = c.s.substr(start, c.pos - start);
  if (tok == "true") return Value{true};
  if (tok == "false") return Value{false};
  // integer?
  {
    std::int64_t iv = 0;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), iv);
    if (ec == std::errc() && p == tok.data() + tok.size()) return Value{iv};
  }
  {
    double dv = 0.0;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), dv);
    if (ec == std::errc() && p == tok.data() + tok.size()) return Value{dv};
  }
  fail(c.line, "cannot parse value '" + tok + "'");
}

Value parse_value(Cursor& c) {
  c.skip_ws();
  if (c.done()) fail(c.line, "expected value");
  if (c.peek() != '[') return parse_scalar(c);
  ++c.pos;  // '['
  Array arr;
  c.skip_ws();
  if (!c.done() && c.peek() == ']') {
    ++c.pos;
    return Value{arr};
  }
  for (;;) {
    arr.push_back(parse_value(c));
    c.skip_ws();
    if (c.done()) fail(c.line, "unterminated array");
    if (c.peek() == ',') {
      ++c.pos;
      c.skip_ws();
      if (!c.done() && c.peek() == ']') {  // trailing comma
        ++c.pos;
        break;
      }
      continue;
    }
    if (c.peek() == ']') {
      ++c.pos;
      break;
    }
    fail(c.line, "expected ',' or ']' in array");
  }
  return Value{arr};
}

std::vector<std::string> parse_key_path(Cursor& c) {
  std::vector<std::string> path{parse_key_segment(c)};
  c.skip_ws();
  while (!c.done() && c.peek() == '.') {
    ++c.pos;
    path.push_back(parse_key_segment(c));
    c.skip_ws();
  }
  return path;
}

Table* descend(Table* root, const std::vector<std::string>& path, size_t upto) {
  Table* t = root;
  for (size_t i = 0; i < upto; ++i) t = &t->subtables[path[i]];
  return t;
}

}  // namespace

bool Value::as_bool() const {
  if (!is_bool()) throw data_error("toml: expected a boolean");
  return std::get<bool>(v);
}
std::int64_t Value::as_int() const {
  if (!is_int()) throw data_error("toml: expected an integer");
  return std::get<std::int64_t>(v);
}
double Value::as_double() const {
  if (is_int()) return static_cast<double>(std::get<std::int64_t>(v));
  if (std::holds_alternative<double>(v)) return std::get<double>(v);
  throw data_error("toml: expected a number");
}
const std::string& Value::as_string() const {
  if (!is_string()) throw data_error("toml: expected a string");
  return std::get<std::string>(v);
}
const Array& Value::as_array() const {
  if (!is_array()) throw data_error("toml: expected an array");
  return std::get<Array>(v);
}

const Value* Table::find(const std::string& key) const {
  auto it = values.find(key);
  return it == values.end() ? nullptr : &it->second;
}
const Table* Table::find_table(const std::string& key) const {
  auto it = subtables.find(key);
  return it == subtables.end() ? nullptr : &it->second;
}
bool Table::get_bool(const std::string& key, bool def) const {
  const Value* v = find(key);
  return v ? v->as_bool() : def;
}
std::int64_t Table::get_int(const std::string& key, std::int64_t def) const {
  const Value* v = find(key);
  return v ? v->as_int() : def;
}
double Table::get_double(const std::string& key, double def) const {
  const Value* v = find(key);
  return v ? v->as_double() : def;
}
std::string Table::get_string(const std::string& key, const std::string& def) const {
  const Value* v = find(key);
  return v ? v->as_string() : def;
}
std::vector<double> Table::get_double_array(const std::string& key) const {
  const Value* v = find(key);
  std::vector<double> out;
  if (!v) return out;
  for (const Value& e : v->as_array()) out.push_back(e.as_double());
  return out;
}
std::vector<std::string> Table::get_string_array(const std::string& key) const {
  const Value* v = find(key);
  std::vector<std::string> out;
  if (!v) return out;
  for (const Value& e : v->as_array()) out.push_back(e.as_string());
  return out;
}

Table parse(const std::string& text) {
  Table root;
  Table* current = &root;
  std::istringstream in(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    Cursor c{raw, 0, lineno};
    c.skip_ws();
    if (c.done() || c.peek() == '#') continue;
    if (c.peek() == '[') {
      bool array_table = c.pos + 1 < raw.size() && raw[c.pos + 1] == '[';
      c.pos += array_table ? 2 : 1;
      std::vector<std::string> path = parse_key_path(c);
      c.skip_ws();
      if (c.done() || c.peek() != ']') fail(lineno, "expected ']'");
      ++c.pos;
      if (array_table) {
        if (c.done() || c.peek() != ']') fail(lineno, "expected ']]'");
        ++c.pos;
      }
      c.skip_ws();
      if (!c.done() && c.peek() != '#') fail(lineno, "trailing characters after header");
      Table* parent = descend(&root, path, path.size() - 1);
      if (array_table) {
        parent->table_arrays[path.back()].emplace_back();
        current = &parent->table_arrays[path.back()].back();
      } else {
        current = &parent->subtables[path.back()];
      }
      continue;
    }
    std::string key = parse_key_segment(c);
    c.skip_ws();
    if (c.done() || c.peek() != '=') fail(lineno, "expected '=' after key");
    ++c.pos;
    Value v = parse_value(c);
    c.skip_ws();
    if (!c.done() && c.peek() != '#') fail(lineno, "trailing characters after value");
    if (current->values.count(key)) fail(lineno, "duplicate key '" + key + "'");
    current->values[key] = std::move(v);
  }
  return root;
}

Table parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

}  // namespace msmle::toml
