#ifndef MSMLE_TOML_HPP
#define MSMLE_TOML_HPP

#include <map>
#include <string>
#include <variant>
#include <vector>

namespace msmle::toml {

// Minimal TOML subset: [tables], [[arrays of tables]], dotted/quoted keys,
// strings, integers, floats, booleans and flat arrays of scalars. Enough for
// the model/scenario/profile configuration files.
struct Value;
using Array = std::vector<Value>;

struct Value {
  std::variant<std::monostate, bool, std::int64_t, double, std::string, Array> v;

  bool is_bool() const { return std::holds_alternative<bool>(v); }
  bool is_int() const { return std::holds_alternative<std::int64_t>(v); }
  bool is_number() const { return is_int() || std::holds_alternative<double>(v); }
  bool is_string() const { return std::holds_alternative<std::string>(v); }
  bool is_array() const { return std::holds_alternative<Array>(v); }

  bool as_bool() const;
  std::int64_t as_int() const;
  double as_double() const;
  const std::string& as_string() const;
  const Array& as_array() const;
};

struct Table {
  std::map<std::string, Value> values;
  std::map<std::string, Table> subtables;
  std::map<std::string, std::vector<Table>> table_arrays;

  bool has(const std::string& key) const { return values.count(key) > 0; }
  const Value* find(const std::string& key) const;
  const Table* find_table(const std::string& key) const;

  // Typed getters with defaults; throw data_error on type mismatch.
  bool get_bool(const std::string& key, bool def) const;
  std::int64_t get_int(const std::string& key, std::int64_t def) const;
  double get_double(const std::string& key, double def) const;
  std::string get_string(const std::string& key, const std::string& def) const;
  std::vector<double> get_double_array(const std::string& key) const;
  std::vector<std::string> get_string_array(const std::string& key) const;
};

Table parse(const std::string& text);
Table parse_file(const std::string& path);

}  // namespace msmle::toml

#endif  // MSMLE_TOML_HPP
