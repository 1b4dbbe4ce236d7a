#pragma once

#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "nexlim/errors.hpp"

namespace nexlim {

// Minimal TOML reader covering what scenario files use: [table] headers,
// dotted keys, strings, numbers, booleans and flat arrays. Unsupported
// syntax is reported with its line number rather than guessed at.

struct TomlValue {
    enum class Kind { string, number, boolean, array };
    Kind kind = Kind::string;
    std::string str;
    double num = 0.0;
    bool flag = false;
    std::vector<TomlValue> items;
    int line = 0;
};

class TomlTable {
  public:
    void set(const std::string& key, TomlValue v) { values_[key] = std::move(v); }
    bool has(const std::string& key) const { return values_.count(key) > 0; }

    const TomlValue& raw(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw config_error("missing key '" + key + "'");
        return it->second;
    }

    std::string get_string(const std::string& key) const {
        const auto& v = raw(key);
        if (v.kind != TomlValue::Kind::string)
            throw config_error("key '" + key + "' must be a string", v.line);
        return v.str;
    }
    std::string get_string(const std::string& key, const std::string& fallback) const {
        return has(key) ? get_string(key) : fallback;
    }

    double get_number(const std::string& key) const {
        const auto& v = raw(key);
        if (v.kind != TomlValue::Kind::number)
            throw config_error("key '" + key + "' must be a number", v.line);
        return v.num;
    }
    double get_number(const std::string& key, double fallback) const {
        return has(key) ? get_number(key) : fallback;
    }

    long get_integer(const std::string& key) const {
        const double v = get_number(key);
        const long n = std::lround(v);
        if (std::fabs(v - static_cast<double>(n)) > 1e-9)
            throw config_error("key '" + key + "' must be an integer", raw(key).line);
        return n;
    }
    long get_integer(const std::string& key, long fallback) const {
        return has(key) ? get_integer(key) : fallback;
    }

    bool get_bool(const std::string& key, bool fallback) const {
        if (!has(key)) return fallback;
        const auto& v = raw(key);
        if (v.kind != TomlValue::Kind::boolean)
            throw config_error("key '" + key + "' must be a boolean", v.line);
        return v.flag;
    }

    std::vector<double> get_number_array(const std::string& key) const {
        const auto& v = raw(key);
        if (v.kind != TomlValue::Kind::array)
            throw config_error("key '" + key + "' must be an array", v.line);
        std::vector<double> out;
        for (const auto& item : v.items) {
            if (item.kind != TomlValue::Kind::number)
                throw config_error("key '" + key + "' must hold numbers", v.line);
            out.push_back(item.num);
        }
        return out;
    }

    const std::map<std::string, TomlValue>& entries() const { return values_; }

  private:
    std::map<std::string, TomlValue> values_;
};

namespace toml_detail {

inline std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

// Strip a trailing comment that is not inside a string literal.
inline std::string strip_comment(const std::string& s) {
    bool in_str = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '"') in_str = !in_str;
        if (s[i] == '#' && !in_str) return s.substr(0, i);
    }
    return s;
}

inline bool valid_key(const std::string& k) {
    if (k.empty()) return false;
    for (char ch : k)
        if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '.' || ch == '-'))
            return false;
    return true;
}

inline TomlValue parse_scalar(const std::string& text, int line) {
    TomlValue v;
    v.line = line;
    const std::string t = trim(text);
    if (t.empty()) throw config_error("empty value", line);
    if (t.front() == '"') {
        if (t.size() < 2 || t.back() != '"') throw config_error("unterminated string", line);
        v.kind = TomlValue::Kind::string;
        v.str = t.substr(1, t.size() - 2);
        return v;
    }
    if (t == "true" || t == "false") {
        v.kind = TomlValue::Kind::boolean;
        v.flag = t == "true";
        return v;
    }
    try {
        std::size_t used = 0;
        v.num = std::stod(t, &used);
        if (used != t.size()) throw std::invalid_argument(t);
        v.kind = TomlValue::Kind::number;
        return v;
    } catch (const std::exception&) {
        throw config_error("cannot parse value '" + t + "'", line);
    }
}

inline TomlValue parse_value(const std::string& text, int line) {
    const std::string t = trim(text);
    if (!t.empty() && t.front() == '[') {
        if (t.back() != ']') throw config_error("unterminated array", line);
        TomlValue v;
        v.kind = TomlValue::Kind::array;
        v.line = line;
        std::string body = t.substr(1, t.size() - 2);
        std::string cur;
        bool in_str = false;
        for (char ch : body) {
            if (ch == '"') in_str = !in_str;
            if (ch == ',' && !in_str) {
                if (!trim(cur).empty()) v.items.push_back(parse_scalar(cur, line));
                cur.clear();
            } else {
                cur += ch;
            }
        }
        if (!trim(cur).empty()) v.items.push_back(parse_scalar(cur, line));
        return v;
    }
    return parse_scalar(t, line);
}

}  // namespace toml_detail

inline TomlTable parse_toml(std::istream& is) {
    using namespace toml_detail;
    TomlTable table;
    std::string prefix;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const std::string body = trim(strip_comment(line));
        if (body.empty()) continue;
        if (body.front() == '[') {
            if (body.back() != ']') throw config_error("unterminated table header", line_no);
            const std::string name = trim(body.substr(1, body.size() - 2));
            if (!valid_key(name)) throw config_error("bad table name '" + name + "'", line_no);
            prefix = name + ".";
            continue;
        }
        const auto eq = body.find('=');
        if (eq == std::string::npos) throw config_error("expected 'key = value'", line_no);
        const std::string key = trim(body.substr(0, eq));
        if (!valid_key(key)) throw config_error("bad key '" + key + "'", line_no);
        table.set(prefix + key, parse_value(body.substr(eq + 1), line_no));
    }
    return table;
}

inline TomlTable parse_toml_string(const std::string& text) {
    std::istringstream is(text);
    return parse_toml(is);
}

inline TomlTable load_toml(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw config_error("cannot open config file: " + path);
    return parse_toml(is);
}

}  // namespace nexlim
