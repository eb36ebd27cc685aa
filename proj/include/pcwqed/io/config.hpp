// config.hpp: flat "dotted.key = value" configuration with a declared schema
//
// Lines: `key = value`, `#` starts a comment. Keys must appear in the schema; values are
// parsed per declared type. Physical quantities carry their unit in the key name.

#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "pcwqed/errors.hpp"

namespace pcwqed::io {

enum class ValueType { real, integer, boolean, text, choice };

struct KeySpec {
    std::string key;
    ValueType type{ValueType::real};
    std::string default_value;
    std::string description;
    std::vector<std::string> choices{};
};

inline std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline double parse_real(std::string_view text, const std::string& where) {
    double v = 0.0;
    const auto t = trim(text);
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
        throw InputError(where + ": '" + std::string(t) + "' is not a number");
    return v;
}

inline std::int64_t parse_integer(std::string_view text, const std::string& where) {
    std::int64_t v = 0;
    const auto t = trim(text);
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
        throw InputError(where + ": '" + std::string(t) + "' is not an integer");
    return v;
}

inline bool parse_bool(std::string_view text, const std::string& where) {
    const auto t = trim(text);
    if (t == "true" || t == "1" || t == "yes") return true;
    if (t == "false" || t == "0" || t == "no") return false;
    throw InputError(where + ": '" + std::string(t) + "' is not a boolean");
}

class Config {
public:
    explicit Config(std::vector<KeySpec> schema) : schema_(std::move(schema)) {
        for (std::size_t i = 0; i < schema_.size(); ++i) index_[schema_[i].key] = i;
    }

    const std::vector<KeySpec>& schema() const noexcept { return schema_; }

    void set(const std::string& key, const std::string& value, const std::string& where = "config") {
        const auto it = index_.find(key);
        if (it == index_.end()) throw InputError(where + ": unknown key '" + key + "'");
        validate(schema_[it->second], value, where);
        values_[key] = value;
    }

    void parse(std::istream& in, const std::string& source) {
        std::string line;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            const std::string where = source + ":" + std::to_string(line_no);
            std::string_view s = line;
            if (const auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
            s = trim(s);
            if (s.empty()) continue;
            const auto eq = s.find('=');
            if (eq == std::string_view::npos) throw InputError(where + ": expected 'key = value'");
            const std::string key(trim(s.substr(0, eq)));
            const std::string value(trim(s.substr(eq + 1)));
            if (key.empty()) throw InputError(where + ": empty key");
            if (values_.count(key) && seen_.count(key)) throw InputError(where + ": duplicate key '" + key + "'");
            set(key, value, where);
            seen_[key] = true;
        }
    }

    void load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw InputError("cannot open config file '" + path + "'");
        parse(in, path);
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string text(const std::string& key) const { return raw(key); }
    double real(const std::string& key) const { return parse_real(raw(key), key); }
    std::int64_t integer(const std::string& key) const { return parse_integer(raw(key), key); }
    bool boolean(const std::string& key) const { return parse_bool(raw(key), key); }

    std::vector<double> reals(const std::string& key) const {
        std::vector<double> out;
        std::stringstream ss(raw(key));
        std::string item;
        while (std::getline(ss, item, ','))
            if (!trim(item).empty()) out.push_back(parse_real(item, key));
        return out;
    }

    std::string print_schema() const {
        std::ostringstream os;
        for (const auto& k : schema_) {
            os << k.key << " = " << k.default_value;
            os << "    # " << type_name(k.type);
            if (!k.choices.empty()) {
                os << " {";
                for (std::size_t i = 0; i < k.choices.size(); ++i) os << (i ? "," : "") << k.choices[i];
                os << "}";
            }
            os << "  " << k.description << "\n";
        }
        return os.str();
    }

private:
    static const char* type_name(ValueType t) {
        switch (t) {
        case ValueType::real: return "real";
        case ValueType::integer: return "integer";
        case ValueType::boolean: return "boolean";
        case ValueType::text: return "text";
        case ValueType::choice: return "choice";
        }
        return "?";
    }

    static void validate(const KeySpec& k, const std::string& value, const std::string& where) {
        const std::string w = where + ": " + k.key;
        switch (k.type) {
        case ValueType::real: {
            // Lists of reals are comma separated.
            std::stringstream ss(value);
            std::string item;
            while (std::getline(ss, item, ',')) parse_real(item, w);
            break;
        }
        case ValueType::integer: parse_integer(value, w); break;
        case ValueType::boolean: parse_bool(value, w); break;
        case ValueType::text: break;
        case ValueType::choice: {
            for (const auto& c : k.choices)
                if (c == value) return;
            throw InputError(w + ": '" + value + "' is not one of the allowed values");
        }
        }
    }

    std::string raw(const std::string& key) const {
        if (const auto it = values_.find(key); it != values_.end()) return it->second;
        const auto it = index_.find(key);
        if (it == index_.end()) throw InputError("config: unknown key '" + key + "'");
        return schema_[it->second].default_value;
    }

    std::vector<KeySpec> schema_;
    std::map<std::string, std::size_t> index_;
    std::map<std::string, std::string> values_;
    std::map<std::string, bool> seen_;
};

} // namespace pcwqed::io
