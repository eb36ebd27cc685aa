// csv.hpp: numeric CSV tables: shortest round-trip formatting, LF endings, header row

#pragma once

#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "pcwqed/errors.hpp"
#include "pcwqed/io/config.hpp"

namespace pcwqed::io {

// Locale-independent shortest representation that parses back to the same double.
inline std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc()) throw NumericError("format_number: conversion failed");
    return std::string(buf, ptr);
}

struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;

    std::size_t column(const std::string& name) const {
        for (std::size_t i = 0; i < columns.size(); ++i)
            if (columns[i] == name) return i;
        throw InputError("table has no column '" + name + "'");
    }

    std::vector<double> column_values(const std::string& name) const {
        const auto c = column(name);
        std::vector<double> out;
        out.reserve(rows.size());
        for (const auto& r : rows) out.push_back(r[c]);
        return out;
    }

    void add_row(std::vector<double> r) {
        if (r.size() != columns.size()) throw InputError("table row width does not match header");
        rows.push_back(std::move(r));
    }
};

inline std::string to_csv(const Table& t) {
    std::string out;
    for (std::size_t i = 0; i < t.columns.size(); ++i) out += (i ? "," : "") + t.columns[i];
    out += '\n';
    for (const auto& r : t.rows) {
        for (std::size_t i = 0; i < r.size(); ++i) {
            if (i) out += ',';
            out += format_number(r[i]);
        }
        out += '\n';
    }
    return out;
}

inline void write_csv(const Table& t, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot write '" + path + "'");
    f << to_csv(t);
    if (!f) throw InputError("write failed for '" + path + "'");
}

inline double parse_cell(std::string_view s, const std::string& where) {
    s = trim(s);
    if (s == "nan") return std::nan("");
    if (s == "inf") return HUGE_VAL;
    if (s == "-inf") return -HUGE_VAL;
    return parse_real(s, where);
}

// Header row required; every data row must have the header's width. Errors name the line.
inline Table parse_csv(std::istream& in, const std::string& source) {
    Table t;
    std::string line;
    int line_no = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty() || line[0] == '#') continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (!line.empty() && line.back() == ',') cells.emplace_back();
        const std::string where = source + ":" + std::to_string(line_no);
        if (!header) {
            for (auto& c : cells) {
                const std::string name(trim(c));
                if (name.empty()) throw InputError(where + ": empty column name in header");
                t.columns.push_back(name);
            }
            header = true;
            continue;
        }
        if (cells.size() != t.columns.size())
            throw InputError(where + ": expected " + std::to_string(t.columns.size()) + " fields, found " +
                             std::to_string(cells.size()));
        std::vector<double> row;
        for (std::size_t i = 0; i < cells.size(); ++i) row.push_back(parse_cell(cells[i], where + " column '" + t.columns[i] + "'"));
        t.rows.push_back(std::move(row));
    }
    if (!header) throw InputError(source + ": missing header row");
    return t;
}

inline Table read_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw InputError("cannot open '" + path + "'");
    return parse_csv(f, path);
}

} // namespace pcwqed::io
