#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "supertracy/errors.hpp"

namespace supertracy {

// Minimal RFC-4180 style CSV with double-quote escaping. Catalog and corpus
// files are ASCII/UTF-8 and never contain embedded newlines.

inline std::string csv_escape(const std::string& cell) {
    bool needs = cell.find_first_of(",\"\n") != std::string::npos;
    if (!needs) return cell;
    std::string out = "\"";
    for (char c : cell) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out += "\"";
    return out;
}

inline std::string csv_join(const std::vector<std::string>& cells) {
    std::string out;
    for (size_t i = 0; i < cells.size(); ++i) {
        if (i) out.push_back(',');
        out += csv_escape(cells[i]);
    }
    return out;
}

inline std::vector<std::string> csv_parse_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    bool quoted = false;
    for (size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            cells.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    cells.push_back(cur);
    return cells;
}

struct CsvFile {
    std::vector<std::string> headers;
    std::vector<std::vector<std::string>> rows;
};

inline CsvFile read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open CSV file: " + path);
    CsvFile f;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty() && in.peek() == EOF) break;
        auto cells = csv_parse_line(line);
        if (first) {
            f.headers = cells;
            first = false;
        } else {
            f.rows.push_back(cells);
        }
    }
    return f;
}

inline void write_csv(std::ostream& out, const std::vector<std::string>& headers,
                      const std::vector<std::vector<std::string>>& rows) {
    out << csv_join(headers) << "\n";
    for (const auto& r : rows) out << csv_join(r) << "\n";
}

}  // namespace supertracy
