#pragma once

#include <Eigen/Dense>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "aggvol/errors.hpp"
#include "aggvol/symmat.hpp"

namespace aggvol {

/// Panel of level observations on a regular grid with spacing delta (years).
/// Dates, when present in a source file, are carried as labels only.
struct PanelSeries {
    double delta = 0.0;
    DenseMatrix values;                      // T x d levels
    std::vector<std::string> column_names;   // size d (may be empty)
    std::vector<std::string> dates;          // size T or empty
    std::optional<int> factor_col;

    int rows() const { return static_cast<int>(values.rows()); }
    int cols() const { return static_cast<int>(values.cols()); }

    void validate() const {
        if (rows() < 2) throw EmptyPanel("panel needs at least 2 observations");
        if (delta <= 0.0) throw Error("sampling interval delta must be positive");
        if (!values.allFinite()) throw Error("panel contains non-finite entries");
        if (factor_col && (*factor_col < 0 || *factor_col >= cols()))
            throw MissingFactorColumn("factor column index out of range");
    }
};

/// Scaled first differences Y_i = (X_{i+1} - X_i) / sqrt(delta), paired with
/// the factor level at the left endpoint of each interval.
struct NormalizedReturns {
    double delta = 0.0;
    DenseMatrix rows;    // (T-1) x d
    Vector factor;       // length T-1

    int count() const { return static_cast<int>(rows.rows()); }
    int dim() const { return static_cast<int>(rows.cols()); }

    SymMatrix outer(int i) const {
        SymMatrix m(dim());
        m.add_outer(rows.row(i).transpose(), 1.0);
        return m;
    }
};

inline NormalizedReturns normalize(const PanelSeries& panel) {
    panel.validate();
    const int t = panel.rows();
    const int d = panel.cols();
    const double scale = 1.0 / std::sqrt(panel.delta);
    NormalizedReturns out;
    out.delta = panel.delta;
    out.rows = (panel.values.bottomRows(t - 1) - panel.values.topRows(t - 1)) * scale;
    const int fc = panel.factor_col.value_or(0);
    out.factor = panel.values.col(fc).head(t - 1);
    return out;
}

struct CsvSchema {
    bool has_date_column = false;
    std::optional<std::string> factor_column;  // resolved by header name
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    fields.push_back(cur);
    return fields;
}

inline double parse_number(const std::string& s, std::size_t line, std::size_t col) {
    const char* begin = s.c_str();
    char* end = nullptr;
    errno = 0;
    double v = std::strtod(begin, &end);
    while (end && *end == ' ') ++end;
    if (end == begin || (end && *end != '\0'))
        throw ParseError(line, col, "non-numeric cell '" + s + "'");
    return v;
}

}  // namespace detail

/// Read a panel from CSV: header row, optional leading ISO-8601 date column,
/// comma-delimited numeric body. delta comes from the caller, never from dates.
inline PanelSeries ingest_csv(const std::string& path, double delta, const CsvSchema& schema) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open '" + path + "'");

    std::string line;
    if (!std::getline(in, line)) throw ParseError(1, 1, "missing header row");
    std::vector<std::string> header = detail::split_csv_line(line);
    const std::size_t first_value_col = schema.has_date_column ? 1 : 0;
    if (header.size() <= first_value_col) throw ParseError(1, 1, "header has no value columns");

    PanelSeries panel;
    panel.delta = delta;
    panel.column_names.assign(header.begin() + first_value_col, header.end());

    std::vector<std::vector<double>> body;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> fields = detail::split_csv_line(line);
        if (fields.size() != header.size())
            throw ParseError(line_no, fields.size(),
                             "expected " + std::to_string(header.size()) + " fields, got " +
                                 std::to_string(fields.size()));
        if (schema.has_date_column) {
            if (!panel.dates.empty() && fields[0] <= panel.dates.back())
                throw NonMonotoneDates("date '" + fields[0] + "' at line " +
                                       std::to_string(line_no) + " does not increase");
            panel.dates.push_back(fields[0]);
        }
        std::vector<double> row(header.size() - first_value_col);
        for (std::size_t c = first_value_col; c < fields.size(); ++c)
            row[c - first_value_col] = detail::parse_number(fields[c], line_no, c + 1);
        body.push_back(std::move(row));
    }

    panel.values.resize(static_cast<Eigen::Index>(body.size()),
                        static_cast<Eigen::Index>(header.size() - first_value_col));
    for (std::size_t r = 0; r < body.size(); ++r)
        for (std::size_t c = 0; c < body[r].size(); ++c)
            panel.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = body[r][c];

    if (schema.factor_column) {
        bool found = false;
        for (std::size_t c = 0; c < panel.column_names.size(); ++c) {
            if (panel.column_names[c] == *schema.factor_column) {
                panel.factor_col = static_cast<int>(c);
                found = true;
                break;
            }
        }
        if (!found) throw MissingFactorColumn("no column named '" + *schema.factor_column + "'");
    }

    panel.validate();
    return panel;
}

/// Full-precision formatting so a write/read round trip is bit exact.
inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline void write_panel_csv(const std::string& path, const PanelSeries& panel) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write '" + path + "'");
    for (int c = 0; c < panel.cols(); ++c) {
        if (c) out << ',';
        out << (c < static_cast<int>(panel.column_names.size()) ? panel.column_names[c]
                                                                : "col" + std::to_string(c));
    }
    out << '\n';
    for (int r = 0; r < panel.rows(); ++r) {
        for (int c = 0; c < panel.cols(); ++c) {
            if (c) out << ',';
            out << format_double(panel.values(r, c));
        }
        out << '\n';
    }
}

}  // namespace aggvol
